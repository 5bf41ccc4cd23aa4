//! Reverse-mode gradient of a small complex expression, checked against
//! central differences on the real and imaginary parts.

use num_complex::Complex64 as C64;
use ris_pass::autodiff::Tape;

fn loss(z: &[C64]) -> (f64, Vec<C64>) {
    let tape = Tape::new();
    let v = tape.var(&[2], z.to_vec());
    let a = tape.constant(&[2], vec![C64::new(0.3, -1.2), C64::new(2.0, 0.5)]);
    // log(1 + |a ⊙ z|²) summed, with a phase rotation in the middle.
    let rotated = v.mul(a).mul(v.re().exp_j());
    let out = rotated.abs2().shift_re(1.0).log().sum_all();
    let g = tape.backward(out).unwrap();
    (out.scalar(), g.wrt(v).unwrap().to_vec())
}

fn main() {
    let z = [C64::new(0.7, -0.1), C64::new(-0.4, 1.3)];
    let (value, grad) = loss(&z);
    println!("L = {value:.6}");
    let h = 1e-6;
    for i in 0..z.len() {
        let fd = |d: C64| {
            let (mut up, mut down) = (z, z);
            up[i] += d;
            down[i] -= d;
            (loss(&up).0 - loss(&down).0) / (2.0 * h)
        };
        let numeric = C64::new(fd(C64::new(h, 0.0)), fd(C64::new(0.0, h)));
        println!("∂L/∂z{i}: autodiff {:.8}  finite differences {:.8}", grad[i], numeric);
    }
}
