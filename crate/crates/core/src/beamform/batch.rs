//! Hybrid and regularized ZF beams on the autodiff tape, batched over
//! `[B, K, N]` channels.

use num_complex::Complex64 as C64;

use crate::autodiff::{Tape, Var};
use crate::beamform::{gram_jitter, JITTER_THRESHOLD};
use crate::linalg::CMat;
use crate::scenario::SystemParams;

/// `[B, K, K]` diagonal loads for the Gram matrices of `z`, plus a flag per
/// sample telling whether any load was needed.
fn gram_loads(z: &[C64], b: usize, k: usize, n: usize) -> (Vec<C64>, Vec<bool>) {
    let mut loads = vec![C64::new(0.0, 0.0); b * k * k];
    let mut flags = vec![false; b];
    for bi in 0..b {
        let zb = CMat::from_row_slice(k, n, &z[bi * k * n..(bi + 1) * k * n]);
        let gram = &zb * zb.adjoint();
        let (load, cond) = gram_jitter(&gram);
        if cond > JITTER_THRESHOLD {
            flags[bi] = true;
            for i in 0..k {
                loads[bi * k * k + i * k + i] = C64::new(load, 0.0);
            }
        }
    }
    (loads, flags)
}

/// Column-normalizes a `[B, N, K]` variable.
fn unit_columns(v: Var<'_>) -> Var<'_> {
    let norm = v.norm(1, true).clamp_min(f64::MIN_POSITIVE);
    v.div(norm)
}

/// Beams `[B, N, K]` from channels `z: [B, K, N]`, mixing coefficients
/// `alpha: [B, K]` in `[0, 1]` and powers `p: [B, K]`. Also reports which
/// samples needed a diagonal load on `Z Z^H`.
pub fn hzm<'t>(tape: &'t Tape, z: Var<'t>, alpha: Var<'t>, p: Var<'t>) -> (Var<'t>, Vec<bool>) {
    let shape = z.shape();
    let (b, k, n) = (shape[0], shape[1], shape[2]);
    let (loads, flags) = gram_loads(&z.value(), b, k, n);
    let zh = z.h();
    let gram = z.matmul(zh).add(tape.constant(&[b, k, k], loads));
    let zf = unit_columns(zh.matmul(gram.inverse()));
    let mrt = unit_columns(zh);
    let a = alpha.reshape(&[b, 1, k]);
    let combo = zf.mul(a).add(mrt.mul(a.neg().shift_re(1.0)));

    // Columns where ZF and MRT cancel fall back to MRT.
    let norms = combo.norm(1, true).value();
    let fallback: Vec<f64> = norms.iter().map(|v| if v.re < 1e-12 { 1.0 } else { 0.0 }).collect();
    let keep: Vec<f64> = fallback.iter().map(|f| 1.0 - f).collect();
    let dir = unit_columns(combo)
        .mul(tape.constant_real(&[b, 1, k], &keep))
        .add(mrt.mul(tape.constant_real(&[b, 1, k], &fallback)));
    (dir.mul(p.sqrt().reshape(&[b, 1, k])), flags)
}

/// RZF beams `[B, N, K]` with uniform power and regularization
/// `P_max/K` per user.
pub fn rzf_uniform<'t>(tape: &'t Tape, z: Var<'t>, params: &SystemParams) -> Var<'t> {
    let shape = z.shape();
    let k = shape[1];
    let share = params.power_budget / k as f64;
    let zh = z.h();
    let eye: Vec<f64> = (0..k * k).map(|i| if i / k == i % k { 1.0 } else { 0.0 }).collect();
    let a = z.matmul(zh).scale_re(share / params.noise_power).add(tape.constant_real(&[k, k], &eye));
    unit_columns(zh.matmul(a.inverse())).scale_re(share.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamform::{assemble_hzm, rzf_default, HzmParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<C64> {
        (0..len).map(|_| C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))).collect()
    }

    #[test]
    fn batched_beams_match_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = SystemParams::desk_default().with_dims(3, 2, 0, 2);
        let (b, k, n) = (3, 2, 3);
        let zs = random(&mut rng, b * k * n, 1e-3);
        let alpha: Vec<f64> = (0..b * k).map(|_| rng.random_range(0.0..1.0)).collect();
        let pw: Vec<f64> = (0..b * k).map(|_| rng.random_range(0.0..5.0)).collect();
        let tape = Tape::new();
        let z = tape.constant(&[b, k, n], zs.clone());
        let (w, flags) = hzm(&tape, z, tape.constant_real(&[b, k], &alpha), tape.constant_real(&[b, k], &pw));
        let wr = rzf_uniform(&tape, z, &p);
        assert!(flags.iter().all(|f| !f));
        for bi in 0..b {
            let zb = CMat::from_row_slice(k, n, &zs[bi * k * n..(bi + 1) * k * n]);
            let want = assemble_hzm(
                &HzmParams { alpha: alpha[bi * k..(bi + 1) * k].to_vec(), power: pw[bi * k..(bi + 1) * k].to_vec() },
                &zb,
            )
            .unwrap();
            let want_r = rzf_default(&zb, &p).unwrap();
            for r in 0..n {
                for c in 0..k {
                    let got = w.value()[bi * n * k + r * k + c];
                    assert!((got - want.w[(r, c)]).norm() < 1e-10);
                    let got = wr.value()[bi * n * k + r * k + c];
                    assert!((got - want_r.w[(r, c)]).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn power_gradient_is_finite_at_zero_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tape = Tape::new();
        let z = tape.constant(&[1, 2, 2], random(&mut rng, 4, 1e-3));
        let pw = tape.var_real(&[1, 2], &[0.0, 1.0]);
        let (w, _) = hzm(&tape, z, tape.constant_real(&[1, 2], &[0.5, 0.5]), pw);
        let loss = w.abs2().sum_all();
        let g = tape.backward(loss).unwrap().wrt_parts(pw).0;
        assert!(g.iter().all(|v| v.is_finite()));
    }
}
