//! Sum rate, power and losses for batched tensors on an autodiff tape.

use std::f64::consts::LN_2;

use crate::autodiff::{Tape, Var};
use crate::objective::{Objective, SR_FLOOR};

fn identity_mask<'t>(tape: &'t Tape, k: usize, diagonal: bool) -> Var<'t> {
    let v: Vec<f64> = (0..k * k).map(|i| if (i / k == i % k) == diagonal { 1.0 } else { 0.0 }).collect();
    tape.constant_real(&[k, k], &v)
}

/// Per-user rates `[B, K]` for channels `z: [B, K, N]` and beams `w: [B, N, K]`.
pub fn rates<'t>(z: Var<'t>, w: Var<'t>, noise: f64) -> Var<'t> {
    let tape = z.tape();
    let k = z.shape()[1];
    let p = z.matmul(w).abs2();
    let signal = p.mul(identity_mask(tape, k, true)).sum(2, false);
    let interference = p.mul(identity_mask(tape, k, false)).sum(2, false).shift_re(noise);
    signal.add(interference).log().sub(interference.log()).scale_re(1.0 / LN_2)
}

/// Sum rate per sample, `[B]`.
pub fn sum_rate<'t>(z: Var<'t>, w: Var<'t>, noise: f64) -> Var<'t> {
    rates(z, w, noise).sum(1, false)
}

/// `Σ_k ‖w_k‖²` per sample, `[B]`.
pub fn power<'t>(w: Var<'t>) -> Var<'t> {
    w.abs2().sum(2, false).sum(1, false)
}

pub fn loss_sr<'t>(sr: Var<'t>) -> Var<'t> {
    sr.clamp_min(SR_FLOOR).recip().mean_all()
}

pub fn loss_ee<'t>(sr: Var<'t>, power: Var<'t>, circuit_power: f64) -> Var<'t> {
    power.shift_re(circuit_power).div(sr.clamp_min(SR_FLOOR)).mean_all()
}

pub fn loss<'t>(objective: Objective, sr: Var<'t>, power: Var<'t>, circuit_power: f64) -> Var<'t> {
    match objective {
        Objective::SumRate => loss_sr(sr),
        Objective::EnergyEfficiency => loss_ee(sr, power, circuit_power),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMat;
    use crate::objective::{loss_ee as plain_ee, loss_sr as plain_sr, sum_rate_from_channels};
    use num_complex::Complex64 as C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batched_rates_match_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (b, k, n) = (4, 3, 4);
        let mut r = |s: f64| C64::new(rng.random_range(-s..s), rng.random_range(-s..s));
        let zv: Vec<C64> = (0..b * k * n).map(|_| r(1e-3)).collect();
        let wv: Vec<C64> = (0..b * n * k).map(|_| r(1.0)).collect();
        let tape = Tape::new();
        let z = tape.constant(&[b, k, n], zv.clone());
        let w = tape.constant(&[b, n, k], wv.clone());
        let sr = sum_rate(z, w, 1e-9);
        let pw = power(w);
        let mut pairs = Vec::new();
        for bi in 0..b {
            let zm = CMat::from_row_slice(k, n, &zv[bi * k * n..(bi + 1) * k * n]);
            let wm = CMat::from_row_slice(n, k, &wv[bi * n * k..(bi + 1) * n * k]);
            let want = sum_rate_from_channels(&zm, &wm, 1e-9);
            let got = sr.value()[bi].re;
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
            let p: f64 = wm.iter().map(|z| z.norm_sqr()).sum();
            assert!((pw.value()[bi].re - p).abs() < 1e-12);
            pairs.push((want, p));
        }
        let srs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        assert!((loss_sr(sr).scalar() - plain_sr(&srs)).abs() < 1e-14);
        assert!((loss_ee(sr, pw, 5.0).scalar() - plain_ee(&pairs, 5.0)).abs() < 1e-12);
    }
}
