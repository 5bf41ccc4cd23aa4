//! Feasibility heads on the autodiff tape. The conditional rescales pick
//! their branch from the forward values and differentiate through it.

use crate::autodiff::Var;
use crate::scenario::SystemParams;

/// Scales each slice along the last axis down to `cap` when its sum exceeds
/// it. `v` must be non-negative.
fn cap_last_axis<'t>(v: Var<'t>, cap: f64) -> Var<'t> {
    let tape = v.tape();
    let shape = v.shape();
    let axis = shape.len() - 1;
    let s = v.sum(axis, true);
    let mut sshape = shape.clone();
    sshape[axis] = 1;
    let active: Vec<f64> = s.value().iter().map(|z| if z.re > cap { 1.0 } else { 0.0 }).collect();
    let idle: Vec<f64> = active.iter().map(|a| 1.0 - a).collect();
    let active = tape.constant_real(&sshape, &active);
    let idle = tape.constant_real(&sshape, &idle);
    // Idle rows divide by one so a zero sum cannot overflow.
    let denom = s.mul(active).add(idle);
    let factor = denom.recip().scale_re(cap).mul(active).add(idle);
    v.mul(factor)
}

/// `[.., N, M]` raw values to spacing variables.
pub fn raw_to_spacing<'t>(raw: Var<'t>, params: &SystemParams) -> Var<'t> {
    let dmax = params.max_total_spacing();
    cap_last_axis(raw.sigmoid().scale_re(dmax), dmax)
}

/// Cumulative sum along the last axis plus `(m−1)·Δ_min`.
pub fn spacing_to_positions<'t>(delta: Var<'t>, params: &SystemParams) -> Var<'t> {
    let tape = delta.tape();
    let m = *delta.shape().last().unwrap();
    let tri: Vec<f64> = (0..m * m).map(|i| if i / m <= i % m { 1.0 } else { 0.0 }).collect();
    let offsets: Vec<f64> = (0..m).map(|i| i as f64 * params.min_spacing).collect();
    delta.matmul(tape.constant_real(&[m, m], &tri)).add(tape.constant_real(&[m], &offsets))
}

pub fn raw_power<'t>(raw: Var<'t>, params: &SystemParams) -> Var<'t> {
    raw.sigmoid().scale_re(params.power_budget)
}

/// `[B, K]` powers capped at `P_max` per sample.
pub fn normalize_power<'t>(p_tilde: Var<'t>, params: &SystemParams) -> Var<'t> {
    cap_last_axis(p_tilde, params.power_budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::feasible;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batched_heads_match_plain() {
        let p = SystemParams::desk_default().with_dims(3, 4, 0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let raw: Vec<f64> = (0..2 * 12).map(|_| rng.random_range(-4.0..4.0)).collect();
        let tape = Tape::new();
        let r = tape.constant_real(&[2, 3, 4], &raw);
        let x = spacing_to_positions(raw_to_spacing(r, &p), &p);
        for b in 0..2 {
            let rows: Vec<Vec<f64>> = raw[b * 12..(b + 1) * 12].chunks(4).map(|c| c.to_vec()).collect();
            let want = feasible::spacing_to_positions(&feasible::raw_to_spacing(&rows, &p), &p).flat();
            for (i, w) in want.iter().enumerate() {
                assert!((x.value()[b * 12 + i].re - w).abs() < 1e-12);
            }
        }
        let praw = [0.3, -2.0, 4.0, -9.0, -8.0, -7.0];
        let pw = normalize_power(raw_power(tape.constant_real(&[2, 3], &praw), &p), &p);
        for b in 0..2 {
            let want = feasible::normalize_power(&feasible::raw_power(&praw[b * 3..b * 3 + 3], &p), &p);
            for (i, w) in want.iter().enumerate() {
                assert!((pw.value()[b * 3 + i].re - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rescale_gradient_follows_the_active_branch() {
        // Away from the boundary, finite differences agree with autodiff on
        // both branches.
        let p = SystemParams::desk_default();
        for base in [[-3.0, -2.5], [3.0, 2.0]] {
            let f = |v: [f64; 2]| {
                let tape = Tape::new();
                let r = tape.var_real(&[1, 1, 2], &v);
                let x = spacing_to_positions(raw_to_spacing(r, &p), &p);
                let w = tape.constant_real(&[2], &[0.7, 1.3]);
                let loss = x.mul(w).sum_all();
                (loss.scalar(), tape.backward(loss).unwrap().wrt_parts(r).0)
            };
            let (_, g) = f(base);
            for i in 0..2 {
                let h = 1e-6;
                let mut a = base;
                let mut b = base;
                a[i] += h;
                b[i] -= h;
                let fd = (f(a).0 - f(b).0) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * fd.abs().max(1.0), "{fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn saturated_inputs_stay_finite() {
        let p = SystemParams::desk_default();
        let tape = Tape::new();
        let r = tape.var_real(&[1, 2, 2], &[-1e5, -7e4, 1e5, 1e5]);
        let x = spacing_to_positions(raw_to_spacing(r, &p), &p);
        assert!(x.value().iter().all(|z| z.re.is_finite()));
        assert_eq!(x.value()[0].re, 0.0);
        let pw = normalize_power(raw_power(tape.constant_real(&[1, 2], &[-1e5, -1e5]), &p), &p);
        assert!(pw.value().iter().all(|z| z.re == 0.0));
        let g = tape.backward(x.sum_all()).unwrap();
        assert!(g.wrt_parts(r).0.iter().all(|v| v.is_finite()));
    }
}
