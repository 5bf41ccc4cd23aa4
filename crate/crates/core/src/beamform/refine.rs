//! Monotone first-order beam refinement at fixed channels.
//!
//! Sum rate is maximized by projected gradient ascent over `W` with a
//! backtracking line search; energy efficiency wraps the same ascent in a
//! Dinkelbach loop on `SR − λ·(‖W‖² + P_C)`.

use std::f64::consts::LN_2;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::objective::{ee_from_parts, Beamformer, Objective, POWER_TOL};
use crate::scenario::SystemParams;

pub const ARMIJO_C: f64 = 1e-4;
pub const DINKELBACH_TOL: f64 = 1e-6;
const MIN_STEP: f64 = 1e-40;
const STALL_TOL: f64 = 1e-13;
const INNER_MAX: usize = 50;

#[derive(Debug, Clone)]
pub struct RefineResult {
    pub beam: Beamformer,
    /// Objective of `beam`.
    pub value: f64,
    /// Accepted ascent steps.
    pub iterations: usize,
    /// False when the budget ran out first.
    pub converged: bool,
}

/// Sum rate and its gradient `∂/∂Re W + j ∂/∂Im W`.
///
/// Column `j` of the gradient is
/// `(2/ln2) Σ_k (1/T_k − [k≠j]/I_k) ĥ_k (ĥ_k^H w_j)`, where `T_k` is the total
/// received power plus noise and `I_k` the interference plus noise.
fn sr_and_grad(z: &CMat, w: &CMat, noise: f64) -> (f64, CMat) {
    let s = z * w;
    let k = s.nrows();
    let mut sr = 0.0;
    let mut coef = CMat::zeros(k, s.ncols());
    for i in 0..k {
        let total: f64 = s.row(i).iter().map(|v| v.norm_sqr()).sum::<f64>() + noise;
        let interf = total - s[(i, i)].norm_sqr();
        sr += (total.ln() - interf.ln()) / LN_2;
        for j in 0..s.ncols() {
            let c = 1.0 / total - if i == j { 0.0 } else { 1.0 / interf };
            coef[(i, j)] = s[(i, j)] * c;
        }
    }
    (sr, z.adjoint() * coef * C64::new(2.0 / LN_2, 0.0))
}

fn power(w: &CMat) -> f64 {
    w.iter().map(|z| z.norm_sqr()).sum()
}

fn project(mut w: CMat, p_max: f64) -> CMat {
    let p = power(&w);
    if p > p_max {
        w *= C64::new((p_max / p).sqrt(), 0.0);
    }
    w
}

fn inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

struct Ascent<'a> {
    z: &'a CMat,
    noise: f64,
    p_max: f64,
    /// Price on transmit power; zero for plain sum rate.
    price: f64,
}

impl Ascent<'_> {
    fn eval(&self, w: &CMat) -> (f64, CMat) {
        let (sr, mut g) = sr_and_grad(self.z, w, self.noise);
        if self.price != 0.0 {
            g -= w * C64::new(2.0 * self.price, 0.0);
        }
        (sr - self.price * power(w), g)
    }

    /// One Armijo-backtracked projected step. `None` when no step size
    /// yields sufficient ascent.
    fn step(&self, w: &CMat, f: f64, g: &CMat) -> Option<(CMat, f64)> {
        let mut t = 1.0;
        while t > MIN_STEP {
            let cand = project(w + g * C64::new(t, 0.0), self.p_max);
            let d = &cand - w;
            let dir = inner(g, &d);
            if dir <= 0.0 {
                return None;
            }
            let (fc, _) = self.eval(&cand);
            if fc >= f + ARMIJO_C * dir {
                return Some((cand, fc));
            }
            t *= 0.5;
        }
        None
    }

    /// Runs up to `budget` steps from `w`. Returns the final iterate, steps
    /// taken and whether it stalled before the budget ran out.
    fn run(&self, mut w: CMat, budget: usize) -> (CMat, usize, bool) {
        let (mut f, mut g) = self.eval(&w);
        for it in 0..budget {
            match self.step(&w, f, &g) {
                None => return (w, it, true),
                Some((next, fn_)) => {
                    let gain = fn_ - f;
                    w = next;
                    f = fn_;
                    if gain <= STALL_TOL * f.abs().max(1e-300) {
                        return (w, it + 1, true);
                    }
                    g = self.eval(&w).1;
                }
            }
        }
        (w, budget, false)
    }
}

/// Improves `init` for the objective at fixed effective channels `z`
/// (`K × N`). Never returns anything worse than `init`.
pub fn refine_beams(
    z: &CMat,
    params: &SystemParams,
    objective: Objective,
    init: &Beamformer,
    budget: usize,
) -> Result<RefineResult> {
    if init.w.nrows() != z.ncols() || init.w.ncols() != z.nrows() {
        return Err(Error::Dimension(format!(
            "beams are {}×{}, channels {}×{}",
            init.w.nrows(),
            init.w.ncols(),
            z.nrows(),
            z.ncols()
        )));
    }
    if init.power() > params.power_budget + POWER_TOL {
        return Err(Error::Infeasible("initial beams exceed the power budget".into()));
    }
    let noise = params.noise_power;
    let p_c = params.circuit_power;
    let value_of = |w: &CMat| {
        let sr = crate::objective::sum_rate_from_channels(z, w, noise);
        objective.value(sr, power(w), p_c)
    };
    let init_value = value_of(&init.w);
    let mut ascent = Ascent { z, noise, p_max: params.power_budget, price: 0.0 };

    let (w, iterations, converged) = match objective {
        Objective::SumRate => ascent.run(init.w.clone(), budget),
        Objective::EnergyEfficiency => {
            let mut w = init.w.clone();
            let mut used = 0;
            let mut converged = false;
            ascent.price = init_value;
            while used < budget {
                let (next, steps, _) = ascent.run(w, INNER_MAX.min(budget - used));
                used += steps;
                w = next;
                let sr = crate::objective::sum_rate_from_channels(z, &w, noise);
                let denom = power(&w) + p_c;
                if (sr - ascent.price * denom).abs() < DINKELBACH_TOL {
                    converged = true;
                    break;
                }
                ascent.price = ee_from_parts(sr, power(&w), p_c);
                if steps == 0 {
                    converged = true;
                    break;
                }
            }
            (w, used, converged || budget == 0)
        }
    };
    let value = value_of(&w);
    if value >= init_value {
        Ok(RefineResult { beam: Beamformer::new(w), value, iterations, converged })
    } else {
        Ok(RefineResult { beam: init.clone(), value: init_value, iterations, converged })
    }
}

/// Dinkelbach price update `SR / (power + P_C)`.
pub fn dinkelbach_price(sr: f64, power_plus_circuit: f64) -> f64 {
    sr / power_plus_circuit
}
