//! Maps from unconstrained network outputs into the feasible set: spacing
//! variables and PA positions, unit-modulus RIS coefficients, and transmit
//! powers within the budget.

pub mod batch;

use num_complex::Complex64 as C64;

use crate::autodiff::sigmoid;
use crate::channel::PaPlacement;
use crate::objective::RisConfig;
use crate::scenario::SystemParams;

/// Non-negative gaps between adjacent PAs, one row per waveguide. The first
/// entry of a row is the distance of the first PA from the feed point.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacingVars {
    delta: Vec<Vec<f64>>,
}

impl SpacingVars {
    pub fn new(delta: Vec<Vec<f64>>) -> Self {
        Self { delta }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.delta
    }

    /// `δ ≥ 0` and every row sums to at most `δ_max` (with `tol` slack).
    pub fn is_valid(&self, params: &SystemParams, tol: f64) -> bool {
        let dmax = params.max_total_spacing();
        self.delta
            .iter()
            .all(|row| row.iter().all(|&d| d >= -tol) && row.iter().sum::<f64>() <= dmax + tol)
    }
}

/// Rescales `values` to sum to `cap` when their sum exceeds it; otherwise
/// returns them untouched.
fn cap_sum(values: &mut [f64], cap: f64) {
    let s: f64 = values.iter().sum();
    if s > cap {
        let f = cap / s;
        values.iter_mut().for_each(|v| *v *= f);
    }
}

/// `δ = δ_max·σ(raw)`, then each row rescaled onto the budget `δ_max` if it
/// overshoots.
pub fn raw_to_spacing(raw: &[Vec<f64>], params: &SystemParams) -> SpacingVars {
    let dmax = params.max_total_spacing();
    SpacingVars {
        delta: raw
            .iter()
            .map(|row| {
                let mut d: Vec<f64> = row.iter().map(|&r| dmax * sigmoid(r)).collect();
                cap_sum(&mut d, dmax);
                d
            })
            .collect(),
    }
}

/// `x_{n,m} = Σ_{i≤m} δ_{n,i} + (m−1)·Δ_min`
pub fn spacing_to_positions(sv: &SpacingVars, params: &SystemParams) -> PaPlacement {
    PaPlacement::new(
        sv.delta
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .enumerate()
                    .map(|(m, &d)| {
                        acc += d;
                        acc + m as f64 * params.min_spacing
                    })
                    .collect()
            })
            .collect(),
    )
}

/// Inverse of [`spacing_to_positions`].
pub fn positions_to_spacing(placement: &PaPlacement, params: &SystemParams) -> SpacingVars {
    SpacingVars {
        delta: placement
            .rows()
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(m, &x)| if m == 0 { x } else { x - row[m - 1] - params.min_spacing })
                    .collect()
            })
            .collect(),
    }
}

/// `z/|z|`, with `0 ↦ 1`.
pub fn unit_phase(z: C64) -> C64 {
    let r = z.norm();
    if r > 0.0 {
        z / r
    } else {
        C64::new(1.0, 0.0)
    }
}

pub fn normalize_phase(raw: &[C64]) -> RisConfig {
    RisConfig::from_coefficients(&raw.iter().map(|&z| unit_phase(z)).collect::<Vec<_>>())
}

/// `P_max·σ(raw)` per user.
pub fn raw_power(raw: &[f64], params: &SystemParams) -> Vec<f64> {
    raw.iter().map(|&r| params.power_budget * sigmoid(r)).collect()
}

/// Leaves the powers alone when they fit the budget, otherwise scales them
/// to sum to `P_max`.
pub fn normalize_power(p_tilde: &[f64], params: &SystemParams) -> Vec<f64> {
    let mut p = p_tilde.to_vec();
    cap_sum(&mut p, params.power_budget);
    p
}
