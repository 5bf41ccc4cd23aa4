//! Channel model: pinching phases, PA–user, PA–RIS and RIS–user links, and
//! the end-to-end effective channel seen by each user.
//!
//! This module evaluates everything on plain values. [`batch`] builds the same
//! quantities on an autodiff tape so that gradients reach the PA positions.
//!
//! PA `(n, m)` sits at `(x[n][m], y_n, H)` and is fed from `(0, y_n, H)`.
//! Vectors over all PAs are indexed `n * M + m`.

pub mod batch;

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};
use crate::objective::RisConfig;
use crate::scenario::{waveguide_ys, Scenario, SystemParams};

/// Slack allowed when checking placement constraints on computed positions.
pub const PLACEMENT_TOL: f64 = 1e-9;

/// x-coordinates of every PA, one row per waveguide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaPlacement {
    x: Vec<Vec<f64>>,
}

impl PaPlacement {
    pub fn new(x: Vec<Vec<f64>>) -> Self {
        Self { x }
    }

    pub fn from_flat(n: usize, m: usize, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), n * m, "placement needs N·M entries");
        Self { x: flat.chunks(m.max(1)).take(n).map(|c| c.to_vec()).collect() }
    }

    pub fn n_waveguides(&self) -> usize {
        self.x.len()
    }

    pub fn n_pas(&self) -> usize {
        self.x.first().map_or(0, |r| r.len())
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.x[n]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn flat(&self) -> Vec<f64> {
        self.x.iter().flatten().copied().collect()
    }

    /// Checks shape, `0 ≤ x ≤ D` and the minimum adjacent spacing.
    pub fn check_feasible(&self, params: &SystemParams) -> Result<()> {
        let (n, m) = (params.n_waveguides, params.n_pas_per_wg);
        if self.x.len() != n || self.x.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension(format!("placement must be {n} × {m}")));
        }
        for (wi, row) in self.x.iter().enumerate() {
            for (mi, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < -PLACEMENT_TOL || v > params.region_length + PLACEMENT_TOL {
                    return Err(Error::Infeasible(format!("PA ({wi},{mi}) at x = {v} outside [0, D]")));
                }
                if mi > 0 && v - row[mi - 1] < params.min_spacing - PLACEMENT_TOL {
                    return Err(Error::Infeasible(format!(
                        "PAs ({wi},{}) and ({wi},{mi}) are {} m apart",
                        mi - 1,
                        v - row[mi - 1]
                    )));
                }
            }
        }
        Ok(())
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Phase each PA on one waveguide applies to the feed signal:
/// `exp(−j·2π/λ_g·x)`.
pub fn pinching_vector(x_row: &[f64], params: &SystemParams) -> Vec<C64> {
    let k = 2.0 * PI / params.guided_wavelength;
    x_row.iter().map(|&x| C64::from_polar(1.0, -k * x)).collect()
}

/// Block-diagonal `(M·N) × N` pinching matrix.
pub fn assemble_g(placement: &PaPlacement, params: &SystemParams) -> CMat {
    let (n, m) = (placement.n_waveguides(), placement.n_pas());
    let mut g = CMat::zeros(n * m, n);
    for wi in 0..n {
        for (mi, v) in pinching_vector(placement.row(wi), params).into_iter().enumerate() {
            g[(wi * m + mi, wi)] = v;
        }
    }
    g
}

/// `√η·exp(−j·2π/λ·d)/d` for every PA.
pub fn pa_user_channel(placement: &PaPlacement, user: [f64; 3], params: &SystemParams) -> Result<CVec> {
    let eta_sqrt = params.derived().eta.sqrt();
    let k0 = 2.0 * PI / params.wavelength;
    let ys = waveguide_ys(params);
    let mut out = Vec::with_capacity(placement.n_waveguides() * placement.n_pas());
    for (wi, row) in placement.rows().iter().enumerate() {
        for &x in row {
            let d = dist(user, [x, ys[wi], params.height]);
            if d == 0.0 {
                return Err(Error::ZeroDistance("user and PA"));
            }
            out.push(C64::from_polar(eta_sqrt / d, -k0 * d));
        }
    }
    Ok(CVec::from_vec(out))
}

/// ULA response `exp(−j·2π/λ·(l−1)·Δ·φ)`, `l = 1..L`.
pub fn steering_vector(cos_aod: f64, params: &SystemParams) -> CVec {
    let step = -2.0 * PI / params.wavelength * params.element_sep * cos_aod;
    CVec::from_fn(params.n_ris, |l, _| C64::from_polar(1.0, step * l as f64))
}

/// Departure cosine along the array axis (x) and the link length.
pub fn aod_cosine(from: [f64; 3], to: [f64; 3]) -> Result<(f64, f64)> {
    let d = dist(from, to);
    if d == 0.0 {
        return Err(Error::ZeroDistance("link endpoints"));
    }
    Ok(((to[0] - from[0]) / d, d))
}

/// Rician link with power-law path loss: `√(β0/d^α)·(w_los·a(φ) + w_nlos·nlos)`.
fn rician_link(cos_aod: f64, d: f64, nlos: &[C64], params: &SystemParams) -> CVec {
    let dv = params.derived();
    let amp = (dv.beta0 / d.powf(params.fading_exponent)).sqrt();
    let los = steering_vector(cos_aod, params);
    CVec::from_fn(params.n_ris, |l, _| amp * (dv.los_weight * los[l] + dv.nlos_weight * nlos[l]))
}

/// `L × (M·N)` PA–RIS matrix, one column per PA.
pub fn pa_ris_channel(placement: &PaPlacement, scenario: &Scenario, params: &SystemParams) -> Result<CMat> {
    let (n, m) = (placement.n_waveguides(), placement.n_pas());
    let ys = waveguide_ys(params);
    let mut h = CMat::zeros(params.n_ris, n * m);
    for wi in 0..n {
        for (mi, &x) in placement.row(wi).iter().enumerate() {
            let (cos, d) = aod_cosine([x, ys[wi], params.height], params.ris_position)
                .map_err(|_| Error::ZeroDistance("PA and RIS"))?;
            let col = rician_link(cos, d, &scenario.nlos_pa_ris[wi * m + mi], params);
            h.set_column(wi * m + mi, &col);
        }
    }
    Ok(h)
}

/// RIS–user vectors `h_k`; they do not depend on the PA placement.
pub fn ris_user_channel(scenario: &Scenario, params: &SystemParams) -> Result<Vec<CVec>> {
    scenario
        .user_positions
        .iter()
        .zip(&scenario.nlos_ris_user)
        .map(|(&u, nlos)| {
            let (cos, d) = aod_cosine(params.ris_position, u).map_err(|_| Error::ZeroDistance("RIS and user"))?;
            Ok(rician_link(cos, d, nlos, params))
        })
        .collect()
}

/// Every link for one placement.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub g: CMat,
    pub f: Vec<CVec>,
    pub h_ris: CMat,
    pub h_user: Vec<CVec>,
}

impl ChannelSet {
    pub fn new(placement: &PaPlacement, scenario: &Scenario, params: &SystemParams) -> Result<Self> {
        placement.check_feasible(params)?;
        scenario.validate(params)?;
        let f = scenario
            .user_positions
            .iter()
            .map(|&u| pa_user_channel(placement, u, params))
            .collect::<Result<Vec<_>>>()?;
        let (h_ris, h_user) = if params.n_ris == 0 {
            (CMat::zeros(0, placement.n_waveguides() * placement.n_pas()), vec![CVec::zeros(0); f.len()])
        } else {
            (pa_ris_channel(placement, scenario, params)?, ris_user_channel(scenario, params)?)
        };
        Ok(Self { g: assemble_g(placement, params), f, h_ris, h_user })
    }

    /// `K × N` matrix whose row k is `(f_k^H + h_k^H Φ H) G` for RIS
    /// coefficients `e^{jφ_l}`.
    pub fn effective(&self, coeffs: &[C64]) -> Result<CMat> {
        let l = self.h_ris.nrows();
        if coeffs.len() != l {
            return Err(Error::Dimension(format!("{} RIS coefficients for L = {l}", coeffs.len())));
        }
        let k = self.f.len();
        let n = self.g.ncols();
        let mut z = CMat::zeros(k, n);
        for (ki, (f, h)) in self.f.iter().zip(&self.h_user).enumerate() {
            let mut row = f.adjoint();
            if l > 0 {
                let c = CVec::from_fn(l, |i, _| h[i].conj() * coeffs[i]).transpose();
                row += c * &self.h_ris;
            }
            z.set_row(ki, &(row * &self.g));
        }
        Ok(z)
    }
}

/// End-to-end channels `ĥ_k^H` as the rows of a `K × N` matrix.
pub fn effective_channel(
    placement: &PaPlacement,
    ris: &RisConfig,
    scenario: &Scenario,
    params: &SystemParams,
) -> Result<CMat> {
    ChannelSet::new(placement, scenario, params)?.effective(&ris.coefficients())
}

/// Effective channels with every RIS coefficient set to 1, the input of the
/// phase-learning stage.
pub fn stage2_channel(placement: &PaPlacement, scenario: &Scenario, params: &SystemParams) -> Result<CMat> {
    effective_channel(placement, &RisConfig::identity(params.n_ris), scenario, params)
}
