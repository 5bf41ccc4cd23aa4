//! Rates, sum rate, energy efficiency and the reciprocal training losses.

pub mod batch;

use std::f64::consts::{LN_2, TAU};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::channel::{effective_channel, PaPlacement};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::scenario::{Scenario, SystemParams};

/// Floor applied to the sum rate inside the reciprocal losses.
pub const SR_FLOOR: f64 = 1e-8;

/// Slack allowed on the power budget.
pub const POWER_TOL: f64 = 1e-9;

/// RIS phases in radians, each in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisConfig {
    phases: Vec<f64>,
}

impl RisConfig {
    /// Wraps arbitrary angles into `[0, 2π)`.
    pub fn new(phases: Vec<f64>) -> Self {
        Self { phases: phases.into_iter().map(wrap_phase).collect() }
    }

    /// All phases zero (Φ = I).
    pub fn identity(l: usize) -> Self {
        Self { phases: vec![0.0; l] }
    }

    /// Phases of nonzero complex coefficients; zero maps to phase 0.
    pub fn from_coefficients(coeffs: &[C64]) -> Self {
        Self::new(coeffs.iter().map(|z| if z.norm() > 0.0 { z.arg() } else { 0.0 }).collect())
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// `e^{jφ_l}` for every element.
    pub fn coefficients(&self) -> Vec<C64> {
        self.phases.iter().map(|&p| C64::from_polar(1.0, p)).collect()
    }
}

fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs.
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// `N × K` beamforming matrix, column `k` serving user `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beamformer {
    pub w: CMat,
}

impl Beamformer {
    pub fn new(w: CMat) -> Self {
        Self { w }
    }

    pub fn zeros(n: usize, k: usize) -> Self {
        Self { w: CMat::zeros(n, k) }
    }

    /// `Σ_k ‖w_k‖²`
    pub fn power(&self) -> f64 {
        self.w.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn n_users(&self) -> usize {
        self.w.ncols()
    }
}

/// A complete decision: placement, RIS phases and beams. Only constructible
/// through [`Solution::new`], which checks every constraint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    placement: PaPlacement,
    ris: RisConfig,
    beam: Beamformer,
}

impl Solution {
    pub fn new(placement: PaPlacement, ris: RisConfig, beam: Beamformer, params: &SystemParams) -> Result<Self> {
        let sol = Self { placement, ris, beam };
        sol.check(params)?;
        Ok(sol)
    }

    pub fn placement(&self) -> &PaPlacement {
        &self.placement
    }

    pub fn ris(&self) -> &RisConfig {
        &self.ris
    }

    pub fn beam(&self) -> &Beamformer {
        &self.beam
    }

    /// Same geometry with new beams, re-validated.
    pub fn with_beam(&self, beam: Beamformer, params: &SystemParams) -> Result<Self> {
        Self::new(self.placement.clone(), self.ris.clone(), beam, params)
    }

    /// Re-checks placement bounds and spacing, the power budget, phase range
    /// and dimensions from the stored raw values.
    pub fn check(&self, params: &SystemParams) -> Result<()> {
        self.placement.check_feasible(params)?;
        if self.ris.len() != params.n_ris {
            return Err(Error::Dimension(format!("{} RIS phases for L = {}", self.ris.len(), params.n_ris)));
        }
        if let Some(p) = self.ris.phases.iter().find(|p| !(0.0..TAU).contains(*p)) {
            return Err(Error::Infeasible(format!("RIS phase {p} outside [0, 2π)")));
        }
        if self.beam.w.nrows() != params.n_waveguides {
            return Err(Error::Dimension(format!("beams have {} rows for N = {}", self.beam.w.nrows(), params.n_waveguides)));
        }
        if self.beam.w.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Infeasible("non-finite beam entry".into()));
        }
        let power = self.beam.power();
        if power > params.power_budget + POWER_TOL {
            return Err(Error::Infeasible(format!("transmit power {power} W exceeds {} W", params.power_budget)));
        }
        Ok(())
    }
}

/// Per-user rates in bits/s/Hz for effective channels `z` (`K × N`, rows
/// `ĥ_k^H`) and beams `w` (`N × K`).
pub fn rates_from_channels(z: &CMat, w: &CMat, noise: f64) -> Vec<f64> {
    let s = z * w;
    (0..z.nrows())
        .map(|k| {
            let signal = s[(k, k)].norm_sqr();
            let interference: f64 = (0..s.ncols()).filter(|&j| j != k).map(|j| s[(k, j)].norm_sqr()).sum();
            (1.0 + signal / (interference + noise)).ln() / LN_2
        })
        .collect()
}

pub fn sum_rate_from_channels(z: &CMat, w: &CMat, noise: f64) -> f64 {
    rates_from_channels(z, w, noise).iter().sum()
}

fn check_users(k: usize, sol: &Solution, scenario: &Scenario) -> Result<()> {
    let have = scenario.n_users();
    if sol.beam.n_users() != have {
        return Err(Error::Dimension(format!("{} beams for {have} users", sol.beam.n_users())));
    }
    if k >= have {
        return Err(Error::IndexOutOfRange { index: k + 1, max: have });
    }
    Ok(())
}

fn channels_for(sol: &Solution, scenario: &Scenario, params: &SystemParams) -> Result<CMat> {
    let p = params.clone().with_users(scenario.n_users());
    effective_channel(&sol.placement, &sol.ris, scenario, &p)
}

/// Rate of user `k` (0-based).
pub fn user_rate(k: usize, sol: &Solution, scenario: &Scenario, params: &SystemParams) -> Result<f64> {
    check_users(k, sol, scenario)?;
    let z = channels_for(sol, scenario, params)?;
    Ok(rates_from_channels(&z, &sol.beam.w, params.noise_power)[k])
}

pub fn sum_rate(sol: &Solution, scenario: &Scenario, params: &SystemParams) -> Result<f64> {
    check_users(0, sol, scenario)?;
    let z = channels_for(sol, scenario, params)?;
    Ok(sum_rate_from_channels(&z, &sol.beam.w, params.noise_power))
}

/// `SR / (Σ‖w_k‖² + P_C)`
pub fn energy_efficiency(sol: &Solution, scenario: &Scenario, params: &SystemParams) -> Result<f64> {
    Ok(ee_from_parts(sum_rate(sol, scenario, params)?, sol.beam.power(), params.circuit_power))
}

pub fn ee_from_parts(sr: f64, power: f64, circuit_power: f64) -> f64 {
    sr / (power + circuit_power)
}

/// Which objective a problem maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Objective {
    #[default]
    #[serde(rename = "SR")]
    SumRate,
    #[serde(rename = "EE")]
    EnergyEfficiency,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SR" => Ok(Self::SumRate),
            "EE" => Ok(Self::EnergyEfficiency),
            _ => Err(Error::InvalidParams(format!("unknown objective `{s}` (expected SR or EE)"))),
        }
    }
}

impl Objective {
    pub fn value(self, sr: f64, power: f64, circuit_power: f64) -> f64 {
        match self {
            Self::SumRate => sr,
            Self::EnergyEfficiency => ee_from_parts(sr, power, circuit_power),
        }
    }
}

/// `(1/T)·Σ 1/max(SR_t, ε)`
pub fn loss_sr(sum_rates: &[f64]) -> f64 {
    assert!(!sum_rates.is_empty(), "loss over an empty batch");
    sum_rates.iter().map(|&r| 1.0 / r.max(SR_FLOOR)).sum::<f64>() / sum_rates.len() as f64
}

/// `(1/T)·Σ (power_t + P_C)/max(SR_t, ε)` for `(SR, power)` pairs.
pub fn loss_ee(samples: &[(f64, f64)], circuit_power: f64) -> f64 {
    assert!(!samples.is_empty(), "loss over an empty batch");
    samples.iter().map(|&(r, p)| (p + circuit_power) / r.max(SR_FLOOR)).sum::<f64>() / samples.len() as f64
}

/// Loss for the given objective from `(SR, power)` pairs.
pub fn loss(objective: Objective, samples: &[(f64, f64)], circuit_power: f64) -> f64 {
    match objective {
        Objective::SumRate => loss_sr(&samples.iter().map(|s| s.0).collect::<Vec<_>>()),
        Objective::EnergyEfficiency => loss_ee(samples, circuit_power),
    }
}
