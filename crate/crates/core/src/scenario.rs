//! System constants, deployment geometry and random problem instances.
//!
//! All dB-valued constants are kept in dB in [`SystemParams`] (that is what a
//! config file states) and converted to linear scale once through
//! [`SystemParams::derived`].

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::PaPlacement;
use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// N
    pub n_waveguides: usize,
    /// M
    pub n_pas_per_wg: usize,
    /// K
    pub n_users: usize,
    /// L; zero means no RIS.
    pub n_ris: usize,
    /// D, extent along x (also the waveguide length).
    pub region_length: f64,
    /// S, extent along y.
    pub region_width: f64,
    pub height: f64,
    pub min_spacing: f64,
    pub power_budget: f64,
    pub circuit_power: f64,
    /// σ² in watts, shared by all users.
    pub noise_power: f64,
    pub carrier_freq: f64,
    pub wavelength: f64,
    pub guided_wavelength: f64,
    pub refractive_index: f64,
    pub rician_factor_db: f64,
    /// Rician κ → ∞: drop the NLoS component entirely.
    #[serde(default)]
    pub pure_los: bool,
    pub fading_exponent: f64,
    pub ref_gain_db: f64,
    pub element_sep: f64,
    pub ris_position: [f64; 3],
}

/// Linear-scale constants derived from [`SystemParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derived {
    pub kappa: f64,
    pub beta0: f64,
    /// η = c² / (4π f_c)²
    pub eta: f64,
    pub los_weight: f64,
    pub nlos_weight: f64,
}

impl SystemParams {
    /// The full-size simulation setting (N=8, M=8, L=32, K=4 over a 10 m × 10 m area).
    pub fn large_default() -> Self {
        let f_c = 6.0e9;
        let n_eff = 1.4;
        let lambda = SPEED_OF_LIGHT / f_c;
        let (d, s, h) = (10.0, 10.0, 5.0);
        Self {
            n_waveguides: 8,
            n_pas_per_wg: 8,
            n_users: 4,
            n_ris: 32,
            region_length: d,
            region_width: s,
            height: h,
            min_spacing: 0.1,
            power_budget: 10.0,
            circuit_power: 5.0,
            noise_power: dbm_to_watts(-60.0),
            carrier_freq: f_c,
            wavelength: lambda,
            guided_wavelength: lambda / n_eff,
            refractive_index: n_eff,
            rician_factor_db: 3.0,
            pure_los: false,
            fading_exponent: 2.8,
            ref_gain_db: -20.0,
            element_sep: lambda / 2.0,
            ris_position: [d / 2.0, 0.0, h / 2.0],
        }
    }

    /// Desk-scale default: N=2, M=2, L=8, K=2, everything else unchanged.
    pub fn desk_default() -> Self {
        Self::large_default().with_dims(2, 2, 8, 2)
    }

    pub fn with_dims(mut self, n: usize, m: usize, l: usize, k: usize) -> Self {
        self.n_waveguides = n;
        self.n_pas_per_wg = m;
        self.n_ris = l;
        self.n_users = k;
        self
    }

    pub fn with_users(mut self, k: usize) -> Self {
        self.n_users = k;
        self
    }

    /// Same system with the RIS removed (L = 0).
    pub fn without_ris(mut self) -> Self {
        self.n_ris = 0;
        self
    }

    /// Resizes the serving area and re-centres the RIS at its default spot.
    pub fn with_region(mut self, length: f64, width: f64) -> Self {
        self.region_length = length;
        self.region_width = width;
        self.ris_position = default_ris_position(&self);
        self
    }

    /// Sets the carrier and recomputes λ, λ_g and the RIS element separation λ/2.
    pub fn with_carrier(mut self, carrier_freq: f64, refractive_index: f64) -> Self {
        self.carrier_freq = carrier_freq;
        self.refractive_index = refractive_index;
        self.wavelength = SPEED_OF_LIGHT / carrier_freq;
        self.guided_wavelength = self.wavelength / refractive_index;
        self.element_sep = self.wavelength / 2.0;
        self
    }

    pub fn derived(&self) -> Derived {
        let kappa = db_to_linear(self.rician_factor_db);
        let (los_weight, nlos_weight) = if self.pure_los {
            (1.0, 0.0)
        } else {
            ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
        };
        let eta = (SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * self.carrier_freq)).powi(2);
        Derived { kappa, beta0: db_to_linear(self.ref_gain_db), eta, los_weight, nlos_weight }
    }

    /// δ_max = D − (M−1)·Δ_min
    pub fn max_total_spacing(&self) -> f64 {
        self.region_length - (self.n_pas_per_wg as f64 - 1.0) * self.min_spacing
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.n_waveguides == 0 || self.n_pas_per_wg == 0 || self.n_users == 0 {
            return bad("N, M and K must be positive".into());
        }
        if self.n_users > self.n_waveguides {
            return bad(format!("K = {} exceeds N = {}", self.n_users, self.n_waveguides));
        }
        if !(self.min_spacing > 0.0) {
            return bad("minimum PA spacing must be positive".into());
        }
        if self.max_total_spacing() < 0.0 {
            return Err(Error::SpacingInfeasible {
                needed: (self.n_pas_per_wg as f64 - 1.0) * self.min_spacing,
                length: self.region_length,
            });
        }
        if !(self.power_budget > 0.0) || !(self.noise_power > 0.0) || !(self.circuit_power >= 0.0) {
            return bad("P_max and σ² must be positive, P_C non-negative".into());
        }
        if !(self.carrier_freq > 0.0) || !(self.refractive_index > 0.0) {
            return bad("carrier frequency and refractive index must be positive".into());
        }
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs();
        if !rel(self.wavelength, SPEED_OF_LIGHT / self.carrier_freq) {
            return bad("wavelength must equal c / f_c".into());
        }
        if !rel(self.guided_wavelength, self.wavelength / self.refractive_index) {
            return bad("guided wavelength must equal λ / n_eff".into());
        }
        if !(self.region_length >= 0.0) || !(self.region_width >= 0.0) || !(self.height >= 0.0) {
            return bad("geometry extents must be non-negative".into());
        }
        Ok(())
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::desk_default()
    }
}

/// y-coordinate of waveguide `n` (1-based): (n−1)·S/N − (N−1)·S/(2N).
pub fn waveguide_y(n: usize, params: &SystemParams) -> Result<f64> {
    let big_n = params.n_waveguides;
    if n == 0 || n > big_n {
        return Err(Error::IndexOutOfRange { index: n, max: big_n });
    }
    let s = params.region_width;
    let nf = big_n as f64;
    Ok((n as f64 - 1.0) * s / nf - (nf - 1.0) * s / (2.0 * nf))
}

/// y-coordinates of all waveguides, in order.
pub fn waveguide_ys(params: &SystemParams) -> Vec<f64> {
    (1..=params.n_waveguides).map(|n| waveguide_y(n, params).expect("index in range")).collect()
}

/// (D/2, 0, H/2)
pub fn default_ris_position(params: &SystemParams) -> [f64; 3] {
    [params.region_length / 2.0, 0.0, params.height / 2.0]
}

/// One problem instance: user drops plus the frozen small-scale fading draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// K rows of (x, y, 0).
    pub user_positions: Vec<[f64; 3]>,
    /// N·M L-vectors indexed `n * M + m`, drawn once per (waveguide, PA slot).
    pub nlos_pa_ris: Vec<Vec<C64>>,
    /// K L-vectors.
    pub nlos_ris_user: Vec<Vec<C64>>,
    pub rng_seed: u64,
}

impl Scenario {
    pub fn n_users(&self) -> usize {
        self.user_positions.len()
    }

    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        let k = params.n_users;
        let dim = |m: String| Err(Error::Dimension(m));
        if self.user_positions.len() != k || self.nlos_ris_user.len() != k {
            return dim(format!("scenario has {} users, params say {k}", self.user_positions.len()));
        }
        if self.nlos_pa_ris.len() != params.n_waveguides * params.n_pas_per_wg {
            return dim(format!("expected {} PA-RIS fading draws", params.n_waveguides * params.n_pas_per_wg));
        }
        let l = params.n_ris;
        if self.nlos_pa_ris.iter().chain(&self.nlos_ris_user).any(|v| v.len() < l) {
            return dim(format!("fading draws shorter than L = {l}"));
        }
        let half = params.region_width / 2.0;
        for p in &self.user_positions {
            if !(0.0..=params.region_length).contains(&p[0]) || !(-half..=half).contains(&p[1]) || p[2] != 0.0 {
                return Err(Error::InvalidParams(format!("user at {p:?} outside the serving region")));
            }
        }
        Ok(())
    }

    /// Reorders users: new user `i` is old user `perm[i]`.
    pub fn permute_users(&self, perm: &[usize]) -> Scenario {
        Scenario {
            user_positions: perm.iter().map(|&i| self.user_positions[i]).collect(),
            nlos_pa_ris: self.nlos_pa_ris.clone(),
            nlos_ris_user: perm.iter().map(|&i| self.nlos_ris_user[i].clone()).collect(),
            rng_seed: self.rng_seed,
        }
    }
}

fn cscg(rng: &mut ChaCha8Rng, normal: &Normal<f64>, len: usize) -> Vec<C64> {
    (0..len).map(|_| C64::new(normal.sample(rng), normal.sample(rng))).collect()
}

/// Draws users uniformly over [0, D] × [−S/2, S/2] and i.i.d. CSCG(0, 1)
/// fading; deterministic in `seed`.
pub fn sample_scenario(params: &SystemParams, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = params.region_width / 2.0;
    let user_positions = (0..params.n_users)
        .map(|_| {
            let x = rng.random_range(0.0..=params.region_length);
            let y = rng.random_range(-half..=half);
            [x, y, 0.0]
        })
        .collect();
    let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid std");
    let l = params.n_ris;
    let nlos_pa_ris = (0..params.n_waveguides * params.n_pas_per_wg)
        .map(|_| cscg(&mut rng, &normal, l))
        .collect();
    let nlos_ris_user = (0..params.n_users).map(|_| cscg(&mut rng, &normal, l)).collect();
    Scenario { user_positions, nlos_pa_ris, nlos_ris_user, rng_seed: seed }
}

/// `count` scenarios with seeds `base_seed, base_seed + 1, ...`.
pub fn sample_dataset(params: &SystemParams, base_seed: u64, count: usize) -> Vec<Scenario> {
    (0..count as u64).map(|i| sample_scenario(params, base_seed.wrapping_add(i))).collect()
}

/// M PAs per waveguide, Δ_min apart, centred at D/2; identical on every waveguide.
pub fn fixed_pa_placement(params: &SystemParams) -> Result<PaPlacement> {
    let m = params.n_pas_per_wg;
    let span = (m as f64 - 1.0) * params.min_spacing;
    if span > params.region_length {
        return Err(Error::SpacingInfeasible { needed: span, length: params.region_length });
    }
    let start = params.region_length / 2.0 - span / 2.0;
    let row: Vec<f64> = (0..m).map(|i| start + i as f64 * params.min_spacing).collect();
    Ok(PaPlacement::new(vec![row; params.n_waveguides]))
}
