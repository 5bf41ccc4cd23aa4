//! Beamformer constructions on fixed effective channels: zero-forcing, MRT,
//! the hybrid ZF/MRT parametrization, regularized ZF, and an iterative
//! refiner for sum rate or energy efficiency.
//!
//! Channels are given as a `K × N` matrix `Z` whose row `k` is `ĥ_k^H`;
//! beams are `N × K` with column `k` serving user `k`.

pub mod batch;
mod refine;

pub use refine::{dinkelbach_price, refine_beams, RefineResult, ARMIJO_C, DINKELBACH_TOL};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_condition, CMat, CVec};
use crate::objective::Beamformer;
use crate::scenario::SystemParams;

/// Above this condition number of `Z Z^H` a small diagonal load is added
/// before inverting.
pub const JITTER_THRESHOLD: f64 = 1e10;
/// Diagonal load relative to the mean eigenvalue `tr(Z Z^H)/K`.
pub const JITTER_SCALE: f64 = 1e-10;
/// Beyond this condition number `Z` is treated as rank-deficient.
pub const RANK_DEFICIENT: f64 = 1e14;

/// Hybrid parameters per user: mixing coefficient and power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HzmParams {
    pub alpha: Vec<f64>,
    pub power: Vec<f64>,
}

impl HzmParams {
    pub fn check(&self, params: &SystemParams) -> Result<()> {
        if self.alpha.len() != self.power.len() {
            return Err(Error::Dimension("alpha and power lengths differ".into()));
        }
        if self.alpha.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Infeasible("hybrid coefficient outside [0, 1]".into()));
        }
        if self.power.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Infeasible("negative power".into()));
        }
        let total: f64 = self.power.iter().sum();
        if total > params.power_budget + crate::objective::POWER_TOL {
            return Err(Error::Infeasible(format!("powers sum to {total} W")));
        }
        Ok(())
    }
}

/// Zero-forcing matrix and how it was obtained.
#[derive(Debug, Clone)]
pub struct ZfOutput {
    pub u: CMat,
    /// Condition number of `Z Z^H` before any loading.
    pub condition: f64,
    /// Whether the diagonal load was applied.
    pub jittered: bool,
}

/// Diagonal load for a Gram matrix, or zero when it is well conditioned.
pub fn gram_jitter(gram: &CMat) -> (f64, f64) {
    let cond = hermitian_condition(gram);
    if cond > JITTER_THRESHOLD {
        let k = gram.nrows().max(1) as f64;
        let tr: f64 = gram.diagonal().iter().map(|z| z.re).sum();
        (JITTER_SCALE * tr / k, cond)
    } else {
        (0.0, cond)
    }
}

/// `U = Z^H (Z Z^H)^{-1}`, so that `Z U = I_K`.
pub fn zf_matrix(z: &CMat) -> Result<ZfOutput> {
    let (k, n) = z.shape();
    if k > n {
        return Err(Error::Dimension(format!("zero-forcing needs K ≤ N, got K = {k}, N = {n}")));
    }
    let zh = z.adjoint();
    let mut gram = z * &zh;
    let (load, condition) = gram_jitter(&gram);
    if !(condition <= RANK_DEFICIENT) {
        return Err(Error::IllConditioned { condition });
    }
    for i in 0..k {
        gram[(i, i)] += load;
    }
    let inv = gram.try_inverse().ok_or(Error::IllConditioned { condition })?;
    Ok(ZfOutput { u: zh * inv, condition, jittered: load > 0.0 })
}

fn normalized(v: CVec) -> CVec {
    let n = v.norm();
    if n > 0.0 {
        v / C64::new(n, 0.0)
    } else {
        v
    }
}

/// Unit MRT direction `ĥ_k/‖ĥ_k‖` for every user, as columns.
pub fn mrt_directions(z: &CMat) -> CMat {
    let mut out = z.adjoint();
    for mut col in out.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= C64::new(n, 0.0);
        }
    }
    out
}

/// MRT beams with per-user powers.
pub fn mrt(z: &CMat, power: &[f64]) -> Beamformer {
    let mut w = mrt_directions(z);
    for (k, mut col) in w.column_iter_mut().enumerate() {
        col *= C64::new(power[k].sqrt(), 0.0);
    }
    Beamformer::new(w)
}

fn hybrid(u_k: CVec, h_k: CVec, alpha: f64) -> CVec {
    let mrt_dir = normalized(h_k);
    if alpha == 0.0 {
        return mrt_dir;
    }
    if alpha == 1.0 {
        return normalized(u_k);
    }
    let combo = normalized(u_k) * C64::new(alpha, 0.0) + &mrt_dir * C64::new(1.0 - alpha, 0.0);
    if combo.norm() < 1e-12 {
        return mrt_dir;
    }
    normalized(combo)
}

/// Unit-norm blend of the normalized ZF and MRT directions of user `k`.
pub fn hzm_direction(k: usize, alpha: f64, z: &CMat) -> Result<CVec> {
    if k >= z.nrows() {
        return Err(Error::IndexOutOfRange { index: k + 1, max: z.nrows() });
    }
    let zf = zf_matrix(z)?;
    Ok(hybrid(zf.u.column(k).into_owned(), z.row(k).adjoint(), alpha))
}

/// `w_k = √p_k · w̄_k(α_k)`
pub fn assemble_hzm(hzm: &HzmParams, z: &CMat) -> Result<Beamformer> {
    let k = z.nrows();
    if hzm.alpha.len() != k || hzm.power.len() != k {
        return Err(Error::Dimension(format!("hybrid parameters for {} users, channels for {k}", hzm.alpha.len())));
    }
    let zf = zf_matrix(z)?;
    let mut w = CMat::zeros(z.ncols(), k);
    for i in 0..k {
        let dir = hybrid(zf.u.column(i).into_owned(), z.row(i).adjoint(), hzm.alpha[i]);
        w.set_column(i, &(dir * C64::new(hzm.power[i].max(0.0).sqrt(), 0.0)));
    }
    Ok(Beamformer::new(w))
}

/// Regularized ZF: direction of `(I + Σ_k' λ_k'/σ² ĥ_k' ĥ_k'^H)^{-1} ĥ_k`,
/// scaled by `√p_k`. Evaluated as `Z^H (I_K + Λ Z Z^H/σ²)^{-1}`, which is
/// the same matrix but keeps a single user's direction exactly parallel to
/// `ĥ_k` however strong the channel.
pub fn rzf_closed_form(z: &CMat, params: &SystemParams, power: &[f64], reg: &[f64]) -> Result<Beamformer> {
    let (k, n) = z.shape();
    if power.len() != k || reg.len() != k {
        return Err(Error::Dimension(format!("RZF needs {k} powers and regularizers")));
    }
    let zh = z.adjoint();
    let mut a = z * &zh;
    for (i, mut row) in a.row_iter_mut().enumerate() {
        row *= C64::new(reg[i] / params.noise_power, 0.0);
    }
    a += CMat::identity(k, k);
    let inv = a.lu().try_inverse().ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
    let dirs = zh * inv;
    let mut w = CMat::zeros(n, k);
    for i in 0..k {
        let d = normalized(dirs.column(i).into_owned());
        w.set_column(i, &(d * C64::new(power[i].max(0.0).sqrt(), 0.0)));
    }
    Ok(Beamformer::new(w))
}

/// RZF with `p_k = λ_k = P_max/K`.
pub fn rzf_default(z: &CMat, params: &SystemParams) -> Result<Beamformer> {
    let k = z.nrows();
    let share = vec![params.power_budget / k as f64; k];
    rzf_closed_form(z, params, &share, &share)
}
