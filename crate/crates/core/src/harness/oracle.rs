//! Exhaustive search over a placement grid and quantized RIS phases.

use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::beamform::{self, refine_beams};
use crate::channel::{ChannelSet, PaPlacement};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::objective::{self, Beamformer, Objective, RisConfig, Solution};
use crate::scenario::{Scenario, SystemParams};

const POLISH_EVALUATIONS: usize = 20_000;
const POLISH_MIN_STEP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Uniform grid points over `[0, D]` available to every PA.
    pub positions: usize,
    /// Uniform phase levels per RIS element.
    pub phase_levels: usize,
    /// Largest number of channel evaluations the search may take.
    pub max_evaluations: u128,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { positions: 41, phase_levels: 8, max_evaluations: 10_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    /// Best solution after the continuous polish.
    pub solution: Solution,
    /// Best sum rate on the grid.
    pub grid_value: f64,
    /// Sum rate of `solution`; never below `grid_value`.
    pub value: f64,
    pub evaluations: u128,
}

fn grid_points(params: &SystemParams, grid: &GridSpec) -> Result<Vec<f64>> {
    if grid.positions < 2 || grid.phase_levels == 0 {
        return Err(Error::InvalidParams("the grid needs at least two positions and one phase level".into()));
    }
    let step = params.region_length / (grid.positions - 1) as f64;
    Ok((0..grid.positions).map(|i| i as f64 * step).collect())
}

/// Increasing index tuples of length `m` whose neighbours are at least
/// `min_spacing` apart.
fn row_tuples(points: &[f64], m: usize, min_spacing: f64) -> Vec<Vec<usize>> {
    fn extend(points: &[f64], m: usize, gap: f64, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        let from = cur.last().map_or(0, |&i| i + 1);
        for i in from..points.len() {
            if let Some(&j) = cur.last() {
                if points[i] - points[j] < gap {
                    continue;
                }
            }
            cur.push(i);
            extend(points, m, gap, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    extend(points, m, min_spacing - 1e-12, &mut Vec::new(), &mut out);
    out
}

/// Channel evaluations a full search needs: (feasible placements per
/// waveguide)^N × levels^L, saturating.
pub fn grid_size(params: &SystemParams, grid: &GridSpec) -> Result<u128> {
    let points = grid_points(params, grid)?;
    let per_row = row_tuples(&points, params.n_pas_per_wg, params.min_spacing).len() as u128;
    let mut total: u128 = 1;
    for _ in 0..params.n_waveguides {
        total = total.saturating_mul(per_row);
    }
    for _ in 0..params.n_ris {
        total = total.saturating_mul(grid.phase_levels as u128);
    }
    Ok(total)
}

/// Full-power MRT for a single user, uniform regularized ZF otherwise.
fn grid_beam(z: &CMat, params: &SystemParams) -> Result<Beamformer> {
    if z.nrows() == 1 {
        Ok(beamform::mrt(z, &[params.power_budget]))
    } else {
        beamform::rzf_default(z, params)
    }
}

fn value_of(cs: &ChannelSet, coeffs: &[C64], params: &SystemParams) -> Result<(f64, Beamformer)> {
    let z = cs.effective(coeffs)?;
    let beam = grid_beam(&z, params)?;
    Ok((objective::sum_rate_from_channels(&z, &beam.w, params.noise_power), beam))
}

/// Advances a mixed-radix counter; false once it wraps to all zeros.
fn advance(counter: &mut [usize], radix: usize) -> bool {
    for c in counter.iter_mut() {
        *c += 1;
        if *c < radix {
            return true;
        }
        *c = 0;
    }
    false
}

/// Sum-rate maximization by exhaustive search, followed by [`polish`].
///
/// Beams are full-power MRT for `K = 1`, which is optimal for fixed
/// channels; for more users the grid uses uniform regularized ZF and the
/// polish refines the beams of the winner. Refuses with
/// [`Error::BudgetExceeded`] when the grid is larger than
/// `grid.max_evaluations`.
pub fn grid_oracle(scenario: &Scenario, params: &SystemParams, grid: &GridSpec) -> Result<OracleResult> {
    scenario.validate(params)?;
    let evaluations = grid_size(params, grid)?;
    if evaluations > grid.max_evaluations {
        return Err(Error::BudgetExceeded { evaluations, limit: grid.max_evaluations });
    }
    let points = grid_points(params, grid)?;
    let rows = row_tuples(&points, params.n_pas_per_wg, params.min_spacing);
    if rows.is_empty() {
        return Err(Error::SpacingInfeasible {
            needed: (params.n_pas_per_wg as f64 - 1.0) * params.min_spacing,
            length: params.region_length,
        });
    }
    let (n, l, levels) = (params.n_waveguides, params.n_ris, grid.phase_levels);
    let phase = |i: usize| i as f64 * TAU / levels as f64;

    let mut best: Option<(f64, Vec<usize>, Vec<usize>, Beamformer)> = None;
    let mut place_idx = vec![0usize; n];
    loop {
        let placement = PaPlacement::new(place_idx.iter().map(|&r| rows[r].iter().map(|&i| points[i]).collect()).collect());
        let cs = ChannelSet::new(&placement, scenario, params)?;
        let mut phase_idx = vec![0usize; l];
        loop {
            let coeffs: Vec<C64> = phase_idx.iter().map(|&i| C64::from_polar(1.0, phase(i))).collect();
            let (v, beam) = value_of(&cs, &coeffs, params)?;
            if best.as_ref().is_none_or(|b| v > b.0) {
                best = Some((v, place_idx.clone(), phase_idx.clone(), beam));
            }
            if !advance(&mut phase_idx, levels) {
                break;
            }
        }
        if !advance(&mut place_idx, rows.len()) {
            break;
        }
    }
    let (grid_value, pi, fi, beam) = best.expect("at least one grid point");
    let placement = PaPlacement::new(pi.iter().map(|&r| rows[r].iter().map(|&i| points[i]).collect()).collect());
    let ris = RisConfig::new(fi.iter().map(|&i| phase(i)).collect());
    let start = Solution::new(placement, ris, beam, params)?;
    let step = points[1] - points[0];
    let (solution, value) = polish(scenario, params, &start, step / 2.0, TAU / levels as f64 / 2.0)?;
    Ok(OracleResult { solution, grid_value, value: value.max(grid_value), evaluations })
}

/// Coordinate search over positions and phases from `start` with initial
/// steps `step_x` (m) and `step_phase` (rad). Each coordinate's step doubles
/// after a successful move and halves after a failed one. Beams follow
/// [`grid_oracle`]'s rule and are refined at the end when there is more
/// than one user.
pub fn polish(
    scenario: &Scenario,
    params: &SystemParams,
    start: &Solution,
    step_x: f64,
    step_phase: f64,
) -> Result<(Solution, f64)> {
    let eval = |x: &[f64], phases: &[f64]| -> Result<Option<(f64, Beamformer)>> {
        let placement = PaPlacement::from_flat(params.n_waveguides, params.n_pas_per_wg, x);
        if placement.check_feasible(params).is_err() {
            return Ok(None);
        }
        let cs = ChannelSet::new(&placement, scenario, params)?;
        let coeffs: Vec<C64> = phases.iter().map(|&p| C64::from_polar(1.0, p)).collect();
        value_of(&cs, &coeffs, params).map(Some)
    };
    let mut x = start.placement().flat();
    let mut phases = start.ris().phases().to_vec();
    let Some((mut value, mut beam)) = eval(&x, &phases)? else {
        return Err(Error::Infeasible("polish needs a feasible start".into()));
    };
    let initial: Vec<f64> = (0..x.len() + phases.len()).map(|c| if c < x.len() { step_x } else { step_phase }).collect();
    let mut steps = initial.clone();
    let mut evaluations = 0;
    while evaluations < POLISH_EVALUATIONS {
        let mut active = false;
        for c in 0..steps.len() {
            if steps[c] < POLISH_MIN_STEP {
                continue;
            }
            active = true;
            let mut moved = false;
            for sign in [1.0, -1.0] {
                let (mut tx, mut tp) = (x.clone(), phases.clone());
                if c < x.len() {
                    tx[c] += sign * steps[c];
                } else {
                    tp[c - x.len()] += sign * steps[c];
                }
                evaluations += 1;
                if let Some((v, b)) = eval(&tx, &tp)? {
                    // Gains below rounding noise would never stop.
                    if v > value + 1e-12 * value.abs() {
                        (x, phases, value, beam) = (tx, tp, v, b);
                        moved = true;
                        break;
                    }
                }
            }
            steps[c] = if moved { (steps[c] * 2.0).min(initial[c]) } else { steps[c] / 2.0 };
        }
        if !active {
            break;
        }
    }
    let placement = PaPlacement::from_flat(params.n_waveguides, params.n_pas_per_wg, &x);
    let ris = RisConfig::new(phases);
    if scenario.n_users() > 1 {
        let z = crate::channel::effective_channel(&placement, &ris, scenario, params)?;
        let r = refine_beams(&z, params, Objective::SumRate, &beam, 500)?;
        value = r.value;
        beam = r.beam;
    }
    Ok((Solution::new(placement, ris, beam, params)?, value))
}
