//! Evaluation pipelines: the three strategies, non-learned baselines, the
//! grid-search oracle, per-sample reports and the command line.

pub mod cli;
pub mod config;
mod oracle;
mod report;

pub use oracle::{grid_oracle, grid_size, polish, GridSpec, OracleResult};
pub use report::{SampleRecord, StrategyReport};

use std::f64::consts::TAU;
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::beamform::{self, refine_beams};
use crate::channel::batch::BatchGeometry;
use crate::channel::{effective_channel, PaPlacement, PLACEMENT_TOL};
use crate::error::{Error, Result};
use crate::feasible;
use crate::gnn::{Mode, Network, SystemConfig};
use crate::linalg::CMat;
use crate::objective::{self, Beamformer, Objective, RisConfig, Solution, POWER_TOL};
use crate::scenario::{fixed_pa_placement, Scenario, SystemParams};

/// Batch-of-one forward pass in inference mode.
///
/// `params` are the full system parameters; the network's configuration is
/// applied to them, and the returned solution is feasible under
/// `net.system().apply(params)`.
pub fn strategy_i(net: &Network, scenario: &Scenario, params: &SystemParams) -> Result<Solution> {
    let p = net.system().apply(params);
    let tape = Tape::new();
    let bound = net.store().bind(&tape, false);
    let geo = BatchGeometry::new(&[scenario], &p)?;
    let out = net.forward(&tape, &bound, &geo, &p, Mode::Eval)?;
    Ok(out.solutions(&p)?.remove(0))
}

/// Learned placement and phases, beams refined from the network's own beams
/// at the recomputed effective channels.
pub fn strategy_ii(
    net: &Network,
    scenario: &Scenario,
    params: &SystemParams,
    objective: Objective,
    budget: usize,
) -> Result<Solution> {
    let p = net.system().apply(params);
    let sol = strategy_i(net, scenario, params)?;
    refine_solution(&sol, scenario, &p, objective, budget)
}

/// Learned placement and phases from a network without a beam stage; beams
/// start at uniform-power regularized ZF and are refined.
pub fn strategy_iii(
    net: &Network,
    scenario: &Scenario,
    params: &SystemParams,
    objective: Objective,
    budget: usize,
) -> Result<Solution> {
    match net {
        Network::Gnn(m) if !m.has_beam_stage() => {}
        _ => return Err(Error::ModelMismatch(format!("strategy III needs a two-stage graph network, got {}", net.label()))),
    }
    let p = net.system().apply(params);
    let sol = strategy_i(net, scenario, params)?;
    let z = effective_channel(sol.placement(), sol.ris(), scenario, &p)?;
    let sol = sol.with_beam(beamform::rzf_default(&z, &p)?, &p)?;
    refine_solution(&sol, scenario, &p, objective, budget)
}

/// Keeps the geometry of `sol` and refines its beams.
pub fn refine_solution(
    sol: &Solution,
    scenario: &Scenario,
    params: &SystemParams,
    objective: Objective,
    budget: usize,
) -> Result<Solution> {
    if budget == 0 {
        return Ok(sol.clone());
    }
    let z = effective_channel(sol.placement(), sol.ris(), scenario, params)?;
    let r = refine_beams(&z, params, objective, sol.beam(), budget)?;
    sol.with_beam(r.beam, params)
}

/// Uniformly random spacings, phases and beam directions with a random
/// fraction of the power budget.
pub fn random_solution(scenario: &Scenario, params: &SystemParams, rng: &mut impl Rng) -> Result<Solution> {
    let (n, m, k) = (params.n_waveguides, params.n_pas_per_wg, scenario.n_users());
    let raw: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0).collect()).collect();
    let placement = feasible::spacing_to_positions(&feasible::raw_to_spacing(&raw, params), params);
    let ris = RisConfig::new((0..params.n_ris).map(|_| rng.random_range(0.0..TAU)).collect());
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut w = CMat::from_fn(n, k, |_, _| C64::new(normal.sample(rng), normal.sample(rng)));
    let norm = w.norm();
    if norm > 0.0 {
        let target = rng.random_range(0.0..=1.0) * params.power_budget;
        w *= C64::new((target.sqrt() / norm) * (1.0 - 1e-12), 0.0);
    }
    Solution::new(placement, ris, Beamformer::new(w), params)
}

/// Fixed placement, all RIS phases zero, regularized ZF refined with the
/// given budget.
pub fn refine_only(scenario: &Scenario, params: &SystemParams, objective: Objective, budget: usize) -> Result<Solution> {
    let placement = fixed_pa_placement(params)?;
    let ris = RisConfig::identity(params.n_ris);
    let z = effective_channel(&placement, &ris, scenario, params)?;
    let sol = Solution::new(placement, ris, beamform::rzf_default(&z, params)?, params)?;
    refine_solution(&sol, scenario, params, objective, budget)
}

/// Constraint violations of `sol`, recomputed from its stored values without
/// going through [`Solution::check`].
pub fn violations(sol: &Solution, params: &SystemParams) -> Vec<String> {
    let mut out = Vec::new();
    let x: &PaPlacement = sol.placement();
    if x.n_waveguides() != params.n_waveguides || x.n_pas() != params.n_pas_per_wg {
        out.push(format!("placement is {}×{}", x.n_waveguides(), x.n_pas()));
    }
    for (n, row) in x.rows().iter().enumerate() {
        for (m, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < -PLACEMENT_TOL || v > params.region_length + PLACEMENT_TOL {
                out.push(format!("PA ({n}, {m}) at {v} m"));
            }
        }
        for (m, pair) in row.windows(2).enumerate() {
            if pair[1] - pair[0] < params.min_spacing - PLACEMENT_TOL {
                out.push(format!("PAs ({n}, {m}) and ({n}, {}) are {} m apart", m + 1, pair[1] - pair[0]));
            }
        }
    }
    let coeffs = sol.ris().coefficients();
    if coeffs.len() != params.n_ris {
        out.push(format!("{} RIS elements for L = {}", coeffs.len(), params.n_ris));
    }
    if let Some(c) = coeffs.iter().find(|c| (c.norm() - 1.0).abs() > 1e-12) {
        out.push(format!("RIS coefficient of modulus {}", c.norm()));
    }
    let w = &sol.beam().w;
    if w.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        out.push("non-finite beam entry".into());
    }
    let slack = power_slack(sol, params);
    if !(slack >= -POWER_TOL) {
        out.push(format!("power exceeds the budget by {} W", -slack));
    }
    out
}

/// `P_max − Σ‖w_k‖²`
pub fn power_slack(sol: &Solution, params: &SystemParams) -> f64 {
    params.power_budget - sol.beam().w.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// What produces the solutions of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "I")]
    StrategyI,
    #[serde(rename = "II")]
    StrategyII,
    #[serde(rename = "III")]
    StrategyIII,
    /// Forward pass of the feed-forward baseline.
    #[serde(rename = "mlp")]
    Mlp,
    /// Beam optimization over the fixed geometry.
    #[serde(rename = "refine-only")]
    RefineOnly,
    /// Random feasible solutions.
    #[serde(rename = "random")]
    Random,
}

impl Method {
    pub const ALL: [Method; 6] = [Self::StrategyI, Self::StrategyII, Self::StrategyIII, Self::Mlp, Self::RefineOnly, Self::Random];

    pub fn label(self) -> &'static str {
        match self {
            Self::StrategyI => "I",
            Self::StrategyII => "II",
            Self::StrategyIII => "III",
            Self::Mlp => "mlp",
            Self::RefineOnly => "refine-only",
            Self::Random => "random",
        }
    }

    pub fn needs_model(self) -> bool {
        matches!(self, Self::StrategyI | Self::StrategyII | Self::StrategyIII | Self::Mlp)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(&lower))
            .or(match lower.as_str() {
                "1" => Some(Self::StrategyI),
                "2" => Some(Self::StrategyII),
                "3" => Some(Self::StrategyIII),
                _ => None,
            })
            .ok_or_else(|| Error::InvalidParams(format!("unknown method `{s}` (I, II, III, mlp, refine-only, random)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Objective of the beam refinement.
    pub objective: Objective,
    /// Refinement iterations for strategies II and III and refine-only.
    pub budget: usize,
    /// Seed of the random baseline; sample `i` uses `seed + i`.
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { objective: Objective::SumRate, budget: 500, seed: 0 }
    }
}

/// One solution of `method` for `scenario` under the already-applied
/// system parameters `p`.
fn solve(
    method: Method,
    net: Option<&Network>,
    scenario: &Scenario,
    base: &SystemParams,
    p: &SystemParams,
    opts: &EvalOptions,
    index: usize,
) -> Result<Solution> {
    let model = || net.ok_or_else(|| Error::MissingModel(format!("method {}", method.label())));
    match method {
        Method::StrategyI => strategy_i(model()?, scenario, base),
        Method::StrategyII => strategy_ii(model()?, scenario, base, opts.objective, opts.budget),
        Method::StrategyIII => strategy_iii(model()?, scenario, base, opts.objective, opts.budget),
        Method::Mlp => match model()? {
            m @ Network::Mlp(_) => strategy_i(m, scenario, base),
            other => Err(Error::ModelMismatch(format!("method mlp needs a feed-forward model, got {}", other.label()))),
        },
        Method::RefineOnly => refine_only(scenario, p, opts.objective, opts.budget),
        Method::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(index as u64));
            random_solution(scenario, p, &mut rng)
        }
    }
}

/// Runs `method` on every scenario of `data` under `system`, timing each
/// sample separately.
pub fn baseline_eval(
    system: SystemConfig,
    method: Method,
    net: Option<&Network>,
    data: &[Scenario],
    params: &SystemParams,
    opts: &EvalOptions,
) -> Result<StrategyReport> {
    if let Some(net) = net.filter(|_| method.needs_model()) {
        if net.system() != system {
            return Err(Error::ModelMismatch(format!(
                "model was built for {}, evaluation asks for {}",
                net.system().label(),
                system.label()
            )));
        }
    }
    let p = system.apply(params);
    let mut samples = Vec::with_capacity(data.len());
    for (i, scenario) in data.iter().enumerate() {
        let start = Instant::now();
        let sol = solve(method, net, scenario, params, &p, opts, i)?;
        let time_ms = start.elapsed().as_secs_f64() * 1e3;
        let sr = objective::sum_rate(&sol, scenario, &p)?;
        let ee = objective::ee_from_parts(sr, sol.beam().power(), p.circuit_power);
        let feasible = sol.check(&p).is_ok() && violations(&sol, &p).is_empty();
        samples.push(SampleRecord { sample_id: i, sr, ee, time_ms, feasible });
    }
    let label = match (method, net) {
        (Method::StrategyI, Some(Network::Mlp(_))) => "mlp".to_string(),
        _ => method.label().to_string(),
    };
    Ok(StrategyReport::new(label, system.label().to_string(), samples))
}
