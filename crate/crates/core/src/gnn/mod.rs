//! Complex-valued graph networks mapping user locations to a feasible
//! solution, plus a plain MLP baseline.
//!
//! Users are graph nodes. The placement stage reads user coordinates, the
//! RIS stage reads the effective channels with all RIS coefficients set to
//! one, and the beam stage reads the effective channels under the learned
//! RIS configuration. Every head ends in a map from the feasibility module,
//! so any parameter values give a feasible output.

pub mod checkpoint;
pub mod layers;
pub mod mlp;
pub mod model;

pub use layers::{BnState, BnStats, Cfl, Cgal, Cgcl, LayerKind, LayerSpec};
pub use mlp::{MlpConfig, MlpModel};
pub use model::{BeamHead, GnnConfig, GnnModel};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::channel::batch::BatchGeometry;
use crate::channel::PaPlacement;
use crate::error::{Error, Result};
use crate::feasible;
use crate::objective::{Beamformer, RisConfig, Solution};
use crate::scenario::SystemParams;

/// Which parts of the system are optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SystemConfig {
    /// Learned PA positions and RIS phases.
    #[default]
    #[serde(rename = "ris+pa")]
    RisPa,
    /// Learned PA positions, no RIS.
    #[serde(rename = "pa-only")]
    PaOnly,
    /// PAs at fixed positions, no RIS.
    #[serde(rename = "fixed-pa-only")]
    FixedPaOnly,
}

impl SystemConfig {
    pub const ALL: [SystemConfig; 3] = [Self::RisPa, Self::PaOnly, Self::FixedPaOnly];

    /// System parameters with the RIS removed where the configuration has
    /// none.
    pub fn apply(self, params: &SystemParams) -> SystemParams {
        match self {
            Self::RisPa => params.clone(),
            Self::PaOnly | Self::FixedPaOnly => params.clone().without_ris(),
        }
    }

    pub fn learns_placement(self) -> bool {
        self != Self::FixedPaOnly
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::RisPa => "ris+pa",
            Self::PaOnly => "pa-only",
            Self::FixedPaOnly => "fixed-pa-only",
        }
    }
}

impl std::str::FromStr for SystemConfig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ris+pa" | "ris-pa" | "rispa" => Ok(Self::RisPa),
            "pa-only" | "paonly" => Ok(Self::PaOnly),
            "fixed-pa-only" | "fixed" => Ok(Self::FixedPaOnly),
            _ => Err(Error::InvalidParams(format!("unknown system configuration `{s}`"))),
        }
    }
}

/// Antenna dimensions a model was built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_waveguides: usize,
    pub n_pas: usize,
    pub n_ris: usize,
}

impl Dims {
    pub fn of(params: &SystemParams) -> Self {
        Self { n_waveguides: params.n_waveguides, n_pas: params.n_pas_per_wg, n_ris: params.n_ris }
    }

    pub fn check(&self, params: &SystemParams) -> Result<()> {
        let have = Self::of(params);
        if have != *self {
            return Err(Error::ModelMismatch(format!("model built for {self:?}, system has {have:?}")));
        }
        Ok(())
    }
}

/// How a parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Init {
    Zeros,
    Ones,
    /// Complex Kaiming normal: real and imaginary parts each `N(0, 1/fan_in)`.
    Kaiming { fan_in: usize },
    /// Real Kaiming normal `N(0, 2/fan_in)`.
    KaimingReal { fan_in: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    /// Real parameters keep a zero imaginary part.
    pub real: bool,
    pub init: Init,
    pub value: Vec<C64>,
}

/// Flat list of learnable tensors; layers refer to them by index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    pub params: Vec<Param>,
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> usize {
        let real = matches!(init, Init::KaimingReal { .. });
        let n: usize = shape.iter().product();
        let fill = if init == Init::Ones { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
        self.params.push(Param { name: name.into(), shape: shape.to_vec(), real, init, value: vec![fill; n] });
        self.params.len() - 1
    }

    pub fn add_real(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> usize {
        let id = self.add(name, shape, init);
        self.params[id].real = true;
        id
    }

    /// Number of learnable real scalars (complex entries count twice).
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len() * if p.real { 1 } else { 2 }).sum()
    }

    /// Puts every parameter on `tape`, as gradient leaves when `trainable`.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> Bound<'t> {
        let vars = self
            .params
            .iter()
            .map(|p| match (trainable, p.real) {
                (true, false) => tape.var(&p.shape, p.value.clone()),
                (true, true) => tape.var_real(&p.shape, &p.value.iter().map(|z| z.re).collect::<Vec<_>>()),
                (false, false) => tape.constant(&p.shape, p.value.clone()),
                (false, true) => tape.constant_real(&p.shape, &p.value.iter().map(|z| z.re).collect::<Vec<_>>()),
            })
            .collect();
        Bound { vars }
    }
}

/// Parameters living on one tape.
pub struct Bound<'t> {
    pub vars: Vec<Var<'t>>,
}

impl<'t> std::ops::Index<usize> for Bound<'t> {
    type Output = Var<'t>;
    fn index(&self, i: usize) -> &Var<'t> {
        &self.vars[i]
    }
}

/// Batch normalization uses batch statistics in `Train` and running
/// statistics in `Eval`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything a forward pass produces, batched.
pub struct Output<'t> {
    /// `[B, N, M]`
    pub positions: Var<'t>,
    /// `[B, L]` unit-modulus coefficients; `None` without a RIS.
    pub ris: Option<Var<'t>>,
    /// `[B, K, N]` effective channels under the learned configuration.
    pub channels: Var<'t>,
    /// `[B, N, K]`
    pub beams: Var<'t>,
    /// `[B, K]` mixing coefficients and powers of hybrid beams.
    pub alpha: Option<Var<'t>>,
    pub power: Option<Var<'t>>,
    /// Samples whose ZF Gram matrix needed a diagonal load.
    pub jittered: Vec<bool>,
    /// Batch statistics of every normalization layer, in layer order.
    pub bn: Vec<BnStats>,
}

impl Output<'_> {
    /// Splits the batch into validated solutions.
    pub fn solutions(&self, params: &SystemParams) -> Result<Vec<Solution>> {
        let shape = self.positions.shape();
        let (b, n, m) = (shape[0], shape[1], shape[2]);
        let k = self.channels.shape()[1];
        let x = self.positions.real_values();
        let w = self.beams.value();
        let ris = self.ris.map(|r| r.value());
        let l = params.n_ris;
        (0..b)
            .map(|bi| {
                let placement = PaPlacement::from_flat(n, m, &x[bi * n * m..(bi + 1) * n * m]);
                let ris_cfg = match &ris {
                    Some(r) => RisConfig::from_coefficients(&r[bi * l..(bi + 1) * l]),
                    None => RisConfig::identity(l),
                };
                let beam = crate::linalg::CMat::from_row_slice(n, k, &w[bi * n * k..(bi + 1) * n * k]);
                Solution::new(placement, ris_cfg, Beamformer::new(beam), params)
            })
            .collect()
    }
}

/// Input scale for channel features, bringing entries of order `√η/H` to
/// order one.
pub fn channel_feature_scale(params: &SystemParams) -> f64 {
    params.height / params.derived().eta.sqrt()
}

/// Input scale for user coordinates.
pub fn position_feature_scale(params: &SystemParams) -> f64 {
    1.0 / params.region_length.max(params.region_width)
}

/// `[B, N, M]` positions from raw head outputs. The logit shift makes a
/// zero output tile the waveguide evenly with the spacing cap inactive; with
/// the cap active the last antenna sits at `D` and cannot move.
pub fn placement_from_raw<'t>(raw: Var<'t>, params: &SystemParams) -> Var<'t> {
    let shift = -(params.n_pas_per_wg as f64).ln();
    feasible::batch::spacing_to_positions(feasible::batch::raw_to_spacing(raw.shift_re(shift), params), params)
}

/// `[B, N, M]` constant fixed placement.
pub fn fixed_positions<'t>(tape: &'t Tape, batch: usize, params: &SystemParams) -> Result<Var<'t>> {
    let flat = crate::scenario::fixed_pa_placement(params)?.flat();
    let all: Vec<f64> = (0..batch).flat_map(|_| flat.iter().copied()).collect();
    Ok(tape.constant_real(&[batch, params.n_waveguides, params.n_pas_per_wg], &all))
}

/// A trainable model of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Gnn(GnnModel),
    Mlp(MlpModel),
}

impl Network {
    pub fn store(&self) -> &ParamStore {
        match self {
            Self::Gnn(m) => &m.store,
            Self::Mlp(m) => &m.store,
        }
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        match self {
            Self::Gnn(m) => &mut m.store,
            Self::Mlp(m) => &mut m.store,
        }
    }

    pub fn system(&self) -> SystemConfig {
        match self {
            Self::Gnn(m) => m.config.system,
            Self::Mlp(m) => m.config.system,
        }
    }

    pub fn dims(&self) -> Dims {
        match self {
            Self::Gnn(m) => m.dims,
            Self::Mlp(m) => m.dims,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Gnn(m) => format!("gnn-{}", m.config.beams.label()),
            Self::Mlp(_) => "mlp".into(),
        }
    }

    /// Full forward pass. `params` must already have the system
    /// configuration applied.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        bound: &Bound<'t>,
        geo: &BatchGeometry,
        params: &SystemParams,
        mode: Mode,
    ) -> Result<Output<'t>> {
        match self {
            Self::Gnn(m) => m.forward(tape, bound, geo, params, mode),
            Self::Mlp(m) => m.forward(tape, bound, geo, params),
        }
    }

    pub fn apply_bn(&mut self, stats: &[BnStats]) {
        if let Self::Gnn(m) = self {
            m.apply_bn(stats);
        }
    }

    pub fn bn_states(&self) -> Vec<BnState> {
        match self {
            Self::Gnn(m) => m.bn_states(),
            Self::Mlp(_) => Vec::new(),
        }
    }

    pub fn set_bn_states(&mut self, states: &[BnState]) -> Result<()> {
        match self {
            Self::Gnn(m) => m.set_bn_states(states),
            Self::Mlp(_) if states.is_empty() => Ok(()),
            Self::Mlp(_) => Err(Error::ModelMismatch("MLP has no normalization layers".into())),
        }
    }
}
