//! The three-stage network: placement, RIS phases, and hybrid beams.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::beamform;
use crate::channel::batch::{effective_channels, BatchGeometry};
use crate::error::{Error, Result};
use crate::feasible;
use crate::gnn::layers::{BnState, BnStats, Cfl, Cgal, Cgcl, LayerSpec};
use crate::gnn::{
    channel_feature_scale, fixed_positions, position_feature_scale, Bound, Dims, Mode, Output, ParamStore,
    SystemConfig,
};
use crate::scenario::SystemParams;

/// How beams are formed from the learned geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BeamHead {
    /// Learned hybrid ZF/MRT coefficients and powers.
    #[default]
    #[serde(rename = "hzm")]
    Hzm,
    /// Closed-form regularized ZF with uniform powers; no beam stage.
    #[serde(rename = "rzf")]
    Rzf,
}

impl BeamHead {
    pub fn label(self) -> &'static str {
        match self {
            Self::Hzm => "hzm",
            Self::Rzf => "rzf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub hidden: usize,
    #[serde(default = "one")]
    pub heads: usize,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub beams: BeamHead,
}

fn one() -> usize {
    1
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self { hidden: 64, heads: 1, system: SystemConfig::RisPa, beams: BeamHead::Hzm }
    }
}

/// Attention layers followed by fully connected layers, producing one
/// real number per user.
#[derive(Debug, Clone, PartialEq)]
struct Branch {
    cgal: Vec<Cgal>,
    cfl: Vec<Cfl>,
}

impl Branch {
    fn new(store: &mut ParamStore, name: &str, n: usize, h: usize, heads: usize) -> Self {
        let half = (h / 2).max(1);
        let cgal = vec![
            Cgal::new(store, &format!("{name}.cgal0"), n, h, heads),
            Cgal::new(store, &format!("{name}.cgal1"), h, h, heads),
            Cgal::new(store, &format!("{name}.cgal2"), h, h, heads),
        ];
        let widths = [(h, h), (h, h), (h, h), (h, half), (half, 1)];
        let cfl = widths
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| Cfl::new(store, &format!("{name}.cfl{i}"), a, b, i < 4, i < 4))
            .collect();
        Self { cgal, cfl }
    }

    fn specs(&self) -> Vec<LayerSpec> {
        self.cgal.iter().map(|l| l.spec.clone()).chain(self.cfl.iter().map(|l| l.spec.clone())).collect()
    }

    /// `[B, K]` pre-activation outputs.
    fn forward<'t>(&self, tape: &'t Tape, p: &Bound<'t>, v: Var<'t>, mode: Mode, bn: &mut Vec<BnStats>) -> Var<'t> {
        let (b, k) = (v.shape()[0], v.shape()[1]);
        let mut h = v;
        for l in &self.cgal {
            h = l.forward(p, h);
        }
        for l in &self.cfl {
            let (out, stats) = l.forward(tape, p, h, mode);
            h = out;
            bn.extend(stats);
        }
        h.reshape(&[b, k]).re()
    }
}

/// Graph network with up to three stages. Which stages exist depends on the
/// system configuration and beam head.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    pub config: GnnConfig,
    pub dims: Dims,
    pub store: ParamStore,
    stage1: Option<Vec<Cgcl>>,
    stage2: Option<Vec<Cgcl>>,
    stage3: Option<[Branch; 2]>,
}

fn cgcl_stack(store: &mut ParamStore, name: &str, din: usize, h: usize, dout: usize) -> Vec<Cgcl> {
    vec![
        Cgcl::new(store, &format!("{name}.cgcl0"), din, h, h),
        Cgcl::new(store, &format!("{name}.cgcl1"), h, h, h),
        Cgcl::new(store, &format!("{name}.cgcl2"), h, h, dout),
    ]
}

impl GnnModel {
    /// Untrained model with all parameters at zero; see
    /// [`crate::train::init_params`].
    pub fn new(config: GnnConfig, params: &SystemParams) -> Result<Self> {
        let dims = Dims::of(&config.system.apply(params));
        Self::with_dims(config, dims)
    }

    pub fn with_dims(config: GnnConfig, dims: Dims) -> Result<Self> {
        if config.hidden == 0 || config.heads == 0 {
            return Err(Error::InvalidParams("hidden width and head count must be positive".into()));
        }
        if config.system != SystemConfig::RisPa && dims.n_ris != 0 {
            return Err(Error::InvalidParams(format!("{} systems have no RIS", config.system.label())));
        }
        let (n, nm, l, h) = (dims.n_waveguides, dims.n_waveguides * dims.n_pas, dims.n_ris, config.hidden);
        let mut store = ParamStore::default();
        let stage1 = config.system.learns_placement().then(|| cgcl_stack(&mut store, "place", 3, h, nm));
        let stage2 = (l > 0).then(|| cgcl_stack(&mut store, "ris", n, h, l));
        let stage3 = (config.beams == BeamHead::Hzm).then(|| {
            [
                Branch::new(&mut store, "beam.alpha", n, h, config.heads),
                Branch::new(&mut store, "beam.power", n, h, config.heads),
            ]
        });
        let model = Self { config, dims, store, stage1, stage2, stage3 };
        for chain in model.layer_table() {
            LayerSpec::check_chain(&chain)?;
        }
        Ok(model)
    }

    /// Layer shapes of each stage (the beam stage contributes two chains).
    pub fn layer_table(&self) -> Vec<Vec<LayerSpec>> {
        let mut out = Vec::new();
        for s in [&self.stage1, &self.stage2].into_iter().flatten() {
            out.push(s.iter().map(|l| l.spec.clone()).collect());
        }
        if let Some(b) = &self.stage3 {
            out.extend(b.iter().map(|br| br.specs()));
        }
        out
    }

    pub fn has_beam_stage(&self) -> bool {
        self.stage3.is_some()
    }

    /// `[B, N, M]` positions from user coordinates.
    pub fn place<'t>(&self, tape: &'t Tape, p: &Bound<'t>, geo: &BatchGeometry, params: &SystemParams) -> Result<Var<'t>> {
        let (b, n, m) = (geo.batch, self.dims.n_waveguides, self.dims.n_pas);
        let Some(layers) = &self.stage1 else {
            return fixed_positions(tape, b, params);
        };
        let mut h = geo.users_var(tape).scale_re(position_feature_scale(params));
        for l in layers {
            h = l.forward(p, h);
        }
        let raw = h.re().mean(1, false).reshape(&[b, n, m]);
        Ok(super::placement_from_raw(raw, params))
    }

    /// `[B, L]` unit-modulus RIS coefficients from the channels at unit
    /// coefficients.
    pub fn ris<'t>(&self, p: &Bound<'t>, stage2_channels: Var<'t>, params: &SystemParams) -> Option<Var<'t>> {
        let layers = self.stage2.as_ref()?;
        let mut h = stage2_channels.scale_re(channel_feature_scale(params));
        for l in layers {
            h = l.forward(p, h);
        }
        Some(h.mean(1, false).unit_phase())
    }

    /// Everything downstream of the positions. Used directly when the
    /// positions are an external leaf.
    pub fn forward_from_positions<'t>(
        &self,
        tape: &'t Tape,
        p: &Bound<'t>,
        x: Var<'t>,
        geo: &BatchGeometry,
        params: &SystemParams,
        mode: Mode,
    ) -> Result<Output<'t>> {
        let ris = if self.stage2.is_some() {
            let z2 = effective_channels(tape, x, None, geo, params);
            self.ris(p, z2, params)
        } else {
            None
        };
        let z = effective_channels(tape, x, ris, geo, params);
        let mut bn = Vec::new();
        let (beams, alpha, power, jittered) = match &self.stage3 {
            Some([a_branch, p_branch]) => {
                let feats = z.scale_re(channel_feature_scale(params));
                let alpha = a_branch.forward(tape, p, feats, mode, &mut bn).sigmoid();
                let raw_p = p_branch.forward(tape, p, feats, mode, &mut bn);
                let power = feasible::batch::normalize_power(feasible::batch::raw_power(raw_p, params), params);
                let (w, jit) = beamform::batch::hzm(tape, z, alpha, power);
                (w, Some(alpha), Some(power), jit)
            }
            None => (beamform::batch::rzf_uniform(tape, z, params), None, None, vec![false; geo.batch]),
        };
        Ok(Output { positions: x, ris, channels: z, beams, alpha, power, jittered, bn })
    }

    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        p: &Bound<'t>,
        geo: &BatchGeometry,
        params: &SystemParams,
        mode: Mode,
    ) -> Result<Output<'t>> {
        self.dims.check(params)?;
        let x = self.place(tape, p, geo, params)?;
        self.forward_from_positions(tape, p, x, geo, params, mode)
    }

    fn cfl_mut(&mut self) -> impl Iterator<Item = &mut Cfl> {
        self.stage3.iter_mut().flat_map(|b| b.iter_mut()).flat_map(|br| br.cfl.iter_mut()).filter(|l| l.state.is_some())
    }

    /// Folds training-mode batch statistics into the running statistics.
    pub fn apply_bn(&mut self, stats: &[BnStats]) {
        for (layer, s) in self.cfl_mut().zip(stats) {
            layer.update_running(s);
        }
    }

    pub fn bn_states(&self) -> Vec<BnState> {
        self.stage3
            .iter()
            .flat_map(|b| b.iter())
            .flat_map(|br| br.cfl.iter())
            .filter_map(|l| l.state.clone())
            .collect()
    }

    pub fn set_bn_states(&mut self, states: &[BnState]) -> Result<()> {
        let count = self.bn_states().len();
        if states.len() != count {
            return Err(Error::ModelMismatch(format!("{} normalization states for {count} layers", states.len())));
        }
        for (layer, s) in self.cfl_mut().zip(states) {
            let d = layer.spec.out_dim;
            if s.mean_re.len() != d || s.var_re.len() != d || s.mean_im.len() != d || s.var_im.len() != d {
                return Err(Error::ModelMismatch("normalization state width".into()));
            }
            layer.state = Some(s.clone());
        }
        Ok(())
    }

    /// Convolution layers of the placement stage, if any.
    pub fn placement_layers(&self) -> Option<&[Cgcl]> {
        self.stage1.as_deref()
    }

    /// Attention layers of the two beam branches.
    pub fn attention_layers(&self) -> Vec<&Cgal> {
        self.stage3.iter().flat_map(|b| b.iter()).flat_map(|br| br.cgal.iter()).collect()
    }
}
