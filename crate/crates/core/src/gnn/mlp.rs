//! Real-valued feed-forward baseline over the flattened user coordinates.
//! Its input width fixes the number of users.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::beamform;
use crate::channel::batch::{effective_channels, BatchGeometry};
use crate::error::{Error, Result};
use crate::feasible;
use crate::gnn::{fixed_positions, position_feature_scale, Bound, Dims, Init, Output, ParamStore, SystemConfig};
use crate::scenario::SystemParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: usize,
    /// Hidden layers.
    pub depth: usize,
    #[serde(default)]
    pub system: SystemConfig,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { hidden: 64, depth: 3, system: SystemConfig::RisPa }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub dims: Dims,
    pub n_users: usize,
    pub store: ParamStore,
    layers: Vec<(usize, usize)>,
}

impl MlpModel {
    pub fn new(config: MlpConfig, params: &SystemParams) -> Result<Self> {
        let dims = Dims::of(&config.system.apply(params));
        Self::with_dims(config, dims, params.n_users)
    }

    pub fn with_dims(config: MlpConfig, dims: Dims, k: usize) -> Result<Self> {
        if config.hidden == 0 || k == 0 {
            return Err(Error::InvalidParams("hidden width and user count must be positive".into()));
        }
        let mut widths = vec![3 * k];
        widths.extend(std::iter::repeat_n(config.hidden, config.depth));
        widths.push(Self::head_width(&config, dims, k));
        let mut store = ParamStore::default();
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                (
                    store.add_real(format!("mlp.l{i}.w"), &[w[0], w[1]], Init::KaimingReal { fan_in: w[0] }),
                    store.add_real(format!("mlp.l{i}.b"), &[w[1]], Init::Zeros),
                )
            })
            .collect();
        Ok(Self { config, dims, n_users: k, store, layers })
    }

    fn head_width(config: &MlpConfig, dims: Dims, k: usize) -> usize {
        let placement = if config.system.learns_placement() { dims.n_waveguides * dims.n_pas } else { 0 };
        placement + 2 * dims.n_ris + 2 * k
    }

    pub fn forward<'t>(&self, tape: &'t Tape, p: &Bound<'t>, geo: &BatchGeometry, params: &SystemParams) -> Result<Output<'t>> {
        self.dims.check(params)?;
        if geo.n_users != self.n_users {
            return Err(Error::ModelMismatch(format!("MLP trained for K = {}, got K = {}", self.n_users, geo.n_users)));
        }
        let (b, k) = (geo.batch, self.n_users);
        let (n, m, l) = (self.dims.n_waveguides, self.dims.n_pas, self.dims.n_ris);
        let mut h = geo.users_var(tape).scale_re(position_feature_scale(params)).reshape(&[b, 3 * k]);
        for (i, &(w, bias)) in self.layers.iter().enumerate() {
            h = h.matmul(p[w]).add(p[bias]);
            if i + 1 < self.layers.len() {
                h = h.relu_c();
            }
        }
        let mut at = 0;
        let mut take = |len: usize| -> Var<'t> {
            let v = h.narrow(1, at, len);
            at += len;
            v
        };
        let x = if self.config.system.learns_placement() {
            let raw = take(n * m).reshape(&[b, n, m]);
            super::placement_from_raw(raw, params)
        } else {
            fixed_positions(tape, b, params)?
        };
        let ris = (l > 0).then(|| {
            let re = take(l);
            let im = take(l);
            Var::complex(re, im).unit_phase()
        });
        let alpha = take(k).sigmoid();
        let power = feasible::batch::normalize_power(feasible::batch::raw_power(take(k), params), params);
        let z = effective_channels(tape, x, ris, geo, params);
        let (beams, jittered) = beamform::batch::hzm(tape, z, alpha, power);
        Ok(Output {
            positions: x,
            ris,
            channels: z,
            beams,
            alpha: Some(alpha),
            power: Some(power),
            jittered,
            bn: Vec::new(),
        })
    }
}
