//! JSON checkpoints: every parameter tensor, normalization statistics, the
//! layer table and a fingerprint of the system parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gnn::{BnState, Dims, GnnConfig, GnnModel, LayerSpec, MlpConfig, MlpModel, Network, Param, ParamStore};
use crate::io::params_fingerprint;
use crate::scenario::SystemParams;

pub const CHECKPOINT_FORMAT: &str = "ris-pass-model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    Gnn { config: GnnConfig },
    Mlp { config: MlpConfig, n_users: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub dims: Dims,
    /// System parameters the model was trained under.
    pub params: SystemParams,
    pub params_fingerprint: String,
    pub layers: Vec<Vec<LayerSpec>>,
    pub tensors: Vec<Param>,
    pub batch_norm: Vec<BnState>,
    /// SHA-256 over tensor names, shapes and values.
    pub digest: String,
}

/// Content hash of a parameter store.
pub fn store_digest(store: &ParamStore) -> String {
    let mut h = Sha256::new();
    for p in &store.params {
        h.update(p.name.as_bytes());
        for &d in &p.shape {
            h.update((d as u64).to_le_bytes());
        }
        for z in &p.value {
            h.update(z.re.to_le_bytes());
            h.update(z.im.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn layer_table(net: &Network) -> Vec<Vec<LayerSpec>> {
    match net {
        Network::Gnn(m) => m.layer_table(),
        Network::Mlp(_) => Vec::new(),
    }
}

impl Checkpoint {
    pub fn capture(net: &Network, params: &SystemParams) -> Self {
        let architecture = match net {
            Network::Gnn(m) => Architecture::Gnn { config: m.config.clone() },
            Network::Mlp(m) => Architecture::Mlp { config: m.config.clone(), n_users: m.n_users },
        };
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            architecture,
            dims: net.dims(),
            params: params.clone(),
            params_fingerprint: params_fingerprint(params),
            layers: layer_table(net),
            tensors: net.store().params.clone(),
            batch_norm: net.bn_states(),
            digest: store_digest(net.store()),
        }
    }

    /// Rebuilds the network, checking format, integrity and every tensor
    /// shape against a freshly constructed model of the same architecture.
    pub fn restore(&self) -> Result<Network> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("expected a `{CHECKPOINT_FORMAT}` document, found `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("checkpoint version {} is not supported", self.version)));
        }
        if params_fingerprint(&self.params) != self.params_fingerprint {
            return Err(Error::Format("parameter fingerprint does not match".into()));
        }
        let mut net = match &self.architecture {
            Architecture::Gnn { config } => Network::Gnn(GnnModel::with_dims(config.clone(), self.dims)?),
            Architecture::Mlp { config, n_users } => Network::Mlp(MlpModel::with_dims(config.clone(), self.dims, *n_users)?),
        };
        if layer_table(&net) != self.layers {
            return Err(Error::ModelMismatch("layer table differs from the architecture".into()));
        }
        let store = net.store_mut();
        if store.params.len() != self.tensors.len() {
            return Err(Error::ModelMismatch(format!(
                "checkpoint has {} tensors, architecture needs {}",
                self.tensors.len(),
                store.params.len()
            )));
        }
        for (want, got) in store.params.iter_mut().zip(&self.tensors) {
            let numel: usize = got.shape.iter().product();
            if want.name != got.name || want.shape != got.shape || want.real != got.real || got.value.len() != numel {
                return Err(Error::ModelMismatch(format!("tensor `{}` {:?} vs `{}` {:?}", got.name, got.shape, want.name, want.shape)));
            }
            want.value.clone_from(&got.value);
        }
        if store_digest(store) != self.digest {
            return Err(Error::Format("tensor digest does not match".into()));
        }
        net.set_bn_states(&self.batch_norm)?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Saves `net` with the parameters it was trained under.
pub fn save_network(net: &Network, params: &SystemParams, path: &Path) -> Result<()> {
    Checkpoint::capture(net, params).save(path)
}

/// Loads a network and the parameters stored with it.
pub fn load_network(path: &Path) -> Result<(Network, SystemParams)> {
    let ck = Checkpoint::load(path)?;
    let net = ck.restore()?;
    Ok((net, ck.params))
}
