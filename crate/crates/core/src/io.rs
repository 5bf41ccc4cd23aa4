//! Versioned JSON documents for datasets, and content fingerprints.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scenario::{sample_dataset, Scenario, SystemParams};

pub const DATASET_FORMAT: &str = "ris-pass-dataset";
pub const DATASET_VERSION: u32 = 1;

/// SHA-256 of the canonical JSON encoding of `params`.
pub fn params_fingerprint(params: &SystemParams) -> String {
    let json = serde_json::to_vec(params).expect("parameters serialize");
    hex::encode(Sha256::digest(&json))
}

/// Scenarios together with the parameters and seed that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDoc {
    pub format: String,
    pub version: u32,
    pub params: SystemParams,
    pub params_fingerprint: String,
    pub base_seed: u64,
    pub scenarios: Vec<Scenario>,
}

impl DatasetDoc {
    pub fn generate(params: &SystemParams, base_seed: u64, count: usize) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            params: params.clone(),
            params_fingerprint: params_fingerprint(params),
            base_seed,
            scenarios: sample_dataset(params, base_seed, count),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(s)?;
        if doc.format != DATASET_FORMAT {
            return Err(Error::Format(format!("expected a `{DATASET_FORMAT}` document, found `{}`", doc.format)));
        }
        if doc.version != DATASET_VERSION {
            return Err(Error::Format(format!("dataset version {} is not supported", doc.version)));
        }
        if params_fingerprint(&doc.params) != doc.params_fingerprint {
            return Err(Error::Format("parameter fingerprint does not match".into()));
        }
        doc.params.validate()?;
        for s in &doc.scenarios {
            s.validate(&doc.params.clone().with_users(s.n_users()))?;
        }
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trips_exactly() {
        let p = SystemParams::desk_default();
        let doc = DatasetDoc::generate(&p, 7, 5).unwrap();
        let back = DatasetDoc::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(back, doc);
        assert_eq!(DatasetDoc::generate(&p, 7, 5).unwrap().to_json().unwrap(), doc.to_json().unwrap());
    }

    #[test]
    fn foreign_documents_are_rejected() {
        let p = SystemParams::desk_default();
        let mut doc = DatasetDoc::generate(&p, 1, 1).unwrap();
        doc.version = 99;
        assert!(matches!(DatasetDoc::from_json(&doc.to_json().unwrap()), Err(Error::Format(_))));
        let mut doc = DatasetDoc::generate(&p, 1, 1).unwrap();
        doc.params.height = 4.0;
        assert!(matches!(DatasetDoc::from_json(&doc.to_json().unwrap()), Err(Error::Format(_))));
    }

    #[test]
    fn fingerprint_tracks_every_field() {
        let p = SystemParams::desk_default();
        let mut q = p.clone();
        q.noise_power *= 1.0 + 1e-12;
        assert_ne!(params_fingerprint(&p), params_fingerprint(&q));
        assert_eq!(params_fingerprint(&p), params_fingerprint(&p.clone()));
    }
}
