use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: usize,
    #[serde(rename = "SR")]
    pub sr: f64,
    #[serde(rename = "EE")]
    pub ee: f64,
    pub time_ms: f64,
    pub feasible: bool,
}

/// Per-sample metrics of one method under one system configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub method: String,
    pub system: String,
    pub samples: Vec<SampleRecord>,
    pub mean_sr: f64,
    pub mean_ee: f64,
    pub mean_time_ms: f64,
    pub median_time_ms: f64,
    pub all_feasible: bool,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        0.5 * (v[h - 1] + v[h])
    }
}

impl StrategyReport {
    pub fn new(method: String, system: String, samples: Vec<SampleRecord>) -> Self {
        let mut r = Self {
            method,
            system,
            samples,
            mean_sr: 0.0,
            mean_ee: 0.0,
            mean_time_ms: 0.0,
            median_time_ms: 0.0,
            all_feasible: true,
        };
        r.recompute();
        r
    }

    /// Refreshes the aggregates from the per-sample records.
    pub fn recompute(&mut self) {
        self.mean_sr = mean(self.samples.iter().map(|s| s.sr));
        self.mean_ee = mean(self.samples.iter().map(|s| s.ee));
        self.mean_time_ms = mean(self.samples.iter().map(|s| s.time_ms));
        self.median_time_ms = median(self.samples.iter().map(|s| s.time_ms).collect());
        self.all_feasible = self.samples.iter().all(|s| s.feasible);
    }

    /// The report with every timing zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.samples.iter_mut().for_each(|s| s.time_ms = 0.0);
        r.recompute();
        r
    }

    /// `sample_id,SR,EE,time_ms,feasible`
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        if self.samples.is_empty() {
            w.write_record(["sample_id", "SR", "EE", "time_ms", "feasible"])?;
        }
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Vec<SampleRecord>> {
        let mut r = csv::Reader::from_path(path)?;
        Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
    }
}
