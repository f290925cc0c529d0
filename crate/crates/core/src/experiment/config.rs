//! Experiment configuration and its validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eval::EvalConfig;
use crate::precoding::Structure;
use crate::qcqp::SolverConfig;
use crate::shaping::Method;
use crate::{Error, Result};

/// `(N_t, N_r, N_RF, n, L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub n_rf: usize,
    pub n_bits: usize,
    pub l_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelSource {
    /// `count` narrowband channels; channel `i` uses `mix(seed, i)`.
    Sampled {
        #[serde(default)]
        seed: Option<u64>,
        count: usize,
    },
    /// A channel JSON file.
    Fixture { path: PathBuf },
    /// The bundled 4x4 constant channel.
    Constant,
    /// `count` OFDM channels with `k_carriers` subcarriers each.
    Ofdm {
        #[serde(default)]
        seed: Option<u64>,
        k_carriers: usize,
        #[serde(default = "one")]
        count: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverConfig {
    pub n_rf_r: usize,
}

fn default_cap() -> usize {
    64
}

fn default_design_snr() -> f64 {
    20.0
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub structure: Structure,
    pub methods: Vec<Method>,
    pub channel_source: ChannelSource,
    #[serde(default)]
    pub eval: Option<EvalConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_cap")]
    pub candidate_cap: usize,
    #[serde(default)]
    pub receiver: Option<ReceiverConfig>,
    /// SNR (dB) used by the bound-criterion methods.
    #[serde(default = "default_design_snr")]
    pub design_snr_db: f64,
    /// Master seed; per-stage seeds derive from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(vec![format!("config: {e}")]))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form, ignoring `out_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let canonical = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Every violated field, or `Ok`.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let s = &self.system;
        if s.n_t < 1 || s.n_r < 1 {
            bad.push("system.n_t and system.n_r must be at least 1".to_string());
        }
        if s.n_rf < 1 {
            bad.push("system.n_rf must be at least 1".to_string());
        }
        if s.n_bits < 1 || s.n_bits > 16 {
            bad.push("system.n_bits must lie in 1..=16".to_string());
        }
        if s.l_paths < 1 {
            bad.push("system.l_paths must be at least 1".to_string());
        }
        let max_rank = match &self.channel_source {
            ChannelSource::Sampled { .. } | ChannelSource::Ofdm { .. } => s.n_t.min(s.n_r).min(s.l_paths),
            _ => s.n_t.min(s.n_r),
        };
        let max_rank = match self.receiver {
            Some(r) => max_rank.min(r.n_rf_r),
            None => max_rank,
        };
        if s.n_rf > max_rank {
            bad.push(format!(
                "system.n_rf = {} exceeds the largest possible channel rank {}",
                s.n_rf, max_rank
            ));
        }
        if self.structure == Structure::PartiallyConnected && s.n_rf > 0 && s.n_t % s.n_rf != 0 {
            bad.push(format!(
                "structure pch needs n_rf to divide n_t (n_t = {}, n_rf = {})",
                s.n_t, s.n_rf
            ));
        }
        if self.methods.is_empty() {
            bad.push("methods must not be empty".to_string());
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            bad.push("methods must not repeat".to_string());
        }
        match &self.channel_source {
            ChannelSource::Sampled { count, .. } if *count < 1 => {
                bad.push("channel_source.count must be at least 1".to_string())
            }
            ChannelSource::Ofdm { k_carriers, count, .. } => {
                if *k_carriers < 1 {
                    bad.push("channel_source.k_carriers must be at least 1".to_string());
                }
                if *count < 1 {
                    bad.push("channel_source.count must be at least 1".to_string());
                }
                if self.receiver.is_some() {
                    bad.push("receiver combining is not supported with ofdm channels".to_string());
                }
            }
            _ => {}
        }
        if let Some(r) = self.receiver {
            if r.n_rf_r < 1 || r.n_rf_r > s.n_r {
                bad.push(format!("receiver.n_rf_r must lie in 1..={}", s.n_r));
            }
        }
        if self.candidate_cap < 1 {
            bad.push("candidate_cap must be at least 1".to_string());
        }
        if !self.design_snr_db.is_finite() {
            bad.push("design_snr_db must be finite".to_string());
        }
        if let Err(Error::Validation(v)) = self.solver.validate() {
            bad.extend(v);
        }
        if let Some(e) = &self.eval {
            if let Err(Error::Validation(v)) = e.validate() {
                bad.extend(v);
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }
}
