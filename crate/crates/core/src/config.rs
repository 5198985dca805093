//! Pipeline configuration (TOML) and its content hash.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::btrank::IlsrOptions;
use crate::error::{Error, Result};
use crate::pointwise::BucketCounts;
use crate::rank_eval::TieRule;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub predictions: Option<PathBuf>,
    pub pointwise: Option<PathBuf>,
    pub pairwise: Option<PathBuf>,
    pub arguments: Option<PathBuf>,
}

/// An ensemble as declared in the config.
///
/// With `high_confidence = true` the listed models are candidates and only
/// those scoring more arguments as political than as NA become members.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleDef {
    pub id: String,
    pub members: Vec<String>,
    #[serde(default)]
    pub high_confidence: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairQuota {
    pub intra: usize,
    pub inter: usize,
}

impl Default for PairQuota {
    fn default() -> Self {
        PairQuota { intra: 44, inter: 22 }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_margin() -> f64 {
    0.25
}

fn default_threshold() -> f64 {
    0.5
}

fn default_baseline_samples() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub inputs: InputPaths,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub ensembles: Vec<EnsembleDef>,
    /// Scorer whose NA probabilities and mean scores drive bucketing, binning
    /// and the model side of the pair confidence partition.
    pub reference: Option<String>,
    /// Pointwise sampling design; sampling is skipped when absent.
    pub buckets: Option<BucketCounts>,
    #[serde(default)]
    pub pairs: PairQuota,
    #[serde(default)]
    pub bt: IlsrOptions,
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// NA probability above which a prediction counts as apolitical.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub tie_rule: TieRule,
    #[serde(default = "default_baseline_samples")]
    pub baseline_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: InputPaths::default(),
            output_dir: default_output_dir(),
            ensembles: Vec::new(),
            reference: None,
            buckets: None,
            pairs: PairQuota::default(),
            bt: IlsrOptions::default(),
            margin: default_margin(),
            threshold: default_threshold(),
            tie_rule: TieRule::default(),
            baseline_samples: default_baseline_samples(),
            seed: 0,
        }
    }
}

/// The settings that determine computed values; paths are excluded so that
/// relocating inputs or outputs keeps the hash.
#[derive(Serialize)]
struct HashedSettings<'a> {
    ensembles: &'a [EnsembleDef],
    reference: &'a Option<String>,
    buckets: &'a Option<BucketCounts>,
    pairs: &'a PairQuota,
    bt: &'a IlsrOptions,
    margin: f64,
    threshold: f64,
    tie_rule: &'a TieRule,
    baseline_samples: usize,
    seed: u64,
}

impl PipelineConfig {
    /// Parses a TOML config; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut cfg.inputs.predictions,
            &mut cfg.inputs.pointwise,
            &mut cfg.inputs.pairwise,
            &mut cfg.inputs.arguments,
        ]
        .into_iter()
        .flatten()
        {
            resolve(p);
        }
        resolve(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for e in &self.ensembles {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::Config(format!("ensemble {} defined twice", e.id)));
            }
            if e.members.is_empty() {
                return Err(Error::Config(format!("ensemble {} has no members", e.id)));
            }
            let distinct: BTreeSet<&String> = e.members.iter().collect();
            if distinct.len() != e.members.len() {
                return Err(Error::Config(format!("ensemble {} lists a member twice", e.id)));
            }
        }
        if !(self.margin > 0.0 && self.margin <= 0.5) {
            return Err(Error::Config(format!("margin {} outside (0, 0.5]", self.margin)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if !(self.bt.reg >= 0.0 && self.bt.reg.is_finite())
            || self.bt.tol.is_nan()
            || self.bt.tol <= 0.0
            || self.bt.max_iter == 0
        {
            return Err(Error::Config("bt needs reg >= 0, tol > 0 and max_iter >= 1".into()));
        }
        Ok(())
    }

    pub fn ensemble(&self, id: &str) -> Option<&EnsembleDef> {
        self.ensembles.iter().find(|e| e.id == id)
    }

    /// Canonical JSON of the hashed settings (sorted keys).
    pub fn settings_json(&self) -> serde_json::Value {
        serde_json::to_value(HashedSettings {
            ensembles: &self.ensembles,
            reference: &self.reference,
            buckets: &self.buckets,
            pairs: &self.pairs,
            bt: &self.bt,
            margin: self.margin,
            threshold: self.threshold,
            tie_rule: &self.tie_rule,
            baseline_samples: self.baseline_samples,
            seed: self.seed,
        })
        .expect("settings serialize")
    }

    /// Hex SHA-256 of the canonical settings JSON.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.settings_json()).expect("settings serialize");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(
            &path,
            r#"
seed = 9
reference = "E3"
[inputs]
predictions = "p.csv"
[[ensembles]]
id = "E3"
members = ["m1", "m2"]
high_confidence = true
[bt]
reg = 0.05
tol = 1e-9
max_iter = 50
"#,
        )
        .unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        cfg.validate().unwrap();
        assert_eq!(
            cfg.inputs.predictions.as_deref(),
            Some(dir.path().join("p.csv").as_path())
        );
        assert_eq!(cfg.bt.reg, 0.05);
        assert_eq!(cfg.pairs, PairQuota { intra: 44, inter: 22 });
        assert!(cfg.ensemble("E3").unwrap().high_confidence);
    }

    #[test]
    fn hash_ignores_paths_but_not_settings() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn rejects_bad_settings() {
        let mut c = PipelineConfig {
            margin: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.margin = 0.25;
        c.ensembles = vec![EnsembleDef {
            id: "E".into(),
            members: vec![],
            high_confidence: false,
        }];
        assert!(c.validate().is_err());
        assert!(toml::from_str::<PipelineConfig>("bogus = 1").is_err());
    }
}
