//! Run configuration: one JSON document, hyperparameters at the top level.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ccfc_core::data::SplitRatios;
use ccfc_core::eval::{HitRate, DEFAULT_KS};
use ccfc_core::model::Hyperparams;
use ccfc_core::objectives::Variant;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

pub const SEED_ENV: &str = "CCFC_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub interactions: Option<PathBuf>,
    pub attributes: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    /// Dense sidecar file per dense field.
    pub dense: BTreeMap<String, PathBuf>,
    pub output: PathBuf,
    pub variant: Variant,
    pub split: SplitRatios,
    /// Seed of the item split; the training seed when absent.
    pub split_seed: Option<u64>,
    pub ks: Vec<usize>,
    pub hit_rate: HitRate,
    /// Worker threads for gradients and evaluation; 1 is the deterministic
    /// single-threaded mode.
    pub threads: usize,
    #[serde(flatten)]
    pub hyper: Hyperparams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            interactions: None,
            attributes: None,
            schema: None,
            dense: BTreeMap::new(),
            output: PathBuf::from("out"),
            variant: Variant::Full,
            split: SplitRatios::default(),
            split_seed: None,
            ks: DEFAULT_KS.to_vec(),
            hit_rate: HitRate::PerK,
            threads: 1,
            hyper: Hyperparams::default(),
        }
    }
}

impl RunConfig {
    /// Reads a config, rejecting unknown keys and resolving relative paths
    /// against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let raw: serde_json::Value = io::read_json(path)?;
        let known = serde_json::to_value(RunConfig::default()).expect("config serializes");
        if let (Some(obj), Some(known)) = (raw.as_object(), known.as_object()) {
            if let Some(k) = obj.keys().find(|k| !known.contains_key(*k)) {
                return Err(Error::format(path, format!("unknown config key {k:?}")));
            }
        }
        let mut cfg: RunConfig =
            serde_json::from_value(raw).map_err(|e| Error::format(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut cfg.interactions, &mut cfg.attributes, &mut cfg.schema]
            .into_iter()
            .flatten()
        {
            resolve(p);
        }
        cfg.dense.values_mut().for_each(resolve);
        resolve(&mut cfg.output);
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    /// Applies the `CCFC_SEED` override if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(s) = std::env::var(SEED_ENV) {
            self.hyper.seed = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={s:?} is not an integer")))?;
        }
        Ok(())
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed.unwrap_or(self.hyper.seed)
    }

    /// Checks settings and that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        ccfc_core::eval::validate_ks(&self.ks)?;
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        for (what, p) in [
            ("interactions", &self.interactions),
            ("attributes", &self.attributes),
            ("schema", &self.schema),
        ] {
            match p {
                None => return Err(Error::Config(format!("no {what} file configured"))),
                Some(p) if !p.is_file() => {
                    return Err(Error::Io {
                        path: p.clone(),
                        source: std::io::Error::new(
                            std::io::ErrorKind::NotFound,
                            format!("{what} file not found"),
                        ),
                    })
                }
                _ => {}
            }
        }
        for p in self.dense.values() {
            if !p.is_file() {
                return Err(Error::Io {
                    path: p.clone(),
                    source: std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        "dense file not found",
                    ),
                });
            }
        }
        Ok(())
    }
}
