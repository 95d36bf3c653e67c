//! Run configuration files.
//!
//! A run is described by one flat TOML document. Every key is optional except
//! `version`; unknown keys are rejected. Defaults: `mode = "diffeo"`,
//! `lr = 0.1`, `sigma = 0.1`, `epochs = 250`, `loss = "simplify"`,
//! `dims = [1]`, `ema_decay = 0.9`, `stop_eps = 0`, `val_every = 1`,
//! `record_clock = true`, `seed = 0`.
//!
//! ```toml
//! version = 1
//! shape = "circle"
//! n = 200
//! noise = 0.05
//! loss = "simplify-death"
//! dims = [1]
//! epochs = 250
//! trace_output = "trace.csv"
//! ```

use crate::error::{Error, Result};
use crate::generate::{generate, Shape};
use crate::io::{read_diagram, read_point_source, read_text};
use crate::losses::{BoxRegion, BoxRegularizer, LossFamily, LossSpec, Selection};
use crate::optimizer::{LossPipeline, Mode, OptimConfig, StopRule};
use crate::rips::PointCloud;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub version: u32,

    /// Point file (CSV, or OFF by extension). Exclusive with `shape`.
    pub input: Option<PathBuf>,
    /// Generated input: `circle`, `sphere` or `uniform-box`.
    pub shape: Option<String>,
    pub n: Option<usize>,
    pub noise: Option<f64>,
    /// Ambient dimension of `uniform-box` (default 2).
    pub box_dim: Option<usize>,

    pub output: Option<PathBuf>,
    pub flow_output: Option<PathBuf>,
    pub trace_output: Option<PathBuf>,

    pub mode: Option<Mode>,
    pub lr: Option<f64>,
    pub sigma: Option<f64>,
    pub subsample: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,

    pub loss: Option<LossFamily>,
    pub dims: Option<Vec<usize>>,
    pub top_k: Option<usize>,
    /// Target diagram CSV for `register`.
    pub target: Option<PathBuf>,
    pub box_lower: Option<f64>,
    pub box_upper: Option<f64>,
    pub box_weight: Option<f64>,
    pub max_radius: Option<f64>,

    /// `threshold`, `ema`, `increase` or `none`.
    pub stop: Option<String>,
    pub stop_eps: Option<f64>,
    pub ema_decay: Option<f64>,
    pub stop_delta: Option<f64>,
    pub val_reps: Option<usize>,
    pub val_every: Option<usize>,
    pub record_clock: Option<bool>,
}

impl RunConfigFile {
    pub fn new() -> Self {
        Self {
            version: CONFIG_VERSION,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_toml(&read_text(path)?).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Reads `input`, or generates the configured shape with `seed`.
    pub fn input_cloud(&self) -> Result<PointCloud> {
        match (&self.input, &self.shape) {
            (Some(_), Some(_)) => Err(Error::Config("set either `input` or `shape`, not both".into())),
            (Some(path), None) => read_point_source(path),
            (None, Some(shape)) => {
                let mut shape: Shape = shape.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
                if let (Shape::UniformBox(_), Some(d)) = (shape, self.box_dim) {
                    shape = Shape::UniformBox(d);
                }
                let n = self.n.ok_or_else(|| Error::Config("`shape` needs `n`".into()))?;
                generate(shape, n, self.noise.unwrap_or(0.0), self.seed())
            }
            (None, None) => Err(Error::Config("no input: set `input` or `shape`".into())),
        }
    }

    pub fn loss_spec(&self, dim: usize) -> Result<LossSpec> {
        let family = self.loss.unwrap_or(LossFamily::Simplify);
        let dims = self.dims.clone().unwrap_or_else(|| vec![1]);
        let target = match (family, &self.target) {
            (LossFamily::Register, Some(path)) => Some(read_diagram(path)?),
            (LossFamily::Register, None) => {
                return Err(Error::Config("loss `register` needs a `target` diagram".into()))
            }
            (_, Some(_)) => return Err(Error::Config("`target` is only used by loss `register`".into())),
            (_, None) => None,
        };
        let selection = match (self.top_k, family) {
            (Some(k), _) => Selection::TopK(k),
            (None, LossFamily::Augment) => Selection::TopK(1),
            (None, _) => Selection::All,
        };
        let mut spec = LossSpec::new(family, dims, selection, target)?;
        if let Some(weight) = self.box_weight {
            let lo = self.box_lower.unwrap_or(-1.0);
            let hi = self.box_upper.unwrap_or(1.0);
            spec = spec.with_regularizer(BoxRegularizer {
                region: BoxRegion::cube(dim, lo, hi)?,
                weight,
            });
        } else if self.box_lower.is_some() || self.box_upper.is_some() {
            return Err(Error::Config("box corners need `box_weight`".into()));
        }
        Ok(spec)
    }

    pub fn pipeline(&self, dim: usize) -> Result<LossPipeline> {
        if let Some(r) = self.max_radius {
            if !(r > 0.0) {
                return Err(Error::Config(format!("max_radius must be > 0, got {r}")));
            }
        }
        Ok(LossPipeline::new(self.loss_spec(dim)?).with_max_radius(self.max_radius))
    }

    pub fn stop_rule(&self) -> Result<StopRule> {
        let family = self.loss.unwrap_or(LossFamily::Simplify);
        let eps = self.stop_eps.unwrap_or(0.0);
        let rule = match self.stop.as_deref() {
            None if self.stop_eps.is_some() => StopRule::Threshold { eps },
            None => StopRule::default_for(family),
            Some("threshold") => StopRule::Threshold { eps },
            Some("ema") => StopRule::Ema {
                decay: self.ema_decay.unwrap_or(0.9),
                eps,
            },
            Some("increase") => StopRule::Increase {
                delta: self.stop_delta.unwrap_or(3.0),
            },
            Some("none") => StopRule::Never,
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown stop rule `{other}` (expected threshold, ema, increase or none)"
                )))
            }
        };
        Ok(rule)
    }

    pub fn optim_config(&self) -> Result<OptimConfig> {
        let defaults = OptimConfig::default();
        Ok(OptimConfig {
            mode: self.mode.unwrap_or(defaults.mode),
            lr: self.lr.unwrap_or(defaults.lr),
            sigma: self.sigma.unwrap_or(defaults.sigma),
            subsample: self.subsample,
            epochs: self.epochs.unwrap_or(defaults.epochs),
            stop: self.stop_rule()?,
            val_reps: self.val_reps,
            val_every: self.val_every.unwrap_or(1),
            seed: self.seed(),
            record_clock: self.record_clock.unwrap_or(true),
            ..defaults
        })
    }
}
