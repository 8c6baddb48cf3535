//! Run configuration: a versioned TOML file with one section per subcommand.
//! Unknown keys are rejected so a typo cannot silently change a run.

use anyhow::{bail, Context, Result};
use dpltm::simulate::{Censoring, GCase, SimDesign};
use dpltm::train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub fit: Option<FitSection>,
    #[serde(default)]
    pub infer: Option<InferSection>,
    #[serde(default)]
    pub evaluate: Option<EvaluateSection>,
    #[serde(default)]
    pub benchmark: Option<BenchmarkSection>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n: usize,
    pub r: f64,
    pub case: GCase,
    /// Target censoring rate resolved through the calibrated table.
    #[serde(default)]
    pub censoring_rate: Option<f64>,
    /// Explicit censoring bound; wins over `censoring_rate`.
    #[serde(default)]
    pub c0: Option<f64>,
    pub seed: u64,
    #[serde(default = "default_beta0")]
    pub beta0: Vec<f64>,
}

fn default_beta0() -> Vec<f64> {
    vec![1.0, -1.0]
}

impl SimulateSection {
    pub fn design(&self) -> Result<SimDesign<f64>> {
        let censoring = match (self.c0, self.censoring_rate) {
            (Some(c0), _) => Censoring::FixedC0(c0),
            (None, Some(rate)) => Censoring::TargetRate(rate),
            (None, None) => bail!("simulate needs either c0 or censoring_rate"),
        };
        let design = SimDesign {
            n: self.n,
            r: self.r,
            case: self.case,
            beta0: self.beta0.clone(),
            censoring,
            seed: self.seed,
        };
        design.validate()?;
        Ok(design)
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default = "default_r_candidates")]
    pub r_candidates: Vec<f64>,
    /// Split fractions; two entries (train/validation) or three (plus test).
    #[serde(default = "default_split")]
    pub split: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_epochs")]
    pub epochs: Vec<usize>,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: Vec<f64>,
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: Vec<usize>,
    #[serde(default = "default_hidden_width")]
    pub hidden_width: Vec<usize>,
    #[serde(default = "default_dropout")]
    pub dropout: Vec<f64>,
    /// Interior-knot counts to try; empty means `floor(n_train^(1/3))`.
    #[serde(default)]
    pub interior_knots: Vec<usize>,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_grad_clip")]
    pub grad_clip_norm: Option<f64>,
}

fn default_r_candidates() -> Vec<f64> {
    vec![0.0, 0.5, 1.0]
}
fn default_split() -> Vec<f64> {
    vec![0.8, 0.2]
}
fn default_epochs() -> Vec<usize> {
    vec![4000]
}
fn default_learning_rate() -> Vec<f64> {
    vec![2e-2]
}
fn default_hidden_layers() -> Vec<usize> {
    vec![2]
}
fn default_hidden_width() -> Vec<usize> {
    vec![20]
}
fn default_dropout() -> Vec<f64> {
    vec![0.1]
}
fn default_patience() -> usize {
    300
}
fn default_grad_clip() -> Option<f64> {
    Some(0.5)
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            r_candidates: default_r_candidates(),
            split: default_split(),
            seed: 0,
            epochs: default_epochs(),
            learning_rate: default_learning_rate(),
            hidden_layers: default_hidden_layers(),
            hidden_width: default_hidden_width(),
            dropout: default_dropout(),
            interior_knots: Vec::new(),
            patience: default_patience(),
            grad_clip_norm: default_grad_clip(),
        }
    }
}

impl FitSection {
    /// Expand the per-axis candidate lists into the full grid, in a fixed
    /// nested order (epochs, lr, layers, width, dropout, knots).
    pub fn grid(&self, n_train: usize, seed: u64) -> Result<Vec<TrainConfig<f64>>> {
        if self.split.len() < 2 || self.split.len() > 3 {
            bail!("fit.split needs two or three fractions");
        }
        let knot_choices: Vec<usize> = if self.interior_knots.is_empty() {
            vec![dpltm::train::default_interior_knots(n_train)]
        } else {
            self.interior_knots.clone()
        };
        let mut grid = Vec::new();
        for &epochs in &self.epochs {
            for &lr in &self.learning_rate {
                for &layers in &self.hidden_layers {
                    for &width in &self.hidden_width {
                        for &dropout in &self.dropout {
                            for &knots in &knot_choices {
                                let mut config = TrainConfig::new(seed);
                                config.epochs = epochs;
                                config.learning_rate = lr;
                                config.hidden_layers = layers;
                                config.hidden_width = width;
                                config.dropout_rate = dropout;
                                config.interior_knots = knots;
                                config.patience = self.patience;
                                config.grad_clip_norm = self.grad_clip_norm;
                                grid.push(config);
                            }
                        }
                    }
                }
            }
        }
        if grid.is_empty() {
            bail!("fit grid is empty");
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InferSection {
    #[serde(default = "default_infer_epochs")]
    pub epochs: usize,
    #[serde(default = "default_infer_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_infer_layers")]
    pub hidden_layers: usize,
    #[serde(default = "default_infer_width")]
    pub hidden_width: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_infer_epochs() -> usize {
    100
}
fn default_infer_lr() -> f64 {
    2e-3
}
fn default_infer_layers() -> usize {
    2
}
fn default_infer_width() -> usize {
    10
}

impl Default for InferSection {
    fn default() -> Self {
        Self {
            epochs: default_infer_epochs(),
            learning_rate: default_infer_lr(),
            hidden_layers: default_infer_layers(),
            hidden_width: default_infer_width(),
            seed: 0,
        }
    }
}

impl InferSection {
    pub fn direction_config(&self, seed: u64) -> dpltm::inference::DirectionConfig<f64> {
        let mut config = dpltm::inference::DirectionConfig::new(seed);
        config.epochs = self.epochs;
        config.learning_rate = self.learning_rate;
        config.hidden_layers = self.hidden_layers;
        config.hidden_width = self.hidden_width;
        config
    }
}

/// Horizon at which to compute the calibration index: a percentile label of
/// the observed event times or an explicit time.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Horizon {
    Label(String),
    Time(f64),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    #[serde(default = "default_horizons")]
    pub t0: Vec<Horizon>,
    #[serde(default = "default_wise_grid")]
    pub wise_grid_size: usize,
}

fn default_horizons() -> Vec<Horizon> {
    vec![
        Horizon::Label("t25".into()),
        Horizon::Label("t50".into()),
        Horizon::Label("t75".into()),
    ]
}
fn default_wise_grid() -> usize {
    10_000
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            t0: default_horizons(),
            wise_grid_size: default_wise_grid(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub replications: usize,
    /// Test-sample size per replicate (the simulation design's `n` is the
    /// fitting-sample size).
    pub n_test: usize,
    /// Worker threads; the `--threads` flag overrides. Zero means all cores.
    #[serde(default)]
    pub threads: usize,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        if config.version != SCHEMA_VERSION {
            bail!(
                "config schema version {} is not supported (expected {SCHEMA_VERSION})",
                config.version
            );
        }
        Ok((config, text))
    }
}
