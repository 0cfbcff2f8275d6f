//! TOML experiment configuration: one file describes the signals, the
//! models behind each transmission scheme, and the sweep grid.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: ExperimentCfg,
    #[serde(default)]
    pub signal: SignalCfg,
    #[serde(default)]
    pub inr: InrCfg,
    #[serde(default)]
    pub esc: EscCfg,
    #[serde(default)]
    pub field: FieldCfg,
    #[serde(default)]
    pub meta: MetaCfg,
    #[serde(default)]
    pub digital: DigitalCfg,
    #[serde(default)]
    pub adapt: AdaptCfg,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentCfg {
    /// One of: isc-analog, isc-meta, esc-analog, esc-adaptive,
    /// hsc-fieldgrid, digital-baseline.
    pub scheme: String,
    #[serde(default = "default_snrs")]
    pub snrs_db: Vec<f64>,
    #[serde(default = "default_budgets")]
    pub budgets: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// The SNR the digital reference is sized for in cliff reports.
    #[serde(default = "default_design_snr")]
    pub design_snr_db: f64,
    #[serde(default = "default_channel")]
    pub channel: String,
    #[serde(default = "default_block_len")]
    pub block_len: usize,
    /// Which network layers keep their symbols when the budget truncates an
    /// analog parameter transmission: earlier-first | later-first.
    #[serde(default = "default_truncation")]
    pub truncation: String,
    /// Master seed for model training; per-cell channel seeds derive from
    /// the sweep coordinates.
    #[serde(default)]
    pub seed: u64,
}

fn default_snrs() -> Vec<f64> {
    vec![10.0]
}

fn default_budgets() -> Vec<usize> {
    vec![2000]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_design_snr() -> f64 {
    10.0
}

fn default_channel() -> String {
    "awgn".to_string()
}

fn default_block_len() -> usize {
    64
}

fn default_truncation() -> String {
    "earlier-first".to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalCfg {
    /// blobs | stripes | constant | image (requires `path`).
    pub kind: String,
    #[serde(default = "default_size")]
    pub size: Vec<usize>,
    pub path: Option<String>,
    /// How many signals the set holds (seeded variants of `kind`).
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_value")]
    pub value: f64,
}

fn default_size() -> Vec<usize> {
    vec![32, 32]
}

fn default_count() -> usize {
    1
}

fn default_value() -> f64 {
    0.5
}

impl Default for SignalCfg {
    fn default() -> Self {
        SignalCfg {
            kind: "blobs".to_string(),
            size: default_size(),
            path: None,
            count: 1,
            seed: 0,
            value: 0.5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InrCfg {
    pub hidden: Vec<usize>,
    pub omega0: f64,
    /// none | fourier
    pub encoding: String,
    pub frequencies: usize,
    pub sigma: f64,
    pub steps: usize,
    pub lr: f64,
    pub batch: Option<usize>,
}

impl Default for InrCfg {
    fn default() -> Self {
        InrCfg {
            hidden: vec![64, 64],
            omega0: 30.0,
            encoding: "fourier".to_string(),
            frequencies: 32,
            sigma: 10.0,
            steps: 2000,
            lr: 1e-4,
            batch: Some(1024),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EscCfg {
    pub patch: usize,
    pub latent_dim: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub rate_lambda: f64,
    pub train_snr_db: f64,
    pub delta: f64,
}

impl Default for EscCfg {
    fn default() -> Self {
        EscCfg {
            patch: 4,
            latent_dim: 12,
            hidden: 48,
            epochs: 200,
            lr: 1e-3,
            rate_lambda: 1e-3,
            train_snr_db: 10.0,
            delta: 0.05,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldCfg {
    /// Vertex counts per level, coarse first; entries are per-axis sizes.
    pub levels: Vec<Vec<usize>>,
    pub features: usize,
    pub hidden: usize,
    pub steps: usize,
    pub lr: f64,
    pub rate_lambda: f64,
    pub delta: f64,
}

impl Default for FieldCfg {
    fn default() -> Self {
        FieldCfg {
            levels: vec![vec![5, 5], vec![9, 9], vec![17, 17]],
            features: 2,
            hidden: 32,
            steps: 1500,
            lr: 2e-3,
            rate_lambda: 1e-4,
            delta: 0.02,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaCfg {
    /// first-order-maml | reptile
    pub algorithm: String,
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub task_batch: usize,
    pub outer_iters: usize,
    /// Training tasks drawn from the signal family.
    pub tasks: usize,
    /// Adaptation steps a transmitter spends per instance.
    pub adapt_steps: usize,
}

impl Default for MetaCfg {
    fn default() -> Self {
        MetaCfg {
            algorithm: "first-order-maml".to_string(),
            inner_steps: 3,
            inner_lr: 5e-3,
            outer_lr: 2e-3,
            task_batch: 4,
            outer_iters: 300,
            tasks: 16,
            adapt_steps: 10,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DigitalCfg {
    pub bits_per_sample: u32,
}

impl Default for DigitalCfg {
    fn default() -> Self {
        DigitalCfg { bits_per_sample: 8 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptCfg {
    pub steps: usize,
    pub lr: f64,
    pub delta_u: f64,
    pub rd_lambda: f64,
}

impl Default for AdaptCfg {
    fn default() -> Self {
        AdaptCfg { steps: 40, lr: 1e-3, delta_u: 1e-4, rd_lambda: 1e-7 }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).context("malformed config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        const SCHEMES: [&str; 6] = [
            "isc-analog",
            "isc-meta",
            "esc-analog",
            "esc-adaptive",
            "hsc-fieldgrid",
            "digital-baseline",
        ];
        if !SCHEMES.contains(&self.experiment.scheme.as_str()) {
            bail!(
                "unknown scheme {:?}; expected one of {}",
                self.experiment.scheme,
                SCHEMES.join(", ")
            );
        }
        if self.experiment.snrs_db.is_empty()
            || self.experiment.budgets.is_empty()
            || self.experiment.seeds.is_empty()
        {
            bail!("snrs_db, budgets, and seeds must each be nonempty");
        }
        if self.experiment.snrs_db.iter().any(|s| s.is_nan()) {
            bail!("snrs_db must not contain NaN");
        }
        match self.experiment.channel.as_str() {
            "awgn" | "rayleigh" => {}
            other => bail!("unknown channel {other:?}; expected awgn or rayleigh"),
        }
        match self.experiment.truncation.as_str() {
            "earlier-first" | "later-first" => {}
            other => bail!("unknown truncation order {other:?}"),
        }
        match self.signal.kind.as_str() {
            "blobs" | "stripes" | "constant" => {}
            "image" => {
                if self.signal.path.is_none() {
                    bail!("signal.kind = \"image\" requires signal.path");
                }
            }
            other => bail!("unknown signal kind {other:?}"),
        }
        if self.signal.size.is_empty() || self.signal.size.len() > 2 {
            bail!("signal.size must have 1 or 2 axes");
        }
        if self.signal.count == 0 {
            bail!("signal.count must be positive");
        }
        if self.digital.bits_per_sample == 0 || self.digital.bits_per_sample > 16 {
            bail!("digital.bits_per_sample must be in 1..=16");
        }
        Ok(())
    }
}
