//! Key-value run configuration files.
//!
//! Format: one `key = value` per line, `#` starts a comment. Recognized keys
//! (all optional, command-line flags override):
//!
//! ```text
//! dims         = 100x300x10
//! geometry     = 10x10 | 20x20
//! epochs       = 1
//! seed         = 1
//! init         = gaussian-fan | glorot-uniform
//! mode         = oracle | snn | lockstep
//! learning     = true | false
//! snn-eval     = true | false
//! train-images = path/to/train-images-idx3-ubyte
//! train-labels = path/to/train-labels-idx1-ubyte
//! test-images  = path/to/t10k-images-idx3-ubyte
//! test-labels  = path/to/t10k-labels-idx1-ubyte
//! train-limit  = 60000
//! test-limit   = 10000
//! ```

use anyhow::{anyhow, bail, Context, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use synfire_core::circuit::Dims;
use synfire_core::dataio::Geometry;
use synfire_core::harness::{Mode, RunConfig};
use synfire_core::oracle::InitScheme;

/// Raw option bag from a config file.
#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    pub entries: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected key = value", path.display(), lineno + 1))?;
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        let known = [
            "dims", "geometry", "epochs", "seed", "init", "mode", "learning", "snn-eval",
            "train-images", "train-labels", "test-images", "test-labels", "train-limit",
            "test-limit",
        ];
        for key in entries.keys() {
            if !known.contains(&key.as_str()) {
                bail!("{}: unknown config key `{key}`", path.display());
            }
        }
        Ok(FileConfig { entries })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }
}

pub fn parse_dims(s: &str) -> Result<Dims> {
    let parts: Vec<&str> = s.split(['x', ',']).collect();
    if parts.len() != 3 {
        bail!("dims must be N_INxN_HIDxN_OUT, got `{s}`");
    }
    let v: Vec<usize> = parts
        .iter()
        .map(|p| p.trim().parse::<usize>().map_err(|_| anyhow!("bad dims component `{p}`")))
        .collect::<Result<_>>()?;
    Ok(Dims::new(v[0], v[1], v[2]))
}

fn parse_bool(s: &str) -> Result<bool> {
    match s {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => bail!("expected true/false, got `{s}`"),
    }
}

/// Shared command-line overrides for a run.
#[derive(clap::Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// Key-value config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Layer sizes as N_INxN_HIDxN_OUT, e.g. 400x400x10.
    #[arg(long)]
    pub dims: Option<String>,
    /// Input geometry: 20x20 or 10x10.
    #[arg(long)]
    pub geometry: Option<String>,
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weight initialization: gaussian-fan or glorot-uniform.
    #[arg(long)]
    pub init: Option<String>,
    /// Execution mode: oracle, snn, or lockstep.
    #[arg(long)]
    pub mode: Option<String>,
    /// Enable or disable plasticity during training frames.
    #[arg(long)]
    pub learning: Option<String>,
    /// Evaluate through the 4-step inference circuit instead of the
    /// closed-form pass.
    #[arg(long)]
    pub snn_eval: Option<String>,
    #[arg(long)]
    pub train_images: Option<PathBuf>,
    #[arg(long)]
    pub train_labels: Option<PathBuf>,
    #[arg(long)]
    pub test_images: Option<PathBuf>,
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
    /// Cap on training samples per epoch.
    #[arg(long)]
    pub train_limit: Option<usize>,
    /// Cap on evaluation samples.
    #[arg(long)]
    pub test_limit: Option<usize>,
}

impl RunArgs {
    /// Resolves defaults, config file, and flags into a run configuration.
    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let pick = |flag: &Option<String>, key: &str| -> Option<String> {
            flag.clone().or_else(|| file.get(key).map(str::to_string))
        };

        let geometry = match pick(&self.geometry, "geometry") {
            Some(s) => Geometry::parse(&s).ok_or_else(|| anyhow!("bad geometry `{s}`"))?,
            None => Geometry::Px20,
        };
        let dims = match pick(&self.dims, "dims") {
            Some(s) => parse_dims(&s)?,
            None => Dims::new(geometry.pixels(), 400, 10),
        };
        let mut cfg = RunConfig::new(dims, geometry);

        if let Some(s) = self.epochs.map(|v| v.to_string()).or_else(|| file.get("epochs").map(str::to_string)) {
            cfg.epochs = s.parse().with_context(|| format!("bad epochs `{s}`"))?;
        }
        if let Some(s) = self.seed.map(|v| v.to_string()).or_else(|| file.get("seed").map(str::to_string)) {
            cfg.seed = s.parse().with_context(|| format!("bad seed `{s}`"))?;
        }
        if let Some(s) = pick(&self.init, "init") {
            cfg.init = InitScheme::parse(&s).ok_or_else(|| anyhow!("bad init scheme `{s}`"))?;
        }
        if let Some(s) = pick(&self.mode, "mode") {
            cfg.mode = Mode::parse(&s).ok_or_else(|| anyhow!("bad mode `{s}`"))?;
        }
        if let Some(s) = pick(&self.learning, "learning") {
            cfg.learning = parse_bool(&s)?;
        }
        if let Some(s) = pick(&self.snn_eval, "snn-eval") {
            cfg.snn_eval = parse_bool(&s)?;
        }
        let path = |flag: &Option<PathBuf>, key: &str| -> Option<PathBuf> {
            flag.clone().or_else(|| file.get(key).map(PathBuf::from))
        };
        if let Some(p) = path(&self.train_images, "train-images") {
            cfg.train_images = p;
        }
        if let Some(p) = path(&self.train_labels, "train-labels") {
            cfg.train_labels = p;
        }
        if let Some(p) = path(&self.test_images, "test-images") {
            cfg.test_images = p;
        }
        if let Some(p) = path(&self.test_labels, "test-labels") {
            cfg.test_labels = p;
        }
        if let Some(v) = self.train_limit.or_else(|| file.get("train-limit").and_then(|s| s.parse().ok())) {
            cfg.train_limit = Some(v);
        }
        if let Some(v) = self.test_limit.or_else(|| file.get("test-limit").and_then(|s| s.parse().ok())) {
            cfg.test_limit = Some(v);
        }
        Ok(cfg)
    }
}
