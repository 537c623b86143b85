//! Optional TOML config. Every key mirrors a command line flag; a flag given
//! on the command line wins over the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub bench: BenchSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub name: Option<String>,
    pub root: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub nodes: Option<usize>,
    pub degrees: Option<Vec<f64>>,
    pub repeats: Option<usize>,
    pub features: Option<usize>,
    pub modes: Option<Vec<String>>,
    pub layouts: Option<Vec<String>>,
    pub warmup: Option<usize>,
    pub seed: Option<u64>,
    pub sequential: Option<bool>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub model: Option<String>,
    pub split: Option<String>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub deterministic: Option<bool>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}
