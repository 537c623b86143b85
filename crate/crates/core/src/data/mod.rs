//! Citation dataset ingestion and train/val/test splits.
//!
//! On disk a dataset `name` lives in `<root>/<name>/` as
//!
//! ```text
//! <name>.content   node_id f_1 ... f_F label     (one line per node)
//! <name>.cites     source_id target_id           (one line per link)
//! split/train.txt  node ids, one per line        (also val.txt, test.txt)
//! ```

mod citation;
mod split;
pub mod synthetic;

use std::path::{Path, PathBuf};

pub use citation::{load_citation, read_citation, Citation};
pub use split::{make_split, random_masks, read_fixed_split, SplitKind, SplitSpec};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Environment variable overriding [`default_root`].
pub const DATA_ROOT_ENV: &str = "GSNN_DATA_ROOT";

/// `$GSNN_DATA_ROOT`, or the `data/` directory of the source tree.
pub fn default_root() -> PathBuf {
    std::env::var_os(DATA_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

/// Published size of a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpectedStats {
    pub nodes: usize,
    /// Undirected links, each stored as two directed edges.
    pub edges: usize,
    pub features: usize,
    pub classes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetDescriptor {
    pub name: String,
    /// Checked against the loaded graph when present.
    pub expected: Option<ExpectedStats>,
    pub content: PathBuf,
    pub cites: PathBuf,
    pub split_dir: PathBuf,
}

/// Datasets known by name.
pub const KNOWN_DATASETS: [&str; 4] = ["cora", "citeseer", "pubmed", "toy"];

impl DatasetDescriptor {
    /// Descriptor of any dataset laid out as `<root>/<name>/<name>.{content,cites}`.
    pub fn at(root: &Path, name: &str, expected: Option<ExpectedStats>) -> Self {
        let dir = root.join(name);
        Self {
            name: name.to_string(),
            expected,
            content: dir.join(format!("{name}.content")),
            cites: dir.join(format!("{name}.cites")),
            split_dir: dir.join("split"),
        }
    }

    /// One of [`KNOWN_DATASETS`], case-insensitive.
    pub fn named(name: &str, root: &Path) -> Result<Self> {
        let name = name.to_ascii_lowercase();
        let stats = |nodes, edges, features, classes| {
            Some(ExpectedStats {
                nodes,
                edges,
                features,
                classes,
            })
        };
        let expected = match name.as_str() {
            "cora" => stats(2708, 5278, 1433, 7),
            "citeseer" => stats(3327, 4552, 3703, 6),
            "pubmed" => stats(19717, 44324, 500, 3),
            "toy" => stats(3, 1, 4, 2),
            other => {
                return Err(Error::invalid(format!(
                    "unknown dataset {other:?}, expected one of {KNOWN_DATASETS:?}"
                )))
            }
        };
        Ok(Self::at(root, &name, expected))
    }

    /// Fails unless `stats` equals the expected statistics exactly.
    pub fn check(&self, stats: &DatasetStats) -> Result<()> {
        let Some(e) = self.expected else { return Ok(()) };
        let pairs = [
            ("nodes", e.nodes, stats.nodes),
            ("edges", e.edges, stats.edges),
            ("features", e.features, stats.features),
            ("classes", e.classes, stats.classes),
        ];
        for (what, want, got) in pairs {
            if want != got {
                return Err(Error::InvalidState(format!(
                    "{}: expected {want} {what}, loaded {got}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Size of a loaded dataset in the units of the published table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetStats {
    pub nodes: usize,
    /// Undirected links (directed edges / 2, self-loops excluded).
    pub edges: usize,
    pub features: usize,
    pub classes: usize,
    /// Training nodes over all nodes.
    pub label_rate: f64,
}

impl DatasetStats {
    /// `train` is the number of labelled training nodes.
    pub fn of(g: &Graph, classes: usize, train: usize) -> Self {
        let loops = g.edges().filter(|(s, t)| s == t).count();
        Self {
            nodes: g.num_nodes(),
            edges: (g.num_edges() - loops) / 2,
            features: g.num_features(),
            classes,
            label_rate: if g.num_nodes() == 0 {
                0.0
            } else {
                train as f64 / g.num_nodes() as f64
            },
        }
    }
}
