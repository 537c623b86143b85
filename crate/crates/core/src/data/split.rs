use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Citation;
use crate::error::{Error, Result};
use crate::graph::{Graph, Masks};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitKind {
    /// The published partition, read from the dataset's split files.
    Fixed,
    /// Class-balanced training nodes drawn with a seed.
    Random,
}

impl SplitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::Fixed => "fixed",
            SplitKind::Random => "random",
        }
    }
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(SplitKind::Fixed),
            "random" => Ok(SplitKind::Random),
            _ => Err(Error::invalid(format!("unknown split {s:?}, expected fixed or random"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub seed: u64,
    pub train_per_class: usize,
    pub val_size: usize,
    pub test_size: usize,
}

impl SplitSpec {
    pub fn fixed() -> Self {
        Self {
            kind: SplitKind::Fixed,
            ..Self::random(0)
        }
    }

    /// 20 training nodes per class, 500 validation, 1000 test.
    pub fn random(seed: u64) -> Self {
        Self {
            kind: SplitKind::Random,
            seed,
            train_per_class: 20,
            val_size: 500,
            test_size: 1000,
        }
    }
}

/// Reads `train.txt`, `val.txt` and `test.txt` of node ids from `dir`.
pub fn read_fixed_split(dir: &Path, data: &Citation) -> Result<Masks> {
    let index = data.index_of();
    let read = |file: &str| -> Result<Vec<usize>> {
        let path = dir.join(file);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut ids = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(k, l)| {
                index.get(l.trim()).copied().ok_or_else(|| Error::Format {
                    path: path.clone(),
                    line: k + 1,
                    detail: format!("unknown node id {:?}", l.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ids.sort_unstable();
        Ok(ids)
    };
    Ok(Masks {
        train: read("train.txt")?,
        val: read("val.txt")?,
        test: read("test.txt")?,
    })
}

/// Visits nodes in a seeded random order: the first `train_per_class` of
/// each class train, then `val_size` val and `test_size` test nodes from
/// the rest. Each mask is returned sorted.
pub fn random_masks(labels: &[usize], num_classes: usize, spec: &SplitSpec) -> Result<Masks> {
    let n = labels.len();
    let need = spec.train_per_class * num_classes + spec.val_size + spec.test_size;
    if need > n {
        return Err(Error::invalid(format!("split needs {need} nodes, graph has {n}")));
    }
    let mut per_class = vec![0usize; num_classes];
    for &c in labels {
        if c >= num_classes {
            return Err(Error::invalid(format!("label {c} not below {num_classes} classes")));
        }
        per_class[c] += 1;
    }
    if let Some(c) = per_class.iter().position(|&k| k < spec.train_per_class) {
        return Err(Error::invalid(format!(
            "class {c} has {} labelled nodes, split needs {}",
            per_class[c], spec.train_per_class
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut taken = vec![0usize; num_classes];
    let mut masks = Masks::default();
    let mut rest = Vec::with_capacity(n);
    for i in order {
        let c = labels[i];
        if taken[c] < spec.train_per_class {
            taken[c] += 1;
            masks.train.push(i);
        } else {
            rest.push(i);
        }
    }
    masks.val = rest[..spec.val_size].to_vec();
    masks.test = rest[spec.val_size..spec.val_size + spec.test_size].to_vec();
    for m in [&mut masks.train, &mut masks.val, &mut masks.test] {
        m.sort_unstable();
    }
    Ok(masks)
}

/// The dataset graph with the masks of `spec` attached.
pub fn make_split(data: &Citation, split_dir: &Path, spec: &SplitSpec) -> Result<Graph> {
    let masks = match spec.kind {
        SplitKind::Fixed => read_fixed_split(split_dir, data)?,
        SplitKind::Random => {
            let labels = data
                .graph
                .node_labels()
                .ok_or_else(|| Error::InvalidState("dataset has no node labels".into()))?;
            random_masks(labels, data.class_names.len(), spec)?
        }
    };
    data.graph.clone().with_masks(masks)
}
