use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use log::warn;

use super::{DatasetDescriptor, DatasetStats};
use crate::error::{Error, Result};
use crate::graph::{Graph, Labels};
use crate::tensor::Tensor;

/// A parsed content/cites pair.
#[derive(Clone, Debug)]
pub struct Citation {
    /// Undirected, coalesced, self-loop free, with node labels.
    pub graph: Graph,
    /// Original id of node `i`, in file order.
    pub node_ids: Vec<String>,
    /// Label string of class `c`, in order of first appearance.
    pub class_names: Vec<String>,
    /// Links naming a node absent from the content file.
    pub dangling: usize,
    pub self_loops: usize,
}

impl Citation {
    pub fn index_of(&self) -> HashMap<&str, usize> {
        self.node_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }

    pub fn stats(&self, train: usize) -> DatasetStats {
        DatasetStats::of(&self.graph, self.class_names.len(), train)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, line: usize, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

/// Parses a content file and a cites file.
pub fn read_citation(content: &Path, cites: &Path) -> Result<Citation> {
    let text = read(content)?;
    let mut node_ids = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut class_of: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let mut labels = Vec::new();
    let mut features = Vec::new();
    let mut width = None;

    for (k, line) in text.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() < 2 {
            return Err(format_err(content, k + 1, "expected `id features... label`"));
        }
        let (id, rest) = (tokens[0], &tokens[1..]);
        let (label, feats) = rest.split_last().expect("two or more tokens");
        match width {
            None => width = Some(feats.len()),
            Some(w) if w != feats.len() => {
                return Err(format_err(
                    content,
                    k + 1,
                    format!("{} features, earlier lines have {w}", feats.len()),
                ))
            }
            Some(_) => {}
        }
        for f in feats {
            let v: f64 = f
                .parse()
                .map_err(|_| format_err(content, k + 1, format!("bad feature value {f:?}")))?;
            features.push(v);
        }
        if index.insert(id.to_string(), node_ids.len()).is_some() {
            return Err(format_err(content, k + 1, format!("duplicate node id {id:?}")));
        }
        node_ids.push(id.to_string());
        let next = class_names.len();
        let c = *class_of.entry(label.to_string()).or_insert(next);
        if c == next {
            class_names.push(label.to_string());
        }
        labels.push(c);
    }

    let text = read(cites)?;
    let (mut src, mut dst) = (Vec::new(), Vec::new());
    let (mut dangling, mut self_loops) = (0, 0);
    for (k, line) in text.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[..] {
            [] => continue,
            [a, b] => match (index.get(a), index.get(b)) {
                (Some(&s), Some(&t)) if s == t => self_loops += 1,
                (Some(&s), Some(&t)) => {
                    src.push(s);
                    dst.push(t);
                }
                _ => dangling += 1,
            },
            _ => return Err(format_err(cites, k + 1, "expected `source target`")),
        }
    }
    if dangling > 0 {
        warn!("{}: dropped {dangling} links with unknown endpoints", cites.display());
    }

    let n = node_ids.len();
    let x = Tensor::new(n, width.unwrap_or(0), features)?;
    let graph = Graph::new(x, src, dst)?
        .to_undirected()
        .with_labels(Labels::Node(Arc::from(labels)))?;
    Ok(Citation {
        graph,
        node_ids,
        class_names,
        dangling,
        self_loops,
    })
}

/// Reads the dataset and checks it against the descriptor's statistics.
pub fn load_citation(desc: &DatasetDescriptor) -> Result<Citation> {
    let data = read_citation(&desc.content, &desc.cites)?;
    desc.check(&data.stats(0))?;
    Ok(data)
}
