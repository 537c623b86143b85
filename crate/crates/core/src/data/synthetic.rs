//! Planted-partition stand-ins for citation datasets, written in the same
//! content/cites format the loader reads.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{random_masks, SplitSpec};
use crate::error::{Error, Result};
use crate::graph::{Graph, Labels, Masks};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantedCitation {
    pub nodes: usize,
    /// Exact number of distinct undirected links.
    pub edges: usize,
    pub features: usize,
    pub classes: usize,
    /// Probability that a link stays inside its source's class.
    pub homophily: f64,
    /// Active binary features per node.
    pub words_per_node: usize,
    /// Probability that an active feature comes from the node's class band.
    pub topic_strength: f64,
    pub seed: u64,
}

impl PlantedCitation {
    /// Same node, link, feature and class counts as Cora.
    pub fn cora_shaped(seed: u64) -> Self {
        Self {
            nodes: 2708,
            edges: 5278,
            features: 1433,
            classes: 7,
            homophily: 0.8,
            words_per_node: 18,
            topic_strength: 0.3,
            seed,
        }
    }

    /// Undirected coalesced graph with node labels.
    pub fn generate(&self) -> Result<Graph> {
        let n = self.nodes;
        let c = self.classes;
        if c == 0 || n < 2 * c || self.features < c || self.edges > n * (n - 1) / 4 {
            return Err(Error::invalid(format!("planted citation graph parameters out of range: {self:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let labels: Vec<usize> = (0..n).map(|i| if i < c { i } else { rng.random_range(0..c) }).collect();
        let mut members = vec![Vec::new(); c];
        for (i, &y) in labels.iter().enumerate() {
            members[y].push(i);
        }

        let band = self.features / c;
        let mut x = vec![0.0; n * self.features];
        for (i, &y) in labels.iter().enumerate() {
            for _ in 0..self.words_per_node {
                let f = if rng.random_bool(self.topic_strength) {
                    y * band + rng.random_range(0..band)
                } else {
                    rng.random_range(0..self.features)
                };
                x[i * self.features + f] = 1.0;
            }
        }

        let mut seen = HashSet::with_capacity(self.edges);
        let (mut src, mut dst) = (Vec::new(), Vec::new());
        while seen.len() < self.edges {
            let u = rng.random_range(0..n);
            let v = if rng.random_bool(self.homophily) {
                let m = &members[labels[u]];
                m[rng.random_range(0..m.len())]
            } else {
                rng.random_range(0..n)
            };
            if u != v && seen.insert((u.min(v), u.max(v))) {
                src.push(u);
                dst.push(v);
            }
        }
        Graph::new(Tensor::new(n, self.features, x)?, src, dst)?
            .to_undirected()
            .with_labels(Labels::Node(Arc::from(labels)))
    }

    /// Generates the graph and a seeded 20/500/1000 split (scaled down for
    /// small graphs), then writes `<root>/<name>/` in loader format.
    pub fn write(&self, root: &Path, name: &str) -> Result<Graph> {
        let g = self.generate()?;
        let mut spec = SplitSpec::random(self.seed);
        if spec.train_per_class * self.classes + spec.val_size + spec.test_size > self.nodes {
            spec.train_per_class = 2;
            spec.val_size = self.nodes / 4;
            spec.test_size = self.nodes / 4;
        }
        let masks = random_masks(g.node_labels().expect("labelled"), self.classes, &spec)?;
        write_citation(root, name, &g, Some(&masks))?;
        g.with_masks(masks)
    }
}

/// Writes node `i` as id `n{i}` with label `c{y}`. Undirected graphs emit
/// each link once.
pub fn write_citation(root: &Path, name: &str, g: &Graph, masks: Option<&Masks>) -> Result<()> {
    let dir = root.join(name);
    let labels = g
        .node_labels()
        .ok_or_else(|| Error::invalid("writing a citation dataset needs node labels"))?;
    let put = |path: &Path, text: String| std::fs::write(path, text).map_err(|e| Error::io(path, e));
    std::fs::create_dir_all(dir.join("split")).map_err(|e| Error::io(&dir, e))?;

    let mut content = String::new();
    for (i, y) in labels.iter().enumerate() {
        write!(content, "n{i}").unwrap();
        for v in g.x().row(i) {
            write!(content, " {v}").unwrap();
        }
        writeln!(content, " c{y}").unwrap();
    }
    put(&dir.join(format!("{name}.content")), content)?;

    let undirected = g.is_undirected();
    let mut cites = String::new();
    for (s, t) in g.edges().filter(|(s, t)| !undirected || s < t) {
        writeln!(cites, "n{s} n{t}").unwrap();
    }
    put(&dir.join(format!("{name}.cites")), cites)?;

    if let Some(m) = masks {
        for (file, ids) in [("train.txt", &m.train), ("val.txt", &m.val), ("test.txt", &m.test)] {
            let text: String = ids.iter().map(|i| format!("n{i}\n")).collect();
            put(&dir.join("split").join(file), text)?;
        }
    }
    Ok(())
}
