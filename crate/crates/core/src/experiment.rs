//! Repeated node-classification runs and dataset summaries.

use std::io::Write;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{load_citation, make_split, Citation, DatasetDescriptor, DatasetStats, SplitKind, SplitSpec};
use crate::error::{Error, Result};
use crate::scatter::ExecutionMode;
use crate::train::{train_node_classifier, Hyper, Model, ModelKind, RunMetrics, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub model: ModelKind,
    pub dataset: String,
    pub root: PathBuf,
    pub split: SplitKind,
    pub runs: usize,
    /// Run `r` uses seed `seed + r`.
    pub seed: u64,
    /// Overrides the model's default epoch budget.
    pub epochs: Option<usize>,
    /// Sequential kernels and zeroed wall times, for byte-stable output.
    pub deterministic: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub seed: u64,
    pub metrics: RunMetrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub rows: Vec<RunRow>,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ExperimentResult {
    pub fn test_accuracies(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.metrics.test_acc).collect()
    }

    /// Mean test accuracy in percent.
    pub fn mean_test_percent(&self) -> f64 {
        100.0 * mean_std(&self.test_accuracies()).0
    }

    /// Header, one row per run, then a `mean ± std` summary row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let s = &self.spec;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "model",
            "dataset",
            "split_kind",
            "seed",
            "best_val_acc",
            "test_acc",
            "epochs_run",
            "wall_time_s",
        ])?;
        let wall = |m: &RunMetrics| if s.deterministic { 0.0 } else { m.wall_time_s };
        for r in &self.rows {
            let m = &r.metrics;
            w.write_record([
                s.model.as_str().to_string(),
                s.dataset.clone(),
                s.split.as_str().to_string(),
                r.seed.to_string(),
                format!("{:.6}", m.best_val_acc),
                format!("{:.6}", m.test_acc),
                m.epochs_run.to_string(),
                format!("{:.3}", wall(m)),
            ])?;
        }
        let pm = |f: &dyn Fn(&RunMetrics) -> f64, digits: usize| {
            let v: Vec<f64> = self.rows.iter().map(|r| f(&r.metrics)).collect();
            let (m, sd) = mean_std(&v);
            format!("{m:.digits$} ± {sd:.digits$}")
        };
        w.write_record([
            s.model.as_str().to_string(),
            s.dataset.clone(),
            s.split.as_str().to_string(),
            "mean ± std".to_string(),
            pm(&|m| m.best_val_acc, 4),
            pm(&|m| m.test_acc, 4),
            pm(&|m| m.epochs_run as f64, 1),
            pm(&|m| wall(m), 3),
        ])?;
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn load(spec: &ExperimentSpec) -> Result<(DatasetDescriptor, Citation)> {
    let desc = DatasetDescriptor::named(&spec.dataset, &spec.root)?;
    let data = load_citation(&desc)?;
    Ok((desc, data))
}

/// Trains `spec.runs` models with consecutive seeds. Features are
/// row-normalised before training.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    if spec.runs == 0 {
        return Err(Error::invalid("an experiment needs at least one run"));
    }
    let (desc, mut data) = load(spec)?;
    data.graph = data.graph.with_features(data.graph.x().row_normalized())?;
    let classes = data.class_names.len();
    let mut hyper = Hyper::for_kind(spec.model);
    if let Some(e) = spec.epochs {
        hyper.epochs = e;
    }
    let mode = if spec.deterministic {
        ExecutionMode::Sequential
    } else {
        ExecutionMode::Parallel
    };

    let mut rows = Vec::with_capacity(spec.runs);
    for r in 0..spec.runs as u64 {
        let seed = spec.seed.wrapping_add(r);
        let split = match spec.split {
            SplitKind::Fixed => SplitSpec::fixed(),
            SplitKind::Random => SplitSpec::random(seed),
        };
        let g = make_split(&data, &desc.split_dir, &split)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Model::new(spec.model, g.num_features(), classes, hyper, &mut rng)?;
        let cfg = TrainConfig {
            epochs: hyper.epochs,
            patience: hyper.patience,
            seed,
            mode,
        };
        let metrics = train_node_classifier(&mut model, &g, &cfg)?;
        log::info!(
            "{} {} {} seed {seed}: test {:.4} after {} epochs",
            spec.model.as_str(),
            spec.dataset,
            spec.split.as_str(),
            metrics.test_acc,
            metrics.epochs_run
        );
        rows.push(RunRow { seed, metrics });
    }
    Ok(ExperimentResult {
        spec: spec.clone(),
        rows,
    })
}

/// Statistics of a dataset; the label rate counts the fixed split's
/// training nodes, or 20 per class when no split files exist.
pub fn dataset_info(name: &str, root: &std::path::Path) -> Result<DatasetStats> {
    let desc = DatasetDescriptor::named(name, root)?;
    let data = load_citation(&desc)?;
    let train = match make_split(&data, &desc.split_dir, &SplitSpec::fixed()) {
        Ok(g) => g.masks().map_or(0, |m| m.train.len()),
        Err(Error::Io { .. }) => 20 * data.class_names.len(),
        Err(e) => return Err(e),
    };
    Ok(data.stats(train))
}

/// One-line rendering used by the `info` command.
pub fn format_info(name: &str, s: &DatasetStats) -> String {
    format!(
        "{name}: nodes={} edges={} features={} classes={} label_rate={:.3}",
        s.nodes, s.edges, s.features, s.classes, s.label_rate
    )
}
