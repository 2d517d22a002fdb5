//! Intrinsic evaluation: seeded train/test splits, precision/recall/F1 of the
//! positive class, cross-dialect transfer matrices and the training-size
//! ablation.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classifier::{train_forest, Forest, ForestParams, LabeledPair, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};

/// Published comparison numbers for the Bavarian lexeme dataset, as
/// (precision, recall, F1).
pub mod reference {
    pub const RANDOM_BASELINE: (f64, f64, f64) = (0.112, 0.341, 0.169);
    pub const MISTRAL_123B: (f64, f64, f64) = (0.443, 0.743, 0.555);
    pub const RANDOM_FOREST: (f64, f64, f64) = (0.646, 0.534, 0.585);
    /// Mean F1 when training on 10% of the training pool.
    pub const ABLATION_F1_AT_10PCT: f64 = 0.52;
    /// Mean F1 when training on the full training pool.
    pub const ABLATION_F1_AT_100PCT: f64 = 0.59;
}

/// Label of the multi-source row in transfer matrices.
pub const ALL_SOURCES: &str = "ALL";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_predictions(gold: &[bool], predicted: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&g, &p) in gold.iter().zip(predicted) {
            match (g, p) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }
}

/// Positive-class precision, recall and F1. Ratios with a zero denominator
/// are 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Confusion,
}

impl Metrics {
    pub fn from_confusion(counts: Confusion) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(counts.tp, counts.tp + counts.fp);
        let recall = ratio(counts.tp, counts.tp + counts.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            precision,
            recall,
            f1,
            counts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    /// Split each class separately so both sides keep the class ratio.
    pub stratify: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 1,
            stratify: false,
        }
    }
}

fn train_size(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

/// Seeded shuffle followed by a prefix/suffix cut. Both sides are non-empty.
pub fn split_dataset(data: &[LabeledPair], spec: &SplitSpec) -> Result<(Vec<LabeledPair>, Vec<LabeledPair>)> {
    if data.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 rows to split, got {}",
            data.len()
        )));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    let groups: Vec<Vec<usize>> = if spec.stratify {
        let (pos, neg): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| data[i].label);
        vec![neg, pos]
    } else {
        vec![(0..data.len()).collect()]
    };
    for mut group in groups {
        if group.is_empty() {
            continue;
        }
        group.shuffle(&mut rng);
        let cut = if group.len() < 2 {
            group.len()
        } else {
            train_size(group.len(), spec.train_fraction)
        };
        train_idx.extend_from_slice(&group[..cut]);
        test_idx.extend_from_slice(&group[cut..]);
    }
    if test_idx.is_empty() {
        // Only reachable when stratifying tiny single-row classes.
        test_idx.push(train_idx.pop().expect("at least two rows"));
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    Ok((pick(&train_idx), pick(&test_idx)))
}

/// Metrics of `forest` on `test` at the default threshold.
pub fn evaluate(forest: &Forest, test: &[LabeledPair]) -> Result<Metrics> {
    evaluate_at(forest, test, DEFAULT_THRESHOLD)
}

pub fn evaluate_at(forest: &Forest, test: &[LabeledPair], threshold: f64) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on an empty test set".into()));
    }
    let predicted: Vec<bool> = test
        .par_iter()
        .map(|p| forest.classify(&p.features, threshold))
        .collect::<Result<_>>()?;
    let gold: Vec<bool> = test.iter().map(|p| p.label).collect();
    Ok(Metrics::from_confusion(Confusion::from_predictions(&gold, &predicted)))
}

/// Seeded coin flip that predicts positive with probability `positive_rate`.
pub fn random_baseline(test: &[LabeledPair], positive_rate: f64, seed: u64) -> Metrics {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = positive_rate.clamp(0.0, 1.0);
    let predicted: Vec<bool> = test.iter().map(|_| rng.gen_bool(p)).collect();
    let gold: Vec<bool> = test.iter().map(|p| p.label).collect();
    Metrics::from_confusion(Confusion::from_predictions(&gold, &predicted))
}

/// Mean and sample standard deviation of precision, recall and F1 over
/// repeated runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f1_std: f64,
    pub runs: usize,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

impl MeanMetrics {
    pub fn aggregate(runs: &[Metrics]) -> Self {
        let col = |f: fn(&Metrics) -> f64| runs.iter().map(f).collect::<Vec<_>>();
        let (f1, f1_std) = mean_std(&col(|m| m.f1));
        MeanMetrics {
            precision: mean_std(&col(|m| m.precision)).0,
            recall: mean_std(&col(|m| m.recall)).0,
            f1,
            f1_std,
            runs: runs.len(),
        }
    }
}

/// Shared evaluation protocol settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub forest: ForestParams,
    pub train_fraction: f64,
    pub stratify: bool,
    pub threshold: f64,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            forest: ForestParams::default(),
            train_fraction: 0.8,
            stratify: false,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl Protocol {
    fn split(&self, data: &[LabeledPair], seed: u64) -> Result<(Vec<LabeledPair>, Vec<LabeledPair>)> {
        split_dataset(
            data,
            &SplitSpec {
                train_fraction: self.train_fraction,
                seed,
                stratify: self.stratify,
            },
        )
    }

    fn train(&self, data: &[LabeledPair], seed: u64) -> Result<Forest> {
        train_forest(
            data,
            &ForestParams {
                seed,
                ..self.forest.clone()
            },
        )
    }
}

/// Split with each seed, train on the training part, evaluate on the test
/// part, average over seeds.
pub fn train_eval(data: &[LabeledPair], seeds: &[u64], protocol: &Protocol) -> Result<(MeanMetrics, Vec<Metrics>)> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("seed list is empty".into()));
    }
    let runs: Vec<Metrics> = seeds
        .iter()
        .map(|&seed| {
            let (train, test) = protocol.split(data, seed)?;
            let forest = protocol.train(&train, seed)?;
            evaluate_at(&forest, &test, protocol.threshold)
        })
        .collect::<Result<_>>()?;
    Ok((MeanMetrics::aggregate(&runs), runs))
}

/// Source x target transfer results. `sources` ends with [`ALL_SOURCES`].
#[derive(Debug, Clone, PartialEq)]
pub struct CrossMatrix {
    pub sources: Vec<String>,
    pub targets: Vec<String>,
    /// `cells[s][t]`
    pub cells: Vec<Vec<MeanMetrics>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Precision,
    Recall,
    F1,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Precision => "precision",
            MetricKind::Recall => "recall",
            MetricKind::F1 => "f1",
        }
    }

    pub fn of(self, m: &MeanMetrics) -> f64 {
        match self {
            MetricKind::Precision => m.precision,
            MetricKind::Recall => m.recall,
            MetricKind::F1 => m.f1,
        }
    }
}

impl CrossMatrix {
    pub fn cell(&self, source: &str, target: &str) -> Option<&MeanMetrics> {
        let s = self.sources.iter().position(|x| x == source)?;
        let t = self.targets.iter().position(|x| x == target)?;
        Some(&self.cells[s][t])
    }

    /// Mean of the same-dialect cells.
    pub fn diagonal_mean(&self, kind: MetricKind) -> f64 {
        let vals: Vec<f64> = self
            .targets
            .iter()
            .filter_map(|t| self.cell(t, t))
            .map(|m| kind.of(m))
            .collect();
        mean_std(&vals).0
    }

    pub fn row_mean(&self, source: &str, kind: MetricKind) -> f64 {
        let vals: Vec<f64> = self
            .targets
            .iter()
            .filter_map(|t| self.cell(source, t))
            .map(|m| kind.of(m))
            .collect();
        mean_std(&vals).0
    }

    /// `train/test` header, then one row per source.
    pub fn write_tsv<W: Write>(&self, kind: MetricKind, mut out: W) -> std::io::Result<()> {
        writeln!(out, "train/test\t{}", self.targets.join("\t"))?;
        for (source, row) in self.sources.iter().zip(&self.cells) {
            let vals: Vec<String> = row.iter().map(|m| format!("{:.4}", kind.of(m))).collect();
            writeln!(out, "{source}\t{}", vals.join("\t"))?;
        }
        Ok(())
    }
}

/// Trains on each dialect's training split (and on the concatenation of all
/// training splits, the `ALL` row) and tests on every dialect's test split.
/// Each cell is averaged over `seeds`.
pub fn cross_dialect_matrix(
    datasets: &BTreeMap<String, Vec<LabeledPair>>,
    seeds: &[u64],
    protocol: &Protocol,
) -> Result<CrossMatrix> {
    if datasets.is_empty() {
        return Err(Error::InvalidArgument("no datasets given".into()));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("seed list is empty".into()));
    }
    let names: Vec<String> = datasets.keys().cloned().collect();

    // seed -> per-dialect (train, test)
    let splits: Vec<Vec<(Vec<LabeledPair>, Vec<LabeledPair>)>> = seeds
        .iter()
        .map(|&seed| {
            names
                .iter()
                .map(|name| {
                    protocol
                        .split(&datasets[name], seed)
                        .map_err(|e| e.context(format!("splitting {name}")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut sources = names.clone();
    sources.push(ALL_SOURCES.to_string());

    let jobs: Vec<(usize, usize)> = (0..seeds.len())
        .flat_map(|s| (0..sources.len()).map(move |src| (s, src)))
        .collect();
    let results: Vec<Vec<Metrics>> = jobs
        .par_iter()
        .map(|&(s, src)| {
            let train: Vec<LabeledPair> = if src < names.len() {
                splits[s][src].0.clone()
            } else {
                splits[s].iter().flat_map(|(train, _)| train.iter().cloned()).collect()
            };
            let forest = protocol
                .train(&train, seeds[s])
                .map_err(|e| e.context(format!("training on {}", sources[src])))?;
            names
                .iter()
                .enumerate()
                .map(|(t, target)| {
                    evaluate_at(&forest, &splits[s][t].1, protocol.threshold)
                        .map_err(|e| e.context(format!("{} -> {target}", sources[src])))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(sources.len());
    for src in 0..sources.len() {
        let row = (0..names.len())
            .map(|t| {
                let runs: Vec<Metrics> = (0..seeds.len())
                    .map(|s| results[s * sources.len() + src][t])
                    .collect();
                MeanMetrics::aggregate(&runs)
            })
            .collect();
        cells.push(row);
    }
    Ok(CrossMatrix {
        sources,
        targets: names,
        cells,
    })
}

/// One point of the training-size curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub fraction: f64,
    pub train_size: usize,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub runs: usize,
}

pub fn write_curve_tsv<W: Write>(curve: &[CurvePoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "fraction\ttrain_size\tmean_f1\tstd_f1\truns")?;
    for p in curve {
        writeln!(
            out,
            "{}\t{}\t{:.4}\t{:.4}\t{}",
            p.fraction, p.train_size, p.mean_f1, p.std_f1, p.runs
        )?;
    }
    Ok(())
}

/// Training-size ablation. The test split is drawn once with `split_seed`;
/// for every (fraction, seed) an independent subsample of the training pool
/// is drawn, a forest is trained with that seed and scored on the fixed test
/// split.
pub fn ablation_curve(
    data: &[LabeledPair],
    fractions: &[f64],
    seeds: &[u64],
    split_seed: u64,
    protocol: &Protocol,
) -> Result<Vec<CurvePoint>> {
    if fractions.is_empty() {
        return Err(Error::InvalidArgument("fraction list is empty".into()));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("seed list is empty".into()));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::InvalidArgument(format!("fraction {f} not in (0, 1]")));
    }
    let (pool, test) = protocol.split(data, split_seed)?;

    let jobs: Vec<(usize, u64)> = (0..fractions.len())
        .flat_map(|fi| seeds.iter().map(move |&s| (fi, s)))
        .collect();
    let runs: Vec<(usize, Metrics)> = jobs
        .par_iter()
        .map(|&(fi, seed)| {
            let fraction = fractions[fi];
            let size = ((pool.len() as f64 * fraction).round() as usize).clamp(1, pool.len());
            let train: Vec<LabeledPair> = if size == pool.len() {
                pool.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(fi as u64 + 1);
                let mut idx: Vec<usize> = (0..pool.len()).collect();
                idx.partial_shuffle(&mut rng, size);
                idx[..size].iter().map(|&i| pool[i].clone()).collect()
            };
            let forest = protocol.train(&train, seed)?;
            Ok((size, evaluate_at(&forest, &test, protocol.threshold)?))
        })
        .collect::<Result<_>>()?;

    Ok(fractions
        .iter()
        .enumerate()
        .map(|(fi, &fraction)| {
            let chunk = &runs[fi * seeds.len()..(fi + 1) * seeds.len()];
            let f1s: Vec<f64> = chunk.iter().map(|(_, m)| m.f1).collect();
            let (mean_f1, std_f1) = mean_std(&f1s);
            CurvePoint {
                fraction,
                train_size: chunk[0].0,
                mean_f1,
                std_f1,
                runs: chunk.len(),
            }
        })
        .collect())
}

/// Writes a one-row-per-model P/R/F1 table.
pub fn write_metrics_tsv<W: Write>(rows: &[(&str, Metrics)], mut out: W) -> std::io::Result<()> {
    writeln!(out, "model\tprecision\trecall\tf1\ttp\tfp\tfn\ttn")?;
    for (name, m) in rows {
        let c = m.counts;
        writeln!(
            out,
            "{name}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}\t{}\t{}",
            m.precision, m.recall, m.f1, c.tp, c.fp, c.fn_, c.tn
        )?;
    }
    Ok(())
}
