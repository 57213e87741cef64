//! One-vs-rest linear SVMs and leave-one-actor-out evaluation.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{Error, Result};

/// A video's encoding with its class and the actor who performed it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVideo {
    pub clip_id: String,
    pub label: String,
    pub actor: String,
    pub fv: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: 1.0, epochs: 50, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub labels: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn scores(&self, fv: &[f64]) -> Result<Vec<f64>> {
        if fv.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("vector of length {} for a model of dimension {}", fv.len(), self.dim())));
        }
        Ok(self.weights.iter().zip(&self.biases).map(|(w, b)| w.iter().zip(fv).map(|(a, x)| a * x).sum::<f64>() + b).collect())
    }
}

/// Binary hinge-loss SVM by averaged stochastic subgradient descent
/// (step `1/(λt)`, `λ = 1/(C·n)`); the bias is an extra regularized weight on
/// a constant feature. Iterates of the second half of training are averaged.
fn train_binary(xs: &[&[f64]], ys: &[f64], params: &SvmParams, seed: u64) -> (Vec<f64>, f64) {
    let d = xs[0].len();
    let n = xs.len();
    let lambda = 1.0 / (params.c * n as f64);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut avg_w = vec![0.0; d];
    let mut avg_b = 0.0;
    let mut averaged = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let avg_from = params.epochs / 2;
    let mut t = 0usize;
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let x = xs[i];
            let margin = ys[i] * (w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b);
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|a| *a *= shrink);
            b *= shrink;
            if margin < 1.0 {
                let step = eta * ys[i];
                w.iter_mut().zip(x).for_each(|(a, v)| *a += step * v);
                b += step;
            }
            if epoch >= avg_from {
                averaged += 1;
                let k = 1.0 / averaged as f64;
                avg_w.iter_mut().zip(&w).for_each(|(a, v)| *a += (v - *a) * k);
                avg_b += (b - avg_b) * k;
            }
        }
    }
    if averaged == 0 {
        return (w, b);
    }
    (avg_w, avg_b)
}

/// One-vs-rest linear SVMs; classes are ordered by label.
pub fn train(examples: &[LabeledVideo], params: &SvmParams) -> Result<SvmModel> {
    if examples.is_empty() {
        return Err(Error::InsufficientData("no training examples".into()));
    }
    if !(params.c > 0.0) || params.epochs == 0 {
        return Err(Error::InvalidArgument(format!("SVM needs C > 0 and epochs >= 1 (got {}, {})", params.c, params.epochs)));
    }
    let d = examples[0].fv.len();
    if d == 0 || examples.iter().any(|e| e.fv.len() != d) {
        return Err(Error::DimensionMismatch("training vectors differ in length".into()));
    }
    if examples.iter().any(|e| e.fv.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidArgument("non-finite training vector".into()));
    }
    let labels: Vec<String> = examples.iter().map(|e| e.label.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    if labels.len() < 2 {
        return Err(Error::InsufficientData(format!("training needs at least 2 classes, got {}", labels.len())));
    }
    let xs: Vec<&[f64]> = examples.iter().map(|e| e.fv.as_slice()).collect();
    let per_class: Vec<(Vec<f64>, f64)> = labels
        .par_iter()
        .enumerate()
        .map(|(ci, label)| {
            let ys: Vec<f64> = examples.iter().map(|e| if &e.label == label { 1.0 } else { -1.0 }).collect();
            train_binary(&xs, &ys, params, params.seed.wrapping_add(ci as u64))
        })
        .collect();
    let (weights, biases) = per_class.into_iter().unzip();
    Ok(SvmModel { labels, weights, biases })
}

/// Class with the highest score; the earliest class wins ties.
pub fn predict(model: &SvmModel, fv: &[f64]) -> Result<String> {
    let scores = model.scores(fv)?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(model.labels[best].clone())
}

/// Counts with rows for the actual class and columns for the prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let c = labels.len();
        Self { labels, counts: vec![vec![0; c]; c] }
    }

    fn index(&self, label: &str) -> Result<usize> {
        self.labels.iter().position(|l| l == label).ok_or_else(|| Error::InvalidArgument(format!("unknown class `{label}`")))
    }

    pub fn record(&mut self, actual: &str, predicted: &str) -> Result<()> {
        let (a, p) = (self.index(actual)?, self.index(predicted)?);
        self.counts[a][p] += 1;
        Ok(())
    }

    /// Elementwise sum with a matrix over the same classes.
    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::DimensionMismatch("confusion matrices over different classes".into()));
        }
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            row.iter_mut().zip(orow).for_each(|(a, b)| *a += b);
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// CSV with a header row of predicted labels and a leading column of actual labels.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("actual\\predicted");
        for l in &self.labels {
            write!(out, ",{l}").unwrap();
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            out.push_str(l);
            for c in row {
                write!(out, ",{c}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty confusion matrix".into()))?;
        let labels: Vec<String> = header.split(',').skip(1).map(|s| s.trim().to_string()).collect();
        let mut cm = ConfusionMatrix::new(labels);
        for (r, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if r >= cm.labels.len() || fields.len() != cm.labels.len() + 1 || fields[0] != cm.labels[r] {
                return Err(Error::Parse(format!("confusion matrix row {} does not match the header", r + 1)));
            }
            for (c, f) in fields[1..].iter().enumerate() {
                cm.counts[r][c] = f.parse().map_err(|e| Error::Parse(format!("confusion matrix cell `{f}`: {e}")))?;
            }
        }
        Ok(cm)
    }
}

/// Fraction of correctly classified samples.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InsufficientData("empty confusion matrix".into()));
    }
    let trace: u64 = (0..cm.labels.len()).map(|i| cm.counts[i][i]).sum();
    Ok(trace as f64 / total as f64)
}

/// One fold per actor, in actor order: `(actor, training indices, test indices)`.
pub fn actor_folds(actors: &[String]) -> Vec<(String, Vec<usize>, Vec<usize>)> {
    let unique: BTreeSet<&String> = actors.iter().collect();
    unique
        .into_iter()
        .map(|a| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..actors.len()).partition(|&i| &actors[i] == a);
            (a.clone(), train, test)
        })
        .collect()
}

/// Leave-one-actor-out evaluation with a caller-supplied fold procedure.
/// `fold(train, test)` must return one predicted label per test index and may
/// only look at the training items. Fold matrices are summed.
pub fn leave_one_actor_out_by<F>(labels: &[String], actors: &[String], fold: F) -> Result<ConfusionMatrix>
where
    F: Fn(&[usize], &[usize]) -> Result<Vec<String>> + Sync,
{
    if labels.len() != actors.len() {
        return Err(Error::DimensionMismatch("one actor per video required".into()));
    }
    let classes: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let folds = actor_folds(actors);
    if folds.len() < 2 {
        return Err(Error::InsufficientData(format!("leave-one-actor-out needs 2 actors, got {}", folds.len())));
    }
    for (actor, train, _) in &folds {
        let seen: BTreeSet<&String> = train.iter().map(|&i| &labels[i]).collect();
        if let Some(missing) = classes.iter().find(|c| !seen.contains(c)) {
            return Err(Error::InsufficientData(format!("fold for actor {actor} has no training video of class {missing}")));
        }
    }
    let fold_matrices: Vec<ConfusionMatrix> = folds
        .par_iter()
        .map(|(_, train, test)| {
            let predicted = fold(train, test)?;
            if predicted.len() != test.len() {
                return Err(Error::Numeric("fold returned the wrong number of predictions".into()));
            }
            let mut cm = ConfusionMatrix::new(classes.clone());
            for (&i, p) in test.iter().zip(&predicted) {
                cm.record(&labels[i], p)?;
            }
            Ok(cm)
        })
        .collect::<Result<_>>()?;
    let mut total = ConfusionMatrix::new(classes);
    for cm in &fold_matrices {
        total.add(cm)?;
    }
    Ok(total)
}

/// Leave-one-actor-out on precomputed encodings.
pub fn leave_one_actor_out(dataset: &[LabeledVideo], params: &SvmParams) -> Result<ConfusionMatrix> {
    let labels: Vec<String> = dataset.iter().map(|v| v.label.clone()).collect();
    let actors: Vec<String> = dataset.iter().map(|v| v.actor.clone()).collect();
    leave_one_actor_out_by(&labels, &actors, |train_idx, test| {
        let examples: Vec<LabeledVideo> = train_idx.iter().map(|&i| dataset[i].clone()).collect();
        let model = train(&examples, params)?;
        test.iter().map(|&i| predict(&model, &dataset[i].fv)).collect()
    })
}

/// Per class: a `label <name>` line, a line of weights, then a bias line.
pub fn format_model(model: &SvmModel) -> String {
    let mut out = String::new();
    for ((l, w), b) in model.labels.iter().zip(&model.weights).zip(&model.biases) {
        writeln!(out, "label {l}").unwrap();
        let ws: Vec<String> = w.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", ws.join(" ")).unwrap();
        writeln!(out, "{b}").unwrap();
    }
    out
}

pub fn parse_model(text: &str) -> Result<SvmModel> {
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if lines.is_empty() || lines.len() % 3 != 0 {
        return Err(Error::Parse("model file must hold label, weights and bias lines per class".into()));
    }
    let mut model = SvmModel { labels: Vec::new(), weights: Vec::new(), biases: Vec::new() };
    for chunk in lines.chunks(3) {
        let label = chunk[0].strip_prefix("label ").ok_or_else(|| Error::Parse(format!("expected `label <name>`, got `{}`", chunk[0])))?;
        let w = chunk[1].split_whitespace().map(str::parse).collect::<Result<Vec<f64>, _>>().map_err(|e| Error::Parse(format!("weights: {e}")))?;
        let b: f64 = chunk[2].parse().map_err(|e| Error::Parse(format!("bias: {e}")))?;
        model.labels.push(label.to_string());
        model.weights.push(w);
        model.biases.push(b);
    }
    let d = model.weights[0].len();
    if d == 0 || model.weights.iter().any(|w| w.len() != d) {
        return Err(Error::Parse("model weight vectors differ in length".into()));
    }
    Ok(model)
}
