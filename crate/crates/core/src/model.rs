//! Multinomial logistic regression over TF-IDF vectors, trained with
//! mini-batch Adam on L2-regularized categorical cross-entropy.
//!
//! Two task instances exist: the main-class model and the drug sub-class
//! model. [`classify_two_level`] chains them.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{tfidf_transform, FeatureVector, Vocabulary};
use crate::taxonomy::DRUGS;
use crate::{Error, Result};

pub const MODEL_MAGIC: &str = "ONIONTEXT-MODEL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Main,
    Drugs,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Main => "main",
            Task::Drugs => "drugs",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "main" => Ok(Task::Main),
            "drugs" => Ok(Task::Drugs),
            other => Err(format!("unknown task `{other}` (expected main or drugs)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l2_penalty: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 5,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2_penalty: 1e-4,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_owned()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return bad("l2 penalty must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("Adam epsilon must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub task: Task,
    pub class_names: Vec<String>,
    pub vocabulary: Vocabulary,
    /// Row-major K x (V + 1); the last column of each row is the bias.
    pub weights: Vec<f64>,
    /// Digest of the taxonomy the class list came from, if known.
    pub taxonomy_version: Option<String>,
}

impl ClassifierModel {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dimension(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn row(&self, class: usize) -> &[f64] {
        let width = self.dimension() + 1;
        &self.weights[class * width..(class + 1) * width]
    }

    pub fn logits(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        if x.dimension != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                actual: x.dimension,
            });
        }
        Ok(logits(&self.weights, self.n_classes(), self.dimension(), x))
    }

    pub fn transform<S: AsRef<str>>(&self, tokens: &[S]) -> FeatureVector {
        tfidf_transform(tokens, &self.vocabulary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochStats>,
}

fn logits(weights: &[f64], k: usize, v: usize, x: &FeatureVector) -> Vec<f64> {
    let width = v + 1;
    (0..k)
        .map(|c| {
            let row = &weights[c * width..(c + 1) * width];
            x.entries.iter().map(|&(j, w)| row[j] * w).sum::<f64>() + row[v]
        })
        .collect()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_softmax_at(logits: &[f64], y: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    logits[y] - lse
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Regularized objective
/// `mean_i -ln softmax(W x_i)_{y_i} + l2 / 2 * ||W||^2`
/// and its gradient with respect to the flat K x (V + 1) weight matrix.
pub fn loss_and_gradient(
    weights: &[f64],
    n_classes: usize,
    dimension: usize,
    samples: &[(FeatureVector, usize)],
    l2_penalty: f64,
) -> (f64, Vec<f64>) {
    let width = dimension + 1;
    let mut grad = vec![0.0; weights.len()];
    let mut loss = 0.0;
    let scale = 1.0 / samples.len().max(1) as f64;
    for (x, y) in samples {
        let z = logits(weights, n_classes, dimension, x);
        loss -= log_softmax_at(&z, *y);
        let p = softmax(&z);
        for (c, pc) in p.iter().enumerate() {
            let g = (pc - if c == *y { 1.0 } else { 0.0 }) * scale;
            let row = &mut grad[c * width..(c + 1) * width];
            for &(j, w) in &x.entries {
                row[j] += g * w;
            }
            row[dimension] += g;
        }
    }
    loss *= scale;
    let mut sq = 0.0;
    for (g, w) in grad.iter_mut().zip(weights) {
        *g += l2_penalty * w;
        sq += w * w;
    }
    (loss + 0.5 * l2_penalty * sq, grad)
}

/// Objective value alone; see [`loss_and_gradient`].
pub fn objective(
    weights: &[f64],
    n_classes: usize,
    dimension: usize,
    samples: &[(FeatureVector, usize)],
    l2_penalty: f64,
) -> f64 {
    let scale = 1.0 / samples.len().max(1) as f64;
    let ce: f64 = samples
        .iter()
        .map(|(x, y)| -log_softmax_at(&logits(weights, n_classes, dimension, x), *y))
        .sum();
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    ce * scale + 0.5 * l2_penalty * sq
}

fn accuracy_of(weights: &[f64], k: usize, v: usize, samples: &[(FeatureVector, usize)]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let correct = samples
        .iter()
        .filter(|(x, y)| argmax(&logits(weights, k, v, x)) == *y)
        .count();
    correct as f64 / samples.len() as f64
}

fn check_samples(samples: &[(FeatureVector, usize)], k: usize, v: usize) -> Result<()> {
    for (x, y) in samples {
        if *y >= k {
            return Err(Error::InvalidArgument(format!(
                "class index {y} out of range for {k} classes"
            )));
        }
        if x.dimension != v {
            return Err(Error::DimensionMismatch {
                expected: v,
                actual: x.dimension,
            });
        }
    }
    Ok(())
}

/// Trains a classifier from zero weights. Shuffling uses a ChaCha generator
/// seeded from `config.seed`, so equal inputs give bit-identical weights.
/// The per-epoch training loss is the full regularized objective after the
/// epoch.
pub fn train(
    task: Task,
    class_names: Vec<String>,
    vocabulary: Vocabulary,
    samples: &[(FeatureVector, usize)],
    config: &TrainingConfig,
    validation: Option<&[(FeatureVector, usize)]>,
) -> Result<(ClassifierModel, TrainingTrace)> {
    config.validate()?;
    let k = class_names.len();
    let v = vocabulary.len();
    check_samples(samples, k, v)?;
    if let Some(val) = validation {
        check_samples(val, k, v)?;
    }
    let mut present: Vec<usize> = samples.iter().map(|(_, y)| *y).collect();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "training needs at least 2 distinct classes, found {}",
            present.len()
        )));
    }

    let width = v + 1;
    let mut weights = vec![0.0; k * width];
    let mut m = vec![0.0; weights.len()];
    let mut s = vec![0.0; weights.len()];
    let mut step: i32 = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut trace = TrainingTrace::default();
    let mut batch: Vec<(FeatureVector, usize)> = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i].clone()));
            let (loss, grad) = loss_and_gradient(&weights, k, v, &batch, config.l2_penalty);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b + 1,
                });
            }
            step += 1;
            let c1 = 1.0 - config.beta1.powi(step);
            let c2 = 1.0 - config.beta2.powi(step);
            for i in 0..weights.len() {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
                s[i] = config.beta2 * s[i] + (1.0 - config.beta2) * grad[i] * grad[i];
                let m_hat = m[i] / c1;
                let s_hat = s[i] / c2;
                weights[i] -= config.learning_rate * m_hat / (s_hat.sqrt() + config.epsilon);
            }
        }
        let train_loss = objective(&weights, k, v, samples, config.l2_penalty);
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
            });
        }
        let (validation_loss, validation_accuracy) = match validation {
            Some(val) if !val.is_empty() => (
                Some(objective(&weights, k, v, val, 0.0)),
                Some(accuracy_of(&weights, k, v, val)),
            ),
            _ => (None, None),
        };
        trace.epochs.push(EpochStats {
            epoch,
            train_loss,
            validation_loss,
            validation_accuracy,
        });
    }

    Ok((
        ClassifierModel {
            task,
            class_names,
            vocabulary,
            weights,
            taxonomy_version: None,
        },
        trace,
    ))
}

pub fn predict_proba(model: &ClassifierModel, x: &FeatureVector) -> Result<Vec<f64>> {
    Ok(softmax(&model.logits(x)?))
}

/// Predicted class index and its probability.
pub fn predict(model: &ClassifierModel, x: &FeatureVector) -> Result<(usize, f64)> {
    let p = predict_proba(model, x)?;
    let best = argmax(&p);
    Ok((best, p[best]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelPrediction {
    pub main_label: String,
    pub drug_sublabel: Option<String>,
    pub main_confidence: f64,
    pub drug_confidence: Option<f64>,
}

/// Main class first; the drug model runs only when the main class is
/// `Drugs`. Each model featurizes the tokens with its own vocabulary.
pub fn classify_two_level<S: AsRef<str>>(
    main_model: &ClassifierModel,
    drugs_model: &ClassifierModel,
    tokens: &[S],
) -> Result<TwoLevelPrediction> {
    let (main_idx, main_conf) = predict(main_model, &main_model.transform(tokens))?;
    let main_label = main_model.class_names[main_idx].clone();
    let (drug_sublabel, drug_confidence) = if main_label == DRUGS {
        let (idx, conf) = predict(drugs_model, &drugs_model.transform(tokens))?;
        (Some(drugs_model.class_names[idx].clone()), Some(conf))
    } else {
        (None, None)
    };
    Ok(TwoLevelPrediction {
        main_label,
        drug_sublabel,
        main_confidence: main_conf,
        drug_confidence,
    })
}

fn check_field(field: &str, value: &str) -> Result<()> {
    if value.is_empty() || value.contains(['\n', '\r', '\t']) {
        return Err(Error::model(
            field,
            format!("value {value:?} is empty or contains tabs/newlines"),
        ));
    }
    Ok(())
}

/// Serializes a model to the versioned text container:
///
/// ```text
/// ONIONTEXT-MODEL
/// [header]
/// format_version 1
/// task main
/// K 19
/// V 1234
/// taxonomy_version <hex or ->
/// [classes]
/// <one class name per line>
/// [vocabulary]
/// n_documents_fitted N
/// min_df M
/// <term> TAB <index> TAB <df>
/// [weights]
/// <one row per class, V + 1 space-separated values, 17 significant digits>
/// [end]
/// ```
pub fn model_to_string(model: &ClassifierModel) -> Result<String> {
    let k = model.n_classes();
    let v = model.dimension();
    if model.weights.len() != k * (v + 1) {
        return Err(Error::model("weights", "matrix size does not match K x (V + 1)"));
    }
    let mut out = String::new();
    writeln!(out, "{MODEL_MAGIC}").unwrap();
    writeln!(out, "[header]").unwrap();
    writeln!(out, "format_version {FORMAT_VERSION}").unwrap();
    writeln!(out, "task {}", model.task).unwrap();
    writeln!(out, "K {k}").unwrap();
    writeln!(out, "V {v}").unwrap();
    let tax = model.taxonomy_version.as_deref().unwrap_or("-");
    check_field("taxonomy_version", tax)?;
    writeln!(out, "taxonomy_version {tax}").unwrap();
    writeln!(out, "[classes]").unwrap();
    for name in &model.class_names {
        check_field("classes", name)?;
        writeln!(out, "{name}").unwrap();
    }
    writeln!(out, "[vocabulary]").unwrap();
    writeln!(out, "n_documents_fitted {}", model.vocabulary.n_documents_fitted).unwrap();
    writeln!(out, "min_df {}", model.vocabulary.min_df).unwrap();
    for (i, term) in model.vocabulary.terms().iter().enumerate() {
        check_field("vocabulary", term)?;
        if term.starts_with('[') {
            return Err(Error::model("vocabulary", format!("term {term:?} starts with `[`")));
        }
        writeln!(out, "{term}\t{i}\t{}", model.vocabulary.document_frequency[i]).unwrap();
    }
    writeln!(out, "[weights]").unwrap();
    for c in 0..k {
        let row: Vec<String> = model.row(c).iter().map(|w| format!("{w:.16e}")).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    writeln!(out, "[end]").unwrap();
    Ok(out)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, field: &str) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::model(field, "unexpected end of file (truncated?)"))
    }

    fn expect(&mut self, marker: &str) -> Result<()> {
        let (n, line) = self.next(marker)?;
        if line != marker {
            return Err(Error::model(
                marker,
                format!("line {n}: expected `{marker}`, found {line:?}"),
            ));
        }
        Ok(())
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let (n, line) = self.next(key)?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| Error::model(key, format!("line {n}: expected `{key} <value>`")))
    }

    fn keyed_usize(&mut self, key: &str) -> Result<usize> {
        let raw = self.keyed(key)?;
        raw.parse()
            .map_err(|_| Error::model(key, format!("{raw:?} is not a count")))
    }
}

pub fn model_from_str(text: &str) -> Result<ClassifierModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (_, magic) = lines.next("magic")?;
    if magic != MODEL_MAGIC {
        return Err(Error::model("magic", format!("expected `{MODEL_MAGIC}`, found {magic:?}")));
    }
    lines.expect("[header]")?;
    let version = lines.keyed_usize("format_version")?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::model(
            "format_version",
            format!("unsupported version {version} (this build reads {FORMAT_VERSION})"),
        ));
    }
    let task: Task = lines
        .keyed("task")?
        .parse()
        .map_err(|e: String| Error::model("task", e))?;
    let k = lines.keyed_usize("K")?;
    let v = lines.keyed_usize("V")?;
    let taxonomy_version = match lines.keyed("taxonomy_version")? {
        "-" => None,
        other => Some(other.to_owned()),
    };

    lines.expect("[classes]")?;
    let mut class_names = Vec::with_capacity(k);
    for _ in 0..k {
        let (_, name) = lines.next("classes")?;
        check_field("classes", name)?;
        class_names.push(name.to_owned());
    }

    lines.expect("[vocabulary]")?;
    let n_docs = lines.keyed_usize("n_documents_fitted")?;
    let min_df = lines.keyed_usize("min_df")?;
    let mut terms = Vec::with_capacity(v);
    let mut dfs = Vec::with_capacity(v);
    for expected in 0..v {
        let (n, line) = lines.next("vocabulary")?;
        let parts: Vec<&str> = line.split('\t').collect();
        let [term, index, df] = parts[..] else {
            return Err(Error::model("vocabulary", format!("line {n}: expected 3 tab-separated fields")));
        };
        if index.parse::<usize>().ok() != Some(expected) {
            return Err(Error::model("vocabulary", format!("line {n}: index {index:?}, expected {expected}")));
        }
        let df = df
            .parse::<usize>()
            .map_err(|_| Error::model("vocabulary", format!("line {n}: bad df {df:?}")))?;
        terms.push(term.to_owned());
        dfs.push(df);
    }
    let vocabulary = Vocabulary::from_parts(terms, dfs, n_docs, min_df)
        .map_err(|e| Error::model("vocabulary", e.to_string()))?;

    lines.expect("[weights]")?;
    let mut weights = Vec::with_capacity(k * (v + 1));
    for c in 0..k {
        let (n, line) = lines.next("weights")?;
        let row = line
            .split(' ')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::model("weights", format!("line {n}: {e}")))?;
        if row.len() != v + 1 {
            return Err(Error::model(
                "weights",
                format!("row {c} has {} values, expected {}", row.len(), v + 1),
            ));
        }
        if row.iter().any(|w| !w.is_finite()) {
            return Err(Error::model("weights", format!("row {c} has a non-finite value")));
        }
        weights.extend(row);
    }
    lines.expect("[end]")?;

    Ok(ClassifierModel {
        task,
        class_names,
        vocabulary,
        weights,
        taxonomy_version,
    })
}

pub fn save_model(model: &ClassifierModel, path: &Path) -> Result<()> {
    let text = model_to_string(model)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ClassifierModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text)
}
