//! Stage composition shared by the CLI and the end-to-end tests.

use serde::{Deserialize, Serialize};

use crate::corpus::{stratified_indices, Document};
use crate::eval::{compute_metrics, confusion_matrix, EvaluationReport};
use crate::extract::{extract_document, SelectorRegistry};
use crate::features::{fit_vocabulary, tfidf_transform, FeatureVector, DEFAULT_MIN_DF};
use crate::model::{predict, train, ClassifierModel, Task, TrainingConfig, TrainingTrace};
use crate::preprocess::{preprocess, PreprocessResources};
use crate::taxonomy::{Taxonomy, DRUGS};
use crate::{Error, Result};

/// Class inventory of a task, in taxonomy order.
pub fn task_classes(task: Task, taxonomy: &Taxonomy) -> Vec<String> {
    match task {
        Task::Main => taxonomy.main_classes.clone(),
        Task::Drugs => taxonomy.distinct_drug_subclasses(),
    }
}

/// The document's label for `task`, if it has one.
pub fn task_label(doc: &Document, task: Task) -> Option<&str> {
    match task {
        Task::Main => doc.main_label.as_deref(),
        Task::Drugs => doc
            .drug_sublabel
            .as_deref()
            .filter(|_| doc.main_label.as_deref() == Some(DRUGS)),
    }
}

/// Fills `tokens` from `extracted_text`; skipped documents are left alone.
pub fn preprocess_document(mut doc: Document, res: &PreprocessResources) -> Result<Document> {
    if doc.skipped {
        return Ok(doc);
    }
    let text = doc.extracted_text.as_deref().ok_or_else(|| Error::Document {
        id: doc.id.clone(),
        message: "no extracted_text; run extraction first".into(),
    })?;
    doc.tokens = Some(preprocess(text, res));
    Ok(doc)
}

/// Extraction followed by preprocessing.
pub fn prepare_document(
    doc: Document,
    selectors: &SelectorRegistry,
    res: &PreprocessResources,
) -> Result<Document> {
    preprocess_document(extract_document(doc, selectors)?, res)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub min_df: usize,
    pub config: TrainingConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            test_fraction: 0.1,
            val_fraction: 0.1,
            min_df: DEFAULT_MIN_DF,
            config: TrainingConfig::default(),
        }
    }
}

/// Documents usable for a task: not skipped, tokenized, labeled for it.
pub fn eligible(docs: &[Document], task: Task) -> Vec<&Document> {
    docs.iter()
        .filter(|d| !d.skipped && d.tokens.is_some() && task_label(d, task).is_some())
        .collect()
}

#[derive(Debug, Clone)]
pub struct TaskSplit<'a> {
    pub train: Vec<&'a Document>,
    pub validation: Vec<&'a Document>,
    pub test: Vec<&'a Document>,
}

/// Stratified train/validation/test split of the eligible documents.
/// `test_fraction` of each class is held out first; `val_fraction` (of the
/// whole) is then taken from the remainder. A zero fraction disables that
/// part.
pub fn split_for_task(
    docs: &[Document],
    task: Task,
    test_fraction: f64,
    val_fraction: f64,
    seed: u64,
) -> Result<TaskSplit<'_>> {
    if test_fraction < 0.0 || val_fraction < 0.0 || test_fraction + val_fraction >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "fractions must be non-negative and sum below 1 (test {test_fraction}, validation {val_fraction})"
        )));
    }
    let pool = eligible(docs, task);
    let (rest, test) = if test_fraction > 0.0 {
        let labels: Vec<&str> = pool.iter().map(|d| task_label(d, task).unwrap()).collect();
        let (train_idx, test_idx) = stratified_indices(&labels, test_fraction, seed)?;
        (
            train_idx.into_iter().map(|i| pool[i]).collect::<Vec<_>>(),
            test_idx.into_iter().map(|i| pool[i]).collect(),
        )
    } else {
        (pool, Vec::new())
    };
    let (train, validation) = if val_fraction > 0.0 {
        let labels: Vec<&str> = rest.iter().map(|d| task_label(d, task).unwrap()).collect();
        let relative = val_fraction / (1.0 - test_fraction);
        let (train_idx, val_idx) = stratified_indices(&labels, relative, seed.wrapping_add(1))?;
        (
            train_idx.into_iter().map(|i| rest[i]).collect(),
            val_idx.into_iter().map(|i| rest[i]).collect(),
        )
    } else {
        (rest, Vec::new())
    };
    Ok(TaskSplit {
        train,
        validation,
        test,
    })
}

fn samples(
    docs: &[&Document],
    task: Task,
    classes: &[String],
    featurize: impl Fn(&[String]) -> FeatureVector,
) -> Result<Vec<(FeatureVector, usize)>> {
    docs.iter()
        .map(|d| {
            let label = task_label(d, task).unwrap();
            let y = classes.iter().position(|c| c == label).ok_or_else(|| Error::Document {
                id: d.id.clone(),
                message: format!("label `{label}` is not a {task} class"),
            })?;
            Ok((featurize(d.tokens.as_deref().unwrap_or_default()), y))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ClassifierModel,
    pub trace: TrainingTrace,
    pub n_train: usize,
    pub n_validation: usize,
    pub test_ids: Vec<String>,
}

/// Splits, fits the vocabulary on the training part, and trains.
pub fn train_task(
    docs: &[Document],
    task: Task,
    taxonomy: &Taxonomy,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    let split = split_for_task(docs, task, opts.test_fraction, opts.val_fraction, opts.config.seed)?;
    if split.train.is_empty() {
        return Err(Error::InvalidArgument(format!("no labeled {task} documents to train on")));
    }
    let classes = task_classes(task, taxonomy);
    let token_docs: Vec<&[String]> = split
        .train
        .iter()
        .map(|d| d.tokens.as_deref().unwrap_or_default())
        .collect();
    let owned: Vec<Vec<&str>> = token_docs
        .iter()
        .map(|t| t.iter().map(String::as_str).collect())
        .collect();
    let vocab = fit_vocabulary(&owned, opts.min_df)?;
    let featurize = |t: &[String]| tfidf_transform(t, &vocab);
    let train_set = samples(&split.train, task, &classes, featurize)?;
    let val_set = samples(&split.validation, task, &classes, featurize)?;
    let (mut model, trace) = train(
        task,
        classes,
        vocab.clone(),
        &train_set,
        &opts.config,
        (!val_set.is_empty()).then_some(val_set.as_slice()),
    )?;
    model.taxonomy_version = Some(taxonomy.version());
    Ok(TrainOutcome {
        model,
        trace,
        n_train: split.train.len(),
        n_validation: split.validation.len(),
        test_ids: split.test.iter().map(|d| d.id.clone()).collect(),
    })
}

/// Confirms a model was trained under this taxonomy.
pub fn check_model_taxonomy(model: &ClassifierModel, taxonomy: &Taxonomy) -> Result<()> {
    let current = taxonomy.version();
    match &model.taxonomy_version {
        Some(v) if *v == current => {}
        Some(v) => {
            return Err(Error::Config(format!(
                "version mismatch: model was trained under taxonomy {v}, current taxonomy is {current}"
            )))
        }
        None => {
            return Err(Error::Config(format!(
                "version mismatch: model records no taxonomy version (current taxonomy is {current})"
            )))
        }
    }
    if model.class_names != task_classes(model.task, taxonomy) {
        return Err(Error::Config(format!(
            "version mismatch: model classes differ from the taxonomy's {} classes",
            model.task
        )));
    }
    Ok(())
}

/// Predicts every eligible document and scores the predictions.
pub fn evaluate_model(model: &ClassifierModel, docs: &[&Document]) -> Result<EvaluationReport> {
    let mut pairs = Vec::with_capacity(docs.len());
    for d in docs {
        let label = task_label(d, model.task).ok_or_else(|| Error::Document {
            id: d.id.clone(),
            message: format!("no {} label", model.task),
        })?;
        let y = model
            .class_names
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::Document {
                id: d.id.clone(),
                message: format!("label `{label}` is not a model class"),
            })?;
        let x = model.transform(d.tokens.as_deref().unwrap_or_default());
        pairs.push((y, predict(model, &x)?.0));
    }
    compute_metrics(&confusion_matrix(&pairs, &model.class_names)?)
}
