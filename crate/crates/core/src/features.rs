//! TF-IDF featurization over a fitted vocabulary.
//!
//! Weights are raw term counts times a smoothed idf,
//! `ln((1 + N) / (1 + df)) + 1`, then L2-normalized.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::{Error, Result};

pub const DEFAULT_MIN_DF: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    /// Terms in lexicographic order; a term's position is its index.
    terms: Vec<String>,
    index: HashMap<String, usize>,
    pub document_frequency: Vec<usize>,
    pub n_documents_fitted: usize,
    pub min_df: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from explicit parts, checking its invariants.
    pub fn from_parts(
        terms: Vec<String>,
        document_frequency: Vec<usize>,
        n_documents_fitted: usize,
        min_df: usize,
    ) -> Result<Self> {
        if terms.len() != document_frequency.len() {
            return Err(Error::InvalidArgument(
                "terms and document frequencies differ in length".into(),
            ));
        }
        if min_df == 0 {
            return Err(Error::InvalidArgument("min_df must be at least 1".into()));
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (i, term) in terms.iter().enumerate() {
            if index.insert(term.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate term `{term}`")));
            }
            let df = document_frequency[i];
            if df < min_df || df > n_documents_fitted {
                return Err(Error::InvalidArgument(format!(
                    "document frequency {df} of `{term}` outside [{min_df}, {n_documents_fitted}]"
                )));
            }
        }
        Ok(Vocabulary {
            terms,
            index,
            document_frequency,
            n_documents_fitted,
            min_df,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn idf(&self, index: usize) -> f64 {
        let n = self.n_documents_fitted as f64;
        let df = self.document_frequency[index] as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }
}

/// Fits a vocabulary of the terms appearing in at least `min_df` documents.
pub fn fit_vocabulary<S: AsRef<str>>(token_docs: &[Vec<S>], min_df: usize) -> Result<Vocabulary> {
    if min_df == 0 {
        return Err(Error::InvalidArgument("min_df must be at least 1".into()));
    }
    if token_docs.is_empty() {
        return Err(Error::InvalidArgument("cannot fit a vocabulary on no documents".into()));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in token_docs {
        let distinct: BTreeSet<&str> = doc.iter().map(AsRef::as_ref).collect();
        for term in distinct {
            *df.entry(term).or_default() += 1;
        }
    }
    let (terms, freqs): (Vec<String>, Vec<usize>) = df
        .into_iter()
        .filter(|(_, count)| *count >= min_df)
        .map(|(term, count)| (term.to_owned(), count))
        .unzip();
    if terms.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no term reaches min_df = {min_df}; vocabulary would be empty"
        )));
    }
    Vocabulary::from_parts(terms, freqs, token_docs.len(), min_df)
}

/// Sparse, L2-normalized (or all-zero) feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    /// (index, weight) pairs with strictly increasing index and weight > 0.
    pub entries: Vec<(usize, f64)>,
    pub dimension: usize,
}

impl FeatureVector {
    pub fn zeros(dimension: usize) -> Self {
        FeatureVector {
            entries: Vec::new(),
            dimension,
        }
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |(i, _)| *i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dimension];
        for &(i, w) in &self.entries {
            dense[i] = w;
        }
        dense
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }
}

pub fn tfidf_transform<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> FeatureVector {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for token in tokens {
        if let Some(i) = vocab.index_of(token.as_ref()) {
            *counts.entry(i).or_default() += 1;
        }
    }
    let mut entries: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(i, c)| (i, c as f64 * vocab.idf(i)))
        .collect();
    let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, w) in &mut entries {
            *w /= norm;
        }
    }
    FeatureVector {
        entries,
        dimension: vocab.len(),
    }
}
