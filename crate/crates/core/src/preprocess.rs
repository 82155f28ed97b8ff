//! Six-step text cleaning: markup removal, URL removal, contraction
//! expansion, special-character and numeric-word removal, stopword
//! filtering, lemmatization with lowercasing.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::resources::{self, csv_rows};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pos {
    Verb,
    Noun,
}

impl Pos {
    /// Lookup order: verb sense first.
    const ORDER: [Pos; 2] = [Pos::Verb, Pos::Noun];

    fn parse(raw: &str) -> Option<Pos> {
        match raw {
            "verb" | "v" => Some(Pos::Verb),
            "noun" | "n" => Some(Pos::Noun),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixRule {
    pub suffix: String,
    pub replacement: String,
    pub pos: Pos,
}

/// Rule outputs shorter than this are rejected.
const MIN_LEMMA_LEN: usize = 3;
/// Stems (word minus suffix) shorter than this are rejected.
const MIN_STEM_LEN: usize = 2;

impl SuffixRule {
    fn apply(&self, word: &str) -> Option<String> {
        let stem = word.strip_suffix(self.suffix.as_str())?;
        if stem.len() < MIN_STEM_LEN {
            return None;
        }
        let candidate = format!("{stem}{}", self.replacement);
        (candidate.len() >= MIN_LEMMA_LEN).then_some(candidate)
    }
}

#[derive(Debug, Clone)]
pub struct PreprocessResources {
    pub contraction_table: HashMap<String, String>,
    pub stopword_set: HashSet<String>,
    pub lemma_dictionary: HashMap<(String, Pos), String>,
    pub suffix_rules: Vec<SuffixRule>,
    known_lemmas: HashSet<String>,
}

fn resource_err(resource: &str, row: usize, message: impl Into<String>) -> Error {
    Error::Resource {
        resource: resource.to_owned(),
        row,
        message: message.into(),
    }
}

impl PreprocessResources {
    pub fn shipped() -> Self {
        Self::load(None).expect("embedded preprocessing resources parse")
    }

    pub fn load(dir: Option<&Path>) -> Result<Self> {
        Self::from_strs(
            &resources::read(dir, resources::STOPWORDS)?,
            &resources::read(dir, resources::CONTRACTIONS)?,
            &resources::read(dir, resources::LEMMA_EXCEPTIONS)?,
            &resources::read(dir, resources::SUFFIX_RULES)?,
        )
    }

    /// Stopword entries are lowercased with apostrophes removed, so the
    /// apostrophe forms of the list match what survives character cleaning.
    pub fn from_strs(
        stopwords: &str,
        contractions: &str,
        lemmas: &str,
        suffixes: &str,
    ) -> Result<Self> {
        let mut stopword_set = HashSet::new();
        for (i, line) in stopwords.lines().enumerate() {
            let word: String = line
                .trim()
                .chars()
                .filter(|c| !is_apostrophe(*c))
                .collect::<String>()
                .to_lowercase();
            if word.is_empty() {
                continue;
            }
            if !word.chars().all(|c| c.is_ascii_lowercase()) {
                return Err(resource_err(
                    resources::STOPWORDS,
                    i + 1,
                    format!("`{word}` is not alphabetic"),
                ));
            }
            stopword_set.insert(word);
        }

        let mut contraction_table = HashMap::new();
        for (i, row) in csv_rows(resources::CONTRACTIONS, contractions, 2)?
            .into_iter()
            .enumerate()
        {
            let key = row[0].trim().to_lowercase();
            let expansion = row[1].trim().to_lowercase();
            if !key.contains('\'') {
                return Err(resource_err(
                    resources::CONTRACTIONS,
                    i + 1,
                    format!("`{key}` has no apostrophe"),
                ));
            }
            if expansion.contains('\'') {
                return Err(resource_err(
                    resources::CONTRACTIONS,
                    i + 1,
                    format!("expansion `{expansion}` contains an apostrophe"),
                ));
            }
            contraction_table.insert(key, expansion);
        }

        let mut lemma_dictionary = HashMap::new();
        let mut known_lemmas = HashSet::new();
        for (i, row) in csv_rows(resources::LEMMA_EXCEPTIONS, lemmas, 3)?
            .into_iter()
            .enumerate()
        {
            let pos = Pos::parse(row[1].trim()).ok_or_else(|| {
                resource_err(resources::LEMMA_EXCEPTIONS, i + 1, "pos must be verb or noun")
            })?;
            let word = row[0].trim().to_lowercase();
            let lemma = row[2].trim().to_lowercase();
            if !is_lower_alpha(&word) || !is_lower_alpha(&lemma) {
                return Err(resource_err(
                    resources::LEMMA_EXCEPTIONS,
                    i + 1,
                    "word and lemma must be alphabetic",
                ));
            }
            known_lemmas.insert(lemma.clone());
            lemma_dictionary.insert((word, pos), lemma);
        }

        let mut suffix_rules = Vec::new();
        for (i, row) in csv_rows(resources::SUFFIX_RULES, suffixes, 3)?
            .into_iter()
            .enumerate()
        {
            let pos = Pos::parse(row[2].trim()).ok_or_else(|| {
                resource_err(resources::SUFFIX_RULES, i + 1, "pos must be verb or noun")
            })?;
            let suffix = row[0].trim().to_lowercase();
            if suffix.is_empty() {
                return Err(resource_err(resources::SUFFIX_RULES, i + 1, "empty suffix"));
            }
            suffix_rules.push(SuffixRule {
                suffix,
                replacement: row[1].trim().to_lowercase(),
                pos,
            });
        }

        Ok(PreprocessResources {
            contraction_table,
            stopword_set,
            lemma_dictionary,
            suffix_rules,
            known_lemmas,
        })
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopword_set.contains(word)
    }

    /// Dictionary form of a lowercase word.
    ///
    /// Known lemmas map to themselves; then the exception table is consulted
    /// (verb sense, then noun); then suffix rules, preferring a result that is
    /// a known lemma, else the first result that is itself lemma-stable.
    /// Every returned value `l` satisfies `lemmatize(l) == l`.
    pub fn lemmatize(&self, word: &str) -> String {
        if self.known_lemmas.contains(word) {
            return word.to_owned();
        }
        for pos in Pos::ORDER {
            if let Some(lemma) = self.lemma_dictionary.get(&(word.to_owned(), pos)) {
                return lemma.clone();
            }
        }
        let candidates: Vec<String> = Pos::ORDER
            .iter()
            .flat_map(|pos| self.suffix_rules.iter().filter(move |r| r.pos == *pos))
            .filter_map(|rule| rule.apply(word))
            .collect();
        if let Some(hit) = candidates.iter().find(|c| self.known_lemmas.contains(*c)) {
            return hit.clone();
        }
        for candidate in candidates {
            if candidate == word {
                return candidate;
            }
            if self.lemmatize(&candidate) == candidate {
                return candidate;
            }
        }
        word.to_owned()
    }
}

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '\u{2018}' | '`')
}

fn is_lower_alpha(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase())
}

fn tag_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?s)<!--.*?-->|<![^<>]*>|</?[A-Za-z][^<>]*>").unwrap()
    })
}

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)\b(?:https?|ftp)://\S*|\bwww\.\S*|\b[a-z0-9][a-z0-9.-]*\.onion\b(?:[/?#:]\S*)?",
        )
        .unwrap()
    })
}

fn contraction_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z]*'[A-Za-z]+(?:'[A-Za-z]+)*").unwrap())
}

/// Steps 1-2: strip residual markup tags, then URLs (http/https/ftp schemes,
/// `www.` hosts, bare `.onion` hosts). Surrounding whitespace is kept.
pub fn clean_markup(text: &str) -> String {
    let without_tags = tag_pattern().replace_all(text, "");
    url_pattern().replace_all(&without_tags, "").into_owned()
}

/// Steps 3-4: expand contractions, drop whitespace-delimited words that
/// contain a digit, then drop every character that is not an ASCII letter.
/// Words are rejoined with single spaces.
pub fn normalize_tokens(text: &str, res: &PreprocessResources) -> String {
    let text: String = text
        .chars()
        .map(|c| if is_apostrophe(c) { '\'' } else { c })
        .collect();
    let expanded = contraction_pattern().replace_all(&text, |caps: &regex::Captures<'_>| {
        let word = &caps[0];
        res.contraction_table
            .get(&word.to_lowercase())
            .cloned()
            .unwrap_or_else(|| word.to_owned())
    });
    expanded
        .split_whitespace()
        .filter(|word| !word.chars().any(char::is_numeric))
        .map(|word| word.chars().filter(char::is_ascii_alphabetic).collect::<String>())
        .filter(|word| !word.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Steps 5-6: lowercase, drop stopwords, lemmatize. A lemma that is itself a
/// stopword is dropped too, so the output is stable under re-application.
pub fn filter_and_lemmatize(text: &str, res: &PreprocessResources) -> Vec<String> {
    text.split_whitespace()
        .map(str::to_ascii_lowercase)
        .filter(|w| !w.is_empty() && !res.is_stopword(w))
        .map(|w| res.lemmatize(&w))
        .filter(|lemma| !res.is_stopword(lemma))
        .collect()
}

pub fn preprocess(text: &str, res: &PreprocessResources) -> Vec<String> {
    filter_and_lemmatize(&normalize_tokens(&clean_markup(text), res), res)
}
