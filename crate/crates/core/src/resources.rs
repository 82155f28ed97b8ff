//! Shipped data tables and lookup of override directories.
//!
//! Every table ships inside the binary. A data directory (for instance the
//! one named by `ONIONTEXT_DATA_DIR`) overrides individual files: any file
//! present there wins over the embedded copy.

use std::path::{Path, PathBuf};

use crate::{Error, Result};

pub const DATA_DIR_ENV: &str = "ONIONTEXT_DATA_DIR";

pub const MAIN_CLASSES: &str = "main_classes.csv";
pub const DRUG_SUBCLASSES: &str = "drug_subclasses.csv";
pub const DUTA_MAP: &str = "duta_map.csv";
pub const AGORA_MAP: &str = "agora_map.csv";
pub const STOPWORDS: &str = "stopwords.txt";
pub const CONTRACTIONS: &str = "contractions.csv";
pub const LEMMA_EXCEPTIONS: &str = "lemma_exceptions.csv";
pub const SUFFIX_RULES: &str = "suffix_rules.csv";

const EMBEDDED: &[(&str, &str)] = &[
    (MAIN_CLASSES, include_str!("../data/main_classes.csv")),
    (DRUG_SUBCLASSES, include_str!("../data/drug_subclasses.csv")),
    (DUTA_MAP, include_str!("../data/duta_map.csv")),
    (AGORA_MAP, include_str!("../data/agora_map.csv")),
    (STOPWORDS, include_str!("../data/stopwords.txt")),
    (CONTRACTIONS, include_str!("../data/contractions.csv")),
    (LEMMA_EXCEPTIONS, include_str!("../data/lemma_exceptions.csv")),
    (SUFFIX_RULES, include_str!("../data/suffix_rules.csv")),
];

pub fn embedded(name: &str) -> Option<&'static str> {
    EMBEDDED.iter().find(|(n, _)| *n == name).map(|(_, body)| *body)
}

/// Reads `name` from `dir` when the file exists there, else the embedded copy.
pub fn read(dir: Option<&Path>, name: &str) -> Result<String> {
    if let Some(dir) = dir {
        let path = dir.join(name);
        if path.exists() {
            return std::fs::read_to_string(&path).map_err(|e| Error::io(path, e));
        }
    }
    embedded(name)
        .map(str::to_owned)
        .ok_or_else(|| Error::Config(format!("no resource named `{name}`")))
}

/// Directory named by `ONIONTEXT_DATA_DIR`, if set and non-empty.
pub fn data_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

/// Writes every embedded table into `dir`.
pub fn export_all(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in EMBEDDED {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub(crate) fn csv_reader(body: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::None)
        .from_reader(body.as_bytes())
}

pub(crate) fn csv_rows(resource: &str, body: &str, columns: usize) -> Result<Vec<Vec<String>>> {
    let mut reader = csv_reader(body);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Resource {
            resource: resource.to_owned(),
            row: i + 1,
            message: e.to_string(),
        })?;
        if record.len() != columns {
            return Err(Error::Resource {
                resource: resource.to_owned(),
                row: i + 1,
                message: format!("expected {columns} columns, found {}", record.len()),
            });
        }
        rows.push(record.iter().map(str::to_owned).collect());
    }
    Ok(rows)
}
