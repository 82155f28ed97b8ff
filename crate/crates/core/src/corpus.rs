//! Documents, JSON Lines corpus files, source fusion, statistics and
//! stratified splitting.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::taxonomy::{Taxonomy, DRUGS};
use crate::{Error, Result};

pub const UNLABELED: &str = "UNLABELED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceName {
    Agora,
    Berlusconi,
    CannaHome,
    Duta10k,
    ManualDarkWeb,
    NormalWeb,
    SilkRoad,
    Synthetic,
}

impl SourceName {
    pub const ALL: [SourceName; 8] = [
        SourceName::Agora,
        SourceName::Berlusconi,
        SourceName::CannaHome,
        SourceName::Duta10k,
        SourceName::ManualDarkWeb,
        SourceName::NormalWeb,
        SourceName::SilkRoad,
        SourceName::Synthetic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceName::Agora => "Agora",
            SourceName::Berlusconi => "Berlusconi",
            SourceName::CannaHome => "CannaHome",
            SourceName::Duta10k => "Duta10k",
            SourceName::ManualDarkWeb => "ManualDarkWeb",
            SourceName::NormalWeb => "NormalWeb",
            SourceName::SilkRoad => "SilkRoad",
            SourceName::Synthetic => "Synthetic",
        }
    }
}

impl fmt::Display for SourceName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        SourceName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<_> = SourceName::ALL.iter().map(|n| n.as_str()).collect();
                format!("unknown source `{s}` (expected one of {})", known.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    General,
    Marketplace,
    Pretext,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::General => "general",
            Mode::Marketplace => "marketplace",
            Mode::Pretext => "pretext",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "general" => Ok(Mode::General),
            "marketplace" => Ok(Mode::Marketplace),
            "pretext" => Ok(Mode::Pretext),
            other => Err(format!(
                "unknown mode `{other}` (expected general, marketplace or pretext)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceTag {
    #[serde(rename = "source")]
    pub name: SourceName,
    pub mode: Mode,
}

impl SourceTag {
    pub fn new(name: SourceName, mode: Mode) -> Self {
        SourceTag { name, mode }
    }
}

/// One corpus instance. Serialized as one JSON Lines record; the pipeline
/// fields (`extracted_text`, `tokens`, `skipped`) are omitted until a stage
/// fills them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(flatten)]
    pub source: SourceTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_html: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub main_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drug_sublabel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    /// Set by marketplace extraction on pages that describe no single item.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub skipped: bool,
}

impl Document {
    pub fn from_html(id: impl Into<String>, source: SourceTag, html: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            source,
            raw_html: Some(html.into()),
            raw_text: None,
            main_label: None,
            drug_sublabel: None,
            extracted_text: None,
            tokens: None,
            skipped: false,
        }
    }

    pub fn from_text(id: impl Into<String>, source: SourceTag, text: impl Into<String>) -> Self {
        Document {
            raw_html: None,
            raw_text: Some(text.into()),
            ..Document::from_html(id, source, String::new())
        }
    }

    pub fn with_labels(mut self, main: Option<&str>, drug: Option<&str>) -> Self {
        self.main_label = main.map(str::to_owned);
        self.drug_sublabel = drug.map(str::to_owned);
        self
    }

    /// Checks the structural invariants that hold for every record on disk.
    fn check_shape(&self) -> std::result::Result<(), (&'static str, String)> {
        match (&self.raw_html, &self.raw_text) {
            (Some(_), Some(_)) => {
                return Err(("raw_html", "both raw_html and raw_text present".into()))
            }
            (None, None) => {
                return Err(("raw_html", "one of raw_html or raw_text is required".into()))
            }
            _ => {}
        }
        if self.source.mode == Mode::Pretext && self.raw_text.is_none() {
            return Err(("mode", "mode `pretext` requires raw_text".into()));
        }
        if self.drug_sublabel.is_some() && self.main_label.as_deref() != Some(DRUGS) {
            return Err((
                "drug_sublabel",
                format!("drug_sublabel requires main_label `{DRUGS}`"),
            ));
        }
        Ok(())
    }

    /// Checks label membership against a taxonomy.
    pub fn check_labels(&self, taxonomy: &Taxonomy) -> Result<()> {
        if let Some(main) = &self.main_label {
            if !taxonomy.is_main_class(main) {
                return Err(Error::Document {
                    id: self.id.clone(),
                    message: format!("main_label `{main}` is not a taxonomy class"),
                });
            }
        }
        if let Some(sub) = &self.drug_sublabel {
            if !taxonomy.is_drug_subclass(sub) {
                return Err(Error::Document {
                    id: self.id.clone(),
                    message: format!("drug_sublabel `{sub}` is not a drug sub-class"),
                });
            }
        }
        Ok(())
    }
}

fn schema(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        line,
        field: field.to_owned(),
        message: message.into(),
    }
}

fn parse_record(line_no: usize, line: &str) -> Result<Document> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| schema(line_no, "record", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| schema(line_no, "record", "expected a JSON object"))?;

    let required_str = |field: &str| -> Result<&str> {
        match obj.get(field) {
            Some(Value::String(s)) => Ok(s),
            Some(_) => Err(schema(line_no, field, "expected a string")),
            None => Err(schema(line_no, field, "missing")),
        }
    };
    let id = required_str("id")?;
    if id.is_empty() {
        return Err(schema(line_no, "id", "must not be empty"));
    }
    required_str("source")?
        .parse::<SourceName>()
        .map_err(|e| schema(line_no, "source", e))?;
    required_str("mode")?
        .parse::<Mode>()
        .map_err(|e| schema(line_no, "mode", e))?;
    for field in [
        "raw_html",
        "raw_text",
        "main_label",
        "drug_sublabel",
        "extracted_text",
    ] {
        match obj.get(field) {
            None | Some(Value::Null) | Some(Value::String(_)) => {}
            Some(_) => return Err(schema(line_no, field, "expected a string or null")),
        }
    }
    if let Some(tokens) = obj.get("tokens") {
        let ok = tokens.is_null()
            || tokens
                .as_array()
                .is_some_and(|a| a.iter().all(Value::is_string));
        if !ok {
            return Err(schema(line_no, "tokens", "expected an array of strings"));
        }
    }
    if let Some(skipped) = obj.get("skipped") {
        if !skipped.is_boolean() {
            return Err(schema(line_no, "skipped", "expected a boolean"));
        }
    }

    let doc: Document =
        serde_json::from_value(value).map_err(|e| schema(line_no, "record", e.to_string()))?;
    doc.check_shape()
        .map_err(|(field, msg)| schema(line_no, field, msg))?;
    Ok(doc)
}

/// Reads JSON Lines records; blank lines are ignored.
pub fn read_corpus<R: Read>(reader: R) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| schema(line_no, "record", e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_record(line_no, &line)?;
        if !ids.insert(doc.id.clone()) {
            return Err(Error::DuplicateId(doc.id));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(file)
}

pub fn write_corpus_to<W: Write>(mut writer: W, docs: &[Document]) -> Result<()> {
    for doc in docs {
        let line = serde_json::to_string(doc).expect("documents serialize");
        writeln!(writer, "{line}").map_err(|e| Error::io("<writer>", e))?;
    }
    writer.flush().map_err(|e| Error::io("<writer>", e))
}

pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_corpus_to(std::io::BufWriter::new(file), docs)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_source_counts: BTreeMap<String, usize>,
    pub per_class_counts: BTreeMap<String, usize>,
    pub total: usize,
}

impl CorpusStats {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("Source                     Instances\n");
        for (name, count) in &self.per_source_counts {
            out.push_str(&format!("{name:<26} {count:>9}\n"));
        }
        out.push_str(&format!("{:<26} {:>9}\n\n", "Total", self.total));
        out.push_str("Class                              Instances   Share\n");
        for (name, count) in &self.per_class_counts {
            let share = if self.total == 0 {
                0.0
            } else {
                100.0 * *count as f64 / self.total as f64
            };
            out.push_str(&format!("{name:<34} {count:>9} {share:>6.2}%\n"));
        }
        out
    }
}

pub fn compute_stats(docs: &[Document]) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for doc in docs {
        *stats
            .per_source_counts
            .entry(doc.source.name.to_string())
            .or_default() += 1;
        let class = doc.main_label.as_deref().unwrap_or(UNLABELED);
        *stats.per_class_counts.entry(class.to_owned()).or_default() += 1;
        stats.total += 1;
    }
    stats
}

/// Concatenates batches, stamping each document with its batch's source tag.
pub fn fuse_sources(
    batches: Vec<(SourceTag, Vec<Document>)>,
) -> Result<(Vec<Document>, CorpusStats)> {
    let mut ids = HashSet::new();
    let mut fused = Vec::with_capacity(batches.iter().map(|(_, b)| b.len()).sum());
    for (tag, batch) in batches {
        for mut doc in batch {
            if !ids.insert(doc.id.clone()) {
                return Err(Error::DuplicateId(doc.id));
            }
            doc.source = tag;
            fused.push(doc);
        }
    }
    let stats = compute_stats(&fused);
    Ok((fused, stats))
}

/// Number of test items for a class of `count` items: round-half-up of
/// `count * fraction`, clamped so both sides keep at least one item.
pub fn test_count(count: usize, fraction: f64) -> usize {
    let raw = (count as f64 * fraction + 0.5).floor() as usize;
    raw.clamp(1, count.saturating_sub(1).max(1))
}

/// Stratified partition of indices `0..labels.len()` by label. Returns
/// (train, test) index lists in ascending order.
pub fn stratified_indices(
    labels: &[&str],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        by_class.entry(label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut members) in by_class {
        if members.len() < 2 {
            return Err(Error::ClassTooSmall {
                class: class.to_owned(),
                count: members.len(),
            });
        }
        members.shuffle(&mut rng);
        let n_test = test_count(members.len(), test_fraction);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Splits labeled documents per main class; see [`test_count`] for sizes.
pub fn stratified_split(
    docs: &[Document],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<Document>, Vec<Document>)> {
    let labels = docs
        .iter()
        .map(|d| {
            d.main_label.as_deref().ok_or_else(|| Error::Document {
                id: d.id.clone(),
                message: "stratified split needs a main_label".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (train, test) = stratified_indices(&labels, test_fraction, seed)?;
    Ok((
        train.into_iter().map(|i| docs[i].clone()).collect(),
        test.into_iter().map(|i| docs[i].clone()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag() -> SourceTag {
        SourceTag::new(SourceName::Agora, Mode::Pretext)
    }

    fn doc(id: &str, label: Option<&str>) -> Document {
        Document::from_text(id, tag(), "text").with_labels(label, None)
    }

    #[test]
    fn reads_records_in_order() {
        let body = r#"{"id":"a","source":"Agora","mode":"pretext","raw_text":"x"}
{"id":"b","source":"SilkRoad","mode":"marketplace","raw_html":"<p>y</p>","main_label":"Drugs"}

{"id":"c","source":"Duta10k","mode":"general","raw_html":"<p>z</p>"}
"#;
        let docs = read_corpus(body.as_bytes()).unwrap();
        let ids: Vec<_> = docs.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(docs[1].source.name, SourceName::SilkRoad);
    }

    #[test]
    fn missing_content_is_a_schema_error_at_that_line() {
        let body = "{\"id\":\"a\",\"source\":\"Agora\",\"mode\":\"pretext\",\"raw_text\":\"x\"}\n\
                    {\"id\":\"b\",\"source\":\"Agora\",\"mode\":\"general\"}\n";
        match read_corpus(body.as_bytes()) {
            Err(Error::Schema { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "raw_html");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_errors_name_the_field() {
        let cases = [
            (r#"{"source":"Agora","mode":"pretext","raw_text":"x"}"#, "id"),
            (r#"{"id":"a","source":"Tor","mode":"pretext","raw_text":"x"}"#, "source"),
            (r#"{"id":"a","source":"Agora","mode":"pdf","raw_text":"x"}"#, "mode"),
            (r#"{"id":"a","source":"Agora","mode":"pretext","raw_text":7}"#, "raw_text"),
            (r#"{"id":"a","source":"Agora","mode":"pretext","raw_html":"<p>"}"#, "mode"),
            (
                r#"{"id":"a","source":"Agora","mode":"pretext","raw_text":"x","main_label":"Fraud","drug_sublabel":"Benzos"}"#,
                "drug_sublabel",
            ),
            (r#"not json"#, "record"),
        ];
        for (line, expected) in cases {
            match read_corpus(line.as_bytes()) {
                Err(Error::Schema { field, .. }) => assert_eq!(field, expected, "{line}"),
                other => panic!("{line}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn duplicate_id_is_named() {
        let body = "{\"id\":\"a\",\"source\":\"Agora\",\"mode\":\"pretext\",\"raw_text\":\"x\"}\n".repeat(2);
        assert!(matches!(read_corpus(body.as_bytes()), Err(Error::DuplicateId(id)) if id == "a"));
    }

    #[test]
    fn fuse_counts_and_duplicates() {
        let (docs, stats) = fuse_sources(vec![(tag(), vec![])]).unwrap();
        assert!(docs.is_empty());
        assert_eq!(stats.total, 0);

        let a = vec![doc("1", Some("Drugs")), doc("2", Some("Fraud"))];
        let b = vec![doc("3", Some("Drugs")), doc("4", None), doc("5", Some("Porno"))];
        let silk = SourceTag::new(SourceName::SilkRoad, Mode::Marketplace);
        let (docs, stats) = fuse_sources(vec![(tag(), a.clone()), (silk, b)]).unwrap();
        assert_eq!(docs.len(), 5);
        assert_eq!(stats.per_class_counts.values().sum::<usize>(), 5);
        assert_eq!(stats.per_class_counts[UNLABELED], 1);
        assert_eq!(stats.per_source_counts["SilkRoad"], 3);
        assert_eq!(docs[2].source, silk);

        let err = fuse_sources(vec![(tag(), a.clone()), (tag(), a)]).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "1"));
    }

    #[test]
    fn stats_examples() {
        assert_eq!(compute_stats(&[]), CorpusStats::default());
        let docs = [
            doc("1", Some("Drugs")),
            doc("2", Some("Drugs")),
            doc("3", Some("Services")),
        ];
        let stats = compute_stats(&docs);
        assert_eq!(stats.total, 3);
        assert_eq!(stats.per_class_counts.len(), 2);
        assert_eq!(stats.per_class_counts["Drugs"], 2);
        assert_eq!(stats.per_class_counts["Services"], 1);
    }

    #[test]
    fn split_sizes() {
        let mut docs = Vec::new();
        for class in ["A", "B", "C"] {
            for i in 0..10 {
                docs.push(doc(&format!("{class}{i}"), Some(class)));
            }
        }
        let (train, test) = stratified_split(&docs, 0.2, 3).unwrap();
        assert_eq!(train.len(), 24);
        assert_eq!(test.len(), 6);
        for class in ["A", "B", "C"] {
            let n = test.iter().filter(|d| d.main_label.as_deref() == Some(class)).count();
            assert_eq!(n, 2);
        }
        let again = stratified_split(&docs, 0.2, 3).unwrap();
        assert_eq!(again.1, test);
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(test_count(7, 0.2), 1);
        assert_eq!(test_count(10, 0.25), 3); // 2.5 rounds up
        assert_eq!(test_count(2, 0.01), 1);
        assert_eq!(test_count(2, 0.99), 1);
        assert_eq!(test_count(5, 0.9), 4);
    }

    #[test]
    fn split_rejects_singleton_class() {
        let docs = [doc("1", Some("A")), doc("2", Some("A")), doc("3", Some("B"))];
        match stratified_split(&docs, 0.5, 0) {
            Err(Error::ClassTooSmall { class, count }) => {
                assert_eq!(class, "B");
                assert_eq!(count, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
