//! The label taxonomy: 19 main classes, the drug sub-class table, and the
//! tables that map Duta10k labels and Agora category paths onto main classes.
//!
//! Rows live in CSV files (see [`crate::resources`]); nothing here hard-codes
//! a table row.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::resources::{self, csv_rows};
use crate::{normalize_label, Error, Result};

pub const DRUGS: &str = "Drugs";
pub const DROPPED: &str = "DROPPED";

pub const EXPECTED_MAIN_CLASSES: usize = 19;
pub const EXPECTED_DRUG_ROWS: usize = 49;
pub const EXPECTED_DISTINCT_DRUG_NAMES: usize = 48;
pub const EXPECTED_AGORA_TARGETS: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DutaRow {
    pub original_label: String,
    /// Empty when the row applies to the label as a whole.
    pub original_sublabel: String,
    pub target: MainTarget,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgoraRow {
    pub category: String,
    pub target: String,
    pub drug_subclass: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MainTarget {
    Class(String),
    Dropped,
}

impl MainTarget {
    fn parse(raw: &str) -> Self {
        let raw = normalize_label(raw);
        if raw == DROPPED {
            MainTarget::Dropped
        } else {
            MainTarget::Class(raw)
        }
    }

    pub fn class(&self) -> Option<&str> {
        match self {
            MainTarget::Class(c) => Some(c),
            MainTarget::Dropped => None,
        }
    }
}

impl fmt::Display for MainTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MainTarget::Class(c) => f.write_str(c),
            MainTarget::Dropped => f.write_str(DROPPED),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Zero-based data row of `duta_map.csv`.
    Duta { row: usize },
    /// Zero-based data row of `agora_map.csv`.
    Agora { row: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingResult {
    pub main_class: MainTarget,
    pub drug_sublabel: Option<String>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    pub main_classes: Vec<String>,
    /// As printed, duplicates retained.
    pub drug_subclass_rows: Vec<String>,
    pub duta_rows: Vec<DutaRow>,
    pub agora_rows: Vec<AgoraRow>,
}

impl Taxonomy {
    /// The tables embedded in the crate.
    pub fn shipped() -> Self {
        Self::load(None).expect("embedded taxonomy tables parse")
    }

    /// Loads the four tables, taking any file present in `dir` over the
    /// embedded copy.
    pub fn load(dir: Option<&Path>) -> Result<Self> {
        Self::from_csv(
            &resources::read(dir, resources::MAIN_CLASSES)?,
            &resources::read(dir, resources::DRUG_SUBCLASSES)?,
            &resources::read(dir, resources::DUTA_MAP)?,
            &resources::read(dir, resources::AGORA_MAP)?,
        )
    }

    pub fn from_csv(main: &str, drugs: &str, duta: &str, agora: &str) -> Result<Self> {
        let main_classes = csv_rows(resources::MAIN_CLASSES, main, 2)?
            .into_iter()
            .map(|r| normalize_label(&r[1]))
            .collect();
        let drug_subclass_rows = csv_rows(resources::DRUG_SUBCLASSES, drugs, 2)?
            .into_iter()
            .map(|r| normalize_label(&r[1]))
            .collect();
        let duta_rows = csv_rows(resources::DUTA_MAP, duta, 3)?
            .into_iter()
            .map(|r| DutaRow {
                original_label: normalize_label(&r[0]),
                original_sublabel: normalize_label(&r[1]),
                target: MainTarget::parse(&r[2]),
            })
            .collect();
        let agora_rows = csv_rows(resources::AGORA_MAP, agora, 3)?
            .into_iter()
            .map(|r| {
                let sub = normalize_label(&r[2]);
                AgoraRow {
                    category: normalize_label(&r[0]),
                    target: normalize_label(&r[1]),
                    drug_subclass: (!sub.is_empty()).then_some(sub),
                }
            })
            .collect();
        Ok(Taxonomy {
            main_classes,
            drug_subclass_rows,
            duta_rows,
            agora_rows,
        })
    }

    pub fn is_main_class(&self, name: &str) -> bool {
        let name = normalize_label(name);
        self.main_classes.contains(&name)
    }

    pub fn main_class_index(&self, name: &str) -> Option<usize> {
        let name = normalize_label(name);
        self.main_classes.iter().position(|c| *c == name)
    }

    /// Distinct drug sub-class names in first-appearance order.
    pub fn distinct_drug_subclasses(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.drug_subclass_rows
            .iter()
            .filter(|name| seen.insert(name.as_str()))
            .cloned()
            .collect()
    }

    pub fn is_drug_subclass(&self, name: &str) -> bool {
        let name = normalize_label(name);
        self.drug_subclass_rows.contains(&name)
    }

    /// Short content digest of all four tables. Models record it so that a
    /// model trained under one taxonomy is not evaluated under another.
    pub fn version(&self) -> String {
        let mut hasher = Sha256::new();
        let mut feed = |section: &str, items: &mut dyn Iterator<Item = String>| {
            hasher.update(section.as_bytes());
            hasher.update([0]);
            for item in items {
                hasher.update(item.as_bytes());
                hasher.update([0]);
            }
        };
        feed("main", &mut self.main_classes.iter().cloned());
        feed("drugs", &mut self.drug_subclass_rows.iter().cloned());
        feed(
            "duta",
            &mut self.duta_rows.iter().map(|r| {
                format!("{}\t{}\t{}", r.original_label, r.original_sublabel, r.target)
            }),
        );
        feed(
            "agora",
            &mut self.agora_rows.iter().map(|r| {
                format!(
                    "{}\t{}\t{}",
                    r.category,
                    r.target,
                    r.drug_subclass.as_deref().unwrap_or("")
                )
            }),
        );
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Maps an original Duta10k label (and optional sub-label).
    ///
    /// An exact (label, sub-label) row wins; otherwise the label-level row
    /// (empty sub-label) applies; otherwise all rows of the label must agree
    /// on one target.
    pub fn map_duta_label(&self, original: &str, sub: Option<&str>) -> Result<MappingResult> {
        let original = normalize_label(original);
        let sub = sub.map(normalize_label).filter(|s| !s.is_empty());
        let rows: Vec<(usize, &DutaRow)> = self
            .duta_rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.original_label == original)
            .collect();
        if rows.is_empty() {
            let known: BTreeSet<&str> = self
                .duta_rows
                .iter()
                .map(|r| r.original_label.as_str())
                .collect();
            return Err(Error::UnknownDutaLabel {
                label: original,
                known: known.into_iter().collect::<Vec<_>>().join(", "),
            });
        }
        let hit = sub
            .as_deref()
            .and_then(|s| rows.iter().find(|(_, r)| r.original_sublabel == s))
            .or_else(|| rows.iter().find(|(_, r)| r.original_sublabel.is_empty()))
            .or_else(|| {
                let first = &rows[0].1.target;
                rows.iter()
                    .all(|(_, r)| r.target == *first)
                    .then_some(&rows[0])
            });
        match hit {
            Some((row, r)) => Ok(MappingResult {
                main_class: r.target.clone(),
                drug_sublabel: None,
                provenance: Provenance::Duta { row: *row },
            }),
            None => Err(Error::UnknownDutaLabel {
                label: format!("{original} / {}", sub.unwrap_or_default()),
                known: rows
                    .iter()
                    .map(|(_, r)| format!("{} / {}", r.original_label, r.original_sublabel))
                    .collect::<Vec<_>>()
                    .join(", "),
            }),
        }
    }

    /// Maps an Agora category path to its main class and, for drug paths,
    /// its drug sub-class.
    pub fn map_agora_label(&self, category: &str) -> Result<MappingResult> {
        let category = normalize_label(category);
        let (row, r) = self
            .agora_rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.category == category)
            .ok_or_else(|| Error::UnknownAgoraCategory(category.clone()))?;
        Ok(MappingResult {
            main_class: MainTarget::Class(r.target.clone()),
            drug_sublabel: r.drug_subclass.clone(),
            provenance: Provenance::Agora { row },
        })
    }

    /// Derives the drug sub-class of an Agora `Drugs/...` path: the prefix is
    /// stripped and the remaining segments are joined with a space. Table
    /// names that keep the slash (`Cannabis/Weed`) match the slash-joined
    /// remainder instead. Non-drug paths yield `None`.
    pub fn resolve_drug_subclass(&self, category_path: &str) -> Result<Option<String>> {
        let path = normalize_label(category_path);
        let Some(rest) = path.strip_prefix("Drugs/") else {
            return Ok(None);
        };
        let segments: Vec<&str> = rest.split('/').map(str::trim).collect();
        let spaced = segments.join(" ");
        if self.is_drug_subclass(&spaced) {
            return Ok(Some(spaced));
        }
        let slashed = segments.join("/");
        if self.is_drug_subclass(&slashed) {
            return Ok(Some(slashed));
        }
        Err(Error::UnknownDrugSubclass {
            path,
            derived: spaced,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for check in &self.checks {
            let mark = if check.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{mark}  {:<28} {}", check.name, check.detail)?;
        }
        for v in &self.violations {
            writeln!(f, "  violation: {v}")?;
        }
        Ok(())
    }
}

/// Checks the table counts and referential integrity. Never fails; every
/// problem becomes a report entry.
pub fn validate_taxonomy(t: &Taxonomy) -> ValidationReport {
    let mut checks = Vec::new();
    let mut violations = Vec::new();

    let mut count_check = |name: &str, actual: usize, expected: usize, what: &str| {
        checks.push(Check {
            name: name.to_owned(),
            passed: actual == expected,
            detail: format!("{actual} {what} (expected {expected})"),
        });
    };

    let main_set: BTreeSet<&str> = t.main_classes.iter().map(String::as_str).collect();
    count_check(
        "main_class_count",
        main_set.len(),
        EXPECTED_MAIN_CLASSES,
        "distinct main classes",
    );
    count_check(
        "main_class_rows",
        t.main_classes.len(),
        EXPECTED_MAIN_CLASSES,
        "main class rows",
    );
    count_check(
        "drug_subclass_rows",
        t.drug_subclass_rows.len(),
        EXPECTED_DRUG_ROWS,
        "drug sub-class rows",
    );
    count_check(
        "drug_subclass_names",
        t.distinct_drug_subclasses().len(),
        EXPECTED_DISTINCT_DRUG_NAMES,
        "distinct drug sub-class names",
    );
    let agora_targets: BTreeSet<&str> = t.agora_rows.iter().map(|r| r.target.as_str()).collect();
    count_check(
        "agora_target_classes",
        agora_targets.len(),
        EXPECTED_AGORA_TARGETS,
        "distinct Agora target classes",
    );

    let mut seen = BTreeMap::new();
    for (i, name) in t.main_classes.iter().enumerate() {
        if let Some(first) = seen.insert(name.as_str(), i) {
            violations.push(format!(
                "main class `{name}` listed twice (rows {} and {})",
                first + 1,
                i + 1
            ));
        }
    }

    for r in &t.duta_rows {
        if let MainTarget::Class(c) = &r.target {
            if !main_set.contains(c.as_str()) {
                violations.push(format!(
                    "duta_map `{} / {}` targets unknown main class `{c}`",
                    r.original_label, r.original_sublabel
                ));
            }
        }
    }
    let mut duta_keys = BTreeSet::new();
    for r in &t.duta_rows {
        if !duta_keys.insert((&r.original_label, &r.original_sublabel)) {
            violations.push(format!(
                "duta_map `{} / {}` listed twice",
                r.original_label, r.original_sublabel
            ));
        }
    }

    let mut agora_keys = BTreeSet::new();
    for r in &t.agora_rows {
        if !agora_keys.insert(&r.category) {
            violations.push(format!("agora_map `{}` listed twice", r.category));
        }
        if !main_set.contains(r.target.as_str()) {
            violations.push(format!(
                "agora_map `{}` targets unknown main class `{}`",
                r.category, r.target
            ));
        }
        if let Some(sub) = &r.drug_subclass {
            if r.target != DRUGS {
                violations.push(format!(
                    "agora_map `{}` carries drug sub-class `{sub}` but targets `{}`",
                    r.category, r.target
                ));
            }
            if !t.is_drug_subclass(sub) {
                violations.push(format!(
                    "agora_map `{}` names unknown drug sub-class `{sub}`",
                    r.category
                ));
            }
        }
        if r.target == DRUGS && r.category.starts_with("Drugs/") {
            match t.resolve_drug_subclass(&r.category) {
                Ok(derived) if derived == r.drug_subclass => {}
                Ok(derived) => violations.push(format!(
                    "agora_map `{}` lists sub-class {:?} but the path derives {:?}",
                    r.category, r.drug_subclass, derived
                )),
                Err(e) => violations.push(format!("agora_map `{}`: {e}", r.category)),
            }
        }
    }

    checks.push(Check {
        name: "referential_integrity".to_owned(),
        passed: violations.is_empty(),
        detail: format!("{} violation(s)", violations.len()),
    });

    ValidationReport { checks, violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_tables_validate() {
        let report = validate_taxonomy(&Taxonomy::shipped());
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn duta_examples() {
        let t = Taxonomy::shipped();
        let class = |l, s| t.map_duta_label(l, s).unwrap().main_class;
        assert_eq!(class("Hacking", None), MainTarget::Class("Services".into()));
        assert_eq!(
            class("Human-Trafficking", None),
            MainTarget::Class("Violence".into())
        );
        assert_eq!(class("Casino", Some("Gambling")), MainTarget::Dropped);
        assert_eq!(
            class("Pornography", Some("General-pornography")),
            MainTarget::Class("Porno".into())
        );
        // label-level consensus when no sub-label is given
        assert_eq!(class("Drugs", None), MainTarget::Class("Drugs".into()));
    }

    #[test]
    fn unknown_duta_label_lists_known() {
        let err = Taxonomy::shipped().map_duta_label("Gardening", None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("Gardening") && msg.contains("Hacking"), "{msg}");
    }

    #[test]
    fn agora_examples() {
        let t = Taxonomy::shipped();
        let r = t.map_agora_label("Drugs/Opioids/Heroin").unwrap();
        assert_eq!(r.main_class, MainTarget::Class("Drugs".into()));
        assert_eq!(r.drug_sublabel.as_deref(), Some("Opioids Heroin"));
        let r = t.map_agora_label("Chemicals").unwrap();
        assert_eq!(r.main_class, MainTarget::Class("Substances for Drugs".into()));
        assert_eq!(r.drug_sublabel, None);
        assert!(matches!(
            t.map_agora_label("Pets/Cats"),
            Err(Error::UnknownAgoraCategory(_))
        ));
    }

    #[test]
    fn resolve_paths() {
        let t = Taxonomy::shipped();
        assert_eq!(
            t.resolve_drug_subclass("Drugs/Psychedelics/2C").unwrap().as_deref(),
            Some("Psychedelics 2C")
        );
        assert_eq!(
            t.resolve_drug_subclass("Drugs/Barbiturates").unwrap().as_deref(),
            Some("Barbiturates")
        );
        assert_eq!(
            t.resolve_drug_subclass("Drugs/Cannabis/Weed").unwrap().as_deref(),
            Some("Cannabis/Weed")
        );
        assert_eq!(t.resolve_drug_subclass("Weapons/Ammunition").unwrap(), None);
        assert!(t.resolve_drug_subclass("Drugs/Opioids/Kratom").is_err());
    }

    #[test]
    fn labels_compare_after_whitespace_collapse() {
        let t = Taxonomy::shipped();
        let r = t.map_agora_label("  Info/eBooks/Philosophy ").unwrap();
        assert_eq!(r.main_class.class(), Some("Library Information"));
        assert!(t.is_main_class("Counterfeit   Money"));
        assert!(!t.is_main_class("counterfeit money"));
    }

    #[test]
    fn deleting_drugs_orphans_every_drug_mapping() {
        let mut t = Taxonomy::shipped();
        t.main_classes.retain(|c| c != DRUGS);
        let report = validate_taxonomy(&t);
        assert!(!report.passed());
        let orphaned = t.agora_rows.iter().filter(|r| r.target == DRUGS).count();
        for r in t.agora_rows.iter().filter(|r| r.target == DRUGS) {
            assert!(
                report.violations.iter().any(|v| v.contains(&format!("`{}`", r.category))),
                "missing {}",
                r.category
            );
        }
        assert!(orphaned >= 48);
    }

    #[test]
    fn duplicated_main_class_fails_count() {
        let mut t = Taxonomy::shipped();
        t.main_classes[1] = t.main_classes[0].clone();
        let report = validate_taxonomy(&t);
        let check = report
            .checks
            .iter()
            .find(|c| c.name == "main_class_count")
            .unwrap();
        assert!(!check.passed);
        assert!(check.detail.starts_with("18 "));
    }

    #[test]
    fn version_is_stable_and_content_sensitive() {
        let a = Taxonomy::shipped();
        let mut b = a.clone();
        assert_eq!(a.version(), b.version());
        b.agora_rows[0].target = "Fraud".into();
        assert_ne!(a.version(), b.version());
    }
}
