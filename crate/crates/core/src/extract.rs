//! Classifiable text from raw HTML.
//!
//! Two procedures: general pages keep all visible text, broken into clean
//! lines; marketplace product pages keep only the title and description
//! located by per-marketplace selectors.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::sync::OnceLock;

use ego_tree::NodeRef;
use regex::Regex;
use scraper::{ElementRef, Html, Node, Selector};
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Mode};
use crate::{Error, Result};

/// Subtrees whose content is never visible text.
const HIDDEN: &[&str] = &["script", "style", "noscript", "template"];

/// Elements that start a new line of rendered text.
const BLOCK: &[&str] = &[
    "address", "article", "aside", "blockquote", "body", "br", "caption", "dd", "div", "dl", "dt",
    "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6",
    "head", "header", "hr", "html", "li", "main", "nav", "ol", "option", "p", "pre", "section",
    "select", "table", "tbody", "td", "tfoot", "th", "thead", "title", "tr", "ul",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractionMode {
    General,
    Marketplace,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedText {
    /// Non-empty, trimmed, markup-free lines.
    pub lines: Vec<String>,
    pub mode: ExtractionMode,
}

impl ExtractedText {
    pub fn joined(&self) -> String {
        self.lines.join("\n")
    }
}

fn headline_split() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[ \t\u{a0}]*\t[ \t\u{a0}]*|[ \u{a0}]{2,}").unwrap())
}

fn tag_like() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"</?[A-Za-z][^<>]*>").unwrap())
}

fn collect_visible(node: NodeRef<'_, Node>, out: &mut String) {
    match node.value() {
        Node::Text(text) => out.push_str(text),
        Node::Element(el) => {
            let name = el.name();
            if HIDDEN.contains(&name) {
                return;
            }
            let block = BLOCK.contains(&name);
            if block {
                out.push('\n');
            }
            for child in node.children() {
                collect_visible(child, out);
            }
            if block {
                out.push('\n');
            }
        }
        Node::Document | Node::Fragment => {
            for child in node.children() {
                collect_visible(child, out);
            }
        }
        // comments, doctype, processing instructions
        _ => {}
    }
}

/// General-page extraction: drop script/style (and comment/noscript)
/// content, take the remaining text, split into trimmed lines, split lines
/// holding several headlines (runs of two or more spaces, or tabs), and drop
/// blank lines.
pub fn extract_general(html: &str) -> ExtractedText {
    let doc = Html::parse_document(html);
    let mut text = String::new();
    collect_visible(doc.tree.root(), &mut text);

    let lines = text
        .lines()
        .map(str::trim)
        .flat_map(|line| headline_split().split(line))
        .map(|chunk| tag_like().replace_all(chunk, "").trim().to_owned())
        .filter(|chunk| !chunk.is_empty())
        .collect();
    ExtractedText {
        lines,
        mode: ExtractionMode::General,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketplaceSelectorConfig {
    #[serde(rename = "marketplace")]
    pub marketplace_name: String,
    pub title_selector: String,
    pub description_selector: String,
}

impl MarketplaceSelectorConfig {
    pub fn new(marketplace: &str, title: &str, description: &str) -> Self {
        MarketplaceSelectorConfig {
            marketplace_name: marketplace.to_owned(),
            title_selector: title.to_owned(),
            description_selector: description.to_owned(),
        }
    }

    fn compile(&self) -> Result<(Selector, Selector)> {
        let parse = |which: &str, s: &str| {
            Selector::parse(s).map_err(|e| {
                Error::Config(format!(
                    "marketplace `{}`: invalid {which} selector `{s}`: {e}",
                    self.marketplace_name
                ))
            })
        };
        Ok((
            parse("title", &self.title_selector)?,
            parse("description", &self.description_selector)?,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        self.compile().map(|_| ())
    }
}

pub type SelectorRegistry = HashMap<String, MarketplaceSelectorConfig>;

/// Reads a JSON Lines selector file into a registry keyed by marketplace.
pub fn read_selector_configs<R: Read>(reader: R) -> Result<SelectorRegistry> {
    let mut registry = SelectorRegistry::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::Config(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let config: MarketplaceSelectorConfig = serde_json::from_str(&line)
            .map_err(|e| Error::Config(format!("selector file line {}: {e}", i + 1)))?;
        config.validate()?;
        registry.insert(config.marketplace_name.clone(), config);
    }
    Ok(registry)
}

pub fn load_selector_configs(path: &Path) -> Result<SelectorRegistry> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_selector_configs(file)
}

fn element_text(el: ElementRef<'_>) -> String {
    let mut raw = String::new();
    collect_visible(*el, &mut raw);
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn first_text(doc: &Html, selector: &Selector) -> Option<String> {
    doc.select(selector)
        .map(element_text)
        .find(|text| !text.is_empty())
}

/// Title and description of a marketplace product page. `None` when the
/// description selector finds no element with text: listing pages that
/// describe no single item are skipped this way.
pub fn extract_marketplace(
    html: &str,
    config: &MarketplaceSelectorConfig,
) -> Result<Option<(String, String)>> {
    let (title_sel, desc_sel) = config.compile()?;
    let doc = Html::parse_document(html);
    let Some(description) = first_text(&doc, &desc_sel) else {
        return Ok(None);
    };
    let title = first_text(&doc, &title_sel).unwrap_or_default();
    Ok(Some((title, description)))
}

/// Fills `extracted_text` according to the document's mode. Marketplace
/// pages without a description are returned with `skipped` set.
pub fn extract_document(mut doc: Document, configs: &SelectorRegistry) -> Result<Document> {
    let doc_err = |doc: &Document, message: String| Error::Document {
        id: doc.id.clone(),
        message,
    };
    match doc.source.mode {
        Mode::Pretext => {
            let text = doc
                .raw_text
                .clone()
                .ok_or_else(|| doc_err(&doc, "pretext mode requires raw_text".into()))?;
            doc.extracted_text = Some(text);
        }
        Mode::General => {
            let markup = doc
                .raw_html
                .as_deref()
                .or(doc.raw_text.as_deref())
                .unwrap_or_default();
            doc.extracted_text = Some(extract_general(markup).joined());
        }
        Mode::Marketplace => {
            let market = doc.source.name.as_str();
            let config = configs.get(market).ok_or_else(|| {
                doc_err(
                    &doc,
                    format!("no selector configuration registered for marketplace `{market}`"),
                )
            })?;
            let html = doc
                .raw_html
                .as_deref()
                .ok_or_else(|| doc_err(&doc, "marketplace mode requires raw_html".into()))?;
            match extract_marketplace(html, config)? {
                Some((title, description)) => {
                    doc.extracted_text = Some(if title.is_empty() {
                        description
                    } else {
                        format!("{title}\n{description}")
                    });
                }
                None => {
                    doc.extracted_text = None;
                    doc.skipped = true;
                }
            }
        }
    }
    Ok(doc)
}
