//! Seeded synthetic corpora: labeled pages per class built from disjoint
//! per-class keyword pools plus a shared noise pool.
//!
//! Pool words are consonant-vowel pseudo-words ending in a vowel, so they
//! pass through preprocessing unchanged.

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Mode, SourceName, SourceTag};
use crate::extract::MarketplaceSelectorConfig;
use crate::model::Task;
use crate::pipeline::task_classes;
use crate::taxonomy::{Taxonomy, DRUGS};
use crate::{Error, Result};

/// Planted inside every generated `<script>` body.
pub const SCRIPT_SENTINEL: &str = "zqscriptsentinel";
/// Planted inside every generated `<style>` body.
pub const STYLE_SENTINEL: &str = "zqstylesentinel";
/// Planted inside comments and `<noscript>`.
pub const HIDDEN_SENTINEL: &str = "zqhiddensentinel";

const CONSONANTS: &[u8] = b"bcdfgklmnprtvz";
const VOWELS: &[u8] = b"aiou";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemplateMix {
    pub general: f64,
    pub marketplace: f64,
    pub pretext: f64,
}

impl Default for TemplateMix {
    fn default() -> Self {
        TemplateMix {
            general: 1.0,
            marketplace: 0.0,
            pretext: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub docs_per_class: usize,
    pub classes: Task,
    pub keyword_pool_size: usize,
    pub shared_noise_words: usize,
    /// Share of content tokens drawn from the class pool.
    pub separation: f64,
    pub tokens_per_doc: usize,
    pub template: TemplateMix,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            seed: 7,
            docs_per_class: 150,
            classes: Task::Main,
            keyword_pool_size: 25,
            shared_noise_words: 300,
            separation: 0.9,
            tokens_per_doc: 40,
            template: TemplateMix::default(),
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.separation) {
            return Err(Error::InvalidArgument(format!(
                "separation must lie in [0, 1], got {}",
                self.separation
            )));
        }
        for (name, value) in [
            ("docs_per_class", self.docs_per_class),
            ("keyword_pool_size", self.keyword_pool_size),
            ("shared_noise_words", self.shared_noise_words),
            ("tokens_per_doc", self.tokens_per_doc),
        ] {
            if value == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        let t = self.template;
        let weights = [t.general, t.marketplace, t.pretext];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidArgument(
                "template weights must be non-negative with a positive sum".into(),
            ));
        }
        Ok(())
    }
}

/// Selector config matching the generated marketplace template.
pub fn synthetic_marketplace_config() -> MarketplaceSelectorConfig {
    MarketplaceSelectorConfig::new(
        SourceName::Synthetic.as_str(),
        "h1.product-title",
        "div.product-description",
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordPools {
    pub class_pools: Vec<Vec<String>>,
    pub noise: Vec<String>,
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.gen_range(3..=4);
    let mut w = String::with_capacity(syllables * 2);
    for _ in 0..syllables {
        w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
    }
    w
}

/// Pairwise-disjoint class pools and a noise pool disjoint from all of them.
pub fn word_pools(seed: u64, n_classes: usize, pool_size: usize, noise_size: usize) -> WordPools {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut seen = HashSet::new();
    let mut fresh = |rng: &mut ChaCha8Rng| loop {
        let w = pseudo_word(rng);
        if seen.insert(w.clone()) {
            return w;
        }
    };
    let class_pools = (0..n_classes)
        .map(|_| (0..pool_size).map(|_| fresh(&mut rng)).collect())
        .collect();
    let noise = (0..noise_size).map(|_| fresh(&mut rng)).collect();
    WordPools { class_pools, noise }
}

fn doc_seed(seed: u64, class: usize, index: usize) -> u64 {
    // splitmix64 over the (seed, class, index) triple
    let mut z = seed
        .wrapping_add((class as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add((index as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn general_page(words: &[String]) -> String {
    let split = words.len().min(4);
    let (head, body) = words.split_at(split);
    let paragraphs: Vec<String> = body
        .chunks(10)
        .map(|c| format!("<p>{}</p>", c.join(" ")))
        .collect();
    format!(
        "<!DOCTYPE html><html><head><meta charset=\"utf-8\">\
         <script type=\"text/javascript\">var tracker = \"{SCRIPT_SENTINEL}\"; function go() {{ return 1; }}</script>\
         <style>.{STYLE_SENTINEL} {{ color: red; }}</style></head>\
         <body><!-- {HIDDEN_SENTINEL} --><h1>{}</h1>\n{}\n<noscript>{HIDDEN_SENTINEL}</noscript></body></html>",
        head.join(" "),
        paragraphs.join("\n")
    )
}

fn marketplace_page(words: &[String]) -> String {
    let split = words.len().min(4);
    let (title, description) = words.split_at(split);
    format!(
        "<html><head><title>Synthetic Market</title>\
         <script>window.{SCRIPT_SENTINEL} = true;</script></head><body>\
         <div class=\"nav\">Home Listings Vendors Escrow</div>\
         <h1 class=\"product-title\">{}</h1>\
         <div class=\"product-description\">{}</div>\
         <div class=\"footer\">Synthetic Market</div></body></html>",
        title.join(" "),
        description.join(" ")
    )
}

pub fn generate_corpus(spec: &GeneratorSpec, taxonomy: &Taxonomy) -> Result<Vec<Document>> {
    spec.validate()?;
    let classes = task_classes(spec.classes, taxonomy);
    // distinct pool streams per task, so a combined corpus has no shared keywords
    let pool_seed = match spec.classes {
        Task::Main => spec.seed,
        Task::Drugs => spec.seed ^ 0xd5a6_1266_f0c9_392c,
    };
    let pools = word_pools(
        pool_seed,
        classes.len(),
        spec.keyword_pool_size,
        spec.shared_noise_words,
    );
    let mix = WeightedIndex::new([
        spec.template.general,
        spec.template.marketplace,
        spec.template.pretext,
    ])
    .map_err(|e| Error::InvalidArgument(format!("template weights: {e}")))?;

    let mut docs = Vec::with_capacity(classes.len() * spec.docs_per_class);
    for (c, class) in classes.iter().enumerate() {
        let pool = &pools.class_pools[c];
        for i in 0..spec.docs_per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(doc_seed(spec.seed, c, i));
            let words: Vec<String> = (0..spec.tokens_per_doc)
                .map(|_| {
                    if rng.gen::<f64>() < spec.separation {
                        pool[rng.gen_range(0..pool.len())].clone()
                    } else {
                        pools.noise[rng.gen_range(0..pools.noise.len())].clone()
                    }
                })
                .collect();
            let id = format!("syn-{}-{c:02}-{i:04}", spec.classes);
            let doc = match mix.sample(&mut rng) {
                0 => Document::from_html(
                    id,
                    SourceTag::new(SourceName::Synthetic, Mode::General),
                    general_page(&words),
                ),
                1 => Document::from_html(
                    id,
                    SourceTag::new(SourceName::Synthetic, Mode::Marketplace),
                    marketplace_page(&words),
                ),
                _ => Document::from_text(
                    id,
                    SourceTag::new(SourceName::Synthetic, Mode::Pretext),
                    words.join(" "),
                ),
            };
            let doc = match spec.classes {
                Task::Main => doc.with_labels(Some(class), None),
                Task::Drugs => doc.with_labels(Some(DRUGS), Some(class)),
            };
            docs.push(doc);
        }
    }
    Ok(docs)
}
