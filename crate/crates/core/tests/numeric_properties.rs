use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;

use oniontext::corpus::{
    compute_stats, fuse_sources, read_corpus, stratified_indices, write_corpus_to, Document, Mode,
    SourceName, SourceTag,
};
use oniontext::eval::{compute_metrics, confusion_matrix, micro_precision, micro_recall, top_confusions};
use oniontext::features::{fit_vocabulary, tfidf_transform};
use oniontext::fixtures::word_pools;
use oniontext::model::{predict, predict_proba, softmax, ClassifierModel, Task};

fn corpus() -> impl Strategy<Value = Vec<Vec<String>>> {
    let term = (0u8..20).prop_map(|i| format!("t{i:02}"));
    prop::collection::vec(prop::collection::vec(term, 1..10), 1..=10)
}

fn model_for(k: usize, weights: Vec<f64>, docs: &[Vec<String>]) -> ClassifierModel {
    ClassifierModel {
        task: Task::Main,
        class_names: (0..k).map(|i| format!("c{i}")).collect(),
        vocabulary: fit_vocabulary(docs, 1).unwrap(),
        weights,
        taxonomy_version: None,
    }
}

proptest! {
    #[test]
    fn duplicating_tokens_keeps_vector(docs in corpus(), k in 2usize..5) {
        let vocab = fit_vocabulary(&docs, 1).unwrap();
        for d in &docs {
            let repeated: Vec<String> = d.iter().flat_map(|t| std::iter::repeat_n(t.clone(), k)).collect();
            let a = tfidf_transform(d, &vocab);
            let b = tfidf_transform(&repeated, &vocab);
            prop_assert_eq!(a.entries.len(), b.entries.len());
            for ((i, x), (j, y)) in a.entries.iter().zip(&b.entries) {
                prop_assert_eq!(i, j);
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((a.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn idf_decreases_with_df(docs in corpus()) {
        let vocab = fit_vocabulary(&docs, 1).unwrap();
        for i in 0..vocab.len() {
            for j in 0..vocab.len() {
                if vocab.document_frequency[i] < vocab.document_frequency[j] {
                    prop_assert!(vocab.idf(i) > vocab.idf(j));
                }
            }
        }
    }

    #[test]
    fn softmax_shift_invariance(z in prop::collection::vec(-20.0f64..20.0, 1..8), c in -50.0f64..50.0) {
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        for (a, b) in softmax(&z).iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn class_permutation_permutes_probabilities(
        docs in corpus(),
        seed in any::<u64>(),
        k in 2usize..5,
    ) {
        let probe = fit_vocabulary(&docs, 1).unwrap();
        let width = probe.len() + 1;
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let weights: Vec<f64> = (0..k * width).map(|_| next()).collect();
        let model = model_for(k, weights.clone(), &docs);
        let perm: Vec<usize> = (0..k).rev().collect();
        let mut permuted_weights = Vec::with_capacity(weights.len());
        for &c in &perm {
            permuted_weights.extend_from_slice(&weights[c * width..(c + 1) * width]);
        }
        let permuted = model_for(k, permuted_weights, &docs);
        for d in &docs {
            let x = model.transform(d);
            let p = predict_proba(&model, &x).unwrap();
            let q = predict_proba(&permuted, &x).unwrap();
            for (new, &old) in perm.iter().enumerate() {
                prop_assert!((q[new] - p[old]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaling_counts_keeps_prediction(docs in corpus(), k in 2usize..4, reps in 2usize..4) {
        let width = fit_vocabulary(&docs, 1).unwrap().len() + 1;
        let weights: Vec<f64> = (0..k * width).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let model = model_for(k, weights, &docs);
        for d in &docs {
            let scaled: Vec<String> = d.iter().flat_map(|t| std::iter::repeat_n(t.clone(), reps)).collect();
            let a = predict(&model, &model.transform(d)).unwrap().0;
            let b = predict(&model, &model.transform(&scaled)).unwrap().0;
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn micro_averages_equal_accuracy(
        pairs in prop::collection::vec((0usize..6, 0usize..6), 1..100),
    ) {
        let names: Vec<String> = (0..6).map(|i| format!("c{i}")).collect();
        let cm = confusion_matrix(&pairs, &names).unwrap();
        let r = compute_metrics(&cm).unwrap();
        prop_assert!((micro_precision(&cm) - r.accuracy).abs() < 1e-12);
        prop_assert!((micro_recall(&cm) - r.accuracy).abs() < 1e-12);
        for c in top_confusions(&cm, 36) {
            prop_assert_ne!(c.true_class, c.predicted_class);
        }
    }

    #[test]
    fn stratified_split_tracks_fraction(
        sizes in prop::collection::vec(2usize..40, 1..6),
        fraction in 0.05f64..0.5,
        seed in any::<u64>(),
    ) {
        let labels: Vec<String> = sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(format!("c{c}"), n))
            .collect();
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        let (train, test) = stratified_indices(&refs, fraction, seed).unwrap();
        prop_assert_eq!(train.len() + test.len(), labels.len());
        let all: HashSet<usize> = train.iter().chain(&test).copied().collect();
        prop_assert_eq!(all.len(), labels.len());
        let mut per_class: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for (i, l) in refs.iter().enumerate() {
            let e = per_class.entry(l).or_default();
            e.0 += 1;
            if test.contains(&i) {
                e.1 += 1;
            }
        }
        for (n, t) in per_class.values() {
            let n = *n as f64;
            let share = *t as f64 / n;
            // clamping to one item per side can exceed 1/n on tiny classes
            let slack = (1.0 / n).max(if n <= 2.0 { 0.5 } else { 0.0 }) + 1e-12;
            prop_assert!((share - fraction).abs() <= slack, "{} of {}", t, n);
        }
        prop_assert_eq!((train, test), stratified_indices(&refs, fraction, seed).unwrap());
    }

    #[test]
    fn fusion_stats_ignore_grouping(sizes in prop::collection::vec(0usize..6, 1..6), cut in 0usize..6) {
        let tag = SourceTag::new(SourceName::Agora, Mode::Pretext);
        let classes = ["Drugs", "Services", "Fraud"];
        let docs: Vec<Document> = sizes
            .iter()
            .enumerate()
            .flat_map(|(b, &n)| (0..n).map(move |i| (b, i)))
            .map(|(b, i)| {
                Document::from_text(format!("d{b}-{i}"), tag, "x").with_labels(Some(classes[(b + i) % 3]), None)
            })
            .collect();
        let whole = fuse_sources(vec![(tag, docs.clone())]).unwrap().1;
        let cut = cut.min(docs.len());
        let (a, b) = docs.split_at(cut);
        let parts = fuse_sources(vec![(tag, a.to_vec()), (tag, b.to_vec())]).unwrap().1;
        prop_assert_eq!(&whole, &parts);
        prop_assert_eq!(whole, compute_stats(&docs));
    }

    #[test]
    fn corpus_round_trips(texts in prop::collection::vec(".{0,20}", 0..8)) {
        let tag = SourceTag::new(SourceName::Duta10k, Mode::General);
        let docs: Vec<Document> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::from_html(format!("doc{i}"), tag, t.clone()).with_labels(Some("Porno"), None))
            .collect();
        let mut buf = Vec::new();
        write_corpus_to(&mut buf, &docs).unwrap();
        prop_assert_eq!(read_corpus(buf.as_slice()).unwrap(), docs);
    }

    #[test]
    fn keyword_pools_disjoint(seed in any::<u64>(), k in 1usize..50) {
        let pools = word_pools(seed, k, 25, 100);
        let mut seen = HashSet::new();
        for w in pools.class_pools.iter().flatten().chain(&pools.noise) {
            prop_assert!(seen.insert(w.clone()));
        }
    }
}
