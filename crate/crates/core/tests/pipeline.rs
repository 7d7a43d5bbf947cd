//! The library stages chained through their public API on a small synthetic corpus.

use trigwarn_core::baselines::{TfidfGbtClassifier, TfidfGbtConfig};
use trigwarn_core::corpus::Corpus;
use trigwarn_core::encoder::ReferenceEncoder;
use trigwarn_core::heads::{train_ensemble, Ensemble, HeadConfig, LabeledSequences, WeightPolicy};
use trigwarn_core::metrics::report;
use trigwarn_core::predictions::{read_predictions, write_predictions, Prediction};
use trigwarn_core::segmenter::{segment_corpus, CleaningConfig, SegmentationConfig};
use trigwarn_core::store::{embed_corpus, EmbeddingStore};
use trigwarn_core::synthetic::{generate, ClassSpec, SyntheticConfig};
use trigwarn_core::{LabelVector, TriggerClass};

fn corpus(seed: u64, prefix: &str) -> Corpus {
    generate(&SyntheticConfig {
        n_documents: 160,
        min_words: 150,
        max_words: 450,
        classes: [(1, 0.5), (7, 0.3), (19, 0.2)]
            .into_iter()
            .map(|(c, prevalence)| ClassSpec { class: TriggerClass::from_number(c).unwrap(), prevalence })
            .collect(),
        marker_rate: 0.15,
        markers_per_class: 2,
        vocabulary_size: 300,
        id_prefix: prefix.into(),
        seed,
        ..Default::default()
    })
    .unwrap()
}

struct Embedded {
    _dir: tempfile::TempDir,
    train: EmbeddingStore,
    valid: EmbeddingStore,
    train_corpus: Corpus,
    valid_corpus: Corpus,
}

fn embedded() -> Embedded {
    let dir = tempfile::tempdir().unwrap();
    let (train_corpus, valid_corpus) = (corpus(11, "tr"), corpus(12, "va"));
    let (clean, seg) = (CleaningConfig::default(), SegmentationConfig::default());
    let encoder = ReferenceEncoder::new(256, 5).unwrap();
    let [train, valid] = [&train_corpus, &valid_corpus].map(|c| {
        let segments = segment_corpus(c, &clean, &seg).unwrap();
        assert!(segments.skipped.is_empty());
        let path = dir.path().join(format!("{}.bin", c.documents[0].id));
        embed_corpus(&encoder, &segments, &seg, &clean, &path).unwrap().0
    });
    Embedded { _dir: dir, train, valid, train_corpus, valid_corpus }
}

fn head_config() -> HeadConfig {
    HeadConfig { hidden_size: 16, learning_rate: 0.2, max_epochs: 12, max_grad_norm: Some(5.0), ..Default::default() }
}

#[test]
fn heads_over_reference_embeddings_recover_planted_classes() {
    let e = embedded();
    let train = LabeledSequences::align(&e.train, &e.train_corpus.label_map()).unwrap();
    let valid = LabeledSequences::align(&e.valid, &e.valid_corpus.label_map()).unwrap();
    let cfg = head_config();
    let policy = WeightPolicy::parse("15-32").unwrap();
    let ensemble = train_ensemble(&train, &valid, &cfg, &policy, true).unwrap();

    let preds: Vec<LabelVector> = (0..valid.len()).map(|i| ensemble.predict(&valid.sequence(i)).unwrap()).collect();
    let scores = report(&preds, valid.labels()).unwrap();
    assert_eq!(scores.per_class.len(), 32);
    assert!(scores.overall_present.f1_macro > 0.8, "{:?}\n{:?}", scores.overall_present, scores.per_class.iter().filter(|r| r.pos_ratio > 0.0).collect::<Vec<_>>());

    // only class 19 falls in the weighted range
    let rare = TriggerClass::from_number(19).unwrap();
    let n_pos = train.positives(rare);
    let expected = (train.len() - n_pos) as f64 / n_pos as f64;
    assert_eq!(ensemble.head(rare).pos_weight, Some(expected));
    assert_eq!(ensemble.head(TriggerClass::from_number(1).unwrap()).pos_weight, None);

    // a saved ensemble predicts exactly what the trained one does
    let dir = tempfile::tempdir().unwrap();
    ensemble.save(dir.path(), train.store_fingerprint(), train.dim(), &cfg, &policy).unwrap();
    let (loaded, manifest) = Ensemble::load(dir.path()).unwrap();
    assert_eq!(manifest.classes.len(), 32);
    for i in 0..valid.len() {
        assert_eq!(loaded.predict(&valid.sequence(i)).unwrap(), preds[i]);
    }
}

#[test]
fn reembedding_an_unchanged_corpus_reuses_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(3, "d");
    let (clean, seg) = (CleaningConfig::default(), SegmentationConfig::default());
    let segments = segment_corpus(&c, &clean, &seg).unwrap();
    let path = dir.path().join("store.bin");
    let encoder = ReferenceEncoder::new(32, 1).unwrap();
    let (first, fresh) = embed_corpus(&encoder, &segments, &seg, &clean, &path).unwrap();
    assert!(!fresh.up_to_date);
    assert_eq!(fresh.computed_segments, segments.n_segments());
    let (second, again) = embed_corpus(&encoder, &segments, &seg, &clean, &path).unwrap();
    assert!(again.up_to_date);
    assert_eq!(again.computed_segments, 0);
    assert_eq!(first.get(0), second.get(0));

    // a different encoder seed is a different store
    let other = ReferenceEncoder::new(32, 2).unwrap();
    assert!(embed_corpus(&other, &segments, &seg, &clean, &path).is_err());
}

#[test]
fn tfidf_baseline_predictions_round_trip_through_files() {
    let (train, valid) = (corpus(21, "tr"), corpus(22, "va"));
    let clf = TfidfGbtClassifier::train(&train, &CleaningConfig::default(), &TfidfGbtConfig::default()).unwrap();
    let preds: Vec<Prediction> = clf.predict_corpus(&valid);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("preds.jsonl");
    write_predictions(&path, &preds).unwrap();
    assert_eq!(read_predictions(&path).unwrap(), preds);

    let truth: Vec<LabelVector> = valid.iter().map(|d| d.labels.unwrap()).collect();
    let labels: Vec<LabelVector> = preds.iter().map(|p| p.labels).collect();
    let scores = report(&labels, &truth).unwrap();
    assert!(scores.overall_present.f1_macro > 0.8, "{:?}\n{:?}", scores.overall_present, scores.per_class.iter().filter(|r| r.pos_ratio > 0.0).collect::<Vec<_>>());
}
