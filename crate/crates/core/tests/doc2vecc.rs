use clinfuse::corpus::{build_vocab, Vocabulary};
use clinfuse::doc2vecc::{
    corrupt, cosine, negative_sample, pair_loss, train, DocEmbedding, EmbeddingConfig, EmbeddingModel, InferenceMode, Pair,
    UnigramTable,
};
use clinfuse::numkit::{grad_check, Matrix, ParamStore, Rng};

fn vocab_of(docs: &[Vec<String>]) -> Vocabulary {
    build_vocab(docs.iter().map(|d| d.iter().map(String::as_str)), 1)
}

fn topic_corpus(seed: u64) -> (Vec<Vec<String>>, Vec<usize>) {
    let topics = [
        ["sepsis", "lactate", "pressor", "shock", "fever", "culture"],
        ["fracture", "cast", "xray", "ortho", "splint", "bone"],
    ];
    let mut rng = Rng::new(seed);
    let mut docs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..200 {
        let t = i % 2;
        let doc = (0..20).map(|_| topics[t][rng.below(6)].to_string()).collect();
        docs.push(doc);
        labels.push(t);
    }
    (docs, labels)
}

#[test]
fn two_topic_corpus_separates() {
    let (docs, labels) = topic_corpus(3);
    let cfg = EmbeddingConfig {
        dim: 16,
        epochs: 5,
        subsample: 0.0,
        ..Default::default()
    };
    let model = train(&docs, vocab_of(&docs), cfg, &mut Rng::new(11)).unwrap();
    let mut rng = Rng::new(0);
    let embs: Vec<Vec<f64>> = docs.iter().map(|d| model.embed_document(d, InferenceMode::Exact, &mut rng).0).collect();
    let (mut within, mut nw, mut across, mut na) = (0.0, 0, 0.0, 0);
    for i in 0..embs.len() {
        for j in i + 1..embs.len() {
            let c = cosine(&embs[i], &embs[j]);
            if labels[i] == labels[j] {
                within += c;
                nw += 1;
            } else {
                across += c;
                na += 1;
            }
        }
    }
    let (within, across) = (within / nw as f64, across / na as f64);
    assert!(within > across, "within {within} across {across}");
}

#[test]
fn loss_descends_after_first_epoch() {
    for seed in 0..3 {
        let (docs, _) = topic_corpus(seed);
        let cfg = EmbeddingConfig {
            dim: 8,
            epochs: 2,
            ..Default::default()
        };
        let m = train(&docs, vocab_of(&docs), cfg, &mut Rng::new(seed)).unwrap();
        assert!(m.loss_history[1] < m.loss_history[0], "{:?}", m.loss_history);
    }
}

#[test]
fn finite_for_corruption_grid() {
    let (docs, _) = topic_corpus(1);
    for q in [0.0, 0.5, 0.9] {
        let cfg = EmbeddingConfig {
            dim: 8,
            epochs: 3,
            corruption: q,
            lr: 0.1,
            ..Default::default()
        };
        let m = train(&docs, vocab_of(&docs), cfg, &mut Rng::new(2)).unwrap();
        assert!(m.is_finite());
    }
}

#[test]
fn sampler_matches_three_quarter_power() {
    let table = UnigramTable::new(&[16, 1]).unwrap();
    let mut rng = Rng::new(8);
    let n = 100_000;
    let hits0 = (0..n).filter(|_| negative_sample(&mut rng, &table) == 0).count() as f64;
    let p = 8.0 / 9.0;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((hits0 - n as f64 * p).abs() < 3.0 * sd, "{hits0}");
    let a: Vec<usize> = (0..20).map(|_| negative_sample(&mut Rng::new(1), &table)).collect();
    assert!(a.iter().all(|&x| x == a[0]));
}

#[test]
fn sampled_with_zero_corruption_equals_exact_bitwise() {
    let (docs, _) = topic_corpus(5);
    let cfg = EmbeddingConfig {
        dim: 8,
        epochs: 1,
        ..Default::default()
    };
    let m = train(&docs, vocab_of(&docs), cfg, &mut Rng::new(1)).unwrap();
    let mut rng = Rng::new(0);
    for d in &docs[..20] {
        let exact = m.embed_document(d, InferenceMode::Exact, &mut rng).0;
        let sampled = m.embed_document(d, InferenceMode::Sampled { q: 0.0 }, &mut rng).0;
        assert_eq!(exact, sampled);
        // token mean computed directly
        let ids = m.encode(d);
        let mean: Vec<f64> = (0..8)
            .map(|k| ids.iter().map(|&w| m.input.get(w, k)).sum::<f64>() / ids.len() as f64)
            .collect();
        for (a, b) in exact.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn exact_embedding_is_permutation_invariant() {
    let (docs, _) = topic_corpus(6);
    let cfg = EmbeddingConfig {
        dim: 8,
        epochs: 1,
        ..Default::default()
    };
    let m = train(&docs, vocab_of(&docs), cfg, &mut Rng::new(1)).unwrap();
    let mut rng = Rng::new(0);
    let mut d = docs[0].clone();
    let a = m.embed_document(&d, InferenceMode::Exact, &mut rng).0;
    rng.shuffle(&mut d);
    let b = m.embed_document(&d, InferenceMode::Exact, &mut rng).0;
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn whole_document_window_with_no_corruption_is_plain_mean() {
    let mut rng = Rng::new(0);
    let c = corrupt(12, 0.0, &mut rng);
    assert_eq!(c.retained.len(), 12);
    assert_eq!(c.scale, 1.0);
}

#[test]
fn pair_loss_gradient_check() {
    for seed in 0..3 {
        let mut rng = Rng::new(seed);
        let (n, d) = (6, 4);
        let mut store = ParamStore::new();
        store.add_uniform("input", n, d, 0.5, &mut rng).unwrap();
        store.add_uniform("output", n, d, 0.5, &mut rng).unwrap();
        let pair = Pair {
            context: 1,
            target: 2,
            negatives: vec![3, 4, 4],
            doc: vec![0, 1, 5],
            doc_scale: 1.0 / (0.5 * 6.0),
        };
        let (iu, iv) = (store.id("input").unwrap(), store.id("output").unwrap());
        let report = grad_check(&mut store, 1e-4, 1e-4, |p, want| {
            let (u, v) = (p.value(iu).clone(), p.value(iv).clone());
            if want {
                let mut du = Matrix::zeros(n, d);
                let mut dv = Matrix::zeros(n, d);
                let l = pair_loss(&u, &v, &pair, Some((&mut du, &mut dv)));
                p.grad_mut(iu).add_assign(&du).unwrap();
                p.grad_mut(iv).add_assign(&dv).unwrap();
                l
            } else {
                pair_loss(&u, &v, &pair, None)
            }
        });
        assert!(report.passed(), "{report}");
    }
}

#[test]
fn model_file_round_trip_and_text_export() {
    let (docs, _) = topic_corpus(2);
    let cfg = EmbeddingConfig {
        dim: 5,
        epochs: 1,
        ..Default::default()
    };
    let m = train(&docs, vocab_of(&docs), cfg, &mut Rng::new(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("model.bin");
    m.save(&p).unwrap();
    let back = EmbeddingModel::load(&p).unwrap();
    assert_eq!(back.input, m.input);
    assert_eq!(back.output, m.output);
    assert_eq!(back.vocab, m.vocab);
    assert_eq!(back.config, m.config);
    assert_eq!(back.loss_history, m.loss_history);

    let t = dir.path().join("model.txt");
    m.export_text(&t).unwrap();
    let text = std::fs::read_to_string(&t).unwrap();
    assert_eq!(text.lines().count(), m.vocab.len());
    assert_eq!(text.lines().next().unwrap().split(' ').count(), 6);

    let e = vec![DocEmbedding {
        stay_id: 4,
        day: 1,
        vector: vec![0.25, -1.0],
        empty: false,
    }];
    let ep = dir.path().join("e.jsonl");
    clinfuse::doc2vecc::write_embeddings(&ep, &e).unwrap();
    assert_eq!(clinfuse::doc2vecc::read_embeddings(&ep).unwrap(), e);
}
