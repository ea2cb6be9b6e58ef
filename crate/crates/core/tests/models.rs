mod common;

use clinfuse::models::{
    concat_inputs, embedding_day, fit, load_checkpoint, save_checkpoint, Classifier, EmbeddingVisibility, ModelSpec,
    Sample, Structure, TrainConfig,
};
use clinfuse::numkit::{grad_check, Matrix, OptimizerKind, ParamStore, Rng};
use common::oracles;

fn spec(structure: Structure, emb_dim: usize) -> ModelSpec {
    ModelSpec {
        structure,
        input_dim: 3,
        emb_dim,
        hidden: 4,
        text_hidden: 3,
        joint_hidden: 5,
        visibility: EmbeddingVisibility::FromStart,
    }
}

fn random_sample(rng: &mut Rng, steps: usize, input: usize, emb: usize) -> Sample {
    let x = Matrix::from_vec(steps, input, (0..steps * input).map(|_| rng.normal()).collect()).unwrap();
    Sample {
        stay_id: 0,
        x,
        e1: (0..emb).map(|_| rng.normal()).collect(),
        e2: (0..emb).map(|_| rng.normal()).collect(),
        label: u8::from(rng.bernoulli(0.5)),
    }
}

fn perturb(store: &mut ParamStore, rng: &mut Rng, scale: f64) {
    for id in store.ids().collect::<Vec<_>>() {
        for v in store.value_mut(id).as_mut_slice() {
            *v += rng.uniform_range(-scale, scale);
        }
    }
}

fn value(store: &ParamStore, name: &str) -> Matrix {
    store.value(store.id(name).unwrap()).clone()
}

#[test]
fn lstm_forward_matches_oracle() {
    for case in 0..10 {
        let mut rng = Rng::new(case);
        let (input, hidden, steps) = (1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(6));
        let sp = ModelSpec {
            input_dim: input,
            hidden,
            ..spec(Structure::Lstm, 0)
        };
        let mut m = Classifier::new(sp, case).unwrap();
        perturb(&mut m.params, &mut rng, 0.7);
        let s = random_sample(&mut rng, steps, input, 0);
        let pass = m.forward(&s).unwrap();
        let p = &m.params;
        let (hs, cs) = oracles::lstm(&s.x, &value(p, "lstm.wx"), &value(p, "lstm.wh"), &value(p, "lstm.peep"), &value(p, "lstm.bias"));
        for t in 0..steps {
            for k in 0..hidden {
                assert!((pass.lstm.h(t)[k] - hs[t][k]).abs() < 1e-12);
                assert!((pass.lstm.c(t)[k] - cs[t][k]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn fusion_forward_matches_oracle() {
    for case in 0..10 {
        let mut rng = Rng::new(100 + case);
        let sp = ModelSpec {
            input_dim: 1 + rng.below(3),
            emb_dim: 1 + rng.below(4),
            hidden: 1 + rng.below(4),
            text_hidden: 1 + rng.below(4),
            joint_hidden: 1 + rng.below(5),
            ..spec(Structure::Multimodal, 1)
        };
        let mut m = Classifier::new(sp.clone(), case).unwrap();
        perturb(&mut m.params, &mut rng, 0.7);
        let s = random_sample(&mut rng, 4, sp.input_dim, sp.emb_dim);
        let pass = m.forward(&s).unwrap();
        let p = &m.params;
        let y = oracles::fusion(
            pass.lstm.last_h(),
            &s.e1,
            &s.e2,
            &value(p, "fusion.we"),
            &value(p, "fusion.be"),
            &value(p, "fusion.wj"),
            &value(p, "fusion.bj"),
            &value(p, "fusion.wy"),
            &value(p, "fusion.by"),
        );
        assert!((pass.y_hat - y).abs() < 1e-12);
    }
}

#[test]
fn zero_parameters_predict_one_half() {
    for (st, e) in [(Structure::Lstm, 0), (Structure::Lstm, 2), (Structure::Multimodal, 2)] {
        let mut m = Classifier::new(spec(st, e), 1).unwrap();
        for id in m.params.ids().collect::<Vec<_>>() {
            m.params.value_mut(id).fill(0.0);
        }
        let s = random_sample(&mut Rng::new(2), 5, 3, e);
        assert_eq!(m.predict(&s).unwrap(), 0.5);
        assert!(m.forward(&s).unwrap().lstm.hs.iter().all(|&h| h == 0.0));
    }
}

#[test]
fn gradients_pass_finite_difference_check() {
    for (st, e) in [(Structure::Lstm, 0), (Structure::Lstm, 2), (Structure::Multimodal, 2)] {
        for seed in 0..3 {
            let mut rng = Rng::new(seed + 10);
            let mut m = Classifier::new(spec(st, e), seed).unwrap();
            perturb(&mut m.params, &mut rng, 0.3);
            let samples: Vec<Sample> = (0..3).map(|_| random_sample(&mut rng, 5, 3, e)).collect();
            let refs: Vec<&Sample> = samples.iter().collect();
            let mut store = m.params.clone();
            let report = grad_check(&mut store, 1e-4, 1e-4, |p, want| m.objective(p, &refs, want).unwrap());
            assert!(report.passed(), "{st:?} e={e} seed {seed}\n{report}");
        }
    }
}

#[test]
fn fusion_is_invariant_to_joint_permutation() {
    let mut rng = Rng::new(4);
    let mut m = Classifier::new(spec(Structure::Multimodal, 2), 3).unwrap();
    perturb(&mut m.params, &mut rng, 0.5);
    let s = random_sample(&mut rng, 6, 3, 2);
    let before = m.predict(&s).unwrap();
    let perm = [3usize, 0, 4, 1, 2];
    let (wj, bj, wy) = (value(&m.params, "fusion.wj"), value(&m.params, "fusion.bj"), value(&m.params, "fusion.wy"));
    let mut wj2 = wj.clone();
    let mut bj2 = bj.clone();
    let mut wy2 = wy.clone();
    for (new, &old) in perm.iter().enumerate() {
        wj2.row_mut(new).copy_from_slice(wj.row(old));
        bj2.set(0, new, bj.get(0, old));
        wy2.set(0, new, wy.get(0, old));
    }
    for (n, v) in [("fusion.wj", wj2), ("fusion.bj", bj2), ("fusion.wy", wy2)] {
        let id = m.params.id(n).unwrap();
        m.params.set_value(id, v).unwrap();
    }
    assert!((m.predict(&s).unwrap() - before).abs() < 1e-14);
}

#[test]
fn benchmark_is_subnetwork_of_fusion() {
    let mut rng = Rng::new(8);
    let mut bench = Classifier::new(spec(Structure::Lstm, 0), 1).unwrap();
    perturb(&mut bench.params, &mut rng, 0.5);
    let mut fusion = Classifier::new(spec(Structure::Multimodal, 2), 2).unwrap();
    for n in ["lstm.wx", "lstm.wh", "lstm.peep", "lstm.bias"] {
        let id = fusion.params.id(n).unwrap();
        fusion.params.set_value(id, value(&bench.params, n)).unwrap();
    }
    // W_j's h_T block routes the benchmark logit through joint unit 0
    let w_out = value(&bench.params, "out.w");
    let mut wj = Matrix::zeros(5, 4 + 3);
    wj.row_mut(0)[..4].copy_from_slice(w_out.row(0));
    let mut wy = Matrix::zeros(1, 5);
    wy.set(0, 0, 1.0);
    let set = |m: &mut Classifier, n: &str, v: Matrix| {
        let id = m.params.id(n).unwrap();
        m.params.set_value(id, v).unwrap();
    };
    set(&mut fusion, "fusion.we", Matrix::zeros(3, 4));
    set(&mut fusion, "fusion.be", Matrix::zeros(1, 3));
    set(&mut fusion, "fusion.wj", wj);
    set(&mut fusion, "fusion.bj", Matrix::zeros(1, 5));
    set(&mut fusion, "fusion.wy", wy);
    set(&mut fusion, "fusion.by", value(&bench.params, "out.b"));
    for k in 0..5 {
        let mut s = random_sample(&mut Rng::new(k), 6, 3, 2);
        s.e1 = vec![0.0; 2];
        s.e2 = vec![0.0; 2];
        let a = bench.predict(&s).unwrap();
        let b = fusion.predict(&s).unwrap();
        assert!((a - b).abs() < 1e-14, "{a} {b}");
    }
}

#[test]
fn silenced_text_path_has_zero_text_weight_gradient() {
    let mut rng = Rng::new(5);
    let mut m = Classifier::new(spec(Structure::Multimodal, 2), 5).unwrap();
    let we = m.params.id("fusion.we").unwrap();
    m.params.value_mut(we).fill(0.0);
    let mut s = random_sample(&mut rng, 6, 3, 2);
    s.e1 = vec![0.0; 2];
    s.e2 = vec![0.0; 2];
    let mut store = m.params.clone();
    m.objective(&mut store, &[&s], true).unwrap();
    assert!(store.grad(we).as_slice().iter().all(|&g| g == 0.0));
    // numerically as well
    let base = m.objective(&mut m.params.clone(), &[&s], false).unwrap();
    let mut bumped = m.params.clone();
    bumped.value_mut(we).as_mut_slice()[1] = 1e-4;
    assert_eq!(m.objective(&mut bumped, &[&s], false).unwrap(), base);
}

#[test]
fn concat_with_zero_embeddings_reduces_to_benchmark() {
    let mut rng = Rng::new(6);
    let mut concat = Classifier::new(spec(Structure::Lstm, 2), 1).unwrap();
    perturb(&mut concat.params, &mut rng, 0.5);
    let mut bench = Classifier::new(spec(Structure::Lstm, 0), 1).unwrap();
    let wx = value(&concat.params, "lstm.wx");
    let narrow = Matrix::from_rows(&(0..wx.rows()).map(|r| wx.row(r)[..3].to_vec()).collect::<Vec<_>>()).unwrap();
    for n in ["lstm.wh", "lstm.peep", "lstm.bias", "out.w", "out.b"] {
        let id = bench.params.id(n).unwrap();
        bench.params.set_value(id, value(&concat.params, n)).unwrap();
    }
    let id = bench.params.id("lstm.wx").unwrap();
    bench.params.set_value(id, narrow).unwrap();
    let mut s = random_sample(&mut rng, 24, 3, 2);
    s.e1 = vec![0.0; 2];
    s.e2 = vec![0.0; 2];
    assert!((concat.predict(&s).unwrap() - bench.predict(&s).unwrap()).abs() < 1e-14);
}

#[test]
fn day_assignment_of_steps() {
    use EmbeddingVisibility::*;
    // 1-based step 12 sees day 0, step 13 sees day 1
    assert_eq!(embedding_day(11, 24, FromStart), Some(0));
    assert_eq!(embedding_day(12, 24, FromStart), Some(1));
    assert_eq!(embedding_day(0, 24, FromStart), Some(0));
    assert_eq!(embedding_day(10, 24, EndOfDay), None);
    assert_eq!(embedding_day(11, 24, EndOfDay), Some(0));
    assert_eq!(embedding_day(22, 24, EndOfDay), Some(0));
    assert_eq!(embedding_day(23, 24, EndOfDay), Some(1));

    let x = Matrix::zeros(24, 1);
    let flat = concat_inputs(&x, &[1.0], &[2.0], FromStart);
    assert_eq!(flat[11 * 2 + 1], 1.0);
    assert_eq!(flat[12 * 2 + 1], 2.0);
}

#[test]
fn gates_bounded_and_cell_grows_at_most_linearly() {
    let mut rng = Rng::new(12);
    let mut m = Classifier::new(spec(Structure::Lstm, 0), 2).unwrap();
    perturb(&mut m.params, &mut rng, 3.0);
    let mut s = random_sample(&mut rng, 24, 3, 0);
    s.x.scale(10.0);
    let pass = m.forward(&s).unwrap();
    let c = &pass.lstm;
    // open interval in exact arithmetic; saturation may round to 0 or 1
    for g in [&c.gate_i, &c.gate_f, &c.gate_o] {
        assert!(g.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
    for t in 0..24 {
        assert!(c.c(t).iter().all(|v| v.abs() <= (t + 1) as f64));
    }
}

#[test]
fn time_zero_is_domain_error() {
    let m = Classifier::new(spec(Structure::Lstm, 0), 0).unwrap();
    let s = Sample {
        stay_id: 0,
        x: Matrix::zeros(0, 3),
        e1: vec![],
        e2: vec![],
        label: 0,
    };
    assert!(m.forward(&s).is_err());
}

#[test]
fn zero_learning_rate_leaves_loss_unchanged_and_runs_are_deterministic() {
    let mut rng = Rng::new(1);
    let data: Vec<Sample> = (0..20).map(|_| random_sample(&mut rng, 6, 3, 2)).collect();
    let cfg = TrainConfig {
        lr: 0.0,
        max_epochs: 2,
        ..TrainConfig::default()
    };
    let mut m = Classifier::new(spec(Structure::Multimodal, 2), 0).unwrap();
    let before = m.mean_loss(&data).unwrap();
    fit(&mut m, &data, &data, &cfg, 0).unwrap();
    assert_eq!(m.mean_loss(&data).unwrap(), before);

    let cfg = TrainConfig {
        optimizer: OptimizerKind::adam(),
        lr: 0.01,
        max_epochs: 4,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let run = || {
        let mut m = Classifier::new(spec(Structure::Multimodal, 2), 3).unwrap();
        let h = fit(&mut m, &data[..14], &data[14..], &cfg, 9).unwrap();
        (m.params.snapshot(), h)
    };
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    assert!(ha.best_epoch >= 1);
}

#[test]
fn early_stopping_restores_best_epoch() {
    let mut rng = Rng::new(3);
    let train: Vec<Sample> = (0..30).map(|_| random_sample(&mut rng, 4, 3, 0)).collect();
    let val: Vec<Sample> = (0..10).map(|_| random_sample(&mut rng, 4, 3, 0)).collect();
    let cfg = TrainConfig {
        optimizer: OptimizerKind::adam(),
        lr: 0.05,
        max_epochs: 30,
        patience: 2,
        batch_size: 8,
    };
    let mut m = Classifier::new(spec(Structure::Lstm, 0), 1).unwrap();
    let h = fit(&mut m, &train, &val, &cfg, 0).unwrap();
    let best = h.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(best, h.best_val_loss);
    assert!((m.mean_loss(&val).unwrap() - best).abs() < 1e-12);
    if h.epochs.len() < 30 {
        assert_eq!(h.epochs.len(), h.best_epoch + 2);
    }
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = Rng::new(2);
    let m = Classifier::new(spec(Structure::Multimodal, 2), 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ckpt.bin");
    let echo = serde_json::json!({"seed": 4});
    save_checkpoint(&p, &m, &echo).unwrap();
    let (back, e) = load_checkpoint(&p).unwrap();
    assert_eq!(e, echo);
    assert_eq!(back.spec, m.spec);
    let s = random_sample(&mut rng, 5, 3, 2);
    assert_eq!(back.predict(&s).unwrap(), m.predict(&s).unwrap());
}
