//! Mini-batch gradients, the update rule, dropout, evaluation and
//! determinism of the training loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tbcnn::gradcheck::analytic_gradient;
use tbcnn::persist::{from_bytes, to_bytes};
use tbcnn::synth::rule_corpus;
use tbcnn::trainer::{apply_dropout, GradBuffer, Mode};
use tbcnn::{
    build_vocab, evaluate, forward_backward, lr_at, sgd_update, train, ClassifierInit, EmbeddingTable, HeuristicSet,
    Label, ModelParams, PairExample, TrainConfig,
};

fn small_setup(n: usize, dim: usize, seed: u64) -> (ModelParams, Vec<PairExample>) {
    let raw = rule_corpus(n, 20, 4, seed);
    let vocab = build_vocab(&raw, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let emb = EmbeddingTable::random(vocab.num_words(), dim, &mut rng);
    let model = ModelParams::new(vocab.clone(), emb, dim, dim, HeuristicSet::ALL, ClassifierInit::Random, &mut rng).unwrap();
    let data = raw
        .iter()
        .enumerate()
        .map(|(i, r)| PairExample::from_raw(r, &vocab, i + 1).unwrap().unwrap())
        .collect();
    (model, data)
}

fn config(dim: usize) -> TrainConfig {
    TrainConfig {
        dim_embed: dim,
        dim_conv: dim,
        dim_hidden: dim,
        batch_size: 4,
        lr0: 0.1,
        dropout: 0.0,
        epochs: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn batch_gradient_is_mean_of_example_gradients() {
    let (model, data) = small_setup(6, 5, 1);
    let cfg = config(5);
    let out = forward_backward(&data, &model, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut expected = GradBuffer::zeros_for(&model);
    for ex in &data {
        expected.add(&analytic_gradient(&model, ex).unwrap());
    }
    expected.scale(1.0 / data.len() as f64);
    assert!(out.grads.max_abs_diff(&expected) < 1e-10);
}

#[test]
fn duplicated_example_batch_equals_single_example() {
    let (model, data) = small_setup(3, 5, 2);
    let cfg = config(5);
    let single = analytic_gradient(&model, &data[0]).unwrap();
    let twice = vec![data[0].clone(), data[0].clone()];
    let out = forward_backward(&twice, &model, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(out.grads.max_abs_diff(&single) < 1e-12);
}

#[test]
fn parallel_batch_matches_serial() {
    let (model, data) = small_setup(13, 6, 3);
    let mut cfg = config(6);
    cfg.dropout = 0.3;
    let serial = forward_backward(&data, &model, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    cfg.threads = 4;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let parallel = pool.install(|| forward_backward(&data, &model, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap());
    assert!(serial.grads.max_abs_diff(&parallel.grads) < 1e-10);
    assert!((serial.loss - parallel.loss).abs() < 1e-10);
    assert_eq!(serial.predictions, parallel.predictions);
}

#[test]
fn l2_only_step_shrinks_weights_but_not_biases_or_embeddings() {
    let (mut model, _) = small_setup(3, 4, 4);
    model.enc.b_conv.iter_mut().for_each(|b| *b = 0.25);
    let before = model.clone();
    let zero = GradBuffer::zeros_for(&model);
    let (lr, l2) = (0.5, 0.01);
    sgd_update(&mut model, &zero, lr, l2).unwrap();
    let factor = 1.0 - 2.0 * lr * l2;
    let pairs = [
        (&before.enc.w_parent, &model.enc.w_parent),
        (&before.enc.w_hid, &model.enc.w_hid),
        (&before.cls.w, &model.cls.w),
        (&before.enc.w_rel[2], &model.enc.w_rel[2]),
    ];
    for (b, a) in pairs {
        for (x, y) in b.as_slice().iter().zip(a.as_slice()) {
            assert!((x * factor - y).abs() <= 1e-15 * x.abs().max(1.0));
        }
    }
    assert_eq!(before.enc.b_conv, model.enc.b_conv);
    assert_eq!(before.cls.b, model.cls.b);
    assert_eq!(before.emb.matrix, model.emb.matrix);
}

#[test]
fn dropout_preserves_expectation() {
    let v = vec![1.0, -2.0, 0.5, 3.0];
    let rate = 0.4;
    let trials = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut sums = vec![0.0; v.len()];
    for _ in 0..trials {
        let (out, mask) = apply_dropout(&v, rate, &mut rng, Mode::Train).unwrap();
        for (i, x) in out.iter().enumerate() {
            assert!(*x == 0.0 || (x - v[i] / (1.0 - rate)).abs() < 1e-15);
            assert_eq!(*x != 0.0, mask.keep[i]);
            sums[i] += x;
        }
    }
    for (i, s) in sums.iter().enumerate() {
        let mean = s / trials as f64;
        // per-sample std of x·keep/(1−p) is |x|·sqrt(p/(1−p))
        let sigma = v[i].abs() * (rate / (1.0 - rate)).sqrt() / (trials as f64).sqrt();
        assert!((mean - v[i]).abs() < 3.0 * sigma, "unit {i}: {mean} vs {}", v[i]);
    }
}

#[test]
fn training_is_deterministic_and_logs_schedule() {
    let (model, data) = small_setup(24, 5, 6);
    let mut cfg = config(5);
    cfg.dropout = 0.2;
    cfg.seed = 11;
    let valid = &data[..6];
    let a = train(model.clone(), &data, valid, &cfg, |_| {}).unwrap();
    let mut seen = Vec::new();
    let b = train(model.clone(), &data, valid, &cfg, |r| seen.push(r.clone())).unwrap();
    assert_eq!(to_bytes(&a.model), to_bytes(&b.model));
    assert_eq!(a.log, b.log);
    assert_eq!(seen, b.log);
    assert_eq!(b.log.len(), cfg.epochs);
    for r in &b.log {
        assert_eq!(r.lr, lr_at(r.epoch, &cfg));
        assert!(r.valid_acc.is_some());
    }
    let best = b.best.unwrap();
    assert_eq!(best.valid_acc, b.log.iter().filter_map(|r| r.valid_acc).fold(f64::MIN, f64::max));

    // a different seed gives a different model
    cfg.seed = 12;
    let c = train(model, &data, valid, &cfg, |_| {}).unwrap();
    assert_ne!(to_bytes(&a.model), to_bytes(&c.model));
}

#[test]
fn threaded_training_matches_single_thread() {
    let (model, data) = small_setup(20, 4, 7);
    let mut cfg = config(4);
    cfg.dropout = 0.1;
    let serial = train(model.clone(), &data, &[], &cfg, |_| {}).unwrap();
    cfg.threads = 3;
    let threaded = train(model, &data, &[], &cfg, |_| {}).unwrap();
    for (x, y) in serial.model.enc.w_parent.as_slice().iter().zip(threaded.model.enc.w_parent.as_slice()) {
        assert!((x - y).abs() < 1e-10);
    }
    assert!(serial.log.iter().all(|r| r.valid_acc.is_none()));
}

#[test]
fn evaluation_of_a_uniform_model() {
    let (mut model, data) = small_setup(30, 4, 8);
    model.cls = tbcnn::ClassifierParams::zeros(model.cls.input_dim());
    let ev = evaluate(&model, &data).unwrap();
    // uniform probabilities: ties resolve to entailment, a third of the balanced set
    assert_eq!(ev.count, 30);
    assert!((ev.accuracy - 1.0 / 3.0).abs() < 1e-12);
    assert!((ev.mean_loss - 3f64.ln()).abs() < 1e-12);
    assert_eq!(ev.confusion[Label::Entailment.index()][0], 10);
    assert_eq!(ev.confusion.iter().map(|r| r[1] + r[2]).sum::<usize>(), 0);
}

#[test]
fn initial_loss_is_ln3_with_zero_classifier() {
    let (random, data) = small_setup(9, 6, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = ModelParams::new(random.vocab, random.emb, 6, 6, HeuristicSet::ALL, ClassifierInit::Zero, &mut rng).unwrap();
    let ev = evaluate(&model, &data).unwrap();
    assert!((ev.mean_loss - 3f64.ln()).abs() < 1e-12);
}

#[test]
fn reloaded_model_predicts_identically() {
    let (mut model, data) = small_setup(10, 5, 10);
    model.quantize_f32();
    let loaded = from_bytes(&to_bytes(&model)).unwrap();
    for ex in &data {
        assert_eq!(model.encode(&ex.premise).unwrap().0, loaded.encode(&ex.premise).unwrap().0);
        assert_eq!(model.predict(ex).unwrap().probs, loaded.predict(ex).unwrap().probs);
    }
}
