use rand::Rng;

use super::*;
use crate::linalg::{dot, norm};
use crate::rng::rng_for;

fn tiny(seed: u64) -> ModelConfig {
    ModelConfig {
        input_dim: 10,
        encoder_widths: vec![8],
        head_hidden: 6,
        embed_dim: 4,
        n_classes: 3,
        seed,
    }
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    let mut rng = rng_for(seed, &[]);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

#[test]
fn encode_is_deterministic_with_width_h() {
    let cfg = ModelConfig {
        input_dim: 20,
        ..ModelConfig::default()
    };
    let p: ModelParams<f64> = ModelParams::init(&cfg).unwrap();
    let x: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
    let a = p.encode(&x).unwrap();
    assert_eq!(a, p.encode(&x).unwrap());
    assert_eq!(a.len(), 512);
    assert!(a.iter().all(|v| v.is_finite()));
    assert!(matches!(p.encode(&x[..19]), Err(Error::Argument(_))));
}

#[test]
fn zero_input_zero_bias_gives_zero_rep() {
    let mut p: ModelParams<f64> = ModelParams::init(&tiny(1)).unwrap();
    for l in &mut p.encoder {
        l.b.iter_mut().for_each(|b| *b = 0.0);
    }
    assert!(p.encode(&[0.0; 10]).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn embeddings_are_unit_norm() {
    let p: ModelParams<f64> = ModelParams::init(&tiny(2)).unwrap();
    for s in 0..20 {
        let x = random_matrix(1, 10, s);
        let rep = p.encode(x.row(0)).unwrap();
        if rep.iter().all(|&v| v == 0.0) {
            continue;
        }
        let z = p.head_embed(&rep).unwrap();
        assert_eq!(z.len(), 4);
        assert!((norm(&z) - 1.0).abs() < 1e-6);
    }
}

#[test]
fn embedding_scale_invariance() {
    let mut p: ModelParams<f64> = ModelParams::init(&tiny(3)).unwrap();
    p.embed_head.fc1.b.iter_mut().for_each(|b| *b = 0.0);
    p.embed_head.fc2.b.iter_mut().for_each(|b| *b = 0.0);
    p.embed_head.norm.running_var.iter_mut().for_each(|v| *v = 1.0 - layers::NORM_EPS);
    let r: Vec<f64> = vec![0.3, 0.1, 0.7, 0.2, 0.9, 0.4, 0.5, 0.6];
    let r2: Vec<f64> = r.iter().map(|v| v * 2.5).collect();
    let (a, b) = (p.head_embed(&r).unwrap(), p.head_embed(&r2).unwrap());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn zero_params_degenerate_embedding_and_uniform_logits() {
    let p: ModelParams<f64> = ModelParams::zeros(&tiny(0));
    let rep = vec![1.0; 8];
    assert!(matches!(p.head_embed(&rep), Err(Error::DegenerateEmbedding { .. })));
    let logits = p.head_classify(&rep).unwrap();
    assert_eq!(logits, vec![0.0; 3]);
}

#[test]
fn classify_emits_n_classes_logits() {
    let p: ModelParams<f64> = ModelParams::init(&tiny(4)).unwrap();
    let rep = p.encode(&[0.5; 10]).unwrap();
    assert_eq!(p.head_classify(&rep).unwrap().len(), 3);
    assert_eq!(p.head_classify(&rep).unwrap(), p.head_classify(&rep).unwrap());
}

#[test]
fn param_count_formula() {
    let cfg = tiny(0);
    let p: ModelParams<f64> = ModelParams::init(&cfg).unwrap();
    let counted: usize = p
        .slices(&[Group::Encoder, Group::EmbedHead, Group::ClassHead])
        .iter()
        .map(|s| s.len())
        .sum();
    assert_eq!(counted, cfg.param_count());
    // 10·8+8 + (8·6+18+6·4+4) + (8·6+18+6·3+3)
    assert_eq!(cfg.param_count(), 88 + 94 + 87);
    assert_eq!(
        ModelConfig::default().param_count(),
        44376 * 512 + 512 + 512 * 512 + 512 + 2 * (512 * 512 + 3 * 512) + 512 * 128 + 128 + 512 * 3 + 3
    );
}

/// Scalar objective `Σ u ⊙ out` for a forward path in training mode.
fn objective(p: &ModelParams<f64>, x: &Matrix<f64>, u: &Matrix<f64>, path: Path) -> f64 {
    let mut tape = GradientTape::new(&p.config);
    let out = p.forward(x, path, &mut tape).unwrap();
    dot(out.as_slice(), u.as_slice())
}

fn flat_get(q: &ModelParams<f64>, mut k: usize, groups: &[Group]) -> f64 {
    for s in q.slices(groups) {
        if k < s.len() {
            return s[k];
        }
        k -= s.len();
    }
    unreachable!()
}

fn flat_set(q: &mut ModelParams<f64>, mut k: usize, groups: &[Group], v: f64) {
    for s in q.slices_mut(groups) {
        if k < s.len() {
            s[k] = v;
            return;
        }
        k -= s.len();
    }
}

fn max_rel_error(p: &ModelParams<f64>, x: &Matrix<f64>, u: &Matrix<f64>, path: Path) -> f64 {
    let mut tape = GradientTape::new(&p.config);
    p.forward(x, path, &mut tape).unwrap();
    p.backward(&mut tape, u).unwrap();
    let groups = [Group::Encoder, Group::EmbedHead, Group::ClassHead];
    let analytic: Vec<f64> = tape.slices(&groups).concat();
    let h = 1e-5;
    let mut q = p.clone();
    let n = analytic.len();
    let mut worst = 0.0f64;
    for k in 0..n {
        let orig = flat_get(&q, k, &groups);
        flat_set(&mut q, k, &groups, orig + h);
        let fp = objective(&q, x, u, path);
        flat_set(&mut q, k, &groups, orig - h);
        let fm = objective(&q, x, u, path);
        flat_set(&mut q, k, &groups, orig);
        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..6 {
        let p: ModelParams<f64> = ModelParams::init(&tiny(seed)).unwrap();
        let x = random_matrix(5, 10, 100 + seed);
        let u = random_matrix(5, 4, 200 + seed);
        assert!(max_rel_error(&p, &x, &u, Path::Embed) < 1e-4);
        let u = random_matrix(5, 3, 300 + seed);
        assert!(max_rel_error(&p, &x, &u, Path::Classify) < 1e-4);
    }
}

#[test]
fn zero_upstream_gives_zero_tape() {
    let p: ModelParams<f64> = ModelParams::init(&tiny(5)).unwrap();
    let mut tape = GradientTape::new(&p.config);
    let x = random_matrix(4, 10, 9);
    p.forward(&x, Path::Embed, &mut tape).unwrap();
    p.backward(&mut tape, &Matrix::zeros(4, 4)).unwrap();
    assert!(tape
        .grads
        .all_slices()
        .iter()
        .all(|s| s.iter().all(|&v| v == 0.0)));
}

#[test]
fn backward_without_forward_is_usage_error() {
    let p: ModelParams<f64> = ModelParams::init(&tiny(5)).unwrap();
    let mut tape = GradientTape::new(&p.config);
    assert!(matches!(p.backward(&mut tape, &Matrix::zeros(1, 4)), Err(Error::Usage(_))));
    let x = random_matrix(2, 10, 1);
    p.forward(&x, Path::Embed, &mut tape).unwrap();
    p.backward(&mut tape, &Matrix::zeros(2, 4)).unwrap();
    assert!(matches!(p.backward(&mut tape, &Matrix::zeros(2, 4)), Err(Error::Usage(_))));
}

#[test]
fn l2_normalize_jacobian() {
    let mut rng = rng_for(77, &[]);
    for _ in 0..10 {
        let y: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let u: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = norm(&y);
        let z: Vec<f64> = y.iter().map(|v| v / n).collect();
        let g = l2_normalize_backward(
            &Matrix::from_vec(1, 6, z.clone()),
            &[n],
            &Matrix::from_vec(1, 6, u.clone()),
        );
        // orthogonal to the embedding direction
        assert!(dot(g.row(0), &z).abs() < 1e-12);
        // matches finite differences of ⟨u, y/‖y‖⟩
        let f = |y: &[f64]| dot(&u, y) / norm(y);
        for k in 0..6 {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[k] += 1e-6;
            ym[k] -= 1e-6;
            let num = (f(&yp) - f(&ym)) / 2e-6;
            assert!((num - g.get(0, k)).abs() < 1e-8);
        }
    }
}

#[test]
fn frozen_forward_leaves_encoder_gradients_zero() {
    let p: ModelParams<f64> = ModelParams::init(&tiny(6)).unwrap();
    let x = random_matrix(4, 10, 3);
    let rep = p.encode_batch(&x).unwrap();
    let mut tape = GradientTape::new(&p.config);
    p.forward_from_rep(&rep, Path::Classify, &mut tape).unwrap();
    p.backward(&mut tape, &random_matrix(4, 3, 4)).unwrap();
    assert!(tape.slices(&[Group::Encoder]).iter().all(|s| s.iter().all(|&v| v == 0.0)));
    assert!(tape.slices(&[Group::ClassHead]).iter().any(|s| s.iter().any(|&v| v != 0.0)));
}

#[test]
fn running_stats_commit() {
    let mut p: ModelParams<f64> = ModelParams::init(&tiny(7)).unwrap();
    let before = p.class_head.norm.running_mean.clone();
    let mut tape = GradientTape::new(&p.config);
    p.forward(&random_matrix(6, 10, 5), Path::Classify, &mut tape).unwrap();
    p.commit_running_stats(&mut tape);
    assert_ne!(before, p.class_head.norm.running_mean);
    let snapshot = p.clone();
    p.commit_running_stats(&mut tape);
    assert_eq!(snapshot, p);
}

#[test]
fn checkpoint_round_trip_and_validation() {
    let p: ModelParams<f64> = ModelParams::init(&tiny(8)).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&p, &mut buf).unwrap();
    let back: ModelParams<f64> = read_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(back, p);

    let mut short = buf.clone();
    short.truncate(buf.len() - 3);
    assert!(matches!(read_checkpoint::<f64, _>(short.as_slice()), Err(Error::Format(_))));
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(read_checkpoint::<f64, _>(bad.as_slice()), Err(Error::Format(_))));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&p, &path).unwrap();
    assert!(load_checkpoint::<f64>(&path, Some(&tiny(99))).is_ok());
    let other = ModelConfig { head_hidden: 7, ..tiny(8) };
    assert!(matches!(load_checkpoint::<f64>(&path, Some(&other)), Err(Error::Format(_))));
}

#[test]
fn single_precision_forward() {
    let p: ModelParams<f32> = ModelParams::init(&tiny(9)).unwrap();
    let rep = p.encode(&[0.25f32; 10]).unwrap();
    let z = p.head_embed(&rep).unwrap();
    assert!((norm(&z) - 1.0).abs() < 1e-5);
}
