use super::*;
use alloc::vec;
use rand::Rng;

fn tiny_config() -> ModelConfig {
    ModelConfig {
        conv: vec![
            ConvSpec { channels: 3, kernel: 4, stride: 2 },
            ConvSpec { channels: 4, kernel: 3, stride: 2 },
        ],
        dim: 4,
        depth: 1,
        heads: 2,
        ff_dim: 8,
        ..ModelConfig::default()
    }
}

fn random_params(model: &Model, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, "test-params", &[]);
    model.init::<f64>(seed).into_iter().map(|v| v + rng.random_range(-0.3..0.3)).collect()
}

fn random_row(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, "test-row", &[]);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Independent loss: log-sum-exp minus the target logit, from forward logits only.
fn oracle_loss(model: &Model, p: &[f64], rows: &[Vec<f64>], lens: &[usize], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for ((r, &n), &y) in rows.iter().zip(lens).zip(labels) {
        let z = model.forward_row(p, r, n).unwrap().logits;
        let lse = z.iter().map(|v| v.exp()).sum::<f64>().ln();
        total += lse - z[y];
    }
    total
}

#[test]
fn frame_count_matches_layer_formula() {
    let cfg = ModelConfig::default();
    // 32000 -> (32000-16)/8+1 = 3999 -> (3999-10)/5+1 = 798 -> (798-8)/8+1 = 99
    assert_eq!(cfg.frames_for(32000), 99);
    assert_eq!(cfg.stride_product(), 320);
    assert_eq!(cfg.receptive_field(), 16 + 9 * 8 + 7 * 40);
    let model = Model::new(cfg.clone()).unwrap();
    let p = model.init::<f32>(1);
    let rows = vec![vec![0.1f32; 32000], vec![0.2f32; 32000]];
    let batch = PaddedBatch::from_rows(&rows, vec![0, 1], vec!["a".into(), "b".into()]).unwrap();
    let enc = model.encode(&p, &batch).unwrap();
    assert_eq!(enc.frames, 99);
    assert_eq!(enc.features.len(), 2 * 99 * 64);
    assert!(enc.frame_mask.iter().all(|&m| m));
}

#[test]
fn zero_input_with_zero_biases_gives_zero_conv_output() {
    let model = Model::new(tiny_config()).unwrap();
    let p = model.init::<f64>(3);
    let cache = model.forward_row(&p, &[0.0; 40], 40).unwrap();
    for a in &cache.acts[1..] {
        assert!(a.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn too_short_row_is_rejected() {
    let model = Model::new(ModelConfig::default()).unwrap();
    let p = model.init::<f32>(0);
    let batch = PaddedBatch::from_rows(&[vec![0.1f32; 1000], vec![0.1; 100]], vec![0, 0], vec!["a".into(), "b".into()]).unwrap();
    assert!(matches!(model.forward(&p, &batch), Err(Error::TooShort { row: 1, .. })));
}

#[test]
fn pool_examples() {
    let f = [2.0f64, 2.0, 2.0, 9.0];
    assert_eq!(pool(&f, &[true, true, true, false], 1, 4, 1).unwrap(), vec![2.0]);
    let f = [1.0f64, 3.0, 5.0, 7.0];
    assert_eq!(pool(&f, &[true, true], 1, 2, 2).unwrap(), vec![3.0, 5.0]);
    let a = pool(&[1.0f64, 4.0, 0.0, 0.0], &[true, true, false, false], 1, 4, 1).unwrap();
    let b = pool(&[1.0f64, 4.0, 123.0, -7.0], &[true, true, false, false], 1, 4, 1).unwrap();
    assert_eq!(a, b);
    assert!(pool(&[1.0f64], &[false], 1, 1, 1).is_err());
}

#[test]
fn classify_examples() {
    let cfg = ModelConfig { dim: 1, heads: 1, num_classes: 2, head: HeadMode::Binary, ..tiny_config() };
    let model = Model::new(cfg).unwrap();
    let mut p = vec![0.0f64; model.param_count()];
    let h = model.layout().get("head.weight").unwrap().offset;
    p[h] = 2.0;
    p[h + 1] = -2.0;
    let l = model.classify(&p, &[0.5]).unwrap();
    assert_eq!(l.values, vec![1.0, -1.0]);
    assert_eq!(model.classify(&p, &[0.0]).unwrap().values, vec![0.0, 0.0]);
    let l = model.classify(&p, &[0.3, 0.3]).unwrap();
    assert_eq!(l.row(0), l.row(1));
}

#[test]
fn cross_entropy_examples() {
    let l = LogitsBatch { values: vec![0.0f64; 5], rows: 1, classes: 5 };
    for y in 0..5 {
        let (loss, _) = cross_entropy(&l, &[y]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }
    let l = LogitsBatch { values: vec![60.0f64, 0.0, 0.0, 0.0, 0.0], rows: 1, classes: 5 };
    assert!(cross_entropy(&l, &[0]).unwrap().0 < 1e-20);
    let bad = LogitsBatch { values: vec![f64::NAN, 0.0], rows: 1, classes: 2 };
    assert!(cross_entropy(&bad, &[0]).is_err());
}

#[test]
fn score_examples() {
    let l = LogitsBatch { values: vec![0.0f64; 5], rows: 1, classes: 5 };
    assert!((score(&l)[0] - 0.2).abs() < 1e-15);
    let l = LogitsBatch { values: vec![50.0f64, 0.0, 0.0, 0.0, 0.0], rows: 1, classes: 5 };
    assert!(score(&l)[0] >= 1.0 - 1e-15);
    let l = LogitsBatch { values: vec![0.3f64, -1.0, 2.0, 0.5, 0.1], rows: 1, classes: 5 };
    let s = l.softmax_row(0);
    assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(score(&l)[0], s[0]);
}

#[test]
fn gradients_match_finite_differences() {
    let model = Model::new(tiny_config()).unwrap();
    assert!(model.param_count() < 5000);
    let p = random_params(&model, 11);
    let rows = vec![random_row(30, 1), random_row(30, 2)];
    // Second row padded: only its first 22 samples are real.
    let mut rows = rows;
    rows[1][22..].iter_mut().for_each(|v| *v = 0.0);
    let lens = [30, 22];
    let labels = [2, 0];
    let batch = PaddedBatch::from_rows(&rows, labels.to_vec(), vec!["a".into(), "b".into()]).unwrap();
    let mut batch = batch;
    batch.lengths = lens.to_vec();
    let (loss, grads) = model.loss_and_grads(&p, &batch).unwrap();
    assert!((loss - oracle_loss(&model, &p, &rows, &lens, &labels)).abs() < 1e-12);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let mut pp = p.clone();
        pp[i] += h;
        let up = oracle_loss(&model, &pp, &rows, &lens, &labels);
        pp[i] -= 2.0 * h;
        let down = oracle_loss(&model, &pp, &rows, &lens, &labels);
        let fd = (up - down) / (2.0 * h);
        let err = (grads[i] - fd).abs() / grads[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max(err);
        assert!(err < 1e-4, "{}: analytic {} fd {}", model.layout().describe(i), grads[i], fd);
    }
    assert!(worst < 1e-4);
}

#[test]
fn padding_does_not_change_scores() {
    let model = Model::new(tiny_config()).unwrap();
    let p = random_params(&model, 5);
    let row = random_row(40, 9);
    let short = PaddedBatch::from_rows(&[row.clone()], vec![1], vec!["a".into()]).unwrap();
    let mut padded_row = row.clone();
    padded_row.extend(core::iter::repeat(0.0).take(33));
    let mut long = PaddedBatch::from_rows(&[padded_row], vec![1], vec!["a".into()]).unwrap();
    long.lengths = vec![40];
    long.mask[40..].iter_mut().for_each(|m| *m = false);
    let a = score(&model.logits(&p, &short).unwrap());
    let b = score(&model.logits(&p, &long).unwrap());
    assert_eq!(a, b);
}

#[test]
fn permuting_rows_permutes_logits() {
    let model = Model::new(tiny_config()).unwrap();
    let p = random_params(&model, 6);
    let rows = vec![random_row(30, 1), random_row(36, 2), random_row(25, 3)];
    let ids = vec!["a".into(), "b".into(), "c".into()];
    let fwd = model.logits(&p, &PaddedBatch::from_rows(&rows, vec![0, 1, 2], ids.clone()).unwrap()).unwrap();
    let perm = vec![rows[2].clone(), rows[0].clone(), rows[1].clone()];
    let rev = model.logits(&p, &PaddedBatch::from_rows(&perm, vec![2, 0, 1], ids).unwrap()).unwrap();
    assert_eq!(fwd.row(2), rev.row(0));
    assert_eq!(fwd.row(0), rev.row(1));
    assert_eq!(fwd.row(1), rev.row(2));
}

#[test]
fn layout_names_are_unique_and_cover_vector() {
    let model = Model::new(ModelConfig::default()).unwrap();
    let l = model.layout();
    let mut names: Vec<&str> = l.tensors.iter().map(|t| t.name.as_str()).collect();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), l.tensors.len());
    assert_eq!(l.tensors.iter().map(TensorSpec::len).sum::<usize>(), l.total);
    assert_eq!(l.describe(0), "conv.0.weight[0]");
}

#[test]
fn config_validation_and_fingerprint() {
    assert!(ModelConfig::default().validate().is_ok());
    assert!(ModelConfig::binary().validate().is_ok());
    assert!(ModelConfig { heads: 3, ..ModelConfig::default() }.validate().is_err());
    assert!(ModelConfig { num_classes: 1, ..ModelConfig::default() }.validate().is_err());
    let a = ModelConfig::default().fingerprint();
    assert_eq!(a, ModelConfig::default().fingerprint());
    assert_ne!(a, ModelConfig { depth: 3, ..ModelConfig::default() }.fingerprint());
    assert_eq!(ModelConfig::binary().class_of(ArtifactCategory::Vocoded), 1);
    assert_eq!(ModelConfig::default().class_of(ArtifactCategory::NeuralCodec), 4);
}
