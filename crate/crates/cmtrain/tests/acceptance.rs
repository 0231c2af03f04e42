//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::HashMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use cmtrain::checkpoint::{load_model, Checkpoint, ModelState};
use cmtrain::config::RunConfig;
use cmtrain::evaluate::{multi_duration_eval, score_manifest, write_scores, ScoreOptions, DEFAULT_MIN_TAIL_S};
use cmtrain::manifest::{read_manifest, ManifestFile};
use cmtrain::synth::{write_toy_corpus, ToyCorpusSpec};
use cmtrain::train::{fine_tune, post_train, read_metrics};
use cmtrain_core::audio::AudioBuffer;
use cmtrain_core::augment::{
    impulsive_sd_noise, lnl_convolutive_noise, rawboost, stationary_si_noise_traced, IsdParams, LnlParams, NotchBank,
    RawBoostConfig, RawBoostMode, SsiParams,
};
use cmtrain_core::batcher::{plan_epoch, trim_for_epoch, BatcherConfig, PaddedBatch};
use cmtrain_core::catalog::{ArtifactCategory, Manifest, ManifestEntry, Split};
use cmtrain_core::eval::{compute_eer, eer_from_scores};
use cmtrain_core::model::{score, ConvSpec, HeadMode, Model, ModelConfig};
use cmtrain_core::optim::{AdamWConfig, OptimizerState, Schedule};
use cmtrain_core::rng::substream;
use rand::Rng;
use tempfile::tempdir;

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: &[(&str, fn() -> Outcome)] = &[
        ("gradient oracle", gradient_oracle),
        ("EER oracle", eer_oracle),
        ("schedule exactness", schedule_exactness),
        ("AdamW decoupling", adamw_decoupling),
        ("batcher invariants", batcher_invariants),
        ("padding invariance", padding_invariance),
        ("RawBoost properties", rawboost_properties),
        ("determinism and persistence", determinism_and_persistence),
        ("synthetic end-to-end", synthetic_end_to_end),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        let r = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(detail) => println!("PASS  {name}: {detail} ({secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} ({secs:.1} s)");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn random_config<R: Rng>(rng: &mut R) -> ModelConfig {
    let layers = rng.random_range(1..=2);
    let conv = (0..layers)
        .map(|_| ConvSpec {
            channels: rng.random_range(2..=5),
            kernel: rng.random_range(2..=5),
            stride: rng.random_range(1..=3),
        })
        .collect();
    let heads = rng.random_range(1..=2);
    let binary = rng.random_bool(0.3);
    ModelConfig {
        conv,
        dim: heads * rng.random_range(1..=3),
        depth: rng.random_range(1..=2),
        heads,
        ff_dim: rng.random_range(3..=10),
        num_classes: if binary { 2 } else { ArtifactCategory::ALL.len() },
        head: if binary { HeadMode::Binary } else { HeadMode::Multiclass },
        ..ModelConfig::default()
    }
}

/// Summed cross entropy from forward logits only.
fn oracle_loss(model: &Model, p: &[f64], rows: &[Vec<f64>], lens: &[usize], labels: &[usize]) -> f64 {
    rows.iter()
        .zip(lens)
        .zip(labels)
        .map(|((r, &n), &y)| {
            let batch = PaddedBatch::from_rows(&[r[..n].to_vec()], vec![y], vec![String::new()]).unwrap();
            let z = model.logits(p, &batch).unwrap().values;
            let m = z.iter().cloned().fold(f64::MIN, f64::max);
            m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - z[y]
        })
        .sum()
}

fn gradient_oracle() -> Outcome {
    let configs = 24;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for c in 0..configs {
        let mut rng = substream(100, "acceptance-grad", &[c]);
        let cfg = random_config(&mut rng);
        let model = Model::new(cfg.clone()).map_err(|e| e.to_string())?;
        check!(model.param_count() < 5000, "config {c} has {} params", model.param_count());
        let p: Vec<f64> = model.init::<f64>(c).into_iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
        let field = cfg.receptive_field();
        let width = field + rng.random_range(4..20);
        let rows: Vec<Vec<f64>> = (0..2).map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let lens = [width, field + rng.random_range(0..4)];
        let labels = [rng.random_range(0..cfg.num_classes), rng.random_range(0..cfg.num_classes)];
        let trimmed: Vec<Vec<f64>> = rows.iter().zip(&lens).map(|(r, &n)| r[..n].to_vec()).collect();
        let batch = PaddedBatch::from_rows(&trimmed, labels.to_vec(), vec!["a".into(), "b".into()]).unwrap();
        let (_, grads) = model.loss_and_grads(&p, &batch).map_err(|e| e.to_string())?;
        let h = 1e-5;
        for i in 0..p.len() {
            let mut q = p.clone();
            q[i] += h;
            let up = oracle_loss(&model, &q, &rows, &lens, &labels);
            q[i] -= 2.0 * h;
            let down = oracle_loss(&model, &q, &rows, &lens, &labels);
            let fd = (up - down) / (2.0 * h);
            let err = (grads[i] - fd).abs() / grads[i].abs().max(fd.abs()).max(1e-6);
            check!(err < 1e-4, "config {c}, {}: analytic {} vs fd {fd}", model.layout().describe(i), grads[i]);
            worst = worst.max(err);
            checked += 1;
        }
    }
    Ok(format!("{configs} configs, {checked} gradients, worst relative error {worst:.2e}"))
}

/// FRR/FAR counted directly at every midpoint threshold.
fn sweep_eer(genuine: &[f64], fake: &[f64]) -> f64 {
    let mut s: Vec<f64> = genuine.iter().chain(fake).copied().collect();
    s.sort_by(f64::total_cmp);
    s.dedup();
    let mut thresholds = vec![f64::NEG_INFINITY];
    thresholds.extend(s.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    thresholds.push(f64::INFINITY);
    let pts: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let frr = genuine.iter().filter(|&&g| g < t).count() as f64 / genuine.len() as f64;
            let far = fake.iter().filter(|&&f| f >= t).count() as f64 / fake.len() as f64;
            (frr, far)
        })
        .collect();
    for k in 0..pts.len() {
        let d = pts[k].0 - pts[k].1;
        if d == 0.0 {
            return pts[k].0;
        }
        if d > 0.0 {
            let dp = pts[k - 1].0 - pts[k - 1].1;
            let a = -dp / (d - dp);
            return pts[k - 1].0 + a * (pts[k].0 - pts[k - 1].0);
        }
    }
    unreachable!()
}

fn eer_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..1000u64 {
        let mut rng = substream(7, "acceptance-eer", &[i]);
        let total = rng.random_range(2..=200);
        let ng = rng.random_range(1..total);
        // Half the sets use a coarse grid so ties are common.
        let coarse = i % 2 == 0;
        let mut draw = || if coarse { rng.random_range(0..20) as f64 / 20.0 } else { rng.random::<f64>() };
        let g: Vec<f64> = (0..ng).map(|_| draw()).collect();
        let f: Vec<f64> = (0..total - ng).map(|_| draw()).collect();
        let got = eer_from_scores(&g, &f).map_err(|e| e.to_string())?.eer;
        let want = sweep_eer(&g, &f);
        check!((got - want).abs() < 1e-9, "set {i}: {got} vs sweep {want}");
        worst = worst.max((got - want).abs());
    }
    let e = |g: &[f64], f: &[f64]| eer_from_scores(g, f).unwrap().eer;
    check!(e(&[0.9, 0.8, 0.7], &[0.3, 0.2]) == 0.0, "separable case");
    check!(e(&[0.1, 0.2], &[0.8, 0.9, 0.7]) == 1.0, "inverted case");
    let third = e(&[0.8, 0.6, 0.4], &[0.7, 0.5, 0.3]);
    check!((third - 1.0 / 3.0).abs() < 1e-12, "six-record case gave {third}");
    Ok(format!("1000 sets, max deviation {worst:.1e}; exact cases 0, 1, 1/3"))
}

fn schedule_exactness() -> Outcome {
    let points = [(0u64, 0.0f64), (80_000, 1e-7), (480_000, 5e-8), (880_000, 0.0)];
    for _ in 0..2 {
        let s = Schedule::post_train();
        for &(step, want) in &points {
            let got = s.lr_at(step);
            check!(got.to_bits() == want.to_bits(), "lr_at({step}) = {got:e}, expected {want:e}");
        }
    }
    let bits: Vec<u64> = (0..=880_000).step_by(997).map(|t| Schedule::post_train().lr_at(t).to_bits()).collect();
    let again: Vec<u64> = (0..=880_000).step_by(997).map(|t| Schedule::post_train().lr_at(t).to_bits()).collect();
    check!(bits == again, "schedule is not bitwise stable");
    Ok("lr_at(0, 80k, 480k, 880k) = 0, 1e-7, 5e-8, 0 bit for bit".into())
}

fn adamw_decoupling() -> Outcome {
    let (lr, wd) = (1e-3, 0.01);
    let cfg = AdamWConfig { weight_decay: wd, ..AdamWConfig::default() };
    let theta0: Vec<f64> = vec![1.0, -0.5, 3.25, 1e-3, -7.0];
    let mut theta = theta0.clone();
    let mut opt = OptimizerState::<f64>::new(cfg, theta.len());
    let zeros = vec![0.0; theta.len()];
    let shrink = 1.0 - lr * wd;
    let mut oracle = theta0.clone();
    let mut worst = 0.0f64;
    for t in 1..=100 {
        opt.step(&mut theta, &zeros, lr, |i| i.to_string()).map_err(|e| e.to_string())?;
        oracle.iter_mut().for_each(|v| *v *= shrink);
        check!(theta == oracle, "step {t}: {theta:?} vs {oracle:?}");
        for (v, v0) in theta.iter().zip(&theta0) {
            let closed = v0 * shrink.powi(t);
            worst = worst.max(((v - closed) / closed).abs());
        }
    }
    check!(worst < 1e-13, "closed form deviates by {worst:e}");
    Ok(format!("100 steps equal theta0 * (1 - lr*wd)^t exactly; closed-form pow within {worst:.1e}"))
}

fn synthetic_manifest<R: Rng>(rng: &mut R) -> Manifest {
    let n = rng.random_range(1..120);
    let entries = (0..n)
        .map(|i| ManifestEntry {
            id: format!("m{i:03}"),
            path: String::new(),
            duration_s: if rng.random_bool(0.2) { rng.random_range(13.0..60.0) } else { rng.random_range(0.5..13.0) },
            category: ArtifactCategory::ALL[i % ArtifactCategory::ALL.len()],
            dataset: "b".into(),
            language: "x".into(),
            split: Split::Train,
        })
        .collect();
    Manifest::new(entries).unwrap()
}

fn batcher_invariants() -> Outcome {
    let cfg = BatcherConfig::default();
    let (mut batches, mut trims) = (0usize, 0usize);
    for i in 0..1000u64 {
        let mut rng = substream(11, "acceptance-batcher", &[i]);
        let m = synthetic_manifest(&mut rng);
        let epoch = rng.random_range(0..10);
        let plan = plan_epoch(&m, &cfg, i, epoch).map_err(|e| e.to_string())?;
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for b in &plan.batches {
            let used: f64 = b.iter().map(|id| cfg.effective_seconds(m.get(id).unwrap().duration_s)).sum();
            check!(used <= 100.0 + 1e-9, "manifest {i}: batch charged {used} s");
            b.iter().for_each(|id| *seen.entry(id.as_str()).or_default() += 1);
        }
        check!(seen.len() == m.len() && seen.values().all(|&c| c == 1), "manifest {i}: coverage broken");
        batches += plan.len();
        for (k, e) in m.entries().iter().filter(|e| e.duration_s > 13.0).enumerate() {
            // Full-rate buffer for the first long file, a coarse rate for the rest.
            let sr = if k == 0 { 16_000 } else { 100 };
            let x = AudioBuffer::mono(vec![0.25; (e.duration_s * sr as f64) as usize], sr);
            let d = trim_for_epoch(&x, &cfg, i, epoch, &e.id).duration_s();
            check!((10.0..=13.0).contains(&d), "manifest {i}: `{}` trimmed to {d} s", e.id);
            trims += 1;
        }
    }
    Ok(format!("1000 manifests, {batches} batches, {trims} trims in [10, 13] s"))
}

fn padding_invariance() -> Outcome {
    let model = Model::new(ModelConfig::default()).unwrap();
    let p = model.init::<f32>(3);
    let mut worst = 0.0f32;
    for i in 0..100u64 {
        let mut rng = substream(13, "acceptance-pad", &[i]);
        let rows: Vec<Vec<f32>> = (0..rng.random_range(1..=4))
            .map(|_| (0..rng.random_range(400..4000)).map(|_| rng.random_range(-0.8..0.8)).collect())
            .collect();
        let n = rows.len();
        let ids: Vec<String> = (0..n).map(|r| r.to_string()).collect();
        let tight = PaddedBatch::from_rows(&rows, vec![0; n], ids.clone()).unwrap();
        let mut wide = tight.clone();
        let extra = rng.random_range(1..3000);
        let width = tight.width + extra;
        wide.waveforms = vec![0.0; n * width];
        wide.mask = vec![false; n * width];
        for r in 0..n {
            let len = tight.lengths[r];
            wide.waveforms[r * width..r * width + len].copy_from_slice(&rows[r]);
            wide.mask[r * width..r * width + len].iter_mut().for_each(|m| *m = true);
        }
        wide.width = width;
        let a = score(&model.logits(&p, &tight).map_err(|e| e.to_string())?);
        let b = score(&model.logits(&p, &wide).map_err(|e| e.to_string())?);
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
    }
    check!(worst < 1e-6, "scores moved by {worst:e}");
    Ok(format!("100 batches, max score change {worst:.1e}"))
}

fn noise_like(n: usize, amp: f32, seed: u64) -> AudioBuffer {
    let mut rng = substream(seed, "acceptance-audio", &[]);
    AudioBuffer::mono((0..n).map(|_| rng.random_range(-amp..amp)).collect(), 16_000)
}

fn rawboost_properties() -> Outcome {
    let x = noise_like(16_000, 0.6, 1);
    // Identity configurations.
    let lnl_id = LnlParams { bank: NotchBank { bands: 0, ..NotchBank::default() }, order: 1, ..LnlParams::default() };
    let y = lnl_convolutive_noise(&x, &lnl_id, &mut substream(1, "rb", &[])).map_err(|e| e.to_string())?;
    let dev = x.samples.iter().zip(&y.samples).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    check!(dev < 1e-6, "LnL identity deviates by {dev}");
    let isd_id = IsdParams { min_percent: 0.0, max_percent: 0.0, ..IsdParams::default() };
    check!(impulsive_sd_noise(&x, &isd_id, &mut substream(1, "rb", &[])).unwrap() == x, "ISD 0% changed the input");
    check!(rawboost(&x, &RawBoostConfig::off(), &mut substream(1, "rb", &[])).unwrap() == x, "mode off changed the input");

    // Stationary noise hits its target SNR.
    let mut worst_snr = 0.0f64;
    for i in 0..100u64 {
        let p = SsiParams::default();
        let t = stationary_si_noise_traced(&x, &p, &mut substream(2, "ssi", &[i])).map_err(|e| e.to_string())?;
        worst_snr = worst_snr.max((t.realized_snr_db(&x) - t.target_snr_db).abs());
    }
    check!(worst_snr <= 0.5, "realized SNR off by {worst_snr} dB");

    // Impulsive count: exactly floor(N * percent / 100) samples change.
    let quiet = noise_like(10_007, 0.15, 3);
    for pct in [1.0, 7.5, 10.0, 33.0] {
        let p = IsdParams { min_percent: pct, max_percent: pct, ..IsdParams::default() };
        let y = impulsive_sd_noise(&quiet, &p, &mut substream(3, "isd", &[pct as u64])).unwrap();
        let changed = quiet.samples.iter().zip(&y.samples).filter(|(a, b)| a != b).count();
        let want = (10_007.0 * pct / 100.0f64).floor() as usize;
        check!(changed == want, "{pct}%: {changed} samples changed, expected {want}");
    }

    // Determinism per mode.
    let modes = [
        RawBoostMode::Lnl,
        RawBoostMode::Isd,
        RawBoostMode::Ssi,
        RawBoostMode::SeriesLnlIsd,
        RawBoostMode::Parallel,
        RawBoostMode::FullSeries,
    ];
    for mode in modes {
        let cfg = RawBoostConfig { mode, ..RawBoostConfig::default() };
        let a = rawboost(&x, &cfg, &mut substream(9, "det", &[])).unwrap();
        let b = rawboost(&x, &cfg, &mut substream(9, "det", &[])).unwrap();
        let c = rawboost(&x, &cfg, &mut substream(10, "det", &[])).unwrap();
        check!(a == b, "{mode:?} differs under a fixed seed");
        check!(a != c, "{mode:?} ignores the seed");
    }
    Ok(format!("identities hold, SSI SNR within {worst_snr:.2e} dB over 100 draws, ISD counts exact, 6 modes deterministic"))
}

fn test_scores(ckpt: &Path, mf: &ManifestFile, out: &Path) -> Result<(), String> {
    let (model, params) = load_model(ckpt).map_err(|e| format!("{e:#}"))?;
    let test = mf.manifest.filter_split(Split::Test);
    let r = score_manifest(&model, &params, &test, &mf.base_dir, &ScoreOptions::default()).map_err(|e| format!("{e:#}"))?;
    write_scores(out, &r.records).map_err(|e| format!("{e:#}"))
}

fn determinism_and_persistence() -> Outcome {
    let dir = tempdir().unwrap();
    let d = dir.path();
    common::tiny_corpus(d, 21);
    let mf = read_manifest(&d.join("manifest.jsonl")).unwrap();
    let run = |name: &str, steps: u64, resume: Option<&Path>| {
        post_train(&common::tiny_run(d, d.join(name), steps), resume).map_err(|e| format!("{e:#}"))
    };
    let a = run("a", 50, None)?;
    let b = run("b", 50, None)?;
    for f in ["best.ckpt", "last.ckpt", "metrics.tsv"] {
        check!(fs::read(d.join("a").join(f)).unwrap() == fs::read(d.join("b").join(f)).unwrap(), "{f} differs between identical runs");
    }
    test_scores(&a.best_checkpoint, &mf, &d.join("a.tsv"))?;
    test_scores(&b.best_checkpoint, &mf, &d.join("b.tsv"))?;
    check!(fs::read(d.join("a.tsv")).unwrap() == fs::read(d.join("b.tsv")).unwrap(), "score files differ");

    let half = run("r", 25, None)?;
    let resumed = run("r", 50, Some(&half.last_checkpoint))?;
    check!(fs::read(&a.last_checkpoint).unwrap() == fs::read(&resumed.last_checkpoint).unwrap(), "25 + 25 resumed run differs from 50 steps");

    let ck = Checkpoint::load(&a.last_checkpoint).unwrap();
    let (model, state) = ModelState::from_checkpoint(&ck, AdamWConfig::default()).unwrap();
    let again = d.join("again.ckpt");
    state.to_checkpoint(&model).save(&again).unwrap();
    check!(fs::read(&again).unwrap() == fs::read(&a.last_checkpoint).unwrap(), "save -> load -> save changed bytes");
    Ok("identical runs give identical checkpoints, metrics and scores; 25 + 25 resume equals 50 steps; save -> load -> save is bit-exact".into())
}

fn configs_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn synthetic_end_to_end() -> Outcome {
    let start = Instant::now();
    let dir = tempdir().unwrap();
    let d = dir.path();
    let err = |e: anyhow::Error| format!("{e:#}");
    write_toy_corpus(&d.join("source"), &ToyCorpusSpec::source(1)).map_err(err)?;
    write_toy_corpus(&d.join("target"), &ToyCorpusSpec::target(2)).map_err(err)?;

    let mut post = RunConfig::load(&configs_dir().join("toy-post-train.toml")).map_err(err)?;
    post.out_dir = d.join("post");
    post.manifests = vec![d.join("source/manifest.jsonl")];
    check!(post.total_steps.unwrap_or(u64::MAX) <= 5000, "post-training is capped at 5000 steps");
    let o = post_train(&post, None).map_err(err)?;
    let val_eer = read_metrics(&o.metrics)
        .map_err(err)?
        .iter()
        .filter_map(|r| r[4].parse::<f64>().ok())
        .fold(f64::INFINITY, f64::min);

    let source = read_manifest(&d.join("source/manifest.jsonl")).map_err(err)?;
    let test = source.manifest.filter_split(Split::Test);
    let (model, params) = load_model(&o.best_checkpoint).map_err(err)?;
    let whole = score_manifest(&model, &params, &test, &source.base_dir, &ScoreOptions::default()).map_err(err)?;
    let whole_eer = compute_eer(&whole.records).map_err(|e| e.to_string())?.eer;
    let rows = multi_duration_eval(&model, &params, &test, &source.base_dir, &[4.0, 10.0, 13.0], DEFAULT_MIN_TAIL_S, true)
        .map_err(err)?;

    let target = read_manifest(&d.join("target/manifest.jsonl")).map_err(err)?;
    let target_test = target.manifest.filter_split(Split::Test);
    let target_eer = |ckpt: &Path| -> Result<f64, String> {
        let (m, p) = load_model(ckpt).map_err(err)?;
        let r = score_manifest(&m, &p, &target_test, &target.base_dir, &ScoreOptions::default()).map_err(err)?;
        compute_eer(&r.records).map(|e| e.eer).map_err(|e| e.to_string())
    };
    let zero_shot = target_eer(&o.best_checkpoint)?;
    let mut ft = RunConfig::load(&configs_dir().join("toy-fine-tune.toml")).map_err(err)?;
    ft.out_dir = d.join("ft");
    ft.manifests = vec![d.join("target/manifest.jsonl")];
    check!(ft.total_steps == Some(500), "fine-tuning runs 500 steps");
    let f = fine_tune(&o.best_checkpoint, &ft).map_err(err)?;
    let tuned = target_eer(&f.best_checkpoint)?;
    let secs = start.elapsed().as_secs_f64();

    let per_duration: Vec<String> = rows.iter().map(|r| format!("{} s {:.3}", r.seconds, r.eer.eer)).collect();
    let summary = format!(
        "{} post-train steps, best val EER {val_eer:.3}, test EER {whole_eer:.3}, segments [{}], target EER {zero_shot:.3} -> {tuned:.3} after 500 fine-tune steps, {secs:.0} s total",
        o.final_step,
        per_duration.join(", ")
    );
    check!(val_eer <= 0.05, "val EER {val_eer} above 5%; {summary}");
    check!(whole_eer <= 0.05, "whole-file EER {whole_eer} above 5%; {summary}");
    for r in &rows {
        check!(r.eer.eer <= 0.08, "EER {} at {} s above 8%; {summary}", r.eer.eer, r.seconds);
    }
    check!(tuned < zero_shot, "fine-tuning did not improve target EER; {summary}");
    check!(secs < 15.0 * 60.0, "took {secs:.0} s; {summary}");
    Ok(summary)
}
