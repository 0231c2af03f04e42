//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error (bad flags,
//! missing inputs, invalid config). Failures print one `error: ...` line.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cmtrain_core::audio::NormMode;
use cmtrain_core::augment::{rawboost, RawBoostConfig, RawBoostMode};
use cmtrain_core::catalog::{split_manifest, stats, Manifest, Split};
use cmtrain_core::eval::compute_eer;
use cmtrain_core::rng::substream;

use crate::config::{RunConfig, CONFIG_ENV};
use crate::evaluate::{
    export_embeddings, multi_duration_eval, score_manifest, write_scores, ScoreOptions, DEFAULT_MIN_TAIL_S,
};
use crate::manifest::{build_manifest, read_manifest, write_manifest, ManifestFile, Rules};
use crate::preprocess::preprocess_manifest;
use crate::synth::{write_toy_corpus, ToyCorpusSpec};
use crate::{checkpoint, train, wav};

/// Marks an error as a usage problem (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(usage(format!("{what} `{}` does not exist", path.display())));
    }
    Ok(())
}

#[derive(Parser, Debug)]
#[command(name = "cmtrain", version, about = "Post-train, fine-tune and evaluate waveform deepfake speech detectors")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build, split and summarize JSONL manifests.
    #[command(subcommand)]
    Manifest(ManifestCmd),
    /// Convert every entry to 16 kHz mono 16-bit PCM and write a new manifest.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = NormArg::Peak)]
        norm: NormArg,
    },
    /// Apply RawBoost to one preprocessed file.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<RawBoostMode>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Take parameter ranges from this run config's [rawboost] block.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train from scratch (or resume) on the train/val entries of the configured manifests.
    PostTrain {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from a checkpoint written by an earlier run with the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Fine-tune a checkpoint on a 90/10 split of the target train entries.
    FineTune {
        #[arg(long)]
        from: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score a manifest and report EER, whole-file, per segment, or per segment duration.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, conflicts_with = "durations")]
        segment_seconds: Option<f64>,
        /// Comma-separated segment durations, e.g. 4,10,13,30,50.
        #[arg(long, value_delimiter = ',')]
        durations: Option<Vec<f64>>,
        #[arg(long, default_value_t = DEFAULT_MIN_TAIL_S)]
        min_tail_s: f64,
        /// Only score entries of this split.
        #[arg(long, value_parser = parse_split)]
        split: Option<Split>,
        /// Score file (single-duration mode).
        #[arg(long, conflicts_with = "durations")]
        out: Option<PathBuf>,
        /// Directory for per-duration score files and the EER table.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Fail on unreadable files instead of counting them.
        #[arg(long)]
        strict: bool,
    },
    /// Export pooled embeddings as CSV.
    Embed {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_split)]
        split: Option<Split>,
    },
    /// Generate the synthetic corpus used by the end-to-end checks.
    ToyCorpus {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Domain::Source)]
        domain: Domain,
    },
}

#[derive(Subcommand, Debug)]
enum ManifestCmd {
    /// Walk a directory and assign files to categories by glob rules.
    Build {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Randomly reassign entries to train/val.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        train_frac: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hours and file counts per category and language.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Run config (TOML).
    #[arg(long, env = CONFIG_ENV)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    total_steps: Option<u64>,
    #[arg(long)]
    validation_interval: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NormArg {
    Peak,
    None,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Domain {
    Source,
    Target,
}

fn parse_mode(s: &str) -> Result<RawBoostMode, String> {
    s.parse().map_err(|e: cmtrain_core::Error| e.to_string())
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: cmtrain_core::Error| e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            if e.chain().any(|c| c.is::<UsageError>()) {
                2
            } else {
                1
            }
        }
    }
}

fn load_run_config(a: &RunArgs) -> Result<RunConfig> {
    require_file(&a.config, "config")?;
    let mut cfg = RunConfig::load(&a.config).map_err(|e| usage(format!("{e:#}")))?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = &a.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(n) = a.total_steps {
        cfg.total_steps = Some(n);
    }
    if let Some(n) = a.validation_interval {
        cfg.validation_interval = n;
    }
    cfg.validate().map_err(|e| usage(format!("invalid config `{}`: {e:#}", a.config.display())))?;
    for m in &cfg.manifests {
        require_file(m, "manifest")?;
    }
    Ok(cfg)
}

fn load_manifest(path: &Path, split: Option<Split>) -> Result<ManifestFile> {
    require_file(path, "manifest")?;
    let mut mf = read_manifest(path)?;
    if let Some(s) = split {
        mf.manifest = mf.manifest.filter_split(s);
    }
    Ok(mf)
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Manifest(ManifestCmd::Build { root, rules, out }) => {
            if !root.is_dir() {
                return Err(usage(format!("root `{}` is not a directory", root.display())));
            }
            require_file(&rules, "rules file")?;
            let rules = Rules::load(&rules).map_err(|e| usage(format!("{e:#}")))?;
            let report = build_manifest(&root, &rules)?;
            write_manifest(&out, &report.manifest)?;
            println!(
                "wrote {} entries to {} ({} unreadable files skipped)",
                report.manifest.len(),
                out.display(),
                report.skipped.len()
            );
            for (id, why) in &report.skipped {
                println!("skipped\t{id}\t{why}");
            }
        }
        Command::Manifest(ManifestCmd::Split { input, train_frac, seed, out }) => {
            let mf = load_manifest(&input, None)?;
            if !(train_frac > 0.0 && train_frac < 1.0) {
                return Err(usage(format!("--train-frac {train_frac} outside (0, 1)")));
            }
            let (tr, va) = split_manifest(&mf.manifest, train_frac, seed)?;
            // Keep the input order, with the split field rewritten.
            let mut entries = Vec::with_capacity(mf.manifest.len());
            let (mut ti, mut vi) = (tr.entries().iter().peekable(), va.entries().iter().peekable());
            for e in mf.manifest.entries() {
                if ti.peek().is_some_and(|t| t.id == e.id) {
                    entries.push(ti.next().unwrap().clone());
                } else {
                    entries.push(vi.next().expect("split is a partition").clone());
                }
            }
            let mut merged = Manifest::new(entries)?;
            if out.parent() != Some(mf.base_dir.as_path()) {
                merged = rebase(merged, &mf.base_dir);
            }
            write_manifest(&out, &merged)?;
            println!("train {} / val {} written to {}", tr.len(), va.len(), out.display());
        }
        Command::Manifest(ManifestCmd::Stats { input }) => {
            let mf = load_manifest(&input, None)?;
            print!("{}", format_stats(&mf.manifest));
        }
        Command::Preprocess { input, out_dir, norm } => {
            let mf = load_manifest(&input, None)?;
            let norm = match norm {
                NormArg::Peak => NormMode::Peak,
                NormArg::None => NormMode::None,
            };
            let report = preprocess_manifest(&mf.manifest, &mf.base_dir, &out_dir, norm)?;
            println!(
                "preprocessed {} entries into {} ({} skipped)",
                report.manifest.len(),
                report.manifest_path.display(),
                report.skipped.len()
            );
        }
        Command::Augment { input, out, mode, seed, config } => {
            require_file(&input, "input")?;
            let mut cfg = match &config {
                Some(p) => {
                    require_file(p, "config")?;
                    RunConfig::load(p).map_err(|e| usage(format!("{e:#}")))?.rawboost
                }
                None => RawBoostConfig::default(),
            };
            if let Some(m) = mode {
                cfg.mode = m;
            }
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            let buf = wav::load_audio(&input)?;
            buf.require_preprocessed().context("run `cmtrain preprocess` first")?;
            let y = rawboost(&buf, &cfg, &mut substream(seed, "rawboost", &[]))?;
            wav::write_pcm16(&out, &y)?;
            println!("wrote {} ({:?}, seed {seed})", out.display(), cfg.mode);
        }
        Command::PostTrain { run, resume } => {
            let cfg = load_run_config(&run)?;
            if let Some(r) = &resume {
                require_file(r, "checkpoint")?;
            }
            let o = train::post_train(&cfg, resume.as_deref())?;
            print_outcome(&o);
        }
        Command::FineTune { from, run } => {
            require_file(&from, "checkpoint")?;
            let cfg = load_run_config(&run)?;
            let o = train::fine_tune(&from, &cfg)?;
            print_outcome(&o);
        }
        Command::Evaluate {
            ckpt,
            manifest,
            segment_seconds,
            durations,
            min_tail_s,
            split,
            out,
            out_dir,
            strict,
        } => {
            require_file(&ckpt, "checkpoint")?;
            let mf = load_manifest(&manifest, split)?;
            let (model, params) = checkpoint::load_model(&ckpt)?;
            if let Some(d) = &out_dir {
                std::fs::create_dir_all(d).with_context(|| format!("cannot create `{}`", d.display()))?;
            }
            match durations {
                Some(durations) => {
                    let rows = multi_duration_eval(&model, &params, &mf.manifest, &mf.base_dir, &durations, min_tail_s, strict)?;
                    let mut table = String::from("duration_s\tsegments\teer\tthreshold\tmissing\n");
                    for r in &rows {
                        table.push_str(&format!(
                            "{}\t{}\t{}\t{}\t{}\n",
                            r.seconds,
                            r.segments,
                            r.eer.eer,
                            r.eer.threshold,
                            r.report.missing.len()
                        ));
                        if let Some(d) = &out_dir {
                            write_scores(&d.join(format!("scores_{}s.tsv", r.seconds)), &r.report.records)?;
                        }
                    }
                    if let Some(d) = &out_dir {
                        std::fs::write(d.join("eer.tsv"), &table)?;
                    }
                    print!("{table}");
                }
                None => {
                    let opts = ScoreOptions {
                        segment_seconds,
                        min_tail_s,
                        strict,
                    };
                    let report = score_manifest(&model, &params, &mf.manifest, &mf.base_dir, &opts)?;
                    let out = out.or_else(|| out_dir.as_ref().map(|d| d.join("scores.tsv")));
                    if let Some(p) = &out {
                        write_scores(p, &report.records)?;
                    }
                    let eer = compute_eer(&report.records)?;
                    println!(
                        "eer\t{}\tthreshold\t{}\trecords\t{}\tgenuine\t{}\tfake\t{}\tmissing\t{}",
                        eer.eer,
                        eer.threshold,
                        report.records.len(),
                        eer.n_genuine,
                        eer.n_fake,
                        report.missing.len()
                    );
                }
            }
        }
        Command::Embed { ckpt, manifest, out, split } => {
            require_file(&ckpt, "checkpoint")?;
            let mf = load_manifest(&manifest, split)?;
            let (model, params) = checkpoint::load_model(&ckpt)?;
            let n = export_embeddings(&model, &params, &mf.manifest, &mf.base_dir, &out)?;
            println!("wrote {n} embeddings to {}", out.display());
        }
        Command::ToyCorpus { out_dir, seed, domain } => {
            let spec = match domain {
                Domain::Source => ToyCorpusSpec::source(seed),
                Domain::Target => ToyCorpusSpec::target(seed),
            };
            let m = write_toy_corpus(&out_dir, &spec)?;
            println!("wrote {} clips to {}", m.len(), out_dir.join("manifest.jsonl").display());
        }
    }
    Ok(())
}

/// Makes relative entry paths absolute so the manifest can live elsewhere.
fn rebase(m: Manifest, base: &Path) -> Manifest {
    let entries = m
        .into_entries()
        .into_iter()
        .map(|mut e| {
            e.path = crate::manifest::resolve(base, &e.path).to_string_lossy().into_owned();
            e
        })
        .collect();
    Manifest::new(entries).expect("rebasing keeps ids unique")
}

fn print_outcome(o: &train::TrainOutcome) {
    println!("step\t{}", o.final_step);
    println!("best_val_loss\t{}", o.best_val_loss);
    println!("best\t{}", o.best_checkpoint.display());
    println!("last\t{}", o.last_checkpoint.display());
    println!("metrics\t{}", o.metrics.display());
}

pub fn format_stats(m: &Manifest) -> String {
    let s = stats(m);
    let mut out = String::from("category\tfiles\thours\n");
    for (c, h) in &s.hours_by_category {
        out.push_str(&format!("{c}\t{}\t{h:.4}\n", s.files_by_category.get(c).copied().unwrap_or(0)));
    }
    out.push_str("\nlanguage\thours\n");
    for (l, h) in &s.hours_by_language {
        out.push_str(&format!("{l}\t{h:.4}\n"));
    }
    out.push_str(&format!(
        "\ntotal\t{}\t{:.4}\ngenuine_hours\t{:.4}\nfake_hours\t{:.4}\n",
        s.total_files,
        s.total_hours,
        s.genuine_hours(),
        s.fake_hours()
    ));
    out
}
