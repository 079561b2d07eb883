use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use tse::audio::{build_dataset, build_sv_corpus, load_manifest, DatasetSpec, SplitCounts, SvCorpusSpec};
use tse::config::{RunConfig, UpstreamConfig};
use tse::harness::{self, OracleMode, SvConfig};
use tse::upstream::ToyUpstream;

#[derive(Parser)]
#[command(name = "tse", version, about = "Target speech extraction over frozen layer-wise speech features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a mixture corpus with train/valid/test manifests.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        speakers: usize,
        #[arg(long, default_value_t = 200)]
        train: usize,
        #[arg(long, default_value_t = 40)]
        valid: usize,
        #[arg(long, default_value_t = 40)]
        test: usize,
        /// SNR range in dB as LO:HI
        #[arg(long, default_value = "-5:5", allow_hyphen_values = true)]
        snr: String,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Synthesize a speaker-verification corpus and trial list.
    SimulateSv {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        speakers: usize,
        #[arg(long, default_value_t = 30)]
        train_utts: usize,
        #[arg(long, default_value_t = 10)]
        test_utts: usize,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train on DIR/train.jsonl, validating on DIR/valid.jsonl.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint on a manifest and write a JSON report.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Replace the estimate with the target or the mixture
        #[arg(long)]
        oracle: Option<String>,
    },
    /// Write the spk_enc and extractor layer weights as CSV.
    ExportWeights {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train MHFA with AM-softmax and report the EER on a trial list.
    Sv {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// JSON SvConfig; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Precompute LFSC feature dumps for every mixture and enrollment.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run config whose toy upstream to use (default: seed 0, L 4, D 192)
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_range(s: &str) -> tse::Result<(f64, f64)> {
    let bad = || tse::Error::Config(format!("--snr expects LO:HI, got {s:?}"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    Ok((lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
}

fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(RunConfig::from_json(&text)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            out,
            speakers,
            train,
            valid,
            test,
            snr,
            duration,
            seed,
        } => {
            let spec = DatasetSpec {
                num_speakers: speakers,
                counts: SplitCounts { train, valid, test },
                snr_range: parse_range(&snr)?,
                duration_s: duration,
                seed,
            };
            for p in build_dataset(&spec, &out)? {
                println!("{}", p.display());
            }
        }
        Command::SimulateSv {
            out,
            speakers,
            train_utts,
            test_utts,
            duration,
            seed,
        } => {
            let spec = SvCorpusSpec {
                num_speakers: speakers,
                train_utts,
                test_utts,
                duration_s: duration,
                seed,
            };
            let (utts, trials) = build_sv_corpus(&spec, &out)?;
            println!("{}\n{}", utts.display(), trials.display());
        }
        Command::Train {
            config,
            data,
            out,
            resume,
        } => {
            let config = read_config(&config)?;
            let outcome = harness::train(
                &config,
                &data.join("train.jsonl"),
                &data.join("valid.jsonl"),
                &out,
                resume.as_deref(),
            )?;
            match outcome.best.meta.best_valid_loss {
                Some(v) => println!("best epoch {}: valid -SI-SDR {v:.3} dB", outcome.best.meta.epoch),
                None => println!("no epochs run"),
            }
        }
        Command::Evaluate {
            ckpt,
            manifest,
            report,
            oracle,
        } => {
            let mode = oracle.as_deref().map(OracleMode::parse).transpose()?.unwrap_or_default();
            let r = harness::evaluate(&ckpt, &manifest, &report, mode)?;
            println!("{}", r.summary());
        }
        Command::ExportWeights { ckpt, out } => {
            harness::export_layer_weights(&ckpt, &out)?;
            println!("{}", out.display());
        }
        Command::Sv {
            data,
            trials,
            report,
            config,
        } => {
            let config = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    SvConfig::from_json(&text)?
                }
                None => SvConfig::default(),
            };
            let r = harness::sv_benchmark(&config, &data, &trials)?;
            r.save(&report)?;
            println!("EER {:.2}% (untrained {:.2}%) over {} trials", r.eer_pct, r.untrained_eer_pct, r.num_trials);
        }
        Command::Features { manifest, out, config } => {
            let upstream = match config.map(|p| read_config(&p)).transpose()?.map(|c| c.upstream) {
                None => ToyUpstream::new(0, 4, 192)?,
                Some(UpstreamConfig::Toy { seed, layers, dim }) => ToyUpstream::new(seed, layers, dim)?,
                Some(UpstreamConfig::Files { .. }) => {
                    return Err(tse::Error::Config("features are computed with a toy upstream config".into()).into())
                }
            };
            let records = load_manifest(&manifest)?;
            let root = manifest.parent().unwrap_or(Path::new("."));
            let n = harness::precompute_features(&records, root, &upstream, &out)?;
            println!("wrote {n} feature files to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let user = e.downcast_ref::<tse::Error>().is_some_and(|e| e.is_user_error());
            ExitCode::from(if user { 2 } else { 1 })
        }
    }
}
