//! `mmdr`: train, evaluate and compare delay-randomized navigation policies.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mmdr_core::harness::{
    bench_delays, compare_baselines, discover_runs, render_delay_stats, run_ablation_k, BenchSettings, EvalProtocol,
    LatencyProfile, ProtocolKind, RunConfig,
};
use mmdr_core::nn::read_checkpoint;
use mmdr_core::ppo::train;
use mmdr_core::PipelineMode;

#[derive(Parser)]
#[command(name = "mmdr", version, about = "Multi-modal delay randomization for vision-guided navigation policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy and write its checkpoints and metrics.
    Train {
        /// TOML run configuration, or `default` for the built-in one.
        #[arg(long, default_value = "default")]
        config: String,
        /// Observation pipeline: mmdr, no_delay, frame_extract, fixed_delay,
        /// interpolation or state_only. Overrides the config file.
        #[arg(long)]
        mode: Option<PipelineMode>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory for config.toml, metrics.csv and *.ckpt.
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
        /// Override ppo.total_samples.
        #[arg(long)]
        total_samples: Option<u64>,
    },
    /// Evaluate a checkpoint under a test protocol and write per-episode rows.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// train_env_random_delay, moving_obstacles or ablation_k.
        #[arg(long, default_value = "train_env_random_delay")]
        protocol: ProtocolKind,
        /// Comma-separated evaluation seeds; defaults to the run's eval seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Report CSV; aggregates go to <out>.summary.csv.
        #[arg(long, default_value = "eval.csv")]
        out: PathBuf,
        /// Episodes per seed; defaults to the run's eval setting.
        #[arg(long)]
        episodes: Option<usize>,
        /// Test delay range in seconds as `lo,hi`; `0,0` disables injection.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        delay_range: Option<Vec<f64>>,
    },
    /// Print effective sensor delays of every pipeline under the measured
    /// latency profile.
    BenchDelays {
        /// Simulated seconds of sensor traffic.
        #[arg(long, default_value_t = 600.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated modes; all by default.
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<PipelineMode>>,
    },
    /// Evaluate every final checkpoint under a runs directory and tabulate
    /// the methods per protocol.
    Compare {
        /// Directory searched recursively for final.ckpt files.
        #[arg(long)]
        runs: PathBuf,
        /// Comma-separated protocols; train_env_random_delay and
        /// moving_obstacles by default.
        #[arg(long, value_delimiter = ',')]
        protocols: Option<Vec<ProtocolKind>>,
        /// Comma-separated methods; all six by default.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<PipelineMode>>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Optional CSV of every evaluated episode.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate the sub-buffer size ablation with and without
    /// delay randomization.
    Ablation {
        #[arg(long, default_value = "default")]
        config: String,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
        ks: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        #[arg(long, default_value = "runs/ablation")]
        out: PathBuf,
        #[arg(long)]
        total_samples: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train {
            config,
            mode,
            seed,
            out,
            total_samples,
        } => cmd_train(&config, mode, seed, &out, total_samples),
        Command::Eval {
            checkpoint,
            protocol,
            seeds,
            out,
            episodes,
            delay_range,
        } => cmd_eval(&checkpoint, protocol, seeds, &out, episodes, delay_range),
        Command::BenchDelays { duration, seed, modes } => {
            if !(duration > 0.0) {
                bail!("--duration must be positive");
            }
            let modes = modes.unwrap_or_else(|| PipelineMode::ALL.to_vec());
            let settings = BenchSettings {
                duration,
                seed,
                ..BenchSettings::default()
            };
            let stats = bench_delays(&LatencyProfile::default(), &modes, &settings)?;
            print!("{}", render_delay_stats(&stats));
            Ok(())
        }
        Command::Compare {
            runs,
            protocols,
            methods,
            episodes,
            out,
        } => cmd_compare(&runs, protocols, methods, episodes, out.as_deref()),
        Command::Ablation {
            config,
            ks,
            seeds,
            out,
            total_samples,
        } => {
            let mut run = RunConfig::load(&config, None).with_context(|| format!("loading config {config}"))?;
            if let Some(n) = total_samples {
                run.ppo.total_samples = n;
            }
            let report = run_ablation_k(&run, &ks, &seeds, &out, &mut |name, m| {
                println!("{name} batch {} samples {} return {:.3}", m.batch_index, m.samples, m.mean_return);
            })?;
            for v in &report.variants {
                println!(
                    "k={:<3} randomized={:<5} seed={} span={:.2}s final_return={:.3}",
                    v.k, v.randomized, v.seed, v.span_seconds, v.final_return
                );
            }
            for s in &report.eval.summaries {
                println!(
                    "{:<12} distance {:.3} ± {:.3}  collisions {:.2} ± {:.2}",
                    s.method, s.moving_distance_mean, s.moving_distance_std, s.collision_steps_mean, s.collision_steps_std
                );
            }
            Ok(())
        }
    }
}

fn cmd_train(config: &str, mode: Option<PipelineMode>, seed: u64, out: &Path, total_samples: Option<u64>) -> Result<()> {
    let mut run = RunConfig::load(config, mode).with_context(|| format!("loading config {config}"))?;
    if let Some(n) = total_samples {
        run.ppo.total_samples = n;
        run.validate()?;
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    run.save(&out.join("config.toml"))?;
    let meta = run.to_metadata();
    println!(
        "training {} seed {} for {} batches of {}",
        run.pipeline.mode,
        seed,
        run.ppo.num_batches(),
        run.ppo.batch_size
    );
    let outcome = train(&run.env_config(), &run.ppo, seed, Some(out), meta, &mut |m| {
        println!(
            "batch {:>4}  samples {:>9}  return {:>8.3}  distance {:>6.3}  collisions {:>6.2}  kl {:.5}  {:.1}s",
            m.batch_index, m.samples, m.mean_return, m.mean_moving_distance, m.mean_collision_steps, m.kl, m.wall_seconds
        );
    })?;
    for c in &outcome.checkpoints {
        println!("wrote {}", c.display());
    }
    Ok(())
}

fn cmd_eval(
    checkpoint: &Path,
    kind: ProtocolKind,
    seeds: Option<Vec<u64>>,
    out: &Path,
    episodes: Option<usize>,
    delay_range: Option<Vec<f64>>,
) -> Result<()> {
    if !checkpoint.is_file() {
        bail!("checkpoint {} does not exist", checkpoint.display());
    }
    let ckpt = read_checkpoint(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    let run = mmdr_core::harness::checkpoint_run_config(&ckpt)?;
    let mut protocol = EvalProtocol::new(kind, &run.eval);
    if let Some(s) = seeds {
        protocol.seeds = s;
    }
    if let Some(n) = episodes {
        protocol.episodes_per_seed = n;
    }
    if let Some(r) = delay_range {
        protocol.delay_range = [r[0], r[1]];
    }
    if !protocol.is_reportable() {
        eprintln!("warning: fewer than 3 seeds; aggregates are not suitable for reporting");
    }
    let report = mmdr_core::harness::evaluate(&ckpt, &protocol)?;
    report.write_csv(out)?;
    for s in &report.summaries {
        println!(
            "{} on {}: moving distance {:.3} ± {:.3}, collision steps {:.2} ± {:.2} ({} seeds, {} episodes)",
            s.method,
            s.protocol,
            s.moving_distance_mean,
            s.moving_distance_std,
            s.collision_steps_mean,
            s.collision_steps_std,
            s.seeds,
            s.episodes
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_compare(
    runs: &Path,
    protocols: Option<Vec<ProtocolKind>>,
    methods: Option<Vec<PipelineMode>>,
    episodes: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    if !runs.is_dir() {
        bail!("runs directory {} does not exist", runs.display());
    }
    let entries = discover_runs(runs)?;
    if entries.is_empty() {
        eprintln!("warning: no {} found under {}", mmdr_core::harness::FINAL_CHECKPOINT, runs.display());
    }
    let kinds = protocols.unwrap_or_else(|| vec![ProtocolKind::TrainEnvRandomDelay, ProtocolKind::MovingObstacles]);
    let methods = methods.unwrap_or_else(|| PipelineMode::ALL.to_vec());
    let eval_cfg = RunConfig::default().eval;
    let protocols: Vec<EvalProtocol> = kinds
        .into_iter()
        .map(|k| {
            let mut p = EvalProtocol::new(k, &eval_cfg);
            if let Some(n) = episodes {
                p.episodes_per_seed = n;
            }
            p
        })
        .collect();
    let report = compare_baselines(&entries, &methods, &protocols)?;
    print!("{}", report.render());
    if let Some(path) = out {
        report.raw.write_csv(path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
