use std::fs;
use std::io::Write;
use std::path::Path;

use super::{evaluate_network, EvalProtocol, EvalReport, HarnessError, ProtocolKind, RunConfig};
use crate::delay::{PipelineConfig, PipelineMode};
use crate::ppo::{train, BatchMetrics, METRICS_HEADER};

/// Visual buffer span in seconds for each `k`, one frame per control step.
pub fn ablation_spans(ks: &[usize], stack_count: usize, control_hz: u32) -> Vec<(usize, f64)> {
    ks.iter()
        .map(|&k| {
            let cfg = PipelineConfig {
                k,
                stack_count,
                ..PipelineConfig::for_mode(PipelineMode::Mmdr)
            };
            (k, cfg.visual_span(control_hz))
        })
        .collect()
}

/// Pipeline of one ablation variant: sub-buffer sampling with delay
/// randomization, or the same stack read deterministically without it.
pub fn ablation_pipeline(k: usize, randomized: bool) -> PipelineConfig {
    let mode = if randomized {
        PipelineMode::Mmdr
    } else {
        PipelineMode::FrameExtract
    };
    PipelineConfig {
        k,
        ..PipelineConfig::for_mode(mode)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationVariant {
    pub k: usize,
    pub randomized: bool,
    pub seed: u64,
    pub span_seconds: f64,
    /// Mean episode return of the last training batch.
    pub final_return: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub variants: Vec<AblationVariant>,
    pub eval: EvalReport,
}

fn variant_name(k: usize, randomized: bool) -> String {
    format!("{}_k{k}", if randomized { "mmdr" } else { "no_rand" })
}

/// Trains every (k, randomization, seed) variant of `base` into
/// `out_dir/<variant>_seed<seed>`, evaluates each with the `ablation_k`
/// protocol, and writes `curves.csv` and `ablation.csv` to `out_dir`.
pub fn run_ablation_k(
    base: &RunConfig,
    ks: &[usize],
    seeds: &[u64],
    out_dir: &Path,
    progress: &mut dyn FnMut(&str, &BatchMetrics),
) -> Result<AblationReport, HarnessError> {
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |source| HarnessError::Io { path: p, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let curves_path = out_dir.join("curves.csv");
    let mut curves = fs::File::create(&curves_path).map_err(io(&curves_path))?;
    writeln!(curves, "variant,k,randomized,seed,{METRICS_HEADER}").map_err(io(&curves_path))?;

    let mut variants = Vec::new();
    let mut reports = Vec::new();
    for &k in ks {
        for randomized in [true, false] {
            let name = variant_name(k, randomized);
            for &seed in seeds {
                let mut run = base.clone();
                run.pipeline = ablation_pipeline(k, randomized);
                run.validate()?;
                let dir = out_dir.join(format!("{name}_seed{seed}"));
                fs::create_dir_all(&dir).map_err(io(&dir))?;
                run.save(&dir.join("config.toml"))?;
                let meta = run.to_metadata();
                let outcome = train(&run.env_config(), &run.ppo, seed, Some(&dir), meta, &mut |m| progress(&name, m))?;
                for m in &outcome.metrics {
                    writeln!(curves, "{name},{k},{randomized},{seed},{}", m.csv_row()).map_err(io(&curves_path))?;
                }
                let protocol = EvalProtocol {
                    seeds: vec![seed],
                    ..EvalProtocol::new(ProtocolKind::AblationK, &run.eval)
                };
                let mut report = evaluate_network(&outcome.net, &run, &protocol)?;
                for r in &mut report.rows {
                    r.method = name.clone();
                }
                reports.push(report);
                variants.push(AblationVariant {
                    k,
                    randomized,
                    seed,
                    span_seconds: run.pipeline.visual_span(run.world.control_hz),
                    final_return: outcome.metrics.last().map_or(f64::NAN, |m| m.mean_return),
                });
            }
        }
    }
    let eval = EvalReport::merge(reports);
    eval.write_csv(&out_dir.join("ablation.csv"))?;
    Ok(AblationReport { variants, eval })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_for_default_ks() {
        let spans = ablation_spans(&[4, 8, 16], 4, 25);
        assert_eq!(spans, vec![(4, 0.64), (8, 1.28), (16, 2.56)]);
    }

    #[test]
    fn variants_differ_only_in_randomization() {
        let a = ablation_pipeline(8, true);
        let b = ablation_pipeline(8, false);
        assert_eq!(a.k, b.k);
        assert_eq!(a.mode, PipelineMode::Mmdr);
        assert_eq!(b.mode, PipelineMode::FrameExtract);
    }
}
