use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{checkpoint_run_config, evaluate_network, EvalProtocol, EvalReport, HarnessError, Summary};
use crate::delay::PipelineMode;
use crate::nn::read_checkpoint;

/// Name of the checkpoint file a finished training run leaves behind.
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

/// A final checkpoint found under a runs directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub path: PathBuf,
    pub method: PipelineMode,
    pub seed: u64,
}

/// Finds every `final.ckpt` below `dir`, sorted by path.
pub fn discover_runs(dir: &Path) -> Result<Vec<RunEntry>, HarnessError> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = fs::read_dir(&d).map_err(|source| HarnessError::Io {
            path: d.display().to_string(),
            source,
        })?;
        for entry in entries {
            let path = entry
                .map_err(|source| HarnessError::Io {
                    path: d.display().to_string(),
                    source,
                })?
                .path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == FINAL_CHECKPOINT) {
                found.push(path);
            }
        }
    }
    found.sort();
    found
        .into_iter()
        .map(|path| {
            let ckpt = read_checkpoint(&path)?;
            let run = checkpoint_run_config(&ckpt)?;
            Ok(RunEntry {
                method: run.pipeline.mode,
                seed: ckpt.header.seed,
                path,
            })
        })
        .collect()
}

/// One method's line in a protocol table. `summary` is `None` when no
/// checkpoint of the method was found.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub method: PipelineMode,
    pub summary: Option<Summary>,
    /// 1-based rank by mean moving distance among present methods.
    pub rank: Option<usize>,
    /// Present methods with strictly lower / higher mean moving distance.
    pub wins: usize,
    pub losses: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolTable {
    pub protocol: EvalProtocol,
    pub rows: Vec<CompareRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub tables: Vec<ProtocolTable>,
    /// Every evaluated episode across protocols.
    pub raw: EvalReport,
}

impl CompareReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for t in &self.tables {
            let _ = writeln!(out, "protocol: {}", t.protocol.kind);
            let _ = writeln!(
                out,
                "{:<14} {:>5}  {:>18}  {:>18}  {:>4}  {:>5}",
                "method", "seeds", "moving_distance", "collision_steps", "rank", "W-L"
            );
            for r in &t.rows {
                match (&r.summary, r.rank) {
                    (Some(s), Some(rank)) => {
                        let _ = writeln!(
                            out,
                            "{:<14} {:>5}  {:>18}  {:>18}  {:>4}  {:>5}",
                            r.method.as_str(),
                            s.seeds,
                            format!("{:.2} ± {:.2}", s.moving_distance_mean, s.moving_distance_std),
                            format!("{:.1} ± {:.1}", s.collision_steps_mean, s.collision_steps_std),
                            rank,
                            format!("{}-{}", r.wins, r.losses)
                        );
                    }
                    _ => {
                        let _ = writeln!(out, "{:<14} absent", r.method.as_str());
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluates every discovered checkpoint of `methods` under each protocol.
/// A checkpoint is evaluated with its own training seed as the protocol
/// seed, so the spread is over independently trained policies.
pub fn compare_baselines(
    runs: &[RunEntry],
    methods: &[PipelineMode],
    protocols: &[EvalProtocol],
) -> Result<CompareReport, HarnessError> {
    let mut tables = Vec::new();
    let mut all = Vec::new();
    for protocol in protocols {
        let mut reports: Vec<(PipelineMode, EvalReport)> = Vec::new();
        for &method in methods {
            if let Some((_, r)) = reports.iter().find(|(m, _)| *m == method) {
                let r = r.clone();
                reports.push((method, r));
                continue;
            }
            let mut parts = Vec::new();
            for entry in runs.iter().filter(|e| e.method == method) {
                let ckpt = read_checkpoint(&entry.path)?;
                let run = checkpoint_run_config(&ckpt)?;
                let net = ckpt.into_network()?;
                let p = EvalProtocol {
                    seeds: vec![entry.seed],
                    ..protocol.clone()
                };
                parts.push(evaluate_network(&net, &run, &p)?);
            }
            reports.push((method, EvalReport::merge(parts)));
        }

        let means: Vec<Option<f64>> = reports
            .iter()
            .map(|(m, r)| r.summary(m.as_str(), protocol.kind.as_str()).map(|s| s.moving_distance_mean))
            .collect();
        let rows = reports
            .iter()
            .zip(&means)
            .map(|((method, r), mean)| {
                let summary = r.summary(method.as_str(), protocol.kind.as_str()).cloned();
                let (rank, wins, losses) = match mean {
                    Some(m) => {
                        let higher = means.iter().flatten().filter(|o| *o > m).count();
                        let lower = means.iter().flatten().filter(|o| *o < m).count();
                        (Some(higher + 1), lower, higher)
                    }
                    None => (None, 0, 0),
                };
                CompareRow {
                    method: *method,
                    summary,
                    rank,
                    wins,
                    losses,
                }
            })
            .collect();
        let mut seen = Vec::new();
        for (m, r) in reports {
            if !seen.contains(&m) {
                seen.push(m);
                all.push(r);
            }
        }
        tables.push(ProtocolTable {
            protocol: protocol.clone(),
            rows,
        });
    }
    Ok(CompareReport {
        tables,
        raw: EvalReport::merge(all),
    })
}
