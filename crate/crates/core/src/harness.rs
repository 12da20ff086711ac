//! Exhaustive conformance sweeps over grids of reference pipelines.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::entail::{Engine, Run, Scheduler, DEFAULT_MAX_BRANCHES};
use crate::events::Payload;
use crate::protocol::{check, matches_generator, CheckOptions, InterfaceSpec, Violation};
use crate::reference::{Pipeline, SinkParams, SourceParams, TransformerParams};

/// Largest `max_n` accepted by default; interleavings grow quickly past it.
pub const DEFAULT_MAX_N_CAP: u32 = 5;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SweepError {
    #[error("max-n = {max_n} exceeds the cap of {cap}")]
    Cap { max_n: u32, cap: u32 },
}

/// Which pipelines a sweep covers. Values range over `0..=max_n` for the
/// source, `0..=max_r` for the sink and each take stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SweepConfig {
    pub max_n: u32,
    pub max_r: u32,
    /// Include pipelines with one take stage.
    pub with_take: bool,
    /// Include direct source-to-sink pipelines.
    pub direct: bool,
    pub faulty_take: bool,
    pub max_branches: usize,
}

impl SweepConfig {
    pub fn new(max_n: u32) -> SweepConfig {
        SweepConfig {
            max_n,
            max_r: max_n,
            with_take: true,
            direct: true,
            faulty_take: false,
            max_branches: DEFAULT_MAX_BRANCHES,
        }
    }

    pub fn validate(&self, cap: u32) -> Result<(), SweepError> {
        if self.max_n > cap || self.max_r > cap {
            return Err(SweepError::Cap {
                max_n: self.max_n.max(self.max_r),
                cap,
            });
        }
        Ok(())
    }

    pub fn faulty(mut self, faulty: bool) -> SweepConfig {
        self.faulty_take = faulty;
        self
    }

    /// Every pipeline in the grid, in a fixed order.
    pub fn pipelines(&self) -> Vec<Pipeline> {
        let mut out = Vec::new();
        let bools = [false, true];
        for n in 0..=self.max_n {
            for r in 0..=self.max_r {
                for source_err in bools {
                    for sink_err in bools {
                        for w in bools {
                            let base = Pipeline::new(
                                SourceParams { n, err: source_err },
                                SinkParams { r, err: sink_err, w },
                            )
                            .faulty(self.faulty_take);
                            if self.direct {
                                out.push(base.clone());
                            }
                            if self.with_take {
                                for rt in 0..=self.max_r {
                                    for take_err in bools {
                                        out.push(base.clone().transformer(TransformerParams {
                                            r: rt,
                                            err: take_err,
                                        }));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Finding {
    /// Index of the quiescent history within the pipeline's runs.
    pub history: usize,
    pub interface: String,
    pub violation: Violation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PipelineOutcome {
    pub pipeline: Pipeline,
    pub histories: usize,
    pub violations: Vec<Finding>,
    /// (history, interface) pairs whose projection is not produced by the
    /// generator for the shape the trace exhibits.
    pub shape_mismatches: Vec<(usize, String)>,
    /// Histories with two or more terminate requests at the upstream-most
    /// interface.
    pub double_terminates: Vec<usize>,
    pub replay_failures: Vec<usize>,
    pub error: Option<String>,
}

impl PipelineOutcome {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
            && self.shape_mismatches.is_empty()
            && self.replay_failures.is_empty()
            && self.error.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SweepReport {
    pub pipelines: usize,
    /// Milliseconds spent; the only field that varies between identical runs.
    pub wall_time_ms: u128,
    pub histories: usize,
    pub failing: usize,
    pub outcomes: Vec<PipelineOutcome>,
}

impl SweepReport {
    pub fn ok(&self) -> bool {
        self.failing == 0
    }
}

fn terminate_requests(run: &Run, iface: &InterfaceSpec) -> usize {
    run.history
        .iter()
        .filter(|e| {
            e.port.as_ref() == Some(&iface.input)
                && matches!(&e.payload, Payload::Request { kind, .. } if kind.is_terminate())
        })
        .count()
}

/// Runs every schedule of `p` and checks all interfaces of every history.
pub fn explore_pipeline(p: &Pipeline, max_branches: usize) -> PipelineOutcome {
    let mut outcome = PipelineOutcome {
        pipeline: p.clone(),
        histories: 0,
        violations: Vec::new(),
        shape_mismatches: Vec::new(),
        double_terminates: Vec::new(),
        replay_failures: Vec::new(),
        error: None,
    };
    let mut cfg = p.engine_config(Scheduler::Exhaustive);
    cfg.max_branches = max_branches;
    let runs = match Engine::new(cfg).and_then(|e| {
        let runs = e.explore()?;
        let replayed = runs
            .iter()
            .map(|r| e.replay(r))
            .collect::<Result<Vec<bool>, _>>()?;
        Ok((runs, replayed))
    }) {
        Ok(r) => r,
        Err(e) => {
            outcome.error = Some(e.to_string());
            return outcome;
        }
    };
    let (runs, replayed) = runs;
    outcome.histories = runs.len();
    let ifaces = p.interfaces();
    for (idx, run) in runs.iter().enumerate() {
        if !replayed[idx] {
            outcome.replay_failures.push(idx);
        }
        if terminate_requests(run, &ifaces[0]) >= 2 {
            outcome.double_terminates.push(idx);
        }
        for iface in &ifaces {
            match check(&run.history, iface, CheckOptions::finite()) {
                Ok(report) => outcome.violations.extend(report.violations.into_iter().map(|v| Finding {
                    history: idx,
                    interface: iface.to_string(),
                    violation: v,
                })),
                Err(e) => {
                    outcome.error = Some(format!("history {idx}: {e}"));
                    return outcome;
                }
            }
            if !matches_generator(&run.history, iface).unwrap_or(false) {
                outcome.shape_mismatches.push((idx, iface.to_string()));
            }
        }
    }
    outcome
}

/// Explores the whole grid in parallel; outcomes keep the grid order.
pub fn conform(cfg: &SweepConfig) -> SweepReport {
    let start = Instant::now();
    let outcomes: Vec<PipelineOutcome> = cfg
        .pipelines()
        .par_iter()
        .map(|p| explore_pipeline(p, cfg.max_branches))
        .collect();
    SweepReport {
        pipelines: outcomes.len(),
        wall_time_ms: start.elapsed().as_millis(),
        histories: outcomes.iter().map(|o| o.histories).sum(),
        failing: outcomes.iter().filter(|o| !o.ok()).count(),
        outcomes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_conforms() {
        let report = conform(&SweepConfig::new(2));
        let bad: Vec<_> = report.outcomes.iter().filter(|o| !o.ok()).take(3).collect();
        assert!(report.ok(), "{bad:#?}");
        assert_eq!(report.pipelines, 3 * 3 * 8 * (1 + 6));
    }

    #[test]
    fn empty_grid() {
        let mut cfg = SweepConfig::new(3);
        cfg.direct = false;
        cfg.with_take = false;
        let report = conform(&cfg);
        assert_eq!(report.pipelines, 0);
        assert!(report.ok());
        assert!(SweepConfig::new(6).validate(DEFAULT_MAX_N_CAP).is_err());
        assert!(SweepConfig::new(5).validate(DEFAULT_MAX_N_CAP).is_ok());
    }

    #[test]
    fn faulty_grid_is_caught() {
        let report = conform(&SweepConfig::new(2).faulty(true));
        let caught: Vec<_> = report
            .outcomes
            .iter()
            .filter(|o| !o.double_terminates.is_empty())
            .collect();
        assert!(!caught.is_empty());
        for o in caught {
            assert!(o.violations.iter().any(|f| f.violation.invariant == 1));
        }
    }
}
