use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use super::{run_slot, Case, RunContext, TrialRecord};
use crate::error::{Error, Result};
use crate::optimizer::SolverKind;
use crate::util::{ci95_half_width, mean};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    SumrateVsK,
    SumrateVsRth,
    Timing,
}

impl Experiment {
    pub const ALL: [Experiment; 3] = [Experiment::SumrateVsK, Experiment::SumrateVsRth, Experiment::Timing];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SumrateVsK => "sumrate_vs_k",
            Experiment::SumrateVsRth => "sumrate_vs_rth",
            Experiment::Timing => "timing",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}` (expected sumrate_vs_k, sumrate_vs_rth or timing)")))
    }
}

/// A CSV table: header names carry units.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentOutput {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// Per-slot rows behind the summary.
    pub trials: Vec<Vec<String>>,
}

pub const TRIAL_HEADER: [&str; 11] = [
    "k",
    "r_th_nats",
    "solver",
    "slot",
    "slot_seed",
    "case",
    "sum_rate_nats",
    "design_sum_rate_nats",
    "admitted",
    "position_error_m",
    "solve_time_s",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CaseSummary {
    pub case: Case,
    pub samples: usize,
    pub mean_sum_rate: f64,
    pub ci95_sum_rate: f64,
    pub mean_admitted: f64,
    pub mean_position_error: f64,
    pub mean_solve_time: f64,
    pub ci95_solve_time: f64,
}

pub fn summarize(records: &[TrialRecord]) -> Vec<CaseSummary> {
    Case::ALL
        .iter()
        .map(|&case| {
            let pick = |f: fn(&super::CaseOutcome) -> f64| -> Vec<f64> { records.iter().map(|r| f(r.case(case))).collect() };
            let rates = pick(|c| c.sum_rate);
            let times = pick(|c| c.solve_time);
            CaseSummary {
                case,
                samples: records.len(),
                mean_sum_rate: mean(&rates),
                ci95_sum_rate: ci95_half_width(&rates),
                mean_admitted: mean(&pick(|c| c.admitted as f64)),
                mean_position_error: mean(&pick(|c| c.position_error)),
                mean_solve_time: mean(&times),
                ci95_solve_time: ci95_half_width(&times),
            }
        })
        .collect()
}

/// `n_slots` independent slots. Results come back in slot order whether
/// or not they ran in parallel.
pub fn run_trials(ctx: &RunContext, users: usize, n_slots: usize, seed: u64, parallel: bool) -> Result<Vec<TrialRecord>> {
    if parallel {
        (0..n_slots).into_par_iter().map(|i| run_slot(i, seed, users, ctx)).collect()
    } else {
        (0..n_slots).map(|i| run_slot(i, seed, users, ctx)).collect()
    }
}

fn trial_rows(out: &mut Vec<Vec<String>>, k: usize, r_th: f64, solver: SolverKind, records: &[TrialRecord], with_time: bool) {
    for r in records {
        for c in &r.cases {
            out.push(vec![
                k.to_string(),
                r_th.to_string(),
                solver.name().into(),
                r.slot.to_string(),
                r.seed.to_string(),
                c.case.name().into(),
                c.sum_rate.to_string(),
                c.design_sum_rate.to_string(),
                c.admitted.to_string(),
                c.position_error.to_string(),
                if with_time { c.solve_time.to_string() } else { "-".into() },
            ]);
        }
    }
}

fn rate_rows(out: &mut Vec<Vec<String>>, k: usize, r_th: f64, solver: SolverKind, records: &[TrialRecord]) {
    for s in summarize(records) {
        out.push(vec![
            k.to_string(),
            r_th.to_string(),
            solver.name().into(),
            s.case.name().into(),
            s.samples.to_string(),
            s.mean_sum_rate.to_string(),
            s.ci95_sum_rate.to_string(),
            s.mean_admitted.to_string(),
            s.mean_position_error.to_string(),
        ]);
    }
}

const RATE_HEADER: [&str; 9] = [
    "k",
    "r_th_nats",
    "solver",
    "case",
    "slots",
    "mean_sum_rate_nats",
    "ci95_sum_rate_nats",
    "mean_admitted",
    "mean_position_error_m",
];

/// Sum-rate against the number of users for the fast and the reference
/// solver, at the scenario's `L` and `R_th`.
pub fn experiment_sumrate_vs_k(ctx: &RunContext, k_sweep: &[usize], n_slots: usize, seed: u64, parallel: bool) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput {
        header: RATE_HEADER.to_vec(),
        ..Default::default()
    };
    for &k in k_sweep {
        for solver in [SolverKind::Ccp, SolverKind::MultiStart] {
            let c = RunContext { solver, ..*ctx };
            let records = run_trials(&c, k, n_slots, seed, parallel)?;
            rate_rows(&mut out.rows, k, ctx.r_th, solver, &records);
            trial_rows(&mut out.trials, k, ctx.r_th, solver, &records, false);
        }
    }
    Ok(out)
}

/// Sum-rate and admitted users against the rate floor, same slots for
/// every floor.
pub fn experiment_sumrate_vs_rth(ctx: &RunContext, users: usize, r_sweep: &[f64], n_slots: usize, seed: u64, parallel: bool) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput {
        header: RATE_HEADER.to_vec(),
        ..Default::default()
    };
    for &r_th in r_sweep {
        let c = RunContext { r_th, ..*ctx };
        let records = run_trials(&c, users, n_slots, seed, parallel)?;
        rate_rows(&mut out.rows, users, r_th, ctx.solver, &records);
        trial_rows(&mut out.trials, users, r_th, ctx.solver, &records, false);
    }
    Ok(out)
}

/// Mean solve time per case and solver against K. Always serial so one
/// solve never competes with another for a core.
pub fn experiment_timing(ctx: &RunContext, k_sweep: &[usize], n_slots: usize, seed: u64) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput {
        header: vec!["k", "solver", "case", "samples", "mean_solve_time_s", "ci95_solve_time_s"],
        ..Default::default()
    };
    for &k in k_sweep {
        for solver in [SolverKind::Ccp, SolverKind::MultiStart] {
            let c = RunContext { solver, ..*ctx };
            let records = run_trials(&c, k, n_slots, seed, false)?;
            for s in summarize(&records) {
                out.rows.push(vec![
                    k.to_string(),
                    solver.name().into(),
                    s.case.name().into(),
                    s.samples.to_string(),
                    s.mean_solve_time.to_string(),
                    s.ci95_solve_time.to_string(),
                ]);
            }
            trial_rows(&mut out.trials, k, ctx.r_th, solver, &records, true);
        }
    }
    Ok(out)
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.join(","));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetMeta, YawEncoding};
    use crate::lstm::LstmModel;
    use crate::optimizer::CcpOptions;
    use crate::scene::Scene;

    #[test]
    fn parallel_and_serial_runs_agree() {
        let scene = Scene::default();
        let model = LstmModel::init(DatasetMeta::identity(16, 8, 4, YawEncoding::Sincos), 4, 2).unwrap();
        let opts = CcpOptions::default();
        let ctx = RunContext {
            scene: &scene,
            model: &model,
            horizon: 2,
            r_th: 0.5,
            delta: 0.5,
            solver: SolverKind::Ccp,
            options: &opts,
        };
        let a = run_trials(&ctx, 2, 6, 1, true).unwrap();
        let b = run_trials(&ctx, 2, 6, 1, false).unwrap();
        let rates = |r: &[TrialRecord]| -> Vec<f64> { r.iter().flat_map(|t| t.cases.iter().map(|c| c.sum_rate)).collect() };
        assert_eq!(rates(&a), rates(&b));
        let s = summarize(&a);
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|c| c.samples == 6 && c.mean_sum_rate.is_finite()));
    }

    #[test]
    fn experiment_names_parse() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("fig4".parse::<Experiment>().is_err());
    }
}
