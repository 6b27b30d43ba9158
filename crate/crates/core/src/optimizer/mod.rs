//! Zero-forcing sum-rate maximization under per-AP amplitude limits and a
//! per-user rate floor.
//!
//! With `H^+` the right pseudo-inverse of the admitted users' channel rows
//! and `A = |H^+|`, the precoder is `W = H^+ diag(g)` and the problem reads
//!
//! ```text
//! maximize   sum_k 1/2 ln(1 + 2 g_k^2 / (pi e N0B))
//! subject to sum_k A[m,k] g_k <= delta   for every AP m
//!            g_k >= g_min(R_th)
//! ```
//!
//! Solvers work in the SNR variable `u_k = 2 g_k^2 / (pi e N0B)`, which
//! makes the objective concave and turns the amplitude limits into
//! constraints on `sqrt(u_k)`.

mod admission;
mod ccp;
mod oracle;
mod problem_io;
mod zf;

pub use admission::admission_control;
pub use ccp::{ccp_solve, CcpOptions};
pub use oracle::oracle_solve;
pub use problem_io::{read_problem, write_solution};
pub use zf::zf_pseudoinverse;

use std::f64::consts::{E, PI};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K x M` matrix whose row `k` holds user `k`'s gains to every AP.
pub type ChannelMatrix = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub h: ChannelMatrix,
    /// Per-AP amplitude headroom, A.
    pub delta: f64,
    /// Receiver noise power `N0 * B`, A^2.
    pub noise_term: f64,
    /// Rate floor per admitted user, nats/s/Hz.
    pub r_th: f64,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.h.nrows() > self.h.ncols() {
            return Err(Error::invalid(format!(
                "zero forcing needs K <= M, got K = {} and M = {}",
                self.h.nrows(),
                self.h.ncols()
            )));
        }
        if self.h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("channel matrix"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid("delta must be positive"));
        }
        if !(self.noise_term > 0.0 && self.noise_term.is_finite()) {
            return Err(Error::invalid("noise term must be positive"));
        }
        if !(self.r_th >= 0.0 && self.r_th.is_finite()) {
            return Err(Error::invalid("rate threshold must be non-negative"));
        }
        Ok(())
    }

    pub fn users(&self) -> usize {
        self.h.nrows()
    }

    /// The same problem restricted to a subset of users.
    pub fn restrict(&self, users: &[usize]) -> ProblemSpec {
        ProblemSpec {
            h: self.h.select_rows(users),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSolution {
    /// Indices (into the problem's user rows) of the served users.
    pub admitted: Vec<usize>,
    /// Amplitude gain per admitted user, A.
    pub gains: Vec<f64>,
    /// `M x K_admitted` precoder `H^+ diag(g)`.
    pub precoder: DMatrix<f64>,
    /// Design rate per admitted user, nats/s/Hz.
    pub rates: Vec<f64>,
    pub objective: f64,
    /// Objective after every CCP iteration of the winning start.
    pub trace: Vec<f64>,
    /// Wall-clock solve time, s.
    pub solve_time: f64,
}

impl PrecoderSolution {
    pub(crate) fn empty(m: usize) -> Self {
        PrecoderSolution {
            admitted: Vec::new(),
            gains: Vec::new(),
            precoder: DMatrix::zeros(m, 0),
            rates: Vec::new(),
            objective: 0.0,
            trace: vec![0.0],
            solve_time: 0.0,
        }
    }

    /// Largest per-AP amplitude sum `sum_k |W[m,k]|`.
    pub fn peak_amplitude(&self) -> f64 {
        self.precoder
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// `pi * e * N0B / 2`, the effective noise of the IM/DD rate bound.
fn effective_noise(noise_term: f64) -> f64 {
    PI * E * noise_term / 2.0
}

/// Rate of a ZF stream with amplitude gain `g`:
/// `1/2 ln(1 + 2 g^2 / (pi e N0B))` in nats/s/Hz.
pub fn rate_of_gain(g: f64, noise_term: f64) -> f64 {
    0.5 * (g * g / effective_noise(noise_term)).ln_1p()
}

/// Smallest gain that reaches `r_th`.
pub fn min_gain(r_th: f64, noise_term: f64) -> f64 {
    ((2.0 * r_th).exp_m1() * effective_noise(noise_term)).sqrt()
}

/// Rates obtained when precoder `w` (`M x K`) is applied to the true
/// channel rows `true_h` (`K x M`), treating leakage as noise.
pub fn realized_rates(w: &DMatrix<f64>, true_h: &ChannelMatrix, noise_term: f64) -> Result<Vec<f64>> {
    if true_h.ncols() != w.nrows() || true_h.nrows() != w.ncols() {
        return Err(Error::invalid(format!(
            "precoder is {}x{} but the channel is {}x{}",
            w.nrows(),
            w.ncols(),
            true_h.nrows(),
            true_h.ncols()
        )));
    }
    let e = true_h * w;
    let noise = effective_noise(noise_term);
    Ok((0..e.nrows())
        .map(|k| {
            let signal = e[(k, k)] * e[(k, k)];
            let leak: f64 = (0..e.ncols()).filter(|&j| j != k).map(|j| e[(k, j)] * e[(k, j)]).sum();
            0.5 * (signal / (leak + noise)).ln_1p()
        })
        .collect())
}

/// Which algorithm solves the admitted problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Convex-concave procedure with the configured number of starts.
    Ccp,
    /// Reference: CCP with many random starts.
    MultiStart,
    /// Exhaustive grid (two users or fewer), else multi-start.
    Grid,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Ccp => "ccp",
            SolverKind::MultiStart => "multistart",
            SolverKind::Grid => "grid",
        }
    }
}

/// Runs admission control, solves the admitted problem and reports the
/// solution in terms of the original user indices. The solve time covers
/// both stages.
pub fn solve_with_admission(spec: &ProblemSpec, kind: SolverKind, options: &CcpOptions) -> Result<PrecoderSolution> {
    let start = Instant::now();
    spec.validate()?;
    let admitted = admission_control(spec)?;
    let mut sol = if admitted.is_empty() {
        PrecoderSolution::empty(spec.h.ncols())
    } else {
        let sub = spec.restrict(&admitted);
        match kind {
            SolverKind::Ccp => ccp_solve(&sub, options)?,
            SolverKind::MultiStart => ccp_solve(&sub, &options.reference())?,
            SolverKind::Grid => oracle_solve(&sub, options)?,
        }
    };
    sol.admitted = admitted;
    sol.solve_time = start.elapsed().as_secs_f64();
    Ok(sol)
}

/// Scaled problem data shared by the solvers.
#[derive(Debug, Clone)]
pub(crate) struct Scaled {
    /// `M x K` pseudo-inverse of the channel.
    pub pinv: DMatrix<f64>,
    /// `M x K`: `|H^+| / (delta * sqrt(c))`, so the limits read
    /// `sum_k b[m,k] sqrt(u_k) <= 1`.
    pub b: DMatrix<f64>,
    /// Lower bound on `u` from the rate floor.
    pub u_min: f64,
    /// `c = 1 / effective_noise`; `u = c g^2`.
    pub c: f64,
}

impl Scaled {
    pub fn new(spec: &ProblemSpec) -> Result<Self> {
        let pinv = zf_pseudoinverse(&spec.h)?;
        let c = 1.0 / effective_noise(spec.noise_term);
        let b = pinv.map(|v| v.abs() / (spec.delta * c.sqrt()));
        Ok(Scaled {
            pinv,
            b,
            u_min: (2.0 * spec.r_th).exp_m1(),
            c,
        })
    }

    pub fn users(&self) -> usize {
        self.b.ncols()
    }

    /// Largest normalized per-AP load `max_m sum_k b[m,k] sqrt(u_k)`.
    pub fn load(&self, u: &[f64]) -> f64 {
        let s: Vec<f64> = u.iter().map(|v| v.max(0.0).sqrt()).collect();
        self.b
            .row_iter()
            .map(|r| r.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn feasible(&self, u: &[f64]) -> bool {
        self.load(u) <= 1.0 && u.iter().all(|&v| v >= self.u_min)
    }

    /// Largest `u_k` with every other user at the floor.
    pub fn upper_bound(&self, k: usize) -> f64 {
        let base = self.u_min.sqrt();
        let mut best = f64::INFINITY;
        for r in self.b.row_iter() {
            if r[k] <= 0.0 {
                continue;
            }
            let others: f64 = r.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, v)| v * base).sum();
            best = best.min(((1.0 - others).max(0.0) / r[k]).powi(2));
        }
        best
    }

    pub fn into_solution(self, u: &[f64], trace: Vec<f64>, spec: &ProblemSpec) -> PrecoderSolution {
        let gains: Vec<f64> = u.iter().map(|v| (v.max(0.0) / self.c).sqrt()).collect();
        let rates: Vec<f64> = gains.iter().map(|&g| rate_of_gain(g, spec.noise_term)).collect();
        let precoder = &self.pinv * DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&gains));
        PrecoderSolution {
            admitted: (0..gains.len()).collect(),
            objective: rates.iter().sum(),
            gains,
            precoder,
            rates,
            trace,
            solve_time: 0.0,
        }
    }
}

pub(crate) fn objective(u: &[f64]) -> f64 {
    u.iter().map(|v| 0.5 * v.ln_1p()).sum()
}
