use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{objective, PrecoderSolution, ProblemSpec, Scaled};
use crate::error::{Error, Result};
use crate::util::derive_seed;

/// Starts used by the multi-start reference solver.
pub const REFERENCE_STARTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CcpOptions {
    pub max_iter: usize,
    /// Stop once the relative objective improvement drops below this.
    pub tol: f64,
    pub n_starts: usize,
    pub seed: u64,
    /// Duality gap, in nats, at which a convex subproblem counts as solved.
    pub subproblem_tol: f64,
    /// Newton steps allowed per subproblem.
    pub newton_budget: usize,
}

impl Default for CcpOptions {
    fn default() -> Self {
        CcpOptions {
            max_iter: 100,
            tol: 1e-7,
            n_starts: 5,
            seed: 0,
            subproblem_tol: 1e-8,
            newton_budget: 2000,
        }
    }
}

impl CcpOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || self.n_starts == 0 || self.newton_budget == 0 {
            return Err(Error::invalid("max_iter, n_starts and newton_budget must be positive"));
        }
        if !(self.tol > 0.0 && self.subproblem_tol > 0.0) {
            return Err(Error::invalid("solver tolerances must be positive"));
        }
        Ok(())
    }

    /// The same options with at least [`REFERENCE_STARTS`] starts.
    pub fn reference(&self) -> CcpOptions {
        CcpOptions {
            n_starts: self.n_starts.max(REFERENCE_STARTS),
            ..self.clone()
        }
    }
}

/// Convex-concave procedure. Each round replaces `sqrt(u_k)` in the AP
/// limits by its tangent at the current point. The tangent lies above the
/// square root, so every round's solution is feasible for the true problem
/// and the objective never decreases. The best of `n_starts` random
/// feasible starts is returned.
pub fn ccp_solve(spec: &ProblemSpec, options: &CcpOptions) -> Result<PrecoderSolution> {
    spec.validate()?;
    options.validate()?;
    let scaled = Scaled::new(spec)?;
    let k = scaled.users();
    let lb = vec![scaled.u_min; k];
    let corner_load = scaled.load(&lb);
    if corner_load > 1.0 {
        return Err(Error::Infeasible(format!(
            "rate floor needs {corner_load:.6} of the amplitude headroom"
        )));
    }

    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for start in 0..options.n_starts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(options.seed, start as u64));
        let u0 = random_start(&scaled, &mut rng);
        let (u, trace) = ascend(&scaled, u0, options)?;
        let f = objective(&u);
        if best.as_ref().map_or(true, |b| f > b.0) {
            best = Some((f, u, trace));
        }
    }
    let (_, u, trace) = best.expect("at least one start");
    Ok(scaled.into_solution(&u, trace, spec))
}

/// Feasible point along a random direction from the QoS corner.
pub(crate) fn random_start(scaled: &Scaled, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let k = scaled.users();
    let dir: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let at = |s: f64| -> Vec<f64> { dir.iter().map(|d| scaled.u_min + s * d).collect() };
    let mut hi = 1.0;
    let mut doublings = 0;
    while scaled.load(&at(hi)) <= 1.0 && doublings < 2000 {
        hi *= 2.0;
        doublings += 1;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if scaled.load(&at(mid)) <= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo * rng.gen_range(0.3..0.95))
}

/// CCP rounds from a feasible start. Returns the last accepted point and
/// the objective after every accepted round.
pub(crate) fn ascend(scaled: &Scaled, mut u: Vec<f64>, options: &CcpOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut f = objective(&u);
    let mut trace = vec![f];
    for _ in 0..options.max_iter {
        if u.iter().all(|&v| v <= scaled.u_min) && scaled.load(&u) >= 1.0 {
            break;
        }
        let next = match solve_subproblem(scaled, &u, options) {
            Ok(v) => v,
            Err(Error::NonConvergence { iterations, .. }) => {
                return Err(Error::NonConvergence { iterations, trace });
            }
            Err(e) => return Err(e),
        };
        let f_next = objective(&next);
        if !(f_next > f) {
            break;
        }
        let gain = f_next - f;
        u = next;
        f = f_next;
        trace.push(f);
        if gain <= options.tol * f.abs().max(1e-12) {
            break;
        }
    }
    Ok((u, trace))
}

/// Maximizes `sum 1/2 ln(1+u)` over the tangent polytope at `u0` with a
/// log-barrier Newton method. The rate floor is relaxed by a hair so the
/// corner itself has an interior, then the result is clamped back.
fn solve_subproblem(scaled: &Scaled, u0: &[f64], options: &CcpOptions) -> Result<Vec<f64>> {
    let k = scaled.users();
    let lb = scaled.u_min;
    let eta = 1e-12 * lb.max(1.0);
    // tangent rows: sum_k a[m,k] u_k <= r_m
    let sq: Vec<f64> = u0.iter().map(|v| v.max(f64::MIN_POSITIVE).sqrt()).collect();
    let rows: Vec<(Vec<f64>, f64)> = scaled
        .b
        .row_iter()
        .filter(|r| r.iter().any(|&v| v > 0.0))
        .map(|r| {
            let a: Vec<f64> = (0..k).map(|j| r[j] / (2.0 * sq[j])).collect();
            let used: f64 = (0..k).map(|j| r[j] * sq[j] / 2.0).sum();
            (a, 1.0 - used)
        })
        .collect();
    let n_con = (rows.len() + k) as f64;

    let slacks = |u: &[f64]| -> Option<(Vec<f64>, Vec<f64>)> {
        let s: Vec<f64> = rows.iter().map(|(a, r)| r - a.iter().zip(u).map(|(x, y)| x * y).sum::<f64>()).collect();
        let l: Vec<f64> = u.iter().map(|v| v - lb + eta).collect();
        (s.iter().chain(&l).all(|&v| v > 0.0)).then_some((s, l))
    };
    let phi = |u: &[f64], tau: f64| -> f64 {
        match slacks(u) {
            Some((s, l)) => -tau * objective(u) - s.iter().chain(&l).map(|v| v.ln()).sum::<f64>(),
            None => f64::INFINITY,
        }
    };

    let mut u: Vec<f64> = u0.iter().map(|v| 0.5 * (v + lb) - 0.5 * eta).collect();
    if slacks(&u).is_none() {
        // the start sits on a tangent face; pull it towards the corner
        u = u0.iter().map(|v| lb + 0.5 * (v - lb) - 0.5 * eta).collect();
        let mut tries = 0;
        while slacks(&u).is_none() {
            u.iter_mut().for_each(|v| *v = lb + 0.5 * (*v - lb) - 0.5 * eta);
            tries += 1;
            if tries > 200 {
                return Err(Error::Infeasible("tangent subproblem has no interior".into()));
            }
        }
    }

    let mut tau = n_con;
    let mut steps = 0usize;
    loop {
        // centering
        loop {
            let (s, l) = slacks(&u).expect("iterate stays interior");
            let mut g = DVector::zeros(k);
            let mut hess = DMatrix::zeros(k, k);
            for j in 0..k {
                g[j] = -tau / (2.0 * (1.0 + u[j])) - 1.0 / l[j];
                hess[(j, j)] = tau / (2.0 * (1.0 + u[j]).powi(2)) + 1.0 / (l[j] * l[j]);
            }
            for ((a, _), sm) in rows.iter().zip(&s) {
                for i in 0..k {
                    g[i] += a[i] / sm;
                    for j in 0..k {
                        hess[(i, j)] += a[i] * a[j] / (sm * sm);
                    }
                }
            }
            let dir = match hess.clone().cholesky() {
                Some(c) => c.solve(&(-&g)),
                None => match hess.lu().solve(&(-&g)) {
                    Some(d) => d,
                    None => break,
                },
            };
            let decrement = -g.dot(&dir);
            // a decrement this small is at the rounding floor of the barrier
            if !(decrement > 1e-7) {
                break;
            }
            steps += 1;
            if steps > options.newton_budget {
                return Err(Error::NonConvergence {
                    iterations: steps,
                    trace: Vec::new(),
                });
            }
            let f0 = phi(&u, tau);
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-20 {
                let cand: Vec<f64> = u.iter().zip(dir.iter()).map(|(x, d)| x + t * d).collect();
                if cand == u {
                    break;
                }
                if phi(&cand, tau) <= f0 - 0.25 * t * decrement {
                    u = cand;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if n_con / tau < options.subproblem_tol {
            break;
        }
        tau *= 10.0;
    }
    Ok(u.into_iter().map(|v| v.max(lb)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{min_gain, oracle_solve, rate_of_gain};

    pub(crate) fn random_spec(rng: &mut ChaCha8Rng, k: usize, m: usize) -> ProblemSpec {
        ProblemSpec {
            h: DMatrix::from_fn(k, m, |_, _| rng.gen_range(0.0..1e-5)),
            delta: 0.5,
            noise_term: 2e-14,
            r_th: 0.0,
        }
    }

    fn check_solution(spec: &ProblemSpec, sol: &PrecoderSolution) {
        assert!(sol.peak_amplitude() <= spec.delta + 1e-8, "peak {}", sol.peak_amplitude());
        let g_min = min_gain(spec.r_th, spec.noise_term);
        for (g, r) in sol.gains.iter().zip(&sol.rates) {
            assert!(*g >= g_min * (1.0 - 1e-12));
            assert!(*r >= spec.r_th - 1e-9);
        }
        let recomputed: f64 = sol.gains.iter().map(|&g| rate_of_gain(g, spec.noise_term)).sum();
        assert!((recomputed - sol.objective).abs() < 1e-9);
        for w in sol.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "trace {:?}", sol.trace);
        }
        let e = &spec.h * &sol.precoder;
        for i in 0..e.nrows() {
            for j in 0..e.ncols() {
                if i != j {
                    assert!(e[(i, j)].abs() < 1e-8 * e[(i, i)].abs().max(1e-30));
                }
            }
        }
    }

    #[test]
    fn single_user_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let spec = random_spec(&mut rng, 1, 16);
            let sol = ccp_solve(&spec, &CcpOptions::default()).unwrap();
            let pinv = super::super::zf_pseudoinverse(&spec.h).unwrap();
            let g_star = spec.delta / pinv.abs().max();
            assert!((sol.gains[0] - g_star).abs() <= 1e-6 * g_star, "{} vs {}", sol.gains[0], g_star);
            check_solution(&spec, &sol);
        }
    }

    #[test]
    fn traces_ascend_and_limits_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for k in [2, 4, 8, 12] {
            let mut spec = random_spec(&mut rng, k, 16);
            spec.r_th = 0.2;
            let sol = ccp_solve(&spec, &CcpOptions::default()).unwrap();
            check_solution(&spec, &sol);
        }
    }

    #[test]
    fn close_to_grid_oracle_on_two_users() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for i in 0..200 {
            let mut spec = random_spec(&mut rng, 2, 16);
            spec.r_th = if i % 2 == 0 { 0.0 } else { 0.5 };
            let ccp = ccp_solve(&spec, &CcpOptions::default()).unwrap();
            let oracle = oracle_solve(&spec, &CcpOptions::default()).unwrap();
            check_solution(&spec, &ccp);
            assert!(
                ccp.objective >= oracle.objective * (1.0 - 0.01),
                "instance {i}: ccp {} oracle {}",
                ccp.objective,
                oracle.objective
            );
        }
    }

    #[test]
    fn same_seed_same_answer() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let spec = random_spec(&mut rng, 5, 16);
        let a = ccp_solve(&spec, &CcpOptions::default()).unwrap();
        let b = ccp_solve(&spec, &CcpOptions::default()).unwrap();
        assert_eq!(a.gains, b.gains);
    }

    #[test]
    fn infeasible_floor_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut spec = random_spec(&mut rng, 3, 16);
        spec.r_th = 50.0;
        assert!(matches!(ccp_solve(&spec, &CcpOptions::default()), Err(Error::Infeasible(_))));
    }

    #[test]
    fn random_starts_are_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut spec = random_spec(&mut rng, 6, 16);
        spec.r_th = 0.3;
        let scaled = Scaled::new(&spec).unwrap();
        for _ in 0..50 {
            let u = random_start(&scaled, &mut rng);
            assert!(scaled.feasible(&u));
        }
    }
}
