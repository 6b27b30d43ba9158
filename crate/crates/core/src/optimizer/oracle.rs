use super::ccp::{ccp_solve, CcpOptions};
use super::{objective, PrecoderSolution, ProblemSpec, Scaled};
use crate::error::{Error, Result};

/// Grid points per user axis.
pub const GRID_POINTS: usize = 400;
const ZOOM_POINTS: usize = 41;
const ZOOM_ROUNDS: usize = 30;

/// Reference optimum. Two users or fewer: exhaustive grid over the
/// feasible box followed by repeated zooming around the best point. More
/// users: CCP with at least fifty random starts.
pub fn oracle_solve(spec: &ProblemSpec, options: &CcpOptions) -> Result<PrecoderSolution> {
    spec.validate()?;
    if spec.users() > 2 {
        return ccp_solve(spec, &options.reference());
    }
    let scaled = Scaled::new(spec)?;
    let k = scaled.users();
    let lo: Vec<f64> = vec![scaled.u_min; k];
    let hi: Vec<f64> = (0..k).map(|j| scaled.upper_bound(j)).collect();
    if !scaled.feasible(&lo) || hi.iter().any(|&h| !(h >= scaled.u_min)) {
        return Err(Error::Infeasible("the rate floor leaves no feasible point".into()));
    }

    let mut best = (objective(&lo), lo.clone());
    let (mut a, mut b) = (lo.clone(), hi.clone());
    let mut points = GRID_POINTS;
    for _ in 0..=ZOOM_ROUNDS {
        let step: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (y - x) / (points - 1) as f64).collect();
        let axis = |j: usize, i: usize| if i + 1 == points { b[j] } else { a[j] + step[j] * i as f64 };
        let mut idx = vec![0usize; k];
        loop {
            let u: Vec<f64> = (0..k).map(|j| axis(j, idx[j])).collect();
            let f = objective(&u);
            if f > best.0 && scaled.feasible(&u) {
                best = (f, u);
            }
            let mut j = 0;
            while j < k {
                idx[j] += 1;
                if idx[j] < points {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == k {
                break;
            }
        }
        if step.iter().all(|&s| s <= 1e-15 * best.1.iter().fold(1.0, |m: f64, v| m.max(*v))) {
            break;
        }
        for j in 0..k {
            a[j] = (best.1[j] - step[j]).max(lo[j]);
            b[j] = (best.1[j] + step[j]).min(hi[j]);
        }
        points = ZOOM_POINTS;
    }
    let trace = vec![best.0];
    Ok(scaled.into_solution(&best.1, trace, spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::zf_pseudoinverse;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(rng: &mut ChaCha8Rng, k: usize) -> ProblemSpec {
        ProblemSpec {
            h: DMatrix::from_fn(k, 16, |_, _| rng.gen_range(0.0..1e-5)),
            delta: 0.5,
            noise_term: 2e-14,
            r_th: 0.0,
        }
    }

    #[test]
    fn single_user_hits_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let s = spec(&mut rng, 1);
        let sol = oracle_solve(&s, &CcpOptions::default()).unwrap();
        let g_star = s.delta / zf_pseudoinverse(&s.h).unwrap().abs().max();
        assert!((sol.gains[0] - g_star).abs() <= 1e-6 * g_star);
    }

    #[test]
    fn beats_supplied_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..20 {
            let s = spec(&mut rng, 2);
            let sol = oracle_solve(&s, &CcpOptions::default()).unwrap();
            let scaled = Scaled::new(&s).unwrap();
            for _ in 0..200 {
                let u = [rng.gen_range(0.0..scaled.upper_bound(0)), rng.gen_range(0.0..scaled.upper_bound(1))];
                if scaled.feasible(&u) {
                    assert!(sol.objective >= objective(&u) - 1e-12);
                }
            }
        }
    }

    #[test]
    fn halving_headroom_lowers_the_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let s = spec(&mut rng, 2);
            let full = oracle_solve(&s, &CcpOptions::default()).unwrap();
            let half = oracle_solve(&ProblemSpec { delta: s.delta / 2.0, ..s.clone() }, &CcpOptions::default()).unwrap();
            assert!(half.objective < full.objective);
        }
    }

    #[test]
    fn stronger_channels_never_hurt() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..10 {
            let s = spec(&mut rng, 2);
            let base = oracle_solve(&s, &CcpOptions::default()).unwrap();
            let scaled = oracle_solve(&ProblemSpec { h: &s.h * 2.0, ..s.clone() }, &CcpOptions::default()).unwrap();
            assert!(scaled.objective >= base.objective);
        }
    }

    #[test]
    fn empty_feasible_set_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let s = ProblemSpec { r_th: 40.0, ..spec(&mut rng, 2) };
        assert!(matches!(oracle_solve(&s, &CcpOptions::default()), Err(Error::Infeasible(_))));
    }
}
