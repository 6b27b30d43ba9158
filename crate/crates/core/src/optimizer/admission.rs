use super::{ProblemSpec, Scaled};
use crate::error::{Error, Result};

/// Greedy admission. While the point where every user sits exactly at the
/// rate floor breaks some AP limit, the user loading the APs the most is
/// dropped and the pseudo-inverse recomputed. A rank-deficient channel
/// drops its weakest row first. Returns the admitted users in increasing
/// order, possibly none.
pub fn admission_control(spec: &ProblemSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let mut users: Vec<usize> = (0..spec.users()).collect();
    while !users.is_empty() {
        let sub = spec.restrict(&users);
        let drop = match Scaled::new(&sub) {
            Ok(scaled) => {
                let corner = vec![scaled.u_min; users.len()];
                if scaled.load(&corner) <= 1.0 {
                    return Ok(users);
                }
                argmax((0..users.len()).map(|j| scaled.b.column(j).sum()))
            }
            Err(Error::RankDeficient { .. }) => argmax((0..users.len()).map(|j| -sub.h.row(j).norm())),
            Err(e) => return Err(e),
        };
        users.remove(drop);
    }
    Ok(users)
}

/// First index of the largest value.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{min_gain, zf_pseudoinverse};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(seed: u64, k: usize, r_th: f64) -> ProblemSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ProblemSpec {
            h: DMatrix::from_fn(k, 16, |_, _| rng.gen_range(0.0..1e-5)),
            delta: 0.5,
            noise_term: 2e-14,
            r_th,
        }
    }

    #[test]
    fn zero_floor_admits_everyone() {
        assert_eq!(admission_control(&spec(1, 10, 0.0)).unwrap(), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn unreachable_floor_admits_no_one() {
        let s = spec(2, 4, 0.0);
        // floor above what any single user could get alone
        let best_single = (0..4)
            .map(|k| s.delta / zf_pseudoinverse(&s.h.select_rows(&[k])).unwrap().abs().max())
            .fold(0.0, f64::max);
        let mut r = 0.0;
        while min_gain(r, s.noise_term) <= best_single {
            r += 0.5;
        }
        assert!(admission_control(&ProblemSpec { r_th: r, ..s }).unwrap().is_empty());
    }

    #[test]
    fn admitted_count_shrinks_with_floor() {
        for seed in 0..5 {
            let mut last = usize::MAX;
            for i in 0..40 {
                let n = admission_control(&spec(seed, 8, 0.25 * i as f64)).unwrap().len();
                assert!(n <= last);
                last = n;
            }
            assert_eq!(last, 0);
        }
    }

    #[test]
    fn duplicate_users_are_dropped() {
        let mut s = spec(3, 3, 0.0);
        let row = s.h.row(0).clone_owned();
        s.h.set_row(2, &(row * 0.5));
        let admitted = admission_control(&s).unwrap();
        assert_eq!(admitted, vec![0, 1]);
    }
}
