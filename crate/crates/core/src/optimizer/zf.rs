use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Right pseudo-inverse `H^T (H H^T)^-1` of a full-row-rank `K x M`
/// channel, computed through the SVD. Returns an `M x K` matrix with
/// `H * H^+ = I`.
pub fn zf_pseudoinverse(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (k, m) = h.shape();
    if k == 0 || k > m {
        return Err(Error::invalid(format!("zero forcing needs 1 <= K <= M, got K = {k} and M = {m}")));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("channel matrix"));
    }
    let svd = h.clone().svd(true, true);
    let s = &svd.singular_values;
    let top = s.max();
    let rank = s.iter().filter(|&&v| v > RANK_TOLERANCE * top).count();
    if top <= 0.0 || rank < k {
        let ratio = if top > 0.0 { s.min() / top } else { 0.0 };
        return Err(Error::RankDeficient { rows: k, rank, ratio });
    }
    let u = svd.u.as_ref().expect("requested");
    let vt = svd.v_t.as_ref().expect("requested");
    let sinv = DMatrix::from_diagonal(&s.map(|v| 1.0 / v));
    Ok(vt.transpose() * sinv * u.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_block_inverts_to_identity_block() {
        let p = zf_pseudoinverse(&DMatrix::identity(3, 5)).unwrap();
        assert!((p - DMatrix::<f64>::identity(5, 3)).abs().max() < 1e-14);
    }

    #[test]
    fn random_channels_are_zero_forced() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 1..=8 {
            let h = DMatrix::from_fn(k, 16, |_, _| rng.gen_range(0.0..1.0));
            let p = zf_pseudoinverse(&h).unwrap();
            assert_eq!(p.shape(), (16, k));
            let e = &h * &p - DMatrix::<f64>::identity(k, k);
            assert!(e.abs().max() < 1e-8, "k={k} err={}", e.abs().max());
        }
    }

    #[test]
    fn duplicated_rows_are_rejected() {
        let h = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        assert!(matches!(zf_pseudoinverse(&h), Err(Error::RankDeficient { rows: 2, rank: 1, .. })));
        assert!(matches!(zf_pseudoinverse(&DMatrix::zeros(1, 4)), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn more_users_than_aps_is_an_error() {
        assert!(zf_pseudoinverse(&DMatrix::from_element(3, 2, 1.0)).is_err());
    }
}
