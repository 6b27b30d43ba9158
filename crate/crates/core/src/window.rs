use std::collections::VecDeque;

use crate::dataset::{pose_snr, snr_features, DatasetMeta};
use crate::error::{Error, Result};
use crate::mobility::Trajectory;
use crate::scene::Scene;

/// The `n` most recent uplink SNR vectors (linear) of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrWindow {
    capacity: usize,
    /// Users sharing the uplink band when the SNRs were measured.
    users: usize,
    entries: VecDeque<(usize, Vec<f64>)>,
}

impl SnrWindow {
    pub fn new(capacity: usize, users: usize) -> Self {
        SnrWindow {
            capacity,
            users,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_warm(&self) -> bool {
        self.entries.len() == self.capacity
    }

    /// Appends the SNR vector of `slot`, evicting the oldest entry when full.
    pub fn push(&mut self, slot: usize, snr: Vec<f64>) -> Result<()> {
        if let Some((last, prev)) = self.entries.back() {
            if slot != last + 1 {
                return Err(Error::invalid(format!("slot {slot} does not follow slot {last}")));
            }
            if snr.len() != prev.len() {
                return Err(Error::invalid("SNR vector length changed within a window"));
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((slot, snr));
        Ok(())
    }

    pub fn slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|(s, _)| *s)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.entries.iter().map(|(_, r)| r.as_slice())
    }

    /// True when every vector equals the first one, i.e. nothing moved.
    pub fn is_static(&self) -> bool {
        let mut rows = self.rows();
        match rows.next() {
            Some(first) => rows.all(|r| r == first),
            None => true,
        }
    }

    /// Raw (unnormalized) model features, rescaled to the user count the
    /// training data was recorded with.
    pub fn features(&self, meta: &DatasetMeta) -> Result<Vec<f64>> {
        if self.entries.len() != meta.n {
            return Err(Error::invalid(format!(
                "window holds {} SNR vectors, model expects {}",
                self.entries.len(),
                meta.n
            )));
        }
        let rescale = meta.reference_users as f64 / self.users as f64;
        let mut out = Vec::with_capacity(meta.n * meta.m);
        for row in self.rows() {
            if row.len() != meta.m {
                return Err(Error::invalid(format!("SNR vector has {} entries, model expects {}", row.len(), meta.m)));
            }
            let scaled: Vec<f64> = row.iter().map(|r| r * rescale).collect();
            out.extend(snr_features(&scaled, meta.feature_scale, meta.snr_floor_db));
        }
        Ok(out)
    }
}

/// Collects the SNR vectors of slots `t-n+1 ..= t` with the uplink band
/// split across `users` devices.
pub fn collect_window(traj: &Trajectory, t: usize, n: usize, scene: &Scene, users: usize) -> Result<SnrWindow> {
    if n == 0 || t + 1 < n {
        return Err(Error::invalid(format!("slot {t} has fewer than {n} slots of history")));
    }
    if t >= traj.len() {
        return Err(Error::invalid(format!("slot {t} is past the end of the trajectory")));
    }
    let mut w = SnrWindow::new(n, users);
    for j in t + 1 - n..=t {
        w.push(j, pose_snr(&traj[j], scene, users)?)?;
    }
    Ok(w)
}
