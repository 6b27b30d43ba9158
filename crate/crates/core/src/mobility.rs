//! Orientation-aware random waypoint mobility.
//!
//! Users walk at constant speed toward uniformly drawn waypoints on the floor
//! rectangle; at every time slot the device orientation is redrawn around
//! the walking heading.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::RoomLayout;
use crate::error::{Error, Result};
use crate::geometry::{wrap_degrees, Pose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    /// Walking speed, m/s. Zero freezes the user in place.
    pub speed: f64,
    pub slot_duration: f64,
    pub ue_height: f64,
    pub wall_margin: f64,
    pub yaw_jitter_std: f64,
    pub pitch_mean: f64,
    pub pitch_std: f64,
    pub roll_mean: f64,
    pub roll_std: f64,
    pub pause_probability: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            speed: 1.0,
            slot_duration: 0.5,
            ue_height: 1.2,
            wall_margin: 0.1,
            yaw_jitter_std: 10.0,
            pitch_mean: 40.0,
            pitch_std: 7.0,
            roll_mean: 0.0,
            roll_std: 4.0,
            pause_probability: 0.0,
        }
    }
}

impl MobilityConfig {
    /// A user that never moves and never turns.
    pub fn frozen() -> Self {
        MobilityConfig {
            speed: 0.0,
            yaw_jitter_std: 0.0,
            pitch_std: 0.0,
            roll_std: 0.0,
            ..Default::default()
        }
    }

    pub fn step_length(&self) -> f64 {
        self.speed * self.slot_duration
    }

    pub fn validate(&self, layout: &RoomLayout) -> Result<()> {
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(Error::invalid("mobility.speed must be non-negative"));
        }
        if !(self.slot_duration > 0.0) {
            return Err(Error::invalid("mobility.slot_duration must be positive"));
        }
        if !(0.0..=layout.height).contains(&self.ue_height) {
            return Err(Error::invalid("mobility.ue_height must lie within the room height"));
        }
        if !(self.wall_margin >= 0.0
            && 2.0 * self.wall_margin < layout.length
            && 2.0 * self.wall_margin < layout.width)
        {
            return Err(Error::invalid("mobility.wall_margin leaves no walkable floor"));
        }
        if !(0.0..1.0).contains(&self.pause_probability) {
            return Err(Error::invalid("mobility.pause_probability must lie in [0, 1)"));
        }
        for (name, v) in [
            ("yaw_jitter_std", self.yaw_jitter_std),
            ("pitch_std", self.pitch_std),
            ("roll_std", self.roll_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("mobility.{name} must be non-negative")));
            }
        }
        Ok(())
    }
}

/// One pose per time slot.
pub type Trajectory = Vec<Pose>;

fn gaussian(rng: &mut ChaCha8Rng, mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        return mean;
    }
    Normal::new(mean, std).expect("std is finite and positive").sample(rng)
}

/// Draws the device orientation for one slot given the walking heading (deg).
pub fn step_orientation(rng: &mut ChaCha8Rng, heading: f64, config: &MobilityConfig) -> (f64, f64, f64) {
    let alpha = wrap_degrees(heading + gaussian(rng, 0.0, config.yaw_jitter_std));
    let beta = gaussian(rng, config.pitch_mean, config.pitch_std).clamp(-180.0, 180f64.next_down());
    let gamma = gaussian(rng, config.roll_mean, config.roll_std).clamp(-90.0, 90f64.next_down());
    (alpha, beta, gamma)
}

struct Walker {
    x: f64,
    y: f64,
    target: (f64, f64),
    heading: f64,
}

impl Walker {
    fn aim(&mut self) {
        let (dx, dy) = (self.target.0 - self.x, self.target.1 - self.y);
        if dx != 0.0 || dy != 0.0 {
            self.heading = wrap_degrees(dy.atan2(dx).to_degrees());
        }
    }
}

/// Samples a trajectory of `n_steps` poses, fully determined by `seed`.
pub fn sample_trajectory(seed: u64, n_steps: usize, config: &MobilityConfig, layout: &RoomLayout) -> Result<Trajectory> {
    if n_steps == 0 {
        return Err(Error::invalid("trajectory needs at least one step"));
    }
    config.validate(layout)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = config.wall_margin;
    let (x_lo, x_hi) = (m, layout.length - m);
    let (y_lo, y_hi) = (m, layout.width - m);
    let waypoint = |rng: &mut ChaCha8Rng| (rng.gen_range(x_lo..=x_hi), rng.gen_range(y_lo..=y_hi));

    let start = waypoint(&mut rng);
    let mut w = Walker {
        x: start.0,
        y: start.1,
        target: waypoint(&mut rng),
        heading: 0.0,
    };
    w.aim();

    let step = config.step_length();
    let mut out = Vec::with_capacity(n_steps);
    for i in 0..n_steps {
        if i > 0 {
            let paused = config.pause_probability > 0.0 && rng.gen::<f64>() < config.pause_probability;
            if !paused && step > 0.0 {
                let (dx, dy) = (w.target.0 - w.x, w.target.1 - w.y);
                let dist = dx.hypot(dy);
                if dist <= step {
                    (w.x, w.y) = w.target;
                    w.target = waypoint(&mut rng);
                } else {
                    w.x += dx / dist * step;
                    w.y += dy / dist * step;
                }
                w.aim();
            }
        }
        let (alpha, beta, gamma) = step_orientation(&mut rng, w.heading, config);
        out.push(Pose::new(
            w.x.clamp(x_lo, x_hi),
            w.y.clamp(y_lo, y_hi),
            config.ue_height,
            alpha,
            beta,
            gamma,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_step_displacement_is_bounded() {
        let layout = RoomLayout::default();
        let config = MobilityConfig::default();
        let traj = sample_trajectory(3, 2000, &config, &layout).unwrap();
        let bound = config.speed * config.slot_duration + 1e-9;
        for pair in traj.windows(2) {
            assert!(pair[0].distance(&pair[1]) <= bound);
        }
        // most steps move the full stride
        let full = traj
            .windows(2)
            .filter(|p| (p[0].distance(&p[1]) - 0.5).abs() < 1e-9)
            .count();
        assert!(full > 1500);
    }

    #[test]
    fn seeded_determinism() {
        let layout = RoomLayout::default();
        let config = MobilityConfig::default();
        let a = sample_trajectory(11, 300, &config, &layout).unwrap();
        let b = sample_trajectory(11, 300, &config, &layout).unwrap();
        assert_eq!(a, b);
        let c = sample_trajectory(12, 300, &config, &layout).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn long_walk_covers_all_quadrants_and_stays_inset() {
        let layout = RoomLayout::default();
        let config = MobilityConfig::default();
        let traj = sample_trajectory(5, 10_000, &config, &layout).unwrap();
        let mut quadrants = [0usize; 4];
        for p in &traj {
            assert!(p.x >= 0.1 && p.x <= 4.9 && p.y >= 0.1 && p.y <= 4.9);
            assert_eq!(p.z, 1.2);
            assert!(p.angles_in_range());
            quadrants[(p.x > 2.5) as usize + 2 * (p.y > 2.5) as usize] += 1;
        }
        assert!(quadrants.iter().all(|&c| c > 1000), "{quadrants:?}");
    }

    #[test]
    fn zero_steps_is_an_error() {
        assert!(sample_trajectory(1, 0, &MobilityConfig::default(), &RoomLayout::default()).is_err());
    }

    #[test]
    fn frozen_user_never_changes() {
        let traj = sample_trajectory(9, 50, &MobilityConfig::frozen(), &RoomLayout::default()).unwrap();
        assert!(traj.iter().all(|p| *p == traj[0]));
    }

    #[test]
    fn degenerate_orientation_distribution() {
        let config = MobilityConfig {
            yaw_jitter_std: 0.0,
            pitch_std: 0.0,
            roll_std: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(step_orientation(&mut rng, 123.0, &config), (123.0, 40.0, 0.0));
    }

    #[test]
    fn pitch_sample_mean() {
        let config = MobilityConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let (a, b, g) = step_orientation(&mut rng, 359.9, &config);
            assert!((0.0..360.0).contains(&a));
            assert!((-180.0..180.0).contains(&b));
            assert!((-90.0..90.0).contains(&g));
            sum += b;
        }
        let mean = sum / n as f64;
        assert!((mean - config.pitch_mean).abs() < 3.0 * config.pitch_std / (n as f64).sqrt());
    }

    #[test]
    fn extreme_distributions_stay_in_range() {
        let config = MobilityConfig {
            pitch_mean: 170.0,
            pitch_std: 50.0,
            roll_mean: -80.0,
            roll_std: 60.0,
            yaw_jitter_std: 400.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let (a, b, g) = step_orientation(&mut rng, 0.0, &config);
            assert!((0.0..360.0).contains(&a));
            assert!((-180.0..180.0).contains(&b));
            assert!((-90.0..90.0).contains(&g));
        }
    }
}
