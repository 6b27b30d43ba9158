//! Proactive-optimization trials: sample users, predict their channels,
//! solve, and score every case on the true future channel.

mod experiments;

pub use experiments::{
    experiment_sumrate_vs_k, experiment_sumrate_vs_rth, experiment_timing, run_trials, summarize, write_csv,
    CaseSummary, Experiment, ExperimentOutput, TRIAL_HEADER,
};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::channel::downlink_channel;
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::lstm::{persistence_predict, predict_pose, LstmModel};
use crate::mobility::{sample_trajectory, Trajectory};
use crate::optimizer::{realized_rates, solve_with_admission, ChannelMatrix, CcpOptions, ProblemSpec, SolverKind};
use crate::scene::Scene;
use crate::util::derive_seed;
use crate::window::{collect_window, SnrWindow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Users per slot.
    pub users: usize,
    /// Posterior slot index L.
    pub horizon: usize,
    /// Monte-Carlo slots per experiment point.
    pub n_slots: usize,
    /// Rate floor, nats/s/Hz.
    pub r_th: f64,
    /// Per-AP amplitude headroom, A. Defaults to the LED bias current.
    pub delta: Option<f64>,
    pub solver: SolverKind,
    pub k_sweep: Vec<usize>,
    pub r_th_sweep: Vec<f64>,
    pub timing_k_sweep: Vec<usize>,
    /// Slots per K in the timing experiment.
    pub timing_slots: usize,
    /// Trained model used by the PO case.
    pub model: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            users: 4,
            horizon: 2,
            n_slots: 500,
            r_th: 1.0,
            delta: None,
            solver: SolverKind::Ccp,
            k_sweep: vec![2, 4, 6, 8],
            r_th_sweep: vec![0.5, 1.0, 1.5, 2.0],
            timing_k_sweep: vec![2, 4, 6, 8],
            timing_slots: 30,
            model: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self, l_max: usize, aps: usize) -> Result<()> {
        if self.horizon == 0 || self.horizon > l_max {
            return Err(Error::Config(format!("horizon must lie in 1..={l_max}, got {}", self.horizon)));
        }
        if self.n_slots == 0 || self.timing_slots == 0 {
            return Err(Error::Config("n_slots and timing_slots must be positive".into()));
        }
        for &k in std::iter::once(&self.users).chain(&self.k_sweep).chain(&self.timing_k_sweep) {
            if k == 0 || k > aps {
                return Err(Error::Config(format!("user counts must lie in 1..={aps}, got {k}")));
            }
        }
        if std::iter::once(&self.r_th).chain(&self.r_th_sweep).any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::Config("rate thresholds must be finite and non-negative".into()));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config("delta must be positive".into()));
            }
        }
        Ok(())
    }
}

/// The four compared ways of obtaining the channel the optimizer sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// True channel at `t+L`.
    Genie,
    /// Channel at `t+L` predicted by the LSTM from the SNR windows.
    PoLstm,
    /// Last known pose held for `L` slots.
    Persistence,
    /// True channel at `t`, applied at `t+L`.
    Aged,
}

impl Case {
    pub const ALL: [Case; 4] = [Case::Genie, Case::PoLstm, Case::Persistence, Case::Aged];

    pub fn name(self) -> &'static str {
        match self {
            Case::Genie => "genie",
            Case::PoLstm => "po_lstm",
            Case::Persistence => "persistence",
            Case::Aged => "aged",
        }
    }
}

/// Pose forecaster used to build a predicted channel matrix.
pub trait PosePredictor {
    fn predict(&self, user: usize, window: &SnrWindow, l: usize) -> Result<Pose>;
}

pub struct LstmPredictor<'a> {
    pub model: &'a LstmModel,
    pub scene: &'a Scene,
}

impl PosePredictor for LstmPredictor<'_> {
    fn predict(&self, _user: usize, window: &SnrWindow, l: usize) -> Result<Pose> {
        predict_pose(self.model, window, l, &self.scene.layout)
    }
}

/// Stacks the downlink channels of the predicted poses into `K x M`.
pub fn predict_channel_matrix(
    predictor: &dyn PosePredictor,
    windows: &[SnrWindow],
    l: usize,
    scene: &Scene,
) -> Result<(ChannelMatrix, Vec<Pose>)> {
    if let Some(w) = windows.iter().find(|w| !w.is_warm()) {
        return Err(Error::invalid(format!("SNR window holds only {} vectors", w.len())));
    }
    let poses = windows
        .iter()
        .enumerate()
        .map(|(k, w)| predictor.predict(k, w, l))
        .collect::<Result<Vec<_>>>()?;
    Ok((channel_rows(&poses, scene)?, poses))
}

fn channel_rows(poses: &[Pose], scene: &Scene) -> Result<ChannelMatrix> {
    let m = scene.num_aps();
    let mut h = ChannelMatrix::zeros(poses.len(), m);
    for (k, p) in poses.iter().enumerate() {
        let row = downlink_channel(p, &scene.layout, &scene.device)?;
        h.row_mut(k).copy_from_slice(&row);
    }
    Ok(h)
}

/// Shared inputs of every slot.
pub struct RunContext<'a> {
    pub scene: &'a Scene,
    pub model: &'a LstmModel,
    pub horizon: usize,
    pub r_th: f64,
    pub delta: f64,
    pub solver: SolverKind,
    pub options: &'a CcpOptions,
}

impl RunContext<'_> {
    fn noise_term(&self) -> f64 {
        self.scene.layout.noise_psd * self.scene.layout.bandwidth
    }

    fn problem(&self, h: ChannelMatrix) -> ProblemSpec {
        ProblemSpec {
            h,
            delta: self.delta,
            noise_term: self.noise_term(),
            r_th: self.r_th,
        }
    }
}

/// One Monte-Carlo slot: every user's trajectory plus the derived channels.
/// All cases of a slot share it, so comparisons are paired.
pub struct Slot {
    pub seed: u64,
    /// Current slot index inside the trajectories.
    pub t: usize,
    pub trajectories: Vec<Trajectory>,
    pub windows: Vec<SnrWindow>,
    pub h_now: ChannelMatrix,
    pub h_future: ChannelMatrix,
}

impl Slot {
    /// Samples `users` independent trajectories long enough for an
    /// `n`-vector window and `l_max` posterior slots.
    pub fn sample(seed: u64, users: usize, ctx: &RunContext) -> Result<Slot> {
        let meta = &ctx.model.meta;
        let t = meta.n - 1;
        let trajectories = (0..users)
            .map(|k| sample_trajectory(derive_seed(seed, k as u64), meta.n + meta.l_max, &ctx.scene.mobility, &ctx.scene.layout))
            .collect::<Result<Vec<_>>>()?;
        let windows = trajectories
            .iter()
            .map(|tr| collect_window(tr, t, meta.n, ctx.scene, users))
            .collect::<Result<Vec<_>>>()?;
        let now: Vec<Pose> = trajectories.iter().map(|tr| tr[t]).collect();
        let future: Vec<Pose> = trajectories.iter().map(|tr| tr[t + ctx.horizon]).collect();
        Ok(Slot {
            seed,
            t,
            h_now: channel_rows(&now, ctx.scene)?,
            h_future: channel_rows(&future, ctx.scene)?,
            trajectories,
            windows,
        })
    }

    pub fn users(&self) -> usize {
        self.trajectories.len()
    }

    fn pose(&self, k: usize, offset: usize) -> Pose {
        self.trajectories[k][self.t + offset]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseOutcome {
    pub case: Case,
    /// Sum of realized rates on the true channel at `t+L`, nats/s/Hz.
    pub sum_rate: f64,
    /// Sum of the rates the optimizer designed for, nats/s/Hz.
    pub design_sum_rate: f64,
    pub admitted: usize,
    /// Wall-clock optimizer time, s.
    pub solve_time: f64,
    /// Mean distance between the pose behind the used channel and the
    /// true pose at `t+L`, m.
    pub position_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub slot: usize,
    pub seed: u64,
    pub cases: Vec<CaseOutcome>,
}

impl TrialRecord {
    pub fn case(&self, case: Case) -> &CaseOutcome {
        self.cases.iter().find(|c| c.case == case).expect("every case is run")
    }
}

/// Solves one case of a slot and scores it on the true future channel.
pub fn run_case(case: Case, slot: &Slot, ctx: &RunContext) -> Result<CaseOutcome> {
    let k = slot.users();
    let l = ctx.horizon;
    let (h_used, used_poses): (ChannelMatrix, Vec<Pose>) = match case {
        Case::Genie => (slot.h_future.clone(), (0..k).map(|j| slot.pose(j, l)).collect()),
        Case::Aged => (slot.h_now.clone(), (0..k).map(|j| slot.pose(j, 0)).collect()),
        Case::Persistence => {
            let poses: Vec<Pose> = (0..k).map(|j| persistence_predict(&slot.pose(j, 0), l)).collect();
            (channel_rows(&poses, ctx.scene)?, poses)
        }
        Case::PoLstm => {
            let predictor = LstmPredictor {
                model: ctx.model,
                scene: ctx.scene,
            };
            let (mut h, mut poses) = predict_channel_matrix(&predictor, &slot.windows, l, ctx.scene)?;
            // a user whose SNRs did not change over the window has not
            // moved: keep its current channel instead of forecasting
            for j in 0..k {
                if slot.windows[j].is_static() {
                    h.set_row(j, &slot.h_now.row(j));
                    poses[j] = slot.pose(j, 0);
                }
            }
            (h, poses)
        }
    };
    let position_error =
        used_poses.iter().enumerate().map(|(j, p)| p.distance(&slot.pose(j, l))).sum::<f64>() / k as f64;

    let sol = solve_with_admission(&ctx.problem(h_used), ctx.solver, ctx.options)?;
    let sum_rate = if sol.admitted.is_empty() {
        0.0
    } else {
        let true_rows = slot.h_future.select_rows(&sol.admitted);
        realized_rates(&sol.precoder, &true_rows, ctx.noise_term())?.iter().sum()
    };
    Ok(CaseOutcome {
        case,
        sum_rate,
        design_sum_rate: sol.objective,
        admitted: sol.admitted.len(),
        solve_time: sol.solve_time,
        position_error,
    })
}

/// Runs all four cases on slot `index` of the stream seeded by `seed`.
pub fn run_slot(index: usize, seed: u64, users: usize, ctx: &RunContext) -> Result<TrialRecord> {
    let slot_seed = derive_seed(seed, index as u64);
    let slot = Slot::sample(slot_seed, users, ctx)?;
    let cases = Case::ALL.iter().map(|&c| run_case(c, &slot, ctx)).collect::<Result<Vec<_>>>()?;
    Ok(TrialRecord {
        slot: index,
        seed: slot_seed,
        cases,
    })
}
