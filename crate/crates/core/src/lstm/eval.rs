use super::{forward_batch, lstm_forward, LstmModel};
use crate::channel::RoomLayout;
use crate::dataset::{decode_pose, Dataset, DatasetConfig};
use crate::error::{Error, Result};
use crate::geometry::{angle_difference, Pose};
use crate::scene::Scene;
use crate::window::SnrWindow;

/// Turns normalized head outputs into poses inside the room.
fn decode_output(model: &LstmModel, mut out: Vec<f64>, layout: &RoomLayout) -> Result<Vec<Pose>> {
    model.meta.norm.denormalize_labels(&mut out)?;
    Ok(out
        .chunks(model.meta.label_width())
        .map(|step| {
            let mut p = decode_pose(step, model.meta.yaw_encoding);
            let c = layout.clamp(p.position());
            (p.x, p.y, p.z) = (c.x, c.y, c.z);
            p
        })
        .collect())
}

/// Predicted poses for slots `t+1 ..= t+l_max` from the window ending at `t`.
pub fn predict_sequence(model: &LstmModel, window: &SnrWindow, layout: &RoomLayout) -> Result<Vec<Pose>> {
    let mut features = window.features(&model.meta)?;
    model.meta.norm.normalize_features(&mut features)?;
    let out = lstm_forward(model, &features)?;
    decode_output(model, out, layout)
}

/// Predicted pose `l` slots ahead, `1 <= l <= l_max`.
pub fn predict_pose(model: &LstmModel, window: &SnrWindow, l: usize, layout: &RoomLayout) -> Result<Pose> {
    if l == 0 || l > model.meta.l_max {
        return Err(Error::invalid(format!("posterior index {l} outside 1..={}", model.meta.l_max)));
    }
    Ok(predict_sequence(model, window, layout)?[l - 1])
}

/// Baseline that assumes the user keeps the last observed pose.
pub fn persistence_predict(last: &Pose, _l: usize) -> Pose {
    *last
}

/// Per-horizon prediction errors; index `l - 1` holds horizon `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorEval {
    pub mean_position_error: Vec<f64>,
    /// Every positioning error, for empirical CDFs.
    pub position_errors: Vec<Vec<f64>>,
    /// Mean absolute (wrapped) yaw, pitch and roll errors in degrees.
    pub mean_angle_error: Vec<[f64; 3]>,
}

/// Scores predicted pose sequences against the true ones.
pub fn score(predicted: &[Vec<Pose>], truth: &[Vec<Pose>]) -> PredictorEval {
    let horizons = truth.first().map_or(0, Vec::len);
    let mut position_errors = vec![Vec::with_capacity(truth.len()); horizons];
    let mut angle_sums = vec![[0.0; 3]; horizons];
    for (p_seq, t_seq) in predicted.iter().zip(truth) {
        for (l, (p, t)) in p_seq.iter().zip(t_seq).enumerate() {
            position_errors[l].push(p.distance(t));
            angle_sums[l][0] += angle_difference(p.alpha, t.alpha);
            angle_sums[l][1] += angle_difference(p.beta, t.beta);
            angle_sums[l][2] += angle_difference(p.gamma, t.gamma);
        }
    }
    let count = truth.len().max(1) as f64;
    PredictorEval {
        mean_position_error: position_errors.iter().map(|e| e.iter().sum::<f64>() / count).collect(),
        mean_angle_error: angle_sums.iter().map(|s| s.map(|v| v / count)).collect(),
        position_errors,
    }
}

fn truth_poses(ds: &Dataset, indices: &[usize]) -> Vec<Vec<Pose>> {
    let width = ds.meta.label_width();
    indices
        .iter()
        .map(|&i| {
            ds.samples[i]
                .labels
                .chunks(width)
                .map(|s| decode_pose(s, ds.meta.yaw_encoding))
                .collect()
        })
        .collect()
}

/// Evaluates the model on the given samples (normally the test partition).
pub fn evaluate(model: &LstmModel, ds: &Dataset, indices: &[usize], layout: &RoomLayout) -> Result<PredictorEval> {
    if model.meta.m != ds.meta.m || model.meta.n != ds.meta.n || model.meta.l_max != ds.meta.l_max {
        return Err(Error::invalid("model and dataset shapes differ"));
    }
    let fin = model.input_len();
    let fout = model.output_len();
    let mut predicted = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(1024) {
        let mut x = Vec::with_capacity(chunk.len() * fin);
        for &i in chunk {
            let mut f = ds.samples[i].features.clone();
            model.meta.norm.normalize_features(&mut f)?;
            x.extend(f);
        }
        let out = forward_batch(model, &x, chunk.len())?;
        for row in out.chunks(fout) {
            predicted.push(decode_output(model, row.to_vec(), layout)?);
        }
    }
    Ok(score(&predicted, &truth_poses(ds, indices)))
}

/// Evaluates the persistence baseline; the last prior pose of every sample
/// is recovered by regenerating its trajectory.
pub fn evaluate_persistence(ds: &Dataset, indices: &[usize], scene: &Scene, config: &DatasetConfig) -> Result<PredictorEval> {
    let mut predicted = Vec::with_capacity(indices.len());
    for &i in indices {
        let traj = ds.trajectory(i, scene, config)?;
        let last = traj[ds.meta.n - 1];
        predicted.push((1..=ds.meta.l_max).map(|l| persistence_predict(&last, l)).collect());
    }
    Ok(score(&predicted, &truth_poses(ds, indices)))
}
