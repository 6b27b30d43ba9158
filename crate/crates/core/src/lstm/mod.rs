//! Sequence-to-sequence pose predictor: a single LSTM layer over the SNR
//! window followed by an affine head that emits every posterior step at
//! once.
//!
//! Parameters live in one flat vector in the order
//! `w_input[4H x M], w_recurrent[4H x H], b_gates[4H], w_head[O x H], b_head[O]`
//! with gate blocks ordered input, forget, candidate, output.

mod eval;
mod io;
mod train;

pub use eval::{evaluate, evaluate_persistence, persistence_predict, predict_pose, predict_sequence, score, PredictorEval};
pub use io::{load_model, save_model};
pub use train::{train, EpochLoss, TrainConfig, TrainOutcome};

use matrixmultiply::dgemm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::DatasetMeta;
use crate::error::{Error, Result};

pub const GATE_ORDER: &str = "input,forget,candidate,output";
pub const TENSOR_ORDER: &str = "w_input[4H,M],w_recurrent[4H,H],b_gates[4H],w_head[O,H],b_head[O]";

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub hidden: usize,
    pub params: Vec<f64>,
    /// Normalization and shape information of the training data.
    pub meta: DatasetMeta,
    /// Activation of the candidate and of the cell output.
    pub activation: String,
    /// Activation of the three gates.
    pub recurrent_activation: String,
}

/// Offsets of each tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub m: usize,
    pub h: usize,
    pub o: usize,
    pub w_x: usize,
    pub w_h: usize,
    pub b: usize,
    pub w_out: usize,
    pub b_out: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(m: usize, h: usize, o: usize) -> Self {
        let w_x = 0;
        let w_h = w_x + 4 * h * m;
        let b = w_h + 4 * h * h;
        let w_out = b + 4 * h;
        let b_out = w_out + o * h;
        Layout {
            m,
            h,
            o,
            w_x,
            w_h,
            b,
            w_out,
            b_out,
            len: b_out + o,
        }
    }
}

impl LstmModel {
    /// Fresh model: weights uniform in `+-1/sqrt(H)`, zero biases except a
    /// forget-gate bias of one.
    pub fn init(meta: DatasetMeta, hidden: usize, seed: u64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::invalid("hidden size must be at least 1"));
        }
        let layout = Layout::new(meta.m, hidden, meta.label_len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut params = vec![0.0; layout.len];
        for v in params[layout.w_x..layout.b].iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        for v in params[layout.w_out..layout.b_out].iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        for v in params[layout.b + hidden..layout.b + 2 * hidden].iter_mut() {
            *v = 1.0;
        }
        Ok(LstmModel {
            hidden,
            params,
            meta,
            activation: "tanh".into(),
            recurrent_activation: "sigmoid".into(),
        })
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(self.meta.m, self.hidden, self.output_len())
    }

    pub fn input_len(&self) -> usize {
        self.meta.n * self.meta.m
    }

    pub fn output_len(&self) -> usize {
        self.meta.label_len()
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.params.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("model parameters"))
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row-major `C = alpha * A * B + beta * C` with explicit strides.
#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        // strides are bounded by the slice lengths the callers pass
        debug_assert!(a.len() >= (m - 1) * rsa + (k - 1) * csa + 1);
        debug_assert!(b.len() >= (k - 1) * rsb + (n - 1) * csb + 1);
    }
    debug_assert!(c.len() >= (m - 1) * rsc + n);
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// Activations recorded during a forward pass over a batch.
pub(crate) struct Tape {
    batch: usize,
    /// Per step `batch x 4H`: activated gates i, f, g, o.
    gates: Vec<Vec<f64>>,
    /// Per step `batch x H`, index 0 is the zero initial state.
    cells: Vec<Vec<f64>>,
    hiddens: Vec<Vec<f64>>,
    /// Per step `batch x H`: tanh of the cell state.
    cell_act: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
}

/// Forward pass over `batch` sequences stored contiguously as `n x m` blocks.
pub(crate) fn forward_tape(params: &[f64], layout: Layout, n: usize, inputs: &[f64], batch: usize) -> Tape {
    let Layout { m, h, o, .. } = layout;
    let seq = n * m;
    debug_assert_eq!(inputs.len(), batch * seq);
    let w_x = &params[layout.w_x..layout.w_h];
    let w_h = &params[layout.w_h..layout.b];
    let bias = &params[layout.b..layout.w_out];

    let mut tape = Tape {
        batch,
        gates: Vec::with_capacity(n),
        cells: vec![vec![0.0; batch * h]],
        hiddens: vec![vec![0.0; batch * h]],
        cell_act: Vec::with_capacity(n),
        outputs: Vec::new(),
    };
    for t in 0..n {
        let mut z = vec![0.0; batch * 4 * h];
        for row in z.chunks_mut(4 * h) {
            row.copy_from_slice(bias);
        }
        // z += x_t * w_x^T
        gemm(batch, m, 4 * h, &inputs[t * m..], (seq, 1), w_x, (1, m), 1.0, &mut z, 4 * h);
        // z += h_{t-1} * w_h^T
        gemm(batch, h, 4 * h, &tape.hiddens[t], (h, 1), w_h, (1, h), 1.0, &mut z, 4 * h);

        let c_prev = &tape.cells[t];
        let mut c = vec![0.0; batch * h];
        let mut tc = vec![0.0; batch * h];
        let mut hid = vec![0.0; batch * h];
        for bi in 0..batch {
            let zr = &mut z[bi * 4 * h..(bi + 1) * 4 * h];
            for j in 0..h {
                let i = sigmoid(zr[j]);
                let f = sigmoid(zr[h + j]);
                let g = zr[2 * h + j].tanh();
                let og = sigmoid(zr[3 * h + j]);
                zr[j] = i;
                zr[h + j] = f;
                zr[2 * h + j] = g;
                zr[3 * h + j] = og;
                let k = bi * h + j;
                c[k] = f * c_prev[k] + i * g;
                tc[k] = c[k].tanh();
                hid[k] = og * tc[k];
            }
        }
        tape.gates.push(z);
        tape.cells.push(c);
        tape.cell_act.push(tc);
        tape.hiddens.push(hid);
    }

    let mut out = vec![0.0; batch * o];
    let b_out = &params[layout.b_out..layout.len];
    for row in out.chunks_mut(o) {
        row.copy_from_slice(b_out);
    }
    gemm(batch, h, o, &tape.hiddens[n], (h, 1), &params[layout.w_out..layout.b_out], (1, h), 1.0, &mut out, o);
    tape.outputs = out;
    tape
}

/// Reverse-mode gradient of `scale * MSE(outputs, targets)`. Returns the
/// scaled loss; gradients are accumulated into `grad`.
pub(crate) fn backward_tape(
    params: &[f64],
    layout: Layout,
    n: usize,
    inputs: &[f64],
    tape: &Tape,
    targets: &[f64],
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    let Layout { m, h, o, .. } = layout;
    let batch = tape.batch;
    let seq = n * m;
    let denom = (batch * o) as f64;

    let mut loss = 0.0;
    let mut dy = vec![0.0; batch * o];
    for ((d, y), t) in dy.iter_mut().zip(&tape.outputs).zip(targets) {
        let r = y - t;
        loss += r * r;
        *d = scale * 2.0 * r / denom;
    }
    loss *= scale / denom;

    let (g_wx, rest) = grad.split_at_mut(layout.w_h);
    let (g_wh, rest) = rest.split_at_mut(layout.b - layout.w_h);
    let (g_b, rest) = rest.split_at_mut(layout.w_out - layout.b);
    let (g_wout, g_bout) = rest.split_at_mut(layout.b_out - layout.w_out);

    // head
    let h_last = &tape.hiddens[n];
    gemm(o, batch, h, &dy, (1, o), h_last, (h, 1), 1.0, g_wout, h);
    for row in dy.chunks(o) {
        for (g, d) in g_bout.iter_mut().zip(row) {
            *g += d;
        }
    }
    let mut dh = vec![0.0; batch * h];
    gemm(batch, o, h, &dy, (o, 1), &params[layout.w_out..layout.b_out], (h, 1), 0.0, &mut dh, h);

    let w_h = &params[layout.w_h..layout.b];
    let mut dc = vec![0.0; batch * h];
    let mut dz = vec![0.0; batch * 4 * h];
    for t in (0..n).rev() {
        let gates = &tape.gates[t];
        let tc = &tape.cell_act[t];
        let c_prev = &tape.cells[t];
        for bi in 0..batch {
            let gr = &gates[bi * 4 * h..(bi + 1) * 4 * h];
            let dzr = &mut dz[bi * 4 * h..(bi + 1) * 4 * h];
            for j in 0..h {
                let k = bi * h + j;
                let (i, f, g, og) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                let dhk = dh[k];
                let dck = dc[k] + dhk * og * (1.0 - tc[k] * tc[k]);
                dzr[j] = dck * g * i * (1.0 - i);
                dzr[h + j] = dck * c_prev[k] * f * (1.0 - f);
                dzr[2 * h + j] = dck * i * (1.0 - g * g);
                dzr[3 * h + j] = dhk * tc[k] * og * (1.0 - og);
                dc[k] = dck * f;
            }
        }
        // dW_x += dz^T x_t ; dW_h += dz^T h_{t-1}
        gemm(4 * h, batch, m, &dz, (1, 4 * h), &inputs[t * m..], (seq, 1), 1.0, g_wx, m);
        gemm(4 * h, batch, h, &dz, (1, 4 * h), &tape.hiddens[t], (h, 1), 1.0, g_wh, h);
        for row in dz.chunks(4 * h) {
            for (g, d) in g_b.iter_mut().zip(row) {
                *g += d;
            }
        }
        if t > 0 {
            gemm(batch, 4 * h, h, &dz, (4 * h, 1), w_h, (h, 1), 0.0, &mut dh, h);
        }
    }
    loss
}

/// Runs the network on `batch` normalized sequences; returns `batch x O`
/// normalized predictions.
pub fn forward_batch(model: &LstmModel, inputs: &[f64], batch: usize) -> Result<Vec<f64>> {
    if inputs.len() != batch * model.input_len() {
        return Err(Error::invalid(format!(
            "expected {} input values, got {}",
            batch * model.input_len(),
            inputs.len()
        )));
    }
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("LSTM input"));
    }
    Ok(forward_tape(&model.params, model.layout(), model.meta.n, inputs, batch).outputs)
}

/// Single-sequence forward pass: `n x m` normalized features in,
/// `l_max x width` normalized predictions out.
pub fn lstm_forward(model: &LstmModel, features: &[f64]) -> Result<Vec<f64>> {
    forward_batch(model, features, 1)
}

/// Mean-squared-error loss of a batch and its gradient with respect to
/// every parameter, in the flat parameter order.
pub fn lstm_backward(model: &LstmModel, inputs: &[f64], targets: &[f64], batch: usize) -> Result<(Vec<f64>, f64)> {
    lstm_backward_scaled(model, inputs, targets, batch, 1.0)
}

/// As [`lstm_backward`] for the loss multiplied by `scale`.
pub fn lstm_backward_scaled(
    model: &LstmModel,
    inputs: &[f64],
    targets: &[f64],
    batch: usize,
    scale: f64,
) -> Result<(Vec<f64>, f64)> {
    if batch == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if targets.len() != batch * model.output_len() {
        return Err(Error::invalid("target length does not match the batch"));
    }
    let layout = model.layout();
    let tape = forward_tape(&model.params, layout, model.meta.n, inputs, batch);
    let mut grad = vec![0.0; layout.len];
    let loss = backward_tape(&model.params, layout, model.meta.n, inputs, &tape, targets, scale, &mut grad);
    Ok((grad, loss))
}

/// Mean-squared error of a forward pass without gradients.
pub fn batch_loss(model: &LstmModel, inputs: &[f64], targets: &[f64], batch: usize) -> Result<f64> {
    let out = forward_batch(model, inputs, batch)?;
    Ok(out.iter().zip(targets).map(|(y, t)| (y - t) * (y - t)).sum::<f64>() / out.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::YawEncoding;

    fn random_model(m: usize, n: usize, l_max: usize, hidden: usize, seed: u64, spread: f64) -> LstmModel {
        let meta = DatasetMeta::identity(m, n, l_max, YawEncoding::Sincos);
        let mut model = LstmModel::init(meta, hidden, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for v in &mut model.params {
            *v = rng.gen_range(-spread..spread);
        }
        model
    }

    fn random_vec(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_parameters_output_head_bias() {
        let mut model = random_model(4, 3, 2, 5, 1, 0.5);
        let layout = model.layout();
        model.params.iter_mut().for_each(|v| *v = 0.0);
        for (i, v) in model.params[layout.b_out..].iter_mut().enumerate() {
            *v = i as f64 * 0.1;
        }
        let tape = forward_tape(&model.params, layout, 3, &random_vec(12, 2), 1);
        assert!(tape.cells.iter().flatten().all(|&c| c == 0.0));
        assert!(tape.hiddens.iter().flatten().all(|&h| h == 0.0));
        for g in tape.gates.iter() {
            for j in 0..5 {
                assert_eq!(g[j], 0.5);
                assert_eq!(g[5 + j], 0.5);
                assert_eq!(g[10 + j], 0.0);
                assert_eq!(g[15 + j], 0.5);
            }
        }
        assert_eq!(tape.outputs, model.params[layout.b_out..].to_vec());
    }

    #[test]
    fn output_shape_for_any_window_length() {
        for n in 1..5 {
            let model = random_model(4, n, 3, 6, n as u64, 0.3);
            let out = lstm_forward(&model, &random_vec(4 * n, 3)).unwrap();
            assert_eq!(out.len(), 3 * 7);
        }
    }

    #[test]
    fn order_of_leading_inputs_matters() {
        let model = random_model(4, 3, 2, 5, 4, 0.8);
        let x = random_vec(12, 5);
        let mut swapped = x.clone();
        for k in 0..4 {
            swapped.swap(k, 4 + k);
        }
        assert_ne!(lstm_forward(&model, &x).unwrap(), lstm_forward(&model, &swapped).unwrap());
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let model = random_model(4, 3, 2, 5, 4, 0.8);
        let mut x = random_vec(12, 5);
        x[3] = f64::NAN;
        assert!(matches!(lstm_forward(&model, &x), Err(Error::NonFinite(_))));
    }

    #[test]
    fn batch_forward_equals_per_sample_forward() {
        let model = random_model(4, 3, 2, 5, 6, 0.8);
        let x = random_vec(12 * 5, 7);
        let batched = forward_batch(&model, &x, 5).unwrap();
        for b in 0..5 {
            let single = lstm_forward(&model, &x[b * 12..(b + 1) * 12]).unwrap();
            for (a, s) in batched[b * 14..(b + 1) * 14].iter().zip(&single) {
                assert!((a - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let model = random_model(4, 3, 2, 5, 8, 0.8);
        let x = random_vec(24, 9);
        let y = forward_batch(&model, &x, 2).unwrap();
        let (grad, loss) = lstm_backward(&model, &x, &y, 2).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_is_linear_in_loss_scale() {
        let model = random_model(4, 3, 2, 5, 10, 0.8);
        let x = random_vec(24, 11);
        let t = random_vec(28, 12);
        let (g1, l1) = lstm_backward(&model, &x, &t, 2).unwrap();
        let (g3, l3) = lstm_backward_scaled(&model, &x, &t, 2, 3.0).unwrap();
        assert!((l3 - 3.0 * l1).abs() < 1e-12 * l1.abs().max(1.0));
        for (a, b) in g1.iter().zip(&g3) {
            assert!((b - 3.0 * a).abs() <= 1e-10 * a.abs() + 1e-15);
        }
    }

    /// Central finite differences of the loss, one parameter at a time.
    fn finite_difference(model: &LstmModel, x: &[f64], t: &[f64], batch: usize, step: f64) -> Vec<f64> {
        let mut probe = model.clone();
        (0..model.params.len())
            .map(|i| {
                let orig = probe.params[i];
                probe.params[i] = orig + step;
                let up = batch_loss(&probe, x, t, batch).unwrap();
                probe.params[i] = orig - step;
                let down = batch_loss(&probe, x, t, batch).unwrap();
                probe.params[i] = orig;
                (up - down) / (2.0 * step)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let model = random_model(4, 3, 2, 5, 21, 0.7);
        let x = random_vec(3 * 12, 22);
        let t = random_vec(3 * 14, 23);
        let (grad, _) = lstm_backward(&model, &x, &t, 3).unwrap();
        let numeric = finite_difference(&model, &x, &t, 3, 1e-5);
        for (i, (a, n)) in grad.iter().zip(&numeric).enumerate() {
            let scale = a.abs().max(n.abs());
            if scale > 1e-7 {
                assert!((a - n).abs() / scale < 1e-4, "param {i}: analytic {a} numeric {n}");
            } else {
                assert!((a - n).abs() < 1e-10, "param {i}: analytic {a} numeric {n}");
            }
        }
    }
}
