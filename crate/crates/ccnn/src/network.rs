//! Fully-connected ReLU network with softmax output, trained by minibatch
//! SGD with momentum, inverted dropout, an L1 activation penalty, L2
//! weight decay, and a per-column max-norm constraint on hidden weights.

use crate::costmodel::LayerWork;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{streams, Rng};

/// Weights and bias for one layer; weights are h_in x h_out so the
/// forward pass is `activations * W + b`.
#[derive(Debug, Clone)]
pub struct LayerParams {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Momentum buffer mirroring one layer's shape.
#[derive(Debug, Clone)]
pub(crate) struct LayerVelocity {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// All trainable state.
#[derive(Debug, Clone)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
    pub(crate) velocity: Vec<LayerVelocity>,
}

/// Learning-rate and momentum schedules: gamma_n = gamma0 * lambda^n,
/// nu_n = min(nu_max, nu0 * beta^n).
#[derive(Debug, Clone)]
pub struct TrainSchedule {
    pub gamma0: f64,
    pub lambda_decay: f64,
    pub nu0: f64,
    pub nu_max: f64,
    pub beta_m: f64,
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_decay > 0.0 && self.lambda_decay < 1.0) {
            return Err(Error::Config(format!(
                "lambda_decay must be in (0,1), got {}",
                self.lambda_decay
            )));
        }
        if self.beta_m <= 1.0 {
            return Err(Error::Config(format!(
                "beta_m must exceed 1, got {}",
                self.beta_m
            )));
        }
        if !(0.0 <= self.nu0 && self.nu0 <= self.nu_max && self.nu_max < 1.0) {
            return Err(Error::Config(format!(
                "momentum bounds violated: nu0 {} nu_max {}",
                self.nu0, self.nu_max
            )));
        }
        Ok(())
    }
}

/// Penalty strengths and constraint bounds.
#[derive(Debug, Clone)]
pub struct RegularizerConfig {
    pub l1_activation: f64,
    pub l2_weight: f64,
    pub dropout_p: f64,
    pub max_norm: f64,
}

impl RegularizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l1_activation < 0.0 || self.l2_weight < 0.0 {
            return Err(Error::Config("penalties must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "dropout_p must be in [0,1], got {}",
                self.dropout_p
            )));
        }
        if self.max_norm <= 0.0 {
            return Err(Error::Config(format!(
                "max_norm must be positive, got {}",
                self.max_norm
            )));
        }
        Ok(())
    }
}

/// Train applies dropout; infer does not (inverted-dropout convention).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Infer,
}

/// Everything the backward pass needs from a forward pass.
///
/// `gates` holds the multiplier applied to relu(z) at each hidden layer:
/// the product of the dropout keep mask scaled by 1/(1-p) and, under the
/// estimator, the sign mask. Gradients route through the same gates.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Matrix,
    pub hidden_pre: Vec<Matrix>,
    pub hidden_act: Vec<Matrix>,
    pub gates: Vec<Matrix>,
    pub logits: Matrix,
    pub probabilities: Matrix,
    /// Per-layer executed work for the FLOP ledger.
    pub work: Vec<LayerWork>,
}

impl NetworkParams {
    /// Build from explicit layers, validating the shape chain; velocities
    /// start at zero.
    pub fn from_layers(layers: Vec<LayerParams>) -> Result<NetworkParams> {
        if layers.is_empty() {
            return Err(Error::InvalidArchitecture("no layers".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weights.cols() {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {l}: bias length {} vs {} weight columns",
                    layer.bias.len(),
                    layer.weights.cols()
                )));
            }
            if l + 1 < layers.len() && layer.weights.cols() != layers[l + 1].weights.rows() {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {l} output width {} does not chain into layer {} input width {}",
                    layer.weights.cols(),
                    l + 1,
                    layers[l + 1].weights.rows()
                )));
            }
        }
        let velocity = layers
            .iter()
            .map(|l| LayerVelocity {
                weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                bias: vec![0.0; l.bias.len()],
            })
            .collect();
        Ok(NetworkParams { layers, velocity })
    }

    /// Layer widths, input first.
    pub fn arch(&self) -> Vec<usize> {
        let mut widths = vec![self.layers[0].weights.rows()];
        widths.extend(self.layers.iter().map(|l| l.weights.cols()));
        widths
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Hidden weight matrices are all but the last.
    pub fn num_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().unwrap().weights.cols()
    }
}

/// Gaussian-initialized network: weights N(0, weight_sigma^2) from the
/// seed's init stream, every bias set to 1, velocities zero.
pub fn init_network(arch: &[usize], weight_sigma: f64, seed: u64) -> Result<NetworkParams> {
    if arch.len() < 2 || arch.iter().any(|&w| w == 0) {
        return Err(Error::InvalidArchitecture(format!("{arch:?}")));
    }
    let mut rng = Rng::from_stream(seed, streams::INIT);
    let mut layers = Vec::with_capacity(arch.len() - 1);
    for w in arch.windows(2) {
        let (rows, cols) = (w[0], w[1]);
        let data = (0..rows * cols)
            .map(|_| weight_sigma * rng.next_gaussian())
            .collect();
        layers.push(LayerParams {
            weights: Matrix::from_vec(rows, cols, data)?,
            bias: vec![1.0; cols],
        });
    }
    NetworkParams::from_layers(layers)
}

/// Row-wise softmax with max subtraction; also returns per-row
/// log(sum(exp(z - max))) + max for the stable log-likelihood.
pub(crate) fn softmax(logits: &Matrix) -> (Matrix, Vec<f64>) {
    let (n, c) = logits.shape();
    let mut probs = Matrix::zeros(n, c);
    let mut log_z = Vec::with_capacity(n);
    for i in 0..n {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (j, &z) in row.iter().enumerate() {
            let e = (z - max).exp();
            probs.set(i, j, e);
            sum += e;
        }
        for j in 0..c {
            probs.set(i, j, probs.get(i, j) / sum);
        }
        log_z.push(max + sum.ln());
    }
    (probs, log_z)
}

/// Dropout gate matrix: entries are 1/(1-p) with probability 1-p, else 0.
/// Draws are consumed row-major, one per element, in every train-phase
/// call regardless of p, so parallel experiments stay on the same stream.
pub(crate) fn train_dropout_gate(rows: usize, cols: usize, p: f64, rng: &mut Rng) -> Matrix {
    let keep_scale = if p < 1.0 { 1.0 / (1.0 - p) } else { 0.0 };
    let data = (0..rows * cols)
        .map(|_| if rng.next_bool(p) { 0.0 } else { keep_scale })
        .collect();
    Matrix::new_unchecked(rows, cols, data)
}

/// Feed a batch through the network.
pub fn forward(
    params: &NetworkParams,
    batch: &Matrix,
    phase: Phase,
    dropout_p: f64,
    rng: &mut Rng,
) -> Result<ForwardTrace> {
    if batch.cols() != params.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "forward",
            left_rows: batch.rows(),
            left_cols: batch.cols(),
            right_rows: params.input_dim(),
            right_cols: params.num_classes(),
        });
    }
    let n = batch.rows();
    let hidden_count = params.num_hidden();
    let mut hidden_pre = Vec::with_capacity(hidden_count);
    let mut hidden_act = Vec::with_capacity(hidden_count);
    let mut gates = Vec::with_capacity(hidden_count);
    let mut work = Vec::with_capacity(params.num_layers());

    let mut a = batch.clone();
    for l in 0..hidden_count {
        let layer = &params.layers[l];
        let mut z = a.matmul(&layer.weights)?;
        z.add_row_broadcast_assign(&layer.bias);
        work.push(LayerWork::dense(n, layer.weights.rows(), layer.weights.cols()));

        let gate = match phase {
            Phase::Train => train_dropout_gate(n, z.cols(), dropout_p, rng),
            Phase::Infer => Matrix::new_unchecked(n, z.cols(), vec![1.0; n * z.cols()]),
        };
        let mut act = z.relu();
        act.hadamard_assign(&gate);

        hidden_pre.push(z);
        gates.push(gate);
        hidden_act.push(act.clone());
        a = act;
    }

    let out = params.layers.last().unwrap();
    let mut logits = a.matmul(&out.weights)?;
    logits.add_row_broadcast_assign(&out.bias);
    work.push(LayerWork::dense(n, out.weights.rows(), out.weights.cols()));
    let (probabilities, _) = softmax(&logits);

    Ok(ForwardTrace {
        input: batch.clone(),
        hidden_pre,
        hidden_act,
        gates,
        logits,
        probabilities,
        work,
    })
}

/// Objective value: mean negative log-likelihood plus the L1 activation
/// penalty (mean per-sample L1 of post-dropout hidden activations) plus
/// (l2/2) * sum of squared weight entries.
pub fn loss(
    trace: &ForwardTrace,
    labels: &[usize],
    params: &NetworkParams,
    reg: &RegularizerConfig,
) -> Result<f64> {
    let n = trace.input.rows();
    if labels.len() != n {
        return Err(Error::Config(format!(
            "labels length {} vs batch size {n}",
            labels.len()
        )));
    }
    let classes = params.num_classes();
    let (_, log_z) = softmax(&trace.logits);
    let mut nll = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes,
                sample: i,
            });
        }
        nll -= trace.logits.get(i, y) - log_z[i];
    }
    nll /= n as f64;

    let mut l1 = 0.0;
    for act in &trace.hidden_act {
        let sum_abs: f64 = act.data().iter().map(|x| x.abs()).sum();
        l1 += sum_abs / n as f64;
    }

    let mut l2 = 0.0;
    for layer in &params.layers {
        l2 += layer.weights.data().iter().map(|x| x * x).sum::<f64>();
    }

    Ok(nll + reg.l1_activation * l1 + reg.l2_weight * 0.5 * l2)
}

/// One SGD-with-momentum step from a trace, in place.
///
/// Gradients: softmax minus one-hot at the output; the ReLU subgradient
/// and the stored gates route hidden gradients; the L1 penalty adds
/// l1/n * sign(a) at each hidden activation; L2 adds l2 * W. Velocity
/// v <- momentum*v - lr*grad, W <- W + v, then hidden weight columns are
/// projected back to the max-norm ball.
pub fn backward_update(
    params: &mut NetworkParams,
    trace: &ForwardTrace,
    labels: &[usize],
    reg: &RegularizerConfig,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    let n = trace.input.rows();
    if labels.len() != n {
        return Err(Error::Config(format!(
            "labels length {} vs batch size {n}",
            labels.len()
        )));
    }
    if trace.hidden_pre.len() != params.num_hidden()
        || trace.input.cols() != params.input_dim()
        || trace.logits.cols() != params.num_classes()
    {
        return Err(Error::ShapeMismatch {
            op: "backward_update: stale trace",
            left_rows: trace.input.rows(),
            left_cols: trace.input.cols(),
            right_rows: params.input_dim(),
            right_cols: params.num_classes(),
        });
    }
    let classes = params.num_classes();

    // dL/dz at the output: (softmax - onehot) / n.
    let mut dz = trace.probabilities.clone();
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes,
                sample: i,
            });
        }
        dz.set(i, y, dz.get(i, y) - 1.0);
    }
    dz.scale_assign(1.0 / n as f64);

    let layer_count = params.num_layers();
    for l in (0..layer_count).rev() {
        let a_prev = if l == 0 {
            &trace.input
        } else {
            &trace.hidden_act[l - 1]
        };
        let mut grad_w = a_prev.matmul_transpose_a(&dz)?;
        if reg.l2_weight > 0.0 {
            grad_w.add_scaled_assign(reg.l2_weight, &params.layers[l].weights);
        }
        let mut grad_b = vec![0.0; dz.cols()];
        for i in 0..dz.rows() {
            for (gb, &d) in grad_b.iter_mut().zip(dz.row(i)) {
                *gb += d;
            }
        }

        // Propagate before touching this layer's weights.
        if l > 0 {
            let mut da = dz.matmul_transpose_b(&params.layers[l].weights)?;
            if reg.l1_activation > 0.0 {
                let act = &trace.hidden_act[l - 1];
                let coeff = reg.l1_activation / n as f64;
                for (d, &a) in da.data_mut().iter_mut().zip(act.data()) {
                    if a > 0.0 {
                        *d += coeff;
                    } else if a < 0.0 {
                        *d -= coeff;
                    }
                }
            }
            let z = &trace.hidden_pre[l - 1];
            let gate = &trace.gates[l - 1];
            for ((d, &zv), &g) in da.data_mut().iter_mut().zip(z.data()).zip(gate.data()) {
                *d *= if zv > 0.0 { g } else { 0.0 };
            }
            dz = da;
        }

        let vel = &mut params.velocity[l];
        vel.weights.scale_assign(momentum);
        vel.weights.add_scaled_assign(-lr, &grad_w);
        params.layers[l].weights.add_scaled_assign(1.0, &vel.weights);
        for ((vb, gb), b) in vel
            .bias
            .iter_mut()
            .zip(&grad_b)
            .zip(params.layers[l].bias.iter_mut())
        {
            *vb = momentum * *vb - lr * gb;
            *b += *vb;
        }
        if l < layer_count - 1 {
            params.layers[l].weights.clamp_col_norms(reg.max_norm);
        }
    }
    Ok(())
}

/// Learning rate for epoch n: gamma0 * lambda^n.
pub fn lr_at_epoch(sched: &TrainSchedule, n: usize) -> f64 {
    sched.gamma0 * sched.lambda_decay.powi(n as i32)
}

/// Momentum for epoch n: min(nu_max, nu0 * beta^n); never exceeds nu_max.
pub fn momentum_at_epoch(sched: &TrainSchedule, n: usize) -> f64 {
    sched.nu_max.min(sched.nu0 * sched.beta_m.powi(n as i32))
}

/// Fraction of samples whose argmax class (ties toward the lowest index)
/// differs from the label. Runs in inference mode, chunked.
pub fn evaluate(params: &NetworkParams, features: &Matrix, labels: &[usize]) -> Result<f64> {
    if features.rows() != labels.len() || features.rows() == 0 {
        return Err(Error::Config(format!(
            "evaluate: {} samples vs {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let mut rng = Rng::new(0); // unused in infer phase
    let mut wrong = 0usize;
    let chunk = 1000;
    let mut start = 0;
    while start < features.rows() {
        let end = (start + chunk).min(features.rows());
        let rows: Vec<Vec<f64>> = (start..end).map(|i| features.row(i).to_vec()).collect();
        let batch = Matrix::from_rows(&rows)?;
        let trace = forward(params, &batch, Phase::Infer, 0.0, &mut rng)?;
        for i in 0..batch.rows() {
            if trace.probabilities.argmax_row(i) != labels[start + i] {
                wrong += 1;
            }
        }
        start = end;
    }
    Ok(wrong as f64 / features.rows() as f64)
}
