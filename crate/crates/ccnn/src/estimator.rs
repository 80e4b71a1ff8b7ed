//! Low-rank activation sign estimation and the conditional forward pass.
//!
//! Each hidden weight matrix W gets rank-k factors (U, V) from its SVD.
//! The product (aU)V cheaply predicts the sign of aW; units predicted
//! negative would be zeroed by ReLU anyway, so their dot products can be
//! skipped. The sign estimate targets aW without the layer's additive
//! bias, and a configurable threshold b tightens the mask: an entry is
//! active iff (aUV) - b >= 0.

use crate::costmodel::LayerWork;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{softmax, ForwardTrace, NetworkParams, Phase};
use crate::rng::Rng;
use crate::svd::{LowRankFactors, Svd};

/// Mask threshold for one layer.
#[derive(Debug, Clone)]
pub enum MaskBias {
    Scalar(f64),
    PerUnit(Vec<f64>),
}

impl MaskBias {
    #[inline]
    fn at(&self, j: usize) -> f64 {
        match self {
            MaskBias::Scalar(b) => *b,
            MaskBias::PerUnit(v) => v[j],
        }
    }

    fn validate(&self, units: usize) -> Result<()> {
        match self {
            MaskBias::Scalar(b) if *b < 0.0 => {
                Err(Error::Config(format!("estimator bias must be >= 0, got {b}")))
            }
            MaskBias::PerUnit(v) if v.len() != units => Err(Error::Config(format!(
                "estimator bias vector length {} vs {} units",
                v.len(),
                units
            ))),
            MaskBias::PerUnit(v) if v.iter().any(|b| *b < 0.0) => {
                Err(Error::Config("estimator bias entries must be >= 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Ranks and refresh policy for the estimator; one rank per hidden weight
/// matrix (the output layer is never estimated).
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub ranks: Vec<usize>,
    /// Epochs between SVD recomputations.
    pub refresh_period: usize,
    pub bias: Vec<MaskBias>,
}

impl EstimatorConfig {
    pub fn with_ranks(ranks: Vec<usize>) -> EstimatorConfig {
        let bias = ranks.iter().map(|_| MaskBias::Scalar(0.0)).collect();
        EstimatorConfig {
            ranks,
            refresh_period: 1,
            bias,
        }
    }

    pub fn validate(&self, params: &NetworkParams) -> Result<()> {
        if self.ranks.len() != params.num_hidden() {
            return Err(Error::Config(format!(
                "{} ranks for {} hidden weight matrices",
                self.ranks.len(),
                params.num_hidden()
            )));
        }
        if self.refresh_period == 0 {
            return Err(Error::Config("refresh_period must be >= 1".into()));
        }
        for (l, (&k, layer)) in self.ranks.iter().zip(&params.layers).enumerate() {
            let max = layer.weights.rows().min(layer.weights.cols());
            if k == 0 || k > max {
                return Err(Error::RankOutOfRange {
                    rank: k,
                    rows: layer.weights.rows(),
                    cols: layer.weights.cols(),
                }
                .at_layer(l));
            }
            self.bias[l].validate(layer.weights.cols()).map_err(|e| e.at_layer(l))?;
        }
        Ok(())
    }
}

/// Per-layer factors plus refresh bookkeeping.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    factors: Vec<LowRankFactors>,
    biases: Vec<MaskBias>,
    epoch_of_last_refresh: usize,
    svd_flops: Vec<u64>,
}

impl EstimatorState {
    pub fn factors(&self) -> &[LowRankFactors] {
        &self.factors
    }

    pub fn biases(&self) -> &[MaskBias] {
        &self.biases
    }

    pub fn epoch_of_last_refresh(&self) -> usize {
        self.epoch_of_last_refresh
    }

    /// Jacobi iteration cost of the last refresh, per layer.
    pub fn svd_flops(&self) -> &[u64] {
        &self.svd_flops
    }

    fn check_against(&self, params: &NetworkParams) -> Result<()> {
        if self.factors.len() != params.num_hidden() {
            return Err(Error::Config(format!(
                "estimator state covers {} layers, network has {} hidden weight matrices",
                self.factors.len(),
                params.num_hidden()
            )));
        }
        for (l, (f, layer)) in self.factors.iter().zip(&params.layers).enumerate() {
            if f.target_shape() != layer.weights.shape() {
                let (fr, fc) = f.target_shape();
                return Err(Error::ShapeMismatch {
                    op: "estimator state stale",
                    left_rows: fr,
                    left_cols: fc,
                    right_rows: layer.weights.rows(),
                    right_cols: layer.weights.cols(),
                }
                .at_layer(l));
            }
        }
        Ok(())
    }
}

/// {0,1} mask over a batch's units for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SignMask(Matrix);

impl SignMask {
    pub fn from_matrix(m: Matrix) -> Result<SignMask> {
        if let Some(index) = m.data().iter().position(|&x| x != 0.0 && x != 1.0) {
            return Err(Error::NonFinite { index });
        }
        Ok(SignMask(m))
    }

    fn new_unchecked(m: Matrix) -> SignMask {
        SignMask(m)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn len(&self) -> usize {
        self.0.data().len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.data().is_empty()
    }

    /// Count of 1-entries.
    pub fn ones(&self) -> u64 {
        self.0.data().iter().filter(|&&x| x == 1.0).count() as u64
    }
}

/// Recompute every layer's truncated SVD from the current weights.
pub fn refresh(
    params: &NetworkParams,
    cfg: &EstimatorConfig,
    epoch: usize,
) -> Result<EstimatorState> {
    cfg.validate(params)?;
    let mut factors = Vec::with_capacity(cfg.ranks.len());
    let mut svd_flops = Vec::with_capacity(cfg.ranks.len());
    for (l, &rank) in cfg.ranks.iter().enumerate() {
        let svd = Svd::compute(&params.layers[l].weights).map_err(|e| e.at_layer(l))?;
        factors.push(svd.truncate(rank).map_err(|e| e.at_layer(l))?);
        svd_flops.push(svd.flops());
    }
    Ok(EstimatorState {
        factors,
        biases: cfg.bias.clone(),
        epoch_of_last_refresh: epoch,
        svd_flops,
    })
}

/// Mask from the low-rank sign estimate: entry (i, j) is 1 iff
/// (a U V)_{ij} - b_j >= 0, computing aU before (aU)V.
pub fn predict_mask(a: &Matrix, factors: &LowRankFactors, bias: &MaskBias) -> Result<SignMask> {
    let est = a.matmul(factors.u())?.matmul(factors.v())?;
    let (n, h) = est.shape();
    let mut mask = Matrix::zeros(n, h);
    for i in 0..n {
        for j in 0..h {
            if est.get(i, j) - bias.at(j) >= 0.0 {
                mask.set(i, j, 1.0);
            }
        }
    }
    Ok(SignMask::new_unchecked(mask))
}

/// Execution strategy for the conditional forward. Simulate computes the
/// full product and zeroes masked entries; skip computes only the active
/// dot products. Both produce bit-identical traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CondMode {
    Simulate,
    Skip,
}

/// Trace plus the per-layer masks the estimator produced.
#[derive(Debug, Clone)]
pub struct CondForward {
    pub trace: ForwardTrace,
    pub masks: Vec<SignMask>,
}

/// Sequential dot product matching the dense kernel's per-element
/// accumulation order (strictly increasing k).
#[inline]
fn sequential_dot(a: &[f64], b_col: impl Iterator<Item = f64>) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b_col) {
        acc += x * y;
    }
    acc
}

/// Feed a batch through the network with the activation estimator gating
/// every hidden layer; the output layer is always dense.
pub fn conditional_forward(
    params: &NetworkParams,
    state: &EstimatorState,
    batch: &Matrix,
    mode: CondMode,
    phase: Phase,
    dropout_p: f64,
    rng: &mut Rng,
) -> Result<CondForward> {
    state.check_against(params)?;
    if batch.cols() != params.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "conditional_forward",
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
    let mut masks = Vec::with_capacity(hidden_count);
    let mut work = Vec::with_capacity(params.num_layers());

    let mut a = batch.clone();
    for l in 0..hidden_count {
        let layer = &params.layers[l];
        let (d, h) = layer.weights.shape();
        let mask = predict_mask(&a, &state.factors[l], &state.biases[l])?;

        let z = match mode {
            CondMode::Simulate => {
                let mut z_full = a.matmul(&layer.weights)?;
                z_full.add_row_broadcast_assign(&layer.bias);
                // Masked entries are written as exact +0.0, matching skip.
                let mut z = z_full;
                for (zv, &m) in z.data_mut().iter_mut().zip(mask.as_matrix().data()) {
                    if m == 0.0 {
                        *zv = 0.0;
                    }
                }
                z
            }
            CondMode::Skip => {
                let mut z = Matrix::zeros(n, h);
                for i in 0..n {
                    let a_row = a.row(i);
                    for j in 0..h {
                        if mask.as_matrix().get(i, j) == 1.0 {
                            let col = (0..d).map(|k| layer.weights.get(k, j));
                            z.set(i, j, sequential_dot(a_row, col) + layer.bias[j]);
                        }
                    }
                }
                z
            }
        };
        work.push(LayerWork::conditional(n, d, h, state.factors[l].rank(), mask.ones()));

        let dropout = match phase {
            Phase::Train => super::network::train_dropout_gate(n, h, dropout_p, rng),
            Phase::Infer => Matrix::new_unchecked(n, h, vec![1.0; n * h]),
        };
        // Estimator mask first, dropout second; gradients route through both.
        let mut gate = dropout;
        gate.hadamard_assign(mask.as_matrix());
        let mut act = z.relu();
        act.hadamard_assign(&gate);

        hidden_pre.push(z);
        gates.push(gate);
        hidden_act.push(act.clone());
        masks.push(mask);
        a = act;
    }

    let out = params.layers.last().unwrap();
    let mut logits = a.matmul(&out.weights)?;
    logits.add_row_broadcast_assign(&out.bias);
    work.push(LayerWork::dense(n, out.weights.rows(), out.weights.cols()));
    let (probabilities, _) = softmax(&logits);

    Ok(CondForward {
        trace: ForwardTrace {
            input: batch.clone(),
            hidden_pre,
            hidden_act,
            gates,
            logits,
            probabilities,
            work,
        },
        masks,
    })
}

/// Fraction of entries where sign(aUV) agrees with sign(aW), zero counted
/// positive on both sides.
pub fn sign_agreement(a: &Matrix, w: &Matrix, factors: &LowRankFactors) -> Result<f64> {
    let est = a.matmul(factors.u())?.matmul(factors.v())?;
    let truth = a.matmul(w)?;
    let mut agree = 0usize;
    for (&e, &t) in est.data().iter().zip(truth.data()) {
        if (e >= 0.0) == (t >= 0.0) {
            agree += 1;
        }
    }
    Ok(agree as f64 / truth.data().len() as f64)
}

/// Per-layer mismatch rate 1 - sign_agreement of the (possibly stale)
/// factors against the current weights, measured on a held-out batch fed
/// through the estimator-gated network in inference mode.
pub fn estimator_drift(
    params: &NetworkParams,
    state: &EstimatorState,
    heldout: &Matrix,
) -> Result<Vec<f64>> {
    state.check_against(params)?;
    let mut rng = Rng::new(0); // infer phase draws nothing
    let cond = conditional_forward(
        params,
        state,
        heldout,
        CondMode::Simulate,
        Phase::Infer,
        0.0,
        &mut rng,
    )?;
    let mut drift = Vec::with_capacity(params.num_hidden());
    for l in 0..params.num_hidden() {
        let a = if l == 0 {
            heldout
        } else {
            &cond.trace.hidden_act[l - 1]
        };
        let agreement = sign_agreement(a, &params.layers[l].weights, &state.factors[l])?;
        drift.push(1.0 - agreement);
    }
    Ok(drift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{forward, init_network};
    use crate::svd::truncated_svd;

    fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.next_gaussian()).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn bits(m: &Matrix) -> Vec<u64> {
        m.data().iter().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn refresh_full_rank_reconstructs() {
        let params = init_network(&[6, 5, 4], 0.3, 9).unwrap();
        let cfg = EstimatorConfig::with_ranks(vec![5]);
        let state = refresh(&params, &cfg, 0).unwrap();
        for (f, layer) in state.factors().iter().zip(&params.layers) {
            let rel = layer
                .weights
                .sub(&f.reconstruct())
                .unwrap()
                .frobenius_norm()
                / layer.weights.frobenius_norm();
            assert!(rel <= 1e-8, "rel {rel}");
        }
    }

    #[test]
    fn refresh_factor_shapes() {
        let params = init_network(&[30, 40, 20, 10], 0.05, 3).unwrap();
        let cfg = EstimatorConfig::with_ranks(vec![5, 4]);
        let state = refresh(&params, &cfg, 0).unwrap();
        let shapes: Vec<_> = state
            .factors()
            .iter()
            .map(|f| (f.u().shape(), f.v().shape()))
            .collect();
        assert_eq!(shapes, vec![((30, 5), (5, 40)), ((40, 4), (4, 20))]);
    }

    #[test]
    fn refresh_is_deterministic() {
        let params = init_network(&[8, 6, 5, 4], 0.2, 21).unwrap();
        let cfg = EstimatorConfig::with_ranks(vec![3, 2]);
        let s1 = refresh(&params, &cfg, 0).unwrap();
        let s2 = refresh(&params, &cfg, 0).unwrap();
        for (f1, f2) in s1.factors().iter().zip(s2.factors()) {
            assert_eq!(f1.u(), f2.u());
            assert_eq!(f1.v(), f2.v());
        }
    }

    #[test]
    fn refresh_rejects_bad_ranks() {
        let params = init_network(&[8, 6, 4], 0.2, 21).unwrap();
        assert!(refresh(&params, &EstimatorConfig::with_ranks(vec![3, 2]), 0).is_err());
        assert!(refresh(&params, &EstimatorConfig::with_ranks(vec![9]), 0).is_err());
        assert!(refresh(&params, &EstimatorConfig::with_ranks(vec![0]), 0).is_err());
    }

    #[test]
    fn mask_from_exact_identity_factors() {
        let w = Matrix::identity(2);
        let f = truncated_svd(&w, 2).unwrap();
        let a = Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
        let mask = predict_mask(&a, &f, &MaskBias::Scalar(0.0)).unwrap();
        assert_eq!(mask.as_matrix().data(), &[1.0, 0.0]);
    }

    #[test]
    fn saturated_bias_masks_everything() {
        let mut rng = Rng::new(14);
        let w = random_matrix(&mut rng, 5, 4);
        let a = random_matrix(&mut rng, 3, 5);
        let f = truncated_svd(&w, 2).unwrap();
        let est = a.matmul(f.u()).unwrap().matmul(f.v()).unwrap();
        let big = est.data().iter().fold(0.0f64, |m, x| m.max(x.abs())) + 1.0;
        let mask = predict_mask(&a, &f, &MaskBias::Scalar(big)).unwrap();
        assert_eq!(mask.ones(), 0);
    }

    #[test]
    fn mask_matches_explicit_product_oracle() {
        let mut rng = Rng::new(2024);
        let w = random_matrix(&mut rng, 7, 6);
        let a = random_matrix(&mut rng, 4, 7);
        let f = truncated_svd(&w, 2).unwrap();
        let mask = predict_mask(&a, &f, &MaskBias::Scalar(0.0)).unwrap();
        let product = a.matmul(&f.reconstruct()).unwrap();
        for i in 0..4 {
            for j in 0..6 {
                let expect = if product.get(i, j) >= 0.0 { 1.0 } else { 0.0 };
                assert_eq!(mask.as_matrix().get(i, j), expect, "({i},{j})");
            }
        }
    }

    #[test]
    fn bias_monotonically_shrinks_mask() {
        let mut rng = Rng::new(30);
        let w = random_matrix(&mut rng, 10, 8);
        let a = random_matrix(&mut rng, 6, 10);
        let f = truncated_svd(&w, 4).unwrap();
        let mut prev = u64::MAX;
        for step in 0..5 {
            let b = step as f64 * 0.5;
            let ones = predict_mask(&a, &f, &MaskBias::Scalar(b)).unwrap().ones();
            assert!(ones <= prev);
            prev = ones;
        }
    }

    /// Zero-bias network: the sign estimate targets exactly the computed
    /// pre-activation, so full-rank gating is invisible.
    #[test]
    fn full_rank_identity_on_zero_bias_net() {
        let mut params = init_network(&[9, 7, 5], 0.4, 17).unwrap();
        for layer in params.layers.iter_mut() {
            layer.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        let cfg = EstimatorConfig::with_ranks(vec![7]);
        let state = refresh(&params, &cfg, 0).unwrap();
        let mut rng = Rng::new(6);
        let batch = random_matrix(&mut rng, 5, 9);

        let mut r1 = Rng::new(777);
        let mut r2 = Rng::new(777);
        let plain = forward(&params, &batch, Phase::Train, 0.5, &mut r1).unwrap();
        let cond = conditional_forward(
            &params,
            &state,
            &batch,
            CondMode::Simulate,
            Phase::Train,
            0.5,
            &mut r2,
        )
        .unwrap();
        for (a, b) in plain.hidden_act.iter().zip(&cond.trace.hidden_act) {
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(bits(&plain.logits), bits(&cond.trace.logits));
        assert_eq!(bits(&plain.probabilities), bits(&cond.trace.probabilities));
    }

    #[test]
    fn simulate_and_skip_are_bit_identical() {
        let params = init_network(&[12, 10, 8, 6], 0.3, 41).unwrap();
        let cfg = EstimatorConfig::with_ranks(vec![3, 2]);
        let state = refresh(&params, &cfg, 0).unwrap();
        let mut rng = Rng::new(8);
        let batch = random_matrix(&mut rng, 7, 12);

        let mut r1 = Rng::new(55);
        let mut r2 = Rng::new(55);
        let sim = conditional_forward(
            &params, &state, &batch, CondMode::Simulate, Phase::Train, 0.5, &mut r1,
        )
        .unwrap();
        let skip = conditional_forward(
            &params, &state, &batch, CondMode::Skip, Phase::Train, 0.5, &mut r2,
        )
        .unwrap();
        for (a, b) in sim.trace.hidden_pre.iter().zip(&skip.trace.hidden_pre) {
            assert_eq!(bits(a), bits(b));
        }
        for (a, b) in sim.trace.hidden_act.iter().zip(&skip.trace.hidden_act) {
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(bits(&sim.trace.logits), bits(&skip.trace.logits));
        assert_eq!(
            bits(&sim.trace.probabilities),
            bits(&skip.trace.probabilities)
        );
        for (a, b) in sim.masks.iter().zip(&skip.masks) {
            assert_eq!(a.as_matrix().data(), b.as_matrix().data());
        }
        assert_eq!(sim.trace.work, skip.trace.work);
    }

    #[test]
    fn rank_one_trace_matches_explicit_mask_oracle() {
        let params = init_network(&[20, 30, 10], 0.2, 63).unwrap();
        let cfg = EstimatorConfig::with_ranks(vec![1]);
        let state = refresh(&params, &cfg, 0).unwrap();
        let mut rng = Rng::new(12);
        let batch = random_matrix(&mut rng, 4, 20);
        let mut r = Rng::new(1);
        let cond = conditional_forward(
            &params, &state, &batch, CondMode::Skip, Phase::Infer, 0.0, &mut r,
        )
        .unwrap();

        // Oracle: full products, explicit mask application.
        let f = &state.factors()[0];
        let est = batch.matmul(&f.u().matmul(f.v()).unwrap()).unwrap();
        let mut z = batch.matmul(&params.layers[0].weights).unwrap();
        z.add_row_broadcast_assign(&params.layers[0].bias);
        for i in 0..4 {
            for j in 0..30 {
                let masked = est.get(i, j) < 0.0;
                let expect = if masked { 0.0 } else { z.get(i, j).max(0.0) };
                let got = cond.trace.hidden_act[0].get(i, j);
                assert!(
                    (got - expect).abs() < 1e-12,
                    "({i},{j}): {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn agreement_exact_factors_is_one_and_negated_is_zero() {
        let mut rng = Rng::new(70);
        let w = random_matrix(&mut rng, 9, 7);
        let a = random_matrix(&mut rng, 5, 9);
        let f = truncated_svd(&w, 7).unwrap();
        assert_eq!(sign_agreement(&a, &w, &f).unwrap(), 1.0);

        let mut neg = w.clone();
        neg.scale_assign(-1.0);
        let f_neg = truncated_svd(&neg, 7).unwrap();
        assert_eq!(sign_agreement(&a, &w, &f_neg).unwrap(), 0.0);
    }

    /// Averaged over seeds, agreement is nondecreasing in rank up to a
    /// 0.01 per-step tolerance.
    #[test]
    fn agreement_trends_up_with_rank() {
        let mut rng = Rng::new(91);
        let seeds = 6;
        let mut mean_curve = vec![0.0f64; 9];
        for _ in 0..seeds {
            let w = random_matrix(&mut rng, 12, 9);
            let a = random_matrix(&mut rng, 8, 12);
            let svd = Svd::compute(&w).unwrap();
            for k in 1..=9 {
                let f = svd.truncate(k).unwrap();
                let agree = sign_agreement(&a, &w, &f).unwrap();
                // Brute-force elementwise cross-check.
                let est = a.matmul(&f.reconstruct()).unwrap();
                let truth = a.matmul(&w).unwrap();
                let brute = est
                    .data()
                    .iter()
                    .zip(truth.data())
                    .filter(|(&e, &t)| (e >= 0.0) == (t >= 0.0))
                    .count() as f64
                    / truth.data().len() as f64;
                assert!((agree - brute).abs() < 1e-15);
                mean_curve[k - 1] += agree / seeds as f64;
            }
        }
        for w in mean_curve.windows(2) {
            assert!(w[1] >= w[0] - 0.01, "curve dropped: {mean_curve:?}");
        }
        assert!(mean_curve[8] > 1.0 - 1e-12, "full rank must agree");
    }

    #[test]
    fn drift_zero_after_full_rank_refresh() {
        let params = init_network(&[10, 8, 6], 0.3, 5).unwrap();
        let cfg = EstimatorConfig::with_ranks(vec![8]);
        let state = refresh(&params, &cfg, 0).unwrap();
        let mut rng = Rng::new(44);
        let probe = random_matrix(&mut rng, 6, 10);
        let drift = estimator_drift(&params, &state, &probe).unwrap();
        for (l, d) in drift.iter().enumerate() {
            assert_eq!(*d, 0.0, "layer {l}");
        }
    }

    #[test]
    fn drift_grows_under_weight_perturbation() {
        let mut params = init_network(&[10, 8, 6], 0.3, 5).unwrap();
        let cfg = EstimatorConfig::with_ranks(vec![4]);
        let state = refresh(&params, &cfg, 0).unwrap();
        let mut rng = Rng::new(44);
        let probe = random_matrix(&mut rng, 6, 10);
        let before = estimator_drift(&params, &state, &probe).unwrap();

        let mut noise_rng = Rng::new(99);
        for layer in params.layers.iter_mut() {
            let (r, c) = layer.weights.shape();
            let noise = random_matrix(&mut noise_rng, r, c);
            layer.weights.add_scaled_assign(2.0, &noise);
        }
        let after = estimator_drift(&params, &state, &probe).unwrap();
        let sum_before: f64 = before.iter().sum();
        let sum_after: f64 = after.iter().sum();
        assert!(
            sum_after > sum_before,
            "drift {sum_after} not above {sum_before}"
        );
    }

    #[test]
    fn stale_state_rejected() {
        let params_a = init_network(&[10, 8, 6], 0.3, 5).unwrap();
        let params_b = init_network(&[11, 8, 6], 0.3, 5).unwrap();
        let cfg = EstimatorConfig::with_ranks(vec![4]);
        let state = refresh(&params_a, &cfg, 0).unwrap();
        let batch = Matrix::zeros(2, 11);
        let mut rng = Rng::new(1);
        assert!(conditional_forward(
            &params_b,
            &state,
            &batch,
            CondMode::Simulate,
            Phase::Infer,
            0.0,
            &mut rng
        )
        .is_err());
    }
}
