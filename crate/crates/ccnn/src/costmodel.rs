//! Analytic and measured floating-point operation accounting.
//!
//! Counting convention: one multiply = 1, one add = 1, and each
//! activation-function evaluation (ReLU max, sign threshold, softmax
//! entry) = 1 per element. Bias additions are not modeled, matching the
//! analytic layer costs. "Measured" counts are derived from the exact
//! loop extents the kernels execute (rows, active-column counts), so the
//! dense kernel reports multiplicity*(2d-1)*h + multiplicity*h per
//! example by construction.

use crate::estimator::SignMask;

/// Analytic cost parameters for one layer.
#[derive(Debug, Clone)]
pub struct LayerCost {
    /// Multiplicity N; 1 for a fully-connected layer.
    pub multiplicity: u64,
    /// Input width d.
    pub input_dim: u64,
    /// Output width h.
    pub output_dim: u64,
    /// Estimator rank k; 0 means no estimator (analytic degenerate form).
    pub rank: u64,
    /// Measured fraction of active units, in [0, 1].
    pub alpha: f64,
    /// SVD refreshes per feedforward.
    pub beta: f64,
    /// Multiplier for the d*h*min(d,h) SVD cost term.
    pub svd_cost_constant: f64,
}

impl LayerCost {
    fn svd_term(&self) -> f64 {
        let d = self.input_dim as f64;
        let h = self.output_dim as f64;
        self.beta * self.svd_cost_constant * d * h * d.min(h)
    }
}

/// Operations for one example through a dense layer: N(2d-1)h + Nh.
pub fn flops_dense(multiplicity: u64, input_dim: u64, output_dim: u64) -> u64 {
    multiplicity * (2 * input_dim - 1) * output_dim + multiplicity * output_dim
}

/// Operations for one example through an estimator-gated layer:
/// N(2d-1)k + N(2k-1)h + Nh + alpha*N(2d-1)h + alpha*Nh
/// + beta * svd_cost_constant * d*h*min(d,h).
pub fn flops_conditional(cost: &LayerCost) -> f64 {
    let n = cost.multiplicity as f64;
    let d = cost.input_dim as f64;
    let h = cost.output_dim as f64;
    let k = cost.rank as f64;
    n * (2.0 * d - 1.0) * k
        + n * (2.0 * k - 1.0) * h
        + n * h
        + cost.alpha * n * (2.0 * d - 1.0) * h
        + cost.alpha * n * h
        + cost.svd_term()
}

/// Relative per-layer reduction:
/// 2dh / (k(2d+2h-1) + 2*alpha*dh + beta * svd_cost_constant * d*h*min(d,h)).
pub fn reduction_ratio(cost: &LayerCost) -> f64 {
    let d = cost.input_dim as f64;
    let h = cost.output_dim as f64;
    let k = cost.rank as f64;
    2.0 * d * h / (k * (2.0 * d + 2.0 * h - 1.0) + 2.0 * cost.alpha * d * h + cost.svd_term())
}

/// SVD refreshes per feedforward: with once-per-`refresh_period`-epochs
/// updates, one refresh amortizes over `train_size/batch_size` batches
/// per epoch.
pub fn refresh_ratio(batch_size: usize, train_size: usize, refresh_period: usize) -> f64 {
    batch_size as f64 / (train_size as f64 * refresh_period as f64)
}

/// Mean fraction of 1-entries over a sequence of masks for one layer.
pub fn measure_alpha(masks: &[SignMask]) -> f64 {
    let mut ones = 0u64;
    let mut total = 0u64;
    for m in masks {
        ones += m.ones();
        total += m.len() as u64;
    }
    if total == 0 {
        return 0.0;
    }
    ones as f64 / total as f64
}

/// Work executed for one layer of one batch, reported by the kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerWork {
    pub rows: u64,
    pub input_dim: u64,
    pub output_dim: u64,
    /// 0 for a dense layer.
    pub rank: u64,
    /// Mask entries equal to 1 (rows*output_dim for a dense layer).
    pub active: u64,
    /// Operations executed under the counting convention.
    pub flops: u64,
}

impl LayerWork {
    /// Dense layer: every output unit is computed.
    pub fn dense(rows: usize, input_dim: usize, output_dim: usize) -> LayerWork {
        let (r, d, h) = (rows as u64, input_dim as u64, output_dim as u64);
        LayerWork {
            rows: r,
            input_dim: d,
            output_dim: h,
            rank: 0,
            active: r * h,
            flops: r * ((2 * d - 1) * h + h),
        }
    }

    /// Estimator-gated layer: mask prediction plus only the active dots.
    pub fn conditional(
        rows: usize,
        input_dim: usize,
        output_dim: usize,
        rank: usize,
        active: u64,
    ) -> LayerWork {
        let (r, d, h, k) = (rows as u64, input_dim as u64, output_dim as u64, rank as u64);
        let mask_prediction = r * ((2 * d - 1) * k + (2 * k - 1) * h + h);
        LayerWork {
            rows: r,
            input_dim: d,
            output_dim: h,
            rank: k,
            active,
            flops: mask_prediction + active * 2 * d,
        }
    }
}

/// Per-layer ledger row accumulated over an epoch.
#[derive(Debug, Clone, Default)]
pub struct LayerLedger {
    pub input_dim: u64,
    pub output_dim: u64,
    pub rank: u64,
    pub examples: u64,
    pub active: u64,
    pub units: u64,
    /// Operations the kernels actually executed.
    pub measured: u64,
    /// Operations the Jacobi SVD executed refreshing this layer's factors.
    pub measured_svd: u64,
}

impl LayerLedger {
    pub fn record(&mut self, work: &LayerWork) {
        self.input_dim = work.input_dim;
        self.output_dim = work.output_dim;
        self.rank = work.rank;
        self.examples += work.rows;
        self.active += work.active;
        self.units += work.rows * work.output_dim;
        self.measured += work.flops;
    }

    /// Mean fraction of units computed.
    pub fn alpha(&self) -> f64 {
        if self.units == 0 {
            1.0
        } else {
            self.active as f64 / self.units as f64
        }
    }
}

/// Whole-network FLOP ledger over one epoch.
#[derive(Debug, Clone, Default)]
pub struct FlopLedger {
    pub layers: Vec<LayerLedger>,
    /// Refreshes per feedforward for the epoch.
    pub beta: f64,
    pub svd_cost_constant: f64,
}

impl FlopLedger {
    pub fn new(layer_count: usize, beta: f64, svd_cost_constant: f64) -> FlopLedger {
        FlopLedger {
            layers: vec![LayerLedger::default(); layer_count],
            beta,
            svd_cost_constant,
        }
    }

    /// Analytic dense cost per example, summed over layers.
    pub fn dense_flops_per_example(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| flops_dense(1, l.input_dim, l.output_dim) as f64)
            .sum()
    }

    /// Analytic conditional cost per example with each layer's measured
    /// alpha; dense layers contribute their dense cost.
    pub fn conditional_flops_per_example(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                if l.rank == 0 {
                    flops_dense(1, l.input_dim, l.output_dim) as f64
                } else {
                    flops_conditional(&LayerCost {
                        multiplicity: 1,
                        input_dim: l.input_dim,
                        output_dim: l.output_dim,
                        rank: l.rank,
                        alpha: l.alpha(),
                        beta: self.beta,
                        svd_cost_constant: self.svd_cost_constant,
                    })
                }
            })
            .sum()
    }

    /// Relative speedup: sum of dense layer costs over sum of conditional
    /// layer costs.
    pub fn network_speedup(&self) -> f64 {
        self.dense_flops_per_example() / self.conditional_flops_per_example()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    #[test]
    fn dense_hand_values() {
        assert_eq!(flops_dense(1, 784, 1000), 1_567_000 + 1_000);
        assert_eq!(flops_dense(1, 1, 1), 2);
    }

    #[test]
    fn conditional_hand_value() {
        let cost = LayerCost {
            multiplicity: 1,
            input_dim: 1000,
            output_dim: 1000,
            rank: 50,
            alpha: 0.1,
            beta: 0.0,
            svd_cost_constant: 1.0,
        };
        assert!((flops_conditional(&cost) - 399_950.0).abs() < 1e-9);
    }

    #[test]
    fn conditional_reduces_to_dense_when_estimator_absent() {
        let cost = LayerCost {
            multiplicity: 1,
            input_dim: 784,
            output_dim: 500,
            rank: 0,
            alpha: 1.0,
            beta: 0.0,
            svd_cost_constant: 1.0,
        };
        assert_eq!(flops_conditional(&cost), flops_dense(1, 784, 500) as f64);
    }

    #[test]
    fn reduction_ratio_hand_values() {
        let unity = LayerCost {
            multiplicity: 1,
            input_dim: 300,
            output_dim: 200,
            rank: 0,
            alpha: 1.0,
            beta: 0.0,
            svd_cost_constant: 1.0,
        };
        assert!((reduction_ratio(&unity) - 1.0).abs() < 1e-12);

        let paper = LayerCost {
            multiplicity: 1,
            input_dim: 1000,
            output_dim: 1000,
            rank: 50,
            alpha: 0.1,
            beta: 0.0,
            svd_cost_constant: 1.0,
        };
        let expect = 2_000_000.0 / 399_950.0;
        assert!((reduction_ratio(&paper) - expect).abs() < 1e-9);
    }

    #[test]
    fn beta_worked_example() {
        assert_eq!(refresh_ratio(250, 50_000, 1), 0.005);
    }

    #[test]
    fn alpha_extremes_and_popcount() {
        let ones = SignMask::from_matrix(Matrix::from_vec(2, 3, vec![1.0; 6]).unwrap()).unwrap();
        let zeros = SignMask::from_matrix(Matrix::zeros(2, 3)).unwrap();
        assert_eq!(measure_alpha(&[ones.clone()]), 1.0);
        assert_eq!(measure_alpha(&[zeros.clone()]), 0.0);

        let mixed =
            SignMask::from_matrix(Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap())
                .unwrap();
        let masks = [ones, zeros, mixed];
        let mut popcount = 0usize;
        let mut total = 0usize;
        for m in &masks {
            popcount += m.as_matrix().data().iter().filter(|&&x| x == 1.0).count();
            total += m.len();
        }
        assert_eq!(measure_alpha(&masks), popcount as f64 / total as f64);
    }

    #[test]
    fn speedup_single_and_homogeneous_layers() {
        let mut ledger = FlopLedger::new(1, 0.0, 1.0);
        ledger.layers[0] = LayerLedger {
            input_dim: 1000,
            output_dim: 1000,
            rank: 50,
            examples: 10,
            active: 1_000,
            units: 10_000,
            measured: 0,
            measured_svd: 0,
        };
        let per_layer = reduction_ratio(&LayerCost {
            multiplicity: 1,
            input_dim: 1000,
            output_dim: 1000,
            rank: 50,
            alpha: 0.1,
            beta: 0.0,
            svd_cost_constant: 1.0,
        });
        // Eq. 10 drops the +-Nh low-order terms, so agreement is loose.
        assert!((ledger.network_speedup() - per_layer).abs() / per_layer < 1e-2);

        let mut two = FlopLedger::new(2, 0.0, 1.0);
        two.layers[0] = ledger.layers[0].clone();
        two.layers[1] = ledger.layers[0].clone();
        assert!((two.network_speedup() - ledger.network_speedup()).abs() < 1e-12);
    }
}
