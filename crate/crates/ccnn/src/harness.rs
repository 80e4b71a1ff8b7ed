//! Experiment orchestration: data preparation, the training loop with
//! per-epoch estimator refresh, metrics emission, and rank sweeps.

use crate::checkpoint;
use crate::config::ExperimentConfig;
use crate::costmodel::{refresh_ratio, FlopLedger};
use crate::data::{
    apply_scaling, batch_indices, fit_scaling, load_idx, split_and_shuffle, Dataset, SplitTag,
};
use crate::error::{Error, Result};
use crate::estimator::{conditional_forward, estimator_drift, refresh, EstimatorState};
use crate::linalg::Matrix;
use crate::network::{
    backward_update, evaluate, forward, init_network, loss, lr_at_epoch, momentum_at_epoch,
    NetworkParams, Phase,
};
use crate::rng::{streams, Rng};
use std::fmt::Write as _;
use std::path::Path;

/// Scaled train/validation/test splits.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

/// Locate and scale MNIST per the configuration: the training file is
/// split into train/validation, scaling is fit on the training split
/// only, and the same parameters apply to all splits.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let dir = &cfg.data_dir;
    let train_raw = load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )?;
    let mut test = load_idx(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
    )?;
    test.split = SplitTag::Test;
    let (train, valid) = split_and_shuffle(&train_raw, cfg.train_size, cfg.valid_size, cfg.seed)?;
    let scaling = fit_scaling(&train)?;
    Ok(PreparedData {
        train: apply_scaling(&train, &scaling),
        valid: apply_scaling(&valid, &scaling),
        test: apply_scaling(&test, &scaling),
    })
}

/// Metrics for one completed epoch.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_err: Option<f64>,
    pub test_err: Option<f64>,
    pub lr: f64,
    pub momentum: f64,
    /// Measured active fraction per hidden layer (1.0 for control runs).
    pub alpha: Vec<f64>,
    /// Sign agreement per hidden layer on the probe batch.
    pub agreement: Vec<f64>,
    pub flops_dense: f64,
    pub flops_cond: f64,
    pub speedup: f64,
}

/// Estimator drift sampled on the probe batch during training.
#[derive(Debug, Clone)]
pub struct DriftRecord {
    pub epoch: usize,
    pub batch: usize,
    pub drift: Vec<f64>,
}

/// Output of one training run.
#[derive(Debug)]
pub struct TrainingRun {
    pub params: NetworkParams,
    pub records: Vec<EpochRecord>,
    pub drift: Vec<DriftRecord>,
}

/// The drift/agreement probe: the first validation batch, falling back
/// to the first training batch when there is no validation split.
fn probe_batch(cfg: &ExperimentConfig, data: &PreparedData) -> Matrix {
    let src = if data.valid.is_empty() {
        &data.train
    } else {
        &data.valid
    };
    let n = cfg.batch_size.min(src.len());
    let rows: Vec<Vec<f64>> = (0..n).map(|i| src.features.row(i).to_vec()).collect();
    Matrix::from_rows(&rows).expect("probe rows share a width")
}

/// Minibatch SGD over the configured epochs, refreshing the estimator
/// factors once per refresh period and recording metrics.
pub fn run_training(cfg: &ExperimentConfig, data: &PreparedData) -> Result<TrainingRun> {
    cfg.validate()?;
    let mut params = init_network(&cfg.arch, cfg.weight_sigma, cfg.seed)?;
    let mut dropout_rng = Rng::from_stream(cfg.seed, streams::DROPOUT);
    let mut state: Option<EstimatorState> = None;
    let probe = probe_batch(cfg, data);
    let hidden = params.num_hidden();
    let beta = if cfg.estimator.is_some() {
        refresh_ratio(
            cfg.batch_size,
            data.train.len().max(1),
            cfg.estimator.as_ref().unwrap().refresh_period,
        )
    } else {
        0.0
    };

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut drift_records = Vec::new();

    for epoch in 0..cfg.epochs {
        let lr = lr_at_epoch(&cfg.schedule, epoch);
        let momentum = momentum_at_epoch(&cfg.schedule, epoch);
        let mut ledger = FlopLedger::new(params.num_layers(), beta, 1.0);

        if let Some(est_cfg) = &cfg.estimator {
            if epoch % est_cfg.refresh_period == 0 {
                let fresh =
                    refresh(&params, est_cfg, epoch).map_err(|e| e.at_batch(epoch, 0))?;
                for (l, &f) in fresh.svd_flops().iter().enumerate() {
                    ledger.layers[l].measured_svd += f;
                }
                state = Some(fresh);
            }
        }

        let batches = batch_indices(data.train.len(), cfg.batch_size, cfg.seed, epoch);
        let mut loss_sum = 0.0;
        for (bi, idx) in batches.iter().enumerate() {
            let step = || -> Result<f64> {
                let batch = data.train.subset(idx, SplitTag::Train);
                let labels = &batch.labels;
                let trace = match (&cfg.estimator, &state) {
                    (Some(_), Some(st)) => {
                        conditional_forward(
                            &params,
                            st,
                            &batch.features,
                            cfg.mode,
                            Phase::Train,
                            cfg.reg.dropout_p,
                            &mut dropout_rng,
                        )?
                        .trace
                    }
                    _ => forward(
                        &params,
                        &batch.features,
                        Phase::Train,
                        cfg.reg.dropout_p,
                        &mut dropout_rng,
                    )?,
                };
                for (l, w) in trace.work.iter().enumerate() {
                    ledger.layers[l].record(w);
                }
                let value = loss(&trace, labels, &params, &cfg.reg)?;
                backward_update(&mut params, &trace, labels, &cfg.reg, lr, momentum)?;
                Ok(value)
            };
            loss_sum += step().map_err(|e| e.at_batch(epoch, bi))?;

            if let Some(st) = &state {
                if cfg.drift_every > 0 && bi % cfg.drift_every == 0 {
                    let drift =
                        estimator_drift(&params, st, &probe).map_err(|e| e.at_batch(epoch, bi))?;
                    drift_records.push(DriftRecord {
                        epoch,
                        batch: bi,
                        drift,
                    });
                }
            }
        }

        let agreement = match &state {
            Some(st) => estimator_drift(&params, st, &probe)?
                .into_iter()
                .map(|d| 1.0 - d)
                .collect(),
            None => vec![1.0; hidden],
        };
        let alpha: Vec<f64> = match &state {
            Some(_) => (0..hidden).map(|l| ledger.layers[l].alpha()).collect(),
            None => vec![1.0; hidden],
        };
        let valid_err = if data.valid.is_empty() {
            None
        } else {
            Some(evaluate(&params, &data.valid.features, &data.valid.labels)?)
        };
        let test_err = if epoch + 1 == cfg.epochs {
            Some(evaluate(&params, &data.test.features, &data.test.labels)?)
        } else {
            None
        };

        records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches.len().max(1) as f64,
            valid_err,
            test_err,
            lr,
            momentum,
            alpha,
            agreement,
            flops_dense: ledger.dense_flops_per_example(),
            flops_cond: ledger.conditional_flops_per_example(),
            speedup: ledger.network_speedup(),
        });
    }

    Ok(TrainingRun {
        params,
        records,
        drift: drift_records,
    })
}

fn push_opt(s: &mut String, v: Option<f64>) {
    if let Some(x) = v {
        let _ = write!(s, "{x}");
    }
}

/// Fixed-schema metrics CSV; one row per completed epoch.
pub fn emit_metrics(records: &[EpochRecord], hidden_layers: usize) -> String {
    let mut s = String::from("epoch,train_loss,valid_err,test_err,lr,momentum");
    for l in 1..=hidden_layers {
        let _ = write!(s, ",alpha_l{l}");
    }
    for l in 1..=hidden_layers {
        let _ = write!(s, ",agree_l{l}");
    }
    s.push_str(",flops_dense,flops_cond,speedup\n");
    for r in records {
        let _ = write!(s, "{},{},", r.epoch, r.train_loss);
        push_opt(&mut s, r.valid_err);
        s.push(',');
        push_opt(&mut s, r.test_err);
        let _ = write!(s, ",{},{}", r.lr, r.momentum);
        for l in 0..hidden_layers {
            let _ = write!(s, ",{}", r.alpha.get(l).copied().unwrap_or(1.0));
        }
        for l in 0..hidden_layers {
            let _ = write!(s, ",{}", r.agreement.get(l).copied().unwrap_or(1.0));
        }
        let _ = writeln!(s, ",{},{},{}", r.flops_dense, r.flops_cond, r.speedup);
    }
    s
}

/// Drift samples CSV: epoch,batch,drift_l1..drift_lL.
pub fn emit_drift(drift: &[DriftRecord], hidden_layers: usize) -> String {
    let mut s = String::from("epoch,batch");
    for l in 1..=hidden_layers {
        let _ = write!(s, ",drift_l{l}");
    }
    s.push('\n');
    for r in drift {
        let _ = write!(s, "{},{}", r.epoch, r.batch);
        for l in 0..hidden_layers {
            let _ = write!(s, ",{}", r.drift.get(l).copied().unwrap_or(0.0));
        }
        s.push('\n');
    }
    s
}

/// Write metrics.csv, drift.csv, checkpoint.ccnn and the effective
/// config into the output directory.
pub fn save_run(cfg: &ExperimentConfig, run: &TrainingRun, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let hidden = cfg.hidden_matrix_count();
    std::fs::write(out_dir.join("metrics.csv"), emit_metrics(&run.records, hidden))?;
    if cfg.estimator.is_some() && cfg.drift_every > 0 {
        std::fs::write(out_dir.join("drift.csv"), emit_drift(&run.drift, hidden))?;
    }
    checkpoint::save(&run.params, &out_dir.join("checkpoint.ccnn"))?;
    std::fs::write(out_dir.join("config.txt"), cfg.render())?;
    Ok(())
}

/// One sweep result row.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub label: String,
    pub test_err: f64,
    pub mean_alpha: f64,
    pub speedup: f64,
}

/// Outcome per configuration; failures are recorded and the sweep
/// continues.
#[derive(Debug)]
pub struct SweepOutcome {
    pub label: String,
    pub result: Result<SweepRow>,
}

pub fn rank_label(ranks: &Option<Vec<usize>>) -> String {
    match ranks {
        None => "control".to_string(),
        Some(ks) => ks
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join("-"),
    }
}

/// Train one full run per rank configuration with the shared seed.
pub fn run_rank_sweep(
    base: &ExperimentConfig,
    rank_lists: &[Option<Vec<usize>>],
    data: &PreparedData,
) -> Vec<SweepOutcome> {
    rank_lists
        .iter()
        .map(|ranks| {
            let label = rank_label(ranks);
            let mut cfg = base.clone();
            cfg.estimator = ranks.clone().map(|ks| {
                let mut est = crate::estimator::EstimatorConfig::with_ranks(ks);
                if let Some(base_est) = &base.estimator {
                    est.refresh_period = base_est.refresh_period;
                }
                est
            });
            let result = run_training(&cfg, data).and_then(|run| {
                let test_err = match run.records.last().and_then(|r| r.test_err) {
                    Some(e) => e,
                    None => evaluate(&run.params, &data.test.features, &data.test.labels)?,
                };
                let (mean_alpha, speedup) = match run.records.last() {
                    Some(r) if !r.alpha.is_empty() => (
                        r.alpha.iter().sum::<f64>() / r.alpha.len() as f64,
                        r.speedup,
                    ),
                    _ => (1.0, 1.0),
                };
                Ok(SweepRow {
                    label: label.clone(),
                    test_err,
                    mean_alpha,
                    speedup,
                })
            });
            SweepOutcome { label, result }
        })
        .collect()
}

/// Sweep results as a small fixed-header CSV.
pub fn emit_sweep(outcomes: &[SweepOutcome]) -> String {
    let mut s = String::from("ranks,test_err,mean_alpha,speedup\n");
    for o in outcomes {
        match &o.result {
            Ok(row) => {
                let _ = writeln!(
                    s,
                    "{},{},{},{}",
                    row.label, row.test_err, row.mean_alpha, row.speedup
                );
            }
            Err(e) => {
                let _ = writeln!(s, "{},error: {e},,", o.label);
            }
        }
    }
    s
}
