//! Experiment configuration: flat `key = value` lines, `#` comments,
//! comma-separated lists.

use crate::error::{Error, Result};
use crate::estimator::{CondMode, EstimatorConfig, MaskBias};
use crate::network::{RegularizerConfig, TrainSchedule};
use std::path::{Path, PathBuf};

/// Everything a training run needs.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub arch: Vec<usize>,
    pub weight_sigma: f64,
    pub schedule: TrainSchedule,
    pub reg: RegularizerConfig,
    /// None trains the control network.
    pub estimator: Option<EstimatorConfig>,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Sizes of the train/validation split carved from the training file.
    pub train_size: usize,
    pub valid_size: usize,
    pub mode: CondMode,
    /// Probe the estimator drift every this many minibatches; 0 disables.
    pub drift_every: usize,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            arch: vec![784, 1000, 600, 400, 10],
            weight_sigma: 0.05,
            schedule: TrainSchedule {
                gamma0: 0.25,
                lambda_decay: 0.99,
                nu0: 0.5,
                nu_max: 0.8,
                beta_m: 1.05,
            },
            reg: RegularizerConfig {
                l1_activation: 1e-5,
                l2_weight: 5e-5,
                dropout_p: 0.5,
                max_norm: 25.0,
            },
            estimator: None,
            epochs: 50,
            batch_size: 250,
            seed: 1,
            train_size: 50_000,
            valid_size: 10_000,
            mode: CondMode::Simulate,
            drift_every: 1,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Count of weight matrices eligible for an estimator.
    pub fn hidden_matrix_count(&self) -> usize {
        self.arch.len().saturating_sub(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.arch.len() < 2 || self.arch.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!("bad arch {:?}", self.arch)));
        }
        self.schedule.validate()?;
        self.reg.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if let Some(est) = &self.estimator {
            if est.ranks.len() != self.hidden_matrix_count() {
                return Err(Error::Config(format!(
                    "{} ranks for {} hidden weight matrices",
                    est.ranks.len(),
                    self.hidden_matrix_count()
                )));
            }
            if est.refresh_period == 0 {
                return Err(Error::Config("refresh_period must be >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        let mut ranks: Option<Vec<usize>> = None;
        let mut refresh_period = 1usize;
        let mut bias: Vec<f64> = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                Error::Config(format!("line {}: bad {what} `{value}`", lineno + 1))
            };
            match key {
                "arch" => cfg.arch = parse_list(value).map_err(|_| bad("arch"))?,
                "weight_sigma" => cfg.weight_sigma = value.parse().map_err(|_| bad("number"))?,
                "gamma0" => cfg.schedule.gamma0 = value.parse().map_err(|_| bad("number"))?,
                "lambda_decay" => {
                    cfg.schedule.lambda_decay = value.parse().map_err(|_| bad("number"))?
                }
                "nu0" => cfg.schedule.nu0 = value.parse().map_err(|_| bad("number"))?,
                "nu_max" => cfg.schedule.nu_max = value.parse().map_err(|_| bad("number"))?,
                "beta_m" => cfg.schedule.beta_m = value.parse().map_err(|_| bad("number"))?,
                "l1_activation" => {
                    cfg.reg.l1_activation = value.parse().map_err(|_| bad("number"))?
                }
                "l2_weight" => cfg.reg.l2_weight = value.parse().map_err(|_| bad("number"))?,
                "dropout_p" => cfg.reg.dropout_p = value.parse().map_err(|_| bad("number"))?,
                "max_norm" => cfg.reg.max_norm = value.parse().map_err(|_| bad("number"))?,
                "epochs" => cfg.epochs = value.parse().map_err(|_| bad("integer"))?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad("integer"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("integer"))?,
                "train_size" => cfg.train_size = value.parse().map_err(|_| bad("integer"))?,
                "valid_size" => cfg.valid_size = value.parse().map_err(|_| bad("integer"))?,
                "ranks" => {
                    ranks = if value.is_empty() || value == "control" {
                        None
                    } else {
                        Some(parse_list(value).map_err(|_| bad("rank list"))?)
                    }
                }
                "refresh_period" => refresh_period = value.parse().map_err(|_| bad("integer"))?,
                "bias" => {
                    bias = value
                        .split(',')
                        .map(|t| t.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("bias list"))?
                }
                "mode" => {
                    cfg.mode = match value {
                        "simulate" => CondMode::Simulate,
                        "skip" => CondMode::Skip,
                        _ => return Err(bad("mode (simulate|skip)")),
                    }
                }
                "drift_every" => cfg.drift_every = value.parse().map_err(|_| bad("integer"))?,
                "data_dir" => cfg.data_dir = PathBuf::from(value),
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                _ => return Err(Error::Config(format!("line {}: unknown key `{key}`", lineno + 1))),
            }
        }

        if let Some(ranks) = ranks {
            let mut est = EstimatorConfig::with_ranks(ranks);
            est.refresh_period = refresh_period;
            if !bias.is_empty() {
                est.bias = if bias.len() == 1 {
                    est.ranks.iter().map(|_| MaskBias::Scalar(bias[0])).collect()
                } else if bias.len() == est.ranks.len() {
                    bias.iter().map(|&b| MaskBias::Scalar(b)).collect()
                } else {
                    return Err(Error::Config(format!(
                        "bias list length {} vs {} estimator layers",
                        bias.len(),
                        est.ranks.len()
                    )));
                };
            }
            cfg.estimator = Some(est);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        ExperimentConfig::parse(&text)
    }

    /// Render back to the key = value format.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let arch: Vec<String> = self.arch.iter().map(|w| w.to_string()).collect();
        s.push_str(&format!("arch = {}\n", arch.join(",")));
        s.push_str(&format!("weight_sigma = {}\n", self.weight_sigma));
        s.push_str(&format!("gamma0 = {}\n", self.schedule.gamma0));
        s.push_str(&format!("lambda_decay = {}\n", self.schedule.lambda_decay));
        s.push_str(&format!("nu0 = {}\n", self.schedule.nu0));
        s.push_str(&format!("nu_max = {}\n", self.schedule.nu_max));
        s.push_str(&format!("beta_m = {}\n", self.schedule.beta_m));
        s.push_str(&format!("l1_activation = {}\n", self.reg.l1_activation));
        s.push_str(&format!("l2_weight = {}\n", self.reg.l2_weight));
        s.push_str(&format!("dropout_p = {}\n", self.reg.dropout_p));
        s.push_str(&format!("max_norm = {}\n", self.reg.max_norm));
        s.push_str(&format!("epochs = {}\n", self.epochs));
        s.push_str(&format!("batch_size = {}\n", self.batch_size));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("train_size = {}\n", self.train_size));
        s.push_str(&format!("valid_size = {}\n", self.valid_size));
        match &self.estimator {
            None => s.push_str("ranks = control\n"),
            Some(est) => {
                let ranks: Vec<String> = est.ranks.iter().map(|k| k.to_string()).collect();
                s.push_str(&format!("ranks = {}\n", ranks.join(",")));
                s.push_str(&format!("refresh_period = {}\n", est.refresh_period));
                let bias: Vec<String> = est
                    .bias
                    .iter()
                    .map(|b| match b {
                        MaskBias::Scalar(v) => v.to_string(),
                        MaskBias::PerUnit(_) => "0".to_string(),
                    })
                    .collect();
                s.push_str(&format!("bias = {}\n", bias.join(",")));
            }
        }
        s.push_str(&format!(
            "mode = {}\n",
            match self.mode {
                CondMode::Simulate => "simulate",
                CondMode::Skip => "skip",
            }
        ));
        s.push_str(&format!("drift_every = {}\n", self.drift_every));
        s.push_str(&format!("data_dir = {}\n", self.data_dir.display()));
        s.push_str(&format!("out_dir = {}\n", self.out_dir.display()));
        s
    }
}

fn parse_list(value: &str) -> std::result::Result<Vec<usize>, std::num::ParseIntError> {
    value.split(',').map(|t| t.trim().parse::<usize>()).collect()
}
