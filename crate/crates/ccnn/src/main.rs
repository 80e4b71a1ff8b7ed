use ccnn::config::ExperimentConfig;
use ccnn::costmodel::{flops_conditional, flops_dense, reduction_ratio, refresh_ratio, LayerCost};
use ccnn::error::Result;
use ccnn::estimator::CondMode;
use ccnn::harness::{
    emit_sweep, prepare_data, rank_label, run_rank_sweep, run_training, save_run,
};
use ccnn::network::evaluate;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "ccnn", about = "Conditional-computation neural network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct CommonOpts {
    /// Experiment config file (key = value lines); defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's MNIST directory.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Override the config's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Conditional execution strategy.
    #[arg(long, value_parser = ["simulate", "skip"])]
    mode: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and write metrics, drift samples and a checkpoint.
    Train {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Evaluate a checkpoint on the test set.
    Eval {
        #[command(flatten)]
        common: CommonOpts,
        /// Checkpoint produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train one run per rank configuration and tabulate test errors.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Semicolon-separated rank lists, e.g. "control;50-35-25;25-25-25".
        #[arg(long)]
        ranks: String,
    },
    /// Print the analytic FLOP model for the configured architecture.
    FlopsReport {
        #[command(flatten)]
        common: CommonOpts,
        /// Assumed active fraction per layer.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
}

fn effective_config(common: &CommonOpts) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &common.data_dir {
        cfg.data_dir = dir.clone();
    }
    if let Some(dir) = &common.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(mode) = &common.mode {
        cfg.mode = if mode == "skip" {
            CondMode::Skip
        } else {
            CondMode::Simulate
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_rank_lists(spec: &str) -> Result<Vec<Option<Vec<usize>>>> {
    spec.split(';')
        .map(|entry| {
            let entry = entry.trim();
            if entry.is_empty() || entry == "control" {
                return Ok(None);
            }
            entry
                .split('-')
                .map(|t| {
                    t.trim().parse::<usize>().map_err(|_| {
                        ccnn::Error::Config(format!("bad rank list entry `{entry}`"))
                    })
                })
                .collect::<Result<Vec<usize>>>()
                .map(Some)
        })
        .collect()
}

fn cmd_train(common: &CommonOpts) -> Result<()> {
    let cfg = effective_config(common)?;
    let data = prepare_data(&cfg)?;
    eprintln!(
        "training {} for {} epochs on {} samples",
        rank_label(&cfg.estimator.as_ref().map(|e| e.ranks.clone())),
        cfg.epochs,
        data.train.len()
    );
    let run = run_training(&cfg, &data)?;
    save_run(&cfg, &run, &cfg.out_dir)?;
    for r in &run.records {
        let valid = r
            .valid_err
            .map_or("-".to_string(), |e| format!("{:.4}", e));
        eprintln!(
            "epoch {:>3}  loss {:.4}  valid_err {}  speedup {:.3}",
            r.epoch, r.train_loss, valid, r.speedup
        );
    }
    if let Some(err) = run.records.last().and_then(|r| r.test_err) {
        println!("test_err {err}");
    }
    eprintln!("wrote {}", cfg.out_dir.display());
    Ok(())
}

fn cmd_eval(common: &CommonOpts, checkpoint_path: &PathBuf) -> Result<()> {
    let cfg = effective_config(common)?;
    let data = prepare_data(&cfg)?;
    let params = ccnn::checkpoint::load(checkpoint_path)?;
    let err = evaluate(&params, &data.test.features, &data.test.labels)?;
    println!("test_err {err}");
    Ok(())
}

fn cmd_sweep(common: &CommonOpts, ranks: &str) -> Result<()> {
    let cfg = effective_config(common)?;
    let rank_lists = parse_rank_lists(ranks)?;
    let data = prepare_data(&cfg)?;
    let outcomes = run_rank_sweep(&cfg, &rank_lists, &data);
    let table = emit_sweep(&outcomes);
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("sweep.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_flops_report(common: &CommonOpts, alpha: f64) -> Result<()> {
    let cfg = effective_config(common)?;
    let beta = match &cfg.estimator {
        Some(est) => refresh_ratio(cfg.batch_size, cfg.train_size, est.refresh_period),
        None => 0.0,
    };
    println!("layer  d      h      k    alpha   F_nn         F_ae         ratio");
    let mut total_nn = 0.0;
    let mut total_ae = 0.0;
    for l in 0..cfg.arch.len() - 1 {
        let (d, h) = (cfg.arch[l] as u64, cfg.arch[l + 1] as u64);
        let rank = cfg
            .estimator
            .as_ref()
            .and_then(|e| e.ranks.get(l).copied())
            .unwrap_or(0) as u64;
        let f_nn = flops_dense(1, d, h) as f64;
        let cost = LayerCost {
            multiplicity: 1,
            input_dim: d,
            output_dim: h,
            rank,
            alpha,
            beta,
            svd_cost_constant: 1.0,
        };
        let f_ae = if rank == 0 { f_nn } else { flops_conditional(&cost) };
        let ratio = if rank == 0 { 1.0 } else { reduction_ratio(&cost) };
        total_nn += f_nn;
        total_ae += f_ae;
        println!(
            "{:<6} {:<6} {:<6} {:<4} {:<7} {:<12.0} {:<12.0} {:.4}",
            l + 1,
            d,
            h,
            rank,
            alpha,
            f_nn,
            f_ae,
            ratio
        );
    }
    println!("network speedup (sum F_nn / sum F_ae): {:.4}", total_nn / total_ae);
    println!("beta (refreshes per feedforward): {beta}");
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { common } => cmd_train(common),
        Command::Eval { common, checkpoint } => cmd_eval(common, checkpoint),
        Command::Sweep { common, ranks } => cmd_sweep(common, ranks),
        Command::FlopsReport { common, alpha } => cmd_flops_report(common, *alpha),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
