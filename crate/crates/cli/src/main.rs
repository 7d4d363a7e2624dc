//! `bdqmap`: datasets, weight tables, despeckling and benchmarks from the shell.

mod args;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bdqmap_core::despeckler::{bdqmap_b_viterbi, memoryless_despeckle, memoryless_penalty, refine, DespecklerConfig};
use bdqmap_core::experiment::{
    run_bound_curve, run_lambda_sweep, run_table1, test_seed, training_seed, write_bound_curve,
    write_lambda_sweep, write_table1, ExperimentOverrides,
};
use bdqmap_core::io::{read_signal, write_estimate, write_segments, write_signal};
use bdqmap_core::metrics::{mse, psnr};
use bdqmap_core::weights::{analytic_weights_markov, load_weights, save_weights, train_weights};
use bdqmap_core::{baselines, Convention, EnhancedBase, Error, ExperimentConfig, SourceModel, SpeckledPair, WeightTable};
use clap::Parser;

use args::{BenchCommand, Cli, Command, Common, DespeckleArgs, DespeckleMethod, TrainArgs};

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_PRECONDITION: u8 = 4;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidParameter(_) => EXIT_CONFIG,
        Error::Io { .. } | Error::Malformed { .. } | Error::Version { .. } | Error::Inconsistent(_) => EXIT_IO,
        Error::Precondition(_) => EXIT_PRECONDITION,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Scale preset, then the config file, then command-line flags.
fn resolve(config: Option<&Path>, common: &Common, extra: ExperimentOverrides) -> Result<ExperimentConfig, Error> {
    let file = match config {
        Some(path) => ExperimentOverrides::load(path)?,
        None => ExperimentOverrides::default(),
    };
    ExperimentConfig::resolve(file.merge(common.overrides()).merge(extra))
}

fn single<T: Copy + std::fmt::Debug>(name: &str, values: &[T]) -> Result<T, Error> {
    match values {
        [v] => Ok(*v),
        _ => Err(Error::InvalidParameter(format!(
            "this command needs exactly one {name} value, got {values:?}"
        ))),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Gen(common) => gen(&resolve(config, &common, Default::default())?),
        Command::TrainWeights(args) => {
            let extra = ExperimentOverrides {
                training_samples: args.samples,
                ..Default::default()
            };
            train(&resolve(config, &args.common, extra)?, &args)
        }
        Command::Despeckle(args) => {
            let extra = ExperimentOverrides {
                tv_weight: args.tv_weight,
                ..Default::default()
            };
            despeckle(&resolve(config, &args.common, extra)?, &args)
        }
        Command::Bench { command } => match command {
            BenchCommand::Table1(common) => {
                let cfg = resolve(config, &common, Default::default())?;
                let table = run_table1(&cfg)?;
                report_written(&write_table1(&cfg.output_dir, &table)?);
                for row in &table.rows {
                    println!(
                        "{:<18} q0={:<6} b={:<2} psnr={:.3}",
                        row.method.name(),
                        row.q0,
                        row.b.map(|b| b.to_string()).unwrap_or_else(|| "-".into()),
                        row.psnr
                    );
                }
                Ok(())
            }
            BenchCommand::LambdaSweep(common) => {
                let cfg = resolve(config, &common, Default::default())?;
                let sweep = run_lambda_sweep(&cfg)?;
                report_written(&write_lambda_sweep(&cfg.output_dir, &sweep)?);
                for c in &sweep.best {
                    println!("{:<9} q0={:<6} b={} lambda*={:.4} psnr={:.3}", c.method.name(), c.q0, c.b, c.lambda, c.psnr);
                }
                Ok(())
            }
            BenchCommand::BoundCurve(common) => {
                let cfg = resolve(config, &common, Default::default())?;
                bound_curve(&cfg)
            }
        },
    }
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn gen(cfg: &ExperimentConfig) -> Result<(), Error> {
    create_dir(&cfg.output_dir)?;
    for &q0 in &cfg.q0 {
        let model = cfg.model(q0)?;
        for i in 0..cfg.num_signals {
            let pair = SpeckledPair::generate(&model, cfg.n, test_seed(cfg.seed, q0, i))?;
            let stem = format!("q0-{q0}_{i:04}");
            write_signal(cfg.output_dir.join(format!("signal_{stem}.csv")), Some(pair.clean.values()), &pair.noisy)?;
            write_segments(cfg.output_dir.join(format!("segments_{stem}.csv")), &pair.clean)?;
        }
    }
    eprintln!(
        "wrote {} signals of length {} to {}",
        cfg.q0.len() * cfg.num_signals,
        cfg.n,
        cfg.output_dir.display()
    );
    Ok(())
}

fn train(cfg: &ExperimentConfig, args: &TrainArgs) -> Result<(), Error> {
    let q0 = single("q0", &cfg.q0)?;
    let b = single("b", &cfg.bits)?;
    let model = cfg.model(q0)?;
    let table = if args.analytic {
        if cfg.k != 2 {
            return Err(Error::InvalidParameter("analytic weights exist only for k = 2".into()));
        }
        analytic_weights_markov(&model, b)?
    } else {
        train_weights(&model, cfg.k, b, cfg.training_samples, training_seed(cfg.seed, q0, b))?
    };
    let path = args
        .common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("weights_q0-{q0}_b{b}_k{}.json", cfg.k)));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_weights(&table, &path)?;
    eprintln!("wrote {} ({} patterns, cap {:.4})", path.display(), table.entries().len(), table.cap());
    Ok(())
}

fn weights_for(cfg: &ExperimentConfig, model: &SourceModel, b: u32) -> Result<WeightTable, Error> {
    match &cfg.weights {
        Some(path) => load_weights(path),
        None => train_weights(model, cfg.k, b, cfg.training_samples, training_seed(cfg.seed, model.q0, b)),
    }
}

fn despeckle(cfg: &ExperimentConfig, args: &DespeckleArgs) -> Result<(), Error> {
    let signal = read_signal(&args.input)?;
    let q0 = single("q0", &cfg.q0)?;
    let b = single("b", &cfg.bits)?;
    let lambda = cfg.lambda.unwrap_or(1.0);
    let y = &signal.y;
    let a = baselines::amplitude(y);
    let f = cfg.filter_config(q0)?;
    let window = f.window.min(y.len().saturating_sub(1 - y.len() % 2)).max(1);
    let xhat = match args.method {
        DespeckleMethod::Speckled => a,
        DespeckleMethod::Boxcar => baselines::boxcar(&a, window)?,
        DespeckleMethod::Frost => baselines::frost(&a, window, f.c_w, f.damping)?,
        DespeckleMethod::Tv => baselines::tv_log(y, f.tv_weight)?,
        DespeckleMethod::Lee => baselines::lee(&a, window, f.c_w)?,
        DespeckleMethod::Kuan => baselines::kuan(&a, window, f.c_w)?,
        DespeckleMethod::EnhancedLee => baselines::enhanced(EnhancedBase::Lee, &a, window, f.c_w)?,
        DespeckleMethod::EnhancedKuan => baselines::enhanced(EnhancedBase::Kuan, &a, window, f.c_w)?,
        DespeckleMethod::BdqmapB | DespeckleMethod::Bdqmap => {
            let table = weights_for(cfg, &cfg.model(q0)?, b)?;
            let dcfg = DespecklerConfig::with_params(lambda, b, cfg.k, &table)?;
            let sol = bdqmap_b_viterbi(y, &dcfg)?;
            if args.method == DespeckleMethod::BdqmapB {
                sol.amplitudes
            } else {
                refine(y, &sol)?
            }
        }
        DespeckleMethod::Memoryless => memoryless_despeckle(y, cfg.x_min, memoryless_penalty(lambda, q0, b))?,
    };
    let out = args
        .common
        .out
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("despeckled.csv"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_estimate(&out, y, &xhat)?;
    eprintln!("wrote {}", out.display());
    if let Some(x) = &signal.x {
        let m = mse(x, &xhat)?;
        println!("mse={m:.6e} psnr={:.3}", psnr(m, cfg.x_max));
    }
    Ok(())
}

fn bound_curve(cfg: &ExperimentConfig) -> Result<(), Error> {
    let curve = run_bound_curve(cfg)?;
    report_written(&write_bound_curve(&cfg.output_dir, &curve)?);
    let mut flagged = 0;
    for row in &curve.rows {
        let bound = match cfg.convention {
            Convention::Theorem => row.theorem_bound_mse,
            Convention::Proof => row.proof_bound_mse,
        };
        match bound {
            Some(bound) => println!(
                "q0={:<6} bound_mse={:.4e} genie_mse={:.4e} bdqmap_psnr={:.3} genie_psnr={:.3}",
                row.q0, bound, row.genie_mse, row.bdqmap_psnr, row.genie_psnr
            ),
            None => {
                flagged += 1;
                println!("q0={:<6} bound unavailable: {}", row.q0, row.status);
            }
        }
    }
    if flagged > 0 {
        return Err(Error::Precondition(format!(
            "{flagged} of {} grid points failed a bound precondition (rows are still written)",
            curve.rows.len()
        )));
    }
    Ok(())
}
