//! Command-line surface: model-spec ingestion, positivity certification,
//! simulation, moment tables and Monte Carlo validation reports.
//!
//! Exit codes: 0 pass, 1 refuted / validation failure, 2 usage or config
//! error.

use clap::{Args, Parser, Subcommand};
use mcarma::config::{CovKind, ModelConfig};
use mcarma::model::{classify, ModelKind};
use mcarma::moments::{autocovariance, moment_report, stationary_mean};
use mcarma::positivity::{
    certify_causal_kernel, certify_internal_positivity, check_complete_monotonicity,
    check_hadamard_sufficient, validate_paths, CheckReport,
};
use mcarma::simulate::{
    simulate_state, simulate_stationary_causal, simulate_stationary_noncausal,
    simulate_wellbalanced_ou,
};
use mcarma::stochvol::{acov_vec_series, compare_report, mean_vec_series, CovProcess};
use mcarma::{Mat, McarmaError, SampleParams, StreamFactory};
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mcarma", version, about = "Cone-valued MCARMA models: check, simulate, validate")]
struct Cli {
    /// Worker threads (default: MCARMA_THREADS env var, then all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Model configuration (TOML)
    config: PathBuf,
    /// Master seed (overrides [simulation].seed)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the positivity certification battery for the model's cone
    Check {
        #[command(flatten)]
        common: Common,
        /// Write the certification report as JSON
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Simulate sample paths and write them as CSV (plus a .meta.json sidecar)
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        horizon: Option<f64>,
        /// Output CSV path (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form second-order structure at the requested lags
    Moments {
        #[command(flatten)]
        common: Common,
        /// Comma-separated lags, e.g. 0,0.5,1
        #[arg(long, value_delimiter = ',')]
        lags: Option<Vec<f64>>,
        /// Write the lag table as CSV (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the full report as JSON
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Monte Carlo validation: moments within 4 SE and cone positivity
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        lags: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Squared-return autocovariance of the stochastic covariance model
    Stochvol {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| std::env::var("MCARMA_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load(common: &Common) -> Result<(ModelConfig, u64), McarmaError> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| McarmaError::Config(format!("{}: {e}", common.config.display())))?;
    let cfg = ModelConfig::from_toml(&text)?;
    let seed = common
        .seed
        .or(cfg.simulation.as_ref().map(|s| s.seed))
        .unwrap_or(0);
    Ok((cfg, seed))
}

fn write_or_print(path: &Option<PathBuf>, content: &str) -> Result<(), McarmaError> {
    match path {
        Some(p) => std::fs::write(p, content)
            .map_err(|e| McarmaError::Config(format!("{}: {e}", p.display()))),
        None => {
            print!("{content}");
            std::io::stdout().flush().ok();
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct CheckDocument {
    schema_version: u32,
    classification: mcarma::Classification,
    checks: Vec<CheckReport>,
    notes: Vec<String>,
    pass: bool,
}

fn run(command: Command) -> Result<ExitCode, McarmaError> {
    match command {
        Command::Check { common, report } => {
            let (cfg, seed) = load(&common)?;
            let model = cfg.to_model()?;
            let form = model.build_companion();
            let cls = classify(&form)?;
            let cone = model
                .cone()
                .ok_or_else(|| McarmaError::Config("check requires a [cone] section".into()))?
                .clone();
            let params = SampleParams::default();
            let mut checks = Vec::new();
            let mut notes = Vec::new();

            if cls.kind == ModelKind::Causal {
                let t0 = std::time::Instant::now();
                let v = certify_causal_kernel(&model, &form, None, &params, seed)?;
                checks.push(CheckReport {
                    check_name: "causal_kernel_positivity".into(),
                    verdict: v,
                    grid_len: 200,
                    elapsed_ms: t0.elapsed().as_millis(),
                    notes: vec![],
                });
                let t0 = std::time::Instant::now();
                let v = check_complete_monotonicity(&model, &cone, None, 4, &params, seed ^ 0x5a)?;
                checks.push(CheckReport {
                    check_name: "complete_monotonicity".into(),
                    verdict: v,
                    grid_len: 30,
                    elapsed_ms: t0.elapsed().as_millis(),
                    notes: vec![
                        "finite sampling of a universally quantified property; Certified is only \
                         reported for exact entrywise characterizations"
                            .into(),
                    ],
                });
            } else {
                let t0 = std::time::Instant::now();
                let mut rng = StreamFactory::new(seed).stream(0x1D);
                let (v, warn) = certify_internal_positivity(&model, &params, &mut rng)?;
                notes.extend(warn);
                checks.push(CheckReport {
                    check_name: "internal_positivity".into(),
                    verdict: v,
                    grid_len: 0,
                    elapsed_ms: t0.elapsed().as_millis(),
                    notes: vec![],
                });
            }

            if let Some(ps) = &cfg.positivity {
                if !ps.c_factors.is_empty() {
                    let to_mat = |rows: &Vec<Vec<f64>>| -> Mat {
                        let r = rows.len();
                        let c = rows[0].len();
                        Mat::from_fn(r, c, |i, j| rows[i][j])
                    };
                    let cf: Vec<Mat> = ps.c_factors.iter().map(|e| to_mat(&e.value)).collect();
                    let af: Vec<Mat> = ps.a_factors.iter().map(|e| to_mat(&e.value)).collect();
                    let t0 = std::time::Instant::now();
                    let v = check_hadamard_sufficient(&cf, &af, None, 1e-9)?;
                    checks.push(CheckReport {
                        check_name: "hadamard_sufficient".into(),
                        verdict: v,
                        grid_len: 200,
                        elapsed_ms: t0.elapsed().as_millis(),
                        notes: vec![
                            "matrix logarithms and the l-matrix construction are not checked; \
                             the sampled exponential-difference condition substitutes"
                                .into(),
                        ],
                    });
                }
            }

            let pass = checks.iter().all(|c| !c.verdict.is_refuted());
            let doc = CheckDocument { schema_version: 1, classification: cls, checks, notes, pass };
            let json = serde_json::to_string_pretty(&doc)
                .map_err(|e| McarmaError::Config(e.to_string()))?;
            match &report {
                Some(p) => write_or_print(&Some(p.clone()), &json)?,
                None => println!("{json}"),
            }
            Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }

        Command::Simulate { common, paths, horizon, out } => {
            let (cfg, seed) = load(&common)?;
            let model = cfg.to_model()?;
            let sim = cfg
                .simulation
                .clone()
                .ok_or_else(|| McarmaError::Config("simulate requires a [simulation] section".into()))?;
            let n_paths = paths.unwrap_or(sim.paths);
            let horizon = horizon.unwrap_or(sim.horizon);
            let steps = (horizon / sim.dt).round().max(1.0) as usize;
            let grid: Vec<f64> = (0..=steps).map(|k| k as f64 * sim.dt).collect();
            let factory = StreamFactory::new(seed);
            let form = model.build_companion();
            let cls = classify(&form)?;
            let bundle = match cls.kind {
                ModelKind::Causal => {
                    simulate_stationary_causal(&model, &grid, n_paths, &factory, 0, sim.warmup_tol)?
                }
                ModelKind::NonCausalStationary => simulate_stationary_noncausal(
                    &model,
                    &grid,
                    n_paths,
                    &factory,
                    0,
                    sim.warmup_tol,
                )?,
                ModelKind::NonStationary => {
                    let z0 = Mat::zeros(model.orders().0 * model.dims().0, model.dims().1);
                    simulate_state(&model, &grid, &z0, n_paths, &factory, 0)?
                }
            };
            let mut csv = Vec::new();
            bundle
                .write_csv(&mut csv)
                .map_err(|e| McarmaError::Config(e.to_string()))?;
            write_or_print(&out, &String::from_utf8_lossy(&csv))?;
            if let Some(p) = &out {
                let meta = serde_json::to_string_pretty(&bundle.meta)
                    .map_err(|e| McarmaError::Config(e.to_string()))?;
                let meta_path = p.with_extension("meta.json");
                std::fs::write(&meta_path, meta)
                    .map_err(|e| McarmaError::Config(format!("{}: {e}", meta_path.display())))?;
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Moments { common, lags, out, json } => {
            let (cfg, _) = load(&common)?;
            let model = cfg.to_model()?;
            let form = model.build_companion();
            let lags = lags.unwrap_or_else(|| vec![0.0, 0.5, 1.0]);
            let report = moment_report(&model, &form, &lags)?;
            if let Some(p) = &json {
                let doc = serde_json::to_string_pretty(&report)
                    .map_err(|e| McarmaError::Config(e.to_string()))?;
                std::fs::write(p, doc)
                    .map_err(|e| McarmaError::Config(format!("{}: {e}", p.display())))?;
            }
            write_or_print(&out, &report.acov_csv())?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Validate { common, paths, lags, out } => {
            let (cfg, seed) = load(&common)?;
            let doc = run_validate(&cfg, seed, paths, lags)?;
            let json = serde_json::to_string_pretty(&doc)
                .map_err(|e| McarmaError::Config(e.to_string()))?;
            match &out {
                Some(p) => write_or_print(&Some(p.clone()), &json)?,
                None => println!("{json}"),
            }
            Ok(if doc.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }

        Command::Stochvol { common, out } => {
            let (cfg, seed) = load(&common)?;
            let sv = cfg.to_stochvol()?;
            let section = cfg.stochvol.as_ref().unwrap();
            let n_paths = section.price_paths.max(8);
            let factory = StreamFactory::new(seed);
            let report = compare_report(&sv, n_paths, section.returns, &section.lags, &factory)?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| McarmaError::Config(e.to_string()))?;
            match &out {
                Some(p) => write_or_print(&Some(p.clone()), &json)?,
                None => println!("{json}"),
            }
            Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

#[derive(Serialize)]
struct ValidateDocument {
    schema_version: u32,
    metrics: Vec<mcarma::stochvol::MetricEntry>,
    max_abs_z: f64,
    positivity: Option<mcarma::positivity::PathValidation>,
    pass: bool,
}

fn run_validate(
    cfg: &ModelConfig,
    seed: u64,
    paths: Option<usize>,
    lags: Option<Vec<f64>>,
) -> Result<ValidateDocument, McarmaError> {
    let sim = cfg
        .simulation
        .clone()
        .ok_or_else(|| McarmaError::Config("validate requires a [simulation] section".into()))?;
    let n_paths = paths.unwrap_or(sim.paths).max(8);
    let lags = lags.unwrap_or_else(|| vec![0.0, 1.0]);
    let steps = (sim.horizon / sim.dt).round().max(2.0) as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| k as f64 * sim.dt).collect();
    let factory = StreamFactory::new(seed);

    // theory + simulated paths, by covariance-process kind when given
    let (bundle, theory_mean, theory_acov): (_, Mat, Vec<(f64, Mat)>) =
        match cfg.stochvol.as_ref().map(|s| s.kind) {
            Some(CovKind::Ou) | Some(CovKind::WellBalanced) => {
                let sv = cfg.to_stochvol()?;
                match &sv.cov {
                    CovProcess::Ou { a, levy } => {
                        let model = mcarma::MCARMAModel::ou(a, cfg.cone_spec()?, levy.clone())?;
                        let b = simulate_stationary_causal(
                            &model, &grid, n_paths, &factory, 0, sim.warmup_tol,
                        )?;
                        let q = levy.covariance_operator()?.rep().clone();
                        let mean = mcarma::moments::ou_mean(a.rep(), levy)?;
                        let acov = lags
                            .iter()
                            .map(|&h| Ok((h, mcarma::moments::ou_acov(a.rep(), &q, h)?)))
                            .collect::<Result<Vec<_>, McarmaError>>()?;
                        (b, mean, acov)
                    }
                    CovProcess::WellBalanced { a, levy } => {
                        let b = simulate_wellbalanced_ou(
                            a, levy, &grid, n_paths, &factory, 0, sim.warmup_tol,
                        )?;
                        let q = levy.covariance_operator()?.rep().clone();
                        let mean = mcarma::moments::wb_mean(a.rep(), levy)?;
                        let acov = lags
                            .iter()
                            .map(|&h| Ok((h, mcarma::moments::wb_acov(a.rep(), &q, h)?)))
                            .collect::<Result<Vec<_>, McarmaError>>()?;
                        (b, mean, acov)
                    }
                    CovProcess::Mcarma(_) => unreachable!("to_stochvol matched kind"),
                }
            }
            _ => {
                let model = cfg.to_model()?;
                let form = model.build_companion();
                let b = simulate_stationary_causal(
                    &model, &grid, n_paths, &factory, 0, sim.warmup_tol,
                )?;
                let mean = stationary_mean(&model, &form)?;
                let acov = lags
                    .iter()
                    .map(|&h| Ok((h, autocovariance(&model, &form, h)?)))
                    .collect::<Result<Vec<_>, McarmaError>>()?;
                (b, mean, acov)
            }
        };

    let series: Vec<Vec<mcarma::Vecf>> = bundle
        .x_paths
        .iter()
        .map(|p| p.iter().map(mcarma::matops::vec_of).collect())
        .collect();
    let mut metrics = Vec::new();
    let (est_mean, se_mean) = mean_vec_series(&series)?;
    let d = bundle.n;
    for j in 0..bundle.m {
        for i in 0..d {
            let idx = i + j * d;
            let se = se_mean[idx].max(1e-300);
            metrics.push(mcarma::stochvol::MetricEntry {
                metric: format!("mean[{},{}]", i + 1, j + 1),
                theory: theory_mean[(i, j)],
                estimate: est_mean[idx],
                se: se_mean[idx],
                z: (est_mean[idx] - theory_mean[(i, j)]) / se,
            });
        }
    }
    for (h, theory) in &theory_acov {
        let lag_steps = (h / sim.dt).round() as usize;
        if (lag_steps as f64 * sim.dt - h).abs() > 1e-9 {
            return Err(McarmaError::Config(format!(
                "lag {h} is not a multiple of dt = {}",
                sim.dt
            )));
        }
        let (est, se) = acov_vec_series(&series, lag_steps)?;
        for j in 0..est.ncols() {
            for i in 0..est.nrows() {
                let s = se[(i, j)].max(1e-300);
                metrics.push(mcarma::stochvol::MetricEntry {
                    metric: format!("acov(h={h})[{},{}]", i + 1, j + 1),
                    theory: theory[(i, j)],
                    estimate: est[(i, j)],
                    se: se[(i, j)],
                    z: (est[(i, j)] - theory[(i, j)]) / s,
                });
            }
        }
    }

    let positivity = match cfg.cone_spec()? {
        Some(cone) => Some(validate_paths(&bundle, &cone)?),
        None => None,
    };
    let max_abs_z = metrics.iter().map(|e| e.z.abs()).fold(0.0, f64::max);
    let pass = max_abs_z < 4.0 && positivity.as_ref().map(|p| p.pass).unwrap_or(true);
    Ok(ValidateDocument { schema_version: 1, metrics, max_abs_z, positivity, pass })
}
