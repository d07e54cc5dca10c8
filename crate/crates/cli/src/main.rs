//! `csa-lab`: closed-form predictions, ensemble simulations, verification
//! verdicts and figure data for the (1,λ)-CSA-ES on linear functions.
//!
//! Exit codes: 0 on success, 1 when a verification verdict fails, 2 on
//! invalid configuration or any other error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use csa_lab::es_core::{self, trace};
use csa_lab::montecarlo::{self, EnsembleConfig, EnsembleResult, FIGURE1_LEVELS};
use csa_lab::order_stats::{self, moments_quadrature, DEFAULT_TOL, MAX_MOMENT};
use csa_lab::report::{self, ScalingBody, ScalingCurve};
use csa_lab::theory::{self, ScalingSpec};
use csa_lab::{AlgorithmParams, OrderStatSpec, SelectionMode, UpdateRule};

const THREADS_VAR: &str = "CSA_LAB_THREADS";

#[derive(Parser)]
#[command(name = "csa-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form rate and variance of the log step-size increment.
    Predict {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run an ensemble and emit quantiles of ln(σ_t/σ_0), or a trace when --runs 1.
    Simulate {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Compare an ensemble with the closed forms; exits 1 if any check fails.
    Verify {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Quantile series of ln(σ_t/σ_0) for c = 1 and c = 1/√n.
    Figure1 {
        #[command(flatten)]
        algo: FigureAlgoArgs,
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Relative standard deviation curves: against c for several n, and
    /// against n for fixed c and for c = 1/(1+n^α).
    Figure2 {
        #[arg(long, default_value_t = 8)]
        lambda: u32,
        #[arg(long, default_value_t = 1.0)]
        d_sigma: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Moments E(N_{i:λ}^k), k = 1..4, for every rank i (or one with --rank).
    Moments {
        #[arg(long, default_value_t = 8)]
        lambda: u32,
        #[arg(long)]
        rank: Option<u32>,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct ParamArgs {
    /// Search space dimension.
    #[arg(long, default_value_t = 20)]
    n: usize,
    /// Number of children per iteration.
    #[arg(long, default_value_t = 8)]
    lambda: u32,
    /// Cumulation parameter, 0 < c <= 1 [default: 1].
    #[arg(long, conflicts_with = "alpha", allow_negative_numbers = true)]
    c: Option<f64>,
    /// Use c = 1/(1 + n^alpha).
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    d_sigma: f64,
    /// Step-size update rule: squared or norm.
    #[arg(long, default_value = "squared")]
    rule: UpdateRule,
}

impl ParamArgs {
    fn resolve(&self) -> Result<AlgorithmParams> {
        let c = match (self.c, self.alpha) {
            (Some(c), _) => c,
            (None, Some(alpha)) => {
                if !(alpha >= 0.0 && alpha.is_finite()) {
                    bail!("alpha must be a finite number >= 0, got {alpha}");
                }
                1.0 / (1.0 + (self.n as f64).powf(alpha))
            }
            (None, None) => 1.0,
        };
        let params = AlgorithmParams {
            n: self.n,
            lambda: self.lambda,
            c,
            d_sigma: self.d_sigma,
            update_rule: self.rule,
        };
        Ok(params.validated()?)
    }
}

#[derive(Args)]
struct FigureAlgoArgs {
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    lambda: u32,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    d_sigma: f64,
    #[arg(long, default_value = "squared")]
    rule: UpdateRule,
}

#[derive(Args)]
struct EnsembleArgs {
    /// full draws and ranks λ children; shortcut samples the selected step directly.
    #[arg(long, default_value = "shortcut")]
    mode: SelectionMode,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    t_max: Option<u64>,
    /// Iterations discarded before stationary estimates [default: ceil(10/c)].
    #[arg(long)]
    burn_in: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Comma-separated quantile levels in (0, 1).
    #[arg(long, value_delimiter = ',')]
    quantiles: Option<Vec<f64>>,
}

impl EnsembleArgs {
    fn config(
        &self,
        params: AlgorithmParams,
        default_runs: usize,
        default_t_max: u64,
    ) -> Result<EnsembleConfig> {
        let runs = self.runs.unwrap_or(default_runs);
        let t_max = self.t_max.unwrap_or(default_t_max);
        let mut cfg = EnsembleConfig::new(params, runs, t_max, self.seed);
        cfg.mode = self.mode;
        if let Some(b) = self.burn_in {
            cfg.burn_in = b;
        }
        if let Some(levels) = &self.quantiles {
            cfg.quantile_levels = levels.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct OutArgs {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

impl OutArgs {
    fn emit<F>(&self, write: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write, Format) -> io::Result<()>,
    {
        match &self.out {
            Some(path) => {
                let file = File::create(path)
                    .with_context(|| format!("cannot create {}", path.display()))?;
                let mut w = BufWriter::new(file);
                write(&mut w, self.format)
                    .and_then(|()| w.flush())
                    .with_context(|| format!("cannot write {}", path.display()))
            }
            None => {
                let mut w = io::stdout().lock();
                write(&mut w, self.format).context("cannot write to standard output")
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .with_context(|| format!("{THREADS_VAR} must be a positive integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("cannot configure the thread pool")
}

fn report_diagnostics(result: &EnsembleResult) {
    for d in &result.diagnostics {
        eprintln!("warning: {d}");
    }
    if result.excluded_runs > 0 {
        eprintln!(
            "warning: {} of {} runs excluded",
            result.excluded_runs, result.runs
        );
    }
}

fn predict(params: &ParamArgs, out: &OutArgs) -> Result<()> {
    let params = params.resolve()?;
    let moments = order_stats::minimum_moments(params.lambda)?;
    let pred = theory::predict(&params, &moments)?;
    let preds = [pred];
    out.emit(|w, format| match format {
        Format::Csv => report::write_predictions_csv(w, &preds),
        Format::Json => report::write_predictions_json(w, &preds),
    })
}

fn simulate(params: &ParamArgs, ens: &EnsembleArgs, out: &OutArgs) -> Result<()> {
    let params = params.resolve()?;
    let cfg = ens.config(params, 100, 1000)?;
    if cfg.runs == 1 {
        // Same stream and start as run 0 of an ensemble.
        let mut rng = montecarlo::run_stream(cfg.master_seed, 0);
        let start = es_core::init_state(&cfg.params, &vec![0.0; cfg.params.n], 1.0, &mut rng)?;
        let (_, records) = trace(
            start,
            &cfg.params,
            &cfg.objective,
            cfg.mode,
            cfg.t_max,
            &mut rng,
        )?;
        return out.emit(|w, format| match format {
            Format::Csv => report::write_trace_csv(w, &records),
            Format::Json => report::write_trace_json(w, &cfg.params, &records),
        });
    }
    let result = montecarlo::run_ensemble(&cfg)?;
    report_diagnostics(&result);
    out.emit(|w, format| match format {
        Format::Csv => report::write_quantiles_csv(w, &result),
        Format::Json => report::write_ensembles_json(w, std::slice::from_ref(&result)),
    })
}

fn verify(params: &ParamArgs, ens: &EnsembleArgs, out: &OutArgs) -> Result<bool> {
    let params = params.resolve()?;
    let moments = order_stats::minimum_moments(params.lambda)?;
    let pred = theory::predict(&params, &moments)?;
    let cfg = ens.config(params, 1000, 1000)?;
    let result = montecarlo::run_ensemble(&cfg)?;
    report_diagnostics(&result);
    let verdict = montecarlo::compare(&pred, &result, montecarlo::DEFAULT_Z_THRESHOLD)?;
    for item in &verdict.items {
        eprintln!(
            "{:<20} theory {:>12.6e}  empirical {:>12.6e} ± {:.2e}  z = {:.2}  {}",
            item.quantity,
            item.theory,
            item.empirical,
            item.stderr,
            item.z,
            if item.pass { "PASS" } else { "FAIL" }
        );
    }
    out.emit(|w, format| match format {
        Format::Csv => report::write_verdict_csv(w, &verdict),
        Format::Json => report::write_verdict_json(w, &verdict),
    })?;
    Ok(verdict.pass)
}

fn figure1(algo: &FigureAlgoArgs, ens: &EnsembleArgs, out: &OutArgs) -> Result<()> {
    let mut results = Vec::new();
    for c in [1.0, 1.0 / (algo.n as f64).sqrt()] {
        let params = AlgorithmParams {
            n: algo.n,
            lambda: algo.lambda,
            c,
            d_sigma: algo.d_sigma,
            update_rule: algo.rule,
        }
        .validated()?;
        let mut cfg = ens.config(params, 5001, 1000)?;
        if ens.quantiles.is_none() {
            cfg.quantile_levels = FIGURE1_LEVELS.to_vec();
        }
        let result = montecarlo::run_ensemble(&cfg)?;
        report_diagnostics(&result);
        results.push(result);
    }
    out.emit(|w, format| match format {
        Format::Csv => report::write_labelled_quantiles_csv(w, &results),
        Format::Json => report::write_ensembles_json(w, &results),
    })
}

/// Log-spaced grid from `10^lo` to `10^hi`, `per_decade` points per decade.
fn log_grid(lo: i32, hi: i32, per_decade: i32) -> Vec<f64> {
    (lo * per_decade..=hi * per_decade)
        .map(|k| 10f64.powf(f64::from(k) / f64::from(per_decade)))
        .collect()
}

fn dimension_grid() -> Vec<usize> {
    let mut ns: Vec<usize> = log_grid(0, 5, 10)
        .into_iter()
        .map(|x| x.round() as usize)
        .collect();
    ns.dedup();
    ns
}

fn figure2(lambda: u32, d_sigma: f64, out: &OutArgs) -> Result<()> {
    let moments = order_stats::minimum_moments(lambda)?;
    let mut curves = Vec::new();

    let c_grid: Vec<f64> = log_grid(-4, 0, 20);
    for n in [2, 20, 200, 2000] {
        let rows = theory::relative_std_vs_c(n, &c_grid, lambda, d_sigma, &moments)?;
        curves.push(ScalingCurve {
            curve: format!("n={n}"),
            rows,
        });
    }

    let ns = dimension_grid();
    for c in [1.0, 0.5, 0.2] {
        let rows = theory::relative_std_curve_fixed_c(c, &ns, lambda, d_sigma, &moments)?;
        curves.push(ScalingCurve {
            curve: format!("c={c}"),
            rows,
        });
    }
    for (label, alpha) in [("1/4", 0.25), ("1/3", 1.0 / 3.0), ("1/2", 0.5), ("1", 1.0)] {
        let spec = ScalingSpec::new(alpha, ns.clone())?;
        let rows = theory::relative_std_curve(&spec, lambda, d_sigma, &moments)?;
        curves.push(ScalingCurve {
            curve: format!("alpha={label}"),
            rows,
        });
    }

    out.emit(|w, format| match format {
        Format::Csv => report::write_scaling_csv(w, &curves),
        Format::Json => report::write_scaling_json(
            w,
            ScalingBody {
                lambda,
                d_sigma,
                curves: curves.clone(),
            },
        ),
    })
}

fn moments(lambda: u32, rank: Option<u32>, out: &OutArgs) -> Result<()> {
    let ranks = match rank {
        Some(r) => vec![r],
        None => (1..=lambda).collect(),
    };
    let tables = ranks
        .into_iter()
        .map(|r| {
            let spec = OrderStatSpec::new(lambda, r)?;
            Ok(moments_quadrature(spec, MAX_MOMENT, DEFAULT_TOL)?)
        })
        .collect::<Result<Vec<_>>>()?;
    out.emit(|w, format| match format {
        Format::Csv => report::write_moments_csv(w, &tables),
        Format::Json => report::write_moments_json(w, &tables),
    })
}

fn run(cli: Cli) -> Result<bool> {
    configure_threads()?;
    match &cli.command {
        Command::Predict { params, out } => predict(params, out)?,
        Command::Simulate {
            params,
            ensemble,
            out,
        } => simulate(params, ensemble, out)?,
        Command::Verify {
            params,
            ensemble,
            out,
        } => return verify(params, ensemble, out),
        Command::Figure1 {
            algo,
            ensemble,
            out,
        } => figure1(algo, ensemble, out)?,
        Command::Figure2 {
            lambda,
            d_sigma,
            out,
        } => figure2(*lambda, *d_sigma, out)?,
        Command::Moments { lambda, rank, out } => moments(*lambda, *rank, out)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
