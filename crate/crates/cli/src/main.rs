//! Command-line front end. Every subcommand writes CSV with a header row.
//!
//! Exit codes: 0 success, 2 invalid input, 3 the exact oracle would exceed
//! its atom budget.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lattice_edgeworth::bootstrap::CoverageResult;
use lattice_edgeworth::edgeworth::{full_expansion, BlockingConfig, ExpansionBreakdown, Variant};
use lattice_edgeworth::lattice::{BernoulliConvention, MeanSumModel, StandardizedOracle, DEFAULT_ORACLE_BUDGET};
use lattice_edgeworth::model_file::ModelSpec;
use lattice_edgeworth::number_theory::{
    chi_sup, plan_sample_sizes, ratio_diagnostics, type_sum, IrrationalSpec, PlanMode, Polynomial,
};
use lattice_edgeworth::numeric::{fmt_real, linear_grid};
use lattice_edgeworth::simulate::{run_coverage, run_figure1, ConventionName, ExperimentConfig};
use lattice_edgeworth::Error;

#[derive(Parser)]
#[command(name = "lattice-edgeworth", version, about = "Expansions, exact laws and experiments for sums of lattice sample means")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expansion terms over a grid of standardized points.
    Eval(EvalArgs),
    /// Exact standardized CDF by convolution.
    Oracle(OracleArgs),
    /// Sample-size pairs tracking an irrational ratio.
    Plan(PlanArgs),
    /// Oscillation diagnostics for the lattice ratio of two samples.
    Diagnose(DiagnoseArgs),
    /// Monte Carlo and bootstrap experiments from a JSON config.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Sup over shifts of the weighted sawtooth sum along `tau * i`.
    Chi(ChiArgs),
    /// Partial sum of 1 / <l rho0> for l = 1..m.
    Typesum(TypesumArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Model JSON file.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Read Bernoulli `p` as P(X = 1) instead of P(X = 0).
    #[arg(long)]
    success_prob: bool,
}

impl ModelArgs {
    fn load(&self) -> Result<MeanSumModel> {
        let text = read(&self.model)?;
        let convention = if self.success_prob { BernoulliConvention::SuccessProb } else { BernoulliConvention::Literal };
        Ok(ModelSpec::from_json(&text)?.to_model(convention)?)
    }
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Points as `start:end:step`, or a single value.
    #[arg(long, value_name = "A:B:STEP", allow_hyphen_values = true)]
    x_grid: String,
    /// smooth, one-sample, two-sample-direct or two-sample-blocked.
    #[arg(long, default_value = "two-sample-direct")]
    variant: Variant,
    /// Block exponent for the blocked variant.
    #[arg(long, default_value_t = 0.4)]
    alpha: f64,
    /// Taylor order for the blocked variant.
    #[arg(long, default_value_t = 8)]
    r0: u32,
    /// Series truncation threshold.
    #[arg(long, default_value_t = 1e-14)]
    tail_eps: f64,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated standardized points.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required_unless_present = "x_grid")]
    x: Vec<f64>,
    /// Points as `start:end:step`.
    #[arg(long, value_name = "A:B:STEP", allow_hyphen_values = true, conflicts_with = "x")]
    x_grid: Option<String>,
    /// Cap on the product of per-population atom counts.
    #[arg(long, default_value_t = DEFAULT_ORACLE_BUDGET)]
    budget: u64,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    /// Named constant (sqrt2, sqrt3, sqrt5, e, pi_over_2, golden) or a decimal string.
    #[arg(long)]
    rho0: String,
    #[arg(long)]
    n_max: u64,
    /// convergent or nearest-int.
    #[arg(long, default_value = "convergent")]
    mode: PlanMode,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    e1: f64,
    #[arg(long)]
    e2: f64,
    #[arg(long)]
    n1: u64,
    #[arg(long)]
    n2: u64,
    /// Largest multiplier in the profile.
    #[arg(long = "L", default_value_t = 20)]
    l_max: u64,
    /// CSV destination; the summary then goes to stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// P{(S - ES)/sd <= z_alpha} across sample sizes.
    Pvals(SimulateArgs),
    /// Coverage of the one-sided percentile-bootstrap interval.
    Coverage(CoverageArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment JSON file.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Read Bernoulli `p` as P(X = 1).
    #[arg(long)]
    success_prob: bool,
}

#[derive(Args)]
struct CoverageArgs {
    #[command(flatten)]
    common: SimulateArgs,
    /// Resample from the fitted two-point law.
    #[arg(long)]
    parametric: bool,
    /// literal: (-inf, S - s_alpha]; complement: (-inf, S - s_{1-alpha}].
    #[arg(long)]
    convention: Option<String>,
}

#[derive(Args)]
struct ChiArgs {
    #[arg(long)]
    n: u64,
    /// Named constant or a number.
    #[arg(long)]
    tau: String,
    /// Polynomial coefficients c0,c1,... in i/n; default 1.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    poly: Option<Vec<f64>>,
}

#[derive(Args)]
struct TypesumArgs {
    #[arg(long)]
    rho0: String,
    #[arg(long)]
    m: u64,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| p.trim().parse::<f64>().map_err(|_| anyhow!("bad number {p:?} in grid {s:?}"));
    let grid = match parts[..] {
        [x] => vec![num(x)?],
        [a, b, step] => linear_grid(num(a)?, num(b)?, num(step)?),
        _ => bail!("grid must be start:end:step or a single value, got {s:?}"),
    };
    if grid.is_empty() || grid.iter().any(|x| !x.is_finite()) {
        bail!("grid {s:?} has no finite points");
    }
    Ok(grid)
}

fn parse_real(s: &str) -> Result<f64> {
    match IrrationalSpec::named(s) {
        Ok(spec) => Ok(spec.value()),
        Err(_) => s.parse::<f64>().map_err(|_| anyhow!("expected a named constant or a number, got {s:?}")),
    }
}

fn eval(args: &EvalArgs) -> Result<()> {
    let model = args.model.load()?;
    let cfg = BlockingConfig::new(args.alpha, args.r0, args.tail_eps)?;
    let mut out = String::from(ExpansionBreakdown::CSV_HEADER);
    out.push('\n');
    for x in parse_grid(&args.x_grid)? {
        out.push_str(&full_expansion(&model, x, args.variant, &cfg)?.csv_row());
        out.push('\n');
    }
    emit(args.out.as_deref(), &out)
}

fn oracle(args: &OracleArgs) -> Result<()> {
    let model = args.model.load()?;
    let xs = match &args.x_grid {
        Some(g) => parse_grid(g)?,
        None => args.x.clone(),
    };
    let o = StandardizedOracle::with_budget(&model, args.budget)?;
    let mut out = String::from("x,cdf\n");
    for x in xs {
        out.push_str(&format!("{},{}\n", fmt_real(x), fmt_real(o.cdf(x))));
    }
    emit(args.out.as_deref(), &out)
}

fn plan(args: &PlanArgs) -> Result<()> {
    let rho = IrrationalSpec::parse(&args.rho0)?;
    emit(args.out.as_deref(), &plan_sample_sizes(&rho, args.n_max, args.mode)?.to_csv())
}

fn diagnose(args: &DiagnoseArgs) -> Result<()> {
    let d = ratio_diagnostics(args.e1, args.e2, args.n1, args.n2, args.l_max)?;
    match &args.out {
        Some(p) => {
            emit(Some(p), &d.to_csv())?;
            println!("{}", d.summary());
        }
        None => {
            emit(None, &d.to_csv())?;
            eprintln!("{}", d.summary());
        }
    }
    Ok(())
}

fn load_config(args: &SimulateArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_json_with_seed(&read(&args.config)?, args.seed)?;
    if args.success_prob {
        cfg.success_prob = true;
    }
    Ok(cfg)
}

/// Returns whether any row hit the oracle budget.
fn simulate(cmd: &SimulateCommand) -> Result<bool> {
    match cmd {
        SimulateCommand::Pvals(args) => {
            let table = run_figure1(&load_config(args)?)?;
            emit(Some(&args.out), &table.to_csv())?;
            Ok(table.has_infeasible())
        }
        SimulateCommand::Coverage(args) => {
            let mut cfg = load_config(&args.common)?;
            if args.parametric {
                cfg.parametric = true;
            }
            if let Some(c) = &args.convention {
                cfg.convention = match c.as_str() {
                    "literal" => ConventionName::Literal,
                    "complement" => ConventionName::Complement,
                    other => bail!("unknown convention {other:?}"),
                };
            }
            let mut out = String::from(CoverageResult::CSV_HEADER);
            out.push('\n');
            for r in run_coverage(&cfg)? {
                out.push_str(&r.csv_row());
                out.push('\n');
            }
            emit(Some(&args.common.out), &out)?;
            Ok(false)
        }
    }
}

fn chi(args: &ChiArgs) -> Result<()> {
    let tau = parse_real(&args.tau)?;
    let q = args.poly.clone().map(Polynomial).unwrap_or_else(Polynomial::one);
    let v = chi_sup(args.n, &q, tau)?;
    emit(None, &format!("n,tau,chi\n{},{},{}\n", args.n, fmt_real(tau), fmt_real(v)))
}

fn typesum(args: &TypesumArgs) -> Result<()> {
    let rho = IrrationalSpec::parse(&args.rho0)?;
    let v = type_sum(&rho, args.m)?;
    emit(None, &format!("rho0,m,type_sum\n{},{},{}\n", args.rho0, args.m, fmt_real(v)))
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("LE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| anyhow!("LE_THREADS must be a nonnegative integer, got {raw:?}"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    configure_threads()?;
    let flagged = match &cli.command {
        Command::Eval(a) => eval(a).map(|_| false),
        Command::Oracle(a) => oracle(a).map(|_| false),
        Command::Plan(a) => plan(a).map(|_| false),
        Command::Diagnose(a) => diagnose(a).map(|_| false),
        Command::Simulate(c) => simulate(c),
        Command::Chi(a) => chi(a).map(|_| false),
        Command::Typesum(a) => typesum(a).map(|_| false),
    }?;
    if flagged {
        eprintln!("error: some rows exceed the oracle budget and are flagged oracle-infeasible");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let infeasible = matches!(e.downcast_ref::<Error>(), Some(Error::OracleInfeasible { .. }));
            ExitCode::from(if infeasible { 3 } else { 2 })
        }
    }
}
