//! Command-line entry point.
//!
//! Exit codes: 0 when every asserted check passed, 1 when one failed, 2 for
//! configuration, admissibility and input errors, 3 for numerical failures.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gradlab_core::calculus::{derivatives, dot, DiffusionSpec, HamiltonianSpec, InitialDatum, ProblemSpec};
use gradlab_core::experiments::{
    default_conservation_corpus, elliptic_gates, parabolic_gates, run_conservation_study, run_elliptic_study,
    run_linf_study, run_scaling_study, ConservationSpec, EllipticLadder, ExperimentError, LadderSpec, LinfSpec,
    Table,
};
use gradlab_core::exponents::{
    borderline_table, coverage, elliptic_table, growth_threshold, parabolic_table, parabolic_threshold,
    parse_rational, Coverage, EllipticRegime, ParamPoint, Scalar,
};
use gradlab_core::identities::{
    bochner_closed_report, bochner_residual, boundary_sign_check, coercivity_check, energy_inequality, gn_check,
    integral_identity_gap, observed_order, residual_max, IdentityError, IdentityReport,
};
use gradlab_core::mesh::{BoxDomain, Grid, SpaceTimeField};
use gradlab_core::norms::{lebesgue_qt, mixed_inf_rho, second_order_weighted, superlevel_measure, VectorSeries};
use gradlab_core::registry::{manufacture, smooth_corpus, ConstantFn, SharedSolution};
use gradlab_core::solver::{solve_elliptic, solve_parabolic, SolveError};
use gradlab_core::Point;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    parse_config, to_canonical_json, Checked, ConfigError, ConserveConfig, EllipticConfig, LinfConfig,
    ProblemConfig, ScalingConfig, DEFAULT_SEED,
};
use crate::exec::Parallel;
use crate::io::{fmt_float, read_series, write_series, IoError};
use crate::report::{emit_report, num, pretty, sha256_hex, table_csv, OutputSet, Report, RunContext};

pub const OUT_ENV: &str = "GRADLAB_OUT";

#[derive(Debug, Parser)]
#[command(name = "gradlab", version, about = "Gradient estimates for regularized quasilinear evolution problems")]
pub struct Cli {
    /// Seed for every random choice; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for independent solves (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// No progress or check lines on stderr; errors are still printed.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exponent table and admissibility of a parameter point, as JSON.
    Exponents(ExponentsArgs),
    /// Solve one problem and write its snapshots.
    Solve(StudyArgs),
    /// Check the identities for w = |Du|² on a manufactured solution.
    VerifyIdentities(IdentityArgs),
    /// Evaluate one norm of a stored field series.
    Norms(NormsArgs),
    /// Forcing-amplitude ladder of the evolution problem.
    Scaling(StudyArgs),
    /// Gradient conservation ratios over a corpus.
    Conserve(StudyArgs),
    /// Bounded-gradient study with singular forcing.
    LinfCheck(StudyArgs),
    /// Forcing-amplitude ladder of the stationary problem.
    Elliptic(StudyArgs),
}

#[derive(Debug, Args)]
pub struct ExponentsArgs {
    #[arg(long)]
    pub p: String,
    #[arg(long = "N")]
    pub dim: u32,
    #[arg(long)]
    pub m: String,
    #[arg(long, default_value = "0")]
    pub gamma: String,
    /// Stationary problem instead of the evolution one.
    #[arg(long)]
    pub elliptic: bool,
    /// Integrability `r` of the borderline case `m = N+2`.
    #[arg(long)]
    pub r: Option<String>,
    /// Weight `ω` of the borderline case `m = N+2`.
    #[arg(long)]
    pub omega: Option<String>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; falls back to the config's `output`.
    #[arg(long, env = OUT_ENV)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IdentityArgs {
    /// Manufactured solution by name.
    #[arg(long)]
    pub case: String,
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Nodes per axis.
    #[arg(long, default_value_t = 33)]
    pub grid: usize,
    #[arg(long = "N", default_value_t = 2)]
    pub dim: usize,
    /// Horizon of the sampled record.
    #[arg(long = "T", default_value_t = 0.1)]
    pub horizon: f64,
    /// Random nodes for the closed-form check.
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormKindArg {
    /// `‖u‖_{L^m(Q_T)}` of the stored field itself.
    Field,
    /// `‖Du‖_{L^q(Q_T)}`.
    Lebesgue,
    /// `sup_t ‖Du(t)‖_{L^ρ}`.
    Mixed,
    /// `‖|Du|^ω Du‖_{L²(0,T;H¹)}`.
    SecondOrder,
    /// `|{ε + |Du|² ≥ k}|`, with `k` given as the exponent.
    Superlevel,
}

#[derive(Debug, Args)]
pub struct NormsArgs {
    /// Field series written by `solve`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub kind: NormKindArg,
    #[arg(long)]
    pub exponent: f64,
    /// Shift of the superlevel sets.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
}

/// Why a command could not complete.
#[derive(Debug)]
pub enum Failure {
    /// Bad config, inadmissible parameters, unreadable input: exit 2.
    Input(String),
    /// Budget exhausted, non-finite values, no convergence: exit 3.
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Config(_)
            | SolveError::Problem(_)
            | SolveError::InitialGridMismatch
            | SolveError::NotNeumann { .. }
            | SolveError::WrongProblemKind => Failure::Input(e.to_string()),
            SolveError::Stability { .. }
            | SolveError::NonFinite { .. }
            | SolveError::Budget { .. }
            | SolveError::Convergence { .. } => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Admissibility(_) | ExperimentError::Invalid(_) => Failure::Input(e.to_string()),
            ExperimentError::Solve(s) => s.into(),
            ExperimentError::Fit(_) | ExperimentError::Norm(_) => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<IdentityError> for Failure {
    fn from(e: IdentityError) -> Self {
        match e {
            IdentityError::BetaNotPositive(_) | IdentityError::RBelowOne(_) => Failure::Input(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

/// Parses `args`, runs the command, writes to `stdout`, and returns the
/// exit code.
pub fn run_with(args: impl IntoIterator<Item = String>, stdout: &mut dyn std::io::Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli, stdout) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

/// `Ok(passed)` when the command completed.
pub fn run(cli: &Cli, stdout: &mut dyn std::io::Write) -> Result<bool, Failure> {
    let exec = Parallel::new(cli.threads).map_err(|e| Failure::Input(e.to_string()))?;
    let mut emit = |text: &str| stdout.write_all(text.as_bytes()).map_err(|e| Failure::Input(e.to_string()));
    match &cli.command {
        Command::Exponents(a) => {
            // the document is written either way; an inadmissible point is
            // still an admissibility error
            let (doc, admissible) = exponents_json(a)?;
            emit(&pretty(&doc))?;
            match doc["error"].as_str() {
                Some(e) if !admissible => Err(Failure::Input(e.to_string())),
                _ => Ok(true),
            }
        }
        Command::Solve(a) => run_solve(a, cli.seed, cli.quiet),
        Command::VerifyIdentities(a) => {
            let (table, passed) = verify_identities(a, cli.seed.unwrap_or(DEFAULT_SEED))?;
            emit(&table_csv(&table))?;
            Ok(passed)
        }
        Command::Norms(a) => {
            emit(&table_csv(&norms_row(a)?))?;
            Ok(true)
        }
        Command::Scaling(a) => {
            let (cfg, ctx, out) = load_study::<ScalingConfig>(a, "scaling", cli.seed, |c| &mut c.seed)?;
            let pr = &cfg.problem;
            let gates = parabolic_gates(pr.p, pr.dim as u32, cfg.m, pr.gamma).map_err(ExperimentError::from)?;
            let spec = LadderSpec {
                base_problem: pr.problem_spec(),
                scalings: cfg.scalings.clone(),
                m: cfg.m,
                gates,
                slack: cfg.slack.into(),
            };
            let report = run_scaling_study(&spec, &pr.solve_config(), &exec)?;
            finish_study(&report, &out, &ctx, cli.quiet)
        }
        Command::Elliptic(a) => {
            let (cfg, ctx, out) = load_study::<EllipticConfig>(a, "elliptic", cli.seed, |c| &mut c.seed)?;
            let pr = &cfg.problem;
            let gates = elliptic_gates(pr.p, pr.dim as u32, cfg.m, pr.gamma).map_err(ExperimentError::from)?;
            let ladder = LadderSpec {
                base_problem: pr.problem_spec(),
                scalings: cfg.scalings.clone(),
                m: cfg.m,
                gates,
                slack: cfg.slack.into(),
            };
            let spec = EllipticLadder { ladder, refine: cfg.refine };
            let report = run_elliptic_study(&spec, &pr.solve_config(), &exec)?;
            finish_study(&report, &out, &ctx, cli.quiet)
        }
        Command::Conserve(a) => {
            let (cfg, ctx, out) = load_study::<ConserveConfig>(a, "conserve", cli.seed, |c| &mut c.seed)?;
            let pr = &cfg.problem;
            let spec = ConservationSpec {
                base_problem: pr.problem_spec(),
                p_values: cfg.p_values.clone(),
                m_values: cfg.m_values.clone(),
                cases: cfg.corpus().unwrap_or_else(|| default_conservation_corpus(&pr.box_domain())),
                slack: cfg.slack.into(),
            };
            let report = run_conservation_study(&spec, &pr.solve_config(), &exec)?;
            finish_study(&report, &out, &ctx, cli.quiet)
        }
        Command::LinfCheck(a) => {
            let (cfg, ctx, out) = load_study::<LinfConfig>(a, "linf-check", cli.seed, |c| &mut c.seed)?;
            let pr = &cfg.problem;
            let spec = LinfSpec {
                base_problem: pr.problem_spec(),
                m: cfg.m,
                amplitude: cfg.amplitude,
                center: cfg.center_point(),
                sigma: cfg.sigma,
                control_sigma: cfg.control_sigma,
                grids: cfg.grids.clone(),
                snapshots: cfg.snapshots,
                slack: cfg.slack.into(),
            };
            let report = run_linf_study(&spec, &pr.solve_config(), &exec)?;
            finish_study(&report, &out, &ctx, cli.quiet)
        }
    }
}

fn read_config<T: DeserializeOwned + Checked>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

/// `--out`, then `GRADLAB_OUT` (both through clap), then the config's
/// `output`, then `gradlab-out/<subcommand>`.
fn output_dir(args: &StudyArgs, problem: &ProblemConfig, subcommand: &str) -> PathBuf {
    args.out
        .clone()
        .or_else(|| problem.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("gradlab-out").join(subcommand))
}

trait HasProblem {
    fn problem(&self) -> &ProblemConfig;
}

macro_rules! has_problem {
    ($($t:ty),*) => {$(
        impl HasProblem for $t {
            fn problem(&self) -> &ProblemConfig {
                &self.problem
            }
        }
    )*};
}
has_problem!(ScalingConfig, EllipticConfig, ConserveConfig, LinfConfig);

fn load_study<T: DeserializeOwned + Checked + Serialize + HasProblem>(
    args: &StudyArgs,
    subcommand: &str,
    seed: Option<u64>,
    seed_field: impl Fn(&mut T) -> &mut u64,
) -> Result<(T, RunContext, PathBuf), Failure> {
    let mut cfg: T = read_config(&args.config)?;
    if let Some(s) = seed {
        *seed_field(&mut cfg) = s;
    }
    let seed = *seed_field(&mut cfg);
    let ctx = RunContext { subcommand: subcommand.to_string(), config: to_canonical_json(&cfg), seed };
    let out = output_dir(args, cfg.problem(), subcommand);
    Ok((cfg, ctx, out))
}

fn finish_study(report: &impl Report, out: &Path, ctx: &RunContext, quiet: bool) -> Result<bool, Failure> {
    emit_report(report, out, ctx)?;
    if quiet {
        return Ok(report.passed());
    }
    for c in report.checks() {
        let mark = match (c.passed, c.asserted) {
            (true, _) => "pass",
            (false, true) => "FAIL",
            (false, false) => "fail (reported only)",
        };
        eprintln!("{mark:>6}  {}  {}", c.name, c.detail);
    }
    for f in report.flags() {
        eprintln!("  flag  {f}");
    }
    Ok(report.passed())
}

fn run_solve(args: &StudyArgs, seed: Option<u64>, quiet: bool) -> Result<bool, Failure> {
    let cfg: ProblemConfig = read_config(&args.config)?;
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let ctx = RunContext { subcommand: "solve".into(), config: to_canonical_json(&cfg), seed };
    let out = output_dir(args, &cfg, "solve");
    let spec = cfg.problem_spec();
    let solve_cfg = cfg.solve_config();
    let started = Instant::now();
    let result = if spec.is_elliptic() { solve_elliptic(&spec, &solve_cfg) } else { solve_parabolic(&spec, &solve_cfg) }?;
    let elapsed = started.elapsed().as_secs_f64();
    fs::create_dir_all(&out).map_err(|e| IoError::io(&out, e))?;
    let series = out.join("snapshots.csv");
    write_series(&series, &result.field)?;
    let mut files = OutputSet::default();
    files.record("snapshots.csv", &fs::read(&series).map_err(|e| IoError::io(&series, e))?);

    let dt_text: String = result.dt_history.iter().map(|d| fmt_float(*d) + "\n").collect();
    let last = result.field.last();
    let grads = derivatives(last);
    let w: Vec<f64> = grads.iter().map(|d| dot(&d.grad, &d.grad)).collect();
    let weights = last.grid().node_weights();
    let l2 = |vals: &mut dyn Iterator<Item = f64>| -> f64 {
        vals.zip(&weights).map(|(v, wt)| v * wt).sum::<f64>().sqrt()
    };
    let final_norms = json!({
        "max_abs_u": num(last.max_abs()),
        "l2_u": num(l2(&mut last.values().iter().map(|v| v * v))),
        "max_grad": num(w.iter().fold(0.0_f64, |a, b| a.max(*b)).sqrt()),
        "l2_grad": num(l2(&mut w.iter().copied())),
    });
    let extra = json!({
        "kind": if spec.is_elliptic() { "elliptic" } else { "parabolic" },
        "steps": result.steps(),
        "snapshots": result.field.len(),
        "final_time": num(result.field.horizon()),
        "dt_history_sha256": sha256_hex(dt_text.as_bytes()),
        "dt_min": num(result.dt_history.iter().copied().fold(f64::INFINITY, f64::min)),
        "dt_max": num(result.dt_history.iter().copied().fold(0.0, f64::max)),
        "final_residual": result.final_residual().map(num),
        "final_norms": final_norms,
    });
    files.finish(&out, &ctx, extra)?;
    if !quiet {
        eprintln!("{} steps in {elapsed:.2} s, output in {}", result.steps(), out.display());
    }
    Ok(true)
}

fn show<T: Scalar + Display>(x: &T) -> Value {
    Value::from(x.to_string())
}

fn put<T: Scalar + Display>(doc: &mut serde_json::Map<String, Value>, key: &str, x: &T) {
    doc.insert(key.to_string(), show(x));
    doc.insert(format!("{key}_value"), num(x.to_f64()));
}

fn exponents_json(a: &ExponentsArgs) -> Result<(Value, bool), Failure> {
    let parse = |name: &str, s: &str| {
        parse_rational(s).ok_or_else(|| Failure::Input(format!("--{name}: `{s}` is not a number")))
    };
    let p = parse("p", &a.p)?;
    let m = parse("m", &a.m)?;
    let gamma = parse("gamma", &a.gamma)?;
    let borderline = match (&a.r, &a.omega) {
        (Some(r), Some(o)) => Some((parse("r", r)?, parse("omega", o)?)),
        (None, None) => None,
        _ => return Err(Failure::Input("--r and --omega go together".into())),
    };
    let pt = ParamPoint::new(p.clone(), a.dim, m.clone(), gamma.clone());
    let mut doc = serde_json::Map::new();
    doc.insert("kind".into(), json!(if a.elliptic { "elliptic" } else { "parabolic" }));
    put(&mut doc, "p", &p);
    doc.insert("N".into(), json!(a.dim));
    put(&mut doc, "m", &m);
    put(&mut doc, "gamma", &gamma);
    let mut error: Option<String> = None;
    if a.elliptic {
        match elliptic_table(&pt) {
            Ok(t) => {
                put(&mut doc, "m_p_ell", &t.m_p_ell);
                put(&mut doc, "theta", &t.theta);
                doc.insert("regime".into(), json!(t.regime.flag()));
                match &t.regime {
                    EllipticRegime::Subcritical { q, omega, theta_second_order } => {
                        put(&mut doc, "q", q);
                        put(&mut doc, "omega", omega);
                        put(&mut doc, "theta_second_order", theta_second_order);
                    }
                    EllipticRegime::Critical { omega0 } => put(&mut doc, "omega0", omega0),
                    EllipticRegime::Supercritical { bounded } => {
                        doc.insert("bounded_gradient".into(), json!(bounded));
                    }
                }
            }
            Err(e) => error = Some(e.to_string()),
        }
    } else {
        if let Ok(ell) = growth_threshold(&p, a.dim) {
            put(&mut doc, "ell", &ell);
            doc.insert("gamma_admissible".into(), json!(gamma < ell));
        }
        if let Ok(m_p) = parabolic_threshold(&p, a.dim) {
            put(&mut doc, "m_p", &m_p);
        }
        let cov = coverage(&pt);
        if let Ok(c) = &cov {
            doc.insert("coverage".into(), json!(c.as_str()));
        }
        match cov {
            Ok(Coverage::Borderline) => match borderline {
                Some((r, omega)) => match borderline_table(&pt, r, omega) {
                    Ok(t) => {
                        put(&mut doc, "r", &t.r);
                        put(&mut doc, "omega", &t.omega);
                        put(&mut doc, "omega0", &t.omega0);
                        put(&mut doc, "theta", &t.theta);
                        put(&mut doc, "theta_second_order", &t.theta_second_order);
                    }
                    Err(e) => error = Some(e.to_string()),
                },
                None => error = Some("m = N+2 needs --r and --omega".into()),
            },
            Ok(Coverage::Bounded) => {
                if let Some(ell) = growth_threshold(&p, a.dim).ok().filter(|ell| gamma >= *ell) {
                    error = Some(format!("gamma = {gamma} must be strictly below the growth threshold {ell}"));
                }
            }
            _ => match parabolic_table(&pt) {
                Ok(t) => {
                    for (k, v) in [
                        ("q", &t.q),
                        ("rho", &t.rho),
                        ("omega", &t.omega),
                        ("mu", &t.mu),
                        ("s", &t.s),
                        ("beta", &t.beta),
                        ("theta", &t.theta),
                        ("theta_mixed", &t.theta_mixed),
                        ("theta_second_order", &t.theta_second_order),
                        ("nu", &t.nu),
                        ("nu_prime", &t.nu_prime),
                    ] {
                        put(&mut doc, k, v);
                    }
                }
                Err(e) => error = Some(e.to_string()),
            },
        }
    }
    let admissible = error.is_none();
    doc.insert("admissible".into(), json!(admissible));
    doc.insert("error".into(), error.map(Value::from).unwrap_or(Value::Null));
    Ok((Value::Object(doc), admissible))
}

fn identity_skeleton(a: &IdentityArgs, domain: BoxDomain) -> Result<ProblemSpec, Failure> {
    let diffusion = DiffusionSpec::power(a.p).map_err(|e| Failure::Input(e.to_string()))?;
    let spec = ProblemSpec {
        diffusion,
        hamiltonian: HamiltonianSpec::new(a.gamma, Arc::new(ConstantFn(0.0))),
        epsilon: a.eps,
        domain,
        horizon: a.horizon,
        initial: InitialDatum::Function(Arc::new(ConstantFn(0.0))),
        lambda: 0.0,
    };
    spec.validate().map_err(|e| Failure::Input(e.to_string()))?;
    Ok(spec)
}

fn identity_row(table: &mut Table, name: &str, r: &IdentityReport, tolerance: &str, passed: bool) {
    use gradlab_core::experiments::Cell;
    table.rows.push(vec![
        Cell::Text(name.to_string()),
        Cell::Num(r.lhs),
        Cell::Num(r.rhs),
        Cell::Num(r.abs_gap),
        Cell::Num(r.rel_gap),
        Cell::Num(r.grid_spacing),
        Cell::Num(r.convergence_order.unwrap_or(f64::NAN)),
        Cell::Text(tolerance.to_string()),
        Cell::Text(if passed { "true" } else { "false" }.to_string()),
    ]);
}

/// Samples `u` on `[0, T]` with a step of `h²/4`.
fn sampled_record(solution: &SharedSolution, grid: Grid, horizon: f64) -> SpaceTimeField {
    let h = grid.h_min();
    let steps = (horizon / (h * h / 4.0)).ceil() as usize;
    let times: Vec<f64> = (0..=steps).map(|i| horizon * i as f64 / steps as f64).collect();
    SpaceTimeField::from_fn(grid, times, |x, t| solution.jet(x, t).u).expect("increasing times")
}

/// One row per check; the second value is whether all of them passed.
pub fn verify_identities(a: &IdentityArgs, seed: u64) -> Result<(Table, bool), Failure> {
    if !(1..=3).contains(&a.dim) {
        return Err(Failure::Input(format!("N must be 1, 2 or 3 (got {})", a.dim)));
    }
    if a.grid < 5 {
        return Err(Failure::Input(format!("grid must be at least 5 (got {})", a.grid)));
    }
    let domain = BoxDomain::unit(a.dim).expect("valid dimension");
    let corpus = smooth_corpus(&domain);
    let Some((_, solution)) = corpus.iter().find(|(name, _)| *name == a.case) else {
        let names: Vec<&str> = corpus.iter().map(|(n, _)| *n).collect();
        return Err(Failure::Input(format!("unknown case `{}` (known: {})", a.case, names.join(", "))));
    };
    let skeleton = identity_skeleton(a, domain)?;
    let spec = manufacture(solution.clone(), &skeleton).map_err(|e| Failure::Input(e.to_string()))?;
    let mut table = Table {
        columns: ["check", "lhs", "rhs", "abs_gap", "rel_gap", "grid_spacing", "order", "tolerance", "passed"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        rows: Vec::new(),
    };
    let mut all = true;
    let mut row = |table: &mut Table, name: &str, r: &IdentityReport, tol: &str, ok: bool| {
        all &= ok;
        identity_row(table, name, r, tol, ok);
    };

    let t_mid = 0.5 * a.horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Point> = (0..a.samples.max(1))
        .map(|_| {
            let mut x = [0.0; 3];
            for c in x.iter_mut().take(a.dim) {
                *c = rng.gen::<f64>();
            }
            x
        })
        .collect();
    let closed = bochner_closed_report(solution.as_ref(), &spec, &points, t_mid)?;
    row(&mut table, "bochner-closed-form", &closed, "rel_gap<=1e-8", closed.rel_gap <= 1e-8);

    let residual = |n: usize| -> Result<(f64, f64), Failure> {
        let g = Grid::uniform(domain, n).expect("valid grid");
        let h = g.h_min();
        let u = SpaceTimeField::from_fn(g, vec![0.0, h, 2.0 * h], |x, t| solution.jet(x, t).u)
            .expect("increasing times");
        Ok((residual_max(&bochner_residual(&u, &spec, 1)?, false), h))
    };
    let (coarse, hc) = residual(a.grid)?;
    let (fine, hf) = residual(2 * a.grid - 1)?;
    let order = observed_order(coarse, fine, hc, hf);
    let discrete = IdentityReport::new(coarse, 0.0, hc).with_order(order);
    row(&mut table, "bochner-discrete", &discrete, "order>=1.9", order >= 1.9 || coarse == 0.0);

    let grid = Grid::uniform(domain, a.grid).expect("valid grid");
    let h = grid.h_max();
    let u = sampled_record(solution, grid, a.horizon);
    let gap = integral_identity_gap(&u, &spec, a.beta, a.horizon)?;
    row(&mut table, "integral-identity", &gap, "rel_gap<=10h^2", gap.rel_gap <= 10.0 * h * h);

    let coercive = coercivity_check(&u, &spec, a.beta)?;
    row(&mut table, "coercivity", &coercive.report, "margin>=0", coercive.holds());

    let energy = energy_inequality(&u, &spec, a.beta, a.horizon)?;
    let slack = 10.0 * h * h * energy.rhs.abs().max(1.0);
    row(&mut table, "energy-inequality", &energy, "lhs<=rhs+10h^2", energy.lhs <= energy.rhs + slack);

    // on resolved data the discrete normal derivative of w is a consistency
    // error; past 10h² it must at least decay at second order
    let mut sign = (f64::NEG_INFINITY, 0.0);
    for (snap, &t) in u.snapshots().iter().zip(u.times()) {
        let s = boundary_sign_check(snap)?;
        if s > sign.0 {
            sign = (s, t);
        }
    }
    let mut sign_report = IdentityReport::new(sign.0, 0.0, h);
    let mut sign_ok = sign.0 <= 10.0 * h * h;
    if !sign_ok {
        let fine = Grid::uniform(domain, 2 * a.grid - 1).expect("valid grid");
        let snap = SpaceTimeField::from_fn(fine, vec![0.0], |x, _| solution.jet(x, sign.1).u).expect("one time");
        let s = boundary_sign_check(snap.last())?;
        let order = observed_order(sign.0, s.abs(), h, fine.h_max());
        sign_report = sign_report.with_order(order);
        sign_ok = order >= 1.9;
    }
    row(&mut table, "boundary-sign", &sign_report, "max<=10h^2 or order>=1.9", sign_ok);

    let gn = gn_check(&u, 2.0)?;
    row(&mut table, "gagliardo-nirenberg", &gn.report, "ratio finite", gn.ratio.is_finite());
    Ok((table, all))
}

pub fn norms_row(a: &NormsArgs) -> Result<Table, Failure> {
    use gradlab_core::experiments::Cell;
    let u = read_series(&a.input)?;
    let bad = |e: gradlab_core::norms::NormError| Failure::Input(e.to_string());
    let grads = VectorSeries::gradients(&u);
    let value = match a.kind {
        NormKindArg::Field => lebesgue_qt(&u, a.exponent).map_err(bad)?,
        NormKindArg::Lebesgue => lebesgue_qt(&grads.magnitude(), a.exponent).map_err(bad)?,
        NormKindArg::Mixed => mixed_inf_rho(&grads.magnitude(), a.exponent).map_err(bad)?.value,
        NormKindArg::SecondOrder => second_order_weighted(&grads, a.exponent).map_err(bad)?.full,
        NormKindArg::Superlevel => {
            let w = grads.magnitude().map(|g| g * g);
            superlevel_measure(&w, a.exponent, a.epsilon).map_err(bad)?
        }
    };
    let kind = a.kind.to_possible_value().expect("named variant").get_name().to_string();
    Ok(Table {
        columns: ["input", "kind", "exponent", "epsilon", "snapshots", "value"].iter().map(|s| s.to_string()).collect(),
        rows: vec![vec![
            Cell::Text(a.input.display().to_string()),
            Cell::Text(kind),
            Cell::Num(a.exponent),
            Cell::Num(a.epsilon),
            Cell::Int(u.len() as i64),
            Cell::Num(value),
        ]],
    })
}
