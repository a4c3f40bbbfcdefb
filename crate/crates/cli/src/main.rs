//! `quack`: rules, certificates, simulations, metric tables and figure data
//! for the expert/quack/judge game.

mod figures;
mod output;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use quack_core::engine::{
    best_response_scan, quack_message_payoff, simulate, ExpertStrategy, Method, QuackStrategy,
    Side, StrategyProfile,
};
use quack_core::ext_struct::{solve_mbar_grid, solve_noise_equilibrium_with, NoiseOptions, NoiseSolver};
use quack_core::ext_variants::{
    identity_equilibrium, identity_equilibrium_with_rule, identity_mc, one_speaker_equilibrium_with,
    sequential_equilibrium, sequential_mc, IdentityJudge,
};
use quack_core::metrics::{learn_report, variance_reduction};
use quack_core::model::{Convention, GameConfig, NoiseSpec, PriorSpec};
use quack_core::rules::{
    build_max_rule, build_min_rule, build_min_rule_extrapolated, eps1_rule, quack_value,
    OffPath, PiecewiseRule,
};

use output::{write_csv, write_json, Metadata, Table};

#[derive(Parser)]
#[command(name = "quack", version, about = "Equilibria of the expert/quack/judge game")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a tie-breaking rule and write it as JSON.
    Rule(RuleArgs),
    /// Certify a rule file.
    Verify(VerifyArgs),
    /// Play the game with a configuration and strategy profile.
    Simulate(SimulateArgs),
    /// Closed-form metrics over a grid of epsilon_bar.
    Metrics(MetricsArgs),
    /// Extensions of the benchmark game.
    #[command(subcommand)]
    Ext(ExtCommand),
    /// CSV data behind the figures.
    Figures(FigureArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum RuleName {
    Max,
    Min,
    Eps1,
}

#[derive(Args, Serialize)]
struct RuleArgs {
    kind: RuleName,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 4096)]
    grid: usize,
    /// Allow the min rule for epsilon_bar in [1/4, 1/2); the output is flagged.
    #[arg(long)]
    extrapolate: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Check {
    Indifference,
    ExpertBr,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum MethodName {
    Quadrature,
    Mc,
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    check: Check,
    #[arg(long)]
    rule: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodName::Quadrature)]
    method: MethodName,
    /// Monte Carlo rounds per message.
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Messages (indifference) or states (expert-br) on the scan grid.
    #[arg(long)]
    grid: Option<usize>,
    /// Spread or regret tolerance; for `--method mc` a z-score bound.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Strategy profile; the truthful benchmark with the max rule when omitted.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000)]
    rounds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct MetricsArgs {
    /// `A:B:STEP`, inclusive of B up to rounding.
    #[arg(long, default_value = "0.05:1:0.05")]
    epsilon_grid: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ExtCommand {
    /// Quack mimicking a non-uniform prior.
    PriorMimic(PriorMimicArgs),
    /// Fixed point for full-support noise.
    Noise(NoiseArgs),
    /// Asymmetric identity priors.
    Identity(IdentityArgs),
    /// Sequential talk.
    Sequential(SequentialArgs),
    /// One speaker against an outside option.
    OneSpeaker(OneSpeakerArgs),
}

#[derive(Args, Serialize)]
struct PriorMimicArgs {
    #[arg(long, default_value_t = 0.3)]
    epsilon: f64,
    /// Curvature `c` of the log-prior `−c ω²`; 0 is the uniform prior.
    #[arg(long, default_value_t = 4.0)]
    prior_c: f64,
    #[arg(long, default_value_t = 4096)]
    grid: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum NoiseName {
    Gaussian,
    Triangular,
    Uniform,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SolverName {
    Multiplicative,
    FictitiousPlay,
}

#[derive(Args, Serialize)]
struct NoiseArgs {
    #[arg(long, value_enum, default_value_t = NoiseName::Gaussian)]
    noise: NoiseName,
    /// Standard deviation (gaussian) or half-width (triangular, uniform).
    #[arg(long, default_value_t = 0.1)]
    width: f64,
    #[arg(long, default_value_t = 401)]
    grid: usize,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 0.5)]
    damping: f64,
    #[arg(long, value_enum, default_value_t = SolverName::Multiplicative)]
    solver: SolverName,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct IdentityArgs {
    #[arg(long, default_value_t = 0.55)]
    p1: f64,
    #[arg(long, default_value_t = 0.25)]
    epsilon: f64,
    /// Fit the paired rule on this grid (moderate regime only).
    #[arg(long)]
    rule_grid: Option<usize>,
    /// Also simulate this many rounds.
    #[arg(long)]
    mc_rounds: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SequentialArgs {
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    #[arg(long)]
    mc_rounds: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct OneSpeakerArgs {
    /// Prior probability that the speaker is a quack.
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    /// Value of the outside option.
    #[arg(long, default_value_t = 0.8)]
    u: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    epsilon: f64,
    /// Support bound when several equilibria exist.
    #[arg(long)]
    m_bar: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

#[derive(Args, Serialize)]
struct FigureArgs {
    figure: Figure,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Core(quack_core::Error),
    Validation(String),
    Io { path: PathBuf, source: std::io::Error },
    /// A certificate failed its tolerance.
    Check { report: Value },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn csv(path: &Path, e: csv::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source: std::io::Error::other(e) }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(quack_core::Error::NonConvergence { .. }) | CliError::Check { .. } => 2,
            _ => 1,
        }
    }

    fn to_json(&self) -> Value {
        let (kind, extra) = match self {
            CliError::Core(e @ quack_core::Error::NonConvergence { iterations, residual }) => {
                (e.kind(), json!({ "iterations": iterations, "residual": residual }))
            }
            CliError::Core(quack_core::Error::Construction { at, value, .. }) => {
                ("construction", json!({ "at": at, "value": value }))
            }
            CliError::Core(e) => (e.kind(), Value::Null),
            CliError::Validation(_) => ("validation", Value::Null),
            CliError::Io { path, .. } => ("io", json!({ "path": path })),
            CliError::Check { report } => ("check_failed", report.clone()),
        };
        let mut err = json!({ "kind": kind, "message": self.to_string(), "exit_code": self.exit_code() });
        if !extra.is_null() {
            err["detail"] = extra;
        }
        json!({ "error": err })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Check { .. } => write!(f, "certificate outside tolerance"),
        }
    }
}

impl From<quack_core::Error> for CliError {
    fn from(e: quack_core::Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn convention_per_identity() -> Value {
    json!({ "payoffs": Convention::PerIdentity })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Rule(a) => rule(a),
        Command::Verify(a) => verify(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Metrics(a) => metrics(a),
        Command::Ext(e) => match e {
            ExtCommand::PriorMimic(a) => prior_mimic(a),
            ExtCommand::Noise(a) => noise(a),
            ExtCommand::Identity(a) => identity(a),
            ExtCommand::Sequential(a) => sequential(a),
            ExtCommand::OneSpeaker(a) => one_speaker(a),
        },
        Command::Figures(a) => figures::run(a.figure, &a.out, &a),
    }
}

fn rule(a: RuleArgs) -> Result<()> {
    let r = match a.kind {
        RuleName::Max => build_max_rule(a.epsilon, a.grid)?,
        RuleName::Min if a.extrapolate => build_min_rule_extrapolated(a.epsilon, a.grid)?,
        RuleName::Min => build_min_rule(a.epsilon, a.grid)?,
        RuleName::Eps1 => {
            if a.epsilon != 1.0 {
                return Err(CliError::Validation("the eps1 rule requires --epsilon 1".into()));
            }
            eps1_rule(a.grid)?
        }
    };
    let meta = Metadata::new("rule", &a, None, convention_per_identity());
    write_json(a.out.as_deref(), &meta, r.to_json())
}

fn load_rule(path: &Path) -> Result<PiecewiseRule> {
    Ok(PiecewiseRule::from_json(&read(path)?)?)
}

fn verify(a: VerifyArgs) -> Result<()> {
    let rule = load_rule(&a.rule)?;
    let report = match a.check {
        Check::Indifference => {
            let (n, tol) = match a.method {
                MethodName::Quadrature => (a.grid.unwrap_or(201), a.tol.unwrap_or(1e-4)),
                MethodName::Mc => (a.grid.unwrap_or(21), a.tol.unwrap_or(4.0)),
            };
            if n < 2 {
                return Err(CliError::Validation("--grid must be at least 2".into()));
            }
            let top = rule.m_bar.unwrap_or(1.0);
            let rows: Vec<(f64, f64, f64)> = (0..n)
                .map(|k| {
                    let m = top * k as f64 / (n - 1) as f64;
                    let method = match a.method {
                        MethodName::Quadrature => Method::Quadrature,
                        MethodName::Mc => Method::MonteCarlo {
                            samples: a.samples,
                            seed: a.seed.wrapping_add(k as u64),
                        },
                    };
                    let e = quack_message_payoff(&rule, m, method);
                    (m, e.value, e.stderr)
                })
                .collect();
            let hi = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
            let lo = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
            let spread = hi - lo;
            let (stat, passed) = match a.method {
                MethodName::Quadrature => (spread, spread <= tol),
                MethodName::Mc => {
                    // each message against the pooled mean, in standard errors
                    let mean = rows.iter().map(|r| r.1).sum::<f64>() / n as f64;
                    let z = rows
                        .iter()
                        .map(|r| if r.2 > 0.0 { (r.1 - mean).abs() / r.2 } else { 0.0 })
                        .fold(0.0, f64::max);
                    (z, z <= tol)
                }
            };
            json!({
                "check": "indifference",
                "spread": spread,
                "statistic": stat,
                "tolerance": tol,
                "passed": passed,
                "payoffs": rows.iter().map(|r| json!({"m": r.0, "payoff": r.1, "stderr": r.2})).collect::<Vec<_>>(),
            })
        }
        Check::ExpertBr => {
            if let MethodName::Mc = a.method {
                return Err(CliError::Validation("expert-br supports --method quadrature only".into()));
            }
            let tol = a.tol.unwrap_or(1e-6);
            let scan = best_response_scan(&rule, Side::Expert, a.grid.unwrap_or(201))?;
            json!({
                "check": "expert_br",
                "max_regret": scan.max_regret,
                "omega": scan.omega,
                "m": scan.m,
                "tolerance": tol,
                "passed": scan.max_regret <= tol,
            })
        }
    };
    let seed = matches!(a.method, MethodName::Mc).then_some(a.seed);
    let meta = Metadata::new("verify", &a, seed, convention_per_identity());
    write_json(a.out.as_deref(), &meta, report.clone())?;
    if report["passed"] == json!(true) {
        Ok(())
    } else {
        Err(CliError::Check { report })
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JudgeSpec {
    Path(PathBuf),
    Inline(Value),
}

#[derive(Deserialize)]
struct ProfileFile {
    #[serde(default = "truthful")]
    expert: ExpertStrategy,
    #[serde(default = "uniform_quack")]
    quack: QuackStrategy,
    judge: JudgeSpec,
    #[serde(default)]
    off_path: OffPath,
}

fn truthful() -> ExpertStrategy {
    ExpertStrategy::Truthful
}

fn uniform_quack() -> QuackStrategy {
    QuackStrategy::Uniform { a: 1.0 }
}

fn load_profile(path: &Path) -> Result<StrategyProfile> {
    let text = read(path)?;
    let raw: ProfileFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("profile {}: {e}", path.display())))?;
    let judge = match raw.judge {
        JudgeSpec::Path(p) => {
            let p = if p.is_relative() { path.parent().unwrap_or(Path::new(".")).join(p) } else { p };
            load_rule(&p)?
        }
        JudgeSpec::Inline(v) => PiecewiseRule::from_json(&v.to_string())?,
    };
    let profile = StrategyProfile { expert: raw.expert, quack: raw.quack, judge, off_path: raw.off_path };
    profile.validate()?;
    Ok(profile)
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let cfg = GameConfig::from_json(&read(&a.config)?)?;
    let profile = match &a.profile {
        Some(p) => load_profile(p)?,
        None => StrategyProfile::benchmark(build_max_rule(cfg.epsilon_bar, 4096)?),
    };
    let rep = simulate(&cfg, &profile, a.rounds, a.seed)?;
    let meta = Metadata::new(
        "simulate",
        json!({ "args": &a, "config": cfg.to_json() }),
        Some(a.seed),
        json!({ "quack_win_rate": Convention::PerIdentity }),
    );
    write_json(a.out.as_deref(), &meta, serde_json::to_value(rep).expect("report serializes"))
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || CliError::Validation(format!("epsilon grid must be A:B:STEP, got {spec:?}"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad())?;
    let [a, b, step] = parts[..] else { return Err(bad()) };
    if !(step > 0.0 && b >= a) {
        return Err(bad());
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| a + k as f64 * step).collect())
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let mut table = Table::new(&[
        "epsilon_bar",
        "quack_payoff",
        "quack_consistency",
        "judge_accuracy",
        "learn_probability",
        "learn_probability_stated",
        "learn_probability_proof_integral",
        "variance_reduction",
    ]);
    for eps in parse_grid(&a.epsilon_grid)? {
        let q = quack_value(eps)?;
        let l = learn_report(eps)?;
        table.rows.push(vec![
            eps,
            q.per_identity_payoff,
            q.consistency_prob,
            1.0 - q.per_identity_payoff,
            l.value,
            l.stated,
            l.proof_integral,
            variance_reduction(eps)?,
        ]);
    }
    let meta = Metadata::new(
        "metrics",
        &a,
        None,
        json!({ "quack_payoff": Convention::PerIdentity, "quack_consistency": Convention::Doubled }),
    );
    write_csv(&a.out, &meta, &table)
}

fn prior_mimic(a: PriorMimicArgs) -> Result<()> {
    let prior = if a.prior_c == 0.0 { PriorSpec::Uniform } else { PriorSpec::quadratic_log(a.prior_c)? };
    let sol = solve_mbar_grid(&prior, a.epsilon, a.grid)?;
    let meta = Metadata::new("ext prior-mimic", &a, None, convention_per_identity());
    write_json(a.out.as_deref(), &meta, serde_json::to_value(sol.report()).expect("report serializes"))
}

fn noise(a: NoiseArgs) -> Result<()> {
    let spec = match a.noise {
        NoiseName::Gaussian => NoiseSpec::Gaussian { sigma: a.width },
        NoiseName::Triangular => NoiseSpec::Triangular { half_width: a.width },
        NoiseName::Uniform => NoiseSpec::Uniform { half_width: a.width },
    };
    let opts = NoiseOptions {
        grid_n: a.grid,
        max_iter: a.max_iter,
        tol: a.tol,
        damping: a.damping,
        solver: match a.solver {
            SolverName::Multiplicative => NoiseSolver::Multiplicative,
            SolverName::FictitiousPlay => NoiseSolver::FictitiousPlay,
        },
    };
    let eq = solve_noise_equilibrium_with(spec, opts)?;
    let n = eq.f_q.xs.len();
    let stride = (n / 40).max(1);
    let mut cutoffs = vec![];
    for i in (n / 2..n).step_by(stride) {
        for j in (0..n).step_by(stride) {
            let (m, m2) = (eq.f_q.xs[i], eq.f_q.xs[j]);
            if m > m2.abs() {
                cutoffs.push([m, m2, eq.cutoff(m, m2)]);
            }
        }
    }
    let body = json!({
        "noise": eq.noise,
        "iterations": eq.iterations,
        "residual": eq.residual,
        "payoff": eq.payoff,
        "unimodal": eq.is_unimodal(),
        "f_q": eq.f_q.xs.iter().zip(&eq.f_q.density).map(|(x, d)| [*x, *d]).collect::<Vec<_>>(),
        "cutoffs": cutoffs,
    });
    let meta = Metadata::new("ext noise", &a, None, convention_per_identity());
    write_json(a.out.as_deref(), &meta, body)
}

fn identity(a: IdentityArgs) -> Result<()> {
    let eq = match a.rule_grid {
        Some(g) => identity_equilibrium_with_rule(a.p1, a.epsilon, g)?,
        None => identity_equilibrium(a.p1, a.epsilon)?,
    };
    let mut body = serde_json::to_value(&eq).expect("equilibrium serializes");
    if let Some(rounds) = a.mc_rounds {
        let coin = identity_mc(a.p1, a.epsilon, IdentityJudge::Coin, rounds, a.seed)?;
        body["mc_coin_judge"] = json!(coin);
        if let Some(pair) = &eq.rule_pair {
            let fitted = identity_mc(a.p1, a.epsilon, IdentityJudge::Pair(pair), rounds, a.seed)?;
            body["mc_rule_pair"] = json!(fitted);
        }
    }
    let seed = a.mc_rounds.map(|_| a.seed);
    let meta = Metadata::new(
        "ext identity",
        &a,
        seed,
        json!({ "payoffs": eq.convention, "judge_loss_closed_form": eq.judge_loss_closed_form_convention }),
    );
    write_json(a.out.as_deref(), &meta, body)
}

fn sequential(a: SequentialArgs) -> Result<()> {
    let rep = sequential_equilibrium(a.epsilon)?;
    let mut body = serde_json::to_value(rep).expect("report serializes");
    if let Some(rounds) = a.mc_rounds {
        body["mc"] = json!(sequential_mc(a.epsilon, rounds, a.seed)?);
    }
    let meta = Metadata::new(
        "ext sequential",
        &a,
        a.mc_rounds.map(|_| a.seed),
        json!({ "quack_payoff_seq": rep.convention, "quack_payoff_sim": rep.convention, "per_identity_seq": Convention::PerIdentity, "per_identity_sim": Convention::PerIdentity, "mc": Convention::PerIdentity }),
    );
    write_json(a.out.as_deref(), &meta, body)
}

fn one_speaker(a: OneSpeakerArgs) -> Result<()> {
    let eq = one_speaker_equilibrium_with(a.q, a.u, a.epsilon, a.m_bar)?;
    let meta = Metadata::new("ext one-speaker", &a, None, json!({ "pi": "selection_probability" }));
    write_json(a.out.as_deref(), &meta, serde_json::to_value(eq).expect("equilibrium serializes"))
}
