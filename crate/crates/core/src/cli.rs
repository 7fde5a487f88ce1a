//! Command-line front end. The binary is a thin wrapper around [`main_with_args`].

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::chain::{
    check_finite_values, classify_for_policy, classify_support, spectral_radius, transient_matrix, Classification,
    DeterministicPolicies, DEFAULT_ENUMERATION_CAP,
};
use crate::environments::{GridLayout, SlipModel};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, optimal_reference, OptimalSolution, PolicyEvaluation};
use crate::experiment::{run_experiment, Environment, ExperimentPlan};
use crate::format::{emit_mdp, read_mdp};
use crate::gradient::{finite_difference_gradient, gradient, max_relative_error, DEFAULT_H, RELATIVE_ERROR_FLOOR};
use crate::iterate::{fmt_g17, SolverOutcome};
use crate::mdp::{induced_chain, point_mass, random_interior_policy, uniform_distribution, MdpSpec, Policy};
use crate::npg::{run_npg, NpgConfig, StepSchedule};
use crate::ppg::{run_ppg, PpgConfig, StepSize};

#[derive(Debug, Parser)]
#[command(
    name = "transient-pg",
    version,
    about = "Exact policy gradient tools for undiscounted total-reward MDPs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify states, report the spectral radius and the finiteness checks.
    Analyze {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Exact V, Q and visitation measure of a policy.
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Optimal values by brute force or certified value iteration.
    Optimal {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long, value_enum, default_value_t = ParamArg::Direct)]
        param: ParamArg,
        #[arg(long, default_value_t = DEFAULT_H)]
        h: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Projected policy gradient over the alpha-simplex; writes CSV.
    SolvePpg {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        alpha: f64,
        /// A positive number or `theoretical`.
        #[arg(long)]
        eta: EtaArg,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 0.0)]
        stop_tol: f64,
        #[command(flatten)]
        reference: ReferenceArgs,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Natural policy gradient (softmax); writes CSV.
    SolveNpg {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 0.0)]
        stop_tol: f64,
        #[command(flatten)]
        reference: ReferenceArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print an MDP in the TOML text format.
    Env {
        #[command(flatten)]
        model: ModelArgs,
        /// FrozenLake only: use the slippery transition model.
        #[arg(long)]
        slippery: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a solver comparison preset and write one CSV per solver.
    Experiment {
        #[arg(long)]
        env: Environment,
        #[arg(long, value_enum, default_value_t = Preset::Paper)]
        preset: Preset,
        /// Overrides the preset's iteration budget.
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ModelArgs {
    /// MDP in the TOML text format.
    #[arg(long)]
    pub mdp: Option<PathBuf>,
    /// Built-in environment.
    #[arg(long)]
    pub env: Option<Environment>,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    /// `uniform`, `random` (seeded) or `actions:A0,A1,...`.
    #[arg(long, default_value = "uniform")]
    pub policy: PolicyArg,
    /// Initial-state distribution: `uniform`, `point:S` or `file:PATH`.
    #[arg(long)]
    pub mu: Option<MuArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReferenceArgs {
    #[arg(long)]
    pub mu: Option<MuArg>,
    /// JSON written by `optimal --format json`; computed when omitted.
    #[arg(long, conflicts_with = "no_reference")]
    pub reference: Option<PathBuf>,
    /// Leave the gap column as NaN.
    #[arg(long)]
    pub no_reference: bool,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = true)]
pub struct ScheduleArgs {
    /// Constant step size.
    #[arg(long, conflicts_with_all = ["eta0", "growth"])]
    pub eta: Option<f64>,
    /// First step of the geometric schedule `eta0 * growth^k`.
    #[arg(long, requires = "growth")]
    pub eta0: Option<f64>,
    #[arg(long, requires = "eta0")]
    pub growth: Option<f64>,
}

impl ScheduleArgs {
    fn schedule(&self) -> StepSchedule {
        match (self.eta, self.eta0, self.growth) {
            (Some(eta), _, _) => StepSchedule::Constant(eta),
            (None, Some(eta0), Some(growth)) => StepSchedule::Geometric { eta0, growth },
            _ => unreachable!("clap enforces the schedule flags"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ParamArg {
    Direct,
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EtaArg {
    Fixed(f64),
    Theoretical,
}

impl FromStr for EtaArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "theoretical" {
            return Ok(EtaArg::Theoretical);
        }
        s.parse()
            .map(EtaArg::Fixed)
            .map_err(|_| format!("expected a number or `theoretical`, got {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MuArg {
    Uniform,
    Point(usize),
    File(PathBuf),
}

impl FromStr for MuArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "uniform" {
            Ok(MuArg::Uniform)
        } else if let Some(state) = s.strip_prefix("point:") {
            state
                .parse()
                .map(MuArg::Point)
                .map_err(|_| format!("bad state index in {s:?}"))
        } else if let Some(path) = s.strip_prefix("file:") {
            Ok(MuArg::File(path.into()))
        } else {
            Err(format!("expected uniform, point:S or file:PATH, got {s:?}"))
        }
    }
}

impl MuArg {
    /// Whitespace- or comma-separated probabilities for `file:`.
    pub fn resolve(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            MuArg::Uniform => Ok(uniform_distribution(n)),
            MuArg::Point(s) if *s < n => Ok(point_mass(n, *s)),
            MuArg::Point(s) => Err(Error::InvalidArgument(format!(
                "point:{s} is out of range for {n} states"
            ))),
            MuArg::File(path) => std::fs::read_to_string(path)?
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("{}: {t:?}: {e}", path.display())))
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PolicyArg {
    Uniform,
    Random,
    Actions(Vec<usize>),
}

impl FromStr for PolicyArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uniform" => Ok(PolicyArg::Uniform),
            "random" => Ok(PolicyArg::Random),
            _ => {
                let list = s
                    .strip_prefix("actions:")
                    .ok_or_else(|| format!("unknown policy {s:?}"))?;
                list.split(',')
                    .map(|a| a.trim().parse().map_err(|_| format!("bad action {a:?}")))
                    .collect::<std::result::Result<_, _>>()
                    .map(PolicyArg::Actions)
            }
        }
    }
}

const RANDOM_POLICY_FLOOR: f64 = 1e-3;

impl PolicyArgs {
    fn resolve(&self, mdp: &MdpSpec) -> Result<Policy> {
        let (n, na) = (mdp.n_states(), mdp.n_actions());
        match &self.policy {
            PolicyArg::Uniform => Ok(Policy::uniform(n, na)),
            PolicyArg::Random => random_interior_policy(mdp, self.seed, RANDOM_POLICY_FLOOR.min(0.5 / na as f64)),
            PolicyArg::Actions(actions) => {
                if actions.len() != n || actions.iter().any(|&a| a >= na) {
                    return Err(Error::InvalidArgument(format!(
                        "actions:{actions:?} needs {n} entries below {na}"
                    )));
                }
                Ok(Policy::deterministic(na, actions))
            }
        }
    }
}

fn load_model(model: &ModelArgs, mu: Option<&MuArg>) -> Result<(String, MdpSpec)> {
    let (name, mdp) = match (&model.mdp, model.env) {
        (Some(path), _) => (path.display().to_string(), read_mdp(path)?),
        (None, Some(env)) => (env.name().to_string(), env.build()),
        (None, None) => unreachable!("clap enforces --mdp or --env"),
    };
    let mdp = match mu {
        Some(mu) => mdp.with_mu(mu.resolve(mdp.n_states())?)?,
        None => mdp,
    };
    Ok((name, mdp))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn render(output: &OutputArgs, value: &Value, text: impl FnOnce() -> String) -> Result<()> {
    let body = match output.format {
        Format::Json => serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))? + "\n",
        Format::Text => text(),
    };
    emit(output.out.as_deref(), &body)
}

fn states_line(states: &[usize]) -> String {
    let items: Vec<_> = states.iter().map(|s| s.to_string()).collect();
    format!("{{{}}}", items.join(", "))
}

fn classification_text(out: &mut String, title: &str, cls: &Classification) {
    let _ = writeln!(out, "{title}:");
    let _ = writeln!(out, "  transient: {}", states_line(&cls.transient));
    let _ = writeln!(out, "  recurrent: {}", states_line(&cls.recurrent));
    for class in &cls.classes {
        let kind = if class.closed { "closed" } else { "open" };
        let _ = writeln!(out, "  class {} {kind}", states_line(&class.states));
    }
}

fn analyze(model: &ModelArgs, policy: &PolicyArgs, output: &OutputArgs) -> Result<()> {
    let (name, mdp) = load_model(model, policy.mu.as_ref())?;
    let pi = policy.resolve(&mdp)?;
    let support = classify_support(&mdp);
    let under_policy = classify_for_policy(&mdp, &pi)?;
    let tm = transient_matrix(&induced_chain(&mdp, &pi)?, &under_policy);
    let rho = spectral_radius(&tm.t, 1e-10)?;
    let exhaustive = DeterministicPolicies::count(&mdp) <= DEFAULT_ENUMERATION_CAP as f64;
    let report = check_finite_values(&mdp, exhaustive)?;
    let value = json!({
        "model": name,
        "n_states": mdp.n_states(),
        "n_actions": mdp.n_actions(),
        "support": support,
        "policy": under_policy,
        "policy_is_interior": pi.is_interior(),
        "spectral_radius": rho,
        "finite_values": report,
    });
    render(output, &value, || {
        let mut out = format!("{name}: {} states, {} actions\n", mdp.n_states(), mdp.n_actions());
        classification_text(&mut out, "support graph", &support);
        classification_text(&mut out, "chosen policy", &under_policy);
        let _ = writeln!(out, "spectral radius of T: {}", fmt_g17(rho));
        let verdict = |b: bool| if b { "holds" } else { "fails" };
        let _ = writeln!(
            out,
            "zero reward on support-recurrent states: {}",
            verdict(report.holds_necessary)
        );
        match report.holds_deterministic_exhaustive {
            Some(b) => {
                let _ = writeln!(out, "finite values for every deterministic policy: {}", verdict(b));
            }
            None => out.push_str("deterministic policies not enumerated (too many)\n"),
        }
        for w in &report.witnesses {
            let _ = writeln!(
                out,
                "  witness: {} pays r({}, {}) = {} on a recurrent state",
                w.describe_policy(),
                w.state,
                w.action,
                w.reward
            );
        }
        out
    })
}

fn evaluate_cmd(model: &ModelArgs, policy: &PolicyArgs, output: &OutputArgs) -> Result<()> {
    let (name, mdp) = load_model(model, policy.mu.as_ref())?;
    let pi = policy.resolve(&mdp)?;
    let bundle = evaluate(&mdp, &pi, mdp.mu())?;
    let v_mu: f64 = bundle.v.iter().zip(mdp.mu()).map(|(v, m)| v * m).sum();
    let fundamental = PolicyEvaluation::new(&mdp, &pi)?.fundamental_norm();
    let states: Vec<Value> = (0..mdp.n_states())
        .map(|s| json!({ "s": s, "v": bundle.v[s], "delta": bundle.delta_mu[s], "q": bundle.q.row(s) }))
        .collect();
    let value = json!({ "model": name, "v_mu": v_mu, "fundamental_norm": fundamental, "states": states });
    render(output, &value, || {
        let mut out = format!(
            "{name}: V_mu = {}, ||(I-T)^-1||_inf = {}\n",
            fmt_g17(v_mu),
            fmt_g17(fundamental)
        );
        let _ = writeln!(out, "{:>5} {:>24} {:>24}  q", "s", "v", "delta");
        for s in 0..mdp.n_states() {
            let q: Vec<_> = bundle.q.row(s).iter().map(|&x| fmt_g17(x)).collect();
            let _ = writeln!(
                out,
                "{s:>5} {:>24} {:>24}  {}",
                fmt_g17(bundle.v[s]),
                fmt_g17(bundle.delta_mu[s]),
                q.join(" ")
            );
        }
        out
    })
}

fn optimal_json(name: &str, mdp: &MdpSpec, sol: &OptimalSolution) -> Value {
    json!({
        "model": name,
        "method": sol.method,
        "tolerance": sol.tolerance,
        "sweeps": sol.sweeps,
        "v_mu": sol.value_at(mdp.mu()),
        "v_star": sol.v_star.as_slice(),
        "pi_star": sol.actions(),
    })
}

fn optimal_cmd(model: &ModelArgs, output: &OutputArgs) -> Result<()> {
    let (name, mdp) = load_model(model, None)?;
    let sol = optimal_reference(&mdp)?;
    render(output, &optimal_json(&name, &mdp, &sol), || {
        let mut out = format!(
            "{name}: V*_mu = {} ({:?}, tolerance {:e})\n",
            fmt_g17(sol.value_at(mdp.mu())),
            sol.method,
            sol.tolerance
        );
        let actions = sol.actions();
        let _ = writeln!(out, "{:>5} {:>24} {:>7}", "s", "v*", "action");
        for (s, v) in sol.v_star.iter().enumerate() {
            let a = actions.as_ref().map_or("-".to_string(), |acts| acts[s].to_string());
            let _ = writeln!(out, "{s:>5} {:>24} {a:>7}", fmt_g17(*v));
        }
        out
    })
}

fn gradcheck(model: &ModelArgs, policy: &PolicyArgs, param: ParamArg, h: f64, output: &OutputArgs) -> Result<()> {
    let (name, mdp) = load_model(model, policy.mu.as_ref())?;
    let mut pi = policy.resolve(&mdp)?;
    if param == ParamArg::Softmax {
        pi = Policy::softmax(pi.table().map(f64::ln))?;
    }
    let analytic = gradient(&mdp, &pi, mdp.mu())?;
    let numeric = finite_difference_gradient(&mdp, &pi, mdp.mu(), h)?;
    let err = max_relative_error(&analytic.comparable(), &numeric.comparable(), RELATIVE_ERROR_FLOOR);
    let value = json!({
        "model": name,
        "parameterization": analytic.parameterization,
        "h": h,
        "max_relative_error": err,
        "analytic": analytic.comparable(),
        "finite_difference": numeric.comparable(),
    });
    render(output, &value, || {
        format!(
            "{name}: max relative error {} ({:?}, h = {h:e})\n",
            fmt_g17(err),
            analytic.parameterization
        )
    })
}

fn reference_value(args: &ReferenceArgs, mdp: &MdpSpec) -> Result<Option<f64>> {
    if args.no_reference {
        return Ok(None);
    }
    let v_star: Vec<f64> = match &args.reference {
        Some(path) => {
            let doc: Value =
                serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Parse(e.to_string()))?;
            serde_json::from_value(doc["v_star"].clone())
                .map_err(|e| Error::Parse(format!("{}: v_star: {e}", path.display())))?
        }
        None => optimal_reference(mdp)?.v_star.as_slice().to_vec(),
    };
    if v_star.len() != mdp.n_states() {
        return Err(Error::Dimension(format!(
            "reference has {} states, MDP has {}",
            v_star.len(),
            mdp.n_states()
        )));
    }
    Ok(Some(v_star.iter().zip(mdp.mu()).map(|(v, m)| v * m).sum()))
}

fn finish_run(outcome: &SolverOutcome, out: Option<&Path>) -> Result<()> {
    emit(out, &outcome.log.to_csv())?;
    if let Some(last) = outcome.log.last() {
        let gap = last.gap.map_or("n/a".to_string(), fmt_g17);
        eprintln!("iterations {}: V_mu = {}, gap = {gap}", last.iter, fmt_g17(last.v_mu));
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze { model, policy, output } => analyze(&model, &policy, &output),
        Command::Evaluate { model, policy, output } => evaluate_cmd(&model, &policy, &output),
        Command::Optimal { model, output } => optimal_cmd(&model, &output),
        Command::Gradcheck {
            model,
            policy,
            param,
            h,
            output,
        } => gradcheck(&model, &policy, param, h, &output),
        Command::SolvePpg {
            model,
            alpha,
            eta,
            iters,
            stop_tol,
            reference,
            out,
        } => {
            let (_, mdp) = load_model(&model, reference.mu.as_ref())?;
            let step = match eta {
                EtaArg::Fixed(x) => StepSize::Fixed(x),
                EtaArg::Theoretical => StepSize::Theoretical,
            };
            let mut cfg = PpgConfig::new(&mdp, alpha, step, iters);
            cfg.stop_tol = stop_tol;
            cfg.reference = reference_value(&reference, &mdp)?;
            finish_run(&run_ppg(&mdp, &cfg)?, out.as_deref())
        }
        Command::SolveNpg {
            model,
            schedule,
            iters,
            stop_tol,
            reference,
            out,
        } => {
            let (_, mdp) = load_model(&model, reference.mu.as_ref())?;
            let mut cfg = NpgConfig::new(&mdp, schedule.schedule(), iters);
            cfg.stop_tol = stop_tol;
            cfg.reference = reference_value(&reference, &mdp)?;
            finish_run(&run_npg(&mdp, &cfg)?, out.as_deref())
        }
        Command::Env { model, slippery, out } => {
            let mdp = match (slippery, model.env) {
                (false, _) => load_model(&model, None)?.1,
                (true, Some(Environment::FrozenLake)) => crate::environments::frozenlake(
                    &GridLayout::default_frozenlake().with_slip(SlipModel::Perpendicular),
                )?,
                (true, _) => return Err(Error::InvalidArgument("--slippery applies to --env frozenlake".into())),
            };
            emit(out.as_deref(), &emit_mdp(&mdp))
        }
        Command::Experiment {
            env,
            preset: Preset::Paper,
            iters,
            out,
        } => {
            let mut plan = ExperimentPlan::paper(env, out);
            if let Some(iters) = iters {
                plan.iterations = iters;
            }
            let summary = run_experiment(&plan)?;
            print!("{}", summary.table());
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs. Exit code 0 on
/// success, 1 on a model or solver error, 2 on a usage error.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
