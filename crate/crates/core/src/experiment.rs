//! Solver comparisons on one environment, written out as CSV files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::environments::{cliffwalk, frozenlake, pathological, pathological_nonnegative, GridLayout};
use crate::error::{Error, Result};
use crate::evaluation::{optimal_reference, SolutionMethod};
use crate::iterate::{fmt_g17, IterateLog};
use crate::mdp::MdpSpec;
use crate::npg::{run_npg, NpgConfig, StepSchedule};
use crate::ppg::{run_ppg, PpgConfig, StepSize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Environment {
    Pathological,
    PathologicalNonnegative,
    FrozenLake,
    CliffWalk,
}

impl Environment {
    pub const ALL: [Environment; 4] = [
        Environment::Pathological,
        Environment::PathologicalNonnegative,
        Environment::FrozenLake,
        Environment::CliffWalk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Environment::Pathological => "pathological",
            Environment::PathologicalNonnegative => "pathological-nonnegative",
            Environment::FrozenLake => "frozenlake",
            Environment::CliffWalk => "cliffwalk",
        }
    }

    pub fn build(self) -> MdpSpec {
        match self {
            Environment::Pathological => pathological(),
            Environment::PathologicalNonnegative => pathological_nonnegative(),
            Environment::FrozenLake => frozenlake(&GridLayout::default_frozenlake()).expect("static layout"),
            Environment::CliffWalk => cliffwalk(),
        }
    }
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Environment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|e| e.name()).collect();
                Error::InvalidArgument(format!(
                    "unknown environment {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "solver", rename_all = "kebab-case")]
pub enum SolverSpec {
    Ppg { alpha: f64, eta: f64 },
    Npg { schedule: StepSchedule },
}

impl SolverSpec {
    /// File stem for this run, e.g. `ppg_alpha_0.05`.
    pub fn label(&self) -> String {
        match self {
            SolverSpec::Ppg { alpha, .. } => format!("ppg_alpha_{alpha}"),
            SolverSpec::Npg {
                schedule: StepSchedule::Constant(_),
            } => "npg_constant".into(),
            SolverSpec::Npg {
                schedule: StepSchedule::Geometric { .. },
            } => "npg_geometric".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    pub name: String,
    pub mdp: MdpSpec,
    pub solvers: Vec<SolverSpec>,
    pub iterations: usize,
    pub out_dir: PathBuf,
    /// Runs stop early when `V_mu` changes by less than this; 0 uses the full budget.
    pub stop_tol: f64,
}

/// `(iterations, eta, growth)` used by the paper preset of each environment.
pub fn preset_settings(env: Environment) -> (usize, f64, f64) {
    match env {
        Environment::Pathological | Environment::PathologicalNonnegative => (2000, 0.1, 1.01),
        Environment::FrozenLake => (5000, 0.1, 1.01),
        Environment::CliffWalk => (2000, 0.05, 1.1),
    }
}

pub const PRESET_ALPHAS: [f64; 3] = [0.1, 0.05, 0.01];

impl ExperimentPlan {
    /// PPG at three floors, NPG with constant and geometric steps.
    pub fn paper(env: Environment, out_dir: impl Into<PathBuf>) -> Self {
        let (iterations, eta, growth) = preset_settings(env);
        let mut solvers: Vec<SolverSpec> = PRESET_ALPHAS
            .iter()
            .map(|&alpha| SolverSpec::Ppg { alpha, eta })
            .collect();
        solvers.push(SolverSpec::Npg {
            schedule: StepSchedule::Constant(eta),
        });
        solvers.push(SolverSpec::Npg {
            schedule: StepSchedule::Geometric { eta0: eta, growth },
        });
        Self {
            name: env.name().into(),
            mdp: env.build(),
            solvers,
            iterations,
            out_dir: out_dir.into(),
            stop_tol: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut labels = std::collections::HashSet::new();
        for spec in &self.solvers {
            if !labels.insert(spec.label()) {
                return Err(Error::InvalidArgument(format!(
                    "two solvers share the label {}",
                    spec.label()
                )));
            }
            match spec {
                SolverSpec::Ppg { alpha, eta } => {
                    PpgConfig::new(&self.mdp, *alpha, StepSize::Fixed(*eta), self.iterations).validate(&self.mdp)?
                }
                SolverSpec::Npg { schedule } => schedule.validate()?,
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub file: String,
    pub solver: SolverSpec,
    pub iterations: usize,
    pub final_v_mu: f64,
    pub final_gap: f64,
    pub first_below_1e_6: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub environment: String,
    pub v_star_mu: f64,
    pub reference_method: SolutionMethod,
    pub reference_tolerance: f64,
    pub runs: Vec<RunSummary>,
}

impl ExperimentSummary {
    pub fn table(&self) -> String {
        let mut out = format!(
            "{}: V*_mu = {} ({:?}, tolerance {:e})\n{:<18} {:>8} {:>26} {:>12}\n",
            self.environment,
            fmt_g17(self.v_star_mu),
            self.reference_method,
            self.reference_tolerance,
            "run",
            "iters",
            "final gap",
            "gap<1e-6 at"
        );
        for r in &self.runs {
            let hit = r.first_below_1e_6.map_or("-".to_string(), |k| k.to_string());
            out.push_str(&format!(
                "{:<18} {:>8} {:>26} {:>12}\n",
                r.label,
                r.iterations,
                fmt_g17(r.final_gap),
                hit
            ));
        }
        out
    }
}

/// Everything a finished plan produced, in plan order.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub summary: ExperimentSummary,
    pub logs: Vec<IterateLog>,
}

fn run_one(plan: &ExperimentPlan, spec: &SolverSpec, v_star: f64) -> Result<IterateLog> {
    let mdp = &plan.mdp;
    let outcome = match spec {
        SolverSpec::Ppg { alpha, eta } => {
            let mut cfg = PpgConfig::new(mdp, *alpha, StepSize::Fixed(*eta), plan.iterations);
            cfg.reference = Some(v_star);
            cfg.stop_tol = plan.stop_tol;
            run_ppg(mdp, &cfg)?
        }
        SolverSpec::Npg { schedule } => {
            let mut cfg = NpgConfig::new(mdp, *schedule, plan.iterations);
            cfg.reference = Some(v_star);
            cfg.stop_tol = plan.stop_tol;
            run_npg(mdp, &cfg)?
        }
    };
    Ok(outcome.log)
}

/// Runs every solver of the plan (concurrently) without touching the disk.
pub fn execute(plan: &ExperimentPlan) -> Result<ExperimentOutput> {
    plan.validate()?;
    let reference = optimal_reference(&plan.mdp)?;
    let v_star = reference.value_at(plan.mdp.mu());
    log::info!("{}: V*_mu = {v_star} via {:?}", plan.name, reference.method);
    let results: Vec<Result<IterateLog>> = std::thread::scope(|scope| {
        let handles: Vec<_> = plan
            .solvers
            .iter()
            .map(|spec| scope.spawn(move || run_one(plan, spec, v_star)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Precondition("solver thread panicked".into())))
            })
            .collect()
    });
    let mut logs = Vec::with_capacity(results.len());
    let mut runs = Vec::with_capacity(results.len());
    for (spec, result) in plan.solvers.iter().zip(results) {
        let log = result.map_err(|e| Error::Precondition(format!("{} on {}: {e}", spec.label(), plan.name)))?;
        let last = log.last().expect("at least one record");
        runs.push(RunSummary {
            label: spec.label(),
            file: format!("{}.csv", spec.label()),
            solver: spec.clone(),
            iterations: last.iter,
            final_v_mu: last.v_mu,
            final_gap: last.gap.unwrap_or(f64::NAN),
            first_below_1e_6: log.first_below(1e-6),
        });
        logs.push(log);
    }
    Ok(ExperimentOutput {
        summary: ExperimentSummary {
            environment: plan.name.clone(),
            v_star_mu: v_star,
            reference_method: reference.method,
            reference_tolerance: reference.tolerance,
            runs,
        },
        logs,
    })
}

/// Runs the plan and writes one CSV per solver plus `summary.json`.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentSummary> {
    let output = execute(plan)?;
    write_outputs(&plan.out_dir, &output)?;
    Ok(output.summary)
}

pub fn write_outputs(dir: &Path, output: &ExperimentOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (run, log) in output.summary.runs.iter().zip(&output.logs) {
        std::fs::write(dir.join(&run.file), log.to_csv())?;
    }
    let json = serde_json::to_string_pretty(&output.summary).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_plan(env: Environment, iterations: usize) -> ExperimentPlan {
        let mut plan = ExperimentPlan::paper(env, "unused");
        plan.iterations = iterations;
        plan
    }

    #[test]
    fn environment_names_round_trip() {
        for env in Environment::ALL {
            assert_eq!(env.name().parse::<Environment>().unwrap(), env);
        }
        assert!("lake".parse::<Environment>().is_err());
    }

    #[test]
    fn paper_preset_shape() {
        let plan = ExperimentPlan::paper(Environment::FrozenLake, "runs");
        assert_eq!(plan.iterations, 5000);
        let labels: Vec<_> = plan.solvers.iter().map(|s| s.label()).collect();
        assert_eq!(
            labels,
            [
                "ppg_alpha_0.1",
                "ppg_alpha_0.05",
                "ppg_alpha_0.01",
                "npg_constant",
                "npg_geometric"
            ]
        );
        assert_eq!(
            plan.solvers[4],
            SolverSpec::Npg {
                schedule: StepSchedule::Geometric {
                    eta0: 0.1,
                    growth: 1.01
                }
            }
        );
        let cliff = ExperimentPlan::paper(Environment::CliffWalk, "runs");
        assert_eq!(
            cliff.solvers[3],
            SolverSpec::Npg {
                schedule: StepSchedule::Constant(0.05)
            }
        );
    }

    #[test]
    fn pathological_gaps_stay_above_boundary_loss() {
        let out = execute(&short_plan(Environment::Pathological, 300)).unwrap();
        assert!((out.summary.v_star_mu - 0.4).abs() < 1e-15);
        for log in &out.logs {
            assert!(log.records.iter().all(|r| r.gap.unwrap() >= 0.2 - 1e-6));
        }
    }

    #[test]
    fn outputs_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mut plan = short_plan(Environment::CliffWalk, 60);
        plan.out_dir = dir.path().join("a");
        run_experiment(&plan).unwrap();
        plan.out_dir = dir.path().join("b");
        let summary = run_experiment(&plan).unwrap();
        for run in &summary.runs {
            let a = std::fs::read(dir.path().join("a").join(&run.file)).unwrap();
            let b = std::fs::read(dir.path().join("b").join(&run.file)).unwrap();
            assert_eq!(a, b, "{}", run.file);
        }
        let text = std::fs::read_to_string(dir.path().join("a/npg_constant.csv")).unwrap();
        assert!(text.starts_with("iter,v_mu,gap,eta\n0,"));
        assert_eq!(text.lines().count(), 62);
    }

    #[test]
    fn duplicate_labels_rejected() {
        let mut plan = short_plan(Environment::Pathological, 5);
        plan.solvers.push(SolverSpec::Ppg { alpha: 0.1, eta: 0.2 });
        assert!(plan.validate().is_err());
    }
}
