use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rdnr_core::benders::BendersSettings;
use rdnr_core::cases;
use rdnr_core::ccg::{CcgSettings, InstanceOptions, SpStrategy};
use rdnr_core::formulation::UncertaintyOptions;
use rdnr_core::network::NetworkCase;

use crate::error::{CliError, Result};

/// Iteration budget of mapping C&CG when `--max-iter` is absent.
pub const CCG_MAX_ITER: usize = 50;
/// Iteration budget of the Benders baseline when `--max-iter` is absent.
pub const BENDERS_MAX_ITER: usize = 100;

#[derive(Debug, Parser)]
#[command(name = "rdnr", version, about = "Robust distribution network reconfiguration with renewable resizing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    /// One recourse solve per vertex of the uncertainty set.
    Vertex,
    /// One mixed-integer program over the recourse dual.
    Milp,
}

impl From<StrategyArg> for SpStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Vertex => SpStrategy::VertexEnum,
            StrategyArg::Milp => SpStrategy::BigMMilp,
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct CommonArgs {
    /// Bundled case name or path to a case JSON file.
    #[arg(long, default_value = "case6")]
    pub case: String,
    /// Convergence tolerance on UB − LB.
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
    /// Iteration budget (defaults: 50 for C&CG, 100 for Benders).
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Subproblem strategy; picked by dimension when absent.
    #[arg(long, value_enum)]
    pub sp_strategy: Option<StrategyArg>,
    /// Per-period budget Γ_t.
    #[arg(long)]
    pub gamma_t: Option<f64>,
    /// Per-renewable budget Γ_i over the horizon.
    #[arg(long)]
    pub gamma_i: Option<f64>,
    /// Slack penalty m_s; defaults to 1000 times the largest recourse cost.
    #[arg(long)]
    pub ms: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Expand a single-period case to this many periods.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Add the coupling rows Σ_{j≠i} w_j ≥ β_i − ξ_i with the default β.
    #[arg(long)]
    pub extension: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve with mapping-based C&CG and write the reports.
    Solve(CommonArgs),
    /// Run mapping-based C&CG and the modified Benders baseline side by side.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Wall-clock budget for the Benders run in seconds.
        #[arg(long)]
        benders_time_limit: Option<f64>,
    },
    /// Dual multipliers of the uncertainty rows at the solved point.
    Sensitivity {
        #[command(flatten)]
        common: CommonArgs,
        /// Solve first instead of reading a previous summary.
        #[arg(long)]
        solve: bool,
        /// Step of the finite-difference check.
        #[arg(long, default_value_t = 1e-4)]
        fd_step: f64,
        /// Also run the topology stability scan.
        #[arg(long)]
        scan: bool,
    },
    /// Cross-check the optimised routines against brute force.
    OracleCheck {
        #[command(flatten)]
        common: CommonArgs,
        /// Random draws per sampled check.
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    Solve,
    Compare { benders_time_limit: Option<f64> },
    Sensitivity { solve: bool, fd_step: f64, scan: bool },
    OracleCheck { samples: usize },
}

/// Validated settings of one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub case: String,
    pub gamma_t: Option<f64>,
    pub gamma_i: Option<f64>,
    pub eps: f64,
    pub max_iter: Option<usize>,
    pub sp_strategy: Option<SpStrategy>,
    pub m_s: Option<f64>,
    pub out: PathBuf,
    pub seed: u64,
    pub horizon: Option<usize>,
    pub extension: bool,
}

impl RunConfig {
    /// Defaults of the command line for `task` on `case`.
    pub fn new(task: Task, case: &str, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            task,
            case: case.to_string(),
            gamma_t: None,
            gamma_i: None,
            eps: 1e-4,
            max_iter: None,
            sp_strategy: None,
            m_s: None,
            out: out.into(),
            seed: 7,
            horizon: None,
            extension: false,
        }
    }

    pub fn from_command(cmd: Command) -> Result<Self> {
        let (task, c) = match cmd {
            Command::Solve(c) => (Task::Solve, c),
            Command::Compare { common, benders_time_limit } => (Task::Compare { benders_time_limit }, common),
            Command::Sensitivity { common, solve, fd_step, scan } => (Task::Sensitivity { solve, fd_step, scan }, common),
            Command::OracleCheck { common, samples } => (Task::OracleCheck { samples }, common),
        };
        let cfg = RunConfig {
            task,
            case: c.case,
            gamma_t: c.gamma_t,
            gamma_i: c.gamma_i,
            eps: c.eps,
            max_iter: c.max_iter,
            sp_strategy: c.sp_strategy.map(SpStrategy::from),
            m_s: c.ms,
            out: c.out,
            seed: c.seed,
            horizon: c.horizon,
            extension: c.extension,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("--eps must be positive, got {}", self.eps));
        }
        if self.max_iter == Some(0) {
            return bad("--max-iter must be at least 1".into());
        }
        for (flag, v) in [("--gamma-t", self.gamma_t), ("--gamma-i", self.gamma_i)] {
            if let Some(g) = v {
                if !(g >= 0.0 && g.is_finite()) {
                    return bad(format!("{flag} must be non-negative, got {g}"));
                }
            }
        }
        if let Some(m) = self.m_s {
            if !(m > 0.0 && m.is_finite()) {
                return bad(format!("--ms must be positive, got {m}"));
            }
        }
        if self.horizon == Some(0) {
            return bad("--horizon must be at least 1".into());
        }
        match self.task {
            Task::Compare { benders_time_limit: Some(t) } if t.is_nan() || t <= 0.0 => {
                bad(format!("--benders-time-limit must be positive, got {t}"))
            }
            Task::Sensitivity { fd_step, .. } if !(fd_step > 0.0 && fd_step.is_finite()) => {
                bad(format!("--fd-step must be positive, got {fd_step}"))
            }
            Task::OracleCheck { samples: 0 } => bad("--samples must be at least 1".into()),
            _ => Ok(()),
        }
    }

    /// Reads the case file, falling back to a bundled case when a bare name
    /// or file name without a directory does not exist on disk.
    pub fn load_case(&self) -> Result<NetworkCase> {
        let path = Path::new(&self.case);
        let case = if path.is_file() {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            NetworkCase::from_json(&text)?
        } else {
            let bare = path.parent().is_none_or(|p| p.as_os_str().is_empty());
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            match bare.then(|| cases::bundled(stem)).flatten() {
                Some(c) => c,
                None => return Err(CliError::CaseNotFound(self.case.clone())),
            }
        };
        match self.horizon {
            Some(t) => Ok(case.with_horizon(t)?),
            None => Ok(case),
        }
    }

    pub fn uncertainty_options(&self) -> UncertaintyOptions {
        UncertaintyOptions { gamma_t: self.gamma_t, gamma_i: self.gamma_i, ..UncertaintyOptions::default() }
    }

    pub fn instance_options(&self) -> InstanceOptions {
        InstanceOptions { uncertainty: self.uncertainty_options(), m_s: self.m_s, ..InstanceOptions::default() }
    }

    pub fn ccg_settings(&self) -> CcgSettings {
        CcgSettings {
            eps: self.eps,
            max_iter: self.max_iter.unwrap_or(CCG_MAX_ITER),
            sp_strategy: self.sp_strategy,
            ..CcgSettings::default()
        }
    }

    pub fn benders_settings(&self) -> BendersSettings {
        let time_limit = match self.task {
            Task::Compare { benders_time_limit } => benders_time_limit,
            _ => None,
        };
        BendersSettings {
            eps: self.eps,
            max_iter: self.max_iter.unwrap_or(BENDERS_MAX_ITER),
            time_limit,
            sp_strategy: self.sp_strategy,
            ..BendersSettings::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig> {
        let cli = Cli::try_parse_from(std::iter::once("rdnr").chain(args.iter().copied())).map_err(|e| CliError::Config(e.to_string()))?;
        RunConfig::from_command(cli.command)
    }

    #[test]
    fn flags_map_onto_the_config() {
        let c = parse(&["solve", "--case", "case33", "--eps", "1e-3", "--sp-strategy", "milp", "--gamma-t", "0", "--seed", "3"]).unwrap();
        assert_eq!(c.task, Task::Solve);
        assert_eq!(c.sp_strategy, Some(SpStrategy::BigMMilp));
        assert_eq!(c.gamma_t, Some(0.0));
        assert_eq!(c.seed, 3);
        assert_eq!(c.ccg_settings().max_iter, CCG_MAX_ITER);
        assert_eq!(c.benders_settings().max_iter, BENDERS_MAX_ITER);
    }

    #[test]
    fn bad_values_are_config_errors() {
        for args in [
            &["solve", "--eps", "0"][..],
            &["solve", "--max-iter", "0"],
            &["solve", "--gamma-t", "-1"],
            &["solve", "--ms", "0"],
            &["oracle-check", "--samples", "0"],
        ] {
            let e = parse(args).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{args:?}");
        }
        assert!(parse(&["solve", "--sp-strategy", "simplex"]).is_err());
    }

    #[test]
    fn bundled_lookup_by_name_and_file_name() {
        for name in ["case6", "case6.json"] {
            let c = RunConfig::new(Task::Solve, name, "out").load_case().unwrap();
            assert_eq!(c.num_branches(), 7);
        }
        let e = RunConfig::new(Task::Solve, "/nonexistent/case6.json", "out").load_case().unwrap_err();
        assert!(matches!(e, CliError::CaseNotFound(_)));
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().starts_with("case not found"));
    }
}
