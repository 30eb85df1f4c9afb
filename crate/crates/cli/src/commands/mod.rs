//! One module per subcommand. Each `cmd_*` writes its reports under the
//! configured output directory and returns what it wrote.

pub mod compare;
pub mod oracle_check;
pub mod sensitivity;
pub mod solve;

pub use compare::{cmd_compare, CompareReport};
pub use oracle_check::{cmd_oracle_check, Check, CheckStatus, OracleReport};
pub use sensitivity::{cmd_sensitivity, SensitivityOutput};
pub use solve::{cmd_solve, SolveReport, Summary};

use rdnr_core::ccg::{Instance, InstanceOptions};
use rdnr_core::formulation::build_uncertainty;
use rdnr_core::network::NetworkCase;

use crate::config::{RunConfig, Task};
use crate::error::Result;

/// Case and decomposition instance built from a configuration.
pub struct Prepared {
    pub case: NetworkCase,
    pub opts: InstanceOptions,
    pub inst: Instance,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let case = cfg.load_case()?;
    let mut opts = cfg.instance_options();
    if cfg.extension {
        let unc = build_uncertainty(&case, &opts.uncertainty)?;
        opts.uncertainty.extension = Some(unc.default_extension());
    }
    let inst = Instance::new(&case, &opts)?;
    Ok(Prepared { case, opts, inst })
}

/// Runs the configured subcommand.
pub fn run(cfg: &RunConfig) -> Result<()> {
    match cfg.task {
        Task::Solve => cmd_solve(cfg).map(|r| println!("{}", r.headline())),
        Task::Compare { .. } => cmd_compare(cfg).map(|r| print!("{}", r.table())),
        Task::Sensitivity { .. } => cmd_sensitivity(cfg).map(|r| println!("{}", r.headline())),
        Task::OracleCheck { .. } => cmd_oracle_check(cfg).map(|r| print!("{}", r.lines())),
    }
}
