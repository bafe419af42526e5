//! `teffect simulate`: Monte Carlo harness driven from a run config.

use std::path::Path;

use teffect_core::sim::report::{to_csv, to_json};
use teffect_core::sim::{run_replications, SimReport};

use crate::config::{Command, RunConfig};
use crate::output::write_atomic;

pub const CSV_NAME: &str = "report.csv";
pub const JSON_NAME: &str = "report.json";

/// Runs the harness and writes `report.csv` and `report.json` into `out_dir`.
pub fn cmd_simulate(config: &RunConfig, out_dir: &Path) -> anyhow::Result<SimReport> {
    config.check(Command::Simulate)?;
    let sim = config.sim_config()?;
    let report = run_replications(&sim)?;
    write_atomic(&out_dir.join(CSV_NAME), to_csv(&report.cells).as_bytes())?;
    write_atomic(&out_dir.join(JSON_NAME), to_json(&report)?.as_bytes())?;
    Ok(report)
}
