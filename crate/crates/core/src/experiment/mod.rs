//! Config-driven experiments: scenario dispatch, reports and exit codes.

pub mod config;
pub mod report;
pub mod scenarios;

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub use config::{ExperimentConfig, Format, Scenario, SCHEMA};
pub use report::{ExperimentReport, InvariantCheck, Series};

use crate::error::{Error, Result};

/// Runs one configured scenario. `base_dir` resolves relative paths in the
/// config (tabulated filters).
pub fn run_scenario(config: &ExperimentConfig, base_dir: Option<&Path>) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let ctx = scenarios::Context::new(config, base_dir)?;
    let out = match &config.scenario {
        Scenario::FilterAudit(p) => scenarios::filter_audit(&ctx, p),
        Scenario::GapVsPsi(p) => scenarios::gap_vs_psi(&ctx, p),
        Scenario::GapVsTruncation(p) => scenarios::gap_vs_truncation(&ctx, p),
        Scenario::GapVsSigmaE(p) => scenarios::gap_vs_sigma(&ctx, p),
        Scenario::LadderBlockCompare(p) => scenarios::ladder_block_compare(&ctx, p),
        Scenario::FiniteRankAudit(p) => scenarios::finite_rank_audit(&ctx, p),
        Scenario::MeanfieldEigenAudit(p) => scenarios::meanfield_audit(&ctx, p),
        Scenario::GibbsTraceDistance(p) => scenarios::gibbs_trace_distance(&ctx, p),
        Scenario::MixingTime(p) => scenarios::mixing(&ctx, p),
        Scenario::FreeEnergy(p) => scenarios::free_energy(&ctx, p),
        Scenario::AubryAndreSpectrum => scenarios::aubry_andre_spectrum(&ctx),
    }?;
    let pass = out.invariants.iter().all(|c| c.pass);
    Ok(ExperimentReport {
        scenario: config.scenario.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: serde_json::to_value(config)?,
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        results: out.results,
        series: out.series,
        invariants: out.invariants,
        findings: out.findings,
        pass,
    })
}

/// Process exit code for an invariant failure.
pub const EXIT_INVARIANT: i32 = 1;

/// Process exit code for an error: 2 schema or parameter, 3 dimension cap,
/// 4 numerical, 5 I/O.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Json(_)
        | Error::InvalidParameter(_)
        | Error::ShapeMismatch(_)
        | Error::KmsViolation { .. }
        | Error::NotAdjointClosed(_)
        | Error::WrongPicture { .. } => 2,
        Error::DimensionCap { .. } => 3,
        Error::Numerical(_)
        | Error::IllConditioned(_)
        | Error::NotHermitian { .. }
        | Error::NotNumberConserving { .. }
        | Error::Invariant(_) => 4,
        Error::Io(_) => 5,
    }
}
