//! Subcommands: run an experiment and render it as a [`Table`].

use std::path::Path;

use ymh_core::snapshot;

use crate::config::ExperimentConfig;
use crate::csv::{fmt_f64, Cell, Table};
use crate::error::{CliError, CliResult};
use crate::experiments;

/// A rendered table plus an optional failure to report after writing it.
#[derive(Debug)]
pub struct Outcome {
    pub table: Table,
    pub failure: Option<CliError>,
}

impl From<Table> for Outcome {
    fn from(table: Table) -> Self {
        Self { table, failure: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Bounds,
    Massgap,
    Largen,
    GaugefixCheck,
    OracleCompare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Bounds => "bounds",
            Command::Massgap => "massgap",
            Command::Largen => "largen",
            Command::GaugefixCheck => "gaugefix-check",
            Command::OracleCompare => "oracle-compare",
        }
    }

    pub fn run(self, cfg: &ExperimentConfig, threads: usize) -> CliResult<Outcome> {
        match self {
            Command::Simulate => simulate(cfg),
            Command::Bounds => bounds(cfg).map(Outcome::from),
            Command::Massgap => massgap(cfg),
            Command::Largen => largen(cfg, threads).map(Outcome::from),
            Command::GaugefixCheck => gaugefix_check(cfg, threads).map(Outcome::from),
            Command::OracleCompare => oracle_compare(cfg, threads).map(Outcome::from),
        }
    }
}

/// Path of the checkpoint written next to a `simulate` output.
pub fn checkpoint_path(output: &str) -> String {
    format!("{output}.ckpt")
}

fn simulate(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let series = experiments::simulate(cfg)?;
    let mut columns = vec!["step", "time"];
    columns.extend(cfg.observables.iter().map(String::as_str));
    let mut table = Table::new("simulate", cfg, &columns);
    if let Some((e, s)) = series.acceptance {
        table.note(format!("acceptance = edges {}, sites {}", fmt_f64(e), fmt_f64(s)));
    }
    if let Some((e, s)) = series.tuned_scales {
        table.note(format!("tuned_scales = edge {}, site {}", fmt_f64(e), fmt_f64(s)));
    }
    for ((step, time), values) in series.steps.iter().zip(&series.times).zip(&series.values) {
        let mut row = vec![Cell::from(*step), Cell::from(*time)];
        row.extend(values.iter().map(|v| Cell::from(*v)));
        table.push(row);
    }
    if cfg.output != "-" {
        std::fs::write(Path::new(&checkpoint_path(&cfg.output)), snapshot::to_bytes(&series.final_config))?;
    }
    Ok(table.into())
}

fn bounds(cfg: &ExperimentConfig) -> CliResult<Table> {
    let (rows, boundary) = experiments::bounds_grid(cfg)?;
    let mut table = Table::new(
        "bounds",
        cfg,
        &["target", "n", "d", "beta", "kappa", "m", "k", "delta", "positive", "k_ugauge", "warning"],
    );
    for (beta, kappa) in &boundary {
        table.note(format!("boundary k = 0 at beta {}, kappa {}", fmt_f64(*beta), fmt_f64(*kappa)));
    }
    for r in rows {
        table.push(vec![
            Cell::from(cfg.target.as_str()),
            Cell::from(cfg.n),
            Cell::from(cfg.d),
            Cell::from(r.beta),
            Cell::from(r.kappa),
            Cell::from(cfg.m),
            Cell::from(r.report.value),
            Cell::from(r.report.delta),
            Cell::from(if r.report.positive { "true" } else { "false" }),
            Cell::from(r.k_ugauge),
            Cell::from(r.report.warning.clone().unwrap_or_default()),
        ]);
    }
    Ok(table)
}

fn massgap(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let report = experiments::massgap(cfg)?;
    let mut table = Table::new(
        "massgap",
        cfg,
        &["kind", "distance", "offset", "covariance", "error", "rate", "rate_error", "ci_low", "ci_high", "chi2", "verdict"],
    );
    if report.synthetic {
        table.note("synthetic data");
    }
    if let Some(k) = &report.curvature {
        table.note(format!("curvature {} = {}", k.name, fmt_f64(k.value)));
        if !k.positive {
            eprintln!("warning: curvature constant {} = {} is not positive at these couplings", k.name, k.value);
            table.note("warning: curvature constant is not positive");
        }
    }
    for p in &report.points {
        let mut row = vec![
            Cell::from("point"),
            Cell::from(p.distance),
            Cell::from(p.offset),
            Cell::from(p.value),
            Cell::from(p.error),
        ];
        row.extend(std::iter::repeat_n(Cell::Empty, 6));
        table.push(row);
    }
    let failure = match &report.fit {
        Ok(fit) => {
            let (lo, hi) = fit.ci95();
            let verdict = if lo > 0.0 { "decay" } else { "ci-includes-zero" };
            table.push(vec![
                Cell::from("fit"),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::from(fit.rate),
                Cell::from(fit.rate_error),
                Cell::from(lo),
                Cell::from(hi),
                Cell::from(fit.chi2),
                Cell::from(verdict),
            ]);
            None
        }
        Err(e) => {
            let mut row = vec![Cell::from("fit")];
            row.extend(std::iter::repeat_n(Cell::Empty, 9));
            row.push(Cell::from("insufficient-signal"));
            table.push(row);
            table.note(format!("fit failed: {e}"));
            Some(CliError::Numerical(e.clone()))
        }
    };
    Ok(Outcome { table, failure })
}

fn largen(cfg: &ExperimentConfig, threads: usize) -> CliResult<Table> {
    let report = experiments::largen(cfg, threads)?;
    let mut table = Table::new(
        "largen",
        cfg,
        &["n", "loop_len", "k", "variance", "variance_error", "bound", "defect", "defect_error", "tau_int", "samples"],
    );
    table.note(format!("variance_nonincreasing = {}", report.variance_nonincreasing));
    table.note(format!("defect_nonincreasing = {}", report.defect_nonincreasing));
    match report.within_bound {
        Some(b) => table.note(format!("within_bound = {b}")),
        None => table.note("within_bound = n/a (curvature constant not positive)"),
    }
    for (r, k) in report.rows.iter().zip(&report.k) {
        table.push(vec![
            Cell::from(r.n),
            Cell::from(report.loop_len),
            Cell::from(*k),
            Cell::from(r.variance.mean),
            Cell::from(r.variance.error),
            Cell::from(r.bound),
            Cell::from(r.defect.mean),
            Cell::from(r.defect.error),
            Cell::from(r.variance.tau_int),
            Cell::from(r.variance.samples),
        ]);
    }
    Ok(table)
}

fn gaugefix_check(cfg: &ExperimentConfig, threads: usize) -> CliResult<Table> {
    let rows = experiments::gaugefix_check(cfg, threads)?;
    let mut table = Table::new(
        "gaugefix-check",
        cfg,
        &["observable", "full_mean", "full_error", "fixed_mean", "fixed_error", "z", "agrees"],
    );
    for r in rows {
        table.push(vec![
            Cell::from(r.observable.as_str()),
            Cell::from(r.full.mean),
            Cell::from(r.full.error),
            Cell::from(r.fixed.mean),
            Cell::from(r.fixed.error),
            Cell::from(r.z),
            Cell::from(r.agrees().to_string()),
        ]);
    }
    Ok(table)
}

fn oracle_compare(cfg: &ExperimentConfig, threads: usize) -> CliResult<Table> {
    let rows = experiments::oracle_compare(cfg, threads)?;
    let mut table = Table::new(
        "oracle-compare",
        cfg,
        &["observable", "source", "dt", "mean", "error", "tau_int", "samples", "z", "agrees"],
    );
    for r in rows {
        let name = r.observable.as_str();
        for (dt, e) in &r.langevin {
            table.push(vec![
                Cell::from(name),
                Cell::from("langevin"),
                Cell::from(*dt),
                Cell::from(e.mean),
                Cell::from(e.error),
                Cell::from(e.tau_int),
                Cell::from(e.samples),
                Cell::Empty,
                Cell::Empty,
            ]);
        }
        table.push(vec![
            Cell::from(name),
            Cell::from("extrapolated"),
            Cell::from(0.0),
            Cell::from(r.extrapolated.0),
            Cell::from(r.extrapolated.1),
            Cell::Empty,
            Cell::Empty,
            Cell::Empty,
            Cell::Empty,
        ]);
        table.push(vec![
            Cell::from(name),
            Cell::from("metropolis"),
            Cell::Empty,
            Cell::from(r.metropolis.mean),
            Cell::from(r.metropolis.error),
            Cell::from(r.metropolis.tau_int),
            Cell::from(r.metropolis.samples),
            Cell::from(r.z),
            Cell::from(r.agrees().to_string()),
        ]);
    }
    Ok(table)
}
