//! Self-describing CSV output with fixed 17-significant-digit floats.

use std::fmt::Write as _;
use std::path::Path;

use ymh_core::geometry::{ALGEBRA_TOL, GROUP_TOL, SPHERE_TOL};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map(Cell::Float).unwrap_or(Cell::Empty)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(x) => fmt_f64(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
            Cell::Empty => String::new(),
        }
    }
}

/// Table with a commented provenance header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    /// Header lines: tool version, command, config hash, seed, constraint
    /// tolerances, then the canonical config.
    pub fn new(command: &str, cfg: &ExperimentConfig, columns: &[&str]) -> Self {
        let mut header = vec![
            format!("ymh {}", env!("CARGO_PKG_VERSION")),
            format!("command = {command}"),
            format!("config_sha256 = {}", cfg.hash()),
            format!("seed = {}", cfg.seed),
            format!("tolerances = group {GROUP_TOL:e}, algebra {ALGEBRA_TOL:e}, sphere {SPHERE_TOL:e}"),
            "config:".to_string(),
        ];
        header.extend(cfg.canonical().lines().map(|l| format!("  {l}")));
        Self { header, columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.header.push(line.into());
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for h in &self.header {
            let _ = writeln!(s, "# {h}");
        }
        let _ = writeln!(s, "{}", self.columns.join(","));
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.iter().map(Cell::render).collect::<Vec<_>>().join(","));
        }
        s
    }

    /// Writes to `path`, or to stdout for `-`.
    pub fn write(&self, path: &Path) -> CliResult<()> {
        if path.as_os_str() == "-" {
            print!("{}", self.render());
            Ok(())
        } else {
            std::fs::write(path, self.render()).map_err(CliError::from)
        }
    }
}

/// Recovers the configuration embedded in a CSV header.
pub fn config_from_header(text: &str) -> CliResult<ExperimentConfig> {
    let mut body = String::new();
    let mut inside = false;
    for line in text.lines() {
        let Some(rest) = line.strip_prefix("# ") else { break };
        if rest == "config:" {
            inside = true;
        } else if inside {
            match rest.strip_prefix("  ") {
                Some(l) => {
                    body.push_str(l);
                    body.push('\n');
                }
                None => inside = false,
            }
        }
    }
    ExperimentConfig::from_text(&body, &[])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
        let x = std::f64::consts::PI;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn header_round_trips_config() {
        let cfg = ExperimentConfig { beta: 0.125, observables: vec!["wilson_loop:0:0:1:1:1".into()], ..Default::default() };
        let mut t = Table::new("simulate", &cfg, &["a", "b"]);
        t.push(vec![Cell::from(1usize), Cell::from("x,y")]);
        let text = t.render();
        assert!(text.contains(&cfg.hash()));
        assert!(text.ends_with("a,b\n1,\"x,y\"\n"));
        let back = config_from_header(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
