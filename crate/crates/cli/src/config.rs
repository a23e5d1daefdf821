//! Experiment configuration: a flat TOML file plus `KEY=VALUE` overrides.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ymh_core::dynamics::Scheme;
use ymh_core::observables::{ObservableKind, ObservableSpec};
use ymh_core::oracle::SweepOrder;
use ymh_core::{Couplings, Lattice, Target};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Lattice dimension.
    pub d: usize,
    /// Side length.
    pub l: usize,
    /// Matrix size.
    pub n: usize,
    pub beta: f64,
    pub kappa: f64,
    pub m: f64,
    /// `euclidean`, `sphere` or `group`.
    pub target: String,
    /// `langevin` or `metropolis`.
    pub engine: String,
    pub dt: f64,
    pub steps: usize,
    /// `geodesic` or `ito-project`.
    pub scheme: String,
    pub sweeps: usize,
    pub edge_scale: f64,
    pub site_scale: f64,
    /// `sequential` or `shuffled`.
    pub order: String,
    pub observables: Vec<String>,
    pub seed: u64,
    /// Burn-in: sweeps for metropolis, steps for langevin.
    pub burn_in: usize,
    pub thinning: usize,
    /// `cold`, `hot`, or the path of a binary checkpoint.
    pub start: String,
    /// Output path, `-` for stdout. Not part of the config hash.
    #[serde(skip_serializing)]
    pub output: String,
    /// Langevin time steps compared by `oracle-compare`.
    pub dts: Vec<f64>,
    /// Langevin run length in time units for `oracle-compare`.
    pub time: f64,
    /// Langevin time discarded before measuring.
    pub burn_time: f64,
    /// Plaquette separations for `massgap`.
    pub distances: Vec<usize>,
    /// Matrix sizes for `largen`.
    pub n_ladder: Vec<usize>,
    /// Loop observables for `largen`.
    pub loops: Vec<String>,
    /// `start:stop:count` or a single value, for `bounds`.
    pub beta_grid: String,
    pub kappa_grid: String,
    /// Test hook: replace sampling in `massgap` by synthetic exponential data
    /// with this rate.
    pub synthetic_rate: Option<f64>,
    /// Relative noise of the synthetic data.
    pub synthetic_noise: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            d: 2,
            l: 3,
            n: 3,
            beta: 0.2,
            kappa: 0.2,
            m: 1.0,
            target: "euclidean".into(),
            engine: "metropolis".into(),
            dt: 1e-3,
            steps: 1000,
            scheme: "geodesic".into(),
            sweeps: 1000,
            edge_scale: 0.5,
            site_scale: 0.5,
            order: "sequential".into(),
            observables: vec!["plaquette_mean".into(), "hopping_mean".into()],
            seed: 1,
            burn_in: 100,
            thinning: 1,
            start: "cold".into(),
            output: "-".into(),
            dts: vec![2e-3, 1e-3],
            time: 100.0,
            burn_time: 5.0,
            distances: vec![1, 2, 3, 4, 5],
            n_ladder: vec![4, 8, 16],
            loops: vec!["plaquette".into()],
            beta_grid: "0".into(),
            kappa_grid: "0".into(),
            synthetic_rate: None,
            synthetic_noise: 0.05,
        }
    }
}

fn parse_override(raw: &str) -> CliResult<(String, toml::Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override '{raw}' is not KEY=VALUE")))?;
    let key = key.trim().to_string();
    let text = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()));
    Ok((key, parsed))
}

impl ExperimentConfig {
    /// Reads `path` (if any), applies overrides in order and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_text(&text, overrides)
    }

    pub fn from_text(text: &str, overrides: &[String]) -> CliResult<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config is not valid TOML: {e}")))?;
        for raw in overrides {
            let (k, v) = parse_override(raw)?;
            table.insert(k, v);
        }
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.d < 2 {
            return Err(CliError::config("d", "must be at least 2"));
        }
        if self.l < 2 {
            return Err(CliError::config("l", "must be at least 2"));
        }
        if self.n < 2 {
            return Err(CliError::config("n", "must be at least 2"));
        }
        for (k, v) in [("beta", self.beta), ("kappa", self.kappa), ("m", self.m)] {
            if !v.is_finite() {
                return Err(CliError::config(k, "must be finite"));
            }
        }
        let target = self.target()?;
        if target == Target::Euclidean && (self.m <= 0.0 || self.kappa < 0.0) {
            return Err(CliError::config("m", "Euclidean target needs m > 0 and kappa >= 0"));
        }
        match self.engine.as_str() {
            "langevin" | "metropolis" => {}
            _ => return Err(CliError::config("engine", "expected 'langevin' or 'metropolis'")),
        }
        if !(self.dt > 0.0) {
            return Err(CliError::config("dt", "must be positive"));
        }
        self.scheme()?;
        self.order()?;
        if !(self.edge_scale > 0.0) || !(self.site_scale > 0.0) {
            return Err(CliError::config("edge_scale", "proposal scales must be positive"));
        }
        if self.thinning == 0 {
            return Err(CliError::config("thinning", "must be at least 1"));
        }
        match self.start.as_str() {
            "cold" | "hot" => {}
            path if Path::new(path).is_file() => {}
            _ => return Err(CliError::config("start", "expected 'cold', 'hot' or an existing checkpoint file")),
        }
        if self.dts.iter().any(|dt| !(*dt > 0.0)) {
            return Err(CliError::config("dts", "time steps must be positive"));
        }
        if !(self.time > 0.0) || !(self.burn_time >= 0.0) {
            return Err(CliError::config("time", "run time must be positive and burn_time non-negative"));
        }
        if self.n_ladder.iter().any(|n| *n < 2) {
            return Err(CliError::config("n_ladder", "matrix sizes must be at least 2"));
        }
        let lat = self.lattice()?;
        for (i, o) in self.observables.iter().enumerate() {
            parse_observable(&lat, o).map_err(|e| CliError::config(&format!("observables[{i}]"), e.to_string()))?;
        }
        for (i, o) in self.loops.iter().enumerate() {
            parse_observable(&lat, o).map_err(|e| CliError::config(&format!("loops[{i}]"), e.to_string()))?;
        }
        Ok(())
    }

    pub fn target(&self) -> CliResult<Target> {
        self.target.parse().map_err(|_| CliError::config("target", "expected 'euclidean', 'sphere' or 'group'"))
    }

    pub fn scheme(&self) -> CliResult<Scheme> {
        self.scheme.parse().map_err(|_| CliError::config("scheme", "expected 'geodesic' or 'ito-project'"))
    }

    pub fn order(&self) -> CliResult<SweepOrder> {
        match self.order.as_str() {
            "sequential" => Ok(SweepOrder::Sequential),
            "shuffled" => Ok(SweepOrder::Shuffled),
            _ => Err(CliError::config("order", "expected 'sequential' or 'shuffled'")),
        }
    }

    pub fn lattice(&self) -> CliResult<Arc<Lattice>> {
        Ok(Arc::new(Lattice::new(self.d, self.l)?))
    }

    pub fn couplings(&self) -> CliResult<Couplings> {
        Ok(Couplings::new(self.n, self.beta, self.kappa, self.m, self.target()?)?)
    }

    pub fn observable_specs(&self, lat: &Lattice) -> CliResult<Vec<ObservableSpec>> {
        self.observables.iter().map(|o| Ok(parse_observable(lat, o)?)).collect()
    }

    /// Canonical TOML rendering of every field.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of [`Self::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn field<T: std::str::FromStr>(parts: &[&str], i: usize, raw: &str) -> ymh_core::Result<T> {
    parts
        .get(i)
        .and_then(|p| p.parse().ok())
        .ok_or_else(|| ymh_core::Error::InvalidRegion(format!("cannot parse observable '{raw}'")))
}

/// Parses observable names:
///
/// ```text
/// plaquette_mean | hopping_mean | higgs_moment_mean | higgs_moment:X
/// plaquette | plaquette:X:MU:NU | wilson_loop:X:MU:NU:A:B
/// wilson_line:X:AXIS:LEN | link_trace:I | constant:V
/// ```
///
/// with an optional `/N` suffix for normalisation by `N`.
pub fn parse_observable(lat: &Lattice, raw: &str) -> ymh_core::Result<ObservableSpec> {
    let (body, normalize) = match raw.trim().strip_suffix("/N") {
        Some(b) => (b, true),
        None => (raw.trim(), false),
    };
    let parts: Vec<&str> = body.split(':').collect();
    let kind = match parts[0] {
        "plaquette_mean" => ObservableKind::PlaquetteMean,
        "hopping_mean" => ObservableKind::HoppingMean,
        "higgs_moment_mean" => ObservableKind::HiggsSecondMomentMean,
        "higgs_moment" => ObservableKind::HiggsSecondMoment(field(&parts, 1, raw)?),
        "plaquette" if parts.len() == 1 => ObservableKind::WilsonLoop(lat.rectangle(0, 0, 1, 1, 1)),
        "plaquette" => ObservableKind::Plaquette {
            site: field(&parts, 1, raw)?,
            mu: field(&parts, 2, raw)?,
            nu: field(&parts, 3, raw)?,
        },
        "wilson_loop" => {
            let (x, mu, nu, a, b): (usize, usize, usize, usize, usize) = (
                field(&parts, 1, raw)?,
                field(&parts, 2, raw)?,
                field(&parts, 3, raw)?,
                field(&parts, 4, raw)?,
                field(&parts, 5, raw)?,
            );
            if x >= lat.n_sites() || mu >= lat.dim() || nu >= lat.dim() || mu == nu || a == 0 || b == 0 {
                return Err(ymh_core::Error::InvalidRegion(format!("bad loop '{raw}'")));
            }
            ObservableKind::WilsonLoop(lat.rectangle(x, mu, nu, a, b))
        }
        "wilson_line" => {
            let (x, axis, len): (usize, usize, usize) =
                (field(&parts, 1, raw)?, field(&parts, 2, raw)?, field(&parts, 3, raw)?);
            if x >= lat.n_sites() || axis >= lat.dim() || len == 0 {
                return Err(ymh_core::Error::InvalidRegion(format!("bad line '{raw}'")));
            }
            ObservableKind::WilsonLine(lat.straight_path(x, axis, len))
        }
        "link_trace" => ObservableKind::LinkTrace(field(&parts, 1, raw)?),
        "constant" => ObservableKind::Constant(field(&parts, 1, raw)?),
        _ => return Err(ymh_core::Error::InvalidRegion(format!("unknown observable '{raw}'"))),
    };
    ObservableSpec::new(lat, kind, normalize)
}

/// `start:stop:count` (inclusive, evenly spaced) or a single number.
pub fn parse_grid(field_name: &str, spec: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Usage(format!("malformed grid for {field_name}: '{spec}' (expected start:stop:count or a number)"));
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [v] => Ok(vec![v.trim().parse().map_err(|_| bad())?]),
        [a, b, c] => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            let c: usize = c.trim().parse().map_err(|_| bad())?;
            if c == 0 || !a.is_finite() || !b.is_finite() {
                return Err(bad());
            }
            if c == 1 {
                return Ok(vec![a]);
            }
            Ok((0..c).map(|i| a + (b - a) * i as f64 / (c - 1) as f64).collect())
        }
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_text(&cfg.canonical(), &[]).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn overrides_apply_in_order() {
        let cfg = ExperimentConfig::from_text(
            "beta = 0.1\ntarget = \"sphere\"\n",
            &["beta=0.3".into(), "target=group".into(), "observables=[\"hopping_mean\"]".into()],
        )
        .unwrap();
        assert_eq!(cfg.beta, 0.3);
        assert_eq!(cfg.target, "group");
        assert_eq!(cfg.observables, vec!["hopping_mean".to_string()]);
    }

    #[test]
    fn field_level_errors() {
        let e = ExperimentConfig::from_text("dt = -1.0", &[]).unwrap_err();
        assert!(matches!(&e, CliError::Config { field, .. } if field == "dt"));
        assert_eq!(e.exit_code(), 2);
        let e = ExperimentConfig::from_text("nonsense = 1", &[]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = ExperimentConfig::from_text("observables = [\"wilson_loop:0:0:0:1:1\"]", &[]).unwrap_err();
        assert!(matches!(&e, CliError::Config { field, .. } if field == "observables[0]"));
        assert!(ExperimentConfig::from_text("", &["beta".into()]).is_err());
    }

    #[test]
    fn observable_grammar() {
        let lat = Lattice::new(2, 4).unwrap();
        for ok in [
            "plaquette_mean",
            "hopping_mean/N",
            "higgs_moment:3",
            "plaquette",
            "plaquette:5:0:1",
            "wilson_loop:1:0:1:2:1/N",
            "wilson_line:0:1:2",
            "link_trace:4",
            "constant:2.5",
        ] {
            parse_observable(&lat, ok).unwrap();
        }
        for bad in ["plaquette:0:1:1", "wilson_line:0:5:1", "nothing", "higgs_moment:x"] {
            assert!(parse_observable(&lat, bad).is_err(), "{bad}");
        }
        assert!(parse_observable(&lat, "hopping_mean/N").unwrap().normalize);
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("b", "0.5").unwrap(), vec![0.5]);
        assert_eq!(parse_grid("b", "0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        for bad in ["", "0:1", "a:b:c", "0:1:0", "0:1:2:3"] {
            assert!(parse_grid("b", bad).is_err(), "{bad}");
        }
    }
}
