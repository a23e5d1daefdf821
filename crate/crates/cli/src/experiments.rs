//! Canned experiments built on the core library. Each returns plain data;
//! rendering to CSV lives in `commands`.

use std::cell::RefCell;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use ymh_core::bounds::{k_for, k_ugauge, BoundReport};
use ymh_core::dynamics::{self, IntegratorSettings, Observer};
use ymh_core::observables::{
    connected_correlator, estimate, higgs_second_moment, mass_gap_fit, nonincreasing_within, EstimatorResult,
    FactorizationRow, HiggsMomentReport, MassGapFit, ObservableKind, ObservableSpec,
};
use ymh_core::oracle::{run_metropolis, Ensemble, MetropolisSettings, ProposalScales};
use ymh_core::{bounds, snapshot, Couplings, FieldConfiguration, Lattice, LatticePath, Target};

use crate::config::{parse_observable, ExperimentConfig};
use crate::error::{CliError, CliResult};

/// Langevin measurement spacing in time units used by `oracle-compare`.
pub const MEASURE_INTERVAL: f64 = 0.02;
/// z-score threshold for agreement checks.
pub const Z_AGREE: f64 = 3.0;

/// Derived per-chain seed.
pub fn sub_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ (k.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `f` over `items` on up to `threads` workers; output order matches
/// input order.
pub fn par_map<T, R, F>(items: Vec<T>, threads: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let threads = threads.max(1).min(items.len().max(1));
    if threads == 1 {
        return items.into_iter().map(f).collect();
    }
    let n = items.len();
    let inputs: Vec<Mutex<Option<T>>> = items.into_iter().map(|t| Mutex::new(Some(t))).collect();
    let outputs: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let item = inputs[i].lock().unwrap().take().unwrap();
                let r = f(item);
                *outputs[i].lock().unwrap() = Some(r);
            });
        }
    });
    outputs.into_iter().map(|m| m.into_inner().unwrap().unwrap()).collect()
}

/// Starting configuration from the `start` key: `cold`, `hot`, or a
/// checkpoint path.
pub fn initial_config(cfg: &ExperimentConfig, lat: &Arc<Lattice>, n: usize, seed: u64) -> CliResult<FieldConfiguration> {
    let target = cfg.target()?;
    match cfg.start.as_str() {
        "cold" => Ok(FieldConfiguration::cold(lat.clone(), n, target)),
        "hot" => {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 0xC0FFEE));
            Ok(FieldConfiguration::random(lat.clone(), n, target, &mut rng))
        }
        path => {
            let bytes = std::fs::read(path).map_err(|e| CliError::config("start", format!("cannot read {path}: {e}")))?;
            let loaded = snapshot::from_bytes(&bytes).map_err(|e| CliError::config("start", e.to_string()))?;
            if loaded.lattice().dim() != lat.dim()
                || loaded.lattice().side() != lat.side()
                || loaded.n() != n
                || loaded.target() != target
            {
                return Err(CliError::config("start", "checkpoint does not match d, l, n and target"));
            }
            Ok(loaded)
        }
    }
}

/// A sampled time series of probe vectors.
#[derive(Debug, Clone)]
pub struct Series {
    pub steps: Vec<u64>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Index of the first record after burn-in.
    pub measured_from: usize,
    pub final_config: FieldConfiguration,
    /// Metropolis acceptance rates (edges, sites) and tuned scales.
    pub acceptance: Option<(f64, f64)>,
    pub tuned_scales: Option<(f64, f64)>,
}

impl Series {
    /// Post-burn-in column `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values[self.measured_from..].iter().map(|v| v[j]).collect()
    }
}

/// Runs the configured engine from `start`, recording `probe` at the
/// initial configuration and at every measurement.
pub fn sample(
    cfg: &ExperimentConfig,
    c: &Couplings,
    start: &FieldConfiguration,
    seed: u64,
    ensemble: Ensemble,
    probe: &(dyn Fn(&FieldConfiguration) -> Vec<f64> + Sync),
) -> CliResult<Series> {
    let collected = RefCell::new(Vec::new());
    let observer = |q: &FieldConfiguration| {
        collected.borrow_mut().push(probe(q));
        0.0
    };
    let observers: [Observer<'_>; 1] = [&observer];
    match cfg.engine.as_str() {
        "langevin" => {
            if ensemble != Ensemble::Full {
                return Err(CliError::config("engine", "the gauge-fixed ensemble needs the metropolis engine"));
            }
            let settings =
                IntegratorSettings { dt: cfg.dt, scheme: cfg.scheme()?, seed, steps: cfg.steps, thinning: cfg.thinning };
            let traj = dynamics::run(start, c, &settings, &observers)?;
            let steps: Vec<u64> = traj.records.iter().map(|r| r.step).collect();
            let times = traj.records.iter().map(|r| r.time).collect();
            let measured_from = steps.iter().position(|s| *s as usize >= cfg.burn_in).unwrap_or(steps.len());
            Ok(Series {
                steps,
                times,
                values: collected.into_inner(),
                measured_from,
                final_config: traj.final_config,
                acceptance: None,
                tuned_scales: None,
            })
        }
        _ => {
            observer(start);
            let mut settings = MetropolisSettings::new(cfg.sweeps, cfg.burn_in, seed);
            settings.thinning = cfg.thinning;
            settings.order = cfg.order()?;
            settings.ensemble = ensemble;
            let scales = ProposalScales::new(cfg.edge_scale, cfg.site_scale)?;
            let chain = run_metropolis(start, c, scales, &settings, &observers)?;
            let mut steps = vec![0];
            steps.extend(chain.records.iter().map(|r| r.step + cfg.burn_in as u64));
            let times = steps.iter().map(|s| *s as f64).collect();
            Ok(Series {
                steps,
                times,
                values: collected.into_inner(),
                measured_from: 1,
                final_config: chain.final_config,
                acceptance: Some((chain.scales.total.edges.rate(), chain.scales.total.sites.rate())),
                tuned_scales: Some((chain.tuned_edge, chain.tuned_site)),
            })
        }
    }
}

fn eval_all(specs: &[ObservableSpec]) -> impl Fn(&FieldConfiguration) -> Vec<f64> + Sync + '_ {
    move |q| specs.iter().map(|s| s.evaluate(q).unwrap_or(f64::NAN)).collect()
}

/// Time series of the configured observables.
pub fn simulate(cfg: &ExperimentConfig) -> CliResult<Series> {
    let lat = cfg.lattice()?;
    let c = cfg.couplings()?;
    let specs = cfg.observable_specs(&lat)?;
    let start = initial_config(cfg, &lat, cfg.n, cfg.seed)?;
    let probe = eval_all(&specs);
    sample(cfg, &c, &start, cfg.seed, Ensemble::Full, &probe)
}

/// `z = (a - b) / sqrt(ea^2 + eb^2)`, with `0` for identical exact values.
pub fn z_score(a: f64, ea: f64, b: f64, eb: f64) -> f64 {
    let s = (ea * ea + eb * eb).sqrt();
    if s > 0.0 {
        (a - b) / s
    } else if a == b {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Intercept at `dt = 0` of a weighted straight-line fit, with its standard
/// error. A single point is returned unchanged.
pub fn extrapolate_zero(points: &[(f64, f64, f64)]) -> (f64, f64) {
    if points.len() == 1 {
        return (points[0].1, points[0].2);
    }
    let weighted = points.iter().all(|p| p.2 > 0.0);
    let w: Vec<f64> = points.iter().map(|p| if weighted { 1.0 / (p.2 * p.2) } else { 1.0 }).collect();
    let s: f64 = w.iter().sum();
    let sx: f64 = points.iter().zip(&w).map(|(p, w)| w * p.0).sum();
    let sxx: f64 = points.iter().zip(&w).map(|(p, w)| w * p.0 * p.0).sum();
    let det = s * sxx - sx * sx;
    let coef: Vec<f64> = points.iter().zip(&w).map(|(p, w)| w * (sxx - sx * p.0) / det).collect();
    let value = points.iter().zip(&coef).map(|(p, c)| c * p.1).sum();
    let var: f64 = points.iter().zip(&coef).map(|(p, c)| c * c * p.2 * p.2).sum();
    (value, var.sqrt())
}

#[derive(Debug, Clone)]
pub struct OracleRow {
    pub observable: String,
    /// One estimate per Langevin time step.
    pub langevin: Vec<(f64, EstimatorResult)>,
    pub extrapolated: (f64, f64),
    pub metropolis: EstimatorResult,
    pub z: f64,
}

impl OracleRow {
    pub fn agrees(&self) -> bool {
        self.z.abs() <= Z_AGREE
    }
}

/// Langevin at each `dts` entry, extrapolated linearly to `dt = 0`, against
/// a Metropolis chain on the same couplings.
pub fn oracle_compare(cfg: &ExperimentConfig, threads: usize) -> CliResult<Vec<OracleRow>> {
    let lat = cfg.lattice()?;
    let c = cfg.couplings()?;
    let specs = cfg.observable_specs(&lat)?;
    if specs.is_empty() {
        return Err(CliError::config("observables", "at least one observable is required"));
    }
    let start = initial_config(cfg, &lat, cfg.n, cfg.seed)?;
    let mut jobs: Vec<(usize, ExperimentConfig)> = Vec::new();
    for (i, &dt) in cfg.dts.iter().enumerate() {
        let thinning = ((MEASURE_INTERVAL / dt).round() as usize).max(1);
        let job = ExperimentConfig {
            engine: "langevin".into(),
            dt,
            steps: ((cfg.burn_time + cfg.time) / dt).round() as usize,
            burn_in: (cfg.burn_time / dt).round() as usize,
            thinning,
            ..cfg.clone()
        };
        jobs.push((i, job));
    }
    jobs.push((cfg.dts.len(), ExperimentConfig { engine: "metropolis".into(), ..cfg.clone() }));
    let probe = eval_all(&specs);
    let series = par_map(jobs, threads, |(i, job)| sample(&job, &c, &start, sub_seed(cfg.seed, i as u64), Ensemble::Full, &probe));
    let series: Vec<Series> = series.into_iter().collect::<CliResult<_>>()?;
    let (met, lang) = series.split_last().expect("at least one job");
    let mut rows = Vec::new();
    for (j, name) in cfg.observables.iter().enumerate() {
        let langevin: Vec<(f64, EstimatorResult)> = cfg
            .dts
            .iter()
            .zip(lang)
            .map(|(dt, s)| Ok((*dt, estimate(&s.column(j))?)))
            .collect::<CliResult<_>>()?;
        let pts: Vec<(f64, f64, f64)> = langevin.iter().map(|(dt, e)| (*dt, e.mean, e.error)).collect();
        let extrapolated = extrapolate_zero(&pts);
        let metropolis = estimate(&met.column(j))?;
        let z = z_score(extrapolated.0, extrapolated.1, metropolis.mean, metropolis.error);
        rows.push(OracleRow { observable: name.clone(), langevin, extrapolated, metropolis, z });
    }
    Ok(rows)
}

/// Sampled `E|Phi_x|^2` against `1/(2m)`.
pub fn moment_bound(cfg: &ExperimentConfig) -> CliResult<HiggsMomentReport> {
    let cfg = ExperimentConfig { observables: vec!["higgs_moment_mean".into()], ..cfg.clone() };
    let series = simulate(&cfg)?;
    Ok(higgs_second_moment(&series.column(0), cfg.target()?, cfg.m)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatorPoint {
    /// Torus distance between the two plaquettes.
    pub distance: usize,
    /// Lattice offset between their base sites.
    pub offset: usize,
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct MassGapReport {
    pub points: Vec<CorrelatorPoint>,
    pub fit: Result<MassGapFit, ymh_core::Error>,
    pub curvature: Option<BoundReport>,
    pub synthetic: bool,
}

/// Connected correlation of translated plaquette traces in the (0, 1) plane,
/// averaged over base sites and translation axes, followed by an
/// exponential fit in the distance.
pub fn massgap(cfg: &ExperimentConfig) -> CliResult<MassGapReport> {
    if cfg.distances.is_empty() {
        return Err(CliError::config("distances", "at least one distance is required"));
    }
    if let Some(rate) = cfg.synthetic_rate {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let points: Vec<CorrelatorPoint> = cfg
            .distances
            .iter()
            .map(|&r| {
                let exact = (-rate * r as f64).exp();
                let z: f64 = StandardNormal.sample(&mut rng);
                CorrelatorPoint {
                    distance: r,
                    offset: r + 1,
                    value: exact * (1.0 + cfg.synthetic_noise * z),
                    error: cfg.synthetic_noise * exact,
                }
            })
            .collect();
        return Ok(MassGapReport { fit: fit_points(&points), points, curvature: None, synthetic: true });
    }
    let lat = cfg.lattice()?;
    let l = lat.side();
    let offsets: Vec<usize> = cfg.distances.iter().map(|r| r + 1).collect();
    if offsets.iter().any(|o| 2 * o > l) {
        return Err(CliError::config("distances", format!("distance + 1 must be at most l/2 = {}", l / 2)));
    }
    let c = cfg.couplings()?;
    let curvature = Some(k_for(c.target, c.n, c.beta, c.kappa, c.m, lat.dim())?);
    let d = lat.dim();
    let sites = lat.n_sites();
    let plaquettes: Vec<_> = (0..sites).map(|x| lat.plaquette_at(x, 0, 1)).collect();
    let shifted: Vec<Vec<Vec<usize>>> = offsets
        .iter()
        .map(|&o| {
            (0..d)
                .map(|axis| {
                    (0..sites)
                        .map(|x| (0..o).fold(x, |y, _| lat.shift(y, axis, true)))
                        .collect()
                })
                .collect()
        })
        .collect();
    let probe = |q: &FieldConfiguration| {
        let p: Vec<f64> = plaquettes.iter().map(|pl| q.path_product(pl).trace()).collect();
        let mut out = Vec::with_capacity(1 + offsets.len());
        out.push(p.iter().sum::<f64>() / sites as f64);
        for by_axis in &shifted {
            let mut acc = 0.0;
            for table in by_axis {
                acc += p.iter().zip(table).map(|(a, &y)| a * p[y]).sum::<f64>();
            }
            out.push(acc / (sites * d) as f64);
        }
        out
    };
    let start = initial_config(cfg, &lat, cfg.n, cfg.seed)?;
    let series = sample(cfg, &c, &start, cfg.seed, Ensemble::Full, &probe)?;
    let mean = series.column(0);
    let mut points = Vec::new();
    for (k, &r) in cfg.distances.iter().enumerate() {
        let res = connected_correlator(&series.column(k + 1), &mean, &mean)?;
        points.push(CorrelatorPoint { distance: r, offset: offsets[k], value: res.mean, error: res.error });
    }
    Ok(MassGapReport { fit: fit_points(&points), points, curvature, synthetic: false })
}

fn fit_points(points: &[CorrelatorPoint]) -> Result<MassGapFit, ymh_core::Error> {
    let pts: Vec<(f64, f64, f64)> = points.iter().map(|p| (p.distance as f64, p.value, p.error)).collect();
    mass_gap_fit(&pts)
}

/// `(mu, nu, a, b)` of a rectangular loop observable.
fn loop_shape(lat: &Lattice, raw: &str) -> CliResult<(usize, usize, usize, usize)> {
    let raw = raw.trim();
    if raw == "plaquette" {
        return Ok((0, 1, 1, 1));
    }
    let spec = parse_observable(lat, raw).map_err(|e| CliError::config("loops", e.to_string()))?;
    let parts: Vec<&str> = raw.trim_end_matches("/N").split(':').collect();
    let num = |i: usize| parts[i].parse::<usize>().expect("validated by parse_observable");
    match spec.kind {
        ObservableKind::WilsonLoop(_) if parts[0] == "wilson_loop" => Ok((num(2), num(3), num(4), num(5))),
        ObservableKind::Plaquette { mu, nu, .. } => Ok((mu, nu, 1, 1)),
        _ => Err(CliError::config("loops", format!("'{raw}' is not a rectangular Wilson loop"))),
    }
}

#[derive(Debug, Clone)]
pub struct LargeNReport {
    pub rows: Vec<FactorizationRow>,
    pub loop_len: usize,
    /// Curvature constant used for the bound column at each `N`.
    pub k: Vec<f64>,
    pub variance_nonincreasing: bool,
    pub defect_nonincreasing: bool,
    /// `var <= bound + 3 sigma` on every row with a bound.
    pub within_bound: Option<bool>,
}

/// Translation-averaged variance of `W/N` for a rectangular loop and the
/// connected correlation of two loops displaced by one side, across the
/// `n_ladder` matrix sizes.
pub fn largen(cfg: &ExperimentConfig, threads: usize) -> CliResult<LargeNReport> {
    let lat = cfg.lattice()?;
    let raw = cfg.loops.first().ok_or_else(|| CliError::Usage("largen needs a loop spec in `loops`".into()))?;
    if cfg.n_ladder.is_empty() {
        return Err(CliError::config("n_ladder", "at least one matrix size is required"));
    }
    let (mu, nu, a, b) = loop_shape(&lat, raw)?;
    let loop_len = 2 * (a + b);
    let sites = lat.n_sites();
    let loops: Vec<LatticePath> = (0..sites).map(|x| lat.rectangle(x, mu, nu, a, b)).collect();
    let neighbour: Vec<usize> = (0..sites).map(|x| (0..a).fold(x, |y, _| lat.shift(y, mu, true))).collect();
    let target = cfg.target()?;
    let jobs: Vec<(usize, usize)> = cfg.n_ladder.iter().copied().enumerate().collect();
    let results = par_map(jobs, threads, |(i, n)| -> CliResult<(FactorizationRow, f64)> {
        let c = Couplings::new(n, cfg.beta, cfg.kappa, cfg.m, target)?;
        let nf = n as f64;
        let probe = |q: &FieldConfiguration| {
            let w: Vec<f64> = loops.iter().map(|p| q.path_product(p.edges()).trace() / nf).collect();
            let m1 = w.iter().sum::<f64>() / sites as f64;
            let m2 = w.iter().map(|v| v * v).sum::<f64>() / sites as f64;
            let m12 = w.iter().zip(&neighbour).map(|(v, &y)| v * w[y]).sum::<f64>() / sites as f64;
            vec![m1, m2, m12]
        };
        let seed = sub_seed(cfg.seed, i as u64);
        let start = initial_config(cfg, &lat, n, seed)?;
        let series = sample(cfg, &c, &start, seed, Ensemble::Full, &probe)?;
        let m1 = series.column(0);
        let variance = connected_correlator(&series.column(1), &m1, &m1)?;
        let mut defect = connected_correlator(&series.column(2), &m1, &m1)?;
        defect.mean = defect.mean.abs();
        let k = match target {
            Target::Group => k_ugauge(n, cfg.beta, cfg.kappa, lat.dim()),
            _ => k_for(target, n, cfg.beta, cfg.kappa, cfg.m, lat.dim())?.value,
        };
        let bound = if k > 0.0 { Some(bounds::variance_bound(loop_len, k, n)?) } else { None };
        Ok((FactorizationRow { n, variance, bound, defect }, k))
    });
    let mut pairs: Vec<(FactorizationRow, f64)> = results.into_iter().collect::<CliResult<_>>()?;
    pairs.sort_by_key(|(r, _)| r.n);
    let (rows, k): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let var: Vec<(f64, f64)> = rows.iter().map(|r| (r.variance.mean, r.variance.error)).collect();
    let def: Vec<(f64, f64)> = rows.iter().map(|r| (r.defect.mean, r.defect.error)).collect();
    let bounded: Vec<bool> = rows
        .iter()
        .filter_map(|r| r.bound.map(|b| r.variance.mean <= b + Z_AGREE * r.variance.error))
        .collect();
    Ok(LargeNReport {
        loop_len,
        k,
        variance_nonincreasing: nonincreasing_within(&var, Z_AGREE),
        defect_nonincreasing: nonincreasing_within(&def, Z_AGREE),
        within_bound: if bounded.is_empty() { None } else { Some(bounded.iter().all(|b| *b)) },
        rows,
    })
}

#[derive(Debug, Clone)]
pub struct GaugefixRow {
    pub observable: String,
    pub full: EstimatorResult,
    pub fixed: EstimatorResult,
    pub z: f64,
}

impl GaugefixRow {
    pub fn agrees(&self) -> bool {
        self.z.abs() <= Z_AGREE
    }
}

/// Gauge-invariant observables under the full measure against the same
/// observables at `Phi = I` under the unitary-gauge measure.
pub fn gaugefix_check(cfg: &ExperimentConfig, threads: usize) -> CliResult<Vec<GaugefixRow>> {
    if cfg.target()? != Target::Group {
        return Err(CliError::config("target", "gaugefix-check needs target = \"group\""));
    }
    if cfg.engine != "metropolis" {
        return Err(CliError::config("engine", "gaugefix-check needs the metropolis engine"));
    }
    let lat = cfg.lattice()?;
    let specs = cfg.observable_specs(&lat)?;
    if let Some(i) = specs.iter().position(|s| !s.kind.is_gauge_invariant()) {
        return Err(CliError::config(
            &format!("observables[{i}]"),
            format!("'{}' is not gauge invariant", cfg.observables[i]),
        ));
    }
    let c = cfg.couplings()?;
    let start = initial_config(cfg, &lat, cfg.n, cfg.seed)?;
    let fixed_start = start.ugauge_fix()?;
    let probe = eval_all(&specs);
    let jobs = vec![(0u64, Ensemble::Full, start), (1u64, Ensemble::GaugeFixed, fixed_start)];
    let series: Vec<Series> = par_map(jobs, threads, |(k, ens, s)| sample(cfg, &c, &s, sub_seed(cfg.seed, k), ens, &probe))
        .into_iter()
        .collect::<CliResult<_>>()?;
    let mut rows = Vec::new();
    for (j, name) in cfg.observables.iter().enumerate() {
        let full = estimate(&series[0].column(j))?;
        let fixed = estimate(&series[1].column(j))?;
        let z = z_score(full.mean, full.error, fixed.mean, fixed.error);
        rows.push(GaugefixRow { observable: name.clone(), full, fixed, z });
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct BoundRow {
    pub beta: f64,
    pub kappa: f64,
    pub report: BoundReport,
    /// Unitary-gauge constant, group target only.
    pub k_ugauge: Option<f64>,
}

/// Curvature constants on the `beta_grid x kappa_grid` grid.
pub fn bounds_grid(cfg: &ExperimentConfig) -> CliResult<(Vec<BoundRow>, Vec<(f64, f64)>)> {
    let betas = crate::config::parse_grid("beta_grid", &cfg.beta_grid)?;
    let kappas = crate::config::parse_grid("kappa_grid", &cfg.kappa_grid)?;
    let target = cfg.target()?;
    let region = bounds::admissible_region(target, cfg.n, cfg.d, &betas, &kappas, cfg.m)?;
    let rows = region
        .points
        .iter()
        .map(|p| {
            Ok(BoundRow {
                beta: p.beta,
                kappa: p.kappa,
                report: k_for(target, cfg.n, p.beta, p.kappa, cfg.m, cfg.d)?,
                k_ugauge: (target == Target::Group).then(|| k_ugauge(cfg.n, p.beta, p.kappa, cfg.d)),
            })
        })
        .collect::<CliResult<_>>()?;
    Ok((rows, region.boundary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_keeps_order() {
        let out = par_map((0..37).collect(), 4, |i: usize| i * i);
        assert_eq!(out, (0..37).map(|i| i * i).collect::<Vec<_>>());
        assert_eq!(par_map(Vec::<usize>::new(), 3, |i| i), Vec::<usize>::new());
    }

    #[test]
    fn sub_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..100).map(|k| sub_seed(7, k)).collect();
        assert_eq!(s.len(), 100);
    }

    #[test]
    fn extrapolation_of_two_points() {
        let (v, e) = extrapolate_zero(&[(2e-3, 1.2, 0.1), (1e-3, 1.1, 0.1)]);
        assert!((v - 1.0).abs() < 1e-12);
        assert!((e - (4.0f64 * 0.01 + 0.01).sqrt()).abs() < 1e-12);
        let (v, e) = extrapolate_zero(&[(2e-3, 3.0, 0.0), (1e-3, 3.0, 0.0)]);
        assert!((v - 3.0).abs() < 1e-12);
        assert_eq!(e, 0.0);
        // exact line through three points
        let pts: Vec<_> = [1e-3, 2e-3, 4e-3].iter().map(|&x| (x, 0.5 + 7.0 * x, 0.01)).collect();
        assert!((extrapolate_zero(&pts).0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn z_scores() {
        assert_eq!(z_score(1.0, 0.0, 1.0, 0.0), 0.0);
        assert_eq!(z_score(1.0, 0.0, 2.0, 0.0), f64::INFINITY);
        assert!((z_score(1.0, 0.3, 0.0, 0.4) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_massgap_recovers_rate() {
        let cfg = ExperimentConfig { synthetic_rate: Some(0.7), synthetic_noise: 0.05, ..Default::default() };
        let r = massgap(&cfg).unwrap();
        let fit = r.fit.unwrap();
        assert!((fit.rate - 0.7).abs() <= 3.0 * fit.rate_error, "{fit:?}");
        let noisy = ExperimentConfig { synthetic_rate: Some(0.7), synthetic_noise: 10.0, ..Default::default() };
        assert!(massgap(&noisy).unwrap().fit.is_err());
    }

    #[test]
    fn gaugefix_rejects_link_trace() {
        let cfg = ExperimentConfig {
            target: "group".into(),
            observables: vec!["link_trace:0".into()],
            ..Default::default()
        };
        let e = gaugefix_check(&cfg, 1).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn constant_observable_is_exact_across_gauges() {
        let cfg = ExperimentConfig {
            target: "group".into(),
            observables: vec!["constant:1.5".into()],
            sweeps: 120,
            burn_in: 0,
            ..Default::default()
        };
        let rows = gaugefix_check(&cfg, 1).unwrap();
        assert_eq!(rows[0].full.mean, rows[0].fixed.mean);
        assert_eq!(rows[0].z, 0.0);
    }
}
