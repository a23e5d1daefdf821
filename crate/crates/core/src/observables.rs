//! Gauge-invariant observables and the statistics used to measure them.

use std::fmt;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, LatticePath, Site};
use crate::model::{FieldConfiguration, Target};

/// Trace of the ordered edge product around a closed path.
pub fn wilson_loop(cfg: &FieldConfiguration, path: &LatticePath) -> Result<f64> {
    if path.is_empty() || !path.is_closed(cfg.lattice()) {
        return Err(Error::NotALoop);
    }
    Ok(cfg.path_product(path.edges()).trace())
}

/// `Tr(Phi_u^t Q_{e1} ... Q_{en} Phi_v)` along an open or closed path.
pub fn wilson_line(cfg: &FieldConfiguration, path: &LatticePath) -> Result<f64> {
    let lat = cfg.lattice();
    let edges = path.edges();
    for (k, w) in edges.windows(2).enumerate() {
        if lat.end(&w[0]) != lat.start(&w[1]) {
            return Err(Error::DisconnectedPath(k + 1));
        }
    }
    let (u, v) = match (edges.first(), edges.last()) {
        (Some(a), Some(b)) => (lat.start(a), lat.end(b)),
        _ => return Err(Error::InvalidRegion("empty path".into())),
    };
    let prod = cfg.path_product(edges);
    Ok(cfg.higgs(u).dot(&(prod * cfg.higgs(v))))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObservableKind {
    WilsonLoop(LatticePath),
    WilsonLine(LatticePath),
    /// `Tr Q_p` of the plaquette at `site` in the `(mu, nu)` plane.
    Plaquette { site: Site, mu: usize, nu: usize },
    /// `sum_p Tr Q_p / |P+|`.
    PlaquetteMean,
    /// `sum_e Tr(Phi_x^t Q_e Phi_y) / |E+|`.
    HoppingMean,
    /// `|Phi_x|^2`.
    HiggsSecondMoment(Site),
    /// Average of `|Phi_x|^2` over sites.
    HiggsSecondMomentMean,
    /// `Tr Q_e` of positive edge `i`; not gauge invariant.
    LinkTrace(usize),
    /// A configuration-independent value.
    Constant(f64),
}

impl ObservableKind {
    pub fn is_gauge_invariant(&self) -> bool {
        !matches!(self, ObservableKind::LinkTrace(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSpec {
    pub kind: ObservableKind,
    /// Divide by `N`.
    pub normalize: bool,
}

impl ObservableSpec {
    /// Checks the path invariants of loop and line observables.
    pub fn new(lat: &Lattice, kind: ObservableKind, normalize: bool) -> Result<Self> {
        match &kind {
            ObservableKind::WilsonLoop(p) => {
                if p.is_empty() || !p.is_closed(lat) {
                    return Err(Error::NotALoop);
                }
            }
            ObservableKind::WilsonLine(p) => {
                LatticePath::new(lat, p.edges().to_vec())?;
                if p.is_empty() {
                    return Err(Error::InvalidRegion("empty path".into()));
                }
            }
            ObservableKind::Plaquette { site, mu, nu } => {
                if *site >= lat.n_sites() || mu == nu || *mu >= lat.dim() || *nu >= lat.dim() {
                    return Err(Error::InvalidRegion(format!("no plaquette at {site} ({mu}, {nu})")));
                }
            }
            ObservableKind::HiggsSecondMoment(x) => {
                if *x >= lat.n_sites() {
                    return Err(Error::InvalidRegion(format!("site {x} out of range")));
                }
            }
            ObservableKind::LinkTrace(i) => {
                if *i >= lat.n_edges() {
                    return Err(Error::InvalidRegion(format!("edge {i} out of range")));
                }
            }
            _ => {}
        }
        Ok(Self { kind, normalize })
    }

    pub fn evaluate(&self, cfg: &FieldConfiguration) -> Result<f64> {
        let lat = cfg.lattice();
        let v = match &self.kind {
            ObservableKind::WilsonLoop(p) => wilson_loop(cfg, p)?,
            ObservableKind::WilsonLine(p) => wilson_line(cfg, p)?,
            ObservableKind::Plaquette { site, mu, nu } => {
                cfg.path_product(&lat.plaquette_at(*site, *mu, *nu)).trace()
            }
            ObservableKind::PlaquetteMean => cfg.plaquette_trace_sum() / lat.n_plaquettes() as f64,
            ObservableKind::HoppingMean => cfg.hopping_sum() / lat.n_edges() as f64,
            ObservableKind::HiggsSecondMoment(x) => cfg.higgs(*x).norm_squared(),
            ObservableKind::HiggsSecondMomentMean => {
                cfg.higgs_values().iter().map(|p| p.norm_squared()).sum::<f64>() / lat.n_sites() as f64
            }
            ObservableKind::LinkTrace(i) => cfg.link(*i).trace(),
            ObservableKind::Constant(c) => *c,
        };
        Ok(if self.normalize { v / cfg.n() as f64 } else { v })
    }

    /// Sites the observable depends on, for distance computations.
    pub fn support(&self, lat: &Lattice) -> Vec<Site> {
        match &self.kind {
            ObservableKind::WilsonLoop(p) | ObservableKind::WilsonLine(p) => lat.edge_vertices(p.edges()),
            ObservableKind::Plaquette { site, mu, nu } => lat.edge_vertices(&lat.plaquette_at(*site, *mu, *nu)),
            ObservableKind::HiggsSecondMoment(x) => vec![*x],
            ObservableKind::LinkTrace(i) => lat.edge_vertices(&[lat.positive_edge(*i)]),
            ObservableKind::Constant(_) => Vec::new(),
            _ => (0..lat.n_sites()).collect(),
        }
    }
}

/// Point estimate with its error analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorResult {
    pub mean: f64,
    /// Larger of the autocorrelation-based and batch-means errors.
    pub error: f64,
    pub tau_int: f64,
    pub samples: usize,
    pub error_tau: f64,
    pub error_batch: f64,
}

impl fmt::Display for EstimatorResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6e} +- {:.2e} (tau_int {:.2}, n {})", self.mean, self.error, self.tau_int, self.samples)
    }
}

/// Minimum series length accepted by [`estimate`].
pub const MIN_SAMPLES: usize = 100;
/// Madras-Sokal window constant.
const WINDOW_C: f64 = 6.0;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Integrated autocorrelation time with the self-consistent window
/// `W >= c tau(W)`, `c = 6`. Returns 0.5 for series with zero variance.
pub fn integrated_autocorrelation_time(xs: &[f64]) -> f64 {
    let n = xs.len();
    let m = mean(xs);
    let d: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let c0 = d.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if c0 <= 0.0 || !c0.is_finite() {
        return 0.5;
    }
    let mut tau = 0.5;
    for w in 1..n / 2 {
        let ct = d[..n - w].iter().zip(&d[w..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        tau += ct / c0;
        if w as f64 >= WINDOW_C * tau {
            break;
        }
    }
    tau.max(0.5)
}

/// About `sqrt(n)` batches, at least 8 and at most 1024.
fn batch_count(n: usize) -> usize {
    ((n as f64).sqrt() as usize).clamp(8, 1024).min(n / 2)
}

/// Means of `b` contiguous batches of equal size; trailing samples that do
/// not fill a batch are dropped.
fn batch_means(xs: &[f64], b: usize) -> Vec<f64> {
    let size = xs.len() / b;
    (0..b).map(|k| mean(&xs[k * size..(k + 1) * size])).collect()
}

/// Standard error of the mean by non-overlapping batches.
pub fn batch_error(xs: &[f64]) -> f64 {
    let b = batch_count(xs.len());
    let means = batch_means(xs, b);
    let m = mean(&means);
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

/// Mean of a correlated series with the larger of two error estimates.
pub fn estimate(xs: &[f64]) -> Result<EstimatorResult> {
    if xs.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples { got: xs.len(), need: MIN_SAMPLES });
    }
    let n = xs.len();
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    let tau = integrated_autocorrelation_time(xs);
    let error_tau = (2.0 * tau * var / n as f64).sqrt();
    let error_batch = batch_error(xs);
    Ok(EstimatorResult {
        mean: m,
        error: error_tau.max(error_batch),
        tau_int: tau,
        samples: n,
        error_tau,
        error_batch,
    })
}

/// Covariance `E[FG] - E[F] E[G]` with a jackknife error over batches.
pub fn covariance(f: &[f64], g: &[f64]) -> Result<EstimatorResult> {
    if f.len() != g.len() {
        return Err(Error::LengthMismatch(f.len(), g.len()));
    }
    if f.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples { got: f.len(), need: MIN_SAMPLES });
    }
    let n = f.len();
    let (mf, mg) = (mean(f), mean(g));
    let prod: Vec<f64> = f.iter().zip(g).map(|(a, b)| (a - mf) * (b - mg)).collect();
    let cov = mean(&prod);
    let b = batch_count(n);
    let size = n / b;
    let used = size * b;
    let sums = |xs: &[f64]| -> (Vec<f64>, f64) {
        let per: Vec<f64> = (0..b).map(|k| xs[k * size..(k + 1) * size].iter().sum()).collect();
        let total = per.iter().sum();
        (per, total)
    };
    let fg: Vec<f64> = f.iter().zip(g).map(|(a, b)| a * b).collect();
    let (sf, tf) = sums(&f[..used]);
    let (sg, tg) = sums(&g[..used]);
    let (sfg, tfg) = sums(&fg[..used]);
    let m = (used - size) as f64;
    let jk: Vec<f64> = (0..b)
        .map(|k| {
            let ef = (tf - sf[k]) / m;
            let eg = (tg - sg[k]) / m;
            (tfg - sfg[k]) / m - ef * eg
        })
        .collect();
    let jm = mean(&jk);
    let error_batch = ((b - 1) as f64 / b as f64 * jk.iter().map(|x| (x - jm).powi(2)).sum::<f64>()).sqrt();
    let tau = integrated_autocorrelation_time(&prod);
    let var_prod = prod.iter().map(|x| (x - cov).powi(2)).sum::<f64>() / (n - 1) as f64;
    let error_tau = (2.0 * tau * var_prod / n as f64).sqrt();
    Ok(EstimatorResult {
        mean: cov,
        error: error_batch.max(error_tau),
        tau_int: tau,
        samples: n,
        error_tau,
        error_batch,
    })
}

/// Connected correlator `E[a] - E[b] E[c]` from per-sample series, where
/// typically `a_t` is a translation average of `F_x G_{x+r}` and `b_t`, `c_t`
/// translation averages of `F` and `G`. Jackknife error over batches,
/// cross-checked against the autocorrelation of `a`.
pub fn connected_correlator(a: &[f64], b: &[f64], c: &[f64]) -> Result<EstimatorResult> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() != c.len() {
        return Err(Error::LengthMismatch(a.len(), c.len()));
    }
    if a.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples { got: a.len(), need: MIN_SAMPLES });
    }
    let n = a.len();
    let value = mean(a) - mean(b) * mean(c);
    let nb = batch_count(n);
    let size = n / nb;
    let used = size * nb;
    let sums = |xs: &[f64]| -> (Vec<f64>, f64) {
        let per: Vec<f64> = (0..nb).map(|k| xs[k * size..(k + 1) * size].iter().sum()).collect();
        let total = per.iter().sum();
        (per, total)
    };
    let (sa, ta) = sums(&a[..used]);
    let (sb, tb) = sums(&b[..used]);
    let (sc, tc) = sums(&c[..used]);
    let m = (used - size) as f64;
    let jk: Vec<f64> = (0..nb)
        .map(|k| (ta - sa[k]) / m - (tb - sb[k]) / m * ((tc - sc[k]) / m))
        .collect();
    let jm = mean(&jk);
    let error_batch = ((nb - 1) as f64 / nb as f64 * jk.iter().map(|x| (x - jm).powi(2)).sum::<f64>()).sqrt();
    let tau = integrated_autocorrelation_time(a);
    let (mb, mc) = (mean(b), mean(c));
    // Linearised estimator a - mc b - mb c, whose variance drives the error.
    let lin: Vec<f64> = (0..n).map(|t| a[t] - mc * b[t] - mb * c[t]).collect();
    let ml = mean(&lin);
    let var = lin.iter().map(|x| (x - ml).powi(2)).sum::<f64>() / (n - 1) as f64;
    let tau_lin = integrated_autocorrelation_time(&lin);
    let error_tau = (2.0 * tau_lin * var / n as f64).sqrt();
    Ok(EstimatorResult {
        mean: value,
        error: error_batch.max(error_tau),
        tau_int: tau.max(tau_lin),
        samples: n,
        error_tau,
        error_batch,
    })
}

/// Exponential fit `|C(r)| = A exp(-c r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassGapFit {
    pub rate: f64,
    pub amplitude: f64,
    pub rate_error: f64,
    /// Indices of the input points used by the fit.
    pub used: Vec<usize>,
    /// Noise floor: points with `|C| <= cutoff_sigmas * err` were dropped.
    pub cutoff_sigmas: f64,
    pub chi2: f64,
}

impl MassGapFit {
    /// 95% confidence interval of the rate.
    pub fn ci95(&self) -> (f64, f64) {
        (self.rate - 1.96 * self.rate_error, self.rate + 1.96 * self.rate_error)
    }
}

/// Points with `|C| <= 2 err` are treated as noise.
pub const NOISE_CUTOFF_SIGMAS: f64 = 2.0;

/// Weighted least squares of `ln |C|` against `r` with `sigma = err / |C|`.
/// Input triples are `(r, C, err)`; signs of `C` are ignored. When every
/// error is zero the fit is unweighted and the error comes from residuals.
pub fn mass_gap_fit(points: &[(f64, f64, f64)]) -> Result<MassGapFit> {
    let all_exact = points.iter().all(|p| p.2 == 0.0);
    let used: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, (r, c, e))| {
            r.is_finite() && c.is_finite() && *c != 0.0 && (all_exact || (*e > 0.0 && c.abs() > NOISE_CUTOFF_SIGMAS * e))
        })
        .map(|(i, _)| i)
        .collect();
    if used.len() < 3 {
        return Err(Error::InsufficientSignal(format!(
            "{} of {} points above the {}-sigma noise floor; need 3",
            used.len(),
            points.len(),
            NOISE_CUTOFF_SIGMAS
        )));
    }
    let rows: Vec<(f64, f64, f64)> = used
        .iter()
        .map(|&i| {
            let (r, c, e) = points[i];
            let w = if all_exact { 1.0 } else { (c.abs() / e).powi(2) };
            (r, c.abs().ln(), w)
        })
        .collect();
    let sw: f64 = rows.iter().map(|r| r.2).sum();
    let sx: f64 = rows.iter().map(|r| r.2 * r.0).sum();
    let sy: f64 = rows.iter().map(|r| r.2 * r.1).sum();
    let sxx: f64 = rows.iter().map(|r| r.2 * r.0 * r.0).sum();
    let sxy: f64 = rows.iter().map(|r| r.2 * r.0 * r.1).sum();
    let delta = sw * sxx - sx * sx;
    if !(delta > 0.0) {
        return Err(Error::InsufficientSignal("distances are degenerate".into()));
    }
    let slope = (sw * sxy - sx * sy) / delta;
    let intercept = (sxx * sy - sx * sxy) / delta;
    let chi2: f64 = rows.iter().map(|r| r.2 * (r.1 - intercept - slope * r.0).powi(2)).sum();
    let dof = (rows.len() - 2) as f64;
    let slope_var = if all_exact {
        chi2 / dof * sw / delta
    } else {
        // Inflate by the reduced chi-square when the scatter exceeds the
        // quoted errors.
        sw / delta * (chi2 / dof).max(1.0)
    };
    Ok(MassGapFit {
        rate: -slope,
        amplitude: intercept.exp(),
        rate_error: slope_var.max(0.0).sqrt(),
        used,
        cutoff_sigmas: NOISE_CUTOFF_SIGMAS,
        chi2,
    })
}

/// Estimate of `E|Phi_x|^2` with the a-priori bound `1/(2m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HiggsMomentReport {
    pub estimate: EstimatorResult,
    pub bound: f64,
    /// `(estimate - bound) / error`; negative when below the bound.
    pub excess_sigmas: f64,
}

pub fn higgs_second_moment(series: &[f64], target: Target, m: f64) -> Result<HiggsMomentReport> {
    if target != Target::Euclidean {
        return Err(Error::TargetMismatch { expected: Target::Euclidean.to_string(), found: target.to_string() });
    }
    if !(m > 0.0) {
        return Err(Error::InvalidCouplings(format!("m must be positive, got {m}")));
    }
    let estimate = estimate(series)?;
    let bound = 1.0 / (2.0 * m);
    let excess_sigmas = if estimate.error > 0.0 {
        (estimate.mean - bound) / estimate.error
    } else if estimate.mean > bound {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    Ok(HiggsMomentReport { estimate, bound, excess_sigmas })
}

/// One row of a large-N factorization table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorizationRow {
    pub n: usize,
    /// `var(W_1 / N)`.
    pub variance: EstimatorResult,
    /// `n(n-3)/(K N)` when a positive `K` is supplied.
    pub bound: Option<f64>,
    /// `|E[W_1 W_2]/N^2 - E[W_1]E[W_2]/N^2|` as the absolute covariance.
    pub defect: EstimatorResult,
}

/// Builds a row from the sampled Wilson loops `w1`, `w2` (unnormalised) of
/// length `loop_len` at matrix size `n`.
pub fn factorization_row(n: usize, loop_len: usize, k: Option<f64>, w1: &[f64], w2: &[f64]) -> Result<FactorizationRow> {
    let nf = n as f64;
    let a: Vec<f64> = w1.iter().map(|w| w / nf).collect();
    let b: Vec<f64> = w2.iter().map(|w| w / nf).collect();
    let variance = covariance(&a, &a)?;
    let mut defect = covariance(&a, &b)?;
    defect.mean = defect.mean.abs();
    let bound = match k {
        Some(k) => Some(crate::bounds::variance_bound(loop_len, k, n)?),
        None => None,
    };
    Ok(FactorizationRow { n, variance, bound, defect })
}

/// Rows sorted by `N`.
pub fn factorization_report(mut rows: Vec<FactorizationRow>) -> Vec<FactorizationRow> {
    rows.sort_by_key(|r| r.n);
    rows
}

/// True when each value is at most the previous one plus `z` combined
/// standard errors.
pub fn nonincreasing_within(values: &[(f64, f64)], z: f64) -> bool {
    values
        .windows(2)
        .all(|w| w[1].0 <= w[0].0 + z * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt())
}
