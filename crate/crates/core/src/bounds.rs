//! Closed-form Bakry-Emery curvature constants and the variance bound for
//! Wilson loops.
//!
//! For the sphere and group Higgs targets the constant is the best
//! `sup_{delta > 0} min(f(delta), g(delta))` of two branches, `f`
//! decreasing and `g` increasing in `delta`, so the optimum sits at their
//! crossing, the positive root of a quadratic.

use crate::error::{Error, Result};
use crate::model::Target;

/// A curvature constant with the inputs that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: &'static str,
    pub value: f64,
    pub positive: bool,
    /// Optimal `delta`, when the constant involves one.
    pub delta: Option<f64>,
    pub inputs: Vec<(&'static str, f64)>,
    pub warning: Option<String>,
}

impl BoundReport {
    fn new(name: &'static str, value: f64, delta: Option<f64>, inputs: Vec<(&'static str, f64)>) -> Self {
        Self { name, value, positive: value > 0.0, delta, inputs, warning: None }
    }
}

/// Curvature of SO(N) per unit of the Hilbert-Schmidt metric.
fn group_ricci(n: usize) -> f64 {
    (n as f64 + 2.0) / 4.0 - 1.0
}

/// Euclidean-Higgs constant
/// `(N+2)/4 - 1 - kappa N/m - 2 kappa^2 N/m^2 - 8(d-1) N |beta|`.
pub fn k_euclidean(n: usize, beta: f64, kappa: f64, m: f64, d: usize) -> Result<f64> {
    if !(m > 0.0) {
        return Err(Error::InvalidCouplings(format!("m must be positive, got {m}")));
    }
    let nf = n as f64;
    Ok(group_ricci(n) - kappa * nf / m - 2.0 * kappa * kappa * nf / (m * m) - 8.0 * (d as f64 - 1.0) * nf * beta.abs())
}

/// `sup_delta min(a - 2k(1 + 2 delta), b - 4kd(2 + 1/delta))` with `k > 0`.
fn sup_min(a: f64, b: f64, k: f64, d: f64) -> (f64, f64) {
    let lin = b - 8.0 * k * d - a + 2.0 * k;
    let delta = (-lin + (lin * lin + 64.0 * k * k * d).sqrt()) / (8.0 * k);
    (a - 2.0 * k * (1.0 + 2.0 * delta), delta)
}

fn two_branch(name: &'static str, a: f64, b: f64, n: usize, beta: f64, kappa: f64, d: usize) -> BoundReport {
    let k = kappa.abs() * n as f64;
    let inputs = vec![("N", n as f64), ("beta", beta), ("kappa", kappa), ("d", d as f64)];
    if k == 0.0 {
        return BoundReport::new(name, a.min(b), None, inputs);
    }
    let (value, delta) = sup_min(a, b, k, d as f64);
    BoundReport::new(name, value, Some(delta), inputs)
}

/// Sphere-Higgs constant with branches
/// `(N+2)/4 - 1 - 8(d-1)|beta|N - 2(2 delta + 1)|kappa|N` and
/// `(N-2) - 4|kappa|N d (2 + 1/delta)`.
pub fn k_sphere(n: usize, beta: f64, kappa: f64, d: usize) -> BoundReport {
    let nf = n as f64;
    let a = group_ricci(n) - 8.0 * (d as f64 - 1.0) * beta.abs() * nf;
    let mut r = two_branch("K_sphere", a, nf - 2.0, n, beta, kappa, d);
    if n == 2 {
        r.warning = Some("the circle has zero curvature, so the sphere branch is never positive for N = 2".into());
    }
    r
}

/// Group-Higgs constant with branches
/// `(N+2)/4 - 1 - 8(d-1)|beta|N - 2|kappa|N(1 + 2 delta)` and
/// `(N+2)/4 - 1 - 4|kappa|N d (2 + 1/delta)`.
pub fn k_group(n: usize, beta: f64, kappa: f64, d: usize) -> BoundReport {
    let nf = n as f64;
    let c0 = group_ricci(n);
    let a = c0 - 8.0 * (d as f64 - 1.0) * beta.abs() * nf;
    two_branch("K_group", a, c0, n, beta, kappa, d)
}

/// Unitary-gauge constant `(N+2)/4 - 1 - N(8(d-1)|beta| + 2|kappa|)`.
pub fn k_ugauge(n: usize, beta: f64, kappa: f64, d: usize) -> f64 {
    let nf = n as f64;
    group_ricci(n) - nf * (8.0 * (d as f64 - 1.0) * beta.abs() + 2.0 * kappa.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    /// SO(N) with the Hilbert-Schmidt metric.
    Group,
    /// The unit sphere in R^N.
    Sphere,
}

/// Ricci lower bound: `(N+2)/4 - 1` for SO(N), `N - 2` for the sphere.
pub fn ricci_constant(space: Space, n: usize) -> Result<f64> {
    match space {
        Space::Group if n >= 2 => Ok(group_ricci(n)),
        Space::Sphere if n >= 3 => Ok(n as f64 - 2.0),
        _ => Err(Error::InvalidDimension(n)),
    }
}

/// `n(n-3)/(K N)`, the bound on `var(W_l / N)` for a loop of length `n`.
pub fn variance_bound(loop_len: usize, k: f64, n: usize) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::BoundUnavailable(format!("curvature constant {k} is not positive")));
    }
    if loop_len == 0 {
        return Err(Error::InvalidRegion("loop length must be at least 1".into()));
    }
    let l = loop_len as f64;
    Ok(l * (l - 3.0) / (k * n as f64))
}

/// Curvature constant for `target` at one coupling point; `m` only matters
/// for the Euclidean target.
pub fn k_for(target: Target, n: usize, beta: f64, kappa: f64, m: f64, d: usize) -> Result<BoundReport> {
    Ok(match target {
        Target::Euclidean => BoundReport::new(
            "K_euclidean",
            k_euclidean(n, beta, kappa, m, d)?,
            None,
            vec![("N", n as f64), ("beta", beta), ("kappa", kappa), ("m", m), ("d", d as f64)],
        ),
        Target::Sphere => k_sphere(n, beta, kappa, d),
        Target::Group => k_group(n, beta, kappa, d),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionPoint {
    pub beta: f64,
    pub kappa: f64,
    pub k: f64,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap {
    /// Row-major over `kappas`, then `betas`.
    pub points: Vec<RegionPoint>,
    /// Linear interpolation of `K = 0` between neighbouring grid points
    /// along the beta axis, as `(beta, kappa)`.
    pub boundary: Vec<(f64, f64)>,
}

/// Evaluates the constant on the grid `betas x kappas`.
pub fn admissible_region(
    target: Target,
    n: usize,
    d: usize,
    betas: &[f64],
    kappas: &[f64],
    m: f64,
) -> Result<RegionMap> {
    let mut points = Vec::with_capacity(betas.len() * kappas.len());
    let mut boundary = Vec::new();
    for &kappa in kappas {
        let row: Vec<RegionPoint> = betas
            .iter()
            .map(|&beta| {
                let r = k_for(target, n, beta, kappa, m, d)?;
                Ok(RegionPoint { beta, kappa, k: r.value, delta: r.delta })
            })
            .collect::<Result<_>>()?;
        for w in row.windows(2) {
            if (w[0].k > 0.0) != (w[1].k > 0.0) {
                let t = w[0].k / (w[0].k - w[1].k);
                boundary.push((w[0].beta + t * (w[1].beta - w[0].beta), kappa));
            }
        }
        points.extend(row);
    }
    Ok(RegionMap { points, boundary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense log grid over `[1e-6, 1e6]` followed by golden-section
    /// refinement of `min(f, g)`.
    fn grid_sup(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> (f64, f64) {
        let h = |x: f64| f(x).min(g(x));
        let k = 10_000;
        let xs: Vec<f64> = (0..k).map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / (k - 1) as f64)).collect();
        let best = (0..k).max_by(|&a, &b| h(xs[a]).total_cmp(&h(xs[b]))).unwrap();
        let (mut lo, mut hi) = (xs[best.saturating_sub(1)], xs[(best + 1).min(k - 1)]);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - phi * (hi - lo);
            let b = lo + phi * (hi - lo);
            if h(a) < h(b) {
                lo = a;
            } else {
                hi = b;
            }
        }
        let x = 0.5 * (lo + hi);
        (h(x), x)
    }

    #[test]
    fn hand_values() {
        assert!((k_euclidean(10, 0.0, 0.0, 1.0, 2).unwrap() - 2.0).abs() < 1e-12);
        assert!((k_euclidean(10, 0.1, 0.0, 1.0, 2).unwrap() + 6.0).abs() < 1e-12);
        assert!(k_euclidean(10, 0.0, 0.0, 0.0, 2).is_err());
        let s = k_sphere(10, 0.0, 0.0, 2);
        assert!((s.value - 2.0).abs() < 1e-12 && s.delta.is_none());
        assert!((k_group(10, 0.0, 0.0, 2).value - 2.0).abs() < 1e-12);
        assert!((k_ugauge(10, 0.0, 0.0, 2) - 2.0).abs() < 1e-12);
        assert!((k_ugauge(10, 0.01, 0.05, 2) - 0.2).abs() < 1e-12);
        assert_eq!(ricci_constant(Space::Group, 10).unwrap(), 2.0);
        assert_eq!(ricci_constant(Space::Sphere, 10).unwrap(), 8.0);
        assert_eq!(ricci_constant(Space::Group, 2).unwrap(), 0.0);
        assert!(ricci_constant(Space::Sphere, 2).is_err());
        assert!((variance_bound(4, 2.0, 100).unwrap() - 0.02).abs() < 1e-15);
        assert_eq!(variance_bound(3, 0.7, 9).unwrap(), 0.0);
        assert_eq!(variance_bound(4, 2.0, 200).unwrap() * 2.0, variance_bound(4, 2.0, 100).unwrap());
        assert!(matches!(variance_bound(4, 0.0, 10), Err(Error::BoundUnavailable(_))));
        assert!(k_sphere(2, 0.0, 0.1, 2).warning.is_some());
    }

    #[test]
    fn euclidean_matches_smallness_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let n = rng.random_range(2..40);
            let d = rng.random_range(2..5);
            let beta = rng.random_range(-0.02..0.02);
            let kappa = rng.random_range(0.0..0.3);
            let m = rng.random_range(0.5..3.0);
            let k = k_euclidean(n, beta, kappa, m, d).unwrap();
            let lhs = 8.0 * (d as f64 - 1.0) * beta.abs() + kappa / m + 2.0 * kappa * kappa / (m * m);
            let rhs = 0.25 - 0.5 / n as f64;
            assert_eq!(k > 0.0, lhs < rhs);
        }
    }

    #[test]
    fn delta_optimum_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let n = rng.random_range(3..30);
            let d = rng.random_range(2..5);
            let beta: f64 = rng.random_range(-0.05..0.05);
            let kappa: f64 = rng.random_range(-0.1..0.1);
            let (nf, df) = (n as f64, d as f64);
            let k = kappa.abs() * nf;
            let a = (nf + 2.0) / 4.0 - 1.0 - 8.0 * (df - 1.0) * beta.abs() * nf;
            let s = k_sphere(n, beta, kappa, d);
            let (gv, gx) = grid_sup(|x| a - 2.0 * (2.0 * x + 1.0) * k, |x| nf - 2.0 - 4.0 * k * df * (2.0 + 1.0 / x));
            assert!((s.value - gv).abs() < 1e-9, "sphere {} vs {}", s.value, gv);
            assert!((s.delta.unwrap() - gx).abs() < 1e-6 * gx.max(1.0));
            let g = k_group(n, beta, kappa, d);
            let c0 = (nf + 2.0) / 4.0 - 1.0;
            let (gv, _) = grid_sup(|x| a - 2.0 * k * (1.0 + 2.0 * x), |x| c0 - 4.0 * k * df * (2.0 + 1.0 / x));
            assert!((g.value - gv).abs() < 1e-9, "group {} vs {}", g.value, gv);
        }
    }

    #[test]
    fn monotonicity_and_orderings() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = rng.random_range(3..20);
            let d = rng.random_range(2..4);
            let beta = rng.random_range(0.0..0.05);
            let kappa = rng.random_range(0.001..0.1);
            let s = k_sphere(n, beta, kappa, d).value;
            assert!(k_sphere(n, 1.5 * beta, kappa, d).value <= s + 1e-12);
            assert!(k_sphere(n, beta, 1.5 * kappa, d).value <= s + 1e-12);
            assert!(k_sphere(n, beta, -kappa, d).value == s);
            let g = k_group(n, beta, kappa, d).value;
            assert!(g <= k_group(n, beta, 0.0, d).value);
            assert!(k_ugauge(n, beta, kappa, d) >= g - 1e-12);
        }
    }

    #[test]
    fn region_boundaries() {
        let (n, d) = (10, 2);
        let betas: Vec<f64> = (0..101).map(|i| i as f64 * 0.0005).collect();
        let map = admissible_region(Target::Euclidean, n, d, &betas, &[0.0], 1.0).unwrap();
        assert_eq!(map.boundary.len(), 1);
        let want = ((n as f64 + 2.0) / 4.0 - 1.0) / (8.0 * (d as f64 - 1.0) * n as f64);
        assert!((map.boundary[0].0 - want).abs() < 1e-12);
        for t in [Target::Euclidean, Target::Sphere, Target::Group] {
            let m = admissible_region(t, 3, 2, &[0.0], &[0.0], 1.0).unwrap();
            assert!(m.points[0].k > 0.0);
        }
        // Larger d shrinks the region.
        let count = |d| {
            admissible_region(Target::Group, 10, d, &betas, &[0.0, 0.01, 0.02], 1.0)
                .unwrap()
                .points
                .iter()
                .filter(|p| p.k > 0.0)
                .count()
        };
        assert!(count(3) < count(2));
    }
}
