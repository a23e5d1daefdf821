//! Yang-Mills-Higgs action on SO(N) link fields with a Higgs field in R^N,
//! on the unit sphere, or in SO(N).
//!
//! The action is `S = S1 - S2` with
//!
//! ```text
//! S1 = N beta sum_{p in P+} Tr Q_p
//! S2 = kappa N sum_{e in E+} |Q_e Phi_y - Phi_x|^2 + m N sum_z |Phi_z|^2   (R^N)
//! S2 = -2 kappa N sum_{e in E+} Tr(Phi_x^t Q_e Phi_y)                     (sphere, SO(N))
//! ```
//!
//! and the Gibbs density is `exp(+S)` against Haar/Lebesgue/uniform measure.
//! Vector-valued Higgs fields are stored as `N x 1` matrices and group-valued
//! ones as `N x N` matrices so that `Tr(Phi_x^t Q Phi_y)` reads the same for
//! every target.
//!
//! Gradients follow the right-invariant convention: the edge gradient is the
//! skew matrix `X_e` such that the tangent vector is `X_e Q_e`, and for group
//! Higgs fields the site gradient is `Y_x` with tangent `Y_x Phi_x`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{
    self, expm, gaussian_skew, gaussian_vector, haar_sample, skew_part, sphere_exp_raw,
    tangent_project, AlgebraElement, GroupElement, Mat, Vector,
};
use crate::lattice::{DirectedEdge, Lattice, Plaquette, Site};

/// Higgs target space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Euclidean,
    Sphere,
    Group,
}

impl Target {
    pub fn tag(self) -> u8 {
        match self {
            Target::Euclidean => 0,
            Target::Sphere => 1,
            Target::Group => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Target::Euclidean),
            1 => Ok(Target::Sphere),
            2 => Ok(Target::Group),
            _ => Err(Error::Snapshot(format!("unknown target tag {tag}"))),
        }
    }

    /// Number of columns of a Higgs value.
    pub fn higgs_cols(self, n: usize) -> usize {
        match self {
            Target::Group => n,
            _ => 1,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Euclidean => "euclidean",
            Target::Sphere => "sphere",
            Target::Group => "group",
        })
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "rn" | "vector" => Ok(Target::Euclidean),
            "sphere" => Ok(Target::Sphere),
            "group" | "so" => Ok(Target::Group),
            other => Err(Error::InvalidCouplings(format!("unknown target '{other}'"))),
        }
    }
}

/// Coupling constants `(N, beta, kappa, m)` and the Higgs target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Couplings {
    pub n: usize,
    pub beta: f64,
    pub kappa: f64,
    /// Mass; only used by the Euclidean target.
    pub m: f64,
    pub target: Target,
}

impl Couplings {
    pub fn new(n: usize, beta: f64, kappa: f64, m: f64, target: Target) -> Result<Self> {
        let c = Self { n, beta, kappa, m, target };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidDimension(self.n));
        }
        for (name, v) in [("beta", self.beta), ("kappa", self.kappa), ("m", self.m)] {
            if !v.is_finite() {
                return Err(Error::InvalidCouplings(format!("{name} is not finite")));
            }
        }
        Ok(())
    }

    /// Checks that `exp(S)` is normalisable. The Euclidean Higgs field needs
    /// `m > 0` and `kappa >= 0`.
    pub fn validate_gibbs(&self) -> Result<()> {
        self.validate()?;
        if self.target == Target::Euclidean && (self.m <= 0.0 || self.kappa < 0.0) {
            return Err(Error::InvalidCouplings(format!(
                "Euclidean target needs m > 0 and kappa >= 0 (m = {}, kappa = {})",
                self.m, self.kappa
            )));
        }
        Ok(())
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }
}

/// Link field `Q` on `E+` and Higgs field `Phi` on sites.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldConfiguration {
    lattice: Arc<Lattice>,
    target: Target,
    n: usize,
    links: Vec<Mat>,
    higgs: Vec<Mat>,
}

impl FieldConfiguration {
    /// `Q = I`; `Phi = 0`, `e_1` or `I` depending on the target.
    pub fn cold(lattice: Arc<Lattice>, n: usize, target: Target) -> Self {
        let links = vec![Mat::identity(n, n); lattice.n_edges()];
        let phi = match target {
            Target::Euclidean => Mat::zeros(n, 1),
            Target::Sphere => {
                let mut v = Mat::zeros(n, 1);
                v[(0, 0)] = 1.0;
                v
            }
            Target::Group => Mat::identity(n, n),
        };
        let higgs = vec![phi; lattice.n_sites()];
        Self { lattice, target, n, links, higgs }
    }

    /// Haar links and random Higgs values (standard Gaussian, uniform on the
    /// sphere, or Haar).
    pub fn random<R: Rng + ?Sized>(
        lattice: Arc<Lattice>,
        n: usize,
        target: Target,
        rng: &mut R,
    ) -> Self {
        let links = (0..lattice.n_edges())
            .map(|_| haar_sample(n, rng).into_matrix())
            .collect();
        let higgs = (0..lattice.n_sites())
            .map(|_| match target {
                Target::Euclidean => Mat::from_column_slice(n, 1, gaussian_vector(n, 1.0, rng).as_slice()),
                Target::Sphere => {
                    let p = geometry::sphere_uniform(n, rng);
                    Mat::from_column_slice(n, 1, p.coords().as_slice())
                }
                Target::Group => haar_sample(n, rng).into_matrix(),
            })
            .collect();
        Self { lattice, target, n, links, higgs }
    }

    /// Builds a configuration and checks every manifold constraint.
    pub fn from_parts(
        lattice: Arc<Lattice>,
        n: usize,
        target: Target,
        links: Vec<Mat>,
        higgs: Vec<Mat>,
    ) -> Result<Self> {
        let cfg = Self { lattice, target, n, links, higgs };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidDimension(self.n));
        }
        if self.links.len() != self.lattice.n_edges() || self.higgs.len() != self.lattice.n_sites() {
            return Err(Error::InvalidConfiguration("array lengths do not match the lattice".into()));
        }
        for q in &self.links {
            if q.shape() != (self.n, self.n) {
                return Err(Error::InvalidConfiguration("link has wrong shape".into()));
            }
            GroupElement::new(q.clone())?;
        }
        let cols = self.target.higgs_cols(self.n);
        for phi in &self.higgs {
            if phi.shape() != (self.n, cols) {
                return Err(Error::InvalidConfiguration("Higgs value has wrong shape".into()));
            }
            match self.target {
                Target::Euclidean => {
                    if phi.iter().any(|x| !x.is_finite()) {
                        return Err(Error::InvalidConfiguration("non-finite Higgs value".into()));
                    }
                }
                Target::Sphere => {
                    geometry::SpherePoint::new(phi.column(0).into_owned())?;
                }
                Target::Group => {
                    GroupElement::new(phi.clone())?;
                }
            }
        }
        Ok(())
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn lattice_arc(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored link of the positive edge with index `i`.
    pub fn link(&self, i: usize) -> &Mat {
        &self.links[i]
    }

    pub fn links(&self) -> &[Mat] {
        &self.links
    }

    pub fn higgs(&self, x: Site) -> &Mat {
        &self.higgs[x]
    }

    pub fn higgs_values(&self) -> &[Mat] {
        &self.higgs
    }

    pub(crate) fn links_mut(&mut self) -> &mut [Mat] {
        &mut self.links
    }

    pub(crate) fn higgs_mut(&mut self) -> &mut [Mat] {
        &mut self.higgs
    }

    pub(crate) fn with_parts(&self, links: Vec<Mat>, higgs: Vec<Mat>) -> Self {
        Self {
            lattice: Arc::clone(&self.lattice),
            target: self.target,
            n: self.n,
            links,
            higgs,
        }
    }

    /// Largest constraint violation: `|QQ^t - I|` over links and group
    /// sites, `||Phi|^2 - 1|` over sphere sites.
    pub fn constraint_defect(&self) -> f64 {
        let mut worst = self
            .links
            .iter()
            .map(geometry::orthogonality_defect)
            .fold(0.0, f64::max);
        for phi in &self.higgs {
            let d = match self.target {
                Target::Euclidean => 0.0,
                Target::Sphere => (phi.norm_squared() - 1.0).abs(),
                Target::Group => geometry::orthogonality_defect(phi),
            };
            worst = worst.max(d);
        }
        worst
    }

    fn check_target(&self, c: &Couplings) -> Result<()> {
        if c.target != self.target {
            return Err(Error::TargetMismatch {
                expected: c.target.to_string(),
                found: self.target.to_string(),
            });
        }
        if c.n != self.n {
            return Err(Error::DimensionMismatch { left: c.n, right: self.n });
        }
        Ok(())
    }

    /// `Q_e` for positive edges, `Q_{e^{-1}}^t` for reversed ones.
    pub fn edge_value(&self, e: &DirectedEdge) -> GroupElement {
        GroupElement::from_matrix_unchecked(self.edge_mat(e))
    }

    pub(crate) fn edge_mat(&self, e: &DirectedEdge) -> Mat {
        let (i, positive) = self.lattice.edge_index(e);
        if positive {
            self.links[i].clone()
        } else {
            self.links[i].transpose()
        }
    }

    /// Ordered product of edge values along a path.
    pub fn path_product(&self, edges: &[DirectedEdge]) -> Mat {
        let mut acc = Mat::identity(self.n, self.n);
        for e in edges {
            let (i, positive) = self.lattice.edge_index(e);
            acc = if positive {
                &acc * &self.links[i]
            } else {
                &acc * self.links[i].transpose()
            };
        }
        acc
    }

    /// `Q_p = Q_{e1} Q_{e2} Q_{e3} Q_{e4}`.
    pub fn plaquette_product(&self, p: &[DirectedEdge]) -> Result<GroupElement> {
        if p.len() != 4 || self.lattice.end(&p[3]) != self.lattice.start(&p[0]) {
            return Err(Error::NotALoop);
        }
        for w in p.windows(2) {
            if self.lattice.end(&w[0]) != self.lattice.start(&w[1]) {
                return Err(Error::NotALoop);
            }
        }
        Ok(GroupElement::from_matrix_unchecked(self.path_product(p)))
    }

    /// `sum_{p in P+} Tr Q_p`.
    pub fn plaquette_trace_sum(&self) -> f64 {
        self.lattice
            .plaquettes()
            .iter()
            .map(|p| self.path_product(p).trace())
            .sum()
    }

    /// `sum_{e in E+} Tr(Phi_x^t Q_e Phi_y)`.
    pub fn hopping_sum(&self) -> f64 {
        self.lattice
            .positive_edges()
            .enumerate()
            .map(|(i, e)| self.hopping_term(i, &e))
            .sum()
    }

    fn hopping_term(&self, i: usize, e: &DirectedEdge) -> f64 {
        let x = self.lattice.start(e);
        let y = self.lattice.end(e);
        self.higgs[x].dot(&(&self.links[i] * &self.higgs[y]))
    }

    /// Discrete covariant derivative `Q_e Phi_{v(e)} - Phi_{u(e)}`.
    pub fn covariant_derivative(&self, e: &DirectedEdge) -> Mat {
        let x = self.lattice.start(e);
        let y = self.lattice.end(e);
        self.edge_mat(e) * &self.higgs[y] - &self.higgs[x]
    }

    /// `(S1, S2)` with `S = S1 - S2`.
    pub fn action_parts(&self, c: &Couplings) -> Result<(f64, f64)> {
        self.check_target(c)?;
        let nf = c.nf();
        let s1 = nf * c.beta * self.plaquette_trace_sum();
        let s2 = match self.target {
            Target::Euclidean => {
                let hop: f64 = self
                    .lattice
                    .positive_edges()
                    .map(|e| self.covariant_derivative(&e).norm_squared())
                    .sum();
                let mass: f64 = self.higgs.iter().map(|p| p.norm_squared()).sum();
                c.kappa * nf * hop + c.m * nf * mass
            }
            Target::Sphere | Target::Group => -2.0 * c.kappa * nf * self.hopping_sum(),
        };
        Ok((s1, s2))
    }

    /// The Yang-Mills-Higgs action `S = S1 - S2`.
    pub fn action(&self, c: &Couplings) -> Result<f64> {
        let (s1, s2) = self.action_parts(c)?;
        Ok(s1 - s2)
    }

    /// Sum over the `2(d-1)` plaquettes through positive edge `i` of the
    /// products of the other three links, times `N beta`, plus the hopping
    /// source `2 kappa N Phi_y Phi_x^t`. The part of `S` that depends on
    /// `Q_e` is `Tr(Q_e F)`.
    pub(crate) fn edge_force(&self, c: &Couplings, i: usize) -> Mat {
        let lat = &*self.lattice;
        let e = lat.positive_edge(i);
        let nf = c.nf();
        let mut f = Mat::zeros(self.n, self.n);
        if c.beta != 0.0 {
            let mut staples = Mat::zeros(self.n, self.n);
            for p in lat.plaquettes_through(&e).expect("positive edge") {
                staples += self.path_product(&p[1..]);
            }
            f += staples * (nf * c.beta);
        }
        if c.kappa != 0.0 {
            let x = lat.start(&e);
            let y = lat.end(&e);
            f += (&self.higgs[y] * self.higgs[x].transpose()) * (2.0 * c.kappa * nf);
        }
        f
    }

    /// `H_x = sum_{e: u(e) = x} Q_e Phi_{v(e)}` over the `2d` edges at `x`.
    pub(crate) fn higgs_neighbour_sum(&self, x: Site) -> Mat {
        let cols = self.higgs[x].ncols();
        let mut h = Mat::zeros(self.n, cols);
        for e in self.lattice.edges_at(x) {
            let y = self.lattice.end(&e);
            let (i, positive) = self.lattice.edge_index(&e);
            if positive {
                h += &self.links[i] * &self.higgs[y];
            } else {
                h += self.links[i].tr_mul(&self.higgs[y]);
            }
        }
        h
    }

    /// The part of `S` that depends on `Phi_x`, evaluated at `phi`, given
    /// the neighbour sum `h` from [`Self::higgs_neighbour_sum`].
    pub(crate) fn site_local_action(&self, c: &Couplings, phi: &Mat, h: &Mat) -> f64 {
        let nf = c.nf();
        let hop = 2.0 * c.kappa * nf * phi.dot(h);
        match self.target {
            Target::Euclidean => {
                let d = self.lattice.dim() as f64;
                hop - (2.0 * d * c.kappa * nf + c.m * nf) * phi.norm_squared()
            }
            _ => hop,
        }
    }

    /// Edge gradient `X_e` of `S` at positive edge `i`; the tangent vector is
    /// `X_e Q_e`.
    pub fn grad_edge(&self, c: &Couplings, i: usize) -> Result<AlgebraElement> {
        self.check_target(c)?;
        Ok(AlgebraElement::from_matrix_unchecked(self.grad_edge_mat(c, i)))
    }

    pub(crate) fn grad_edge_mat(&self, c: &Couplings, i: usize) -> Mat {
        let qf = &self.links[i] * self.edge_force(c, i);
        -skew_part(&qf)
    }

    /// Site gradient at `x`: a vector for R^N, a tangent vector at `Phi_x`
    /// for the sphere, and the skew `Y_x` (tangent `Y_x Phi_x`) for SO(N).
    pub fn grad_site(&self, c: &Couplings, x: Site) -> Result<Mat> {
        self.check_target(c)?;
        Ok(self.grad_site_mat(c, x))
    }

    pub(crate) fn grad_site_mat(&self, c: &Couplings, x: Site) -> Mat {
        let nf = c.nf();
        let h = self.higgs_neighbour_sum(x);
        let phi = &self.higgs[x];
        match self.target {
            Target::Euclidean => {
                let d = self.lattice.dim() as f64;
                (h - phi * (2.0 * d)) * (2.0 * c.kappa * nf) - phi * (2.0 * c.m * nf)
            }
            Target::Sphere => {
                let proj = phi.dot(&h);
                (h - phi * proj) * (2.0 * c.kappa * nf)
            }
            Target::Group => skew_part(&(h * phi.transpose())) * (2.0 * c.kappa * nf),
        }
    }

    /// Gauge transformation `Q_e -> g_x Q_e g_y^{-1}`, `Phi_x -> g_x Phi_x`.
    pub fn gauge_transform(&self, g: &[GroupElement]) -> Result<Self> {
        if g.len() != self.lattice.n_sites() {
            return Err(Error::LengthMismatch(g.len(), self.lattice.n_sites()));
        }
        let links = self
            .lattice
            .positive_edges()
            .enumerate()
            .map(|(i, e)| {
                let x = self.lattice.start(&e);
                let y = self.lattice.end(&e);
                g[x].matrix() * &self.links[i] * g[y].matrix().transpose()
            })
            .collect();
        let higgs = self
            .higgs
            .iter()
            .zip(g)
            .map(|(phi, gx)| gx.matrix() * phi)
            .collect();
        Ok(self.with_parts(links, higgs))
    }

    /// Unitary gauge: transform by `g_x = Phi_x^t` so that `Phi == I`.
    pub fn ugauge_fix(&self) -> Result<Self> {
        if self.target != Target::Group {
            return Err(Error::TargetMismatch {
                expected: Target::Group.to_string(),
                found: self.target.to_string(),
            });
        }
        let g: Vec<GroupElement> = self
            .higgs
            .iter()
            .map(|phi| GroupElement::from_matrix_unchecked(phi.transpose()))
            .collect();
        let mut out = self.gauge_transform(&g)?;
        for phi in out.higgs_mut() {
            *phi = Mat::identity(self.n, self.n);
        }
        Ok(out)
    }

    /// Moves every component along its geodesic for time `t`:
    /// `exp(t X_e) Q_e`, and `Phi + t v`, the great circle, or `exp(t Y) Phi`.
    pub fn moved_along(&self, v: &TangentVector, t: f64) -> Self {
        let links = self
            .links
            .iter()
            .zip(&v.edges)
            .map(|(q, x)| expm(&(x * t)) * q)
            .collect();
        let higgs = self
            .higgs
            .iter()
            .zip(&v.sites)
            .map(|(phi, w)| match self.target {
                Target::Euclidean => phi + w * t,
                Target::Sphere => {
                    let base = phi.column(0).into_owned();
                    let tangent = tangent_project(&base, &(w.column(0) * t));
                    let out = sphere_exp_raw(&base, &tangent);
                    Mat::from_column_slice(self.n, 1, out.as_slice())
                }
                Target::Group => expm(&(w * t)) * phi,
            })
            .collect();
        self.with_parts(links, higgs)
    }
}

/// `N beta sum_p Tr Q_p + 2 kappa N sum_e Tr Q_e`: the action in unitary
/// gauge, a function of the links only.
pub fn gauge_fixed_action(cfg: &FieldConfiguration, c: &Couplings) -> f64 {
    let nf = c.nf();
    let links: f64 = cfg.links().iter().map(|q| q.trace()).sum();
    nf * c.beta * cfg.plaquette_trace_sum() + 2.0 * c.kappa * nf * links
}

/// Precision matrix `A(Q)` of the Gaussian conditional law of the Euclidean
/// Higgs field given the links: `S2 = Phi^t A Phi`.
pub fn higgs_precision(cfg: &FieldConfiguration, c: &Couplings) -> Mat {
    let n = cfg.n();
    let lat = cfg.lattice();
    let dim = n * lat.n_sites();
    let nf = c.nf();
    let mut a = Mat::identity(dim, dim) * (c.m * nf);
    for (i, e) in lat.positive_edges().enumerate() {
        let (x, y) = (lat.start(&e), lat.end(&e));
        for k in 0..n {
            a[(x * n + k, x * n + k)] += c.kappa * nf;
            a[(y * n + k, y * n + k)] += c.kappa * nf;
        }
        let q = cfg.link(i);
        for r in 0..n {
            for s in 0..n {
                a[(x * n + r, y * n + s)] -= c.kappa * nf * q[(r, s)];
                a[(y * n + s, x * n + r)] -= c.kappa * nf * q[(r, s)];
            }
        }
    }
    a
}

/// `V(Q) = -log int exp(-S2(Q, Phi)) dPhi`, up to a `Q`-independent
/// constant: `V = log det A(Q) / 2`. The link marginal of the Euclidean
/// model has density `exp(S1 - V)`.
pub fn integrated_higgs_potential(cfg: &FieldConfiguration, c: &Couplings) -> Result<f64> {
    if cfg.target() != Target::Euclidean {
        return Err(Error::TargetMismatch {
            expected: Target::Euclidean.to_string(),
            found: cfg.target().to_string(),
        });
    }
    c.validate_gibbs()?;
    let chol = higgs_precision(cfg, c)
        .cholesky()
        .ok_or_else(|| Error::InvalidCouplings("Higgs precision matrix is not positive".into()))?;
    let l = chol.l();
    Ok(l.diagonal().iter().map(|d| d.ln()).sum())
}

/// A tangent vector at a configuration: skew `X_e` per edge (tangent
/// `X_e Q_e`), and per site a free vector, a sphere tangent, or a skew `Y_x`
/// (tangent `Y_x Phi_x`).
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub edges: Vec<Mat>,
    pub sites: Vec<Mat>,
}

impl TangentVector {
    pub fn zero(cfg: &FieldConfiguration) -> Self {
        let n = cfg.n();
        let site_shape = match cfg.target() {
            Target::Group => (n, n),
            _ => (n, 1),
        };
        Self {
            edges: vec![Mat::zeros(n, n); cfg.lattice().n_edges()],
            sites: vec![Mat::zeros(site_shape.0, site_shape.1); cfg.lattice().n_sites()],
        }
    }

    /// Independent standard Gaussian components in every tangent space.
    pub fn random<R: Rng + ?Sized>(cfg: &FieldConfiguration, rng: &mut R) -> Self {
        let n = cfg.n();
        let edges = (0..cfg.lattice().n_edges())
            .map(|_| gaussian_skew(n, 1.0, rng))
            .collect();
        let sites = cfg
            .higgs_values()
            .iter()
            .map(|phi| match cfg.target() {
                Target::Euclidean => Mat::from_column_slice(n, 1, gaussian_vector(n, 1.0, rng).as_slice()),
                Target::Sphere => {
                    let base = phi.column(0).into_owned();
                    let v = tangent_project(&base, &gaussian_vector(n, 1.0, rng));
                    Mat::from_column_slice(n, 1, v.as_slice())
                }
                Target::Group => gaussian_skew(n, 1.0, rng),
            })
            .collect();
        Self { edges, sites }
    }

    pub fn norm_squared(&self) -> f64 {
        self.edges_norm_squared() + self.sites_norm_squared()
    }

    pub fn edges_norm_squared(&self) -> f64 {
        self.edges.iter().map(|m| m.norm_squared()).sum()
    }

    pub fn sites_norm_squared(&self) -> f64 {
        self.sites.iter().map(|m| m.norm_squared()).sum()
    }

    pub fn inner(&self, other: &Self) -> f64 {
        self.edges.iter().zip(&other.edges).map(|(a, b)| a.dot(b)).sum::<f64>()
            + self.sites.iter().zip(&other.sites).map(|(a, b)| a.dot(b)).sum::<f64>()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            edges: self.edges.iter().map(|m| m * s).collect(),
            sites: self.sites.iter().map(|m| m * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            edges: self.edges.iter().zip(&other.edges).map(|(a, b)| a + b).collect(),
            sites: self.sites.iter().zip(&other.sites).map(|(a, b)| a + b).collect(),
        }
    }

    /// Drops the site components.
    pub fn edges_only(&self) -> Self {
        Self {
            edges: self.edges.clone(),
            sites: self.sites.iter().map(|m| Mat::zeros(m.nrows(), m.ncols())).collect(),
        }
    }

    /// Drops the edge components.
    pub fn sites_only(&self) -> Self {
        Self {
            edges: self.edges.iter().map(|m| Mat::zeros(m.nrows(), m.ncols())).collect(),
            sites: self.sites.clone(),
        }
    }

    /// Checks skewness and sphere tangency.
    pub fn validate(&self, cfg: &FieldConfiguration) -> Result<()> {
        if self.edges.len() != cfg.lattice().n_edges() || self.sites.len() != cfg.lattice().n_sites() {
            return Err(Error::InvalidConfiguration("tangent length mismatch".into()));
        }
        for x in &self.edges {
            AlgebraElement::new(x.clone())?;
        }
        for (w, phi) in self.sites.iter().zip(cfg.higgs_values()) {
            match cfg.target() {
                Target::Euclidean => {}
                Target::Sphere => {
                    if phi.dot(w).abs() > 1e-12 {
                        return Err(Error::InvalidConfiguration("sphere tangent not orthogonal to base".into()));
                    }
                }
                Target::Group => {
                    AlgebraElement::new(w.clone())?;
                }
            }
        }
        Ok(())
    }
}

/// The full gradient as a tangent vector.
pub fn gradient(cfg: &FieldConfiguration, c: &Couplings) -> Result<TangentVector> {
    cfg.check_target(c)?;
    Ok(TangentVector {
        edges: (0..cfg.lattice().n_edges()).map(|i| cfg.grad_edge_mat(c, i)).collect(),
        sites: (0..cfg.lattice().n_sites()).map(|x| cfg.grad_site_mat(c, x)).collect(),
    })
}

/// Which function the Hessian form differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianOf {
    /// The full action `S`.
    Action,
    /// `S1` only.
    YangMills,
    /// `-S2` only.
    Higgs,
    /// `S1 - V(Q)`, the log-density of the link marginal for the Euclidean
    /// target; site components of the tangent are ignored.
    LinkMarginal,
}

/// Finite-difference second derivative along a geodesic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianEstimate {
    pub value: f64,
    /// Same stencil at half the step.
    pub half_step_value: f64,
    pub step: f64,
}

impl HessianEstimate {
    pub fn richardson_gap(&self) -> f64 {
        (self.value - self.half_step_value).abs()
    }
}

/// Default geodesic displacement used by [`hessian_form`].
pub const HESSIAN_STEP: f64 = 1e-3;

/// `d^2/dt^2 S(Gamma(t))` at `t = 0`, where `Gamma` moves each component along
/// its geodesic with velocity `v`. Five-point central stencil at displacement
/// `HESSIAN_STEP`, cross-checked at half the step.
pub fn hessian_form(
    cfg: &FieldConfiguration,
    c: &Couplings,
    v: &TangentVector,
    of: HessianOf,
) -> Result<HessianEstimate> {
    hessian_form_with_step(cfg, c, v, of, HESSIAN_STEP)
}

pub fn hessian_form_with_step(
    cfg: &FieldConfiguration,
    c: &Couplings,
    v: &TangentVector,
    of: HessianOf,
    step: f64,
) -> Result<HessianEstimate> {
    cfg.check_target(c)?;
    if !(step >= 1e-6) {
        return Err(Error::HessianCancellation(format!(
            "step {step:.1e} is below 1e-6; roundoff dominates the second difference"
        )));
    }
    let v = &match of {
        HessianOf::LinkMarginal => v.edges_only(),
        _ => v.clone(),
    };
    let norm = v.norm_squared().sqrt();
    if norm == 0.0 {
        return Ok(HessianEstimate { value: 0.0, half_step_value: 0.0, step });
    }
    let eval = |t: f64| -> Result<f64> {
        let moved = cfg.moved_along(v, t);
        match of {
            HessianOf::Action => moved.action(c),
            HessianOf::YangMills => Ok(moved.action_parts(c)?.0),
            HessianOf::Higgs => Ok(-moved.action_parts(c)?.1),
            HessianOf::LinkMarginal => {
                let s1 = moved.action_parts(c)?.0;
                Ok(s1 - integrated_higgs_potential(&moved, c)?)
            }
        }
    };
    let stencil = |h: f64| -> Result<(f64, f64)> {
        let f0 = eval(0.0)?;
        let f1 = eval(h)?;
        let fm1 = eval(-h)?;
        let f2 = eval(2.0 * h)?;
        let fm2 = eval(-2.0 * h)?;
        let scale = [f0, f1, fm1, f2, fm2].iter().fold(0.0f64, |a, b| a.max(b.abs()));
        Ok(((-f2 + 16.0 * f1 - 30.0 * f0 + 16.0 * fm1 - fm2) / (12.0 * h * h), scale))
    };
    let h = step / norm;
    let (value, scale) = stencil(h)?;
    let (half, _) = stencil(h / 2.0)?;
    // Roundoff of the stencil is about 64 eps |S| / (12 h^2); refuse results
    // that it swamps.
    let roundoff = 64.0 * f64::EPSILON * scale / (12.0 * (h / 2.0) * (h / 2.0));
    if roundoff > 1e-3 * (1.0 + value.abs()) {
        return Err(Error::HessianCancellation(format!(
            "roundoff {roundoff:.2e} vs value {value:.3e} at step {step:.1e}"
        )));
    }
    Ok(HessianEstimate { value, half_step_value: half, step })
}

/// Random gauge transformation, Haar at every site.
pub fn random_gauge<R: Rng + ?Sized>(lat: &Lattice, n: usize, rng: &mut R) -> Vec<GroupElement> {
    (0..lat.n_sites()).map(|_| haar_sample(n, rng)).collect()
}

/// Plaquettes of a lattice as generic edge slices, for callers that want
/// `&[DirectedEdge]`.
pub fn plaquette_edges(p: &Plaquette) -> &[DirectedEdge] {
    &p[..]
}

/// Convenience: the Higgs value at `x` as a vector (vector targets only).
pub fn higgs_vector(cfg: &FieldConfiguration, x: Site) -> Vector {
    cfg.higgs(x).column(0).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TARGETS: [Target; 3] = [Target::Euclidean, Target::Sphere, Target::Group];

    fn lat(d: usize, l: usize) -> Arc<Lattice> {
        Arc::new(Lattice::new(d, l).unwrap())
    }

    fn couplings(n: usize, target: Target) -> Couplings {
        Couplings::new(n, 0.3, 0.2, 0.7, target).unwrap()
    }

    #[test]
    fn cold_actions() {
        let lattice = lat(2, 3);
        let (np, ne) = (lattice.n_plaquettes() as f64, lattice.n_edges() as f64);
        let n = 3;
        let nf = n as f64;
        let c = |t| Couplings::new(n, 0.4, 0.25, 1.5, t).unwrap();
        let e = FieldConfiguration::cold(lattice.clone(), n, Target::Euclidean);
        assert!((e.action(&c(Target::Euclidean)).unwrap() - nf * nf * 0.4 * np).abs() < 1e-12);
        let s = FieldConfiguration::cold(lattice.clone(), n, Target::Sphere);
        let want = nf * nf * 0.4 * np + 2.0 * 0.25 * nf * ne;
        assert!((s.action(&c(Target::Sphere)).unwrap() - want).abs() < 1e-12);
        let g = FieldConfiguration::cold(lattice.clone(), n, Target::Group);
        let want = nf * nf * 0.4 * np + 2.0 * 0.25 * nf * nf * ne;
        assert!((g.action(&c(Target::Group)).unwrap() - want).abs() < 1e-12);
        assert!(matches!(
            g.action(&c(Target::Sphere)),
            Err(Error::TargetMismatch { .. })
        ));
    }

    #[test]
    fn edge_values_and_plaquettes() {
        let lattice = lat(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = FieldConfiguration::random(lattice.clone(), 3, Target::Group, &mut rng);
        let e = lattice.positive_edge(4);
        assert_eq!(cfg.edge_value(&e).matrix(), cfg.link(4));
        let r = lattice.reverse(&e);
        let prod = cfg.edge_value(&r).matrix() * cfg.edge_value(&e).matrix();
        assert!((prod - Mat::identity(3, 3)).norm() < 1e-12);

        let p = lattice.plaquettes()[2];
        let qp = cfg.plaquette_product(&p).unwrap();
        for k in 1..4 {
            let mut rot = p;
            rot.rotate_left(k);
            let t = cfg.plaquette_product(&rot).unwrap().matrix().trace();
            assert!((t - qp.matrix().trace()).abs() < 1e-12);
        }
        let rev: Vec<DirectedEdge> = p.iter().rev().map(|e| lattice.reverse(e)).collect();
        let qr = cfg.plaquette_product(&rev).unwrap();
        assert!((qr.matrix() - qp.matrix().transpose()).norm() < 1e-12);
        assert!(cfg.plaquette_product(&p[..3]).is_err());

        let cold = FieldConfiguration::cold(lattice, 3, Target::Group);
        assert_eq!(cold.plaquette_product(&p).unwrap().matrix(), &Mat::identity(3, 3));
    }

    #[test]
    fn gauge_transform_edge_values_consistent() {
        let lattice = lat(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = FieldConfiguration::random(lattice.clone(), 3, Target::Sphere, &mut rng);
        let g = random_gauge(&lattice, 3, &mut rng);
        let t = cfg.gauge_transform(&g).unwrap();
        for e in lattice.positive_edges() {
            for e in [e, lattice.reverse(&e)] {
                let (x, y) = (lattice.start(&e), lattice.end(&e));
                let want = g[x].matrix() * cfg.edge_value(&e).matrix() * g[y].matrix().transpose();
                assert!((t.edge_value(&e).matrix() - want).norm() < 1e-12);
                let cov = g[x].matrix() * cfg.covariant_derivative(&e);
                assert!((t.covariant_derivative(&e) - cov).norm() < 1e-12);
            }
        }
        let ident: Vec<GroupElement> = (0..lattice.n_sites()).map(|_| GroupElement::identity(3)).collect();
        assert_eq!(cfg.gauge_transform(&ident).unwrap(), cfg);
    }

    #[test]
    fn action_gauge_invariant() {
        let lattice = lat(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for target in TARGETS {
            let c = couplings(3, target);
            let cfg = FieldConfiguration::random(lattice.clone(), 3, target, &mut rng);
            let s = cfg.action(&c).unwrap();
            for _ in 0..50 {
                let g = random_gauge(&lattice, 3, &mut rng);
                let s2 = cfg.gauge_transform(&g).unwrap().action(&c).unwrap();
                assert!((s - s2).abs() <= 1e-9 * (1.0 + s.abs()));
            }
        }
    }

    #[test]
    fn covariant_derivative_reversal() {
        let lattice = lat(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let cfg = FieldConfiguration::random(lattice.clone(), 3, Target::Euclidean, &mut rng);
            let e = lattice.positive_edge(rng.random_range(0..lattice.n_edges()));
            let a = cfg.covariant_derivative(&e).norm_squared();
            let b = cfg.covariant_derivative(&lattice.reverse(&e)).norm_squared();
            assert!((a - b).abs() < 1e-12 * (1.0 + a));
        }
        let cold = FieldConfiguration::cold(lattice.clone(), 3, Target::Sphere);
        assert!(cold.covariant_derivative(&lattice.positive_edge(0)).norm() == 0.0);
    }

    #[test]
    fn euclidean_s2_matches_expanded_form() {
        let lattice = lat(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = FieldConfiguration::random(lattice.clone(), 3, Target::Euclidean, &mut rng);
        let c = couplings(3, Target::Euclidean);
        let (_, s2) = cfg.action_parts(&c).unwrap();
        // Quadratic form Phi^t A Phi with the precision matrix.
        let a = higgs_precision(&cfg, &c);
        let phi = Vector::from_iterator(
            3 * lattice.n_sites(),
            cfg.higgs_values().iter().flat_map(|p| p.iter().copied().collect::<Vec<_>>()),
        );
        let quad = phi.dot(&(&a * &phi));
        assert!((s2 - quad).abs() < 1e-12 * s2.abs());
        // Reversed-edge evaluation of the hopping term.
        let rev: f64 = lattice
            .positive_edges()
            .map(|e| cfg.covariant_derivative(&lattice.reverse(&e)).norm_squared())
            .sum();
        let fwd: f64 = lattice
            .positive_edges()
            .map(|e| cfg.covariant_derivative(&e).norm_squared())
            .sum();
        assert!((rev - fwd).abs() < 1e-12 * fwd);
    }

    /// Directional derivative of the action by central differences along
    /// the geodesic, with the best step of a sweep.
    fn fd_directional(cfg: &FieldConfiguration, c: &Couplings, v: &TangentVector, exact: f64) -> f64 {
        [1e-3, 1e-4, 1e-5, 1e-6]
            .iter()
            .map(|&h| {
                let fp = cfg.moved_along(v, h).action(c).unwrap();
                let fm = cfg.moved_along(v, -h).action(c).unwrap();
                (fp - fm) / (2.0 * h)
            })
            .min_by(|a, b| (a - exact).abs().total_cmp(&(b - exact).abs()))
            .unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let lattice = lat(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for target in TARGETS {
            for n in [2, 3, 4] {
                let c = couplings(n, target);
                let cfg = FieldConfiguration::random(lattice.clone(), n, target, &mut rng);
                let grad = gradient(&cfg, &c).unwrap();
                grad.validate(&cfg).unwrap();
                for _ in 0..5 {
                    let v = TangentVector::random(&cfg, &mut rng);
                    let exact = grad.inner(&v);
                    let fd = fd_directional(&cfg, &c, &v, exact);
                    let scale = grad.norm_squared().sqrt() * v.norm_squared().sqrt();
                    assert!((fd - exact).abs() <= 1e-6 * scale, "{target} n={n}: {fd} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn gradient_special_cases() {
        let lattice = lat(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = FieldConfiguration::random(lattice.clone(), 3, Target::Euclidean, &mut rng);
        let zero = Couplings::new(3, 0.0, 0.0, 1.0, Target::Euclidean).unwrap();
        assert_eq!(cfg.grad_edge(&zero, 0).unwrap().matrix(), &Mat::zeros(3, 3));
        let g = cfg.grad_site(&zero, 2).unwrap();
        assert!((g + cfg.higgs(2) * (2.0 * 1.0 * 3.0)).norm() < 1e-12);

        let sphere = FieldConfiguration::cold(lattice.clone(), 3, Target::Sphere);
        let c = couplings(3, Target::Sphere);
        for x in 0..lattice.n_sites() {
            assert!(sphere.grad_site(&c, x).unwrap().norm() < 1e-14);
        }

        // Pure Yang-Mills edge gradient against an independent sum over P+.
        let ym = Couplings::new(3, 0.7, 0.0, 1.0, Target::Euclidean).unwrap();
        let i = 5;
        let e = lattice.positive_edge(i);
        let mut sum = Mat::zeros(3, 3);
        for p in lattice.plaquettes() {
            // Rotate/reverse each plaquette containing e so it starts with e.
            let idx: Vec<(usize, bool)> = p.iter().map(|f| lattice.edge_index(f)).collect();
            if let Some(k) = idx.iter().position(|&(j, _)| j == i) {
                let mut edges: Vec<DirectedEdge> = p.to_vec();
                if !idx[k].1 {
                    edges = edges.iter().rev().map(|f| lattice.reverse(f)).collect();
                }
                let start = edges.iter().position(|f| *f == e).unwrap();
                edges.rotate_left(start);
                let qp = cfg.path_product(&edges);
                sum += &qp - qp.transpose();
            }
        }
        let want = sum * (-0.5 * 3.0 * 0.7);
        assert!((cfg.grad_edge(&ym, i).unwrap().matrix() - want).norm() < 1e-12);
    }

    #[test]
    fn site_gradient_tangency() {
        let lattice = lat(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for target in [Target::Sphere, Target::Group] {
            let c = couplings(4, target);
            let cfg = FieldConfiguration::random(lattice.clone(), 4, target, &mut rng);
            for x in 0..lattice.n_sites() {
                let g = cfg.grad_site(&c, x).unwrap();
                match target {
                    Target::Sphere => assert!(cfg.higgs(x).dot(&g).abs() < 1e-12),
                    _ => assert!((&g + g.transpose()).norm() < 1e-12),
                }
            }
        }
    }

    #[test]
    fn unitary_gauge() {
        let lattice = lat(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = couplings(3, Target::Group);
        let cold = FieldConfiguration::cold(lattice.clone(), 3, Target::Group);
        assert_eq!(cold.ugauge_fix().unwrap(), cold);
        let cfg = FieldConfiguration::random(lattice.clone(), 3, Target::Group, &mut rng);
        let fixed = cfg.ugauge_fix().unwrap();
        for x in 0..lattice.n_sites() {
            assert!((fixed.higgs(x) - Mat::identity(3, 3)).norm() < 1e-12);
        }
        let s = cfg.action(&c).unwrap();
        assert!((s - fixed.action(&c).unwrap()).abs() <= 1e-9 * s.abs());
        assert!((gauge_fixed_action(&fixed, &c) - fixed.action(&c).unwrap()).abs() <= 1e-12 * s.abs());
        let sph = FieldConfiguration::cold(lattice, 3, Target::Sphere);
        assert!(sph.ugauge_fix().is_err());
    }

    #[test]
    fn gauge_fixed_action_cases() {
        let lattice = lat(2, 3);
        let c = Couplings::new(3, 0.2, 0.3, 0.0, Target::Group).unwrap();
        let cold = FieldConfiguration::cold(lattice.clone(), 3, Target::Group);
        let want = 9.0 * 0.2 * lattice.n_plaquettes() as f64 + 2.0 * 0.3 * 9.0 * lattice.n_edges() as f64;
        assert!((gauge_fixed_action(&cold, &c) - want).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cfg = FieldConfiguration::random(lattice.clone(), 3, Target::Group, &mut rng);
        let c0 = Couplings::new(3, 0.0, 0.3, 0.0, Target::Group).unwrap();
        let traces: f64 = cfg.links().iter().map(|q| q.trace()).sum();
        assert!((gauge_fixed_action(&cfg, &c0) - 2.0 * 0.3 * 3.0 * traces).abs() < 1e-12);
        for _ in 0..100 {
            let q = FieldConfiguration::random(lattice.clone(), 3, Target::Group, &mut rng);
            let links = q.links().to_vec();
            let at_identity = cold.with_parts(links, cold.higgs_values().to_vec());
            let a = gauge_fixed_action(&at_identity, &c);
            let b = at_identity.action(&c).unwrap();
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn hessian_basic_properties() {
        let lattice = lat(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = couplings(3, Target::Group);
        let cfg = FieldConfiguration::random(lattice.clone(), 3, Target::Group, &mut rng);
        let zero = TangentVector::zero(&cfg);
        assert_eq!(hessian_form(&cfg, &c, &zero, HessianOf::Action).unwrap().value, 0.0);
        let v = TangentVector::random(&cfg, &mut rng).scaled(0.2);
        let w = TangentVector::random(&cfg, &mut rng).scaled(0.2);
        let h = |t: &TangentVector| hessian_form(&cfg, &c, t, HessianOf::Action).unwrap().value;
        // Parallelogram law of a quadratic form; curvature of the product
        // manifold does not enter second derivatives along geodesics.
        let lhs = h(&v.add(&w)) + h(&v.add(&w.scaled(-1.0)));
        let rhs = 2.0 * h(&v) + 2.0 * h(&w);
        assert!((lhs - rhs).abs() < 1e-5 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
        assert!(matches!(
            hessian_form_with_step(&cfg, &c, &v, HessianOf::Action, 1e-8),
            Err(Error::HessianCancellation(_))
        ));
    }

    #[test]
    fn euclidean_higgs_hessian_lower_bound() {
        let lattice = lat(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c = couplings(3, Target::Euclidean);
        for _ in 0..20 {
            let cfg = FieldConfiguration::random(lattice.clone(), 3, Target::Euclidean, &mut rng);
            let v = TangentVector::random(&cfg, &mut rng).sites_only();
            let v = v.scaled(1.0 / v.norm_squared().sqrt());
            // Hessian of S2 along Phi directions is at least 2 m N |v|^2.
            let h = hessian_form(&cfg, &c, &v, HessianOf::Higgs).unwrap().value;
            assert!(-h >= 2.0 * c.m * 3.0 - 1e-6);
        }
    }

    #[test]
    fn integrated_potential_is_gauge_invariant() {
        let lattice = lat(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c = couplings(3, Target::Euclidean);
        let cfg = FieldConfiguration::random(lattice.clone(), 3, Target::Euclidean, &mut rng);
        let v = integrated_higgs_potential(&cfg, &c).unwrap();
        let g = random_gauge(&lattice, 3, &mut rng);
        let w = integrated_higgs_potential(&cfg.gauge_transform(&g).unwrap(), &c).unwrap();
        assert!((v - w).abs() < 1e-10 * (1.0 + v.abs()));
    }
}
