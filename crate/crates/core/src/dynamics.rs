//! Langevin dynamics `dX = grad S dt + sqrt(2) dB` on the configuration
//! manifold.
//!
//! The default [`Scheme::Geodesic`] integrator moves each component along
//! the exponential map of its own increment, so links stay in SO(N) and
//! sphere sites on the sphere without any repair step. The Ito correction
//! drifts (`-(N-1)/2 Q`, `-(N-1) Phi`, `-(N-1)/2 Phi`) come out of the second
//! order term of the exponential. [`Scheme::ItoProject`] writes those drifts
//! explicitly, takes an Euler-Maruyama step in the ambient space and
//! retracts.
//!
//! Noise is counter based: the Gaussian block of component `id` at step `k`
//! comes from a ChaCha stream keyed by `(seed, k)` at word offset
//! `id << 20`, so any step can be replayed in isolation.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{
    expm, gaussian_skew, gaussian_vector, retract_orthogonal, sphere_exp_raw, tangent_project,
    GroupElement, Mat,
};
use crate::model::{gradient, Couplings, FieldConfiguration, Target, TangentVector};

/// Largest allowed Frobenius norm of a single-component increment.
pub const MAX_INCREMENT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Geodesic,
    ItoProject,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Geodesic => "geodesic",
            Scheme::ItoProject => "ito-project",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geodesic" => Ok(Scheme::Geodesic),
            "ito-project" | "ito_project" | "ito" => Ok(Scheme::ItoProject),
            other => Err(Error::InvalidSettings(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings {
    pub dt: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub steps: usize,
    /// Observers run every `thinning` steps.
    pub thinning: usize,
}

impl IntegratorSettings {
    pub fn new(dt: f64, steps: usize, seed: u64) -> Self {
        Self { dt, scheme: Scheme::Geodesic, seed, steps, thinning: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidSettings(format!("dt must be positive, got {}", self.dt)));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidSettings("thinning must be at least 1".into()));
        }
        Ok(())
    }
}

/// Gaussian increments for one step, before scaling by `sqrt(2 dt)`.
///
/// Edge blocks and group-site blocks are skew with standard coordinates in
/// the orthonormal basis of so(N); vector-site blocks are standard Gaussian
/// `N x 1` vectors (projected onto the tangent space inside the sphere step).
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    pub edges: Vec<Mat>,
    pub sites: Vec<Mat>,
}

fn draw_site<R: Rng + ?Sized>(target: Target, n: usize, rng: &mut R) -> Mat {
    match target {
        Target::Group => gaussian_skew(n, 1.0, rng),
        _ => Mat::from_column_slice(n, 1, gaussian_vector(n, 1.0, rng).as_slice()),
    }
}

impl Noise {
    pub fn zero(cfg: &FieldConfiguration) -> Self {
        let n = cfg.n();
        let cols = cfg.target().higgs_cols(n);
        Self {
            edges: vec![Mat::zeros(n, n); cfg.lattice().n_edges()],
            sites: vec![Mat::zeros(n, cols); cfg.lattice().n_sites()],
        }
    }

    /// Draws every block sequentially from `rng`.
    pub fn sample<R: Rng + ?Sized>(cfg: &FieldConfiguration, rng: &mut R) -> Self {
        let n = cfg.n();
        Self {
            edges: (0..cfg.lattice().n_edges()).map(|_| gaussian_skew(n, 1.0, rng)).collect(),
            sites: (0..cfg.lattice().n_sites())
                .map(|_| draw_site(cfg.target(), n, rng))
                .collect(),
        }
    }

    /// Counter-based draw for step `step`; component ids are edge indices
    /// followed by site indices offset by the edge count.
    pub fn counter(cfg: &FieldConfiguration, seed: u64, step: u64) -> Self {
        let n = cfg.n();
        let ne = cfg.lattice().n_edges();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(step);
        let mut edges = Vec::with_capacity(ne);
        for i in 0..ne {
            rng.set_word_pos((i as u128) << 20);
            edges.push(gaussian_skew(n, 1.0, &mut rng));
        }
        let mut sites = Vec::with_capacity(cfg.lattice().n_sites());
        for x in 0..cfg.lattice().n_sites() {
            rng.set_word_pos(((ne + x) as u128) << 20);
            sites.push(draw_site(cfg.target(), n, &mut rng));
        }
        Self { edges, sites }
    }

    /// Noise pushed forward by the gauge transformation `g`: edge blocks
    /// `g_x xi g_x^t` with `x` the start of the edge; site blocks `g_x eta`
    /// for vector targets and `g_x xi g_x^t` for the group target.
    pub fn gauge_rotated(&self, cfg: &FieldConfiguration, g: &[GroupElement]) -> Result<Self> {
        let lat = cfg.lattice();
        if g.len() != lat.n_sites() {
            return Err(Error::LengthMismatch(g.len(), lat.n_sites()));
        }
        let edges = lat
            .positive_edges()
            .zip(&self.edges)
            .map(|(e, xi)| {
                let gx = g[lat.start(&e)].matrix();
                gx * xi * gx.transpose()
            })
            .collect();
        let sites = self
            .sites
            .iter()
            .zip(g)
            .map(|(eta, gx)| match cfg.target() {
                Target::Group => gx.matrix() * eta * gx.matrix().transpose(),
                _ => gx.matrix() * eta,
            })
            .collect();
        Ok(Self { edges, sites })
    }
}

/// The drift of the Langevin equation: the gradient of `S`.
pub fn drift(cfg: &FieldConfiguration, c: &Couplings) -> Result<TangentVector> {
    gradient(cfg, c)
}

fn check_increment(kind: &str, index: usize, inc: &Mat) -> Result<()> {
    let norm = inc.norm();
    if !(norm <= MAX_INCREMENT) {
        return Err(Error::StepTooLarge {
            component: format!("{kind} {index}"),
            norm,
            limit: MAX_INCREMENT,
        });
    }
    Ok(())
}

/// One geodesic Euler step with the given noise.
pub fn step_geodesic(
    cfg: &FieldConfiguration,
    c: &Couplings,
    dt: f64,
    noise: &Noise,
) -> Result<FieldConfiguration> {
    let v = drift(cfg, c)?;
    let s = (2.0 * dt).sqrt();
    let mut links = Vec::with_capacity(cfg.links().len());
    for (i, q) in cfg.links().iter().enumerate() {
        let inc = &v.edges[i] * dt + &noise.edges[i] * s;
        check_increment("edge", i, &inc)?;
        links.push(expm(&inc) * q);
    }
    let mut higgs = Vec::with_capacity(cfg.higgs_values().len());
    for (x, phi) in cfg.higgs_values().iter().enumerate() {
        let next = match cfg.target() {
            Target::Euclidean => {
                let inc = &v.sites[x] * dt + &noise.sites[x] * s;
                check_increment("site", x, &inc)?;
                phi + inc
            }
            Target::Sphere => {
                let base = phi.column(0).into_owned();
                let eta = tangent_project(&base, &noise.sites[x].column(0).into_owned());
                let inc = v.sites[x].column(0) * dt + eta * s;
                check_increment("site", x, &Mat::from_column_slice(inc.len(), 1, inc.as_slice()))?;
                let out = sphere_exp_raw(&base, &inc);
                Mat::from_column_slice(out.len(), 1, out.as_slice())
            }
            Target::Group => {
                let inc = &v.sites[x] * dt + &noise.sites[x] * s;
                check_increment("site", x, &inc)?;
                expm(&inc) * phi
            }
        };
        higgs.push(next);
    }
    Ok(cfg.with_parts(links, higgs))
}

/// Explicit Euler-Maruyama on the Ito form followed by a retraction.
pub fn step_ito_project(
    cfg: &FieldConfiguration,
    c: &Couplings,
    dt: f64,
    noise: &Noise,
) -> Result<FieldConfiguration> {
    if dt == 0.0 {
        return Ok(cfg.clone());
    }
    let v = drift(cfg, c)?;
    let s = (2.0 * dt).sqrt();
    let cg = 0.5 * (cfg.n() as f64 - 1.0);
    let mut links = Vec::with_capacity(cfg.links().len());
    for (i, q) in cfg.links().iter().enumerate() {
        let inc = &v.edges[i] * dt + &noise.edges[i] * s;
        check_increment("edge", i, &inc)?;
        let moved = q + &inc * q - q * (cg * dt);
        links.push(retract_orthogonal(&moved)?.into_matrix());
    }
    let mut higgs = Vec::with_capacity(cfg.higgs_values().len());
    for (x, phi) in cfg.higgs_values().iter().enumerate() {
        let next = match cfg.target() {
            Target::Euclidean => {
                let inc = &v.sites[x] * dt + &noise.sites[x] * s;
                check_increment("site", x, &inc)?;
                phi + inc
            }
            Target::Sphere => {
                let base = phi.column(0).into_owned();
                let eta = tangent_project(&base, &noise.sites[x].column(0).into_owned());
                let inc = v.sites[x].column(0) * dt + eta * s;
                check_increment("site", x, &Mat::from_column_slice(inc.len(), 1, inc.as_slice()))?;
                let moved = &base + inc - &base * (2.0 * cg * dt);
                let norm = moved.norm();
                if !(norm > 0.5) {
                    return Err(Error::RetractionFailure(format!("sphere site {x} collapsed")));
                }
                Mat::from_column_slice(moved.len(), 1, (moved / norm).as_slice())
            }
            Target::Group => {
                let inc = &v.sites[x] * dt + &noise.sites[x] * s;
                check_increment("site", x, &inc)?;
                let moved = phi + &inc * phi - phi * (cg * dt);
                retract_orthogonal(&moved)?.into_matrix()
            }
        };
        higgs.push(next);
    }
    Ok(cfg.with_parts(links, higgs))
}

/// One step of the chosen scheme with the given noise.
pub fn step_with(
    cfg: &FieldConfiguration,
    c: &Couplings,
    dt: f64,
    scheme: Scheme,
    noise: &Noise,
) -> Result<FieldConfiguration> {
    match scheme {
        Scheme::Geodesic => step_geodesic(cfg, c, dt, noise),
        Scheme::ItoProject => step_ito_project(cfg, c, dt, noise),
    }
}

/// Observable evaluated along a trajectory.
pub type Observer<'a> = &'a dyn Fn(&FieldConfiguration) -> f64;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub step: u64,
    pub time: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub final_config: FieldConfiguration,
    pub seed: u64,
    /// Index of the next step; together with `seed` this fixes all future
    /// noise.
    pub next_step: u64,
}

/// Runs `settings.steps` steps from step index 0.
pub fn run(
    cfg: &FieldConfiguration,
    c: &Couplings,
    settings: &IntegratorSettings,
    observers: &[Observer<'_>],
) -> Result<Trajectory> {
    run_from(cfg, c, settings, observers, 0)
}

/// Runs `settings.steps` steps starting at step index `start`, so a chain
/// can be resumed from a checkpoint with the same noise it would have seen.
pub fn run_from(
    cfg: &FieldConfiguration,
    c: &Couplings,
    settings: &IntegratorSettings,
    observers: &[Observer<'_>],
    start: u64,
) -> Result<Trajectory> {
    settings.validate()?;
    c.validate()?;
    if cfg.target() == Target::Euclidean {
        c.validate_gibbs()?;
    }
    let observe = |cfg: &FieldConfiguration, step: u64| Record {
        step,
        time: step as f64 * settings.dt,
        values: observers.iter().map(|f| f(cfg)).collect(),
    };
    let mut records = vec![observe(cfg, start)];
    let mut current = cfg.clone();
    for k in 0..settings.steps as u64 {
        let step = start + k;
        let noise = Noise::counter(&current, settings.seed, step);
        current = step_with(&current, c, settings.dt, settings.scheme, &noise).map_err(|e| {
            Error::AtStep { step: step as usize, source: Box::new(e) }
        })?;
        if (k + 1) % settings.thinning as u64 == 0 {
            records.push(observe(&current, step + 1));
        }
    }
    Ok(Trajectory {
        records,
        final_config: current,
        seed: settings.seed,
        next_step: start + settings.steps as u64,
    })
}
