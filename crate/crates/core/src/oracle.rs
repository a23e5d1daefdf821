//! Metropolis sampler for the Gibbs measure `exp(S) / Z` and for the
//! unitary-gauge link measure with action `gauge_fixed_action`.
//!
//! Proposals are symmetric with respect to the reference measure (left
//! multiplication by `exp(eps xi)` for group components, a geodesic step
//! with an isotropic tangent direction on the sphere, a Gaussian shift in
//! R^N), so the acceptance probability is `min(1, exp(Delta S))`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{Observer, Record};
use crate::error::{Error, Result};
use crate::geometry::{expm, gaussian_skew, gaussian_vector, sphere_exp_raw, tangent_project, Mat};
use crate::model::{Couplings, FieldConfiguration, Target};

const TARGET_RATE: f64 = 0.4;
const RATE_BAND: f64 = 0.1;
const MAX_SCALE: f64 = 4.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KindStats {
    pub proposed: u64,
    pub accepted: u64,
}

impl KindStats {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    fn merge(&mut self, other: &KindStats) {
        self.proposed += other.proposed;
        self.accepted += other.accepted;
    }
}

/// Acceptance counts for one sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepStats {
    pub edges: KindStats,
    pub sites: KindStats,
}

/// Proposal step sizes with acceptance windows for tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalScales {
    pub edge: f64,
    pub site: f64,
    /// Counts since the last tuning step.
    pub window: SweepStats,
    /// Counts over the whole run.
    pub total: SweepStats,
    frozen: bool,
}

impl ProposalScales {
    pub fn new(edge: f64, site: f64) -> Result<Self> {
        for (name, v) in [("edge", edge), ("site", site)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidSettings(format!("{name} scale must be positive, got {v}")));
            }
        }
        Ok(Self { edge, site, window: SweepStats::default(), total: SweepStats::default(), frozen: false })
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Ends the burn-in phase; later calls to [`Self::autotune`] are no-ops.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    fn absorb(&mut self, s: &SweepStats) {
        self.window.edges.merge(&s.edges);
        self.window.sites.merge(&s.sites);
        self.total.edges.merge(&s.edges);
        self.total.sites.merge(&s.sites);
    }

    /// Multiplicative step towards acceptance `0.4 +- 0.1` using the current
    /// window, which is then cleared.
    pub fn autotune(&mut self) {
        if self.frozen {
            return;
        }
        fn adjust(eps: f64, stats: &KindStats) -> f64 {
            if stats.proposed == 0 {
                return eps;
            }
            let r = stats.rate();
            let out = if r > TARGET_RATE + RATE_BAND {
                eps * 1.2
            } else if r < TARGET_RATE - RATE_BAND {
                eps / 1.2
            } else {
                eps
            };
            out.min(MAX_SCALE)
        }
        self.edge = adjust(self.edge, &self.window.edges);
        self.site = adjust(self.site, &self.window.sites);
        self.window = SweepStats::default();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepOrder {
    /// All edges in index order, then all sites.
    #[default]
    Sequential,
    /// Edges in a random order, then sites in a random order.
    Shuffled,
}

fn accept<R: Rng + ?Sized>(delta: f64, rng: &mut R) -> bool {
    if delta >= 0.0 {
        return true;
    }
    rng.random::<f64>() < delta.exp()
}

/// `Tr(A F)` without forming the product.
fn trace_product(a: &Mat, f: &Mat) -> f64 {
    a.dot(&f.transpose())
}

fn edge_update<R: Rng + ?Sized>(
    cfg: &mut FieldConfiguration,
    i: usize,
    force: &Mat,
    eps: f64,
    rng: &mut R,
) -> bool {
    let n = cfg.n();
    let proposal = expm(&gaussian_skew(n, eps, rng)) * cfg.link(i);
    let delta = trace_product(&(&proposal - cfg.link(i)), force);
    let ok = accept(delta, rng);
    if ok {
        cfg.links_mut()[i] = proposal;
    }
    ok
}

/// Change of `S` when the link `i` moves to `proposal`.
pub fn edge_delta_action(cfg: &FieldConfiguration, c: &Couplings, i: usize, proposal: &Mat) -> f64 {
    trace_product(&(proposal - cfg.link(i)), &cfg.edge_force(c, i))
}

fn site_update<R: Rng + ?Sized>(
    cfg: &mut FieldConfiguration,
    c: &Couplings,
    x: usize,
    eps: f64,
    rng: &mut R,
) -> bool {
    let n = cfg.n();
    let phi = cfg.higgs(x).clone();
    let proposal = match cfg.target() {
        Target::Euclidean => &phi + Mat::from_column_slice(n, 1, gaussian_vector(n, eps, rng).as_slice()),
        Target::Sphere => {
            let base = phi.column(0).into_owned();
            let w = tangent_project(&base, &gaussian_vector(n, eps, rng));
            let out = sphere_exp_raw(&base, &w);
            Mat::from_column_slice(n, 1, out.as_slice())
        }
        Target::Group => expm(&gaussian_skew(n, eps, rng)) * &phi,
    };
    let h = cfg.higgs_neighbour_sum(x);
    let delta = cfg.site_local_action(c, &proposal, &h) - cfg.site_local_action(c, &phi, &h);
    let ok = accept(delta, rng);
    if ok {
        cfg.higgs_mut()[x] = proposal;
    }
    ok
}

/// One sweep over every positive edge and then every site, in place.
pub fn metropolis_sweep<R: Rng + ?Sized>(
    cfg: &mut FieldConfiguration,
    c: &Couplings,
    scales: &mut ProposalScales,
    order: SweepOrder,
    rng: &mut R,
) -> Result<SweepStats> {
    c.validate_gibbs()?;
    if c.target != cfg.target() || c.n != cfg.n() {
        return Err(Error::TargetMismatch { expected: c.target.to_string(), found: cfg.target().to_string() });
    }
    let mut stats = SweepStats::default();
    let mut edges: Vec<usize> = (0..cfg.lattice().n_edges()).collect();
    let mut sites: Vec<usize> = (0..cfg.lattice().n_sites()).collect();
    if order == SweepOrder::Shuffled {
        edges.shuffle(rng);
        sites.shuffle(rng);
    }
    for i in edges {
        let force = cfg.edge_force(c, i);
        stats.edges.record(edge_update(cfg, i, &force, scales.edge, rng));
    }
    for x in sites {
        stats.sites.record(site_update(cfg, c, x, scales.site, rng));
    }
    scales.absorb(&stats);
    Ok(stats)
}

/// One sweep of the unitary-gauge link measure, `exp(gauge_fixed_action)`.
/// Higgs values of `cfg` are ignored and left untouched.
pub fn metropolis_sweep_gaugefixed<R: Rng + ?Sized>(
    cfg: &mut FieldConfiguration,
    c: &Couplings,
    scales: &mut ProposalScales,
    order: SweepOrder,
    rng: &mut R,
) -> Result<SweepStats> {
    if c.target != Target::Group || cfg.target() != Target::Group {
        return Err(Error::TargetMismatch { expected: Target::Group.to_string(), found: cfg.target().to_string() });
    }
    let n = cfg.n();
    let nf = n as f64;
    let ym = Couplings { kappa: 0.0, ..*c };
    let mut stats = SweepStats::default();
    let mut edges: Vec<usize> = (0..cfg.lattice().n_edges()).collect();
    if order == SweepOrder::Shuffled {
        edges.shuffle(rng);
    }
    for i in edges {
        let force = cfg.edge_force(&ym, i) + Mat::identity(n, n) * (2.0 * c.kappa * nf);
        stats.edges.record(edge_update(cfg, i, &force, scales.edge, rng));
    }
    scales.absorb(&stats);
    Ok(stats)
}

/// Which measure a Metropolis chain samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ensemble {
    #[default]
    Full,
    GaugeFixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetropolisSettings {
    pub seed: u64,
    pub burn_in: usize,
    pub sweeps: usize,
    pub thinning: usize,
    /// Sweeps between tuning steps during burn-in.
    pub tune_interval: usize,
    pub order: SweepOrder,
    pub ensemble: Ensemble,
}

impl MetropolisSettings {
    pub fn new(sweeps: usize, burn_in: usize, seed: u64) -> Self {
        Self {
            seed,
            burn_in,
            sweeps,
            thinning: 1,
            tune_interval: 20,
            order: SweepOrder::Sequential,
            ensemble: Ensemble::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thinning == 0 || self.tune_interval == 0 {
            return Err(Error::InvalidSettings("thinning and tune interval must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// Measurements after burn-in, one every `thinning` sweeps; `step` counts
    /// measurement sweeps and `time` equals it.
    pub records: Vec<Record>,
    pub final_config: FieldConfiguration,
    pub scales: ProposalScales,
    /// Scales in force during measurement.
    pub tuned_edge: f64,
    pub tuned_site: f64,
}

/// Burn-in with tuning, then frozen-scale measurement sweeps.
pub fn run_metropolis(
    cfg: &FieldConfiguration,
    c: &Couplings,
    mut scales: ProposalScales,
    settings: &MetropolisSettings,
    observers: &[Observer<'_>],
) -> Result<Chain> {
    settings.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut current = cfg.clone();
    let sweep = |cfg: &mut FieldConfiguration, scales: &mut ProposalScales, rng: &mut ChaCha8Rng| {
        match settings.ensemble {
            Ensemble::Full => metropolis_sweep(cfg, c, scales, settings.order, rng),
            Ensemble::GaugeFixed => metropolis_sweep_gaugefixed(cfg, c, scales, settings.order, rng),
        }
    };
    for k in 0..settings.burn_in {
        sweep(&mut current, &mut scales, &mut rng)?;
        if (k + 1) % settings.tune_interval == 0 {
            scales.autotune();
        }
    }
    scales.freeze();
    scales.total = SweepStats::default();
    scales.window = SweepStats::default();
    let (tuned_edge, tuned_site) = (scales.edge, scales.site);
    let mut records = Vec::with_capacity(settings.sweeps / settings.thinning + 1);
    let observe = |cfg: &FieldConfiguration, step: u64| Record {
        step,
        time: step as f64,
        values: observers.iter().map(|f| f(cfg)).collect(),
    };
    for k in 0..settings.sweeps {
        sweep(&mut current, &mut scales, &mut rng)?;
        if (k + 1) % settings.thinning == 0 {
            records.push(observe(&current, k as u64 + 1));
        }
    }
    Ok(Chain { records, final_config: current, scales, tuned_edge, tuned_site })
}
