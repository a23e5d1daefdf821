//! Periodic hypercubic lattice `Z^d ∩ L T^d`.
//!
//! Sites are indexed row-major over their coordinates (coordinate 0 most
//! significant), so index order is lexicographic order. The positive edge
//! `(x, axis)` has index `x * d + axis`.

use std::fmt;

use crate::error::{Error, Result};

/// Site index.
pub type Site = usize;

/// An oriented nearest-neighbour edge starting at `base`.
///
/// `forward == true` points along `+axis`; otherwise the edge runs from
/// `base` to `base - axis` and is the reversal of the positive edge based at
/// `base - axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DirectedEdge {
    pub base: Site,
    pub axis: usize,
    pub forward: bool,
}

impl fmt::Display for DirectedEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.forward { '+' } else { '-' };
        write!(f, "({}, {}{})", self.base, sign, self.axis)
    }
}

/// Closed path of four edges bounding a unit square.
pub type Plaquette = [DirectedEdge; 4];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    d: usize,
    l: usize,
    n_sites: usize,
    strides: Vec<usize>,
    plaquettes: Vec<Plaquette>,
}

impl Lattice {
    pub fn new(d: usize, l: usize) -> Result<Self> {
        if d < 2 || l < 2 {
            return Err(Error::UnsupportedGeometry { d, l });
        }
        let n_sites = l.pow(d as u32);
        let strides = (0..d).map(|i| l.pow((d - 1 - i) as u32)).collect();
        let mut lat = Self {
            d,
            l,
            n_sites,
            strides,
            plaquettes: Vec::new(),
        };
        let mut plaquettes = Vec::with_capacity(d * (d - 1) / 2 * n_sites);
        for x in 0..n_sites {
            for mu in 0..d {
                for nu in (mu + 1)..d {
                    plaquettes.push(lat.plaquette_at(x, mu, nu));
                }
            }
        }
        lat.plaquettes = plaquettes;
        Ok(lat)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> usize {
        self.l
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_edges(&self) -> usize {
        self.d * self.n_sites
    }

    pub fn n_plaquettes(&self) -> usize {
        self.plaquettes.len()
    }

    /// The canonical plaquettes `P+`, one per unoriented square.
    pub fn plaquettes(&self) -> &[Plaquette] {
        &self.plaquettes
    }

    pub fn coords(&self, x: Site) -> Vec<usize> {
        (0..self.d).map(|i| (x / self.strides[i]) % self.l).collect()
    }

    pub fn site(&self, coords: &[usize]) -> Site {
        coords
            .iter()
            .zip(&self.strides)
            .map(|(c, s)| (c % self.l) * s)
            .sum()
    }

    /// Neighbour of `x` one step along `±axis`.
    pub fn shift(&self, x: Site, axis: usize, forward: bool) -> Site {
        let stride = self.strides[axis];
        let c = (x / stride) % self.l;
        let nc = if forward {
            (c + 1) % self.l
        } else {
            (c + self.l - 1) % self.l
        };
        x - c * stride + nc * stride
    }

    /// Translate `x` by integer offsets per axis.
    pub fn translate(&self, x: Site, offset: &[isize]) -> Site {
        let l = self.l as isize;
        let c: Vec<usize> = self
            .coords(x)
            .iter()
            .zip(offset)
            .map(|(&c, &o)| (c as isize + o).rem_euclid(l) as usize)
            .collect();
        self.site(&c)
    }

    /// Positive edges in index order.
    pub fn positive_edges(&self) -> impl Iterator<Item = DirectedEdge> + '_ {
        (0..self.n_edges()).map(move |i| self.positive_edge(i))
    }

    pub fn positive_edge(&self, index: usize) -> DirectedEdge {
        DirectedEdge {
            base: index / self.d,
            axis: index % self.d,
            forward: true,
        }
    }

    pub fn contains_edge(&self, e: &DirectedEdge) -> bool {
        e.base < self.n_sites && e.axis < self.d
    }

    /// Start point `u(e)`.
    pub fn start(&self, e: &DirectedEdge) -> Site {
        e.base
    }

    /// End point `v(e)`.
    pub fn end(&self, e: &DirectedEdge) -> Site {
        self.shift(e.base, e.axis, e.forward)
    }

    pub fn reverse(&self, e: &DirectedEdge) -> DirectedEdge {
        DirectedEdge {
            base: self.end(e),
            axis: e.axis,
            forward: !e.forward,
        }
    }

    /// Index in `E+` of the underlying undirected edge, and whether `e` is
    /// the positive orientation.
    pub fn edge_index(&self, e: &DirectedEdge) -> (usize, bool) {
        if e.forward {
            (e.base * self.d + e.axis, true)
        } else {
            (self.shift(e.base, e.axis, false) * self.d + e.axis, false)
        }
    }

    /// The canonical plaquette at `x` in the `(mu, nu)` plane, `mu < nu`.
    /// It starts at `x` and steps first along `nu`, whose endpoint is the
    /// lexicographically second smallest corner.
    pub fn plaquette_at(&self, x: Site, mu: usize, nu: usize) -> Plaquette {
        let x_nu = self.shift(x, nu, true);
        let x_mu = self.shift(x, mu, true);
        let x_mu_nu = self.shift(x_nu, mu, true);
        [
            DirectedEdge { base: x, axis: nu, forward: true },
            DirectedEdge { base: x_nu, axis: mu, forward: true },
            DirectedEdge { base: x_mu_nu, axis: nu, forward: false },
            DirectedEdge { base: x_mu, axis: mu, forward: false },
        ]
    }

    /// The `2(d-1)` oriented plaquettes whose first edge is `e`.
    pub fn plaquettes_through(&self, e: &DirectedEdge) -> Result<Vec<Plaquette>> {
        if !self.contains_edge(e) {
            return Err(Error::InvalidEdge(e.to_string()));
        }
        let x = e.base;
        let y = self.end(e);
        let mut out = Vec::with_capacity(2 * (self.d - 1));
        for nu in (0..self.d).filter(|&nu| nu != e.axis) {
            for side in [true, false] {
                let y_side = self.shift(y, nu, side);
                let x_side = self.shift(x, nu, side);
                out.push([
                    *e,
                    DirectedEdge { base: y, axis: nu, forward: side },
                    DirectedEdge { base: y_side, axis: e.axis, forward: !e.forward },
                    DirectedEdge { base: x_side, axis: nu, forward: !side },
                ]);
            }
        }
        Ok(out)
    }

    /// The `2d` directed edges leaving `x`.
    pub fn edges_at(&self, x: Site) -> Vec<DirectedEdge> {
        (0..self.d)
            .flat_map(|axis| {
                [true, false].map(|forward| DirectedEdge { base: x, axis, forward })
            })
            .collect()
    }

    fn site_distance(&self, a: Site, b: Site) -> usize {
        let l = self.l;
        self.strides
            .iter()
            .map(|s| {
                let (ca, cb) = ((a / s) % l, (b / s) % l);
                let diff = ca.abs_diff(cb);
                diff.min(l - diff)
            })
            .sum()
    }

    /// Minimum l1 torus distance between two nonempty site sets.
    pub fn torus_distance(&self, a: &[Site], b: &[Site]) -> Result<usize> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidRegion("empty site set".into()));
        }
        if let Some(&bad) = a.iter().chain(b).find(|&&s| s >= self.n_sites) {
            return Err(Error::InvalidRegion(format!("site {bad} out of range")));
        }
        Ok(a.iter()
            .flat_map(|&x| b.iter().map(move |&y| (x, y)))
            .map(|(x, y)| self.site_distance(x, y))
            .min()
            .unwrap_or(0))
    }

    /// Vertices touched by a set of edges, sorted and deduplicated.
    pub fn edge_vertices(&self, edges: &[DirectedEdge]) -> Vec<Site> {
        let mut v: Vec<Site> = edges
            .iter()
            .flat_map(|e| [self.start(e), self.end(e)])
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Straight path of `len` positive steps along `axis` starting at `x`.
    pub fn straight_path(&self, x: Site, axis: usize, len: usize) -> LatticePath {
        let mut edges = Vec::with_capacity(len);
        let mut cur = x;
        for _ in 0..len {
            edges.push(DirectedEdge { base: cur, axis, forward: true });
            cur = self.shift(cur, axis, true);
        }
        LatticePath { edges }
    }

    /// Counter-clockwise `a x b` rectangle in the `(mu, nu)` plane at `x`;
    /// its length is `2(a + b)`.
    pub fn rectangle(&self, x: Site, mu: usize, nu: usize, a: usize, b: usize) -> LatticePath {
        let mut edges = Vec::with_capacity(2 * (a + b));
        let mut cur = x;
        for (axis, forward, n) in [(mu, true, a), (nu, true, b), (mu, false, a), (nu, false, b)] {
            for _ in 0..n {
                edges.push(DirectedEdge { base: cur, axis, forward });
                cur = self.shift(cur, axis, forward);
            }
        }
        LatticePath { edges }
    }
}

/// A chain of edges with `v(e_i) = u(e_{i+1})`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticePath {
    edges: Vec<DirectedEdge>,
}

impl LatticePath {
    pub fn new(lat: &Lattice, edges: Vec<DirectedEdge>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::InvalidRegion("empty path".into()));
        }
        for e in &edges {
            if !lat.contains_edge(e) {
                return Err(Error::InvalidEdge(e.to_string()));
            }
        }
        for (i, w) in edges.windows(2).enumerate() {
            if lat.end(&w[0]) != lat.start(&w[1]) {
                return Err(Error::DisconnectedPath(i + 1));
            }
        }
        Ok(Self { edges })
    }

    pub fn from_plaquette(p: &Plaquette) -> Self {
        Self { edges: p.to_vec() }
    }

    pub fn edges(&self) -> &[DirectedEdge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn is_closed(&self, lat: &Lattice) -> bool {
        match (self.edges.first(), self.edges.last()) {
            (Some(first), Some(last)) => lat.end(last) == lat.start(first),
            _ => false,
        }
    }

    pub fn reversed(&self, lat: &Lattice) -> Self {
        Self {
            edges: self.edges.iter().rev().map(|e| lat.reverse(e)).collect(),
        }
    }

    /// Cyclic rotation by `k` positions (meaningful for loops).
    pub fn rotated(&self, k: usize) -> Self {
        let mut edges = self.edges.clone();
        edges.rotate_left(k % self.edges.len());
        Self { edges }
    }

    pub fn vertices(&self, lat: &Lattice) -> Vec<Site> {
        lat.edge_vertices(&self.edges)
    }

    /// The same path translated by integer offsets.
    pub fn translated(&self, lat: &Lattice, offset: &[isize]) -> Self {
        Self {
            edges: self
                .edges
                .iter()
                .map(|e| DirectedEdge { base: lat.translate(e.base, offset), ..*e })
                .collect(),
        }
    }
}
