//! Lattice Yang-Mills-Higgs models with SO(N) gauge group.
//!
//! Links live on the positive edges of a periodic cubic lattice, the Higgs
//! field on its sites, with values in R^N, the unit sphere, or SO(N).

pub mod bounds;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod lattice;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod snapshot;

pub use error::{Error, Result};
pub use geometry::{AlgebraElement, GroupElement, Mat, SpherePoint, Vector};
pub use lattice::{DirectedEdge, Lattice, LatticePath, Plaquette, Site};
pub use model::{Couplings, FieldConfiguration, Target, TangentVector};
