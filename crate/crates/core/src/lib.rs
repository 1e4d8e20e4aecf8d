//! Structural alignment of two object-representation spaces.
//!
//! Builds representational dissimilarity matrices (RDMs) from embeddings,
//! compares them with conventional RSA, and aligns them without any object
//! correspondence using entropic Gromov-Wasserstein optimal transport. The
//! resulting transport plans are scored by fine-grained (object) and
//! coarse-grained (category) matching rates against Monte Carlo chance levels.
//! Supporting pieces: an epsilon sweep with random restarts, a nonnegative
//! triplet-embedding learner for odd-one-out judgments, and Ward clustering
//! scored by adjusted mutual information.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the
//! `*F64` / `*F32` aliases below name the concrete instantiations. All file
//! formats are `f64`.

pub mod cli;
pub mod cluster;
pub mod dataset;
pub mod error;
pub mod gw;
pub mod metrics;
pub mod rdm;
pub mod scalar;
pub mod spose;
pub mod sweep;

pub use error::{Error, Result};
pub use scalar::Real;

pub use dataset::{CategoryMap, EmbeddingSet, Triplet, TripletSet};
pub use gw::{SinkhornOptions, SolveOptions, SolveResult, TransportPlan};
pub use metrics::{CategoryLabels, ChanceReport, ChanceStats, Correspondence};
pub use rdm::{Measure, Rdm};
pub use sweep::{SamplerKind, SelectionCriterion, SweepConfig, TrialRecord};


pub type EmbeddingSetF64 = EmbeddingSet<f64>;
pub type EmbeddingSetF32 = EmbeddingSet<f32>;
pub type RdmF64 = Rdm<f64>;
pub type RdmF32 = Rdm<f32>;
pub type TransportPlanF64 = TransportPlan<f64>;
pub type TransportPlanF32 = TransportPlan<f32>;
pub type SolveResultF64 = SolveResult<f64>;
pub type SolveResultF32 = SolveResult<f32>;




pub type SposeModelF64 = spose::SposeModel<f64>;
pub type SposeModelF32 = spose::SposeModel<f32>;
pub type DendrogramF64 = cluster::Dendrogram<f64>;
pub type DendrogramF32 = cluster::Dendrogram<f32>;
