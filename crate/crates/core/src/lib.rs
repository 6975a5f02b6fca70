//! Augmentation-graph simulator for contrastive pre-training under domain
//! shift.
//!
//! The crate builds finite augmentation graphs (a 4-node toy, an 8-node
//! cycle, and stochastic block models), computes their spectral contrastive
//! embeddings exactly, fits ridge probes on source labels and measures how
//! the probes transfer to the unlabeled domains.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod numfmt;
pub mod probe;
pub mod sbm;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use graph::{
    AugmentationKernel, NodeLabel, PairGraph, PairParams, SeparationKernelParams,
    SeparationPairParams, ToyKernelParams,
};
pub use probe::ProbeWeights;
pub use sbm::{SampledGraph, SbmParams, SbmSpectrum};
pub use spectral::{EigenSystem, SpectralEmbedding};
