//! Exact few-photon linear optics.
//!
//! Mode amplitudes transform as `a†_j → Σ_i U[i][j] a†_i`, so column `j` of a
//! [`LinearUnitary`] is the image of input mode `j`. Output probabilities of
//! Fock inputs are computed from permanents of sub-matrices of `U`.

mod fock;
mod hom;
mod permanent;
mod source;
mod unitary;

pub use fock::{
    enumerate_occupations, multilabel_distribution, multilabel_distribution_with_cap,
    output_distribution, output_distribution_with_cap, FockDistribution, FockOccupation,
    InternalLabel, DEFAULT_PHOTON_CAP,
};
pub use hom::{hom_coincidence_prob, overlap_vs_delay};
pub use permanent::{permanent, permanent_with_cap, DEFAULT_PERMANENT_CAP};
pub use source::{loss_thin, sample_pair_count, PairNumberDistribution};
pub use unitary::{beamsplitter_unitary, embed_unitary, LinearUnitary, UNITARITY_TOLERANCE};
