//! Observables from tag streams: coincidences, offset histograms, g²(0),
//! HOM scans and dip fits.

mod coincidence;
mod fit;
mod stream;

pub use coincidence::{
    accidental_estimate, count_nfold, fourfold_histogram, g2_from_counts, g2_hbt, CoincidenceSpec,
    G2Estimate, OffsetBin, DEFAULT_WINDOW_PS,
};
pub use fit::{
    corrected_visibility, dip_width, dip_width_for_bandwidth, fit_sinc2, fit_sinc2_points,
    sinc2_dip, visibility, DipWidth, FitOptions, FitResult, ScanPoint, ScanResult,
};
pub use stream::{ChannelCounter, ClusterFilter};
