//! Parameterization and closed-form physics of the two-source chip.
//!
//! Region I holds two pair sources, region II the wavelength demultiplexers
//! C1/C2 that send signal photons (1310 nm) to the outer heralding outputs
//! H1/H2 and idler photons (1560 nm) to the inner outputs S1/S2, and region
//! III the voltage-tuned coupler C3 where the two idlers interfere.

mod config;
mod physics;

pub use config::{
    Channel, ChipConfig, DetectorSpec, FilterSpec, PerChannel, SourceSpec, TunableCouplerSpec,
    WdmCouplerSpec, WdmRoute, PAPER_DEFAULT_JSON,
};
pub use physics::{
    channel_loss_budget, coupler_ratio_at_wavelength, coupler_ratio_from_voltage,
    coupler_transfer_scale, fourfold_rate, herald_pair_rate, mean_pairs_per_pulse, purity_from_g2,
    schmidt_modes_from_purity, spectral_purity, wdm_route_probabilities, CouplerRatio, LossBudget,
    PurityEstimate, RouteProbabilities,
};
