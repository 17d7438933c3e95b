//! Digital twin of a monolithic lithium-niobate chip producing heralded
//! two-photon path states.
//!
//! The crate is layered bottom-up:
//!
//! * [`quantum`] is an exact few-photon linear-optics engine (unitaries,
//!   permanents, Fock-state output distributions, partial
//!   distinguishability, loss and multipair pair-number statistics).
//! * [`chip`] holds the chip parameterization ([`chip::ChipConfig`]) and
//!   the closed-form physics: purity, coupler calibration, demultiplexer
//!   routing, loss budgets and the four-fold rate budget.
//! * [`montecarlo`] simulates the experiment pulse by pulse and produces
//!   time-tag streams.
//! * [`analysis`] turns tag streams into observables: n-fold coincidences,
//!   pulse-offset histograms, g²(0), HOM scans and sinc² fits.

pub mod analysis;
pub mod chip;
mod error;
pub mod montecarlo;
pub mod quantum;
pub mod units;

pub use error::{Error, Result};
