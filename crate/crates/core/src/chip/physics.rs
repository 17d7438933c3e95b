use std::f64::consts::FRAC_PI_4;

use log::warn;
use serde::Serialize;

use super::config::{Channel, ChipConfig, SourceSpec, TunableCouplerSpec, WdmCouplerSpec};
use crate::quantum::PairNumberDistribution;
use crate::units::{db_to_linear, linear_to_db};
use crate::{Error, Result};

/// Heralded single-photon spectral purity for pump bandwidth `σ_p` and
/// filter bandwidth `σ_f` (same units):
/// `P = √(1 − (σ_f² / (σ_p² + σ_f²))²)`.
pub fn spectral_purity(pump_bandwidth: f64, filter_bandwidth: f64) -> Result<f64> {
    if !(pump_bandwidth > 0.0) || !(filter_bandwidth > 0.0) {
        return Err(Error::domain(format!(
            "bandwidths must be positive (pump {pump_bandwidth}, filter {filter_bandwidth})"
        )));
    }
    let sf2 = filter_bandwidth * filter_bandwidth;
    let ratio = sf2 / (pump_bandwidth * pump_bandwidth + sf2);
    Ok((1.0 - ratio * ratio).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PurityEstimate {
    pub purity: f64,
    /// The raw `g² − 1` fell outside [0, 1] and was clamped.
    pub clamped: bool,
}

/// Largest g²(0) accepted as measurement overshoot above the thermal value.
const G2_OVERSHOOT_LIMIT: f64 = 2.2;

/// Purity of the unheralded arm from its autocorrelation: `P = g²(0) − 1`.
pub fn purity_from_g2(g2: f64) -> Result<PurityEstimate> {
    if !(g2 >= 1.0) {
        return Err(Error::domain(format!("g2(0) = {g2} is below 1")));
    }
    if g2 > G2_OVERSHOOT_LIMIT {
        return Err(Error::domain(format!(
            "g2(0) = {g2} exceeds the tolerated overshoot {G2_OVERSHOOT_LIMIT}"
        )));
    }
    let raw = g2 - 1.0;
    if raw > 1.0 {
        warn!("g2(0) = {g2} above the single-mode thermal value; purity clamped to 1");
        return Ok(PurityEstimate {
            purity: 1.0,
            clamped: true,
        });
    }
    Ok(PurityEstimate {
        purity: raw,
        clamped: false,
    })
}

/// Effective number of Schmidt modes, `K = 1/P`.
pub fn schmidt_modes_from_purity(purity: f64) -> Result<f64> {
    if !(purity > 0.0 && purity <= 1.0) {
        return Err(Error::domain(format!("purity {purity} outside (0, 1]")));
    }
    Ok(1.0 / purity)
}

/// Mean pairs per pulse in the detection band. The override wins when set.
pub fn mean_pairs_per_pulse(src: &SourceSpec, collected_fraction: f64) -> Result<f64> {
    if let Some(n) = src.mean_pairs_override {
        return Ok(n);
    }
    if !(0.0..=1.0).contains(&collected_fraction) {
        return Err(Error::domain(format!(
            "collected fraction {collected_fraction} outside [0, 1]"
        )));
    }
    if !(src.rep_rate_hz > 0.0) {
        return Err(Error::domain("repetition rate must be positive"));
    }
    Ok(src.brightness_pairs_per_mw_s * src.pump_power_mw * collected_fraction / src.rep_rate_hz)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplerRatio {
    pub bar: f64,
    pub cross: f64,
    pub excess_loss_db: f64,
}

fn coupler_angle(spec: &TunableCouplerSpec, voltage: f64) -> f64 {
    FRAC_PI_4 * (voltage - spec.v_bar) / (spec.v_half - spec.v_bar)
}

/// C3 split at its calibration wavelength:
/// `cross = sin²((π/4)·(V − v_bar)/(v_half − v_bar))`.
pub fn coupler_ratio_from_voltage(spec: &TunableCouplerSpec, voltage: f64) -> CouplerRatio {
    ratio_for_angle(spec, coupler_angle(spec, voltage))
}

fn ratio_for_angle(spec: &TunableCouplerSpec, angle: f64) -> CouplerRatio {
    let s = angle.sin();
    let cross = s * s;
    CouplerRatio {
        bar: 1.0 - cross,
        cross,
        excess_loss_db: spec.excess_loss_db * (cross / 0.5).min(1.0),
    }
}

/// Coupling strength at `wavelength_nm` relative to 1560 nm. The transfer
/// length grows linearly towards shorter wavelengths and doubles at 1310 nm.
pub fn coupler_transfer_scale(wavelength_nm: f64) -> f64 {
    let relative_length = 1.0 + (1560.0 - wavelength_nm) / 250.0;
    1.0 / relative_length.max(0.1)
}

/// C3 split for light at `wavelength_nm` (the voltage calibration is taken
/// at 1560 nm).
pub fn coupler_ratio_at_wavelength(
    spec: &TunableCouplerSpec,
    voltage: f64,
    wavelength_nm: f64,
) -> CouplerRatio {
    ratio_for_angle(
        spec,
        coupler_angle(spec, voltage) * coupler_transfer_scale(wavelength_nm),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RouteProbabilities {
    pub intended: f64,
    pub crosstalk: f64,
    pub lost: f64,
}

/// Demultiplexer fate of a photon: intended output after the pass loss,
/// crosstalk suppressed by the isolation relative to the intended output,
/// and the remainder lost.
pub fn wdm_route_probabilities(
    spec: &WdmCouplerSpec,
    wavelength_nm: f64,
) -> Result<RouteProbabilities> {
    let route = spec.route(wavelength_nm)?;
    let mut intended = db_to_linear(route.pass_loss_db);
    let mut crosstalk = intended * db_to_linear(route.isolation_db);
    // Near-lossless entries with poor isolation cannot exceed unit probability.
    let routed = intended + crosstalk;
    if routed > 1.0 {
        intended /= routed;
        crosstalk /= routed;
    }
    Ok(RouteProbabilities {
        intended,
        crosstalk,
        lost: (1.0 - intended - crosstalk).max(0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBudget {
    pub db: f64,
    pub linear: f64,
}

impl LossBudget {
    pub fn from_db(db: f64) -> Self {
        LossBudget {
            db,
            linear: db_to_linear(db),
        }
    }

    pub fn from_linear(linear: f64) -> Self {
        LossBudget {
            db: linear_to_db(linear),
            linear,
        }
    }
}

/// Source-to-detector loss of a channel: demultiplexer pass loss, facet
/// coupling and filter insertion loss.
pub fn channel_loss_budget(cfg: &ChipConfig, channel: Channel) -> Result<LossBudget> {
    let source = channel.source();
    let src = &cfg.sources[source];
    let wavelength = if channel.is_herald() {
        src.signal_wavelength_nm
    } else {
        src.idler_wavelength_nm
    };
    let pass = cfg.wdm[source].route(wavelength)?.pass_loss_db;
    let db = pass + cfg.coupling_loss_db + cfg.filters.get(channel).insertion_loss_db;
    Ok(LossBudget::from_db(db))
}

/// Expected four-fold count with both sources heralded and the coupler in
/// the bar state: `R · n̄² · μ1·μ2·μ3·μ4 · η⁴ · T`.
pub fn fourfold_rate(
    rep_rate_hz: f64,
    mean_pairs: f64,
    transmissions: [f64; 4],
    efficiency: f64,
    duration_s: f64,
) -> f64 {
    rep_rate_hz
        * mean_pairs.powi(2)
        * transmissions.iter().product::<f64>()
        * efficiency.powi(4)
        * duration_s
}

/// Rate of simultaneous H1 ∧ H2 detections, Hz.
pub fn herald_pair_rate(
    rep_rate_hz: f64,
    mean_pairs: f64,
    mu_h1: f64,
    mu_h2: f64,
    efficiency: f64,
) -> f64 {
    rep_rate_hz * mean_pairs.powi(2) * mu_h1 * mu_h2 * efficiency.powi(2)
}

impl ChipConfig {
    pub fn mean_pairs(&self, source: usize) -> f64 {
        let src = &self.sources[source];
        mean_pairs_per_pulse(src, src.collected_fraction).expect("validated source")
    }

    /// Idler filter bandwidth seen by `source`, GHz.
    pub fn idler_bandwidth_ghz(&self, source: usize) -> f64 {
        self.filters.get(Channel::arm(source)).bandwidth_ghz
    }

    pub fn source_purity(&self, source: usize) -> f64 {
        let src = &self.sources[source];
        src.purity_override.unwrap_or_else(|| {
            spectral_purity(src.pump_bandwidth_ghz, self.idler_bandwidth_ghz(source))
                .expect("validated bandwidths")
        })
    }

    pub fn pair_distribution(&self, source: usize) -> PairNumberDistribution {
        let k = schmidt_modes_from_purity(self.source_purity(source)).expect("validated purity");
        PairNumberDistribution::new(self.mean_pairs(source), k).expect("validated mean")
    }

    pub fn coupler_ratio(&self) -> CouplerRatio {
        coupler_ratio_from_voltage(&self.tunable_coupler, self.voltage_v)
    }
}
