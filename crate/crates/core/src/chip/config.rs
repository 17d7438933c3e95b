use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::quantum::DEFAULT_PHOTON_CAP;
use crate::units::wavelength_nm_to_ghz;
use crate::{Error, Result};

/// The bundled configuration reproducing the measured device.
pub const PAPER_DEFAULT_JSON: &str = include_str!("../../configs/paper-default.json");

/// Detector channel. The numeric code is the on-disk channel byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    H1,
    S1,
    S2,
    H2,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::H1, Channel::S1, Channel::S2, Channel::H2];

    pub fn code(self) -> u8 {
        match self {
            Channel::H1 => 0,
            Channel::S1 => 1,
            Channel::S2 => 2,
            Channel::H2 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Channel> {
        Channel::ALL.get(code as usize).copied()
    }

    pub fn index(self) -> usize {
        self.code() as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::H1 => "H1",
            Channel::S1 => "S1",
            Channel::S2 => "S2",
            Channel::H2 => "H2",
        }
    }

    /// Source feeding this output when routing is ideal (0 or 1).
    pub fn source(self) -> usize {
        match self {
            Channel::H1 | Channel::S1 => 0,
            Channel::S2 | Channel::H2 => 1,
        }
    }

    pub fn is_herald(self) -> bool {
        matches!(self, Channel::H1 | Channel::H2)
    }

    pub fn herald(source: usize) -> Channel {
        if source == 0 {
            Channel::H1
        } else {
            Channel::H2
        }
    }

    /// C3 input/output arm `arm` (0 → S1, 1 → S2).
    pub fn arm(arm: usize) -> Channel {
        if arm == 0 {
            Channel::S1
        } else {
            Channel::S2
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "H1" => Ok(Channel::H1),
            "S1" => Ok(Channel::S1),
            "S2" => Ok(Channel::S2),
            "H2" => Ok(Channel::H2),
            other => Err(Error::domain(format!("unknown channel {other:?}"))),
        }
    }
}

/// One value per detector channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerChannel<T> {
    #[serde(rename = "H1")]
    pub h1: T,
    #[serde(rename = "S1")]
    pub s1: T,
    #[serde(rename = "S2")]
    pub s2: T,
    #[serde(rename = "H2")]
    pub h2: T,
}

impl<T> PerChannel<T> {
    pub fn get(&self, channel: Channel) -> &T {
        match channel {
            Channel::H1 => &self.h1,
            Channel::S1 => &self.s1,
            Channel::S2 => &self.s2,
            Channel::H2 => &self.h2,
        }
    }

    pub fn get_mut(&mut self, channel: Channel) -> &mut T {
        match channel {
            Channel::H1 => &mut self.h1,
            Channel::S1 => &mut self.s1,
            Channel::S2 => &mut self.s2,
            Channel::H2 => &mut self.h2,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Channel, &T)> {
        Channel::ALL.into_iter().map(move |c| (c, self.get(c)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    /// Pairs per mW of pump per second, full emission band.
    pub brightness_pairs_per_mw_s: f64,
    pub pump_power_mw: f64,
    pub rep_rate_hz: f64,
    pub pump_bandwidth_ghz: f64,
    pub signal_wavelength_nm: f64,
    pub idler_wavelength_nm: f64,
    /// Metadata only.
    pub poling_period_um: f64,
    /// Spectral width of the emission around each nominal wavelength, nm.
    pub emission_bandwidth_nm: f64,
    /// Fraction of emitted pairs landing in the filtered detection band.
    pub collected_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_pairs_override: Option<f64>,
    /// Heralded-photon spectral purity; derived from the pump and idler
    /// filter bandwidths when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purity_override: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub center_wavelength_nm: f64,
    pub bandwidth_ghz: f64,
    pub insertion_loss_db: f64,
}

impl FilterSpec {
    /// Rectangular passband of full width `bandwidth_ghz` around the center.
    pub fn passes(&self, wavelength_nm: f64) -> bool {
        let detuning =
            wavelength_nm_to_ghz(wavelength_nm) - wavelength_nm_to_ghz(self.center_wavelength_nm);
        detuning.abs() <= 0.5 * self.bandwidth_ghz
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WdmRoute {
    pub wavelength_nm: f64,
    pub pass_loss_db: f64,
    pub isolation_db: f64,
}

/// Demultiplexer performance, one route entry per wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WdmCouplerSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub routes: Vec<WdmRoute>,
}

impl WdmCouplerSpec {
    /// Route entry within 1 nm of `wavelength_nm`.
    pub fn route(&self, wavelength_nm: f64) -> Result<&WdmRoute> {
        self.routes
            .iter()
            .find(|r| (r.wavelength_nm - wavelength_nm).abs() <= 1.0)
            .ok_or_else(|| Error::domain(format!("no demultiplexer data at {wavelength_nm} nm")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunableCouplerSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    /// Drive voltage giving 100:0 (bar).
    pub v_bar: f64,
    /// Drive voltage giving 50:50.
    pub v_half: f64,
    /// Extra loss at 50:50, dB; scales linearly with the cross fraction.
    pub excess_loss_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    pub time_resolution_ps: u64,
}

fn default_photon_cap() -> usize {
    DEFAULT_PHOTON_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChipConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub sources: [SourceSpec; 2],
    pub filters: PerChannel<FilterSpec>,
    /// C1 (source 1) and C2 (source 2).
    pub wdm: [WdmCouplerSpec; 2],
    pub tunable_coupler: TunableCouplerSpec,
    pub detectors: PerChannel<DetectorSpec>,
    /// Chip-to-fibre loss per output facet, dB.
    pub coupling_loss_db: f64,
    pub voltage_v: f64,
    /// Delay of the S2 idler relative to the S1 idler, ps.
    pub relative_delay_ps: f64,
    pub coincidence_window_ps: f64,
    /// Give every photon its own internal label (no interference).
    #[serde(default)]
    pub force_distinguishable: bool,
    /// Photon-number cap at C3.
    #[serde(default = "default_photon_cap")]
    pub photon_cap: usize,
}

impl ChipConfig {
    pub fn paper_default() -> Self {
        Self::from_json(PAPER_DEFAULT_JSON).expect("bundled configuration is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ChipConfig =
            serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON serialization.
    pub fn sha256(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).into()
    }

    pub fn rep_rate_hz(&self) -> f64 {
        self.sources[0].rep_rate_hz
    }

    /// Pump repetition period in ps.
    pub fn period_ps(&self) -> f64 {
        1e12 / self.rep_rate_hz()
    }

    pub fn time_resolution_ps(&self) -> u64 {
        Channel::ALL
            .iter()
            .map(|&c| self.detectors.get(c).time_resolution_ps)
            .max()
            .unwrap_or(1)
            .max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v >= 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be ≥ 0, got {v}")))
            }
        };
        for (i, s) in self.sources.iter().enumerate() {
            let p = |f: &str| format!("sources[{i}].{f}");
            positive(&p("brightness_pairs_per_mw_s"), s.brightness_pairs_per_mw_s)?;
            non_negative(&p("pump_power_mw"), s.pump_power_mw)?;
            positive(&p("rep_rate_hz"), s.rep_rate_hz)?;
            positive(&p("pump_bandwidth_ghz"), s.pump_bandwidth_ghz)?;
            positive(&p("signal_wavelength_nm"), s.signal_wavelength_nm)?;
            positive(&p("idler_wavelength_nm"), s.idler_wavelength_nm)?;
            positive(&p("poling_period_um"), s.poling_period_um)?;
            non_negative(&p("emission_bandwidth_nm"), s.emission_bandwidth_nm)?;
            if !(0.0..=1.0).contains(&s.collected_fraction) {
                return Err(Error::config(format!(
                    "{} must lie in [0, 1]",
                    p("collected_fraction")
                )));
            }
            if let Some(n) = s.mean_pairs_override {
                if !(n >= 0.0 && n.is_finite()) {
                    return Err(Error::config(format!(
                        "{} must be ≥ 0",
                        p("mean_pairs_override")
                    )));
                }
            }
            if let Some(purity) = s.purity_override {
                if !(purity > 0.0 && purity <= 1.0) {
                    return Err(Error::config(format!(
                        "{} must lie in (0, 1]",
                        p("purity_override")
                    )));
                }
            }
        }
        if self.sources[0].rep_rate_hz != self.sources[1].rep_rate_hz {
            return Err(Error::config(
                "both sources share one pump: rep_rate_hz must match",
            ));
        }
        for (c, f) in self.filters.iter() {
            positive(
                &format!("filters.{c}.center_wavelength_nm"),
                f.center_wavelength_nm,
            )?;
            positive(&format!("filters.{c}.bandwidth_ghz"), f.bandwidth_ghz)?;
            non_negative(
                &format!("filters.{c}.insertion_loss_db"),
                f.insertion_loss_db,
            )?;
        }
        for (i, w) in self.wdm.iter().enumerate() {
            for r in &w.routes {
                non_negative(&format!("wdm[{i}].pass_loss_db"), r.pass_loss_db)?;
                positive(&format!("wdm[{i}].isolation_db"), r.isolation_db)?;
            }
            let src = &self.sources[i];
            w.route(src.signal_wavelength_nm)
                .and_then(|_| w.route(src.idler_wavelength_nm))
                .map_err(|e| Error::config(format!("wdm[{i}]: {e}")))?;
        }
        let tc = &self.tunable_coupler;
        if tc.v_half == tc.v_bar || !tc.v_half.is_finite() || !tc.v_bar.is_finite() {
            return Err(Error::config(
                "tunable_coupler.v_half must differ from v_bar",
            ));
        }
        non_negative("tunable_coupler.excess_loss_db", tc.excess_loss_db)?;
        for (c, d) in self.detectors.iter() {
            if !(0.0..=1.0).contains(&d.efficiency) {
                return Err(Error::config(format!(
                    "detectors.{c}.efficiency must lie in [0, 1]"
                )));
            }
            non_negative(&format!("detectors.{c}.dark_rate_hz"), d.dark_rate_hz)?;
            if d.time_resolution_ps == 0 {
                return Err(Error::config(format!(
                    "detectors.{c}.time_resolution_ps must be ≥ 1"
                )));
            }
        }
        non_negative("coupling_loss_db", self.coupling_loss_db)?;
        if !self.voltage_v.is_finite() || !self.relative_delay_ps.is_finite() {
            return Err(Error::config(
                "voltage_v and relative_delay_ps must be finite",
            ));
        }
        positive("coincidence_window_ps", self.coincidence_window_ps)?;
        if self.coincidence_window_ps >= 0.5 * self.period_ps() {
            return Err(Error::config(
                "coincidence window must be shorter than half the pulse period",
            ));
        }
        if self.photon_cap < 2 || self.photon_cap > 8 {
            return Err(Error::config("photon_cap must lie in [2, 8]"));
        }
        Ok(())
    }
}
