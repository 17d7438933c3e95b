//! Single-pulse physics: pair emission, demultiplexing, loss, two-photon
//! interference at C3 and threshold detection.

use std::collections::BTreeMap;

use rand::Rng;

use crate::chip::{
    coupler_ratio_at_wavelength, wdm_route_probabilities, Channel, ChipConfig, FilterSpec,
};
use crate::montecarlo::tags::{sort_tags, TimeTag};
use crate::quantum::{
    beamsplitter_unitary, output_distribution_with_cap, FockOccupation, PairNumberDistribution,
};
use crate::units::{db_to_linear, sinc};
use crate::Result;

/// Where a photon ends up after demultiplexing and loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Fate {
    Lost,
    /// Reaches its source's herald detector and clicks it.
    Herald,
    /// Reaches C3 in its source's arm.
    Coupler,
}

const FATES: [Fate; 3] = [Fate::Lost, Fate::Herald, Fate::Coupler];

/// Fate probabilities of one photon of a pair.
#[derive(Debug, Clone, Copy)]
struct PhotonRoute {
    herald: f64,
    coupler: f64,
    /// C3 photon class for `Fate::Coupler`.
    class: Option<usize>,
}

impl PhotonRoute {
    const ABSENT: PhotonRoute = PhotonRoute {
        herald: 0.0,
        coupler: 0.0,
        class: None,
    };

    fn prob(&self, fate: Fate) -> f64 {
        match fate {
            Fate::Lost => (1.0 - self.herald - self.coupler).max(0.0),
            Fate::Herald => self.herald,
            Fate::Coupler => self.coupler,
        }
    }
}

/// A population of pairs from one source with a common spectral origin.
/// A source normally has one; detuning a filter away from the nominal
/// wavelength adds an independent population feeding that filter.
#[derive(Debug, Clone)]
pub struct Emitter {
    pub source: usize,
    pub pairs: PairNumberDistribution,
    /// Pairs with at least one photon that can still reach a detector.
    pub visible: PairNumberDistribution,
    pub visible_fraction: f64,
    signal: PhotonRoute,
    idler: PhotonRoute,
    /// Joint (signal, idler) fates with cumulative probability.
    joint: Vec<(Fate, Fate, f64)>,
    /// Same, conditioned on the pair being visible.
    joint_visible: Vec<(Fate, Fate, f64)>,
}

impl Emitter {
    fn new(
        source: usize,
        pairs: PairNumberDistribution,
        signal: PhotonRoute,
        idler: PhotonRoute,
    ) -> Self {
        let mut joint = Vec::with_capacity(9);
        let mut joint_visible = Vec::with_capacity(8);
        let mut cum = 0.0;
        let mut visible_weights = Vec::with_capacity(8);
        for s in FATES {
            for i in FATES {
                let p = signal.prob(s) * idler.prob(i);
                cum += p;
                joint.push((s, i, cum));
                if !(s == Fate::Lost && i == Fate::Lost) {
                    visible_weights.push((s, i, p));
                }
            }
        }
        let visible_fraction: f64 = visible_weights.iter().map(|w| w.2).sum();
        let mut cum = 0.0;
        for (s, i, p) in visible_weights {
            if p > 0.0 {
                cum += p / visible_fraction;
                joint_visible.push((s, i, cum));
            }
        }
        Emitter {
            source,
            pairs,
            visible: pairs.thinned(visible_fraction),
            visible_fraction,
            signal,
            idler,
            joint,
            joint_visible,
        }
    }

    fn pick(table: &[(Fate, Fate, f64)], u: f64) -> (Fate, Fate) {
        table
            .iter()
            .find(|e| u < e.2)
            .or(table.last())
            .map(|e| (e.0, e.1))
            .unwrap_or((Fate::Lost, Fate::Lost))
    }
}

/// Photons entering C3 at one wavelength: shared unitary, loss and
/// precomputed output laws.
#[derive(Debug, Clone)]
struct CouplerClass {
    wavelength_nm: f64,
    /// Loss common to both outputs, applied before C3 (uniform loss
    /// commutes with the coupler).
    pre: f64,
    /// Remaining per-output survival after C3.
    residual: [f64; 2],
    /// Output (arm 0, arm 1) occupations with cumulative probability,
    /// indexed by `a * (cap + 1) + b` for input `(a, b)`.
    tables: Vec<Vec<([u32; 2], f64)>>,
}

/// Result of one simulated pulse.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PulseOutcome {
    pub tags: Vec<TimeTag>,
    /// Photon number at C3 exceeded the cap; the pulse produced no tags.
    pub truncated: bool,
    /// Pairs with at least one photon surviving towards a detector.
    pub visible_pairs: u32,
}

impl PulseOutcome {
    /// All four channels clicked from photons of this pulse.
    pub fn is_fourfold(&self) -> bool {
        let mut seen = [false; 4];
        for t in &self.tags {
            seen[t.channel.index()] = true;
        }
        seen.iter().all(|&s| s)
    }
}

/// Per-configuration kinematics shared by every pulse of a run.
#[derive(Debug, Clone)]
pub struct PulseSimulator {
    emitters: Vec<Emitter>,
    classes: Vec<CouplerClass>,
    coherence: f64,
    period_num: u128,
    period_den: u128,
    resolution_ps: u64,
    cap: usize,
}

fn filter_transmission(filter: &FilterSpec, wavelength_nm: f64) -> f64 {
    if filter.passes(wavelength_nm) {
        db_to_linear(filter.insertion_loss_db)
    } else {
        0.0
    }
}

/// Independent pulses per second → ps per pulse as an exact ratio.
fn period_ratio(rep_rate_hz: f64) -> (u128, u128) {
    let millihertz = (rep_rate_hz * 1e3).round().max(1.0) as u128;
    (1_000_000_000_000_000u128, millihertz)
}

struct ClassBuilder<'a> {
    cfg: &'a ChipConfig,
    coupling: f64,
    classes: Vec<CouplerClass>,
}

impl ClassBuilder<'_> {
    /// Class index for photons entering C3 at `wavelength_nm`, or `None` if
    /// they can never be detected behind it.
    fn class_for(&mut self, wavelength_nm: f64) -> Result<Option<usize>> {
        if let Some(i) = self
            .classes
            .iter()
            .position(|c| c.wavelength_nm == wavelength_nm)
        {
            return Ok(Some(i));
        }
        let cfg = self.cfg;
        let post: [f64; 2] = [0, 1].map(|arm| {
            let ch = Channel::arm(arm);
            self.coupling
                * filter_transmission(cfg.filters.get(ch), wavelength_nm)
                * cfg.detectors.get(ch).efficiency
        });
        let pre = post[0].min(post[1]);
        if pre <= 0.0 {
            return Ok(None);
        }
        let cap = cfg.photon_cap;
        let ratio = coupler_ratio_at_wavelength(&cfg.tunable_coupler, cfg.voltage_v, wavelength_nm);
        let excess = db_to_linear(ratio.excess_loss_db);
        let u = beamsplitter_unitary(ratio.cross.clamp(0.0, 1.0), 0.0)?;
        let mut tables = vec![Vec::new(); (cap + 1) * (cap + 1)];
        for a in 0..=cap {
            for b in 0..=(cap - a) {
                let input = FockOccupation::new(vec![a as u32, b as u32]);
                let mut cum = 0.0;
                tables[a * (cap + 1) + b] = output_distribution_with_cap(&u, &input, cap)?
                    .into_iter()
                    .filter(|(_, p)| *p > 0.0)
                    .map(|(occ, p)| {
                        cum += p;
                        ([occ.count(0), occ.count(1)], cum)
                    })
                    .collect();
            }
        }
        self.classes.push(CouplerClass {
            wavelength_nm,
            pre,
            residual: [post[0] / pre * excess, post[1] / pre * excess],
            tables,
        });
        Ok(Some(self.classes.len() - 1))
    }

    /// Fate law of a photon at `wavelength_nm` that the WDM sends towards
    /// the herald with probability `to_herald` and towards C3 with
    /// probability `to_coupler`.
    fn route(
        &mut self,
        source: usize,
        wavelength_nm: f64,
        to_herald: f64,
        to_coupler: f64,
    ) -> Result<PhotonRoute> {
        let class = self.class_for(wavelength_nm)?;
        let herald = Channel::herald(source);
        Ok(PhotonRoute {
            herald: to_herald
                * self.coupling
                * filter_transmission(self.cfg.filters.get(herald), wavelength_nm)
                * self.cfg.detectors.get(herald).efficiency,
            coupler: class.map_or(0.0, |c| to_coupler * self.classes[c].pre),
            class,
        })
    }
}

impl PulseSimulator {
    pub fn new(cfg: &ChipConfig) -> Result<Self> {
        cfg.validate()?;
        let mut builder = ClassBuilder {
            cfg,
            coupling: db_to_linear(cfg.coupling_loss_db),
            classes: Vec::new(),
        };

        let mut emitters = Vec::new();
        for s in 0..2 {
            let src = &cfg.sources[s];
            let herald_filter = cfg.filters.get(Channel::herald(s));
            let arm_filter = cfg.filters.get(Channel::arm(s));
            let route_sig = wdm_route_probabilities(&cfg.wdm[s], src.signal_wavelength_nm)?;
            let route_idl = wdm_route_probabilities(&cfg.wdm[s], src.idler_wavelength_nm)?;
            let pairs = cfg.pair_distribution(s);

            // Signals go to the herald output, idlers to C3; crosstalk swaps them.
            let signal_at = |b: &mut ClassBuilder, wl: f64| {
                b.route(s, wl, route_sig.intended, route_sig.crosstalk)
            };
            let idler_at = |b: &mut ClassBuilder, wl: f64| {
                b.route(s, wl, route_idl.crosstalk, route_idl.intended)
            };

            let signal = signal_at(&mut builder, src.signal_wavelength_nm)?;
            let idler = idler_at(&mut builder, src.idler_wavelength_nm)?;
            emitters.push(Emitter::new(s, pairs, signal, idler));

            let half_band = 0.5 * src.emission_bandwidth_nm;
            let detuned = |f: &FilterSpec, nominal: f64| {
                !f.passes(nominal) && (f.center_wavelength_nm - nominal).abs() <= half_band
            };
            if detuned(herald_filter, src.signal_wavelength_nm) {
                let signal = signal_at(&mut builder, herald_filter.center_wavelength_nm)?;
                emitters.push(Emitter::new(s, pairs, signal, PhotonRoute::ABSENT));
            }
            if detuned(arm_filter, src.idler_wavelength_nm) {
                let idler = idler_at(&mut builder, arm_filter.center_wavelength_nm)?;
                emitters.push(Emitter::new(s, pairs, PhotonRoute::ABSENT, idler));
            }
        }

        let coherence = if cfg.force_distinguishable {
            0.0
        } else {
            let purity = (cfg.source_purity(0) * cfg.source_purity(1)).sqrt();
            let bandwidth_hz =
                0.5 * (cfg.idler_bandwidth_ghz(0) + cfg.idler_bandwidth_ghz(1)) * 1e9;
            let s = sinc(std::f64::consts::PI * bandwidth_hz * cfg.relative_delay_ps * 1e-12);
            purity * s * s
        };
        let (period_num, period_den) = period_ratio(cfg.rep_rate_hz());
        Ok(PulseSimulator {
            emitters,
            classes: builder.classes,
            coherence,
            period_num,
            period_den,
            resolution_ps: cfg.time_resolution_ps(),
            cap: cfg.photon_cap,
        })
    }

    pub fn emitters(&self) -> &[Emitter] {
        &self.emitters
    }

    /// Probability that the two sources' C3 photons are mutually
    /// indistinguishable in a given pulse.
    pub fn coherence_probability(&self) -> f64 {
        self.coherence
    }

    /// Detector timestamp of pulse `index`, rounded to the time resolution.
    pub fn pulse_time_ps(&self, index: u64) -> u64 {
        let exact = index as u128 * self.period_num;
        let res = self.resolution_ps.max(1) as u128;
        let quanta = (2 * exact + self.period_den * res) / (2 * self.period_den * res);
        (quanta * res) as u64
    }

    /// Reference path: draws every pair of the pulse.
    pub fn simulate_pulse<R: Rng + ?Sized>(&self, index: u64, rng: &mut R) -> PulseOutcome {
        let counts: Vec<u64> = self.emitters.iter().map(|e| e.pairs.sample(rng)).collect();
        self.simulate_with_pairs(index, &counts, rng)
    }

    /// Runs a pulse with the given number of emitted pairs per emitter.
    pub fn simulate_with_pairs<R: Rng + ?Sized>(
        &self,
        index: u64,
        pairs: &[u64],
        rng: &mut R,
    ) -> PulseOutcome {
        let mut fates = Vec::new();
        for (e, &n) in self.emitters.iter().zip(pairs) {
            for _ in 0..n {
                let (s, i) = Emitter::pick(&e.joint, rng.random());
                if (s, i) != (Fate::Lost, Fate::Lost) {
                    fates.push((e, s, i));
                }
            }
        }
        self.finish(index, &fates, rng)
    }

    /// Runs a pulse given the number of visible pairs per emitter.
    pub(crate) fn simulate_visible<R: Rng + ?Sized>(
        &self,
        index: u64,
        visible: &[u64],
        rng: &mut R,
    ) -> PulseOutcome {
        let mut fates = Vec::new();
        for (e, &n) in self.emitters.iter().zip(visible) {
            for _ in 0..n {
                let (s, i) = Emitter::pick(&e.joint_visible, rng.random());
                fates.push((e, s, i));
            }
        }
        self.finish(index, &fates, rng)
    }

    fn finish<R: Rng + ?Sized>(
        &self,
        index: u64,
        fates: &[(&Emitter, Fate, Fate)],
        rng: &mut R,
    ) -> PulseOutcome {
        let mut outcome = PulseOutcome {
            visible_pairs: fates.len() as u32,
            ..PulseOutcome::default()
        };
        if fates.is_empty() {
            return outcome;
        }
        let coherent = rng.random::<f64>() < self.coherence;
        let mut heralds = [false; 2];
        // (class, label) → photons per input arm.
        let mut groups: BTreeMap<(usize, usize), [u32; 2]> = BTreeMap::new();
        let mut total = 0usize;
        for &(e, s, i) in fates {
            for (fate, route) in [(s, &e.signal), (i, &e.idler)] {
                match fate {
                    Fate::Lost => {}
                    Fate::Herald => heralds[e.source] = true,
                    Fate::Coupler => {
                        let class = route.class.expect("coupler fate implies a class");
                        let label = if coherent { 0 } else { 1 + e.source };
                        groups.entry((class, label)).or_default()[e.source] += 1;
                        total += 1;
                    }
                }
            }
        }
        if total > self.cap {
            outcome.truncated = true;
            return outcome;
        }
        let mut arms = [false; 2];
        for ((class, _), [a, b]) in groups {
            let class = &self.classes[class];
            let table = &class.tables[a as usize * (self.cap + 1) + b as usize];
            let u: f64 = rng.random();
            let out = table
                .iter()
                .find(|e| u < e.1)
                .or(table.last())
                .map_or([0, 0], |e| e.0);
            for arm in 0..2 {
                for _ in 0..out[arm] {
                    if rng.random::<f64>() < class.residual[arm] {
                        arms[arm] = true;
                    }
                }
            }
        }
        let t = self.pulse_time_ps(index);
        for s in 0..2 {
            if heralds[s] {
                outcome.tags.push(TimeTag::new(Channel::herald(s), t));
            }
            if arms[s] {
                outcome.tags.push(TimeTag::new(Channel::arm(s), t));
            }
        }
        sort_tags(&mut outcome.tags);
        outcome
    }
}

/// Simulates pulse `index` of `cfg` on the reference path.
pub fn simulate_pulse<R: Rng + ?Sized>(
    cfg: &ChipConfig,
    index: u64,
    rng: &mut R,
) -> Result<PulseOutcome> {
    Ok(PulseSimulator::new(cfg)?.simulate_pulse(index, rng))
}
