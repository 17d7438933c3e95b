//! One function per experiment. Each validates, computes, and returns a
//! [`Report`]; nothing touches the disk until the report is complete.

use std::fmt::Write as _;
use std::path::Path;

use fockchip::analysis::{
    corrected_visibility, count_nfold, dip_width, fit_sinc2, fourfold_histogram, g2_from_counts,
    visibility, ChannelCounter, ClusterFilter, CoincidenceSpec, DipWidth, FitOptions, FitResult,
    G2Estimate, OffsetBin, ScanResult,
};
use fockchip::chip::{
    channel_loss_budget, coupler_ratio_from_voltage, fourfold_rate, herald_pair_rate,
    purity_from_g2, schmidt_modes_from_purity, Channel, ChipConfig, LossBudget, PerChannel,
    PurityEstimate,
};
use fockchip::montecarlo::{run_into, RunOptions, RunStats, Sampling, StreamMeta, TagStream, Tee};
use serde::Serialize;

use crate::output::{Failure, Report};

pub const TWO_HOURS_S: f64 = 7200.0;
/// Fraction of the two-hour acquisition simulated by default.
const DESK_FRACTION: f64 = 1.0 / 20.0;
/// Pulses per voltage for the simulated splitting check.
const VOLTAGE_CHECK_PULSES: u64 = 100_000_000;
const THREADS_ENV: &str = "FOCKCHIP_THREADS";

pub struct Context {
    pub cfg: ChipConfig,
    seed: u64,
    pulses: Option<u64>,
    full: bool,
    workers: Option<usize>,
}

impl Context {
    pub fn new(
        config: Option<&Path>,
        seed: u64,
        pulses: Option<u64>,
        full: bool,
    ) -> Result<Self, Failure> {
        let cfg = match config {
            Some(path) => ChipConfig::load(path).map_err(|e| {
                Failure::config(format!("cannot use config {}: {e}", path.display()))
            })?,
            None => ChipConfig::paper_default(),
        };
        cfg.validate()?;
        if pulses == Some(0) {
            return Err(Failure::config("--pulses must be positive"));
        }
        let workers = match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| {
                        Failure::config(format!("{THREADS_ENV}={v} is not a positive integer"))
                    })?,
            ),
            Err(_) => None,
        };
        Ok(Context {
            cfg,
            seed,
            pulses,
            full,
            workers,
        })
    }

    fn two_hour_pulses(&self) -> u64 {
        (self.cfg.rep_rate_hz() * TWO_HOURS_S).round() as u64
    }

    /// Pulses per run: explicit, full two hours, or the desk-scale share.
    fn run_pulses(&self) -> u64 {
        match (self.pulses, self.full) {
            (Some(n), _) => n,
            (None, true) => self.two_hour_pulses(),
            (None, false) => (self.two_hour_pulses() as f64 * DESK_FRACTION).round() as u64,
        }
    }

    /// Pulses per run for commands whose signal needs the full two hours
    /// to be visible at all.
    fn run_pulses_full(&self) -> u64 {
        self.pulses.unwrap_or_else(|| self.two_hour_pulses())
    }

    fn options(&self, sampling: Sampling) -> RunOptions {
        RunOptions {
            sampling,
            dark_counts: true,
            workers: self.workers,
        }
    }

    fn window_ps(&self) -> u64 {
        self.cfg.coincidence_window_ps.round() as u64
    }
}

/// `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_values(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::config(format!("cannot parse value list '{spec}'"));
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(bad)
    };
    let parts: Vec<&str> = spec.split(':').collect();
    let values = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || stop < start {
                return Err(bad());
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| start + i as f64 * step).collect()
        }
        [_] => spec.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(bad()),
    };
    if values.is_empty() {
        return Err(bad());
    }
    Ok(values)
}

/// Runs `cfg`, keeping multi-channel clusters and gated singles.
fn run_counted(
    ctx: &Context,
    cfg: &ChipConfig,
    pulses: u64,
    sampling: Sampling,
) -> Result<(TagStream, ChannelCounter, RunStats), Failure> {
    let counter = ChannelCounter::gated(cfg.period_ps(), ctx.window_ps());
    let mut sink = Tee(counter, ClusterFilter::new(ctx.window_ps()));
    let stats = run_into(cfg, pulses, ctx.seed, ctx.options(sampling), &mut sink)?;
    let Tee(counter, filter) = sink;
    let meta = StreamMeta {
        seed: ctx.seed,
        cfg_sha256: cfg.sha256(),
        pulses,
        truncated: stats.truncated,
    };
    Ok((TagStream::new(meta, filter.finish())?, counter, stats))
}

fn fourfold(ctx: &Context, stream: &TagStream) -> Result<u64, Failure> {
    Ok(count_nfold(
        stream,
        &CoincidenceSpec::fourfold(ctx.window_ps(), ctx.cfg.period_ps()),
    )?[0]
        .1)
}

#[derive(Serialize)]
struct Budget {
    duration_s: f64,
    rep_rate_hz: f64,
    mean_pairs_per_pulse: [f64; 2],
    efficiency: PerChannel<f64>,
    channel_loss: PerChannel<LossBudget>,
    fourfold_rate_hz: f64,
    fourfold_counts: f64,
    herald_pair_rate_hz: f64,
}

pub fn rate_budget(ctx: &Context, duration: f64) -> Result<Report, Failure> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Failure::config("--duration must be positive"));
    }
    let cfg = &ctx.cfg;
    let loss = |ch| channel_loss_budget(cfg, ch);
    let channel_loss = PerChannel {
        h1: loss(Channel::H1)?,
        s1: loss(Channel::S1)?,
        s2: loss(Channel::S2)?,
        h2: loss(Channel::H2)?,
    };
    let eff = |ch: Channel| cfg.detectors.get(ch).efficiency;
    let efficiency = PerChannel {
        h1: eff(Channel::H1),
        s1: eff(Channel::S1),
        s2: eff(Channel::S2),
        h2: eff(Channel::H2),
    };
    let n = [cfg.mean_pairs(0), cfg.mean_pairs(1)];
    let mean_pairs = (n[0] * n[1]).sqrt();
    let mu = Channel::ALL.map(|ch| channel_loss.get(ch).linear);
    let eta = Channel::ALL
        .iter()
        .map(|&ch| eff(ch))
        .product::<f64>()
        .powf(0.25);
    let rate = fourfold_rate(cfg.rep_rate_hz(), mean_pairs, mu, eta, 1.0);
    let eta_h = (eff(Channel::H1) * eff(Channel::H2)).sqrt();
    let budget = Budget {
        duration_s: duration,
        rep_rate_hz: cfg.rep_rate_hz(),
        mean_pairs_per_pulse: n,
        efficiency,
        channel_loss,
        fourfold_rate_hz: rate,
        fourfold_counts: rate * duration,
        herald_pair_rate_hz: herald_pair_rate(cfg.rep_rate_hz(), mean_pairs, mu[0], mu[3], eta_h),
    };
    let mut report = Report::default();
    for (ch, l) in budget.channel_loss.iter() {
        report.line(format!("{ch}: {:.2} dB ({:.4})", l.db, l.linear));
    }
    report.line(format!("mean pairs per pulse: {:.4e} / {:.4e}", n[0], n[1]));
    report.line(format!(
        "four-folds in {duration} s: {:.2}",
        budget.fourfold_counts
    ));
    report.line(format!(
        "herald pairs: {:.3} Hz",
        budget.herald_pair_rate_hz
    ));
    report.json("budget.json", &budget)?;
    Ok(report)
}

#[derive(Serialize)]
struct SourcePurity {
    pump_bandwidth_ghz: f64,
    idler_filter_bandwidth_ghz: f64,
    purity: f64,
    schmidt_modes: f64,
    unheralded_g2: f64,
}

#[derive(Serialize)]
struct MeasuredPurity {
    g2: f64,
    g2_err: Option<f64>,
    purity: PurityEstimate,
    purity_err: Option<f64>,
}

#[derive(Serialize)]
struct PurityReport {
    sources: Vec<SourcePurity>,
    measured: Option<MeasuredPurity>,
}

pub fn purity(ctx: &Context, g2: Option<f64>, g2_err: Option<f64>) -> Result<Report, Failure> {
    let cfg = &ctx.cfg;
    let sources = (0..2)
        .map(|s| {
            let p = cfg.source_purity(s);
            Ok(SourcePurity {
                pump_bandwidth_ghz: cfg.sources[s].pump_bandwidth_ghz,
                idler_filter_bandwidth_ghz: cfg.idler_bandwidth_ghz(s),
                purity: p,
                schmidt_modes: schmidt_modes_from_purity(p)?,
                unheralded_g2: 1.0 + p,
            })
        })
        .collect::<Result<Vec<_>, fockchip::Error>>()?;
    if let Some(e) = g2_err {
        if !(e >= 0.0) || !e.is_finite() {
            return Err(Failure::config("--g2-err must be non-negative"));
        }
    }
    let measured = match g2 {
        Some(g) => Some(MeasuredPurity {
            g2: g,
            g2_err,
            purity: purity_from_g2(g)?,
            // P = g² − 1, so the error carries over unchanged.
            purity_err: g2_err,
        }),
        None => None,
    };
    let mut report = Report::default();
    for (i, s) in sources.iter().enumerate() {
        report.line(format!(
            "source {}: purity {:.6}, K = {:.6}",
            i + 1,
            s.purity,
            s.schmidt_modes
        ));
    }
    if let Some(m) = &measured {
        let err = m
            .purity_err
            .map(|e| format!(" ± {e:.3}"))
            .unwrap_or_default();
        report.line(format!(
            "from g2 = {}: purity {:.3}{err}",
            m.g2, m.purity.purity
        ));
    }
    report.json("purity.json", &PurityReport { sources, measured })?;
    Ok(report)
}

pub fn voltage_scan(ctx: &Context, voltages: &str) -> Result<Report, Failure> {
    let voltages = parse_values(voltages)?;
    let pulses = ctx.pulses.unwrap_or(VOLTAGE_CHECK_PULSES);
    let mut cfg = ctx.cfg.clone();
    cfg.sources[1].mean_pairs_override = Some(0.0);
    for ch in Channel::ALL {
        cfg.detectors.get_mut(ch).dark_rate_hz = 0.0;
    }
    let mut csv = String::from("voltage,bar,cross,mc_cross,mc_cross_err\n");
    let mut report = Report::default();
    for &v in &voltages {
        cfg.voltage_v = v;
        cfg.validate()?;
        let ratio = coupler_ratio_from_voltage(&cfg.tunable_coupler, v);
        let mut counter = ChannelCounter::default();
        run_into(
            &cfg,
            pulses,
            ctx.seed,
            ctx.options(Sampling::SkipAhead),
            &mut counter,
        )?;
        let (s1, s2) = (
            counter.count(Channel::S1) as f64,
            counter.count(Channel::S2) as f64,
        );
        let total = s1 + s2;
        let (mc, err) = if total > 0.0 {
            let f = s2 / total;
            (f, (f * (1.0 - f) / total).sqrt())
        } else {
            (f64::NAN, f64::NAN)
        };
        writeln!(csv, "{v},{},{},{mc},{err}", ratio.bar, ratio.cross).expect("string write");
        report.line(format!(
            "{v:>7.2} V  cross {:.4}  simulated {mc:.4} ± {err:.4}",
            ratio.cross
        ));
    }
    report.text("voltage_scan.csv", csv);
    Ok(report)
}

pub struct HomScanArgs<'a> {
    pub delays: &'a str,
    pub voltage: Option<f64>,
    pub bandwidth_hint: Option<f64>,
    pub fit_width: bool,
    pub fit_center: bool,
    pub mismatch_nm: f64,
}

#[derive(Serialize)]
struct Accidentals {
    herald_detuning_nm: f64,
    /// Four-folds of the energy-mismatched run, same pulses as one point.
    mismatched_fourfold: u64,
    mismatched_per_two_hours: f64,
    /// Same-point four-folds from pulses with three or more pairs.
    multipair_fourfold: Vec<u64>,
}

#[derive(Serialize)]
struct HomScanReport {
    seed: u64,
    voltage_v: f64,
    pulses_per_point: u64,
    scale_to_two_hours: f64,
    delays_ps: Vec<f64>,
    fourfold: Vec<u64>,
    fit: FitResult,
    visibility_raw: f64,
    visibility_corrected: Option<f64>,
    dip_width: DipWidth,
    accidentals: Accidentals,
}

pub fn hom_scan(ctx: &Context, args: &HomScanArgs) -> Result<Report, Failure> {
    let delays = parse_values(args.delays)?;
    if delays.len() < 5 {
        return Err(Failure::config("a HOM scan needs at least 5 delays"));
    }
    if !args.mismatch_nm.is_finite() {
        return Err(Failure::config("--mismatch-nm must be finite"));
    }
    let mut cfg = ctx.cfg.clone();
    cfg.voltage_v = args.voltage.unwrap_or(cfg.tunable_coupler.v_half);
    cfg.validate()?;
    let hint = args
        .bandwidth_hint
        .unwrap_or(0.5 * (cfg.idler_bandwidth_ghz(0) + cfg.idler_bandwidth_ghz(1)));
    let opts = FitOptions {
        bandwidth_ghz: hint,
        fit_bandwidth: args.fit_width,
        center_ps: 0.0,
        fit_center: args.fit_center,
    };
    if !(hint > 0.0) {
        return Err(Failure::config("--bandwidth-hint must be positive"));
    }
    let pulses = ctx.run_pulses_full();

    let mut counts = Vec::with_capacity(delays.len());
    let mut multipair = Vec::with_capacity(delays.len());
    for &tau in &delays {
        cfg.relative_delay_ps = tau;
        cfg.validate()?;
        let (stream, _, stats) = run_counted(ctx, &cfg, pulses, Sampling::BothSources)?;
        counts.push(fourfold(ctx, &stream)?);
        multipair.push(stats.multipair_fourfold());
    }

    let mut mismatched = cfg.clone();
    mismatched.relative_delay_ps = 0.0;
    for s in 0..2 {
        mismatched
            .filters
            .get_mut(Channel::herald(s))
            .center_wavelength_nm += args.mismatch_nm;
    }
    mismatched.validate()?;
    let (stream, _, _) = run_counted(ctx, &mismatched, pulses, Sampling::BothSources)?;
    let accidental = fourfold(ctx, &stream)?;

    let scan = ScanResult::from_counts(&delays, &counts);
    let fit = fit_sinc2(&scan, opts)?;
    let scale = ctx.two_hour_pulses() as f64 / pulses as f64;
    let report_data = HomScanReport {
        seed: ctx.seed,
        voltage_v: cfg.voltage_v,
        pulses_per_point: pulses,
        scale_to_two_hours: scale,
        delays_ps: delays,
        fourfold: counts,
        visibility_raw: visibility(&fit),
        visibility_corrected: corrected_visibility(&fit, accidental as f64).ok(),
        dip_width: dip_width(&fit),
        fit,
        accidentals: Accidentals {
            herald_detuning_nm: args.mismatch_nm,
            mismatched_fourfold: accidental,
            mismatched_per_two_hours: accidental as f64 * scale,
            multipair_fourfold: multipair,
        },
    };
    let mut report = Report::default();
    let mut csv = Vec::new();
    scan.write_csv(&mut csv)?;
    report.text("scan.csv", String::from_utf8(csv).expect("ascii csv"));
    let fit = &report_data.fit;
    report.line(format!(
        "V_raw = {:.4} ± {:.4}, A = {:.2}, Δν = {:.2} GHz",
        fit.visibility,
        fit.stderr("visibility").unwrap_or(f64::NAN),
        fit.amplitude,
        fit.bandwidth_ghz
    ));
    let w = &report_data.dip_width;
    report.line(format!(
        "dip width: FWHM {:.1} ps ({:.2} mm), first zero {:.1} ps ({:.2} mm)",
        w.fwhm_ps, w.fwhm_mm, w.first_zero_ps, w.first_zero_mm
    ));
    report.line(format!(
        "mismatched-herald four-folds: {accidental} ({:.2} per 2 h)",
        report_data.accidentals.mismatched_per_two_hours
    ));
    report.json("fit.json", &report_data)?;
    Ok(report)
}

#[derive(Serialize)]
struct HistogramSetting {
    voltage_v: f64,
    bins: Vec<OffsetBin>,
    /// Mean four-fold count over the non-zero offsets.
    side_peak_mean: f64,
}

#[derive(Serialize)]
struct HistogramReport {
    seed: u64,
    pulses: u64,
    scale_to_two_hours: f64,
    settings: Vec<HistogramSetting>,
    /// Side peaks at the requested voltage relative to the bar setting.
    side_peak_ratio: Option<f64>,
}

pub fn noon_histogram(
    ctx: &Context,
    voltage: Option<f64>,
    max_offset: u32,
) -> Result<Report, Failure> {
    if max_offset == 0 {
        return Err(Failure::config("--max-offset must be at least 1"));
    }
    let mut cfg = ctx.cfg.clone();
    let tc = cfg.tunable_coupler.clone();
    let voltage = voltage.unwrap_or(tc.v_half);
    let (lo, hi) = (tc.v_bar.min(tc.v_half), tc.v_bar.max(tc.v_half));
    if !(voltage >= lo - (hi - lo) && voltage <= hi + (hi - lo)) {
        return Err(Failure::config(format!(
            "voltage {voltage} V is outside the calibrated range"
        )));
    }
    let pulses = ctx.run_pulses();
    let mut settings = Vec::new();
    let mut csv = String::from("offset,voltage,fourfold,herald_pair_any_arm\n");
    for v in [voltage, tc.v_bar] {
        cfg.voltage_v = v;
        cfg.validate()?;
        let (stream, _, _) = run_counted(ctx, &cfg, pulses, Sampling::SkipAhead)?;
        let bins = fourfold_histogram(&stream, max_offset, ctx.window_ps(), cfg.period_ps())?;
        for b in &bins {
            writeln!(
                csv,
                "{},{v},{},{}",
                b.offset, b.fourfold, b.herald_pair_any_arm
            )
            .expect("string write");
        }
        let side: Vec<u64> = bins
            .iter()
            .filter(|b| b.offset != 0)
            .map(|b| b.fourfold)
            .collect();
        settings.push(HistogramSetting {
            voltage_v: v,
            side_peak_mean: side.iter().sum::<u64>() as f64 / side.len() as f64,
            bins,
        });
    }
    let side_peak_ratio = (settings[1].side_peak_mean > 0.0)
        .then(|| settings[0].side_peak_mean / settings[1].side_peak_mean);
    let data = HistogramReport {
        seed: ctx.seed,
        pulses,
        scale_to_two_hours: ctx.two_hour_pulses() as f64 / pulses as f64,
        settings,
        side_peak_ratio,
    };
    let mut report = Report::default();
    for s in &data.settings {
        let zero = s
            .bins
            .iter()
            .find(|b| b.offset == 0)
            .map_or(0, |b| b.fourfold);
        report.line(format!(
            "{:>6.2} V: offset 0 → {zero} ({:.1} per 2 h), side peaks {:.2}",
            s.voltage_v,
            zero as f64 * data.scale_to_two_hours,
            s.side_peak_mean
        ));
    }
    if let Some(r) = data.side_peak_ratio {
        report.line(format!("side-peak ratio: {r:.3}"));
    }
    report.text("histogram.csv", csv);
    report.json("histogram.json", &data)?;
    Ok(report)
}

#[derive(Serialize)]
struct G2Report {
    seed: u64,
    source: usize,
    purity: f64,
    voltage_v: f64,
    estimate: G2Estimate,
    purity_from_g2: Option<PurityEstimate>,
}

pub fn g2(ctx: &Context, source: usize, purity: Option<f64>) -> Result<Report, Failure> {
    let mut cfg = ctx.cfg.clone();
    cfg.voltage_v = cfg.tunable_coupler.v_half;
    cfg.sources[1 - source].mean_pairs_override = Some(0.0);
    if let Some(p) = purity {
        cfg.sources[source].purity_override = Some(p);
    }
    cfg.validate()?;
    let pulses = ctx.run_pulses();
    let (stream, counter, _) = run_counted(ctx, &cfg, pulses, Sampling::SkipAhead)?;
    let spec = CoincidenceSpec::simultaneous(
        &[Channel::S1, Channel::S2],
        ctx.window_ps(),
        cfg.period_ps(),
    );
    let c0 = count_nfold(&stream, &spec)?[0].1;
    let estimate = g2_from_counts(
        c0,
        counter.count(Channel::S1),
        counter.count(Channel::S2),
        pulses,
    )?;
    let data = G2Report {
        seed: ctx.seed,
        source: source + 1,
        purity: cfg.source_purity(source),
        voltage_v: cfg.voltage_v,
        estimate,
        purity_from_g2: purity_from_g2(estimate.g2).ok(),
    };
    let mut report = Report::default();
    report.line(format!(
        "g2(0) = {:.4} ± {:.4} ({} coincidences over {} pulses)",
        estimate.g2, estimate.stderr, estimate.coincidences, pulses
    ));
    report.json("g2.json", &data)?;
    Ok(report)
}
