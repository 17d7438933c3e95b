use fockchip::analysis::{
    count_nfold, dip_width, fit_sinc2, fit_sinc2_points, g2_hbt, sinc2_dip, visibility,
    CoincidenceSpec, FitOptions, ScanResult,
};
use fockchip::chip::{Channel, ChipConfig, DetectorSpec, PerChannel};
use fockchip::montecarlo::{
    add_dark_counts, run_single, RunOptions, Sampling, StreamMeta, TagStream,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

fn delays() -> Vec<f64> {
    (-12..=12).map(|i| i as f64 * 5.0).collect()
}

fn with_rates(rates: [f64; 4]) -> PerChannel<DetectorSpec> {
    let mut d = ChipConfig::paper_default().detectors;
    for (ch, r) in Channel::ALL.into_iter().zip(rates) {
        d.get_mut(ch).dark_rate_hz = r;
    }
    d
}

#[test]
fn poisson_streams_give_the_accidental_twofold_rate() {
    let (r1, r2, t, w) = (1e5, 2e5, 100.0, 1000u64);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let s = add_dark_counts(
        TagStream::default(),
        &with_rates([r1, r2, 0.0, 0.0]),
        t,
        10,
        &mut rng,
    )
    .unwrap();
    let spec = CoincidenceSpec::simultaneous(&[Channel::H1, Channel::S1], w, 13_071.9);
    let got = count_nfold(&s, &spec).unwrap()[0].1 as f64;
    let expected = r1 * r2 * 2.0 * w as f64 * 1e-12 * t;
    assert!(
        (got - expected).abs() <= 3.0 * expected.sqrt(),
        "{got} vs {expected}"
    );
}

/// One source, 50:50 coupler, no darks: HBT on the two idler outputs.
fn hbt_config(purity: f64, lossless: bool) -> ChipConfig {
    let mut cfg = ChipConfig::paper_default();
    cfg.voltage_v = cfg.tunable_coupler.v_half;
    cfg.sources[1].mean_pairs_override = Some(0.0);
    for s in &mut cfg.sources {
        s.purity_override = Some(purity);
    }
    cfg.sources[0].mean_pairs_override = Some(0.05);
    for ch in Channel::ALL {
        cfg.detectors.get_mut(ch).dark_rate_hz = 0.0;
        if lossless {
            cfg.detectors.get_mut(ch).efficiency = 1.0;
            cfg.filters.get_mut(ch).insertion_loss_db = 0.0;
        }
    }
    if lossless {
        cfg.coupling_loss_db = 0.0;
        for w in &mut cfg.wdm {
            for r in &mut w.routes {
                r.pass_loss_db = 0.0;
            }
        }
    }
    cfg
}

fn hbt(cfg: &ChipConfig, pulses: u64, seed: u64) -> fockchip::analysis::G2Estimate {
    let opts = RunOptions {
        dark_counts: false,
        ..RunOptions::new(Sampling::SkipAhead)
    };
    let (stream, _) = run_single(cfg, pulses, seed, opts).unwrap();
    g2_hbt(&stream, Channel::S1, Channel::S2, 1000, cfg.period_ps()).unwrap()
}

#[test]
fn thermal_light_bunches() {
    let g = hbt(&hbt_config(1.0, true), 20_000_000, 1);
    assert!((g.g2 - 2.0).abs() <= 3.0 * g.stderr, "{g:?}");
}

#[test]
fn poissonian_light_does_not_bunch() {
    let g = hbt(&hbt_config(1e-6, true), 20_000_000, 2);
    assert!((g.g2 - 1.0).abs() <= 3.0 * g.stderr, "{g:?}");
}

#[test]
fn g2_is_unchanged_by_extra_loss() {
    let cfg = hbt_config(1.0, false);
    let mut lossy = cfg.clone();
    for ch in Channel::ALL {
        lossy.detectors.get_mut(ch).efficiency = 0.4;
    }
    let (a, b) = (hbt(&cfg, 400_000_000, 3), hbt(&lossy, 400_000_000, 4));
    let sigma = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    assert!((a.g2 - b.g2).abs() <= 3.0 * sigma, "{a:?} {b:?}");
}

#[test]
fn fit_round_trip_over_random_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..100 {
        let v = rng.random_range(0.3..1.0);
        let a = rng.random_range(10.0..1000.0);
        let bw = rng.random_range(15.0..40.0);
        let tau0 = rng.random_range(-8.0..8.0);
        let data: Vec<(f64, f64)> = delays()
            .iter()
            .map(|&t| (t, sinc2_dip(t, a, v, bw, tau0)))
            .collect();
        let fit = fit_sinc2_points(&data, FitOptions::all_free(25.0)).unwrap();
        assert!((fit.visibility - v).abs() < 1e-6, "{v} {fit:?}");
        assert!((fit.amplitude / a - 1.0).abs() < 1e-6);
        assert!((fit.bandwidth_ghz / bw - 1.0).abs() < 1e-6);
        assert!((fit.center_ps - tau0).abs() < 1e-6);
    }
}

#[test]
fn poisson_noise_at_two_hour_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let taus = delays();
    let mut vs = Vec::new();
    for _ in 0..100 {
        let counts: Vec<u64> = taus
            .iter()
            .map(|&t| {
                Poisson::new(sinc2_dip(t, 30.0, 0.94, 25.0, 0.0))
                    .unwrap()
                    .sample(&mut rng) as u64
            })
            .collect();
        let fit = fit_sinc2(
            &ScanResult::from_counts(&taus, &counts),
            FitOptions::two_parameter(25.0),
        )
        .unwrap();
        vs.push(fit.visibility);
    }
    let mean = vs.iter().sum::<f64>() / vs.len() as f64;
    let sd = (vs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vs.len() - 1) as f64).sqrt();
    assert!((mean - 0.94).abs() < 0.03, "mean {mean}");
    assert!((sd - 0.03).abs() < 0.01, "spread {sd}");
}

#[test]
fn flat_data_has_no_dip() {
    let data: Vec<(f64, f64)> = delays().iter().map(|&t| (t, 30.0)).collect();
    let fit = fit_sinc2_points(&data, FitOptions::two_parameter(25.0)).unwrap();
    assert!(fit.visibility.abs() < 1e-6);
}

#[test]
fn visibility_ignores_overall_scale() {
    let base: Vec<(f64, f64)> = delays()
        .iter()
        .map(|&t| (t, sinc2_dip(t, 30.0, 0.9, 25.0, 0.0) + 1.5))
        .collect();
    let v1 = visibility(&fit_sinc2_points(&base, FitOptions::two_parameter(25.0)).unwrap());
    for k in [0.1, 7.0, 1000.0] {
        let scaled: Vec<(f64, f64)> = base.iter().map(|&(t, y)| (t, k * y)).collect();
        let vk = visibility(&fit_sinc2_points(&scaled, FitOptions::two_parameter(25.0)).unwrap());
        assert!((vk - v1).abs() < 1e-6, "{k}: {vk} vs {v1}");
    }
}

#[test]
fn fitted_widths_follow_the_bandwidth() {
    let data: Vec<(f64, f64)> = delays()
        .iter()
        .map(|&t| (t, sinc2_dip(t, 500.0, 0.9, 25.0, 0.0)))
        .collect();
    let fit = fit_sinc2_points(&data, FitOptions::all_free(20.0)).unwrap();
    let w = dip_width(&fit);
    assert!((w.first_zero_ps - 40.0).abs() < 1e-4);
    assert!((w.fwhm_mm - 10.62).abs() < 0.01);
}

#[test]
fn g2_estimate_fields() {
    let meta = StreamMeta {
        pulses: 1000,
        ..StreamMeta::default()
    };
    let tags = [
        (Channel::S1, 0),
        (Channel::S2, 0),
        (Channel::S1, 20_000),
        (Channel::S2, 40_000),
    ]
    .map(|(c, t)| fockchip::montecarlo::TimeTag::new(c, t))
    .to_vec();
    let s = TagStream::new(meta, tags).unwrap();
    let g = g2_hbt(&s, Channel::S1, Channel::S2, 1000, 13_071.9).unwrap();
    assert_eq!((g.coincidences, g.singles_a, g.singles_b), (1, 2, 2));
    assert!((g.g2 - 250.0).abs() < 1e-12);
}
