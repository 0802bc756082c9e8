use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use rotspec::analysis::{aggregate, fit_exponential_with, DecayTrace, FitOptions};
use rotspec::config::SimulationConfig;
use rotspec::kinetics::{derivatives, PopulationState, RadiationFlags, RateModel};
use rotspec::levelcat::{default_catalog, load_catalog, parse_catalog, save_catalog};
use rotspec::lineshape::{doppler_fwhm, DopplerParams};
use rotspec::pipeline;
use rotspec::protocol::Method;
use rotspec::radfield::planck_occupancy;

const H: f64 = 6.626_070_15e-34;
const K_B: f64 = 1.380_649e-23;
const C: f64 = 299_792_458.0;

#[test]
fn planck_occupancy_matches_closed_form() {
    for (f, t) in [(1.3e12, 300.0), (2.6e12, 300.0), (1.3e12, 4.0), (5.0e9, 300.0)] {
        let expected = 1.0 / ((H * f / (K_B * t)).exp() - 1.0);
        assert_relative_eq!(planck_occupancy(f, t).unwrap(), expected, max_relative = 1e-12);
    }
}

#[test]
fn doppler_width_matches_closed_form() {
    for t in [0.01, 0.1, 1.0] {
        let p = DopplerParams::hd_plus(t);
        let expected =
            p.transition_frequency_hz * (8.0 * std::f64::consts::LN_2 * K_B * t / (p.ion_mass_kg * C * C)).sqrt();
        assert_relative_eq!(doppler_fwhm(&p), expected, max_relative = 1e-12);
    }
}

#[test]
fn catalog_survives_text_and_file_round_trips() {
    let catalog = default_catalog();
    let again = parse_catalog(&catalog.to_text()).unwrap();
    assert_eq!(again, catalog);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("catalog.txt");
    save_catalog(&catalog, &path).unwrap();
    assert_eq!(load_catalog(&path).unwrap(), catalog);
}

fn model() -> RateModel {
    let cfg = SimulationConfig::default();
    cfg.rate_model(Method::I, default_catalog().lines).unwrap()
}

fn state_from(values: &[f64], n_max: usize) -> PopulationState {
    let mut s = PopulationState::zeros(n_max);
    let (g, rest) = values.split_at(s.ground_hf.len());
    let (u, rest) = rest.split_at(s.n1_hf.len());
    s.ground_hf.copy_from_slice(g);
    s.n1_hf.copy_from_slice(u);
    s.coarse.copy_from_slice(&rest[..n_max - 1]);
    s
}

fn flags_from(bits: u8) -> RadiationFlags {
    RadiationFlags {
        cooling_5p5: bits & 1 != 0,
        cooling_2p7: bits & 2 != 0,
        rempd: bits & 4 != 0,
        thz: bits & 8 != 0,
        secular_scan: bits & 16 != 0,
    }
}

fn flat(s: &PopulationState) -> Vec<f64> {
    let mut v: Vec<f64> = s.ground_hf.iter().chain(&s.n1_hf).chain(&s.coarse).copied().collect();
    v.push(s.dissociated);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rate_equations_are_linear_and_conserve_number(
        x in prop::collection::vec(0.0f64..50.0, 21),
        y in prop::collection::vec(0.0f64..50.0, 21),
        a in 0.0f64..5.0,
        bits in 0u8..32,
        offset_mhz in -40.0f64..20.0,
    ) {
        let m = model();
        let n = m.n_max;
        let flags = flags_from(bits);
        let thz = Some(offset_mhz * 1e6);
        let sx = state_from(&x, n);
        let sy = state_from(&y, n);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + q).collect();
        let dx = flat(&derivatives(&sx, &m, flags, thz).unwrap());
        let dy = flat(&derivatives(&sy, &m, flags, thz).unwrap());
        let dc = flat(&derivatives(&state_from(&combo, n), &m, flags, thz).unwrap());
        let scale: f64 = dc.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        for i in 0..dc.len() {
            prop_assert!((dc[i] - (a * dx[i] + dy[i])).abs() <= 1e-9 * scale);
        }
        let net: f64 = dc.iter().sum();
        prop_assert!(net.abs() <= 1e-10 * scale);
    }

    #[test]
    fn config_round_trips_through_toml(
        seed in any::<u64>(),
        molecules in 1.0f64..2000.0,
        ground in 0.0f64..=1.0,
        field in 0.0f64..5.0,
        sigma in 0.0f64..3000.0,
    ) {
        let mut cfg = SimulationConfig::default();
        cfg.master_seed = seed;
        cfg.ions.molecule_count = molecules;
        cfg.ions.ground_fraction = ground;
        cfg.field.magnetic_field_gauss = field;
        cfg.fluorescence.noise_sigma_liquid_counts_per_s = sigma;
        let back = SimulationConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn aggregate_is_shift_equivariant(
        values in prop::collection::vec(-10.0f64..10.0, 2..30),
        shift in -100.0f64..100.0,
    ) {
        let base = aggregate(&values, None).unwrap();
        let moved: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let other = aggregate(&moved, None).unwrap();
        prop_assert!((other.normalized_signal - base.normalized_signal - shift).abs() < 1e-9);
        prop_assert!((other.stddev - base.stddev).abs() < 1e-9);
        prop_assert!(
            (base.standard_error() - base.stddev / (values.len() as f64).sqrt()).abs() < 1e-12
        );
    }
}

#[test]
fn aggregate_recovers_sample_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = Normal::new(2.0, 0.5).unwrap();
    let values: Vec<f64> = (0..4000).map(|_| normal.sample(&mut rng)).collect();
    let p = aggregate(&values, Some(2.0)).unwrap();
    assert!((p.normalized_signal - 1.0).abs() < 0.01);
    assert!((p.stddev - 0.25).abs() < 0.01);
    assert_eq!(p.n_reps, 4000);
}

#[test]
fn fitter_is_unbiased_on_noisy_decays() {
    let (amp, rate, offset) = (20.0, 0.075, 5.0);
    let mut rates = Vec::new();
    let mut covered = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let samples: Vec<(f64, f64)> = (0..2000)
            .map(|i| {
                let t = i as f64 / 50.0;
                (t, amp * (-rate * t).exp() + offset + noise.sample(&mut rng))
            })
            .collect();
        let fit = fit_exponential_with(
            &DecayTrace::from_samples(samples),
            (0.0, 40.0),
            &FitOptions::default(),
        )
        .unwrap();
        assert!(fit.converged);
        if (fit.rate - rate).abs() <= 2.0 * fit.rate_stddev {
            covered += 1;
        }
        rates.push(fit.rate);
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    assert!((mean - rate).abs() < 0.01, "mean fitted rate {mean}");
    assert!(covered >= 85, "only {covered}/100 within 2 sd");
}

fn noiseless() -> SimulationConfig {
    let mut cfg = SimulationConfig::default();
    cfg.fluorescence.noise_sigma_liquid_counts_per_s = 0.0;
    cfg.fluorescence.noise_sigma_crystal_counts_per_s = 0.0;
    cfg.validate().unwrap();
    cfg
}

#[test]
fn noiseless_method1_trace_never_rises() {
    let cfg = noiseless();
    let run = pipeline::simulate(&cfg, &default_catalog(), Method::I, "A'", 1, 1).unwrap();
    let values: Vec<f64> = run.reps[0].trace.values().collect();
    assert!(values.len() > 100);
    for w in values.windows(2) {
        assert!(w[1] <= w[0] + 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
    }
    assert!(values.last().unwrap() < values.first().unwrap());
}

#[test]
fn noiseless_method2_signal_tracks_resonance() {
    let cfg = noiseless();
    let catalog = default_catalog();
    let on = pipeline::simulate(&cfg, &catalog, Method::II, "A", 1, 1).unwrap();
    let off = pipeline::simulate(&cfg, &catalog, Method::II, "detuned500", 1, 1).unwrap();
    let (s_on, s_off) = (on.reps[0].signal, off.reps[0].signal);
    assert!(s_off >= 0.0 && s_off < 1.0);
    assert!(s_on > s_off, "on {s_on} off {s_off}");
}

#[test]
fn repetitions_are_reproducible_and_worker_independent() {
    let cfg = SimulationConfig::default();
    let catalog = default_catalog();
    let a = pipeline::simulate(&cfg, &catalog, Method::I, "B", 4, 1).unwrap();
    let b = pipeline::simulate(&cfg, &catalog, Method::I, "B", 4, 4).unwrap();
    assert_eq!(a.signals(), b.signals());
    let seeds: Vec<u64> = a.reps.iter().map(|r| r.seed).collect();
    let mut unique = seeds.clone();
    unique.sort_unstable();
    unique.dedup();
    assert_eq!(unique.len(), seeds.len());
}
