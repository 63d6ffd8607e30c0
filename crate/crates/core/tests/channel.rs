use std::f64::consts::TAU;

use num_complex::Complex64;
use proptest::prelude::*;

use ntsim_core::channel::{combined_freq_response, hst_taps, ChannelTaps, Tap, TapContext, TapProfile, TapSpec};
use ntsim_core::hst_link::Numerology;
use ntsim_core::scenario::{build_rail_deployment, PoseSample, Vec3};

fn train_at(x: f64) -> PoseSample {
    PoseSample {
        t: 0.0,
        position: Vec3::new(x, 0.0, 4.0),
        velocity: Vec3::new(500.0 / 3.6, 0.0, 0.0),
        acceleration: Vec3::zeros(),
    }
}

fn ctx(realization: u64) -> TapContext {
    TapContext {
        carrier_hz: 2e9,
        link_power: 1.0,
        seed: 21,
        link_id: 0,
        realization,
    }
}

fn one_tap(gain: Complex64, doppler: f64, delay: f64) -> ChannelTaps {
    ChannelTaps {
        taps: vec![Tap {
            delay,
            doppler,
            gain,
            aod: 0.0,
            aoa: 0.0,
            los: true,
        }],
        reference_time: 0.0,
    }
}

#[test]
fn k_factor_and_delay_spread_over_realizations() {
    let dep = build_rail_deployment(700.0, 10.0).unwrap();
    let profile = TapProfile::default();
    let pose = train_at(200.0);
    let n = 1000;
    let mut scatter_over_los = 0.0;
    let mut mean_power = vec![0.0; profile.taps.len()];
    let mut delays = Vec::new();
    for r in 0..n {
        let taps = hst_taps(&dep.sites[0], &pose, &profile, 0.0, &ctx(r)).unwrap();
        let los = taps.los().unwrap().gain.norm_sqr();
        scatter_over_los += (taps.total_power() - los) / los / n as f64;
        for (acc, t) in mean_power.iter_mut().zip(&taps.taps) {
            *acc += t.gain.norm_sqr() / n as f64;
        }
        delays = taps.taps.iter().map(|t| t.delay).collect();
    }
    let k_lin = 10f64.powf(profile.k_factor_db() / 10.0);
    let k_measured = 1.0 / scatter_over_los;
    assert!((k_measured / k_lin - 1.0).abs() < 0.05, "K {k_measured} vs {k_lin}");

    let total: f64 = mean_power.iter().sum();
    let mean_delay: f64 = delays.iter().zip(&mean_power).map(|(d, p)| d * p).sum::<f64>() / total;
    let second: f64 = delays.iter().zip(&mean_power).map(|(d, p)| d * d * p).sum::<f64>() / total;
    let spread = (second - mean_delay * mean_delay).sqrt();
    let expected = profile.rms_delay_spread();
    assert!(
        (spread / expected - 1.0).abs() < 0.05,
        "delay spread {spread} vs {expected}"
    );
}

#[test]
fn link_power_is_exact_per_realization() {
    let dep = build_rail_deployment(700.0, 10.0).unwrap();
    for r in 0..20 {
        let c = TapContext {
            link_power: 3.5e-9,
            ..ctx(r)
        };
        let taps = hst_taps(&dep.sites[1], &train_at(420.0), &TapProfile::default(), 0.0, &c).unwrap();
        assert!((taps.total_power() / 3.5e-9 - 1.0).abs() < 1e-12);
    }
}

#[test]
fn cdd_on_a_single_trp_only_rotates_phase() {
    let num = Numerology::default();
    let dep = build_rail_deployment(700.0, 10.0).unwrap();
    let taps = hst_taps(&dep.sites[0], &train_at(150.0), &TapProfile::default(), 0.0, &ctx(3)).unwrap();
    let plain = combined_freq_response(std::slice::from_ref(&taps), &[0.0], &[0.0], &num).unwrap();
    let shifted = combined_freq_response(&[taps], &[1e-6], &[0.0], &num).unwrap();
    for (a, b) in plain.h.iter().zip(&shifted.h) {
        assert!((a.norm() - b.norm()).abs() < 1e-12 * (1.0 + a.norm()));
    }
    assert!((plain.total_power() / shifted.total_power() - 1.0).abs() < 1e-12);
}

#[test]
fn precompensated_los_is_constant_within_slot() {
    let num = Numerology::default();
    let los_only = TapProfile {
        taps: vec![TapSpec {
            delay_ns: 0.0,
            power_db: 0.0,
            aod_deg: 0.0,
            aoa_deg: 0.0,
            los: true,
        }],
    };
    let dep = build_rail_deployment(700.0, 10.0).unwrap();
    let pose = train_at(350.0);
    let links: Vec<ChannelTaps> = dep.sites[..2]
        .iter()
        .map(|s| hst_taps(s, &pose, &los_only, 0.0, &ctx(0)).unwrap())
        .collect();
    let shifts: Vec<f64> = links.iter().map(|l| l.los().unwrap().doppler).collect();
    let r = combined_freq_response(&links, &[0.0, 0.0], &shifts, &num).unwrap();
    for s in 1..r.n_symbols {
        for k in 0..r.n_subcarriers {
            assert!((r.at(s, k) - r.at(0, k)).norm() < 1e-12);
        }
    }
    let raw = combined_freq_response(&links, &[0.0, 0.0], &[0.0, 0.0], &num).unwrap();
    let spread = (0..raw.n_symbols).map(|s| raw.at(s, 0).norm()).fold(0.0f64, f64::max)
        - (0..raw.n_symbols)
            .map(|s| raw.at(s, 0).norm())
            .fold(f64::INFINITY, f64::min);
    assert!(spread > 0.1 * raw.at(0, 0).norm().max(1e-30));
}

#[test]
fn single_best_link_carries_less_power_than_the_sum() {
    let num = Numerology::default();
    let dep = build_rail_deployment(700.0, 10.0).unwrap();
    let pose = train_at(500.0);
    let links: Vec<ChannelTaps> = dep
        .sites
        .iter()
        .map(|s| {
            let c = TapContext {
                link_id: s.id as u64,
                ..ctx(1)
            };
            hst_taps(s, &pose, &TapProfile::default(), 0.0, &c).unwrap()
        })
        .collect();
    let zeros = vec![0.0; links.len()];
    let sfn = combined_freq_response(&links, &vec![1e-6; links.len()], &zeros, &num).unwrap();
    let dps = combined_freq_response(&links[1..2], &[0.0], &[0.0], &num).unwrap();
    let res = (num.symbols_per_slot * num.n_subcarriers()) as f64;
    let sum_power: f64 = links.iter().map(|l| l.total_power()).sum();
    assert!(dps.total_power() / res <= sum_power);
    assert!((sfn.total_power() / res / sum_power - 1.0).abs() < 0.5);
}

proptest! {
    #[test]
    fn two_ray_matches_closed_form(
        a1 in 0.1f64..2.0, a2 in 0.1f64..2.0,
        p1 in 0.0f64..TAU, p2 in 0.0f64..TAU,
        nu1 in -1000.0f64..1000.0, nu2 in -1000.0f64..1000.0,
        tau1 in 0.0f64..5e-6, tau2 in 0.0f64..5e-6,
        cdd in 0.0f64..2e-6,
    ) {
        let num = Numerology::default();
        let r = combined_freq_response(
            &[
                one_tap(Complex64::from_polar(a1, p1), nu1, tau1),
                one_tap(Complex64::from_polar(a2, p2), nu2, tau2),
            ],
            &[0.0, cdd],
            &[0.0, 0.0],
            &num,
        )
        .unwrap();
        for s in [0, 6, 13] {
            let t = r.symbol_times[s];
            for k in [0, 17, 299, 599] {
                let f = r.subcarrier_freq(k);
                let dphi = (p1 - p2) + TAU * (nu1 - nu2) * t - TAU * f * (tau1 - tau2 - cdd);
                let closed = a1 * a1 + a2 * a2 + 2.0 * a1 * a2 * dphi.cos();
                prop_assert!((r.at(s, k).norm_sqr() - closed).abs() < 1e-9 * (a1 + a2).powi(2));
            }
        }
    }
}
