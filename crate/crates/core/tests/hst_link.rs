use ntsim_core::channel::{TapProfile, TapSpec};
use ntsim_core::hst_link::{run_hst_sweep, throughput_vs_position, BlerCurve, HstConfig, Scheme, SlotResult};
use ntsim_core::scenario::{Deployment, Trajectory};

fn segment(cfg: &HstConfig, from_m: f64, slots: usize) -> (Deployment, Trajectory) {
    let dep = cfg.deployment().unwrap();
    let tr = cfg.trajectory(&dep).unwrap();
    let start = tr.samples.iter().position(|s| s.position.x >= from_m).unwrap();
    let samples = tr.samples[start..start + slots].to_vec();
    (
        dep,
        Trajectory {
            samples,
            sample_period: tr.sample_period,
        },
    )
}

fn with_threshold(threshold_db: f64, slope_db: f64) -> HstConfig {
    HstConfig {
        bler: BlerCurve { threshold_db, slope_db },
        ..Default::default()
    }
}

fn delivered(slots: &[SlotResult]) -> u64 {
    slots.iter().map(|s| s.delivered_bits).sum()
}

fn los_only() -> TapProfile {
    TapProfile {
        taps: vec![TapSpec {
            delay_ns: 0.0,
            power_db: 0.0,
            aod_deg: 0.0,
            aoa_deg: 0.0,
            los: true,
        }],
    }
}

#[test]
fn error_free_link_delivers_a_block_every_slot() {
    let cfg = with_threshold(-1000.0, 0.3);
    let tbs = cfg.tbs().unwrap();
    let (dep, tr) = segment(&cfg, 300.0, 400);
    for scheme in Scheme::ALL {
        let slots = run_hst_sweep(&dep, &tr, scheme, &cfg, 3).unwrap();
        assert!(slots
            .iter()
            .all(|s| s.delivered_bits == tbs && s.harq_attempts_used == 1));
        let curve = throughput_vs_position(&slots, 5.0, cfg.numerology.slot_duration).unwrap();
        let peak = cfg.peak_throughput_bps().unwrap();
        assert!(curve.iter().all(|p| (p.throughput_bps / peak - 1.0).abs() < 1e-12));
    }
}

#[test]
fn hopeless_link_cycles_through_the_attempt_budget() {
    let cfg = with_threshold(1000.0, 0.3);
    let (dep, tr) = segment(&cfg, 300.0, 40);
    let slots = run_hst_sweep(&dep, &tr, Scheme::Sfn, &cfg, 3).unwrap();
    assert_eq!(delivered(&slots), 0);
    let attempts: Vec<u32> = slots.iter().map(|s| s.harq_attempts_used).collect();
    for (i, a) in attempts.iter().enumerate() {
        assert_eq!(*a, (i as u32 % cfg.max_attempts) + 1);
    }
}

#[test]
fn throughput_falls_as_the_threshold_rises() {
    let mut last = u64::MAX;
    for th in [4.0, 7.0, 10.0, 13.0, 16.0] {
        let cfg = with_threshold(th, 0.3);
        let (dep, tr) = segment(&cfg, 250.0, 1500);
        let bits = delivered(&run_hst_sweep(&dep, &tr, Scheme::Sfn, &cfg, 9).unwrap());
        assert!(bits <= last, "threshold {th} dB delivered {bits} > {last}");
        last = bits;
    }
}

#[test]
fn second_attempt_always_succeeding_halves_the_rate() {
    let probe = HstConfig {
        profile: los_only(),
        ..with_threshold(-1000.0, 0.3)
    };
    let (dep, tr) = segment(&probe, 150.0, 200);
    let first = run_hst_sweep(&dep, &tr, Scheme::Dps, &probe, 1).unwrap();
    let lo = first.iter().map(|s| s.effective_snr_db).fold(f64::INFINITY, f64::min);
    let hi = first
        .iter()
        .map(|s| s.effective_snr_db)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(hi - lo < 1.0, "segment SNR varies by {} dB", hi - lo);

    let cfg = HstConfig {
        profile: los_only(),
        ..with_threshold(hi + 1.5, 0.01)
    };
    let slots = run_hst_sweep(&dep, &tr, Scheme::Dps, &cfg, 1).unwrap();
    let tbs = cfg.tbs().unwrap();
    for (i, s) in slots.iter().enumerate() {
        assert_eq!(s.harq_attempts_used, 1 + (i % 2) as u32);
        assert_eq!(s.delivered_bits, if i % 2 == 1 { tbs } else { 0 });
    }
    assert_eq!(delivered(&slots), tbs * slots.len() as u64 / 2);
}

#[test]
fn slot_results_respect_the_harq_budget() {
    let cfg = HstConfig::default();
    let tbs = cfg.tbs().unwrap();
    let (dep, tr) = segment(&cfg, 200.0, 600);
    for scheme in [Scheme::Sfn, Scheme::Dps] {
        let slots = run_hst_sweep(&dep, &tr, scheme, &cfg, 5).unwrap();
        assert!(slots
            .iter()
            .all(|s| (1..=cfg.max_attempts).contains(&s.harq_attempts_used)
                && (s.delivered_bits == 0 || s.delivered_bits == tbs)));
        assert_eq!(slots, run_hst_sweep(&dep, &tr, scheme, &cfg, 5).unwrap());
    }
}

#[test]
fn scheme_names_round_trip() {
    for s in Scheme::ALL {
        assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
    }
    assert!("SFN_FOO".parse::<Scheme>().is_err());
}
