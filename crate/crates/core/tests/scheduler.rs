use proptest::prelude::*;

use ntsim_core::scheduler::{
    classify_users, density_sweep, simulate_cell, DropPolicy, MacroCellConfig, MacroCells, Population, StaticUser,
    SweepConfig, TrafficConfig, UserGain,
};

fn no_warmup() -> MacroCellConfig {
    MacroCellConfig {
        warmup_s: 0.0,
        ..Default::default()
    }
}

fn backlogged(gains: &[f64]) -> Population {
    Population::Static(
        gains
            .iter()
            .map(|&gain_db| StaticUser {
                gain_db,
                file_bits: f64::INFINITY,
            })
            .collect(),
    )
}

fn user_tputs(cfg: &MacroCellConfig, gains: &[f64], rho: f64, duration: f64) -> Vec<f64> {
    let cells = MacroCells::new(cfg, 1).unwrap();
    let run = simulate_cell(
        &cells,
        &backlogged(gains),
        &DropPolicy::quantile(rho).unwrap(),
        duration,
        1,
    )
    .unwrap();
    run.users.iter().map(|u| u.throughput_bps(duration).unwrap()).collect()
}

#[test]
fn two_users_share_or_yield_by_hand() {
    let cfg = no_warmup();
    let (g1, g2) = (-100.0, -140.0);
    let r1 = 100e6 * (1.0 + 10f64.powf(cfg.sinr_db(g1) / 10.0)).log2().min(7.4);
    let r2 = 100e6 * (1.0 + 10f64.powf(cfg.sinr_db(g2) / 10.0)).log2().min(7.4);
    let shared = user_tputs(&cfg, &[g1, g2], 0.0, 2.0);
    let mean = shared.iter().sum::<f64>() / 2.0;
    assert!((mean / ((r1 + r2) / 4.0) - 1.0).abs() < 1e-6);
    let dropped = user_tputs(&cfg, &[g1, g2], 0.5, 2.0);
    assert!((dropped[0] / r1 - 1.0).abs() < 1e-6);
    assert_eq!(dropped[1], 0.0);
    assert!((dropped.iter().sum::<f64>() / 2.0 / (r1 / 2.0) - 1.0).abs() < 1e-6);
}

#[test]
fn strongest_user_never_loses_from_deferral() {
    let cfg = no_warmup();
    let gains = [-92.0, -101.0, -107.0, -115.0, -123.0, -131.0, -138.0];
    let base = user_tputs(&cfg, &gains, 0.0, 3.0);
    for rho in [0.15, 0.3, 0.5, 0.85] {
        let t = user_tputs(&cfg, &gains, rho, 3.0);
        assert!(t[0] >= base[0], "rho {rho}: {} < {}", t[0], base[0]);
    }
}

#[test]
fn backlogged_cell_never_idles() {
    let cfg = no_warmup();
    let cells = MacroCells::new(&cfg, 1).unwrap();
    let gains = [-95.0, -110.0, -125.0];
    let dur = 1.5;
    let run = simulate_cell(&cells, &backlogged(&gains), &DropPolicy::quantile(0.0).unwrap(), dur, 1).unwrap();
    let busy_slots: f64 = run
        .users
        .iter()
        .zip(&gains)
        .map(|(u, &g)| u.served_bits / (cfg.link_rate(g) * cfg.slot_s))
        .sum();
    assert!((busy_slots - run.slots as f64).abs() < 1e-6);
    assert!(run.total_served_bits() <= dur * run.peak_cell_rate_bps * run.n_cells as f64);
}

#[test]
fn deferred_vehicles_are_served_later() {
    let cfg = MacroCellConfig {
        warmup_s: 0.0,
        record_traces: true,
        ..Default::default()
    };
    let cells = MacroCells::new(&cfg, 4).unwrap();
    let traffic = TrafficConfig {
        density_mbps_km2: 1000.0,
        ..Default::default()
    };
    let run = simulate_cell(
        &cells,
        &Population::Poisson(traffic),
        &DropPolicy::quantile(0.5).unwrap(),
        80.0,
        4,
    )
    .unwrap();
    let recovered = run
        .users
        .iter()
        .filter(|u| {
            let first_deferred = u.trace.iter().position(|s| !s.eligible);
            first_deferred.is_some_and(|i| u.trace[i..].iter().any(|s| s.eligible))
        })
        .count();
    assert!(recovered > 0);
    let load = run
        .users
        .iter()
        .flat_map(|u| u.trace.iter())
        .fold((0usize, 0usize), |(e, n), s| (e + s.eligible as usize, n + 1));
    let share = load.0 as f64 / load.1 as f64;
    assert!((0.45..=0.55).contains(&share), "eligible share {share}");
    assert!(run.users.iter().all(|u| u.served_bits <= u.file_bits * (1.0 + 1e-12)));
}

#[test]
fn throughput_falls_with_density() {
    let cfg = SweepConfig {
        cells: MacroCellConfig {
            warmup_s: 20.0,
            ..Default::default()
        },
        duration_s: 120.0,
        target_users: 40,
        max_duration_s: 2000.0,
        ..Default::default()
    };
    let points = density_sweep(&cfg, &[10.0, 500.0, 2000.0], &[0.0], 2, 7).unwrap();
    let tput: Vec<f64> = points.iter().map(|p| p.mean_user_tput_mbps).collect();
    assert!(tput[0] > tput[1] && tput[1] > tput[2], "{tput:?}");
    let again = density_sweep(&cfg, &[10.0, 500.0, 2000.0], &[0.0], 2, 7).unwrap();
    assert_eq!(format!("{points:?}"), format!("{again:?}"));
}

fn users(gains: &[f64]) -> Vec<UserGain> {
    gains
        .iter()
        .enumerate()
        .map(|(i, &gain_db)| UserGain { id: i as u64, gain_db })
        .collect()
}

proptest! {
    #[test]
    fn quantile_deferral_is_offset_invariant(
        gains in prop::collection::vec(-160.0f64..-60.0, 0..60),
        rho in 0.0f64..=1.0,
        offset in -40.0f64..40.0,
    ) {
        let policy = DropPolicy::quantile(rho).unwrap();
        let a = classify_users(&users(&gains), &policy);
        let shifted: Vec<f64> = gains.iter().map(|g| g + offset).collect();
        let b = classify_users(&users(&shifted), &policy);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.deferred.len(), (rho * gains.len() as f64 + 1e-9).floor() as usize);
        prop_assert_eq!(a.deferred.len() + a.eligible.len(), gains.len());
        let worst_eligible = a.eligible.iter().map(|&i| gains[i as usize]).fold(f64::INFINITY, f64::min);
        let best_deferred = a.deferred.iter().map(|&i| gains[i as usize]).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(best_deferred <= worst_eligible);
    }

    #[test]
    fn deferral_ignores_input_order(gains in prop::collection::vec(-130.0f64..-90.0, 1..40), rho in 0.0f64..=1.0) {
        let policy = DropPolicy::quantile(rho).unwrap();
        let forward = classify_users(&users(&gains), &policy);
        let mut rev = users(&gains);
        rev.reverse();
        prop_assert_eq!(forward, classify_users(&rev, &policy));
    }
}
