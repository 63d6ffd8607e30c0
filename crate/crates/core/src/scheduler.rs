//! Path-gain deferral scheduling on a macro-cell highway.
//!
//! Sites sit on a ring road so every cell sees the same mix of traffic. Each
//! classification epoch the users with the lowest path gain are deferred;
//! within an epoch every cell serves its eligible backlogged users in
//! slot-by-slot round robin.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{MacroPathLoss, ShadowTable};
use crate::rng::{self, Tag};
use crate::scenario::{build_linear_deployment, Deployment, ScenarioKind};
use crate::stats::ErrorCdf;
use crate::{Error, Result};

/// Reference values reported for the highway macro study. Only the downlink
/// is simulated; uplink numbers are kept for comparison tables.
pub mod reference {
    pub const CONGESTED_DENSITY_MBPS_KM2: f64 = 450.0;
    pub const DROP_FREE_DENSITY_MBPS_KM2: f64 = 760.0;
    pub const DL_FILE_TIME_S: f64 = 50.0;
    pub const UL_FILE_TIME_S: f64 = 250.0;
    pub const DL_FILE_TIME_DROP50_S: f64 = 19.0;
    pub const UL_FILE_TIME_DROP50_S: f64 = 31.0;
    pub const DL_COVERAGE_RATE_BPS: f64 = 10e6;
    pub const UL_COVERAGE_RATE_BPS: f64 = 2e6;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Defer the `floor(ρ n)` users with the lowest gain.
    Quantile,
    /// Defer every user whose gain is below the given value, dB.
    AbsoluteDb(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropPolicy {
    pub drop_fraction: f64,
    pub threshold_mode: ThresholdMode,
}

impl DropPolicy {
    pub fn quantile(drop_fraction: f64) -> Result<Self> {
        let p = Self {
            drop_fraction,
            threshold_mode: ThresholdMode::Quantile,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.drop_fraction) {
            return Err(Error::config(format!(
                "drop fraction must lie in [0, 1], got {}",
                self.drop_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserGain {
    pub id: u64,
    pub gain_db: f64,
}

/// Eligible and deferred ids, each ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Classification {
    pub eligible: Vec<u64>,
    pub deferred: Vec<u64>,
}

/// Splits users into the eligible and deferred groups.
///
/// In quantile mode exactly `floor(ρ n)` users are deferred: lowest gain
/// first, and among equal gains the higher id first.
pub fn classify_users(users: &[UserGain], policy: &DropPolicy) -> Classification {
    let mut out = Classification::default();
    for (u, deferred) in users.iter().zip(deferral_mask(users, policy)) {
        if deferred {
            out.deferred.push(u.id);
        } else {
            out.eligible.push(u.id);
        }
    }
    out.eligible.sort_unstable();
    out.deferred.sort_unstable();
    out
}

fn deferral_mask(users: &[UserGain], policy: &DropPolicy) -> Vec<bool> {
    match policy.threshold_mode {
        ThresholdMode::AbsoluteDb(th) => users.iter().map(|u| u.gain_db < th).collect(),
        ThresholdMode::Quantile => {
            let n = users.len();
            let k = ((policy.drop_fraction * n as f64) + 1e-9).floor() as usize;
            let mut mask = vec![false; n];
            if k == 0 {
                return mask;
            }
            let mut order: Vec<usize> = (0..n).collect();
            let cmp = |&a: &usize, &b: &usize| {
                users[a]
                    .gain_db
                    .total_cmp(&users[b].gain_db)
                    .then(users[b].id.cmp(&users[a].id))
            };
            if k < n {
                order.select_nth_unstable_by(k - 1, cmp);
            }
            for &i in &order[..k.min(n)] {
                mask[i] = true;
            }
            mask
        }
    }
}

/// Offered traffic. Offered load is `density × road length × service width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    pub density_mbps_km2: f64,
    pub file_size_bits: f64,
    pub vehicle_speed_kmh: f64,
    /// Width of the strip around the road that generates traffic.
    pub service_width_m: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            density_mbps_km2: 450.0,
            file_size_bits: 4e9,
            vehicle_speed_kmh: 140.0,
            service_width_m: 400.0,
        }
    }
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.density_mbps_km2 >= 0.0) {
            return Err(Error::config("traffic density must be non-negative"));
        }
        if !(self.file_size_bits > 0.0) || !(self.service_width_m > 0.0) || !(self.vehicle_speed_kmh >= 0.0) {
            return Err(Error::config("file size and service width must be positive"));
        }
        Ok(())
    }

    /// File arrivals per second on a road of `road_length_m`.
    pub fn arrival_rate(&self, road_length_m: f64) -> f64 {
        let area_km2 = road_length_m * self.service_width_m * 1e-6;
        self.density_mbps_km2 * 1e6 * area_km2 / self.file_size_bits
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticUser {
    pub gain_db: f64,
    /// `f64::INFINITY` keeps the user backlogged for the whole run.
    pub file_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Population {
    /// Vehicles arriving as a Poisson process, entering at cell edges.
    Poisson(TrafficConfig),
    /// Users present from t = 0 with fixed gains, all served by cell 0.
    Static(Vec<StaticUser>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacroCellConfig {
    pub n_sites: usize,
    pub isd_m: f64,
    pub site_offset_m: f64,
    pub site_height_m: f64,
    pub pathloss: MacroPathLoss,
    /// SNR at horizontal distance `isd / 2` without shadowing.
    pub cell_edge_snr_db: f64,
    pub interference_margin_db: f64,
    pub bandwidth_hz: f64,
    pub peak_spectral_efficiency: f64,
    pub slot_s: f64,
    pub epoch_s: f64,
    /// Users arriving before this time are simulated but not reported.
    pub warmup_s: f64,
    pub record_traces: bool,
}

impl Default for MacroCellConfig {
    fn default() -> Self {
        Self {
            n_sites: 6,
            isd_m: 1732.0,
            site_offset_m: 35.0,
            site_height_m: 35.0,
            pathloss: MacroPathLoss::default(),
            cell_edge_snr_db: 0.0,
            interference_margin_db: 3.0,
            bandwidth_hz: 100e6,
            peak_spectral_efficiency: 7.4,
            slot_s: 1e-3,
            epoch_s: 0.1,
            warmup_s: 100.0,
            record_traces: false,
        }
    }
}

impl MacroCellConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sites == 0 || !(self.isd_m > 0.0) {
            return Err(Error::config("macro layout needs at least one site and a positive isd"));
        }
        if !(self.bandwidth_hz > 0.0) || !(self.peak_spectral_efficiency > 0.0) {
            return Err(Error::config("bandwidth and peak spectral efficiency must be positive"));
        }
        if !(self.slot_s > 0.0) || !(self.epoch_s >= self.slot_s) {
            return Err(Error::config("epoch must be at least one positive slot"));
        }
        if !(self.warmup_s >= 0.0) {
            return Err(Error::config("warmup must be non-negative"));
        }
        Ok(())
    }

    pub fn road_length_m(&self) -> f64 {
        self.n_sites as f64 * self.isd_m
    }

    pub fn slots_per_epoch(&self) -> usize {
        (self.epoch_s / self.slot_s).round() as usize
    }

    pub fn deployment(&self) -> Result<Deployment> {
        build_linear_deployment(
            self.isd_m,
            self.site_offset_m,
            self.site_height_m,
            self.isd_m * (self.n_sites - 1).max(1) as f64,
            ScenarioKind::HighwayMacro,
        )
        .map(|mut d| {
            d.sites.truncate(self.n_sites);
            d
        })
    }

    /// Transmit power over noise, dB, so that path gain plus this offset is SNR.
    pub fn noise_offset_db(&self) -> f64 {
        self.cell_edge_snr_db - self.pathloss.mean_gain_db(self.isd_m / 2.0)
    }

    pub fn sinr_db(&self, gain_db: f64) -> f64 {
        gain_db + self.noise_offset_db() - self.interference_margin_db
    }

    /// `B · min(log2(1 + SINR), SE_max)`, bit/s.
    pub fn link_rate(&self, gain_db: f64) -> f64 {
        let sinr = 10f64.powf(self.sinr_db(gain_db) / 10.0);
        self.bandwidth_hz * (1.0 + sinr).log2().min(self.peak_spectral_efficiency)
    }

    pub fn peak_rate(&self) -> f64 {
        self.bandwidth_hz * self.peak_spectral_efficiency
    }
}

/// Ring-road propagation with per-site shadowing tables.
#[derive(Debug, Clone)]
pub struct MacroCells {
    pub config: MacroCellConfig,
    pub deployment: Deployment,
    pathloss: MacroPathLoss,
    shadow: Vec<ShadowTable>,
}

impl MacroCells {
    /// Shadowing is keyed by `seed`; the ring closes after `n_sites · isd`.
    pub fn new(config: &MacroCellConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let deployment = config.deployment()?;
        let pathloss = MacroPathLoss {
            wrap_length_m: Some(config.road_length_m()),
            seed,
            ..config.pathloss
        };
        let shadow = (0..config.n_sites)
            .map(|id| ShadowTable::new(&pathloss, id))
            .collect::<Result<_>>()?;
        Ok(Self {
            config: *config,
            deployment,
            pathloss,
            shadow,
        })
    }

    pub fn pathloss(&self) -> &MacroPathLoss {
        &self.pathloss
    }

    /// Path gain, dB, from `site` to a vehicle at ring coordinate `s`.
    pub fn gain_db(&self, site: usize, s: f64) -> f64 {
        let len = self.config.road_length_m();
        let site_pos = &self.deployment.sites[site].position;
        let mut dx = (s - site_pos.x).rem_euclid(len);
        if dx > len / 2.0 {
            dx -= len;
        }
        let d = dx.hypot(site_pos.y).max(1.0);
        let mut g = self.pathloss.mean_gain_db(d);
        if self.pathloss.shadow_sigma_db > 0.0 {
            g += self.pathloss.shadow_sigma_db * self.shadow[site].value(s);
        }
        g
    }

    /// Strongest of the five sites nearest to ring coordinate `s`, and its gain.
    pub fn best_site(&self, s: f64) -> (usize, f64) {
        let n = self.shadow.len() as i64;
        let home = (s / self.config.isd_m).round() as i64;
        let span = n.min(5);
        (0..span)
            .map(|k| (home - span / 2 + k).rem_euclid(n) as usize)
            .map(|k| (k, self.gain_db(k, s)))
            .fold((0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub position_m: f64,
    pub gain_db: f64,
    pub eligible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserRecord {
    pub id: u64,
    pub arrival_s: f64,
    /// First epoch boundary after arrival.
    pub activation_s: f64,
    pub completion_s: Option<f64>,
    pub file_bits: f64,
    pub served_bits: f64,
    pub backlog_bits: f64,
    /// Time spent in the eligible group while backlogged.
    pub eligible_s: f64,
    pub admitted: bool,
    /// Per-epoch samples, kept only with `record_traces`.
    pub trace: Vec<TraceSample>,
}

impl UserRecord {
    /// Departure time, or the end of the run for unfinished users.
    pub fn end_s(&self, duration: f64) -> f64 {
        self.completion_s.unwrap_or(duration)
    }

    pub fn time_in_system(&self, duration: f64) -> f64 {
        self.end_s(duration) - self.arrival_s
    }

    pub fn throughput_bps(&self, duration: f64) -> Option<f64> {
        let t = self.time_in_system(duration);
        (t > 0.0).then(|| self.served_bits / t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRun {
    pub users: Vec<UserRecord>,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub n_cells: usize,
    pub slots: usize,
    pub peak_cell_rate_bps: f64,
}

impl CellRun {
    /// Users arriving after the warm-up.
    pub fn reported(&self) -> impl Iterator<Item = &UserRecord> {
        self.users.iter().filter(move |u| u.arrival_s >= self.warmup_s)
    }

    pub fn total_served_bits(&self) -> f64 {
        self.users.iter().map(|u| u.served_bits).sum()
    }

    pub fn mean_user_throughput_bps(&self) -> Option<f64> {
        mean(self.reported().filter_map(|u| u.throughput_bps(self.duration_s)))
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

struct Active {
    record: UserRecord,
    entry_m: f64,
    direction: f64,
    fixed_gain: Option<f64>,
    cell: usize,
    gain_db: f64,
    rate: f64,
    eligible: bool,
}

struct Arrival {
    t: f64,
    entry_m: f64,
    direction: f64,
}

fn poisson_arrivals(cfg: &MacroCellConfig, traffic: &TrafficConfig, duration: f64, seed: u64) -> Vec<Arrival> {
    let lambda = traffic.arrival_rate(cfg.road_length_m());
    let mut out = Vec::new();
    if !(lambda > 0.0) {
        return out;
    }
    let mut t = 0.0;
    for i in 0u64.. {
        let mut r = rng::stream(seed, Tag::Arrivals, i, 0);
        let e = -(1.0 - rng::uniform(&mut r)).ln();
        t += e / lambda;
        if t >= duration {
            break;
        }
        let cell = r.random_range(0..cfg.n_sites);
        let direction = if r.random::<bool>() { 1.0 } else { -1.0 };
        out.push(Arrival {
            t,
            entry_m: (cell as f64 + 0.5) * cfg.isd_m,
            direction,
        });
    }
    out
}

/// Runs one replication for `duration` seconds.
pub fn simulate_cell(
    cells: &MacroCells,
    population: &Population,
    policy: &DropPolicy,
    duration: f64,
    seed: u64,
) -> Result<CellRun> {
    policy.validate()?;
    if !(duration > 0.0) {
        return Err(Error::config("simulation duration must be positive"));
    }
    let cfg = &cells.config;
    let n_cells = cfg.n_sites;
    let slots_per_epoch = cfg.slots_per_epoch();
    let n_epochs = (duration / cfg.epoch_s).ceil() as usize;
    let (speed, file_bits) = match population {
        Population::Poisson(t) => {
            t.validate()?;
            (t.vehicle_speed_kmh / 3.6, t.file_size_bits)
        }
        Population::Static(_) => (0.0, f64::INFINITY),
    };

    let mut pending: std::vec::IntoIter<Arrival> = Vec::new().into_iter();
    let mut active: Vec<Active> = Vec::new();
    match population {
        Population::Poisson(traffic) => {
            pending = poisson_arrivals(cfg, traffic, duration, seed).into_iter();
        }
        Population::Static(users) => {
            for (i, u) in users.iter().enumerate() {
                if !(u.file_bits > 0.0) {
                    return Err(Error::config("static user file size must be positive"));
                }
                active.push(Active {
                    record: new_record(i as u64, 0.0, 0.0, u.file_bits),
                    entry_m: 0.0,
                    direction: 0.0,
                    fixed_gain: Some(u.gain_db),
                    cell: 0,
                    gain_db: u.gain_db,
                    rate: cfg.link_rate(u.gain_db),
                    eligible: false,
                });
            }
        }
    }
    let mut pending = pending.peekable();
    let mut next_id = active.len() as u64;
    let mut done: Vec<UserRecord> = Vec::new();
    let mut last_served: Vec<Option<u64>> = vec![None; n_cells];
    let mut queues: Vec<Vec<usize>> = vec![Vec::new(); n_cells];
    let mut slots = 0usize;
    let mut gains: Vec<UserGain> = Vec::new();

    for epoch in 0..n_epochs {
        let t0 = epoch as f64 * cfg.epoch_s;
        if t0 >= duration {
            break;
        }
        while let Some(a) = pending.next_if(|a| a.t <= t0) {
            active.push(Active {
                record: new_record(next_id, a.t, t0, file_bits),
                entry_m: a.entry_m,
                direction: a.direction,
                fixed_gain: None,
                cell: 0,
                gain_db: 0.0,
                rate: 0.0,
                eligible: false,
            });
            next_id += 1;
        }
        if active.is_empty() {
            continue;
        }

        gains.clear();
        for u in active.iter_mut() {
            if u.fixed_gain.is_none() {
                let s = u.entry_m + u.direction * speed * (t0 - u.record.arrival_s);
                let (cell, g) = cells.best_site(s);
                u.cell = cell;
                u.gain_db = g;
                u.rate = cfg.link_rate(g);
            }
            gains.push(UserGain {
                id: u.record.id,
                gain_db: u.gain_db,
            });
        }
        let mask = deferral_mask(&gains, policy);
        for q in queues.iter_mut() {
            q.clear();
        }
        for (i, (u, &deferred)) in active.iter_mut().zip(&mask).enumerate() {
            u.eligible = !deferred;
            u.record.admitted |= u.eligible;
            if u.eligible {
                queues[u.cell].push(i);
            }
            if cfg.record_traces {
                let s = u.entry_m + u.direction * speed * (t0 - u.record.arrival_s);
                u.record.trace.push(TraceSample {
                    t: t0,
                    position_m: s.rem_euclid(cfg.road_length_m()),
                    gain_db: u.gain_db,
                    eligible: u.eligible,
                });
            }
        }

        let epoch_slots = slots_per_epoch.min(((duration - t0) / cfg.slot_s).round() as usize);
        let span = epoch_slots as f64 * cfg.slot_s;
        for u in active.iter_mut().filter(|u| u.eligible) {
            u.record.eligible_s += span;
        }
        for (cell, queue) in queues.iter_mut().enumerate() {
            // Resume the rotation after the last user this cell served.
            let mut cursor = last_served[cell].map_or(0, |id| queue.partition_point(|&i| active[i].record.id <= id));
            for slot in 0..epoch_slots {
                if queue.is_empty() {
                    break;
                }
                if cursor >= queue.len() {
                    cursor = 0;
                }
                let u = &mut active[queue[cursor]];
                let bits = (u.rate * cfg.slot_s).min(u.record.backlog_bits);
                u.record.served_bits += bits;
                u.record.backlog_bits -= bits;
                last_served[cell] = Some(u.record.id);
                if u.record.backlog_bits <= 0.0 {
                    let end = t0 + (slot + 1) as f64 * cfg.slot_s;
                    u.record.backlog_bits = 0.0;
                    u.record.completion_s = Some(end);
                    // Eligible time was credited for the whole epoch.
                    u.record.eligible_s -= t0 + epoch_slots as f64 * cfg.slot_s - end;
                    queue.remove(cursor);
                } else {
                    cursor += 1;
                }
            }
        }
        slots += epoch_slots;

        if active.iter().any(|u| u.record.completion_s.is_some()) {
            let (finished, still): (Vec<_>, Vec<_>) = active.drain(..).partition(|u| u.record.completion_s.is_some());
            done.extend(finished.into_iter().map(|u| u.record));
            active = still;
        }
    }

    let mut users = done;
    users.extend(active.into_iter().map(|u| u.record));
    users.sort_by_key(|u| u.id);
    Ok(CellRun {
        users,
        duration_s: duration,
        warmup_s: cfg.warmup_s,
        n_cells,
        slots,
        peak_cell_rate_bps: cfg.peak_rate(),
    })
}

fn new_record(id: u64, arrival: f64, activation: f64, file_bits: f64) -> UserRecord {
    UserRecord {
        id,
        arrival_s: arrival,
        activation_s: activation,
        completion_s: None,
        file_bits,
        served_bits: 0.0,
        backlog_bits: file_bits,
        eligible_s: 0.0,
        admitted: false,
        trace: Vec::new(),
    }
}

/// Completion time and coverage over the reported users of several runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FileTransferReport {
    /// Median eligible time from activation to completion over completed users.
    pub dl_seconds: f64,
    /// Eligible time over time in the system, pooled over users.
    pub coverage_fraction: f64,
    /// Share of users admitted at least once.
    pub ever_admitted_fraction: f64,
    pub completed: usize,
    pub users: usize,
}

impl FileTransferReport {
    pub fn from_runs(runs: &[CellRun]) -> Self {
        let mut times = Vec::new();
        let (mut eligible, mut present, mut admitted, mut users) = (0.0, 0.0, 0usize, 0usize);
        for run in runs {
            for u in run.reported() {
                users += 1;
                admitted += u.admitted as usize;
                eligible += u.eligible_s;
                present += u.end_s(run.duration_s) - u.activation_s;
                if u.completion_s.is_some() {
                    times.push(u.eligible_s);
                }
            }
        }
        let completed = times.len();
        let dl_seconds = ErrorCdf::from_samples(times).map_or(f64::NAN, |c| c.median());
        Self {
            dl_seconds,
            coverage_fraction: if present > 0.0 { eligible / present } else { f64::NAN },
            ever_admitted_fraction: if users > 0 {
                admitted as f64 / users as f64
            } else {
                f64::NAN
            },
            completed,
            users,
        }
    }
}

/// Seed of replication `rep`, shared by every point of a sweep.
pub fn replication_seed(seed: u64, rep: usize) -> u64 {
    rng::stream(seed, Tag::Arrivals, u64::MAX, rep as u64).random()
}

fn run_replication(
    cfg: &MacroCellConfig,
    traffic: &TrafficConfig,
    policy: &DropPolicy,
    duration: f64,
    seed: u64,
) -> Result<CellRun> {
    let cells = MacroCells::new(cfg, seed)?;
    simulate_cell(&cells, &Population::Poisson(*traffic), policy, duration, seed)
}

/// Runs `reps` replications and summarizes file transfers.
pub fn file_transfer_report(
    cfg: &MacroCellConfig,
    traffic: &TrafficConfig,
    policy: &DropPolicy,
    duration: f64,
    reps: usize,
    seed: u64,
) -> Result<FileTransferReport> {
    let runs = (0..reps)
        .into_par_iter()
        .map(|r| run_replication(cfg, traffic, policy, duration, replication_seed(seed, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FileTransferReport::from_runs(&runs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub density_mbps_km2: f64,
    pub drop_fraction: f64,
    /// Mean over reported users of served bits over time in system.
    pub mean_user_tput_mbps: f64,
    pub coverage_fraction: f64,
    pub median_file_time_s: f64,
    pub users: usize,
    pub completed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub cells: MacroCellConfig,
    pub traffic: TrafficConfig,
    /// Shortest replication.
    pub duration_s: f64,
    /// Light-load points run until this many users are expected after the warm-up.
    pub target_users: usize,
    pub max_duration_s: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            cells: MacroCellConfig::default(),
            traffic: TrafficConfig::default(),
            duration_s: 600.0,
            target_users: 300,
            max_duration_s: 50_000.0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.cells.validate()?;
        self.traffic.validate()?;
        if !(self.duration_s > self.cells.warmup_s) || !(self.max_duration_s >= self.duration_s) {
            return Err(Error::config(
                "sweep duration must exceed the warm-up and not exceed the maximum",
            ));
        }
        Ok(())
    }

    /// Replication length at `density`.
    pub fn duration_at(&self, density: f64) -> f64 {
        let lambda = TrafficConfig {
            density_mbps_km2: density,
            ..self.traffic
        }
        .arrival_rate(self.cells.road_length_m());
        let needed = self.cells.warmup_s + self.target_users as f64 / lambda;
        needed.clamp(self.duration_s, self.max_duration_s)
    }
}

/// Mean user throughput for every `(density, ρ)` pair, rows ordered by
/// density then drop fraction. Replication `r` uses the same seed at every
/// point, so arrivals and shadowing are matched across the grid.
pub fn density_sweep(
    cfg: &SweepConfig,
    densities: &[f64],
    drop_fractions: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    if densities.is_empty() || drop_fractions.is_empty() || reps == 0 {
        return Err(Error::config(
            "density sweep needs densities, drop fractions and replications",
        ));
    }
    cfg.validate()?;
    let policies = drop_fractions
        .iter()
        .map(|&rho| DropPolicy::quantile(rho))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize, usize)> = (0..densities.len())
        .flat_map(|d| (0..policies.len()).flat_map(move |p| (0..reps).map(move |r| (d, p, r))))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(d, p, r)| {
            let traffic = TrafficConfig {
                density_mbps_km2: densities[d],
                ..cfg.traffic
            };
            let duration = cfg.duration_at(densities[d]);
            run_replication(&cfg.cells, &traffic, &policies[p], duration, replication_seed(seed, r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(runs
        .chunks(reps)
        .zip(&jobs[..].chunks(reps).map(|c| c[0]).collect::<Vec<_>>())
        .map(|(chunk, &(d, p, _))| {
            let report = FileTransferReport::from_runs(chunk);
            let tput = mean(
                chunk
                    .iter()
                    .flat_map(|run| run.reported().filter_map(|u| u.throughput_bps(run.duration_s))),
            );
            SweepPoint {
                density_mbps_km2: densities[d],
                drop_fraction: drop_fractions[p],
                mean_user_tput_mbps: tput.map_or(f64::NAN, |x| x / 1e6),
                coverage_fraction: report.coverage_fraction,
                median_file_time_s: report.dl_seconds,
                users: report.users,
                completed: report.completed,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::macro_pathgain;
    use crate::scenario::Vec3;
    use approx::assert_relative_eq;

    fn gains(g: &[f64]) -> Vec<UserGain> {
        g.iter()
            .enumerate()
            .map(|(i, &gain_db)| UserGain { id: i as u64, gain_db })
            .collect()
    }

    #[test]
    fn quantile_partition() {
        let users = gains(&[-100.0, -110.0, -120.0, -130.0]);
        let c = classify_users(&users, &DropPolicy::quantile(0.5).unwrap());
        assert_eq!(c.deferred, vec![2, 3]);
        assert_eq!(c.eligible, vec![0, 1]);
        let all = classify_users(&users, &DropPolicy::quantile(0.0).unwrap());
        assert_eq!(all.eligible.len(), 4);
        let none = classify_users(&users, &DropPolicy::quantile(1.0).unwrap());
        assert_eq!(none.deferred.len(), 4);
    }

    #[test]
    fn ties_defer_higher_id() {
        let users = gains(&[-100.0, -120.0, -120.0, -120.0]);
        let c = classify_users(&users, &DropPolicy::quantile(0.5).unwrap());
        assert_eq!(c.deferred, vec![2, 3]);
    }

    #[test]
    fn absolute_threshold() {
        let users = gains(&[-100.0, -110.0, -120.0]);
        let p = DropPolicy {
            drop_fraction: 0.0,
            threshold_mode: ThresholdMode::AbsoluteDb(-115.0),
        };
        assert_eq!(classify_users(&users, &p).deferred, vec![2]);
    }

    #[test]
    fn invalid_drop_fraction() {
        assert!(DropPolicy::quantile(1.5).is_err());
        assert!(DropPolicy::quantile(-0.1).is_err());
    }

    #[test]
    fn ring_gain_matches_macro_model() {
        let cfg = MacroCellConfig::default();
        let cells = MacroCells::new(&cfg, 5).unwrap();
        for (site, s) in [(0, 400.0), (1, 1500.0), (2, 4000.0), (5, 9000.0)] {
            let pos = Vec3::new(s, 0.0, 1.5);
            let direct = macro_pathgain(&cells.deployment.sites[site], &pos, cells.pathloss()).unwrap();
            assert_relative_eq!(cells.gain_db(site, s), direct, epsilon = 1e-9);
        }
        // Site 0 seen across the ring closure.
        let len = cfg.road_length_m();
        assert_relative_eq!(cells.gain_db(0, len - 100.0), cells.gain_db(0, -100.0), epsilon = 1e-9);
    }

    #[test]
    fn edge_snr_anchor() {
        let cfg = MacroCellConfig::default();
        let g = cfg.pathloss.mean_gain_db(cfg.isd_m / 2.0);
        assert_relative_eq!(g + cfg.noise_offset_db(), cfg.cell_edge_snr_db, epsilon = 1e-12);
    }

    #[test]
    fn single_static_user_gets_link_rate() {
        let cfg = MacroCellConfig {
            warmup_s: 0.0,
            ..Default::default()
        };
        let cells = MacroCells::new(&cfg, 1).unwrap();
        let pop = Population::Static(vec![StaticUser {
            gain_db: -105.0,
            file_bits: f64::INFINITY,
        }]);
        let run = simulate_cell(&cells, &pop, &DropPolicy::quantile(0.0).unwrap(), 2.0, 1).unwrap();
        let tput = run.mean_user_throughput_bps().unwrap();
        assert_relative_eq!(tput, cfg.link_rate(-105.0), max_relative = 1e-9);
    }

    #[test]
    fn finite_file_completes_at_peak_rate() {
        let cfg = MacroCellConfig {
            warmup_s: 0.0,
            ..Default::default()
        };
        let cells = MacroCells::new(&cfg, 1).unwrap();
        let pop = Population::Static(vec![StaticUser {
            gain_db: -40.0,
            file_bits: 4e9,
        }]);
        let run = simulate_cell(&cells, &pop, &DropPolicy::quantile(0.0).unwrap(), 20.0, 1).unwrap();
        let report = FileTransferReport::from_runs(&[run]);
        assert_eq!(report.completed, 1);
        assert!((report.dl_seconds - 4e9 / cfg.peak_rate()).abs() <= cfg.slot_s);
        assert_relative_eq!(report.coverage_fraction, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn arrivals_scale_with_density() {
        let cfg = MacroCellConfig::default();
        let low = TrafficConfig {
            density_mbps_km2: 100.0,
            ..Default::default()
        };
        let high = TrafficConfig {
            density_mbps_km2: 200.0,
            ..low
        };
        let a = poisson_arrivals(&cfg, &low, 1000.0, 4);
        let b = poisson_arrivals(&cfg, &high, 500.0, 4);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x.t, 2.0 * y.t, max_relative = 1e-12);
            assert_eq!(x.entry_m, y.entry_m);
        }
    }
}
