//! Throughput prediction error over several horizons.
//!
//! For a window `[t, t + Δt)` the error rate is
//! `e′(t, Δt) = |B_delivered − B_predicted| / Δt` in bit/s, where the
//! prediction only looks at bits delivered before `t`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hst_link::{run_hst_sweep, HstConfig, Scheme, SlotResult};
use crate::rng::{self, Tag};
use crate::stats::ErrorCdf;
use crate::{Error, Result};

/// Delivered bits per fixed-length epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputTrace {
    pub epoch_s: f64,
    pub delivered_bits: Vec<u64>,
    pub source: String,
    pub seed: u64,
    /// `prefix[i]` = bits delivered in epochs `0..i`.
    prefix: Vec<f64>,
}

impl ThroughputTrace {
    pub fn new(epoch_s: f64, delivered_bits: Vec<u64>, source: impl Into<String>, seed: u64) -> Result<Self> {
        if !(epoch_s > 0.0) {
            return Err(Error::config(format!("trace epoch must be positive, got {epoch_s}")));
        }
        let mut prefix = Vec::with_capacity(delivered_bits.len() + 1);
        let mut acc = 0.0;
        prefix.push(acc);
        for &b in &delivered_bits {
            acc += b as f64;
            prefix.push(acc);
        }
        Ok(Self {
            epoch_s,
            delivered_bits,
            source: source.into(),
            seed,
            prefix,
        })
    }

    /// Sums consecutive slots into epochs of `slots_per_epoch`; a trailing
    /// partial epoch is dropped.
    pub fn from_slots(slots: &[SlotResult], slot_duration: f64, slots_per_epoch: usize, seed: u64) -> Result<Self> {
        if slots_per_epoch == 0 {
            return Err(Error::config("epoch must span at least one slot"));
        }
        let bits = slots
            .chunks_exact(slots_per_epoch)
            .map(|c| c.iter().map(|s| s.delivered_bits).sum())
            .collect();
        Self::new(slot_duration * slots_per_epoch as f64, bits, "hst", seed)
    }

    pub fn len(&self) -> usize {
        self.delivered_bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delivered_bits.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.epoch_s
    }

    /// Bits delivered in `[0, x)`, with the epoch containing `x` counted in proportion.
    fn cumulative(&self, x: f64) -> f64 {
        let pos = x / self.epoch_s;
        let n = self.len();
        let rounded = pos.round();
        // Snap positions that sit on an epoch boundary up to rounding error.
        if (pos - rounded).abs() < 1e-9 {
            return self.prefix[(rounded as usize).min(n)];
        }
        let i = (pos.floor() as usize).min(n.saturating_sub(1));
        self.prefix[i] + (pos - i as f64) * self.delivered_bits[i] as f64
    }

    /// Bits delivered in `[t, t + dt)`. Epochs cut by the window edges
    /// contribute in proportion to their overlap.
    pub fn window_bits(&self, t: f64, dt: f64) -> Result<f64> {
        let tol = 1e-9 * self.epoch_s;
        if !(dt > 0.0) || !(t >= -tol) || !(t + dt <= self.duration() + tol) {
            return Err(Error::InsufficientData(format!(
                "window [{t}, {}) outside trace of {} s",
                t + dt,
                self.duration()
            )));
        }
        Ok(self.cumulative(t + dt) - self.cumulative(t.max(0.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub t: f64,
    pub horizon: f64,
    pub b_predicted: f64,
    pub b_delivered: f64,
}

/// `|B_delivered − B_predicted| / Δt`, bit/s.
pub fn prediction_error(record: &PredictionRecord) -> f64 {
    (record.b_delivered - record.b_predicted).abs() / record.horizon
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    /// Bits of the preceding window of the same length.
    LastWindow,
    /// Mean of the `k` preceding windows.
    MovingAverage(usize),
    /// Preceding windows weighted `λ(1−λ)^{j−1}`, normalized over the available history.
    Ar1(f64),
}

/// History windows beyond this carry negligible AR(1) weight for any useful λ.
const AR1_MAX_WINDOWS: usize = 1000;

impl Predictor {
    pub fn name(&self) -> String {
        match self {
            Predictor::LastWindow => "last_window".into(),
            Predictor::MovingAverage(k) => format!("moving_average_{k}"),
            Predictor::Ar1(l) => format!("ar1_{l}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Predictor::MovingAverage(0) => Err(Error::config("moving average needs k >= 1")),
            Predictor::Ar1(l) if !(l > 0.0 && l <= 1.0) => {
                Err(Error::config(format!("AR(1) weight must lie in (0, 1], got {l}")))
            }
            _ => Ok(()),
        }
    }

    /// Whole preceding windows required at time `t`.
    fn history(&self) -> usize {
        match *self {
            Predictor::LastWindow | Predictor::Ar1(_) => 1,
            Predictor::MovingAverage(k) => k,
        }
    }
}

/// Predicted bits for `[t, t + dt)` from the trace before `t`.
pub fn predict(trace: &ThroughputTrace, t: f64, dt: f64, method: &Predictor) -> Result<f64> {
    method.validate()?;
    let available = ((t / dt) + 1e-9).floor() as usize;
    if !(dt > 0.0) || available < method.history() {
        return Err(Error::InsufficientData(format!(
            "{} needs {} windows of {dt} s before t = {t}",
            method.name(),
            method.history()
        )));
    }
    let window = |j: usize| trace.window_bits(t - j as f64 * dt, dt);
    match *method {
        Predictor::LastWindow => window(1),
        Predictor::MovingAverage(k) => {
            let mut sum = 0.0;
            for j in 1..=k {
                sum += window(j)?;
            }
            Ok(sum / k as f64)
        }
        Predictor::Ar1(lambda) => {
            let (mut num, mut den, mut w) = (0.0, 0.0, lambda);
            for j in 1..=available.min(AR1_MAX_WINDOWS) {
                if w == 0.0 {
                    break;
                }
                num += w * window(j)?;
                den += w;
                w *= 1.0 - lambda;
            }
            Ok(num / den)
        }
    }
}

/// Prediction at every epoch boundary where both the history and the
/// target window fit in the trace.
pub fn prediction_records(trace: &ThroughputTrace, dt: f64, method: &Predictor) -> Result<Vec<PredictionRecord>> {
    method.validate()?;
    if !(dt > 0.0) {
        return Err(Error::config("prediction horizon must be positive"));
    }
    let e = trace.epoch_s;
    let first = ((method.history() as f64 * dt / e) - 1e-9).ceil().max(0.0) as usize;
    let last = (((trace.duration() - dt) / e) + 1e-9).floor();
    if last < first as f64 {
        return Ok(Vec::new());
    }
    (first..=last as usize)
        .map(|i| {
            let t = i as f64 * e;
            Ok(PredictionRecord {
                t,
                horizon: dt,
                b_predicted: predict(trace, t, dt, method)?,
                b_delivered: trace.window_bits(t, dt)?,
            })
        })
        .collect()
}

/// Windows required per horizon before a CDF is reported.
pub const MIN_WINDOWS: usize = 100;

/// Empirical CDF of e′ over sliding windows, one per horizon.
pub fn horizon_cdfs(trace: &ThroughputTrace, horizons: &[f64], method: &Predictor) -> Result<Vec<ErrorCdf>> {
    horizons
        .par_iter()
        .map(|&dt| {
            let records = prediction_records(trace, dt, method)?;
            if records.len() < MIN_WINDOWS {
                return Err(Error::InsufficientData(format!(
                    "horizon {dt} s has {} windows, need {MIN_WINDOWS}",
                    records.len()
                )));
            }
            ErrorCdf::from_samples(records.iter().map(prediction_error))
        })
        .collect()
}

/// I.i.d. Gaussian bits per epoch, rounded and clipped at zero.
pub fn synthetic_iid_trace(
    epochs: usize,
    epoch_s: f64,
    mean_bits: f64,
    std_bits: f64,
    seed: u64,
) -> Result<ThroughputTrace> {
    if !(mean_bits >= 0.0) || !(std_bits >= 0.0) {
        return Err(Error::config("synthetic trace mean and spread must be non-negative"));
    }
    let bits = (0..epochs)
        .map(|i| {
            let mut r = rng::stream(seed, Tag::SyntheticTrace, 0, i as u64);
            (mean_bits + std_bits * rng::standard_normal(&mut r)).round().max(0.0) as u64
        })
        .collect();
    ThroughputTrace::new(epoch_s, bits, "synthetic_iid", seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QosConfig {
    pub hst: HstConfig,
    pub scheme: Scheme,
    /// Train passes concatenated into one trace, each with fresh fading.
    pub passes: usize,
    pub slots_per_epoch: usize,
}

/// Short, intermediate and long horizons, s.
pub const DEFAULT_HORIZONS_S: [f64; 3] = [0.1, 1.0, 10.0];

pub fn default_predictors() -> Vec<Predictor> {
    vec![Predictor::LastWindow, Predictor::MovingAverage(2), Predictor::Ar1(0.5)]
}

impl Default for QosConfig {
    fn default() -> Self {
        Self {
            hst: HstConfig::default(),
            scheme: Scheme::Sfn,
            passes: 3,
            slots_per_epoch: 20,
        }
    }
}

impl QosConfig {
    pub fn validate(&self) -> Result<()> {
        self.hst.validate()?;
        if self.passes == 0 || self.slots_per_epoch == 0 {
            return Err(Error::config(
                "qos trace needs at least one pass and one slot per epoch",
            ));
        }
        Ok(())
    }
}

/// Delivered bits of repeated train passes through the rail corridor.
pub fn hst_trace(cfg: &QosConfig, seed: u64) -> Result<ThroughputTrace> {
    cfg.validate()?;
    let passes = (0..cfg.passes)
        .into_par_iter()
        .map(|p| {
            let hst = HstConfig {
                realization: cfg.hst.realization + p as u64,
                ..cfg.hst.clone()
            };
            let dep = hst.deployment()?;
            let traj = hst.trajectory(&dep)?;
            run_hst_sweep(&dep, &traj, cfg.scheme, &hst, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let slots: Vec<SlotResult> = passes.into_iter().flatten().collect();
    ThroughputTrace::from_slots(&slots, cfg.hst.numerology.slot_duration, cfg.slots_per_epoch, seed)
}
