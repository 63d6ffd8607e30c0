//! Multi-TRP downlink to a high-speed train.
//!
//! Every slot the per-TRP tapped-delay-line channels are combined on the
//! OFDM grid according to the transmission scheme, compressed to an
//! effective SNR per code block, and turned into a block-error draw. Failed
//! transport blocks are retransmitted with Chase combining (per-RE SNR
//! accumulation) up to the attempt budget.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{
    combined_freq_response, hst_taps, los_observation, ChannelTaps, FreqResponse, RailLinkBudget, SnrAnchor,
    TapContext, TapProfile,
};
use crate::rng::{self, Tag};
use crate::scenario::{build_rail_deployment, linear_trajectory, Deployment, PoseSample, Trajectory, Vec3};
use crate::{db_to_lin, lin_to_db, Error, Result};

/// Antenna height on the train roof, m.
pub const TRAIN_ANTENNA_HEIGHT: f64 = 4.0;
/// CRC bits attached to a transport block and to each code block.
const CRC_BITS: u64 = 24;
/// Largest LDPC base-graph-1 code block, bits.
const MAX_CODE_BLOCK: u64 = 8448;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerology {
    pub scs: f64,
    pub n_rb: usize,
    pub symbols_per_slot: usize,
    pub slot_duration: f64,
}

impl Default for Numerology {
    /// 30 kHz, 50 RB.
    fn default() -> Self {
        Self::nr(30e3, 50).expect("valid default numerology")
    }
}

impl Numerology {
    /// Normal-CP numerology: 14 symbols, slot `1 ms · 15 kHz / scs`.
    pub fn nr(scs: f64, n_rb: usize) -> Result<Self> {
        let mu = (scs / 15e3).log2();
        if !(mu >= 0.0) || (mu - mu.round()).abs() > 1e-9 || n_rb == 0 {
            return Err(Error::config(format!(
                "unsupported numerology: scs {scs} Hz, {n_rb} RB"
            )));
        }
        Ok(Self {
            scs,
            n_rb,
            symbols_per_slot: 14,
            slot_duration: 1e-3 * 15e3 / scs,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let expected = Self::nr(self.scs, self.n_rb)?;
        if self.symbols_per_slot != 14 || (self.slot_duration - expected.slot_duration).abs() > 1e-12 {
            return Err(Error::config("slot duration inconsistent with subcarrier spacing"));
        }
        Ok(())
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_rb * 12
    }

    pub fn symbol_duration(&self) -> f64 {
        self.slot_duration / self.symbols_per_slot as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mcs {
    pub modulation_order_bits: u32,
    pub code_rate: f64,
}

impl Default for Mcs {
    /// 64-QAM, rate 0.428.
    fn default() -> Self {
        Self {
            modulation_order_bits: 6,
            code_rate: 0.428,
        }
    }
}

impl Mcs {
    pub fn spectral_efficiency(&self) -> f64 {
        self.modulation_order_bits as f64 * self.code_rate
    }
}

pub fn transport_block_size(numerology: &Numerology, mcs: &Mcs, overhead_symbols: usize) -> Result<u64> {
    if overhead_symbols >= numerology.symbols_per_slot {
        return Err(Error::config(format!(
            "{overhead_symbols} overhead symbols leave no data in a {}-symbol slot",
            numerology.symbols_per_slot
        )));
    }
    if !(mcs.code_rate > 0.0 && mcs.code_rate <= 1.0) || mcs.modulation_order_bits == 0 {
        return Err(Error::config(
            "code rate must lie in (0, 1] and modulation order be positive",
        ));
    }
    let res = numerology.n_subcarriers() * (numerology.symbols_per_slot - overhead_symbols);
    Ok((res as f64 * mcs.modulation_order_bits as f64 * mcs.code_rate).floor() as u64)
}

/// Number of LDPC code blocks after segmentation of a `tbs`-bit block.
pub fn code_block_count(tbs: u64) -> usize {
    let b = tbs + CRC_BITS;
    if b <= MAX_CODE_BLOCK {
        1
    } else {
        b.div_ceil(MAX_CODE_BLOCK - CRC_BITS) as usize
    }
}

/// Exponential effective SNR of linear per-RE SNRs, dB:
/// `-β ln(mean(exp(-γ/β)))`, evaluated in log-sum-exp form.
pub fn eesm_db(sinr: &[f64], beta: f64) -> f64 {
    if sinr.is_empty() {
        return f64::NEG_INFINITY;
    }
    let m = sinr.iter().map(|&g| -g / beta).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = sinr.iter().map(|&g| (-g / beta - m).exp()).sum();
    let log_mean = m + (sum / sinr.len() as f64).ln();
    lin_to_db(-beta * log_mean)
}

/// Link-abstraction settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EesmContext {
    pub beta: f64,
    /// Leading symbols of the slot carrying no data.
    pub overhead_symbols: usize,
}

/// Per-RE linear SNR of the data symbols, frequency-first within each symbol.
pub fn data_sinr(response: &FreqResponse, noise_power: f64, overhead_symbols: usize) -> Vec<f64> {
    let n = response.n_subcarriers;
    response.h[overhead_symbols.min(response.n_symbols) * n..]
        .iter()
        .map(|x| x.norm_sqr() / noise_power)
        .collect()
}

/// Effective SNR over every data resource element of the slot, dB.
pub fn effective_snr(response: &FreqResponse, noise_power: f64, ctx: &EesmContext) -> Result<f64> {
    if response.h.is_empty() {
        return Err(Error::config("empty frequency response"));
    }
    Ok(eesm_db(
        &data_sinr(response, noise_power, ctx.overhead_symbols),
        ctx.beta,
    ))
}

/// Logistic block-error curve `1 / (1 + exp((snr - threshold) / slope))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlerCurve {
    pub threshold_db: f64,
    pub slope_db: f64,
}

impl BlerCurve {
    /// Shannon threshold of the MCS spectral efficiency plus `margin_db`.
    pub fn shannon(mcs: &Mcs, margin_db: f64, slope_db: f64) -> Self {
        Self {
            threshold_db: lin_to_db(2f64.powf(mcs.spectral_efficiency()) - 1.0) + margin_db,
            slope_db,
        }
    }

    pub fn bler(&self, snr_eff_db: f64) -> f64 {
        bler(snr_eff_db, self)
    }
}

impl Default for BlerCurve {
    fn default() -> Self {
        Self::shannon(&Mcs::default(), 2.0, 0.3)
    }
}

pub fn bler(snr_eff_db: f64, curve: &BlerCurve) -> f64 {
    if snr_eff_db == f64::INFINITY {
        return 0.0;
    }
    if snr_eff_db == f64::NEG_INFINITY {
        return 1.0;
    }
    let z = (snr_eff_db - curve.threshold_db) / curve.slope_db;
    // Stable for both signs of z.
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "SFN")]
    Sfn,
    #[serde(rename = "SFN_CDD")]
    SfnCdd,
    #[serde(rename = "SFN_PRECOMP")]
    SfnPrecomp,
    #[serde(rename = "DPS")]
    Dps,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Sfn, Scheme::SfnCdd, Scheme::SfnPrecomp, Scheme::Dps];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Sfn => "SFN",
            Scheme::SfnCdd => "SFN_CDD",
            Scheme::SfnPrecomp => "SFN_PRECOMP",
            Scheme::Dps => "DPS",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown scheme {s:?}; expected SFN, SFN_CDD, SFN_PRECOMP or DPS"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotResult {
    pub slot_index: usize,
    pub scheme: Scheme,
    pub train_x: f64,
    pub delivered_bits: u64,
    /// Transmission attempt this slot carried (1 = initial).
    pub harq_attempts_used: u32,
    /// Whole-slot effective SNR after combining, dB.
    pub effective_snr_db: f64,
    /// Mean SNR of the strongest single TRP, dB.
    pub best_trp_snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HstConfig {
    pub carrier_hz: f64,
    pub speed_kmh: f64,
    pub isd_m: f64,
    pub track_offset_m: f64,
    pub train_antenna_height_m: f64,
    pub numerology: Numerology,
    pub mcs: Mcs,
    pub overhead_symbols: usize,
    pub anchor: SnrAnchor,
    /// Along-track position at which `anchor` holds, m.
    pub anchor_position_m: f64,
    pub link_budget: RailLinkBudget,
    pub profile: TapProfile,
    pub cdd_delay_s: f64,
    pub eesm_beta: f64,
    pub bler: BlerCurve,
    /// Initial transmission plus retransmissions.
    pub max_attempts: u32,
    /// Slot distance between a transmission and its retransmission.
    pub harq_processes: usize,
    pub code_block_segmentation: bool,
    /// Independent NLoS realization index.
    pub realization: u64,
    pub bin_m: f64,
}

impl Default for HstConfig {
    fn default() -> Self {
        let mcs = Mcs::default();
        Self {
            carrier_hz: 2e9,
            speed_kmh: 500.0,
            isd_m: 700.0,
            track_offset_m: 10.0,
            train_antenna_height_m: TRAIN_ANTENNA_HEIGHT,
            numerology: Numerology::default(),
            mcs,
            overhead_symbols: 1,
            anchor: SnrAnchor {
                snr_db: 16.0,
                combined: true,
            },
            anchor_position_m: 0.0,
            link_budget: RailLinkBudget::default(),
            profile: TapProfile::default(),
            cdd_delay_s: 1e-6,
            eesm_beta: 20.0,
            bler: BlerCurve::shannon(&mcs, 2.0, 0.3),
            max_attempts: 4,
            harq_processes: 1,
            code_block_segmentation: true,
            realization: 0,
            bin_m: 25.0,
        }
    }
}

impl HstConfig {
    pub fn validate(&self) -> Result<()> {
        self.numerology.validate()?;
        self.profile.validate()?;
        transport_block_size(&self.numerology, &self.mcs, self.overhead_symbols)?;
        if !(1..=4).contains(&self.max_attempts) {
            return Err(Error::config("max_attempts must be between 1 and 4"));
        }
        if self.harq_processes == 0 {
            return Err(Error::config("harq_processes must be at least 1"));
        }
        if !(self.eesm_beta > 0.0) || !(self.bler.slope_db > 0.0) {
            return Err(Error::config("eesm_beta and bler slope must be positive"));
        }
        if !(self.bin_m > 0.0) {
            return Err(Error::config("bin_m must be positive"));
        }
        if !(self.cdd_delay_s >= 0.0) {
            return Err(Error::config("cdd_delay_s must be non-negative"));
        }
        Ok(())
    }

    pub fn tbs(&self) -> Result<u64> {
        transport_block_size(&self.numerology, &self.mcs, self.overhead_symbols)
    }

    pub fn peak_throughput_bps(&self) -> Result<f64> {
        Ok(self.tbs()? as f64 / self.numerology.slot_duration)
    }

    pub fn deployment(&self) -> Result<Deployment> {
        build_rail_deployment(self.isd_m, self.track_offset_m)
    }

    /// Constant-speed pass from the first to the last TRP, one sample per slot.
    pub fn trajectory(&self, deployment: &Deployment) -> Result<Trajectory> {
        let span = deployment
            .sites
            .last()
            .map(|s| s.position.x)
            .ok_or_else(|| Error::config("deployment has no sites"))?;
        Ok(linear_trajectory(self.speed_kmh, span, self.numerology.slot_duration)?
            .at_height(self.train_antenna_height_m))
    }
}

/// Linear noise power implied by the SNR anchor.
pub fn anchored_noise(deployment: &Deployment, cfg: &HstConfig) -> Result<f64> {
    let p = Vec3::new(cfg.anchor_position_m, 0.0, cfg.train_antenna_height_m);
    let gains = deployment
        .sites
        .iter()
        .map(|s| cfg.link_budget.path_gain_db(s, &p))
        .collect::<Result<Vec<_>>>()?;
    cfg.anchor.noise_power(&gains)
}

struct HarqProcess {
    accumulated: Vec<f64>,
    attempts: u32,
}

fn code_block_success(sinr: &[f64], blocks: usize, cfg: &HstConfig) -> f64 {
    let n = sinr.len();
    (0..blocks)
        .map(|c| {
            let chunk = &sinr[c * n / blocks..(c + 1) * n / blocks];
            1.0 - bler(eesm_db(chunk, cfg.eesm_beta), &cfg.bler)
        })
        .product()
}

/// Per-TRP taps at one slot and the transmit-side settings for `scheme`.
/// Taps, CDD delays and precompensation shifts per TRP, plus the best path gain.
type SchemeLinks = (Vec<ChannelTaps>, Vec<f64>, Vec<f64>, f64);

fn scheme_links(
    deployment: &Deployment,
    pose: &PoseSample,
    scheme: Scheme,
    cfg: &HstConfig,
    seed: u64,
) -> Result<SchemeLinks> {
    let gains_db = deployment
        .sites
        .iter()
        .map(|s| cfg.link_budget.path_gain_db(s, &pose.position))
        .collect::<Result<Vec<_>>>()?;
    let best = gains_db
        .iter()
        .enumerate()
        .fold(0, |b, (i, &g)| if g > gains_db[b] { i } else { b });
    let active: Vec<usize> = match scheme {
        Scheme::Dps => vec![best],
        _ => (0..deployment.sites.len()).collect(),
    };
    let mut taps = Vec::with_capacity(active.len());
    let mut cdd = Vec::with_capacity(active.len());
    let mut pre = Vec::with_capacity(active.len());
    for &i in &active {
        let site = &deployment.sites[i];
        let ctx = TapContext {
            carrier_hz: cfg.carrier_hz,
            link_power: db_to_lin(gains_db[i]),
            seed,
            link_id: site.id as u64,
            realization: cfg.realization,
        };
        taps.push(hst_taps(site, pose, &cfg.profile, pose.t, &ctx)?);
        cdd.push(if scheme == Scheme::SfnCdd && i % 2 == 1 {
            cfg.cdd_delay_s
        } else {
            0.0
        });
        pre.push(if scheme == Scheme::SfnPrecomp {
            los_observation(site, pose, cfg.carrier_hz)?.doppler
        } else {
            0.0
        });
    }
    Ok((taps, cdd, pre, gains_db[best]))
}

/// Slot-by-slot simulation of one scheme along `trajectory`.
///
/// Block-error draws are keyed by slot only, so all schemes see the same
/// uniform variates.
pub fn run_hst_sweep(
    deployment: &Deployment,
    trajectory: &Trajectory,
    scheme: Scheme,
    cfg: &HstConfig,
    seed: u64,
) -> Result<Vec<SlotResult>> {
    cfg.validate()?;
    if deployment.sites.is_empty() {
        return Err(Error::config("deployment has no sites"));
    }
    let noise = anchored_noise(deployment, cfg)?;
    let tbs = cfg.tbs()?;
    let blocks = if cfg.code_block_segmentation {
        code_block_count(tbs)
    } else {
        1
    };
    let ctx = EesmContext {
        beta: cfg.eesm_beta,
        overhead_symbols: cfg.overhead_symbols,
    };
    let mut processes: Vec<Option<HarqProcess>> = (0..cfg.harq_processes).map(|_| None).collect();
    let mut out = Vec::with_capacity(trajectory.len());
    for (slot, pose) in trajectory.samples.iter().enumerate() {
        let (taps, cdd, pre, best_gain_db) = scheme_links(deployment, pose, scheme, cfg, seed)?;
        let response = combined_freq_response(&taps, &cdd, &pre, &cfg.numerology)?;
        let sinr = data_sinr(&response, noise, ctx.overhead_symbols);
        if !sinr.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical {
                epoch: slot,
                reason: "non-finite channel response".into(),
            });
        }
        let slot_proc = &mut processes[slot % cfg.harq_processes];
        let mut state = slot_proc.take().unwrap_or(HarqProcess {
            accumulated: vec![0.0; sinr.len()],
            attempts: 0,
        });
        for (a, s) in state.accumulated.iter_mut().zip(&sinr) {
            *a += s;
        }
        state.attempts += 1;
        let p_success = code_block_success(&state.accumulated, blocks, cfg);
        let u = rng::uniform(&mut rng::stream(seed, Tag::BlockErrors, 0, slot as u64));
        let success = u < p_success;
        let snr_eff = eesm_db(&state.accumulated, ctx.beta);
        let attempts = state.attempts;
        if !success && state.attempts < cfg.max_attempts {
            *slot_proc = Some(state);
        }
        out.push(SlotResult {
            slot_index: slot,
            scheme,
            train_x: pose.position.x,
            delivered_bits: if success { tbs } else { 0 },
            harq_attempts_used: attempts,
            effective_snr_db: snr_eff,
            best_trp_snr_db: best_gain_db - lin_to_db(noise),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub x_center: f64,
    pub throughput_bps: f64,
    pub mean_snr_eff_db: f64,
    pub mean_harq_attempts: f64,
    /// Lowest per-slot best-TRP SNR in the bin, dB.
    pub min_best_trp_snr_db: f64,
    pub slots: usize,
}

/// Delivered bit rate averaged in `bin_m`-wide position bins centred on multiples of `bin_m`.
pub fn throughput_vs_position(results: &[SlotResult], bin_m: f64, slot_duration: f64) -> Result<Vec<CurvePoint>> {
    if results.is_empty() {
        return Err(Error::config("no slot results to bin"));
    }
    if !(bin_m > 0.0) {
        return Err(Error::config("bin width must be positive"));
    }
    let mut bins: std::collections::BTreeMap<i64, Vec<&SlotResult>> = Default::default();
    for r in results {
        bins.entry((r.train_x / bin_m).round() as i64).or_default().push(r);
    }
    Ok(bins
        .into_iter()
        .map(|(k, slots)| {
            let n = slots.len() as f64;
            let bits: u64 = slots.iter().map(|r| r.delivered_bits).sum();
            CurvePoint {
                x_center: k as f64 * bin_m,
                throughput_bps: bits as f64 / (n * slot_duration),
                mean_snr_eff_db: slots.iter().map(|r| r.effective_snr_db).sum::<f64>() / n,
                mean_harq_attempts: slots.iter().map(|r| r.harq_attempts_used as f64).sum::<f64>() / n,
                min_best_trp_snr_db: slots.iter().map(|r| r.best_trp_snr_db).fold(f64::INFINITY, f64::min),
                slots: slots.len(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeRun {
    pub scheme: Scheme,
    pub slots: Vec<SlotResult>,
    pub curve: Vec<CurvePoint>,
}

/// Runs every scheme in `schemes` over the configured deployment, in parallel.
pub fn run_hst_study(cfg: &HstConfig, schemes: &[Scheme], seed: u64) -> Result<Vec<SchemeRun>> {
    use rayon::prelude::*;
    cfg.validate()?;
    let deployment = cfg.deployment()?;
    let trajectory = cfg.trajectory(&deployment)?;
    schemes
        .par_iter()
        .map(|&scheme| {
            let slots = run_hst_sweep(&deployment, &trajectory, scheme, cfg, seed)?;
            let curve = throughput_vs_position(&slots, cfg.bin_m, cfg.numerology.slot_duration)?;
            Ok(SchemeRun { scheme, slots, curve })
        })
        .collect()
}
