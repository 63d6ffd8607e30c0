use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::hst_link::Numerology;
use crate::{Error, Result};

use super::ChannelTaps;

/// Slot response on the OFDM grid, row-major `[symbol][subcarrier]`.
///
/// Symbol times are relative to the taps' reference time. Subcarrier `k`
/// sits at baseband offset `(k - N/2) · scs`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqResponse {
    pub h: Vec<Complex64>,
    pub n_symbols: usize,
    pub n_subcarriers: usize,
    pub symbol_times: Vec<f64>,
    pub subcarrier_spacing: f64,
}

impl FreqResponse {
    pub fn zeros(numerology: &Numerology) -> Self {
        let n_symbols = numerology.symbols_per_slot;
        let n_subcarriers = numerology.n_subcarriers();
        let ts = numerology.symbol_duration();
        Self {
            h: vec![Complex64::new(0.0, 0.0); n_symbols * n_subcarriers],
            n_symbols,
            n_subcarriers,
            symbol_times: (0..n_symbols).map(|s| s as f64 * ts).collect(),
            subcarrier_spacing: numerology.scs,
        }
    }

    pub fn at(&self, symbol: usize, subcarrier: usize) -> Complex64 {
        self.h[symbol * self.n_subcarriers + subcarrier]
    }

    pub fn symbol(&self, symbol: usize) -> &[Complex64] {
        let n = self.n_subcarriers;
        &self.h[symbol * n..(symbol + 1) * n]
    }

    pub fn subcarrier_freq(&self, k: usize) -> f64 {
        (k as f64 - (self.n_subcarriers / 2) as f64) * self.subcarrier_spacing
    }

    /// `Σ |H|²` over every resource element.
    pub fn total_power(&self) -> f64 {
        self.h.iter().map(|x| x.norm_sqr()).sum()
    }

    /// Adds one path `gain · e^{j2π ν t_s} · e^{-j2π f_k τ}`.
    fn add_path(&mut self, gain: Complex64, doppler: f64, delay: f64, freq_phasor: &mut [Complex64]) {
        let step = Complex64::from_polar(1.0, -TAU * self.subcarrier_spacing * delay);
        let mut p = Complex64::new(1.0, 0.0);
        for (k, slot) in freq_phasor.iter_mut().enumerate() {
            // Re-anchor periodically so the recurrence does not drift.
            if k % 64 == 0 {
                p = Complex64::from_polar(1.0, -TAU * self.subcarrier_freq(k) * delay);
            }
            *slot = p;
            p *= step;
        }
        let n = self.n_subcarriers;
        for s in 0..self.n_symbols {
            let c = gain * Complex64::from_polar(1.0, TAU * doppler * self.symbol_times[s]);
            for (h, f) in self.h[s * n..(s + 1) * n].iter_mut().zip(freq_phasor.iter()) {
                *h += c * f;
            }
        }
    }
}

/// Superposes every TRP's taps on the slot grid:
/// `H(t_s, f_k) = Σ_trp Σ_tap g · e^{j2π(ν - precomp) t_s} · e^{-j2π f_k (τ + cdd)}`.
pub fn combined_freq_response(
    taps_per_trp: &[ChannelTaps],
    cdd_delays: &[f64],
    precomp_shifts: &[f64],
    numerology: &Numerology,
) -> Result<FreqResponse> {
    if taps_per_trp.is_empty() {
        return Err(Error::config("combined response needs at least one TRP"));
    }
    if cdd_delays.len() != taps_per_trp.len() || precomp_shifts.len() != taps_per_trp.len() {
        return Err(Error::config(format!(
            "{} TRPs but {} CDD delays and {} precompensation shifts",
            taps_per_trp.len(),
            cdd_delays.len(),
            precomp_shifts.len()
        )));
    }
    let mut out = FreqResponse::zeros(numerology);
    let mut scratch = vec![Complex64::new(0.0, 0.0); out.n_subcarriers];
    for ((trp, &cdd), &pre) in taps_per_trp.iter().zip(cdd_delays).zip(precomp_shifts) {
        for tap in &trp.taps {
            out.add_path(tap.gain, tap.doppler - pre, tap.delay + cdd, &mut scratch);
        }
    }
    Ok(out)
}
