//! Tapped-delay-line channels with a line-of-sight tap.
//!
//! A [`TapProfile`] is a small table of clusters (relative delay, relative
//! power, departure/arrival angle offsets from the LoS direction). Realized
//! taps carry absolute delay, per-tap Doppler from the arrival direction and
//! the UE velocity, and a complex gain. The LoS gain is deterministic
//! (`√P · e^{-j2πd/λ}`); NLoS gains are complex Gaussian draws keyed by
//! `(seed, link, realization)` whose phase advances with their Doppler, so
//! successive evaluation times of one realization are phase-continuous.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Tag};
use crate::scenario::{PoseSample, Site};
use crate::{db_to_lin, lin_to_db, Error, Result, SPEED_OF_LIGHT};

use super::{los_observation, Angles};

/// One row of a tap profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapSpec {
    pub delay_ns: f64,
    pub power_db: f64,
    pub aod_deg: f64,
    pub aoa_deg: f64,
    pub los: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapProfile {
    pub taps: Vec<TapSpec>,
}

impl Default for TapProfile {
    /// LoS tap plus three weak clusters at 30/70/150 ns.
    fn default() -> Self {
        let row = |delay_ns, power_db, aod_deg, aoa_deg, los| TapSpec {
            delay_ns,
            power_db,
            aod_deg,
            aoa_deg,
            los,
        };
        Self {
            taps: vec![
                row(0.0, 0.0, 0.0, 0.0, true),
                row(30.0, -15.8, 8.0, -120.0, false),
                row(70.0, -18.0, -12.0, 75.0, false),
                row(150.0, -21.0, 20.0, 160.0, false),
            ],
        }
    }
}

impl TapProfile {
    /// Parses a whitespace- or comma-separated table with columns
    /// `delay_ns power_db aod_deg aoa_deg los_flag`. Blank lines, `#`
    /// comments and a header row starting with `delay_ns` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut taps = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() || line.starts_with("delay_ns") {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if cols.len() != 5 {
                return Err(Error::config(format!(
                    "tap table line {}: expected 5 columns, found {}",
                    lineno + 1,
                    cols.len()
                )));
            }
            let num = |i: usize| -> Result<f64> {
                cols[i]
                    .parse::<f64>()
                    .map_err(|_| Error::config(format!("tap table line {}: bad number {:?}", lineno + 1, cols[i])))
            };
            let los = match cols[4] {
                "1" | "true" | "los" => true,
                "0" | "false" | "nlos" => false,
                other => {
                    return Err(Error::config(format!(
                        "tap table line {}: bad los flag {other:?}",
                        lineno + 1
                    )))
                }
            };
            taps.push(TapSpec {
                delay_ns: num(0)?,
                power_db: num(1)?,
                aod_deg: num(2)?,
                aoa_deg: num(3)?,
                los,
            });
        }
        let profile = Self { taps };
        profile.validate()?;
        Ok(profile)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("delay_ns power_db aod_deg aoa_deg los_flag\n");
        for t in &self.taps {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                t.delay_ns, t.power_db, t.aod_deg, t.aoa_deg, t.los as u8
            );
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps.is_empty() {
            return Err(Error::config("tap profile is empty"));
        }
        if self.taps.iter().filter(|t| t.los).count() != 1 {
            return Err(Error::config("tap profile needs exactly one LoS tap"));
        }
        if self
            .taps
            .iter()
            .any(|t| !(t.delay_ns >= 0.0) || !t.power_db.is_finite())
        {
            return Err(Error::config("tap delays must be non-negative and powers finite"));
        }
        Ok(())
    }

    fn linear_powers(&self) -> Vec<f64> {
        let p: Vec<f64> = self.taps.iter().map(|t| db_to_lin(t.power_db)).collect();
        let total: f64 = p.iter().sum();
        p.into_iter().map(|x| x / total).collect()
    }

    /// LoS-to-scattered power ratio of the table, dB.
    pub fn k_factor_db(&self) -> f64 {
        let p = self.linear_powers();
        let (los, nlos): (f64, f64) =
            self.taps.iter().zip(&p).fold(
                (0.0, 0.0),
                |(l, n), (t, &x)| if t.los { (l + x, n) } else { (l, n + x) },
            );
        lin_to_db(los / nlos)
    }

    /// Power-weighted RMS delay spread of the table, seconds.
    pub fn rms_delay_spread(&self) -> f64 {
        let p = self.linear_powers();
        let d: Vec<f64> = self.taps.iter().map(|t| t.delay_ns * 1e-9).collect();
        rms_spread(&d, &p)
    }
}

pub(crate) fn rms_spread(delays: &[f64], powers: &[f64]) -> f64 {
    let total: f64 = powers.iter().sum();
    let mean: f64 = delays.iter().zip(powers).map(|(d, p)| d * p).sum::<f64>() / total;
    let second: f64 = delays.iter().zip(powers).map(|(d, p)| d * d * p).sum::<f64>() / total;
    (second - mean * mean).max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    /// Absolute delay including propagation, s.
    pub delay: f64,
    pub doppler: f64,
    pub gain: Complex64,
    pub aod: f64,
    pub aoa: f64,
    pub los: bool,
}

/// Taps of one link evaluated at `reference_time`, sorted by delay.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTaps {
    pub taps: Vec<Tap>,
    pub reference_time: f64,
}

impl ChannelTaps {
    pub fn total_power(&self) -> f64 {
        self.taps.iter().map(|t| t.gain.norm_sqr()).sum()
    }

    pub fn los(&self) -> Option<&Tap> {
        self.taps.iter().find(|t| t.los)
    }

    /// Realized power-weighted RMS delay spread, s.
    pub fn rms_delay_spread(&self) -> f64 {
        let d: Vec<f64> = self.taps.iter().map(|t| t.delay).collect();
        let p: Vec<f64> = self.taps.iter().map(|t| t.gain.norm_sqr()).collect();
        rms_spread(&d, &p)
    }

    /// Multiplies every gain by `c`.
    pub fn scaled(mut self, c: Complex64) -> Self {
        for t in &mut self.taps {
            t.gain *= c;
        }
        self
    }
}

/// Link-level inputs to [`hst_taps`] besides geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapContext {
    pub carrier_hz: f64,
    /// Target `Σ|gain|²` (linear path gain of the link).
    pub link_power: f64,
    pub seed: u64,
    /// Identifies the link in the random stream (e.g. the TRP index).
    pub link_id: u64,
    /// Independent NLoS realization index.
    pub realization: u64,
}

pub fn hst_taps(site: &Site, pose: &PoseSample, profile: &TapProfile, t: f64, ctx: &TapContext) -> Result<ChannelTaps> {
    profile.validate()?;
    let los = los_observation(site, pose, ctx.carrier_hz)?;
    let lambda = SPEED_OF_LIGHT / ctx.carrier_hz;
    let f_max = pose.velocity.norm() * ctx.carrier_hz / SPEED_OF_LIGHT;
    let base_delay = los.true_range / SPEED_OF_LIGHT;
    let powers = profile.linear_powers();

    let mut gains_rng = rng::stream(ctx.seed, Tag::TapGains, ctx.link_id, ctx.realization);
    let mut taps = Vec::with_capacity(profile.taps.len());
    for (spec, &p) in profile.taps.iter().zip(&powers) {
        let amplitude = p.sqrt();
        let (doppler, gain, aoa) = if spec.los {
            let phase = -std::f64::consts::TAU * los.true_range / lambda;
            (
                los.doppler,
                Complex64::from_polar(amplitude, phase),
                los.true_aoa.azimuth,
            )
        } else {
            let aoa = los.true_aoa.azimuth + spec.aoa_deg.to_radians();
            let dir = Angles {
                azimuth: aoa,
                elevation: los.true_aoa.elevation,
            }
            .unit_vector();
            let doppler = pose.velocity.dot(&dir) * ctx.carrier_hz / SPEED_OF_LIGHT;
            debug_assert!(doppler.abs() <= f_max * (1.0 + 1e-12));
            let g0 = rng::complex_normal(&mut gains_rng) * amplitude;
            let rot = Complex64::from_polar(1.0, std::f64::consts::TAU * doppler * t);
            (doppler, g0 * rot, aoa)
        };
        taps.push(Tap {
            delay: base_delay + spec.delay_ns * 1e-9,
            doppler,
            gain,
            aod: los.true_aod.azimuth + spec.aod_deg.to_radians(),
            aoa,
            los: spec.los,
        });
    }
    let total: f64 = taps.iter().map(|t| t.gain.norm_sqr()).sum();
    let scale = (ctx.link_power / total).sqrt();
    for tap in &mut taps {
        tap.gain *= scale;
    }
    taps.sort_by(|a, b| a.delay.total_cmp(&b.delay));
    Ok(ChannelTaps {
        taps,
        reference_time: t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{ArrayGeometry, Vec3};
    use approx::assert_relative_eq;

    fn site() -> Site {
        Site {
            id: 0,
            position: Vec3::new(1000.0, 10.0, 35.0),
            boresight_azimuth: 0.0,
            downtilt: 0.0,
            antenna: ArrayGeometry::single(),
            tx_power_eirp_reference: 0.0,
        }
    }

    fn train(vx: f64) -> PoseSample {
        PoseSample {
            t: 0.0,
            position: Vec3::new(0.0, 0.0, 35.0),
            velocity: Vec3::new(vx, 0.0, 0.0),
            acceleration: Vec3::zeros(),
        }
    }

    fn ctx(realization: u64) -> TapContext {
        TapContext {
            carrier_hz: 2e9,
            link_power: 1.0,
            seed: 5,
            link_id: 0,
            realization,
        }
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
    fn los_only_doppler_sign() {
        let v = 500.0 / 3.6;
        let approach = hst_taps(&site(), &train(v), &los_only(), 0.0, &ctx(0)).unwrap();
        assert_eq!(approach.taps.len(), 1);
        let fd = approach.taps[0].doppler;
        // 10 m lateral offset: cos of the LoS angle is 1000/√(1000²+10²)
        let cos = 1000.0 / (1000.0f64.powi(2) + 100.0).sqrt();
        assert_relative_eq!(fd, v * 2e9 / SPEED_OF_LIGHT * cos, epsilon = 1e-9);
        assert!((fd - 926.5).abs() < 0.5);
        let recede = hst_taps(&site(), &train(-v), &los_only(), 0.0, &ctx(0)).unwrap();
        assert_relative_eq!(recede.taps[0].doppler, -fd, epsilon = 1e-9);
    }

    #[test]
    fn power_normalized_and_sorted() {
        let mut c = ctx(3);
        c.link_power = 2.5e-9;
        let taps = hst_taps(&site(), &train(100.0), &TapProfile::default(), 0.37, &c).unwrap();
        assert_relative_eq!(taps.total_power(), 2.5e-9, max_relative = 1e-12);
        assert!(taps.taps.windows(2).all(|w| w[0].delay <= w[1].delay));
        let fmax = 100.0 * 2e9 / SPEED_OF_LIGHT;
        assert!(taps.taps.iter().all(|t| t.doppler.abs() <= fmax * (1.0 + 1e-12)));
    }

    #[test]
    fn empty_profile_rejected() {
        let empty = TapProfile { taps: vec![] };
        assert!(matches!(
            hst_taps(&site(), &train(1.0), &empty, 0.0, &ctx(0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn nlos_phase_is_continuous_in_time() {
        let p = TapProfile::default();
        let v = 138.0;
        let a = hst_taps(&site(), &train(v), &p, 0.0, &ctx(1)).unwrap();
        let b = hst_taps(&site(), &train(v), &p, 1e-3, &ctx(1)).unwrap();
        for (x, y) in a.taps.iter().zip(&b.taps).filter(|(x, _)| !x.los) {
            let rot = Complex64::from_polar(1.0, std::f64::consts::TAU * x.doppler * 1e-3);
            assert_relative_eq!((x.gain * rot - y.gain).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn table_round_trip_and_errors() {
        let p = TapProfile::default();
        assert_eq!(TapProfile::parse(&p.to_table()).unwrap(), p);
        assert!(TapProfile::parse("0 0 0 0 1\n30 -10 0 0\n").is_err());
        assert!(TapProfile::parse("0 0 0 0 maybe\n").is_err());
        assert!(TapProfile::parse("30 -10 0 0 0\n").is_err());
        let csv = "delay_ns,power_db,aod_deg,aoa_deg,los_flag\n0,0,0,0,1\n# weak cluster\n40,-12,5,90,0\n";
        assert_eq!(TapProfile::parse(csv).unwrap().taps.len(), 2);
    }

    #[test]
    fn default_table_statistics() {
        let p = TapProfile::default();
        // 0 dB against 10^-1.58 + 10^-1.8 + 10^-2.1
        let nlos = 10f64.powf(-1.58) + 10f64.powf(-1.8) + 10f64.powf(-2.1);
        assert_relative_eq!(p.k_factor_db(), -10.0 * nlos.log10(), epsilon = 1e-12);
        assert!(p.rms_delay_spread() > 0.0 && p.rms_delay_spread() < 150e-9);
    }
}
