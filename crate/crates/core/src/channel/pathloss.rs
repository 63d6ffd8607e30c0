//! Large-scale path gain: log-distance macro model with correlated shadowing,
//! and a free-space budget with a vertical antenna pattern for rail masts.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::rng::{self, Tag};
use crate::scenario::{Site, Vec3};
use crate::{db_to_lin, Error, Result, SPEED_OF_LIGHT};

/// `PL = intercept + slope · log10(d_km)` plus lognormal shadowing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacroPathLoss {
    pub intercept_db: f64,
    pub slope_db: f64,
    pub shadow_sigma_db: f64,
    /// Distance between independent shadowing samples along the road, m.
    pub decorrelation_m: f64,
    /// Road length after which the shadowing field repeats (ring roads).
    pub wrap_length_m: Option<f64>,
    pub seed: u64,
}

impl Default for MacroPathLoss {
    fn default() -> Self {
        Self {
            intercept_db: 128.1,
            slope_db: 37.6,
            shadow_sigma_db: 8.0,
            decorrelation_m: 50.0,
            wrap_length_m: None,
            seed: 0,
        }
    }
}

impl MacroPathLoss {
    /// Mean path gain (negative path loss), dB, at horizontal distance `d` m.
    pub fn mean_gain_db(&self, d: f64) -> f64 {
        -(self.intercept_db + self.slope_db * (d / 1000.0).log10())
    }

    /// Unit-variance shadowing value for `site` at road coordinate `x`.
    ///
    /// Independent N(0, 1) anchors sit every `decorrelation_m`; between
    /// anchors `a`, `b` the field is `cos(πu/2)·a + sin(πu/2)·b`, which keeps
    /// unit variance everywhere and is continuous in `x`.
    pub fn shadow_unit(&self, site_id: usize, x: f64) -> f64 {
        self.interpolate(x, |i| self.anchor(site_id, i))
    }

    fn cells(&self) -> Option<i64> {
        self.wrap_length_m
            .map(|len| (len / self.decorrelation_m).round().max(1.0) as i64)
    }

    fn anchor(&self, site_id: usize, i: i64) -> f64 {
        let i = self.cells().map_or(i, |n| i.rem_euclid(n));
        let mut r = rng::stream(self.seed, Tag::Shadowing, site_id as u64, i as u64);
        rng::standard_normal(&mut r)
    }

    /// Anchor spacing; on a ring it is stretched so a whole number of anchors fits.
    fn step(&self) -> f64 {
        match (self.wrap_length_m, self.cells()) {
            (Some(len), Some(n)) => len / n as f64,
            _ => self.decorrelation_m,
        }
    }

    fn interpolate(&self, x: f64, anchor: impl Fn(i64) -> f64) -> f64 {
        let step = self.step();
        let x = match self.wrap_length_m {
            Some(len) => x.rem_euclid(len),
            None => x,
        };
        let cell = (x / step).floor();
        let u = x / step - cell;
        let i = cell as i64;
        let (s, c) = (FRAC_PI_2 * u).sin_cos();
        c * anchor(i) + s * anchor(i + 1)
    }
}

/// Precomputed shadowing anchors of one site on a ring road; evaluates the
/// same field as [`MacroPathLoss::shadow_unit`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowTable {
    params: MacroPathLoss,
    anchors: Vec<f64>,
}

impl ShadowTable {
    pub fn new(params: &MacroPathLoss, site_id: usize) -> Result<Self> {
        let n = params
            .cells()
            .ok_or_else(|| Error::config("shadow table needs a wrap length"))?;
        Ok(Self {
            params: *params,
            anchors: (0..n).map(|i| params.anchor(site_id, i)).collect(),
        })
    }

    pub fn value(&self, x: f64) -> f64 {
        let n = self.anchors.len() as i64;
        self.params.interpolate(x, |i| self.anchors[i.rem_euclid(n) as usize])
    }
}

/// Path gain from `site` to `position`, dB (mean curve plus shadowing).
pub fn macro_pathgain(site: &Site, position: &Vec3, params: &MacroPathLoss) -> Result<f64> {
    let d = (site.position.xy() - position.xy()).norm();
    if !(d > 0.0) {
        return Err(Error::Geometry(format!("position on top of site {}", site.id)));
    }
    let mut g = params.mean_gain_db(d);
    if params.shadow_sigma_db > 0.0 {
        g += params.shadow_sigma_db * params.shadow_unit(site.id, position.x);
    }
    Ok(g)
}

/// Free-space loss, peak antenna gain and a parabolic vertical pattern
/// `-min(12 ((θ - tilt)/θ3dB)², SLA)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RailLinkBudget {
    pub carrier_hz: f64,
    pub vertical_beamwidth_deg: f64,
    pub side_lobe_db: f64,
}

impl Default for RailLinkBudget {
    fn default() -> Self {
        Self {
            carrier_hz: 2e9,
            vertical_beamwidth_deg: 62.0,
            side_lobe_db: 20.0,
        }
    }
}

impl RailLinkBudget {
    pub fn vertical_pattern_db(&self, depression: f64, downtilt: f64) -> f64 {
        let off = (depression - downtilt) * 180.0 / PI / self.vertical_beamwidth_deg;
        -(12.0 * off * off).min(self.side_lobe_db)
    }

    pub fn path_gain_db(&self, site: &Site, position: &Vec3) -> Result<f64> {
        let diff = site.position - position;
        let d = diff.norm();
        if !(d > 0.0) {
            return Err(Error::Geometry(format!("position on top of site {}", site.id)));
        }
        let lambda = SPEED_OF_LIGHT / self.carrier_hz;
        let fspl = 20.0 * (4.0 * PI * d / lambda).log10();
        let depression = diff.z.atan2(diff.xy().norm());
        Ok(site.tx_power_eirp_reference - fspl + self.vertical_pattern_db(depression, site.downtilt))
    }
}

/// Noise power fixed by requiring a target SNR at a reference geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrAnchor {
    pub snr_db: f64,
    /// `true`: the target applies to the sum of all link gains (SFN);
    /// `false`: to the strongest single link.
    pub combined: bool,
}

impl SnrAnchor {
    /// Noise power in the same linear units as `link_gains_db` at the reference geometry.
    pub fn noise_power(&self, link_gains_db: &[f64]) -> Result<f64> {
        if link_gains_db.is_empty() {
            return Err(Error::config("SNR anchor needs at least one link"));
        }
        let lin = link_gains_db.iter().map(|&g| db_to_lin(g));
        let signal = if self.combined {
            lin.sum()
        } else {
            lin.fold(0.0, f64::max)
        };
        Ok(signal / db_to_lin(self.snr_db))
    }
}
