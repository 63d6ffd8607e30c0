//! Site deployments and vehicle trajectories.
//!
//! Roads and tracks run along +x. Sites sit at `y = lateral_offset` and the
//! vehicle path is at `y ≈ 0`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{kmh_to_ms, Error, Result};

pub type Vec3 = Vector3<f64>;

/// Antenna height of road vehicles, m.
pub const VEHICLE_ANTENNA_HEIGHT: f64 = 1.5;
/// Rail TRP mast height, m.
pub const RAIL_SITE_HEIGHT: f64 = 35.0;
/// Rail TRP downtilt, rad.
pub const RAIL_DOWNTILT: f64 = 10.0 * PI / 180.0;
/// Peak antenna gain of the rail TRPs, dBi.
pub const RAIL_ANTENNA_GAIN_DBI: f64 = 20.5;

const SPACING_TOL: f64 = 1e-9;

/// Uniform planar array. `cols` run horizontally, `rows` vertically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Element spacing in wavelengths.
    pub element_spacing: f64,
}

impl ArrayGeometry {
    pub fn new(rows: usize, cols: usize, element_spacing: f64) -> Result<Self> {
        if rows * cols == 0 {
            return Err(Error::config("array needs at least one element"));
        }
        if !(element_spacing > 0.0) {
            return Err(Error::config("element spacing must be positive"));
        }
        Ok(Self {
            rows,
            cols,
            element_spacing,
        })
    }

    /// Square half-wavelength array with `n` elements; `n` must be a perfect square.
    pub fn square(n: usize) -> Result<Self> {
        let side = (n as f64).sqrt().round() as usize;
        if side * side != n {
            return Err(Error::config(format!("{n} elements do not form a square array")));
        }
        Self::new(side, side, 0.5)
    }

    pub fn single() -> Self {
        Self {
            rows: 1,
            cols: 1,
            element_spacing: 0.5,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub id: usize,
    pub position: Vec3,
    /// Azimuth of the antenna boresight, rad, measured from +x.
    pub boresight_azimuth: f64,
    /// Downtilt below the horizon, rad.
    pub downtilt: f64,
    pub antenna: ArrayGeometry,
    /// Reference EIRP offset in dB used when anchoring SNRs.
    pub tx_power_eirp_reference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    HighwayPositioning,
    RailHst,
    HighwayMacro,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub sites: Vec<Site>,
    pub road_axis: Vec3,
    pub scenario_kind: ScenarioKind,
}

impl Deployment {
    /// Coordinate of `p` along the road axis.
    pub fn along_road(&self, p: &Vec3) -> f64 {
        p.dot(&self.road_axis)
    }

    /// Distance between consecutive sites along the road; `None` for < 2 sites.
    pub fn isd(&self) -> Option<f64> {
        let s = &self.sites;
        (s.len() >= 2).then(|| self.along_road(&s[1].position) - self.along_road(&s[0].position))
    }

    /// Indices of the `n` sites closest to `p` (ties by site order).
    pub fn nearest_sites(&self, p: &Vec3, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.sites.len()).collect();
        idx.sort_by(|&a, &b| {
            let da = (self.sites[a].position - p).norm();
            let db = (self.sites[b].position - p).norm();
            da.total_cmp(&db).then(a.cmp(&b))
        });
        idx.truncate(n);
        idx
    }

    /// Same sites seen while driving the road in the opposite direction.
    ///
    /// Along-road coordinates map as `s -> s_first + s_last - s`; ids are
    /// reassigned in the new order.
    pub fn reflected(&self) -> Deployment {
        let Some((first, last)) = self.sites.first().zip(self.sites.last()) else {
            return self.clone();
        };
        let total = self.along_road(&first.position) + self.along_road(&last.position);
        let axis = self.road_axis;
        let mut sites: Vec<Site> = self
            .sites
            .iter()
            .rev()
            .map(|s| {
                let along = self.along_road(&s.position);
                let mut out = s.clone();
                out.position = s.position + axis * (total - 2.0 * along);
                out
            })
            .collect();
        for (i, s) in sites.iter_mut().enumerate() {
            s.id = i;
        }
        Deployment {
            sites,
            road_axis: axis,
            scenario_kind: self.scenario_kind,
        }
    }

    /// Checks the ordering and spacing invariants.
    pub fn validate(&self, isd: f64) -> Result<()> {
        for w in self.sites.windows(2) {
            let gap = self.along_road(&w[1].position) - self.along_road(&w[0].position);
            if (gap - isd).abs() > SPACING_TOL {
                return Err(Error::config(format!("site spacing {gap} differs from isd {isd}")));
            }
        }
        for s in &self.sites {
            if s.position.z < 0.0 || !(0.0..FRAC_PI_2).contains(&s.downtilt) {
                return Err(Error::config(format!("site {} violates height/downtilt bounds", s.id)));
            }
        }
        Ok(())
    }
}

fn boresight_toward_road(lateral_offset: f64) -> f64 {
    if lateral_offset > 0.0 {
        -FRAC_PI_2
    } else if lateral_offset < 0.0 {
        FRAC_PI_2
    } else {
        0.0
    }
}

/// Sites every `isd` metres from 0 up to `span`.
pub fn build_linear_deployment(
    isd: f64,
    lateral_offset: f64,
    site_height: f64,
    span: f64,
    kind: ScenarioKind,
) -> Result<Deployment> {
    if !(isd > 0.0) {
        return Err(Error::config(format!(
            "inter-site distance must be positive, got {isd}"
        )));
    }
    if !(span >= isd) {
        return Err(Error::config(format!("span {span} shorter than isd {isd}")));
    }
    if !(site_height >= 0.0) {
        return Err(Error::config("site height must be non-negative"));
    }
    let (antenna, downtilt, eirp) = match kind {
        ScenarioKind::HighwayPositioning => (ArrayGeometry::square(256)?, 0.0, 0.0),
        ScenarioKind::RailHst => (ArrayGeometry::single(), RAIL_DOWNTILT, RAIL_ANTENNA_GAIN_DBI),
        ScenarioKind::HighwayMacro => (ArrayGeometry::single(), 0.0, 0.0),
    };
    let count = (span / isd + SPACING_TOL).floor() as usize + 1;
    let sites = (0..count)
        .map(|k| Site {
            id: k,
            position: Vec3::new(k as f64 * isd, lateral_offset, site_height),
            boresight_azimuth: boresight_toward_road(lateral_offset),
            downtilt,
            antenna,
            tx_power_eirp_reference: eirp,
        })
        .collect();
    Ok(Deployment {
        sites,
        road_axis: Vec3::x(),
        scenario_kind: kind,
    })
}

/// Four-TRP rail deployment: masts 35 m high, 10° downtilt.
pub fn build_rail_deployment(isd: f64, offset: f64) -> Result<Deployment> {
    build_linear_deployment(isd, offset, RAIL_SITE_HEIGHT, 3.0 * isd, ScenarioKind::RailHst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<PoseSample>,
    pub sample_period: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Copy with every sample raised to antenna height `z`.
    pub fn at_height(mut self, z: f64) -> Self {
        for s in &mut self.samples {
            s.position.z = z;
        }
        self
    }

    /// Sample whose timestamp equals `t` (to within a nanosecond).
    pub fn sample_at(&self, t: f64) -> Option<&PoseSample> {
        let t0 = self.samples.first()?.t;
        let k = ((t - t0) / self.sample_period).round();
        if k < 0.0 {
            return None;
        }
        self.samples.get(k as usize).filter(|s| (s.t - t).abs() <= 1e-9)
    }

    /// Checks timestamp uniformity, finiteness, and velocity/position consistency.
    pub fn validate(&self) -> Result<()> {
        let dt = self.sample_period;
        for (i, s) in self.samples.iter().enumerate() {
            let finite = s.t.is_finite()
                && s.position.iter().all(|v| v.is_finite())
                && s.velocity.iter().all(|v| v.is_finite())
                && s.acceleration.iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::config(format!("non-finite trajectory sample {i}")));
            }
        }
        for w in self.samples.windows(2) {
            if ((w[1].t - w[0].t) - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::config("trajectory timestamps are not uniform"));
            }
        }
        for w in self.samples.windows(3) {
            let fd = (w[2].position - w[0].position) / (2.0 * dt);
            let speed = w[1].velocity.norm().max(1.0);
            if (fd - w[1].velocity).norm() > 1e-6 * speed {
                return Err(Error::config(format!(
                    "velocity inconsistent with positions at t={}",
                    w[1].t
                )));
            }
        }
        Ok(())
    }
}

/// Sinusoidal lane-weaving path: `y = amplitude · sin(2π x / period)` at
/// constant forward speed. Velocity and acceleration are the analytic
/// derivatives. Samples stop at the last uniform instant with `x <= span`.
pub fn snake_trajectory(speed_kmh: f64, span: f64, amplitude: f64, period: f64, dt: f64) -> Result<Trajectory> {
    if !(speed_kmh > 0.0) || !(dt > 0.0) {
        return Err(Error::config("speed and sample period must be positive"));
    }
    if !(period > 0.0) {
        return Err(Error::config("snake period must be positive"));
    }
    if !(span > 0.0) {
        return Err(Error::config("span must be positive"));
    }
    let v = kmh_to_ms(speed_kmh);
    let k = TAU / period;
    let n = (span / (v * dt) + 1e-9).floor() as usize + 1;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 * dt;
            let x = v * t;
            let phase = k * x;
            PoseSample {
                t,
                position: Vec3::new(x, amplitude * phase.sin(), VEHICLE_ANTENNA_HEIGHT),
                velocity: Vec3::new(v, amplitude * k * v * phase.cos(), 0.0),
                acceleration: Vec3::new(0.0, -amplitude * (k * v).powi(2) * phase.sin(), 0.0),
            }
        })
        .collect();
    Ok(Trajectory {
        samples,
        sample_period: dt,
    })
}

/// Straight constant-speed path along +x from the origin.
pub fn linear_trajectory(speed_kmh: f64, span: f64, dt: f64) -> Result<Trajectory> {
    snake_trajectory(speed_kmh, span, 0.0, 1.0, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn highway_positioning_layout() {
        let d = build_linear_deployment(200.0, 40.0, 10.0, 10_000.0, ScenarioKind::HighwayPositioning).unwrap();
        assert_eq!(d.sites.len(), 51);
        assert_eq!(d.sites[0].position.x, 0.0);
        assert_eq!(d.sites[50].position.x, 10_000.0);
        assert_eq!(d.sites[0].antenna, ArrayGeometry::new(16, 16, 0.5).unwrap());
        d.validate(200.0).unwrap();
    }

    #[test]
    fn macro_layout_two_sites() {
        let d = build_linear_deployment(1732.0, 0.0, 35.0, 1732.0, ScenarioKind::HighwayMacro).unwrap();
        assert_eq!(d.sites.len(), 2);
        assert_eq!(d.isd(), Some(1732.0));
    }

    #[test]
    fn span_shorter_than_isd_rejected() {
        for kind in [
            ScenarioKind::HighwayPositioning,
            ScenarioKind::RailHst,
            ScenarioKind::HighwayMacro,
        ] {
            assert!(matches!(
                build_linear_deployment(100.0, 0.0, 10.0, 50.0, kind),
                Err(Error::Config(_))
            ));
        }
        assert!(build_linear_deployment(0.0, 0.0, 10.0, 50.0, ScenarioKind::HighwayMacro).is_err());
    }

    #[test]
    fn rail_layout() {
        let d = build_rail_deployment(700.0, 10.0).unwrap();
        let xs: Vec<f64> = d.sites.iter().map(|s| s.position.x).collect();
        assert_eq!(xs, vec![0.0, 700.0, 1400.0, 2100.0]);
        for s in &d.sites {
            assert_eq!(s.position.z, 35.0);
            assert_eq!(s.position.y, 10.0);
            assert_eq!(s.downtilt, 10.0 * PI / 180.0);
            assert_eq!(s.boresight_azimuth, -FRAC_PI_2);
        }
        assert!(build_rail_deployment(0.0, 10.0).is_err());
    }

    #[test]
    fn reflection_is_an_involution_and_mirrors_coordinates() {
        let d = build_linear_deployment(200.0, 40.0, 10.0, 1000.0, ScenarioKind::HighwayPositioning).unwrap();
        let r = d.reflected();
        for (a, b) in d.sites.iter().zip(r.sites.iter().rev()) {
            assert_relative_eq!(d.along_road(&a.position), 1000.0 - r.along_road(&b.position));
        }
        r.validate(200.0).unwrap();
        assert_eq!(r.reflected(), d);
    }

    #[test]
    fn nearest_two_at_midpoint() {
        let d = build_linear_deployment(200.0, 40.0, 10.0, 10_000.0, ScenarioKind::HighwayPositioning).unwrap();
        let near = d.nearest_sites(&Vec3::new(100.0, 0.0, 1.5), 2);
        assert_eq!(near, vec![0, 1]);
    }

    #[test]
    fn snake_kinematics() {
        let tr = snake_trajectory(130.0, 10_000.0, 3.5, 500.0, 0.01).unwrap();
        let v = 130.0 / 3.6;
        assert_relative_eq!(tr.samples[10].velocity.x, v, epsilon = 1e-12);
        assert_relative_eq!(v, 36.111_111_111, epsilon = 1e-8);
        let amax = tr.samples.iter().map(|s| s.acceleration.y.abs()).fold(0.0, f64::max);
        let expected = (TAU * v / 500.0).powi(2) * 3.5;
        assert_relative_eq!(expected, 0.7208, epsilon = 1e-3);
        assert!(amax <= expected + 1e-12 && amax > expected * 0.999);
        let last = tr.samples.last().unwrap();
        assert!(last.position.x <= 10_000.0 && last.position.x > 10_000.0 - v * 0.01);
        tr.validate().unwrap();
    }

    #[test]
    fn straight_line_has_no_acceleration() {
        let tr = snake_trajectory(130.0, 1000.0, 0.0, 500.0, 0.01).unwrap();
        assert!(tr
            .samples
            .iter()
            .all(|s| s.acceleration == Vec3::zeros() && s.position.y == 0.0));
        assert!(snake_trajectory(130.0, 1000.0, 3.5, 0.0, 0.01).is_err());
    }

    #[test]
    fn train_run() {
        let tr = linear_trajectory(500.0, 2100.0, 5e-4).unwrap();
        let v = 500.0 / 3.6;
        assert_relative_eq!(tr.samples[1].velocity.x, v);
        assert!(tr.samples.iter().all(|s| s.acceleration.norm() == 0.0));
        // midpoint between TRP 1 and TRP 2
        let t_mid = 1050.0 / v;
        assert_relative_eq!(t_mid, 7.56, epsilon = 1e-3);
        let s = tr.sample_at((t_mid / 5e-4).round() * 5e-4).unwrap();
        assert!((s.position.x - 1050.0).abs() < v * 5e-4);
        tr.validate().unwrap();
    }
}
