//! IMU + NR downlink positioning on a highway.
//!
//! Each epoch the `n` nearest sites report range and arrival angles; the
//! vehicle IMU reports planar acceleration. [`ekf_fuse`] runs an extended
//! Kalman filter over `(x, y, vx, vy)` with the IMU as control input, and
//! [`nr_only_position`] solves each epoch from the radio measurements alone.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::channel::{grid_step, los_observation, Angles};
use crate::rng::{self, Tag};
use crate::scenario::{
    build_linear_deployment, snake_trajectory, Deployment, PoseSample, ScenarioKind, Site, Trajectory, Vec3,
};
use crate::stats::ErrorCdf;
use crate::{db_to_lin, Error, Result, SPEED_OF_LIGHT};

const JITTER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteMeasurement {
    pub site_id: usize,
    pub range: f64,
    pub aoa_az: f64,
    pub aoa_el: f64,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    pub t: f64,
    /// Sorted by descending SNR.
    pub per_site: Vec<SiteMeasurement>,
    pub imu_accel: Vector2<f64>,
}

/// Measurement noise magnitudes.
///
/// Range: `σ_r = c / (2 B √(2 SNR))`. Angles: the beam-grid step over
/// `√12` combined in quadrature with `σ_θ0 / √SNR`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub bandwidth_hz: f64,
    /// Gaussian angle std at 0 dB SNR, rad.
    pub angle_sigma0_rad: f64,
    /// Beams per array dimension relative to the element count.
    pub beam_oversampling: usize,
    pub angle_quantization: bool,
    /// IMU acceleration noise std, m/s².
    pub imu_sigma: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            bandwidth_hz: 100e6,
            angle_sigma0_rad: 0.05,
            beam_oversampling: 4,
            angle_quantization: true,
            imu_sigma: 0.05,
        }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            angle_sigma0_rad: 0.0,
            angle_quantization: false,
            imu_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn range_sigma(&self, snr_db: f64) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz * (2.0 * db_to_lin(snr_db)).sqrt())
    }

    /// `(azimuth, elevation)` std for a site with array `site`.
    pub fn angle_sigma(&self, site: &Site, snr_db: f64) -> (f64, f64) {
        let gauss = self.angle_sigma0_rad / db_to_lin(snr_db).sqrt();
        let (qa, qe) = if self.angle_quantization {
            let a = &site.antenna;
            let n = self.beam_oversampling.max(1);
            (
                grid_step(a.cols, n * a.cols, a.element_spacing),
                grid_step(a.rows, n * a.rows, a.element_spacing),
            )
        } else {
            (0.0, 0.0)
        };
        let combine = |q: f64| ((q * q) / 12.0 + gauss * gauss).sqrt();
        (combine(qa), combine(qe))
    }
}

fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    (a + PI).rem_euclid(TAU) - PI
}

/// SNR of each selected site relative to the configured value at the closest one
/// (free-space scaling).
fn site_snrs(deployment: &Deployment, chosen: &[usize], pose: &PoseSample, snr_db: f64) -> Vec<f64> {
    let d: Vec<f64> = chosen
        .iter()
        .map(|&i| (deployment.sites[i].position - pose.position).norm())
        .collect();
    let d_min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    d.iter().map(|&di| snr_db + 20.0 * (d_min / di).log10()).collect()
}

pub fn simulate_measurements(
    deployment: &Deployment,
    trajectory: &Trajectory,
    snr_db: f64,
    n_fused_bs: usize,
    noise: &NoiseModel,
    carrier_hz: f64,
    seed: u64,
) -> Result<Vec<MeasurementFrame>> {
    if n_fused_bs == 0 {
        return Err(Error::config("nb_fused_bs must be at least 1"));
    }
    if n_fused_bs > deployment.sites.len() {
        return Err(Error::config(format!(
            "nb_fused_bs = {n_fused_bs} exceeds the {} deployed sites",
            deployment.sites.len()
        )));
    }
    if !snr_db.is_finite() && snr_db != f64::INFINITY {
        return Err(Error::config("snr_db must be finite"));
    }
    let mut imu_rng = rng::stream(seed, Tag::ImuNoise, 0, 0);
    let mut frames = Vec::with_capacity(trajectory.len());
    for (epoch, pose) in trajectory.samples.iter().enumerate() {
        let chosen = deployment.nearest_sites(&pose.position, n_fused_bs);
        let snrs = site_snrs(deployment, &chosen, pose, snr_db);
        let mut per_site = Vec::with_capacity(chosen.len());
        for (&i, &snr) in chosen.iter().zip(&snrs) {
            let site = &deployment.sites[i];
            let truth = los_observation(site, pose, carrier_hz)?;
            let sr = noise.range_sigma(snr);
            let (sa, se) = noise.angle_sigma(site, snr);
            let mut rr = rng::stream(seed, Tag::RangeNoise, site.id as u64, epoch as u64);
            let mut ra = rng::stream(seed, Tag::AngleNoise, site.id as u64, epoch as u64);
            let range = truth.true_range + sr * rng::standard_normal(&mut rr);
            per_site.push(SiteMeasurement {
                site_id: site.id,
                range: range.max(f64::MIN_POSITIVE),
                aoa_az: wrap_angle(truth.true_aoa.azimuth + sa * rng::standard_normal(&mut ra)),
                aoa_el: truth.true_aoa.elevation + se * rng::standard_normal(&mut ra),
                snr_db: snr,
            });
        }
        per_site.sort_by(|a, b| b.snr_db.total_cmp(&a.snr_db).then(a.site_id.cmp(&b.site_id)));
        let n = Vector2::new(rng::standard_normal(&mut imu_rng), rng::standard_normal(&mut imu_rng));
        frames.push(MeasurementFrame {
            t: pose.t,
            per_site,
            imu_accel: pose.acceleration.xy() + n * noise.imu_sigma,
        });
    }
    Ok(frames)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateEstimate {
    pub t: f64,
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
}

impl StateEstimate {
    pub fn position(&self) -> Vector2<f64> {
        self.mean.xy()
    }
}

/// Filter tuning: the noise the filter assumes, which need not match the
/// noise used to generate the measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub noise: NoiseModel,
    /// Acceleration noise std driving the process model, m/s².
    pub process_accel_sigma: f64,
    /// Receiver height assumed by the measurement model, m.
    pub ue_height: f64,
    pub use_angles: bool,
    pub sites: Vec<Site>,
}

/// Normalized innovation squared of one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Innovation {
    pub t: f64,
    pub nis: f64,
    pub dof: usize,
}

/// Predicted measurement and Jacobian rows for one site at planar position `p`.
fn site_model(site: &Site, p: Vector2<f64>, z: f64) -> ([f64; 3], [[f64; 2]; 3]) {
    let d = site.position - Vec3::new(p.x, p.y, z);
    let rho2 = d.x * d.x + d.y * d.y;
    let rho = rho2.sqrt();
    let r = d.norm();
    let a = Angles::of(&d);
    let r2 = r * r;
    // ∂/∂p of (range, azimuth, elevation); d = site - p so ∂d/∂p = -I.
    let jr = [-d.x / r, -d.y / r];
    let ja = [d.y / rho2, -d.x / rho2];
    let je = [d.z * d.x / (rho * r2), d.z * d.y / (rho * r2)];
    ([r, a.azimuth, a.elevation], [jr, ja, je])
}

fn symmetrize(p: &mut Matrix4<f64>) {
    *p = (*p + p.transpose()) * 0.5;
    for i in 0..4 {
        p[(i, i)] += JITTER;
    }
}

pub struct FusionFilter<'a> {
    params: &'a FusionParams,
    state: StateEstimate,
    last_accel: Option<Vector2<f64>>,
    epoch: usize,
}

impl<'a> FusionFilter<'a> {
    pub fn new(params: &'a FusionParams, initial: StateEstimate) -> Result<Self> {
        if initial.covariance.cholesky().is_none() {
            return Err(Error::config("initial covariance is not positive-definite"));
        }
        Ok(Self {
            params,
            state: initial,
            last_accel: None,
            epoch: 0,
        })
    }

    pub fn state(&self) -> &StateEstimate {
        &self.state
    }

    /// Propagates to `t` using the most recent IMU reading.
    pub fn predict(&mut self, t: f64) -> Result<()> {
        let dt = t - self.state.t;
        if dt < 0.0 {
            return Err(Error::config(format!(
                "frame at t={t} precedes filter time {}",
                self.state.t
            )));
        }
        let u = self.last_accel.unwrap_or_else(Vector2::zeros);
        let f = Matrix4::new(
            1.0, 0.0, dt, 0.0, //
            0.0, 1.0, 0.0, dt, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        );
        let h = 0.5 * dt * dt;
        let b = nalgebra::Matrix4x2::new(h, 0.0, 0.0, h, dt, 0.0, 0.0, dt);
        let q = b * b.transpose() * self.params.process_accel_sigma.powi(2);
        self.state.mean = f * self.state.mean + b * u;
        self.state.covariance = f * self.state.covariance * f.transpose() + q;
        symmetrize(&mut self.state.covariance);
        self.state.t = t;
        Ok(())
    }

    /// Stacked range/angle update; returns the innovation statistic.
    pub fn update(&mut self, frame: &MeasurementFrame) -> Result<Innovation> {
        let per_row = if self.params.use_angles { 3 } else { 1 };
        let m = frame.per_site.len() * per_row;
        let p = self.state.position();
        let mut innov = DVector::zeros(m);
        let mut hmat = DMatrix::zeros(m, 4);
        let mut rdiag = DVector::zeros(m);
        for (k, meas) in frame.per_site.iter().enumerate() {
            let site = self
                .params
                .sites
                .iter()
                .find(|s| s.id == meas.site_id)
                .ok_or_else(|| Error::config(format!("unknown site {}", meas.site_id)))?;
            let (pred, jac) = site_model(site, p, self.params.ue_height);
            let (sa, se) = self.params.noise.angle_sigma(site, meas.snr_db);
            let obs = [meas.range, meas.aoa_az, meas.aoa_el];
            let sig = [self.params.noise.range_sigma(meas.snr_db), sa, se];
            for j in 0..per_row {
                let row = k * per_row + j;
                let mut res = obs[j] - pred[j];
                if j == 1 {
                    res = wrap_angle(res);
                }
                innov[row] = res;
                hmat[(row, 0)] = jac[j][0];
                hmat[(row, 1)] = jac[j][1];
                rdiag[row] = sig[j] * sig[j] + JITTER;
            }
        }
        let pm = DMatrix::from_column_slice(4, 4, self.state.covariance.as_slice());
        let r = DMatrix::from_diagonal(&rdiag);
        let s = &hmat * &pm * hmat.transpose() + &r;
        let numerical = |reason: &str| Error::Numerical {
            epoch: self.epoch,
            reason: reason.to_string(),
        };
        let chol = s
            .clone()
            .cholesky()
            .ok_or_else(|| numerical("innovation covariance not positive-definite"))?;
        let s_inv_innov = chol.solve(&innov);
        let nis = innov.dot(&s_inv_innov);
        let gain = &pm * hmat.transpose() * chol.inverse();
        let dx = &gain * &innov;
        let i_kh = DMatrix::<f64>::identity(4, 4) - &gain * &hmat;
        let joseph = &i_kh * &pm * i_kh.transpose() + &gain * r * gain.transpose();
        for i in 0..4 {
            self.state.mean[i] += dx[i];
        }
        let mut cov = Matrix4::from_iterator(joseph.iter().cloned());
        symmetrize(&mut cov);
        if cov.cholesky().is_none() || !cov.iter().all(|v| v.is_finite()) {
            return Err(numerical("state covariance lost positive-definiteness"));
        }
        self.state.covariance = cov;
        Ok(Innovation {
            t: frame.t,
            nis,
            dof: m,
        })
    }

    /// Predict to the frame time, update, then latch the frame's IMU reading.
    pub fn step(&mut self, frame: &MeasurementFrame) -> Result<Innovation> {
        self.predict(frame.t)?;
        let innovation = self.update(frame)?;
        self.last_accel = Some(frame.imu_accel);
        self.epoch += 1;
        Ok(innovation)
    }
}

/// Runs the filter over `frames`; returns one estimate per frame and the
/// per-update innovation statistics.
pub fn ekf_fuse_with_diagnostics(
    frames: &[MeasurementFrame],
    initial: StateEstimate,
    params: &FusionParams,
) -> Result<(Vec<StateEstimate>, Vec<Innovation>)> {
    if frames.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(Error::config("frames are not time-ordered"));
    }
    let mut filter = FusionFilter::new(params, initial)?;
    let mut estimates = Vec::with_capacity(frames.len());
    let mut innovations = Vec::with_capacity(frames.len());
    for frame in frames {
        innovations.push(filter.step(frame)?);
        estimates.push(*filter.state());
    }
    Ok((estimates, innovations))
}

pub fn ekf_fuse(
    frames: &[MeasurementFrame],
    initial: StateEstimate,
    params: &FusionParams,
) -> Result<Vec<StateEstimate>> {
    ekf_fuse_with_diagnostics(frames, initial, params).map(|(e, _)| e)
}

/// Intersection of a single site's range and arrival direction.
fn single_site_fix(site: &Site, m: &SiteMeasurement) -> Vector2<f64> {
    let horizontal = m.range * m.aoa_el.cos();
    site.position.xy() - Vector2::new(m.aoa_az.cos(), m.aoa_az.sin()) * horizontal
}

pub const GN_MAX_ITERATIONS: usize = 50;
pub const GN_STEP_TOLERANCE: f64 = 1e-9;

/// Epoch-wise radio-only fix. One site: range/AoA intersection. Several:
/// weighted Gauss-Newton from the strongest site's intersection.
pub fn nr_only_position(
    frame: &MeasurementFrame,
    sites: &[Site],
    noise: &NoiseModel,
    ue_height: f64,
) -> Result<Vector2<f64>> {
    let lookup = |id: usize| {
        sites
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::config(format!("unknown site {id}")))
    };
    let first = frame
        .per_site
        .first()
        .ok_or_else(|| Error::config("frame has no site measurements"))?;
    let mut p = single_site_fix(lookup(first.site_id)?, first);
    if frame.per_site.len() == 1 {
        return Ok(p);
    }
    let weighted: Vec<(&Site, [f64; 3], [f64; 3])> = frame
        .per_site
        .iter()
        .map(|m| {
            let site = lookup(m.site_id)?;
            let (sa, se) = noise.angle_sigma(site, m.snr_db);
            let w = [noise.range_sigma(m.snr_db), sa, se].map(|s| 1.0 / (s * s + JITTER));
            Ok((site, [m.range, m.aoa_az, m.aoa_el], w))
        })
        .collect::<Result<_>>()?;
    for _ in 0..GN_MAX_ITERATIONS {
        let mut normal = Matrix2::zeros();
        let mut rhs = Vector2::zeros();
        for (site, obs, w) in &weighted {
            let (pred, jac) = site_model(site, p, ue_height);
            for j in 0..3 {
                let mut res = obs[j] - pred[j];
                if j == 1 {
                    res = wrap_angle(res);
                }
                let g = Vector2::new(jac[j][0], jac[j][1]);
                normal += g * g.transpose() * w[j];
                rhs += g * (w[j] * res);
            }
        }
        let step = normal
            .cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or_else(|| Error::Estimation("singular normal equations".into()))?;
        p += step;
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::Estimation("Gauss-Newton diverged".into()));
        }
        if step.norm() < GN_STEP_TOLERANCE {
            return Ok(p);
        }
    }
    Err(Error::Estimation(format!(
        "Gauss-Newton did not converge in {GN_MAX_ITERATIONS} iterations"
    )))
}

/// Horizontal-error CDF of timestamped planar estimates against `trajectory`.
pub fn error_cdf(estimates: &[(f64, Vector2<f64>)], trajectory: &Trajectory) -> Result<ErrorCdf> {
    if estimates.is_empty() {
        return Err(Error::config("no estimates to evaluate"));
    }
    let errors = estimates
        .iter()
        .map(|(t, p)| {
            trajectory
                .sample_at(*t)
                .map(|s| (s.position.xy() - p).norm())
                .ok_or_else(|| Error::config(format!("no trajectory sample at t={t}")))
        })
        .collect::<Result<Vec<_>>>()?;
    ErrorCdf::from_samples(errors)
}

/// Highway positioning scenario and filter tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PositioningConfig {
    pub carrier_hz: f64,
    pub speed_kmh: f64,
    pub isd_m: f64,
    pub lateral_offset_m: f64,
    pub site_height_m: f64,
    pub span_m: f64,
    pub snake_amplitude_m: f64,
    pub snake_period_m: f64,
    pub sample_period_s: f64,
    pub bs_antennas: usize,
    pub ue_antennas: usize,
    pub noise: NoiseModel,
    pub process_accel_sigma: f64,
    pub initial_position_var: f64,
    pub initial_velocity_var: f64,
}

impl Default for PositioningConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 28e9,
            speed_kmh: 130.0,
            isd_m: 200.0,
            lateral_offset_m: 40.0,
            site_height_m: 10.0,
            span_m: 10_000.0,
            snake_amplitude_m: 3.5,
            snake_period_m: 500.0,
            sample_period_s: 0.01,
            bs_antennas: 256,
            ue_antennas: 4,
            noise: NoiseModel::default(),
            process_accel_sigma: 0.05,
            initial_position_var: 4.0,
            initial_velocity_var: 1.0,
        }
    }
}

impl PositioningConfig {
    pub fn deployment(&self) -> Result<Deployment> {
        let mut d = build_linear_deployment(
            self.isd_m,
            self.lateral_offset_m,
            self.site_height_m,
            self.span_m,
            ScenarioKind::HighwayPositioning,
        )?;
        let array = crate::scenario::ArrayGeometry::square(self.bs_antennas)?;
        crate::scenario::ArrayGeometry::square(self.ue_antennas)?;
        for s in &mut d.sites {
            s.antenna = array;
        }
        Ok(d)
    }

    pub fn trajectory(&self) -> Result<Trajectory> {
        snake_trajectory(
            self.speed_kmh,
            self.span_m,
            self.snake_amplitude_m,
            self.snake_period_m,
            self.sample_period_s,
        )
    }

    pub fn fusion_params(&self, deployment: &Deployment) -> FusionParams {
        FusionParams {
            noise: self.noise,
            process_accel_sigma: self.process_accel_sigma.max(self.noise.imu_sigma),
            ue_height: crate::scenario::VEHICLE_ANTENNA_HEIGHT,
            use_angles: true,
            sites: deployment.sites.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fused,
    NrOnly,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Fused => "fused",
            Method::NrOnly => "nr_only",
        }
    }
}

/// One epoch of the per-epoch CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionRow {
    pub t: f64,
    pub truth_x: f64,
    pub truth_y: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub err_m: f64,
    pub method: Method,
    pub nb_fused_bs: usize,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositioningRun {
    pub snr_db: f64,
    pub nb_fused_bs: usize,
    pub rows: Vec<PositionRow>,
    pub fused: ErrorCdf,
    pub nr_only: ErrorCdf,
    /// Epochs where the radio-only solve failed (excluded from the CDF).
    pub nr_failures: usize,
    pub innovations: Vec<Innovation>,
}

/// Simulates one (SNR, NbFusedBS) point and evaluates both methods.
pub fn run_positioning(cfg: &PositioningConfig, snr_db: f64, nb_fused_bs: usize, seed: u64) -> Result<PositioningRun> {
    let deployment = cfg.deployment()?;
    let trajectory = cfg.trajectory()?;
    let frames = simulate_measurements(
        &deployment,
        &trajectory,
        snr_db,
        nb_fused_bs,
        &cfg.noise,
        cfg.carrier_hz,
        seed,
    )?;
    let params = cfg.fusion_params(&deployment);
    let ue_height = params.ue_height;

    let mut nr_rows = Vec::with_capacity(frames.len());
    let mut nr_failures = 0;
    for (frame, pose) in frames.iter().zip(&trajectory.samples) {
        match nr_only_position(frame, &deployment.sites, &cfg.noise, ue_height) {
            Ok(p) => nr_rows.push(row(pose, p, Method::NrOnly, nb_fused_bs, snr_db)),
            Err(Error::Estimation(_)) => nr_failures += 1,
            Err(e) => return Err(e),
        }
    }
    let start = nr_rows
        .first()
        .map(|r| Vector2::new(r.est_x, r.est_y))
        .ok_or_else(|| Error::Estimation("no radio-only fix to initialize the filter".into()))?;
    let v0 = trajectory.samples[0].velocity.xy().norm();
    let initial = StateEstimate {
        t: frames[0].t,
        mean: Vector4::new(start.x, start.y, v0, 0.0),
        covariance: Matrix4::from_diagonal(&Vector4::new(
            cfg.initial_position_var,
            cfg.initial_position_var,
            cfg.initial_velocity_var,
            cfg.initial_velocity_var,
        )),
    };
    let (estimates, innovations) = ekf_fuse_with_diagnostics(&frames, initial, &params)?;
    let mut rows: Vec<PositionRow> = estimates
        .iter()
        .zip(&trajectory.samples)
        .map(|(e, pose)| row(pose, e.position(), Method::Fused, nb_fused_bs, snr_db))
        .collect();
    let fused = ErrorCdf::from_samples(rows.iter().map(|r| r.err_m))?;
    let nr_only = ErrorCdf::from_samples(nr_rows.iter().map(|r| r.err_m))?;
    rows.extend(nr_rows);
    Ok(PositioningRun {
        snr_db,
        nb_fused_bs,
        rows,
        fused,
        nr_only,
        nr_failures,
        innovations,
    })
}

fn row(pose: &PoseSample, est: Vector2<f64>, method: Method, nb_fused_bs: usize, snr_db: f64) -> PositionRow {
    PositionRow {
        t: pose.t,
        truth_x: pose.position.x,
        truth_y: pose.position.y,
        est_x: est.x,
        est_y: est.y,
        err_m: (pose.position.xy() - est).norm(),
        method,
        nb_fused_bs,
        snr_db,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn short_cfg() -> PositioningConfig {
        PositioningConfig {
            span_m: 400.0,
            ..Default::default()
        }
    }

    #[test]
    fn range_sigma_scales_with_snr() {
        let n = NoiseModel::default();
        assert_relative_eq!(n.range_sigma(5.0) / n.range_sigma(15.0), 10f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn noiseless_measurements_are_truth() {
        let cfg = short_cfg();
        let d = cfg.deployment().unwrap();
        let tr = cfg.trajectory().unwrap();
        let frames = simulate_measurements(&d, &tr, f64::INFINITY, 2, &NoiseModel::noiseless(), 28e9, 1).unwrap();
        for (f, pose) in frames.iter().zip(&tr.samples).step_by(97) {
            assert_eq!(f.imu_accel, pose.acceleration.xy());
            for m in &f.per_site {
                let o = los_observation(&d.sites[m.site_id], pose, 28e9).unwrap();
                assert_eq!(m.range, o.true_range);
                assert_relative_eq!(m.aoa_az, o.true_aoa.azimuth, epsilon = 1e-15);
                assert_eq!(m.aoa_el, o.true_aoa.elevation);
            }
        }
    }

    #[test]
    fn nearest_two_sites_selected() {
        let cfg = short_cfg();
        let d = cfg.deployment().unwrap();
        let pose = PoseSample {
            t: 0.0,
            position: Vec3::new(100.0, 0.0, 1.5),
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
        };
        let tr = Trajectory {
            samples: vec![pose],
            sample_period: 0.01,
        };
        let f = simulate_measurements(&d, &tr, 5.0, 2, &NoiseModel::default(), 28e9, 3).unwrap();
        let mut ids: Vec<usize> = f[0].per_site.iter().map(|m| m.site_id).collect();
        ids.sort();
        assert_eq!(ids, vec![0, 1]);
        assert!(simulate_measurements(&d, &tr, 5.0, 4, &NoiseModel::default(), 28e9, 3).is_err());
    }

    #[test]
    fn noiseless_fixes_are_exact() {
        let cfg = short_cfg();
        let d = cfg.deployment().unwrap();
        let tr = cfg.trajectory().unwrap();
        let noise = NoiseModel::noiseless();
        let one = simulate_measurements(&d, &tr, f64::INFINITY, 1, &noise, 28e9, 1).unwrap();
        let two = simulate_measurements(&d, &tr, f64::INFINITY, 2, &noise, 28e9, 1).unwrap();
        for ((a, b), pose) in one.iter().zip(&two).zip(&tr.samples).step_by(50) {
            let pa = nr_only_position(a, &d.sites, &NoiseModel::default(), 1.5).unwrap();
            let pb = nr_only_position(b, &d.sites, &NoiseModel::default(), 1.5).unwrap();
            assert!((pa - pose.position.xy()).norm() < 1e-9);
            assert!((pb - pa).norm() < 1e-9);
        }
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let d = short_cfg().deployment().unwrap();
        let p = Vector2::new(37.0, 2.0);
        let (_, jac) = site_model(&d.sites[1], p, 1.5);
        let h = 1e-6;
        for axis in 0..2 {
            let mut dp = Vector2::zeros();
            dp[axis] = h;
            let (plus, _) = site_model(&d.sites[1], p + dp, 1.5);
            let (minus, _) = site_model(&d.sites[1], p - dp, 1.5);
            for j in 0..3 {
                assert_relative_eq!((plus[j] - minus[j]) / (2.0 * h), jac[j][axis], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn nis_dof_counts_rows() {
        let cfg = short_cfg();
        let run = run_positioning(&cfg, 15.0, 2, 9).unwrap();
        assert!(run.innovations.iter().all(|i| i.dof == 6));
        assert_eq!(run.rows.len(), 2 * cfg.trajectory().unwrap().len() - run.nr_failures);
    }

    #[test]
    fn empty_error_cdf_rejected() {
        let tr = short_cfg().trajectory().unwrap();
        assert!(error_cdf(&[], &tr).is_err());
    }
}
