//! DFT beam grid for a uniform planar array.
//!
//! Element `(r, c)` sits at `r` rows up and `c` columns across, indexed
//! `r * cols + c`. A plane wave from local direction `(az, el)` (relative to
//! boresight) produces the per-element phase `c·ψh + r·ψv` with
//! `ψh = 2π d sin(az) cos(el)` and `ψv = 2π d sin(el)`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::scenario::{ArrayGeometry, Site};
use crate::{Error, Result};

use super::Angles;

#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    /// Unit-norm weight vector.
    pub weights: Vec<Complex64>,
    pub horizontal_phase: f64,
    pub vertical_phase: f64,
}

/// Beams indexed row-major in `(azimuth, elevation)`: `i_az * n_el + i_el`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamGrid {
    pub array: ArrayGeometry,
    pub n_az: usize,
    pub n_el: usize,
    pub beams: Vec<Beam>,
}

fn wrap_phase(p: f64) -> f64 {
    let w = (p + PI).rem_euclid(TAU) - PI;
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

fn grid_phase(i: usize, n: usize) -> f64 {
    wrap_phase(TAU * i as f64 / n as f64)
}

fn phase_vector(array: &ArrayGeometry, ph: f64, pv: f64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(array.len());
    for r in 0..array.rows {
        for c in 0..array.cols {
            out.push(Complex64::from_polar(1.0, c as f64 * ph + r as f64 * pv));
        }
    }
    out
}

/// Per-element phases for a plane wave from local direction `(az, el)`.
pub fn steering_vector(array: &ArrayGeometry, az: f64, el: f64) -> Vec<Complex64> {
    let d = array.element_spacing;
    phase_vector(array, TAU * d * az.sin() * el.cos(), TAU * d * el.sin())
}

/// Direction `global` expressed relative to the boresight of `site`.
pub fn local_direction(site: &Site, global: Angles) -> (f64, f64) {
    (
        wrap_phase(global.azimuth - site.boresight_azimuth),
        global.elevation + site.downtilt,
    )
}

pub fn make_beam_grid(array: ArrayGeometry, n_az: usize, n_el: usize) -> Result<BeamGrid> {
    if n_az == 0 || n_el == 0 {
        return Err(Error::config("beam grid needs at least one beam per dimension"));
    }
    let norm = (array.len() as f64).sqrt().recip();
    let mut beams = Vec::with_capacity(n_az * n_el);
    for ia in 0..n_az {
        for ie in 0..n_el {
            let ph = if array.cols > 1 { grid_phase(ia, n_az) } else { 0.0 };
            let pv = if array.rows > 1 { grid_phase(ie, n_el) } else { 0.0 };
            let weights = phase_vector(&array, ph, pv).into_iter().map(|w| w * norm).collect();
            beams.push(Beam {
                weights,
                horizontal_phase: ph,
                vertical_phase: pv,
            });
        }
    }
    Ok(BeamGrid {
        array,
        n_az,
        n_el,
        beams,
    })
}

impl BeamGrid {
    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    /// Power gain `|wᴴ a|²` of beam `idx` toward local direction `(az, el)`.
    pub fn gain(&self, idx: usize, az: f64, el: f64) -> f64 {
        let a = steering_vector(&self.array, az, el);
        self.beams[idx]
            .weights
            .iter()
            .zip(&a)
            .map(|(w, x)| w.conj() * x)
            .sum::<Complex64>()
            .norm_sqr()
    }

    /// Best beam toward `(az, el)` and its gain.
    pub fn best_beam(&self, az: f64, el: f64) -> (usize, f64) {
        (0..self.beams.len())
            .map(|i| (i, self.gain(i, az, el)))
            .fold(
                (0, f64::NEG_INFINITY),
                |best, cur| {
                    if cur.1 > best.1 {
                        cur
                    } else {
                        best
                    }
                },
            )
    }

    /// Angular spacing between adjacent beams at boresight, `(azimuth, elevation)` in rad.
    pub fn quantization_step(&self) -> (f64, f64) {
        let d = self.array.element_spacing;
        (
            grid_step(self.array.cols, self.n_az, d),
            grid_step(self.array.rows, self.n_el, d),
        )
    }
}

/// Boresight spacing of `n_beams` DFT beams over `elements` elements `spacing` apart.
pub fn grid_step(elements: usize, n_beams: usize, spacing: f64) -> f64 {
    if elements <= 1 || n_beams == 0 {
        return PI;
    }
    let s = 1.0 / (n_beams as f64 * spacing);
    if s >= 1.0 {
        PI
    } else {
        s.asin()
    }
}
