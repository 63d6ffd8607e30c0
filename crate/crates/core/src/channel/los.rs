use crate::scenario::{PoseSample, Site, Vec3};
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Direction in the global frame: azimuth from +x toward +y, elevation above
/// the horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Angles {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Angles {
    pub fn of(v: &Vec3) -> Self {
        let horizontal = v.x.hypot(v.y);
        Self {
            azimuth: v.y.atan2(v.x),
            elevation: v.z.atan2(horizontal),
        }
    }

    pub fn unit_vector(&self) -> Vec3 {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        Vec3::new(ce * ca, ce * sa, se)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosObservation {
    pub true_range: f64,
    /// Departure direction at the site (site → UE).
    pub true_aod: Angles,
    /// Arrival direction at the UE (UE → site).
    pub true_aoa: Angles,
    /// Positive when the UE approaches the site.
    pub doppler: f64,
}

pub fn los_observation(site: &Site, pose: &PoseSample, carrier_hz: f64) -> Result<LosObservation> {
    let to_site = site.position - pose.position;
    let range = to_site.norm();
    if !(range > 0.0) {
        return Err(Error::Geometry(format!("UE coincides with site {}", site.id)));
    }
    let u = to_site / range;
    Ok(LosObservation {
        true_range: range,
        true_aod: Angles::of(&(-to_site)),
        true_aoa: Angles::of(&to_site),
        doppler: pose.velocity.dot(&u) * carrier_hz / SPEED_OF_LIGHT,
    })
}
