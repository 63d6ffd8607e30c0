//! Keyed random streams.
//!
//! Every random quantity in the crate is drawn from a stream identified by
//! `(master seed, module tag, entity id, epoch)`. The tuple is packed directly
//! into a ChaCha8 key, so a stream is a pure function of its key: workers can
//! evaluate entities in any order, on any thread, and obtain identical draws.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Which part of the simulation a stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Tag {
    RangeNoise = 1,
    AngleNoise = 2,
    ImuNoise = 3,
    TapGains = 4,
    TapAngles = 5,
    BlockErrors = 6,
    Shadowing = 7,
    Arrivals = 8,
    SyntheticTrace = 9,
}

/// Stream key; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub tag: Tag,
    pub entity: u64,
    pub epoch: u64,
}

impl StreamKey {
    pub fn new(seed: u64, tag: Tag, entity: u64, epoch: u64) -> Self {
        Self {
            seed,
            tag,
            entity,
            epoch,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(self.tag as u64).to_le_bytes());
        key[16..24].copy_from_slice(&self.entity.to_le_bytes());
        key[24..32].copy_from_slice(&self.epoch.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}

/// Shorthand for `StreamKey::new(..).rng()`.
pub fn stream(seed: u64, tag: Tag, entity: u64, epoch: u64) -> ChaCha8Rng {
    StreamKey::new(seed, tag, entity, epoch).rng()
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Circularly-symmetric complex normal with unit variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Uniform draw in `[0, 1)`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_stream() {
        let a: Vec<f64> = (0..8).map(|_| uniform(&mut stream(7, Tag::ImuNoise, 3, 9))).collect();
        let mut r = stream(7, Tag::ImuNoise, 3, 9);
        let first = uniform(&mut r);
        assert!(a.iter().all(|&x| x == first));
    }

    #[test]
    fn keys_are_independent() {
        let base = uniform(&mut stream(1, Tag::TapGains, 0, 0));
        for (tag, ent, ep) in [(Tag::TapAngles, 0, 0), (Tag::TapGains, 1, 0), (Tag::TapGains, 0, 1)] {
            assert_ne!(base, uniform(&mut stream(1, tag, ent, ep)));
        }
        assert_ne!(base, uniform(&mut stream(2, Tag::TapGains, 0, 0)));
    }

    #[test]
    fn complex_normal_has_unit_power() {
        let mut r = stream(11, Tag::TapGains, 0, 0);
        let n = 20_000;
        let p: f64 = (0..n).map(|_| complex_normal(&mut r).norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - 1.0).abs() < 0.03, "power {p}");
    }
}
