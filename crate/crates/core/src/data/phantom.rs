//! Procedural organ-with-tumors volumes.
//!
//! Geometry is drawn in millimetres from one random stream and rasterized at
//! voxel centers, so one seed depicts the same object at any spacing. Intensity
//! noise comes from a second stream and does not perturb the geometry.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::volume::{LabelVolume, Volume};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct PhantomSpec {
    /// `(D, H, W)`.
    pub shape: [usize; 3],
    pub spacing_mm: [f64; 3],
    /// Range of each organ semi-axis, `(z, y, x)`.
    pub organ_radius_mm: [[f64; 2]; 3],
    pub tumor_count: [usize; 2],
    pub tumor_radius_mm: [f64; 2],
    /// Per-case class means are drawn from `N(mean, std)`.
    pub intensity_mean: [f64; 3],
    pub intensity_std: [f64; 3],
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            shape: [32, 64, 64],
            spacing_mm: [5.0, 1.5, 1.5],
            organ_radius_mm: [[45.0, 60.0], [24.0, 32.0], [26.0, 34.0]],
            tumor_count: [1, 3],
            tumor_radius_mm: [6.0, 10.0],
            intensity_mean: [0.0, 1.0, 2.2],
            intensity_std: [0.05, 0.1, 0.1],
            noise_std: 0.25,
            seed: 0,
        }
    }
}

struct Ellipsoid {
    center: [f64; 3],
    radii: [f64; 3],
}

impl Ellipsoid {
    fn norm2(&self, p: [f64; 3]) -> f64 {
        (0..3).map(|i| sq((p[i] - self.center[i]) / self.radii[i])).sum()
    }
}

fn sq(v: f64) -> f64 {
    v * v
}

fn uniform<R: Rng>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..=range[1])
    } else {
        range[0]
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(alloc::format!("phantom: {m}")));
        if self.shape.contains(&0) {
            return bad("shape extents must be >= 1");
        }
        if !self.spacing_mm.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return bad("spacing must be positive");
        }
        let radii_ok = |r: &[f64; 2]| r[0] > 0.0 && r[1] >= r[0] && r[1].is_finite();
        if !self.organ_radius_mm.iter().all(radii_ok) || !radii_ok(&self.tumor_radius_mm) {
            return bad("radius ranges must be positive and ordered");
        }
        if self.tumor_count[1] < self.tumor_count[0] {
            return bad("tumor_count range must be ordered");
        }
        if !(self.noise_std >= 0.0) || !self.intensity_std.iter().all(|s| *s >= 0.0) {
            return bad("standard deviations must be >= 0");
        }
        Ok(())
    }

    pub fn fov_mm(&self) -> [f64; 3] {
        core::array::from_fn(|i| self.shape[i] as f64 * self.spacing_mm[i])
    }
}

struct Geometry {
    organ: Ellipsoid,
    tumors: Vec<([f64; 3], f64)>,
}

fn draw_geometry(spec: &PhantomSpec) -> Result<Geometry> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0);
    let fov = spec.fov_mm();
    let radii: [f64; 3] = core::array::from_fn(|i| uniform(&mut rng, spec.organ_radius_mm[i]));
    if (0..3).any(|i| 2.0 * radii[i] > fov[i]) {
        return Err(Error::OrganDoesNotFit { radii_mm: radii, fov_mm: fov });
    }
    let center = core::array::from_fn(|i| uniform(&mut rng, [radii[i], fov[i] - radii[i]]));
    let organ = Ellipsoid { center, radii };
    let r_min = radii.iter().cloned().fold(f64::INFINITY, f64::min);
    let count = rng.random_range(spec.tumor_count[0]..=spec.tumor_count[1]);
    let mut tumors = Vec::with_capacity(count);
    for _ in 0..count {
        // Capped so each sphere fits inside the organ: a center at normalized
        // radius <= 1 - r/r_min keeps the whole sphere within the ellipsoid.
        let r = uniform(&mut rng, spec.tumor_radius_mm).min(0.5 * r_min);
        let reach = 1.0 - r / r_min;
        let u = loop {
            let u: [f64; 3] = core::array::from_fn(|_| rng.random_range(-1.0..=1.0));
            if u.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                break u;
            }
        };
        let c = core::array::from_fn(|i| center[i] + u[i] * reach * radii[i]);
        tumors.push((c, r));
    }
    Ok(Geometry { organ, tumors })
}

/// Image and labels `{0 background, 1 organ, 2 tumor}`.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Volume, LabelVolume)> {
    spec.validate()?;
    let geo = draw_geometry(spec)?;
    let mut noise = ChaCha8Rng::seed_from_u64(spec.seed);
    noise.set_stream(1);
    let means: [f64; 3] = core::array::from_fn(|k| {
        let z: f64 = StandardNormal.sample(&mut noise);
        spec.intensity_mean[k] + spec.intensity_std[k] * z
    });
    let [d, h, w] = spec.shape;
    let s = spec.spacing_mm;
    let mut labels = Vec::with_capacity(d * h * w);
    let mut image = Vec::with_capacity(d * h * w);
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let p = [(z as f64 + 0.5) * s[0], (y as f64 + 0.5) * s[1], (x as f64 + 0.5) * s[2]];
                let mut class = 0u8;
                if geo.organ.norm2(p) <= 1.0 {
                    class = 1;
                    let in_tumor = geo
                        .tumors
                        .iter()
                        .any(|(c, r)| (0..3).map(|i| sq(p[i] - c[i])).sum::<f64>() <= r * r);
                    if in_tumor {
                        class = 2;
                    }
                }
                let n: f64 = StandardNormal.sample(&mut noise);
                labels.push(class);
                image.push((means[class as usize] + spec.noise_std * n) as f32);
            }
        }
    }
    let vol = Volume::new(Tensor::from_vec(&[1, d, h, w], image)?, s)?;
    Ok((vol, LabelVolume::new(labels, spec.shape, s)?))
}

/// Analytic organ volume in mm³ for `spec`, for rasterization checks.
pub fn organ_volume_mm3(spec: &PhantomSpec) -> Result<f64> {
    let g = draw_geometry(spec)?;
    Ok(4.0 / 3.0 * core::f64::consts::PI * g.organ.radii.iter().product::<f64>())
}
