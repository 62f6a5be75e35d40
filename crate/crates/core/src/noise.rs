//! Camera-side degradations: photon shot noise, finite-pixel
//! discretization, non-uniform illumination and ADC quantization.
//!
//! Randomness is counter-based: pixel `n` of a frame draws from its own
//! ChaCha stream keyed by the frame seed, so results do not depend on how
//! pixels are scheduled across threads.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{check_range, CameraModel, ReflectivityVolume, Validate};

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    /// Photoelectrons per unit of measurement intensity.
    pub photon_scale: f64,
    pub seed: u64,
    /// Lateral gain map in `(0, 1]`, applied to both interferometer arms.
    pub illumination_field: Option<Array2<f64>>,
    pub oversample_factor: usize,
}

impl NoiseConfig {
    pub fn new(photon_scale: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            photon_scale,
            seed,
            illumination_field: None,
            oversample_factor: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Photon scale that maps `full_scale_value` onto the camera full well.
    pub fn full_well_scale(camera: &CameraModel, full_scale_value: f64) -> Result<f64> {
        if !(full_scale_value.is_finite() && full_scale_value > 0.0) {
            return Err(Error::param("full_scale_value", "must be positive"));
        }
        Ok(camera.full_well_capacity / full_scale_value)
    }

    /// A copy whose seed is decorrelated for a different frame.
    pub fn for_frame(&self, tag: u64) -> Self {
        Self {
            seed: derive_seed(self.seed, tag),
            ..self.clone()
        }
    }
}

impl Validate for NoiseConfig {
    fn validate(&self) -> Result<()> {
        if !(self.photon_scale.is_finite() && self.photon_scale > 0.0) {
            return Err(Error::param("photon_scale", "must be positive"));
        }
        if self.oversample_factor == 0 {
            return Err(Error::param("oversample_factor", "must be at least 1"));
        }
        if let Some(g) = &self.illumination_field {
            check_gain(g.view())?;
        }
        Ok(())
    }
}

/// SplitMix64 finalizer over `seed ^ tag`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = (seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_gain(g: ArrayView2<'_, f64>) -> Result<()> {
    check_range("illumination field", g.iter(), f64::MIN_POSITIVE, 1.0)
}

/// Replaces each pixel by `Poisson(photon_scale·y)/photon_scale`.
pub fn apply_shot_noise(y: ArrayView2<'_, f64>, cfg: &NoiseConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    check_range("shot-noise input", y.iter(), 0.0, f64::MAX)?;
    let base = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (_, ncols) = y.dim();
    let scale = cfg.photon_scale;
    let mut out = Array2::zeros(y.dim());
    out.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut row)| {
        for (j, v) in row.iter_mut().enumerate() {
            let mean = y[[i, j]] * scale;
            *v = if mean > 0.0 {
                let mut rng = base.clone();
                rng.set_stream((i * ncols + j) as u64);
                Poisson::new(mean).expect("positive finite mean").sample(&mut rng) / scale
            } else {
                0.0
            };
        }
    });
    Ok(out)
}

/// Block-mean pooling of an oversampled frame down to camera pixels.
pub fn apply_discretization(fine: ArrayView2<'_, f64>, factor: usize) -> Result<Array2<f64>> {
    if factor == 0 {
        return Err(Error::param("oversample_factor", "must be at least 1"));
    }
    let (h, w) = fine.dim();
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::dims("oversampled frame", format!("multiples of {factor}"), (h, w)));
    }
    if factor == 1 {
        return Ok(fine.to_owned());
    }
    let norm = 1.0 / (factor * factor) as f64;
    Ok(Array2::from_shape_fn((h / factor, w / factor), |(i, j)| {
        let block = fine.slice(ndarray::s![i * factor..(i + 1) * factor, j * factor..(j + 1) * factor]);
        block.sum() * norm
    }))
}

/// Multiplies every spectral channel of a cube by the lateral gain map.
///
/// Scaling both arms by `g` scales the DC terms and the AC term
/// `2√(g·I_r·g·I_s)` alike, so this equals illuminating the inputs.
pub fn apply_illumination_cube(cube: ArrayView3<'_, f64>, gain: ArrayView2<'_, f64>) -> Result<Array3<f64>> {
    check_gain(gain)?;
    let (nx, ny, _) = cube.dim();
    if gain.dim() != (nx, ny) {
        return Err(Error::dims("illumination field", (nx, ny), gain.dim()));
    }
    let mut out = cube.to_owned();
    Zip::from(out.lanes_mut(Axis(2))).and(&gain).for_each(|mut lane, &g| lane *= g);
    Ok(out)
}

/// Elementwise gain on a 2D frame.
pub fn apply_illumination_image(image: ArrayView2<'_, f64>, gain: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_gain(gain)?;
    if gain.dim() != image.dim() {
        return Err(Error::dims("illumination field", image.dim(), gain.dim()));
    }
    Ok(&image * &gain)
}

/// Sample-arm illumination applied to the reflectivity volume.
pub fn apply_illumination_volume(volume: &ReflectivityVolume, gain: ArrayView2<'_, f64>) -> Result<ReflectivityVolume> {
    let data = apply_illumination_cube(volume.data(), gain)?;
    ReflectivityVolume::new(data, volume.pixel_pitch_um(), *volume.depth())
}

/// Radially symmetric Gaussian vignette, 1 at the centre and `edge_gain`
/// at distance `radius` (in pixels) from it.
pub fn gaussian_vignette(nx: usize, ny: usize, radius: f64, edge_gain: f64) -> Result<Array2<f64>> {
    if !(edge_gain > 0.0 && edge_gain <= 1.0) || !(radius > 0.0) {
        return Err(Error::param("vignette", "edge gain in (0, 1] and positive radius required"));
    }
    let (cx, cy) = ((nx as f64 - 1.0) / 2.0, (ny as f64 - 1.0) / 2.0);
    let a = -edge_gain.ln() / (radius * radius);
    Ok(Array2::from_shape_fn((nx, ny), |(i, j)| {
        let r2 = (i as f64 - cx).powi(2) + (j as f64 - cy).powi(2);
        (-a * r2).exp().max(f64::MIN_POSITIVE)
    }))
}

/// Clips to `[0, FWC]` and rounds to the ADC step `FWC / 2^bits`.
/// Input and output are in electrons.
pub fn quantize(y: ArrayView2<'_, f64>, camera: &CameraModel) -> Result<Array2<f64>> {
    camera.validate()?;
    let fwc = camera.full_well_capacity;
    let lsb = fwc / f64::from(1u32 << camera.bit_depth);
    Ok(y.mapv(|v| {
        let clipped = v.clamp(0.0, fwc);
        ((clipped / lsb).round() * lsb).min(fwc)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn zero_image_has_no_shot_noise() {
        let cfg = NoiseConfig::new(100.0, 1).unwrap();
        let y = apply_shot_noise(Array2::zeros((4, 4)).view(), &cfg).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shot_noise_is_seeded() {
        let img = Array2::from_elem((8, 9), 3.0);
        let a = apply_shot_noise(img.view(), &NoiseConfig::new(10.0, 7).unwrap()).unwrap();
        let b = apply_shot_noise(img.view(), &NoiseConfig::new(10.0, 7).unwrap()).unwrap();
        let c = apply_shot_noise(img.view(), &NoiseConfig::new(10.0, 8).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn negative_pixels_rejected() {
        let img = Array2::from_elem((1, 2), -1.0);
        assert!(apply_shot_noise(img.view(), &NoiseConfig::new(10.0, 0).unwrap()).is_err());
    }

    #[test]
    fn discretization_block_means() {
        let fine = Array2::from_shape_fn((4, 6), |(i, j)| (i * 6 + j) as f64);
        let coarse = apply_discretization(fine.view(), 2).unwrap();
        // hand-computed means of the 2x2 blocks of the ramp
        assert_eq!(coarse, ndarray::array![[3.5, 5.5, 7.5], [15.5, 17.5, 19.5]]);
        assert_eq!(apply_discretization(fine.view(), 1).unwrap(), fine);
        assert!(apply_discretization(fine.view(), 4).is_err());
        let flat = Array2::from_elem((6, 6), 2.5);
        assert!(apply_discretization(flat.view(), 3).unwrap().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn unit_gain_is_identity_and_half_gain_halves() {
        let cube = Array3::from_shape_fn((2, 3, 4), |(i, j, k)| (i + j + k) as f64 - 2.0);
        let ones = Array2::ones((2, 3));
        assert_eq!(apply_illumination_cube(cube.view(), ones.view()).unwrap(), cube);
        let half = Array2::from_elem((2, 3), 0.5);
        assert_eq!(apply_illumination_cube(cube.view(), half.view()).unwrap(), &cube * 0.5);
        let zero = Array2::zeros((2, 3));
        assert!(apply_illumination_cube(cube.view(), zero.view()).is_err());
        assert!(apply_illumination_cube(cube.view(), Array2::ones((3, 3)).view()).is_err());
    }

    #[test]
    fn quantize_saturates_and_bounds_error() {
        let cam = CameraModel::default();
        let fwc = cam.full_well_capacity;
        let y = ndarray::array![[0.0, fwc * 1.5, -3.0]];
        assert_eq!(quantize(y.view(), &cam).unwrap(), ndarray::array![[0.0, fwc, 0.0]]);
        let ramp = Array2::from_shape_fn((1, 1000), |(_, j)| fwc * (0.25 + 0.5 * j as f64 / 999.0) + 0.123);
        let q = quantize(ramp.view(), &cam).unwrap();
        let worst = (&q - &ramp).iter().fold(0.0f64, |m, &d| m.max(d.abs()));
        assert!(worst <= fwc / 131_072.0, "{worst}");
    }

    #[test]
    fn vignette_range() {
        let g = gaussian_vignette(9, 9, 4.0, 0.5).unwrap();
        assert_eq!(g[[4, 4]], 1.0);
        assert!((g[[4, 0]] - 0.5).abs() < 1e-12);
        assert!(g.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(5, 3), derive_seed(5, 3));
    }
}
