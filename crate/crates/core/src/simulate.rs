//! End-to-end forward chain: reflectivity volume → interferogram → coded,
//! sheared and summed camera frames → camera noise → DC-subtracted AC
//! measurement ready for reconstruction.
//!
//! Frames are produced in electrons. The AC measurement handed to the solver
//! is converted back to intensity units by dividing by the photon scale, so
//! it is directly comparable with `Φ` applied to the true AC cube.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interferometer::{encode_depth, subtract_dc, EncodedCubes, SourceSpectrum};
use crate::noise::{apply_discretization, apply_illumination_cube, apply_shot_noise, quantize, NoiseConfig};
use crate::sensing::SensingOperator;
use crate::types::{CameraModel, CodedAperture, CubeKind, Measurement, ReflectivityVolume, SpectralCube};

/// Random binary aperture with the given open fraction.
pub fn random_aperture(nx: usize, ny: usize, open_fraction: f64, seed: u64, dispersion_step: isize) -> Result<CodedAperture> {
    if !(0.0..=1.0).contains(&open_fraction) {
        return Err(Error::param("open_fraction", "must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pattern = Array2::from_shape_simple_fn((nx, ny), || if rng.random::<f64>() < open_fraction { 1.0 } else { 0.0 });
    CodedAperture::new(pattern, dispersion_step)
}

/// Each element of `pattern` becomes an `f × f` block.
pub fn upsample_pattern(pattern: ArrayView2<'_, f64>, f: usize) -> Array2<f64> {
    let (h, w) = pattern.dim();
    Array2::from_shape_fn((h * f, w * f), |(i, j)| pattern[[i / f, j / f]])
}

fn block_mean_cube(fine: ArrayView3<'_, f64>, f: usize) -> Result<Array3<f64>> {
    let (h, w, nl) = fine.dim();
    if h % f != 0 || w % f != 0 {
        return Err(Error::dims("oversampled cube", format!("multiples of {f}"), (h, w)));
    }
    let norm = 1.0 / (f * f) as f64;
    Ok(Array3::from_shape_fn((h / f, w / f, nl), |(i, j, k)| {
        fine.slice(ndarray::s![i * f..(i + 1) * f, j * f..(j + 1) * f, k]).sum() * norm
    }))
}

/// How many electrons one unit of measurement intensity produces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotonBudget {
    /// The brightest pixel of the interferogram frame fills the full well.
    FullWell,
    Scale(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardConfig {
    pub camera: CameraModel,
    pub photon_budget: PhotonBudget,
    pub shot_noise: bool,
    pub quantize: bool,
    pub seed: u64,
    /// Lateral gain on both arms at camera resolution.
    pub illumination_field: Option<Array2<f64>>,
}

impl ForwardConfig {
    /// Noiseless, unquantized frames at a full-well photon budget.
    pub fn noiseless(camera: CameraModel) -> Self {
        Self {
            camera,
            photon_budget: PhotonBudget::FullWell,
            shot_noise: false,
            quantize: false,
            seed: 0,
            illumination_field: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    /// Interferogram cubes at camera resolution.
    pub cubes: EncodedCubes,
    pub aperture: CodedAperture,
    pub operator: SensingOperator,
    /// Raw frames in electrons: interferogram, reference-only, sample-only.
    pub measurement: Measurement,
    /// `(frame − DC_r − DC_s) / photon_scale`.
    pub y_ac: Array2<f64>,
    /// True AC cube translated into the camera frame.
    pub ac_sheared: Array3<f64>,
    pub photon_scale: f64,
}

/// Runs the forward chain.
///
/// With `camera.oversample_factor = f > 1`, `volume` and the illumination
/// field are sampled `f` times finer than the camera, the aperture is given
/// at camera resolution, and every frame is block-averaged down to camera
/// pixels, so sub-pixel object detail appears as discretization error.
pub fn simulate(volume: &ReflectivityVolume, source: &SourceSpectrum, aperture: &CodedAperture, cfg: &ForwardConfig) -> Result<Simulation> {
    let f = cfg.camera.oversample_factor.max(1);
    let nl = source.grid().num_channels();
    let (nx, ny) = aperture.dims();
    let (vx, vy, _) = volume.dims();
    if (vx, vy) != (nx * f, ny * f) {
        return Err(Error::dims("volume lateral dims", (nx * f, ny * f), (vx, vy)));
    }

    let mut fine = encode_depth(volume, source)?;
    if let Some(g) = &cfg.illumination_field {
        let g_fine = upsample_pattern(g.view(), f);
        for cube in [&mut fine.total, &mut fine.ac, &mut fine.dc_reference, &mut fine.dc_sample] {
            let lit = apply_illumination_cube(cube.data(), g_fine.view())?;
            *cube = SpectralCube::new(lit, *cube.grid(), cube.kind())?;
        }
    }

    let coarse_op = SensingOperator::new(aperture.clone(), nl)?;
    let fine_op = if f == 1 {
        coarse_op.clone()
    } else {
        let fine_aperture = CodedAperture::new(upsample_pattern(aperture.pattern(), f), aperture.dispersion_step() * f as isize)?;
        SensingOperator::new(fine_aperture, nl)?
    };
    let frame = |cube: &SpectralCube| -> Result<Array2<f64>> { apply_discretization(fine_op.forward(cube.data())?.view(), f) };
    let y_total = frame(&fine.total)?;
    let y_ref = frame(&fine.dc_reference)?;
    let y_smp = frame(&fine.dc_sample)?;

    let photon_scale = match cfg.photon_budget {
        PhotonBudget::Scale(s) => s,
        PhotonBudget::FullWell => {
            let peak = y_total.iter().fold(0.0f64, |m, &v| m.max(v));
            NoiseConfig::full_well_scale(&cfg.camera, peak)?
        }
    };
    let noise = NoiseConfig::new(photon_scale, cfg.seed)?;
    let to_electrons = |y: &Array2<f64>, tag: u64| -> Result<Array2<f64>> {
        let y = if cfg.shot_noise {
            apply_shot_noise(y.view(), &noise.for_frame(tag))?
        } else {
            y.clone()
        };
        let e = y * photon_scale;
        if cfg.quantize {
            quantize(e.view(), &cfg.camera)
        } else {
            Ok(e)
        }
    };
    let e_total = to_electrons(&y_total, 0)?;
    let e_ref = to_electrons(&y_ref, 1)?;
    let e_smp = to_electrons(&y_smp, 2)?;
    let y_ac = subtract_dc(e_total.view(), e_ref.view(), e_smp.view())? / photon_scale;
    let measurement = Measurement::with_dc_frames(e_total, e_ref, e_smp, cfg.camera)?;

    let cubes = if f == 1 {
        fine
    } else {
        let grid = *source.grid();
        let down = |c: &SpectralCube, kind| -> Result<SpectralCube> { SpectralCube::new(block_mean_cube(c.data(), f)?, grid, kind) };
        EncodedCubes {
            total: down(&fine.total, CubeKind::TotalIntensity)?,
            ac: down(&fine.ac, CubeKind::AcOnly)?,
            dc_reference: down(&fine.dc_reference, CubeKind::TotalIntensity)?,
            dc_sample: down(&fine.dc_sample, CubeKind::TotalIntensity)?,
        }
    };
    let ac_sheared = coarse_op.shear(cubes.ac.data())?;
    Ok(Simulation {
        cubes,
        aperture: aperture.clone(),
        operator: coarse_op,
        measurement,
        y_ac,
        ac_sheared,
        photon_scale,
    })
}
