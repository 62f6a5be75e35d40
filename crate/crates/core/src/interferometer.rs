//! Broadband Michelson depth encoding and Fourier-domain depth decoding,
//! plus the closed-form resolution, field-of-view and sensitivity formulas.
//!
//! A reflector at height `z` above the reference mirror modulates the
//! spectrum with `cos(2π·2z/λ)`. Subtracting the two non-interfering DC
//! terms leaves the AC fringe, and an inverse DFT along the spectral axis
//! turns fringe frequency back into depth. The spectral axis is sampled
//! uniformly in λ and decoded as if uniform in k; for the bandwidths used
//! here the resulting chirp is well below one depth bin.

use ndarray::{Array2, Array3, ArrayView, Axis, Dimension, Zip};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::types::{check_range, CubeKind, DepthGrid, ReflectivityVolume, SpectralCube, SpectralGrid, Validate};

/// Default source center wavelength (nm).
pub const DEFAULT_CENTER_NM: f64 = 830.0;
/// Default source FWHM bandwidth (nm).
pub const DEFAULT_FWHM_NM: f64 = 20.0;

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be positive, got {v}")))
    }
}

/// Axial (depth) resolution in µm of a Gaussian source: `0.44·λ0²/Δλ`.
pub fn axial_resolution(center_nm: f64, fwhm_nm: f64) -> Result<f64> {
    positive("center_wavelength_nm", center_nm)?;
    positive("fwhm_bandwidth_nm", fwhm_nm)?;
    Ok(0.44 * center_nm * center_nm / fwhm_nm / 1000.0)
}

/// Axial field of view in mm for spectral sampling interval `δλ`: `λ0²/(4δλ)`.
pub fn axial_fov(center_nm: f64, spacing_nm: f64) -> Result<f64> {
    positive("center_wavelength_nm", center_nm)?;
    positive("channel_spacing_nm", spacing_nm)?;
    Ok(center_nm * center_nm / (4.0 * spacing_nm) / 1.0e6)
}

/// Spectral resolution in nm of a grating spectrometer with pixel pitch
/// `Δp` (µm), grating period `d` (µm) and focal length `f` (mm).
pub fn spectral_resolution(pixel_pitch_um: f64, grating_period_um: f64, focal_length_mm: f64) -> Result<f64> {
    positive("pixel_pitch_um", pixel_pitch_um)?;
    positive("grating_period_um", grating_period_um)?;
    positive("focal_length_mm", focal_length_mm)?;
    // µm·µm/mm = 1e-3 µm = nm
    Ok(pixel_pitch_um * grating_period_um / focal_length_mm)
}

/// Shot-noise-limited sensitivity in dB when one pixel collects the whole spectrum.
pub fn theoretical_sensitivity_db(full_well_electrons: f64) -> Result<f64> {
    positive("full_well_capacity", full_well_electrons)?;
    Ok(10.0 * full_well_electrons.log10())
}

/// Spacing of decoded depth planes in µm for a reconstructed spectral width `Δ'λ`.
pub fn depth_interval(center_nm: f64, sampled_width_nm: f64) -> Result<f64> {
    positive("center_wavelength_nm", center_nm)?;
    positive("sampled_width_nm", sampled_width_nm)?;
    Ok(center_nm * center_nm / (2.0 * sampled_width_nm) / 1000.0)
}

/// Reference-arm intensity: a scalar or a per-pixel field.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceIntensity {
    Uniform(f64),
    Field(Array2<f64>),
}

impl ReferenceIntensity {
    fn at(&self, i: usize, j: usize) -> f64 {
        match self {
            ReferenceIntensity::Uniform(v) => *v,
            ReferenceIntensity::Field(f) => f[[i, j]],
        }
    }
}

/// Source spectrum sampled on the reconstruction grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpectrum {
    grid: SpectralGrid,
    envelope: Vec<f64>,
    fwhm_bandwidth_nm: f64,
    reference: ReferenceIntensity,
}

impl SourceSpectrum {
    /// Gaussian envelope of the given FWHM centred on the grid, peak normalised to 1.
    pub fn gaussian(grid: SpectralGrid, fwhm_bandwidth_nm: f64, reference_intensity: f64) -> Result<Self> {
        positive("fwhm_bandwidth_nm", fwhm_bandwidth_nm)?;
        let c = grid.center_wavelength_nm();
        let a = 4.0 * std::f64::consts::LN_2 / (fwhm_bandwidth_nm * fwhm_bandwidth_nm);
        let envelope = grid.wavelengths_nm().into_iter().map(|l| (-a * (l - c) * (l - c)).exp()).collect();
        Self::from_envelope(grid, envelope, fwhm_bandwidth_nm, ReferenceIntensity::Uniform(reference_intensity))
    }

    /// Flat envelope across the grid; its nominal FWHM is the sampled width.
    pub fn flat(grid: SpectralGrid, reference_intensity: f64) -> Result<Self> {
        let n = grid.num_channels();
        Self::from_envelope(
            grid,
            vec![1.0; n],
            grid.sampled_width_nm(),
            ReferenceIntensity::Uniform(reference_intensity),
        )
    }

    pub fn from_envelope(
        grid: SpectralGrid,
        mut envelope: Vec<f64>,
        fwhm_bandwidth_nm: f64,
        reference: ReferenceIntensity,
    ) -> Result<Self> {
        grid.validate()?;
        positive("fwhm_bandwidth_nm", fwhm_bandwidth_nm)?;
        if envelope.len() != grid.num_channels() {
            return Err(Error::dims("source envelope", grid.num_channels(), envelope.len()));
        }
        check_range("source envelope", envelope.iter(), 0.0, f64::MAX)?;
        let peak = envelope.iter().cloned().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(Error::param("envelope", "must have a positive maximum"));
        }
        envelope.iter_mut().for_each(|e| *e /= peak);
        match &reference {
            ReferenceIntensity::Uniform(v) => check_range("reference intensity", [*v].iter(), 0.0, f64::MAX)?,
            ReferenceIntensity::Field(f) => check_range("reference intensity", f.iter(), 0.0, f64::MAX)?,
        }
        Ok(Self {
            grid,
            envelope,
            fwhm_bandwidth_nm,
            reference,
        })
    }

    /// Replaces the reference intensity, e.g. with an illuminated field.
    pub fn with_reference(mut self, reference: ReferenceIntensity) -> Result<Self> {
        match &reference {
            ReferenceIntensity::Uniform(v) => check_range("reference intensity", [*v].iter(), 0.0, f64::MAX)?,
            ReferenceIntensity::Field(f) => check_range("reference intensity", f.iter(), 0.0, f64::MAX)?,
        }
        self.reference = reference;
        Ok(self)
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn envelope(&self) -> &[f64] {
        &self.envelope
    }

    pub fn fwhm_bandwidth_nm(&self) -> f64 {
        self.fwhm_bandwidth_nm
    }

    pub fn reference(&self) -> &ReferenceIntensity {
        &self.reference
    }
}

/// Output of [`encode_depth`]: the full interferogram and its decomposition.
#[derive(Debug, Clone)]
pub struct EncodedCubes {
    pub total: SpectralCube,
    pub ac: SpectralCube,
    /// Reference-arm-only spectrum (sample arm blocked).
    pub dc_reference: SpectralCube,
    /// Sample-arm-only spectrum (reference arm blocked).
    pub dc_sample: SpectralCube,
}

/// Synthesizes the spectral interferogram of `volume` by direct summation
/// over its depth planes.
///
/// Per lateral pixel and channel `j`:
/// `I = S_j·[I_r + Σ_z I_s(z) + Σ_z 2√(I_r·I_s(z))·cos(2π·2z/λ_j)]`,
/// where `S` is the source envelope. The reference term enters once.
pub fn encode_depth(volume: &ReflectivityVolume, source: &SourceSpectrum) -> Result<EncodedCubes> {
    volume.validate()?;
    let (nx, ny, nz) = volume.dims();
    let grid = *source.grid();
    if let ReferenceIntensity::Field(f) = source.reference() {
        if f.dim() != (nx, ny) {
            return Err(Error::dims("reference intensity field", (nx, ny), f.dim()));
        }
    }
    let depth = volume.depth();
    let fov_um = grid.axial_fov_um();
    let deepest = depth.plane_z_um(nz - 1);
    if deepest >= fov_um {
        return Err(Error::DepthOutOfRange { depth_um: deepest, fov_um });
    }

    let nl = grid.num_channels();
    let lambdas = grid.wavelengths_nm();
    let env = source.envelope();
    // fringe[m][j] = cos(2π·2z_m/λ_j)
    let fringe: Vec<Vec<f64>> = (0..nz)
        .map(|m| {
            let z_nm = depth.plane_z_um(m) * 1000.0;
            lambdas
                .iter()
                .map(|&l| (2.0 * std::f64::consts::PI * 2.0 * z_nm / l).cos())
                .collect()
        })
        .collect();

    let data = volume.data();
    let mut ac = Array3::<f64>::zeros((nx, ny, nl));
    let mut dc_r = Array3::<f64>::zeros((nx, ny, nl));
    let mut dc_s = Array3::<f64>::zeros((nx, ny, nl));

    Zip::indexed(ac.outer_iter_mut())
        .and(dc_r.outer_iter_mut())
        .and(dc_s.outer_iter_mut())
        .into_par_iter()
        .for_each(|(i, mut ac_row, mut r_row, mut s_row)| {
            for j in 0..ny {
                let i_r = source.reference().at(i, j);
                let mut sample_sum = 0.0;
                for m in 0..nz {
                    let i_s = data[[i, j, m]];
                    if i_s == 0.0 {
                        continue;
                    }
                    sample_sum += i_s;
                    let amp = 2.0 * (i_r * i_s).sqrt();
                    for k in 0..nl {
                        ac_row[[j, k]] += amp * fringe[m][k];
                    }
                }
                for k in 0..nl {
                    ac_row[[j, k]] *= env[k];
                    r_row[[j, k]] = i_r * env[k];
                    s_row[[j, k]] = sample_sum * env[k];
                }
            }
        });

    let total = &ac + &dc_r + &dc_s;
    // AC can dip below zero by rounding where it cancels the DC exactly.
    let total = total.mapv(|v| v.max(0.0));
    Ok(EncodedCubes {
        total: SpectralCube::new(total, grid, CubeKind::TotalIntensity)?,
        ac: SpectralCube::new(ac, grid, CubeKind::AcOnly)?,
        dc_reference: SpectralCube::new(dc_r, grid, CubeKind::TotalIntensity)?,
        dc_sample: SpectralCube::new(dc_s, grid, CubeKind::TotalIntensity)?,
    })
}

/// `total − dc_reference − dc_sample`, elementwise.
pub fn subtract_dc<D: Dimension>(
    total: ArrayView<'_, f64, D>,
    dc_reference: ArrayView<'_, f64, D>,
    dc_sample: ArrayView<'_, f64, D>,
) -> Result<ndarray::Array<f64, D>> {
    if total.shape() != dc_reference.shape() {
        return Err(Error::dims("dc reference frame", total.shape(), dc_reference.shape()));
    }
    if total.shape() != dc_sample.shape() {
        return Err(Error::dims("dc sample frame", total.shape(), dc_sample.shape()));
    }
    Ok(&total - &dc_reference - &dc_sample)
}

/// AC cube from a total-intensity cube and its two DC cubes.
pub fn subtract_dc_cube(total: &SpectralCube, dc_reference: &SpectralCube, dc_sample: &SpectralCube) -> Result<SpectralCube> {
    let ac = subtract_dc(total.data(), dc_reference.data(), dc_sample.data())?;
    SpectralCube::new(ac, *total.grid(), CubeKind::AcOnly)
}

/// Decoded depth amplitudes of shape `(nx, ny, nz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthVolume {
    pub data: Array3<f64>,
    pub depth: DepthGrid,
}

impl DepthVolume {
    /// Transverse mean of the volume: one value per depth plane.
    pub fn axial_profile(&self) -> Vec<f64> {
        self.data
            .mean_axis(Axis(0))
            .and_then(|a| a.mean_axis(Axis(0)))
            .map(|a| a.to_vec())
            .unwrap_or_default()
    }

    /// Plane with the largest transverse mean amplitude.
    pub fn peak_plane(&self) -> usize {
        argmax(&self.axial_profile())
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// Magnitude of the normalised inverse DFT of one spectrum, all bins.
pub fn depth_profile(spectrum: &[f64]) -> Vec<f64> {
    let n = spectrum.len();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = spectrum.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    ifft.process(&mut buf);
    buf.iter().map(|c| c.norm() / n as f64).collect()
}

/// Inverse DFT along the spectral axis, keeping the `Nλ/2` non-negative depth bins.
pub fn decode_depth(ac: &SpectralCube) -> Result<DepthVolume> {
    ac.validate()?;
    let (nx, ny, nl) = ac.dims();
    let depth = DepthGrid::decoded_from(ac.grid());
    let nz = depth.num_planes();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(nl);
    let data = ac.data();
    let mut out = Array3::<f64>::zeros((nx, ny, nz));
    let scale = 1.0 / nl as f64;
    out.outer_iter_mut().into_par_iter().enumerate().for_each(|(i, mut row)| {
        let mut buf = vec![Complex64::new(0.0, 0.0); nl];
        let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
        for j in 0..ny {
            for (b, &v) in buf.iter_mut().zip(data.slice(ndarray::s![i, j, ..]).iter()) {
                *b = Complex64::new(v, 0.0);
            }
            ifft.process_with_scratch(&mut buf, &mut scratch);
            for m in 0..nz {
                row[[j, m]] = buf[m].norm() * scale;
            }
        }
    });
    Ok(DepthVolume { data: out, depth })
}
