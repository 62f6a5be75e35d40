//! Shared domain types: spectral and depth grids, reflectivity volumes,
//! spectral datacubes, coded apertures, measurements and the camera model.
//!
//! All arrays are stored row-major (C order): for a cube of shape
//! `(nx, ny, nl)` the spectral index is fastest, then `y`, then `x`.
//! Images of shape `(nx, width)` have `y` (the dispersion axis) fastest.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rejects NaN and infinities, naming the first offending flat index.
pub(crate) fn check_finite<'a>(what: &str, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    match values.into_iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            what: what.to_string(),
            index,
        }),
        None => Ok(()),
    }
}

pub(crate) fn check_range<'a>(what: &str, values: impl IntoIterator<Item = &'a f64>, lo: f64, hi: f64) -> Result<()> {
    for (i, &v) in values.into_iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: what.to_string(),
                index: i,
            });
        }
        if v < lo || v > hi {
            return Err(Error::OutOfRange {
                what: what.to_string(),
                detail: format!("value {v} at index {i} not in [{lo}, {hi}]"),
            });
        }
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be positive and finite, got {v}")))
    }
}

/// Types whose invariants can be re-checked after construction or loading.
pub trait Validate {
    fn validate(&self) -> Result<()>;
}

/// Uniform wavelength sampling of the spectral axis.
///
/// Channel `j` sits at `center + (j - (n-1)/2) * spacing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    center_wavelength_nm: f64,
    channel_spacing_nm: f64,
    num_channels: usize,
}

impl SpectralGrid {
    pub fn new(center_wavelength_nm: f64, channel_spacing_nm: f64, num_channels: usize) -> Result<Self> {
        let grid = Self {
            center_wavelength_nm,
            channel_spacing_nm,
            num_channels,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn center_wavelength_nm(&self) -> f64 {
        self.center_wavelength_nm
    }

    pub fn channel_spacing_nm(&self) -> f64 {
        self.channel_spacing_nm
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn wavelength_nm(&self, j: usize) -> f64 {
        let offset = j as f64 - (self.num_channels as f64 - 1.0) / 2.0;
        self.center_wavelength_nm + offset * self.channel_spacing_nm
    }

    pub fn wavelengths_nm(&self) -> Vec<f64> {
        (0..self.num_channels).map(|j| self.wavelength_nm(j)).collect()
    }

    /// Wavenumbers `2π/λ` in rad/nm.
    pub fn wavenumbers(&self) -> Vec<f64> {
        self.wavelengths_nm().into_iter().map(|l| 2.0 * std::f64::consts::PI / l).collect()
    }

    /// Width of the sampled spectrum, `Nλ·δλ`.
    pub fn sampled_width_nm(&self) -> f64 {
        self.num_channels as f64 * self.channel_spacing_nm
    }

    /// Spacing of decoded depth planes in µm.
    pub fn depth_interval_um(&self) -> f64 {
        crate::interferometer::depth_interval(self.center_wavelength_nm, self.sampled_width_nm())
            .expect("validated grid has positive parameters")
    }

    /// Maximum unambiguous depth in µm.
    pub fn axial_fov_um(&self) -> f64 {
        crate::interferometer::axial_fov(self.center_wavelength_nm, self.channel_spacing_nm)
            .expect("validated grid has positive parameters")
            * 1000.0
    }

    /// Same spacing and center, different channel count.
    pub fn with_channels(&self, num_channels: usize) -> Result<Self> {
        Self::new(self.center_wavelength_nm, self.channel_spacing_nm, num_channels)
    }
}

impl Validate for SpectralGrid {
    fn validate(&self) -> Result<()> {
        if self.num_channels == 0 {
            return Err(Error::param("num_channels", "must be at least 1"));
        }
        check_positive("center_wavelength_nm", self.center_wavelength_nm)?;
        check_positive("channel_spacing_nm", self.channel_spacing_nm)?;
        if self.wavelength_nm(0) <= 0.0 {
            return Err(Error::param(
                "channel_spacing_nm",
                "shortest wavelength of the grid is not positive",
            ));
        }
        Ok(())
    }
}

/// Axial sampling of a reflectivity volume. Plane `m` sits at
/// `origin + m * spacing` above the reference-mirror plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthGrid {
    num_planes: usize,
    plane_spacing_um: f64,
    origin_um: f64,
}

impl DepthGrid {
    pub fn new(num_planes: usize, plane_spacing_um: f64, origin_um: f64) -> Result<Self> {
        let grid = Self {
            num_planes,
            plane_spacing_um,
            origin_um,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// The grid decoded from `spectral`: `Nλ/2` planes at `δ'z` spacing from the mirror.
    pub fn decoded_from(spectral: &SpectralGrid) -> Self {
        Self {
            num_planes: (spectral.num_channels() / 2).max(1),
            plane_spacing_um: spectral.depth_interval_um(),
            origin_um: 0.0,
        }
    }

    pub fn num_planes(&self) -> usize {
        self.num_planes
    }

    pub fn plane_spacing_um(&self) -> f64 {
        self.plane_spacing_um
    }

    pub fn origin_um(&self) -> f64 {
        self.origin_um
    }

    pub fn plane_z_um(&self, m: usize) -> f64 {
        self.origin_um + m as f64 * self.plane_spacing_um
    }

    /// Nearest plane index to depth `z_um`, clamped to the grid.
    pub fn nearest_plane(&self, z_um: f64) -> usize {
        let m = ((z_um - self.origin_um) / self.plane_spacing_um).round();
        (m.max(0.0) as usize).min(self.num_planes.saturating_sub(1))
    }
}

impl Validate for DepthGrid {
    fn validate(&self) -> Result<()> {
        if self.num_planes == 0 {
            return Err(Error::param("num_planes", "must be at least 1"));
        }
        check_positive("plane_spacing_um", self.plane_spacing_um)?;
        if !(self.origin_um.is_finite() && self.origin_um >= 0.0) {
            return Err(Error::param("origin_um", "planes must lie at z >= 0"));
        }
        Ok(())
    }
}

/// Object reflectivity sampled on an `(x, y, z)` grid, entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectivityVolume {
    data: Array3<f64>,
    pixel_pitch_um: f64,
    depth: DepthGrid,
}

impl ReflectivityVolume {
    pub fn new(data: Array3<f64>, pixel_pitch_um: f64, depth: DepthGrid) -> Result<Self> {
        let v = Self {
            data,
            pixel_pitch_um,
            depth,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn zeros(nx: usize, ny: usize, pixel_pitch_um: f64, depth: DepthGrid) -> Result<Self> {
        Self::new(Array3::zeros((nx, ny, depth.num_planes())), pixel_pitch_um, depth)
    }

    pub fn data(&self) -> ArrayView3<'_, f64> {
        self.data.view()
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn pixel_pitch_um(&self) -> f64 {
        self.pixel_pitch_um
    }

    pub fn depth(&self) -> &DepthGrid {
        &self.depth
    }
}

impl Validate for ReflectivityVolume {
    fn validate(&self) -> Result<()> {
        self.depth.validate()?;
        check_positive("pixel_pitch_um", self.pixel_pitch_um)?;
        let (_, _, nz) = self.data.dim();
        if nz != self.depth.num_planes() {
            return Err(Error::dims("reflectivity volume depth axis", self.depth.num_planes(), nz));
        }
        check_range("reflectivity volume", self.data.iter(), 0.0, 1.0)
    }
}

/// Whether a cube carries the full interferogram or only its AC part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CubeKind {
    TotalIntensity,
    AcOnly,
}

/// Spatial-spectral datacube of shape `(nx, ny, nl)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    data: Array3<f64>,
    grid: SpectralGrid,
    kind: CubeKind,
}

impl SpectralCube {
    pub fn new(data: Array3<f64>, grid: SpectralGrid, kind: CubeKind) -> Result<Self> {
        let c = Self { data, grid, kind };
        c.validate()?;
        Ok(c)
    }

    pub fn data(&self) -> ArrayView3<'_, f64> {
        self.data.view()
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn kind(&self) -> CubeKind {
        self.kind
    }
}

impl Validate for SpectralCube {
    fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let (_, _, nl) = self.data.dim();
        if nl != self.grid.num_channels() {
            return Err(Error::dims("spectral cube channel axis", self.grid.num_channels(), nl));
        }
        match self.kind {
            CubeKind::AcOnly => check_finite("spectral cube", self.data.iter()),
            CubeKind::TotalIntensity => check_range("spectral cube", self.data.iter(), 0.0, f64::MAX),
        }
    }
}

/// Camera column offset of channel `k` of `nl` under a dispersion step.
/// The channel with the smallest offset lands at column 0.
pub fn dispersion_offset(dispersion_step: isize, k: usize, nl: usize) -> usize {
    if dispersion_step >= 0 {
        dispersion_step as usize * k
    } else {
        dispersion_step.unsigned_abs() * (nl - 1 - k)
    }
}

/// Object-plane coded aperture `M*` of shape `(nx, ny)` with entries in `[0, 1]`,
/// and the dispersion step in camera pixels per spectral channel.
///
/// Channel `k` reaches the camera translated by `offset(k)` columns, so its
/// camera-frame code `M_k(i, j') = M*(i, j' - offset(k))` is a pure column
/// translation of the same pattern. Positive steps move longer wavelengths
/// toward larger column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedAperture {
    pattern: Array2<f64>,
    dispersion_step: isize,
}

impl CodedAperture {
    pub fn new(pattern: Array2<f64>, dispersion_step: isize) -> Result<Self> {
        let a = Self { pattern, dispersion_step };
        a.validate()?;
        Ok(a)
    }

    pub fn pattern(&self) -> ArrayView2<'_, f64> {
        self.pattern.view()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.pattern.dim()
    }

    pub fn dispersion_step(&self) -> isize {
        self.dispersion_step
    }

    pub fn is_binary(&self) -> bool {
        self.pattern.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Camera-frame width needed to hold all `nl` translated channels.
    pub fn measurement_width(&self, nl: usize) -> usize {
        self.pattern.ncols() + self.dispersion_step.unsigned_abs() * nl.saturating_sub(1)
    }

    /// Column offset of channel `k` on the camera.
    pub fn channel_offset(&self, k: usize, nl: usize) -> usize {
        dispersion_offset(self.dispersion_step, k, nl)
    }

    /// Camera-frame code of channel `k` (zero outside the channel's footprint).
    pub fn shifted(&self, k: usize, nl: usize) -> Array2<f64> {
        let (nx, ny) = self.dims();
        let off = self.channel_offset(k, nl);
        let mut out = Array2::zeros((nx, self.measurement_width(nl)));
        out.slice_mut(ndarray::s![.., off..off + ny]).assign(&self.pattern);
        out
    }

    /// The camera image of the aperture under monochromatic light at channel
    /// `k_ref`, as a calibration capture would record it.
    pub fn calibration_frame(&self, k_ref: usize, nl: usize) -> Array2<f64> {
        self.shifted(k_ref, nl)
    }

    /// Recovers the aperture from a calibration frame captured at channel
    /// `k_ref`; every other channel is modelled as a translation of it.
    pub fn from_calibration_frame(frame: ArrayView2<'_, f64>, k_ref: usize, nl: usize, ny: usize, dispersion_step: isize) -> Result<Self> {
        let width = ny + dispersion_step.unsigned_abs() * nl.saturating_sub(1);
        if frame.ncols() != width {
            return Err(Error::dims("calibration frame width", width, frame.ncols()));
        }
        if k_ref >= nl {
            return Err(Error::param("k_ref", format!("channel {k_ref} outside [0, {nl})")));
        }
        let probe = Self {
            pattern: Array2::zeros((frame.nrows(), ny)),
            dispersion_step,
        };
        let off = probe.channel_offset(k_ref, nl);
        Self::new(frame.slice(ndarray::s![.., off..off + ny]).to_owned(), dispersion_step)
    }
}

impl Validate for CodedAperture {
    fn validate(&self) -> Result<()> {
        if self.dispersion_step == 0 {
            return Err(Error::param("dispersion_step", "must be non-zero"));
        }
        let (nx, ny) = self.pattern.dim();
        if nx == 0 || ny == 0 {
            return Err(Error::dims("coded aperture", "non-empty pattern", (nx, ny)));
        }
        check_range("coded aperture", self.pattern.iter(), 0.0, 1.0)
    }
}

/// Sensor description used for saturation, quantization and shot noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub full_well_capacity: f64,
    pub bit_depth: u32,
    pub pixel_pitch_um: f64,
    pub oversample_factor: usize,
}

impl Default for CameraModel {
    /// 30 000 e⁻ full well, 16 bit, 6.5 µm pixels.
    fn default() -> Self {
        Self {
            full_well_capacity: 30_000.0,
            bit_depth: 16,
            pixel_pitch_um: 6.5,
            oversample_factor: 1,
        }
    }
}

impl Validate for CameraModel {
    fn validate(&self) -> Result<()> {
        check_positive("full_well_capacity", self.full_well_capacity)?;
        check_positive("pixel_pitch_um", self.pixel_pitch_um)?;
        if !(8..=16).contains(&self.bit_depth) {
            return Err(Error::param("bit_depth", format!("{} not in 8..=16", self.bit_depth)));
        }
        if self.oversample_factor == 0 {
            return Err(Error::param("oversample_factor", "must be at least 1"));
        }
        Ok(())
    }
}

/// A compressed camera frame of shape `(nx, ny + |step|·(nl-1))`, with the
/// optional DC frames captured by blocking one interferometer arm.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    image: Array2<f64>,
    dc_reference: Option<Array2<f64>>,
    dc_sample: Option<Array2<f64>>,
    camera: CameraModel,
}

impl Measurement {
    pub fn new(image: Array2<f64>, camera: CameraModel) -> Result<Self> {
        let m = Self {
            image,
            dc_reference: None,
            dc_sample: None,
            camera,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_dc_frames(image: Array2<f64>, dc_reference: Array2<f64>, dc_sample: Array2<f64>, camera: CameraModel) -> Result<Self> {
        let m = Self {
            image,
            dc_reference: Some(dc_reference),
            dc_sample: Some(dc_sample),
            camera,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn image(&self) -> ArrayView2<'_, f64> {
        self.image.view()
    }

    pub fn into_image(self) -> Array2<f64> {
        self.image
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dim()
    }

    pub fn dc_reference(&self) -> Option<ArrayView2<'_, f64>> {
        self.dc_reference.as_ref().map(|a| a.view())
    }

    pub fn dc_sample(&self) -> Option<ArrayView2<'_, f64>> {
        self.dc_sample.as_ref().map(|a| a.view())
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }
}

impl Validate for Measurement {
    fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        check_finite("measurement", self.image.iter())?;
        for (name, frame) in [("dc_reference", &self.dc_reference), ("dc_sample", &self.dc_sample)] {
            if let Some(f) = frame {
                if f.dim() != self.image.dim() {
                    return Err(Error::dims(name, self.image.dim(), f.dim()));
                }
                check_finite(name, f.iter())?;
            }
        }
        Ok(())
    }
}

/// Checks that a raw camera frame is nonnegative and within the full well.
pub fn validate_raw_frame(frame: ArrayView2<'_, f64>, camera: &CameraModel) -> Result<()> {
    check_range("raw camera frame", frame.iter(), 0.0, camera.full_well_capacity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn depth() -> DepthGrid {
        DepthGrid::new(4, 8.0, 0.0).unwrap()
    }

    #[test]
    fn zero_volume_is_valid() {
        let v = ReflectivityVolume::zeros(3, 3, 6.5, depth()).unwrap();
        assert!(v.validate().is_ok());
    }

    #[test]
    fn mask_entry_above_one_is_out_of_range() {
        let err = CodedAperture::new(array![[0.0, 1.5], [1.0, 0.0]], 1).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { .. }), "{err}");
    }

    #[test]
    fn nan_in_cube_is_non_finite() {
        let grid = SpectralGrid::new(830.0, 0.1, 2).unwrap();
        let mut data = Array3::zeros((2, 2, 2));
        data[[1, 0, 1]] = f64::NAN;
        let err = SpectralCube::new(data, grid, CubeKind::AcOnly).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 5, .. }), "{err}");
    }

    #[test]
    fn negative_total_intensity_rejected_but_signed_ac_accepted() {
        let grid = SpectralGrid::new(830.0, 0.1, 1).unwrap();
        let data = Array3::from_elem((1, 1, 1), -0.5);
        assert!(SpectralCube::new(data.clone(), grid, CubeKind::AcOnly).is_ok());
        assert!(SpectralCube::new(data, grid, CubeKind::TotalIntensity).is_err());
    }

    #[test]
    fn cube_channel_mismatch() {
        let grid = SpectralGrid::new(830.0, 0.1, 3).unwrap();
        let err = SpectralCube::new(Array3::zeros((2, 2, 2)), grid, CubeKind::AcOnly).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn spectral_grid_is_centered_and_increasing() {
        let g = SpectralGrid::new(830.0, 0.5, 4).unwrap();
        assert_eq!(g.wavelengths_nm(), vec![829.25, 829.75, 830.25, 830.75]);
        assert!(SpectralGrid::new(830.0, 0.0, 4).is_err());
        assert!(SpectralGrid::new(830.0, 0.1, 0).is_err());
        assert!(SpectralGrid::new(1.0, 1.0, 8).is_err());
    }

    #[test]
    fn decoded_depth_grid_uses_sampled_width() {
        // 400 channels at 0.1 nm: 40 nm sampled width, 200 planes.
        let g = SpectralGrid::new(800.0, 0.1, 400).unwrap();
        let d = DepthGrid::decoded_from(&g);
        assert_eq!(d.num_planes(), 200);
        assert!((d.plane_spacing_um() - 8.0).abs() < 1e-9);
    }

    #[test]
    fn shifted_views_are_pure_translations() {
        let m = array![[1.0, 0.0, 0.5], [0.0, 1.0, 1.0]];
        let a = CodedAperture::new(m.clone(), 1).unwrap();
        let nl = 3;
        assert_eq!(a.measurement_width(nl), 5);
        for k in 0..nl {
            let v = a.shifted(k, nl);
            for i in 0..2 {
                for j in 0..5 {
                    let expect = if j >= k && j - k < 3 { m[[i, j - k]] } else { 0.0 };
                    assert_eq!(v[[i, j]], expect);
                }
            }
        }
        let neg = CodedAperture::new(m, -1).unwrap();
        assert_eq!(neg.channel_offset(0, nl), 2);
        assert_eq!(neg.channel_offset(2, nl), 0);
    }

    #[test]
    fn calibration_frame_round_trip() {
        let m = array![[1.0, 0.0, 0.5, 0.25], [0.0, 1.0, 1.0, 0.75]];
        let a = CodedAperture::new(m, 2).unwrap();
        let frame = a.calibration_frame(1, 3);
        let b = CodedAperture::from_calibration_frame(frame.view(), 1, 3, 4, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn camera_bounds() {
        let mut c = CameraModel::default();
        assert!(c.validate().is_ok());
        c.bit_depth = 20;
        assert!(c.validate().is_err());
        let frame = array![[0.0, 30_001.0]];
        assert!(validate_raw_frame(frame.view(), &CameraModel::default()).is_err());
    }
}
