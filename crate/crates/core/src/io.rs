//! On-disk formats.
//!
//! An array container is a pair of files sharing a stem: `<stem>.bin` holds
//! the raw little-endian `f64` payload and `<stem>.hdr` a TOML header with
//! dtype, byte order, shape, axis names, units and grid metadata. Arrays are
//! stored row-major with the last axis fastest, so a spectral cube
//! `(x, y, λ)` has λ contiguous and a frame `(x, y)` has y contiguous.
//!
//! Images are 16-bit binary PGM files with rows along x and columns along y.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use ndarray::{Array, Array2, Array3, Array4, ArrayView, ArrayView2, Axis, Dimension, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interferometer::DepthVolume;
use crate::metrics::csv_err;
use crate::recon::SolverState;
use crate::types::{
    CameraModel, CodedAperture, CubeKind, DepthGrid, Measurement, ReflectivityVolume, SpectralCube, SpectralGrid, Validate,
};

pub const DTYPE: &str = "f64";
pub const BYTE_ORDER: &str = "little";
pub const LAYOUT: &str = "row_major_last_axis_fastest";

/// Container header. Optional sections are present when the stored object has them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: String,
    pub dtype: String,
    pub byte_order: String,
    pub layout: String,
    pub shape: Vec<usize>,
    pub axes: Vec<String>,
    pub units: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cube_kind: Option<CubeKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_pitch_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion_step: Option<isize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_grid: Option<SpectralGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_grid: Option<DepthGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraModel>,
    /// Free-form metadata (frame names, solver telemetry, scale factors).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, toml::Value>,
}

impl Header {
    pub fn new(kind: &str, shape: &[usize], axes: &[&str], units: &str) -> Self {
        Self {
            kind: kind.into(),
            dtype: DTYPE.into(),
            byte_order: BYTE_ORDER.into(),
            layout: LAYOUT.into(),
            shape: shape.to_vec(),
            axes: axes.iter().map(|s| s.to_string()).collect(),
            units: units.into(),
            cube_kind: None,
            pixel_pitch_um: None,
            dispersion_step: None,
            spectral_grid: None,
            depth_grid: None,
            camera: None,
            meta: BTreeMap::new(),
        }
    }
}

/// `(<stem>.bin, <stem>.hdr)` for a container path given with or without extension.
pub fn container_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("bin"), path.with_extension("hdr"))
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Writes `array` with `header`; the header's shape is overwritten with the array's.
pub fn write_container<D: Dimension>(path: &Path, array: ArrayView<'_, f64, D>, mut header: Header) -> Result<()> {
    let (bin, hdr) = container_paths(path);
    if let Some(dir) = bin.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    header.shape = array.shape().to_vec();
    let mut bytes = Vec::with_capacity(array.len() * 8);
    for &v in array.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&bin, bytes)?;
    let text = toml::to_string(&header).map_err(|e| format_err(&hdr, e.to_string()))?;
    fs::write(&hdr, text)?;
    Ok(())
}

pub fn read_header(path: &Path) -> Result<Header> {
    let (_, hdr) = container_paths(path);
    let text = fs::read_to_string(&hdr)?;
    let header: Header = toml::from_str(&text).map_err(|e| format_err(&hdr, e.to_string()))?;
    if header.dtype != DTYPE || header.byte_order != BYTE_ORDER || header.layout != LAYOUT {
        return Err(format_err(
            &hdr,
            format!("unsupported encoding {}/{}/{}", header.dtype, header.byte_order, header.layout),
        ));
    }
    Ok(header)
}

pub fn read_container(path: &Path) -> Result<(Array<f64, IxDyn>, Header)> {
    let header = read_header(path)?;
    let (bin, _) = container_paths(path);
    let bytes = fs::read(&bin)?;
    let n: usize = header.shape.iter().product();
    if bytes.len() != n * 8 {
        return Err(format_err(
            &bin,
            format!("expected {} bytes for shape {:?}, found {}", n * 8, header.shape, bytes.len()),
        ));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let arr = Array::from_shape_vec(IxDyn(&header.shape), data).map_err(|e| format_err(&bin, e.to_string()))?;
    Ok((arr, header))
}

fn read_typed<D: Dimension>(path: &Path, kind: &str) -> Result<(Array<f64, D>, Header)> {
    let (arr, header) = read_container(path)?;
    if header.kind != kind {
        return Err(format_err(path, format!("expected a {kind} container, found {}", header.kind)));
    }
    let arr = arr
        .into_dimensionality::<D>()
        .map_err(|_| format_err(path, format!("{kind} has rank {}", header.shape.len())))?;
    Ok((arr, header))
}

fn require<T>(v: Option<T>, path: &Path, what: &str) -> Result<T> {
    v.ok_or_else(|| format_err(path, format!("header lacks `{what}`")))
}

pub fn save_cube(path: &Path, cube: &SpectralCube) -> Result<()> {
    let mut h = Header::new("spectral_cube", &[], &["x", "y", "lambda"], "intensity");
    h.spectral_grid = Some(*cube.grid());
    h.cube_kind = Some(cube.kind());
    write_container(path, cube.data(), h)
}

pub fn load_cube(path: &Path) -> Result<SpectralCube> {
    let (data, h) = read_typed(path, "spectral_cube")?;
    let grid = require(h.spectral_grid, path, "spectral_grid")?;
    grid.validate()?;
    SpectralCube::new(data, grid, require(h.cube_kind, path, "cube_kind")?)
}

/// A cube in the camera (sheared) frame, width `ny + |step|·(nl−1)`.
pub fn save_sheared_cube(path: &Path, data: &Array3<f64>, grid: &SpectralGrid, dispersion_step: isize) -> Result<()> {
    let mut h = Header::new("sheared_cube", &[], &["x", "y_camera", "lambda"], "intensity");
    h.spectral_grid = Some(*grid);
    h.cube_kind = Some(CubeKind::AcOnly);
    h.dispersion_step = Some(dispersion_step);
    write_container(path, data.view(), h)
}

pub fn load_sheared_cube(path: &Path) -> Result<(Array3<f64>, SpectralGrid, isize)> {
    let (data, h) = read_typed(path, "sheared_cube")?;
    let grid = require(h.spectral_grid, path, "spectral_grid")?;
    grid.validate()?;
    Ok((data, grid, require(h.dispersion_step, path, "dispersion_step")?))
}

pub fn save_volume(path: &Path, volume: &ReflectivityVolume) -> Result<()> {
    let mut h = Header::new("reflectivity_volume", &[], &["x", "y", "z"], "reflectivity");
    h.pixel_pitch_um = Some(volume.pixel_pitch_um());
    h.depth_grid = Some(*volume.depth());
    write_container(path, volume.data(), h)
}

pub fn load_volume(path: &Path) -> Result<ReflectivityVolume> {
    let (data, h) = read_typed(path, "reflectivity_volume")?;
    ReflectivityVolume::new(
        data,
        require(h.pixel_pitch_um, path, "pixel_pitch_um")?,
        require(h.depth_grid, path, "depth_grid")?,
    )
}

pub fn save_depth_volume(path: &Path, volume: &DepthVolume) -> Result<()> {
    let mut h = Header::new("depth_volume", &[], &["x", "y", "z"], "amplitude");
    h.depth_grid = Some(volume.depth);
    write_container(path, volume.data.view(), h)
}

pub fn load_depth_volume(path: &Path) -> Result<DepthVolume> {
    let (data, h) = read_typed(path, "depth_volume")?;
    let depth = require(h.depth_grid, path, "depth_grid")?;
    depth.validate()?;
    Ok(DepthVolume { data, depth })
}

pub fn save_aperture(path: &Path, aperture: &CodedAperture) -> Result<()> {
    let mut h = Header::new("coded_aperture", &[], &["x", "y"], "transmission");
    h.dispersion_step = Some(aperture.dispersion_step());
    write_container(path, aperture.pattern(), h)
}

pub fn load_aperture(path: &Path) -> Result<CodedAperture> {
    let (data, h) = read_typed::<ndarray::Ix2>(path, "coded_aperture")?;
    CodedAperture::new(data, require(h.dispersion_step, path, "dispersion_step")?)
}

/// Frames are stacked along a leading axis: image, then the DC frames if present.
pub fn save_measurement(path: &Path, m: &Measurement) -> Result<()> {
    let mut frames = vec![m.image()];
    let mut names = vec!["image"];
    if let (Some(r), Some(s)) = (m.dc_reference(), m.dc_sample()) {
        frames.extend([r, s]);
        names.extend(["dc_reference", "dc_sample"]);
    }
    let stacked = ndarray::stack(Axis(0), &frames).expect("frames share a shape");
    let mut h = Header::new("measurement", &[], &["frame", "x", "y_camera"], "electrons");
    h.camera = Some(*m.camera());
    h.meta.insert(
        "frames".into(),
        toml::Value::Array(names.into_iter().map(|n| toml::Value::String(n.into())).collect()),
    );
    write_container(path, stacked.view(), h)
}

pub fn load_measurement(path: &Path) -> Result<Measurement> {
    let (data, h) = read_typed::<ndarray::Ix3>(path, "measurement")?;
    let camera = require(h.camera, path, "camera")?;
    let frame = |k: usize| data.index_axis(Axis(0), k).to_owned();
    match data.len_of(Axis(0)) {
        1 => Measurement::new(frame(0), camera),
        3 => Measurement::with_dc_frames(frame(0), frame(1), frame(2), camera),
        n => Err(format_err(path, format!("{n} frames; expected 1 or 3"))),
    }
}

const STATE_FIELDS: [&str; 5] = ["x", "z", "u", "p", "v"];

/// Checkpoint: the five iterates stacked along a leading axis, telemetry in the header.
pub fn save_state(path: &Path, state: &SolverState) -> Result<()> {
    let views = [state.x.view(), state.z.view(), state.u.view(), state.p.view(), state.v.view()];
    let stacked = ndarray::stack(Axis(0), &views).map_err(|e| format_err(path, e.to_string()))?;
    let mut h = Header::new("solver_state", &[], &["iterate", "x", "y_camera", "lambda"], "intensity");
    let floats = |v: &[f64]| toml::Value::Array(v.iter().map(|&f| toml::Value::Float(f)).collect());
    h.meta.insert(
        "iterates".into(),
        toml::Value::Array(STATE_FIELDS.iter().map(|s| toml::Value::String(s.to_string())).collect()),
    );
    h.meta.insert("iteration".into(), toml::Value::Integer(state.iteration as i64));
    h.meta.insert("converged".into(), toml::Value::Boolean(state.converged));
    h.meta.insert("residual_history".into(), floats(&state.residual_history));
    h.meta.insert("objective_history".into(), floats(&state.objective_history));
    write_container(path, stacked.view(), h)
}

pub fn load_state(path: &Path) -> Result<SolverState> {
    let (data, h) = read_typed::<ndarray::Ix4>(path, "solver_state")?;
    if data.len_of(Axis(0)) != STATE_FIELDS.len() {
        return Err(format_err(path, "expected five iterates"));
    }
    let floats = |key: &str| -> Result<Vec<f64>> {
        h.meta
            .get(key)
            .and_then(|v| v.as_array())
            .ok_or_else(|| format_err(path, format!("header lacks `{key}`")))?
            .iter()
            .map(|v| v.as_float().ok_or_else(|| format_err(path, format!("`{key}` holds a non-float"))))
            .collect()
    };
    let iteration = h
        .meta
        .get("iteration")
        .and_then(|v| v.as_integer())
        .ok_or_else(|| format_err(path, "header lacks `iteration`"))? as usize;
    let converged = h.meta.get("converged").and_then(|v| v.as_bool()).unwrap_or(false);
    let it = |k: usize| data.index_axis(Axis(0), k).to_owned();
    Ok(SolverState {
        x: it(0),
        z: it(1),
        u: it(2),
        p: it(3),
        v: it(4),
        iteration,
        residual_history: floats("residual_history")?,
        objective_history: floats("objective_history")?,
        converged,
    })
}

/// Residual and objective per iteration as CSV.
pub fn write_residual_csv<W: Write>(out: W, state: &SolverState) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "relative_residual", "objective"]).map_err(csv_err)?;
    for (k, (r, o)) in state.residual_history.iter().zip(&state.objective_history).enumerate() {
        w.write_record([(k + 1).to_string(), r.to_string(), o.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn image_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => format_err(path, other.to_string()),
    }
}

/// Maps `[lo, hi]` linearly onto `0..=65535` (clamped) and writes a binary PGM.
pub fn write_pgm16(path: &Path, img: ArrayView2<'_, f64>, lo: f64, hi: f64) -> Result<()> {
    if !(hi > lo) {
        return Err(Error::param("pgm range", format!("[{lo}, {hi}] is empty")));
    }
    let (h, w) = img.dim();
    let scale = 65535.0 / (hi - lo);
    let pixels: Vec<u16> = img.iter().map(|&v| ((v - lo) * scale).round().clamp(0.0, 65535.0) as u16).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(w as u32, h as u32, pixels).expect("buffer matches dimensions");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    buf.save_with_format(path, image::ImageFormat::Pnm).map_err(|e| image_err(path, e))
}

/// Raw 16-bit samples of a PGM, rows along x.
pub fn read_pgm16(path: &Path) -> Result<Array2<u16>> {
    let img = image::ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| image_err(path, e))?
        .into_luma16();
    let (w, h) = img.dimensions();
    Array2::from_shape_vec((h as usize, w as usize), img.into_raw()).map_err(|e| format_err(path, e.to_string()))
}

/// Sidecar written next to a depth stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackSidecar {
    pub num_planes: usize,
    pub plane_spacing_um: f64,
    pub origin_um: f64,
    /// Amplitude that maps to grey level 65535; grey level 0 is amplitude 0.
    pub full_scale_amplitude: f64,
    pub rows_axis: String,
    pub cols_axis: String,
    pub files: Vec<String>,
}

/// One PGM per depth plane (`plane_000.pgm`, …) sharing a global scale,
/// plus `stack.toml`.
pub fn export_depth_stack(dir: &Path, volume: &DepthVolume) -> Result<StackSidecar> {
    fs::create_dir_all(dir)?;
    let peak = volume.data.iter().fold(0.0f64, |m, &v| m.max(v));
    let full_scale = if peak > 0.0 { peak } else { 1.0 };
    let nz = volume.data.len_of(Axis(2));
    let mut files = Vec::with_capacity(nz);
    for m in 0..nz {
        let name = format!("plane_{m:03}.pgm");
        write_pgm16(&dir.join(&name), volume.data.index_axis(Axis(2), m), 0.0, full_scale)?;
        files.push(name);
    }
    let sidecar = StackSidecar {
        num_planes: nz,
        plane_spacing_um: volume.depth.plane_spacing_um(),
        origin_um: volume.depth.origin_um(),
        full_scale_amplitude: full_scale,
        rows_axis: "x".into(),
        cols_axis: "y".into(),
        files,
    };
    let text = toml::to_string(&sidecar).map_err(|e| format_err(dir, e.to_string()))?;
    fs::write(dir.join("stack.toml"), text)?;
    Ok(sidecar)
}

/// Stacked 4D arrays are also exposed for the dataset writer.
pub fn save_array4(path: &Path, kind: &str, data: &Array4<f64>, axes: &[&str], units: &str) -> Result<()> {
    write_container(path, data.view(), Header::new(kind, &[], axes, units))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn grid() -> SpectralGrid {
        SpectralGrid::new(830.0, 0.5, 4).unwrap()
    }

    #[test]
    fn cube_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let data = Array3::from_shape_fn((3, 4, 4), |(i, j, k)| (i as f64 * 0.1 - j as f64).sin() * 1e-3 + k as f64 / 3.0);
        let cube = SpectralCube::new(data, grid(), CubeKind::AcOnly).unwrap();
        let p = dir.path().join("cube");
        save_cube(&p, &cube).unwrap();
        assert_eq!(load_cube(&p).unwrap(), cube);
        let h = read_header(&p).unwrap();
        assert_eq!(h.shape, vec![3, 4, 4]);
        assert_eq!(h.layout, LAYOUT);
    }

    #[test]
    fn wrong_kind_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a");
        save_aperture(&p, &CodedAperture::new(Array2::ones((2, 2)), 1).unwrap()).unwrap();
        assert!(matches!(load_cube(&p), Err(Error::Format { .. })));
        assert!(load_aperture(&p).is_ok());
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m");
        let m = Measurement::new(Array2::from_elem((2, 3), 7.0), CameraModel::default()).unwrap();
        save_measurement(&p, &m).unwrap();
        assert_eq!(load_measurement(&p).unwrap(), m);
        let (bin, _) = container_paths(&p);
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 8]).unwrap();
        assert!(load_measurement(&p).is_err());
    }

    #[test]
    fn state_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = Array3::from_shape_fn((2, 3, 2), |(i, j, k)| (i + j * k) as f64 + 0.1);
        let st = SolverState {
            x: a.clone(),
            z: &a * 2.0,
            u: &a * -1.0,
            p: &a + 0.5,
            v: a.clone(),
            iteration: 2,
            residual_history: vec![0.3, 0.1 + 0.2],
            objective_history: vec![1.0 / 3.0, f64::MIN_POSITIVE],
            converged: true,
        };
        let p = dir.path().join("state");
        save_state(&p, &st).unwrap();
        assert_eq!(load_state(&p).unwrap(), st);
    }

    #[test]
    fn pgm16_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Array2::from_shape_fn((3, 5), |(i, j)| (i * 5 + j) as f64 / 14.0);
        let p = dir.path().join("m.pgm");
        write_pgm16(&p, img.view(), 0.0, 1.0).unwrap();
        let back = read_pgm16(&p).unwrap();
        assert_eq!(back.dim(), (3, 5));
        assert_eq!(back[[0, 0]], 0);
        assert_eq!(back[[2, 4]], 65535);
        assert_eq!(back[[1, 2]], (7.0f64 / 14.0 * 65535.0).round() as u16);
    }

    #[test]
    fn depth_stack_files() {
        let dir = tempfile::tempdir().unwrap();
        let data = Array3::from_shape_fn((2, 2, 3), |(_, _, m)| m as f64);
        let v = DepthVolume {
            data,
            depth: DepthGrid::new(3, 8.0, 0.0).unwrap(),
        };
        let side = export_depth_stack(dir.path(), &v).unwrap();
        assert_eq!(side.files, vec!["plane_000.pgm", "plane_001.pgm", "plane_002.pgm"]);
        assert_eq!(read_pgm16(&dir.path().join("plane_002.pgm")).unwrap()[[0, 0]], 65535);
        assert!(dir.path().join("stack.toml").exists());
    }
}
