//! Test objects: bar targets, glyph layers, mirrors and two-layer stacks.
//!
//! Every generator returns a [`ReflectivityVolume`] whose depth grid holds
//! exactly the planes it populates, so a single-plane phantom at depth `z`
//! has one plane at `z`. Generators are pure; the dataset sampler is
//! deterministic under its seed.

use std::collections::HashSet;

use ndarray::{Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DepthGrid, ReflectivityVolume};

/// Lateral sampling shared by all phantoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Canvas {
    pub nx: usize,
    pub ny: usize,
    pub pixel_pitch_um: f64,
}

impl Canvas {
    pub fn new(nx: usize, ny: usize, pixel_pitch_um: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::param("canvas", "dimensions must be non-zero"));
        }
        if !(pixel_pitch_um.is_finite() && pixel_pitch_um > 0.0) {
            return Err(Error::param("pixel_pitch_um", "must be positive"));
        }
        Ok(Self { nx, ny, pixel_pitch_um })
    }

    /// Wraps one lateral pattern as a single-plane volume at depth `z_um`.
    pub fn single_plane(&self, pattern: Array2<f64>, z_um: f64) -> Result<ReflectivityVolume> {
        if pattern.dim() != (self.nx, self.ny) {
            return Err(Error::dims("phantom plane", (self.nx, self.ny), pattern.dim()));
        }
        let depth = DepthGrid::new(1, 1.0, z_um)?;
        ReflectivityVolume::new(pattern.insert_axis(Axis(2)), self.pixel_pitch_um, depth)
    }
}

/// Direction along which bar intensity varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Bars run along x; the profile across them varies along y (columns).
    Vertical,
    /// Bars run along y; the profile varies along x (rows).
    Horizontal,
}

/// Full-field square-wave bars: bright where `(position mod period) < period/2`.
pub fn bar_pattern(nx: usize, ny: usize, period_px: usize, orientation: Orientation) -> Result<Array2<f64>> {
    if period_px < 2 {
        return Err(Error::param("bar_period_px", "must be at least 2"));
    }
    let half = period_px / 2;
    Ok(Array2::from_shape_fn((nx, ny), |(i, j)| {
        let pos = match orientation {
            Orientation::Vertical => j,
            Orientation::Horizontal => i,
        };
        if pos % period_px < half {
            1.0
        } else {
            0.0
        }
    }))
}

pub fn bar_target(canvas: &Canvas, period_px: usize, orientation: Orientation, z_um: f64) -> Result<ReflectivityVolume> {
    canvas.single_plane(bar_pattern(canvas.nx, canvas.ny, period_px, orientation)?, z_um)
}

/// Line pairs per millimetre of a 1951 USAF group/element.
pub fn usaf_line_pairs_per_mm(group: i32, element: u32) -> Result<f64> {
    if !(1..=6).contains(&element) {
        return Err(Error::param("element", "must be in 1..=6"));
    }
    Ok(2f64.powf(group as f64 + (element as f64 - 1.0) / 6.0))
}

/// Width of one bar of a USAF group/element, in micrometres.
pub fn usaf_bar_width_um(group: i32, element: u32) -> Result<f64> {
    Ok(1000.0 / (2.0 * usaf_line_pairs_per_mm(group, element)?))
}

/// A group of parallel bars with equal bar and gap width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BarGroup {
    /// Bar plus gap, in pixels.
    pub period_px: usize,
    pub bars: usize,
    /// Top-left pixel `(row, column)`.
    pub origin: (usize, usize),
    /// Bar length along its long axis, in pixels.
    pub length_px: usize,
    pub orientation: Orientation,
}

impl BarGroup {
    /// The USAF layout: three bars, each five bar widths long.
    pub fn three_bar(period_px: usize, origin: (usize, usize), orientation: Orientation) -> Self {
        Self {
            period_px,
            bars: 3,
            origin,
            length_px: 5 * (period_px / 2),
            orientation,
        }
    }

    pub fn bar_width(&self) -> usize {
        self.period_px / 2
    }

    /// Extent across the bars (last bar ends without a trailing gap).
    pub fn across_px(&self) -> usize {
        (self.bars - 1) * self.period_px + self.bar_width()
    }

    /// `(rows, columns)` covered by the group.
    pub fn extent(&self) -> (usize, usize) {
        match self.orientation {
            Orientation::Vertical => (self.length_px, self.across_px()),
            Orientation::Horizontal => (self.across_px(), self.length_px),
        }
    }

    fn validate(&self, nx: usize, ny: usize) -> Result<()> {
        if self.period_px < 2 || self.bars < 2 || self.length_px == 0 {
            return Err(Error::param("bar group", "needs period >= 2, two or more bars and non-zero length"));
        }
        let (h, w) = self.extent();
        if self.origin.0 + h > nx || self.origin.1 + w > ny {
            return Err(Error::param("bar group", format!("{self:?} does not fit a {nx}x{ny} canvas")));
        }
        Ok(())
    }

    /// Pixel offsets across the group covered by bar `b`.
    pub fn bar_span(&self, b: usize) -> std::ops::Range<usize> {
        let start = b * self.period_px;
        start..start + self.bar_width()
    }

    /// Pixel offsets across the group of the gap after bar `b`.
    pub fn gap_span(&self, b: usize) -> std::ops::Range<usize> {
        let start = b * self.period_px + self.bar_width();
        start..(b + 1) * self.period_px
    }
}

/// Rasterizes bar groups onto one plane.
pub fn bar_chart(canvas: &Canvas, groups: &[BarGroup], z_um: f64) -> Result<ReflectivityVolume> {
    let mut plane = Array2::zeros((canvas.nx, canvas.ny));
    for g in groups {
        g.validate(canvas.nx, canvas.ny)?;
        for b in 0..g.bars {
            for a in g.bar_span(b) {
                for l in 0..g.length_px {
                    let (i, j) = match g.orientation {
                        Orientation::Vertical => (g.origin.0 + l, g.origin.1 + a),
                        Orientation::Horizontal => (g.origin.0 + a, g.origin.1 + l),
                    };
                    plane[[i, j]] = 1.0;
                }
            }
        }
    }
    canvas.single_plane(plane, z_um)
}

/// A vertical and a horizontal three-bar group per period, packed left to
/// right in rows with a 2 pixel margin.
pub fn bar_chart_layout(periods_px: &[usize], nx: usize, ny: usize) -> Result<Vec<BarGroup>> {
    const GAP: usize = 2;
    let mut groups = Vec::with_capacity(2 * periods_px.len());
    let (mut row, mut col, mut shelf) = (GAP, GAP, 0);
    for &p in periods_px {
        for o in [Orientation::Vertical, Orientation::Horizontal] {
            let g = BarGroup::three_bar(p, (0, 0), o);
            let (h, w) = g.extent();
            if col + w > ny {
                row += shelf + GAP;
                col = GAP;
                shelf = 0;
            }
            let g = BarGroup { origin: (row, col), ..g };
            g.validate(nx, ny)?;
            groups.push(g);
            col += w + GAP;
            shelf = shelf.max(h);
        }
    }
    Ok(groups)
}

const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;

/// 5x7 bitmap rows, most significant of the low five bits leftmost.
fn glyph_rows(c: char) -> Option<[u8; GLYPH_H]> {
    Some(match c.to_ascii_uppercase() {
        ' ' => [0; 7],
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        'A' => [0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        _ => return None,
    })
}

/// Characters the embedded font can draw.
pub const GLYPH_ALPHABET: &str = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

/// Binary raster of `text` with each font pixel drawn as `scale × scale`
/// pixels and one blank font column between characters.
pub fn render_text(text: &str, scale: usize) -> Result<Array2<f64>> {
    if scale == 0 {
        return Err(Error::param("glyph scale", "must be at least 1"));
    }
    let chars: Vec<[u8; GLYPH_H]> = text
        .chars()
        .map(|c| glyph_rows(c).ok_or_else(|| Error::param("text", format!("no glyph for {c:?}"))))
        .collect::<Result<_>>()?;
    if chars.is_empty() {
        return Ok(Array2::zeros((0, 0)));
    }
    let cols = chars.len() * (GLYPH_W + 1) - 1;
    let mut out = Array2::zeros((GLYPH_H * scale, cols * scale));
    for (n, rows) in chars.iter().enumerate() {
        for (r, bits) in rows.iter().enumerate() {
            for c in 0..GLYPH_W {
                if bits & (1 << (GLYPH_W - 1 - c)) != 0 {
                    let (i0, j0) = (r * scale, (n * (GLYPH_W + 1) + c) * scale);
                    out.slice_mut(ndarray::s![i0..i0 + scale, j0..j0 + scale]).fill(1.0);
                }
            }
        }
    }
    Ok(out)
}

/// Rotates a raster counter-clockwise about its centre by nearest-neighbour
/// inverse mapping, keeping its shape. Quarter turns map pixel centres
/// exactly.
pub fn rotate_raster(src: &Array2<f64>, degrees: f64) -> Array2<f64> {
    let (h, w) = src.dim();
    let snap = |v: f64| {
        if v.abs() < 1e-12 {
            0.0
        } else if (v.abs() - 1.0).abs() < 1e-12 {
            v.signum()
        } else {
            v
        }
    };
    let t = degrees.to_radians();
    let (c, s) = (snap(t.cos()), snap(t.sin()));
    let (ci, cj) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    Array2::from_shape_fn((h, w), |(i, j)| {
        // row axis points down, so a counter-clockwise turn uses (-di, dj)
        let (di, dj) = (i as f64 - ci, j as f64 - cj);
        let si = ci + c * di - s * dj;
        let sj = cj + s * di + c * dj;
        let (ri, rj) = (si.round(), sj.round());
        if ri >= 0.0 && rj >= 0.0 && (ri as usize) < h && (rj as usize) < w {
            src[[ri as usize, rj as usize]]
        } else {
            0.0
        }
    })
}

/// Pose of a glyph string on the canvas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphPose {
    /// Shift of the text centre from the canvas centre, `(rows, columns)`.
    pub offset_px: (i64, i64),
    pub rotation_deg: f64,
    pub z_um: f64,
    pub scale: usize,
}

/// Lateral raster of `text` at `pose`; errors if any lit pixel leaves the canvas.
pub fn glyph_plane(nx: usize, ny: usize, text: &str, pose: &GlyphPose) -> Result<Array2<f64>> {
    let glyph = render_text(text, pose.scale)?;
    let mut out = Array2::zeros((nx, ny));
    if glyph.is_empty() {
        return Ok(out);
    }
    // pad to a square that holds every rotation of the raster
    let (gh, gw) = glyph.dim();
    let side = ((gh * gh + gw * gw) as f64).sqrt().ceil() as usize + 2;
    let (ph, pw) = (side + (side - gh) % 2, side + (side - gw) % 2);
    let mut padded = Array2::zeros((ph, pw));
    let (pi, pj) = ((ph - gh) / 2, (pw - gw) / 2);
    padded.slice_mut(ndarray::s![pi..pi + gh, pj..pj + gw]).assign(&glyph);
    let rotated = rotate_raster(&padded, pose.rotation_deg);

    let (rh, rw) = rotated.dim();
    let top = (nx as i64 - rh as i64) / 2 + pose.offset_px.0;
    let left = (ny as i64 - rw as i64) / 2 + pose.offset_px.1;
    for ((i, j), &v) in rotated.indexed_iter() {
        if v == 0.0 {
            continue;
        }
        let (ti, tj) = (top + i as i64, left + j as i64);
        if ti < 0 || tj < 0 || ti >= nx as i64 || tj >= ny as i64 {
            return Err(Error::param(
                "glyph pose",
                format!("{text:?} at {pose:?} leaves the {nx}x{ny} canvas"),
            ));
        }
        out[[ti as usize, tj as usize]] = v;
    }
    Ok(out)
}

pub fn glyph_layer(canvas: &Canvas, text: &str, pose: &GlyphPose) -> Result<ReflectivityVolume> {
    canvas.single_plane(glyph_plane(canvas.nx, canvas.ny, text, pose)?, pose.z_um)
}

/// The "NOK" chrome-on-quartz test pattern, centred and as large as fits.
pub fn nok_pattern(canvas: &Canvas, z_um: f64) -> Result<ReflectivityVolume> {
    let (h, w) = (GLYPH_H, 3 * (GLYPH_W + 1) - 1);
    let scale = ((canvas.nx * 3 / 4) / h).min((canvas.ny * 3 / 4) / w).max(1);
    let pose = GlyphPose {
        offset_px: (0, 0),
        rotation_deg: 0.0,
        z_um,
        scale,
    };
    glyph_layer(canvas, "NOK", &pose)
}

/// Uniform reflector filling the field.
pub fn mirror(canvas: &Canvas, z_um: f64, reflectivity: f64) -> Result<ReflectivityVolume> {
    canvas.single_plane(Array2::from_elem((canvas.nx, canvas.ny), reflectivity), z_um)
}

fn translate(src: &Array2<f64>, di: i64, dj: i64) -> Array2<f64> {
    let (h, w) = src.dim();
    Array2::from_shape_fn((h, w), |(i, j)| {
        let (si, sj) = (i as i64 - di, j as i64 - dj);
        if si >= 0 && sj >= 0 && si < h as i64 && sj < w as i64 {
            src[[si as usize, sj as usize]]
        } else {
            0.0
        }
    })
}

/// Two copies of `pattern` on planes `z1_um < z2_um`, the second translated
/// by `stagger_px = (rows, columns)`. With `occlusion`, the lower layer is
/// blocked wherever the upper layer is lit (binary shadow).
pub fn double_layer_target(
    canvas: &Canvas,
    pattern: &Array2<f64>,
    z1_um: f64,
    z2_um: f64,
    stagger_px: (i64, i64),
    occlusion: bool,
) -> Result<ReflectivityVolume> {
    if pattern.dim() != (canvas.nx, canvas.ny) {
        return Err(Error::dims("layer pattern", (canvas.nx, canvas.ny), pattern.dim()));
    }
    if !(z1_um >= 0.0 && z2_um > z1_um) {
        return Err(Error::param("layer depths", "need 0 <= z1 < z2"));
    }
    let upper = pattern.clone();
    let mut lower = translate(pattern, stagger_px.0, stagger_px.1);
    if occlusion {
        ndarray::Zip::from(&mut lower).and(&upper).for_each(|l, &u| {
            if u > 0.0 {
                *l = 0.0;
            }
        });
    }
    let mut data = Array3::zeros((canvas.nx, canvas.ny, 2));
    data.index_axis_mut(Axis(2), 0).assign(&upper);
    data.index_axis_mut(Axis(2), 1).assign(&lower);
    let depth = DepthGrid::new(2, z2_um - z1_um, z1_um)?;
    ReflectivityVolume::new(data, canvas.pixel_pitch_um, depth)
}

/// Converts a physical stagger to whole pixels.
pub fn stagger_in_pixels(stagger_um: f64, pixel_pitch_um: f64) -> i64 {
    (stagger_um / pixel_pitch_um).round() as i64
}

/// Sampling grids for the glyph training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlyphDatasetSpec {
    pub train_count: usize,
    pub validation_count: usize,
    pub seed: u64,
    pub max_text_len: usize,
    /// Offsets are drawn on the integer grid `[-max, max]` along each axis.
    pub max_offset_px: i64,
    /// Rotations are multiples of this step in `[0, 360)`.
    pub rotation_step_deg: f64,
    pub scale: usize,
    /// Candidate depths.
    pub z_planes_um: Vec<f64>,
}

impl Default for GlyphDatasetSpec {
    fn default() -> Self {
        Self {
            train_count: 2000,
            validation_count: 200,
            seed: 0,
            max_text_len: 2,
            max_offset_px: 8,
            rotation_step_deg: 15.0,
            scale: 2,
            z_planes_um: vec![100.0, 200.0, 300.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphSample {
    pub id: usize,
    pub split: Split,
    pub text: String,
    pub pose: GlyphPose,
}

/// Draws train then validation samples. No validation pose (text, offset,
/// rotation, depth) repeats a training pose, and every sample fits `canvas`.
pub fn sample_glyph_dataset(canvas: &Canvas, spec: &GlyphDatasetSpec) -> Result<Vec<GlyphSample>> {
    if spec.z_planes_um.is_empty() || spec.max_text_len == 0 || !(spec.rotation_step_deg > 0.0) {
        return Err(Error::param(
            "glyph dataset",
            "needs depth planes, text length >= 1 and a positive rotation step",
        ));
    }
    let alphabet: Vec<char> = GLYPH_ALPHABET.chars().collect();
    let rotations = (360.0 / spec.rotation_step_deg).floor().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut seen: HashSet<(String, i64, i64, usize, usize)> = HashSet::new();
    let total = spec.train_count + spec.validation_count;
    let mut out = Vec::with_capacity(total);
    let max_attempts = 100 * total.max(1);
    let mut attempts = 0;
    while out.len() < total {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::param("glyph dataset", "pose grid too small for the requested counts"));
        }
        let len = rng.random_range(1..=spec.max_text_len);
        let text: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
        let oi = rng.random_range(-spec.max_offset_px..=spec.max_offset_px);
        let oj = rng.random_range(-spec.max_offset_px..=spec.max_offset_px);
        let r = rng.random_range(0..rotations);
        let zi = rng.random_range(0..spec.z_planes_um.len());
        let key = (text.clone(), oi, oj, r, zi);
        if seen.contains(&key) {
            continue;
        }
        let pose = GlyphPose {
            offset_px: (oi, oj),
            rotation_deg: r as f64 * spec.rotation_step_deg,
            z_um: spec.z_planes_um[zi],
            scale: spec.scale,
        };
        if glyph_plane(canvas.nx, canvas.ny, &text, &pose).is_err() {
            continue;
        }
        seen.insert(key);
        let id = out.len();
        let split = if id < spec.train_count { Split::Train } else { Split::Validation };
        out.push(GlyphSample { id, split, text, pose });
    }
    Ok(out)
}
