//! Run configuration files. Every physical quantity carries its unit in the
//! key name. Unknown keys are rejected with the full list of offenders.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use snapcube::noise::gaussian_vignette;
use snapcube::phantoms::{
    bar_chart, bar_chart_layout, double_layer_target, glyph_layer, mirror, nok_pattern, stagger_in_pixels, BarGroup, Canvas,
    GlyphDatasetSpec, GlyphPose,
};
use snapcube::simulate::{upsample_pattern, ForwardConfig, PhotonBudget};
use snapcube::{CameraModel, ReflectivityVolume, SourceSpectrum, SpectralGrid};

use crate::error::{CliError, CliResult};

/// Parses a TOML file into `T`, failing on any key `T` does not know.
pub fn load<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse<T: DeserializeOwned>(text: &str) -> CliResult<T> {
    let de = toml::de::Deserializer::parse(text).map_err(|e| CliError::Config(e.to_string()))?;
    let mut unknown = Vec::new();
    let value: T = serde_ignored::deserialize(de, |path| unknown.push(path.to_string())).map_err(|e| CliError::Config(e.to_string()))?;
    if !unknown.is_empty() {
        return Err(CliError::Config(format!("unknown config keys: {}", unknown.join(", "))));
    }
    Ok(value)
}

pub fn to_toml<T: Serialize>(value: &T) -> CliResult<String> {
    toml::to_string(value).map_err(|e| CliError::Config(format!("cannot serialize manifest: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceSection {
    pub center_wavelength_nm: f64,
    pub channel_spacing_nm: f64,
    pub num_channels: usize,
    pub fwhm_bandwidth_nm: f64,
    pub reference_intensity: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            center_wavelength_nm: 830.0,
            channel_spacing_nm: 1.0,
            num_channels: 16,
            fwhm_bandwidth_nm: 8.0,
            reference_intensity: 1.0,
        }
    }
}

impl SourceSection {
    pub fn grid(&self) -> CliResult<SpectralGrid> {
        Ok(SpectralGrid::new(
            self.center_wavelength_nm,
            self.channel_spacing_nm,
            self.num_channels,
        )?)
    }

    /// Same sampled width split into `channels` channels.
    pub fn grid_with_channels(&self, channels: usize) -> CliResult<SpectralGrid> {
        if channels == 0 {
            return Err(CliError::Config("compression ratios must be positive".into()));
        }
        let width = self.channel_spacing_nm * self.num_channels as f64;
        Ok(SpectralGrid::new(self.center_wavelength_nm, width / channels as f64, channels)?)
    }

    pub fn spectrum(&self, grid: SpectralGrid) -> CliResult<SourceSpectrum> {
        Ok(SourceSpectrum::gaussian(grid, self.fwhm_bandwidth_nm, self.reference_intensity)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApertureSection {
    pub open_fraction: f64,
    pub seed: u64,
    pub dispersion_step_px: isize,
}

impl Default for ApertureSection {
    fn default() -> Self {
        Self {
            open_fraction: 0.5,
            seed: 0,
            dispersion_step_px: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraSection {
    pub full_well_electrons: f64,
    pub bit_depth: u32,
    pub pixel_pitch_um: f64,
    pub oversample_factor: usize,
}

impl Default for CameraSection {
    fn default() -> Self {
        let c = CameraModel::default();
        Self {
            full_well_electrons: c.full_well_capacity,
            bit_depth: c.bit_depth,
            pixel_pitch_um: c.pixel_pitch_um,
            oversample_factor: c.oversample_factor,
        }
    }
}

impl CameraSection {
    pub fn model(&self) -> CameraModel {
        CameraModel {
            full_well_capacity: self.full_well_electrons,
            bit_depth: self.bit_depth,
            pixel_pitch_um: self.pixel_pitch_um,
            oversample_factor: self.oversample_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSection {
    pub shot_noise: bool,
    pub quantize: bool,
    pub seed: u64,
    /// Electrons per unit intensity; unset means the brightest pixel fills the full well.
    pub photon_scale: Option<f64>,
    /// Gain at the field corners of a Gaussian illumination falloff; unset means flat.
    pub vignette_edge_gain: Option<f64>,
}

impl NoiseSection {
    pub fn forward_config(&self, camera: &CameraSection, nx: usize, ny: usize, seed: u64) -> CliResult<ForwardConfig> {
        let illumination_field = match self.vignette_edge_gain {
            Some(g) => {
                let radius = 0.5 * ((nx * nx + ny * ny) as f64).sqrt();
                Some(gaussian_vignette(nx, ny, radius, g)?)
            }
            None => None,
        };
        Ok(ForwardConfig {
            camera: camera.model(),
            photon_budget: self.photon_scale.map_or(PhotonBudget::FullWell, PhotonBudget::Scale),
            shot_noise: self.shot_noise,
            quantize: self.quantize,
            seed,
            illumination_field,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    Mirror,
    Bars,
    Nok,
    Glyph,
    DoubleLayer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSection {
    pub kind: PhantomKind,
    /// Lateral size in camera pixels.
    pub nx: usize,
    pub ny: usize,
    /// Depth of single-plane phantoms.
    pub z_um: f64,
    pub reflectivity: f64,
    /// Periods of the bar groups (bars and double-layer phantoms).
    pub bar_periods_px: Vec<usize>,
    pub text: String,
    pub offset_px: [i64; 2],
    pub rotation_deg: f64,
    pub glyph_scale: usize,
    pub z1_um: f64,
    pub z2_um: f64,
    pub stagger_um: f64,
    pub occlusion: bool,
}

impl Default for PhantomSection {
    fn default() -> Self {
        Self {
            kind: PhantomKind::Nok,
            nx: 64,
            ny: 64,
            z_um: 50.0,
            reflectivity: 1.0,
            bar_periods_px: vec![2, 3, 4, 5, 6, 8],
            text: "NOK".into(),
            offset_px: [0, 0],
            rotation_deg: 0.0,
            glyph_scale: 2,
            z1_um: 40.0,
            z2_um: 90.0,
            stagger_um: 32.5,
            occlusion: true,
        }
    }
}

impl PhantomSection {
    /// Bar groups at camera resolution, for the bar-based phantoms.
    pub fn bar_groups(&self) -> CliResult<Vec<BarGroup>> {
        Ok(bar_chart_layout(&self.bar_periods_px, self.nx, self.ny)?)
    }

    /// Builds the volume `f` times finer than the camera grid of pitch `pitch_um`.
    pub fn volume(&self, pitch_um: f64, f: usize) -> CliResult<ReflectivityVolume> {
        let f = f.max(1);
        let fine = Canvas::new(self.nx * f, self.ny * f, pitch_um / f as f64)?;
        let coarse = Canvas::new(self.nx, self.ny, pitch_um)?;
        let chart_plane = || -> CliResult<_> {
            let chart = bar_chart(&coarse, &self.bar_groups()?, 0.0)?;
            Ok(upsample_pattern(chart.data().index_axis(ndarray::Axis(2), 0), f))
        };
        let v = match self.kind {
            PhantomKind::Mirror => mirror(&fine, self.z_um, self.reflectivity)?,
            PhantomKind::Nok => nok_pattern(&fine, self.z_um)?,
            PhantomKind::Bars => fine.single_plane(chart_plane()?, self.z_um)?,
            PhantomKind::Glyph => {
                let pose = GlyphPose {
                    offset_px: (self.offset_px[0] * f as i64, self.offset_px[1] * f as i64),
                    rotation_deg: self.rotation_deg,
                    z_um: self.z_um,
                    scale: self.glyph_scale * f,
                };
                glyph_layer(&fine, &self.text, &pose)?
            }
            PhantomKind::DoubleLayer => {
                let s = stagger_in_pixels(self.stagger_um, fine.pixel_pitch_um);
                double_layer_target(&fine, &chart_plane()?, self.z1_um, self.z2_um, (s, s), self.occlusion)?
            }
        };
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    /// Channel counts to simulate over the same sampled spectral width.
    pub compression_ratios: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub phantom: PhantomSection,
    pub source: SourceSection,
    pub aperture: ApertureSection,
    pub camera: CameraSection,
    pub noise: NoiseSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// `Φᵀ(y/ψ)`.
    PsiNormalized,
    /// `Φᵀy`.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub nx: usize,
    pub ny: usize,
    pub input_mode: InputMode,
    pub glyphs: GlyphDatasetSpec,
    pub source: SourceSection,
    pub aperture: ApertureSection,
    pub camera: CameraSection,
    pub noise: NoiseSection,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 64,
            input_mode: InputMode::PsiNormalized,
            glyphs: GlyphDatasetSpec::default(),
            // 16 channels over 8 nm: 344 um axial range for the default 100-300 um planes.
            source: SourceSection {
                channel_spacing_nm: 0.5,
                fwhm_bandwidth_nm: 4.0,
                ..SourceSection::default()
            },
            aperture: ApertureSection::default(),
            camera: CameraSection::default(),
            noise: NoiseSection {
                shot_noise: true,
                ..NoiseSection::default()
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_sections() {
        let c: SimulateConfig = parse("[phantom]\nkind = \"mirror\"\n").unwrap();
        assert_eq!(c.phantom.kind, PhantomKind::Mirror);
        assert_eq!(c.source, SourceSection::default());
    }

    #[test]
    fn unknown_keys_are_listed() {
        let err = parse::<SimulateConfig>("[source]\nwavelength = 1\n[phantom]\nnxx = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("source.wavelength") && msg.contains("phantom.nxx"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn effective_config_round_trips() {
        let c = SimulateConfig::default();
        let back: SimulateConfig = parse(&to_toml(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let d = DatasetConfig::default();
        let back: DatasetConfig = parse(&to_toml(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn sweep_keeps_sampled_width() {
        let s = SourceSection::default();
        let g = s.grid_with_channels(4).unwrap();
        assert_eq!(g.num_channels(), 4);
        assert!((g.sampled_width_nm() - s.grid().unwrap().sampled_width_nm()).abs() < 1e-12);
    }

    #[test]
    fn every_phantom_kind_builds() {
        for kind in [
            PhantomKind::Mirror,
            PhantomKind::Bars,
            PhantomKind::Nok,
            PhantomKind::Glyph,
            PhantomKind::DoubleLayer,
        ] {
            let p = PhantomSection {
                kind,
                ..PhantomSection::default()
            };
            let v = p.volume(6.5, 1).unwrap();
            assert_eq!(v.dims().0, 64);
            let v2 = p.volume(6.5, 2).unwrap();
            assert_eq!(v2.dims().0, 128);
        }
    }
}
