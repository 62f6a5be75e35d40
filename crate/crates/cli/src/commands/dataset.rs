use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use snapcube::io::{save_aperture, save_sheared_cube};
use snapcube::noise::derive_seed;
use snapcube::phantoms::{glyph_layer, sample_glyph_dataset, Canvas, GlyphSample, Split};
use snapcube::recon::baseline;
use snapcube::simulate::{random_aperture, simulate};
use snapcube::{DepthGrid, SpectralGrid};

use super::{display_path, ensure_dir, write_manifest};
use crate::config::{self, DatasetConfig, InputMode};
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Dataset config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: usize,
    pub split: Split,
    pub text: String,
    pub offset_px: [i64; 2],
    pub rotation_deg: f64,
    pub scale: usize,
    pub z_um: f64,
    /// Decoded depth bin nearest to `z_um`.
    pub depth_bin: usize,
    pub photon_scale: f64,
    pub noise_seed: u64,
    pub input: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub input_mode: InputMode,
    /// Targets are the true AC cube in the camera frame times this factor.
    pub target_scale: f64,
    /// Shape of every input and target container, `(x, y_camera, lambda)`.
    pub sheared_shape: [usize; 3],
    pub train_count: usize,
    pub validation_count: usize,
    pub spectral_grid: SpectralGrid,
    pub depth_grid: DepthGrid,
    pub aperture: String,
    pub config: DatasetConfig,
    pub samples: Vec<SampleEntry>,
}

/// Scale that maps the largest attainable AC amplitude `2·max S·√(I_r·R)`
/// with `R = 1` to 0.9.
pub fn target_scale(max_envelope: f64, reference_intensity: f64) -> f64 {
    0.9 / (2.0 * max_envelope * reference_intensity.sqrt())
}

pub fn run(args: &DatasetArgs) -> CliResult<()> {
    let cfg: DatasetConfig = config::load(&args.config)?;
    if cfg.camera.oversample_factor != 1 {
        return Err(CliError::Config(
            "dataset glyphs are rendered at camera resolution; set camera.oversample_factor = 1".into(),
        ));
    }
    let pitch = cfg.camera.pixel_pitch_um;
    let canvas = Canvas::new(cfg.nx, cfg.ny, pitch)?;
    let samples = sample_glyph_dataset(&canvas, &cfg.glyphs)?;
    let grid = cfg.source.grid()?;
    let source = cfg.source.spectrum(grid)?;
    let ap = &cfg.aperture;
    let aperture = random_aperture(cfg.nx, cfg.ny, ap.open_fraction, ap.seed, ap.dispersion_step_px)?;
    let max_env = source.envelope().iter().fold(0.0f64, |m, &v| m.max(v));
    let scale = target_scale(max_env, cfg.source.reference_intensity);
    let depth = DepthGrid::decoded_from(&grid);

    ensure_dir(&args.out.join("samples"))?;
    save_aperture(&args.out.join("aperture"), &aperture)?;
    let entries = samples
        .par_iter()
        .map(|s| write_sample(&cfg, &canvas, &aperture, &source, scale, &depth, s, &args.out))
        .collect::<CliResult<Vec<_>>>()?;

    let (nl, ny_cam) = (grid.num_channels(), aperture.measurement_width(grid.num_channels()));
    let count = |split| entries.iter().filter(|e| e.split == split).count();
    let manifest = DatasetManifest {
        input_mode: cfg.input_mode,
        target_scale: scale,
        sheared_shape: [cfg.nx, ny_cam, nl],
        train_count: count(Split::Train),
        validation_count: count(Split::Validation),
        spectral_grid: grid,
        depth_grid: depth,
        aperture: "aperture".into(),
        config: cfg,
        samples: entries,
    };
    write_manifest(&args.out, &manifest)?;
    println!(
        "{} training and {} validation samples -> {}",
        manifest.train_count,
        manifest.validation_count,
        display_path(&args.out)
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn write_sample(
    cfg: &DatasetConfig,
    canvas: &Canvas,
    aperture: &snapcube::CodedAperture,
    source: &snapcube::SourceSpectrum,
    scale: f64,
    depth: &DepthGrid,
    s: &GlyphSample,
    out: &Path,
) -> CliResult<SampleEntry> {
    let volume = glyph_layer(canvas, &s.text, &s.pose)?;
    let seed = derive_seed(cfg.noise.seed, s.id as u64);
    let fc = cfg.noise.forward_config(&cfg.camera, cfg.nx, cfg.ny, seed)?;
    let sim = simulate(&volume, source, aperture, &fc)?;
    let input = match cfg.input_mode {
        InputMode::PsiNormalized => baseline(&sim.operator, sim.y_ac.view())?,
        InputMode::Raw => sim.operator.adjoint_sheared(sim.y_ac.view())?,
    };
    let target = &sim.ac_sheared * scale;
    let step = aperture.dispersion_step();
    let grid = source.grid();
    let input_name = format!("samples/{:05}_input", s.id);
    let target_name = format!("samples/{:05}_target", s.id);
    save_sheared_cube(&out.join(&input_name), &input, grid, step)?;
    save_sheared_cube(&out.join(&target_name), &target, grid, step)?;
    Ok(SampleEntry {
        id: s.id,
        split: s.split,
        text: s.text.clone(),
        offset_px: [s.pose.offset_px.0, s.pose.offset_px.1],
        rotation_deg: s.pose.rotation_deg,
        scale: s.pose.scale,
        z_um: s.pose.z_um,
        depth_bin: depth.nearest_plane(s.pose.z_um),
        photon_scale: sim.photon_scale,
        noise_seed: seed,
        input: input_name,
        target: target_name,
    })
}
