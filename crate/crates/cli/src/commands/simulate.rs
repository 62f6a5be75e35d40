use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use snapcube::io::{save_aperture, save_cube, save_measurement, save_volume, write_container, Header};
use snapcube::simulate::{random_aperture, simulate};
use snapcube::{CubeKind, SpectralCube, SpectralGrid};

use super::{display_path, ensure_dir, write_manifest};
use crate::config::{self, SimulateConfig};
use crate::error::CliResult;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Container stems written by one simulation, relative to its directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimFiles {
    pub measurement: String,
    pub y_ac: String,
    pub truth_ac: String,
    pub aperture: String,
    pub volume: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimManifest {
    pub compression_ratio: usize,
    /// Electrons per unit intensity used for the frames.
    pub photon_scale: f64,
    pub axial_fov_um: f64,
    pub depth_interval_um: f64,
    pub spectral_grid: SpectralGrid,
    pub files: SimFiles,
    /// Effective configuration of this run.
    pub config: SimulateConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub compression_ratios: Vec<usize>,
    pub runs: Vec<String>,
    pub config: SimulateConfig,
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    let cfg: SimulateConfig = config::load(&args.config)?;
    ensure_dir(&args.out)?;
    if cfg.sweep.compression_ratios.is_empty() {
        return simulate_one(&cfg, &args.out);
    }
    let mut runs = Vec::new();
    for &cr in &cfg.sweep.compression_ratios {
        let grid = cfg.source.grid_with_channels(cr)?;
        let mut run_cfg = cfg.clone();
        run_cfg.source.num_channels = cr;
        run_cfg.source.channel_spacing_nm = grid.channel_spacing_nm();
        run_cfg.sweep.compression_ratios.clear();
        let name = format!("cr_{cr:03}");
        simulate_one(&run_cfg, &args.out.join(&name))?;
        runs.push(name);
    }
    write_manifest(
        &args.out,
        &SweepManifest {
            compression_ratios: cfg.sweep.compression_ratios.clone(),
            runs,
            config: cfg,
        },
    )
}

pub fn simulate_one(cfg: &SimulateConfig, out: &Path) -> CliResult<()> {
    ensure_dir(out)?;
    let grid = cfg.source.grid()?;
    let source = cfg.source.spectrum(grid)?;
    let ph = &cfg.phantom;
    let volume = ph.volume(cfg.camera.pixel_pitch_um, cfg.camera.oversample_factor)?;
    let ap = &cfg.aperture;
    let aperture = random_aperture(ph.nx, ph.ny, ap.open_fraction, ap.seed, ap.dispersion_step_px)?;
    let fc = cfg.noise.forward_config(&cfg.camera, ph.nx, ph.ny, cfg.noise.seed)?;
    let sim = simulate(&volume, &source, &aperture, &fc)?;

    let files = SimFiles {
        measurement: "measurement".into(),
        y_ac: "y_ac".into(),
        truth_ac: "truth_ac".into(),
        aperture: "aperture".into(),
        volume: "volume".into(),
    };
    save_measurement(&out.join(&files.measurement), &sim.measurement)?;
    let mut h = Header::new("ac_measurement", &[], &["x", "y_camera"], "intensity");
    h.spectral_grid = Some(grid);
    h.dispersion_step = Some(ap.dispersion_step_px);
    write_container(&out.join(&files.y_ac), sim.y_ac.view(), h)?;
    let truth = SpectralCube::new(sim.cubes.ac.data().to_owned(), grid, CubeKind::AcOnly)?;
    save_cube(&out.join(&files.truth_ac), &truth)?;
    save_aperture(&out.join(&files.aperture), &sim.aperture)?;
    save_volume(&out.join(&files.volume), &volume)?;

    let manifest = SimManifest {
        compression_ratio: grid.num_channels(),
        photon_scale: sim.photon_scale,
        axial_fov_um: grid.axial_fov_um(),
        depth_interval_um: grid.depth_interval_um(),
        spectral_grid: grid,
        files,
        config: cfg.clone(),
    };
    write_manifest(out, &manifest)?;
    println!(
        "simulated {}x{}x{} -> {} (photon scale {:.4e})",
        ph.nx,
        ph.ny,
        grid.num_channels(),
        display_path(out),
        sim.photon_scale
    );
    Ok(())
}
