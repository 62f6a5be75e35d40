use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use snapcube::interferometer::subtract_dc;
use snapcube::io::{load_aperture, load_measurement, load_state, save_cube, save_sheared_cube, save_state, write_residual_csv};
use snapcube::recon::{baseline, resume, solve};
use snapcube::{unshear, CubeKind, SensingOperator, SolverConfig, SpectralCube};

use super::simulate::SimManifest;
use super::{display_path, ensure_dir, read_manifest, write_manifest};
use crate::config;
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Directory written by `simulate`.
    #[arg(long)]
    pub input: PathBuf,
    /// Solver config (TOML); library defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from a saved solver state instead of the baseline.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconFiles {
    pub cube: String,
    pub sheared: String,
    pub baseline: String,
    pub state: String,
    pub residuals: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconManifest {
    /// Simulation directory as given on the command line.
    pub input: String,
    pub compression_ratio: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resumed_from: Option<String>,
    pub files: ReconFiles,
    pub solver: SolverConfig,
}

pub fn run(args: &ReconstructArgs) -> CliResult<()> {
    let cfg: SolverConfig = match &args.config {
        Some(p) => config::load(p)?,
        None => SolverConfig::default(),
    };
    cfg.validate()?;
    let sim: SimManifest = read_manifest(&args.input)?;
    let m = load_measurement(&args.input.join(&sim.files.measurement))?;
    let (Some(dc_r), Some(dc_s)) = (m.dc_reference(), m.dc_sample()) else {
        return Err(CliError::Config(
            "measurement lacks the reference-only and sample-only frames".into(),
        ));
    };
    if !sim.photon_scale.is_finite() || sim.photon_scale <= 0.0 {
        return Err(CliError::Config(format!(
            "photon scale {} in the simulation manifest",
            sim.photon_scale
        )));
    }
    let y = subtract_dc(m.image(), dc_r, dc_s)? / sim.photon_scale;
    let aperture = load_aperture(&args.input.join(&sim.files.aperture))?;
    let step = aperture.dispersion_step();
    let grid = sim.spectral_grid;
    let op = SensingOperator::new(aperture, grid.num_channels())?;

    ensure_dir(&args.out)?;
    let outcome = match &args.resume {
        Some(p) => resume(&op, y.view(), &cfg, load_state(p)?),
        None => solve(&op, y.view(), &cfg),
    };
    let state = match outcome {
        Ok(s) => s,
        Err(snapcube::Error::Divergence {
            iteration,
            residual,
            state,
        }) => {
            save_state(&args.out.join("diverged_state"), &state)?;
            return Err(snapcube::Error::Divergence {
                iteration,
                residual,
                state,
            }
            .into());
        }
        Err(e) => return Err(e.into()),
    };

    let files = ReconFiles {
        cube: "cube".into(),
        sheared: "sheared".into(),
        baseline: "baseline".into(),
        state: "state".into(),
        residuals: "residuals.csv".into(),
    };
    let cube = SpectralCube::new(unshear(state.x.view(), step)?, grid, CubeKind::AcOnly)?;
    save_cube(&args.out.join(&files.cube), &cube)?;
    save_sheared_cube(&args.out.join(&files.sheared), &state.x, &grid, step)?;
    let base = SpectralCube::new(unshear(baseline(&op, y.view())?.view(), step)?, grid, CubeKind::AcOnly)?;
    save_cube(&args.out.join(&files.baseline), &base)?;
    save_state(&args.out.join(&files.state), &state)?;
    let csv_path = args.out.join(&files.residuals);
    let csv = std::fs::File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    write_residual_csv(std::io::BufWriter::new(csv), &state)?;

    let final_residual = state.last_residual().unwrap_or(f64::NAN);
    write_manifest(
        &args.out,
        &ReconManifest {
            input: display_path(&args.input),
            compression_ratio: grid.num_channels(),
            iterations: state.iteration,
            converged: state.converged,
            final_residual,
            resumed_from: args.resume.as_deref().map(display_path),
            files,
            solver: cfg,
        },
    )?;
    println!(
        "reconstructed {} iterations (converged: {}), relative residual {:.3e} -> {}",
        state.iteration,
        state.converged,
        final_residual,
        display_path(&args.out)
    );
    Ok(())
}
