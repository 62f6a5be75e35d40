use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use snapcube::io::{export_depth_stack, load_cube, load_sheared_cube, read_header, save_depth_volume};
use snapcube::{decode_depth, unshear, CubeKind, DepthGrid, SpectralCube};

use super::{display_path, ensure_dir, write_csv, write_manifest};
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Spectral cube container (`spectral_cube`, or `sheared_cube` in the camera frame).
    #[arg(long)]
    pub cube: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeManifest {
    pub cube: String,
    pub cube_container: String,
    pub peak_plane: usize,
    pub peak_depth_um: f64,
    pub depth_grid: DepthGrid,
    pub volume: String,
    pub stack: String,
    pub axial_profile: String,
}

/// Loads either container kind as an unsheared cube.
pub fn load_any_cube(path: &std::path::Path) -> CliResult<SpectralCube> {
    let header = read_header(path)?;
    match header.kind.as_str() {
        "spectral_cube" => Ok(load_cube(path)?),
        "sheared_cube" => {
            let (data, grid, step) = load_sheared_cube(path)?;
            Ok(SpectralCube::new(unshear(data.view(), step)?, grid, CubeKind::AcOnly)?)
        }
        other => Err(CliError::Config(format!(
            "{} holds a `{other}` container; expected spectral_cube or sheared_cube",
            path.display()
        ))),
    }
}

pub fn run(args: &DecodeArgs) -> CliResult<()> {
    let cube = load_any_cube(&args.cube)?;
    if cube.kind() != CubeKind::AcOnly {
        eprintln!("warning: decoding a total-intensity cube; the DC terms land in the first depth bins");
    }
    let dv = decode_depth(&cube)?;
    ensure_dir(&args.out)?;
    save_depth_volume(&args.out.join("volume"), &dv)?;
    export_depth_stack(&args.out.join("stack"), &dv)?;
    let profile = dv.axial_profile();
    write_csv(
        &args.out.join("axial_profile.csv"),
        &["plane", "depth_um", "mean_amplitude"],
        profile
            .iter()
            .enumerate()
            .map(|(m, v)| vec![m.to_string(), dv.depth.plane_z_um(m).to_string(), v.to_string()]),
    )?;
    let peak = dv.peak_plane();
    let header = read_header(&args.cube)?;
    write_manifest(
        &args.out,
        &DecodeManifest {
            cube: display_path(&args.cube),
            cube_container: header.kind,
            peak_plane: peak,
            peak_depth_um: dv.depth.plane_z_um(peak),
            depth_grid: dv.depth,
            volume: "volume".into(),
            stack: "stack".into(),
            axial_profile: "axial_profile.csv".into(),
        },
    )?;
    println!(
        "decoded {} depth planes, peak at plane {} ({:.2} um) -> {}",
        dv.depth.num_planes(),
        peak,
        dv.depth.plane_z_um(peak),
        display_path(&args.out)
    );
    Ok(())
}
