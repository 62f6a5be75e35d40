use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use snapcube::interferometer::axial_resolution;
use snapcube::io::load_cube;
use snapcube::metrics::{axial_psf_fwhm, lateral_resolution, psnr, rmse, sensitivity_db, write_report, LateralResolution, MetricRow};
use snapcube::{decode_depth, DepthVolume};

use super::decode::load_any_cube;
use super::reconstruct::ReconManifest;
use super::simulate::SimManifest;
use super::{display_path, ensure_dir, read_manifest, resolve, write_csv, write_manifest};
use crate::config::PhantomKind;
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct CharacterizeArgs {
    /// Directory written by `reconstruct`; repeat for a compression-ratio sweep.
    #[arg(long = "recon", required = true)]
    pub recons: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizeManifest {
    pub recons: Vec<String>,
    pub metrics: String,
    pub profiles: Vec<String>,
    /// Metrics that could not be computed, with the reason.
    pub skipped: Vec<String>,
}

fn plane_at(dv: &DepthVolume, z_um: f64) -> usize {
    dv.depth.nearest_plane(z_um)
}

pub fn run(args: &CharacterizeArgs) -> CliResult<()> {
    ensure_dir(&args.out)?;
    ensure_dir(&args.out.join("profiles"))?;
    let mut rows = Vec::new();
    let mut profiles = Vec::new();
    let mut skipped = Vec::new();

    for (k, dir) in args.recons.iter().enumerate() {
        let rm: ReconManifest = read_manifest(dir)?;
        let sim_dir = resolve(dir, &rm.input);
        let sm: SimManifest = read_manifest(&sim_dir)?;
        let cr = rm.compression_ratio;
        let cube = load_any_cube(&dir.join(&rm.files.cube))?;
        let base = load_cube(&dir.join(&rm.files.baseline))?;
        let truth = load_cube(&sim_dir.join(&sm.files.truth_ac))?;
        if truth.dims() != cube.dims() {
            return Err(CliError::Config(format!(
                "{}: reconstruction {:?} and truth {:?} differ in shape",
                display_path(dir),
                cube.dims(),
                truth.dims()
            )));
        }
        let dv = decode_depth(&cube)?;
        let dv_truth = decode_depth(&truth)?;
        let dv_base = decode_depth(&base)?;

        rows.push(MetricRow::new(cr, "psnr", psnr(cube.data(), truth.data())?, "dB"));
        rows.push(MetricRow::new(cr, "baseline_psnr", psnr(base.data(), truth.data())?, "dB"));
        rows.push(MetricRow::new(cr, "rmse", rmse(cube.data(), truth.data())?, "intensity"));
        rows.push(MetricRow::new(cr, "final_residual", rm.final_residual, "1"));
        rows.push(MetricRow::new(cr, "iterations", rm.iterations as f64, "1"));
        let peak = dv.peak_plane();
        rows.push(MetricRow::new(cr, "peak_depth", dv.depth.plane_z_um(peak), "um"));
        rows.push(MetricRow::new(
            cr,
            "truth_peak_depth",
            dv_truth.depth.plane_z_um(dv_truth.peak_plane()),
            "um",
        ));

        let ph = &sm.config.phantom;
        let label = format!("{} cr {cr}", display_path(dir));
        match ph.kind {
            PhantomKind::Mirror => {
                let theory = axial_resolution(sm.config.source.center_wavelength_nm, sm.config.source.fwhm_bandwidth_nm)?;
                rows.push(MetricRow::new(cr, "axial_fwhm_theory", theory, "um"));
                match axial_psf_fwhm(&dv) {
                    Ok(w) => rows.push(MetricRow::new(cr, "axial_fwhm", w, "um")),
                    Err(e) => skipped.push(format!("{label}: axial_fwhm: {e}")),
                }
                match sensitivity_db(&dv) {
                    Ok(s) => rows.push(MetricRow::new(cr, "sensitivity", s, "dB")),
                    Err(e) => skipped.push(format!("{label}: sensitivity: {e}")),
                }
            }
            PhantomKind::Bars => {
                let groups = ph.bar_groups()?;
                for (name, vol) in [("lateral_resolution", &dv), ("baseline_lateral_resolution", &dv_base)] {
                    let m = plane_at(vol, ph.z_um);
                    let period = match lateral_resolution(vol.data.index_axis(ndarray::Axis(2), m), &groups)? {
                        LateralResolution::Resolved(p) => p as f64,
                        LateralResolution::Unresolved => f64::NAN,
                    };
                    rows.push(MetricRow::new(cr, name, period, "px"));
                }
            }
            PhantomKind::Nok | PhantomKind::Glyph | PhantomKind::DoubleLayer => {}
        }

        let name = format!("profiles/{k:02}_cr{cr:03}_axial.csv");
        let (p, pt, pb) = (dv.axial_profile(), dv_truth.axial_profile(), dv_base.axial_profile());
        write_csv(
            &args.out.join(&name),
            &["plane", "depth_um", "recon", "truth", "baseline"],
            (0..p.len()).map(|m| {
                vec![
                    m.to_string(),
                    dv.depth.plane_z_um(m).to_string(),
                    p[m].to_string(),
                    pt[m].to_string(),
                    pb[m].to_string(),
                ]
            }),
        )?;
        profiles.push(name);
    }

    let path = args.out.join("metrics.csv");
    let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    write_report(std::io::BufWriter::new(file), &rows)?;
    for s in &skipped {
        eprintln!("warning: skipped {s}");
    }
    write_manifest(
        &args.out,
        &CharacterizeManifest {
            recons: args.recons.iter().map(|p| display_path(p)).collect(),
            metrics: "metrics.csv".into(),
            profiles,
            skipped,
        },
    )?;
    println!(
        "{} metric rows over {} reconstructions -> {}",
        rows.len(),
        args.recons.len(),
        display_path(&args.out)
    );
    Ok(())
}
