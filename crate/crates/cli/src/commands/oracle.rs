use std::path::PathBuf;

use clap::Args;

use snapcube::oracle::run_operator_checks;

use super::{display_path, ensure_dir, write_csv};
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Cube dimensions `nx,ny,nl`.
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 5, 3])]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    pub dispersion_step: isize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &OracleArgs) -> CliResult<()> {
    let [nx, ny, nl] = args.dims[..] else {
        return Err(CliError::Config(format!("--dims needs three values, got {:?}", args.dims)));
    };
    let checks = run_operator_checks((nx, ny, nl), args.dispersion_step, args.seed)?;
    ensure_dir(&args.out)?;
    write_csv(
        &args.out.join("report.csv"),
        &["check", "value", "threshold", "pass"],
        checks
            .iter()
            .map(|c| vec![c.check.clone(), c.value.to_string(), c.threshold.to_string(), c.pass.to_string()]),
    )?;
    for c in &checks {
        println!(
            "{:<26} {:>12.3e} <= {:<8.1e} {}",
            c.check,
            c.value,
            c.threshold,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.check.as_str()).collect();
    if !failed.is_empty() {
        return Err(CliError::Check(format!("oracle checks failed: {}", failed.join(", "))));
    }
    println!("all {} checks passed -> {}", checks.len(), display_path(&args.out));
    Ok(())
}
