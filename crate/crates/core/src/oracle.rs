//! Self-checks of the sensing operator and the x-update against dense
//! constructions, for small problem sizes.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recon::x_update;
use crate::sensing::SensingOperator;
use crate::types::CodedAperture;

pub const ADJOINT_TOLERANCE: f64 = 1e-12;
pub const DENSE_MAX_ULPS: f64 = 4.0;
pub const X_UPDATE_TOLERANCE: f64 = 1e-10;

/// Outcome of one check; `value` is compared against `threshold` with `<=`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub check: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl OracleCheck {
    fn new(check: &str, value: f64, threshold: f64) -> Self {
        Self {
            check: check.into(),
            value,
            threshold,
            pass: value <= threshold,
        }
    }
}

/// Distance in units in the last place, counted across zero.
pub fn ulp_distance(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    let key = |x: f64| {
        let bits = x.to_bits() as i64;
        if bits < 0 {
            i64::MIN - bits
        } else {
            bits
        }
    };
    key(a).abs_diff(key(b))
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_iterator(a.nrows(), a.ncols(), a.iter().copied())
}

/// Runs the adjoint, dense-oracle, ψ and x-update checks on a random binary
/// aperture of the given dimensions.
pub fn run_operator_checks(dims: (usize, usize, usize), dispersion_step: isize, seed: u64) -> Result<Vec<OracleCheck>> {
    let (nx, ny, nl) = dims;
    if nx == 0 || ny == 0 || nl == 0 {
        return Err(Error::param("oracle dims", "all dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = Array2::from_shape_simple_fn((nx, ny), || if rng.random::<bool>() { 1.0 } else { 0.0 });
    let op = SensingOperator::new(CodedAperture::new(mask, dispersion_step)?, nl)?;
    let mut unit = |shape: (usize, usize, usize)| Array3::from_shape_simple_fn(shape, || rng.random::<f64>());
    let x = unit(dims);
    let zt = unit(op.sheared_dims()) - 0.5;
    let mdims = op.measurement_dims();
    let y = Array2::from_shape_simple_fn(mdims, || rng.random::<f64>());

    let mut checks = Vec::new();
    let lhs = (&op.forward(x.view())? * &y).sum();
    let rhs = (&x * &op.adjoint(y.view())?).sum();
    let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    checks.push(OracleCheck::new("adjoint_identity_rel_err", rel, ADJOINT_TOLERANCE));

    let dense = to_dmatrix(&op.dense_oracle()?);
    let xs = DVector::from_vec(op.vectorize_sheared(op.shear(x.view())?.view()));
    let fwd = op.forward(x.view())?;
    let worst_fwd = fwd
        .iter()
        .zip((&dense * &xs).iter())
        .map(|(a, b)| ulp_distance(*a, *b))
        .max()
        .unwrap_or(0);
    checks.push(OracleCheck::new("dense_forward_ulps", worst_fwd as f64, DENSE_MAX_ULPS));

    let yv = DVector::from_iterator(y.len(), y.iter().copied());
    let adj = op.vectorize_sheared(op.adjoint_sheared(y.view())?.view());
    let worst_adj = adj
        .iter()
        .zip((dense.transpose() * &yv).iter())
        .map(|(a, b)| ulp_distance(*a, *b))
        .max()
        .unwrap_or(0);
    checks.push(OracleCheck::new("dense_adjoint_ulps", worst_adj as f64, DENSE_MAX_ULPS));

    let psi = op.phi_phit_diag();
    let mismatches = psi
        .iter()
        .enumerate()
        .filter(|&(r, &p)| dense.row(r).iter().map(|v| v * v).sum::<f64>() != p)
        .count();
    checks.push(OracleCheck::new("psi_diag_mismatches", mismatches as f64, 0.0));

    let (eta, tau) = (rng.random_range(0.01..2.0), rng.random_range(0.01..2.0));
    let xu = x_update(&op, y.view(), zt.view(), eta, tau)?;
    let n = dense.ncols();
    let a = dense.transpose() * &dense + DMatrix::identity(n, n) * (eta + tau);
    let b = dense.transpose() * &yv + DVector::from_vec(op.vectorize_sheared(zt.view()));
    let solved = a
        .cholesky()
        .ok_or_else(|| Error::Degenerate("normal matrix is not positive definite".into()))?
        .solve(&b);
    let xv = DVector::from_vec(op.vectorize_sheared(xu.view()));
    let rel = (&xv - &solved).norm() / solved.norm().max(f64::MIN_POSITIVE);
    checks.push(OracleCheck::new("x_update_rel_err", rel, X_UPDATE_TOLERANCE));
    Ok(checks)
}
