//! Shared fixtures for the criterion benches.

use ndarray::{Array2, Array3};
use snapcube::simulate::random_aperture;
use snapcube::SensingOperator;

/// Operator on a half-open random aperture, a smooth test cube and its measurement.
pub fn problem(nx: usize, ny: usize, nl: usize) -> (SensingOperator, Array3<f64>, Array2<f64>) {
    let aperture = random_aperture(nx, ny, 0.5, 1, 1).expect("valid aperture");
    let op = SensingOperator::new(aperture, nl).expect("valid operator");
    let x = Array3::from_shape_fn((nx, ny, nl), |(i, j, k)| ((i * 7 + j * 3 + k) % 13) as f64 / 13.0);
    let y = op.forward(x.view()).expect("matching dims");
    (op, x, y)
}

/// Problem sizes used across benches: `(nx, ny, nl)`.
pub const SIZES: [(usize, usize, usize); 3] = [(32, 32, 8), (64, 64, 16), (128, 128, 32)];
