//! Separable orthonormal Haar transform of 3D cubes and soft thresholding.
//!
//! The 3D basis is the Kronecker product of three multilevel 1D Haar
//! transforms, one per axis. Each 1D level maps pairs to
//! `((a+b)/√2, (a-b)/√2)`, approximations first; an odd trailing sample is
//! carried into the approximation band unchanged, so every length is
//! handled without padding and the transform stays exactly orthonormal.

use ndarray::{Array, Array3, ArrayView, ArrayView3, Axis, Dimension, Zip};
use std::f64::consts::FRAC_1_SQRT_2;

/// Multilevel Haar transform applied along all three axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HaarWavelet {
    pub levels: usize,
}

impl Default for HaarWavelet {
    fn default() -> Self {
        Self { levels: 2 }
    }
}

/// Band lengths visited by the forward transform of a length-`n` signal.
fn level_lengths(n: usize, levels: usize) -> Vec<usize> {
    let mut lens = Vec::with_capacity(levels);
    let mut len = n;
    for _ in 0..levels {
        if len < 2 {
            break;
        }
        lens.push(len);
        len = len / 2 + len % 2;
    }
    lens
}

fn forward_1d(v: &mut [f64], levels: usize, scratch: &mut [f64]) {
    for len in level_lengths(v.len(), levels) {
        let half = len / 2;
        let napprox = half + len % 2;
        for p in 0..half {
            let (a, b) = (v[2 * p], v[2 * p + 1]);
            scratch[p] = (a + b) * FRAC_1_SQRT_2;
            scratch[napprox + p] = (a - b) * FRAC_1_SQRT_2;
        }
        if len % 2 == 1 {
            scratch[half] = v[len - 1];
        }
        v[..len].copy_from_slice(&scratch[..len]);
    }
}

fn inverse_1d(v: &mut [f64], levels: usize, scratch: &mut [f64]) {
    for len in level_lengths(v.len(), levels).into_iter().rev() {
        let half = len / 2;
        let napprox = half + len % 2;
        for p in 0..half {
            let (a, d) = (v[p], v[napprox + p]);
            scratch[2 * p] = (a + d) * FRAC_1_SQRT_2;
            scratch[2 * p + 1] = (a - d) * FRAC_1_SQRT_2;
        }
        if len % 2 == 1 {
            scratch[len - 1] = v[half];
        }
        v[..len].copy_from_slice(&scratch[..len]);
    }
}

fn along_axes(cube: &mut Array3<f64>, levels: usize, inverse: bool) {
    for axis in 0..3 {
        let n = cube.len_of(Axis(axis));
        if n < 2 {
            continue;
        }
        Zip::from(cube.lanes_mut(Axis(axis))).par_for_each(|mut lane| {
            let mut buf: Vec<f64> = lane.iter().cloned().collect();
            let mut scratch = vec![0.0; n];
            if inverse {
                inverse_1d(&mut buf, levels, &mut scratch);
            } else {
                forward_1d(&mut buf, levels, &mut scratch);
            }
            lane.iter_mut().zip(buf).for_each(|(d, s)| *d = s);
        });
    }
}

impl HaarWavelet {
    pub fn new(levels: usize) -> Self {
        Self { levels }
    }

    pub fn forward(&self, cube: ArrayView3<'_, f64>) -> Array3<f64> {
        let mut c = cube.to_owned();
        along_axes(&mut c, self.levels, false);
        c
    }

    pub fn inverse(&self, coefficients: ArrayView3<'_, f64>) -> Array3<f64> {
        let mut c = coefficients.to_owned();
        along_axes(&mut c, self.levels, true);
        c
    }

    /// Length of the coarsest approximation band along an axis of length `n`.
    pub fn approx_len(&self, n: usize) -> usize {
        level_lengths(n, self.levels).last().map(|&len| len / 2 + len % 2).unwrap_or(n)
    }
}

/// `sign(c)·max(|c| − T, 0)`, the proximal map of `T·‖·‖₁`.
#[inline]
pub fn shrink(c: f64, threshold: f64) -> f64 {
    let m = c.abs() - threshold;
    if m > 0.0 {
        m.copysign(c)
    } else {
        0.0
    }
}

pub fn soft_threshold<D: Dimension>(c: ArrayView<'_, f64, D>, threshold: f64) -> Array<f64, D> {
    c.mapv(|v| shrink(v, threshold))
}

pub fn soft_threshold_inplace<D: Dimension>(c: &mut Array<f64, D>, threshold: f64) {
    c.par_mapv_inplace(|v| shrink(v, threshold));
}
