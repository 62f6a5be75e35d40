//! Matrix-free compressive sampling operator: coded aperture, dispersive
//! shear and spectral summation onto a 2D camera frame.
//!
//! Channel `k` of a cube `X` (shape `(nx, ny, nl)`) is multiplied by the
//! aperture, translated by `offset(k)` columns and summed onto the camera:
//!
//! ```text
//! Y(i, j') = Σ_k X_k(i, j'-offset(k)) · M*(i, j'-offset(k))
//!          = Σ_k X'_k(i, j') · M_k(i, j')
//! ```
//!
//! where `X'` is the sheared cube of width `ny + |step|·(nl-1)` and `M_k`
//! the translated aperture. Stacking `vec(X'_k)` gives the block form
//! `Φ = [D_1, …, D_nl]`, `D_k = Diag(vec(M_k))`, so `ΦΦᵀ` is diagonal.
//! The dense matrix is only built by [`SensingOperator::dense_oracle`].

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis, Zip};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::CodedAperture;

/// Channel count above which per-pixel sums switch to compensated summation.
pub const COMPENSATED_SUM_THRESHOLD: usize = 256;

/// Size guard on the dense oracle: at most this many cube elements.
pub const DENSE_ORACLE_MAX_ELEMENTS: usize = 10_000;
/// Size guard on the dense oracle: at most this many matrix entries.
pub const DENSE_ORACLE_MAX_ENTRIES: usize = 1 << 26;

/// Neumaier-compensated accumulator.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

#[derive(Debug, Clone)]
pub struct SensingOperator {
    aperture: CodedAperture,
    nx: usize,
    ny: usize,
    nl: usize,
    width: usize,
    offsets: Vec<usize>,
}

impl SensingOperator {
    pub fn new(aperture: CodedAperture, num_channels: usize) -> Result<Self> {
        if num_channels == 0 {
            return Err(Error::param("num_channels", "must be at least 1"));
        }
        let (nx, ny) = aperture.dims();
        let width = aperture.measurement_width(num_channels);
        let offsets = (0..num_channels).map(|k| aperture.channel_offset(k, num_channels)).collect();
        Ok(Self {
            aperture,
            nx,
            ny,
            nl: num_channels,
            width,
            offsets,
        })
    }

    pub fn aperture(&self) -> &CodedAperture {
        &self.aperture
    }

    /// Unsheared cube dimensions `(nx, ny, nl)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nl)
    }

    /// Camera frame dimensions `(nx, ny + |step|·(nl-1))`.
    pub fn measurement_dims(&self) -> (usize, usize) {
        (self.nx, self.width)
    }

    /// Sheared cube dimensions `(nx, width, nl)`.
    pub fn sheared_dims(&self) -> (usize, usize, usize) {
        (self.nx, self.width, self.nl)
    }

    pub fn channel_offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    /// Object column seen by channel `k` at camera column `jp`, if any.
    #[inline]
    pub fn source_column(&self, jp: usize, k: usize) -> Option<usize> {
        jp.checked_sub(self.offsets[k]).filter(|&j| j < self.ny)
    }

    /// Camera-frame code `M_k(i, j')`.
    #[inline]
    pub fn mask_value(&self, i: usize, jp: usize, k: usize) -> f64 {
        match self.source_column(jp, k) {
            Some(j) => self.aperture.pattern()[[i, j]],
            None => 0.0,
        }
    }

    fn check_cube(&self, what: &str, dim: (usize, usize, usize), expected: (usize, usize, usize)) -> Result<()> {
        if dim != expected {
            return Err(Error::dims(what, expected, dim));
        }
        Ok(())
    }

    fn check_image(&self, y: &ArrayView2<'_, f64>) -> Result<()> {
        if y.dim() != self.measurement_dims() {
            return Err(Error::dims("measurement", self.measurement_dims(), y.dim()));
        }
        Ok(())
    }

    #[inline]
    fn accumulate(&self, mut term: impl FnMut(usize) -> Option<f64>) -> f64 {
        if self.nl > COMPENSATED_SUM_THRESHOLD {
            let mut acc = CompensatedSum::default();
            for k in 0..self.nl {
                if let Some(v) = term(k) {
                    acc.add(v);
                }
            }
            acc.value()
        } else {
            let mut acc = 0.0;
            for k in 0..self.nl {
                if let Some(v) = term(k) {
                    acc += v;
                }
            }
            acc
        }
    }

    /// `Φ` applied to an unsheared cube of shape `(nx, ny, nl)`.
    pub fn forward(&self, cube: ArrayView3<'_, f64>) -> Result<Array2<f64>> {
        self.check_cube("forward input", cube.dim(), self.dims())?;
        let mask = self.aperture.pattern();
        let mut y = Array2::zeros(self.measurement_dims());
        y.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut row)| {
            for (jp, out) in row.iter_mut().enumerate() {
                *out = self.accumulate(|k| self.source_column(jp, k).map(|j| cube[[i, j, k]] * mask[[i, j]]));
            }
        });
        Ok(y)
    }

    /// `Φ` applied to a sheared cube of shape `(nx, width, nl)`.
    pub fn forward_sheared(&self, sheared: ArrayView3<'_, f64>) -> Result<Array2<f64>> {
        self.check_cube("sheared forward input", sheared.dim(), self.sheared_dims())?;
        let mask = self.aperture.pattern();
        let mut y = Array2::zeros(self.measurement_dims());
        y.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut row)| {
            for (jp, out) in row.iter_mut().enumerate() {
                *out = self.accumulate(|k| self.source_column(jp, k).map(|j| sheared[[i, jp, k]] * mask[[i, j]]));
            }
        });
        Ok(y)
    }

    /// `Φᵀ` returned in the unsheared frame: `X_k(i, j) = M*(i, j)·y(i, j+offset(k))`.
    pub fn adjoint(&self, y: ArrayView2<'_, f64>) -> Result<Array3<f64>> {
        self.check_image(&y)?;
        let mask = self.aperture.pattern();
        let mut x = Array3::zeros(self.dims());
        x.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut plane)| {
            for j in 0..self.ny {
                let m = mask[[i, j]];
                for k in 0..self.nl {
                    plane[[j, k]] = m * y[[i, j + self.offsets[k]]];
                }
            }
        });
        Ok(x)
    }

    /// `Φᵀ` returned in the sheared frame: `X'_k(i, j') = M_k(i, j')·y(i, j')`.
    pub fn adjoint_sheared(&self, y: ArrayView2<'_, f64>) -> Result<Array3<f64>> {
        self.check_image(&y)?;
        let mut x = Array3::zeros(self.sheared_dims());
        self.adjoint_sheared_into(y, &mut x);
        Ok(x)
    }

    /// In-place variant used by the solver; `out` must have sheared dims.
    pub(crate) fn adjoint_sheared_into(&self, y: ArrayView2<'_, f64>, out: &mut Array3<f64>) {
        let mask = self.aperture.pattern();
        out.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut plane)| {
            for jp in 0..self.width {
                let yv = y[[i, jp]];
                for k in 0..self.nl {
                    plane[[jp, k]] = match self.source_column(jp, k) {
                        Some(j) => mask[[i, j]] * yv,
                        None => 0.0,
                    };
                }
            }
        });
    }

    /// Diagonal of `ΦΦᵀ`: `ψ(i, j') = Σ_k M_k(i, j')²`.
    pub fn phi_phit_diag(&self) -> Array2<f64> {
        let mask = self.aperture.pattern();
        let mut psi = Array2::zeros(self.measurement_dims());
        Zip::indexed(&mut psi).par_for_each(|(i, jp), out| {
            *out = self.accumulate(|k| self.source_column(jp, k).map(|j| mask[[i, j]] * mask[[i, j]]));
        });
        psi
    }

    /// Translates each channel of an unsheared cube into the camera frame,
    /// zero-padding outside its footprint.
    pub fn shear(&self, cube: ArrayView3<'_, f64>) -> Result<Array3<f64>> {
        self.check_cube("shear input", cube.dim(), self.dims())?;
        let mut out = Array3::zeros(self.sheared_dims());
        for k in 0..self.nl {
            let off = self.offsets[k];
            out.slice_mut(ndarray::s![.., off..off + self.ny, k])
                .assign(&cube.slice(ndarray::s![.., .., k]));
        }
        Ok(out)
    }

    /// Explicit `Φ` of shape `[nx·width] × [nx·width·nl]`.
    ///
    /// Rows index camera pixels `i·width + j'`; columns index the stacked
    /// sheared channels `k·(nx·width) + i·width + j'`. Test use only.
    pub fn dense_oracle(&self) -> Result<Array2<f64>> {
        let elements = self.nx * self.ny * self.nl;
        let n = self.nx * self.width;
        if elements > DENSE_ORACLE_MAX_ELEMENTS {
            return Err(Error::SizeGuard {
                detail: format!("{elements} cube elements exceed {DENSE_ORACLE_MAX_ELEMENTS}"),
            });
        }
        if n * n * self.nl > DENSE_ORACLE_MAX_ENTRIES {
            return Err(Error::SizeGuard {
                detail: format!("{} matrix entries exceed {DENSE_ORACLE_MAX_ENTRIES}", n * n * self.nl),
            });
        }
        let mut phi = Array2::zeros((n, n * self.nl));
        for k in 0..self.nl {
            let shifted = self.aperture.shifted(k, self.nl);
            for (r, &m) in shifted.iter().enumerate() {
                phi[[r, k * n + r]] = m;
            }
        }
        Ok(phi)
    }

    /// Stacks a sheared cube into the dense oracle's column ordering.
    pub fn vectorize_sheared(&self, sheared: ArrayView3<'_, f64>) -> Vec<f64> {
        let mut v = Vec::with_capacity(sheared.len());
        for k in 0..self.nl {
            v.extend(sheared.slice(ndarray::s![.., .., k]).iter());
        }
        v
    }

    /// Inverse of [`vectorize_sheared`](Self::vectorize_sheared).
    pub fn unvectorize_sheared(&self, v: &[f64]) -> Result<Array3<f64>> {
        let n = self.nx * self.width;
        if v.len() != n * self.nl {
            return Err(Error::dims("stacked sheared vector", n * self.nl, v.len()));
        }
        let mut out = Array3::zeros(self.sheared_dims());
        for k in 0..self.nl {
            for (dst, &src) in out.slice_mut(ndarray::s![.., .., k]).iter_mut().zip(&v[k * n..(k + 1) * n]) {
                *dst = src;
            }
        }
        Ok(out)
    }
}
