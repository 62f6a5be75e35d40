//! ADMM reconstruction with a TV prior and a wavelet sparsity prior.
//!
//! Solves
//!
//! ```text
//! min_x ½‖y − Φx‖² + λ_tv·TV(x) + ρ·‖Wx‖₁
//! ```
//!
//! in the sheared frame by splitting `x = p` (TV) and `x = z` (wavelet).
//! Each outer iteration runs, in order:
//!
//! ```text
//! x ← [ΦᵀΦ + (η+τ)I]⁻¹ (Φᵀy + η(p+v) + τ(z+u))
//! p ← prox_{(λ_tv/η)·TV}(x − v)
//! v ← v + p − x
//! c ← soft(W(x − u), T)          T = ρ/τ unless overridden
//! z ← W⁻¹c
//! u ← u + z − x
//! ```
//!
//! `ΦΦᵀ` is diagonal, so the x-update is exact and elementwise through the
//! Woodbury identity. Camera pixels no channel reaches (`ψ = 0`) carry no
//! data constraint; x there is set by the priors alone.

pub mod tv;
pub mod wavelet;

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensing::SensingOperator;
use crate::types::dispersion_offset;

pub use tv::{total_variation, tv_denoise};
pub use wavelet::{shrink, soft_threshold, soft_threshold_inplace, HaarWavelet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// λ_tv.
    pub tv_weight: f64,
    /// ρ.
    pub wavelet_weight: f64,
    /// Coupling of the wavelet split.
    pub tau: f64,
    /// Coupling of the TV split.
    pub eta: f64,
    /// Shrinkage threshold; `None` means `ρ/τ`.
    pub soft_threshold: Option<f64>,
    pub max_outer_iters: usize,
    pub tv_inner_iters: usize,
    pub wavelet_levels: usize,
    /// Stop once the relative residual changes by less than this between
    /// two iterations. Zero disables early stopping.
    pub tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tv_weight: 0.02,
            wavelet_weight: 0.002,
            tau: 1.0,
            eta: 1.0,
            soft_threshold: None,
            max_outer_iters: 100,
            tv_inner_iters: 20,
            wavelet_levels: 2,
            tolerance: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::param(name, "must be finite and non-negative"))
            }
        };
        nonneg("tv_weight", self.tv_weight)?;
        nonneg("wavelet_weight", self.wavelet_weight)?;
        nonneg("tolerance", self.tolerance)?;
        if let Some(t) = self.soft_threshold {
            nonneg("soft_threshold", t)?;
        }
        for (name, v) in [("tau", self.tau), ("eta", self.eta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, "must be positive"));
            }
        }
        for (name, v) in [("max_outer_iters", self.max_outer_iters), ("tv_inner_iters", self.tv_inner_iters)] {
            if v == 0 {
                return Err(Error::param(name, "must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        self.soft_threshold.unwrap_or(self.wavelet_weight / self.tau)
    }
}

/// ADMM iterates in the sheared frame plus convergence telemetry.
#[derive(Clone, PartialEq)]
pub struct SolverState {
    pub x: Array3<f64>,
    pub z: Array3<f64>,
    pub u: Array3<f64>,
    pub p: Array3<f64>,
    pub v: Array3<f64>,
    pub iteration: usize,
    /// `‖y − Φx‖/‖y‖` after each iteration.
    pub residual_history: Vec<f64>,
    /// `½‖y − Φx‖² + λ_tv·TV(x) + ρ‖Wx‖₁` after each iteration.
    pub objective_history: Vec<f64>,
    pub converged: bool,
}

impl std::fmt::Debug for SolverState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolverState")
            .field("dims", &self.x.dim())
            .field("iteration", &self.iteration)
            .field("last_residual", &self.residual_history.last())
            .field("converged", &self.converged)
            .finish()
    }
}

impl SolverState {
    /// `x⁰ = Φᵀ(y/ψ)`, `z⁰ = p⁰ = x⁰`, `u⁰ = v⁰ = 0`.
    pub fn initial(op: &SensingOperator, y: ArrayView2<'_, f64>) -> Result<Self> {
        let x = baseline(op, y)?;
        let zeros = Array3::zeros(x.dim());
        Ok(Self {
            z: x.clone(),
            p: x.clone(),
            u: zeros.clone(),
            v: zeros,
            x,
            iteration: 0,
            residual_history: Vec::new(),
            objective_history: Vec::new(),
            converged: false,
        })
    }

    pub fn last_residual(&self) -> Option<f64> {
        self.residual_history.last().copied()
    }
}

/// The ψ-normalised back-projection `Φᵀ(y/ψ)` with `y/ψ := 0` where `ψ = 0`.
pub fn baseline(op: &SensingOperator, y: ArrayView2<'_, f64>) -> Result<Array3<f64>> {
    let psi = op.phi_phit_diag();
    if y.dim() != psi.dim() {
        return Err(Error::dims("measurement", psi.dim(), y.dim()));
    }
    let normalised = Zip::from(&y).and(&psi).map_collect(|&y, &s| if s > 0.0 { y / s } else { 0.0 });
    op.adjoint_sheared(normalised.view())
}

/// Exact x-subproblem solver with ψ cached.
struct XUpdate<'a> {
    op: &'a SensingOperator,
    y: ArrayView2<'a, f64>,
    psi: Array2<f64>,
}

impl<'a> XUpdate<'a> {
    fn new(op: &'a SensingOperator, y: ArrayView2<'a, f64>) -> Result<Self> {
        let psi = op.phi_phit_diag();
        if y.dim() != psi.dim() {
            return Err(Error::dims("measurement", psi.dim(), y.dim()));
        }
        Ok(Self { op, y, psi })
    }

    /// `x = z̃/s + Φᵀ[(y − Φz̃/s) / (s + ψ)]` with `s = η + τ`.
    fn apply(&self, ztilde: &Array3<f64>, s: f64, out: &mut Array3<f64>) -> Result<()> {
        let a = ztilde / s;
        let phi_a = self.op.forward_sheared(a.view())?;
        let r = Zip::from(&self.y)
            .and(&phi_a)
            .and(&self.psi)
            .map_collect(|&y, &pa, &psi| (y - pa) / (s + psi));
        self.op.adjoint_sheared_into(r.view(), out);
        *out += &a;
        Ok(())
    }
}

/// Solves `[ΦᵀΦ + (η+τ)I] x = Φᵀy + z̃` for a sheared cube `x`.
pub fn x_update(op: &SensingOperator, y: ArrayView2<'_, f64>, ztilde: ArrayView3<'_, f64>, eta: f64, tau: f64) -> Result<Array3<f64>> {
    let s = eta + tau;
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::param("eta + tau", "must be positive"));
    }
    if ztilde.dim() != op.sheared_dims() {
        return Err(Error::dims("x-update target", op.sheared_dims(), ztilde.dim()));
    }
    let xu = XUpdate::new(op, y)?;
    let mut out = Array3::zeros(op.sheared_dims());
    xu.apply(&ztilde.to_owned(), s, &mut out)?;
    Ok(out)
}

fn norm(a: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn first_non_finite(a: &Array3<f64>) -> bool {
    a.iter().any(|v| !v.is_finite())
}

/// Runs the solver from its standard initialisation.
pub fn solve(op: &SensingOperator, y: ArrayView2<'_, f64>, cfg: &SolverConfig) -> Result<SolverState> {
    let state = SolverState::initial(op, y)?;
    resume(op, y, cfg, state)
}

/// Continues iterating from `state` until `cfg.max_outer_iters` total
/// iterations or convergence.
pub fn resume(op: &SensingOperator, y: ArrayView2<'_, f64>, cfg: &SolverConfig, mut state: SolverState) -> Result<SolverState> {
    cfg.validate()?;
    let dims = op.sheared_dims();
    for (name, a) in [("x", &state.x), ("z", &state.z), ("u", &state.u), ("p", &state.p), ("v", &state.v)] {
        if a.dim() != dims {
            return Err(Error::dims(format!("solver state `{name}`"), dims, a.dim()));
        }
    }
    if state.residual_history.len() != state.iteration || state.objective_history.len() != state.iteration {
        return Err(Error::param("solver state", "history length differs from iteration count"));
    }
    crate::types::check_finite("measurement", y.iter())?;

    let xu = XUpdate::new(op, y)?;
    let wavelet = HaarWavelet::new(cfg.wavelet_levels);
    let s = cfg.eta + cfg.tau;
    let tv_weight = cfg.tv_weight / cfg.eta;
    let threshold = cfg.threshold();
    let y_norm = norm(y.iter().copied());
    let mut ztilde = Array3::<f64>::zeros(dims);
    state.converged = false;

    while state.iteration < cfg.max_outer_iters {
        let it = state.iteration + 1;

        Zip::from(&mut ztilde)
            .and(&state.p)
            .and(&state.v)
            .and(&state.z)
            .and(&state.u)
            .par_for_each(|t, &p, &v, &z, &u| *t = cfg.eta * (p + v) + cfg.tau * (z + u));
        xu.apply(&ztilde, s, &mut state.x)?;
        if first_non_finite(&state.x) {
            return Err(Error::NonFiniteIterate {
                variable: "x".into(),
                iteration: it,
            });
        }

        state.p = tv_denoise((&state.x - &state.v).view(), tv_weight, cfg.tv_inner_iters);
        Zip::from(&mut state.v)
            .and(&state.p)
            .and(&state.x)
            .for_each(|v, &p, &x| *v += p - x);

        let mut c = wavelet.forward((&state.x - &state.u).view());
        soft_threshold_inplace(&mut c, threshold);
        state.z = wavelet.inverse(c.view());
        Zip::from(&mut state.u)
            .and(&state.z)
            .and(&state.x)
            .for_each(|u, &z, &x| *u += z - x);

        for (name, a) in [("p", &state.p), ("z", &state.z)] {
            if first_non_finite(a) {
                return Err(Error::NonFiniteIterate {
                    variable: name.into(),
                    iteration: it,
                });
            }
        }

        let phi_x = op.forward_sheared(state.x.view())?;
        let misfit = norm(Zip::from(&y).and(&phi_x).map_collect(|&a, &b| a - b));
        let residual = if y_norm > 0.0 { misfit / y_norm } else { misfit };
        let mut objective = 0.5 * misfit * misfit;
        if cfg.tv_weight > 0.0 {
            objective += cfg.tv_weight * total_variation(state.x.view());
        }
        if cfg.wavelet_weight > 0.0 {
            objective += cfg.wavelet_weight * wavelet.forward(state.x.view()).iter().map(|c| c.abs()).sum::<f64>();
        }
        state.residual_history.push(residual);
        state.objective_history.push(objective);
        state.iteration = it;

        let h = &state.residual_history;
        if !residual.is_finite() {
            return Err(Error::NonFiniteIterate {
                variable: "residual".into(),
                iteration: it,
            });
        }
        // A relative residual above 1 fits the data worse than the zero
        // cube, which no regularized minimizer does.
        if h.len() > 5 && residual > 10.0 * h[h.len() - 6] && residual > 1.0 {
            return Err(Error::Divergence {
                iteration: it,
                residual,
                state: Box::new(state),
            });
        }
        if h.len() > 1 && (residual - h[h.len() - 2]).abs() < cfg.tolerance {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

/// Translates every channel of a sheared cube back onto the object grid and
/// crops to the common support of width `width − |step|·(nl − 1)`.
pub fn unshear(sheared: ArrayView3<'_, f64>, dispersion_step: isize) -> Result<Array3<f64>> {
    if dispersion_step == 0 {
        return Err(Error::param("dispersion_step", "must be non-zero"));
    }
    let (nx, width, nl) = sheared.dim();
    let spread = dispersion_step.unsigned_abs() * nl.saturating_sub(1);
    if width <= spread {
        return Err(Error::dims("sheared cube width", format!("> {spread}"), width));
    }
    let ny = width - spread;
    let mut out = Array3::zeros((nx, ny, nl));
    for k in 0..nl {
        let off = dispersion_offset(dispersion_step, k, nl);
        out.slice_mut(ndarray::s![.., .., k])
            .assign(&sheared.slice(ndarray::s![.., off..off + ny, k]));
    }
    Ok(out)
}

/// One cell of a hyperparameter sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub tv_weight: f64,
    pub wavelet_weight: f64,
    pub psnr_db: f64,
    pub residual: f64,
}

/// Exhaustive sweep over `(λ_tv, ρ)` scored by PSNR against a known sheared
/// cube. Returns every cell in sweep order and the index of the best one
/// (first wins ties).
pub fn grid_search(
    op: &SensingOperator,
    y: ArrayView2<'_, f64>,
    truth_sheared: ArrayView3<'_, f64>,
    base: &SolverConfig,
    tv_weights: &[f64],
    wavelet_weights: &[f64],
) -> Result<(Vec<GridPoint>, usize)> {
    if tv_weights.is_empty() || wavelet_weights.is_empty() {
        return Err(Error::param("grid", "needs at least one value per axis"));
    }
    let mut cells = Vec::with_capacity(tv_weights.len() * wavelet_weights.len());
    let mut best = 0;
    for &tv in tv_weights {
        for &rho in wavelet_weights {
            let cfg = SolverConfig {
                tv_weight: tv,
                wavelet_weight: rho,
                ..*base
            };
            let state = solve(op, y, &cfg)?;
            let psnr_db = crate::metrics::psnr(state.x.view(), truth_sheared)?;
            cells.push(GridPoint {
                tv_weight: tv,
                wavelet_weight: rho,
                psnr_db,
                residual: state.last_residual().unwrap_or(f64::NAN),
            });
            if psnr_db > cells[best].psnr_db {
                best = cells.len() - 1;
            }
        }
    }
    Ok((cells, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::CodedAperture;
    use ndarray::Array2;

    fn op(nx: usize, ny: usize, nl: usize, step: isize, seed: u64) -> SensingOperator {
        let pattern = Array2::from_shape_fn((nx, ny), |(i, j)| {
            ((crate::noise::derive_seed(seed, (i * ny + j) as u64) >> 11) % 2) as f64
        });
        SensingOperator::new(CodedAperture::new(pattern, step).unwrap(), nl).unwrap()
    }

    #[test]
    fn x_update_of_zero_is_zero() {
        let o = op(4, 5, 3, 1, 1);
        let y = Array2::zeros(o.measurement_dims());
        let zt = Array3::zeros(o.sheared_dims());
        let x = x_update(&o, y.view(), zt.view(), 1.0, 1.0).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn x_update_is_prior_mean_where_unobserved() {
        let pattern = Array2::zeros((3, 4));
        let o = SensingOperator::new(CodedAperture::new(pattern, 1).unwrap(), 2).unwrap();
        let y = Array2::from_elem(o.measurement_dims(), 5.0);
        let zt = Array3::from_shape_fn(o.sheared_dims(), |(i, j, k)| (i + 2 * j + 3 * k) as f64);
        let x = x_update(&o, y.view(), zt.view(), 0.5, 1.5).unwrap();
        assert_eq!(x, &zt / 2.0);
    }

    #[test]
    fn single_channel_identity_recovers_measurement() {
        let pattern = Array2::ones((5, 6));
        let o = SensingOperator::new(CodedAperture::new(pattern, 1).unwrap(), 1).unwrap();
        let y = Array2::from_shape_fn((5, 6), |(i, j)| (i as f64 - 2.0) * 0.3 + j as f64 * 0.1);
        let cfg = SolverConfig {
            tv_weight: 0.0,
            wavelet_weight: 0.0,
            max_outer_iters: 50,
            tolerance: 0.0,
            ..SolverConfig::default()
        };
        let st = solve(&o, y.view(), &cfg).unwrap();
        for ((i, j, _), &v) in st.x.indexed_iter() {
            assert!((v - y[[i, j]]).abs() < 1e-12);
        }
        assert_eq!(st.residual_history.len(), st.iteration);
    }

    #[test]
    fn unshear_inverts_shear() {
        for step in [1isize, 2, -1] {
            let o = op(3, 5, 4, step, 9);
            let cube = Array3::from_shape_fn(o.dims(), |(i, j, k)| (i * 100 + j * 10 + k) as f64);
            let sheared = o.shear(cube.view()).unwrap();
            assert_eq!(unshear(sheared.view(), step).unwrap(), cube);
        }
        let single = Array3::from_shape_fn((2, 3, 1), |(i, j, _)| (i + j) as f64);
        assert_eq!(unshear(single.view(), 1).unwrap(), single);
    }

    #[test]
    fn unshear_width_from_large_sensor() {
        let sheared = Array3::<f64>::zeros((1, 2560, 400));
        assert_eq!(unshear(sheared.view(), 1).unwrap().dim(), (1, 2161, 400));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SolverConfig {
            tau: 0.0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig {
            max_outer_iters: 0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let o = op(6, 7, 4, 1, 3);
        let truth = Array3::from_shape_fn(o.dims(), |(i, j, k)| ((i + j) % 3) as f64 * 0.2 + k as f64 * 0.05);
        let y = o.forward(truth.view()).unwrap();
        let full = SolverConfig {
            max_outer_iters: 12,
            tolerance: 0.0,
            ..SolverConfig::default()
        };
        let half = SolverConfig {
            max_outer_iters: 5,
            ..full
        };
        let a = solve(&o, y.view(), &full).unwrap();
        let b = resume(&o, y.view(), &full, solve(&o, y.view(), &half).unwrap()).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.residual_history, b.residual_history);
    }
}
