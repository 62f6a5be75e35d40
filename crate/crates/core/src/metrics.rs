//! Evaluation protocols: dip-criterion lateral resolution, Gaussian-fit
//! axial FWHM, peak-to-floor sensitivity, and PSNR/RMSE.

use std::io::Write;

use nalgebra::{Matrix4, Vector4};
use ndarray::{ArrayView, ArrayView2, Axis, Dimension, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interferometer::{argmax, DepthVolume};
use crate::phantoms::{BarGroup, Orientation};

/// Minimum relative dip between adjacent bar peaks for a group to count as resolved.
pub const DIP_CRITERION: f64 = 0.2;
/// Fits with a coefficient of determination below this are rejected.
pub const MIN_FIT_R_SQUARED: f64 = 0.9;
/// Default noise floor: bins at least this many FWHMs from the peak.
pub const FLOOR_DISTANCE_FWHM: f64 = 10.0;

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

pub fn rmse<D: Dimension>(recon: ArrayView<'_, f64, D>, truth: ArrayView<'_, f64, D>) -> Result<f64> {
    if recon.shape() != truth.shape() {
        return Err(Error::dims("recon vs truth", truth.shape(), recon.shape()));
    }
    if truth.is_empty() {
        return Err(Error::Degenerate("empty arrays".into()));
    }
    let sse = Zip::from(&recon).and(&truth).fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b));
    Ok((sse / truth.len() as f64).sqrt())
}

/// `10·log10(peak²/MSE)` with `peak = max(truth)`; `+∞` when the arrays agree.
pub fn psnr<D: Dimension>(recon: ArrayView<'_, f64, D>, truth: ArrayView<'_, f64, D>) -> Result<f64> {
    let e = rmse(recon.view(), truth.view())?;
    let peak = truth.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let low = truth.fold(f64::INFINITY, |m, &v| m.min(v));
    if !(peak > low) {
        return Err(Error::Degenerate("PSNR needs a non-constant truth".into()));
    }
    if !(peak > 0.0) {
        return Err(Error::Degenerate("PSNR needs a positive truth peak".into()));
    }
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (peak / e).log10())
}

/// Per-group outcome of the dip test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupContrast {
    pub period_px: usize,
    /// Smallest relative dip over all adjacent bar pairs.
    pub min_dip: f64,
    pub resolved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LateralResolution {
    /// Finest resolved period, in pixels (mask elements).
    Resolved(usize),
    Unresolved,
}

/// Profile across a group, averaged over the full bar length.
pub fn bar_profile(plane: ArrayView2<'_, f64>, group: &BarGroup) -> Result<Vec<f64>> {
    let (h, w) = group.extent();
    let (r0, c0) = group.origin;
    if r0 + h > plane.nrows() || c0 + w > plane.ncols() {
        return Err(Error::dims("bar group region", (r0 + h, c0 + w), plane.dim()));
    }
    let roi = plane.slice(ndarray::s![r0..r0 + h, c0..c0 + w]);
    let axis = match group.orientation {
        Orientation::Vertical => Axis(0),
        Orientation::Horizontal => Axis(1),
    };
    Ok(roi.mean_axis(axis).expect("non-empty region").to_vec())
}

/// Dip test on one group: every adjacent pair of bar peaks must be
/// separated by a valley at least 20% below the weaker peak.
pub fn group_contrast(plane: ArrayView2<'_, f64>, group: &BarGroup) -> Result<GroupContrast> {
    let profile = bar_profile(plane, group)?;
    let peak = |b: usize| group.bar_span(b).map(|a| profile[a]).fold(f64::NEG_INFINITY, f64::max);
    let mut min_dip = f64::INFINITY;
    for b in 0..group.bars - 1 {
        let valley = group.gap_span(b).map(|a| profile[a]).fold(f64::INFINITY, f64::min);
        let top = peak(b).min(peak(b + 1));
        let dip = if top > 0.0 { (top - valley) / top } else { 0.0 };
        min_dip = min_dip.min(dip);
    }
    Ok(GroupContrast {
        period_px: group.period_px,
        min_dip,
        resolved: min_dip >= DIP_CRITERION,
    })
}

pub fn lateral_resolution(plane: ArrayView2<'_, f64>, groups: &[BarGroup]) -> Result<LateralResolution> {
    let mut finest: Option<usize> = None;
    for g in groups {
        if group_contrast(plane, g)?.resolved {
            finest = Some(finest.map_or(g.period_px, |f| f.min(g.period_px)));
        }
    }
    Ok(finest.map_or(LateralResolution::Unresolved, LateralResolution::Resolved))
}

/// `a·exp(−(x−μ)²/(2σ²)) + b` fitted to samples at integer positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub center: f64,
    pub sigma: f64,
    pub offset: f64,
    pub r_squared: f64,
}

impl GaussianFit {
    pub fn fwhm(&self) -> f64 {
        FWHM_PER_SIGMA * self.sigma.abs()
    }

    fn eval(p: &Vector4<f64>, x: f64) -> f64 {
        p[0] * (-(x - p[1]).powi(2) / (2.0 * p[2] * p[2])).exp() + p[3]
    }
}

/// Initial guess from the parabola through the log of the three samples
/// around the maximum, falling back to a half-maximum width count.
fn log_parabola_init(profile: &[f64], peak: usize) -> (f64, f64) {
    let n = profile.len();
    if peak > 0 && peak + 1 < n {
        let (a, b, c) = (profile[peak - 1], profile[peak], profile[peak + 1]);
        if a > 0.0 && b > 0.0 && c > 0.0 {
            let (la, lb, lc) = (a.ln(), b.ln(), c.ln());
            let curv = la - 2.0 * lb + lc;
            if curv < 0.0 {
                let shift = 0.5 * (la - lc) / curv;
                let sigma = (-1.0 / curv).sqrt();
                if shift.abs() <= 1.0 && sigma.is_finite() {
                    return (peak as f64 + shift, sigma);
                }
            }
        }
    }
    let half = profile[peak] / 2.0;
    let width = profile.iter().filter(|&&v| v >= half).count().max(1);
    (peak as f64, width as f64 / FWHM_PER_SIGMA)
}

/// Damped least-squares (Levenberg-Marquardt) Gaussian fit over the whole profile.
pub fn fit_gaussian(profile: &[f64]) -> Result<GaussianFit> {
    if profile.len() < 4 {
        return Err(Error::FitFailure {
            reason: "need at least four samples".into(),
        });
    }
    if profile.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailure {
            reason: "non-finite sample".into(),
        });
    }
    let peak = argmax(profile);
    let floor = profile.iter().copied().fold(f64::INFINITY, f64::min);
    let (mu0, sigma0) = log_parabola_init(profile, peak);
    let mut p = Vector4::new(profile[peak] - floor, mu0, sigma0.max(0.3), floor);

    let cost = |p: &Vector4<f64>| -> f64 {
        profile
            .iter()
            .enumerate()
            .map(|(i, &y)| (y - GaussianFit::eval(p, i as f64)).powi(2))
            .sum()
    };
    let mut c = cost(&p);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for (i, &y) in profile.iter().enumerate() {
            let x = i as f64;
            let d = x - p[1];
            let e = (-d * d / (2.0 * p[2] * p[2])).exp();
            let j = Vector4::new(e, p[0] * e * d / (p[2] * p[2]), p[0] * e * d * d / p[2].powi(3), 1.0);
            let r = y - (p[0] * e + p[3]);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj;
            for k in 0..4 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let tc = cost(&trial);
            if tc.is_finite() && tc <= c {
                let done = (c - tc) <= 1e-14 * c.max(f64::MIN_POSITIVE);
                p = trial;
                c = tc;
                lambda = (lambda / 10.0).max(1e-12);
                improved = !done;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }

    let mean = profile.iter().sum::<f64>() / profile.len() as f64;
    let ss_tot: f64 = profile.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::FitFailure {
            reason: "constant profile".into(),
        });
    }
    let r_squared = 1.0 - c / ss_tot;
    let fit = GaussianFit {
        amplitude: p[0],
        center: p[1],
        sigma: p[2].abs(),
        offset: p[3],
        r_squared,
    };
    if !(fit.r_squared >= MIN_FIT_R_SQUARED) || !(fit.amplitude > 0.0) {
        return Err(Error::FitFailure {
            reason: format!("R² = {:.4}, amplitude = {:.3e}", fit.r_squared, fit.amplitude),
        });
    }
    Ok(fit)
}

/// Axial PSF width of a decoded mirror: transverse mean profile, Gaussian
/// fit, FWHM converted to micrometres.
pub fn axial_psf_fwhm(volume: &DepthVolume) -> Result<f64> {
    let fit = fit_gaussian(&volume.axial_profile())?;
    Ok(fit.fwhm() * volume.depth.plane_spacing_um())
}

/// `20·log10(peak/σ)`; a vanishing σ is an error, not an infinite result.
pub fn sensitivity_ratio_db(peak: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Degenerate(format!("noise floor standard deviation {sigma}")));
    }
    if !(peak > 0.0) {
        return Err(Error::Degenerate(format!("peak value {peak}")));
    }
    Ok(20.0 * (peak / sigma).log10())
}

/// Depth bins at least `FLOOR_DISTANCE_FWHM` widths from `peak`.
pub fn default_floor_bins(num_bins: usize, peak: usize, fwhm_bins: f64) -> Vec<usize> {
    let min_dist = FLOOR_DISTANCE_FWHM * fwhm_bins;
    (0..num_bins).filter(|&m| (m as f64 - peak as f64).abs() >= min_dist).collect()
}

/// Per-A-scan sensitivity: the mean amplitude at the peak plane over the
/// standard deviation of all amplitudes in `floor_bins`, pooled over pixels.
pub fn sensitivity_db_with_floor(volume: &DepthVolume, floor_bins: &[usize]) -> Result<f64> {
    let peak = volume.peak_plane();
    let nz = volume.data.len_of(Axis(2));
    if floor_bins.is_empty() {
        return Err(Error::Degenerate("empty noise floor region".into()));
    }
    if floor_bins.iter().any(|&m| m >= nz) {
        return Err(Error::param("floor_bins", format!("bins must be below {nz}")));
    }
    if floor_bins.contains(&peak) {
        return Err(Error::param("floor_bins", "overlaps the peak plane"));
    }
    let peak_value = volume.data.index_axis(Axis(2), peak).mean().unwrap_or(0.0);
    let mut n = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for &m in floor_bins {
        for &v in volume.data.index_axis(Axis(2), m).iter() {
            n += 1.0;
            let d = v - mean;
            mean += d / n;
            m2 += d * (v - mean);
        }
    }
    let sigma = if n > 1.0 { (m2 / (n - 1.0)).sqrt() } else { 0.0 };
    sensitivity_ratio_db(peak_value, sigma)
}

/// Sensitivity with the floor at bins ≥ 10 FWHM from the fitted peak.
pub fn sensitivity_db(volume: &DepthVolume) -> Result<f64> {
    let fit = fit_gaussian(&volume.axial_profile())?;
    let floor = default_floor_bins(volume.data.len_of(Axis(2)), volume.peak_plane(), fit.fwhm());
    sensitivity_db_with_floor(volume, &floor)
}

/// One row of a characterization report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub cr: usize,
    pub metric: String,
    pub value: f64,
    pub unit: String,
}

impl MetricRow {
    pub fn new(cr: usize, metric: impl Into<String>, value: f64, unit: impl Into<String>) -> Self {
        Self {
            cr,
            metric: metric.into(),
            value,
            unit: unit.into(),
        }
    }
}

pub fn write_report<W: Write>(out: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format {
            path: "<csv>".into(),
            reason: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantoms::{bar_chart, BarGroup, Canvas};
    use crate::types::DepthGrid;
    use ndarray::{array, Array2, Array3};

    #[test]
    fn rmse_psnr_basic() {
        let t = array![[0.0, 1.0], [0.5, 0.25]];
        assert_eq!(rmse(t.view(), t.view()).unwrap(), 0.0);
        assert_eq!(psnr(t.view(), t.view()).unwrap(), f64::INFINITY);
        let off = &t + 1.0;
        assert!((rmse(off.view(), t.view()).unwrap() - 1.0).abs() < 1e-15);
        assert!(psnr(off.view(), t.view()).unwrap().abs() < 1e-12);
        // errors (0.1, 0, -0.2, 0.1): mse = 0.06/4
        let r = array![[0.1, 1.0], [0.3, 0.35]];
        let mse: f64 = 0.015;
        assert!((rmse(r.view(), t.view()).unwrap() - mse.sqrt()).abs() < 1e-12);
        assert!((psnr(r.view(), t.view()).unwrap() - 10.0 * (1.0 / mse).log10()).abs() < 1e-9);
        assert!(psnr(t.view(), Array2::from_elem((2, 2), 1.0).view()).is_err());
    }

    fn chart() -> (Array2<f64>, Vec<BarGroup>) {
        let c = Canvas::new(24, 48, 1.0).unwrap();
        let groups = vec![
            BarGroup::three_bar(2, (1, 1), Orientation::Vertical),
            BarGroup::three_bar(4, (1, 10), Orientation::Vertical),
            BarGroup::three_bar(8, (1, 24), Orientation::Vertical),
        ];
        let v = bar_chart(&c, &groups, 0.0).unwrap();
        (v.data().index_axis(Axis(2), 0).to_owned(), groups)
    }

    #[test]
    fn perfect_bars_fully_resolved() {
        let (plane, groups) = chart();
        for g in &groups {
            let c = group_contrast(plane.view(), g).unwrap();
            assert_eq!(c.min_dip, 1.0);
        }
        assert_eq!(lateral_resolution(plane.view(), &groups).unwrap(), LateralResolution::Resolved(2));
        let flat = Array2::from_elem(plane.dim(), 0.7);
        assert_eq!(lateral_resolution(flat.view(), &groups).unwrap(), LateralResolution::Unresolved);
    }

    #[test]
    fn blurred_fine_group_drops_out() {
        let (mut plane, groups) = chart();
        // smear the period-2 group: bar 1.0, gap 0.9 -> 10% dip
        for g in plane.slice_mut(ndarray::s![1..6, 1..6]).iter_mut() {
            if *g == 0.0 {
                *g = 0.9;
            }
        }
        assert_eq!(lateral_resolution(plane.view(), &groups).unwrap(), LateralResolution::Resolved(4));
    }

    fn gauss(n: usize, mu: f64, fwhm: f64, a: f64) -> Vec<f64> {
        let s = fwhm / FWHM_PER_SIGMA;
        (0..n).map(|i| a * (-(i as f64 - mu).powi(2) / (2.0 * s * s)).exp()).collect()
    }

    #[test]
    fn fit_recovers_analytic_gaussian() {
        let f = fit_gaussian(&gauss(64, 30.3, 13.0, 2.0)).unwrap();
        assert!((f.fwhm() - 13.0).abs() < 1e-6, "{f:?}");
        assert!((f.center - 30.3).abs() < 1e-6);
        assert!(f.r_squared > 0.999_999);
    }

    #[test]
    fn fwhm_in_micrometres() {
        let n = 40;
        let prof = gauss(n, 18.0, 4.0, 1.0);
        let data = Array3::from_shape_fn((2, 2, n), |(_, _, m)| prof[m]);
        let v = DepthVolume {
            data,
            depth: DepthGrid::new(n, 2.5, 0.0).unwrap(),
        };
        assert!((axial_psf_fwhm(&v).unwrap() - 10.0).abs() < 1e-6);
    }

    #[test]
    fn noise_only_profile_fails_fit() {
        let prof: Vec<f64> = (0..64).map(|i| ((i * 7919) % 13) as f64).collect();
        assert!(matches!(fit_gaussian(&prof), Err(Error::FitFailure { .. })));
    }

    #[test]
    fn sensitivity_ratio() {
        assert!((sensitivity_ratio_db(100.0, 1.0).unwrap() - 40.0).abs() < 1e-12);
        assert!(sensitivity_ratio_db(100.0, 0.0).is_err());
    }

    #[test]
    fn report_csv_layout() {
        let mut buf = Vec::new();
        write_report(&mut buf, &[MetricRow::new(4, "lateral_resolution", 2.0, "mask_elements")]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "cr,metric,value,unit\n4,lateral_resolution,2.0,mask_elements\n"
        );
    }
}
