use ndarray::{Array2, Array3};
use proptest::prelude::*;

use snapcube::metrics::{axial_psf_fwhm, lateral_resolution, psnr, rmse, sensitivity_db, sensitivity_db_with_floor, LateralResolution};
use snapcube::phantoms::{bar_chart, bar_chart_layout, Canvas};
use snapcube::{DepthGrid, DepthVolume};

/// Gaussian axial peak on every pixel plus a deterministic ripple floor.
fn synthetic_volume(nz: usize, center: f64, sigma: f64, amp: f64, floor: f64) -> DepthVolume {
    let data = Array3::from_shape_fn((4, 5, nz), |(i, j, m)| {
        let g = amp * (-(m as f64 - center).powi(2) / (2.0 * sigma * sigma)).exp();
        let ripple = floor * (1.0 + ((i * 31 + j * 17 + m * 7) % 11) as f64 / 11.0);
        g + ripple
    });
    DepthVolume {
        data,
        depth: DepthGrid::new(nz, 2.5, 0.0).unwrap(),
    }
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..60).prop_flat_map(|n| (prop::collection::vec(0.0f64..1.0, n), prop::collection::vec(-0.2f64..0.2, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psnr_is_invariant_to_joint_scaling((truth, err) in pair(), alpha in 0.01f64..100.0) {
        prop_assume!(truth.iter().cloned().fold(f64::MIN, f64::max) > truth.iter().cloned().fold(f64::MAX, f64::min));
        prop_assume!(err.iter().any(|e| *e != 0.0));
        let t = ndarray::Array1::from(truth);
        let r = &t + &ndarray::Array1::from(err);
        let base = psnr(r.view(), t.view()).unwrap();
        let scaled = psnr((&r * alpha).view(), (&t * alpha).view()).unwrap();
        prop_assert!((base - scaled).abs() < 1e-9);
        let e1 = rmse(r.view(), t.view()).unwrap();
        let e2 = rmse((&r * alpha).view(), (&t * alpha).view()).unwrap();
        prop_assert!((e2 - alpha * e1).abs() <= 1e-12 * alpha * e1.max(1e-300));
    }

    #[test]
    fn sensitivity_tracks_peak_scaling(alpha in 1.5f64..50.0, floor in 0.001f64..0.05) {
        let v = synthetic_volume(128, 20.0, 1.0, 1.0, floor);
        let bins: Vec<usize> = (45..128).collect();
        let s0 = sensitivity_db_with_floor(&v, &bins).unwrap();
        // Raising only the peak plane by α adds 20·log10(α).
        let mut boosted = v.clone();
        boosted.data.index_axis_mut(ndarray::Axis(2), 20).mapv_inplace(|x| x * alpha);
        let s1 = sensitivity_db_with_floor(&boosted, &bins).unwrap();
        prop_assert!((s1 - s0 - 20.0 * alpha.log10()).abs() < 1e-9);
        // Scaling the whole volume changes nothing.
        let scaled = DepthVolume { data: v.data.mapv(|x| x * alpha), depth: v.depth };
        prop_assert!((sensitivity_db_with_floor(&scaled, &bins).unwrap() - s0).abs() < 1e-9);
        prop_assert!((sensitivity_db(&scaled).unwrap() - sensitivity_db(&v).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn axial_fwhm_matches_gaussian_width(sigma in 1.0f64..5.0, center in 20.0f64..40.0, alpha in 0.1f64..10.0) {
        let v = synthetic_volume(64, center, sigma, 1.0, 0.0);
        let want = 2.0 * (2.0 * 2f64.ln()).sqrt() * sigma * 2.5;
        let got = axial_psf_fwhm(&v).unwrap();
        prop_assert!((got - want).abs() < 1e-4 * want, "{got} vs {want}");
        let scaled = DepthVolume { data: v.data.mapv(|x| x * alpha), depth: v.depth };
        prop_assert!((axial_psf_fwhm(&scaled).unwrap() - got).abs() < 1e-6 * want);
    }

    #[test]
    fn lateral_resolution_ignores_gain(k in -8i32..8, blur in 0usize..3) {
        // Power-of-two gains scale exactly, so dips on the threshold cannot flip.
        let alpha = 2f64.powi(k);
        let groups = bar_chart_layout(&[2, 3, 4, 6], 48, 48).unwrap();
        let chart = bar_chart(&Canvas::new(48, 48, 6.5).unwrap(), &groups, 0.0).unwrap();
        let plane = chart.data().index_axis(ndarray::Axis(2), 0).to_owned();
        // Box blur along both axes coarsens the finest resolvable period.
        let mut blurred = plane.clone();
        for _ in 0..blur {
            blurred = Array2::from_shape_fn(plane.dim(), |(i, j)| {
                let mut s = 0.0;
                let mut n = 0.0;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if a >= 0 && b >= 0 && (a as usize) < 48 && (b as usize) < 48 {
                            s += blurred[[a as usize, b as usize]];
                            n += 1.0;
                        }
                    }
                }
                s / n
            });
        }
        let r = lateral_resolution(blurred.view(), &groups).unwrap();
        let rs = lateral_resolution(blurred.mapv(|x| x * alpha).view(), &groups).unwrap();
        prop_assert_eq!(r, rs);
        if blur == 0 {
            prop_assert_eq!(r, LateralResolution::Resolved(2));
        }
    }
}

#[test]
fn perfect_reconstruction_has_infinite_psnr() {
    let t = ndarray::arr1(&[0.0, 0.5, 1.0]);
    assert_eq!(psnr(t.view(), t.view()).unwrap(), f64::INFINITY);
    assert!(psnr(t.view(), ndarray::arr1(&[1.0, 1.0, 1.0]).view()).is_err());
    assert!(rmse(t.view(), ndarray::arr1(&[1.0]).view()).is_err());
}

#[test]
fn flat_floor_is_degenerate() {
    let data = Array3::from_shape_fn((3, 3, 32), |(_, _, m)| if m == 10 { 1.0 } else { 0.25 });
    let v = DepthVolume {
        data,
        depth: DepthGrid::new(32, 2.5, 0.0).unwrap(),
    };
    assert!(sensitivity_db_with_floor(&v, &[30, 31]).is_err());
}
