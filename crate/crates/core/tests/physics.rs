use ndarray::{Array1, Array3};
use proptest::prelude::*;

use snapcube::interferometer::depth_profile;
use snapcube::phantoms::{mirror, Canvas};
use snapcube::{decode_depth, encode_depth, CubeKind, DepthGrid, ReflectivityVolume, SourceSpectrum, SpectralCube, SpectralGrid};

fn volume(planes: &[(usize, usize, f64, f64)], nx: usize, ny: usize, spacing_um: f64, nz: usize) -> ReflectivityVolume {
    let mut data = Array3::zeros((nx, ny, nz));
    for &(i, j, z, r) in planes {
        data[[i, j, (z / spacing_um).round() as usize]] = r;
    }
    ReflectivityVolume::new(data, 6.5, DepthGrid::new(nz, spacing_um, 0.0).unwrap()).unwrap()
}

#[test]
fn single_reflector_matches_closed_form_fringe() {
    let (center, spacing, n, fwhm, i_r) = (830.0, 0.5, 24, 6.0, 2.5);
    let grid = SpectralGrid::new(center, spacing, n).unwrap();
    let source = SourceSpectrum::gaussian(grid, fwhm, i_r).unwrap();
    let (z_um, r) = (37.5, 0.3);
    let vol = volume(&[(1, 2, z_um, r)], 3, 4, 0.5, 100);
    let enc = encode_depth(&vol, &source).unwrap();
    let lambda = |k: usize| center + (k as f64 - (n as f64 - 1.0) / 2.0) * spacing;
    let gauss = |l: f64| (-4.0 * 2f64.ln() * (l - center).powi(2) / (fwhm * fwhm)).exp();
    // With an even channel count the center is not sampled; the envelope peaks at 1 on the grid.
    let peak = (0..n).map(|k| gauss(lambda(k))).fold(0.0, f64::max);
    for k in 0..n {
        let lambda = lambda(k);
        let s = gauss(lambda) / peak;
        let fringe = (4.0 * std::f64::consts::PI * z_um * 1000.0 / lambda).cos();
        let ac = s * 2.0 * (i_r * r).sqrt() * fringe;
        assert!((enc.ac.data()[[1, 2, k]] - ac).abs() < 1e-12, "channel {k}");
        assert!((enc.dc_reference.data()[[1, 2, k]] - i_r * s).abs() < 1e-12);
        assert!((enc.dc_sample.data()[[1, 2, k]] - r * s).abs() < 1e-12);
        let total = i_r * s + r * s + ac;
        assert!((enc.total.data()[[1, 2, k]] - total).abs() < 1e-12);
        // Dark pixels carry only the reference.
        assert_eq!(enc.ac.data()[[0, 0, k]], 0.0);
        assert!((enc.total.data()[[0, 0, k]] - i_r * s).abs() < 1e-12);
    }
}

#[test]
fn reference_enters_once_and_ac_superposes_over_depth() {
    let grid = SpectralGrid::new(830.0, 1.0, 16).unwrap();
    let source = SourceSpectrum::gaussian(grid, 8.0, 1.0).unwrap();
    let a = volume(&[(0, 0, 20.0, 0.4)], 2, 2, 1.0, 150);
    let b = volume(&[(0, 0, 90.0, 0.2)], 2, 2, 1.0, 150);
    let both = volume(&[(0, 0, 20.0, 0.4), (0, 0, 90.0, 0.2)], 2, 2, 1.0, 150);
    let (ea, eb, eab) = (
        encode_depth(&a, &source).unwrap(),
        encode_depth(&b, &source).unwrap(),
        encode_depth(&both, &source).unwrap(),
    );
    let ac_sum = &ea.ac.data() + &eb.ac.data();
    assert!(ac_sum.iter().zip(eab.ac.data().iter()).all(|(x, y)| (x - y).abs() < 1e-13));
    assert_eq!(eab.dc_reference.data(), ea.dc_reference.data());
    let dc_s_sum = &ea.dc_sample.data() + &eb.dc_sample.data();
    assert!(dc_s_sum.iter().zip(eab.dc_sample.data().iter()).all(|(x, y)| (x - y).abs() < 1e-15));
}

#[test]
fn on_bin_cosine_decodes_to_half_amplitude() {
    let n = 32;
    for m in 1..n / 2 {
        let s: Vec<f64> = (0..n)
            .map(|k| (2.0 * std::f64::consts::PI * (m * k) as f64 / n as f64).cos())
            .collect();
        let p = depth_profile(&s);
        assert!((p[m] - 0.5).abs() < 1e-12);
        assert!((p[n - m] - 0.5).abs() < 1e-12);
        for (q, v) in p.iter().enumerate() {
            if q != m && q != n - m {
                assert!(v.abs() < 1e-12);
            }
        }
    }
}

#[test]
fn mirror_decodes_to_its_depth_bin() {
    let grid = SpectralGrid::new(830.0, 0.5, 64).unwrap();
    let source = SourceSpectrum::gaussian(grid, 20.0, 1.0).unwrap();
    let canvas = Canvas::new(2, 2, 6.5).unwrap();
    let dz = grid.depth_interval_um();
    for bin in [3usize, 10, 17, 25] {
        let vol = mirror(&canvas, bin as f64 * dz, 1.0).unwrap();
        let enc = encode_depth(&vol, &source).unwrap();
        let dv = decode_depth(&enc.ac).unwrap();
        assert_eq!(dv.depth.num_planes(), 32);
        assert_eq!(dv.peak_plane(), bin);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn decoding_scales_with_amplitude(vals in prop::collection::vec(-5.0f64..5.0, 4 * 16), alpha in -4.0f64..4.0) {
        let grid = SpectralGrid::new(830.0, 1.0, 16).unwrap();
        let cube = SpectralCube::new(Array3::from_shape_vec((2, 2, 16), vals).unwrap(), grid, CubeKind::AcOnly).unwrap();
        let scaled = SpectralCube::new(cube.data().mapv(|v| v * alpha), grid, CubeKind::AcOnly).unwrap();
        let a = decode_depth(&cube).unwrap();
        let b = decode_depth(&scaled).unwrap();
        for (x, y) in a.data.iter().zip(b.data.iter()) {
            prop_assert!((x * alpha.abs() - y).abs() <= 1e-12 * (1.0 + x.abs() * alpha.abs()));
        }
    }

    #[test]
    fn profile_is_parseval_consistent(vals in prop::collection::vec(-3.0f64..3.0, 1..40)) {
        let n = vals.len() as f64;
        let p = depth_profile(&vals);
        let energy: f64 = vals.iter().map(|v| v * v).sum();
        let spectral: f64 = p.iter().map(|v| v * v).sum::<f64>() * n;
        prop_assert!((energy - spectral).abs() <= 1e-10 * (1.0 + energy));
        let mean = Array1::from(vals.clone()).mean().unwrap();
        prop_assert!((p[0] - mean.abs()).abs() <= 1e-12 * (1.0 + mean.abs()));
    }
}
