use ndarray::Array2;

use snapcube::noise::{apply_shot_noise, derive_seed, gaussian_vignette, quantize};
use snapcube::{CameraModel, NoiseConfig};

#[test]
fn shot_noise_has_poisson_moments() {
    // λ = 2.5 · 4 = 10 electrons per pixel, 128·128 samples.
    let (level, scale, n) = (2.5, 4.0, 128usize);
    let cfg = NoiseConfig::new(scale, 17).unwrap();
    let frame = apply_shot_noise(Array2::from_elem((n, n), level).view(), &cfg).unwrap();
    let counts: Vec<f64> = frame.iter().map(|v| v * scale).collect();
    assert!(counts.iter().all(|c| c.fract() == 0.0 && *c >= 0.0));
    let lambda = level * scale;
    let m = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / m;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let skew = counts.iter().map(|c| (c - mean).powi(3)).sum::<f64>() / m;
    // Five standard errors of each estimator.
    assert!((mean - lambda).abs() < 5.0 * (lambda / m).sqrt(), "mean {mean}");
    assert!(
        (var - lambda).abs() < 5.0 * ((2.0 * lambda * lambda + lambda) / m).sqrt(),
        "variance {var}"
    );
    // Third central moment of a Poisson variable equals λ.
    assert!(
        (skew - lambda).abs() < 5.0 * ((15.0 * lambda.powi(3) + 25.0 * lambda * lambda + lambda) / m).sqrt(),
        "third moment {skew}"
    );
}

#[test]
fn shot_noise_is_thread_count_independent() {
    let img = Array2::from_shape_fn((40, 33), |(i, j)| (i * 33 + j) as f64 * 0.01);
    let cfg = NoiseConfig::new(50.0, 5).unwrap();
    let many = apply_shot_noise(img.view(), &cfg).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let one = pool.install(|| apply_shot_noise(img.view(), &cfg).unwrap());
    assert_eq!(many, one);
    let other = apply_shot_noise(img.view(), &cfg.for_frame(1)).unwrap();
    assert_ne!(many, other);
}

#[test]
fn derived_seeds_do_not_collide() {
    let mut seen = std::collections::HashSet::new();
    for seed in 0..8u64 {
        for tag in 0..512u64 {
            assert!(seen.insert(derive_seed(seed, tag)));
        }
    }
}

#[test]
fn vignette_follows_gaussian_falloff() {
    let (nx, ny, radius, edge) = (31, 41, 12.0, 0.4);
    let g = gaussian_vignette(nx, ny, radius, edge).unwrap();
    let (cx, cy) = (15.0, 20.0);
    assert!((g[[15, 20]] - 1.0).abs() < 1e-15);
    // A pixel exactly `radius` from the centre sees the edge gain.
    assert!((g[[15 + 12, 20]] - edge).abs() < 1e-12);
    for ((i, j), &v) in g.indexed_iter() {
        let r2 = (i as f64 - cx).powi(2) + (j as f64 - cy).powi(2);
        let want = edge.powf(r2 / (radius * radius));
        assert!((v - want).abs() < 1e-12 * (1.0 + want));
        assert_eq!(v, g[[nx - 1 - i, ny - 1 - j]]);
    }
    assert!(gaussian_vignette(4, 4, 2.0, 0.0).is_err());
    assert!(gaussian_vignette(4, 4, 2.0, 1.5).is_err());
}

#[test]
fn quantization_snaps_to_adc_levels() {
    let camera = CameraModel {
        full_well_capacity: 1000.0,
        bit_depth: 8,
        ..CameraModel::default()
    };
    let lsb = 1000.0 / 256.0;
    let y = Array2::from_shape_fn((5, 40), |(i, j)| (i * 40 + j) as f64 * 5.3 - 20.0);
    let q = quantize(y.view(), &camera).unwrap();
    for (a, b) in y.iter().zip(q.iter()) {
        assert!((b / lsb).fract() == 0.0 && *b >= 0.0 && *b <= 1000.0);
        let clipped = a.clamp(0.0, 1000.0);
        assert!((b - clipped).abs() <= lsb / 2.0 + 1e-9, "{a} -> {b}");
    }
}
