//! Numerical property suite for the PCA fit: orthonormal components, the
//! eigenvalue/projected-variance identity, exact recovery of data lying in
//! a low-dimensional affine subspace, and the deterministic sign
//! convention.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rprm_core::embedding::pca::{orthonormality_residual, projected_variances};
use rprm_core::embedding::{fit_pca, RawEmbedding, Space};

fn random_data(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<RawEmbedding> {
    (0..n)
        .map(|_| RawEmbedding {
            values: (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect(),
            space: Space::Question,
        })
        .collect()
}

#[test]
fn components_are_orthonormal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let dim = rng.random_range(3..=32);
        let d = rng.random_range(1..=dim);
        let n = dim * 3 + rng.random_range(0..10);
        let data = random_data(&mut rng, n, dim);
        let model = fit_pca(&data, d).unwrap();
        let residual = orthonormality_residual(&model);
        assert!(residual < 1e-6, "dim={dim} d={d}: residual {residual}");
    }
}

#[test]
fn projected_variance_equals_eigenvalue() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let dim = rng.random_range(3..=24);
        let d = rng.random_range(1..=dim);
        let n = dim * 4;
        let data = random_data(&mut rng, n, dim);
        let model = fit_pca(&data, d).unwrap();
        let variances = projected_variances(&model, &data);
        for (axis, (&variance, &eigenvalue)) in
            variances.iter().zip(model.explained_variance()).enumerate()
        {
            let relative = (variance - eigenvalue).abs() / eigenvalue.max(f64::MIN_POSITIVE);
            assert!(
                relative < 1e-6,
                "axis {axis}: variance {variance} vs eigenvalue {eigenvalue} (rel {relative})"
            );
        }
    }
}

#[test]
fn explained_variance_is_non_increasing_and_non_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let data = random_data(&mut rng, 60, 12);
    let model = fit_pca(&data, 12).unwrap();
    let ev = model.explained_variance();
    for pair in ev.windows(2) {
        assert!(pair[0] >= pair[1], "{ev:?}");
    }
    assert!(ev.iter().all(|&v| v >= 0.0));
}

#[test]
fn affine_subspace_recovers_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..10 {
        let dim = rng.random_range(6..=20);
        let d_true = rng.random_range(1..=5.min(dim - 1));
        let n = dim * 3;

        let offset: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let basis: Vec<Vec<f64>> = (0..d_true)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();

        let data: Vec<RawEmbedding> = (0..n)
            .map(|_| {
                let coefs: Vec<f64> = (0..d_true).map(|_| rng.random_range(-2.0..2.0)).collect();
                let mut point = offset.clone();
                for (c, b) in coefs.iter().zip(&basis) {
                    for (p, x) in point.iter_mut().zip(b) {
                        *p += c * x;
                    }
                }
                RawEmbedding {
                    values: point,
                    space: Space::Question,
                }
            })
            .collect();

        let model = fit_pca(&data, d_true).unwrap();
        for point in &data {
            let reduced = model.transform(point).unwrap();
            let back = model.reconstruct(&reduced).unwrap();
            let error: f64 = back
                .iter()
                .zip(&point.values)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(
                error < 1e-6,
                "dim={dim} d={d_true}: reconstruction error {error}"
            );
        }
    }
}

#[test]
fn repeated_fits_are_bitwise_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..5 {
        let dim = rng.random_range(4..=16);
        let data = random_data(&mut rng, dim * 3, dim);
        let d = rng.random_range(1..=dim);
        let a = fit_pca(&data, d).unwrap();
        let b = fit_pca(&data, d).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        for (ca, cb) in a.components().iter().zip(b.components()) {
            for (x, y) in ca.iter().zip(cb) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}

#[test]
fn sign_convention_pins_largest_entry_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let data = random_data(&mut rng, 40, 10);
    let model = fit_pca(&data, 10).unwrap();
    for component in model.components() {
        let pivot =
            component
                .iter()
                .cloned()
                .fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        assert!(pivot > 0.0, "{component:?}");
    }
}
