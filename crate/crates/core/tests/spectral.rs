use deep_lstm_iss::linalg::{spectral_norm, top_singular, Matrix};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn svd_oracle(m: &Matrix) -> f64 {
    let d = DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
    d.singular_values().iter().copied().fold(0.0, f64::max)
}

#[test]
fn random_8x8_matches_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let m = Matrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let (a, b) = (spectral_norm(&m), svd_oracle(&m));
        assert!((a - b).abs() <= 1e-8 * b.max(1.0), "{a} vs {b}");
    }
}

#[test]
fn rank_one_and_repeated_singular_values() {
    let m = Matrix::from_fn(5, 4, |i, j| (i as f64 + 1.0) * (j as f64 - 1.5));
    assert!((spectral_norm(&m) - svd_oracle(&m)).abs() < 1e-9);
    // orthogonal times 2: every singular value is 2
    let r = Matrix::from_rows(&[vec![0.0, 2.0, 0.0], vec![0.0, 0.0, -2.0], vec![2.0, 0.0, 0.0]]).unwrap();
    assert!((spectral_norm(&r) - 2.0).abs() < 1e-12);
}

#[test]
fn singular_vectors_are_unit_and_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = Matrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
    let t = top_singular(&m);
    let mv = m.matvec(&t.v);
    for (a, b) in mv.iter().zip(&t.u) {
        assert!((a - t.sigma * b).abs() < 1e-9);
    }
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((n(&t.u) - 1.0).abs() < 1e-12 && (n(&t.v) - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn matches_svd_on_arbitrary_shapes(
        rows in 1usize..10,
        cols in 1usize..10,
        seed in any::<u64>(),
        scale in 1e-3f64..1e3,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Matrix::from_fn(rows, cols, |_, _| scale * rng.random_range(-1.0..1.0));
        let (a, b) = (spectral_norm(&m), svd_oracle(&m));
        prop_assert!((a - b).abs() <= 1e-8 * b.max(1e-300), "{} vs {}", a, b);
    }
}
