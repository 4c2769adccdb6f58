use ginit::linalg::{
    general_eig, jacobi_eigh, matmul, sample_gaussian, sample_uniform, top_singular_value, DenseMatrix, RngStream,
    SparseMatrix,
};
use proptest::prelude::*;

fn random_sparse(rng: &mut RngStream, rows: usize, cols: usize, density: f64) -> SparseMatrix {
    let mut t = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if rng.bernoulli(density) {
                t.push((r, c, rng.normal()));
            }
        }
    }
    SparseMatrix::from_triplets(rows, cols, &t).unwrap()
}

fn random_symmetric(rng: &mut RngStream, n: usize) -> DenseMatrix {
    let a = sample_gaussian(rng, n, n, 0.0, 1.0).unwrap();
    DenseMatrix::from_fn(n, n, |i, j| a[(i, j)] + a[(j, i)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spmm_matches_dense(seed in any::<u64>(), rows in 1usize..200, cols in 1usize..200, k in 1usize..12, density in 0.0f64..0.3) {
        let mut rng = RngStream::new(seed, 0);
        let s = random_sparse(&mut rng, rows, cols, density);
        let d = sample_gaussian(&mut rng, cols, k, 0.0, 1.0).unwrap();
        let got = s.spmm(&d).unwrap();
        let want = matmul(&s.to_dense(), &d).unwrap();
        let scale = want.max_abs().max(1.0);
        for (a, b) in got.as_slice().iter().zip(want.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn jacobi_reconstructs(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = RngStream::new(seed, 1);
        let m = random_symmetric(&mut rng, n);
        let e = jacobi_eigh(&m, 1e-8).unwrap();
        let v = &e.vectors;
        let vd = DenseMatrix::from_fn(n, n, |i, j| v[(i, j)] * e.values[j]);
        let rebuilt = matmul(&vd, &v.transpose()).unwrap();
        prop_assert!(m.sub(&rebuilt).unwrap().frobenius_norm() <= 1e-8 * m.frobenius_norm().max(1e-300));
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn general_eig_agrees_with_jacobi(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = RngStream::new(seed, 2);
        let m = random_symmetric(&mut rng, n);
        let sym = jacobi_eigh(&m, 1e-8).unwrap();
        let gen = general_eig(&m).unwrap();
        prop_assert_eq!(gen.len(), n);
        for (z, l) in gen.iter().zip(&sym.values) {
            prop_assert!(z.im.abs() <= 1e-6);
            prop_assert!((z.re - l).abs() <= 1e-6, "{} vs {}", z.re, l);
        }
    }

    #[test]
    fn top_singular_matches_gram_eigenvalue(seed in any::<u64>(), rows in 1usize..30, cols in 1usize..30) {
        let mut rng = RngStream::new(seed, 3);
        let m = sample_gaussian(&mut rng, rows, cols, 0.0, 1.0).unwrap();
        let sigma = top_singular_value(&m, 1e-14, 100_000).unwrap();
        let gram = matmul(&m.transpose(), &m).unwrap();
        let top = *jacobi_eigh(&gram, 1e-8).unwrap().values.last().unwrap();
        prop_assert!((sigma - top.sqrt()).abs() <= 1e-6 * top.sqrt());
    }

    #[test]
    fn sampling_is_reproducible(seed in any::<u64>(), stream in any::<u64>(), rows in 1usize..20, cols in 1usize..20) {
        let a = sample_gaussian(&mut RngStream::new(seed, stream), rows, cols, 0.5, 2.0).unwrap();
        let b = sample_gaussian(&mut RngStream::new(seed, stream), rows, cols, 0.5, 2.0).unwrap();
        prop_assert_eq!(a.as_slice(), b.as_slice());
        let a = sample_uniform(&mut RngStream::new(seed, stream), rows, cols, -1.0, 1.0).unwrap();
        let b = sample_uniform(&mut RngStream::new(seed, stream), rows, cols, -1.0, 1.0).unwrap();
        prop_assert_eq!(a.as_slice(), b.as_slice());
        let c = RngStream::new(seed, stream).substream(4).next_u64();
        prop_assert_eq!(c, RngStream::new(seed, stream).substream(4).next_u64());
    }
}

#[test]
fn distinct_streams_differ() {
    let a = sample_gaussian(&mut RngStream::new(1, 0), 4, 4, 0.0, 1.0).unwrap();
    let b = sample_gaussian(&mut RngStream::new(1, 1), 4, 4, 0.0, 1.0).unwrap();
    assert_ne!(a.as_slice(), b.as_slice());
}
