use crate::error::{Error, Result};
use crate::linalg::dense::{gemm, Op};
use crate::linalg::DenseMatrix;

/// Largest singular value by power iteration on `m^T m`.
///
/// Stops when two successive estimates agree to `tol` relative. Reaching
/// `iter_cap` first is an error carrying the last estimate as its residual.
pub fn top_singular_value(m: &DenseMatrix, tol: f64, iter_cap: usize) -> Result<f64> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::shape("top_singular_value of an empty matrix"));
    }
    if !(tol > 0.0) {
        return Err(Error::param(format!("tolerance must be positive, got {tol}")));
    }
    if m.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let n = m.cols();
    // Fixed pseudo-random start so results do not depend on any rng stream.
    let mut state = 0x2545_F491_4F6C_DD1Du64;
    let mut v = DenseMatrix::from_fn(n, 1, |_, _| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });
    normalize(&mut v);
    let mut mv = DenseMatrix::zeros(m.rows(), 1);
    let mut next = DenseMatrix::zeros(n, 1);
    let mut estimate = 0.0;
    for _ in 0..iter_cap {
        gemm(1.0, m, Op::N, &v, Op::N, 0.0, &mut mv)?;
        let sigma = mv.frobenius_norm();
        gemm(1.0, m, Op::T, &mv, Op::N, 0.0, &mut next)?;
        if normalize(&mut next) == 0.0 {
            return Ok(sigma);
        }
        std::mem::swap(&mut v, &mut next);
        if (sigma - estimate).abs() <= tol * sigma {
            return Ok(sigma);
        }
        estimate = sigma;
    }
    Err(Error::NoConvergence {
        routine: "top_singular_value",
        iterations: iter_cap,
        residual: estimate,
    })
}

fn normalize(v: &mut DenseMatrix) -> f64 {
    let norm = v.frobenius_norm();
    if norm > 0.0 {
        v.scale_in_place(1.0 / norm);
    }
    norm
}
