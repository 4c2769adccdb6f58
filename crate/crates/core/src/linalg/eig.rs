//! Dense eigensolvers.
//!
//! Both solvers are O(n^3) and refuse inputs above [`DENSE_EIG_CAP`].

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Largest matrix order accepted by the dense eigensolvers.
pub const DENSE_EIG_CAP: usize = 512;
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Total Francis QR iterations allowed per matrix, times `n`.
pub const QR_ITERATIONS_PER_ROW: usize = 50;

const SYMMETRY_TOL: f64 = 1e-10;

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: DenseMatrix,
}

fn check_square(m: &DenseMatrix) -> Result<usize> {
    if !m.is_square() {
        return Err(Error::shape(format!(
            "eigensolver needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    if n > DENSE_EIG_CAP {
        return Err(Error::SizeCap {
            size: n,
            cap: DENSE_EIG_CAP,
        });
    }
    Ok(n)
}

fn max_asymmetry(m: &DenseMatrix) -> f64 {
    let n = m.rows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `||m V - V diag(values)||_F`.
pub fn eigen_residual(m: &DenseMatrix, values: &[f64], vectors: &DenseMatrix) -> f64 {
    let n = m.rows();
    let mv = m.matmul(vectors).expect("square shapes");
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = mv[(i, j)] - vectors[(i, j)] * values[j];
            acc += d * d;
        }
    }
    acc.sqrt()
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Fails if `m` is not symmetric within 1e-10, if the off-diagonal mass is
/// still above rounding level after [`JACOBI_MAX_SWEEPS`] sweeps, or if the
/// final residual exceeds `tol * ||m||_F`.
pub fn jacobi_eigh(m: &DenseMatrix, tol: f64) -> Result<SymmetricEigen> {
    let n = check_square(m)?;
    let asym = max_asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let norm = m.frobenius_norm();
    let mut a = m.clone();
    // Symmetrize exactly so rotations act on a truly symmetric matrix.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
    let mut v = DenseMatrix::identity(n);
    let stop = f64::EPSILON * norm;

    let mut converged = n <= 1 || norm == 0.0;
    let mut sweeps = 0;
    while !converged {
        let off = off_diagonal_norm(&a);
        if off <= stop {
            converged = true;
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                routine: "jacobi_eigh",
                iterations: sweeps,
                residual: off,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
    }
    debug_assert!(converged);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);

    let residual = eigen_residual(m, &values, &vectors);
    if residual > tol * norm.max(f64::MIN_POSITIVE) {
        return Err(Error::NoConvergence {
            routine: "jacobi_eigh",
            iterations: sweeps,
            residual,
        });
    }
    Ok(SymmetricEigen { values, vectors })
}

fn off_diagonal_norm(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            acc += 2.0 * a[(i, j)] * a[(i, j)];
        }
    }
    acc.sqrt()
}

/// `a <- J^T a J`, `v <- v J` for the rotation in the (p, q) plane.
fn rotate(a: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Eigenvalues of a general real square matrix.
///
/// Balances, reduces to upper Hessenberg form with Householder reflections
/// and runs the Francis double-shift QR iteration. The result is sorted by
/// real part, then imaginary part.
pub fn general_eig(m: &DenseMatrix) -> Result<Vec<Complex64>> {
    let n = check_square(m)?;
    if !m.is_finite() {
        return Err(Error::NonFinite("general_eig input".into()));
    }
    let mut a = m.clone();
    balance(&mut a);
    hessenberg(&mut a);
    let mut values = hqr(&mut a, QR_ITERATIONS_PER_ROW * n.max(1))?;
    values.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(values)
}

/// Diagonal similarity scaling by powers of two so rows and columns have
/// comparable norms.
fn balance(a: &mut DenseMatrix) {
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let n = a.rows();
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= sqrdx;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let g = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= g;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

/// In-place Householder reduction to upper Hessenberg form.
fn hessenberg(a: &mut DenseMatrix) {
    let n = a.rows();
    if n < 3 {
        return;
    }
    let mut v = vec![0.0; n];
    for k in 0..n - 2 {
        let len = n - k - 1;
        let mut norm = 0.0;
        for i in 0..len {
            v[i] = a[(k + 1 + i, k)];
            norm += v[i] * v[i];
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if v[0] > 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v[..len].iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for x in &mut v[..len] {
            *x /= vnorm;
        }
        // Left: rows k+1.. of a.
        for j in k..n {
            let s: f64 = (0..len).map(|i| v[i] * a[(k + 1 + i, j)]).sum();
            for i in 0..len {
                a[(k + 1 + i, j)] -= 2.0 * v[i] * s;
            }
        }
        // Right: columns k+1.. of a.
        for i in 0..n {
            let s: f64 = (0..len).map(|j| a[(i, k + 1 + j)] * v[j]).sum();
            for j in 0..len {
                a[(i, k + 1 + j)] -= 2.0 * s * v[j];
            }
        }
        a[(k + 1, k)] = alpha;
        for i in (k + 2)..n {
            a[(i, k)] = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (eigenvalues only).
fn hqr(a: &mut DenseMatrix, max_iterations: usize) -> Result<Vec<Complex64>> {
    let n = a.rows();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    if n == 0 {
        return Ok(out);
    }
    let eps = f64::EPSILON;
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }
    let mut total = 0usize;
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let mut its = 0usize;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l > 0 {
                let mut s = a[(l - 1, l - 1)].abs() + a[(l, l)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[(l, l - 1)].abs() <= eps * s {
                    a[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[(nu, nu)];
            if l == nu {
                out[nu] = Complex64::new(x + t, 0.0);
                nn -= 1;
                break;
            }
            let mut y = a[(nu - 1, nu - 1)];
            let mut w = a[(nu, nu - 1)] * a[(nu - 1, nu)];
            if l == nu - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + sign(z, p);
                    out[nu - 1] = Complex64::new(x + z, 0.0);
                    out[nu] = Complex64::new(if z != 0.0 { x - w / z } else { x + z }, 0.0);
                } else {
                    out[nu] = Complex64::new(x + p, -z);
                    out[nu - 1] = Complex64::new(x + p, z);
                }
                nn -= 2;
                break;
            }

            if total == max_iterations {
                return Err(Error::NoConvergence {
                    routine: "general_eig",
                    iterations: total,
                    residual: a[(nu, nu - 1)].abs(),
                });
            }
            if its > 0 && its % 10 == 0 {
                // Exceptional shift.
                t += x;
                for i in 0..=nu {
                    a[(i, i)] -= x;
                }
                let s = a[(nu, nu - 1)].abs() + a[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            total += 1;

            let (mut p, mut q, mut r);
            let mut m = nu - 2;
            loop {
                let z = a[(m, m)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[(m + 1, m)] + a[(m, m + 1)];
                q = a[(m + 1, m + 1)] - z - rr - ss;
                r = a[(m + 2, m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[(m, m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[(m - 1, m - 1)].abs() + z.abs() + a[(m + 1, m + 1)].abs());
                if u <= eps * v {
                    break;
                }
                m -= 1;
            }
            for i in m..nu - 1 {
                a[(i + 2, i)] = 0.0;
                if i != m {
                    a[(i + 2, i - 1)] = 0.0;
                }
            }
            let mut k = m;
            while k < nu {
                if k != m {
                    p = a[(k, k - 1)];
                    q = a[(k + 1, k - 1)];
                    r = if k + 1 != nu { a[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[(k, k - 1)] = -a[(k, k - 1)];
                        }
                    } else {
                        a[(k, k - 1)] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pp = a[(k, j)] + q * a[(k + 1, j)];
                        if k + 1 != nu {
                            pp += r * a[(k + 2, j)];
                            a[(k + 2, j)] -= pp * z;
                        }
                        a[(k + 1, j)] -= pp * y;
                        a[(k, j)] -= pp * x;
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for i in l..=mmin {
                        let mut pp = x * a[(i, k)] + y * a[(i, k + 1)];
                        if k + 1 != nu {
                            pp += z * a[(i, k + 2)];
                            a[(i, k + 2)] -= pp * r;
                        }
                        a[(i, k + 1)] -= pp * q;
                        a[(i, k)] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_sorted() {
        let e = jacobi_eigh(&DenseMatrix::diag(&[3.0, 1.0, 2.0]), 1e-12).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn swap_matrix() {
        let m = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let e = jacobi_eigh(&m, 1e-12).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn path_graph_laplacian() {
        // I - A_hat for two connected nodes with self-loops.
        let m = DenseMatrix::from_rows(&[vec![0.5, -0.5], vec![-0.5, 0.5]]).unwrap();
        let e = jacobi_eigh(&m, 1e-12).unwrap();
        assert!(e.values[0].abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_symmetric_rejected() {
        let m = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(jacobi_eigh(&m, 1e-12), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn size_cap_enforced() {
        let m = DenseMatrix::zeros(DENSE_EIG_CAP + 1, DENSE_EIG_CAP + 1);
        assert!(matches!(jacobi_eigh(&m, 1e-8), Err(Error::SizeCap { .. })));
        assert!(matches!(general_eig(&m), Err(Error::SizeCap { .. })));
    }

    fn assert_close(got: &[Complex64], want: &[Complex64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).norm() < tol, "got {g}, want {w}");
        }
    }

    #[test]
    fn general_diagonal() {
        let e = general_eig(&DenseMatrix::diag(&[1.0, 2.0, 3.0])).unwrap();
        let want: Vec<_> = [1.0, 2.0, 3.0].iter().map(|&x| Complex64::new(x, 0.0)).collect();
        assert_close(&e, &want, 1e-12);
    }

    #[test]
    fn general_rotation() {
        let m = DenseMatrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let e = general_eig(&m).unwrap();
        assert_close(&e, &[Complex64::new(0.0, -1.0), Complex64::new(0.0, 1.0)], 1e-12);
    }

    #[test]
    fn golden_ratio_companion() {
        // Companion matrix of x^2 - x - 1.
        let m = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let e = general_eig(&m).unwrap();
        assert_close(
            &e,
            &[Complex64::new(1.0 - phi, 0.0), Complex64::new(phi, 0.0)],
            1e-12,
        );
    }

    #[test]
    fn cubic_companion_roots() {
        // x^3 - 6x^2 + 11x - 6 = (x-1)(x-2)(x-3).
        let m = DenseMatrix::from_rows(&[
            vec![6.0, -11.0, 6.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let e = general_eig(&m).unwrap();
        let want: Vec<_> = [1.0, 2.0, 3.0].iter().map(|&x| Complex64::new(x, 0.0)).collect();
        assert_close(&e, &want, 1e-9);
    }

    #[test]
    fn quartic_with_complex_pair() {
        // (x^2 + 1)(x - 2)(x + 3) = x^4 + x^3 - 5x^2 + x - 6
        let m = DenseMatrix::from_rows(&[
            vec![-1.0, 5.0, -1.0, 6.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        let e = general_eig(&m).unwrap();
        let want = [
            Complex64::new(-3.0, 0.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(2.0, 0.0),
        ];
        assert_close(&e, &want, 1e-9);
    }

    #[test]
    fn trivial_sizes() {
        assert!(general_eig(&DenseMatrix::zeros(0, 0)).unwrap().is_empty());
        let e = general_eig(&DenseMatrix::diag(&[4.0])).unwrap();
        assert_eq!(e, vec![Complex64::new(4.0, 0.0)]);
        let z = general_eig(&DenseMatrix::zeros(5, 5)).unwrap();
        assert!(z.iter().all(|v| v.norm() == 0.0));
    }
}
