//! Small dense complex linear algebra: LU solves, matrix inversion,
//! Hermitian eigenvalues, and 2-norm condition numbers.
//!
//! The matrices in this crate are small (K x K combiner grams, L x L
//! interpolation systems), so simple O(n^3) routines with partial pivoting
//! are sufficient and keep the dependency surface minimal.

use ndarray::{Array1, Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// A pivot smaller than this, relative to the largest input magnitude,
/// is treated as an exact zero.
const PIVOT_REL_TOL: f64 = 1e-13;

/// LU factorization with partial pivoting, P*A = L*U.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: Array2<Complex64>,
    pivots: Vec<usize>,
}

/// Factor a square matrix. Fails with [`Error::Singular`] when a pivot
/// column is numerically zero.
pub fn lu_factor(a: ArrayView2<'_, Complex64>) -> Result<LuFactors> {
    let n = square_dim(&a)?;
    let mut lu = a.to_owned();
    let mut pivots = vec![0usize; n];
    let scale = a.iter().map(|z| z.norm_sqr()).fold(0.0f64, f64::max).sqrt();
    if scale == 0.0 {
        return Err(Error::Singular);
    }

    for col in 0..n {
        let (p, pmag) = (col..n)
            .map(|r| (r, lu[(r, col)].norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty pivot search");
        if pmag <= PIVOT_REL_TOL * scale {
            return Err(Error::Singular);
        }
        pivots[col] = p;
        if p != col {
            for j in 0..n {
                lu.swap((col, j), (p, j));
            }
        }
        let piv = lu[(col, col)];
        for r in col + 1..n {
            let f = lu[(r, col)] / piv;
            lu[(r, col)] = f;
            for j in col + 1..n {
                let u = lu[(col, j)];
                lu[(r, j)] -= f * u;
            }
        }
    }
    Ok(LuFactors { lu, pivots })
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    /// Solve A x = b in place.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let n = self.dim();
        assert_eq!(b.len(), n, "rhs length must match matrix dimension");
        for col in 0..n {
            b.swap(col, self.pivots[col]);
        }
        // Forward substitution with unit lower triangle.
        for r in 1..n {
            let mut acc = b[r];
            for j in 0..r {
                acc -= self.lu[(r, j)] * b[j];
            }
            b[r] = acc;
        }
        // Back substitution.
        for r in (0..n).rev() {
            let mut acc = b[r];
            for j in r + 1..n {
                acc -= self.lu[(r, j)] * b[j];
            }
            b[r] = acc / self.lu[(r, r)];
        }
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &Array1<Complex64>) -> Array1<Complex64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Array1::from_vec(x)
    }

    /// Solve A X = B column by column.
    pub fn solve_mat(&self, b: ArrayView2<'_, Complex64>) -> Array2<Complex64> {
        let n = self.dim();
        assert_eq!(b.nrows(), n, "rhs rows must match matrix dimension");
        let mut out = Array2::zeros(b.raw_dim());
        let mut col = vec![Complex64::ZERO; n];
        for j in 0..b.ncols() {
            for (i, c) in col.iter_mut().enumerate() {
                *c = b[(i, j)];
            }
            self.solve_in_place(&mut col);
            for (i, c) in col.iter().enumerate() {
                out[(i, j)] = *c;
            }
        }
        out
    }
}

/// Invert a square matrix via LU.
pub fn invert(a: ArrayView2<'_, Complex64>) -> Result<Array2<Complex64>> {
    let n = square_dim(&a)?;
    let lu = lu_factor(a)?;
    Ok(lu.solve_mat(Array2::eye(n).view()))
}

/// Eigenvalues of a Hermitian matrix, ascending, via cyclic Jacobi rotations.
///
/// Only the Hermitian part of the input is referenced: diagonals are taken
/// as real, and the (p, q) update uses the upper-triangle entry.
pub fn hermitian_eigenvalues(a: ArrayView2<'_, Complex64>) -> Result<Vec<f64>> {
    let n = square_dim(&a)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut m = a.to_owned();
    let norm = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let tol = 1e-15 * norm;

    for _sweep in 0..40 {
        let off = off_diagonal_norm(&m);
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                jacobi_rotate(&mut m, p, q);
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

fn off_diagonal_norm(m: &Array2<Complex64>) -> f64 {
    let n = m.nrows();
    let mut s = 0.0;
    for p in 0..n {
        for q in p + 1..n {
            s += 2.0 * m[(p, q)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Zero the (p, q) entry of a Hermitian matrix with a unitary plane rotation.
fn jacobi_rotate(m: &mut Array2<Complex64>, p: usize, q: usize) {
    let n = m.nrows();
    let g = m[(p, q)];
    let gmag = g.norm();
    if gmag == 0.0 {
        return;
    }
    let phase = g / gmag;
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    let tau = (aqq - app) / (2.0 * gmag);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = c * t;
    let sph = phase * s;

    // Row updates: rows p and q of the similarity transform V^H A V with
    // V_pp = c, V_pq = s*phase, V_qp = -s*conj(phase), V_qq = c.
    for j in 0..n {
        if j == p || j == q {
            continue;
        }
        let apj = m[(p, j)];
        let aqj = m[(q, j)];
        let npj = c * apj - sph * aqj;
        let nqj = sph.conj() * apj + c * aqj;
        m[(p, j)] = npj;
        m[(j, p)] = npj.conj();
        m[(q, j)] = nqj;
        m[(j, q)] = nqj.conj();
    }
    m[(p, p)] = Complex64::new(app - t * gmag, 0.0);
    m[(q, q)] = Complex64::new(aqq + t * gmag, 0.0);
    m[(p, q)] = Complex64::ZERO;
    m[(q, p)] = Complex64::ZERO;
}

/// 2-norm condition number, sqrt(max/min eigenvalue of A^H A).
pub fn cond2(a: ArrayView2<'_, Complex64>) -> Result<f64> {
    let gram = a.t().mapv(|z| z.conj()).dot(&a);
    let eig = hermitian_eigenvalues(gram.view())?;
    let max = *eig.last().expect("non-empty spectrum");
    let min = eig[0];
    if min <= 0.0 || max == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((max / min).sqrt())
}

/// Conjugate transpose.
pub fn adjoint(a: ArrayView2<'_, Complex64>) -> Array2<Complex64> {
    a.t().mapv(|z| z.conj())
}

fn square_dim(a: &ArrayView2<'_, Complex64>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(n: usize, seed: u64) -> Array2<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, n), |_| {
            c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    #[test]
    fn solve_recovers_known_vector() {
        let a = random_matrix(12, 1);
        let x = Array1::from_shape_fn(12, |i| c(i as f64 + 0.25, -(i as f64) * 0.5));
        let b = a.dot(&x);
        let lu = lu_factor(a.view()).unwrap();
        let got = lu.solve(&b);
        for (g, want) in got.iter().zip(x.iter()) {
            assert_abs_diff_eq!(g.re, want.re, epsilon = 1e-10);
            assert_abs_diff_eq!(g.im, want.im, epsilon = 1e-10);
        }
    }

    #[test]
    fn invert_times_input_is_identity() {
        let a = random_matrix(9, 2);
        let inv = invert(a.view()).unwrap();
        let id = a.dot(&inv);
        for i in 0..9 {
            for j in 0..9 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(id[(i, j)].re, want, epsilon = 1e-10);
                assert_abs_diff_eq!(id[(i, j)].im, 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let mut a = random_matrix(5, 3);
        let row0 = a.row(0).to_owned();
        a.row_mut(4).assign(&row0);
        // Duplicate rows: rank deficient.
        assert!(matches!(lu_factor(a.view()), Err(Error::Singular)));
    }

    #[test]
    fn hermitian_eigenvalues_match_known_spectra() {
        let a = array![[c(2.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(2.0, 0.0)]];
        let eig = hermitian_eigenvalues(a.view()).unwrap();
        assert_abs_diff_eq!(eig[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig[1], 3.0, epsilon = 1e-12);

        let b = array![[c(2.0, 0.0), c(0.0, 1.0)], [c(0.0, -1.0), c(2.0, 0.0)]];
        let eig = hermitian_eigenvalues(b.view()).unwrap();
        assert_abs_diff_eq!(eig[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenvalues_preserve_trace_and_frobenius_norm() {
        let b = random_matrix(15, 4);
        let a = adjoint(b.view()).dot(&b);
        let eig = hermitian_eigenvalues(a.view()).unwrap();
        let trace: f64 = (0..15).map(|i| a[(i, i)].re).sum();
        let fro2: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        assert_abs_diff_eq!(eig.iter().sum::<f64>(), trace, epsilon = 1e-9 * trace.abs());
        assert_abs_diff_eq!(
            eig.iter().map(|l| l * l).sum::<f64>(),
            fro2,
            epsilon = 1e-9 * fro2
        );
        // A = B^H B is positive semi-definite.
        assert!(eig[0] > -1e-10);
    }

    #[test]
    fn each_eigenvalue_makes_shift_singular() {
        let b = random_matrix(6, 5);
        let a = adjoint(b.view()).dot(&b);
        let eig = hermitian_eigenvalues(a.view()).unwrap();
        for lambda in eig {
            let mut shifted = a.clone();
            for i in 0..6 {
                shifted[(i, i)] -= lambda;
            }
            // det(A - lambda I) = 0, so the pivoted LU must fail or end tiny.
            match lu_factor(shifted.view()) {
                Err(Error::Singular) => {}
                Err(e) => panic!("unexpected error {e}"),
                Ok(lu) => {
                    let min_pivot = (0..6)
                        .map(|i| lu.lu[(i, i)].norm())
                        .fold(f64::MAX, f64::min);
                    assert!(
                        min_pivot < 1e-10,
                        "shifted matrix kept pivot {min_pivot:.3e}"
                    );
                }
            }
        }
    }

    #[test]
    fn cond2_of_scaled_unitary_is_one() {
        // 2x2 rotation scaled by 3: singular values both 3.
        let theta: f64 = 0.7;
        let a = array![
            [c(3.0 * theta.cos(), 0.0), c(-3.0 * theta.sin(), 0.0)],
            [c(3.0 * theta.sin(), 0.0), c(3.0 * theta.cos(), 0.0)]
        ];
        assert_abs_diff_eq!(cond2(a.view()).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn cond2_matches_diagonal_ratio() {
        let a = array![
            [c(4.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(0.5, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]
        ];
        assert_abs_diff_eq!(cond2(a.view()).unwrap(), 8.0, epsilon = 1e-9);
    }
}
