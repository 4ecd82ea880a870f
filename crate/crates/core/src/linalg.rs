//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Solves `A'X + XA + M = 0` through the Kronecker-product linear system.
///
/// Returns `None` when the operator is singular, i.e. when two eigenvalues of
/// `A` sum to zero.
pub fn lyapunov(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DVector::from_column_slice(m.as_slice());
    let x = op.full_piv_lu().solve(&rhs)?;
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    Some((&x + x.transpose()) * 0.5)
}

/// Order used for every reported spectrum: descending real part, then ascending imaginary part.
pub fn spectral_order(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im))
}

pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex64> {
    let mut ev: Vec<Complex64> = a.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(spectral_order);
    ev
}

pub fn max_real_part(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_symmetric_positive_definite(r: &DMatrix<f64>) -> bool {
    r.is_square()
        && (r - r.transpose()).amax() <= 1e-12 * (1.0 + r.amax())
        && r.clone().cholesky().is_some()
}

pub fn min_symmetric_eigenvalue(q: &DMatrix<f64>) -> f64 {
    if q.nrows() == 0 {
        return 0.0;
    }
    let sym = (q + q.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// Eigenvalues of `a` in spectral order and the matching unit-norm left row
/// eigenvectors (`ψ a = μ ψ`) as the rows of the returned matrix.
///
/// Eigenvalues closer than a relative `1e-6` are treated as one repeated
/// eigenvalue; if its left null space is smaller than its algebraic
/// multiplicity the matrix is reported as defective.
pub fn left_eigen(a: &DMatrix<f64>) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    let n = a.nrows();
    let mu = eigenvalues(a);
    let at: DMatrix<Complex64> = a.transpose().map(|x| Complex64::new(x, 0.0));
    let scale = 1.0 + a.amax();
    let mut psi = DMatrix::<Complex64>::zeros(n, n);

    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && (mu[j] - mu[i]).norm() <= 1e-6 * (1.0 + mu[i].norm()) {
            j += 1;
        }
        let group = j - i;
        let mut shifted = at.clone();
        for d in 0..n {
            shifted[(d, d)] -= mu[i];
        }
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("requested right singular vectors");
        let sv = &svd.singular_values;
        // singular values come sorted in decreasing order
        let small = sv.iter().filter(|&&s| s <= 1e-7 * scale).count();
        if small < group {
            return Err(Error::DefectiveMatrix { eigenvalue: format!("{}", mu[i]) });
        }
        for g in 0..group {
            let row = v_t.row(n - group + g).map(|c| c.conj());
            let mut v: Vec<Complex64> = row.iter().copied().collect();
            normalize_phase(&mut v);
            for (c, val) in v.into_iter().enumerate() {
                psi[(i + g, c)] = val;
            }
        }
        i = j;
    }

    // store complex pairs as exact conjugates of the upper-half-plane member
    for r in 0..n {
        if mu[r].im < 0.0 {
            if let Some(p) = (0..n).find(|&p| p != r && mu[p].im > 0.0 && (mu[p] - mu[r].conj()).norm() <= 1e-9 * (1.0 + mu[r].norm())) {
                for c in 0..n {
                    psi[(r, c)] = psi[(p, c)].conj();
                }
            }
        }
    }
    Ok((mu, psi))
}

fn normalize_phase(v: &mut [Complex64]) {
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let pivot = v
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(Complex64::new(1.0, 0.0));
    let phase = if pivot.norm() > 0.0 { pivot.conj() / pivot.norm() } else { Complex64::new(1.0, 0.0) };
    for c in v.iter_mut() {
        *c = *c * phase / norm;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lyapunov_scalar_and_matrix() {
        let a = DMatrix::from_row_slice(1, 1, &[-2.0]);
        let m = DMatrix::from_row_slice(1, 1, &[4.0]);
        let x = lyapunov(&a, &m).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-14);

        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let x = lyapunov(&a, &m).unwrap();
        let res = a.transpose() * &x + &x * &a + &m;
        assert!(res.amax() < 1e-13);
    }

    #[test]
    fn diagonal_left_eigenvectors() {
        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -1.0]);
        let (mu, psi) = left_eigen(&a).unwrap();
        assert_eq!(mu, vec![Complex64::new(-1.0, 0.0), Complex64::new(-2.0, 0.0)]);
        assert!((psi[(0, 1)].norm() - 1.0).abs() < 1e-12 && psi[(0, 0)].norm() < 1e-12);
        assert!((psi[(1, 0)].norm() - 1.0).abs() < 1e-12 && psi[(1, 1)].norm() < 1e-12);
    }

    #[test]
    fn complex_pair_is_conjugate() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 3.0, -3.0, -1.0]);
        let (mu, psi) = left_eigen(&a).unwrap();
        assert!(mu[0].im < 0.0 && mu[1].im > 0.0);
        for c in 0..2 {
            assert!((psi[(0, c)] - psi[(1, c)].conj()).norm() < 1e-14);
        }
        let ac = a.map(|x| Complex64::new(x, 0.0));
        for (r, &m) in mu.iter().enumerate() {
            let row = psi.row(r).into_owned();
            let lhs = &row * &ac;
            let rhs = row.map(|x| x * m);
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn repeated_diagonalizable_and_defective() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        assert!(left_eigen(&a).is_ok());
        let j = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
        assert!(matches!(left_eigen(&j), Err(Error::DefectiveMatrix { .. })));
    }
}
