use nalgebra::{DMatrix, SymmetricEigen};

use super::Matrix;
use crate::error::{Error, Result};

/// Entries may differ from their transpose by at most this much (relative to
/// the largest entry, floored at 1).
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

const MAX_ITERATIONS: usize = 10_000;

/// Eigendecomposition of a symmetric matrix.
///
/// Eigenvalues come back in descending order; column `i` of the returned
/// matrix is the unit eigenvector for eigenvalue `i`.
pub fn symmetric_eig(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    m.ensure_finite("eigendecomposition input")?;
    if n == 0 {
        return Ok((Vec::new(), Matrix::zeros(0, 0)));
    }
    let scale = m.max_abs().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (m.get(i, j) - m.get(j, i)).abs() > SYMMETRY_TOLERANCE * scale {
                return Err(Error::contract(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    // Symmetrize so round-off asymmetry cannot leak into the solver.
    let dm = DMatrix::from_fn(n, n, |i, j| 0.5 * (m.get(i, j) + m.get(j, i)));
    let eig = SymmetricEigen::try_new(dm, f64::EPSILON, MAX_ITERATIONS)
        .ok_or_else(|| Error::numeric("symmetric eigensolver did not converge"))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    if !values.iter().all(|v| v.is_finite()) || !vectors.is_finite() {
        return Err(Error::numeric("eigensolver produced non-finite output"));
    }
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use rand::Rng;

    fn random_symmetric(n: usize, rng: &mut impl Rng) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.random_range(-1.0..1.0);
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        m
    }

    fn reconstruct(values: &[f64], vectors: &Matrix) -> Matrix {
        let n = values.len();
        Matrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| vectors.get(i, k) * values[k] * vectors.get(j, k))
                .sum()
        })
    }

    #[test]
    fn diagonal() {
        let m = Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap();
        let (vals, vecs) = symmetric_eig(&m).unwrap();
        assert!((vals[0] - 2.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);
        assert!((vecs.get(1, 0).abs() - 1.0).abs() < 1e-14);
        assert!((vecs.get(0, 1).abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identity() {
        let (vals, _) = symmetric_eig(&Matrix::identity(3)).unwrap();
        for v in vals {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn random_5x5_reconstructs() {
        let mut rng = rng_from_seed(11);
        let m = random_symmetric(5, &mut rng);
        let (vals, vecs) = symmetric_eig(&m).unwrap();
        let r = reconstruct(&vals, &vecs);
        for (a, b) in r.data().iter().zip(m.data()) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rejects_asymmetric() {
        let m = Matrix::from_rows(&[[1.0, 0.5], [0.4, 1.0]]).unwrap();
        assert!(matches!(symmetric_eig(&m), Err(Error::Contract(_))));
        assert!(matches!(
            symmetric_eig(&Matrix::zeros(2, 3)),
            Err(Error::Shape(_))
        ));
    }
}
