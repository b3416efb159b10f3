//! Spectral Stein gradient estimator.
//!
//! Given `M` samples `x₁…x_M` from a distribution `q` known only through
//! samples, the estimator approximates the score `∇ₓ log q(x)` by expanding it
//! in the Nyström eigenfunctions of an RBF kernel:
//!
//! ```text
//! ψⱼ(x) = √M / λⱼ · Σₘ uⱼₘ k(x, xₘ)
//! βⱼ    = −(1/M) Σₘ ∇ψⱼ(xₘ)            (one d-vector per component)
//! ĝ(x)  = Σⱼ βⱼ ψⱼ(x)
//! ```
//!
//! where `(λⱼ, uⱼ)` are the leading eigenpairs of the Gram matrix `K`.

use crate::error::{Error, Result};
use crate::tensor::{symmetric_eig, Matrix};

/// Eigenvalues at or below this are never retained.
pub const EIGENVALUE_FLOOR: f64 = 1e-10;

/// Share of the Gram-matrix trace kept by [`ComponentRule::default`].
pub const DEFAULT_TRACE_FRACTION: f64 = 0.99;

/// Gaussian kernel `k(x, y) = exp(−‖x − y‖² / (2σ²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfKernel {
    bandwidth: f64,
}

impl RbfKernel {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::contract(format!(
                "kernel bandwidth must be > 0, got {bandwidth}"
            )));
        }
        Ok(Self { bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        (-squared_distance(a, b) / (2.0 * self.bandwidth * self.bandwidth)).exp()
    }
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median pairwise Euclidean distance between rows; 1.0 when every row is
/// identical.
pub fn median_bandwidth(samples: &Matrix) -> Result<f64> {
    let m = samples.rows();
    if m < 2 {
        return Err(Error::contract(format!(
            "median bandwidth needs at least 2 samples, got {m}"
        )));
    }
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            dists.push(squared_distance(samples.row(i), samples.row(j)).sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let k = dists.len();
    let median = if k % 2 == 1 {
        dists[k / 2]
    } else {
        0.5 * (dists[k / 2 - 1] + dists[k / 2])
    };
    Ok(if median > 0.0 { median } else { 1.0 })
}

/// How many spectral components to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentRule {
    /// At most this many leading components.
    Fixed(usize),
    /// Smallest prefix whose eigenvalues reach this share of the trace.
    TraceFraction(f64),
}

impl Default for ComponentRule {
    fn default() -> Self {
        ComponentRule::TraceFraction(DEFAULT_TRACE_FRACTION)
    }
}

/// Fitted estimator. Immutable once built.
#[derive(Debug, Clone)]
pub struct SsgeModel {
    samples: Matrix,
    kernel: RbfKernel,
    eigenvalues: Vec<f64>,
    /// `M × J`, column `j` is `uⱼ`.
    eigenvectors: Matrix,
    /// `J × d`, row `j` is `βⱼ`.
    beta: Matrix,
}

impl SsgeModel {
    /// Fits on `samples` keeping at most `j` components, with the median
    /// heuristic bandwidth.
    pub fn fit(samples: &Matrix, j: usize) -> Result<Self> {
        let m = samples.rows();
        if j == 0 || j > m {
            return Err(Error::contract(format!(
                "component count must lie in 1..={m}, got {j}"
            )));
        }
        Self::fit_with(samples, ComponentRule::Fixed(j), None)
    }

    /// Fits with the default 99%-of-trace component rule.
    pub fn fit_auto(samples: &Matrix) -> Result<Self> {
        Self::fit_with(samples, ComponentRule::default(), None)
    }

    pub fn fit_with(samples: &Matrix, rule: ComponentRule, bandwidth: Option<f64>) -> Result<Self> {
        let m = samples.rows();
        let d = samples.cols();
        samples.ensure_finite("estimator samples")?;
        let bandwidth = match bandwidth {
            Some(b) => b,
            None => median_bandwidth(samples)?,
        };
        if m < 2 {
            return Err(Error::contract(format!(
                "the estimator needs at least 2 samples, got {m}"
            )));
        }
        let kernel = RbfKernel::new(bandwidth)?;
        let gram = gram_matrix(&kernel, samples, samples);
        let (values, vectors) = symmetric_eig(&gram)?;

        let cap = match rule {
            ComponentRule::Fixed(j) => j.min(m),
            ComponentRule::TraceFraction(frac) => {
                let trace: f64 = values.iter().map(|v| v.max(0.0)).sum();
                let mut acc = 0.0;
                let mut count = m;
                for (i, v) in values.iter().enumerate() {
                    acc += v.max(0.0);
                    if acc >= frac * trace {
                        count = i + 1;
                        break;
                    }
                }
                count
            }
        };
        let keep = values
            .iter()
            .take(cap)
            .take_while(|&&v| v > EIGENVALUE_FLOOR)
            .count()
            .max(1);
        // A duplicate-only set still has eigenvalue M > floor, so `keep ≥ 1`
        // only ever retains genuine components.
        let eigenvalues: Vec<f64> = values[..keep].to_vec();
        let eigenvectors = vectors.select_cols(&(0..keep).collect::<Vec<_>>());

        // βⱼ = −(1/M) Σᵢ ∇ψⱼ(xᵢ) with
        // ∇ψⱼ(x) = −√M/(λⱼσ²) Σₘ uₘⱼ k(x, xₘ) (x − xₘ).
        let sqrt_m = (m as f64).sqrt();
        let inv_bw2 = 1.0 / (bandwidth * bandwidth);
        let mut beta = Matrix::zeros(keep, d);
        for (j, &lambda) in eigenvalues.iter().enumerate() {
            let coef = sqrt_m / lambda * inv_bw2;
            let acc = beta.row_mut(j);
            for i in 0..m {
                let xi = samples.row(i);
                for mm in 0..m {
                    let w = eigenvectors.get(mm, j) * gram.get(i, mm);
                    if w == 0.0 {
                        continue;
                    }
                    let xm = samples.row(mm);
                    for c in 0..d {
                        // −(1/M) · (−coef) · w · (xᵢ − xₘ)
                        acc[c] += coef * w * (xi[c] - xm[c]);
                    }
                }
            }
            acc.iter_mut().for_each(|b| *b /= m as f64);
        }
        beta.ensure_finite("estimator coefficients")?;

        Ok(Self {
            samples: samples.clone(),
            kernel,
            eigenvalues,
            eigenvectors,
            beta,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.kernel.bandwidth()
    }

    pub fn num_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Matrix {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    /// Nyström eigenfunction values `ψⱼ(x)` for each query row (`B × J`).
    pub fn eigenfunctions(&self, query: &Matrix) -> Result<Matrix> {
        if query.cols() != self.samples.cols() {
            return Err(Error::shape(format!(
                "query has {} columns, samples have {}",
                query.cols(),
                self.samples.cols()
            )));
        }
        let kq = gram_matrix(&self.kernel, query, &self.samples);
        let mut psi = kq.matmul(&self.eigenvectors)?;
        let sqrt_m = (self.samples.rows() as f64).sqrt();
        for r in 0..psi.rows() {
            for (v, lambda) in psi.row_mut(r).iter_mut().zip(&self.eigenvalues) {
                *v *= sqrt_m / lambda;
            }
        }
        Ok(psi)
    }

    /// Estimated `∇ₓ log q(x)` at each query row (`B × d`).
    pub fn score(&self, query: &Matrix) -> Result<Matrix> {
        let psi = self.eigenfunctions(query)?;
        let out = psi.matmul(&self.beta)?;
        out.ensure_finite("estimated score")?;
        Ok(out)
    }
}

/// `K[i][j] = k(aᵢ, bⱼ)`.
pub fn gram_matrix(kernel: &RbfKernel, a: &Matrix, b: &Matrix) -> Matrix {
    let mut k = Matrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        let ai = a.row(i);
        for j in 0..b.rows() {
            k.set(i, j, kernel.eval(ai, b.row(j)));
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn kernel_is_one_on_diagonal() {
        let k = RbfKernel::new(0.7).unwrap();
        assert_eq!(k.eval(&[1.0, -2.0], &[1.0, -2.0]), 1.0);
        assert!(RbfKernel::new(0.0).is_err());
        assert!(RbfKernel::new(-1.0).is_err());
    }

    #[test]
    fn median_of_two_points() {
        let s = Matrix::from_rows(&[[0.0, 0.0], [2.0, 0.0]]).unwrap();
        assert_eq!(median_bandwidth(&s).unwrap(), 2.0);
    }

    #[test]
    fn median_degenerate_and_too_few() {
        let s = Matrix::filled(4, 3, 0.25);
        assert_eq!(median_bandwidth(&s).unwrap(), 1.0);
        assert!(matches!(
            median_bandwidth(&Matrix::zeros(1, 3)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn median_matches_brute_force_over_ten_pairs() {
        let mut rng = rng_from_seed(21);
        let s = Matrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let mut d = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                if i < j {
                    let dist: f64 = (0..3)
                        .map(|c| (s.get(i, c) - s.get(j, c)).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    d.push(dist);
                }
            }
        }
        assert_eq!(d.len(), 10);
        d.sort_by(f64::total_cmp);
        let expect = 0.5 * (d[4] + d[5]);
        assert!((median_bandwidth(&s).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn identical_pair_gives_rank_one_gram() {
        let s = Matrix::from_rows(&[[0.3, 0.1], [0.3, 0.1]]).unwrap();
        let model = SsgeModel::fit(&s, 2).unwrap();
        assert_eq!(model.num_components(), 1);
        assert!((model.eigenvalues()[0] - 2.0).abs() < 1e-12);
        let out = model
            .score(&Matrix::from_rows(&[[0.0, 0.0]]).unwrap())
            .unwrap();
        assert!(out.is_finite());
    }

    #[test]
    fn far_apart_points_give_identity_gram() {
        let s =
            Matrix::from_rows(&[[100.0, 0.0, 0.0], [0.0, 100.0, 0.0], [0.0, 0.0, 100.0]]).unwrap();
        let model = SsgeModel::fit_with(&s, ComponentRule::Fixed(3), Some(0.5)).unwrap();
        for v in model.eigenvalues() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_gram_reconstructs() {
        let mut rng = rng_from_seed(5);
        let s = Matrix::from_fn(10, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let model = SsgeModel::fit(&s, 10).unwrap();
        let k = gram_matrix(&RbfKernel::new(model.bandwidth()).unwrap(), &s, &s);
        let (vals, vecs) = (model.eigenvalues(), model.eigenvectors());
        let j = vals.len();
        for a in 0..10 {
            for b in 0..10 {
                let r: f64 = (0..j)
                    .map(|c| vecs.get(a, c) * vals[c] * vecs.get(b, c))
                    .sum();
                // Components under the floor are dropped, their mass ≤ 1e-10.
                assert!(
                    (r - k.get(a, b)).abs() < 1e-8,
                    "{a},{b}: {r} vs {}",
                    k.get(a, b)
                );
            }
        }
    }

    #[test]
    fn fit_rejects_bad_component_counts() {
        let s = Matrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        assert!(SsgeModel::fit(&s, 0).is_err());
        assert!(SsgeModel::fit(&s, 4).is_err());
        let m = SsgeModel::fit(&s, 3).unwrap();
        assert!(matches!(
            m.score(&Matrix::zeros(1, 2)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn duplicate_samples_single_component_finite() {
        let s = Matrix::filled(6, 2, 1.5);
        let m = SsgeModel::fit(&s, 1).unwrap();
        let out = m
            .score(&Matrix::from_rows(&[[1.5, 1.5], [0.0, 3.0]]).unwrap())
            .unwrap();
        assert!(out.is_finite());
    }

    #[test]
    fn score_at_mean_of_shifted_normal_is_near_zero() {
        let mut rng = rng_from_seed(8);
        let s = Matrix::from_fn(500, 1, |_, _| 3.0 + rng.sample::<f64, _>(StandardNormal));
        let m = SsgeModel::fit_auto(&s).unwrap();
        let g = m.score(&Matrix::from_rows(&[[3.0]]).unwrap()).unwrap();
        assert!(g.get(0, 0).abs() < 0.3, "score at mean {}", g.get(0, 0));
    }

    #[test]
    fn deterministic_output() {
        let mut rng = rng_from_seed(9);
        let s = Matrix::from_fn(40, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = Matrix::from_fn(7, 3, |i, j| (i as f64 - 3.0) * 0.3 + j as f64 * 0.1);
        let a = SsgeModel::fit_auto(&s).unwrap().score(&q).unwrap();
        let b = SsgeModel::fit_auto(&s).unwrap().score(&q).unwrap();
        assert_eq!(a.data(), b.data());
    }
}
