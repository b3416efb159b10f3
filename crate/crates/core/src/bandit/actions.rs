use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// The discrete treatment set: one feature row per action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    features: Matrix,
    ids: Vec<String>,
}

impl ActionSet {
    /// Rows must be pairwise distinct and there must be at least one.
    pub fn new(features: Matrix, ids: Vec<String>) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::contract("an action set needs at least one action"));
        }
        if ids.len() != features.rows() {
            return Err(Error::shape(format!(
                "{} ids for {} actions",
                ids.len(),
                features.rows()
            )));
        }
        features.ensure_finite("action features")?;
        for i in 0..features.rows() {
            for j in (i + 1)..features.rows() {
                if features.row(i) == features.row(j) {
                    return Err(Error::contract(format!(
                        "actions {} and {} have identical features",
                        ids[i], ids[j]
                    )));
                }
            }
        }
        Ok(Self { features, ids })
    }

    /// Actions named `a0`, `a1`, ...
    pub fn with_default_ids(features: Matrix) -> Result<Self> {
        let ids = (0..features.rows()).map(|i| format!("a{i}")).collect();
        Self::new(features, ids)
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature(&self, action: usize) -> &[f64] {
        self.features.row(action)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// `[x_g ‖ x_d(action)]`.
    pub fn concat(&self, context: &[f64], action: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(context.len() + self.feature_dim());
        v.extend_from_slice(context);
        v.extend_from_slice(self.feature(action));
        v
    }

    /// One concatenated context-action row per action (`K × (d₁ + d₂)`).
    pub fn context_action_matrix(&self, context: &[f64]) -> Matrix {
        let d1 = context.len();
        let d2 = self.feature_dim();
        let mut m = Matrix::zeros(self.len(), d1 + d2);
        for a in 0..self.len() {
            let row = m.row_mut(a);
            row[..d1].copy_from_slice(context);
            row[d1..].copy_from_slice(self.feature(a));
        }
        m
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_empty() {
        let dup = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0]]).unwrap();
        assert!(ActionSet::with_default_ids(dup).is_err());
        assert!(ActionSet::with_default_ids(Matrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn concatenation() {
        let a = ActionSet::with_default_ids(Matrix::from_rows(&[[1.0], [0.0]]).unwrap()).unwrap();
        assert_eq!(a.concat(&[0.5, 0.25], 1), vec![0.5, 0.25, 0.0]);
        let m = a.context_action_matrix(&[0.5]);
        assert_eq!(m.row(0), &[0.5, 1.0]);
        assert_eq!(m.row(1), &[0.5, 0.0]);
    }

    #[test]
    fn argmax_tie_goes_low() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
        assert_eq!(argmax(&[0.5]), 0);
    }
}
