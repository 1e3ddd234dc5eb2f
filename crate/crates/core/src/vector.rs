use std::ops::Index;

use crate::error::{Error, Result};

/// Flat model-parameter vector. All aggregation math works on these.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn check_dim(&self, other: &ParamVector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }

    /// `self += a * x`, in index order.
    pub fn axpy_in_place(&mut self, a: f64, x: &ParamVector) -> Result<()> {
        self.check_dim(x)?;
        for (y, xi) in self.0.iter_mut().zip(&x.0) {
            *y += a * xi;
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.0 {
            *v *= a;
        }
    }

    pub fn sq_norm(&self) -> f64 {
        vec_sq_norm(self)
    }

    pub fn sq_distance(&self, other: &ParamVector) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Returns `a·x + y`.
pub fn vec_axpy(a: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
    let mut out = y.clone();
    out.axpy_in_place(a, x)?;
    Ok(out)
}

pub fn vec_sq_norm(x: &ParamVector) -> f64 {
    x.0.iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec())
    }

    #[test]
    fn axpy_examples() {
        let x = pv(&[1.0, 2.0]);
        let y = pv(&[3.0, 4.0]);
        assert_eq!(vec_axpy(0.0, &x, &y).unwrap(), y);
        assert_eq!(vec_axpy(1.0, &x, &ParamVector::zeros(2)).unwrap(), x);
        assert_eq!(vec_axpy(2.0, &x, &y).unwrap(), pv(&[5.0, 8.0]));
    }

    #[test]
    fn axpy_dimension_mismatch() {
        let err = vec_axpy(1.0, &pv(&[1.0]), &pv(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn sq_norm_examples() {
        assert_eq!(vec_sq_norm(&ParamVector::zeros(5)), 0.0);
        assert_eq!(vec_sq_norm(&pv(&[3.0, 4.0])), 25.0);
        for dim in 1..6 {
            let mut e = ParamVector::zeros(dim);
            e.as_mut_slice()[dim - 1] = 1.0;
            assert_eq!(vec_sq_norm(&e), 1.0);
        }
    }
}
