//! Named learnable tensors with gradient storage.

use std::collections::HashMap;

use ndarray::Array2;

use crate::error::{Error, Result};

/// One learnable tensor: a name unique within its [`ParamSet`], a shape, the
/// values and a gradient buffer of the same size.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl ParamTensor {
    pub fn n_scalars(&self) -> usize {
        self.values.len()
    }

    /// View the values as a matrix: rank-2 tensors as-is, rank-1 tensors as
    /// a single row.
    pub fn as_matrix(&self) -> Array2<f64> {
        match self.shape.len() {
            2 => Array2::from_shape_vec((self.shape[0], self.shape[1]), self.values.clone())
                .expect("shape/value mismatch"),
            1 => Array2::from_shape_vec((1, self.shape[0]), self.values.clone())
                .expect("shape/value mismatch"),
            r => panic!("parameter {} has unsupported rank {r}", self.name),
        }
    }
}

/// Ordered collection of parameters addressed by index or name. Registration
/// order is fixed per model configuration, which makes initialization and
/// checkpoints deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    tensors: Vec<ParamTensor>,
    by_name: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<usize> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter name {name}")));
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::Contract(format!(
                "parameter {name}: shape {shape:?} does not match {} values",
                values.len()
            )));
        }
        let idx = self.tensors.len();
        let grad = vec![0.0; values.len()];
        self.tensors.push(ParamTensor { name: name.clone(), shape, values, grad });
        self.by_name.insert(name, idx);
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.n_scalars()).sum()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name}")))
    }

    pub fn tensor(&self, idx: usize) -> &ParamTensor {
        &self.tensors[idx]
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut ParamTensor {
        &mut self.tensors[idx]
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor> {
        self.by_name.get(name).map(|&i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamTensor> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.tensors.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Global Frobenius norm over all gradients.
    pub fn grad_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn grads_finite(&self) -> Result<()> {
        for t in &self.tensors {
            if t.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {}", t.name)));
            }
        }
        Ok(())
    }

    pub fn values_finite(&self) -> Result<()> {
        for t in &self.tensors {
            if t.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("values of {}", t.name)));
            }
        }
        Ok(())
    }
}

/// Scale all gradients so the global Frobenius norm does not exceed
/// `max_norm`; no-op when it already does not. Idempotent.
pub fn clip_gradients(params: &mut ParamSet, max_norm: f64) {
    let norm = params.grad_norm();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for t in params.iter_mut() {
            t.grad.iter_mut().for_each(|g| *g *= scale);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_rejects_duplicates_and_bad_shapes() {
        let mut ps = ParamSet::new();
        ps.register("w", vec![2, 3], vec![0.0; 6]).unwrap();
        assert!(ps.register("w", vec![1], vec![0.0]).is_err());
        assert!(ps.register("b", vec![2], vec![0.0; 3]).is_err());
        assert_eq!(ps.n_scalars(), 6);
    }

    #[test]
    fn clip_scales_to_unit_norm() {
        let mut ps = ParamSet::new();
        ps.register("w", vec![4], vec![0.0; 4]).unwrap();
        ps.tensor_mut(0).grad.copy_from_slice(&[2.0, 2.0, 2.0, 2.0]);
        // norm 4 -> scaled by 0.25
        clip_gradients(&mut ps, 1.0);
        assert!((ps.grad_norm() - 1.0).abs() < 1e-12);
        assert!((ps.tensor(0).grad[0] - 0.5).abs() < 1e-12);
        // idempotent
        let before = ps.tensor(0).grad.clone();
        clip_gradients(&mut ps, 1.0);
        assert_eq!(before, ps.tensor(0).grad);
    }

    #[test]
    fn clip_leaves_small_gradients_alone() {
        let mut ps = ParamSet::new();
        ps.register("w", vec![2], vec![0.0; 2]).unwrap();
        ps.tensor_mut(0).grad.copy_from_slice(&[0.3, 0.4]);
        clip_gradients(&mut ps, 1.0);
        assert_eq!(ps.tensor(0).grad, vec![0.3, 0.4]);
    }
}
