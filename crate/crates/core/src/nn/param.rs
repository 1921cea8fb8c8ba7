use std::hash::{Hash, Hasher};

use rand::Rng;

use super::Mat;
use crate::{Error, Result};

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Mat,
    pub grad: Mat,
}

impl Param {
    pub fn new(value: Mat) -> Self {
        let grad = Mat::zeros(value.rows(), value.cols());
        Param { value, grad }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Param::new(Mat::zeros(rows, cols))
    }

    /// Entries drawn from `Uniform(-bound, bound)`.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let value = if bound > 0.0 {
            Mat::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
        } else {
            Mat::zeros(rows, cols)
        };
        Param::new(value)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// A fixed, ordered collection of named parameters.
///
/// The order of [`ParamSet::named_params`] and [`ParamSet::params_mut`] must
/// agree; optimizers and flat-vector helpers rely on it.
pub trait ParamSet {
    fn named_params(&self) -> Vec<(String, &Param)>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    fn flat_values(&self) -> Vec<f64> {
        self.named_params()
            .iter()
            .flat_map(|(_, p)| p.value.as_slice().iter().copied())
            .collect()
    }

    fn flat_grads(&self) -> Vec<f64> {
        self.named_params()
            .iter()
            .flat_map(|(_, p)| p.grad.as_slice().iter().copied())
            .collect()
    }

    fn load_flat_values(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "flat vector of {} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.value.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Hash of every value's bit pattern; changes iff some value changed
    /// (modulo hash collisions).
    fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for (name, p) in self.named_params() {
            name.hash(&mut h);
            for x in p.value.as_slice() {
                x.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    fn all_finite(&self) -> bool {
        self.named_params().iter().all(|(_, p)| p.value.is_finite())
    }
}
