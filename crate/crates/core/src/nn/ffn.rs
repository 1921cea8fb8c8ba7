use rand::Rng;

use super::{axpy, Activation, Param};
use crate::{Error, Result};

/// Affine map followed by an elementwise activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// out x in
    pub w: Param,
    /// out x 1
    pub b: Param,
    pub act: Activation,
}

impl Dense {
    /// Weights and biases from `Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, act: Activation, rng: &mut R) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        Dense {
            w: Param::uniform(output, input, bound, rng),
            b: Param::uniform(output, 1, bound, rng),
            act,
        }
    }

    pub fn zeros(input: usize, output: usize, act: Activation) -> Self {
        Dense {
            w: Param::zeros(output, input),
            b: Param::zeros(output, 1),
            act,
        }
    }

    pub fn input(&self) -> usize {
        self.w.value.cols()
    }

    pub fn output(&self) -> usize {
        self.w.value.rows()
    }

    fn pre_activation(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.w.value.matvec(x)?;
        axpy(1.0, self.b.value.as_slice(), &mut z);
        Ok(z)
    }
}

/// Applies `layers` in order.
pub fn ffn_forward(x: &[f64], layers: &[Dense]) -> Result<Vec<f64>> {
    let mut h = x.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        let z = layer
            .pre_activation(&h)
            .map_err(|e| Error::Shape(format!("layer {i}: {e}")))?;
        h = z.into_iter().map(|v| layer.act.apply(v)).collect();
    }
    Ok(h)
}

/// Per-layer inputs and pre-activations for the reverse pass.
#[derive(Debug, Clone)]
pub struct FfnCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl FfnCache {
    pub fn output(&self) -> &[f64] {
        self.post.last().map_or(&[], Vec::as_slice)
    }
}

pub fn ffn_forward_cached(x: &[f64], layers: &[Dense]) -> Result<FfnCache> {
    let mut cache = FfnCache {
        inputs: Vec::with_capacity(layers.len()),
        pre: Vec::with_capacity(layers.len()),
        post: Vec::with_capacity(layers.len()),
    };
    let mut h = x.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        let z = layer
            .pre_activation(&h)
            .map_err(|e| Error::Shape(format!("layer {i}: {e}")))?;
        let y: Vec<f64> = z.iter().map(|&v| layer.act.apply(v)).collect();
        cache.inputs.push(std::mem::replace(&mut h, y.clone()));
        cache.pre.push(z);
        cache.post.push(y);
    }
    Ok(cache)
}

/// Reverse pass. Returns `dL/dx`; when `accumulate` is set, parameter
/// gradients are added into the layers' grad fields.
pub fn ffn_backward(cache: &FfnCache, dy: &[f64], layers: &mut [Dense], accumulate: bool) -> Vec<f64> {
    let mut d = dy.to_vec();
    for (l, layer) in layers.iter_mut().enumerate().rev() {
        let dz: Vec<f64> = d
            .iter()
            .zip(&cache.pre[l])
            .zip(&cache.post[l])
            .map(|((g, &z), &y)| g * layer.act.derivative(z, y))
            .collect();
        if accumulate {
            layer.w.grad.add_outer(1.0, &dz, &cache.inputs[l]);
            axpy(1.0, &dz, layer.b.grad.as_mut_slice());
        }
        d = layer.w.value.t_matvec(&dz).expect("ffn shapes checked on forward");
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mat;
    use crate::seeded_rng;

    #[test]
    fn identity_layer() {
        let layer = Dense {
            w: Param::new(Mat::identity(3)),
            b: Param::zeros(3, 1),
            act: Activation::Identity,
        };
        assert_eq!(ffn_forward(&[1.0, -2.0, 3.5], &[layer]).unwrap(), vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn zero_layer_gives_activation_of_zero() {
        for (act, v) in [
            (Activation::Sigmoid, 0.5),
            (Activation::Tanh, 0.0),
            (Activation::Relu, 0.0),
        ] {
            let out = ffn_forward(&[3.0, -1.0], &[Dense::zeros(2, 4, act)]).unwrap();
            assert_eq!(out, vec![v; 4]);
        }
    }

    #[test]
    fn matches_composed_matmul() {
        let mut rng = seeded_rng(3, 0);
        let l1 = Dense::init(5, 4, Activation::Tanh, &mut rng);
        let l2 = Dense::init(4, 2, Activation::Identity, &mut rng);
        let x = [0.2, -0.4, 0.9, 0.0, 1.1];
        let out = ffn_forward(&x, &[l1.clone(), l2.clone()]).unwrap();
        let xm = Mat::column(&x);
        let h = l1.w.value.matmul(&xm).unwrap();
        let h: Vec<f64> = h
            .as_slice()
            .iter()
            .zip(l1.b.value.as_slice())
            .map(|(a, b)| (a + b).tanh())
            .collect();
        let y = l2.w.value.matmul(&Mat::column(&h)).unwrap();
        for (i, v) in y.as_slice().iter().enumerate() {
            assert!((out[i] - (v + l2.b.value.get(i, 0))).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_reported() {
        let l = Dense::zeros(3, 2, Activation::Relu);
        assert!(ffn_forward(&[1.0, 2.0], &[l]).is_err());
    }
}
