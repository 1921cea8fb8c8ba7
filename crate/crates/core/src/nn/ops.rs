use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Numerically stable softmax over the unmasked positions.
///
/// `mask[i] == true` marks position `i` as live. Masked positions come back
/// as exactly zero.
pub fn softmax(v: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>> {
    if let Some(m) = mask {
        if m.len() != v.len() {
            return Err(Error::Shape(format!(
                "softmax mask length {} for {} logits",
                m.len(),
                v.len()
            )));
        }
    }
    let live = |i: usize| mask.is_none_or(|m| m[i]);
    let max = (0..v.len())
        .filter(|&i| live(i))
        .map(|i| v[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Invalid("softmax over zero unmasked positions".into()));
    }
    if !max.is_finite() {
        return Err(Error::NonFinite("softmax logits".into()));
    }
    let mut out: Vec<f64> = (0..v.len())
        .map(|i| if live(i) { (v[i] - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    Ok(out)
}

/// Reverse pass of softmax: given `p = softmax(z)` and `dL/dp`, returns `dL/dz`.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let inner: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    p.iter().zip(dp).map(|(pi, di)| pi * (di - inner)).collect()
}

/// `-log softmax(logits)[label]`, evaluated without cancellation.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::Invalid(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let (arg, &max) = logits
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |acc, (i, x)| {
            if *x > *acc.1 {
                (i, x)
            } else {
                acc
            }
        });
    if !max.is_finite() {
        return Err(Error::NonFinite("cross-entropy logits".into()));
    }
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .map(|(_, x)| (x - max).exp())
        .sum();
    Ok((max - logits[label]) + rest.ln_1p())
}

/// Loss and `dL/dlogits = softmax(logits) - onehot(label)`.
pub fn cross_entropy_with_grad(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    let loss = cross_entropy(logits, label)?;
    let mut g = softmax(logits, None)?;
    g[label] -= 1.0;
    Ok((loss, g))
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_logits_are_uniform() {
        let p = softmax(&[2.5, 2.5, 2.5], None).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mask_zeroes_positions() {
        let p = softmax(&[0.0, 0.0], Some(&[true, false])).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn all_masked_is_an_error() {
        assert!(softmax(&[1.0, 2.0], Some(&[false, false])).is_err());
        assert!(softmax(&[], None).is_err());
    }

    #[test]
    fn extreme_logits_stay_finite() {
        // 1/(1+e) and e/(1+e) to 40 digits
        let p = softmax(&[1000.0, 1001.0], None).unwrap();
        assert!((p[0] - 0.268_941_421_369_995_1).abs() < 1e-15);
        assert!((p[1] - 0.731_058_578_630_004_9).abs() < 1e-15);
        let p = softmax(&[-1000.0, 1000.0, 0.0], None).unwrap();
        assert!(p.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn cross_entropy_anchors() {
        let l = cross_entropy(&[0.3; 5], 2).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-15);
        // log1p(exp(-20)) = 2.0611536203143807e-9
        let l = cross_entropy(&[10.0, -10.0], 0).unwrap();
        assert!((l - 2.061_153_620_314_380_7e-9).abs() < 1e-22);
        assert!(cross_entropy(&[1.0], 1).is_err());
        let l = cross_entropy(&[1000.0, -1000.0], 1).unwrap();
        assert!((l - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn ties_break_low() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn softmax_backward_matches_differences() {
        let z = [0.3, -1.2, 0.8, 0.1];
        let w = [1.0, -2.0, 0.5, 3.0];
        let f = |z: &[f64]| -> f64 {
            softmax(z, None)
                .unwrap()
                .iter()
                .zip(&w)
                .map(|(p, w)| p * w)
                .sum()
        };
        let p = softmax(&z, None).unwrap();
        let g = softmax_backward(&p, &w);
        for i in 0..4 {
            let mut zp = z;
            let mut zm = z;
            zp[i] += 1e-6;
            zm[i] -= 1e-6;
            let num = (f(&zp) - f(&zm)) / 2e-6;
            assert!((num - g[i]).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(
            v in prop::collection::vec(-1000.0f64..1000.0, 1..20),
            mask_bits in prop::collection::vec(any::<bool>(), 20),
        ) {
            let mut mask: Vec<bool> = mask_bits[..v.len()].to_vec();
            mask[0] = true;
            let p = softmax(&v, Some(&mask)).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            for (pi, live) in p.iter().zip(&mask) {
                prop_assert!(*pi >= 0.0);
                if !live { prop_assert_eq!(*pi, 0.0); }
            }
        }

        #[test]
        fn cross_entropy_is_nonnegative(
            v in prop::collection::vec(-1000.0f64..1000.0, 2..10),
            label in 0usize..2,
        ) {
            let l = cross_entropy(&v, label).unwrap();
            prop_assert!(l >= 0.0 && l.is_finite());
        }
    }
}
