use rand::Rng;

use crate::nn::{
    cross_entropy_with_grad, ffn_backward, ffn_forward, ffn_forward_cached, softmax, Activation, Dense,
    Param, ParamSet,
};
use crate::{Error, Result};

pub const LABEL_QUERY: usize = 0;
pub const LABEL_SOURCE: usize = 1;

/// Three-layer feed-forward domain classifier with a 2-way softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub layers: Vec<Dense>,
}

impl Discriminator {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: [usize; 2], rng: &mut R) -> Self {
        Discriminator {
            layers: vec![
                Dense::init(input, hidden[0], Activation::Relu, rng),
                Dense::init(hidden[0], hidden[1], Activation::Relu, rng),
                Dense::init(hidden[1], 2, Activation::Identity, rng),
            ],
        }
    }

    pub fn zeros(input: usize, hidden: [usize; 2]) -> Self {
        Discriminator {
            layers: vec![
                Dense::zeros(input, hidden[0], Activation::Relu),
                Dense::zeros(hidden[0], hidden[1], Activation::Relu),
                Dense::zeros(hidden[1], 2, Activation::Identity),
            ],
        }
    }

    pub fn input(&self) -> usize {
        self.layers[0].input()
    }
}

impl ParamSet for Discriminator {
    fn named_params(&self) -> Vec<(String, &Param)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("disc.layer{}.w", i + 1), &l.w),
                    (format!("disc.layer{}.b", i + 1), &l.b),
                ]
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }
}

/// `(P(query), P(source))` for one sentence feature vector.
pub fn discriminate(s: &[f64], disc: &Discriminator) -> Result<(f64, f64)> {
    let p = softmax(&ffn_forward(s, &disc.layers)?, None)?;
    Ok((p[LABEL_QUERY], p[LABEL_SOURCE]))
}

fn check_batches(query: &[Vec<f64>], source: &[Vec<f64>]) -> Result<()> {
    if query.is_empty() || source.is_empty() {
        return Err(Error::Invalid("discriminator loss over an empty batch".into()));
    }
    if query.len() != source.len() {
        return Err(Error::Invalid(format!(
            "query batch of {} against source batch of {}",
            query.len(),
            source.len()
        )));
    }
    Ok(())
}

/// Binary cross-entropy of the discriminator, averaged over all `2m`
/// samples, with source labeled 1 and query labeled 0.
pub fn disc_loss(query: &[Vec<f64>], source: &[Vec<f64>], disc: &Discriminator) -> Result<f64> {
    check_batches(query, source)?;
    let n = (query.len() + source.len()) as f64;
    let mut total = 0.0;
    for (batch, label) in [(query, LABEL_QUERY), (source, LABEL_SOURCE)] {
        for x in batch {
            let logits = ffn_forward(x, &disc.layers)?;
            total += crate::nn::cross_entropy(&logits, label)?;
        }
    }
    Ok(total / n)
}

#[derive(Debug, Clone)]
pub struct DiscLossGrad {
    pub loss: f64,
    pub d_query: Vec<Vec<f64>>,
    pub d_source: Vec<Vec<f64>>,
}

/// [`disc_loss`] with gradients w.r.t. every input vector; parameter
/// gradients are accumulated into `disc` only when `accumulate_params` is set.
pub fn disc_loss_backward(
    query: &[Vec<f64>],
    source: &[Vec<f64>],
    disc: &mut Discriminator,
    accumulate_params: bool,
) -> Result<DiscLossGrad> {
    check_batches(query, source)?;
    let n = (query.len() + source.len()) as f64;
    let mut out = DiscLossGrad {
        loss: 0.0,
        d_query: Vec::with_capacity(query.len()),
        d_source: Vec::with_capacity(source.len()),
    };
    for (batch, label) in [(query, LABEL_QUERY), (source, LABEL_SOURCE)] {
        for x in batch {
            let cache = ffn_forward_cached(x, &disc.layers)?;
            let (loss, mut dz) = cross_entropy_with_grad(cache.output(), label)?;
            out.loss += loss / n;
            dz.iter_mut().for_each(|g| *g /= n);
            let dx = ffn_backward(&cache, &dz, &mut disc.layers, accumulate_params);
            if label == LABEL_QUERY {
                out.d_query.push(dx);
            } else {
                out.d_source.push(dx);
            }
        }
    }
    Ok(out)
}
