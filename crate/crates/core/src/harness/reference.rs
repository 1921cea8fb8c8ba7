//! Straight-line re-implementation of the model's losses, generic over the
//! scalar type. It shares no code with the main forward pass and serves as
//! the finite-difference oracle: run in double-double precision, central
//! differences stay accurate even for gradient entries near 1e-9.

use crate::model::{Discriminator, Generator, ModelConfig, Variant};
use crate::nn::{Activation, Dense, LstmParams, Mat, Real, SentenceMatrix};

fn lift<R: Real>(m: &Mat) -> Vec<Vec<R>> {
    (0..m.rows())
        .map(|r| m.row(r).iter().map(|&x| R::from_f64(x)).collect())
        .collect()
}

struct Lstm<R> {
    w_ih: Vec<Vec<R>>,
    w_hh: Vec<Vec<R>>,
    b: Vec<R>,
    h: usize,
}

impl<R: Real> Lstm<R> {
    fn new(p: &LstmParams) -> Self {
        Lstm {
            w_ih: lift(&p.w_ih.value),
            w_hh: lift(&p.w_hh.value),
            b: p.b.value.as_slice().iter().map(|&x| R::from_f64(x)).collect(),
            h: p.hidden(),
        }
    }

    /// Hidden states after each input, in input order.
    fn run(&self, xs: &[Vec<R>]) -> Vec<Vec<R>> {
        let h = self.h;
        let mut hs = vec![R::zero(); h];
        let mut cs = vec![R::zero(); h];
        let mut out = Vec::with_capacity(xs.len());
        for x in xs {
            let mut z = self.b.clone();
            for (r, zr) in z.iter_mut().enumerate() {
                for (w, xv) in self.w_ih[r].iter().zip(x) {
                    *zr = *zr + *w * *xv;
                }
                for (w, hv) in self.w_hh[r].iter().zip(&hs) {
                    *zr = *zr + *w * *hv;
                }
            }
            for j in 0..h {
                let i = z[j].sigmoid();
                let f = z[h + j].sigmoid();
                let g = z[2 * h + j].tanh();
                let o = z[3 * h + j].sigmoid();
                cs[j] = f * cs[j] + i * g;
                hs[j] = o * cs[j].tanh();
            }
            out.push(hs.clone());
        }
        out
    }
}

fn words<R: Real>(w: &SentenceMatrix) -> Vec<Vec<R>> {
    w.columns()
        .map(|c| c.iter().map(|&x| R::from_f64(x)).collect())
        .collect()
}

/// Classifier features of one sentence (bias entry excluded).
pub fn features<R: Real>(w: &SentenceMatrix, g: &Generator, config: &ModelConfig) -> Vec<R> {
    let xs = words::<R>(w);
    let m = xs.len();
    let fwd = Lstm::new(&g.fwd).run(&xs);
    let rev: Vec<Vec<R>> = xs.iter().rev().cloned().collect();
    let mut bwd = Lstm::new(&g.bwd).run(&rev);
    bwd.reverse();
    let ctx: Vec<Vec<R>> = fwd.into_iter().zip(bwd).map(|(a, b)| [a, b].concat()).collect();

    let mean_words = || {
        let d = xs[0].len();
        (0..d)
            .map(|r| xs.iter().fold(R::zero(), |acc, x| acc + x[r]) / R::from_f64(m as f64))
            .collect::<Vec<R>>()
    };
    match config.variant() {
        Variant::NoAdversarial => {
            let two_h = ctx[0].len();
            let pooled: Vec<R> = (0..two_h)
                .map(|r| ctx.iter().fold(R::zero(), |acc, c| acc + c[r]) / R::from_f64(m as f64))
                .collect();
            dense(g.proj.as_ref().expect("no-adversarial generator has a projection"), &pooled)
        }
        variant => {
            let omega: Vec<R> = g.attn_w.value.as_slice().iter().map(|&x| R::from_f64(x)).collect();
            let b = R::from_f64(g.attn_b.value.get(0, 0));
            let scores: Vec<R> = ctx
                .iter()
                .map(|c| c.iter().zip(&omega).fold(b, |acc, (h, w)| acc + *h * *w))
                .collect();
            let k = softmax(&scores);
            if variant == Variant::Full {
                let d = xs[0].len();
                (0..d)
                    .map(|r| xs.iter().zip(&k).fold(R::zero(), |acc, (x, kt)| acc + x[r] * *kt))
                    .collect()
            } else {
                let mut out = vec![R::zero(); config.max_len];
                out[..m].copy_from_slice(&k);
                out.extend(mean_words());
                out
            }
        }
    }
}

fn softmax<R: Real>(z: &[R]) -> Vec<R> {
    let max = z.iter().fold(z[0], |a, &b| a.max(b));
    let e: Vec<R> = z.iter().map(|&v| (v - max).exp()).collect();
    let total = e.iter().fold(R::zero(), |a, &b| a + b);
    e.into_iter().map(|v| v / total).collect()
}

fn cross_entropy<R: Real>(z: &[R], label: usize) -> R {
    let max = z.iter().fold(z[0], |a, &b| a.max(b));
    let total = z.iter().fold(R::zero(), |a, &v| a + (v - max).exp());
    total.ln() + max - z[label]
}

fn dense<R: Real>(layer: &Dense, x: &[R]) -> Vec<R> {
    let w = &layer.w.value;
    (0..w.rows())
        .map(|r| {
            let z = w
                .row(r)
                .iter()
                .zip(x)
                .fold(R::from_f64(layer.b.value.get(r, 0)), |acc, (&wv, &xv)| acc + R::from_f64(wv) * xv);
            match layer.act {
                Activation::Identity => z,
                Activation::Relu => z.max(R::zero()),
                Activation::Tanh => z.tanh(),
                Activation::Sigmoid => z.sigmoid(),
            }
        })
        .collect()
}

/// Mean cross-entropy of the discriminator, query labeled 0, source 1.
pub fn disc_loss<R: Real>(query: &[Vec<R>], source: &[Vec<R>], disc: &Discriminator) -> R {
    let mut total = R::zero();
    for (batch, label) in [(query, 0), (source, 1)] {
        for x in batch {
            let logits = disc.layers.iter().fold(x.clone(), |h, l| dense(l, &h));
            total = total + cross_entropy(&logits, label);
        }
    }
    total / R::from_f64((query.len() + source.len()) as f64)
}

/// Mean query cross-entropy of the ridge scores `θᵀ[s; 1]`, minus the
/// discriminator loss when there is a discriminator.
pub fn gen_loss<R: Real>(
    query: &[SentenceMatrix],
    labels: &[usize],
    source: &[SentenceMatrix],
    theta: &Mat,
    g: &Generator,
    disc: Option<&Discriminator>,
    config: &ModelConfig,
) -> R {
    let qf: Vec<Vec<R>> = query.iter().map(|w| features(w, g, config)).collect();
    let mut ce = R::zero();
    for (s, &y) in qf.iter().zip(labels) {
        let scores: Vec<R> = (0..theta.cols())
            .map(|j| {
                let bias = R::from_f64(theta.get(theta.rows() - 1, j));
                s.iter()
                    .enumerate()
                    .fold(bias, |acc, (r, &v)| acc + R::from_f64(theta.get(r, j)) * v)
            })
            .collect();
        ce = ce + cross_entropy(&scores, y);
    }
    ce = ce / R::from_f64(qf.len() as f64);
    match disc {
        Some(d) => {
            let sf: Vec<Vec<R>> = source.iter().map(|w| features(w, g, config)).collect();
            ce - disc_loss(&qf, &sf, d)
        }
        None => ce,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{tiny_batch, tiny_config};
    use crate::model::Mlada;
    use crate::nn::Dd;

    #[test]
    fn agrees_with_the_model_in_every_variant() {
        for (no_adversarial, concat_fusion) in [(false, false), (false, true), (true, false)] {
            let config = ModelConfig {
                no_adversarial,
                concat_fusion,
                ..tiny_config()
            };
            for seed in 0..4 {
                let mut model = Mlada::new(config.clone(), seed).unwrap();
                let batch = tiny_batch(config.dim, seed);
                model.fit_classifier(&batch).unwrap();
                let theta = &model.classifier.as_ref().unwrap().theta;
                let want = model.gen_loss(&batch).unwrap();
                let args = (&batch.query, &batch.query_labels, &batch.source);
                let got: f64 = gen_loss(args.0, args.1, args.2, theta, &model.generator, model.discriminator.as_ref(), &config);
                let dd: Dd = gen_loss(args.0, args.1, args.2, theta, &model.generator, model.discriminator.as_ref(), &config);
                assert!((got - want).abs() < 1e-12, "{got} vs {want}");
                assert!((dd.to_f64() - want).abs() < 1e-12);
                if let Some(disc) = &model.discriminator {
                    let q = model.features(&batch.query).unwrap();
                    let s = model.features(&batch.source).unwrap();
                    let r: f64 = disc_loss(&q, &s, disc);
                    assert!((r - model.disc_loss(&batch).unwrap()).abs() < 1e-12);
                }
            }
        }
    }
}
