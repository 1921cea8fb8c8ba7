use std::ops::Deref;

use rand::Rng;

use super::{ModelConfig, Variant};
use crate::nn::{
    bilstm_backward, bilstm_forward_cached, dot, ffn_backward, ffn_forward_cached, softmax,
    softmax_backward, Activation, BiLstmCache, Dense, FfnCache, LstmParams, Param, ParamSet,
    SentenceMatrix,
};
use crate::{Error, Result};

/// Meta-knowledge generator: a BiLSTM and a single affine scoring layer.
///
/// `proj` exists only for the no-adversarial variant, where it maps the
/// mean-pooled BiLSTM state (2H) to a d-dimensional sentence vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    /// 1 x 2H
    pub attn_w: Param,
    /// 1 x 1
    pub attn_b: Param,
    pub proj: Option<Dense>,
}

impl Generator {
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        let h = config.hidden;
        let d = config.dim;
        let fwd = LstmParams::init(d, h, rng);
        let bwd = LstmParams::init(d, h, rng);
        let attn_w = Param::uniform(1, 2 * h, 1.0 / ((2 * h) as f64).sqrt(), rng);
        let proj = (config.variant() == Variant::NoAdversarial)
            .then(|| Dense::init(2 * h, d, Activation::Identity, rng));
        Generator {
            fwd,
            bwd,
            attn_w,
            attn_b: Param::zeros(1, 1),
            proj,
        }
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        let h = config.hidden;
        Generator {
            fwd: LstmParams::zeros(config.dim, h),
            bwd: LstmParams::zeros(config.dim, h),
            attn_w: Param::zeros(1, 2 * h),
            attn_b: Param::zeros(1, 1),
            proj: (config.variant() == Variant::NoAdversarial)
                .then(|| Dense::zeros(2 * h, config.dim, Activation::Identity)),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }
}

impl ParamSet for Generator {
    fn named_params(&self) -> Vec<(String, &Param)> {
        let mut v = self.fwd.named("gen.fwd");
        v.extend(self.bwd.named("gen.bwd"));
        v.push(("gen.attn_w".into(), &self.attn_w));
        v.push(("gen.attn_b".into(), &self.attn_b));
        if let Some(p) = &self.proj {
            v.push(("gen.proj.w".into(), &p.w));
            v.push(("gen.proj.b".into(), &p.b));
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = Vec::new();
        v.extend(self.fwd.params_mut());
        v.extend(self.bwd.params_mut());
        v.push(&mut self.attn_w);
        v.push(&mut self.attn_b);
        if let Some(p) = &mut self.proj {
            v.push(&mut p.w);
            v.push(&mut p.b);
        }
        v
    }
}

/// Per-word attention weights of one sentence; a probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionVector(Vec<f64>);

impl AttentionVector {
    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for AttentionVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn attention_scores(cache: &BiLstmCache, g: &Generator) -> Vec<f64> {
    let w = g.attn_w.value.as_slice();
    let b = g.attn_b.value.get(0, 0);
    (0..cache.len()).map(|t| dot(w, &cache.context(t)) + b).collect()
}

/// `k = softmax(ω · h_t + b)` over the BiLSTM states of `w`.
pub fn generate_attention(
    w: &SentenceMatrix,
    g: &Generator,
    mask: Option<&[bool]>,
) -> Result<AttentionVector> {
    let cache = bilstm_forward_cached(w, &g.fwd, &g.bwd)?;
    Ok(AttentionVector(softmax(&attention_scores(&cache, g), mask)?))
}

/// Interaction layer: `s = W k`.
pub fn fuse(w: &SentenceMatrix, k: &[f64]) -> Result<Vec<f64>> {
    w.weighted_sum(k)
}

/// Ablation of the interaction layer: `[k zero-padded to max_len; mean(W)]`.
pub fn fuse_concat(w: &SentenceMatrix, k: &[f64], max_len: usize) -> Result<Vec<f64>> {
    if k.len() != w.len() {
        return Err(Error::Shape(format!("{} weights for {} words", k.len(), w.len())));
    }
    if w.len() > max_len {
        return Err(Error::Invalid(format!(
            "sentence of {} words exceeds max_len {max_len}",
            w.len()
        )));
    }
    let mut out = vec![0.0; max_len];
    out[..k.len()].copy_from_slice(k);
    out.extend(w.column_mean());
    Ok(out)
}

/// Classifier input for one sentence, bias entry included.
pub fn encode(w: &SentenceMatrix, g: &Generator, config: &ModelConfig) -> Result<Vec<f64>> {
    let mut f = encode_forward(w, g, config)?.features;
    f.push(1.0);
    Ok(f)
}

/// Forward pass of the sentence encoder with the state its reverse pass needs.
#[derive(Debug, Clone)]
pub struct Encoding {
    /// Feature vector without the bias entry.
    pub features: Vec<f64>,
    /// Attention weights (absent for the no-adversarial encoder).
    pub attention: Option<Vec<f64>>,
    lstm: BiLstmCache,
    proj: Option<(Vec<f64>, FfnCache)>,
}

pub fn encode_forward(w: &SentenceMatrix, g: &Generator, config: &ModelConfig) -> Result<Encoding> {
    if w.dim() != config.dim {
        return Err(Error::Shape(format!(
            "{}-dimensional words for a {}-dimensional model",
            w.dim(),
            config.dim
        )));
    }
    let lstm = bilstm_forward_cached(w, &g.fwd, &g.bwd)?;
    match config.variant() {
        Variant::Full | Variant::ConcatFusion => {
            let k = softmax(&attention_scores(&lstm, g), None)?;
            let features = if config.variant() == Variant::Full {
                fuse(w, &k)?
            } else {
                fuse_concat(w, &k, config.max_len)?
            };
            Ok(Encoding {
                features,
                attention: Some(k),
                lstm,
                proj: None,
            })
        }
        Variant::NoAdversarial => {
            let proj = g
                .proj
                .as_ref()
                .ok_or_else(|| Error::Config("no-adversarial generator lacks a projection".into()))?;
            let m = lstm.len() as f64;
            let mut pooled = vec![0.0; 2 * g.hidden()];
            for t in 0..lstm.len() {
                crate::nn::axpy(1.0 / m, &lstm.context(t), &mut pooled);
            }
            let cache = ffn_forward_cached(&pooled, std::slice::from_ref(proj))?;
            Ok(Encoding {
                features: cache.output().to_vec(),
                attention: None,
                lstm,
                proj: Some((pooled, cache)),
            })
        }
    }
}

/// Accumulates `dL/dβ` given `dL/d features` (bias entry excluded).
pub fn encode_backward(
    enc: &Encoding,
    w: &SentenceMatrix,
    d_features: &[f64],
    g: &mut Generator,
    config: &ModelConfig,
) {
    debug_assert_eq!(d_features.len(), enc.features.len());
    let m = enc.lstm.len();
    let two_h = 2 * g.hidden();
    let d_ctx: Vec<Vec<f64>> = match config.variant() {
        Variant::Full | Variant::ConcatFusion => {
            let k = enc.attention.as_ref().expect("attention encoders cache k");
            let dk: Vec<f64> = if config.variant() == Variant::Full {
                w.columns().map(|col| dot(col, d_features)).collect()
            } else {
                d_features[..m].to_vec()
            };
            let de = softmax_backward(k, &dk);
            let attn_w = g.attn_w.value.as_slice().to_vec();
            let mut d_ctx = Vec::with_capacity(m);
            for (t, &de_t) in de.iter().enumerate() {
                let ctx = enc.lstm.context(t);
                crate::nn::axpy(de_t, &ctx, g.attn_w.grad.as_mut_slice());
                d_ctx.push(attn_w.iter().map(|w| de_t * w).collect());
            }
            g.attn_b.grad.as_mut_slice()[0] += de.iter().sum::<f64>();
            d_ctx
        }
        Variant::NoAdversarial => {
            let (_, cache) = enc.proj.as_ref().expect("projection cached");
            let proj = g.proj.as_mut().expect("projection present");
            let d_pooled = ffn_backward(cache, d_features, std::slice::from_mut(proj), true);
            let scale = 1.0 / m as f64;
            let d: Vec<f64> = d_pooled.iter().map(|v| v * scale).collect();
            debug_assert_eq!(d.len(), two_h);
            vec![d; m]
        }
    };
    bilstm_backward(&enc.lstm, w, &d_ctx, &mut g.fwd, &mut g.bwd);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn cfg(d: usize, h: usize) -> ModelConfig {
        ModelConfig {
            hidden: h,
            disc_hidden: [8, 4],
            max_len: 6,
            ..ModelConfig::with_dim(d)
        }
    }

    fn sentence(d: usize, m: usize, seed: u64) -> SentenceMatrix {
        let mut rng = seeded_rng(seed, 3);
        let cols: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        SentenceMatrix::from_columns(d, &cols).unwrap()
    }

    #[test]
    fn zero_scorer_is_uniform() {
        let c = cfg(5, 3);
        let mut g = Generator::init(&c, &mut seeded_rng(1, 0));
        g.attn_w.value.fill(0.0);
        let k = generate_attention(&sentence(5, 4, 2), &g, None).unwrap();
        for x in k.iter() {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn single_word_gets_all_weight() {
        let c = cfg(5, 3);
        let g = Generator::init(&c, &mut seeded_rng(1, 0));
        let k = generate_attention(&sentence(5, 1, 2), &g, None).unwrap();
        assert_eq!(&*k, &[1.0]);
    }

    #[test]
    fn symmetric_context_gives_equal_weights() {
        // fwd == bwd and ω symmetric across halves: positions t and m-1-t of a
        // palindrome see mirrored contexts and must score the same.
        let c = cfg(4, 3);
        let mut rng = seeded_rng(4, 0);
        let mut g = Generator::init(&c, &mut rng);
        g.bwd = g.fwd.clone();
        let half: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        g.attn_w.value.as_mut_slice().copy_from_slice(&[half.clone(), half].concat());
        let s = sentence(4, 2, 8);
        let pal = SentenceMatrix::from_columns(
            4,
            &[s.column(0).to_vec(), s.column(1).to_vec(), s.column(0).to_vec()],
        )
        .unwrap();
        let k = generate_attention(&pal, &g, None).unwrap();
        assert!((k[0] - k[2]).abs() < 1e-15);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mask_respected() {
        let c = cfg(3, 2);
        let g = Generator::init(&c, &mut seeded_rng(2, 0));
        let k = generate_attention(&sentence(3, 4, 1), &g, Some(&[true, false, true, false])).unwrap();
        assert_eq!((k[1], k[3]), (0.0, 0.0));
        assert!(generate_attention(&sentence(3, 2, 1), &g, Some(&[false, false])).is_err());
    }

    #[test]
    fn fusion_identities() {
        let w = sentence(4, 3, 5);
        let mean = fuse(&w, &[1.0 / 3.0; 3]).unwrap();
        for (a, b) in mean.iter().zip(w.column_mean()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(fuse(&w, &[0.0, 1.0, 0.0]).unwrap(), w.column(1));
        let k = [0.2, 0.5, 0.3];
        let s = fuse(&w, &k).unwrap();
        for r in 0..4 {
            let naive: f64 = (0..3).map(|t| k[t] * w.column(t)[r]).sum();
            assert!((s[r] - naive).abs() < 1e-12);
        }
        assert!(fuse(&w, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn concat_layout() {
        let w = sentence(3, 4, 6);
        let f = fuse_concat(&w, &[0.25; 4], 4).unwrap();
        assert_eq!(&f[..4], &[0.25; 4]);
        assert_eq!(&f[4..], w.column_mean().as_slice());
        let w2 = sentence(3, 2, 6);
        let f = fuse_concat(&w2, &[0.4, 0.6], 4).unwrap();
        assert_eq!(f.len(), 7);
        assert_eq!((f[2], f[3]), (0.0, 0.0));
        assert!(fuse_concat(&sentence(3, 5, 1), &[0.2; 5], 4).is_err());
    }

    #[test]
    fn encode_dispatch() {
        let c = cfg(5, 3);
        let g = Generator::init(&c, &mut seeded_rng(3, 0));
        let w = sentence(5, 4, 9);
        let x = encode(&w, &g, &c).unwrap();
        let k = generate_attention(&w, &g, None).unwrap();
        let mut expect = fuse(&w, &k).unwrap();
        expect.push(1.0);
        assert_eq!(x, expect);

        let na = ModelConfig {
            no_adversarial: true,
            ..c.clone()
        };
        let gz = Generator::zeros(&na);
        let x = encode(&w, &gz, &na).unwrap();
        assert_eq!(x, [vec![0.0; 5], vec![1.0]].concat());

        let cf = ModelConfig {
            concat_fusion: true,
            ..c
        };
        let x = encode(&w, &Generator::init(&cf, &mut seeded_rng(3, 0)), &cf).unwrap();
        assert_eq!(x.len(), cf.max_len + cf.dim + 1);
    }
}
