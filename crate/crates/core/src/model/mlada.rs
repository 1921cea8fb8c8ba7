use std::hash::{Hash, Hasher};

use serde::Serialize;

use super::{
    disc_loss, disc_loss_backward, encode_backward, encode_forward, one_hot, ridge_fit, ridge_loss,
    ridge_predict, with_bias, Discriminator, Generator, ModelConfig, RidgeClassifier, Variant,
};
use crate::corpus::{embed_sentence, Dataset, EmbeddingTable};
use crate::episodes::Episode;
use crate::nn::{argmax, cross_entropy_with_grad, ArrayStore, Optimizer, ParamSet, SentenceMatrix};
use crate::{seeded_rng, Error, Result};

const INIT_STREAM: u64 = 0x6d6c_6164_61;

/// Embedded sentences of one episode with local labels.
#[derive(Debug, Clone)]
pub struct EpisodeBatch {
    pub n_way: usize,
    pub support: Vec<SentenceMatrix>,
    pub support_labels: Vec<usize>,
    pub query: Vec<SentenceMatrix>,
    pub query_labels: Vec<usize>,
    /// May be empty (evaluation tasks carry no source set).
    pub source: Vec<SentenceMatrix>,
}

impl EpisodeBatch {
    pub fn from_episode(dataset: &Dataset, table: &EmbeddingTable, episode: &Episode) -> Result<Self> {
        let embed = |i: usize| embed_sentence(dataset.example(i), table);
        Ok(EpisodeBatch {
            n_way: episode.n_way(),
            support: episode.support.iter().map(|&(i, _)| embed(i)).collect::<Result<_>>()?,
            support_labels: episode.support.iter().map(|&(_, l)| l).collect(),
            query: episode.query.iter().map(|&(i, _)| embed(i)).collect::<Result<_>>()?,
            query_labels: episode.query.iter().map(|&(_, l)| l).collect(),
            source: episode.source.iter().map(|&i| embed(i)).collect::<Result<_>>()?,
        })
    }
}

/// Generator (β), discriminator (μ) and the most recently fit head (θ).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlada {
    pub config: ModelConfig,
    pub generator: Generator,
    /// Absent for the no-adversarial variant.
    pub discriminator: Option<Discriminator>,
    pub classifier: Option<RidgeClassifier>,
}

/// Outcome of the generator phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorStep {
    /// The minimized objective: `CE − L^D`, or `CE` alone without a discriminator.
    pub loss: f64,
    pub query_ce: f64,
    pub disc_loss: Option<f64>,
    pub query_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeMetrics {
    pub rr_loss: f64,
    pub disc_loss: Option<f64>,
    pub gen_loss: f64,
    pub query_ce: f64,
    pub query_accuracy: f64,
}

/// One optimizer per parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizers {
    pub generator: Optimizer,
    pub discriminator: Optimizer,
}

impl Optimizers {
    pub fn adam(lr: f64) -> Self {
        Optimizers {
            generator: Optimizer::adam(lr),
            discriminator: Optimizer::adam(lr),
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Optimizers {
            generator: Optimizer::Sgd { lr },
            discriminator: Optimizer::Sgd { lr },
        }
    }
}

fn finite(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{what} = {v}")))
    }
}

impl Mlada {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(seed, INIT_STREAM);
        let generator = Generator::init(&config, &mut rng);
        let discriminator = (config.variant() != Variant::NoAdversarial)
            .then(|| Discriminator::init(config.feature_dim(), config.disc_hidden, &mut rng));
        Ok(Mlada {
            config,
            generator,
            discriminator,
            classifier: None,
        })
    }

    /// Feature vectors (bias entry excluded) under the current generator.
    pub fn features(&self, sentences: &[SentenceMatrix]) -> Result<Vec<Vec<f64>>> {
        sentences
            .iter()
            .map(|w| Ok(encode_forward(w, &self.generator, &self.config)?.features))
            .collect()
    }

    /// Closed-form head on a support set; the model is left untouched.
    pub fn fit_head(&self, support: &[SentenceMatrix], labels: &[usize], n_way: usize) -> Result<RidgeClassifier> {
        let x = with_bias(&self.features(support)?)?;
        ridge_fit(&x, &one_hot(labels, n_way)?, self.config.lambda)
    }

    /// Phase 1: refit θ on the support set with β fixed. Returns the ridge
    /// objective at the solution.
    pub fn fit_classifier(&mut self, batch: &EpisodeBatch) -> Result<f64> {
        let x = with_bias(&self.features(&batch.support)?)?;
        let y = one_hot(&batch.support_labels, batch.n_way)?;
        let clf = ridge_fit(&x, &y, self.config.lambda)?;
        let loss = finite("ridge loss", ridge_loss(&x, &y, &clf.theta, clf.lambda)?)?;
        self.classifier = Some(clf);
        Ok(loss)
    }

    fn classifier(&self) -> Result<&RidgeClassifier> {
        self.classifier
            .as_ref()
            .ok_or_else(|| Error::Invalid("classifier has not been fit on a support set".into()))
    }

    fn discriminator(&self) -> Result<&Discriminator> {
        self.discriminator
            .as_ref()
            .ok_or_else(|| Error::Invalid("this variant has no discriminator".into()))
    }

    pub fn disc_loss(&self, batch: &EpisodeBatch) -> Result<f64> {
        disc_loss(&self.features(&batch.query)?, &self.features(&batch.source)?, self.discriminator()?)
    }

    /// Phase 2: one optimizer step on μ against the discriminator loss.
    /// Returns the loss before the step.
    pub fn update_discriminator(&mut self, batch: &EpisodeBatch, opt: &mut Optimizer) -> Result<f64> {
        let q = self.features(&batch.query)?;
        let s = self.features(&batch.source)?;
        let disc = self
            .discriminator
            .as_mut()
            .ok_or_else(|| Error::Invalid("this variant has no discriminator".into()))?;
        disc.zero_grad();
        let g = disc_loss_backward(&q, &s, disc, true)?;
        let loss = finite("discriminator loss", g.loss)?;
        if !disc.flat_grads().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("discriminator gradient".into()));
        }
        opt.step_set(disc);
        Ok(loss)
    }

    /// Generator objective for the current (β, μ, θ), without gradients.
    pub fn gen_loss(&self, batch: &EpisodeBatch) -> Result<f64> {
        let clf = self.classifier()?;
        let q = self.features(&batch.query)?;
        let ce = mean_ce(&q, &batch.query_labels, clf)?;
        match self.config.variant() {
            Variant::NoAdversarial => Ok(ce),
            _ => Ok(ce - disc_loss(&q, &self.features(&batch.source)?, self.discriminator()?)?),
        }
    }

    /// Generator objective with its gradient accumulated into β's grads.
    /// θ and μ are treated as constants.
    pub fn gen_loss_backward(&mut self, batch: &EpisodeBatch) -> Result<GeneratorStep> {
        let clf = self.classifier()?.clone();
        if batch.query.is_empty() {
            return Err(Error::Invalid("empty query set".into()));
        }
        let p = self.config.feature_dim();
        let nq = batch.query.len() as f64;
        let q_enc = batch
            .query
            .iter()
            .map(|w| encode_forward(w, &self.generator, &self.config))
            .collect::<Result<Vec<_>>>()?;

        let mut ce = 0.0;
        let mut correct = 0usize;
        let mut d_query = Vec::with_capacity(q_enc.len());
        for (enc, &label) in q_enc.iter().zip(&batch.query_labels) {
            let mut x = enc.features.clone();
            x.push(1.0);
            let scores = ridge_predict(&clf, &x)?;
            if argmax(&scores) == label {
                correct += 1;
            }
            let (l, dz) = cross_entropy_with_grad(&scores, label)?;
            ce += l / nq;
            // scores = θᵀ[s; 1], so dL/ds = θ[..p] · dz / nq
            let ds: Vec<f64> = (0..p)
                .map(|r| clf.theta.row(r).iter().zip(&dz).map(|(t, g)| t * g).sum::<f64>() / nq)
                .collect();
            d_query.push(ds);
        }
        let query_ce = finite("query cross-entropy", ce)?;
        let query_accuracy = correct as f64 / nq;

        let mut disc_value = None;
        if let Some(disc) = self.discriminator.as_mut() {
            let src = batch
                .source
                .iter()
                .map(|w| encode_forward(w, &self.generator, &self.config))
                .collect::<Result<Vec<_>>>()?;
            let qf: Vec<Vec<f64>> = q_enc.iter().map(|e| e.features.clone()).collect();
            let sf: Vec<Vec<f64>> = src.iter().map(|e| e.features.clone()).collect();
            let g = disc_loss_backward(&qf, &sf, disc, false)?;
            for (dq, gq) in d_query.iter_mut().zip(&g.d_query) {
                dq.iter_mut().zip(gq).for_each(|(a, b)| *a -= b);
            }
            let d_src: Vec<Vec<f64>> = g.d_source.iter().map(|v| v.iter().map(|x| -x).collect()).collect();
            for ((enc, w), d) in src.iter().zip(&batch.source).zip(&d_src) {
                encode_backward(enc, w, d, &mut self.generator, &self.config);
            }
            disc_value = Some(finite("discriminator loss", g.loss)?);
        }
        for ((enc, w), d) in q_enc.iter().zip(&batch.query).zip(&d_query) {
            encode_backward(enc, w, d, &mut self.generator, &self.config);
        }
        Ok(GeneratorStep {
            loss: query_ce - disc_value.unwrap_or(0.0),
            query_ce,
            disc_loss: disc_value,
            query_accuracy,
        })
    }

    /// Phase 3: one optimizer step on β. Returns the objective before the step.
    pub fn update_generator(&mut self, batch: &EpisodeBatch, opt: &mut Optimizer) -> Result<GeneratorStep> {
        self.generator.zero_grad();
        let step = self.gen_loss_backward(batch)?;
        finite("generator loss", step.loss)?;
        if !self.generator.flat_grads().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("generator gradient".into()));
        }
        opt.step_set(&mut self.generator);
        Ok(step)
    }

    /// Refit the head on the support set and score the query set. β and μ
    /// are read only.
    pub fn evaluate(&self, batch: &EpisodeBatch) -> Result<f64> {
        if batch.query.is_empty() {
            return Err(Error::Invalid("empty query set".into()));
        }
        let clf = self.fit_head(&batch.support, &batch.support_labels, batch.n_way)?;
        let mut correct = 0usize;
        for (f, &label) in self.features(&batch.query)?.into_iter().zip(&batch.query_labels) {
            let mut x = f;
            x.push(1.0);
            if argmax(&ridge_predict(&clf, &x)?) == label {
                correct += 1;
            }
        }
        Ok(correct as f64 / batch.query.len() as f64)
    }

    /// Hashes of (β, μ, θ).
    pub fn fingerprints(&self) -> (u64, u64, u64) {
        let mu = self.discriminator.as_ref().map_or(0, ParamSet::fingerprint);
        let theta = self.classifier.as_ref().map_or(0, |c| {
            let mut h = std::collections::hash_map::DefaultHasher::new();
            c.theta.shape().hash(&mut h);
            for x in c.theta.as_slice() {
                x.to_bits().hash(&mut h);
            }
            h.finish()
        });
        (self.generator.fingerprint(), mu, theta)
    }

    pub fn all_finite(&self) -> bool {
        self.generator.all_finite() && self.discriminator.as_ref().is_none_or(ParamSet::all_finite)
    }

    /// Named arrays for β and μ plus the model configuration under
    /// `meta["model"]`.
    pub fn to_store(&self) -> Result<ArrayStore> {
        let mut store = ArrayStore::new();
        let config = serde_json::to_value(&self.config).map_err(|e| Error::Checkpoint(e.to_string()))?;
        store.meta.insert("model".into(), config);
        for (name, p) in self.generator.named_params() {
            store.insert(name, &p.value)?;
        }
        if let Some(d) = &self.discriminator {
            for (name, p) in d.named_params() {
                store.insert(name, &p.value)?;
            }
        }
        Ok(store)
    }

    pub fn from_store(store: &ArrayStore) -> Result<Self> {
        let config: ModelConfig = store
            .meta
            .get("model")
            .cloned()
            .ok_or_else(|| Error::Checkpoint("missing model configuration".into()))
            .and_then(|v| serde_json::from_value(v).map_err(|e| Error::Checkpoint(e.to_string())))?;
        config.validate()?;
        let mut generator = Generator::zeros(&config);
        load_set(&mut generator, store)?;
        let discriminator = if config.variant() == Variant::NoAdversarial {
            None
        } else {
            let mut d = Discriminator::zeros(config.feature_dim(), config.disc_hidden);
            load_set(&mut d, store)?;
            Some(d)
        };
        Ok(Mlada {
            config,
            generator,
            discriminator,
            classifier: None,
        })
    }
}

fn load_set<S: ParamSet>(set: &mut S, store: &ArrayStore) -> Result<()> {
    let shapes: Vec<(String, usize, usize)> = set
        .named_params()
        .iter()
        .map(|(n, p)| (n.clone(), p.value.rows(), p.value.cols()))
        .collect();
    for ((name, r, c), p) in shapes.into_iter().zip(set.params_mut()) {
        p.value = store.get_shaped(&name, r, c)?;
    }
    Ok(())
}

fn mean_ce(features: &[Vec<f64>], labels: &[usize], clf: &RidgeClassifier) -> Result<f64> {
    if features.is_empty() {
        return Err(Error::Invalid("empty query set".into()));
    }
    let mut total = 0.0;
    for (f, &label) in features.iter().zip(labels) {
        let mut x = f.clone();
        x.push(1.0);
        total += crate::nn::cross_entropy(&ridge_predict(clf, &x)?, label)?;
    }
    Ok(total / features.len() as f64)
}

/// The three-phase update for one training episode: refit θ, step μ on the
/// discriminator loss, step β on the generator loss. Without a
/// discriminator the middle phase is skipped and β follows the
/// classification loss alone.
pub fn episode_update(model: &mut Mlada, batch: &EpisodeBatch, opt: &mut Optimizers) -> Result<EpisodeMetrics> {
    let rr_loss = model.fit_classifier(batch)?;
    let disc_loss = match model.discriminator {
        Some(_) => Some(model.update_discriminator(batch, &mut opt.discriminator)?),
        None => None,
    };
    let g = model.update_generator(batch, &mut opt.generator)?;
    if !model.all_finite() {
        return Err(Error::NonFinite("parameters after update".into()));
    }
    Ok(EpisodeMetrics {
        rr_loss,
        disc_loss,
        gen_loss: g.loss,
        query_ce: g.query_ce,
        query_accuracy: g.query_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            dim: 6,
            hidden: 4,
            disc_hidden: [8, 6],
            max_len: 5,
            ..Default::default()
        }
    }

    fn random_sentence(d: usize, rng: &mut crate::Rng) -> SentenceMatrix {
        let m = rng.random_range(2..=5);
        let cols: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        SentenceMatrix::from_columns(d, &cols).unwrap()
    }

    fn tiny_batch(d: usize, n: usize, k: usize, l: usize, seed: u64) -> EpisodeBatch {
        let mut rng = seeded_rng(seed, 9);
        let mut b = EpisodeBatch {
            n_way: n,
            support: vec![],
            support_labels: vec![],
            query: vec![],
            query_labels: vec![],
            source: vec![],
        };
        for c in 0..n {
            for _ in 0..k {
                b.support.push(random_sentence(d, &mut rng));
                b.support_labels.push(c);
            }
            for _ in 0..l {
                b.query.push(random_sentence(d, &mut rng));
                b.query_labels.push(c);
                b.source.push(random_sentence(d, &mut rng));
            }
        }
        b
    }

    #[test]
    fn phases_touch_only_their_parameters() {
        let mut model = Mlada::new(tiny_config(), 1).unwrap();
        let mut opt = Optimizers::adam(0.01);
        for e in 0..5 {
            let batch = tiny_batch(6, 2, 1, 2, e);
            let (b0, m0, t0) = model.fingerprints();
            model.fit_classifier(&batch).unwrap();
            let (b1, m1, t1) = model.fingerprints();
            assert_eq!((b0, m0), (b1, m1));
            assert_ne!(t0, t1);
            model.update_discriminator(&batch, &mut opt.discriminator).unwrap();
            let (b2, m2, t2) = model.fingerprints();
            assert_eq!((b1, t1), (b2, t2));
            assert_ne!(m1, m2);
            model.update_generator(&batch, &mut opt.generator).unwrap();
            let (b3, m3, t3) = model.fingerprints();
            assert_eq!((m2, t2), (m3, t3));
            assert_ne!(b2, b3);
        }
    }

    #[test]
    fn small_sgd_steps_descend() {
        let mut model = Mlada::new(tiny_config(), 2).unwrap();
        let batch = tiny_batch(6, 2, 1, 2, 3);
        let mut opt = Optimizers::sgd(1e-4);
        model.fit_classifier(&batch).unwrap();
        let d0 = model.disc_loss(&batch).unwrap();
        model.update_discriminator(&batch, &mut opt.discriminator).unwrap();
        assert!(model.disc_loss(&batch).unwrap() < d0);
        let g0 = model.gen_loss(&batch).unwrap();
        model.update_generator(&batch, &mut opt.generator).unwrap();
        assert!(model.gen_loss(&batch).unwrap() < g0);
    }

    #[test]
    fn updates_are_deterministic() {
        let run = || {
            let mut model = Mlada::new(tiny_config(), 5).unwrap();
            let mut opt = Optimizers::adam(0.001);
            (0..3)
                .map(|e| episode_update(&mut model, &tiny_batch(6, 2, 1, 2, e), &mut opt).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn loss_anchors() {
        let mut model = Mlada::new(tiny_config(), 3).unwrap();
        let disc = model.discriminator.as_mut().unwrap();
        for l in &mut disc.layers {
            l.w.value.fill(0.0);
            l.b.value.fill(0.0);
        }
        let batch = tiny_batch(6, 5, 1, 1, 4);
        assert!((model.disc_loss(&batch).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        model.classifier = Some(RidgeClassifier {
            theta: crate::nn::Mat::zeros(7, 5),
            lambda: 1.0,
        });
        let expected = 5f64.ln() - std::f64::consts::LN_2;
        assert!((model.gen_loss(&batch).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn gen_loss_decomposes() {
        let mut model = Mlada::new(tiny_config(), 7).unwrap();
        let batch = tiny_batch(6, 2, 1, 2, 8);
        model.fit_classifier(&batch).unwrap();
        let clf = model.classifier.clone().unwrap();
        let q = model.features(&batch.query).unwrap();
        let mut ce = 0.0;
        for (f, &y) in q.iter().zip(&batch.query_labels) {
            let mut x = f.clone();
            x.push(1.0);
            ce += crate::nn::cross_entropy(&clf.theta.t_matvec(&x).unwrap(), y).unwrap();
        }
        ce /= q.len() as f64;
        let ld = model.disc_loss(&batch).unwrap();
        assert!((model.gen_loss(&batch).unwrap() - (ce - ld)).abs() < 1e-12);
        let step = model.clone().gen_loss_backward(&batch).unwrap();
        assert!((step.loss - (ce - ld)).abs() < 1e-12);
    }

    #[test]
    fn evaluation_is_read_only() {
        let model = Mlada::new(tiny_config(), 9).unwrap();
        let before = model.fingerprints();
        let acc = model.evaluate(&tiny_batch(6, 2, 1, 2, 10)).unwrap();
        assert!((0.0..=1.0).contains(&acc));
        assert_eq!(model.fingerprints(), before);
    }

    #[test]
    fn checkpoint_round_trip() {
        for cfg in [
            tiny_config(),
            ModelConfig {
                no_adversarial: true,
                ..tiny_config()
            },
        ] {
            let model = Mlada::new(cfg, 4).unwrap();
            let text = model.to_store().unwrap().to_json().unwrap();
            let back = Mlada::from_store(&ArrayStore::from_json(&text).unwrap()).unwrap();
            assert_eq!(back, model);
        }
    }
}
