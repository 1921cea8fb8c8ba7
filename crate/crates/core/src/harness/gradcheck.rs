use rand::Rng as _;
use serde::Serialize;

use super::reference;
use crate::model::{disc_loss_backward, EpisodeBatch, Mlada, ModelConfig};
use crate::nn::{grad_check, sample_coordinates, Dd, ParamSet, Real, SentenceMatrix};
use crate::{seeded_rng, Result};

pub const GRADCHECK_TOLERANCE: f64 = 1e-5;
pub const GRADCHECK_EPS: f64 = 1e-5;
pub const GRADCHECK_COORDS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckOutcome {
    pub name: String,
    pub max_rel_error: f64,
    pub coordinates: usize,
    pub parameters: usize,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

impl GradCheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOLERANCE
    }
}

/// The instance the finite-difference suite runs on: d=6, H=4, 2-way,
/// 1-shot, 2 queries per class, sentences of 2 to 5 tokens.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        dim: 6,
        hidden: 4,
        max_len: 5,
        ..Default::default()
    }
}

/// Random 2-way 1-shot batch with 2 queries and 2 source sentences per class.
pub fn tiny_batch(dim: usize, seed: u64) -> EpisodeBatch {
    let mut rng = seeded_rng(seed, 17);
    let mut sentence = || {
        let m = rng.random_range(2..=5);
        let cols: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        SentenceMatrix::from_columns(dim, &cols).expect("consistent columns")
    };
    let mut b = EpisodeBatch {
        n_way: 2,
        support: vec![],
        support_labels: vec![],
        query: vec![],
        query_labels: vec![],
        source: vec![],
    };
    for c in 0..2 {
        b.support.push(sentence());
        b.support_labels.push(c);
        for _ in 0..2 {
            b.query.push(sentence());
            b.query_labels.push(c);
            b.source.push(sentence());
        }
    }
    b
}

/// `dL^G/dβ` against central differences, θ fit on the support set first.
/// The numeric side evaluates the loss in double-double precision.
pub fn check_generator(config: ModelConfig, seed: u64, name: &str) -> Result<GradCheckOutcome> {
    let mut model = Mlada::new(config.clone(), seed)?;
    let batch = tiny_batch(config.dim, seed);
    model.fit_classifier(&batch)?;
    model.generator.zero_grad();
    model.gen_loss_backward(&batch)?;
    let analytic = model.generator.flat_grads();
    let point = model.generator.flat_values();
    let coords = sample_coordinates(point.len(), GRADCHECK_COORDS, &mut seeded_rng(seed, 18));
    let theta = model
        .classifier
        .as_ref()
        .map(|c| c.theta.clone())
        .ok_or_else(|| crate::Error::Invalid("classifier not fit".into()))?;
    let mut probe = model.generator.clone();
    let report = grad_check(
        |w| {
            probe.load_flat_values(w)?;
            Ok(reference::gen_loss::<Dd>(
                &batch.query,
                &batch.query_labels,
                &batch.source,
                &theta,
                &probe,
                model.discriminator.as_ref(),
                &config,
            ))
        },
        &point,
        &analytic,
        &coords,
        GRADCHECK_EPS,
    )?;
    Ok(GradCheckOutcome {
        name: name.to_string(),
        max_rel_error: report.max_rel_error,
        coordinates: report.coordinates_checked,
        parameters: point.len(),
        worst_index: report.worst_index,
        analytic_at_worst: report.analytic_at_worst,
        numeric_at_worst: report.numeric_at_worst,
    })
}

/// `dL^D/dμ` against central differences.
pub fn check_discriminator(config: ModelConfig, seed: u64, name: &str) -> Result<GradCheckOutcome> {
    let mut model = Mlada::new(config.clone(), seed)?;
    let batch = tiny_batch(config.dim, seed);
    let q = model.features(&batch.query)?;
    let s = model.features(&batch.source)?;
    let disc = model
        .discriminator
        .as_mut()
        .ok_or_else(|| crate::Error::Config("variant has no discriminator".into()))?;
    disc.zero_grad();
    disc_loss_backward(&q, &s, disc, true)?;
    let analytic = disc.flat_grads();
    let point = disc.flat_values();
    let coords = sample_coordinates(point.len(), GRADCHECK_COORDS, &mut seeded_rng(seed, 19));
    let lift = |rows: &[Vec<f64>]| -> Vec<Vec<Dd>> {
        rows.iter().map(|r| r.iter().map(|&x| Dd::from_f64(x)).collect()).collect()
    };
    let (q, s) = (lift(&q), lift(&s));
    let mut probe = disc.clone();
    let report = grad_check(
        |w| {
            probe.load_flat_values(w)?;
            Ok(reference::disc_loss(&q, &s, &probe))
        },
        &point,
        &analytic,
        &coords,
        GRADCHECK_EPS,
    )?;
    Ok(GradCheckOutcome {
        name: name.to_string(),
        max_rel_error: report.max_rel_error,
        coordinates: report.coordinates_checked,
        parameters: point.len(),
        worst_index: report.worst_index,
        analytic_at_worst: report.analytic_at_worst,
        numeric_at_worst: report.numeric_at_worst,
    })
}

/// Every gradient the trainer relies on, on the tiny instance.
pub fn run_gradcheck_suite(seed: u64) -> Result<Vec<GradCheckOutcome>> {
    let base = tiny_config();
    Ok(vec![
        check_generator(base.clone(), seed, "generator dL^G/dbeta")?,
        check_discriminator(base.clone(), seed, "discriminator dL^D/dmu")?,
        check_generator(
            ModelConfig {
                concat_fusion: true,
                ..base.clone()
            },
            seed,
            "generator dL^G/dbeta (concat fusion)",
        )?,
        check_discriminator(
            ModelConfig {
                concat_fusion: true,
                ..base.clone()
            },
            seed,
            "discriminator dL^D/dmu (concat fusion)",
        )?,
        check_generator(
            ModelConfig {
                no_adversarial: true,
                ..base
            },
            seed,
            "generator dCE/dbeta (no adversarial)",
        )?,
    ])
}
