use std::collections::BTreeSet;

use mlada::episodes::{sample_episode, EpisodeSpec, SourceExclusion};
use mlada::harness::{gen_synthetic_corpus, SynthConfig};
use mlada::model::{
    generate_attention, one_hot, ridge_fit, ridge_loss, ridge_loss_grad, with_bias, Generator, ModelConfig,
};
use mlada::nn::{Mat, SentenceMatrix};
use mlada::seeded_rng;
use proptest::prelude::*;
use rand::Rng;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, cols), rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ridge_solution_is_stationary(
        (rows, labels, n_way) in (2usize..=4, 1usize..=8).prop_flat_map(|(n_way, d)| {
            (n_way..=12).prop_flat_map(move |m| {
                (matrix(m, d), prop::collection::vec(0..n_way, m), Just(n_way))
            })
        }),
        lambda in 0.05f64..5.0,
    ) {
        let x = with_bias(&rows).unwrap();
        let y = one_hot(&labels, n_way).unwrap();
        let clf = ridge_fit(&x, &y, lambda).unwrap();
        let g = ridge_loss_grad(&x, &y, &clf.theta, lambda).unwrap();
        prop_assert!(g.max_abs() < 1e-9);
        let base = ridge_loss(&x, &y, &clf.theta, lambda).unwrap();
        let mut nudged = clf.theta.clone();
        nudged.as_mut_slice()[0] += 1e-4;
        prop_assert!(ridge_loss(&x, &y, &nudged, lambda).unwrap() >= base);
    }

    #[test]
    fn attention_is_a_distribution(seed in 0u64..1000, m in 1usize..20) {
        let config = ModelConfig { dim: 5, hidden: 3, ..Default::default() };
        let g = Generator::init(&config, &mut seeded_rng(seed, 0));
        let mut rng = seeded_rng(seed, 1);
        let cols: Vec<Vec<f64>> = (0..m).map(|_| (0..5).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let k = generate_attention(&SentenceMatrix::from_columns(5, &cols).unwrap(), &g, None).unwrap();
        prop_assert_eq!(k.len(), m);
        prop_assert!(k.iter().all(|&v| v > 0.0 && v <= 1.0));
        prop_assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn episodes_respect_the_protocol(
        seed in 0u64..500,
        n in 2usize..=5,
        k in 1usize..=4,
        l in 1usize..=6,
        current in any::<bool>(),
    ) {
        let c = gen_synthetic_corpus(&SynthConfig { n_classes: 10, examples_per_class: 12, dim: 4, ..Default::default() }).unwrap();
        let allowed: BTreeSet<usize> = (0..8).collect();
        let exclusion = if current { SourceExclusion::Current } else { SourceExclusion::All };
        let spec = EpisodeSpec::new(n, k, l).unwrap();
        let ep = sample_episode(&c.dataset, &allowed, &spec, exclusion, &mut seeded_rng(seed, 0)).unwrap();
        prop_assert_eq!(ep.support.len(), n * k);
        prop_assert_eq!(ep.query.len(), n * l);
        prop_assert_eq!(ep.source.len(), n * l);
        let s: BTreeSet<usize> = ep.support.iter().map(|p| p.0).collect();
        let q: BTreeSet<usize> = ep.query.iter().map(|p| p.0).collect();
        prop_assert!(s.is_disjoint(&q));
        for &(i, local) in ep.support.iter().chain(&ep.query) {
            prop_assert_eq!(c.dataset.example(i).label, ep.classes[local]);
        }
        for (j, &i) in ep.source.iter().enumerate() {
            let label = c.dataset.example(i).label;
            prop_assert!(allowed.contains(&label));
            if current {
                prop_assert_ne!(label, ep.classes[j / l]);
            } else {
                prop_assert!(!ep.classes.contains(&label));
            }
        }
    }

    #[test]
    fn one_hot_rows_sum_to_one(labels in prop::collection::vec(0usize..6, 1..30)) {
        let y: Mat = one_hot(&labels, 6).unwrap();
        for (i, &l) in labels.iter().enumerate() {
            prop_assert_eq!(y.row(i).iter().sum::<f64>(), 1.0);
            prop_assert_eq!(y.get(i, l), 1.0);
        }
    }
}
