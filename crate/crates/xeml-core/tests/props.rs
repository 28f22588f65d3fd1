//! Property tests for the spec'd invariants.

use proptest::prelude::*;
use std::sync::Arc;

use xeml_core::ops::{flatten, log_softmax, pairwise_sq_dist, reshape};
use xeml_core::protonet::{classify, compute_prototypes};
use xeml_core::rng::{stream_rng, train_episode_stream};
use xeml_core::sampler::{sample_episode, EpisodeSpec, SampleMode};
use xeml_core::synth::generate_synthetic;
use xeml_core::{Tape, Tensor};

fn small_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<f32>> {
    proptest::collection::vec(-10.0f32..10.0, rows * cols)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pairwise_distances_are_nonnegative_and_diagonal_zero(data in small_matrix(4, 6)) {
        let mut tape = Tape::inference();
        let m = Tensor::from_vec(&[4, 6], data).unwrap();
        let d = pairwise_sq_dist(&mut tape, &m, &m).unwrap();
        for q in 0..4 {
            for p in 0..4 {
                let v = d.data()[q * 4 + p];
                prop_assert!(v >= 0.0);
                // Squared distance is symmetric in its two arguments.
                prop_assert_eq!(v, d.data()[p * 4 + q]);
            }
            prop_assert_eq!(d.data()[q * 4 + q], 0.0);
        }
    }

    #[test]
    fn log_softmax_rows_sum_to_one(data in small_matrix(3, 7)) {
        let mut tape = Tape::inference();
        let logp = log_softmax(&mut tape, &Tensor::from_vec(&[3, 7], data).unwrap()).unwrap();
        for r in 0..3 {
            let total: f64 = logp.data()[r * 7..(r + 1) * 7].iter().map(|&v| (v as f64).exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-6, "row {} sums to {}", r, total);
        }
    }

    #[test]
    fn prototype_scaling_by_powers_of_two_is_exact(
        data in small_matrix(6, 5),
        exp in -3i32..4,
    ) {
        // Powers of two distribute over float addition exactly.
        let a = (2.0f32).powi(exp);
        let labels = [0usize, 1, 2, 0, 1, 2];
        let mut tape = Tape::inference();
        let base = compute_prototypes(
            &mut tape,
            &Tensor::from_vec(&[6, 5], data.clone()).unwrap(),
            &labels,
            3,
        )
        .unwrap();
        let scaled_data: Vec<f32> = data.iter().map(|&v| a * v).collect();
        let scaled = compute_prototypes(
            &mut tape,
            &Tensor::from_vec(&[6, 5], scaled_data).unwrap(),
            &labels,
            3,
        )
        .unwrap();
        for (b, s) in base.prototypes.data().iter().zip(scaled.prototypes.data()) {
            prop_assert_eq!(a * b, *s);
        }
    }

    #[test]
    fn prototype_scaling_is_linear_within_tolerance(
        data in small_matrix(6, 5),
        a in -4.0f32..4.0,
    ) {
        let labels = [0usize, 1, 2, 0, 1, 2];
        let mut tape = Tape::inference();
        let base = compute_prototypes(
            &mut tape,
            &Tensor::from_vec(&[6, 5], data.clone()).unwrap(),
            &labels,
            3,
        )
        .unwrap();
        let scaled_data: Vec<f32> = data.iter().map(|&v| a * v).collect();
        let scaled = compute_prototypes(
            &mut tape,
            &Tensor::from_vec(&[6, 5], scaled_data).unwrap(),
            &labels,
            3,
        )
        .unwrap();
        for (b, s) in base.prototypes.data().iter().zip(scaled.prototypes.data()) {
            prop_assert!((a * b - s).abs() <= 1e-5 * (1.0 + b.abs() * a.abs()));
        }
    }

    #[test]
    fn common_shift_leaves_log_probabilities_unchanged(
        sup in small_matrix(4, 6),
        qry in small_matrix(3, 6),
        shift in proptest::collection::vec(-5.0f32..5.0, 6),
    ) {
        let labels = [0usize, 1, 2, 3];
        let logp_of = |sup: &[f32], qry: &[f32]| {
            let mut tape = Tape::inference();
            let protos = compute_prototypes(
                &mut tape,
                &Tensor::from_vec(&[4, 6], sup.to_vec()).unwrap(),
                &labels,
                4,
            )
            .unwrap();
            classify(&mut tape, &protos, &Tensor::from_vec(&[3, 6], qry.to_vec()).unwrap())
                .unwrap()
                .data()
                .to_vec()
        };
        let base = logp_of(&sup, &qry);
        let sup_shifted: Vec<f32> =
            sup.iter().enumerate().map(|(i, &v)| v + shift[i % 6]).collect();
        let qry_shifted: Vec<f32> =
            qry.iter().enumerate().map(|(i, &v)| v + shift[i % 6]).collect();
        let shifted = logp_of(&sup_shifted, &qry_shifted);
        for (a, b) in base.iter().zip(&shifted) {
            // The f32 rounding of (v + c) grows with the working magnitude,
            // so the tolerance scales with the log-probability size.
            prop_assert!((a - b).abs() < 1e-4 * (1.0 + a.abs()), "{} vs {}", a, b);
        }
    }

    #[test]
    fn unit_scale_shift_invariance_holds_at_spec_tolerance(
        sup in proptest::collection::vec(-1.0f32..1.0, 4 * 6),
        qry in proptest::collection::vec(-1.0f32..1.0, 2 * 6),
        c in -1.0f32..1.0,
    ) {
        let labels = [0usize, 1, 2, 3];
        let logp_of = |sup: &[f32], qry: &[f32]| {
            let mut tape = Tape::inference();
            let protos = compute_prototypes(
                &mut tape,
                &Tensor::from_vec(&[4, 6], sup.to_vec()).unwrap(),
                &labels,
                4,
            )
            .unwrap();
            classify(&mut tape, &protos, &Tensor::from_vec(&[2, 6], qry.to_vec()).unwrap())
                .unwrap()
                .data()
                .to_vec()
        };
        let base = logp_of(&sup, &qry);
        let sup_shifted: Vec<f32> = sup.iter().map(|&v| v + c).collect();
        let qry_shifted: Vec<f32> = qry.iter().map(|&v| v + c).collect();
        let shifted = logp_of(&sup_shifted, &qry_shifted);
        for (a, b) in base.iter().zip(&shifted) {
            prop_assert!((a - b).abs() < 1e-5, "{} vs {}", a, b);
        }
    }

    #[test]
    fn flatten_is_a_bijection(data in small_matrix(2, 12)) {
        let mut tape = Tape::inference();
        let x = Tensor::from_vec(&[2, 3, 2, 2], data).unwrap();
        let flat = flatten(&mut tape, &x).unwrap();
        let back = reshape(&flat, &[2, 3, 2, 2]).unwrap();
        prop_assert_eq!(back.data(), x.data());
    }

    #[test]
    fn sampled_episodes_keep_exact_label_balance(
        seed in 0u64..1000,
        k in 1usize..4,
        m in 1usize..4,
    ) {
        let ds = generate_synthetic(3, 5, 8, 8, 99).unwrap();
        let spec = EpisodeSpec { n_way: 3, k_shot: k, m_query: m, mode: SampleMode::SameDomain };
        let mut rng = stream_rng(seed, train_episode_stream(0));
        let ep = sample_episode(&ds, &spec, &mut rng).unwrap();
        prop_assert_eq!(ep.support.len(), 3 * k);
        prop_assert_eq!(ep.query.len(), 3 * m);
        for label in 0..3 {
            prop_assert_eq!(ep.support.iter().filter(|&&(_, l)| l == label).count(), k);
            prop_assert_eq!(ep.query.iter().filter(|&&(_, l)| l == label).count(), m);
        }
        // Equal-domain episodes never reuse an instance across S and Q.
        for (s, _) in &ep.support {
            for (q, _) in &ep.query {
                prop_assert!(!Arc::ptr_eq(s, q));
            }
        }
    }
}
