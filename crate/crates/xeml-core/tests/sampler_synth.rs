//! Episode sampler contracts and the synthetic multi-domain generator.

use std::collections::HashMap;
use std::sync::Arc;

use xeml_core::data::{class_split, hold_out, restrict_classes, DomainTable, MultiDomainDataset};
use xeml_core::rng::{stream_rng, train_episode_stream};
use xeml_core::sampler::{sample_episode, validate_spec, EpisodeSpec, SampleMode};
use xeml_core::synth::{generate_synthetic, style_for_domain};
use xeml_core::CoreError;

fn spec(n: usize, k: usize, m: usize, mode: SampleMode) -> EpisodeSpec {
    EpisodeSpec {
        n_way: n,
        k_shot: k,
        m_query: m,
        mode,
    }
}

// ---------------------------------------------------------------- sampler

#[test]
fn two_domain_cross_sampling_uses_both_orders_only() {
    let ds = generate_synthetic(2, 4, 6, 8, 1).unwrap();
    let s = spec(3, 1, 2, SampleMode::CrossDomain);
    let mut seen = std::collections::HashSet::new();
    for t in 0..50 {
        let mut rng = stream_rng(1, train_episode_stream(t));
        let ep = sample_episode(&ds, &s, &mut rng).unwrap();
        assert_ne!(ep.support_domain, ep.query_domain);
        seen.insert((ep.support_domain, ep.query_domain));
    }
    assert_eq!(seen.len(), 2);
    assert!(seen.contains(&(0, 1)) && seen.contains(&(1, 0)));
}

#[test]
fn paper_episode_sizes() {
    // 3-way 5-shot with 16 queries per class: |S| = 15, |Q| = 48.
    let ds = generate_synthetic(3, 4, 25, 8, 2).unwrap();
    let s = spec(3, 5, 16, SampleMode::CrossDomain);
    let mut rng = stream_rng(2, train_episode_stream(0));
    let ep = sample_episode(&ds, &s, &mut rng).unwrap();
    assert_eq!(ep.support.len(), 15);
    assert_eq!(ep.query.len(), 48);
}

#[test]
fn cross_domain_pair_frequencies_are_uniform_over_ordered_pairs() {
    // 10,000 episodes over 3 domains: 6 ordered pairs, each expected at
    // p = 1/6 within 3 sigma, and zero support == query violations.
    let ds = generate_synthetic(3, 4, 4, 8, 3).unwrap();
    let s = spec(3, 1, 1, SampleMode::CrossDomain);
    let total = 10_000usize;
    let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
    for t in 0..total {
        let mut rng = stream_rng(3, train_episode_stream(t));
        let ep = sample_episode(&ds, &s, &mut rng).unwrap();
        assert_ne!(ep.support_domain, ep.query_domain, "episode {t}");
        *counts.entry((ep.support_domain, ep.query_domain)).or_default() += 1;
    }
    assert_eq!(counts.len(), 6);
    let p = 1.0 / 6.0;
    let sigma = (p * (1.0 - p) / total as f64).sqrt();
    for (&pair, &count) in &counts {
        let freq = count as f64 / total as f64;
        assert!(
            (freq - p).abs() < 3.0 * sigma,
            "pair {pair:?} frequency {freq:.4} outside 3 sigma of {p:.4}"
        );
    }
}

#[test]
fn label_balance_is_exact() {
    let ds = generate_synthetic(3, 5, 9, 8, 4).unwrap();
    for mode in [SampleMode::CrossDomain, SampleMode::SameDomain] {
        let s = spec(4, 2, 3, mode);
        for t in 0..20 {
            let mut rng = stream_rng(4, train_episode_stream(t));
            let ep = sample_episode(&ds, &s, &mut rng).unwrap();
            for label in 0..4 {
                assert_eq!(ep.support.iter().filter(|&&(_, l)| l == label).count(), 2);
                assert_eq!(ep.query.iter().filter(|&&(_, l)| l == label).count(), 3);
            }
        }
    }
}

#[test]
fn equal_domain_modes_never_leak_support_into_query() {
    let ds = generate_synthetic(3, 4, 5, 8, 5).unwrap();
    for mode in [
        SampleMode::SameDomain,
        SampleMode::SingleDomain(1),
        SampleMode::TargetEval,
    ] {
        let s = spec(3, 2, 3, mode);
        for t in 0..30 {
            let mut rng = stream_rng(5, train_episode_stream(t));
            let ep = sample_episode(&ds, &s, &mut rng).unwrap();
            assert_eq!(ep.support_domain, ep.query_domain);
            for (sup, _) in &ep.support {
                for (qry, _) in &ep.query {
                    assert!(!Arc::ptr_eq(sup, qry), "instance shared between S and Q");
                }
            }
        }
    }
}

#[test]
fn single_domain_mode_pins_the_domain_id() {
    let ds = generate_synthetic(3, 4, 8, 8, 6).unwrap();
    let s = spec(3, 2, 2, SampleMode::SingleDomain(2));
    for t in 0..10 {
        let mut rng = stream_rng(6, train_episode_stream(t));
        let ep = sample_episode(&ds, &s, &mut rng).unwrap();
        assert_eq!(ep.support_domain, 2);
        assert_eq!(ep.query_domain, 2);
    }
    let bad = spec(3, 2, 2, SampleMode::SingleDomain(9));
    assert!(matches!(
        sample_episode(&ds, &bad, &mut stream_rng(6, 0)),
        Err(CoreError::Config(_))
    ));
}

#[test]
fn cross_mode_on_single_domain_is_mode_error() {
    let ds = generate_synthetic(2, 4, 6, 8, 7).unwrap();
    let (_, target) = {
        let ds3 = generate_synthetic(3, 4, 6, 8, 7).unwrap();
        hold_out(&ds3, 2).unwrap()
    };
    let s = spec(3, 1, 1, SampleMode::CrossDomain);
    assert!(matches!(
        validate_spec(&target, &s),
        Err(CoreError::Mode(_))
    ));
    assert!(validate_spec(&ds, &s).is_ok());
}

#[test]
fn same_domain_needs_k_plus_m_where_cross_needs_only_max() {
    // per_class = 5 supports cross-domain K=2, m=5 (needs max = 5) but not
    // same-domain (needs 7).
    let ds = generate_synthetic(2, 3, 5, 8, 8).unwrap();
    let cross = spec(3, 2, 5, SampleMode::CrossDomain);
    let same = spec(3, 2, 5, SampleMode::SameDomain);
    assert!(validate_spec(&ds, &cross).is_ok());
    match validate_spec(&ds, &same) {
        Err(CoreError::Sampling { have, need, .. }) => {
            assert_eq!((have, need), (5, 7));
        }
        other => panic!("expected sampling error, got {other:?}"),
    }
}

#[test]
fn sampling_error_names_the_offending_cell() {
    let ds = generate_synthetic(2, 3, 4, 8, 9).unwrap();
    let s = spec(3, 3, 3, SampleMode::SameDomain);
    match validate_spec(&ds, &s) {
        Err(CoreError::Sampling { domain, class, have, need }) => {
            assert_eq!(domain, "d00_solid");
            assert_eq!(class, ds.class_names[0]);
            assert_eq!((have, need), (4, 6));
        }
        other => panic!("expected sampling error, got {other:?}"),
    }
}

#[test]
fn n_way_larger_than_class_set_is_rejected() {
    let ds = generate_synthetic(2, 3, 6, 8, 10).unwrap();
    let s = spec(4, 1, 1, SampleMode::CrossDomain);
    assert!(matches!(validate_spec(&ds, &s), Err(CoreError::Config(_))));
}

#[test]
fn episodes_are_reproducible_and_class_map_consistent() {
    let ds = generate_synthetic(3, 6, 7, 8, 11).unwrap();
    let s = spec(4, 2, 3, SampleMode::CrossDomain);
    for t in 0..10 {
        let mut rng_a = stream_rng(11, train_episode_stream(t));
        let mut rng_b = stream_rng(11, train_episode_stream(t));
        let a = sample_episode(&ds, &s, &mut rng_a).unwrap();
        let b = sample_episode(&ds, &s, &mut rng_b).unwrap();
        assert_eq!(a.class_map, b.class_map);
        assert_eq!(a.support_domain, b.support_domain);
        assert_eq!(a.query_domain, b.query_domain);
        for ((ia, la), (ib, lb)) in a.support.iter().zip(&b.support) {
            assert!(Arc::ptr_eq(ia, ib));
            assert_eq!(la, lb);
        }
        // Every episode label maps to a valid dataset class.
        assert_eq!(a.class_map.len(), 4);
        for &(_, label) in a.query.iter() {
            assert!(label < a.class_map.len());
            assert!(a.class_map[label] < ds.n_classes());
        }
    }
}

// ------------------------------------------------------------- generator

#[test]
fn generator_is_deterministic() {
    let a = generate_synthetic(3, 5, 4, 16, 42).unwrap();
    let b = generate_synthetic(3, 5, 4, 16, 42).unwrap();
    assert_eq!(a.class_names, b.class_names);
    for (da, db) in a.domains.iter().zip(&b.domains) {
        assert_eq!(da.domain_name, db.domain_name);
        for class_id in 0..a.n_classes() {
            for (ia, ib) in da.examples(class_id).iter().zip(db.examples(class_id)) {
                assert_eq!(ia.as_slice(), ib.as_slice());
            }
        }
    }
}

#[test]
fn generator_counts_match_arguments() {
    let ds = generate_synthetic(4, 7, 60, 8, 7).unwrap();
    assert_eq!(ds.n_domains(), 4);
    assert_eq!(ds.n_classes(), 7);
    assert_eq!(ds.total_examples(), 1680);
}

#[test]
fn domain_styles_are_pairwise_distinct() {
    for n_domains in [2usize, 4, 8] {
        let styles: Vec<_> = (0..n_domains).map(|d| style_for_domain(33, d)).collect();
        for i in 0..styles.len() {
            for j in i + 1..styles.len() {
                assert!(styles[i] != styles[j], "domains {i} and {j} share a style");
            }
        }
    }
}

#[test]
fn pixels_are_quantized_to_the_255_grid_in_unit_range() {
    let ds = generate_synthetic(4, 3, 2, 16, 13).unwrap();
    for domain in &ds.domains {
        for class_id in 0..ds.n_classes() {
            for img in domain.examples(class_id) {
                for &v in img.iter() {
                    assert!((0.0..=1.0).contains(&v));
                    let scaled = v * 255.0;
                    assert!((scaled - scaled.round()).abs() < 1e-4, "value {v} off-grid");
                }
            }
        }
    }
}

#[test]
fn class_count_limits_are_enforced() {
    assert!(matches!(
        generate_synthetic(2, 11, 4, 8, 0),
        Err(CoreError::Config(_))
    ));
    assert!(matches!(
        generate_synthetic(2, 0, 4, 8, 0),
        Err(CoreError::Config(_))
    ));
    assert!(matches!(
        generate_synthetic(1, 4, 4, 8, 0),
        Err(CoreError::Config(_))
    ));
}

// ----------------------------------------------------------- dataset ops

#[test]
fn hold_out_partitions_and_remerge_preserves_the_multiset() {
    let ds = generate_synthetic(4, 4, 5, 8, 21).unwrap();
    let (sources, target) = hold_out(&ds, 3).unwrap();
    assert_eq!(sources.n_domains(), 3);
    assert_eq!(target.n_domains(), 1);
    assert_eq!(target.domains[0].domain_id, 3);
    assert_eq!(
        sources.domains.iter().map(|d| d.domain_id).collect::<Vec<_>>(),
        vec![0, 1, 2]
    );

    // Rebuild the original multiset: same per-cell counts, same instances.
    let mut merged: Vec<&DomainTable> = sources.domains.iter().collect();
    merged.push(&target.domains[0]);
    merged.sort_by_key(|d| d.domain_id);
    for (orig, back) in ds.domains.iter().zip(merged) {
        assert_eq!(orig.domain_id, back.domain_id);
        for class_id in 0..ds.n_classes() {
            let a = orig.examples(class_id);
            let b = back.examples(class_id);
            assert_eq!(a.len(), b.len());
            for (ia, ib) in a.iter().zip(b) {
                assert!(Arc::ptr_eq(ia, ib));
            }
        }
    }
}

#[test]
fn hold_out_requires_two_remaining_sources() {
    let ds = generate_synthetic(2, 4, 5, 8, 22).unwrap();
    assert!(matches!(hold_out(&ds, 0), Err(CoreError::Config(_))));
    let ds3 = generate_synthetic(3, 4, 5, 8, 22).unwrap();
    assert!(hold_out(&ds3, 0).is_ok());
}

#[test]
fn class_split_is_disjoint_and_homogeneous() {
    let ds = generate_synthetic(3, 10, 3, 8, 23).unwrap();
    let (train, test) = class_split(&ds).unwrap();
    assert_eq!(train.n_classes(), 5);
    assert_eq!(test.n_classes(), 5);
    for name in &train.class_names {
        assert!(!test.class_names.contains(name));
    }
    // Both splits keep every domain and stay sampleable.
    assert_eq!(train.n_domains(), 3);
    assert!(validate_spec(&test, &spec(3, 1, 2, SampleMode::SameDomain)).is_ok());
}

#[test]
fn restrict_classes_validates_ids() {
    let ds = generate_synthetic(2, 4, 3, 8, 24).unwrap();
    assert!(matches!(restrict_classes(&ds, &[]), Err(CoreError::Config(_))));
    assert!(matches!(restrict_classes(&ds, &[7]), Err(CoreError::Config(_))));
    assert!(matches!(restrict_classes(&ds, &[1, 1]), Err(CoreError::Config(_))));
    let sub = restrict_classes(&ds, &[0, 2]).unwrap();
    assert_eq!(sub.n_classes(), 2);
}

#[test]
fn missing_class_examples_fail_homogeneity_naming_the_class() {
    let ds = generate_synthetic(2, 3, 2, 8, 25).unwrap();
    let img_len = ds.image_len();
    let names = ds.class_names.clone();
    // Domain 1 lacks every example of class 1.
    let domains = vec![
        DomainTable::new(0, "a".into(), vec![
            vec![Arc::new(vec![0.0; img_len])],
            vec![Arc::new(vec![0.0; img_len])],
            vec![Arc::new(vec![0.0; img_len])],
        ]),
        DomainTable::new(1, "b".into(), vec![
            vec![Arc::new(vec![0.0; img_len])],
            vec![],
            vec![Arc::new(vec![0.0; img_len])],
        ]),
    ];
    match MultiDomainDataset::new(domains, names.clone(), ds.image_size, 3) {
        Err(CoreError::Homogeneity { missing }) => {
            assert_eq!(missing, vec![names[1].clone()]);
        }
        other => panic!("expected homogeneity error, got {other:?}"),
    }
}
