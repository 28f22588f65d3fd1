//! N-way K-shot episode construction.
//!
//! Three training regimes plus meta-test sampling:
//! `CrossDomain` draws the support set from one source domain and the query
//! set from a different one (ordered pairs uniform over NS*(NS-1));
//! `SameDomain` draws both from one uniformly chosen domain;
//! `SingleDomain` pins the domain; `TargetEval` samples meta-test episodes
//! from the target. In the equal-domain modes support and query draws come
//! from one without-replacement sample, so they can never share an example.
//!
//! RNG consumption order is fixed: classes, then the domain pair, then per
//! label the support draw (and, cross-domain, per label the query draw).

use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{ImageRef, MultiDomainDataset};
use crate::error::{CoreError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    CrossDomain,
    SameDomain,
    /// Fixed source domain, referenced by domain id.
    SingleDomain(usize),
    TargetEval,
}

impl SampleMode {
    pub fn name(&self) -> &'static str {
        match self {
            SampleMode::CrossDomain => "cross_domain",
            SampleMode::SameDomain => "same_domain",
            SampleMode::SingleDomain(_) => "single_domain",
            SampleMode::TargetEval => "target_eval",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    pub m_query: usize,
    pub mode: SampleMode,
}

/// One sampled task: N*K labeled support examples and N*m queries, with
/// episode-local labels in [0, N) and `class_map` back to dataset class ids.
#[derive(Clone, Debug)]
pub struct Episode {
    pub support: Vec<(ImageRef, usize)>,
    pub query: Vec<(ImageRef, usize)>,
    pub support_domain: usize,
    pub query_domain: usize,
    pub class_map: Vec<usize>,
    /// [channels, size, size] of every image in the episode.
    pub image_shape: [usize; 3],
}

/// Checks `spec` against `dataset`, raising exactly the error
/// [`sample_episode`] would raise, without drawing anything.
pub fn validate_spec(dataset: &MultiDomainDataset, spec: &EpisodeSpec) -> Result<()> {
    if spec.n_way < 2 {
        return Err(CoreError::Config(format!(
            "n_way must be at least 2, got {}",
            spec.n_way
        )));
    }
    if spec.k_shot == 0 || spec.m_query == 0 {
        return Err(CoreError::Config(
            "k_shot and m_query must be positive".into(),
        ));
    }
    if spec.n_way > dataset.n_classes() {
        return Err(CoreError::Config(format!(
            "n_way {} exceeds the dataset's {} classes",
            spec.n_way,
            dataset.n_classes()
        )));
    }
    // Cross-domain support/query draws never touch the same cell, so each
    // cell only needs max(K, m); equal-domain modes split one draw of K+m.
    let check_domain = |pos: usize, need: usize| -> Result<()> {
        let domain = &dataset.domains[pos];
        for class_id in 0..dataset.n_classes() {
            let have = domain.examples(class_id).len();
            if have < need {
                return Err(CoreError::Sampling {
                    domain: domain.domain_name.clone(),
                    class: dataset.class_names[class_id].clone(),
                    have,
                    need,
                });
            }
        }
        Ok(())
    };
    match spec.mode {
        SampleMode::CrossDomain => {
            if dataset.n_domains() < 2 {
                return Err(CoreError::Mode(format!(
                    "cross_domain sampling needs at least 2 source domains, got {}",
                    dataset.n_domains()
                )));
            }
            let need = spec.k_shot.max(spec.m_query);
            for pos in 0..dataset.n_domains() {
                check_domain(pos, need)?;
            }
        }
        SampleMode::SameDomain | SampleMode::TargetEval => {
            for pos in 0..dataset.n_domains() {
                check_domain(pos, spec.k_shot + spec.m_query)?;
            }
        }
        SampleMode::SingleDomain(domain_id) => {
            let Some(pos) = dataset.domain_position(domain_id) else {
                return Err(CoreError::Config(format!(
                    "single_domain: no domain with id {domain_id}"
                )));
            };
            check_domain(pos, spec.k_shot + spec.m_query)?;
        }
    }
    Ok(())
}

pub fn sample_episode(
    dataset: &MultiDomainDataset,
    spec: &EpisodeSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Episode> {
    validate_spec(dataset, spec)?;
    let (n, k, m) = (spec.n_way, spec.k_shot, spec.m_query);

    let class_map: Vec<usize> = index::sample(rng, dataset.n_classes(), n).into_vec();

    let ns = dataset.n_domains();
    let (sup_pos, qry_pos) = match spec.mode {
        SampleMode::CrossDomain => {
            // Uniform over the NS*(NS-1) ordered off-diagonal pairs.
            let pair = rng.random_range(0..ns * (ns - 1));
            let i = pair / (ns - 1);
            let mut j = pair % (ns - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        }
        SampleMode::SameDomain | SampleMode::TargetEval => {
            let d = rng.random_range(0..ns);
            (d, d)
        }
        SampleMode::SingleDomain(domain_id) => {
            let pos = dataset
                .domain_position(domain_id)
                .expect("validated above");
            (pos, pos)
        }
    };

    let mut support = Vec::with_capacity(n * k);
    let mut query = Vec::with_capacity(n * m);
    if sup_pos == qry_pos {
        let domain = &dataset.domains[sup_pos];
        for (label, &class_id) in class_map.iter().enumerate() {
            let pool = domain.examples(class_id);
            let picks = index::sample(rng, pool.len(), k + m);
            for (slot, idx) in picks.iter().enumerate() {
                let item = (pool[idx].clone(), label);
                if slot < k {
                    support.push(item);
                } else {
                    query.push(item);
                }
            }
        }
    } else {
        let sup_domain = &dataset.domains[sup_pos];
        for (label, &class_id) in class_map.iter().enumerate() {
            let pool = sup_domain.examples(class_id);
            for idx in index::sample(rng, pool.len(), k) {
                support.push((pool[idx].clone(), label));
            }
        }
        let qry_domain = &dataset.domains[qry_pos];
        for (label, &class_id) in class_map.iter().enumerate() {
            let pool = qry_domain.examples(class_id);
            for idx in index::sample(rng, pool.len(), m) {
                query.push((pool[idx].clone(), label));
            }
        }
    }
    Ok(Episode {
        support,
        query,
        support_domain: dataset.domains[sup_pos].domain_id,
        query_domain: dataset.domains[qry_pos].domain_id,
        class_map,
        image_shape: [dataset.channels, dataset.image_size, dataset.image_size],
    })
}

impl Episode {
    pub fn n_way(&self) -> usize {
        self.class_map.len()
    }

    pub fn support_labels(&self) -> Vec<usize> {
        self.support.iter().map(|&(_, l)| l).collect()
    }

    pub fn query_labels(&self) -> Vec<usize> {
        self.query.iter().map(|&(_, l)| l).collect()
    }
}
