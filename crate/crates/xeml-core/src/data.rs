//! Multi-domain datasets with a homogeneous label space.
//!
//! All domains expose exactly the same ordered class list; examples are
//! decoded [C,H,W] images with values in [0,1], shared by reference so
//! episodes clone cheaply. Datasets are immutable once built.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};

pub type ImageRef = Arc<Vec<f32>>;

#[derive(Clone, Debug)]
pub struct DomainTable {
    pub domain_id: usize,
    pub domain_name: String,
    /// Per class-id example lists, aligned with the dataset's class names.
    classes: Vec<Vec<ImageRef>>,
}

impl DomainTable {
    pub fn new(domain_id: usize, domain_name: String, classes: Vec<Vec<ImageRef>>) -> DomainTable {
        DomainTable {
            domain_id,
            domain_name,
            classes,
        }
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn examples(&self, class_id: usize) -> &[ImageRef] {
        &self.classes[class_id]
    }

    pub fn example_count(&self) -> usize {
        self.classes.iter().map(|c| c.len()).sum()
    }
}

#[derive(Clone, Debug)]
pub struct MultiDomainDataset {
    pub domains: Vec<DomainTable>,
    /// Ordered class names shared by every domain; class id = index.
    pub class_names: Vec<String>,
    pub image_size: usize,
    pub channels: usize,
}

impl MultiDomainDataset {
    /// Builds a dataset, enforcing the homogeneity invariant: every domain
    /// carries every class with at least one example, and every image has
    /// the declared [channels, size, size] layout with values in [0,1].
    pub fn new(
        domains: Vec<DomainTable>,
        class_names: Vec<String>,
        image_size: usize,
        channels: usize,
    ) -> Result<MultiDomainDataset> {
        if domains.is_empty() || class_names.is_empty() {
            return Err(CoreError::Config(
                "dataset needs at least one domain and one class".into(),
            ));
        }
        let expected_len = channels * image_size * image_size;
        let mut missing: Vec<String> = Vec::new();
        for domain in &domains {
            if domain.classes.len() != class_names.len() {
                return Err(CoreError::Homogeneity {
                    missing: class_names
                        .iter()
                        .skip(domain.classes.len().min(class_names.len()))
                        .cloned()
                        .collect(),
                });
            }
            for (class_id, examples) in domain.classes.iter().enumerate() {
                if examples.is_empty() {
                    let name = class_names[class_id].clone();
                    if !missing.contains(&name) {
                        missing.push(name);
                    }
                    continue;
                }
                for img in examples {
                    if img.len() != expected_len {
                        return Err(CoreError::dim(
                            "dataset",
                            alloc::format!(
                                "image in domain '{}' class '{}' has {} values, expected {expected_len}",
                                domain.domain_name,
                                class_names[class_id],
                                img.len()
                            ),
                        ));
                    }
                }
            }
        }
        if !missing.is_empty() {
            return Err(CoreError::Homogeneity { missing });
        }
        Ok(MultiDomainDataset {
            domains,
            class_names,
            image_size,
            channels,
        })
    }

    pub fn n_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Elements per image.
    pub fn image_len(&self) -> usize {
        self.channels * self.image_size * self.image_size
    }

    pub fn total_examples(&self) -> usize {
        self.domains.iter().map(|d| d.example_count()).sum()
    }

    /// Position of the domain with identity `domain_id`.
    pub fn domain_position(&self, domain_id: usize) -> Option<usize> {
        self.domains.iter().position(|d| d.domain_id == domain_id)
    }
}

/// Splits off `domain_id` as the meta-test target, leaving the rest as
/// sources. Domain identities are preserved on both sides; at least two
/// source domains must remain so cross-domain sampling stays possible.
pub fn hold_out(
    dataset: &MultiDomainDataset,
    domain_id: usize,
) -> Result<(MultiDomainDataset, MultiDomainDataset)> {
    let Some(pos) = dataset.domain_position(domain_id) else {
        return Err(CoreError::Config(alloc::format!(
            "hold_out: no domain with id {domain_id}"
        )));
    };
    if dataset.domains.len() < 3 {
        return Err(CoreError::Config(alloc::format!(
            "hold_out: {} domains leave fewer than 2 sources",
            dataset.domains.len()
        )));
    }
    let mut source_tables = dataset.domains.clone();
    let target_table = source_tables.remove(pos);
    let sources = MultiDomainDataset::new(
        source_tables,
        dataset.class_names.clone(),
        dataset.image_size,
        dataset.channels,
    )?;
    let target = MultiDomainDataset::new(
        alloc::vec![target_table],
        dataset.class_names.clone(),
        dataset.image_size,
        dataset.channels,
    )?;
    Ok((sources, target))
}

/// Restricts a dataset to a subset of its classes (ids reindexed to the new
/// name order, which preserves the original relative order).
pub fn restrict_classes(
    dataset: &MultiDomainDataset,
    class_ids: &[usize],
) -> Result<MultiDomainDataset> {
    if class_ids.is_empty() {
        return Err(CoreError::Config("restrict_classes: empty class subset".into()));
    }
    let mut seen = alloc::vec![false; dataset.n_classes()];
    for &id in class_ids {
        if id >= dataset.n_classes() {
            return Err(CoreError::Config(alloc::format!(
                "restrict_classes: class id {id} out of range"
            )));
        }
        if core::mem::replace(&mut seen[id], true) {
            return Err(CoreError::Config(alloc::format!(
                "restrict_classes: duplicate class id {id}"
            )));
        }
    }
    let keep: Vec<usize> = (0..dataset.n_classes()).filter(|i| seen[*i]).collect();
    let class_names = keep.iter().map(|&i| dataset.class_names[i].clone()).collect();
    let domains = dataset
        .domains
        .iter()
        .map(|d| DomainTable {
            domain_id: d.domain_id,
            domain_name: d.domain_name.clone(),
            classes: keep.iter().map(|&i| d.classes[i].clone()).collect(),
        })
        .collect();
    MultiDomainDataset::new(domains, class_names, dataset.image_size, dataset.channels)
}

/// Disjoint class split for novel-class meta-testing: the first ceil(C/2)
/// class ids train, the rest evaluate.
pub fn class_split(
    dataset: &MultiDomainDataset,
) -> Result<(MultiDomainDataset, MultiDomainDataset)> {
    let n = dataset.n_classes();
    if n < 2 {
        return Err(CoreError::Config(
            "class_split needs at least 2 classes".into(),
        ));
    }
    let cut = n.div_ceil(2);
    let train_ids: Vec<usize> = (0..cut).collect();
    let test_ids: Vec<usize> = (cut..n).collect();
    Ok((
        restrict_classes(dataset, &train_ids)?,
        restrict_classes(dataset, &test_ids)?,
    ))
}
