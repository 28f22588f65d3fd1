//! On-disk dataset trees: `root/<domain>/<class>/<file>.ppm` plus an
//! optional `manifest.txt` (one line per domain: name, class count, image
//! count, tab-separated).

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use xeml_core::data::{DomainTable, ImageRef, MultiDomainDataset};
use xeml_core::CoreError;

use crate::error::{Error, Result};
use crate::ppm;

/// Loads a dataset tree, resizing every image to `image_size` (nearest
/// neighbor) and scaling pixels to [0, 1]. Domain and class identities come
/// from directory names in lexicographic order; the class sets of all
/// domains must agree.
pub fn load_image_tree(root: &Path, image_size: usize) -> Result<MultiDomainDataset> {
    if !root.is_dir() {
        return Err(Error::Config(format!(
            "dataset root '{}' is not a directory",
            root.display()
        )));
    }
    let domain_dirs = sorted_subdirs(root)?;
    if domain_dirs.is_empty() {
        return Err(Error::Config(format!(
            "dataset root '{}' contains no domain directories",
            root.display()
        )));
    }

    // Homogeneity first: every domain must expose the same class-name set.
    let mut class_sets: Vec<(String, BTreeSet<String>)> = Vec::new();
    for dir in &domain_dirs {
        let classes: BTreeSet<String> = sorted_subdirs(&root.join(dir))?.into_iter().collect();
        class_sets.push((dir.clone(), classes));
    }
    let union: BTreeSet<String> = class_sets.iter().flat_map(|(_, s)| s.iter().cloned()).collect();
    let intersection: BTreeSet<String> = union
        .iter()
        .filter(|name| class_sets.iter().all(|(_, s)| s.contains(*name)))
        .cloned()
        .collect();
    if intersection != union {
        let missing: Vec<String> = union.difference(&intersection).cloned().collect();
        return Err(Error::Core(CoreError::Homogeneity { missing }));
    }
    let class_names: Vec<String> = union.into_iter().collect();

    let mut domains = Vec::with_capacity(domain_dirs.len());
    for (domain_id, domain_name) in domain_dirs.iter().enumerate() {
        let mut classes: Vec<Vec<ImageRef>> = Vec::with_capacity(class_names.len());
        for class_name in &class_names {
            let class_dir = root.join(domain_name).join(class_name);
            let mut files = sorted_files_with_ext(&class_dir, "ppm")?;
            files.sort();
            let mut examples = Vec::with_capacity(files.len());
            for file in files {
                let path = class_dir.join(&file);
                let (w, h, rgb) = ppm::read_ppm(&path)?;
                let resized = ppm::resize_nearest(&rgb, w, h, image_size);
                examples.push(Arc::new(ppm::rgb_to_chw(&resized, image_size)));
            }
            classes.push(examples);
        }
        domains.push(DomainTable::new(domain_id, domain_name.clone(), classes));
    }

    let dataset = MultiDomainDataset::new(domains, class_names, image_size, 3)?;
    verify_manifest(root, &dataset)?;
    Ok(dataset)
}

/// Writes a dataset as a PPM tree plus manifest. Pixel values are expected
/// on the k/255 grid (the synthetic generator guarantees this), so a write
/// followed by [`load_image_tree`] at the same size reproduces the dataset
/// exactly.
pub fn write_dataset(dataset: &MultiDomainDataset, root: &Path) -> Result<()> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut manifest = String::new();
    for domain in &dataset.domains {
        let mut image_count = 0usize;
        for (class_id, class_name) in dataset.class_names.iter().enumerate() {
            let dir = root.join(&domain.domain_name).join(class_name);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for (idx, image) in domain.examples(class_id).iter().enumerate() {
                let rgb = ppm::chw_to_rgb(image, dataset.image_size);
                let path = dir.join(format!("img_{idx:04}.ppm"));
                ppm::write_ppm(&path, dataset.image_size, dataset.image_size, &rgb)?;
                image_count += 1;
            }
        }
        manifest.push_str(&format!(
            "{}\t{}\t{}\n",
            domain.domain_name,
            dataset.n_classes(),
            image_count
        ));
    }
    let manifest_path = root.join("manifest.txt");
    std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(())
}

/// Cross-checks an existing manifest against the loaded tree.
fn verify_manifest(root: &Path, dataset: &MultiDomainDataset) -> Result<()> {
    let path = root.join("manifest.txt");
    let Ok(text) = std::fs::read_to_string(&path) else {
        return Ok(()); // manifest is optional
    };
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::format(
                &path,
                format!("line {}: expected 3 tab-separated fields", line_no + 1),
            ));
        }
        let Some(domain) = dataset.domains.iter().find(|d| d.domain_name == fields[0]) else {
            return Err(Error::format(
                &path,
                format!("line {}: unknown domain '{}'", line_no + 1, fields[0]),
            ));
        };
        let classes: usize = fields[1]
            .parse()
            .map_err(|_| Error::format(&path, format!("line {}: bad class count", line_no + 1)))?;
        let images: usize = fields[2]
            .parse()
            .map_err(|_| Error::format(&path, format!("line {}: bad image count", line_no + 1)))?;
        if classes != dataset.n_classes() || images != domain.example_count() {
            return Err(Error::format(
                &path,
                format!(
                    "domain '{}': manifest says {classes} classes / {images} images, tree has {} / {}",
                    domain.domain_name,
                    dataset.n_classes(),
                    domain.example_count()
                ),
            ));
        }
    }
    Ok(())
}

fn sorted_subdirs(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        if entry.file_type().map_err(|e| Error::io(path, e))?.is_dir() {
            out.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    out.sort();
    Ok(out)
}

fn sorted_files_with_ext(path: &Path, ext: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.file_type().map_err(|e| Error::io(path, e))?.is_file()
            && name.rsplit('.').next() == Some(ext)
        {
            out.push(name);
        }
    }
    out.sort();
    Ok(out)
}
