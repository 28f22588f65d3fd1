//! Prototypical metric head.
//!
//! Class prototypes are the arithmetic means of each class's support
//! embeddings; queries are classified by log-softmax over negated squared
//! Euclidean distances to the prototypes. The head is parameter-free, so
//! the metric seam carries no trainable state of its own.

use alloc::vec::Vec;

use crate::encoder::{embed_eval, embed_train, EncoderConfig, EvalBnMode, ParamStore};
use crate::error::{CoreError, Result};
use crate::ops::{class_mean, cross_entropy, log_softmax, pairwise_sq_dist, scale, slice_rows};
use crate::sampler::Episode;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Per-class prototypes of one episode; row n belongs to episode label n.
pub struct PrototypeSet {
    pub prototypes: Tensor,
    pub class_ids: Vec<usize>,
}

/// prototype[n] = mean of the K support embeddings labeled n.
pub fn compute_prototypes(
    tape: &mut Tape,
    support_emb: &Tensor,
    support_labels: &[usize],
    n_way: usize,
) -> Result<PrototypeSet> {
    let prototypes = class_mean(tape, support_emb, support_labels, n_way)?;
    Ok(PrototypeSet {
        prototypes,
        class_ids: (0..n_way).collect(),
    })
}

/// Log-probabilities [Q, N]: log_softmax over -squared-distance logits.
pub fn classify(tape: &mut Tape, prototypes: &PrototypeSet, query_emb: &Tensor) -> Result<Tensor> {
    let dist = pairwise_sq_dist(tape, query_emb, &prototypes.prototypes)?;
    let logits = scale(tape, &dist, -1.0)?;
    log_softmax(tape, &logits)
}

/// Fraction of rows whose argmax (first maximum) hits the label.
pub fn accuracy(log_probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let shape = log_probs.shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(CoreError::dim(
            "accuracy",
            alloc::format!("log_probs {shape:?} vs {} labels", labels.len()),
        ));
    }
    let (rows, cols) = (shape[0], shape[1]);
    let data = log_probs.data();
    let mut correct = 0usize;
    for (r, &label) in labels.iter().enumerate() {
        let row = &data[r * cols..(r + 1) * cols];
        let mut best = 0usize;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / rows as f64)
}

/// Builds one [B,C,H,W] batch holding the support examples then the queries.
fn episode_batch(episode: &Episode) -> Result<Tensor> {
    let [c, h, w] = episode.image_shape;
    let img_len = c * h * w;
    let total = episode.support.len() + episode.query.len();
    let mut data = Vec::with_capacity(total * img_len);
    for (img, _) in episode.support.iter().chain(episode.query.iter()) {
        if img.len() != img_len {
            return Err(CoreError::dim(
                "episode_batch",
                alloc::format!("image with {} values in a {:?} episode", img.len(), episode.image_shape),
            ));
        }
        data.extend_from_slice(img);
    }
    Tensor::from_vec(&[total, c, h, w], data)
}

fn check_episode(episode: &Episode) -> Result<()> {
    let n = episode.n_way();
    if n == 0 || episode.support.len() % n != 0 || episode.query.len() % n != 0 {
        return Err(CoreError::EpisodeShape(alloc::format!(
            "support {} / query {} examples do not divide into {n} classes",
            episode.support.len(),
            episode.query.len()
        )));
    }
    Ok(())
}

/// Tape-recorded episode loss: embeds support and queries as one batch
/// (shared batchnorm statistics), computes prototypes, classifies, and
/// returns the mean query cross-entropy along with the query accuracy.
pub fn episode_loss_train(
    tape: &mut Tape,
    store: &mut ParamStore,
    config: &EncoderConfig,
    episode: &Episode,
) -> Result<(Tensor, f64)> {
    check_episode(episode)?;
    let batch = episode_batch(episode)?;
    let emb = embed_train(tape, store, config, &batch)?;
    finish_episode(tape, &emb, episode)
}

/// Forward-only episode loss on frozen parameters.
pub fn episode_loss_eval(
    store: &ParamStore,
    config: &EncoderConfig,
    episode: &Episode,
    bn_mode: EvalBnMode,
) -> Result<(f32, f64)> {
    check_episode(episode)?;
    let batch = episode_batch(episode)?;
    let emb = embed_eval(store, config, &batch, bn_mode)?;
    let mut tape = Tape::inference();
    let (loss, acc) = finish_episode(&mut tape, &emb, episode)?;
    Ok((loss.scalar_value()?, acc))
}

fn finish_episode(tape: &mut Tape, emb: &Tensor, episode: &Episode) -> Result<(Tensor, f64)> {
    let n_support = episode.support.len();
    let support_emb = slice_rows(tape, emb, 0, n_support)?;
    let query_emb = slice_rows(tape, emb, n_support, episode.query.len())?;
    let prototypes = compute_prototypes(tape, &support_emb, &episode.support_labels(), episode.n_way())?;
    let log_probs = classify(tape, &prototypes, &query_emb)?;
    let labels = episode.query_labels();
    let loss = cross_entropy(tape, &log_probs, &labels)?;
    let acc = accuracy(&log_probs, &labels)?;
    Ok((loss, acc))
}
