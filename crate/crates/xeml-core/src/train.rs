//! Episodic meta-training: sample, compute the episode loss, backpropagate,
//! apply plain SGD. One episode per gradient step, no momentum or schedule.

use alloc::vec::Vec;

use crate::data::MultiDomainDataset;
use crate::encoder::{build_encoder, EncoderConfig, EvalBnMode, ParamStore};
use crate::error::{CoreError, Result};
use crate::protonet::{episode_loss_eval, episode_loss_train};
use crate::rng::{stream_rng, train_episode_stream, validation_stream};
use crate::sampler::{sample_episode, validate_spec, EpisodeSpec};
use crate::stats;
use crate::tape::Tape;

#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    /// Total training episodes (0 returns the initialized parameters).
    pub episodes: usize,
    /// SGD learning rate; the paper-faithful default is 5e-4.
    pub lr: f32,
    pub spec: EpisodeSpec,
    /// Master seed; initialization and every episode derive streams from it.
    pub seed: u64,
    /// Emit a checkpoint every this many episodes (0 = off).
    pub checkpoint_every: usize,
    /// Run a held-in validation pass every this many episodes (0 = off).
    pub eval_every: usize,
    /// Episodes per validation pass.
    pub val_episodes: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(CoreError::Config(alloc::format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub loss: f32,
    pub acc: f64,
    pub support_domain: usize,
    pub query_domain: usize,
    pub ms: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationRecord {
    pub episode: usize,
    pub mean_acc: f64,
    pub ci95_half_width: f64,
}

/// One record per episode, in order, plus any validation passes.
#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub records: Vec<EpisodeRecord>,
    pub validations: Vec<ValidationRecord>,
}

/// Side-channel for the training loop: wall-clock time, checkpoint and log
/// sinks. The core loop never touches a filesystem or clock itself.
pub trait TrainHooks {
    /// Monotonic milliseconds; the default clockless implementation makes
    /// every episode report 0 ms.
    fn now_ms(&mut self) -> u64 {
        0
    }

    fn on_record(&mut self, _record: &EpisodeRecord) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _episode: usize, _params: &ParamStore) -> Result<()> {
        Ok(())
    }

    fn on_validation(&mut self, _record: &ValidationRecord) -> Result<()> {
        Ok(())
    }

    /// Called once after the last episode (flush point for log sinks).
    fn on_finish(&mut self) -> Result<()> {
        Ok(())
    }
}

/// No clock, no sinks.
pub struct NoHooks;

impl TrainHooks for NoHooks {}

/// p <- p - lr * grad(p) for every trainable parameter, then clears grads.
pub fn sgd_step(params: &mut ParamStore, lr: f32) -> Result<()> {
    params.sgd_step(lr)
}

/// Runs exactly `config.episodes` episodes of meta-training on `sources`.
///
/// Deterministic given (seed, config, dataset): episode t draws from its own
/// seed stream, so the parameter trajectory is independent of hooks,
/// validation, and thread count. Aborts with diagnostics on a non-finite
/// loss instead of skipping it.
pub fn train(
    sources: &MultiDomainDataset,
    encoder: &EncoderConfig,
    config: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<(ParamStore, TrainLog)> {
    config.validate()?;
    encoder.validate()?;
    validate_spec(sources, &config.spec)?;

    let mut store = build_encoder(encoder, config.seed)?;
    let mut log = TrainLog::default();
    let mut val_counter = 0usize;

    for t in 0..config.episodes {
        let started = hooks.now_ms();
        let stream = train_episode_stream(t);
        let mut rng = stream_rng(config.seed, stream);
        let episode = sample_episode(sources, &config.spec, &mut rng)?;

        let mut tape = Tape::train();
        let (loss, acc) = episode_loss_train(&mut tape, &mut store, encoder, &episode)?;
        let loss_value = loss.scalar_value()?;
        if !loss_value.is_finite() {
            return Err(CoreError::NonFiniteLoss {
                episode: t,
                loss: loss_value,
                stream_seed: stream,
                support_domain: episode.support_domain,
                query_domain: episode.query_domain,
            });
        }
        tape.backward(&loss)?;
        store.absorb_grads(&tape)?;
        drop(tape);
        sgd_step(&mut store, config.lr)?;

        let record = EpisodeRecord {
            episode: t,
            loss: loss_value,
            acc,
            support_domain: episode.support_domain,
            query_domain: episode.query_domain,
            ms: hooks.now_ms().saturating_sub(started),
        };
        hooks.on_record(&record)?;
        log.records.push(record);

        let done = t + 1;
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 {
            hooks.on_checkpoint(done, &store)?;
        }
        if config.eval_every > 0 && done % config.eval_every == 0 && config.val_episodes > 0 {
            let record = validate_held_in(&store, encoder, sources, config, &mut val_counter)?;
            let record = ValidationRecord {
                episode: done,
                ..record
            };
            hooks.on_validation(&record)?;
            log.validations.push(record);
        }
    }
    hooks.on_finish()?;
    Ok((store, log))
}

/// Accuracy over `val_episodes` held-in episodes (same spec, frozen
/// parameters, transductive batchnorm). Consumes its own seed streams, so
/// running it never changes the training trajectory.
fn validate_held_in(
    store: &ParamStore,
    encoder: &EncoderConfig,
    sources: &MultiDomainDataset,
    config: &TrainConfig,
    val_counter: &mut usize,
) -> Result<ValidationRecord> {
    let mut accs = Vec::with_capacity(config.val_episodes);
    for _ in 0..config.val_episodes {
        let mut rng = stream_rng(config.seed, validation_stream(*val_counter));
        *val_counter += 1;
        let episode = sample_episode(sources, &config.spec, &mut rng)?;
        let (_, acc) = episode_loss_eval(store, encoder, &episode, EvalBnMode::Transductive)?;
        accs.push(acc);
    }
    Ok(ValidationRecord {
        episode: 0,
        mean_acc: stats::mean(&accs),
        ci95_half_width: stats::ci95_half_width(&accs),
    })
}
