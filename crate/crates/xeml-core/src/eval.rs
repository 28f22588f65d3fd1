//! Meta-testing on a target domain, plus the depth-sweep and mode-comparison
//! experiments.
//!
//! Evaluation never mutates parameters. Episodes derive from per-index seed
//! streams, so runs parallelize freely and two models evaluated with the
//! same seed consume the identical episode sequence (paired comparison).

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::MultiDomainDataset;
use crate::encoder::{EncoderConfig, EvalBnMode, ParamStore};
use crate::error::{CoreError, Result};
use crate::parallel::try_map_indexed;
use crate::protonet::episode_loss_eval;
use crate::rng::{eval_episode_stream, stream_rng};
use crate::sampler::{sample_episode, validate_spec, EpisodeSpec, SampleMode};
use crate::stats;
use crate::train::{train, TrainConfig, TrainHooks, TrainLog};

/// Accuracy summary over independent evaluation episodes.
///
/// `ci95_half_width` is the normal-approximation interval
/// 1.96 * sample_std / sqrt(runs) used throughout the few-shot literature's
/// "± x" notation.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub runs: usize,
    pub per_episode_acc: Vec<f64>,
    pub mean_acc: f64,
    pub ci95_half_width: f64,
    pub spec: EpisodeSpec,
    pub bn_mode: EvalBnMode,
    /// Fingerprint of the evaluated parameter snapshot.
    pub params_fingerprint: u64,
    pub master_seed: u64,
}

/// Runs `runs` target-domain episodes on frozen parameters.
pub fn evaluate(
    params: &ParamStore,
    encoder: &EncoderConfig,
    target: &MultiDomainDataset,
    spec: &EpisodeSpec,
    runs: usize,
    seed: u64,
    bn_mode: EvalBnMode,
) -> Result<EvalReport> {
    if spec.mode != SampleMode::TargetEval {
        return Err(CoreError::Mode(alloc::format!(
            "evaluate requires target_eval mode, got {}",
            spec.mode.name()
        )));
    }
    if runs == 0 {
        return Err(CoreError::Config("evaluate needs at least 1 run".into()));
    }
    validate_spec(target, spec)?;

    let per_episode_acc = try_map_indexed(runs, |i| -> Result<f64> {
        let mut rng = stream_rng(seed, eval_episode_stream(i));
        let episode = sample_episode(target, spec, &mut rng)?;
        let (_, acc) = episode_loss_eval(params, encoder, &episode, bn_mode)?;
        Ok(acc)
    })?;

    Ok(EvalReport {
        runs,
        mean_acc: stats::mean(&per_episode_acc),
        ci95_half_width: stats::ci95_half_width(&per_episode_acc),
        per_episode_acc,
        spec: *spec,
        bn_mode,
        params_fingerprint: params.fingerprint(),
        master_seed: seed,
    })
}

/// One trained-and-evaluated configuration inside a sweep.
pub struct SweepArm {
    pub label: String,
    pub params: ParamStore,
    pub report: EvalReport,
    pub log: TrainLog,
}

/// Per-arm hook factory; sweeps call it once per arm label so each arm can
/// stream into its own log sink.
pub type HooksFactory<'a> = dyn FnMut(&str) -> Result<Box<dyn TrainHooks>> + 'a;

/// Hook factory for arms that need no sinks.
pub fn no_hooks(_label: &str) -> Result<Box<dyn TrainHooks>> {
    Ok(Box::new(crate::train::NoHooks))
}

/// Trains one encoder per depth from the same seed schedule and evaluates
/// each on the identical target episode sequence.
#[allow(clippy::too_many_arguments)]
pub fn depth_sweep(
    sources: &MultiDomainDataset,
    target: &MultiDomainDataset,
    encoder_base: &EncoderConfig,
    train_config: &TrainConfig,
    depths: &[usize],
    runs: usize,
    eval_seed: u64,
    bn_mode: EvalBnMode,
    make_hooks: &mut HooksFactory<'_>,
) -> Result<Vec<(usize, SweepArm)>> {
    if depths.is_empty() {
        return Err(CoreError::Config("depth sweep: empty depth list".into()));
    }
    for &d in depths {
        if !(1..=6).contains(&d) {
            return Err(CoreError::Config(alloc::format!(
                "depth sweep: depth {d} outside [1, 6]"
            )));
        }
    }
    let eval_spec = EpisodeSpec {
        mode: SampleMode::TargetEval,
        ..train_config.spec
    };
    let mut arms = Vec::with_capacity(depths.len());
    for &depth in depths {
        let encoder = EncoderConfig {
            depth,
            ..*encoder_base
        };
        let label = alloc::format!("conv-{depth}");
        let mut hooks = make_hooks(&label)?;
        let (params, log) = train(sources, &encoder, train_config, hooks.as_mut())?;
        let report = evaluate(&params, &encoder, target, &eval_spec, runs, eval_seed, bn_mode)?;
        arms.push((
            depth,
            SweepArm {
                label,
                params,
                report,
                log,
            },
        ));
    }
    Ok(arms)
}

/// Training regimes compared in the mode experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompareArm {
    Single(usize),
    SameDomain,
    CrossDomain,
}

impl CompareArm {
    pub fn label(&self) -> String {
        match self {
            CompareArm::Single(id) => alloc::format!("single-{id}"),
            CompareArm::SameDomain => String::from("same_domain"),
            CompareArm::CrossDomain => String::from("cross_domain"),
        }
    }
}

/// Which regime families a mode comparison includes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompareFamily {
    Single,
    Same,
    Cross,
}

pub const ALL_FAMILIES: [CompareFamily; 3] =
    [CompareFamily::Single, CompareFamily::Same, CompareFamily::Cross];

/// Trains one model per regime (one single-domain baseline per source, the
/// same-domain control, and cross-domain) with the same master seed, then
/// evaluates all of them on the identical target episode sequence.
#[allow(clippy::too_many_arguments)]
pub fn compare_modes(
    sources: &MultiDomainDataset,
    target: &MultiDomainDataset,
    encoder: &EncoderConfig,
    train_config: &TrainConfig,
    families: &[CompareFamily],
    runs: usize,
    eval_seed: u64,
    bn_mode: EvalBnMode,
    make_hooks: &mut HooksFactory<'_>,
) -> Result<Vec<(CompareArm, SweepArm)>> {
    if sources.n_domains() < 2 {
        return Err(CoreError::Config(
            "compare_modes needs at least 2 source domains".into(),
        ));
    }
    if families.is_empty() {
        return Err(CoreError::Config("compare_modes: empty mode list".into()));
    }
    let mut arms: Vec<CompareArm> = Vec::new();
    if families.contains(&CompareFamily::Single) {
        arms.extend(sources.domains.iter().map(|d| CompareArm::Single(d.domain_id)));
    }
    if families.contains(&CompareFamily::Same) {
        arms.push(CompareArm::SameDomain);
    }
    if families.contains(&CompareFamily::Cross) {
        arms.push(CompareArm::CrossDomain);
    }

    let eval_spec = EpisodeSpec {
        mode: SampleMode::TargetEval,
        ..train_config.spec
    };
    let mut out = Vec::with_capacity(arms.len());
    for arm in arms {
        let mode = match arm {
            CompareArm::Single(id) => SampleMode::SingleDomain(id),
            CompareArm::SameDomain => SampleMode::SameDomain,
            CompareArm::CrossDomain => SampleMode::CrossDomain,
        };
        let config = TrainConfig {
            spec: EpisodeSpec {
                mode,
                ..train_config.spec
            },
            ..*train_config
        };
        let label = arm.label();
        let mut hooks = make_hooks(&label)?;
        let (params, log) = train(sources, encoder, &config, hooks.as_mut())?;
        let report = evaluate(&params, encoder, target, &eval_spec, runs, eval_seed, bn_mode)?;
        out.push((
            arm,
            SweepArm {
                label,
                params,
                report,
                log,
            },
        ));
    }
    Ok(out)
}
