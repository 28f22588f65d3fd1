//! Flat key=value run configuration.
//!
//! One key per line, `#` comments, unknown keys rejected. Every run writes
//! the fully-resolved configuration (defaults expanded, keys sorted) next
//! to its artifacts so a run directory is self-describing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use xeml_core::sampler::{EpisodeSpec, SampleMode};
use xeml_core::train::TrainConfig;
use xeml_core::{EncoderConfig, EvalBnMode};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Domain id excluded from training (the meta-test target).
    pub holdout_domain: Option<usize>,
    /// Disjoint class subsets for meta-train/meta-test.
    pub class_split: bool,
    pub mode: String,
    pub single_domain_id: usize,
    pub n_way: usize,
    pub k_shot: usize,
    pub m_query: usize,
    pub depth: usize,
    pub channels: usize,
    pub image_size: usize,
    pub episodes: usize,
    pub lr: f32,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub eval_every: usize,
    pub val_episodes: usize,
    pub bn_eval: String,
    pub eval_runs: usize,
    pub eval_seed: Option<u64>,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: PathBuf::new(),
            out_dir: PathBuf::new(),
            holdout_domain: None,
            class_split: true,
            mode: "cross_domain".into(),
            single_domain_id: 0,
            n_way: 3,
            k_shot: 5,
            m_query: 16,
            depth: 4,
            channels: 64,
            image_size: 64,
            episodes: 2000,
            lr: 5e-4,
            seed: 7,
            checkpoint_every: 0,
            eval_every: 0,
            val_episodes: 50,
            bn_eval: "transductive".into(),
            eval_runs: 300,
            eval_seed: None,
            threads: 0,
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "data_dir",
    "out_dir",
    "holdout_domain",
    "class_split",
    "mode",
    "single_domain_id",
    "n_way",
    "k_shot",
    "m_query",
    "depth",
    "channels",
    "image_size",
    "episodes",
    "lr",
    "seed",
    "checkpoint_every",
    "eval_every",
    "val_episodes",
    "bn_eval",
    "eval_runs",
    "eval_seed",
    "threads",
];

impl RunConfig {
    pub fn parse_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected key=value, got '{raw}'",
                    line_no + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown config key '{key}'")));
            }
            if seen.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("duplicate config key '{key}'")));
            }
        }

        let mut cfg = RunConfig::default();
        for (key, value) in &seen {
            cfg.apply(key, value)?;
        }
        if cfg.data_dir.as_os_str().is_empty() {
            return Err(Error::Config("missing required key 'data_dir'".into()));
        }
        if cfg.out_dir.as_os_str().is_empty() {
            return Err(Error::Config("missing required key 'out_dir'".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |detail: &str| Error::Config(format!("key '{key}': {detail} (got '{value}')"));
        macro_rules! int {
            () => {
                value.parse().map_err(|_| bad("expected an integer"))?
            };
        }
        match key {
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "holdout_domain" => self.holdout_domain = Some(int!()),
            "class_split" => {
                self.class_split = match value {
                    "on" => true,
                    "off" => false,
                    _ => return Err(bad("expected on|off")),
                }
            }
            "mode" => {
                if !["cross_domain", "same_domain", "single_domain"].contains(&value) {
                    return Err(bad("expected cross_domain|same_domain|single_domain"));
                }
                self.mode = value.to_string();
            }
            "single_domain_id" => self.single_domain_id = int!(),
            "n_way" => self.n_way = int!(),
            "k_shot" => self.k_shot = int!(),
            "m_query" => self.m_query = int!(),
            "depth" => self.depth = int!(),
            "channels" => self.channels = int!(),
            "image_size" => self.image_size = int!(),
            "episodes" => self.episodes = int!(),
            "lr" => self.lr = value.parse().map_err(|_| bad("expected a float"))?,
            "seed" => self.seed = int!(),
            "checkpoint_every" => self.checkpoint_every = int!(),
            "eval_every" => self.eval_every = int!(),
            "val_episodes" => self.val_episodes = int!(),
            "bn_eval" => {
                if !["transductive", "running"].contains(&value) {
                    return Err(bad("expected transductive|running"));
                }
                self.bn_eval = value.to_string();
            }
            "eval_runs" => self.eval_runs = int!(),
            "eval_seed" => self.eval_seed = Some(int!()),
            "threads" => self.threads = int!(),
            _ => unreachable!("key checked against KNOWN_KEYS"),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("key 'lr': must be positive, got {}", self.lr)));
        }
        Ok(())
    }

    /// Resolved eval seed: distinct from the training seed by default so
    /// evaluation episodes never mirror training streams.
    pub fn resolved_eval_seed(&self) -> u64 {
        self.eval_seed.unwrap_or(self.seed.wrapping_add(1))
    }

    pub fn sample_mode(&self) -> SampleMode {
        match self.mode.as_str() {
            "same_domain" => SampleMode::SameDomain,
            "single_domain" => SampleMode::SingleDomain(self.single_domain_id),
            _ => SampleMode::CrossDomain,
        }
    }

    pub fn bn_mode(&self) -> EvalBnMode {
        if self.bn_eval == "running" {
            EvalBnMode::Running
        } else {
            EvalBnMode::Transductive
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            depth: self.depth,
            channels: self.channels,
            input_size: self.image_size,
            input_channels: 3,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            episodes: self.episodes,
            lr: self.lr,
            spec: EpisodeSpec {
                n_way: self.n_way,
                k_shot: self.k_shot,
                m_query: self.m_query,
                mode: self.sample_mode(),
            },
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
            eval_every: self.eval_every,
            val_episodes: self.val_episodes,
        }
    }

    /// Fully-resolved key=value text, sorted, defaults expanded.
    pub fn resolved_text(&self) -> String {
        let mut pairs: Vec<(&str, String)> = vec![
            ("bn_eval", self.bn_eval.clone()),
            ("channels", self.channels.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("class_split", if self.class_split { "on" } else { "off" }.into()),
            ("data_dir", self.data_dir.display().to_string()),
            ("depth", self.depth.to_string()),
            ("episodes", self.episodes.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("eval_runs", self.eval_runs.to_string()),
            ("eval_seed", self.resolved_eval_seed().to_string()),
            ("image_size", self.image_size.to_string()),
            ("k_shot", self.k_shot.to_string()),
            ("lr", self.lr.to_string()),
            ("m_query", self.m_query.to_string()),
            ("mode", self.mode.clone()),
            ("n_way", self.n_way.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("seed", self.seed.to_string()),
            ("single_domain_id", self.single_domain_id.to_string()),
            ("threads", self.threads.to_string()),
            ("val_episodes", self.val_episodes.to_string()),
        ];
        if let Some(holdout) = self.holdout_domain {
            pairs.push(("holdout_domain", holdout.to_string()));
        }
        pairs.sort_by_key(|&(k, _)| k);
        let mut out = String::new();
        for (k, v) in pairs {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = RunConfig::parse("data_dir = data\nout_dir = runs/a\n").unwrap();
        assert_eq!(cfg.depth, 4);
        assert_eq!(cfg.lr, 5e-4);
        assert!(cfg.class_split);
        assert_eq!(cfg.resolved_eval_seed(), 8);
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let err = RunConfig::parse("data_dir=a\nout_dir=b\nlearning_rate=1\n").unwrap_err();
        assert!(err.to_string().contains("learning_rate"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn duplicate_and_malformed_lines_are_rejected() {
        assert!(RunConfig::parse("data_dir=a\ndata_dir=b\nout_dir=c\n").is_err());
        assert!(RunConfig::parse("data_dir\nout_dir=c\n").is_err());
    }

    #[test]
    fn missing_required_keys_name_the_key() {
        let err = RunConfig::parse("out_dir=c\n").unwrap_err();
        assert!(err.to_string().contains("data_dir"));
        let err = RunConfig::parse("data_dir=c\n").unwrap_err();
        assert!(err.to_string().contains("out_dir"));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = RunConfig::parse("# run A\ndata_dir = d # inline\n\nout_dir = o\nseed = 11\n").unwrap();
        assert_eq!(cfg.seed, 11);
    }

    #[test]
    fn resolved_text_parses_back_to_the_same_config() {
        let mut cfg = RunConfig::parse("data_dir=d\nout_dir=o\nholdout_domain=3\nlr=0.002\n").unwrap();
        cfg.eval_seed = Some(cfg.resolved_eval_seed());
        let back = RunConfig::parse(&cfg.resolved_text()).unwrap();
        assert_eq!(back, cfg);
    }
}
