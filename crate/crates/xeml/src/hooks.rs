//! Run-directory training hooks: wall-clock timing, streamed episode log,
//! periodic checkpoints.

use std::path::PathBuf;
use std::time::Instant;

use xeml_core::train::{EpisodeRecord, TrainHooks, ValidationRecord};
use xeml_core::{CoreError, EncoderConfig, ParamStore};

use crate::checkpoint;
use crate::csvlog::TrainCsv;
use crate::error::Result;

pub struct RunDirHooks {
    started: Instant,
    dir: PathBuf,
    encoder: EncoderConfig,
    log: Option<TrainCsv>,
    pub validations: Vec<ValidationRecord>,
}

impl RunDirHooks {
    /// `log_name` distinguishes arms inside one sweep directory.
    pub fn new(dir: &std::path::Path, encoder: EncoderConfig, log_name: &str) -> Result<RunDirHooks> {
        let log = TrainCsv::create(&dir.join(log_name))?;
        Ok(RunDirHooks {
            started: Instant::now(),
            dir: dir.to_path_buf(),
            encoder,
            log: Some(log),
            validations: Vec::new(),
        })
    }

    pub fn finish(mut self) -> Result<()> {
        if let Some(log) = self.log.take() {
            log.finish()?;
        }
        Ok(())
    }
}

fn hook_err(e: crate::error::Error) -> CoreError {
    CoreError::Hook(e.to_string())
}

impl TrainHooks for RunDirHooks {
    fn now_ms(&mut self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    fn on_record(&mut self, record: &EpisodeRecord) -> std::result::Result<(), CoreError> {
        if let Some(log) = &mut self.log {
            log.write(record).map_err(hook_err)?;
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, episode: usize, params: &ParamStore) -> std::result::Result<(), CoreError> {
        let path = self.dir.join(format!("checkpoint-{episode:06}.xeml"));
        checkpoint::save(&path, &self.encoder, params).map_err(hook_err)
    }

    fn on_validation(&mut self, record: &ValidationRecord) -> std::result::Result<(), CoreError> {
        self.validations.push(*record);
        Ok(())
    }
}
