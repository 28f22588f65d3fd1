//! CSV artifacts: per-episode training logs, validation logs, evaluation
//! reports, and two-column plot data.

use std::io::{BufWriter, Write};
use std::path::Path;

use xeml_core::train::{EpisodeRecord, ValidationRecord};
use xeml_core::EvalReport;

use crate::error::{Error, Result};

pub const TRAIN_HEADER: &str = "episode,loss,acc,support_domain,query_domain,ms";
pub const EVAL_HEADER: &str = "arm,mean_acc,ci95,runs,seed";

/// Streaming writer for the per-episode training log.
pub struct TrainCsv {
    path: std::path::PathBuf,
    writer: BufWriter<std::fs::File>,
}

impl TrainCsv {
    pub fn create(path: &Path) -> Result<TrainCsv> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        writeln!(writer, "{TRAIN_HEADER}").map_err(|e| Error::io(path, e))?;
        Ok(TrainCsv {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn write(&mut self, r: &EpisodeRecord) -> Result<()> {
        writeln!(
            self.writer,
            "{},{:.6},{:.6},{},{},{}",
            r.episode, r.loss, r.acc, r.support_domain, r.query_domain, r.ms
        )
        .map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_validation_csv(path: &Path, records: &[ValidationRecord]) -> Result<()> {
    let mut text = String::from("episode,mean_acc,ci95\n");
    for r in records {
        text.push_str(&format!("{},{:.6},{:.6}\n", r.episode, r.mean_acc, r.ci95_half_width));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Evaluation summary rows: one line per arm (mode or depth).
pub fn write_eval_csv(path: &Path, rows: &[(String, &EvalReport)]) -> Result<()> {
    std::fs::write(path, eval_csv_text(rows)).map_err(|e| Error::io(path, e))
}

pub fn eval_csv_text(rows: &[(String, &EvalReport)]) -> String {
    let mut text = format!("{EVAL_HEADER}\n");
    for (arm, report) in rows {
        text.push_str(&format!(
            "{arm},{:.6},{:.6},{},{}\n",
            report.mean_acc, report.ci95_half_width, report.runs, report.master_seed
        ));
    }
    text
}

/// Two-column plot data (x value, mean accuracy), tab-separated.
pub fn write_plot_data(path: &Path, rows: &[(String, f64)]) -> Result<()> {
    let mut text = String::new();
    for (x, mean) in rows {
        text.push_str(&format!("{x}\t{mean:.6}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
