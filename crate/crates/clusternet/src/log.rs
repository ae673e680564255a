//! Line-delimited JSON metrics log.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clusternet_core::losses::LossBreakdown;
use clusternet_core::metrics::Scores;
use clusternet_core::trainer::{EpochRecord, Phase};
use serde::Serialize;

use crate::error::{Error, Result};

/// One line of the log.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record<'a> {
    Epoch {
        phase: Phase,
        epoch: usize,
        batches: usize,
        #[serde(flatten)]
        loss: LossBreakdown,
        /// Scores refer to this split when present.
        #[serde(skip_serializing_if = "Option::is_none")]
        split: Option<&'a str>,
        #[serde(flatten, skip_serializing_if = "Option::is_none")]
        scores: Option<Scores>,
    },
    Eval {
        split: &'a str,
        #[serde(flatten)]
        scores: Scores,
    },
    Baseline {
        method: &'a str,
        split: &'a str,
        #[serde(flatten)]
        scores: Scores,
    },
}

impl<'a> Record<'a> {
    pub fn epoch(r: &EpochRecord) -> Self {
        Record::Epoch {
            phase: r.phase,
            epoch: r.epoch,
            batches: r.batches,
            loss: r.loss,
            split: r.scores.map(|_| "unlabeled"),
            scores: r.scores,
        }
    }
}

pub struct MetricsLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsLog {
    /// Truncates any existing file.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(MetricsLog { path, out: BufWriter::new(file) })
    }

    pub fn append(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::options().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(MetricsLog { path, out: BufWriter::new(file) })
    }

    pub fn write(&mut self, record: &Record<'_>) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n").map_err(|e| Error::io(&self.path, e))?;
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}
