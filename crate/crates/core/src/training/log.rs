use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// One line of the metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    pub epoch: usize,
    pub split: Split,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
}

/// Append-only metric log, mirrored to a JSON-lines file when one is set.
#[derive(Debug, Default)]
pub struct MetricLog {
    records: Vec<MetricRecord>,
    sink: Option<(PathBuf, BufWriter<File>)>,
}

impl MetricLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn to_file(path: &Path) -> Result<Self, TrainError> {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        Ok(Self {
            records: Vec::new(),
            sink: Some((path.to_path_buf(), BufWriter::new(file))),
        })
    }

    pub fn push(&mut self, record: MetricRecord) -> Result<(), TrainError> {
        if let Some((path, out)) = &mut self.sink {
            let line = serde_json::to_string(&record).expect("records serialize");
            writeln!(out, "{line}")
                .and_then(|_| out.flush())
                .map_err(|e| io_err(path, e))?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[MetricRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<MetricRecord> {
        self.records
    }
}

fn io_err(path: &Path, source: std::io::Error) -> TrainError {
    TrainError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parses a JSON-lines metric log.
pub fn read_metric_log(path: &Path) -> Result<Vec<MetricRecord>, TrainError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| TrainError::InvalidConfig(format!("{}: {e}", path.display())))
        })
        .collect()
}
