//! Tabular experiment output: one CSV row per reported metric value.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read, write, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub model: String,
    pub image: String,
    pub layer: Option<usize>,
    pub loss: String,
    pub channels: Option<usize>,
    pub iterations: Option<usize>,
    pub metric: String,
    pub value: f64,
}

impl ReportRow {
    /// A row for `(model, image)` with the remaining context left empty.
    pub fn new(experiment: &str, model: &str, image: &str, metric: &str, value: f64) -> Self {
        ReportRow {
            experiment: experiment.into(),
            model: model.into(),
            image: image.into(),
            layer: None,
            loss: String::new(),
            channels: None,
            iterations: None,
            metric: metric.into(),
            value,
        }
    }

    pub fn layer(mut self, layer: usize) -> Self {
        self.layer = Some(layer);
        self
    }

    pub fn loss(mut self, loss: &str) -> Self {
        self.loss = loss.into();
        self
    }

    pub fn channels(mut self, n: usize) -> Self {
        self.channels = Some(n);
        self
    }

    pub fn iterations(mut self, t: usize) -> Self {
        self.iterations = Some(t);
        self
    }
}

pub fn write_rows<W: Write>(out: W, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        if !row.value.is_finite() {
            return Err(Error::Invalid(format!(
                "non-finite value for metric {} ({} / {})",
                row.metric, row.model, row.image
            )));
        }
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<ReportRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn encode(rows: &[ReportRow]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows)?;
    Ok(buf)
}

pub fn save(path: &Path, rows: &[ReportRow]) -> Result<()> {
    write(path, &encode(rows)?)
}

pub fn load(path: &Path) -> Result<Vec<ReportRow>> {
    read_rows(&read(path)?[..])
}
