//! File formats.
//!
//! * counts CSV: header `node_0,…,node_{M−1}`, one row of nonnegative
//!   integers per bin;
//! * model JSON: `nu`, row-major `A`, `basis`, `saturation`, `bounds`
//!   (unknown top-level fields are ignored, so fit outputs parse as models);
//! * events CSV: `time,node`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, E_COUNTS_HEADER, E_COUNTS_NEGATIVE, E_COUNTS_PARSE, E_EVENTS_PARSE, E_MODEL_PARSE};
use crate::hawkes::EventLog;
use crate::model::{BasisSet, Bounds, CountMatrix, InfluenceModel, Saturation};

/// Float formatting used for every CSV written by the crate (17 significant
/// digits, lossless for `f64`).
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn read_counts<R: Read>(reader: R) -> Result<CountMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(E_COUNTS_HEADER, format!("cannot read header: {e}")))?
        .clone();
    for (i, h) in headers.iter().enumerate() {
        if h != format!("node_{i}") {
            return Err(Error::format(
                E_COUNTS_HEADER,
                format!("column {i} is named {h:?}, expected \"node_{i}\""),
            ));
        }
    }
    let nodes = headers.len();
    let mut data = Vec::new();
    let mut bins = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(E_COUNTS_PARSE, e.to_string()))?;
        if rec.len() != nodes {
            return Err(Error::format(
                E_COUNTS_PARSE,
                format!("row {line} has {} fields, expected {nodes}", rec.len()),
            ));
        }
        for field in rec.iter() {
            let v: i64 = field.parse().map_err(|_| {
                Error::format(E_COUNTS_PARSE, format!("row {line}: {field:?} is not an integer"))
            })?;
            if v < 0 {
                return Err(Error::format(
                    E_COUNTS_NEGATIVE,
                    format!("row {line}: negative count {v}"),
                ));
            }
            let v = u32::try_from(v)
                .map_err(|_| Error::format(E_COUNTS_PARSE, format!("row {line}: count {v} too large")))?;
            data.push(v);
        }
        bins += 1;
    }
    CountMatrix::new(bins, nodes, data)
        .map_err(|e| Error::format(E_COUNTS_PARSE, e.to_string()))
}

pub fn write_counts<W: Write>(x: &CountMatrix, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record((0..x.nodes()).map(|m| format!("node_{m}")))?;
    for row in x.rows() {
        wtr.write_record(row.iter().map(u32::to_string))?;
    }
    wtr.flush()?;
    Ok(())
}

/// On-disk layout of a model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub nu: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub basis: BasisSet,
    pub saturation: Saturation,
    pub bounds: Bounds,
}

impl From<&InfluenceModel> for ModelFile {
    fn from(model: &InfluenceModel) -> Self {
        Self {
            nu: model.nu.iter().copied().collect(),
            a: matrix_rows(&model.a),
            basis: model.basis.clone(),
            saturation: model.saturation,
            bounds: model.bounds,
        }
    }
}

impl TryFrom<ModelFile> for InfluenceModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        let a = matrix_from_rows(&file.a)?;
        InfluenceModel::new(DVector::from_vec(file.nu), a, file.basis, file.saturation, file.bounds)
    }
}

pub fn matrix_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::format(E_MODEL_PARSE, "ragged rows in matrix"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn model_from_json(text: &str) -> Result<InfluenceModel> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::format(E_MODEL_PARSE, e.to_string()))?;
    InfluenceModel::try_from(file)
}

pub fn model_to_json(model: &InfluenceModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelFile::from(model))?)
}

pub fn read_events<R: Read>(reader: R, nodes: usize, horizon: Option<f64>) -> Result<EventLog> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(E_EVENTS_PARSE, e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "time" || &headers[1] != "node" {
        return Err(Error::format(E_EVENTS_PARSE, "events CSV header must be `time,node`"));
    }
    let mut events = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(E_EVENTS_PARSE, e.to_string()))?;
        let bad = || Error::format(E_EVENTS_PARSE, format!("row {line}: malformed event {rec:?}"));
        let time: f64 = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let node: usize = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        events.push((time, node));
    }
    let horizon = horizon.unwrap_or_else(|| {
        // Smallest whole-second horizon strictly after the last event.
        events.iter().map(|e| e.0).fold(0.0, f64::max).floor() + 1.0
    });
    EventLog::new(events, nodes, horizon)
}

pub fn write_events<W: Write>(log: &EventLog, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["time", "node"])?;
    for &(tau, node) in log.events() {
        wtr.write_record([fmt_f64(tau), node.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
