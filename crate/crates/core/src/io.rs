//! CSV and JSON readers and writers for every artifact the toolkit emits.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! value read back is bit-identical to the one written.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::aggregation::{ClusterResult, EmissionMatrix, ThresholdLadder};
use crate::encoding::{log_returns, ReturnSeries};
use crate::error::{Error, Result};
use crate::forecasting::ForecastPoint;
use crate::network::{Edge, TeMatrix};
use crate::segmentation::SearchParams;
use crate::selection::{DecodeResult, TraceEntry};

/// Schema version stamped into JSON artifacts.
pub const SCHEMA_VERSION: u32 = 1;

fn malformed(line: u64, msg: impl std::fmt::Display) -> Error {
    Error::MalformedCsv(format!("line {line}: {msg}"))
}

struct Table {
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table(r: impl Read) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let header = rdr
        .headers()
        .map_err(|e| Error::MalformedCsv(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::MalformedCsv(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(Table { header, rows })
}

fn column(t: &Table, names: &[&str]) -> Option<usize> {
    t.header.iter().position(|h| names.contains(&h.as_str()))
}

fn require(t: &Table, names: &[&str]) -> Result<usize> {
    column(t, names).ok_or_else(|| {
        Error::MalformedCsv(format!(
            "missing column {:?} in header {:?}",
            names[0], t.header
        ))
    })
}

fn parse<T: std::str::FromStr>(t: &Table, col: usize) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    t.rows
        .iter()
        .map(|(line, row)| {
            row[col]
                .parse()
                .map_err(|e| malformed(*line, format!("column {:?}: {e}", t.header[col])))
        })
        .collect()
}

fn writer(w: impl Write) -> csv::Writer<impl Write> {
    csv::WriterBuilder::new().from_writer(w)
}

fn fmt<T: ToString>(v: T) -> String {
    v.to_string()
}

/// A series loaded from CSV, with ground-truth states when present.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSeries {
    pub returns: ReturnSeries,
    pub true_states: Option<Vec<usize>>,
}

/// Reads `timestamp,price` (converted to log returns) or `t,value`
/// (taken as returns). An optional `true_state` column is kept.
pub fn read_series(r: impl Read) -> Result<LoadedSeries> {
    let t = read_table(r)?;
    if let Some(p) = column(&t, &["price"]) {
        let ts = require(&t, &["timestamp", "t"])?;
        let returns = log_returns(&parse(&t, ts)?, &parse(&t, p)?)?;
        return Ok(LoadedSeries {
            returns,
            true_states: None,
        });
    }
    let ts = require(&t, &["t", "timestamp"])?;
    let v = require(&t, &["value"])?;
    let returns = ReturnSeries::new(parse(&t, ts)?, parse(&t, v)?)?;
    let true_states = column(&t, &["true_state"])
        .map(|c| parse(&t, c))
        .transpose()?;
    Ok(LoadedSeries {
        returns,
        true_states,
    })
}

/// Writes `t,value` plus `true_state` when given.
pub fn write_series(w: impl Write, returns: &ReturnSeries, states: Option<&[usize]>) -> Result<()> {
    let mut wr = writer(w);
    if let Some(s) = states {
        if s.len() != returns.len() {
            return Err(Error::LengthMismatch {
                left: s.len(),
                right: returns.len(),
            });
        }
        wr.write_record(["t", "value", "true_state"])?;
        for ((t, v), s) in returns.timestamps().iter().zip(returns.values()).zip(s) {
            wr.write_record([fmt(t), fmt(v), fmt(s)])?;
        }
    } else {
        wr.write_record(["t", "value"])?;
        for (t, v) in returns.timestamps().iter().zip(returns.values()) {
            wr.write_record([fmt(t), fmt(v)])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Writes a 0-1 sequence as `t,bit`.
pub fn write_bits(w: impl Write, bits: &[bool]) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["t", "bit"])?;
    for (i, &b) in bits.iter().enumerate() {
        wr.write_record([fmt(i), fmt(u8::from(b))])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_bits(r: impl Read) -> Result<Vec<bool>> {
    let t = read_table(r)?;
    let c = require(&t, &["bit"])?;
    t.rows
        .iter()
        .map(|(line, row)| match row[c].as_str() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(malformed(*line, format!("bit {other:?} is not 0 or 1"))),
        })
        .collect()
}

/// Writes per-time labels as `t,<name>`.
pub fn write_labels(w: impl Write, name: &str, labels: &[usize]) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["t", name])?;
    for (i, l) in labels.iter().enumerate() {
        wr.write_record([fmt(i), fmt(l)])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads the `<name>` column written by [`write_labels`].
pub fn read_labels(r: impl Read, name: &str) -> Result<Vec<usize>> {
    let t = read_table(r)?;
    let c = require(&t, &[name])?;
    parse(&t, c)
}

/// JSON form of a single-threshold decode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeReport {
    pub version: u32,
    pub params: SearchParams,
    pub loss: f64,
    pub labels: Vec<usize>,
    /// Per-state emission estimates; `null` for empty states.
    pub emissions: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEntry>>,
}

impl DecodeReport {
    pub fn from_result(r: &DecodeResult, with_trace: bool) -> Self {
        Self {
            version: SCHEMA_VERSION,
            params: r.best_params.clone(),
            loss: r.best_loss,
            labels: r.best_assignment.labels().to_vec(),
            emissions: r.best_assignment.emissions().to_vec(),
            trace: with_trace.then(|| r.trace.clone()),
        }
    }
}

pub fn write_json<T: Serialize>(w: impl Write, value: &T) -> Result<()> {
    let mut w = w;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(r: impl Read) -> Result<T> {
    Ok(serde_json::from_reader(r)?)
}

/// One row per threshold: `pi,0,1,..,n-1`.
pub fn write_emission_matrix(w: impl Write, em: &EmissionMatrix) -> Result<()> {
    let mut wr = writer(w);
    let mut header = vec!["pi".to_string()];
    header.extend((0..em.width()).map(fmt));
    wr.write_record(&header)?;
    for (pi, row) in em.ladder().pis().iter().zip(em.values()) {
        let mut rec = vec![fmt(pi)];
        rec.extend(row.iter().map(fmt));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads an emission matrix; per-row decode details are not stored in CSV.
pub fn read_emission_matrix(r: impl Read) -> Result<EmissionMatrix> {
    let t = read_table(r)?;
    if t.header.first().map(String::as_str) != Some("pi") {
        return Err(Error::MalformedCsv(
            "emission matrix header must start with pi".into(),
        ));
    }
    let mut pis = Vec::with_capacity(t.rows.len());
    let mut values = Vec::with_capacity(t.rows.len());
    for (line, row) in &t.rows {
        let nums: Vec<f64> = row
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| malformed(*line, e)))
            .collect::<Result<_>>()?;
        pis.push(nums[0]);
        values.push(nums[1..].to_vec());
    }
    EmissionMatrix::new(ThresholdLadder::new(pis)?, values)
}

/// Writes `t,cluster`.
pub fn write_clusters(w: impl Write, c: &ClusterResult) -> Result<()> {
    write_labels(w, "cluster", &c.labels)
}

pub fn read_clusters(r: impl Read) -> Result<Vec<usize>> {
    read_labels(r, "cluster")
}

/// Writes `node,<ids..>` followed by one row per source node.
pub fn write_te_matrix(w: impl Write, m: &TeMatrix) -> Result<()> {
    let mut wr = writer(w);
    let mut header = vec!["node".to_string()];
    header.extend(m.nodes().iter().cloned());
    wr.write_record(&header)?;
    for (name, row) in m.nodes().iter().zip(m.values()) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(fmt));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_te_matrix(r: impl Read) -> Result<TeMatrix> {
    let t = read_table(r)?;
    if t.header.first().map(String::as_str) != Some("node") {
        return Err(Error::MalformedCsv(
            "matrix header must start with node".into(),
        ));
    }
    let nodes: Vec<String> = t.header[1..].to_vec();
    let mut values = Vec::with_capacity(t.rows.len());
    for (i, (line, row)) in t.rows.iter().enumerate() {
        if nodes.get(i) != Some(&row[0]) {
            return Err(malformed(
                *line,
                format!("row label {:?} does not match the header", row[0]),
            ));
        }
        values.push(
            row[1..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| malformed(*line, e)))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    TeMatrix::new(nodes, values)
}

/// Writes `src,dst,weight`.
pub fn write_edges(w: impl Write, edges: &[Edge]) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["src", "dst", "weight"])?;
    for e in edges {
        wr.write_record([e.src.clone(), e.dst.clone(), fmt(e.weight)])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_edges(r: impl Read) -> Result<Vec<Edge>> {
    let t = read_table(r)?;
    let (s, d, w) = (
        require(&t, &["src"])?,
        require(&t, &["dst"])?,
        require(&t, &["weight"])?,
    );
    let weights: Vec<f64> = parse(&t, w)?;
    Ok(t.rows
        .iter()
        .zip(weights)
        .map(|((_, row), weight)| Edge {
            src: row[s].clone(),
            dst: row[d].clone(),
            weight,
        })
        .collect())
}

/// Row and column orders for a reordered heatmap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapOrder {
    pub version: u32,
    pub nodes: Vec<String>,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

/// Writes `t,actual,predicted`.
pub fn write_forecasts(w: impl Write, points: &[ForecastPoint]) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["t", "actual", "predicted"])?;
    for p in points {
        wr.write_record([fmt(p.t), fmt(p.actual), fmt(p.predicted)])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads `(t, actual, predicted)` triples.
pub fn read_forecasts(r: impl Read) -> Result<Vec<(usize, f64, f64)>> {
    let t = read_table(r)?;
    let ts: Vec<usize> = parse(&t, require(&t, &["t"])?)?;
    let a: Vec<f64> = parse(&t, require(&t, &["actual"])?)?;
    let p: Vec<f64> = parse(&t, require(&t, &["predicted"])?)?;
    Ok(ts
        .into_iter()
        .zip(a)
        .zip(p)
        .map(|((t, a), p)| (t, a, p))
        .collect())
}

/// Tidy `t,value,cluster` rows for plotting a decoded trajectory.
pub fn write_trajectory_plot(w: impl Write, values: &[f64], labels: &[usize]) -> Result<()> {
    if values.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: values.len(),
            right: labels.len(),
        });
    }
    let mut wr = writer(w);
    wr.write_record(["t", "value", "cluster"])?;
    for (i, (v, l)) in values.iter().zip(labels).enumerate() {
        wr.write_record([fmt(i), fmt(v), fmt(l)])?;
    }
    wr.flush()?;
    Ok(())
}

/// Tidy `cluster,threshold,cdf` rows.
pub fn write_cdf_plot(w: impl Write, c: &ClusterResult) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["cluster", "threshold", "cdf"])?;
    for (k, cdf) in c.per_cluster_cdf.iter().enumerate() {
        for (th, p) in c.cdf_thresholds.iter().zip(cdf) {
            wr.write_record([fmt(k + 1), fmt(th), fmt(p)])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Tidy `row,col,src,dst,value` rows of a reordered matrix.
pub fn write_heatmap_plot(
    w: impl Write,
    m: &TeMatrix,
    rows: &[usize],
    cols: &[usize],
) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["row", "col", "src", "dst", "value"])?;
    for (ri, &r) in rows.iter().enumerate() {
        for (ci, &c) in cols.iter().enumerate() {
            wr.write_record([
                fmt(ri),
                fmt(ci),
                m.nodes()[r].clone(),
                m.nodes()[c].clone(),
                fmt(m.values()[r][c]),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}
