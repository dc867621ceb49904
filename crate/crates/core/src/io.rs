//! File formats: model JSON, LoR CSV, run manifests, fit traces and density rasters.
//!
//! Every JSON artifact carries `format_version`; readers accept any minor
//! revision of [`FORMAT_MAJOR`] and reject other majors. Floats are written
//! with 17 significant digits so values round-trip exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::error::{Error, Result};
use crate::estimate::driver::TraceRecord;
use crate::metrics::bounding_box;
use crate::model::{density, GaussianComponent2D, LineOfResponse, Mat2, MixtureModel2D, Vec2};
use crate::simulate::LoRDataset;

pub const FORMAT_VERSION: &str = "1.0";
pub const FORMAT_MAJOR: &str = "1";

/// `{:.16e}`: 17 significant digits, enough to round-trip any f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Accepts `major` or `major.minor` with the supported major.
pub fn check_version(version: &str) -> Result<()> {
    let major = version.split('.').next().unwrap_or_default();
    if major == FORMAT_MAJOR {
        Ok(())
    } else {
        Err(Error::UnsupportedVersion(version.to_string()))
    }
}

#[derive(Clone, Copy)]
struct FullPrecision;

impl Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }
}

/// Serializes `value` as compact single-line JSON with full-precision floats.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

#[derive(Serialize, Deserialize)]
struct ComponentRecord {
    mean: Vec2,
    cov: Mat2,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRecord {
    components: Vec<ComponentRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    format_version: Option<String>,
}

pub fn model_to_json(model: &MixtureModel2D) -> Result<String> {
    let record = ModelRecord {
        components: model
            .components()
            .iter()
            .map(|c| ComponentRecord {
                mean: c.mean(),
                cov: c.cov(),
                weight: c.weight(),
            })
            .collect(),
        format_version: Some(FORMAT_VERSION.to_string()),
    };
    to_json(&record)
}

/// Parses a model; a missing `format_version` is read as the current major.
pub fn model_from_json(text: &str) -> Result<MixtureModel2D> {
    let record: ModelRecord = serde_json::from_str(text)?;
    if let Some(v) = &record.format_version {
        check_version(v)?;
    }
    let components = record
        .components
        .into_iter()
        .map(|c| GaussianComponent2D::new(c.mean, c.cov, c.weight))
        .collect::<Result<Vec<_>>>()?;
    MixtureModel2D::new(components)
}

pub fn read_model(path: &Path) -> Result<MixtureModel2D> {
    model_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_model(path: &Path, model: &MixtureModel2D) -> Result<()> {
    write_text(path, &(model_to_json(model)? + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Writes `s,phi[,label]` rows with LF endings.
pub fn write_lors<W: Write>(out: W, lors: &[LineOfResponse], labels: Option<&[usize]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != lors.len() {
            return Err(Error::SizeMismatch(l.len(), lors.len()));
        }
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let map_csv = |e: csv::Error| Error::Parse(e.to_string());
    match labels {
        Some(labels) => {
            w.write_record(["s", "phi", "label"]).map_err(map_csv)?;
            for (lor, label) in lors.iter().zip(labels) {
                w.write_record([format_f64(lor.s()), format_f64(lor.phi()), label.to_string()])
                    .map_err(map_csv)?;
            }
        }
        None => {
            w.write_record(["s", "phi"]).map_err(map_csv)?;
            for lor in lors {
                w.write_record([format_f64(lor.s()), format_f64(lor.phi())]).map_err(map_csv)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads an LoR CSV; at least one event is required.
pub fn read_lors<R: Read>(input: R) -> Result<LoRDataset> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let with_labels = match names.as_slice() {
        ["s", "phi"] => false,
        ["s", "phi", "label"] => true,
        _ => return Err(Error::Parse(format!("unexpected LoR header {names:?}"))),
    };
    let mut lors = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in r.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let field = |i: usize| -> Result<&str> {
            record
                .get(i)
                .map(str::trim)
                .ok_or_else(|| Error::Parse(format!("row {}: missing column {i}", row + 1)))
        };
        let num = |i: usize| -> Result<f64> {
            let v: f64 = field(i)?
                .parse()
                .map_err(|e| Error::Parse(format!("row {}: {e}", row + 1)))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse(format!("row {}: non-finite value", row + 1)))
            }
        };
        lors.push(LineOfResponse::new(num(0)?, num(1)?));
        if with_labels {
            labels.push(
                field(2)?
                    .parse()
                    .map_err(|e| Error::Parse(format!("row {}: label {e}", row + 1)))?,
            );
        }
    }
    if lors.is_empty() {
        return Err(Error::Parse("LoR file has no events".into()));
    }
    Ok(LoRDataset {
        lors,
        truth_labels: with_labels.then_some(labels),
    })
}

pub fn read_lors_file(path: &Path) -> Result<LoRDataset> {
    read_lors(BufReader::new(File::open(path)?))
}

pub fn write_lors_file(path: &Path, lors: &[LineOfResponse], labels: Option<&[usize]>) -> Result<()> {
    write_lors(BufWriter::new(File::create(path)?), lors, labels)
}

/// Description written next to a generated LoR file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: String,
    pub seed: u64,
    pub counts: Vec<u64>,
    pub truth: String,
    pub shuffled: bool,
    pub labels: bool,
    pub rng: String,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        check_version(&self.format_version)
    }
}

/// One JSON object per line.
pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> Result<()> {
    for r in records {
        out.write_all(to_json(r)?.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Square lattice of sample points for density rasters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterGrid {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub size: usize,
}

pub const RASTER_SIZE: usize = 256;
pub const RASTER_SIGMAS: f64 = 4.0;

impl RasterGrid {
    /// Covers every mean of the models by four times the widest standard deviation.
    pub fn covering(models: &[&MixtureModel2D], size: usize) -> Self {
        let (lo, hi) = bounding_box(models, RASTER_SIGMAS);
        Self { lo, hi, size }
    }

    /// Cell-center coordinate along `axis` for index `i`.
    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + (i as f64 + 0.5) * (self.hi[axis] - self.lo[axis]) / self.size as f64
    }
}

/// `x,y,value` CSV of the mixture density, x varying slowest.
pub fn write_raster<W: Write>(out: W, model: &MixtureModel2D, grid: &RasterGrid) -> Result<()> {
    let mut out = BufWriter::new(out);
    out.write_all(b"x,y,value\n")?;
    for i in 0..grid.size {
        let x = grid.coordinate(0, i);
        for j in 0..grid.size {
            let y = grid.coordinate(1, j);
            let v = density(model, [x, y])?;
            writeln!(out, "{},{},{}", format_f64(x), format_f64(y), format_f64(v))?;
        }
    }
    out.flush()?;
    Ok(())
}
