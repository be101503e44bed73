//! On-disk formats for [`MultiwayDataset`].
//!
//! `MWFD1` is one UTF-8 JSON header line terminated by `\n`, followed by the
//! tensor as little-endian `f64` values in `[subject][s][t]` order. The
//! CSV-long format lists one `i,s_index,t_index,value` row per cell.

use std::collections::HashSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GridAxis, MultiwayDataset};
use crate::error::{Error, Result};

pub const MAGIC: &str = "MWFD1";

/// Header line of an `MWFD1` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub magic: String,
    pub n: usize,
    pub s_points: Vec<f64>,
    pub t_points: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_factors: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_weights: Option<Vec<f64>>,
    /// Leading trial dimension; present only in phase-tensor files.
    #[serde(rename = "n_T", default, skip_serializing_if = "Option::is_none")]
    pub n_trials: Option<usize>,
}

impl Header {
    pub fn for_dataset(data: &MultiwayDataset) -> Self {
        Header {
            magic: MAGIC.to_string(),
            n: data.n(),
            s_points: data.s_axis().points().to_vec(),
            t_points: data.t_axis().points().to_vec(),
            s_factors: data
                .s_factors()
                .map(|f| f.iter().map(|a| a.points().to_vec()).collect()),
            s_weights: Some(data.s_axis().weights().to_vec()),
            t_weights: Some(data.t_axis().weights().to_vec()),
            n_trials: None,
        }
    }

    /// Spatial axis, temporal axis and (optional) spatial factor axes.
    pub fn axes(&self) -> Result<(GridAxis, GridAxis, Option<Vec<GridAxis>>)> {
        let hdr = |e: Error| Error::parse("header", e.to_string());
        let factors = match &self.s_factors {
            Some(f) => Some(
                f.iter()
                    .map(|p| GridAxis::trapezoid(p.clone()))
                    .collect::<Result<Vec<_>>>()
                    .map_err(hdr)?,
            ),
            None => None,
        };
        if let Some(f) = &factors {
            let product = f.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.len()));
            if product != Some(self.s_points.len()) {
                return Err(Error::parse(
                    "header",
                    "s_factors do not match the length of s_points",
                ));
            }
        }
        let s_axis = match (&factors, &self.s_weights) {
            (_, Some(w)) => GridAxis::new(self.s_points.clone(), w.clone()).map_err(hdr)?,
            (Some(f), None) => super::product_axis(f).map_err(hdr)?,
            (None, None) => GridAxis::trapezoid(self.s_points.clone()).map_err(hdr)?,
        };
        let t_axis = match &self.t_weights {
            Some(w) => GridAxis::new(self.t_points.clone(), w.clone()).map_err(hdr)?,
            None => GridAxis::trapezoid(self.t_points.clone()).map_err(hdr)?,
        };
        Ok((s_axis, t_axis, factors))
    }
}

/// Split an `MWFD1` byte stream into its header and payload.
pub fn decode_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::parse("byte 0", "malformed header: missing newline terminator"))?;
    let line = std::str::from_utf8(&bytes[..newline])
        .map_err(|e| Error::parse(format!("byte {}", e.valid_up_to()), "header is not UTF-8"))?;
    let header: Header = serde_json::from_str(line)
        .map_err(|e| Error::parse(format!("byte {}", e.column()), format!("malformed header: {e}")))?;
    if header.magic != MAGIC {
        return Err(Error::parse(
            "byte 0",
            format!("malformed header: bad magic {:?}", header.magic),
        ));
    }
    Ok((header, &bytes[newline + 1..]))
}

/// Decode `count` little-endian `f64` values; `base` is the payload's byte
/// offset in the file, used for error locations.
pub(crate) fn decode_values(payload: &[u8], count: usize, base: usize) -> Result<Vec<f64>> {
    let expected = count
        .checked_mul(8)
        .ok_or_else(|| Error::parse(format!("byte {base}"), "declared dimensions overflow"))?;
    if payload.len() != expected {
        return Err(Error::parse(
            format!("byte {}", base + payload.len().min(expected)),
            format!(
                "dimension mismatch: header declares {count} values ({expected} bytes), payload has {} bytes",
                payload.len()
            ),
        ));
    }
    payload
        .chunks_exact(8)
        .enumerate()
        .map(|(k, chunk)| {
            let v = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(
                    format!("byte {}", base + 8 * k),
                    format!("non-finite value {v}"),
                ))
            }
        })
        .collect()
}

pub(crate) fn checked_count(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::parse("header", "declared dimensions overflow"))
}

/// Decode an `MWFD1` dataset from bytes.
pub fn read_mwfd1(bytes: &[u8]) -> Result<MultiwayDataset> {
    let (header, payload) = decode_header(bytes)?;
    if header.n_trials.is_some() {
        return Err(Error::parse(
            "header",
            "file carries n_T and holds a phase tensor, not a dataset",
        ));
    }
    let (s_axis, t_axis, factors) = header.axes()?;
    let count = checked_count(&[header.n, s_axis.len(), t_axis.len()])?;
    let base = bytes.len() - payload.len();
    let values = decode_values(payload, count, base)?;
    let data = MultiwayDataset::new(header.n, s_axis, t_axis, values)?;
    match factors {
        Some(f) => data.with_factors(f),
        None => Ok(data),
    }
}

pub(crate) fn write_header<W: Write>(header: &Header, mut w: W) -> Result<W> {
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    Ok(w)
}

/// Encode a dataset as `MWFD1`.
pub fn write_mwfd1<W: Write>(data: &MultiwayDataset, w: W) -> Result<()> {
    let mut w = write_header(&Header::for_dataset(data), w)?;
    for v in data.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a CSV-long dataset. Dimensions are inferred from the largest
/// indices; axes default to evenly spaced points on `[0, 1]`.
pub fn read_csv_long<R: Read>(
    reader: R,
    s_axis: Option<GridAxis>,
    t_axis: Option<GridAxis>,
) -> Result<MultiwayDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse("line 1", format!("malformed header: {e}")))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["i", "s_index", "t_index", "value"] {
        return Err(Error::parse(
            "line 1",
            "malformed header: expected `i,s_index,t_index,value`",
        ));
    }

    let mut cells: Vec<(usize, usize, usize, f64)> = Vec::new();
    let mut max = (0usize, 0usize, 0usize);
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(format!("line {line}"), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let at = || format!("line {line}");
        if record.len() != 4 {
            return Err(Error::parse(at(), "expected 4 fields"));
        }
        let idx = |k: usize| -> Result<usize> {
            record[k]
                .parse::<usize>()
                .map_err(|e| Error::parse(at(), format!("bad index {:?}: {e}", &record[k])))
        };
        let (i, s, t) = (idx(0)?, idx(1)?, idx(2)?);
        let value: f64 = record[3]
            .parse()
            .map_err(|e| Error::parse(at(), format!("bad value {:?}: {e}", &record[3])))?;
        if !value.is_finite() {
            return Err(Error::parse(at(), format!("non-finite value {value}")));
        }
        max = (max.0.max(i), max.1.max(s), max.2.max(t));
        cells.push((i, s, t, value));
    }
    if cells.is_empty() {
        return Err(Error::parse("line 2", "incomplete tensor: no cells"));
    }

    let n = max.0 + 1;
    let ns = match &s_axis {
        Some(a) if max.1 >= a.len() => {
            return Err(Error::Dimension(format!(
                "s_index {} exceeds the supplied axis of length {}",
                max.1,
                a.len()
            )))
        }
        Some(a) => a.len(),
        None => max.1 + 1,
    };
    let nt = match &t_axis {
        Some(a) if max.2 >= a.len() => {
            return Err(Error::Dimension(format!(
                "t_index {} exceeds the supplied axis of length {}",
                max.2,
                a.len()
            )))
        }
        Some(a) => a.len(),
        None => max.2 + 1,
    };
    let total = checked_count(&[n, ns, nt])?;
    let mut seen = HashSet::with_capacity(cells.len());
    for &(i, s, t, _) in &cells {
        if !seen.insert((i, s, t)) {
            return Err(Error::parse(
                "data",
                format!("duplicate cell ({i},{s},{t})"),
            ));
        }
    }
    if cells.len() != total {
        return Err(Error::parse(
            "data",
            format!("incomplete tensor: {} of {total} cells present", cells.len()),
        ));
    }
    let mut values = vec![0.0; total];
    for (i, s, t, v) in cells {
        values[(i * ns + s) * nt + t] = v;
    }
    let s_axis = match s_axis {
        Some(a) => a,
        None => GridAxis::uniform(ns)?,
    };
    let t_axis = match t_axis {
        Some(a) => a,
        None => GridAxis::uniform(nt)?,
    };
    MultiwayDataset::new(n, s_axis, t_axis, values)
}

pub fn write_csv_long<W: Write>(data: &MultiwayDataset, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["i", "s_index", "t_index", "value"])?;
    let (ns, nt) = (data.s_axis().len(), data.t_axis().len());
    for i in 0..data.n() {
        for s in 0..ns {
            for t in 0..nt {
                wtr.write_record(&[
                    i.to_string(),
                    s.to_string(),
                    t.to_string(),
                    data.value(i, s, t).to_string(),
                ])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// File formats accepted by [`load_dataset`] and [`save_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Binary,
    CsvLong,
}

pub fn load_dataset(path: impl AsRef<Path>, format: Format) -> Result<MultiwayDataset> {
    match format {
        Format::Binary => read_mwfd1(&fs::read(path)?),
        Format::CsvLong => read_csv_long(fs::File::open(path)?, None, None),
    }
}

pub fn save_dataset(path: impl AsRef<Path>, data: &MultiwayDataset, format: Format) -> Result<()> {
    let file = std::io::BufWriter::new(fs::File::create(path)?);
    match format {
        Format::Binary => write_mwfd1(data, file),
        Format::CsvLong => write_csv_long(data, file),
    }
}
