//! Phase-locking values from per-trial phase tensors.
//!
//! `PLV(s,t) = (1/n_T) |∑_k exp(i{B_1k(s,t) − B_2k(s,t)})|` for two signals
//! with phases `B_1`, `B_2` over `n_T` trials, on a frequency × time grid.
//! Phase files are `MWFD1` with an extra `n_T` header field and payload
//! ordered `[subject][trial][s][t]`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::datagrid::{checked_count, decode_header, decode_values, write_header, GridAxis, Header, MultiwayDataset, MAGIC};
use crate::error::{Error, Result};

/// Phases (radians) of one subject: `n_T` trials on an `|S| × |T|` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTensor {
    n_trials: usize,
    s_axis: GridAxis,
    t_axis: GridAxis,
    values: Vec<f64>,
}

impl PhaseTensor {
    pub fn new(n_trials: usize, s_axis: GridAxis, t_axis: GridAxis, values: Vec<f64>) -> Result<Self> {
        if n_trials == 0 {
            return Err(Error::InvalidInput("a phase tensor needs at least one trial".into()));
        }
        let expected = n_trials
            .checked_mul(s_axis.len())
            .and_then(|x| x.checked_mul(t_axis.len()))
            .ok_or_else(|| Error::Dimension("phase tensor dimensions overflow".into()))?;
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {n_trials}×{}×{} phases, got {}",
                s_axis.len(),
                t_axis.len(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite phase at flat index {pos}")));
        }
        Ok(Self {
            n_trials,
            s_axis,
            t_axis,
            values,
        })
    }

    pub fn n_trials(&self) -> usize {
        self.n_trials
    }

    pub fn s_axis(&self) -> &GridAxis {
        &self.s_axis
    }

    pub fn t_axis(&self) -> &GridAxis {
        &self.t_axis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn cells(&self) -> usize {
        self.s_axis.len() * self.t_axis.len()
    }
}

/// PLV surface, row-major `|S| × |T|`, every entry in `[0, 1]`.
pub fn compute_plv(p1: &PhaseTensor, p2: &PhaseTensor) -> Result<Vec<f64>> {
    if p1.n_trials != p2.n_trials || p1.s_axis.len() != p2.s_axis.len() || p1.t_axis.len() != p2.t_axis.len() {
        return Err(Error::Dimension(format!(
            "phase tensors differ in shape: {}×{}×{} vs {}×{}×{}",
            p1.n_trials,
            p1.s_axis.len(),
            p1.t_axis.len(),
            p2.n_trials,
            p2.s_axis.len(),
            p2.t_axis.len()
        )));
    }
    let cells = p1.cells();
    let n_t = p1.n_trials as f64;
    let out = (0..cells)
        .into_par_iter()
        .map(|c| {
            let (mut re, mut im) = (0.0, 0.0);
            for k in 0..p1.n_trials {
                let d = p1.values[k * cells + c] - p2.values[k * cells + c];
                re += d.cos();
                im += d.sin();
            }
            (re.hypot(im) / n_t).min(1.0)
        })
        .collect();
    Ok(out)
}

/// PLV surfaces of paired subjects, stacked as one dataset on the grid of
/// the first pair.
pub fn plv_dataset(pairs: &[(PhaseTensor, PhaseTensor)]) -> Result<MultiwayDataset> {
    let first = pairs
        .first()
        .ok_or_else(|| Error::InvalidInput("no phase tensors given".into()))?;
    let (s_axis, t_axis) = (first.0.s_axis.clone(), first.0.t_axis.clone());
    let mut values = Vec::with_capacity(pairs.len() * first.0.cells());
    for (a, b) in pairs {
        if a.s_axis != s_axis || a.t_axis != t_axis || b.s_axis != s_axis || b.t_axis != t_axis {
            return Err(Error::Dimension("phase tensors are on different grids".into()));
        }
        values.extend(compute_plv(a, b)?);
    }
    MultiwayDataset::new(pairs.len(), s_axis, t_axis, values)
}

/// Decode every subject of a phase file.
pub fn read_phase_tensors(bytes: &[u8]) -> Result<Vec<PhaseTensor>> {
    let (header, payload) = decode_header(bytes)?;
    let n_trials = header
        .n_trials
        .ok_or_else(|| Error::parse("header", "phase file lacks the n_T field"))?;
    if header.s_factors.is_some() {
        return Err(Error::parse("header", "phase files do not take s_factors"));
    }
    let (s_axis, t_axis, _) = header.axes()?;
    let per_subject = checked_count(&[n_trials, s_axis.len(), t_axis.len()])?;
    let count = checked_count(&[header.n, per_subject])?;
    let base = bytes.len() - payload.len();
    let values = decode_values(payload, count, base)?;
    if n_trials == 0 {
        return Err(Error::parse("header", "n_T must be at least 1"));
    }
    (0..header.n)
        .map(|i| {
            PhaseTensor::new(
                n_trials,
                s_axis.clone(),
                t_axis.clone(),
                values[i * per_subject..(i + 1) * per_subject].to_vec(),
            )
        })
        .collect()
}

/// Encode subjects sharing one grid and trial count.
pub fn write_phase_tensors<W: Write>(subjects: &[PhaseTensor], w: W) -> Result<()> {
    let first = subjects
        .first()
        .ok_or_else(|| Error::InvalidInput("no phase tensors to write".into()))?;
    if subjects
        .iter()
        .any(|p| p.n_trials != first.n_trials || p.s_axis != first.s_axis || p.t_axis != first.t_axis)
    {
        return Err(Error::Dimension("phase tensors in one file must share shape and grid".into()));
    }
    let header = Header {
        magic: MAGIC.to_string(),
        n: subjects.len(),
        s_points: first.s_axis.points().to_vec(),
        t_points: first.t_axis.points().to_vec(),
        s_factors: None,
        s_weights: Some(first.s_axis.weights().to_vec()),
        t_weights: Some(first.t_axis.weights().to_vec()),
        n_trials: Some(first.n_trials),
    };
    let mut w = write_header(&header, w)?;
    for p in subjects {
        for v in &p.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_phase_tensors(path: impl AsRef<Path>) -> Result<Vec<PhaseTensor>> {
    read_phase_tensors(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tensor(n_t: usize, values: Vec<f64>) -> PhaseTensor {
        PhaseTensor::new(n_t, GridAxis::uniform(2).unwrap(), GridAxis::uniform(2).unwrap(), values).unwrap()
    }

    #[test]
    fn identical_phases_lock_fully() {
        let p = tensor(3, (0..12).map(|x| x as f64 * 0.4).collect());
        assert!(compute_plv(&p, &p).unwrap().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn opposite_and_quarter_turns_cancel() {
        let zero = tensor(2, vec![0.0; 8]);
        let mut v = vec![0.0; 8];
        v[4] = PI;
        let opp = tensor(2, v);
        assert!(compute_plv(&opp, &zero).unwrap()[0] < 1e-15);

        let zero4 = tensor(4, vec![0.0; 16]);
        let mut v = vec![0.0; 16];
        for k in 0..4 {
            v[k * 4] = k as f64 * PI / 2.0;
        }
        let turns = tensor(4, v);
        assert!(compute_plv(&turns, &zero4).unwrap()[0] < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let a = tensor(2, vec![0.0; 8]);
        let b = tensor(1, vec![0.0; 4]);
        assert!(compute_plv(&a, &b).is_err());
    }

    #[test]
    fn file_round_trip() {
        let a = tensor(2, (0..8).map(|x| x as f64).collect());
        let b = tensor(2, (0..8).map(|x| -(x as f64)).collect());
        let mut buf = Vec::new();
        write_phase_tensors(&[a.clone(), b.clone()], &mut buf).unwrap();
        assert_eq!(read_phase_tensors(&buf).unwrap(), vec![a.clone(), b]);
        // a phase file is not a dataset
        assert!(crate::datagrid::read_mwfd1(&buf).is_err());
        let d = plv_dataset(&[(a.clone(), a)]).unwrap();
        assert_eq!(d.n(), 1);
    }
}
