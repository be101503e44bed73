//! Grid-based multi-way functional samples.
//!
//! A [`MultiwayDataset`] holds `n` surfaces `X_i(s, t)` observed on a common
//! dense grid. Values are stored flat in `[subject][s][t]` row-major order.
//! Multi-dimensional spatial grids are handled by vectorizing `s` along a
//! row-major ordering of the factor axes; see [`vectorize_spatial`].

mod format;

pub use format::{
    decode_header, load_dataset, read_csv_long, read_mwfd1, save_dataset, write_csv_long,
    write_mwfd1, Format, Header, MAGIC,
};
pub(crate) use format::{checked_count, decode_values, write_header};

use crate::error::{Error, Result};

/// One axis of the observation grid with its quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl GridAxis {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "grid axis needs at least 2 points, got {}",
                points.len()
            )));
        }
        if points.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "{} grid points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("grid points must be finite".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "grid points must be strictly increasing".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidInput(
                "quadrature weights must be finite and positive".into(),
            ));
        }
        Ok(Self { points, weights })
    }

    /// Axis with trapezoidal weights (endpoints half-weighted).
    pub fn trapezoid(points: Vec<f64>) -> Result<Self> {
        let weights = trapezoid_weights(&points);
        Self::new(points, weights)
    }

    /// `len` evenly spaced points on `[0, 1]` with trapezoidal weights.
    pub fn uniform(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::InvalidInput(format!(
                "grid axis needs at least 2 points, got {len}"
            )));
        }
        let m = (len - 1) as f64;
        let h = 1.0 / m;
        let points = (0..len).map(|i| i as f64 / m).collect();
        let weights = (0..len)
            .map(|i| if i == 0 || i + 1 == len { 0.5 * h } else { h })
            .collect();
        Self::new(points, weights)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Quadrature inner product `∑ w_i f_i g_i`, with compensated summation.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for (w, (a, b)) in self.weights.iter().zip(f.iter().zip(g)) {
            let x = w * a * b;
            let t = sum + x;
            comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
            sum = t;
        }
        sum + comp
    }
}

/// Trapezoidal quadrature weights for an arbitrary increasing grid.
pub fn trapezoid_weights(points: &[f64]) -> Vec<f64> {
    let m = points.len();
    if m < 2 {
        return vec![1.0; m];
    }
    (0..m)
        .map(|i| {
            let left = if i > 0 { points[i] - points[i - 1] } else { 0.0 };
            let right = if i + 1 < m { points[i + 1] - points[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

/// `n` surfaces on a common `|S| × |T|` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiwayDataset {
    n: usize,
    s_axis: GridAxis,
    t_axis: GridAxis,
    s_factors: Option<Vec<GridAxis>>,
    values: Vec<f64>,
}

impl MultiwayDataset {
    pub fn new(n: usize, s_axis: GridAxis, t_axis: GridAxis, values: Vec<f64>) -> Result<Self> {
        let expected = n
            .checked_mul(s_axis.len())
            .and_then(|v| v.checked_mul(t_axis.len()))
            .ok_or_else(|| Error::Dimension("declared dimensions overflow".into()))?;
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {n}×{}×{} = {expected} values, got {}",
                s_axis.len(),
                t_axis.len(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at flat index {pos}"
            )));
        }
        Ok(Self {
            n,
            s_axis,
            t_axis,
            s_factors: None,
            values,
        })
    }

    /// Attach the spatial factor axes that were vectorized into `s_axis`.
    pub fn with_factors(mut self, factors: Vec<GridAxis>) -> Result<Self> {
        if factors.is_empty() || factors.len() > 3 {
            return Err(Error::InvalidInput(format!(
                "spatial factor count must be 1..=3, got {}",
                factors.len()
            )));
        }
        let product: usize = factors.iter().map(GridAxis::len).product();
        if product != self.s_axis.len() {
            return Err(Error::Dimension(format!(
                "factor axes span {product} positions but the spatial axis has {}",
                self.s_axis.len()
            )));
        }
        self.s_factors = Some(factors);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s_axis(&self) -> &GridAxis {
        &self.s_axis
    }

    pub fn t_axis(&self) -> &GridAxis {
        &self.t_axis
    }

    pub fn s_factors(&self) -> Option<&[GridAxis]> {
        self.s_factors.as_deref()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Surface of subject `i` as a row-major `|S| × |T|` slice.
    pub fn subject(&self, i: usize) -> &[f64] {
        let block = self.s_axis.len() * self.t_axis.len();
        &self.values[i * block..(i + 1) * block]
    }

    pub fn value(&self, i: usize, s: usize, t: usize) -> f64 {
        let (ns, nt) = (self.s_axis.len(), self.t_axis.len());
        self.values[(i * ns + s) * nt + t]
    }

    /// Row-major multi-index for every vectorized spatial position, when
    /// the spatial axis came from a product of factor axes.
    pub fn index_map(&self) -> Option<Vec<Vec<usize>>> {
        self.s_factors.as_ref().map(|f| {
            let dims: Vec<usize> = f.iter().map(GridAxis::len).collect();
            row_major_indices(&dims)
        })
    }

    /// Copy of the dataset with every value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Dataset built from the subjects at `indices` (repeats allowed).
    pub fn select_subjects(&self, indices: &[usize]) -> Result<Self> {
        let block = self.s_axis.len() * self.t_axis.len();
        let mut values = Vec::with_capacity(indices.len() * block);
        for &i in indices {
            if i >= self.n {
                return Err(Error::InvalidInput(format!(
                    "subject index {i} out of range for n = {}",
                    self.n
                )));
            }
            values.extend_from_slice(self.subject(i));
        }
        Ok(Self {
            n: indices.len(),
            s_axis: self.s_axis.clone(),
            t_axis: self.t_axis.clone(),
            s_factors: self.s_factors.clone(),
            values,
        })
    }
}

fn row_major_indices(dims: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = dims.iter().product();
    (0..total)
        .map(|mut flat| {
            let mut idx = vec![0; dims.len()];
            for (slot, &d) in idx.iter_mut().zip(dims).rev() {
                *slot = flat % d;
                flat /= d;
            }
            idx
        })
        .collect()
}

/// Surfaces whose spatial argument lives on a product of up to three axes.
/// Values are `[subject][s_1]..[s_d][t]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductDataset {
    pub n: usize,
    pub s_factors: Vec<GridAxis>,
    pub t_axis: GridAxis,
    pub values: Vec<f64>,
}

/// Flatten a multi-dimensional spatial grid into a single `s` axis.
///
/// The flattened axis uses ordinal positions `0..|S|` as points and the
/// outer product of the factor weights as quadrature weights.
pub fn vectorize_spatial(data: &ProductDataset) -> Result<MultiwayDataset> {
    let s_axis = product_axis(&data.s_factors)?;
    MultiwayDataset::new(data.n, s_axis, data.t_axis.clone(), data.values.clone())?
        .with_factors(data.s_factors.clone())
}

/// Flattened spatial axis for a product of factor axes.
pub(crate) fn product_axis(factors: &[GridAxis]) -> Result<GridAxis> {
    if factors.is_empty() || factors.len() > 3 {
        return Err(Error::InvalidInput(format!(
            "spatial factor count must be 1..=3, got {}",
            factors.len()
        )));
    }
    let dims: Vec<usize> = factors.iter().map(GridAxis::len).collect();
    let weights: Vec<f64> = row_major_indices(&dims)
        .iter()
        .map(|idx| {
            idx.iter()
                .zip(factors)
                .map(|(&k, axis)| axis.weights()[k])
                .product()
        })
        .collect();
    let points = (0..weights.len()).map(|i| i as f64).collect();
    GridAxis::new(points, weights)
}

/// Inverse of [`vectorize_spatial`].
pub fn devectorize(data: &MultiwayDataset) -> Result<ProductDataset> {
    let factors = data.s_factors().ok_or_else(|| {
        Error::InvalidInput("dataset has no spatial factor axes to restore".into())
    })?;
    Ok(ProductDataset {
        n: data.n(),
        s_factors: factors.to_vec(),
        t_axis: data.t_axis().clone(),
        values: data.values().to_vec(),
    })
}

/// Pointwise mean surface and per-subject residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredDataset {
    n: usize,
    s_axis: GridAxis,
    t_axis: GridAxis,
    mean_surface: Vec<f64>,
    residuals: Vec<f64>,
}

impl CenteredDataset {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s_axis(&self) -> &GridAxis {
        &self.s_axis
    }

    pub fn t_axis(&self) -> &GridAxis {
        &self.t_axis
    }

    /// Row-major `|S| × |T|` mean surface.
    pub fn mean_surface(&self) -> &[f64] {
        &self.mean_surface
    }

    /// Residuals in `[subject][s][t]` order.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn residual(&self, i: usize) -> &[f64] {
        let block = self.s_axis.len() * self.t_axis.len();
        &self.residuals[i * block..(i + 1) * block]
    }

    /// Residuals repackaged as an ordinary dataset.
    pub fn to_dataset(&self) -> MultiwayDataset {
        MultiwayDataset {
            n: self.n,
            s_axis: self.s_axis.clone(),
            t_axis: self.t_axis.clone(),
            s_factors: None,
            values: self.residuals.clone(),
        }
    }
}

/// Subtract the pointwise sample mean from every surface.
pub fn center(data: &MultiwayDataset) -> Result<CenteredDataset> {
    let n = data.n();
    if n < 2 {
        return Err(Error::TooFewSubjects);
    }
    let block = data.s_axis.len() * data.t_axis.len();
    let mut mean = vec![0.0; block];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(data.subject(i)) {
            *m += v;
        }
    }
    let inv_n = 1.0 / n as f64;
    mean.iter_mut().for_each(|m| *m *= inv_n);

    let mut residuals = Vec::with_capacity(n * block);
    for i in 0..n {
        residuals.extend(data.subject(i).iter().zip(&mean).map(|(v, m)| v - m));
    }
    Ok(CenteredDataset {
        n,
        s_axis: data.s_axis.clone(),
        t_axis: data.t_axis.clone(),
        mean_surface: mean,
        residuals,
    })
}
