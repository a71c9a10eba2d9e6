//! Synthetic class-conditional Gaussian data: `x | y ~ N(y·μ + μ̄, I_d)` with
//! `μ = s·1_d/√d`, so the class separation is controlled by the scale `s` alone.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Probability;

/// Default cap on `2 · samples_per_class · dim` (about 2 GiB of f64).
pub const DEFAULT_MAX_ELEMENTS: usize = 1 << 28;

pub const DEFAULT_S_MIN: f64 = 0.1;
pub const DEFAULT_S_MAX: f64 = 5.0;
pub const DEFAULT_S_STEPS: usize = 20;
pub const DEFAULT_SAMPLES_PER_CLASS: usize = 2000;

/// Evenly spaced scales, endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SGrid {
    values: Vec<f64>,
}

impl SGrid {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Wraps an explicit list; it must be positive and strictly increasing.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("empty s-grid".into()));
        }
        if values.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::Domain("s-grid values must be finite and positive".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("s-grid must be strictly increasing".into()));
        }
        Ok(SGrid { values })
    }
}

pub fn build_s_grid(s_min: f64, s_max: f64, n: usize) -> Result<SGrid> {
    if !(s_min.is_finite() && s_max.is_finite()) || s_min <= 0.0 || s_min >= s_max {
        return Err(Error::Domain(format!(
            "s-grid needs 0 < s_min < s_max, got [{s_min}, {s_max}]"
        )));
    }
    if n < 2 {
        return Err(Error::Domain(format!("s-grid needs at least 2 points, got {n}")));
    }
    let step = (s_max - s_min) / (n - 1) as f64;
    let mut values: Vec<f64> = (0..n).map(|i| s_min + step * i as f64).collect();
    values[n - 1] = s_max;
    Ok(SGrid { values })
}

/// Parameters of one synthetic two-class task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub s: f64,
    pub dim: usize,
    /// P(y = +1). Generation is always balanced; the prior only enters the
    /// classifiers through `q = ln((1-p)/p)`.
    pub prior_p: Probability,
    /// Translation μ̄ added to both classes; empty means zero.
    pub translation: Vec<f64>,
    pub samples_per_class: usize,
    pub seed: u64,
    /// Sub-stream index, normally the position of `s` in its grid.
    pub stream: u64,
}

impl GaussianSpec {
    /// Balanced, untranslated task.
    pub fn new(s: f64, dim: usize, samples_per_class: usize, seed: u64) -> Self {
        GaussianSpec {
            s,
            dim,
            prior_p: Probability::HALF,
            translation: Vec::new(),
            samples_per_class,
            seed,
            stream: 0,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s.is_finite() && self.s > 0.0) {
            return Err(Error::Domain(format!("scale s must be positive, got {}", self.s)));
        }
        if self.dim == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        let p = self.prior_p.value();
        if p <= 0.0 || p >= 1.0 {
            return Err(Error::Domain(format!("prior must lie in (0, 1), got {p}")));
        }
        if self.samples_per_class < 2 {
            return Err(Error::Domain("need at least 2 samples per class".into()));
        }
        if !self.translation.is_empty() && self.translation.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "translation has length {}, expected {}",
                self.translation.len(),
                self.dim
            )));
        }
        if self.translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("translation must be finite".into()));
        }
        Ok(())
    }

    /// `μ = s·1_d/√d`.
    pub fn mean(&self) -> Vec<f64> {
        let c = self.s / (self.dim as f64).sqrt();
        vec![c; self.dim]
    }

    /// `ln((1-p)/p)`, zero for a balanced prior.
    pub fn log_prior_ratio(&self) -> f64 {
        let p = self.prior_p.value();
        ((1.0 - p) / p).ln()
    }
}

/// Row-major sample matrix with ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    labels: Vec<i8>,
    pub provenance: String,
}

impl LabeledMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        labels: Vec<i8>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Data(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Data(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if labels.len() != rows {
            return Err(Error::Data(format!(
                "{} labels for {rows} rows",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
            return Err(Error::Data(format!("label {bad} is not ±1")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("matrix contains non-finite entries".into()));
        }
        Ok(LabeledMatrix {
            rows,
            cols,
            data,
            labels,
            provenance: provenance.into(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = (&[f64], i8)> + '_ {
        self.data
            .chunks_exact(self.cols)
            .zip(self.labels.iter().copied())
    }

    /// (count of +1, count of −1)
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (pos, self.rows - pos)
    }

    /// Applies `f` to every row, producing a matrix with the same labels.
    pub fn map_rows<F>(&self, out_cols: usize, mut f: F) -> Result<LabeledMatrix>
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let mut out = vec![0.0; self.rows * out_cols];
        for (src, dst) in self
            .data
            .chunks_exact(self.cols)
            .zip(out.chunks_exact_mut(out_cols))
        {
            f(src, dst);
        }
        LabeledMatrix::new(
            self.rows,
            out_cols,
            out,
            self.labels.clone(),
            self.provenance.clone(),
        )
    }

    /// Splits each class in order: the first `ceil(ratio · n_class)` rows of a class
    /// go to the first matrix, the rest to the second.
    pub fn split_per_class(&self, ratio: f64) -> Result<(LabeledMatrix, LabeledMatrix)> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Domain(format!("split ratio {ratio} not in (0, 1)")));
        }
        let (pos, neg) = self.class_counts();
        let keep_pos = ((pos as f64) * ratio).ceil() as usize;
        let keep_neg = ((neg as f64) * ratio).ceil() as usize;
        let (mut seen_pos, mut seen_neg) = (0, 0);
        let mut first = (Vec::new(), Vec::new());
        let mut second = (Vec::new(), Vec::new());
        for (row, label) in self.iter_rows() {
            let to_first = if label == 1 {
                seen_pos += 1;
                seen_pos <= keep_pos
            } else {
                seen_neg += 1;
                seen_neg <= keep_neg
            };
            let target = if to_first { &mut first } else { &mut second };
            target.0.extend_from_slice(row);
            target.1.push(label);
        }
        let build = |(data, labels): (Vec<f64>, Vec<i8>)| {
            let rows = labels.len();
            LabeledMatrix::new(rows, self.cols, data, labels, self.provenance.clone())
        };
        Ok((build(first)?, build(second)?))
    }
}

/// 32-byte ChaCha key from (seed, stream, class); distinct triples give
/// independent streams regardless of generation order.
fn stream_rng(seed: u64, stream: u64, class: i8) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16] = class as u8;
    key[24..].copy_from_slice(b"synbench");
    ChaCha12Rng::from_seed(key)
}

pub fn sample_dataset(spec: &GaussianSpec) -> Result<LabeledMatrix> {
    sample_dataset_capped(spec, DEFAULT_MAX_ELEMENTS)
}

/// Draws `samples_per_class` rows for y = +1 followed by as many for y = −1.
pub fn sample_dataset_capped(spec: &GaussianSpec, max_elements: usize) -> Result<LabeledMatrix> {
    spec.validate()?;
    let rows = spec
        .samples_per_class
        .checked_mul(2)
        .ok_or_else(|| Error::Resource("sample count overflows".into()))?;
    let elements = rows
        .checked_mul(spec.dim)
        .filter(|&e| e <= max_elements)
        .ok_or_else(|| {
            Error::Resource(format!(
                "{} x {} samples exceed the cap of {max_elements} values",
                rows, spec.dim
            ))
        })?;

    let mean = spec.mean();
    let shift = |j: usize| spec.translation.get(j).copied().unwrap_or(0.0);
    let mut data = Vec::with_capacity(elements);
    let mut labels = Vec::with_capacity(rows);
    for class in [1i8, -1] {
        let mut rng = stream_rng(spec.seed, spec.stream, class);
        let y = f64::from(class);
        for _ in 0..spec.samples_per_class {
            for (j, m) in mean.iter().enumerate() {
                let g: f64 = StandardNormal.sample(&mut rng);
                data.push(y * m + shift(j) + g);
            }
            labels.push(class);
        }
    }
    LabeledMatrix::new(rows, spec.dim, data, labels, "raw")
}
