//! Expected-bound curves over a threshold-accuracy grid and the area ratio score.
//!
//! A curve value at threshold `a_t` is `(1/n) Σ_i m_i 𝟙[a_i > a_t]` over the
//! `n` points of the s-grid, where `a_i` is the accuracy of the s-th cell and
//! `m_i` its mean scaled margin bound. The score at `a_t` is the ratio of the
//! areas under the representation and reference curves over `[a_t, a_max]`.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Probability};
use crate::robust::{self, classifier_general, margin_stats};
use crate::spectral::{fit_class_gaussian, FittedGaussian, DEFAULT_RANK_RTOL};
use crate::synth::{LabeledMatrix, SGrid};

pub const DEFAULT_A_GRID_SIZE: usize = 256;
pub const DEFAULT_A_MIN: f64 = 0.55;
pub const DEFAULT_A_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Reference,
    Representation,
}

/// Per-s ingredients of a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub s: f64,
    pub accuracy: f64,
    pub mean_bound: f64,
    pub n_correct: usize,
    pub n_total: usize,
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub kind: CurveKind,
    pub epsilon: f64,
    pub a_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub cells: Vec<CellRecord>,
}

impl BoundCurve {
    pub fn s_grid(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.s).collect()
    }

    pub fn warnings(&self) -> impl Iterator<Item = &str> {
        self.cells.iter().filter_map(|c| c.warning.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub epsilon: f64,
    pub a_t: Probability,
    pub score: f64,
    pub numerator_auc: f64,
    pub denominator_auc: f64,
    pub config_digest: String,
}

/// `n` evenly spaced points on `[a_min, a_max]`, the last one exactly `a_max`.
pub fn build_a_grid(a_min: f64, a_max: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Domain(format!("a-grid needs at least 2 points, got {n}")));
    }
    if !(a_min > 0.5 && a_min < a_max && a_max <= 1.0) {
        return Err(Error::Domain(format!(
            "a-grid bounds must satisfy 0.5 < a_min < a_max <= 1, got [{a_min}, {a_max}]"
        )));
    }
    let step = (a_max - a_min) / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|i| a_min + step * i as f64).collect();
    grid[n - 1] = a_max;
    Ok(grid)
}

pub fn default_a_grid() -> Vec<f64> {
    build_a_grid(DEFAULT_A_MIN, DEFAULT_A_MAX, DEFAULT_A_GRID_SIZE).expect("default grid is valid")
}

fn validate_a_grid(a_grid: &[f64]) -> Result<()> {
    if a_grid.is_empty() {
        return Err(Error::Domain("empty a-grid".into()));
    }
    if a_grid.iter().any(|&a| !(a > 0.5 && a <= 1.0)) {
        return Err(Error::Domain("a-grid values must lie in (0.5, 1]".into()));
    }
    if a_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("a-grid must be strictly increasing".into()));
    }
    Ok(())
}

/// `(1/n) Σ_i m_i 𝟙[a_i > a_t]` for every `a_t` in the grid.
fn assemble(a_grid: &[f64], cells: &[CellRecord]) -> Vec<f64> {
    let n = cells.len() as f64;
    a_grid
        .iter()
        .map(|&a_t| {
            cells
                .iter()
                .filter(|c| c.accuracy > a_t)
                .fold(0.0, |acc, c| acc + c.mean_bound)
                / n
        })
        .collect()
}

/// Curve of the isotropic raw-data model: `a_i = Φ(s_i)`, `m_i = g(a_i)`.
pub fn reference_curve(s_grid: &SGrid, a_grid: &[f64]) -> Result<BoundCurve> {
    if s_grid.is_empty() {
        return Err(Error::Domain("empty s-grid".into()));
    }
    validate_a_grid(a_grid)?;
    let cells = s_grid
        .values()
        .iter()
        .map(|&s| {
            let a = Probability::new(math::cdf(s))?;
            let g = robust::reference_expected_bound_or_limit(a)?;
            Ok(CellRecord {
                s,
                accuracy: a.value(),
                mean_bound: g,
                n_correct: 0,
                n_total: 0,
                degenerate: false,
                warning: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundCurve {
        kind: CurveKind::Reference,
        epsilon: 0.0,
        values: assemble(a_grid, &cells),
        a_grid: a_grid.to_vec(),
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub rank_rtol: f64,
    /// Fraction of each class used for fitting; the rest is used for margins.
    /// `None` fits and evaluates on the same samples.
    pub split_ratio: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            rank_rtol: DEFAULT_RANK_RTOL,
            split_ratio: None,
        }
    }
}

/// A fitted s-cell, reusable across budgets.
#[derive(Debug, Clone)]
pub struct CellFit<'a> {
    pub s: f64,
    pub fit: std::result::Result<FittedGaussian, String>,
    pub eval: Cow<'a, LabeledMatrix>,
}

pub fn fit_cells<'a>(s_grid: &SGrid, per_s: &'a [LabeledMatrix], opts: &FitOptions) -> Result<Vec<CellFit<'a>>> {
    if per_s.len() != s_grid.len() {
        return Err(Error::InvalidArgument(format!(
            "{} embedding sets for {} s-values",
            per_s.len(),
            s_grid.len()
        )));
    }
    if per_s.is_empty() {
        return Err(Error::Domain("no embedding sets".into()));
    }
    if let Some(r) = opts.split_ratio {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Domain(format!("split ratio must lie in (0, 1), got {r}")));
        }
    }
    let cells: Vec<CellFit<'a>> = per_s
        .par_iter()
        .zip(s_grid.values().par_iter())
        .map(|(data, &s)| {
            let (fit_on, eval) = match opts.split_ratio {
                None => (Cow::Borrowed(data), Cow::Borrowed(data)),
                Some(r) => match data.split_per_class(r) {
                    Ok((a, b)) => (Cow::Owned(a), Cow::Owned(b)),
                    Err(e) => {
                        return CellFit {
                            s,
                            fit: Err(format!("s = {s}: {e}")),
                            eval: Cow::Borrowed(data),
                        }
                    }
                },
            };
            let fit = fit_class_gaussian(&fit_on, opts.rank_rtol).map_err(|e| format!("s = {s}: {e}"));
            CellFit { s, fit, eval }
        })
        .collect();
    if cells.iter().all(|c| c.fit.is_err()) {
        let first = cells[0].fit.as_ref().err().cloned().unwrap_or_default();
        return Err(Error::DegenerateData(format!("every cell failed to fit; first: {first}")));
    }
    Ok(cells)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("budget ε must be finite and >= 0, got {eps}")));
    }
    Ok(())
}

fn representation_cell(cell: &CellFit<'_>, eps: f64) -> Result<CellRecord> {
    let failed = |warning: String| CellRecord {
        s: cell.s,
        accuracy: 0.5,
        mean_bound: 0.0,
        n_correct: 0,
        n_total: cell.eval.rows(),
        degenerate: true,
        warning: Some(warning),
    };
    let fit = match &cell.fit {
        Ok(f) => f,
        Err(msg) => return Ok(failed(msg.clone())),
    };
    let acc = robust::analytic_accuracy(fit, eps)?;
    if acc.degenerate {
        return Ok(CellRecord {
            warning: None,
            ..failed(String::new())
        });
    }
    let clf = match classifier_general(fit, eps) {
        Ok(c) => c,
        Err(Error::DegenerateBudget(_)) => {
            return Ok(CellRecord {
                warning: None,
                ..failed(String::new())
            })
        }
        Err(e) => return Err(e),
    };
    let stats = margin_stats(fit, &clf, &cell.eval)?;
    let warning = (stats.n_correct == 0)
        .then(|| format!("s = {}, ε = {eps}: no correctly classified samples", cell.s));
    Ok(CellRecord {
        s: cell.s,
        accuracy: acc.accuracy.value(),
        mean_bound: stats.mean_scaled_bound,
        n_correct: stats.n_correct,
        n_total: stats.n_total,
        degenerate: false,
        warning,
    })
}

/// Representation curve at budget `eps` from cells fitted once.
pub fn representation_curve_from_fits(cells: &[CellFit<'_>], eps: f64, a_grid: &[f64]) -> Result<BoundCurve> {
    check_eps(eps)?;
    validate_a_grid(a_grid)?;
    if cells.is_empty() {
        return Err(Error::Domain("no cells".into()));
    }
    let records = cells
        .par_iter()
        .map(|c| representation_cell(c, eps))
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundCurve {
        kind: CurveKind::Representation,
        epsilon: eps,
        values: assemble(a_grid, &records),
        a_grid: a_grid.to_vec(),
        cells: records,
    })
}

pub fn representation_curve(
    s_grid: &SGrid,
    per_s: &[LabeledMatrix],
    eps: f64,
    a_grid: &[f64],
    opts: &FitOptions,
) -> Result<BoundCurve> {
    check_eps(eps)?;
    validate_a_grid(a_grid)?;
    let cells = fit_cells(s_grid, per_s, opts)?;
    representation_curve_from_fits(&cells, eps, a_grid)
}

/// Trapezoid area under the piecewise-linear interpolant of `(grid, values)` on
/// `[from, grid_end]`.
pub fn trapezoid_from(grid: &[f64], values: &[f64], from: f64) -> Result<f64> {
    if grid.len() != values.len() || grid.is_empty() {
        return Err(Error::InvalidArgument("grid and values must be nonempty and equally long".into()));
    }
    let (first, last) = (grid[0], grid[grid.len() - 1]);
    if !(from >= first && from <= last) {
        return Err(Error::Domain(format!("{from} outside the grid range [{first}, {last}]")));
    }
    // first index strictly above `from`
    let j = grid.partition_point(|&a| a <= from);
    if j == grid.len() {
        return Ok(0.0);
    }
    let (a0, a1) = (grid[j - 1], grid[j]);
    let v_from = values[j - 1] + (values[j] - values[j - 1]) * (from - a0) / (a1 - a0);
    let mut area = 0.5 * (v_from + values[j]) * (a1 - from);
    for k in j..grid.len() - 1 {
        area += 0.5 * (values[k] + values[k + 1]) * (grid[k + 1] - grid[k]);
    }
    Ok(area)
}

pub fn synbench_score(rep: &BoundCurve, reference: &BoundCurve, a_t: Probability, config_digest: &str) -> Result<ScoreReport> {
    if rep.a_grid != reference.a_grid {
        return Err(Error::InvalidArgument("curves use different a-grids".into()));
    }
    let numerator_auc = trapezoid_from(&rep.a_grid, &rep.values, a_t.value())?;
    let denominator_auc = trapezoid_from(&reference.a_grid, &reference.values, a_t.value())?;
    if !(denominator_auc > 0.0) {
        return Err(Error::Domain(format!(
            "reference area is zero above a_t = {a_t}"
        )));
    }
    Ok(ScoreReport {
        epsilon: rep.epsilon,
        a_t,
        score: numerator_auc / denominator_auc,
        numerator_auc,
        denominator_auc,
        config_digest: config_digest.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestEpsilon {
    pub a_t: Probability,
    pub epsilon: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub reference: BoundCurve,
    /// One curve per ε, in the order of the ε list.
    pub curves: Vec<BoundCurve>,
    /// ε-major: all thresholds for the first ε, then the next.
    pub reports: Vec<ScoreReport>,
    pub best: Vec<BestEpsilon>,
}

/// Scores for every (ε, a_t) pair, and the best ε per threshold (ties go to the
/// smallest ε).
pub fn eps_sweep(
    cells: &[CellFit<'_>],
    reference: &BoundCurve,
    eps_list: &[f64],
    a_t_list: &[Probability],
    config_digest: &str,
) -> Result<SweepResult> {
    if eps_list.is_empty() || a_t_list.is_empty() {
        return Err(Error::Domain("ε and a_t lists must be nonempty".into()));
    }
    for &e in eps_list {
        check_eps(e)?;
    }
    let curves = eps_list
        .iter()
        .map(|&e| representation_curve_from_fits(cells, e, &reference.a_grid))
        .collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::with_capacity(curves.len() * a_t_list.len());
    for curve in &curves {
        for &a_t in a_t_list {
            reports.push(synbench_score(curve, reference, a_t, config_digest)?);
        }
    }
    let best = a_t_list
        .iter()
        .enumerate()
        .map(|(j, &a_t)| {
            let mut best: Option<(f64, f64)> = None;
            for (i, &eps) in eps_list.iter().enumerate() {
                let score = reports[i * a_t_list.len() + j].score;
                let better = match best {
                    None => true,
                    Some((be, bs)) => score > bs || (score == bs && eps < be),
                };
                if better {
                    best = Some((eps, score));
                }
            }
            let (epsilon, score) = best.expect("nonempty ε list");
            BestEpsilon { a_t, epsilon, score }
        })
        .collect();
    Ok(SweepResult {
        reference: reference.clone(),
        curves,
        reports,
        best,
    })
}
