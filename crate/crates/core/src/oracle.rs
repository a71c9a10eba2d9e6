//! Brute-force and Monte-Carlo checkers, independent of the closed forms they test.
//!
//! Monte-Carlo draws are split into fixed-size chunks, each with its own
//! ChaCha stream keyed by `(seed, chunk)`, so estimates are identical whatever
//! the thread count. Every suite reports a pass count, a failure count, and a
//! one-line detail string.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Probability};
use crate::robust::{self, NormKind, RobustLinearClassifier, DEFAULT_PROJECTION_TOL};
use crate::spectral::{self, FittedGaussian, DEFAULT_RANK_RTOL};
use crate::synth::LabeledMatrix;

pub const MIN_MC_DRAWS: u64 = 10_000;
const CHUNK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over √n.
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
}

impl McEstimate {
    /// `|mean − target| ≤ k · stderr`
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}

/// Balanced two-Gaussian model `x | y ~ N(μ_y, F diag(λ) Fᵀ)` to draw from.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    pub mu1: DVector<f64>,
    pub mu2: DVector<f64>,
    pub factor: DMatrix<f64>,
    pub sqrt_eigvals: Vec<f64>,
}

impl GaussianModel {
    pub fn from_fit(fit: &FittedGaussian) -> Self {
        GaussianModel {
            mu1: fit.mu1.clone(),
            mu2: fit.mu2.clone(),
            factor: fit.factor.clone(),
            sqrt_eigvals: fit.eigvals.iter().map(|l| l.sqrt()).collect(),
        }
    }

    /// `N(±μ, I)`
    pub fn isotropic(mu: &[f64]) -> Self {
        let d = mu.len();
        let mu1 = DVector::from_column_slice(mu);
        GaussianModel {
            mu2: -&mu1,
            mu1,
            factor: DMatrix::identity(d, d),
            sqrt_eigvals: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mu1.len()
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    n: u64,
    correct: u64,
    abs_correct: f64,
    abs_correct_sq: f64,
    abs_all: f64,
    abs_all_sq: f64,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.n += o.n;
        self.correct += o.correct;
        self.abs_correct += o.abs_correct;
        self.abs_correct_sq += o.abs_correct_sq;
        self.abs_all += o.abs_all;
        self.abs_all_sq += o.abs_all_sq;
        self
    }
}

fn chunk_rng(seed: u64, chunk: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&chunk.to_le_bytes());
    key[16..].copy_from_slice(b"synbench-oracle!");
    ChaCha12Rng::from_seed(key)
}

/// Draws `(x, y)` from the model and tallies `wᵀx + b` per draw. The score is
/// evaluated as `wᵀμ_y + b + (√λ ⊙ Fᵀw)ᵀ g` with `g ~ N(0, I_r)`, which is the
/// same random variable without materializing `x`.
fn simulate(model: &GaussianModel, clf: &RobustLinearClassifier, n: u64, seed: u64) -> Result<Tally> {
    if n < MIN_MC_DRAWS {
        return Err(Error::InvalidArgument(format!(
            "Monte-Carlo needs at least {MIN_MC_DRAWS} draws, got {n}"
        )));
    }
    if clf.weight.len() != model.dim() {
        return Err(Error::InvalidArgument(format!(
            "classifier has {} weights, model dimension {}",
            clf.weight.len(),
            model.dim()
        )));
    }
    if clf.weight.iter().all(|&w| w == 0.0) {
        return Err(Error::DegenerateBudget("classifier weight is zero".into()));
    }
    let proj = model.factor.tr_mul(&clf.weight);
    let u: Vec<f64> = proj.iter().zip(&model.sqrt_eigvals).map(|(p, s)| p * s).collect();
    let c_pos = clf.weight.dot(&model.mu1) + clf.bias;
    let c_neg = clf.weight.dot(&model.mu2) + clf.bias;

    let chunks = n.div_ceil(CHUNK);
    let tallies: Vec<Tally> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = chunk_rng(seed, k);
            let len = CHUNK.min(n - k * CHUNK);
            let mut t = Tally::default();
            for _ in 0..len {
                let positive: bool = rng.gen();
                let mut score = if positive { c_pos } else { c_neg };
                for &uk in &u {
                    let g: f64 = rng.sample(StandardNormal);
                    score += uk * g;
                }
                let a = score.abs();
                t.n += 1;
                t.abs_all += a;
                t.abs_all_sq += a * a;
                if (score >= 0.0) == positive {
                    t.correct += 1;
                    t.abs_correct += a;
                    t.abs_correct_sq += a * a;
                }
            }
            t
        })
        .collect();
    Ok(tallies.into_iter().fold(Tally::default(), Tally::merge))
}

fn mean_and_stderr(sum: f64, sum_sq: f64, n: u64) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 {
        ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    (mean, (var / nf).sqrt())
}

/// Fraction of fresh draws classified correctly, with binomial standard error.
pub fn mc_accuracy(model: &GaussianModel, clf: &RobustLinearClassifier, n: u64, seed: u64) -> Result<McEstimate> {
    let t = simulate(model, clf, n, seed)?;
    let p = t.correct as f64 / t.n as f64;
    Ok(McEstimate {
        mean: p,
        stderr: (p * (1.0 - p) / t.n as f64).sqrt(),
        n: t.n,
        seed,
    })
}

fn separation(clf: &RobustLinearClassifier) -> Result<f64> {
    match clf.separation {
        Some(s) if s > 0.0 => Ok(s),
        _ => Err(Error::InvalidArgument("classifier has no positive separation scale".into())),
    }
}

/// Mean scaled bound `|wᵀx + b| / separation` over correctly classified draws.
/// `n` in the result counts those draws.
pub fn mc_expected_bound(model: &GaussianModel, clf: &RobustLinearClassifier, n: u64, seed: u64) -> Result<McEstimate> {
    let sep = separation(clf)?;
    let t = simulate(model, clf, n, seed)?;
    if t.correct == 0 {
        return Err(Error::DegenerateData("no draw was classified correctly".into()));
    }
    let (mean, stderr) = mean_and_stderr(t.abs_correct, t.abs_correct_sq, t.correct);
    Ok(McEstimate {
        mean: mean / sep,
        stderr: stderr / sep,
        n: t.correct,
        seed,
    })
}

/// Same as [`mc_expected_bound`] but averaged over every draw, correct or not.
pub fn mc_unconditional_bound(model: &GaussianModel, clf: &RobustLinearClassifier, n: u64, seed: u64) -> Result<McEstimate> {
    let sep = separation(clf)?;
    let t = simulate(model, clf, n, seed)?;
    let (mean, stderr) = mean_and_stderr(t.abs_all, t.abs_all_sq, t.n);
    Ok(McEstimate {
        mean: mean / sep,
        stderr: stderr / sep,
        n: t.n,
        seed,
    })
}

/// Best point of `(μ̃ − z)ᵀΛ⁻¹(μ̃ − z)` over `‖z‖₂ ≤ ε` by exhaustive search on a
/// `grid_n^d` lattice in polar coordinates (radius, then angles), re-centered on
/// the incumbent and halved in width until it collapses. In these coordinates
/// the ball is a box, so boundary points are on the lattice. Dimensions above 3
/// are refused.
pub fn zlambda_grid_oracle(mu_tilde: &[f64], lambda: &[f64], eps: f64, grid_n: usize) -> Result<Vec<f64>> {
    use std::f64::consts::PI;
    let d = mu_tilde.len();
    if d == 0 || d > 3 {
        return Err(Error::Unsupported(format!("grid oracle handles 1 to 3 dimensions, got {d}")));
    }
    if lambda.len() != d || lambda.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidArgument("lambda must hold d positive values".into()));
    }
    if !(eps >= 0.0) || grid_n < 3 {
        return Err(Error::InvalidArgument("need ε >= 0 and grid_n >= 3".into()));
    }
    if eps == 0.0 {
        return Ok(vec![0.0; d]);
    }
    let ranges: Vec<(f64, f64)> = match d {
        1 => vec![(-eps, eps)],
        2 => vec![(0.0, eps), (-PI, PI)],
        _ => vec![(0.0, eps), (0.0, PI), (-PI, PI)],
    };
    let to_z = |p: &[f64]| -> Vec<f64> {
        match d {
            1 => vec![p[0]],
            2 => vec![p[0] * p[1].cos(), p[0] * p[1].sin()],
            _ => vec![
                p[0] * p[1].sin() * p[2].cos(),
                p[0] * p[1].sin() * p[2].sin(),
                p[0] * p[1].cos(),
            ],
        }
    };
    let objective = |p: &[f64]| robust::projection_objective(mu_tilde, lambda, &to_z(p));

    let mut center: Vec<f64> = ranges.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    let mut half: Vec<f64> = ranges.iter().map(|(lo, hi)| 0.5 * (hi - lo)).collect();
    let mut best = center.clone();
    let mut best_obj = objective(&best);
    let mut idx = vec![0usize; d];
    let mut p = vec![0.0; d];
    while half[0] > 1e-14 * eps {
        idx.iter_mut().for_each(|i| *i = 0);
        loop {
            for k in 0..d {
                let step = 2.0 * half[k] / (grid_n - 1) as f64;
                let (lo, hi) = ranges[k];
                p[k] = (center[k] - half[k] + step * idx[k] as f64).clamp(lo, hi);
            }
            let obj = objective(&p);
            if obj < best_obj {
                best_obj = obj;
                best.copy_from_slice(&p);
            }
            // odometer increment
            let mut k = 0;
            while k < d {
                idx[k] += 1;
                if idx[k] < grid_n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == d {
                break;
            }
        }
        center.copy_from_slice(&best);
        half.iter_mut().for_each(|h| *h *= 0.5);
    }
    Ok(to_z(&best))
}

/// ℓ∞ distance from `x` to `{wᵀv + b = 0}` computed as `|wᵀx + b| / max_v |wᵀv|`
/// over all `2^d` vertices `v ∈ {±1}^d` of the unit ℓ∞ ball.
pub fn linf_margin_vertex_oracle(weight: &[f64], bias: f64, x: &[f64]) -> Result<f64> {
    let d = weight.len();
    if d == 0 || d > 20 {
        return Err(Error::Unsupported(format!("vertex enumeration handles 1 to 20 dimensions, got {d}")));
    }
    if x.len() != d {
        return Err(Error::InvalidArgument("point and weight lengths differ".into()));
    }
    let mut reach: f64 = 0.0;
    for mask in 0u32..(1u32 << d) {
        let s: f64 = weight
            .iter()
            .enumerate()
            .map(|(i, w)| if mask & (1 << i) != 0 { *w } else { -w })
            .sum();
        reach = reach.max(s.abs());
    }
    if reach == 0.0 {
        return Err(Error::DegenerateBudget("zero weight".into()));
    }
    let f: f64 = weight.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + bias;
    Ok(f.abs() / reach)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Reduced instance counts for interactive runs.
    Quick,
    /// Instance counts and draw sizes of the acceptance suite.
    Full,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub seed: u64,
    pub budget: Budget,
    /// Multiplies every tolerance; values below 1 tighten the checks.
    pub tolerance_scale: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 20240101,
            budget: Budget::Quick,
            tolerance_scale: 1.0,
        }
    }
}

impl VerifyOptions {
    fn pick<T>(&self, quick: T, full: T) -> T {
        match self.budget {
            Budget::Quick => quick,
            Budget::Full => full,
        }
    }

    fn rng(&self, tag: u64) -> ChaCha12Rng {
        chunk_rng(self.seed ^ 0x5eed_0000, tag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub passed: bool,
    pub checks: usize,
    pub failures: usize,
    pub detail: String,
    pub seconds: f64,
}

pub const SUITES: [&str; 8] = [
    "special",
    "kkt",
    "zlambda",
    "accuracy-mc",
    "bound-mc",
    "eigen",
    "linf",
    "stderr",
];

/// Counts checks and keeps the first failure message.
#[derive(Default)]
struct Checks {
    total: usize,
    failed: usize,
    first: Option<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.total += 1;
        if !ok {
            self.failed += 1;
            if self.first.is_none() {
                self.first = Some(msg());
            }
        }
    }
}

pub fn run_suite(name: &str, opts: &VerifyOptions) -> Result<SuiteOutcome> {
    if !(opts.tolerance_scale >= 0.0) {
        return Err(Error::InvalidArgument("tolerance scale must be >= 0".into()));
    }
    let start = Instant::now();
    let (checks, allowed, summary) = match name {
        "special" => suite_special(opts)?,
        "kkt" => suite_kkt(opts)?,
        "zlambda" => suite_zlambda(opts)?,
        "accuracy-mc" => suite_accuracy(opts)?,
        "bound-mc" => suite_bound(opts)?,
        "eigen" => suite_eigen(opts)?,
        "linf" => suite_linf(opts)?,
        "stderr" => suite_stderr(opts)?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown suite '{other}'; expected one of {}",
                SUITES.join(", ")
            )))
        }
    };
    let passed = checks.failed <= allowed;
    let detail = match (&checks.first, passed) {
        (None, _) => summary,
        (Some(f), true) => format!("{summary}; tolerated: {f}"),
        (Some(f), false) => format!("{summary}; first failure: {f}"),
    };
    Ok(SuiteOutcome {
        name: name.to_string(),
        passed,
        checks: checks.total,
        failures: checks.failed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all(opts: &VerifyOptions) -> Result<Vec<SuiteOutcome>> {
    SUITES.iter().map(|s| run_suite(s, opts)).collect()
}

type SuiteResult = Result<(Checks, usize, String)>;

fn suite_special(opts: &VerifyOptions) -> SuiteResult {
    let tol = 1e-9 * opts.tolerance_scale;
    let mut c = Checks::default();
    let lo = math::std_normal_cdf(0.1)?.value();
    c.check((0.5395..=0.5402).contains(&lo), || format!("Φ(0.1) = {lo}"));
    let hi = math::std_normal_cdf(5.0)?.value();
    c.check(hi >= 0.999_999, || format!("Φ(5) = {hi}"));
    for i in 0..1000 {
        let p = (i as f64 + 0.5) / 1000.0;
        let x = math::std_normal_quantile(Probability::new(p)?)?;
        let err = (math::cdf(x) - p).abs();
        c.check(err <= tol, || format!("Φ(Φ⁻¹({p})) off by {err:e}"));
    }
    for i in 0..=1000 {
        let x = -5.0 + 10.0 * i as f64 / 1000.0;
        let back = math::std_normal_quantile(Probability::new(math::cdf(x))?)?;
        let err = (back - x).abs();
        c.check(err <= tol, || format!("Φ⁻¹(Φ({x})) off by {err:e}"));
    }
    Ok((c, 0, "cdf anchors and 2001 round trips".into()))
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn suite_kkt(opts: &VerifyOptions) -> SuiteResult {
    let s = opts.tolerance_scale;
    let mut rng = opts.rng(1);
    let mut c = Checks::default();
    let n = opts.pick(200, 1000);
    for case in 0..n {
        let d = rng.gen_range(1..=16);
        let mu: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let lambda: Vec<f64> = (0..d).map(|_| log_uniform(&mut rng, 1e-2, 1e2)).collect();
        let eps = rng.gen_range(0.0..1.2) * norm(&mu);
        let r = robust::solve_z_lambda(&mu, &lambda, eps, DEFAULT_PROJECTION_TOL)?;
        let zn = norm(&r.z);
        c.check(zn <= eps * (1.0 + 1e-9 * s), || format!("case {case}: ‖z‖ = {zn} > ε = {eps}"));
        if r.active {
            c.check(r.multiplier_nu >= 0.0, || format!("case {case}: ν < 0"));
            if eps > 0.0 {
                c.check((zn - eps).abs() <= 1e-9 * s * eps, || {
                    format!("case {case}: active but ‖z‖ = {zn}, ε = {eps}")
                });
                let worst = mu
                    .iter()
                    .zip(&lambda)
                    .zip(&r.z)
                    .map(|((m, l), z)| (z * (1.0 + r.multiplier_nu * l) - m).abs() / (1.0 + m.abs()))
                    .fold(0.0, f64::max);
                c.check(worst <= 1e-10 * s, || format!("case {case}: stationarity residual {worst:e}"));
            }
        } else {
            c.check(r.multiplier_nu == 0.0 && r.z == mu, || {
                format!("case {case}: inactive constraint but z ≠ μ̃ or ν ≠ 0")
            });
        }
    }
    // grid oracle on 2-D and 3-D instances
    let n_grid = opts.pick(10, 40);
    for case in 0..n_grid {
        let d = 2 + case % 2;
        let mu: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let lambda: Vec<f64> = (0..d).map(|_| log_uniform(&mut rng, 0.1, 10.0)).collect();
        let eps = rng.gen_range(0.05..0.95) * norm(&mu);
        let r = robust::solve_z_lambda(&mu, &lambda, eps, DEFAULT_PROJECTION_TOL)?;
        let grid = zlambda_grid_oracle(&mu, &lambda, eps, 41)?;
        let gap = robust::projection_objective(&mu, &lambda, &grid) - robust::projection_objective(&mu, &lambda, &r.z);
        c.check(gap.abs() <= 1e-4 * s, || format!("grid case {case}: objective gap {gap:e}"));
    }
    Ok((c, 0, format!("{n} random projections, {n_grid} grid comparisons")))
}

fn suite_zlambda(opts: &VerifyOptions) -> SuiteResult {
    let s = opts.tolerance_scale;
    let mut c = Checks::default();
    let solve = |mu: &[f64], lambda: &[f64], eps: f64| robust::solve_z_lambda(mu, lambda, eps, DEFAULT_PROJECTION_TOL);

    let (mu, lambda) = ([1.0, 1.0], [1.0, 4.0]);
    let r = solve(&mu, &lambda, 1.0)?;
    let grid = zlambda_grid_oracle(&mu, &lambda, 1.0, 101)?;
    let gap = robust::projection_objective(&mu, &lambda, &grid) - robust::projection_objective(&mu, &lambda, &r.z);
    c.check(gap.abs() <= 1e-4 * s, || format!("anisotropic instance gap {gap:e}"));
    c.check((r.z[0] - 0.8325).abs() <= 1e-4 * s && (r.z[1] - 0.5540).abs() <= 1e-4 * s, || {
        format!("anisotropic z = {:?}", r.z)
    });

    let mu = [3.0, 4.0, 0.0];
    let grid = zlambda_grid_oracle(&mu, &[2.0; 3], 1.0, 61)?;
    let want = [0.6, 0.8, 0.0];
    let err = grid.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    c.check(err <= 1e-4 * s, || format!("isotropic grid point {grid:?}"));

    let mu = [0.3, -0.2];
    let grid = zlambda_grid_oracle(&mu, &[0.5, 3.0], 1.0, 61)?;
    let err = grid.iter().zip(&mu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    c.check(err <= 1e-4 * s, || format!("interior grid point {grid:?}"));

    c.check(
        matches!(zlambda_grid_oracle(&[1.0; 4], &[1.0; 4], 0.5, 5), Err(Error::Unsupported(_))),
        || "4-D grid request was not refused".into(),
    );
    Ok((c, 0, "fixed anisotropic, isotropic, and interior instances".into()))
}

fn random_orthogonal(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    m.qr().q()
}

/// A full-rank model with random rotation, spectrum, separation, and offset.
fn random_fit(rng: &mut impl Rng) -> Result<FittedGaussian> {
    let d = rng.gen_range(2..=6);
    let mut lambda: Vec<f64> = (0..d).map(|_| log_uniform(rng, 0.2, 5.0)).collect();
    lambda.sort_by(|a, b| b.total_cmp(a));
    let dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let scale = rng.gen_range(0.3..2.0) / norm(&dir);
    let mu_tilde = DVector::from_iterator(d, dir.iter().map(|x| x * scale));
    let f = random_orthogonal(rng, d);
    let mid = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
    let half = &f * &mu_tilde;
    FittedGaussian::from_parts(&mid + &half, &mid - &half, f, lambda)
}

fn suite_accuracy(opts: &VerifyOptions) -> SuiteResult {
    let k = 3.0 * opts.tolerance_scale;
    let mut rng = opts.rng(2);
    let mut c = Checks::default();
    let (cases, draws) = opts.pick((10, 200_000u64), (50, 1_000_000));
    for case in 0..cases {
        let fit = random_fit(&mut rng)?;
        let eps = rng.gen_range(0.0..0.9) * fit.mu_tilde.norm();
        let clf = robust::classifier_general(&fit, eps)?;
        let analytic = robust::analytic_accuracy(&fit, eps)?.accuracy.value();
        let mc = mc_accuracy(&GaussianModel::from_fit(&fit), &clf, draws, opts.seed.wrapping_add(case as u64))?;
        c.check(mc.within(analytic, k), || {
            format!(
                "case {case}: analytic {analytic:.6}, Monte-Carlo {:.6} ± {:.2e}",
                mc.mean, mc.stderr
            )
        });
    }
    // allow 2 misses in 50 at 3σ
    let allowed = cases / 25;
    Ok((c, allowed, format!("{cases} random models at {draws} draws, {allowed} misses allowed")))
}

fn suite_bound(opts: &VerifyOptions) -> SuiteResult {
    let k = 3.0 * opts.tolerance_scale;
    let mut c = Checks::default();
    let draws = opts.pick(1_000_000u64, 10_000_000);
    let dim = 2;
    for i in 0..9 {
        let a = 0.55 + 0.05 * i as f64;
        let s = math::std_normal_quantile(Probability::new(a)?)?;
        let mu: Vec<f64> = vec![s / (dim as f64).sqrt(); dim];
        let clf = robust::classifier_l2_identity(&mu, 0.0, Probability::HALF)?;
        let model = GaussianModel::isotropic(&mu);
        let g = robust::reference_expected_bound(Probability::new(a)?)?;
        let mc = mc_expected_bound(&model, &clf, draws, opts.seed.wrapping_add(100 + i))?;
        c.check(mc.within(g, k), || {
            format!("a = {a:.2}: closed form {g:.6}, Monte-Carlo {:.6} ± {:.2e}", mc.mean, mc.stderr)
        });
        if i == 3 {
            let all = mc_unconditional_bound(&model, &clf, draws, opts.seed.wrapping_add(100 + i))?;
            c.check((all.mean - mc.mean).abs() > 3.0 * (all.stderr + mc.stderr), || {
                "conditioning on correctness made no difference".into()
            });
        }
    }
    Ok((c, 0, format!("9 accuracy levels at {draws} draws")))
}

fn random_symmetric(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    (&m + m.transpose()) * 0.5
}

fn suite_eigen(opts: &VerifyOptions) -> SuiteResult {
    let s = opts.tolerance_scale;
    let mut rng = opts.rng(3);
    let mut c = Checks::default();
    let sizes: &[usize] = opts.pick(&[8, 64, 128], &[8, 128, 1024]);
    for &n in sizes {
        let a = random_symmetric(&mut rng, n);
        let (vals, vecs) = spectral::jacobi_eigen(&a)?;
        let lmax = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let resid = (&a * &vecs - &vecs * DMatrix::from_diagonal(&DVector::from_column_slice(&vals)))
            .column_iter()
            .map(|col| col.norm())
            .fold(0.0, f64::max);
        c.check(resid <= 1e-7 * s * lmax, || format!("n = {n}: residual {resid:e}, λmax {lmax:e}"));
        let ortho = (vecs.tr_mul(&vecs) - DMatrix::<f64>::identity(n, n)).amax();
        c.check(ortho <= 1e-9 * s, || format!("n = {n}: orthogonality defect {ortho:e}"));
    }

    let (rows, cols) = opts.pick((30, 80), (100, 400));
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let labels: Vec<i8> = (0..rows).map(|i| if i < rows / 2 { 1 } else { -1 }).collect();
    let m = LabeledMatrix::new(rows, cols, data, labels, "gram-check")?;
    let gram = spectral::fit_class_gaussian(&m, DEFAULT_RANK_RTOL)?;
    let direct = FittedGaussian::from_moments(
        gram.mu1.clone(),
        gram.mu2.clone(),
        &pooled_covariance(&m, &gram),
        DEFAULT_RANK_RTOL,
    )?;
    c.check(gram.rank() == direct.rank(), || {
        format!("rank {} via Gram, {} via covariance", gram.rank(), direct.rank())
    });
    let worst = gram
        .eigvals
        .iter()
        .zip(&direct.eigvals)
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);
    c.check(worst <= 1e-6 * s, || format!("Gram spectrum relative gap {worst:e}"));
    Ok((c, 0, format!("sizes {sizes:?}, Gram check at {rows}x{cols}")))
}

/// Pooled within-class covariance with divisor N − 2, built column by column.
fn pooled_covariance(m: &LabeledMatrix, fit: &FittedGaussian) -> DMatrix<f64> {
    let d = m.cols();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (row, label) in m.iter_rows() {
        let mean = if label == 1 { &fit.mu1 } else { &fit.mu2 };
        let centered = DVector::from_iterator(d, row.iter().zip(mean.iter()).map(|(x, m)| x - m));
        cov.ger(1.0, &centered, &centered, 1.0);
    }
    cov / (m.rows() - 2) as f64
}

fn suite_linf(opts: &VerifyOptions) -> SuiteResult {
    let s = opts.tolerance_scale;
    let mut rng = opts.rng(4);
    let mut c = Checks::default();
    let n = opts.pick(100, 500);
    for case in 0..n {
        let d = rng.gen_range(1..=10);
        let mu: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let top = mu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let eps = rng.gen_range(0.0..0.95) * top;
        let prior = Probability::new(rng.gen_range(0.2..0.8))?;
        let clf = robust::classifier_linf(&mu, eps, prior)?;
        debug_assert_eq!(clf.norm_kind, NormKind::Linf);
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let got = robust::margin_linf(&clf, &x)?;
        let want = linf_margin_vertex_oracle(clf.weight.as_slice(), clf.bias, &x)?;
        let err = (got - want).abs();
        c.check(err <= 1e-10 * s * want.max(1.0), || format!("case {case}: {got} vs brute force {want}"));
    }
    Ok((c, 0, format!("{n} random classifiers against vertex enumeration")))
}

fn suite_stderr(opts: &VerifyOptions) -> SuiteResult {
    let s = opts.tolerance_scale;
    let mut c = Checks::default();
    let mu = [0.5, 0.5];
    let clf = robust::classifier_l2_identity(&mu, 0.0, Probability::HALF)?;
    let model = GaussianModel::isotropic(&mu);
    let n = opts.pick(100_000u64, 1_000_000);
    let small = mc_accuracy(&model, &clf, n, opts.seed)?;
    let large = mc_accuracy(&model, &clf, 4 * n, opts.seed.wrapping_add(1))?;
    let ratio = small.stderr / large.stderr;
    c.check((ratio / 2.0 - 1.0).abs() <= 0.2 * s, || format!("stderr ratio {ratio:.3}, expected 2"));
    let again = mc_accuracy(&model, &clf, n, opts.seed)?;
    c.check(again == small, || "estimate is not reproducible under a fixed seed".into());

    let chance = robust::classifier_l2_identity(&[1e-12, 0.0], 0.0, Probability::HALF)?;
    let coin = mc_accuracy(&GaussianModel::isotropic(&[1e-12, 0.0]), &chance, n, opts.seed)?;
    c.check(coin.within(0.5, 3.0 * s), || format!("zero-separation accuracy {}", coin.mean));
    Ok((c, 0, format!("stderr at n = {n} vs 4n, reproducibility, chance level")))
}
