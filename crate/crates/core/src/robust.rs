//! Robust Bayes optimal linear classifiers for two Gaussians with a shared
//! covariance, together with their decision margins and accuracies.
//!
//! Everything in the general-covariance path lives in the eigenbasis of the
//! pooled covariance: with `Σ = FΛFᵀ` and `μ̃ = Fᵀ(μ₁ − μ₂)/2`, the ℓ₂ ε-robust
//! classifier is
//!
//! ```text
//! ŷ(z) = sign((z − (μ₁+μ₂)/2)ᵀ F Λ⁻¹ (μ̃ − z_Λ(μ̃)))
//! z_Λ(μ̃) = argmin_{‖z‖₂ ≤ ε} (μ̃ − z)ᵀ Λ⁻¹ (μ̃ − z)
//! ```
//!
//! The projection `z_Λ` has the stationarity form `z_i = μ̃_i / (1 + ν λ_i)`
//! with a scalar multiplier ν ≥ 0, found by bisection on `‖z(ν)‖² − ε²`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Probability};
use crate::spectral::FittedGaussian;
use crate::synth::LabeledMatrix;

pub const DEFAULT_PROJECTION_TOL: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;
const MAX_BRACKET_DOUBLINGS: usize = 2100;

/// Solution of the Mahalanobis projection onto the ε-ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub z: Vec<f64>,
    /// Lagrange multiplier of the ball constraint; infinite when ε = 0 and μ̃ ≠ 0.
    pub multiplier_nu: f64,
    /// The constraint is tight (‖μ̃‖₂ > ε).
    pub active: bool,
}

/// `(μ̃ − z)ᵀ Λ⁻¹ (μ̃ − z)`
pub fn projection_objective(mu_tilde: &[f64], lambda: &[f64], z: &[f64]) -> f64 {
    mu_tilde
        .iter()
        .zip(lambda)
        .zip(z)
        .map(|((m, l), z)| (m - z) * (m - z) / l)
        .sum()
}

fn check_lambda(mu_tilde: &[f64], lambda: &[f64]) -> Result<()> {
    if mu_tilde.len() != lambda.len() {
        return Err(Error::InvalidArgument(format!(
            "mu_tilde has {} entries, lambda {}",
            mu_tilde.len(),
            lambda.len()
        )));
    }
    if lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::Domain("eigenvalues must be strictly positive".into()));
    }
    if mu_tilde.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidArgument("mu_tilde must be finite".into()));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("budget ε must be finite and >= 0, got {eps}")));
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn solve_z_lambda(mu_tilde: &[f64], lambda: &[f64], eps: f64, tol: f64) -> Result<ProjectionResult> {
    check_lambda(mu_tilde, lambda)?;
    check_eps(eps)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if norm(mu_tilde) <= eps {
        return Ok(ProjectionResult {
            z: mu_tilde.to_vec(),
            multiplier_nu: 0.0,
            active: false,
        });
    }
    if eps == 0.0 {
        return Ok(ProjectionResult {
            z: vec![0.0; mu_tilde.len()],
            multiplier_nu: f64::INFINITY,
            active: true,
        });
    }

    let z_at = |nu: f64| -> Vec<f64> {
        mu_tilde
            .iter()
            .zip(lambda)
            .map(|(m, l)| m / (1.0 + nu * l))
            .collect()
    };
    let h = |nu: f64| -> f64 { z_at(nu).iter().map(|z| z * z).sum::<f64>() - eps * eps };
    let target = tol * eps * eps;

    // h(0) > 0 and h decreases strictly; double until the sign flips.
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while h(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS || !hi.is_finite() {
            return Err(Error::NoConvergence(format!(
                "could not bracket the multiplier for ε = {eps}"
            )));
        }
    }

    let mut nu = hi;
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let hm = h(mid);
        if hm.abs() <= target {
            nu = mid;
            break;
        }
        if hm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        // hi always has h <= 0, i.e. a feasible z
        nu = hi;
    }
    Ok(ProjectionResult {
        z: z_at(nu),
        multiplier_nu: nu,
        active: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    L2,
    Linf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Raw,
    Representation,
}

/// `sign(wᵀx + b)` together with the budget it was built for.
#[derive(Debug, Clone)]
pub struct RobustLinearClassifier {
    pub weight: DVector<f64>,
    pub bias: f64,
    pub epsilon: f64,
    pub norm_kind: NormKind,
    pub space: Space,
    /// `z_Λ(μ̃)` for the general-covariance classifier.
    pub projection: Option<ProjectionResult>,
    /// `Λ⁻¹(μ̃ − z_Λ(μ̃))`, the weight in the eigenbasis.
    pub reduced_weight: Option<DVector<f64>>,
    /// Class-separation normalizer for scaled margins: `|μ̃ᵀΛ⁻¹(μ̃ − z_Λ)|` in the
    /// general case, `‖w‖₂‖μ‖₂` for the identity-covariance classifier.
    pub separation: Option<f64>,
}

impl RobustLinearClassifier {
    #[inline]
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weight
            .iter()
            .zip(x)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.bias
    }

    /// +1 when `wᵀx + b >= 0`, else −1.
    #[inline]
    pub fn predict(&self, x: &[f64]) -> i8 {
        if self.decision(x) >= 0.0 {
            1
        } else {
            -1
        }
    }

    /// `|wᵀx + b| / separation` for ℓ₂ classifiers.
    pub fn scaled_bound(&self, x: &[f64]) -> Result<f64> {
        let sep = self.separation.ok_or_else(|| {
            Error::InvalidArgument("classifier carries no separation scale".into())
        })?;
        Ok(self.decision(x).abs() / sep)
    }
}

/// `ln((1-p)/p)`
fn log_prior_ratio(prior_p: Probability) -> Result<f64> {
    let p = prior_p.value();
    if p <= 0.0 || p >= 1.0 {
        return Err(Error::Domain(format!("prior must lie in (0, 1), got {p}")));
    }
    Ok(((1.0 - p) / p).ln())
}

/// Identity-covariance ℓ₂ classifier: `w = μ(1 − ε/‖μ‖₂)`, `b = −q/2`.
pub fn classifier_l2_identity(mu: &[f64], eps: f64, prior_p: Probability) -> Result<RobustLinearClassifier> {
    check_eps(eps)?;
    let q = log_prior_ratio(prior_p)?;
    let mu_norm = norm(mu);
    if eps >= mu_norm {
        return Err(Error::DegenerateBudget(format!(
            "ε = {eps} >= ‖μ‖₂ = {mu_norm}"
        )));
    }
    let shrink = 1.0 - eps / mu_norm;
    let weight = DVector::from_iterator(mu.len(), mu.iter().map(|m| m * shrink));
    let separation = weight.norm() * mu_norm;
    Ok(RobustLinearClassifier {
        weight,
        bias: -q / 2.0,
        epsilon: eps,
        norm_kind: NormKind::L2,
        space: Space::Raw,
        projection: None,
        reduced_weight: None,
        separation: Some(separation),
    })
}

/// `Λ⁻¹(μ̃ − z_Λ(μ̃))` and the projection it came from.
fn reduced_direction(mu_tilde: &[f64], lambda: &[f64], eps: f64) -> Result<(DVector<f64>, ProjectionResult)> {
    let proj = solve_z_lambda(mu_tilde, lambda, eps, DEFAULT_PROJECTION_TOL)?;
    if !proj.active {
        return Err(Error::DegenerateBudget(format!(
            "ε = {eps} >= ‖μ̃‖₂ = {}; the robust weight vanishes",
            norm(mu_tilde)
        )));
    }
    let w = DVector::from_iterator(
        mu_tilde.len(),
        mu_tilde
            .iter()
            .zip(&proj.z)
            .zip(lambda)
            .map(|((m, z), l)| (m - z) / l),
    );
    if w.iter().all(|&x| x == 0.0) {
        return Err(Error::DegenerateBudget("robust weight is zero".into()));
    }
    Ok((w, proj))
}

/// General-covariance ℓ₂ classifier (balanced prior):
/// `w = FΛ⁻¹(μ̃ − z_Λ(μ̃))`, `b = −wᵀ(μ₁+μ₂)/2`.
pub fn classifier_general(fit: &FittedGaussian, eps: f64) -> Result<RobustLinearClassifier> {
    let (reduced, proj) = reduced_direction(fit.mu_tilde.as_slice(), &fit.eigvals, eps)?;
    let weight = &fit.factor * &reduced;
    let bias = -weight.dot(&fit.midpoint);
    let separation = fit.mu_tilde.dot(&reduced).abs();
    Ok(RobustLinearClassifier {
        weight,
        bias,
        epsilon: eps,
        norm_kind: NormKind::L2,
        space: Space::Representation,
        projection: Some(proj),
        reduced_weight: Some(reduced),
        separation: Some(separation),
    })
}

fn check_point(fit: &FittedGaussian, clf: &RobustLinearClassifier, point: &[f64]) -> Result<()> {
    if clf.norm_kind != NormKind::L2 {
        return Err(Error::InvalidArgument("expected an ℓ₂ classifier".into()));
    }
    if point.len() != fit.dim() || clf.weight.len() != fit.dim() {
        return Err(Error::InvalidArgument(format!(
            "point has {} coordinates, model {}",
            point.len(),
            fit.dim()
        )));
    }
    Ok(())
}

/// `|(x − (μ₁+μ₂)/2)ᵀ w|`
fn centered_projection(fit: &FittedGaussian, clf: &RobustLinearClassifier, point: &[f64]) -> f64 {
    point
        .iter()
        .zip(fit.midpoint.iter())
        .zip(clf.weight.iter())
        .map(|((x, m), w)| (x - m) * w)
        .sum::<f64>()
        .abs()
}

/// Scaled lower bound on the ℓ₂ decision margin:
/// `|(x − (μ₁+μ₂)/2)ᵀFΛ⁻¹(μ̃ − z_Λ)| / |μ̃ᵀΛ⁻¹(μ̃ − z_Λ)|`.
pub fn scaled_margin(fit: &FittedGaussian, clf: &RobustLinearClassifier, point: &[f64]) -> Result<f64> {
    check_point(fit, clf, point)?;
    let reduced = clf.reduced_weight.as_ref().ok_or_else(|| {
        Error::InvalidArgument("classifier was not built from a fitted model".into())
    })?;
    let denom = fit.mu_tilde.dot(reduced).abs();
    if denom == 0.0 {
        return Err(Error::DegenerateBudget("zero separation".into()));
    }
    Ok(centered_projection(fit, clf, point) / denom)
}

/// Distance from `point` to the decision hyperplane.
pub fn margin_unscaled(fit: &FittedGaussian, clf: &RobustLinearClassifier, point: &[f64]) -> Result<f64> {
    check_point(fit, clf, point)?;
    let wn = clf.weight.norm();
    if wn == 0.0 {
        return Err(Error::DegenerateBudget("zero weight".into()));
    }
    Ok(centered_projection(fit, clf, point) / wn)
}

/// Standard accuracy of the ε-robust classifier on its own model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyResult {
    pub accuracy: Probability,
    /// `μ̃ᵀw / ‖w‖_Λ`, the argument of Φ (0 when degenerate).
    pub argument: f64,
    /// ε ≥ ‖μ̃‖₂: the robust weight vanishes and the accuracy is reported at chance.
    pub degenerate: bool,
}

impl AccuracyResult {
    fn chance() -> Self {
        AccuracyResult {
            accuracy: Probability::HALF,
            argument: 0.0,
            degenerate: true,
        }
    }
}

/// `Φ(μ̃ᵀw / √(wᵀΛw))` with `w = Λ⁻¹(μ̃ − z_Λ(μ̃))`, directly on eigen-coordinates.
pub fn analytic_accuracy_reduced(mu_tilde: &[f64], lambda: &[f64], eps: f64) -> Result<AccuracyResult> {
    check_lambda(mu_tilde, lambda)?;
    check_eps(eps)?;
    let (w, _) = match reduced_direction(mu_tilde, lambda, eps) {
        Ok(v) => v,
        Err(Error::DegenerateBudget(_)) => return Ok(AccuracyResult::chance()),
        Err(e) => return Err(e),
    };
    let num: f64 = mu_tilde.iter().zip(w.iter()).map(|(m, w)| m * w).sum();
    let den: f64 = lambda
        .iter()
        .zip(w.iter())
        .map(|(l, w)| l * w * w)
        .sum::<f64>()
        .sqrt();
    let argument = num / den;
    Ok(AccuracyResult {
        accuracy: Probability::new(math::cdf(argument))?,
        argument,
        degenerate: false,
    })
}

pub fn analytic_accuracy(fit: &FittedGaussian, eps: f64) -> Result<AccuracyResult> {
    analytic_accuracy_reduced(fit.mu_tilde.as_slice(), &fit.eigvals, eps)
}

/// Lower bound on the expected scaled margin of correctly classified raw samples
/// at accuracy `a`: `φ(Φ⁻¹(a)) / (a·Φ⁻¹(a)) + 1`.
pub fn reference_expected_bound(a: Probability) -> Result<f64> {
    let av = a.value();
    if av <= 0.5 || av >= 1.0 {
        return Err(Error::Domain(format!("accuracy {av} outside (0.5, 1)")));
    }
    let k = math::std_normal_quantile(a)?;
    Ok(math::pdf(k) / (av * k) + 1.0)
}

/// [`reference_expected_bound`] extended by its limit 1 at `a = 1` (and for `a`
/// so close to 1 that the quantile is not representable).
pub fn reference_expected_bound_or_limit(a: Probability) -> Result<f64> {
    if a.value() >= 1.0 - math::QUANTILE_EDGE {
        return Ok(1.0);
    }
    reference_expected_bound(a)
}

/// ℓ∞ classifier: `w_i = μ_i − sign(μ_i)·min(|μ_i|, ε)`, `b = −q/2`.
pub fn classifier_linf(mu: &[f64], eps: f64, prior_p: Probability) -> Result<RobustLinearClassifier> {
    check_eps(eps)?;
    let q = log_prior_ratio(prior_p)?;
    let weight = DVector::from_iterator(
        mu.len(),
        mu.iter().map(|&m| {
            let shrink = if m == 0.0 { 0.0 } else { m.signum() * m.abs().min(eps) };
            m - shrink
        }),
    );
    if weight.iter().all(|&w| w == 0.0) {
        return Err(Error::DegenerateBudget(format!(
            "every coordinate of μ is within ε = {eps}"
        )));
    }
    Ok(RobustLinearClassifier {
        weight,
        bias: -q / 2.0,
        epsilon: eps,
        norm_kind: NormKind::Linf,
        space: Space::Raw,
        projection: None,
        reduced_weight: None,
        separation: None,
    })
}

/// ℓ∞ distance to the decision hyperplane: `|wᵀx + b| / ‖w‖₁`.
pub fn margin_linf(clf: &RobustLinearClassifier, point: &[f64]) -> Result<f64> {
    if clf.norm_kind != NormKind::Linf {
        return Err(Error::InvalidArgument("expected an ℓ∞ classifier".into()));
    }
    if point.len() != clf.weight.len() {
        return Err(Error::InvalidArgument(format!(
            "point has {} coordinates, classifier {}",
            point.len(),
            clf.weight.len()
        )));
    }
    let l1 = clf.weight.lp_norm(1);
    if l1 == 0.0 {
        return Err(Error::DegenerateBudget("zero weight".into()));
    }
    Ok(clf.decision(point).abs() / l1)
}

/// Mean scaled margin over the correctly classified rows of a data set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginStats {
    /// 0 when no row is classified correctly.
    pub mean_scaled_bound: f64,
    pub n_correct: usize,
    pub n_total: usize,
}

impl MarginStats {
    pub fn accuracy(&self) -> f64 {
        self.n_correct as f64 / self.n_total as f64
    }
}

pub fn margin_stats(fit: &FittedGaussian, clf: &RobustLinearClassifier, data: &LabeledMatrix) -> Result<MarginStats> {
    if data.cols() != fit.dim() {
        return Err(Error::InvalidArgument(format!(
            "data has {} columns, model {}",
            data.cols(),
            fit.dim()
        )));
    }
    let reduced = clf.reduced_weight.as_ref().ok_or_else(|| {
        Error::InvalidArgument("classifier was not built from a fitted model".into())
    })?;
    let denom = fit.mu_tilde.dot(reduced).abs();
    if denom == 0.0 {
        return Err(Error::DegenerateBudget("zero separation".into()));
    }
    let mut sum = 0.0;
    let mut n_correct = 0;
    for (row, label) in data.iter_rows() {
        let score = clf.decision(row);
        if clf.predict(row) == label {
            sum += score.abs() / denom;
            n_correct += 1;
        }
    }
    Ok(MarginStats {
        mean_scaled_bound: if n_correct > 0 { sum / n_correct as f64 } else { 0.0 },
        n_correct,
        n_total: data.rows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn p(v: f64) -> Probability {
        Probability::new(v).unwrap()
    }

    fn diag_fit(mu_tilde: &[f64], lambda: &[f64]) -> FittedGaussian {
        let d = mu_tilde.len();
        let mu = DVector::from_column_slice(mu_tilde);
        FittedGaussian::from_parts(mu.clone(), -mu, DMatrix::identity(d, d), lambda.to_vec()).unwrap()
    }

    #[test]
    fn isotropic_projection_is_radial() {
        let r = solve_z_lambda(&[3.0, 4.0], &[1.0, 1.0], 1.0, DEFAULT_PROJECTION_TOL).unwrap();
        assert!(r.active);
        assert!((r.z[0] - 0.6).abs() < 1e-12 && (r.z[1] - 0.8).abs() < 1e-12);
        assert!((r.multiplier_nu - 4.0).abs() < 1e-10);
    }

    #[test]
    fn anisotropic_projection_matches_oracle() {
        // ν and z from a 40-digit bisection on ‖z(ν)‖² = ε² bracketed by a dense grid
        let r = solve_z_lambda(&[1.0, 1.0], &[1.0, 4.0], 1.0, DEFAULT_PROJECTION_TOL).unwrap();
        assert!((r.multiplier_nu - 0.201_223_892_982_867_57).abs() < 1e-11);
        assert!((r.z[0] - 0.832_484_273_615_978_2).abs() < 1e-12);
        assert!((r.z[1] - 0.554_048_674_921_326).abs() < 1e-12);
        assert!((norm(&r.z) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn interior_projection() {
        for lambda in [[1.0, 1.0], [0.1, 7.0]] {
            let r = solve_z_lambda(&[0.5, 0.0], &lambda, 1.0, DEFAULT_PROJECTION_TOL).unwrap();
            assert_eq!(r.z, vec![0.5, 0.0]);
            assert_eq!(r.multiplier_nu, 0.0);
            assert!(!r.active);
        }
    }

    #[test]
    fn zero_budget_projects_to_origin() {
        let r = solve_z_lambda(&[1.0, -2.0], &[1.0, 3.0], 0.0, DEFAULT_PROJECTION_TOL).unwrap();
        assert_eq!(r.z, vec![0.0, 0.0]);
        assert!(r.active && r.multiplier_nu.is_infinite());
    }

    #[test]
    fn projection_errors() {
        let tol = DEFAULT_PROJECTION_TOL;
        assert!(matches!(solve_z_lambda(&[1.0], &[1.0], -0.1, tol), Err(Error::Domain(_))));
        assert!(matches!(solve_z_lambda(&[1.0], &[0.0], 0.1, tol), Err(Error::Domain(_))));
        assert!(matches!(solve_z_lambda(&[1.0], &[-1.0], 0.1, tol), Err(Error::Domain(_))));
        assert!(solve_z_lambda(&[1.0, 2.0], &[1.0], 0.1, tol).is_err());
        assert!(solve_z_lambda(&[1.0], &[1.0], 0.1, 0.0).is_err());
    }

    #[test]
    fn identity_classifier_examples() {
        let c = classifier_l2_identity(&[2.0, 0.0], 0.0, Probability::HALF).unwrap();
        assert_eq!(c.weight.as_slice(), &[2.0, 0.0]);
        assert_eq!(c.bias, 0.0);
        let c = classifier_l2_identity(&[2.0, 0.0], 1.0, Probability::HALF).unwrap();
        assert_eq!(c.weight.as_slice(), &[1.0, 0.0]);
        let c = classifier_l2_identity(&[2.0, 0.0], 0.0, p(0.75)).unwrap();
        // q = ln(1/3)
        assert!((c.bias - 0.549_306_144_334_054_8).abs() < 1e-15);
        assert!(matches!(
            classifier_l2_identity(&[2.0, 0.0], 2.0, Probability::HALF),
            Err(Error::DegenerateBudget(_))
        ));
    }

    #[test]
    fn identity_scaled_bound_reduces_to_simple_form() {
        let mu = [0.6, 0.8];
        let x = [1.3, -0.4];
        for eps in [0.0, 0.3, 0.9] {
            let c = classifier_l2_identity(&mu, eps, Probability::HALF).unwrap();
            let expected = (x[0] * mu[0] + x[1] * mu[1]).abs() / 1.0;
            assert!((c.scaled_bound(&x).unwrap() - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn general_classifier_symmetric_isotropic() {
        let fit = diag_fit(&[1.0, 0.0], &[1.0, 1.0]);
        let c = classifier_general(&fit, 0.0).unwrap();
        assert!(c.weight[0] > 0.0 && c.weight[1] == 0.0);
        assert_eq!(c.bias, 0.0);
        assert_eq!(c.space, Space::Representation);
    }

    #[test]
    fn isotropic_robust_classifiers_overlap() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let fit = diag_fit(&[h, h], &[1.0, 1.0]);
        let base = classifier_general(&fit, 0.0).unwrap();
        for eps in [0.1, 0.5, 0.99] {
            let c = classifier_general(&fit, eps).unwrap();
            let cos = c.weight.dot(&base.weight) / (c.weight.norm() * base.weight.norm());
            assert!((cos - 1.0).abs() < 1e-12);
            assert!(c.bias.abs() < 1e-15);
        }
        assert!(matches!(classifier_general(&fit, 1.0), Err(Error::DegenerateBudget(_))));
    }

    #[test]
    fn general_classifier_composes_projection() {
        // eigenvalues must be stored descending, so the coordinates are swapped
        let fit = diag_fit(&[1.0, 1.0], &[4.0, 1.0]);
        let c = classifier_general(&fit, 1.0).unwrap();
        let w = c.reduced_weight.as_ref().unwrap();
        assert!((w[1] - 0.167_515_726_384_021_84).abs() < 1e-11);
        assert!((w[0] - 0.111_487_831_269_668_49).abs() < 1e-11);
        assert!((c.weight - w).amax() < 1e-15);
    }

    #[test]
    fn margins_on_simple_geometry() {
        let fit = diag_fit(&[1.0, 0.0], &[1.0, 1.0]);
        let c = classifier_general(&fit, 0.0).unwrap();
        assert!((margin_unscaled(&fit, &c, &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((margin_unscaled(&fit, &c, &[-2.5, 7.0]).unwrap() - 2.5).abs() < 1e-15);
        assert_eq!(scaled_margin(&fit, &c, &[0.0, 3.0]).unwrap(), 0.0);
        // |xᵀμ| / ‖μ‖² for the symmetric isotropic case
        let fit = diag_fit(&[2.0, 0.0], &[1.0, 1.0]);
        let c = classifier_general(&fit, 0.5).unwrap();
        assert!((scaled_margin(&fit, &c, &[1.0, 5.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(scaled_margin(&fit, &c, &[1.0]).is_err());
    }

    #[test]
    fn analytic_accuracy_values() {
        let fit = diag_fit(&[0.6, 0.8], &[1.0, 1.0]);
        let phi1 = 0.841_344_746_068_542_9;
        for eps in [0.0, 0.5] {
            let a = analytic_accuracy(&fit, eps).unwrap();
            assert!((a.accuracy.value() - phi1).abs() < 1e-15);
            assert!(!a.degenerate);
        }
        let a = analytic_accuracy(&fit, 1.0).unwrap();
        assert!(a.degenerate && a.accuracy.value() == 0.5);

        // 40-digit values for μ̃ = (1, 1), Λ = (1, 4)
        let fit = diag_fit(&[1.0, 1.0], &[4.0, 1.0]);
        let a0 = analytic_accuracy(&fit, 0.0).unwrap().accuracy.value();
        let a1 = analytic_accuracy(&fit, 1.0).unwrap().accuracy.value();
        assert!((a0 - 0.868_223_761_358_513_6).abs() < 1e-13);
        assert!((a1 - 0.841_443_200_312_339_2).abs() < 1e-11);
        assert!(a1 < a0);
    }

    #[test]
    fn reference_bound_values() {
        // 50-digit evaluations of the closed form
        let cases = [
            (0.841_344_746_068_542_9, 1.287_599_970_939_178_4),
            (0.55, 6.726_862_329_780_849),
            (0.7, 1.947_183_922_468_956_5),
            (0.99, 1.011_572_368_888_367),
        ];
        for (a, want) in cases {
            let got = reference_expected_bound(p(a)).unwrap();
            assert!((got - want).abs() < 1e-12 * want, "g({a}) = {got}");
        }
        let near_one = reference_expected_bound(p(1.0 - 1e-6)).unwrap();
        assert!(near_one > 1.0 && near_one - 1.0 < 1e-4);
        for a in [0.5, 0.3, 1.0] {
            assert!(matches!(reference_expected_bound(p(a)), Err(Error::Domain(_))));
        }
        assert_eq!(reference_expected_bound_or_limit(Probability::ONE).unwrap(), 1.0);
    }

    #[test]
    fn reference_bound_decreasing() {
        let mut prev = f64::INFINITY;
        for i in 1..1000 {
            let a = 0.5 + 0.5 * i as f64 / 1000.0;
            let g = reference_expected_bound(p(a)).unwrap();
            assert!(g < prev, "not decreasing at {a}");
            prev = g;
        }
    }

    #[test]
    fn linf_classifier_examples() {
        let c = classifier_linf(&[2.0, 0.5], 1.0, Probability::HALF).unwrap();
        assert_eq!(c.weight.as_slice(), &[1.0, 0.0]);
        assert_eq!(c.bias, 0.0);
        let c0 = classifier_linf(&[2.0, 0.5], 0.0, Probability::HALF).unwrap();
        assert_eq!(c0.weight.as_slice(), &[2.0, 0.5]);
        let neg = classifier_linf(&[-2.0, 0.5], 1.0, Probability::HALF).unwrap();
        assert_eq!(neg.weight.as_slice(), &[-1.0, 0.0]);
        assert!(matches!(
            classifier_linf(&[0.5, 0.5], 1.0, Probability::HALF),
            Err(Error::DegenerateBudget(_))
        ));

        assert_eq!(margin_linf(&c, &[2.0, 7.0]).unwrap(), 2.0);
        assert_eq!(margin_linf(&c, &[0.0, 7.0]).unwrap(), 0.0);
        let l2 = classifier_l2_identity(&[2.0, 0.5], 0.0, Probability::HALF).unwrap();
        assert!(matches!(margin_linf(&l2, &[1.0, 1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn margin_stats_counts_correct_rows_only() {
        let fit = diag_fit(&[1.0, 0.0], &[1.0, 1.0]);
        let c = classifier_general(&fit, 0.0).unwrap();
        let data = LabeledMatrix::new(
            4,
            2,
            vec![2.0, 0.0, -1.0, 0.0, -3.0, 1.0, 0.5, 9.0],
            vec![1, 1, -1, -1],
            "t",
        )
        .unwrap();
        let stats = margin_stats(&fit, &c, &data).unwrap();
        assert_eq!(stats.n_correct, 2);
        assert_eq!(stats.n_total, 4);
        assert!((stats.mean_scaled_bound - 2.5).abs() < 1e-15);

        let all_wrong =
            LabeledMatrix::new(2, 2, vec![-1.0, 0.0, 1.0, 0.0], vec![1, -1], "t").unwrap();
        let stats = margin_stats(&fit, &c, &all_wrong).unwrap();
        assert_eq!((stats.n_correct, stats.mean_scaled_bound), (0, 0.0));
    }

    use proptest::prelude::*;

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
        (1usize..12).prop_flat_map(|d| {
            (
                proptest::collection::vec(-3.0f64..3.0, d),
                proptest::collection::vec(0.05f64..20.0, d),
                0.0f64..1.0,
            )
        })
        .prop_map(|(mu, lambda, frac)| {
            let eps = frac * norm(&mu);
            (mu, lambda, eps)
        })
    }

    proptest! {
        #[test]
        fn projection_satisfies_kkt((mu, lambda, eps) in instance()) {
            let r = solve_z_lambda(&mu, &lambda, eps, DEFAULT_PROJECTION_TOL).unwrap();
            let zn = norm(&r.z);
            prop_assert!(zn <= eps * (1.0 + 1e-9) + 1e-300);
            if r.active && eps > 0.0 {
                prop_assert!((zn - eps).abs() <= 1e-9 * eps);
                prop_assert!(r.multiplier_nu >= 0.0);
                // stationarity: z_i (1 + ν λ_i) = μ̃_i
                for ((m, l), z) in mu.iter().zip(&lambda).zip(&r.z) {
                    let resid = z * (1.0 + r.multiplier_nu * l) - m;
                    prop_assert!(resid.abs() <= 1e-12 * (1.0 + m.abs()));
                }
            }
        }

        #[test]
        fn projection_beats_feasible_points(
            (mu, lambda, eps) in instance(),
            dirs in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 12), 20),
        ) {
            let r = solve_z_lambda(&mu, &lambda, eps, DEFAULT_PROJECTION_TOL).unwrap();
            let best = projection_objective(&mu, &lambda, &r.z);
            for dir in &dirs {
                let v = &dir[..mu.len()];
                let vn = norm(v);
                if vn == 0.0 { continue; }
                let cand: Vec<f64> = v.iter().map(|x| x * eps / vn).collect();
                let obj = projection_objective(&mu, &lambda, &cand);
                prop_assert!(best <= obj * (1.0 + 1e-9) + 1e-12);
            }
        }

        #[test]
        fn robust_accuracy_never_exceeds_standard((mu, lambda, eps) in instance()) {
            let a0 = analytic_accuracy_reduced(&mu, &lambda, 0.0).unwrap();
            let ae = analytic_accuracy_reduced(&mu, &lambda, eps).unwrap();
            prop_assert!(ae.accuracy.value() <= a0.accuracy.value() + 1e-12);
        }
    }
}
