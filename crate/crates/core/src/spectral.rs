//! Class-conditional Gaussian fitting and the thin eigendecomposition `Σ = FΛFᵀ`.
//!
//! The eigensolver is a cyclic Jacobi method. Each sweep visits every
//! off-diagonal pair once using round-robin ordering, so each round applies
//! `n/2` disjoint rotations at once. A round then costs two
//! contiguous column passes and one row pass that stays inside a single column.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::LabeledMatrix;

pub const DEFAULT_RANK_RTOL: f64 = 1e-10;

const SYMMETRY_RTOL: f64 = 1e-9;
const OFF_DIAGONAL_RTOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 60;

/// Retained eigenpairs of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct ThinEigen {
    /// `D × r`, orthonormal columns.
    pub factor: DMatrix<f64>,
    pub eigvals: Vec<f64>,
}

impl ThinEigen {
    pub fn rank(&self) -> usize {
        self.eigvals.len()
    }
}

/// Full eigendecomposition by cyclic Jacobi. Returns unsorted eigenvalues and the
/// matrix whose columns are the matching eigenvectors.
pub fn jacobi_eigen(sym: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = sym.nrows();
    let mut a = sym.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    if n <= 1 {
        return Ok((a.diagonal().iter().copied().collect(), v));
    }

    // Round-robin schedule over an even number of slots; slot `n` is a bye when n is odd.
    let slots = n + n % 2;
    let mut order: Vec<usize> = (0..slots).collect();
    let mut rotations: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(slots / 2);

    for _sweep in 0..MAX_SWEEPS {
        let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
        let off = max_off_diagonal(&a);
        if off == 0.0 || off <= OFF_DIAGONAL_RTOL * scale {
            return Ok((a.diagonal().iter().copied().collect(), v));
        }
        let threshold = OFF_DIAGONAL_RTOL * scale;

        for _round in 0..slots - 1 {
            rotations.clear();
            for i in 0..slots / 2 {
                let (x, y) = (order[i], order[slots - 1 - i]);
                if x >= n || y >= n {
                    continue;
                }
                let (p, q) = (x.min(y), x.max(y));
                let apq = a[(p, q)];
                if apq.abs() <= threshold {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                rotations.push((p, q, c, t * c));
            }
            if !rotations.is_empty() {
                apply_round(&mut a, &mut v, &rotations);
            }
            order[1..].rotate_right(1);
        }
    }
    Err(Error::NoConvergence(format!(
        "Jacobi did not converge in {MAX_SWEEPS} sweeps (n = {n})"
    )))
}

fn max_off_diagonal(a: &DMatrix<f64>) -> f64 {
    let mut off = 0.0f64;
    for (j, col) in a.column_iter().enumerate() {
        for (i, x) in col.iter().enumerate() {
            if i != j {
                off = off.max(x.abs());
            }
        }
    }
    off
}

/// Two distinct columns of a column-major buffer.
fn column_pair(data: &mut [f64], n: usize, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let (head, tail) = data.split_at_mut(q * n);
    (&mut head[p * n..(p + 1) * n], &mut tail[..n])
}

fn rotate_columns(data: &mut [f64], n: usize, rotations: &[(usize, usize, f64, f64)]) {
    for &(p, q, c, s) in rotations {
        let (cp, cq) = column_pair(data, n, p, q);
        for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
            let (xp, yq) = (*x, *y);
            *x = c * xp - s * yq;
            *y = s * xp + c * yq;
        }
    }
}

/// `A ← JᵀAJ`, `V ← VJ` for a set of disjoint plane rotations.
fn apply_round(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>, rotations: &[(usize, usize, f64, f64)]) {
    let n = a.nrows();
    rotate_columns(a.as_mut_slice(), n, rotations);
    for col in a.as_mut_slice().chunks_exact_mut(n) {
        for &(p, q, c, s) in rotations {
            let (xp, yq) = (col[p], col[q]);
            col[p] = c * xp - s * yq;
            col[q] = s * xp + c * yq;
        }
    }
    for &(p, q, _, _) in rotations {
        a[(p, q)] = 0.0;
        a[(q, p)] = 0.0;
    }
    rotate_columns(v.as_mut_slice(), n, rotations);
}

fn check_symmetric(sym: &DMatrix<f64>) -> Result<()> {
    if sym.nrows() != sym.ncols() {
        return Err(Error::InvalidArgument(format!(
            "matrix is {}x{}, not square",
            sym.nrows(),
            sym.ncols()
        )));
    }
    if sym.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let scale = sym.amax();
    let n = sym.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            if (sym[(i, j)] - sym[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                return Err(Error::InvalidArgument(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Flips each column so its largest-magnitude component is positive.
fn normalize_signs(factor: &mut DMatrix<f64>) {
    for mut col in factor.column_iter_mut() {
        let mut best = 0.0f64;
        for &x in col.iter() {
            if x.abs() > best.abs() {
                best = x;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

/// Eigenpairs with `λ > rank_rtol · λ_max`, sorted descending. A matrix with no
/// positive eigenvalue yields rank 0.
pub fn thin_eigendecompose(sym: &DMatrix<f64>, rank_rtol: f64) -> Result<ThinEigen> {
    check_symmetric(sym)?;
    if !(rank_rtol >= 0.0) {
        return Err(Error::InvalidArgument(format!("rank_rtol {rank_rtol} must be >= 0")));
    }
    let n = sym.nrows();
    let symmetrized = (sym + sym.transpose()) * 0.5;
    let (values, vectors) = jacobi_eigen(&symmetrized)?;

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let lambda_max = idx.first().map_or(0.0, |&i| values[i]);
    let cutoff = rank_rtol * lambda_max;
    let kept: Vec<usize> = idx
        .into_iter()
        .take_while(|&i| lambda_max > 0.0 && values[i] > cutoff && values[i] > 0.0)
        .collect();

    let mut factor = DMatrix::zeros(n, kept.len());
    for (k, &i) in kept.iter().enumerate() {
        factor.set_column(k, &vectors.column(i));
    }
    normalize_signs(&mut factor);
    Ok(ThinEigen {
        factor,
        eigvals: kept.iter().map(|&i| values[i]).collect(),
    })
}

/// How the pooled covariance spectrum was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralRoute {
    /// Eigendecomposition of the `D × D` covariance.
    Covariance,
    /// Eigendecomposition of the `N × N` Gram matrix of centered samples (N < D).
    Gram,
    /// Supplied directly.
    Given,
}

/// Two Gaussians sharing one covariance, stored in thin form.
#[derive(Debug, Clone)]
pub struct FittedGaussian {
    pub mu1: DVector<f64>,
    pub mu2: DVector<f64>,
    /// `D × r`, orthonormal columns.
    pub factor: DMatrix<f64>,
    /// Descending, positive.
    pub eigvals: Vec<f64>,
    /// `Fᵀ(μ₁ − μ₂)/2`
    pub mu_tilde: DVector<f64>,
    /// `(μ₁ + μ₂)/2`
    pub midpoint: DVector<f64>,
    pub route: SpectralRoute,
}

impl FittedGaussian {
    pub fn rank(&self) -> usize {
        self.eigvals.len()
    }

    pub fn dim(&self) -> usize {
        self.mu1.len()
    }

    /// Builds the model from means and an already-thin factorization.
    pub fn from_parts(
        mu1: DVector<f64>,
        mu2: DVector<f64>,
        factor: DMatrix<f64>,
        eigvals: Vec<f64>,
    ) -> Result<Self> {
        let d = mu1.len();
        if mu2.len() != d || factor.nrows() != d || factor.ncols() != eigvals.len() {
            return Err(Error::InvalidArgument(format!(
                "inconsistent shapes: mu1 {d}, mu2 {}, factor {}x{}, {} eigenvalues",
                mu2.len(),
                factor.nrows(),
                factor.ncols(),
                eigvals.len()
            )));
        }
        if eigvals.is_empty() {
            return Err(Error::DegenerateData("covariance has rank 0".into()));
        }
        if eigvals.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument("eigenvalues must be positive".into()));
        }
        if eigvals.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidArgument("eigenvalues must be descending".into()));
        }
        let gram = factor.tr_mul(&factor);
        let r = eigvals.len();
        if (gram - DMatrix::<f64>::identity(r, r)).amax() > 1e-8 {
            return Err(Error::InvalidArgument("factor columns are not orthonormal".into()));
        }
        let mu_tilde = factor.tr_mul(&((&mu1 - &mu2) * 0.5));
        let midpoint = (&mu1 + &mu2) * 0.5;
        Ok(FittedGaussian {
            mu1,
            mu2,
            factor,
            eigvals,
            mu_tilde,
            midpoint,
            route: SpectralRoute::Given,
        })
    }

    /// Builds the model from means and a full covariance matrix.
    pub fn from_moments(
        mu1: DVector<f64>,
        mu2: DVector<f64>,
        covariance: &DMatrix<f64>,
        rank_rtol: f64,
    ) -> Result<Self> {
        let thin = thin_eigendecompose(covariance, rank_rtol)?;
        Self::from_parts(mu1, mu2, thin.factor, thin.eigvals)
    }

    /// `FΛFᵀ`
    pub fn covariance(&self) -> DMatrix<f64> {
        let lam = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigvals));
        &self.factor * lam * self.factor.transpose()
    }
}

/// Per-class sample means, pooled within-class covariance (divisor N − 2), and its
/// thin factorization. Uses the Gram matrix when there are fewer samples than
/// dimensions.
pub fn fit_class_gaussian(data: &LabeledMatrix, rank_rtol: f64) -> Result<FittedGaussian> {
    let (n_pos, n_neg) = data.class_counts();
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data(format!(
            "both classes required, found {n_pos} positive and {n_neg} negative"
        )));
    }
    if n_pos < 2 || n_neg < 2 {
        return Err(Error::Data("need at least 2 samples per class".into()));
    }
    let (n, d) = (data.rows(), data.cols());

    let mut mu1 = DVector::<f64>::zeros(d);
    let mut mu2 = DVector::<f64>::zeros(d);
    for (row, label) in data.iter_rows() {
        let target = if label == 1 { &mut mu1 } else { &mut mu2 };
        for (m, x) in target.iter_mut().zip(row) {
            *m += x;
        }
    }
    mu1 /= n_pos as f64;
    mu2 /= n_neg as f64;

    let mut centered = DMatrix::<f64>::from_row_slice(n, d, data.data());
    for (i, label) in data.labels().iter().enumerate() {
        let mean = if *label == 1 { &mu1 } else { &mu2 };
        for j in 0..d {
            centered[(i, j)] -= mean[j];
        }
    }
    let dof = (n - 2) as f64;

    let (thin, route) = if n < d {
        let gram = (&centered * centered.transpose()) / dof;
        let eig = thin_eigendecompose(&gram, rank_rtol)?;
        // f_i = X_cᵀ u_i / sqrt(dof · λ_i)
        let mut factor = centered.tr_mul(&eig.factor);
        for (mut col, &l) in factor.column_iter_mut().zip(&eig.eigvals) {
            col /= (dof * l).sqrt();
        }
        normalize_signs(&mut factor);
        (
            ThinEigen {
                factor,
                eigvals: eig.eigvals,
            },
            SpectralRoute::Gram,
        )
    } else {
        let cov = centered.tr_mul(&centered) / dof;
        (thin_eigendecompose(&cov, rank_rtol)?, SpectralRoute::Covariance)
    };

    if thin.rank() == 0 {
        return Err(Error::DegenerateData(
            "pooled covariance has no eigenvalue above the rank threshold".into(),
        ));
    }
    let mut fit = FittedGaussian::from_parts(mu1, mu2, thin.factor, thin.eigvals)?;
    fit.route = route;
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{sample_dataset, GaussianSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        (&m + m.transpose()) * 0.5
    }

    fn max_residual(a: &DMatrix<f64>, eig: &ThinEigen) -> f64 {
        (0..eig.rank())
            .map(|i| {
                let f = eig.factor.column(i);
                (a * f - f * eig.eigvals[i]).norm()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn two_by_two() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let eig = thin_eigendecompose(&a, DEFAULT_RANK_RTOL).unwrap();
        assert!((eig.eigvals[0] - 3.0).abs() < 1e-14);
        assert!((eig.eigvals[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let f0 = eig.factor.column(0);
        let f1 = eig.factor.column(1);
        assert!((f0[0] - h).abs() < 1e-14 && (f0[1] - h).abs() < 1e-14);
        assert!((f1[0].abs() - h).abs() < 1e-14 && (f1[0] + f1[1]).abs() < 1e-14);
    }

    #[test]
    fn identity_and_rank_one() {
        let eig = thin_eigendecompose(&DMatrix::identity(3, 3), DEFAULT_RANK_RTOL).unwrap();
        assert_eq!(eig.eigvals, vec![1.0, 1.0, 1.0]);
        assert!(max_residual(&DMatrix::identity(3, 3), &eig) < 1e-15);

        let v = DVector::from_vec(vec![1.2, -1.6, 0.0]);
        let a = &v * v.transpose();
        let eig = thin_eigendecompose(&a, DEFAULT_RANK_RTOL).unwrap();
        assert_eq!(eig.rank(), 1);
        assert!((eig.eigvals[0] - 4.0).abs() < 1e-14);
        // sign convention: largest |component| positive
        let f = eig.factor.column(0);
        assert!((f[1] - 0.8).abs() < 1e-14 && (f[0] + 0.6).abs() < 1e-14);
    }

    #[test]
    fn rejects_asymmetric_and_non_square() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            thin_eigendecompose(&a, DEFAULT_RANK_RTOL),
            Err(Error::InvalidArgument(_))
        ));
        let b = DMatrix::<f64>::zeros(2, 3);
        assert!(thin_eigendecompose(&b, DEFAULT_RANK_RTOL).is_err());
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let eig = thin_eigendecompose(&DMatrix::zeros(4, 4), DEFAULT_RANK_RTOL).unwrap();
        assert_eq!(eig.rank(), 0);
    }

    #[test]
    fn odd_sizes_and_residuals() {
        for (n, seed) in [(1, 1), (3, 2), (7, 3), (33, 4), (64, 5)] {
            let m = random_symmetric(n, seed);
            let a = &m * &m + DMatrix::identity(n, n) * 0.1;
            let eig = thin_eigendecompose(&a, 0.0).unwrap();
            assert_eq!(eig.rank(), n);
            let lmax = eig.eigvals[0];
            assert!(max_residual(&a, &eig) <= 1e-7 * lmax, "n={n}");
            let gram = eig.factor.tr_mul(&eig.factor);
            assert!((gram - DMatrix::identity(eig.rank(), eig.rank())).amax() < 1e-12);
        }
    }

    #[test]
    fn indefinite_full_decomposition() {
        let a = random_symmetric(17, 12);
        let (values, vectors) = jacobi_eigen(&a).unwrap();
        let lmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (i, l) in values.iter().enumerate() {
            let f = vectors.column(i);
            assert!((&a * f - f * *l).norm() <= 1e-10 * lmax);
        }
        assert!(values.iter().any(|&l| l < 0.0));
        let thin = thin_eigendecompose(&a, 0.0).unwrap();
        assert_eq!(thin.rank(), values.iter().filter(|&&l| l > 0.0).count());
    }

    #[test]
    fn matches_nalgebra_spectrum() {
        let a = random_symmetric(40, 9);
        let a_pd = &a * a.transpose();
        let ours = thin_eigendecompose(&a_pd, 0.0).unwrap();
        let mut theirs: Vec<f64> = a_pd.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(|x, y| y.total_cmp(x));
        for (x, y) in ours.eigvals.iter().zip(&theirs) {
            assert!((x - y).abs() < 1e-10 * theirs[0]);
        }
    }

    /// Two classes, each mean ± (√6, 0) and ± (0, √1.5): pooled covariance diag(4, 1).
    #[test]
    fn hand_built_diagonal_covariance() {
        let (x, y) = (6f64.sqrt(), 1.5f64.sqrt());
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (label, m) in [(1i8, [1.0, 2.0]), (-1, [-3.0, 0.5])] {
            for off in [[x, 0.0], [-x, 0.0], [0.0, y], [0.0, -y]] {
                data.extend([m[0] + off[0], m[1] + off[1]]);
                labels.push(label);
            }
        }
        let lm = LabeledMatrix::new(8, 2, data, labels, "hand").unwrap();
        let fit = fit_class_gaussian(&lm, DEFAULT_RANK_RTOL).unwrap();
        assert!((fit.eigvals[0] - 4.0).abs() < 1e-12);
        assert!((fit.eigvals[1] - 1.0).abs() < 1e-12);
        assert!((fit.factor[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((fit.factor[(1, 1)] - 1.0).abs() < 1e-12);
        assert!((fit.mu1[0] - 1.0).abs() < 1e-12 && (fit.mu2[1] - 0.5).abs() < 1e-12);
        assert!((fit.mu_tilde[0] - 2.0).abs() < 1e-12);
        assert!((fit.mu_tilde[1] - 0.75).abs() < 1e-12);
        assert!((fit.midpoint[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_missing_class() {
        let mut data = Vec::new();
        for _ in 0..3 {
            data.extend([1.0, 1.0]);
        }
        for _ in 0..3 {
            data.extend([-1.0, 2.0]);
        }
        let labels = vec![1, 1, 1, -1, -1, -1];
        let lm = LabeledMatrix::new(6, 2, data.clone(), labels, "copies").unwrap();
        assert!(matches!(
            fit_class_gaussian(&lm, DEFAULT_RANK_RTOL),
            Err(Error::DegenerateData(_))
        ));
        let lm = LabeledMatrix::new(6, 2, data, vec![1; 6], "one class").unwrap();
        assert!(matches!(fit_class_gaussian(&lm, DEFAULT_RANK_RTOL), Err(Error::Data(_))));
    }

    #[test]
    fn statistical_fit_of_known_generator() {
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut data = Vec::with_capacity(4 * n);
        let mut labels = Vec::with_capacity(2 * n);
        for label in [1i8, -1] {
            for _ in 0..n {
                let g0: f64 = rng.sample(rand_distr::StandardNormal);
                let g1: f64 = rng.sample(rand_distr::StandardNormal);
                data.extend([f64::from(label) + g0, g1]);
                labels.push(label);
            }
        }
        let lm = LabeledMatrix::new(2 * n, 2, data, labels, "e1").unwrap();
        let fit = fit_class_gaussian(&lm, DEFAULT_RANK_RTOL).unwrap();
        assert_eq!(fit.route, SpectralRoute::Covariance);
        for l in &fit.eigvals {
            assert!((l - 1.0).abs() < 0.05);
        }
        let diff = &fit.factor * &fit.mu_tilde;
        assert!((diff[0] - 1.0).abs() < 0.02 && diff[1].abs() < 0.02, "{diff}");
    }

    #[test]
    fn gram_route_matches_covariance_route() {
        // 12 samples in 30 dimensions
        let m = sample_dataset(&GaussianSpec::new(1.5, 30, 6, 4)).unwrap();
        let fit = fit_class_gaussian(&m, DEFAULT_RANK_RTOL).unwrap();
        assert_eq!(fit.route, SpectralRoute::Gram);
        assert_eq!(fit.rank(), 10);

        let mut centered = DMatrix::from_row_slice(m.rows(), m.cols(), m.data());
        for (i, &label) in m.labels().iter().enumerate() {
            let mean = if label == 1 { &fit.mu1 } else { &fit.mu2 };
            for j in 0..m.cols() {
                centered[(i, j)] -= mean[j];
            }
        }
        let cov = centered.tr_mul(&centered) / (m.rows() - 2) as f64;
        let direct = thin_eigendecompose(&cov, DEFAULT_RANK_RTOL).unwrap();
        assert_eq!(direct.rank(), fit.rank());
        for (a, b) in direct.eigvals.iter().zip(&fit.eigvals) {
            assert!((a - b).abs() <= 1e-6 * a);
        }
        let gram = fit.factor.tr_mul(&fit.factor);
        assert!((gram - DMatrix::identity(10, 10)).amax() < 1e-8);
        assert!((fit.covariance() - cov).norm() <= 1e-6 * direct.eigvals[0]);
    }

    #[test]
    fn from_parts_validation() {
        let mu = DVector::from_vec(vec![1.0, 0.0]);
        let f = DMatrix::identity(2, 2);
        assert!(FittedGaussian::from_parts(mu.clone(), -&mu, f.clone(), vec![1.0, 2.0]).is_err());
        assert!(FittedGaussian::from_parts(mu.clone(), -&mu, f.clone(), vec![1.0, 0.0]).is_err());
        assert!(FittedGaussian::from_parts(mu.clone(), -&mu, f * 2.0, vec![1.0, 1.0]).is_err());
        let fit =
            FittedGaussian::from_parts(mu.clone(), -&mu, DMatrix::identity(2, 2), vec![1.0, 1.0])
                .unwrap();
        assert_eq!(fit.mu_tilde, mu);
        assert_eq!(fit.midpoint, DVector::zeros(2));
    }
}
