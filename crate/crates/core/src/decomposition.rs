//! Portfolio quantities decomposed by security: the return covariance
//! quadratic form, the volume-CV matrix and its exact reconstruction of the
//! portfolio χ², and the per-security form of the Taylor expansion.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::moments::{coefficient_of_variation, ReturnSeries, CV_PRODUCT_FLOOR};
use crate::sum::{covariance, mean, sum};
use crate::trade_model::TradeSeries;
use crate::variance::{mu_expansion, TaylorMu};

/// Allowed deviation of Σ X_j from one.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// Symmetric J×J matrix of return covariances θ_jk.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix(DMatrix<f64>);

impl CovarianceMatrix {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.0[(j, k)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|j| (0..self.dim()).map(|k| self.0[(j, k)]).collect())
            .collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// χ_j of a volume series.
pub fn security_volume_cv<S: TradeSeries + ?Sized>(series: &S) -> Result<f64> {
    coefficient_of_variation(series.volumes())
}

/// Per-security volume CVs and their correlation structure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeCvDecomposition {
    pub chi: Vec<f64>,
    /// χ_jk = cov(U_j, U_k) / (Ū_j Ū_k)
    pub chi_matrix: Vec<Vec<f64>>,
    /// β_jk = χ_jk / (χ_j χ_k)
    pub beta: Vec<Vec<f64>>,
    /// β_j = Σ_k β_jk
    pub beta_row_sums: Vec<f64>,
    pub weights: Vec<f64>,
    /// Σ β_jk χ_j χ_k x_j x_k
    pub chi_sq: f64,
}

pub fn volume_cv_matrix<S: TradeSeries>(
    series: &[S],
    weights: &[f64],
) -> Result<VolumeCvDecomposition> {
    let j = series.len();
    if j == 0 {
        return Err(Error::EmptyList);
    }
    if weights.len() != j {
        return Err(Error::MismatchedLength {
            expected: j,
            found: weights.len(),
        });
    }
    let n = series[0].bucket_count();
    for s in series {
        if s.bucket_count() != n {
            return Err(Error::MismatchedLength {
                expected: n,
                found: s.bucket_count(),
            });
        }
    }
    let chi = series
        .iter()
        .map(security_volume_cv)
        .collect::<Result<Vec<_>>>()?;
    let means: Vec<f64> = series.iter().map(|s| mean(s.volumes())).collect();

    let mut chi_matrix = vec![vec![0.0; j]; j];
    let mut beta = vec![vec![0.0; j]; j];
    for a in 0..j {
        for b in a..j {
            let c = covariance(series[a].volumes(), series[b].volumes()) / (means[a] * means[b]);
            chi_matrix[a][b] = c;
            chi_matrix[b][a] = c;
            let denom = chi[a] * chi[b];
            let bjk = if a == b {
                1.0
            } else if denom < CV_PRODUCT_FLOOR {
                0.0
            } else {
                c / denom
            };
            beta[a][b] = bjk;
            beta[b][a] = bjk;
        }
    }
    let beta_row_sums = beta.iter().map(|row| sum(row.iter().copied())).collect();
    let chi_sq = sum((0..j).flat_map(|a| {
        let (beta, chi) = (&beta, &chi);
        (0..j).map(move |b| beta[a][b] * chi[a] * chi[b] * weights[a] * weights[b])
    }));
    Ok(VolumeCvDecomposition {
        chi,
        chi_matrix,
        beta,
        beta_row_sums,
        weights: weights.to_vec(),
        chi_sq,
    })
}

/// First-order reconstruction of χ next to the exact value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiLinear {
    /// Σ β_j χ_j x_j
    pub approx: f64,
    /// √(reconstructed χ²)
    pub exact: f64,
    pub difference: f64,
}

pub fn chi_linear_decomposition(d: &VolumeCvDecomposition) -> ChiLinear {
    let approx = sum(d
        .beta_row_sums
        .iter()
        .zip(&d.chi)
        .zip(&d.weights)
        .map(|((b, c), x)| b * c * x));
    let exact = d.chi_sq.max(0.0).sqrt();
    ChiLinear {
        approx,
        exact,
        difference: approx - exact,
    }
}

/// θ_jk: biased covariances of instant returns about their unweighted means.
pub fn return_covariance_matrix(returns: &[ReturnSeries]) -> Result<CovarianceMatrix> {
    let j = returns.len();
    if j == 0 {
        return Err(Error::EmptyList);
    }
    let n = returns[0].len();
    for r in returns {
        if r.len() != n {
            return Err(Error::MismatchedLength {
                expected: n,
                found: r.len(),
            });
        }
    }
    if n < 2 {
        return Err(Error::DegenerateSeries(format!("{n} return(s)")));
    }
    let mut m = DMatrix::zeros(j, j);
    for a in 0..j {
        for b in a..j {
            let c = covariance(&returns[a].instant, &returns[b].instant);
            m[(a, b)] = c;
            m[(b, a)] = c;
        }
    }
    Ok(CovarianceMatrix(m))
}

/// Θ_M = Σ θ_jk X_j X_k.
pub fn markowitz_quadratic_form(cov: &CovarianceMatrix, weights: &[f64]) -> Result<f64> {
    if weights.len() != cov.dim() {
        return Err(Error::MismatchedLength {
            expected: cov.dim(),
            found: weights.len(),
        });
    }
    let total = sum(weights.iter().copied());
    if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::WeightSumError(total));
    }
    let j = cov.dim();
    Ok(sum((0..j).flat_map(|a| {
        (0..j).map(move |b| cov.get(a, b) * weights[a] * weights[b])
    })))
}

/// Inputs of [`taylor_decomposition`], all indexed by security.
#[derive(Debug, Clone, Copy)]
pub struct TaylorDecompositionInput<'a> {
    pub psi0: f64,
    pub a: f64,
    pub volumes: &'a VolumeCvDecomposition,
    /// Average returns R_j(t, t₀).
    pub returns: &'a [f64],
    /// Investment weights X_j(t₀).
    pub investment_weights: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaylorDecomposition {
    pub mu: TaylorMu,
    /// Σ β_j χ_j x_j
    pub chi_linear: f64,
    /// Σ β_jk χ_j χ_k x_j x_k
    pub chi_sq: f64,
    /// Σ R_j R_k X_j X_k
    pub return_factor: f64,
    /// (Σ R_j X_j)²
    pub return_squared: f64,
    pub return_variance: f64,
}

pub fn taylor_decomposition(input: TaylorDecompositionInput<'_>) -> Result<TaylorDecomposition> {
    let j = input.volumes.chi.len();
    for len in [input.returns.len(), input.investment_weights.len()] {
        if len != j {
            return Err(Error::MismatchedLength {
                expected: j,
                found: len,
            });
        }
    }
    if !(input.a.abs() <= 1.0 + crate::variance::CORRELATION_SLACK) || !(input.psi0 >= 0.0) {
        return Err(Error::DomainError(format!(
            "need ψ₀ >= 0 and |a| <= 1, got ψ₀ = {}, a = {}",
            input.psi0, input.a
        )));
    }
    let chi_linear = chi_linear_decomposition(input.volumes).approx;
    let chi_sq = input.volumes.chi_sq;
    let (r, x) = (input.returns, input.investment_weights);
    let return_factor = sum((0..j).flat_map(|a| (0..j).map(move |b| r[a] * r[b] * x[a] * x[b])));
    let r_avg = sum(r.iter().zip(x).map(|(r, x)| r * x));
    let mu = mu_expansion(input.psi0, input.a, chi_linear, chi_sq);
    Ok(TaylorDecomposition {
        mu,
        chi_linear,
        chi_sq,
        return_factor,
        return_squared: r_avg * r_avg,
        return_variance: mu.value * return_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::returns;
    use crate::trade_model::AlignedSeries;
    use crate::variance::taylor_variances;

    fn vols(u: &[f64]) -> AlignedSeries {
        AlignedSeries::new("S", u.to_vec(), u.to_vec()).unwrap()
    }

    fn rs(r: &[f64]) -> ReturnSeries {
        returns(r, &vec![1.0; r.len()], 1.0).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn volume_cv_examples() {
        assert_eq!(security_volume_cv(&vols(&[1.0, 3.0])).unwrap(), 0.5);
        assert_eq!(security_volume_cv(&vols(&[2.5; 4])).unwrap(), 0.0);
        for k in [1e-6, 0.3, 17.0, 4e5] {
            assert!(close(
                security_volume_cv(&vols(&[k, 3.0 * k])).unwrap(),
                0.5
            ));
        }
        assert!(security_volume_cv(&vols(&[1.0])).is_err());
    }

    #[test]
    fn anti_correlated_pair() {
        let d = volume_cv_matrix(&[vols(&[1.0, 3.0]), vols(&[3.0, 1.0])], &[0.5, 0.5]).unwrap();
        assert_eq!(d.beta[0][1], -1.0);
        assert_eq!(d.beta[0][0], 1.0);
        assert_eq!(d.chi_sq, 0.0);
        assert_eq!(d.beta_row_sums, vec![0.0, 0.0]);
        let lin = chi_linear_decomposition(&d);
        assert_eq!(lin.approx, 0.0);
        assert_eq!(lin.exact, 0.0);
    }

    #[test]
    fn identical_pair() {
        let d = volume_cv_matrix(&[vols(&[1.0, 3.0]), vols(&[1.0, 3.0])], &[0.5, 0.5]).unwrap();
        assert!(close(d.beta[0][1], 1.0));
        assert!(close(d.chi_sq, 0.25));
        // β_j = 2 doubles the first-order sum while the exact χ stays 0.5
        let lin = chi_linear_decomposition(&d);
        assert!(close(lin.approx, 1.0));
        assert!(close(lin.exact, 0.5));
    }

    #[test]
    fn single_security() {
        let d = volume_cv_matrix(&[vols(&[1.0, 2.0, 6.0])], &[1.0]).unwrap();
        assert_eq!(d.chi_sq, d.chi[0] * d.chi[0]);
        let lin = chi_linear_decomposition(&d);
        assert_eq!(lin.approx, d.chi[0]);
    }

    #[test]
    fn constant_volume_security_has_zero_beta() {
        let d = volume_cv_matrix(
            &[vols(&[2.0, 2.0, 2.0]), vols(&[1.0, 4.0, 2.0])],
            &[0.4, 0.6],
        )
        .unwrap();
        assert_eq!(d.chi[0], 0.0);
        assert_eq!(d.beta[0][1], 0.0);
        assert_eq!(d.beta[0][0], 1.0);
        assert_eq!(d.chi_matrix[0][1], 0.0);
    }

    #[test]
    fn mismatched_lengths() {
        assert!(matches!(
            volume_cv_matrix(&[vols(&[1.0, 2.0]), vols(&[1.0, 2.0, 3.0])], &[0.5, 0.5]),
            Err(Error::MismatchedLength { .. })
        ));
        assert!(matches!(
            return_covariance_matrix(&[rs(&[1.0, 2.0]), rs(&[1.0, 2.0, 3.0])]),
            Err(Error::MismatchedLength { .. })
        ));
    }

    #[test]
    fn covariance_examples() {
        let c = return_covariance_matrix(&[rs(&[1.0, 3.0]), rs(&[3.0, 1.0])]).unwrap();
        assert_eq!(c.rows(), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let c = return_covariance_matrix(&[rs(&[1.2, 1.2, 1.2]), rs(&[1.0, 0.5, 2.0])]).unwrap();
        assert_eq!(c.get(0, 0), 0.0);
        assert_eq!(c.get(0, 1), 0.0);
        let c = return_covariance_matrix(&[rs(&[1.0, 2.0, 4.0]), rs(&[1.0, 2.0, 4.0])]).unwrap();
        assert_eq!(c.get(0, 1), c.get(0, 0));
        assert_eq!(c.get(1, 1), c.get(0, 0));
        assert!(c.min_eigenvalue() > -1e-12);
    }

    #[test]
    fn quadratic_form_examples() {
        let c = return_covariance_matrix(&[rs(&[1.0, 3.0]), rs(&[3.0, 1.0])]).unwrap();
        assert_eq!(markowitz_quadratic_form(&c, &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(markowitz_quadratic_form(&c, &[1.0, 0.0]).unwrap(), 1.0);
        assert!(matches!(
            markowitz_quadratic_form(&c, &[0.5, 0.6]),
            Err(Error::WeightSumError(_))
        ));
        let single = return_covariance_matrix(&[rs(&[1.0, 1.5, 0.5])]).unwrap();
        assert_eq!(
            markowitz_quadratic_form(&single, &[1.0]).unwrap(),
            single.get(0, 0)
        );
    }

    #[test]
    fn single_security_matches_scalar_expansion_bitwise() {
        let series = vols(&[1.0, 2.5, 0.7, 3.1]);
        let d = volume_cv_matrix(&[series], &[1.0]).unwrap();
        let (psi0, a, r) = (0.37, -0.42, 1.13);
        let dec = taylor_decomposition(TaylorDecompositionInput {
            psi0,
            a,
            volumes: &d,
            returns: &[r],
            investment_weights: &[1.0],
        })
        .unwrap();
        let scalar = taylor_variances(psi0, a, d.chi[0], 1.0, r).unwrap();
        assert_eq!(
            dec.return_variance.to_bits(),
            scalar.return_variance.to_bits()
        );
    }

    #[test]
    fn zero_volume_cv_collapses_to_markowitz_term() {
        let d = volume_cv_matrix(&[vols(&[2.0, 2.0]), vols(&[5.0, 5.0])], &[0.3, 0.7]).unwrap();
        let dec = taylor_decomposition(TaylorDecompositionInput {
            psi0: 0.2,
            a: 0.5,
            volumes: &d,
            returns: &[1.1, 0.95],
            investment_weights: &[0.4, 0.6],
        })
        .unwrap();
        let r = 1.1 * 0.4 + 0.95 * 0.6;
        assert!(close(dec.return_variance, 0.04 * r * r));
        assert!(close(dec.return_factor, dec.return_squared));
    }

    #[test]
    fn anti_correlated_volumes_vanish_from_expansion() {
        let d = volume_cv_matrix(&[vols(&[1.0, 3.0]), vols(&[3.0, 1.0])], &[0.5, 0.5]).unwrap();
        assert_eq!(d.chi, vec![0.5, 0.5]);
        let dec = taylor_decomposition(TaylorDecompositionInput {
            psi0: 0.3,
            a: 0.8,
            volumes: &d,
            returns: &[1.0, 1.2],
            investment_weights: &[0.5, 0.5],
        })
        .unwrap();
        assert!(close(dec.return_variance, 0.09 * 1.1 * 1.1));
    }
}
