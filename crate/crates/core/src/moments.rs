//! Means, coefficients of variation, covariances, VWAP prices and gross
//! returns. Every variance here uses the biased 1/N estimator.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sum::{covariance, mean, sum};
use crate::trade_model::{PortfolioSpec, SecurityId, TradeSeries};

/// Below this product of CVs the covariance coefficient `a` is set to zero.
pub const CV_PRODUCT_FLOOR: f64 = 1e-14;

/// First and second moments of a value/volume series and the coefficients
/// of variation derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentSet {
    pub buckets: usize,
    pub mean_value: f64,
    pub mean_volume: f64,
    pub mean_sq_value: f64,
    pub mean_sq_volume: f64,
    pub sigma_value: f64,
    pub sigma_volume: f64,
    /// CV of values ψ.
    pub value_cv: f64,
    /// CV of volumes χ.
    pub volume_cv: f64,
    pub cov_value_volume: f64,
    /// Normalized value/volume covariance φ.
    pub phi: f64,
    /// Unweighted CV of bucket prices ψ₀.
    pub price_cv: f64,
}

impl MomentSet {
    /// Covariance coefficient `a` with φ = aψχ.
    pub fn covariance_coefficient(&self) -> f64 {
        let denom = self.value_cv * self.volume_cv;
        if denom > CV_PRODUCT_FLOOR {
            self.phi / denom
        } else {
            0.0
        }
    }
}

/// Q(t;n) = (1/N) Σ Qⁿ(tᵢ) for n = 1 or 2.
pub fn raw_moment(values: &[f64], order: u32) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyList);
    }
    match order {
        1 => Ok(mean(values)),
        2 => Ok(sum(values.iter().map(|x| x * x)) / values.len() as f64),
        n => Err(Error::DomainError(format!(
            "moment order {n} not supported"
        ))),
    }
}

/// Coefficient of variation σ/mean with the 1/N variance.
pub fn coefficient_of_variation(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::DegenerateSeries(format!("{} bucket(s)", xs.len())));
    }
    Ok(covariance(xs, xs).sqrt() / mean(xs))
}

pub fn moment_set<S: TradeSeries + ?Sized>(series: &S) -> Result<MomentSet> {
    let q = series.values();
    let w = series.volumes();
    if q.len() != w.len() {
        return Err(Error::MismatchedLength {
            expected: q.len(),
            found: w.len(),
        });
    }
    if q.len() < 2 {
        return Err(Error::DegenerateSeries(format!("{} bucket(s)", q.len())));
    }
    let mean_value = mean(q);
    let mean_volume = mean(w);
    let sigma_value = covariance(q, q).sqrt();
    let sigma_volume = covariance(w, w).sqrt();
    let cov_value_volume = covariance(q, w);
    let prices = series.prices();
    Ok(MomentSet {
        buckets: q.len(),
        mean_value,
        mean_volume,
        mean_sq_value: raw_moment(q, 2)?,
        mean_sq_volume: raw_moment(w, 2)?,
        sigma_value,
        sigma_volume,
        value_cv: sigma_value / mean_value,
        volume_cv: sigma_volume / mean_volume,
        cov_value_volume,
        phi: cov_value_volume / (mean_value * mean_volume),
        price_cv: coefficient_of_variation(&prices)?,
    })
}

/// Σ pᵢwᵢ / Σ wᵢ.
pub fn vwap(prices: &[f64], weights: &[f64]) -> Result<f64> {
    if prices.len() != weights.len() {
        return Err(Error::MismatchedLength {
            expected: prices.len(),
            found: weights.len(),
        });
    }
    let total = sum(weights.iter().copied());
    if !(total > 0.0) {
        return Err(Error::ZeroWeightSum);
    }
    Ok(sum(prices.iter().zip(weights).map(|(p, w)| p * w)) / total)
}

/// VWAP of a value/volume series, Σ values / Σ volumes.
pub fn series_vwap<S: TradeSeries + ?Sized>(series: &S) -> Result<f64> {
    let total = sum(series.volumes().iter().copied());
    if !(total > 0.0) {
        return Err(Error::ZeroWeightSum);
    }
    Ok(sum(series.values().iter().copied()) / total)
}

/// Portfolio VWAP rebuilt from security VWAPs: Σ p_j(t) x_j(t₀).
pub fn vwap_decomposition_check(
    spec: &PortfolioSpec,
    security_vwaps: &[(SecurityId, f64)],
) -> Result<f64> {
    for (id, _) in security_vwaps {
        spec.holding(id)?;
    }
    let x = spec.share_weights();
    let mut terms = Vec::with_capacity(spec.len());
    for (h, xj) in spec.holdings().iter().zip(&x) {
        let p = security_vwaps
            .iter()
            .find(|(id, _)| id == &h.security)
            .map(|(_, p)| *p)
            .ok_or_else(|| Error::MissingSecurity(h.security.to_string()))?;
        terms.push(p * xj);
    }
    Ok(sum(terms))
}

/// Instant gross returns against a reference price, with their
/// volume-weighted average.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnSeries {
    pub instant: Vec<f64>,
    pub reference_price: f64,
    /// VWAP-weighted average return, equal to VWAP / reference price.
    pub average: f64,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.instant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instant.is_empty()
    }

    pub fn unweighted_mean(&self) -> f64 {
        mean(&self.instant)
    }
}

/// Rᵢ = pᵢ / p(t₀); the average is weighted by `volumes`.
pub fn returns(prices: &[f64], volumes: &[f64], reference_price: f64) -> Result<ReturnSeries> {
    if !(reference_price > 0.0 && reference_price.is_finite()) {
        return Err(Error::DomainError(format!(
            "reference price must be positive, got {reference_price}"
        )));
    }
    let instant: Vec<f64> = prices.iter().map(|p| p / reference_price).collect();
    let average = vwap(&instant, volumes)?;
    Ok(ReturnSeries {
        instant,
        reference_price,
        average,
    })
}

pub fn series_returns<S: TradeSeries + ?Sized>(
    series: &S,
    reference_price: f64,
) -> Result<ReturnSeries> {
    returns(&series.prices(), series.volumes(), reference_price)
}

/// Σ_j R_j X_j.
pub fn portfolio_return(security_returns: &[f64], weights: &[f64]) -> Result<f64> {
    if security_returns.len() != weights.len() {
        return Err(Error::MismatchedLength {
            expected: security_returns.len(),
            found: weights.len(),
        });
    }
    Ok(sum(security_returns
        .iter()
        .zip(weights)
        .map(|(r, x)| r * x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trade_model::{AlignedSeries, Holding};

    fn series(q: &[f64], w: &[f64]) -> AlignedSeries {
        AlignedSeries::new("S", q.to_vec(), w.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn raw_moment_examples() {
        assert_eq!(raw_moment(&[2.0, 6.0], 1).unwrap(), 4.0);
        assert_eq!(raw_moment(&[2.0, 6.0], 2).unwrap(), 20.0);
        assert_eq!(raw_moment(&[1.5; 7], 1).unwrap(), 1.5);
        assert_eq!(raw_moment(&[1.5; 7], 2).unwrap(), 2.25);
        assert!(matches!(raw_moment(&[], 1), Err(Error::EmptyList)));
    }

    #[test]
    fn worked_example() {
        let m = moment_set(&series(&[2.0, 6.0], &[1.0, 3.0])).unwrap();
        assert!(close(m.value_cv.powi(2), 0.25));
        assert!(close(m.volume_cv.powi(2), 0.25));
        assert!(close(m.cov_value_volume, 2.0));
        assert!(close(m.phi, 0.25));
        assert!(close(m.covariance_coefficient(), 1.0));
        // both buckets trade at price 2
        assert_eq!(m.price_cv, 0.0);
        assert!(close(
            m.sigma_value.powi(2),
            m.mean_sq_value - m.mean_value.powi(2)
        ));
    }

    #[test]
    fn constant_volume_example() {
        let m = moment_set(&series(&[2.0, 6.0], &[1.0, 1.0])).unwrap();
        assert_eq!(m.volume_cv, 0.0);
        assert_eq!(m.phi, 0.0);
        assert!(close(m.value_cv.powi(2), 0.25));
        assert_eq!(m.covariance_coefficient(), 0.0);
    }

    #[test]
    fn constant_series_has_no_dispersion() {
        let m = moment_set(&series(&[0.3; 5], &[0.1; 5])).unwrap();
        assert_eq!(
            (m.value_cv, m.volume_cv, m.phi, m.price_cv),
            (0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn degenerate_series() {
        assert!(matches!(
            moment_set(&series(&[1.0], &[1.0])),
            Err(Error::DegenerateSeries(_))
        ));
    }

    #[test]
    fn vwap_examples() {
        assert_eq!(vwap(&[1.0, 3.0], &[1.0, 3.0]).unwrap(), 2.5);
        assert_eq!(vwap(&[4.2; 3], &[1.0, 5.0, 0.5]).unwrap(), 4.2);
        assert_eq!(vwap(&[2.0, 2.0], &[1.0, 3.0]).unwrap(), 2.0);
        assert!(matches!(vwap(&[1.0], &[0.0]), Err(Error::ZeroWeightSum)));
    }

    fn spec2() -> PortfolioSpec {
        PortfolioSpec::new(
            0.0,
            vec![
                Holding {
                    security: "A".into(),
                    shares: 3.0,
                    reference_price: 2.0,
                },
                Holding {
                    security: "B".into(),
                    shares: 1.0,
                    reference_price: 4.0,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn vwap_decomposition_examples() {
        let sp = spec2();
        // x = (0.75, 0.25), p = (2, 4)
        let s = vwap_decomposition_check(&sp, &[("A".into(), 2.0), ("B".into(), 4.0)]).unwrap();
        assert_eq!(s, 2.5);
        // unchanged prices reproduce s(t0)
        assert_eq!(s, crate::aggregation::portfolio_price_t0(&sp));
        assert!(matches!(
            vwap_decomposition_check(&sp, &[("A".into(), 2.0), ("C".into(), 1.0)]),
            Err(Error::UnknownSecurity(_))
        ));
        assert!(matches!(
            vwap_decomposition_check(&sp, &[("A".into(), 2.0)]),
            Err(Error::MissingSecurity(_))
        ));
    }

    #[test]
    fn returns_examples() {
        let r = returns(&[2.0, 2.0], &[1.0, 4.0], 2.0).unwrap();
        assert_eq!(r.instant, vec![1.0, 1.0]);
        assert_eq!(r.average, 1.0);
        let r = returns(&[1.0, 3.0], &[1.0, 3.0], 2.0).unwrap();
        assert_eq!(r.average, 1.25);
        assert_eq!(r.unweighted_mean(), 1.0);
        assert!(returns(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn two_security_return_decomposition() {
        assert!(close(
            portfolio_return(&[1.1, 0.9], &[0.5, 0.5]).unwrap(),
            1.0
        ));
    }
}
