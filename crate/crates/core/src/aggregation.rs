//! Rescaling market trades into trades of exactly the held share counts and
//! summing them into one synthetic series for the whole portfolio.

use crate::error::{Error, Result};
use crate::sum::{sum, NeumaierSum};
use crate::trade_model::{AlignedSeries, PortfolioSpec, SecurityId, TradeSeries};

/// A security's series rescaled by λ_j so its volumes total the holding.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSeries {
    pub security: SecurityId,
    pub scale: f64,
    values: Vec<f64>,
    volumes: Vec<f64>,
}

impl NormalizedSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl TradeSeries for NormalizedSeries {
    fn values(&self) -> &[f64] {
        &self.values
    }

    fn volumes(&self) -> &[f64] {
        &self.volumes
    }
}

/// The portfolio traded as if it were a single security.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioSeries {
    values: Vec<f64>,
    volumes: Vec<f64>,
    prices: Vec<f64>,
    reference: PortfolioSpec,
}

impl PortfolioSeries {
    pub fn reference(&self) -> &PortfolioSpec {
        &self.reference
    }

    /// Bucket prices s(tᵢ) = Q(tᵢ) / W(tᵢ).
    pub fn bucket_prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Σᵢ W(tᵢ), equal to the portfolio's total share count.
    pub fn total_volume(&self) -> f64 {
        sum(self.volumes.iter().copied())
    }

    /// Σᵢ Q(tᵢ).
    pub fn total_value(&self) -> f64 {
        sum(self.values.iter().copied())
    }
}

impl TradeSeries for PortfolioSeries {
    fn values(&self) -> &[f64] {
        &self.values
    }

    fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    fn prices(&self) -> Vec<f64> {
        self.prices.clone()
    }
}

/// λ_j = U_j(t₀) / U_Σj(t).
pub fn normalization_scale(holding: f64, total_traded: f64) -> Result<f64> {
    if !(holding > 0.0) {
        return Err(Error::InvalidPortfolio(format!(
            "holding must be positive, got {holding}"
        )));
    }
    if !(total_traded > 0.0) {
        return Err(Error::ZeroTotalVolume(format!(
            "total traded volume {total_traded}"
        )));
    }
    Ok(holding / total_traded)
}

pub fn normalize_series(series: &AlignedSeries, spec: &PortfolioSpec) -> Result<NormalizedSeries> {
    let holding = spec.holding(&series.security)?;
    let total = sum(series.volumes().iter().copied());
    let scale = normalization_scale(holding.shares, total).map_err(|e| match e {
        Error::ZeroTotalVolume(_) => Error::ZeroTotalVolume(series.security.to_string()),
        other => other,
    })?;
    Ok(NormalizedSeries {
        security: series.security.clone(),
        scale,
        values: series.values().iter().map(|c| scale * c).collect(),
        volumes: series.volumes().iter().map(|u| scale * u).collect(),
    })
}

/// Bucketwise sums Q(tᵢ) = Σ_j c_j(tᵢ), W(tᵢ) = Σ_j u_j(tᵢ).
///
/// Securities are summed in the order given, so the result is deterministic.
pub fn portfolio_series(
    normalized: &[NormalizedSeries],
    spec: &PortfolioSpec,
) -> Result<PortfolioSeries> {
    let first = normalized.first().ok_or(Error::EmptyList)?;
    let n = first.len();
    for s in normalized {
        if s.len() != n {
            return Err(Error::MismatchedLength {
                expected: n,
                found: s.len(),
            });
        }
        spec.holding(&s.security)?;
    }
    for h in spec.holdings() {
        if !normalized.iter().any(|s| s.security == h.security) {
            return Err(Error::MissingSecurity(h.security.to_string()));
        }
    }
    let mut values = Vec::with_capacity(n);
    let mut volumes = Vec::with_capacity(n);
    for i in 0..n {
        values.push(
            normalized
                .iter()
                .map(|s| s.values[i])
                .collect::<NeumaierSum>()
                .value(),
        );
        volumes.push(
            normalized
                .iter()
                .map(|s| s.volumes[i])
                .collect::<NeumaierSum>()
                .value(),
        );
    }
    let prices = values.iter().zip(&volumes).map(|(q, w)| q / w).collect();
    Ok(PortfolioSeries {
        values,
        volumes,
        prices,
        reference: spec.clone(),
    })
}

/// s(t₀) = Q_Σ(t₀) / W_Σ(t₀).
pub fn portfolio_price_t0(spec: &PortfolioSpec) -> f64 {
    spec.total_value() / spec.total_shares()
}

/// Normalize every aligned series against `spec` and aggregate them.
pub fn build_portfolio(
    aligned: &[AlignedSeries],
    spec: &PortfolioSpec,
) -> Result<(Vec<NormalizedSeries>, PortfolioSeries)> {
    let normalized = aligned
        .iter()
        .map(|s| normalize_series(s, spec))
        .collect::<Result<Vec<_>>>()?;
    let portfolio = portfolio_series(&normalized, spec)?;
    Ok((normalized, portfolio))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trade_model::Holding;

    fn spec(items: &[(&str, f64, f64)]) -> PortfolioSpec {
        PortfolioSpec::new(
            0.0,
            items
                .iter()
                .map(|&(s, u, p)| Holding {
                    security: s.into(),
                    shares: u,
                    reference_price: p,
                })
                .collect(),
        )
        .unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn scale_examples() {
        assert_eq!(normalization_scale(100.0, 50.0).unwrap(), 2.0);
        assert_eq!(normalization_scale(7.0, 7.0).unwrap(), 1.0);
        assert_eq!(normalization_scale(1.0, 1e9).unwrap(), 1e-9);
        assert!(matches!(
            normalization_scale(1.0, 0.0),
            Err(Error::ZeroTotalVolume(_))
        ));
    }

    #[test]
    fn normalizes_volumes_to_holding() {
        let s = AlignedSeries::new("A", vec![2.0, 6.0], vec![1.0, 3.0]).unwrap();
        let n = normalize_series(&s, &spec(&[("A", 8.0, 1.0)])).unwrap();
        assert_eq!(n.scale, 2.0);
        assert_eq!(n.volumes(), &[2.0, 6.0]);
        assert_eq!(n.values(), &[4.0, 12.0]);
        assert_eq!(n.prices(), vec![2.0, 2.0]);

        let s = AlignedSeries::new("A", vec![3.0, 4.0], vec![5.0, 5.0]).unwrap();
        let n = normalize_series(&s, &spec(&[("A", 10.0, 1.0)])).unwrap();
        assert_eq!(n.scale, 1.0);
        assert_eq!(n.values(), s.values());
        assert_eq!(n.volumes(), s.volumes());
    }

    #[test]
    fn unknown_security() {
        let s = AlignedSeries::new("Z", vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            normalize_series(&s, &spec(&[("A", 1.0, 1.0)])),
            Err(Error::UnknownSecurity(_))
        ));
    }

    #[test]
    fn sums_two_securities() {
        let sp = spec(&[("A", 4.0, 1.0), ("B", 4.0, 1.0)]);
        let a = AlignedSeries::new("A", vec![1.0, 6.0], vec![1.0, 3.0]).unwrap();
        let b = AlignedSeries::new("B", vec![4.0, 2.0], vec![2.0, 2.0]).unwrap();
        let (_, p) = build_portfolio(&[a, b], &sp).unwrap();
        assert_eq!(p.volumes(), &[3.0, 5.0]);
        assert_eq!(p.values(), &[5.0, 8.0]);
        assert_eq!(p.bucket_prices(), &[5.0 / 3.0, 8.0 / 5.0]);
        assert_eq!(p.total_volume(), 8.0);
    }

    #[test]
    fn single_security_portfolio_matches_normalized() {
        let sp = spec(&[("A", 3.0, 1.0)]);
        let a = AlignedSeries::new("A", vec![1.5, 7.0, 2.0], vec![1.0, 2.0, 4.0]).unwrap();
        let (norm, p) = build_portfolio(&[a], &sp).unwrap();
        assert_eq!(p.values(), norm[0].values());
        assert_eq!(p.volumes(), norm[0].volumes());
    }

    #[test]
    fn constant_normalized_volumes_give_constant_portfolio_volume() {
        let sp = spec(&[("A", 6.0, 1.0), ("B", 9.0, 1.0)]);
        let a = AlignedSeries::new("A", vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0]).unwrap();
        let b = AlignedSeries::new("B", vec![4.0, 1.0, 2.0], vec![2.0, 2.0, 2.0]).unwrap();
        let (_, p) = build_portfolio(&[a, b], &sp).unwrap();
        assert!(p.volumes().iter().all(|&w| w == p.volumes()[0]));
    }

    #[test]
    fn mismatched_and_missing() {
        let sp = spec(&[("A", 1.0, 1.0), ("B", 1.0, 1.0)]);
        let a = AlignedSeries::new("A", vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let b = AlignedSeries::new("B", vec![1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0]).unwrap();
        let na = normalize_series(&a, &sp).unwrap();
        let nb = normalize_series(&b, &sp).unwrap();
        assert!(matches!(
            portfolio_series(&[na.clone(), nb], &sp),
            Err(Error::MismatchedLength { .. })
        ));
        assert!(matches!(
            portfolio_series(&[na], &sp),
            Err(Error::MissingSecurity(_))
        ));
    }

    #[test]
    fn price_at_composition() {
        assert_eq!(portfolio_price_t0(&spec(&[("A", 10.0, 3.0)])), 3.0);
        assert_eq!(
            portfolio_price_t0(&spec(&[("A", 1.0, 1.0), ("B", 1.0, 3.0)])),
            2.0
        );
        let sp = spec(&[("A", 3.0, 2.0), ("B", 1.0, 4.0)]);
        assert_eq!(portfolio_price_t0(&sp), 2.5);
        // agrees with the x-weighted price sum
        let x = sp.share_weights();
        let weighted: f64 = sp
            .holdings()
            .iter()
            .zip(&x)
            .map(|(h, x)| h.reference_price * x)
            .sum();
        assert!(rel(weighted, 2.5) < 1e-12);
    }
}
