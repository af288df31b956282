//! Market-based price and return variances, the classical Markowitz
//! variance, their second-order expansion in the volume CV χ, and the
//! limiting-regime analysis built on that expansion.
//!
//! The market-based price variance is computed twice: once from its
//! defining volume-squared weighted form and once from the closed form in
//! (ψ, χ, φ). The two are algebraically identical, so their relative
//! difference is reported as a numerical health check.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::moments::{moment_set, series_returns, series_vwap, MomentSet};
use crate::sum::{covariance, sum};
use crate::trade_model::TradeSeries;

/// Tolerance on |a| > 1 before the expansion refuses the input.
pub const CORRELATION_SLACK: f64 = 1e-12;

/// Relative divergence between the two variance routes that flags
/// numerical trouble.
pub const ROUTE_DIVERGENCE_LIMIT: f64 = 1e-8;

/// Symmetric relative difference, zero when both sides are zero.
pub fn relative_difference(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Φ(t) = Σ (sᵢ − s̄)² Wᵢ² / Σ Wᵢ², with s̄ the VWAP of the same series.
pub fn weighted_price_variance<S: TradeSeries + ?Sized>(series: &S) -> Result<f64> {
    if series.bucket_count() < 2 {
        return Err(Error::DegenerateSeries(format!(
            "{} bucket(s)",
            series.bucket_count()
        )));
    }
    let vwap = series_vwap(series)?;
    let prices = series.prices();
    let w = series.volumes();
    let num = sum(prices.iter().zip(w).map(|(s, w)| {
        let d = (s - vwap) * w;
        d * d
    }));
    let den = sum(w.iter().map(|w| w * w));
    Ok(num / den)
}

/// μ(ψ, χ, φ) = (ψ² − 2φ + χ²) / (1 + χ²).
pub fn closed_form_mu(m: &MomentSet) -> f64 {
    let psi2 = m.value_cv * m.value_cv;
    let chi2 = m.volume_cv * m.volume_cv;
    (psi2 - 2.0 * m.phi + chi2) / (1.0 + chi2)
}

/// Θ(t, t₀) = Φ(t) / s²(t₀).
pub fn market_based_return_variance(price_variance: f64, reference_price: f64) -> Result<f64> {
    if !(reference_price > 0.0) {
        return Err(Error::DomainError(format!(
            "reference price must be positive, got {reference_price}"
        )));
    }
    Ok(price_variance / (reference_price * reference_price))
}

/// Θ_M = (1/N) Σ (Rᵢ − R̄)² about the unweighted mean return.
pub fn markowitz_variance(returns: &[f64]) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::DegenerateSeries(format!(
            "{} return(s)",
            returns.len()
        )));
    }
    Ok(covariance(returns, returns))
}

/// Second-order expansion of μ in χ, split into its three terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaylorMu {
    /// ψ₀²
    pub constant: f64,
    /// −2aψ₀χ
    pub linear: f64,
    /// (1 − ψ₀²)χ²
    pub quadratic: f64,
    pub value: f64,
}

fn check_expansion_inputs(psi0: f64, a: f64) -> Result<()> {
    if !(psi0 >= 0.0) || !psi0.is_finite() {
        return Err(Error::DomainError(format!(
            "ψ₀ must be non-negative, got {psi0}"
        )));
    }
    if !(a.abs() <= 1.0 + CORRELATION_SLACK) {
        return Err(Error::DomainError(format!(
            "covariance coefficient must satisfy |a| <= 1, got {a}"
        )));
    }
    Ok(())
}

/// Expansion with the linear and quadratic volume factors supplied
/// separately, so the per-security decomposition can feed its own
/// reconstructions of χ and χ².
pub(crate) fn mu_expansion(psi0: f64, a: f64, chi_linear: f64, chi_sq: f64) -> TaylorMu {
    let constant = psi0 * psi0;
    let linear = -2.0 * a * psi0 * chi_linear;
    let quadratic = (1.0 - constant) * chi_sq;
    TaylorMu {
        constant,
        linear,
        quadratic,
        value: constant + linear + quadratic,
    }
}

/// μ_T = ψ₀² − 2aψ₀χ + (1 − ψ₀²)χ².
pub fn taylor_mu(psi0: f64, a: f64, chi: f64) -> Result<TaylorMu> {
    check_expansion_inputs(psi0, a)?;
    if !(chi >= 0.0) || !chi.is_finite() {
        return Err(Error::DomainError(format!(
            "χ must be non-negative, got {chi}"
        )));
    }
    Ok(mu_expansion(psi0, a, chi, chi * chi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaylorVariances {
    pub mu: TaylorMu,
    /// μ_T s²(t)
    pub price_variance: f64,
    /// μ_T R²(t, t₀)
    pub return_variance: f64,
}

pub fn taylor_variances(
    psi0: f64,
    a: f64,
    chi: f64,
    vwap: f64,
    average_return: f64,
) -> Result<TaylorVariances> {
    let mu = taylor_mu(psi0, a, chi)?;
    Ok(TaylorVariances {
        mu,
        price_variance: mu.value * (vwap * vwap),
        return_variance: mu.value * (average_return * average_return),
    })
}

/// The expansion written around the Markowitz variance:
/// θ = Θ_M − 2a Θ_M^½ R χ + (R² − Θ_M) χ².
pub fn taylor_around_markowitz(theta_m: f64, average_return: f64, a: f64, chi: f64) -> Result<f64> {
    if !(theta_m >= 0.0) {
        return Err(Error::DomainError(format!(
            "Markowitz variance must be non-negative, got {theta_m}"
        )));
    }
    let r = average_return;
    Ok(theta_m - 2.0 * a * theta_m.sqrt() * r * chi + (r * r - theta_m) * chi * chi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    #[serde(rename = "HIGH_PSI0")]
    HighPsi0,
    #[serde(rename = "LOW_PSI0")]
    LowPsi0,
    #[serde(rename = "ZERO_COV")]
    ZeroCov,
    #[serde(rename = "MIXED")]
    Mixed,
}

impl Regime {
    pub fn tag(&self) -> &'static str {
        match self {
            Regime::HighPsi0 => "HIGH_PSI0",
            Regime::LowPsi0 => "LOW_PSI0",
            Regime::ZeroCov => "ZERO_COV",
            Regime::Mixed => "MIXED",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "HIGH_PSI0" | "HIGH" => Ok(Regime::HighPsi0),
            "LOW_PSI0" | "LOW" => Ok(Regime::LowPsi0),
            "ZERO_COV" | "ZERO" => Ok(Regime::ZeroCov),
            "MIXED" => Ok(Regime::Mixed),
            other => Err(Error::DomainError(format!("unknown regime {other}"))),
        }
    }
}

/// Classification thresholds. Checked in order: high ψ₀, low ψ₀, zero
/// covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeThresholds {
    pub high_psi0: f64,
    pub low_psi0: f64,
    pub zero_cov: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds {
            high_psi0: 0.9,
            low_psi0: 0.1,
            zero_cov: 0.05,
        }
    }
}

/// Which limiting case applies and what its asymptotic says, as multiples
/// of R²(t, t₀).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub psi0: f64,
    pub a: f64,
    pub chi: f64,
    /// χ / ψ₀, when ψ₀ > 0.
    pub volume_to_price_cv: Option<f64>,
    /// Applicable asymptotic Θ / R²: 1 − 2aχ (high ψ₀), ψ₀² + χ² (low ψ₀),
    /// ψ₀² + (1 − ψ₀²)χ² (zero covariance).
    pub asymptotic_factor: Option<f64>,
    /// χ = 1/(2a) where the high-ψ₀ asymptotic vanishes, for 1/2 ≤ a, χ ≤ 1.
    pub vanishing_point: Option<f64>,
    /// 1 − 2a, the high-ψ₀ asymptotic at χ → 1 for 0 < a ≤ 1/2.
    pub full_volume_cv_limit: Option<f64>,
    /// χ² / ψ₀², how far the Markowitz value falls short.
    pub underestimation_ratio: Option<f64>,
}

/// Leading-order Θ / R² of a regime, where one is known.
pub fn asymptotic_factor(regime: Regime, psi0: f64, a: f64, chi: f64) -> Option<f64> {
    match regime {
        Regime::HighPsi0 => Some(1.0 - 2.0 * a * chi),
        Regime::LowPsi0 => Some(psi0 * psi0 + chi * chi),
        Regime::ZeroCov => Some(psi0 * psi0 + (1.0 - psi0 * psi0) * chi * chi),
        Regime::Mixed => None,
    }
}

pub fn regime_analysis(psi0: f64, a: f64, chi: f64, thresholds: &RegimeThresholds) -> RegimeReport {
    let regime = if psi0 >= thresholds.high_psi0 {
        Regime::HighPsi0
    } else if psi0 <= thresholds.low_psi0 {
        Regime::LowPsi0
    } else if a.abs() <= thresholds.zero_cov {
        Regime::ZeroCov
    } else {
        Regime::Mixed
    };
    let ratio = (psi0 > 0.0).then(|| chi * chi / (psi0 * psi0));
    let mut report = RegimeReport {
        regime,
        psi0,
        a,
        chi,
        volume_to_price_cv: (psi0 > 0.0).then(|| chi / psi0),
        asymptotic_factor: asymptotic_factor(regime, psi0, a, chi),
        vanishing_point: None,
        full_volume_cv_limit: None,
        underestimation_ratio: None,
    };
    match regime {
        Regime::HighPsi0 => {
            if a >= 0.5 {
                let point = 1.0 / (2.0 * a);
                report.vanishing_point = (point <= 1.0).then_some(point);
            } else if a > 0.0 {
                report.full_volume_cv_limit = Some(1.0 - 2.0 * a);
            }
        }
        Regime::LowPsi0 | Regime::ZeroCov => report.underestimation_ratio = ratio,
        Regime::Mixed => {}
    }
    report
}

/// Everything the variance engine derives from one series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceResult {
    pub moments: MomentSet,
    pub covariance_coefficient: f64,
    pub vwap: f64,
    pub reference_price: f64,
    pub average_return: f64,
    /// Φ(t) from the weighted definition.
    pub price_variance: f64,
    /// Φ(t) from the closed form μ s²(t).
    pub price_variance_closed: f64,
    /// Θ(t, t₀) = Φ / s²(t₀).
    pub return_variance: f64,
    /// Θ(t, t₀) = μ R²(t, t₀).
    pub return_variance_closed: f64,
    pub route_difference: f64,
    pub markowitz_variance: f64,
    pub mu: f64,
    /// E_m[s²(tᵢ)] = Φ + s²(t).
    pub second_moment_price: f64,
    pub taylor: TaylorVariances,
    pub taylor_around_markowitz: f64,
    pub regime: RegimeReport,
    pub warnings: Vec<String>,
}

/// Run the full variance analysis of one series against its price at
/// composition time.
pub fn analyze_variance<S: TradeSeries + ?Sized>(
    series: &S,
    reference_price: f64,
    thresholds: &RegimeThresholds,
) -> Result<VarianceResult> {
    let moments = moment_set(series)?;
    let a = moments.covariance_coefficient();
    let vwap = series_vwap(series)?;
    let rets = series_returns(series, reference_price)?;
    let average_return = rets.average;

    let price_variance = weighted_price_variance(series)?;
    let mu = closed_form_mu(&moments);
    let price_variance_closed = mu * vwap * vwap;
    let return_variance = market_based_return_variance(price_variance, reference_price)?;
    let return_variance_closed = mu * average_return * average_return;
    let route_difference = relative_difference(price_variance, price_variance_closed);
    let markowitz = markowitz_variance(&rets.instant)?;

    let psi0 = moments.price_cv;
    let chi = moments.volume_cv;
    let taylor = taylor_variances(psi0, a.clamp(-1.0, 1.0), chi, vwap, average_return)?;
    let around =
        taylor_around_markowitz(markowitz, rets.unweighted_mean(), a.clamp(-1.0, 1.0), chi)?;

    let mut warnings = Vec::new();
    if route_difference > ROUTE_DIVERGENCE_LIMIT {
        warnings.push(format!(
            "weighted and closed-form variances differ by {route_difference:e} (relative)"
        ));
    }
    if psi0 * psi0 > 1.0 {
        warnings.push(format!("price CV squared {} exceeds 1", psi0 * psi0));
    }
    if chi > 1.0 {
        warnings.push(format!(
            "volume CV {chi} exceeds 1, outside the expansion's range"
        ));
    }
    if taylor.return_variance < 0.0 {
        warnings.push("Taylor variance is negative; the expansion is not valid here".into());
    }

    Ok(VarianceResult {
        moments,
        covariance_coefficient: a,
        vwap,
        reference_price,
        average_return,
        price_variance,
        price_variance_closed,
        return_variance,
        return_variance_closed,
        route_difference,
        markowitz_variance: markowitz,
        mu,
        second_moment_price: price_variance + vwap * vwap,
        taylor,
        taylor_around_markowitz: around,
        regime: regime_analysis(psi0, a, chi, thresholds),
        warnings,
    })
}
