//! End-to-end analysis: trades and a portfolio in, a schema-versioned report
//! out. Also the χ sweep over generated data.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::aggregation::{build_portfolio, portfolio_price_t0};
use crate::decomposition::{
    chi_linear_decomposition, markowitz_quadratic_form, return_covariance_matrix,
    taylor_decomposition, volume_cv_matrix, ChiLinear, TaylorDecomposition,
    TaylorDecompositionInput,
};
use crate::error::{Error, Result};
use crate::io::{read_portfolio, read_trades};
use crate::moments::{
    moment_set, portfolio_return, series_returns, series_vwap, vwap_decomposition_check,
};
use crate::synthetic::{generate, generate_regime, RegimeKnobs};
use crate::trade_model::{
    align_to_grid, validate_ticks, AlignMode, AveragingWindow, Ordering, PortfolioSpec, TradeTick,
};
use crate::variance::{
    analyze_variance, asymptotic_factor, markowitz_variance, relative_difference, Regime,
    RegimeReport, RegimeThresholds, TaylorMu,
};

pub const SCHEMA_VERSION: &str = "tradevar.report/1";

/// Relative gap below which Θ and Θ_M count as equal.
pub const AGREEMENT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowParams {
    /// Center time and full width, in seconds.
    Centered { center: f64, width: f64 },
    /// Smallest window holding every tick.
    WholeFile,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzeOptions {
    pub window: WindowParams,
    pub buckets: usize,
    pub mode: AlignMode,
    pub thresholds: RegimeThresholds,
}

/// Two routes to the same quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Check {
    pub left: f64,
    pub right: f64,
    pub relative_difference: f64,
}

impl Check {
    pub fn new(left: f64, right: f64) -> Self {
        Self {
            left,
            right,
            relative_difference: relative_difference(left, right),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputsBlock {
    pub trades: Option<String>,
    pub portfolio: Option<String>,
    pub window_center: Option<f64>,
    pub window_width: Option<f64>,
    pub buckets: usize,
    pub lenient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowBlock {
    pub center: f64,
    pub width: f64,
    pub start: f64,
    pub end: f64,
    pub bucket_width: f64,
    pub buckets: usize,
    pub effective_buckets: usize,
    /// Nominal bucket ranges merged into each effective bucket.
    pub groups: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortfolioBlock {
    pub securities: Vec<String>,
    pub composition_time: f64,
    pub price_t0: f64,
    pub vwap: f64,
    pub average_return: f64,
    /// s(t) against Σ p_j(t) x_j(t₀).
    pub vwap_check: Check,
    /// R(t, t₀) against Σ R_j X_j(t₀).
    pub return_check: Check,
    /// Σ W(tᵢ) against the portfolio's total share count.
    pub volume_check: Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentsBlock {
    pub psi: f64,
    pub chi: f64,
    pub phi: f64,
    pub a: f64,
    pub psi0: f64,
    pub mean_value: f64,
    pub mean_volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceBlock {
    /// Φ from the weighted form.
    pub price_variance: f64,
    /// μ s²(t).
    pub price_variance_closed: f64,
    pub mu: f64,
    /// Θ from Φ / s²(t₀) (left) and μ R² (right).
    pub return_variance: Check,
    pub markowitz_variance: f64,
    pub taylor: TaylorMu,
    pub taylor_price_variance: f64,
    pub taylor_return_variance: f64,
    pub taylor_around_markowitz: f64,
    pub regime: RegimeReport,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecurityBlock {
    pub security: String,
    pub shares: f64,
    pub reference_price: f64,
    pub scale: f64,
    pub vwap: f64,
    pub average_return: f64,
    pub psi0: f64,
    pub chi: f64,
    pub return_variance: f64,
    pub markowitz_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionBlock {
    pub share_weights: Vec<f64>,
    pub investment_weights: Vec<f64>,
    pub chi: Vec<f64>,
    pub chi_matrix: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub beta_row_sums: Vec<f64>,
    /// Σ β_jk χ_j χ_k x_j x_k against the portfolio χ².
    pub chi_sq_check: Check,
    pub chi_linear: ChiLinear,
    pub return_covariance: Vec<Vec<f64>>,
    pub return_covariance_min_eigenvalue: f64,
    /// Σ θ_jk X_j X_k against the portfolio Θ_M.
    pub quadratic_form_check: Check,
    pub taylor: TaylorDecomposition,
    /// Σ R_j R_k X_j X_k against R².
    pub return_factor_check: Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkowitzError {
    /// Θ_M < Θ
    Underestimate,
    /// Θ_M > Θ
    Overestimate,
    Agree,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceBlock {
    /// Θ / Θ_M, absent when Θ_M = 0.
    pub ratio: Option<f64>,
    pub difference: f64,
    pub markowitz: MarkowitzError,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDocument {
    pub schema_version: &'static str,
    pub inputs: InputsBlock,
    pub window: WindowBlock,
    pub portfolio: PortfolioBlock,
    pub moments: MomentsBlock,
    pub variance: VarianceBlock,
    pub securities: Vec<SecurityBlock>,
    pub decomposition: DecompositionBlock,
    pub divergence: DivergenceBlock,
}

pub fn divergence(theta: f64, theta_m: f64) -> DivergenceBlock {
    let markowitz = if relative_difference(theta, theta_m) <= AGREEMENT_TOLERANCE {
        MarkowitzError::Agree
    } else if theta_m < theta {
        MarkowitzError::Underestimate
    } else {
        MarkowitzError::Overestimate
    };
    DivergenceBlock {
        ratio: (theta_m > 0.0).then(|| theta / theta_m),
        difference: theta - theta_m,
        markowitz,
    }
}

/// Read both files and analyze them.
pub fn analyze(
    trades: &Path,
    portfolio: &Path,
    options: &AnalyzeOptions,
) -> Result<ReportDocument> {
    let ticks = read_trades(trades)?;
    let spec = read_portfolio(portfolio)?;
    let mut doc = analyze_ticks(ticks, &spec, options)?;
    doc.inputs.trades = Some(trades.display().to_string());
    doc.inputs.portfolio = Some(portfolio.display().to_string());
    Ok(doc)
}

pub fn analyze_ticks(
    ticks: Vec<TradeTick>,
    spec: &PortfolioSpec,
    options: &AnalyzeOptions,
) -> Result<ReportDocument> {
    let ticks = validate_ticks(ticks, Ordering::Sort)?;
    let window = match options.window {
        WindowParams::Centered { center, width } => {
            if !(width > 0.0 && width.is_finite() && center.is_finite()) {
                return Err(Error::InvalidWindow(format!(
                    "center {center}, width {width}"
                )));
            }
            AveragingWindow::new(center, width / 2.0, options.buckets)?
        }
        WindowParams::WholeFile => AveragingWindow::covering(&ticks, options.buckets)?,
    };
    log::debug!(
        "window [{}, {}] with {} buckets",
        window.start(),
        window.end(),
        window.bucket_count()
    );
    let alignment = align_to_grid(&ticks, &window, &spec.securities(), options.mode)?;
    if alignment.effective_buckets() < alignment.nominal_buckets() {
        log::info!(
            "merged empty buckets: {} effective of {}",
            alignment.effective_buckets(),
            alignment.nominal_buckets()
        );
    }
    let (normalized, portfolio) = build_portfolio(&alignment.series, spec)?;
    let price_t0 = portfolio_price_t0(spec);
    let v = analyze_variance(&portfolio, price_t0, &options.thresholds)?;
    for w in &v.warnings {
        log::warn!("{w}");
    }

    let x = spec.share_weights();
    let big_x = spec.investment_weights();
    let mut securities = Vec::with_capacity(spec.len());
    let mut returns = Vec::with_capacity(spec.len());
    let mut security_vwaps = Vec::with_capacity(spec.len());
    for (series, holding) in normalized.iter().zip(spec.holdings()) {
        let vwap = series_vwap(series)?;
        let r = series_returns(series, holding.reference_price)?;
        let m = moment_set(series)?;
        let theta_m = markowitz_variance(&r.instant)?;
        let sv = analyze_variance(series, holding.reference_price, &options.thresholds)?;
        securities.push(SecurityBlock {
            security: holding.security.to_string(),
            shares: holding.shares,
            reference_price: holding.reference_price,
            scale: series.scale,
            vwap,
            average_return: r.average,
            psi0: m.price_cv,
            chi: m.volume_cv,
            return_variance: sv.return_variance,
            markowitz_variance: theta_m,
        });
        security_vwaps.push((holding.security.clone(), vwap));
        returns.push(r);
    }

    let avg_returns: Vec<f64> = returns.iter().map(|r| r.average).collect();
    let vols = volume_cv_matrix(&normalized, &x)?;
    let cov = return_covariance_matrix(&returns)?;
    let quadratic = markowitz_quadratic_form(&cov, &big_x)?;
    let taylor = taylor_decomposition(TaylorDecompositionInput {
        psi0: v.moments.price_cv,
        a: v.covariance_coefficient.clamp(-1.0, 1.0),
        volumes: &vols,
        returns: &avg_returns,
        investment_weights: &big_x,
    })?;
    let chi = v.moments.volume_cv;

    Ok(ReportDocument {
        schema_version: SCHEMA_VERSION,
        inputs: InputsBlock {
            trades: None,
            portfolio: None,
            window_center: match options.window {
                WindowParams::Centered { center, .. } => Some(center),
                WindowParams::WholeFile => None,
            },
            window_width: match options.window {
                WindowParams::Centered { width, .. } => Some(width),
                WindowParams::WholeFile => None,
            },
            buckets: options.buckets,
            lenient: options.mode == AlignMode::Lenient,
        },
        window: WindowBlock {
            center: window.center(),
            width: window.width(),
            start: window.start(),
            end: window.end(),
            bucket_width: window.bucket_width(),
            buckets: alignment.nominal_buckets(),
            effective_buckets: alignment.effective_buckets(),
            groups: alignment.groups.iter().map(|&(a, b)| [a, b]).collect(),
        },
        portfolio: PortfolioBlock {
            securities: spec.securities().iter().map(|s| s.to_string()).collect(),
            composition_time: spec.composition_time(),
            price_t0,
            vwap: v.vwap,
            average_return: v.average_return,
            vwap_check: Check::new(v.vwap, vwap_decomposition_check(spec, &security_vwaps)?),
            return_check: Check::new(v.average_return, portfolio_return(&avg_returns, &big_x)?),
            volume_check: Check::new(portfolio.total_volume(), spec.total_shares()),
        },
        moments: MomentsBlock {
            psi: v.moments.value_cv,
            chi,
            phi: v.moments.phi,
            a: v.covariance_coefficient,
            psi0: v.moments.price_cv,
            mean_value: v.moments.mean_value,
            mean_volume: v.moments.mean_volume,
        },
        divergence: divergence(v.return_variance, v.markowitz_variance),
        decomposition: DecompositionBlock {
            share_weights: x,
            investment_weights: big_x,
            chi_sq_check: Check::new(vols.chi_sq, chi * chi),
            chi_linear: chi_linear_decomposition(&vols),
            chi: vols.chi,
            chi_matrix: vols.chi_matrix,
            beta: vols.beta,
            beta_row_sums: vols.beta_row_sums,
            return_covariance: cov.rows(),
            return_covariance_min_eigenvalue: cov.min_eigenvalue(),
            quadratic_form_check: Check::new(quadratic, v.markowitz_variance),
            return_factor_check: Check::new(taylor.return_factor, taylor.return_squared),
            taylor,
        },
        variance: VarianceBlock {
            price_variance: v.price_variance,
            price_variance_closed: v.price_variance_closed,
            mu: v.mu,
            return_variance: Check::new(v.return_variance, v.return_variance_closed),
            markowitz_variance: v.markowitz_variance,
            taylor: v.taylor.mu,
            taylor_price_variance: v.taylor.price_variance,
            taylor_return_variance: v.taylor.return_variance,
            taylor_around_markowitz: v.taylor_around_markowitz,
            regime: v.regime,
            warnings: v.warnings,
        },
        securities,
    })
}

/// JSON formatting with every float written as `d.ddddddddddddddddde±x`.
struct FixedFloats<'a>(serde_json::ser::PrettyFormatter<'a>);

impl serde_json::ser::Formatter for FixedFloats<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        // fold −0 into 0 so equal reports stay byte-equal
        let value = if value == 0.0 { 0.0 } else { value };
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> std::io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> std::io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(writer)
    }
}

/// Pretty JSON with 17 significant digits per float and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut buf,
        FixedFloats(serde_json::ser::PrettyFormatter::new()),
    );
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("JSON is UTF-8"))
}

fn flatten(prefix: &str, value: &serde_json::Value, out: &mut Vec<(String, String)>) {
    use serde_json::Value;
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&join(k), v, out);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&join(&i.to_string()), v, out);
            }
        }
        Value::Null => out.push((prefix.to_string(), String::new())),
        Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Number(n) => {
            let text = match (n.as_u64(), n.as_i64(), n.as_f64()) {
                (Some(u), _, _) => u.to_string(),
                (_, Some(i), _) => i.to_string(),
                (_, _, Some(f)) => format!("{f:.16e}"),
                _ => n.to_string(),
            };
            out.push((prefix.to_string(), text));
        }
    }
}

/// The report as `key,value` rows, keys being dotted paths into the JSON
/// document (matrix entries end in `.row.col`).
pub fn to_csv<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_value(value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let mut rows = Vec::new();
    flatten("", &json, &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["key", "value"]).map_err(io)?;
    for (k, v) in rows {
        w.write_record([k, v]).map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("CSV is UTF-8"))
}

/// Sweep settings beyond the regime and χ grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub a: Option<f64>,
    pub psi0: Option<f64>,
    pub buckets: usize,
    pub seed: u64,
    pub securities: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            a: None,
            psi0: None,
            buckets: 1000,
            seed: 0,
            securities: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub chi_target: f64,
    pub chi: f64,
    pub psi0: f64,
    pub a: f64,
    pub average_return: f64,
    pub theta: f64,
    pub theta_markowitz: f64,
    pub theta_taylor: f64,
    /// Θ / Θ_M
    pub ratio: f64,
    /// Θ_T / Θ_M
    pub taylor_ratio: f64,
    /// Regime asymptotic for Θ / R² at the measured moments.
    pub asymptotic_factor: Option<f64>,
}

/// Generate a regime preset at each χ and run the variance analysis on the
/// aggregated portfolio.
pub fn sweep(regime: Regime, chi_grid: &[f64], options: &SweepOptions) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(chi_grid.len());
    for &chi in chi_grid {
        let spec = generate_regime(
            regime,
            RegimeKnobs {
                seed: options.seed,
                securities: options.securities,
                buckets: options.buckets,
                chi,
                a: options.a,
                psi0: options.psi0,
            },
        );
        let data = generate(&spec)?;
        let (_, portfolio) = build_portfolio(&data.series, &data.portfolio)?;
        let v = analyze_variance(
            &portfolio,
            portfolio_price_t0(&data.portfolio),
            &RegimeThresholds::default(),
        )?;
        let asymptotic = asymptotic_factor(
            regime,
            v.moments.price_cv,
            v.covariance_coefficient,
            v.moments.volume_cv,
        );
        rows.push(SweepRow {
            chi_target: chi,
            chi: v.moments.volume_cv,
            psi0: v.moments.price_cv,
            a: v.covariance_coefficient,
            average_return: v.average_return,
            theta: v.return_variance,
            theta_markowitz: v.markowitz_variance,
            theta_taylor: v.taylor.return_variance,
            ratio: v.return_variance / v.markowitz_variance,
            taylor_ratio: v.taylor.return_variance / v.markowitz_variance,
            asymptotic_factor: asymptotic,
        });
    }
    Ok(rows)
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "chi_target,chi,psi0,a,average_return,theta,theta_markowitz,theta_taylor,ratio,taylor_ratio,asymptotic_factor\n",
    );
    for r in rows {
        let cells: Vec<String> = [
            r.chi_target,
            r.chi,
            r.psi0,
            r.a,
            r.average_return,
            r.theta,
            r.theta_markowitz,
            r.theta_taylor,
            r.ratio,
            r.taylor_ratio,
        ]
        .iter()
        .map(|x| format!("{x:.16e}"))
        .chain(std::iter::once(
            r.asymptotic_factor
                .map(|x| format!("{x:.16e}"))
                .unwrap_or_default(),
        ))
        .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
