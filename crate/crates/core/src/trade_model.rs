//! Trade ticks, the averaging window, portfolio composition, and alignment of
//! asynchronous ticks onto a common equal-width bucket grid.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::{sum, NeumaierSum};

/// Opaque security identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SecurityId(String);

impl SecurityId {
    pub fn new(id: impl Into<String>) -> Self {
        SecurityId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SecurityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SecurityId {
    fn from(s: &str) -> Self {
        SecurityId(s.to_owned())
    }
}

impl From<String> for SecurityId {
    fn from(s: String) -> Self {
        SecurityId(s)
    }
}

/// One market trade. The price is always derived as `value / volume`.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeTick {
    pub time: f64,
    pub security: SecurityId,
    pub value: f64,
    pub volume: f64,
}

impl TradeTick {
    pub fn new(time: f64, security: impl Into<SecurityId>, value: f64, volume: f64) -> Self {
        TradeTick {
            time,
            security: security.into(),
            value,
            volume,
        }
    }

    /// Build a tick from a quoted price, computing `value = price * volume`.
    pub fn from_price(time: f64, security: impl Into<SecurityId>, price: f64, volume: f64) -> Self {
        Self::new(time, security, price * volume, volume)
    }

    pub fn price(&self) -> f64 {
        self.value / self.volume
    }

    fn check(&self, row: usize) -> Result<()> {
        if !self.time.is_finite() {
            return Err(Error::Parse {
                line: row,
                message: format!("non-finite time {}", self.time),
            });
        }
        for (field, value) in [("value", self.value), ("volume", self.volume)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveField { row, field, value });
            }
        }
        let price = self.price();
        if !(price > 0.0 && price.is_finite()) {
            return Err(Error::NonPositiveField {
                row,
                field: "price",
                value: price,
            });
        }
        Ok(())
    }
}

/// How [`validate_ticks`] treats out-of-order input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ordering {
    /// Stable-sort by time.
    #[default]
    Sort,
    /// Reject input whose times decrease.
    RequireSorted,
}

/// Check every tick and return them in nondecreasing time order.
pub fn validate_ticks<I>(ticks: I, ordering: Ordering) -> Result<Vec<TradeTick>>
where
    I: IntoIterator<Item = TradeTick>,
{
    let mut out = Vec::new();
    for (row, tick) in ticks.into_iter().enumerate() {
        tick.check(row)?;
        if ordering == Ordering::RequireSorted
            && out
                .last()
                .is_some_and(|prev: &TradeTick| tick.time < prev.time)
        {
            return Err(Error::UnsortedInput { row });
        }
        out.push(tick);
    }
    if ordering == Ordering::Sort {
        out.sort_by(|a, b| a.time.total_cmp(&b.time));
    }
    Ok(out)
}

/// The interval `[center - half_width, center + half_width]` split into
/// `bucket_count` equal sub-intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragingWindow {
    center: f64,
    half_width: f64,
    bucket_count: usize,
}

impl AveragingWindow {
    pub fn new(center: f64, half_width: f64, bucket_count: usize) -> Result<Self> {
        if bucket_count < 2 {
            return Err(Error::InvalidWindow(format!(
                "need at least 2 buckets, got {bucket_count}"
            )));
        }
        if !(half_width > 0.0 && half_width.is_finite()) || !center.is_finite() {
            return Err(Error::InvalidWindow(format!(
                "center {center} and half width {half_width} must be finite, half width positive"
            )));
        }
        Ok(AveragingWindow {
            center,
            half_width,
            bucket_count,
        })
    }

    /// Window spanning `[start, end]`.
    pub fn from_bounds(start: f64, end: f64, bucket_count: usize) -> Result<Self> {
        if !(end > start) {
            return Err(Error::InvalidWindow(format!(
                "window end {end} must exceed start {start}"
            )));
        }
        Self::new(
            start + (end - start) / 2.0,
            (end - start) / 2.0,
            bucket_count,
        )
    }

    /// Smallest window containing every tick.
    pub fn covering(ticks: &[TradeTick], bucket_count: usize) -> Result<Self> {
        let (lo, hi) = ticks
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                (lo.min(t.time), hi.max(t.time))
            });
        if ticks.is_empty() {
            return Err(Error::InvalidWindow("no ticks to cover".into()));
        }
        Self::from_bounds(lo, hi, bucket_count)
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn width(&self) -> f64 {
        2.0 * self.half_width
    }

    pub fn bucket_count(&self) -> usize {
        self.bucket_count
    }

    pub fn bucket_width(&self) -> f64 {
        self.width() / self.bucket_count as f64
    }

    pub fn start(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn end(&self) -> f64 {
        self.center + self.half_width
    }

    /// Bucket holding `time`; buckets are half-open except the last, which
    /// is closed on the right.
    pub fn bucket_of(&self, time: f64) -> Option<usize> {
        let (start, end) = (self.start(), self.end());
        if time < start || time > end {
            return None;
        }
        let pos = ((time - start) / self.width() * self.bucket_count as f64).floor();
        Some((pos as usize).min(self.bucket_count - 1))
    }
}

/// One position held since composition time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Holding {
    pub security: SecurityId,
    pub shares: f64,
    pub reference_price: f64,
}

/// Portfolio composition fixed at `composition_time`. Holdings keep the
/// order they were given in; that order drives every per-security table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSpec {
    composition_time: f64,
    holdings: Vec<Holding>,
}

impl PortfolioSpec {
    pub fn new(composition_time: f64, holdings: Vec<Holding>) -> Result<Self> {
        if holdings.is_empty() {
            return Err(Error::InvalidPortfolio("no holdings".into()));
        }
        let mut seen = BTreeSet::new();
        for h in &holdings {
            if !seen.insert(&h.security) {
                return Err(Error::InvalidPortfolio(format!(
                    "security {} listed twice",
                    h.security
                )));
            }
            if !(h.shares > 0.0 && h.shares.is_finite()) {
                return Err(Error::InvalidPortfolio(format!(
                    "shares of {} must be positive, got {}",
                    h.security, h.shares
                )));
            }
            if !(h.reference_price > 0.0 && h.reference_price.is_finite()) {
                return Err(Error::InvalidPortfolio(format!(
                    "reference price of {} must be positive, got {}",
                    h.security, h.reference_price
                )));
            }
        }
        Ok(PortfolioSpec {
            composition_time,
            holdings,
        })
    }

    pub fn composition_time(&self) -> f64 {
        self.composition_time
    }

    pub fn holdings(&self) -> &[Holding] {
        &self.holdings
    }

    pub fn len(&self) -> usize {
        self.holdings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.holdings.is_empty()
    }

    pub fn securities(&self) -> Vec<SecurityId> {
        self.holdings.iter().map(|h| h.security.clone()).collect()
    }

    pub fn position(&self, security: &SecurityId) -> Option<usize> {
        self.holdings.iter().position(|h| &h.security == security)
    }

    pub fn holding(&self, security: &SecurityId) -> Result<&Holding> {
        self.holdings
            .iter()
            .find(|h| &h.security == security)
            .ok_or_else(|| Error::UnknownSecurity(security.to_string()))
    }

    /// Total number of shares W_Σ(t₀).
    pub fn total_shares(&self) -> f64 {
        sum(self.holdings.iter().map(|h| h.shares))
    }

    /// Total value Q_Σ(t₀).
    pub fn total_value(&self) -> f64 {
        sum(self.holdings.iter().map(|h| h.reference_price * h.shares))
    }

    /// Relative share counts x_j(t₀) = U_j(t₀) / W_Σ(t₀).
    pub fn share_weights(&self) -> Vec<f64> {
        let total = self.total_shares();
        self.holdings.iter().map(|h| h.shares / total).collect()
    }

    /// Relative amounts invested X_j(t₀) = p_j(t₀) x_j(t₀) / s(t₀).
    pub fn investment_weights(&self) -> Vec<f64> {
        let s0 = crate::aggregation::portfolio_price_t0(self);
        self.share_weights()
            .iter()
            .zip(&self.holdings)
            .map(|(x, h)| h.reference_price * x / s0)
            .collect()
    }
}

/// A bucketed series of trade values and volumes on the common grid.
///
/// Implemented by raw, normalized, and portfolio series so that the
/// statistics in [`crate::moments`] apply uniformly to all of them.
pub trait TradeSeries {
    fn values(&self) -> &[f64];
    fn volumes(&self) -> &[f64];

    fn bucket_count(&self) -> usize {
        self.values().len()
    }

    /// Bucket prices value / volume.
    fn prices(&self) -> Vec<f64> {
        self.values()
            .iter()
            .zip(self.volumes())
            .map(|(c, u)| c / u)
            .collect()
    }
}

/// Per-security bucket sums on the common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSeries {
    pub security: SecurityId,
    values: Vec<f64>,
    volumes: Vec<f64>,
}

impl AlignedSeries {
    pub fn new(
        security: impl Into<SecurityId>,
        values: Vec<f64>,
        volumes: Vec<f64>,
    ) -> Result<Self> {
        let security = security.into();
        if values.len() != volumes.len() {
            return Err(Error::MismatchedLength {
                expected: values.len(),
                found: volumes.len(),
            });
        }
        for (i, (&c, &u)) in values.iter().zip(&volumes).enumerate() {
            if !(u > 0.0 && u.is_finite()) {
                return Err(Error::NonPositiveField {
                    row: i,
                    field: "volume",
                    value: u,
                });
            }
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::NonPositiveField {
                    row: i,
                    field: "value",
                    value: c,
                });
            }
        }
        Ok(AlignedSeries {
            security,
            values,
            volumes,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl TradeSeries for AlignedSeries {
    fn values(&self) -> &[f64] {
        &self.values
    }

    fn volumes(&self) -> &[f64] {
        &self.volumes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlignMode {
    /// Any empty bucket is an error.
    #[default]
    Strict,
    /// Empty buckets are merged into their left neighbour on the shared grid.
    Lenient,
}

/// Result of [`align_to_grid`].
#[derive(Debug, Clone)]
pub struct Alignment {
    pub series: Vec<AlignedSeries>,
    pub window: AveragingWindow,
    /// `[first, last]` nominal bucket indices making up each effective bucket.
    pub groups: Vec<(usize, usize)>,
}

impl Alignment {
    pub fn nominal_buckets(&self) -> usize {
        self.window.bucket_count()
    }

    pub fn effective_buckets(&self) -> usize {
        self.groups.len()
    }
}

/// Sum ticks of each security into the window's buckets.
///
/// `securities` fixes the output order. Ticks outside the window or for
/// securities not listed are ignored. Within a bucket the ticks are summed in
/// a canonical order, so the result does not depend on input order.
pub fn align_to_grid(
    ticks: &[TradeTick],
    window: &AveragingWindow,
    securities: &[SecurityId],
    mode: AlignMode,
) -> Result<Alignment> {
    let n = window.bucket_count();
    let index: BTreeMap<&SecurityId, usize> =
        securities.iter().enumerate().map(|(j, s)| (s, j)).collect();
    let mut cells: Vec<Vec<Vec<(f64, f64)>>> = vec![vec![Vec::new(); n]; securities.len()];
    for tick in ticks {
        let Some(&j) = index.get(&tick.security) else {
            continue;
        };
        if let Some(i) = window.bucket_of(tick.time) {
            cells[j][i].push((tick.value, tick.volume));
        }
    }

    let full = |i: usize| cells.iter().all(|c| !c[i].is_empty());
    let groups: Vec<(usize, usize)> = match mode {
        AlignMode::Strict => {
            for (j, c) in cells.iter().enumerate() {
                if let Some(i) = c.iter().position(Vec::is_empty) {
                    return Err(Error::EmptyBucket {
                        security: securities[j].to_string(),
                        bucket: i,
                    });
                }
            }
            (0..n).map(|i| (i, i)).collect()
        }
        AlignMode::Lenient => {
            let Some(first) = (0..n).find(|&i| full(i)) else {
                let (j, _) = cells
                    .iter()
                    .enumerate()
                    .find(|(_, c)| c.iter().all(Vec::is_empty))
                    .unwrap_or((0, &cells[0]));
                return Err(Error::EmptyBucket {
                    security: securities[j].to_string(),
                    bucket: 0,
                });
            };
            // leading empties go right, every other empty bucket goes left
            let mut groups = vec![(0, first)];
            for i in first + 1..n {
                if full(i) {
                    groups.push((i, i));
                } else {
                    groups.last_mut().expect("nonempty").1 = i;
                }
            }
            groups
        }
    };
    if groups.len() < 2 {
        return Err(Error::DegenerateSeries(format!(
            "only {} effective bucket(s) after merging",
            groups.len()
        )));
    }

    let series = securities
        .iter()
        .zip(&cells)
        .map(|(security, c)| {
            let mut values = Vec::with_capacity(groups.len());
            let mut volumes = Vec::with_capacity(groups.len());
            for &(lo, hi) in &groups {
                let mut pairs: Vec<(f64, f64)> = c[lo..=hi].iter().flatten().copied().collect();
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
                values.push(pairs.iter().map(|p| p.0).collect::<NeumaierSum>().value());
                volumes.push(pairs.iter().map(|p| p.1).collect::<NeumaierSum>().value());
            }
            AlignedSeries::new(security.clone(), values, volumes)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Alignment {
        series,
        window: *window,
        groups,
    })
}
