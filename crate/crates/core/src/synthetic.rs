//! Seeded generator of aligned trade series with prescribed price CV ψ₀,
//! volume CV χ and value/volume covariance coefficient `a`.
//!
//! Portfolio volumes are `base_volume · exp(σ_w z_w)` and portfolio prices
//! `base_price · exp(σ_p (ρ z_w + √(1−ρ²) z_p))` with standard normal `z`.
//! σ_w, σ_p and ρ are calibrated on the drawn sample, so the measured
//! moments of the generated portfolio match the targets up to rounding.
//! With several securities the portfolio volume and value in each bucket
//! are split across securities with log-normal share noise.

use libm::{cos, exp, log, sqrt};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{coefficient_of_variation, moment_set};
use crate::sum::sum;
use crate::trade_model::{
    AlignedSeries, AveragingWindow, Holding, PortfolioSpec, SecurityId, TradeSeries, TradeTick,
};
use crate::variance::Regime;

pub const MAX_PRICE_CV: f64 = 1.5;
pub const MAX_VOLUME_CV: f64 = 1.0;

const BISECTION_STEPS: usize = 200;
const RHO_GRID: usize = 64;

fn default_base_price() -> f64 {
    100.0
}

fn default_base_volume() -> f64 {
    1000.0
}

fn default_split_dispersion() -> f64 {
    0.3
}

fn default_bucket_width() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub securities: usize,
    pub buckets: usize,
    /// ψ₀ ∈ [0, 1.5]
    pub target_price_cv: f64,
    /// χ ∈ [0, 1]
    pub target_volume_cv: f64,
    /// `a` ∈ [−1, 1]; `None` draws prices independently of volumes.
    #[serde(default)]
    pub target_corr_a: Option<f64>,
    /// Correlation of the per-security volume share noise.
    #[serde(default)]
    pub volume_corr_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_base_price")]
    pub base_price: f64,
    #[serde(default = "default_base_volume")]
    pub base_volume: f64,
    /// Log-scale dispersion of the per-security splits.
    #[serde(default = "default_split_dispersion")]
    pub split_dispersion: f64,
    /// Time of the first bucket's trades; bucket `i` trades at
    /// `start_time + i · bucket_width`.
    #[serde(default)]
    pub start_time: f64,
    #[serde(default = "default_bucket_width")]
    pub bucket_width: f64,
}

impl GeneratorSpec {
    pub fn new(
        seed: u64,
        securities: usize,
        buckets: usize,
        psi0: f64,
        chi: f64,
        a: Option<f64>,
    ) -> Self {
        Self {
            seed,
            securities,
            buckets,
            target_price_cv: psi0,
            target_volume_cv: chi,
            target_corr_a: a,
            volume_corr_matrix: None,
            base_price: default_base_price(),
            base_volume: default_base_volume(),
            split_dispersion: default_split_dispersion(),
            start_time: 0.0,
            bucket_width: default_bucket_width(),
        }
    }

    #[allow(clippy::needless_range_loop)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.securities == 0 {
            return bad("securities must be at least 1".into());
        }
        if self.buckets < 2 {
            return bad(format!("buckets must be at least 2, got {}", self.buckets));
        }
        if !(0.0..=MAX_PRICE_CV).contains(&self.target_price_cv) {
            return bad(format!(
                "target_price_cv {} outside [0, {MAX_PRICE_CV}]",
                self.target_price_cv
            ));
        }
        if !(0.0..=MAX_VOLUME_CV).contains(&self.target_volume_cv) {
            return bad(format!(
                "target_volume_cv {} outside [0, {MAX_VOLUME_CV}]",
                self.target_volume_cv
            ));
        }
        if let Some(a) = self.target_corr_a {
            if !(-1.0..=1.0).contains(&a) {
                return bad(format!("target_corr_a {a} outside [-1, 1]"));
            }
        }
        for (name, v) in [
            ("base_price", self.base_price),
            ("base_volume", self.base_volume),
            ("bucket_width", self.bucket_width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.split_dispersion >= 0.0 && self.split_dispersion.is_finite()) {
            return bad(format!(
                "split_dispersion must be nonnegative, got {}",
                self.split_dispersion
            ));
        }
        if !self.start_time.is_finite() {
            return bad("start_time must be finite".into());
        }
        if let Some(m) = &self.volume_corr_matrix {
            let j = self.securities;
            if m.len() != j || m.iter().any(|r| r.len() != j) {
                return bad(format!("volume_corr_matrix must be {j}x{j}"));
            }
            for a in 0..j {
                if m[a][a] != 1.0 {
                    return bad("volume_corr_matrix diagonal must be 1".into());
                }
                for b in 0..j {
                    if m[a][b] != m[b][a] || !(-1.0..=1.0).contains(&m[a][b]) {
                        return bad(
                            "volume_corr_matrix must be symmetric with entries in [-1, 1]".into(),
                        );
                    }
                }
            }
        }
        Ok(())
    }
}

/// Knobs applied on top of a regime preset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeKnobs {
    pub seed: u64,
    pub securities: usize,
    pub buckets: usize,
    pub chi: f64,
    pub a: Option<f64>,
    pub psi0: Option<f64>,
}

impl Default for RegimeKnobs {
    fn default() -> Self {
        Self {
            seed: 0,
            securities: 1,
            buckets: 1000,
            chi: 0.5,
            a: None,
            psi0: None,
        }
    }
}

/// Preset price CV and covariance coefficient of a regime.
///
/// A zero correlation between portfolio value and volume needs ψ₀ ≥ χ with
/// log-normal marginals, hence the large ψ₀ of the zero-covariance preset.
pub fn regime_preset(regime: Regime) -> (f64, Option<f64>) {
    match regime {
        Regime::HighPsi0 => (0.95, Some(0.6)),
        Regime::LowPsi0 => (0.03, None),
        Regime::ZeroCov => (1.2, Some(0.0)),
        Regime::Mixed => (0.5, Some(0.3)),
    }
}

pub fn generate_regime(regime: Regime, knobs: RegimeKnobs) -> GeneratorSpec {
    let (psi0, a) = regime_preset(regime);
    let a = match regime {
        Regime::ZeroCov => a,
        _ => knobs.a.or(a),
    };
    GeneratorSpec::new(
        knobs.seed,
        knobs.securities,
        knobs.buckets,
        knobs.psi0.unwrap_or(psi0),
        knobs.chi,
        a,
    )
}

/// Calibrated generator parameters and the moments measured on the output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub sigma_volume: f64,
    pub sigma_price: f64,
    pub mixing: f64,
    pub measured_price_cv: f64,
    pub measured_volume_cv: f64,
    pub measured_a: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub spec: GeneratorSpec,
    pub series: Vec<AlignedSeries>,
    pub portfolio: PortfolioSpec,
    pub calibration: Calibration,
}

impl GeneratedData {
    /// One tick per security and bucket, time-ordered.
    pub fn ticks(&self) -> Vec<TradeTick> {
        let mut out = Vec::with_capacity(self.series.len() * self.spec.buckets);
        for i in 0..self.spec.buckets {
            let t = self.spec.start_time + i as f64 * self.spec.bucket_width;
            for s in &self.series {
                out.push(TradeTick::new(
                    t,
                    s.security.clone(),
                    s.values()[i],
                    s.volumes()[i],
                ));
            }
        }
        out
    }

    /// Window whose buckets each hold exactly one generated tick time.
    pub fn window(&self) -> Result<AveragingWindow> {
        let n = self.spec.buckets as f64;
        AveragingWindow::from_bounds(
            self.spec.start_time - 0.5 * self.spec.bucket_width,
            self.spec.start_time + (n - 0.5) * self.spec.bucket_width,
            self.spec.buckets,
        )
    }
}

struct Normals {
    rng: ChaCha20Rng,
}

impl Normals {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Box–Muller, cosine branch only.
    fn next(&mut self) -> f64 {
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        sqrt(-2.0 * log(u1)) * cos(2.0 * std::f64::consts::PI * u2)
    }

    fn draw(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next()).collect()
    }
}

/// σ of a log-normal with coefficient of variation `cv`.
pub fn lognormal_sigma(cv: f64) -> f64 {
    sqrt(log(1.0 + cv * cv))
}

fn exp_series(base: f64, sigma: f64, z: &[f64]) -> Vec<f64> {
    z.iter().map(|z| base * exp(sigma * z)).collect()
}

fn sample_cv(base: f64, sigma: f64, z: &[f64]) -> f64 {
    coefficient_of_variation(&exp_series(base, sigma, z)).unwrap_or(0.0)
}

/// Smallest σ ≥ 0 with CV(exp(σz)) = `target`, by bisection on the sample.
fn calibrate_sigma(target: f64, z: &[f64]) -> Result<f64> {
    if target == 0.0 {
        return Ok(0.0);
    }
    let mut hi = 2.0 * lognormal_sigma(target) + 0.1;
    let mut grow = 0;
    while sample_cv(1.0, hi, z) < target {
        hi *= 2.0;
        grow += 1;
        if grow > 8 || !hi.is_finite() {
            return Err(Error::InfeasibleTargets(format!(
                "sample of {} buckets cannot reach CV {target}",
                z.len()
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sample_cv(1.0, mid, z) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

struct PortfolioDraw {
    volumes: Vec<f64>,
    prices: Vec<f64>,
    sigma_price: f64,
}

fn mixed(rho: f64, zw: &[f64], zp: &[f64]) -> Vec<f64> {
    let c = sqrt((1.0 - rho * rho).max(0.0));
    zw.iter().zip(zp).map(|(w, p)| rho * w + c * p).collect()
}

fn draw_prices(
    spec: &GeneratorSpec,
    rho: f64,
    zw: &[f64],
    zp: &[f64],
    volumes: &[f64],
) -> Result<PortfolioDraw> {
    let g = mixed(rho, zw, zp);
    let sigma_price = calibrate_sigma(spec.target_price_cv, &g)?;
    Ok(PortfolioDraw {
        volumes: volumes.to_vec(),
        prices: exp_series(spec.base_price, sigma_price, &g),
        sigma_price,
    })
}

fn measured_a(d: &PortfolioDraw) -> Result<f64> {
    let values: Vec<f64> = d
        .prices
        .iter()
        .zip(&d.volumes)
        .map(|(s, w)| s * w)
        .collect();
    let series = AlignedSeries::new("P", values, d.volumes.clone())?;
    Ok(moment_set(&series)?.covariance_coefficient())
}

pub fn generate(spec: &GeneratorSpec) -> Result<GeneratedData> {
    spec.validate()?;
    let n = spec.buckets;
    let j = spec.securities;
    let mut normals = Normals::new(spec.seed);
    let zw = normals.draw(n);
    let zp = normals.draw(n);

    let sigma_volume = calibrate_sigma(spec.target_volume_cv, &zw)?;
    let volumes = if sigma_volume == 0.0 {
        vec![spec.base_volume; n]
    } else {
        exp_series(spec.base_volume, sigma_volume, &zw)
    };

    // `a` is undefined when either CV vanishes; the target is then ignored.
    let a_target = spec
        .target_corr_a
        .filter(|_| spec.target_volume_cv > 0.0 && spec.target_price_cv > 0.0);
    let (rho, draw) = match a_target {
        None => (0.0, draw_prices(spec, 0.0, &zw, &zp, &volumes)?),
        Some(target) => {
            let a_at = |rho: f64| -> Result<f64> {
                measured_a(&draw_prices(spec, rho, &zw, &zp, &volumes)?)
            };
            // a(ρ) is not monotone near ρ = −1, where the value turns into a
            // monotone function of volume again; bracket from ρ = 1 downwards.
            let grid: Vec<f64> = (0..=RHO_GRID)
                .map(|k| 1.0 - 2.0 * k as f64 / RHO_GRID as f64)
                .collect();
            let mut prev = (grid[0], a_at(grid[0])? - target);
            let mut bracket = None;
            let (mut a_min, mut a_max) = (prev.1 + target, prev.1 + target);
            for &rho in &grid[1..] {
                let d = a_at(rho)? - target;
                a_min = a_min.min(d + target);
                a_max = a_max.max(d + target);
                if prev.1 == 0.0 || d == 0.0 || (prev.1 > 0.0) != (d > 0.0) {
                    bracket = Some((rho, prev.0, d > 0.0));
                    break;
                }
                prev = (rho, d);
            }
            let Some((mut lo, mut hi, lo_above)) = bracket else {
                return Err(Error::InfeasibleTargets(format!(
                    "a = {target} outside the attainable range [{a_min:.6}, {a_max:.6}] for ψ₀ = {}, χ = {}",
                    spec.target_price_cv, spec.target_volume_cv
                )));
            };
            let mut best = (f64::INFINITY, hi);
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let d = a_at(mid)? - target;
                if d.abs() < best.0 {
                    best = (d.abs(), mid);
                }
                if (d > 0.0) == lo_above {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let rho = best.1;
            (rho, draw_prices(spec, rho, &zw, &zp, &volumes)?)
        }
    };
    let prices = if draw.sigma_price == 0.0 {
        vec![spec.base_price; n]
    } else {
        draw.prices
    };

    let (values, vols) = split(spec, &mut normals, &prices, &volumes)?;
    let mut series = Vec::with_capacity(j);
    let mut holdings = Vec::with_capacity(j);
    for (k, (c, u)) in values.into_iter().zip(vols).enumerate() {
        let id = SecurityId::new(security_name(k, j));
        holdings.push(Holding {
            security: id.clone(),
            shares: sum(u.iter().copied()),
            reference_price: spec.base_price,
        });
        series.push(AlignedSeries::new(id, c, u)?);
    }
    let portfolio = PortfolioSpec::new(spec.start_time, holdings)?;

    let port_values: Vec<f64> = prices.iter().zip(&volumes).map(|(s, w)| s * w).collect();
    let m = moment_set(&AlignedSeries::new("P", port_values, volumes)?)?;
    Ok(GeneratedData {
        spec: spec.clone(),
        series,
        portfolio,
        calibration: Calibration {
            sigma_volume,
            sigma_price: draw.sigma_price,
            mixing: rho,
            measured_price_cv: m.price_cv,
            measured_volume_cv: m.volume_cv,
            measured_a: m.covariance_coefficient(),
        },
    })
}

fn security_name(k: usize, total: usize) -> String {
    let width = total.to_string().len();
    format!("S{:0width$}", k + 1)
}

type Split = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Split portfolio volume W and value sW of each bucket across securities.
/// Volume shares come from softmax-normalized log-normal noise (correlated
/// across securities when a matrix is given); security prices scatter
/// around s while keeping the bucket value exact.
fn split(
    spec: &GeneratorSpec,
    normals: &mut Normals,
    prices: &[f64],
    volumes: &[f64],
) -> Result<Split> {
    let j = spec.securities;
    let n = prices.len();
    if j == 1 {
        let values = prices.iter().zip(volumes).map(|(s, w)| s * w).collect();
        return Ok((vec![values], vec![volumes.to_vec()]));
    }
    let chol = match &spec.volume_corr_matrix {
        None => None,
        Some(m) => {
            let mat = DMatrix::from_fn(j, j, |a, b| m[a][b]);
            let c = mat.cholesky().ok_or_else(|| {
                Error::InvalidSpec("volume_corr_matrix is not positive definite".into())
            })?;
            Some(c.l())
        }
    };
    let d = spec.split_dispersion;
    let mut values = vec![Vec::with_capacity(n); j];
    let mut vols = vec![Vec::with_capacity(n); j];
    for i in 0..n {
        let raw = normals.draw(j);
        let eta: Vec<f64> = match &chol {
            None => raw,
            Some(l) => (0..j)
                .map(|a| sum((0..=a).map(|b| l[(a, b)] * raw[b])))
                .collect(),
        };
        let weights: Vec<f64> = eta.iter().map(|e| exp(d * e)).collect();
        let total = sum(weights.iter().copied());
        let shares: Vec<f64> = weights.iter().map(|w| w / total).collect();

        let scatter: Vec<f64> = normals.draw(j).iter().map(|e| exp(d * e)).collect();
        let norm = sum(shares.iter().zip(&scatter).map(|(x, m)| x * m));
        for k in 0..j {
            let u = volumes[i] * shares[k];
            let p = prices[i] * scatter[k] / norm;
            vols[k].push(u);
            values[k].push(p * u);
        }
    }
    Ok((values, vols))
}

/// Four-bucket series with exactly prescribed moments: value CV `psi`,
/// volume CV `chi` and φ = a·psi·chi, built from two orthonormal contrasts.
pub fn controlled_moments(
    psi: f64,
    a: f64,
    chi: f64,
    mean_value: f64,
    mean_volume: f64,
) -> Result<AlignedSeries> {
    if !(a.abs() <= 1.0) || !(psi >= 0.0) || !(chi >= 0.0) {
        return Err(Error::DomainError(format!(
            "need |a| <= 1 and nonnegative CVs, got a = {a}"
        )));
    }
    const E1: [f64; 4] = [1.0, -1.0, 1.0, -1.0];
    const E2: [f64; 4] = [1.0, 1.0, -1.0, -1.0];
    let b = sqrt(1.0 - a * a);
    let volumes: Vec<f64> = E1.iter().map(|e| mean_volume * (1.0 + chi * e)).collect();
    let values: Vec<f64> = E1
        .iter()
        .zip(E2)
        .map(|(e1, e2)| mean_value * (1.0 + psi * (a * e1 + b * e2)))
        .collect();
    if values.iter().chain(&volumes).any(|x| !(*x > 0.0)) {
        return Err(Error::InfeasibleTargets(format!(
            "ψ = {psi}, χ = {chi}, a = {a} give a nonpositive bucket"
        )));
    }
    AlignedSeries::new("C", values, volumes)
}
