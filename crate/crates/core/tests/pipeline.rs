//! End-to-end runs on small inputs whose results were worked out in exact
//! rational arithmetic and frozen here.

use tradevar_core::report::{analyze_ticks, MarkowitzError};
use tradevar_core::{
    AlignMode, AnalyzeOptions, Error, Holding, PortfolioSpec, RegimeThresholds, TradeTick,
    WindowParams,
};

fn spec(holdings: &[(&str, f64, f64)]) -> PortfolioSpec {
    PortfolioSpec::new(
        0.0,
        holdings
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

fn whole(n: usize) -> AnalyzeOptions {
    AnalyzeOptions {
        window: WindowParams::WholeFile,
        buckets: n,
        mode: AlignMode::Strict,
        thresholds: RegimeThresholds::default(),
    }
}

fn ticks(security: &str, values: &[f64], volumes: &[f64]) -> Vec<TradeTick> {
    values
        .iter()
        .zip(volumes)
        .enumerate()
        .map(|(i, (&c, &u))| TradeTick::new(i as f64, security, c, u))
        .collect()
}

fn assert_rel(actual: f64, expected: f64, tol: f64) {
    let scale = expected.abs().max(1e-300);
    assert!(
        (actual - expected).abs() <= tol * scale,
        "{actual} vs {expected}"
    );
}

#[test]
fn single_security_four_buckets() {
    let t = ticks("A", &[3.0, 8.0, 2.0, 5.0], &[1.0, 2.0, 1.0, 4.0]);
    let d = analyze_ticks(t, &spec(&[("A", 8.0, 2.0)]), &whole(4)).unwrap();
    // Φ = 21/16, Θ = 21/64, Θ_M = 275/1024, μ = 7/27
    assert_rel(d.variance.price_variance, 1.3125, 1e-14);
    assert_rel(d.variance.return_variance.left, 0.328125, 1e-14);
    assert_rel(d.variance.return_variance.right, 0.328125, 1e-14);
    assert_rel(d.variance.markowitz_variance, 0.2685546875, 1e-14);
    assert_rel(d.variance.mu, 7.0 / 27.0, 1e-14);
    assert_rel(d.moments.chi * d.moments.chi, 0.375, 1e-14);
    assert_rel(d.moments.phi, 5.0 / 36.0, 1e-14);
    assert_rel(d.moments.psi0, 0.4044664378482195, 1e-14);
    assert_rel(d.portfolio.vwap, 2.25, 1e-15);
    assert_eq!(d.portfolio.price_t0, 2.0);
    assert_eq!(d.divergence.markowitz, MarkowitzError::Underestimate);
    assert_rel(d.divergence.ratio.unwrap(), 336.0 / 275.0, 1e-14);
}

#[test]
fn two_securities_three_buckets() {
    let mut t = ticks("A", &[2.0, 6.0, 3.0], &[1.0, 2.0, 1.0]);
    t.extend(ticks("B", &[10.0, 4.0, 9.0], &[2.0, 2.0, 3.0]));
    let sp = spec(&[("A", 8.0, 2.5), ("B", 14.0, 3.0)]);
    let d = analyze_ticks(t, &sp, &whole(3)).unwrap();

    assert_rel(d.portfolio.price_t0, 31.0 / 11.0, 1e-15);
    assert_rel(d.portfolio.vwap, 34.0 / 11.0, 1e-15);
    assert_rel(d.variance.price_variance, 1592.0 / 4961.0, 1e-13);
    assert_rel(d.variance.return_variance.left, 1592.0 / 39401.0, 1e-13);
    assert_rel(d.variance.markowitz_variance, 847.0 / 17298.0, 1e-13);
    assert_rel(d.moments.phi, -1.0 / 187.0, 1e-13);
    assert_eq!(d.divergence.markowitz, MarkowitzError::Overestimate);

    let dec = &d.decomposition;
    assert_rel(dec.share_weights[0], 4.0 / 11.0, 1e-15);
    assert_rel(dec.investment_weights[1], 21.0 / 31.0, 1e-15);
    assert_rel(dec.chi[0], 0.3535533905932738, 1e-14);
    assert_rel(dec.chi[1], 0.20203050891044214, 1e-14);
    assert_rel(dec.chi_matrix[0][1], -1.0 / 28.0, 1e-13);
    assert_rel(dec.chi_sq_check.left, 2.0 / 121.0, 1e-13);
    assert!(dec.chi_sq_check.relative_difference < 1e-12);
    assert_rel(dec.return_covariance[0][0], 8.0 / 225.0, 1e-13);
    assert_rel(dec.return_covariance[0][1], -2.0 / 27.0, 1e-13);
    assert_rel(dec.return_covariance[1][1], 14.0 / 81.0, 1e-13);
    // the quadratic form is not the portfolio Θ_M once volumes move
    assert_rel(dec.quadratic_form_check.left, 146.0 / 2883.0, 1e-13);
    assert!(dec.quadratic_form_check.relative_difference > 1e-3);
    assert!(d.portfolio.vwap_check.relative_difference < 1e-14);
    assert!(d.portfolio.return_check.relative_difference < 1e-14);
    assert!(dec.return_factor_check.relative_difference < 1e-14);
}

#[test]
fn centered_window_ignores_outside_ticks() {
    let mut t = ticks("A", &[3.0, 8.0, 2.0, 5.0], &[1.0, 2.0, 1.0, 4.0]);
    t.push(TradeTick::new(10.0, "A", 100.0, 1.0));
    t.push(TradeTick::new(2.0, "Z", 1.0, 1.0));
    let opts = AnalyzeOptions {
        window: WindowParams::Centered {
            center: 1.5,
            width: 4.0,
        },
        ..whole(4)
    };
    let d = analyze_ticks(t, &spec(&[("A", 8.0, 2.0)]), &opts).unwrap();
    assert_rel(d.variance.price_variance, 1.3125, 1e-14);
}

#[test]
fn strict_and_lenient_empty_buckets() {
    let t = vec![
        TradeTick::new(0.0, "A", 2.0, 1.0),
        TradeTick::new(3.0, "A", 6.0, 1.0),
    ];
    let sp = spec(&[("A", 2.0, 2.0)]);
    assert!(matches!(
        analyze_ticks(t.clone(), &sp, &whole(4)),
        Err(Error::EmptyBucket { .. })
    ));
    let d = analyze_ticks(
        t,
        &sp,
        &AnalyzeOptions {
            mode: AlignMode::Lenient,
            ..whole(4)
        },
    )
    .unwrap();
    assert_eq!(d.window.effective_buckets, 2);
    assert_rel(d.variance.return_variance.left, 1.0, 1e-15);
}

#[test]
fn degenerate_window() {
    let t = vec![
        TradeTick::new(0.0, "A", 2.0, 1.0),
        TradeTick::new(0.05, "A", 6.0, 1.0),
    ];
    let d = analyze_ticks(
        t,
        &spec(&[("A", 2.0, 2.0)]),
        &AnalyzeOptions {
            window: WindowParams::Centered {
                center: 0.5,
                width: 1.0,
            },
            mode: AlignMode::Lenient,
            ..whole(10)
        },
    );
    assert!(matches!(d, Err(Error::DegenerateSeries(_))));
}

#[test]
fn unordered_input_gives_same_report() {
    let mut t = ticks("A", &[2.0, 6.0, 3.0], &[1.0, 2.0, 1.0]);
    t.extend(ticks("B", &[10.0, 4.0, 9.0], &[2.0, 2.0, 3.0]));
    let sp = spec(&[("A", 8.0, 2.5), ("B", 14.0, 3.0)]);
    let a = analyze_ticks(t.clone(), &sp, &whole(3)).unwrap();
    t.reverse();
    let b = analyze_ticks(t, &sp, &whole(3)).unwrap();
    assert_eq!(a, b);
}
