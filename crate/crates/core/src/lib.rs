//! Market-based variance of portfolio returns computed from trade value and
//! volume series, next to the classical Markowitz variance.
//!
//! The pipeline: [`trade_model`] validates ticks and sums them into a bucket
//! grid, [`aggregation`] rescales each security to the held share counts and
//! adds them into one portfolio series, [`moments`] and [`variance`] derive
//! the variances and their expansion in the volume CV, and [`decomposition`]
//! splits the portfolio quantities by security. [`report`] runs all of it.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod decomposition;
pub mod error;
pub mod io;
pub mod moments;
pub mod report;
pub mod sum;
pub mod synthetic;
pub mod trade_model;
pub mod variance;

pub use error::{Error, Result};
pub use report::{AnalyzeOptions, ReportDocument, WindowParams};
pub use synthetic::GeneratorSpec;
pub use trade_model::{
    AlignMode, AlignedSeries, Alignment, AveragingWindow, Holding, PortfolioSpec, SecurityId,
    TradeSeries, TradeTick,
};
pub use variance::{Regime, RegimeThresholds};
