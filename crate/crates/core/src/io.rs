//! Trade files (CSV or JSON lines) and portfolio files (TOML).
//!
//! A trade record has `time`, `security`, `volume` and either `value` or
//! `price`. Times are epoch seconds or ISO-8601 timestamps; one file uses one
//! form throughout. Timestamps without an offset are read as UTC.
//!
//! ```toml
//! composition_time = "2024-03-01T10:00:00Z"
//!
//! [[holding]]
//! security = "AAA"
//! shares = 1200
//! reference_price = 41.5
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthetic::GeneratorSpec;
use crate::trade_model::{Holding, PortfolioSpec, SecurityId, TradeTick};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TradeFormat {
    Csv,
    JsonLines,
}

impl TradeFormat {
    /// JSON lines for `.jsonl` / `.ndjson`, CSV otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson") => TradeFormat::JsonLines,
            _ => TradeFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimeForm {
    Epoch,
    Iso,
}

/// Epoch seconds or an ISO-8601 timestamp, as seconds since the epoch.
pub fn parse_time(text: &str) -> Result<f64> {
    parse_time_form(text)
        .map(|(t, _)| t)
        .map_err(|message| Error::Parse { line: 0, message })
}

fn parse_time_form(text: &str) -> std::result::Result<(f64, TimeForm), String> {
    let text = text.trim();
    if let Ok(t) = text.parse::<f64>() {
        if !t.is_finite() {
            return Err(format!("non-finite time {text:?}"));
        }
        return Ok((t, TimeForm::Epoch));
    }
    let seconds = |dt: NaiveDateTime| {
        let utc = dt.and_utc();
        utc.timestamp() as f64 + f64::from(utc.timestamp_subsec_nanos()) * 1e-9
    };
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Ok((seconds(dt.naive_utc()), TimeForm::Iso));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(text, fmt) {
            return Ok((seconds(dt), TimeForm::Iso));
        }
    }
    Err(format!("unrecognized time {text:?}"))
}

/// A duration in seconds, optionally suffixed `s`, `m`, `h` or `d`.
pub fn parse_duration(text: &str) -> Result<f64> {
    let text = text.trim();
    let (number, unit) = match text.char_indices().last() {
        Some((i, 's')) => (&text[..i], 1.0),
        Some((i, 'm')) => (&text[..i], 60.0),
        Some((i, 'h')) => (&text[..i], 3600.0),
        Some((i, 'd')) => (&text[..i], 86400.0),
        _ => (text, 1.0),
    };
    match number.trim().parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v * unit),
        _ => Err(Error::Parse {
            line: 0,
            message: format!("invalid duration {text:?}"),
        }),
    }
}

struct TickBuilder {
    form: Option<TimeForm>,
}

impl TickBuilder {
    fn time(&mut self, line: usize, text: &str) -> Result<f64> {
        let (t, form) = parse_time_form(text).map_err(|message| Error::Parse { line, message })?;
        match self.form {
            None => self.form = Some(form),
            Some(f) if f != form => {
                return Err(Error::Parse {
                    line,
                    message: "mixed epoch and ISO-8601 times".into(),
                })
            }
            _ => {}
        }
        Ok(t)
    }
}

fn number(line: usize, field: &str, text: &str) -> Result<f64> {
    text.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("{field}: not a number {text:?}"),
    })
}

pub fn parse_trades_csv(text: &str) -> Result<Vec<TradeTick>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let missing = |name: &str| Error::Parse {
        line: 1,
        message: format!("missing column {name}"),
    };
    let time = column("time").ok_or_else(|| missing("time"))?;
    let security = column("security").ok_or_else(|| missing("security"))?;
    let volume = column("volume").ok_or_else(|| missing("volume"))?;
    let amount = match (column("value"), column("price")) {
        (Some(v), None) => (v, false),
        (None, Some(p)) => (p, true),
        (Some(_), Some(_)) => {
            return Err(Error::Parse {
                line: 1,
                message: "both value and price columns present".into(),
            })
        }
        (None, None) => return Err(missing("value or price")),
    };

    let mut builder = TickBuilder { form: None };
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let t = builder.time(line, &record[time])?;
        let u = number(line, "volume", &record[volume])?;
        let x = number(
            line,
            if amount.1 { "price" } else { "value" },
            &record[amount.0],
        )?;
        let id = record[security].to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty security".into(),
            });
        }
        out.push(if amount.1 {
            TradeTick::from_price(t, id, x, u)
        } else {
            TradeTick::new(t, id, x, u)
        });
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTime {
    Number(f64),
    Text(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTick {
    time: RawTime,
    security: String,
    volume: f64,
    #[serde(default)]
    value: Option<f64>,
    #[serde(default)]
    price: Option<f64>,
}

pub fn parse_trades_jsonl(text: &str) -> Result<Vec<TradeTick>> {
    let mut builder = TickBuilder { form: None };
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let r: RawTick = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let t = match r.time {
            RawTime::Number(t) => builder.time(line, &t.to_string())?,
            RawTime::Text(s) => builder.time(line, &s)?,
        };
        out.push(match (r.value, r.price) {
            (Some(v), None) => TradeTick::new(t, r.security, v, r.volume),
            (None, Some(p)) => TradeTick::from_price(t, r.security, p, r.volume),
            _ => {
                return Err(Error::Parse {
                    line,
                    message: "need exactly one of value or price".into(),
                })
            }
        });
    }
    Ok(out)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub fn read_trades(path: &Path) -> Result<Vec<TradeTick>> {
    let text = read_text(path)?;
    match TradeFormat::from_path(path) {
        TradeFormat::Csv => parse_trades_csv(&text),
        TradeFormat::JsonLines => parse_trades_jsonl(&text),
    }
}

/// CSV with columns `time,security,value,volume`, numbers in shortest
/// round-trip form.
pub fn write_trades_csv<W: Write>(out: W, ticks: &[TradeTick]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["time", "security", "value", "volume"])
        .map_err(io)?;
    for t in ticks {
        w.write_record([
            t.time.to_string(),
            t.security.to_string(),
            t.value.to_string(),
            t.volume.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPortfolio {
    composition_time: RawTime,
    holding: Vec<RawHolding>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHolding {
    security: String,
    shares: f64,
    reference_price: f64,
}

#[derive(Serialize)]
struct PortfolioOut<'a> {
    composition_time: f64,
    holding: &'a [RawHolding],
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

pub fn parse_portfolio(text: &str) -> Result<PortfolioSpec> {
    let raw: RawPortfolio = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let t0 = match raw.composition_time {
        RawTime::Number(t) => t,
        RawTime::Text(s) => parse_time(&s)?,
    };
    PortfolioSpec::new(
        t0,
        raw.holding
            .into_iter()
            .map(|h| Holding {
                security: SecurityId::new(h.security),
                shares: h.shares,
                reference_price: h.reference_price,
            })
            .collect(),
    )
}

pub fn read_portfolio(path: &Path) -> Result<PortfolioSpec> {
    parse_portfolio(&read_text(path)?)
}

pub fn parse_generator_spec(text: &str) -> Result<GeneratorSpec> {
    toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })
}

pub fn read_generator_spec(path: &Path) -> Result<GeneratorSpec> {
    parse_generator_spec(&read_text(path)?)
}

pub fn portfolio_to_toml(spec: &PortfolioSpec) -> String {
    let holding: Vec<RawHolding> = spec
        .holdings()
        .iter()
        .map(|h| RawHolding {
            security: h.security.to_string(),
            shares: h.shares,
            reference_price: h.reference_price,
        })
        .collect();
    toml::to_string(&PortfolioOut {
        composition_time: spec.composition_time(),
        holding: &holding,
    })
    .expect("portfolio serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_values_and_prices() {
        let a = parse_trades_csv("time,security,value,volume\n0,A,10,5\n1,B,3,1\n").unwrap();
        assert_eq!(a[0], TradeTick::new(0.0, "A", 10.0, 5.0));
        let b = parse_trades_csv("security,price,volume,time\nA,2,5,0\n").unwrap();
        assert_eq!(b[0], TradeTick::new(0.0, "A", 10.0, 5.0));
    }

    #[test]
    fn csv_errors_carry_line() {
        match parse_trades_csv("time,security,value,volume\n0,A,1,1\n1,A,x,1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_trades_csv("time,security,volume\n0,A,1\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn iso_times() {
        let t = parse_trades_csv(
            "time,security,value,volume\n1970-01-01T00:01:00Z,A,1,1\n1970-01-01T00:01:30.5,A,1,1\n",
        )
        .unwrap();
        assert_eq!(t[0].time, 60.0);
        assert_eq!(t[1].time, 90.5);
        assert_eq!(parse_time("1970-01-01T01:00:00+01:00").unwrap(), 0.0);
    }

    #[test]
    fn mixed_time_forms_rejected() {
        assert!(matches!(
            parse_trades_csv("time,security,value,volume\n0,A,1,1\n1970-01-01T00:00:01Z,A,1,1\n"),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn jsonl() {
        let t = parse_trades_jsonl(
            "{\"time\": 0, \"security\": \"A\", \"value\": 4, \"volume\": 2}\n\n{\"time\": 1.5, \"security\": \"A\", \"price\": 3, \"volume\": 2}\n",
        )
        .unwrap();
        assert_eq!(t[1], TradeTick::new(1.5, "A", 6.0, 2.0));
        assert!(matches!(
            parse_trades_jsonl("{\"time\": 0}"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("90").unwrap(), 90.0);
        assert_eq!(parse_duration("1.5m").unwrap(), 90.0);
        assert_eq!(parse_duration("2h").unwrap(), 7200.0);
        assert_eq!(parse_duration("1d").unwrap(), 86400.0);
        assert!(parse_duration("-3s").is_err());
        assert!(parse_duration("abc").is_err());
    }

    #[test]
    fn portfolio_round_trip() {
        let text = "composition_time = 5\n\n[[holding]]\nsecurity = \"A\"\nshares = 4\nreference_price = 1.5\n";
        let spec = parse_portfolio(text).unwrap();
        assert_eq!(spec.composition_time(), 5.0);
        assert_eq!(spec.holdings()[0].shares, 4.0);
        assert_eq!(parse_portfolio(&portfolio_to_toml(&spec)).unwrap(), spec);
    }

    #[test]
    fn portfolio_errors() {
        assert!(matches!(
            parse_portfolio("composition_time = 0\n[[holding]]\nsecurity = \"A\"\nshares = \"x\"\nreference_price = 1\n"),
            Err(Error::Parse { line: 4, .. })
        ));
        assert!(matches!(
            parse_portfolio("composition_time = 0\n[[holding]]\nsecurity = \"A\"\nshares = 0\nreference_price = 1\n"),
            Err(Error::InvalidPortfolio(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let ticks = vec![
            TradeTick::new(0.0, "A", 0.1 + 0.2, 3.0),
            TradeTick::new(2.5, "B", 1e-7, 7.0),
        ];
        let mut buf = Vec::new();
        write_trades_csv(&mut buf, &ticks).unwrap();
        assert_eq!(
            parse_trades_csv(std::str::from_utf8(&buf).unwrap()).unwrap(),
            ticks
        );
    }
}
