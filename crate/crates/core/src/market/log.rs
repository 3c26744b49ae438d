//! Line-delimited session log.
//!
//! ```text
//! {"record":"header","schema_version":1,"config":{...}}
//! {"record":"round","t":0,"eta":...,"impact":...,"price":...,...}
//! ...
//! {"record":"footer","end_round":...,"bare_prices":[...],"liquidation":[...]}
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Liquidation, MarketConfig, RoundRecord, SessionLog};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    SchemaMismatch { found: u32 },
    #[error("log is incomplete: {0}")]
    Incomplete(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header { schema_version: u32, config: MarketConfig },
    Round(RoundRecord),
    Footer { end_round: u32, bare_prices: Vec<f64>, liquidation: Vec<Liquidation> },
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LineRef<'a> {
    Header { schema_version: u32, config: &'a MarketConfig },
    Round(&'a RoundRecord),
    Footer { end_round: u32, bare_prices: &'a [f64], liquidation: &'a [Liquidation] },
}

pub fn write_log<W: Write>(log: &SessionLog, mut out: W) -> Result<(), LogError> {
    let mut emit = |line: &LineRef<'_>| -> Result<(), LogError> {
        serde_json::to_writer(&mut out, line).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        Ok(())
    };
    emit(&LineRef::Header {
        schema_version: SCHEMA_VERSION,
        config: &log.config,
    })?;
    for r in &log.rounds {
        emit(&LineRef::Round(r))?;
    }
    emit(&LineRef::Footer {
        end_round: log.end_round,
        bare_prices: &log.bare_prices,
        liquidation: &log.liquidation,
    })
}

pub fn write_log_string(log: &SessionLog) -> String {
    let mut buf = Vec::new();
    write_log(log, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn read_log_str(text: &str) -> Result<SessionLog, LogError> {
    read_log(text.as_bytes())
}

pub fn read_log<R: BufRead>(input: R) -> Result<SessionLog, LogError> {
    let mut config = None;
    let mut rounds = Vec::new();
    let mut footer = None;
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if footer.is_some() {
            return Err(LogError::Corrupt {
                line: line_no,
                message: "content after footer".into(),
            });
        }
        // Check the version before the strict parse so a future schema reports
        // a version mismatch rather than a field error.
        if config.is_none() {
            let raw: serde_json::Value = serde_json::from_str(&line).map_err(|e| LogError::Corrupt {
                line: line_no,
                message: e.to_string(),
            })?;
            if let Some(v) = raw.get("schema_version").and_then(|v| v.as_u64()) {
                if v != u64::from(SCHEMA_VERSION) {
                    return Err(LogError::SchemaMismatch { found: v as u32 });
                }
            }
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| LogError::Corrupt {
            line: line_no,
            message: e.to_string(),
        })?;
        match (parsed, config.is_some()) {
            (Line::Header { config: c, .. }, false) => config = Some(c),
            (Line::Header { .. }, true) => {
                return Err(LogError::Corrupt {
                    line: line_no,
                    message: "duplicate header".into(),
                })
            }
            (_, false) => {
                return Err(LogError::Corrupt {
                    line: line_no,
                    message: "first record must be the header".into(),
                })
            }
            (Line::Round(r), true) => {
                if r.t as usize != rounds.len() {
                    return Err(LogError::Corrupt {
                        line: line_no,
                        message: format!("round {} out of sequence (expected {})", r.t, rounds.len()),
                    });
                }
                rounds.push(r);
            }
            (Line::Footer { end_round, bare_prices, liquidation }, true) => {
                footer = Some((end_round, bare_prices, liquidation));
            }
        }
    }
    let config = config.ok_or_else(|| LogError::Incomplete("missing header".into()))?;
    let (end_round, bare_prices, liquidation) = footer.ok_or_else(|| LogError::Incomplete("missing footer".into()))?;
    Ok(SessionLog {
        config,
        rounds,
        end_round,
        bare_prices,
        liquidation,
    })
}

#[derive(Serialize)]
struct CsvRow {
    t: u32,
    eta: f64,
    impact: f64,
    price: f64,
    n_active: usize,
    buy_volume: f64,
    sell_volume: f64,
    trader_id: usize,
    action: super::Action,
    position_after: super::Position,
    cash_after: f64,
    shares_after: f64,
    forecast: Option<f64>,
}

/// One row per (round, trader).
pub fn write_csv<W: Write>(log: &SessionLog, out: W) -> Result<(), LogError> {
    let mut w = csv::Writer::from_writer(out);
    for r in &log.rounds {
        for tr in &r.per_trader {
            w.serialize(CsvRow {
                t: r.t,
                eta: r.eta,
                impact: r.impact,
                price: r.price,
                n_active: r.n_active,
                buy_volume: r.buy_volume,
                sell_volume: r.sell_volume,
                trader_id: tr.trader_id,
                action: tr.action,
                position_after: tr.position_after,
                cash_after: tr.cash_after,
                shares_after: tr.shares_after,
                forecast: tr.forecast,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}
