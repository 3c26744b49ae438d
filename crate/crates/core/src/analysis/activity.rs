use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::market::{Action, Position, SessionLog};
use crate::numerics::stats::pearson;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActivityVariant {
    All,
    BuyOnly,
    SellOnly,
}

/// Trader-by-round activity codes, +1 buy, -1 sell, 0 inactive.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityMatrix {
    pub variant: ActivityVariant,
    /// Round index of each column.
    pub rounds: Vec<u32>,
    pub theta: Vec<Vec<i8>>,
}

impl ActivityMatrix {
    /// Activity from a session log. Round 0 (the common entry) is left out.
    pub fn from_log(log: &SessionLog, variant: ActivityVariant) -> Self {
        let n = log.trader_count();
        let kept: Vec<_> = log.rounds.iter().filter(|r| r.t > 0).collect();
        let theta = (0..n)
            .map(|i| {
                kept.iter()
                    .map(|r| filter_code(r.per_trader[i].action.theta(), variant))
                    .collect()
            })
            .collect();
        Self {
            variant,
            rounds: kept.iter().map(|r| r.t).collect(),
            theta,
        }
    }

    pub fn from_rows(theta: Vec<Vec<i8>>, variant: ActivityVariant) -> Result<Self, AnalysisError> {
        let t = theta.first().map_or(0, Vec::len);
        if theta.iter().any(|row| row.len() != t) {
            return Err(AnalysisError::InvalidInput("activity rows differ in length".into()));
        }
        if theta.iter().flatten().any(|&c| !(-1..=1).contains(&c)) {
            return Err(AnalysisError::InvalidInput("activity codes must be -1, 0 or +1".into()));
        }
        let theta = theta
            .into_iter()
            .map(|row| row.into_iter().map(|c| filter_code(c, variant)).collect())
            .collect();
        Ok(Self {
            variant,
            rounds: (1..=t as u32).collect(),
            theta,
        })
    }

    pub fn traders(&self) -> usize {
        self.theta.len()
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Keeps the columns for which `keep(column_index)` holds.
    pub fn select_columns<F: Fn(usize) -> bool>(&self, keep: F) -> Self {
        let cols: Vec<usize> = (0..self.len()).filter(|&c| keep(c)).collect();
        Self {
            variant: self.variant,
            rounds: cols.iter().map(|&c| self.rounds[c]).collect(),
            theta: self.theta.iter().map(|row| cols.iter().map(|&c| row[c]).collect()).collect(),
        }
    }
}

fn filter_code(code: i8, variant: ActivityVariant) -> i8 {
    match variant {
        ActivityVariant::All => code,
        ActivityVariant::BuyOnly => code.max(0),
        ActivityVariant::SellOnly => code.min(0),
    }
}

/// In/out indicator per trader and round (position after the round).
pub fn position_matrix(log: &SessionLog) -> Vec<Vec<bool>> {
    (0..log.trader_count())
        .map(|i| {
            log.rounds
                .iter()
                .map(|r| r.per_trader[i].position_after == Position::In)
                .collect()
        })
        .collect()
}

/// Fraction of the session's rounds in which the trader executed a trade.
pub fn activity_rate(log: &SessionLog, trader: usize) -> Result<f64, AnalysisError> {
    if trader >= log.trader_count() {
        return Err(AnalysisError::UnknownTrader(trader));
    }
    if log.rounds.len() < 2 {
        return Err(AnalysisError::InsufficientData("activity rate needs two or more rounds".into()));
    }
    let trades = log
        .rounds
        .iter()
        .filter(|r| r.per_trader[trader].action != Action::None)
        .count();
    Ok(trades as f64 / log.rounds.len() as f64)
}

/// Pearson correlation of final wealth and activity rate across traders.
pub fn wealth_activity_correlation(log: &SessionLog) -> Result<f64, AnalysisError> {
    let n = log.trader_count();
    if n < 3 {
        return Err(AnalysisError::InsufficientData("correlation needs three or more traders".into()));
    }
    let wealth: Vec<f64> = log.liquidation.iter().map(|l| l.wealth).collect();
    let rates = (0..n).map(|i| activity_rate(log, i)).collect::<Result<Vec<_>, _>>()?;
    pearson(&wealth, &rates).ok_or_else(|| AnalysisError::Degenerate("wealth or activity has zero variance".into()))
}
