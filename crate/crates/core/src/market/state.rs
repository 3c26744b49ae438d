use serde::{Deserialize, Serialize};

use super::MarketConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Position {
    In,
    Out,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Buy,
    Sell,
    #[default]
    None,
}

impl Action {
    /// Whether the action is legal from `position`.
    pub fn allowed_from(self, position: Position) -> bool {
        match self {
            Action::Buy => position == Position::Out,
            Action::Sell => position == Position::In,
            Action::None => true,
        }
    }

    /// Activity code: +1 buy, -1 sell, 0 inactive.
    pub fn theta(self) -> i8 {
        match self {
            Action::Buy => 1,
            Action::Sell => -1,
            Action::None => 0,
        }
    }
}

/// One trader's account. Either all cash (OUT) or all shares (IN).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraderState {
    pub trader_id: usize,
    pub cash: f64,
    pub shares: f64,
    pub position: Position,
}

impl TraderState {
    pub fn new(trader_id: usize, endowment: f64) -> Self {
        Self {
            trader_id,
            cash: endowment,
            shares: 0.0,
            position: Position::Out,
        }
    }

    /// Mark-to-market wealth at `price`.
    pub fn wealth(&self, price: f64) -> f64 {
        match self.position {
            Position::Out => self.cash,
            Position::In => self.shares * price,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraderRecord {
    pub trader_id: usize,
    /// Executed action; an illegal request is recorded as `NONE`.
    pub action: Action,
    pub position_after: Position,
    pub cash_after: f64,
    pub shares_after: f64,
    pub forecast: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u32,
    pub eta: f64,
    pub impact: f64,
    /// Price `p_{t+1}` at which this round's orders executed.
    pub price: f64,
    pub n_active: usize,
    pub buy_volume: f64,
    pub sell_volume: f64,
    pub per_trader: Vec<TraderRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Liquidation {
    pub trader_id: usize,
    pub wealth: f64,
    pub net: f64,
    /// Net earnings floored at zero.
    pub payout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub config: MarketConfig,
    pub rounds: Vec<RoundRecord>,
    pub end_round: u32,
    /// `p_0 ..= p_{t_F+1}` with the impact switched off under the same noise.
    pub bare_prices: Vec<f64>,
    pub liquidation: Vec<Liquidation>,
}

impl SessionLog {
    /// Realized prices `p_0 ..= p_{t_F+1}`.
    pub fn prices(&self) -> Vec<f64> {
        std::iter::once(self.config.initial_price)
            .chain(self.rounds.iter().map(|r| r.price))
            .collect()
    }

    pub fn etas(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.eta).collect()
    }

    pub fn trader_count(&self) -> usize {
        self.rounds.first().map_or(self.liquidation.len(), |r| r.per_trader.len())
    }

    pub fn final_price(&self) -> f64 {
        self.rounds.last().map_or(self.config.initial_price, |r| r.price)
    }
}
