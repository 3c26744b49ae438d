//! Bot strategies and the one-round utility comparisons behind them.

mod roster;
mod scenario;
mod strategies;
mod utility;

use thiserror::Error;

pub use roster::{Roster, RosterEntry, Seat, SellScenario, StrategySpec};
pub use scenario::{
    critical_threshold, expected_utility, Scenario, ThresholdCurve, ThresholdPoint, UtilityEstimate, MIN_MC_PATHS,
};
pub use strategies::{
    decide_buy_and_hold, decide_contrarian, decide_threshold, BuyAndHold, Churner, Contrarian, ThresholdAgent,
    DEFAULT_BAND, DEFAULT_REENTRY,
};
pub use utility::PowerExpoUtility;

use crate::numerics::NumericsError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentsError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid roster: {0}")]
    Roster(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
