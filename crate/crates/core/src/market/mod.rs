//! Impact-coupled market engine.
//!
//! Each round every trader is either fully IN (holding shares) or fully OUT
//! (holding cash). Orders placed in round `t` move the price through the
//! collective impact term and execute at the impacted price `p_{t+1}`.

mod config;
mod engine;
mod log;
mod state;
mod wealth;

use thiserror::Error;

pub use config::MarketConfig;
pub use engine::{
    compute_impact, draw_end_time, liquidate, run_session, settle_round, step_price, Agent, AgentError, AgentView,
    Decision, Market, Order,
};
pub use log::{read_log, read_log_str, write_csv, write_log, write_log_string, LogError, SCHEMA_VERSION};
pub use state::{Action, Liquidation, Position, RoundRecord, SessionLog, TraderRecord, TraderState};
pub use wealth::{exact_expected_wealth, expected_wealth, most_probable_wealth};

use crate::numerics::NumericsError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    #[error("invalid market config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} decisions, got {got}")]
    DecisionCount { expected: usize, got: usize },
    #[error("session already ended at round {0}")]
    SessionEnded(u32),
    #[error("session still running at round {0}")]
    SessionRunning(u32),
    #[error(transparent)]
    Noise(#[from] NumericsError),
}
