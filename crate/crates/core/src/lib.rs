//! Impact-coupled experimental asset market: price engine, bot traders,
//! session analysis and risk-attitude estimation.

pub mod agents;
pub mod analysis;
pub mod market;
pub mod numerics;
pub mod risk;

pub use agents::{Roster, RosterEntry, StrategySpec};
pub use analysis::{analyze_sessions, AnalysisOptions, AnalysisReport};
pub use market::{Action, Decision, Market, MarketConfig, Position, RoundRecord, SessionLog};
pub use numerics::RngStream;
pub use risk::{fit_risk_mle, LotteryMenu, LotteryResponse, RiskEstimate, RiskFitOptions};
