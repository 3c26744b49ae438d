//! Paired-lottery risk elicitation: menu, responses, safe-choice summaries and
//! maximum-likelihood estimation of the power-expo utility with logit choice.

mod menu;
mod mle;
mod response;
mod summary;

use thiserror::Error;

pub use menu::{Lottery, LotteryMenu, LotteryPair, Outcome, Payoffs, Scale, ScaleFactors, DEFAULT_MENU_TOML, PAIRS};
pub use mle::{
    choice_probability, fit_risk_mle, log_likelihood, RiskEstimate, RiskFitOptions, RiskParams, ALPHA_BOUNDS,
    MIN_SUBJECTS, MU_BOUNDS, R_BOUNDS,
};
pub use response::{
    read_responses, risk_neutral_response, screen_consistent, synthesize_responses, write_responses,
    LotteryResponse,
};
pub use summary::{safe_choice_summary, SafeChoiceSummary, ScaleSummary, RISK_NEUTRAL_SAFE};

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("payoffs must be positive, got {0}")]
    InvalidPayoff(f64),
    #[error("lottery menu: {0}")]
    Menu(String),
    #[error("{found} subjects after screening, need {need}")]
    InsufficientSubjects { found: usize, need: usize },
    #[error("estimate on the search boundary ({}) at {best}, log-likelihood {log_likelihood}", parameters.join(", "))]
    Boundary { best: RiskParams, log_likelihood: f64, parameters: Vec<String> },
    #[error("no restart converged; best {best}, log-likelihood {log_likelihood}")]
    NotConverged { best: RiskParams, log_likelihood: f64 },
    #[error("response file: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
