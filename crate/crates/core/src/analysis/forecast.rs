use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::market::{Action, Position, SessionLog};
use crate::numerics::stats::ols_line;
use crate::numerics::{fit_power_tail, mann_whitney_p, TailFit};

pub const MIN_FIT_OBS: usize = 5;
pub const MIN_FITS_PER_STATE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionState {
    Buy,
    Sell,
    HoldCash,
    HoldShares,
}

impl ActionState {
    pub const ALL: [ActionState; 4] = [ActionState::Buy, ActionState::Sell, ActionState::HoldCash, ActionState::HoldShares];

    /// State of a trader given the executed action and the position after it.
    pub fn of(action: Action, position_after: Position) -> Self {
        match (action, position_after) {
            (Action::Buy, _) => ActionState::Buy,
            (Action::Sell, _) => ActionState::Sell,
            (Action::None, Position::Out) => ActionState::HoldCash,
            (Action::None, Position::In) => ActionState::HoldShares,
        }
    }
}

/// `r_hat(t+1) = omega0 + omega1 r(t)` fitted by least squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastFit {
    pub trader_id: usize,
    /// `None` for the fit over all rounds.
    pub action_state: Option<ActionState>,
    pub omega0: f64,
    pub omega1: f64,
    pub n_obs: usize,
}

/// One forecast: the return observed before it and the return it predicts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastObs {
    pub t: u32,
    pub trader_id: usize,
    pub state: ActionState,
    pub last_return: f64,
    pub expected_return: f64,
}

/// All logged forecasts from round 1 on (round 0 has no past return).
pub fn forecast_observations(log: &SessionLog) -> Vec<ForecastObs> {
    let prices = log.prices();
    log.rounds
        .iter()
        .filter(|r| r.t > 0)
        .flat_map(|r| {
            let t = r.t as usize;
            let last_return = libm::log(prices[t] / prices[t - 1]);
            let p_t = prices[t];
            r.per_trader.iter().filter_map(move |tr| {
                tr.forecast.map(|f| ForecastObs {
                    t: r.t,
                    trader_id: tr.trader_id,
                    state: ActionState::of(tr.action, tr.position_after),
                    last_return,
                    expected_return: libm::log(f / p_t),
                })
            })
        })
        .collect()
}

pub fn fit_forecasts(
    log: &SessionLog,
    trader: usize,
    state: Option<ActionState>,
) -> Result<ForecastFit, AnalysisError> {
    if trader >= log.trader_count() {
        return Err(AnalysisError::UnknownTrader(trader));
    }
    let obs: Vec<ForecastObs> = forecast_observations(log)
        .into_iter()
        .filter(|o| o.trader_id == trader && state.is_none_or(|s| o.state == s))
        .collect();
    fit_observations(&obs, trader, state)
}

pub fn fit_observations(
    obs: &[ForecastObs],
    trader: usize,
    state: Option<ActionState>,
) -> Result<ForecastFit, AnalysisError> {
    if obs.len() < MIN_FIT_OBS {
        return Err(AnalysisError::InsufficientData(format!(
            "trader {trader}: {} forecasts, need {MIN_FIT_OBS}",
            obs.len()
        )));
    }
    let xs: Vec<f64> = obs.iter().map(|o| o.last_return).collect();
    let ys: Vec<f64> = obs.iter().map(|o| o.expected_return).collect();
    let line = ols_line(&xs, &ys)?;
    Ok(ForecastFit {
        trader_id: trader,
        action_state: state,
        omega0: line.intercept,
        omega1: line.slope,
        n_obs: obs.len(),
    })
}

/// Every fit with enough observations, per trader and per state.
pub fn fit_all_forecasts(log: &SessionLog) -> Vec<ForecastFit> {
    let obs = forecast_observations(log);
    let mut fits = Vec::new();
    for trader in 0..log.trader_count() {
        let mine: Vec<ForecastObs> = obs.iter().filter(|o| o.trader_id == trader).copied().collect();
        for state in ActionState::ALL {
            let sub: Vec<ForecastObs> = mine.iter().filter(|o| o.state == state).copied().collect();
            if let Ok(fit) = fit_observations(&sub, trader, Some(state)) {
                fits.push(fit);
            }
        }
    }
    fits
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitParam {
    Omega0,
    Omega1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: ActionState,
    pub b: ActionState,
    pub n_a: usize,
    pub n_b: usize,
    /// `None` when either state has fewer than three fits.
    pub p_value: Option<f64>,
}

/// Mann-Whitney p-values of the fitted parameter between every pair of states.
pub fn compare_fit_distributions(fits: &[ForecastFit], param: FitParam) -> Vec<PairTest> {
    let values = |s: ActionState| -> Vec<f64> {
        fits.iter()
            .filter(|f| f.action_state == Some(s))
            .map(|f| match param {
                FitParam::Omega0 => f.omega0,
                FitParam::Omega1 => f.omega1,
            })
            .collect()
    };
    let mut out = Vec::with_capacity(6);
    for (k, &a) in ActionState::ALL.iter().enumerate() {
        for &b in &ActionState::ALL[k + 1..] {
            let (va, vb) = (values(a), values(b));
            let p_value = (va.len() >= MIN_FITS_PER_STATE && vb.len() >= MIN_FITS_PER_STATE)
                .then(|| mann_whitney_p(&va, &vb).ok())
                .flatten();
            out.push(PairTest {
                a,
                b,
                n_a: va.len(),
                n_b: vb.len(),
                p_value,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TailSide {
    Positive,
    Negative,
}

/// Power-law fit of the absolute expected returns of one sign.
pub fn expectation_tails(forecast_returns: &[f64], side: TailSide) -> Result<TailFit, AnalysisError> {
    let tail: Vec<f64> = forecast_returns
        .iter()
        .filter(|&&r| match side {
            TailSide::Positive => r > 0.0,
            TailSide::Negative => r < 0.0,
        })
        .map(|r| r.abs())
        .collect();
    Ok(fit_power_tail(&tail)?)
}
