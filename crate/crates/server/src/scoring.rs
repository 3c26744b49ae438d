//! Forecasting-game rewards, the lottery draw and the take-home payout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use impactlab::numerics::RngStream;
use impactlab::risk::{LotteryMenu, Scale, PAIRS};

/// 100 francs pay EUR 25.
pub const EUR_PER_FRANC: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastRule {
    /// Reward for an exact forecast, in francs.
    pub c_max: f64,
    /// Relative error at which the reward reaches zero.
    pub band: f64,
}

impl Default for ForecastRule {
    fn default() -> Self {
        Self { c_max: 0.5, band: 0.10 }
    }
}

impl ForecastRule {
    /// `max(0, c_max (1 - |f - p| / (band p)))`; a missing or non-positive
    /// forecast earns nothing.
    pub fn score(&self, forecast: Option<f64>, realized: f64) -> f64 {
        match forecast {
            Some(f) if f > 0.0 && f.is_finite() && realized > 0.0 => {
                (self.c_max * (1.0 - (f - realized).abs() / (self.band * realized))).max(0.0)
            }
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastScore {
    pub trader_id: usize,
    pub round: u32,
    pub forecast: Option<f64>,
    pub realized: f64,
    pub reward: f64,
}

/// One subject's result in one market session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEarnings {
    pub session_id: String,
    pub complete: bool,
    pub net_francs: f64,
    pub forecast_francs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LotteryDraw {
    pub scale_dice: u8,
    pub scale: Scale,
    pub pair_index: usize,
    pub risky: bool,
    pub high_outcome: bool,
    /// Paid in EUR as shown on the menu.
    pub payoff_eur: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payout {
    pub session_dice: u8,
    pub selected_session: String,
    pub net_francs: f64,
    /// Net market earnings floored at zero.
    pub market_francs: f64,
    pub forecast_francs: f64,
    pub lottery: Option<LotteryDraw>,
    pub total_eur: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PayoutError {
    #[error("payout needs two market sessions, got {0}")]
    SessionCount(usize),
    #[error("session {0} is not complete")]
    Incomplete(String),
    #[error("dice must show 1..=6, got {0}")]
    Dice(u8),
}

/// Dice 1-3 pays the first session of the pair, 4-6 the second. Subjects do
/// not owe losses; forecast rewards of the paid session are added.
pub fn compute_payout(
    sessions: &[SessionEarnings],
    dice: u8,
    lottery: Option<LotteryDraw>,
) -> Result<Payout, PayoutError> {
    if sessions.len() != 2 {
        return Err(PayoutError::SessionCount(sessions.len()));
    }
    if let Some(s) = sessions.iter().find(|s| !s.complete) {
        return Err(PayoutError::Incomplete(s.session_id.clone()));
    }
    if !(1..=6).contains(&dice) {
        return Err(PayoutError::Dice(dice));
    }
    let s = &sessions[usize::from(dice > 3)];
    let market_francs = s.net_francs.max(0.0);
    let lottery_eur = lottery.map_or(0.0, |l| l.payoff_eur);
    Ok(Payout {
        session_dice: dice,
        selected_session: s.session_id.clone(),
        net_francs: s.net_francs,
        market_francs,
        forecast_francs: s.forecast_francs,
        lottery,
        total_eur: (market_francs + s.forecast_francs) * EUR_PER_FRANC + lottery_eur,
    })
}

pub fn roll_dice(rng: &mut RngStream) -> u8 {
    1 + rng.below(6) as u8
}

/// A dice picks the paying scale (1-3 the low one), a ten-sided draw picks the
/// pair, and the chosen option's outcome is drawn.
pub fn draw_lottery(menu: &LotteryMenu, risky_choices: &[[bool; PAIRS]; 2], rng: &mut RngStream) -> LotteryDraw {
    let scale_dice = roll_dice(rng);
    let scale = if scale_dice <= 3 { Scale::X2 } else { Scale::X10 };
    let pair_index = 1 + rng.below(PAIRS);
    let pair = menu.pair(scale, pair_index);
    let risky = risky_choices[scale.index()][pair_index - 1];
    let lottery = if risky { pair.risky } else { pair.safe };
    let high_outcome = rng.bernoulli(lottery.outcomes[0].probability);
    let payoff_eur = lottery.outcomes[usize::from(!high_outcome)].payoff;
    LotteryDraw { scale_dice, scale, pair_index, risky, high_outcome, payoff_eur }
}
