use crate::market::{Action, Agent, AgentError, AgentView, Decision, Position};
use crate::numerics::rng::streams;
use crate::numerics::RngStream;

pub const DEFAULT_REENTRY: f64 = 0.8;
pub const DEFAULT_BAND: f64 = 0.03;

/// Enter in round 0, then never trade.
pub fn decide_buy_and_hold(view: &AgentView<'_>) -> Decision {
    if view.round == 0 && view.state.position == Position::Out {
        Decision::act(Action::Buy)
    } else {
        Decision::default()
    }
}

/// Leave once mark-to-market wealth reaches `w_star`; come back below
/// `reentry * w_star`.
pub fn decide_threshold(view: &AgentView<'_>, w_star: f64, reentry: f64) -> Decision {
    let wealth = view.state.wealth(view.price());
    let action = match view.state.position {
        Position::In if wealth >= w_star => Action::Sell,
        Position::Out if wealth < reentry * w_star => Action::Buy,
        _ => Action::None,
    };
    Decision::act(action)
}

/// Linear expectation `r_hat = omega0 + omega1 r(t) + noise`, traded against:
/// buy on an expected fall, sell on an expected rise. Also forecasts
/// `p_t exp(r_hat)`.
pub fn decide_contrarian(view: &AgentView<'_>, omega0: f64, omega1: f64, band: f64, noise: f64) -> Decision {
    let Some(last) = view.last_return() else {
        return Decision::default();
    };
    let r_hat = omega0 + omega1 * last + noise;
    let action = match view.state.position {
        Position::Out if r_hat < -band => Action::Buy,
        Position::In if r_hat > band => Action::Sell,
        _ => Action::None,
    };
    Decision::act(action).with_forecast(view.price() * libm::exp(r_hat))
}

#[derive(Debug, Clone, Default)]
pub struct BuyAndHold;

impl Agent for BuyAndHold {
    fn decide(&mut self, view: &AgentView<'_>) -> Result<Decision, AgentError> {
        Ok(decide_buy_and_hold(view))
    }

    fn name(&self) -> &str {
        "buy_and_hold"
    }
}

#[derive(Debug, Clone)]
pub struct ThresholdAgent {
    pub w_star: f64,
    pub reentry: f64,
}

impl Agent for ThresholdAgent {
    fn decide(&mut self, view: &AgentView<'_>) -> Result<Decision, AgentError> {
        Ok(decide_threshold(view, self.w_star, self.reentry))
    }

    fn name(&self) -> &str {
        "threshold"
    }
}

#[derive(Debug, Clone)]
pub struct Contrarian {
    pub trader_id: usize,
    pub seed: u64,
    pub omega0: f64,
    pub omega1: f64,
    pub band: f64,
    /// Standard deviation of the expectation noise.
    pub forecast_noise: f64,
}

impl Contrarian {
    /// Expectation noise for round `t`, a pure function of (seed, trader, t).
    fn noise(&self, t: u32) -> f64 {
        if self.forecast_noise == 0.0 {
            return 0.0;
        }
        let mut rng = RngStream::at(self.seed, streams::AGENT_BASE + self.trader_id as u64, u64::from(t));
        self.forecast_noise * rng.standard_normal()
    }
}

impl Agent for Contrarian {
    fn decide(&mut self, view: &AgentView<'_>) -> Result<Decision, AgentError> {
        let noise = self.noise(view.round);
        Ok(decide_contrarian(view, self.omega0, self.omega1, self.band, noise))
    }

    fn name(&self) -> &str {
        "contrarian"
    }
}

/// Flips position with probability `rate` every round.
#[derive(Debug, Clone)]
pub struct Churner {
    pub trader_id: usize,
    pub seed: u64,
    pub rate: f64,
}

impl Agent for Churner {
    fn decide(&mut self, view: &AgentView<'_>) -> Result<Decision, AgentError> {
        let mut rng = RngStream::at(self.seed, streams::AGENT_BASE + self.trader_id as u64, u64::from(view.round));
        if !rng.bernoulli(self.rate) {
            return Ok(Decision::default());
        }
        Ok(Decision::act(match view.state.position {
            Position::In => Action::Sell,
            Position::Out => Action::Buy,
        }))
    }

    fn name(&self) -> &str {
        "churner"
    }
}
