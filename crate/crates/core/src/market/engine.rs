use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use super::{Action, Liquidation, MarketConfig, MarketError, Position, RoundRecord, SessionLog, TraderRecord, TraderState};
use crate::numerics::rng::streams;
use crate::numerics::{draw_student_t_unit, RngStream};

/// An order with its size in currency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Order {
    pub action: Action,
    pub size: f64,
}

/// Collective impact `I = (N_t / N) (B - S) / (B + S)`.
pub fn compute_impact(orders: &[Order], depth_n: usize) -> f64 {
    let (n_active, buy, sell) = order_totals(orders);
    if n_active == 0 || buy + sell <= 0.0 {
        return 0.0;
    }
    n_active as f64 / depth_n as f64 * (buy - sell) / (buy + sell)
}

fn order_totals(orders: &[Order]) -> (usize, f64, f64) {
    orders.iter().fold((0, 0.0, 0.0), |(n, b, s), o| match o.action {
        Action::Buy => (n + 1, b + o.size, s),
        Action::Sell => (n + 1, b, s + o.size),
        Action::None => (n, b, s),
    })
}

/// `p_{t+1} = p_t exp(m + s eta + I)`.
pub fn step_price(price: f64, config: &MarketConfig, eta: f64, impact: f64) -> f64 {
    price * libm::exp(config.m + config.s * eta + impact)
}

/// Executes each trader's action at `price_next`. Illegal actions (BUY while IN,
/// SELL while OUT) are treated as NONE; the executed actions are returned.
pub fn settle_round(states: &mut [TraderState], actions: &[Action], price_next: f64) -> Vec<Action> {
    states
        .iter_mut()
        .zip(actions)
        .map(|(st, &action)| {
            if !action.allowed_from(st.position) {
                warn!(trader = st.trader_id, ?action, position = ?st.position, "rejected action");
                return Action::None;
            }
            match action {
                Action::Buy => {
                    st.shares = st.cash / price_next;
                    st.cash = 0.0;
                    st.position = Position::In;
                }
                Action::Sell => {
                    st.cash = st.shares * price_next;
                    st.shares = 0.0;
                    st.position = Position::Out;
                }
                Action::None => {}
            }
            action
        })
        .collect()
}

/// Final wealth at `final_price`, without impact.
pub fn liquidate(states: &[TraderState], final_price: f64, endowment: f64) -> Vec<Liquidation> {
    states
        .iter()
        .map(|st| {
            let wealth = st.wealth(final_price);
            let net = wealth - endowment;
            Liquidation {
                trader_id: st.trader_id,
                wealth,
                net,
                payout: net.max(0.0),
            }
        })
        .collect()
}

/// Last round index `t_F`: `min_rounds` plus a geometric number of extra rounds
/// with success probability `1 - continuation`, capped at `max_rounds`.
pub fn draw_end_time(config: &MarketConfig, rng: &mut RngStream) -> u32 {
    if let Some(fixed) = config.fixed_end_round {
        return fixed;
    }
    let u = rng.uniform();
    let extra = (libm::log(u) / libm::log(config.continuation)).ceil().max(1.0);
    let total = f64::from(config.min_rounds) + extra;
    if total > f64::from(config.max_rounds) {
        warn!(drawn = total, cap = config.max_rounds, "end time capped");
        return config.max_rounds;
    }
    total as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    pub forecast: Option<f64>,
}

impl Decision {
    pub fn act(action: Action) -> Self {
        Self { action, forecast: None }
    }

    pub fn with_forecast(mut self, forecast: f64) -> Self {
        self.forecast = Some(forecast);
        self
    }
}

/// What a trader sees when deciding in round `round`.
#[derive(Debug, Clone, Copy)]
pub struct AgentView<'a> {
    pub round: u32,
    pub state: &'a TraderState,
    /// `p_0 ..= p_t`; the last entry is the current price.
    pub prices: &'a [f64],
    pub config: &'a MarketConfig,
}

impl AgentView<'_> {
    pub fn price(&self) -> f64 {
        *self.prices.last().expect("price history starts at p_0")
    }

    /// Most recent log return `ln(p_t / p_{t-1})`, if any.
    pub fn last_return(&self) -> Option<f64> {
        match self.prices {
            [.., a, b] => Some(libm::log(b / a)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("agent failed: {0}")]
pub struct AgentError(pub String);

pub trait Agent: Send {
    fn decide(&mut self, view: &AgentView<'_>) -> Result<Decision, AgentError>;

    fn name(&self) -> &str {
        "agent"
    }
}

/// Round-by-round market state machine.
#[derive(Debug, Clone)]
pub struct Market {
    config: MarketConfig,
    end_round: u32,
    traders: Vec<TraderState>,
    prices: Vec<f64>,
    bare_prices: Vec<f64>,
    rounds: Vec<RoundRecord>,
    noise: RngStream,
}

impl Market {
    pub fn new(config: MarketConfig) -> Result<Self, MarketError> {
        config.validate()?;
        let noise_seed = config.noise_seed();
        let end_round = draw_end_time(&config, &mut RngStream::new(noise_seed, streams::END_TIME));
        let traders = (0..config.depth_n)
            .map(|i| TraderState::new(i, config.endowment))
            .collect();
        Ok(Self {
            end_round,
            traders,
            prices: vec![config.initial_price],
            bare_prices: vec![config.initial_price],
            rounds: Vec::new(),
            noise: RngStream::new(noise_seed, streams::NOISE),
            config,
        })
    }

    pub fn config(&self) -> &MarketConfig {
        &self.config
    }

    /// Index of the next round to play.
    pub fn round(&self) -> u32 {
        self.rounds.len() as u32
    }

    pub fn end_round(&self) -> u32 {
        self.end_round
    }

    pub fn is_finished(&self) -> bool {
        self.round() > self.end_round
    }

    pub fn traders(&self) -> &[TraderState] {
        &self.traders
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn price(&self) -> f64 {
        *self.prices.last().expect("non-empty")
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn view(&self, trader: usize) -> AgentView<'_> {
        AgentView {
            round: self.round(),
            state: &self.traders[trader],
            prices: &self.prices,
            config: &self.config,
        }
    }

    /// Plays one round with one decision per trader.
    pub fn step(&mut self, decisions: &[Decision]) -> Result<&RoundRecord, MarketError> {
        if self.is_finished() {
            return Err(MarketError::SessionEnded(self.end_round));
        }
        if decisions.len() != self.traders.len() {
            return Err(MarketError::DecisionCount {
                expected: self.traders.len(),
                got: decisions.len(),
            });
        }
        let t = self.round();
        let p_t = self.price();
        let requested: Vec<Action> = decisions.iter().map(|d| d.action).collect();
        let legal: Vec<Action> = self
            .traders
            .iter()
            .zip(&requested)
            .map(|(st, &a)| if a.allowed_from(st.position) { a } else { Action::None })
            .collect();
        let orders: Vec<Order> = self
            .traders
            .iter()
            .zip(&legal)
            .map(|(st, &action)| Order {
                action,
                size: match action {
                    Action::Buy => st.cash,
                    Action::Sell => st.shares * p_t,
                    Action::None => 0.0,
                },
            })
            .collect();
        let (n_active, buy_volume, sell_volume) = order_totals(&orders);
        let impact = compute_impact(&orders, self.config.depth_n);

        let eta = draw_student_t_unit(&mut self.noise, self.config.noise_df, self.config.noise_cutoff)?;
        let price = step_price(p_t, &self.config, eta, impact);
        let bare = step_price(*self.bare_prices.last().expect("non-empty"), &self.config, eta, 0.0);

        let executed = settle_round(&mut self.traders, &requested, price);
        let per_trader = self
            .traders
            .iter()
            .zip(executed.iter().zip(&requested))
            .zip(decisions)
            .map(|((st, (&action, &asked)), d)| TraderRecord {
                trader_id: st.trader_id,
                action,
                position_after: st.position,
                cash_after: st.cash,
                shares_after: st.shares,
                forecast: d.forecast.filter(|f| f.is_finite() && *f > 0.0),
                rejected: action != asked,
            })
            .collect();

        self.prices.push(price);
        self.bare_prices.push(bare);
        self.rounds.push(RoundRecord {
            t,
            eta,
            impact,
            price,
            n_active,
            buy_volume,
            sell_volume,
            per_trader,
        });
        Ok(self.rounds.last().expect("just pushed"))
    }

    /// Liquidates at the last price and closes the log.
    pub fn finish(self) -> Result<SessionLog, MarketError> {
        if !self.is_finished() {
            return Err(MarketError::SessionRunning(self.round()));
        }
        let liquidation = liquidate(&self.traders, self.price(), self.config.endowment);
        Ok(SessionLog {
            config: self.config,
            rounds: self.rounds,
            end_round: self.end_round,
            bare_prices: self.bare_prices,
            liquidation,
        })
    }

    /// Re-runs a session from its config and the logged decisions.
    pub fn replay(log: &SessionLog) -> Result<SessionLog, MarketError> {
        let mut market = Market::new(log.config.clone())?;
        for record in &log.rounds {
            let decisions: Vec<Decision> = record
                .per_trader
                .iter()
                .map(|r| Decision {
                    action: r.action,
                    forecast: r.forecast,
                })
                .collect();
            market.step(&decisions)?;
        }
        market.finish()
    }
}

/// Runs a whole session with one agent per trader. A failing agent plays NONE
/// for that round.
pub fn run_session(config: &MarketConfig, agents: &mut [Box<dyn Agent>]) -> Result<SessionLog, MarketError> {
    let mut market = Market::new(config.clone())?;
    if agents.len() != config.depth_n {
        return Err(MarketError::DecisionCount {
            expected: config.depth_n,
            got: agents.len(),
        });
    }
    while !market.is_finished() {
        let decisions: Vec<Decision> = agents
            .iter_mut()
            .enumerate()
            .map(|(i, agent)| {
                agent.decide(&market.view(i)).unwrap_or_else(|e| {
                    warn!(trader = i, round = market.round(), error = %e, "agent failed, playing NONE");
                    Decision::default()
                })
            })
            .collect();
        market.step(&decisions)?;
    }
    market.finish()
}
