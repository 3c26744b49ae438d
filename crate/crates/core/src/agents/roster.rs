//! Roster files: which strategies fill the market's seats.
//!
//! ```toml
//! [[agents]]
//! strategy = "buy_and_hold"
//! count = 12
//!
//! [[agents]]
//! strategy = "contrarian"
//! count = 12
//! omega1 = -0.5
//! forecast_noise = 0.02
//! ```
//!
//! Seats are numbered in file order.

use serde::{Deserialize, Serialize};

use super::{
    critical_threshold, AgentsError, BuyAndHold, Churner, Contrarian, PowerExpoUtility, Scenario, ThresholdAgent,
    DEFAULT_BAND, DEFAULT_REENTRY,
};
use crate::market::{Agent, MarketConfig};
use crate::numerics::rng::streams;
use crate::numerics::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SellScenario {
    #[default]
    AllOut,
    SingleOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum StrategySpec {
    BuyAndHold,
    Threshold {
        /// Explicit threshold; otherwise computed from the utility.
        w_star: Option<f64>,
        alpha_u: Option<f64>,
        r_u: Option<f64>,
        #[serde(default)]
        scenario: SellScenario,
        #[serde(default = "default_reentry")]
        reentry: f64,
    },
    Contrarian {
        #[serde(default)]
        omega0: f64,
        #[serde(default = "default_omega1")]
        omega1: f64,
        #[serde(default = "default_band")]
        band: f64,
        #[serde(default)]
        forecast_noise: f64,
        /// Per-agent spread of `omega0` and `omega1` (normal draws).
        #[serde(default)]
        omega0_sd: f64,
        #[serde(default)]
        omega1_sd: f64,
    },
    Churner {
        rate: f64,
    },
    /// A seat filled by a live participant.
    Human,
}

fn default_reentry() -> f64 {
    DEFAULT_REENTRY
}

fn default_omega1() -> f64 {
    -0.5
}

fn default_band() -> f64 {
    DEFAULT_BAND
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub count: usize,
    #[serde(flatten)]
    pub spec: StrategySpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Roster {
    pub agents: Vec<RosterEntry>,
}

pub enum Seat {
    Bot(Box<dyn Agent>),
    Human,
}

impl Roster {
    pub fn from_toml(text: &str) -> Result<Self, AgentsError> {
        let roster: Roster = toml::from_str(text).map_err(|e| AgentsError::Roster(e.to_string()))?;
        roster.validate()?;
        Ok(roster)
    }

    pub fn uniform(spec: StrategySpec, count: usize) -> Self {
        Self {
            agents: vec![RosterEntry { count, spec }],
        }
    }

    pub fn seat_count(&self) -> usize {
        self.agents.iter().map(|e| e.count).sum()
    }

    pub fn human_count(&self) -> usize {
        self.agents
            .iter()
            .filter(|e| e.spec == StrategySpec::Human)
            .map(|e| e.count)
            .sum()
    }

    pub fn validate(&self) -> Result<(), AgentsError> {
        if self.seat_count() == 0 {
            return Err(AgentsError::Roster("roster has no seats".into()));
        }
        for e in &self.agents {
            match &e.spec {
                StrategySpec::Threshold { w_star, alpha_u, r_u, reentry, .. } => {
                    if w_star.is_none() && (alpha_u.is_none() || r_u.is_none()) {
                        return Err(AgentsError::Roster(
                            "threshold agents need w_star or both alpha_u and r_u".into(),
                        ));
                    }
                    if !(0.0..=1.0).contains(reentry) {
                        return Err(AgentsError::Roster(format!("reentry must lie in [0,1], got {reentry}")));
                    }
                }
                StrategySpec::Churner { rate } if !(0.0..=1.0).contains(rate) => {
                    return Err(AgentsError::Roster(format!("churn rate must lie in [0,1], got {rate}")));
                }
                StrategySpec::Contrarian { band, forecast_noise, .. } if *band < 0.0 || *forecast_noise < 0.0 => {
                    return Err(AgentsError::Roster("band and forecast_noise must be non-negative".into()));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// One seat per trader id, bots built for `config`.
    pub fn seats(&self, config: &MarketConfig) -> Result<Vec<Seat>, AgentsError> {
        self.validate()?;
        if self.seat_count() != config.depth_n {
            return Err(AgentsError::Roster(format!(
                "roster fills {} seats but depth_n is {}",
                self.seat_count(),
                config.depth_n
            )));
        }
        let mut seats = Vec::with_capacity(config.depth_n);
        for entry in &self.agents {
            let threshold = match &entry.spec {
                StrategySpec::Threshold { w_star: None, alpha_u: Some(a), r_u: Some(r), scenario, .. } => {
                    let util = PowerExpoUtility::new(*a, *r)?;
                    let sc = match scenario {
                        SellScenario::AllOut => Scenario::all_out_no_noise(),
                        SellScenario::SingleOut => Scenario::single_out_no_noise(config.depth_n),
                    };
                    Some(critical_threshold(&util, config, &sc, &[config.s])?.points[0].w_star)
                }
                _ => None,
            };
            for _ in 0..entry.count {
                let id = seats.len();
                seats.push(build_seat(&entry.spec, id, config, threshold));
            }
        }
        Ok(seats)
    }

    /// Bots for every seat; fails when the roster has human seats.
    pub fn build_agents(&self, config: &MarketConfig) -> Result<Vec<Box<dyn Agent>>, AgentsError> {
        if self.human_count() > 0 {
            return Err(AgentsError::Roster("roster has human seats; run it on the server".into()));
        }
        Ok(self
            .seats(config)?
            .into_iter()
            .filter_map(|s| match s {
                Seat::Bot(b) => Some(b),
                Seat::Human => None,
            })
            .collect())
    }
}

fn build_seat(spec: &StrategySpec, id: usize, config: &MarketConfig, w_star: Option<f64>) -> Seat {
    let seed = config.seed;
    match *spec {
        StrategySpec::BuyAndHold => Seat::Bot(Box::new(BuyAndHold)),
        StrategySpec::Threshold { w_star: explicit, reentry, .. } => Seat::Bot(Box::new(ThresholdAgent {
            w_star: explicit.or(w_star).unwrap_or(f64::INFINITY),
            reentry,
        })),
        StrategySpec::Contrarian { omega0, omega1, band, forecast_noise, omega0_sd, omega1_sd } => {
            // parameter draws live on their own stream, apart from the per-round noise
            let mut rng = RngStream::new(seed, streams::AGENT_BASE + id as u64).fork(1);
            let o0 = omega0 + omega0_sd * rng.standard_normal();
            let o1 = omega1 + omega1_sd * rng.standard_normal();
            Seat::Bot(Box::new(Contrarian {
                trader_id: id,
                seed,
                omega0: o0,
                omega1: o1,
                band,
                forecast_noise,
            }))
        }
        StrategySpec::Churner { rate } => Seat::Bot(Box::new(Churner { trader_id: id, seed, rate })),
        StrategySpec::Human => Seat::Human,
    }
}
