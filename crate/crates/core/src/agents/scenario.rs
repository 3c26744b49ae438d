use serde::{Deserialize, Serialize};

use super::{AgentsError, PowerExpoUtility};
use crate::market::MarketConfig;
use crate::numerics::{draw_student_t_unit, truncated_t_expectation, RngStream};

pub const MIN_MC_PATHS: usize = 10_000;
pub const W_LOW: f64 = 1e-2;
pub const W_HIGH: f64 = 1e8;

/// One-round outlook: the impact a trader assumes and whether noise is counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub impact_assumed: f64,
    pub include_noise: bool,
}

impl Scenario {
    /// Everybody holds: drift and noise, no impact.
    pub fn hold() -> Self {
        Self { impact_assumed: 0.0, include_noise: true }
    }

    /// Everybody sells, noise counted.
    pub fn all_out() -> Self {
        Self { impact_assumed: -1.0, include_noise: true }
    }

    /// Everybody sells, noise ignored.
    pub fn all_out_no_noise() -> Self {
        Self { impact_assumed: -1.0, include_noise: false }
    }

    /// A lone seller among `depth_n`, noise ignored.
    pub fn single_out_no_noise(depth_n: usize) -> Self {
        Self {
            impact_assumed: -1.0 / depth_n as f64,
            include_noise: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityEstimate {
    pub mean: f64,
    pub sd: f64,
}

/// Expected next-round utility of `wealth` under `scenario`, by Monte Carlo when
/// noise is included. Reusing one seed across scenarios gives common random
/// numbers.
pub fn expected_utility(
    util: &PowerExpoUtility,
    wealth: f64,
    config: &MarketConfig,
    scenario: &Scenario,
    mc_paths: usize,
    rng: &mut RngStream,
) -> Result<UtilityEstimate, AgentsError> {
    if !(wealth > 0.0) {
        return Err(AgentsError::InvalidParameter(format!("wealth must be positive, got {wealth}")));
    }
    if !scenario.include_noise {
        return Ok(UtilityEstimate {
            mean: util.value(wealth * libm::exp(config.m + scenario.impact_assumed)),
            sd: 0.0,
        });
    }
    if mc_paths < MIN_MC_PATHS {
        return Err(AgentsError::InvalidParameter(format!(
            "need at least {MIN_MC_PATHS} Monte Carlo paths, got {mc_paths}"
        )));
    }
    // Welford: saturated utilities differ only in far digits
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..mc_paths {
        let eta = draw_student_t_unit(rng, config.noise_df, config.noise_cutoff)?;
        let u = util.value(wealth * libm::exp(config.m + config.s * eta + scenario.impact_assumed));
        let delta = u - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (u - mean);
    }
    let var = m2 / (mc_paths as f64 - 1.0);
    Ok(UtilityEstimate { mean, sd: var.sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPoint {
    pub s: f64,
    /// Critical wealth; `f64::INFINITY` when selling never wins.
    pub w_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCurve {
    pub scenario: Scenario,
    pub points: Vec<ThresholdPoint>,
}

impl ThresholdCurve {
    /// W* at the grid point nearest to `s`.
    pub fn at(&self, s: f64) -> f64 {
        self.points
            .iter()
            .min_by(|a, b| (a.s - s).abs().total_cmp(&(b.s - s).abs()))
            .map_or(f64::INFINITY, |p| p.w_star)
    }
}

/// Log of `E[U stay] / U sell` in the saturated form: positive when selling
/// (deterministic, assumed impact) beats staying (with noise, no impact).
///
/// With `U = (1 - e^{-z}) / alpha` the comparison `U_sell >= E U_stay` is
/// `E[exp(z_sell - z_stay)] >= 1`, evaluated with a shift so huge exponents
/// neither overflow nor cancel.
fn sell_advantage(util: &PowerExpoUtility, wealth: f64, config: &MarketConfig, s: f64, impact: f64) -> f64 {
    let z_sell = util.exponent(wealth * libm::exp(config.m + impact));
    let z_stay = |eta: f64| util.exponent(wealth * libm::exp(config.m + s * eta));
    // z_stay is increasing in eta, so the largest exponent sits at -cutoff
    let shift = z_sell - z_stay(-config.noise_cutoff);
    let mean = truncated_t_expectation(
        |eta| libm::exp(z_sell - z_stay(eta) - shift),
        config.noise_df,
        config.noise_cutoff,
    );
    shift + libm::log(mean)
}

/// Smallest wealth in `[W_LOW, W_HIGH]` from which selling without noise under
/// `scenario` is preferred to staying with noise, for each volatility in
/// `s_grid`.
pub fn critical_threshold(
    util: &PowerExpoUtility,
    config: &MarketConfig,
    scenario: &Scenario,
    s_grid: &[f64],
) -> Result<ThresholdCurve, AgentsError> {
    if s_grid.is_empty() {
        return Err(AgentsError::InvalidParameter("volatility grid is empty".into()));
    }
    if scenario.include_noise {
        return Err(AgentsError::InvalidParameter(
            "critical threshold compares a noiseless sell scenario".into(),
        ));
    }
    let points = s_grid
        .iter()
        .map(|&s| ThresholdPoint {
            s,
            w_star: first_crossing(|w| sell_advantage(util, w, config, s, scenario.impact_assumed)),
        })
        .collect();
    Ok(ThresholdCurve {
        scenario: *scenario,
        points,
    })
}

fn first_crossing<F: Fn(f64) -> f64>(f: F) -> f64 {
    const SCAN: usize = 500;
    let (lo_ln, hi_ln) = (libm::log(W_LOW), libm::log(W_HIGH));
    let at = |k: usize| libm::exp(lo_ln + (hi_ln - lo_ln) * k as f64 / SCAN as f64);
    if f(W_LOW) >= 0.0 {
        return W_LOW;
    }
    let mut prev = W_LOW;
    for k in 1..=SCAN {
        let w = at(k);
        if f(w) >= 0.0 {
            let (mut a, mut b) = (prev, w);
            for _ in 0..200 {
                let mid = libm::sqrt(a * b);
                if f(mid) >= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
                if b / a - 1.0 < 1e-12 {
                    break;
                }
            }
            return b;
        }
        prev = w;
    }
    f64::INFINITY
}
