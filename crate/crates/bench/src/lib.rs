//! Fixtures shared by the benchmarks.

use impactlab::agents::{Roster, RosterEntry, StrategySpec};
use impactlab::market::{run_session, MarketConfig, SessionLog};

/// Buy-and-hold, contrarian and churner seats in equal thirds.
pub fn mixed_roster(n: usize) -> Roster {
    let third = n / 3;
    Roster {
        agents: vec![
            RosterEntry { count: n - 2 * third, spec: StrategySpec::BuyAndHold },
            RosterEntry {
                count: third,
                spec: StrategySpec::Contrarian {
                    omega0: 0.0,
                    omega1: -0.5,
                    band: 0.01,
                    forecast_noise: 0.02,
                    omega0_sd: 0.0,
                    omega1_sd: 0.0,
                },
            },
            RosterEntry { count: third, spec: StrategySpec::Churner { rate: 0.2 } },
        ],
    }
}

pub fn session(n: usize, rounds: u32, seed: u64) -> (MarketConfig, Roster) {
    let config = MarketConfig { depth_n: n, fixed_end_round: Some(rounds - 1), seed, ..MarketConfig::default() };
    (config, mixed_roster(n))
}

pub fn run(config: &MarketConfig, roster: &Roster) -> SessionLog {
    let mut agents = roster.build_agents(config).expect("valid roster");
    run_session(config, &mut agents).expect("bot session runs")
}
