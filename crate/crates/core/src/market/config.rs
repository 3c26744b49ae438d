use serde::{Deserialize, Serialize};

use super::MarketError;

/// Engine constants for one market session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    /// Per-round log drift.
    pub m: f64,
    /// Per-round volatility multiplying the unit-variance noise.
    pub s: f64,
    /// Probability that the session continues after each round.
    pub continuation: f64,
    /// Number of traders N (market depth).
    pub depth_n: usize,
    pub noise_df: u32,
    pub noise_cutoff: f64,
    pub endowment: f64,
    pub initial_price: f64,
    /// Floor on the pre-drawn end round.
    pub min_rounds: u32,
    /// Hard cap on the pre-drawn end round.
    pub max_rounds: u32,
    /// Bypass the random end time (benchmarks and sweeps).
    pub fixed_end_round: Option<u32>,
    pub seed: u64,
    /// Seed of the noise path; paired sessions share it. Defaults to `seed`.
    pub noise_seed: Option<u64>,
    pub round_seconds: f64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            m: 0.02,
            s: 0.10,
            continuation: 0.99,
            depth_n: 24,
            noise_df: 3,
            noise_cutoff: 10.0,
            endowment: 100.0,
            initial_price: 100.0,
            min_rounds: 60,
            max_rounds: 500,
            fixed_end_round: None,
            seed: 0,
            noise_seed: None,
            round_seconds: 20.0,
        }
    }
}

impl MarketConfig {
    pub fn validate(&self) -> Result<(), MarketError> {
        let bad = |msg: String| Err(MarketError::InvalidConfig(msg));
        if !(self.continuation > 0.0 && self.continuation < 1.0) {
            return bad(format!("continuation must lie in (0,1), got {}", self.continuation));
        }
        if !(self.s >= 0.0 && self.s.is_finite()) {
            return bad(format!("volatility must be non-negative, got {}", self.s));
        }
        if !self.m.is_finite() {
            return bad("drift must be finite".into());
        }
        if self.depth_n == 0 {
            return bad("depth_n must be at least 1".into());
        }
        if !(self.endowment > 0.0 && self.endowment.is_finite()) {
            return bad(format!("endowment must be positive, got {}", self.endowment));
        }
        if !(self.initial_price > 0.0 && self.initial_price.is_finite()) {
            return bad(format!("initial price must be positive, got {}", self.initial_price));
        }
        if self.noise_df <= 2 {
            return bad(format!("noise_df must exceed 2, got {}", self.noise_df));
        }
        if !(self.noise_cutoff > 0.0) {
            return bad(format!("noise_cutoff must be positive, got {}", self.noise_cutoff));
        }
        if self.max_rounds < self.min_rounds {
            return bad(format!(
                "max_rounds {} is below min_rounds {}",
                self.max_rounds, self.min_rounds
            ));
        }
        if !(self.round_seconds > 0.0) {
            return bad("round_seconds must be positive".into());
        }
        Ok(())
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise_seed.unwrap_or(self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = MarketConfig::default();
        c.validate().unwrap();
        assert_eq!((c.m, c.s, c.continuation), (0.02, 0.10, 0.99));
        assert_eq!(c.endowment, 100.0);
        assert_eq!(c.round_seconds, 20.0);
    }

    #[test]
    fn invalid_configs() {
        for c in [
            MarketConfig { continuation: 1.0, ..Default::default() },
            MarketConfig { continuation: 0.0, ..Default::default() },
            MarketConfig { s: -0.1, ..Default::default() },
            MarketConfig { depth_n: 0, ..Default::default() },
            MarketConfig { endowment: 0.0, ..Default::default() },
            MarketConfig { noise_df: 2, ..Default::default() },
            MarketConfig { max_rounds: 10, ..Default::default() },
        ] {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn toml_partial_override() {
        let c: MarketConfig = toml::from_str("s = 0.5\ndepth_n = 30\n").unwrap();
        assert_eq!(c.s, 0.5);
        assert_eq!(c.depth_n, 30);
        assert_eq!(c.m, 0.02);
        assert!(toml::from_str::<MarketConfig>("bogus = 1").is_err());
    }
}
