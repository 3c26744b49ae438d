use serde::{Deserialize, Serialize};

use super::RiskError;

pub const PAIRS: usize = 10;

/// The shipped baseline menu.
pub const DEFAULT_MENU_TOML: &str = include_str!("../../data/holt_laury_menu.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scale {
    X2,
    X10,
}

impl Scale {
    pub const ALL: [Scale; 2] = [Scale::X2, Scale::X10];

    pub fn index(self) -> usize {
        match self {
            Scale::X2 => 0,
            Scale::X10 => 1,
        }
    }
}

impl std::fmt::Display for Scale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scale::X2 => "X2",
            Scale::X10 => "X10",
        })
    }
}

impl std::str::FromStr for Scale {
    type Err = RiskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "X2" | "x2" | "2" => Ok(Scale::X2),
            "X10" | "x10" | "10" => Ok(Scale::X10),
            other => Err(RiskError::InvalidInput(format!("unknown scale {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub payoff: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lottery {
    /// High outcome first.
    pub outcomes: [Outcome; 2],
}

impl Lottery {
    pub fn expected_value(&self) -> f64 {
        self.outcomes.iter().map(|o| o.payoff * o.probability).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.expected_value();
        self.outcomes.iter().map(|o| o.probability * (o.payoff - m).powi(2)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LotteryPair {
    /// 1..=10
    pub index: usize,
    pub scale: Scale,
    pub safe: Lottery,
    pub risky: Lottery,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Payoffs {
    pub high: f64,
    pub low: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleFactors {
    pub x2: f64,
    pub x10: f64,
}

/// Baseline payoffs for both options and the multiplier of each scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LotteryMenu {
    pub safe: Payoffs,
    pub risky: Payoffs,
    pub scales: ScaleFactors,
}

impl Default for LotteryMenu {
    fn default() -> Self {
        Self::from_toml(DEFAULT_MENU_TOML).expect("shipped menu parses")
    }
}

impl LotteryMenu {
    pub fn from_toml(text: &str) -> Result<Self, RiskError> {
        let menu: Self = toml::from_str(text).map_err(|e| RiskError::Menu(e.to_string()))?;
        menu.validate()?;
        Ok(menu)
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        for (name, p) in [("safe", self.safe), ("risky", self.risky)] {
            if !(p.low > 0.0 && p.high > p.low && p.high.is_finite()) {
                return Err(RiskError::Menu(format!("{name}: need 0 < low < high, got {} / {}", p.low, p.high)));
            }
        }
        if !(self.risky.high - self.risky.low > self.safe.high - self.safe.low) {
            return Err(RiskError::Menu("the risky option must have the wider payoff spread".into()));
        }
        for f in [self.scales.x2, self.scales.x10] {
            if !(f > 0.0 && f.is_finite()) {
                return Err(RiskError::Menu(format!("scale factors must be positive, got {f}")));
            }
        }
        Ok(())
    }

    pub fn factor(&self, scale: Scale) -> f64 {
        match scale {
            Scale::X2 => self.scales.x2,
            Scale::X10 => self.scales.x10,
        }
    }

    pub fn pair(&self, scale: Scale, index: usize) -> LotteryPair {
        let p = index as f64 / PAIRS as f64;
        let f = self.factor(scale);
        let lottery = |pay: Payoffs| Lottery {
            outcomes: [
                Outcome { payoff: f * pay.high, probability: p },
                Outcome { payoff: f * pay.low, probability: 1.0 - p },
            ],
        };
        LotteryPair { index, scale, safe: lottery(self.safe), risky: lottery(self.risky) }
    }

    pub fn pairs(&self, scale: Scale) -> Vec<LotteryPair> {
        (1..=PAIRS).map(|i| self.pair(scale, i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_menu() {
        let m = LotteryMenu::default();
        let p = m.pair(Scale::X2, 3);
        assert_eq!(p.safe.outcomes[0], Outcome { payoff: 4.0, probability: 0.3 });
        assert_eq!(p.risky.outcomes[1].payoff, 0.2);
        assert!((p.risky.outcomes[1].probability - 0.7).abs() < 1e-15);
        assert_eq!(m.pair(Scale::X10, 1).risky.outcomes[0].payoff, 38.5);
    }

    #[test]
    fn high_probability_steps_and_variance_order() {
        let m = LotteryMenu::default();
        for s in Scale::ALL {
            for (k, pair) in m.pairs(s).iter().enumerate() {
                assert_eq!(pair.index, k + 1);
                assert!((pair.safe.outcomes[0].probability - (k + 1) as f64 / 10.0).abs() < 1e-15);
                assert_eq!(pair.safe.outcomes[0].probability, pair.risky.outcomes[0].probability);
                if pair.index < PAIRS {
                    assert!(pair.safe.variance() < pair.risky.variance());
                }
            }
        }
    }

    #[test]
    fn rejects_bad_menus() {
        assert!(LotteryMenu::from_toml("[safe]\nhigh = 1\nlow = 2\n[risky]\nhigh = 4\nlow = 0.1\n[scales]\nx2 = 2\nx10 = 10").is_err());
        assert!(LotteryMenu::from_toml("[safe]\nhigh = 2\nlow = 1.6\n[risky]\nhigh = 3.85\nlow = 0.1\n[scales]\nx2 = 2\nx10 = 10\nx50 = 3").is_err());
        assert!("X3".parse::<Scale>().is_err());
        assert_eq!("10".parse::<Scale>().unwrap(), Scale::X10);
    }
}
