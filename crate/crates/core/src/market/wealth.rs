use super::MarketConfig;
use crate::numerics::truncated_t_expectation;

/// Mode of the inactive investor's wealth, `w0 * exp(m T)`.
pub fn most_probable_wealth(config: &MarketConfig, rounds: u32, w0: f64) -> f64 {
    w0 * libm::exp(config.m * f64::from(rounds))
}

/// Second-order expected wealth of the inactive investor, `w0 (1 + m + s^2/2)^T`.
pub fn expected_wealth(config: &MarketConfig, rounds: u32, w0: f64) -> f64 {
    w0 * libm::pow(1.0 + config.m + 0.5 * config.s * config.s, f64::from(rounds))
}

/// Exact expectation `w0 E[exp(m + s eta)]^T` under the truncated noise law.
pub fn exact_expected_wealth(config: &MarketConfig, rounds: u32, w0: f64) -> f64 {
    let growth = truncated_t_expectation(
        |eta| libm::exp(config.m + config.s * eta),
        config.noise_df,
        config.noise_cutoff,
    );
    w0 * libm::pow(growth, f64::from(rounds))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn most_probable_is_e_squared() {
        let c = MarketConfig::default();
        let w = most_probable_wealth(&c, 100, 100.0);
        assert!((w - 100.0 * std::f64::consts::E.powi(2)).abs() < 1e-9);
        assert_eq!(most_probable_wealth(&c, 0, 100.0), 100.0);
    }

    #[test]
    fn expected_formula() {
        let c = MarketConfig::default();
        let w = expected_wealth(&c, 100, 100.0);
        assert!((w - 100.0 * 1.025f64.powi(100)).abs() < 1e-9);
        assert!((w - 1181.4).abs() < 0.1);
    }

    #[test]
    fn exact_expectation_reduces_without_noise() {
        let c = MarketConfig { s: 0.0, ..Default::default() };
        let w = exact_expected_wealth(&c, 100, 100.0);
        assert!((w / most_probable_wealth(&c, 100, 100.0) - 1.0).abs() < 1e-12);
    }

    // Monte Carlo oracle over 10^6 compounded paths of the truncated noise.
    #[test]
    fn exact_expectation_matches_monte_carlo() {
        use crate::numerics::{draw_student_t_unit, RngStream};
        let c = MarketConfig::default();
        let mut rng = RngStream::new(5, 77);
        let n = 1_000_000;
        let mean_growth: f64 = (0..n)
            .map(|_| (c.m + c.s * draw_student_t_unit(&mut rng, 3, 10.0).unwrap()).exp())
            .sum::<f64>()
            / n as f64;
        let exact = exact_expected_wealth(&c, 1, 1.0);
        assert!((mean_growth - exact).abs() < 3e-4, "{mean_growth} vs {exact}");
    }
}
