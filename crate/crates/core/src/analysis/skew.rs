use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::numerics::stats::{mean, median};

pub const DEFAULT_TAUS: [usize; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SeriesLabel {
    Bare,
    Realized,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewCurve {
    pub series_label: SeriesLabel,
    pub taus: Vec<usize>,
    /// `1/2 - P(r_tau > mean)`, ties counted half.
    pub skew_prob: Vec<f64>,
    /// `(mean - median) / rms`.
    pub skew_median: Vec<f64>,
    pub skew_combined: Vec<f64>,
}

/// Skewness of overlapping `tau`-round log returns of a price series.
pub fn skewness_curve(prices: &[f64], taus: &[usize], label: SeriesLabel) -> Result<SkewCurve, AnalysisError> {
    if prices.iter().any(|p| !(*p > 0.0)) {
        return Err(AnalysisError::InvalidInput("prices must be positive".into()));
    }
    let returns: Vec<f64> = prices.windows(2).map(|w| libm::log(w[1] / w[0])).collect();
    skewness_curve_from_returns(&returns, taus, label)
}

/// Same as [`skewness_curve`] starting from one-round log returns.
pub fn skewness_curve_from_returns(
    returns: &[f64],
    taus: &[usize],
    label: SeriesLabel,
) -> Result<SkewCurve, AnalysisError> {
    let max_tau = taus.iter().copied().max().unwrap_or(0);
    if taus.is_empty() || taus.contains(&0) {
        return Err(AnalysisError::InvalidInput("aggregation lengths must be positive".into()));
    }
    // a price series of length L gives L - 1 returns
    if returns.len() + 1 <= 5 * max_tau {
        return Err(AnalysisError::InsufficientData(format!(
            "{} returns are too few for tau up to {max_tau}",
            returns.len()
        )));
    }
    let mut curve = SkewCurve {
        series_label: label,
        taus: taus.to_vec(),
        skew_prob: Vec::with_capacity(taus.len()),
        skew_median: Vec::with_capacity(taus.len()),
        skew_combined: Vec::with_capacity(taus.len()),
    };
    for &tau in taus {
        let agg = aggregate(returns, tau);
        let (a, b) = (prob_skew(&agg), median_skew(&agg));
        curve.skew_prob.push(a);
        curve.skew_median.push(b);
        curve.skew_combined.push(0.5 * (a + b));
    }
    Ok(curve)
}

/// Overlapping sums of `tau` consecutive returns.
fn aggregate(returns: &[f64], tau: usize) -> Vec<f64> {
    returns.windows(tau).map(|w| w.iter().sum()).collect()
}

pub fn prob_skew(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let above = xs
        .iter()
        .map(|&x| if x > m { 1.0 } else if x == m { 0.5 } else { 0.0 })
        .sum::<f64>();
    0.5 - above / xs.len() as f64
}

pub fn median_skew(xs: &[f64]) -> f64 {
    let rms = (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt();
    if rms == 0.0 {
        return 0.0;
    }
    (mean(xs) - median(xs)) / rms
}

/// Pointwise mean of curves over sessions (all must share `taus`).
pub fn average_curves(curves: &[SkewCurve]) -> Result<SkewCurve, AnalysisError> {
    let first = curves
        .first()
        .ok_or_else(|| AnalysisError::InsufficientData("no curves to average".into()))?;
    if curves.iter().any(|c| c.taus != first.taus) {
        return Err(AnalysisError::InvalidInput("curves use different aggregation lengths".into()));
    }
    let avg = |get: fn(&SkewCurve) -> &Vec<f64>| -> Vec<f64> {
        (0..first.taus.len())
            .map(|k| curves.iter().map(|c| get(c)[k]).sum::<f64>() / curves.len() as f64)
            .collect()
    };
    Ok(SkewCurve {
        series_label: first.series_label,
        taus: first.taus.clone(),
        skew_prob: avg(|c| &c.skew_prob),
        skew_median: avg(|c| &c.skew_median),
        skew_combined: avg(|c| &c.skew_combined),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternating_returns_are_symmetric() {
        let returns: Vec<f64> = (0..200).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let c = skewness_curve_from_returns(&returns, &DEFAULT_TAUS, SeriesLabel::Synthetic).unwrap();
        for v in c.skew_combined {
            assert!(v.abs() < 0.01, "{v}");
        }
    }

    // Direct computation: {-10, 1 x 29}: mean 19/30, 29 above -> A = 0.5 - 29/30;
    // median 1, rms sqrt(129/30) -> B = (19/30 - 1)/sqrt(4.3).
    #[test]
    fn left_skewed_fixture_by_hand() {
        let mut xs = vec![1.0; 29];
        xs.insert(0, -10.0);
        let a = prob_skew(&xs);
        let b = median_skew(&xs);
        assert!((a - (0.5 - 29.0 / 30.0)).abs() < 1e-15);
        assert!((b - (19.0 / 30.0 - 1.0) / (129.0f64 / 30.0).sqrt()).abs() < 1e-14);
        let returns: Vec<f64> = (0..120).map(|k| if k % 10 == 0 { -10.0 } else { 1.0 }).collect();
        let c = skewness_curve_from_returns(&returns, &DEFAULT_TAUS, SeriesLabel::Synthetic).unwrap();
        assert!(c.skew_combined.iter().all(|&v| v < 0.0), "{c:?}");
    }

    #[test]
    fn prices_and_returns_agree() {
        let returns: Vec<f64> = (0..60).map(|k| ((k * 7919) % 13) as f64 * 0.01 - 0.06).collect();
        let mut prices = vec![100.0];
        for r in &returns {
            let p = *prices.last().unwrap() * f64::exp(*r);
            prices.push(p);
        }
        let a = skewness_curve(&prices, &DEFAULT_TAUS, SeriesLabel::Bare).unwrap();
        let b = skewness_curve_from_returns(&returns, &DEFAULT_TAUS, SeriesLabel::Bare).unwrap();
        for (x, y) in a.skew_combined.iter().zip(&b.skew_combined) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn too_short_rejected() {
        assert!(skewness_curve(&[1.0; 25], &DEFAULT_TAUS, SeriesLabel::Bare).is_err());
        assert!(skewness_curve(&[1.0; 26], &DEFAULT_TAUS, SeriesLabel::Bare).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sign_equivariant(returns in prop::collection::vec(-1.0f64..1.0, 30..120)) {
                let c = skewness_curve_from_returns(&returns, &DEFAULT_TAUS, SeriesLabel::Synthetic).unwrap();
                let neg: Vec<f64> = returns.iter().map(|r| -r).collect();
                let d = skewness_curve_from_returns(&neg, &DEFAULT_TAUS, SeriesLabel::Synthetic).unwrap();
                for k in 0..5 {
                    prop_assert!((c.skew_prob[k] + d.skew_prob[k]).abs() < 1e-9);
                    prop_assert!((c.skew_median[k] + d.skew_median[k]).abs() < 1e-9);
                }
            }
        }
    }
}
