use serde::{Deserialize, Serialize};

use super::{LotteryResponse, Scale, PAIRS};
use crate::numerics::stats::{mean, welch_t_test, WelchResult};

/// Safe counts above this mark a risk-averse subject.
pub const RISK_NEUTRAL_SAFE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSummary {
    pub scale: Scale,
    pub subjects: usize,
    /// `ecdf[k]` is the share of subjects with at most `k` safe choices.
    pub ecdf: Vec<f64>,
    pub fraction_risk_averse: f64,
    pub mean_safe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafeChoiceSummary {
    pub scales: Vec<ScaleSummary>,
    /// Between the two scales; `None` when either group is too small or constant.
    pub welch: Option<WelchResult>,
}

pub fn safe_choice_summary(responses: &[LotteryResponse]) -> SafeChoiceSummary {
    let counts = |s: Scale| -> Vec<f64> {
        responses.iter().filter(|r| r.scale == s).map(|r| r.safe_count() as f64).collect()
    };
    let scales = Scale::ALL
        .iter()
        .filter_map(|&s| {
            let c = counts(s);
            if c.is_empty() {
                return None;
            }
            let n = c.len() as f64;
            Some(ScaleSummary {
                scale: s,
                subjects: c.len(),
                ecdf: (0..=PAIRS).map(|k| c.iter().filter(|&&x| x <= k as f64).count() as f64 / n).collect(),
                fraction_risk_averse: c.iter().filter(|&&x| x > RISK_NEUTRAL_SAFE as f64).count() as f64 / n,
                mean_safe: mean(&c),
            })
        })
        .collect();
    SafeChoiceSummary { scales, welch: welch_t_test(&counts(Scale::X2), &counts(Scale::X10)).ok() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_safe(id: usize, scale: Scale, safe: usize) -> LotteryResponse {
        let mut choices = [true; PAIRS];
        choices[..safe].iter_mut().for_each(|c| *c = false);
        LotteryResponse { subject_id: id.to_string(), scale, choices }
    }

    #[test]
    fn all_five_safe() {
        let rs: Vec<_> = (0..8).map(|i| with_safe(i, Scale::X2, 5)).collect();
        let s = safe_choice_summary(&rs);
        assert_eq!(s.scales.len(), 1);
        assert_eq!(s.scales[0].fraction_risk_averse, 1.0);
        assert_eq!(s.scales[0].ecdf[4], 0.0);
        assert_eq!(s.scales[0].ecdf[5], 1.0);
        assert!(s.welch.is_none());
    }

    #[test]
    fn identical_groups() {
        let mut rs = Vec::new();
        for (i, k) in [3, 4, 5, 6, 7, 5, 6].into_iter().enumerate() {
            rs.push(with_safe(i, Scale::X2, k));
            rs.push(with_safe(i, Scale::X10, k));
        }
        let s = safe_choice_summary(&rs);
        assert!((s.welch.unwrap().p_value - 1.0).abs() < 1e-12);
        assert_eq!(s.scales[0].ecdf, s.scales[1].ecdf);
        assert!((s.scales[0].fraction_risk_averse - 5.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn shifted_groups_differ() {
        let mut rs = Vec::new();
        for i in 0..40 {
            rs.push(with_safe(i, Scale::X2, 4 + i % 3));
            rs.push(with_safe(i, Scale::X10, 6 + i % 3));
        }
        assert!(safe_choice_summary(&rs).welch.unwrap().p_value < 1e-6);
    }
}
