use serde::{Deserialize, Serialize};

use super::NumericsError;

pub const MIN_SAMPLE: usize = 50;
pub const DEFAULT_MIN_TAIL: usize = 10;

/// Power-law fit of the upper tail, `P(X > x) = (x / r_min)^(-alpha_tail)` for
/// `x >= r_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub r_min: f64,
    /// Exponent of the complementary CDF (a Student-t(3) tail has 3).
    pub alpha_tail: f64,
    pub n_tail: usize,
    pub ks_distance: f64,
}

impl TailFit {
    /// Asymptotic standard error of the maximum-likelihood exponent.
    pub fn standard_error(&self) -> f64 {
        self.alpha_tail / (self.n_tail as f64).sqrt()
    }
}

pub fn fit_power_tail(sample: &[f64]) -> Result<TailFit, NumericsError> {
    fit_power_tail_with(sample, DEFAULT_MIN_TAIL)
}

/// Maximum-likelihood tail exponent with the start of the power law chosen to
/// minimize the Kolmogorov-Smirnov distance between the tail's empirical CDF and
/// the fitted law.
///
/// Every distinct sample value leaving at least `min_tail` points above it is a
/// candidate `r_min`.
pub fn fit_power_tail_with(sample: &[f64], min_tail: usize) -> Result<TailFit, NumericsError> {
    if sample.len() < MIN_SAMPLE {
        return Err(NumericsError::FitFailed(format!(
            "power-law fit needs at least {MIN_SAMPLE} values, got {}",
            sample.len()
        )));
    }
    if sample.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(NumericsError::InvalidInput("power-law fit needs positive finite values".into()));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let logs: Vec<f64> = xs.iter().map(|x| libm::log(*x)).collect();
    // suffix[i] = sum of logs[i..]
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + logs[i];
    }

    let mut best: Option<TailFit> = None;
    let mut i = 0;
    while i < n {
        let n_tail = n - i;
        if n_tail < min_tail {
            break;
        }
        let r_min = xs[i];
        let denom = suffix[i] - n_tail as f64 * logs[i];
        if xs[n - 1] > r_min && denom > 0.0 {
            let alpha = n_tail as f64 / denom;
            let d = ks_distance(&xs[i..], r_min, alpha);
            if best.as_ref().is_none_or(|b| d < b.ks_distance) {
                best = Some(TailFit {
                    r_min,
                    alpha_tail: alpha,
                    n_tail,
                    ks_distance: d,
                });
            }
        }
        // next distinct value
        let v = xs[i];
        while i < n && xs[i] == v {
            i += 1;
        }
    }
    best.ok_or_else(|| {
        NumericsError::FitFailed(format!("no candidate r_min leaves {min_tail} distinct tail points"))
    })
}

fn ks_distance(tail: &[f64], r_min: f64, alpha: f64) -> f64 {
    let n = tail.len() as f64;
    tail.iter().enumerate().fold(0.0, |d, (k, &y)| {
        let model = 1.0 - libm::pow(y / r_min, -alpha);
        let before = k as f64 / n;
        let after = (k + 1) as f64 / n;
        d.max(after - model).max(model - before)
    })
}
