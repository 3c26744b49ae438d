//! Bias-corrected and accelerated (BCa) bootstrap intervals.
//!
//! The bias correction `z0` comes from the share of bootstrap replicates below the
//! point estimate (ties count half); the acceleration `a` from the skewness of the
//! leave-one-out jackknife estimates.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{NumericsError, RngStream};

pub const MIN_SAMPLE: usize = 10;
pub const MIN_REPLICATES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcaInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    /// Replicates that produced a finite estimate.
    pub replicates: usize,
    /// Set when the estimator was constant over every resample.
    pub degenerate: bool,
}

impl BcaInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// BCa interval for a scalar statistic.
pub fn bca_interval<T, F>(
    estimator: F,
    sample: &[T],
    level: f64,
    replicates: usize,
    rng: &mut RngStream,
) -> Result<BcaInterval, NumericsError>
where
    T: Clone,
    F: Fn(&[T]) -> f64,
{
    let mut v = bca_intervals(|s| vec![estimator(s)], sample, level, replicates, rng)?;
    Ok(v.remove(0))
}

/// BCa intervals for a vector-valued statistic, sharing one set of resamples.
///
/// Non-finite replicate values (for example a fit that failed on a resample) are
/// dropped per component.
pub fn bca_intervals<T, F>(
    estimator: F,
    sample: &[T],
    level: f64,
    replicates: usize,
    rng: &mut RngStream,
) -> Result<Vec<BcaInterval>, NumericsError>
where
    T: Clone,
    F: Fn(&[T]) -> Vec<f64>,
{
    let n = sample.len();
    if n < MIN_SAMPLE {
        return Err(NumericsError::InvalidInput(format!(
            "bootstrap needs at least {MIN_SAMPLE} observations, got {n}"
        )));
    }
    if replicates < MIN_REPLICATES {
        return Err(NumericsError::InvalidInput(format!(
            "bootstrap needs at least {MIN_REPLICATES} replicates, got {replicates}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(NumericsError::InvalidInput(format!("level must lie in (0,1), got {level}")));
    }

    let point = estimator(sample);
    let k = point.len();
    if point.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::InvalidInput("estimator is not finite on the full sample".into()));
    }

    let mut boot: Vec<Vec<f64>> = vec![Vec::with_capacity(replicates); k];
    let mut resample = Vec::with_capacity(n);
    for _ in 0..replicates {
        resample.clear();
        resample.extend((0..n).map(|_| sample[rng.below(n)].clone()));
        for (j, v) in estimator(&resample).into_iter().enumerate() {
            if v.is_finite() {
                boot[j].push(v);
            }
        }
    }

    let mut jack: Vec<Vec<f64>> = vec![Vec::with_capacity(n); k];
    let mut loo = Vec::with_capacity(n - 1);
    for i in 0..n {
        loo.clear();
        loo.extend(sample.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| x.clone()));
        for (j, v) in estimator(&loo).into_iter().enumerate() {
            if v.is_finite() {
                jack[j].push(v);
            }
        }
    }

    Ok((0..k)
        .map(|j| bca_from_replicates(point[j], &mut boot[j], &jack[j], level))
        .collect())
}

/// Assemble a BCa interval from precomputed bootstrap and jackknife values.
pub fn bca_from_replicates(estimate: f64, boot: &mut [f64], jackknife: &[f64], level: f64) -> BcaInterval {
    boot.sort_by(f64::total_cmp);
    let b = boot.len();
    let constant = b == 0 || (boot[0] == boot[b - 1] && boot[0] == estimate);
    if constant {
        return BcaInterval {
            estimate,
            lower: estimate,
            upper: estimate,
            level,
            replicates: b,
            degenerate: true,
        };
    }

    let normal = std_normal();
    let below = boot.iter().filter(|&&v| v < estimate).count() as f64;
    let equal = boot.iter().filter(|&&v| v == estimate).count() as f64;
    let z0 = normal.inverse_cdf(clip((below + 0.5 * equal) / b as f64));
    let a = acceleration(jackknife);

    let tail = (1.0 - level) / 2.0;
    let adjust = |q: f64| {
        let zq = normal.inverse_cdf(q);
        let shifted = z0 + zq;
        normal.cdf(z0 + shifted / (1.0 - a * shifted))
    };
    let lo_q = clip(adjust(tail));
    let hi_q = clip(adjust(1.0 - tail));
    BcaInterval {
        estimate,
        lower: quantile_sorted(boot, lo_q),
        upper: quantile_sorted(boot, hi_q),
        level,
        replicates: b,
        degenerate: false,
    }
}

fn acceleration(jackknife: &[f64]) -> f64 {
    if jackknife.len() < 2 {
        return 0.0;
    }
    let mean = jackknife.iter().sum::<f64>() / jackknife.len() as f64;
    let (num, den) = jackknife.iter().fold((0.0, 0.0), |(n3, d2), &v| {
        let d = mean - v;
        (n3 + d * d * d, d2 + d * d)
    });
    if den <= 0.0 {
        0.0
    } else {
        num / (6.0 * den.powf(1.5))
    }
}

fn clip(p: f64) -> f64 {
    p.clamp(1e-12, 1.0 - 1e-12)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let i = pos.floor() as usize;
            let j = pos.ceil() as usize;
            let t = pos - i as f64;
            (1.0 - t) * sorted[i] + t * sorted[j]
        }
    }
}

/// Plain percentile bootstrap, used as a reference for BCa.
pub fn percentile_interval<T, F>(
    estimator: F,
    sample: &[T],
    level: f64,
    replicates: usize,
    rng: &mut RngStream,
) -> (f64, f64)
where
    T: Clone,
    F: Fn(&[T]) -> f64,
{
    let n = sample.len();
    let mut boot: Vec<f64> = (0..replicates)
        .map(|_| {
            let rs: Vec<T> = (0..n).map(|_| sample[rng.below(n)].clone()).collect();
            estimator(&rs)
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile_sorted(&boot, tail), quantile_sorted(&boot, 1.0 - tail))
}
