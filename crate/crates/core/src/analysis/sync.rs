use serde::{Deserialize, Serialize};

use super::{ActivityMatrix, AnalysisError};
use crate::numerics::stats::{mean, variance};
use crate::numerics::{top_eigenvectors, RngStream, SymMatrix};

pub const DEFAULT_NULL_REPLICATES: usize = 1000;
pub const TOP_MODES: usize = 3;
pub const MIN_CONDITIONED_ROUNDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    /// Largest `|<v_k, e>|` over the top eigenvectors.
    pub overlap: f64,
    pub eigenvalues: Vec<f64>,
    pub null_mean: f64,
    pub null_sd: f64,
    pub replicates: usize,
    pub rounds: usize,
}

/// Covariance of activity rows, `A_ij = <theta_i theta_j> - <theta_i><theta_j>`.
pub fn activity_covariance(theta: &[Vec<i8>]) -> SymMatrix {
    let n = theta.len();
    let t = theta.first().map_or(0, Vec::len) as f64;
    let means: Vec<f64> = theta.iter().map(|r| r.iter().map(|&c| f64::from(c)).sum::<f64>() / t).collect();
    let mut a = SymMatrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let cross = theta[i]
                .iter()
                .zip(&theta[j])
                .map(|(&x, &y)| f64::from(x) * f64::from(y))
                .sum::<f64>()
                / t;
            let v = cross - means[i] * means[j];
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    a
}

/// Overlap of the leading eigenvectors with the uniform vector, with the
/// eigenvalues. `None` when the activity matrix is identically zero.
pub fn overlap_statistic(theta: &[Vec<i8>]) -> Result<Option<(f64, Vec<f64>)>, AnalysisError> {
    let a = activity_covariance(theta);
    let n = a.dim();
    if (0..n).all(|i| (0..n).all(|j| a.get(i, j) == 0.0)) {
        return Ok(None);
    }
    let top = top_eigenvectors(&a, TOP_MODES.min(n))?;
    let scale = 1.0 / (n as f64).sqrt();
    // modes in the null space have arbitrary direction
    let floor = 1e-10 * a.trace().abs();
    let overlap = top
        .iter()
        .filter(|p| p.value > floor)
        .map(|p| (p.vector.iter().sum::<f64>() * scale).abs())
        .fold(0.0, f64::max)
        .min(1.0);
    Ok(Some((overlap, top.iter().map(|p| p.value).collect())))
}

/// Synchronization overlap against a null that shuffles each trader's activity
/// in time independently.
pub fn sync_overlap(
    activity: &ActivityMatrix,
    null_replicates: usize,
    rng: &mut RngStream,
) -> Result<SyncReport, AnalysisError> {
    if activity.traders() < 3 || activity.len() < 10 {
        return Err(AnalysisError::InsufficientData(format!(
            "synchronization needs 3 traders and 10 rounds, got {} x {}",
            activity.traders(),
            activity.len()
        )));
    }
    if null_replicates < 2 {
        return Err(AnalysisError::InvalidInput("need at least two null replicates".into()));
    }
    let (overlap, eigenvalues) = overlap_statistic(&activity.theta)?
        .ok_or_else(|| AnalysisError::Degenerate("activity matrix is identically zero".into()))?;
    let null = null_overlaps(&activity.theta, null_replicates, rng)?;
    Ok(SyncReport {
        overlap,
        eigenvalues,
        null_mean: mean(&null),
        null_sd: variance(&null).sqrt(),
        replicates: null_replicates,
        rounds: activity.len(),
    })
}

pub fn null_overlaps(theta: &[Vec<i8>], replicates: usize, rng: &mut RngStream) -> Result<Vec<f64>, AnalysisError> {
    let mut shuffled = theta.to_vec();
    let mut out = Vec::with_capacity(replicates);
    for _ in 0..replicates {
        for row in shuffled.iter_mut() {
            rng.shuffle(row);
        }
        // a shuffled row keeps its variance, so the matrix stays non-zero
        out.push(overlap_statistic(&shuffled)?.map_or(0.0, |(o, _)| o));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReturnSign {
    Positive,
    Negative,
}

/// Synchronization restricted to rounds whose preceding return has the given
/// sign. `previous_returns[c]` is the return observed before column `c`.
pub fn conditional_sync(
    activity: &ActivityMatrix,
    previous_returns: &[f64],
    sign: ReturnSign,
    null_replicates: usize,
    rng: &mut RngStream,
) -> Result<SyncReport, AnalysisError> {
    if previous_returns.len() != activity.len() {
        return Err(AnalysisError::InvalidInput(format!(
            "{} returns for {} activity columns",
            previous_returns.len(),
            activity.len()
        )));
    }
    let sub = activity.select_columns(|c| match sign {
        ReturnSign::Positive => previous_returns[c] > 0.0,
        ReturnSign::Negative => previous_returns[c] < 0.0,
    });
    if sub.len() < MIN_CONDITIONED_ROUNDS {
        return Err(AnalysisError::InsufficientData(format!(
            "only {} rounds follow a {sign:?} return",
            sub.len()
        )));
    }
    sync_overlap(&sub, null_replicates, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::ActivityVariant;

    fn random_rows(n: usize, t: usize, rate: f64, rng: &mut RngStream) -> Vec<Vec<i8>> {
        (0..n)
            .map(|_| {
                (0..t)
                    .map(|_| if rng.bernoulli(rate) { if rng.bernoulli(0.5) { 1 } else { -1 } } else { 0 })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn covariance_by_hand() {
        let a = activity_covariance(&[vec![1, 0, -1, 0], vec![1, 1, 0, 0]]);
        // means 0 and 0.5; cross = 1/4; var_0 = 1/2; var_1 = 1/4
        assert_eq!(a.get(0, 1), 0.25);
        assert_eq!(a.get(0, 0), 0.5);
        assert_eq!(a.get(1, 1), 0.25);
    }

    #[test]
    fn identical_rows_overlap_one() {
        let row: Vec<i8> = (0..40).map(|k| [1, 0, -1, 0, 0][k % 5]).collect();
        let m = ActivityMatrix::from_rows(vec![row; 12], ActivityVariant::All).unwrap();
        let r = sync_overlap(&m, 50, &mut RngStream::new(1, 0)).unwrap();
        assert!((r.overlap - 1.0).abs() < 1e-9, "{}", r.overlap);
        assert!(r.null_mean < 0.9);
    }

    #[test]
    fn zero_activity_is_degenerate() {
        let m = ActivityMatrix::from_rows(vec![vec![0; 20]; 4], ActivityVariant::All).unwrap();
        assert!(matches!(sync_overlap(&m, 10, &mut RngStream::new(1, 0)), Err(AnalysisError::Degenerate(_))));
    }

    #[test]
    fn anti_synchronized_halves_sit_near_null() {
        let up: Vec<i8> = (0..60).map(|k| if k % 2 == 0 { 1 } else { -1 }).collect();
        let down: Vec<i8> = up.iter().map(|c| -c).collect();
        let mut rows = vec![up; 6];
        rows.extend(vec![down; 6]);
        let (overlap, _) = overlap_statistic(&rows).unwrap().unwrap();
        assert!(overlap < 1e-6, "{overlap}");
    }

    #[test]
    fn relabeling_invariant() {
        let mut rng = RngStream::new(8, 0);
        let rows = random_rows(10, 50, 0.3, &mut rng);
        let mut perm = rows.clone();
        perm.reverse();
        perm.swap(1, 7);
        let (a, _) = overlap_statistic(&rows).unwrap().unwrap();
        let (b, _) = overlap_statistic(&perm).unwrap().unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn conditioning() {
        let mut rng = RngStream::new(2, 0);
        let m = ActivityMatrix::from_rows(random_rows(6, 40, 0.3, &mut rng), ActivityVariant::All).unwrap();
        let all_pos = vec![0.01; 40];
        assert!(conditional_sync(&m, &all_pos, ReturnSign::Negative, 10, &mut rng).is_err());
        let a = conditional_sync(&m, &all_pos, ReturnSign::Positive, 20, &mut RngStream::new(5, 0)).unwrap();
        let b = sync_overlap(&m, 20, &mut RngStream::new(5, 0)).unwrap();
        assert_eq!(a, b);
    }
}
