use statrs::distribution::{ContinuousCDF, Normal};

use super::NumericsError;

/// Largest smaller-sample size for which the exact null distribution is used.
pub const EXACT_MAX: usize = 8;

/// Two-sided Mann-Whitney U test p-value.
///
/// Exact when the smaller sample has at most [`EXACT_MAX`] values and there are
/// no ties; otherwise the normal approximation with tie-corrected variance and a
/// 0.5 continuity correction.
pub fn mann_whitney_p(a: &[f64], b: &[f64]) -> Result<f64, NumericsError> {
    if a.is_empty() || b.is_empty() {
        return Err(NumericsError::InvalidInput("mann-whitney needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(NumericsError::InvalidInput("mann-whitney sample contains NaN".into()));
    }
    let (n1, n2) = (a.len(), b.len());
    let (ranks, tie_groups) = midranks(a, b);
    let rank_sum_a: f64 = ranks[..n1].iter().sum();
    let u_a = rank_sum_a - (n1 * (n1 + 1)) as f64 / 2.0;

    if n1.min(n2) <= EXACT_MAX && tie_groups.is_empty() {
        // U is integral without ties.
        return Ok(exact_two_sided(u_a.round() as usize, n1, n2));
    }

    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let n = n1f + n2f;
    let mean = n1f * n2f / 2.0;
    let tie_term: f64 = tie_groups.iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = n1f * n2f / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        // Every observation tied: no evidence of a difference.
        return Ok(1.0);
    }
    let z = ((u_a - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let p = 2.0 * (1.0 - Normal::standard().cdf(z));
    Ok(p.clamp(0.0, 1.0))
}

/// Pooled mid-ranks (1-based) and the sizes of tie groups larger than one.
fn midranks(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (ranks, ties)
}

/// Number of rank arrangements giving each value of U, for sample sizes m, n.
///
/// Standard recursion c(u; m, n) = c(u - n; m - 1, n) + c(u; m, n - 1).
fn u_counts(m: usize, n: usize) -> Vec<f64> {
    let max_u = m * n;
    // table[j][u] for current m over n' = 0..=n
    let mut prev: Vec<Vec<f64>> = (0..=n).map(|_| vec![1.0]).collect(); // m = 0
    for mm in 1..=m {
        let mut cur: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        cur.push(vec![1.0]); // n' = 0: only U = 0
        for nn in 1..=n {
            let len = mm * nn + 1;
            let mut row = vec![0.0; len];
            for (u, slot) in row.iter_mut().enumerate() {
                let from_m = if u >= nn { prev[nn].get(u - nn).copied().unwrap_or(0.0) } else { 0.0 };
                let from_n = cur[nn - 1].get(u).copied().unwrap_or(0.0);
                *slot = from_m + from_n;
            }
            cur.push(row);
        }
        prev = cur;
    }
    let mut counts = prev.swap_remove(n);
    counts.resize(max_u + 1, 0.0);
    counts
}

fn exact_two_sided(u: usize, n1: usize, n2: usize) -> f64 {
    let counts = u_counts(n1, n2);
    let total: f64 = counts.iter().sum();
    let lower: f64 = counts[..=u].iter().sum::<f64>() / total;
    let upper: f64 = counts[u..].iter().sum::<f64>() / total;
    (2.0 * lower.min(upper)).min(1.0)
}
