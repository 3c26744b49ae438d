use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::numerics::hypergeom_tail;

pub const DEFAULT_FDR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub i: usize,
    pub j: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    /// Connected components of the validated links, two or more traders each.
    pub clusters: Vec<Vec<usize>>,
    pub validated_links: Vec<Link>,
    pub fdr_threshold: f64,
    pub tested_pairs: usize,
    /// Traders IN or OUT in every round; their pairs are not tested.
    pub skipped: Vec<usize>,
}

/// Benjamini-Hochberg: indices of rejected hypotheses at level `q`. Ties in p
/// are ordered by index.
pub fn benjamini_hochberg(p_values: &[f64], q: f64) -> Vec<usize> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let cutoff = order
        .iter()
        .enumerate()
        .rev()
        .find(|(rank, &idx)| p_values[idx] <= (rank + 1) as f64 / m as f64 * q)
        .map(|(rank, _)| rank + 1)
        .unwrap_or(0);
    let mut rejected: Vec<usize> = order[..cutoff].to_vec();
    rejected.sort_unstable();
    rejected
}

/// Validates co-IN links between traders and groups them.
pub fn fdr_clusters(positions: &[Vec<bool>], threshold: f64) -> Result<ClusterSet, AnalysisError> {
    let t = positions.first().map_or(0, Vec::len);
    if positions.iter().any(|r| r.len() != t) {
        return Err(AnalysisError::InvalidInput("position rows differ in length".into()));
    }
    if t < 20 {
        return Err(AnalysisError::InsufficientData(format!("clustering needs 20 rounds, got {t}")));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(AnalysisError::InvalidInput(format!("threshold must lie in (0,1), got {threshold}")));
    }
    let n = positions.len();
    let counts: Vec<usize> = positions.iter().map(|r| r.iter().filter(|&&b| b).count()).collect();
    let skipped: Vec<usize> = (0..n).filter(|&i| counts[i] == 0 || counts[i] == t).collect();

    let mut pairs = Vec::new();
    let mut p_values = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if skipped.contains(&i) || skipped.contains(&j) {
                continue;
            }
            let overlap = positions[i].iter().zip(&positions[j]).filter(|(a, b)| **a && **b).count();
            p_values.push(hypergeom_tail(overlap as u64, counts[i] as u64, counts[j] as u64, t as u64)?);
            pairs.push((i, j));
        }
    }
    let validated_links: Vec<Link> = benjamini_hochberg(&p_values, threshold)
        .into_iter()
        .map(|k| Link {
            i: pairs[k].0,
            j: pairs[k].1,
            p_value: p_values[k],
        })
        .collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for l in &validated_links {
        let (a, b) = (find(&mut parent, l.i), find(&mut parent, l.j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let clusters = groups.into_values().filter(|g| g.len() > 1).collect();
    Ok(ClusterSet {
        clusters,
        validated_links,
        fdr_threshold: threshold,
        tested_pairs: pairs.len(),
        skipped,
    })
}
