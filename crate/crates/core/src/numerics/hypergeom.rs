use super::NumericsError;

fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let n = n as f64;
    let k = k as f64;
    libm::lgamma(n + 1.0) - libm::lgamma(k + 1.0) - libm::lgamma(n - k + 1.0)
}

/// Upper-tail hypergeometric probability `P(X >= overlap)`.
///
/// `X` counts the rounds marked in both of two sets of sizes `k1` and `k2` placed
/// uniformly at random among `total` rounds. Terms are summed in log space.
pub fn hypergeom_tail(overlap: u64, k1: u64, k2: u64, total: u64) -> Result<f64, NumericsError> {
    if k1 > total || k2 > total {
        return Err(NumericsError::InvalidInput(format!(
            "marked counts {k1}, {k2} exceed total {total}"
        )));
    }
    if overlap > k1.min(k2) {
        return Err(NumericsError::InvalidInput(format!(
            "overlap {overlap} exceeds min({k1}, {k2})"
        )));
    }
    // Support of X: max(0, k1 + k2 - total) ..= min(k1, k2)
    let lo = (k1 + k2).saturating_sub(total);
    let hi = k1.min(k2);
    let start = overlap.max(lo);
    if start == lo {
        return Ok(1.0);
    }
    let ln_denominator = ln_choose(total, k2);
    let terms: Vec<f64> = (start..=hi)
        .map(|x| ln_choose(k1, x) + ln_choose(total - k1, k2 - x) - ln_denominator)
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| libm::exp(t - max)).sum();
    Ok(libm::exp(max + libm::log(sum)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Enumerate every placement of k2 marks among `total` rounds against a fixed
    /// k1-set and count overlaps.
    fn enumerate_tail(overlap: u64, k1: u64, k2: u64, total: u64) -> f64 {
        let fixed: u32 = (1u32 << k1) - 1;
        let mut hits = 0u64;
        let mut all = 0u64;
        for mask in 0u32..(1 << total) {
            if u64::from(mask.count_ones()) == k2 {
                all += 1;
                if u64::from((mask & fixed).count_ones()) >= overlap {
                    hits += 1;
                }
            }
        }
        hits as f64 / all as f64
    }

    #[test]
    fn certain_event() {
        assert_eq!(hypergeom_tail(5, 5, 5, 5).unwrap(), 1.0);
    }

    #[test]
    fn two_of_four() {
        let p = hypergeom_tail(2, 2, 2, 4).unwrap();
        assert!((p - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn zero_overlap_is_one() {
        assert_eq!(hypergeom_tail(0, 7, 9, 30).unwrap(), 1.0);
    }

    #[test]
    fn bounds_rejected() {
        assert!(hypergeom_tail(4, 3, 5, 10).is_err());
        assert!(hypergeom_tail(1, 11, 5, 10).is_err());
    }

    #[test]
    fn matches_enumeration() {
        for total in 1..=12u64 {
            for k1 in 0..=total {
                for k2 in 0..=total {
                    for ov in 0..=k1.min(k2) {
                        let p = hypergeom_tail(ov, k1, k2, total).unwrap();
                        let q = enumerate_tail(ov, k1, k2, total);
                        assert!((p - q).abs() < 1e-10, "{ov} {k1} {k2} {total}: {p} vs {q}");
                    }
                }
            }
        }
    }

    #[test]
    fn tiny_tails_stay_positive() {
        // 40 of 80 identical marks: 1 / C(80, 40), about 9.3e-24.
        let p = hypergeom_tail(40, 40, 40, 80).unwrap();
        assert!(p > 0.0 && p < 1e-22);
    }

    proptest! {
        #[test]
        fn monotone_in_overlap(total in 1u64..200, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let k1 = (a * total as f64) as u64;
            let k2 = (b * total as f64) as u64;
            let mut prev = 1.0;
            for ov in 0..=k1.min(k2) {
                let p = hypergeom_tail(ov, k1, k2, total).unwrap();
                prop_assert!(p <= prev + 1e-12);
                prev = p;
            }
        }
    }
}
