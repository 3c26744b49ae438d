use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{screen_consistent, LotteryMenu, LotteryPair, LotteryResponse, RiskError, Scale, PAIRS};
use crate::agents::PowerExpoUtility;
use crate::numerics::rng::streams;
use crate::numerics::{bca_intervals, nelder_mead, BcaInterval, RngStream, SimplexOptions};

pub const ALPHA_BOUNDS: (f64, f64) = (1e-4, 5.0);
pub const R_BOUNDS: (f64, f64) = (1e-4, 0.99);
pub const MU_BOUNDS: (f64, f64) = (1e-3, 10.0);
pub const MIN_SUBJECTS: usize = 10;
/// Share of the log-range within which an estimate counts as on the boundary.
const BOUNDARY_FRACTION: f64 = 1e-3;
const CELLS: usize = 2 * PAIRS;

fn ln_expected_utility(u: &PowerExpoUtility, lottery: &super::Lottery) -> f64 {
    let terms = lottery
        .outcomes
        .iter()
        .filter(|o| o.probability > 0.0)
        .map(|o| libm::log(o.probability) + u.ln_value(o.payoff));
    let terms: Vec<f64> = terms.collect();
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + libm::log(terms.iter().map(|t| libm::exp(t - top)).sum::<f64>())
}

/// `(ln E[U_R] - ln E[U_S]) / mu`, the logit of the risky choice.
fn choice_logit(u: &PowerExpoUtility, mu: f64, pair: &LotteryPair) -> f64 {
    (ln_expected_utility(u, &pair.risky) - ln_expected_utility(u, &pair.safe)) / mu
}

fn ln_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        -libm::log1p(libm::exp(-x))
    } else {
        x - libm::log1p(libm::exp(x))
    }
}

/// Probability of choosing the risky lottery,
/// `E[U_R]^(1/mu) / (E[U_R]^(1/mu) + E[U_S]^(1/mu))`.
pub fn choice_probability(utility: &PowerExpoUtility, mu: f64, pair: &LotteryPair) -> Result<f64, RiskError> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(RiskError::InvalidInput(format!("mu must be positive, got {mu}")));
    }
    for o in pair.safe.outcomes.iter().chain(&pair.risky.outcomes) {
        if !(o.payoff > 0.0 && o.payoff.is_finite()) {
            return Err(RiskError::InvalidPayoff(o.payoff));
        }
    }
    Ok(libm::exp(ln_sigmoid(choice_logit(utility, mu, pair))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskParams {
    pub alpha_u: f64,
    pub r_u: f64,
    pub mu: f64,
}

impl RiskParams {
    pub fn utility(&self) -> PowerExpoUtility {
        PowerExpoUtility { alpha_u: self.alpha_u, r_u: self.r_u }
    }

    fn from_z(z: &[f64]) -> Self {
        let map = |z: f64, (lo, hi): (f64, f64)| {
            let s = 1.0 / (1.0 + libm::exp(-z));
            libm::exp(libm::log(lo) + s * (libm::log(hi) - libm::log(lo)))
        };
        Self { alpha_u: map(z[0], ALPHA_BOUNDS), r_u: map(z[1], R_BOUNDS), mu: map(z[2], MU_BOUNDS) }
    }

    fn to_z(self) -> [f64; 3] {
        let inv = |x: f64, (lo, hi): (f64, f64)| {
            let s = ((libm::log(x) - libm::log(lo)) / (libm::log(hi) - libm::log(lo))).clamp(1e-12, 1.0 - 1e-12);
            libm::log(s / (1.0 - s))
        };
        [inv(self.alpha_u, ALPHA_BOUNDS), inv(self.r_u, R_BOUNDS), inv(self.mu, MU_BOUNDS)]
    }

    /// Names of the parameters sitting on their search bounds.
    pub fn on_boundary(&self) -> Vec<&'static str> {
        let near = |x: f64, (lo, hi): (f64, f64)| {
            let s = (libm::log(x) - libm::log(lo)) / (libm::log(hi) - libm::log(lo));
            !(BOUNDARY_FRACTION..=1.0 - BOUNDARY_FRACTION).contains(&s)
        };
        [("alpha_u", self.alpha_u, ALPHA_BOUNDS), ("r_u", self.r_u, R_BOUNDS), ("mu", self.mu, MU_BOUNDS)]
            .into_iter()
            .filter(|(_, x, b)| near(*x, *b))
            .map(|(n, _, _)| n)
            .collect()
    }
}

impl std::fmt::Display for RiskParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "alpha_u={:.5} r_u={:.5} mu={:.5}", self.alpha_u, self.r_u, self.mu)
    }
}

/// Risky and total choice counts per (scale, pair) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Counts {
    risky: [u32; CELLS],
    total: [u32; CELLS],
}

impl Counts {
    fn zero() -> Self {
        Self { risky: [0; CELLS], total: [0; CELLS] }
    }

    fn add(&mut self, other: &Counts) {
        for k in 0..CELLS {
            self.risky[k] += other.risky[k];
            self.total[k] += other.total[k];
        }
    }

    fn sum<'a>(items: impl IntoIterator<Item = &'a Counts>) -> Self {
        let mut c = Self::zero();
        for x in items {
            c.add(x);
        }
        c
    }
}

fn cell_pairs(menu: &LotteryMenu) -> Vec<LotteryPair> {
    Scale::ALL.iter().flat_map(|&s| menu.pairs(s)).collect()
}

fn ll_counts(pairs: &[LotteryPair], counts: &Counts, beta: &RiskParams) -> f64 {
    let u = beta.utility();
    let mut ll = 0.0;
    for (k, pair) in pairs.iter().enumerate() {
        if counts.total[k] == 0 {
            continue;
        }
        let x = choice_logit(&u, beta.mu, pair);
        let risky = f64::from(counts.risky[k]);
        let safe = f64::from(counts.total[k] - counts.risky[k]);
        if risky > 0.0 {
            ll += risky * ln_sigmoid(x);
        }
        if safe > 0.0 {
            ll += safe * ln_sigmoid(-x);
        }
    }
    ll
}

fn subject_counts(responses: &[LotteryResponse]) -> Vec<Counts> {
    let mut by_subject: BTreeMap<&str, Counts> = BTreeMap::new();
    for r in responses {
        let c = by_subject.entry(r.subject_id.as_str()).or_insert_with(Counts::zero);
        for (i, &risky) in r.choices.iter().enumerate() {
            let k = r.scale.index() * PAIRS + i;
            c.total[k] += 1;
            c.risky[k] += u32::from(risky);
        }
    }
    by_subject.into_values().collect()
}

/// `sum_i y_i ln P_i + (1 - y_i) ln(1 - P_i)` over all responses.
pub fn log_likelihood(menu: &LotteryMenu, beta: &RiskParams, responses: &[LotteryResponse]) -> f64 {
    let counts = Counts::sum(&subject_counts(responses));
    ll_counts(&cell_pairs(menu), &counts, beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskFitOptions {
    pub restarts: usize,
    /// Restarts per bootstrap refit, warm-started at the full-sample estimate.
    pub bootstrap_restarts: usize,
    /// 0 disables the bootstrap.
    pub bootstrap_replicates: usize,
    pub level: f64,
    pub seed: u64,
    pub exclude_inconsistent: bool,
    pub start: RiskParams,
    /// Standard deviation of the start jitter in the unconstrained coordinates.
    pub jitter: f64,
}

impl Default for RiskFitOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            bootstrap_restarts: 3,
            bootstrap_replicates: 1000,
            level: 0.95,
            seed: 0,
            exclude_inconsistent: true,
            start: RiskParams { alpha_u: 0.1, r_u: 0.3, mu: 0.1 },
            jitter: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub alpha_u: f64,
    pub r_u: f64,
    pub mu: f64,
    pub ci_alpha: Option<BcaInterval>,
    pub ci_r: Option<BcaInterval>,
    pub ci_mu: Option<BcaInterval>,
    pub log_likelihood: f64,
    pub subjects: usize,
    pub responses: usize,
    pub excluded: Vec<String>,
    pub restarts: usize,
    pub converged_restarts: usize,
}

impl RiskEstimate {
    pub fn params(&self) -> RiskParams {
        RiskParams { alpha_u: self.alpha_u, r_u: self.r_u, mu: self.mu }
    }
}

struct Best {
    beta: RiskParams,
    ll: f64,
    converged: usize,
}

fn maximize(pairs: &[LotteryPair], counts: &Counts, start: RiskParams, restarts: usize, jitter: f64, rng: &mut RngStream) -> Result<Best, RiskError> {
    let opts = SimplexOptions { initial_step: 0.5, ..Default::default() };
    let z0 = start.to_z();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut converged = 0;
    for k in 0..restarts.max(1) {
        let z: Vec<f64> = z0
            .iter()
            .map(|&z| if k == 0 { z } else { z + jitter * rng.standard_normal() })
            .collect();
        let res = nelder_mead(|z| ll_counts(pairs, counts, &RiskParams::from_z(z)), &z, &opts)?;
        converged += usize::from(res.converged);
        if best.as_ref().is_none_or(|(_, v)| res.value > *v) {
            best = Some((res.argmax, res.value));
        }
    }
    let (z, ll) = best.expect("at least one restart");
    Ok(Best { beta: RiskParams::from_z(&z), ll, converged })
}

/// Maximum-likelihood power-expo utility and logit noise, with BCa intervals
/// from resampling subjects.
pub fn fit_risk_mle(
    responses: &[LotteryResponse],
    menu: &LotteryMenu,
    options: &RiskFitOptions,
) -> Result<RiskEstimate, RiskError> {
    let (kept, excluded) = if options.exclude_inconsistent {
        screen_consistent(responses)
    } else {
        (responses.to_vec(), Vec::new())
    };
    let subjects = subject_counts(&kept);
    if subjects.len() < MIN_SUBJECTS {
        return Err(RiskError::InsufficientSubjects { found: subjects.len(), need: MIN_SUBJECTS });
    }
    let pairs = cell_pairs(menu);
    let total = Counts::sum(&subjects);
    let mut rng = RngStream::new(options.seed, streams::RESTARTS);
    let best = maximize(&pairs, &total, options.start, options.restarts, options.jitter, &mut rng)?;
    let boundary = best.beta.on_boundary();
    if !boundary.is_empty() {
        return Err(RiskError::Boundary {
            best: best.beta,
            log_likelihood: best.ll,
            parameters: boundary.iter().map(|s| s.to_string()).collect(),
        });
    }
    if best.converged == 0 {
        return Err(RiskError::NotConverged { best: best.beta, log_likelihood: best.ll });
    }

    let (mut ci_alpha, mut ci_r, mut ci_mu) = (None, None, None);
    if options.bootstrap_replicates > 0 {
        let refit = |sample: &[Counts]| -> Vec<f64> {
            let mut rng = RngStream::new(options.seed, streams::RESTARTS).fork(1);
            match maximize(&pairs, &Counts::sum(sample), best.beta, options.bootstrap_restarts, 0.3, &mut rng) {
                Ok(b) => vec![b.beta.alpha_u, b.beta.r_u, b.beta.mu],
                Err(_) => vec![f64::NAN; 3],
            }
        };
        let mut boot_rng = RngStream::new(options.seed, streams::BOOTSTRAP);
        let mut cis = bca_intervals(refit, &subjects, options.level, options.bootstrap_replicates, &mut boot_rng)?;
        // the intervals are centered on the full-sample estimate
        for (ci, v) in cis.iter_mut().zip([best.beta.alpha_u, best.beta.r_u, best.beta.mu]) {
            ci.estimate = v;
        }
        ci_mu = cis.pop();
        ci_r = cis.pop();
        ci_alpha = cis.pop();
    }
    Ok(RiskEstimate {
        alpha_u: best.beta.alpha_u,
        r_u: best.beta.r_u,
        mu: best.beta.mu,
        ci_alpha,
        ci_r,
        ci_mu,
        log_likelihood: best.ll,
        subjects: subjects.len(),
        responses: kept.len(),
        excluded,
        restarts: options.restarts.max(1),
        converged_restarts: best.converged,
    })
}
