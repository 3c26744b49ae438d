use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{choice_probability, LotteryMenu, RiskError, Scale, PAIRS};
use crate::agents::PowerExpoUtility;
use crate::numerics::RngStream;

/// One subject's ten choices on one scale; `true` picks the risky option.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LotteryResponse {
    pub subject_id: String,
    pub scale: Scale,
    pub choices: [bool; PAIRS],
}

impl LotteryResponse {
    pub fn safe_count(&self) -> usize {
        self.choices.iter().filter(|&&c| !c).count()
    }

    /// False when a safe choice follows a risky one at a lower pair index.
    pub fn is_consistent(&self) -> bool {
        let first_risky = self.choices.iter().position(|&c| c).unwrap_or(PAIRS);
        self.choices[first_risky..].iter().all(|&c| c)
    }
}

/// Splits responses into consistent ones and the subject ids screened out.
/// A subject inconsistent on either scale is dropped entirely.
pub fn screen_consistent(responses: &[LotteryResponse]) -> (Vec<LotteryResponse>, Vec<String>) {
    let mut excluded: Vec<String> = responses
        .iter()
        .filter(|r| !r.is_consistent())
        .map(|r| r.subject_id.clone())
        .collect();
    excluded.sort();
    excluded.dedup();
    let kept = responses
        .iter()
        .filter(|r| excluded.binary_search(&r.subject_id).is_err())
        .cloned()
        .collect();
    (kept, excluded)
}

const HEADER: [&str; 2 + PAIRS] = [
    "subject_id", "scale", "c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8", "c9", "c10",
];

/// Reads `subject_id,scale,c1..c10` with 0 = safe and 1 = risky.
pub fn read_responses<R: Read>(reader: R) -> Result<Vec<LotteryResponse>, RiskError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(RiskError::InvalidInput(format!(
            "expected header {}, got {}",
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let mut choices = [false; PAIRS];
        for (i, c) in choices.iter_mut().enumerate() {
            *c = match &rec[2 + i] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(RiskError::InvalidInput(format!("line {line}: choice c{} is {other:?}, need 0 or 1", i + 1)))
                }
            };
        }
        let scale = rec[1].parse().map_err(|e| RiskError::InvalidInput(format!("line {line}: {e}")))?;
        out.push(LotteryResponse { subject_id: rec[0].to_string(), scale, choices });
    }
    let mut keys: Vec<(&str, Scale)> = out.iter().map(|r| (r.subject_id.as_str(), r.scale)).collect();
    keys.sort();
    if let Some(w) = keys.windows(2).find(|w| w[0] == w[1]) {
        return Err(RiskError::InvalidInput(format!("subject {} answers scale {} twice", w[0].0, w[0].1)));
    }
    Ok(out)
}

pub fn write_responses<W: Write>(writer: W, responses: &[LotteryResponse]) -> Result<(), RiskError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for r in responses {
        let mut row = vec![r.subject_id.clone(), r.scale.to_string()];
        row.extend(r.choices.iter().map(|&c| if c { "1" } else { "0" }.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Subjects answering every scale by the logit rule at the given parameters.
pub fn synthesize_responses(
    menu: &LotteryMenu,
    utility: &PowerExpoUtility,
    mu: f64,
    subjects: usize,
    rng: &mut RngStream,
) -> Result<Vec<LotteryResponse>, RiskError> {
    let probs: Vec<Vec<f64>> = Scale::ALL
        .iter()
        .map(|&s| menu.pairs(s).iter().map(|p| choice_probability(utility, mu, p)).collect())
        .collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(subjects * Scale::ALL.len());
    for id in 0..subjects {
        for (k, &scale) in Scale::ALL.iter().enumerate() {
            let mut choices = [false; PAIRS];
            for (i, c) in choices.iter_mut().enumerate() {
                *c = rng.bernoulli(probs[k][i]);
            }
            out.push(LotteryResponse { subject_id: format!("s{id:04}"), scale, choices });
        }
    }
    Ok(out)
}

/// Choices of an expected-value maximizer.
pub fn risk_neutral_response(menu: &LotteryMenu, subject_id: &str, scale: Scale) -> LotteryResponse {
    let mut choices = [false; PAIRS];
    for (c, p) in choices.iter_mut().zip(menu.pairs(scale)) {
        *c = p.risky.expected_value() > p.safe.expected_value();
    }
    LotteryResponse { subject_id: subject_id.to_string(), scale, choices }
}
