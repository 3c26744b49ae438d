//! Post-market lottery task for one pair of sessions, and the payout it feeds.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use impactlab::numerics::RngStream;
use impactlab::risk::{LotteryMenu, LotteryPair, LotteryResponse, Scale, PAIRS};

use crate::protocol::{ErrorCode, LotteryChoice, LotteryTask, ProtocolError};
use crate::scoring::{compute_payout, draw_lottery, roll_dice, Payout, SessionEarnings};

/// Stream id of the payout dice.
pub const PAYOUT_STREAM: u64 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum LotteryEntry {
    Choice { token: String, subject_id: String, choice: LotteryChoice, ts_ms: u64 },
    Payout { token: String, payout: Payout, ts_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
struct SubjectTask {
    subject_id: String,
    choices: [[Option<bool>; PAIRS]; 2],
    payout: Option<Payout>,
}

impl SubjectTask {
    fn answered(&self) -> Vec<LotteryChoice> {
        Scale::ALL
            .iter()
            .flat_map(|&scale| {
                self.choices[scale.index()].iter().enumerate().filter_map(move |(k, c)| {
                    c.map(|risky| LotteryChoice { scale, index: k + 1, risky, submit: false })
                })
            })
            .collect()
    }

    fn complete(&self) -> Option<[[bool; PAIRS]; 2]> {
        let mut out = [[false; PAIRS]; 2];
        for s in 0..2 {
            for k in 0..PAIRS {
                out[s][k] = self.choices[s][k]?;
            }
        }
        Some(out)
    }
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Debug)]
pub struct LotteryDesk {
    pair_id: String,
    menu: LotteryMenu,
    seed: u64,
    subjects: BTreeMap<String, SubjectTask>,
    path: Option<PathBuf>,
}

impl LotteryDesk {
    pub fn new(pair_id: &str, menu: LotteryMenu, seed: u64, path: Option<&Path>) -> Self {
        Self { pair_id: pair_id.to_string(), menu, seed, subjects: BTreeMap::new(), path: path.map(Path::to_path_buf) }
    }

    /// Replays a desk's log.
    pub fn restore(pair_id: &str, menu: LotteryMenu, seed: u64, path: &Path) -> std::io::Result<Self> {
        let mut desk = Self::new(pair_id, menu, seed, Some(path));
        if path.exists() {
            for line in std::fs::read_to_string(path)?.lines().filter(|l| !l.trim().is_empty()) {
                // a torn final line from a crash is skipped
                let Ok(entry) = serde_json::from_str::<LotteryEntry>(line) else { continue };
                match entry {
                    LotteryEntry::Choice { token, subject_id, choice, .. } => {
                        let t = desk.subjects.entry(token).or_default();
                        t.subject_id = subject_id;
                        t.choices[choice.scale.index()][choice.index - 1] = Some(choice.risky);
                    }
                    LotteryEntry::Payout { token, payout, .. } => {
                        desk.subjects.entry(token).or_default().payout = Some(payout);
                    }
                }
            }
        }
        Ok(desk)
    }

    pub fn pair_id(&self) -> &str {
        &self.pair_id
    }

    fn persist(&self, entry: &LotteryEntry) -> Result<(), ProtocolError> {
        let Some(path) = &self.path else { return Ok(()) };
        let write = || -> std::io::Result<()> {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            let mut line = serde_json::to_string(entry).map_err(std::io::Error::from)?;
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.sync_data()
        };
        write().map_err(|e| ProtocolError::new(ErrorCode::Halted, format!("lottery log: {e}")))
    }

    pub fn pairs(&self) -> Vec<LotteryPair> {
        Scale::ALL.iter().flat_map(|&s| self.menu.pairs(s)).collect()
    }

    pub fn task(&self, token: &str) -> LotteryTask {
        LotteryTask {
            pairs: self.pairs(),
            answered: self.subjects.get(token).map(SubjectTask::answered).unwrap_or_default(),
        }
    }

    pub fn payout(&self, token: &str) -> Option<&Payout> {
        self.subjects.get(token).and_then(|t| t.payout.as_ref())
    }

    /// Records one choice. Choices stay editable until a submit with every pair
    /// answered, which fixes the payout.
    pub fn choose(
        &mut self,
        token: &str,
        subject_id: &str,
        choice: LotteryChoice,
        earnings: &[SessionEarnings],
        now_ms: u64,
    ) -> Result<Option<Payout>, ProtocolError> {
        if let Some(p) = self.payout(token) {
            return Ok(Some(p.clone()));
        }
        if !(1..=PAIRS).contains(&choice.index) {
            return Err(ProtocolError::new(ErrorCode::BadMessage, format!("pair index {} is outside 1..=10", choice.index)));
        }
        self.persist(&LotteryEntry::Choice { token: token.into(), subject_id: subject_id.into(), choice, ts_ms: now_ms })?;
        let task = self.subjects.entry(token.to_string()).or_default();
        task.subject_id = subject_id.to_string();
        task.choices[choice.scale.index()][choice.index - 1] = Some(choice.risky);
        if !choice.submit {
            return Ok(None);
        }
        let Some(all) = task.complete() else {
            let missing = 2 * PAIRS - task.answered().len();
            return Err(ProtocolError::new(ErrorCode::Incomplete, format!("{missing} pairs unanswered")));
        };
        let mut rng = RngStream::new(self.seed, PAYOUT_STREAM).fork(fnv1a(token));
        let dice = roll_dice(&mut rng);
        let draw = draw_lottery(&self.menu, &all, &mut rng);
        let payout = compute_payout(earnings, dice, Some(draw))
            .map_err(|e| ProtocolError::new(ErrorCode::Incomplete, e.to_string()))?;
        self.persist(&LotteryEntry::Payout { token: token.into(), payout: payout.clone(), ts_ms: now_ms })?;
        self.subjects.get_mut(token).expect("inserted").payout = Some(payout.clone());
        Ok(Some(payout))
    }

    /// Completed tasks in the response-file layout.
    pub fn responses(&self) -> Vec<LotteryResponse> {
        self.subjects
            .values()
            .filter_map(|t| t.complete().map(|c| (t, c)))
            .flat_map(|(t, c)| {
                Scale::ALL.map(|scale| LotteryResponse { subject_id: t.subject_id.clone(), scale, choices: c[scale.index()] })
            })
            .collect()
    }

    pub fn payouts(&self) -> Vec<(String, Payout)> {
        self.subjects.values().filter_map(|t| t.payout.clone().map(|p| (t.subject_id.clone(), p))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn earnings() -> Vec<SessionEarnings> {
        ["a", "b"]
            .iter()
            .map(|id| SessionEarnings { session_id: id.to_string(), complete: true, net_francs: 40.0, forecast_francs: 4.0 })
            .collect()
    }

    fn answer_all(desk: &mut LotteryDesk, token: &str, submit_last: bool) -> Option<Payout> {
        let mut last = None;
        for scale in Scale::ALL {
            for index in 1..=PAIRS {
                let submit = submit_last && scale == Scale::X10 && index == PAIRS;
                let c = LotteryChoice { scale, index, risky: index > 5, submit };
                last = desk.choose(token, "p:0", c, &earnings(), 0).unwrap();
            }
        }
        last
    }

    #[test]
    fn submit_needs_every_pair() {
        let mut desk = LotteryDesk::new("p", LotteryMenu::default(), 1, None);
        let c = LotteryChoice { scale: Scale::X2, index: 1, risky: false, submit: true };
        assert_eq!(desk.choose("t", "p:0", c, &earnings(), 0).unwrap_err().code, ErrorCode::Incomplete);
        let p = answer_all(&mut desk, "t", true).unwrap();
        // 40 + 4 francs at 0.25 plus the lottery
        assert!((p.total_eur - 11.0 - p.lottery.unwrap().payoff_eur).abs() < 1e-12);
        assert_eq!(desk.responses().len(), 2);
        assert_eq!(desk.responses()[0].safe_count(), 5);
    }

    #[test]
    fn edits_before_submit_and_resume() {
        let mut desk = LotteryDesk::new("p", LotteryMenu::default(), 1, None);
        let mut c = LotteryChoice { scale: Scale::X2, index: 3, risky: true, submit: false };
        desk.choose("t", "p:0", c, &earnings(), 0).unwrap();
        c.risky = false;
        desk.choose("t", "p:0", c, &earnings(), 0).unwrap();
        let task = desk.task("t");
        assert_eq!(task.answered.len(), 1);
        assert!(!task.answered[0].risky);
        assert_eq!(task.pairs.len(), 20);
    }

    #[test]
    fn restored_desk_matches() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let mut desk = LotteryDesk::new("p", LotteryMenu::default(), 9, Some(&path));
        let paid = answer_all(&mut desk, "t", true).unwrap();
        let back = LotteryDesk::restore("p", LotteryMenu::default(), 9, &path).unwrap();
        assert_eq!(back.payout("t"), Some(&paid));
        assert_eq!(back.responses(), desk.responses());
        // payout is fixed once made
        let mut again = LotteryDesk::new("p", LotteryMenu::default(), 9, None);
        assert_eq!(answer_all(&mut again, "t", true).unwrap(), paid);
    }
}
