use std::path::Path;
use std::time::Instant;

use impactlab::agents::{Roster, RosterEntry, StrategySpec};
use impactlab::market::{write_log_string, Action, Decision, Market, MarketConfig, Position};
use impactlab_server::protocol::{ErrorCode, Message};
use impactlab_server::session::{LiveSession, Outbound, SessionError, SessionPlan, PRACTICE_ROUNDS};
use impactlab_server::wal::{read_wal, WalEntry};

const ROUND_MS: u64 = 1000;

fn mixed_plan(id: &str) -> SessionPlan {
    let config = MarketConfig {
        depth_n: 4,
        seed: 3,
        fixed_end_round: Some(7),
        round_seconds: ROUND_MS as f64 / 1000.0,
        ..MarketConfig::default()
    };
    let roster = Roster {
        agents: vec![
            RosterEntry { count: 2, spec: StrategySpec::Human },
            RosterEntry { count: 1, spec: StrategySpec::BuyAndHold },
            RosterEntry {
                count: 1,
                spec: StrategySpec::Contrarian {
                    omega0: 0.0,
                    omega1: -0.5,
                    band: 0.01,
                    forecast_noise: 0.02,
                    omega0_sd: 0.0,
                    omega1_sd: 0.0,
                },
            },
        ],
    };
    let mut plan = SessionPlan::new(id, config, roster);
    plan.tokens = vec!["tok-a".into(), "tok-b".into()];
    plan
}

/// Seat 0 flips its position on even rounds; seat 1 buys once at round 1 and
/// otherwise never answers.
fn script(round: u32, trader: usize, position: Position) -> Option<Action> {
    match (trader, round % 2) {
        (0, 0) => Some(if position == Position::Out { Action::Buy } else { Action::Sell }),
        (1, _) if round == 1 => Some(Action::Buy),
        _ => None,
    }
}

/// Plays the open round of `s` by the script and settles it at the deadline.
fn play_round(s: &mut LiveSession, now: &mut u64) -> Result<Vec<Outbound>, SessionError> {
    let t = s.market().round();
    let deadline = s.deadline().expect("a round is open");
    for trader in 0..2 {
        let pos = s.market().traders()[trader].position;
        if let Some(a) = script(t, trader, pos) {
            s.decision(trader, Some(t), a, *now + 10).unwrap();
        }
    }
    s.forecast(0, Some(t), s.market().price() * 1.02, *now + 20).unwrap();
    *now = deadline;
    s.tick(deadline)
}

fn run_through(s: &mut LiveSession, now: &mut u64) {
    while !s.is_over() {
        play_round(s, now).unwrap();
    }
}

fn fresh(dir: &Path, id: &str) -> (LiveSession, u64) {
    let now = 1_000;
    let mut s = LiveSession::create(mixed_plan(id), Some(&dir.join(format!("{id}.wal"))), now).unwrap();
    s.start(now).unwrap();
    (s, now)
}

#[test]
fn bots_only_session_needs_no_timer_waits() {
    let dir = tempfile::tempdir().unwrap();
    let rounds = 100;
    let config = MarketConfig { fixed_end_round: Some(rounds - 1), seed: 5, ..MarketConfig::default() };
    let started = Instant::now();
    let mut s = LiveSession::create(SessionPlan::bots_only("bots", config), Some(&dir.path().join("b.wal")), 0).unwrap();
    s.start(0).unwrap();
    let elapsed = started.elapsed();
    assert!(s.is_over());
    assert_eq!(s.export().unwrap().rounds.len(), rounds as usize);
    assert!(elapsed.as_millis() < u128::from(rounds) * 100, "took {elapsed:?}");
}

#[test]
fn round_open_deadline_is_shared() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = LiveSession::create(mixed_plan("d"), Some(&dir.path().join("d.wal")), 0).unwrap();
    let out = s.start(5_000).unwrap();
    let deadlines: Vec<u64> = out
        .iter()
        .filter_map(|o| match &o.envelope.message {
            Message::RoundOpen(r) => Some(r.deadline_ms),
            _ => None,
        })
        .collect();
    assert_eq!(deadlines, vec![5_000 + ROUND_MS; 2]);
}

#[test]
fn late_decision_is_rejected_and_position_carries() {
    let dir = tempfile::tempdir().unwrap();
    let (mut s, now) = fresh(dir.path(), "late");
    let deadline = s.deadline().unwrap();
    let err = s.decision(0, Some(0), Action::Buy, deadline + 100).unwrap_err();
    assert_eq!(err.code, ErrorCode::Late);
    let out = s.tick(deadline).unwrap();
    let result = out
        .iter()
        .find_map(|o| match &o.envelope.message {
            Message::RoundResult(r) if o.trader_id == 0 => Some(r.clone()),
            _ => None,
        })
        .unwrap();
    assert!(result.carried_over);
    assert_eq!(result.own.action, Action::None);
    assert_eq!(result.holdings.position, Position::Out);
    assert!(now < deadline);
}

#[test]
fn last_decision_before_deadline_wins() {
    let dir = tempfile::tempdir().unwrap();
    let (mut s, now) = fresh(dir.path(), "dup");
    s.decision(0, Some(0), Action::Buy, now + 1).unwrap();
    s.decision(0, Some(0), Action::None, now + 2).unwrap();
    s.decision(1, Some(0), Action::None, now + 3).unwrap();
    s.decision(1, Some(0), Action::Buy, now + 4).unwrap();
    let d = s.deadline().unwrap();
    s.tick(d).unwrap();
    let r = &s.market().rounds()[0];
    assert_eq!(r.per_trader[0].action, Action::None);
    assert_eq!(r.per_trader[1].action, Action::Buy);
}

#[test]
fn decisions_are_checked_against_the_open_round() {
    let dir = tempfile::tempdir().unwrap();
    let (mut s, now) = fresh(dir.path(), "chk");
    assert_eq!(s.decision(0, Some(1), Action::Buy, now).unwrap_err().code, ErrorCode::WrongRound);
    assert_eq!(s.decision(0, None, Action::Buy, now).unwrap_err().code, ErrorCode::WrongRound);
    assert_eq!(s.decision(0, Some(0), Action::Sell, now).unwrap_err().code, ErrorCode::IllegalAction);
    assert_eq!(s.decision(2, Some(0), Action::Buy, now).unwrap_err().code, ErrorCode::NotJoined);
    assert_eq!(s.forecast(0, Some(0), -1.0, now).unwrap_err().code, ErrorCode::BadMessage);
}

#[test]
fn crash_after_persist_resumes_without_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let (mut clean, mut now) = fresh(dir.path(), "clean");
    run_through(&mut clean, &mut now);
    let expected = write_log_string(&clean.export().unwrap());

    let (mut s, mut now) = fresh(dir.path(), "crash");
    s.crash_after_persist = Some(3);
    loop {
        match play_round(&mut s, &mut now) {
            Ok(_) => {}
            Err(SessionError::InjectedCrash(3)) => break,
            Err(e) => panic!("{e}"),
        }
    }
    let rounds_before = s.market().rounds().to_vec();
    drop(s);
    let (mut back, _) = LiveSession::recover(&dir.path().join("crash.wal"), now).unwrap();
    assert_eq!(back.market().round(), 4);
    assert_eq!(back.market().rounds(), &rounds_before[..]);
    assert_eq!(back.rewards(), clean_rewards_after(&dir.path().join("clean.wal"), 3).as_slice());
    run_through(&mut back, &mut now);
    assert_eq!(write_log_string(&back.export().unwrap()), expected);
    assert_eq!(back.rewards(), clean.rewards());
}

fn clean_rewards_after(wal: &Path, last: u32) -> Vec<f64> {
    let mut acc = vec![0.0; 4];
    for e in read_wal(wal).unwrap() {
        if let WalEntry::Settled { t, rewards, .. } = e {
            if t <= last {
                for (a, r) in acc.iter_mut().zip(rewards) {
                    *a += r;
                }
            }
        }
    }
    acc
}

#[test]
fn crash_inside_an_open_round_keeps_its_decisions() {
    let dir = tempfile::tempdir().unwrap();
    let (mut s, now) = fresh(dir.path(), "open");
    s.decision(0, Some(0), Action::Buy, now + 5).unwrap();
    let deadline = s.deadline().unwrap();
    drop(s);
    let (mut back, out) = LiveSession::recover(&dir.path().join("open.wal"), now + 50).unwrap();
    assert!(out.is_empty());
    assert_eq!(back.deadline(), Some(deadline));
    back.tick(deadline).unwrap();
    assert_eq!(back.market().rounds()[0].per_trader[0].action, Action::Buy);
}

#[test]
fn tampered_log_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let (mut s, mut now) = fresh(dir.path(), "tamper");
    run_through(&mut s, &mut now);
    let path = dir.path().join("tamper.wal");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let k = lines.iter().position(|l| l.contains("\"entry\":\"settled\"")).unwrap();
    let mut entry: serde_json::Value = serde_json::from_str(&lines[k]).unwrap();
    let price = entry["record"]["price"].as_f64().unwrap();
    entry["record"]["price"] = serde_json::json!(price * 1.001);
    lines[k] = entry.to_string();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    assert!(matches!(LiveSession::recover(&path, now), Err(SessionError::Divergence(0))));
}

#[test]
fn logged_decisions_replay_every_broadcast_price() {
    let dir = tempfile::tempdir().unwrap();
    let (mut s, mut now) = fresh(dir.path(), "replay");
    let mut broadcast = Vec::new();
    while !s.is_over() {
        for o in play_round(&mut s, &mut now).unwrap() {
            if let Message::RoundResult(r) = o.envelope.message {
                if o.trader_id == 0 {
                    broadcast.push(r.price);
                }
            }
        }
    }
    let log = s.export().unwrap();
    let entries = read_wal(&dir.path().join("replay.wal")).unwrap();
    let WalEntry::Plan { plan, .. } = &entries[0] else { panic!("plan first") };
    let mut market = Market::new(plan.effective_config()).unwrap();
    let mut replayed = Vec::new();
    for e in &entries {
        if let WalEntry::Settled { decisions, .. } = e {
            replayed.push(market.step(decisions).unwrap().price);
        }
    }
    assert_eq!(replayed, broadcast);
    assert_eq!(write_log_string(&Market::replay(&log).unwrap()), write_log_string(&log));
}

#[test]
fn rejoin_restores_private_state() {
    let dir = tempfile::tempdir().unwrap();
    let (mut s, mut now) = fresh(dir.path(), "rejoin");
    s.join(0, now).unwrap();
    play_round(&mut s, &mut now).unwrap();
    s.disconnect(0, now).unwrap();
    let out = s.join(0, now + 1).unwrap();
    let Message::Welcome(w) = &out[0].envelope.message else { panic!("welcome first") };
    assert_eq!(w.prices, s.market().prices());
    assert_eq!(w.holdings.position, Position::In);
    assert_eq!(w.forecasts.len(), 1);
    assert!(matches!(out[1].envelope.message, Message::RoundOpen(_)));
}

#[test]
fn settle_early_when_every_connected_human_decided() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = mixed_plan("early");
    plan.settle_early = true;
    let mut s = LiveSession::create(plan, Some(&dir.path().join("early.wal")), 0).unwrap();
    s.join(0, 0).unwrap();
    s.start(0).unwrap();
    // seat 1 is disconnected and does not hold the round open
    let out = s.decision(0, Some(0), Action::Buy, 10).unwrap();
    assert_eq!(s.market().round(), 1);
    assert!(out.iter().any(|o| matches!(o.envelope.message, Message::RoundResult(_))));
}

#[test]
fn practice_session_is_ten_rounds() {
    let mut plan = SessionPlan::bots_only("p", MarketConfig { seed: 1, ..MarketConfig::default() });
    plan.practice = true;
    let mut s = LiveSession::create(plan, None, 0).unwrap();
    s.start(0).unwrap();
    assert_eq!(s.export().unwrap().rounds.len(), PRACTICE_ROUNDS as usize);
}

#[test]
fn abort_ends_the_session_for_everyone() {
    let dir = tempfile::tempdir().unwrap();
    let (mut s, now) = fresh(dir.path(), "abort");
    let out = s.abort("fire alarm", now).unwrap();
    assert_eq!(out.len(), 2);
    assert!(out.iter().all(|o| matches!(&o.envelope.message, Message::SessionEnd(e) if e.aborted)));
    assert!(s.export().is_err());
    let (back, _) = LiveSession::recover(&dir.path().join("abort.wal"), now).unwrap();
    assert!(back.is_over());
}

#[test]
fn bot_decisions_are_logged_at_round_open() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = fresh(dir.path(), "bots");
    drop(s);
    let entries = read_wal(&dir.path().join("bots.wal")).unwrap();
    let bots = entries
        .iter()
        .find_map(|e| match e {
            WalEntry::RoundOpen { bots, .. } => Some(bots.clone()),
            _ => None,
        })
        .unwrap();
    assert_eq!(bots.iter().map(|(i, _)| *i).collect::<Vec<_>>(), vec![2, 3]);
    assert_eq!(bots[0].1, Decision::act(Action::Buy));
}
