//! Authoritative per-session state machine. Time is passed in explicitly
//! (UTC milliseconds), so the machine runs identically under a real clock and
//! in tests.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use impactlab::agents::{AgentsError, Roster, Seat, StrategySpec};
use impactlab::market::{Action, Agent, Decision, Market, MarketConfig, MarketError, Position, SessionLog, TraderState};

use crate::protocol::{
    Envelope, ErrorCode, Holdings, Message, ProtocolError, RoundOpen, RoundResult, SessionEnd, SessionPhase, Welcome,
};
use crate::scoring::ForecastRule;
use crate::wal::{read_wal, Wal, WalEntry, WalError, WAL_VERSION};

/// Rounds in a practice session.
pub const PRACTICE_ROUNDS: u32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionPlan {
    pub session_id: String,
    pub config: MarketConfig,
    pub roster: Roster,
    /// Sessions sharing a pair id are the two paid runs of one group and must
    /// share the noise seed.
    #[serde(default)]
    pub pair_id: Option<String>,
    /// Practice sessions last ten rounds and are excluded from payout.
    #[serde(default)]
    pub practice: bool,
    /// Tokens of the human seats in seat order; generated when empty.
    #[serde(default)]
    pub tokens: Vec<String>,
    #[serde(default)]
    pub forecast_rule: ForecastRule,
    /// Settle as soon as every connected human has decided instead of waiting
    /// for the deadline.
    #[serde(default)]
    pub settle_early: bool,
}

impl SessionPlan {
    pub fn bots_only(session_id: &str, config: MarketConfig) -> Self {
        let roster = Roster::uniform(StrategySpec::BuyAndHold, config.depth_n);
        Self::new(session_id, config, roster)
    }

    pub fn new(session_id: &str, config: MarketConfig, roster: Roster) -> Self {
        Self {
            session_id: session_id.to_string(),
            config,
            roster,
            pair_id: None,
            practice: false,
            tokens: Vec::new(),
            forecast_rule: ForecastRule::default(),
            settle_early: false,
        }
    }

    /// Config actually played: practice sessions are cut to ten rounds.
    pub fn effective_config(&self) -> MarketConfig {
        let mut c = self.config.clone();
        if self.practice {
            c.fixed_end_round = Some(PRACTICE_ROUNDS - 1);
        }
        c
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Agents(#[from] AgentsError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("event log: {0}")]
    Wal(#[from] WalError),
    #[error("recovered round {0} differs from the logged record")]
    Divergence(u32),
    #[error("injected crash after persisting round {0}")]
    InjectedCrash(u32),
    #[error("session halted after a persistence failure; recover from the event log")]
    Halted,
    #[error("only finished sessions can be exported")]
    NotFinished,
}

/// A message for one human seat.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub trader_id: usize,
    pub envelope: Envelope,
}

enum Slot {
    Bot(Box<dyn Agent>),
    Human { token: String, connected: bool },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Lobby,
    Open { round: u32, deadline_ms: u64 },
    /// Running with no round open: only between settlement and the next open,
    /// or after recovery.
    Between,
    Ended,
    Aborted,
}

pub fn legal_actions(position: Position) -> Vec<Action> {
    match position {
        Position::In => vec![Action::None, Action::Sell],
        Position::Out => vec![Action::None, Action::Buy],
    }
}

fn holdings(st: &TraderState) -> Holdings {
    Holdings { cash: st.cash, shares: st.shares, position: st.position }
}

pub struct LiveSession {
    plan: SessionPlan,
    market: Market,
    slots: Vec<Slot>,
    actions: Vec<Option<Action>>,
    forecasts: Vec<Option<f64>>,
    rewards: Vec<f64>,
    phase: Phase,
    wal: Option<Wal>,
    halted: bool,
    /// Test hook: fail right after the settlement of this round is persisted.
    pub crash_after_persist: Option<u32>,
}

impl std::fmt::Debug for LiveSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveSession")
            .field("session_id", &self.plan.session_id)
            .field("round", &self.market.round())
            .field("phase", &self.phase)
            .finish()
    }
}

impl LiveSession {
    /// Builds the session and writes the plan as the first log entry.
    pub fn create(plan: SessionPlan, wal_path: Option<&Path>, now_ms: u64) -> Result<Self, SessionError> {
        let mut s = Self::build(plan)?;
        if let Some(path) = wal_path {
            let mut wal = Wal::create(path)?;
            wal.append(&WalEntry::Plan { wal_version: WAL_VERSION, plan: s.plan.clone(), ts_ms: now_ms })?;
            s.wal = Some(wal);
        }
        Ok(s)
    }

    fn build(mut plan: SessionPlan) -> Result<Self, SessionError> {
        if plan.session_id.is_empty() {
            return Err(SessionError::Plan("session_id is empty".into()));
        }
        let config = plan.effective_config();
        let humans = plan.roster.human_count();
        if plan.tokens.is_empty() {
            plan.tokens = (0..humans).map(|_| new_token()).collect();
        }
        if plan.tokens.len() != humans {
            return Err(SessionError::Plan(format!("{} tokens for {humans} human seats", plan.tokens.len())));
        }
        let mut sorted = plan.tokens.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != plan.tokens.len() {
            return Err(SessionError::Plan("tokens must be distinct".into()));
        }
        let mut tokens = plan.tokens.iter();
        let slots = plan
            .roster
            .seats(&config)?
            .into_iter()
            .map(|seat| match seat {
                Seat::Bot(b) => Slot::Bot(b),
                Seat::Human => Slot::Human { token: tokens.next().expect("counted").clone(), connected: false },
            })
            .collect::<Vec<_>>();
        let market = Market::new(config)?;
        let n = slots.len();
        Ok(Self {
            plan,
            market,
            slots,
            actions: vec![None; n],
            forecasts: vec![None; n],
            rewards: vec![0.0; n],
            phase: Phase::Lobby,
            wal: None,
            halted: false,
            crash_after_persist: None,
        })
    }

    /// Rebuilds a session from its event log and keeps appending to it. Every
    /// settled round is re-run and checked against the logged record.
    pub fn recover(wal_path: &Path, now_ms: u64) -> Result<(Self, Vec<Outbound>), SessionError> {
        let entries = read_wal(wal_path)?;
        let plan = match &entries[0] {
            WalEntry::Plan { plan, .. } => plan.clone(),
            _ => unreachable!("read_wal checks the plan entry"),
        };
        let mut s = Self::build(plan)?;
        for e in &entries[1..] {
            match e {
                WalEntry::Plan { .. } => return Err(SessionError::Plan("second plan entry".into())),
                WalEntry::Started { .. } => s.phase = Phase::Between,
                WalEntry::RoundOpen { t, deadline_ms, bots } => {
                    if *t != s.market.round() {
                        return Err(SessionError::Divergence(*t));
                    }
                    // bots are re-run so their internal state matches the log
                    if s.bot_decisions() != *bots {
                        return Err(SessionError::Divergence(*t));
                    }
                    s.clear_pending();
                    s.load_bots(bots);
                    s.phase = Phase::Open { round: *t, deadline_ms: *deadline_ms };
                }
                WalEntry::Connection { .. } => {}
                WalEntry::Decision { t, trader_id, action, .. } if *t == s.market.round() => {
                    s.actions[*trader_id] = Some(*action);
                }
                WalEntry::Forecast { t, trader_id, price, .. } if *t == s.market.round() => {
                    s.forecasts[*trader_id] = Some(*price);
                }
                WalEntry::Decision { t, .. } | WalEntry::Forecast { t, .. } => return Err(SessionError::Divergence(*t)),
                WalEntry::Settled { t, decisions, record, rewards, .. } => {
                    let replayed = s.market.step(decisions)?;
                    if replayed != record {
                        return Err(SessionError::Divergence(*t));
                    }
                    for (acc, r) in s.rewards.iter_mut().zip(rewards) {
                        *acc += r;
                    }
                    s.clear_pending();
                    s.phase = Phase::Between;
                }
                WalEntry::Ended { .. } => s.phase = Phase::Ended,
                WalEntry::Aborted { .. } => s.phase = Phase::Aborted,
            }
        }
        s.wal = Some(Wal::reopen(wal_path)?);
        let out = if s.phase == Phase::Between { s.advance(now_ms)? } else { Vec::new() };
        Ok((s, out))
    }

    pub fn plan(&self) -> &SessionPlan {
        &self.plan
    }

    pub fn session_id(&self) -> &str {
        &self.plan.session_id
    }

    pub fn market(&self) -> &Market {
        &self.market
    }

    pub fn phase(&self) -> SessionPhase {
        match self.phase {
            Phase::Lobby => SessionPhase::Lobby,
            Phase::Open { .. } | Phase::Between => SessionPhase::Running,
            Phase::Ended => SessionPhase::Ended,
            Phase::Aborted => SessionPhase::Aborted,
        }
    }

    pub fn is_over(&self) -> bool {
        matches!(self.phase, Phase::Ended | Phase::Aborted)
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Deadline of the open round, if one is open.
    pub fn deadline(&self) -> Option<u64> {
        match self.phase {
            Phase::Open { deadline_ms, .. } => Some(deadline_ms),
            _ => None,
        }
    }

    /// `(trader_id, token)` per human seat.
    pub fn tokens(&self) -> Vec<(usize, String)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match s {
                Slot::Human { token, .. } => Some((i, token.clone())),
                Slot::Bot(_) => None,
            })
            .collect()
    }

    pub fn trader_for_token(&self, token: &str) -> Option<usize> {
        self.slots.iter().position(|s| matches!(s, Slot::Human { token: t, .. } if t == token))
    }

    fn humans(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots.iter().enumerate().filter(|(_, s)| matches!(s, Slot::Human { .. })).map(|(i, _)| i)
    }

    fn envelope(&self, round: Option<u32>, message: Message, now_ms: u64) -> Envelope {
        Envelope::new(&self.plan.session_id, round, message).stamped(now_ms)
    }

    fn persist(&mut self, entry: WalEntry) -> Result<(), SessionError> {
        if let Some(w) = self.wal.as_mut() {
            if let Err(e) = w.append(&entry) {
                self.halted = true;
                tracing::error!(session = %self.plan.session_id, error = %e, "event log write failed; halting");
                return Err(e.into());
            }
        }
        Ok(())
    }

    fn check_live(&self) -> Result<(), SessionError> {
        if self.halted {
            Err(SessionError::Halted)
        } else {
            Ok(())
        }
    }

    /// Full private state for a (re)joining human, followed by the open round
    /// or the session end.
    pub fn join(&mut self, trader_id: usize, now_ms: u64) -> Result<Vec<Outbound>, SessionError> {
        self.check_live()?;
        match self.slots.get_mut(trader_id) {
            Some(Slot::Human { connected, .. }) => *connected = true,
            _ => return Err(SessionError::Plan(format!("seat {trader_id} is not a human seat"))),
        }
        self.persist(WalEntry::Connection { trader_id, connected: true, ts_ms: now_ms })?;
        let st = &self.market.traders()[trader_id];
        let prices = self.market.prices().to_vec();
        let welcome = Welcome {
            trader_id,
            phase: self.phase(),
            practice: self.plan.practice,
            round_seconds: self.market.config().round_seconds,
            endowment: self.market.config().endowment,
            returns: prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect(),
            prices,
            holdings: holdings(st),
            forecasts: self.market.rounds().iter().map(|r| r.per_trader[trader_id].forecast).collect(),
            forecast_rewards: self.rewards[trader_id],
        };
        let mut out = vec![Outbound { trader_id, envelope: self.envelope(Some(self.market.round()), Message::Welcome(welcome), now_ms) }];
        match self.phase {
            Phase::Open { round, deadline_ms } => out.push(self.round_open_for(trader_id, round, deadline_ms, now_ms)),
            Phase::Ended | Phase::Aborted => out.push(self.session_end_for(trader_id, now_ms)),
            _ => {}
        }
        Ok(out)
    }

    pub fn disconnect(&mut self, trader_id: usize, now_ms: u64) -> Result<(), SessionError> {
        if let Some(Slot::Human { connected, .. }) = self.slots.get_mut(trader_id) {
            *connected = false;
            self.persist(WalEntry::Connection { trader_id, connected: false, ts_ms: now_ms })?;
        }
        Ok(())
    }

    pub fn start(&mut self, now_ms: u64) -> Result<Vec<Outbound>, SessionError> {
        self.check_live()?;
        if self.phase != Phase::Lobby {
            return Err(SessionError::Plan("session already started".into()));
        }
        self.persist(WalEntry::Started { ts_ms: now_ms })?;
        self.phase = Phase::Between;
        self.advance(now_ms)
    }

    pub fn abort(&mut self, reason: &str, now_ms: u64) -> Result<Vec<Outbound>, SessionError> {
        if self.is_over() {
            return Ok(Vec::new());
        }
        self.persist(WalEntry::Aborted { ts_ms: now_ms, reason: reason.to_string() })?;
        self.phase = Phase::Aborted;
        Ok(self.humans().collect::<Vec<_>>().into_iter().map(|i| self.session_end_for(i, now_ms)).collect())
    }

    fn open_check(&self, trader_id: usize, round: Option<u32>, now_ms: u64) -> Result<u32, ProtocolError> {
        if self.halted {
            return Err(ProtocolError::new(ErrorCode::Halted, "session halted"));
        }
        if !matches!(self.slots.get(trader_id), Some(Slot::Human { .. })) {
            return Err(ProtocolError::new(ErrorCode::NotJoined, "not a human seat"));
        }
        let Phase::Open { round: open, deadline_ms } = self.phase else {
            return Err(ProtocolError::new(ErrorCode::NotRunning, "no round is open"));
        };
        if round != Some(open) {
            return Err(ProtocolError::new(ErrorCode::WrongRound, format!("round {open} is open, got {round:?}")));
        }
        if now_ms >= deadline_ms {
            return Err(ProtocolError::new(ErrorCode::Late, format!("deadline {deadline_ms} passed at {now_ms}")));
        }
        Ok(open)
    }

    /// Records a human decision for the open round. A later decision in the
    /// same round replaces an earlier one.
    pub fn decision(&mut self, trader_id: usize, round: Option<u32>, action: Action, now_ms: u64) -> Result<Vec<Outbound>, ProtocolError> {
        let t = self.open_check(trader_id, round, now_ms)?;
        if !action.allowed_from(self.market.traders()[trader_id].position) {
            return Err(ProtocolError::new(ErrorCode::IllegalAction, format!("{action:?} is not allowed from the current position")));
        }
        self.persist(WalEntry::Decision { t, trader_id, action, ts_ms: now_ms })
            .map_err(|e| ProtocolError::new(ErrorCode::Halted, e.to_string()))?;
        self.actions[trader_id] = Some(action);
        self.maybe_settle_early(now_ms)
    }

    pub fn forecast(&mut self, trader_id: usize, round: Option<u32>, price: f64, now_ms: u64) -> Result<(), ProtocolError> {
        let t = self.open_check(trader_id, round, now_ms)?;
        if !(price > 0.0 && price.is_finite()) {
            return Err(ProtocolError::new(ErrorCode::BadMessage, "forecast must be a positive price"));
        }
        self.persist(WalEntry::Forecast { t, trader_id, price, ts_ms: now_ms })
            .map_err(|e| ProtocolError::new(ErrorCode::Halted, e.to_string()))?;
        self.forecasts[trader_id] = Some(price);
        Ok(())
    }

    fn clear_pending(&mut self) {
        self.actions = vec![None; self.slots.len()];
        self.forecasts = vec![None; self.slots.len()];
    }

    fn load_bots(&mut self, bots: &[(usize, Decision)]) {
        for (i, d) in bots {
            self.actions[*i] = Some(d.action);
            self.forecasts[*i] = d.forecast;
        }
    }

    fn maybe_settle_early(&mut self, now_ms: u64) -> Result<Vec<Outbound>, ProtocolError> {
        let all_decided = self.humans().all(|i| {
            matches!(self.slots[i], Slot::Human { connected: false, .. }) || self.actions[i].is_some()
        });
        if self.plan.settle_early && all_decided {
            return self.settle_and_advance(now_ms).map_err(|e| ProtocolError::new(ErrorCode::Halted, e.to_string()));
        }
        Ok(Vec::new())
    }

    /// Settles the open round once its deadline has passed.
    pub fn tick(&mut self, now_ms: u64) -> Result<Vec<Outbound>, SessionError> {
        self.check_live()?;
        match self.phase {
            Phase::Open { deadline_ms, .. } if now_ms >= deadline_ms => self.settle_and_advance(now_ms),
            _ => Ok(Vec::new()),
        }
    }

    fn settle_and_advance(&mut self, now_ms: u64) -> Result<Vec<Outbound>, SessionError> {
        let mut out = self.settle(now_ms)?;
        out.extend(self.advance(now_ms)?);
        Ok(out)
    }

    /// Opens rounds until one needs human input or the session ends. Rounds
    /// without human seats settle at once.
    fn advance(&mut self, now_ms: u64) -> Result<Vec<Outbound>, SessionError> {
        let mut out = Vec::new();
        loop {
            if self.phase != Phase::Between {
                return Ok(out);
            }
            if self.market.is_finished() {
                out.extend(self.finish(now_ms)?);
                return Ok(out);
            }
            out.extend(self.open_round(now_ms)?);
            if self.humans().next().is_some() {
                return Ok(out);
            }
            out.extend(self.settle(now_ms)?);
        }
    }

    fn open_round(&mut self, now_ms: u64) -> Result<Vec<Outbound>, SessionError> {
        let t = self.market.round();
        let deadline_ms = now_ms + (self.market.config().round_seconds * 1000.0).round() as u64;
        let bots = self.bot_decisions();
        self.persist(WalEntry::RoundOpen { t, deadline_ms, bots: bots.clone() })?;
        self.clear_pending();
        self.load_bots(&bots);
        self.phase = Phase::Open { round: t, deadline_ms };
        Ok(self.humans().collect::<Vec<_>>().into_iter().map(|i| self.round_open_for(i, t, deadline_ms, now_ms)).collect())
    }

    fn bot_decisions(&mut self) -> Vec<(usize, Decision)> {
        let mut bots = Vec::new();
        for i in 0..self.slots.len() {
            if let Slot::Bot(agent) = &mut self.slots[i] {
                let d = agent.decide(&self.market.view(i)).unwrap_or_else(|e| {
                    tracing::warn!(trader = i, error = %e, "bot failed; playing NONE");
                    Decision::default()
                });
                bots.push((i, d));
            }
        }
        bots
    }

    fn round_open_for(&self, trader_id: usize, round: u32, deadline_ms: u64, now_ms: u64) -> Outbound {
        let st = &self.market.traders()[trader_id];
        let msg = Message::RoundOpen(RoundOpen {
            prices: self.market.prices().to_vec(),
            holdings: holdings(st),
            deadline_ms,
            legal_actions: legal_actions(st.position),
        });
        Outbound { trader_id, envelope: self.envelope(Some(round), msg, now_ms) }
    }

    fn settle(&mut self, now_ms: u64) -> Result<Vec<Outbound>, SessionError> {
        let Phase::Open { round: t, .. } = self.phase else {
            return Ok(Vec::new());
        };
        let carried_over: Vec<usize> = self.humans().filter(|&i| self.actions[i].is_none()).collect();
        let decisions: Vec<Decision> = self
            .actions
            .iter()
            .zip(&self.forecasts)
            .map(|(a, f)| Decision { action: a.unwrap_or_default(), forecast: *f })
            .collect();
        let mut trial = self.market.clone();
        let record = trial.step(&decisions)?.clone();
        let rewards: Vec<f64> = record
            .per_trader
            .iter()
            .map(|r| self.plan.forecast_rule.score(r.forecast, record.price))
            .collect();
        // write-ahead: nothing is applied or sent before the record is durable
        self.persist(WalEntry::Settled {
            t,
            ts_ms: now_ms,
            decisions,
            carried_over: carried_over.clone(),
            record: record.clone(),
            rewards: rewards.clone(),
        })?;
        self.market = trial;
        for (acc, r) in self.rewards.iter_mut().zip(&rewards) {
            *acc += r;
        }
        self.clear_pending();
        self.phase = Phase::Between;
        if self.crash_after_persist == Some(t) {
            return Err(SessionError::InjectedCrash(t));
        }
        let prev = self.market.prices()[self.market.prices().len() - 2];
        let out = self
            .humans()
            .collect::<Vec<_>>()
            .into_iter()
            .map(|i| {
                let msg = Message::RoundResult(RoundResult {
                    price: record.price,
                    log_return: (record.price / prev).ln(),
                    own: record.per_trader[i].clone(),
                    holdings: holdings(&self.market.traders()[i]),
                    carried_over: carried_over.contains(&i),
                    forecast_reward: rewards[i],
                });
                Outbound { trader_id: i, envelope: self.envelope(Some(t), msg, now_ms) }
            })
            .collect();
        Ok(out)
    }

    fn finish(&mut self, now_ms: u64) -> Result<Vec<Outbound>, SessionError> {
        let log = self.market.clone().finish()?;
        self.persist(WalEntry::Ended {
            ts_ms: now_ms,
            end_round: log.end_round,
            bare_prices: log.bare_prices,
            liquidation: log.liquidation,
        })?;
        self.phase = Phase::Ended;
        Ok(self.humans().collect::<Vec<_>>().into_iter().map(|i| self.session_end_for(i, now_ms)).collect())
    }

    fn session_end_for(&self, trader_id: usize, now_ms: u64) -> Outbound {
        let price = self.market.price();
        let wealth = self.market.traders()[trader_id].wealth(price);
        let msg = Message::SessionEnd(SessionEnd {
            final_price: price,
            wealth,
            net: wealth - self.market.config().endowment,
            forecast_rewards: self.rewards[trader_id],
            practice: self.plan.practice,
            aborted: self.phase == Phase::Aborted,
        });
        Outbound { trader_id, envelope: self.envelope(None, msg, now_ms) }
    }

    /// The finished session in the analysis input format.
    pub fn export(&self) -> Result<SessionLog, SessionError> {
        if self.phase != Phase::Ended {
            return Err(SessionError::NotFinished);
        }
        Ok(self.market.clone().finish()?)
    }
}

fn new_token() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}
