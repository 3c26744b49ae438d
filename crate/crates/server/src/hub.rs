//! Registry of live sessions, participant connections, round timers and the
//! post-market lottery desks.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{mpsc, Notify};

use impactlab::agents::{Roster, RosterEntry, StrategySpec};
use impactlab::market::{MarketConfig, SessionLog};
use impactlab::risk::{write_responses, LotteryMenu};

use crate::lottery::LotteryDesk;
use crate::protocol::{Envelope, ErrorCode, Message, ProtocolError, SessionPhase};
use crate::scoring::{ForecastRule, Payout, SessionEarnings};
use crate::session::{LiveSession, Outbound, SessionError, SessionPlan};

pub type ConnTx = mpsc::UnboundedSender<Envelope>;

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

#[derive(Debug, Error)]
pub enum HubError {
    #[error("no session {0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Defaults applied to sessions created without their own config or roster.
#[derive(Debug, Clone)]
pub struct HubConfig {
    pub data_dir: Option<PathBuf>,
    pub menu: LotteryMenu,
    pub market: MarketConfig,
    pub roster: Option<Roster>,
}

impl Default for HubConfig {
    fn default() -> Self {
        Self { data_dir: None, menu: LotteryMenu::default(), market: MarketConfig::default(), roster: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default)]
    pub session_id: Option<String>,
    #[serde(default)]
    pub config: Option<MarketConfig>,
    #[serde(default)]
    pub roster: Option<Roster>,
    #[serde(default)]
    pub pair_id: Option<String>,
    #[serde(default)]
    pub practice: bool,
    #[serde(default)]
    pub tokens: Vec<String>,
    #[serde(default)]
    pub forecast_rule: Option<ForecastRule>,
    #[serde(default)]
    pub settle_early: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeatToken {
    pub trader_id: usize,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_id: String,
    pub phase: SessionPhase,
    pub round: u32,
    pub end_round: Option<u32>,
    pub pair_id: Option<String>,
    pub practice: bool,
    pub tokens: Vec<SeatToken>,
    pub connected: Vec<usize>,
}

struct Entry {
    live: LiveSession,
    notify: Arc<Notify>,
}

#[derive(Default)]
struct State {
    sessions: BTreeMap<String, Entry>,
    /// Creation order, which fixes the first and second session of a pair.
    order: Vec<String>,
    desks: BTreeMap<String, LotteryDesk>,
    conns: HashMap<(String, usize), (u64, ConnTx)>,
    next_conn: u64,
    /// Sessions whose end has been announced to the lottery.
    ended: BTreeSet<String>,
}

pub struct Hub {
    state: Mutex<State>,
    config: HubConfig,
}

impl Hub {
    pub fn new(config: HubConfig) -> Arc<Self> {
        Arc::new(Self { state: Mutex::new(State::default()), config })
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn wal_path(&self, session_id: &str) -> Option<PathBuf> {
        self.config.data_dir.as_ref().map(|d| d.join("sessions").join(format!("{session_id}.wal")))
    }

    fn desk_path(&self, pair_id: &str) -> Option<PathBuf> {
        self.config.data_dir.as_ref().map(|d| d.join("lottery").join(format!("{pair_id}.jsonl")))
    }

    /// Rebuilds every session and lottery desk found in the data directory and
    /// restarts their timers. Must run inside a tokio runtime.
    pub fn recover(config: HubConfig) -> Result<Arc<Self>, HubError> {
        let hub = Self::new(config);
        let Some(dir) = hub.config.data_dir.clone() else { return Ok(hub) };
        let mut found = Vec::new();
        if let Ok(rd) = std::fs::read_dir(dir.join("sessions")) {
            for e in rd {
                let path = e?.path();
                if path.extension().is_some_and(|x| x == "wal") {
                    let created = crate::wal::read_wal(&path)
                        .ok()
                        .and_then(|es| match es.first() {
                            Some(crate::wal::WalEntry::Plan { ts_ms, .. }) => Some(*ts_ms),
                            _ => None,
                        })
                        .unwrap_or(0);
                    found.push((created, path));
                }
            }
        }
        found.sort();
        let now = now_ms();
        for (_, path) in found {
            let (live, _) = LiveSession::recover(&path, now)?;
            tracing::info!(session = live.session_id(), round = live.market().round(), "recovered session");
            hub.insert(live);
        }
        let pairs: Vec<String> = {
            let st = hub.lock();
            st.order.iter().filter_map(|id| st.sessions[id].live.plan().pair_id.clone()).collect()
        };
        for pair in pairs {
            hub.ensure_desk(&pair)?;
        }
        Ok(hub)
    }

    fn insert(self: &Arc<Self>, live: LiveSession) {
        let id = live.session_id().to_string();
        let notify = Arc::new(Notify::new());
        {
            let mut st = self.lock();
            st.order.push(id.clone());
            if live.phase() == SessionPhase::Ended {
                st.ended.insert(id.clone());
            }
            st.sessions.insert(id.clone(), Entry { live, notify: notify.clone() });
        }
        let hub = Arc::clone(self);
        tokio::spawn(async move { hub.run_timer(id, notify).await });
    }

    async fn run_timer(self: Arc<Self>, id: String, notify: Arc<Notify>) {
        loop {
            let deadline = {
                let st = self.lock();
                match st.sessions.get(&id) {
                    None => return,
                    Some(e) if e.live.is_over() => return,
                    Some(e) => e.live.deadline(),
                }
            };
            match deadline {
                None => notify.notified().await,
                Some(d) => {
                    let now = now_ms();
                    if now >= d {
                        if !self.tick(&id) {
                            return;
                        }
                    } else {
                        tokio::select! {
                            _ = tokio::time::sleep(Duration::from_millis(d - now)) => {}
                            _ = notify.notified() => {}
                        }
                    }
                }
            }
        }
    }

    /// Settles a round whose deadline has passed; false if the session halted.
    pub fn tick(&self, id: &str) -> bool {
        let mut st = self.lock();
        let now = now_ms();
        let Some(e) = st.sessions.get_mut(id) else { return false };
        match e.live.tick(now) {
            Ok(out) => {
                Self::route(&st, id, out);
                self.after_change(&mut st, id);
                true
            }
            Err(err) => {
                tracing::error!(session = id, error = %err, "settlement failed");
                false
            }
        }
    }

    fn route(st: &State, session_id: &str, out: Vec<Outbound>) {
        for o in out {
            if let Some((_, tx)) = st.conns.get(&(session_id.to_string(), o.trader_id)) {
                let _ = tx.send(o.envelope);
            }
        }
    }

    /// Wakes the timer and opens the lottery when a pair has finished.
    fn after_change(&self, st: &mut State, id: &str) {
        let Some(e) = st.sessions.get(id) else { return };
        e.notify.notify_one();
        if e.live.phase() != SessionPhase::Ended || !st.ended.insert(id.to_string()) {
            return;
        }
        let Some(pair) = st.sessions[id].live.plan().pair_id.clone() else { return };
        let tokens: Vec<(usize, String)> = st.sessions[id].live.tokens();
        for (trader, token) in tokens {
            self.offer_lottery(st, &pair, &token, id, trader);
        }
    }

    fn pair_sessions<'a>(st: &'a State, pair: &str) -> Vec<&'a LiveSession> {
        st.order
            .iter()
            .map(|id| &st.sessions[id].live)
            .filter(|l| l.plan().pair_id.as_deref() == Some(pair) && !l.plan().practice)
            .collect()
    }

    fn earnings(st: &State, pair: &str, token: &str) -> Vec<SessionEarnings> {
        Self::pair_sessions(st, pair)
            .into_iter()
            .filter_map(|l| {
                let trader = l.trader_for_token(token)?;
                let log = l.export().ok();
                Some(SessionEarnings {
                    session_id: l.session_id().to_string(),
                    complete: log.is_some(),
                    net_francs: log.map_or(0.0, |g| g.liquidation[trader].net),
                    forecast_francs: l.rewards()[trader],
                })
            })
            .collect()
    }

    fn subject_id(st: &State, pair: &str, token: &str) -> String {
        let first = Self::pair_sessions(st, pair).into_iter().find_map(|l| l.trader_for_token(token));
        format!("{pair}:{}", first.map_or_else(|| "?".to_string(), |t| t.to_string()))
    }

    /// Sends the lottery task (or the payout, if already made) once both paid
    /// sessions of the pair have ended.
    fn offer_lottery(&self, st: &mut State, pair: &str, token: &str, session_id: &str, trader: usize) {
        let earnings = Self::earnings(st, pair, token);
        if earnings.len() != 2 || earnings.iter().any(|e| !e.complete) {
            return;
        }
        let Some(desk) = st.desks.get(pair) else { return };
        let message = match desk.payout(token) {
            Some(p) => Message::Payout(p.clone()),
            None => Message::LotteryTask(desk.task(token)),
        };
        if let Some((_, tx)) = st.conns.get(&(session_id.to_string(), trader)) {
            let _ = tx.send(Envelope::new(session_id, None, message).stamped(now_ms()));
        }
    }

    fn ensure_desk(&self, pair: &str) -> Result<(), HubError> {
        let mut st = self.lock();
        if st.desks.contains_key(pair) {
            return Ok(());
        }
        let seed = Self::pair_sessions(&st, pair)
            .first()
            .map_or(0, |l| l.market().config().noise_seed());
        let desk = match self.desk_path(pair) {
            Some(p) => LotteryDesk::restore(pair, self.config.menu, seed, &p)?,
            None => LotteryDesk::new(pair, self.config.menu, seed, None),
        };
        st.desks.insert(pair.to_string(), desk);
        Ok(())
    }

    pub fn create_session(self: &Arc<Self>, req: CreateSession) -> Result<SessionStatus, HubError> {
        let config = req.config.unwrap_or_else(|| self.config.market.clone());
        let roster = req.roster.or_else(|| self.config.roster.clone()).unwrap_or_else(|| Roster {
            agents: vec![RosterEntry { count: config.depth_n, spec: StrategySpec::Human }],
        });
        let id = req.session_id.unwrap_or_else(|| format!("s{}", uuid::Uuid::new_v4().simple()));
        if !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') || id.is_empty() {
            return Err(HubError::Conflict(format!("session id {id:?} must be ASCII letters, digits, '-' or '_'")));
        }
        let mut plan = SessionPlan::new(&id, config, roster);
        plan.pair_id = req.pair_id.clone();
        plan.practice = req.practice;
        plan.tokens = req.tokens;
        plan.settle_early = req.settle_early;
        if let Some(rule) = req.forecast_rule {
            plan.forecast_rule = rule;
        }
        {
            let st = self.lock();
            if st.sessions.contains_key(&id) {
                return Err(HubError::Conflict(format!("session {id} exists")));
            }
            if let Some(pair) = plan.pair_id.clone() {
                Self::check_pair(&st, &pair, &mut plan)?;
            }
        }
        let live = LiveSession::create(plan, self.wal_path(&id).as_deref(), now_ms())?;
        let pair = live.plan().pair_id.clone();
        self.insert(live);
        if let Some(pair) = pair {
            self.ensure_desk(&pair)?;
        }
        self.status(&id)
    }

    fn check_pair(st: &State, pair: &str, plan: &mut SessionPlan) -> Result<(), HubError> {
        let members: Vec<&LiveSession> = st
            .order
            .iter()
            .map(|id| &st.sessions[id].live)
            .filter(|l| l.plan().pair_id.as_deref() == Some(pair))
            .collect();
        if let Some(first) = members.first() {
            if plan.tokens.is_empty() && first.plan().roster.human_count() == plan.roster.human_count() {
                plan.tokens = first.plan().tokens.clone();
            }
        }
        let paid: Vec<&&LiveSession> = members.iter().filter(|l| !l.plan().practice).collect();
        if !plan.practice {
            if paid.len() >= 2 {
                return Err(HubError::Conflict(format!("pair {pair} already has two paid sessions")));
            }
            if let Some(first) = paid.first() {
                if first.plan().config.noise_seed() != plan.config.noise_seed() {
                    return Err(HubError::Conflict(format!("sessions of pair {pair} must share the noise seed")));
                }
                let mut a = first.plan().tokens.clone();
                let mut b = plan.tokens.clone();
                a.sort();
                b.sort();
                if a != b {
                    return Err(HubError::Conflict(format!("sessions of pair {pair} must seat the same subjects")));
                }
            }
        }
        Ok(())
    }

    fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut State) -> Result<T, HubError>) -> Result<T, HubError> {
        let mut st = self.lock();
        if !st.sessions.contains_key(id) {
            return Err(HubError::NotFound(id.to_string()));
        }
        f(&mut st)
    }

    pub fn start(&self, id: &str) -> Result<SessionStatus, HubError> {
        self.with_session(id, |st| {
            let out = st.sessions.get_mut(id).expect("checked").live.start(now_ms())?;
            Self::route(st, id, out);
            self.after_change(st, id);
            Ok(())
        })?;
        self.status(id)
    }

    pub fn abort(&self, id: &str, reason: &str) -> Result<SessionStatus, HubError> {
        self.with_session(id, |st| {
            let out = st.sessions.get_mut(id).expect("checked").live.abort(reason, now_ms())?;
            Self::route(st, id, out);
            self.after_change(st, id);
            Ok(())
        })?;
        self.status(id)
    }

    pub fn export(&self, id: &str) -> Result<SessionLog, HubError> {
        self.with_session(id, |st| Ok(st.sessions[id].live.export()?))
    }

    fn status_of(st: &State, id: &str) -> SessionStatus {
        let l = &st.sessions[id].live;
        let tokens: Vec<SeatToken> = l.tokens().into_iter().map(|(trader_id, token)| SeatToken { trader_id, token }).collect();
        SessionStatus {
            session_id: id.to_string(),
            phase: l.phase(),
            round: l.market().round(),
            end_round: (l.phase() == SessionPhase::Ended).then(|| l.market().end_round()),
            pair_id: l.plan().pair_id.clone(),
            practice: l.plan().practice,
            connected: tokens
                .iter()
                .filter(|t| st.conns.contains_key(&(id.to_string(), t.trader_id)))
                .map(|t| t.trader_id)
                .collect(),
            tokens,
        }
    }

    pub fn status(&self, id: &str) -> Result<SessionStatus, HubError> {
        self.with_session(id, |st| Ok(Self::status_of(st, id)))
    }

    pub fn list(&self) -> Vec<SessionStatus> {
        let st = self.lock();
        st.order.iter().map(|id| Self::status_of(&st, id)).collect()
    }

    pub fn lottery_csv(&self, pair: &str) -> Result<String, HubError> {
        let st = self.lock();
        let desk = st.desks.get(pair).ok_or_else(|| HubError::NotFound(format!("pair {pair}")))?;
        let mut buf = Vec::new();
        write_responses(&mut buf, &desk.responses()).map_err(|e| HubError::Conflict(e.to_string()))?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }

    pub fn payouts(&self, pair: &str) -> Result<Vec<(String, Payout)>, HubError> {
        let st = self.lock();
        let desk = st.desks.get(pair).ok_or_else(|| HubError::NotFound(format!("pair {pair}")))?;
        Ok(desk.payouts())
    }

    pub fn next_conn_id(&self) -> u64 {
        let mut st = self.lock();
        st.next_conn += 1;
        st.next_conn
    }

    /// Binds a connection to the seat holding `token`; a newer connection for
    /// the same seat replaces the older one.
    pub fn join(&self, conn: u64, session_id: &str, token: &str, tx: ConnTx) -> Result<usize, ProtocolError> {
        let mut st = self.lock();
        let now = now_ms();
        let e = st
            .sessions
            .get_mut(session_id)
            .ok_or_else(|| ProtocolError::new(ErrorCode::UnknownToken, format!("no session {session_id}")))?;
        let trader = e
            .live
            .trader_for_token(token)
            .ok_or_else(|| ProtocolError::new(ErrorCode::UnknownToken, "token does not match a seat"))?;
        let out = e.live.join(trader, now).map_err(|err| ProtocolError::new(ErrorCode::Halted, err.to_string()))?;
        st.conns.insert((session_id.to_string(), trader), (conn, tx));
        Self::route(&st, session_id, out);
        if let Some(pair) = st.sessions[session_id].live.plan().pair_id.clone() {
            if st.sessions[session_id].live.phase() == SessionPhase::Ended {
                self.offer_lottery(&mut st, &pair, token, session_id, trader);
            }
        }
        Ok(trader)
    }

    pub fn disconnect(&self, conn: u64, session_id: &str, trader: usize) {
        let mut st = self.lock();
        let key = (session_id.to_string(), trader);
        if st.conns.get(&key).is_some_and(|(c, _)| *c == conn) {
            st.conns.remove(&key);
            if let Some(e) = st.sessions.get_mut(session_id) {
                if let Err(err) = e.live.disconnect(trader, now_ms()) {
                    tracing::error!(session = session_id, error = %err, "could not log disconnect");
                }
            }
        }
    }

    /// Handles one message from a joined participant.
    pub fn inbound(&self, session_id: &str, trader: usize, env: Envelope) {
        let mut st = self.lock();
        let now = now_ms();
        let result: Result<Vec<Outbound>, ProtocolError> = match env.message {
            Message::Decision { action } => match st.sessions.get_mut(session_id) {
                Some(e) => e.live.decision(trader, env.round, action, now),
                None => Err(ProtocolError::new(ErrorCode::NotRunning, "session is gone")),
            },
            Message::Forecast { price } => match st.sessions.get_mut(session_id) {
                Some(e) => e.live.forecast(trader, env.round, price, now).map(|_| Vec::new()),
                None => Err(ProtocolError::new(ErrorCode::NotRunning, "session is gone")),
            },
            Message::LotteryChoice(choice) => self.lottery_choice(&mut st, session_id, trader, choice, now),
            other => Err(ProtocolError::new(ErrorCode::BadMessage, format!("{} is not a client message here", other.kind()))),
        };
        match result {
            Ok(out) => {
                Self::route(&st, session_id, out);
                self.after_change(&mut st, session_id);
            }
            Err(e) => {
                if let Some((_, tx)) = st.conns.get(&(session_id.to_string(), trader)) {
                    let _ = tx.send(Envelope::new(session_id, env.round, Message::Error(e)).stamped(now));
                }
            }
        }
    }

    fn lottery_choice(
        &self,
        st: &mut State,
        session_id: &str,
        trader: usize,
        choice: crate::protocol::LotteryChoice,
        now: u64,
    ) -> Result<Vec<Outbound>, ProtocolError> {
        let closed = || ProtocolError::new(ErrorCode::LotteryNotOpen, "the lottery opens after both paid sessions end");
        let live = &st.sessions.get(session_id).ok_or_else(closed)?.live;
        let pair = live.plan().pair_id.clone().ok_or_else(closed)?;
        let token = live.tokens().into_iter().find(|(t, _)| *t == trader).map(|(_, k)| k).ok_or_else(closed)?;
        let earnings = Self::earnings(st, &pair, &token);
        if earnings.len() != 2 || earnings.iter().any(|e| !e.complete) {
            return Err(closed());
        }
        let subject = Self::subject_id(st, &pair, &token);
        let desk = st.desks.get_mut(&pair).ok_or_else(closed)?;
        match desk.choose(&token, &subject, choice, &earnings, now)? {
            Some(p) => Ok(vec![Outbound {
                trader_id: trader,
                envelope: Envelope::new(session_id, None, Message::Payout(p)).stamped(now),
            }]),
            None => Ok(Vec::new()),
        }
    }
}

/// Data-directory layout: `sessions/<id>.wal` and `lottery/<pair>.jsonl`.
pub fn session_wal(data_dir: &Path, session_id: &str) -> PathBuf {
    data_dir.join("sessions").join(format!("{session_id}.wal"))
}
