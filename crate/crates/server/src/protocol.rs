//! Participant wire protocol. Each websocket text frame carries one JSON
//! object; see `docs/protocol.md` for the field-by-field description.

use serde::{Deserialize, Serialize};

use impactlab::market::{Action, Position, TraderRecord};
use impactlab::risk::{LotteryPair, Scale};

use crate::scoring::Payout;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub schema_version: u32,
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    /// Server time, UTC milliseconds. Set on every server message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts_ms: Option<u64>,
    #[serde(flatten)]
    pub message: Message,
}

impl Envelope {
    pub fn new(session_id: &str, round: Option<u32>, message: Message) -> Self {
        Self { schema_version: PROTOCOL_VERSION, session_id: session_id.to_string(), round, ts_ms: None, message }
    }

    pub fn stamped(mut self, ts_ms: u64) -> Self {
        self.ts_ms = Some(ts_ms);
        self
    }

    pub fn kind(&self) -> &'static str {
        self.message.kind()
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("protocol messages serialize")
    }

    pub fn decode(text: &str) -> Result<Self, ProtocolError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ProtocolError::new(ErrorCode::BadMessage, e.to_string()))?;
        let version = value.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(u64::from(PROTOCOL_VERSION)) {
            return Err(ProtocolError::new(
                ErrorCode::VersionMismatch,
                format!("expected schema_version {PROTOCOL_VERSION}, got {version:?}"),
            ));
        }
        serde_json::from_str(text).map_err(|e| ProtocolError::new(ErrorCode::BadMessage, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Message {
    Join { token: String },
    Welcome(Welcome),
    RoundOpen(RoundOpen),
    Decision { action: Action },
    Forecast { price: f64 },
    RoundResult(RoundResult),
    SessionEnd(SessionEnd),
    LotteryTask(LotteryTask),
    LotteryChoice(LotteryChoice),
    Payout(Payout),
    Error(ProtocolError),
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Join { .. } => "JOIN",
            Message::Welcome(_) => "WELCOME",
            Message::RoundOpen(_) => "ROUND_OPEN",
            Message::Decision { .. } => "DECISION",
            Message::Forecast { .. } => "FORECAST",
            Message::RoundResult(_) => "ROUND_RESULT",
            Message::SessionEnd(_) => "SESSION_END",
            Message::LotteryTask(_) => "LOTTERY_TASK",
            Message::LotteryChoice(_) => "LOTTERY_CHOICE",
            Message::Payout(_) => "PAYOUT",
            Message::Error(_) => "ERROR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Holdings {
    pub cash: f64,
    pub shares: f64,
    pub position: Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionPhase {
    Lobby,
    Running,
    Ended,
    Aborted,
}

/// Sent on JOIN: the full private state needed to render the screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Welcome {
    pub trader_id: usize,
    pub phase: SessionPhase,
    pub practice: bool,
    pub round_seconds: f64,
    pub endowment: f64,
    /// `p_0 ..= p_t`.
    pub prices: Vec<f64>,
    /// Log returns between consecutive prices.
    pub returns: Vec<f64>,
    pub holdings: Holdings,
    /// Own forecast per settled round.
    pub forecasts: Vec<Option<f64>>,
    pub forecast_rewards: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOpen {
    pub prices: Vec<f64>,
    pub holdings: Holdings,
    /// Same for every participant in the round.
    pub deadline_ms: u64,
    pub legal_actions: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub price: f64,
    #[serde(rename = "return")]
    pub log_return: f64,
    /// The recipient's settled row.
    pub own: TraderRecord,
    pub holdings: Holdings,
    /// No decision arrived before the deadline; the position carried over.
    pub carried_over: bool,
    pub forecast_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEnd {
    pub final_price: f64,
    pub wealth: f64,
    pub net: f64,
    pub forecast_rewards: f64,
    pub practice: bool,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotteryTask {
    pub pairs: Vec<LotteryPair>,
    /// Choices already recorded, to resume an interrupted task.
    pub answered: Vec<LotteryChoice>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LotteryChoice {
    pub scale: Scale,
    /// 1..=10
    pub index: usize,
    pub risky: bool,
    /// Final submission; every pair must be answered.
    #[serde(default)]
    pub submit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    BadMessage,
    VersionMismatch,
    UnknownToken,
    NotJoined,
    NotRunning,
    WrongRound,
    Late,
    IllegalAction,
    LotteryNotOpen,
    Incomplete,
    Halted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct ProtocolError {
    pub code: ErrorCode,
    pub message: String,
}

impl ProtocolError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}
