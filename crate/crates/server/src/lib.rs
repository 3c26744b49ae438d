//! Live experiment server: sessions mixing human participants and bots,
//! a JSON wire protocol over websockets, crash-safe logging and payouts.

pub mod config;
pub mod http;
pub mod hub;
pub mod lottery;
pub mod protocol;
pub mod scoring;
pub mod session;
pub mod wal;

pub use hub::{CreateSession, Hub, HubConfig, HubError, SessionStatus};
pub use protocol::{Envelope, Message, PROTOCOL_VERSION};
