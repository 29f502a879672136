//! Moves detection artifacts off the scanning host.
//!
//! [`agent`] tails the local event and sweep indexes and uploads each
//! artifact with content-hash verification; [`server`] is the remote store
//! that deduplicates uploads, lists events and notifies subscribers.

pub mod agent;
pub mod notify;
pub mod server;
pub mod wire;

pub use agent::{Agent, AgentConfig, HttpRemote, RemoteStore, SyncRecord};
pub use server::{spawn as spawn_server, ServerConfig, ServerHandle};
