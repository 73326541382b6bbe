//! Core of the BlendCAC access-control stack.
//!
//! A deterministic single-producer chain ([`ledger`]) hosts two contract
//! state machines: virtual trust zones ([`zone`]) and capability tokens
//! ([`capability`]). Domain masters ([`master`]) register entities and issue
//! tokens through ledger transactions; service providers ([`enforcement`])
//! authenticate requesters and run the staged token validation pipeline
//! against the confirmed chain state, backed by a block-synchronized cache.

pub mod address;
pub mod canon;
pub mod capability;
pub mod enforcement;
pub mod ledger;
pub mod master;
pub mod time;
pub mod zone;

pub use address::Address;
pub use capability::{AccessRule, Action, CapabilityToken, Condition, Weekday};
pub use ledger::{ChainConfig, ChainView, Ledger, SharedLedger};
pub use time::Micros;
pub use zone::{NodeType, VNodeRecord, VirtualZone};
