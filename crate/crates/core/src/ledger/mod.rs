//! Deterministic simulated blockchain.
//!
//! A single producer turns the pending pool into a block whenever the
//! virtual clock has advanced by the configured interval. Contract state is
//! only mutated while a block is being produced; readers always observe the
//! last confirmed snapshot, never the pool.

mod chain;
mod gas;
mod state;
mod tx;

pub use chain::{
    export_chain, import_chain, replay_chain, Block, ChainConfig, ChainView, Ledger, SharedLedger, DEFAULT_BLOCK_INTERVAL_MS,
    DEFAULT_ETC_PRICE_USD, DEFAULT_GAS_PRICE_WEI,
};
pub use gas::{format_cents, format_wei_as_etc, GasCharge, GasReport, GasReportRow, GasTable, UsdPrice, WEI_PER_ETC};
pub use state::{ChainState, ViewCall, ViewValue};
pub use tx::{Call, CallOutcome, CallValue, ContractId, PendingReceipt, Receipt, Transaction};

use crate::address::Address;
use crate::canon::Digest;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("nonce mismatch for {sender}: expected {expected}, got {got}")]
    NonceMismatch { sender: Address, expected: u64, got: u64 },
    #[error("transaction from the zero address")]
    ZeroSender,
    #[error("call {op} does not belong to contract {contract}")]
    ContractMismatch { op: &'static str, contract: ContractId },
    #[error("block interval not elapsed: next block due at {due_ms} ms, now {now_ms} ms")]
    IntervalNotElapsed { due_ms: u64, now_ms: u64 },
    #[error("virtual time went backwards: last block at {last_ms} ms, now {now_ms} ms")]
    TimeWentBackwards { last_ms: u64, now_ms: u64 },
    #[error("contract not found: {0}")]
    ContractNotFound(String),
    #[error("no gas recorded for transaction {0}")]
    NoGasRecorded(Digest),
    #[error("corrupt chain at height {height}: {reason}")]
    CorruptChain { height: u64, reason: String },
    #[error("chain file: {0}")]
    Format(String),
}
