use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use super::gas::{GasCharge, GasReport, GasTable, UsdPrice};
use super::state::{ChainState, ViewCall, ViewValue};
use super::tx::{Call, ContractId, PendingReceipt, Receipt, Transaction};
use super::LedgerError;
use crate::address::Address;
use crate::canon::{to_canonical_string, Digest};
use crate::capability::CapabilityToken;
use crate::zone::{VNodeRecord, VirtualZone};

pub const DEFAULT_BLOCK_INTERVAL_MS: u64 = 15_000;
/// 6.5 gwei: puts a 159,544-gas token assignment at 0.22 USD at the
/// default ETC price.
pub const DEFAULT_GAS_PRICE_WEI: u128 = 6_500_000_000;
pub const DEFAULT_ETC_PRICE_USD: UsdPrice = UsdPrice::from_micros(212_770_000);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub block_interval_ms: u64,
    pub supervisor: Address,
    #[serde(default)]
    pub gas_table: GasTable,
    #[serde(default = "default_gas_price")]
    pub gas_price_wei: u128,
    #[serde(default = "default_etc_price")]
    pub eth_price_usd: UsdPrice,
}

fn default_gas_price() -> u128 {
    DEFAULT_GAS_PRICE_WEI
}

fn default_etc_price() -> UsdPrice {
    DEFAULT_ETC_PRICE_USD
}

impl ChainConfig {
    pub fn new(supervisor: Address) -> Self {
        ChainConfig {
            block_interval_ms: DEFAULT_BLOCK_INTERVAL_MS,
            supervisor,
            gas_table: GasTable::default(),
            gas_price_wei: DEFAULT_GAS_PRICE_WEI,
            eth_price_usd: DEFAULT_ETC_PRICE_USD,
        }
    }

    pub fn with_block_interval(mut self, ms: u64) -> Self {
        self.block_interval_ms = ms;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.block_interval_ms == 0 {
            return Err("block_interval_ms must be at least 1".into());
        }
        if self.supervisor.is_zero() {
            return Err("supervisor must not be the zero address".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub timestamp: u64,
    pub parent: Digest,
    pub txs: Vec<Transaction>,
    pub digest: Digest,
}

impl Block {
    fn seal(height: u64, timestamp: u64, parent: Digest, txs: Vec<Transaction>) -> Self {
        let digest = Self::compute_digest(height, timestamp, &parent, &txs);
        Block {
            height,
            timestamp,
            parent,
            txs,
            digest,
        }
    }

    pub fn compute_digest(height: u64, timestamp: u64, parent: &Digest, txs: &[Transaction]) -> Digest {
        Digest::of(&(height, timestamp, parent, txs))
    }

    pub fn verify_digest(&self) -> bool {
        Self::compute_digest(self.height, self.timestamp, &self.parent, &self.txs) == self.digest
    }
}

/// Single-writer chain: a pending pool plus the confirmed block list and the
/// contract state it produces.
#[derive(Debug, Clone)]
pub struct Ledger {
    config: ChainConfig,
    blocks: Vec<Block>,
    confirmed: Arc<ChainState>,
    pool: Vec<Transaction>,
    /// Next nonce per sender, counting pending transactions.
    next_nonce: BTreeMap<Address, u64>,
    receipts: BTreeMap<Digest, Receipt>,
}

impl Ledger {
    /// Builds the genesis block, whose only transaction deploys both
    /// contracts from the supervisor account.
    pub fn new(config: ChainConfig) -> Self {
        let mut ledger = Ledger {
            config,
            blocks: Vec::new(),
            confirmed: Arc::new(ChainState::default()),
            pool: Vec::new(),
            next_nonce: BTreeMap::new(),
            receipts: BTreeMap::new(),
        };
        let deploy = Transaction::new(ledger.config.supervisor, Call::DeployContracts, 0);
        ledger.next_nonce.insert(ledger.config.supervisor, 1);
        let (txs, state) = ledger.apply_batch(0, vec![deploy]);
        ledger.confirmed = Arc::new(state);
        ledger.blocks.push(Block::seal(0, 0, Digest::ZERO, txs));
        ledger
    }

    /// Rebuilds a ledger from an exported chain, checking every link.
    pub fn from_blocks(config: ChainConfig, blocks: Vec<Block>) -> Result<Self, LedgerError> {
        let mut ledger = Ledger {
            config,
            blocks: Vec::with_capacity(blocks.len()),
            confirmed: Arc::new(ChainState::default()),
            pool: Vec::new(),
            next_nonce: BTreeMap::new(),
            receipts: BTreeMap::new(),
        };
        if blocks.is_empty() {
            return Err(LedgerError::CorruptChain {
                height: 0,
                reason: "missing genesis block".into(),
            });
        }
        for block in blocks {
            let corrupt = |reason: String| LedgerError::CorruptChain {
                height: block.height,
                reason,
            };
            let (expected_height, expected_parent, last_ts) = match ledger.blocks.last() {
                Some(prev) => (prev.height + 1, prev.digest, prev.timestamp),
                None => (0, Digest::ZERO, 0),
            };
            if block.height != expected_height {
                return Err(corrupt(format!("expected height {expected_height}")));
            }
            if block.parent != expected_parent {
                return Err(corrupt("parent digest does not match previous block".into()));
            }
            if block.timestamp < last_ts {
                return Err(corrupt("timestamp precedes parent".into()));
            }
            if !block.verify_digest() {
                return Err(corrupt("digest does not match contents".into()));
            }
            if block.height == 0
                && !(block.txs.len() == 1
                    && block.txs[0].call == Call::DeployContracts
                    && block.txs[0].sender == ledger.config.supervisor)
            {
                return Err(corrupt("genesis must deploy contracts from the supervisor".into()));
            }
            for tx in &block.txs {
                let expected = ledger.next_nonce.get(&tx.sender).copied().unwrap_or(0);
                if tx.nonce != expected {
                    return Err(corrupt(format!("nonce {} for {}, expected {expected}", tx.nonce, tx.sender)));
                }
                ledger.next_nonce.insert(tx.sender, expected + 1);
                let gas = ledger.config.gas_table.cost(tx.call.op_name());
                if tx.gas_used != gas {
                    return Err(corrupt(format!("gas {} recorded, table says {gas}", tx.gas_used)));
                }
            }
            let raw: Vec<Transaction> = block
                .txs
                .iter()
                .cloned()
                .map(|mut t| {
                    t.gas_used = 0;
                    t
                })
                .collect();
            let (applied, state) = ledger.apply_batch(block.height, raw);
            debug_assert_eq!(applied, block.txs);
            ledger.confirmed = Arc::new(state);
            ledger.blocks.push(block);
        }
        Ok(ledger)
    }

    fn apply_batch(&mut self, height: u64, txs: Vec<Transaction>) -> (Vec<Transaction>, ChainState) {
        let mut state = (*self.confirmed).clone();
        let mut applied = Vec::with_capacity(txs.len());
        for mut tx in txs {
            let outcome = state.apply(height, &tx);
            tx.gas_used = self.config.gas_table.cost(tx.call.op_name());
            let digest = tx.digest();
            self.receipts.insert(
                digest,
                Receipt {
                    tx_digest: digest,
                    height,
                    op: tx.call.op_name().to_owned(),
                    gas_used: tx.gas_used,
                    outcome,
                },
            );
            applied.push(tx);
        }
        (applied, state)
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("genesis always present")
    }

    pub fn height(&self) -> u64 {
        self.tip().height
    }

    pub fn pool(&self) -> &[Transaction] {
        &self.pool
    }

    pub fn next_nonce(&self, sender: &Address) -> u64 {
        self.next_nonce.get(sender).copied().unwrap_or(0)
    }

    pub fn next_block_due_ms(&self) -> u64 {
        self.tip().timestamp + self.config.block_interval_ms
    }

    pub fn submit_transaction(&mut self, tx: Transaction) -> Result<PendingReceipt, LedgerError> {
        if tx.sender.is_zero() {
            return Err(LedgerError::ZeroSender);
        }
        if tx.contract != tx.call.contract() {
            return Err(LedgerError::ContractMismatch {
                op: tx.call.op_name(),
                contract: tx.contract,
            });
        }
        let expected = self.next_nonce(&tx.sender);
        if tx.nonce != expected {
            return Err(LedgerError::NonceMismatch {
                sender: tx.sender,
                expected,
                got: tx.nonce,
            });
        }
        self.next_nonce.insert(tx.sender, expected + 1);
        let tx_digest = tx.digest();
        self.pool.push(Transaction { gas_used: 0, ..tx });
        Ok(PendingReceipt {
            tx_digest,
            pool_size: self.pool.len(),
        })
    }

    /// Submits `call` from `sender` with the next free nonce.
    pub fn submit_call(&mut self, sender: Address, call: Call) -> Result<PendingReceipt, LedgerError> {
        let nonce = self.next_nonce(&sender);
        self.submit_transaction(Transaction::new(sender, call, nonce))
    }

    /// Applies the whole pool in submission order and appends the block.
    /// Without `force`, `now_ms` must have reached the next due time.
    pub fn produce_block(&mut self, now_ms: u64, force: bool) -> Result<&Block, LedgerError> {
        let last_ms = self.tip().timestamp;
        if now_ms < last_ms {
            return Err(LedgerError::TimeWentBackwards { last_ms, now_ms });
        }
        let due_ms = self.next_block_due_ms();
        if !force && now_ms < due_ms {
            return Err(LedgerError::IntervalNotElapsed { due_ms, now_ms });
        }
        let height = self.height() + 1;
        let parent = self.tip().digest;
        let pool = std::mem::take(&mut self.pool);
        let (txs, state) = self.apply_batch(height, pool);
        self.confirmed = Arc::new(state);
        self.blocks.push(Block::seal(height, now_ms, parent, txs));
        Ok(self.tip())
    }

    pub fn view(&self) -> ChainView {
        ChainView {
            height: self.height(),
            timestamp_ms: self.tip().timestamp,
            state: Arc::clone(&self.confirmed),
        }
    }

    pub fn state(&self) -> &ChainState {
        &self.confirmed
    }

    pub fn query_state(&self, contract: ContractId, view: &ViewCall) -> Result<ViewValue, LedgerError> {
        self.confirmed.query(contract, view)
    }

    pub fn receipt(&self, tx_digest: &Digest) -> Option<&Receipt> {
        self.receipts.get(tx_digest)
    }

    pub fn account_gas(&self, tx_digest: &Digest) -> Result<GasCharge, LedgerError> {
        let receipt = self
            .receipts
            .get(tx_digest)
            .ok_or(LedgerError::NoGasRecorded(*tx_digest))?;
        Ok(GasCharge::new(
            *tx_digest,
            &receipt.op,
            receipt.gas_used,
            self.config.gas_price_wei,
            self.config.eth_price_usd,
        ))
    }

    pub fn gas_report(&self) -> GasReport {
        GasReport::from_blocks(&self.blocks, self.config.gas_price_wei, self.config.eth_price_usd)
    }

    /// Canonical serialization of the confirmed contract state.
    pub fn state_dump(&self) -> String {
        to_canonical_string(&*self.confirmed).expect("state serializes")
    }
}

/// Replays `blocks` from genesis and returns the resulting contract state.
pub fn replay_chain(config: &ChainConfig, blocks: &[Block]) -> Result<ChainState, LedgerError> {
    let ledger = Ledger::from_blocks(config.clone(), blocks.to_vec())?;
    Ok((*ledger.confirmed).clone())
}

/// Writes one canonical JSON object per block.
pub fn export_chain<W: Write>(blocks: &[Block], mut out: W) -> io::Result<()> {
    for block in blocks {
        let line = to_canonical_string(block).map_err(io::Error::other)?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn import_chain<R: BufRead>(input: R) -> Result<Vec<Block>, LedgerError> {
    let mut blocks = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| LedgerError::Format(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let block: Block = serde_json::from_str(&line)
            .map_err(|e| LedgerError::Format(format!("line {}: {e}", i + 1)))?;
        blocks.push(block);
    }
    Ok(blocks)
}

/// Read-only snapshot of the confirmed state at one height. Cheap to clone;
/// every read through one view sees the same height.
#[derive(Debug, Clone)]
pub struct ChainView {
    pub height: u64,
    pub timestamp_ms: u64,
    state: Arc<ChainState>,
}

impl ChainView {
    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn query(&self, contract: ContractId, view: &ViewCall) -> Result<ViewValue, LedgerError> {
        self.state.query(contract, view)
    }

    pub fn get_vnode(&self, addr: &Address) -> VNodeRecord {
        self.state.vzone.get_vnode(addr)
    }

    pub fn get_vzone(&self, zone_id: &str) -> VirtualZone {
        self.state.vzone.get_vzone(zone_id)
    }

    pub fn get_token(&self, subject: &Address) -> Option<CapabilityToken> {
        self.state.capac.get_token(subject).cloned()
    }

    pub fn token_modified_at(&self, subject: &Address) -> Option<u64> {
        self.state.capac.modified_at(subject)
    }

    pub fn contract_address(&self, contract: ContractId) -> Address {
        contract.address(self.state.supervisor.unwrap_or(Address::ZERO))
    }
}

/// Handle shared by every logical process in a simulation. Writes go
/// through one lock in call order; reads take a snapshot and release it.
#[derive(Debug, Clone)]
pub struct SharedLedger(Arc<RwLock<Ledger>>);

impl SharedLedger {
    pub fn new(ledger: Ledger) -> Self {
        SharedLedger(Arc::new(RwLock::new(ledger)))
    }

    pub fn submit_transaction(&self, tx: Transaction) -> Result<PendingReceipt, LedgerError> {
        self.0.write().submit_transaction(tx)
    }

    pub fn submit_call(&self, sender: Address, call: Call) -> Result<PendingReceipt, LedgerError> {
        self.0.write().submit_call(sender, call)
    }

    pub fn produce_block(&self, now_ms: u64, force: bool) -> Result<Block, LedgerError> {
        self.0.write().produce_block(now_ms, force).cloned()
    }

    pub fn view(&self) -> ChainView {
        self.0.read().view()
    }

    pub fn receipt(&self, tx_digest: &Digest) -> Option<Receipt> {
        self.0.read().receipt(tx_digest).cloned()
    }

    pub fn config(&self) -> ChainConfig {
        self.0.read().config().clone()
    }

    pub fn read<T>(&self, f: impl FnOnce(&Ledger) -> T) -> T {
        f(&self.0.read())
    }
}
