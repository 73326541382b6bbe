use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LedgerError;
use crate::address::Address;
use crate::canon::Digest;
use crate::capability::{AccessRule, CapError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContractId {
    /// Virtual trust zone registry.
    Vzone,
    /// Capability token registry.
    Capac,
}

impl ContractId {
    pub fn as_str(self) -> &'static str {
        match self {
            ContractId::Vzone => "vzone",
            ContractId::Capac => "capac",
        }
    }

    /// Deployment address, derived from the deployer and the contract name.
    pub fn address(self, deployer: Address) -> Address {
        let digest = Digest::of(&(deployer, self.as_str()));
        let mut bytes = [0u8; 20];
        bytes.copy_from_slice(&digest.as_bytes()[12..]);
        Address::from_bytes(bytes)
    }
}

impl fmt::Display for ContractId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContractId {
    type Err = LedgerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vzone" => Ok(ContractId::Vzone),
            "capac" => Ok(ContractId::Capac),
            other => Err(LedgerError::ContractNotFound(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", content = "args", rename_all = "snake_case")]
pub enum Call {
    /// Installs both contracts with the sender as supervisor; genesis only.
    DeployContracts,
    SetMasterAllowlist { addr: Address, allowed: bool },
    CreateVzone { zone_id: String },
    RevokeVzone { zone_id: String },
    JoinVzone { zone_id: String, node: Address },
    LeaveVzone { zone_id: String, node: Address },
    IssueToken {
        subject: Address,
        rules: Vec<AccessRule>,
        issue_date: u64,
        expired_date: u64,
    },
    RevokeAccessRights { subject: Address, rules: Vec<AccessRule> },
    RevokeToken { subject: Address },
    SetTokenValidity { subject: Address, valid: bool },
}

impl Call {
    pub fn op_name(&self) -> &'static str {
        match self {
            Call::DeployContracts => "deploy_contracts",
            Call::SetMasterAllowlist { .. } => "set_master_allowlist",
            Call::CreateVzone { .. } => "create_vzone",
            Call::RevokeVzone { .. } => "revoke_vzone",
            Call::JoinVzone { .. } => "join_vzone",
            Call::LeaveVzone { .. } => "leave_vzone",
            Call::IssueToken { .. } => "issue_token",
            Call::RevokeAccessRights { .. } => "revoke_access_rights",
            Call::RevokeToken { .. } => "revoke_token",
            Call::SetTokenValidity { .. } => "set_token_validity",
        }
    }

    pub fn contract(&self) -> ContractId {
        match self {
            Call::DeployContracts
            | Call::SetMasterAllowlist { .. }
            | Call::CreateVzone { .. }
            | Call::RevokeVzone { .. }
            | Call::JoinVzone { .. }
            | Call::LeaveVzone { .. } => ContractId::Vzone,
            Call::IssueToken { .. }
            | Call::RevokeAccessRights { .. }
            | Call::RevokeToken { .. }
            | Call::SetTokenValidity { .. } => ContractId::Capac,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: Address,
    pub contract: ContractId,
    pub call: Call,
    pub nonce: u64,
    /// Zero while pending; set from the gas table when applied.
    #[serde(default)]
    pub gas_used: u64,
}

impl Transaction {
    pub fn new(sender: Address, call: Call, nonce: u64) -> Self {
        Transaction {
            sender,
            contract: call.contract(),
            call,
            nonce,
            gas_used: 0,
        }
    }

    /// Identity of the transaction, independent of the gas filled in later.
    pub fn digest(&self) -> Digest {
        Digest::of(&(&self.sender, &self.contract, &self.call, self.nonce))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallValue {
    Unit,
    Bool(bool),
    TokenId(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallOutcome {
    Returned(CallValue),
    /// The call reverted; state is unchanged but gas is still charged.
    Rejected(CapError),
    NotDeployed,
}

impl CallOutcome {
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            CallOutcome::Returned(CallValue::Bool(b)) => Some(*b),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx_digest: Digest,
    pub height: u64,
    pub op: String,
    pub gas_used: u64,
    pub outcome: CallOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingReceipt {
    pub tx_digest: Digest,
    pub pool_size: usize,
}
