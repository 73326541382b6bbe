use serde::{Deserialize, Serialize};

use super::tx::{Call, CallOutcome, CallValue, ContractId, Transaction};
use super::LedgerError;
use crate::address::Address;
use crate::capability::{CapContract, CapabilityToken};
use crate::zone::{VNodeRecord, VirtualZone, ZoneContract};

/// State of every hosted contract at one height.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainState {
    pub supervisor: Option<Address>,
    pub vzone: ZoneContract,
    pub capac: CapContract,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "view", rename_all = "snake_case")]
pub enum ViewCall {
    GetVnode { addr: Address },
    GetVzone { zone_id: String },
    DanglingFollowers,
    GetToken { subject: Address },
}

impl ViewCall {
    pub fn contract(&self) -> ContractId {
        match self {
            ViewCall::GetVnode { .. } | ViewCall::GetVzone { .. } | ViewCall::DanglingFollowers => {
                ContractId::Vzone
            }
            ViewCall::GetToken { .. } => ContractId::Capac,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewValue {
    Vnode(VNodeRecord),
    Vzone(VirtualZone),
    Records(Vec<VNodeRecord>),
    Token(Option<CapabilityToken>),
}

impl ChainState {
    pub fn is_deployed(&self) -> bool {
        self.supervisor.is_some()
    }

    /// Applies one transaction at `height`. Never fails: rejected calls are
    /// reported in the outcome and leave state untouched.
    pub fn apply(&mut self, height: u64, tx: &Transaction) -> CallOutcome {
        let sender = tx.sender;
        if let Call::DeployContracts = tx.call {
            if self.is_deployed() {
                return CallOutcome::Returned(CallValue::Bool(false));
            }
            self.supervisor = Some(sender);
            self.vzone = ZoneContract::new(sender);
            self.capac = CapContract::new(sender);
            return CallOutcome::Returned(CallValue::Bool(true));
        }
        if !self.is_deployed() {
            return CallOutcome::NotDeployed;
        }
        let zones = &mut self.vzone;
        let bool_out = |b: bool| CallOutcome::Returned(CallValue::Bool(b));
        let cap_out = |r: Result<bool, _>| match r {
            Ok(b) => CallOutcome::Returned(CallValue::Bool(b)),
            Err(e) => CallOutcome::Rejected(e),
        };
        match &tx.call {
            Call::DeployContracts => unreachable!("handled above"),
            Call::SetMasterAllowlist { addr, allowed } => {
                bool_out(zones.set_master_allowlist(sender, *addr, *allowed))
            }
            Call::CreateVzone { zone_id } => bool_out(zones.create_vzone(sender, zone_id)),
            Call::RevokeVzone { zone_id } => bool_out(zones.revoke_vzone(sender, zone_id)),
            Call::JoinVzone { zone_id, node } => bool_out(zones.join_vzone(sender, zone_id, *node)),
            Call::LeaveVzone { zone_id, node } => bool_out(zones.leave_vzone(sender, zone_id, *node)),
            Call::IssueToken {
                subject,
                rules,
                issue_date,
                expired_date,
            } => match self.capac.issue_token(
                zones,
                height,
                sender,
                *subject,
                rules.clone(),
                *issue_date,
                *expired_date,
            ) {
                Ok(id) => CallOutcome::Returned(CallValue::TokenId(id)),
                Err(e) => CallOutcome::Rejected(e),
            },
            Call::RevokeAccessRights { subject, rules } => {
                cap_out(self.capac.revoke_access_rights(height, sender, *subject, rules))
            }
            Call::RevokeToken { subject } => cap_out(self.capac.revoke_token(height, sender, *subject)),
            Call::SetTokenValidity { subject, valid } => {
                cap_out(self.capac.set_token_validity(height, sender, *subject, *valid))
            }
        }
    }

    pub fn query(&self, contract: ContractId, view: &ViewCall) -> Result<ViewValue, LedgerError> {
        if !self.is_deployed() {
            return Err(LedgerError::ContractNotFound(contract.to_string()));
        }
        if view.contract() != contract {
            return Err(LedgerError::ContractNotFound(format!(
                "{contract} has no view {view:?}"
            )));
        }
        Ok(match view {
            ViewCall::GetVnode { addr } => ViewValue::Vnode(self.vzone.get_vnode(addr)),
            ViewCall::GetVzone { zone_id } => ViewValue::Vzone(self.vzone.get_vzone(zone_id)),
            ViewCall::DanglingFollowers => ViewValue::Records(self.vzone.dangling_followers()),
            ViewCall::GetToken { subject } => ViewValue::Token(self.capac.get_token(subject).cloned()),
        })
    }
}
