//! Domain master node: registers entities into its zone, evaluates access
//! requests against its policy set and issues capability tokens.
//!
//! Every chain effect is a submitted transaction. The master hands back a
//! pending handle and only acknowledges (ticket, token id) once the
//! transaction is confirmed in a block.

mod policy;
mod profile;

pub use policy::{PolicyError, PolicyRule, PolicySet, Predicate, PredicateTest, RegistrationPolicy};
pub use profile::{export_profiles_csv, EntityProfile, MemoryProfileStore, ProfileStore, SqliteProfileStore, StoreError};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::address::Address;
use crate::canon::Digest;
use crate::capability::{AccessRule, CapError};
use crate::ledger::{Call, CallOutcome, CallValue, ContractId, LedgerError, SharedLedger};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationRequest {
    pub vid: Address,
    pub display_name: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

/// Off-chain receipt for a confirmed zone membership.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ticket {
    pub vid: Address,
    pub group_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingRegistration {
    pub vid: Address,
    pub tx: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingIssue {
    pub subject: Address,
    pub tx: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedCapability {
    pub contract: Address,
    pub token_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grant {
    pub subject: Address,
    pub rules: Vec<AccessRule>,
    pub issue_date: u64,
    pub expired_date: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccessDenied {
    UnknownSubject,
    NotMember,
    NothingGranted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessDecision {
    Grant(Grant),
    Deny(AccessDenied),
}

#[derive(Debug, thiserror::Error)]
pub enum MasterError {
    #[error("master {0} does not own a confirmed zone")]
    NoZone(Address),
    #[error("registration denied by policy for {0}")]
    DeniedRegistration(Address),
    #[error("{0} is already registered")]
    DuplicateRegistration(Address),
    #[error("{vid} already belongs to zone {zone:?}")]
    ForeignMembership { vid: Address, zone: String },
    #[error("access decision is a denial ({0:?}); nothing to issue")]
    NotAGrant(AccessDenied),
    #[error("capability contract rejected the call: {0}")]
    Rejected(CapError),
    #[error("unexpected contract outcome {0:?}")]
    Unexpected(CallOutcome),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub struct MasterService {
    pub vid: Address,
    pub zone_id: String,
    store: Box<dyn ProfileStore>,
    policy: PolicySet,
    ledger: SharedLedger,
}

impl MasterService {
    pub fn new(
        vid: Address,
        zone_id: impl Into<String>,
        store: Box<dyn ProfileStore>,
        policy: PolicySet,
        ledger: SharedLedger,
    ) -> Self {
        MasterService {
            vid,
            zone_id: zone_id.into(),
            store,
            policy,
            ledger,
        }
    }

    pub fn policy(&self) -> &PolicySet {
        &self.policy
    }

    pub fn profiles(&self) -> Result<Vec<EntityProfile>, MasterError> {
        Ok(self.store.list()?)
    }

    pub fn profile(&self, vid: &Address) -> Result<Option<EntityProfile>, MasterError> {
        Ok(self.store.get(vid)?)
    }

    /// Submits the zone creation transaction for this master's zone.
    pub fn create_zone(&self) -> Result<Digest, MasterError> {
        let call = Call::CreateVzone {
            zone_id: self.zone_id.clone(),
        };
        Ok(self.ledger.submit_call(self.vid, call)?.tx_digest)
    }

    pub fn owns_zone(&self) -> bool {
        self.ledger.view().get_vzone(&self.zone_id).master == self.vid
    }

    /// Admits `request` per the registration chain, stores its profile and
    /// submits the join. The ticket comes from [`Self::finish_registration`]
    /// once the join is confirmed.
    pub fn register_entity(
        &mut self,
        request: RegistrationRequest,
        now_ms: u64,
    ) -> Result<PendingRegistration, MasterError> {
        if !self.owns_zone() {
            return Err(MasterError::NoZone(self.vid));
        }
        let profile = EntityProfile {
            vid: request.vid,
            display_name: request.display_name,
            group_id: self.zone_id.clone(),
            registered_at: now_ms,
            attributes: request.attributes,
        };
        if !self.policy.admits(&profile) {
            return Err(MasterError::DeniedRegistration(profile.vid));
        }
        if self.store.get(&profile.vid)?.is_some() {
            return Err(MasterError::DuplicateRegistration(profile.vid));
        }
        let call = Call::JoinVzone {
            zone_id: self.zone_id.clone(),
            node: profile.vid,
        };
        let pending = self.ledger.submit_call(self.vid, call)?;
        self.store.put(&profile)?;
        Ok(PendingRegistration {
            vid: profile.vid,
            tx: pending.tx_digest,
        })
    }

    /// `Ok(None)` while the join is still pending. A join the contract
    /// refused rolls the stored profile back.
    pub fn finish_registration(&mut self, pending: &PendingRegistration) -> Result<Option<Ticket>, MasterError> {
        let Some(receipt) = self.ledger.receipt(&pending.tx) else {
            return Ok(None);
        };
        match receipt.outcome.as_bool() {
            Some(true) => Ok(Some(Ticket {
                vid: pending.vid,
                group_id: self.zone_id.clone(),
            })),
            Some(false) => {
                self.store.remove(&pending.vid)?;
                let record = self.ledger.view().get_vnode(&pending.vid);
                if record.is_member() && record.vzone_id != self.zone_id {
                    Err(MasterError::ForeignMembership {
                        vid: pending.vid,
                        zone: record.vzone_id,
                    })
                } else {
                    Err(MasterError::DuplicateRegistration(pending.vid))
                }
            }
            None => Err(MasterError::Unexpected(receipt.outcome)),
        }
    }

    /// Pure in (profile, policy set, request, confirmed membership, now).
    pub fn evaluate_access_request(&self, subject: &Address, requested: &[AccessRule], now_ms: u64) -> AccessDecision {
        let profile = match self.store.get(subject) {
            Ok(Some(p)) => p,
            _ => return AccessDecision::Deny(AccessDenied::UnknownSubject),
        };
        let record = self.ledger.view().get_vnode(subject);
        if !record.is_member() || record.vzone_id != self.zone_id {
            return AccessDecision::Deny(AccessDenied::NotMember);
        }
        match self.policy.evaluate(&profile, requested) {
            Some((rules, validity_ms)) => AccessDecision::Grant(Grant {
                subject: *subject,
                rules,
                issue_date: now_ms,
                expired_date: now_ms.saturating_add(validity_ms),
            }),
            None => AccessDecision::Deny(AccessDenied::NothingGranted),
        }
    }

    pub fn issue_capability(&self, decision: &AccessDecision) -> Result<PendingIssue, MasterError> {
        let grant = match decision {
            AccessDecision::Grant(g) => g,
            AccessDecision::Deny(reason) => return Err(MasterError::NotAGrant(*reason)),
        };
        let call = Call::IssueToken {
            subject: grant.subject,
            rules: grant.rules.clone(),
            issue_date: grant.issue_date,
            expired_date: grant.expired_date,
        };
        let pending = self.ledger.submit_call(self.vid, call)?;
        Ok(PendingIssue {
            subject: grant.subject,
            tx: pending.tx_digest,
        })
    }

    pub fn finish_issue(&self, pending: &PendingIssue) -> Result<Option<IssuedCapability>, MasterError> {
        let Some(receipt) = self.ledger.receipt(&pending.tx) else {
            return Ok(None);
        };
        match receipt.outcome {
            CallOutcome::Returned(CallValue::TokenId(token_id)) => Ok(Some(IssuedCapability {
                contract: self.ledger.view().contract_address(ContractId::Capac),
                token_id,
            })),
            CallOutcome::Rejected(e) => Err(MasterError::Rejected(e)),
            other => Err(MasterError::Unexpected(other)),
        }
    }

    pub fn revoke_token(&self, subject: Address) -> Result<Digest, MasterError> {
        Ok(self.ledger.submit_call(self.vid, Call::RevokeToken { subject })?.tx_digest)
    }

    pub fn revoke_access_rights(&self, subject: Address, rules: Vec<AccessRule>) -> Result<Digest, MasterError> {
        let call = Call::RevokeAccessRights { subject, rules };
        Ok(self.ledger.submit_call(self.vid, call)?.tx_digest)
    }

    pub fn set_token_validity(&self, subject: Address, valid: bool) -> Result<Digest, MasterError> {
        let call = Call::SetTokenValidity { subject, valid };
        Ok(self.ledger.submit_call(self.vid, call)?.tx_digest)
    }

    /// Removes a follower from the zone and drops its profile.
    pub fn remove_entity(&mut self, node: Address) -> Result<Digest, MasterError> {
        let call = Call::LeaveVzone {
            zone_id: self.zone_id.clone(),
            node,
        };
        let digest = self.ledger.submit_call(self.vid, call)?.tx_digest;
        self.store.remove(&node)?;
        Ok(digest)
    }
}
