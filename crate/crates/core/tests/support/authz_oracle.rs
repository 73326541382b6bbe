//! Authorization truth table: an enumerated universe of identity, token and
//! rule configurations with the expected decision computed from labels, never
//! from the pipeline's own helpers.

#![allow(dead_code)]

use std::collections::BTreeMap;

use blendcac_core::capability::{AccessRule, Action, CapabilityToken, Condition, Weekday};
use blendcac_core::enforcement::{ContractReader, RequestContext, ServiceRequest, Stage};
use blendcac_core::zone::{VNodeRecord, VirtualZone, ZoneContract};
use blendcac_core::Address;

pub const NOW_MS: u64 = 40 * 86_400_000 + 10 * 3_600_000; // 10:00 on day 40
pub const TAG: &str = "ground-station-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Identity {
    Member,
    NonMember,
    CrossZone,
    RevokedZone,
}

pub const IDENTITIES: [Identity; 4] = [
    Identity::Member,
    Identity::NonMember,
    Identity::CrossZone,
    Identity::RevokedZone,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenFlags {
    pub initialized: bool,
    pub is_valid: bool,
    pub issued: bool,
    pub unexpired: bool,
}

/// One rule in the universe, with each condition labelled satisfied or not.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledRule {
    pub action: Action,
    pub resource: &'static str,
    pub conditions: Vec<(Condition, bool)>,
}

#[derive(Debug, Clone)]
pub struct Case {
    pub identity: Identity,
    pub token: Option<(TokenFlags, Vec<LabelledRule>)>,
    pub method: Action,
    pub uri: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expected {
    Grant,
    Deny(Stage),
}

fn condition_pool() -> Vec<(Condition, bool)> {
    let hour = 3_600_000;
    vec![
        (Condition::TimeWindow { start_ms: 9 * hour, end_ms: 17 * hour }, true),
        (Condition::TimeWindow { start_ms: 18 * hour, end_ms: 22 * hour }, false),
        (Condition::LocationTag { tag: TAG.to_string() }, true),
        (Condition::LocationTag { tag: "elsewhere".to_string() }, false),
        // Day 40 counted from a Monday is a Saturday.
        (Condition::Weekday { days: [Weekday::Sat, Weekday::Sun].into() }, true),
        (Condition::Weekday { days: [Weekday::Mon].into() }, false),
    ]
}

/// Condition lists of length 0 to 2 drawn from the pool.
fn condition_lists() -> Vec<Vec<(Condition, bool)>> {
    let pool = condition_pool();
    let mut out = vec![vec![]];
    for a in &pool {
        out.push(vec![a.clone()]);
    }
    for a in &pool {
        for b in &pool {
            if a != b {
                out.push(vec![a.clone(), b.clone()]);
            }
        }
    }
    out
}

fn rule_heads() -> [(Action, &'static str); 3] {
    [(Action::Get, "/api/data"), (Action::Put, "/api/data"), (Action::Get, "/api/other")]
}

/// Rule lists of length 0 to 2. Condition lists vary only on the first rule
/// of each list to keep the universe tractable; the second rule takes either
/// no conditions or a single violated one.
fn rule_lists() -> Vec<Vec<LabelledRule>> {
    let conds = condition_lists();
    let heads = rule_heads();
    let violated = condition_pool().into_iter().filter(|c| !c.1).collect::<Vec<_>>();
    let mut out = vec![vec![]];
    for &(action, resource) in &heads {
        for c in &conds {
            let first = LabelledRule { action, resource, conditions: c.clone() };
            out.push(vec![first.clone()]);
            for &(a2, r2) in &heads {
                for c2 in [vec![], vec![violated[0].clone()]] {
                    out.push(vec![
                        first.clone(),
                        LabelledRule { action: a2, resource: r2, conditions: c2 },
                    ]);
                }
            }
        }
    }
    out
}

pub fn universe() -> Vec<Case> {
    let mut flags = Vec::new();
    for bits in 0..16u8 {
        flags.push(TokenFlags {
            initialized: bits & 1 != 0,
            is_valid: bits & 2 != 0,
            issued: bits & 4 != 0,
            unexpired: bits & 8 != 0,
        });
    }
    let rules = rule_lists();
    let mut cases = Vec::new();
    for identity in IDENTITIES {
        for (method, uri) in [(Action::Get, "/api/data"), (Action::Put, "/api/data")] {
            cases.push(Case { identity, token: None, method, uri });
            for f in &flags {
                for r in &rules {
                    cases.push(Case { identity, token: Some((*f, r.clone())), method, uri });
                }
            }
        }
    }
    cases
}

pub fn expected(case: &Case) -> Expected {
    if case.identity != Identity::Member {
        return Expected::Deny(Stage::IdentityAuth);
    }
    let Some((flags, rules)) = &case.token else {
        return Expected::Deny(Stage::TokenFetch);
    };
    if !(flags.initialized && flags.is_valid && flags.issued && flags.unexpired) {
        return Expected::Deny(Stage::TokenStatus);
    }
    let mut matched = None;
    for r in rules {
        if r.action == case.method && r.resource == case.uri {
            matched = Some(r);
            break;
        }
    }
    let Some(rule) = matched else {
        return Expected::Deny(Stage::RuleMatch);
    };
    if rule.conditions.iter().all(|(_, sat)| *sat) {
        Expected::Grant
    } else {
        Expected::Deny(Stage::ConditionCheck)
    }
}

pub struct Addrs {
    pub supervisor: Address,
    pub provider: Address,
    pub member: Address,
    pub outsider: Address,
    pub cross: Address,
    pub revoked_provider: Address,
    pub revoked_member: Address,
}

pub fn addrs() -> Addrs {
    let a = Address::from_low_u64;
    Addrs {
        supervisor: a(1),
        provider: a(10),
        member: a(11),
        outsider: a(12),
        cross: a(13),
        revoked_provider: a(14),
        revoked_member: a(15),
    }
}

/// Reader over a fixed zone layout plus one injected token.
pub struct TableReader {
    pub zones: ZoneContract,
    pub tokens: BTreeMap<Address, CapabilityToken>,
}

impl ContractReader for TableReader {
    fn height(&self) -> u64 {
        1
    }
    fn vnode(&self, addr: &Address) -> VNodeRecord {
        self.zones.get_vnode(addr)
    }
    fn vzone(&self, zone_id: &str) -> VirtualZone {
        self.zones.get_vzone(zone_id)
    }
    fn token(&self, subject: &Address) -> Option<CapabilityToken> {
        self.tokens.get(subject).cloned()
    }
    fn token_modified_at(&self, subject: &Address) -> Option<u64> {
        self.tokens.get(subject).map(|_| 1)
    }
}

pub fn zone_layout() -> ZoneContract {
    let a = addrs();
    let sup = a.supervisor;
    let mut z = ZoneContract::new(sup);
    assert!(z.create_vzone(sup, "zone-A"));
    let master_b = Address::from_low_u64(3);
    let master_r = Address::from_low_u64(4);
    assert!(z.set_master_allowlist(sup, master_b, true));
    assert!(z.set_master_allowlist(sup, master_r, true));
    assert!(z.create_vzone(master_b, "zone-B"));
    assert!(z.create_vzone(master_r, "zone-R"));
    assert!(z.join_vzone(sup, "zone-A", a.provider));
    assert!(z.join_vzone(sup, "zone-A", a.member));
    assert!(z.join_vzone(sup, "zone-B", a.cross));
    assert!(z.join_vzone(sup, "zone-R", a.revoked_provider));
    assert!(z.join_vzone(sup, "zone-R", a.revoked_member));
    assert!(z.revoke_vzone(sup, "zone-R"));
    z
}

/// Builds the reader, provider address and request for a case.
pub fn materialize(case: &Case, zones: &ZoneContract) -> (TableReader, Address, ServiceRequest) {
    let a = addrs();
    let (provider, requester) = match case.identity {
        Identity::Member => (a.provider, a.member),
        Identity::NonMember => (a.provider, a.outsider),
        Identity::CrossZone => (a.provider, a.cross),
        Identity::RevokedZone => (a.revoked_provider, a.revoked_member),
    };
    let mut tokens = BTreeMap::new();
    if let Some((f, rules)) = &case.token {
        tokens.insert(
            requester,
            CapabilityToken {
                vid: requester,
                vzone_master: a.supervisor,
                id: 1,
                initialized: f.initialized,
                is_valid: f.is_valid,
                issue_date: if f.issued { NOW_MS - 1_000 } else { NOW_MS + 1_000 },
                // Expiry exactly at the request instant counts as expired.
                expired_date: if f.unexpired { NOW_MS + 1_000 } else { NOW_MS },
                authorization: rules
                    .iter()
                    .map(|r| {
                        AccessRule::new(r.action, r.resource)
                            .with_conditions(r.conditions.iter().map(|(c, _)| c.clone()).collect())
                    })
                    .collect(),
            },
        );
    }
    let request = ServiceRequest {
        requester,
        method: case.method,
        uri: case.uri.to_string(),
        context: RequestContext { now_ms: NOW_MS, location_tag: TAG.to_string() },
    };
    (TableReader { zones: zones.clone(), tokens }, provider, request)
}
