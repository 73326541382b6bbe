//! Service-provider side enforcement.
//!
//! A request passes five stages in order and stops at the first failure:
//! identity authentication against the zone contract, token fetch (cache
//! first), token status, rule match and condition check. Every stage that
//! runs is recorded with its modeled cost in a [`StageTrace`].

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize, Serializer};

use crate::address::Address;
use crate::capability::{AccessRule, Action, CapabilityToken};
use crate::ledger::ChainView;
use crate::time::Micros;
use crate::zone::{VNodeRecord, VirtualZone};

/// Confirmed-state reads the pipeline needs. Implemented by [`ChainView`];
/// tests plug in fixtures that hold tokens no contract could produce.
pub trait ContractReader {
    fn height(&self) -> u64;
    fn vnode(&self, addr: &Address) -> VNodeRecord;
    fn vzone(&self, zone_id: &str) -> VirtualZone;
    fn token(&self, subject: &Address) -> Option<CapabilityToken>;
    fn token_modified_at(&self, subject: &Address) -> Option<u64>;
}

impl ContractReader for ChainView {
    fn height(&self) -> u64 {
        self.height
    }

    fn vnode(&self, addr: &Address) -> VNodeRecord {
        self.get_vnode(addr)
    }

    fn vzone(&self, zone_id: &str) -> VirtualZone {
        self.get_vzone(zone_id)
    }

    fn token(&self, subject: &Address) -> Option<CapabilityToken> {
        self.get_token(subject)
    }

    fn token_modified_at(&self, subject: &Address) -> Option<u64> {
        ChainView::token_modified_at(self, subject)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    IdentityAuth,
    TokenFetch,
    TokenStatus,
    RuleMatch,
    ConditionCheck,
}

impl Stage {
    pub const PIPELINE: [Stage; 5] = [
        Stage::IdentityAuth,
        Stage::TokenFetch,
        Stage::TokenStatus,
        Stage::RuleMatch,
        Stage::ConditionCheck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::IdentityAuth => "identity_auth",
            Stage::TokenFetch => "token_fetch",
            Stage::TokenStatus => "token_status",
            Stage::RuleMatch => "rule_match",
            Stage::ConditionCheck => "condition_check",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AuthFailure {
    NotMember,
    ZoneMismatch,
    ZoneRevoked,
}

/// First token field that failed, checked in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenStatusFailure {
    Initialized,
    IsValid,
    IssueDate,
    ExpiredDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DenyReason {
    Auth(AuthFailure),
    TokenAbsent,
    Status(TokenStatusFailure),
    NoMatchingRule,
    /// Index of the first unsatisfied condition in the matched rule.
    ConditionFailed(usize),
}

impl DenyReason {
    pub fn code(&self) -> String {
        match self {
            DenyReason::Auth(AuthFailure::NotMember) => "not-member".into(),
            DenyReason::Auth(AuthFailure::ZoneMismatch) => "zone-mismatch".into(),
            DenyReason::Auth(AuthFailure::ZoneRevoked) => "zone-revoked".into(),
            DenyReason::TokenAbsent => "token-absent".into(),
            DenyReason::Status(TokenStatusFailure::Initialized) => "initialized".into(),
            DenyReason::Status(TokenStatusFailure::IsValid) => "isValid".into(),
            DenyReason::Status(TokenStatusFailure::IssueDate) => "issuedate".into(),
            DenyReason::Status(TokenStatusFailure::ExpiredDate) => "expireddate".into(),
            DenyReason::NoMatchingRule => "no-matching-rule".into(),
            DenyReason::ConditionFailed(i) => format!("condition-{i}"),
        }
    }
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl Serialize for DenyReason {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.code())
    }
}

/// Machine-readable denial returned to the requester.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Denial {
    pub stage: Stage,
    pub reason: DenyReason,
    pub requester: Address,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Grant(AccessRule),
    Deny(Denial),
}

impl Decision {
    pub fn is_grant(&self) -> bool {
        matches!(self, Decision::Grant(_))
    }

    pub fn denial(&self) -> Option<&Denial> {
        match self {
            Decision::Deny(d) => Some(d),
            Decision::Grant(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestContext {
    pub now_ms: u64,
    #[serde(default)]
    pub location_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceRequest {
    pub requester: Address,
    pub method: Action,
    pub uri: String,
    pub context: RequestContext,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageOutcome {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub outcome: StageOutcome,
    pub duration: Micros,
}

/// Per-request timing. `total` is the recorded stages plus `transport` (the
/// channel legs) plus `handling` (request parsing and the service handler).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StageTrace {
    pub stages: Vec<StageRecord>,
    pub transport: Micros,
    pub handling: Micros,
    pub total: Micros,
    pub aborted_at: Option<Stage>,
}

impl StageTrace {
    fn record(&mut self, stage: Stage, outcome: StageOutcome, duration: Micros) {
        self.stages.push(StageRecord {
            stage,
            outcome,
            duration,
        });
        if outcome == StageOutcome::Fail {
            self.aborted_at = Some(stage);
        }
        self.recompute_total();
    }

    pub fn stage_sum(&self) -> Micros {
        self.stages.iter().map(|s| s.duration).sum()
    }

    pub fn duration_of(&self, stage: Stage) -> Option<Micros> {
        self.stages.iter().find(|s| s.stage == stage).map(|s| s.duration)
    }

    pub fn add_transport(&mut self, transport: Micros) {
        self.transport += transport;
        self.recompute_total();
    }

    pub fn add_handling(&mut self, handling: Micros) {
        self.handling += handling;
        self.recompute_total();
    }

    fn recompute_total(&mut self) {
        self.total = self.stage_sum() + self.transport + self.handling;
    }
}

/// Writes `request_id, stage, outcome, duration_ms` rows.
pub fn write_stage_csv<'a, W, I>(traces: I, out: W) -> csv::Result<()>
where
    W: io::Write,
    I: IntoIterator<Item = (u64, &'a StageTrace)>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["request_id", "stage", "outcome", "duration_ms"])?;
    for (id, trace) in traces {
        for s in &trace.stages {
            let outcome = match s.outcome {
                StageOutcome::Pass => "pass",
                StageOutcome::Fail => "fail",
            };
            w.write_record([id.to_string(), s.stage.to_string(), outcome.into(), s.duration.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Modeled cost of each pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageCosts {
    pub identity_auth: Micros,
    pub token_fetch_miss: Micros,
    pub token_fetch_hit: Micros,
    pub token_status: Micros,
    pub rule_match: Micros,
    pub condition_check: Micros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthOutcome {
    pub ok: bool,
    pub reason: Option<AuthFailure>,
}

/// Same-zone check: both parties hold a membership record for the same
/// zone and that zone still has a master. Reads the Vnode records, then the
/// VZone entry: two contract interactions.
pub fn authenticate<R: ContractReader + ?Sized>(reader: &R, provider: &Address, requester: &Address) -> AuthOutcome {
    let fail = |reason| AuthOutcome {
        ok: false,
        reason: Some(reason),
    };
    let req = reader.vnode(requester);
    let prov = reader.vnode(provider);
    if !req.is_member() || !prov.is_member() {
        return fail(AuthFailure::NotMember);
    }
    if req.vzone_id != prov.vzone_id {
        return fail(AuthFailure::ZoneMismatch);
    }
    if reader.vzone(&req.vzone_id).master.is_zero() {
        return fail(AuthFailure::ZoneRevoked);
    }
    AuthOutcome { ok: true, reason: None }
}

pub fn verify_token_status(token: &CapabilityToken, now_ms: u64) -> Result<(), TokenStatusFailure> {
    if !token.initialized {
        return Err(TokenStatusFailure::Initialized);
    }
    if !token.is_valid {
        return Err(TokenStatusFailure::IsValid);
    }
    if now_ms < token.issue_date {
        return Err(TokenStatusFailure::IssueDate);
    }
    if now_ms >= token.expired_date {
        return Err(TokenStatusFailure::ExpiredDate);
    }
    Ok(())
}

/// First rule, in token order, granting the request's method on exactly
/// the request URI.
pub fn match_access_rule<'t>(token: &'t CapabilityToken, request: &ServiceRequest) -> Option<&'t AccessRule> {
    token
        .authorization
        .iter()
        .find(|r| r.action == request.method && r.resource == request.uri)
}

/// Every condition must hold; an empty list always passes.
pub fn verify_conditions(rule: &AccessRule, context: &RequestContext) -> Result<(), usize> {
    match rule
        .conditions
        .iter()
        .position(|c| !c.is_satisfied(context.now_ms, &context.location_tag))
    {
        Some(i) => Err(i),
        None => Ok(()),
    }
}

#[derive(Debug, Clone)]
pub struct CacheEntry {
    pub token: Arc<CapabilityToken>,
    pub cached_at_ms: u64,
    /// Chain height the entry was read at.
    pub height: u64,
    /// Last time a fetch or sync confirmed the entry against the chain.
    pub validated_at_ms: u64,
}

#[derive(Debug, Clone, Default)]
pub struct TokenCache {
    entries: BTreeMap<Address, CacheEntry>,
    pub last_sync_height: u64,
}

impl TokenCache {
    pub fn get(&self, subject: &Address) -> Option<&CacheEntry> {
        self.entries.get(subject)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn subjects(&self) -> impl Iterator<Item = &Address> {
        self.entries.keys()
    }
}

#[derive(Debug, Clone)]
pub struct Authorization {
    pub decision: Decision,
    pub trace: StageTrace,
    pub cache_hit: bool,
    pub height: u64,
}

/// Enforcement point for one service provider.
///
/// The cache sits behind a lock so a sync can run between requests from
/// another thread; each request reads one [`ContractReader`] snapshot and
/// holds an `Arc` to the token it validates, so a concurrent sync never
/// tears a token mid-validation.
#[derive(Debug)]
pub struct ServiceProvider {
    pub vid: Address,
    pub costs: StageCosts,
    block_interval_ms: u64,
    cache: RwLock<TokenCache>,
    contract_queries: AtomicU64,
}

impl ServiceProvider {
    pub fn new(vid: Address, costs: StageCosts, block_interval_ms: u64) -> Self {
        ServiceProvider {
            vid,
            costs,
            block_interval_ms,
            cache: RwLock::new(TokenCache::default()),
            contract_queries: AtomicU64::new(0),
        }
    }

    /// View calls issued so far (identity checks count two).
    pub fn contract_queries(&self) -> u64 {
        self.contract_queries.load(Ordering::Relaxed)
    }

    pub fn cache_snapshot(&self) -> TokenCache {
        self.cache.read().clone()
    }

    pub fn authenticate<R: ContractReader + ?Sized>(&self, reader: &R, requester: &Address) -> AuthOutcome {
        self.contract_queries.fetch_add(2, Ordering::Relaxed);
        authenticate(reader, &self.vid, requester)
    }

    /// Returns the subject's token and whether it came from the cache.
    /// Entries older than one block interval since their last validation
    /// are not served; the contract is queried again instead.
    pub fn fetch_or_cache_token<R: ContractReader + ?Sized>(
        &self,
        reader: &R,
        subject: &Address,
        now_ms: u64,
    ) -> (Option<Arc<CapabilityToken>>, bool) {
        if let Some(entry) = self.cache.read().get(subject) {
            if now_ms.saturating_sub(entry.validated_at_ms) <= self.block_interval_ms {
                return (Some(Arc::clone(&entry.token)), true);
            }
        }
        self.contract_queries.fetch_add(1, Ordering::Relaxed);
        let Some(token) = reader.token(subject) else {
            self.cache.write().entries.remove(subject);
            return (None, false);
        };
        let token = Arc::new(token);
        self.cache.write().entries.insert(
            *subject,
            CacheEntry {
                token: Arc::clone(&token),
                cached_at_ms: now_ms,
                height: reader.height(),
                validated_at_ms: now_ms,
            },
        );
        (Some(token), false)
    }

    /// Refreshes every cached token the chain changed after it was read.
    /// Returns the number of entries replaced.
    pub fn sync_cache<R: ContractReader + ?Sized>(&self, reader: &R, now_ms: u64) -> usize {
        let mut cache = self.cache.write();
        let height = reader.height();
        let mut refreshed = 0;
        let mut gone = Vec::new();
        for (subject, entry) in cache.entries.iter_mut() {
            self.contract_queries.fetch_add(1, Ordering::Relaxed);
            let changed = reader.token_modified_at(subject).is_some_and(|h| h > entry.height);
            if changed {
                match reader.token(subject) {
                    Some(token) => {
                        entry.token = Arc::new(token);
                        entry.cached_at_ms = now_ms;
                        refreshed += 1;
                    }
                    None => gone.push(*subject),
                }
            }
            entry.height = height;
            entry.validated_at_ms = now_ms;
        }
        for subject in gone {
            cache.entries.remove(&subject);
        }
        cache.last_sync_height = height;
        refreshed
    }

    /// A sync that could not reach the chain evicts everything, so the next
    /// request re-queries the contract.
    pub fn sync_failed(&self) {
        self.cache.write().entries.clear();
    }

    pub fn authorize<R: ContractReader + ?Sized>(&self, reader: &R, request: &ServiceRequest) -> Authorization {
        let mut trace = StageTrace::default();
        let costs = self.costs;
        let deny = |trace: &mut StageTrace, stage, cost, reason, cache_hit| {
            trace.record(stage, StageOutcome::Fail, cost);
            Authorization {
                decision: Decision::Deny(Denial {
                    stage,
                    reason,
                    requester: request.requester,
                }),
                trace: std::mem::take(trace),
                cache_hit,
                height: reader.height(),
            }
        };

        let auth = self.authenticate(reader, &request.requester);
        if let Some(reason) = auth.reason {
            return deny(&mut trace, Stage::IdentityAuth, costs.identity_auth, DenyReason::Auth(reason), false);
        }
        trace.record(Stage::IdentityAuth, StageOutcome::Pass, costs.identity_auth);

        let (token, hit) = self.fetch_or_cache_token(reader, &request.requester, request.context.now_ms);
        let fetch_cost = if hit { costs.token_fetch_hit } else { costs.token_fetch_miss };
        let Some(token) = token else {
            return deny(&mut trace, Stage::TokenFetch, fetch_cost, DenyReason::TokenAbsent, hit);
        };
        trace.record(Stage::TokenFetch, StageOutcome::Pass, fetch_cost);

        if let Err(f) = verify_token_status(&token, request.context.now_ms) {
            return deny(&mut trace, Stage::TokenStatus, costs.token_status, DenyReason::Status(f), hit);
        }
        trace.record(Stage::TokenStatus, StageOutcome::Pass, costs.token_status);

        let Some(rule) = match_access_rule(&token, request) else {
            return deny(&mut trace, Stage::RuleMatch, costs.rule_match, DenyReason::NoMatchingRule, hit);
        };
        trace.record(Stage::RuleMatch, StageOutcome::Pass, costs.rule_match);

        if let Err(i) = verify_conditions(rule, &request.context) {
            return deny(&mut trace, Stage::ConditionCheck, costs.condition_check, DenyReason::ConditionFailed(i), hit);
        }
        trace.record(Stage::ConditionCheck, StageOutcome::Pass, costs.condition_check);

        Authorization {
            decision: Decision::Grant(rule.clone()),
            trace,
            cache_hit: hit,
            height: reader.height(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capability::{CapContract, Condition, Weekday};
    use crate::time::MS_PER_DAY;
    use crate::zone::ZoneContract;

    fn addr(n: u64) -> Address {
        Address::from_low_u64(n)
    }

    /// Mutable in-memory reader for pipeline tests.
    #[derive(Default)]
    struct Fixture {
        height: u64,
        zones: ZoneContract,
        tokens: BTreeMap<Address, (CapabilityToken, u64)>,
    }

    impl ContractReader for Fixture {
        fn height(&self) -> u64 {
            self.height
        }
        fn vnode(&self, a: &Address) -> VNodeRecord {
            self.zones.get_vnode(a)
        }
        fn vzone(&self, z: &str) -> VirtualZone {
            self.zones.get_vzone(z)
        }
        fn token(&self, s: &Address) -> Option<CapabilityToken> {
            self.tokens.get(s).map(|(t, _)| t.clone())
        }
        fn token_modified_at(&self, s: &Address) -> Option<u64> {
            self.tokens.get(s).map(|(_, h)| *h)
        }
    }

    const SUP: u64 = 1;
    const MASTER_A: u64 = 2;
    const MASTER_B: u64 = 3;
    const PROVIDER: u64 = 10;
    const CLIENT: u64 = 11;
    const OUTSIDER: u64 = 20;

    fn fixture() -> Fixture {
        let mut zones = ZoneContract::new(addr(SUP));
        zones.set_master_allowlist(addr(SUP), addr(MASTER_A), true);
        zones.set_master_allowlist(addr(SUP), addr(MASTER_B), true);
        zones.create_vzone(addr(MASTER_A), "zone-A");
        zones.create_vzone(addr(MASTER_B), "zone-B");
        zones.join_vzone(addr(MASTER_A), "zone-A", addr(PROVIDER));
        zones.join_vzone(addr(MASTER_A), "zone-A", addr(CLIENT));
        zones.join_vzone(addr(MASTER_B), "zone-B", addr(OUTSIDER));
        Fixture {
            height: 1,
            zones,
            tokens: BTreeMap::new(),
        }
    }

    fn issue(f: &mut Fixture, subject: u64, rules: Vec<AccessRule>) {
        let mut cap = CapContract::new(addr(SUP));
        cap.issue_token(&f.zones, f.height, addr(MASTER_A), addr(subject), rules, 0, 1_000_000)
            .unwrap();
        let token = cap.get_token(&addr(subject)).unwrap().clone();
        f.tokens.insert(addr(subject), (token, f.height));
    }

    fn request(requester: u64, method: Action, uri: &str, now_ms: u64) -> ServiceRequest {
        ServiceRequest {
            requester: addr(requester),
            method,
            uri: uri.into(),
            context: RequestContext {
                now_ms,
                location_tag: "ground-station-1".into(),
            },
        }
    }

    fn unit_costs() -> StageCosts {
        StageCosts {
            identity_auth: Micros(100),
            token_fetch_miss: Micros(50),
            token_fetch_hit: Micros(5),
            token_status: Micros(3),
            rule_match: Micros(2),
            condition_check: Micros(1),
        }
    }

    fn provider() -> ServiceProvider {
        ServiceProvider::new(addr(PROVIDER), unit_costs(), 15_000)
    }

    #[test]
    fn authenticate_cases() {
        let mut f = fixture();
        let known: Address = "0xaa09c6d65908e54bf695748812c51d8f2ceea0f5".parse().unwrap();
        f.zones.join_vzone(addr(MASTER_A), "zone-A", known);
        assert!(authenticate(&f, &addr(PROVIDER), &known).ok);
        let cross = authenticate(&f, &addr(PROVIDER), &addr(OUTSIDER));
        assert_eq!(cross.reason, Some(AuthFailure::ZoneMismatch));
        let stranger = authenticate(&f, &addr(PROVIDER), &addr(99));
        assert_eq!(stranger.reason, Some(AuthFailure::NotMember));
        f.zones.revoke_vzone(addr(MASTER_A), "zone-A");
        let revoked = authenticate(&f, &addr(CLIENT), &known);
        assert_eq!(revoked.reason, Some(AuthFailure::ZoneRevoked));
    }

    #[test]
    fn token_status_boundaries() {
        let token = CapabilityToken {
            vid: addr(CLIENT),
            vzone_master: addr(MASTER_A),
            id: 1,
            initialized: true,
            is_valid: true,
            issue_date: 100,
            expired_date: 200,
            authorization: vec![],
        };
        assert_eq!(verify_token_status(&token, 100), Ok(()));
        assert_eq!(verify_token_status(&token, 99), Err(TokenStatusFailure::IssueDate));
        assert_eq!(verify_token_status(&token, 200), Err(TokenStatusFailure::ExpiredDate));
        let suspended = CapabilityToken {
            is_valid: false,
            ..token.clone()
        };
        assert_eq!(verify_token_status(&suspended, 150), Err(TokenStatusFailure::IsValid));
        let raw = CapabilityToken {
            initialized: false,
            is_valid: false,
            ..token
        };
        assert_eq!(verify_token_status(&raw, 0), Err(TokenStatusFailure::Initialized));
    }

    #[test]
    fn rule_matching_is_exact_and_ordered() {
        let mut f = fixture();
        let second = AccessRule::new(Action::Get, "/api/data").with_conditions(vec![Condition::LocationTag {
            tag: "x".into(),
        }]);
        issue(
            &mut f,
            CLIENT,
            vec![AccessRule::new(Action::Get, "/api/other"), second.clone(), AccessRule::new(Action::Get, "/api/data")],
        );
        let token = f.token(&addr(CLIENT)).unwrap();
        assert_eq!(match_access_rule(&token, &request(CLIENT, Action::Get, "/api/data", 0)), Some(&second));
        assert_eq!(match_access_rule(&token, &request(CLIENT, Action::Put, "/api/data", 0)), None);
        assert_eq!(match_access_rule(&token, &request(CLIENT, Action::Get, "/api/data/1", 0)), None);
        assert_eq!(match_access_rule(&token, &request(CLIENT, Action::Get, "/api", 0)), None);
    }

    #[test]
    fn conditions_are_conjunctive() {
        let office = Condition::TimeWindow {
            start_ms: 9 * 3_600_000,
            end_ms: 17 * 3_600_000,
        };
        let weekdays = Condition::Weekday {
            days: [Weekday::Mon, Weekday::Tue, Weekday::Wed, Weekday::Thu, Weekday::Fri].into(),
        };
        let station = Condition::LocationTag {
            tag: "ground-station-1".into(),
        };
        let ctx = |now_ms: u64, tag: &str| RequestContext {
            now_ms,
            location_tag: tag.into(),
        };
        let plain = AccessRule::new(Action::Get, "/api/data");
        assert_eq!(verify_conditions(&plain, &ctx(0, "")), Ok(()));
        let timed = plain.clone().with_conditions(vec![office.clone()]);
        assert_eq!(verify_conditions(&timed, &ctx(18 * 3_600_000, "")), Err(0));
        let both = plain.with_conditions(vec![weekdays, station]);
        // Tuesday noon at the station
        let tuesday_noon = MS_PER_DAY + 12 * 3_600_000;
        assert_eq!(verify_conditions(&both, &ctx(tuesday_noon, "ground-station-1")), Ok(()));
        assert_eq!(verify_conditions(&both, &ctx(tuesday_noon, "elsewhere")), Err(1));
        assert_eq!(verify_conditions(&both, &ctx(5 * MS_PER_DAY, "ground-station-1")), Err(0));
    }

    #[test]
    fn full_grant_records_five_stages() {
        let mut f = fixture();
        issue(&mut f, CLIENT, vec![AccessRule::new(Action::Get, "/api/data")]);
        let p = provider();
        let out = p.authorize(&f, &request(CLIENT, Action::Get, "/api/data", 10));
        assert!(out.decision.is_grant());
        let stages: Vec<Stage> = out.trace.stages.iter().map(|s| s.stage).collect();
        assert_eq!(stages, Stage::PIPELINE);
        assert_eq!(out.trace.aborted_at, None);
        assert!(!out.cache_hit);
        assert_eq!(out.trace.total, Micros(100 + 50 + 3 + 2 + 1));
    }

    #[test]
    fn cross_zone_denied_at_identity() {
        let f = fixture();
        let p = provider();
        let out = p.authorize(&f, &request(OUTSIDER, Action::Get, "/api/data", 10));
        let denial = out.decision.denial().unwrap();
        assert_eq!(denial.stage, Stage::IdentityAuth);
        assert_eq!(denial.reason, DenyReason::Auth(AuthFailure::ZoneMismatch));
        assert_eq!(out.trace.stages.len(), 1);
        let json = serde_json::to_string(denial).unwrap();
        assert_eq!(
            json,
            format!(r#"{{"stage":"identity_auth","reason":"zone-mismatch","requester":"{}"}}"#, addr(OUTSIDER))
        );
    }

    #[test]
    fn unknown_token_denied_at_fetch() {
        let f = fixture();
        let p = provider();
        let out = p.authorize(&f, &request(CLIENT, Action::Get, "/api/data", 10));
        assert_eq!(out.trace.aborted_at, Some(Stage::TokenFetch));
        assert_eq!(out.decision.denial().unwrap().reason, DenyReason::TokenAbsent);
        assert!(p.cache_snapshot().is_empty());
    }

    #[test]
    fn ungranted_action_denied_at_rule_match() {
        let mut f = fixture();
        issue(&mut f, CLIENT, vec![AccessRule::new(Action::Get, "/api/data")]);
        let p = provider();
        let out = p.authorize(&f, &request(CLIENT, Action::Put, "/api/data", 10));
        assert_eq!(out.trace.aborted_at, Some(Stage::RuleMatch));
        assert_eq!(out.trace.stages.len(), 4);
    }

    #[test]
    fn cache_hit_skips_contract() {
        let mut f = fixture();
        issue(&mut f, CLIENT, vec![AccessRule::new(Action::Get, "/api/data")]);
        let p = provider();
        let (t, hit) = p.fetch_or_cache_token(&f, &addr(CLIENT), 0);
        assert!(t.is_some() && !hit);
        let q = p.contract_queries();
        let (t2, hit2) = p.fetch_or_cache_token(&f, &addr(CLIENT), 1000);
        assert!(t2.is_some() && hit2);
        assert_eq!(p.contract_queries(), q);
        // stale past one interval without a sync: re-queried
        let (_, hit3) = p.fetch_or_cache_token(&f, &addr(CLIENT), 1000 + 15_001);
        assert!(!hit3);
    }

    #[test]
    fn sync_refreshes_changed_entries_only() {
        let mut f = fixture();
        let subjects = [CLIENT, 12, 13, 14, 15];
        for s in &subjects[1..] {
            f.zones.join_vzone(addr(MASTER_A), "zone-A", addr(*s));
        }
        for s in subjects {
            issue(&mut f, s, vec![AccessRule::new(Action::Get, "/api/data")]);
        }
        let p = provider();
        for s in subjects {
            p.fetch_or_cache_token(&f, &addr(s), 0);
        }
        assert_eq!(p.sync_cache(&f, 1), 0);
        f.height = 2;
        for s in [CLIENT, 13, 15] {
            issue(&mut f, s, vec![AccessRule::new(Action::Post, "/api/data")]);
        }
        assert_eq!(p.sync_cache(&f, 2), 3);
        assert_eq!(p.cache_snapshot().last_sync_height, 2);
        let entry = p.cache_snapshot();
        assert_eq!(entry.get(&addr(13)).unwrap().token.authorization[0].action, Action::Post);
        assert_eq!(entry.get(&addr(12)).unwrap().token.authorization[0].action, Action::Get);
    }

    #[test]
    fn revocation_propagates_on_sync() {
        let mut f = fixture();
        issue(&mut f, CLIENT, vec![AccessRule::new(Action::Get, "/api/data")]);
        let p = provider();
        let req = request(CLIENT, Action::Get, "/api/data", 10);
        assert!(p.authorize(&f, &req).decision.is_grant());
        f.height = 2;
        let (token, _) = f.tokens.get_mut(&addr(CLIENT)).unwrap();
        token.is_valid = false;
        token.authorization.clear();
        f.tokens.get_mut(&addr(CLIENT)).unwrap().1 = 2;
        // stale cache still grants before the sync
        assert!(p.authorize(&f, &req).decision.is_grant());
        assert_eq!(p.sync_cache(&f, 20), 1);
        let out = p.authorize(&f, &req);
        assert_eq!(out.decision.denial().unwrap().reason, DenyReason::Status(TokenStatusFailure::IsValid));
        assert!(out.cache_hit);
    }

    #[test]
    fn sync_failure_evicts() {
        let mut f = fixture();
        issue(&mut f, CLIENT, vec![AccessRule::new(Action::Get, "/api/data")]);
        let p = provider();
        p.fetch_or_cache_token(&f, &addr(CLIENT), 0);
        p.sync_failed();
        assert!(p.cache_snapshot().is_empty());
        let (_, hit) = p.fetch_or_cache_token(&f, &addr(CLIENT), 1);
        assert!(!hit);
    }

    #[test]
    fn trace_totals_include_transport_and_handling() {
        let mut f = fixture();
        issue(&mut f, CLIENT, vec![AccessRule::new(Action::Get, "/api/data")]);
        let p = provider();
        let mut out = p.authorize(&f, &request(CLIENT, Action::Get, "/api/data", 10)).trace;
        out.add_transport(Micros(1000));
        out.add_handling(Micros(7));
        assert_eq!(out.total, out.stage_sum() + Micros(1007));
        let mut buf = Vec::new();
        write_stage_csv([(1, &out)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("request_id,stage,outcome,duration_ms\n1,identity_auth,pass,0.100\n"));
    }

    #[test]
    fn concurrent_sync_and_authorize() {
        let mut f = fixture();
        issue(&mut f, CLIENT, vec![AccessRule::new(Action::Get, "/api/data")]);
        let f = Arc::new(f);
        let p = Arc::new(provider());
        let syncer = {
            let (p, f) = (Arc::clone(&p), Arc::clone(&f));
            std::thread::spawn(move || {
                for i in 0..200 {
                    p.sync_cache(&*f, i);
                }
            })
        };
        for i in 0..200 {
            let out = p.authorize(&*f, &request(CLIENT, Action::Get, "/api/data", i));
            assert!(out.decision.is_grant());
        }
        syncer.join().unwrap();
    }
}
