//! Single-threaded discrete-event loop over the virtual clock.
//!
//! Everything that happens is a scheduled event: block production (one
//! every `block_interval_ms`, each followed by a cache sync on every
//! provider), script steps, request sends, arrivals at the provider and
//! responses back at the requester. Ties at the same instant are broken by
//! event class (blocks first) and then by scheduling order, so a run is a
//! pure function of (config, script, seed).
//!
//! A provider decides a request the instant it arrives, against the latest
//! confirmed chain view, and the modeled stage costs are charged to the
//! response time. Providers do not queue: overlapping requests are decided
//! independently.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use blendcac_core::canon::Digest;
use blendcac_core::capability::{AccessRule, Action};
use blendcac_core::enforcement::{Decision, RequestContext, ServiceProvider, ServiceRequest, StageTrace};
use blendcac_core::ledger::{Call, CallOutcome, ChainConfig, Ledger, LedgerError};
use blendcac_core::master::{
    AccessDecision, AccessDenied, Grant, MasterError, MasterService, MemoryProfileStore, PendingIssue,
    PendingRegistration, RegistrationRequest,
};
use blendcac_core::time::MS_PER_DAY;
use blendcac_core::{Address, Micros, SharedLedger};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConfigError, Event, NodeSpec, Role, ScenarioConfig};
use crate::measure::{Measurement, Outcome};
use crate::profile::ProcessingProfile;

/// Stream ids carved out of the scenario seed.
const IDENTITY_STREAM: u64 = 1;
const LINK_STREAM: u64 = 2;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("topology setup: {0}")]
    Setup(String),
    #[error("event {index} ({kind}): {message}")]
    Event {
        index: usize,
        kind: &'static str,
        message: String,
    },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LogEntry {
    pub at_ms: u64,
    pub what: String,
}

#[derive(Debug, Clone)]
pub struct NodeRuntime {
    pub spec: NodeSpec,
    pub vid: Address,
    pub profile: ProcessingProfile,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    pub measurements: Vec<Measurement>,
    pub log: Vec<LogEntry>,
}

pub struct Simulation {
    config: ScenarioConfig,
    ledger: SharedLedger,
    nodes: Vec<NodeRuntime>,
    by_name: BTreeMap<String, usize>,
    /// Zone id → its master's service.
    masters: BTreeMap<String, MasterService>,
    /// Node index → access-controlled provider.
    providers: BTreeMap<usize, ServiceProvider>,
    link_rng: ChaCha8Rng,
    now: Micros,
    next_block_ms: u64,
    next_request_id: u64,
    log: Vec<LogEntry>,
}

/// Validates the scenario, derives node identities from `seed`, deploys the
/// contracts and performs the zone setup (allowlist, zone creation and
/// registration of every node that names a zone), confirming it in forced
/// blocks at `start_ms`.
pub fn build_topology(config: ScenarioConfig, seed: u64) -> Result<Simulation, SimError> {
    config.validate()?;
    let mut id_rng = ChaCha8Rng::seed_from_u64(seed);
    id_rng.set_stream(IDENTITY_STREAM);
    let mut link_rng = ChaCha8Rng::seed_from_u64(seed);
    link_rng.set_stream(LINK_STREAM);

    let mut taken: BTreeSet<Address> = config.nodes.iter().filter_map(|n| n.vid).collect();
    let mut nodes = Vec::with_capacity(config.nodes.len());
    let mut by_name = BTreeMap::new();
    for (i, spec) in config.nodes.iter().enumerate() {
        let vid = match spec.vid {
            Some(v) => v,
            None => loop {
                let v = Address::random(&mut id_rng);
                if taken.insert(v) {
                    break v;
                }
            },
        };
        by_name.insert(spec.name.clone(), i);
        nodes.push(NodeRuntime {
            spec: spec.clone(),
            vid,
            profile: spec.profile.resolve(),
        });
    }
    let supervisor = nodes
        .iter()
        .find(|n| n.spec.role == Role::Supervisor)
        .map(|n| n.vid)
        .expect("validated: one supervisor");

    let chain_config = ChainConfig::new(supervisor).with_block_interval(config.block_interval_ms);
    chain_config.validate().map_err(SimError::Setup)?;
    let ledger = SharedLedger::new(Ledger::new(chain_config));
    let start_ms = config.start_ms;

    let mut masters = BTreeMap::new();
    for zone in &config.zones {
        let master_vid = nodes[by_name[&zone.master]].vid;
        if master_vid != supervisor {
            ledger.submit_call(
                supervisor,
                Call::SetMasterAllowlist {
                    addr: master_vid,
                    allowed: true,
                },
            )?;
        }
        let service = MasterService::new(
            master_vid,
            zone.id.clone(),
            Box::new(MemoryProfileStore::default()),
            zone.policy_or_default(),
            ledger.clone(),
        );
        service.create_zone().map_err(|e| SimError::Setup(e.to_string()))?;
        masters.insert(zone.id.clone(), service);
    }
    if !masters.is_empty() {
        ledger.produce_block(start_ms, true)?;
        for (id, m) in &masters {
            if !m.owns_zone() {
                return Err(SimError::Setup(format!("zone {id:?} was not created")));
            }
        }
    }

    let mut pending = Vec::new();
    for node in &nodes {
        if let Some(zone) = &node.spec.zone {
            let master = masters.get_mut(zone).expect("validated zone");
            let p = master
                .register_entity(registration(node), start_ms)
                .map_err(|e| SimError::Setup(format!("registering {:?}: {e}", node.spec.name)))?;
            pending.push((zone.clone(), node.spec.name.clone(), p));
        }
    }
    if !pending.is_empty() {
        ledger.produce_block(start_ms, true)?;
        for (zone, name, p) in pending {
            let master = masters.get_mut(&zone).expect("validated zone");
            match master.finish_registration(&p) {
                Ok(Some(_)) => {}
                Ok(None) => return Err(SimError::Setup(format!("registration of {name:?} not confirmed"))),
                Err(e) => return Err(SimError::Setup(format!("registering {name:?}: {e}"))),
            }
        }
    }

    let interval = config.block_interval_ms;
    let mut next_block_ms = ledger.read(|l| l.next_block_due_ms());
    if next_block_ms < start_ms {
        next_block_ms += (start_ms - next_block_ms).div_ceil(interval) * interval;
    }

    let providers = nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| !n.spec.services.is_empty() && !n.spec.no_access_control)
        .map(|(i, n)| (i, ServiceProvider::new(n.vid, n.profile.stage_costs(), interval)))
        .collect();

    Ok(Simulation {
        config,
        ledger,
        nodes,
        by_name,
        masters,
        providers,
        link_rng,
        now: Micros::from_ms(start_ms),
        next_block_ms,
        next_request_id: 0,
        log: Vec::new(),
    })
}

fn registration(node: &NodeRuntime) -> RegistrationRequest {
    RegistrationRequest {
        vid: node.vid,
        display_name: node.spec.name.clone(),
        attributes: node.spec.attributes.clone(),
    }
}

/// Builds the topology and runs the scenario's own script.
pub fn run_config(config: ScenarioConfig, seed: u64) -> Result<(Simulation, RunOutput), SimError> {
    let script = config.events.clone();
    let mut sim = build_topology(config, seed)?;
    let out = run_scenario(&mut sim, &script)?;
    Ok((sim, out))
}

/// Executes `script` from the simulation's current virtual time until the
/// script is exhausted, every request has completed and the transaction
/// pool has drained.
pub fn run_scenario(sim: &mut Simulation, script: &[Event]) -> Result<RunOutput, SimError> {
    let first_request = sim.next_request_id;
    let first_log = sim.log.len();
    let mut run = Run {
        queue: BinaryHeap::new(),
        seq: 0,
        work: 0,
        cursor: 0,
        waiting: None,
        in_flight: BTreeMap::new(),
        done: Vec::new(),
    };
    run.schedule(Micros::from_ms(sim.next_block_ms), Ev::Block);
    run.schedule(sim.now, Ev::Resume);

    loop {
        let finished = run.work == 0 && run.cursor >= script.len() && run.waiting.is_none();
        if finished && sim.ledger.read(|l| l.pool().is_empty()) {
            break;
        }
        let Some(next) = run.queue.pop() else { break };
        if !matches!(next.ev, Ev::Block) {
            run.work -= 1;
        }
        sim.now = next.at;
        match next.ev {
            Ev::Block => {
                sim.produce_block()?;
                if let Some(w) = &run.waiting {
                    if sim.confirmed(w) {
                        let w = run.waiting.take().expect("checked");
                        sim.finish_wait(w)?;
                        run.schedule(sim.now, Ev::Resume);
                    }
                }
                run.schedule(Micros::from_ms(sim.next_block_ms), Ev::Block);
            }
            Ev::Resume => sim.step_script(&mut run, script)?,
            Ev::Send(id) => sim.send(&mut run, id),
            Ev::Arrive(id) => sim.arrive(&mut run, id),
            Ev::Respond(id) => sim.respond(&mut run, id),
            Ev::Timeout(id) => sim.timeout(&mut run, id),
        }
    }

    run.done.sort_by_key(|m| m.request_id);
    debug_assert!(run.done.iter().all(|m| m.request_id >= first_request));
    Ok(RunOutput {
        measurements: run.done,
        log: sim.log[first_log..].to_vec(),
    })
}

#[derive(Debug)]
enum Ev {
    Block,
    Resume,
    Send(u64),
    Arrive(u64),
    Respond(u64),
    Timeout(u64),
}

impl Ev {
    /// Blocks (and the syncs that follow them) go first at any instant.
    fn class(&self) -> u8 {
        match self {
            Ev::Block => 0,
            Ev::Respond(_) | Ev::Timeout(_) => 1,
            Ev::Arrive(_) => 2,
            Ev::Send(_) => 3,
            Ev::Resume => 4,
        }
    }
}

#[derive(Debug)]
struct Scheduled {
    at: Micros,
    class: u8,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    /// Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.class, other.seq).cmp(&(self.at, self.class, self.seq))
    }
}

struct InFlight {
    label: String,
    from: usize,
    to: usize,
    method: Action,
    uri: String,
    sent_at: Micros,
    decided_at_ms: Option<u64>,
    trace: StageTrace,
    cache_hit: bool,
    block_height: u64,
    outcome: Option<Outcome>,
}

enum AfterConfirm {
    Register { zone: String, pending: PendingRegistration },
    Issue { zone: String, pending: PendingIssue },
    Plain { what: String },
}

struct Waiting {
    index: usize,
    kind: &'static str,
    tx: Digest,
    then: AfterConfirm,
}

struct Run {
    queue: BinaryHeap<Scheduled>,
    seq: u64,
    /// Scheduled events other than blocks.
    work: usize,
    cursor: usize,
    waiting: Option<Waiting>,
    in_flight: BTreeMap<u64, InFlight>,
    done: Vec<Measurement>,
}

impl Run {
    fn schedule(&mut self, at: Micros, ev: Ev) {
        if !matches!(ev, Ev::Block) {
            self.work += 1;
        }
        self.seq += 1;
        self.queue.push(Scheduled {
            at,
            class: ev.class(),
            seq: self.seq,
            ev,
        });
    }
}

impl Simulation {
    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn ledger(&self) -> &SharedLedger {
        &self.ledger
    }

    pub fn nodes(&self) -> &[NodeRuntime] {
        &self.nodes
    }

    pub fn vid(&self, name: &str) -> Option<Address> {
        self.by_name.get(name).map(|&i| self.nodes[i].vid)
    }

    pub fn provider(&self, name: &str) -> Option<&ServiceProvider> {
        self.by_name.get(name).and_then(|i| self.providers.get(i))
    }

    pub fn master(&self, zone: &str) -> Option<&MasterService> {
        self.masters.get(zone)
    }

    pub fn now_ms(&self) -> u64 {
        self.now.as_ms()
    }

    fn note(&mut self, what: String) {
        let at_ms = self.now_ms();
        self.log.push(LogEntry { at_ms, what });
    }

    fn produce_block(&mut self) -> Result<(), SimError> {
        let at = self.next_block_ms;
        let block = self.ledger.produce_block(at, false)?;
        self.next_block_ms = at + self.config.block_interval_ms;
        let view = self.ledger.view();
        let mut refreshed = 0;
        for sp in self.providers.values() {
            refreshed += sp.sync_cache(&view, at);
        }
        if !block.txs.is_empty() {
            self.note(format!(
                "block {} confirmed {} tx, {} cache entries refreshed",
                block.height,
                block.txs.len(),
                refreshed
            ));
        }
        Ok(())
    }

    fn confirmed(&self, w: &Waiting) -> bool {
        self.ledger.receipt(&w.tx).is_some()
    }

    fn finish_wait(&mut self, w: Waiting) -> Result<(), SimError> {
        let err = |message: String| SimError::Event {
            index: w.index,
            kind: w.kind,
            message,
        };
        match w.then {
            AfterConfirm::Register { zone, pending } => {
                let master = self.masters.get_mut(&zone).expect("known zone");
                let line = match master.finish_registration(&pending) {
                    Ok(Some(t)) => format!("registered {} into {}", t.vid, t.group_id),
                    Ok(None) => return Err(err("join not confirmed".into())),
                    Err(e @ (MasterError::ForeignMembership { .. } | MasterError::DuplicateRegistration(_))) => {
                        format!("registration refused: {e}")
                    }
                    Err(e) => return Err(err(e.to_string())),
                };
                self.note(line);
            }
            AfterConfirm::Issue { zone, pending } => {
                let line = match self.masters[&zone].finish_issue(&pending) {
                    Ok(Some(cap)) => format!("issued token {} to {}", cap.token_id, pending.subject),
                    Ok(None) => return Err(err("issue not confirmed".into())),
                    Err(MasterError::Rejected(e)) => format!("issue rejected by contract: {e}"),
                    Err(e) => return Err(err(e.to_string())),
                };
                self.note(line);
            }
            AfterConfirm::Plain { what } => {
                let outcome = self.ledger.receipt(&w.tx).expect("confirmed").outcome;
                let result = match outcome {
                    CallOutcome::Returned(v) => format!("{v:?}").to_lowercase(),
                    CallOutcome::Rejected(e) => format!("rejected: {e}"),
                    CallOutcome::NotDeployed => "not deployed".into(),
                };
                self.note(format!("{what} -> {result}"));
            }
        }
        Ok(())
    }

    fn index(&self, name: &str) -> usize {
        self.by_name[name]
    }

    fn zone_of(&self, vid: &Address) -> Option<String> {
        let rec = self.ledger.view().get_vnode(vid);
        rec.is_member().then_some(rec.vzone_id)
    }

    /// Runs script events until one has to wait for time to pass.
    fn step_script(&mut self, run: &mut Run, script: &[Event]) -> Result<(), SimError> {
        while run.cursor < script.len() {
            let index = run.cursor;
            let event = &script[index];
            run.cursor += 1;
            let kind = event.kind();
            let err = |message: String| SimError::Event { index, kind, message };
            let lookup = |name: &str| self.by_name.get(name).copied().ok_or_else(|| err(format!("unknown node {name:?}")));
            let now_ms = self.now_ms();
            match event {
                Event::Advance { ms } => {
                    run.schedule(self.now + Micros::from_ms(*ms), Ev::Resume);
                    return Ok(());
                }
                Event::Request {
                    from,
                    to,
                    method,
                    uri,
                    count,
                    spacing_ms,
                    label,
                    background,
                } => {
                    let (f, t) = (lookup(from)?, lookup(to)?);
                    if !self.nodes[t].spec.services.contains(uri) {
                        return Err(err(format!("{to:?} does not serve {uri:?}")));
                    }
                    if self.config.channel_between(from, to).is_none() {
                        return Err(err(format!("no channel between {from:?} and {to:?}")));
                    }
                    let spacing = Micros::from_ms(*spacing_ms);
                    for k in 0..*count as u64 {
                        let id = self.next_request_id;
                        self.next_request_id += 1;
                        let sent_at = self.now + Micros(spacing.0 * k);
                        run.in_flight.insert(
                            id,
                            InFlight {
                                label: label.clone(),
                                from: f,
                                to: t,
                                method: *method,
                                uri: uri.clone(),
                                sent_at,
                                decided_at_ms: None,
                                trace: StageTrace::default(),
                                cache_hit: false,
                                block_height: 0,
                                outcome: None,
                            },
                        );
                        run.schedule(sent_at, Ev::Send(id));
                    }
                    if *background {
                        continue;
                    }
                    run.schedule(self.now + Micros(spacing.0 * *count as u64), Ev::Resume);
                    return Ok(());
                }
                Event::Register { node, zone } => {
                    let n = lookup(node)?;
                    let req = registration(&self.nodes[n]);
                    let master = self.masters.get_mut(zone).ok_or_else(|| err(format!("unknown zone {zone:?}")))?;
                    match master.register_entity(req, now_ms) {
                        Ok(pending) => {
                            run.waiting = Some(Waiting {
                                index,
                                kind,
                                tx: pending.tx,
                                then: AfterConfirm::Register {
                                    zone: zone.clone(),
                                    pending,
                                },
                            });
                            return Ok(());
                        }
                        Err(e @ (MasterError::DeniedRegistration(_) | MasterError::DuplicateRegistration(_))) => {
                            self.note(format!("registration of {node} refused: {e}"));
                        }
                        Err(e) => return Err(err(e.to_string())),
                    }
                }
                Event::Issue {
                    subject,
                    rules,
                    validity_ms,
                } => {
                    let vid = self.nodes[lookup(subject)?].vid;
                    let Some(zone) = self.zone_of(&vid) else {
                        self.note(format!("issue for {subject} refused: not a zone member"));
                        continue;
                    };
                    let Some(master) = self.masters.get(&zone) else {
                        return Err(err(format!("zone {zone:?} has no master service")));
                    };
                    let decision = if master.policy().rules.is_empty() {
                        grant_as_requested(master, vid, rules, now_ms, validity_ms.unwrap_or(MS_PER_DAY))
                    } else {
                        master.evaluate_access_request(&vid, rules, now_ms)
                    };
                    if let AccessDecision::Deny(reason) = decision {
                        self.note(format!("issue for {subject} denied by master: {reason:?}"));
                        continue;
                    }
                    let pending = master.issue_capability(&decision).map_err(|e| err(e.to_string()))?;
                    run.waiting = Some(Waiting {
                        index,
                        kind,
                        tx: pending.tx,
                        then: AfterConfirm::Issue { zone, pending },
                    });
                    return Ok(());
                }
                Event::Revoke {
                    by,
                    subject,
                    rules,
                    wait,
                } => {
                    let (b, s) = (self.nodes[lookup(by)?].vid, self.nodes[lookup(subject)?].vid);
                    let tx = match self.master_by_vid(&b) {
                        Some(m) if rules.is_empty() => m.revoke_token(s),
                        Some(m) => m.revoke_access_rights(s, rules.clone()),
                        None => {
                            let call = if rules.is_empty() {
                                Call::RevokeToken { subject: s }
                            } else {
                                Call::RevokeAccessRights {
                                    subject: s,
                                    rules: rules.clone(),
                                }
                            };
                            self.ledger.submit_call(b, call).map(|p| p.tx_digest).map_err(MasterError::from)
                        }
                    }
                    .map_err(|e| err(e.to_string()))?;
                    let what = if rules.is_empty() {
                        format!("{by} revokes token of {subject}")
                    } else {
                        format!("{by} revokes {} rule(s) of {subject}", rules.len())
                    };
                    if self.submitted(run, index, kind, tx, what, *wait) {
                        return Ok(());
                    }
                }
                Event::SetValidity { by, subject, valid, wait } => {
                    let (b, s) = (self.nodes[lookup(by)?].vid, self.nodes[lookup(subject)?].vid);
                    let call = Call::SetTokenValidity { subject: s, valid: *valid };
                    let tx = self.ledger.submit_call(b, call).map_err(|e| err(e.to_string()))?.tx_digest;
                    let what = format!("{by} sets validity of {subject} to {valid}");
                    if self.submitted(run, index, kind, tx, what, *wait) {
                        return Ok(());
                    }
                }
                Event::RevokeZone { by, zone, wait } => {
                    let b = self.nodes[lookup(by)?].vid;
                    let call = Call::RevokeVzone { zone_id: zone.clone() };
                    let tx = self.ledger.submit_call(b, call).map_err(|e| err(e.to_string()))?.tx_digest;
                    let what = format!("{by} revokes zone {zone}");
                    if self.submitted(run, index, kind, tx, what, *wait) {
                        return Ok(());
                    }
                }
                Event::Leave { node, wait } => {
                    let vid = self.nodes[lookup(node)?].vid;
                    let zone = self.zone_of(&vid).ok_or_else(|| err(format!("{node:?} is not in a zone")))?;
                    let master = self.masters.get_mut(&zone).ok_or_else(|| err(format!("zone {zone:?} has no master service")))?;
                    let tx = master.remove_entity(vid).map_err(|e| err(e.to_string()))?;
                    let what = format!("{node} leaves {zone}");
                    if self.submitted(run, index, kind, tx, what, *wait) {
                        return Ok(());
                    }
                }
            }
        }
        Ok(())
    }

    /// Returns true if the script must pause until `tx` is confirmed.
    fn submitted(&mut self, run: &mut Run, index: usize, kind: &'static str, tx: Digest, what: String, wait: bool) -> bool {
        if wait {
            run.waiting = Some(Waiting {
                index,
                kind,
                tx,
                then: AfterConfirm::Plain { what },
            });
            true
        } else {
            self.note(format!("{what} (submitted, not awaited)"));
            false
        }
    }

    fn master_by_vid(&self, vid: &Address) -> Option<&MasterService> {
        self.masters.values().find(|m| &m.vid == vid)
    }

    fn channel_for(&self, a: usize, b: usize) -> &crate::channel::ChannelSpec {
        self.config
            .channel_between(&self.nodes[a].spec.name, &self.nodes[b].spec.name)
            .expect("checked when the request was scheduled")
    }

    fn send(&mut self, run: &mut Run, id: u64) {
        let (from, to, sent_at) = {
            let r = &run.in_flight[&id];
            (r.from, r.to, r.sent_at)
        };
        let channel = self.channel_for(from, to).clone();
        match channel.transmit(&mut self.link_rng) {
            Some(d) => {
                run.in_flight.get_mut(&id).expect("in flight").trace.add_transport(d);
                run.schedule(sent_at + d, Ev::Arrive(id));
            }
            None => run.schedule(sent_at + Micros::from_ms(channel.timeout_ms), Ev::Timeout(id)),
        }
    }

    fn arrive(&mut self, run: &mut Run, id: u64) {
        let now_ms = self.now_ms();
        let view = self.ledger.view();
        let r = run.in_flight.get_mut(&id).expect("in flight");
        let requester = &self.nodes[r.from];
        let provider = &self.nodes[r.to];
        let transport = r.trace.transport;
        let (mut trace, outcome, hit) = match self.providers.get(&r.to) {
            Some(sp) => {
                let request = ServiceRequest {
                    requester: requester.vid,
                    method: r.method,
                    uri: r.uri.clone(),
                    context: RequestContext {
                        now_ms,
                        location_tag: requester.spec.location_tag.clone(),
                    },
                };
                let auth = sp.authorize(&view, &request);
                let mut trace = auth.trace;
                let outcome = match auth.decision {
                    Decision::Grant(_) => {
                        trace.add_handling(provider.profile.handling());
                        Outcome::Granted
                    }
                    Decision::Deny(d) => {
                        trace.add_handling(provider.profile.parse());
                        Outcome::Denied {
                            stage: d.stage,
                            reason: d.reason.code(),
                        }
                    }
                };
                (trace, outcome, auth.cache_hit)
            }
            None => {
                let mut trace = StageTrace::default();
                trace.add_handling(provider.profile.handling());
                (trace, Outcome::Granted, false)
            }
        };
        trace.add_transport(transport);
        r.decided_at_ms = Some(now_ms);
        r.cache_hit = hit;
        r.block_height = view.height;
        r.outcome = Some(outcome);
        let (from, to, sent_at) = (r.from, r.to, r.sent_at);
        let processing = trace.total.saturating_sub(transport);
        let channel = self.channel_for(from, to).clone();
        let r = run.in_flight.get_mut(&id).expect("in flight");
        match channel.transmit(&mut self.link_rng) {
            Some(back) => {
                trace.add_transport(back);
                r.trace = trace;
                run.schedule(self.now + processing + back, Ev::Respond(id));
            }
            None => {
                r.trace = trace;
                let deadline = (sent_at + Micros::from_ms(channel.timeout_ms)).max(self.now);
                run.schedule(deadline, Ev::Timeout(id));
            }
        }
    }

    fn respond(&mut self, run: &mut Run, id: u64) {
        let r = run.in_flight.remove(&id).expect("in flight");
        debug_assert_eq!(self.now - r.sent_at, r.trace.total);
        let outcome = r.outcome.clone().expect("decided before responding");
        let total = r.trace.total;
        run.done.push(self.measurement(id, r, total, outcome));
    }

    fn timeout(&mut self, run: &mut Run, id: u64) {
        let r = run.in_flight.remove(&id).expect("in flight");
        let total = self.now - r.sent_at;
        run.done.push(self.measurement(id, r, total, Outcome::TimedOut));
    }

    fn measurement(&self, id: u64, r: InFlight, total: Micros, outcome: Outcome) -> Measurement {
        Measurement {
            request_id: id,
            label: r.label,
            requester: self.nodes[r.from].spec.name.clone(),
            requester_vid: self.nodes[r.from].vid,
            provider: self.nodes[r.to].spec.name.clone(),
            method: r.method,
            uri: r.uri,
            sent_at: r.sent_at,
            decided_at_ms: r.decided_at_ms,
            total,
            trace: r.trace,
            cache_hit: r.cache_hit,
            block_height: r.block_height,
            outcome,
            access_control: self.providers.contains_key(&r.to),
        }
    }

    /// Index of a node by name; panics on unknown names.
    pub fn node_index(&self, name: &str) -> usize {
        self.index(name)
    }
}

/// Zones without explicit policy rules grant exactly what was asked, to
/// registered members, for `validity_ms`.
fn grant_as_requested(
    master: &MasterService,
    subject: Address,
    rules: &[AccessRule],
    now_ms: u64,
    validity_ms: u64,
) -> AccessDecision {
    match master.profile(&subject) {
        Ok(Some(_)) => {}
        _ => return AccessDecision::Deny(AccessDenied::UnknownSubject),
    }
    if rules.is_empty() {
        return AccessDecision::Deny(AccessDenied::NothingGranted);
    }
    AccessDecision::Grant(Grant {
        subject,
        rules: rules.to_vec(),
        issue_date: now_ms,
        expired_date: now_ms.saturating_add(validity_ms),
    })
}
