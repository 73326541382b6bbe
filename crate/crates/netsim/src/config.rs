//! Scenario files: topology (nodes, zones, channels), a script of timed
//! events, and expectations checked against the measurements.
//!
//! ```toml
//! block_interval_ms = 15000
//!
//! [[nodes]]
//! name = "supervisor"
//! role = "supervisor"
//!
//! [[nodes]]
//! name = "provider-sat"
//! role = "satellite"
//! zone = "zone-A"
//! profile = "satellite"
//! services = ["/api/data"]
//!
//! [[zones]]
//! id = "zone-A"
//! master = "master"
//!
//! [[channels]]
//! name = "X-band"
//! between = ["client-sat", "provider-sat"]
//! delay = { kind = "constant", ms = 10 }
//!
//! [[events]]
//! kind = "request"
//! from = "client-sat"
//! to = "provider-sat"
//! method = "GET"
//! uri = "/api/data"
//! count = 100
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use blendcac_core::capability::{AccessRule, Action};
use blendcac_core::enforcement::Stage;
use blendcac_core::master::{PolicySet, RegistrationPolicy};
use blendcac_core::{Address, Micros};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSpec;
use crate::profile::ProfileRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Satellite,
    Ground,
    Client,
    Master,
    Supervisor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    /// Derived from the scenario seed when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vid: Option<Address>,
    pub role: Role,
    #[serde(default)]
    pub profile: ProfileRef,
    /// Resource URIs this node serves; a node with services is a provider.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub services: Vec<String>,
    /// Zone the node is registered into during setup.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zone: Option<String>,
    /// Location tag the node reports in its request context.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub location_tag: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
    /// Serve requests without any access-control pipeline (benchmark baseline).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_access_control: bool,
}

impl NodeSpec {
    pub fn new(name: &str, role: Role) -> Self {
        NodeSpec {
            name: name.into(),
            vid: None,
            role,
            profile: ProfileRef::default(),
            services: Vec::new(),
            zone: None,
            location_tag: String::new(),
            attributes: BTreeMap::new(),
            no_access_control: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneSpec {
    pub id: String,
    /// Node name of the zone's master; may be the supervisor.
    pub master: String,
    /// Registration chain and access rules used by the master. Defaults to
    /// admitting everyone and granting whatever is requested for one day.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicySet>,
}

impl ZoneSpec {
    pub fn policy_or_default(&self) -> PolicySet {
        self.policy.clone().unwrap_or_else(|| PolicySet {
            registration: vec![RegistrationPolicy::AllowAll],
            rules: Vec::new(),
        })
    }
}

fn one() -> usize {
    1
}

fn default_spacing() -> u64 {
    1_000
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    /// Master of `zone` registers `node` and waits for confirmation.
    Register { node: String, zone: String },
    /// Subject asks its zone master for `rules`; the master evaluates its
    /// policy and issues a token, waiting for confirmation. `validity_ms`
    /// applies when the zone has no explicit policy rules.
    Issue {
        subject: String,
        rules: Vec<AccessRule>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        validity_ms: Option<u64>,
    },
    /// `count` requests spaced `spacing_ms` apart; the script continues
    /// after the last one is sent plus one spacing, or immediately when
    /// `background` is set.
    Request {
        from: String,
        to: String,
        method: Action,
        uri: String,
        #[serde(default = "one")]
        count: usize,
        #[serde(default = "default_spacing")]
        spacing_ms: u64,
        #[serde(default, skip_serializing_if = "String::is_empty")]
        label: String,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        background: bool,
    },
    /// Full revocation, or partial when `rules` is non-empty. `by` is the
    /// subject's zone master or the supervisor.
    Revoke {
        by: String,
        subject: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        rules: Vec<AccessRule>,
        #[serde(default = "yes")]
        wait: bool,
    },
    SetValidity {
        by: String,
        subject: String,
        valid: bool,
        #[serde(default = "yes")]
        wait: bool,
    },
    RevokeZone {
        by: String,
        zone: String,
        #[serde(default = "yes")]
        wait: bool,
    },
    /// Master of the node's zone removes it.
    Leave {
        node: String,
        #[serde(default = "yes")]
        wait: bool,
    },
    Advance { ms: u64 },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Register { .. } => "register",
            Event::Issue { .. } => "issue",
            Event::Request { .. } => "request",
            Event::Revoke { .. } => "revoke",
            Event::SetValidity { .. } => "set_validity",
            Event::RevokeZone { .. } => "revoke_zone",
            Event::Leave { .. } => "leave",
            Event::Advance { .. } => "advance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedDecision {
    Grant,
    Deny,
    Timeout,
}

/// Checked against every measurement whose label matches (or only the
/// `index`-th one, zero-based within that label).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub decision: ExpectedDecision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_hit: Option<bool>,
}

fn default_interval() -> u64 {
    blendcac_core::ledger::DEFAULT_BLOCK_INTERVAL_MS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_interval")]
    pub block_interval_ms: u64,
    /// Virtual time of the first scripted event (0 is Monday 00:00).
    #[serde(default)]
    pub start_ms: u64,
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub zones: Vec<ZoneSpec>,
    #[serde(default)]
    pub channels: Vec<ChannelSpec>,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default, rename = "expect")]
    pub expectations: Vec<Expectation>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn node(&self, name: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn channel_between(&self, a: &str, b: &str) -> Option<&ChannelSpec> {
        self.channels.iter().find(|c| c.connects(a, b))
    }

    pub fn block_interval(&self) -> Micros {
        Micros::from_ms(self.block_interval_ms)
    }

    /// Static checks; everything that can be rejected before running.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.block_interval_ms == 0 {
            return Err(invalid("block_interval_ms", "must be at least 1"));
        }
        let mut names = BTreeSet::new();
        let mut vids = BTreeSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let field = |f: &str| format!("nodes[{i}].{f}");
            if n.name.is_empty() {
                return Err(invalid(field("name"), "must not be empty"));
            }
            if !names.insert(n.name.as_str()) {
                return Err(invalid(field("name"), format!("duplicate node name {:?}", n.name)));
            }
            if let Some(v) = n.vid {
                if v.is_zero() {
                    return Err(invalid(field("vid"), "zero address is reserved"));
                }
                if !vids.insert(v) {
                    return Err(invalid(field("vid"), format!("duplicate vid {v}")));
                }
            }
            n.profile.resolve().validate().map_err(|m| invalid(field("profile"), m))?;
            for (j, s) in n.services.iter().enumerate() {
                if !s.starts_with('/') {
                    return Err(invalid(format!("nodes[{i}].services[{j}]"), "resource URIs start with '/'"));
                }
            }
            if let Some(z) = &n.zone {
                if !self.zones.iter().any(|zs| &zs.id == z) {
                    return Err(invalid(field("zone"), format!("unknown zone {z:?}")));
                }
                if matches!(n.role, Role::Master | Role::Supervisor) {
                    return Err(invalid(field("zone"), "masters join their zone by creating it"));
                }
            }
        }
        let supervisors = self.nodes.iter().filter(|n| n.role == Role::Supervisor).count();
        if supervisors != 1 {
            return Err(invalid("nodes", format!("exactly one supervisor required, found {supervisors}")));
        }
        let mut zone_ids = BTreeSet::new();
        let mut masters = BTreeSet::new();
        for (i, z) in self.zones.iter().enumerate() {
            let field = |f: &str| format!("zones[{i}].{f}");
            if z.id.is_empty() {
                return Err(invalid(field("id"), "must not be empty"));
            }
            if !zone_ids.insert(z.id.as_str()) {
                return Err(invalid(field("id"), format!("duplicate zone {:?}", z.id)));
            }
            match self.node(&z.master) {
                None => return Err(invalid(field("master"), format!("unknown node {:?}", z.master))),
                Some(n) if !matches!(n.role, Role::Master | Role::Supervisor) => {
                    return Err(invalid(field("master"), format!("{:?} is not a master", z.master)))
                }
                _ => {}
            }
            if !masters.insert(z.master.as_str()) {
                return Err(invalid(field("master"), format!("{:?} already owns a zone", z.master)));
            }
            if let Some(p) = &z.policy {
                p.validate().map_err(|e| invalid(field("policy"), e.to_string()))?;
            }
        }
        for (i, c) in self.channels.iter().enumerate() {
            for end in &c.between {
                if self.node(end).is_none() {
                    return Err(invalid(format!("channels[{i}].between"), format!("unknown node {end:?}")));
                }
            }
            c.validate().map_err(|m| invalid(format!("channels[{i}]"), m))?;
        }
        for (i, e) in self.events.iter().enumerate() {
            self.validate_event(e).map_err(|m| invalid(format!("events[{i}] ({})", e.kind()), m))?;
        }
        for (i, x) in self.expectations.iter().enumerate() {
            let known = self
                .events
                .iter()
                .any(|e| matches!(e, Event::Request { label, .. } if label == &x.label));
            if !known {
                return Err(invalid(format!("expect[{i}].label"), format!("no request labelled {:?}", x.label)));
            }
        }
        Ok(())
    }

    fn known(&self, name: &str) -> Result<&NodeSpec, String> {
        self.node(name).ok_or_else(|| format!("unknown node {name:?}"))
    }

    fn validate_event(&self, e: &Event) -> Result<(), String> {
        let rules_ok = |rules: &[AccessRule]| rules.iter().try_for_each(AccessRule::validate);
        match e {
            Event::Register { node, zone } => {
                self.known(node)?;
                if !self.zones.iter().any(|z| &z.id == zone) {
                    return Err(format!("unknown zone {zone:?}"));
                }
            }
            Event::Issue { subject, rules, validity_ms } => {
                self.known(subject)?;
                rules_ok(rules)?;
                if *validity_ms == Some(0) {
                    return Err("validity_ms must be positive".into());
                }
            }
            Event::Request { from, to, uri, count, .. } => {
                self.known(from)?;
                let provider = self.known(to)?;
                if !provider.services.iter().any(|s| s == uri) {
                    return Err(format!("{to:?} does not serve {uri:?}"));
                }
                if self.channel_between(from, to).is_none() {
                    return Err(format!("no channel between {from:?} and {to:?}"));
                }
                if *count == 0 {
                    return Err("count must be positive".into());
                }
            }
            Event::Revoke { by, subject, rules, .. } => {
                self.known(by)?;
                self.known(subject)?;
                rules_ok(rules)?;
            }
            Event::SetValidity { by, subject, .. } => {
                self.known(by)?;
                self.known(subject)?;
            }
            Event::RevokeZone { by, zone, .. } => {
                self.known(by)?;
                if !self.zones.iter().any(|z| &z.id == zone) {
                    return Err(format!("unknown zone {zone:?}"));
                }
            }
            Event::Leave { node, .. } => {
                self.known(node)?;
            }
            Event::Advance { .. } => {}
        }
        Ok(())
    }
}
