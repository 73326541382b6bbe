//! Ready-made scenarios: the five-node demo testbed, per-profile
//! benchmarks and randomized revocation scenarios.

use blendcac_core::capability::{AccessRule, Action};
use blendcac_core::enforcement::Stage;
use blendcac_core::Address;
use rand::Rng;

use crate::channel::{ChannelSpec, DelayModel};
use crate::config::{Event, Expectation, ExpectedDecision, NodeSpec, Role, ScenarioConfig, ZoneSpec};
use crate::profile::{Preset, ProfileRef};

pub const DATA_URI: &str = "/api/data";

/// Client address used in the demo testbed.
pub const DEMO_CLIENT_VID: &str = "0xaa09c6d65908e54bf695748812c51d8f2ceea0f5";

/// One row of the demo table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DemoCase {
    pub label: &'static str,
    pub description: &'static str,
    /// Stage whose outcome the case demonstrates; `None` means the final
    /// decision.
    pub check: Option<Stage>,
    pub expect_pass: bool,
}

pub const DEMO_CASES: [DemoCase; 4] = [
    DemoCase {
        label: "same-zone",
        description: "same-zone identity authentication",
        check: Some(Stage::IdentityAuth),
        expect_pass: true,
    },
    DemoCase {
        label: "cross-zone",
        description: "cross-zone identity authentication",
        check: Some(Stage::IdentityAuth),
        expect_pass: false,
    },
    DemoCase {
        label: "granted-get",
        description: "granted GET /api/data",
        check: None,
        expect_pass: true,
    },
    DemoCase {
        label: "ungranted-put",
        description: "ungranted PUT /api/data",
        check: None,
        expect_pass: false,
    },
];

fn get_data() -> AccessRule {
    AccessRule::new(Action::Get, DATA_URI)
}

fn request(from: &str, to: &str, method: Action, label: &str, count: usize) -> Event {
    Event::Request {
        from: from.into(),
        to: to.into(),
        method,
        uri: DATA_URI.into(),
        count,
        spacing_ms: 1_000,
        label: label.into(),
        background: false,
    }
}

fn node(name: &str, role: Role, preset: Preset, zone: Option<&str>, serves: bool) -> NodeSpec {
    let mut n = NodeSpec::new(name, role);
    n.profile = ProfileRef::Preset(preset);
    n.zone = zone.map(str::to_owned);
    if serves {
        n.services = vec![DATA_URI.to_owned()];
    }
    n
}

/// Client and provider satellites plus a master in zone-A; a ground site
/// in zone-B, owned by the supervisor. The client holds a GET-only token.
pub fn demo_testbed() -> ScenarioConfig {
    let mut client = node("client-sat", Role::Satellite, Preset::Satellite, Some("zone-A"), false);
    client.vid = Some(DEMO_CLIENT_VID.parse::<Address>().expect("valid literal"));
    let nodes = vec![
        node("supervisor", Role::Supervisor, Preset::Ground, None, false),
        node("master", Role::Master, Preset::Ground, None, false),
        client,
        node("provider-sat", Role::Satellite, Preset::Satellite, Some("zone-A"), true),
        node("ground-site", Role::Ground, Preset::Ground, Some("zone-B"), true),
    ];
    let zones = vec![
        ZoneSpec {
            id: "zone-A".into(),
            master: "master".into(),
            policy: None,
        },
        ZoneSpec {
            id: "zone-B".into(),
            master: "supervisor".into(),
            policy: None,
        },
    ];
    let channels = vec![
        ChannelSpec::constant("X-band", "client-sat", "provider-sat", 10.0),
        ChannelSpec::constant("K-band", "client-sat", "ground-site", 20.0),
    ];
    let events = vec![
        Event::Issue {
            subject: "client-sat".into(),
            rules: vec![get_data()],
            validity_ms: None,
        },
        request("client-sat", "provider-sat", Action::Get, "same-zone", 1),
        request("client-sat", "ground-site", Action::Get, "cross-zone", 1),
        request("client-sat", "provider-sat", Action::Get, "granted-get", 1),
        request("client-sat", "provider-sat", Action::Put, "ungranted-put", 1),
    ];
    let expect = |label: &str, decision, stage: Option<Stage>, reason: Option<&str>| Expectation {
        label: label.into(),
        index: None,
        decision,
        stage,
        reason: reason.map(str::to_owned),
        cache_hit: None,
    };
    let expectations = vec![
        expect("same-zone", ExpectedDecision::Grant, None, None),
        expect("cross-zone", ExpectedDecision::Deny, Some(Stage::IdentityAuth), Some("zone-mismatch")),
        expect("granted-get", ExpectedDecision::Grant, None, None),
        expect("ungranted-put", ExpectedDecision::Deny, Some(Stage::RuleMatch), Some("no-matching-rule")),
    ];
    ScenarioConfig {
        block_interval_ms: blendcac_core::ledger::DEFAULT_BLOCK_INTERVAL_MS,
        start_ms: 0,
        nodes,
        zones,
        channels,
        events,
        expectations,
    }
}

/// Link used between client and provider for each preset.
pub fn preset_link(preset: Preset) -> (&'static str, f64) {
    match preset {
        Preset::Satellite => ("X-band", 10.0),
        Preset::Ground => ("ethernet", 5.0),
        Preset::SatelliteLink => ("X-band", 12.5),
        Preset::GroundLink => ("ethernet", 8.0),
    }
}

pub const BENCH_LABEL: &str = "blendcac";
pub const BASELINE_LABEL: &str = "baseline";

/// One cold request plus `warm` cached requests against an access-controlled
/// provider, then the same number against an identical provider without
/// access control.
pub fn bench_scenario(preset: Preset, warm: usize) -> ScenarioConfig {
    let role = match preset {
        Preset::Satellite | Preset::SatelliteLink => Role::Satellite,
        Preset::Ground | Preset::GroundLink => Role::Ground,
    };
    let mut baseline = node("provider-noac", role, preset, Some("zone-A"), true);
    baseline.no_access_control = true;
    let nodes = vec![
        node("supervisor", Role::Supervisor, Preset::Ground, None, false),
        node("master", Role::Master, Preset::Ground, None, false),
        node("client", Role::Client, preset, Some("zone-A"), false),
        node("provider", role, preset, Some("zone-A"), true),
        baseline,
    ];
    let (link, delay) = preset_link(preset);
    ScenarioConfig {
        block_interval_ms: blendcac_core::ledger::DEFAULT_BLOCK_INTERVAL_MS,
        start_ms: 0,
        nodes,
        zones: vec![ZoneSpec {
            id: "zone-A".into(),
            master: "master".into(),
            policy: None,
        }],
        channels: vec![
            ChannelSpec::constant(link, "client", "provider", delay),
            ChannelSpec::constant(link, "client", "provider-noac", delay),
        ],
        events: vec![
            Event::Issue {
                subject: "client".into(),
                rules: vec![get_data()],
                validity_ms: None,
            },
            request("client", "provider", Action::Get, BENCH_LABEL, warm + 1),
            request("client", "provider-noac", Action::Get, BASELINE_LABEL, warm + 1),
        ],
        expectations: vec![Expectation {
            label: BENCH_LABEL.into(),
            index: None,
            decision: ExpectedDecision::Grant,
            stage: None,
            reason: None,
            cache_hit: None,
        }],
    }
}

/// A randomized scenario with 1–3 providers and 2 clients exchanging
/// background traffic; partway through, `client-0`'s token is revoked
/// without waiting for confirmation. Nothing is asserted in the file: the
/// caller checks propagation against the chain.
pub fn revocation_scenario<R: Rng>(rng: &mut R) -> ScenarioConfig {
    let providers = rng.random_range(1..=3);
    let mut nodes = vec![
        node("supervisor", Role::Supervisor, Preset::Ground, None, false),
        node("master", Role::Master, Preset::Ground, None, false),
    ];
    let profiles = [Preset::Satellite, Preset::Ground, Preset::SatelliteLink];
    for p in 0..providers {
        let preset = profiles[rng.random_range(0..profiles.len())];
        nodes.push(node(&format!("provider-{p}"), Role::Satellite, preset, Some("zone-A"), true));
    }
    let clients = 2;
    for c in 0..clients {
        nodes.push(node(&format!("client-{c}"), Role::Client, Preset::Satellite, Some("zone-A"), false));
    }
    let mut channels = Vec::new();
    let mut events = Vec::new();
    for c in 0..clients {
        events.push(Event::Issue {
            subject: format!("client-{c}"),
            rules: vec![get_data()],
            validity_ms: None,
        });
    }
    for p in 0..providers {
        for c in 0..clients {
            let lo = rng.random_range(2.0..20.0_f64);
            let hi = lo + rng.random_range(0.0..30.0_f64);
            channels.push(ChannelSpec {
                name: "X-band".into(),
                between: [format!("client-{c}"), format!("provider-{p}")],
                delay: DelayModel::Uniform {
                    min_ms: (lo * 10.0).round() / 10.0,
                    max_ms: (hi * 10.0).round() / 10.0,
                },
                drop_rate: 0.0,
                timeout_ms: 2_000,
            });
            events.push(Event::Request {
                from: format!("client-{c}"),
                to: format!("provider-{p}"),
                method: Action::Get,
                uri: DATA_URI.into(),
                count: 80,
                spacing_ms: rng.random_range(300..=1_200),
                label: format!("c{c}-p{p}"),
                background: true,
            });
        }
    }
    events.push(Event::Advance {
        ms: rng.random_range(1_000..=30_000),
    });
    events.push(Event::Revoke {
        by: if rng.random_bool(0.5) { "master" } else { "supervisor" }.into(),
        subject: "client-0".into(),
        rules: Vec::new(),
        wait: false,
    });
    ScenarioConfig {
        block_interval_ms: blendcac_core::ledger::DEFAULT_BLOCK_INTERVAL_MS,
        start_ms: 0,
        nodes,
        zones: vec![ZoneSpec {
            id: "zone-A".into(),
            master: "master".into(),
            policy: None,
        }],
        channels,
        events,
        expectations: Vec::new(),
    }
}
