//! Registration and access policies evaluated by a domain master.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::profile::EntityProfile;
use crate::address::Address;
use crate::capability::AccessRule;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredicateTest {
    Equals(String),
    OneOf(Vec<String>),
    Exists(bool),
}

/// A test over one profile attribute, e.g. `{ attribute = "department", equals = "imaging" }`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub attribute: String,
    #[serde(flatten)]
    pub test: PredicateTest,
}

impl Predicate {
    pub fn equals(attribute: &str, value: &str) -> Self {
        Predicate {
            attribute: attribute.into(),
            test: PredicateTest::Equals(value.into()),
        }
    }

    pub fn holds(&self, profile: &EntityProfile) -> bool {
        let value = profile.attribute(&self.attribute);
        match &self.test {
            PredicateTest::Equals(v) => value.as_deref() == Some(v.as_str()),
            PredicateTest::OneOf(vs) => value.is_some_and(|x| vs.contains(&x)),
            PredicateTest::Exists(want) => value.is_some() == *want,
        }
    }
}

/// One link of the registration chain; a candidate must pass every link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegistrationPolicy {
    AllowAll,
    Allowlist { vids: BTreeSet<Address> },
    Denylist { vids: BTreeSet<Address> },
    Attributes { all: Vec<Predicate> },
}

impl RegistrationPolicy {
    pub fn admits(&self, candidate: &EntityProfile) -> bool {
        match self {
            RegistrationPolicy::AllowAll => true,
            RegistrationPolicy::Allowlist { vids } => vids.contains(&candidate.vid),
            RegistrationPolicy::Denylist { vids } => !vids.contains(&candidate.vid),
            RegistrationPolicy::Attributes { all } => all.iter().all(|p| p.holds(candidate)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRule {
    /// Conjunction of predicates; empty matches every profile.
    #[serde(rename = "match", default)]
    pub matcher: Vec<Predicate>,
    pub grant: Vec<AccessRule>,
    pub validity_ms: u64,
}

impl PolicyRule {
    pub fn matches(&self, profile: &EntityProfile) -> bool {
        self.matcher.iter().all(|p| p.holds(profile))
    }
}

/// Master policy file: the registration chain plus access rules, kept in
/// file order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySet {
    #[serde(default)]
    pub registration: Vec<RegistrationPolicy>,
    #[serde(default)]
    pub rules: Vec<PolicyRule>,
}

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("policy file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("policy rule {index}: {reason}")]
    Invalid { index: usize, reason: String },
}

impl PolicySet {
    pub fn from_toml(text: &str) -> Result<Self, PolicyError> {
        let set: PolicySet = toml::from_str(text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        for (index, rule) in self.rules.iter().enumerate() {
            let invalid = |reason: String| PolicyError::Invalid { index, reason };
            if rule.grant.is_empty() {
                return Err(invalid("grant list is empty".into()));
            }
            if rule.validity_ms == 0 {
                return Err(invalid("validity_ms must be positive".into()));
            }
            rule.grant.iter().try_for_each(AccessRule::validate).map_err(invalid)?;
        }
        Ok(())
    }

    pub fn admits(&self, candidate: &EntityProfile) -> bool {
        self.registration.iter().all(|p| p.admits(candidate))
    }

    /// Union of grants from every matching rule (file order, duplicates
    /// dropped) restricted to the requested (action, resource) pairs, with
    /// the shortest validity among the rules that contributed.
    pub fn evaluate(&self, profile: &EntityProfile, requested: &[AccessRule]) -> Option<(Vec<AccessRule>, u64)> {
        let wanted: BTreeSet<_> = requested.iter().map(AccessRule::key).collect();
        let mut granted: Vec<AccessRule> = Vec::new();
        let mut validity: Option<u64> = None;
        for rule in self.rules.iter().filter(|r| r.matches(profile)) {
            let mut contributed = false;
            for g in rule.grant.iter().filter(|g| wanted.contains(&g.key())) {
                contributed = true;
                if !granted.contains(g) {
                    granted.push(g.clone());
                }
            }
            if contributed {
                validity = Some(validity.map_or(rule.validity_ms, |v| v.min(rule.validity_ms)));
            }
        }
        validity.map(|v| (granted, v))
    }
}
