//! Capability token contract.
//!
//! Maps each subject VID to exactly one token holding the granted
//! (action, resource, conditions) rules, validity flags and a date window.
//! Issuance and revocation are restricted to the supervisor and zone
//! masters; membership checks read the zone contract hosted on the same
//! chain.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::address::Address;
use crate::time::MS_PER_DAY;
use crate::zone::{NodeType, ZoneContract};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    Get,
    Post,
    Put,
    Delete,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Get, Action::Post, Action::Put, Action::Delete];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Get => "GET",
            Action::Post => "POST",
            Action::Put => "PUT",
            Action::Delete => "DELETE",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown action {s:?}"))
    }
}

/// Day of week. Virtual time zero is Monday 00:00.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Weekday {
    Mon,
    Tue,
    Wed,
    Thu,
    Fri,
    Sat,
    Sun,
}

impl Weekday {
    pub const ALL: [Weekday; 7] = [
        Weekday::Mon,
        Weekday::Tue,
        Weekday::Wed,
        Weekday::Thu,
        Weekday::Fri,
        Weekday::Sat,
        Weekday::Sun,
    ];

    pub fn at(now_ms: u64) -> Weekday {
        Weekday::ALL[((now_ms / MS_PER_DAY) % 7) as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Condition {
    /// Half-open `[start_ms, end_ms)` in milliseconds of the virtual day.
    TimeWindow { start_ms: u64, end_ms: u64 },
    Weekday { days: BTreeSet<Weekday> },
    LocationTag { tag: String },
}

impl Condition {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Condition::TimeWindow { start_ms, end_ms } => {
                if start_ms >= end_ms || *end_ms > MS_PER_DAY {
                    return Err(format!("time window [{start_ms}, {end_ms}) is empty or exceeds a day"));
                }
            }
            Condition::Weekday { days } if days.is_empty() => {
                return Err("weekday condition with no days".into());
            }
            Condition::LocationTag { tag } if tag.is_empty() => {
                return Err("empty location tag".into());
            }
            _ => {}
        }
        Ok(())
    }

    pub fn is_satisfied(&self, now_ms: u64, location_tag: &str) -> bool {
        match self {
            Condition::TimeWindow { start_ms, end_ms } => {
                let tod = now_ms % MS_PER_DAY;
                *start_ms <= tod && tod < *end_ms
            }
            Condition::Weekday { days } => days.contains(&Weekday::at(now_ms)),
            Condition::LocationTag { tag } => tag == location_tag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AccessRule {
    pub action: Action,
    pub resource: String,
    #[serde(default)]
    pub conditions: Vec<Condition>,
}

impl AccessRule {
    pub fn new(action: Action, resource: impl Into<String>) -> Self {
        AccessRule {
            action,
            resource: resource.into(),
            conditions: Vec::new(),
        }
    }

    pub fn with_conditions(mut self, conditions: Vec<Condition>) -> Self {
        self.conditions = conditions;
        self
    }

    /// Identity used by partial revocation and grant intersection.
    pub fn key(&self) -> (Action, &str) {
        (self.action, self.resource.as_str())
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.resource.starts_with('/') {
            return Err(format!("resource {:?} must start with '/'", self.resource));
        }
        self.conditions.iter().try_for_each(Condition::validate)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilityToken {
    pub vid: Address,
    #[serde(rename = "VZone_master")]
    pub vzone_master: Address,
    pub id: u64,
    pub initialized: bool,
    #[serde(rename = "isValid")]
    pub is_valid: bool,
    #[serde(rename = "issuedate")]
    pub issue_date: u64,
    #[serde(rename = "expireddate")]
    pub expired_date: u64,
    pub authorization: Vec<AccessRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "error", content = "detail", rename_all = "snake_case")]
pub enum CapError {
    #[error("sender is neither the supervisor nor an authorized master")]
    Unauthorized,
    #[error("subject is not a member of the issuer's zone")]
    SubjectNotInZone,
    #[error("invalid access rule: {0}")]
    InvalidRule(String),
    #[error("issue date {issue} is after expiry {expiry}")]
    InvalidDates { issue: u64, expiry: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapContract {
    pub supervisor: Address,
    last_id: u64,
    tokens: BTreeMap<Address, CapabilityToken>,
    /// Height of the block that last touched each subject's token.
    modified_at: BTreeMap<Address, u64>,
}

impl CapContract {
    pub fn new(supervisor: Address) -> Self {
        CapContract {
            supervisor,
            ..Default::default()
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn issue_token(
        &mut self,
        zones: &ZoneContract,
        height: u64,
        sender: Address,
        subject: Address,
        rules: Vec<AccessRule>,
        issue_date: u64,
        expired_date: u64,
    ) -> Result<u64, CapError> {
        let sender_rec = zones.get_vnode(&sender);
        let sender_is_master = sender_rec.node_type == NodeType::Master
            && zones.get_vzone(&sender_rec.vzone_id).master == sender;
        if sender != self.supervisor && !sender_is_master {
            return Err(CapError::Unauthorized);
        }
        let subject_rec = zones.get_vnode(&subject);
        if !subject_rec.is_member() {
            return Err(CapError::SubjectNotInZone);
        }
        let issuer = if sender_is_master {
            if subject_rec.vzone_id != sender_rec.vzone_id {
                return Err(CapError::SubjectNotInZone);
            }
            sender
        } else {
            let zone_master = zones.get_vzone(&subject_rec.vzone_id).master;
            if zone_master.is_zero() {
                sender
            } else {
                zone_master
            }
        };
        if issue_date > expired_date {
            return Err(CapError::InvalidDates {
                issue: issue_date,
                expiry: expired_date,
            });
        }
        rules
            .iter()
            .try_for_each(AccessRule::validate)
            .map_err(CapError::InvalidRule)?;

        self.last_id += 1;
        let id = self.last_id;
        self.tokens.insert(
            subject,
            CapabilityToken {
                vid: subject,
                vzone_master: issuer,
                id,
                initialized: true,
                is_valid: true,
                issue_date,
                expired_date,
                authorization: rules,
            },
        );
        self.modified_at.insert(subject, height);
        Ok(id)
    }

    fn authorize_change(&self, sender: Address, subject: &Address) -> Result<bool, CapError> {
        match self.tokens.get(subject) {
            None => Ok(false),
            Some(t) if sender == self.supervisor || sender == t.vzone_master => Ok(true),
            Some(_) => Err(CapError::Unauthorized),
        }
    }

    /// Removes every rule whose (action, resource) matches one of `rules`.
    pub fn revoke_access_rights(
        &mut self,
        height: u64,
        sender: Address,
        subject: Address,
        rules: &[AccessRule],
    ) -> Result<bool, CapError> {
        if !self.authorize_change(sender, &subject)? {
            return Ok(false);
        }
        let token = self.tokens.get_mut(&subject).expect("checked above");
        let before = token.authorization.len();
        token
            .authorization
            .retain(|r| !rules.iter().any(|x| x.key() == r.key()));
        let removed = token.authorization.len() < before;
        if removed {
            self.modified_at.insert(subject, height);
        }
        Ok(removed)
    }

    pub fn revoke_token(&mut self, height: u64, sender: Address, subject: Address) -> Result<bool, CapError> {
        if !self.authorize_change(sender, &subject)? {
            return Ok(false);
        }
        let token = self.tokens.get_mut(&subject).expect("checked above");
        token.authorization.clear();
        token.is_valid = false;
        self.modified_at.insert(subject, height);
        Ok(true)
    }

    pub fn set_token_validity(
        &mut self,
        height: u64,
        sender: Address,
        subject: Address,
        valid: bool,
    ) -> Result<bool, CapError> {
        if !self.authorize_change(sender, &subject)? {
            return Ok(false);
        }
        let token = self.tokens.get_mut(&subject).expect("checked above");
        if token.is_valid != valid {
            token.is_valid = valid;
            self.modified_at.insert(subject, height);
        }
        Ok(true)
    }

    pub fn get_token(&self, subject: &Address) -> Option<&CapabilityToken> {
        self.tokens.get(subject)
    }

    pub fn modified_at(&self, subject: &Address) -> Option<u64> {
        self.modified_at.get(subject).copied()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &CapabilityToken> {
        self.tokens.values()
    }

    pub fn last_id(&self) -> u64 {
        self.last_id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::to_canonical_string;

    fn addr(n: u64) -> Address {
        Address::from_low_u64(n)
    }

    const SUP: u64 = 1;
    const MASTER: u64 = 2;
    const OTHER_MASTER: u64 = 3;

    /// Zone A mastered by 2 with followers 10, 11; zone B mastered by 3 with follower 20.
    fn zones() -> ZoneContract {
        let mut z = ZoneContract::new(addr(SUP));
        z.set_master_allowlist(addr(SUP), addr(MASTER), true);
        z.set_master_allowlist(addr(SUP), addr(OTHER_MASTER), true);
        z.create_vzone(addr(MASTER), "zone-A");
        z.create_vzone(addr(OTHER_MASTER), "zone-B");
        z.join_vzone(addr(MASTER), "zone-A", addr(10));
        z.join_vzone(addr(MASTER), "zone-A", addr(11));
        z.join_vzone(addr(OTHER_MASTER), "zone-B", addr(20));
        z
    }

    fn get_data() -> AccessRule {
        AccessRule::new(Action::Get, "/api/data")
    }

    #[test]
    fn master_issues_first_token() {
        let z = zones();
        let mut c = CapContract::new(addr(SUP));
        let id = c
            .issue_token(&z, 1, addr(MASTER), addr(10), vec![get_data()], 0, 1000)
            .unwrap();
        assert_eq!(id, 1);
        let t = c.get_token(&addr(10)).unwrap();
        assert!(t.initialized && t.is_valid);
        assert_eq!(t.vzone_master, addr(MASTER));
    }

    #[test]
    fn follower_cannot_issue() {
        let z = zones();
        let mut c = CapContract::new(addr(SUP));
        let err = c
            .issue_token(&z, 1, addr(11), addr(10), vec![get_data()], 0, 1000)
            .unwrap_err();
        assert_eq!(err, CapError::Unauthorized);
    }

    #[test]
    fn cross_zone_subject_rejected() {
        let z = zones();
        let mut c = CapContract::new(addr(SUP));
        let err = c
            .issue_token(&z, 1, addr(MASTER), addr(20), vec![get_data()], 0, 1000)
            .unwrap_err();
        assert_eq!(err, CapError::SubjectNotInZone);
        let err = c
            .issue_token(&z, 1, addr(MASTER), addr(99), vec![get_data()], 0, 1000)
            .unwrap_err();
        assert_eq!(err, CapError::SubjectNotInZone);
    }

    #[test]
    fn ids_are_monotone_and_fresh_on_reissue() {
        let z = zones();
        let mut c = CapContract::new(addr(SUP));
        assert_eq!(c.issue_token(&z, 1, addr(MASTER), addr(10), vec![], 0, 10), Ok(1));
        assert_eq!(c.issue_token(&z, 1, addr(MASTER), addr(11), vec![], 0, 10), Ok(2));
        assert_eq!(c.issue_token(&z, 2, addr(MASTER), addr(10), vec![get_data()], 5, 10), Ok(3));
        let t = c.get_token(&addr(10)).unwrap();
        assert_eq!((t.id, t.issue_date, t.authorization.len()), (3, 5, 1));
    }

    #[test]
    fn input_validation() {
        let z = zones();
        let mut c = CapContract::new(addr(SUP));
        let bad = AccessRule::new(Action::Get, "api/data");
        assert!(matches!(
            c.issue_token(&z, 1, addr(MASTER), addr(10), vec![bad], 0, 10),
            Err(CapError::InvalidRule(_))
        ));
        assert_eq!(
            c.issue_token(&z, 1, addr(MASTER), addr(10), vec![], 11, 10),
            Err(CapError::InvalidDates { issue: 11, expiry: 10 })
        );
        let window = get_data().with_conditions(vec![Condition::TimeWindow { start_ms: 5, end_ms: 5 }]);
        assert!(c.issue_token(&z, 1, addr(MASTER), addr(10), vec![window], 0, 10).is_err());
        assert_eq!(c.last_id(), 0);
    }

    #[test]
    fn partial_revocation_is_set_difference() {
        let z = zones();
        let mut c = CapContract::new(addr(SUP));
        let post = AccessRule::new(Action::Post, "/api/data");
        c.issue_token(&z, 1, addr(MASTER), addr(10), vec![get_data(), post.clone()], 0, 100)
            .unwrap();
        let before = c.get_token(&addr(10)).unwrap().clone();
        // conditions are not part of the match key
        let probe = get_data().with_conditions(vec![Condition::LocationTag { tag: "x".into() }]);
        assert_eq!(c.revoke_access_rights(2, addr(MASTER), addr(10), &[probe]), Ok(true));
        let after = c.get_token(&addr(10)).unwrap().clone();
        assert_eq!(after.authorization, vec![post]);
        // everything else untouched
        let mut expected = before;
        expected.authorization = after.authorization.clone();
        assert_eq!(after, expected);
        assert_eq!(c.revoke_access_rights(3, addr(MASTER), addr(10), &[get_data()]), Ok(false));
        assert_eq!(
            c.revoke_access_rights(3, addr(11), addr(10), &[get_data()]),
            Err(CapError::Unauthorized)
        );
    }

    #[test]
    fn full_revocation() {
        let z = zones();
        let mut c = CapContract::new(addr(SUP));
        assert_eq!(c.revoke_token(1, addr(MASTER), addr(10)), Ok(false), "absent token");
        c.issue_token(&z, 1, addr(MASTER), addr(10), vec![get_data()], 0, 100).unwrap();
        assert_eq!(c.revoke_token(2, addr(OTHER_MASTER), addr(10)), Err(CapError::Unauthorized));
        assert_eq!(c.revoke_token(2, addr(SUP), addr(10)), Ok(true));
        let t = c.get_token(&addr(10)).unwrap();
        assert!(t.authorization.is_empty() && !t.is_valid && t.initialized);
        assert_eq!(c.modified_at(&addr(10)), Some(2));
    }

    #[test]
    fn validity_toggle() {
        let z = zones();
        let mut c = CapContract::new(addr(SUP));
        assert_eq!(c.set_token_validity(1, addr(MASTER), addr(10), false), Ok(false));
        c.issue_token(&z, 1, addr(MASTER), addr(10), vec![get_data()], 0, 100).unwrap();
        assert_eq!(c.set_token_validity(2, addr(OTHER_MASTER), addr(10), false), Err(CapError::Unauthorized));
        assert_eq!(c.set_token_validity(2, addr(MASTER), addr(10), false), Ok(true));
        assert!(!c.get_token(&addr(10)).unwrap().is_valid);
        assert_eq!(c.set_token_validity(3, addr(MASTER), addr(10), true), Ok(true));
        assert!(c.get_token(&addr(10)).unwrap().is_valid);
        assert_eq!(c.get_token(&addr(10)).unwrap().authorization.len(), 1);
    }

    #[test]
    fn supervisor_issue_records_zone_master() {
        let z = zones();
        let mut c = CapContract::new(addr(SUP));
        c.issue_token(&z, 1, addr(SUP), addr(20), vec![], 0, 1).unwrap();
        assert_eq!(c.get_token(&addr(20)).unwrap().vzone_master, addr(OTHER_MASTER));
        // and the zone master may then revoke it
        assert_eq!(c.revoke_token(2, addr(OTHER_MASTER), addr(20)), Ok(true));
    }

    #[test]
    fn token_field_names() {
        let z = zones();
        let mut c = CapContract::new(addr(SUP));
        let rule = get_data().with_conditions(vec![Condition::Weekday {
            days: [Weekday::Mon].into_iter().collect(),
        }]);
        c.issue_token(&z, 1, addr(MASTER), addr(10), vec![rule], 0, 100).unwrap();
        let text = to_canonical_string(c.get_token(&addr(10)).unwrap()).unwrap();
        assert_eq!(
            text,
            concat!(
                r#"{"VZone_master":"0x0000000000000000000000000000000000000002","#,
                r#""authorization":[{"action":"GET","conditions":[{"days":["Mon"],"kind":"weekday"}],"resource":"/api/data"}],"#,
                r#""expireddate":100,"id":1,"initialized":true,"isValid":true,"issuedate":0,"#,
                r#""vid":"0x000000000000000000000000000000000000000a"}"#
            )
        );
    }

    #[test]
    fn conditions() {
        let nine_to_five = Condition::TimeWindow {
            start_ms: 9 * 3_600_000,
            end_ms: 17 * 3_600_000,
        };
        assert!(nine_to_five.is_satisfied(12 * 3_600_000, ""));
        assert!(!nine_to_five.is_satisfied(18 * 3_600_000, ""));
        assert!(!nine_to_five.is_satisfied(17 * 3_600_000, ""), "half-open");
        assert!(nine_to_five.is_satisfied(MS_PER_DAY + 9 * 3_600_000, ""));
        assert_eq!(Weekday::at(0), Weekday::Mon);
        assert_eq!(Weekday::at(6 * MS_PER_DAY + 1), Weekday::Sun);
        assert_eq!(Weekday::at(7 * MS_PER_DAY), Weekday::Mon);
        let tag = Condition::LocationTag { tag: "ground-station-1".into() };
        assert!(tag.is_satisfied(0, "ground-station-1"));
        assert!(!tag.is_satisfied(0, "ground-station-2"));
    }
}
