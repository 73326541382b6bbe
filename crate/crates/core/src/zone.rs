//! Virtual trust zone contract.
//!
//! A zone is a contract-recorded group owned by one master. Nodes join a
//! zone as followers through the master (or the supervisor), and only
//! members of the same live zone authenticate each other. Every mutator
//! returns `false` instead of aborting, mirroring the contract ABI.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::address::Address;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum NodeType {
    #[default]
    None,
    Master,
    Follower,
}

impl NodeType {
    pub fn code(self) -> u8 {
        match self {
            NodeType::None => 0,
            NodeType::Master => 1,
            NodeType::Follower => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(NodeType::None),
            1 => Some(NodeType::Master),
            2 => Some(NodeType::Follower),
            _ => None,
        }
    }
}

impl Serialize for NodeType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for NodeType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let code = u8::deserialize(deserializer)?;
        NodeType::from_code(code)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid node_type {code}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VirtualZone {
    #[serde(rename = "VZoneID")]
    pub zone_id: String,
    pub master: Address,
    pub uid: u64,
}

impl VirtualZone {
    fn unowned(zone_id: &str) -> Self {
        VirtualZone {
            zone_id: zone_id.to_owned(),
            master: Address::ZERO,
            uid: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VNodeRecord {
    pub vid: Address,
    #[serde(rename = "VZoneID")]
    pub vzone_id: String,
    pub node_type: NodeType,
}

impl VNodeRecord {
    pub fn empty(vid: Address) -> Self {
        VNodeRecord {
            vid,
            vzone_id: String::new(),
            node_type: NodeType::None,
        }
    }

    pub fn is_member(&self) -> bool {
        self.node_type != NodeType::None
    }
}

/// Zone registry plus the supervisor-maintained master allowlist.
///
/// Cleared node records are removed rather than stored as defaults, so the
/// serialized state is identical however a record came to be empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneContract {
    pub supervisor: Address,
    pub allowlist: BTreeSet<Address>,
    #[serde(rename = "VZone")]
    zones: BTreeMap<String, VirtualZone>,
    #[serde(rename = "Vnode")]
    nodes: BTreeMap<Address, VNodeRecord>,
}

impl ZoneContract {
    pub fn new(supervisor: Address) -> Self {
        ZoneContract {
            supervisor,
            ..Default::default()
        }
    }

    pub fn is_valid_master(&self, addr: &Address) -> bool {
        self.allowlist.contains(addr)
    }

    pub fn set_master_allowlist(&mut self, sender: Address, addr: Address, allowed: bool) -> bool {
        if sender != self.supervisor || addr.is_zero() {
            return false;
        }
        if allowed {
            self.allowlist.insert(addr);
        } else {
            self.allowlist.remove(&addr);
        }
        true
    }

    pub fn create_vzone(&mut self, sender: Address, zone_id: &str) -> bool {
        if zone_id.is_empty() {
            return false;
        }
        if sender != self.supervisor && !self.is_valid_master(&sender) {
            return false;
        }
        if !self.get_vzone(zone_id).master.is_zero() {
            return false;
        }
        // A node holds a single record, so a creator already bound to a zone
        // would end up owning a zone its record does not point to.
        if self.get_vnode(&sender).is_member() {
            return false;
        }
        let zone = self
            .zones
            .entry(zone_id.to_owned())
            .or_insert_with(|| VirtualZone::unowned(zone_id));
        zone.uid += 1;
        zone.master = sender;
        self.nodes.insert(
            sender,
            VNodeRecord {
                vid: sender,
                vzone_id: zone_id.to_owned(),
                node_type: NodeType::Master,
            },
        );
        true
    }

    pub fn revoke_vzone(&mut self, sender: Address, zone_id: &str) -> bool {
        let Some(zone) = self.zones.get_mut(zone_id) else {
            return false;
        };
        if zone.master.is_zero() {
            return false;
        }
        let owner_revoking = self.allowlist.contains(&sender) && zone.master == sender;
        if sender != self.supervisor && !owner_revoking {
            return false;
        }
        let former = zone.master;
        zone.uid += 1;
        zone.master = Address::ZERO;
        if self
            .nodes
            .get(&former)
            .is_some_and(|r| r.vzone_id == zone_id)
        {
            self.nodes.remove(&former);
        }
        true
    }

    fn may_manage(&self, sender: Address, zone_id: &str) -> bool {
        if sender == self.supervisor {
            return true;
        }
        self.zones
            .get(zone_id)
            .is_some_and(|z| !z.master.is_zero() && z.master == sender)
    }

    pub fn join_vzone(&mut self, sender: Address, zone_id: &str, node: Address) -> bool {
        if zone_id.is_empty() || node.is_zero() || !self.may_manage(sender, zone_id) {
            return false;
        }
        if self.get_vnode(&node).node_type != NodeType::None {
            return false;
        }
        self.nodes.insert(
            node,
            VNodeRecord {
                vid: node,
                vzone_id: zone_id.to_owned(),
                node_type: NodeType::Follower,
            },
        );
        true
    }

    pub fn leave_vzone(&mut self, sender: Address, zone_id: &str, node: Address) -> bool {
        if !self.may_manage(sender, zone_id) {
            return false;
        }
        if self.get_vnode(&node).node_type != NodeType::Follower {
            return false;
        }
        self.nodes.remove(&node);
        true
    }

    pub fn get_vnode(&self, addr: &Address) -> VNodeRecord {
        self.nodes
            .get(addr)
            .cloned()
            .unwrap_or_else(|| VNodeRecord::empty(*addr))
    }

    pub fn get_vzone(&self, zone_id: &str) -> VirtualZone {
        self.zones
            .get(zone_id)
            .cloned()
            .unwrap_or_else(|| VirtualZone::unowned(zone_id))
    }

    pub fn zones(&self) -> impl Iterator<Item = &VirtualZone> {
        self.zones.values()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &VNodeRecord> {
        self.nodes.values()
    }

    pub fn members(&self, zone_id: &str) -> Vec<Address> {
        self.nodes
            .values()
            .filter(|r| r.vzone_id == zone_id)
            .map(|r| r.vid)
            .collect()
    }

    /// Followers still pointing at a zone that has no master. Revocation
    /// leaves these behind; they fail authentication until re-joined
    /// elsewhere after a leave.
    pub fn dangling_followers(&self) -> Vec<VNodeRecord> {
        self.nodes
            .values()
            .filter(|r| r.node_type == NodeType::Follower && self.get_vzone(&r.vzone_id).master.is_zero())
            .cloned()
            .collect()
    }
}
