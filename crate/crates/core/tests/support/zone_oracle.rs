//! Literal interpreter of the four zone algorithms, kept independent of the
//! contract implementation (plain vectors and hash maps, no shared code).
//!
//! Resolutions applied on top of the pseudocode, matching the contract:
//! revoke uses the inner supervisor-or-owning-master guard and refuses
//! unowned zones, revoke clears the former master's record, leave clears the
//! removed node's record, and create refuses a sender that already holds a
//! zone record.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use rand::Rng;

pub const SUPERVISOR: usize = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ZoneOp {
    Allow { sender: usize, addr: usize, allowed: bool },
    Create { sender: usize, zone: usize },
    Revoke { sender: usize, zone: usize },
    Join { sender: usize, zone: usize, node: usize },
    Leave { sender: usize, zone: usize, node: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleZone {
    pub master: Option<usize>,
    pub uid: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ZoneOracle {
    pub vzone: HashMap<usize, OracleZone>,
    /// node -> (zone index, node_type)
    pub vnode: HashMap<usize, (usize, u8)>,
    pub valid_masters: HashSet<usize>,
}

impl ZoneOracle {
    fn node_type(&self, node: usize) -> u8 {
        self.vnode.get(&node).map_or(0, |r| r.1)
    }

    fn master_of(&self, zone: usize) -> Option<usize> {
        self.vzone.get(&zone).and_then(|z| z.master)
    }

    pub fn apply(&mut self, op: &ZoneOp) -> bool {
        match *op {
            ZoneOp::Allow { sender, addr, allowed } => {
                if sender != SUPERVISOR {
                    return false;
                }
                if allowed {
                    self.valid_masters.insert(addr);
                } else {
                    self.valid_masters.remove(&addr);
                }
                true
            }
            ZoneOp::Create { sender, zone } => {
                let entity = sender;
                if entity == SUPERVISOR || self.valid_masters.contains(&entity) {
                    if self.master_of(zone).is_none() {
                        if self.node_type(entity) != 0 {
                            return false;
                        }
                        let z = self.vzone.entry(zone).or_default();
                        z.uid += 1;
                        z.master = Some(entity);
                        self.vnode.insert(entity, (zone, 1));
                        true
                    } else {
                        false
                    }
                } else {
                    false
                }
            }
            ZoneOp::Revoke { sender, zone } => {
                let entity = sender;
                if entity == SUPERVISOR
                    || (self.valid_masters.contains(&entity) && self.master_of(zone) == Some(entity))
                {
                    let Some(curr_master) = self.master_of(zone) else {
                        return false;
                    };
                    let z = self.vzone.get_mut(&zone).unwrap();
                    z.uid += 1;
                    z.master = None;
                    if self.vnode.get(&curr_master).map(|r| r.0) == Some(zone) {
                        self.vnode.remove(&curr_master);
                    }
                    true
                } else {
                    false
                }
            }
            ZoneOp::Join { sender, zone, node } => {
                let entity = sender;
                if entity == SUPERVISOR || Some(entity) == self.master_of(zone) {
                    if self.node_type(node) == 0 {
                        self.vnode.insert(node, (zone, 2));
                        true
                    } else {
                        false
                    }
                } else {
                    false
                }
            }
            ZoneOp::Leave { sender, zone, node } => {
                let entity = sender;
                if entity == SUPERVISOR || Some(entity) == self.master_of(zone) {
                    if self.node_type(node) == 2 {
                        self.vnode.remove(&node);
                        true
                    } else {
                        false
                    }
                } else {
                    false
                }
            }
        }
    }
}

/// Random op biased toward the supervisor and allowlisted senders so that
/// sequences reach deep states.
pub fn random_op<R: Rng>(rng: &mut R, n_addrs: usize, n_zones: usize) -> ZoneOp {
    let who = |rng: &mut R| rng.random_range(0..n_addrs);
    let sender = if rng.random_bool(0.3) { SUPERVISOR } else { who(rng) };
    let zone = rng.random_range(0..n_zones);
    match rng.random_range(0..10) {
        0..=1 => ZoneOp::Allow {
            sender,
            addr: who(rng),
            allowed: rng.random_bool(0.75),
        },
        2..=3 => ZoneOp::Create { sender, zone },
        4 => ZoneOp::Revoke { sender, zone },
        5..=7 => ZoneOp::Join { sender, zone, node: who(rng) },
        _ => ZoneOp::Leave { sender, zone, node: who(rng) },
    }
}

pub fn random_sequence<R: Rng>(rng: &mut R, n_addrs: usize, n_zones: usize, max_len: usize) -> Vec<ZoneOp> {
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| random_op(rng, n_addrs, n_zones)).collect()
}
