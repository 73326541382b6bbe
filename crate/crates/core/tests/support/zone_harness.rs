//! Drives the real zone contract with oracle ops and compares states.

#![allow(dead_code)]

use blendcac_core::zone::{NodeType, ZoneContract};
use blendcac_core::Address;

use super::zone_oracle::{ZoneOp, ZoneOracle, SUPERVISOR};

pub fn address(i: usize) -> Address {
    Address::from_low_u64(0x100 + i as u64)
}

pub fn zone_name(i: usize) -> String {
    format!("zone-{i}")
}

pub fn apply_to_contract(c: &mut ZoneContract, op: &ZoneOp) -> bool {
    match *op {
        ZoneOp::Allow { sender, addr, allowed } => c.set_master_allowlist(address(sender), address(addr), allowed),
        ZoneOp::Create { sender, zone } => c.create_vzone(address(sender), &zone_name(zone)),
        ZoneOp::Revoke { sender, zone } => c.revoke_vzone(address(sender), &zone_name(zone)),
        ZoneOp::Join { sender, zone, node } => c.join_vzone(address(sender), &zone_name(zone), address(node)),
        ZoneOp::Leave { sender, zone, node } => c.leave_vzone(address(sender), &zone_name(zone), address(node)),
    }
}

pub fn new_contract() -> ZoneContract {
    ZoneContract::new(address(SUPERVISOR))
}

/// Describes the first disagreement between contract and oracle, if any.
pub fn compare(c: &ZoneContract, o: &ZoneOracle, n_addrs: usize, n_zones: usize) -> Result<(), String> {
    for z in 0..n_zones {
        let real = c.get_vzone(&zone_name(z));
        let want = o.vzone.get(&z).cloned().unwrap_or_default();
        let want_master = want.master.map(address).unwrap_or(Address::ZERO);
        if real.master != want_master || real.uid != want.uid {
            return Err(format!("zone {z}: contract {real:?}, oracle {want:?}"));
        }
    }
    for a in 0..n_addrs {
        let real = c.get_vnode(&address(a));
        let (want_zone, want_type) = o
            .vnode
            .get(&a)
            .map(|(z, t)| (zone_name(*z), *t))
            .unwrap_or((String::new(), 0));
        if real.vzone_id != want_zone || real.node_type.code() != want_type {
            return Err(format!("node {a}: contract {real:?}, oracle ({want_zone:?}, {want_type})"));
        }
        if c.is_valid_master(&address(a)) != o.valid_masters.contains(&a) {
            return Err(format!("allowlist disagrees on {a}"));
        }
    }
    Ok(())
}

/// Record shape invariants that must hold after any sequence.
pub fn check_invariants(c: &ZoneContract) -> Result<(), String> {
    let mut masters = std::collections::HashSet::new();
    for z in c.zones() {
        if !z.master.is_zero() && !masters.insert(z.master) {
            return Err(format!("{} masters two zones", z.master));
        }
    }
    for r in c.nodes() {
        match r.node_type {
            NodeType::None if !r.vzone_id.is_empty() => return Err(format!("{r:?}: type 0 with zone")),
            NodeType::Master | NodeType::Follower if r.vzone_id.is_empty() => {
                return Err(format!("{r:?}: member without zone"))
            }
            NodeType::Master if c.get_vzone(&r.vzone_id).master != r.vid => {
                return Err(format!("{r:?}: master record for a zone it does not own"))
            }
            _ => {}
        }
    }
    Ok(())
}
