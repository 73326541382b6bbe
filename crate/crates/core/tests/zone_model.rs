//! The zone contract against a literal interpreter of its algorithms.

mod support;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use support::zone_harness::{apply_to_contract, check_invariants, compare, new_contract};
use support::zone_oracle::{random_sequence, ZoneOp, ZoneOracle};

const ADDRS: usize = 6;
const ZONES: usize = 3;

fn op_strategy() -> impl Strategy<Value = ZoneOp> {
    let a = 0..ADDRS;
    let z = 0..ZONES;
    prop_oneof![
        (a.clone(), a.clone(), any::<bool>()).prop_map(|(sender, addr, allowed)| ZoneOp::Allow { sender, addr, allowed }),
        (a.clone(), z.clone()).prop_map(|(sender, zone)| ZoneOp::Create { sender, zone }),
        (a.clone(), z.clone()).prop_map(|(sender, zone)| ZoneOp::Revoke { sender, zone }),
        (a.clone(), z.clone(), a.clone()).prop_map(|(sender, zone, node)| ZoneOp::Join { sender, zone, node }),
        (a.clone(), z, a).prop_map(|(sender, zone, node)| ZoneOp::Leave { sender, zone, node }),
    ]
}

fn run(ops: &[ZoneOp]) -> Result<(), String> {
    let mut contract = new_contract();
    let mut oracle = ZoneOracle::default();
    for (i, op) in ops.iter().enumerate() {
        let got = apply_to_contract(&mut contract, op);
        let want = oracle.apply(op);
        if got != want {
            return Err(format!("step {i} {op:?}: contract returned {got}, oracle {want}"));
        }
        compare(&contract, &oracle, ADDRS, ZONES).map_err(|e| format!("step {i} {op:?}: {e}"))?;
        check_invariants(&contract).map_err(|e| format!("step {i} {op:?}: {e}"))?;
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn contract_matches_oracle(ops in prop::collection::vec(op_strategy(), 0..=40)) {
        if let Err(e) = run(&ops) {
            prop_assert!(false, "{}", e);
        }
    }
}

#[test]
fn biased_sequences_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..2_000 {
        let ops = random_sequence(&mut rng, ADDRS, ZONES, 40);
        run(&ops).unwrap();
    }
}

#[test]
fn biased_sequences_reach_interesting_states() {
    // Guards against a generator that only produces rejected calls.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut successes = [0usize; 5];
    for _ in 0..500 {
        let mut oracle = ZoneOracle::default();
        for op in random_sequence(&mut rng, ADDRS, ZONES, 40) {
            let idx = match op {
                ZoneOp::Allow { .. } => 0,
                ZoneOp::Create { .. } => 1,
                ZoneOp::Revoke { .. } => 2,
                ZoneOp::Join { .. } => 3,
                ZoneOp::Leave { .. } => 4,
            };
            if oracle.apply(&op) {
                successes[idx] += 1;
            }
        }
    }
    assert!(successes.iter().all(|&n| n > 50), "{successes:?}");
}

#[test]
fn revoke_leaves_followers_dangling() {
    let ops = [
        ZoneOp::Create { sender: 0, zone: 0 },
        ZoneOp::Join { sender: 0, zone: 0, node: 2 },
        ZoneOp::Revoke { sender: 0, zone: 0 },
    ];
    run(&ops).unwrap();
    let mut c = new_contract();
    for op in &ops {
        apply_to_contract(&mut c, op);
    }
    assert_eq!(c.dangling_followers().len(), 1);
}
