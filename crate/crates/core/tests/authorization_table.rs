//! Exhaustive truth table for the access-control pipeline.

mod support;

use blendcac_core::enforcement::{Decision, ServiceProvider, Stage, StageCosts, StageOutcome};

use support::authz_oracle::{expected, materialize, universe, zone_layout, Expected};

#[test]
fn pipeline_matches_truth_table() {
    let zones = zone_layout();
    let cases = universe();
    assert!(cases.len() > 50_000, "universe too small: {}", cases.len());
    let mut mismatches = Vec::new();
    let mut grants = 0;
    for case in &cases {
        let (reader, provider, request) = materialize(case, &zones);
        let sp = ServiceProvider::new(provider, StageCosts::default(), 15_000);
        let auth = sp.authorize(&reader, &request);
        let got = match &auth.decision {
            Decision::Grant(_) => Expected::Grant,
            Decision::Deny(d) => Expected::Deny(d.stage),
        };
        let want = expected(case);
        if got != want {
            mismatches.push(format!("{case:?}: got {got:?}, want {want:?}"));
            continue;
        }
        // Abort at first failure: exactly the stages up to the deciding one
        // are recorded, all passing except possibly the last.
        let n = match want {
            Expected::Grant => Stage::PIPELINE.len(),
            Expected::Deny(s) => Stage::PIPELINE.iter().position(|p| *p == s).unwrap() + 1,
        };
        assert_eq!(auth.trace.stages.len(), n, "{case:?}");
        for (i, rec) in auth.trace.stages.iter().enumerate() {
            assert_eq!(rec.stage, Stage::PIPELINE[i]);
            let last_failed = i + 1 == n && want != Expected::Grant;
            assert_eq!(rec.outcome == StageOutcome::Fail, last_failed, "{case:?}");
        }
        if want == Expected::Grant {
            grants += 1;
        }
    }
    assert!(mismatches.is_empty(), "{} mismatches, first: {}", mismatches.len(), mismatches[0]);
    assert!(grants > 0);
}
