//! Discrete-event harness for BlendCAC: satellites, ground sites, clients
//! and masters exchanging requests over modeled SATCOM links, with a
//! simulated ledger producing blocks on the same virtual clock.
//!
//! ```no_run
//! use blendcac_netsim::{report, run_config, testbed};
//!
//! let (_sim, out) = run_config(testbed::demo_testbed(), 7).unwrap();
//! let results = report::check_expectations(&testbed::demo_testbed().expectations, &out.measurements);
//! assert!(results.iter().all(|r| r.ok));
//! ```

pub mod channel;
pub mod config;
pub mod measure;
pub mod profile;
pub mod report;
pub mod sim;
pub mod testbed;

pub use channel::{ChannelSpec, DelayModel};
pub use config::{ConfigError, Event, Expectation, NodeSpec, Role, ScenarioConfig, ZoneSpec};
pub use measure::{Measurement, Outcome};
pub use profile::{Preset, ProcessingProfile, ProfileRef};
pub use report::{emit_report, Report, ReportFormat, Summary};
pub use sim::{build_topology, run_config, run_scenario, RunOutput, SimError, Simulation};
