#![allow(dead_code)]

pub mod authz_oracle;
pub mod zone_harness;
pub mod zone_oracle;
