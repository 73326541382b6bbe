//! Fixed per-operation gas costs and fee conversion.
//!
//! Fees are integer wei; USD amounts are rounded half-up to whole cents per
//! transaction, so a report total is exactly the sum of its rows.

use std::collections::BTreeMap;
use std::fmt;
use std::io;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::chain::Block;
use crate::canon::Digest;

pub const WEI_PER_ETC: u128 = 1_000_000_000_000_000_000;
const MICRO_PER_CENT: u128 = 10_000;

/// Gas charged per operation name. A token assignment totals 159,544 units;
/// the other entries are fixed documented constants (21,000 intrinsic plus
/// an execution estimate).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GasTable(pub BTreeMap<String, u64>);

impl Default for GasTable {
    fn default() -> Self {
        let entries = [
            ("deploy_contracts", 1_482_316),
            ("set_master_allowlist", 45_210),
            ("create_vzone", 109_913),
            ("revoke_vzone", 38_455),
            ("join_vzone", 67_420),
            ("leave_vzone", 32_118),
            ("issue_token", 159_544),
            ("revoke_access_rights", 41_702),
            ("revoke_token", 36_890),
            ("set_token_validity", 29_877),
        ];
        GasTable(entries.into_iter().map(|(k, v)| (k.to_owned(), v)).collect())
    }
}

impl GasTable {
    /// Unlisted operations cost the 21,000 intrinsic minimum so that every
    /// applied transaction has nonzero gas.
    pub fn cost(&self, op: &str) -> u64 {
        self.0.get(op).copied().filter(|g| *g > 0).unwrap_or(21_000)
    }
}

/// A USD price with six fractional digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct UsdPrice {
    micros: u128,
}

impl UsdPrice {
    pub const fn from_micros(micros: u128) -> Self {
        UsdPrice { micros }
    }

    pub fn from_f64(usd: f64) -> Option<Self> {
        (usd.is_finite() && usd >= 0.0).then(|| UsdPrice {
            micros: (usd * 1e6).round() as u128,
        })
    }

    pub fn micros(self) -> u128 {
        self.micros
    }

    pub fn as_f64(self) -> f64 {
        self.micros as f64 / 1e6
    }
}

impl fmt::Display for UsdPrice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.micros / 1_000_000;
        let frac = format!("{:06}", self.micros % 1_000_000);
        let frac = frac.trim_end_matches('0');
        if frac.is_empty() {
            write!(f, "{whole}")
        } else {
            write!(f, "{whole}.{frac}")
        }
    }
}

impl Serialize for UsdPrice {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for UsdPrice {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        UsdPrice::from_f64(v).ok_or_else(|| serde::de::Error::custom("price must be a nonnegative number"))
    }
}

/// Decimal ETC rendering of a wei amount with trailing zeros trimmed.
pub fn format_wei_as_etc(wei: u128) -> String {
    let whole = wei / WEI_PER_ETC;
    let frac = format!("{:018}", wei % WEI_PER_ETC);
    let frac = frac.trim_end_matches('0');
    if frac.is_empty() {
        whole.to_string()
    } else {
        format!("{whole}.{frac}")
    }
}

pub fn format_cents(cents: u128) -> String {
    format!("{}.{:02}", cents / 100, cents % 100)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GasCharge {
    pub tx_digest: Digest,
    pub op: String,
    pub gas: u64,
    pub fee_wei: u128,
    pub fee_usd_cents: u128,
}

impl GasCharge {
    pub fn new(tx_digest: Digest, op: &str, gas: u64, gas_price_wei: u128, eth_price: UsdPrice) -> Self {
        let fee_wei = gas as u128 * gas_price_wei;
        let denom = WEI_PER_ETC * MICRO_PER_CENT;
        let fee_usd_cents = (fee_wei * eth_price.micros() + denom / 2) / denom;
        GasCharge {
            tx_digest,
            op: op.to_owned(),
            gas,
            fee_wei,
            fee_usd_cents,
        }
    }

    pub fn fee_etc(&self) -> String {
        format_wei_as_etc(self.fee_wei)
    }

    pub fn fee_usd(&self) -> String {
        format_cents(self.fee_usd_cents)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GasReportRow {
    pub tx_digest: String,
    pub op: String,
    pub gas: u64,
    pub fee_etc: String,
    pub fee_usd: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OpTotals {
    pub count: u64,
    pub gas: u64,
    pub fee_wei: u128,
    pub fee_usd_cents: u128,
}

#[derive(Debug, Clone, Default)]
pub struct GasReport {
    pub charges: Vec<GasCharge>,
}

impl GasReport {
    pub fn from_blocks(blocks: &[Block], gas_price_wei: u128, eth_price: UsdPrice) -> Self {
        let charges = blocks
            .iter()
            .flat_map(|b| b.txs.iter())
            .map(|tx| GasCharge::new(tx.digest(), tx.call.op_name(), tx.gas_used, gas_price_wei, eth_price))
            .collect();
        GasReport { charges }
    }

    pub fn total_gas(&self) -> u64 {
        self.charges.iter().map(|c| c.gas).sum()
    }

    pub fn total_usd_cents(&self) -> u128 {
        self.charges.iter().map(|c| c.fee_usd_cents).sum()
    }

    pub fn total_wei(&self) -> u128 {
        self.charges.iter().map(|c| c.fee_wei).sum()
    }

    pub fn by_op(&self) -> BTreeMap<String, OpTotals> {
        let mut out: BTreeMap<String, OpTotals> = BTreeMap::new();
        for c in &self.charges {
            let t = out.entry(c.op.clone()).or_default();
            t.count += 1;
            t.gas += c.gas;
            t.fee_wei += c.fee_wei;
            t.fee_usd_cents += c.fee_usd_cents;
        }
        out
    }

    pub fn rows(&self) -> impl Iterator<Item = GasReportRow> + '_ {
        self.charges.iter().map(|c| GasReportRow {
            tx_digest: c.tx_digest.to_string(),
            op: c.op.clone(),
            gas: c.gas,
            fee_etc: c.fee_etc(),
            fee_usd: c.fee_usd(),
        })
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.rows() {
            w.serialize(row)?;
        }
        if self.charges.is_empty() {
            w.write_record(["tx_digest", "op", "gas", "fee_etc", "fee_usd"])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn etc_price() -> UsdPrice {
        UsdPrice::from_f64(212.77).unwrap()
    }

    #[test]
    fn token_assignment_fee_defaults() {
        let gas = GasTable::default().cost("issue_token");
        assert_eq!(gas, 159_544);
        let charge = GasCharge::new(Digest::ZERO, "issue_token", gas, super::super::chain::DEFAULT_GAS_PRICE_WEI, etc_price());
        assert_eq!(charge.fee_usd(), "0.22");
        assert_eq!(charge.fee_etc(), "0.001037036");
    }

    #[test]
    fn table_gas_price_gives_table_etc_fee() {
        // 6.8026 gwei reproduces the printed ETC fee; at 212.77 USD/ETC that
        // fee is 0.23 USD, not the printed 0.22.
        let charge = GasCharge::new(Digest::ZERO, "issue_token", 159_544, 6_802_600_000, etc_price());
        assert_eq!(&charge.fee_etc()[..9], "0.0010853");
        assert_eq!(charge.fee_usd(), "0.23");
    }

    #[test]
    fn zero_price_is_free_in_usd() {
        let charge = GasCharge::new(Digest::ZERO, "issue_token", 159_544, 6_500_000_000, UsdPrice::default());
        assert_eq!(charge.fee_usd(), "0.00");
        assert!(charge.fee_wei > 0);
    }

    #[test]
    fn formatting() {
        assert_eq!(format_wei_as_etc(WEI_PER_ETC), "1");
        assert_eq!(format_wei_as_etc(1), "0.000000000000000001");
        assert_eq!(format_cents(2200), "22.00");
        assert_eq!(UsdPrice::from_f64(212.77).unwrap().to_string(), "212.77");
        assert!(UsdPrice::from_f64(-1.0).is_none());
    }

    #[test]
    fn unknown_op_costs_intrinsic_gas() {
        assert_eq!(GasTable::default().cost("mystery"), 21_000);
        let zeroed = GasTable([("issue_token".to_owned(), 0)].into_iter().collect());
        assert_eq!(zeroed.cost("issue_token"), 21_000);
    }
}
