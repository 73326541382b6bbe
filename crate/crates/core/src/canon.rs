//! Canonical serialization and the chain digest.
//!
//! Canonical form is compact JSON with object keys sorted. Every digest in
//! the ledger is SHA-256 over canonical bytes, so two structurally equal
//! values always hash the same regardless of field declaration order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

/// Serializes `value` as compact JSON with sorted object keys.
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    // serde_json::Map is BTreeMap-backed without the preserve_order feature,
    // so the round trip through Value sorts every object.
    let value = serde_json::to_value(value)?;
    serde_json::to_string(&value)
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest([u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn of_bytes(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }

    pub fn of<T: Serialize + ?Sized>(value: &T) -> Self {
        let text = to_canonical_string(value).expect("ledger values always serialize");
        Self::of_bytes(text.as_bytes())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..6])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short())
    }
}

impl FromStr for Digest {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.strip_prefix("0x").ok_or("digest must start with 0x")?;
        let mut bytes = [0u8; 32];
        hex::decode_to_slice(digits, &mut bytes).map_err(|e| e.to_string())?;
        Ok(Digest(bytes))
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn canonical_sorts_keys_without_whitespace() {
        let v = json!({"b": 1, "a": {"z": true, "c": [1, 2]}});
        assert_eq!(to_canonical_string(&v).unwrap(), r#"{"a":{"c":[1,2],"z":true},"b":1}"#);
    }

    #[test]
    fn digest_is_order_insensitive_for_objects() {
        let a = json!({"x": 1, "y": 2});
        let b: serde_json::Value = serde_json::from_str(r#"{"y":2,"x":1}"#).unwrap();
        assert_eq!(Digest::of(&a), Digest::of(&b));
        assert_ne!(Digest::of(&a), Digest::of(&json!({"x": 2, "y": 1})));
    }

    #[test]
    fn digest_text_round_trips() {
        let d = Digest::of_bytes(b"genesis");
        assert_eq!(d.to_string().parse::<Digest>().unwrap(), d);
    }
}
