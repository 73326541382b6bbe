//! Point-to-point links between nodes with a one-way delay model and an
//! independent per-leg drop probability.

use blendcac_core::Micros;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayModel {
    Constant { ms: f64 },
    /// Uniform over `[min_ms, max_ms]`, sampled at microsecond resolution.
    Uniform { min_ms: f64, max_ms: f64 },
}

impl DelayModel {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            DelayModel::Constant { ms } if !(ms.is_finite() && ms >= 0.0) => {
                Err(format!("delay must be non-negative, got {ms}"))
            }
            DelayModel::Uniform { min_ms, max_ms }
                if !(min_ms.is_finite() && max_ms.is_finite() && 0.0 <= min_ms && min_ms <= max_ms) =>
            {
                Err(format!("uniform delay needs 0 <= min_ms <= max_ms, got [{min_ms}, {max_ms}]"))
            }
            _ => Ok(()),
        }
    }

    /// Constant models never touch the generator, so adding a constant link
    /// does not perturb the random stream of other links.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Micros {
        match *self {
            DelayModel::Constant { ms } => Micros::from_ms_f64(ms),
            DelayModel::Uniform { min_ms, max_ms } => {
                let lo = Micros::from_ms_f64(min_ms).0;
                let hi = Micros::from_ms_f64(max_ms).0;
                Micros(rng.random_range(lo..=hi))
            }
        }
    }

    pub fn mean(&self) -> Micros {
        match *self {
            DelayModel::Constant { ms } => Micros::from_ms_f64(ms),
            DelayModel::Uniform { min_ms, max_ms } => Micros::from_ms_f64((min_ms + max_ms) / 2.0),
        }
    }
}

fn default_timeout_ms() -> u64 {
    2_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    /// Link label, e.g. "X-band", "K-band", "ethernet".
    pub name: String,
    /// The two node names this channel connects (undirected).
    pub between: [String; 2],
    pub delay: DelayModel,
    #[serde(default)]
    pub drop_rate: f64,
    /// How long a requester waits for a response before giving up.
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

impl ChannelSpec {
    pub fn constant(name: &str, a: &str, b: &str, ms: f64) -> Self {
        ChannelSpec {
            name: name.into(),
            between: [a.into(), b.into()],
            delay: DelayModel::Constant { ms },
            drop_rate: 0.0,
            timeout_ms: default_timeout_ms(),
        }
    }

    pub fn connects(&self, a: &str, b: &str) -> bool {
        (self.between[0] == a && self.between[1] == b) || (self.between[0] == b && self.between[1] == a)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.delay.validate()?;
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(format!("drop_rate must be in [0, 1), got {}", self.drop_rate));
        }
        if self.timeout_ms == 0 {
            return Err("timeout_ms must be positive".into());
        }
        if self.between[0] == self.between[1] {
            return Err(format!("channel connects {:?} to itself", self.between[0]));
        }
        Ok(())
    }

    /// One leg over the link: `None` if the message is dropped. The drop
    /// draw happens only when `drop_rate > 0`.
    pub fn transmit<R: Rng>(&self, rng: &mut R) -> Option<Micros> {
        if self.drop_rate > 0.0 && rng.random_bool(self.drop_rate) {
            return None;
        }
        Some(self.delay.sample(rng))
    }
}
