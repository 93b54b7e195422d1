//! Constants profiles: overlay multipliers plus the structural repetition
//! counts of the gossip and consensus layers.

use crate::message::floor_log2;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// What Phase 2 gossips between neighbouring super-processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase2Rumors {
    /// The sender's super-process id; `SN` counts distinct groups.
    SuperIds,
    /// The sender's process id; `SN` counts distinct processes.
    RawIds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    /// Degree threshold multiplier: `δ = ⌈c_δ·log₂ m⌉`.
    pub c_delta: f64,
    /// Radius multiplier: `γ = ⌈c_γ·log₂ m⌉`.
    pub c_gamma: f64,
    /// Edge probability multiplier: `p = min(1, c_p·δ/k)`.
    pub c_p: f64,
    /// Bipartite gossip epochs; `None` means `2t`.
    pub bg_epochs: Option<u32>,
    pub bg_iterations: u32,
    /// Intra-group flooding exchanges per iteration; `None` means `2γ+1`.
    pub bg_floods: Option<u32>,
    /// Exchange + signaling repetitions per iteration; `None` means `t+2`.
    pub bg_signal_reps: Option<u32>,
    pub out_offset: u32,
    pub flood_offset: u32,
    pub local_offset: u32,
    /// Monte-Carlo deadline multiplier (in counting phases).
    pub c_mc: u64,
    /// Epochs of the unrestricted variant; `None` means `⌈log_{10/9} n⌉`.
    pub star_epochs: Option<u32>,
    pub phase2_rumors: Phase2Rumors,
    /// Seed of every overlay graph, shared by all runs.
    pub overlay_seed: u64,
}

impl Profile {
    pub fn paper() -> Self {
        Profile {
            name: "paper".into(),
            c_delta: 24.0,
            c_gamma: 2.0,
            c_p: 24.0,
            bg_epochs: None,
            bg_iterations: 3,
            bg_floods: None,
            bg_signal_reps: None,
            out_offset: 1,
            flood_offset: 7,
            local_offset: 2,
            c_mc: 4,
            star_epochs: None,
            phase2_rumors: Phase2Rumors::SuperIds,
            overlay_seed: 0,
        }
    }

    pub fn scaled() -> Self {
        Profile {
            name: "scaled".into(),
            c_delta: 2.0,
            c_gamma: 2.0,
            c_p: 2.0,
            ..Self::paper()
        }
    }

    /// Small multipliers and shortened repetition counts so that full
    /// consensus sweeps run in seconds.
    pub fn desk() -> Self {
        Profile {
            name: "desk".into(),
            c_delta: 1.0,
            c_gamma: 0.25,
            c_p: 1.0,
            bg_epochs: Some(2),
            bg_floods: Some(1),
            bg_signal_reps: Some(2),
            ..Self::paper()
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(Self::paper()),
            "scaled" => Some(Self::scaled()),
            "desk" => Some(Self::desk()),
            _ => None,
        }
    }

    /// Override one field by name; used by run configurations.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("bad number `{v}`"))
        }
        fn auto(v: &str) -> Result<Option<u32>, String> {
            if v == "auto" {
                Ok(None)
            } else {
                num(v).map(Some)
            }
        }
        match key {
            "c_delta" => self.c_delta = num(value)?,
            "c_gamma" => self.c_gamma = num(value)?,
            "c_p" => self.c_p = num(value)?,
            "bg_epochs" => self.bg_epochs = auto(value)?,
            "bg_iterations" => self.bg_iterations = num(value)?,
            "bg_floods" => self.bg_floods = auto(value)?,
            "bg_signal_reps" => self.bg_signal_reps = auto(value)?,
            "out_offset" => self.out_offset = num(value)?,
            "flood_offset" => self.flood_offset = num(value)?,
            "local_offset" => self.local_offset = num(value)?,
            "c_mc" => self.c_mc = num(value)?,
            "star_epochs" => self.star_epochs = auto(value)?,
            "overlay_seed" => self.overlay_seed = num(value)?,
            "phase2_rumors" => {
                self.phase2_rumors = match value {
                    "super_ids" => Phase2Rumors::SuperIds,
                    "raw_ids" => Phase2Rumors::RawIds,
                    _ => return Err(format!("expected super_ids or raw_ids, got `{value}`")),
                }
            }
            _ => return Err(format!("unknown profile field `{key}`")),
        }
        if key != "phase2_rumors" && key != "overlay_seed" {
            self.name = "custom".into();
        }
        Ok(())
    }

    /// Degree threshold for an instance over `m ≥ 1` processes.
    pub fn delta(&self, m: usize) -> u32 {
        scaled_log(self.c_delta, m).max(1)
    }

    pub fn gamma(&self, m: usize) -> u32 {
        scaled_log(self.c_gamma, m).max(1)
    }

    /// Degree threshold of the super-process graph (not clamped: one group
    /// gives zero).
    pub fn group_delta(&self, x: usize) -> u32 {
        scaled_log(self.c_delta, x)
    }

    pub fn group_gamma(&self, x: usize) -> u32 {
        scaled_log(self.c_gamma, x)
    }

    pub fn bg_shape(&self, m: usize) -> BgShape {
        let t = levels(m);
        let gamma = self.gamma(m);
        BgShape {
            t,
            delta: self.delta(m),
            gamma,
            epochs: self.bg_epochs.unwrap_or(2 * t),
            iterations: self.bg_iterations,
            floods: self.bg_floods.unwrap_or(2 * gamma + 1),
            signal_reps: self.bg_signal_reps.unwrap_or(t + 2),
        }
    }

    pub fn star_epoch_count(&self, n: usize) -> u32 {
        self.star_epochs.unwrap_or_else(|| {
            if n <= 1 {
                1
            } else {
                ((n as f64).ln() / (10.0f64 / 9.0).ln()).ceil() as u32
            }
        })
    }
}

fn scaled_log(c: f64, m: usize) -> u32 {
    if m <= 1 {
        return 0;
    }
    (c * (m as f64).log2()).ceil() as u32
}

/// `t = ⌊log₂ m⌋`.
pub fn levels(m: usize) -> u32 {
    floor_log2(m.max(1) as u64) as u32
}

/// Repetition structure of one bipartite gossip instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BgShape {
    pub t: u32,
    pub delta: u32,
    pub gamma: u32,
    pub epochs: u32,
    pub iterations: u32,
    pub floods: u32,
    pub signal_reps: u32,
}

/// Exact threshold fraction in `(0, 1]`, stored with a power-of-two
/// denominator after epoch scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub const fn new(num: u64, den: u64) -> Self {
        Fraction { num, den }
    }

    /// `count ≥ self·total`, exactly.
    pub fn reached(&self, count: u64, total: u64) -> bool {
        count as u128 * self.den as u128 >= self.num as u128 * total as u128
    }

    /// `self·(9/10)^e`, rounded down on a `2^40` grid.
    pub fn shrink(&self, e: u32) -> Fraction {
        if e == 0 {
            return *self;
        }
        let mut v: u128 = ((self.num as u128) << 40) / self.den as u128;
        for _ in 0..e {
            v = v * 9 / 10;
        }
        Fraction {
            num: v as u64,
            den: 1 << 40,
        }
    }
}

impl FromStr for Fraction {
    type Err = String;

    /// `a/b` with `0 < a ≤ b`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once('/').ok_or_else(|| format!("expected a/b, got `{s}`"))?;
        let parse = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("`{t}`: {e}"));
        let (num, den) = (parse(a)?, parse(b)?);
        if num == 0 || num > den {
            return Err(format!("fraction {num}/{den} outside (0, 1]"));
        }
        Ok(Fraction { num, den })
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}
