//! Message payloads, rumor sets and the bit-cost model.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Dense process identity in `[0, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(pub u32);

impl ProcessId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl From<usize> for ProcessId {
    fn from(i: usize) -> Self {
        ProcessId(i as u32)
    }
}

/// A consensus value rumor: 0, 1 or "no value".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Zero,
    One,
    Bottom,
}

impl Value {
    pub fn from_bit(b: bool) -> Self {
        if b {
            Value::One
        } else {
            Value::Zero
        }
    }

    pub fn bit(self) -> Option<bool> {
        match self {
            Value::Zero => Some(false),
            Value::One => Some(true),
            Value::Bottom => None,
        }
    }

    fn mask(self) -> u8 {
        match self {
            Value::Zero => 1,
            Value::One => 2,
            Value::Bottom => 4,
        }
    }
}

/// Bitset over process ids (or any dense id universe).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct IdSet {
    words: Vec<u64>,
    count: u32,
}

impl IdSet {
    pub fn new(universe: usize) -> Self {
        IdSet {
            words: vec![0; universe.div_ceil(64)],
            count: 0,
        }
    }

    pub fn singleton(universe: usize, id: u32) -> Self {
        let mut s = IdSet::new(universe);
        s.insert(id);
        s
    }

    pub fn insert(&mut self, id: u32) -> bool {
        let (w, b) = ((id / 64) as usize, id % 64);
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        let fresh = self.words[w] & (1 << b) == 0;
        if fresh {
            self.words[w] |= 1 << b;
            self.count += 1;
        }
        fresh
    }

    pub fn contains(&self, id: u32) -> bool {
        let w = (id / 64) as usize;
        w < self.words.len() && self.words[w] & (1 << (id % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.count as usize
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn union_with(&mut self, other: &IdSet) {
        if other.words.len() > self.words.len() {
            self.words.resize(other.words.len(), 0);
        }
        let mut count = 0;
        for (i, w) in self.words.iter_mut().enumerate() {
            if let Some(o) = other.words.get(i) {
                *w |= o;
            }
            count += w.count_ones();
        }
        self.count = count;
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros();
                w &= w - 1;
                Some(i as u32 * 64 + b)
            })
        })
    }
}

impl fmt::Debug for IdSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl Serialize for IdSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for IdSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let ids = Vec::<u32>::deserialize(d)?;
        let mut s = IdSet::new(0);
        for id in ids {
            s.insert(id);
        }
        Ok(s)
    }
}

/// One (zeros, ones) pair tagged with the half it describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CountRumor {
    pub side: u8,
    pub zeros: u32,
    pub ones: u32,
}

/// Set of rumors of a single kind.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RumorSet {
    Ids(IdSet),
    Values(u8),
    Counts(Vec<CountRumor>),
    /// (id, bit) pairs, used by the flooding fallback.
    IdValues(Vec<(u32, bool)>),
}

impl RumorSet {
    pub fn values(vals: &[Value]) -> Self {
        RumorSet::Values(vals.iter().fold(0, |m, v| m | v.mask()))
    }

    pub fn counts(pair: CountRumor) -> Self {
        RumorSet::Counts(vec![pair])
    }

    pub fn len(&self) -> usize {
        match self {
            RumorSet::Ids(s) => s.len(),
            RumorSet::Values(m) => m.count_ones() as usize,
            RumorSet::Counts(v) => v.len(),
            RumorSet::IdValues(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_value(&self, v: Value) -> bool {
        matches!(self, RumorSet::Values(m) if m & v.mask() != 0)
    }

    pub fn value_list(&self) -> Vec<Value> {
        [Value::Zero, Value::One, Value::Bottom]
            .into_iter()
            .filter(|v| self.has_value(*v))
            .collect()
    }

    /// Union `other` into `self`. Mismatched kinds are ignored.
    pub fn absorb(&mut self, other: &RumorSet) {
        match (self, other) {
            (RumorSet::Ids(a), RumorSet::Ids(b)) => a.union_with(b),
            (RumorSet::Values(a), RumorSet::Values(b)) => *a |= b,
            (RumorSet::Counts(a), RumorSet::Counts(b)) => merge_sorted(a, b),
            (RumorSet::IdValues(a), RumorSet::IdValues(b)) => merge_sorted(a, b),
            _ => debug_assert!(false, "rumor kind mismatch"),
        }
    }
}

/// Sorted, deduplicated union of `a` and `b` into `a`.
fn merge_sorted<T: Ord + Copy>(a: &mut Vec<T>, b: &[T]) {
    if !a.is_sorted() || !b.is_sorted() {
        a.extend_from_slice(b);
        a.sort_unstable();
        a.dedup();
        return;
    }
    if b.iter().all(|x| a.binary_search(x).is_ok()) {
        return;
    }
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    *a = out;
}

/// Typed message payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Payload {
    Request { bit: bool },
    Response { level: u8, rumors: RumorSet },
    ValueBit { bit: bool },
    RumorSet(RumorSet),
    Alarm,
}

/// A single point-to-point message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundMessage {
    pub sender: ProcessId,
    pub receiver: ProcessId,
    pub payload: Payload,
}

/// `⌈log₂ x⌉` for `x ≥ 1`.
pub fn ceil_log2(x: u64) -> u64 {
    assert!(x >= 1);
    64 - (x - 1).leading_zeros() as u64
}

/// `⌊log₂ x⌋` for `x ≥ 1`.
pub fn floor_log2(x: u64) -> u64 {
    assert!(x >= 1);
    63 - x.leading_zeros() as u64
}

/// Bit costs for a system of `n` processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostModel {
    pub n: usize,
    id_width: u64,
    level_width: u64,
}

impl CostModel {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let t_max = floor_log2(n as u64) + 1;
        CostModel {
            n,
            id_width: ceil_log2(n as u64 + 2),
            level_width: ceil_log2(t_max + 2),
        }
    }

    pub fn id_width(&self) -> u64 {
        self.id_width
    }

    pub fn rumor_set_bits(&self, r: &RumorSet) -> u64 {
        let per = match r {
            RumorSet::Ids(_) => self.id_width,
            RumorSet::Values(_) => 2,
            RumorSet::Counts(_) => 2 * self.id_width,
            RumorSet::IdValues(_) => self.id_width + 2,
        };
        8 + per * r.len() as u64
    }

    pub fn bit_cost(&self, p: &Payload) -> u64 {
        match p {
            Payload::Request { .. } | Payload::ValueBit { .. } | Payload::Alarm => 1,
            Payload::Response { rumors, .. } => self.level_width + self.rumor_set_bits(rumors),
            Payload::RumorSet(r) => self.rumor_set_bits(r),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_helpers() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(5), 3);
        assert_eq!(ceil_log2(8), 3);
        assert_eq!(floor_log2(1), 0);
        assert_eq!(floor_log2(1023), 9);
        assert_eq!(floor_log2(1024), 10);
    }

    #[test]
    fn fixed_width_payloads_cost_one_bit() {
        let c = CostModel::new(16);
        assert_eq!(c.bit_cost(&Payload::Request { bit: true }), 1);
        assert_eq!(c.bit_cost(&Payload::ValueBit { bit: false }), 1);
        assert_eq!(c.bit_cost(&Payload::Alarm), 1);
    }

    #[test]
    fn rumor_set_costs() {
        // n = 16: id width ⌈log₂ 18⌉ = 5, t_max = 5, level width ⌈log₂ 7⌉ = 3.
        let c = CostModel::new(16);
        let ids = RumorSet::Ids(IdSet::singleton(16, 3));
        assert_eq!(c.bit_cost(&Payload::RumorSet(ids.clone())), 8 + 5);
        assert_eq!(
            c.bit_cost(&Payload::Response {
                level: 2,
                rumors: ids
            }),
            3 + 13
        );
        let vals = RumorSet::values(&[Value::Zero, Value::Bottom]);
        assert_eq!(c.bit_cost(&Payload::RumorSet(vals)), 8 + 4);
        let counts = RumorSet::counts(CountRumor {
            side: 0,
            zeros: 1,
            ones: 2,
        });
        assert_eq!(c.bit_cost(&Payload::RumorSet(counts)), 8 + 10);
    }

    #[test]
    fn id_set_ops() {
        let mut a = IdSet::singleton(130, 1);
        let mut b = IdSet::singleton(130, 129);
        b.insert(64);
        a.union_with(&b);
        assert_eq!(a.iter().collect::<Vec<_>>(), vec![1, 64, 129]);
        assert_eq!(a.len(), 3);
        assert!(!a.insert(64));
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, "[1,64,129]");
        let back: IdSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back.iter().collect::<Vec<_>>(), vec![1, 64, 129]);
    }

    #[test]
    fn counts_absorb_keeps_sorted_unique() {
        let p = |side, zeros, ones| CountRumor { side, zeros, ones };
        let mut a = RumorSet::Counts(vec![p(0, 1, 1)]);
        a.absorb(&RumorSet::Counts(vec![p(1, 0, 2), p(0, 1, 1)]));
        assert_eq!(a, RumorSet::Counts(vec![p(0, 1, 1), p(1, 0, 2)]));
    }
}
