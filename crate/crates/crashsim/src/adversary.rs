//! Crash adversaries.

use crate::engine::{sub_tag, Multicast, ProcessSnapshot};
use crate::message::{Payload, ProcessId};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// What the adversary sees before choosing crashes for a round.
pub struct AdversaryView<'a> {
    pub round: u64,
    pub n: usize,
    pub f: usize,
    pub budget_left: usize,
    pub outbox: &'a [Multicast],
    /// `None` when the adversary is blinded to internal state.
    pub states: Option<&'a [ProcessSnapshot]>,
    pub crashed_at: &'a [Option<u64>],
    pub finished: &'a [bool],
}

impl AdversaryView<'_> {
    pub fn is_alive(&self, p: ProcessId) -> bool {
        self.crashed_at[p.index()].is_none()
    }
}

/// Identifies one point-to-point message inside the round's outbox.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MessageRef {
    pub multicast: usize,
    pub receiver: ProcessId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdversaryAction {
    pub crash_now: Vec<ProcessId>,
    pub deliver_from_crashed: Vec<MessageRef>,
}

pub trait Adversary {
    fn act(&mut self, view: &AdversaryView) -> AdversaryAction;

    /// Earliest round after `round` in which the adversary wants to act even
    /// if no process sends anything.
    fn next_silent_action(&self, _round: u64) -> Option<u64> {
        None
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoCrashes;

impl Adversary for NoCrashes {
    fn act(&mut self, _view: &AdversaryView) -> AdversaryAction {
        AdversaryAction::default()
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AdversaryError {
    #[error("unknown adversary strategy `{0}`")]
    UnknownStrategy(String),
    #[error("schedule crashes {scheduled} processes but the budget is {f}")]
    ScheduleExceedsBudget { scheduled: usize, f: usize },
    #[error("bad value `{value}` for adversary parameter `{key}`")]
    BadParam { key: String, value: String },
    #[error("strategy `{0}` needs the super-process layout")]
    MissingLayout(String),
}

/// Crash victims and rounds fixed before the run from `(seed, n, f)`.
#[derive(Debug, Clone)]
pub struct RandomOblivious {
    schedule: BTreeMap<u64, Vec<ProcessId>>,
    coin_seed: u64,
}

impl RandomOblivious {
    /// Draw `count` victims with crash rounds uniform in `[1, horizon]`.
    pub fn new(seed: u64, n: usize, f: usize, count: usize, horizon: u64) -> Result<Self, AdversaryError> {
        if count > f {
            return Err(AdversaryError::ScheduleExceedsBudget { scheduled: count, f });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(sub_tag(seed, 0x0B11));
        let mut schedule: BTreeMap<u64, Vec<ProcessId>> = BTreeMap::new();
        for v in sample(&mut rng, n, count.min(n)).into_iter() {
            let r = rng.gen_range(1..=horizon.max(1));
            schedule.entry(r).or_default().push(ProcessId(v as u32));
        }
        for vs in schedule.values_mut() {
            vs.sort();
        }
        Ok(RandomOblivious {
            schedule,
            coin_seed: sub_tag(seed, 0xC011),
        })
    }

    pub fn scheduled(&self) -> usize {
        self.schedule.values().map(Vec::len).sum()
    }

    fn coin(&self, round: u64, from: ProcessId, to: ProcessId) -> bool {
        sub_tag(sub_tag(self.coin_seed, round), (from.0 as u64) << 32 | to.0 as u64) & 1 == 1
    }
}

impl Adversary for RandomOblivious {
    fn act(&mut self, view: &AdversaryView) -> AdversaryAction {
        let mut act = AdversaryAction::default();
        let Some(victims) = self.schedule.get(&view.round) else {
            return act;
        };
        for &v in victims {
            if act.crash_now.len() < view.budget_left && view.is_alive(v) {
                act.crash_now.push(v);
            }
        }
        for (i, mc) in view.outbox.iter().enumerate() {
            if act.crash_now.contains(&mc.from) {
                for &q in &mc.to {
                    if self.coin(view.round, mc.from, q) {
                        act.deliver_from_crashed.push(MessageRef {
                            multicast: i,
                            receiver: q,
                        });
                    }
                }
            }
        }
        act
    }

    fn next_silent_action(&self, round: u64) -> Option<u64> {
        self.schedule.range(round + 1..).next().map(|(r, _)| *r)
    }
}

fn outbox_totals(view: &AdversaryView, weight: impl Fn(&Multicast) -> u64) -> Vec<(u64, ProcessId)> {
    let mut per = vec![0u64; view.n];
    for mc in view.outbox {
        per[mc.from.index()] += weight(mc);
    }
    let mut ranked: Vec<(u64, ProcessId)> = per
        .into_iter()
        .enumerate()
        .filter(|&(p, w)| w > 0 && view.crashed_at[p].is_none())
        .map(|(p, w)| (w, ProcessId(p as u32)))
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    ranked
}

/// Each round crashes the `rate` heaviest senders, delivering nothing.
#[derive(Debug, Clone)]
pub struct TargetedHeavySenders {
    pub rate: usize,
}

impl Adversary for TargetedHeavySenders {
    fn act(&mut self, view: &AdversaryView) -> AdversaryAction {
        let k = self.rate.min(view.budget_left);
        AdversaryAction {
            crash_now: outbox_totals(view, Multicast::bits)
                .into_iter()
                .take(k)
                .map(|(_, p)| p)
                .collect(),
            deliver_from_crashed: Vec::new(),
        }
    }
}

/// Crashes responders with the most pending requests while signalling and
/// lets every second of their responses through.
#[derive(Debug, Clone)]
pub struct SignalingDisruptor {
    pub rate: usize,
}

impl Adversary for SignalingDisruptor {
    fn act(&mut self, view: &AdversaryView) -> AdversaryAction {
        let is_response = |mc: &Multicast| matches!(*mc.payload, Payload::Response { .. });
        let k = self.rate.min(view.budget_left);
        let crash_now: Vec<ProcessId> = outbox_totals(view, |mc| if is_response(mc) { mc.to.len() as u64 } else { 0 })
            .into_iter()
            .take(k)
            .map(|(_, p)| p)
            .collect();
        let mut deliver_from_crashed = Vec::new();
        for (i, mc) in view.outbox.iter().enumerate() {
            if is_response(mc) && crash_now.contains(&mc.from) {
                let mut to = mc.to.clone();
                to.sort();
                deliver_from_crashed.extend(to.into_iter().skip(1).step_by(2).map(|receiver| MessageRef {
                    multicast: i,
                    receiver,
                }));
            }
        }
        AdversaryAction {
            crash_now,
            deliver_from_crashed,
        }
    }
}

/// Super-process structure known to the partition attack.
#[derive(Debug, Clone)]
pub struct GroupView {
    pub groups: Vec<Vec<ProcessId>>,
    pub neighbors: Vec<Vec<usize>>,
}

/// Knocks whole super-processes of one H-neighbourhood just below the
/// three-quarter alive mark, all at one round.
#[derive(Debug, Clone)]
pub struct SuperprocessPartition {
    targets: Vec<Vec<ProcessId>>,
    at_round: u64,
    done: bool,
}

impl SuperprocessPartition {
    pub fn new(layout: &GroupView, seed: u64, at_round: u64) -> Self {
        let x = layout.groups.len();
        let center = (sub_tag(seed, 0x9A27) % x as u64) as usize;
        let mut order = vec![center];
        let mut nb = layout.neighbors[center].clone();
        nb.sort();
        order.extend(nb.into_iter().filter(|&j| j != center));
        let targets = order
            .into_iter()
            .map(|g| {
                let members = &layout.groups[g];
                let need = members.len() / 4 + 1;
                members.iter().copied().take(need.min(members.len())).collect()
            })
            .collect();
        SuperprocessPartition {
            targets,
            at_round: at_round.max(1),
            done: false,
        }
    }
}

impl Adversary for SuperprocessPartition {
    fn act(&mut self, view: &AdversaryView) -> AdversaryAction {
        let mut act = AdversaryAction::default();
        if self.done || view.round < self.at_round {
            return act;
        }
        self.done = true;
        let mut left = view.budget_left;
        for group in &self.targets {
            let victims: Vec<ProcessId> = group.iter().copied().filter(|&p| view.is_alive(p)).collect();
            if victims.len() > left {
                break;
            }
            left -= victims.len();
            act.crash_now.extend(victims);
        }
        act
    }

    fn next_silent_action(&self, round: u64) -> Option<u64> {
        (!self.done).then_some(self.at_round.max(round + 1))
    }
}

/// Strategy names accepted in run configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StrategyKind {
    None,
    RandomOblivious,
    TargetedHeavySenders,
    SuperprocessPartition,
    SignalingDisruptor,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::None,
        StrategyKind::RandomOblivious,
        StrategyKind::TargetedHeavySenders,
        StrategyKind::SuperprocessPartition,
        StrategyKind::SignalingDisruptor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::None => "none",
            StrategyKind::RandomOblivious => "random_oblivious",
            StrategyKind::TargetedHeavySenders => "targeted_heavy_senders",
            StrategyKind::SuperprocessPartition => "superprocess_partition",
            StrategyKind::SignalingDisruptor => "signaling_disruptor",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = AdversaryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| AdversaryError::UnknownStrategy(s.to_string()))
    }
}

/// A strategy name plus its parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversarySpec {
    pub kind: StrategyKind,
    pub params: BTreeMap<String, String>,
}

impl AdversarySpec {
    pub fn new(kind: StrategyKind) -> Self {
        AdversarySpec {
            kind,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    fn param<T: FromStr>(&self, key: &str, default: T) -> Result<T, AdversaryError> {
        match self.params.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| AdversaryError::BadParam {
                key: key.to_string(),
                value: v.clone(),
            }),
        }
    }

    /// Short label used in result tables.
    pub fn label(&self) -> String {
        let mut s = self.kind.name().to_string();
        for (k, v) in &self.params {
            s.push_str(&format!(";{k}={v}"));
        }
        s
    }

    pub fn build(
        &self,
        n: usize,
        f: usize,
        seed: u64,
        layout: Option<&GroupView>,
    ) -> Result<Box<dyn Adversary>, AdversaryError> {
        Ok(match self.kind {
            StrategyKind::None => Box::new(NoCrashes),
            StrategyKind::RandomOblivious => {
                let count = self.param("count", f)?;
                let horizon = self.param("horizon", 4096u64)?;
                Box::new(RandomOblivious::new(seed, n, f, count, horizon)?)
            }
            StrategyKind::TargetedHeavySenders => Box::new(TargetedHeavySenders {
                rate: self.param("rate", 1)?,
            }),
            StrategyKind::SignalingDisruptor => Box::new(SignalingDisruptor {
                rate: self.param("rate", 1)?,
            }),
            StrategyKind::SuperprocessPartition => {
                let layout = layout.ok_or_else(|| AdversaryError::MissingLayout(self.kind.name().into()))?;
                Box::new(SuperprocessPartition::new(layout, seed, self.param("at_round", 1)?))
            }
        })
    }
}
