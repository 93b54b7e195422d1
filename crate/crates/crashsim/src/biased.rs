//! α-biased randomized consensus inside a group, with counting done by
//! fuzzy counting, a Monte-Carlo deadline and a flooding fallback.

use crate::engine::{sub_tag, Event, ProcCtx, Tag};
use crate::gossip::{fuzzy_counting, gossip_budget};
use crate::message::{Payload, ProcessId, RumorSet};
use crate::params::{Fraction, Profile};
use std::rc::Rc;

/// Tag of the system-wide alarm slots.
pub const ALARM_TAG: Tag = 0xA1A2_A1A2_A1A2_A1A2;
/// Tag of the system-wide fallback after an alarm.
pub const FALLBACK_TAG: Tag = 0xFA11_BAC0_FA11_BAC0;

/// Rounds of one alarm slot.
pub const ALARM_SLOT_ROUNDS: u64 = 2;

/// Raised when an alarm slot fired; the caller switches to the fallback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("alarm raised")]
pub struct Alarmed;

/// Everyone an alarm must reach.
#[derive(Debug, Clone)]
pub struct AlarmScope {
    pub everyone: Rc<Vec<ProcessId>>,
}

impl AlarmScope {
    pub fn new(everyone: Vec<ProcessId>) -> Self {
        AlarmScope {
            everyone: Rc::new(everyone),
        }
    }

    fn others(&self, me: ProcessId) -> Vec<ProcessId> {
        self.everyone.iter().copied().filter(|&q| q != me).collect()
    }
}

/// `⌈√(m / log₂ m)⌉`, with the logarithm clamped to at least 1.
pub fn direct_threshold(m: usize) -> u64 {
    let log = (m.max(1) as f64).log2().max(1.0);
    (m as f64 / log).sqrt().ceil() as u64
}

/// Counting phases before the Monte-Carlo deadline.
pub fn deadline_phases(m: usize, profile: &Profile) -> u64 {
    profile.c_mc * direct_threshold(m)
}

/// Fixed duration of one biased consensus instance over a group whose
/// nominal size is `m`.
pub fn consensus_budget(m: usize, profile: &Profile) -> u64 {
    let fc = gossip_budget(m, profile);
    let thr = direct_threshold(m);
    fc + deadline_phases(m, profile) * (fc + 1) + thr + 1 + ALARM_SLOT_ROUNDS
}

/// Flood the smallest `(id, bit)` pair seen for `rounds` rounds and
/// return its bit. A process resends only when its minimum changed.
pub async fn flood_min(ctx: &ProcCtx, tag: Tag, others: &[ProcessId], bit: bool, rounds: u64) -> bool {
    let mut best = (ctx.pid().0, bit);
    let mut changed = true;
    for _ in 0..rounds {
        if changed {
            ctx.send(tag, others.to_vec(), Payload::RumorSet(RumorSet::IdValues(vec![best])));
        }
        changed = false;
        for d in ctx.next(tag).await {
            if let Payload::RumorSet(RumorSet::IdValues(pairs)) = &*d.payload {
                for &pair in pairs {
                    if pair.0 < best.0 {
                        best = pair;
                        changed = true;
                    }
                }
            }
        }
    }
    best.1
}

/// Two-round alarm slot. Returns whether this process raised, heard or
/// relayed an alarm.
pub async fn alarm_slot(ctx: &ProcCtx, scope: &AlarmScope, raise: bool) -> bool {
    if raise {
        ctx.note(Event::Alarm);
        ctx.send(ALARM_TAG, scope.others(ctx.pid()), Payload::Alarm);
    }
    let heard = !ctx.next(ALARM_TAG).await.is_empty();
    if heard && !raise {
        ctx.send(ALARM_TAG, scope.others(ctx.pid()), Payload::Alarm);
    }
    let relayed = !ctx.next(ALARM_TAG).await.is_empty();
    raise || heard || relayed
}

/// Sit out `rounds` rounds whose last two are an alarm slot.
pub async fn idle_listening(ctx: &ProcCtx, scope: &AlarmScope, rounds: u64) -> Result<(), Alarmed> {
    debug_assert!(rounds >= ALARM_SLOT_ROUNDS);
    let start = ctx.round();
    ctx.idle_until(start + rounds - ALARM_SLOT_ROUNDS).await;
    if alarm_slot(ctx, scope, false).await {
        Err(Alarmed)
    } else {
        Ok(())
    }
}

/// System-wide flooding fallback, `|scope| + 1` rounds.
pub async fn global_fallback(ctx: &ProcCtx, scope: &AlarmScope, bit: bool) -> bool {
    let rounds = scope.everyone.len() as u64 + 1;
    flood_min(ctx, FALLBACK_TAG, &scope.others(ctx.pid()), bit, rounds).await
}

/// A consensus group and the nominal size that fixes its schedule.
#[derive(Debug, Clone, Copy)]
pub struct Group<'a> {
    pub members: &'a [ProcessId],
    pub budget_size: usize,
}

impl Group<'_> {
    pub fn nominal(&self) -> usize {
        self.budget_size.max(self.members.len())
    }
}

/// How the loop counts choices. `Fuzzy` is the protocol; `Broadcast`
/// is the all-to-all reference used only to compare costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Counting {
    Fuzzy,
    Broadcast,
}

/// One α-biased consensus instance. Lasts exactly
/// [`consensus_budget`]`(group.nominal())` rounds; ends with an alarm slot.
pub async fn biased_consensus(
    ctx: &ProcCtx,
    tag: Tag,
    group: Group<'_>,
    bit: bool,
    alpha: Fraction,
    profile: &Profile,
    scope: &AlarmScope,
) -> Result<bool, Alarmed> {
    biased_consensus_with(ctx, tag, group, bit, alpha, profile, scope, Counting::Fuzzy).await
}

#[allow(clippy::too_many_arguments)]
pub async fn biased_consensus_with(
    ctx: &ProcCtx,
    tag: Tag,
    group: Group<'_>,
    bit: bool,
    alpha: Fraction,
    profile: &Profile,
    scope: &AlarmScope,
    counting: Counting,
) -> Result<bool, Alarmed> {
    let start = ctx.round();
    let m = group.members.len() as u64;
    let nominal = group.nominal();
    let fc_rounds = gossip_budget(nominal, profile);
    let thr = direct_threshold(group.members.len());
    let budget = consensus_budget(nominal, profile);
    let me = ctx.pid();
    let others: Vec<ProcessId> = group.members.iter().copied().filter(|&q| q != me).collect();
    let count = |phase: u64, b: bool| {
        let others = &others;
        async move {
            let t = sub_tag(tag, phase);
            match counting {
                Counting::Fuzzy => fuzzy_counting(ctx, t, group.members, b, profile, nominal).await,
                Counting::Broadcast => {
                    let began = ctx.round();
                    let c = broadcast_count(ctx, t, others, b).await;
                    ctx.idle_until(began + fc_rounds).await;
                    c
                }
            }
        }
    };
    ctx.snapshot_mut(|s| s.candidate = Some(bit));

    let gate = count(0, bit).await;
    // nobody reporting a 0 keeps the bit, as in the loop's Z = 0 rule
    let mut b = bit && (alpha.reached(gate.ones as u64, m) || gate.zeros == 0);
    let mut decided = false;
    // N^{r-3}, N^{r-2}, N^{r-1}
    let mut history = [m as i64; 3];
    let mut outcome = None;
    let direct_tag = sub_tag(tag, u64::MAX);
    let flood_tag = sub_tag(tag, u64::MAX - 1);
    for phase in 0..deadline_phases(nominal, profile) {
        ctx.snapshot_mut(|s| s.candidate = Some(b));
        let c = count(phase + 1, b).await;
        let (ones, zeros) = (c.ones as i64, c.zeros as i64);
        let total = ones + zeros;
        let direct = (total as u64) < thr;
        if direct {
            ctx.send(direct_tag, others.clone(), Payload::ValueBit { bit: b });
        }
        let got = ctx.next(direct_tag).await;
        if direct || !got.is_empty() {
            outcome = Some(flood_min(ctx, flood_tag, &others, b, thr + 1).await);
            break;
        }
        if decided {
            let diff = history[0] - total;
            if 10 * diff <= history[1] {
                outcome = Some(b);
                break;
            }
            decided = false;
        }
        if 10 * ones > 7 * total - 1 {
            b = true;
            decided = true;
        } else if 10 * ones > 6 * total - 1 || zeros == 0 {
            b = true;
        } else if 10 * ones < 4 * total - 1 {
            b = false;
            decided = true;
        } else if 10 * ones < 5 * total - 1 {
            b = false;
        } else {
            b = ctx.random_bit();
        }
        history = [history[1], history[2], total];
    }
    if let Some(v) = outcome {
        ctx.snapshot_mut(|s| s.candidate = Some(v));
    }
    ctx.idle_until(start + budget - ALARM_SLOT_ROUNDS).await;
    if alarm_slot(ctx, scope, outcome.is_none()).await {
        return Err(Alarmed);
    }
    Ok(outcome.expect("no alarm means decided"))
}

/// All-to-all counting reference: one round of value bits.
async fn broadcast_count(ctx: &ProcCtx, tag: Tag, others: &[ProcessId], b: bool) -> crate::gossip::FuzzyCount {
    ctx.send(tag, others.to_vec(), Payload::ValueBit { bit: b });
    let mut c = crate::gossip::FuzzyCount {
        zeros: (!b) as u32,
        ones: b as u32,
    };
    for d in ctx.next(tag).await {
        if let Payload::ValueBit { bit } = *d.payload {
            if bit {
                c.ones += 1;
            } else {
                c.zeros += 1;
            }
        }
    }
    c
}

/// Biased consensus with the alarm path resolved: an alarm sends every
/// alarmed member of `scope` into [`global_fallback`].
#[allow(clippy::too_many_arguments)]
pub async fn biased_consensus_or_fallback(
    ctx: &ProcCtx,
    tag: Tag,
    group: Group<'_>,
    bit: bool,
    alpha: Fraction,
    profile: &Profile,
    scope: &AlarmScope,
    counting: Counting,
) -> bool {
    match biased_consensus_with(ctx, tag, group, bit, alpha, profile, scope, counting).await {
        Ok(v) => v,
        Err(Alarmed) => global_fallback(ctx, scope, bit).await,
    }
}
