//! Consensus over super-processes: groups agree internally, flood ones
//! along an overlay of groups, check that their neighbourhood is alive,
//! then spread the confirmed value with one system-wide gossip.

use crate::adversary::GroupView;
use crate::biased::{
    alarm_slot, biased_consensus, consensus_budget, global_fallback, idle_listening, AlarmScope, Alarmed, Group,
};
use crate::engine::{join_all, sub_tag, Event, ProcCtx, Tag};
use crate::gossip::{gossip, gossip_budget};
use crate::message::{IdSet, Payload, ProcessId, RumorSet, Value};
use crate::overlay::{cached_overlay, OverlayGraph};
use crate::params::{Fraction, Phase2Rumors, Profile};
use std::rc::Rc;

const PC_TAG: Tag = 0x5C5C_0000_0000_0001;
const SUPER_GRAPH_SALT: u64 = 0x4855;
const EDGE_GRAPH_SALT: u64 = 0x5345;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LayoutError {
    #[error("group count {x} outside [1, {n}]")]
    GroupCount { x: usize, n: usize },
}

/// Partition of `0..n` into id blocks of `⌈n/x⌉` (the last may be short).
#[derive(Debug, Clone)]
pub struct Layout {
    size: usize,
    groups: Vec<Vec<ProcessId>>,
    everyone: Vec<ProcessId>,
}

impl Layout {
    pub fn new(n: usize, x: usize) -> Result<Self, LayoutError> {
        if x == 0 || x > n {
            return Err(LayoutError::GroupCount { x, n });
        }
        let size = n.div_ceil(x);
        let everyone: Vec<ProcessId> = (0..n).map(ProcessId::from).collect();
        let groups = everyone.chunks(size).map(<[ProcessId]>::to_vec).collect();
        Ok(Layout { size, groups, everyone })
    }

    pub fn n(&self) -> usize {
        self.everyone.len()
    }

    /// Nominal group size; fixes every group's schedule.
    pub fn group_size(&self) -> usize {
        self.size
    }

    pub fn count(&self) -> usize {
        self.groups.len()
    }

    pub fn members(&self, g: usize) -> &[ProcessId] {
        &self.groups[g]
    }

    pub fn group_of(&self, p: ProcessId) -> usize {
        p.index() / self.size
    }

    pub fn everyone(&self) -> &[ProcessId] {
        &self.everyone
    }

    /// Overlay of groups for epoch `epoch`; expansion shrinks by 9/10 per
    /// epoch, which densifies it.
    pub fn super_graph(&self, profile: &Profile, epoch: u32) -> Rc<OverlayGraph> {
        let x = self.count();
        let k = x as f64 / 3.0 * 0.9f64.powi(epoch as i32);
        cached_overlay(
            x,
            k,
            profile.group_delta(x),
            profile.group_gamma(x),
            sub_tag(profile.overlay_seed, SUPER_GRAPH_SALT),
            profile.c_p,
        )
    }

    /// Members of groups `i` and `j`, lower group first.
    pub fn edge_union(&self, i: usize, j: usize) -> Vec<ProcessId> {
        let (a, b) = (i.min(j), i.max(j));
        let mut u = self.groups[a].clone();
        u.extend_from_slice(&self.groups[b]);
        u
    }

    /// Bipartite-ish contact graph over [`Layout::edge_union`].
    pub fn edge_graph(&self, i: usize, j: usize, profile: &Profile) -> Rc<OverlayGraph> {
        let m = self.groups[i].len() + self.groups[j].len();
        let nominal = 2 * self.size;
        cached_overlay(
            m,
            nominal as f64 / 3.0,
            profile.delta(nominal),
            profile.gamma(nominal),
            sub_tag(profile.overlay_seed, EDGE_GRAPH_SALT),
            profile.c_p,
        )
    }

    /// Members of group `j` adjacent to `p` in the contact graph of its
    /// group and `j`.
    pub fn contacts(&self, p: ProcessId, j: usize, profile: &Profile) -> Vec<ProcessId> {
        let g = self.group_of(p);
        let union = self.edge_union(g, j);
        let graph = self.edge_graph(g, j, profile);
        let local = union.iter().position(|&q| q == p).expect("member of its own union");
        graph
            .neighbors(local as u32)
            .iter()
            .map(|&u| union[u as usize])
            .filter(|&q| self.group_of(q) == j)
            .collect()
    }

    /// What the partition adversary gets to see.
    pub fn group_view(&self, profile: &Profile) -> GroupView {
        let h = self.super_graph(profile, 0);
        GroupView {
            groups: self.groups.clone(),
            neighbors: (0..self.count())
                .map(|g| h.neighbors(g as u32).iter().map(|&j| j as usize).collect())
                .collect(),
        }
    }
}

/// Shared, read-only context of one consensus run.
#[derive(Debug, Clone)]
pub struct PcSetup {
    pub layout: Rc<Layout>,
    pub profile: Rc<Profile>,
    pub scope: AlarmScope,
}

impl PcSetup {
    pub fn new(n: usize, x: usize, profile: Profile) -> Result<Self, LayoutError> {
        let layout = Layout::new(n, x)?;
        let scope = AlarmScope::new(layout.everyone().to_vec());
        Ok(PcSetup {
            layout: Rc::new(layout),
            profile: Rc::new(profile),
            scope,
        })
    }
}

/// Per-process view of one epoch.
struct Epoch<'a> {
    ctx: &'a ProcCtx,
    setup: &'a PcSetup,
    index: u32,
    group: usize,
    tag: Tag,
    h: Rc<OverlayGraph>,
}

impl<'a> Epoch<'a> {
    fn new(ctx: &'a ProcCtx, setup: &'a PcSetup, index: u32) -> Self {
        Epoch {
            ctx,
            setup,
            index,
            group: setup.layout.group_of(ctx.pid()),
            tag: sub_tag(PC_TAG, index as u64),
            h: setup.layout.super_graph(&setup.profile, index),
        }
    }

    fn group(&self) -> Group<'a> {
        Group {
            members: self.setup.layout.members(self.group),
            budget_size: self.setup.layout.group_size(),
        }
    }

    fn alpha(&self, num: u64, den: u64) -> Fraction {
        Fraction::new(num, den).shrink(self.index)
    }

    fn neighbor_groups(&self) -> Vec<usize> {
        self.h.neighbors(self.group as u32).iter().map(|&j| j as usize).collect()
    }

    async fn consensus(&self, tag: Tag, bit: bool, alpha: Fraction) -> Result<bool, Alarmed> {
        let s = self.setup;
        biased_consensus(self.ctx, tag, self.group(), bit, alpha, &s.profile, &s.scope).await
    }

    fn consensus_rounds(&self) -> u64 {
        consensus_budget(self.setup.layout.group_size(), &self.setup.profile)
    }

    fn set_state(&self, candidate: bool, active: bool) {
        self.ctx.snapshot_mut(|s| {
            s.candidate = Some(candidate);
            s.active = active;
        });
    }

    /// Group agreement, then flooding of ones along the group overlay.
    async fn phase1(&self, bit: bool, current: &mut bool) -> Result<bool, Alarmed> {
        let ctx = self.ctx;
        let tag = sub_tag(self.tag, 1);
        let slot = sub_tag(tag, u64::MAX);
        let x = self.setup.layout.count() as u64;
        let targets: Vec<ProcessId> = self
            .neighbor_groups()
            .into_iter()
            .flat_map(|j| self.setup.layout.contacts(ctx.pid(), j, &self.setup.profile))
            .collect();

        let mut cand = self.consensus(sub_tag(tag, 0), bit, self.alpha(2, 3)).await?;
        let mut active = true;
        *current = cand;
        self.set_state(cand, active);
        for it in 1..=x + 1 {
            if active && cand {
                cand = self.consensus(sub_tag(tag, it), cand, self.alpha(2, 3)).await?;
            } else {
                idle_listening(ctx, &self.setup.scope, self.consensus_rounds()).await?;
            }
            if active && cand {
                ctx.send(slot, targets.clone(), Payload::ValueBit { bit: true });
                active = false;
                ctx.note(Event::Phase1Send {
                    epoch: self.index,
                    group: self.group as u32,
                    iteration: it as u32,
                });
            }
            let got = ctx.next(slot).await;
            if got.iter().any(|d| matches!(*d.payload, Payload::ValueBit { bit: true })) {
                cand = true;
            }
            *current = cand;
            self.set_state(cand, active);
        }
        let value = self.consensus(sub_tag(tag, x + 2), cand, self.alpha(1, 3)).await?;
        *current = value;
        ctx.note(Event::Phase1Result {
            epoch: self.index,
            group: self.group as u32,
            value,
        });
        Ok(value)
    }

    /// Head-count, then `γ_x` stages of neighbourhood gossip.
    async fn phase2(&self) -> Result<bool, Alarmed> {
        let ctx = self.ctx;
        let layout = &self.setup.layout;
        let profile = &self.setup.profile;
        let x = layout.count();
        let tag = sub_tag(self.tag, 2);
        let pair_rounds = gossip_budget(2 * layout.group_size(), profile);
        let threshold = profile.group_delta(x) as usize;
        let rumor = match profile.phase2_rumors {
            Phase2Rumors::SuperIds => RumorSet::Ids(IdSet::singleton(x, self.group as u32)),
            Phase2Rumors::RawIds => RumorSet::Ids(IdSet::singleton(layout.n(), ctx.pid().0)),
        };
        let neighbors = self.neighbor_groups();
        let unions: Vec<Vec<ProcessId>> = neighbors.iter().map(|&j| layout.edge_union(self.group, j)).collect();

        let mut active = self.consensus(sub_tag(tag, 0), true, self.alpha(3, 4)).await?;
        ctx.snapshot_mut(|s| s.active = active);
        for stage in 1..=profile.group_gamma(x) as u64 {
            let stage_tag = sub_tag(tag, stage);
            if active {
                let began = ctx.round();
                let runs = unions
                    .iter()
                    .zip(&neighbors)
                    .map(|(members, &j)| {
                        let key = (self.group.min(j) as u64) << 32 | self.group.max(j) as u64;
                        gossip(ctx, sub_tag(stage_tag, key), members, rumor.clone(), profile, 2 * layout.group_size())
                    })
                    .collect();
                let mut seen = rumor.clone();
                for r in join_all(runs).await {
                    seen.absorb(&r);
                }
                ctx.idle_until(began + pair_rounds).await;
                let many = seen.len() > threshold;
                active = self.consensus(sub_tag(stage_tag, 1), many, self.alpha(2, 3)).await?;
                ctx.snapshot_mut(|s| s.active = active);
            } else {
                ctx.idle(pair_rounds).await;
                idle_listening(ctx, &self.setup.scope, self.consensus_rounds()).await?;
            }
        }
        ctx.note(Event::Phase2Result {
            epoch: self.index,
            group: self.group as u32,
            active,
        });
        Ok(active)
    }

    /// System-wide gossip of confirmed values; `None` when only ⊥ arrived.
    async fn phase3(&self, confirmed: bool, value: bool) -> Option<bool> {
        let layout = &self.setup.layout;
        let rumor = if confirmed {
            RumorSet::values(&[Value::from_bit(value)])
        } else {
            RumorSet::values(&[Value::Bottom])
        };
        let got = gossip(
            self.ctx,
            sub_tag(self.tag, 3),
            layout.everyone(),
            rumor,
            &self.setup.profile,
            layout.n(),
        )
        .await;
        let decision = got.value_list().into_iter().find_map(Value::bit);
        self.ctx.note(Event::Phase3Result {
            epoch: self.index,
            value: decision,
        });
        decision
    }

    async fn run(&self, bit: bool, current: &mut bool) -> Result<EpochOutcome, Alarmed> {
        let candidate = self.phase1(bit, current).await?;
        let confirmed = self.phase2().await?;
        let decision = self.phase3(confirmed, candidate).await;
        if let Some(v) = decision {
            *current = v;
        }
        Ok(EpochOutcome { candidate, decision })
    }

    /// Two rounds in which ⊥-holders ask their group for a value.
    async fn adopt(&self, own: Option<bool>) -> Option<bool> {
        let ctx = self.ctx;
        let tag = sub_tag(self.tag, 5);
        let others: Vec<ProcessId> = self.group().members.iter().copied().filter(|&q| q != ctx.pid()).collect();
        if own.is_none() {
            ctx.send(tag, others, Payload::Request { bit: false });
        }
        let requests = ctx.next(tag).await;
        if let Some(v) = own {
            let askers = requests
                .iter()
                .filter(|d| matches!(*d.payload, Payload::Request { .. }))
                .map(|d| d.from)
                .collect();
            ctx.send(tag, askers, Payload::ValueBit { bit: v });
        }
        let replies = ctx.next(tag).await;
        own.or_else(|| {
            replies.iter().find_map(|d| match *d.payload {
                Payload::ValueBit { bit } => Some(bit),
                _ => None,
            })
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct EpochOutcome {
    candidate: bool,
    decision: Option<bool>,
}

/// The three-phase protocol, safe while fewer than `n/10` processes crash.
/// An undecided process raises a final alarm, which sends everyone alarmed
/// into the global fallback.
pub async fn parameterized_consensus(ctx: ProcCtx, setup: Rc<PcSetup>, bit: bool) -> bool {
    let mut current = bit;
    let epoch = Epoch::new(&ctx, &setup, 0);
    match epoch.run(bit, &mut current).await {
        Ok(out) => {
            if alarm_slot(&ctx, &setup.scope, out.decision.is_none()).await {
                global_fallback(&ctx, &setup.scope, out.decision.unwrap_or(out.candidate)).await
            } else {
                out.decision.expect("no alarm means decided")
            }
        }
        Err(Alarmed) => global_fallback(&ctx, &setup.scope, current).await,
    }
}

/// Epoch-based variant for any `f < n`. A group whose members mostly
/// decided stops; the rest retry with denser overlays and looser
/// thresholds.
pub async fn parameterized_consensus_star(ctx: ProcCtx, setup: Rc<PcSetup>, bit: bool) -> bool {
    let mut input = bit;
    for e in 0..setup.profile.star_epoch_count(setup.layout.n()) {
        let epoch = Epoch::new(&ctx, &setup, e);
        let mut current = input;
        let out = match epoch.run(input, &mut current).await {
            Ok(out) => out,
            Err(Alarmed) => return global_fallback(&ctx, &setup.scope, current).await,
        };
        let retry = match epoch
            .consensus(sub_tag(epoch.tag, 4), out.decision.is_none(), Fraction::new(1, 2))
            .await
        {
            Ok(v) => v,
            Err(Alarmed) => return global_fallback(&ctx, &setup.scope, out.decision.unwrap_or(out.candidate)).await,
        };
        let value = epoch.adopt(out.decision).await;
        if !retry {
            if let Some(v) = value {
                return v;
            }
        }
        input = value.unwrap_or(out.candidate);
    }
    alarm_slot(&ctx, &setup.scope, true).await;
    global_fallback(&ctx, &setup.scope, input).await
}
