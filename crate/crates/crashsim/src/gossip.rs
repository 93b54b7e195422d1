//! Deterministic crash-tolerant rumor spreading and fuzzy counting.
//!
//! Every procedure here has a duration that depends only on the instance
//! size and the profile; callers rely on that to stay in lockstep.

use crate::engine::{sub_tag, Event, ProcCtx, Tag};
use crate::message::{CountRumor, Payload, ProcessId, RumorSet};
use crate::overlay::{build_family, FamilyKind, GraphFamily, OverlayGraph};
use crate::params::Profile;
use crate::signaling::{local_signaling, signaling_round_budget, SignalingView};
use serde::{Deserialize, Serialize};
use std::rc::Rc;

const OUT_FAMILY_SEED: u64 = 0x0_u64;
const IN_FAMILY_SEED: u64 = 0x1_u64;

/// Rounds of one bipartite gossip instance over `m` processes.
pub fn bipartite_budget(m: usize, profile: &Profile) -> u64 {
    let s = profile.bg_shape(m);
    let per_rep = 2 + signaling_round_budget(s.gamma);
    let per_iteration = 2 + 2 * s.floods as u64 + s.signal_reps as u64 * per_rep;
    s.epochs as u64 * s.iterations as u64 * per_iteration
}

/// Rounds of recursive gossip over `m` processes:
/// `T(1) = 0`, `T(m) = T(⌈m/2⌉) + T_bg(m)`.
pub fn gossip_budget(m: usize, profile: &Profile) -> u64 {
    let mut total = 0;
    let mut size = m;
    while size > 1 {
        total += bipartite_budget(size, profile);
        size = size.div_ceil(2);
    }
    total
}

/// Suspected-faulty processes of one instance, indexed by process id.
pub struct Suspects(Vec<bool>);

impl Suspects {
    pub fn new(n: usize) -> Self {
        Suspects(vec![false; n])
    }

    pub fn contains(&self, p: ProcessId) -> bool {
        self.0[p.index()]
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&s| s).count()
    }
}

/// Two-round exchange: send `R` to unsuspected neighbours, answer every
/// request with the merged `R`, suspect neighbours that did not answer.
pub async fn exchange(
    ctx: &ProcCtx,
    tag: Tag,
    neighbors: &[ProcessId],
    rumors: &mut RumorSet,
    suspects: &mut Suspects,
) {
    let targets: Vec<ProcessId> = neighbors.iter().copied().filter(|&q| !suspects.contains(q)).collect();
    ctx.send(tag, targets.clone(), Payload::RumorSet(rumors.clone()));
    let requests = ctx.next(tag).await;
    let mut requesters = Vec::with_capacity(requests.len());
    for d in &requests {
        if let Payload::RumorSet(r) = &*d.payload {
            rumors.absorb(r);
            requesters.push(d.from);
        }
    }
    ctx.send(tag, requesters, Payload::RumorSet(rumors.clone()));
    let replies = ctx.next(tag).await;
    let mut answered: Vec<ProcessId> = Vec::with_capacity(replies.len());
    for d in &replies {
        if let Payload::RumorSet(r) = &*d.payload {
            rumors.absorb(r);
            answered.push(d.from);
        }
    }
    answered.sort_unstable();
    for q in targets {
        if answered.binary_search(&q).is_err() {
            suspects.0[q.index()] = true;
        }
    }
}

fn neighbors_in(g: &OverlayGraph, members: &[ProcessId], local: usize) -> Vec<ProcessId> {
    g.neighbors(local as u32).iter().map(|&u| members[u as usize]).collect()
}

/// Graph families used by one bipartite instance, as seen from one side.
pub struct BipartiteGraphs {
    pub out: Rc<GraphFamily>,
    pub own_in: Rc<GraphFamily>,
}

pub fn bipartite_graphs(m: usize, own_len: usize, side: u8, profile: &Profile) -> BipartiteGraphs {
    let s = profile.bg_shape(m);
    let out = build_family(
        FamilyKind::Out,
        m,
        m,
        s.t,
        s.delta,
        s.gamma,
        sub_tag(profile.overlay_seed, OUT_FAMILY_SEED),
        profile.c_p,
    );
    let own_in = build_family(
        FamilyKind::In,
        own_len,
        m,
        s.t,
        s.delta,
        s.gamma,
        sub_tag(sub_tag(profile.overlay_seed, IN_FAMILY_SEED), side as u64),
        profile.c_p,
    );
    BipartiteGraphs { out, own_in }
}

/// Gossip between two halves `p1 < p2` (sorted, disjoint). Returns the
/// caller's final rumor set. Lasts exactly [`bipartite_budget`] rounds.
pub async fn bipartite_gossip(
    ctx: &ProcCtx,
    tag: Tag,
    p1: &[ProcessId],
    p2: &[ProcessId],
    mut rumors: RumorSet,
    profile: &Profile,
) -> RumorSet {
    let m = p1.len() + p2.len();
    let shape = profile.bg_shape(m);
    let me = ctx.pid();
    let (side, own) = match p1.binary_search(&me) {
        Ok(_) => (0u8, p1),
        Err(_) => (1u8, p2),
    };
    let local = own.binary_search(&me).expect("caller belongs to a half");
    let all: Vec<ProcessId> = p1.iter().chain(p2).copied().collect();
    let global = all.binary_search(&me).expect("halves are ordered");
    let graphs = bipartite_graphs(m, own.len(), side, profile);
    let top = shape.t + 1;
    // signaling level s probes G_in(s-1); level t+2 is the clique again
    let probe: Vec<Rc<OverlayGraph>> = (0..=top + 1)
        .map(|s| graphs.own_in.graphs[(s.max(1) - 1).min(top) as usize].clone())
        .collect();
    let at = |base: u32, off: u32| (base + off).min(top) as usize;
    let mut suspects = Suspects::new(ctx.n());
    let mut level: u32 = 0;
    let sig_tag = sub_tag(tag, 1);
    for _ in 0..shape.epochs {
        for _ in 0..shape.iterations {
            let nb = neighbors_in(graphs.out.level(at(level, profile.out_offset)), &all, global);
            exchange(ctx, tag, &nb, &mut rumors, &mut suspects).await;
            for _ in 0..shape.floods {
                let nb = neighbors_in(graphs.own_in.level(at(level, profile.flood_offset)), own, local);
                exchange(ctx, tag, &nb, &mut rumors, &mut suspects).await;
            }
            for _ in 0..shape.signal_reps {
                let nb = neighbors_in(graphs.own_in.level(at(level, profile.local_offset)), own, local);
                exchange(ctx, tag, &nb, &mut rumors, &mut suspects).await;
                let view = SignalingView {
                    members: own,
                    local,
                    graphs: &probe,
                };
                let start = (level + 1) as u8;
                let out = local_signaling(ctx, sig_tag, view, shape.delta, shape.gamma, start, &mut rumors).await;
                if !out.survived && level < top {
                    level += 1;
                    ctx.note(Event::LevelUp {
                        instance: tag,
                        first: all[0],
                        side,
                        size: m as u32,
                        level: level as u8,
                    });
                }
            }
        }
    }
    ctx.snapshot_mut(|s| s.level = None);
    rumors
}

/// The chain of splits the caller takes part in, outermost first.
fn split_chain(members: &[ProcessId], me: ProcessId) -> Vec<(&[ProcessId], &[ProcessId])> {
    let mut chain = Vec::new();
    let mut group = members;
    while group.len() > 1 {
        let (a, b) = group.split_at(group.len().div_ceil(2));
        chain.push((a, b));
        group = if a.binary_search(&me).is_ok() { a } else { b };
    }
    chain
}

/// Recursive gossip over sorted `members`, padded to the duration of an
/// instance of `budget_size ≥ members.len()` processes.
pub async fn gossip(
    ctx: &ProcCtx,
    tag: Tag,
    members: &[ProcessId],
    rumor: RumorSet,
    profile: &Profile,
    budget_size: usize,
) -> RumorSet {
    let start = ctx.round();
    let mut rumors = rumor;
    let chain = split_chain(members, ctx.pid());
    for (depth, (a, b)) in chain.iter().enumerate().rev() {
        ctx.idle_until(start + gossip_budget(a.len(), profile)).await;
        rumors = bipartite_gossip(ctx, sub_tag(tag, depth as u64), a, b, rumors, profile).await;
    }
    ctx.idle_until(start + gossip_budget(budget_size.max(members.len()), profile))
        .await;
    rumors
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzyCount {
    pub zeros: u32,
    pub ones: u32,
}

impl FuzzyCount {
    pub fn total(&self) -> u32 {
        self.zeros + self.ones
    }
}

/// Count zeros and ones among the members' inputs. Same schedule as
/// [`gossip`].
pub async fn fuzzy_counting(
    ctx: &ProcCtx,
    tag: Tag,
    members: &[ProcessId],
    bit: bool,
    profile: &Profile,
    budget_size: usize,
) -> FuzzyCount {
    let start = ctx.round();
    let me = ctx.pid();
    let mut own = FuzzyCount {
        zeros: (!bit) as u32,
        ones: bit as u32,
    };
    let chain = split_chain(members, me);
    for (depth, (a, b)) in chain.iter().enumerate().rev() {
        ctx.idle_until(start + gossip_budget(a.len(), profile)).await;
        let side = a.binary_search(&me).is_err() as u8;
        let rumor = RumorSet::counts(CountRumor {
            side,
            zeros: own.zeros,
            ones: own.ones,
        });
        let learned = bipartite_gossip(ctx, sub_tag(tag, depth as u64), a, b, rumor, profile).await;
        if let RumorSet::Counts(pairs) = learned {
            if let Some(other) = pairs.iter().find(|c| c.side != side) {
                own.zeros += other.zeros;
                own.ones += other.ones;
            }
        }
    }
    ctx.idle_until(start + gossip_budget(budget_size.max(members.len()), profile))
        .await;
    own
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::NoCrashes;
    use crate::engine::{Sim, SimConfig};
    use crate::message::{IdSet, Value};

    fn ids(n: usize) -> Vec<ProcessId> {
        (0..n).map(ProcessId::from).collect()
    }

    #[test]
    fn budgets_follow_the_recurrence() {
        let p = Profile::desk();
        assert_eq!(gossip_budget(1, &p), 0);
        assert_eq!(gossip_budget(2, &p), bipartite_budget(2, &p));
        assert_eq!(gossip_budget(5, &p), bipartite_budget(5, &p) + bipartite_budget(3, &p) + bipartite_budget(2, &p));
        // desk at m=2: t=1, γ=1, 2 epochs · 3 iterations · (2 + 2 + 2·(2+2))
        assert_eq!(bipartite_budget(2, &p), 72);
        let paper = Profile::paper();
        // m=4: t=2, γ=4, 4 epochs · 3 · (2 + 2·9 + 4·(2+8))
        assert_eq!(bipartite_budget(4, &paper), 4 * 3 * (2 + 18 + 40));
    }

    #[test]
    fn crash_free_exchange_is_symmetric() {
        let mut sim = Sim::new(SimConfig::new(2, 0, 0), Box::new(NoCrashes));
        sim.spawn_all(|ctx| async move {
            let p = ctx.pid();
            let other = ProcessId(1 - p.0);
            let mut r = RumorSet::Ids(IdSet::singleton(2, p.0));
            let mut s = Suspects::new(2);
            exchange(&ctx, 3, &[other], &mut r, &mut s).await;
            (r, s.count())
        });
        for (r, suspected) in sim.run().unwrap().outputs.into_iter().flatten() {
            assert_eq!(r.len(), 2);
            assert_eq!(suspected, 0);
        }
    }

    #[test]
    fn crash_free_gossip_spreads_everything_in_budget() {
        let p = Profile::desk();
        for n in [1usize, 4, 7, 16] {
            let mut sim = Sim::new(SimConfig::new(n, 0, 0), Box::new(NoCrashes));
            let members = Rc::new(ids(n));
            let prof = Rc::new(p.clone());
            sim.spawn_all(|ctx| {
                let members = members.clone();
                let prof = prof.clone();
                async move {
                    let r = RumorSet::Ids(IdSet::singleton(n, ctx.pid().0));
                    gossip(&ctx, 9, &members, r, &prof, n).await
                }
            });
            let res = sim.run().unwrap();
            assert_eq!(res.metrics.rounds, gossip_budget(n, &p), "n = {n}");
            for r in res.outputs.into_iter().flatten() {
                assert_eq!(r.len(), n);
            }
        }
    }

    #[test]
    fn value_gossip_and_exact_crash_free_counts() {
        let p = Rc::new(Profile::desk());
        let members = Rc::new(ids(4));
        let mut sim = Sim::new(SimConfig::new(4, 0, 0), Box::new(NoCrashes));
        sim.spawn_all(|ctx| {
            let (p, members) = (p.clone(), members.clone());
            async move {
                let bit = ctx.pid().0 < 2;
                let c = fuzzy_counting(&ctx, 1, &members, bit, &p, 4).await;
                let v = gossip(&ctx, 2, &members, RumorSet::values(&[Value::from_bit(bit)]), &p, 4).await;
                (c, v)
            }
        });
        for (c, v) in sim.run().unwrap().outputs.into_iter().flatten() {
            assert_eq!(c, FuzzyCount { zeros: 2, ones: 2 });
            assert_eq!(v.value_list(), vec![Value::Zero, Value::One]);
        }
    }

    #[test]
    fn singleton_count_is_own_bit() {
        let p = Rc::new(Profile::desk());
        let mut sim = Sim::new(SimConfig::new(1, 0, 0), Box::new(NoCrashes));
        sim.spawn_all(|ctx| {
            let p = p.clone();
            async move { fuzzy_counting(&ctx, 1, &[ProcessId(0)], true, &p, 1).await }
        });
        let out = sim.run().unwrap().outputs;
        assert_eq!(out[0], Some(FuzzyCount { zeros: 0, ones: 1 }));
    }
}
