//! Shared fixtures for integration tests.
#![allow(dead_code)]

use crashsim::adversary::RandomOblivious;
use crashsim::message::{IdSet, ProcessId, RumorSet};
use crashsim::overlay::{build_family, dense_neighborhood, find_survival_set, FamilyKind, OverlayGraph};
use crashsim::signaling::{local_signaling, SignalingOutcome, SignalingView};
use crashsim::{Sim, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::rc::Rc;

/// One randomized local-signaling instance and what the process-level
/// oracles say about it.
#[derive(Debug, Default, Clone)]
pub struct SignalingCheck {
    pub n: usize,
    pub seed: u64,
    /// Property 1: dense neighbourhood in the end set, yet dropped a level.
    pub dense_but_dropped: Vec<u32>,
    /// Property 2: survived without a dense neighbourhood whose rumors it holds.
    pub survived_without_evidence: Vec<u32>,
    /// Property 3: in the survival set at its start level, yet dropped.
    pub core_but_dropped: Vec<u32>,
    pub survivors: usize,
    pub dropped: usize,
    pub premises: usize,
}

impl SignalingCheck {
    pub fn clean(&self) -> bool {
        self.dense_but_dropped.is_empty() && self.survived_without_evidence.is_empty() && self.core_but_dropped.is_empty()
    }
}

/// Run local signaling on `n` processes with random start levels, a nested
/// family and a random crash schedule inside the instance.
pub fn signaling_scenario(n: usize, seed: u64) -> SignalingCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta: u32 = rng.gen_range(2..=4);
    let gamma: u32 = rng.gen_range(2..=3);
    let fam = build_family(FamilyKind::In, n, n, 2, delta, gamma, seed, 1.5);
    // level i probes graphs[i]; level 0 probes nothing
    let mut graphs: Vec<Rc<OverlayGraph>> = vec![Rc::new(OverlayGraph::empty(n))];
    graphs.extend(fam.graphs.iter().cloned());
    let top = graphs.len() - 1;
    let start: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=top) as u8).collect();
    let crashes = rng.gen_range(0..=n / 2);
    let horizon = 2 * gamma as u64;

    let adversary = RandomOblivious::new(rng.gen(), n, crashes, crashes, horizon).expect("count within budget");
    let mut sim = Sim::new(SimConfig::new(n, crashes, seed), Box::new(adversary));
    let graphs = Rc::new(graphs);
    let members: Rc<Vec<ProcessId>> = Rc::new((0..n).map(ProcessId::from).collect());
    let start_levels = Rc::new(start.clone());
    sim.spawn_all(|ctx| {
        let graphs = graphs.clone();
        let members = members.clone();
        let start_levels = start_levels.clone();
        async move {
            let p = ctx.pid().index();
            let mut rumors = RumorSet::Ids(IdSet::singleton(n, p as u32));
            let view = SignalingView {
                members: &members,
                local: p,
                graphs: &graphs,
            };
            let out = local_signaling(&ctx, 0x5160, view, delta, gamma, start_levels[p], &mut rumors).await;
            (out, rumors)
        }
    });
    let res = sim.run().expect("signaling run");
    let outputs: Vec<Option<(SignalingOutcome, RumorSet)>> = res.outputs;

    let mut check = SignalingCheck {
        n,
        seed,
        ..Default::default()
    };
    for level in 1..=top as u8 {
        let g = &graphs[level as usize];
        let b1: Vec<bool> = start.iter().map(|&s| s >= level).collect();
        let b2: Vec<bool> = (0..n).map(|p| b1[p] && outputs[p].is_some()).collect();
        let b2_nodes: Vec<u32> = (0..n as u32).filter(|&p| b2[p as usize]).collect();
        let core = find_survival_set(g, &b2_nodes, delta);
        for p in (0..n).filter(|&p| b2[p] && start[p] == level) {
            let (out, rumors) = outputs[p].as_ref().expect("alive at end");
            let pid = p as u32;
            if dense_neighborhood(g, pid, gamma, delta, Some(&b2)).is_some() {
                check.premises += 1;
                if !out.survived {
                    check.dense_but_dropped.push(pid);
                }
            }
            if core.binary_search(&pid).is_ok() && !out.survived {
                check.core_but_dropped.push(pid);
            }
            if !out.survived {
                check.dropped += 1;
            } else {
                check.survivors += 1;
                let RumorSet::Ids(ids) = rumors else { unreachable!("id rumors") };
                let heard: Vec<bool> = (0..n).map(|q| b1[q] && ids.contains(q as u32)).collect();
                if dense_neighborhood(g, pid, gamma, delta, Some(&heard)).is_none() {
                    check.survived_without_evidence.push(pid);
                }
            }
        }
    }
    check
}
