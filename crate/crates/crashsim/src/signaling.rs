//! Level-indexed request/response probing over a nested graph family.

use crate::engine::{ProcCtx, Tag};
use crate::message::{Payload, ProcessId, RumorSet};
use crate::overlay::OverlayGraph;
use std::rc::Rc;

/// Fixed duration of one signaling instance.
pub fn signaling_round_budget(gamma: u32) -> u64 {
    2 * gamma as u64
}

/// Where a process sits in a signaling instance. `graphs[i]` is the graph
/// probed at level `i`; level 0 probes nothing and `graphs[0]` is unused.
#[derive(Clone, Copy)]
pub struct SignalingView<'a> {
    pub members: &'a [ProcessId],
    pub local: usize,
    pub graphs: &'a [Rc<OverlayGraph>],
}

impl SignalingView<'_> {
    fn neighbors(&self, level: u8) -> Vec<ProcessId> {
        let g = &self.graphs[(level as usize).min(self.graphs.len() - 1)];
        g.neighbors(self.local as u32).iter().map(|&u| self.members[u as usize]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignalingOutcome {
    pub survived: bool,
    pub final_level: u8,
}

/// Run `γ` request/response round pairs starting at level `start`.
/// `rumors` absorbs every rumor set received.
pub async fn local_signaling(
    ctx: &ProcCtx,
    tag: Tag,
    view: SignalingView<'_>,
    delta: u32,
    gamma: u32,
    start: u8,
    rumors: &mut RumorSet,
) -> SignalingOutcome {
    let mut level = start;
    ctx.snapshot_mut(|s| s.level = Some(level));
    for _ in 0..gamma {
        if level > 0 {
            ctx.send(tag, view.neighbors(level), Payload::Request { bit: true });
        }
        let requests = ctx.next(tag).await;
        let requesters: Vec<ProcessId> = requests
            .iter()
            .filter(|d| matches!(*d.payload, Payload::Request { .. }))
            .map(|d| d.from)
            .collect();
        ctx.send(
            tag,
            requesters,
            Payload::Response {
                level,
                rumors: rumors.clone(),
            },
        );
        let responses = ctx.next(tag).await;
        let mut supporting = 0u32;
        for d in &responses {
            if let Payload::Response { level: l, rumors: r } = &*d.payload {
                rumors.absorb(r);
                if *l >= level {
                    supporting += 1;
                }
            }
        }
        if level > 0 && supporting < delta {
            level -= 1;
            ctx.snapshot_mut(|s| s.level = Some(level));
        }
    }
    SignalingOutcome {
        survived: level == start,
        final_level: level,
    }
}
