//! Lockstep round executor.
//!
//! Every process runs as a future stepped once per round in id order. A
//! process yields at a round boundary through [`ProcCtx::next`] or
//! [`ProcCtx::idle`]; messages it sent in round `r` are delivered at the end
//! of `r` and handed to the receivers when they resume in round `r + 1`.
//! Rounds in which every process sleeps and the adversary has nothing
//! scheduled are skipped without changing the outcome.

use crate::adversary::{Adversary, AdversaryAction, AdversaryView};
use crate::message::{CostModel, Payload, ProcessId, RoundMessage};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll, Waker};

/// Channel tag separating concurrent sub-protocol instances. Not charged.
pub type Tag = u64;

/// Derive a child tag for a parallel sub-instance.
pub fn sub_tag(parent: Tag, child: u64) -> Tag {
    let mut z = parent ^ child.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SimError {
    #[error("round {round}: adversary exceeded crash budget {f}")]
    BudgetViolation { round: u64, f: usize },
    #[error("round {round}: protocol violation: {detail}")]
    ProtocolViolation { round: u64, detail: String },
    #[error("run did not terminate within {limit} rounds")]
    NonTermination { limit: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProcessStatus {
    Alive,
    CrashedAt(u64),
    Decided(bool),
    Idle,
}

/// Observable per-process state exposed to adaptive adversaries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessSnapshot {
    pub candidate: Option<bool>,
    pub level: Option<u8>,
    pub active: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub rounds: u64,
    pub messages_total: u64,
    pub bits_total: u64,
    pub random_bits_total: u64,
    pub per_process_bits: Vec<u64>,
    pub per_process_random_bits: Vec<u64>,
}

impl Metrics {
    fn new(n: usize) -> Self {
        Metrics {
            per_process_bits: vec![0; n],
            per_process_random_bits: vec![0; n],
            ..Default::default()
        }
    }

    pub fn amortized_bits(&self) -> f64 {
        self.bits_total as f64 / self.per_process_bits.len().max(1) as f64
    }

    pub fn amortized_random_bits(&self) -> f64 {
        self.random_bits_total as f64 / self.per_process_random_bits.len().max(1) as f64
    }
}

/// One multicast: the same payload sent to several receivers in one round.
#[derive(Debug, Clone)]
pub struct Multicast {
    pub from: ProcessId,
    pub to: Vec<ProcessId>,
    pub tag: Tag,
    pub payload: Rc<Payload>,
    pub bits_each: u64,
}

impl Multicast {
    pub fn messages(&self) -> impl Iterator<Item = RoundMessage> + '_ {
        self.to.iter().map(move |&r| RoundMessage {
            sender: self.from,
            receiver: r,
            payload: (*self.payload).clone(),
        })
    }

    pub fn bits(&self) -> u64 {
        self.bits_each * self.to.len() as u64
    }
}

/// A message handed to a receiver.
#[derive(Debug, Clone)]
pub struct Delivery {
    pub from: ProcessId,
    pub tag: Tag,
    pub payload: Rc<Payload>,
}

/// Protocol-level events recorded in the trace for offline checking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum Event {
    Phase1Send { epoch: u32, group: u32, iteration: u32 },
    Phase1Result { epoch: u32, group: u32, value: bool },
    Phase2Result { epoch: u32, group: u32, active: bool },
    /// Outcome of the closing gossip: `None` means only ⊥ arrived.
    Phase3Result { epoch: u32, value: Option<bool> },
    /// A bipartite gossip participant moved up to `level`. Instances are
    /// told apart by tag and lowest member.
    LevelUp { instance: Tag, first: ProcessId, side: u8, size: u32, level: u8 },
    Alarm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub pid: ProcessId,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentRecord {
    pub from: ProcessId,
    pub to: Vec<ProcessId>,
    pub tag: Tag,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveredRecord {
    pub multicast: usize,
    pub to: Vec<ProcessId>,
}

/// Everything observable about one executed round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub sent: Vec<SentRecord>,
    pub crashed: Vec<ProcessId>,
    pub delivered: Vec<DeliveredRecord>,
    pub rng_draws: Vec<(ProcessId, u32)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<Note>,
}

impl RoundRecord {
    fn is_empty(&self) -> bool {
        self.sent.is_empty()
            && self.crashed.is_empty()
            && self.rng_draws.is_empty()
            && self.notes.is_empty()
    }
}

/// Rounds that carried traffic, crashes, randomness or events. Omitted
/// rounds were silent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub rounds: Vec<RoundRecord>,
}

/// Mix a run seed with a process id into an independent stream seed.
pub fn stream_seed(seed: u64, pid: u64) -> u64 {
    sub_tag(seed ^ 0x5EED_0000_0000_0000, pid)
}

struct Core {
    n: usize,
    round: u64,
    cost: CostModel,
    crashed_at: Vec<Option<u64>>,
    finished: Vec<bool>,
    wake: Vec<u64>,
    outbox: Vec<Multicast>,
    inbox: Vec<Vec<Delivery>>,
    rngs: Vec<ChaCha8Rng>,
    draws: Vec<u32>,
    snapshot: Vec<ProcessSnapshot>,
    notes: Vec<Note>,
    metrics: Metrics,
}

/// Handle through which a process interacts with the engine.
#[derive(Clone)]
pub struct ProcCtx {
    pid: ProcessId,
    core: Rc<RefCell<Core>>,
}

impl ProcCtx {
    pub fn pid(&self) -> ProcessId {
        self.pid
    }

    pub fn n(&self) -> usize {
        self.core.borrow().n
    }

    /// The round currently being stepped.
    pub fn round(&self) -> u64 {
        self.core.borrow().round
    }

    pub fn cost(&self) -> CostModel {
        self.core.borrow().cost
    }

    /// Queue `payload` to every process in `to` for the current round.
    pub fn send(&self, tag: Tag, to: Vec<ProcessId>, payload: Payload) {
        if to.is_empty() {
            return;
        }
        let mut c = self.core.borrow_mut();
        debug_assert!(to.iter().all(|q| q.index() < c.n && *q != self.pid));
        let bits_each = c.cost.bit_cost(&payload);
        let p = self.pid.index();
        let count = to.len() as u64;
        c.metrics.messages_total += count;
        c.metrics.bits_total += bits_each * count;
        c.metrics.per_process_bits[p] += bits_each * count;
        c.outbox.push(Multicast {
            from: self.pid,
            to,
            tag,
            payload: Rc::new(payload),
            bits_each,
        });
    }

    /// End the current round; resolves in the next round with the messages
    /// tagged `tag` that were delivered to this process.
    pub fn next(&self, tag: Tag) -> RoundWait {
        let target = self.round() + 1;
        RoundWait {
            ctx: self.clone(),
            target,
            tag: Some(tag),
        }
    }

    /// Stay silent for `rounds` rounds (discarding anything received).
    pub fn idle(&self, rounds: u64) -> RoundWait {
        let target = self.round() + rounds;
        RoundWait {
            ctx: self.clone(),
            target,
            tag: None,
        }
    }

    /// Stay silent until round `target` starts.
    pub fn idle_until(&self, target: u64) -> RoundWait {
        let now = self.round();
        debug_assert!(target >= now, "padding target {target} already passed at {now}");
        RoundWait {
            ctx: self.clone(),
            target: target.max(now),
            tag: None,
        }
    }

    /// Draw one counted fair random bit.
    pub fn random_bit(&self) -> bool {
        let mut c = self.core.borrow_mut();
        let p = self.pid.index();
        c.draws[p] += 1;
        c.metrics.random_bits_total += 1;
        c.metrics.per_process_random_bits[p] += 1;
        c.rngs[p].next_u32() & 1 == 1
    }

    pub fn snapshot_mut<R>(&self, f: impl FnOnce(&mut ProcessSnapshot) -> R) -> R {
        let mut c = self.core.borrow_mut();
        let p = self.pid.index();
        f(&mut c.snapshot[p])
    }

    pub fn note(&self, event: Event) {
        let pid = self.pid;
        self.core.borrow_mut().notes.push(Note { pid, event });
    }
}

/// Future resolving at a target round.
pub struct RoundWait {
    ctx: ProcCtx,
    target: u64,
    tag: Option<Tag>,
}

impl Future for RoundWait {
    type Output = Vec<Delivery>;

    fn poll(self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<Vec<Delivery>> {
        let mut c = self.ctx.core.borrow_mut();
        let p = self.ctx.pid.index();
        if c.round >= self.target {
            let got = match self.tag {
                Some(tag) if c.round == self.target => {
                    let inbox = &c.inbox[p];
                    let matching = inbox.iter().filter(|d| d.tag == tag).count();
                    if matching == inbox.len() {
                        inbox.clone()
                    } else {
                        let mut got = Vec::with_capacity(matching);
                        got.extend(inbox.iter().filter(|d| d.tag == tag).cloned());
                        got
                    }
                }
                _ => Vec::new(),
            };
            Poll::Ready(got)
        } else {
            c.wake[p] = c.wake[p].min(self.target);
            Poll::Pending
        }
    }
}

type Task<T> = Pin<Box<dyn Future<Output = T>>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub n: usize,
    pub f: usize,
    pub seed: u64,
    pub round_limit: u64,
    pub record_trace: bool,
    pub blind_adversary: bool,
}

impl SimConfig {
    pub fn new(n: usize, f: usize, seed: u64) -> Self {
        SimConfig {
            n,
            f,
            seed,
            round_limit: 10_000_000,
            record_trace: false,
            blind_adversary: false,
        }
    }
}

/// Outcome of a complete run.
#[derive(Debug)]
pub struct RunResult<T> {
    /// Output of each process that terminated without crashing.
    pub outputs: Vec<Option<T>>,
    pub crashed_at: Vec<Option<u64>>,
    pub metrics: Metrics,
    pub trace: Option<SimulationTrace>,
}

impl<T> RunResult<T> {
    pub fn alive(&self, p: ProcessId) -> bool {
        self.crashed_at[p.index()].is_none()
    }
}

/// The round executor for processes producing outputs of type `T`.
pub struct Sim<T> {
    cfg: SimConfig,
    core: Rc<RefCell<Core>>,
    tasks: Vec<Option<Task<T>>>,
    /// Ids with a task, ascending; rebuilt when `live_stale`.
    live: Vec<usize>,
    live_stale: bool,
    outputs: Vec<Option<T>>,
    adversary: Box<dyn Adversary>,
    trace: Option<SimulationTrace>,
    crashes: usize,
}

impl<T: 'static> Sim<T> {
    pub fn new(cfg: SimConfig, adversary: Box<dyn Adversary>) -> Self {
        let n = cfg.n;
        assert!(n >= 1, "need at least one process");
        let core = Core {
            n,
            round: 1,
            cost: CostModel::new(n),
            crashed_at: vec![None; n],
            finished: vec![false; n],
            wake: vec![1; n],
            outbox: Vec::new(),
            inbox: vec![Vec::new(); n],
            rngs: (0..n)
                .map(|p| ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, p as u64)))
                .collect(),
            draws: vec![0; n],
            snapshot: vec![ProcessSnapshot::default(); n],
            notes: Vec::new(),
            metrics: Metrics::new(n),
        };
        Sim {
            cfg,
            core: Rc::new(RefCell::new(core)),
            tasks: (0..n).map(|_| None).collect(),
            live: Vec::new(),
            live_stale: true,
            outputs: (0..n).map(|_| None).collect(),
            adversary,
            trace: cfg.record_trace.then(SimulationTrace::default),
            crashes: 0,
        }
    }

    pub fn ctx(&self, p: ProcessId) -> ProcCtx {
        ProcCtx {
            pid: p,
            core: self.core.clone(),
        }
    }

    /// Install the program of process `p`.
    pub fn spawn(&mut self, p: ProcessId, fut: impl Future<Output = T> + 'static) {
        self.tasks[p.index()] = Some(Box::pin(fut));
        self.live_stale = true;
    }

    /// Spawn one program per process built by `make`.
    pub fn spawn_all<F, Fut>(&mut self, mut make: F)
    where
        F: FnMut(ProcCtx) -> Fut,
        Fut: Future<Output = T> + 'static,
    {
        for p in 0..self.cfg.n {
            let ctx = self.ctx(ProcessId(p as u32));
            let fut = make(ctx);
            self.spawn(ProcessId(p as u32), fut);
        }
    }

    pub fn round(&self) -> u64 {
        self.core.borrow().round
    }

    fn running(&self) -> bool {
        self.tasks.iter().any(|t| t.is_some())
    }

    /// Execute the current round: step processes, consult the adversary,
    /// apply crashes and deliver. Returns the round's record.
    pub fn run_round(&mut self) -> Result<RoundRecord, SimError> {
        let r = self.round();
        let n = self.cfg.n;
        let waker = Waker::noop();
        let mut cx = Context::from_waker(waker);

        if self.live_stale {
            self.live = (0..n).filter(|&p| self.tasks[p].is_some()).collect();
            self.live_stale = false;
        }

        // (1) step every alive process that is due this round
        for i in 0..self.live.len() {
            let p = self.live[i];
            let due = {
                let mut c = self.core.borrow_mut();
                let due = self.tasks[p].is_some() && c.wake[p] <= r;
                if due {
                    c.wake[p] = u64::MAX;
                }
                due
            };
            if !due {
                continue;
            }
            let task = self.tasks[p].as_mut().expect("due task");
            if let Poll::Ready(v) = task.as_mut().poll(&mut cx) {
                self.outputs[p] = Some(v);
                self.tasks[p] = None;
                self.live_stale = true;
                let mut c = self.core.borrow_mut();
                c.finished[p] = true;
                c.metrics.rounds = c.metrics.rounds.max(r - 1);
            }
        }

        let (outbox, draws, notes) = {
            let mut c = self.core.borrow_mut();
            for &p in &self.live {
                c.inbox[p].clear();
            }
            let outbox = std::mem::take(&mut c.outbox);
            let draws: Vec<(ProcessId, u32)> = c
                .draws
                .iter()
                .enumerate()
                .filter(|(_, &d)| d > 0)
                .map(|(p, &d)| (ProcessId(p as u32), d))
                .collect();
            c.draws.iter_mut().for_each(|d| *d = 0);
            let notes = std::mem::take(&mut c.notes);
            (outbox, draws, notes)
        };

        // (2) adversary
        let action = {
            let c = self.core.borrow();
            let view = AdversaryView {
                round: r,
                n,
                f: self.cfg.f,
                budget_left: self.cfg.f - self.crashes,
                outbox: &outbox,
                states: (!self.cfg.blind_adversary).then_some(&c.snapshot[..]),
                crashed_at: &c.crashed_at,
                finished: &c.finished,
            };
            self.adversary.act(&view)
        };
        let crashing = self.validate(r, &outbox, &action)?;

        // (3) crashes and delivery
        let mut record = RoundRecord {
            round: r,
            sent: Vec::new(),
            crashed: action.crash_now.clone(),
            delivered: Vec::new(),
            rng_draws: draws,
            notes,
        };
        record.crashed.sort();
        {
            let mut c = self.core.borrow_mut();
            for &q in &record.crashed {
                c.crashed_at[q.index()] = Some(r);
                self.tasks[q.index()] = None;
                self.live_stale = true;
            }
            self.crashes += record.crashed.len();
            let mut selected: Vec<Vec<ProcessId>> = vec![Vec::new(); outbox.len()];
            for m in &action.deliver_from_crashed {
                selected[m.multicast].push(m.receiver);
            }
            let tracing = self.trace.is_some();
            for (i, mc) in outbox.iter().enumerate() {
                let filtered: Vec<ProcessId>;
                let targets: &[ProcessId] = if crashing[mc.from.index()] {
                    let sel = &mut selected[i];
                    sel.sort();
                    sel.dedup();
                    filtered = mc.to.iter().copied().filter(|q| sel.binary_search(q).is_ok()).collect();
                    &filtered
                } else {
                    &mc.to
                };
                let mut got = Vec::new();
                for &q in targets {
                    let qi = q.index();
                    if c.crashed_at[qi].is_none() && !c.finished[qi] {
                        c.inbox[qi].push(Delivery {
                            from: mc.from,
                            tag: mc.tag,
                            payload: mc.payload.clone(),
                        });
                        if tracing {
                            got.push(q);
                        }
                    }
                }
                if tracing {
                    record.delivered.push(DeliveredRecord { multicast: i, to: got });
                }
            }
        }
        if let Some(tr) = self.trace.as_mut() {
            record.sent = outbox
                .iter()
                .map(|mc| SentRecord {
                    from: mc.from,
                    to: mc.to.clone(),
                    tag: mc.tag,
                    payload: (*mc.payload).clone(),
                })
                .collect();
            if !record.is_empty() {
                tr.rounds.push(record.clone());
            }
        }

        // advance, skipping rounds in which nothing can happen
        let next = {
            let c = self.core.borrow();
            let mut next = u64::MAX;
            for &p in &self.live {
                if self.tasks[p].is_some() {
                    next = next.min(c.wake[p]);
                }
            }
            if let Some(a) = self.adversary.next_silent_action(r) {
                if self.crashes < self.cfg.f {
                    next = next.min(a.max(r + 1));
                }
            }
            next.max(r + 1)
        };
        self.core.borrow_mut().round = next;
        Ok(record)
    }

    fn validate(
        &self,
        r: u64,
        outbox: &[Multicast],
        action: &AdversaryAction,
    ) -> Result<Vec<bool>, SimError> {
        let c = self.core.borrow();
        let mut crashing = vec![false; self.cfg.n];
        for &q in &action.crash_now {
            let bad = q.index() >= self.cfg.n || c.crashed_at[q.index()].is_some() || crashing[q.index()];
            if bad {
                return Err(SimError::ProtocolViolation {
                    round: r,
                    detail: format!("cannot crash {q}"),
                });
            }
            crashing[q.index()] = true;
        }
        if self.crashes + action.crash_now.len() > self.cfg.f {
            return Err(SimError::BudgetViolation {
                round: r,
                f: self.cfg.f,
            });
        }
        for m in &action.deliver_from_crashed {
            let ok = outbox
                .get(m.multicast)
                .is_some_and(|mc| crashing[mc.from.index()] && mc.to.contains(&m.receiver));
            if !ok {
                return Err(SimError::ProtocolViolation {
                    round: r,
                    detail: format!("delivery {m:?} is not in a crashing sender's outbox"),
                });
            }
        }
        Ok(crashing)
    }

    /// Run until every non-crashed process has terminated.
    pub fn run(mut self) -> Result<RunResult<T>, SimError> {
        while self.running() {
            if self.round() > self.cfg.round_limit {
                return Err(SimError::NonTermination {
                    limit: self.cfg.round_limit,
                });
            }
            self.run_round()?;
        }
        let core = Rc::try_unwrap(self.core)
            .ok()
            .expect("process contexts outlive the run")
            .into_inner();
        Ok(RunResult {
            outputs: self.outputs,
            crashed_at: core.crashed_at,
            metrics: core.metrics,
            trace: self.trace,
        })
    }

    pub fn status(&self, p: ProcessId) -> ProcessStatus {
        let c = self.core.borrow();
        match c.crashed_at[p.index()] {
            Some(r) => ProcessStatus::CrashedAt(r),
            None if c.finished[p.index()] => ProcessStatus::Idle,
            None => ProcessStatus::Alive,
        }
    }
}

/// Run several sub-protocols of one process concurrently. Every pending
/// child is polled on each step (the executor never wakes children
/// individually).
pub fn join_all<F: Future>(futs: Vec<F>) -> JoinAll<F> {
    JoinAll {
        slots: futs.into_iter().map(|f| Slot::Running(Box::pin(f))).collect(),
    }
}

enum Slot<F: Future> {
    Running(Pin<Box<F>>),
    Done(Option<F::Output>),
}

pub struct JoinAll<F: Future> {
    slots: Vec<Slot<F>>,
}

// children are boxed, outputs are never pinned
impl<F: Future> Unpin for JoinAll<F> {}

impl<F: Future> Future for JoinAll<F> {
    type Output = Vec<F::Output>;

    fn poll(mut self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<Self::Output> {
        let mut pending = false;
        for slot in self.slots.iter_mut() {
            if let Slot::Running(f) = slot {
                match f.as_mut().poll(cx) {
                    Poll::Ready(v) => *slot = Slot::Done(Some(v)),
                    Poll::Pending => pending = true,
                }
            }
        }
        if pending {
            return Poll::Pending;
        }
        let out = self
            .slots
            .iter_mut()
            .map(|s| match s {
                Slot::Done(v) => v.take().expect("joined output taken once"),
                Slot::Running(_) => unreachable!(),
            })
            .collect();
        Poll::Ready(out)
    }
}

/// A hand-written per-round process for simple protocols and tests.
pub trait StateMachine {
    type Output;

    /// Consume the inbox of the previous round and either emit this round's
    /// sends or finish with an output.
    fn step(&mut self, round: u64, inbox: &[Delivery], ctx: &ProcCtx) -> Step<Self::Output>;
}

pub enum Step<O> {
    Send(Vec<(Vec<ProcessId>, Payload)>),
    Done(O),
}

/// Drive a [`StateMachine`] as an engine task.
pub async fn drive<M: StateMachine>(ctx: ProcCtx, mut m: M) -> M::Output {
    let mut inbox = Vec::new();
    loop {
        match m.step(ctx.round(), &inbox, &ctx) {
            Step::Done(o) => return o,
            Step::Send(sends) => {
                for (to, p) in sends {
                    ctx.send(0, to, p);
                }
                inbox = ctx.next(0).await;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{MessageRef, NoCrashes};

    struct Scripted(Vec<AdversaryAction>);

    impl Adversary for Scripted {
        fn act(&mut self, view: &AdversaryView) -> AdversaryAction {
            self.0.get(view.round as usize - 1).cloned().unwrap_or_default()
        }
    }

    async fn send_bit_once(ctx: ProcCtx, to: Vec<ProcessId>) -> usize {
        ctx.send(0, to, Payload::ValueBit { bit: true });
        ctx.next(0).await.len()
    }

    #[test]
    fn crash_free_delivery_counts_bits() {
        let mut sim = Sim::new(SimConfig::new(2, 0, 1), Box::new(NoCrashes));
        sim.spawn_all(|ctx| {
            let other = ProcessId(1 - ctx.pid().0);
            send_bit_once(ctx, vec![other])
        });
        let res = sim.run().unwrap();
        assert_eq!(res.outputs, vec![Some(1), Some(1)]);
        assert_eq!(res.metrics.messages_total, 2);
        assert_eq!(res.metrics.bits_total, 2);
        assert_eq!(res.metrics.rounds, 1);
    }

    #[test]
    fn crashing_sender_partial_delivery() {
        // p0 sends m1 to p1 and m2 to p2 and crashes; only m1 arrives.
        let adv = Scripted(vec![AdversaryAction {
            crash_now: vec![ProcessId(0)],
            deliver_from_crashed: vec![MessageRef {
                multicast: 0,
                receiver: ProcessId(1),
            }],
        }]);
        let mut cfg = SimConfig::new(3, 1, 7);
        cfg.record_trace = true;
        let mut sim = Sim::new(cfg, Box::new(adv));
        sim.spawn_all(|ctx| {
            let to = if ctx.pid().0 == 0 {
                vec![ProcessId(1), ProcessId(2)]
            } else {
                vec![]
            };
            send_bit_once(ctx, to)
        });
        let res = sim.run().unwrap();
        assert_eq!(res.outputs, vec![None, Some(1), Some(0)]);
        assert_eq!(res.crashed_at[0], Some(1));
        let tr = res.trace.unwrap();
        assert_eq!(tr.rounds[0].delivered[0].to, vec![ProcessId(1)]);
    }

    #[test]
    fn budget_and_legality_are_enforced() {
        let adv = Scripted(vec![AdversaryAction {
            crash_now: vec![ProcessId(0), ProcessId(1)],
            deliver_from_crashed: vec![],
        }]);
        let mut sim = Sim::new(SimConfig::new(3, 1, 7), Box::new(adv));
        sim.spawn_all(|ctx| send_bit_once(ctx, vec![]));
        assert!(matches!(sim.run(), Err(SimError::BudgetViolation { round: 1, f: 1 })));

        let adv = Scripted(vec![AdversaryAction {
            crash_now: vec![ProcessId(1)],
            deliver_from_crashed: vec![MessageRef {
                multicast: 0,
                receiver: ProcessId(2),
            }],
        }]);
        let mut sim = Sim::new(SimConfig::new(3, 1, 7), Box::new(adv));
        sim.spawn_all(|ctx| {
            let to = if ctx.pid().0 == 0 { vec![ProcessId(2)] } else { vec![] };
            send_bit_once(ctx, to)
        });
        assert!(matches!(sim.run(), Err(SimError::ProtocolViolation { .. })));
    }

    #[test]
    fn round_limit_reports_non_termination() {
        let mut cfg = SimConfig::new(1, 0, 0);
        cfg.round_limit = 50;
        let mut sim: Sim<()> = Sim::new(cfg, Box::new(NoCrashes));
        sim.spawn_all(|ctx| async move {
            loop {
                ctx.send(0, vec![], Payload::Alarm);
                ctx.next(0).await;
            }
        });
        assert_eq!(sim.run().unwrap_err(), SimError::NonTermination { limit: 50 });
    }

    #[test]
    fn silent_rounds_are_skipped_but_counted() {
        let mut sim = Sim::new(SimConfig::new(2, 0, 0), Box::new(NoCrashes));
        sim.spawn_all(|ctx| async move {
            ctx.idle(1_000_000).await;
            ctx.round()
        });
        let res = sim.run().unwrap();
        assert_eq!(res.outputs, vec![Some(1_000_001), Some(1_000_001)]);
        assert_eq!(res.metrics.rounds, 1_000_000);
    }

    #[test]
    fn random_bits_are_counted_and_reproducible() {
        let run = |seed| {
            let mut sim = Sim::new(SimConfig::new(4, 0, seed), Box::new(NoCrashes));
            sim.spawn_all(|ctx| async move { (0..16).map(|_| ctx.random_bit()).collect::<Vec<_>>() });
            sim.run().unwrap()
        };
        let a = run(3);
        let b = run(3);
        assert_eq!(a.outputs, b.outputs);
        assert_eq!(a.metrics.random_bits_total, 64);
        assert_eq!(a.metrics.per_process_random_bits, vec![16; 4]);
        assert_ne!(a.outputs[0], a.outputs[1]);
    }

    struct Echo {
        sent: bool,
    }

    impl StateMachine for Echo {
        type Output = usize;

        fn step(&mut self, _round: u64, inbox: &[Delivery], ctx: &ProcCtx) -> Step<usize> {
            if self.sent {
                return Step::Done(inbox.len());
            }
            self.sent = true;
            let others = (0..ctx.n() as u32)
                .map(ProcessId)
                .filter(|q| *q != ctx.pid())
                .collect();
            Step::Send(vec![(others, Payload::Request { bit: false })])
        }
    }

    #[test]
    fn state_machines_run_on_the_engine() {
        let mut sim = Sim::new(SimConfig::new(5, 0, 0), Box::new(NoCrashes));
        sim.spawn_all(|ctx| drive(ctx, Echo { sent: false }));
        let res = sim.run().unwrap();
        assert!(res.outputs.iter().all(|o| *o == Some(4)));
        assert_eq!(res.metrics.messages_total, 20);
    }
}
