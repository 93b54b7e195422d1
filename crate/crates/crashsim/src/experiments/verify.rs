//! Offline invariant checks over recorded traces.

use super::run::{evaluate, Output, TraceFile};
use crate::engine::{Event, Tag};
use crate::gossip::gossip_budget;
use crate::message::ProcessId;
use crate::parameterized::Layout;
use crate::params::levels;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Outcome of one invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Round of the first violation, when it can be pinned to one.
    pub first_violation: Option<u64>,
    pub detail: String,
    /// Reported but not counted: the invariant's precondition does not hold
    /// for this run (for example more than `n/10` crashes allowed).
    pub diagnostic: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    /// All non-diagnostic checks passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.diagnostic)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &'static str, violation: Option<(Option<u64>, String)>, diagnostic: bool) {
        let (passed, first_violation, detail) = match violation {
            None => (true, None, String::new()),
            Some((r, d)) => (false, r, d),
        };
        self.checks.push(Check {
            name,
            passed,
            first_violation,
            detail,
            diagnostic,
        });
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = match (c.passed, c.diagnostic) {
                (true, _) => "PASS",
                (false, false) => "FAIL",
                (false, true) => "DIAG",
            };
            write!(f, "{status} {}", c.name)?;
            if let Some(r) = c.first_violation {
                write!(f, " (first violation at round {r})")?;
            }
            if !c.detail.is_empty() {
                write!(f, ": {}", c.detail)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

type Found = Option<(Option<u64>, String)>;

fn crash_budget(t: &TraceFile) -> Found {
    let mut total = 0;
    for r in &t.rounds {
        total += r.crashed.len();
        if total > t.header.f {
            return Some((Some(r.round), format!("{total} crashes exceed f = {}", t.header.f)));
        }
    }
    None
}

fn deliveries_legal(t: &TraceFile) -> Found {
    for r in &t.rounds {
        for d in &r.delivered {
            let Some(sent) = r.sent.get(d.multicast) else {
                return Some((Some(r.round), format!("delivery of unknown multicast {}", d.multicast)));
            };
            if let Some(q) = d.to.iter().find(|q| !sent.to.contains(q)) {
                return Some((Some(r.round), format!("{q} received a message not addressed to it")));
            }
            let crashed = r.crashed.contains(&sent.from);
            if !crashed && d.to.len() > sent.to.len() {
                return Some((Some(r.round), "duplicate delivery".into()));
            }
        }
    }
    None
}

struct Notes<'a> {
    all: Vec<(u64, ProcessId, &'a Event)>,
}

impl<'a> Notes<'a> {
    fn new(t: &'a TraceFile) -> Self {
        let all = t
            .rounds
            .iter()
            .flat_map(|r| r.notes.iter().map(move |n| (r.round, n.pid, &n.event)))
            .collect();
        Notes { all }
    }
}

fn phase1_single_send(notes: &Notes) -> Found {
    let mut first: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for &(round, _, ev) in &notes.all {
        if let Event::Phase1Send { epoch, group, iteration } = *ev {
            let was = *first.entry((epoch, group)).or_insert(iteration);
            if was != iteration {
                return Some((
                    Some(round),
                    format!("group {group} sent in iterations {was} and {iteration} of epoch {epoch}"),
                ));
            }
        }
    }
    None
}

/// Groups with at least 3/4 of their members alive at the end.
fn non_faulty(t: &TraceFile, layout: &Layout) -> Vec<bool> {
    (0..layout.count())
        .map(|g| {
            let m = layout.members(g);
            let alive = m.iter().filter(|p| t.result.crashed_at[p.index()].is_none()).count();
            4 * alive >= 3 * m.len()
        })
        .collect()
}

fn phase1_values(notes: &Notes, epoch: u32) -> BTreeMap<u32, BTreeSet<bool>> {
    let mut v: BTreeMap<u32, BTreeSet<bool>> = BTreeMap::new();
    for &(_, _, ev) in &notes.all {
        if let Event::Phase1Result { epoch: e, group, value } = *ev {
            if e == epoch {
                v.entry(group).or_default().insert(value);
            }
        }
    }
    v
}

fn epochs(notes: &Notes) -> BTreeSet<u32> {
    notes
        .all
        .iter()
        .filter_map(|&(_, _, ev)| match *ev {
            Event::Phase1Result { epoch, .. } => Some(epoch),
            _ => None,
        })
        .collect()
}

fn neighbor_consistency(t: &TraceFile, notes: &Notes, layout: &Layout) -> Found {
    let healthy = non_faulty(t, layout);
    for e in epochs(notes) {
        let values = phase1_values(notes, e);
        let h = layout.super_graph(&t.header.profile, e);
        for (&i, vi) in &values {
            for &j in h.neighbors(i) {
                let Some(vj) = values.get(&j) else { continue };
                if !(healthy[i as usize] && healthy[j as usize]) || j < i {
                    continue;
                }
                if vi.len() > 1 || vj.len() > 1 || vi != vj {
                    return Some((None, format!("epoch {e}: groups {i} {vi:?} and {j} {vj:?} disagree")));
                }
            }
        }
    }
    None
}

/// Groups all of whose members that reported ended phase 2 active.
fn survivors(notes: &Notes, epoch: u32) -> BTreeSet<u32> {
    let mut seen: BTreeMap<u32, bool> = BTreeMap::new();
    for &(_, _, ev) in &notes.all {
        if let Event::Phase2Result { epoch: e, group, active } = *ev {
            if e == epoch {
                *seen.entry(group).or_insert(true) &= active;
            }
        }
    }
    seen.into_iter().filter(|&(_, a)| a).map(|(g, _)| g).collect()
}

fn fraction_survives(notes: &Notes, layout: &Layout) -> Found {
    let got = survivors(notes, 0).len();
    let need = layout.count().div_ceil(2);
    (got < need).then(|| (None, format!("{got} of {} groups survived phase 2, need {need}", layout.count())))
}

fn super_are_same(notes: &Notes) -> Found {
    for e in epochs(notes) {
        let alive = survivors(notes, e);
        let values = phase1_values(notes, e);
        let held: BTreeSet<bool> = alive
            .iter()
            .filter_map(|g| values.get(g))
            .flatten()
            .copied()
            .collect();
        if held.len() > 1 {
            return Some((None, format!("epoch {e}: surviving groups hold both values")));
        }
        let mut spread = BTreeSet::new();
        for &(round, _, ev) in &notes.all {
            if let Event::Phase3Result { epoch, value: Some(v) } = *ev {
                if epoch == e && spread.insert(v) && spread.len() > 1 {
                    return Some((Some(round), format!("epoch {e}: gossip delivered both 0 and 1")));
                }
            }
        }
    }
    None
}

/// Per bipartite instance and side: alive processes at level ≥ i never
/// exceed `2m/2^i` for `i ∈ [1, t]`.
fn level_population(t: &TraceFile) -> Found {
    let mut levels_of: BTreeMap<(Tag, ProcessId, u8), (u32, BTreeMap<ProcessId, u8>)> = BTreeMap::new();
    let mut crashed: BTreeSet<ProcessId> = BTreeSet::new();
    for r in &t.rounds {
        crashed.extend(r.crashed.iter().copied());
        let mut touched = BTreeSet::new();
        for note in &r.notes {
            if let Event::LevelUp {
                instance,
                first,
                side,
                size,
                level,
            } = note.event
            {
                let entry = levels_of.entry((instance, first, side)).or_insert((size, BTreeMap::new()));
                entry.1.insert(note.pid, level);
                touched.insert((instance, first, side));
            }
        }
        for key in touched {
            let (size, lv) = &levels_of[&key];
            let top = levels(*size as usize);
            for i in 1..=top {
                let count = lv.iter().filter(|(p, &l)| l as u32 >= i && !crashed.contains(p)).count() as u64;
                let bound = (2 * *size as u64) >> i;
                if count > bound {
                    return Some((
                        Some(r.round),
                        format!("{count} processes at level ≥ {i} in an instance of {size} (bound {bound})"),
                    ));
                }
            }
        }
    }
    None
}

fn flag(ok: bool, what: impl FnOnce() -> String) -> Found {
    (!ok).then(|| (None, what()))
}

/// Run every invariant that applies to the trace's protocol.
pub fn verify_trace(t: &TraceFile) -> Report {
    let h = &t.header;
    let mut report = Report::default();
    let verdicts = evaluate(h, &t.result);
    let proto = h.protocol.split(':').next().unwrap_or_default().to_string();
    let few_faults = 10 * h.f < h.n;
    let at_end = Some(t.result.metrics.rounds);

    report.push("crash_budget", crash_budget(t), false);
    report.push("deliveries_legal", deliveries_legal(t), false);
    report.push(
        "termination",
        (!verdicts.termination).then(|| (at_end, "an alive process has no output".into())),
        false,
    );
    match proto.as_str() {
        "gossip" => {
            report.push(
                "gossip_completeness",
                flag(verdicts.agreement, || "an alive process misses an alive rumor".into()),
                false,
            );
            let want = gossip_budget(h.n, &h.profile);
            let got = t.result.metrics.rounds;
            report.push(
                "gossip_duration",
                flag(got == want, || format!("ran {got} rounds, recurrence gives {want}")),
                false,
            );
        }
        "fuzzy" => {
            report.push(
                "fuzzy_sandwich",
                flag(verdicts.agreement && verdicts.validity, || {
                    "a count falls outside [surviving holders, initial holders]".into()
                }),
                false,
            );
            let want = gossip_budget(h.n, &h.profile);
            let got = t.result.metrics.rounds;
            report.push(
                "fuzzy_duration",
                flag(got == want, || format!("ran {got} rounds, recurrence gives {want}")),
                false,
            );
        }
        _ => {
            report.push(
                "agreement",
                flag(verdicts.agreement, || "alive processes decided differently".into()),
                false,
            );
            report.push("validity", flag(verdicts.validity, || "decision is not an input".into()), false);
            if proto == "biased" {
                let ones = h.inputs.iter().filter(|&&b| b).count() as u64;
                let forced = !h.alpha.reached(ones, h.n as u64);
                let any_one = t.result.outputs.iter().flatten().any(|o| *o == Output::Bit(true));
                report.push(
                    "biased_clause",
                    flag(!(forced && any_one), || format!("{ones} ones below {} of {} but 1 decided", h.alpha, h.n)),
                    false,
                );
            }
            if proto == "pc" || proto == "pc_star" {
                let notes = Notes::new(t);
                match Layout::new(h.n, h.x) {
                    Ok(layout) => {
                        report.push("phase1_single_send", phase1_single_send(&notes), false);
                        report.push(
                            "phase1_neighbor_consistency",
                            neighbor_consistency(t, &notes, &layout),
                            !few_faults,
                        );
                        report.push("phase2_fraction_survives", fraction_survives(&notes, &layout), !few_faults);
                        report.push("super_are_same", super_are_same(&notes), !few_faults);
                    }
                    Err(e) => report.push("layout", Some((None, e.to_string())), false),
                }
            }
        }
    }
    if matches!(proto.as_str(), "gossip" | "fuzzy" | "pc" | "pc_star" | "biased") {
        report.push("level_population", level_population(t), h.profile.name != "paper");
    }
    report
}
