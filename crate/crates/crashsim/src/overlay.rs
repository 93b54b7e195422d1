//! Random overlay graphs, their property verifiers and nested families.

use crate::engine::sub_tag;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cell::RefCell;
use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::rc::Rc;

/// Edge-probability multiplier of the construction.
pub const PAPER_EDGE_FACTOR: f64 = 24.0;

/// Retries when a sampled graph has an isolated node.
pub const RESAMPLE_RETRIES: u32 = 8;

/// Exact expansion checks run when `C(n,ℓ)² ≤` this.
pub const EXACT_PAIR_LIMIT: u128 = 1_000_000;

/// Exact density and compactness checks run up to this many nodes.
pub const EXACT_SUBSET_NODES: usize = 16;

/// Default number of samples for sampled verdicts.
pub const DEFAULT_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlayParams {
    pub k: f64,
    pub delta: u32,
    pub gamma: u32,
    pub seed: u64,
}

/// Undirected simple graph on nodes `0..n` with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlayGraph {
    adj: Vec<Vec<u32>>,
    pub params: Option<OverlayParams>,
}

impl OverlayGraph {
    pub fn empty(n: usize) -> Self {
        OverlayGraph {
            adj: vec![Vec::new(); n],
            params: None,
        }
    }

    pub fn complete(n: usize) -> Self {
        OverlayGraph {
            adj: (0..n as u32).map(|v| (0..n as u32).filter(|&u| u != v).collect()).collect(),
            params: None,
        }
    }

    pub fn path(n: usize) -> Self {
        Self::from_edges(n, (1..n as u32).map(|v| (v - 1, v)))
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for (a, b) in edges {
            assert!(a != b, "self-loop at {a}");
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        for l in adj.iter_mut() {
            l.sort_unstable();
            l.dedup();
        }
        OverlayGraph { adj, params: None }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.adj[v as usize]
    }

    pub fn degree(&self, v: u32) -> usize {
        self.adj[v as usize].len()
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.adj[a as usize].binary_search(&b).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn is_complete(&self) -> bool {
        let n = self.n();
        self.adj.iter().all(|l| l.len() + 1 == n)
    }

    pub fn is_subgraph_of(&self, other: &OverlayGraph) -> bool {
        self.n() == other.n()
            && self.adj.iter().enumerate().all(|(v, l)| l.iter().all(|&u| other.has_edge(v as u32, u)))
    }

    pub fn union(&self, other: &OverlayGraph) -> OverlayGraph {
        assert_eq!(self.n(), other.n());
        let adj = self
            .adj
            .iter()
            .zip(&other.adj)
            .map(|(a, b)| {
                let mut m = Vec::with_capacity(a.len() + b.len());
                let (mut i, mut j) = (0, 0);
                while i < a.len() || j < b.len() {
                    let next = match (a.get(i), b.get(j)) {
                        (Some(&x), Some(&y)) if x == y => {
                            i += 1;
                            j += 1;
                            x
                        }
                        (Some(&x), Some(&y)) if x < y => {
                            i += 1;
                            x
                        }
                        (Some(_), Some(&y)) => {
                            j += 1;
                            y
                        }
                        (Some(&x), None) => {
                            i += 1;
                            x
                        }
                        (None, Some(&y)) => {
                            j += 1;
                            y
                        }
                        (None, None) => unreachable!(),
                    };
                    m.push(next);
                }
                m
            })
            .collect();
        OverlayGraph { adj, params: None }
    }

    /// Text adjacency list, one `node: n1 n2 ...` line per node.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (v, l) in self.adj.iter().enumerate() {
            let _ = write!(s, "{v}:");
            for u in l {
                let _ = write!(s, " {u}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_dump(text: &str) -> Result<OverlayGraph, String> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let (head, rest) = line.split_once(':').ok_or_else(|| format!("line {}: missing ':'", i + 1))?;
            let v: u32 = head.trim().parse().map_err(|_| format!("line {}: bad node", i + 1))?;
            let nbrs = rest
                .split_whitespace()
                .map(|t| t.parse::<u32>().map_err(|_| format!("line {}: bad neighbour `{t}`", i + 1)))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push((v, nbrs));
        }
        let n = rows.iter().map(|(v, l)| l.iter().copied().chain([*v]).max().unwrap_or(0) + 1).max().unwrap_or(0);
        let g = OverlayGraph::from_edges(
            n as usize,
            rows.iter().flat_map(|(v, l)| l.iter().map(move |&u| (*v, u))),
        );
        for (v, l) in &rows {
            if g.degree(*v) != l.len() {
                return Err(format!("adjacency of node {v} is not symmetric"));
            }
        }
        Ok(g)
    }

    fn bfs(&self, src: u32, allowed: Option<&[bool]>, radius: u32) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.n()];
        dist[src as usize] = 0;
        let mut q = VecDeque::from([src]);
        while let Some(v) = q.pop_front() {
            let d = dist[v as usize];
            if d == radius {
                continue;
            }
            for &u in self.neighbors(v) {
                if dist[u as usize] == u32::MAX && allowed.is_none_or(|a| a[u as usize]) {
                    dist[u as usize] = d + 1;
                    q.push_back(u);
                }
            }
        }
        dist
    }
}

/// `min(1, c_p·δ/k)`.
pub fn edge_probability(k: f64, delta: u32, edge_factor: f64) -> f64 {
    if k <= 0.0 {
        return 1.0;
    }
    (edge_factor * delta as f64 / k).min(1.0)
}

fn graph_seed(n: usize, p: &OverlayParams, edge_factor: f64, attempt: u32) -> u64 {
    [n as u64, p.k.to_bits(), p.delta as u64, p.gamma as u64, edge_factor.to_bits(), attempt as u64]
        .into_iter()
        .fold(p.seed, sub_tag)
}

fn sample_er(n: usize, prob: f64, seed: u64) -> OverlayGraph {
    if prob >= 1.0 {
        return OverlayGraph::complete(n);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj = vec![Vec::new(); n];
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen::<f64>() < prob {
                adj[a].push(b as u32);
                adj[b].push(a as u32);
            }
        }
    }
    OverlayGraph { adj, params: None }
}

/// Erdős–Rényi graph `G(n, min(1, 24δ/k))` seeded by all parameters.
pub fn build_overlay(n: usize, k: f64, delta: u32, gamma: u32, seed: u64) -> OverlayGraph {
    build_overlay_with(n, k, delta, gamma, seed, PAPER_EDGE_FACTOR)
}

/// As [`build_overlay`] with an explicit edge-probability multiplier.
pub fn build_overlay_with(n: usize, k: f64, delta: u32, gamma: u32, seed: u64, edge_factor: f64) -> OverlayGraph {
    let params = OverlayParams { k, delta, gamma, seed };
    let prob = edge_probability(k, delta, edge_factor);
    let mut g = sample_er(n, prob, graph_seed(n, &params, edge_factor, 0));
    g.params = Some(params);
    g
}

/// As [`build_overlay_with`], resampling while some node is isolated.
pub fn build_overlay_checked(n: usize, k: f64, delta: u32, gamma: u32, seed: u64, edge_factor: f64) -> OverlayGraph {
    let params = OverlayParams { k, delta, gamma, seed };
    let prob = edge_probability(k, delta, edge_factor);
    let mut g = sample_er(n, prob, graph_seed(n, &params, edge_factor, 0));
    for attempt in 1..=RESAMPLE_RETRIES {
        if n < 2 || (0..n as u32).all(|v| g.degree(v) > 0) {
            break;
        }
        g = sample_er(n, prob, graph_seed(n, &params, edge_factor, attempt));
    }
    g.params = Some(params);
    g
}

/// Result of a property check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub holds: bool,
    pub sampled: bool,
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
        if r > u64::MAX as u128 {
            return u128::MAX;
        }
    }
    r
}

fn combinations(n: usize, l: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur: Vec<u32> = (0..l as u32).collect();
    if l > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = l;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if (cur[i] as usize) < n - l + i {
                break;
            }
        }
        cur[i] += 1;
        for j in i + 1..l {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

fn connected(g: &OverlayGraph, a: &[u32], in_b: &[bool]) -> bool {
    a.iter().any(|&v| g.neighbors(v).iter().any(|&u| in_b[u as usize]))
}

/// Whether any two disjoint ℓ-subsets are joined by an edge.
pub fn check_expansion(g: &OverlayGraph, l: usize, samples: usize, seed: u64) -> Verdict {
    let n = g.n();
    if l == 0 || 2 * l > n {
        return Verdict { holds: true, sampled: false };
    }
    let c = binomial(n as u64, l as u64);
    let mut in_b = vec![false; n];
    if c.saturating_mul(c) <= EXACT_PAIR_LIMIT {
        let sets = combinations(n, l);
        for a in &sets {
            for b in &sets {
                if a.iter().any(|v| b.contains(v)) {
                    continue;
                }
                b.iter().for_each(|&v| in_b[v as usize] = true);
                let ok = connected(g, a, &in_b);
                b.iter().for_each(|&v| in_b[v as usize] = false);
                if !ok {
                    return Verdict { holds: false, sampled: false };
                }
            }
        }
        return Verdict { holds: true, sampled: false };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples.max(DEFAULT_SAMPLES) {
        let pick = sample(&mut rng, n, 2 * l).into_vec();
        let (a, b) = pick.split_at(l);
        let a: Vec<u32> = a.iter().map(|&v| v as u32).collect();
        b.iter().for_each(|&v| in_b[v] = true);
        let ok = connected(g, &a, &in_b);
        b.iter().for_each(|&v| in_b[v] = false);
        if !ok {
            return Verdict { holds: false, sampled: true };
        }
    }
    Verdict { holds: true, sampled: true }
}

fn internal_edges(g: &OverlayGraph, members: &[u32], mark: &mut [bool]) -> usize {
    members.iter().for_each(|&v| mark[v as usize] = true);
    let twice: usize = members
        .iter()
        .map(|&v| g.neighbors(v).iter().filter(|&&u| mark[u as usize]).count())
        .sum();
    members.iter().for_each(|&v| mark[v as usize] = false);
    twice / 2
}

fn density_ok(size: usize, edges: usize, l: usize, alpha: f64, beta: f64) -> bool {
    let lower = size < l || edges as f64 >= alpha * size as f64;
    let upper = size > l || edges as f64 <= beta * size as f64;
    lower && upper
}

fn mask_members(mask: u32) -> Vec<u32> {
    (0..32).filter(|b| mask >> b & 1 == 1).collect()
}

/// `(ℓ, α, β)`-edge-density: sets of at least ℓ nodes have at least `α|X|`
/// internal edges, sets of at most ℓ nodes at most `β|Y|`.
pub fn check_edge_density(g: &OverlayGraph, l: usize, alpha: f64, beta: f64, samples: usize, seed: u64) -> Verdict {
    let n = g.n();
    let mut mark = vec![false; n];
    if n <= EXACT_SUBSET_NODES {
        for mask in 0u32..(1 << n) {
            let m = mask_members(mask);
            if !density_ok(m.len(), internal_edges(g, &m, &mut mark), l, alpha, beta) {
                return Verdict { holds: false, sampled: false };
            }
        }
        return Verdict { holds: true, sampled: false };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..samples.max(1) {
        let size = if i % 2 == 0 { l.clamp(1, n) } else { rng.gen_range(1..=n) };
        let m: Vec<u32> = sample(&mut rng, n, size).into_iter().map(|v| v as u32).collect();
        if !density_ok(size, internal_edges(g, &m, &mut mark), l, alpha, beta) {
            return Verdict { holds: false, sampled: true };
        }
    }
    Verdict { holds: true, sampled: true }
}

/// The δ-core of `G|_B`: the largest subset of `B` whose induced subgraph
/// has minimum degree at least δ. Sorted; empty if none.
pub fn find_survival_set(g: &OverlayGraph, b: &[u32], delta: u32) -> Vec<u32> {
    let n = g.n();
    let mut inside = vec![false; n];
    b.iter().for_each(|&v| inside[v as usize] = true);
    let mut deg = vec![0u32; n];
    let mut queue = Vec::new();
    for &v in b {
        deg[v as usize] = g.neighbors(v).iter().filter(|&&u| inside[u as usize]).count() as u32;
        if deg[v as usize] < delta {
            queue.push(v);
        }
    }
    let mut removed = vec![false; n];
    while let Some(v) = queue.pop() {
        if removed[v as usize] {
            continue;
        }
        removed[v as usize] = true;
        inside[v as usize] = false;
        for &u in g.neighbors(v) {
            if inside[u as usize] {
                deg[u as usize] -= 1;
                if deg[u as usize] < delta {
                    queue.push(u);
                }
            }
        }
    }
    let mut core: Vec<u32> = b.iter().copied().filter(|&v| inside[v as usize]).collect();
    core.sort_unstable();
    core.dedup();
    core
}

/// `(ℓ, ε, δ)`-compactness: every set of at least ℓ nodes contains a
/// survival set of at least `εℓ` nodes.
pub fn check_compactness(g: &OverlayGraph, l: usize, eps: f64, delta: u32, samples: usize, seed: u64) -> Verdict {
    let n = g.n();
    let need = eps * l as f64;
    if l > n {
        return Verdict { holds: true, sampled: false };
    }
    if n <= EXACT_SUBSET_NODES {
        for mask in 0u32..(1 << n) {
            let b = mask_members(mask);
            if b.len() >= l && (find_survival_set(g, &b, delta).len() as f64) < need {
                return Verdict { holds: false, sampled: false };
            }
        }
        return Verdict { holds: true, sampled: false };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..samples.max(1) {
        // cores are monotone under inclusion, so size ℓ is the hardest case
        let size = if i % 2 == 0 { l.max(1) } else { rng.gen_range(l.max(1)..=n) };
        let b: Vec<u32> = sample(&mut rng, n, size).into_iter().map(|v| v as u32).collect();
        if (find_survival_set(g, &b, delta).len() as f64) < need {
            return Verdict { holds: false, sampled: true };
        }
    }
    Verdict { holds: true, sampled: true }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseNeighborhood {
    pub center: u32,
    pub members: Vec<u32>,
    pub gamma: u32,
    pub delta: u32,
}

/// Largest `(γ, δ)`-dense-neighbourhood of `v`, optionally inside the
/// induced subgraph on `allowed`. `None` if pruning removes `v`.
pub fn dense_neighborhood(
    g: &OverlayGraph,
    v: u32,
    gamma: u32,
    delta: u32,
    allowed: Option<&[bool]>,
) -> Option<DenseNeighborhood> {
    if allowed.is_some_and(|a| !a[v as usize]) {
        return None;
    }
    let dist = g.bfs(v, allowed, gamma);
    let n = g.n();
    let mut inside: Vec<bool> = dist.iter().map(|&d| d <= gamma).collect();
    let inner = |u: u32| dist[u as usize] < gamma;
    let mut cnt = vec![0u32; n];
    let mut queue = Vec::new();
    for u in (0..n as u32).filter(|&u| inside[u as usize]) {
        cnt[u as usize] = g.neighbors(u).iter().filter(|&&w| inside[w as usize]).count() as u32;
        if inner(u) && cnt[u as usize] < delta {
            queue.push(u);
        }
    }
    while let Some(u) = queue.pop() {
        if !inside[u as usize] {
            continue;
        }
        inside[u as usize] = false;
        for &w in g.neighbors(u) {
            if inside[w as usize] {
                cnt[w as usize] -= 1;
                if inner(w) && cnt[w as usize] < delta {
                    queue.push(w);
                }
            }
        }
    }
    inside[v as usize].then(|| DenseNeighborhood {
        center: v,
        members: (0..n as u32).filter(|&u| inside[u as usize]).collect(),
        gamma,
        delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diameter {
    Finite(u32),
    Disconnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("survival set is empty")]
pub struct EmptySurvivalSet;

/// Diameter of `G|_C` for the δ-core `C` of `G|_B`, by growing bitset
/// balls around every core node at once.
pub fn survival_diameter(g: &OverlayGraph, b: &[u32], delta: u32) -> Result<Diameter, EmptySurvivalSet> {
    let core = find_survival_set(g, b, delta);
    if core.is_empty() {
        return Err(EmptySurvivalSet);
    }
    let c = core.len();
    let words = c.div_ceil(64);
    let mut pos = vec![u32::MAX; g.n()];
    core.iter().enumerate().for_each(|(i, &v)| pos[v as usize] = i as u32);
    let local: Vec<Vec<usize>> = core
        .iter()
        .map(|&v| {
            g.neighbors(v)
                .iter()
                .filter_map(|&u| (pos[u as usize] != u32::MAX).then_some(pos[u as usize] as usize))
                .collect()
        })
        .collect();
    let mut ball = vec![0u64; c * words];
    for i in 0..c {
        ball[i * words + i / 64] |= 1 << (i % 64);
    }
    let full = |row: &[u64]| row.iter().map(|w| w.count_ones() as usize).sum::<usize>() == c;
    let mut next = ball.clone();
    let mut radius = 0;
    while !ball.chunks(words).all(full) {
        for i in 0..c {
            let row = &mut next[i * words..(i + 1) * words];
            row.copy_from_slice(&ball[i * words..(i + 1) * words]);
            for &j in &local[i] {
                row.iter_mut().zip(&ball[j * words..(j + 1) * words]).for_each(|(a, b)| *a |= b);
            }
        }
        if next == ball {
            return Ok(Diameter::Disconnected);
        }
        std::mem::swap(&mut ball, &mut next);
        radius += 1;
    }
    Ok(Diameter::Finite(radius))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    In,
    Out,
    H,
}

/// Nested graphs `G(0) ⊆ … ⊆ G(t)` plus the clique `G(t+1)`.
#[derive(Debug, Clone)]
pub struct GraphFamily {
    pub kind: FamilyKind,
    pub graphs: Vec<Rc<OverlayGraph>>,
}

impl GraphFamily {
    pub fn level(&self, i: usize) -> &OverlayGraph {
        &self.graphs[i.min(self.graphs.len() - 1)]
    }

    pub fn top(&self) -> usize {
        self.graphs.len() - 1
    }
}

type CacheKey = (u8, usize, usize, u32, u32, u32, u64, u64);
type GraphKey = (usize, u64, u32, u32, u64, u64);

thread_local! {
    static FAMILY_CACHE: RefCell<HashMap<CacheKey, Rc<GraphFamily>>> = RefCell::new(HashMap::new());
    static GRAPH_CACHE: RefCell<HashMap<GraphKey, Rc<OverlayGraph>>> = RefCell::new(HashMap::new());
}

/// [`build_overlay_checked`] through a per-thread cache.
pub fn cached_overlay(n: usize, k: f64, delta: u32, gamma: u32, seed: u64, edge_factor: f64) -> Rc<OverlayGraph> {
    let key = (n, k.to_bits(), delta, gamma, seed, edge_factor.to_bits());
    if let Some(g) = GRAPH_CACHE.with(|c| c.borrow().get(&key).cloned()) {
        return g;
    }
    let g = Rc::new(build_overlay_checked(n, k, delta, gamma, seed, edge_factor));
    GRAPH_CACHE.with(|c| c.borrow_mut().insert(key, g.clone()));
    g
}

/// Build (or fetch from the per-thread cache) a family on `nodes` nodes.
///
/// `Out`: `k_j = 2·scale/(3·2^j)`; `In`: `k_j = scale/(3·2^j)`, for
/// `j ∈ 0..=t`, cumulative unions, clique at `t+1`. `H`: the single graph
/// with `k = nodes/3`.
#[allow(clippy::too_many_arguments)]
pub fn build_family(
    kind: FamilyKind,
    nodes: usize,
    scale: usize,
    t: u32,
    delta: u32,
    gamma: u32,
    seed: u64,
    edge_factor: f64,
) -> Rc<GraphFamily> {
    let key = (kind as u8, nodes, scale, t, delta, gamma, seed, edge_factor.to_bits());
    if let Some(f) = FAMILY_CACHE.with(|c| c.borrow().get(&key).cloned()) {
        return f;
    }
    let fam = Rc::new(build_family_uncached(kind, nodes, scale, t, delta, gamma, seed, edge_factor));
    FAMILY_CACHE.with(|c| c.borrow_mut().insert(key, fam.clone()));
    fam
}

#[allow(clippy::too_many_arguments)]
fn build_family_uncached(
    kind: FamilyKind,
    nodes: usize,
    scale: usize,
    t: u32,
    delta: u32,
    gamma: u32,
    seed: u64,
    edge_factor: f64,
) -> GraphFamily {
    if kind == FamilyKind::H {
        let g = build_overlay_checked(nodes, nodes as f64 / 3.0, delta, gamma, seed, edge_factor);
        return GraphFamily {
            kind,
            graphs: vec![Rc::new(g)],
        };
    }
    let base = match kind {
        FamilyKind::Out => 2.0 * scale as f64 / 3.0,
        _ => scale as f64 / 3.0,
    };
    let mut graphs: Vec<Rc<OverlayGraph>> = Vec::new();
    for j in 0..=t {
        let prev = graphs.last().cloned();
        if let Some(p) = prev.as_ref().filter(|p| p.is_complete()) {
            graphs.push(p.clone());
            continue;
        }
        let k = base / f64::powi(2.0, j as i32);
        let g = build_overlay_checked(nodes, k, delta, gamma, seed, edge_factor);
        let merged = match prev {
            Some(p) => p.union(&g),
            None => g,
        };
        graphs.push(Rc::new(merged));
    }
    let last = graphs.last().expect("t+1 levels").clone();
    graphs.push(if last.is_complete() {
        last
    } else {
        Rc::new(OverlayGraph::complete(nodes))
    });
    GraphFamily { kind, graphs }
}

/// Whether every node degree lies in `[22nδ/k, 26nδ/k]`.
pub fn check_degree_bounds(g: &OverlayGraph, k: f64, delta: u32) -> Verdict {
    let scale = g.n() as f64 * delta as f64 / k;
    let (lo, hi) = (22.0 * scale, 26.0 * scale);
    let holds = (0..g.n() as u32).all(|v| (lo..=hi).contains(&(g.degree(v) as f64)));
    Verdict { holds, sampled: false }
}

/// Sampled sets `B` of at least `k` nodes: the survival set, when non-empty,
/// is connected with diameter at most `2γ + 1`.
pub fn check_survival_diameter(g: &OverlayGraph, k: usize, delta: u32, gamma: u32, samples: usize, seed: u64) -> Verdict {
    let n = g.n();
    let k = k.clamp(1, n.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples.max(1) {
        let size = rng.gen_range(k..=n);
        let b: Vec<u32> = sample(&mut rng, n, size).into_iter().map(|v| v as u32).collect();
        match survival_diameter(g, &b, delta) {
            Ok(Diameter::Finite(d)) if d <= 2 * gamma + 1 => {}
            Err(EmptySurvivalSet) => {}
            _ => return Verdict { holds: false, sampled: true },
        }
    }
    Verdict { holds: true, sampled: true }
}

/// The overlay properties for parameters `(k, δ, γ)`: `k/64`-expansion,
/// `(k/64, δ/8, δ/4)`-edge-density, `(k, 3/4, δ)`-compactness, degree
/// bounds and survival-set diameter.
pub fn overlay_property_checks(
    g: &OverlayGraph,
    k: f64,
    delta: u32,
    gamma: u32,
    samples: usize,
    seed: u64,
) -> Vec<(&'static str, Verdict)> {
    let small = ((k / 64.0).ceil() as usize).max(1);
    let big = k.ceil() as usize;
    let d = delta as f64;
    vec![
        ("degree_bounds", check_degree_bounds(g, k, delta)),
        ("expansion", check_expansion(g, small, samples, sub_tag(seed, 1))),
        ("edge_density", check_edge_density(g, small, d / 8.0, d / 4.0, samples, sub_tag(seed, 2))),
        ("compactness", check_compactness(g, big, 0.75, delta, samples, sub_tag(seed, 3))),
        ("survival_diameter", check_survival_diameter(g, big, delta, gamma, samples, sub_tag(seed, 4))),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(leaves: u32) -> OverlayGraph {
        OverlayGraph::from_edges(leaves as usize + 1, (1..=leaves).map(|v| (0, v)))
    }

    #[test]
    fn probability_capped_gives_clique() {
        let g = build_overlay(8, 10.0, 5, 1, 3);
        assert!(g.is_complete());
        assert_eq!(g.edge_count(), 28);
    }

    #[test]
    fn construction_is_deterministic() {
        let a = build_overlay(200, 150.0, 2, 2, 11);
        let b = build_overlay(200, 150.0, 2, 2, 11);
        let c = build_overlay(200, 150.0, 2, 2, 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn expansion_examples() {
        assert!(check_expansion(&OverlayGraph::complete(6), 1, 0, 0).holds);
        let p4 = OverlayGraph::path(4);
        let v1 = check_expansion(&p4, 1, 0, 0);
        assert_eq!(v1, Verdict { holds: false, sampled: false });
        assert!(check_expansion(&p4, 2, 0, 0).holds);
        assert!(!check_expansion(&OverlayGraph::empty(6), 2, 0, 0).holds);
    }

    #[test]
    fn expansion_switches_to_sampling() {
        let g = OverlayGraph::complete(60);
        // C(60,3)^2 > 10^6
        let v = check_expansion(&g, 3, 100, 1);
        assert_eq!(v, Verdict { holds: true, sampled: true });
    }

    #[test]
    fn edge_density_examples() {
        let k4 = OverlayGraph::complete(4);
        assert!(check_edge_density(&k4, 3, 1.0, 3.0, 0, 0).holds);
        assert!(!check_edge_density(&OverlayGraph::empty(5), 2, 1.0, 1.0, 0, 0).holds);
        // α = 0 leaves only the upper clause: K4 pairs have 1 ≤ 0.5·2 edges
        assert!(check_edge_density(&k4, 2, 0.0, 0.5, 0, 0).holds);
        assert!(!check_edge_density(&k4, 3, 0.0, 0.5, 0, 0).holds);
    }

    #[test]
    fn survival_set_examples() {
        let k5 = OverlayGraph::complete(5);
        assert_eq!(find_survival_set(&k5, &[0, 1, 2, 3, 4], 4), vec![0, 1, 2, 3, 4]);
        assert!(find_survival_set(&star(5), &(0..6).collect::<Vec<_>>(), 2).is_empty());
        let mut edges: Vec<(u32, u32)> = (0..5).flat_map(|a| (a + 1..5).map(move |b| (a, b))).collect();
        edges.push((4, 5));
        let pendant = OverlayGraph::from_edges(6, edges);
        assert_eq!(find_survival_set(&pendant, &(0..6).collect::<Vec<_>>(), 4), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn compactness_examples() {
        assert!(check_compactness(&OverlayGraph::complete(8), 4, 0.75, 3, 0, 0).holds);
        assert!(!check_compactness(&OverlayGraph::empty(6), 2, 0.5, 1, 0, 0).holds);
    }

    #[test]
    fn dense_neighborhood_examples() {
        let k8 = OverlayGraph::complete(8);
        let dn = dense_neighborhood(&k8, 0, 2, 7, None).unwrap();
        assert_eq!(dn.members, (0..8).collect::<Vec<_>>());
        let p10 = OverlayGraph::path(10);
        assert_eq!(dense_neighborhood(&p10, 0, 2, 2, None), None);
        assert_eq!(dense_neighborhood(&p10, 1, 2, 2, None), None);
        // an interior node of the path keeps its whole radius-2 ball
        assert_eq!(dense_neighborhood(&p10, 5, 2, 2, None).unwrap().members, vec![3, 4, 5, 6, 7]);
    }

    #[test]
    fn diameter_examples() {
        let k8 = OverlayGraph::complete(8);
        assert_eq!(survival_diameter(&k8, &[0, 3, 5], 1), Ok(Diameter::Finite(1)));
        assert_eq!(survival_diameter(&star(4), &[1, 2, 3], 1), Err(EmptySurvivalSet));
        let mut edges: Vec<(u32, u32)> = Vec::new();
        for base in [0u32, 4] {
            for a in 0..4 {
                for b in a + 1..4 {
                    edges.push((base + a, base + b));
                }
            }
        }
        let two = OverlayGraph::from_edges(8, edges);
        assert_eq!(survival_diameter(&two, &(0..8).collect::<Vec<_>>(), 2), Ok(Diameter::Disconnected));
        assert!(!check_expansion(&two, 4, 0, 0).holds);
    }

    #[test]
    fn families_are_nested_with_clique_on_top() {
        let fam = build_family(FamilyKind::In, 64, 128, 7, 2, 2, 5, 2.0);
        assert_eq!(fam.graphs.len(), 9);
        for w in fam.graphs.windows(2) {
            assert!(w[0].is_subgraph_of(&w[1]));
        }
        assert!(fam.graphs[8].is_complete());
        assert!(!fam.graphs[0].is_complete());
        let again = build_family_uncached(FamilyKind::In, 64, 128, 7, 2, 2, 5, 2.0);
        for (a, b) in fam.graphs.iter().zip(&again.graphs) {
            assert_eq!(**a, **b);
        }
    }

    #[test]
    fn dump_round_trips() {
        let g = build_overlay_with(12, 12.0, 1, 1, 4, 3.0);
        let text = g.dump();
        let mut back = OverlayGraph::parse_dump(&text).unwrap();
        back.params = g.params;
        assert_eq!(back, g);
        assert!(text.lines().next().unwrap().starts_with("0:"));
    }
}
