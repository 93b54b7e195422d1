use crashsim::overlay::{
    build_overlay, check_compactness, check_edge_density, check_expansion, dense_neighborhood, find_survival_set,
    survival_diameter, Diameter, OverlayGraph, DEFAULT_SAMPLES,
};
use proptest::prelude::*;

fn graph(n: usize, mask: &[bool]) -> OverlayGraph {
    let mut edges = Vec::new();
    let mut bits = mask.iter().cycle();
    for a in 0..n as u32 {
        for b in a + 1..n as u32 {
            if *bits.next().unwrap() {
                edges.push((a, b));
            }
        }
    }
    OverlayGraph::from_edges(n, edges)
}

fn small_graph() -> impl Strategy<Value = OverlayGraph> {
    (3usize..=9, prop::collection::vec(any::<bool>(), 1..64)).prop_map(|(n, m)| graph(n, &m))
}

fn members(mask: u32, n: usize) -> Vec<u32> {
    (0..n as u32).filter(|v| mask >> v & 1 == 1).collect()
}

fn induced_edges(g: &OverlayGraph, s: &[u32]) -> usize {
    s.iter()
        .map(|&v| g.neighbors(v).iter().filter(|u| s.contains(u)).count())
        .sum::<usize>()
        / 2
}

fn min_degree_ok(g: &OverlayGraph, s: &[u32], delta: u32) -> bool {
    s.iter()
        .all(|&v| g.neighbors(v).iter().filter(|u| s.contains(u)).count() as u32 >= delta)
}

/// Union of all subsets of `b` with induced minimum degree ≥ δ.
fn brute_core(g: &OverlayGraph, b: &[u32], delta: u32) -> Vec<u32> {
    let mut best = 0u32;
    for sub in 0u32..(1 << b.len()) {
        let s: Vec<u32> = (0..b.len()).filter(|i| sub >> i & 1 == 1).map(|i| b[i]).collect();
        if min_degree_ok(g, &s, delta) {
            best |= s.iter().fold(0, |m, v| m | 1 << v);
        }
    }
    members(best, g.n())
}

proptest! {
    #[test]
    fn survival_set_is_the_maximal_core(g in small_graph(), bmask in any::<u32>(), delta in 0u32..4) {
        let b = members(bmask, g.n());
        let core = find_survival_set(&g, &b, delta);
        prop_assert!(min_degree_ok(&g, &core, delta));
        prop_assert_eq!(core, brute_core(&g, &b, delta));
    }

    #[test]
    fn pruning_order_does_not_matter(g in small_graph(), bmask in any::<u32>(), delta in 0u32..4, rot in 0usize..9) {
        let b = members(bmask, g.n());
        let mut shuffled = b.clone();
        shuffled.reverse();
        let k = rot % shuffled.len().max(1);
        shuffled.rotate_left(k);
        prop_assert_eq!(find_survival_set(&g, &b, delta), find_survival_set(&g, &shuffled, delta));
    }

    #[test]
    fn exact_expansion_matches_enumeration(g in small_graph(), l in 1usize..4) {
        let n = g.n();
        prop_assume!(2 * l <= n);
        let v = check_expansion(&g, l, DEFAULT_SAMPLES, 1);
        prop_assert!(!v.sampled);
        let mut holds = true;
        for a in 0u32..(1 << n) {
            for c in 0u32..(1 << n) {
                if a.count_ones() as usize == l && c.count_ones() as usize == l && a & c == 0 {
                    let (sa, sc) = (members(a, n), members(c, n));
                    holds &= sa.iter().any(|&x| sc.iter().any(|&y| g.has_edge(x, y)));
                }
            }
        }
        prop_assert_eq!(v.holds, holds);
    }

    #[test]
    fn exact_density_matches_enumeration(g in small_graph(), l in 1usize..6, a in 0.0f64..2.0, b in 0.0f64..2.0) {
        let n = g.n();
        let v = check_edge_density(&g, l, a, b, DEFAULT_SAMPLES, 1);
        prop_assert!(!v.sampled);
        let holds = (0u32..(1 << n)).all(|m| {
            let s = members(m, n);
            let e = induced_edges(&g, &s) as f64;
            (s.len() < l || e >= a * s.len() as f64) && (s.len() > l || e <= b * s.len() as f64)
        });
        prop_assert_eq!(v.holds, holds);
    }

    #[test]
    fn exact_compactness_matches_enumeration(g in small_graph(), l in 1usize..6, delta in 0u32..3) {
        let n = g.n();
        let v = check_compactness(&g, l, 0.75, delta, DEFAULT_SAMPLES, 1);
        let holds = l > n || (0u32..(1 << n)).all(|m| {
            let s = members(m, n);
            s.len() < l || brute_core(&g, &s, delta).len() as f64 >= 0.75 * l as f64
        });
        prop_assert_eq!(v.holds, holds);
    }

    #[test]
    fn dense_neighborhood_obeys_its_definition(g in small_graph(), v in 0u32..9, gamma in 1u32..3, delta in 0u32..3) {
        prop_assume!((v as usize) < g.n());
        if let Some(d) = dense_neighborhood(&g, v, gamma, delta, None) {
            prop_assert!(d.members.contains(&v));
            for &u in &d.members {
                let dist = bfs_dist(&g, v, u);
                prop_assert!(dist <= gamma);
                if dist < gamma {
                    let inside = g.neighbors(u).iter().filter(|w| d.members.contains(w)).count() as u32;
                    prop_assert!(inside >= delta);
                }
            }
        }
    }

    #[test]
    fn sampled_failures_are_real(seed in 0u64..50) {
        // 20 nodes forces the sampled path; a reported violation must be
        // witnessed by some set, so a sampled check never fails a clique
        let g = OverlayGraph::complete(20);
        prop_assert!(check_compactness(&g, 10, 0.75, 3, 200, seed).holds);
        prop_assert!(check_expansion(&g, 8, 200, seed).holds);
        let sparse = build_overlay(20, 20.0, 1, 1, seed);
        let v = check_compactness(&sparse, 10, 0.75, 19, 200, seed);
        prop_assert!(v.sampled && !v.holds);
    }
}

fn bfs_dist(g: &OverlayGraph, s: u32, t: u32) -> u32 {
    let mut dist = vec![u32::MAX; g.n()];
    dist[s as usize] = 0;
    let mut q = std::collections::VecDeque::from([s]);
    while let Some(v) = q.pop_front() {
        for &u in g.neighbors(v) {
            if dist[u as usize] == u32::MAX {
                dist[u as usize] = dist[v as usize] + 1;
                q.push_back(u);
            }
        }
    }
    dist[t as usize]
}

#[test]
fn path_expansion_and_k8_examples() {
    let p = OverlayGraph::path(4);
    assert!(!check_expansion(&p, 1, DEFAULT_SAMPLES, 0).holds);
    assert!(check_expansion(&p, 2, DEFAULT_SAMPLES, 0).holds);
    assert!(build_overlay(8, 10.0, 5, 1, 3).is_complete());
    assert_eq!(build_overlay(64, 20.0, 2, 2, 9), build_overlay(64, 20.0, 2, 2, 9));
}

#[test]
fn survival_diameter_on_a_cycle() {
    let cycle = OverlayGraph::from_edges(6, (0..6u32).map(|i| (i, (i + 1) % 6)));
    let all: Vec<u32> = (0..6).collect();
    assert_eq!(survival_diameter(&cycle, &all, 2), Ok(Diameter::Finite(3)));
    assert_eq!(survival_diameter(&cycle, &[0, 1, 2, 3], 1), Ok(Diameter::Finite(3)));
}
