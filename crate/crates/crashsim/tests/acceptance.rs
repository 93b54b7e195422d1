//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//! Pass criterion ids (`C4`, `C8`, ...) as arguments to run a subset.

mod common;

use common::signaling_scenario;
use crashsim::experiments::{run_cell, run_sweep, verify_trace, ResultRow, RunConfig};
use crashsim::overlay::{
    build_overlay, check_compactness, check_degree_bounds, check_edge_density, check_expansion, survival_diameter,
    Diameter,
};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

/// Safety, fuzzy and gossip matrix shared by C1–C3 and C7.
const MATRIX_NS: &str = "16, 64, 256";
const MATRIX_SEEDS: &str = "1..10";

const C4_SCENARIOS_PER_N: u64 = 100;

const C5_N: usize = 1024;
const C5_DELTA: u32 = 10;
const C5_GAMMA: u32 = 4;
const C5_SEEDS: u64 = 20;
const C5_DEGREE_PASS_RATE: f64 = 0.9;
const C5_SAMPLES: usize = 1000;
const C5_SETS_PER_GRAPH: usize = 5;

const C6_RATIO_LIMIT: f64 = 16.0;

struct Verdict {
    passed: bool,
    summary: String,
}

fn verdict(passed: bool, summary: String) -> Verdict {
    Verdict { passed, summary }
}

fn sweep(text: &str) -> Vec<ResultRow> {
    let cfg = RunConfig::parse(text).expect("acceptance config parses");
    run_sweep(&cfg).expect("sweep runs")
}

fn c1_consensus_safety() -> Verdict {
    let rows = sweep(&format!(
        "protocol = pc, pc_star\nn = {MATRIX_NS}\nf = 0, n/10-1, n-1\nx = 1, 4, 16, n\nseeds = {MATRIX_SEEDS}\nadversary = all\n"
    ));
    let bad: Vec<&ResultRow> = rows.iter().filter(|r| !(r.agreement_ok && r.validity_ok)).collect();
    let first = bad
        .first()
        .map(|r| format!("; first: {} n={} f={} x={} {} seed {}", r.protocol, r.n, r.f, r.x, r.adversary, r.seed))
        .unwrap_or_default();
    verdict(
        bad.is_empty(),
        format!("{} cells, {} with agreement, validity and termination{first}", rows.len(), rows.len() - bad.len()),
    )
}

/// Run every cell with a trace and collect the named verifier checks.
fn traced_matrix(protocol: &str, checks: &[&str]) -> (usize, BTreeMap<String, usize>) {
    let cfg = RunConfig::parse(&format!(
        "protocol = {protocol}\nn = {MATRIX_NS}\nf = 0, n/10-1, n-1\nseeds = {MATRIX_SEEDS}\nadversary = all\n"
    ))
    .expect("config parses");
    let mut failures: BTreeMap<String, usize> = checks.iter().map(|c| (c.to_string(), 0)).collect();
    let mut cells = 0;
    for cell in cfg.cells() {
        let run = run_cell(&cfg, &cell, true).expect("cell runs");
        let report = verify_trace(run.trace.as_ref().expect("recorded"));
        for &name in checks {
            if !report.get(name).is_some_and(|c| c.passed) {
                *failures.get_mut(name).unwrap() += 1;
            }
        }
        cells += 1;
    }
    (cells, failures)
}

fn describe(cells: usize, failures: &BTreeMap<String, usize>) -> (bool, String) {
    let ok = failures.values().all(|&v| v == 0);
    let parts: Vec<String> = failures.iter().map(|(k, v)| format!("{k} violations {v}")).collect();
    (ok, format!("{cells} cells, {}", parts.join(", ")))
}

fn c2_fuzzy_sandwich() -> Verdict {
    let (cells, failures) = traced_matrix("fuzzy", &["fuzzy_sandwich"]);
    let (ok, s) = describe(cells, &failures);
    verdict(ok, s)
}

fn c3_gossip_completeness() -> Verdict {
    let (cells, failures) = traced_matrix("gossip", &["gossip_completeness", "gossip_duration"]);
    let (ok, s) = describe(cells, &failures);
    verdict(ok, s)
}

fn c4_signaling_properties() -> Verdict {
    let (mut p1, mut p2, mut p3, mut premises, mut survivors, mut runs) = (0, 0, 0, 0, 0, 0);
    for n in [32, 128] {
        for seed in 0..C4_SCENARIOS_PER_N {
            let c = signaling_scenario(n, 0xC4 << 32 | (n as u64) << 16 | seed);
            p1 += c.dense_but_dropped.len();
            p2 += c.survived_without_evidence.len();
            p3 += c.core_but_dropped.len();
            premises += c.premises;
            survivors += c.survivors;
            runs += 1;
        }
    }
    verdict(
        p1 + p2 + p3 == 0 && premises > 0 && survivors > 0,
        format!(
            "{runs} scenarios; counterexamples: property 1 {p1}, property 2 {p2}, property 3 {p3} \
             ({premises} dense-neighbourhood premises, {survivors} survivors checked)"
        ),
    )
}

fn c5_overlay_statistics() -> Verdict {
    let k = C5_N as f64 / 3.0;
    let small = (k / 64.0).ceil() as usize;
    let big = k.ceil() as usize;
    let d = C5_DELTA as f64;
    let (mut degree_ok, mut qualifying, mut density_ok, mut pairs, mut short) = (0, 0, 0, 0, 0);
    for seed in 1..=C5_SEEDS {
        let g = build_overlay(C5_N, k, C5_DELTA, C5_GAMMA, seed);
        degree_ok += check_degree_bounds(&g, k, C5_DELTA).holds as usize;
        density_ok += check_edge_density(&g, small, d / 8.0, d / 4.0, C5_SAMPLES, seed).holds as usize;
        let expands = check_expansion(&g, small, C5_SAMPLES, seed).holds;
        let compact = check_compactness(&g, big, 0.75, C5_DELTA, C5_SAMPLES, seed).holds;
        if !(expands && compact) {
            continue;
        }
        qualifying += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC5);
        for _ in 0..C5_SETS_PER_GRAPH {
            let size = rng.gen_range(big..=C5_N);
            let b: Vec<u32> = sample(&mut rng, C5_N, size).into_iter().map(|v| v as u32).collect();
            if let Ok(diam) = survival_diameter(&g, &b, C5_DELTA) {
                pairs += 1;
                short += matches!(diam, Diameter::Finite(x) if x <= 2 * C5_GAMMA + 1) as usize;
            }
        }
    }
    let rate = degree_ok as f64 / C5_SEEDS as f64;
    verdict(
        rate >= C5_DEGREE_PASS_RATE && pairs > 0 && short == pairs,
        format!(
            "degree window held in {degree_ok}/{C5_SEEDS} graphs (need {:.0}%); diameter <= {} in {short}/{pairs} \
             pairs over {qualifying} graphs passing expansion and compactness; edge density held in {density_ok}/{C5_SEEDS}",
            100.0 * C5_DEGREE_PASS_RATE,
            2 * C5_GAMMA + 1
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

fn c6_tradeoff_trend() -> Verdict {
    let rows = sweep("protocol = pc\nn = 1024\nf = n/10-1\nx = 1, 4, 16, 64\nseeds = 1..10\nadversary = targeted_heavy_senders\n");
    let xs = [1usize, 4, 16, 64];
    let per_x: Vec<(f64, f64)> = xs
        .iter()
        .map(|&x| {
            let of_x: Vec<&ResultRow> = rows.iter().filter(|r| r.x == x).collect();
            (
                median(of_x.iter().map(|r| r.rounds as f64).collect()),
                median(of_x.iter().map(|r| r.amortized_bits).collect()),
            )
        })
        .collect();
    let rounds_up = per_x.windows(2).all(|w| w[1].0 > w[0].0);
    let bits_down = per_x.windows(2).all(|w| w[1].1 < w[0].1);
    let products: Vec<f64> = per_x.iter().map(|(r, b)| r * b).collect();
    let ratio = products.iter().cloned().fold(f64::MIN, f64::max) / products.iter().cloned().fold(f64::MAX, f64::min);
    let safe = rows.iter().all(|r| r.agreement_ok && r.validity_ok);
    let table: Vec<String> = xs
        .iter()
        .zip(&per_x)
        .map(|(x, (r, b))| format!("x={x}: rounds {r:.0}, bits {b:.0}"))
        .collect();
    verdict(
        rounds_up && bits_down && ratio <= C6_RATIO_LIMIT && safe,
        format!(
            "{}; rounds increase {rounds_up}, bits decrease {bits_down}, product ratio {ratio:.2} (limit {C6_RATIO_LIMIT}), all safe {safe}",
            table.join("; ")
        ),
    )
}

fn c7_biased_clause() -> Verdict {
    let rows = sweep(&format!(
        "protocol = biased\nn = {MATRIX_NS}\nf = 0, n/10-1\nalpha = 1/3, 1/2, 2/3, 3/4\ninputs = below_alpha\nseeds = {MATRIX_SEEDS}\nadversary = all\n"
    ));
    let zero = rows.iter().filter(|r| r.decided_value == "0" && r.agreement_ok).count();
    verdict(zero == rows.len(), format!("{zero}/{} cells decided 0", rows.len()))
}

fn tree_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .expect("trace dir")
        .map(|e| {
            let p = e.expect("entry").path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).expect("trace"))
        })
        .collect()
}

fn c8_determinism() -> Verdict {
    let root: PathBuf = std::env::temp_dir().join(format!("crashsim-acceptance-{}", std::process::id()));
    let run = |tag: &str| {
        let dir = root.join(tag);
        let text = format!(
            "protocol = pc, pc_star, biased, gossip, fuzzy\nn = 16\nf = 0, 1, n-1\nx = 1, 4\nseeds = 1..2\n\
             adversary = all\noutput = {}\ntrace_dir = {}\n",
            dir.join("results.csv").display(),
            dir.join("traces").display()
        );
        sweep(&text);
        (std::fs::read(dir.join("results.csv")).expect("csv"), tree_bytes(&dir.join("traces")))
    };
    let (csv_a, traces_a) = run("a");
    let (csv_b, traces_b) = run("b");
    let same_csv = csv_a == csv_b;
    let differing = traces_a.iter().filter(|(name, bytes)| traces_b.get(*name) != Some(bytes)).count();
    let same_set = traces_a.len() == traces_b.len();
    let _ = std::fs::remove_dir_all(&root);
    verdict(
        same_csv && same_set && differing == 0,
        format!(
            "CSV identical {same_csv} ({} bytes); {} traces, {differing} differ",
            csv_a.len(),
            traces_a.len()
        ),
    )
}

fn main() -> ExitCode {
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, &str, fn() -> Verdict); 8] = [
        ("C1", "consensus safety matrix", c1_consensus_safety),
        ("C2", "fuzzy sandwich", c2_fuzzy_sandwich),
        ("C3", "gossip completeness and duration", c3_gossip_completeness),
        ("C4", "local signaling properties", c4_signaling_properties),
        ("C5", "overlay graph statistics", c5_overlay_statistics),
        ("C6", "round/bit tradeoff trend", c6_tradeoff_trend),
        ("C7", "biased clause", c7_biased_clause),
        ("C8", "determinism", c8_determinism),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == id) {
            continue;
        }
        let started = Instant::now();
        let v = check();
        let secs = started.elapsed().as_secs_f64();
        println!(
            "{id} {} {name}: {} [{secs:.1}s]",
            if v.passed { "PASS" } else { "FAIL" },
            v.summary
        );
        failed += !v.passed as usize;
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
