//! Executing cells: inputs, protocol programs, ground-truth evaluation,
//! result rows and trace files.

use super::config::{Cell, InputPattern, Protocol, RunConfig};
use crate::adversary::AdversaryError;
use crate::biased::{biased_consensus_or_fallback, AlarmScope, Counting, Group};
use crate::engine::{stream_seed, sub_tag, Metrics, RoundRecord, RunResult, Sim, SimConfig, SimError};
use crate::gossip::{fuzzy_counting, gossip, FuzzyCount};
use crate::message::{IdSet, ProcessId, RumorSet};
use crate::parameterized::{parameterized_consensus, parameterized_consensus_star, Layout, LayoutError, PcSetup};
use crate::params::{Fraction, Profile};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::rc::Rc;

/// First line of every CSV file.
pub const CSV_SCHEMA_LINE: &str = "# crashsim results v1";
pub const CSV_COLUMNS: &str = "protocol,n,f,x,seed,adversary,rounds,bits_total,amortized_bits,random_bits_amortized,decided_value,agreement_ok,validity_ok";
/// Version tag in trace headers.
pub const TRACE_SCHEMA: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("i/o on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("trace line {line}: {message}")]
    Trace { line: usize, message: String },
}

/// Initial bits of a cell.
pub fn inputs_for(pattern: InputPattern, cell: &Cell) -> Vec<bool> {
    let n = cell.n;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_tag(cell.seed, 0x1B1D));
    let scattered = |k: usize, rng: &mut ChaCha8Rng| {
        let mut v: Vec<bool> = (0..n).map(|i| i < k.min(n)).collect();
        v.shuffle(rng);
        v
    };
    match pattern {
        InputPattern::Zeros => vec![false; n],
        InputPattern::Ones => vec![true; n],
        InputPattern::Random => (0..n).map(|_| rng.gen()).collect(),
        InputPattern::CountOnes(k) => scattered(k, &mut rng),
        InputPattern::BelowAlpha => {
            let need = (cell.alpha.num as u128 * n as u128).div_ceil(cell.alpha.den as u128) as usize;
            scattered(need.saturating_sub(1), &mut rng)
        }
        InputPattern::Auto => match cell.seed % 3 {
            0 => (0..n).map(|_| rng.gen()).collect(),
            1 => vec![true; n],
            _ => scattered(n / 4, &mut rng),
        },
    }
}

/// A process output, in trace form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Output {
    Bit(bool),
    Count { zeros: u32, ones: u32 },
    Rumors(Vec<u32>),
}

/// Everything needed to re-check a run offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: u32,
    pub protocol: String,
    pub n: usize,
    pub f: usize,
    pub x: usize,
    pub seed: u64,
    pub adversary: String,
    pub alpha: Fraction,
    pub profile: Profile,
    pub inputs: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceResult {
    pub outputs: Vec<Option<Output>>,
    pub crashed_at: Vec<Option<u64>>,
    pub metrics: Metrics,
}

/// One line of a JSONL trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceLine {
    Header(TraceHeader),
    Round(RoundRecord),
    Result(TraceResult),
}

/// A complete recorded run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub rounds: Vec<RoundRecord>,
    pub result: TraceResult,
}

impl TraceFile {
    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        let mut line = |l: &TraceLine| -> io::Result<()> {
            serde_json::to_writer(&mut *w, l)?;
            w.write_all(b"\n")
        };
        line(&TraceLine::Header(self.header.clone()))?;
        for r in &self.rounds {
            line(&TraceLine::Round(r.clone()))?;
        }
        line(&TraceLine::Result(self.result.clone()))
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, RunError> {
        let (mut header, mut rounds, mut result) = (None, Vec::new(), None);
        for (i, line) in r.lines().enumerate() {
            let bad = |message: String| RunError::Trace { line: i + 1, message };
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<TraceLine>(&line).map_err(|e| bad(e.to_string()))? {
                TraceLine::Header(h) if header.is_none() && i == 0 => header = Some(h),
                TraceLine::Round(rr) if header.is_some() && result.is_none() => rounds.push(rr),
                TraceLine::Result(res) if header.is_some() && result.is_none() => result = Some(res),
                _ => return Err(bad("record out of order".into())),
            }
        }
        let missing = |what: &str| RunError::Trace {
            line: 0,
            message: format!("missing {what} record"),
        };
        Ok(TraceFile {
            header: header.ok_or_else(|| missing("header"))?,
            rounds,
            result: result.ok_or_else(|| missing("result"))?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let f = std::fs::File::open(path).map_err(|source| RunError::Io {
            path: path.into(),
            source,
        })?;
        Self::read_from(io::BufReader::new(f))
    }
}

/// What the protocol is expected to satisfy, judged from inputs, outputs
/// and crash rounds only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdicts {
    pub agreement: bool,
    pub validity: bool,
    pub termination: bool,
}

/// The common decision of the alive processes, if they agree.
pub fn decided_value(outputs: &[Option<Output>], crashed_at: &[Option<u64>]) -> Option<bool> {
    let mut it = alive_outputs(outputs, crashed_at).filter_map(|o| match o {
        Output::Bit(b) => Some(*b),
        _ => None,
    });
    let first = it.next()?;
    it.all(|b| b == first).then_some(first)
}

fn alive_outputs<'a>(
    outputs: &'a [Option<Output>],
    crashed_at: &'a [Option<u64>],
) -> impl Iterator<Item = &'a Output> + 'a {
    outputs
        .iter()
        .zip(crashed_at)
        .filter(|(_, c)| c.is_none())
        .filter_map(|(o, _)| o.as_ref())
}

/// Ground-truth evaluation of a finished run. For `gossip` agreement means
/// completeness among end-alive processes; for `fuzzy` it means the lower
/// sandwich bounds. Validity means outputs only reflect real inputs (and,
/// for `biased`, the biased clause).
pub fn evaluate(header: &TraceHeader, result: &TraceResult) -> Verdicts {
    let n = header.n;
    let alive: Vec<bool> = result.crashed_at.iter().map(Option::is_none).collect();
    let termination = (0..n).all(|p| !alive[p] || result.outputs[p].is_some());
    let outs: Vec<&Output> = alive_outputs(&result.outputs, &result.crashed_at).collect();
    let ones_in = header.inputs.iter().filter(|&&b| b).count();
    let zeros_in = n - ones_in;
    let (agreement, validity) = match header.protocol.split(':').next().unwrap_or_default() {
        "gossip" => {
            let want: Vec<u32> = (0..n as u32).filter(|&p| alive[p as usize]).collect();
            let complete = outs.iter().all(|o| match o {
                Output::Rumors(r) => want.iter().all(|p| r.binary_search(p).is_ok()),
                _ => false,
            });
            let genuine = outs.iter().all(|o| matches!(o, Output::Rumors(r) if r.iter().all(|&p| (p as usize) < n)));
            (complete, genuine)
        }
        "fuzzy" => {
            let ones_alive = (0..n).filter(|&p| alive[p] && header.inputs[p]).count() as u32;
            let zeros_alive = (0..n).filter(|&p| alive[p] && !header.inputs[p]).count() as u32;
            let lower = outs.iter().all(|o| match o {
                Output::Count { zeros, ones } => *ones >= ones_alive && *zeros >= zeros_alive,
                _ => false,
            });
            let upper = outs.iter().all(|o| match o {
                Output::Count { zeros, ones } => {
                    (*zeros + *ones) as usize <= n && *ones as usize <= ones_in && *zeros as usize <= zeros_in
                }
                _ => false,
            });
            (lower, upper)
        }
        proto => {
            let bits: Vec<bool> = outs
                .iter()
                .filter_map(|o| match o {
                    Output::Bit(b) => Some(*b),
                    _ => None,
                })
                .collect();
            let agreement = bits.len() == outs.len() && bits.windows(2).all(|w| w[0] == w[1]);
            let allowed = |b: bool| header.inputs.contains(&b);
            let mut validity = bits.iter().all(|&b| allowed(b));
            if proto == "biased" && !header.alpha.reached(ones_in as u64, n as u64) {
                validity &= bits.iter().all(|&b| !b);
            }
            (agreement, validity)
        }
    };
    Verdicts {
        agreement,
        validity,
        termination,
    }
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub protocol: String,
    pub n: usize,
    pub f: usize,
    pub x: usize,
    pub seed: u64,
    pub adversary: String,
    pub rounds: u64,
    pub bits_total: u64,
    pub amortized_bits: f64,
    pub random_bits_amortized: f64,
    /// `0`/`1` when the alive processes agree on a bit, `-` otherwise.
    pub decided_value: String,
    pub agreement_ok: bool,
    pub validity_ok: bool,
}

impl ResultRow {
    fn from_run(header: &TraceHeader, result: &TraceResult) -> Self {
        let v = evaluate(header, result);
        let m = &result.metrics;
        ResultRow {
            protocol: header.protocol.clone(),
            n: header.n,
            f: header.f,
            x: header.x,
            seed: header.seed,
            adversary: header.adversary.clone(),
            rounds: m.rounds,
            bits_total: m.bits_total,
            amortized_bits: m.amortized_bits(),
            random_bits_amortized: m.amortized_random_bits(),
            decided_value: match decided_value(&result.outputs, &result.crashed_at) {
                Some(b) => (b as u8).to_string(),
                None => "-".into(),
            },
            agreement_ok: v.agreement && v.termination,
            validity_ok: v.validity,
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.3},{:.3},{},{},{}",
            self.protocol,
            self.n,
            self.f,
            self.x,
            self.seed,
            self.adversary,
            self.rounds,
            self.bits_total,
            self.amortized_bits,
            self.random_bits_amortized,
            self.decided_value,
            self.agreement_ok as u8,
            self.validity_ok as u8
        )
    }
}

/// The CSV text of a sweep, schema line first.
pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut s = format!("{CSV_SCHEMA_LINE}\n{CSV_COLUMNS}\n");
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_line());
    }
    s
}

/// A finished cell.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub row: ResultRow,
    pub trace: Option<TraceFile>,
    pub header: TraceHeader,
    pub result: TraceResult,
}

fn collect<T>(res: RunResult<T>, map: impl Fn(T) -> Output) -> (TraceResult, Option<Vec<RoundRecord>>) {
    let outputs = res.outputs.into_iter().map(|o| o.map(&map)).collect();
    (
        TraceResult {
            outputs,
            crashed_at: res.crashed_at,
            metrics: res.metrics,
        },
        res.trace.map(|t| t.rounds),
    )
}

/// Run one cell of `cfg`. The trace is kept when `record` is set.
pub fn run_cell(cfg: &RunConfig, cell: &Cell, record: bool) -> Result<CellRun, RunError> {
    let n = cell.n;
    let profile = cfg.profile.clone();
    let inputs = inputs_for(cfg.inputs, cell);
    let layout = Layout::new(n, cell.x)?;
    let adversary = cell
        .adversary
        .build(n, cell.f, stream_seed(cell.seed, u64::MAX), Some(&layout.group_view(&profile)))?;
    let mut sim_cfg = SimConfig::new(n, cell.f, cell.seed);
    sim_cfg.record_trace = record;
    sim_cfg.blind_adversary = cfg.blind_adversary;
    let header = TraceHeader {
        schema: TRACE_SCHEMA,
        protocol: cell.protocol_label(),
        n,
        f: cell.f,
        x: cell.x,
        seed: cell.seed,
        adversary: cell.adversary.label(),
        alpha: cell.alpha,
        profile: profile.clone(),
        inputs: inputs.clone(),
    };
    let inputs = Rc::new(inputs);
    let everyone: Rc<Vec<ProcessId>> = Rc::new(layout.everyone().to_vec());
    let profile = Rc::new(profile);
    let (result, rounds) = match cell.protocol {
        Protocol::Pc | Protocol::PcStar => {
            let setup = Rc::new(PcSetup::new(n, cell.x, (*profile).clone())?);
            let star = cell.protocol == Protocol::PcStar;
            let mut sim = Sim::new(sim_cfg, adversary);
            sim.spawn_all(|ctx| {
                let (setup, b) = (setup.clone(), inputs[ctx.pid().index()]);
                async move {
                    if star {
                        parameterized_consensus_star(ctx, setup, b).await
                    } else {
                        parameterized_consensus(ctx, setup, b).await
                    }
                }
            });
            collect(sim.run()?, Output::Bit)
        }
        Protocol::Biased => {
            let scope = AlarmScope::new(everyone.to_vec());
            let alpha = cell.alpha;
            let mut sim = Sim::new(sim_cfg, adversary);
            sim.spawn_all(|ctx| {
                let (everyone, profile, scope) = (everyone.clone(), profile.clone(), scope.clone());
                let b = inputs[ctx.pid().index()];
                async move {
                    let group = Group {
                        members: &everyone,
                        budget_size: everyone.len(),
                    };
                    biased_consensus_or_fallback(&ctx, 0xB1A5, group, b, alpha, &profile, &scope, Counting::Fuzzy).await
                }
            });
            collect(sim.run()?, Output::Bit)
        }
        Protocol::Gossip => {
            let mut sim = Sim::new(sim_cfg, adversary);
            sim.spawn_all(|ctx| {
                let (everyone, profile) = (everyone.clone(), profile.clone());
                async move {
                    let own = RumorSet::Ids(IdSet::singleton(n, ctx.pid().0));
                    gossip(&ctx, 0x6055, &everyone, own, &profile, n).await
                }
            });
            collect(sim.run()?, |r| match r {
                RumorSet::Ids(s) => Output::Rumors(s.iter().collect()),
                _ => Output::Rumors(Vec::new()),
            })
        }
        Protocol::Fuzzy => {
            let mut sim = Sim::new(sim_cfg, adversary);
            sim.spawn_all(|ctx| {
                let (everyone, profile) = (everyone.clone(), profile.clone());
                let b = inputs[ctx.pid().index()];
                async move { fuzzy_counting(&ctx, 0xF022, &everyone, b, &profile, n).await }
            });
            collect(sim.run()?, |c: FuzzyCount| Output::Count {
                zeros: c.zeros,
                ones: c.ones,
            })
        }
    };
    let row = ResultRow::from_run(&header, &result);
    let trace = rounds.map(|rounds| TraceFile {
        header: header.clone(),
        rounds,
        result: result.clone(),
    });
    Ok(CellRun {
        row,
        trace,
        header,
        result,
    })
}

/// File name of a cell's trace inside `trace_dir`.
pub fn trace_name(cell: &Cell) -> String {
    let adv: String = cell
        .adversary
        .label()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '-' })
        .collect();
    let proto = cell.protocol_label().replace([':', '/'], "-");
    format!("{proto}_n{}_f{}_x{}_{adv}_s{}.jsonl", cell.n, cell.f, cell.x, cell.seed)
}

/// Run every cell in order. Traces go to `trace_dir` and the CSV to
/// `output` when those are configured.
pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<ResultRow>, RunError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    if let Some(dir) = &cfg.trace_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut rows = Vec::new();
    for cell in cfg.cells() {
        let run = run_cell(cfg, &cell, cfg.trace_dir.is_some())?;
        if let (Some(dir), Some(trace)) = (&cfg.trace_dir, &run.trace) {
            let path = dir.join(trace_name(&cell));
            let file = std::fs::File::create(&path).map_err(io_err(&path))?;
            let mut w = io::BufWriter::new(file);
            trace.write_to(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))?;
        }
        rows.push(run.row);
    }
    if let Some(out) = &cfg.output {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        std::fs::write(out, to_csv(&rows)).map_err(io_err(out))?;
    }
    Ok(rows)
}
