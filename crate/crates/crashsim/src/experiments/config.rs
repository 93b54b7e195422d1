//! `key = value` run configurations.
//!
//! ```text
//! # safety cell
//! protocol  = pc, pc_star
//! n         = 64
//! f         = 0, n/10-1
//! x         = 1, 4, n
//! seeds     = 1..10
//! adversary = targeted_heavy_senders rate=1
//! adversary = random_oblivious
//! profile   = desk
//! profile.c_mc = 3
//! output    = out/safety.csv
//! ```
//!
//! List-valued keys form a sweep; `adversary` may repeat and `adversary =
//! all` expands to every strategy with default parameters.

use crate::adversary::{AdversarySpec, StrategyKind};
use crate::params::{Fraction, Profile};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, field `{field}`: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    /// Three-phase consensus; requires `f < n/10`.
    Pc,
    /// Epoch-based consensus for any `f < n`.
    PcStar,
    /// α-biased consensus over all processes.
    Biased,
    Gossip,
    Fuzzy,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Pc => "pc",
            Protocol::PcStar => "pc_star",
            Protocol::Biased => "biased",
            Protocol::Gossip => "gossip",
            Protocol::Fuzzy => "fuzzy",
        }
    }

    pub fn is_consensus(self) -> bool {
        matches!(self, Protocol::Pc | Protocol::PcStar | Protocol::Biased)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "pc" => Protocol::Pc,
            "pc_star" => Protocol::PcStar,
            "biased" => Protocol::Biased,
            "gossip" => Protocol::Gossip,
            "fuzzy" => Protocol::Fuzzy,
            _ => return Err(format!("unknown protocol `{s}`")),
        })
    }
}

/// A crash budget, possibly relative to `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultBound {
    Exact(usize),
    /// `⌊n/10⌋ − 1`, saturating at 0.
    TenthMinusOne,
    /// `n − 1`.
    AllButOne,
}

impl FaultBound {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            FaultBound::Exact(f) => f,
            FaultBound::TenthMinusOne => (n / 10).saturating_sub(1),
            FaultBound::AllButOne => n.saturating_sub(1),
        }
    }
}

impl FromStr for FaultBound {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "n/10-1" => Ok(FaultBound::TenthMinusOne),
            "n-1" => Ok(FaultBound::AllButOne),
            _ => s
                .parse()
                .map(FaultBound::Exact)
                .map_err(|_| format!("expected a count, n/10-1 or n-1, got `{s}`")),
        }
    }
}

/// A group count, possibly `n` (singleton groups).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupCount {
    Exact(usize),
    All,
}

impl GroupCount {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            GroupCount::Exact(x) => x,
            GroupCount::All => n,
        }
    }
}

impl FromStr for GroupCount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "n" {
            return Ok(GroupCount::All);
        }
        s.parse()
            .map(GroupCount::Exact)
            .map_err(|_| format!("expected a count or n, got `{s}`"))
    }
}

/// How initial bits are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputPattern {
    /// By `seed % 3`: seeded coin flips, all ones, or a quarter ones.
    Auto,
    Zeros,
    Ones,
    Random,
    /// Exactly `k` ones at seeded positions.
    CountOnes(usize),
    /// One fewer than `⌈α·n⌉` ones at seeded positions.
    BelowAlpha,
}

impl FromStr for InputPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "auto" => InputPattern::Auto,
            "zeros" => InputPattern::Zeros,
            "ones" => InputPattern::Ones,
            "random" => InputPattern::Random,
            "below_alpha" => InputPattern::BelowAlpha,
            _ => match s.strip_prefix("ones:").map(str::parse) {
                Some(Ok(k)) => InputPattern::CountOnes(k),
                _ => return Err(format!("unknown input pattern `{s}`")),
            },
        })
    }
}

/// A parsed and validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub protocols: Vec<Protocol>,
    pub ns: Vec<usize>,
    pub faults: Vec<FaultBound>,
    pub groups: Vec<GroupCount>,
    pub seeds: Vec<u64>,
    pub adversaries: Vec<AdversarySpec>,
    pub alphas: Vec<Fraction>,
    pub inputs: InputPattern,
    pub profile: Profile,
    pub blind_adversary: bool,
    pub output: Option<PathBuf>,
    pub trace_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            protocols: vec![Protocol::Pc],
            ns: Vec::new(),
            faults: vec![FaultBound::Exact(0)],
            groups: vec![GroupCount::Exact(1)],
            seeds: vec![1],
            adversaries: vec![AdversarySpec::new(StrategyKind::None)],
            alphas: vec![Fraction::new(2, 3)],
            inputs: InputPattern::Auto,
            profile: Profile::desk(),
            blind_adversary: false,
            output: None,
            trace_dir: None,
        }
    }
}

fn list<T: FromStr<Err = String>>(v: &str) -> Result<Vec<T>, String> {
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err("empty list".into());
    }
    Ok(items)
}

fn numbers<T: FromStr>(v: &str) -> Result<Vec<T>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("bad number `{s}`")))
        .collect()
}

/// `a..b` (inclusive) or a comma list.
fn seed_list(v: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = v.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad seed `{a}`"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad seed `{b}`"))?;
        if a > b {
            return Err(format!("empty range {a}..{b}"));
        }
        return Ok((a..=b).collect());
    }
    numbers(v)
}

fn adversary(v: &str) -> Result<Vec<AdversarySpec>, String> {
    let mut words = v.split_whitespace();
    let name = words.next().ok_or("missing strategy name")?;
    if name == "all" {
        return Ok(StrategyKind::ALL.iter().map(|&k| AdversarySpec::new(k)).collect());
    }
    let kind: StrategyKind = name.parse().map_err(|e| format!("{e}"))?;
    let mut spec = AdversarySpec::new(kind);
    for w in words {
        let (k, val) = w.split_once('=').ok_or_else(|| format!("expected key=value, got `{w}`"))?;
        spec = spec.with(k, val);
    }
    Ok(vec![spec])
}

fn boolean(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut adversaries: Vec<AdversarySpec> = Vec::new();
        let mut overrides: Vec<(usize, String, String)> = Vec::new();
        let mut n_line = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |field: &str, message: String| ConfigError {
                line,
                field: field.to_string(),
                message,
            };
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| err(body, "expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let res: Result<(), String> = (|| {
                match key {
                    "protocol" => cfg.protocols = list(value)?,
                    "n" => {
                        cfg.ns = numbers(value)?;
                        n_line = Some(line);
                    }
                    "f" => cfg.faults = list(value)?,
                    "x" => cfg.groups = list(value)?,
                    "seeds" | "seed" => cfg.seeds = seed_list(value)?,
                    "adversary" => adversaries.extend(adversary(value)?),
                    "alpha" => cfg.alphas = list(value)?,
                    "inputs" => cfg.inputs = value.parse()?,
                    "profile" => {
                        cfg.profile = Profile::by_name(value).ok_or_else(|| format!("unknown profile `{value}`"))?
                    }
                    "blind_adversary" => cfg.blind_adversary = boolean(value)?,
                    "output" => cfg.output = Some(PathBuf::from(value)),
                    "trace_dir" => cfg.trace_dir = Some(PathBuf::from(value)),
                    _ => match key.strip_prefix("profile.") {
                        Some(field) => overrides.push((line, field.to_string(), value.to_string())),
                        None => return Err("unknown field".into()),
                    },
                }
                Ok(())
            })();
            res.map_err(|m| err(key, m))?;
        }
        for (line, field, value) in overrides {
            cfg.profile.set(&field, &value).map_err(|message| ConfigError {
                line,
                field: format!("profile.{field}"),
                message,
            })?;
        }
        if !adversaries.is_empty() {
            cfg.adversaries = adversaries;
        }
        cfg.validate(n_line.unwrap_or(0))?;
        Ok(cfg)
    }

    fn validate(&self, n_line: usize) -> Result<(), ConfigError> {
        let err = |field: &str, message: String| ConfigError {
            line: n_line,
            field: field.into(),
            message,
        };
        if self.ns.is_empty() {
            return Err(err("n", "missing".into()));
        }
        if self.seeds.is_empty() {
            return Err(err("seeds", "need at least one seed".into()));
        }
        for &n in &self.ns {
            if n == 0 {
                return Err(err("n", "n must be positive".into()));
            }
            for f in &self.faults {
                if f.resolve(n) >= n {
                    return Err(err("f", format!("f = {} is not below n = {n}", f.resolve(n))));
                }
            }
            for x in &self.groups {
                let x = x.resolve(n);
                if x == 0 || x > n {
                    return Err(err("x", format!("x = {x} outside [1, {n}]")));
                }
            }
        }
        for &p in &self.protocols {
            if self.cells().all(|c| c.protocol != p) {
                return Err(err(
                    "f",
                    format!("no admissible cell for `{p}` (it requires f < n/10)"),
                ));
            }
        }
        Ok(())
    }

    /// Every cell of the sweep in output order. Cells of the restricted
    /// protocol whose crash budget reaches `n/10` are outside its
    /// precondition and are not generated; `alpha` only varies `biased`.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let mut out = Vec::new();
        for &protocol in &self.protocols {
            let alphas: &[Fraction] = if protocol == Protocol::Biased {
                &self.alphas
            } else {
                &self.alphas[..1]
            };
            for &n in &self.ns {
                let mut fs: Vec<usize> = self.faults.iter().map(|fb| fb.resolve(n)).collect();
                fs.dedup();
                for f in fs {
                    if protocol == Protocol::Pc && 10 * f >= n && f > 0 {
                        continue;
                    }
                    let mut xs: Vec<usize> = self.groups.iter().map(|g| g.resolve(n)).collect();
                    xs.dedup();
                    for x in xs {
                        for adversary in &self.adversaries {
                            for &alpha in alphas {
                                for &seed in &self.seeds {
                                    out.push(Cell {
                                        protocol,
                                        n,
                                        f,
                                        x,
                                        seed,
                                        adversary: adversary.clone(),
                                        alpha,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out.into_iter()
    }
}

/// One run of a sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub protocol: Protocol,
    pub n: usize,
    pub f: usize,
    pub x: usize,
    pub seed: u64,
    pub adversary: AdversarySpec,
    pub alpha: Fraction,
}

impl Cell {
    /// Protocol label in result rows; biased runs carry their threshold.
    pub fn protocol_label(&self) -> String {
        match self.protocol {
            Protocol::Biased => format!("biased:{}", self.alpha),
            p => p.name().to_string(),
        }
    }
}
