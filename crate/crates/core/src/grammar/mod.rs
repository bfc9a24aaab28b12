//! The imaging grammar.
//!
//! Imaging systems are strings over five parameterized alphabets:
//! illumination (`I`), optics (`O`), sensors (`S`), decoding algorithms
//! (`A1`) and control algorithms (`A2`). The production rules are
//!
//! ```text
//! R  -> X O S X A1
//! X  -> I X | O S X | A2 X | ε
//! O  -> o O | ε
//! A1 -> a1 A1 | a1
//! A2 -> a2 O s | a2 i | a2 s | ε
//! ```
//!
//! where lower-case symbols are terminals. Every string in the language has
//! at least one sensor and ends with at least one decoding algorithm.
//!
//! [`validate`] is a memoized recognizer over `(variable, start)` that
//! returns a [`DerivationTree`] witness; [`derive_random`] samples the
//! language.

mod text;

use std::collections::BTreeSet;
use std::fmt;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, RejectReason, Result};

pub use text::{from_text, to_text};

/// Position and orientation: meters and degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
}

impl Pose {
    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.pitch, self.yaw, self.roll]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Pose {
            x: v[0],
            y: v[1],
            z: v[2],
            pitch: v[3],
            yaw: v[4],
            roll: v[5],
        }
    }

    fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Wavelength {
    Rgb,
    Mono,
    Tof,
    Spad,
}

impl Wavelength {
    pub fn tag(&self) -> &'static str {
        match self {
            Wavelength::Rgb => "rgb",
            Wavelength::Mono => "mono",
            Wavelength::Tof => "tof",
            Wavelength::Spad => "spad",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag.to_ascii_lowercase().as_str() {
            "rgb" => Some(Wavelength::Rgb),
            "mono" => Some(Wavelength::Mono),
            "tof" => Some(Wavelength::Tof),
            "spad" => Some(Wavelength::Spad),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    pub pose: Pose,
    /// Spatial resolution (height, width) in pixels.
    pub hw: (u32, u32),
    /// Frames per second.
    pub fps: u32,
    pub wavelength: Wavelength,
    /// Quantization in bits.
    pub bits: u32,
}

impl Default for SensorParams {
    fn default() -> Self {
        SensorParams {
            pose: Pose::default(),
            hw: (128, 128),
            fps: 30,
            wavelength: Wavelength::Rgb,
            bits: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticParams {
    /// Focal length in millimeters.
    pub focal_mm: f64,
    /// Aperture index (1-based f-stop table entry).
    pub aperture: u32,
}

impl Default for OpticParams {
    fn default() -> Self {
        OpticParams {
            focal_mm: 35.0,
            aperture: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlluminationParams {
    pub pose: Pose,
    pub intensity: f64,
}

impl Default for IlluminationParams {
    fn default() -> Self {
        IlluminationParams {
            pose: Pose::default(),
            intensity: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TerminalKind {
    Illumination,
    Optic,
    Sensor,
    Algo1,
    Algo2,
}

impl TerminalKind {
    pub const ALL: [TerminalKind; 5] = [
        TerminalKind::Illumination,
        TerminalKind::Optic,
        TerminalKind::Sensor,
        TerminalKind::Algo1,
        TerminalKind::Algo2,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            TerminalKind::Illumination => "I",
            TerminalKind::Optic => "O",
            TerminalKind::Sensor => "S",
            TerminalKind::Algo1 => "A1",
            TerminalKind::Algo2 => "A2",
        }
    }
}

/// One parameterized symbol of an imaging system string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Terminal {
    Illumination(IlluminationParams),
    Optic(OpticParams),
    Sensor(SensorParams),
    Algo1(String),
    Algo2(String),
}

impl Terminal {
    pub fn kind(&self) -> TerminalKind {
        match self {
            Terminal::Illumination(_) => TerminalKind::Illumination,
            Terminal::Optic(_) => TerminalKind::Optic,
            Terminal::Sensor(_) => TerminalKind::Sensor,
            Terminal::Algo1(_) => TerminalKind::Algo1,
            Terminal::Algo2(_) => TerminalKind::Algo2,
        }
    }

    pub fn sensor() -> Self {
        Terminal::Sensor(SensorParams::default())
    }

    pub fn optic() -> Self {
        Terminal::Optic(OpticParams::default())
    }

    pub fn light() -> Self {
        Terminal::Illumination(IlluminationParams::default())
    }

    pub fn algo1(name: &str) -> Self {
        Terminal::Algo1(name.to_string())
    }

    pub fn algo2(name: &str) -> Self {
        Terminal::Algo2(name.to_string())
    }

    /// Checks the per-kind parameter invariants.
    pub fn check(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidTerminal(msg.to_string()));
        match self {
            Terminal::Sensor(s) => {
                if !s.pose.is_finite() {
                    return bad("sensor pose must be finite");
                }
                if s.hw.0 == 0 || s.hw.1 == 0 {
                    return bad("resolution must be positive");
                }
                if s.fps == 0 {
                    return bad("temporal resolution must be positive");
                }
                if s.bits == 0 {
                    return bad("quantization must be positive");
                }
            }
            Terminal::Optic(o) => {
                if !(o.focal_mm.is_finite() && o.focal_mm > 0.0) {
                    return bad("focal length must be positive");
                }
                if o.aperture == 0 {
                    return bad("aperture index must be positive");
                }
            }
            Terminal::Illumination(i) => {
                if !i.pose.is_finite() {
                    return bad("illumination pose must be finite");
                }
                if !(i.intensity.is_finite() && i.intensity >= 0.0) {
                    return bad("intensity must be non-negative");
                }
            }
            Terminal::Algo1(name) | Terminal::Algo2(name) => {
                if name.is_empty()
                    || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                {
                    return bad("algorithm names are [A-Za-z0-9_]+");
                }
            }
        }
        Ok(())
    }
}

/// An ordered sequence of terminals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SystemString {
    pub terminals: Vec<Terminal>,
}

impl SystemString {
    pub fn new(terminals: Vec<Terminal>) -> Self {
        SystemString { terminals }
    }

    pub fn len(&self) -> usize {
        self.terminals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminals.is_empty()
    }

    pub fn kinds(&self) -> Vec<TerminalKind> {
        self.terminals.iter().map(Terminal::kind).collect()
    }
}

impl fmt::Display for SystemString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_text(self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variable {
    R,
    X,
    O,
    A1,
    A2,
}

impl Variable {
    pub const ALL: [Variable; 5] = [Variable::R, Variable::X, Variable::O, Variable::A1, Variable::A2];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    Var(Variable),
    Term(TerminalKind),
}

/// `head -> body`; an empty body is ε.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Production {
    pub head: Variable,
    pub body: Vec<Symbol>,
}

#[derive(Debug, Clone)]
pub struct Grammar {
    productions: Vec<Production>,
    algo1: BTreeSet<String>,
    algo2: BTreeSet<String>,
}

impl Default for Grammar {
    fn default() -> Self {
        Self::imaging()
    }
}

impl Grammar {
    /// The imaging grammar with the built-in algorithm alphabets.
    pub fn imaging() -> Self {
        use Symbol::{Term as T, Var as V};
        use TerminalKind::*;
        use Variable as Vr;
        let p = |head, body: Vec<Symbol>| Production { head, body };
        let productions = vec![
            p(Vr::R, vec![V(Vr::X), V(Vr::O), T(Sensor), V(Vr::X), V(Vr::A1)]),
            p(Vr::X, vec![T(Illumination), V(Vr::X)]),
            p(Vr::X, vec![V(Vr::O), T(Sensor), V(Vr::X)]),
            p(Vr::X, vec![V(Vr::A2), V(Vr::X)]),
            p(Vr::X, vec![]),
            p(Vr::O, vec![T(Optic), V(Vr::O)]),
            p(Vr::O, vec![]),
            p(Vr::A1, vec![T(Algo1), V(Vr::A1)]),
            p(Vr::A1, vec![T(Algo1)]),
            p(Vr::A2, vec![T(Algo2), V(Vr::O), T(Sensor)]),
            p(Vr::A2, vec![T(Algo2), T(Illumination)]),
            p(Vr::A2, vec![T(Algo2), T(Sensor)]),
            p(Vr::A2, vec![]),
        ];
        let algo1 = ["a_nn", "a_fourier", "a_st", "a_ds", "a_ToF"]
            .into_iter()
            .map(String::from)
            .collect();
        let algo2 = ["autofocus", "a_control"]
            .into_iter()
            .map(String::from)
            .collect();
        Grammar {
            productions,
            algo1,
            algo2,
        }
    }

    pub fn productions(&self) -> &[Production] {
        &self.productions
    }

    pub fn start(&self) -> Variable {
        Variable::R
    }

    pub fn register_algo1(&mut self, name: &str) {
        self.algo1.insert(name.to_string());
    }

    pub fn register_algo2(&mut self, name: &str) {
        self.algo2.insert(name.to_string());
    }

    pub fn algo1_names(&self) -> impl Iterator<Item = &str> {
        self.algo1.iter().map(String::as_str)
    }

    pub fn algo2_names(&self) -> impl Iterator<Item = &str> {
        self.algo2.iter().map(String::as_str)
    }

    fn rules_for(&self, head: Variable) -> impl Iterator<Item = (usize, &Production)> {
        self.productions
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.head == head)
    }

    fn in_alphabet(&self, t: &Terminal) -> bool {
        match t {
            Terminal::Algo1(n) => self.algo1.contains(n),
            Terminal::Algo2(n) => self.algo2.contains(n),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DerivationNode {
    Leaf(Terminal),
    Node {
        variable: Variable,
        production: usize,
        children: Vec<DerivationNode>,
    },
}

impl DerivationNode {
    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Terminal>) {
        match self {
            DerivationNode::Leaf(t) => out.push(t),
            DerivationNode::Node { children, .. } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
        }
    }

    fn render(&self, g: &Grammar, depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        match self {
            DerivationNode::Leaf(t) => {
                out.push_str(&pad);
                out.push_str(&text::terminal_to_text(t));
                out.push('\n');
            }
            DerivationNode::Node {
                variable,
                production,
                children,
            } => {
                let body = &g.productions[*production].body;
                let rhs = if body.is_empty() {
                    "ε".to_string()
                } else {
                    body.iter()
                        .map(|s| match s {
                            Symbol::Var(v) => format!("{v:?}"),
                            Symbol::Term(k) => k.tag().to_lowercase(),
                        })
                        .collect::<Vec<_>>()
                        .join(" ")
                };
                out.push_str(&format!("{pad}{variable:?} -> {rhs}\n"));
                for c in children {
                    c.render(g, depth + 1, out);
                }
            }
        }
    }
}

/// Witness that a string belongs to the grammar's language.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivationTree {
    pub root: DerivationNode,
}

impl DerivationTree {
    pub fn leaves(&self) -> Vec<&Terminal> {
        let mut out = Vec::new();
        self.root.collect_leaves(&mut out);
        out
    }

    /// Checks that every internal node expands by one of its variable's
    /// productions.
    pub fn is_consistent(&self, g: &Grammar) -> bool {
        fn walk(n: &DerivationNode, g: &Grammar) -> bool {
            match n {
                DerivationNode::Leaf(_) => true,
                DerivationNode::Node {
                    variable,
                    production,
                    children,
                } => {
                    let Some(p) = g.productions.get(*production) else {
                        return false;
                    };
                    if p.head != *variable || p.body.len() != children.len() {
                        return false;
                    }
                    p.body.iter().zip(children).all(|(sym, child)| match (sym, child) {
                        (Symbol::Term(k), DerivationNode::Leaf(t)) => t.kind() == *k,
                        (Symbol::Var(v), DerivationNode::Node { variable, .. }) => {
                            v == variable && walk(child, g)
                        }
                        _ => false,
                    })
                }
            }
        }
        walk(&self.root, g)
    }

    pub fn pretty(&self, g: &Grammar) -> String {
        let mut out = String::new();
        self.root.render(g, 0, &mut out);
        out
    }
}

/// How `(variable, start, end)` was first derived.
#[derive(Debug, Clone)]
struct BackPointer {
    production: usize,
    /// Start position of each body symbol.
    starts: Vec<usize>,
}

/// Memo table: `spans[var][start][end]`.
struct Chart<'a> {
    g: &'a Grammar,
    tokens: &'a [Terminal],
    spans: Vec<Vec<Vec<Option<BackPointer>>>>,
}

impl<'a> Chart<'a> {
    fn build(g: &'a Grammar, tokens: &'a [Terminal]) -> Self {
        let n = tokens.len();
        let spans = vec![vec![vec![None; n + 1]; n + 1]; Variable::ALL.len()];
        let mut chart = Chart { g, tokens, spans };
        for start in (0..=n).rev() {
            chart.close(start);
        }
        chart
    }

    fn term_matches(&self, kind: TerminalKind, pos: usize) -> bool {
        self.tokens
            .get(pos)
            .is_some_and(|t| t.kind() == kind && self.g.in_alphabet(t))
    }

    /// Fixpoint over all productions starting at `start`. Entries for later
    /// starts are already final; entries at `start` may feed each other
    /// through nullable variables.
    fn close(&mut self, start: usize) {
        loop {
            let mut changed = false;
            for (idx, prod) in self.g.productions.iter().enumerate() {
                let mut found = Vec::new();
                let mut starts = Vec::with_capacity(prod.body.len());
                self.match_body(&prod.body, start, &mut starts, &mut found);
                for (end, starts) in found {
                    let slot = &mut self.spans[prod.head.index()][start][end];
                    if slot.is_none() {
                        *slot = Some(BackPointer {
                            production: idx,
                            starts,
                        });
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }

    fn match_body(
        &self,
        body: &[Symbol],
        pos: usize,
        starts: &mut Vec<usize>,
        found: &mut Vec<(usize, Vec<usize>)>,
    ) {
        let Some((first, rest)) = body.split_first() else {
            found.push((pos, starts.clone()));
            return;
        };
        starts.push(pos);
        match first {
            Symbol::Term(kind) => {
                if self.term_matches(*kind, pos) {
                    self.match_body(rest, pos + 1, starts, found);
                }
            }
            Symbol::Var(v) => {
                let row = &self.spans[v.index()][pos];
                for end in pos..row.len() {
                    if row[end].is_some() {
                        self.match_body(rest, end, starts, found);
                    }
                }
            }
        }
        starts.pop();
    }

    fn tree(&self, var: Variable, start: usize, end: usize) -> DerivationNode {
        let bp = self.spans[var.index()][start][end]
            .as_ref()
            .expect("span present in chart");
        let body = &self.g.productions[bp.production].body;
        let children = body
            .iter()
            .enumerate()
            .map(|(i, sym)| {
                let s = bp.starts[i];
                let e = bp.starts.get(i + 1).copied().unwrap_or(end);
                match sym {
                    Symbol::Term(_) => DerivationNode::Leaf(self.tokens[s].clone()),
                    Symbol::Var(v) => self.tree(*v, s, e),
                }
            })
            .collect();
        DerivationNode::Node {
            variable: var,
            production: bp.production,
            children,
        }
    }

    /// Whether the first `k` tokens can be extended to a string in the
    /// language.
    fn viable_prefix(&self, k: usize) -> bool {
        let nv = Variable::ALL.len();
        // prefix[var][start]: var derives tokens[start..k] followed by anything.
        let mut prefix = vec![vec![false; k + 1]; nv];
        for v in Variable::ALL {
            prefix[v.index()][k] = true;
        }
        for start in (0..k).rev() {
            loop {
                let mut changed = false;
                for prod in &self.g.productions {
                    if !prefix[prod.head.index()][start]
                        && self.body_prefix(&prod.body, start, k, &prefix)
                    {
                        prefix[prod.head.index()][start] = true;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
        }
        prefix[Variable::R.index()][0]
    }

    fn body_prefix(&self, body: &[Symbol], pos: usize, k: usize, prefix: &[Vec<bool>]) -> bool {
        if pos == k {
            return true;
        }
        let Some((first, rest)) = body.split_first() else {
            return false;
        };
        match first {
            Symbol::Term(kind) => {
                self.term_matches(*kind, pos) && self.body_prefix(rest, pos + 1, k, prefix)
            }
            Symbol::Var(v) => {
                if prefix[v.index()][pos] {
                    return true;
                }
                let row = &self.spans[v.index()][pos];
                (pos..=k).any(|end| row[end].is_some() && self.body_prefix(rest, end, k, prefix))
            }
        }
    }
}

/// Recognizes `s` and returns a derivation, or the reason and earliest
/// failing token position.
pub fn validate(g: &Grammar, s: &SystemString) -> Result<DerivationTree> {
    if s.is_empty() {
        return Err(Error::EmptyString);
    }
    for t in &s.terminals {
        t.check()?;
    }
    let chart = Chart::build(g, &s.terminals);
    let n = s.len();
    if chart.spans[Variable::R.index()][0][n].is_some() {
        return Ok(DerivationTree {
            root: chart.tree(Variable::R, 0, n),
        });
    }
    let position = (1..=n)
        .find(|&k| !chart.viable_prefix(k))
        .map_or(n, |k| k - 1);
    Err(Error::Rejected {
        reason: classify(s),
        position,
    })
}

fn classify(s: &SystemString) -> RejectReason {
    let kinds = s.kinds();
    if !kinds.contains(&TerminalKind::Sensor) {
        return RejectReason::NoSensor;
    }
    for (i, k) in kinds.iter().enumerate() {
        if *k != TerminalKind::Algo2 {
            continue;
        }
        // a2 must be followed by i, s, or o+ s.
        let mut j = i + 1;
        while kinds.get(j) == Some(&TerminalKind::Optic) {
            j += 1;
        }
        let controlled = match kinds.get(j) {
            Some(TerminalKind::Sensor) => true,
            Some(TerminalKind::Illumination) => j == i + 1,
            _ => false,
        };
        if !controlled {
            return RejectReason::DanglingA2;
        }
    }
    if kinds.last() != Some(&TerminalKind::Algo1) {
        return RejectReason::NoAlgorithm;
    }
    RejectReason::Unexpected
}

/// Samples a string from the language. Beyond `depth_limit` every variable
/// takes its shortest terminating alternative.
pub fn derive_random(g: &Grammar, seed: u64, depth_limit: usize) -> SystemString {
    assert!(depth_limit >= 3, "depth_limit must be at least 3");
    let mut rng = StdRng::seed_from_u64(seed);
    let algo1: Vec<&str> = g.algo1_names().collect();
    let algo2: Vec<&str> = g.algo2_names().collect();
    let mut out = Vec::new();
    expand(g, Variable::R, 0, depth_limit, &mut rng, &algo1, &algo2, &mut out);
    SystemString::new(out)
}

#[allow(clippy::too_many_arguments)]
fn expand(
    g: &Grammar,
    var: Variable,
    depth: usize,
    limit: usize,
    rng: &mut StdRng,
    algo1: &[&str],
    algo2: &[&str],
    out: &mut Vec<Terminal>,
) {
    let rules: Vec<&Production> = g.rules_for(var).map(|(_, p)| p).collect();
    let prod = if depth >= limit {
        // Shortest body without a recursive reference to `var`.
        rules
            .iter()
            .filter(|p| !p.body.contains(&Symbol::Var(var)))
            .min_by_key(|p| p.body.len())
            .copied()
            .unwrap_or(rules[0])
    } else {
        rules[rng.random_range(0..rules.len())]
    };
    for sym in &prod.body {
        match sym {
            Symbol::Var(v) => expand(g, *v, depth + 1, limit, rng, algo1, algo2, out),
            Symbol::Term(k) => out.push(random_terminal(*k, rng, algo1, algo2)),
        }
    }
}

fn random_pose(rng: &mut StdRng) -> Pose {
    let mut v = [0.0; 6];
    for (i, slot) in v.iter_mut().enumerate() {
        let range: f64 = if i < 3 { 10.0 } else { 180.0 };
        // Round to 1e-3 so the pose reads like hand-written input.
        *slot = (rng.random_range(-range..range) * 1000.0).round() / 1000.0;
    }
    Pose::from_array(v)
}

fn random_terminal(kind: TerminalKind, rng: &mut StdRng, algo1: &[&str], algo2: &[&str]) -> Terminal {
    match kind {
        TerminalKind::Sensor => {
            let sizes = [32, 64, 128, 256, 1080];
            let wl = [Wavelength::Rgb, Wavelength::Mono, Wavelength::Tof, Wavelength::Spad];
            Terminal::Sensor(SensorParams {
                pose: random_pose(rng),
                hw: (
                    sizes[rng.random_range(0..sizes.len())],
                    sizes[rng.random_range(0..sizes.len())],
                ),
                fps: [30, 60, 1000][rng.random_range(0..3)],
                wavelength: wl[rng.random_range(0..wl.len())],
                bits: [1, 8, 12][rng.random_range(0..3)],
            })
        }
        TerminalKind::Optic => Terminal::Optic(OpticParams {
            focal_mm: rng.random_range(4.0..200.0f64),
            aperture: rng.random_range(1..9),
        }),
        TerminalKind::Illumination => Terminal::Illumination(IlluminationParams {
            pose: random_pose(rng),
            intensity: rng.random_range(0.0..1.0f64),
        }),
        TerminalKind::Algo1 => Terminal::Algo1(algo1[rng.random_range(0..algo1.len())].to_string()),
        TerminalKind::Algo2 => Terminal::Algo2(algo2[rng.random_range(0..algo2.len())].to_string()),
    }
}
