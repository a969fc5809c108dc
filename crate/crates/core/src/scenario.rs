//! Line-oriented scenario files and the built-in scenarios.
//!
//! ```text
//! # comment
//! [dynamics]
//! n = 2
//! m = 2
//! f = "0", "0"
//! g.1 = "1", "0"
//! g.2 = "0", "x1"
//!
//! [input]
//! breakpoints = 0, 0.5, 1
//! table.0 = 0: 0, 0; 0.5: 0, 0
//! table.1 = 0.5: 1, 1; 1: 1, 1
//! at.1 = 1, 1
//!
//! [initial]
//! x = 0, 0
//! ```
//!
//! Sections: `dynamics`, `control_set`, `input`, `v`, `initial`, `solver`,
//! `sweep`, `bridge`, `target`, `cost`. Segment, table, at-value and bridge
//! indices are zero-based; field indices `g.i` start at 1.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::bvpath::{BvError, BvPath, ControlSet, ExprSegment, Segment, SampledControl, TableSegment};
use crate::completion::{validate_arc, BridgeOverrides, Polyline, DEFAULT_S_CELLS};
use crate::expr::{self, Expr, Scope, Var};
use crate::integrator::{Dynamics, DEFAULT_GUARD};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}, field {field}: {message}")]
    Field { line: usize, field: String, message: String },
    #[error("missing field {field}")]
    Missing { field: String },
    #[error("unknown builtin scenario {0:?}; expected ex21, step_noncomm or step_comm")]
    UnknownBuiltin(String),
}

type Result<T> = std::result::Result<T, ScenarioError>;

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

#[derive(Debug, Default)]
struct Document {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

const SECTIONS: [&str; 10] = ["dynamics", "control_set", "input", "v", "initial", "solver", "sweep", "bridge", "target", "cost"];

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

impl Document {
    fn parse(text: &str) -> Result<Self> {
        let mut doc = Document::default();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = strip_comment(raw).trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ScenarioError::Syntax { line, message: "unterminated section header".into() })?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(ScenarioError::Syntax { line, message: format!("unknown section [{name}]") });
                }
                if doc.sections.contains_key(name) {
                    return Err(ScenarioError::Syntax { line, message: format!("section [{name}] appears twice") });
                }
                doc.sections.insert(name.to_string(), BTreeMap::new());
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ScenarioError::Syntax { line, message: "expected `key = value`".into() })?;
            let section = current
                .as_ref()
                .ok_or_else(|| ScenarioError::Syntax { line, message: "entry before any section header".into() })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ScenarioError::Syntax { line, message: "empty key".into() });
            }
            let entries = doc.sections.get_mut(section).expect("section exists");
            if entries.contains_key(key) {
                return Err(ScenarioError::Syntax { line, message: format!("duplicate key {section}.{key}") });
            }
            entries.insert(key.to_string(), Entry { line, value: value.trim().to_string() });
        }
        Ok(doc)
    }

    fn section<'a>(&'a self, name: &'a str) -> Option<Section<'a>> {
        self.sections.get(name).map(|entries| Section { name, entries })
    }
}

struct Section<'a> {
    name: &'a str,
    entries: &'a BTreeMap<String, Entry>,
}

impl<'a> Section<'a> {
    fn field(&self, key: &str) -> String {
        format!("{}.{}", self.name, key)
    }

    fn error(&self, key: &str, message: impl Into<String>) -> ScenarioError {
        let line = self.entries.get(key).map(|e| e.line).unwrap_or(0);
        ScenarioError::Field { line, field: self.field(key), message: message.into() }
    }

    fn get(&self, key: &str) -> Option<&'a Entry> {
        self.entries.get(key)
    }

    fn check_keys(&self, allowed: &[&str], indexed: &[&str]) -> Result<()> {
        for key in self.entries.keys() {
            let plain = allowed.contains(&key.as_str());
            let numbered = key
                .split_once('.')
                .is_some_and(|(prefix, idx)| indexed.contains(&prefix) && idx.parse::<usize>().is_ok());
            if !plain && !numbered {
                return Err(self.error(key, "unknown field"));
            }
        }
        Ok(())
    }

    /// `(index, entry)` for every `prefix.i` key, in index order.
    fn indexed(&self, prefix: &str) -> Vec<(usize, String, &'a Entry)> {
        let mut out: Vec<_> = self
            .entries
            .iter()
            .filter_map(|(key, entry)| {
                let (p, idx) = key.split_once('.')?;
                (p == prefix).then(|| idx.parse::<usize>().ok().map(|i| (i, key.clone(), entry)))?
            })
            .collect();
        out.sort_by_key(|(i, _, _)| *i);
        out
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|e| parse_number(&e.value).map_err(|m| self.error(key, m))).transpose()
    }

    fn count(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|e| e.value.parse::<usize>().map_err(|_| self.error(key, format!("expected a non-negative integer, got {:?}", e.value))))
            .transpose()
    }

    fn numbers(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(|e| parse_numbers(&e.value).map_err(|m| self.error(key, m))).transpose()
    }

    fn strings(&self, key: &str) -> Result<Option<Vec<String>>> {
        self.get(key).map(|e| parse_strings(&e.value).map_err(|m| self.error(key, m))).transpose()
    }

    fn exprs(&self, key: &str, scope: &Scope) -> Result<Option<Vec<Expr>>> {
        let Some(sources) = self.strings(key)? else {
            return Ok(None);
        };
        let mut out = Vec::with_capacity(sources.len());
        for src in &sources {
            let e = expr::parse(src).map_err(|err| self.error(key, format!("{src:?}: {err}")))?;
            if let Some(var) = e.first_out_of_scope(scope) {
                return Err(self.error(key, format!("{src:?} uses {var}, which is not allowed here")));
            }
            out.push(e);
        }
        Ok(Some(out))
    }
}

fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("expected a number, got {:?}", s.trim()))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} is not finite"))
    }
}

fn parse_numbers(s: &str) -> std::result::Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(parse_number).collect()
}

fn parse_points(s: &str) -> std::result::Result<Vec<Vec<f64>>, String> {
    s.split(';').map(parse_numbers).collect()
}

fn parse_strings(s: &str) -> std::result::Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut rest = s.trim();
    loop {
        let body = rest.strip_prefix('"').ok_or_else(|| format!("expected a quoted expression at {rest:?}"))?;
        let end = body.find('"').ok_or("unterminated quote")?;
        out.push(body[..end].to_string());
        rest = body[end + 1..].trim_start();
        if rest.is_empty() {
            return Ok(out);
        }
        rest = rest.strip_prefix(',').ok_or_else(|| format!("expected ',' before {rest:?}"))?.trim_start();
    }
}

/// One input segment as written in the file.
#[derive(Debug, Clone, PartialEq)]
pub enum SegmentSpec {
    /// Expressions in `t` and possibly `k`.
    Expr(Vec<Expr>),
    Table { times: Vec<f64>, values: Vec<Vec<f64>> },
}

/// Input block: a BV path, possibly a family indexed by `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSpec {
    pub breakpoints: Vec<f64>,
    pub segments: Vec<SegmentSpec>,
    pub at_values: Vec<Option<Vec<f64>>>,
    pub k: Option<f64>,
}

impl InputSpec {
    pub fn interval(&self) -> (f64, f64) {
        (self.breakpoints[0], self.breakpoints[self.breakpoints.len() - 1])
    }

    /// Whether some expression refers to `k`.
    pub fn is_family(&self) -> bool {
        self.segments.iter().any(|s| matches!(s, SegmentSpec::Expr(es) if es.iter().any(|e| e.depends_on(Var::K))))
    }

    /// The path with `k` bound to `k`, or to the declared default.
    pub fn path_with_k(&self, k: Option<f64>) -> std::result::Result<BvPath, BvError> {
        let k = k.or(self.k);
        if self.is_family() && k.is_none() {
            return Err(BvError::Invalid("the input depends on k but no k is given".into()));
        }
        let segments = self
            .segments
            .iter()
            .map(|s| match s {
                SegmentSpec::Expr(es) => {
                    let bound = es.iter().map(|e| k.map_or_else(|| e.clone(), |k| e.bind(Var::K, k))).collect();
                    ExprSegment::new(bound).map(Segment::Expr)
                }
                SegmentSpec::Table { times, values } => TableSegment::new(times.clone(), values.clone()).map(Segment::Table),
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        BvPath::new(self.breakpoints.clone(), segments, self.at_values.clone())
    }

    pub fn path(&self) -> std::result::Result<BvPath, BvError> {
        self.path_with_k(None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSpec {
    pub step: f64,
    pub s_cells: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec { step: 1e-3, s_cells: DEFAULT_S_CELLS }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub ks: Vec<usize>,
    pub taus: Vec<f64>,
    /// Kernel half-width; `b - a` when absent.
    pub support: Option<f64>,
}

/// Known limit pair `(u, x)` given by expressions in `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub input: Vec<Expr>,
    pub state: Vec<Expr>,
}

/// Cost `x6(b) + max_{t in times} (x4(t) - exp(phi(t)))^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub phi: Expr,
    pub times: Vec<f64>,
}

impl CostSpec {
    pub fn phi_path(&self, a: f64, b: f64) -> std::result::Result<BvPath, BvError> {
        let seg = ExprSegment::new(vec![self.phi.clone()])?;
        BvPath::new(vec![a, b], vec![Segment::Expr(seg)], vec![None, None])
    }
}

/// Validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub dynamics: Dynamics,
    pub control_set: ControlSet,
    pub input: InputSpec,
    pub v: SampledControl,
    pub v_set: Option<ControlSet>,
    pub x0: Vec<f64>,
    pub solver: SolverSpec,
    pub sweep: Option<SweepSpec>,
    pub bridges: BridgeOverrides,
    pub target: Option<TargetSpec>,
    pub cost: Option<CostSpec>,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.input.interval();
        write!(
            f,
            "{}: n = {}, m = {}, l = {}, [{a}, {b}], {} breakpoint(s)",
            self.name,
            self.dynamics.n(),
            self.dynamics.m(),
            self.dynamics.l(),
            self.input.breakpoints.len()
        )
    }
}

/// Half-width of the default control box.
pub const DEFAULT_BOX: f64 = 1e6;

/// Read a scenario file, or a builtin when `source` names one.
pub fn load_scenario(source: &str) -> Result<Scenario> {
    if let Some(text) = builtin_source(source) {
        return parse_scenario(source, text);
    }
    let path = Path::new(source);
    if !path.exists() && !source.contains(['/', '.']) {
        return Err(ScenarioError::UnknownBuiltin(source.to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io { path: source.to_string(), message: e.to_string() })?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or(source).to_string();
    parse_scenario(&name, &text)
}

pub fn builtin(name: &str) -> Result<Scenario> {
    let text = builtin_source(name).ok_or_else(|| ScenarioError::UnknownBuiltin(name.to_string()))?;
    parse_scenario(name, text)
}

pub const BUILTINS: [&str; 3] = ["ex21", "step_noncomm", "step_comm"];

fn builtin_source(name: &str) -> Option<&'static str> {
    match name {
        "ex21" => Some(EX21),
        "step_noncomm" => Some(STEP_NONCOMM),
        "step_comm" => Some(STEP_COMM),
        _ => None,
    }
}

const EX21: &str = r#"
[dynamics]
n = 6
m = 3
f = "0", "0", "0", "0", "-1", "(x3 - x5)^2 + x1^2 + x2^2"
g.1 = "1", "0", "x2", "0", "0", "0"
g.2 = "0", "1", "-x1", "0", "0", "0"
g.3 = "0", "0", "0", "x4", "0", "0"

[control_set]
lower = -1, -1, 0
upper = 1, 1, 1

[input]
breakpoints = 0, 1
segment.0 = "(cos(k*t) - 1)/sqrt(k)", "sin(k*t)/sqrt(k)", "t"
k = 10

[initial]
x = 0, 0, 1, 1, 1, 0

[solver]
step = 1e-4

[sweep]
ks = 25, 100, 400
taus = 0.25, 0.5, 0.75, 1

[target]
input = "0", "0", "t"
state = "0", "0", "1 - t", "exp(t)", "1 - t", "0"

[cost]
phi = "t"
times = 0.25, 0.5, 0.75, 1
"#;

const STEP_NONCOMM: &str = r#"
[dynamics]
n = 2
m = 2
f = "0", "0"
g.1 = "1", "0"
g.2 = "0", "x1"

[control_set]
lower = 0, 0
upper = 1, 1
whitney = 1.5

[input]
breakpoints = 0, 0.5, 1
table.0 = 0: 0, 0; 0.5: 0, 0
table.1 = 0.5: 1, 1; 1: 1, 1
at.1 = 1, 1

[bridge]
minus.1 = 0, 0; 1, 0; 1, 1

[initial]
x = 0, 0

[sweep]
ks = 8, 32, 128
taus = 0.25, 0.5, 0.75, 1
"#;

const STEP_COMM: &str = r#"
[dynamics]
n = 2
m = 2
f = "0", "0"
g.1 = "x1", "0"
g.2 = "0", "x2"

[control_set]
lower = 0, 0
upper = 1, 1
whitney = 1.5

[input]
breakpoints = 0, 0.5, 1
table.0 = 0: 0, 0; 0.5: 0, 0
table.1 = 0.5: 1, 1; 1: 1, 1
at.1 = 1, 1

[bridge]
minus.1 = 0, 0; 1, 0; 1, 1

[initial]
x = 1, 1

[sweep]
ks = 8, 32, 128
taus = 0.25, 0.5, 0.75, 1
"#;

/// Parse and validate scenario text.
pub fn parse_scenario(name: &str, text: &str) -> Result<Scenario> {
    let doc = Document::parse(text)?;
    let dyn_section = doc.section("dynamics").ok_or_else(|| ScenarioError::Missing { field: "[dynamics]".into() })?;
    let dynamics = parse_dynamics(&dyn_section)?;
    let (n, m, l) = (dynamics.n(), dynamics.m(), dynamics.l());

    let input_section = doc.section("input").ok_or_else(|| ScenarioError::Missing { field: "[input]".into() })?;
    let input = parse_input(&input_section, m)?;
    let (a, b) = input.interval();

    let control_set = match doc.section("control_set") {
        Some(s) => parse_set(&s, m)?,
        None => ControlSet::cube(m, DEFAULT_BOX),
    };
    let path = input.path().map_err(|e| input_section.error("breakpoints", e.to_string()))?;
    path.check_in(&control_set).map_err(|e| input_section.error("breakpoints", e.to_string()))?;

    let (v, v_set) = match doc.section("v") {
        Some(s) => parse_v(&s, l, a, b)?,
        None if l == 0 => (SampledControl::none(a, b), None),
        None => return Err(ScenarioError::Missing { field: format!("[v] (l = {l})") }),
    };

    let initial = doc.section("initial").ok_or_else(|| ScenarioError::Missing { field: "[initial]".into() })?;
    initial.check_keys(&["x"], &[])?;
    let x0 = initial.numbers("x")?.ok_or_else(|| ScenarioError::Missing { field: "initial.x".into() })?;
    if x0.len() != n {
        return Err(initial.error("x", format!("expected {n} components, got {}", x0.len())));
    }

    let solver = match doc.section("solver") {
        Some(s) => {
            s.check_keys(&["step", "s_cells"], &[])?;
            let mut spec = SolverSpec::default();
            if let Some(step) = s.number("step")? {
                if !(step > 0.0 && step <= 1.0) {
                    return Err(s.error("step", "step must lie in (0, 1]"));
                }
                spec.step = step;
            }
            if let Some(cells) = s.count("s_cells")? {
                if cells < 2 {
                    return Err(s.error("s_cells", "need at least 2 cells"));
                }
                spec.s_cells = cells;
            }
            spec
        }
        None => SolverSpec::default(),
    };

    let sweep = doc.section("sweep").map(|s| parse_sweep(&s, a, b)).transpose()?;
    let bridges = match doc.section("bridge") {
        Some(s) => parse_bridges(&s, &path, &control_set)?,
        None => BridgeOverrides::default(),
    };
    let target = doc.section("target").map(|s| parse_target(&s, n, m)).transpose()?;
    let cost = doc.section("cost").map(|s| parse_cost(&s, n, a, b)).transpose()?;

    Ok(Scenario { name: name.to_string(), dynamics, control_set, input, v, v_set, x0, solver, sweep, bridges, target, cost })
}

fn parse_dynamics(s: &Section<'_>) -> Result<Dynamics> {
    s.check_keys(&["n", "m", "l", "f", "guard"], &["g"])?;
    let n = s.count("n")?.ok_or_else(|| ScenarioError::Missing { field: s.field("n") })?;
    let m = s.count("m")?.ok_or_else(|| ScenarioError::Missing { field: s.field("m") })?;
    let l = s.count("l")?.unwrap_or(0);
    if n == 0 || m == 0 {
        return Err(s.error(if n == 0 { "n" } else { "m" }, "dimension must be positive"));
    }
    let drift_scope = Scope { t: true, k: false, n, m, l };
    let f = s.exprs("f", &drift_scope)?.ok_or_else(|| ScenarioError::Missing { field: s.field("f") })?;
    if f.len() != n {
        return Err(s.error("f", format!("expected {n} components, got {}", f.len())));
    }
    let fields = s.indexed("g");
    if fields.len() != m || fields.iter().enumerate().any(|(i, (idx, _, _))| *idx != i + 1) {
        let key = fields.first().map(|f| f.1.clone()).unwrap_or_else(|| "g.1".into());
        return Err(s.error(&key, format!("expected fields g.1 .. g.{m}")));
    }
    let field_scope = Scope { t: false, k: false, n, m: 0, l: 0 };
    let mut g = Vec::with_capacity(m);
    for (_, key, _) in &fields {
        let comps = s.exprs(key, &field_scope)?.expect("key exists");
        if comps.len() != n {
            return Err(s.error(key, format!("expected {n} components, got {}", comps.len())));
        }
        g.push(crate::expr::VectorField::new(comps));
    }
    let mut dynamics = Dynamics::new(n, m, l, crate::expr::VectorField::new(f), g).map_err(|e| s.error("f", e.to_string()))?;
    let guard = s.number("guard")?.unwrap_or(DEFAULT_GUARD);
    if !(guard > 0.0) {
        return Err(s.error("guard", "guard must be positive"));
    }
    dynamics = dynamics.with_guard(guard);
    Ok(dynamics)
}

fn parse_set(s: &Section<'_>, dim: usize) -> Result<ControlSet> {
    s.check_keys(&["lower", "upper", "whitney"], &["vertex"])?;
    let whitney = s.number("whitney")?.unwrap_or(1.0);
    let vertices = s.indexed("vertex");
    let set = if vertices.is_empty() {
        let lower = s.numbers("lower")?.ok_or_else(|| ScenarioError::Missing { field: s.field("lower") })?;
        let upper = s.numbers("upper")?.ok_or_else(|| ScenarioError::Missing { field: s.field("upper") })?;
        if lower.len() != dim || upper.len() != dim {
            return Err(s.error("lower", format!("bounds must have {dim} components")));
        }
        ControlSet::boxed(lower, upper, whitney).map_err(|e| s.error(if whitney < 1.0 { "whitney" } else { "lower" }, e.to_string()))?
    } else {
        if s.get("lower").is_some() || s.get("upper").is_some() {
            return Err(s.error("lower", "give either box bounds or vertices, not both"));
        }
        let mut points = Vec::with_capacity(vertices.len());
        for (_, key, entry) in &vertices {
            let p = parse_numbers(&entry.value).map_err(|m| s.error(key, m))?;
            if p.len() != dim {
                return Err(s.error(key, format!("vertex must have {dim} components")));
            }
            points.push(p);
        }
        ControlSet::hull(points, whitney).map_err(|e| s.error(&vertices[0].1, e.to_string()))?
    };
    Ok(set)
}

fn parse_input(s: &Section<'_>, m: usize) -> Result<InputSpec> {
    s.check_keys(&["breakpoints", "k"], &["segment", "table", "at"])?;
    let breakpoints = s.numbers("breakpoints")?.ok_or_else(|| ScenarioError::Missing { field: s.field("breakpoints") })?;
    if breakpoints.len() < 2 || breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(s.error("breakpoints", "need at least two strictly increasing breakpoints"));
    }
    let k = s.number("k")?;
    let count = breakpoints.len() - 1;
    let mut segments: Vec<Option<SegmentSpec>> = vec![None; count];
    let scope = Scope { t: true, k: true, n: 0, m: 0, l: 0 };
    for (i, key, _) in s.indexed("segment") {
        if i >= count {
            return Err(s.error(&key, format!("segment index out of range (there are {count} segments)")));
        }
        let exprs = s.exprs(&key, &scope)?.expect("key exists");
        if exprs.len() != m {
            return Err(s.error(&key, format!("expected {m} components, got {}", exprs.len())));
        }
        segments[i] = Some(SegmentSpec::Expr(exprs));
    }
    for (i, key, entry) in s.indexed("table") {
        if i >= count {
            return Err(s.error(&key, format!("table index out of range (there are {count} segments)")));
        }
        if segments[i].is_some() {
            return Err(s.error(&key, format!("segment {i} is defined twice")));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for row in entry.value.split(';') {
            let (t, v) = row.split_once(':').ok_or_else(|| s.error(&key, format!("expected `time: values` in {:?}", row.trim())))?;
            times.push(parse_number(t).map_err(|m| s.error(&key, m))?);
            let v = parse_numbers(v).map_err(|m| s.error(&key, m))?;
            if v.len() != m {
                return Err(s.error(&key, format!("expected {m} components, got {}", v.len())));
            }
            values.push(v);
        }
        segments[i] = Some(SegmentSpec::Table { times, values });
    }
    let segments = segments
        .into_iter()
        .enumerate()
        .map(|(i, seg)| seg.ok_or_else(|| ScenarioError::Missing { field: format!("input.segment.{i} or input.table.{i}") }))
        .collect::<Result<Vec<_>>>()?;
    let mut at_values = vec![None; breakpoints.len()];
    for (i, key, entry) in s.indexed("at") {
        if i >= breakpoints.len() {
            return Err(s.error(&key, format!("breakpoint index out of range (there are {})", breakpoints.len())));
        }
        let v = parse_numbers(&entry.value).map_err(|m| s.error(&key, m))?;
        if v.len() != m {
            return Err(s.error(&key, format!("expected {m} components, got {}", v.len())));
        }
        at_values[i] = Some(v);
    }
    let spec = InputSpec { breakpoints, segments, at_values, k };
    if spec.is_family() && k.is_none() {
        return Err(s.error("segment.0", "expressions use k but input.k is not set"));
    }
    spec.path().map_err(|e| s.error("breakpoints", e.to_string()))?;
    Ok(spec)
}

fn parse_v(s: &Section<'_>, l: usize, a: f64, b: f64) -> Result<(SampledControl, Option<ControlSet>)> {
    s.check_keys(&["cells", "values", "lower", "upper"], &["row"])?;
    if l == 0 {
        return Err(s.error("values", "dynamics declare l = 0, so [v] must be omitted"));
    }
    let rows = s.indexed("row");
    let control = if rows.is_empty() {
        let scope = Scope { t: true, k: false, n: 0, m: 0, l: 0 };
        let exprs = s.exprs("values", &scope)?.ok_or_else(|| ScenarioError::Missing { field: s.field("values") })?;
        if exprs.len() != l {
            return Err(s.error("values", format!("expected {l} components, got {}", exprs.len())));
        }
        let cells = s.count("cells")?.unwrap_or(1000);
        if cells == 0 {
            return Err(s.error("cells", "need at least one cell"));
        }
        let sources: Vec<String> = exprs.iter().map(|e| e.to_string()).collect();
        let refs: Vec<&str> = sources.iter().map(String::as_str).collect();
        SampledControl::from_exprs(a, b, cells, &refs).map_err(|e| s.error("values", e.to_string()))?
    } else {
        let mut values = Vec::with_capacity(rows.len());
        for (i, (idx, key, entry)) in rows.iter().enumerate() {
            if *idx != i {
                return Err(s.error(key, format!("rows must be numbered 0 .. {}", rows.len() - 1)));
            }
            let v = parse_numbers(&entry.value).map_err(|m| s.error(key, m))?;
            if v.len() != l {
                return Err(s.error(key, format!("expected {l} components, got {}", v.len())));
            }
            values.push(v);
        }
        SampledControl::new(a, b, values).map_err(|e| s.error(&rows[0].1, e.to_string()))?
    };
    let set = match (s.numbers("lower")?, s.numbers("upper")?) {
        (Some(lo), Some(hi)) => {
            if lo.len() != l || hi.len() != l {
                return Err(s.error("lower", format!("bounds must have {l} components")));
            }
            let set = ControlSet::boxed(lo, hi, 1.0).map_err(|e| s.error("lower", e.to_string()))?;
            control.check_in(&set).map_err(|e| s.error("lower", e.to_string()))?;
            Some(set)
        }
        (None, None) => None,
        _ => return Err(s.error("lower", "give both lower and upper bounds for V")),
    };
    Ok((control, set))
}

fn parse_sweep(s: &Section<'_>, a: f64, b: f64) -> Result<SweepSpec> {
    s.check_keys(&["ks", "taus", "support"], &[])?;
    let ks_raw = s.numbers("ks")?.ok_or_else(|| ScenarioError::Missing { field: s.field("ks") })?;
    let ks = parse_ks(&ks_raw).map_err(|m| s.error("ks", m))?;
    let taus = s.numbers("taus")?.unwrap_or_else(|| vec![b]);
    if taus.is_empty() || taus.iter().any(|t| !(*t >= a && *t <= b)) {
        return Err(s.error("taus", format!("every tau must lie in [{a}, {b}]")));
    }
    let support = s.number("support")?;
    if let Some(w) = support {
        if !(w > 0.0 && w <= b - a) {
            return Err(s.error("support", format!("support must lie in (0, {}]", b - a)));
        }
    }
    Ok(SweepSpec { ks, taus, support })
}

/// Validate a k list: positive integers in strictly increasing order.
pub fn parse_ks(raw: &[f64]) -> std::result::Result<Vec<usize>, String> {
    if raw.is_empty() {
        return Err("at least one k is required".into());
    }
    let ks: Vec<usize> = raw
        .iter()
        .map(|&k| if k >= 1.0 && k.fract() == 0.0 && k < 1e9 { Ok(k as usize) } else { Err(format!("k = {k} is not a positive integer")) })
        .collect::<std::result::Result<_, _>>()?;
    if ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err("ks must be strictly increasing".into());
    }
    Ok(ks)
}

fn parse_bridges(s: &Section<'_>, path: &BvPath, set: &ControlSet) -> Result<BridgeOverrides> {
    s.check_keys(&[], &["minus", "plus"])?;
    let mut overrides = BridgeOverrides::default();
    for (side, map) in [("minus", &mut overrides.minus), ("plus", &mut overrides.plus)] {
        for (i, key, entry) in s.indexed(side) {
            if i >= path.breakpoints().len() {
                return Err(s.error(&key, format!("breakpoint index out of range (there are {})", path.breakpoints().len())));
            }
            let points = parse_points(&entry.value).map_err(|m| s.error(&key, m))?;
            let arc = Polyline::new(points).map_err(|e| s.error(&key, e.to_string()))?;
            let jump = &path.jumps()[i];
            let (from, to) = if side == "minus" { (&jump.left, &jump.at) } else { (&jump.at, &jump.right) };
            validate_arc(i, &arc, from, to, set).map_err(|e| s.error(&key, e.to_string()))?;
            map.insert(i, arc);
        }
    }
    Ok(overrides)
}

fn parse_target(s: &Section<'_>, n: usize, m: usize) -> Result<TargetSpec> {
    s.check_keys(&["input", "state"], &[])?;
    let scope = Scope { t: true, k: false, n: 0, m: 0, l: 0 };
    let input = s.exprs("input", &scope)?.ok_or_else(|| ScenarioError::Missing { field: s.field("input") })?;
    let state = s.exprs("state", &scope)?.ok_or_else(|| ScenarioError::Missing { field: s.field("state") })?;
    if input.len() != m {
        return Err(s.error("input", format!("expected {m} components, got {}", input.len())));
    }
    if state.len() != n {
        return Err(s.error("state", format!("expected {n} components, got {}", state.len())));
    }
    Ok(TargetSpec { input, state })
}

fn parse_cost(s: &Section<'_>, n: usize, a: f64, b: f64) -> Result<CostSpec> {
    s.check_keys(&["phi", "times"], &[])?;
    if n < 6 {
        return Err(s.error("phi", format!("the cost reads x4 and x6 but n = {n}")));
    }
    let scope = Scope { t: true, k: false, n: 0, m: 0, l: 0 };
    let mut phi = s.exprs("phi", &scope)?.ok_or_else(|| ScenarioError::Missing { field: s.field("phi") })?;
    if phi.len() != 1 {
        return Err(s.error("phi", "phi must be a single expression"));
    }
    let times = s.numbers("times")?.ok_or_else(|| ScenarioError::Missing { field: s.field("times") })?;
    if times.is_empty() || times.iter().any(|t| !(*t >= a && *t <= b)) {
        return Err(s.error("times", format!("times must be non-empty and lie in [{a}, {b}]")));
    }
    Ok(CostSpec { phi: phi.remove(0), times })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[dynamics]\nn = 1\nm = 1\nf = \"0\"\ng.1 = \"x1\"\n\n[input]\nbreakpoints = 0, 1\ntable.0 = 0: 0.5; 1: 0.5\n\n[initial]\nx = 2\n";

    #[test]
    fn minimal_file_gets_defaults() {
        let sc = parse_scenario("min", MINIMAL).unwrap();
        assert_eq!(sc.dynamics.l(), 0);
        assert_eq!(sc.solver, SolverSpec::default());
        assert!(sc.sweep.is_none() && sc.target.is_none() && sc.cost.is_none());
        assert!(sc.bridges.is_empty());
        assert_eq!(sc.input.path().unwrap().eval(0.3).unwrap(), vec![0.5]);
        assert_eq!(sc.control_set.whitney(), 1.0);
    }

    #[test]
    fn control_dependent_field_is_rejected() {
        let text = MINIMAL.replace("g.1 = \"x1\"", "g.1 = \"u1\"");
        match parse_scenario("bad", &text) {
            Err(ScenarioError::Field { line, field, .. }) => {
                assert_eq!(line, 5);
                assert_eq!(field, "dynamics.g.1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn diagnostics_name_line_and_field() {
        let text = MINIMAL.replace("x = 2", "x = 2, 3");
        let err = parse_scenario("bad", &text).unwrap_err();
        assert_eq!(err.to_string(), "line 12, field initial.x: expected 1 components, got 2");
        let err = parse_scenario("bad", "[dynamics]\nn 1\n").unwrap_err();
        assert_eq!(err, ScenarioError::Syntax { line: 2, message: "expected `key = value`".into() });
        let err = parse_scenario("bad", &format!("{MINIMAL}[wat]\n")).unwrap_err();
        assert!(matches!(err, ScenarioError::Syntax { line: 13, .. }));
        let err = parse_scenario("bad", &MINIMAL.replace("f = \"0\"", "f = \"0\"\nh = 1")).unwrap_err();
        assert!(matches!(err, ScenarioError::Field { line: 5, .. }), "{err}");
    }

    #[test]
    fn input_outside_control_set_is_rejected() {
        let text = MINIMAL.replace("[input]", "[control_set]\nlower = 0\nupper = 0.25\n\n[input]");
        assert!(matches!(parse_scenario("bad", &text), Err(ScenarioError::Field { .. })));
    }

    #[test]
    fn ex21_builtin() {
        let sc = load_scenario("ex21").unwrap();
        assert_eq!((sc.dynamics.n(), sc.dynamics.m()), (6, 3));
        assert_eq!(sc.dynamics.fields()[2].components()[3].to_string(), "x4");
        assert!(sc.input.is_family());
        assert_eq!(sc.x0, vec![0.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        let u = sc.input.path_with_k(Some(4.0)).unwrap();
        let expected = [((4.0f64 * 0.3).cos() - 1.0) / 2.0, (4.0f64 * 0.3).sin() / 2.0, 0.3];
        for (got, want) in u.eval(0.3).unwrap().iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!(sc.cost.is_some() && sc.target.is_some());
    }

    #[test]
    fn step_builtins_carry_bridges() {
        for name in ["step_noncomm", "step_comm"] {
            let sc = builtin(name).unwrap();
            assert_eq!(sc.bridges.minus[&1].points().len(), 3);
            let u = sc.input.path().unwrap();
            assert_eq!(u.jumps()[1].at, vec![1.0, 1.0]);
        }
        assert!(matches!(load_scenario("nope"), Err(ScenarioError::UnknownBuiltin(_))));
    }

    #[test]
    fn long_bridge_violates_whitney_bound() {
        let text = builtin_source("step_noncomm").unwrap().replace("whitney = 1.5", "whitney = 1.2");
        let err = parse_scenario("bad", &text).unwrap_err();
        assert!(err.to_string().contains("bridge.minus.1"), "{err}");
    }

    #[test]
    fn v_block_and_sweep() {
        let text = MINIMAL.replace("n = 1\nm = 1\n", "n = 1\nm = 1\nl = 1\n").replace("f = \"0\"", "f = \"v1\"")
            + "\n[v]\ncells = 4\nvalues = \"t\"\nlower = 0\nupper = 1\n\n[sweep]\nks = 2, 4\n";
        let sc = parse_scenario("v", &text).unwrap();
        assert_eq!(sc.v.values().len(), 4);
        assert_eq!(sc.v.eval(0.1), &[0.25]);
        assert_eq!(sc.sweep.as_ref().unwrap().taus, vec![1.0]);
        assert!(parse_scenario("v", &text.replace("ks = 2, 4", "ks = 4, 2")).is_err());
        assert!(parse_scenario("v", &text.replace("upper = 1", "upper = 0.5")).is_err());
    }

    #[test]
    fn quoted_lists() {
        assert_eq!(parse_strings(r#""a, b", "c#d""#).unwrap(), vec!["a, b".to_string(), "c#d".to_string()]);
        assert!(parse_strings(r#""a" "b""#).is_err());
        assert_eq!(strip_comment(r#"f = "x#1" # note"#), r#"f = "x#1" "#);
    }
}
