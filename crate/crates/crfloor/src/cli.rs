//! Command-line surface.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use serde_json::{json, Value};
use thiserror::Error;

use crate::crossratios::{cr_mult, CrError, LocalStar};
use crate::cutting::{
    check_cut_identity, cut_elevator, drop_condition, floors_of, graphical_contributions, trace_free_family,
};
use crate::floordiagrams::{
    brute_3d, degenerate, enumerate_diagrams, floor_count_partial, plane_2d, vertex_local_problem, CountError,
    CrossRatioFloorDiagram, DiagramContext, DiagramError, MultProvider, MultTable, PartialCount, Provenance,
    DEFAULT_MAX_CANDIDATES,
};
use crate::maps::{
    direct_count_spec, solution_json, CountOptions, DegenerateKind, DirectCount, MapError, Mode, DEFAULT_MAX_ENDS,
    HARD_MAX_ENDS,
};
use crate::model::{parse_problem, ModelError, ParseError, Problem};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_REFUSED: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "crfloor", version, about = "Count tropical space curves with cross-ratio floor diagrams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Weighted count of cross-ratio floor diagrams.
    Count(Common),
    /// Brute-force count over all combinatorial types.
    Direct {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ModeArg::Degenerate)]
        mode: ModeArg,
    },
    /// Enumerate cross-ratio floor diagrams.
    Diagrams(Common),
    /// Local vertex problems and multiplicities of one diagram.
    VertexMult {
        #[command(flatten)]
        common: Common,
        /// Diagram index in enumeration order.
        #[arg(long, default_value_t = 0)]
        diagram: usize,
    },
    /// Compare the floor count with the brute-force count.
    VerifyTheorem(Common),
    /// Check the cutting identities and graphical contributions on every solution.
    VerifyCutting(Common),
    /// Cross-ratio multiplicity of a local star.
    Crmult {
        #[arg(long)]
        star: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Problem file (JSON).
    pub input: PathBuf,
    /// Overrides the seed in the problem file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_MAX_ENDS)]
    pub max_ends: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_CANDIDATES)]
    pub max_candidates: u128,
    /// Worker threads; defaults to available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Vertex multiplicity table (`key<TAB>value` lines).
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Table,
    Json,
    Dot,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Degenerate,
    Lengths,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },
    #[error("{path}: {source}")]
    Star { path: String, source: serde_json::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    CrossRatio(#[from] CrError),
    #[error(transparent)]
    Cut(#[from] crate::cutting::CutError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Refused(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Map(MapError::TooManyEnds { .. } | MapError::Genericity(_))
            | CliError::Diagram(DiagramError::Budget { .. })
            | CliError::Refused(_) => EXIT_REFUSED,
            _ => EXIT_VALIDATION,
        }
    }
}

impl From<CountError> for CliError {
    fn from(e: CountError) -> Self {
        match e {
            CountError::Diagram(d) => CliError::Diagram(d),
            CountError::Unresolved(u) => CliError::Refused(u.to_string()),
        }
    }
}

/// Result of a command: exit status and the text for stdout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn ok(code: i32, stdout: String) -> Self {
        Outcome { code, stdout, stderr: String::new() }
    }
}

/// Parse arguments (including the program name) and run.
pub fn run_args<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli.command),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                Outcome::ok(code, text)
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            }
        }
    }
}

pub fn run(command: Command) -> Outcome {
    let workers = match &command {
        Command::Count(c)
        | Command::Diagrams(c)
        | Command::VerifyTheorem(c)
        | Command::VerifyCutting(c)
        | Command::Direct { common: c, .. }
        | Command::VertexMult { common: c, .. } => c.workers,
        Command::Crmult { .. } => None,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => return Outcome { code: EXIT_VALIDATION, stdout: String::new(), stderr: e.to_string() },
    };
    match pool.install(|| dispatch(&command)) {
        Ok(out) => out,
        Err(e) => Outcome { code: e.exit_code(), stdout: String::new(), stderr: format!("error: {e}\n") },
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

struct Loaded {
    problem: Problem,
    opts: CountOptions,
}

fn load(c: &Common) -> Result<Loaded, CliError> {
    let text = read(&c.input)?;
    let mut problem =
        parse_problem(&text).map_err(|source| CliError::Parse { path: c.input.display().to_string(), source })?;
    if let Some(s) = c.seed {
        problem.seed = s;
    }
    if c.max_ends > HARD_MAX_ENDS {
        return Err(CliError::Usage(format!("--max-ends is capped at {HARD_MAX_ENDS}")));
    }
    let opts = CountOptions { max_ends: c.max_ends, workers: c.workers, ..CountOptions::default() };
    Ok(Loaded { problem, opts })
}

fn load_table(c: &Common) -> Result<(MultTable, Vec<String>), CliError> {
    match &c.table {
        None => Ok((MultTable::default(), vec![])),
        Some(p) => Ok(MultTable::parse(&read(p)?)),
    }
}

fn render(format: Format, value: &Value, table: impl FnOnce() -> String) -> Result<String, CliError> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(value).expect("json") + "\n"),
        Format::Table => Ok(table()),
        Format::Dot => Err(CliError::Usage("dot output is only available for count and diagrams".into())),
    }
}

fn dot_all(diagrams: &[&CrossRatioFloorDiagram]) -> String {
    diagrams
        .iter()
        .enumerate()
        .map(|(i, d)| d.to_dot().replacen("graph diagram", &format!("graph diagram_{i}"), 1))
        .collect()
}

fn dispatch(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Count(c) => count(c),
        Command::Direct { common, mode } => direct(common, *mode),
        Command::Diagrams(c) => diagrams(c),
        Command::VertexMult { common, diagram } => vertex_mult(common, *diagram),
        Command::VerifyTheorem(c) => verify_theorem(c),
        Command::VerifyCutting(c) => verify_cutting(c),
        Command::Crmult { star, format } => crmult(star, *format),
    }
}

fn diagram_json(d: &CrossRatioFloorDiagram) -> Value {
    serde_json::to_value(d).expect("json")
}

fn partial_json(p: &PartialCount) -> Vec<Value> {
    p.entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut v = json!({ "index": i, "diagram": diagram_json(&e.diagram) });
            match &e.mult {
                Ok(m) => {
                    v["multiplicity"] = json!(m.total);
                    v["edge_factor"] = json!(m.edge_factor);
                    v["vertex_mults"] = serde_json::to_value(&m.vertices).expect("json");
                }
                Err(u) => {
                    v["multiplicity"] = Value::Null;
                    v["unresolved_vertices"] = json!(u.vertices);
                    v["unresolved_keys"] = json!(u.keys);
                }
            }
            v
        })
        .collect()
}

fn count(c: &Common) -> Result<Outcome, CliError> {
    let Loaded { problem, opts } = load(c)?;
    let (table, warnings) = load_table(c)?;
    let ctx = DiagramContext::new(&problem)?;
    let table_keys: Vec<String> = table.entries.keys().cloned().collect();
    let provider = MultProvider::standard(table, problem.seed, opts);
    let partial = floor_count_partial(&ctx, &provider, c.max_candidates)?;
    let used = provider.used_keys();
    let unused: Vec<&String> = table_keys.iter().filter(|k| !used.contains(*k)).collect();
    let code = if partial.total.is_some() { EXIT_OK } else { EXIT_REFUSED };
    if c.format == Format::Dot {
        let ds: Vec<&CrossRatioFloorDiagram> = partial.entries.iter().map(|e| &e.diagram).collect();
        return Ok(Outcome::ok(code, dot_all(&ds)));
    }
    let unresolved: Vec<String> = partial.unresolved_keys().into_iter().collect();
    let value = json!({
        "command": "count",
        "seed": problem.seed,
        "total": partial.total,
        "diagram_count": partial.entries.len(),
        "resolved": partial.resolved,
        "diagrams": partial_json(&partial),
        "unresolved_keys": unresolved,
        "table_warnings": warnings,
        "unused_table_keys": unused,
    });
    let text = render(c.format, &value, || {
        let mut s = String::new();
        for (i, e) in partial.entries.iter().enumerate() {
            match &e.mult {
                Ok(m) => s += &format!("diagram {i}: {}\n", m.total),
                Err(u) => s += &format!("diagram {i}: unresolved vertices {:?}\n", u.vertices),
            }
        }
        for w in &warnings {
            s += &format!("warning: {w}\n");
        }
        match &partial.total {
            Some(t) => s += &format!("total {t} over {} diagrams\n", partial.entries.len()),
            None => {
                s += &format!(
                    "total unavailable: {} of {} diagrams resolved, {} vertex keys missing\n",
                    partial.resolved,
                    partial.entries.len(),
                    unresolved.len()
                )
            }
        }
        s
    })?;
    Ok(Outcome::ok(code, text))
}

fn run_direct(problem: &Problem, mode: Mode, opts: &CountOptions) -> Result<DirectCount, CliError> {
    Ok(direct_count_spec(&problem.cond_spec(), problem.seed, mode, opts)?)
}

fn direct(c: &Common, mode: ModeArg) -> Result<Outcome, CliError> {
    let Loaded { problem, opts } = load(c)?;
    let mode = match mode {
        ModeArg::Degenerate => Mode::Degenerate,
        ModeArg::Lengths => Mode::Lengths,
    };
    let dc = run_direct(&problem, mode, &opts)?;
    let value = json!({
        "command": "direct",
        "mode": if mode == Mode::Lengths { "lengths" } else { "degenerate" },
        "seed": problem.seed,
        "attempt": dc.attempt,
        "types_visited": dc.types_visited,
        "total": dc.total.to_string(),
        "solutions": dc.solutions.iter().map(|s| solution_json(s, &dc.problem)).collect::<Vec<_>>(),
    });
    let text = render(c.format, &value, || {
        let mut s = String::new();
        for (i, sol) in dc.solutions.iter().enumerate() {
            s += &format!("solution {i}: {} vertices, multiplicity {}\n", sol.map.ty.nv, sol.mult);
        }
        s + &format!("total {} ({} types visited)\n", dc.total, dc.types_visited)
    })?;
    Ok(Outcome::ok(EXIT_OK, text))
}

fn diagrams(c: &Common) -> Result<Outcome, CliError> {
    let Loaded { problem, .. } = load(c)?;
    let ctx = DiagramContext::new(&problem)?;
    let ds = enumerate_diagrams(&ctx, c.max_candidates)?;
    if c.format == Format::Dot {
        return Ok(Outcome::ok(EXIT_OK, dot_all(&ds.iter().collect::<Vec<_>>())));
    }
    let value = json!({
        "command": "diagrams",
        "candidates": ctx.candidate_count().to_string(),
        "count": ds.len(),
        "diagrams": ds.iter().map(diagram_json).collect::<Vec<_>>(),
    });
    let text = render(c.format, &value, || {
        let mut s = String::new();
        for (i, d) in ds.iter().enumerate() {
            let floors: Vec<String> = d.vertices.iter().map(|v| format!("{:?}", v.ends)).collect();
            let edges: Vec<String> = d
                .edges
                .iter()
                .map(|e| format!("v{}-v{} w{} {}/{}", e.lower + 1, e.upper + 1, e.weight, e.into_lower, e.into_upper))
                .collect();
            s += &format!("diagram {i}: floors {} edges [{}]\n", floors.join(" "), edges.join(", "));
        }
        s + &format!("{} diagrams\n", ds.len())
    })?;
    Ok(Outcome::ok(EXIT_OK, text))
}

fn vertex_mult(c: &Common, index: usize) -> Result<Outcome, CliError> {
    let Loaded { problem, opts } = load(c)?;
    let (table, warnings) = load_table(c)?;
    let ctx = DiagramContext::new(&problem)?;
    let ds = enumerate_diagrams(&ctx, c.max_candidates)?;
    let d = ds.get(index).ok_or_else(|| CliError::Usage(format!("diagram {index} out of range ({} diagrams)", ds.len())))?;
    let mut rows = Vec::new();
    let mut all_known = true;
    for v in 0..d.vertices.len() {
        let local = vertex_local_problem(&ctx, d, v);
        let key = local.key();
        let from_table = table.entries.get(&key).map(BigInt::to_string);
        let b3 = brute_3d(&local, problem.seed, &opts).ok().map(|x| x.to_string());
        let p2 = plane_2d(&local, problem.seed, &opts).ok().flatten().map(|x| x.to_string());
        let known: Vec<&String> = [&from_table, &b3, &p2].into_iter().flatten().collect();
        all_known &= !known.is_empty();
        let agree = known.windows(2).all(|w| w[0] == w[1]);
        rows.push(json!({
            "vertex": v,
            "key": key,
            "ends": local.total_ends(),
            "table": from_table,
            "brute3D": b3,
            "plane2D": p2,
            "agree": agree,
        }));
    }
    let disagree = rows.iter().any(|r| r["agree"] == json!(false));
    let code = if disagree {
        EXIT_MISMATCH
    } else if all_known {
        EXIT_OK
    } else {
        EXIT_REFUSED
    };
    let value = json!({
        "command": "vertex-mult",
        "seed": problem.seed,
        "diagram": index,
        "vertices": rows,
        "table_warnings": warnings,
    });
    let text = render(c.format, &value, || {
        let mut s = String::new();
        for r in &rows {
            let show = |k: &str| r[k].as_str().unwrap_or("-").to_string();
            s += &format!(
                "v{}: {} ends, table {}, {} {}, {} {}\n  {}\n",
                r["vertex"].as_u64().unwrap_or(0) + 1,
                r["ends"],
                show("table"),
                Provenance::Brute3d.name(),
                show("brute3D"),
                Provenance::Plane2d.name(),
                show("plane2D"),
                r["key"].as_str().unwrap_or("")
            );
        }
        s
    })?;
    Ok(Outcome::ok(code, text))
}

fn verify_theorem(c: &Common) -> Result<Outcome, CliError> {
    let Loaded { problem, opts } = load(c)?;
    let (table, _) = load_table(c)?;
    let ctx = DiagramContext::new(&problem)?;
    let provider = MultProvider::standard(table, problem.seed, opts.clone());
    let partial = floor_count_partial(&ctx, &provider, c.max_candidates)?;
    let Some(floor) = partial.total.clone() else {
        return Err(CliError::Refused(format!(
            "{} of {} diagrams unresolved",
            partial.entries.len() - partial.resolved,
            partial.entries.len()
        )));
    };
    let dc = run_direct(&problem, Mode::Degenerate, &opts)?;
    let direct = dc.total.to_string();
    // Solutions grouped by the diagram they degenerate to.
    let mut by_diagram: BTreeMap<usize, BigInt> = BTreeMap::new();
    let mut undegenerated = Vec::new();
    for (i, sol) in dc.solutions.iter().enumerate() {
        match degenerate(&ctx, sol, &dc.problem) {
            Ok(d) => match partial.entries.iter().position(|e| e.diagram == d) {
                Some(k) => *by_diagram.entry(k).or_default() += &sol.mult,
                None => undegenerated.push(json!({ "solution": i, "reason": "diagram not enumerated" })),
            },
            Err(e) => undegenerated.push(json!({ "solution": i, "reason": e.to_string() })),
        }
    }
    let per_diagram: Vec<Value> = partial
        .entries
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let fm = e.mult.as_ref().map(|m| m.total.clone()).unwrap_or_default();
            let sm = by_diagram.get(&k).cloned().unwrap_or_default().to_string();
            json!({ "diagram": k, "floor": fm, "solutions": sm, "agree": fm == sm })
        })
        .collect();
    let agree = floor == direct;
    let value = json!({
        "command": "verify-theorem",
        "seed": problem.seed,
        "attempt": dc.attempt,
        "floor": floor,
        "direct": direct,
        "agree": agree,
        "diagrams": partial.entries.len(),
        "solutions": dc.solutions.len(),
        "per_diagram": per_diagram,
        "undegenerated": undegenerated,
    });
    let text = render(c.format, &value, || {
        format!(
            "floor {floor}\ndirect {direct}\n{} ({} diagrams, {} solutions)\n",
            if agree { "agree" } else { "MISMATCH" },
            partial.entries.len(),
            dc.solutions.len()
        )
    })?;
    Ok(Outcome::ok(if agree { EXIT_OK } else { EXIT_MISMATCH }, text))
}

fn verify_cutting(c: &Common) -> Result<Outcome, CliError> {
    let Loaded { problem, opts } = load(c)?;
    let dc = run_direct(&problem, Mode::Degenerate, &opts)?;
    let mut all = true;
    let mut sols = Vec::new();
    let mut lines = String::new();
    for (i, sol) in dc.solutions.iter().enumerate() {
        let floors = floors_of(&sol.map, &dc.problem)?;
        let mut cuts = Vec::new();
        let mut traces = Vec::new();
        for el in &floors.elevators {
            let r = check_cut_identity(&sol.map, &dc.problem, el.edge)?;
            all &= r.identity_holds && r.relation_holds;
            if el.is_one_one() {
                let pieces = cut_elevator(&sol.map, &dc.problem, el.edge, [DegenerateKind::L10, DegenerateKind::L01])?;
                let q = pieces.label;
                for (side, piece) in [("lower", &pieces.lower), ("upper", &pieces.upper)] {
                    let t = trace_free_family(&drop_condition(&piece.problem, q), q, &opts)?;
                    all &= t.standard_only();
                    traces.push(json!({ "edge": el.edge, "side": side, "trace": t }));
                }
            }
            cuts.push(r);
        }
        let g = graphical_contributions(&sol.map, &dc.problem)?;
        let sum: BigInt = g.iter().map(|x| x.value()).sum();
        let holds = sum.magnitude() == sol.mult.magnitude() && g.len() == 1 << floors.elevators.iter().filter(|e| e.is_one_one()).count();
        all &= holds;
        lines += &format!(
            "solution {i}: mult {}, {} elevators, graphical sum {} over {} contributions{}\n",
            sol.mult,
            cuts.len(),
            sum,
            g.len(),
            if holds && cuts.iter().all(|r| r.identity_holds && r.relation_holds) { "" } else { " FAILED" }
        );
        sols.push(json!({
            "solution": i,
            "multiplicity": sol.mult.to_string(),
            "elevators": cuts,
            "graphical": { "contributions": g, "sum": sum.to_string(), "holds": holds },
            "traces": traces,
        }));
    }
    let value = json!({
        "command": "verify-cutting",
        "seed": problem.seed,
        "attempt": dc.attempt,
        "solutions": sols,
        "all_hold": all,
    });
    let text = render(c.format, &value, || lines + if all { "all identities hold\n" } else { "FAILED\n" })?;
    Ok(Outcome::ok(if all { EXIT_OK } else { EXIT_MISMATCH }, text))
}

fn crmult(path: &Path, format: Format) -> Result<Outcome, CliError> {
    let text = read(path)?;
    let star: LocalStar =
        serde_json::from_str(&text).map_err(|source| CliError::Star { path: path.display().to_string(), source })?;
    let m = cr_mult(&star)?;
    let value = json!({ "command": "crmult", "edges": star.edges, "crossratios": star.crossratios, "multiplicity": m });
    let out = render(format, &value, || format!("{m}\n"))?;
    Ok(Outcome::ok(EXIT_OK, out))
}
