//! Cross-ratio floor diagrams: validity, enumeration, vertex multiplicities
//! and the floor count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Mutex;

use num_bigint::BigInt;
use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::crossratios::{satisfied_vertex, substitute};
use crate::flows::tree_flows_from_leak;
use crate::maps::{
    detect_floors, direct_count_at, direct_count_spec, CountOptions, FloorError, MapError, MapProblem, Mode, Solution,
};
use crate::model::{is_vertical, sample_positions, CondSpec, Dir, End, Label, PositionedConditions, Problem};
use crate::tree::Rooted;

/// Default bound on candidate (tree, end assignment) pairs.
pub const DEFAULT_MAX_CANDIDATES: u128 = 20_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiagramError {
    #[error("floor diagrams need m = 3")]
    Dimension,
    #[error("floor diagrams need degenerated cross-ratios; cross-ratio {0} carries a length")]
    MetricCrossRatio(usize),
    #[error("cross-ratio {index}: entry {label} is neither contracted nor vertical")]
    CrossRatioEntry { index: usize, label: Label },
    #[error("{candidates} candidate diagrams exceed the budget of {budget}")]
    Budget { candidates: u128, budget: u128 },
    #[error("problem is invalid: {0}")]
    Model(String),
}

/// Reason a candidate is not a cross-ratio floor diagram.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Invalid {
    #[error("vertex {0} is not balanced in the plane")]
    PlaneBalance(usize),
    #[error("edge {edge} would have weight {weight}")]
    Weight { edge: usize, weight: i64 },
    #[error("cross-ratio {0} is satisfied at no vertex")]
    CrossRatio(usize),
    #[error("vertex {vertex} has A = {value}")]
    NegativeLeak { vertex: usize, value: i64 },
    #[error("no condition flow: {0}")]
    Flow(String),
    #[error("floor decomposition failed: {0}")]
    Floors(String),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct DiagramVertex {
    pub point: Label,
    /// Non-contracted ends on this floor.
    pub ends: Vec<Label>,
    pub size: usize,
    pub ends_111: Vec<Label>,
    pub alpha: Vec<Label>,
    pub beta: Vec<Label>,
    pub alpha_p: Vec<Label>,
    pub beta_p: Vec<Label>,
    pub alpha_l: Vec<Label>,
    pub beta_l: Vec<Label>,
    /// Indices of the cross-ratios satisfied here.
    pub lambda: Vec<usize>,
    pub a_value: i64,
    pub leak: u32,
    /// Size zero with attached edges: the leak is forced to 0.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct DiagramEdge {
    pub lower: usize,
    pub upper: usize,
    pub weight: i64,
    pub label: Label,
    pub into_lower: u32,
    pub into_upper: u32,
}

impl DiagramEdge {
    pub fn flow_type(&self) -> &'static str {
        if self.into_lower == 1 {
            "1/1"
        } else {
            "2/0"
        }
    }

    pub fn into(&self, v: usize) -> u32 {
        if v == self.lower {
            self.into_lower
        } else {
            self.into_upper
        }
    }

    pub fn other(&self, v: usize) -> usize {
        if v == self.lower {
            self.upper
        } else {
            self.lower
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CrossRatioFloorDiagram {
    pub vertices: Vec<DiagramVertex>,
    /// Sorted by `(lower, upper)`.
    pub edges: Vec<DiagramEdge>,
}

impl CrossRatioFloorDiagram {
    pub fn edges_at(&self, v: usize) -> impl Iterator<Item = &DiagramEdge> {
        self.edges.iter().filter(move |e| e.lower == v || e.upper == v)
    }

    pub fn valence(&self, v: usize) -> usize {
        self.edges_at(v).count()
    }

    pub fn edge_weight_product(&self) -> BigInt {
        self.edges.iter().map(|e| BigInt::from(e.weight)).product()
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph diagram {\n  rankdir=LR;\n");
        for (i, v) in self.vertices.iter().enumerate() {
            let _ = writeln!(s, "  v{} [label=\"v{} s={} leak={}\"];", i + 1, i + 1, v.size, v.leak);
        }
        for e in &self.edges {
            let _ = writeln!(
                s,
                "  v{} -- v{} [label=\"{} w={} {}\"];",
                e.lower + 1,
                e.upper + 1,
                e.label,
                e.weight,
                e.flow_type()
            );
        }
        s.push_str("}\n");
        s
    }
}

/// Problem data needed for diagrams.
#[derive(Clone, Debug)]
pub struct DiagramContext {
    pub problem: Problem,
    pub n: usize,
    /// Non-contracted ends in label order.
    pub ends: Vec<End>,
    pub eta: BTreeSet<Label>,
    pub kappa: BTreeSet<Label>,
    /// First fresh label minus one: `n + #Delta`.
    pub label_base: Label,
}

impl DiagramContext {
    pub fn new(problem: &Problem) -> Result<Self, DiagramError> {
        problem.validate().map_err(|e| DiagramError::Model(e.to_string()))?;
        if problem.m() != 3 {
            return Err(DiagramError::Dimension);
        }
        for (index, cr) in problem.crossratios.iter().enumerate() {
            if !cr.is_degenerate() {
                return Err(DiagramError::MetricCrossRatio(index));
            }
            for &label in &cr.entries {
                let e = problem.degree.end(label).expect("validated");
                if !(e.is_contracted() || is_vertical(&e.dir, 3)) {
                    return Err(DiagramError::CrossRatioEntry { index, label });
                }
            }
        }
        let ends: Vec<End> = problem.degree.non_contracted().copied().collect();
        Ok(DiagramContext {
            problem: problem.clone(),
            n: problem.n_points,
            label_base: (problem.n_points + ends.len()) as Label,
            ends,
            eta: problem.eta(),
            kappa: problem.kappa(),
        })
    }

    fn end(&self, l: Label) -> &End {
        self.ends.iter().find(|e| e.label == l).expect("non-contracted label")
    }

    /// Check a tree on `0..n` with an end assignment (parallel to `ends`).
    pub fn build(&self, tree: &[(usize, usize)], assign: &[usize]) -> Result<CrossRatioFloorDiagram, Invalid> {
        let n = self.n;
        let mut per: Vec<Vec<Label>> = vec![Vec::new(); n];
        let mut plane = vec![[0usize; 3]; n];
        let mut zsum = vec![0i64; n];
        for (e, &v) in self.ends.iter().zip(assign) {
            per[v].push(e.label);
            zsum[v] += e.dir[2];
            match e.dir {
                [1, 1, 1] => plane[v][0] += 1,
                [-1, 0, 0] => plane[v][1] += 1,
                [0, -1, 0] => plane[v][2] += 1,
                _ => {}
            }
        }
        for (v, c) in plane.iter().enumerate() {
            if c[0] != c[1] || c[0] != c[2] {
                return Err(Invalid::PlaneBalance(v));
            }
        }
        let mut edges: Vec<(usize, usize)> = tree.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        edges.sort_unstable();
        let rooted = Rooted::new(n, &edges, 0);
        // Weight: the z-flux leaving the side of the lower vertex upward.
        let mut weights = Vec::with_capacity(edges.len());
        for (i, &(a, _)) in edges.iter().enumerate() {
            let side = side_of(&rooted, i, a);
            let w: i64 = -(0..n).filter(|&v| side[v]).map(|v| zsum[v]).sum::<i64>();
            if w <= 0 {
                return Err(Invalid::Weight { edge: i, weight: w });
            }
            weights.push(w);
        }
        let endpoint = |l: Label| -> Option<usize> {
            if (l as usize) <= n {
                Some(l as usize - 1)
            } else {
                self.ends.iter().position(|e| e.label == l).map(|i| assign[i])
            }
        };
        let mut lambda = vec![Vec::new(); n];
        for (i, cr) in self.problem.crossratios.iter().enumerate() {
            match satisfied_vertex(&rooted, cr, &endpoint).ok().flatten() {
                Some(v) => lambda[v].push(i),
                None => return Err(Invalid::CrossRatio(i)),
            }
        }
        let mut vertices = Vec::with_capacity(n);
        let mut leak = Vec::with_capacity(n);
        for v in 0..n {
            let ends = per[v].clone();
            let pick = |f: &dyn Fn(&End) -> bool| -> Vec<Label> { ends.iter().copied().filter(|&l| f(self.end(l))).collect() };
            let ends_111 = pick(&|e| e.dir == [1, 1, 1]);
            let alpha = pick(&|e| e.dir[0] == 0 && e.dir[1] == 0 && e.dir[2] < 0);
            let beta = pick(&|e| e.dir[0] == 0 && e.dir[1] == 0 && e.dir[2] > 0);
            let sub = |set: &[Label], c: &BTreeSet<Label>| -> Vec<Label> { set.iter().copied().filter(|l| c.contains(l)).collect() };
            let (alpha_p, beta_p) = (sub(&alpha, &self.eta), sub(&beta, &self.eta));
            let (alpha_l, beta_l) = (sub(&alpha, &self.kappa), sub(&beta, &self.kappa));
            let val = edges.iter().filter(|&&(a, b)| a == v || b == v).count() as i64;
            let a_value = 3 * ends_111.len() as i64 + alpha.len() as i64 + beta.len() as i64 + val
                - 2
                - lambda[v].len() as i64
                - 2 * (alpha_p.len() + beta_p.len()) as i64
                - (alpha_l.len() + beta_l.len()) as i64;
            let size = ends_111.len();
            let l = if size == 0 {
                0
            } else if a_value < 0 {
                return Err(Invalid::NegativeLeak { vertex: v, value: a_value });
            } else {
                a_value as u32
            };
            leak.push(l);
            vertices.push(DiagramVertex {
                point: v as Label + 1,
                ends,
                size,
                ends_111,
                alpha,
                beta,
                alpha_p,
                beta_p,
                alpha_l,
                beta_l,
                lambda: lambda[v].clone(),
                a_value,
                leak: l,
                flagged: size == 0 && val > 0,
            });
        }
        let fg = tree_flows_from_leak(n, &edges, &leak, 3).map_err(|e| Invalid::Flow(e.to_string()))?;
        let edges = edges
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| DiagramEdge {
                lower: a,
                upper: b,
                weight: weights[i],
                label: self.label_base + 1 + i as Label,
                into_lower: fg.into[i][0],
                into_upper: fg.into[i][1],
            })
            .collect();
        Ok(CrossRatioFloorDiagram { vertices, edges })
    }

    /// Number of candidates `enumerate_diagrams` would inspect.
    pub fn candidate_count(&self) -> u128 {
        let n = self.n as u128;
        let trees = if self.n <= 2 { 1 } else { n.pow(self.n as u32 - 2) };
        let groups = self.plane_groups();
        let d = groups[0].len();
        let balanced: u128 = compositions(d, self.n).iter().map(|s| multinomial(d, s).pow(3)).sum();
        let vertical = self.ends.len() - 3 * d;
        trees * balanced * n.pow(vertical as u32)
    }

    fn plane_groups(&self) -> [Vec<usize>; 3] {
        let idx = |dir: Dir| -> Vec<usize> { (0..self.ends.len()).filter(|&i| self.ends[i].dir == dir).collect() };
        [idx([1, 1, 1]), idx([-1, 0, 0]), idx([0, -1, 0])]
    }
}

fn side_of(r: &Rooted, e: usize, from: usize) -> Vec<bool> {
    let mut seen = vec![false; r.parent.len()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(v) = stack.pop() {
        for &(ei, w) in &r.adj[v] {
            if ei != e && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

fn compositions(d: usize, n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![d]];
    }
    let mut out = Vec::new();
    for first in 0..=d {
        for mut rest in compositions(d - first, n - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn multinomial(d: usize, parts: &[usize]) -> u128 {
    let fact = |k: usize| (1..=k as u128).product::<u128>();
    parts.iter().fold(fact(d), |acc, &p| acc / fact(p))
}

/// All labeled trees on `0..n`, decoded from Prüfer sequences.
pub fn labeled_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    match n {
        0 | 1 => return vec![vec![]],
        2 => return vec![vec![(0, 1)]],
        _ => {}
    }
    let mut out = Vec::new();
    let mut seq = vec![0usize; n - 2];
    loop {
        out.push(prufer_decode(&seq, n));
        let mut i = n - 2;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            seq[i] += 1;
            if seq[i] < n {
                break;
            }
            seq[i] = 0;
        }
    }
}

fn prufer_decode(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &s in seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).expect("a leaf exists");
        edges.push((leaf.min(s), leaf.max(s)));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges.sort_unstable();
    edges
}

/// Every assignment of `items` to `0..n`, grouped by the count vector.
fn assignments_by_counts(items: usize, n: usize) -> BTreeMap<Vec<usize>, Vec<Vec<usize>>> {
    let mut out: BTreeMap<Vec<usize>, Vec<Vec<usize>>> = BTreeMap::new();
    let total = n.pow(items as u32);
    for code in 0..total {
        let mut c = code;
        let mut a = Vec::with_capacity(items);
        let mut counts = vec![0; n];
        for _ in 0..items {
            a.push(c % n);
            counts[c % n] += 1;
            c /= n;
        }
        out.entry(counts).or_default().push(a);
    }
    out
}

/// All cross-ratio floor diagrams for the problem, in canonical order.
pub fn enumerate_diagrams(ctx: &DiagramContext, max_candidates: u128) -> Result<Vec<CrossRatioFloorDiagram>, DiagramError> {
    let candidates = ctx.candidate_count();
    if candidates > max_candidates {
        return Err(DiagramError::Budget { candidates, budget: max_candidates });
    }
    let n = ctx.n;
    let groups = ctx.plane_groups();
    let d = groups[0].len();
    let by_counts = assignments_by_counts(d, n);
    let in_group: BTreeSet<usize> = groups.iter().flatten().copied().collect();
    let vertical: Vec<usize> = (0..ctx.ends.len()).filter(|i| !in_group.contains(i)).collect();
    let mut out = Vec::new();
    let mut assign = vec![0usize; ctx.ends.len()];
    for tree in labeled_trees(n) {
        for choices in by_counts.values() {
            for a0 in choices {
                for a1 in choices {
                    for a2 in choices {
                        for (g, a) in groups.iter().zip([a0, a1, a2]) {
                            for (k, &i) in g.iter().enumerate() {
                                assign[i] = a[k];
                            }
                        }
                        for code in 0..n.pow(vertical.len() as u32) {
                            let mut c = code;
                            for &i in &vertical {
                                assign[i] = c % n;
                                c /= n;
                            }
                            if let Ok(diagram) = ctx.build(&tree, &assign) {
                                out.push(diagram);
                            }
                        }
                    }
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

// ---------------------------------------------------------------------------
// Vertex multiplicities.

/// Counting problem of one diagram vertex, keeping global labels; each
/// adjacent edge becomes a vertical end labeled by the edge label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LocalVertexProblem {
    pub vertex: usize,
    pub size: usize,
    /// Multiplicity sequences of the local degree.
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    pub spec: CondSpec,
    /// `(edge label, flow into this vertex)` per adjacent edge.
    pub edge_ends: Vec<(Label, u32)>,
}

fn weight_sequence(weights: impl Iterator<Item = i64>) -> Vec<u32> {
    let mut seq: Vec<u32> = Vec::new();
    for w in weights {
        let w = w as usize;
        if seq.len() < w {
            seq.resize(w, 0);
        }
        seq[w - 1] += 1;
    }
    seq
}

pub fn vertex_local_problem(ctx: &DiagramContext, diagram: &CrossRatioFloorDiagram, v: usize) -> LocalVertexProblem {
    let vx = &diagram.vertices[v];
    let mut ends: Vec<End> = vec![End { label: vx.point, dir: [0, 0, 0] }];
    ends.extend(vx.ends.iter().map(|&l| *ctx.end(l)));
    let mut tangency_p: BTreeSet<Label> = vx.alpha_p.iter().chain(&vx.beta_p).copied().collect();
    let mut tangency_l: BTreeMap<Label, u64> =
        vx.alpha_l.iter().chain(&vx.beta_l).map(|&l| (l, ctx.problem.line_weight(l))).collect();
    let mut edge_ends = Vec::new();
    for e in diagram.edges_at(v) {
        let up = e.lower == v;
        ends.push(End { label: e.label, dir: [0, 0, if up { e.weight } else { -e.weight }] });
        let into = e.into(v);
        match into {
            2 => {
                tangency_p.insert(e.label);
            }
            1 => {
                tangency_l.insert(e.label, 1);
            }
            _ => {}
        }
        edge_ends.push((e.label, into));
    }
    ends.sort();
    // Entries beyond an adjacent edge are replaced by that edge's label.
    let mut edges: Vec<(usize, usize)> = diagram.edges.iter().map(|e| (e.lower, e.upper)).collect();
    edges.sort_unstable();
    let rooted = Rooted::new(diagram.vertices.len(), &edges, v);
    let mut owner: BTreeMap<Label, usize> = BTreeMap::new();
    for (u, w) in diagram.vertices.iter().enumerate() {
        owner.insert(w.point, u);
        for &l in &w.ends {
            owner.insert(l, u);
        }
    }
    let crossratios = vx
        .lambda
        .iter()
        .map(|&i| {
            let cr = &ctx.problem.crossratios[i];
            let map: BTreeMap<Label, Label> = cr
                .entries
                .iter()
                .filter_map(|&l| {
                    let e = rooted.toward(v, owner[&l])?;
                    Some((l, diagram.edges[e].label))
                })
                .collect();
            substitute(cr, &map)
        })
        .collect();
    let alpha = weight_sequence(ends.iter().filter(|e| e.dir[..2] == [0, 0] && e.dir[2] < 0).map(End::weight));
    let beta = weight_sequence(ends.iter().filter(|e| e.dir[..2] == [0, 0] && e.dir[2] > 0).map(End::weight));
    let spec = CondSpec { m: 3, ends, points: vec![vx.point], tangency_p, tangency_l, crossratios };
    LocalVertexProblem { vertex: v, size: vx.size, alpha, beta, spec, edge_ends }
}

/// Canonical serialization used as the multiplicity-table key.
pub fn local_key(spec: &CondSpec) -> String {
    let mut s = format!("m{}|ends:", spec.m);
    let ends: Vec<String> = spec.ends.iter().map(|e| format!("{}:{},{},{}", e.label, e.dir[0], e.dir[1], e.dir[2])).collect();
    s.push_str(&ends.join(";"));
    let join = |it: Vec<String>| it.join(",");
    let _ = write!(s, "|pt:{}", join(spec.points.iter().map(|l| l.to_string()).collect()));
    let _ = write!(s, "|P:{}", join(spec.tangency_p.iter().map(|l| l.to_string()).collect()));
    let _ = write!(s, "|L:{}", join(spec.tangency_l.iter().map(|(l, w)| format!("{l}@{w}")).collect()));
    let mut crs: Vec<String> = spec.crossratios.iter().map(|c| c.to_string()).collect();
    crs.sort();
    let _ = write!(s, "|cr:{}", crs.join(";"));
    s
}

impl LocalVertexProblem {
    pub fn key(&self) -> String {
        local_key(&self.spec)
    }

    /// Total number of ends, contracted ones included.
    pub fn total_ends(&self) -> usize {
        self.spec.ends.len()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReduceError {
    #[error("floor of size zero has no plane curve")]
    SizeZero,
    #[error("end {0} has no plane image")]
    Unsupported(Label),
    #[error("plane problem has excess {0}")]
    Dimension(i64),
}

/// Plane version of a local problem: vertical ends become contracted,
/// `P` becomes a point and `L` stays a multi line.
pub fn reduce_to_plane(local: &LocalVertexProblem) -> Result<CondSpec, ReduceError> {
    if local.size == 0 {
        return Err(ReduceError::SizeZero);
    }
    let mut ends = Vec::with_capacity(local.spec.ends.len());
    for e in &local.spec.ends {
        let dir = match e.dir {
            [0, 0, _] => [0, 0, 0],
            [1, 1, 1] => [1, 1, 0],
            [-1, 0, 0] => [-1, 0, 0],
            [0, -1, 0] => [0, -1, 0],
            _ => return Err(ReduceError::Unsupported(e.label)),
        };
        ends.push(End { label: e.label, dir });
    }
    let mut points = local.spec.points.clone();
    points.extend(local.spec.tangency_p.iter().copied());
    let spec = CondSpec {
        m: 2,
        ends,
        points,
        tangency_p: BTreeSet::new(),
        tangency_l: local.spec.tangency_l.clone(),
        crossratios: local.spec.crossratios.clone(),
    };
    // A line through a marked point is one condition in the plane as well.
    let excess = spec.ends.len() as i64 - 1 - 2 * spec.points.len() as i64 - spec.tangency_l.len() as i64 - spec.crossratios.len() as i64;
    match excess {
        0 => Ok(spec),
        x => Err(ReduceError::Dimension(x)),
    }
}

/// Project positions of the local problem onto the plane problem.
pub fn plane_positions(local: &LocalVertexProblem, pos: &PositionedConditions) -> PositionedConditions {
    let mut points = BTreeMap::new();
    for (&l, p) in &pos.points {
        points.insert(l, p[..2].to_vec());
    }
    for &l in &local.spec.tangency_p {
        points.insert(l, pos.p_positions[&l].clone());
    }
    PositionedConditions { m: 2, points, p_positions: BTreeMap::new(), lines: pos.lines.clone(), ..pos.clone() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Provenance {
    #[serde(rename = "table")]
    Table,
    #[serde(rename = "brute3D")]
    Brute3d,
    #[serde(rename = "plane2D")]
    Plane2d,
}

impl Provenance {
    pub fn parse(s: &str) -> Option<Provenance> {
        match s {
            "table" => Some(Provenance::Table),
            "brute3D" | "brute3d" => Some(Provenance::Brute3d),
            "plane2D" | "plane2d" => Some(Provenance::Plane2d),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Provenance::Table => "table",
            Provenance::Brute3d => "brute3D",
            Provenance::Plane2d => "plane2D",
        }
    }
}

/// Multiplicity table: `key<TAB>value` lines.
#[derive(Clone, Debug, Default)]
pub struct MultTable {
    pub entries: BTreeMap<String, BigInt>,
}

impl MultTable {
    /// Parsed table and warnings for skipped lines.
    pub fn parse(text: &str) -> (MultTable, Vec<String>) {
        let mut entries = BTreeMap::new();
        let mut warnings = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('\t') {
                Some((k, v)) if k.starts_with('m') => match v.trim().parse::<BigInt>() {
                    Ok(x) => {
                        entries.insert(k.to_string(), x);
                    }
                    Err(_) => warnings.push(format!("line {}: value {v:?} is not an integer", i + 1)),
                },
                _ => warnings.push(format!("line {}: not a key<TAB>value entry", i + 1)),
            }
        }
        (MultTable { entries }, warnings)
    }

    pub fn load(path: &Path) -> std::io::Result<(MultTable, Vec<String>)> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VertexMult {
    pub vertex: usize,
    pub key: String,
    pub value: String,
    pub provenance: Provenance,
}

/// Ordered chain of multiplicity strategies with a shared memo.
#[derive(Debug)]
pub struct MultProvider {
    pub strategies: Vec<Provenance>,
    pub table: MultTable,
    pub seed: u64,
    pub opts: CountOptions,
    memo: Mutex<BTreeMap<(String, Provenance), Option<BigInt>>>,
}

impl MultProvider {
    pub fn new(strategies: Vec<Provenance>, table: MultTable, seed: u64, opts: CountOptions) -> Self {
        MultProvider { strategies, table, seed, opts, memo: Mutex::new(BTreeMap::new()) }
    }

    /// Table, then 3D brute force, then the plane reduction.
    pub fn standard(table: MultTable, seed: u64, opts: CountOptions) -> Self {
        Self::new(vec![Provenance::Table, Provenance::Brute3d, Provenance::Plane2d], table, seed, opts)
    }

    /// Keys that were looked up in the table.
    pub fn used_keys(&self) -> BTreeSet<String> {
        let memo = self.memo.lock().expect("memo lock");
        memo.keys().filter(|(_, p)| *p == Provenance::Table).map(|(k, _)| k.clone()).collect()
    }

    pub fn resolve(&self, local: &LocalVertexProblem) -> Option<(BigInt, Provenance)> {
        let key = local.key();
        for &p in &self.strategies {
            let memo_key = (key.clone(), p);
            if let Some(hit) = self.memo.lock().expect("memo lock").get(&memo_key) {
                if let Some(v) = hit {
                    return Some((v.clone(), p));
                }
                continue;
            }
            let value = self.compute(local, &key, p);
            self.memo.lock().expect("memo lock").insert(memo_key, value.clone());
            if let Some(v) = value {
                return Some((v, p));
            }
        }
        None
    }

    fn compute(&self, local: &LocalVertexProblem, key: &str, p: Provenance) -> Option<BigInt> {
        match p {
            Provenance::Table => self.table.entries.get(key).cloned(),
            Provenance::Brute3d => brute_3d(local, self.seed, &self.opts).ok(),
            Provenance::Plane2d => plane_2d(local, self.seed, &self.opts).ok().flatten(),
        }
    }
}

/// Local count by brute force in R^3.
pub fn brute_3d(local: &LocalVertexProblem, seed: u64, opts: &CountOptions) -> Result<BigInt, MapError> {
    Ok(direct_count_spec(&local.spec, seed, Mode::Degenerate, opts)?.total)
}

/// Local count via the plane reduction; `None` if the reduction does not apply.
pub fn plane_2d(local: &LocalVertexProblem, seed: u64, opts: &CountOptions) -> Result<Option<BigInt>, MapError> {
    let Ok(plane) = reduce_to_plane(local) else {
        return Ok(None);
    };
    for attempt in 0..opts.max_attempts {
        let pos = sample_positions(&local.spec, seed, attempt);
        let problem = MapProblem::from_spec(&plane, &plane_positions(local, &pos));
        if let Ok(c) = direct_count_at(&problem, Mode::Degenerate, opts)? {
            return Ok(Some(c.total));
        }
    }
    Err(MapError::Genericity(opts.max_attempts))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DiagramMult {
    pub edge_factor: String,
    pub vertices: Vec<VertexMult>,
    pub total: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize)]
#[error("no provider resolved the multiplicity of vertices {vertices:?}")]
pub struct Unresolved {
    pub vertices: Vec<usize>,
    pub keys: Vec<String>,
}

pub fn diagram_mult(ctx: &DiagramContext, diagram: &CrossRatioFloorDiagram, provider: &MultProvider) -> Result<(BigInt, DiagramMult), Unresolved> {
    let edge_factor = diagram.edge_weight_product();
    let mut total = edge_factor.clone();
    let mut vertices = Vec::new();
    let mut missing = Unresolved { vertices: vec![], keys: vec![] };
    for v in 0..diagram.vertices.len() {
        let local = vertex_local_problem(ctx, diagram, v);
        let key = local.key();
        match provider.resolve(&local) {
            Some((value, provenance)) => {
                total *= &value;
                vertices.push(VertexMult { vertex: v, key, value: value.to_string(), provenance });
            }
            None => {
                missing.vertices.push(v);
                missing.keys.push(key);
            }
        }
    }
    if !missing.vertices.is_empty() {
        return Err(missing);
    }
    Ok((total.clone(), DiagramMult { edge_factor: edge_factor.to_string(), vertices, total: total.to_string() }))
}

#[derive(Clone, Debug, Serialize)]
pub struct FloorCount {
    pub total: String,
    pub diagrams: Vec<(CrossRatioFloorDiagram, DiagramMult)>,
}

impl FloorCount {
    pub fn total(&self) -> BigInt {
        self.total.parse().expect("decimal")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CountError {
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Unresolved(#[from] Unresolved),
}

/// `N^floor`: sum of diagram multiplicities.
pub fn floor_count(ctx: &DiagramContext, provider: &MultProvider, max_candidates: u128) -> Result<FloorCount, CountError> {
    let partial = floor_count_partial(ctx, provider, max_candidates)?;
    let mut total = BigInt::zero();
    let mut out = Vec::with_capacity(partial.entries.len());
    for e in partial.entries {
        match e.mult {
            Ok(m) => {
                total += m.total.parse::<BigInt>().expect("decimal");
                out.push((e.diagram, m));
            }
            Err(u) => return Err(u.into()),
        }
    }
    Ok(FloorCount { total: total.to_string(), diagrams: out })
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagramEntry {
    pub diagram: CrossRatioFloorDiagram,
    pub mult: Result<DiagramMult, Unresolved>,
}

/// Count keeping diagrams whose vertices could not all be resolved.
#[derive(Clone, Debug, Serialize)]
pub struct PartialCount {
    /// Present iff every diagram was resolved.
    pub total: Option<String>,
    pub resolved: usize,
    pub entries: Vec<DiagramEntry>,
}

impl PartialCount {
    pub fn unresolved_keys(&self) -> BTreeSet<String> {
        self.entries.iter().filter_map(|e| e.mult.as_ref().err()).flat_map(|u| u.keys.iter().cloned()).collect()
    }
}

pub fn floor_count_partial(ctx: &DiagramContext, provider: &MultProvider, max_candidates: u128) -> Result<PartialCount, DiagramError> {
    let diagrams = enumerate_diagrams(ctx, max_candidates)?;
    let entries: Vec<DiagramEntry> = diagrams
        .into_par_iter()
        .map(|d| {
            let mult = diagram_mult(ctx, &d, provider).map(|(_, m)| m);
            DiagramEntry { diagram: d, mult }
        })
        .collect();
    let resolved = entries.iter().filter(|e| e.mult.is_ok()).count();
    let total = (resolved == entries.len()).then(|| {
        entries.iter().map(|e| e.mult.as_ref().expect("resolved").total.parse::<BigInt>().expect("decimal")).sum::<BigInt>().to_string()
    });
    Ok(PartialCount { total, resolved, entries })
}

/// Diagram a floor-decomposed solution degenerates to.
pub fn degenerate(ctx: &DiagramContext, sol: &Solution, problem: &MapProblem) -> Result<CrossRatioFloorDiagram, Invalid> {
    let floors = detect_floors(&sol.map, problem).map_err(|e: FloorError| Invalid::Floors(e.to_string()))?;
    let tree: Vec<(usize, usize)> = floors.elevators.iter().map(|e| (e.lower, e.upper)).collect();
    let assign: Vec<usize> = ctx
        .ends
        .iter()
        .map(|e| floors.floor_of[sol.map.ty.end_vertex[problem.end_index(e.label).expect("end")]])
        .collect();
    let diagram = ctx.build(&tree, &assign)?;
    for el in &floors.elevators {
        let de = diagram.edges.iter().find(|d| d.lower == el.lower && d.upper == el.upper).expect("edge");
        if (de.into_lower, de.into_upper) != (el.into_lower, el.into_upper) || de.weight != el.weight {
            return Err(Invalid::Flow(format!("elevator {} disagrees with the diagram edge", el.edge)));
        }
    }
    let mut lambda = vec![BTreeSet::new(); ctx.n];
    for (v, crs) in sol.map.ty.lambda.iter().enumerate() {
        lambda[floors.floor_of[v]].extend(crs.iter().copied());
    }
    for (v, vx) in diagram.vertices.iter().enumerate() {
        if vx.lambda.iter().copied().collect::<BTreeSet<_>>() != lambda[v] {
            return Err(Invalid::CrossRatio(*lambda[v].iter().next().unwrap_or(&0)));
        }
    }
    Ok(diagram)
}

/// Positioned global problem for the given attempt.
pub fn positioned(problem: &Problem, seed: u64, attempt: u32) -> MapProblem {
    let spec = problem.cond_spec();
    MapProblem::from_spec(&spec, &sample_positions(&spec, seed, attempt))
}
