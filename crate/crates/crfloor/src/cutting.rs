//! Cutting elevators, degenerated lines, graphical contributions and the
//! directions of one-parameter families.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::crossratios::substitute;
use crate::floordiagrams::LocalVertexProblem;
use crate::maps::{
    detect_floors, free_family, q_str, signed_map_mult, CountOptions, DegenerateKind, Elevator, EmbeddedMap, EndCond,
    FloorDecomposition, FloorError, LineCond, MapError, MapProblem, MapType, Mode, Q,
};
use crate::model::{sample_positions, End, Label};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CutError {
    #[error("edge {0} is not an elevator")]
    NotAnElevator(usize),
    #[error(transparent)]
    Floors(#[from] FloorError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("elevator {edge} carries flows {flows:?}")]
    Flow { edge: usize, flows: [u32; 2] },
}

/// Condition placed on a new end created by a cut.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SideCond {
    Free,
    /// Projection of the opposite vertex.
    Point,
    Line(DegenerateKind),
}

#[derive(Clone, Debug)]
struct CutSpec {
    edge: usize,
    label: Label,
    /// Conditions for the ends at `edges[edge].0` and `edges[edge].1`.
    sides: [SideCond; 2],
}

/// Connected piece after cutting, with its own conditions.
#[derive(Clone, Debug)]
pub struct Piece {
    /// Original vertex indices, increasing.
    pub vertices: Vec<usize>,
    pub map: EmbeddedMap,
    pub problem: MapProblem,
}

impl Piece {
    /// Signed multiplicity with the piece's own row order.
    pub fn signed_mult(&self) -> Result<BigInt, MapError> {
        signed_map_mult(&self.map, &self.problem)
    }
}

fn project(p: &[Q]) -> [Q; 2] {
    [p[0].clone(), p[1].clone()]
}

/// Cut the given edges; returns the pieces and the piece of every vertex.
fn split(map: &EmbeddedMap, problem: &MapProblem, cuts: &[CutSpec]) -> (Vec<Piece>, Vec<usize>) {
    let ty = &map.ty;
    let cut: BTreeSet<usize> = cuts.iter().map(|c| c.edge).collect();
    let mut comp = vec![usize::MAX; ty.nv];
    let mut count = 0;
    for s in 0..ty.nv {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = count;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for (e, &(a, b)) in ty.edges.iter().enumerate() {
                if cut.contains(&e) {
                    continue;
                }
                let w = if a == v { b } else if b == v { a } else { continue };
                if comp[w] == usize::MAX {
                    comp[w] = count;
                    stack.push(w);
                }
            }
        }
        count += 1;
    }
    let pos = map.vertex_positions();
    let full = ty.rooted(0);
    let mut lambda_vertex = BTreeMap::new();
    for (v, crs) in ty.lambda.iter().enumerate() {
        for &i in crs {
            lambda_vertex.insert(i, v);
        }
    }
    let mut pieces = Vec::with_capacity(count);
    for c in 0..count {
        let vertices: Vec<usize> = (0..ty.nv).filter(|&v| comp[v] == c).collect();
        let local = |v: usize| vertices.iter().position(|&u| u == v).expect("vertex in piece");
        let mut edges = Vec::new();
        let mut dirs = Vec::new();
        let mut lengths = Vec::new();
        for (e, &(a, b)) in ty.edges.iter().enumerate() {
            if !cut.contains(&e) && comp[a] == c {
                edges.push((local(a), local(b)));
                dirs.push(map.dirs[e]);
                lengths.push(map.lengths[e].clone());
            }
        }
        let mut ends: Vec<End> = Vec::new();
        let mut end_vertex = Vec::new();
        for (i, e) in problem.ends.iter().enumerate() {
            if comp[ty.end_vertex[i]] == c {
                ends.push(*e);
                end_vertex.push(local(ty.end_vertex[i]));
            }
        }
        let mut conds: Vec<(Label, EndCond)> =
            problem.conds.iter().filter(|(l, _)| ends.iter().any(|e| e.label == *l)).cloned().collect();
        for spec in cuts {
            let (a, b) = ty.edges[spec.edge];
            for (s, (x, y)) in [(a, b), (b, a)].into_iter().enumerate() {
                if comp[x] != c {
                    continue;
                }
                let d = map.dirs[spec.edge];
                let dir = if s == 0 { d } else { d.map(|v| -v) };
                ends.push(End { label: spec.label, dir });
                end_vertex.push(local(x));
                match spec.sides[s] {
                    SideCond::Free => {}
                    SideCond::Point => conds.push((spec.label, EndCond::Fix(project(&pos[y]).to_vec()))),
                    SideCond::Line(kind) => {
                        conds.push((spec.label, EndCond::Line(LineCond::Degenerate { kind, anchor: project(&pos[y]) })))
                    }
                }
            }
        }
        conds.sort_by_key(|(l, _)| *l);
        let mut crossratios = Vec::new();
        let mut lambda = vec![Vec::new(); vertices.len()];
        for (i, cr) in problem.crossratios.iter().enumerate() {
            let Some(&v) = lambda_vertex.get(&i) else { continue };
            if comp[v] != c {
                continue;
            }
            let mut rename = BTreeMap::new();
            for &l in &cr.entries {
                let w = ty.end_vertex[problem.end_index(l).expect("entry")];
                if comp[w] == c {
                    continue;
                }
                let first_cut = full.path_edges(v, w).into_iter().find(|e| cut.contains(e)).expect("path leaves the piece");
                let label = cuts.iter().find(|s| s.edge == first_cut).expect("cut").label;
                rename.insert(l, label);
            }
            lambda[local(v)].push(crossratios.len());
            crossratios.push(substitute(cr, &rename));
        }
        let rays =
            map.rays.iter().filter(|(l, _)| conds.iter().any(|(x, _)| x == *l)).map(|(&l, &r)| (l, r)).collect();
        let piece_ty = MapType { nv: vertices.len(), edges, end_vertex, lambda };
        let root_pos = pos[vertices[0]].clone();
        pieces.push(Piece {
            map: EmbeddedMap { ty: piece_ty, dirs, root: 0, root_pos, lengths, rays },
            problem: MapProblem { m: problem.m, ends, conds, crossratios },
            vertices,
        });
    }
    (pieces, comp)
}

/// Floors, with elevators sorted by `(lower, upper)`.
pub fn floors_of(map: &EmbeddedMap, problem: &MapProblem) -> Result<FloorDecomposition, CutError> {
    let mut f = detect_floors(map, problem)?;
    f.elevators.sort_by_key(|e| (e.lower, e.upper));
    Ok(f)
}

/// Label of the `k`-th elevator's cut ends.
pub fn cut_label(problem: &MapProblem, k: usize) -> Label {
    problem.ends.iter().map(|e| e.label).max().unwrap_or(0) + 1 + k as Label
}

fn side_conds(el: &Elevator, map: &EmbeddedMap, lines: [DegenerateKind; 2]) -> Result<[SideCond; 2], CutError> {
    let (a, _) = map.ty.edges[el.edge];
    let (lower, upper) = match (el.into_lower, el.into_upper) {
        (2, 0) => (SideCond::Point, SideCond::Free),
        (0, 2) => (SideCond::Free, SideCond::Point),
        (1, 1) => (SideCond::Line(lines[0]), SideCond::Line(lines[1])),
        (x, y) => return Err(CutError::Flow { edge: el.edge, flows: [x, y] }),
    };
    Ok(if a == el.lower_vertex { [lower, upper] } else { [upper, lower] })
}

#[derive(Clone, Debug)]
pub struct CutPieces {
    pub elevator: Elevator,
    pub label: Label,
    pub lower: Piece,
    pub upper: Piece,
}

/// Cut one elevator. `lines` are the degenerate kinds for the lower and the
/// upper end of a 1/1 elevator (ignored for 2/0).
pub fn cut_elevator(map: &EmbeddedMap, problem: &MapProblem, edge: usize, lines: [DegenerateKind; 2]) -> Result<CutPieces, CutError> {
    let floors = floors_of(map, problem)?;
    let k = floors.elevators.iter().position(|e| e.edge == edge).ok_or(CutError::NotAnElevator(edge))?;
    let el = floors.elevators[k].clone();
    let label = cut_label(problem, k);
    let spec = CutSpec { edge, label, sides: side_conds(&el, map, lines)? };
    let (mut pieces, comp) = split(map, problem, &[spec]);
    let (lo, hi) = (comp[el.lower_vertex], comp[el.upper_vertex]);
    let upper = pieces.swap_remove(hi.max(lo));
    let lower = pieces.swap_remove(0);
    let (lower, upper) = if lo < hi { (lower, upper) } else { (upper, lower) };
    Ok(CutPieces { elevator: el, label, lower, upper })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CutReport {
    pub edge: usize,
    pub flow: String,
    pub weight: i64,
    pub mult: String,
    /// Signed piece multiplicities by name, e.g. `lower`, `upper:L01`.
    pub factors: BTreeMap<String, String>,
    pub identity_holds: bool,
    /// `-det(M10) + det(M01) + det(M1-1) = 0` per piece (1/1 only).
    pub relation_holds: bool,
}

/// Check the multiplicity-splitting identity for one elevator.
pub fn check_cut_identity(map: &EmbeddedMap, problem: &MapProblem, edge: usize) -> Result<CutReport, CutError> {
    let mult = signed_map_mult(map, problem)?.abs();
    let base = cut_elevator(map, problem, edge, [DegenerateKind::L10, DegenerateKind::L01])?;
    let el = &base.elevator;
    let w = BigInt::from(el.weight);
    let mut factors = BTreeMap::new();
    if !el.is_one_one() {
        let (a, b) = (base.lower.signed_mult()?, base.upper.signed_mult()?);
        factors.insert("lower".to_string(), a.to_string());
        factors.insert("upper".to_string(), b.to_string());
        let identity_holds = mult == (&w * &a * &b).abs();
        return Ok(CutReport {
            edge,
            flow: "2/0".into(),
            weight: el.weight,
            mult: mult.to_string(),
            factors,
            identity_holds,
            relation_holds: true,
        });
    }
    let mut lower = BTreeMap::new();
    let mut upper = BTreeMap::new();
    for kind in DegenerateKind::ALL {
        let cut = cut_elevator(map, problem, edge, [kind, kind])?;
        let (a, b) = (cut.lower.signed_mult()?, cut.upper.signed_mult()?);
        factors.insert(format!("lower:{}", kind.name()), a.to_string());
        factors.insert(format!("upper:{}", kind.name()), b.to_string());
        lower.insert(kind, a);
        upper.insert(kind, b);
    }
    use DegenerateKind::*;
    let relation = |d: &BTreeMap<DegenerateKind, BigInt>| (-&d[&L10] + &d[&L01] + &d[&L1m1]).is_zero();
    let cross = &lower[&L10] * &upper[&L01] - &lower[&L01] * &upper[&L10];
    Ok(CutReport {
        edge,
        flow: "1/1".into(),
        weight: el.weight,
        mult: mult.to_string(),
        factors,
        identity_holds: mult == (&w * cross).abs(),
        relation_holds: relation(&lower) && relation(&upper),
    })
}

/// Decorations of `k` cut 1/1 edges in the listing order: bit `i` set means
/// the horizontal segment sits at the earlier vertex of edge `i`. The first
/// edge is the most significant bit. Returns `(bits, u)`.
pub fn decorations(k: usize) -> Vec<(Vec<bool>, u32)> {
    (0..1usize << k)
        .map(|mask| {
            let bits: Vec<bool> = (0..k).map(|i| mask >> (k - 1 - i) & 1 == 1).collect();
            let u = bits.iter().filter(|&&b| b).count() as u32;
            (bits, u)
        })
        .collect()
}

/// Degenerate lines on the cut 1/1 ends of every floor for one decoration:
/// `below[f]` for ends leaving floor `f` downward, `above[f]` upward, each in
/// edge order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Decoration {
    pub bits: Vec<bool>,
    pub u: u32,
    pub below: Vec<Vec<DegenerateKind>>,
    pub above: Vec<Vec<DegenerateKind>>,
}

impl Decoration {
    pub fn sign(&self) -> i32 {
        if self.u % 2 == 0 {
            1
        } else {
            -1
        }
    }
}

/// All decorations of a floor graph given by `(lower, upper, is_one_one)`
/// edges, in [`decorations`] order.
pub fn decorate(floors: usize, edges: &[(usize, usize, bool)]) -> Vec<Decoration> {
    let one_one: Vec<&(usize, usize, bool)> = edges.iter().filter(|e| e.2).collect();
    decorations(one_one.len())
        .into_iter()
        .map(|(bits, u)| {
            let mut below = vec![Vec::new(); floors];
            let mut above = vec![Vec::new(); floors];
            for (&&(lo, hi, _), &b) in one_one.iter().zip(&bits) {
                let (l, h) = if b { (DegenerateKind::L01, DegenerateKind::L10) } else { (DegenerateKind::L10, DegenerateKind::L01) };
                above[lo].push(l);
                below[hi].push(h);
            }
            Decoration { bits, u, below, above }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GraphicalContribution {
    /// Per 1/1 elevator in floor order: horizontal segment at the earlier vertex.
    pub bits: Vec<bool>,
    pub u: u32,
    /// Signed floor multiplicities in floor order.
    pub floor_mults: Vec<String>,
    pub weight_factor: String,
    pub mult: String,
}

impl GraphicalContribution {
    pub fn sign(&self) -> i32 {
        if self.u % 2 == 0 {
            1
        } else {
            -1
        }
    }

    pub fn value(&self) -> BigInt {
        self.mult.parse().expect("decimal")
    }
}

pub fn graphical_contributions(map: &EmbeddedMap, problem: &MapProblem) -> Result<Vec<GraphicalContribution>, CutError> {
    let floors = floors_of(map, problem)?;
    let one_one: Vec<usize> = (0..floors.elevators.len()).filter(|&k| floors.elevators[k].is_one_one()).collect();
    let weight: BigInt = floors.elevators.iter().map(|e| BigInt::from(e.weight)).product();
    let mut out = Vec::new();
    for (bits, u) in decorations(one_one.len()) {
        let mut cuts = Vec::with_capacity(floors.elevators.len());
        for (k, el) in floors.elevators.iter().enumerate() {
            let lines = match one_one.iter().position(|&j| j == k) {
                Some(i) if bits[i] => [DegenerateKind::L01, DegenerateKind::L10],
                _ => [DegenerateKind::L10, DegenerateKind::L01],
            };
            cuts.push(CutSpec { edge: el.edge, label: cut_label(problem, k), sides: side_conds(el, map, lines)? });
        }
        let (pieces, comp) = split(map, problem, &cuts);
        let mut floor_mults = Vec::with_capacity(floors.floors.len());
        let mut total = if u % 2 == 0 { weight.clone() } else { -weight.clone() };
        for f in &floors.floors {
            let m = pieces[comp[f[0]]].signed_mult()?;
            total *= &m;
            floor_mults.push(m.to_string());
        }
        out.push(GraphicalContribution { bits, u, floor_mults, weight_factor: weight.to_string(), mult: total.to_string() });
    }
    Ok(out)
}

/// `|sum_G mult(G)|`.
pub fn graphical_mult_sum(map: &EmbeddedMap, problem: &MapProblem) -> Result<BigInt, CutError> {
    let sum: BigInt = graphical_contributions(map, problem)?.iter().map(GraphicalContribution::value).sum();
    Ok(sum.abs())
}

/// Plane directions of the multi-line rays.
pub const STANDARD_DIRECTIONS: [[i64; 2]; 3] = [[1, 1], [-1, 0], [0, -1]];

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceReport {
    pub q: Label,
    pub cells: usize,
    pub unbounded_cells: usize,
    /// Primitive directions on unbounded cells.
    pub directions: BTreeSet<[i64; 2]>,
    /// Unbounded cells along which `q` does not move.
    pub stationary: usize,
    pub nonstandard: Vec<[i64; 2]>,
    /// Open parameter intervals of the bounded cells, for reference.
    pub bounded: Vec<[String; 2]>,
}

impl TraceReport {
    pub fn standard_only(&self) -> bool {
        self.nonstandard.is_empty()
    }
}

fn primitive(v: &[BigInt; 2]) -> Option<[i64; 2]> {
    let g = v[0].gcd(&v[1]);
    if g.is_zero() {
        return None;
    }
    let to = |x: &BigInt| -> i64 { (x / &g).try_into().expect("small direction") };
    Some([to(&v[0]), to(&v[1])])
}

/// Directions in which the vertex of `q` escapes along unbounded cells of
/// the one-parameter family cut out by `problem`.
pub fn trace_free_family(problem: &MapProblem, q: Label, opts: &CountOptions) -> Result<TraceReport, CutError> {
    let cells = free_family(problem, Mode::Degenerate, opts, q)?;
    let mut report = TraceReport {
        q,
        cells: cells.len(),
        unbounded_cells: 0,
        directions: BTreeSet::new(),
        stationary: 0,
        nonstandard: vec![],
        bounded: vec![],
    };
    for c in &cells {
        let mut ends = Vec::new();
        if c.upper.is_none() {
            ends.push(c.velocity.clone());
        }
        if c.lower.is_none() {
            ends.push([-c.velocity[0].clone(), -c.velocity[1].clone()]);
        }
        if ends.is_empty() {
            report.bounded.push([
                c.lower.as_ref().map(q_str).unwrap_or_default(),
                c.upper.as_ref().map(q_str).unwrap_or_default(),
            ]);
            continue;
        }
        report.unbounded_cells += 1;
        for v in ends {
            match primitive(&v) {
                None => report.stationary += 1,
                Some(d) => {
                    if !STANDARD_DIRECTIONS.contains(&d) {
                        report.nonstandard.push(d);
                    }
                    report.directions.insert(d);
                }
            }
        }
    }
    Ok(report)
}

/// The problem without the condition on `label`.
pub fn drop_condition(problem: &MapProblem, label: Label) -> MapProblem {
    MapProblem { conds: problem.conds.iter().filter(|(l, _)| *l != label).cloned().collect(), ..problem.clone() }
}

/// Trace the family of a local vertex problem with the line on the cut end
/// `q` removed, at sampled generic positions.
pub fn trace_local(local: &LocalVertexProblem, q: Label, seed: u64, opts: &CountOptions) -> Result<TraceReport, CutError> {
    let pos = sample_positions(&local.spec, seed, 0);
    let problem = MapProblem::from_spec(&local.spec, &pos);
    trace_free_family(&drop_condition(&problem, q), q, opts)
}
