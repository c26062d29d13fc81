//! Tropical stable maps: type enumeration, exact embeddings, ev-matrices,
//! brute-force counts and floor decompositions.

use std::collections::{BTreeMap, VecDeque};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::crossratios::{self, CrError};
use crate::flows::{spread_flows, FlowGraph, FlowTree};
use crate::linalg;
use crate::model::{sample_positions, CondSpec, CrossRatio, Dir, End, Label, PositionedConditions, Rat, DENOM, RAY_FUNCTIONALS};
use crate::tree::Rooted;

pub type Q = BigRational;

pub fn q_from_rat(r: &Rat) -> Q {
    Q::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

pub fn q_int(v: i64) -> Q {
    Q::from_integer(BigInt::from(v))
}

pub fn q_str(q: &Q) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Default bound on the total number of ends for brute force.
pub const DEFAULT_MAX_ENDS: usize = 10;
/// Requests above this are always refused.
pub const HARD_MAX_ENDS: usize = 12;
/// Resampling attempts before giving up on generic positions.
pub const MAX_ATTEMPTS: u32 = 16;

/// Sign of `t` for a marked point `V + t * ray` on each multi-line ray.
const RAY_PARAMETER: [[i64; 2]; 3] = [[1, 0], [-1, 0], [0, -1]];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MapError {
    #[error("{ends} ends exceed the feasibility bound of {bound}; supply a multiplicity table instead")]
    TooManyEnds { ends: usize, bound: usize },
    #[error("the condition system is not square (excess {0})")]
    NotSquare(i64),
    #[error("no generic position found after {0} attempts")]
    Genericity(u32),
    #[error("unknown end label {0}")]
    UnknownLabel(Label),
    #[error("lengths mode needs every cross-ratio to carry a pairing and a length")]
    NeedsLengths,
    #[error(transparent)]
    CrossRatio(#[from] CrError),
}

/// Positions sit on a wall between cells; resample.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("non-generic position: {0}")]
pub struct GenericityFault(pub String);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DegenerateKind {
    /// Vertical line `x = a`.
    L10,
    /// Horizontal line `y = b`.
    L01,
    /// Diagonal line `x - y = a - b`.
    L1m1,
}

impl DegenerateKind {
    pub const ALL: [DegenerateKind; 3] = [DegenerateKind::L10, DegenerateKind::L01, DegenerateKind::L1m1];

    pub fn functional(self) -> [i64; 2] {
        match self {
            DegenerateKind::L10 => [1, 0],
            DegenerateKind::L01 => [0, 1],
            DegenerateKind::L1m1 => [1, -1],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DegenerateKind::L10 => "L10",
            DegenerateKind::L01 => "L01",
            DegenerateKind::L1m1 => "L1-1",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LineCond {
    Multi { vertex: [Q; 2], weight: u64 },
    Degenerate { kind: DegenerateKind, anchor: [Q; 2] },
}

/// Condition on the vertex of one end.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EndCond {
    /// The first `k` coordinates of the vertex are fixed.
    Fix(Vec<Q>),
    /// The first two coordinates lie on a line.
    Line(LineCond),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Degenerated cross-ratios are fat vertices.
    Degenerate,
    /// Trivalent types only; every cross-ratio is a length row.
    Lengths,
}

/// Ends, positioned conditions and cross-ratios of a counting problem.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapProblem {
    pub m: usize,
    pub ends: Vec<End>,
    /// Conditions in row order.
    pub conds: Vec<(Label, EndCond)>,
    pub crossratios: Vec<CrossRatio>,
}

impl MapProblem {
    /// Conditions in label order.
    pub fn from_spec(spec: &CondSpec, pos: &PositionedConditions) -> MapProblem {
        let mut conds = Vec::new();
        for &l in &spec.points {
            conds.push((l, EndCond::Fix(pos.points[&l].iter().map(q_from_rat).collect())));
        }
        for &l in &spec.tangency_p {
            conds.push((l, EndCond::Fix(pos.p_positions[&l].iter().map(q_from_rat).collect())));
        }
        for (&l, line) in &pos.lines {
            let vertex = [q_from_rat(&line.vertex[0]), q_from_rat(&line.vertex[1])];
            conds.push((l, EndCond::Line(LineCond::Multi { vertex, weight: line.end_weight })));
        }
        conds.sort_by_key(|(l, _)| *l);
        MapProblem { m: spec.m, ends: spec.ends.clone(), conds, crossratios: spec.crossratios.clone() }
    }

    pub fn end_index(&self, l: Label) -> Option<usize> {
        self.ends.iter().position(|e| e.label == l)
    }

    pub fn cond(&self, l: Label) -> Option<&EndCond> {
        self.conds.iter().find(|(x, _)| *x == l).map(|(_, c)| c)
    }

    pub fn rows(&self) -> usize {
        let cond_rows: usize = self
            .conds
            .iter()
            .map(|(_, c)| match c {
                EndCond::Fix(v) => v.len(),
                EndCond::Line(_) => 1,
            })
            .sum();
        cond_rows + self.crossratios.iter().filter(|c| !c.is_degenerate()).count()
    }

    /// `dim M - #conditions`; zero for a square system.
    pub fn excess(&self) -> i64 {
        let dim = self.ends.len() as i64 - 3 + self.m as i64;
        let fat = self.crossratios.iter().filter(|c| c.is_degenerate()).count();
        dim - self.rows() as i64 - fat as i64
    }

    /// Point ends (all coordinates fixed on a contracted end) by height.
    pub fn point_labels(&self) -> Vec<Label> {
        let mut pts: Vec<(Q, Label)> = self
            .conds
            .iter()
            .filter_map(|(l, c)| match c {
                EndCond::Fix(v) if v.len() == self.m && self.end(*l).is_some_and(End::is_contracted) => {
                    Some((v[self.m - 1].clone(), *l))
                }
                _ => None,
            })
            .collect();
        pts.sort();
        pts.into_iter().map(|(_, l)| l).collect()
    }

    pub fn end(&self, l: Label) -> Option<&End> {
        self.ends.iter().find(|e| e.label == l)
    }

    /// Degenerated cross-ratios replaced by their (canonical) pairing with a
    /// seeded generic length.
    pub fn with_generic_lengths(&self, seed: u64, attempt: u32) -> MapProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(17) ^ (attempt as u64).wrapping_mul(0xA24B_AED4_963E_E407));
        let crossratios = self
            .crossratios
            .iter()
            .map(|c| {
                if c.is_degenerate() {
                    let len = Rat::new(rng.gen_range(DENOM..4 * DENOM), DENOM);
                    CrossRatio::new(c.entries, Some(c.pairing_or_canonical()), Some(len)).expect("valid pairing")
                } else {
                    c.clone()
                }
            })
            .collect();
        MapProblem { crossratios, ..self.clone() }
    }

    /// Induced end flows: points `m`, other fixed ends `m-1`, lines `m-2`.
    pub fn induced_flows(&self) -> Vec<u32> {
        let m = self.m as u32;
        self.ends
            .iter()
            .map(|e| match self.cond(e.label) {
                Some(EndCond::Fix(v)) if v.len() == self.m && e.is_contracted() => m,
                Some(EndCond::Fix(_)) => m - 1,
                Some(EndCond::Line(_)) => m.saturating_sub(2),
                None => 0,
            })
            .collect()
    }
}

/// Combinatorial type: vertices `0..nv`, bounded edges, the vertex of each
/// end (parallel to the problem's ends) and the cross-ratios per vertex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapType {
    pub nv: usize,
    pub edges: Vec<(usize, usize)>,
    pub end_vertex: Vec<usize>,
    pub lambda: Vec<Vec<usize>>,
}

impl MapType {
    pub fn valence(&self, v: usize) -> usize {
        self.end_vertex.iter().filter(|&&u| u == v).count() + self.edges.iter().filter(|&&(a, b)| a == v || b == v).count()
    }

    pub fn ends_at(&self, v: usize) -> Vec<usize> {
        (0..self.end_vertex.len()).filter(|&i| self.end_vertex[i] == v).collect()
    }

    pub fn rooted(&self, root: usize) -> Rooted {
        Rooted::new(self.nv, &self.edges, root)
    }

    /// Direction of each bounded edge from its first vertex to its second:
    /// the sum of end directions beyond the second vertex.
    pub fn edge_dirs(&self, ends: &[End]) -> Vec<Dir> {
        Geometry::new(self, ends, 0).dirs
    }

    /// Canonical key: per bounded edge the set of end indices on the side
    /// not containing end 0, sorted.
    pub fn splits(&self) -> Vec<u64> {
        let r = self.rooted(self.end_vertex[0]);
        let mut below = vec![0u64; self.nv];
        for (i, &v) in self.end_vertex.iter().enumerate() {
            below[v] |= 1 << i;
        }
        for &v in r.order.iter().rev() {
            if v != r.root {
                let p = r.parent[v];
                below[p] |= below[v];
            }
        }
        let mut out: Vec<u64> = (0..self.nv).filter(|&v| v != r.root).map(|v| below[v]).collect();
        out.sort_unstable();
        out
    }

    fn endpoint_fn<'a>(&'a self, ends: &'a [End]) -> impl Fn(Label) -> Option<usize> + 'a {
        move |l| ends.iter().position(|e| e.label == l).map(|i| self.end_vertex[i])
    }
}

/// Root-oriented data of a type.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub root: usize,
    pub parent: Vec<usize>,
    pub parent_edge: Vec<usize>,
    /// Breadth-first order from the root.
    pub order: Vec<usize>,
    /// Direction of each edge from its first vertex to its second.
    pub dirs: Vec<Dir>,
    /// Direction of each edge pointing away from the root.
    pub away: Vec<Dir>,
    /// Bitmask of the edges between the root and each vertex.
    pub on_path: Vec<u64>,
}

impl Geometry {
    pub fn new(ty: &MapType, ends: &[End], root: usize) -> Geometry {
        let nv = ty.nv;
        let mut parent = vec![usize::MAX; nv];
        let mut parent_edge = vec![usize::MAX; nv];
        let mut order = Vec::with_capacity(nv);
        order.push(root);
        parent[root] = root;
        let mut i = 0;
        while i < order.len() {
            let v = order[i];
            i += 1;
            for (e, &(a, b)) in ty.edges.iter().enumerate() {
                let w = if a == v {
                    b
                } else if b == v {
                    a
                } else {
                    continue;
                };
                if parent[w] == usize::MAX {
                    parent[w] = v;
                    parent_edge[w] = e;
                    order.push(w);
                }
            }
        }
        assert_eq!(order.len(), nv, "type is not a connected tree");
        let mut sub = vec![[0i64; 3]; nv];
        for (i, &v) in ty.end_vertex.iter().enumerate() {
            for c in 0..3 {
                sub[v][c] += ends[i].dir[c];
            }
        }
        for &v in order.iter().rev() {
            if v != root {
                let p = parent[v];
                for c in 0..3 {
                    sub[p][c] += sub[v][c];
                }
            }
        }
        let mut dirs = Vec::with_capacity(ty.edges.len());
        let mut away = Vec::with_capacity(ty.edges.len());
        for (e, &(a, b)) in ty.edges.iter().enumerate() {
            if parent_edge[b] == e && parent[b] == a {
                dirs.push(sub[b]);
                away.push(sub[b]);
            } else {
                dirs.push(sub[a].map(|x| -x));
                away.push(sub[a]);
            }
        }
        let mut on_path = vec![0u64; nv];
        for &v in order.iter().skip(1) {
            on_path[v] = on_path[parent[v]] | 1 << parent_edge[v];
        }
        Geometry { root, parent, parent_edge, order, dirs, away, on_path }
    }
}

// ---------------------------------------------------------------------------
// Enumeration by leaf insertion.

struct Enumerator {
    n: usize,
    order: Vec<usize>,
    /// Cross-ratio quartets (end indices) completed at each insertion step.
    quartets: Vec<Vec<[usize; 4]>>,
    fat: usize,
    mode: Mode,
}

#[derive(Clone)]
struct Partial {
    /// Node graph: nodes `< n` are ends, `n + j` internal vertex `j`.
    edges: Vec<(usize, usize)>,
    internal: usize,
    fat_left: usize,
}

impl Enumerator {
    fn new(problem: &MapProblem, mode: Mode) -> Result<Self, MapError> {
        let n = problem.ends.len();
        let fat: Vec<&CrossRatio> = problem.crossratios.iter().filter(|c| c.is_degenerate()).collect();
        if mode == Mode::Lengths && !fat.is_empty() {
            return Err(MapError::NeedsLengths);
        }
        let idx = |l: Label| problem.end_index(l).ok_or(MapError::UnknownLabel(l));
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        for cr in &fat {
            for &l in &cr.entries {
                let i = idx(l)?;
                if !placed[i] {
                    placed[i] = true;
                    order.push(i);
                }
            }
        }
        order.extend((0..n).filter(|&i| !placed[i]));
        let mut pos = vec![0; n];
        for (s, &i) in order.iter().enumerate() {
            pos[i] = s;
        }
        let mut quartets = vec![Vec::new(); n];
        for cr in &fat {
            let q = [idx(cr.entries[0])?, idx(cr.entries[1])?, idx(cr.entries[2])?, idx(cr.entries[3])?];
            let step = q.iter().map(|&i| pos[i]).max().expect("four entries");
            quartets[step].push(q);
        }
        Ok(Enumerator { n, order, quartets, fat: fat.len(), mode })
    }

    fn start(&self) -> Option<Partial> {
        (self.n >= 3).then(|| Partial {
            edges: (0..3).map(|i| (self.n, self.order[i])).collect(),
            internal: 1,
            fat_left: self.fat,
        })
    }

    fn walk(&self, p: &mut Partial, step: usize, stop: usize, f: &mut dyn FnMut(&Partial)) {
        if step == stop {
            f(p);
            return;
        }
        let leaf = self.order[step];
        let n = self.n;
        for i in 0..p.edges.len() {
            let (u, w) = p.edges[i];
            let x = n + p.internal;
            p.edges[i] = (u, x);
            p.edges.push((x, w));
            p.edges.push((x, leaf));
            p.internal += 1;
            if self.quartets_ok(p, step) {
                self.walk(p, step + 1, stop, f);
            }
            p.internal -= 1;
            p.edges.pop();
            p.edges.pop();
            p.edges[i] = (u, w);
        }
        if p.fat_left > 0 {
            for j in 0..p.internal {
                p.edges.push((n + j, leaf));
                p.fat_left -= 1;
                if self.quartets_ok(p, step) {
                    self.walk(p, step + 1, stop, f);
                }
                p.fat_left += 1;
                p.edges.pop();
            }
        }
    }

    /// Quartets completed at `step` must be unresolved (a star) already.
    fn quartets_ok(&self, p: &Partial, step: usize) -> bool {
        if self.quartets[step].is_empty() {
            return true;
        }
        let nodes = self.n + p.internal;
        let mut adj = vec![Vec::new(); nodes];
        for &(u, w) in &p.edges {
            adj[u].push(w);
            adj[w].push(u);
        }
        let dist = |s: usize| {
            let mut d = vec![usize::MAX; nodes];
            d[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(v) = q.pop_front() {
                for &w in &adj[v] {
                    if d[w] == usize::MAX {
                        d[w] = d[v] + 1;
                        q.push_back(w);
                    }
                }
            }
            d
        };
        self.quartets[step].iter().all(|&[a, b, c, d]| {
            let (da, db, dc) = (dist(a), dist(b), dist(c));
            let s1 = da[b] + dc[d];
            s1 == da[c] + db[d] && s1 == da[d] + db[c]
        })
    }

    fn to_type(&self, p: &Partial) -> MapType {
        let n = self.n;
        let mut edges = Vec::with_capacity(p.internal.saturating_sub(1));
        let mut end_vertex = vec![0; n];
        for &(u, w) in &p.edges {
            match (u >= n, w >= n) {
                (true, true) => edges.push((u - n, w - n)),
                (true, false) => end_vertex[w] = u - n,
                (false, true) => end_vertex[u] = w - n,
                (false, false) => unreachable!("two ends joined directly"),
            }
        }
        MapType { nv: p.internal, edges, end_vertex, lambda: vec![Vec::new(); p.internal] }
    }

    /// Final type, with cross-ratios assigned, if it is top-dimensional.
    fn finish(&self, p: &Partial, problem: &MapProblem) -> Option<MapType> {
        if p.fat_left != 0 {
            return None;
        }
        let mut ty = self.to_type(p);
        if self.mode == Mode::Degenerate && self.fat > 0 {
            let r = ty.rooted(0);
            let endpoint = ty.endpoint_fn(&problem.ends);
            let mut lambda = vec![Vec::new(); ty.nv];
            for (i, cr) in problem.crossratios.iter().enumerate().filter(|(_, c)| c.is_degenerate()) {
                let v = crossratios::satisfied_vertex(&r, cr, &endpoint).ok()??;
                lambda[v].push(i);
            }
            drop(endpoint);
            if (0..ty.nv).any(|v| ty.valence(v) != 3 + lambda[v].len()) {
                return None;
            }
            ty.lambda = lambda;
        }
        Some(ty)
    }
}

fn check_feasible(problem: &MapProblem, max_ends: usize) -> Result<(), MapError> {
    let bound = max_ends.min(HARD_MAX_ENDS);
    if problem.ends.len() > bound {
        return Err(MapError::TooManyEnds { ends: problem.ends.len(), bound });
    }
    Ok(())
}

/// All types of the mode, before any direction filtering.
pub fn enumerate_types(problem: &MapProblem, mode: Mode, max_ends: usize) -> Result<Vec<MapType>, MapError> {
    check_feasible(problem, max_ends)?;
    let en = Enumerator::new(problem, mode)?;
    let mut out = Vec::new();
    if let Some(mut p) = en.start() {
        en.walk(&mut p, 3, en.n, &mut |q| {
            if let Some(ty) = en.finish(q, problem) {
                out.push(ty);
            }
        });
    }
    Ok(out)
}

/// Visit every type of the mode in parallel, collecting `f`'s outputs in
/// enumeration order. Also returns the number of types visited.
pub fn visit_types<R, E, F>(problem: &MapProblem, mode: Mode, max_ends: usize, workers: Option<usize>, f: F) -> Result<Result<(Vec<R>, u64), E>, MapError>
where
    R: Send,
    E: Send,
    F: Fn(&MapType) -> Result<Vec<R>, E> + Sync,
{
    check_feasible(problem, max_ends)?;
    let en = Enumerator::new(problem, mode)?;
    let Some(mut start) = en.start() else {
        return Ok(Ok((Vec::new(), 0)));
    };
    let split = en.n.min(7);
    let mut prefixes = Vec::new();
    en.walk(&mut start, 3, split, &mut |q| prefixes.push(q.clone()));
    let run = || {
        prefixes
            .into_par_iter()
            .map(|mut p| {
                let mut out = Vec::new();
                let mut visited = 0u64;
                let mut err = None;
                en.walk(&mut p, split, en.n, &mut |q| {
                    if err.is_some() {
                        return;
                    }
                    if let Some(ty) = en.finish(q, problem) {
                        visited += 1;
                        match f(&ty) {
                            Ok(v) => out.extend(v),
                            Err(e) => err = Some(e),
                        }
                    }
                });
                match err {
                    Some(e) => Err(e),
                    None => Ok((out, visited)),
                }
            })
            .collect::<Result<Vec<_>, E>>()
    };
    let chunks = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .expect("thread pool")
            .install(run),
        None => run(),
    };
    Ok(chunks.map(|cs| {
        let mut visited = 0;
        let mut all = Vec::new();
        for (v, k) in cs {
            all.extend(v);
            visited += k;
        }
        (all, visited)
    }))
}

// ---------------------------------------------------------------------------
// Ev-matrices and solving.

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum RowTag {
    Fix { label: Label, coord: usize },
    Line { label: Label, functional: [i64; 2] },
    Length { crossratio: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ColTag {
    Root(usize),
    Length(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvMatrix {
    pub rows: Vec<Vec<i64>>,
    pub rhs: Vec<Q>,
    pub row_tags: Vec<RowTag>,
    pub col_tags: Vec<ColTag>,
    pub root: usize,
}

impl EvMatrix {
    pub fn det(&self) -> BigInt {
        linalg::det(&self.rows)
    }
}

/// Row data shared by all types of one problem.
struct Layout<'a> {
    problem: &'a MapProblem,
    cond_end: Vec<usize>,
    /// Condition positions holding multi lines.
    multi: Vec<usize>,
    metric: Vec<usize>,
    scale: BigInt,
    combos: Vec<Vec<usize>>,
    rhs: Vec<Vec<BigInt>>,
    rhs_small: Vec<Option<Vec<i128>>>,
    rhs_f64: Vec<Vec<f64>>,
    line_factor: u64,
    root_end: Option<usize>,
}

fn lcm_den(acc: &mut BigInt, q: &Q) {
    *acc = acc.lcm(q.denom());
}

impl<'a> Layout<'a> {
    fn new(problem: &'a MapProblem) -> Result<Self, MapError> {
        let m = problem.m;
        let mut cond_end = Vec::new();
        let mut multi = Vec::new();
        let mut scale = BigInt::one();
        let mut line_factor = 1u64;
        let mut root_end = None;
        for (i, (l, c)) in problem.conds.iter().enumerate() {
            let e = problem.end_index(*l).ok_or(MapError::UnknownLabel(*l))?;
            cond_end.push(e);
            match c {
                EndCond::Fix(v) => {
                    v.iter().for_each(|q| lcm_den(&mut scale, q));
                    if v.len() == m && root_end.is_none() {
                        root_end = Some(e);
                    }
                }
                EndCond::Line(LineCond::Multi { vertex, weight }) => {
                    vertex.iter().for_each(|q| lcm_den(&mut scale, q));
                    multi.push(i);
                    line_factor *= weight;
                }
                EndCond::Line(LineCond::Degenerate { anchor, .. }) => anchor.iter().for_each(|q| lcm_den(&mut scale, q)),
            }
        }
        let metric: Vec<usize> = (0..problem.crossratios.len()).filter(|&i| !problem.crossratios[i].is_degenerate()).collect();
        for &i in &metric {
            lcm_den(&mut scale, problem.crossratios[i].length.as_ref().map(q_from_rat).as_ref().expect("metric"));
        }
        let mut combos: Vec<Vec<usize>> = vec![vec![]];
        for _ in &multi {
            combos = combos.into_iter().flat_map(|c| (0..3).map(move |r| [c.clone(), vec![r]].concat())).collect();
        }
        let mut layout = Layout {
            problem,
            cond_end,
            multi,
            metric,
            scale,
            combos,
            rhs: vec![],
            rhs_small: vec![],
            rhs_f64: vec![],
            line_factor,
            root_end,
        };
        layout.rhs = layout.combos.iter().map(|c| layout.rhs_for(c)).collect();
        layout.rhs_small = layout
            .rhs
            .iter()
            .map(|r| r.iter().map(ToPrimitive::to_i128).collect::<Option<Vec<i128>>>())
            .collect();
        layout.rhs_f64 = layout.rhs.iter().map(|r| r.iter().map(|b| b.to_f64().unwrap_or(f64::INFINITY)).collect()).collect();
        Ok(layout)
    }

    fn functional(&self, cond: usize, combo: &[usize]) -> [i64; 2] {
        match &self.problem.conds[cond].1 {
            EndCond::Line(LineCond::Multi { .. }) => {
                let k = self.multi.iter().position(|&c| c == cond).expect("multi line");
                RAY_FUNCTIONALS[combo[k]]
            }
            EndCond::Line(LineCond::Degenerate { kind, .. }) => kind.functional(),
            EndCond::Fix(_) => unreachable!("not a line"),
        }
    }

    fn rhs_values(&self, combo: &[usize]) -> Vec<Q> {
        let mut out = Vec::new();
        for (i, (_, c)) in self.problem.conds.iter().enumerate() {
            match c {
                EndCond::Fix(v) => out.extend(v.iter().cloned()),
                EndCond::Line(LineCond::Multi { vertex: p, .. }) | EndCond::Line(LineCond::Degenerate { anchor: p, .. }) => {
                    let g = self.functional(i, combo);
                    out.push(&p[0] * q_int(g[0]) + &p[1] * q_int(g[1]));
                }
            }
        }
        for &i in &self.metric {
            out.push(q_from_rat(self.problem.crossratios[i].length.as_ref().expect("metric")));
        }
        out
    }

    fn rhs_for(&self, combo: &[usize]) -> Vec<BigInt> {
        self.rhs_values(combo)
            .iter()
            .map(|q| {
                let s = q * Q::from_integer(self.scale.clone());
                debug_assert!(s.is_integer());
                s.to_integer()
            })
            .collect()
    }

    fn root_of(&self, ty: &MapType) -> usize {
        self.root_end.map_or(0, |e| ty.end_vertex[e])
    }

    fn rows(&self, ty: &MapType, geo: &Geometry, combo: &[usize]) -> Result<(Vec<Vec<i64>>, Vec<RowTag>), CrError> {
        let m = self.problem.m;
        let ne = ty.edges.len();
        let coord_row = |v: usize, k: usize, g: i64, row: &mut Vec<i64>| {
            row[k] += g;
            for e in 0..ne {
                if geo.on_path[v] >> e & 1 == 1 {
                    row[m + e] += g * geo.away[e][k];
                }
            }
        };
        let mut rows = Vec::with_capacity(m + ne);
        let mut tags = Vec::with_capacity(m + ne);
        for (i, (l, c)) in self.problem.conds.iter().enumerate() {
            let v = ty.end_vertex[self.cond_end[i]];
            match c {
                EndCond::Fix(vals) => {
                    for k in 0..vals.len() {
                        let mut row = vec![0i64; m + ne];
                        coord_row(v, k, 1, &mut row);
                        rows.push(row);
                        tags.push(RowTag::Fix { label: *l, coord: k });
                    }
                }
                EndCond::Line(_) => {
                    let g = self.functional(i, combo);
                    let mut row = vec![0i64; m + ne];
                    coord_row(v, 0, g[0], &mut row);
                    coord_row(v, 1, g[1], &mut row);
                    rows.push(row);
                    tags.push(RowTag::Line { label: *l, functional: g });
                }
            }
        }
        if !self.metric.is_empty() {
            let r = ty.rooted(geo.root);
            let endpoint = ty.endpoint_fn(&self.problem.ends);
            for &i in &self.metric {
                let (edges, _) = crossratios::cr_length_row(&r, &self.problem.crossratios[i], &endpoint)?;
                let mut row = vec![0i64; m + ne];
                for e in edges {
                    row[m + e] = 1;
                }
                rows.push(row);
                tags.push(RowTag::Length { crossratio: i });
            }
        }
        Ok((rows, tags))
    }

    fn matrix(&self, ty: &MapType, combo: &[usize]) -> Result<EvMatrix, CrError> {
        let geo = Geometry::new(ty, &self.problem.ends, self.root_of(ty));
        let (rows, row_tags) = self.rows(ty, &geo, combo)?;
        let m = self.problem.m;
        let col_tags = (0..m).map(ColTag::Root).chain((0..ty.edges.len()).map(ColTag::Length)).collect();
        Ok(EvMatrix { rows, rhs: self.rhs_values(combo), row_tags, col_tags, root: geo.root })
    }

    fn cr_factor(&self, ty: &MapType) -> u64 {
        let mut f = 1u64;
        if ty.lambda.iter().all(Vec::is_empty) {
            return 1;
        }
        let r = ty.rooted(0);
        let endpoint = ty.endpoint_fn(&self.problem.ends);
        for v in 0..ty.nv {
            if ty.lambda[v].is_empty() {
                continue;
            }
            let labels: Vec<Label> = ty.ends_at(v).iter().map(|&i| self.problem.ends[i].label).collect();
            let crs: Vec<&CrossRatio> = ty.lambda[v].iter().map(|&i| &self.problem.crossratios[i]).collect();
            let star = crossratios::local_star(&r, v, &labels, &crs, &endpoint).expect("assigned cross-ratios resolve");
            f *= crossratios::cr_mult(&star).expect("valence matches");
            if f == 0 {
                return 0;
            }
        }
        f
    }

    /// All solutions of one type over all ray choices.
    fn evaluate(&self, ty: &MapType) -> Result<Vec<Solution>, GenericityFault> {
        let m = self.problem.m;
        let geo = Geometry::new(ty, &self.problem.ends, self.root_of(ty));
        if self.metric.is_empty() && geo.dirs.iter().any(|d| *d == [0, 0, 0]) {
            return Ok(vec![]);
        }
        let cr = self.cr_factor(ty);
        if cr == 0 {
            return Ok(vec![]);
        }
        let root = geo.root;
        let ne = ty.edges.len();
        let mut out = Vec::new();
        for (ci, combo) in self.combos.iter().enumerate() {
            let Ok((rows, _)) = self.rows(ty, &geo, combo) else {
                return Ok(vec![]);
            };
            if !float_prefilter(&rows, &self.rhs_f64[ci], m) {
                continue;
            }
            let solved = match &self.rhs_small[ci] {
                Some(small) => linalg::solve(&rows, small),
                None => linalg::solve_wide(&rows, &self.rhs[ci]),
            };
            let Some(sol) = solved else { continue };
            let sgn = if sol.det.is_negative() { -1 } else { 1 };
            let len_sign: Vec<i32> = (0..ne).map(|e| sign_of(&sol.y[m + e]) * sgn).collect();
            if len_sign.iter().any(|&s| s < 0) {
                continue;
            }
            if len_sign.iter().any(|&s| s == 0) {
                return Err(GenericityFault(format!("edge of length zero in type {:?}", ty.splits())));
            }
            let pos_y = |v: usize| -> Vec<BigInt> {
                (0..m)
                    .map(|k| {
                        let mut acc = sol.y[k].clone();
                        for e in 0..ne {
                            if geo.on_path[v] >> e & 1 == 1 && geo.away[e][k] != 0 {
                                acc += &sol.y[m + e] * geo.away[e][k];
                            }
                        }
                        acc
                    })
                    .collect()
            };
            let mut rays_ok = true;
            for (k, &cond) in self.multi.iter().enumerate() {
                let EndCond::Line(LineCond::Multi { vertex, .. }) = &self.problem.conds[cond].1 else { unreachable!() };
                let v = ty.end_vertex[self.cond_end[cond]];
                let p = pos_y(v);
                let g = RAY_PARAMETER[combo[k]];
                let mut t = BigInt::zero();
                for c in 0..2 {
                    let scaled = (&vertex[c] * Q::from_integer(self.scale.clone() * &sol.det)).to_integer();
                    t += (&p[c] - scaled) * g[c];
                }
                match sign_of(&t) * sgn {
                    0 => return Err(GenericityFault(format!("marked point on the vertex of line {}", self.problem.conds[cond].0))),
                    s if s < 0 => {
                        rays_ok = false;
                        break;
                    }
                    _ => {}
                }
            }
            if !rays_ok {
                continue;
            }
            let denom = Q::from_integer(&self.scale * &sol.det);
            let root_pos = (0..m).map(|k| Q::from_integer(sol.y[k].clone()) / &denom).collect();
            let lengths = (0..ne).map(|e| Q::from_integer(sol.y[m + e].clone()) / &denom).collect();
            let rays = self.multi.iter().zip(combo).map(|(&c, &r)| (self.problem.conds[c].0, r)).collect();
            let mult = BigInt::from(cr) * BigInt::from(self.line_factor) * sol.det.abs();
            out.push(Solution {
                map: EmbeddedMap { ty: ty.clone(), dirs: geo.dirs.clone(), root, root_pos, lengths, rays },
                det: sol.det,
                cr_factor: cr,
                line_factor: self.line_factor,
                mult,
            });
        }
        Ok(out)
    }
}

impl Layout<'_> {
    /// Cells of the solution set of a system with one free parameter.
    fn family(&self, ty: &MapType, tracked: usize) -> Vec<FamilyCell> {
        let m = self.problem.m;
        let geo = Geometry::new(ty, &self.problem.ends, self.root_of(ty));
        if self.metric.is_empty() && geo.dirs.iter().any(|d| *d == [0, 0, 0]) {
            return vec![];
        }
        if self.cr_factor(ty) == 0 {
            return vec![];
        }
        let ne = ty.edges.len();
        let n = m + ne;
        let mut out = Vec::new();
        for (ci, combo) in self.combos.iter().enumerate() {
            let Ok((mut rows, _)) = self.rows(ty, &geo, combo) else { continue };
            if rows.len() + 1 != n {
                continue;
            }
            let Some(k) = linalg::kernel_vector(&rows) else { continue };
            let j = k.iter().position(|v| !v.is_zero()).expect("nonzero kernel");
            let mut unit = vec![0i64; n];
            unit[j] = 1;
            rows.push(unit);
            let mut rhs = self.rhs[ci].clone();
            rhs.push(BigInt::zero());
            let Some(sol) = linalg::solve_wide(&rows, &rhs) else { continue };
            let denom = Q::from_integer(&self.scale * &sol.det);
            let x0: Vec<Q> = sol.y.iter().map(|y| Q::from_integer(y.clone()) / &denom).collect();
            let kq: Vec<Q> = k.iter().map(|v| Q::from_integer(v.clone())).collect();
            let pos = |x: &[Q], v: usize, c: usize| -> Q {
                let mut acc = x[c].clone();
                for e in 0..ne {
                    if geo.on_path[v] >> e & 1 == 1 && geo.away[e][c] != 0 {
                        acc += &x[m + e] * q_int(geo.away[e][c]);
                    }
                }
                acc
            };
            // Constraints a*t + b > 0.
            let mut cons: Vec<(Q, Q)> = (0..ne).map(|e| (kq[m + e].clone(), x0[m + e].clone())).collect();
            for (r, &cond) in self.multi.iter().enumerate() {
                let EndCond::Line(LineCond::Multi { vertex, .. }) = &self.problem.conds[cond].1 else { unreachable!() };
                let v = ty.end_vertex[self.cond_end[cond]];
                let g = RAY_PARAMETER[combo[r]];
                let mut a = Q::zero();
                let mut b = Q::zero();
                for c in 0..2 {
                    a += pos(&kq, v, c) * q_int(g[c]);
                    b += (pos(&x0, v, c) - &vertex[c]) * q_int(g[c]);
                }
                cons.push((a, b));
            }
            let mut lower: Option<Q> = None;
            let mut upper: Option<Q> = None;
            let mut empty = false;
            for (a, b) in cons {
                if a.is_zero() {
                    if !b.is_positive() {
                        empty = true;
                    }
                    continue;
                }
                let t = -&b / &a;
                if a.is_positive() {
                    if lower.as_ref().map_or(true, |l| t > *l) {
                        lower = Some(t);
                    }
                } else if upper.as_ref().map_or(true, |u| t < *u) {
                    upper = Some(t);
                }
            }
            if empty {
                continue;
            }
            if let (Some(l), Some(u)) = (&lower, &upper) {
                if l >= u {
                    continue;
                }
            }
            let v = ty.end_vertex[tracked];
            let vel = |c: usize| -> BigInt { pos(&kq, v, c).to_integer() };
            let rays = self.multi.iter().zip(combo).map(|(&c, &r)| (self.problem.conds[c].0, r)).collect();
            out.push(FamilyCell { ty: ty.clone(), rays, lower, upper, velocity: [vel(0), vel(1)] });
        }
        out
    }
}

/// One cell of a one-parameter solution family: `x(t) = x0 + t k` for `t` in
/// the open interval `(lower, upper)`; absent bounds are infinite.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FamilyCell {
    pub ty: MapType,
    pub rays: BTreeMap<Label, usize>,
    pub lower: Option<Q>,
    pub upper: Option<Q>,
    /// Plane velocity of the tracked end's vertex.
    pub velocity: [BigInt; 2],
}

/// All cells of the solution family of a system with excess one, tracking
/// the vertex of end `q`.
pub fn free_family(problem: &MapProblem, mode: Mode, opts: &CountOptions, q: Label) -> Result<Vec<FamilyCell>, MapError> {
    let excess = problem.excess();
    if excess != 1 {
        return Err(MapError::NotSquare(excess - 1));
    }
    let tracked = problem.end_index(q).ok_or(MapError::UnknownLabel(q))?;
    let layout = Layout::new(problem)?;
    let res = visit_types(problem, mode, opts.max_ends, opts.workers, |ty| Ok::<_, ()>(layout.family(ty, tracked)))?;
    let (mut cells, _) = res.expect("infallible");
    cells.sort_by(|a, b| (a.ty.splits(), &a.rays).cmp(&(b.ty.splits(), &b.rays)));
    Ok(cells)
}

/// Cheap floating-point screen. `false` only when the system is certainly
/// singular or some edge length is certainly negative; everything else goes
/// through the exact solver.
fn float_prefilter(rows: &[Vec<i64>], rhs: &[f64], m: usize) -> bool {
    let n = rows.len();
    if rhs.iter().any(|v| !v.is_finite()) {
        return true;
    }
    let mut a: Vec<Vec<f64>> = rows
        .iter()
        .zip(rhs)
        .map(|(r, &b)| r.iter().map(|&v| v as f64).chain(std::iter::once(b)).collect())
        .collect();
    let mut det = 1.0f64;
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).expect("nonempty");
        if a[p][k].abs() < 1e-9 {
            return false;
        }
        if p != k {
            a.swap(p, k);
            det = -det;
        }
        det *= a[k][k];
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f != 0.0 {
                for j in k..=n {
                    a[i][j] -= f * a[k][j];
                }
            }
        }
    }
    if det.abs() < 0.5 {
        return false;
    }
    let mut x = vec![0.0f64; n];
    for k in (0..n).rev() {
        let mut acc = a[k][n];
        for j in k + 1..n {
            acc -= a[k][j] * x[j];
        }
        x[k] = acc / a[k][k];
    }
    let scale = x.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let tol = 1e-6 * scale * n as f64;
    x[m..].iter().all(|&l| l > -tol)
}

fn sign_of(v: &BigInt) -> i32 {
    if v.is_positive() {
        1
    } else if v.is_negative() {
        -1
    } else {
        0
    }
}

/// A type with exact root position and edge lengths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmbeddedMap {
    pub ty: MapType,
    pub dirs: Vec<Dir>,
    pub root: usize,
    pub root_pos: Vec<Q>,
    pub lengths: Vec<Q>,
    /// Ray of each multi line containing the marked point, by line label.
    pub rays: BTreeMap<Label, usize>,
}

impl EmbeddedMap {
    pub fn vertex_positions(&self) -> Vec<Vec<Q>> {
        let r = self.ty.rooted(self.root);
        let mut pos = vec![Vec::new(); self.ty.nv];
        pos[self.root] = self.root_pos.clone();
        for &v in r.order.iter().skip(1) {
            let p = r.parent[v];
            let e = r.parent_edge[v];
            let sgn = if self.ty.edges[e].1 == v { 1 } else { -1 };
            let l = &self.lengths[e];
            pos[v] = (0..pos[p].len()).map(|k| &pos[p][k] + l * q_int(sgn * self.dirs[e][k])).collect();
        }
        pos
    }
}

/// A solved embedding with its multiplicity factors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Solution {
    pub map: EmbeddedMap,
    /// Signed ev-determinant.
    pub det: BigInt,
    pub cr_factor: u64,
    pub line_factor: u64,
    pub mult: BigInt,
}

impl Solution {
    pub fn signed_mult(&self) -> BigInt {
        &self.det * BigInt::from(self.cr_factor) * BigInt::from(self.line_factor)
    }
}

/// Ev-matrix of a type for the given ray choices (by line label).
pub fn ev_matrix_for(ty: &MapType, problem: &MapProblem, rays: &BTreeMap<Label, usize>) -> Result<EvMatrix, MapError> {
    let layout = Layout::new(problem)?;
    let combo: Vec<usize> = layout.multi.iter().map(|&c| rays.get(&problem.conds[c].0).copied().unwrap_or(0)).collect();
    Ok(layout.matrix(ty, &combo)?)
}

pub fn ev_matrix(map: &EmbeddedMap, problem: &MapProblem) -> Result<EvMatrix, MapError> {
    ev_matrix_for(&map.ty, problem, &map.rays)
}

/// Cross-ratio multiplicity product over the fat vertices of a type.
pub fn cr_factor(ty: &MapType, problem: &MapProblem) -> Result<u64, MapError> {
    Ok(Layout::new(problem)?.cr_factor(ty))
}

/// `det(ev) * prod mult_cr * prod omega(L)`, signed.
pub fn signed_map_mult(map: &EmbeddedMap, problem: &MapProblem) -> Result<BigInt, MapError> {
    let layout = Layout::new(problem)?;
    let combo: Vec<usize> = layout.multi.iter().map(|&c| map.rays.get(&problem.conds[c].0).copied().unwrap_or(0)).collect();
    let ev = layout.matrix(&map.ty, &combo)?;
    Ok(ev.det() * BigInt::from(layout.cr_factor(&map.ty)) * BigInt::from(layout.line_factor))
}

pub fn map_mult(map: &EmbeddedMap, problem: &MapProblem) -> Result<BigInt, MapError> {
    Ok(signed_map_mult(map, problem)?.abs())
}

/// Solve one type for one ray choice.
pub fn solve_embedding(ty: &MapType, problem: &MapProblem, rays: &BTreeMap<Label, usize>) -> Result<Option<EmbeddedMap>, MapError> {
    let mut layout = Layout::new(problem)?;
    let combo: Vec<usize> = layout.multi.iter().map(|&c| rays.get(&problem.conds[c].0).copied().unwrap_or(0)).collect();
    let ci = layout.combos.iter().position(|c| *c == combo).expect("ray choice in range");
    layout.combos = vec![layout.combos[ci].clone()];
    layout.rhs = vec![layout.rhs[ci].clone()];
    layout.rhs_small = vec![layout.rhs_small[ci].clone()];
    layout.rhs_f64 = vec![layout.rhs_f64[ci].clone()];
    match layout.evaluate(ty) {
        Ok(mut v) => Ok(v.pop().map(|s| s.map)),
        Err(_) => Ok(None),
    }
}

#[derive(Clone, Debug)]
pub struct CountOptions {
    pub max_ends: usize,
    pub workers: Option<usize>,
    pub max_attempts: u32,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions { max_ends: DEFAULT_MAX_ENDS, workers: None, max_attempts: MAX_ATTEMPTS }
    }
}

#[derive(Clone, Debug)]
pub struct DirectCount {
    pub total: BigInt,
    /// Solutions of nonzero multiplicity in canonical type order.
    pub solutions: Vec<Solution>,
    pub types_visited: u64,
    pub attempt: u32,
    pub problem: MapProblem,
}

/// Count for fixed positions; a genericity fault aborts.
pub fn direct_count_at(problem: &MapProblem, mode: Mode, opts: &CountOptions) -> Result<Result<DirectCount, GenericityFault>, MapError> {
    let excess = problem.excess();
    if excess != 0 {
        return Err(MapError::NotSquare(excess));
    }
    let layout = Layout::new(problem)?;
    let res = visit_types(problem, mode, opts.max_ends, opts.workers, |ty| layout.evaluate(ty))?;
    Ok(res.map(|(mut solutions, types_visited)| {
        solutions.sort_by(|a, b| (a.map.ty.splits(), &a.map.rays).cmp(&(b.map.ty.splits(), &b.map.rays)));
        let total = solutions.iter().map(|s| s.mult.clone()).sum();
        DirectCount { total, solutions, types_visited, attempt: 0, problem: problem.clone() }
    }))
}

/// Brute-force count of a condition spec, resampling on genericity faults.
pub fn direct_count_spec(spec: &CondSpec, seed: u64, mode: Mode, opts: &CountOptions) -> Result<DirectCount, MapError> {
    for attempt in 0..opts.max_attempts {
        let pos = sample_positions(spec, seed, attempt);
        let mut problem = MapProblem::from_spec(spec, &pos);
        if mode == Mode::Lengths {
            problem = problem.with_generic_lengths(seed, attempt);
        }
        if let Ok(mut c) = direct_count_at(&problem, mode, opts)? {
            c.attempt = attempt;
            return Ok(c);
        }
    }
    Err(MapError::Genericity(opts.max_attempts))
}

// ---------------------------------------------------------------------------
// Flows and floors.

pub fn flow_tree(ty: &MapType) -> FlowTree {
    FlowTree { nv: ty.nv, edges: ty.edges.clone(), ends: ty.end_vertex.clone() }
}

/// Spread of the induced end flows over the type of a solution.
pub fn solution_flows(ty: &MapType, problem: &MapProblem) -> FlowGraph {
    spread_flows(&flow_tree(ty), &problem.induced_flows())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Elevator {
    pub edge: usize,
    /// Floor indices, `lower < upper` in point order.
    pub lower: usize,
    pub upper: usize,
    pub lower_vertex: usize,
    pub upper_vertex: usize,
    pub weight: i64,
    /// Half-flows entering the lower and the upper vertex.
    pub into_lower: u32,
    pub into_upper: u32,
}

impl Elevator {
    pub fn is_one_one(&self) -> bool {
        self.into_lower == 1 && self.into_upper == 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FloorDecomposition {
    pub floor_of: Vec<usize>,
    pub floors: Vec<Vec<usize>>,
    /// Point label on each floor.
    pub points: Vec<Label>,
    /// Number of `(1,1,1)` ends per floor.
    pub sizes: Vec<usize>,
    pub elevators: Vec<Elevator>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FloorError {
    #[error("floors need m = 3")]
    Dimension,
    #[error("floor {0} carries {1} points")]
    NotFloorDecomposed(usize, usize),
}

pub fn detect_floors(map: &EmbeddedMap, problem: &MapProblem) -> Result<FloorDecomposition, FloorError> {
    if problem.m != 3 {
        return Err(FloorError::Dimension);
    }
    let ty = &map.ty;
    let vertical: Vec<bool> = map.dirs.iter().map(|d| d[0] == 0 && d[1] == 0).collect();
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
                if vertical[e] {
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
    let points = problem.point_labels();
    let mut floor_points: Vec<Vec<Label>> = vec![Vec::new(); count];
    for &l in &points {
        let i = problem.end_index(l).expect("point end");
        floor_points[comp[ty.end_vertex[i]]].push(l);
    }
    for (f, p) in floor_points.iter().enumerate() {
        if p.len() != 1 {
            return Err(FloorError::NotFloorDecomposed(f, p.len()));
        }
    }
    // Renumber floors by point height.
    let mut rank = vec![0; count];
    for (k, &l) in points.iter().enumerate() {
        let f = floor_points.iter().position(|p| p[0] == l).expect("point floor");
        rank[f] = k;
    }
    let floor_of: Vec<usize> = comp.iter().map(|&c| rank[c]).collect();
    let mut floors = vec![Vec::new(); count];
    for v in 0..ty.nv {
        floors[floor_of[v]].push(v);
    }
    let mut sizes = vec![0; count];
    for (i, end) in problem.ends.iter().enumerate() {
        if end.dir == [1, 1, 1] {
            sizes[floor_of[ty.end_vertex[i]]] += 1;
        }
    }
    let fg = solution_flows(ty, problem);
    let elevators = (0..ty.edges.len())
        .filter(|&e| vertical[e])
        .map(|e| {
            let (a, b) = ty.edges[e];
            let (lo, hi, into_lo, into_hi) =
                if floor_of[a] < floor_of[b] { (a, b, fg.into[e][0], fg.into[e][1]) } else { (b, a, fg.into[e][1], fg.into[e][0]) };
            Elevator {
                edge: e,
                lower: floor_of[lo],
                upper: floor_of[hi],
                lower_vertex: lo,
                upper_vertex: hi,
                weight: map.dirs[e][2].abs(),
                into_lower: into_lo,
                into_upper: into_hi,
            }
        })
        .collect();
    Ok(FloorDecomposition { floor_of, floors, points, sizes, elevators })
}

// ---------------------------------------------------------------------------
// Dumps.

fn q_vec(v: &[Q]) -> Value {
    Value::Array(v.iter().map(|q| Value::String(q_str(q))).collect())
}

/// JSON description of one solution.
pub fn solution_json(sol: &Solution, problem: &MapProblem) -> Value {
    let ty = &sol.map.ty;
    let ends: BTreeMap<String, usize> = problem.ends.iter().zip(&ty.end_vertex).map(|(e, &v)| (e.label.to_string(), v)).collect();
    let matrix = ev_matrix(&sol.map, problem).map(|ev| ev.rows).unwrap_or_default();
    json!({
        "vertices": ty.nv,
        "edges": ty.edges,
        "end_vertex": ends,
        "directions": sol.map.dirs.iter().map(|d| d[..problem.m].to_vec()).collect::<Vec<_>>(),
        "lengths": q_vec(&sol.map.lengths),
        "root": sol.map.root,
        "root_position": q_vec(&sol.map.root_pos),
        "rays": sol.map.rays,
        "lambda": ty.lambda,
        "matrix": matrix,
        "det": sol.det.to_string(),
        "cr_mult": sol.cr_factor,
        "line_factor": sol.line_factor,
        "multiplicity": sol.mult.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_degree, LabeledDegree};

    fn rat(n: i64) -> Q {
        q_int(n)
    }

    /// Four-vertex map with ends 1 (point), 2 (-e1), 3 (-2e3, line), 4 (-e2),
    /// 5 (e0), 6 (e3, P) along a path V0-V1-V2-V3.
    pub(crate) fn running_map() -> (MapType, MapProblem) {
        let ends = vec![
            End { label: 1, dir: [0, 0, 0] },
            End { label: 2, dir: [-1, 0, 0] },
            End { label: 3, dir: [0, 0, -2] },
            End { label: 4, dir: [0, -1, 0] },
            End { label: 5, dir: [1, 1, 1] },
            End { label: 6, dir: [0, 0, 1] },
        ];
        let ty = MapType { nv: 4, edges: vec![(0, 1), (1, 2), (2, 3)], end_vertex: vec![0, 0, 1, 2, 3, 3], lambda: vec![vec![]; 4] };
        let problem = MapProblem {
            m: 3,
            ends,
            conds: vec![
                (1, EndCond::Fix(vec![rat(0), rat(0), rat(0)])),
                (3, EndCond::Line(LineCond::Multi { vertex: [rat(5), rat(5)], weight: 1 })),
                (6, EndCond::Fix(vec![rat(9), rat(3)])),
            ],
            crossratios: vec![],
        };
        (ty, problem)
    }

    #[test]
    fn running_example_ev_matrix() {
        let (ty, problem) = running_map();
        assert_eq!(ty.edge_dirs(&problem.ends), vec![[1, 0, 0], [1, 0, 2], [1, 1, 2]]);
        let ev = ev_matrix_for(&ty, &problem, &BTreeMap::from([(3, 2)])).unwrap();
        let want = vec![
            vec![1, 0, 0, 0, 0, 0],
            vec![0, 1, 0, 0, 0, 0],
            vec![0, 0, 1, 0, 0, 0],
            vec![1, 0, 0, 1, 0, 0],
            vec![1, 0, 0, 1, 1, 1],
            vec![0, 1, 0, 0, 0, 1],
        ];
        assert_eq!(ev.rows, want);
        assert_eq!(ev.det().abs(), BigInt::one());
        let mut horizontal = problem.clone();
        horizontal.conds[1].1 = EndCond::Line(LineCond::Degenerate { kind: DegenerateKind::L01, anchor: [rat(5), rat(5)] });
        assert!(ev_matrix_for(&ty, &horizontal, &BTreeMap::new()).unwrap().det().is_zero());
    }

    #[test]
    fn single_vertex_identity() {
        let problem = MapProblem {
            m: 3,
            ends: vec![
                End { label: 1, dir: [0, 0, 0] },
                End { label: 2, dir: [1, 1, 1] },
                End { label: 3, dir: [-1, 0, 0] },
                End { label: 4, dir: [0, -1, -1] },
            ],
            conds: vec![(1, EndCond::Fix(vec![rat(1), rat(2), rat(3)]))],
            crossratios: vec![],
        };
        let ty = MapType { nv: 1, edges: vec![], end_vertex: vec![0; 4], lambda: vec![vec![]] };
        let ev = ev_matrix_for(&ty, &problem, &BTreeMap::new()).unwrap();
        assert_eq!(ev.rows, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        assert_eq!(ev.det(), BigInt::one());
    }

    fn line_problem(m: usize, seed: u64) -> (CondSpec, MapProblem) {
        let alpha: &[u32] = if m == 3 { &[1] } else { &[1] };
        let deg = make_degree(m, 1, alpha, &[]).unwrap().with_contracted(2);
        let spec = CondSpec {
            m,
            ends: deg.ends.clone(),
            points: vec![1, 2],
            tangency_p: Default::default(),
            tangency_l: Default::default(),
            crossratios: vec![],
        };
        let pos = sample_positions(&spec, seed, 0);
        let problem = MapProblem::from_spec(&spec, &pos);
        (spec, problem)
    }

    #[test]
    fn trivalent_counts() {
        let (_, p) = line_problem(2, 0);
        assert_eq!(p.ends.len(), 5);
        assert_eq!(enumerate_types(&p, Mode::Degenerate, 10).unwrap().len(), 15);
        let (_, p3) = line_problem(3, 0);
        assert_eq!(p3.ends.len(), 6);
        assert_eq!(enumerate_types(&p3, Mode::Degenerate, 10).unwrap().len(), 105);
        let keys: std::collections::BTreeSet<Vec<u64>> =
            enumerate_types(&p3, Mode::Degenerate, 10).unwrap().iter().map(MapType::splits).collect();
        assert_eq!(keys.len(), 105);
    }

    #[test]
    fn lines_through_two_points() {
        for m in [2, 3] {
            for seed in 0..3 {
                let (spec, _) = line_problem(m, seed);
                let c = direct_count_spec(&spec, seed, Mode::Degenerate, &CountOptions::default()).unwrap();
                assert_eq!(c.total, BigInt::one(), "m={m} seed={seed}");
                assert_eq!(c.solutions.len(), 1);
            }
        }
    }

    #[test]
    fn rejected_types_exist() {
        // Several types are nonsingular but embed with a negative length.
        let (_, p) = line_problem(2, 1);
        let mut nonsingular = 0;
        let mut solved = 0;
        for ty in enumerate_types(&p, Mode::Degenerate, 10).unwrap() {
            if ty.edge_dirs(&p.ends).iter().any(|d| *d == [0, 0, 0]) {
                continue;
            }
            if !ev_matrix_for(&ty, &p, &BTreeMap::new()).unwrap().det().is_zero() {
                nonsingular += 1;
                solved += solve_embedding(&ty, &p, &BTreeMap::new()).unwrap().is_some() as usize;
            }
        }
        assert_eq!(solved, 1);
        assert!(nonsingular > solved);
    }

    #[test]
    fn fat_vertex_enumeration() {
        // Five ends, one cross-ratio: exactly one 4-valent vertex carrying it.
        let deg = LabeledDegree::new(
            2,
            vec![
                End { label: 1, dir: [0, 0, 0] },
                End { label: 2, dir: [0, 0, 0] },
                End { label: 3, dir: [1, 1, 0] },
                End { label: 4, dir: [-1, 0, 0] },
                End { label: 5, dir: [0, -1, 0] },
            ],
        )
        .unwrap();
        let problem = MapProblem { m: 2, ends: deg.ends, conds: vec![], crossratios: vec![CrossRatio::degenerate([1, 2, 3, 4])] };
        let types = enumerate_types(&problem, Mode::Degenerate, 10).unwrap();
        assert_eq!(types.len(), 4);
        for ty in &types {
            let fat: Vec<usize> = (0..ty.nv).filter(|&v| ty.valence(v) == 4).collect();
            assert_eq!(fat.len(), 1);
            assert_eq!(ty.lambda[fat[0]], vec![0]);
        }
    }
}
