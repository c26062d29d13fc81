//! Path criterion, cross-ratio multiplicities, adaptation and length rows.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CrossRatio, Label, Rat};
use crate::tree::{Branch, Rooted};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CrError {
    #[error("cross-ratio entries are not distinct")]
    RepeatedEntries,
    #[error("entry {0} has no endpoint")]
    MissingEndpoint(Label),
    #[error("star of valence {valence} cannot carry {count} cross-ratios")]
    Valence { valence: usize, count: usize },
    #[error("cross-ratio entry {0} is not an edge of the star")]
    NotAnEdge(u32),
    #[error("only {kept} entries kept; cannot adapt")]
    TooFewKept { kept: usize },
    #[error("forgetful image realizes a different pairing")]
    NoSolutionInThisType,
    #[error("cross-ratio has no length or pairing")]
    NotMetric,
}

/// Vertex of `tree` where the four entries lie in four distinct branches.
pub fn satisfied_vertex(tree: &Rooted, cr: &CrossRatio, endpoint: &dyn Fn(Label) -> Option<usize>) -> Result<Option<usize>, CrError> {
    let e = cr.entries;
    if (0..4).any(|i| (i + 1..4).any(|j| e[i] == e[j])) {
        return Err(CrError::RepeatedEntries);
    }
    let mut at = [0usize; 4];
    for i in 0..4 {
        at[i] = endpoint(e[i]).ok_or(CrError::MissingEndpoint(e[i]))?;
    }
    Ok(satisfied_at(tree, &at))
}

/// Same as [`satisfied_vertex`] with endpoints already resolved.
pub fn satisfied_at(tree: &Rooted, at: &[usize; 4]) -> Option<usize> {
    (0..tree.parent.len()).find(|&v| distinct_branches(tree, v, at))
}

pub fn distinct_branches(tree: &Rooted, v: usize, at: &[usize; 4]) -> bool {
    let mut b = [Branch::Here(0); 4];
    for i in 0..4 {
        b[i] = match tree.toward(v, at[i]) {
            None => Branch::Here(i),
            Some(e) => Branch::Via(e),
        };
    }
    (0..4).all(|i| (i + 1..4).all(|j| b[i] != b[j]))
}

/// Path-intersection oracle: for the given pairing, the vertex paths meet in
/// exactly one vertex.
pub fn paths_meet_once(tree: &Rooted, at: &[usize; 4], pairing: [[usize; 2]; 2]) -> Option<usize> {
    let p: BTreeSet<usize> = tree.path_vertices(at[pairing[0][0]], at[pairing[0][1]]).into_iter().collect();
    let q: BTreeSet<usize> = tree.path_vertices(at[pairing[1][0]], at[pairing[1][1]]).into_iter().collect();
    let common: Vec<usize> = p.intersection(&q).copied().collect();
    (common.len() == 1).then(|| common[0])
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CrossRatioAssignment {
    /// `per_vertex[v]` lists indices of cross-ratios satisfied at `v`.
    pub per_vertex: Vec<Vec<usize>>,
    pub unassigned: Vec<usize>,
}

impl CrossRatioAssignment {
    pub fn valid(&self) -> bool {
        self.unassigned.is_empty()
    }
}

pub fn assign_crossratios(
    tree: &Rooted,
    crs: &[CrossRatio],
    endpoint: &dyn Fn(Label) -> Option<usize>,
) -> Result<CrossRatioAssignment, CrError> {
    let mut out = CrossRatioAssignment { per_vertex: vec![Vec::new(); tree.parent.len()], unassigned: vec![] };
    for (i, cr) in crs.iter().enumerate() {
        match satisfied_vertex(tree, cr, endpoint)? {
            Some(v) => out.per_vertex[v].push(i),
            None => out.unassigned.push(i),
        }
    }
    Ok(out)
}

/// A fat vertex: its incident edge ids and its cross-ratios as pairings of
/// edge ids, listed by decreasing length.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalStar {
    pub edges: Vec<u32>,
    pub crossratios: Vec<[[u32; 2]; 2]>,
}

/// Number of total resolutions of the star.
pub fn cr_mult(star: &LocalStar) -> Result<u64, CrError> {
    let k = star.edges.len();
    if k != 3 + star.crossratios.len() {
        return Err(CrError::Valence { valence: k, count: star.crossratios.len() });
    }
    if k > 63 {
        return Err(CrError::Valence { valence: k, count: star.crossratios.len() });
    }
    let index = |id: u32| star.edges.iter().position(|&e| e == id).ok_or(CrError::NotAnEdge(id));
    let mut crs: Vec<[[usize; 2]; 2]> = Vec::with_capacity(star.crossratios.len());
    for p in &star.crossratios {
        let q = [[index(p[0][0])?, index(p[0][1])?], [index(p[1][0])?, index(p[1][1])?]];
        let flat = [q[0][0], q[0][1], q[1][0], q[1][1]];
        if (0..4).any(|i| (i + 1..4).any(|j| flat[i] == flat[j])) {
            return Err(CrError::RepeatedEntries);
        }
        crs.push(q);
    }
    let full: u64 = (1u64 << k) - 1;
    let start: Vec<u64> = (0..k).map(|i| 1u64 << i).collect();
    let mut found: BTreeSet<Vec<u64>> = BTreeSet::new();
    resolve(&crs, 0, vec![start], Vec::new(), full, &mut found);
    Ok(found.len() as u64)
}

fn branch_of(vertex: &[u64], edge: usize) -> Option<usize> {
    vertex.iter().position(|&b| b & (1u64 << edge) != 0)
}

fn satisfied_in(vertex: &[u64], cr: &[[usize; 2]; 2]) -> bool {
    let mut seen = [usize::MAX; 4];
    for (i, &e) in [cr[0][0], cr[0][1], cr[1][0], cr[1][1]].iter().enumerate() {
        match branch_of(vertex, e) {
            Some(b) if !seen[..i].contains(&b) => seen[i] = b,
            _ => return false,
        }
    }
    true
}

fn resolve(crs: &[[[usize; 2]; 2]], step: usize, vertices: Vec<Vec<u64>>, splits: Vec<u64>, full: u64, found: &mut BTreeSet<Vec<u64>>) {
    if step == crs.len() {
        let mut s = splits;
        s.sort_unstable();
        found.insert(s);
        return;
    }
    let cr = &crs[step];
    let Some(vi) = vertices.iter().position(|v| satisfied_in(v, cr)) else {
        return;
    };
    let v = &vertices[vi];
    let rest: Vec<usize> = (step + 1..crs.len()).filter(|&j| satisfied_in(v, &crs[j])).collect();
    let n = v.len();
    // Branch 0 always goes to the first side, so each bipartition appears once.
    for mask in 0u64..(1u64 << (n - 1)) {
        let side1: Vec<u64> = std::iter::once(v[0]).chain((1..n).filter(|i| mask & (1 << (i - 1)) != 0).map(|i| v[i])).collect();
        let side2: Vec<u64> = (1..n).filter(|i| mask & (1 << (i - 1)) == 0).map(|i| v[i]).collect();
        if side1.len() < 2 || side2.len() < 2 {
            continue;
        }
        let m1: u64 = side1.iter().fold(0, |a, b| a | b);
        let m2: u64 = side2.iter().fold(0, |a, b| a | b);
        let bit = |e: usize| 1u64 << e;
        let pair_in = |m: u64, p: [usize; 2]| m & bit(p[0]) != 0 && m & bit(p[1]) != 0;
        let separated = (pair_in(m1, cr[0]) && pair_in(m2, cr[1])) || (pair_in(m2, cr[0]) && pair_in(m1, cr[1]));
        if !separated {
            continue;
        }
        let mut v1 = side1.clone();
        v1.push(m2);
        let mut v2 = side2.clone();
        v2.push(m1);
        let (mut c1, mut c2) = (0usize, 0usize);
        let mut ok = true;
        for &j in &rest {
            match (satisfied_in(&v1, &crs[j]), satisfied_in(&v2, &crs[j])) {
                (true, false) => c1 += 1,
                (false, true) => c2 += 1,
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok || v1.len() != 3 + c1 || v2.len() != 3 + c2 {
            continue;
        }
        let mut next = vertices.clone();
        next[vi] = v1;
        next.push(v2);
        let mut s = splits.clone();
        s.push(if m1 & 1 != 0 { full & !m1 } else { m1 });
        resolve(crs, step + 1, next, s, full, found);
    }
}

/// Replace the single entry outside `kept` by `replacement`.
pub fn adapt_crossratio(cr: &CrossRatio, kept: &BTreeSet<Label>, replacement: Label) -> Result<CrossRatio, CrError> {
    let missing: Vec<Label> = cr.entries.iter().copied().filter(|l| !kept.contains(l)).collect();
    match missing.len() {
        0 => Ok(cr.clone()),
        1 => Ok(substitute(cr, &BTreeMap::from([(missing[0], replacement)]))),
        n => Err(CrError::TooFewKept { kept: 4 - n }),
    }
}

/// Rename entries (and the pairing) through `map`.
pub fn substitute(cr: &CrossRatio, map: &BTreeMap<Label, Label>) -> CrossRatio {
    let f = |l: Label| *map.get(&l).unwrap_or(&l);
    let e = cr.entries.map(f);
    let p = cr.pairing.map(|p| p.map(|q| q.map(f)));
    CrossRatio::new(e, p, cr.length).expect("renaming keeps entries distinct")
}

/// Edges on the path separating the two pairs, and the prescribed length.
pub fn cr_length_row(tree: &Rooted, cr: &CrossRatio, endpoint: &dyn Fn(Label) -> Option<usize>) -> Result<(Vec<usize>, Rat), CrError> {
    let (Some(p), Some(len)) = (cr.pairing, cr.length) else {
        return Err(CrError::NotMetric);
    };
    let at = |l: Label| endpoint(l).ok_or(CrError::MissingEndpoint(l));
    let a: BTreeSet<usize> = tree.path_vertices(at(p[0][0])?, at(p[0][1])?).into_iter().collect();
    let b: BTreeSet<usize> = tree.path_vertices(at(p[1][0])?, at(p[1][1])?).into_iter().collect();
    if a.intersection(&b).next().is_some() {
        return Err(CrError::NoSolutionInThisType);
    }
    // Closest pair between the two vertex sets realizes the separating path.
    let mut best: Option<Vec<usize>> = None;
    for &x in &a {
        for &y in &b {
            let path = tree.path_edges(x, y);
            if best.as_ref().map_or(true, |b| path.len() < b.len()) {
                best = Some(path);
            }
        }
    }
    let mut edges = best.expect("nonempty paths");
    edges.sort_unstable();
    Ok((edges, len))
}

/// The star at `v`: incident edges get ids `0..`, ends attached at `v` get
/// ids after them. Entries are mapped to the branch containing them.
pub fn local_star(
    tree: &Rooted,
    v: usize,
    ends_at_v: &[Label],
    crs: &[&CrossRatio],
    endpoint: &dyn Fn(Label) -> Option<usize>,
) -> Result<LocalStar, CrError> {
    let incident: Vec<usize> = tree.adj[v].iter().map(|&(e, _)| e).collect();
    let mut edges: Vec<u32> = (0..incident.len() as u32).collect();
    edges.extend((0..ends_at_v.len() as u32).map(|i| incident.len() as u32 + i));
    let id_of = |l: Label| -> Result<u32, CrError> {
        let x = endpoint(l).ok_or(CrError::MissingEndpoint(l))?;
        match tree.toward(v, x) {
            Some(e) => Ok(incident.iter().position(|&i| i == e).expect("incident") as u32),
            None => {
                let pos = ends_at_v.iter().position(|&m| m == l).ok_or(CrError::MissingEndpoint(l))?;
                Ok((incident.len() + pos) as u32)
            }
        }
    };
    let mut out = Vec::with_capacity(crs.len());
    for cr in crs {
        let p = cr.pairing_or_canonical();
        out.push([[id_of(p[0][0])?, id_of(p[0][1])?], [id_of(p[1][0])?, id_of(p[1][1])?]]);
    }
    Ok(LocalStar { edges, crossratios: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(k: u32, crs: &[[[u32; 2]; 2]]) -> LocalStar {
        LocalStar { edges: (1..=k).collect(), crossratios: crs.to_vec() }
    }

    #[test]
    fn six_valent_example() {
        let s = star(6, &[[[1, 2], [5, 6]], [[3, 4], [5, 6]], [[1, 2], [3, 4]]]);
        assert_eq!(cr_mult(&s).unwrap(), 2);
    }

    #[test]
    fn trivial_stars() {
        assert_eq!(cr_mult(&star(3, &[])).unwrap(), 1);
        assert_eq!(cr_mult(&star(4, &[[[1, 2], [3, 4]]])).unwrap(), 1);
        assert!(matches!(cr_mult(&star(5, &[[[1, 2], [3, 4]]])), Err(CrError::Valence { .. })));
    }

    #[test]
    fn path_criterion_examples() {
        // single vertex with four ends
        let t = Rooted::new(1, &[], 0);
        let cr = CrossRatio::degenerate([1, 2, 3, 4]);
        assert_eq!(satisfied_vertex(&t, &cr, &|_| Some(0)).unwrap(), Some(0));
        // a - b - c with 1,2 at a and 3,4 at c
        let t = Rooted::new(3, &[(0, 1), (1, 2)], 0);
        let ep = |l: Label| Some(if l <= 2 { 0 } else { 2 });
        assert_eq!(satisfied_vertex(&t, &cr, &ep).unwrap(), None);
    }

    #[test]
    fn adaptation() {
        let cr = CrossRatio::degenerate([1, 2, 3, 7]);
        let kept: BTreeSet<Label> = [1, 3, 7, 4, 5].into_iter().collect();
        assert_eq!(adapt_crossratio(&cr, &kept, 22).unwrap().entries, [1, 3, 7, 22]);
        let all: BTreeSet<Label> = [1, 2, 3, 7].into_iter().collect();
        assert_eq!(adapt_crossratio(&cr, &all, 22).unwrap(), cr);
        let two: BTreeSet<Label> = [1, 2].into_iter().collect();
        assert!(adapt_crossratio(&cr, &two, 22).is_err());
    }

    #[test]
    fn length_rows() {
        // caterpillar: ends 1,2 at vertex 0; 3,4 at vertex 1; middle edge 0
        let t = Rooted::new(2, &[(0, 1)], 0);
        let ep = |l: Label| Some(if l <= 2 { 0 } else { 1 });
        let cr = CrossRatio::new([1, 2, 3, 4], Some([[1, 2], [3, 4]]), Some(Rat::from_integer(5))).unwrap();
        assert_eq!(cr_length_row(&t, &cr, &ep).unwrap(), (vec![0], Rat::from_integer(5)));
        let wrong = CrossRatio::new([1, 2, 3, 4], Some([[1, 3], [2, 4]]), Some(Rat::from_integer(5))).unwrap();
        assert_eq!(cr_length_row(&t, &wrong, &ep), Err(CrError::NoSolutionInThisType));
    }
}
