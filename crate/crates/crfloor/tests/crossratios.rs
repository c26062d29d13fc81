use std::collections::BTreeSet;

use crfloor::crossratios::{cr_mult, paths_meet_once, satisfied_at, satisfied_vertex, CrError, LocalStar};
use crfloor::model::CrossRatio;
use crfloor::tree::Rooted;
use proptest::prelude::*;

const PAIRINGS: [[[usize; 2]; 2]; 3] = [[[0, 1], [2, 3]], [[0, 2], [1, 3]], [[0, 3], [1, 2]]];

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// A star with `3 + c` edges and `c` cross-ratios built from index choices,
/// with entries drawn from the first `reach` edges.
fn star_from(c: usize, reach: usize, picks: &[(u64, usize)]) -> LocalStar {
    let k = 3 + c;
    let mut crossratios = Vec::new();
    for &(seed, pairing) in picks.iter().take(c) {
        let mut pool: Vec<u32> = (1..=reach as u32).collect();
        let mut s = seed;
        let mut chosen = [0u32; 4];
        for slot in chosen.iter_mut() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *slot = pool.remove((s >> 33) as usize % pool.len());
        }
        let p = PAIRINGS[pairing % 3];
        crossratios.push([[chosen[p[0][0]], chosen[p[0][1]]], [chosen[p[1][0]], chosen[p[1][1]]]]);
    }
    LocalStar { edges: (1..=k as u32).collect(), crossratios }
}

#[test]
fn six_valent_star_all_orders() {
    let crs = [[[1, 2], [5, 6]], [[3, 4], [5, 6]], [[1, 2], [3, 4]]];
    for perm in permutations(3) {
        let star = LocalStar { edges: (1..=6).collect(), crossratios: perm.iter().map(|&i| crs[i]).collect() };
        assert_eq!(cr_mult(&star).unwrap(), 2);
    }
}

#[test]
fn clashing_pairings() {
    let clash = LocalStar { edges: (1..=5).collect(), crossratios: vec![[[1, 2], [3, 4]], [[1, 3], [2, 4]]] };
    assert_eq!(cr_mult(&clash).unwrap(), 0);
}

#[test]
fn malformed_stars() {
    let unknown = LocalStar { edges: (1..=4).collect(), crossratios: vec![[[1, 2], [3, 9]]] };
    assert_eq!(cr_mult(&unknown), Err(CrError::NotAnEdge(9)));
    let repeated = LocalStar { edges: (1..=4).collect(), crossratios: vec![[[1, 2], [2, 4]]] };
    assert_eq!(cr_mult(&repeated), Err(CrError::RepeatedEntries));
}

#[test]
fn satisfied_on_a_path() {
    // 0 - 1 - 2 with entries 1,2 at vertex 0 and 3,4 at vertex 2.
    let t = Rooted::new(3, &[(0, 1), (1, 2)], 0);
    let at = |l: u32| Some(if l <= 2 { 0 } else { 2 });
    let cr = CrossRatio::degenerate([1, 2, 3, 4]);
    assert_eq!(satisfied_vertex(&t, &cr, &at).unwrap(), None);
    let at = |l: u32| Some([0, 0, 1, 2, 2][l as usize]);
    assert_eq!(satisfied_vertex(&t, &cr, &at).unwrap(), None);
    let at = |l: u32| Some([0, 0, 1, 1, 2][l as usize]);
    assert_eq!(satisfied_vertex(&t, &cr, &at).unwrap(), Some(1));
}

proptest! {
    #[test]
    fn cr_mult_ignores_the_order(c in 0usize..5, picks in prop::collection::vec((any::<u64>(), 0usize..3), 4)) {
        let star = star_from(c, 3 + c, &picks);
        let base = cr_mult(&star).unwrap();
        for perm in permutations(c) {
            let s = LocalStar { edges: star.edges.clone(), crossratios: perm.iter().map(|&i| star.crossratios[i]).collect() };
            prop_assert_eq!(cr_mult(&s).unwrap(), base);
        }
    }

    #[test]
    fn uncovered_edge_gives_zero(c in 2usize..5, picks in prop::collection::vec((any::<u64>(), 0usize..3), 4)) {
        let star = star_from(c, 2 + c, &picks);
        let covered: BTreeSet<u32> = star.crossratios.iter().flat_map(|p| p.iter().flatten().copied()).collect();
        prop_assert!(covered.len() < star.edges.len());
        prop_assert_eq!(cr_mult(&star).unwrap(), 0);
    }

    #[test]
    fn path_criterion_agrees_for_all_pairings(
        parents in prop::collection::vec(0usize..100, 0..8),
        at in prop::collection::vec(0usize..100, 4),
    ) {
        let nv = parents.len() + 1;
        let edges: Vec<(usize, usize)> = parents.iter().enumerate().map(|(i, &p)| (p % (i + 1), i + 1)).collect();
        let tree = Rooted::new(nv, &edges, 0);
        let at = [at[0] % nv, at[1] % nv, at[2] % nv, at[3] % nv];
        let meets: Vec<Option<usize>> = PAIRINGS.iter().map(|&p| paths_meet_once(&tree, &at, p)).collect();
        match satisfied_at(&tree, &at) {
            Some(v) => prop_assert!(meets.iter().all(|&m| m == Some(v)), "{meets:?} vs {v}"),
            None => prop_assert!(meets.iter().any(|m| m.is_none())),
        }
    }
}
