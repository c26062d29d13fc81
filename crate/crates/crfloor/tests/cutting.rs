mod common;

use std::collections::BTreeSet;

use crfloor::cutting::{
    check_cut_identity, cut_elevator, cut_label, decorate, decorations, floors_of, graphical_mult_sum, CutError,
};
use crfloor::maps::{direct_count_spec, CountOptions, DegenerateKind, DirectCount, Mode};
use proptest::prelude::*;

use common::instances;

use DegenerateKind::{L01, L10};

fn small_counts() -> Vec<(String, DirectCount)> {
    instances("theorem-instances.json")
        .into_iter()
        .filter(|(_, p, _)| p.degree.ends.len() <= 8)
        .map(|(name, p, _)| {
            let c = direct_count_spec(&p.cond_spec(), p.seed, Mode::Degenerate, &CountOptions::default()).unwrap();
            (name, c)
        })
        .collect()
}

#[test]
fn cut_identities_on_small_instances() {
    let mut cuts = 0;
    for (name, c) in small_counts() {
        for sol in &c.solutions {
            let floors = floors_of(&sol.map, &c.problem).unwrap();
            for el in &floors.elevators {
                let r = check_cut_identity(&sol.map, &c.problem, el.edge).unwrap();
                assert!(r.identity_holds && r.relation_holds, "{name}: {r:?}");
                cuts += 1;
            }
            assert_eq!(graphical_mult_sum(&sol.map, &c.problem).unwrap(), sol.mult, "{name}");
        }
    }
    assert!(cuts > 0);
}

#[test]
fn pieces_keep_vertex_positions() {
    for (name, c) in small_counts() {
        for sol in &c.solutions {
            let full = sol.map.vertex_positions();
            let floors = floors_of(&sol.map, &c.problem).unwrap();
            for (k, el) in floors.elevators.iter().enumerate() {
                let cut = cut_elevator(&sol.map, &c.problem, el.edge, [L10, L01]).unwrap();
                assert_eq!(cut.label, cut_label(&c.problem, k));
                let mut seen = BTreeSet::new();
                for piece in [&cut.lower, &cut.upper] {
                    let pos = piece.map.vertex_positions();
                    for (i, &v) in piece.vertices.iter().enumerate() {
                        assert_eq!(pos[i], full[v], "{name}: vertex {v}");
                        seen.insert(v);
                    }
                    assert_eq!(piece.problem.ends.iter().filter(|e| e.label == cut.label).count(), 1);
                }
                assert_eq!(seen.len(), sol.map.ty.nv);
                assert!(cut.lower.vertices.contains(&el.lower_vertex));
                assert!(cut.upper.vertices.contains(&el.upper_vertex));
            }
        }
    }
}

#[test]
fn non_elevator_is_rejected() {
    let (_, c) = small_counts().into_iter().find(|(_, c)| !c.solutions.is_empty()).unwrap();
    let sol = &c.solutions[0];
    let floors = floors_of(&sol.map, &c.problem).unwrap();
    let elevators: BTreeSet<usize> = floors.elevators.iter().map(|e| e.edge).collect();
    if let Some(e) = (0..sol.map.ty.edges.len()).find(|e| !elevators.contains(e)) {
        assert_eq!(cut_elevator(&sol.map, &c.problem, e, [L10, L01]).unwrap_err(), CutError::NotAnElevator(e));
    }
}

#[test]
fn example_floor_graph_signs() {
    let decs = decorate(4, &[(0, 1, true), (1, 2, true), (2, 3, false)]);
    let signs: Vec<i32> = decs.iter().map(|d| d.sign()).collect();
    assert_eq!(signs, vec![1, -1, -1, 1]);
    assert_eq!(decs[0].above, vec![vec![L10], vec![L10], vec![], vec![]]);
    assert_eq!(decs[0].below, vec![vec![], vec![L01], vec![L01], vec![]]);
    assert_eq!(decs[3].above, vec![vec![L01], vec![L01], vec![], vec![]]);
    assert_eq!(decs[3].below, vec![vec![], vec![L10], vec![L10], vec![]]);
}

proptest! {
    #[test]
    fn decorations_are_all_bit_patterns(k in 0usize..9) {
        let d = decorations(k);
        prop_assert_eq!(d.len(), 1 << k);
        let distinct: BTreeSet<&Vec<bool>> = d.iter().map(|(b, _)| b).collect();
        prop_assert_eq!(distinct.len(), 1 << k);
        for (bits, u) in &d {
            prop_assert_eq!(bits.len(), k);
            prop_assert_eq!(*u as usize, bits.iter().filter(|&&b| b).count());
        }
    }
}
