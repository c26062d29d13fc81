mod common;

use std::collections::BTreeSet;

use crfloor::floordiagrams::{
    degenerate, enumerate_diagrams, floor_count, labeled_trees, vertex_local_problem, CrossRatioFloorDiagram,
    DiagramContext, DiagramError, MultProvider, MultTable,
};
use crfloor::maps::{direct_count_spec, CountOptions, Mode};
use crfloor::model::{parse_problem, Problem};
use num_bigint::BigInt;

use common::{instances, read_fixture};

const BUDGET: u128 = 1 << 24;

fn problem(text: &str) -> Problem {
    parse_problem(text).unwrap()
}

/// Degree-2 instances small enough for the unpruned search.
fn conics() -> Vec<(String, Problem)> {
    let mut out: Vec<(String, Problem)> = instances("theorem-instances.json")
        .into_iter()
        .chain(instances("one-one-instances.json"))
        .filter(|(n, _, _)| n.starts_with("conic"))
        .map(|(n, p, _)| (n, p))
        .collect();
    out.push((
        "three-points-tangency".into(),
        problem(r#"{"dimension":3,"degree":{"d":2,"alpha":[2]},"n_points":3,"eta":{"alpha":[10]}}"#),
    ));
    out.push((
        "three-points-crs".into(),
        problem(
            r#"{"dimension":3,"degree":{"d":2,"alpha":[2]},"n_points":3,
                "crossratios":[{"entries":[1,2,3,10]},{"entries":[1,2,10,11]}]}"#,
        ),
    ));
    out
}

/// Every tree and every end assignment, filtered by `build` alone.
fn unpruned(ctx: &DiagramContext) -> Vec<CrossRatioFloorDiagram> {
    let (n, k) = (ctx.n, ctx.ends.len());
    let mut out = Vec::new();
    for tree in labeled_trees(n) {
        for code in 0..n.pow(k as u32) {
            let mut c = code;
            let assign: Vec<usize> = (0..k)
                .map(|_| {
                    let v = c % n;
                    c /= n;
                    v
                })
                .collect();
            if let Ok(d) = ctx.build(&tree, &assign) {
                out.push(d);
            }
        }
    }
    out.sort();
    out
}

#[test]
fn cayley_counts() {
    for n in 1..=6usize {
        let trees = labeled_trees(n);
        let expected = if n == 1 { 1 } else { n.pow(n as u32 - 2) };
        assert_eq!(trees.len(), expected);
        assert_eq!(trees.iter().collect::<BTreeSet<_>>().len(), expected);
    }
}

#[test]
fn pruned_enumeration_matches_unpruned() {
    for (name, p) in conics() {
        let ctx = DiagramContext::new(&p).unwrap();
        let got = enumerate_diagrams(&ctx, BUDGET).unwrap();
        assert_eq!(got, unpruned(&ctx), "{name}");
    }
}

#[test]
fn diagram_invariants() {
    let mut all = conics();
    all.extend(instances("theorem-instances.json").into_iter().map(|(n, p, _)| (n, p)));
    for (name, p) in all {
        let ctx = DiagramContext::new(&p).unwrap();
        for d in enumerate_diagrams(&ctx, BUDGET).unwrap() {
            let leak: u32 = d.vertices.iter().map(|v| v.leak).sum();
            assert_eq!(leak as usize, 2 * (p.n_points - 1), "{name}");
            for e in &d.edges {
                assert_eq!(e.into_lower + e.into_upper, 2, "{name}");
                assert!(e.weight > 0);
            }
            for v in 0..d.vertices.len() {
                let local = vertex_local_problem(&ctx, &d, v);
                assert_eq!(local.spec.excess(), 0, "{name}: vertex {v}");
            }
        }
    }
}

#[test]
fn solutions_degenerate_to_enumerated_diagrams() {
    for (name, p, _) in instances("theorem-instances.json").into_iter().filter(|(_, p, _)| p.degree.ends.len() <= 8) {
        let ctx = DiagramContext::new(&p).unwrap();
        let diagrams: BTreeSet<CrossRatioFloorDiagram> = enumerate_diagrams(&ctx, BUDGET).unwrap().into_iter().collect();
        let count = direct_count_spec(&p.cond_spec(), p.seed, Mode::Degenerate, &CountOptions::default()).unwrap();
        for sol in &count.solutions {
            let d = degenerate(&ctx, sol, &count.problem).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(diagrams.contains(&d), "{name}");
        }
    }
}

#[test]
fn tiny_floor_count() {
    let p = problem(&read_fixture("tiny-instance.json"));
    let ctx = DiagramContext::new(&p).unwrap();
    let provider = MultProvider::standard(MultTable::default(), p.seed, CountOptions::default());
    let fc = floor_count(&ctx, &provider, BUDGET).unwrap();
    assert_eq!(fc.total(), BigInt::from(1));
    assert_eq!(fc.diagrams.len(), 1);
}

#[test]
fn metric_cross_ratio_is_rejected() {
    let p = problem(
        r#"{"dimension":3,"degree":{"d":1,"alpha":[2],"beta":[1]},"n_points":2,
            "crossratios":[{"entries":[1,2,6,7],"pairing":[[1,2],[6,7]],"length":"2"},{"entries":[1,2,6,8]}]}"#,
    );
    assert_eq!(DiagramContext::new(&p).unwrap_err(), DiagramError::MetricCrossRatio(0));
}

#[test]
fn budget_refusal() {
    let p = problem(&read_fixture("paper-example-F.json"));
    let ctx = DiagramContext::new(&p).unwrap();
    assert!(matches!(enumerate_diagrams(&ctx, 10), Err(DiagramError::Budget { budget: 10, .. })));
}

#[test]
fn table_parsing() {
    let (t, warnings) = MultTable::parse("# comment\nm3|a\t5\nbad line\nm3|b\tx\n\nm3|c\t-2\n");
    assert_eq!(t.entries.len(), 2);
    assert_eq!(t.entries["m3|a"], BigInt::from(5));
    assert_eq!(t.entries["m3|c"], BigInt::from(-2));
    assert_eq!(warnings.len(), 2);
    let (v1, w) = MultTable::parse(&read_fixture("v1.tab"));
    assert!(w.is_empty());
    assert_eq!(v1.entries.values().collect::<Vec<_>>(), vec![&BigInt::from(5)]);
}
