mod common;

use crfloor::flows::{validate_condition_flow, FlowTree};
use crfloor::maps::{
    detect_floors, direct_count_spec, ev_matrix_for, map_mult, solution_flows, CountOptions, DirectCount, EndCond,
    MapError, Mode,
};
use crfloor::model::{parse_problem, Problem};
use num_bigint::BigInt;
use num_traits::{Signed, Zero};

use common::{ev_example, instances, read_fixture, EV_EXAMPLE_MATRIX};

/// Instances with at most eight ends, cheap enough for every run.
fn small_instances() -> Vec<(String, Problem)> {
    let mut out = vec![("tiny".to_string(), parse_problem(&read_fixture("tiny-instance.json")).unwrap())];
    out.extend(
        instances("theorem-instances.json")
            .into_iter()
            .filter(|(_, p, _)| p.degree.ends.len() <= 8)
            .map(|(n, p, _)| (n, p)),
    );
    out
}

fn count(problem: &Problem, seed: u64) -> DirectCount {
    direct_count_spec(&problem.cond_spec(), seed, Mode::Degenerate, &CountOptions::default()).unwrap()
}

#[test]
fn ev_example_matrix() {
    let (ty, problem, rays) = ev_example();
    let ev = ev_matrix_for(&ty, &problem, &rays).unwrap();
    assert_eq!(ev.rows, EV_EXAMPLE_MATRIX.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
    assert_eq!(ev.det().abs(), BigInt::from(1));
}

#[test]
fn tiny_counts_one() {
    let p = parse_problem(&read_fixture("tiny-instance.json")).unwrap();
    let c = count(&p, p.seed);
    assert_eq!(c.total, BigInt::from(1));
    assert_eq!(c.solutions.len(), 1);
}

#[test]
fn example_f_is_refused() {
    let p = parse_problem(&read_fixture("paper-example-F.json")).unwrap();
    let err = direct_count_spec(&p.cond_spec(), 0, Mode::Degenerate, &CountOptions::default()).unwrap_err();
    assert_eq!(err, MapError::TooManyEnds { ends: 21, bound: 10 });
}

#[test]
fn solutions_are_well_formed() {
    for (name, p) in small_instances() {
        let c = count(&p, p.seed);
        for sol in &c.solutions {
            let map = &sol.map;
            let ty = &map.ty;
            assert!(map.lengths.iter().all(|l| l.is_positive()), "{name}: nonpositive length");
            assert!(!sol.mult.is_zero());
            assert_eq!(map_mult(map, &c.problem).unwrap(), sol.mult, "{name}");

            // Edge directions re-derived as the sum of the ends beyond the
            // second vertex.
            let tree = FlowTree { nv: ty.nv, edges: ty.edges.clone(), ends: ty.end_vertex.clone() };
            for (e, &(_, b)) in ty.edges.iter().enumerate() {
                let side = tree.side(e, b);
                let mut sum = [0i64; 3];
                for (i, end) in c.problem.ends.iter().enumerate() {
                    if side[ty.end_vertex[i]] {
                        (0..3).for_each(|k| sum[k] += end.dir[k]);
                    }
                }
                assert_eq!(map.dirs[e], sum, "{name}: edge {e}");
            }

            let pos = map.vertex_positions();
            for (l, cond) in &c.problem.conds {
                if let EndCond::Fix(v) = cond {
                    let at = ty.end_vertex[c.problem.end_index(*l).unwrap()];
                    assert_eq!(&pos[at][..v.len()], &v[..], "{name}: end {l}");
                }
            }

            let fg = solution_flows(ty, &c.problem).with_leak(vec![3; ty.nv]);
            assert!(validate_condition_flow(&fg, 3).valid(), "{name}: flow");

            let floors = detect_floors(map, &c.problem).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(floors.floors.len(), p.n_points);
        }
    }
}

#[test]
fn counts_ignore_the_seed() {
    for (name, p) in small_instances().into_iter().take(6) {
        let base = count(&p, p.seed).total;
        for s in [1000, 2000] {
            assert_eq!(count(&p, p.seed + s).total, base, "{name} seed +{s}");
        }
    }
}
