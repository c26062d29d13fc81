#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use crfloor::maps::{q_int, EndCond, LineCond, MapProblem, MapType};
use crfloor::model::{parse_problem, End, Problem};
use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).expect("fixture")
}

/// Named problems from a fixture holding `[{name, problem}]`, with the
/// problem document text.
pub fn instances(name: &str) -> Vec<(String, Problem, String)> {
    let docs: Vec<Value> = serde_json::from_str(&read_fixture(name)).expect("instance list");
    docs.into_iter()
        .map(|d| {
            let name = d["name"].as_str().expect("name").to_string();
            let text = d["problem"].to_string();
            let problem = parse_problem(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
            (name, problem, text)
        })
        .collect()
}

/// Four-vertex map with one point, a multi line on end 3 and a
/// point-tangency on end 6, together with its ray choice.
pub fn ev_example() -> (MapType, MapProblem, BTreeMap<u32, usize>) {
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
            (1, EndCond::Fix(vec![q_int(0), q_int(0), q_int(0)])),
            (3, EndCond::Line(LineCond::Multi { vertex: [q_int(5), q_int(5)], weight: 1 })),
            (6, EndCond::Fix(vec![q_int(9), q_int(3)])),
        ],
        crossratios: vec![],
    };
    (ty, problem, BTreeMap::from([(3, 2)]))
}

pub const EV_EXAMPLE_MATRIX: [[i64; 6]; 6] = [
    [1, 0, 0, 0, 0, 0],
    [0, 1, 0, 0, 0, 0],
    [0, 0, 1, 0, 0, 0],
    [1, 0, 0, 1, 0, 0],
    [1, 0, 0, 1, 1, 1],
    [0, 1, 0, 0, 0, 1],
];
