mod common;

use crfloor::model::{make_degree, parse_problem, sample_positions, ModelError, ParseError, Rat, EPS, Z_GAP};
use proptest::prelude::*;

use common::read_fixture;

#[test]
fn example_f_labels() {
    let p = parse_problem(&read_fixture("paper-example-F.json")).unwrap();
    assert_eq!(p.n_points, 2);
    let dir = |l: u32| p.degree.end(l).unwrap().dir;
    assert_eq!(dir(3), [0, 0, 1]);
    assert_eq!(dir(9), [0, 0, 1]);
    assert_eq!(dir(8), [0, 0, -2]);
    for l in [10, 11, 12, 19] {
        assert_eq!(dir(l), [-1, 0, 0]);
    }
    for l in [16, 17, 18, 21] {
        assert_eq!(dir(l), [1, 1, 1]);
    }
    assert!(p.check_dimension().pass);
}

#[test]
fn standard_labeling() {
    let d = make_degree(3, 1, &[2], &[1]).unwrap().with_contracted(2);
    let dirs: Vec<[i64; 3]> = d.ends.iter().map(|e| e.dir).collect();
    assert_eq!(
        dirs,
        vec![[0, 0, 0], [0, 0, 0], [1, 1, 1], [-1, 0, 0], [0, -1, 0], [0, 0, -1], [0, 0, -1], [0, 0, 1]]
    );
}

#[test]
fn unbalanced_degree() {
    assert_eq!(make_degree(3, 2, &[1], &[]).unwrap_err(), ModelError::Balance(1));
    assert_eq!(make_degree(4, 1, &[1], &[]).unwrap_err(), ModelError::Dimension(4));
}

#[test]
fn missing_degree_names_the_field() {
    let err = parse_problem(r#"{"dimension":3,"n_points":2}"#).unwrap_err();
    assert!(matches!(err, ParseError::Syntax(_)));
    assert!(err.to_string().contains("degree"), "{err}");
}

#[test]
fn dimension_failure_echoes_both_sides() {
    // One slack condition (a single cross-ratio fits), three supplied.
    let text = r#"{"dimension":3,"degree":{"d":1,"alpha":[2],"beta":[1]},"n_points":2,
        "crossratios":[{"entries":[1,2,6,7]},{"entries":[1,2,6,8]},{"entries":[1,2,7,8]}]}"#;
    let err = parse_problem(text).unwrap_err();
    assert!(err.is_dimension());
    assert!(err.to_string().contains("left 6") && err.to_string().contains("right 7"), "{err}");
}

#[test]
fn rejects_bad_cross_ratio_entries() {
    let text = r#"{"dimension":3,"degree":{"d":1,"alpha":[2],"beta":[1]},"n_points":2,
        "crossratios":[{"entries":[1,2,3,6]},{"entries":[1,2,6,8]}]}"#;
    assert!(parse_problem(text).is_err());
    let repeated = r#"{"dimension":3,"degree":{"d":1,"alpha":[2],"beta":[1]},"n_points":2,
        "crossratios":[{"entries":[1,2,6,6]},{"entries":[1,2,6,8]}]}"#;
    assert!(parse_problem(repeated).is_err());
}

#[test]
fn tangency_on_wrong_side() {
    let text = r#"{"dimension":3,"degree":{"d":1,"alpha":[2],"beta":[1]},"n_points":2,"eta":{"alpha":[8]}}"#;
    let err = parse_problem(text).unwrap_err();
    assert!(err.to_string().contains("wrong side"), "{err}");
}

#[test]
fn tangency_and_cross_ratio_on_one_end_is_flagged() {
    let text = r#"{"dimension":3,"degree":{"d":2,"alpha":[2],"beta":[]},"n_points":2,
        "eta":{"alpha":[9]},"kappa":{"alpha":[10]},"crossratios":[{"entries":[1,2,9,10]}]}"#;
    let p = parse_problem(text).unwrap();
    assert_eq!(p.check_dimension().flagged, vec![9, 10]);
}

#[test]
fn metric_cross_ratio_parses() {
    let text = r#"{"dimension":3,"degree":{"d":1,"alpha":[2],"beta":[1]},"n_points":2,
        "crossratios":[{"entries":[1,2,6,7],"pairing":[[1,2],[6,7]],"length":"3/2"},{"entries":[1,2,6,8]}]}"#;
    let p = parse_problem(text).unwrap();
    assert_eq!(p.crossratios[0].length, Some(Rat::new(3, 2)));
    assert!(!p.crossratios[0].is_degenerate());
    assert!(p.crossratios[1].is_degenerate());
}

proptest! {
    #[test]
    fn standard_degrees_balance(d in 1u32..5, a1 in 0u32..4, a2 in 0u32..3, b1 in 0u32..3) {
        let beta_w = b1 as i64;
        let rest = d as i64 + beta_w - a1 as i64 - 2 * a2 as i64;
        prop_assume!(rest >= 0);
        let alpha = [a1 + rest as u32, a2];
        let deg = make_degree(3, d, &alpha, &[b1]).unwrap();
        let mut sum = [0i64; 3];
        for e in &deg.ends {
            prop_assert!(!e.is_contracted());
            for i in 0..3 {
                sum[i] += e.dir[i];
            }
        }
        prop_assert_eq!(sum, [0, 0, 0]);
        prop_assert!(deg.spans());
        let labels: Vec<u32> = deg.ends.iter().map(|e| e.label).collect();
        prop_assert_eq!(labels, (1..=deg.ends.len() as u32).collect::<Vec<_>>());
    }

    #[test]
    fn positions_pure_and_stretched(seed in any::<u64>(), attempt in 0u32..4) {
        let p = parse_problem(&read_fixture("paper-example-F.json")).unwrap();
        let spec = p.cond_spec();
        let a = sample_positions(&spec, seed, attempt);
        prop_assert_eq!(&a, &sample_positions(&spec, seed, attempt));
        let eps = Rat::from_integer(EPS);
        let zero = Rat::from_integer(0);
        for pos in a.points.values() {
            prop_assert!(pos[0] > zero && pos[0] < eps && pos[1] > zero && pos[1] < eps);
        }
        let heights: Vec<Rat> = a.points.values().map(|p| p[2]).collect();
        for w in heights.windows(2) {
            prop_assert!(w[1] - w[0] > Rat::from_integer(Z_GAP / 2));
        }
    }
}
