use std::fs;
use std::path::PathBuf;

use dynkin::io::{parse_game, parse_game_as, AnyGame, IoError};
use dynkin::oracle::{brute_force_minimax, find_nash, OracleConfig, Verdict};
use dynkin::scalar::{Arithmetic, Rational};
use dynkin::tree::{expected_payoff, StoppingTime};
use dynkin::{check_assumption, compute_value, optimal_stopping_times, Scalar};

fn fixture(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", name].iter().collect();
    fs::read_to_string(path).unwrap()
}

fn q(n: i64) -> Rational {
    Rational::from_i64(n)
}

#[test]
fn case_files_match_fixtures() {
    for (name, game) in [
        ("case_a.json", dynkin::fixtures::case_a()),
        ("case_b.json", dynkin::fixtures::case_b()),
        ("case_c.json", dynkin::fixtures::case_c()),
    ] {
        assert_eq!(parse_game_as::<Rational>(&fixture(name)).unwrap().game, game, "{name}");
    }
}

#[test]
fn case_a_values() {
    let g = parse_game_as::<Rational>(&fixture("case_a.json")).unwrap().game;
    let v = compute_value(&g);
    assert_eq!(v.v[0], q(2));
    let (tau, sigma) = optimal_stopping_times(&g, &v);
    assert!(!tau.stops(0) && !sigma.stops(0));
    // both continue: path values 0 and 4
    let wait = StoppingTime::at_leaves(g.tree());
    assert_eq!(expected_payoff(&g, &wait, &wait, 0), q(2));
}

#[test]
fn case_c_expected_payoffs() {
    let g = parse_game_as::<Rational>(&fixture("case_c.json")).unwrap().game;
    let stop = StoppingTime::immediate(g.tree());
    let wait = StoppingTime::at_leaves(g.tree());
    assert_eq!(expected_payoff(&g, &stop, &wait, 0), q(5));
    assert_eq!(expected_payoff(&g, &stop, &stop, 0), q(0));
    assert_eq!(expected_payoff(&g, &wait, &stop, 0), q(4));
}

#[test]
fn three_period_game() {
    let doc = parse_game_as::<Rational>(&fixture("three_period.json")).unwrap();
    let g = &doc.game;
    let starts = doc.start_nodes(|t| vec![t.root()]).unwrap();
    assert_eq!(starts.len(), 2);
    let v = compute_value(g);
    // m1: L = -2, U = 1, E = 1 → V = 1; m2: L = 0, U = 5, E = 19/8 → V = 19/8
    // n0: E = 1/3 + 2/3 · 19/8 = 23/12, L = 2, U = 6 → V = 2
    let m1 = g.tree().node_id("m1").unwrap();
    let m2 = g.tree().node_id("m2").unwrap();
    assert_eq!(v.v[m1], q(1));
    assert_eq!(v.v[m2], Rational::from_ratio(19, 8));
    assert_eq!(v.v[0], q(2));
    // at m1 V = 1 lies within [X ∧ Y, X ∨ Y] = [1, 7]
    assert!(check_assumption(g, &v).holds_everywhere);
    for n in starts {
        let r = brute_force_minimax(g, &v, n, &OracleConfig::default()).unwrap();
        assert!(r.has_value);
        assert_eq!(r.minimax, v.v[n]);
        assert!(matches!(find_nash(g, &v, n, &OracleConfig::default()).verdict, Verdict::NashExists));
    }
}

#[test]
fn float_file() {
    let game = parse_game(&fixture("float_game.json")).unwrap();
    assert_eq!(game.mode(), Arithmetic::Float);
    let AnyGame::Float(doc) = game else { unreachable!() };
    let v = compute_value(&doc.game);
    // E = 0.3 · 2.5 − 0.7 · 0.1 = 0.68; L = 0.25, U = 1.75
    assert!((v.v[0] - 0.68).abs() < 1e-12);
}

#[test]
fn bad_probabilities_are_reported_with_the_node() {
    match parse_game(&fixture("bad_probability.json")) {
        Err(IoError::Validation(r)) => assert_eq!(r.to_string(), "probabilities sum 1.1 ≠ 1 at node n0"),
        other => panic!("unexpected {other:?}"),
    }
}
