//! Small hand-checkable games used throughout the tests and examples.
//!
//! All three share one tree: a root with two equiprobable leaves whose
//! terminal values are 0 and 4, so the continuation value at the root is 2.

use crate::scalar::{Rational, Scalar};
use crate::solver::DynkinGame;
use crate::tree::{FiltrationTree, NodeSpec, TreeSpec};

/// Root plus two equiprobable leaves `u`, `d`, in rational mode.
pub fn one_step_tree() -> FiltrationTree<Rational> {
    let half = Some(Rational::from_ratio(1, 2));
    FiltrationTree::new(TreeSpec {
        horizon: 1,
        tolerance: 0.0,
        nodes: vec![
            NodeSpec { id: "n0".into(), time: 0, parent: None, probability: None },
            NodeSpec { id: "u".into(), time: 1, parent: Some("n0".into()), probability: half.clone() },
            NodeSpec { id: "d".into(), time: 1, parent: Some("n0".into()), probability: half },
        ],
    })
    .expect("static tree")
}

/// One-step game with root payoffs `(x, y, z)` and leaf values `leaves`.
pub fn one_step(root: (i64, i64, i64), leaves: [i64; 2]) -> DynkinGame<Rational> {
    let q = Rational::from_i64;
    DynkinGame::from_fn(one_step_tree(), |n| match n {
        0 => (q(root.0), q(root.1), q(root.2)),
        k => {
            let v = q(leaves[k - 1]);
            (v.clone(), v.clone(), v)
        }
    })
    .expect("static game")
}

/// Standard ordering at the root: `X=1, Y=5, Z=3`. Value 2, both players wait.
pub fn case_a() -> DynkinGame<Rational> {
    one_step((1, 5, 3), [0, 4])
}

/// `X=5, Y=1, Z=3`: `L = U = 3` at the root, both players stop.
pub fn case_b() -> DynkinGame<Rational> {
    one_step((5, 1, 3), [0, 4])
}

/// `X=5, Y=4, Z=0`: value candidate 2 lies below `X ∧ Y = 4`; no equilibrium.
pub fn case_c() -> DynkinGame<Rational> {
    one_step((5, 4, 0), [0, 4])
}
