//! Reference computations for the tests, written independently of the
//! library's backward passes.

#![allow(dead_code)]

use dynkin::scalar::Rational;
use dynkin::tree::{FiltrationTree, NodeId, StoppingTime};
use dynkin::{DynkinGame, Scalar};

/// Every root-to-leaf path below `start`, with its conditional probability.
pub fn paths(tree: &FiltrationTree<Rational>, start: NodeId) -> Vec<(Vec<NodeId>, Rational)> {
    fn walk(
        tree: &FiltrationTree<Rational>,
        n: NodeId,
        prefix: &mut Vec<NodeId>,
        p: Rational,
        out: &mut Vec<(Vec<NodeId>, Rational)>,
    ) {
        prefix.push(n);
        if tree.children(n).is_empty() {
            out.push((prefix.clone(), p));
        } else {
            for b in tree.children(n) {
                walk(tree, b.child, prefix, p.clone() * b.probability.clone(), out);
            }
        }
        prefix.pop();
    }
    let mut out = Vec::new();
    walk(tree, start, &mut Vec::new(), Rational::from_i64(1), &mut out);
    out
}

/// Payoff along one path: whoever stops first, `Z` on a tie.
pub fn path_payoff(
    (x, y, z): (&[Rational], &[Rational], &[Rational]),
    path: &[NodeId],
    tau: &StoppingTime,
    sigma: &StoppingTime,
) -> Rational {
    for &n in path {
        match (tau.stops(n), sigma.stops(n)) {
            (true, true) => return z[n].clone(),
            (true, false) => return x[n].clone(),
            (false, true) => return y[n].clone(),
            (false, false) => {}
        }
    }
    unreachable!("leaves always stop")
}

/// `E[R(tau, sigma) | start]` by summing over paths.
pub fn path_expectation(game: &DynkinGame<Rational>, tau: &StoppingTime, sigma: &StoppingTime, start: NodeId) -> Rational {
    let (x, y, z) = game.payoffs();
    let xyz = (x.values(), y.values(), z.values());
    paths(game.tree(), start)
        .into_iter()
        .map(|(path, p)| p * path_payoff(xyz, &path, tau, sigma))
        .fold(Rational::from_i64(0), |a, b| a + b)
}

/// Minimax by a one-pass recursion: the min-player picks stop/continue node
/// by node, the max-player answers.
pub fn fast_minimax(game: &DynkinGame<Rational>, n: NodeId) -> Rational {
    let (x, y, z) = game.payoffs();
    let kids = game.tree().children(n);
    if kids.is_empty() {
        return z[n].clone();
    }
    let cont = kids
        .iter()
        .map(|b| b.probability.clone() * fast_minimax(game, b.child))
        .fold(Rational::from_i64(0), |a, b| a + b);
    let stop = max(&y[n], &z[n]);
    let wait = max(&x[n], &cont);
    min(&stop, &wait)
}

pub fn fast_maximin(game: &DynkinGame<Rational>, n: NodeId) -> Rational {
    let (x, y, z) = game.payoffs();
    let kids = game.tree().children(n);
    if kids.is_empty() {
        return z[n].clone();
    }
    let cont = kids
        .iter()
        .map(|b| b.probability.clone() * fast_maximin(game, b.child))
        .fold(Rational::from_i64(0), |a, b| a + b);
    let stop = min(&x[n], &z[n]);
    let wait = min(&y[n], &cont);
    max(&stop, &wait)
}

pub fn min(a: &Rational, b: &Rational) -> Rational {
    if a < b { a.clone() } else { b.clone() }
}

pub fn max(a: &Rational, b: &Rational) -> Rational {
    if a > b { a.clone() } else { b.clone() }
}
