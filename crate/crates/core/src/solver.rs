//! Backward induction for general Dynkin games.
//!
//! With `L = X ∧ Z` and `U = Y ∨ Z`, the value candidate is
//!
//! ```text
//! V = Z                                   at leaves
//! V = min{U, max{L, E[V_next | node]}}    elsewhere
//! ```
//!
//! which is the value of the standard game on `(L, U, Z)`. It is the value of
//! the original game at every node exactly when `X ∧ Y ≤ V ≤ X ∨ Y` holds
//! everywhere; [`check_assumption`] reports where it does not.

use serde::Serialize;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::tree::{
    conditional_expectation, smax, smin, weighted_sum, AdaptedProcess, FiltrationTree, NodeId,
    StoppingTime, TreeError,
};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("node {0} is a leaf")]
    Leaf(String),
    #[error("Z differs from Y at node {0}")]
    ZNotY(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Standard,
    General,
}

/// A filtration tree with the payoff triple `(X, Y, Z)`.
///
/// Leaf values of `X` and `Y` are irrelevant to the game; construction
/// overwrites them with `Z` and keeps a warning for each node it changed.
#[derive(Debug, Clone, PartialEq)]
pub struct DynkinGame<S> {
    tree: FiltrationTree<S>,
    x: AdaptedProcess<S>,
    y: AdaptedProcess<S>,
    z: AdaptedProcess<S>,
    warnings: Vec<String>,
}

impl<S: Scalar> DynkinGame<S> {
    pub fn new(
        tree: FiltrationTree<S>,
        mut x: AdaptedProcess<S>,
        mut y: AdaptedProcess<S>,
        z: AdaptedProcess<S>,
    ) -> Result<Self, SolverError> {
        for p in [&x, &y, &z] {
            if p.len() != tree.len() {
                return Err(TreeError::LengthMismatch { expected: tree.len(), found: p.len() }.into());
            }
        }
        let mut warnings = Vec::new();
        let leaves: Vec<NodeId> = tree.leaves().collect();
        for n in leaves {
            for (name, p) in [("X", &mut x), ("Y", &mut y)] {
                if p[n] != z[n] {
                    warnings.push(format!(
                        "terminal {name} at leaf {} was {}, replaced by Z = {}",
                        tree.label(n),
                        p[n],
                        z[n]
                    ));
                    p.set(n, z[n].clone());
                }
            }
        }
        Ok(DynkinGame { tree, x, y, z, warnings })
    }

    pub fn from_fn(
        tree: FiltrationTree<S>,
        mut f: impl FnMut(NodeId) -> (S, S, S),
    ) -> Result<Self, SolverError> {
        let (mut xs, mut ys, mut zs) = (Vec::new(), Vec::new(), Vec::new());
        for n in 0..tree.len() {
            let (x, y, z) = f(n);
            xs.push(x);
            ys.push(y);
            zs.push(z);
        }
        let x = AdaptedProcess::new(&tree, xs)?;
        let y = AdaptedProcess::new(&tree, ys)?;
        let z = AdaptedProcess::new(&tree, zs)?;
        Self::new(tree, x, y, z)
    }

    pub fn tree(&self) -> &FiltrationTree<S> {
        &self.tree
    }

    pub fn x(&self) -> &AdaptedProcess<S> {
        &self.x
    }

    pub fn y(&self) -> &AdaptedProcess<S> {
        &self.y
    }

    pub fn z(&self) -> &AdaptedProcess<S> {
        &self.z
    }

    pub fn payoffs(&self) -> (&AdaptedProcess<S>, &AdaptedProcess<S>, &AdaptedProcess<S>) {
        (&self.x, &self.y, &self.z)
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn tolerance(&self) -> f64 {
        self.tree.tolerance()
    }

    pub fn flavor(&self) -> Flavor {
        if check_standard(self) {
            Flavor::Standard
        } else {
            Flavor::General
        }
    }

    /// The standard game on the envelopes `(L, U, Z)`.
    pub fn envelope_game(&self) -> DynkinGame<S> {
        let (l, u) = envelopes(self);
        DynkinGame { tree: self.tree.clone(), x: l, y: u, z: self.z.clone(), warnings: Vec::new() }
    }
}

/// Value candidate with its envelopes and materialized continuation values.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueProcess<S> {
    pub v: AdaptedProcess<S>,
    pub lower: AdaptedProcess<S>,
    pub upper: AdaptedProcess<S>,
    /// `E[V_next | node]`; `None` at leaves.
    pub continuation: Vec<Option<S>>,
}

impl<S: Scalar> ValueProcess<S> {
    pub fn continuation(&self, n: NodeId) -> Option<&S> {
        self.continuation[n].as_ref()
    }
}

/// `L = X ∧ Z` and `U = Y ∨ Z`.
pub fn envelopes<S: Scalar>(game: &DynkinGame<S>) -> (AdaptedProcess<S>, AdaptedProcess<S>) {
    (game.x.zip_with(&game.z, smin), game.y.zip_with(&game.z, smax))
}

pub fn compute_value<S: Scalar>(game: &DynkinGame<S>) -> ValueProcess<S> {
    let tree = &game.tree;
    let (lower, upper) = envelopes(game);
    let mut v = game.z.clone();
    let mut continuation = vec![None; tree.len()];
    for n in (0..tree.len()).rev() {
        if tree.is_leaf(n) {
            continue;
        }
        let c = weighted_sum(tree.children(n), |k| &v[k]);
        v.set(n, smin(&upper[n], &smax(&lower[n], &c)));
        continuation[n] = Some(c);
    }
    ValueProcess { v, lower, upper, continuation }
}

/// First-hitting strategies: `tau*` stops where `V = L`, `sigma*` where `V = U`.
///
/// The flags are global, so the same pair serves every start node.
pub fn optimal_stopping_times<S: Scalar>(
    game: &DynkinGame<S>,
    value: &ValueProcess<S>,
) -> (StoppingTime, StoppingTime) {
    let tol = game.tolerance();
    let tau = StoppingTime::from_fn(&game.tree, |n| value.v[n].tol_eq(&value.lower[n], tol));
    let sigma = StoppingTime::from_fn(&game.tree, |n| value.v[n].tol_eq(&value.upper[n], tol));
    (tau, sigma)
}

/// `X ≤ Z ≤ Y` at every node.
pub fn check_standard<S: Scalar>(game: &DynkinGame<S>) -> bool {
    let tol = game.tolerance();
    (0..game.tree.len()).all(|n| game.x[n].tol_le(&game.z[n], tol) && game.z[n].tol_le(&game.y[n], tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ViolationKind {
    /// `V < X ∧ Y`
    Below,
    /// `V > X ∨ Y`
    Above,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionViolation<S> {
    pub node: NodeId,
    pub kind: ViolationKind,
    pub gap: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport<S> {
    pub holds_everywhere: bool,
    pub violations: Vec<AssumptionViolation<S>>,
}

impl<S: Scalar> AssumptionReport<S> {
    pub fn holds_at(&self, n: NodeId) -> bool {
        self.violations.iter().all(|v| v.node != n)
    }
}

/// Nodes where `X ∧ Y ≤ V ≤ X ∨ Y` fails, with the size of the gap.
pub fn check_assumption<S: Scalar>(game: &DynkinGame<S>, value: &ValueProcess<S>) -> AssumptionReport<S> {
    let tol = game.tolerance();
    let mut violations = Vec::new();
    for n in 0..game.tree.len() {
        let lo = smin(&game.x[n], &game.y[n]);
        let hi = smax(&game.x[n], &game.y[n]);
        let v = &value.v[n];
        if v.tol_lt(&lo, tol) {
            violations.push(AssumptionViolation { node: n, kind: ViolationKind::Below, gap: lo - v.clone() });
        } else if hi.tol_lt(v, tol) {
            violations.push(AssumptionViolation { node: n, kind: ViolationKind::Above, gap: v.clone() - hi });
        }
    }
    AssumptionReport { holds_everywhere: violations.is_empty(), violations }
}

/// Single-period equilibrium conditions at an internal node, one row per
/// stop/continue combination (`P` is the continuation value):
///
/// | tau  | sigma | condition           |
/// |------|-------|---------------------|
/// | stop | stop  | `Y ≤ V = Z ≤ X`     |
/// | stop | wait  | `P ≤ V = X ≤ Z`     |
/// | wait | stop  | `Z ≤ V = Y ≤ P`     |
/// | wait | wait  | `X ≤ V = P ≤ Y`     |
pub fn single_period_conditions<S: Scalar>(
    game: &DynkinGame<S>,
    value: &ValueProcess<S>,
    node: NodeId,
    tau_stops: bool,
    sigma_stops: bool,
) -> Result<bool, SolverError> {
    let p = value.continuation(node).ok_or_else(|| SolverError::Leaf(game.tree.label(node).into()))?;
    let tol = game.tolerance();
    let (x, y, z, v) = (&game.x[node], &game.y[node], &game.z[node], &value.v[node]);
    let chain = |lo: &S, mid: &S, hi: &S| lo.tol_le(v, tol) && v.tol_eq(mid, tol) && mid.tol_le(hi, tol);
    Ok(match (tau_stops, sigma_stops) {
        (true, true) => chain(y, z, x),
        (true, false) => chain(p, x, z),
        (false, true) => chain(z, y, p),
        (false, false) => chain(x, p, y),
    })
}

/// Direct recursion for games with `Z = Y`:
/// `V = Y` where `Y ≤ X`, otherwise `min{Y, max{X, E[V_next]}}`.
pub fn ohtsubo_recursion<S: Scalar>(game: &DynkinGame<S>) -> Result<AdaptedProcess<S>, SolverError> {
    let tree = &game.tree;
    if let Some(n) = (0..tree.len()).find(|&n| game.z[n] != game.y[n]) {
        return Err(SolverError::ZNotY(tree.label(n).to_string()));
    }
    let mut v = game.z.clone();
    for n in (0..tree.len()).rev() {
        if tree.is_leaf(n) {
            continue;
        }
        let (x, y) = (&game.x[n], &game.y[n]);
        let next = if y <= x {
            y.clone()
        } else {
            let e = conditional_expectation(tree, &v, n)?;
            smin(y, &smax(x, &e))
        };
        v.set(n, next);
    }
    Ok(v)
}

/// Largest one-step drift `|V − E[V_next]|` over nodes of the subtree of
/// `start` at which neither `tau` nor `sigma` has stopped yet.
pub fn martingale_deviation<S: Scalar>(
    game: &DynkinGame<S>,
    value: &ValueProcess<S>,
    tau: &StoppingTime,
    sigma: &StoppingTime,
    start: NodeId,
) -> S {
    let tree = &game.tree;
    let mut alive = vec![false; tree.len()];
    alive[start] = true;
    let mut worst = S::zero();
    for n in tree.descendants(start) {
        if !alive[n] || tau.stops(n) || sigma.stops(n) {
            continue;
        }
        let c = value.continuation(n).expect("leaves always stop");
        let d = (value.v[n].clone() - c.clone()).abs();
        if d > worst {
            worst = d;
        }
        for b in tree.children(n) {
            alive[b.child] = true;
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{case_a, case_b, case_c, one_step};
    use crate::scalar::Rational;
    use crate::tree::expected_payoff;

    fn q(n: i64) -> Rational {
        Rational::from_i64(n)
    }

    #[test]
    fn envelopes_examples() {
        let b = case_b();
        let (l, u) = envelopes(&b);
        assert_eq!((l[0].clone(), u[0].clone()), (q(3), q(3)));

        let a = case_a();
        let (l, u) = envelopes(&a);
        assert_eq!(&l, a.x());
        assert_eq!(&u, a.y());

        // Z = Y: L = X ∧ Y, U = Y
        let g = one_step((5, 1, 1), [0, 4]);
        let (l, u) = envelopes(&g);
        assert_eq!(l[0], q(1));
        assert_eq!(&u, g.y());
    }

    #[test]
    fn value_examples() {
        let a = compute_value(&case_a());
        assert_eq!(a.continuation(0), Some(&q(2)));
        assert_eq!(a.v[0], q(2));
        assert_eq!(compute_value(&case_b()).v[0], q(3));
        let c = compute_value(&case_c());
        assert_eq!((c.lower[0].clone(), c.upper[0].clone(), c.v[0].clone()), (q(0), q(4), q(2)));
    }

    #[test]
    fn constant_game_value() {
        let g = one_step((7, 7, 7), [7, 7]);
        let v = compute_value(&g);
        assert!(v.v.values().iter().all(|x| *x == q(7)));
    }

    #[test]
    fn terminal_convention_enforced() {
        let tree = case_a().tree().clone();
        let g = DynkinGame::from_fn(tree, |n| if n == 0 { (q(1), q(5), q(3)) } else { (q(-1), q(9), q(2)) })
            .unwrap();
        assert_eq!(g.x()[1], q(2));
        assert_eq!(g.y()[2], q(2));
        assert_eq!(g.warnings().len(), 4);
    }

    #[test]
    fn hitting_times() {
        let b = case_b();
        let vb = compute_value(&b);
        let (t, s) = optimal_stopping_times(&b, &vb);
        assert!(t.stops(0) && s.stops(0));

        let a = case_a();
        let va = compute_value(&a);
        let (t, s) = optimal_stopping_times(&a, &va);
        assert!(!t.stops(0) && !s.stops(0));
        assert!(t.stops(1) && s.stops(2));

        // standard game with Y ≡ V: sigma* stops immediately
        let g = one_step((0, 2, 1), [2, 2]);
        let vg = compute_value(&g);
        let (_, s) = optimal_stopping_times(&g, &vg);
        assert!(s.stops(0));
    }

    #[test]
    fn standard_check() {
        assert!(check_standard(&case_a()));
        assert!(!check_standard(&case_b()));
        assert!(check_standard(&one_step((2, 2, 2), [1, 3])));
        assert_eq!(case_b().flavor(), Flavor::General);
    }

    #[test]
    fn assumption_examples() {
        let a = case_a();
        assert!(check_assumption(&a, &compute_value(&a)).holds_everywhere);
        let c = case_c();
        let report = check_assumption(&c, &compute_value(&c));
        assert!(!report.holds_everywhere);
        assert_eq!(report.violations.len(), 1);
        let v = &report.violations[0];
        assert_eq!((v.node, v.kind, v.gap.clone()), (0, ViolationKind::Below, q(2)));
        assert!(!report.holds_at(0) && report.holds_at(1));
    }

    #[test]
    fn single_period_examples() {
        let b = case_b();
        assert!(single_period_conditions(&b, &compute_value(&b), 0, true, true).unwrap());
        let a = case_a();
        assert!(single_period_conditions(&a, &compute_value(&a), 0, false, false).unwrap());
        let c = case_c();
        assert!(!single_period_conditions(&c, &compute_value(&c), 0, false, false).unwrap());
        assert!(matches!(single_period_conditions(&c, &compute_value(&c), 1, true, true), Err(SolverError::Leaf(_))));
    }

    #[test]
    fn ohtsubo_examples() {
        let g = one_step((3, 3, 3), [3, 3]);
        assert_eq!(ohtsubo_recursion(&g).unwrap(), g.x().clone());
        let g = one_step((5, 1, 1), [0, 0]);
        assert_eq!(ohtsubo_recursion(&g).unwrap()[0], q(1));
        let g = one_step((1, 5, 5), [0, 4]);
        assert_eq!(ohtsubo_recursion(&g).unwrap()[0], q(2));
        assert!(matches!(ohtsubo_recursion(&case_a()), Err(SolverError::ZNotY(_))));
    }

    #[test]
    fn martingale_examples() {
        let a = case_a();
        let va = compute_value(&a);
        let (t, s) = optimal_stopping_times(&a, &va);
        assert_eq!(martingale_deviation(&a, &va, &t, &s, 0), q(0));

        let b = case_b();
        let vb = compute_value(&b);
        let never = StoppingTime::at_leaves(b.tree());
        assert_eq!(martingale_deviation(&b, &vb, &never, &never, 0), q(1));
    }

    #[test]
    fn equilibrium_payoff_identity_case_a() {
        let a = case_a();
        let va = compute_value(&a);
        let (t, s) = optimal_stopping_times(&a, &va);
        assert_eq!(expected_payoff(&a, &t, &s, 0), va.v[0]);
    }
}
