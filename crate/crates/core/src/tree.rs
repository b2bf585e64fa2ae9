//! Finite filtration trees, adapted processes and stopping times.
//!
//! A node at depth `t` is an atom of the sigma-field at time `t`, so an
//! adapted process is simply one value per node and a stopping time is a
//! stop/continue flag per node: the realized time on a path is the first node
//! whose flag is set. Leaves always stop.
//!
//! Nodes are stored in non-decreasing time order with the root at index 0,
//! which lets every backward pass walk indices in reverse.
//!
//! Recombining lattices reuse the same representation with several parents
//! per node. Operations that need genuine paths (path payoffs, stopping-time
//! enumeration) reject them with [`TreeError::NotATree`].

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::scalar::{self, Scalar};
use crate::solver::DynkinGame;

pub type NodeId = usize;

/// Default upper bound on the number of stopping times an enumeration may produce.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("invalid tree: {0}")]
    Invalid(ValidationReport),
    #[error("node {0} has no successors")]
    NoSuccessors(String),
    #[error("operation requires a tree; this filtration is a recombining lattice")]
    NotATree,
    #[error("node {0} is not a leaf")]
    NotALeaf(String),
    #[error("node {node} is not in the subtree of {start}")]
    NotInSubtree { node: String, start: String },
    #[error("enumeration cap {cap} exceeded: subtree has {count} stopping times")]
    CapExceeded { cap: u128, count: u128 },
    #[error("unknown node id `{0}`")]
    UnknownNode(String),
    #[error("process has {found} values, tree has {expected} nodes")]
    LengthMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec<S> {
    pub id: String,
    pub time: usize,
    pub parent: Option<String>,
    /// Probability of the branch from the parent; ignored for the root.
    pub probability: Option<S>,
}

/// Unvalidated tree description, as read from a file or built by hand.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSpec<S> {
    pub horizon: usize,
    pub tolerance: f64,
    pub nodes: Vec<NodeSpec<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    DuplicateId { id: String },
    UnknownParent { id: String, parent: String },
    RootCount { roots: Vec<String> },
    RootTime { id: String, time: usize },
    TimeStep { id: String, time: usize, parent_time: usize },
    BeyondHorizon { id: String, time: usize, horizon: usize },
    MissingProbability { id: String },
    NonPositiveProbability { id: String, probability: String },
    ProbabilitySum { id: String, sum: String },
    Childless { id: String, time: usize, horizon: usize },
}

impl Violation {
    /// Node the violation is attached to, if any.
    pub fn node(&self) -> Option<&str> {
        match self {
            Violation::Empty | Violation::RootCount { .. } => None,
            Violation::DuplicateId { id }
            | Violation::UnknownParent { id, .. }
            | Violation::RootTime { id, .. }
            | Violation::TimeStep { id, .. }
            | Violation::BeyondHorizon { id, .. }
            | Violation::MissingProbability { id }
            | Violation::NonPositiveProbability { id, .. }
            | Violation::ProbabilitySum { id, .. }
            | Violation::Childless { id, .. } => Some(id),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "tree has no nodes"),
            Violation::DuplicateId { id } => write!(f, "duplicate node id {id}"),
            Violation::UnknownParent { id, parent } => {
                write!(f, "node {id} references unknown parent {parent}")
            }
            Violation::RootCount { roots } => {
                write!(f, "expected exactly one root, found {} ({})", roots.len(), roots.join(", "))
            }
            Violation::RootTime { id, time } => write!(f, "root {id} has time {time} ≠ 0"),
            Violation::TimeStep { id, time, parent_time } => write!(
                f,
                "node {id} has time {time} but its parent has time {parent_time}"
            ),
            Violation::BeyondHorizon { id, time, horizon } => {
                write!(f, "node {id} has time {time} beyond horizon {horizon}")
            }
            Violation::MissingProbability { id } => {
                write!(f, "node {id} has no branch probability")
            }
            Violation::NonPositiveProbability { id, probability } => {
                write!(f, "branch probability {probability} into node {id} is not in (0,1]")
            }
            Violation::ProbabilitySum { id, sum } => {
                write!(f, "probabilities sum {sum} ≠ 1 at node {id}")
            }
            Violation::Childless { id, time, horizon } => write!(
                f,
                "node {id} at time {time} < horizon {horizon} has no children"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks every structural invariant of a tree description and reports all
/// violations found.
pub fn validate_tree<S: Scalar>(spec: &TreeSpec<S>) -> ValidationReport {
    let mut violations = Vec::new();
    if spec.nodes.is_empty() {
        violations.push(Violation::Empty);
        return ValidationReport { violations };
    }

    let mut by_id: HashMap<&str, &NodeSpec<S>> = HashMap::new();
    for node in &spec.nodes {
        if by_id.insert(node.id.as_str(), node).is_some() {
            violations.push(Violation::DuplicateId { id: node.id.clone() });
        }
    }

    let roots: Vec<String> =
        spec.nodes.iter().filter(|n| n.parent.is_none()).map(|n| n.id.clone()).collect();
    if roots.len() != 1 {
        violations.push(Violation::RootCount { roots: roots.clone() });
    }

    let zero = S::zero();
    let one = S::one();
    let mut children: HashMap<&str, Vec<&NodeSpec<S>>> = HashMap::new();
    for node in &spec.nodes {
        if node.time > spec.horizon {
            violations.push(Violation::BeyondHorizon {
                id: node.id.clone(),
                time: node.time,
                horizon: spec.horizon,
            });
        }
        match &node.parent {
            None => {
                if node.time != 0 {
                    violations.push(Violation::RootTime { id: node.id.clone(), time: node.time });
                }
            }
            Some(parent) => {
                match by_id.get(parent.as_str()) {
                    None => violations.push(Violation::UnknownParent {
                        id: node.id.clone(),
                        parent: parent.clone(),
                    }),
                    Some(p) => {
                        if node.time != p.time + 1 {
                            violations.push(Violation::TimeStep {
                                id: node.id.clone(),
                                time: node.time,
                                parent_time: p.time,
                            });
                        }
                        children.entry(p.id.as_str()).or_default().push(node);
                    }
                }
                match &node.probability {
                    None => violations.push(Violation::MissingProbability { id: node.id.clone() }),
                    Some(p) if *p <= zero || *p > one && !p.tol_le(&one, spec.tolerance) => {
                        violations.push(Violation::NonPositiveProbability {
                            id: node.id.clone(),
                            probability: p.to_string(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
    }

    for node in &spec.nodes {
        match children.get(node.id.as_str()) {
            Some(kids) => {
                let mut sum = S::zero();
                let mut complete = true;
                for k in kids {
                    match &k.probability {
                        Some(p) => sum = sum + p.clone(),
                        None => complete = false,
                    }
                }
                if complete && !sum.tol_eq(&one, spec.tolerance) {
                    violations.push(Violation::ProbabilitySum {
                        id: node.id.clone(),
                        sum: sum.to_string(),
                    });
                }
            }
            None => {
                if node.time < spec.horizon {
                    violations.push(Violation::Childless {
                        id: node.id.clone(),
                        time: node.time,
                        horizon: spec.horizon,
                    });
                }
            }
        }
    }

    ValidationReport { violations }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch<S> {
    pub child: NodeId,
    pub probability: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node<S> {
    pub id: String,
    pub time: usize,
    pub parent: Option<NodeId>,
    pub children: Vec<Branch<S>>,
}

/// A validated finite filtration: root at index 0, nodes in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct FiltrationTree<S> {
    nodes: Vec<Node<S>>,
    horizon: usize,
    tolerance: f64,
    recombining: bool,
    index: HashMap<String, NodeId>,
}

impl<S: Scalar> FiltrationTree<S> {
    pub fn new(spec: TreeSpec<S>) -> Result<Self, TreeError> {
        let report = validate_tree(&spec);
        if !report.is_ok() {
            return Err(TreeError::Invalid(report));
        }
        let mut order: Vec<usize> = (0..spec.nodes.len()).collect();
        order.sort_by_key(|&i| spec.nodes[i].time);

        let index: HashMap<String, NodeId> =
            order.iter().enumerate().map(|(pos, &i)| (spec.nodes[i].id.clone(), pos)).collect();
        let mut nodes: Vec<Node<S>> = order
            .iter()
            .map(|&i| {
                let n = &spec.nodes[i];
                Node {
                    id: n.id.clone(),
                    time: n.time,
                    parent: n.parent.as_ref().map(|p| index[p]),
                    children: Vec::new(),
                }
            })
            .collect();
        for &i in &order {
            let n = &spec.nodes[i];
            if let (Some(parent), Some(p)) = (&n.parent, &n.probability) {
                let child = index[&n.id];
                nodes[index[parent]].children.push(Branch { child, probability: p.clone() });
            }
        }
        Ok(FiltrationTree { nodes, horizon: spec.horizon, tolerance: spec.tolerance, recombining: false, index })
    }

    /// Builds a recombining lattice from pre-ordered nodes. The caller guarantees
    /// time order, a single root at index 0 and valid branch probabilities.
    pub(crate) fn recombining(nodes: Vec<Node<S>>, horizon: usize, tolerance: f64) -> Self {
        let index = nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        FiltrationTree { nodes, horizon, tolerance, recombining: true, index }
    }

    /// Inverse of [`FiltrationTree::new`] for plain trees.
    pub fn to_spec(&self) -> Result<TreeSpec<S>, TreeError> {
        if self.recombining {
            return Err(TreeError::NotATree);
        }
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                let (parent, probability) = match n.parent {
                    Some(p) => {
                        let branch = self.nodes[p]
                            .children
                            .iter()
                            .find(|b| self.nodes[b.child].id == n.id)
                            .expect("parent lists child");
                        (Some(self.nodes[p].id.clone()), Some(branch.probability.clone()))
                    }
                    None => (None, None),
                };
                NodeSpec { id: n.id.clone(), time: n.time, parent, probability }
            })
            .collect();
        Ok(TreeSpec { horizon: self.horizon, tolerance: self.tolerance, nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn is_recombining(&self) -> bool {
        self.recombining
    }

    pub fn nodes(&self) -> &[Node<S>] {
        &self.nodes
    }

    pub fn time(&self, n: NodeId) -> usize {
        self.nodes[n].time
    }

    pub fn label(&self, n: NodeId) -> &str {
        &self.nodes[n].id
    }

    pub fn children(&self, n: NodeId) -> &[Branch<S>] {
        &self.nodes[n].children
    }

    pub fn parent(&self, n: NodeId) -> Option<NodeId> {
        self.nodes[n].parent
    }

    pub fn is_leaf(&self, n: NodeId) -> bool {
        self.nodes[n].children.is_empty()
    }

    pub fn node_id(&self, label: &str) -> Result<NodeId, TreeError> {
        self.index.get(label).copied().ok_or_else(|| TreeError::UnknownNode(label.to_string()))
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.len()).filter(|&n| self.is_leaf(n))
    }

    /// All nodes reachable from `start` (inclusive), in ascending index order.
    pub fn descendants(&self, start: NodeId) -> Vec<NodeId> {
        let mut seen = vec![false; self.len()];
        seen[start] = true;
        let mut out = Vec::new();
        // indices only grow along edges, so a sweep in index order suffices
        for n in start..self.len() {
            if !seen[n] {
                continue;
            }
            out.push(n);
            for b in &self.nodes[n].children {
                seen[b.child] = true;
            }
        }
        out
    }

    /// Path `start, ..., leaf`.
    pub fn path(&self, start: NodeId, leaf: NodeId) -> Result<Vec<NodeId>, TreeError> {
        if self.recombining {
            return Err(TreeError::NotATree);
        }
        if !self.is_leaf(leaf) {
            return Err(TreeError::NotALeaf(self.label(leaf).to_string()));
        }
        let mut path = vec![leaf];
        let mut cur = leaf;
        while cur != start {
            match self.nodes[cur].parent {
                Some(p) => {
                    cur = p;
                    path.push(p);
                }
                None => {
                    return Err(TreeError::NotInSubtree {
                        node: self.label(leaf).to_string(),
                        start: self.label(start).to_string(),
                    })
                }
            }
        }
        path.reverse();
        Ok(path)
    }

    /// Leaves under `start` with their probabilities conditional on `start`.
    pub fn leaf_paths(&self, start: NodeId) -> Result<Vec<(NodeId, S)>, TreeError> {
        if self.recombining {
            return Err(TreeError::NotATree);
        }
        let mut out = Vec::new();
        let mut stack = vec![(start, S::one())];
        while let Some((n, p)) = stack.pop() {
            if self.is_leaf(n) {
                out.push((n, p));
            } else {
                for b in self.nodes[n].children.iter().rev() {
                    stack.push((b.child, p.clone() * b.probability.clone()));
                }
            }
        }
        Ok(out)
    }
}

/// One value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess<S> {
    values: Vec<S>,
}

impl<S: Scalar> AdaptedProcess<S> {
    pub fn new(tree: &FiltrationTree<S>, values: Vec<S>) -> Result<Self, TreeError> {
        if values.len() != tree.len() {
            return Err(TreeError::LengthMismatch { expected: tree.len(), found: values.len() });
        }
        Ok(AdaptedProcess { values })
    }

    pub fn from_fn(tree: &FiltrationTree<S>, f: impl FnMut(NodeId) -> S) -> Self {
        AdaptedProcess { values: (0..tree.len()).map(f).collect() }
    }

    pub fn constant(tree: &FiltrationTree<S>, c: S) -> Self {
        Self::from_fn(tree, |_| c.clone())
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn set(&mut self, n: NodeId, v: S) {
        self.values[n] = v;
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(&S, &S) -> S) -> Self {
        AdaptedProcess { values: self.values.iter().zip(&other.values).map(|(a, b)| f(a, b)).collect() }
    }
}

impl<S> std::ops::Index<NodeId> for AdaptedProcess<S> {
    type Output = S;

    fn index(&self, n: NodeId) -> &S {
        &self.values[n]
    }
}

/// Stop/continue flag per node; leaves always stop.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StoppingTime {
    stop: Vec<bool>,
}

impl StoppingTime {
    pub fn from_fn<S: Scalar>(tree: &FiltrationTree<S>, mut f: impl FnMut(NodeId) -> bool) -> Self {
        StoppingTime { stop: (0..tree.len()).map(|n| tree.is_leaf(n) || f(n)).collect() }
    }

    /// Stops at the first node reached.
    pub fn immediate<S: Scalar>(tree: &FiltrationTree<S>) -> Self {
        Self::from_fn(tree, |_| true)
    }

    /// Never stops before a leaf.
    pub fn at_leaves<S: Scalar>(tree: &FiltrationTree<S>) -> Self {
        Self::from_fn(tree, |_| false)
    }

    pub fn stops(&self, n: NodeId) -> bool {
        self.stop[n]
    }

    pub fn flags(&self) -> &[bool] {
        &self.stop
    }

    pub fn stop_set(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.stop.iter().enumerate().filter(|(_, s)| **s).map(|(n, _)| n)
    }

    /// Pointwise minimum of two stopping times: stop where either stops.
    pub fn earliest(&self, other: &StoppingTime) -> StoppingTime {
        StoppingTime { stop: self.stop.iter().zip(&other.stop).map(|(a, b)| *a || *b).collect() }
    }

    /// Realized stopping node on the path from `start` to `leaf`.
    pub fn realized<S: Scalar>(
        &self,
        tree: &FiltrationTree<S>,
        start: NodeId,
        leaf: NodeId,
    ) -> Result<NodeId, TreeError> {
        let path = tree.path(start, leaf)?;
        Ok(*path.iter().find(|&&n| self.stop[n]).expect("leaves always stop"))
    }

    /// Marks the nodes at which this stopping time, started at `start`,
    /// actually stops on some path (the first flagged node along it).
    pub fn first_hits<S: Scalar>(&self, tree: &FiltrationTree<S>, start: NodeId) -> Vec<bool> {
        let mut alive = vec![false; tree.len()];
        let mut hit = vec![false; tree.len()];
        alive[start] = true;
        for n in tree.descendants(start) {
            if !alive[n] {
                continue;
            }
            if self.stop[n] {
                hit[n] = true;
            } else {
                for b in tree.children(n) {
                    alive[b.child] = true;
                }
            }
        }
        hit
    }
}

/// One-step conditional expectation: the probability-weighted sum over children.
pub fn conditional_expectation<S: Scalar>(
    tree: &FiltrationTree<S>,
    process: &AdaptedProcess<S>,
    node: NodeId,
) -> Result<S, TreeError> {
    let kids = tree.children(node);
    if kids.is_empty() {
        return Err(TreeError::NoSuccessors(tree.label(node).to_string()));
    }
    Ok(weighted_sum(kids, |c| &process[c]))
}

pub(crate) fn weighted_sum<'a, S: Scalar>(kids: &[Branch<S>], value: impl Fn(NodeId) -> &'a S) -> S {
    kids.iter().fold(S::zero(), |acc, b| acc + b.probability.clone() * value(b.child).clone())
}

/// Payoff `R(tau, sigma)` along the path from `start` to `leaf`, for an
/// arbitrary payoff triple.
pub fn realized_payoff_of<S: Scalar>(
    tree: &FiltrationTree<S>,
    (x, y, z): (&AdaptedProcess<S>, &AdaptedProcess<S>, &AdaptedProcess<S>),
    tau: &StoppingTime,
    sigma: &StoppingTime,
    start: NodeId,
    leaf: NodeId,
) -> Result<S, TreeError> {
    let path = tree.path(start, leaf)?;
    for &n in &path {
        match (tau.stops(n), sigma.stops(n)) {
            (true, true) => return Ok(z[n].clone()),
            (true, false) => return Ok(x[n].clone()),
            (false, true) => return Ok(y[n].clone()),
            (false, false) => {}
        }
    }
    unreachable!("leaves always stop")
}

/// `R(tau, sigma)` on the root-to-`leaf` path: X where tau stops first,
/// Y where sigma stops first, Z on simultaneous stops.
pub fn realized_payoff<S: Scalar>(
    game: &DynkinGame<S>,
    tau: &StoppingTime,
    sigma: &StoppingTime,
    leaf: NodeId,
) -> Result<S, TreeError> {
    realized_payoff_of(game.tree(), game.payoffs(), tau, sigma, game.tree().root(), leaf)
}

/// Conditional expectation of the payoff at `node`, by backward induction
/// over the subtree. Flags above `node` are ignored.
pub fn expected_payoff<S: Scalar>(
    game: &DynkinGame<S>,
    tau: &StoppingTime,
    sigma: &StoppingTime,
    node: NodeId,
) -> S {
    expected_payoff_of(game.tree(), game.payoffs(), tau, sigma, node)
}

pub fn expected_payoff_of<S: Scalar>(
    tree: &FiltrationTree<S>,
    (x, y, z): (&AdaptedProcess<S>, &AdaptedProcess<S>, &AdaptedProcess<S>),
    tau: &StoppingTime,
    sigma: &StoppingTime,
    node: NodeId,
) -> S {
    let mut w: Vec<Option<S>> = vec![None; tree.len()];
    for n in tree.descendants(node).into_iter().rev() {
        let v = match (tau.stops(n), sigma.stops(n)) {
            (true, true) => z[n].clone(),
            (true, false) => x[n].clone(),
            (false, true) => y[n].clone(),
            (false, false) => weighted_sum(tree.children(n), |c| w[c].as_ref().expect("child solved")),
        };
        w[n] = Some(v);
    }
    w[node].take().expect("start solved")
}

/// Number of distinct stopping times on the subtree of `start`:
/// `1` at a leaf, `1 + prod(children)` elsewhere (stop now, or continue and
/// choose independently below each child). Saturates at `u128::MAX`.
pub fn stopping_time_count<S: Scalar>(tree: &FiltrationTree<S>, start: NodeId) -> Result<u128, TreeError> {
    if tree.is_recombining() {
        return Err(TreeError::NotATree);
    }
    let mut count = vec![0u128; tree.len()];
    for n in tree.descendants(start).into_iter().rev() {
        count[n] = if tree.is_leaf(n) {
            1
        } else {
            tree.children(n)
                .iter()
                .fold(1u128, |acc, b| acc.saturating_mul(count[b.child]))
                .saturating_add(1)
        };
    }
    Ok(count[start])
}

/// Every stopping time on the subtree of `start`, each exactly once.
///
/// Flags are canonical: `true` outside the subtree and below every realized
/// stop, so two results are equal iff they are the same stopping time.
/// Order is deterministic: "stop at `start`" first, then the product of the
/// children's enumerations in lexicographic order.
pub fn enumerate_stopping_times<S: Scalar>(
    tree: &FiltrationTree<S>,
    start: NodeId,
    cap: u128,
) -> Result<Vec<StoppingTime>, TreeError> {
    let count = stopping_time_count(tree, start)?;
    if count > cap {
        return Err(TreeError::CapExceeded { cap, count });
    }
    let continues = continue_sets(tree, start);
    Ok(continues
        .into_iter()
        .map(|cont| {
            let mut stop = vec![true; tree.len()];
            for n in cont {
                stop[n] = false;
            }
            StoppingTime { stop }
        })
        .collect())
}

/// Sets of nodes at which a stopping time on the subtree continues.
fn continue_sets<S: Scalar>(tree: &FiltrationTree<S>, n: NodeId) -> Vec<Vec<NodeId>> {
    let mut out = vec![Vec::new()];
    if tree.is_leaf(n) {
        return out;
    }
    let mut partial: Vec<Vec<NodeId>> = vec![vec![n]];
    for b in tree.children(n) {
        let below = continue_sets(tree, b.child);
        let mut next = Vec::with_capacity(partial.len() * below.len());
        for p in &partial {
            for c in &below {
                let mut v = p.clone();
                v.extend_from_slice(c);
                next.push(v);
            }
        }
        partial = next;
    }
    out.extend(partial);
    out
}

/// Canonical form of `st` for games started at `start`, as produced by
/// [`enumerate_stopping_times`].
pub fn canonical<S: Scalar>(tree: &FiltrationTree<S>, st: &StoppingTime, start: NodeId) -> StoppingTime {
    let mut alive = vec![false; tree.len()];
    alive[start] = true;
    let mut stop = vec![true; tree.len()];
    for n in tree.descendants(start) {
        if alive[n] && !st.stops(n) {
            stop[n] = false;
            for b in tree.children(n) {
                alive[b.child] = true;
            }
        }
    }
    StoppingTime { stop }
}

pub fn distinct_count(times: &[StoppingTime]) -> usize {
    times.iter().collect::<HashSet<_>>().len()
}

pub(crate) fn smin<S: Scalar>(a: &S, b: &S) -> S {
    scalar::min(a, b)
}

pub(crate) fn smax<S: Scalar>(a: &S, b: &S) -> S {
    scalar::max(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn r(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn spec(nodes: &[(&str, usize, Option<&str>, Option<Rational>)], horizon: usize) -> TreeSpec<Rational> {
        TreeSpec {
            horizon,
            tolerance: 0.0,
            nodes: nodes
                .iter()
                .map(|(id, t, p, prob)| NodeSpec {
                    id: id.to_string(),
                    time: *t,
                    parent: p.map(str::to_string),
                    probability: prob.clone(),
                })
                .collect(),
        }
    }

    fn binary_depth2() -> FiltrationTree<Rational> {
        let h = Some(r(1, 2));
        FiltrationTree::new(spec(
            &[
                ("r", 0, None, None),
                ("a", 1, Some("r"), h.clone()),
                ("b", 1, Some("r"), h.clone()),
                ("aa", 2, Some("a"), h.clone()),
                ("ab", 2, Some("a"), h.clone()),
                ("ba", 2, Some("b"), h.clone()),
                ("bb", 2, Some("b"), h),
            ],
            2,
        ))
        .unwrap()
    }

    #[test]
    fn single_node_tree_is_valid() {
        let s = spec(&[("n0", 0, None, None)], 0);
        assert!(validate_tree(&s).is_ok());
    }

    #[test]
    fn symmetric_split_is_valid() {
        let s = spec(
            &[("n0", 0, None, None), ("u", 1, Some("n0"), Some(r(1, 2))), ("d", 1, Some("n0"), Some(r(1, 2)))],
            1,
        );
        assert!(validate_tree(&s).is_ok());
    }

    #[test]
    fn bad_probability_sum_is_reported_with_node() {
        let s = TreeSpec {
            horizon: 1,
            tolerance: 1e-9,
            nodes: vec![
                NodeSpec { id: "n0".into(), time: 0, parent: None, probability: None },
                NodeSpec { id: "u".into(), time: 1, parent: Some("n0".into()), probability: Some(0.5) },
                NodeSpec { id: "d".into(), time: 1, parent: Some("n0".into()), probability: Some(0.6) },
            ],
        };
        let report = validate_tree(&s);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].to_string(), "probabilities sum 1.1 ≠ 1 at node n0");
        assert_eq!(report.violations[0].node(), Some("n0"));
    }

    #[test]
    fn structural_violations() {
        let s = spec(
            &[
                ("n0", 0, None, None),
                ("x", 0, None, None),
                ("u", 2, Some("n0"), Some(r(1, 1))),
                ("u", 1, Some("zz"), Some(r(0, 1))),
            ],
            2,
        );
        let report = validate_tree(&s);
        assert!(report.violations.iter().any(|v| matches!(v, Violation::DuplicateId { .. })));
        assert!(report.violations.iter().any(|v| matches!(v, Violation::RootCount { .. })));
        assert!(report.violations.iter().any(|v| matches!(v, Violation::TimeStep { .. })));
        assert!(report.violations.iter().any(|v| matches!(v, Violation::UnknownParent { .. })));
        assert!(report.violations.iter().any(|v| matches!(v, Violation::NonPositiveProbability { .. })));
        assert!(report.violations.iter().any(|v| matches!(v, Violation::Childless { .. })));
    }

    #[test]
    fn zero_probability_branch_rejected() {
        let s = spec(
            &[("n0", 0, None, None), ("u", 1, Some("n0"), Some(r(1, 1))), ("d", 1, Some("n0"), Some(r(0, 1)))],
            1,
        );
        let report = validate_tree(&s);
        assert!(matches!(report.violations[..], [Violation::NonPositiveProbability { .. }]));
    }

    #[test]
    fn conditional_expectation_weighted_sum() {
        let s = spec(
            &[
                ("n0", 0, None, None),
                ("a", 1, Some("n0"), Some(r(1, 2))),
                ("b", 1, Some("n0"), Some(r(1, 4))),
                ("c", 1, Some("n0"), Some(r(1, 4))),
            ],
            1,
        );
        let tree = FiltrationTree::new(s).unwrap();
        let p = AdaptedProcess::new(&tree, vec![r(0, 1), r(1, 1), r(2, 1), r(3, 1)]).unwrap();
        assert_eq!(conditional_expectation(&tree, &p, 0).unwrap(), r(7, 4));
        let c = AdaptedProcess::constant(&tree, r(5, 3));
        assert_eq!(conditional_expectation(&tree, &c, 0).unwrap(), r(5, 3));
        assert!(matches!(conditional_expectation(&tree, &p, 1), Err(TreeError::NoSuccessors(_))));
    }

    #[test]
    fn enumeration_counts() {
        let leaf = FiltrationTree::new(spec(&[("n0", 0, None, None)], 0)).unwrap();
        assert_eq!(enumerate_stopping_times(&leaf, 0, 10).unwrap().len(), 1);

        let tree = binary_depth2();
        let a = tree.node_id("a").unwrap();
        assert_eq!(enumerate_stopping_times(&tree, a, 10).unwrap().len(), 2);
        let all = enumerate_stopping_times(&tree, 0, 10).unwrap();
        assert_eq!(all.len(), 5);
        assert_eq!(distinct_count(&all), 5);
        assert_eq!(stopping_time_count(&tree, 0).unwrap(), 5);
    }

    #[test]
    fn enumeration_cap() {
        let tree = binary_depth2();
        match enumerate_stopping_times(&tree, 0, 4) {
            Err(TreeError::CapExceeded { cap: 4, count: 5 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn enumeration_is_canonical() {
        let tree = binary_depth2();
        for st in enumerate_stopping_times(&tree, 0, 10).unwrap() {
            assert_eq!(canonical(&tree, &st, 0), st);
        }
    }

    #[test]
    fn first_hits_and_realized() {
        let tree = binary_depth2();
        let a = tree.node_id("a").unwrap();
        let aa = tree.node_id("aa").unwrap();
        let bb = tree.node_id("bb").unwrap();
        let st = StoppingTime::from_fn(&tree, |n| n == a);
        assert_eq!(st.realized(&tree, 0, aa).unwrap(), a);
        assert_eq!(st.realized(&tree, 0, bb).unwrap(), bb);
        let hits = st.first_hits(&tree, 0);
        assert!(hits[a] && !hits[aa] && hits[bb] && !hits[0]);
    }

    #[test]
    fn leaf_paths_sum_to_one() {
        let tree = binary_depth2();
        let total = tree.leaf_paths(0).unwrap().into_iter().fold(Rational::from_i64(0), |acc, (_, p)| acc + p);
        assert_eq!(total, Rational::from_i64(1));
    }

    #[test]
    fn spec_round_trip() {
        let tree = binary_depth2();
        let again = FiltrationTree::new(tree.to_spec().unwrap()).unwrap();
        assert_eq!(again, tree);
    }
}
