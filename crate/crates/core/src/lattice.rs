//! Fine time grids for continuous-time games.
//!
//! A lattice is built in recombined form: node `(k, j)` is time step `k` after
//! `j` up-moves, so `N` steps need `(N + 1)(N + 2) / 2` nodes. Payoffs depend
//! only on `(t_k, state)`, so stopping rules defined node by node are the same
//! objects on the lattice and on its expanded tree.

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{certify_epsilon, check_nash, EpsilonCheck, NashCheck, OracleError};
use crate::scalar::{Scalar, DEFAULT_TOLERANCE};
use crate::solver::{check_assumption, compute_value, optimal_stopping_times, AssumptionReport, DynkinGame, SolverError, ValueProcess};
use crate::tree::{weighted_sum, Branch, FiltrationTree, Node, NodeId, NodeSpec, StoppingTime, TreeSpec};

pub const DEFAULT_NODE_BUDGET: usize = 2_000_000;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("lattice needs {nodes} nodes, budget is {budget}")]
    Budget { nodes: u128, budget: usize },
    #[error("invalid factors: need up > down > 0, got up = {up}, down = {down}")]
    Factors { up: f64, down: f64 },
    #[error("branch probability must lie in (0, 1), got {0}")]
    Probability(f64),
    #[error("horizon time must be positive and finite, got {0}")]
    Horizon(f64),
    #[error("steps must be at least 1")]
    NoSteps,
    #[error("volatility must be positive and finite, got {0}")]
    Volatility(f64),
    #[error("payoff shifts form a cycle through {0}")]
    ShiftCycle(Component),
    #[error("payoff {component} is not finite at step {step}")]
    NonFinite { component: Component, step: usize },
    #[error("epsilon must be positive, got {0}")]
    Epsilon(f64),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    X,
    Y,
    Z,
}

impl std::fmt::Display for Component {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Component::X => "x",
            Component::Y => "y",
            Component::Z => "z",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateModel {
    /// Symmetric walk with increments `±sqrt(T / N)`.
    RandomWalk {
        #[serde(default)]
        start: f64,
    },
    /// Fixed up/down factors.
    Market { s0: f64, up: f64, down: f64, probability: f64 },
    /// `up = exp(vol * sqrt(T / N))`, `down = 1 / up`, martingale probability.
    Crr { s0: f64, volatility: f64 },
}

/// Closed catalog of payoff maps `(t, state) -> value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffForm {
    Constant {
        value: f64,
    },
    /// `intercept + slope * state + time_slope * t`
    Affine {
        #[serde(default)]
        intercept: f64,
        slope: f64,
        #[serde(default)]
        time_slope: f64,
    },
    /// `max(state - strike, 0)`
    Call { strike: f64 },
    /// `max(strike - state, 0)`
    Put { strike: f64 },
    /// Another component plus `delta`, e.g. `Y = X + delta` or `Z = X - delta`.
    Shift { of: Component, delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub horizon_time: f64,
    pub steps: usize,
    pub model: StateModel,
    pub x: PayoffForm,
    pub y: PayoffForm,
    pub z: PayoffForm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_budget: Option<usize>,
}

impl LatticeSpec {
    pub fn with_steps(&self, steps: usize) -> LatticeSpec {
        LatticeSpec { steps, ..self.clone() }
    }

    fn form(&self, c: Component) -> &PayoffForm {
        match c {
            Component::X => &self.x,
            Component::Y => &self.y,
            Component::Z => &self.z,
        }
    }

    fn check_shifts(&self) -> Result<(), LatticeError> {
        for start in [Component::X, Component::Y, Component::Z] {
            let mut seen = HashSet::from([start]);
            let mut cur = start;
            while let PayoffForm::Shift { of, .. } = self.form(cur) {
                if !seen.insert(*of) {
                    return Err(LatticeError::ShiftCycle(*of));
                }
                cur = *of;
            }
        }
        Ok(())
    }

    fn eval(&self, c: Component, t: f64, s: f64) -> f64 {
        match self.form(c) {
            PayoffForm::Constant { value } => *value,
            PayoffForm::Affine { intercept, slope, time_slope } => intercept + slope * s + time_slope * t,
            PayoffForm::Call { strike } => (s - strike).max(0.0),
            PayoffForm::Put { strike } => (strike - s).max(0.0),
            PayoffForm::Shift { of, delta } => self.eval(*of, t, s) + delta,
        }
    }

    /// `(up-probability, state at (k, j))` for this grid.
    fn grid(&self) -> Result<(f64, Box<dyn Fn(usize, usize) -> f64>), LatticeError> {
        let dt = self.horizon_time / self.steps as f64;
        match self.model {
            StateModel::RandomWalk { start } => {
                let h = dt.sqrt();
                Ok((0.5, Box::new(move |k, j| start + (2.0 * j as f64 - k as f64) * h)))
            }
            StateModel::Market { s0, up, down, probability } => {
                if !(up > down && down > 0.0 && up.is_finite()) {
                    return Err(LatticeError::Factors { up, down });
                }
                if !(probability > 0.0 && probability < 1.0) {
                    return Err(LatticeError::Probability(probability));
                }
                Ok((probability, Box::new(move |k, j| s0 * up.powi(j as i32) * down.powi((k - j) as i32))))
            }
            StateModel::Crr { s0, volatility } => {
                if !(volatility > 0.0 && volatility.is_finite()) {
                    return Err(LatticeError::Volatility(volatility));
                }
                let up = (volatility * dt.sqrt()).exp();
                let down = 1.0 / up;
                let p = (1.0 - down) / (up - down);
                Ok((p, Box::new(move |k, j| s0 * up.powi(j as i32) * down.powi((k - j) as i32))))
            }
        }
    }
}

/// Node index of `(k, j)`: steps in order, `j` descending within a step.
fn lattice_index(k: usize, j: usize) -> NodeId {
    k * (k + 1) / 2 + (k - j)
}

pub fn lattice_node_count(steps: usize) -> u128 {
    let n = steps as u128;
    (n + 1) * (n + 2) / 2
}

/// Builds the recombined lattice game in float mode. Leaves carry `X = Y = Z`
/// equal to the `Z` payoff.
pub fn build_lattice(spec: &LatticeSpec) -> Result<DynkinGame<f64>, LatticeError> {
    if !(spec.horizon_time > 0.0 && spec.horizon_time.is_finite()) {
        return Err(LatticeError::Horizon(spec.horizon_time));
    }
    if spec.steps == 0 {
        return Err(LatticeError::NoSteps);
    }
    let budget = spec.node_budget.unwrap_or(DEFAULT_NODE_BUDGET);
    let count = lattice_node_count(spec.steps);
    if count > budget as u128 {
        return Err(LatticeError::Budget { nodes: count, budget });
    }
    spec.check_shifts()?;
    let (p, state) = spec.grid()?;
    let n = spec.steps;
    let dt = spec.horizon_time / n as f64;

    let mut nodes = Vec::with_capacity(count as usize);
    let mut triples = Vec::with_capacity(count as usize);
    for k in 0..=n {
        let t = k as f64 * dt;
        for j in (0..=k).rev() {
            let children = if k < n {
                vec![
                    Branch { child: lattice_index(k + 1, j + 1), probability: p },
                    Branch { child: lattice_index(k + 1, j), probability: 1.0 - p },
                ]
            } else {
                Vec::new()
            };
            // parent is not unique in a lattice; keep the up-most one for display
            let parent = match k {
                0 => None,
                _ => Some(lattice_index(k - 1, j.min(k - 1))),
            };
            nodes.push(Node { id: format!("t{k}_{j}"), time: k, parent, children });
            let s = state(k, j);
            let z = spec.eval(Component::Z, t, s);
            let triple = if k == n {
                (z, z, z)
            } else {
                (spec.eval(Component::X, t, s), spec.eval(Component::Y, t, s), z)
            };
            for (c, v) in [(Component::X, triple.0), (Component::Y, triple.1), (Component::Z, triple.2)] {
                if !v.is_finite() {
                    return Err(LatticeError::NonFinite { component: c, step: k });
                }
            }
            triples.push(triple);
        }
    }
    let tol = spec.tolerance.unwrap_or(DEFAULT_TOLERANCE);
    let tree = FiltrationTree::recombining(nodes, n, tol);
    Ok(DynkinGame::from_fn(tree, |i| triples[i])?)
}

/// Unrolls a recombining game into a plain tree. Returns the tree game and,
/// per tree node, the lattice node it copies.
pub fn expand_lattice<S: Scalar>(
    game: &DynkinGame<S>,
    budget: usize,
) -> Result<(DynkinGame<S>, Vec<NodeId>), LatticeError> {
    let tree = game.tree();
    // path counts, to check the budget before allocating
    let mut paths = vec![0u128; tree.len()];
    paths[tree.root()] = 1;
    let mut total: u128 = 0;
    for n in 0..tree.len() {
        total = total.saturating_add(paths[n]);
        for b in tree.children(n) {
            paths[b.child] = paths[b.child].saturating_add(paths[n]);
        }
    }
    if total > budget as u128 {
        return Err(LatticeError::Budget { nodes: total, budget });
    }

    let mut origin = vec![tree.root()];
    let mut nodes = vec![NodeSpec { id: "e0".to_string(), time: 0, parent: None, probability: None }];
    let mut i = 0;
    while i < origin.len() {
        let src = origin[i];
        for b in tree.children(src) {
            let id = format!("e{}", nodes.len());
            nodes.push(NodeSpec {
                id,
                time: tree.time(b.child),
                parent: Some(nodes[i].id.clone()),
                probability: Some(b.probability.clone()),
            });
            origin.push(b.child);
        }
        i += 1;
    }
    let expanded = FiltrationTree::new(TreeSpec { horizon: tree.horizon(), tolerance: tree.tolerance(), nodes })
        .map_err(SolverError::from)?;
    // tree construction keeps time order, which breadth-first order already is
    let (x, y, z) = game.payoffs();
    let out = DynkinGame::from_fn(expanded, |n| {
        let o = origin[n];
        (x[o].clone(), y[o].clone(), z[o].clone())
    })?;
    Ok((out, origin))
}

/// Copies a node-wise rule from a lattice onto its expanded tree.
pub fn pull_back<S: Scalar>(tree: &FiltrationTree<S>, origin: &[NodeId], st: &StoppingTime) -> StoppingTime {
    StoppingTime::from_fn(tree, |n| st.stops(origin[n]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonStrategyPair<S> {
    pub epsilon: S,
    pub tau: StoppingTime,
    pub sigma: StoppingTime,
}

/// `tau` stops where `L ≥ V − epsilon`, `sigma` where `U ≤ V + epsilon`.
pub fn epsilon_strategies<S: Scalar>(
    game: &DynkinGame<S>,
    value: &ValueProcess<S>,
    epsilon: &S,
) -> Result<EpsilonStrategyPair<S>, LatticeError> {
    if !(*epsilon > S::zero()) {
        return Err(LatticeError::Epsilon(epsilon.to_f64()));
    }
    Ok(hitting_pair(game, value, epsilon))
}

/// The `epsilon = 0` case: first hits of `V = L` and `V = U`.
pub fn zero_hitting_pair<S: Scalar>(game: &DynkinGame<S>, value: &ValueProcess<S>) -> EpsilonStrategyPair<S> {
    let (tau, sigma) = optimal_stopping_times(game, value);
    EpsilonStrategyPair { epsilon: S::zero(), tau, sigma }
}

fn hitting_pair<S: Scalar>(game: &DynkinGame<S>, value: &ValueProcess<S>, epsilon: &S) -> EpsilonStrategyPair<S> {
    let tol = game.tolerance();
    let tree = game.tree();
    let tau = StoppingTime::from_fn(tree, |n| (value.v[n].clone() - epsilon.clone()).tol_le(&value.lower[n], tol));
    let sigma = StoppingTime::from_fn(tree, |n| value.upper[n].tol_le(&(value.v[n].clone() + epsilon.clone()), tol));
    EpsilonStrategyPair { epsilon: epsilon.clone(), tau, sigma }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EpsilonVerdict<S> {
    Certified(EpsilonCheck<S>),
    Failed(EpsilonCheck<S>),
    /// The assumption fails somewhere below the start node.
    NotApplicable(AssumptionReport<S>),
}

impl<S> EpsilonVerdict<S> {
    pub fn check(&self) -> Option<&EpsilonCheck<S>> {
        match self {
            EpsilonVerdict::Certified(c) | EpsilonVerdict::Failed(c) => Some(c),
            EpsilonVerdict::NotApplicable(_) => None,
        }
    }

    pub fn is_certified(&self) -> bool {
        matches!(self, EpsilonVerdict::Certified(_))
    }
}

pub fn verify_epsilon_optimality<S: Scalar>(
    game: &DynkinGame<S>,
    value: &ValueProcess<S>,
    pair: &EpsilonStrategyPair<S>,
    start: NodeId,
) -> EpsilonVerdict<S> {
    let report = check_assumption(game, value);
    let below: HashSet<NodeId> = game.tree().descendants(start).into_iter().collect();
    if report.violations.iter().any(|v| below.contains(&v.node)) {
        return EpsilonVerdict::NotApplicable(report);
    }
    let check = certify_epsilon(game, value, &pair.tau, &pair.sigma, start, &pair.epsilon);
    if check.certified {
        EpsilonVerdict::Certified(check)
    } else {
        EpsilonVerdict::Failed(check)
    }
}

/// Drift signs of `V` before the epsilon stops: `V ≤ E[V_next]` while `tau`
/// has not stopped, `V ≥ E[V_next]` while `sigma` has not.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport<S> {
    pub checked_before_tau: usize,
    pub checked_before_sigma: usize,
    pub violations_before_tau: usize,
    pub violations_before_sigma: usize,
    /// Largest `V − E[V_next]` seen before `tau` stops; zero if none positive.
    pub worst_before_tau: S,
    /// Largest `E[V_next] − V` seen before `sigma` stops; zero if none positive.
    pub worst_before_sigma: S,
}

impl<S> DriftReport<S> {
    pub fn violations(&self) -> usize {
        self.violations_before_tau + self.violations_before_sigma
    }
}

pub fn martingale_structure<S: Scalar>(
    game: &DynkinGame<S>,
    value: &ValueProcess<S>,
    pair: &EpsilonStrategyPair<S>,
    start: NodeId,
) -> DriftReport<S> {
    let tol = game.tolerance();
    let mut report = DriftReport {
        checked_before_tau: 0,
        checked_before_sigma: 0,
        violations_before_tau: 0,
        violations_before_sigma: 0,
        worst_before_tau: S::zero(),
        worst_before_sigma: S::zero(),
    };
    for (st, sub) in [(&pair.tau, true), (&pair.sigma, false)] {
        for n in alive_nodes(game.tree(), st, start) {
            let v = &value.v[n];
            let c = value.continuation(n).expect("internal node");
            let (ok, excess) = if sub {
                (v.tol_le(c, tol), v.clone() - c.clone())
            } else {
                (c.tol_le(v, tol), c.clone() - v.clone())
            };
            let (checked, violations, worst) = if sub {
                (&mut report.checked_before_tau, &mut report.violations_before_tau, &mut report.worst_before_tau)
            } else {
                (&mut report.checked_before_sigma, &mut report.violations_before_sigma, &mut report.worst_before_sigma)
            };
            *checked += 1;
            if !ok {
                *violations += 1;
            }
            if excess > *worst {
                *worst = excess;
            }
        }
    }
    report
}

/// Nodes reachable from `start` at which `st` has not stopped yet.
fn alive_nodes<S: Scalar>(tree: &FiltrationTree<S>, st: &StoppingTime, start: NodeId) -> Vec<NodeId> {
    let mut alive = vec![false; tree.len()];
    alive[start] = true;
    let mut out = Vec::new();
    for n in tree.descendants(start) {
        if !alive[n] || st.stops(n) {
            continue;
        }
        out.push(n);
        for b in tree.children(n) {
            alive[b.child] = true;
        }
    }
    out
}

/// `E[time of st | start]` with `time(n)` supplied by the caller.
pub fn expected_stop_time<S: Scalar>(
    tree: &FiltrationTree<S>,
    st: &StoppingTime,
    start: NodeId,
    time: impl Fn(NodeId) -> S,
) -> S {
    let mut w: Vec<Option<S>> = vec![None; tree.len()];
    for n in tree.descendants(start).into_iter().rev() {
        let v = if st.stops(n) {
            time(n)
        } else {
            weighted_sum(tree.children(n), |c| w[c].as_ref().expect("child solved"))
        };
        w[n] = Some(v);
    }
    w[start].take().expect("start solved")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truncation<S> {
    pub tau: StoppingTime,
    pub sigma: StoppingTime,
    /// Nash check of the truncated pair in the original game.
    pub check: NashCheck<S>,
}

/// Stops `(tau, sigma)` no later than the zero-hitting pair and re-certifies
/// the result in the original game. The input must be a Nash pair of the
/// envelope game `(L, U, Z)` at `start`.
pub fn truncate_equilibrium<S: Scalar>(
    game: &DynkinGame<S>,
    value: &ValueProcess<S>,
    tau: &StoppingTime,
    sigma: &StoppingTime,
    start: NodeId,
) -> Result<Truncation<S>, LatticeError> {
    let envelope = game.envelope_game();
    if !check_nash(&envelope, tau, sigma, start).is_nash {
        return Err(OracleError::NotEnvelopeEquilibrium(game.tree().label(start).to_string()).into());
    }
    let zero = zero_hitting_pair(game, value);
    let tau = tau.earliest(&zero.tau);
    let sigma = sigma.earliest(&zero.sigma);
    let check = check_nash(game, &tau, &sigma, start);
    Ok(Truncation { tau, sigma, check })
}

/// One `(N, epsilon)` cell of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub steps: usize,
    pub epsilon: f64,
    pub value_root: f64,
    /// `BRmax(sigma_eps) − V(root)`
    pub gap_max: f64,
    /// `V(root) − BRmin(tau_eps)`
    pub gap_min: f64,
    /// Expected stopping time of `tau_eps` in model time.
    pub e_tau: f64,
    pub e_sigma: f64,
    /// `None` when the assumption fails on the lattice.
    pub certified: Option<bool>,
    pub drift_violations: usize,
    pub runtime_ms: u64,
}

/// Runs every `(N, epsilon)` cell; rows come back ordered by `steps` index,
/// then `epsilons` index.
pub fn convergence_study(
    spec: &LatticeSpec,
    epsilons: &[f64],
    steps: &[usize],
) -> Result<Vec<StudyRow>, LatticeError> {
    if let Some(&e) = epsilons.iter().find(|e| !(**e > 0.0)) {
        return Err(LatticeError::Epsilon(e));
    }
    let solved: Vec<(DynkinGame<f64>, ValueProcess<f64>, f64)> = steps
        .par_iter()
        .map(|&n| {
            let game = build_lattice(&spec.with_steps(n))?;
            let value = compute_value(&game);
            Ok((game, value, spec.horizon_time / n as f64))
        })
        .collect::<Result<_, LatticeError>>()?;
    let cells: Vec<(usize, f64)> =
        (0..steps.len()).flat_map(|i| epsilons.iter().map(move |&e| (i, e))).collect();
    cells
        .par_iter()
        .map(|&(i, eps)| {
            let started = Instant::now();
            let (game, value, dt) = &solved[i];
            let root = game.tree().root();
            let pair = epsilon_strategies(game, value, &eps)?;
            let verdict = verify_epsilon_optimality(game, value, &pair, root);
            let check = match verdict.check() {
                Some(c) => c.clone(),
                None => certify_epsilon(game, value, &pair.tau, &pair.sigma, root, &eps),
            };
            let certified = match verdict {
                EpsilonVerdict::NotApplicable(_) => None,
                v => Some(v.is_certified()),
            };
            let time = |n: NodeId| game.tree().time(n) as f64 * dt;
            let e_tau = expected_stop_time(game.tree(), &pair.tau, root, time);
            let e_sigma = expected_stop_time(game.tree(), &pair.sigma, root, time);
            let drift = martingale_structure(game, value, &pair, root);
            Ok(StudyRow {
                steps: steps[i],
                epsilon: eps,
                value_root: value.v[root],
                gap_max: check.gap_max,
                gap_min: check.gap_min,
                e_tau,
                e_sigma,
                certified,
                drift_violations: drift.violations(),
                runtime_ms: started.elapsed().as_millis() as u64,
            })
        })
        .collect()
}

/// Seeded lattice game for property runs: game options on CRR and market
/// lattices, and affine games on the random walk. `steps` is drawn from
/// `min_steps..=max_steps`.
pub fn random_lattice_spec(seed: u64, index: u64, min_steps: usize, max_steps: usize) -> LatticeSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let steps = rng.gen_range(min_steps..=max_steps.max(min_steps));
    let horizon_time = [0.5, 1.0, 2.0][rng.gen_range(0..3)];
    let delta = rng.gen_range(1..=10) as f64;
    let round = |v: f64| (v * 100.0).round() / 100.0;
    match rng.gen_range(0..4) {
        0 => LatticeSpec {
            horizon_time,
            steps,
            model: StateModel::Crr { s0: 100.0, volatility: round(rng.gen_range(0.1..0.4)) },
            x: PayoffForm::Put { strike: rng.gen_range(80..=120) as f64 },
            y: PayoffForm::Shift { of: Component::X, delta },
            z: PayoffForm::Shift { of: Component::X, delta: delta / 2.0 },
            tolerance: None,
            node_budget: None,
        },
        1 => LatticeSpec {
            horizon_time,
            steps,
            model: StateModel::Crr { s0: 100.0, volatility: round(rng.gen_range(0.1..0.4)) },
            x: PayoffForm::Call { strike: rng.gen_range(80..=120) as f64 },
            y: PayoffForm::Shift { of: Component::X, delta },
            z: PayoffForm::Shift { of: Component::X, delta: 0.0 },
            tolerance: None,
            node_budget: None,
        },
        2 => {
            let up = 1.0 + rng.gen_range(1..=5) as f64 / 100.0;
            LatticeSpec {
                horizon_time,
                steps,
                model: StateModel::Market { s0: 10.0, up, down: 1.0 / up, probability: 0.5 },
                x: PayoffForm::Put { strike: rng.gen_range(8..=12) as f64 },
                y: PayoffForm::Shift { of: Component::X, delta: delta / 10.0 },
                z: PayoffForm::Shift { of: Component::Y, delta: 0.0 },
                tolerance: None,
                node_budget: None,
            }
        }
        _ => LatticeSpec {
            horizon_time,
            steps,
            model: StateModel::RandomWalk { start: 0.0 },
            x: PayoffForm::Affine { intercept: 0.0, slope: 1.0, time_slope: round(rng.gen_range(-1.0..1.0)) },
            y: PayoffForm::Shift { of: Component::X, delta: delta / 10.0 },
            z: PayoffForm::Affine { intercept: delta / 20.0, slope: 1.0, time_slope: 0.0 },
            tolerance: None,
            node_budget: None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{best_response_max, best_response_min};

    fn constant_spec(c: f64, steps: usize) -> LatticeSpec {
        LatticeSpec {
            horizon_time: 1.0,
            steps,
            model: StateModel::RandomWalk { start: 0.0 },
            x: PayoffForm::Constant { value: c },
            y: PayoffForm::Constant { value: c },
            z: PayoffForm::Constant { value: c },
            tolerance: None,
            node_budget: None,
        }
    }

    #[test]
    fn one_step_walk() {
        let spec = LatticeSpec {
            horizon_time: 4.0,
            steps: 1,
            x: PayoffForm::Affine { intercept: 0.0, slope: 1.0, time_slope: 0.0 },
            y: PayoffForm::Shift { of: Component::X, delta: 0.0 },
            z: PayoffForm::Shift { of: Component::X, delta: 0.0 },
            ..constant_spec(0.0, 1)
        };
        let g = build_lattice(&spec).unwrap();
        assert_eq!(g.tree().len(), 3);
        assert_eq!(g.z().values(), &[0.0, 2.0, -2.0]);
    }

    #[test]
    fn market_call_leaves() {
        let spec = LatticeSpec {
            horizon_time: 1.0,
            steps: 2,
            model: StateModel::Market { s0: 4.0, up: 2.0, down: 0.5, probability: 0.5 },
            x: PayoffForm::Constant { value: 0.0 },
            y: PayoffForm::Constant { value: 20.0 },
            z: PayoffForm::Call { strike: 5.0 },
            tolerance: None,
            node_budget: None,
        };
        let g = build_lattice(&spec).unwrap();
        let leaves: Vec<f64> = g.tree().leaves().map(|n| g.z()[n]).collect();
        assert_eq!(leaves, vec![11.0, 0.0, 0.0]);
        assert!(g.tree().is_recombining());
        assert!(g.warnings().is_empty());
    }

    #[test]
    fn constant_game_is_flat() {
        let g = build_lattice(&constant_spec(3.0, 5)).unwrap();
        assert!(g.x().values().iter().chain(g.y().values()).all(|v| *v == 3.0));
        let rows = convergence_study(&constant_spec(3.0, 5), &[0.5, 0.1], &[4, 8]).unwrap();
        for r in rows {
            assert_eq!((r.value_root, r.gap_max, r.gap_min), (3.0, 0.0, 0.0));
            assert_eq!(r.e_sigma, 0.0);
        }
    }

    #[test]
    fn spec_errors() {
        let bad = LatticeSpec {
            model: StateModel::Market { s0: 1.0, up: 0.9, down: 1.1, probability: 0.5 },
            ..constant_spec(0.0, 3)
        };
        assert!(matches!(build_lattice(&bad), Err(LatticeError::Factors { .. })));
        let cyc = LatticeSpec {
            x: PayoffForm::Shift { of: Component::Y, delta: 1.0 },
            y: PayoffForm::Shift { of: Component::X, delta: 1.0 },
            ..constant_spec(0.0, 3)
        };
        assert!(matches!(build_lattice(&cyc), Err(LatticeError::ShiftCycle(_))));
        let big = LatticeSpec { node_budget: Some(10), ..constant_spec(0.0, 10) };
        assert!(matches!(build_lattice(&big), Err(LatticeError::Budget { nodes: 66, budget: 10 })));
        let g = build_lattice(&constant_spec(0.0, 2)).unwrap();
        let v = compute_value(&g);
        assert!(matches!(epsilon_strategies(&g, &v, &0.0), Err(LatticeError::Epsilon(_))));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = random_lattice_spec(5, 0, 10, 20);
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<LatticeSpec>(&text).unwrap(), spec);
    }

    #[test]
    fn expansion_agrees_with_lattice() {
        let spec = random_lattice_spec(11, 3, 6, 6);
        let g = build_lattice(&spec).unwrap();
        let (t, origin) = expand_lattice(&g, 1 << 12).unwrap();
        assert_eq!(t.tree().len(), 127);
        let (vg, vt) = (compute_value(&g), compute_value(&t));
        for n in 0..t.tree().len() {
            assert!((vt.v[n] - vg.v[origin[n]]).abs() < 1e-12);
        }
        let pair = epsilon_strategies(&g, &vg, &0.1).unwrap();
        let sigma = pull_back(t.tree(), &origin, &pair.sigma);
        let tau = pull_back(t.tree(), &origin, &pair.tau);
        let a = best_response_max(&g, &pair.sigma, 0).value;
        let b = best_response_max(&t, &sigma, 0).value;
        assert!((a - b).abs() < 1e-12);
        let a = best_response_min(&g, &pair.tau, 0).value;
        let b = best_response_min(&t, &tau, 0).value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn hitting_sets_shrink_with_epsilon() {
        let g = build_lattice(&random_lattice_spec(2, 1, 30, 30)).unwrap();
        let v = compute_value(&g);
        let wide = epsilon_strategies(&g, &v, &0.5).unwrap();
        let narrow = epsilon_strategies(&g, &v, &0.01).unwrap();
        let zero = zero_hitting_pair(&g, &v);
        for n in 0..g.tree().len() {
            assert!(!zero.tau.stops(n) || narrow.tau.stops(n));
            assert!(!narrow.tau.stops(n) || wide.tau.stops(n));
            assert!(!zero.sigma.stops(n) || narrow.sigma.stops(n));
            assert!(!narrow.sigma.stops(n) || wide.sigma.stops(n));
        }
    }
}
