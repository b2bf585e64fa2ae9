//! Ground truth for the solver.
//!
//! Against a frozen opponent strategy the remaining player faces a one-player
//! optimal stopping problem, solved exactly by backward induction (the Snell
//! envelope of the payoff with the opponent frozen). Minimax and maximin then
//! need only one enumeration each: the outer player is enumerated and the
//! inner one answers with its best response.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::solver::{check_assumption, envelopes, optimal_stopping_times, DynkinGame, ValueProcess};
use crate::tree::{
    enumerate_stopping_times, expected_payoff, weighted_sum, NodeId, StoppingTime, TreeError,
    DEFAULT_ENUMERATION_CAP,
};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("no verdict within the enumeration cap at node {0}")]
    Undecided(String),
    #[error("input pair is not a Nash equilibrium of the envelope game at node {0}")]
    NotEnvelopeEquilibrium(String),
}

#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    /// Largest stopping-time set a single enumeration may visit.
    pub cap: u128,
    /// Equilibrium pairs listed in a report; the total is always counted.
    pub max_listed: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { cap: DEFAULT_ENUMERATION_CAP, max_listed: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    Max,
    Min,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse<S> {
    pub value: S,
    pub strategy: StoppingTime,
}

/// Best stopping time for the max-player against a frozen `sigma`.
///
/// Where `sigma` stops the choice is between `Z` (stop too) and `Y` (let the
/// opponent stop); elsewhere between `X` and continuing. Ties stop.
pub fn best_response_max<S: Scalar>(game: &DynkinGame<S>, sigma: &StoppingTime, start: NodeId) -> BestResponse<S> {
    best_response(game, sigma, start, Player::Max)
}

/// Mirror image of [`best_response_max`]: `min(Z, X)` where `tau` stops,
/// `min(Y, continuation)` elsewhere.
pub fn best_response_min<S: Scalar>(game: &DynkinGame<S>, tau: &StoppingTime, start: NodeId) -> BestResponse<S> {
    best_response(game, tau, start, Player::Min)
}

fn best_response<S: Scalar>(
    game: &DynkinGame<S>,
    frozen: &StoppingTime,
    start: NodeId,
    player: Player,
) -> BestResponse<S> {
    let tree = game.tree();
    let (x, y, z) = game.payoffs();
    let mut w: Vec<Option<S>> = vec![None; tree.len()];
    let mut stop = vec![true; tree.len()];
    for n in tree.descendants(start).into_iter().rev() {
        // (payoff if the responder stops, payoff if it waits)
        let (now, later) = match (player, frozen.stops(n)) {
            (Player::Max, true) => (z[n].clone(), y[n].clone()),
            (Player::Min, true) => (z[n].clone(), x[n].clone()),
            (Player::Max, false) => (x[n].clone(), cont(tree, &w, n)),
            (Player::Min, false) => (y[n].clone(), cont(tree, &w, n)),
        };
        let take_now = match player {
            Player::Max => now >= later,
            Player::Min => now <= later,
        };
        stop[n] = take_now || tree.is_leaf(n);
        w[n] = Some(if take_now { now } else { later });
    }
    let value = w[start].take().expect("start solved");
    BestResponse { value, strategy: StoppingTime::from_fn(tree, |n| stop[n]) }
}

fn cont<S: Scalar>(tree: &crate::tree::FiltrationTree<S>, w: &[Option<S>], n: NodeId) -> S {
    weighted_sum(tree.children(n), |c| w[c].as_ref().expect("child solved"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxReport<S> {
    pub node: NodeId,
    pub maximin: S,
    pub minimax: S,
    pub value_candidate: S,
    pub has_value: bool,
    /// `minimax − maximin`
    pub epsilon_star: S,
    /// `minimax ≥ V ≥ maximin`
    pub sandwich_holds: bool,
    /// Max-player strategies attaining the maximin.
    pub optimal_taus: Vec<StoppingTime>,
    /// Min-player strategies attaining the minimax.
    pub optimal_sigmas: Vec<StoppingTime>,
    /// Nash pairs, at most `max_listed` of them; empty without a value.
    pub equilibria: Vec<(StoppingTime, StoppingTime)>,
    pub equilibrium_count: u128,
    pub enumerated: usize,
}

/// Exhaustive minimax and maximin at `start`.
pub fn brute_force_minimax<S: Scalar>(
    game: &DynkinGame<S>,
    value: &ValueProcess<S>,
    start: NodeId,
    cfg: &OracleConfig,
) -> Result<MinimaxReport<S>, OracleError> {
    let tol = game.tolerance();
    let times = enumerate_stopping_times(game.tree(), start, cfg.cap)?;

    let upper: Vec<S> = evaluate(&times, |s| best_response_max(game, s, start).value);
    let lower: Vec<S> = evaluate(&times, |t| best_response_min(game, t, start).value);
    let minimax = extreme(&upper, |a, b| a < b);
    let maximin = extreme(&lower, |a, b| a > b);

    let optimal_sigmas: Vec<StoppingTime> =
        times.iter().zip(&upper).filter(|(_, v)| v.tol_eq(&minimax, tol)).map(|(s, _)| s.clone()).collect();
    let optimal_taus: Vec<StoppingTime> =
        times.iter().zip(&lower).filter(|(_, v)| v.tol_eq(&maximin, tol)).map(|(t, _)| t.clone()).collect();

    let v = value.v[start].clone();
    let has_value = minimax.tol_eq(&maximin, tol);
    let sandwich_holds = maximin.tol_le(&v, tol) && v.tol_le(&minimax, tol);
    let (equilibria, equilibrium_count) = if has_value {
        let count = optimal_taus.len() as u128 * optimal_sigmas.len() as u128;
        let pairs = optimal_taus
            .iter()
            .flat_map(|t| optimal_sigmas.iter().map(move |s| (t.clone(), s.clone())))
            .take(cfg.max_listed)
            .collect();
        (pairs, count)
    } else {
        (Vec::new(), 0)
    };

    Ok(MinimaxReport {
        node: start,
        epsilon_star: minimax.clone() - maximin.clone(),
        maximin,
        minimax,
        value_candidate: v,
        has_value,
        sandwich_holds,
        optimal_taus,
        optimal_sigmas,
        equilibria,
        equilibrium_count,
        enumerated: times.len(),
    })
}

fn evaluate<S: Scalar>(times: &[StoppingTime], f: impl Fn(&StoppingTime) -> S + Sync) -> Vec<S> {
    if times.len() > 64 {
        times.par_iter().map(&f).collect()
    } else {
        times.iter().map(f).collect()
    }
}

fn extreme<S: Scalar>(values: &[S], better: impl Fn(&S, &S) -> bool) -> S {
    let mut best = values[0].clone();
    for v in &values[1..] {
        if better(v, &best) {
            best = v.clone();
        }
    }
    best
}

/// Outcome of checking one strategy pair for the Nash property at a node.
#[derive(Debug, Clone, PartialEq)]
pub struct NashCheck<S> {
    pub payoff: S,
    pub max_response: BestResponse<S>,
    pub min_response: BestResponse<S>,
    pub is_nash: bool,
}

impl<S: Scalar> NashCheck<S> {
    /// A strictly profitable unilateral deviation, if one exists.
    pub fn deviation(&self, tau: &StoppingTime, sigma: &StoppingTime, tol: f64) -> Option<Deviation<S>> {
        if self.payoff.tol_lt(&self.max_response.value, tol) {
            Some(Deviation {
                player: Player::Max,
                tau: tau.clone(),
                sigma: sigma.clone(),
                deviation: self.max_response.strategy.clone(),
                baseline: self.payoff.clone(),
                deviated: self.max_response.value.clone(),
                gain: self.max_response.value.clone() - self.payoff.clone(),
            })
        } else if self.min_response.value.tol_lt(&self.payoff, tol) {
            Some(Deviation {
                player: Player::Min,
                tau: tau.clone(),
                sigma: sigma.clone(),
                deviation: self.min_response.strategy.clone(),
                baseline: self.payoff.clone(),
                deviated: self.min_response.value.clone(),
                gain: self.payoff.clone() - self.min_response.value.clone(),
            })
        } else {
            None
        }
    }
}

/// Nash check by best responses: `(tau, sigma)` is an equilibrium at `start`
/// iff neither player's best response beats the pair's expected payoff.
pub fn check_nash<S: Scalar>(
    game: &DynkinGame<S>,
    tau: &StoppingTime,
    sigma: &StoppingTime,
    start: NodeId,
) -> NashCheck<S> {
    let tol = game.tolerance();
    let payoff = expected_payoff(game, tau, sigma, start);
    let max_response = best_response_max(game, sigma, start);
    let min_response = best_response_min(game, tau, start);
    let is_nash = max_response.value.tol_le(&payoff, tol) && payoff.tol_le(&min_response.value, tol);
    NashCheck { payoff, max_response, min_response, is_nash }
}

/// A concrete profitable deviation from `(tau, sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation<S> {
    pub player: Player,
    pub tau: StoppingTime,
    pub sigma: StoppingTime,
    pub deviation: StoppingTime,
    pub baseline: S,
    pub deviated: S,
    /// Improvement for the deviating player; always positive.
    pub gain: S,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict<S> {
    NashExists,
    /// No equilibrium; the game has `epsilon`-equilibria only for
    /// `epsilon ≥ minimax − maximin`.
    EpsilonOnly(S),
    NoneWithinCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    /// First-hitting pair from backward induction.
    Solver,
    /// Enumerated saddle pair truncated by the first-hitting pair.
    Truncated,
    /// Enumerated saddle pair.
    Enumeration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumCertificate<S> {
    pub node: NodeId,
    pub verdict: Verdict<S>,
    pub strategies: Option<(StoppingTime, StoppingTime)>,
    pub payoff: Option<S>,
    pub source: Option<CandidateSource>,
    pub witness: Option<Deviation<S>>,
    pub minimax: Option<MinimaxReport<S>>,
}

impl<S: Scalar> EquilibriumCertificate<S> {
    pub fn nash_exists(&self) -> bool {
        matches!(self.verdict, Verdict::NashExists)
    }
}

/// Searches for a Nash equilibrium at `start`: the solver's first-hitting
/// pair first, then enumeration. Refutations carry a profitable deviation
/// from the solver's pair.
pub fn find_nash<S: Scalar>(
    game: &DynkinGame<S>,
    value: &ValueProcess<S>,
    start: NodeId,
    cfg: &OracleConfig,
) -> EquilibriumCertificate<S> {
    let tol = game.tolerance();
    let (tau_star, sigma_star) = optimal_stopping_times(game, value);
    let first = check_nash(game, &tau_star, &sigma_star, start);
    if first.is_nash {
        return EquilibriumCertificate {
            node: start,
            verdict: Verdict::NashExists,
            payoff: Some(first.payoff),
            strategies: Some((tau_star, sigma_star)),
            source: Some(CandidateSource::Solver),
            witness: None,
            minimax: None,
        };
    }
    let witness = first.deviation(&tau_star, &sigma_star, tol);

    let report = match brute_force_minimax(game, value, start, cfg) {
        Ok(r) => r,
        Err(_) => {
            return EquilibriumCertificate {
                node: start,
                verdict: Verdict::NoneWithinCap,
                strategies: None,
                payoff: None,
                source: None,
                witness,
                minimax: None,
            }
        }
    };

    if report.has_value {
        let (t, s) = (&report.optimal_taus[0], &report.optimal_sigmas[0]);
        let candidates = [
            (t.earliest(&tau_star), s.earliest(&sigma_star), CandidateSource::Truncated),
            (t.clone(), s.clone(), CandidateSource::Enumeration),
        ];
        for (t, s, source) in candidates {
            let check = check_nash(game, &t, &s, start);
            if check.is_nash {
                return EquilibriumCertificate {
                    node: start,
                    verdict: Verdict::NashExists,
                    payoff: Some(check.payoff),
                    strategies: Some((t, s)),
                    source: Some(source),
                    witness: None,
                    minimax: Some(report),
                };
            }
        }
    }

    EquilibriumCertificate {
        node: start,
        verdict: Verdict::EpsilonOnly(report.epsilon_star.clone()),
        strategies: None,
        payoff: None,
        source: None,
        witness,
        minimax: Some(report),
    }
}

/// Max-player improvement against `sigma`: also stop wherever `sigma`
/// realizes first with `Z > Y`, so that pathwise `R(tau_hat, sigma)` dominates
/// the envelope payoff `R~(tau, sigma)`.
pub fn improve_strategy<S: Scalar>(
    game: &DynkinGame<S>,
    tau: &StoppingTime,
    sigma: &StoppingTime,
    start: NodeId,
) -> StoppingTime {
    let hits = sigma.first_hits(game.tree(), start);
    let (_, y, z) = game.payoffs();
    StoppingTime::from_fn(game.tree(), |n| tau.stops(n) || (hits[n] && z[n] > y[n]))
}

/// Min-player counterpart: also stop wherever `tau` realizes first with
/// `Z < X`, so that pathwise `R(tau, sigma_hat) ≤ R~(tau, sigma)`.
pub fn improve_strategy_min<S: Scalar>(
    game: &DynkinGame<S>,
    tau: &StoppingTime,
    sigma: &StoppingTime,
    start: NodeId,
) -> StoppingTime {
    let hits = tau.first_hits(game.tree(), start);
    let (x, _, z) = game.payoffs();
    StoppingTime::from_fn(game.tree(), |n| sigma.stops(n) || (hits[n] && z[n] < x[n]))
}

/// Envelope payoff `R~(tau, sigma)` with `(L, U, Z)` on the path `start → leaf`.
pub fn modified_payoff<S: Scalar>(
    game: &DynkinGame<S>,
    tau: &StoppingTime,
    sigma: &StoppingTime,
    start: NodeId,
    leaf: NodeId,
) -> Result<S, TreeError> {
    let (l, u) = envelopes(game);
    crate::tree::realized_payoff_of(game.tree(), (&l, &u, game.z()), tau, sigma, start, leaf)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonCheck<S> {
    pub certified: bool,
    pub value: S,
    /// Worst case for the max-player holding `tau`.
    pub guaranteed_by_tau: S,
    /// Best case for the max-player against `sigma`.
    pub conceded_by_sigma: S,
    /// `conceded_by_sigma − V`
    pub gap_max: S,
    /// `V − guaranteed_by_tau`
    pub gap_min: S,
}

/// Both strategies are `epsilon`-optimal at `start`:
/// `BRmin(tau) ≥ V − epsilon` and `BRmax(sigma) ≤ V + epsilon`.
pub fn certify_epsilon<S: Scalar>(
    game: &DynkinGame<S>,
    value: &ValueProcess<S>,
    tau: &StoppingTime,
    sigma: &StoppingTime,
    start: NodeId,
    epsilon: &S,
) -> EpsilonCheck<S> {
    let tol = game.tolerance();
    let v = value.v[start].clone();
    let low = best_response_min(game, tau, start).value;
    let high = best_response_max(game, sigma, start).value;
    let certified = (v.clone() - epsilon.clone()).tol_le(&low, tol) && high.tol_le(&(v.clone() + epsilon.clone()), tol);
    EpsilonCheck {
        certified,
        gap_max: high.clone() - v.clone(),
        gap_min: v.clone() - low.clone(),
        value: v,
        guaranteed_by_tau: low,
        conceded_by_sigma: high,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeVerdict {
    pub node: NodeId,
    pub assumption_holds: bool,
    pub nash_exists: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExistenceCheck {
    pub assumption_everywhere: bool,
    pub nash_everywhere: bool,
    pub agree: bool,
    /// Every node violating the assumption has no equilibrium.
    pub violations_refuted: bool,
    /// First node contradicting the equivalence, if any.
    pub offending: Option<NodeId>,
    pub nodes: Vec<NodeVerdict>,
}

/// Computes both sides of "assumption at every node ⟺ equilibrium at every
/// node" independently and compares them.
pub fn existence_check<S: Scalar>(
    game: &DynkinGame<S>,
    value: &ValueProcess<S>,
    cfg: &OracleConfig,
) -> Result<ExistenceCheck, OracleError> {
    let report = check_assumption(game, value);
    let mut nodes = Vec::with_capacity(game.tree().len());
    for n in 0..game.tree().len() {
        let cert = find_nash(game, value, n, cfg);
        if matches!(cert.verdict, Verdict::NoneWithinCap) {
            return Err(OracleError::Undecided(game.tree().label(n).to_string()));
        }
        nodes.push(NodeVerdict { node: n, assumption_holds: report.holds_at(n), nash_exists: cert.nash_exists() });
    }
    let assumption_everywhere = report.holds_everywhere;
    let nash_everywhere = nodes.iter().all(|v| v.nash_exists);
    let violations_refuted = nodes.iter().all(|v| v.assumption_holds || !v.nash_exists);
    let offending = if assumption_everywhere && !nash_everywhere {
        nodes.iter().find(|v| !v.nash_exists).map(|v| v.node)
    } else if !assumption_everywhere && nash_everywhere {
        nodes.iter().find(|v| !v.assumption_holds).map(|v| v.node)
    } else {
        nodes.iter().find(|v| !v.assumption_holds && v.nash_exists).map(|v| v.node)
    };
    Ok(ExistenceCheck {
        assumption_everywhere,
        nash_everywhere,
        agree: assumption_everywhere == nash_everywhere,
        violations_refuted,
        offending,
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{case_a, case_b, case_c, one_step};
    use crate::scalar::Rational;
    use crate::solver::compute_value;
    use crate::tree::StoppingTime;

    fn q(n: i64) -> Rational {
        Rational::from_i64(n)
    }

    fn stop_root(g: &DynkinGame<Rational>) -> StoppingTime {
        StoppingTime::immediate(g.tree())
    }

    fn wait_root(g: &DynkinGame<Rational>) -> StoppingTime {
        StoppingTime::at_leaves(g.tree())
    }

    #[test]
    fn best_response_max_examples() {
        // sigma stops everywhere: max(Z, Y) at the start
        let g = one_step((1, 5, 3), [0, 4]);
        assert_eq!(best_response_max(&g, &stop_root(&g), 0).value, q(5));
        let g = one_step((1, 2, 6), [0, 4]);
        let br = best_response_max(&g, &stop_root(&g), 0);
        assert_eq!(br.value, q(6));
        assert!(br.strategy.stops(0));

        let c = case_c();
        let br = best_response_max(&c, &wait_root(&c), 0);
        assert_eq!(br.value, q(5));
        assert!(br.strategy.stops(0));
        let br = best_response_max(&c, &stop_root(&c), 0);
        assert_eq!(br.value, q(4));
        assert!(!br.strategy.stops(0));
    }

    #[test]
    fn best_response_min_examples() {
        let g = one_step((1, 5, 3), [0, 4]);
        assert_eq!(best_response_min(&g, &stop_root(&g), 0).value, q(1));

        let c = case_c();
        let br = best_response_min(&c, &wait_root(&c), 0);
        assert_eq!(br.value, q(2));
        assert!(!br.strategy.stops(0));
        assert_eq!(best_response_min(&c, &stop_root(&c), 0).value, q(0));
    }

    #[test]
    fn minimax_case_c() {
        let c = case_c();
        let r = brute_force_minimax(&c, &compute_value(&c), 0, &OracleConfig::default()).unwrap();
        assert_eq!((r.maximin.clone(), r.minimax.clone(), r.epsilon_star.clone()), (q(2), q(4), q(2)));
        assert!(!r.has_value && r.sandwich_holds);
        assert!(r.equilibria.is_empty());
    }

    #[test]
    fn minimax_case_a() {
        let a = case_a();
        let r = brute_force_minimax(&a, &compute_value(&a), 0, &OracleConfig::default()).unwrap();
        assert_eq!((r.maximin.clone(), r.minimax.clone(), r.value_candidate.clone()), (q(2), q(2), q(2)));
        assert!(r.has_value);
        assert_eq!(r.equilibrium_count, 1);
    }

    #[test]
    fn minimax_at_leaf() {
        let c = case_c();
        let r = brute_force_minimax(&c, &compute_value(&c), 2, &OracleConfig::default()).unwrap();
        assert_eq!((r.maximin, r.minimax), (q(4), q(4)));
    }

    #[test]
    fn nash_examples() {
        let cfg = OracleConfig::default();
        let a = case_a();
        let cert = find_nash(&a, &compute_value(&a), 0, &cfg);
        assert!(cert.nash_exists());
        let (t, s) = cert.strategies.unwrap();
        assert!(!t.stops(0) && !s.stops(0));
        assert_eq!(cert.payoff, Some(q(2)));

        let b = case_b();
        let cert = find_nash(&b, &compute_value(&b), 0, &cfg);
        let (t, s) = cert.strategies.clone().unwrap();
        assert!(t.stops(0) && s.stops(0));
        assert_eq!(cert.payoff, Some(q(3)));

        let c = case_c();
        let cert = find_nash(&c, &compute_value(&c), 0, &cfg);
        assert_eq!(cert.verdict, Verdict::EpsilonOnly(q(2)));
        let w = cert.witness.unwrap();
        assert!(w.gain > q(0));
        assert_eq!(w.player, Player::Max);
        assert_eq!(w.gain, q(3));
    }

    #[test]
    fn improvement_examples() {
        let b = case_b();
        let tau = wait_root(&b);
        let sigma = stop_root(&b);
        let hat = improve_strategy(&b, &tau, &sigma, 0);
        assert!(hat.stops(0));
        let (x, y, z) = b.payoffs();
        let r = crate::tree::realized_payoff_of(b.tree(), (x, y, z), &hat, &sigma, 0, 1).unwrap();
        assert_eq!(r, q(3));
        assert_eq!(modified_payoff(&b, &tau, &sigma, 0, 1).unwrap(), q(3));

        // Z ≤ Y everywhere: unchanged
        let a = case_a();
        assert_eq!(improve_strategy(&a, &wait_root(&a), &stop_root(&a), 0), wait_root(&a));
        // tau = sigma: unchanged
        assert_eq!(improve_strategy(&b, &tau, &tau, 0), tau);
    }

    #[test]
    fn epsilon_examples() {
        let c = case_c();
        let v = compute_value(&c);
        let (t, s) = (stop_root(&c), stop_root(&c));
        assert!(certify_epsilon(&c, &v, &t, &s, 0, &q(2)).certified);
        assert!(!certify_epsilon(&c, &v, &t, &s, 0, &q(1)).certified);

        let a = case_a();
        let va = compute_value(&a);
        let (t, s) = optimal_stopping_times(&a, &va);
        assert!(certify_epsilon(&a, &va, &t, &s, 0, &q(0)).certified);
    }

    #[test]
    fn existence_examples() {
        let cfg = OracleConfig::default();
        let a = case_a();
        let chk = existence_check(&a, &compute_value(&a), &cfg).unwrap();
        assert!(chk.agree && chk.assumption_everywhere && chk.nash_everywhere);
        let c = case_c();
        let chk = existence_check(&c, &compute_value(&c), &cfg).unwrap();
        assert!(chk.agree && !chk.assumption_everywhere && !chk.nash_everywhere);
        assert!(chk.violations_refuted);
        assert_eq!(chk.offending, None);
    }
}
