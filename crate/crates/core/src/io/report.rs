//! JSON reports. Everything here is a pure function of its inputs, so the
//! same input and seed always give the same bytes. Timings are left out.

use serde_json::{json, Value};

use super::{GameDoc, FORMAT_VERSION};
use crate::lattice::{build_lattice, convergence_study, LatticeError, LatticeSpec, StudyRow};
use crate::oracle::{
    brute_force_minimax, find_nash, existence_check, Deviation, EquilibriumCertificate, MinimaxReport,
    OracleConfig, OracleError, Verdict,
};
use crate::scalar::Scalar;
use crate::solver::{check_assumption, optimal_stopping_times, AssumptionReport, DynkinGame, ValueProcess, ViolationKind};
use crate::tree::{FiltrationTree, NodeId, StoppingTime};

pub const TOOL: &str = "dynkin";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn header(command: &str, seed: Option<u64>) -> Value {
    json!({
        "format_version": FORMAT_VERSION,
        "tool": TOOL,
        "version": VERSION,
        "command": command,
        "seed": seed,
    })
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

/// Internal nodes at which `st` is flagged to stop.
fn stop_labels<S: Scalar>(tree: &FiltrationTree<S>, st: &StoppingTime) -> Vec<String> {
    (0..tree.len()).filter(|&n| !tree.is_leaf(n) && st.stops(n)).map(|n| tree.label(n).to_string()).collect()
}

/// Internal nodes at which `st`, started at `start`, actually stops.
fn realized_labels<S: Scalar>(tree: &FiltrationTree<S>, st: &StoppingTime, start: NodeId) -> Vec<String> {
    let hits = st.first_hits(tree, start);
    (0..tree.len()).filter(|&n| hits[n] && !tree.is_leaf(n)).map(|n| tree.label(n).to_string()).collect()
}

pub fn assumption_json<S: Scalar>(tree: &FiltrationTree<S>, report: &AssumptionReport<S>) -> Value {
    let violations: Vec<Value> = report
        .violations
        .iter()
        .map(|v| {
            json!({
                "node": tree.label(v.node),
                "kind": match v.kind { ViolationKind::Below => "below", ViolationKind::Above => "above" },
                "gap": v.gap.to_json(),
            })
        })
        .collect();
    json!({ "holds_everywhere": report.holds_everywhere, "violations": violations })
}

pub fn solve_report<S: Scalar>(doc: &GameDoc<S>, value: &ValueProcess<S>) -> Value {
    let game = &doc.game;
    let tree = game.tree();
    let (x, y, z) = game.payoffs();
    let nodes: Vec<Value> = (0..tree.len())
        .map(|n| {
            json!({
                "id": tree.label(n),
                "time": tree.time(n),
                "x": x[n].to_json(),
                "y": y[n].to_json(),
                "z": z[n].to_json(),
                "lower": value.lower[n].to_json(),
                "upper": value.upper[n].to_json(),
                "value": value.v[n].to_json(),
                "continuation": value.continuation(n).map(|c| c.to_json()),
            })
        })
        .collect();
    let (tau, sigma) = optimal_stopping_times(game, value);
    let assumption = check_assumption(game, value);
    merge(
        header("solve", doc.seed),
        json!({
            "mode": S::MODE,
            "flavor": game.flavor(),
            "warnings": game.warnings(),
            "nodes": nodes,
            "tau_star_stops": stop_labels(tree, &tau),
            "sigma_star_stops": stop_labels(tree, &sigma),
            "assumption": assumption_json(tree, &assumption),
        }),
    )
}

fn minimax_json<S: Scalar>(tree: &FiltrationTree<S>, r: &MinimaxReport<S>) -> Value {
    let pairs: Vec<Value> = r
        .equilibria
        .iter()
        .map(|(t, s)| json!({ "tau_stops": realized_labels(tree, t, r.node), "sigma_stops": realized_labels(tree, s, r.node) }))
        .collect();
    json!({
        "maximin": r.maximin.to_json(),
        "minimax": r.minimax.to_json(),
        "value": r.value_candidate.to_json(),
        "has_value": r.has_value,
        "epsilon_star": r.epsilon_star.to_json(),
        "sandwich_holds": r.sandwich_holds,
        "enumerated": r.enumerated,
        "equilibrium_count": r.equilibrium_count.to_string(),
        "equilibria": pairs,
    })
}

fn deviation_json<S: Scalar>(tree: &FiltrationTree<S>, d: &Deviation<S>, start: NodeId) -> Value {
    json!({
        "player": d.player,
        "against": {
            "tau_stops": realized_labels(tree, &d.tau, start),
            "sigma_stops": realized_labels(tree, &d.sigma, start),
        },
        "deviation_stops": realized_labels(tree, &d.deviation, start),
        "baseline": d.baseline.to_json(),
        "deviated": d.deviated.to_json(),
        "gain": d.gain.to_json(),
    })
}

pub fn certificate_json<S: Scalar>(tree: &FiltrationTree<S>, c: &EquilibriumCertificate<S>) -> Value {
    let (verdict, epsilon) = match &c.verdict {
        Verdict::NashExists => ("nash", Value::Null),
        Verdict::EpsilonOnly(e) => ("epsilon_only", e.to_json()),
        Verdict::NoneWithinCap => ("none_within_cap", Value::Null),
    };
    json!({
        "verdict": verdict,
        "epsilon": epsilon,
        "source": c.source,
        "payoff": c.payoff.as_ref().map(|p| p.to_json()),
        "strategies": c.strategies.as_ref().map(|(t, s)| json!({
            "tau_stops": realized_labels(tree, t, c.node),
            "sigma_stops": realized_labels(tree, s, c.node),
        })),
        "witness": c.witness.as_ref().map(|d| deviation_json(tree, d, c.node)),
    })
}

/// Minimax report and certificate per start node, plus the global
/// assumption/equilibrium comparison.
pub fn oracle_report<S: Scalar>(
    doc: &GameDoc<S>,
    value: &ValueProcess<S>,
    starts: &[NodeId],
    cfg: &OracleConfig,
) -> Result<Value, OracleError> {
    let game: &DynkinGame<S> = &doc.game;
    let tree = game.tree();
    let mut per_start = Vec::with_capacity(starts.len());
    for &n in starts {
        let minimax = brute_force_minimax(game, value, n, cfg)?;
        let cert = find_nash(game, value, n, cfg);
        per_start.push(json!({
            "start": tree.label(n),
            "minimax": minimax_json(tree, &minimax),
            "certificate": certificate_json(tree, &cert),
        }));
    }
    let existence = existence_check(game, value, cfg)?;
    let assumption = check_assumption(game, value);
    Ok(merge(
        header("oracle", doc.seed),
        json!({
            "mode": S::MODE,
            "cap": cfg.cap.to_string(),
            "starts": per_start,
            "assumption": assumption_json(tree, &assumption),
            "existence": {
                "assumption_everywhere": existence.assumption_everywhere,
                "nash_everywhere": existence.nash_everywhere,
                "agree": existence.agree,
                "violations_refuted": existence.violations_refuted,
                "offending": existence.offending.map(|n| tree.label(n).to_string()),
                "nodes_without_nash": existence.nodes.iter().filter(|v| !v.nash_exists)
                    .map(|v| tree.label(v.node).to_string()).collect::<Vec<_>>(),
            },
        }),
    ))
}

/// Study table plus a per-lattice summary. Rows are returned separately for
/// CSV output, where timings live.
pub fn lattice_report(
    spec: &LatticeSpec,
    epsilons: &[f64],
    steps: &[usize],
    seed: Option<u64>,
) -> Result<(Value, Vec<StudyRow>), LatticeError> {
    let rows = convergence_study(spec, epsilons, steps)?;
    let mut lattices = Vec::with_capacity(steps.len());
    for &n in steps {
        let game = build_lattice(&spec.with_steps(n))?;
        let tree = game.tree();
        let terminal: Vec<Value> = tree.leaves().map(|l| game.z()[l].to_json()).collect();
        lattices.push(json!({ "steps": n, "nodes": tree.len(), "terminal_z": terminal }));
    }
    let cells: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "steps": r.steps,
                "epsilon": r.epsilon,
                "value_root": r.value_root,
                "gap_max": r.gap_max,
                "gap_min": r.gap_min,
                "e_tau": r.e_tau,
                "e_sigma": r.e_sigma,
                "certified": r.certified,
                "drift_violations": r.drift_violations,
            })
        })
        .collect();
    let report = merge(
        header("lattice", seed),
        json!({ "spec": spec, "lattices": lattices, "cells": cells }),
    );
    Ok((report, rows))
}

pub fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{case_a, case_c};
    use crate::solver::compute_value;

    #[test]
    fn solve_report_case_a() {
        let doc = GameDoc::new(case_a());
        let r = solve_report(&doc, &compute_value(&doc.game));
        assert_eq!(r["nodes"][0]["value"], json!(2));
        assert_eq!(r["assumption"]["holds_everywhere"], json!(true));
        assert_eq!(r["format_version"], json!(1));
        assert_eq!(r["tau_star_stops"], json!([]));
    }

    #[test]
    fn oracle_report_case_c() {
        let doc = GameDoc::new(case_c());
        let v = compute_value(&doc.game);
        let r = oracle_report(&doc, &v, &[0], &OracleConfig::default()).unwrap();
        let s = &r["starts"][0];
        assert_eq!((s["minimax"]["maximin"].clone(), s["minimax"]["minimax"].clone()), (json!(2), json!(4)));
        assert_eq!(s["certificate"]["verdict"], json!("epsilon_only"));
        assert_eq!(s["certificate"]["witness"]["gain"], json!(3));
        assert_eq!(r["existence"]["agree"], json!(true));
        let again = oracle_report(&doc, &v, &[0], &OracleConfig::default()).unwrap();
        assert_eq!(to_pretty(&r), to_pretty(&again));
    }
}
