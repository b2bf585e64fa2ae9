//! Game files and reports.
//!
//! A game file is a JSON document:
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "mode": "rational",
//!   "horizon": 1,
//!   "nodes": [
//!     {"id": "n0", "time": 0, "x": 1, "y": 5, "z": 3},
//!     {"id": "u", "time": 1, "parent": "n0", "probability": "1/2", "x": 0, "y": 0, "z": 0},
//!     {"id": "d", "time": 1, "parent": "n0", "probability": "1/2", "x": 4, "y": 4, "z": 4}
//!   ]
//! }
//! ```
//!
//! Rational files take integers and `"p/q"` strings; float files take JSON
//! numbers only. Optional fields: `tolerance` (float mode), `start` (node ids
//! for subgame queries) and `seed` (set by the generator).

pub mod report;

use std::marker::PhantomData;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::scalar::{parse_rational, Arithmetic, Rational, Scalar, DEFAULT_TOLERANCE};
use crate::solver::{DynkinGame, SolverError};
use crate::tree::{validate_tree, FiltrationTree, NodeId, NodeSpec, TreeError, TreeSpec, ValidationReport};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("invalid tree: {0}")]
    Validation(ValidationReport),
    #[error("unknown start node {0}")]
    UnknownStart(String),
    #[error("cannot convert {value} to {mode}: {reason}")]
    Conversion { value: String, mode: Arithmetic, reason: String },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        let message = e.to_string();
        // serde_json appends " at line L column C"; keep the message bare
        let message = match message.rfind(" at line ") {
            Some(i) => message[..i].to_string(),
            None => message,
        };
        IoError::Syntax { line: e.line(), column: e.column(), message }
    }
}

/// A scalar read through [`Scalar::from_json`], so that mode errors carry the
/// parser position.
struct Num<S>(S);

impl<'de, S: Scalar> Deserialize<'de> for Num<S> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        S::from_json(&v).map(Num).map_err(de::Error::custom)
    }
}

#[derive(Deserialize)]
struct Header {
    format_version: u32,
    mode: Arithmetic,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound = "S: Scalar")]
struct RawNode<S> {
    id: String,
    time: usize,
    #[serde(default)]
    parent: Option<String>,
    #[serde(default)]
    probability: Option<Num<S>>,
    x: Num<S>,
    y: Num<S>,
    z: Num<S>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound = "S: Scalar")]
struct RawFile<S> {
    #[allow(dead_code)]
    format_version: u32,
    #[allow(dead_code)]
    mode: Arithmetic,
    horizon: usize,
    #[serde(default)]
    tolerance: Option<f64>,
    #[serde(default)]
    start: Option<Vec<String>>,
    #[serde(default)]
    seed: Option<u64>,
    nodes: Vec<RawNode<S>>,
    #[serde(skip)]
    _mode: PhantomData<S>,
}

/// A parsed game with the optional file metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct GameDoc<S> {
    pub game: DynkinGame<S>,
    pub start: Option<Vec<String>>,
    pub seed: Option<u64>,
}

impl<S: Scalar> GameDoc<S> {
    pub fn new(game: DynkinGame<S>) -> Self {
        GameDoc { game, start: None, seed: None }
    }

    /// Start nodes named in the file, or `default` when there are none.
    pub fn start_nodes(&self, default: impl FnOnce(&FiltrationTree<S>) -> Vec<NodeId>) -> Result<Vec<NodeId>, IoError> {
        match &self.start {
            Some(ids) => resolve_nodes(self.game.tree(), ids),
            None => Ok(default(self.game.tree())),
        }
    }
}

pub fn resolve_nodes<S: Scalar>(tree: &FiltrationTree<S>, ids: &[String]) -> Result<Vec<NodeId>, IoError> {
    ids.iter().map(|id| tree.node_id(id).map_err(|_| IoError::UnknownStart(id.clone()))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyGame {
    Rational(GameDoc<Rational>),
    Float(GameDoc<f64>),
}

impl AnyGame {
    pub fn mode(&self) -> Arithmetic {
        match self {
            AnyGame::Rational(_) => Arithmetic::Rational,
            AnyGame::Float(_) => Arithmetic::Float,
        }
    }

    /// Explicit change of arithmetic. Floats become the rational with the
    /// same shortest decimal expansion, so `0.1` becomes `1/10`.
    pub fn convert(self, mode: Arithmetic, tolerance: Option<f64>) -> Result<AnyGame, IoError> {
        match (self, mode) {
            (AnyGame::Rational(d), Arithmetic::Float) => {
                let tol = tolerance.unwrap_or(DEFAULT_TOLERANCE);
                Ok(AnyGame::Float(map_doc(d, tol, |v| Ok(v.to_f64()))?))
            }
            (AnyGame::Float(d), Arithmetic::Rational) => Ok(AnyGame::Rational(map_doc(d, 0.0, decimal_rational)?)),
            (AnyGame::Float(d), Arithmetic::Float) => match tolerance {
                Some(tol) => Ok(AnyGame::Float(map_doc(d, tol, |v| Ok(*v))?)),
                None => Ok(AnyGame::Float(d)),
            },
            (same, _) => Ok(same),
        }
    }
}

fn decimal_rational(v: &f64) -> Result<Rational, IoError> {
    let err = |reason: &str| IoError::Conversion { value: v.to_string(), mode: Arithmetic::Rational, reason: reason.into() };
    if !v.is_finite() {
        return Err(err("not finite"));
    }
    let text = v.to_string();
    let (int, frac) = text.split_once('.').unwrap_or((&text, ""));
    let digits = format!("{int}{frac}");
    let den = format!("1{}", "0".repeat(frac.len()));
    parse_rational(&format!("{digits}/{den}")).map_err(|e| err(&e))
}

fn map_doc<A: Scalar, B: Scalar>(
    doc: GameDoc<A>,
    tolerance: f64,
    f: impl Fn(&A) -> Result<B, IoError>,
) -> Result<GameDoc<B>, IoError> {
    let spec = doc.game.tree().to_spec().map_err(SolverError::from)?;
    let nodes = spec
        .nodes
        .into_iter()
        .map(|n| {
            Ok(NodeSpec {
                id: n.id,
                time: n.time,
                parent: n.parent,
                probability: n.probability.as_ref().map(&f).transpose()?,
            })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    let tree_spec = TreeSpec { horizon: spec.horizon, tolerance, nodes };
    let report = validate_tree(&tree_spec);
    if !report.is_ok() {
        return Err(IoError::Validation(report));
    }
    let tree = FiltrationTree::new(tree_spec).map_err(SolverError::from)?;
    let (x, y, z) = doc.game.payoffs();
    let mut triples = Vec::with_capacity(tree.len());
    for n in 0..tree.len() {
        triples.push((f(&x[n])?, f(&y[n])?, f(&z[n])?));
    }
    let game = DynkinGame::from_fn(tree, |n| triples[n].clone())?;
    Ok(GameDoc { game, start: doc.start, seed: doc.seed })
}

/// Parses a game file in whatever mode it declares.
pub fn parse_game(text: &str) -> Result<AnyGame, IoError> {
    let header: Header = serde_json::from_str(text)?;
    if header.format_version != FORMAT_VERSION {
        return Err(IoError::Version(header.format_version));
    }
    match header.mode {
        Arithmetic::Rational => parse_game_as::<Rational>(text).map(AnyGame::Rational),
        Arithmetic::Float => parse_game_as::<f64>(text).map(AnyGame::Float),
    }
}

/// Parses a game file that must declare the mode of `S`.
pub fn parse_game_as<S: Scalar>(text: &str) -> Result<GameDoc<S>, IoError> {
    let header: Header = serde_json::from_str(text)?;
    if header.format_version != FORMAT_VERSION {
        return Err(IoError::Version(header.format_version));
    }
    if header.mode != S::MODE {
        return Err(IoError::Syntax {
            line: 1,
            column: 1,
            message: format!("file declares mode {}, expected {}", header.mode, S::MODE),
        });
    }
    let raw: RawFile<S> = serde_json::from_str(text)?;
    let tolerance = match S::MODE {
        Arithmetic::Rational => 0.0,
        Arithmetic::Float => raw.tolerance.unwrap_or(DEFAULT_TOLERANCE),
    };
    let mut payoffs = Vec::with_capacity(raw.nodes.len());
    let mut nodes = Vec::with_capacity(raw.nodes.len());
    for n in raw.nodes {
        payoffs.push((n.id.clone(), (n.x.0, n.y.0, n.z.0)));
        nodes.push(NodeSpec { id: n.id, time: n.time, parent: n.parent, probability: n.probability.map(|p| p.0) });
    }
    let spec = TreeSpec { horizon: raw.horizon, tolerance, nodes };
    let report = validate_tree(&spec);
    if !report.is_ok() {
        return Err(IoError::Validation(report));
    }
    let tree = match FiltrationTree::new(spec) {
        Ok(t) => t,
        Err(TreeError::Invalid(r)) => return Err(IoError::Validation(r)),
        Err(e) => return Err(SolverError::from(e).into()),
    };
    // tree order may differ from file order
    let mut by_id: std::collections::HashMap<String, (S, S, S)> = payoffs.into_iter().collect();
    let triples: Vec<(S, S, S)> =
        (0..tree.len()).map(|n| by_id.remove(tree.label(n)).expect("validated ids")).collect();
    let game = DynkinGame::from_fn(tree, |n| triples[n].clone())?;
    let doc = GameDoc { game, start: raw.start, seed: raw.seed };
    if let Some(ids) = &doc.start {
        resolve_nodes(doc.game.tree(), ids)?;
    }
    Ok(doc)
}

#[derive(Serialize)]
struct OutNode {
    id: String,
    time: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    parent: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probability: Option<Value>,
    x: Value,
    y: Value,
    z: Value,
}

#[derive(Serialize)]
struct OutFile {
    format_version: u32,
    mode: Arithmetic,
    horizon: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    start: Option<Vec<String>>,
    nodes: Vec<OutNode>,
}

/// Serializes a game file. Numbers keep their exact form, so parsing the
/// output reproduces the game.
pub fn write_game<S: Scalar>(doc: &GameDoc<S>) -> Result<String, IoError> {
    let game = &doc.game;
    let spec = game.tree().to_spec().map_err(SolverError::from)?;
    let (x, y, z) = game.payoffs();
    let nodes = spec
        .nodes
        .into_iter()
        .enumerate()
        .map(|(n, s)| OutNode {
            id: s.id,
            time: s.time,
            parent: s.parent,
            probability: s.probability.map(|p| p.to_json()),
            x: x[n].to_json(),
            y: y[n].to_json(),
            z: z[n].to_json(),
        })
        .collect();
    let out = OutFile {
        format_version: FORMAT_VERSION,
        mode: S::MODE,
        horizon: spec.horizon,
        tolerance: match S::MODE {
            Arithmetic::Float => Some(spec.tolerance),
            Arithmetic::Rational => None,
        },
        seed: doc.seed,
        start: doc.start.clone(),
        nodes,
    };
    let mut text = serde_json::to_string_pretty(&out).expect("serializable");
    text.push('\n');
    Ok(text)
}

pub fn write_any(game: &AnyGame) -> Result<String, IoError> {
    match game {
        AnyGame::Rational(d) => write_game(d),
        AnyGame::Float(d) => write_game(d),
    }
}
