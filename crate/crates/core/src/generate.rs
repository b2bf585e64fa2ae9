//! Seeded random games for property tests and the `generate` command.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::{Rational, Scalar};
use crate::solver::DynkinGame;
use crate::tree::{stopping_time_count, FiltrationTree, NodeSpec, TreeSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenerateMode {
    /// `X ≤ Z ≤ Y`, by sorting the three draws.
    Standard,
    /// Independent draws.
    General,
    /// `Z` clamped into `[X ∧ Y, X ∨ Y]`.
    ZBetween,
    /// `Z = Y`.
    ZEqualsY,
}

impl fmt::Display for GenerateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GenerateMode::Standard => "standard",
            GenerateMode::General => "general",
            GenerateMode::ZBetween => "z-between",
            GenerateMode::ZEqualsY => "z-equals-y",
        })
    }
}

impl FromStr for GenerateMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(GenerateMode::Standard),
            "general" => Ok(GenerateMode::General),
            "z-between" => Ok(GenerateMode::ZBetween),
            "z-equals-y" => Ok(GenerateMode::ZEqualsY),
            other => Err(format!("unknown mode `{other}` (expected standard, general, z-between or z-equals-y)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorConfig {
    /// Largest horizon; each game draws its horizon from `1..=depth`.
    pub depth: usize,
    /// Each internal node draws its child count from `1..=branch`.
    pub branch: usize,
    /// Payoffs are integers in `[-payoff_bound, payoff_bound]`.
    pub payoff_bound: i64,
    pub mode: GenerateMode,
    /// Trees with more root stopping times than this are redrawn.
    pub max_stopping_times: u128,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            depth: 4,
            branch: 3,
            payoff_bound: 9,
            mode: GenerateMode::General,
            max_stopping_times: 4096,
        }
    }
}

/// Game number `index` of the corpus for `seed`. Independent of how many
/// other games are drawn.
pub fn generate_game(cfg: &GeneratorConfig, seed: u64, index: u64) -> DynkinGame<Rational> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    loop {
        let tree = random_tree(cfg, &mut rng);
        let fits = stopping_time_count(&tree, tree.root()).map(|c| c <= cfg.max_stopping_times).unwrap_or(false);
        if fits {
            return random_payoffs(cfg, tree, &mut rng);
        }
    }
}

pub fn generate_corpus(cfg: &GeneratorConfig, seed: u64, count: usize) -> Vec<DynkinGame<Rational>> {
    (0..count as u64).map(|i| generate_game(cfg, seed, i)).collect()
}

fn random_tree(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> FiltrationTree<Rational> {
    let horizon = rng.gen_range(1..=cfg.depth.max(1));
    let mut nodes = vec![NodeSpec { id: "n0".to_string(), time: 0, parent: None, probability: None }];
    let mut frontier = vec![0usize];
    for t in 1..=horizon {
        let mut next = Vec::new();
        for &p in &frontier {
            let k = rng.gen_range(1..=cfg.branch.max(1));
            let weights: Vec<i64> = (0..k).map(|_| rng.gen_range(1..=4)).collect();
            let total: i64 = weights.iter().sum();
            let parent = nodes[p].id.clone();
            for w in weights {
                let id = nodes.len();
                nodes.push(NodeSpec {
                    id: format!("n{id}"),
                    time: t,
                    parent: Some(parent.clone()),
                    probability: Some(Rational::from_ratio(w, total)),
                });
                next.push(id);
            }
        }
        frontier = next;
    }
    FiltrationTree::new(TreeSpec { horizon, tolerance: 0.0, nodes }).expect("generated tree is valid")
}

fn random_payoffs(cfg: &GeneratorConfig, tree: FiltrationTree<Rational>, rng: &mut ChaCha8Rng) -> DynkinGame<Rational> {
    let b = cfg.payoff_bound;
    let leaf: Vec<bool> = (0..tree.len()).map(|n| tree.is_leaf(n)).collect();
    let mut draw = || rng.gen_range(-b..=b);
    let triples: Vec<(i64, i64, i64)> = leaf
        .iter()
        .map(|&is_leaf| {
            if is_leaf {
                let v = draw();
                return (v, v, v);
            }
            let (x, y, z) = (draw(), draw(), draw());
            match cfg.mode {
                GenerateMode::Standard => {
                    let mut s = [x, y, z];
                    s.sort_unstable();
                    (s[0], s[2], s[1])
                }
                GenerateMode::General => (x, y, z),
                GenerateMode::ZBetween => (x, y, z.clamp(x.min(y), x.max(y))),
                GenerateMode::ZEqualsY => (x, y, y),
            }
        })
        .collect();
    let q = Rational::from_i64;
    DynkinGame::from_fn(tree, |n| {
        let (x, y, z) = triples[n];
        (q(x), q(y), q(z))
    })
    .expect("generated game is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{check_assumption, check_standard, compute_value};

    fn cfg(mode: GenerateMode) -> GeneratorConfig {
        GeneratorConfig { mode, ..GeneratorConfig::default() }
    }

    #[test]
    fn same_seed_same_game() {
        let c = cfg(GenerateMode::General);
        assert_eq!(generate_game(&c, 7, 3), generate_game(&c, 7, 3));
        assert_ne!(generate_game(&c, 7, 3), generate_game(&c, 7, 4));
    }

    #[test]
    fn modes_hold_their_promises() {
        for g in generate_corpus(&cfg(GenerateMode::Standard), 1, 50) {
            assert!(check_standard(&g));
        }
        for g in generate_corpus(&cfg(GenerateMode::ZBetween), 2, 50) {
            assert!(check_assumption(&g, &compute_value(&g)).holds_everywhere);
        }
        for g in generate_corpus(&cfg(GenerateMode::ZEqualsY), 3, 50) {
            assert_eq!(g.y(), g.z());
        }
    }

    #[test]
    fn respects_shape_limits() {
        let c = GeneratorConfig { max_stopping_times: 64, ..cfg(GenerateMode::General) };
        for g in generate_corpus(&c, 4, 50) {
            let t = g.tree();
            assert!(t.horizon() >= 1 && t.horizon() <= 4);
            assert!((0..t.len()).all(|n| t.children(n).len() <= 3));
            assert!(stopping_time_count(t, 0).unwrap() <= 64);
            assert!(g.warnings().is_empty());
        }
    }
}
