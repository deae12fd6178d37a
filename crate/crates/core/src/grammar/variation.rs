use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ptc2::grow;
use super::tree::DerivationTree;
use super::{Grammar, Symbol};
use crate::seeds::rng_from_seed;

/// Variation settings. Rates are conventional GP defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationConfig {
    pub max_nodes: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
}

impl Default for VariationConfig {
    fn default() -> Self {
        Self {
            max_nodes: super::DEFAULT_MAX_NODES,
            crossover_prob: 0.8,
            mutation_prob: 0.2,
        }
    }
}

/// Subtree crossover. A nonterminal symbol present in both parents is drawn
/// uniformly, then one node carrying it per parent, and the subtrees are
/// exchanged. An offspring over `max_nodes` is replaced by its parent.
pub fn crossover(
    grammar: &Grammar,
    a: &DerivationTree,
    b: &DerivationTree,
    max_nodes: usize,
    seed: u64,
) -> (DerivationTree, DerivationTree) {
    let mut rng = rng_from_seed(seed);
    let symbols_of = |t: &DerivationTree| -> BTreeSet<usize> {
        t.nodes()
            .iter()
            .filter_map(|n| match n.symbol {
                Symbol::NonTerminal(id) => Some(id),
                Symbol::Terminal(_) => None,
            })
            .collect()
    };
    let common: Vec<usize> = symbols_of(a).intersection(&symbols_of(b)).copied().collect();
    if common.is_empty() {
        return (a.clone(), b.clone());
    }
    let symbol = Symbol::NonTerminal(common[rng.gen_range(0..common.len())]);
    let sites = |t: &DerivationTree| -> Vec<usize> {
        t.nodes()
            .iter()
            .enumerate()
            .filter(|(_, n)| n.symbol == symbol)
            .map(|(i, _)| i)
            .collect()
    };
    let in_a = sites(a);
    let in_b = sites(b);
    let i = in_a[rng.gen_range(0..in_a.len())];
    let j = in_b[rng.gen_range(0..in_b.len())];
    crossover_at(grammar, a, i, b, j, max_nodes)
}

/// Exchanges the subtree at `i` in `a` with the subtree at `j` in `b`. The
/// two nodes must carry the same symbol.
pub fn crossover_at(
    grammar: &Grammar,
    a: &DerivationTree,
    i: usize,
    b: &DerivationTree,
    j: usize,
    max_nodes: usize,
) -> (DerivationTree, DerivationTree) {
    assert_eq!(a.nodes()[i].symbol, b.nodes()[j].symbol, "crossover points must match");
    let child_a = a.replace_subtree(grammar, i, b.subtree(j));
    let child_b = b.replace_subtree(grammar, j, a.subtree(i));
    let keep = |child: DerivationTree, parent: &DerivationTree| {
        if child.node_count() > max_nodes {
            parent.clone()
        } else {
            child
        }
    };
    (keep(child_a, a), keep(child_b, b))
}

/// Subtree mutation: regrows a uniformly chosen nonterminal node with PTC2
/// under the budget left by the rest of the tree.
pub fn mutate(grammar: &Grammar, tree: &DerivationTree, max_nodes: usize, seed: u64) -> DerivationTree {
    let mut rng = rng_from_seed(seed);
    let candidates = tree.nonterminal_indices();
    let index = candidates[rng.gen_range(0..candidates.len())];
    mutate_with(grammar, tree, index, max_nodes, &mut rng)
}

/// Regrows the subtree rooted at `index`.
pub fn mutate_at(
    grammar: &Grammar,
    tree: &DerivationTree,
    index: usize,
    max_nodes: usize,
    seed: u64,
) -> DerivationTree {
    let mut rng = rng_from_seed(seed);
    mutate_with(grammar, tree, index, max_nodes, &mut rng)
}

fn mutate_with<R: Rng>(
    grammar: &Grammar,
    tree: &DerivationTree,
    index: usize,
    max_nodes: usize,
    rng: &mut R,
) -> DerivationTree {
    let Symbol::NonTerminal(nt) = tree.nodes()[index].symbol else {
        return tree.clone();
    };
    let outside = tree.node_count() - tree.subtree_size(index);
    if outside >= max_nodes {
        return tree.clone();
    }
    match grow(grammar, nt, max_nodes - outside, rng) {
        Ok(subtree) => tree.replace_subtree(grammar, index, &subtree),
        Err(_) => tree.clone(),
    }
}
