//! Probabilistic Tree Creation 2 adapted to context-free grammars.
//!
//! A target size is drawn uniformly from `[min_size(root), max_nodes]`. Open
//! nonterminal slots are expanded in random order with alternatives drawn
//! uniformly among those that still admit a complete tree inside the budget,
//! until the committed size reaches the target. Remaining slots are then
//! closed with minimum-size alternatives.

use rand::Rng;

use super::tree::{DerivationTree, Node};
use super::{Grammar, GrammarError, Symbol};
use crate::seeds::rng_from_seed;

pub fn sample_ptc2(
    grammar: &Grammar,
    max_nodes: usize,
    seed: u64,
) -> Result<DerivationTree, GrammarError> {
    let mut rng = rng_from_seed(seed);
    let nodes = grow(grammar, grammar.start(), max_nodes, &mut rng)?;
    Ok(DerivationTree::from_parts_unchecked(grammar, nodes))
}

struct Slot {
    symbol: Symbol,
    choice: u32,
    children: Vec<usize>,
}

/// Grows a complete derivation rooted at `root` with at most `max_nodes`
/// nodes, returned in pre-order.
pub(crate) fn grow<R: Rng + ?Sized>(
    grammar: &Grammar,
    root: usize,
    max_nodes: usize,
    rng: &mut R,
) -> Result<Vec<Node>, GrammarError> {
    let infeasible = || GrammarError::BudgetInfeasible {
        symbol: grammar.nonterminal_name(root).to_string(),
        budget: max_nodes,
    };
    let root_min = grammar.min_size(root).ok_or_else(infeasible)?;
    if root_min > max_nodes {
        return Err(infeasible());
    }
    let target = rng.gen_range(root_min..=max_nodes);

    let mut arena = vec![Slot {
        symbol: Symbol::NonTerminal(root),
        choice: 0,
        children: Vec::new(),
    }];
    let mut open = vec![0usize];
    let mut created = 1usize;
    // Nodes still needed to close every open slot minimally.
    let mut reserve = root_min - 1;

    let expand = |arena: &mut Vec<Slot>,
                      open: &mut Vec<usize>,
                      created: &mut usize,
                      reserve: &mut usize,
                      slot: usize,
                      choice: usize| {
        let Symbol::NonTerminal(nt) = arena[slot].symbol else {
            unreachable!("only nonterminals are open")
        };
        arena[slot].choice = choice as u32;
        for &sym in &grammar.alternatives(nt)[choice] {
            let id = arena.len();
            arena.push(Slot {
                symbol: sym,
                choice: 0,
                children: Vec::new(),
            });
            arena[slot].children.push(id);
            *created += 1;
            if let Symbol::NonTerminal(child) = sym {
                *reserve += grammar.min_size(child).expect("feasible alternative") - 1;
                open.push(id);
            }
        }
    };

    while !open.is_empty() && created + reserve < target {
        let pick = rng.gen_range(0..open.len());
        let slot = open.swap_remove(pick);
        let Symbol::NonTerminal(nt) = arena[slot].symbol else {
            unreachable!()
        };
        reserve -= grammar.min_size(nt).expect("open slots are productive") - 1;
        let feasible: Vec<usize> = (0..grammar.alternatives(nt).len())
            .filter(|&alt| {
                grammar
                    .alt_min_size(nt, alt)
                    .is_some_and(|size| created + (size - 1) + reserve <= max_nodes)
            })
            .collect();
        let choice = feasible[rng.gen_range(0..feasible.len())];
        expand(&mut arena, &mut open, &mut created, &mut reserve, slot, choice);
    }

    while let Some(slot) = open.pop() {
        let Symbol::NonTerminal(nt) = arena[slot].symbol else {
            unreachable!()
        };
        let min = grammar.min_size(nt).expect("open slots are productive");
        reserve -= min - 1;
        let minimal: Vec<usize> = (0..grammar.alternatives(nt).len())
            .filter(|&alt| grammar.alt_min_size(nt, alt) == Some(min))
            .collect();
        let choice = minimal[rng.gen_range(0..minimal.len())];
        expand(&mut arena, &mut open, &mut created, &mut reserve, slot, choice);
    }
    debug_assert!(created <= max_nodes);

    let mut nodes = Vec::with_capacity(arena.len());
    let mut stack = vec![0usize];
    while let Some(slot) = stack.pop() {
        nodes.push(Node {
            symbol: arena[slot].symbol,
            choice: arena[slot].choice,
        });
        stack.extend(arena[slot].children.iter().rev());
    }
    Ok(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{encode, DEFAULT_MAX_NODES};

    #[test]
    fn single_derivation() {
        let g = Grammar::parse("A ::= 'x'").unwrap();
        let t = sample_ptc2(&g, 8, 3).unwrap();
        assert_eq!(t.node_count(), 2);
        assert_eq!(t.yield_text(&g, 0), "x");
    }

    #[test]
    fn infeasible_budget() {
        let g = Grammar::parse("A ::= 'x' 'y' 'z'").unwrap();
        assert!(matches!(
            sample_ptc2(&g, 3, 0).unwrap_err(),
            GrammarError::BudgetInfeasible { budget: 3, .. }
        ));
        assert!(sample_ptc2(&g, 4, 0).is_ok());
    }

    #[test]
    fn deterministic_per_seed_and_within_budget() {
        let g = Grammar::default_edit_grammar();
        for seed in 0..50 {
            let a = sample_ptc2(&g, DEFAULT_MAX_NODES, seed).unwrap();
            let b = sample_ptc2(&g, DEFAULT_MAX_NODES, seed).unwrap();
            assert_eq!(a, b);
            a.validate(&g, DEFAULT_MAX_NODES).unwrap();
        }
        let distinct: std::collections::HashSet<_> = (0..50)
            .map(|s| encode(&sample_ptc2(&g, DEFAULT_MAX_NODES, s).unwrap()))
            .collect();
        assert!(distinct.len() > 40);
    }

    #[test]
    fn tight_budget_is_respected() {
        let g = Grammar::default_edit_grammar();
        let min = g.min_size(g.start()).unwrap();
        for seed in 0..20 {
            let t = sample_ptc2(&g, min, seed).unwrap();
            assert_eq!(t.node_count(), min);
            let t = sample_ptc2(&g, min + 40, seed).unwrap();
            assert!(t.node_count() <= min + 40);
        }
    }
}
