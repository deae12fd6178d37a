use serde::{Deserialize, Serialize};

use super::{Grammar, GrammarError, Symbol};

/// One node of a serialised derivation tree. `choice` is the alternative
/// index for nonterminal nodes and unused (0) for terminals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Node {
    pub symbol: Symbol,
    pub choice: u32,
}

/// A complete derivation stored in depth-first pre-order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DerivationTree {
    nodes: Vec<Node>,
    /// Exclusive end of the subtree rooted at each node.
    ends: Vec<usize>,
}

/// Alternative indices of every nonterminal expansion, in pre-order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Genotype(pub Vec<u32>);

impl DerivationTree {
    /// Builds a tree from pre-order nodes, checking it is a complete
    /// derivation under `grammar`.
    pub fn from_preorder(grammar: &Grammar, nodes: Vec<Node>) -> Result<Self, GrammarError> {
        let malformed = |msg: &str| GrammarError::MalformedTree(msg.to_string());
        if nodes.is_empty() {
            return Err(malformed("empty tree"));
        }
        // Walk the pre-order list with an explicit stack of expected symbols.
        let mut expected: Vec<Symbol> = vec![nodes[0].symbol];
        for node in &nodes {
            let want = expected.pop().ok_or_else(|| malformed("trailing nodes"))?;
            if want != node.symbol {
                return Err(malformed("node symbol does not match its parent's alternative"));
            }
            if let Symbol::NonTerminal(id) = node.symbol {
                let alts = grammar.alternatives(id);
                let alt = alts
                    .get(node.choice as usize)
                    .ok_or_else(|| malformed("choice out of range"))?;
                expected.extend(alt.iter().rev().copied());
            }
        }
        if !expected.is_empty() {
            return Err(malformed("incomplete derivation"));
        }
        let ends = compute_ends(grammar, &nodes);
        Ok(Self { nodes, ends })
    }

    pub(crate) fn from_parts_unchecked(grammar: &Grammar, nodes: Vec<Node>) -> Self {
        let ends = compute_ends(grammar, &nodes);
        Self { nodes, ends }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> Node {
        self.nodes[0]
    }

    pub fn subtree_end(&self, index: usize) -> usize {
        self.ends[index]
    }

    pub fn subtree(&self, index: usize) -> &[Node] {
        &self.nodes[index..self.ends[index]]
    }

    pub fn subtree_size(&self, index: usize) -> usize {
        self.ends[index] - index
    }

    /// Indices of the direct children of `index`, in order.
    pub fn children(&self, index: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let end = self.ends[index];
        let mut child = index + 1;
        while child < end {
            out.push(child);
            child = self.ends[child];
        }
        out
    }

    pub fn nonterminal_indices(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.symbol, Symbol::NonTerminal(_)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Concatenated terminal text of the subtree rooted at `index`.
    pub fn yield_text(&self, grammar: &Grammar, index: usize) -> String {
        self.subtree(index)
            .iter()
            .filter_map(|n| match n.symbol {
                Symbol::Terminal(id) => Some(grammar.terminal_text(id)),
                Symbol::NonTerminal(_) => None,
            })
            .collect()
    }

    /// Returns a new tree with the subtree at `index` replaced by `subtree`.
    pub(crate) fn replace_subtree(&self, grammar: &Grammar, index: usize, subtree: &[Node]) -> Self {
        let mut nodes = Vec::with_capacity(self.nodes.len() - self.subtree_size(index) + subtree.len());
        nodes.extend_from_slice(&self.nodes[..index]);
        nodes.extend_from_slice(subtree);
        nodes.extend_from_slice(&self.nodes[self.ends[index]..]);
        Self::from_parts_unchecked(grammar, nodes)
    }

    pub fn validate(&self, grammar: &Grammar, max_nodes: usize) -> Result<(), GrammarError> {
        Self::from_preorder(grammar, self.nodes.clone())?;
        if self.nodes.len() > max_nodes {
            return Err(GrammarError::MalformedTree(format!(
                "{} nodes exceed the budget of {max_nodes}",
                self.nodes.len()
            )));
        }
        Ok(())
    }
}

fn compute_ends(grammar: &Grammar, nodes: &[Node]) -> Vec<usize> {
    let mut ends = vec![0; nodes.len()];
    // Scanning right to left, the stack holds roots of finished sibling
    // subtrees with the leftmost on top.
    let mut stack: Vec<usize> = Vec::new();
    for i in (0..nodes.len()).rev() {
        match nodes[i].symbol {
            Symbol::Terminal(_) => ends[i] = i + 1,
            Symbol::NonTerminal(id) => {
                let arity = grammar.arity(id, nodes[i].choice as usize);
                let mut end = i + 1;
                for _ in 0..arity {
                    let child = stack.pop().expect("well-formed pre-order");
                    end = ends[child];
                }
                ends[i] = end;
            }
        }
        stack.push(i);
    }
    ends
}

pub fn encode(tree: &DerivationTree) -> Genotype {
    Genotype(
        tree.nodes
            .iter()
            .filter(|n| matches!(n.symbol, Symbol::NonTerminal(_)))
            .map(|n| n.choice)
            .collect(),
    )
}

pub fn decode(grammar: &Grammar, genotype: &Genotype) -> Result<DerivationTree, GrammarError> {
    let mut nodes = Vec::new();
    let mut pending = vec![grammar.start_symbol()];
    let mut cursor = 0usize;
    while let Some(symbol) = pending.pop() {
        match symbol {
            Symbol::Terminal(_) => nodes.push(Node { symbol, choice: 0 }),
            Symbol::NonTerminal(id) => {
                let choice = *genotype
                    .0
                    .get(cursor)
                    .ok_or(GrammarError::Underflow { consumed: cursor })?;
                let alts = grammar.alternatives(id);
                if choice as usize >= alts.len() {
                    return Err(GrammarError::OutOfRange {
                        position: cursor,
                        choice,
                        symbol: grammar.nonterminal_name(id).to_string(),
                        arity: alts.len(),
                    });
                }
                cursor += 1;
                nodes.push(Node { symbol, choice });
                pending.extend(alts[choice as usize].iter().rev().copied());
            }
        }
    }
    if cursor < genotype.0.len() {
        return Err(GrammarError::Leftover {
            leftover: genotype.0.len() - cursor,
        });
    }
    Ok(DerivationTree::from_parts_unchecked(grammar, nodes))
}
