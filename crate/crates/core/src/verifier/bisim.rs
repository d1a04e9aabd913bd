use serde::Serialize;

use crate::scalar::Prob;

use super::chain::ProcessChain;
use super::reach::bounded_reach_series;

/// Equivalence classes over a node set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Partition {
    pub blocks: Vec<Vec<usize>>,
    pub block_of: Vec<usize>,
}

impl Partition {
    pub fn from_block_of(block_of: Vec<usize>) -> Self {
        let n_blocks = block_of.iter().copied().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); n_blocks];
        for (node, b) in block_of.iter().enumerate() {
            blocks[*b].push(node);
        }
        Self { blocks, block_of }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn same_block(&self, a: usize, b: usize) -> bool {
        self.block_of[a] == self.block_of[b]
    }
}

/// The result of comparing two chains on their disjoint union, where the
/// first chain occupies nodes `0..x_nodes` and the second the rest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BisimResult {
    pub partition: Partition,
    pub x_nodes: usize,
    pub bisimilar: bool,
    pub rounds: usize,
}

impl BisimResult {
    /// Union index of node `n` of the second chain.
    pub fn y_node(&self, n: usize) -> usize {
        self.x_nodes + n
    }
}

/// One refinement pass: nodes stay together only if they agree on the
/// probability mass sent into every current block.
pub fn refine_once<T: Prob>(edges: &[Vec<(usize, T)>], partition: &Partition) -> Partition {
    let tol = T::bisim_tolerance();
    let n_blocks = partition.len();
    let signature = |node: usize| {
        let mut mass = vec![T::zero(); n_blocks];
        for (d, p) in &edges[node] {
            let b = partition.block_of[*d];
            mass[b] = mass[b].clone() + p.clone();
        }
        mass
    };
    let mut block_of = vec![0; edges.len()];
    let mut next_id = 0;
    for block in &partition.blocks {
        let mut groups: Vec<(Vec<T>, usize)> = Vec::new();
        for &node in block {
            let sig = signature(node);
            let found = groups
                .iter()
                .find(|(rep, _)| rep.iter().zip(&sig).all(|(a, b)| a.close_to(b, &tol)))
                .map(|(_, id)| *id);
            block_of[node] = match found {
                Some(id) => id,
                None => {
                    groups.push((sig, next_id));
                    next_id += 1;
                    next_id - 1
                }
            };
        }
    }
    Partition::from_block_of(block_of)
}

fn coarsest<T: Prob>(edges: &[Vec<(usize, T)>], term: &[bool]) -> (Partition, usize) {
    let has_live = term.iter().any(|t| !*t);
    let block_of = term.iter().map(|&t| usize::from(t && has_live)).collect();
    let mut partition = Partition::from_block_of(block_of);
    let mut rounds = 0;
    loop {
        let next = refine_once(edges, &partition);
        rounds += 1;
        if next.len() == partition.len() {
            return (next, rounds);
        }
        partition = next;
    }
}

/// Coarsest probabilistic bisimulation of a single chain.
pub fn coarsest_partition<T: Prob>(chain: &ProcessChain<T>) -> Partition {
    coarsest(&chain.edges, &chain.term).0
}

/// Coarsest bisimulation on the disjoint union of `x` and `y`; the verdict
/// is whether the two initial nodes end up in the same block.
pub fn bisimulation_partition<T: Prob>(x: &ProcessChain<T>, y: &ProcessChain<T>) -> BisimResult {
    let offset = x.n_nodes();
    let mut edges: Vec<Vec<(usize, T)>> = x.edges.clone();
    edges.extend(
        y.edges
            .iter()
            .map(|row| row.iter().map(|(d, p)| (d + offset, p.clone())).collect()),
    );
    let term: Vec<bool> = x.term.iter().chain(&y.term).copied().collect();
    let (partition, rounds) = coarsest(&edges, &term);
    BisimResult {
        bisimilar: partition.same_block(x.initial, offset + y.initial),
        partition,
        x_nodes: offset,
        rounds,
    }
}

/// Numerical check that bounded termination probabilities agree for all `t ≤ t_max`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Property4Report {
    pub bisimilar: bool,
    pub t_max: usize,
    pub max_difference: f64,
    /// First `t` at which the initial-node probabilities differ by more than 1e-9.
    pub first_mismatch: Option<usize>,
    pub agree: bool,
}

pub fn verify_property4<T: Prob>(
    x: &ProcessChain<T>,
    y: &ProcessChain<T>,
    t_max: usize,
) -> Property4Report {
    let bisimilar = bisimulation_partition(x, y).bisimilar;
    let px = bounded_reach_series(x, t_max);
    let py = bounded_reach_series(y, t_max);
    let mut max_difference = 0.0f64;
    let mut first_mismatch = None;
    for t in 0..=t_max {
        let diff = (px[t][x.initial].clone() - py[t][y.initial].clone())
            .abs()
            .to_f64_lossy();
        max_difference = max_difference.max(diff);
        if diff > 1e-9 && first_mismatch.is_none() {
            first_mismatch = Some(t);
        }
    }
    Property4Report {
        bisimilar,
        t_max,
        max_difference,
        agree: first_mismatch.is_none(),
        first_mismatch,
    }
}
