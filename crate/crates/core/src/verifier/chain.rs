use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::VerifyError;
use crate::game::{ActionId, StateId};
use crate::scalar::{is_distribution, total, Prob};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ProcessTag {
    /// Ideal process: the controller knows the true types.
    X,
    /// User process: the controller learns over user-defined types.
    Y,
    /// Hand-built or imported chain.
    Plain,
}

/// Planning data recorded for one live chain node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeAnnotation<T> {
    pub game_state: StateId,
    /// Representative history of the node.
    pub history: String,
    /// E values of this chain's own controller.
    pub values: Vec<T>,
    pub maximisers: Vec<ActionId>,
    /// E values of the ideal controller at the same history.
    pub oracle_values: Option<Vec<T>>,
    pub oracle_maximisers: Option<Vec<ActionId>>,
    /// μ(H, s | own) over game states.
    pub state_successors: Vec<T>,
    /// μ(H, s | X) over game states.
    pub oracle_state_successors: Option<Vec<T>>,
    /// Successor nodes when the controlled action is fixed, one entry per
    /// action; `None` for actions that were not explored.
    pub action_successors: Vec<Option<Vec<(usize, T)>>>,
}

/// A finite labelled Markov chain with an absorbing `term` label.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessChain<T> {
    pub tag: ProcessTag,
    pub labels: Vec<String>,
    pub edges: Vec<Vec<(usize, T)>>,
    pub initial: usize,
    pub term: Vec<bool>,
    pub annotations: Vec<Option<NodeAnnotation<T>>>,
}

impl<T: Prob> ProcessChain<T> {
    /// Builds a plain chain from `(src, dst, prob)` triples. `term` nodes
    /// without outgoing edges get a probability-1 self-loop.
    pub fn from_edges(
        n_nodes: usize,
        initial: usize,
        term_nodes: &[usize],
        edges: Vec<(usize, usize, T)>,
    ) -> Result<Self, VerifyError> {
        let mut term = vec![false; n_nodes];
        for &t in term_nodes {
            if t >= n_nodes {
                return Err(VerifyError::Malformed(format!(
                    "term node {t} out of range"
                )));
            }
            term[t] = true;
        }
        let mut out: Vec<Vec<(usize, T)>> = vec![Vec::new(); n_nodes];
        for (src, dst, p) in edges {
            if src >= n_nodes || dst >= n_nodes {
                return Err(VerifyError::Malformed(format!(
                    "edge {src} -> {dst} out of range"
                )));
            }
            match out[src].iter_mut().find(|(d, _)| *d == dst) {
                Some((_, q)) => *q = q.clone() + p,
                None => out[src].push((dst, p)),
            }
        }
        for (n, row) in out.iter_mut().enumerate() {
            if term[n] && row.is_empty() {
                row.push((n, T::one()));
            }
        }
        let chain = Self {
            tag: ProcessTag::Plain,
            labels: (0..n_nodes).map(|n| n.to_string()).collect(),
            edges: out,
            initial,
            term,
            annotations: vec![None; n_nodes],
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn n_nodes(&self) -> usize {
        self.edges.len()
    }

    pub fn validate(&self) -> Result<(), VerifyError> {
        let n = self.n_nodes();
        if self.initial >= n {
            return Err(VerifyError::Malformed("initial node out of range".into()));
        }
        if self.term.len() != n || self.labels.len() != n || self.annotations.len() != n {
            return Err(VerifyError::Malformed(
                "per-node tables have inconsistent sizes".into(),
            ));
        }
        for (node, row) in self.edges.iter().enumerate() {
            let probs: Vec<T> = row.iter().map(|(_, p)| p.clone()).collect();
            if !is_distribution(&probs) {
                return Err(VerifyError::Malformed(format!(
                    "outgoing mass of node {node} is {}",
                    total(&probs)
                )));
            }
            if self.term[node] && !row.iter().all(|(d, p)| *d == node || p.is_zero()) {
                return Err(VerifyError::Malformed(format!(
                    "term node {node} is not absorbing"
                )));
            }
        }
        Ok(())
    }

    /// Nodes reachable from `from` along positive-probability edges.
    pub fn reachable_from(&self, from: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n_nodes()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(n) = queue.pop_front() {
            for (d, p) in &self.edges[n] {
                if !p.is_zero() && !seen[*d] {
                    seen[*d] = true;
                    queue.push_back(*d);
                }
            }
        }
        seen
    }

    /// Plain-text edge list: header lines, then one `src dst prob` per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# process chain ({:?})", self.tag);
        let _ = writeln!(out, "nodes {}", self.n_nodes());
        let _ = writeln!(out, "initial {}", self.initial);
        let terms: Vec<String> = (0..self.n_nodes())
            .filter(|n| self.term[*n])
            .map(|n| n.to_string())
            .collect();
        let _ = writeln!(out, "term {}", terms.join(" "));
        for (node, label) in self.labels.iter().enumerate() {
            if *label != node.to_string() {
                let _ = writeln!(out, "# {node}: {label}");
            }
        }
        for (src, row) in self.edges.iter().enumerate() {
            for (dst, p) in row {
                let _ = writeln!(out, "{src} {dst} {p}");
            }
        }
        out
    }

    /// Parses the format written by [`ProcessChain::to_edge_list`].
    pub fn parse_edge_list(text: &str) -> Result<Self, VerifyError> {
        let mut n_nodes = None;
        let mut initial = 0;
        let mut term = Vec::new();
        let mut edges = Vec::new();
        let parse_usize = |tok: &str, line: usize| {
            tok.parse::<usize>().map_err(|_| VerifyError::Parse {
                line,
                message: format!("expected a node index, found '{tok}'"),
            })
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = content.split_whitespace().collect();
            match tokens[0] {
                "nodes" if tokens.len() == 2 => n_nodes = Some(parse_usize(tokens[1], line)?),
                "initial" if tokens.len() == 2 => initial = parse_usize(tokens[1], line)?,
                "term" => {
                    for tok in &tokens[1..] {
                        term.push(parse_usize(tok, line)?);
                    }
                }
                _ if tokens.len() == 3 => {
                    let src = parse_usize(tokens[0], line)?;
                    let dst = parse_usize(tokens[1], line)?;
                    let p = T::parse_prob(tokens[2]).ok_or_else(|| VerifyError::Parse {
                        line,
                        message: format!("bad probability '{}'", tokens[2]),
                    })?;
                    edges.push((src, dst, p));
                }
                _ => {
                    return Err(VerifyError::Parse {
                        line,
                        message: format!("unrecognised line '{content}'"),
                    })
                }
            }
        }
        let n_nodes = match n_nodes {
            Some(n) => n,
            None => edges
                .iter()
                .flat_map(|(s, d, _)| [*s, *d])
                .chain(term.iter().copied())
                .chain([initial])
                .max()
                .map_or(0, |m| m + 1),
        };
        Self::from_edges(n_nodes, initial, &term, edges)
    }
}
