use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::error::VerifyError;
use crate::scalar::Prob;

use super::chain::ProcessChain;

/// How one candidate set fared against the three criticality conditions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CandidateReport {
    pub nodes: Vec<usize>,
    /// Every node has an action with positive E under both processes.
    pub positive_action: bool,
    /// The set is reachable from the initial node.
    pub reachable: bool,
    /// The set is closed and avoids `term`.
    pub closed: bool,
    /// Nodes that break the positive-action condition.
    pub failing_nodes: Vec<usize>,
}

impl CandidateReport {
    pub fn is_witness(&self) -> bool {
        self.positive_action && self.reachable && self.closed
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CriticalReport {
    pub critical: bool,
    pub witness: Option<Vec<usize>>,
    pub candidates: Vec<CandidateReport>,
}

/// Bottom strongly connected components, each sorted ascending, in order of
/// their smallest node.
pub fn bottom_sccs<T: Prob>(chain: &ProcessChain<T>) -> Vec<Vec<usize>> {
    let mut graph = DiGraph::<(), ()>::new();
    let ids: Vec<_> = (0..chain.n_nodes()).map(|_| graph.add_node(())).collect();
    for (src, row) in chain.edges.iter().enumerate() {
        for (dst, p) in row {
            if !p.is_zero() {
                graph.add_edge(ids[src], ids[*dst], ());
            }
        }
    }
    let mut component = vec![0; chain.n_nodes()];
    let sccs = tarjan_scc(&graph);
    for (c, scc) in sccs.iter().enumerate() {
        for n in scc {
            component[n.index()] = c;
        }
    }
    let mut bottoms: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(c, scc)| {
            scc.iter().all(|n| {
                chain.edges[n.index()]
                    .iter()
                    .all(|(d, p)| p.is_zero() || component[*d] == *c)
            })
        })
        .map(|(_, scc)| {
            let mut nodes: Vec<usize> = scc.iter().map(|n| n.index()).collect();
            nodes.sort_unstable();
            nodes
        })
        .collect();
    bottoms.sort();
    bottoms
}

/// Nodes of `set` with no action whose E is positive under both the chain's
/// own controller and the ideal controller.
pub fn positive_action_failures<T: Prob>(
    chain: &ProcessChain<T>,
    set: &[usize],
) -> Result<Vec<usize>, VerifyError> {
    let mut failing = Vec::new();
    for &node in set {
        let ann = chain.annotations[node]
            .as_ref()
            .ok_or(VerifyError::MissingAnnotation { node })?;
        let oracle = ann
            .oracle_values
            .as_ref()
            .ok_or(VerifyError::MissingAnnotation { node })?;
        let ok = ann
            .values
            .iter()
            .zip(oracle)
            .any(|(y, x)| *y > T::zero() && *x > T::zero());
        if !ok {
            failing.push(node);
        }
    }
    Ok(failing)
}

/// Checks the user chain for a reachable, closed, non-terminal region in
/// which the controller always sees an action with positive value.
/// Candidates are the bottom SCCs without `term` nodes.
pub fn detect_critical<T: Prob>(y: &ProcessChain<T>) -> Result<CriticalReport, VerifyError> {
    let reachable = y.reachable_from(y.initial);
    let mut candidates = Vec::new();
    for scc in bottom_sccs(y) {
        if scc.iter().any(|n| y.term[*n]) {
            continue;
        }
        let failing_nodes = positive_action_failures(y, &scc)?;
        candidates.push(CandidateReport {
            positive_action: failing_nodes.is_empty(),
            reachable: scc.iter().any(|n| reachable[*n]),
            closed: true,
            failing_nodes,
            nodes: scc,
        });
    }
    let witness = candidates
        .iter()
        .find(|c| c.is_witness())
        .map(|c| c.nodes.clone());
    Ok(CriticalReport {
        critical: witness.is_some(),
        witness,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verifier::chain::NodeAnnotation;

    fn annotate(chain: &mut ProcessChain<f64>, node: usize, y: Vec<f64>, x: Vec<f64>) {
        chain.annotations[node] = Some(NodeAnnotation {
            game_state: 0,
            history: String::new(),
            values: y,
            maximisers: vec![0],
            oracle_values: Some(x),
            oracle_maximisers: Some(vec![0]),
            state_successors: vec![1.0],
            oracle_state_successors: Some(vec![1.0]),
            action_successors: vec![None],
        });
    }

    #[test]
    fn terminal_initial_is_uncritical() {
        let chain =
            ProcessChain::from_edges(1, 0, &[0], Vec::<(usize, usize, f64)>::new()).unwrap();
        let report = detect_critical(&chain).unwrap();
        assert!(!report.critical);
        assert!(report.candidates.is_empty());
    }

    #[test]
    fn cycle_with_positive_values_is_critical() {
        let mut chain =
            ProcessChain::from_edges(3, 0, &[2], vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        annotate(&mut chain, 0, vec![0.9], vec![0.5]);
        annotate(&mut chain, 1, vec![0.9], vec![0.5]);
        let report = detect_critical(&chain).unwrap();
        assert!(report.critical);
        assert_eq!(report.witness, Some(vec![0, 1]));
    }

    #[test]
    fn zero_oracle_value_blocks_criticality() {
        let mut chain =
            ProcessChain::from_edges(3, 0, &[2], vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        annotate(&mut chain, 0, vec![0.9, 0.0], vec![0.0, 0.4]);
        annotate(&mut chain, 1, vec![0.9], vec![0.5]);
        let report = detect_critical(&chain).unwrap();
        assert!(!report.critical);
        assert_eq!(report.candidates[0].failing_nodes, vec![0]);
    }

    #[test]
    fn unreachable_cycle_is_not_a_witness() {
        let mut chain =
            ProcessChain::from_edges(4, 0, &[1], vec![(0, 1, 1.0), (2, 3, 1.0), (3, 2, 1.0)])
                .unwrap();
        annotate(&mut chain, 2, vec![1.0], vec![1.0]);
        annotate(&mut chain, 3, vec![1.0], vec![1.0]);
        let report = detect_critical(&chain).unwrap();
        assert!(!report.critical);
        assert!(!report.candidates[0].reachable);
    }

    #[test]
    fn missing_annotations_are_reported() {
        let chain = ProcessChain::from_edges(2, 0, &[1], vec![(0, 0, 1.0)]).unwrap();
        assert!(matches!(
            detect_critical(&chain),
            Err(VerifyError::MissingAnnotation { node: 0 })
        ));
    }
}
