use serde::Serialize;

use crate::error::VerifyError;
use crate::game::ActionId;
use crate::scalar::Prob;

use super::chain::{NodeAnnotation, ProcessChain};
use super::critical::{detect_critical, CriticalReport};
use super::reach::{success_rate_from, unbounded_reach};

/// Premise checks at one live node of the user chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NodePremises {
    pub node: usize,
    pub history: String,
    /// Every user maximiser has positive value for the ideal controller.
    pub positive_for_oracle: bool,
    /// Every game state the user process may enter, the ideal process may enter too.
    pub shared_successors: bool,
    /// The user maximiser set is contained in the ideal one.
    pub maximisers_contained: bool,
}

/// Success probabilities of the ideal process when its ties are always
/// broken towards the lowest or highest success rate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtremalBounds {
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PremiseReport {
    pub nodes: Vec<NodePremises>,
    pub positive_for_oracle: bool,
    pub shared_successors: bool,
    pub maximisers_contained: bool,
    pub criticality: CriticalReport,
    pub reach_x: f64,
    pub reach_y: f64,
    /// Positive termination probability transfers from X to Y.
    pub property1_certified: bool,
    /// Almost-sure termination transfers from X to Y.
    pub property2_certified: bool,
    /// Termination probability bounds transfer from X to Y.
    pub property3_certified: bool,
    pub extremal: Option<ExtremalBounds>,
}

fn annotation<T>(chain: &ProcessChain<T>, node: usize) -> Result<&NodeAnnotation<T>, VerifyError> {
    chain.annotations[node]
        .as_ref()
        .ok_or(VerifyError::MissingAnnotation { node })
}

/// Evaluates the three premises at every live node of `y` and combines them
/// with the criticality verdict. `y` must carry ideal-controller annotations
/// evaluated at its own histories; `x` supplies the reference probabilities
/// and, when its action successors were explored, the extremal bounds.
pub fn check_theorem_premises<T: Prob>(
    x: &ProcessChain<T>,
    y: &ProcessChain<T>,
) -> Result<PremiseReport, VerifyError> {
    let mut nodes = Vec::new();
    for node in 0..y.n_nodes() {
        if y.term[node] {
            continue;
        }
        let ann = annotation(y, node)?;
        let missing = || VerifyError::MissingAnnotation { node };
        let oracle_values = ann.oracle_values.as_ref().ok_or_else(missing)?;
        let oracle_max = ann.oracle_maximisers.as_ref().ok_or_else(missing)?;
        let oracle_succ = ann.oracle_state_successors.as_ref().ok_or_else(missing)?;
        nodes.push(NodePremises {
            node,
            history: ann.history.clone(),
            positive_for_oracle: ann.maximisers.iter().all(|a| oracle_values[*a] > T::zero()),
            shared_successors: ann
                .state_successors
                .iter()
                .zip(oracle_succ)
                .all(|(py, px)| py.is_zero() || !px.is_zero()),
            maximisers_contained: ann.maximisers.iter().all(|a| oracle_max.contains(a)),
        });
    }
    let criticality = detect_critical(y)?;
    let uncritical = !criticality.critical;
    let positive_for_oracle = nodes.iter().all(|n| n.positive_for_oracle);
    let shared_successors = nodes.iter().all(|n| n.shared_successors);
    let maximisers_contained = nodes.iter().all(|n| n.maximisers_contained);
    Ok(PremiseReport {
        reach_x: unbounded_reach(x)[x.initial].to_f64_lossy(),
        reach_y: unbounded_reach(y)[y.initial].to_f64_lossy(),
        property1_certified: uncritical && positive_for_oracle,
        property2_certified: uncritical && shared_successors,
        property3_certified: uncritical && maximisers_contained,
        extremal: extremal_bounds(x).ok(),
        nodes,
        positive_for_oracle,
        shared_successors,
        maximisers_contained,
        criticality,
    })
}

/// Replaces each live node's row by the uniform mix over the maximisers
/// chosen by `pick` from their success rates.
fn restricted_chain<T: Prob>(
    x: &ProcessChain<T>,
    reach: &[T],
    pick: impl Fn(&[(ActionId, T)]) -> Vec<ActionId>,
) -> Result<ProcessChain<T>, VerifyError> {
    let mut out = x.clone();
    for node in 0..x.n_nodes() {
        if x.term[node] {
            continue;
        }
        let ann = annotation(x, node)?;
        let mut rates = Vec::new();
        for &a in &ann.maximisers {
            let succ = ann.action_successors[a]
                .as_ref()
                .ok_or(VerifyError::MissingAnnotation { node })?;
            rates.push((a, success_rate_from(reach, succ)));
        }
        let chosen = pick(&rates);
        let share = T::from_ratio(1, chosen.len() as i64);
        let mut row: Vec<(usize, T)> = Vec::new();
        for a in chosen {
            for (d, p) in ann.action_successors[a].as_ref().expect("checked above") {
                let w = share.clone() * p.clone();
                match row.iter_mut().find(|(e, _)| e == d) {
                    Some((_, q)) => *q = q.clone() + w,
                    None => row.push((*d, w)),
                }
            }
        }
        out.edges[node] = row;
    }
    Ok(out)
}

fn extreme<T: Prob>(rates: &[(ActionId, T)], lowest: bool) -> Vec<ActionId> {
    let tol = T::tie_tolerance();
    let mut best = rates[0].1.clone();
    for (_, r) in rates {
        if (lowest && *r < best) || (!lowest && *r > best) {
            best = r.clone();
        }
    }
    rates
        .iter()
        .filter(|(_, r)| (r.clone() - best.clone()).abs() <= tol)
        .map(|(a, _)| *a)
        .collect()
}

/// `p_min` and `p_max` of the ideal chain. Requires per-action successors
/// for every maximiser; the success rates are taken from the ideal chain's
/// own termination probabilities.
pub fn extremal_bounds<T: Prob>(x: &ProcessChain<T>) -> Result<ExtremalBounds, VerifyError> {
    let reach = unbounded_reach(x);
    let low = restricted_chain(x, &reach, |r| extreme(r, true))?;
    let high = restricted_chain(x, &reach, |r| extreme(r, false))?;
    Ok(ExtremalBounds {
        p_min: unbounded_reach(&low)[low.initial].to_f64_lossy(),
        p_max: unbounded_reach(&high)[high.initial].to_f64_lossy(),
    })
}
