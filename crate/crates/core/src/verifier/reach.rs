use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::VerifyError;
use crate::game::ActionId;
use crate::scalar::Prob;

use super::chain::ProcessChain;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Comparator {
    /// Compares up to the scalar's normalisation tolerance (zero for exact scalars).
    pub fn holds<T: Prob>(&self, value: &T, threshold: &T) -> bool {
        let tol = T::norm_tolerance();
        match self {
            Comparator::Gt => value.clone() > threshold.clone() + tol,
            Comparator::Ge => value.clone() + tol >= threshold.clone(),
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        })
    }
}

impl FromStr for Comparator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            ">" | "gt" => Ok(Comparator::Gt),
            ">=" | "ge" => Ok(Comparator::Ge),
            other => Err(format!("unknown comparator '{other}'")),
        }
    }
}

/// Per-node termination probabilities and the verdict at the initial node.
#[derive(Clone, Debug, PartialEq)]
pub struct ReachResult<T> {
    pub probabilities: Vec<T>,
    /// `Some(t)` for `F^{≤t}`, `None` for `F^{<∞}`.
    pub steps: Option<usize>,
    pub threshold: T,
    pub comparator: Comparator,
    pub verdict: bool,
}

impl<T: Prob> ReachResult<T> {
    pub fn initial_probability(&self, chain: &ProcessChain<T>) -> &T {
        &self.probabilities[chain.initial]
    }
}

/// `p_0, …, p_{t_max}` where `p_k(n)` is the probability of reaching a
/// `term` node from `n` within `k` steps.
pub fn bounded_reach_series<T: Prob>(chain: &ProcessChain<T>, t_max: usize) -> Vec<Vec<T>> {
    let mut current: Vec<T> = chain
        .term
        .iter()
        .map(|&t| if t { T::one() } else { T::zero() })
        .collect();
    let mut series = Vec::with_capacity(t_max + 1);
    series.push(current.clone());
    for _ in 0..t_max {
        let next: Vec<T> = (0..chain.n_nodes())
            .map(|n| {
                if chain.term[n] {
                    T::one()
                } else {
                    chain.edges[n].iter().fold(T::zero(), |acc, (d, p)| {
                        acc + p.clone() * current[*d].clone()
                    })
                }
            })
            .collect();
        current = next;
        series.push(current.clone());
    }
    series
}

pub fn bounded_reach<T: Prob>(chain: &ProcessChain<T>, t: usize) -> Vec<T> {
    bounded_reach_series(chain, t)
        .pop()
        .expect("series has t + 1 entries")
}

/// Verdict for `s⁰ ⊨ F^{≤t}_{⋈p} term`.
pub fn check_bounded_reach<T: Prob>(
    chain: &ProcessChain<T>,
    t: usize,
    p: T,
    comparator: Comparator,
) -> ReachResult<T> {
    let probabilities = bounded_reach(chain, t);
    let verdict = comparator.holds(&probabilities[chain.initial], &p);
    ReachResult {
        probabilities,
        steps: Some(t),
        threshold: p,
        comparator,
        verdict,
    }
}

/// Nodes from which some `term` node is reachable with positive probability.
pub fn can_reach_term<T: Prob>(chain: &ProcessChain<T>) -> Vec<bool> {
    let n = chain.n_nodes();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (src, row) in chain.edges.iter().enumerate() {
        for (dst, p) in row {
            if !p.is_zero() {
                preds[*dst].push(src);
            }
        }
    }
    let mut good = chain.term.clone();
    let mut stack: Vec<usize> = (0..n).filter(|i| good[*i]).collect();
    while let Some(node) = stack.pop() {
        for &p in &preds[node] {
            if !good[p] {
                good[p] = true;
                stack.push(p);
            }
        }
    }
    good
}

/// Least fixpoint of `x = [term] + [¬term]·μx`.
///
/// Nodes with no path to `term` are fixed to 0 first; the remaining system
/// `(I − A)x = b` is then non-singular and is solved by Gaussian elimination,
/// which is exact for rational scalars.
pub fn unbounded_reach<T: Prob>(chain: &ProcessChain<T>) -> Vec<T> {
    let n = chain.n_nodes();
    let good = can_reach_term(chain);
    let mut result: Vec<T> = (0..n)
        .map(|i| if chain.term[i] { T::one() } else { T::zero() })
        .collect();
    let unknown: Vec<usize> = (0..n).filter(|i| good[*i] && !chain.term[*i]).collect();
    if unknown.is_empty() {
        return result;
    }
    let mut index = vec![usize::MAX; n];
    for (k, node) in unknown.iter().enumerate() {
        index[*node] = k;
    }
    let m = unknown.len();
    let mut a = vec![vec![T::zero(); m + 1]; m];
    for (row, node) in unknown.iter().enumerate() {
        a[row][row] = T::one();
        for (dst, p) in &chain.edges[*node] {
            if chain.term[*dst] {
                a[row][m] = a[row][m].clone() + p.clone();
            } else if index[*dst] != usize::MAX {
                let col = index[*dst];
                a[row][col] = a[row][col].clone() - p.clone();
            }
        }
    }
    for x in solve(a).into_iter().zip(unknown) {
        result[x.1] = clamp_unit(x.0);
    }
    result
}

fn clamp_unit<T: Prob>(x: T) -> T {
    if x < T::zero() {
        T::zero()
    } else if x > T::one() {
        T::one()
    } else {
        x
    }
}

/// Solves an augmented non-singular system with partial pivoting.
fn solve<T: Prob>(mut a: Vec<Vec<T>>) -> Vec<T> {
    let m = a.len();
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| {
                a[i][col]
                    .abs()
                    .partial_cmp(&a[j][col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("non-empty range");
        a.swap(col, pivot);
        let p = a[col][col].clone();
        if p.is_zero() {
            continue;
        }
        for v in &mut a[col][col..=m] {
            *v = v.clone() / p.clone();
        }
        let pivot_row = a[col].clone();
        for (row, r) in a.iter_mut().enumerate() {
            if row != col && !r[col].is_zero() {
                let factor = r[col].clone();
                for (v, pv) in r[col..=m].iter_mut().zip(&pivot_row[col..=m]) {
                    *v = v.clone() - factor.clone() * pv.clone();
                }
            }
        }
    }
    a.into_iter().map(|row| row[m].clone()).collect()
}

/// Verdict for `s⁰ ⊨ F^{<∞}_{⋈p} term`.
pub fn check_unbounded_reach<T: Prob>(
    chain: &ProcessChain<T>,
    p: T,
    comparator: Comparator,
) -> ReachResult<T> {
    let probabilities = unbounded_reach(chain);
    let verdict = comparator.holds(&probabilities[chain.initial], &p);
    ReachResult {
        probabilities,
        steps: None,
        threshold: p,
        comparator,
        verdict,
    }
}

/// Σ μ(n')·reach(n') over a successor distribution.
pub fn success_rate_from<T: Prob>(reach: &[T], successors: &[(usize, T)]) -> T {
    successors
        .iter()
        .fold(T::zero(), |acc, (d, p)| acc + p.clone() * reach[*d].clone())
}

/// R(aᵢ, H | C): eventual termination probability once `action` is fixed at `node`.
pub fn success_rate<T: Prob>(
    chain: &ProcessChain<T>,
    node: usize,
    action: ActionId,
) -> Result<T, VerifyError> {
    if chain.term[node] {
        return Ok(T::one());
    }
    let successors = chain.annotations[node]
        .as_ref()
        .and_then(|a| a.action_successors.get(action).cloned().flatten())
        .ok_or(VerifyError::MissingAnnotation { node })?;
    Ok(success_rate_from(&unbounded_reach(chain), &successors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    fn coin() -> ProcessChain<f64> {
        ProcessChain::from_edges(2, 0, &[1], vec![(0, 1, 0.5), (0, 0, 0.5)]).unwrap()
    }

    #[test]
    fn term_node_at_zero_steps() {
        let chain =
            ProcessChain::from_edges(1, 0, &[0], Vec::<(usize, usize, f64)>::new()).unwrap();
        let r = check_bounded_reach(&chain, 0, 1.0, Comparator::Ge);
        assert_eq!(r.probabilities[0], 1.0);
        assert!(r.verdict);
    }

    #[test]
    fn coin_chain_bounded_and_unbounded() {
        let chain = coin();
        let r = check_bounded_reach(&chain, 2, 0.75, Comparator::Ge);
        assert!((r.probabilities[0] - 0.75).abs() < 1e-15);
        assert!(r.verdict);
        assert!(!check_bounded_reach(&chain, 2, 0.75, Comparator::Gt).verdict);
        assert!((unbounded_reach(&chain)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn escape_to_sink_is_half() {
        let chain =
            ProcessChain::from_edges(3, 0, &[1], vec![(0, 1, 0.5), (0, 2, 0.5), (2, 2, 1.0)])
                .unwrap();
        let r = check_unbounded_reach(&chain, 0.5, Comparator::Ge);
        assert_eq!(r.probabilities[0], 0.5);
        assert_eq!(r.probabilities[2], 0.0);
        assert!(r.verdict);
    }

    #[test]
    fn no_path_to_term() {
        let chain = ProcessChain::from_edges(3, 0, &[2], vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert_eq!(unbounded_reach(&chain)[0], 0.0);
        assert_eq!(bounded_reach(&chain, 17)[0], 0.0);
        assert!(!check_unbounded_reach(&chain, 0.0, Comparator::Gt).verdict);
    }

    #[test]
    fn exact_geometric_series() {
        let q = Rational::from_ratio(1, 3);
        let chain = ProcessChain::from_edges(
            3,
            0,
            &[1],
            vec![
                (0, 0, q.clone()),
                (0, 1, q.clone()),
                (0, 2, q),
                (2, 2, Rational::from_ratio(1, 1)),
            ],
        )
        .unwrap();
        assert_eq!(unbounded_reach(&chain)[0], Rational::from_ratio(1, 2));
    }

    #[test]
    fn comparator_parsing() {
        assert_eq!(">=".parse::<Comparator>().unwrap(), Comparator::Ge);
        assert_eq!(Comparator::Gt.to_string(), ">");
        assert!("<".parse::<Comparator>().is_err());
    }

    #[test]
    fn comparison_absorbs_float_rounding_only() {
        assert!(Comparator::Ge.holds(&0.9999999999999998, &1.0));
        assert!(!Comparator::Gt.holds(&1.0000000000000002, &1.0));
        assert!(!Comparator::Ge.holds(&0.999, &1.0));
        let third = Rational::new(1.into(), 3.into());
        let bit_less = third.clone() - Rational::new(1.into(), 1_000_000_000_000i64.into());
        assert!(!Comparator::Ge.holds(&bit_less, &third));
        assert!(Comparator::Ge.holds(&third, &third));
    }
}
