//! Independent reference computations shared by the integration and acceptance tests.
#![allow(dead_code)]

use hba_core::beliefs::JointBelief;
use hba_core::game::{GameBuilder, GameSpec, JointAction, StateId, TypeId};
use hba_core::planner::{PlanConfig, Planner};
use hba_core::strategy::{TypeKind, TypeStrategy, TypeTracker};
use hba_core::verifier::{NodeAnnotation, ProcessChain};
use hba_core::Rational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dist(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.05).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Two-player game with memoryless table types for player 1. The last state
/// is terminal. Every type is latent and in the user space; Δ is pure on the
/// first type.
pub fn random_table_game(
    rng: &mut ChaCha8Rng,
    n_states: usize,
    n_own: usize,
    n_opp: usize,
    n_types: usize,
    terminal: bool,
) -> GameSpec<f64> {
    let names: Vec<String> = (0..n_states).map(|s| format!("s{s}")).collect();
    let own: Vec<String> = (0..n_own).map(|a| format!("a{a}")).collect();
    let opp: Vec<String> = (0..n_opp).map(|a| format!("b{a}")).collect();
    let mut b = GameBuilder::<f64>::new(
        names,
        vec![
            ("i", own.iter().map(String::as_str).collect()),
            ("j", opp.iter().map(String::as_str).collect()),
        ],
        0,
    );
    if terminal {
        b = b.terminal(n_states - 1);
    }
    let mut rows = Vec::new();
    for _ in 0..n_states * n_own * n_opp {
        let k = rng.gen_range(1..=n_states.min(3));
        let mut succ: Vec<StateId> = (0..n_states).collect();
        for i in 0..k {
            let j = rng.gen_range(i..n_states);
            succ.swap(i, j);
        }
        let w = random_dist(rng, k);
        let mut row: Vec<(StateId, f64)> = succ[..k].iter().copied().zip(w).collect();
        row.sort_by_key(|(s, _)| *s);
        rows.push(row);
    }
    let mut idx = 0;
    b = b.transitions_with(|_, _| {
        idx += 1;
        rows[idx - 1].clone()
    });
    let mut ids = Vec::new();
    for k in 0..n_types {
        let table = (0..n_states).map(|_| random_dist(rng, n_opp)).collect();
        ids.push(b.add_type(TypeStrategy::new(
            format!("t{k}"),
            1,
            TypeKind::Table(table),
        )));
    }
    let mut delta = vec![(vec![ids[0]], 1.0)];
    delta.extend(ids[1..].iter().map(|id| (vec![*id], 0.0)));
    let prior = random_dist(rng, n_types);
    b.latent(1, ids.clone())
        .delta(delta)
        .user_types(1, ids, prior)
        .positive_priors(true)
        .build()
        .expect("valid random game")
}

fn table(spec: &GameSpec<f64>, id: TypeId) -> &Vec<Vec<f64>> {
    match &spec.types[id].kind {
        TypeKind::Table(rows) => rows,
        other => panic!("expected a table type, found {other:?}"),
    }
}

/// Opponent action distribution per state under a fixed weighting of table types.
pub fn opponent_mixture(spec: &GameSpec<f64>, weights: &[(TypeId, f64)]) -> Vec<Vec<f64>> {
    (0..spec.n_states())
        .map(|s| {
            let mut q = vec![0.0; spec.n_actions(1)];
            for (id, w) in weights {
                for (a, p) in table(spec, *id)[s].iter().enumerate() {
                    q[a] += w * p;
                }
            }
            q
        })
        .collect()
}

/// Probability of entering a terminal state within `h` steps when playing
/// `first` now and following the deterministic Markov `policy` afterwards.
fn policy_reach(
    spec: &GameSpec<f64>,
    q: &[Vec<f64>],
    state: StateId,
    first: usize,
    h: usize,
    policy: &dyn Fn(usize, StateId) -> usize,
) -> f64 {
    fn go(
        spec: &GameSpec<f64>,
        q: &[Vec<f64>],
        s: StateId,
        step: usize,
        h: usize,
        action: usize,
        policy: &dyn Fn(usize, StateId) -> usize,
    ) -> f64 {
        let mut total = 0.0;
        for (b, pb) in q[s].iter().enumerate() {
            for (next, pt) in spec.transition(s, &JointAction(vec![action, b])) {
                let p = pb * pt;
                if spec.is_terminal(*next) {
                    total += p;
                } else if step + 1 < h {
                    total += p * go(spec, q, *next, step + 1, h, policy(step + 1, *next), policy);
                }
            }
        }
        total
    }
    if spec.is_terminal(state) || h == 0 {
        return 0.0;
    }
    go(spec, q, state, 0, h, first, policy)
}

/// Maximum over every deterministic policy indexed by (step, state) of the
/// probability of reaching a terminal state within `h` steps after `first`.
pub fn brute_force_reach(
    spec: &GameSpec<f64>,
    q: &[Vec<f64>],
    state: StateId,
    first: usize,
    h: usize,
) -> f64 {
    let n = spec.n_states();
    let a = spec.n_actions(0);
    let slots = n * h.saturating_sub(1);
    let count = a.pow(slots as u32);
    let mut best: f64 = 0.0;
    for code in 0..count {
        let policy = |step: usize, s: StateId| {
            let slot = (step - 1) * n + s;
            (code / a.pow(slot as u32)) % a
        };
        best = best.max(policy_reach(spec, q, state, first, h, &policy));
    }
    best
}

/// Number of policies `brute_force_reach` would enumerate.
pub fn policy_count(n_states: usize, n_own: usize, h: usize) -> u64 {
    (n_own as u64).pow((n_states * h.saturating_sub(1)) as u32)
}

/// Exact probability of the others' actions and transitions along `suffix`
/// when player 1 follows table type `id`.
pub fn exact_path_probability(
    spec: &GameSpec<f64>,
    id: TypeId,
    state: StateId,
    suffix: &[(JointAction, StateId)],
) -> f64 {
    let mut s = state;
    let mut p = 1.0;
    for (joint, next) in suffix {
        p *= table(spec, id)[s][joint.0[1]];
        p *= spec
            .transition(s, joint)
            .iter()
            .find(|(n, _)| n == next)
            .map_or(0.0, |(_, t)| *t);
        s = *next;
    }
    p
}

/// Every `k`-step continuation from `state` whose probability under type
/// `id` is positive, with that probability.
pub fn positive_suffixes(
    spec: &GameSpec<f64>,
    id: TypeId,
    state: StateId,
    k: usize,
) -> Vec<(Vec<(JointAction, StateId)>, f64)> {
    let mut out = Vec::new();
    let mut stack: Vec<(StateId, Vec<(JointAction, StateId)>)> = vec![(state, Vec::new())];
    while let Some((s, path)) = stack.pop() {
        if path.len() == k {
            let p = exact_path_probability(spec, id, state, &path);
            if p > 0.0 {
                out.push((path, p));
            }
            continue;
        }
        if spec.is_terminal(s) {
            continue;
        }
        for joint in spec.joint_actions() {
            for (next, _) in spec.transition(s, &joint) {
                let mut longer = path.clone();
                longer.push((joint.clone(), *next));
                stack.push((*next, longer));
            }
        }
    }
    out
}

/// A random chain with exact rational probabilities; node 0 is initial.
pub fn random_rational_chain(rng: &mut ChaCha8Rng, n: usize) -> ProcessChain<Rational> {
    let term: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.3)).collect();
    let mut edges = Vec::new();
    for src in 0..n {
        if term.contains(&src) {
            continue;
        }
        let k = rng.gen_range(1..=n.min(3));
        let weights: Vec<i64> = (0..k).map(|_| rng.gen_range(1..=5)).collect();
        let total: i64 = weights.iter().sum();
        for w in weights {
            let dst = rng.gen_range(0..n);
            edges.push((src, dst, Rational::new(w.into(), total.into())));
        }
    }
    ProcessChain::from_edges(n, 0, &term, edges).expect("valid chain")
}

/// P(reach term within `t`) from every node, by enumerating all paths.
pub fn path_enumeration_reach(chain: &ProcessChain<Rational>, t: usize) -> Vec<Rational> {
    fn walk(
        chain: &ProcessChain<Rational>,
        node: usize,
        left: usize,
        p: Rational,
        acc: &mut Rational,
    ) {
        if chain.term[node] {
            *acc += p;
            return;
        }
        if left == 0 {
            return;
        }
        for (d, q) in &chain.edges[node] {
            walk(chain, *d, left - 1, p.clone() * q.clone(), acc);
        }
    }
    (0..chain.n_nodes())
        .map(|node| {
            let mut acc = Rational::zero();
            walk(chain, node, t, Rational::one(), &mut acc);
            acc
        })
        .collect()
}

/// Attaches random planning values to every live node; about a third of the
/// entries are zero.
pub fn annotate_randomly(rng: &mut ChaCha8Rng, chain: &mut ProcessChain<f64>) {
    for node in 0..chain.n_nodes() {
        if chain.term[node] {
            continue;
        }
        let mut draw = || -> Vec<f64> {
            (0..2)
                .map(|_| {
                    if rng.gen_bool(0.35) {
                        0.0
                    } else {
                        rng.gen::<f64>()
                    }
                })
                .collect()
        };
        let values = draw();
        let oracle = draw();
        chain.annotations[node] = Some(NodeAnnotation {
            game_state: 0,
            history: format!("n{node}"),
            values,
            maximisers: vec![0],
            oracle_values: Some(oracle),
            oracle_maximisers: Some(vec![0]),
            state_successors: vec![1.0],
            oracle_state_successors: Some(vec![1.0]),
            action_successors: vec![None, None],
        });
    }
}

/// Definition-level criticality: some non-empty set of live nodes is
/// reachable, closed, and has a jointly positive action at every node.
pub fn exhaustive_critical(chain: &ProcessChain<f64>) -> bool {
    let live: Vec<usize> = (0..chain.n_nodes()).filter(|n| !chain.term[*n]).collect();
    let reachable = chain.reachable_from(chain.initial);
    for mask in 1u32..(1 << live.len()) {
        let set: Vec<usize> = (0..live.len())
            .filter(|k| mask & (1 << k) != 0)
            .map(|k| live[k])
            .collect();
        let inside = |n: usize| set.contains(&n);
        let closed = set
            .iter()
            .all(|n| chain.edges[*n].iter().all(|(d, p)| *p == 0.0 || inside(*d)));
        let reached = set.iter().any(|n| reachable[*n]);
        let positive = set.iter().all(|n| {
            let ann = chain.annotations[*n].as_ref().unwrap();
            ann.values
                .iter()
                .zip(ann.oracle_values.as_ref().unwrap())
                .any(|(y, x)| *y > 0.0 && *x > 0.0)
        });
        if closed && reached && positive {
            return true;
        }
    }
    false
}

/// A random f64 chain on `n` nodes where node `n - 1` is the only term node.
pub fn random_float_chain(rng: &mut ChaCha8Rng, n: usize) -> ProcessChain<f64> {
    let mut edges = Vec::new();
    for src in 0..n - 1 {
        let k = rng.gen_range(1..=2);
        let targets: Vec<usize> = (0..k).map(|_| rng.gen_range(0..n)).collect();
        for d in &targets {
            edges.push((src, *d, 1.0 / k as f64));
        }
    }
    ProcessChain::from_edges(n, 0, &[n - 1], edges).expect("valid chain")
}

/// Compares every action value of a random game against policy enumeration.
pub fn planner_oracle_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_states = rng.gen_range(2..=6);
    let n_own = rng.gen_range(1..=3);
    let n_opp = rng.gen_range(1..=3);
    let n_types = rng.gen_range(1..=3);
    let mut h = rng.gen_range(1..=4);
    while h > 1 && policy_count(n_states, n_own, h) > 20_000 {
        h -= 1;
    }
    let spec = random_table_game(&mut rng, n_states, n_own, n_opp, n_types, true);
    let raw: Vec<f64> = (0..n_types).map(|_| rng.gen::<f64>() + 0.1).collect();
    let sum: f64 = raw.iter().sum();
    let ids = spec.user_types[1].clone();
    let belief = JointBelief {
        profiles: ids
            .iter()
            .zip(&raw)
            .map(|(id, w)| (vec![*id], w / sum))
            .collect(),
        degenerate: false,
    };
    let weights: Vec<_> = ids.iter().zip(&raw).map(|(id, w)| (*id, w / sum)).collect();
    let q = opponent_mixture(&spec, &weights);
    let config = PlanConfig::new(1.0, h).unwrap();
    let planner = Planner::new(&spec, &config, &belief);
    let tracker = TypeTracker::all(&spec);
    for state in 0..n_states {
        let values = planner.action_values(&tracker, state, 0);
        for (a, v) in values.iter().enumerate() {
            let want = brute_force_reach(&spec, &q, state, a, h);
            if (v - want).abs() > 1e-9 {
                return Err(format!(
                    "seed {seed} state {state} action {a} h {h}: planner {v} oracle {want}"
                ));
            }
        }
    }
    Ok(())
}
