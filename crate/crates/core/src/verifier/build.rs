//! Construction of the induced chain of a controlled game.
//!
//! Concrete configurations (game state, type memories, controller) are
//! explored breadth first and mapped to quotient nodes. A node is expanded
//! from its first configuration; later configurations with the same key are
//! re-expanded up to `validation_visits` times and must agree on every
//! strategy output and on the outgoing node distribution.

use std::collections::{BTreeMap, VecDeque};

use crate::beliefs::{JointBelief, PosteriorKind};
use crate::error::VerifyError;
use crate::game::{ActionId, GameSpec, History, JointAction, StateId, TypeId};
use crate::planner::{plan, Controller, HbaController, PlanConfig, PlanResult};
use crate::scalar::Prob;
use crate::strategy::TypeTracker;

use super::chain::{NodeAnnotation, ProcessChain, ProcessTag};

/// Which controller drives the chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainController {
    /// Plans with a point-mass belief on the true types.
    Oracle,
    /// Learns a posterior over the user-defined types.
    Hba(PosteriorKind),
}

/// What part of the controller's state enters a node key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quotient {
    /// The belief, rounded to 1e-9.
    Belief,
    /// Only the maximiser set of the current plan.
    ActionSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuildOptions {
    pub quotient: Quotient,
    pub max_nodes: usize,
    pub validation_visits: usize,
    /// Also record per-action successors for non-maximising actions. They
    /// are kept only when every successor is already a node of the chain.
    pub explore_all_actions: bool,
    /// Include the memory classes of the types in node keys. Turning this
    /// off merges histories that differ only in type phase.
    pub include_memory: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            quotient: Quotient::Belief,
            max_nodes: 10_000,
            validation_visits: 3,
            explore_all_actions: false,
            include_memory: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum NodeKey {
    Terminal(StateId),
    Live {
        state: StateId,
        truth: Vec<usize>,
        user: Vec<usize>,
        controller: Vec<i64>,
    },
}

#[derive(Clone)]
struct Config<T> {
    state: StateId,
    truth: TypeTracker,
    controller: HbaController<T>,
    history: History,
}

struct Expansion<T> {
    plan: PlanResult<T>,
    oracle: Option<PlanResult<T>>,
    signature: Vec<Vec<T>>,
    edges: BTreeMap<NodeKey, T>,
    per_action: Vec<Option<BTreeMap<NodeKey, T>>>,
    state_successors: Vec<T>,
    oracle_state_successors: Option<Vec<T>>,
    successors: Vec<Config<T>>,
}

struct NodeData<T> {
    key: NodeKey,
    history: String,
    visits: usize,
    expansion: Option<Expansion<T>>,
}

struct Builder<'a, T> {
    spec: &'a GameSpec<T>,
    config: &'a PlanConfig<T>,
    options: &'a BuildOptions,
    tag: ProcessTag,
    latent: Vec<TypeId>,
    oracle_belief: Option<JointBelief<T>>,
}

fn quantise<T: Prob>(p: &T) -> i64 {
    (p.to_f64_lossy() * 1e9).round() as i64
}

fn add_mass<K: Ord, T: Prob>(map: &mut BTreeMap<K, T>, key: K, p: T) {
    match map.get_mut(&key) {
        Some(q) => *q = q.clone() + p,
        None => {
            map.insert(key, p);
        }
    }
}

impl<'a, T: Prob> Builder<'a, T> {
    fn key(&self, cfg: &Config<T>) -> Result<NodeKey, VerifyError> {
        if self.spec.is_terminal(cfg.state) {
            return Ok(NodeKey::Terminal(cfg.state));
        }
        let infinite = |id: TypeId| VerifyError::InfiniteMemory(self.spec.types[id].name.clone());
        let mut truth = cfg.truth.memory_keys(self.spec).map_err(infinite)?;
        let mut user = cfg
            .controller
            .tracker()
            .memory_keys(self.spec)
            .map_err(infinite)?;
        if !self.options.include_memory {
            truth.clear();
            user.clear();
        }
        let controller = match self.options.quotient {
            Quotient::Belief => cfg
                .controller
                .snapshot()
                .profiles
                .iter()
                .map(|(_, w)| quantise(w))
                .collect(),
            Quotient::ActionSet => cfg
                .controller
                .plan(self.spec, cfg.state)
                .maximisers
                .iter()
                .map(|a| *a as i64)
                .collect(),
        };
        Ok(NodeKey::Live {
            state: cfg.state,
            truth,
            user,
            controller,
        })
    }

    fn label(&self, key: &NodeKey) -> String {
        match key {
            NodeKey::Terminal(s) => self.spec.state_names[*s].clone(),
            NodeKey::Live {
                state,
                truth,
                user,
                controller,
            } => format!(
                "{} truth={:?} user={:?} ctl={:?}",
                self.spec.state_names[*state], truth, user, controller
            ),
        }
    }

    /// Probability of each others' action profile under the true Δ, keyed by
    /// the actions of `others()` in order.
    fn others_distribution(&self, cfg: &Config<T>) -> BTreeMap<Vec<ActionId>, T> {
        let others = self.spec.others();
        let mut out = BTreeMap::new();
        for (profile, w) in &self.spec.delta {
            if w.is_zero() {
                continue;
            }
            let dists: Vec<Vec<T>> = profile
                .iter()
                .map(|id| cfg.truth.distribution(self.spec, *id, cfg.state))
                .collect();
            let sizes: Vec<usize> = others.iter().map(|j| self.spec.n_actions(*j)).collect();
            for combo in crate::beliefs::profile_indices(&sizes) {
                let mut p = w.clone();
                for (k, a) in combo.iter().enumerate() {
                    p = p * dists[k][*a].clone();
                }
                if !p.is_zero() {
                    add_mass(&mut out, combo, p);
                }
            }
        }
        out
    }

    fn expand(&self, cfg: &Config<T>) -> Result<Expansion<T>, VerifyError> {
        let spec = self.spec;
        let others = spec.others();
        let n_own = spec.n_actions(spec.controlled);
        let plan_result = cfg.controller.plan(spec, cfg.state);
        let oracle = self
            .oracle_belief
            .as_ref()
            .map(|b| plan(spec, b, &cfg.truth, cfg.state, self.config));
        let mut signature: Vec<Vec<T>> = self
            .latent
            .iter()
            .map(|id| cfg.truth.distribution(spec, *id, cfg.state))
            .collect();
        signature.push(plan_result.distribution.clone());

        let others_dist = self.others_distribution(cfg);
        let explore: Vec<bool> = (0..n_own)
            .map(|a| {
                self.options.explore_all_actions
                    || plan_result.maximisers.contains(&a)
                    || oracle.as_ref().is_some_and(|o| o.maximisers.contains(&a))
            })
            .collect();
        let mut per_action: Vec<Option<BTreeMap<NodeKey, T>>> = vec![None; n_own];
        let mut state_dist: Vec<Vec<T>> = vec![vec![T::zero(); spec.n_states()]; n_own];
        let mut successors = Vec::new();
        for a in 0..n_own {
            if !explore[a] {
                continue;
            }
            let mut map = BTreeMap::new();
            for (combo, w) in &others_dist {
                let mut actions = vec![0; spec.n_players()];
                actions[spec.controlled] = a;
                for (k, j) in others.iter().enumerate() {
                    actions[*j] = combo[k];
                }
                let joint = JointAction(actions);
                for (next, p) in spec.transition(cfg.state, &joint) {
                    let mass = w.clone() * p.clone();
                    if mass.is_zero() {
                        continue;
                    }
                    state_dist[a][*next] = state_dist[a][*next].clone() + mass.clone();
                    let mut succ = cfg.clone();
                    succ.controller.observe(spec, cfg.state, &joint, *next);
                    succ.truth.advance(spec, cfg.state, &joint);
                    succ.history.push(joint.clone(), *next);
                    succ.state = *next;
                    add_mass(&mut map, self.key(&succ)?, mass);
                    if plan_result.maximisers.contains(&a) {
                        successors.push(succ);
                    }
                }
            }
            per_action[a] = Some(map);
        }

        let mix = |maximisers: &[ActionId]| -> (BTreeMap<NodeKey, T>, Vec<T>) {
            let share = T::from_ratio(1, maximisers.len() as i64);
            let mut edges = BTreeMap::new();
            let mut states = vec![T::zero(); spec.n_states()];
            for a in maximisers {
                for (k, p) in per_action[*a].as_ref().expect("maximisers are explored") {
                    add_mass(&mut edges, k.clone(), share.clone() * p.clone());
                }
                for (s, p) in state_dist[*a].iter().enumerate() {
                    states[s] = states[s].clone() + share.clone() * p.clone();
                }
            }
            (edges, states)
        };
        let (edges, state_successors) = mix(&plan_result.maximisers);
        let oracle_state_successors = oracle.as_ref().map(|o| mix(&o.maximisers).1);
        Ok(Expansion {
            plan: plan_result,
            oracle,
            signature,
            edges,
            per_action,
            state_successors,
            oracle_state_successors,
            successors,
        })
    }

    fn compare(
        &self,
        key: &NodeKey,
        first: &NodeData<T>,
        cfg: &Config<T>,
        next: &Expansion<T>,
    ) -> Result<(), VerifyError> {
        let old = first.expansion.as_ref().expect("live nodes are expanded");
        let tol = T::bisim_tolerance();
        let close = |a: &[T], b: &[T]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.close_to(y, &tol))
        };
        let violation = |what: &str| VerifyError::QuotientViolation {
            key: self.label(key),
            first: first.history.clone(),
            second: cfg.history.to_string(),
            what: what.to_string(),
        };
        if old.signature.len() != next.signature.len()
            || !old
                .signature
                .iter()
                .zip(&next.signature)
                .all(|(a, b)| close(a, b))
        {
            return Err(violation("strategy outputs"));
        }
        let same_edges = old.edges.len() == next.edges.len()
            && old
                .edges
                .iter()
                .zip(&next.edges)
                .all(|((ka, pa), (kb, pb))| ka == kb && pa.close_to(pb, &tol));
        if !same_edges {
            return Err(violation("successor distribution"));
        }
        Ok(())
    }
}

/// Builds the chain induced by `controller` on `spec`.
pub fn build_chain<T: Prob>(
    spec: &GameSpec<T>,
    controller: ChainController,
    config: &PlanConfig<T>,
    options: &BuildOptions,
) -> Result<ProcessChain<T>, VerifyError> {
    let oracle_belief = spec
        .pure_profile()
        .map(|p| JointBelief::point_mass(p.to_vec()));
    let (tag, hba) = match controller {
        ChainController::Oracle => {
            if oracle_belief.is_none() {
                return Err(VerifyError::MixedDelta);
            }
            (ProcessTag::X, HbaController::oracle(spec, config.clone())?)
        }
        ChainController::Hba(kind) => (
            ProcessTag::Y,
            HbaController::new(spec, kind, config.clone()),
        ),
    };
    let latent: Vec<TypeId> = spec
        .others()
        .iter()
        .flat_map(|j| spec.latent[*j].clone())
        .collect();
    let builder = Builder {
        spec,
        config,
        options,
        tag,
        latent: latent.clone(),
        oracle_belief,
    };

    let mut index: BTreeMap<NodeKey, usize> = BTreeMap::new();
    let mut nodes: Vec<NodeData<T>> = Vec::new();
    let mut queue = VecDeque::from([Config {
        state: spec.initial,
        truth: TypeTracker::for_types(spec, latent),
        controller: hba,
        history: History::new(spec.initial),
    }]);
    while let Some(cfg) = queue.pop_front() {
        let key = builder.key(&cfg)?;
        if let Some(&idx) = index.get(&key) {
            let node = &nodes[idx];
            if node.expansion.is_none() || node.visits >= options.validation_visits {
                continue;
            }
            let exp = builder.expand(&cfg)?;
            builder.compare(&key, node, &cfg, &exp)?;
            nodes[idx].visits += 1;
            queue.extend(exp.successors);
            continue;
        }
        if nodes.len() >= options.max_nodes {
            return Err(VerifyError::TooLarge(options.max_nodes));
        }
        let mut data = NodeData {
            key: key.clone(),
            history: cfg.history.to_string(),
            visits: 1,
            expansion: None,
        };
        if !spec.is_terminal(cfg.state) {
            let mut exp = builder.expand(&cfg)?;
            queue.extend(std::mem::take(&mut exp.successors));
            data.expansion = Some(exp);
        }
        index.insert(key, nodes.len());
        nodes.push(data);
    }

    let to_indices = |map: &BTreeMap<NodeKey, T>| -> Vec<(usize, T)> {
        map.iter().map(|(k, p)| (index[k], p.clone())).collect()
    };
    let mut chain = ProcessChain {
        tag: builder.tag,
        labels: nodes.iter().map(|n| builder.label(&n.key)).collect(),
        edges: Vec::with_capacity(nodes.len()),
        initial: 0,
        term: nodes
            .iter()
            .map(|n| matches!(n.key, NodeKey::Terminal(_)))
            .collect(),
        annotations: Vec::with_capacity(nodes.len()),
    };
    for (idx, node) in nodes.iter().enumerate() {
        match &node.expansion {
            None => {
                chain.edges.push(vec![(idx, T::one())]);
                chain.annotations.push(None);
            }
            Some(exp) => {
                chain.edges.push(to_indices(&exp.edges));
                let game_state = match node.key {
                    NodeKey::Live { state, .. } | NodeKey::Terminal(state) => state,
                };
                chain.annotations.push(Some(NodeAnnotation {
                    game_state,
                    history: node.history.clone(),
                    values: exp.plan.values.clone(),
                    maximisers: exp.plan.maximisers.clone(),
                    oracle_values: exp.oracle.as_ref().map(|o| o.values.clone()),
                    oracle_maximisers: exp.oracle.as_ref().map(|o| o.maximisers.clone()),
                    state_successors: exp.state_successors.clone(),
                    oracle_state_successors: exp.oracle_state_successors.clone(),
                    action_successors: exp
                        .per_action
                        .iter()
                        .map(|m| {
                            m.as_ref()
                                .filter(|m| m.keys().all(|k| index.contains_key(k)))
                                .map(&to_indices)
                        })
                        .collect(),
                }));
            }
        }
    }
    chain.validate()?;
    Ok(chain)
}

/// Builds the ideal and user chains with the same options.
pub fn build_pair<T: Prob>(
    spec: &GameSpec<T>,
    kind: PosteriorKind,
    config: &PlanConfig<T>,
    options: &BuildOptions,
) -> Result<(ProcessChain<T>, ProcessChain<T>), VerifyError> {
    Ok((
        build_chain(spec, ChainController::Oracle, config, options)?,
        build_chain(spec, ChainController::Hba(kind), config, options)?,
    ))
}
