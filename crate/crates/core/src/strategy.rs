//! Type strategies: history-dependent action distributions for the
//! uncontrolled players.
//!
//! A strategy never sees the raw history. It sees its own memory, which is
//! advanced on every observed `(state, joint action, next state)` event, plus
//! the current state. This keeps every strategy a deterministic function of
//! the history while letting the verifier quotient histories by memory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::game::{ActionId, GameSpec, History, JointAction, StateId, TypeId};
use crate::scalar::Prob;

/// Linear ε annealing: `start` before `anneal_start`, zero from `anneal_end` on.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub anneal_start: usize,
    pub anneal_end: usize,
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        Self {
            start: epsilon,
            anneal_start: usize::MAX,
            anneal_end: usize::MAX,
        }
    }

    pub fn at(&self, t: usize) -> f64 {
        if t < self.anneal_start {
            self.start
        } else if t >= self.anneal_end {
            0.0
        } else {
            let span = (self.anneal_end - self.anneal_start) as f64;
            self.start * (1.0 - (t - self.anneal_start) as f64 / span)
        }
    }
}

/// How a learning type's private payoff table is drawn.
#[derive(Clone, Debug, PartialEq)]
pub enum PayoffLayout {
    /// Every entry uniform in `[0, 1)`.
    Random,
    /// Per state, a shared permutation (from `layout_seed`) gives type `index`
    /// its own best action with payoff 1; all other entries are uniform in
    /// `[0, 0.5)`. Types built with distinct indices never share a best action.
    Separated { layout_seed: u64, index: usize },
}

/// Configuration of a tabular value-learning type.
#[derive(Clone, Debug, PartialEq)]
pub struct RlTypeConfig {
    pub payoff_seed: u64,
    pub layout: PayoffLayout,
    pub learning_rate: f64,
    pub schedule: EpsilonSchedule,
    /// Optimistic initial action value; untried actions look best until observed.
    pub initial_value: f64,
}

impl RlTypeConfig {
    pub fn new(payoff_seed: u64, schedule: EpsilonSchedule) -> Self {
        Self {
            payoff_seed,
            layout: PayoffLayout::Random,
            learning_rate: 0.5,
            schedule,
            initial_value: 2.0,
        }
    }
}

/// A learning type. `payoffs[s][a]` is the private reward for playing `a` in `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct Learner {
    pub config: RlTypeConfig,
    pub payoffs: Vec<Vec<f64>>,
    /// Per-entry tie-break perturbation of the initial values.
    pub init_noise: Vec<Vec<f64>>,
}

impl Learner {
    pub fn new(config: RlTypeConfig, n_states: usize, n_actions: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.payoff_seed);
        let mut payoffs: Vec<Vec<f64>> = match &config.layout {
            PayoffLayout::Random => (0..n_states)
                .map(|_| (0..n_actions).map(|_| rng.gen::<f64>()).collect())
                .collect(),
            PayoffLayout::Separated { .. } => (0..n_states)
                .map(|_| (0..n_actions).map(|_| 0.5 * rng.gen::<f64>()).collect())
                .collect(),
        };
        if let PayoffLayout::Separated { layout_seed, index } = config.layout {
            let mut layout = ChaCha8Rng::seed_from_u64(layout_seed);
            for row in payoffs.iter_mut() {
                let mut perm: Vec<usize> = (0..n_actions).collect();
                for k in (1..n_actions).rev() {
                    let j = layout.gen_range(0..=k);
                    perm.swap(k, j);
                }
                row[perm[index % n_actions]] = 1.0;
            }
        }
        let init_noise = (0..n_states)
            .map(|_| (0..n_actions).map(|_| 1e-3 * rng.gen::<f64>()).collect())
            .collect();
        Self {
            config,
            payoffs,
            init_noise,
        }
    }

    fn initial_memory(&self) -> LearnerMemory {
        LearnerMemory {
            t: 0,
            values: self
                .init_noise
                .iter()
                .map(|row| row.iter().map(|n| self.config.initial_value + n).collect())
                .collect(),
        }
    }

    /// Greedy action in `state` (lowest id on ties).
    pub fn greedy(&self, memory: &LearnerMemory, state: StateId) -> ActionId {
        argmax_lowest(&memory.values[state])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerMemory {
    pub t: usize,
    pub values: Vec<Vec<f64>>,
}

/// The behaviour encoded by a type.
#[derive(Clone, Debug, PartialEq)]
pub enum TypeKind<T> {
    /// The same distribution after every history.
    Fixed(Vec<T>),
    /// One distribution per game state.
    Table(Vec<Vec<T>>),
    /// Cycles through the listed actions: action at time t is `actions[t % len]`.
    Periodic(Vec<ActionId>),
    /// Plays the listed actions, then repeats the last one forever.
    Sequence(Vec<ActionId>),
    /// Stationary external ε-greedy randomisation around a fixed greedy action.
    EpsilonGreedy { greedy: ActionId, epsilon: T },
    /// Tabular value learner with ε-greedy exposure.
    Learner(Box<Learner>),
}

/// A named type owned by one player.
#[derive(Clone, Debug, PartialEq)]
pub struct TypeStrategy<T> {
    pub name: String,
    pub player: usize,
    pub kind: TypeKind<T>,
}

/// Per-type internal state.
#[derive(Clone, Debug, PartialEq)]
pub enum Memory {
    Stateless,
    Step(usize),
    Learner(Box<LearnerMemory>),
}

fn argmax_lowest(values: &[f64]) -> ActionId {
    let mut best = 0;
    for (a, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = a;
        }
    }
    best
}

/// External ε-greedy vector: greedy gets `1 - ε + ε/|A|`, every other action `ε/|A|`.
pub fn epsilon_greedy<T: Prob>(greedy: ActionId, epsilon: &T, n_actions: usize) -> Vec<T> {
    let share = epsilon.clone() / T::from_usize(n_actions).expect("action count");
    let mut dist = vec![share.clone(); n_actions];
    dist[greedy] = T::one() - epsilon.clone() + share;
    dist
}

fn point_mass<T: Prob>(action: ActionId, n_actions: usize) -> Vec<T> {
    let mut dist = vec![T::zero(); n_actions];
    dist[action] = T::one();
    dist
}

impl<T: Prob> TypeStrategy<T> {
    pub fn new(name: impl Into<String>, player: usize, kind: TypeKind<T>) -> Self {
        Self {
            name: name.into(),
            player,
            kind,
        }
    }

    pub fn initial_memory(&self) -> Memory {
        match &self.kind {
            TypeKind::Fixed(_) | TypeKind::Table(_) | TypeKind::EpsilonGreedy { .. } => {
                Memory::Stateless
            }
            TypeKind::Periodic(_) | TypeKind::Sequence(_) => Memory::Step(0),
            TypeKind::Learner(l) => Memory::Learner(Box::new(l.initial_memory())),
        }
    }

    /// True when the memory ranges over finitely many classes.
    pub fn is_finite_memory(&self) -> bool {
        !matches!(self.kind, TypeKind::Learner(_))
    }

    /// Finite quotient class of `memory`, or `None` for unbounded memories.
    pub fn memory_key(&self, memory: &Memory) -> Option<usize> {
        match (&self.kind, memory) {
            (TypeKind::Periodic(seq), Memory::Step(t)) => Some(t % seq.len()),
            (TypeKind::Sequence(seq), Memory::Step(t)) => Some((*t).min(seq.len() - 1)),
            (TypeKind::Learner(_), _) => None,
            _ => Some(0),
        }
    }

    /// Action distribution in `state` given the type's memory.
    pub fn distribution(&self, memory: &Memory, state: StateId, n_actions: usize) -> Vec<T> {
        match (&self.kind, memory) {
            (TypeKind::Fixed(dist), _) => dist.clone(),
            (TypeKind::Table(rows), _) => rows[state].clone(),
            (TypeKind::EpsilonGreedy { greedy, epsilon }, _) => {
                epsilon_greedy(*greedy, epsilon, n_actions)
            }
            (TypeKind::Periodic(seq), Memory::Step(t)) => point_mass(seq[t % seq.len()], n_actions),
            (TypeKind::Sequence(seq), Memory::Step(t)) => {
                point_mass(seq[(*t).min(seq.len() - 1)], n_actions)
            }
            (TypeKind::Learner(learner), Memory::Learner(mem)) => {
                let eps = T::from_f64_lossy(learner.config.schedule.at(mem.t));
                epsilon_greedy(learner.greedy(mem, state), &eps, n_actions)
            }
            (kind, memory) => panic!("memory {memory:?} does not belong to type kind {kind:?}"),
        }
    }

    /// Advances memory by one observed transition.
    pub fn advance(&self, memory: &mut Memory, state: StateId, joint: &JointAction) {
        match (&self.kind, memory) {
            (TypeKind::Periodic(_) | TypeKind::Sequence(_), Memory::Step(t)) => *t += 1,
            (TypeKind::Learner(learner), Memory::Learner(mem)) => {
                let own = joint.0[self.player];
                let reward = learner.payoffs[state][own];
                let q = &mut mem.values[state][own];
                *q += learner.config.learning_rate * (reward - *q);
                mem.t += 1;
            }
            _ => {}
        }
    }

    /// Distribution after `history`, replayed from the initial memory.
    pub fn distribution_for_history(&self, spec: &GameSpec<T>, history: &History) -> Vec<T> {
        let mut memory = self.initial_memory();
        for (tau, joint) in history.actions.iter().enumerate() {
            self.advance(&mut memory, history.states[tau], joint);
        }
        self.distribution(&memory, history.current(), spec.n_actions(self.player))
    }
}

/// Memories for a set of types, advanced in lock step with the game.
#[derive(Clone, Debug)]
pub struct TypeTracker {
    memories: Vec<Option<Memory>>,
    t: usize,
}

impl TypeTracker {
    /// Tracks every type in the spec's library.
    pub fn all<T: Prob>(spec: &GameSpec<T>) -> Self {
        Self::for_types(spec, 0..spec.types.len())
    }

    pub fn for_types<T: Prob>(spec: &GameSpec<T>, ids: impl IntoIterator<Item = TypeId>) -> Self {
        let mut memories = vec![None; spec.types.len()];
        for id in ids {
            memories[id] = Some(spec.types[id].initial_memory());
        }
        Self { memories, t: 0 }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn tracked(&self) -> impl Iterator<Item = TypeId> + '_ {
        self.memories
            .iter()
            .enumerate()
            .filter_map(|(id, m)| m.as_ref().map(|_| id))
    }

    pub fn memory(&self, id: TypeId) -> &Memory {
        self.memories[id]
            .as_ref()
            .unwrap_or_else(|| panic!("type {id} is not tracked"))
    }

    pub fn distribution<T: Prob>(&self, spec: &GameSpec<T>, id: TypeId, state: StateId) -> Vec<T> {
        let ty = &spec.types[id];
        ty.distribution(self.memory(id), state, spec.n_actions(ty.player))
    }

    pub fn advance<T: Prob>(&mut self, spec: &GameSpec<T>, state: StateId, joint: &JointAction) {
        for (id, memory) in self.memories.iter_mut().enumerate() {
            if let Some(memory) = memory {
                spec.types[id].advance(memory, state, joint);
            }
        }
        self.t += 1;
    }

    /// Quotient classes of all tracked memories, or the first type with unbounded memory.
    pub fn memory_keys<T: Prob>(&self, spec: &GameSpec<T>) -> Result<Vec<usize>, TypeId> {
        self.tracked()
            .map(|id| spec.types[id].memory_key(self.memory(id)).ok_or(id))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_greedy_two_actions() {
        let ty = TypeStrategy::new(
            "eg",
            1,
            TypeKind::EpsilonGreedy {
                greedy: 0,
                epsilon: 0.2f64,
            },
        );
        let dist = ty.distribution(&ty.initial_memory(), 0, 2);
        assert!((dist[0] - 0.9).abs() < 1e-15);
        assert!((dist[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn periodic_type_alternates() {
        let ty = TypeStrategy::<f64>::new("LR", 1, TypeKind::Periodic(vec![0, 1]));
        let mut memory = ty.initial_memory();
        assert_eq!(ty.distribution(&memory, 0, 2), vec![1.0, 0.0]);
        ty.advance(&mut memory, 0, &JointAction(vec![0, 0]));
        assert_eq!(ty.distribution(&memory, 0, 2), vec![0.0, 1.0]);
        assert_eq!(ty.memory_key(&memory), Some(1));
        ty.advance(&mut memory, 0, &JointAction(vec![0, 1]));
        assert_eq!(ty.memory_key(&memory), Some(0));
    }

    #[test]
    fn sequence_repeats_last() {
        let ty = TypeStrategy::<f64>::new("seq", 1, TypeKind::Sequence(vec![1, 0]));
        let mut memory = ty.initial_memory();
        for _ in 0..5 {
            ty.advance(&mut memory, 0, &JointAction(vec![0, 0]));
        }
        assert_eq!(ty.distribution(&memory, 0, 2), vec![1.0, 0.0]);
        assert_eq!(ty.memory_key(&memory), Some(1));
    }

    #[test]
    fn schedule_is_piecewise_linear() {
        let s = EpsilonSchedule {
            start: 0.7,
            anneal_start: 1000,
            anneal_end: 2000,
        };
        assert_eq!(s.at(0), 0.7);
        assert_eq!(s.at(999), 0.7);
        assert!((s.at(1500) - 0.35).abs() < 1e-12);
        assert_eq!(s.at(2000), 0.0);
        assert_eq!(s.at(5000), 0.0);
    }

    #[test]
    fn learner_exposes_greedy_point_mass_after_annealing() {
        let mut config = RlTypeConfig::new(
            7,
            EpsilonSchedule {
                start: 0.7,
                anneal_start: 0,
                anneal_end: 1,
            },
        );
        config.layout = PayoffLayout::Separated {
            layout_seed: 3,
            index: 0,
        };
        let learner = Learner::new(config, 1, 4);
        let best = argmax_lowest(&learner.payoffs[0]);
        assert_eq!(learner.payoffs[0][best], 1.0);
        let ty = TypeStrategy::<f64>::new("rl", 1, TypeKind::Learner(Box::new(learner)));
        let mut memory = ty.initial_memory();
        // Observe every action a few times so the optimistic values settle.
        for _ in 0..20 {
            for a in 0..4 {
                ty.advance(&mut memory, 0, &JointAction(vec![0, a]));
            }
        }
        let dist = ty.distribution(&memory, 0, 4);
        let mut expected = vec![0.0; 4];
        expected[best] = 1.0;
        assert_eq!(dist, expected);
    }
}
