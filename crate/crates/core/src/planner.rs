//! Expected-payoff recursion and action selection.
//!
//! `E` mixes over type profiles with the posterior fixed at the real history,
//! and over the others' actions with the types' predictions at the
//! hypothetical history. `Q` folds in the transition kernel with the
//! reward-on-entry convention. The regress stops at `horizon` with value 0.

use std::cell::RefCell;
use std::collections::HashMap;

use rand::RngCore;

use crate::beliefs::{BeliefState, JointBelief, PosteriorKind};
use crate::error::GameError;
use crate::game::{sample_index, ActionId, GameSpec, JointAction, StateId, TypeId};
use crate::scalar::Prob;
use crate::strategy::TypeTracker;

#[derive(Clone, Debug, PartialEq)]
pub struct PlanConfig<T> {
    pub gamma: T,
    pub horizon: usize,
}

impl<T: Prob> PlanConfig<T> {
    pub fn new(gamma: T, horizon: usize) -> Result<Self, GameError> {
        if horizon == 0 {
            return Err(GameError::Invalid(
                "planning horizon must be at least 1".into(),
            ));
        }
        if gamma < T::zero() || gamma > T::one() {
            return Err(GameError::Invalid(format!(
                "discount {gamma} outside [0, 1]"
            )));
        }
        Ok(Self { gamma, horizon })
    }
}

/// Expected payoffs of every action, the maximiser set and the chosen distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanResult<T> {
    pub values: Vec<T>,
    pub maximisers: Vec<ActionId>,
    pub distribution: Vec<T>,
}

impl<T: Prob> PlanResult<T> {
    /// Uniform over the actions within `T::tie_tolerance()` of the maximum.
    pub fn from_values(values: Vec<T>) -> Self {
        let tol = T::tie_tolerance();
        let mut best = values[0].clone();
        for v in &values[1..] {
            if *v > best {
                best = v.clone();
            }
        }
        let maximisers: Vec<ActionId> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| best.clone() - (*v).clone() <= tol)
            .map(|(a, _)| a)
            .collect();
        let share = T::from_ratio(1, maximisers.len() as i64);
        let mut distribution = vec![T::zero(); values.len()];
        for a in &maximisers {
            distribution[*a] = share.clone();
        }
        Self {
            values,
            maximisers,
            distribution,
        }
    }
}

/// Draws from the uniform distribution over the maximiser set.
pub fn select_action<T: Prob>(plan: &PlanResult<T>, rng: &mut dyn RngCore) -> ActionId {
    sample_index(&plan.distribution, rng)
}

type MemoKey = (StateId, usize, Vec<usize>);

/// One planning call: spec, configuration and a frozen belief.
pub struct Planner<'a, T> {
    spec: &'a GameSpec<T>,
    config: &'a PlanConfig<T>,
    belief: &'a JointBelief<T>,
    memo: RefCell<HashMap<MemoKey, Vec<T>>>,
}

impl<'a, T: Prob> Planner<'a, T> {
    pub fn new(
        spec: &'a GameSpec<T>,
        config: &'a PlanConfig<T>,
        belief: &'a JointBelief<T>,
    ) -> Self {
        Self {
            spec,
            config,
            belief,
            memo: RefCell::new(HashMap::new()),
        }
    }

    /// E^{aᵢ}_s(Ĥ) for every aᵢ, where Ĥ is summarised by `tracker`.
    pub fn action_values(&self, tracker: &TypeTracker, state: StateId, depth: usize) -> Vec<T> {
        let n_own = self.spec.n_actions(self.spec.controlled);
        if self.spec.is_terminal(state) || depth >= self.config.horizon {
            return vec![T::zero(); n_own];
        }
        let key = tracker
            .memory_keys(self.spec)
            .ok()
            .map(|keys| (state, depth, keys));
        if let Some(key) = &key {
            if let Some(hit) = self.memo.borrow().get(key) {
                return hit.clone();
            }
        }
        let mut values = vec![T::zero(); n_own];
        for (joint, weight) in self.opponent_mixture(tracker, state) {
            let q = self.action_value(tracker, state, &joint, depth);
            let own = joint.0[self.spec.controlled];
            values[own] = values[own].clone() + weight * q;
        }
        if let Some(key) = key {
            self.memo.borrow_mut().insert(key, values.clone());
        }
        values
    }

    /// E^{aᵢ}_s(Ĥ) for one action.
    pub fn expected_payoff(
        &self,
        tracker: &TypeTracker,
        state: StateId,
        action: ActionId,
        depth: usize,
    ) -> T {
        self.action_values(tracker, state, depth)[action].clone()
    }

    /// Q^a_s(Ĥ) = Σ_{s'} T(s,a,s')·[r(s,a,s') + γ·max_{aᵢ} E_{s'}(⟨Ĥ,a,s'⟩)].
    pub fn action_value(
        &self,
        tracker: &TypeTracker,
        state: StateId,
        joint: &JointAction,
        depth: usize,
    ) -> T {
        let mut next_tracker: Option<TypeTracker> = None;
        let mut q = T::zero();
        for (next, p) in self.spec.transition(state, joint) {
            let mut inner = self.spec.reward(state, *next);
            if depth + 1 < self.config.horizon && !self.spec.is_terminal(*next) {
                let advanced = next_tracker.get_or_insert_with(|| {
                    let mut t = tracker.clone();
                    t.advance(self.spec, state, joint);
                    t
                });
                let future = self.action_values(advanced, *next, depth + 1);
                let best = future
                    .into_iter()
                    .fold(T::zero(), |m, v| if v > m { v } else { m });
                inner = inner + self.config.gamma.clone() * best;
            }
            q = q + p.clone() * inner;
        }
        q
    }

    /// Joint actions with their weight Σ_θ Pr(θ)·∏ⱼ πⱼ(Ĥ, aⱼ, θⱼ); the
    /// controlled player's slot ranges over all of its actions.
    fn opponent_mixture(&self, tracker: &TypeTracker, state: StateId) -> Vec<(JointAction, T)> {
        let others = self.spec.others();
        let mut cache: HashMap<TypeId, Vec<T>> = HashMap::new();
        let mut out = Vec::new();
        for joint in self.spec.joint_actions() {
            let mut weight = T::zero();
            for (profile, w) in self.belief.support() {
                let mut term = w.clone();
                for (k, j) in others.iter().enumerate() {
                    let dist = cache
                        .entry(profile[k])
                        .or_insert_with(|| tracker.distribution(self.spec, profile[k], state));
                    term = term * dist[joint.0[*j]].clone();
                    if term.is_zero() {
                        break;
                    }
                }
                weight = weight + term;
            }
            if !weight.is_zero() {
                out.push((joint, weight));
            }
        }
        out
    }
}

/// Runs one planning call from the memories in `tracker`.
pub fn plan<T: Prob>(
    spec: &GameSpec<T>,
    belief: &JointBelief<T>,
    tracker: &TypeTracker,
    state: StateId,
    config: &PlanConfig<T>,
) -> PlanResult<T> {
    let planner = Planner::new(spec, config, belief);
    PlanResult::from_values(planner.action_values(tracker, state, 0))
}

/// What the controlled player did at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision<T> {
    pub action: ActionId,
    pub distribution: Vec<T>,
    pub values: Option<Vec<T>>,
}

/// A policy for the controlled player.
pub trait Controller<T: Prob> {
    fn decide(&mut self, spec: &GameSpec<T>, state: StateId, rng: &mut dyn RngCore) -> Decision<T>;

    /// Called once per step with the realised joint action and successor.
    fn observe(&mut self, spec: &GameSpec<T>, state: StateId, joint: &JointAction, next: StateId);

    fn degenerate(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug)]
enum BeliefSource<T> {
    Learned(BeliefState<T>),
    Fixed(JointBelief<T>),
}

/// HBA: posterior update, expected-payoff planning, uniform argmax.
#[derive(Clone, Debug)]
pub struct HbaController<T> {
    config: PlanConfig<T>,
    beliefs: BeliefSource<T>,
    tracker: TypeTracker,
}

impl<T: Prob> HbaController<T> {
    /// The user process: learns a posterior over the user-defined type spaces.
    pub fn new(spec: &GameSpec<T>, kind: PosteriorKind, config: PlanConfig<T>) -> Self {
        let user: Vec<TypeId> = spec
            .others()
            .iter()
            .flat_map(|j| spec.user_types[*j].clone())
            .collect();
        Self {
            config,
            beliefs: BeliefSource::Learned(BeliefState::new(spec, kind)),
            tracker: TypeTracker::for_types(spec, user),
        }
    }

    /// Plans with a belief that never changes.
    pub fn with_belief(spec: &GameSpec<T>, belief: JointBelief<T>, config: PlanConfig<T>) -> Self {
        let ids: Vec<TypeId> = belief
            .profiles
            .iter()
            .flat_map(|(p, _)| p.clone())
            .collect();
        Self {
            config,
            tracker: TypeTracker::for_types(spec, ids),
            beliefs: BeliefSource::Fixed(belief),
        }
    }

    /// The ideal process: a point-mass belief on the true profile of a pure Δ.
    pub fn oracle(spec: &GameSpec<T>, config: PlanConfig<T>) -> Result<Self, GameError> {
        let profile = spec
            .pure_profile()
            .ok_or_else(|| {
                GameError::Invalid("oracle controller needs a pure type distribution".into())
            })?
            .to_vec();
        Ok(Self::with_belief(
            spec,
            JointBelief::point_mass(profile),
            config,
        ))
    }

    pub fn config(&self) -> &PlanConfig<T> {
        &self.config
    }

    pub fn tracker(&self) -> &TypeTracker {
        &self.tracker
    }

    pub fn belief_state(&self) -> Option<&BeliefState<T>> {
        match &self.beliefs {
            BeliefSource::Learned(b) => Some(b),
            BeliefSource::Fixed(_) => None,
        }
    }

    pub fn snapshot(&self) -> JointBelief<T> {
        match &self.beliefs {
            BeliefSource::Learned(b) => b.snapshot(),
            BeliefSource::Fixed(b) => b.clone(),
        }
    }

    pub fn plan(&self, spec: &GameSpec<T>, state: StateId) -> PlanResult<T> {
        plan(spec, &self.snapshot(), &self.tracker, state, &self.config)
    }
}

impl<T: Prob> Controller<T> for HbaController<T> {
    fn decide(&mut self, spec: &GameSpec<T>, state: StateId, rng: &mut dyn RngCore) -> Decision<T> {
        let result = self.plan(spec, state);
        let action = select_action(&result, rng);
        Decision {
            action,
            distribution: result.distribution,
            values: Some(result.values),
        }
    }

    fn observe(&mut self, spec: &GameSpec<T>, state: StateId, joint: &JointAction, _next: StateId) {
        if let BeliefSource::Learned(b) = &mut self.beliefs {
            b.observe_with(spec, &self.tracker, state, joint);
        }
        self.tracker.advance(spec, state, joint);
    }

    fn degenerate(&self) -> bool {
        matches!(&self.beliefs, BeliefSource::Learned(b) if b.is_degenerate())
    }
}

/// HBA over the user-defined type spaces with the given posterior.
pub fn hba_policy<T: Prob>(
    spec: &GameSpec<T>,
    kind: PosteriorKind,
    config: PlanConfig<T>,
) -> HbaController<T> {
    HbaController::new(spec, kind, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{matching_game, MatchingVariant};
    use crate::game::GameBuilder;
    use crate::sim::run_episode_seeded;
    use crate::strategy::{TypeKind, TypeStrategy};
    use crate::Rational;
    use proptest::prelude::*;

    /// s0 moves to `done` with probability `p`, else stays.
    fn coin<T: Prob>(p: T) -> GameSpec<T> {
        let stay = T::one() - p.clone();
        let mut b = GameBuilder::new(["s0", "done"], vec![("i", vec!["go"]), ("j", vec!["y"])], 0)
            .terminal(1)
            .transition(0, &[0, 0], vec![(1, p), (0, stay)]);
        let t = b.add_type(TypeStrategy::new("y", 1, TypeKind::Fixed(vec![T::one()])));
        b.latent(1, vec![t])
            .delta(vec![(vec![t], T::one())])
            .user_types_uniform(1, vec![t])
            .build()
            .unwrap()
    }

    fn values<T: Prob>(spec: &GameSpec<T>, state: StateId, gamma: T, horizon: usize) -> Vec<T> {
        let belief = BeliefState::new(spec, PosteriorKind::Product).snapshot();
        let tracker = TypeTracker::all(spec);
        plan(
            spec,
            &belief,
            &tracker,
            state,
            &PlanConfig::new(gamma, horizon).unwrap(),
        )
        .values
    }

    #[test]
    fn config_validation() {
        assert!(PlanConfig::new(1.0, 0).is_err());
        assert!(PlanConfig::new(1.5, 2).is_err());
        assert!(PlanConfig::new(-0.1, 2).is_err());
        assert!(PlanConfig::new(0.0, 1).is_ok());
    }

    #[test]
    fn terminal_state_has_zero_value() {
        let spec = coin(0.5);
        assert_eq!(values(&spec, 1, 1.0, 3), vec![0.0]);
    }

    #[test]
    fn certain_termination_is_worth_one() {
        let spec = coin(1.0);
        assert_eq!(values(&spec, 0, 1.0, 1), vec![1.0]);
        assert_eq!(values(&spec, 0, 0.3, 4), vec![1.0]);
    }

    #[test]
    fn self_loop_is_worth_zero() {
        let spec = coin(0.0);
        for h in 1..5 {
            assert_eq!(values(&spec, 0, 1.0, h), vec![0.0]);
        }
    }

    #[test]
    fn coin_chain_horizon_three() {
        let spec = coin(Rational::from_ratio(1, 2));
        let v = values(&spec, 0, Rational::from_ratio(1, 1), 3);
        assert_eq!(v, vec![Rational::from_ratio(7, 8)]);
    }

    #[test]
    fn action_value_with_all_successors_terminal() {
        let spec = coin(1.0);
        let belief = BeliefState::new(&spec, PosteriorKind::Sum).snapshot();
        let config = PlanConfig::new(0.7, 2).unwrap();
        let planner = Planner::new(&spec, &config, &belief);
        let q = planner.action_value(&TypeTracker::all(&spec), 0, &JointAction(vec![0, 0]), 0);
        assert_eq!(q, 1.0);
    }

    #[test]
    fn matching_game_symmetric_beliefs() {
        let (spec, _) = matching_game::<Rational>(MatchingVariant::Uncritical);
        let v = values(&spec, 0, Rational::from_ratio(1, 1), 1);
        assert_eq!(v, vec![Rational::from_ratio(1, 2); 2]);
        let hba = HbaController::new(
            &spec,
            PosteriorKind::Product,
            PlanConfig::new(Rational::from_ratio(9, 10), 3).unwrap(),
        );
        let result = hba.plan(&spec, 0);
        assert_eq!(result.maximisers, vec![0, 1]);
        assert_eq!(result.distribution, vec![Rational::from_ratio(1, 2); 2]);
    }

    #[test]
    fn argmax_rules() {
        let unique = PlanResult::from_values(vec![0.2, 0.9, 0.1]);
        assert_eq!(unique.distribution, vec![0.0, 1.0, 0.0]);
        let tie = PlanResult::from_values(vec![0.5, 0.1, 0.5 - 1e-13]);
        assert_eq!(tie.maximisers, vec![0, 2]);
        assert_eq!(tie.distribution, vec![0.5, 0.0, 0.5]);
        let apart = PlanResult::from_values(vec![0.5, 0.5 - 1e-9]);
        assert_eq!(apart.maximisers, vec![0]);
    }

    fn config() -> PlanConfig<f64> {
        PlanConfig::new(0.9, 3).unwrap()
    }

    #[test]
    fn uncritical_types_finish_within_two_steps() {
        let (spec, _) = matching_game::<f64>(MatchingVariant::Uncritical);
        for seed in 0..20 {
            let mut hba = hba_policy(&spec, PosteriorKind::Product, config());
            let ep = run_episode_seeded(&spec, &mut hba, 100, seed);
            assert!(
                ep.terminated && ep.history.len() <= 2,
                "seed {seed}: {}",
                ep.history
            );
        }
    }

    #[test]
    fn critical_types_never_finish() {
        let (spec, _) = matching_game::<f64>(MatchingVariant::Critical);
        for seed in 0..5 {
            let mut hba = hba_policy(&spec, PosteriorKind::Product, config());
            let ep = run_episode_seeded(&spec, &mut hba, 100, seed);
            assert!(!ep.terminated);
            assert_eq!(ep.history.len(), 100);
        }
    }

    #[test]
    fn accurate_single_type_matches_oracle_trace() {
        let (mut spec, ids) = matching_game::<f64>(MatchingVariant::Critical);
        spec.user_types[1] = vec![ids.theta_lr];
        let mut hba = hba_policy(&spec, PosteriorKind::Sum, config());
        let mut oracle = HbaController::oracle(&spec, config()).unwrap();
        let a = run_episode_seeded(&spec, &mut hba, 50, 3);
        let b = run_episode_seeded(&spec, &mut oracle, 50, 3);
        assert_eq!(a.history, b.history);
    }

    /// A random stay-or-advance game over three states with a terminal sink.
    fn random_game(rows: &[f64], type_weights: &[f64]) -> GameSpec<f64> {
        let mut k = 0;
        let mut b = GameBuilder::new(
            ["a", "b", "c", "end"],
            vec![("i", vec!["x", "y"]), ("j", vec!["u", "v"])],
            0,
        )
        .terminal(3)
        .transitions_with(|s, _| {
            let p = rows[k % rows.len()];
            k += 1;
            vec![((s + 1) % 4, p), (s, 1.0 - p)]
        });
        let a = b.add_type(TypeStrategy::new("ta", 1, TypeKind::Fixed(vec![0.3, 0.7])));
        let c = b.add_type(TypeStrategy::new(
            "tb",
            1,
            TypeKind::Periodic(vec![0, 1, 1]),
        ));
        let w = type_weights[0] / (type_weights[0] + type_weights[1]);
        b.latent(1, vec![a, c])
            .delta(vec![(vec![a], w), (vec![c], 1.0 - w)])
            .user_types(1, vec![a, c], vec![w, 1.0 - w])
            .build()
            .unwrap()
    }

    proptest! {
        #[test]
        fn values_bounded_and_monotone_in_horizon(
            rows in proptest::collection::vec(0.0f64..=1.0, 1..10),
            w in proptest::collection::vec(0.05f64..1.0, 2),
            state in 0usize..3,
        ) {
            let spec = random_game(&rows, &w);
            let mut previous = vec![0.0; 2];
            for h in 1..5 {
                let v = values(&spec, state, 1.0, h);
                for (a, x) in v.iter().enumerate() {
                    prop_assert!((-1e-12..=1.0 + 1e-12).contains(x));
                    prop_assert!(*x + 1e-12 >= previous[a]);
                }
                previous = v;
                let discounted = values(&spec, state, 0.8, h);
                prop_assert!(discounted.iter().all(|x| (-1e-12..=1.0 + 1e-12).contains(x)));
            }
        }

        #[test]
        fn argmax_ignores_belief_scale(
            rows in proptest::collection::vec(0.0f64..=1.0, 1..10),
            w in proptest::collection::vec(0.05f64..1.0, 2),
            scale in 0.1f64..10.0,
        ) {
            let spec = random_game(&rows, &w);
            let tracker = TypeTracker::all(&spec);
            let config = PlanConfig::new(0.9, 3).unwrap();
            let belief = |weights: Vec<f64>| {
                let p = crate::scalar::normalise(&weights).unwrap();
                JointBelief { profiles: vec![(vec![0], p[0]), (vec![1], p[1])], degenerate: false }
            };
            let a = plan(&spec, &belief(w.clone()), &tracker, 0, &config);
            let b = plan(&spec, &belief(w.iter().map(|x| x * scale).collect()), &tracker, 0, &config);
            prop_assert_eq!(a.maximisers, b.maximisers);
        }
    }
}
