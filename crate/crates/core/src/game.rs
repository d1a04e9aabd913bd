//! The stochastic Bayesian game model and its one-step semantics.

use std::fmt;

use rand::{Rng, RngCore};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::GameError;
use crate::scalar::{is_distribution, total, Prob};
use crate::strategy::{TypeKind, TypeStrategy};

pub type StateId = usize;
pub type ActionId = usize;
pub type TypeId = usize;

/// One action per player, indexed by player.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct JointAction(pub Vec<ActionId>);

/// A player with named actions.
#[derive(Clone, Debug, PartialEq)]
pub struct Player {
    pub name: String,
    pub actions: Vec<String>,
}

/// ⟨s⁰, a⁰, s¹, …, sᵗ⟩, stored as `t + 1` states and `t` joint actions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct History {
    pub states: Vec<StateId>,
    pub actions: Vec<JointAction>,
}

impl History {
    pub fn new(initial: StateId) -> Self {
        Self {
            states: vec![initial],
            actions: Vec::new(),
        }
    }

    /// Number of joint actions taken so far.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn current(&self) -> StateId {
        *self.states.last().expect("history holds at least s0")
    }

    pub fn push(&mut self, joint: JointAction, next: StateId) {
        self.actions.push(joint);
        self.states.push(next);
    }

    /// Prefix Hᵗ of length `t`.
    pub fn prefix(&self, t: usize) -> History {
        History {
            states: self.states[..=t].to_vec(),
            actions: self.actions[..t].to_vec(),
        }
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<s{}", self.states[0])?;
        for (a, s) in self.actions.iter().zip(&self.states[1..]) {
            write!(f, ", {:?}, s{}", a.0, s)?;
        }
        write!(f, ">")
    }
}

/// A stochastic Bayesian game seen from the controlled player.
///
/// `delta` and the joint prior range over type profiles of the *other*
/// players, listed in [`GameSpec::others`] order.
#[derive(Clone, Debug)]
pub struct GameSpec<T> {
    pub state_names: Vec<String>,
    pub initial: StateId,
    pub terminal: Vec<bool>,
    pub players: Vec<Player>,
    pub controlled: usize,
    /// Sparse rows indexed by `state * n_joint + joint_index`.
    pub(crate) transitions: Vec<Vec<(StateId, T)>>,
    pub types: Vec<TypeStrategy<T>>,
    /// Latent type space Θⱼ per player (empty for the controlled player).
    pub latent: Vec<Vec<TypeId>>,
    /// Type distribution Δ over profiles of the other players.
    pub delta: Vec<(Vec<TypeId>, T)>,
    /// User-defined type space Θ*ⱼ per player.
    pub user_types: Vec<Vec<TypeId>>,
    /// Prior Pⱼ aligned with `user_types[j]`.
    pub priors: Vec<Vec<T>>,
    /// Joint prior over the product of the others' user type spaces, row-major.
    pub joint_prior: Option<Vec<T>>,
    pub positive_priors: bool,
}

impl<T: Prob> GameSpec<T> {
    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    pub fn n_actions(&self, player: usize) -> usize {
        self.players[player].actions.len()
    }

    pub fn n_joint(&self) -> usize {
        self.players.iter().map(|p| p.actions.len()).product()
    }

    /// Uncontrolled players in increasing order.
    pub fn others(&self) -> Vec<usize> {
        (0..self.n_players())
            .filter(|&p| p != self.controlled)
            .collect()
    }

    pub fn is_terminal(&self, state: StateId) -> bool {
        self.terminal[state]
    }

    /// Mixed-radix index of a joint action (player 0 most significant).
    pub fn joint_index(&self, joint: &JointAction) -> usize {
        joint
            .0
            .iter()
            .zip(&self.players)
            .fold(0, |acc, (a, p)| acc * p.actions.len() + a)
    }

    pub fn joint_from_index(&self, mut index: usize) -> JointAction {
        let mut actions = vec![0; self.n_players()];
        for (p, player) in self.players.iter().enumerate().rev() {
            let n = player.actions.len();
            actions[p] = index % n;
            index /= n;
        }
        JointAction(actions)
    }

    /// Every joint action in index order.
    pub fn joint_actions(&self) -> impl Iterator<Item = JointAction> + '_ {
        (0..self.n_joint()).map(|i| self.joint_from_index(i))
    }

    /// T(s, a, ·) as sparse `(successor, probability)` pairs.
    pub fn transition(&self, state: StateId, joint: &JointAction) -> &[(StateId, T)] {
        &self.transitions[state * self.n_joint() + self.joint_index(joint)]
    }

    /// Reward-on-entry: 1 when moving from a non-terminal into a terminal state.
    pub fn reward(&self, state: StateId, next: StateId) -> T {
        if !self.terminal[state] && self.terminal[next] {
            T::one()
        } else {
            T::zero()
        }
    }

    /// Δ marginalised onto `player`'s latent types, aligned with `latent[player]`.
    pub fn delta_marginal(&self, player: usize) -> Vec<T> {
        let slot = self
            .others()
            .iter()
            .position(|&p| p == player)
            .expect("other player");
        self.latent[player]
            .iter()
            .map(|id| {
                self.delta
                    .iter()
                    .filter(|(profile, _)| profile[slot] == *id)
                    .fold(T::zero(), |acc, (_, p)| acc + p.clone())
            })
            .collect()
    }

    /// True when Δ is a point mass.
    pub fn pure_profile(&self) -> Option<&[TypeId]> {
        let positive: Vec<_> = self.delta.iter().filter(|(_, p)| !p.is_zero()).collect();
        match positive.as_slice() {
            [(profile, p)] if p.close_to(&T::one(), &T::norm_tolerance()) => Some(profile),
            _ => None,
        }
    }

    pub fn action_name(&self, player: usize, action: ActionId) -> &str {
        &self.players[player].actions[action]
    }

    pub fn format_joint(&self, joint: &JointAction) -> String {
        joint
            .0
            .iter()
            .enumerate()
            .map(|(p, a)| self.action_name(p, *a))
            .collect::<Vec<_>>()
            .join("|")
    }

    /// Stable content digest (hex SHA-256).
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        let mut feed = |s: String| {
            hasher.update(s.as_bytes());
            hasher.update([0u8]);
        };
        feed(format!(
            "{:?}{:?}{:?}",
            self.state_names, self.initial, self.terminal
        ));
        for p in &self.players {
            feed(format!("{}{:?}", p.name, p.actions));
        }
        feed(self.controlled.to_string());
        for row in &self.transitions {
            feed(format!("{row:?}"));
        }
        for ty in &self.types {
            feed(format!("{ty:?}"));
        }
        feed(format!(
            "{:?}{:?}{:?}{:?}{:?}{}",
            self.latent,
            self.delta,
            self.user_types,
            self.priors,
            self.joint_prior,
            self.positive_priors
        ));
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Checks every structural and normalisation invariant.
    pub fn validate(&self) -> Result<(), GameError> {
        let n = self.n_states();
        if n == 0 {
            return Err(GameError::Invalid("no states".into()));
        }
        if self.initial >= n {
            return Err(GameError::Invalid("initial state out of range".into()));
        }
        if self.terminal.len() != n {
            return Err(GameError::Invalid(
                "terminal flags do not cover states".into(),
            ));
        }
        if self.controlled >= self.n_players() || self.n_players() < 2 {
            return Err(GameError::Invalid(
                "need a controlled player and at least one other".into(),
            ));
        }
        if self.players.iter().any(|p| p.actions.is_empty()) {
            return Err(GameError::Invalid("player without actions".into()));
        }
        if self.transitions.len() != n * self.n_joint() {
            return Err(GameError::Invalid("transition table has wrong size".into()));
        }
        for s in 0..n {
            for joint in self.joint_actions() {
                let row = self.transition(s, &joint);
                if row.iter().any(|(next, p)| *next >= n || *p < T::zero()) {
                    return Err(GameError::Negative {
                        what: format!("T({}, {})", self.state_names[s], self.format_joint(&joint)),
                    });
                }
                let probs: Vec<T> = row.iter().map(|(_, p)| p.clone()).collect();
                if !is_distribution(&probs) {
                    return Err(GameError::NotNormalised {
                        what: format!("T({}, {})", self.state_names[s], self.format_joint(&joint)),
                        sum: total(&probs).to_string(),
                    });
                }
            }
        }
        for ty in &self.types {
            self.validate_type(ty)?;
        }
        let others = self.others();
        if self.latent.len() != self.n_players() || self.user_types.len() != self.n_players() {
            return Err(GameError::Invalid(
                "type spaces must be listed per player".into(),
            ));
        }
        for &j in &others {
            if self.latent[j].is_empty() || self.user_types[j].is_empty() {
                return Err(GameError::EmptyTypeSpace(j));
            }
            for id in self.latent[j].iter().chain(&self.user_types[j]) {
                if *id >= self.types.len() || self.types[*id].player != j {
                    return Err(GameError::Invalid(format!(
                        "type {id} is not a type of player {j}"
                    )));
                }
            }
            let prior = &self.priors[j];
            if prior.len() != self.user_types[j].len() || !is_distribution(prior) {
                return Err(GameError::NotNormalised {
                    what: format!("prior of player {j}"),
                    sum: total(prior).to_string(),
                });
            }
            if self.positive_priors && prior.iter().any(|p| p.is_zero()) {
                return Err(GameError::NonPositivePrior(j));
            }
        }
        let delta_probs: Vec<T> = self.delta.iter().map(|(_, p)| p.clone()).collect();
        if !is_distribution(&delta_probs) {
            return Err(GameError::NotNormalised {
                what: "type distribution".into(),
                sum: total(&delta_probs).to_string(),
            });
        }
        for (profile, _) in &self.delta {
            if profile.len() != others.len()
                || profile
                    .iter()
                    .zip(&others)
                    .any(|(id, j)| !self.latent[*j].contains(id))
            {
                return Err(GameError::Invalid(format!(
                    "profile {profile:?} is not in the latent type space"
                )));
            }
        }
        if let Some(joint) = &self.joint_prior {
            let size: usize = others.iter().map(|j| self.user_types[*j].len()).product();
            if joint.len() != size || !is_distribution(joint) {
                return Err(GameError::NotNormalised {
                    what: "joint prior".into(),
                    sum: total(joint).to_string(),
                });
            }
        }
        Ok(())
    }

    fn validate_type(&self, ty: &TypeStrategy<T>) -> Result<(), GameError> {
        if ty.player >= self.n_players() || ty.player == self.controlled {
            return Err(GameError::Invalid(format!(
                "type '{}' belongs to no uncontrolled player",
                ty.name
            )));
        }
        let n_actions = self.n_actions(ty.player);
        let check = |dist: &[T], what: String| -> Result<(), GameError> {
            if dist.len() != n_actions || !is_distribution(dist) {
                return Err(GameError::NotNormalised {
                    what,
                    sum: total(dist).to_string(),
                });
            }
            Ok(())
        };
        match &ty.kind {
            TypeKind::Fixed(dist) => check(dist, format!("type '{}'", ty.name)),
            TypeKind::Table(rows) => {
                if rows.len() != self.n_states() {
                    return Err(GameError::Invalid(format!(
                        "type '{}' needs one row per state",
                        ty.name
                    )));
                }
                rows.iter()
                    .enumerate()
                    .try_for_each(|(s, row)| check(row, format!("type '{}' at state {s}", ty.name)))
            }
            TypeKind::Periodic(seq) | TypeKind::Sequence(seq) => {
                if seq.is_empty() || seq.iter().any(|a| *a >= n_actions) {
                    return Err(GameError::Invalid(format!(
                        "type '{}' has an empty or out-of-range action list",
                        ty.name
                    )));
                }
                Ok(())
            }
            TypeKind::EpsilonGreedy { greedy, epsilon } => {
                if *greedy >= n_actions || *epsilon < T::zero() || *epsilon > T::one() {
                    return Err(GameError::Invalid(format!(
                        "type '{}' has invalid ε-greedy parameters",
                        ty.name
                    )));
                }
                Ok(())
            }
            TypeKind::Learner(l) => {
                if l.payoffs.len() != self.n_states()
                    || l.payoffs.iter().any(|r| r.len() != n_actions)
                {
                    return Err(GameError::Invalid(format!(
                        "learner '{}' payoff table has wrong shape",
                        ty.name
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Draws an index from a probability vector (compared in `f64`).
pub fn sample_index<T: Prob>(probs: &[T], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        let p = p.to_f64_lossy();
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// Draws a type profile with probability Δ(θ).
pub fn sample_joint_types<T: Prob>(
    delta: &[(Vec<TypeId>, T)],
    rng: &mut dyn RngCore,
) -> Vec<TypeId> {
    let probs: Vec<T> = delta.iter().map(|(_, p)| p.clone()).collect();
    delta[sample_index(&probs, rng)].0.clone()
}

/// One transition: draws sᵗ⁺¹ ~ T(sᵗ, aᵗ, ·) and returns the controlled player's reward.
pub fn step_game<T: Prob>(
    spec: &GameSpec<T>,
    state: StateId,
    joint: &JointAction,
    rng: &mut dyn RngCore,
) -> Result<(StateId, T), GameError> {
    if spec.is_terminal(state) {
        return Err(GameError::TerminalStep(state));
    }
    let row = spec.transition(state, joint);
    let probs: Vec<T> = row.iter().map(|(_, p)| p.clone()).collect();
    let next = row[sample_index(&probs, rng)].0;
    Ok((next, spec.reward(state, next)))
}

/// Incremental construction of a [`GameSpec`].
#[derive(Clone, Debug)]
pub struct GameBuilder<T> {
    spec: GameSpec<T>,
    rows: Vec<Option<Vec<(StateId, T)>>>,
}

impl<T: Prob> GameBuilder<T> {
    /// `players` lists each player's action names; player `controlled` is HBA.
    pub fn new<S: Into<String>>(
        states: impl IntoIterator<Item = S>,
        players: Vec<(&str, Vec<&str>)>,
        controlled: usize,
    ) -> Self {
        let state_names: Vec<String> = states.into_iter().map(Into::into).collect();
        let n = state_names.len();
        let players: Vec<Player> = players
            .into_iter()
            .map(|(name, actions)| Player {
                name: name.to_string(),
                actions: actions.into_iter().map(String::from).collect(),
            })
            .collect();
        let n_players = players.len();
        let n_joint: usize = players.iter().map(|p| p.actions.len()).product();
        Self {
            spec: GameSpec {
                state_names,
                initial: 0,
                terminal: vec![false; n],
                players,
                controlled,
                transitions: Vec::new(),
                types: Vec::new(),
                latent: vec![Vec::new(); n_players],
                delta: Vec::new(),
                user_types: vec![Vec::new(); n_players],
                priors: vec![Vec::new(); n_players],
                joint_prior: None,
                positive_priors: false,
            },
            rows: vec![None; n * n_joint],
        }
    }

    pub fn initial(mut self, state: StateId) -> Self {
        self.spec.initial = state;
        self
    }

    pub fn terminal(mut self, state: StateId) -> Self {
        self.spec.terminal[state] = true;
        self
    }

    /// Sets T(s, a, ·) for one joint action.
    pub fn transition(
        mut self,
        state: StateId,
        joint: &[ActionId],
        row: Vec<(StateId, T)>,
    ) -> Self {
        let idx = state * self.spec.n_joint() + self.spec.joint_index(&JointAction(joint.to_vec()));
        self.rows[idx] = Some(row);
        self
    }

    /// Fills every unset row of a non-terminal state from `f(state, joint)`.
    pub fn transitions_with(
        mut self,
        mut f: impl FnMut(StateId, &JointAction) -> Vec<(StateId, T)>,
    ) -> Self {
        let n_joint = self.spec.n_joint();
        for s in 0..self.spec.n_states() {
            for j in 0..n_joint {
                if self.rows[s * n_joint + j].is_none() && !self.spec.terminal[s] {
                    let joint = self.spec.joint_from_index(j);
                    self.rows[s * n_joint + j] = Some(f(s, &joint));
                }
            }
        }
        self
    }

    pub fn add_type(&mut self, ty: TypeStrategy<T>) -> TypeId {
        self.spec.types.push(ty);
        self.spec.types.len() - 1
    }

    pub fn latent(mut self, player: usize, ids: Vec<TypeId>) -> Self {
        self.spec.latent[player] = ids;
        self
    }

    pub fn delta(mut self, delta: Vec<(Vec<TypeId>, T)>) -> Self {
        self.spec.delta = delta;
        self
    }

    pub fn user_types(mut self, player: usize, ids: Vec<TypeId>, prior: Vec<T>) -> Self {
        self.spec.user_types[player] = ids;
        self.spec.priors[player] = prior;
        self
    }

    /// User types with a uniform prior.
    pub fn user_types_uniform(self, player: usize, ids: Vec<TypeId>) -> Self {
        let n = ids.len() as i64;
        let prior = vec![T::from_ratio(1, n); ids.len()];
        self.user_types(player, ids, prior)
    }

    pub fn joint_prior(mut self, prior: Vec<T>) -> Self {
        self.spec.joint_prior = Some(prior);
        self
    }

    pub fn positive_priors(mut self, yes: bool) -> Self {
        self.spec.positive_priors = yes;
        self
    }

    /// Terminal rows become self-loops; every other row must have been set.
    pub fn build(mut self) -> Result<GameSpec<T>, GameError> {
        let n_joint = self.spec.n_joint();
        let mut transitions = Vec::with_capacity(self.rows.len());
        for (idx, row) in self.rows.into_iter().enumerate() {
            let s = idx / n_joint;
            match row {
                _ if self.spec.terminal[s] => transitions.push(vec![(s, T::one())]),
                Some(row) => transitions.push(row),
                None => {
                    let joint = self.spec.joint_from_index(idx % n_joint);
                    return Err(GameError::Invalid(format!(
                        "missing transition row for state '{}' and joint action {}",
                        self.spec.state_names[s],
                        self.spec.format_joint(&joint)
                    )));
                }
            }
        }
        self.spec.transitions = transitions;
        self.spec.validate()?;
        Ok(self.spec)
    }
}
