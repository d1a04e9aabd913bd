//! Posterior beliefs over user-defined types.
//!
//! Three likelihoods are supported: the product of per-step action
//! probabilities, their sum, and the correlated form that sums per-step
//! products over whole type profiles. The first two are combined across
//! players as a product of per-player posteriors; the correlated posterior
//! is a single table over profiles.

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::GameError;
use crate::game::{GameSpec, History, JointAction, StateId, TypeId};
use crate::scalar::{normalise, total, Prob};
use crate::strategy::TypeTracker;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosteriorKind {
    Product,
    Sum,
    Correlated,
}

impl fmt::Display for PosteriorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PosteriorKind::Product => "product",
            PosteriorKind::Sum => "sum",
            PosteriorKind::Correlated => "correlated",
        })
    }
}

impl FromStr for PosteriorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "product" => Ok(PosteriorKind::Product),
            "sum" => Ok(PosteriorKind::Sum),
            "correlated" => Ok(PosteriorKind::Correlated),
            other => Err(format!("unknown posterior kind '{other}'")),
        }
    }
}

/// A normalised distribution, or the prior fallback when the Bayes quotient is 0/0.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior<T> {
    pub probs: Vec<T>,
    pub degenerate: bool,
}

/// Weighted type profiles of the other players (global type ids, `others()` order).
#[derive(Clone, Debug, PartialEq)]
pub struct JointBelief<T> {
    pub profiles: Vec<(Vec<TypeId>, T)>,
    pub degenerate: bool,
}

impl<T: Prob> JointBelief<T> {
    pub fn point_mass(profile: Vec<TypeId>) -> Self {
        Self {
            profiles: vec![(profile, T::one())],
            degenerate: false,
        }
    }

    /// Profiles with positive weight.
    pub fn support(&self) -> impl Iterator<Item = &(Vec<TypeId>, T)> {
        self.profiles.iter().filter(|(_, w)| !w.is_zero())
    }
}

/// A product likelihood held in log space; exact zeros are flagged separately.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLikelihood {
    pub log: f64,
    pub zero: bool,
}

impl LogLikelihood {
    pub const ONE: LogLikelihood = LogLikelihood {
        log: 0.0,
        zero: false,
    };

    pub fn mul<T: Prob>(&mut self, p: &T) {
        if p.is_zero() {
            self.zero = true;
        } else if !self.zero {
            self.log += p.to_f64_lossy().ln();
        }
    }

    pub fn value(&self) -> f64 {
        if self.zero {
            0.0
        } else {
            self.log.exp()
        }
    }
}

/// π_j(H^τ, a_j^τ, θ) for every τ < t, by replaying the type on the history.
pub fn observed_probabilities<T: Prob>(
    spec: &GameSpec<T>,
    history: &History,
    type_id: TypeId,
) -> Vec<T> {
    let ty = &spec.types[type_id];
    let n_actions = spec.n_actions(ty.player);
    let mut memory = ty.initial_memory();
    let mut out = Vec::with_capacity(history.len());
    for (tau, joint) in history.actions.iter().enumerate() {
        let state = history.states[tau];
        let dist = ty.distribution(&memory, state, n_actions);
        out.push(dist[joint.0[ty.player]].clone());
        ty.advance(&mut memory, state, joint);
    }
    out
}

/// ∏_τ π_j(H^τ, a_j^τ, θ) in log space.
pub fn product_log_likelihood<T: Prob>(
    spec: &GameSpec<T>,
    history: &History,
    type_id: TypeId,
) -> LogLikelihood {
    let mut acc = LogLikelihood::ONE;
    for p in observed_probabilities(spec, history, type_id) {
        acc.mul(&p);
    }
    acc
}

pub fn product_likelihood<T: Prob>(spec: &GameSpec<T>, history: &History, type_id: TypeId) -> f64 {
    product_log_likelihood(spec, history, type_id).value()
}

/// Σ_τ π_j(H^τ, a_j^τ, θ).
pub fn sum_likelihood<T: Prob>(spec: &GameSpec<T>, history: &History, type_id: TypeId) -> T {
    total(&observed_probabilities(spec, history, type_id))
}

/// Bayes quotient L·P / Σ L·P; falls back to the prior when the denominator vanishes.
pub fn posterior_per_player<T: Prob>(likelihoods: &[T], prior: &[T]) -> Posterior<T> {
    let weighted: Vec<T> = likelihoods
        .iter()
        .zip(prior)
        .map(|(l, p)| l.clone() * p.clone())
        .collect();
    match normalise(&weighted) {
        Some(probs) => Posterior {
            probs,
            degenerate: false,
        },
        None => Posterior {
            probs: prior.to_vec(),
            degenerate: true,
        },
    }
}

/// Posterior from log-space product likelihoods.
pub fn product_posterior<T: Prob>(logs: &[LogLikelihood], prior: &[T]) -> Posterior<T> {
    let max = logs
        .iter()
        .zip(prior)
        .filter(|(l, p)| !l.zero && !p.is_zero())
        .map(|(l, _)| l.log)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Posterior {
            probs: prior.to_vec(),
            degenerate: true,
        };
    }
    let scaled: Vec<T> = logs
        .iter()
        .map(|l| {
            if l.zero {
                T::zero()
            } else {
                T::from_f64_lossy((l.log - max).exp())
            }
        })
        .collect();
    posterior_per_player(&scaled, prior)
}

/// Row-major product table of per-player posteriors.
pub fn combined_posterior<T: Prob>(per_player: &[Vec<T>]) -> Vec<T> {
    let mut table = vec![T::one()];
    for dist in per_player {
        table = table
            .iter()
            .flat_map(|w| dist.iter().map(move |p| w.clone() * p.clone()))
            .collect();
    }
    normalise(&table).unwrap_or(table)
}

/// Row-major enumeration of the product of the given index ranges.
pub fn profile_indices(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &n in sizes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..n).map(move |m| {
                    let mut p = prefix.clone();
                    p.push(m);
                    p
                })
            })
            .collect();
    }
    out
}

fn user_spaces<T: Prob>(spec: &GameSpec<T>) -> Vec<Vec<TypeId>> {
    spec.others()
        .iter()
        .map(|j| spec.user_types[*j].clone())
        .collect()
}

/// Joint prior over user profiles: the declared one, else the product of the Pⱼ.
pub fn joint_prior_or_product<T: Prob>(spec: &GameSpec<T>) -> Vec<T> {
    match &spec.joint_prior {
        Some(p) => p.clone(),
        None => {
            let per: Vec<Vec<T>> = spec
                .others()
                .iter()
                .map(|j| spec.priors[*j].clone())
                .collect();
            combined_posterior(&per)
        }
    }
}

/// η·P(θ₋ᵢ)·Σ_τ ∏_j π_j(H^τ, a_j^τ, θ_j), over row-major user profiles.
pub fn correlated_posterior<T: Prob>(
    spec: &GameSpec<T>,
    history: &History,
    joint_prior: &[T],
) -> Posterior<T> {
    let spaces = user_spaces(spec);
    let per_type: Vec<Vec<Vec<T>>> = spaces
        .iter()
        .map(|space| {
            space
                .iter()
                .map(|id| observed_probabilities(spec, history, *id))
                .collect()
        })
        .collect();
    let sizes: Vec<usize> = spaces.iter().map(Vec::len).collect();
    let sums: Vec<T> = profile_indices(&sizes)
        .iter()
        .map(|profile| {
            (0..history.len()).fold(T::zero(), |acc, tau| {
                let step = profile
                    .iter()
                    .enumerate()
                    .fold(T::one(), |w, (k, m)| w * per_type[k][*m][tau].clone());
                acc + step
            })
        })
        .collect();
    if history.is_empty() {
        return Posterior {
            probs: joint_prior.to_vec(),
            degenerate: false,
        };
    }
    posterior_per_player(&sums, joint_prior)
}

/// Per-step contribution to the average overlap: `[|Λ| ≥ 2]·Σ_θ π(a)/|Θ|`.
pub fn step_overlap<T: Prob>(observed: &[T]) -> T {
    let support = observed.iter().filter(|p| !p.is_zero()).count();
    if support < 2 {
        return T::zero();
    }
    total(observed) / T::from_usize(observed.len()).expect("type count")
}

/// Per-step contribution to the average stochasticity.
pub fn step_stochasticity<T: Prob>(dists: &[Vec<T>], n_actions: usize) -> Result<T, GameError> {
    if n_actions < 2 {
        return Err(GameError::Invalid(
            "average stochasticity needs at least two actions".into(),
        ));
    }
    let denom = T::one() - T::from_ratio(1, n_actions as i64);
    let acc = dists.iter().fold(T::zero(), |acc, dist| {
        let mut best = &dist[0];
        for p in &dist[1..] {
            if p > best {
                best = p;
            }
        }
        acc + (T::one() - best.clone()) / denom.clone()
    });
    Ok(acc / T::from_usize(dists.len()).expect("type count"))
}

/// AOⱼ(Hᵗ) over the given types of `player`.
pub fn average_overlap<T: Prob>(spec: &GameSpec<T>, history: &History, types: &[TypeId]) -> T {
    if history.is_empty() {
        return T::zero();
    }
    let per_type: Vec<Vec<T>> = types
        .iter()
        .map(|id| observed_probabilities(spec, history, *id))
        .collect();
    let acc = (0..history.len()).fold(T::zero(), |acc, tau| {
        let step: Vec<T> = per_type.iter().map(|v| v[tau].clone()).collect();
        acc + step_overlap(&step)
    });
    acc / T::from_usize(history.len()).expect("history length")
}

/// ASⱼ(Hᵗ) over the given types (all of one player).
pub fn average_stochasticity<T: Prob>(
    spec: &GameSpec<T>,
    history: &History,
    types: &[TypeId],
) -> Result<T, GameError> {
    let player = spec.types[types[0]].player;
    let n_actions = spec.n_actions(player);
    if n_actions < 2 {
        return Err(GameError::Invalid(
            "average stochasticity needs at least two actions".into(),
        ));
    }
    if history.is_empty() {
        return Ok(T::zero());
    }
    let mut acc = T::zero();
    for tau in 0..history.len() {
        let prefix = history.prefix(tau);
        let dists: Vec<Vec<T>> = types
            .iter()
            .map(|id| spec.types[*id].distribution_for_history(spec, &prefix))
            .collect();
        acc = acc + step_stochasticity(&dists, n_actions)?;
    }
    Ok(acc / T::from_usize(history.len()).expect("history length"))
}

/// F(aⱼ | Hᵗ) = Σ_θ Δ(θⱼ)·πⱼ(Hᵗ, aⱼ, θⱼ) over the latent types of `player`.
pub fn marginal_action_prob<T: Prob>(
    spec: &GameSpec<T>,
    history: &History,
    player: usize,
) -> Vec<T> {
    let weights = spec.delta_marginal(player);
    let mut out = vec![T::zero(); spec.n_actions(player)];
    for (id, w) in spec.latent[player].iter().zip(weights) {
        let dist = spec.types[*id].distribution_for_history(spec, history);
        for (o, p) in out.iter_mut().zip(dist) {
            *o = o.clone() + w.clone() * p;
        }
    }
    out
}

/// L1 distance Σ_θ |Pr(θ) − Δ(θ)|.
pub fn posterior_error<T: Prob>(posterior: &[T], delta: &[T]) -> T {
    posterior
        .iter()
        .zip(delta)
        .fold(T::zero(), |acc, (p, d)| acc + (p.clone() - d.clone()).abs())
}

/// Probability the belief assigns to the other players' actions and the
/// state transitions along `suffix`, starting from the tracked memories.
///
/// The controlled player's own action factors are common to every model and
/// are left out. Each profile is followed through the whole suffix, so the
/// result is the belief-weighted mixture of path probabilities.
pub fn k_step_prediction_prob<T: Prob>(
    spec: &GameSpec<T>,
    belief: &JointBelief<T>,
    tracker: &TypeTracker,
    state: StateId,
    suffix: &[(JointAction, StateId)],
) -> T {
    let others = spec.others();
    let mut total_prob = T::zero();
    for (profile, weight) in belief.support() {
        let mut tracker = tracker.clone();
        let mut s = state;
        let mut path = weight.clone();
        for (joint, next) in suffix {
            for (k, j) in others.iter().enumerate() {
                let dist = tracker.distribution(spec, profile[k], s);
                path = path * dist[joint.0[*j]].clone();
            }
            let t = spec
                .transition(s, joint)
                .iter()
                .find(|(n, _)| n == next)
                .map(|(_, p)| p.clone())
                .unwrap_or_else(T::zero);
            path = path * t;
            if path.is_zero() {
                break;
            }
            tracker.advance(spec, s, joint);
            s = *next;
        }
        total_prob = total_prob + path;
    }
    total_prob
}

/// Running posterior over the others' user type spaces.
#[derive(Clone, Debug)]
pub struct BeliefState<T> {
    kind: PosteriorKind,
    spaces: Vec<Vec<TypeId>>,
    priors: Vec<Vec<T>>,
    joint_prior: Vec<T>,
    logs: Vec<Vec<LogLikelihood>>,
    sums: Vec<Vec<T>>,
    joint_sums: Vec<T>,
    profiles: Vec<Vec<usize>>,
    t: usize,
    degenerate: bool,
    degenerate_events: usize,
}

impl<T: Prob> BeliefState<T> {
    pub fn new(spec: &GameSpec<T>, kind: PosteriorKind) -> Self {
        let spaces = user_spaces(spec);
        let priors: Vec<Vec<T>> = spec
            .others()
            .iter()
            .map(|j| spec.priors[*j].clone())
            .collect();
        let sizes: Vec<usize> = spaces.iter().map(Vec::len).collect();
        let profiles = profile_indices(&sizes);
        Self {
            kind,
            logs: sizes.iter().map(|n| vec![LogLikelihood::ONE; *n]).collect(),
            sums: sizes.iter().map(|n| vec![T::zero(); *n]).collect(),
            joint_sums: vec![T::zero(); profiles.len()],
            joint_prior: joint_prior_or_product(spec),
            spaces,
            priors,
            profiles,
            t: 0,
            degenerate: false,
            degenerate_events: 0,
        }
    }

    pub fn kind(&self) -> PosteriorKind {
        self.kind
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// User type spaces, one per other player.
    pub fn spaces(&self) -> &[Vec<TypeId>] {
        &self.spaces
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Number of times the posterior went from defined to degenerate.
    pub fn degenerate_events(&self) -> usize {
        self.degenerate_events
    }

    /// Folds in one step; `observed[k][m]` is π of the k-th other player's
    /// observed action under its m-th user type.
    pub fn observe(&mut self, observed: &[Vec<T>]) {
        match self.kind {
            PosteriorKind::Product => {
                for (logs, probs) in self.logs.iter_mut().zip(observed) {
                    for (l, p) in logs.iter_mut().zip(probs) {
                        l.mul(p);
                    }
                }
            }
            PosteriorKind::Sum => {
                for (sums, probs) in self.sums.iter_mut().zip(observed) {
                    for (s, p) in sums.iter_mut().zip(probs) {
                        *s = s.clone() + p.clone();
                    }
                }
            }
            PosteriorKind::Correlated => {
                for (sum, profile) in self.joint_sums.iter_mut().zip(&self.profiles) {
                    let step = profile
                        .iter()
                        .enumerate()
                        .fold(T::one(), |w, (k, m)| w * observed[k][*m].clone());
                    *sum = sum.clone() + step;
                }
            }
        }
        self.t += 1;
        let now = self.compute_degenerate();
        if now && !self.degenerate {
            self.degenerate_events += 1;
            warn!(
                "posterior-degenerate: {} posterior undefined at t={}, falling back to prior",
                self.kind, self.t
            );
        }
        self.degenerate = now;
    }

    /// Observes the step `(state, joint)` using memories in `tracker`, which
    /// must track every user type and sit at the pre-step history.
    pub fn observe_with(
        &mut self,
        spec: &GameSpec<T>,
        tracker: &TypeTracker,
        state: StateId,
        joint: &JointAction,
    ) -> Vec<Vec<T>> {
        let observed: Vec<Vec<T>> = self
            .spaces
            .iter()
            .map(|space| {
                space
                    .iter()
                    .map(|id| {
                        let player = spec.types[*id].player;
                        tracker.distribution(spec, *id, state)[joint.0[player]].clone()
                    })
                    .collect()
            })
            .collect();
        self.observe(&observed);
        observed
    }

    fn compute_degenerate(&self) -> bool {
        match self.kind {
            PosteriorKind::Correlated => self.joint_posterior_raw().degenerate,
            _ => (0..self.spaces.len()).any(|k| self.player_posterior(k).degenerate),
        }
    }

    /// Prᵢ over the k-th other player's user types.
    pub fn player_posterior(&self, k: usize) -> Posterior<T> {
        if self.t == 0 {
            return Posterior {
                probs: self.priors[k].clone(),
                degenerate: false,
            };
        }
        match self.kind {
            PosteriorKind::Product => product_posterior(&self.logs[k], &self.priors[k]),
            PosteriorKind::Sum => posterior_per_player(&self.sums[k], &self.priors[k]),
            PosteriorKind::Correlated => {
                let joint = self.joint_posterior_raw();
                let mut probs = vec![T::zero(); self.spaces[k].len()];
                for (profile, p) in self.profiles.iter().zip(&joint.probs) {
                    probs[profile[k]] = probs[profile[k]].clone() + p.clone();
                }
                Posterior {
                    probs,
                    degenerate: joint.degenerate,
                }
            }
        }
    }

    fn joint_posterior_raw(&self) -> Posterior<T> {
        if self.t == 0 {
            return Posterior {
                probs: self.joint_prior.clone(),
                degenerate: false,
            };
        }
        posterior_per_player(&self.joint_sums, &self.joint_prior)
    }

    /// Posterior over row-major user profiles.
    pub fn joint_posterior(&self) -> Posterior<T> {
        match self.kind {
            PosteriorKind::Correlated => self.joint_posterior_raw(),
            _ => {
                let per: Vec<Posterior<T>> = (0..self.spaces.len())
                    .map(|k| self.player_posterior(k))
                    .collect();
                let degenerate = per.iter().any(|p| p.degenerate);
                let probs: Vec<Vec<T>> = per.into_iter().map(|p| p.probs).collect();
                Posterior {
                    probs: combined_posterior(&probs),
                    degenerate,
                }
            }
        }
    }

    /// The combined posterior as weighted profiles of global type ids.
    pub fn snapshot(&self) -> JointBelief<T> {
        let joint = self.joint_posterior();
        JointBelief {
            profiles: self
                .profiles
                .iter()
                .zip(joint.probs)
                .map(|(profile, p)| {
                    let ids = profile
                        .iter()
                        .enumerate()
                        .map(|(k, m)| self.spaces[k][*m])
                        .collect();
                    (ids, p)
                })
                .collect(),
            degenerate: joint.degenerate,
        }
    }
}

/// Running AO/AS for one player over a fixed type set.
#[derive(Clone, Debug)]
pub struct OverlapStats<T> {
    pub types: Vec<TypeId>,
    n_actions: usize,
    overlap_sum: T,
    stochasticity_sum: T,
    t: usize,
}

impl<T: Prob> OverlapStats<T> {
    pub fn new(types: Vec<TypeId>, n_actions: usize) -> Self {
        Self {
            types,
            n_actions,
            overlap_sum: T::zero(),
            stochasticity_sum: T::zero(),
            t: 0,
        }
    }

    /// `dists[m]` is the full distribution of the m-th type before the step.
    pub fn observe(&mut self, dists: &[Vec<T>], observed_action: usize) -> Result<(), GameError> {
        let observed: Vec<T> = dists.iter().map(|d| d[observed_action].clone()).collect();
        self.overlap_sum = self.overlap_sum.clone() + step_overlap(&observed);
        self.stochasticity_sum =
            self.stochasticity_sum.clone() + step_stochasticity(dists, self.n_actions)?;
        self.t += 1;
        Ok(())
    }

    pub fn average_overlap(&self) -> T {
        self.mean(&self.overlap_sum)
    }

    pub fn average_stochasticity(&self) -> T {
        self.mean(&self.stochasticity_sum)
    }

    fn mean(&self, sum: &T) -> T {
        if self.t == 0 {
            T::zero()
        } else {
            sum.clone() / T::from_usize(self.t).expect("step count")
        }
    }
}
