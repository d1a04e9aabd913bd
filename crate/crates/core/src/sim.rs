//! Episode execution.

use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::game::{
    sample_index, sample_joint_types, step_game, GameSpec, History, JointAction, StateId, TypeId,
};
use crate::planner::Controller;
use crate::scalar::Prob;
use crate::strategy::TypeTracker;

/// Everything that happened in one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord<T> {
    pub t: usize,
    pub state: StateId,
    /// Sampled type per other player, `others()` order.
    pub sampled_types: Vec<TypeId>,
    /// Action distribution of each sampled type.
    pub type_distributions: Vec<Vec<T>>,
    pub controller_distribution: Vec<T>,
    pub plan_values: Option<Vec<T>>,
    pub joint: JointAction,
    pub next: StateId,
    pub reward: T,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode<T> {
    pub history: History,
    pub steps: Vec<StepRecord<T>>,
    pub terminated: bool,
}

/// Runs until a terminal state or `max_steps` joint actions.
///
/// Per step: sample a type profile from Δ, let the controller decide, draw
/// the others' actions from their sampled types, then draw the successor.
pub fn run_episode<T: Prob>(
    spec: &GameSpec<T>,
    controller: &mut dyn Controller<T>,
    max_steps: usize,
    rng: &mut dyn RngCore,
) -> Episode<T> {
    let others = spec.others();
    let latent: Vec<TypeId> = others
        .iter()
        .flat_map(|j| spec.latent[*j].clone())
        .collect();
    let mut truth = TypeTracker::for_types(spec, latent);
    let mut history = History::new(spec.initial);
    let mut steps = Vec::new();
    let mut state = spec.initial;
    while !spec.is_terminal(state) && history.len() < max_steps {
        let sampled = sample_joint_types(&spec.delta, rng);
        let decision = controller.decide(spec, state, rng);
        let mut actions = vec![0; spec.n_players()];
        actions[spec.controlled] = decision.action;
        let mut type_distributions = Vec::with_capacity(others.len());
        for (k, j) in others.iter().enumerate() {
            let dist = truth.distribution(spec, sampled[k], state);
            actions[*j] = sample_index(&dist, rng);
            type_distributions.push(dist);
        }
        let joint = JointAction(actions);
        let (next, reward) = step_game(spec, state, &joint, rng).expect("state is non-terminal");
        controller.observe(spec, state, &joint, next);
        truth.advance(spec, state, &joint);
        steps.push(StepRecord {
            t: history.len(),
            state,
            sampled_types: sampled,
            type_distributions,
            controller_distribution: decision.distribution,
            plan_values: decision.values,
            joint: joint.clone(),
            next,
            reward,
            degenerate: controller.degenerate(),
        });
        history.push(joint, next);
        state = next;
    }
    Episode {
        terminated: spec.is_terminal(state),
        history,
        steps,
    }
}

pub fn run_episode_seeded<T: Prob>(
    spec: &GameSpec<T>,
    controller: &mut dyn Controller<T>,
    max_steps: usize,
    seed: u64,
) -> Episode<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_episode(spec, controller, max_steps, &mut rng)
}

/// CSV with columns `t,state,joint_action,sampled_types,reward` and, when
/// `with_plan` is set, a trailing `plan` column of `action=E` pairs.
pub fn episode_csv<T: Prob>(spec: &GameSpec<T>, episode: &Episode<T>, with_plan: bool) -> String {
    let mut out = String::from("t,state,joint_action,sampled_types,reward");
    if with_plan {
        out.push_str(",plan");
    }
    out.push('\n');
    for step in &episode.steps {
        let types: Vec<&str> = step
            .sampled_types
            .iter()
            .map(|id| spec.types[*id].name.as_str())
            .collect();
        let _ = write!(
            out,
            "{},{},{},{},{}",
            step.t,
            spec.state_names[step.state],
            spec.format_joint(&step.joint),
            types.join("|"),
            step.reward
        );
        if with_plan {
            let plan = step
                .plan_values
                .as_ref()
                .map(|values| {
                    values
                        .iter()
                        .enumerate()
                        .map(|(a, v)| format!("{}={}", spec.action_name(spec.controlled, a), v))
                        .collect::<Vec<_>>()
                        .join(";")
                })
                .unwrap_or_default();
            let _ = write!(out, ",{plan}");
        }
        out.push('\n');
    }
    out
}
