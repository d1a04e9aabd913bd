//! Canonical small games used by the examples, tests and the CLI.
//!
//! All games here are scalar-generic; the learning-free fixtures only use
//! rational probabilities, so they can be instantiated exactly.

use crate::game::{GameBuilder, GameSpec, JointAction, TypeId};
use crate::scalar::Prob;
use crate::strategy::{TypeKind, TypeStrategy};

fn half<T: Prob>() -> T {
    T::from_ratio(1, 2)
}

fn stay<T: Prob>(state: usize, _: &JointAction) -> Vec<(usize, T)> {
    vec![(state, T::one())]
}

/// A single ε-greedy player with two actions; ε = `epsilon`.
pub fn epsilon_greedy_game<T: Prob>(epsilon: T) -> GameSpec<T> {
    let mut b = GameBuilder::new(
        ["s0"],
        vec![("hba", vec!["noop"]), ("j", vec!["A", "B"])],
        0,
    )
    .transitions_with(stay);
    let eg = b.add_type(TypeStrategy::new(
        "theta_eps",
        1,
        TypeKind::EpsilonGreedy { greedy: 0, epsilon },
    ));
    b.latent(1, vec![eg])
        .delta(vec![(vec![eg], T::one())])
        .user_types_uniform(1, vec![eg])
        .build()
        .expect("valid fixture")
}

/// θ_A always plays A, θ_B always plays B, Δ(θ_A) = Δ(θ_B) = 1/2.
pub fn mixed_pure_types<T: Prob>() -> GameSpec<T> {
    let mut b = GameBuilder::new(
        ["s0"],
        vec![("hba", vec!["noop"]), ("j", vec!["A", "B"])],
        0,
    )
    .transitions_with(stay);
    let a = b.add_type(TypeStrategy::new(
        "theta_A",
        1,
        TypeKind::Fixed(vec![T::one(), T::zero()]),
    ));
    let bb = b.add_type(TypeStrategy::new(
        "theta_B",
        1,
        TypeKind::Fixed(vec![T::zero(), T::one()]),
    ));
    b.latent(1, vec![a, bb])
        .delta(vec![(vec![a], half()), (vec![bb], half())])
        .user_types_uniform(1, vec![a, bb])
        .positive_priors(true)
        .build()
        .expect("valid fixture")
}

/// θ_A always plays A, θ_AB plays A or B uniformly, Δ(θ_A) = 1.
pub fn overlapping_types<T: Prob>() -> GameSpec<T> {
    let mut b = GameBuilder::new(
        ["s0"],
        vec![("hba", vec!["noop"]), ("j", vec!["A", "B"])],
        0,
    )
    .transitions_with(stay);
    let a = b.add_type(TypeStrategy::new(
        "theta_A",
        1,
        TypeKind::Fixed(vec![T::one(), T::zero()]),
    ));
    let ab = b.add_type(TypeStrategy::new(
        "theta_AB",
        1,
        TypeKind::Fixed(vec![half(), half()]),
    ));
    b.latent(1, vec![a, ab])
        .delta(vec![(vec![a], T::one()), (vec![ab], T::zero())])
        .user_types_uniform(1, vec![a, ab])
        .positive_priors(true)
        .build()
        .expect("valid fixture")
}

/// Three players; players 1 and 2 each have θ_A/θ_B and never share a type.
pub fn correlated_types<T: Prob>() -> GameSpec<T> {
    let mut b = GameBuilder::new(
        ["s0"],
        vec![
            ("hba", vec!["noop"]),
            ("j", vec!["A", "B"]),
            ("k", vec!["A", "B"]),
        ],
        0,
    )
    .transitions_with(stay);
    let ja = b.add_type(TypeStrategy::new(
        "theta_A",
        1,
        TypeKind::Fixed(vec![T::one(), T::zero()]),
    ));
    let jb = b.add_type(TypeStrategy::new(
        "theta_B",
        1,
        TypeKind::Fixed(vec![T::zero(), T::one()]),
    ));
    let ka = b.add_type(TypeStrategy::new(
        "theta_A",
        2,
        TypeKind::Fixed(vec![T::one(), T::zero()]),
    ));
    let kb = b.add_type(TypeStrategy::new(
        "theta_B",
        2,
        TypeKind::Fixed(vec![T::zero(), T::one()]),
    ));
    let quarter = T::from_ratio(1, 4);
    b.latent(1, vec![ja, jb])
        .latent(2, vec![ka, kb])
        .delta(vec![
            (vec![ja, kb], half()),
            (vec![jb, ka], half()),
            (vec![ja, ka], T::zero()),
            (vec![jb, kb], T::zero()),
        ])
        .user_types_uniform(1, vec![ja, jb])
        .user_types_uniform(2, vec![ka, kb])
        .joint_prior(vec![
            quarter.clone(),
            quarter.clone(),
            quarter.clone(),
            quarter,
        ])
        .positive_priors(true)
        .build()
        .expect("valid fixture")
}

/// Ids of the period-2 and user types in the L/R fixtures.
#[derive(Clone, Debug)]
pub struct LrTypes {
    pub theta_lr: TypeId,
    pub theta_r: TypeId,
    pub theta_lrr: TypeId,
    pub theta_rl: TypeId,
}

fn lr_types<T: Prob>(b: &mut GameBuilder<T>) -> LrTypes {
    LrTypes {
        theta_lr: b.add_type(TypeStrategy::new(
            "theta_LR",
            1,
            TypeKind::Periodic(vec![0, 1]),
        )),
        theta_r: b.add_type(TypeStrategy::new("theta_R", 1, TypeKind::Periodic(vec![1]))),
        theta_lrr: b.add_type(TypeStrategy::new(
            "theta_LRR",
            1,
            TypeKind::Periodic(vec![0, 1, 1]),
        )),
        theta_rl: b.add_type(TypeStrategy::new(
            "theta_RL",
            1,
            TypeKind::Periodic(vec![1, 0]),
        )),
    }
}

/// The true type alternates L,R; HBA only observes (no terminal states).
pub fn inaccurate_types<T: Prob>() -> (GameSpec<T>, LrTypes) {
    let mut b = GameBuilder::new(
        ["s0"],
        vec![("hba", vec!["L", "R"]), ("j", vec!["L", "R"])],
        0,
    )
    .transitions_with(stay);
    let ids = lr_types(&mut b);
    let spec = b
        .latent(1, vec![ids.theta_lr])
        .delta(vec![(vec![ids.theta_lr], T::one())])
        .user_types_uniform(1, vec![ids.theta_r, ids.theta_lrr])
        .positive_priors(true)
        .build()
        .expect("valid fixture");
    (spec, ids)
}

/// Which user type space the matching game hands to HBA.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchingVariant {
    /// Θ* = {θ_R, θ_LRR}.
    Uncritical,
    /// Θ* = {θ_RL}.
    Critical,
}

/// Matching task: the game ends once HBA plays the same action as player j,
/// whose true type alternates L,R.
pub fn matching_game<T: Prob>(variant: MatchingVariant) -> (GameSpec<T>, LrTypes) {
    let mut b = GameBuilder::new(
        ["s0", "done"],
        vec![("hba", vec!["L", "R"]), ("j", vec!["L", "R"])],
        0,
    )
    .terminal(1)
    .transitions_with(|_, joint| {
        if joint.0[0] == joint.0[1] {
            vec![(1, T::one())]
        } else {
            vec![(0, T::one())]
        }
    });
    let ids = lr_types(&mut b);
    let b = b
        .latent(1, vec![ids.theta_lr])
        .delta(vec![(vec![ids.theta_lr], T::one())])
        .positive_priors(true);
    let b = match variant {
        MatchingVariant::Uncritical => b.user_types_uniform(1, vec![ids.theta_r, ids.theta_lrr]),
        MatchingVariant::Critical => b.user_types_uniform(1, vec![ids.theta_rl]),
    };
    (b.build().expect("valid fixture"), ids)
}
