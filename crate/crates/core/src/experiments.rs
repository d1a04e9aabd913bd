//! Experiment drivers: random games with learning types, posterior traces,
//! the long-run convergence experiment, canonical example runs and plot data.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beliefs::{posterior_error, OverlapStats, PosteriorKind};
use crate::error::{GameError, ScenarioError, VerifyError};
use crate::fixtures::{self, MatchingVariant};
use crate::game::{GameBuilder, GameSpec, JointAction, StateId, TypeId};
use crate::planner::{Controller, Decision, HbaController, PlanConfig};
use crate::scalar::Prob;
use crate::sim::{episode_csv, run_episode, Episode};
use crate::strategy::{
    EpsilonSchedule, Learner, PayoffLayout, RlTypeConfig, TypeKind, TypeStrategy, TypeTracker,
};
use crate::verifier::{build_pair, detect_critical, unbounded_reach, BuildOptions};

/// How the other player's types are generated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TypeModel {
    /// Tabular value learners with ε-greedy exposure.
    #[default]
    Learners,
    /// Fixed random action distributions per state.
    Tables,
}

/// Dimensions and learning parameters of a random two-player game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomSbgConfig {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_types: usize,
    /// Successors per `(state, joint action)` row.
    pub branching: usize,
    /// Without terminal states the game never ends.
    pub terminal_free: bool,
    pub seed: u64,
    pub type_model: TypeModel,
    /// Weights of Δ over the types; uniform when empty.
    pub delta: Vec<f64>,
    pub epsilon_start: f64,
    pub anneal_start: usize,
    pub anneal_end: usize,
    pub learning_rate: f64,
    pub initial_value: f64,
}

impl Default for RandomSbgConfig {
    fn default() -> Self {
        Self {
            n_states: 100,
            n_actions: 10,
            n_types: 3,
            branching: 3,
            terminal_free: true,
            seed: 0,
            type_model: TypeModel::Learners,
            delta: vec![0.3, 0.5, 0.2],
            epsilon_start: 0.7,
            anneal_start: 1000,
            anneal_end: 2000,
            learning_rate: 0.5,
            initial_value: 0.75,
        }
    }
}

impl RandomSbgConfig {
    pub fn schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            anneal_start: self.anneal_start,
            anneal_end: self.anneal_end,
        }
    }

    fn validate(&self) -> Result<(), GameError> {
        if self.n_states == 0 || self.n_actions == 0 || self.n_types == 0 || self.branching == 0 {
            return Err(GameError::Invalid(
                "random game dimensions must be at least 1".into(),
            ));
        }
        if !self.terminal_free && self.n_states < 2 {
            return Err(GameError::Invalid(
                "a game with a terminal state needs two states".into(),
            ));
        }
        if !self.delta.is_empty() && self.delta.len() != self.n_types {
            return Err(GameError::Invalid(format!(
                "delta has {} weights for {} types",
                self.delta.len(),
                self.n_types
            )));
        }
        if self.anneal_start > self.anneal_end {
            return Err(GameError::Invalid(
                "anneal_start must not exceed anneal_end".into(),
            ));
        }
        Ok(())
    }
}

/// A learning type for `player` with `n_actions` actions over `n_states` states.
pub fn make_rl_type(
    name: impl Into<String>,
    player: usize,
    config: RlTypeConfig,
    n_states: usize,
    n_actions: usize,
) -> TypeStrategy<f64> {
    TypeStrategy::new(
        name,
        player,
        TypeKind::Learner(Box::new(Learner::new(config, n_states, n_actions))),
    )
}

/// Builds a random game: player 0 is controlled, player 1 owns `n_types`
/// types, Δ follows `config.delta` and the user type space equals the latent
/// one with a uniform prior.
pub fn generate_random_sbg(config: &RandomSbgConfig) -> Result<GameSpec<f64>, GameError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_states;
    let names: Vec<String> = (0..n).map(|s| format!("s{s}")).collect();
    let actions: Vec<String> = (0..config.n_actions).map(|a| format!("a{a}")).collect();
    let action_refs: Vec<&str> = actions.iter().map(String::as_str).collect();
    let mut b = GameBuilder::<f64>::new(
        names,
        vec![("hba", action_refs.clone()), ("j", action_refs)],
        0,
    );
    if !config.terminal_free {
        b = b.terminal(n - 1);
    }
    let branching = config.branching.min(n);
    b = b.transitions_with(|_, _| {
        let mut pool: Vec<StateId> = (0..n).collect();
        let mut row = Vec::with_capacity(branching);
        for k in 0..branching {
            let pick = rng.gen_range(k..n);
            pool.swap(k, pick);
            row.push((pool[k], rng.gen::<f64>() + 0.05));
        }
        let total: f64 = row.iter().map(|(_, w)| w).sum();
        row.sort_by_key(|(s, _)| *s);
        row.into_iter().map(|(s, w)| (s, w / total)).collect()
    });

    let layout_seed = rng.next_u64();
    let mut ids = Vec::with_capacity(config.n_types);
    for k in 0..config.n_types {
        let name = format!("theta_{k}");
        let ty = match config.type_model {
            TypeModel::Learners => {
                let mut rl = RlTypeConfig::new(rng.next_u64(), config.schedule());
                rl.layout = PayoffLayout::Separated {
                    layout_seed,
                    index: k,
                };
                rl.learning_rate = config.learning_rate;
                rl.initial_value = config.initial_value;
                make_rl_type(name, 1, rl, n, config.n_actions)
            }
            TypeModel::Tables => {
                let table = (0..n)
                    .map(|_| {
                        let w: Vec<f64> = (0..config.n_actions)
                            .map(|_| rng.gen::<f64>() + 0.05)
                            .collect();
                        let total: f64 = w.iter().sum();
                        w.into_iter().map(|x| x / total).collect()
                    })
                    .collect();
                TypeStrategy::new(name, 1, TypeKind::Table(table))
            }
        };
        ids.push(b.add_type(ty));
    }
    let weights = if config.delta.is_empty() {
        vec![1.0; config.n_types]
    } else {
        config.delta.clone()
    };
    let total: f64 = weights.iter().sum();
    let delta = ids
        .iter()
        .zip(&weights)
        .map(|(id, w)| (vec![*id], w / total))
        .collect();
    b.latent(1, ids.clone())
        .delta(delta)
        .user_types_uniform(1, ids)
        .positive_priors(true)
        .build()
}

/// One row of a posterior trace: the state of the beliefs after `t` observed steps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: usize,
    /// Per-player posteriors over the user types, flattened in `columns` order.
    pub posteriors: Vec<f64>,
    pub error: f64,
    pub average_overlap: Vec<f64>,
    pub average_stochasticity: Vec<f64>,
    pub degenerate: bool,
}

/// Per-step posterior diagnostics of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PosteriorTrace {
    pub kind: PosteriorKind,
    /// `pr_<player>_<type>` column names.
    pub columns: Vec<String>,
    pub players: Vec<String>,
    pub rows: Vec<TraceRow>,
    /// Final combined posterior as (profile label, probability).
    pub final_joint: Vec<(String, f64)>,
}

impl PosteriorTrace {
    pub fn header(&self) -> String {
        let mut cols = vec!["t".to_string(), "kind".to_string()];
        cols.extend(self.columns.iter().cloned());
        cols.push("error".into());
        cols.extend(self.players.iter().map(|p| format!("ao_{p}")));
        cols.extend(self.players.iter().map(|p| format!("as_{p}")));
        cols.push("degenerate".into());
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{},{}", row.t, self.kind);
            for v in row
                .posteriors
                .iter()
                .chain([&row.error])
                .chain(&row.average_overlap)
                .chain(&row.average_stochasticity)
            {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{}", u8::from(row.degenerate));
        }
        out
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Last `n` CSV lines, for failure reports.
    pub fn excerpt(&self, n: usize) -> Vec<String> {
        let csv = self.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        let start = lines.len().saturating_sub(n).max(1);
        std::iter::once(lines[0])
            .chain(lines[start..].iter().copied())
            .map(String::from)
            .collect()
    }
}

/// Wraps HBA and records a trace row after every observation.
struct Recorder<T> {
    inner: HbaController<T>,
    stats: Vec<Option<OverlapStats<T>>>,
    delta_on_user: Vec<Vec<T>>,
    rows: Vec<TraceRow>,
}

impl<T: Prob> Recorder<T> {
    fn new(spec: &GameSpec<T>, kind: PosteriorKind, config: PlanConfig<T>) -> Self {
        let others = spec.others();
        let stats = others
            .iter()
            .map(|j| {
                (spec.n_actions(*j) >= 2)
                    .then(|| OverlapStats::new(spec.user_types[*j].clone(), spec.n_actions(*j)))
            })
            .collect();
        let delta_on_user = others
            .iter()
            .map(|j| {
                let marginal = spec.delta_marginal(*j);
                spec.user_types[*j]
                    .iter()
                    .map(|id| {
                        spec.latent[*j]
                            .iter()
                            .position(|l| l == id)
                            .map_or_else(T::zero, |k| marginal[k].clone())
                    })
                    .collect()
            })
            .collect();
        Self {
            inner: HbaController::new(spec, kind, config),
            stats,
            delta_on_user,
            rows: Vec::new(),
        }
    }
}

impl<T: Prob> Controller<T> for Recorder<T> {
    fn decide(&mut self, spec: &GameSpec<T>, state: StateId, rng: &mut dyn RngCore) -> Decision<T> {
        self.inner.decide(spec, state, rng)
    }

    fn observe(&mut self, spec: &GameSpec<T>, state: StateId, joint: &JointAction, next: StateId) {
        for (j, stats) in spec.others().iter().zip(self.stats.iter_mut()) {
            if let Some(stats) = stats {
                let dists: Vec<Vec<T>> = stats
                    .types
                    .iter()
                    .map(|id| self.inner.tracker().distribution(spec, *id, state))
                    .collect();
                stats
                    .observe(&dists, joint.0[*j])
                    .expect("at least two actions");
            }
        }
        self.inner.observe(spec, state, joint, next);
        let beliefs = self.inner.belief_state().expect("learned beliefs");
        let mut posteriors = Vec::new();
        let mut error = T::zero();
        for (k, delta) in self.delta_on_user.iter().enumerate() {
            let post = beliefs.player_posterior(k).probs;
            error = error + posterior_error(&post, delta);
            posteriors.extend(post.iter().map(Prob::to_f64_lossy));
        }
        let stat = |f: fn(&OverlapStats<T>) -> T| {
            self.stats
                .iter()
                .map(|s| s.as_ref().map_or(f64::NAN, |s| f(s).to_f64_lossy()))
                .collect()
        };
        self.rows.push(TraceRow {
            t: beliefs.t(),
            posteriors,
            error: error.to_f64_lossy(),
            average_overlap: stat(OverlapStats::average_overlap),
            average_stochasticity: stat(OverlapStats::average_stochasticity),
            degenerate: beliefs.is_degenerate(),
        });
    }

    fn degenerate(&self) -> bool {
        self.inner.degenerate()
    }
}

fn profile_label<T: Prob>(spec: &GameSpec<T>, profile: &[TypeId]) -> String {
    profile
        .iter()
        .map(|id| spec.types[*id].name.as_str())
        .collect::<Vec<_>>()
        .join("|")
}

/// Runs HBA for up to `steps` steps and records the posterior after each one.
pub fn posterior_trace<T: Prob>(
    spec: &GameSpec<T>,
    kind: PosteriorKind,
    config: PlanConfig<T>,
    steps: usize,
    rng: &mut dyn RngCore,
) -> (Episode<T>, PosteriorTrace) {
    let mut recorder = Recorder::new(spec, kind, config);
    let episode = run_episode(spec, &mut recorder, steps, rng);
    let others = spec.others();
    let players = others
        .iter()
        .map(|j| spec.players[*j].name.clone())
        .collect();
    let columns = others
        .iter()
        .flat_map(|j| {
            spec.user_types[*j]
                .iter()
                .map(move |id| format!("pr_{}_{}", spec.players[*j].name, spec.types[*id].name))
        })
        .collect();
    let final_joint = recorder
        .inner
        .snapshot()
        .profiles
        .iter()
        .map(|(profile, p)| (profile_label(spec, profile), p.to_f64_lossy()))
        .collect();
    (
        episode,
        PosteriorTrace {
            kind,
            columns,
            players,
            rows: recorder.rows,
            final_joint,
        },
    )
}

/// Settings of the long-run posterior convergence experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure1Config {
    pub game: RandomSbgConfig,
    pub steps: usize,
    pub posterior: PosteriorKind,
    pub horizon: usize,
}

impl Default for Figure1Config {
    fn default() -> Self {
        Self {
            game: RandomSbgConfig::default(),
            steps: 3000,
            posterior: PosteriorKind::Sum,
            horizon: 1,
        }
    }
}

/// Pass/fail summary of one convergence run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Figure1Summary {
    pub seed: u64,
    pub steps: usize,
    pub final_error: f64,
    /// Mean error over `t ∈ [500, 1000]`.
    pub early_mean: f64,
    pub max_error: f64,
    /// AS never increases after annealing ends.
    pub stochasticity_monotone: bool,
    pub final_overlap: f64,
    pub converged: bool,
}

/// Generates the random game from `seed` and records one long posterior run.
pub fn run_figure1(
    config: &Figure1Config,
    seed: u64,
) -> Result<(PosteriorTrace, Figure1Summary), GameError> {
    let mut game = config.game.clone();
    game.seed = seed;
    let spec = generate_random_sbg(&game)?;
    let plan = PlanConfig::new(0.9, config.horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let (_, trace) = posterior_trace(&spec, config.posterior, plan, config.steps, &mut rng);
    let window: Vec<f64> = trace
        .rows
        .iter()
        .filter(|r| (500..=1000).contains(&r.t))
        .map(|r| r.error)
        .collect();
    let early_mean = if window.is_empty() {
        f64::NAN
    } else {
        window.iter().sum::<f64>() / window.len() as f64
    };
    let final_error = trace.last().map_or(f64::NAN, |r| r.error);
    let max_error = trace.rows.iter().map(|r| r.error).fold(0.0, f64::max);
    let frozen: Vec<&TraceRow> = trace
        .rows
        .iter()
        .filter(|r| r.t > game.anneal_end)
        .collect();
    let stochasticity_monotone = frozen.windows(2).all(|w| {
        w[0].average_stochasticity
            .iter()
            .zip(&w[1].average_stochasticity)
            .all(|(x, y)| *y <= x + 1e-12)
    });
    let final_overlap = trace.last().map_or(f64::NAN, |r| r.average_overlap[0]);
    let summary = Figure1Summary {
        seed,
        steps: config.steps,
        converged: final_error < 0.1 && final_error < early_mean,
        final_error,
        early_mean,
        max_error,
        stochasticity_monotone,
        final_overlap,
    };
    Ok((trace, summary))
}

/// Canonical example fixtures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleName {
    Ex1,
    Ex2,
    Ex3,
    Ex4,
    Ex5,
    Ex6,
}

impl ExampleName {
    pub const ALL: [ExampleName; 6] = [
        ExampleName::Ex1,
        ExampleName::Ex2,
        ExampleName::Ex3,
        ExampleName::Ex4,
        ExampleName::Ex5,
        ExampleName::Ex6,
    ];
}

impl fmt::Display for ExampleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = ExampleName::ALL
            .iter()
            .position(|e| e == self)
            .expect("listed")
            + 1;
        write!(f, "ex{n}")
    }
}

impl FromStr for ExampleName {
    type Err = ScenarioError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExampleName::ALL
            .iter()
            .copied()
            .find(|e| e.to_string() == s)
            .ok_or_else(|| {
                ScenarioError::Invalid(format!("unknown example '{s}' (expected ex1..ex6)"))
            })
    }
}

/// One asserted outcome.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }

    fn within(name: &str, value: f64, target: f64, tol: f64) -> Self {
        Self::new(
            name,
            (value - target).abs() <= tol,
            format!("{value:.6} vs {target:.6} ± {tol}"),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExampleReport {
    pub example: ExampleName,
    pub posterior: PosteriorKind,
    pub steps: usize,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub final_posterior: Vec<(String, f64)>,
    pub excerpt: Vec<String>,
}

fn traced<T: Prob>(
    spec: &GameSpec<T>,
    kind: PosteriorKind,
    steps: usize,
    seed: u64,
) -> (Episode<T>, PosteriorTrace) {
    let plan = PlanConfig::new(T::from_ratio(9, 10), 1).expect("valid plan");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    posterior_trace(spec, kind, plan, steps, &mut rng)
}

fn joint_prob(trace: &PosteriorTrace, label: &str) -> f64 {
    trace
        .final_joint
        .iter()
        .find(|(l, _)| l == label)
        .map_or(f64::NAN, |(_, p)| *p)
}

fn degenerate_check(trace: &PosteriorTrace) -> Check {
    let first = trace.rows.iter().find(|r| r.degenerate).map(|r| r.t);
    Check::new(
        "degenerate event raised",
        first.is_some(),
        first.map_or("never".into(), |t| format!("first at t={t}")),
    )
}

/// Fraction of steps at which `type_id` gave the observed action probability 1.
fn prediction_rate<T: Prob>(spec: &GameSpec<T>, episode: &Episode<T>, type_id: TypeId) -> f64 {
    let player = spec.types[type_id].player;
    let mut tracker = TypeTracker::for_types(spec, [type_id]);
    let mut hits = 0usize;
    for (tau, joint) in episode.history.actions.iter().enumerate() {
        let state = episode.history.states[tau];
        let p = tracker.distribution(spec, type_id, state)[joint.0[player]].to_f64_lossy();
        if p >= 1.0 - 1e-12 {
            hits += 1;
        }
        tracker.advance(spec, state, joint);
    }
    hits as f64 / episode.history.len().max(1) as f64
}

/// Runs the fixture named `example` and evaluates its documented outcome.
pub fn run_example(
    example: ExampleName,
    kind: PosteriorKind,
    steps: usize,
    seed: u64,
) -> Result<ExampleReport, VerifyError> {
    let mut checks = Vec::new();
    let mut excerpt = Vec::new();
    let mut final_posterior = Vec::new();
    let record =
        |trace: &PosteriorTrace, excerpt: &mut Vec<String>, fp: &mut Vec<(String, f64)>| {
            *excerpt = trace.excerpt(5);
            *fp = trace.final_joint.clone();
        };
    match example {
        ExampleName::Ex1 => {
            let spec = fixtures::epsilon_greedy_game::<f64>(0.2);
            let dist = spec.types[0].distribution(&spec.types[0].initial_memory(), 0, 2);
            checks.push(Check::within(
                "greedy probability 1-ε/2",
                dist[0],
                0.9,
                1e-12,
            ));
            checks.push(Check::within("other probability ε/2", dist[1], 0.1, 1e-12));
            let (episode, trace) = traced(&spec, kind, steps, seed);
            let greedy = episode
                .history
                .actions
                .iter()
                .filter(|j| j.0[1] == 0)
                .count();
            let freq = greedy as f64 / episode.history.len().max(1) as f64;
            checks.push(Check::within("empirical greedy frequency", freq, 0.9, 0.02));
            record(&trace, &mut excerpt, &mut final_posterior);
        }
        ExampleName::Ex2 => {
            let spec = fixtures::mixed_pure_types::<f64>();
            let (_, trace) = traced(&spec, kind, steps, seed);
            match kind {
                PosteriorKind::Product => checks.push(degenerate_check(&trace)),
                _ => {
                    checks.push(Check::within(
                        "P(theta_A)",
                        joint_prob(&trace, "theta_A"),
                        0.5,
                        0.02,
                    ));
                    checks.push(Check::within(
                        "P(theta_B)",
                        joint_prob(&trace, "theta_B"),
                        0.5,
                        0.02,
                    ));
                }
            }
            record(&trace, &mut excerpt, &mut final_posterior);
        }
        ExampleName::Ex3 => {
            let spec = fixtures::overlapping_types::<f64>();
            let (_, trace) = traced(&spec, kind, steps, seed);
            let pa = joint_prob(&trace, "theta_A");
            match kind {
                PosteriorKind::Product => checks.push(Check::new(
                    "P(theta_A) >= 0.99",
                    pa >= 0.99,
                    format!("{pa:.6}"),
                )),
                _ => {
                    checks.push(Check::within("P(theta_A)", pa, 2.0 / 3.0, 0.02));
                    checks.push(Check::within(
                        "P(theta_AB)",
                        joint_prob(&trace, "theta_AB"),
                        1.0 / 3.0,
                        0.02,
                    ));
                }
            }
            record(&trace, &mut excerpt, &mut final_posterior);
        }
        ExampleName::Ex4 => {
            let spec = fixtures::correlated_types::<f64>();
            let (_, trace) = traced(&spec, kind, steps, seed);
            let pairs = [
                ("theta_A|theta_A", false),
                ("theta_A|theta_B", true),
                ("theta_B|theta_A", true),
                ("theta_B|theta_B", false),
            ];
            match kind {
                PosteriorKind::Product => checks.push(degenerate_check(&trace)),
                PosteriorKind::Sum => {
                    for (label, _) in pairs {
                        checks.push(Check::within(
                            &format!("P({label})"),
                            joint_prob(&trace, label),
                            0.25,
                            0.02,
                        ));
                    }
                }
                PosteriorKind::Correlated => {
                    for (label, permitted) in pairs {
                        let p = joint_prob(&trace, label);
                        checks.push(if permitted {
                            Check::within(&format!("P({label})"), p, 0.5, 0.02)
                        } else {
                            Check::new(&format!("P({label}) < 0.01"), p < 0.01, format!("{p:.6}"))
                        });
                    }
                }
            }
            record(&trace, &mut excerpt, &mut final_posterior);
        }
        ExampleName::Ex5 => {
            let (spec, ids) = fixtures::inaccurate_types::<f64>();
            let (episode, trace) = traced(&spec, kind, steps, seed);
            for (name, id) in [("theta_R", ids.theta_r), ("theta_LRR", ids.theta_lrr)] {
                let rate = prediction_rate(&spec, &episode, id);
                checks.push(Check::within(
                    &format!("{name} prediction rate"),
                    rate,
                    0.5,
                    0.05,
                ));
            }
            record(&trace, &mut excerpt, &mut final_posterior);
        }
        ExampleName::Ex6 => {
            let max_steps = steps.clamp(1, 100);
            let config = PlanConfig::new(0.9, 3)?;
            for variant in [MatchingVariant::Uncritical, MatchingVariant::Critical] {
                let (spec, _) = fixtures::matching_game::<f64>(variant);
                let mut lengths = Vec::new();
                for s in seed..seed + 10 {
                    let mut hba = HbaController::new(&spec, kind, config.clone());
                    let mut rng = ChaCha8Rng::seed_from_u64(s);
                    let episode = run_episode(&spec, &mut hba, max_steps, &mut rng);
                    if s == seed {
                        excerpt.extend(
                            episode_csv(&spec, &episode, false)
                                .lines()
                                .take(4)
                                .map(String::from),
                        );
                    }
                    lengths.push(episode.terminated.then_some(episode.history.len()));
                }
                let (_, y) = build_pair(&spec, kind, &config, &BuildOptions::default())?;
                let report = detect_critical(&y)?;
                let reach = unbounded_reach(&y)[y.initial].to_f64_lossy();
                match variant {
                    MatchingVariant::Uncritical => {
                        checks.push(Check::new(
                            "uncritical: terminal within 2 steps on every seed",
                            lengths.iter().all(|l| l.is_some_and(|n| n <= 2)),
                            format!("{lengths:?}"),
                        ));
                        checks.push(Check::new(
                            "uncritical: verdict",
                            !report.critical,
                            format!("{:?}", report.witness),
                        ));
                        checks.push(Check::within(
                            "uncritical: termination probability",
                            reach,
                            1.0,
                            1e-9,
                        ));
                    }
                    MatchingVariant::Critical => {
                        checks.push(Check::new(
                            "critical: never terminates",
                            lengths.iter().all(Option::is_none),
                            format!("{lengths:?}"),
                        ));
                        let size = report.witness.as_ref().map_or(0, Vec::len);
                        checks.push(Check::new(
                            "critical: verdict with 2-node witness",
                            report.critical && size == 2,
                            format!("{:?}", report.witness),
                        ));
                    }
                }
            }
        }
    }
    Ok(ExampleReport {
        example,
        posterior: kind,
        steps,
        seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
        final_posterior,
        excerpt,
    })
}

/// Downsamples a posterior trace to `t error` pairs, keeping every
/// `stride`-th data row starting with the first.
pub fn emit_plot_data(csv: &str, stride: usize) -> Result<String, ScenarioError> {
    if stride == 0 {
        return Err(ScenarioError::Invalid("stride must be at least 1".into()));
    }
    let mut out = String::from("# t error\n");
    let mut lines = csv
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Ok(out);
    };
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| c.trim() == name)
            .ok_or_else(|| ScenarioError::Invalid(format!("trace header lacks a '{name}' column")))
    };
    let (t_col, e_col) = (find("t")?, find("error")?);
    for (k, (line_no, line)) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| ScenarioError::Invalid(format!("line {}: {what}", line_no + 1));
        if fields.len() != cols.len() {
            return Err(bad(&format!(
                "expected {} fields, found {}",
                cols.len(),
                fields.len()
            )));
        }
        let t: usize = fields[t_col]
            .trim()
            .parse()
            .map_err(|_| bad("bad t value"))?;
        let e: f64 = fields[e_col]
            .trim()
            .parse()
            .map_err(|_| bad("bad error value"))?;
        if k % stride == 0 {
            let _ = writeln!(out, "{t} {e}");
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> RandomSbgConfig {
        RandomSbgConfig {
            n_states: 6,
            n_actions: 3,
            seed,
            ..RandomSbgConfig::default()
        }
    }

    #[test]
    fn same_seed_same_digest() {
        let a = generate_random_sbg(&small(4)).unwrap();
        let b = generate_random_sbg(&small(4)).unwrap();
        let c = generate_random_sbg(&small(5)).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn defaults_match_the_experiment_dimensions() {
        let spec = generate_random_sbg(&RandomSbgConfig::default()).unwrap();
        assert_eq!(spec.n_states(), 100);
        assert_eq!(spec.n_players(), 2);
        assert_eq!(spec.n_actions(0), 10);
        assert_eq!(spec.n_actions(1), 10);
        assert_eq!(spec.latent[1].len(), 3);
        assert_eq!(spec.user_types[1], spec.latent[1]);
        assert!((0..100).all(|s| !spec.is_terminal(s)));
        let marginal = spec.delta_marginal(1);
        for (m, w) in marginal.iter().zip([0.3, 0.5, 0.2]) {
            assert!((m - w).abs() < 1e-12);
        }
    }

    #[test]
    fn branching_one_gives_point_masses() {
        let spec = generate_random_sbg(&RandomSbgConfig {
            branching: 1,
            ..small(2)
        })
        .unwrap();
        for s in 0..spec.n_states() {
            for joint in spec.joint_actions() {
                let row = spec.transition(s, &joint);
                assert_eq!(row.len(), 1);
                assert_eq!(row[0].1, 1.0);
            }
        }
    }

    #[test]
    fn terminal_flag_marks_last_state() {
        let spec = generate_random_sbg(&RandomSbgConfig {
            terminal_free: false,
            ..small(1)
        })
        .unwrap();
        assert!(spec.is_terminal(5));
        assert!((0..5).all(|s| !spec.is_terminal(s)));
    }

    #[test]
    fn zero_dimensions_are_rejected() {
        assert!(generate_random_sbg(&RandomSbgConfig {
            n_actions: 0,
            ..small(0)
        })
        .is_err());
        assert!(generate_random_sbg(&RandomSbgConfig {
            delta: vec![1.0],
            ..small(0)
        })
        .is_err());
    }

    #[test]
    fn rl_type_exposes_external_epsilon_greedy() {
        let ty = make_rl_type(
            "rl",
            1,
            RlTypeConfig::new(3, EpsilonSchedule::constant(0.2)),
            1,
            2,
        );
        let dist: Vec<f64> = ty.distribution(&ty.initial_memory(), 0, 2);
        let mut sorted = dist.clone();
        sorted.sort_by(f64::total_cmp);
        assert!((sorted[1] - 0.9).abs() < 1e-12);
        assert!((sorted[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rl_type_is_greedy_after_annealing() {
        let schedule = EpsilonSchedule {
            start: 0.7,
            anneal_start: 2,
            anneal_end: 4,
        };
        let ty = make_rl_type("rl", 1, RlTypeConfig::new(3, schedule), 1, 4);
        let mut memory = ty.initial_memory();
        for _ in 0..4 {
            ty.advance(&mut memory, 0, &JointAction(vec![0, 1]));
        }
        let dist: Vec<f64> = ty.distribution(&memory, 0, 4);
        assert_eq!(dist.iter().filter(|p| **p == 1.0).count(), 1);
        assert_eq!(dist.iter().filter(|p| **p == 0.0).count(), 3);
    }

    #[test]
    fn separated_learners_end_with_distinct_greedy_actions() {
        let config = RandomSbgConfig {
            n_states: 4,
            n_actions: 5,
            ..RandomSbgConfig::default()
        };
        let spec = generate_random_sbg(&config).unwrap();
        let mut tracker = TypeTracker::all(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..400 {
            let s = rng.gen_range(0..4);
            let a = rng.gen_range(0..5);
            tracker.advance(&spec, s, &JointAction(vec![0, a]));
        }
        for s in 0..4 {
            let greedy: Vec<usize> = (0..3)
                .map(|id| match (&spec.types[id].kind, tracker.memory(id)) {
                    (TypeKind::Learner(l), crate::strategy::Memory::Learner(m)) => l.greedy(m, s),
                    _ => unreachable!(),
                })
                .collect();
            assert_ne!(greedy[0], greedy[1]);
            assert_ne!(greedy[1], greedy[2]);
            assert_ne!(greedy[0], greedy[2]);
        }
    }

    #[test]
    fn trace_rows_and_columns() {
        let spec = fixtures::overlapping_types::<f64>();
        let (_, trace) = traced(&spec, PosteriorKind::Sum, 20, 0);
        assert_eq!(trace.rows.len(), 20);
        assert_eq!(trace.rows[0].t, 1);
        let csv = trace.to_csv();
        let header = csv.lines().next().unwrap();
        assert_eq!(
            header,
            "t,kind,pr_j_theta_A,pr_j_theta_AB,error,ao_j,as_j,degenerate"
        );
        for line in csv.lines().skip(1) {
            assert_eq!(line.split(',').count(), 8);
        }
        for row in &trace.rows {
            assert!(row.error >= 0.0 && row.error <= 2.0);
        }
    }

    #[test]
    fn posterior_error_is_l1_against_delta() {
        let spec = fixtures::overlapping_types::<f64>();
        let (_, trace) = traced(&spec, PosteriorKind::Sum, 200, 1);
        let row = trace.last().unwrap();
        let expected = (row.posteriors[0] - 1.0).abs() + row.posteriors[1];
        assert!((row.error - expected).abs() < 1e-12);
    }

    #[test]
    fn examples_pass_on_their_default_kinds() {
        for (ex, kind) in [
            (ExampleName::Ex1, PosteriorKind::Sum),
            (ExampleName::Ex2, PosteriorKind::Product),
            (ExampleName::Ex3, PosteriorKind::Sum),
            (ExampleName::Ex4, PosteriorKind::Correlated),
            (ExampleName::Ex5, PosteriorKind::Sum),
            (ExampleName::Ex6, PosteriorKind::Product),
        ] {
            let report = run_example(ex, kind, 2000, 3).unwrap();
            assert!(report.passed, "{report:#?}");
        }
    }

    #[test]
    fn figure1_is_deterministic_and_bounded() {
        let config = Figure1Config {
            steps: 300,
            game: RandomSbgConfig {
                n_states: 10,
                anneal_start: 100,
                anneal_end: 200,
                ..RandomSbgConfig::default()
            },
            ..Figure1Config::default()
        };
        let (a, summary) = run_figure1(&config, 7).unwrap();
        let (b, _) = run_figure1(&config, 7).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.rows.len(), 300);
        assert!(a.rows.iter().all(|r| (0.0..=2.0).contains(&r.error)));
        assert!(summary.stochasticity_monotone);
        assert!(a.rows[250].average_stochasticity[0] < a.rows[150].average_stochasticity[0]);
    }

    #[test]
    fn example_names_round_trip() {
        for ex in ExampleName::ALL {
            assert_eq!(ex.to_string().parse::<ExampleName>().unwrap(), ex);
        }
        assert!("ex7".parse::<ExampleName>().is_err());
    }

    #[test]
    fn plot_data_downsamples() {
        assert_eq!(emit_plot_data("", 10).unwrap(), "# t error\n");
        let mut csv = String::from("t,kind,error\n");
        for t in 1..=3000 {
            csv.push_str(&format!("{t},sum,0.5\n"));
        }
        let out = emit_plot_data(&csv, 10).unwrap();
        let rows: Vec<&str> = out.lines().skip(1).collect();
        assert_eq!(rows.len(), 300);
        assert_eq!(rows[0], "1 0.5");
        assert!(rows.iter().all(|r| r.split(' ').count() == 2));
    }

    #[test]
    fn malformed_traces_are_rejected() {
        assert!(emit_plot_data("t,kind\n1,sum\n", 1).is_err());
        assert!(emit_plot_data("t,error\n1,0.5,3\n", 1).is_err());
        assert!(emit_plot_data("t,error\nx,0.5\n", 1).is_err());
        assert!(emit_plot_data("t,error\n1,0.5\n", 0).is_err());
    }
}
