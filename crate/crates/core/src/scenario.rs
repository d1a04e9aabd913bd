//! JSON scenario files.
//!
//! A scenario defines a game inline together with the controller and run
//! settings. States, players, actions and types are referred to by name;
//! probabilities may be JSON numbers or `"p/q"` strings. Transition rules are
//! matched in order and the first rule whose `from` state and joint action
//! pattern (with `"*"` wildcards) match supplies the row.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::beliefs::PosteriorKind;
use crate::error::ScenarioError;
use crate::experiments::Figure1Config;
use crate::game::{GameBuilder, GameSpec, JointAction, TypeId};
use crate::planner::PlanConfig;
use crate::scalar::Prob;
use crate::strategy::{
    EpsilonSchedule, Learner, PayoffLayout, RlTypeConfig, TypeKind, TypeStrategy,
};
use crate::verifier::{BuildOptions, Quotient};

/// A probability literal.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ProbLiteral {
    Number(f64),
    Text(String),
}

impl ProbLiteral {
    pub fn parse<T: Prob>(&self) -> Result<T, ScenarioError> {
        let text = match self {
            ProbLiteral::Number(x) => x.to_string(),
            ProbLiteral::Text(s) => s.clone(),
        };
        T::parse_prob(&text).ok_or(ScenarioError::BadProbability(text))
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerDef {
    pub name: String,
    pub actions: Vec<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionRule {
    pub from: String,
    pub joint: Vec<String>,
    pub to: BTreeMap<String, ProbLiteral>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleDef {
    pub start: f64,
    #[serde(default)]
    pub anneal_start: Option<usize>,
    #[serde(default)]
    pub anneal_end: Option<usize>,
}

impl ScheduleDef {
    fn schedule(&self) -> Result<EpsilonSchedule, ScenarioError> {
        match (self.anneal_start, self.anneal_end) {
            (None, None) => Ok(EpsilonSchedule::constant(self.start)),
            (Some(a), Some(b)) if a <= b => Ok(EpsilonSchedule {
                start: self.start,
                anneal_start: a,
                anneal_end: b,
            }),
            _ => Err(ScenarioError::Invalid(
                "epsilon schedule needs anneal_start <= anneal_end, both or neither".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TypeBody {
    Fixed {
        probs: Vec<ProbLiteral>,
    },
    Table {
        probs: BTreeMap<String, Vec<ProbLiteral>>,
    },
    Periodic {
        actions: Vec<String>,
    },
    Sequence {
        actions: Vec<String>,
    },
    EpsilonGreedy {
        greedy: String,
        epsilon: ProbLiteral,
    },
    Learner {
        payoff_seed: u64,
        epsilon: ScheduleDef,
        #[serde(default)]
        learning_rate: Option<f64>,
        #[serde(default)]
        initial_value: Option<f64>,
        #[serde(default)]
        layout_seed: Option<u64>,
        #[serde(default)]
        layout_index: Option<usize>,
    },
}

#[derive(Clone, Debug, Deserialize)]
pub struct TypeDef {
    pub name: String,
    pub player: String,
    #[serde(flatten)]
    pub body: TypeBody,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaEntry {
    pub profile: Vec<String>,
    pub p: ProbLiteral,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserTypesDef {
    pub types: Vec<String>,
    #[serde(default)]
    pub prior: Option<Vec<ProbLiteral>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerDef {
    #[serde(default = "default_posterior")]
    pub posterior: PosteriorKind,
    #[serde(default = "default_gamma")]
    pub gamma: ProbLiteral,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

fn default_posterior() -> PosteriorKind {
    PosteriorKind::Product
}

fn default_gamma() -> ProbLiteral {
    ProbLiteral::Number(0.9)
}

fn default_horizon() -> usize {
    3
}

impl Default for ControllerDef {
    fn default() -> Self {
        Self {
            posterior: default_posterior(),
            gamma: default_gamma(),
            horizon: default_horizon(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDef {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Episodes per seed; repetition `r` draws from RNG stream `r`.
    #[serde(default = "default_repetitions")]
    pub repetitions: u64,
}

fn default_repetitions() -> u64 {
    1
}

fn default_steps() -> usize {
    100
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl Default for RunDef {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            seeds: default_seeds(),
            repetitions: default_repetitions(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    Episode,
    PosteriorTrace,
    Figure1,
    Verify,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyDef {
    #[serde(default)]
    pub quotient: Option<String>,
    #[serde(default)]
    pub max_nodes: Option<usize>,
    #[serde(default)]
    pub validation_visits: Option<usize>,
    #[serde(default)]
    pub explore_all_actions: bool,
}

/// The file format as written on disk. The game fields may be omitted for
/// the `figure1` experiment, which generates its own game.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub states: Vec<String>,
    #[serde(default)]
    pub initial: Option<String>,
    #[serde(default)]
    pub terminal: Vec<String>,
    #[serde(default)]
    pub players: Vec<PlayerDef>,
    #[serde(default)]
    pub controlled: String,
    #[serde(default)]
    pub transitions: Vec<TransitionRule>,
    #[serde(default)]
    pub types: Vec<TypeDef>,
    #[serde(default)]
    pub latent: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub delta: Vec<DeltaEntry>,
    #[serde(default)]
    pub user_types: BTreeMap<String, UserTypesDef>,
    #[serde(default)]
    pub joint_prior: Option<Vec<ProbLiteral>>,
    #[serde(default)]
    pub positive_priors: bool,
    #[serde(default)]
    pub controller: ControllerDef,
    #[serde(default)]
    pub run: RunDef,
    #[serde(default)]
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub verify: Option<VerifyDef>,
    #[serde(default)]
    pub figure1: Option<Figure1Config>,
}

/// A resolved scenario.
#[derive(Clone, Debug)]
pub struct Scenario<T> {
    pub name: String,
    pub spec: GameSpec<T>,
    pub posterior: PosteriorKind,
    pub plan: PlanConfig<T>,
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub repetitions: u64,
    pub experiment: ExperimentKind,
    pub build: BuildOptions,
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

fn lookup(names: &[String], name: &str, what: &str) -> Result<usize, ScenarioError> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| invalid(format!("unknown {what} '{name}'")))
}

fn parse_all<T: Prob>(lits: &[ProbLiteral]) -> Result<Vec<T>, ScenarioError> {
    lits.iter().map(ProbLiteral::parse).collect()
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Settings of a `figure1` scenario; `None` for the other experiment kinds.
    pub fn figure1_config(&self) -> Option<Figure1Config> {
        (self.experiment == ExperimentKind::Figure1)
            .then(|| self.figure1.clone().unwrap_or_default())
    }

    pub fn resolve<T: Prob>(&self) -> Result<Scenario<T>, ScenarioError> {
        if self.players.is_empty() {
            return Err(invalid("scenario defines no players"));
        }
        let player_names: Vec<String> = self.players.iter().map(|p| p.name.clone()).collect();
        let controlled = lookup(&player_names, &self.controlled, "player")?;
        let players: Vec<(&str, Vec<&str>)> = self
            .players
            .iter()
            .map(|p| {
                (
                    p.name.as_str(),
                    p.actions.iter().map(String::as_str).collect(),
                )
            })
            .collect();
        let mut b = GameBuilder::<T>::new(self.states.iter().cloned(), players, controlled);
        if let Some(initial) = &self.initial {
            b = b.initial(lookup(&self.states, initial, "state")?);
        }
        for t in &self.terminal {
            b = b.terminal(lookup(&self.states, t, "state")?);
        }

        let mut rules = Vec::with_capacity(self.transitions.len());
        for rule in &self.transitions {
            if rule.joint.len() != self.players.len() {
                return Err(invalid(format!(
                    "transition rule from '{}' names {} actions for {} players",
                    rule.from,
                    rule.joint.len(),
                    self.players.len()
                )));
            }
            let from = match rule.from.as_str() {
                "*" => None,
                s => Some(lookup(&self.states, s, "state")?),
            };
            let mut pattern = Vec::with_capacity(rule.joint.len());
            for (k, a) in rule.joint.iter().enumerate() {
                pattern.push(match a.as_str() {
                    "*" => None,
                    a => Some(lookup(&self.players[k].actions, a, "action")?),
                });
            }
            let mut row = Vec::with_capacity(rule.to.len());
            for (s, p) in &rule.to {
                row.push((lookup(&self.states, s, "state")?, p.parse::<T>()?));
            }
            row.sort_by_key(|(s, _)| *s);
            rules.push((from, pattern, row));
        }
        let mut unmatched = None;
        b = b.transitions_with(|s, joint: &JointAction| {
            let hit = rules.iter().find(|(from, pattern, _)| {
                from.is_none_or(|f| f == s)
                    && pattern
                        .iter()
                        .zip(&joint.0)
                        .all(|(p, a)| p.is_none_or(|p| p == *a))
            });
            match hit {
                Some((_, _, row)) => row.clone(),
                None => {
                    unmatched.get_or_insert((s, joint.clone()));
                    vec![(s, T::one())]
                }
            }
        });
        if let Some((s, joint)) = unmatched {
            let names: Vec<&str> = joint
                .0
                .iter()
                .enumerate()
                .map(|(k, a)| self.players[k].actions[*a].as_str())
                .collect();
            return Err(invalid(format!(
                "no transition rule matches state '{}' and joint action {}",
                self.states[s],
                names.join("|")
            )));
        }

        let mut type_ids: BTreeMap<(usize, String), TypeId> = BTreeMap::new();
        for def in &self.types {
            let player = lookup(&player_names, &def.player, "player")?;
            if player == controlled {
                return Err(invalid(format!(
                    "type '{}' belongs to the controlled player",
                    def.name
                )));
            }
            let kind = self.type_kind::<T>(def, player)?;
            let id = b.add_type(TypeStrategy::new(def.name.clone(), player, kind));
            if type_ids.insert((player, def.name.clone()), id).is_some() {
                return Err(invalid(format!(
                    "duplicate type '{}' for player '{}'",
                    def.name, def.player
                )));
            }
        }
        let type_of = |player: usize, name: &str| {
            type_ids
                .get(&(player, name.to_string()))
                .copied()
                .ok_or_else(|| {
                    invalid(format!(
                        "unknown type '{name}' for player '{}'",
                        player_names[player]
                    ))
                })
        };

        for (pname, names) in &self.latent {
            let player = lookup(&player_names, pname, "player")?;
            let ids = names
                .iter()
                .map(|n| type_of(player, n))
                .collect::<Result<_, _>>()?;
            b = b.latent(player, ids);
        }
        let others: Vec<usize> = (0..self.players.len())
            .filter(|p| *p != controlled)
            .collect();
        let mut delta = Vec::with_capacity(self.delta.len());
        for entry in &self.delta {
            if entry.profile.len() != others.len() {
                return Err(invalid(
                    "every delta profile names one type per other player",
                ));
            }
            let ids = others
                .iter()
                .zip(&entry.profile)
                .map(|(j, n)| type_of(*j, n))
                .collect::<Result<Vec<_>, _>>()?;
            delta.push((ids, entry.p.parse::<T>()?));
        }
        b = b.delta(delta);
        for (pname, def) in &self.user_types {
            let player = lookup(&player_names, pname, "player")?;
            let ids: Vec<TypeId> = def
                .types
                .iter()
                .map(|n| type_of(player, n))
                .collect::<Result<_, _>>()?;
            b = match &def.prior {
                Some(prior) => b.user_types(player, ids, parse_all(prior)?),
                None => b.user_types_uniform(player, ids),
            };
        }
        if let Some(joint) = &self.joint_prior {
            b = b.joint_prior(parse_all(joint)?);
        }
        let spec = b.positive_priors(self.positive_priors).build()?;

        let plan = PlanConfig::new(self.controller.gamma.parse::<T>()?, self.controller.horizon)?;
        let mut build = BuildOptions::default();
        if let Some(v) = &self.verify {
            build.quotient = match v.quotient.as_deref() {
                None | Some("belief") => Quotient::Belief,
                Some("action-set") => Quotient::ActionSet,
                Some(other) => return Err(invalid(format!("unknown quotient '{other}'"))),
            };
            build.max_nodes = v.max_nodes.unwrap_or(build.max_nodes);
            build.validation_visits = v.validation_visits.unwrap_or(build.validation_visits);
            build.explore_all_actions = v.explore_all_actions;
        }
        if self.run.seeds.is_empty() {
            return Err(invalid("run.seeds must list at least one seed"));
        }
        if self.run.repetitions == 0 {
            return Err(invalid("run.repetitions must be at least 1"));
        }
        Ok(Scenario {
            name: self.name.clone(),
            spec,
            posterior: self.controller.posterior,
            plan,
            steps: self.run.steps,
            seeds: self.run.seeds.clone(),
            repetitions: self.run.repetitions,
            experiment: self.experiment,
            build,
        })
    }

    fn type_kind<T: Prob>(
        &self,
        def: &TypeDef,
        player: usize,
    ) -> Result<TypeKind<T>, ScenarioError> {
        let actions = &self.players[player].actions;
        let action = |a: &String| lookup(actions, a, "action");
        Ok(match &def.body {
            TypeBody::Fixed { probs } => TypeKind::Fixed(parse_all(probs)?),
            TypeBody::Table { probs } => {
                let mut rows = vec![None; self.states.len()];
                for (s, row) in probs {
                    rows[lookup(&self.states, s, "state")?] = Some(parse_all(row)?);
                }
                let mut table = Vec::with_capacity(rows.len());
                for (s, row) in rows.into_iter().enumerate() {
                    table.push(row.ok_or_else(|| {
                        invalid(format!(
                            "type '{}' has no row for state '{}'",
                            def.name, self.states[s]
                        ))
                    })?);
                }
                TypeKind::Table(table)
            }
            TypeBody::Periodic { actions: seq } => {
                TypeKind::Periodic(seq.iter().map(action).collect::<Result<_, _>>()?)
            }
            TypeBody::Sequence { actions: seq } => {
                TypeKind::Sequence(seq.iter().map(action).collect::<Result<_, _>>()?)
            }
            TypeBody::EpsilonGreedy { greedy, epsilon } => TypeKind::EpsilonGreedy {
                greedy: action(greedy)?,
                epsilon: epsilon.parse()?,
            },
            TypeBody::Learner {
                payoff_seed,
                epsilon,
                learning_rate,
                initial_value,
                layout_seed,
                layout_index,
            } => {
                let mut config = RlTypeConfig::new(*payoff_seed, epsilon.schedule()?);
                if let Some(rate) = learning_rate {
                    config.learning_rate = *rate;
                }
                if let Some(v) = initial_value {
                    config.initial_value = *v;
                }
                if let Some(seed) = layout_seed {
                    config.layout = PayoffLayout::Separated {
                        layout_seed: *seed,
                        index: layout_index.unwrap_or(0),
                    };
                }
                TypeKind::Learner(Box::new(Learner::new(
                    config,
                    self.states.len(),
                    actions.len(),
                )))
            }
        })
    }
}

/// Reads and resolves a scenario file.
pub fn load_scenario<T: Prob>(path: &Path) -> Result<Scenario<T>, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    ScenarioFile::from_json(&text)?.resolve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    const MATCHING: &str = r#"{
        "name": "matching",
        "states": ["s0", "done"],
        "terminal": ["done"],
        "players": [
            {"name": "hba", "actions": ["L", "R"]},
            {"name": "j", "actions": ["L", "R"]}
        ],
        "controlled": "hba",
        "transitions": [
            {"from": "s0", "joint": ["L", "L"], "to": {"done": 1}},
            {"from": "s0", "joint": ["R", "R"], "to": {"done": "1/1"}},
            {"from": "*", "joint": ["*", "*"], "to": {"s0": 1}}
        ],
        "types": [
            {"name": "theta_LR", "player": "j", "kind": "periodic", "actions": ["L", "R"]},
            {"name": "theta_RL", "player": "j", "kind": "periodic", "actions": ["R", "L"]}
        ],
        "latent": {"j": ["theta_LR"]},
        "delta": [{"profile": ["theta_LR"], "p": 1}],
        "user_types": {"j": {"types": ["theta_RL"]}},
        "positive_priors": true,
        "controller": {"posterior": "product", "gamma": "9/10", "horizon": 3},
        "run": {"steps": 50, "seeds": [1, 2]},
        "experiment": "verify"
    }"#;

    #[test]
    fn matching_scenario_resolves() {
        let sc: Scenario<Rational> = ScenarioFile::from_json(MATCHING)
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(sc.spec.n_states(), 2);
        assert_eq!(sc.plan.gamma, Rational::from_ratio(9, 10));
        assert_eq!(sc.experiment, ExperimentKind::Verify);
        assert_eq!(sc.seeds, vec![1, 2]);
        let ll = JointAction(vec![0, 0]);
        let lr = JointAction(vec![0, 1]);
        assert_eq!(
            sc.spec.transition(0, &ll),
            &[(1, Rational::from_ratio(1, 1))]
        );
        assert_eq!(
            sc.spec.transition(0, &lr),
            &[(0, Rational::from_ratio(1, 1))]
        );
    }

    #[test]
    fn float_resolution_keeps_structure() {
        let sc: Scenario<f64> = ScenarioFile::from_json(MATCHING)
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(sc.spec.n_actions(1), 2);
        assert!(sc.spec.is_terminal(1));
    }

    #[test]
    fn unmatched_joint_action_is_an_error() {
        let text = MATCHING.replace(
            r#"{"from": "*", "joint": ["*", "*"], "to": {"s0": 1}}"#,
            r#"{"from": "s0", "joint": ["L", "R"], "to": {"s0": 1}}"#,
        );
        let err = ScenarioFile::from_json(&text)
            .unwrap()
            .resolve::<f64>()
            .unwrap_err();
        assert!(err.to_string().contains("no transition rule"), "{err}");
    }

    #[test]
    fn bad_probability_and_unknown_names() {
        let text = MATCHING.replace(r#""p": 1"#, r#""p": "one""#);
        assert!(matches!(
            ScenarioFile::from_json(&text).unwrap().resolve::<f64>(),
            Err(ScenarioError::BadProbability(_))
        ));
        let text = MATCHING.replace(r#""types": ["theta_RL"]"#, r#""types": ["theta_X"]"#);
        assert!(ScenarioFile::from_json(&text)
            .unwrap()
            .resolve::<f64>()
            .is_err());
        let text = MATCHING.replace(r#""types": ["theta_RL"]"#, r#""types": []"#);
        assert!(ScenarioFile::from_json(&text)
            .unwrap()
            .resolve::<f64>()
            .is_err());
    }

    #[test]
    fn figure1_scenario_needs_no_game() {
        let text = r#"{"experiment": "figure1", "figure1": {"steps": 50, "game": {"n_states": 5}}, "run": {"seeds": [3]}}"#;
        let file = ScenarioFile::from_json(text).unwrap();
        let config = file.figure1_config().unwrap();
        assert_eq!(config.steps, 50);
        assert_eq!(config.game.n_states, 5);
        assert_eq!(config.game.n_actions, 10);
        assert!(file.resolve::<f64>().is_err());
        assert!(ScenarioFile::from_json(MATCHING)
            .unwrap()
            .figure1_config()
            .is_none());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MATCHING.replace(r#""positive_priors": true"#, r#""positive_prior": true"#);
        assert!(ScenarioFile::from_json(&text).is_err());
    }
}
