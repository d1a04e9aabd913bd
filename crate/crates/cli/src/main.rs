use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hba_core::beliefs::PosteriorKind;
use hba_core::experiments::{
    emit_plot_data, posterior_trace, run_example, run_figure1, ExampleName, Figure1Config,
    Figure1Summary,
};
use hba_core::planner::{HbaController, PlanConfig};
use hba_core::scenario::{ExperimentKind, Scenario, ScenarioFile};
use hba_core::sim::{episode_csv, run_episode};
use hba_core::verifier::{
    build_pair, check_bounded_reach, check_theorem_premises, check_unbounded_reach,
    detect_critical, verify_property4, Comparator, ProcessChain,
};
use hba_core::{Prob, Rational};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "hba",
    version,
    about = "Type-based ad hoc coordination: simulation, posterior diagnostics and termination checks"
)]
struct Cli {
    /// Write outputs as files into this directory instead of printing them.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment declared in a scenario file.
    Simulate(SimulateArgs),
    /// Run a canonical example and check its documented outcome.
    Example {
        /// ex1 .. ex6
        name: ExampleName,
        #[arg(long, default_value = "sum")]
        posterior: PosteriorKind,
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Long posterior run in a random game with learning types.
    Figure1 {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3000)]
        steps: usize,
        /// Number of consecutive seeds to run, starting at `--seed`.
        #[arg(long, default_value_t = 1)]
        panel: u64,
        #[arg(long, default_value_t = 10)]
        stride: usize,
    },
    /// Termination checks on chain files or scenario-induced chains.
    Verify {
        #[command(subcommand)]
        check: VerifyCommand,
    },
    /// Downsample a posterior trace CSV to `t error` columns.
    Plot {
        trace: PathBuf,
        #[arg(long, default_value_t = 10)]
        stride: usize,
    },
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Probabilistic bisimulation between two chains.
    Bisim {
        x: PathBuf,
        y: PathBuf,
        /// Horizon for comparing bounded termination probabilities.
        #[arg(long, default_value_t = 50)]
        t_max: usize,
        #[arg(long)]
        exact: bool,
    },
    /// Bounded (`--t`) or unbounded reachability of `term`.
    Reach {
        chain: PathBuf,
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        p: String,
        #[arg(long, default_value = ">=")]
        cmp: Comparator,
        #[arg(long)]
        exact: bool,
    },
    /// Criticality of the user type spaces of a scenario.
    Critical {
        scenario: PathBuf,
        #[arg(long)]
        posterior: Option<PosteriorKind>,
        #[arg(long)]
        exact: bool,
    },
    /// Premise checks for the termination guarantees of a scenario.
    Premises {
        scenario: PathBuf,
        #[arg(long)]
        posterior: Option<PosteriorKind>,
        #[arg(long)]
        exact: bool,
    },
    /// Export the ideal and user chains of a scenario as edge lists.
    Build {
        scenario: PathBuf,
        #[arg(long)]
        posterior: Option<PosteriorKind>,
        #[arg(long)]
        exact: bool,
    },
}

/// Collects named outputs and writes them to a directory or stdout.
struct Sink {
    dir: Option<PathBuf>,
    printed: usize,
}

impl Sink {
    fn new(dir: Option<PathBuf>) -> Result<Self> {
        if let Some(dir) = &dir {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
        Ok(Self { dir, printed: 0 })
    }

    fn emit(&mut self, name: &str, content: &str) -> Result<()> {
        match &self.dir {
            Some(dir) => {
                let path = dir.join(name);
                fs::write(&path, content)
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
            None => {
                if self.printed > 0 {
                    println!();
                }
                println!("==> {name} <==");
                print!("{content}");
                if !content.ends_with('\n') {
                    println!();
                }
                self.printed += 1;
            }
        }
        Ok(())
    }

    fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.emit(name, &text)
    }
}

fn read_scenario(path: &Path) -> Result<ScenarioFile> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    ScenarioFile::from_json(&text).with_context(|| format!("invalid scenario {}", path.display()))
}

fn read_chain<T: Prob>(path: &Path) -> Result<ProcessChain<T>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    ProcessChain::parse_edge_list(&text)
        .with_context(|| format!("invalid chain {}", path.display()))
}

fn parse_p<T: Prob>(text: &str) -> Result<T> {
    match T::parse_prob(text) {
        Some(p) if p >= T::zero() && p <= T::one() => Ok(p),
        _ => bail!("probability must be in [0, 1], got '{text}'"),
    }
}

#[derive(Args)]
struct SimulateArgs {
    scenario: PathBuf,
    /// Replaces the scenario's seed list by this single seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    posterior: Option<PosteriorKind>,
    #[arg(long)]
    steps: Option<usize>,
    /// Add the per-step action values to episode logs.
    #[arg(long)]
    trace_plan: bool,
}

#[derive(Serialize)]
struct EpisodeSummary {
    seed: u64,
    repetition: u64,
    steps: usize,
    terminated: bool,
    total_reward: f64,
}

fn simulate(sink: &mut Sink, args: SimulateArgs) -> Result<()> {
    let SimulateArgs {
        scenario,
        seed,
        gamma,
        horizon,
        posterior,
        steps,
        trace_plan,
    } = args;
    let path = scenario.as_path();
    let file = read_scenario(path)?;
    let seeds = seed.map_or_else(|| file.run.seeds.clone(), |s| vec![s]);
    if let Some(mut config) = file.figure1_config() {
        if let Some(steps) = steps {
            config.steps = steps;
        }
        if let Some(kind) = posterior {
            config.posterior = kind;
        }
        if let Some(h) = horizon {
            config.horizon = h;
        }
        return figure1_panel(sink, &config, &seeds, 10);
    }
    let mut sc: Scenario<f64> = file
        .resolve()
        .with_context(|| format!("invalid scenario {}", path.display()))?;
    if let Some(g) = gamma {
        sc.plan = PlanConfig::new(parse_p(&g)?, sc.plan.horizon)?;
    }
    if let Some(h) = horizon {
        sc.plan = PlanConfig::new(sc.plan.gamma, h)?;
    }
    if let Some(kind) = posterior {
        sc.posterior = kind;
    }
    if let Some(steps) = steps {
        sc.steps = steps;
    }
    let stem = if sc.name.is_empty() {
        "scenario".to_string()
    } else {
        sc.name.clone()
    };
    match sc.experiment {
        ExperimentKind::Episode => {
            let mut summaries = Vec::new();
            for &seed in &seeds {
                for rep in 0..sc.repetitions {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(rep);
                    let mut hba = HbaController::new(&sc.spec, sc.posterior, sc.plan.clone());
                    let episode = run_episode(&sc.spec, &mut hba, sc.steps, &mut rng);
                    sink.emit(
                        &format!("{stem}_seed{seed}_rep{rep}.csv"),
                        &episode_csv(&sc.spec, &episode, trace_plan),
                    )?;
                    summaries.push(EpisodeSummary {
                        seed,
                        repetition: rep,
                        steps: episode.history.len(),
                        terminated: episode.terminated,
                        total_reward: episode.steps.iter().map(|s| s.reward).sum(),
                    });
                }
            }
            sink.json(&format!("{stem}_summary.json"), &summaries)
        }
        ExperimentKind::PosteriorTrace => {
            for &seed in &seeds {
                for rep in 0..sc.repetitions {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(rep);
                    let (_, trace) = posterior_trace(
                        &sc.spec,
                        sc.posterior,
                        sc.plan.clone(),
                        sc.steps,
                        &mut rng,
                    );
                    sink.emit(
                        &format!("{stem}_trace_seed{seed}_rep{rep}.csv"),
                        &trace.to_csv(),
                    )?;
                }
            }
            Ok(())
        }
        ExperimentKind::Verify => {
            let file_kind = sc.posterior;
            verify_scenario_report(sink, &file, &stem, Some(file_kind), false)
        }
        ExperimentKind::Figure1 => unreachable!("handled above"),
    }
}

#[derive(Serialize)]
struct PanelSummary {
    runs: Vec<Figure1Summary>,
    converged: usize,
    total: usize,
}

fn figure1_panel(
    sink: &mut Sink,
    config: &Figure1Config,
    seeds: &[u64],
    stride: usize,
) -> Result<()> {
    let mut runs = Vec::new();
    for &seed in seeds {
        let (trace, summary) = run_figure1(config, seed)?;
        let csv = trace.to_csv();
        sink.emit(&format!("figure1_seed{seed}.csv"), &csv)?;
        sink.emit(
            &format!("figure1_seed{seed}.dat"),
            &emit_plot_data(&csv, stride)?,
        )?;
        runs.push(summary);
    }
    let converged = runs.iter().filter(|r| r.converged).count();
    sink.json(
        "figure1_summary.json",
        &PanelSummary {
            total: runs.len(),
            converged,
            runs,
        },
    )
}

#[derive(Serialize)]
struct VerifyReport<R: Serialize> {
    scenario: String,
    posterior: PosteriorKind,
    x_nodes: usize,
    y_nodes: usize,
    bisimilar: bool,
    result: R,
}

fn scenario_chains<T: Prob>(
    file: &ScenarioFile,
    posterior: Option<PosteriorKind>,
) -> Result<(Scenario<T>, ProcessChain<T>, ProcessChain<T>)> {
    let mut sc: Scenario<T> = file.resolve()?;
    if let Some(kind) = posterior {
        sc.posterior = kind;
    }
    let (x, y) = build_pair(&sc.spec, sc.posterior, &sc.plan, &sc.build)?;
    Ok((sc, x, y))
}

fn verify_scenario_report(
    sink: &mut Sink,
    file: &ScenarioFile,
    stem: &str,
    posterior: Option<PosteriorKind>,
    exact: bool,
) -> Result<()> {
    fn run<T: Prob>(
        sink: &mut Sink,
        file: &ScenarioFile,
        stem: &str,
        posterior: Option<PosteriorKind>,
    ) -> Result<()> {
        let (sc, x, y) = scenario_chains::<T>(file, posterior)?;
        sink.emit(&format!("{stem}_x.chain"), &x.to_edge_list())?;
        sink.emit(&format!("{stem}_y.chain"), &y.to_edge_list())?;
        let premises = check_theorem_premises(&x, &y)?;
        let p4 = verify_property4(&x, &y, 50);
        sink.json(
            &format!("{stem}_verify.json"),
            &VerifyReport {
                scenario: sc.name,
                posterior: sc.posterior,
                x_nodes: x.n_nodes(),
                y_nodes: y.n_nodes(),
                bisimilar: p4.bisimilar,
                result: (premises, p4),
            },
        )
    }
    if exact {
        run::<Rational>(sink, file, stem, posterior)
    } else {
        run::<f64>(sink, file, stem, posterior)
    }
}

#[derive(Serialize)]
struct ReachReport {
    steps: Option<usize>,
    comparator: String,
    threshold: String,
    initial_probability: String,
    verdict: bool,
    /// Per node, in node order.
    probabilities: Vec<String>,
}

fn scenario_stem(file: &ScenarioFile) -> String {
    if file.name.is_empty() {
        "scenario".into()
    } else {
        file.name.clone()
    }
}

fn verify(sink: &mut Sink, check: VerifyCommand) -> Result<bool> {
    match check {
        VerifyCommand::Bisim { x, y, t_max, exact } => {
            fn run<T: Prob>(sink: &mut Sink, x: &Path, y: &Path, t_max: usize) -> Result<bool> {
                let report = verify_property4(&read_chain::<T>(x)?, &read_chain::<T>(y)?, t_max);
                sink.json("bisim.json", &report)?;
                Ok(report.bisimilar)
            }
            if exact {
                run::<Rational>(sink, &x, &y, t_max)
            } else {
                run::<f64>(sink, &x, &y, t_max)
            }
        }
        VerifyCommand::Reach {
            chain,
            t,
            p,
            cmp,
            exact,
        } => {
            fn run<T: Prob>(
                sink: &mut Sink,
                chain: &Path,
                t: Option<usize>,
                p: &str,
                cmp: Comparator,
            ) -> Result<bool> {
                let chain = read_chain::<T>(chain)?;
                let p: T = parse_p(p)?;
                let result = match t {
                    Some(t) => check_bounded_reach(&chain, t, p, cmp),
                    None => check_unbounded_reach(&chain, p, cmp),
                };
                let report = ReachReport {
                    steps: result.steps,
                    comparator: result.comparator.to_string(),
                    threshold: result.threshold.to_string(),
                    initial_probability: result.initial_probability(&chain).to_string(),
                    verdict: result.verdict,
                    probabilities: result
                        .probabilities
                        .iter()
                        .map(ToString::to_string)
                        .collect(),
                };
                sink.json("reach.json", &report)?;
                Ok(result.verdict)
            }
            if exact {
                run::<Rational>(sink, &chain, t, &p, cmp)
            } else {
                run::<f64>(sink, &chain, t, &p, cmp)
            }
        }
        VerifyCommand::Critical {
            scenario,
            posterior,
            exact,
        } => {
            fn run<T: Prob>(
                sink: &mut Sink,
                file: &ScenarioFile,
                posterior: Option<PosteriorKind>,
            ) -> Result<bool> {
                let (_, _, y) = scenario_chains::<T>(file, posterior)?;
                let report = detect_critical(&y)?;
                sink.json(&format!("{}_critical.json", scenario_stem(file)), &report)?;
                Ok(!report.critical)
            }
            let file = read_scenario(&scenario)?;
            if exact {
                run::<Rational>(sink, &file, posterior)
            } else {
                run::<f64>(sink, &file, posterior)
            }
        }
        VerifyCommand::Premises {
            scenario,
            posterior,
            exact,
        } => {
            let file = read_scenario(&scenario)?;
            verify_scenario_report(sink, &file, &scenario_stem(&file), posterior, exact)?;
            Ok(true)
        }
        VerifyCommand::Build {
            scenario,
            posterior,
            exact,
        } => {
            fn run<T: Prob>(
                sink: &mut Sink,
                file: &ScenarioFile,
                posterior: Option<PosteriorKind>,
            ) -> Result<bool> {
                let (_, x, y) = scenario_chains::<T>(file, posterior)?;
                let stem = scenario_stem(file);
                sink.emit(&format!("{stem}_x.chain"), &x.to_edge_list())?;
                sink.emit(&format!("{stem}_y.chain"), &y.to_edge_list())?;
                Ok(true)
            }
            let file = read_scenario(&scenario)?;
            if exact {
                run::<Rational>(sink, &file, posterior)
            } else {
                run::<f64>(sink, &file, posterior)
            }
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let mut sink = Sink::new(cli.out)?;
    match cli.command {
        Command::Simulate(args) => {
            simulate(&mut sink, args)?;
            Ok(true)
        }
        Command::Example {
            name,
            posterior,
            steps,
            seed,
        } => {
            let report = run_example(name, posterior, steps, seed)?;
            sink.json(&format!("{name}_{posterior}.json"), &report)?;
            if !report.passed {
                for check in report.checks.iter().filter(|c| !c.passed) {
                    eprintln!("check failed: {} ({})", check.name, check.detail);
                }
                for line in &report.excerpt {
                    eprintln!("  {line}");
                }
            }
            Ok(report.passed)
        }
        Command::Figure1 {
            seed,
            steps,
            panel,
            stride,
        } => {
            let config = Figure1Config {
                steps,
                ..Figure1Config::default()
            };
            let seeds: Vec<u64> = (seed..seed + panel.max(1)).collect();
            figure1_panel(&mut sink, &config, &seeds, stride)?;
            Ok(true)
        }
        Command::Verify { check } => verify(&mut sink, check),
        Command::Plot { trace, stride } => {
            let csv = fs::read_to_string(&trace)
                .with_context(|| format!("cannot read {}", trace.display()))?;
            let data = emit_plot_data(&csv, stride)
                .with_context(|| format!("invalid trace {}", trace.display()))?;
            let stem = trace
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("trace");
            sink.emit(&format!("{stem}.dat"), &data)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
