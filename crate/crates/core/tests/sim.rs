use hba_core::beliefs::PosteriorKind;
use hba_core::fixtures::{matching_game, MatchingVariant};
use hba_core::planner::{HbaController, PlanConfig};
use hba_core::sim::{episode_csv, run_episode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn csv(seed: u64, with_plan: bool) -> String {
    let (spec, _) = matching_game::<f64>(MatchingVariant::Uncritical);
    let mut hba = HbaController::new(&spec, PosteriorKind::Sum, PlanConfig::new(0.9, 3).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ep = run_episode(&spec, &mut hba, 100, &mut rng);
    episode_csv(&spec, &ep, with_plan)
}

#[test]
fn episodes_are_deterministic_per_seed() {
    for seed in 0..5 {
        assert_eq!(csv(seed, true), csv(seed, true));
    }
}

#[test]
fn csv_header_and_plan_column() {
    let plain = csv(3, false);
    let mut lines = plain.lines();
    assert_eq!(
        lines.next(),
        Some("t,state,joint_action,sampled_types,reward")
    );
    assert!(lines.all(|l| l.split(',').count() == 5));

    let planned = csv(3, true);
    let mut lines = planned.lines();
    assert_eq!(
        lines.next(),
        Some("t,state,joint_action,sampled_types,reward,plan")
    );
    for line in lines {
        let plan = line.rsplit(',').next().unwrap();
        assert!(plan.starts_with("L=") && plan.contains(";R="), "{line}");
    }
}

#[test]
fn terminating_episode_ends_on_terminal_state() {
    let (spec, _) = matching_game::<f64>(MatchingVariant::Uncritical);
    let mut hba = HbaController::new(
        &spec,
        PosteriorKind::Product,
        PlanConfig::new(0.9, 3).unwrap(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ep = run_episode(&spec, &mut hba, 100, &mut rng);
    assert!(ep.terminated);
    assert!(spec.is_terminal(ep.history.current()));
    assert_eq!(ep.steps.last().unwrap().reward, 1.0);
}
