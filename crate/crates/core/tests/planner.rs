use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shearlab::planner::{plan, random_profile, random_reachable_target, PlanError, PlannerConfig};
use shearlab::{Move, StepProfile};

fn halves(a: f64, b: f64) -> StepProfile {
    StepProfile::new(vec![0.0, 0.5, 1.0], vec![a, b]).unwrap()
}

#[test]
fn generated_targets_are_reached_with_conserving_snapshots() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut converged = 0;
    for seed in 0..60 {
        let k = rng.gen_range(1..=8);
        let source = random_profile(k, &mut rng);
        let (target, _) = random_reachable_target(&source, rng.gen_range(1..=12), seed);
        let cfg = PlannerConfig {
            seed,
            record_snapshots: true,
            ..PlannerConfig::default()
        };
        let out = plan(&source, &target, &cfg).unwrap();
        converged += usize::from(out.converged);
        let snaps = out.intermediate_profiles.as_ref().unwrap();
        assert_eq!(snaps.len(), out.moves.len() + 1);
        for s in snaps {
            assert!((s.momentum() - source.momentum()).abs() <= 1e-10);
            assert!((s.energy() - source.energy()).abs() <= 1e-10);
        }
        let replayed = out.replay(&source).unwrap();
        let err = replayed.last().unwrap().l2_distance(&target);
        assert!((err - out.achieved_error).abs() <= 1e-12);
    }
    assert!(converged >= 57, "{converged}/60");
}

#[test]
fn plans_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let source = random_profile(6, &mut rng);
    let (target, _) = random_reachable_target(&source, 10, 11);
    let cfg = PlannerConfig::default();
    assert_eq!(
        plan(&source, &target, &cfg).unwrap(),
        plan(&source, &target, &cfg).unwrap()
    );
}

#[test]
fn swap_fixture_is_one_transpose() {
    let out = plan(
        &halves(1.0, -1.0),
        &halves(-1.0, 1.0),
        &PlannerConfig::default(),
    )
    .unwrap();
    assert_eq!(out.moves, vec![Move::Transpose { k: 1 }]);
    assert!(out.converged && out.achieved_error == 0.0);
}

#[test]
fn unequal_invariants_are_rejected() {
    let err = plan(
        &halves(1.0, -1.0),
        &halves(1.0, 1.0),
        &PlannerConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, PlanError::MomentumMismatch(_)));
    let err = plan(
        &halves(1.0, -1.0),
        &halves(2.0, -2.0),
        &PlannerConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, PlanError::EnergyMismatch(_)));
}
