use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shearlab::genflow::{
    action, braid_word, free_reduce, minimize_action, BraidRecord, CellGrid, DiscreteFlowProblem,
    Generator, Mode, TrajectoryEnsemble,
};
use shearlab::StepProfile;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Minimum action over every choice of interior slices, evaluated through
/// the continuous action of the assembled ensemble.
fn brute_force(grid: &CellGrid, endpoint: &[usize], interior: usize, horizon: f64) -> f64 {
    let n = grid.cells();
    let perms = permutations(n);
    let total = perms.len().pow(interior as u32);
    let mut best = f64::INFINITY;
    for mut code in 0..total {
        let mut cells = vec![(0..n).collect::<Vec<_>>()];
        for _ in 0..interior {
            cells.push(perms[code % perms.len()].clone());
            code /= perms.len();
        }
        cells.push(endpoint.to_vec());
        let e = TrajectoryEnsemble::from_cells(grid, &cells);
        best = best.min(action(&e, horizon));
    }
    best
}

#[test]
fn both_modes_match_brute_force_on_small_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..30 {
        let (n1, n2) = *[(2, 1), (1, 3), (2, 2), (4, 1), (1, 4)]
            .choose(&mut rng)
            .unwrap();
        let grid = CellGrid::new(n1, n2, rng.gen_range(0.5..3.0)).unwrap();
        let mut endpoint: Vec<usize> = (0..grid.cells()).collect();
        endpoint.shuffle(&mut rng);
        let interior = rng.gen_range(0..=2);
        let horizon = rng.gen_range(0.5..2.0);
        let want = brute_force(&grid, &endpoint, interior, horizon);
        let problem = DiscreteFlowProblem::new(grid, endpoint, interior, horizon).unwrap();
        let exact = minimize_action(&problem, Mode::Exact).unwrap();
        let heur = minimize_action(&problem, Mode::heuristic(case)).unwrap();
        assert!((exact.action - want).abs() <= 1e-9 * (1.0 + want), "{case}");
        assert!((heur.action - want).abs() <= 1e-9 * (1.0 + want), "{case}");
        assert!((action(&exact.ensemble, horizon) - exact.action).abs() <= 1e-9 * (1.0 + want));
    }
}

#[test]
fn parallel_slabs_never_braid() {
    let u = StepProfile::new(vec![0.0, 0.3, 0.7, 1.0], vec![1.0, -0.5, 0.25]).unwrap();
    for (n1, n2) in [(3, 3), (4, 2), (1, 5)] {
        let grid = CellGrid::new(n1, n2, 2.0).unwrap();
        let e = TrajectoryEnsemble::parallel_flow(&grid, &u, 1.7, 6);
        // Strands in one slab share a slope; different slabs overtake.
        for &v in u.values() {
            let slab: Vec<usize> = (0..grid.cells())
                .filter(|&k| u.value_at(grid.center(k)[1]) == v)
                .collect();
            if slab.is_empty() {
                continue;
            }
            let rec = braid_word(&e.select(&slab)).unwrap();
            assert!(rec.word.is_empty(), "{:?}", rec.word);
            assert!(rec.winding.iter().flatten().all(|w| w.abs() < 1e-12));
        }
    }
}

fn word() -> impl Strategy<Value = (usize, Vec<Generator>)> {
    (2usize..7).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((1..n, any::<bool>()), 0..40)
                .prop_map(|w| w.into_iter().map(|(i, s)| Generator::new(i, s)).collect()),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn free_reduction_keeps_permutation_and_winding((n, w) in word()) {
        let a = BraidRecord::from_word(&w, n);
        let r = free_reduce(&w);
        let b = BraidRecord::from_word(&r, n);
        prop_assert_eq!(&a.permutation, &b.permutation);
        prop_assert_eq!(&a.winding, &b.winding);
        prop_assert_eq!(free_reduce(&r), r);
    }
}
