use proptest::prelude::*;

use mecache::harness::{run_single, DEFAULT_BNB_CAP};
use mecache::schemes::{popularity_caching, popularity_scores, relaxed_value, run_scheme, SchemeConfig};
use mecache::subproblem::{assemble, solve, SolveStatus, DEFAULT_TOL};
use mecache::{generate, CachePlacement, GenConfig, SchemeId};

fn config(seed: u64, wds: usize, tasks: usize, slots: usize, capacity_kbits: f64) -> GenConfig {
    GenConfig {
        seed,
        num_wds: wds,
        num_tasks: tasks,
        caching_slots: 2,
        slots,
        noise_power: 1e-15,
        capacity: capacity_kbits * 1e3,
        ..GenConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn popularity_respects_capacity(seed in any::<u64>(), wds in 1usize..4, tasks in 1usize..7, cap in 0.0f64..20.0) {
        let s = generate(&config(seed, wds, tasks, 5, cap)).unwrap();
        let scores = popularity_scores(&s.arrivals, tasks).unwrap();
        prop_assert_eq!(scores.iter().sum::<usize>(), wds * 5);
        let r = popularity_caching(&s, &SchemeConfig::default()).unwrap();
        prop_assert!(r.placement.cached_bits(&s.library) <= s.library.capacity);
    }

    #[test]
    fn relaxation_lower_bounds_every_scheme(seed in any::<u64>(), tasks in 2usize..5, cap in 0.0f64..12.0) {
        let s = generate(&config(seed, 2, tasks, 4, cap)).unwrap();
        let cfg = SchemeConfig::default();
        let root = relaxed_value(&s, DEFAULT_TOL).unwrap();
        for id in [SchemeId::Bnb, SchemeId::Popularity, SchemeId::Relaxation, SchemeId::NoCaching] {
            let r = run_scheme(&s, id, &cfg).unwrap();
            prop_assert!(root <= r.objective + 1e-9, "{} {} < {}", id, r.objective, root);
        }
    }
}

#[test]
fn single_run_matches_enumeration() {
    let s = generate(&config(77, 3, 4, 6, 8.0)).unwrap();
    let mut oracle = f64::INFINITY;
    for mask in 0u32..16 {
        let cached: Vec<bool> = (0..4).map(|i| mask >> i & 1 == 1).collect();
        let p = CachePlacement::from_cached(&cached);
        if p.cached_bits(&s.library) <= s.library.capacity {
            let sol = solve(&assemble(&s, &p).unwrap(), DEFAULT_TOL).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal);
            oracle = oracle.min(sol.objective);
        }
    }
    let (r, text) = run_single(&s, SchemeId::Bnb, &SchemeConfig::default(), DEFAULT_BNB_CAP).unwrap();
    assert!((r.objective - oracle).abs() <= 1e-6, "{} vs {oracle}", r.objective);
    assert!(text.contains(&format!("{:.9e}", r.objective)));
}

#[test]
fn nothing_to_execute_costs_nothing() {
    let mut s = generate(&config(5, 2, 3, 4, 100.0)).unwrap();
    s.library.sizes.iter_mut().for_each(|d| *d = 0.0);
    let (r, _) = run_single(&s, SchemeId::Popularity, &SchemeConfig::default(), DEFAULT_BNB_CAP).unwrap();
    assert_eq!(r.objective, 0.0);
}
