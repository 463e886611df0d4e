mod common;
mod oracles;

use common::{fixture, mc_se, mean};
use oracles::{assert_completes, pool_oracle};
use nrba::panel::{load_panel_str, simulate_cohort, CohortScenario, Schema, VarRef};
use nrba::imputation::{apply_offset, donor_sets, impute_item_nonresponse, pmm_draw, pool, sequential_mi, ImputerSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

#[test]
fn nothing_missing_is_identity() {
    let sc = CohortScenario { n: 200, item_missing_rate: 0.0, seed: 9, ..CohortScenario::default() };
    let (d, _) = simulate_cohort(&sc).unwrap();
    assert_eq!(impute_item_nonresponse(&d, &ImputerSpec::default(), 1).unwrap(), d);
}

#[test]
fn perfectly_predicted_binary_follows_its_twin() {
    let schema = Schema::from_json_str(
        r#"{"waves": 1, "variables": [
            {"name": "a", "kind": "binary", "role": "time_invariant"},
            {"name": "b", "kind": "binary", "role": "time_invariant"},
            {"name": "y", "role": "outcome"},
            {"name": "cl", "role": "cluster_id"},
            {"name": "w", "role": "base_weight"}]}"#,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut text = schema.csv_columns().join(",") + "\n";
    let mut target_a = 0;
    for i in 0..60 {
        let a = i % 2;
        let y0: f64 = rng.random_range(0.0..10.0);
        let b = if i == 7 { String::new() } else { a.to_string() };
        if i == 7 {
            target_a = a;
        }
        text += &format!("u{i},{a},{b},{y0:.3},{:.3},c{i},1\n", y0 + 1.0);
    }
    let d = load_panel_str(&text, &schema).unwrap();
    let b = d.var("b").unwrap();
    let hits = (0..100u64)
        .filter(|&seed| {
            let out = impute_item_nonresponse(&d, &ImputerSpec::default(), seed).unwrap();
            out.get(VarRef { var: b, wave: 0 }, 7) == target_a as f64
        })
        .count();
    assert!(hits >= 95, "{hits} of 100");
}

#[test]
fn mcar_holes_leave_the_mean_unbiased() {
    let sc = CohortScenario { n: 400, item_missing_rate: 0.0, seed: 17, ..CohortScenario::default() };
    let (full, _) = simulate_cohort(&sc).unwrap();
    let pnw = VarRef { var: full.var("pnw").unwrap(), wave: 0 };
    let truth = mean(full.column(pnw));
    let mut diffs = Vec::new();
    for seed in 0..100u64 {
        let mut d = full.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for u in 0..d.n() {
            if rng.random_bool(0.05) {
                d.column_mut(pnw)[u] = f64::NAN;
            }
        }
        let out = impute_item_nonresponse(&d, &ImputerSpec::default(), seed).unwrap();
        diffs.push(mean(out.column(pnw)) - truth);
    }
    assert!(mean(&diffs).abs() < 3.0 * mc_se(&diffs), "bias {} MC SE {}", mean(&diffs), mc_se(&diffs));
}

#[test]
fn zero_offsets_are_plain_mar_imputation() {
    let d = fixture();
    let spec = ImputerSpec::default();
    let plain = sequential_mi(&d, &spec, 2, &[], 31).unwrap();
    let zero = sequential_mi(&d, &spec, 2, &[0.0; 5], 31).unwrap();
    assert_eq!(plain.copies, zero.copies);
}

#[test]
fn five_copies_keep_observed_cells() {
    let d = fixture();
    let set = sequential_mi(&d, &ImputerSpec::default(), 5, &[], 7).unwrap();
    assert_eq!(set.m(), 5);
    for copy in &set.copies {
        assert_completes(&d, copy);
    }
    // Replay with the same seed.
    assert_eq!(set.copies, sequential_mi(&d, &ImputerSpec::default(), 5, &[], 7).unwrap().copies);
}

#[test]
fn offset_shift_is_exact_at_the_dropout_wave() {
    let d = fixture();
    let spec = ImputerSpec::default();
    let hi = sequential_mi(&d, &spec, 2, &[-0.8; 5], 13).unwrap();
    let lo = sequential_mi(&d, &spec, 2, &[-1.2; 5], 13).unwrap();
    let y = d.outcome_var();
    let race = d.var("race").unwrap();
    let levels = d.kind(race).levels().unwrap().to_vec();
    let mut checked = 0;
    for c in 0..2 {
        for u in 0..d.n() {
            let Some(t) = d.dropout_wave(u) else { continue };
            let group = &levels[d.get(VarRef { var: race, wave: 0 }, u) as usize];
            let sigma = lo.sigma.iter().find(|s| s.copy == c && s.wave == t && s.group == *group).unwrap().sd;
            let r = VarRef { var: y, wave: t };
            let gap = hi.copies[c].get(r, u) - lo.copies[c].get(r, u);
            assert!((gap - 0.4 * sigma).abs() < 1e-9, "unit {u}: {gap} vs {}", 0.4 * sigma);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn offset_arithmetic() {
    assert_eq!(apply_offset(3.5, 0.0, 10.0), 3.5);
    assert!((apply_offset(50.0, -1.2, 10.0) - 38.0).abs() < 1e-12);
    for k in [-0.8, -1.2, -1.6] {
        assert!((apply_offset(0.0, k, 2.0) - 2.0 * k).abs() < 1e-15);
    }
}

#[test]
fn pooling_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let m = rng.random_range(2..12);
        let q: Vec<f64> = (0..m).map(|_| rng.random_range(-10.0..10.0)).collect();
        let u: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..30.0)).collect();
        let p = pool(&q, &u).unwrap();
        let (qbar, ubar, b, t, df) = pool_oracle(&q, &u);
        for (got, want) in [(p.estimate, qbar), (p.within, ubar), (p.between, b), (p.total, t), (p.se, t.sqrt())] {
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
        }
        assert!((p.df - df).abs() <= 1e-12 * df);
        if df <= 1e4 {
            let crit = StudentsT::new(0.0, 1.0, df).unwrap().inverse_cdf(0.975);
            assert!((p.upper - (qbar + crit * t.sqrt())).abs() < 1e-12 * qbar.abs().max(1.0) * 10.0);
        }
    }
    let flat = pool(&[2.0; 5], &[0.3, 0.1, 0.2, 0.5, 0.4]).unwrap();
    assert_eq!(flat.between, 0.0);
    assert!((flat.total - flat.within).abs() < 1e-15);
    assert!(pool(&[1.0], &[1.0]).is_err());
}

proptest! {
    #[test]
    fn pooling_algebra(
        qu in prop::collection::vec((-100.0f64..100.0, 0.0f64..50.0), 2..10),
        c in 0.1f64..10.0,
        rot in 0usize..10,
    ) {
        let q: Vec<f64> = qu.iter().map(|p| p.0).collect();
        let u: Vec<f64> = qu.iter().map(|p| p.1).collect();
        let p = pool(&q, &u).unwrap();
        prop_assert!(p.total >= p.within);
        prop_assert!(p.between >= 0.0);
        let k = rot % q.len();
        let (mut q2, mut u2) = (q.clone(), u.clone());
        q2.rotate_left(k);
        u2.rotate_left(k);
        let p2 = pool(&q2, &u2).unwrap();
        prop_assert!((p.total - p2.total).abs() <= 1e-9 * p.total.max(1.0));
        let qc: Vec<f64> = q.iter().map(|x| x * c).collect();
        let pc = pool(&qc, &u).unwrap();
        prop_assert!((pc.estimate - c * p.estimate).abs() <= 1e-9 * (c * p.estimate).abs().max(1.0));
        prop_assert!((pc.between - c * c * p.between).abs() <= 1e-9 * (c * c * p.between).max(1.0));
    }

    #[test]
    fn pmm_stays_in_donor_support(
        donors in prop::collection::vec((-5.0f64..5.0, -100.0f64..100.0), 1..40),
        targets in prop::collection::vec(-8.0f64..8.0, 0..20),
        k in 1usize..8,
        seed in 0u64..1000,
    ) {
        let means: Vec<f64> = donors.iter().map(|d| d.0).collect();
        let values: Vec<f64> = donors.iter().map(|d| d.1).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws = pmm_draw(&targets, &means, &values, k, &mut rng).unwrap();
        prop_assert_eq!(draws.len(), targets.len());
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(draws.iter().all(|v| (lo..=hi).contains(v)));
        prop_assert_eq!(donor_sets(&targets, &means, k), brute_force_donors(&targets, &means, k));
    }
}

/// Rank every donor by (distance, index) and keep the first `k`.
fn brute_force_donors(targets: &[f64], means: &[f64], k: usize) -> Vec<Vec<usize>> {
    targets
        .iter()
        .map(|&t| {
            let mut all: Vec<usize> = (0..means.len()).collect();
            all.sort_by(|&a, &b| (means[a] - t).abs().total_cmp(&(means[b] - t).abs()).then(a.cmp(&b)));
            all.truncate(k);
            all
        })
        .collect()
}

#[test]
fn ten_case_donor_sets() {
    let means = [0.5, 1.0, 1.0, 2.0, 3.5, 4.0, 4.0, 6.0, 7.5, 9.0];
    let targets = [0.0, 1.0, 3.75, 4.0, 5.0, 8.25, 10.0, 2.5, 6.75, 1.5];
    for k in 1..=10 {
        assert_eq!(donor_sets(&targets, &means, k), brute_force_donors(&targets, &means, k), "k = {k}");
    }
    assert_eq!(donor_sets(&[0.0], &means, 20)[0].len(), 10);
}

#[test]
fn pmm_edge_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let means = [0.0, 1.0, 2.0, 3.0];
    let values = [10.0, 11.0, 12.0, 13.0];
    assert_eq!(pmm_draw(&[0.1, 2.9, 1.6], &means, &values, 1, &mut rng).unwrap(), vec![10.0, 13.0, 12.0]);
    let flat = pmm_draw(&[-3.0, 0.5, 9.0], &means, &[4.0; 4], 3, &mut rng).unwrap();
    assert_eq!(flat, vec![4.0; 3]);
    assert!(pmm_draw(&[0.0], &[], &[], 1, &mut rng).is_err());
    assert!(pmm_draw(&[0.0], &means, &values, 0, &mut rng).is_err());
}

#[test]
fn intermittent_input_is_rejected() {
    let mut d = fixture();
    let u = (0..d.n()).find(|&u| d.dropout_wave(u).is_some_and(|t| t < 5)).unwrap();
    let t = d.dropout_wave(u).unwrap();
    let y = d.outcome_var();
    d.column_mut(VarRef { var: y, wave: t + 1 })[u] = 1.0;
    assert!(sequential_mi(&d, &ImputerSpec::default(), 2, &[], 1).is_err());
}
