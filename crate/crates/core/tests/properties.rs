use std::io::Write;

use cml_core::analytic::{bounds, downcrossing_ratio, exp_downcrossings, hit_prob, mod_geometric_pmf};
use cml_core::constructions::{
    embed_prefix_program, equal, refinement_chain, run_program_with, sequential_program, small_spread_program,
    survivor_program, ConstructionProgram, ProgramEvent, RunOptions,
};
use cml_core::engine::{
    build_stage_grid, AffineMap, ComponentId, Configuration, Engine, MonitorState, MonitorStatus, StageSpec, LEVEL_TOL,
};
use cml_core::market::{crossing_stats_from_series, ingest_market_csv, Interpolation};
use cml_core::montecarlo::Tally;
use cml_core::pde::{pde_assemble, pde_solve};
use cml_core::rng::run_stream;
use cml_core::stats::{summarize, Histogram};
use cml_core::ThresholdPair;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pair_strategy() -> impl Strategy<Value = ThresholdPair> {
    (0.02f64..0.9, 0.05f64..0.95).prop_map(|(u, v)| {
        let b = 0.05 + 0.9 * v;
        ThresholdPair::new(b * u.min(0.95), b).unwrap()
    })
}

/// Positive weights normalized to 1.
fn simplex(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mod_geometric_is_a_law_with_the_right_mean(pair in pair_strategy()) {
        let rho = downcrossing_ratio(&pair);
        prop_assume!(rho < 0.97);
        let d_max = ((1e-14f64).ln() / rho.ln()).ceil() as u64 + 1;
        let (mut total, mut mean) = (0.0, 0.0);
        for d in 0..=d_max {
            let p = mod_geometric_pmf(d, &pair);
            prop_assert!(p >= 0.0);
            total += p;
            mean += d as f64 * p;
        }
        prop_assert!((total - 1.0).abs() <= 1e-12, "total {}", total);
        let want = exp_downcrossings(pair.b(), &pair).unwrap();
        prop_assert!((mean - want).abs() <= 1e-10 * want.max(1.0), "{} vs {}", mean, want);
    }

    #[test]
    fn hit_prob_is_affine(lo in -1.0f64..1.0, w in 0.01f64..2.0, s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let hi = lo + w;
        let (x, y) = (lo + s * w, lo + t * w);
        let mid = 0.5 * (x + y);
        let f = |z| hit_prob(z, lo, hi).unwrap();
        prop_assert!((f(mid) - 0.5 * (f(x) + f(y))).abs() <= 1e-12);
        prop_assert_eq!(hit_prob(s, 0.0, 1.0).unwrap(), s);
    }

    #[test]
    fn exp_downcrossings_is_continuous_at_b(pair in pair_strategy()) {
        let b = pair.b();
        let peak = b * (1.0 - b) / (b - pair.a());
        let left = exp_downcrossings(b * (1.0 - 1e-12), &pair).unwrap();
        let right = exp_downcrossings((b + 1e-12 * b).min(1.0), &pair).unwrap();
        prop_assert!((exp_downcrossings(b, &pair).unwrap() - peak).abs() <= 1e-12 * peak.max(1.0));
        prop_assert!((left - peak).abs() <= 1e-9 * peak.max(1.0));
        prop_assert!((right - peak).abs() <= 1e-9 * peak.max(1.0));
    }

    // observed property only: no claim is made for pairs outside the grid
    #[test]
    fn bound_entries_are_ordered_and_nonnegative(pair in pair_strategy()) {
        let bb = bounds(&pair);
        for v in [bb.mean_Nb, bb.mean_Dab, bb.var_cap_Nb, bb.var_cap_Dab_conjectured, bb.var_cap_Dab_proved] {
            prop_assert!(v >= 0.0 && v.is_finite());
        }
        prop_assert!(bb.var_cap_Dab_conjectured <= bb.var_cap_Dab_proved);
        prop_assert!(bb.k_alpha >= 5);
    }

    #[test]
    fn refined_grid_holds_every_threshold_arrival(
        pair in pair_strategy(),
        x in 0.0f64..1.0,
        shares in simplex(1..4),
    ) {
        // driver at x, the rest of the mass tied proportionally
        let x = x.min(0.99);
        let rest: Vec<f64> = shares.iter().map(|s| s * (1.0 - x)).collect();
        let tied: Vec<(ComponentId, AffineMap)> = rest
            .iter()
            .enumerate()
            .map(|(i, &v)| (ComponentId(i as u32 + 1), AffineMap::tied(v, x)))
            .collect();
        let spec = StageSpec::new(ComponentId(0), tied.clone(), vec![0.0, 1.0], vec![]).unwrap();
        let grid = build_stage_grid(&spec, &pair).stop_levels;
        prop_assert!(grid.windows(2).all(|w| w[0] < w[1]));
        let on_grid = |g: f64| grid.iter().any(|&l| (l - g).abs() <= LEVEL_TOL);
        for t in [pair.a(), pair.b()] {
            prop_assert!(on_grid(t));
            for (_, m) in &tied {
                let g = m.preimage(t).unwrap();
                if (0.0..=1.0).contains(&g) {
                    prop_assert!(on_grid(g), "preimage {} of {} missing from {:?}", g, t, grid);
                }
            }
        }
    }

    #[test]
    fn monitor_matches_a_crossing_oracle(
        pair in pair_strategy(),
        zones in prop::collection::vec(0u8..3, 1..40),
    ) {
        // values strictly inside the zones below a, between a and b, above b
        let (a, b) = (pair.a(), pair.b());
        let level = |z: u8| match z {
            0 => 0.5 * a,
            1 => 0.5 * (a + b),
            _ => 0.5 * (b + 1.0),
        };
        let mut m = MonitorState::starting_at(level(zones[0]), &pair);
        let (mut active, mut seen_b, mut count) = (false, false, 0u32);
        for (i, &z) in zones.iter().enumerate() {
            if i > 0 {
                // a continuous path between the zones meets each threshold in between
                let crossed: &[f64] = match (zones[i - 1], z) {
                    (2, 0) => &[b, a],
                    (0, 2) => &[a, b],
                    (2, 1) | (1, 2) => &[b],
                    (0, 1) | (1, 0) => &[a],
                    _ => &[],
                };
                for &t in crossed {
                    m.observe(t, &pair);
                }
                m.observe(level(z), &pair);
            }
            if z == 2 { active = true; seen_b = true; }
            if z == 0 && active { active = false; count += 1; }
            prop_assert_eq!(m.reached_b, seen_b);
            prop_assert_eq!(m.downcrossings, count);
            if !m.reached_b {
                prop_assert_eq!(m.status, MonitorStatus::PreB);
            }
        }
    }

    #[test]
    fn reflection_fast_path_matches_the_general_stage(
        pair in pair_strategy(),
        shares in simplex(2..6),
        target in 0.0f64..1.0,
        on_threshold in 0u8..3,
        seed in any::<u64>(),
    ) {
        let mut values = shares.clone();
        // sometimes start the driver exactly on a threshold
        let shift = match on_threshold {
            1 => Some(pair.a()),
            2 => Some(pair.b()),
            _ => None,
        };
        if let Some(t) = shift {
            if values[0] + values[1] > t {
                let total = values[0] + values[1];
                values[0] = t;
                values[1] = total - t;
            }
        }
        let config = Configuration::new(&values, &pair).unwrap();
        let (d, q) = (ComponentId(0), ComponentId(1));
        let sum = values[0] + values[1];
        let t = target * sum;
        let (lo, hi) = ((sum - t).max(0.0), t.min(sum));
        let (lo, hi) = if hi < lo { (hi, lo) } else { (lo, hi) };

        let mut fast = config.clone();
        let mut eng = Engine::new(pair, ChaCha8Rng::seed_from_u64(seed));
        let out_fast = eng.run_reflection(&mut fast, d, q, sum, lo, hi);

        let mut slow = config.clone();
        let mut eng2 = Engine::new(pair, ChaCha8Rng::seed_from_u64(seed));
        let out_slow = StageSpec::reflection(d, q, sum, lo, hi)
            .and_then(|spec| eng2.run_stage(&mut slow, &build_stage_grid(&spec, &pair)));

        match (out_fast, out_slow) {
            (Ok(f), Ok(s)) => {
                prop_assert_eq!(f, s);
                prop_assert_eq!(&fast, &slow);
                prop_assert_eq!(eng.moves(), eng2.moves());
            }
            (Err(_), Err(_)) => {}
            (f, s) => prop_assert!(false, "fast {:?} vs general {:?}", f, s),
        }
    }
}

fn program_strategy() -> impl Strategy<Value = ConstructionProgram> {
    let p = ThresholdPair::new(0.1, 0.25).unwrap();
    prop_oneof![
        (4usize..30).prop_map(move |n| survivor_program(equal(n), p).unwrap()),
        (0.01f64..0.2).prop_map(move |b0| sequential_program(b0, p).unwrap()),
        Just(small_spread_program(vec![0.025; 40], ThresholdPair::new(0.05, 0.1).unwrap()).unwrap()),
        (simplex(2..4), 1i64..4).prop_map(move |(w, k)| embed_prefix_program(w, k, p).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_stage_keeps_the_configuration_feasible(prog in program_strategy(), seed in any::<u64>()) {
        let b = prog.pair.b();
        let sequential = matches!(prog.kind(), cml_core::constructions::ProgramKind::Sequential);
        let mut bad: Option<String> = None;
        let mut obs = |_: &ProgramEvent, c: &Configuration| {
            if bad.is_some() {
                return;
            }
            if let Err(e) = c.check_invariants() {
                bad = Some(e.to_string());
            } else if sequential {
                let above = c.components().iter().filter(|x| x.value > b + LEVEL_TOL).count();
                if above > 1 {
                    bad = Some(format!("{above} components above b: {:?}", c.ranked_values()));
                }
            }
        };
        let opts = RunOptions { observer: Some(&mut obs), ..RunOptions::default() };
        let r = run_program_with(&prog, run_stream(seed, 0), opts).unwrap();
        prop_assert!(bad.is_none(), "{}", bad.unwrap());
        prop_assert!(r.n_b >= 1);
        let w = r.per_component.iter().find(|(id, _)| *id == r.winner_id).unwrap();
        prop_assert!(w.1.reached_b);
    }

    #[test]
    fn embed_visits_the_refinement_chain(w in simplex(2..5), k in 0i64..4, seed in any::<u64>()) {
        let p = ThresholdPair::new(0.1, 0.25).unwrap();
        let prog = embed_prefix_program(w.clone(), k, p).unwrap();
        let chain = refinement_chain(&w, k as u32);
        let mut seen = Vec::new();
        let mut obs = |e: &ProgramEvent, c: &Configuration| {
            if let ProgramEvent::RefinementLevel { m } = e {
                seen.push((*m, c.ranked_values()));
            }
        };
        let opts = RunOptions { observer: Some(&mut obs), ..RunOptions::default() };
        run_program_with(&prog, run_stream(seed, 0), opts).unwrap();
        let levels: Vec<u32> = seen.iter().map(|(m, _)| *m).collect();
        let want: Vec<u32> = (0..=k as u32).rev().collect();
        prop_assert_eq!(levels, want);
        for (m, v) in seen {
            let target = chain[m as usize].values();
            prop_assert_eq!(v.len(), target.len());
            for (x, y) in v.iter().zip(&target) {
                prop_assert!((x - y).abs() <= 1e-9, "level {}: {:?} vs {:?}", m, v, target);
            }
        }
    }
}

/// A contestant path given as zones (0 below a, 1 between, 2 above b).
fn zone_value(z: u8, a: f64, b: f64, jitter: f64) -> f64 {
    match z {
        0 => a * (0.2 + 0.6 * jitter),
        1 => a + (b - a) * (0.2 + 0.6 * jitter),
        _ => b + (1.0 - b) * (0.2 + 0.6 * jitter),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn market_round_trip_recovers_generated_counts(
        paths in prop::collection::vec(prop::collection::vec((0u8..3, 0.0f64..1.0), 2..25), 2..5),
    ) {
        let pair = ThresholdPair::new(0.2, 0.5).unwrap();
        let (a, b) = (pair.a(), pair.b());
        let mut csv = String::from("time,contestant,prob\n");
        let mut want_nb = 0;
        let mut want_dab = 0;
        for (c, path) in paths.iter().enumerate() {
            let (mut active, mut seen) = (false, false);
            for (i, &(z, j)) in path.iter().enumerate() {
                // distinct timestamps per contestant, so no sum check applies
                let t = 1_000_000 + (i * paths.len() + c) as u64;
                csv.push_str(&format!("{t},c{c},{}\n", zone_value(z, a, b, j)));
                if z == 2 { active = true; seen = true; }
                if z == 0 && active { active = false; want_dab += 1; }
            }
            want_nb += seen as u32;
        }
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(csv.as_bytes()).unwrap();
        let series = ingest_market_csv(f.path()).unwrap();
        prop_assert_eq!(series.contestants.len(), paths.len());
        for interp in [Interpolation::Linear, Interpolation::Step] {
            let x = crossing_stats_from_series(&series, &pair, interp).unwrap();
            prop_assert_eq!(x.n_b, want_nb);
            prop_assert_eq!(x.d_ab, want_dab);
        }
    }

    #[test]
    fn summary_matches_direct_formulas(xs in prop::collection::vec(0u64..50, 2..300)) {
        let s = summarize(&xs, 3.0).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<u64>() as f64 / n;
        let var = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        prop_assert!((s.mean - mean).abs() <= 1e-9 * mean.max(1.0));
        prop_assert!((s.variance - var).abs() <= 1e-9 * var.max(1.0));
        prop_assert!((s.mean_ci_halfwidth - 3.0 * (var / n).sqrt()).abs() <= 1e-9);
        prop_assert_eq!(s.histogram.values().sum::<u64>(), xs.len() as u64);
    }

    #[test]
    fn tally_merge_is_commutative_and_associative(
        parts in prop::collection::vec(prop::collection::vec((0u64..6, 0u64..9), 0..20), 3),
    ) {
        let tally = |rows: &[(u64, u64)]| {
            let mut t = Tally { runs: rows.len() as u64, ..Tally::default() };
            for &(nb, d) in rows {
                *t.n_b.entry(nb).or_default() += 1;
                *t.d_ab.entry(d).or_default() += 1;
                *t.winners.entry(nb as u32).or_default() += 1;
            }
            t
        };
        let [x, y, z] = [tally(&parts[0]), tally(&parts[1]), tally(&parts[2])];
        prop_assert_eq!(x.clone().merge(y.clone()), y.clone().merge(x.clone()));
        prop_assert_eq!(
            x.clone().merge(y.clone()).merge(z.clone()),
            x.merge(y.merge(z))
        );
    }

    #[test]
    fn small_pde_grids_are_symmetric_and_bounded(b in 0.1f64..0.5, m in 3usize..16) {
        let g = pde_solve(&pde_assemble(b, m).unwrap(), 1e-12).unwrap();
        prop_assert!(g.symmetry_defect() <= 1e-9, "defect {}", g.symmetry_defect());
        prop_assert_eq!(g.boundary_defect(), 0.0);
        prop_assert!(g.values.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
        prop_assert!(g.min_increment() >= -1e-10);
    }
}

#[test]
fn hist_type_is_an_ordered_map() {
    let mut h = Histogram::new();
    h.insert(3, 1);
    h.insert(1, 2);
    assert_eq!(h.keys().copied().collect::<Vec<_>>(), vec![1, 3]);
}
