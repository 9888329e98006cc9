use cml_core::montecarlo::{simulate_wf, McConfig};
use cml_core::rng::run_stream;
use cml_core::stats::summarize_histogram;
use cml_core::wf::{cov3_mc, wf_step, WfRunParams, WfState};
use cml_core::ThresholdPair;

fn params(k: usize, h: f64, bridge: bool) -> WfRunParams {
    WfRunParams {
        k,
        h,
        seed: 5,
        monitors: ThresholdPair::new(0.1, 0.4).unwrap(),
        bridge_correction: bridge,
        max_time: 50.0,
    }
}

#[test]
fn one_step_has_the_diffusion_moments() {
    let x = [0.2, 0.3, 0.5];
    let h = 1e-4;
    let n = 100_000usize;
    let mut rng = run_stream(21, 0);
    let mut inc = vec![[0.0; 3]; n];
    for row in inc.iter_mut() {
        let mut s = WfState::new(x.to_vec()).unwrap();
        wf_step(&mut s, h, &mut rng);
        for c in 0..3 {
            row[c] = s.values[c] - x[c];
        }
        assert!((s.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    for i in 0..3 {
        let m = inc.iter().map(|r| r[i]).sum::<f64>() / n as f64;
        let sd = (h * x[i] * (1.0 - x[i]) / n as f64).sqrt();
        assert!(m.abs() <= 4.0 * sd, "mean increment {i}: {m}");
        for j in 0..3 {
            let want = h * x[i] * (if i == j { 1.0 } else { 0.0 } - x[j]);
            let got = inc.iter().map(|r| r[i] * r[j]).sum::<f64>() / n as f64;
            // products of Gaussians: standard error at most 2 h / sqrt(n)
            assert!(
                (got - want).abs() <= 4.0 * 2.0 * h * 0.5 / (n as f64).sqrt(),
                "cov {i}{j}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn symmetric_start_gives_uniform_winner() {
    let p = params(3, 1e-3, true);
    let t = simulate_wf(
        &p,
        &WfState::equal(3).unwrap(),
        &McConfig {
            runs: 3000,
            seed: 22,
            workers: 1,
        },
    )
    .unwrap();
    assert_eq!(t.truncated, 0);
    for i in 0..3u32 {
        let f = *t.winners.get(&i).unwrap_or(&0) as f64 / 3000.0;
        let se = (2.0 / 9.0 / 3000.0f64).sqrt();
        assert!((f - 1.0 / 3.0).abs() <= 4.0 * se, "{:?}", t.winners);
    }
}

#[test]
fn coarser_steps_miss_crossings() {
    // without the bridge correction discrete monitoring can only miss touches
    let start = WfState::equal(4).unwrap();
    let cfg = McConfig {
        runs: 3000,
        seed: 23,
        workers: 1,
    };
    let mean_d = |h: f64| {
        let t = simulate_wf(&params(4, h, false), &start, &cfg).unwrap();
        let s = summarize_histogram(&t.d_ab, 4.0).unwrap();
        (s.mean, s.mean_ci_halfwidth)
    };
    let (coarse, c_hw) = mean_d(2e-2);
    let (fine, f_hw) = mean_d(1e-3);
    assert!(fine - coarse > c_hw.max(f_hw), "h=2e-2: {coarse}, h=1e-3: {fine}");
}

#[test]
fn cov3_is_symmetric_and_matches_the_edge() {
    let b = 0.3;
    let p = WfRunParams {
        h: 1e-4,
        ..params(3, 1e-4, true)
    };
    let xy = cov3_mc(0.1, 0.2, b, &p, 4000).unwrap();
    let yx = cov3_mc(0.2, 0.1, b, &p, 4000).unwrap();
    let se = (xy.std_error.powi(2) + yx.std_error.powi(2)).sqrt();
    assert!((xy.estimate - yx.estimate).abs() <= 3.0 * se, "{xy:?} {yx:?}");

    // one coordinate already next to b: the other one decides, with odds y / b
    let edge = cov3_mc(b - 1e-3, 0.15, b, &p, 4000).unwrap();
    assert!((edge.estimate - 0.5).abs() <= 0.03, "{edge:?}");
}
