use avgfilter::filters::*;
use avgfilter::model::{AveragedModel, InitialLaw, ModelParams, DEFAULT_QUAD_ORDER};
use avgfilter::rng::RngStream;
use avgfilter::simulator::{simulate_truth_and_observations, ObservationSeries};

fn small_instance() -> ModelParams {
    let mut p = ModelParams::reference_two_state(0.02, 20, 0);
    p.delta_t = 0.05;
    p.substeps = 2;
    p.x0 = InitialLaw::Gaussian {
        mean: 0.0,
        variance: 0.5,
    };
    p
}

fn data(p: &ModelParams, seed: u64) -> ObservationSeries {
    simulate_truth_and_observations(p, RngStream::new(seed, 0)).unwrap().1
}

fn max_tv(a: &Posterior, b: &Posterior) -> f64 {
    a.tv_trace(b).unwrap().into_iter().fold(0.0, f64::max)
}

fn mean_tv(a: &Posterior, b: &Posterior) -> f64 {
    let t = a.tv_trace(b).unwrap();
    t.iter().sum::<f64>() / t.len() as f64
}

#[test]
fn particle_filters_match_grid_oracle() {
    let p = small_instance();
    let obs = data(&p, 101);
    let grid = grid_oracle_filter(&obs, &p, &GridConfig::default()).unwrap();
    let pf = run_filter(&mut ParticleFilter::new(&p, &ParticleConfig::new(100_000, 1)).unwrap(), &obs).unwrap();
    assert!(max_tv(&pf, &grid) < 0.02);
    let rb = run_filter(&mut RbFilter::new(&p, &ParticleConfig::new(100_000, 2)).unwrap(), &obs).unwrap();
    assert!(max_tv(&rb, &grid) < 0.03);
    for pi in grid.probs.iter().chain(&pf.probs).chain(&rb.probs) {
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn grid_refinement_is_stable() {
    let p = small_instance();
    let obs = data(&p, 102);
    let coarse = grid_oracle_filter(&obs, &p, &GridConfig::default()).unwrap();
    let fine = grid_oracle_filter(&obs, &p, &GridConfig { x_cells: 400, ..Default::default() }).unwrap();
    for (a, b) in coarse.probs.iter().zip(&fine.probs) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-3);
        }
    }
}

#[test]
fn rao_blackwellisation_reduces_variance() {
    let p = small_instance();
    let obs = data(&p, 103);
    let r = 10_000;
    let seeds = 50;
    let mut pf_runs = Vec::new();
    let mut rb_runs = Vec::new();
    for s in 0..seeds {
        pf_runs.push(run_filter(&mut ParticleFilter::new(&p, &ParticleConfig::new(r, 1000 + s)).unwrap(), &obs).unwrap());
        rb_runs.push(run_filter(&mut RbFilter::new(&p, &ParticleConfig::new(r, 2000 + s)).unwrap(), &obs).unwrap());
    }
    assert!(max_tv(&pf_runs[0], &rb_runs[0]) < 0.03);
    let variance = |runs: &[Posterior], k: usize| -> f64 {
        let n = runs.len() as f64;
        let m = runs.iter().map(|r| r.probs[k][1]).sum::<f64>() / n;
        runs.iter().map(|r| (r.probs[k][1] - m).powi(2)).sum::<f64>() / (n - 1.0)
    };
    let mut log_ratio = 0.0;
    let (mut smaller, mut informative) = (0, 0);
    for k in 1..=p.n_obs {
        let (v_pf, v_rb) = (variance(&pf_runs, k), variance(&rb_runs, k));
        if v_pf > 0.0 && v_rb > 0.0 {
            informative += 1;
            log_ratio += (v_rb / v_pf).ln();
            if v_rb < v_pf {
                smaller += 1;
            }
        }
    }
    assert!(log_ratio < 0.0 && 2 * smaller > informative, "{smaller}/{informative}, {log_ratio}");
}

#[test]
fn matrix_recursion_matches_averaged_particles() {
    let p = small_instance();
    let obs = data(&p, 104);
    let avg = AveragedModel::from_params(&p, DEFAULT_QUAD_ORDER).unwrap();
    let mut mf = AveragedMatrixFilter::new(
        &avg,
        &p.rho0,
        LikelihoodKernel::Gaussian { delta_t: p.delta_t },
        100_000,
        RngStream::new(5, 0),
    )
    .unwrap();
    let matrix = run_filter(&mut mf, &obs).unwrap();
    // the particle version moves on the Δt̃ grid, so refine it to approach
    // the continuous-time chain used by the recursion
    let mut fine = p.clone();
    fine.substeps = 50;
    let apf = run_filter(&mut AveragedParticleFilter::new(&fine, &avg, &ParticleConfig::new(100_000, 6)).unwrap(), &obs).unwrap();
    assert!(max_tv(&matrix, &apf) < 0.02, "{}", max_tv(&matrix, &apf));
}

#[test]
fn averaged_filter_tracks_optimal_at_small_epsilon() {
    let p = ModelParams::reference_two_state(1e-4, 2000, 0);
    let obs = data(&p, 105);
    let avg = AveragedModel::from_params(&p, DEFAULT_QUAD_ORDER).unwrap();
    let apf = run_filter(&mut AveragedParticleFilter::new(&p, &avg, &ParticleConfig::new(2000, 1)).unwrap(), &obs).unwrap();
    let pf = run_filter(&mut ParticleFilter::new(&p, &ParticleConfig::new(2000, 2)).unwrap(), &obs).unwrap();
    assert!(mean_tv(&apf, &pf) < 0.05, "{}", mean_tv(&apf, &pf));
}

#[test]
fn averaging_gap_shrinks_with_epsilon() {
    let eps = [0.1, 0.03, 0.01, 0.003, 0.001];
    let seeds = 8;
    let mut stats = Vec::new();
    for &e in &eps {
        let mut p = ModelParams::reference_two_state(e, 1000, 0);
        p.x0 = InitialLaw::Gaussian {
            mean: 0.0,
            variance: 0.5,
        };
        let avg = AveragedModel::from_params(&p, DEFAULT_QUAD_ORDER).unwrap();
        let gaps: Vec<f64> = (0..seeds)
            .map(|s| {
                let obs = data(&p, 200 + s);
                let rb = run_filter(&mut RbFilter::new(&p, &ParticleConfig::new(2000, s)).unwrap(), &obs).unwrap();
                let mut mf = AveragedMatrixFilter::new(
                    &avg,
                    &p.rho0,
                    LikelihoodKernel::Gaussian { delta_t: p.delta_t },
                    10_000,
                    RngStream::new(s, 1),
                )
                .unwrap();
                mean_tv(&run_filter(&mut mf, &obs).unwrap(), &rb)
            })
            .collect();
        let n = seeds as f64;
        let m = gaps.iter().sum::<f64>() / n;
        let se = (gaps.iter().map(|g| (g - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        stats.push((m, se));
    }
    for w in stats.windows(2) {
        let ((a, sa), (b, sb)) = (w[0], w[1]);
        assert!(b <= a + 2.0 * (sa * sa + sb * sb).sqrt(), "{stats:?}");
    }
}

#[test]
fn log_and_linear_weights_agree_for_regime_filters() {
    let p = small_instance();
    let obs = data(&p, 106);
    let avg = AveragedModel::from_params(&p, DEFAULT_QUAD_ORDER).unwrap();
    let mut cfg = ParticleConfig::new(400, 3);
    let rb_log = run_filter(&mut RbFilter::new(&p, &cfg).unwrap(), &obs).unwrap();
    let apf_log = run_filter(&mut AveragedParticleFilter::new(&p, &avg, &cfg).unwrap(), &obs).unwrap();
    cfg.weight_space = WeightSpace::Linear;
    let rb_lin = run_filter(&mut RbFilter::new(&p, &cfg).unwrap(), &obs).unwrap();
    let apf_lin = run_filter(&mut AveragedParticleFilter::new(&p, &avg, &cfg).unwrap(), &obs).unwrap();
    for (a, b) in [(&rb_log, &rb_lin), (&apf_log, &apf_lin)] {
        for (x, y) in a.probs.iter().zip(&b.probs) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let p = small_instance();
    let obs = data(&p, 107);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let cfg = ParticleConfig::new(6000, 9);
            let a = run_filter(&mut ParticleFilter::new(&p, &cfg).unwrap(), &obs).unwrap();
            let b = run_filter(&mut RbFilter::new(&p, &cfg).unwrap(), &obs).unwrap();
            (a, b)
        })
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn systematic_resampling_is_available() {
    let p = small_instance();
    let obs = data(&p, 108);
    let mut cfg = ParticleConfig::new(20_000, 4);
    cfg.scheme = ResamplingScheme::Systematic;
    let a = run_filter(&mut RbFilter::new(&p, &cfg).unwrap(), &obs).unwrap();
    let grid = grid_oracle_filter(&obs, &p, &GridConfig::default()).unwrap();
    assert!(max_tv(&a, &grid) < 0.03);
}
