use avgfilter::experiments::zero_one_error;
use avgfilter::model::*;
use avgfilter::rng::RngStream;
use avgfilter::simulator::{simulate_path, simulate_svol_returns};
use avgfilter::svol::{svol_averaged_filter, SvolParams};

fn svol_model(eps: f64, n: usize) -> ModelParams {
    let mut p = ModelParams::reference_two_state(eps, n, 0);
    p.h = ObservationFunction::Logistic {
        low: 0.01,
        high: 1.0,
        rate: 1.0,
    };
    p
}

const SV: SvolParams = SvolParams { drift: 0.05, rho: -0.5 };

fn map_error(p: &ModelParams, seed: u64) -> f64 {
    let s = RngStream::new(seed, 0);
    let path = simulate_path(p, s).unwrap();
    let obs = simulate_svol_returns(&path, p, &SV, s).unwrap();
    let avg = AveragedModel::from_params(p, DEFAULT_QUAD_ORDER).unwrap();
    let post = svol_averaged_filter(&obs, &avg, &p.rho0, &SV, 5000, s).unwrap();
    let truth = path.regimes_at_observations();
    zero_one_error(&truth[1..], &post.map_estimates()[1..]).unwrap()
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt())
}

#[test]
fn frozen_regime_is_recovered() {
    let mut p = svol_model(1e-3, 5000);
    p.q = IntensityMatrix::two_state(0.0, 0.0).unwrap();
    p.rho0 = vec![0.0, 1.0];
    let s = RngStream::new(3, 0);
    let path = simulate_path(&p, s).unwrap();
    let obs = simulate_svol_returns(&path, &p, &SV, s).unwrap();
    // filter with the switching model
    let filt = svol_model(1e-3, 5000);
    let avg = AveragedModel::from_params(&filt, DEFAULT_QUAD_ORDER).unwrap();
    let post = svol_averaged_filter(&obs, &avg, &filt.rho0, &SV, 5000, s).unwrap();
    let hits = post.map_estimates()[1..].iter().filter(|&&i| i == 1).count();
    assert!(hits as f64 / 5000.0 > 0.95);
}

#[test]
fn beats_the_no_data_baseline() {
    let p = svol_model(1e-3, 2000);
    let errs: Vec<f64> = (0..20).map(|s| map_error(&p, 500 + s)).collect();
    let (m, se) = mean_se(&errs);
    assert!(m + 2.0 * se < 5.0 / 15.0, "{m} ± {se}");
}

#[test]
fn error_decreases_with_epsilon() {
    let stats: Vec<(f64, f64)> = [0.1, 0.01, 0.001]
        .iter()
        .map(|&e| {
            let p = svol_model(e, 1000);
            let errs: Vec<f64> = (0..20).map(|s| map_error(&p, 900 + s)).collect();
            mean_se(&errs)
        })
        .collect();
    for w in stats.windows(2) {
        let ((a, sa), (b, sb)) = (w[0], w[1]);
        assert!(b <= a + 2.0 * (sa * sa + sb * sb).sqrt(), "{stats:?}");
    }
}
