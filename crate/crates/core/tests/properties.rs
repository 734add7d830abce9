use avgfilter::filters::map_estimate;
use avgfilter::filters::rb::{rb_covariance_step, rb_matrices_for};
use avgfilter::filters::weights::*;
use avgfilter::linalg::{chain_transition_matrix, max_row_sum_error};
use avgfilter::model::*;
use avgfilter::rng::RngStream;
use avgfilter::simulator::ou_step;
use avgfilter::Matrix;
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

fn generator(m: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(0.0f64..20.0, m * m).prop_map(move |v| {
        let mut q = Matrix::from_row_slice(m, m, &v);
        for i in 0..m {
            q[(i, i)] = 0.0;
            let s: f64 = q.row(i).sum();
            q[(i, i)] = -s;
        }
        q
    })
}

fn min_eigenvalue(a: &Matrix) -> f64 {
    SymmetricEigen::new(a.clone()).eigenvalues.min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semigroup(q in (1usize..5).prop_flat_map(generator), s in 0.0f64..0.5, t in 0.0f64..0.5) {
        let lhs = chain_transition_matrix(&q, s + t);
        let rhs = chain_transition_matrix(&q, s) * chain_transition_matrix(&q, t);
        prop_assert!((lhs - rhs).abs().max() < 1e-9);
    }

    #[test]
    fn transition_rows_are_stochastic(q in (1usize..5).prop_flat_map(generator), t in 0.0f64..10.0) {
        let p = chain_transition_matrix(&q, t);
        prop_assert!(max_row_sum_error(&p, 1.0) < 1e-10);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn averaged_intensity_is_a_generator(
        rates in prop::collection::vec(0.1f64..20.0, 6),
        levels in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let mut lv = levels.clone();
        lv.sort_by(f64::total_cmp);
        lv.dedup();
        prop_assume!(lv.len() == 3 && lv.windows(2).all(|w| w[1] - w[0] > 1e-6));
        let r = rates.clone();
        let q = IntensityMatrix::state_dependent(3, (0.1, 40.0), move |x| {
            let f = 1.0 / (1.0 + (-x).exp());
            let mut m = Matrix::zeros(3, 3);
            let mut k = 0;
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        m[(i, j)] = r[k] * if (i + j) % 2 == 0 { f } else { 1.0 - f };
                        k += 1;
                    }
                }
                m[(i, i)] = -m.row(i).sum();
            }
            m
        }).unwrap();
        let qbar = average_intensity(&q, &StateSpace::new(lv).unwrap(), 64).unwrap();
        for i in 0..3 {
            prop_assert!(qbar.row(i).sum().abs() < 1e-10);
            for j in 0..3 {
                if i != j {
                    prop_assert!(qbar[(i, j)] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn observation_average_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0, s in -4.0f64..4.0) {
        let sp = StateSpace::new(vec![s]).unwrap();
        let h1 = ObservationFunction::Tanh { amplitude: 1.0 };
        let h2 = ObservationFunction::Linear { slope: 1.0 };
        let combo = ObservationFunction::custom(move |x| a * x.tanh() + b * x, None);
        let lhs = average_observation(&combo, &sp, 64).unwrap()[0];
        let rhs = a * average_observation(&h1, &sp, 64).unwrap()[0] + b * average_observation(&h2, &sp, 64).unwrap()[0];
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn normalised_weights(log_w in prop::collection::vec(-800.0f64..10.0, 1..200)) {
        let mut lw = log_w.clone();
        let mut w = vec![0.0; lw.len()];
        normalize_log_weights(&mut lw, &mut w, 0).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        let ess = effective_sample_size(&w);
        prop_assert!(ess >= 1.0 - 1e-9 && ess <= w.len() as f64 + 1e-9);
    }

    #[test]
    fn map_is_lowest_argmax(p in prop::collection::vec(0u8..4, 1..8)) {
        let probs: Vec<f64> = p.iter().map(|&v| v as f64).collect();
        let i = map_estimate(&probs);
        let max = probs.iter().copied().fold(f64::MIN, f64::max);
        prop_assert_eq!(probs[i], max);
        prop_assert!(probs[..i].iter().all(|&v| v < max));
    }

    #[test]
    fn rb_unrolling_matches_sequential_steps(
        m in prop::sample::select(vec![1usize, 2, 3, 5, 8]),
        a in 0.0f64..1.0,
        x0 in -3.0f64..3.0,
        thetas in prop::collection::vec(-4.0f64..4.0, 8),
        noise in prop::collection::vec(-3.0f64..3.0, 8),
        zero_noise in any::<bool>(),
    ) {
        let mats = rb_matrices_for(m, a, 0.01, 1.0);
        let w: Vec<f64> = noise.iter().map(|&n| if zero_noise { 0.0 } else { n }).collect();
        let mut x = x0;
        let mut seq = vec![0.0; m];
        for t in 0..m {
            x = ou_step(x, thetas[t], a, w[t]);
            seq[m - 1 - t] = x;
        }
        let mut prev = Matrix::zeros(m, 1);
        prev[(0, 0)] = x0;
        let th = Matrix::from_fn(m, 1, |r, _| thetas[m - 1 - r]);
        let wv = Matrix::from_fn(m, 1, |r, _| w[m - 1 - r]);
        let out = &mats.a * prev + &mats.b * th + &mats.r * wv;
        for r in 0..m {
            prop_assert!((out[(r, 0)] - seq[r]).abs() < 1e-12);
        }
    }

    #[test]
    fn kalman_algebra(
        m in 1usize..9,
        a in 0.01f64..0.999,
        slope in -20.0f64..20.0,
        fine_dt in 1e-4f64..0.05,
        var0 in 0.0f64..2.0,
        steps in 1usize..40,
    ) {
        let mats = rb_matrices_for(m, a, fine_dt, slope);
        let obs_var = fine_dt * m as f64;
        let mut sigma = Matrix::zeros(m, m);
        sigma[(0, 0)] = var0;
        for _ in 0..steps {
            let st = rb_covariance_step(&mats, &sigma, obs_var).unwrap();
            prop_assert!(st.innovation_var >= fine_dt);
            prop_assert!(min_eigenvalue(&st.sigma) >= -1e-10);
            prop_assert!(min_eigenvalue(&(&st.sigma_pred - &st.sigma)) >= -1e-10);
            sigma = st.sigma;
        }
    }
}

#[test]
fn resampling_is_unbiased() {
    let w = [0.05, 0.4, 0.15, 0.3, 0.1];
    let g = [3.0, -1.0, 0.5, 2.0, 7.0];
    let target: f64 = w.iter().zip(&g).map(|(a, b)| a * b).sum();
    let mut rng = RngStream::new(77, 0).rng();
    let mut idx = Vec::new();
    for scheme in [ResamplingScheme::Multinomial, ResamplingScheme::Systematic] {
        let n = 10_000;
        let means: Vec<f64> = (0..n)
            .map(|_| {
                resample_indices(&w, scheme, &mut rng, &mut idx).unwrap();
                idx.iter().map(|&i| g[i]).sum::<f64>() / w.len() as f64
            })
            .collect();
        let m = means.iter().sum::<f64>() / n as f64;
        let sd = (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        assert!((m - target).abs() < 4.0 * sd / (n as f64).sqrt(), "{scheme:?}");
    }
}
