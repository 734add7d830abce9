use avgfilter::model::*;
use avgfilter::Matrix;

fn space(v: &[f64]) -> StateSpace {
    StateSpace::new(v.to_vec()).unwrap()
}

fn trapezoid<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let inner: f64 = (1..n).map(|i| f(lo + i as f64 * h)).sum();
    h * (0.5 * f(lo) + inner + 0.5 * f(hi))
}

/// Recursive adaptive Simpson.
fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}

fn mu(s: f64) -> impl Fn(f64) -> f64 + Copy {
    move |x: f64| (-(x - s).powi(2)).exp() / std::f64::consts::PI.sqrt()
}

#[test]
fn density_mass_and_variance() {
    let sp = space(&[-1.0, 2.5]);
    let gh = avgfilter::quadrature::GaussHermite::new(64);
    for i in 0..2 {
        let s = sp.level(i);
        let mass = gh.expect(s, |_| 1.0);
        let var = gh.expect(s, |x| (x - s).powi(2));
        assert!((mass - 1.0).abs() < 1e-10);
        assert!((var - 0.5).abs() < 1e-10);
        let tr = trapezoid(|x| invariant_density(&sp, i, x).unwrap(), s - 12.0, s + 12.0, 20_000);
        assert!((tr - 1.0).abs() < 1e-10);
    }
}

#[test]
fn gaussian_cdf_rate_two_quadratures() {
    let s1 = 0.3;
    let sp = space(&[s1, 2.0]);
    let q = IntensityMatrix::state_dependent(2, (1.0, 10.0), move |x| {
        let up = 10.0 * normal_cdf(x - s1);
        Matrix::from_row_slice(2, 2, &[-up, up, 1.0, -1.0])
    })
    .unwrap();
    let qbar = average_intensity(&q, &sp, 64).unwrap();
    let m = mu(s1);
    let tr = trapezoid(|x| 10.0 * normal_cdf(x - s1) * m(x), -10.0, 10.0, 200_000);
    assert!((qbar[(0, 1)] - tr).abs() < 1e-8, "{} vs {tr}", qbar[(0, 1)]);
    assert!((qbar[(0, 0)] + qbar[(0, 1)]).abs() < 1e-10);
}

#[test]
fn tanh_average_two_quadratures() {
    let sp = space(&[1.0]);
    let hbar = average_observation(&ObservationFunction::Tanh { amplitude: 1.0 }, &sp, 64).unwrap();
    let m = mu(1.0);
    let adaptive = simpson(|x| x.tanh() * m(x), -12.0, 14.0, 1e-13);
    assert!((hbar[0] - adaptive).abs() < 1e-8, "{} vs {adaptive}", hbar[0]);
}

#[test]
fn constant_intensity_is_unchanged() {
    let q = IntensityMatrix::two_state(10.0, 5.0).unwrap();
    let qbar = average_intensity(&q, &space(&[-1.0, 1.0]), 64).unwrap();
    assert_eq!(qbar, Matrix::from_row_slice(2, 2, &[-10.0, 10.0, 5.0, -5.0]));
}

#[test]
fn reference_model_averages() {
    let p = ModelParams::reference_two_state(0.01, 10, 0);
    let avg = AveragedModel::from_params(&p, DEFAULT_QUAD_ORDER).unwrap();
    assert!((avg.h_bar[0] + 100.0 / 3.0).abs() < 1e-10);
    assert!((avg.h_bar[1] - 100.0 / 3.0).abs() < 1e-10);
    assert!(avg.leverage_bar.is_none());
}
