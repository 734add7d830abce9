//! Small dense-matrix helpers: matrix exponential and Markov transition matrices.

use nalgebra::DMatrix;

pub type Matrix = DMatrix<f64>;

// Padé(13) coefficients and the scaling threshold from Higham (2005).
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

fn one_norm(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
///
/// Panics if `a` is not square.
pub fn expm(a: &Matrix) -> Matrix {
    assert!(a.is_square(), "expm of a non-square matrix");
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    let norm = one_norm(a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a / 2f64.powi(squarings);
    let ident = Matrix::identity(n, n);
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular after scaling");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Closed form of `exp(q t)` for a two-state intensity matrix.
///
/// With off-diagonal rates `q01`, `q10` the stationary rows are
/// `(q10, q01) / (q01 + q10)` and `exp(q t) = P∞ + exp(-(q01 + q10) t) (I - P∞)`.
pub fn two_state_transition(q: &Matrix, t: f64) -> Matrix {
    debug_assert_eq!(q.shape(), (2, 2));
    let up = q[(0, 1)];
    let down = q[(1, 0)];
    let total = up + down;
    if total <= 0.0 {
        return Matrix::identity(2, 2);
    }
    let decay = (-total * t).exp();
    let stay0 = (down + up * decay) / total;
    let stay1 = (up + down * decay) / total;
    Matrix::from_row_slice(2, 2, &[stay0, 1.0 - stay0, 1.0 - stay1, stay1])
}

/// Row-stochastic transition matrix `exp(q t)` of a chain with intensity matrix `q`.
///
/// Uses the two-state closed form when `q` is 2x2 and [`expm`] otherwise. Round-off
/// negatives are clipped and rows renormalised.
pub fn chain_transition_matrix(q: &Matrix, t: f64) -> Matrix {
    let n = q.nrows();
    if t == 0.0 || n == 1 {
        return Matrix::identity(n, n);
    }
    let mut p = if n == 2 {
        two_state_transition(q, t)
    } else {
        expm(&(q * t))
    };
    for mut row in p.row_iter_mut() {
        row.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        let sum: f64 = row.iter().sum();
        row /= sum;
    }
    p
}

/// Largest absolute deviation of the row sums of `p` from `target`.
pub fn max_row_sum_error(p: &Matrix, target: f64) -> f64 {
    p.row_iter()
        .map(|r| (r.sum() - target).abs())
        .fold(0.0, f64::max)
}
