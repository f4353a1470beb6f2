//! Matrix exponential by scaling and squaring with the degree-13 diagonal
//! Padé approximant.
//!
//! The matrix is scaled by `2^-s` so that its spectral norm is at most
//! `θ₁₃ = 5.37`, the approximant `r₁₃ = (V − U)⁻¹(V + U)` is evaluated
//! with six matrix products, and the result is squared `s` times.

use nalgebra::DMatrix;

use crate::linalg::spectral_norm;

const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_13: [f64; 14] = [
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

/// `exp(A)` for a square matrix.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    let norm = spectral_norm(a);
    if !norm.is_finite() {
        return DMatrix::from_element(n, n, f64::NAN);
    }
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-squarings);

    let b = &PADE_13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];

    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = match denom.lu().solve(&numer) {
        Some(r) => r,
        None => return DMatrix::from_element(n, n, f64::NAN),
    };
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn taylor(a: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
        let n = a.nrows();
        let mut sum = DMatrix::identity(n, n);
        let mut term = DMatrix::identity(n, n);
        for k in 1..terms {
            term = &term * a / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn matches_series_on_small_norms() {
        let a = DMatrix::from_row_slice(3, 3, &[0.1, -0.2, 0.05, 0.3, 0.0, -0.1, 0.02, 0.4, -0.3]);
        let diff = (expm(&a) - taylor(&a, 30)).amax();
        assert!(diff < 1e-15, "{diff:e}");
    }

    #[test]
    fn rotation_generator() {
        let theta = 7.5_f64;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -theta, theta, 0.0]);
        let e = expm(&a);
        let expected =
            DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        assert!((e - expected).amax() < 1e-12);
    }

    #[test]
    fn diagonal_and_nilpotent() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-20.0, 0.0, 3.0]));
        let e = expm(&a);
        assert!((e[(0, 0)] - (-20.0f64).exp()).abs() < 1e-20);
        assert!((e[(1, 1)] - 1.0).abs() < 1e-14);
        assert!((e[(2, 2)] / 3f64.exp() - 1.0).abs() < 1e-13);

        let n = DMatrix::from_row_slice(2, 2, &[0.0, 5.0, 0.0, 0.0]);
        let e = expm(&n);
        assert!((e - DMatrix::from_row_slice(2, 2, &[1.0, 5.0, 0.0, 1.0])).amax() < 1e-13);
    }

    proptest! {
        #[test]
        fn inverse_is_negated_argument(v in proptest::collection::vec(-3.0f64..3.0, 16)) {
            let a = DMatrix::from_row_slice(4, 4, &v);
            let prod = expm(&a) * expm(&(-&a));
            let err = (prod - DMatrix::identity(4, 4)).amax();
            prop_assert!(err < 1e-9, "{}", err);
        }

        #[test]
        fn agrees_with_series_after_scaling(v in proptest::collection::vec(-1.0f64..1.0, 9)) {
            let a = DMatrix::from_row_slice(3, 3, &v);
            // exp(A) = exp(A/8)^8 and the series converges fast for A/8.
            let mut s = taylor(&(&a / 8.0), 25);
            for _ in 0..3 { s = &s * &s; }
            let e = expm(&a);
            prop_assert!((e.clone() - s).amax() < 1e-12 * (1.0 + e.amax()));
        }
    }
}
