//! Log-gamma and digamma.
//!
//! `ln_gamma` uses the Lanczos approximation with g = 7 and nine
//! coefficients; `digamma` shifts the argument upward with the recurrence
//! ψ(x) = ψ(x + 1) − 1/x and finishes with the asymptotic series.

use crate::scalar::Scalar;

const LANCZOS_G: f64 = 7.0;

const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of |Γ(x)|. Returns +∞ at the poles (non-positive integers).
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    let pi = T::lit(std::f64::consts::PI);
    if x <= T::zero() && x.floor() == x {
        return T::infinity();
    }
    if x < T::lit(0.5) {
        // reflection: Γ(x)Γ(1−x) = π / sin(πx)
        return (pi / (pi * x).sin().abs()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS_COEF[0]);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += T::lit(c) / (x + T::from_usize(i).unwrap());
    }
    let t = x + T::lit(LANCZOS_G + 0.5);
    T::lit(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + T::lit(0.5)) * t.ln() - t + acc.ln()
}

/// Digamma ψ(x) = d/dx ln Γ(x).
pub fn digamma<T: Scalar>(x: T) -> T {
    if x.is_nan() || x == T::neg_infinity() {
        return T::nan();
    }
    if x <= T::zero() && x.floor() == x {
        return T::nan();
    }
    if x < T::zero() {
        // ψ(1 − x) − ψ(x) = π cot(πx)
        let pi = T::lit(std::f64::consts::PI);
        return digamma(T::one() - x) - pi / (pi * x).tan();
    }
    let mut result = T::zero();
    let mut z = x;
    let shift_to = T::lit(10.0);
    while z < shift_to {
        result -= z.recip();
        z += T::one();
    }
    let r = z.recip();
    let r2 = r * r;
    // Bernoulli terms B_2k / (2k z^2k), k = 1..5
    let series = r2
        * (T::lit(1.0 / 12.0)
            - r2 * (T::lit(1.0 / 120.0)
                - r2 * (T::lit(1.0 / 252.0) - r2 * (T::lit(1.0 / 240.0) - r2 * T::lit(1.0 / 132.0)))));
    result + z.ln() - T::lit(0.5) * r - series
}
