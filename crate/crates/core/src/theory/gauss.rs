//! Standard normal density, Q-function and the truncated tail moments that
//! appear in the asymptotic objective.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// Above this argument `Q` is evaluated in the log domain.
pub const LOG_DOMAIN_THRESHOLD: f64 = 8.0;

const CONTINUED_FRACTION_TERMS: usize = 60;

/// `p(c)`, the standard normal density.
pub fn normal_pdf(c: f64) -> f64 {
    (-0.5 * c * c).exp() / (2.0 * PI).sqrt()
}

fn ln_normal_pdf(c: f64) -> f64 {
    -0.5 * c * c - 0.5 * (2.0 * PI).ln()
}

/// Mills ratio `Q(c)/p(c)` for large positive `c`, from the Laplace
/// continued fraction `1/(c + 1/(c + 2/(c + 3/(c + ...))))`.
fn mills_ratio(c: f64) -> f64 {
    let mut t = c;
    for k in (1..=CONTINUED_FRACTION_TERMS).rev() {
        t = c + k as f64 / t;
    }
    1.0 / t
}

/// Natural log of the upper normal tail `Q(c)`; finite for every finite `c`.
pub fn ln_q_function(c: f64) -> f64 {
    if c > LOG_DOMAIN_THRESHOLD {
        ln_normal_pdf(c) + mills_ratio(c).ln()
    } else if c >= 0.0 {
        (0.5 * libm::erfc(c * FRAC_1_SQRT_2)).ln()
    } else {
        (-q_function(-c)).ln_1p()
    }
}

/// Upper tail probability of the standard normal, `Q(c) = P(H > c)`.
pub fn q_function(c: f64) -> f64 {
    if c.is_nan() {
        return f64::NAN;
    }
    if c > LOG_DOMAIN_THRESHOLD {
        ln_q_function(c).exp()
    } else {
        0.5 * libm::erfc(c * FRAC_1_SQRT_2)
    }
}

/// Density, tail probability and the first two tail moments at `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussKernels {
    pub c: f64,
    pub pdf: f64,
    pub q: f64,
    /// `∫_c^∞ h p(h) dh`
    pub m1: f64,
    /// `∫_c^∞ h² p(h) dh`
    pub m2: f64,
}

pub fn gaussian_kernels(c: f64) -> Result<GaussKernels> {
    if !c.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "kernel argument must be finite, got {c}"
        )));
    }
    if c < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "kernel argument must be nonnegative, got {c}"
        )));
    }
    Ok(kernels_unchecked(c))
}

pub(crate) fn kernels_unchecked(c: f64) -> GaussKernels {
    let pdf = normal_pdf(c);
    let q = q_function(c);
    GaussKernels {
        c,
        pdf,
        q,
        m1: pdf,
        m2: q + c * pdf,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson on `[a, b]`; an oracle independent of erfc.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        #[allow(clippy::too_many_arguments)]
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let diff = left + right - whole;
            if depth == 0 || diff.abs() <= 15.0 * tol {
                return left + right + diff / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    fn tail_quadrature(c: f64, power: i32) -> f64 {
        // Split into unit panels so every panel is well resolved.
        let mut total = 0.0;
        let mut lo = c;
        while lo < c + 40.0 {
            let hi = lo + 1.0;
            total += simpson(&|h| h.powi(power) * normal_pdf(h), lo, hi, 1e-17);
            lo = hi;
        }
        total
    }

    #[test]
    fn kernels_at_zero() {
        let k = gaussian_kernels(0.0).unwrap();
        assert!((k.pdf - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert_eq!(k.q, 0.5);
        assert_eq!(k.m1, k.pdf);
        assert_eq!(k.m2, 0.5);
    }

    #[test]
    fn kernels_at_two_match_quadrature() {
        let k = gaussian_kernels(2.0).unwrap();
        // Reference values from 40-digit arithmetic, cross-checked by quadrature.
        assert!((k.q - 0.022_750_131_948_179_21).abs() < 1e-16);
        assert!((k.pdf - 0.053_990_966_513_188_06).abs() < 1e-16);
        assert!((k.m2 - 0.130_732_064_974_555_3).abs() < 1e-15);
        assert!((tail_quadrature(2.0, 0) - k.q).abs() < 1e-13);
        assert!((tail_quadrature(2.0, 2) - k.m2).abs() < 1e-13);
        assert!((gaussian_kernels(1.0).unwrap().m1 - 0.241_970_724_519_143_37).abs() < 1e-15);
    }

    #[test]
    fn closed_forms_match_quadrature_on_grid() {
        for i in 0..50 {
            let c = 10.0 * i as f64 / 49.0;
            let k = gaussian_kernels(c).unwrap();
            assert!((k.m1 - tail_quadrature(c, 1)).abs() <= 1e-12, "m1 at {c}");
            assert!((k.m2 - tail_quadrature(c, 2)).abs() <= 1e-10, "m2 at {c}");
            assert!((k.q - tail_quadrature(c, 0)).abs() <= 1e-12, "q at {c}");
            assert!(k.q >= 0.0 && k.q <= 0.5);
        }
    }

    #[test]
    fn log_domain_tail() {
        // Reference values from 40-digit arithmetic.
        let cases = [
            (8.5, -39.197_396_428_217_67),
            (10.0, -53.231_285_150_512_47),
            (20.0, -203.917_155_371_097_26),
            (40.0, -804.608_442_013_753_8),
        ];
        for (c, ln_q) in cases {
            let got = ln_q_function(c);
            assert!(
                ((got - ln_q) / std::f64::consts::LN_10).abs() < 1e-6,
                "c={c}: {got} vs {ln_q}"
            );
        }
        assert!((q_function(10.0) / 7.619_853_024_160_526e-24 - 1.0).abs() < 1e-12);
        // Continuity across the switch to the log domain.
        let below = 0.5 * libm::erfc(8.0 * FRAC_1_SQRT_2);
        let above = ln_q_function(8.0 + 1e-12).exp();
        assert!((below / above - 1.0).abs() < 1e-10);
    }

    #[test]
    fn negative_arguments_by_symmetry() {
        for c in [0.3, 1.0, 2.5] {
            assert!((q_function(-c) + q_function(c) - 1.0).abs() < 1e-15);
            assert!((ln_q_function(-c) - q_function(-c).ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(gaussian_kernels(f64::NAN).is_err());
        assert!(gaussian_kernels(f64::INFINITY).is_err());
        assert!(gaussian_kernels(-1.0).is_err());
    }
}
