//! Asymptotic bit error probability of the box relaxation.
//!
//! As `m, n → ∞` with `m/n → δ > 1/2` the error probability tends to
//! `Q(1/τ*)`, where `τ*` minimises the strictly convex scalar objective
//!
//! ```text
//! F(τ) = (τ/2)(δ − 1/2) + σ²/(2τ) + (τ/2) ∫_{2/τ}^∞ (h − 2/τ)² p(h) dh
//! ```
//!
//! Writing `c = 2/τ`, the tail integral has the closed form
//! `(1 + c²) Q(c) − c p(c)`. Setting `F′(τ) = 0` and multiplying by `2τ²`
//! gives the fixed point `δτ² = σ² + E[w̃(τ, H)²]`, with `w̃` the clipped
//! auxiliary error; both routes are implemented and cross-checked.

pub mod gauss;

use crate::error::{Error, Result};
use crate::search::{bisect, golden_section};

use gauss::kernels_unchecked;
pub use gauss::{gaussian_kernels, ln_q_function, normal_pdf, q_function, GaussKernels};

/// Width below which the sliver integral in [`objective_difference`] uses
/// Gauss-Legendre instead of the closed form.
const SLIVER_QUADRATURE_WIDTH: f64 = 0.05;

const GOLDEN_MAX_ITER: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauMethod {
    /// Golden-section search on `F`.
    Minimize,
    /// Bisection on the first-order condition.
    FixedPoint,
}

/// Theory prediction for one `(δ, SNR)` point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryPoint {
    pub delta: f64,
    pub snr: f64,
    pub tau_star: f64,
    /// `Q(1/τ*)`
    pub pe: f64,
    /// `Q(√((δ − 1/2) SNR))`
    pub pe_high_snr: f64,
    /// Matched filter bound `Q(√(δ SNR))`.
    pub pe_mfb: f64,
    pub gap_db: f64,
}

impl TheoryPoint {
    pub fn snr_db(&self) -> f64 {
        10.0 * self.snr.log10()
    }

    /// `log10 Q(1/τ*)`, finite even where `pe` underflows.
    pub fn log10_pe(&self) -> f64 {
        if self.tau_star == 0.0 {
            return f64::NEG_INFINITY;
        }
        ln_q_function(1.0 / self.tau_star) / std::f64::consts::LN_10
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_nan() {
        return Err(Error::InvalidArgument("delta is NaN".into()));
    }
    if delta <= 0.5 {
        return Err(Error::UnsupportedRegime { delta });
    }
    Ok(())
}

fn check_args(tau: f64, delta: f64, sigma_sq: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "tau must be positive and finite, got {tau}"
        )));
    }
    check_delta(delta)?;
    if !(sigma_sq >= 0.0) || !sigma_sq.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be finite and nonnegative, got {sigma_sq}"
        )));
    }
    Ok(())
}

/// `(τ/2) ∫_{2/τ}^∞ (h − 2/τ)² p(h) dh`
fn tail_term(tau: f64) -> f64 {
    let c = 2.0 / tau;
    let k = kernels_unchecked(c);
    0.5 * tau * ((1.0 + c * c) * k.q - c * k.pdf)
}

/// The scalar objective `F(τ)` whose minimiser is `τ*`.
pub fn do_objective(tau: f64, delta: f64, sigma_sq: f64) -> Result<f64> {
    check_args(tau, delta, sigma_sq)?;
    Ok(0.5 * tau * (delta - 0.5) + sigma_sq / (2.0 * tau) + tail_term(tau))
}

/// `R(τ) = δτ² − σ² − E[w̃(τ,H)²]`; zero exactly at `τ*`, negative below it.
pub fn fixed_point_residual(tau: f64, delta: f64, sigma_sq: f64) -> Result<f64> {
    check_args(tau, delta, sigma_sq)?;
    Ok(residual_unchecked(tau, delta, sigma_sq))
}

/// `E[w̃²]` where `w̃ = clip(τH, −2, 0)`.
fn clipped_error_second_moment(tau: f64) -> f64 {
    let c = 2.0 / tau;
    let k = kernels_unchecked(c);
    tau * tau * (0.5 - k.q) - 2.0 * tau * k.pdf + 4.0 * k.q
}

fn residual_unchecked(tau: f64, delta: f64, sigma_sq: f64) -> f64 {
    delta * tau * tau - sigma_sq - clipped_error_second_moment(tau)
}

/// `∫_a^b (h − a)² p(h) dh` for `0 ≤ a ≤ b`, accurate to relative rounding
/// even when `b − a` is tiny.
fn sliver_integral(a: f64, b: f64) -> f64 {
    let width = b - a;
    if width <= 0.0 {
        return 0.0;
    }
    if width > SLIVER_QUADRATURE_WIDTH {
        let ka = kernels_unchecked(a);
        let kb = kernels_unchecked(b);
        return (1.0 + a * a) * (ka.q - kb.q) - a * ka.pdf + (2.0 * a - b) * kb.pdf;
    }
    // Five-point Gauss-Legendre; exact to degree 9, ample for a narrow sliver.
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let half = 0.5 * width;
    let mid = a + half;
    half * NODES
        .iter()
        .zip(WEIGHTS.iter())
        .map(|(&t, &w)| {
            let h = mid + half * t;
            w * (h - a).powi(2) * normal_pdf(h)
        })
        .sum::<f64>()
}

/// `F(tau_b) − F(tau_a)`, evaluated without forming either value.
///
/// Near the minimiser `F` varies far less than its own rounding error, so
/// ordering two close points by their values is unreliable. Here every
/// term is a difference computed in closed form: over the common tail
/// `h > max(2/τa, 2/τb)` the integrands differ by
/// `(τb − τa) h²/2 + 2(1/τb − 1/τa)`, and the remaining sliver where only the
/// larger `τ` is active is integrated directly.
pub fn objective_difference(tau_a: f64, tau_b: f64, delta: f64, sigma_sq: f64) -> Result<f64> {
    check_args(tau_a, delta, sigma_sq)?;
    check_args(tau_b, delta, sigma_sq)?;
    Ok(difference_unchecked(tau_a, tau_b, delta, sigma_sq))
}

fn difference_unchecked(tau_a: f64, tau_b: f64, delta: f64, sigma_sq: f64) -> f64 {
    let dtau = tau_b - tau_a;
    let linear = 0.5 * (delta - 0.5) * dtau;
    let noise = -0.5 * sigma_sq * dtau / (tau_a * tau_b);

    let (tau_small, tau_large) = if tau_a <= tau_b {
        (tau_a, tau_b)
    } else {
        (tau_b, tau_a)
    };
    let c_high = 2.0 / tau_small;
    let c_low = 2.0 / tau_large;
    let k = kernels_unchecked(c_high);
    let common = 0.5 * dtau * k.m2 - 2.0 * dtau / (tau_a * tau_b) * k.q;
    let sliver = 0.5 * tau_large * sliver_integral(c_low, c_high);
    let sliver = if tau_b >= tau_a { sliver } else { -sliver };

    linear + noise + common + sliver
}

/// Search bracket for `τ*`.
///
/// The upper end covers the high-SNR estimate `σ/√(δ − 1/2)` with a factor
/// ten. The lower end is `1e-6`, pulled down further when the noise is so
/// small that `τ*` could fall below it.
pub fn tau_bracket(delta: f64, sigma_sq: f64) -> (f64, f64) {
    let sigma = sigma_sq.sqrt();
    let lo = 1e-6f64.min(0.1 * sigma / delta.sqrt());
    let hi = 10f64.max(10.0 * sigma / (delta - 0.5).sqrt());
    (lo, hi)
}

/// Computes `τ*`. Returns 0 for `σ² = 0` (noiseless convention).
pub fn solve_tau_star(delta: f64, sigma_sq: f64, method: TauMethod, tol: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(sigma_sq >= 0.0) || !sigma_sq.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be finite and nonnegative, got {sigma_sq}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if sigma_sq == 0.0 {
        return Ok(0.0);
    }
    let (lo, hi) = tau_bracket(delta, sigma_sq);

    match method {
        TauMethod::FixedPoint => {
            let r_lo = residual_unchecked(lo, delta, sigma_sq);
            let r_hi = residual_unchecked(hi, delta, sigma_sq);
            if !(r_lo < 0.0 && r_hi > 0.0) {
                return Err(Error::NumericalFailure(format!(
                    "no sign change of the fixed-point residual on [{lo:e}, {hi:e}]: R(lo) = {r_lo:e}, R(hi) = {r_hi:e} (delta = {delta}, sigma^2 = {sigma_sq})"
                )));
            }
            Ok(bisect(
                |t| residual_unchecked(t, delta, sigma_sq),
                lo,
                hi,
                tol,
            ))
        }
        TauMethod::Minimize => {
            let tau = golden_section(
                |a, b| difference_unchecked(a, b, delta, sigma_sq) > 0.0,
                lo,
                hi,
                tol,
                GOLDEN_MAX_ITER,
            );
            let below_lo = difference_unchecked(lo, tau, delta, sigma_sq) < 0.0;
            let below_hi = difference_unchecked(hi, tau, delta, sigma_sq) < 0.0;
            if !(below_lo && below_hi) || tau - lo <= tol || hi - tau <= tol {
                return Err(Error::NumericalFailure(format!(
                    "no interior minimum of the scalar objective on [{lo:e}, {hi:e}]: search ended at {tau:e} (delta = {delta}, sigma^2 = {sigma_sq})"
                )));
            }
            Ok(tau)
        }
    }
}

/// Default tolerance for `τ*` used by [`predict_pe`].
pub const TAU_TOL: f64 = 1e-12;

/// Full theory prediction at `(δ, SNR)`; `snr = +∞` is the noiseless point.
pub fn predict_pe(delta: f64, snr: f64) -> Result<TheoryPoint> {
    check_delta(delta)?;
    if !(snr > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "snr must be positive, got {snr}"
        )));
    }
    let sigma_sq = 1.0 / snr;
    let tau_star = solve_tau_star(delta, sigma_sq, TauMethod::FixedPoint, TAU_TOL)?;
    let pe = if tau_star == 0.0 {
        0.0
    } else {
        q_function(1.0 / tau_star)
    };
    Ok(TheoryPoint {
        delta,
        snr,
        tau_star,
        pe,
        pe_high_snr: q_function(((delta - 0.5) * snr).sqrt()),
        pe_mfb: q_function((delta * snr).sqrt()),
        gap_db: snr_gap_db(delta)?,
    })
}

/// High-SNR distance between the relaxation and the matched filter bound,
/// `10 log10(δ/(δ − 1/2))` dB.
pub fn snr_gap_db(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if delta.is_infinite() {
        return Ok(0.0);
    }
    Ok(10.0 * (delta / (delta - 0.5)).log10())
}
