//! The auxiliary optimisation (AO) run as a procedure on sampled Gaussians.
//!
//! Working with the error vector `w = x − 1` (all-ones signal), the AO
//! replaces the channel by independent Gaussian vectors `g ∈ R^m` and
//! `h ∈ R^n`. Merging the noise into `g` and eliminating the dual variables
//! leaves, after the variational form of the square root, a scalar problem
//! in `τ`:
//!
//! ```text
//! min_τ  τ‖g‖/(2√n) + σ²‖g‖/(2τ√n) + (1/n) Σ υ(τ; h_i, ‖g‖)
//! ```
//!
//! whose minimiser fixes the optimal error vector coordinate by coordinate.
//! As `n` grows the rescaled minimiser `τ/√δ` concentrates on `τ*` and the
//! fraction of coordinates with `w̃_i ≤ −1` on `Q(1/τ*)`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{standard_normals, ProblemShape, Purpose, TrialSeed};
use crate::search::golden_section_values;

const BRACKET_LOW: f64 = 1e-4;
const BRACKET_HIGH_START: f64 = 10.0;
const BRACKET_HIGH_CAP: f64 = 1e6;
const GOLDEN_TOL: f64 = 1e-10;
const GOLDEN_MAX_ITER: usize = 200;

/// Gaussian draws for one AO instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AoSample {
    /// `m` iid standard normals.
    pub g: DVector<f64>,
    /// `n` iid standard normals.
    pub h: DVector<f64>,
    pub sigma_sq: f64,
    /// `m/n` of this sample.
    pub delta: f64,
    pub n: usize,
}

impl AoSample {
    pub fn new(g: DVector<f64>, h: DVector<f64>, sigma_sq: f64) -> Result<Self> {
        if g.is_empty() || h.is_empty() {
            return Err(Error::InvalidArgument("g and h must be nonempty".into()));
        }
        if !(sigma_sq >= 0.0) || !sigma_sq.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be finite and nonnegative, got {sigma_sq}"
            )));
        }
        if g.norm() == 0.0 {
            return Err(Error::InvalidArgument("g must be nonzero".into()));
        }
        let n = h.len();
        Ok(AoSample {
            delta: g.len() as f64 / n as f64,
            g,
            h,
            sigma_sq,
            n,
        })
    }

    /// Draws `g` from the trial's channel stream and `h` from its noise
    /// stream. No noise vector is drawn: it is absorbed into `g`.
    pub fn draw(shape: &ProblemShape, seed: &TrialSeed) -> Self {
        let mut rng = seed.stream(Purpose::Channel).rng();
        let g = DVector::from_vec(standard_normals(&mut rng, shape.m));
        let mut rng = seed.stream(Purpose::Noise).rng();
        let h = DVector::from_vec(standard_normals(&mut rng, shape.n));
        AoSample {
            g,
            h,
            sigma_sq: shape.sigma_sq,
            delta: shape.realized_delta(),
            n: shape.n,
        }
    }

    fn g_norm(&self) -> f64 {
        self.g.norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoSolution {
    /// Minimiser in the units of the limiting objective (`τ/√δ`).
    pub tau_hat: f64,
    /// Minimiser of the sampled objective before rescaling.
    pub tau_raw: f64,
    pub w_tilde: DVector<f64>,
    /// Optimal value, clamped at zero.
    pub ao_objective_value: f64,
    pub ao_ber: f64,
    /// The unclamped optimum was negative, so the `(·)₊` clamp was active.
    pub clamped: bool,
    /// The minimiser sits on the lower end of the search bracket (e.g. noiseless).
    pub at_lower_bound: bool,
}

impl AoSolution {
    /// Per-coordinate error indicators `w̃_i ≤ −1`.
    pub fn error_mask(&self) -> Vec<bool> {
        self.w_tilde.iter().map(|&w| w <= -1.0).collect()
    }
}

/// `υ(τ; h_i, ‖g‖)` for one coordinate.
fn upsilon(tau: f64, h: f64, g_norm: f64, sqrt_n: f64) -> f64 {
    let threshold = 2.0 * g_norm / (tau * sqrt_n);
    if h >= 0.0 {
        0.0
    } else if h >= -threshold {
        -(tau * sqrt_n / (2.0 * g_norm)) * h * h
    } else {
        threshold + 2.0 * h
    }
}

fn objective_unchecked(tau: f64, sample: &AoSample, g_norm: f64) -> f64 {
    let n = sample.n as f64;
    let sqrt_n = n.sqrt();
    let smooth = tau * g_norm / (2.0 * sqrt_n) + sample.sigma_sq * g_norm / (2.0 * tau * sqrt_n);
    let separable = sample
        .h
        .iter()
        .map(|&h| upsilon(tau, h, g_norm, sqrt_n))
        .sum::<f64>()
        / n;
    smooth + separable
}

/// The scalarised AO objective at `tau` (pre-rescaling units), without the
/// outer clamp.
pub fn ao_objective(tau: f64, sample: &AoSample) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "tau must be positive and finite, got {tau}"
        )));
    }
    Ok(objective_unchecked(tau, sample, sample.g_norm()))
}

/// Optimal AO error vector for a given `tau`:
/// `0` if `h_i ≥ 0`, `(τ√n/‖g‖) h_i` down to `−2`, and `−2` beyond.
pub fn ao_w_from_tau(tau: f64, g_norm: f64, h: &DVector<f64>) -> Result<DVector<f64>> {
    if !(tau > 0.0) || !(g_norm > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tau and ||g|| must be positive, got {tau} and {g_norm}"
        )));
    }
    Ok(w_from_tau_unchecked(tau, g_norm, h))
}

fn w_from_tau_unchecked(tau: f64, g_norm: f64, h: &DVector<f64>) -> DVector<f64> {
    let sqrt_n = (h.len() as f64).sqrt();
    let scale = tau * sqrt_n / g_norm;
    let threshold = 2.0 * g_norm / (tau * sqrt_n);
    h.map(|hi| {
        if hi >= 0.0 {
            0.0
        } else if hi >= -threshold {
            (scale * hi).max(-2.0)
        } else {
            -2.0
        }
    })
}

/// Minimises the sampled AO over `τ` and rebuilds `w̃`.
pub fn ao_solve(sample: &AoSample) -> Result<AoSolution> {
    let g_norm = sample.g_norm();
    if g_norm == 0.0 {
        return Err(Error::InvalidArgument("g must be nonzero".into()));
    }
    let f = |tau: f64| objective_unchecked(tau, sample, g_norm);

    // Grow the bracket until f rises towards its upper end; by convexity
    // the minimiser is then below `hi`.
    let lo = BRACKET_LOW;
    let mut hi = BRACKET_HIGH_START;
    while f(0.5 * hi) >= f(hi) {
        hi *= 2.0;
        if hi > BRACKET_HIGH_CAP {
            return Err(Error::NumericalFailure(format!(
                "AO bracket grew past {BRACKET_HIGH_CAP:e} without an interior minimum (n = {}, sigma^2 = {})",
                sample.n, sample.sigma_sq
            )));
        }
    }

    let tau_raw = golden_section_values(f, lo, hi, GOLDEN_TOL, GOLDEN_MAX_ITER);
    let value = f(tau_raw);
    let w_tilde = w_from_tau_unchecked(tau_raw, g_norm, &sample.h);
    let errors = w_tilde.iter().filter(|&&w| w <= -1.0).count();

    Ok(AoSolution {
        tau_hat: tau_raw / sample.delta.sqrt(),
        tau_raw,
        ao_ber: errors as f64 / sample.n as f64,
        w_tilde,
        ao_objective_value: value.max(0.0),
        clamped: value < 0.0,
        at_lower_bound: tau_raw - lo <= 2.0 * GOLDEN_TOL,
    })
}
