//! Box-constrained least squares, sign detection and bit error rate.
//!
//! The relaxed decoder solves `min ½‖y − A x‖²` over `x ∈ [−1, 1]^n` with
//! accelerated projected gradient and then hard-thresholds by sign. Two
//! brute-force oracles (active-set enumeration and exhaustive ML) are kept
//! here for desk-scale checks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lipschitz safety factor applied to the power-iteration estimate.
const LIPSCHITZ_SAFETY: f64 = 1.01;
/// Feasibility / KKT slack used when filtering active-set candidates.
const ORACLE_KKT_TOL: f64 = 1e-10;

/// Minimum spacing, in iterations, between active-set polishing attempts.
const POLISH_PERIOD_MIN: usize = 50;

pub const MAX_ORACLE_BOX_N: usize = 10;
pub const MAX_ORACLE_ML_N: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Stop once the KKT residual drops to this value.
    pub tol: f64,
    /// Iteration cap; `None` means `50 n`.
    pub max_iter: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: None,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolveOptions {
            tol,
            ..Default::default()
        }
    }

    fn iteration_cap(&self, n: usize) -> usize {
        self.max_iter.unwrap_or(50 * n.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxSolution {
    pub x_hat: DVector<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// `‖y − A x̂‖₂` (not squared).
    pub objective: f64,
    /// `½‖y − A x‖²` along the accepted iterates, starting from `x = 0`;
    /// tracked through the exact per-step change.
    pub objective_history: Vec<f64>,
}

impl BoxSolution {
    /// Error vector `w = x̂ − x0`.
    pub fn error_vector(&self, x0: &DVector<f64>) -> DVector<f64> {
        &self.x_hat - x0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub x_star: DVector<f64>,
    pub ber: f64,
    pub error_mask: Vec<bool>,
}

impl DetectionResult {
    pub fn errors(&self) -> usize {
        self.error_mask.iter().filter(|&&e| e).count()
    }
}

#[inline]
fn clip_unit(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

/// Estimates `λ_max(AᵀA)` by power iteration from the normalised all-ones vector.
///
/// Returns 0 for the zero matrix.
pub fn operator_norm_sq(a: &DMatrix<f64>, tol: f64) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 || a.amax() == 0.0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    let max_iter = 10_000;
    for it in 0..max_iter {
        let av = a * &v;
        let mut w = a.tr_mul(&av);
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            // Start vector in the null space; restart from a basis vector.
            v = DVector::zeros(n);
            v[it % n] = 1.0;
            continue;
        }
        w /= norm;
        v = w;
        // Rayleigh quotients increase monotonically towards λ_max; stop once
        // they settle well below the requested tolerance.
        if it > 2 && (next - lambda).abs() <= 0.01 * tol * next {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// `f(x) = ½‖y − A x‖²` evaluated from a precomputed `A x`.
fn half_sq_residual(ax: &DVector<f64>, y: &DVector<f64>) -> f64 {
    0.5 * ax
        .iter()
        .zip(y.iter())
        .map(|(p, q)| (q - p).powi(2))
        .sum::<f64>()
}

fn kkt_from_gradient(x: &DVector<f64>, grad: &DVector<f64>) -> f64 {
    x.iter()
        .zip(grad.iter())
        .map(|(&xi, &gi)| (xi - clip_unit(xi - gi)).abs())
        .fold(0.0, f64::max)
}

/// Projected-gradient fixed-point residual `‖x − Π(x − Aᵀ(Ax − y))‖∞`.
pub fn kkt_residual(a: &DMatrix<f64>, y: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let grad = a.tr_mul(&(a * x - y));
    kkt_from_gradient(x, &grad)
}

fn check_dims(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if a.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "A has {} rows but y has length {}",
            a.nrows(),
            y.len()
        )));
    }
    if a.ncols() == 0 {
        return Err(Error::InvalidArgument("A has no columns".into()));
    }
    Ok(())
}

/// Solves the box-relaxed least squares.
///
/// FISTA with step `1/L` and function-value restart: whenever the
/// extrapolated step would increase the objective the momentum is dropped
/// and a plain projected-gradient step is taken from the last iterate, so
/// accepted objectives never increase. The change in objective is computed
/// as `∇f(x)ᵀd + ½‖A d‖²` for the step `d`, which stays accurate where the
/// objective itself no longer resolves the decrease. Every `max(50, n)`
/// iterations an active-set step (least squares on the free coordinates,
/// truncated at the box) is tried; it settles ill-conditioned instances
/// that plain first-order steps resolve slowly.
pub fn solve_box_ls(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<BoxSolution> {
    check_dims(a, y)?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let n = a.ncols();
    let max_iter = opts.iteration_cap(n);

    let mut lipschitz = operator_norm_sq(a, 1e-6) * LIPSCHITZ_SAFETY;
    if lipschitz == 0.0 {
        let x = DVector::zeros(n);
        let objective = y.norm();
        return Ok(BoxSolution {
            x_hat: x,
            iterations: 0,
            kkt_residual: 0.0,
            objective,
            objective_history: vec![0.5 * objective * objective],
        });
    }

    let mut x = DVector::zeros(n);
    let mut ax = DVector::zeros(a.nrows());
    let mut f = half_sq_residual(&ax, y);
    let mut grad_x = a.tr_mul(&(&ax - y));
    let mut residual = kkt_from_gradient(&x, &grad_x);
    let mut history = vec![f];

    // Extrapolated point and the gradient there.
    let mut v = x.clone();
    let mut grad_v = grad_x.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    let polish_period = POLISH_PERIOD_MIN.max(n);

    // Projected step from `base` along `-grad / L`; returns the new point,
    // its image under A and the objective change relative to `x`.
    let step_from = |base: &DVector<f64>,
                     grad: &DVector<f64>,
                     lipschitz: f64,
                     x: &DVector<f64>,
                     ax: &DVector<f64>,
                     grad_x: &DVector<f64>| {
        let step = 1.0 / lipschitz;
        let mut x_new = base.clone();
        x_new.zip_apply(grad, |xi, gi| *xi = clip_unit(*xi - step * gi));
        let ax_new = a * &x_new;
        let d = &x_new - x;
        let ad = &ax_new - ax;
        let change = grad_x.dot(&d) + 0.5 * ad.norm_squared();
        (x_new, ax_new, change)
    };

    while residual > opts.tol && iterations < max_iter {
        iterations += 1;

        let (mut x_new, mut ax_new, mut change) =
            step_from(&v, &grad_v, lipschitz, &x, &ax, &grad_x);
        if change > 0.0 {
            // Restart with a projected-gradient step from x. With L above
            // λ_max(AᵀA) this cannot increase f; if it does, L was
            // underestimated and is doubled.
            t = 1.0;
            loop {
                (x_new, ax_new, change) = step_from(&x, &grad_x, lipschitz, &x, &ax, &grad_x);
                if change <= 0.0 {
                    break;
                }
                lipschitz *= 2.0;
            }
        }

        let mut grad_new = a.tr_mul(&(&ax_new - y));
        residual = kkt_from_gradient(&x_new, &grad_new);

        if residual > opts.tol && iterations % polish_period == 0 {
            let base_f = f + change;
            if let Some((xp, axp, dp)) = polish_step(a, y, &x_new, &ax_new, &grad_new) {
                let gp = a.tr_mul(&(&axp - y));
                let rp = kkt_from_gradient(&xp, &gp);
                log::trace!("polish at {iterations}: kkt {residual:e} -> {rp:e}, f {base_f:e} change {dp:e}");
                x_new = xp;
                ax_new = axp;
                grad_new = gp;
                residual = rp;
                change += dp;
                t = 1.0;
            }
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        t = t_next;

        // v = x_new + β (x_new − x); ∇f(v) follows by linearity.
        v = &x_new + (&x_new - &x) * beta;
        grad_v = &grad_new + (&grad_new - &grad_x) * beta;

        x = x_new;
        ax = ax_new;
        grad_x = grad_new;
        f += change;
        history.push(f);
    }

    let solution = BoxSolution {
        objective: (y - &ax).norm(),
        x_hat: x,
        iterations,
        kkt_residual: residual,
        objective_history: history,
    };
    if solution.kkt_residual > opts.tol {
        return Err(Error::NonConvergence {
            iterations,
            residual: solution.kkt_residual,
            last: Box::new(solution),
        });
    }
    Ok(solution)
}

/// Active-set step: keeps the coordinates that the gradient pins to a bound
/// fixed, moves the rest toward their least-squares optimum (minimum-norm
/// step) and stops at the box boundary. Returns the new point, its image and
/// the objective change, or `None` if the step would not decrease `f`.
fn polish_step(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    x: &DVector<f64>,
    ax: &DVector<f64>,
    grad: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>, f64)> {
    let free: Vec<usize> = (0..x.len())
        .filter(|&i| !((x[i] >= 1.0 && grad[i] <= 0.0) || (x[i] <= -1.0 && grad[i] >= 0.0)))
        .collect();
    if free.is_empty() {
        return None;
    }
    let a_free = a.select_columns(&free);
    let r = y - ax;
    let svd = a_free.svd(true, true);
    let eps = svd.singular_values.max() * 1e-12 * a.nrows().max(free.len()) as f64;
    let d_free = svd.solve(&r, eps).ok()?;

    // Largest step in (0, 1] that stays inside the box.
    let mut alpha = 1.0f64;
    for (k, &i) in free.iter().enumerate() {
        let di = d_free[k];
        if di > 0.0 && x[i] + di > 1.0 {
            alpha = alpha.min((1.0 - x[i]) / di);
        } else if di < 0.0 && x[i] + di < -1.0 {
            alpha = alpha.min((-1.0 - x[i]) / di);
        }
    }
    if !(alpha > 0.0) {
        return None;
    }
    let mut x_new = x.clone();
    for (k, &i) in free.iter().enumerate() {
        x_new[i] = clip_unit(x[i] + alpha * d_free[k]);
    }
    let ax_new = a * &x_new;
    let d = &x_new - x;
    let change = grad.dot(&d) + 0.5 * (&ax_new - ax).norm_squared();
    (change < 0.0).then_some((x_new, ax_new, change))
}

/// Coordinate-wise sign with `sign(0) = +1` (including `-0.0`).
pub fn detect_signs(x_hat: &DVector<f64>) -> DVector<f64> {
    x_hat.map(|v| if v < 0.0 { -1.0 } else { 1.0 })
}

pub fn bit_error_rate(x_star: &DVector<f64>, x0: &DVector<f64>) -> Result<DetectionResult> {
    if x_star.len() != x0.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} decisions vs {} transmitted bits",
            x_star.len(),
            x0.len()
        )));
    }
    if x_star.is_empty() {
        return Err(Error::InvalidArgument("empty signal".into()));
    }
    let error_mask: Vec<bool> = x_star.iter().zip(x0.iter()).map(|(a, b)| a != b).collect();
    let errors = error_mask.iter().filter(|&&e| e).count();
    Ok(DetectionResult {
        x_star: x_star.clone(),
        ber: errors as f64 / x0.len() as f64,
        error_mask,
    })
}

/// Sign detection followed by BER against `x0`.
pub fn detect(x_hat: &DVector<f64>, x0: &DVector<f64>) -> Result<DetectionResult> {
    bit_error_rate(&detect_signs(x_hat), x0)
}

/// Exact box-LS minimiser by enumerating which coordinates sit at `-1`, `+1`
/// or are free.
///
/// Free sets larger than `m` are skipped: when the minimiser is not unique
/// the set of minimisers always has a vertex with at most `m` free
/// coordinates.
pub fn oracle_box_ls_active_set(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    check_dims(a, y)?;
    let n = a.ncols();
    if n > MAX_ORACLE_BOX_N {
        return Err(Error::InvalidArgument(format!(
            "active-set oracle limited to n <= {MAX_ORACLE_BOX_N}, got {n}"
        )));
    }
    let m = a.nrows();
    let total = 3usize.pow(n as u32);
    let mut best: Option<(f64, DVector<f64>)> = None;
    // 0 = lower bound, 1 = upper bound, 2 = free
    let mut state = vec![0u8; n];

    for code in 0..total {
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        if free.len() > m {
            continue;
        }

        let mut x =
            DVector::from_iterator(n, state.iter().map(|&s| if s == 1 { 1.0 } else { -1.0 }));
        if !free.is_empty() {
            for &i in &free {
                x[i] = 0.0;
            }
            let rhs_base = y - a * &x;
            let a_free = a.select_columns(free.iter());
            let gram = a_free.tr_mul(&a_free);
            let rhs = a_free.tr_mul(&rhs_base);
            let Some(chol) = gram.cholesky() else {
                continue;
            };
            let sol = chol.solve(&rhs);
            if sol
                .iter()
                .any(|v| !v.is_finite() || v.abs() > 1.0 + ORACLE_KKT_TOL)
            {
                continue;
            }
            for (k, &i) in free.iter().enumerate() {
                x[i] = clip_unit(sol[k]);
            }
        }

        let grad = a.tr_mul(&(a * &x - y));
        let consistent = (0..n).all(|i| match state[i] {
            0 => grad[i] >= -ORACLE_KKT_TOL,
            1 => grad[i] <= ORACLE_KKT_TOL,
            _ => true,
        });
        if !consistent {
            continue;
        }
        let obj = (y - a * &x).norm_squared();
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    }

    best.map(|(_, x)| x).ok_or_else(|| {
        Error::NumericalFailure("active-set enumeration found no KKT-consistent candidate".into())
    })
}

/// Exhaustive ML detection over `{±1}^n`. Candidates are visited in
/// lexicographic order (−1 before +1, first coordinate most significant)
/// and only a strictly smaller objective replaces the incumbent.
///
/// Returns the minimiser and `‖y − A x‖₂`.
pub fn oracle_ml_exhaustive(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    check_dims(a, y)?;
    let n = a.ncols();
    if n > MAX_ORACLE_ML_N {
        return Err(Error::InvalidArgument(format!(
            "exhaustive ML limited to n <= {MAX_ORACLE_ML_N}, got {n}"
        )));
    }
    let mut best_obj = f64::INFINITY;
    let mut best = DVector::zeros(n);
    let mut x = DVector::zeros(n);
    for code in 0u32..(1u32 << n) {
        for i in 0..n {
            let bit = (code >> (n - 1 - i)) & 1;
            x[i] = if bit == 1 { 1.0 } else { -1.0 };
        }
        let obj = (y - a * &x).norm_squared();
        if obj < best_obj {
            best_obj = obj;
            best.copy_from(&x);
        }
    }
    Ok((best, best_obj.sqrt()))
}
