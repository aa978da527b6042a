//! Romberg integration of piecewise-smooth integrands.
//!
//! The plain tableau extrapolates successive trapezoid halvings. Face integrands with an
//! upwind switch `max(0, Omega . n)` have a kink wherever `Omega . n` changes sign, which
//! defeats Richardson extrapolation, so the face integrator bisects panels whose local
//! tableau does not settle and keeps the smooth pieces at low cost.

use crate::discretization::QuadratureError;
use crate::scalar::Real;

/// Controls for the Romberg integrators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RombergOptions<T> {
    /// Absolute tolerance on successive diagonal entries (over the whole interval).
    pub tol: T,
    /// Tableau rows per panel (trapezoid halvings).
    pub max_levels: usize,
    /// Rows computed before the first convergence test.
    pub min_levels: usize,
    /// Maximum panel bisection depth of the adaptive integrator.
    pub max_depth: usize,
}

impl<T: Real> Default for RombergOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::of(1e-10),
            max_levels: 16,
            min_levels: 3,
            max_depth: 48,
        }
    }
}

impl<T: Real> RombergOptions<T> {
    /// Defaults for the adaptive face integrator: short per-panel tableaux.
    pub fn adaptive(tol: T) -> Self {
        Self {
            tol,
            max_levels: 6,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RombergResult<T> {
    pub value: T,
    pub converged: bool,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RombergVecResult<T> {
    pub values: Vec<T>,
    pub converged: bool,
    pub evaluations: usize,
}

/// Single-panel Romberg tableau for a vector-valued integrand on `[a, b]`.
///
/// Returns the best diagonal estimate, whether it met `tol`, and the evaluation count.
fn panel_tableau<T: Real, F: FnMut(T, &mut [T])>(
    f: &mut F,
    dim: usize,
    a: T,
    b: T,
    fa: &[T],
    fb: &[T],
    tol: T,
    max_levels: usize,
    min_levels: usize,
) -> Result<(Vec<T>, bool, usize), QuadratureError> {
    let half = T::of(0.5);
    let width = b - a;
    let mut prev: Vec<Vec<T>> = vec![(0..dim).map(|i| half * width * (fa[i] + fb[i])).collect()];
    let mut scratch = vec![T::zero(); dim];
    let mut evaluations = 0usize;
    let mut best = prev[0].clone();
    for k in 1..=max_levels {
        let panels = 1usize << (k - 1);
        let h = width / T::of_usize(panels * 2);
        let mut sum = vec![T::zero(); dim];
        for p in 0..panels {
            let x = a + h * T::of_usize(2 * p + 1);
            f(x, &mut scratch);
            evaluations += 1;
            for i in 0..dim {
                if scratch[i].is_nan() {
                    return Err(QuadratureError::NotANumber {
                        at: x.to_f64_lossy(),
                    });
                }
                sum[i] += scratch[i];
            }
        }
        let mut row: Vec<Vec<T>> = Vec::with_capacity(k + 1);
        row.push((0..dim).map(|i| half * prev[0][i] + h * sum[i]).collect());
        let mut factor = T::one();
        for j in 1..=k {
            factor *= T::of(4.0);
            let denom = factor - T::one();
            let next: Vec<T> = (0..dim)
                .map(|i| row[j - 1][i] + (row[j - 1][i] - prev[j - 1][i]) / denom)
                .collect();
            row.push(next);
        }
        let diff = (0..dim).fold(T::zero(), |m, i| m.max((row[k][i] - prev[k - 1][i]).abs()));
        best = row[k].clone();
        if k >= min_levels && diff < tol {
            return Ok((best, true, evaluations));
        }
        prev = row;
    }
    Ok((best, false, evaluations))
}

/// Plain Romberg integration of `f` over `[a, b]`.
///
/// Stops when two successive diagonal entries differ by less than `opts.tol`, or after
/// `opts.max_levels` halvings with `converged == false`.
pub fn romberg<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    opts: &RombergOptions<T>,
) -> Result<RombergResult<T>, QuadratureError> {
    if !(opts.tol > T::zero()) {
        return Err(QuadratureError::InvalidTolerance);
    }
    let fa = [f(a)];
    let fb = [f(b)];
    if fa[0].is_nan() || fb[0].is_nan() {
        return Err(QuadratureError::NotANumber {
            at: if fa[0].is_nan() { a } else { b }.to_f64_lossy(),
        });
    }
    let mut g = |x: T, out: &mut [T]| out[0] = f(x);
    let (v, converged, evals) =
        panel_tableau(&mut g, 1, a, b, &fa, &fb, opts.tol, opts.max_levels, opts.min_levels)?;
    Ok(RombergResult {
        value: v[0],
        converged,
        evaluations: evals + 2,
    })
}

/// Adaptive Romberg integration of a vector-valued integrand over `[a, b]`.
///
/// Each panel runs a short tableau against a tolerance proportional to its width; panels
/// that do not settle are bisected. Convergence means every panel met its tolerance.
pub fn adaptive_romberg_vec<T: Real, F: FnMut(T, &mut [T])>(
    mut f: F,
    dim: usize,
    a: T,
    b: T,
    opts: &RombergOptions<T>,
) -> Result<RombergVecResult<T>, QuadratureError> {
    if !(opts.tol > T::zero()) {
        return Err(QuadratureError::InvalidTolerance);
    }
    let total = b - a;
    let mut fa = vec![T::zero(); dim];
    let mut fb = vec![T::zero(); dim];
    f(a, &mut fa);
    f(b, &mut fb);
    let mut values = vec![T::zero(); dim];
    let mut evaluations = 2usize;
    let mut converged = true;
    // stack of (left, right, f(left), f(right), depth); right half pushed first so panels
    // are processed left to right and the summation order is deterministic
    let mut stack = vec![(a, b, fa, fb, 0usize)];
    let mut mid_vals = vec![T::zero(); dim];
    while let Some((lo, hi, flo, fhi, depth)) = stack.pop() {
        let tol = opts.tol * (hi - lo) / total;
        let (est, ok, n) =
            panel_tableau(&mut f, dim, lo, hi, &flo, &fhi, tol, opts.max_levels, opts.min_levels)?;
        evaluations += n;
        if ok || depth >= opts.max_depth {
            converged &= ok;
            for i in 0..dim {
                values[i] += est[i];
            }
            continue;
        }
        let mid = lo + (hi - lo) * T::of(0.5);
        f(mid, &mut mid_vals);
        evaluations += 1;
        stack.push((mid, hi, mid_vals.clone(), fhi, depth + 1));
        stack.push((lo, mid, flo, mid_vals.clone(), depth + 1));
    }
    Ok(RombergVecResult {
        values,
        converged,
        evaluations,
    })
}

/// Adaptive Romberg integration of a scalar integrand over `[a, b]`.
pub fn adaptive_romberg<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    opts: &RombergOptions<T>,
) -> Result<RombergResult<T>, QuadratureError> {
    let r = adaptive_romberg_vec(|x, out: &mut [T]| out[0] = f(x), 1, a, b, opts)?;
    Ok(RombergResult {
        value: r.values[0],
        converged: r.converged,
        evaluations: r.evaluations,
    })
}

/// Integrates a face integrand over the face parameter interval `[0, 1]`.
pub fn romberg_face_integral<T: Real, F: FnMut(T) -> T>(
    f: F,
    tol: T,
    max_levels: usize,
) -> Result<RombergResult<T>, QuadratureError> {
    let opts = RombergOptions {
        max_levels,
        ..RombergOptions::adaptive(tol)
    };
    adaptive_romberg(f, T::zero(), T::one(), &opts)
}
