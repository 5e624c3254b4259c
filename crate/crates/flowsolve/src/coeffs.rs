//! Step coefficients for the cached multistep solver.
//!
//! One step from `t_prev` to `t_next` approximates the integral of the
//! velocity's Taylor expansion around `t_prev`. The integral of the i-th
//! Taylor term contributes a weight `h^(i+1) / (i+1)` with `h = t_next -
//! t_prev` ([`taylor_weights`]); the unknown derivatives are then expressed
//! through differences of cached velocities at offsets `delta_m` from
//! `t_prev`, whose combination weights solve the moment-matching system
//! `sum_m B_m * delta_m^i = C_i` for `i = 1..=p` ([`solve_history_weights`]).
//! That system is a (scaled) Vandermonde system in the offsets; with `p <= 4`
//! and well-separated offsets a dense solve with partial pivoting is exact to
//! well below the 1e-10 residual gate.

use crate::{Error, Result};

/// Hard cap on the number of history points. Conditioning of the offset
/// system degrades quickly beyond this, and nothing downstream asks for more.
pub const MAX_ORDER: usize = 4;

/// Residual gate for the moment-matching solve, in max norm.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Everything needed to take (or audit) one multistep step: the signed step
/// `h`, the positive history offsets from the step's start time, the
/// Taylor-integral weights, and the solved history-combination weights.
///
/// `points` is the number of history records used; all three vectors have
/// that length. Offsets are strictly positive (previous times are larger
/// under the decreasing-time convention) and strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCoefficients {
    pub h: f64,
    pub offsets: Vec<f64>,
    pub taylor: Vec<f64>,
    pub weights: Vec<f64>,
    pub points: usize,
}

/// Weights of the Taylor-term integrals over ` [t_prev, t_next]`:
/// `C_i = h^(i+1) / (i+1)` for `i = 1..=count`, with `h = t_next - t_prev`.
///
/// The zeroth weight is `h` itself (the plain Euler term) and is not
/// returned. Coincident times are rejected; `count` must be in `1..=4`.
pub fn taylor_weights(t_prev: f64, t_next: f64, count: usize) -> Result<Vec<f64>> {
    if t_next == t_prev {
        return Err(Error::InvalidArgument(format!(
            "coincident step times t = {t_prev}"
        )));
    }
    if count == 0 || count > MAX_ORDER {
        return Err(Error::InvalidArgument(format!(
            "taylor weight count must be in 1..={MAX_ORDER}, got {count}"
        )));
    }
    let h = t_next - t_prev;
    let mut pow = h;
    Ok((1..=count)
        .map(|i| {
            pow *= h;
            pow / (i as f64 + 1.0)
        })
        .collect())
}

/// Solves `sum_m B_m * offsets[m]^i = taylor[i]` for `i = 1..=p` by dense
/// Gaussian elimination with partial pivoting, then verifies the residual.
///
/// Offsets must be distinct, nonzero, and at most [`MAX_ORDER`] of them; they
/// need not be positive (the corrector passes the negative step offset).
pub fn solve_history_weights(offsets: &[f64], taylor: &[f64]) -> Result<Vec<f64>> {
    let p = offsets.len();
    if p == 0 || p > MAX_ORDER {
        return Err(Error::InvalidArgument(format!(
            "offset count must be in 1..={MAX_ORDER}, got {p}"
        )));
    }
    if taylor.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: taylor.len(),
        });
    }
    for (m, &d) in offsets.iter().enumerate() {
        if d == 0.0 || !d.is_finite() {
            return Err(Error::SingularSystem(format!(
                "offset {m} is zero or not finite: {d}"
            )));
        }
        if offsets[..m].contains(&d) {
            return Err(Error::SingularSystem(format!("duplicated offset {d}")));
        }
    }

    // Row i (i = 0..p-1) is offsets^(i+1); rhs is the matching taylor weight.
    let mut a = vec![0.0; p * p];
    for i in 0..p {
        for m in 0..p {
            a[i * p + m] = offsets[m].powi(i as i32 + 1);
        }
    }
    let mut rhs = taylor.to_vec();
    let weights = solve_dense(&mut a, &mut rhs, p)?;

    let mut residual = 0.0f64;
    for (i, &target) in taylor.iter().enumerate() {
        let acc: f64 = weights
            .iter()
            .zip(offsets)
            .map(|(w, d)| w * d.powi(i as i32 + 1))
            .sum();
        residual = residual.max((acc - target).abs());
    }
    if residual > RESIDUAL_TOL {
        return Err(Error::NumericalFailure {
            t: f64::NAN,
            msg: format!("history-weight residual {residual:.3e} exceeds {RESIDUAL_TOL:.0e}"),
        });
    }
    Ok(weights)
}

/// Coefficients for one predictor step from `t_prev` to `t_next` using the
/// given history times (each strictly greater than `t_prev`, newest first).
pub fn step_coefficients(t_prev: f64, t_next: f64, history_times: &[f64]) -> Result<StepCoefficients> {
    let h = t_next - t_prev;
    let points = history_times.len();
    if points == 0 {
        return Ok(StepCoefficients {
            h,
            offsets: Vec::new(),
            taylor: Vec::new(),
            weights: Vec::new(),
            points: 0,
        });
    }
    let mut offsets = Vec::with_capacity(points);
    for &t in history_times {
        let d = t - t_prev;
        if d <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "history time {t} is not strictly above the step start {t_prev}"
            )));
        }
        if let Some(&last) = offsets.last() {
            if d <= last {
                return Err(Error::InvalidArgument(
                    "history times must be given newest first (strictly increasing offsets)".into(),
                ));
            }
        }
        offsets.push(d);
    }
    let taylor = taylor_weights(t_prev, t_next, points)?;
    let weights = solve_history_weights(&offsets, &taylor)?;
    Ok(StepCoefficients {
        h,
        offsets,
        taylor,
        weights,
        points,
    })
}

/// Gaussian elimination with partial pivoting on a row-major `n x n` system.
fn solve_dense(a: &mut [f64], rhs: &mut [f64], n: usize) -> Result<Vec<f64>> {
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_mag = a[col * n + col].abs();
        for row in col + 1..n {
            let mag = a[row * n + col].abs();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = row;
            }
        }
        if pivot_mag == 0.0 || !pivot_mag.is_finite() {
            return Err(Error::SingularSystem(format!(
                "zero pivot in column {col}"
            )));
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            rhs.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            a[row * n + col] = 0.0;
            for k in col + 1..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Composite-Simpson quadrature of `(s - t_prev)^i` over `[t_prev, t_next]`,
    /// the independent route to the Taylor-term weights.
    fn quadrature_weight(t_prev: f64, t_next: f64, i: usize) -> f64 {
        let n = 2000;
        let h = (t_next - t_prev) / n as f64;
        let f = |s: f64| (s - t_prev).powi(i as i32);
        let mut acc = f(t_prev) + f(t_next);
        for k in 1..n {
            let s = t_prev + k as f64 * h;
            acc += if k % 2 == 1 { 4.0 * f(s) } else { 2.0 * f(s) };
        }
        acc * h / 3.0
    }

    #[test]
    fn taylor_weights_halving_interval() {
        let c = taylor_weights(1.0, 0.5, 2).unwrap();
        assert_relative_eq!(c[0], 0.125, max_relative = 1e-15);
        assert_relative_eq!(c[1], -0.125 / 3.0, max_relative = 1e-15);
        for (i, &ci) in c.iter().enumerate() {
            assert_relative_eq!(ci, quadrature_weight(1.0, 0.5, i + 1), max_relative = 1e-12);
        }
    }

    #[test]
    fn taylor_weights_sign_flip_on_reversal() {
        let c = taylor_weights(0.5, 1.0, 1).unwrap();
        assert_relative_eq!(c[0], 0.125, max_relative = 1e-15);
        assert_relative_eq!(c[0], quadrature_weight(0.5, 1.0, 1), max_relative = 1e-12);
    }

    #[test]
    fn taylor_weights_vanish_with_interval() {
        let c = taylor_weights(0.5 + 1e-9, 0.5, 3).unwrap();
        for &ci in &c {
            assert!(ci.abs() < 1e-17);
        }
    }

    #[test]
    fn taylor_weights_reject_bad_input() {
        assert!(taylor_weights(0.5, 0.5, 1).is_err());
        assert!(taylor_weights(1.0, 0.5, 0).is_err());
        assert!(taylor_weights(1.0, 0.5, 5).is_err());
    }

    #[test]
    fn two_step_weights_match_adams_bashforth() {
        // Uniform decreasing grid, step -0.2: the single history weight is
        // C_1 / delta = 0.02 / 0.2, and expanding the update must give the
        // classical two-step weights (3/2, -1/2) on (v_cur, v_prev).
        let h = -0.2f64;
        let c = taylor_weights(1.0, 0.8, 1).unwrap();
        assert_relative_eq!(c[0], 0.02, max_relative = 1e-14);
        let b = solve_history_weights(&[0.2], &c).unwrap();
        assert_relative_eq!(b[0], 0.1, max_relative = 1e-14);
        let w_cur = h - b[0];
        let w_prev = b[0];
        assert_relative_eq!(w_cur, h * 1.5, epsilon = 1e-15);
        assert_relative_eq!(w_prev, h * -0.5, epsilon = 1e-15);
    }

    #[test]
    fn three_step_weights_match_adams_bashforth() {
        // Same expansion at two history points against (23/12, -16/12, 5/12).
        let h = -0.1f64;
        let t_prev = 0.7;
        let c = taylor_weights(t_prev, t_prev + h, 2).unwrap();
        let b = solve_history_weights(&[0.1, 0.2], &c).unwrap();
        let w = [h - b[0] - b[1], b[0], b[1]];
        let expect = [23.0 / 12.0, -16.0 / 12.0, 5.0 / 12.0];
        for (got, e) in w.iter().zip(expect) {
            assert_relative_eq!(*got, h * e, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_rhs_gives_zero_weights() {
        let b = solve_history_weights(&[0.37], &[0.0]).unwrap();
        assert_eq!(b, vec![0.0]);
    }

    #[test]
    fn solve_rejects_degenerate_offsets() {
        assert!(matches!(
            solve_history_weights(&[0.2, 0.2], &[0.1, 0.1]),
            Err(Error::SingularSystem(_))
        ));
        assert!(matches!(
            solve_history_weights(&[0.0], &[0.1]),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn step_coefficients_validates_history_order() {
        assert!(step_coefficients(0.5, 0.4, &[0.6, 0.55]).is_err()); // oldest first
        assert!(step_coefficients(0.5, 0.4, &[0.4]).is_err()); // not above start
        let sc = step_coefficients(0.5, 0.4, &[0.6, 0.7]).unwrap();
        assert_eq!(sc.points, 2);
        assert_relative_eq!(sc.offsets[0], 0.1, epsilon = 1e-15);
        assert_relative_eq!(sc.offsets[1], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn empty_history_is_euler_shaped() {
        let sc = step_coefficients(0.5, 0.4, &[]).unwrap();
        assert_eq!(sc.points, 0);
        assert!(sc.weights.is_empty());
        assert_relative_eq!(sc.h, -0.1, epsilon = 1e-15);
    }

    fn poly_eval(coeffs: &[f64], t: f64) -> f64 {
        coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    fn poly_derivative(coeffs: &[f64]) -> Vec<f64> {
        coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &c)| i as f64 * c)
            .collect()
    }

    proptest! {
        #[test]
        fn residual_small_on_admissible_offsets(
            p in 1usize..=4,
            raw in prop::collection::vec(0.02f64..1.5, 4),
            h in -0.5f64..-0.01,
        ) {
            let mut offsets: Vec<f64> = raw[..p].to_vec();
            offsets.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for i in 1..offsets.len() {
                if offsets[i] - offsets[i - 1] < 0.01 {
                    offsets[i] = offsets[i - 1] + 0.01;
                }
            }
            let c = taylor_weights(0.9, 0.9 + h, p).unwrap();
            let b = solve_history_weights(&offsets, &c).unwrap();
            let mut residual = 0.0f64;
            for (i, &target) in c.iter().enumerate() {
                let acc: f64 = (0..p).map(|m| b[m] * offsets[m].powi(i as i32 + 1)).sum();
                residual = residual.max((acc - target).abs());
            }
            prop_assert!(residual <= 1e-12, "residual {residual}");
        }

        #[test]
        fn scaling_taylor_scales_weights(lambda in -4.0f64..4.0) {
            let offsets = [0.15, 0.4, 0.75];
            let c = taylor_weights(1.0, 0.6, 3).unwrap();
            let b = solve_history_weights(&offsets, &c).unwrap();
            let scaled: Vec<f64> = c.iter().map(|x| lambda * x).collect();
            let b2 = solve_history_weights(&offsets, &scaled).unwrap();
            for (w, w2) in b.iter().zip(&b2) {
                prop_assert!((lambda * w - w2).abs() <= 1e-12 * (1.0 + w2.abs()));
            }
        }

        #[test]
        fn polynomial_reproduction(
            p in 1usize..=4,
            coeffs in prop::collection::vec(-2.0f64..2.0, 5),
            t_ref in 0.2f64..0.9,
            h in -0.3f64..-0.02,
        ) {
            // For any polynomial of degree <= p, combining history
            // differences with the solved weights reproduces the sum of
            // Taylor-integral terms exactly.
            let poly: Vec<f64> = coeffs[..=p].to_vec();
            let offsets: Vec<f64> = (1..=p).map(|m| 0.11 * m as f64).collect();
            let c = taylor_weights(t_ref, t_ref + h, p).unwrap();
            let b = solve_history_weights(&offsets, &c).unwrap();

            let combo: f64 = offsets
                .iter()
                .zip(&b)
                .map(|(&d, &w)| w * (poly_eval(&poly, t_ref + d) - poly_eval(&poly, t_ref)))
                .sum();

            let mut taylor_sum = 0.0;
            let mut deriv = poly.clone();
            let mut factorial = 1.0;
            for i in 1..=p {
                deriv = poly_derivative(&deriv);
                factorial *= i as f64;
                taylor_sum += c[i - 1] * poly_eval(&deriv, t_ref) / factorial;
            }
            let scale = combo.abs().max(taylor_sum.abs()).max(1e-6);
            prop_assert!((combo - taylor_sum).abs() <= 1e-9 * scale,
                "combo {combo} vs taylor {taylor_sum}");
        }
    }
}
