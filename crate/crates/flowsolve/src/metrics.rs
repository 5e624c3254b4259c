//! Error norms, empirical convergence-order fitting, and distribution
//! distances (state-space Fréchet/W2 on Gaussian moments, and energy
//! distance on sample sets).

use nalgebra::DMatrix;

use crate::core::State;
use crate::{Error, Result};

/// Errors at or below this are treated as the double-precision floor and
/// excluded from order fits.
pub const ERROR_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L2,
    Linf,
}

/// Norm of the difference between two states.
pub fn endpoint_error(approx: &State, exact: &State, norm: Norm) -> Result<f64> {
    if approx.dim() != exact.dim() {
        return Err(Error::DimensionMismatch {
            expected: exact.dim(),
            got: approx.dim(),
        });
    }
    let diffs = approx
        .as_slice()
        .iter()
        .zip(exact.as_slice())
        .map(|(&a, &b)| a - b);
    Ok(match norm {
        Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        Norm::Linf => diffs.map(f64::abs).fold(0.0, f64::max),
    })
}

/// Least-squares fit of `log(error)` against `log(h)` with `h` proportional
/// to `1 / step_count`.
#[derive(Debug, Clone)]
pub struct ConvergenceResult {
    pub step_counts: Vec<usize>,
    pub errors: Vec<f64>,
    /// Fitted order: the slope of log error versus log step size.
    pub slope: f64,
    /// Coefficient of determination of the fit, in `[0, 1]`.
    pub r_squared: f64,
    /// Points dropped because the error sat at the floating-point floor.
    pub excluded: usize,
}

/// Fits the empirical convergence order from endpoint errors at increasing
/// step counts. Errors at the double-precision floor are excluded; fewer
/// than three usable points is an error.
pub fn fit_order(step_counts: &[usize], errors: &[f64]) -> Result<ConvergenceResult> {
    if step_counts.len() != errors.len() {
        return Err(Error::DimensionMismatch {
            expected: step_counts.len(),
            got: errors.len(),
        });
    }
    if step_counts.len() < 3 {
        return Err(Error::InvalidArgument(
            "order fit needs at least 3 points".into(),
        ));
    }
    for w in step_counts.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidArgument(
                "step counts must be strictly increasing".into(),
            ));
        }
    }
    if step_counts[0] == 0 {
        return Err(Error::InvalidArgument("step counts must be >= 1".into()));
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = 0;
    for (&n, &e) in step_counts.iter().zip(errors) {
        if !e.is_finite() || e <= ERROR_FLOOR {
            excluded += 1;
            continue;
        }
        xs.push(-(n as f64).ln()); // log h up to a constant
        ys.push(e.ln());
    }
    if xs.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "only {} usable points after excluding {excluded} at the error floor",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(ConvergenceResult {
        step_counts: step_counts.to_vec(),
        errors: errors.to_vec(),
        slope,
        r_squared,
        excluded,
    })
}

// Transpose-pair access reads clearest with plain indices.
#[allow(clippy::needless_range_loop)]
fn check_square_symmetric(m: &[Vec<f64>], d: usize) -> Result<()> {
    if m.len() != d || m.iter().any(|row| row.len() != d) {
        return Err(Error::InvalidArgument(format!("covariance must be {d}x{d}")));
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let scale = 1.0f64.max(m[i][j].abs()).max(m[j][i].abs());
            if (m[i][j] - m[j][i]).abs() > 1e-9 * scale {
                return Err(Error::InvalidArgument(format!(
                    "covariance is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Symmetric square root by eigendecomposition, clamping negative
/// eigenvalues (rounding noise on PSD inputs) to zero.
fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let symmetrized = (m + m.transpose()) * 0.5;
    let eigen = symmetrized.symmetric_eigen();
    let d = m.nrows();
    let mut out = DMatrix::zeros(d, d);
    for k in 0..d {
        let lambda = eigen.eigenvalues[k].max(0.0).sqrt();
        let col = eigen.eigenvectors.column(k);
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] += lambda * col[i] * col[j];
            }
        }
    }
    out
}

/// Squared 2-Wasserstein (Fréchet) distance between two Gaussians:
/// `|mu_a - mu_b|^2 + tr(Ca + Cb - 2 (Cb^1/2 Ca Cb^1/2)^1/2)`.
///
/// Degenerate covariances are admitted; eigenvalues are clamped at zero
/// inside the matrix square roots, and the result is clamped at zero.
pub fn gaussian_w2(
    mean_a: &[f64],
    cov_a: &[Vec<f64>],
    mean_b: &[f64],
    cov_b: &[Vec<f64>],
) -> Result<f64> {
    let d = mean_a.len();
    if d == 0 || mean_b.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: mean_b.len(),
        });
    }
    check_square_symmetric(cov_a, d)?;
    check_square_symmetric(cov_b, d)?;

    let ca = DMatrix::from_fn(d, d, |i, j| cov_a[i][j]);
    let cb = DMatrix::from_fn(d, d, |i, j| cov_b[i][j]);
    let sqrt_b = sym_sqrt(&cb);
    let cross = sym_sqrt(&(&sqrt_b * &ca * &sqrt_b));

    let mean_term: f64 = mean_a
        .iter()
        .zip(mean_b)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let trace_term = ca.trace() + cb.trace() - 2.0 * cross.trace();
    Ok((mean_term + trace_term).max(0.0))
}

/// Energy distance between two sample sets with exact pairwise sums:
/// `2 E|A - B| - E|A - A'| - E|B - B'|`, each expectation over all ordered
/// pairs. Zero on identical sets, exactly.
pub fn energy_distance(samples_a: &[State], samples_b: &[State]) -> Result<f64> {
    let (na, nb) = (samples_a.len(), samples_b.len());
    if na == 0 || nb == 0 {
        return Err(Error::InvalidArgument("sample sets must be non-empty".into()));
    }
    let d = samples_a[0].dim();
    for s in samples_a.iter().chain(samples_b) {
        if s.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: s.dim(),
            });
        }
    }
    // All three terms run over full ordered-pair grids in the same order,
    // so on identical inputs they accumulate bitwise-equal sums and the
    // result cancels to exactly zero.
    let pair_mean = |xs: &[State], ys: &[State]| -> f64 {
        let mut acc = 0.0;
        for x in xs {
            for y in ys {
                let sq: f64 = x
                    .as_slice()
                    .iter()
                    .zip(y.as_slice())
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum();
                acc += sq.sqrt();
            }
        }
        acc / (xs.len() as f64 * ys.len() as f64)
    };
    let value =
        2.0 * pair_mean(samples_a, samples_b) - pair_mean(samples_a, samples_a) - pair_mean(samples_b, samples_b);
    Ok(value.max(0.0))
}
