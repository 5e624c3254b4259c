//! Velocity-field implementations.
//!
//! Everything here is closed-form (or file-backed) so that solver accuracy
//! can be judged against known answers: a state-independent polynomial in
//! time, an affine field with a matrix-exponential solution, the exact
//! transport field for Gaussian-mixture targets, and a grid-interpolated
//! field loaded from disk. All fields are immutable after construction and
//! count their evaluations.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::core::{EvalCounter, State, VelocityField};
use crate::{Error, Result};

/// Velocity `v(x, t) = sum_i coeffs[i] * t^i`, broadcast across the state.
///
/// State-independent, so solver errors probe pure time-quadrature accuracy;
/// the exact endpoint is the termwise antiderivative.
#[derive(Debug)]
pub struct PolyTimeField {
    coeffs: Vec<f64>,
    dim: usize,
    nfe: EvalCounter,
}

impl PolyTimeField {
    pub fn new(coeffs: Vec<f64>, dim: usize) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument("need at least one coefficient".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("dim must be >= 1".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("coefficients must be finite".into()));
        }
        Ok(Self {
            coeffs,
            dim,
            nfe: EvalCounter::new(),
        })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    fn value_at(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    /// Exact state at `t_to` for a trajectory passing through `x` at `t_from`.
    pub fn exact_endpoint(&self, x: &State, t_from: f64, t_to: f64) -> State {
        let mut shift = 0.0;
        for (i, &c) in self.coeffs.iter().enumerate() {
            let p = i as i32 + 1;
            shift += c * (t_to.powi(p) - t_from.powi(p)) / f64::from(p);
        }
        State::new(x.as_slice().iter().map(|&xi| xi + shift).collect())
            .expect("finite shift of a finite state")
    }
}

impl VelocityField for PolyTimeField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &State, t: f64) -> Result<Vec<f64>> {
        self.nfe.bump();
        Ok(vec![self.value_at(t); x.dim()])
    }

    fn nfe_count(&self) -> u64 {
        self.nfe.get()
    }
}

/// Velocity `v(x, t) = A x + b` with the exact solution obtained from the
/// exponential of the augmented matrix `[[A, b], [0, 0]]`.
#[derive(Debug)]
pub struct AffineField {
    matrix: DMatrix<f64>,
    offset: DVector<f64>,
    nfe: EvalCounter,
}

impl AffineField {
    pub fn new(matrix: Vec<Vec<f64>>, offset: Vec<f64>) -> Result<Self> {
        let d = offset.len();
        if d == 0 {
            return Err(Error::InvalidArgument("dim must be >= 1".into()));
        }
        if matrix.len() != d || matrix.iter().any(|row| row.len() != d) {
            return Err(Error::InvalidArgument(format!(
                "matrix must be {d}x{d} to match the offset"
            )));
        }
        let flat: Vec<f64> = matrix.iter().flatten().copied().collect();
        if flat.iter().chain(&offset).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("entries must be finite".into()));
        }
        Ok(Self {
            matrix: DMatrix::from_row_slice(d, d, &flat),
            offset: DVector::from_vec(offset),
            nfe: EvalCounter::new(),
        })
    }

    /// Exact state at `t_to` for a trajectory passing through `x` at `t_from`.
    pub fn exact_endpoint(&self, x: &State, t_from: f64, t_to: f64) -> Result<State> {
        let d = self.offset.len();
        let mut augmented = DMatrix::zeros(d + 1, d + 1);
        augmented.view_mut((0, 0), (d, d)).copy_from(&self.matrix);
        augmented.view_mut((0, d), (d, 1)).copy_from(&self.offset);
        let propagator = (augmented * (t_to - t_from)).exp();
        let mut out = Vec::with_capacity(d);
        for i in 0..d {
            let mut acc = propagator[(i, d)];
            for j in 0..d {
                acc += propagator[(i, j)] * x.as_slice()[j];
            }
            out.push(acc);
        }
        State::new(out)
    }
}

impl VelocityField for AffineField {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn eval(&self, x: &State, _t: f64) -> Result<Vec<f64>> {
        self.nfe.bump();
        let d = self.offset.len();
        if x.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.dim(),
            });
        }
        let mut out = Vec::with_capacity(d);
        for i in 0..d {
            let mut acc = self.offset[i];
            for j in 0..d {
                acc += self.matrix[(i, j)] * x.as_slice()[j];
            }
            out.push(acc);
        }
        Ok(out)
    }

    fn nfe_count(&self) -> u64 {
        self.nfe.get()
    }
}

/// Exact transport field for an isotropic Gaussian-mixture target.
///
/// The underlying path interpolates linearly between a data draw `x0` from
/// the mixture (at `t = 0`) and a noise draw `x1 ~ N(0, I)` (at `t = 1`):
/// `x_t = t * x1 + (1 - t) * x0`. The marginal velocity is the conditional
/// expectation `E[x1 - x0 | x_t = x]`. Per component k with mean `mu_k` and
/// shared standard deviation `sigma0`, `(x0, x1, x_t)` are jointly Gaussian,
/// so the conditional mean is affine in `x`:
///
/// ```text
/// s2(t)   = t^2 + (1 - t)^2 * sigma0^2          (marginal variance)
/// a(t)    = (t - (1 - t) * sigma0^2) / s2(t)
/// v_k     = a(t) * (x - (1 - t) * mu_k) - mu_k
/// ```
///
/// Components are mixed by posterior responsibilities proportional to
/// `w_k * N(x; (1 - t) * mu_k, s2(t) I)`, computed with log-sum-exp
/// stabilization. `s2` stays positive for all `t` in `[0, 1]` whenever
/// `sigma0 > 0`, so no limit handling is needed at the endpoints.
#[derive(Debug)]
pub struct GaussianMixtureField {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    std: f64,
    dim: usize,
    nfe: EvalCounter,
}

impl GaussianMixtureField {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, std: f64) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() {
            return Err(Error::InvalidArgument(
                "need matching, non-empty weights and means".into(),
            ));
        }
        if weights.iter().any(|&w| w <= 0.0 || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "weights must sum to 1, got {total}"
            )));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::InvalidArgument(
                "means must share one dimension >= 1".into(),
            ));
        }
        if means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("means must be finite".into()));
        }
        if std <= 0.0 || !std.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "component std must be positive, got {std}"
            )));
        }
        Ok(Self {
            weights,
            means,
            std,
            dim,
            nfe: EvalCounter::new(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    /// Mean of the target mixture.
    pub fn target_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for (w, mu) in self.weights.iter().zip(&self.means) {
            for (m, &c) in mean.iter_mut().zip(mu) {
                *m += w * c;
            }
        }
        mean
    }

    /// Covariance of the target mixture: `sigma0^2 I + sum_k w_k mu_k mu_k^T
    /// - mean mean^T`.
    pub fn target_covariance(&self) -> Vec<Vec<f64>> {
        let mean = self.target_mean();
        let mut cov = vec![vec![0.0; self.dim]; self.dim];
        for (w, mu) in self.weights.iter().zip(&self.means) {
            for i in 0..self.dim {
                for j in 0..self.dim {
                    cov[i][j] += w * mu[i] * mu[j];
                }
            }
        }
        for i in 0..self.dim {
            for j in 0..self.dim {
                cov[i][j] -= mean[i] * mean[j];
            }
            cov[i][i] += self.std * self.std;
        }
        cov
    }

    /// Draws one exact target sample given a component pick in `[0, 1)` and
    /// a standard-normal vector.
    pub fn target_sample(&self, component_pick: f64, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        let mut acc = 0.0;
        let mut chosen = self.means.len() - 1;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if component_pick < acc {
                chosen = k;
                break;
            }
        }
        Ok(self.means[chosen]
            .iter()
            .zip(z)
            .map(|(&m, &zi)| m + self.std * zi)
            .collect())
    }
}

impl VelocityField for GaussianMixtureField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &State, t: f64) -> Result<Vec<f64>> {
        self.nfe.bump();
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "time {t} outside [0, 1]"
            )));
        }
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        let xs = x.as_slice();
        let one_minus_t = 1.0 - t;
        let s2 = t * t + one_minus_t * one_minus_t * self.std * self.std;
        let a = (t - one_minus_t * self.std * self.std) / s2;

        // Log responsibilities up to the shared normalizer.
        let mut logs = Vec::with_capacity(self.weights.len());
        for (w, mu) in self.weights.iter().zip(&self.means) {
            let sq: f64 = xs
                .iter()
                .zip(mu)
                .map(|(&xi, &mi)| {
                    let d = xi - one_minus_t * mi;
                    d * d
                })
                .sum();
            logs.push(w.ln() - 0.5 * sq / s2);
        }
        let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in logs.iter_mut() {
            *l = (*l - peak).exp();
            total += *l;
        }

        let mut v = vec![0.0; self.dim];
        for (r, mu) in logs.iter().zip(&self.means) {
            let resp = r / total;
            for (vi, (&xi, &mi)) in v.iter_mut().zip(xs.iter().zip(mu)) {
                *vi += resp * (a * (xi - one_minus_t * mi) - mi);
            }
        }
        Ok(v)
    }

    fn nfe_count(&self) -> u64 {
        self.nfe.get()
    }
}

const GRID_MAGIC: &[u8; 8] = b"FLOWGRID";

#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct GridHeader {
    dim: usize,
    x_min: Vec<f64>,
    x_max: Vec<f64>,
    x_points: Vec<usize>,
    t_min: f64,
    t_max: f64,
    t_points: usize,
}

/// Velocity field sampled on a dense regular grid over state and time,
/// queried by multilinear interpolation. Queries outside the grid are
/// errors; nothing is extrapolated.
#[derive(Debug)]
pub struct GridField {
    dim: usize,
    x_min: Vec<f64>,
    x_max: Vec<f64>,
    x_points: Vec<usize>,
    t_min: f64,
    t_max: f64,
    t_points: usize,
    values: Vec<f64>,
    nfe: EvalCounter,
}

/// Loads a grid field from its binary file format: the 8-byte magic
/// `FLOWGRID`, a u32 little-endian byte length, that many bytes of UTF-8
/// JSON header (`dim`, per-dimension `x_min`/`x_max`/`x_points`, `t_min`,
/// `t_max`, `t_points`), then `t_points * prod(x_points) * dim` 32-bit
/// little-endian floats ordered with time outermost, state axes next, and
/// the vector component innermost.
pub fn load_grid_field(path: &Path) -> Result<GridField> {
    let bytes = std::fs::read(path)?;
    GridField::from_bytes(&bytes)
}

impl GridField {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |offset: usize, msg: String| Error::Format { offset, msg };
        if bytes.len() < 12 {
            return Err(fail(0, "file shorter than magic plus header length".into()));
        }
        if &bytes[..8] != GRID_MAGIC {
            return Err(fail(0, "bad magic, expected FLOWGRID".into()));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let payload_start = 12 + header_len;
        if payload_start > bytes.len() {
            return Err(fail(
                8,
                format!(
                    "header length {header_len} overruns the file ({} bytes)",
                    bytes.len()
                ),
            ));
        }
        let header: GridHeader = serde_json::from_slice(&bytes[12..payload_start])
            .map_err(|e| fail(12, format!("header JSON: {e}")))?;

        if header.dim != 1 && header.dim != 2 {
            return Err(fail(12, format!("dim must be 1 or 2, got {}", header.dim)));
        }
        let d = header.dim;
        if header.x_min.len() != d || header.x_max.len() != d || header.x_points.len() != d {
            return Err(fail(
                12,
                "x_min, x_max, x_points must each have one entry per dimension".into(),
            ));
        }
        let bounds_finite = header
            .x_min
            .iter()
            .chain(&header.x_max)
            .chain([&header.t_min, &header.t_max])
            .all(|v| v.is_finite());
        if !bounds_finite {
            return Err(fail(12, "axis bounds must be finite".into()));
        }
        for k in 0..d {
            if header.x_points[k] < 2 {
                return Err(fail(12, format!("x_points[{k}] must be >= 2")));
            }
            if header.x_min[k] >= header.x_max[k] {
                return Err(fail(12, format!("x_min[{k}] must be below x_max[{k}]")));
            }
        }
        if header.t_points < 2 {
            return Err(fail(12, "t_points must be >= 2".into()));
        }
        if header.t_min >= header.t_max {
            return Err(fail(12, "t_min must be below t_max".into()));
        }

        let n_values: usize = header.x_points.iter().product::<usize>() * header.t_points * d;
        let expected_bytes = n_values * 4;
        let actual = bytes.len() - payload_start;
        if actual != expected_bytes {
            return Err(fail(
                payload_start,
                format!("payload holds {actual} bytes, expected {expected_bytes}"),
            ));
        }
        let mut values = Vec::with_capacity(n_values);
        for i in 0..n_values {
            let at = payload_start + 4 * i;
            let v = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(fail(at, format!("non-finite value {v}")));
            }
            values.push(f64::from(v));
        }
        Ok(Self {
            dim: d,
            x_min: header.x_min,
            x_max: header.x_max,
            x_points: header.x_points,
            t_min: header.t_min,
            t_max: header.t_max,
            t_points: header.t_points,
            values,
            nfe: EvalCounter::new(),
        })
    }

    /// Cell index and in-cell fraction along one axis; `None` out of range.
    fn locate(q: f64, min: f64, max: f64, points: usize) -> Option<(usize, f64)> {
        if !(min..=max).contains(&q) {
            return None;
        }
        let u = (q - min) / (max - min) * (points - 1) as f64;
        let cell = (u.floor() as usize).min(points - 2);
        Some((cell, u - cell as f64))
    }

    fn value(&self, ti: usize, xi: &[usize], comp: usize) -> f64 {
        let mut idx = ti;
        for (k, &i) in xi.iter().enumerate() {
            idx = idx * self.x_points[k] + i;
        }
        self.values[idx * self.dim + comp]
    }
}

impl VelocityField for GridField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &State, t: f64) -> Result<Vec<f64>> {
        self.nfe.bump();
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        let (t_cell, t_frac) = Self::locate(t, self.t_min, self.t_max, self.t_points)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "time {t} outside grid range [{}, {}]",
                    self.t_min, self.t_max
                ))
            })?;
        let mut cells = Vec::with_capacity(self.dim);
        for k in 0..self.dim {
            let q = x.as_slice()[k];
            let located = Self::locate(q, self.x_min[k], self.x_max[k], self.x_points[k])
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "coordinate {q} outside grid range [{}, {}] on axis {k}",
                        self.x_min[k], self.x_max[k]
                    ))
                })?;
            cells.push(located);
        }

        // Multilinear blend over the 2^(dim+1) cell corners.
        let mut out = vec![0.0; self.dim];
        let corners = 1usize << (self.dim + 1);
        for corner in 0..corners {
            let t_hi = corner & 1 == 1;
            let mut weight = if t_hi { t_frac } else { 1.0 - t_frac };
            let mut xi = Vec::with_capacity(self.dim);
            for (k, &(cell, frac)) in cells.iter().enumerate() {
                let hi = (corner >> (k + 1)) & 1 == 1;
                weight *= if hi { frac } else { 1.0 - frac };
                xi.push(cell + usize::from(hi));
            }
            if weight == 0.0 {
                continue;
            }
            let ti = t_cell + usize::from(t_hi);
            for (comp, o) in out.iter_mut().enumerate() {
                *o += weight * self.value(ti, &xi, comp);
            }
        }
        Ok(out)
    }

    fn nfe_count(&self) -> u64 {
        self.nfe.get()
    }
}
