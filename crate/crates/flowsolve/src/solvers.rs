//! The four steppers — Euler, Heun, RK-3, and the cached multistep
//! predictor-corrector — plus the sampler that walks a [`TimeSchedule`].
//!
//! The multistep stepper (`flow`) evaluates the velocity once per step and
//! raises its accuracy by combining differences against cached evaluations
//! from previous steps. An order-`s` configuration uses `s` velocity points
//! per prediction (the current one plus up to `s - 1` cached); with no
//! history it reduces to the Euler update bit for bit. The optional
//! corrector re-refines the previous interval's endpoint as soon as the
//! current evaluation is available, raising the effective order by one at no
//! extra evaluation cost.

use crate::coeffs::{self, StepCoefficients, MAX_ORDER};
use crate::core::{HistoryBuffer, State, TimeSchedule, VelocityField, VelocityRecord};
use crate::{Error, Result};

/// Stepper selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Heun,
    Rk3,
    Flow,
}

impl Method {
    /// Velocity evaluations per schedule interval.
    pub fn evals_per_step(self) -> usize {
        match self {
            Method::Euler | Method::Flow => 1,
            Method::Heun => 2,
            Method::Rk3 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::Heun => "heun",
            Method::Rk3 => "rk3",
            Method::Flow => "flow",
        }
    }
}

/// Sampler configuration. `order` and `use_corrector` only affect the
/// multistep method; Euler, Heun, and RK-3 ignore both.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub method: Method,
    pub order: usize,
    pub use_corrector: bool,
    pub schedule: TimeSchedule,
}

impl SolverConfig {
    pub fn new(
        method: Method,
        order: usize,
        use_corrector: bool,
        schedule: TimeSchedule,
    ) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::InvalidArgument(format!(
                "order must be in 1..={MAX_ORDER}, got {order}"
            )));
        }
        Ok(Self {
            method,
            order,
            use_corrector,
            schedule,
        })
    }
}

/// One sampled trajectory: a state per schedule time, the total evaluation
/// count, and (for the multistep method) the per-step coefficients used.
///
/// With the corrector enabled, interior states hold their corrected values;
/// the final state is always the last prediction, since no evaluation is
/// made at the terminal time.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub states: Vec<State>,
    pub nfe: u64,
    pub per_step_coeffs: Option<Vec<StepCoefficients>>,
}

impl TrajectoryRecord {
    /// Final state of the walk.
    pub fn endpoint(&self) -> &State {
        self.states.last().expect("trajectory has at least one state")
    }
}

fn eval_checked(field: &dyn VelocityField, x: &State, t: f64) -> Result<Vec<f64>> {
    let v = field.eval(x, t)?;
    if v.len() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: v.len(),
        });
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(Error::NumericalFailure {
            t,
            msg: "velocity is not finite".into(),
        });
    }
    Ok(v)
}

fn finish_state(data: Vec<f64>, t: f64) -> Result<State> {
    State::new(data).map_err(|_| Error::NumericalFailure {
        t,
        msg: "state update left the finite range".into(),
    })
}

/// `x + h * v`, the shared first-order update. The multistep predictor with
/// an empty history must match the Euler stepper bit for bit, so both go
/// through this one expression.
fn euler_update(x: &[f64], h: f64, v: &[f64]) -> Vec<f64> {
    x.iter().zip(v).map(|(&xi, &vi)| xi + h * vi).collect()
}

/// Forward Euler: one evaluation, update `x + h * v(x, t_prev)`.
pub fn step_euler(
    field: &dyn VelocityField,
    x: &State,
    t_prev: f64,
    t_next: f64,
) -> Result<State> {
    let v = eval_checked(field, x, t_prev)?;
    finish_state(euler_update(x.as_slice(), t_next - t_prev, &v), t_prev)
}

/// Heun: Euler predictor then trapezoidal average, two evaluations.
pub fn step_heun(
    field: &dyn VelocityField,
    x: &State,
    t_prev: f64,
    t_next: f64,
) -> Result<State> {
    let h = t_next - t_prev;
    let v0 = eval_checked(field, x, t_prev)?;
    let predicted = finish_state(euler_update(x.as_slice(), h, &v0), t_prev)?;
    let v1 = eval_checked(field, &predicted, t_next)?;
    let data = x
        .as_slice()
        .iter()
        .zip(v0.iter().zip(&v1))
        .map(|(&xi, (&a, &b))| xi + 0.5 * h * (a + b))
        .collect();
    finish_state(data, t_next)
}

/// Kutta's third-order method: stages at `t`, `t + h/2`, `t + h` with
/// weights 1/6, 4/6, 1/6. Three evaluations.
pub fn step_rk3(
    field: &dyn VelocityField,
    x: &State,
    t_prev: f64,
    t_next: f64,
) -> Result<State> {
    let h = t_next - t_prev;
    let k1 = eval_checked(field, x, t_prev)?;
    let mid = finish_state(euler_update(x.as_slice(), 0.5 * h, &k1), t_prev)?;
    let k2 = eval_checked(field, &mid, t_prev + 0.5 * h)?;
    let end_data = x
        .as_slice()
        .iter()
        .zip(k1.iter().zip(&k2))
        .map(|(&xi, (&a, &b))| xi - h * a + 2.0 * h * b)
        .collect();
    let end = finish_state(end_data, t_prev)?;
    let k3 = eval_checked(field, &end, t_next)?;
    let data = x
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &xi)| xi + h / 6.0 * (k1[i] + 4.0 * k2[i] + k3[i]))
        .collect();
    finish_state(data, t_next)
}

/// Multistep prediction of the state at `t_next` from `(x, t_prev)` with the
/// already-evaluated velocity `v_cur`. Uses up to `order - 1` of the newest
/// cached records; performs no field evaluations itself.
///
/// Returns the predicted state together with the coefficients used (empty
/// coefficient vectors mean the step degenerated to plain Euler).
pub fn step_flow_predict(
    x: &State,
    t_prev: f64,
    t_next: f64,
    v_cur: &[f64],
    buffer: &HistoryBuffer,
    order: usize,
) -> Result<(State, StepCoefficients)> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::InvalidArgument(format!(
            "order must be in 1..={MAX_ORDER}, got {order}"
        )));
    }
    if v_cur.len() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: v_cur.len(),
        });
    }
    let points = buffer.len().min(order - 1);
    // Newest records first: offsets from t_prev come out strictly increasing.
    let used: Vec<&VelocityRecord> = buffer.records().rev().take(points).collect();
    let times: Vec<f64> = used.iter().map(|r| r.t).collect();
    let sc = coeffs::step_coefficients(t_prev, t_next, &times)?;

    let mut data = euler_update(x.as_slice(), sc.h, v_cur);
    for (record, &w) in used.iter().zip(&sc.weights) {
        if record.velocity.len() != x.dim() {
            return Err(Error::DimensionMismatch {
                expected: x.dim(),
                got: record.velocity.len(),
            });
        }
        for (d, (&vm, &vc)) in data.iter_mut().zip(record.velocity.iter().zip(v_cur)) {
            *d += w * (vm - vc);
        }
    }
    Ok((finish_state(data, t_prev)?, sc))
}

/// Re-refines the previous interval's endpoint once the velocity at that
/// endpoint is known.
///
/// `x_predicted` is the state the predictor produced at `t_cur` when
/// stepping from `t_prev`; `v_new` is the velocity just evaluated there.
/// The buffer must still hold the record pushed at `t_prev` (newest) plus
/// whatever older records that prediction used. The correction replaces the
/// predictor's history combination with one that includes the new endpoint
/// evaluation as an extra node, which is exact for velocities one polynomial
/// degree higher. The buffer itself is left untouched.
pub fn step_flow_correct(
    x_predicted: &State,
    v_new: &[f64],
    t_prev: f64,
    t_cur: f64,
    buffer: &HistoryBuffer,
) -> Result<State> {
    let newest = buffer
        .newest()
        .ok_or_else(|| Error::InvalidState("corrector needs a non-empty history".into()))?;
    if newest.t != t_prev {
        return Err(Error::InvalidArgument(format!(
            "newest cached record is at t = {}, expected the previous step start {}",
            newest.t, t_prev
        )));
    }
    let dim = x_predicted.dim();
    if v_new.len() != dim || newest.velocity.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v_new.len(),
        });
    }
    let v_base = &newest.velocity;
    let older: Vec<&VelocityRecord> = buffer.records().rev().skip(1).collect();

    let mut data = x_predicted.as_slice().to_vec();

    // Undo the combination the predictor applied over the old nodes.
    if !older.is_empty() {
        let times: Vec<f64> = older.iter().map(|r| r.t).collect();
        let sc = coeffs::step_coefficients(t_prev, t_cur, &times)?;
        for (record, &w) in older.iter().zip(&sc.weights) {
            for (d, (&vm, &vb)) in data.iter_mut().zip(record.velocity.iter().zip(v_base)) {
                *d -= w * (vm - vb);
            }
        }
    }

    // Re-apply it with the endpoint evaluation as an extra node. That node
    // sits at the (negative) step offset, which the solver accepts: only
    // distinctness matters.
    let mut offsets = vec![t_cur - t_prev];
    let mut diffs: Vec<Vec<f64>> = vec![v_new
        .iter()
        .zip(v_base)
        .map(|(&vn, &vb)| vn - vb)
        .collect()];
    for record in &older {
        offsets.push(record.t - t_prev);
        diffs.push(
            record
                .velocity
                .iter()
                .zip(v_base)
                .map(|(&vm, &vb)| vm - vb)
                .collect(),
        );
    }
    let taylor = coeffs::taylor_weights(t_prev, t_cur, offsets.len())?;
    let weights = coeffs::solve_history_weights(&offsets, &taylor)?;
    for (diff, &w) in diffs.iter().zip(&weights) {
        for (d, &dm) in data.iter_mut().zip(diff) {
            *d += w * dm;
        }
    }
    finish_state(data, t_cur)
}

/// Walks the configured schedule from its first time to its last.
///
/// The multistep method evaluates the velocity exactly once per interval, at
/// the interval's start, and caches it. When the corrector is enabled — or
/// while the history is still shorter than the configured order needs, so
/// the previous prediction ran below order — the fresh evaluation first
/// re-refines the previous endpoint before the next prediction. Warm-up
/// corrections keep the early low-order steps from capping the convergence
/// order of the whole trajectory; they cost nothing, since the evaluation is
/// already in hand.
///
/// Total evaluations on an `N`-interval schedule: `N` for Euler and the
/// multistep method, `2N` for Heun, `3N` for RK-3.
pub fn sample(
    config: &SolverConfig,
    field: &dyn VelocityField,
    x_init: &State,
) -> Result<TrajectoryRecord> {
    if x_init.dim() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: x_init.dim(),
        });
    }
    match config.method {
        Method::Flow => sample_flow(config, field, x_init),
        _ => sample_single_step(config, field, x_init),
    }
}

fn sample_single_step(
    config: &SolverConfig,
    field: &dyn VelocityField,
    x_init: &State,
) -> Result<TrajectoryRecord> {
    let times = config.schedule.times();
    let mut states = Vec::with_capacity(times.len());
    states.push(x_init.clone());
    let mut x = x_init.clone();
    let mut nfe = 0u64;
    for step in 1..times.len() {
        let (t_prev, t_next) = (times[step - 1], times[step]);
        x = match config.method {
            Method::Euler => step_euler(field, &x, t_prev, t_next),
            Method::Heun => step_heun(field, &x, t_prev, t_next),
            Method::Rk3 => step_rk3(field, &x, t_prev, t_next),
            Method::Flow => unreachable!(),
        }
        .map_err(|e| Error::Step {
            index: step,
            source: Box::new(e),
        })?;
        nfe += config.method.evals_per_step() as u64;
        states.push(x.clone());
    }
    Ok(TrajectoryRecord {
        states,
        nfe,
        per_step_coeffs: None,
    })
}

fn sample_flow(
    config: &SolverConfig,
    field: &dyn VelocityField,
    x_init: &State,
) -> Result<TrajectoryRecord> {
    let times = config.schedule.times();
    let order = config.order;
    let mut buffer = HistoryBuffer::new(order)?;
    let mut states = Vec::with_capacity(times.len());
    states.push(x_init.clone());
    let mut x = x_init.clone();
    let mut nfe = 0u64;
    let mut coeffs_log = Vec::with_capacity(times.len() - 1);
    let mut prev_ran_reduced = false;

    for step in 1..times.len() {
        let (t_prev, t_next) = (times[step - 1], times[step]);
        let wrap = |e: Error| Error::Step {
            index: step,
            source: Box::new(e),
        };

        let v_cur = eval_checked(field, &x, t_prev).map_err(wrap)?;
        nfe += 1;
        let x_at_eval = x.clone();

        if (config.use_corrector || prev_ran_reduced) && !buffer.is_empty() {
            x = step_flow_correct(&x, &v_cur, times[step - 2], t_prev, &buffer).map_err(wrap)?;
            states[step - 1] = x.clone();
        }

        let (next, sc) =
            step_flow_predict(&x, t_prev, t_next, &v_cur, &buffer, order).map_err(wrap)?;
        prev_ran_reduced = sc.points < order - 1;
        coeffs_log.push(sc);

        buffer
            .push(VelocityRecord::new(t_prev, v_cur, x_at_eval.into_vec()).map_err(wrap)?)
            .map_err(wrap)?;
        x = next;
        states.push(x.clone());
    }
    Ok(TrajectoryRecord {
        states,
        nfe,
        per_step_coeffs: Some(coeffs_log),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::make_uniform_schedule;
    use crate::fields::PolyTimeField;
    use approx::assert_relative_eq;

    fn zero_state(dim: usize) -> State {
        State::new(vec![0.0; dim]).unwrap()
    }

    #[test]
    fn euler_constant_field() {
        let field = PolyTimeField::new(vec![2.0], 1).unwrap();
        let x = step_euler(&field, &zero_state(1), 1.0, 0.5).unwrap();
        assert_relative_eq!(x.as_slice()[0], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn euler_zero_field_is_identity() {
        let field = PolyTimeField::new(vec![0.0], 2).unwrap();
        let start = State::new(vec![1.5, -0.5]).unwrap();
        let x = step_euler(&field, &start, 1.0, 0.5).unwrap();
        assert_eq!(x, start);
    }

    #[test]
    fn euler_linear_velocity_error_is_first_order() {
        // v = t over [1, 0.5]: Euler gives -0.5, the true integral is -0.375.
        let field = PolyTimeField::new(vec![0.0, 1.0], 1).unwrap();
        let x = step_euler(&field, &zero_state(1), 1.0, 0.5).unwrap();
        assert_relative_eq!(x.as_slice()[0], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn heun_exact_on_linear_velocity() {
        let field = PolyTimeField::new(vec![0.0, 1.0], 1).unwrap();
        let x = step_heun(&field, &zero_state(1), 1.0, 0.5).unwrap();
        assert_relative_eq!(x.as_slice()[0], -0.375, epsilon = 1e-15);
    }

    #[test]
    fn heun_constant_field_matches_euler() {
        let field = PolyTimeField::new(vec![-1.25], 1).unwrap();
        let e = step_euler(&field, &zero_state(1), 1.0, 0.6).unwrap();
        let h = step_heun(&field, &zero_state(1), 1.0, 0.6).unwrap();
        assert_relative_eq!(e.as_slice()[0], h.as_slice()[0], epsilon = 1e-15);
    }

    #[test]
    fn rk3_constant_field_matches_euler() {
        let field = PolyTimeField::new(vec![0.7], 1).unwrap();
        let x = step_rk3(&field, &zero_state(1), 1.0, 0.4).unwrap();
        assert_relative_eq!(x.as_slice()[0], -0.6 * 0.7, epsilon = 1e-15);
    }

    #[test]
    fn rk3_exact_on_quadratic_velocity() {
        // v = t^2 over one step [1, 0]: Simpson weights integrate it exactly.
        let field = PolyTimeField::new(vec![0.0, 0.0, 1.0], 1).unwrap();
        let x = step_rk3(&field, &zero_state(1), 1.0, 0.0).unwrap();
        assert_relative_eq!(x.as_slice()[0], -1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn predict_without_history_is_euler_bitwise() {
        let field = PolyTimeField::new(vec![0.3, -1.1, 0.7], 3).unwrap();
        let x = State::new(vec![0.2, -0.4, 1.0]).unwrap();
        let v = field.eval(&x, 0.9).unwrap();
        let buffer = HistoryBuffer::new(3).unwrap();
        let (predicted, sc) = step_flow_predict(&x, 0.9, 0.7, &v, &buffer, 3).unwrap();
        let euler = step_euler(&field, &x, 0.9, 0.7).unwrap();
        assert_eq!(sc.points, 0);
        for (a, b) in predicted.as_slice().iter().zip(euler.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn predict_constant_field_kills_differences() {
        let field = PolyTimeField::new(vec![0.8], 1).unwrap();
        let x = zero_state(1);
        let v = field.eval(&x, 0.75).unwrap();
        let mut buffer = HistoryBuffer::new(2).unwrap();
        buffer
            .push(VelocityRecord::new(1.0, vec![0.8], vec![0.0]).unwrap())
            .unwrap();
        let (predicted, _) = step_flow_predict(&x, 0.75, 0.5, &v, &buffer, 2).unwrap();
        let euler = step_euler(&field, &x, 0.75, 0.5).unwrap();
        assert_relative_eq!(
            predicted.as_slice()[0],
            euler.as_slice()[0],
            epsilon = 1e-15
        );
    }

    #[test]
    fn predict_two_points_exact_on_linear_velocity() {
        // v = t, uniform grid h = -0.25, one history node at t_prev + 0.25:
        // the two-point rule integrates linear velocities exactly.
        let field = PolyTimeField::new(vec![0.0, 1.0], 1).unwrap();
        let x = State::new(vec![-0.21875]).unwrap(); // exact integral 1 -> 0.75
        let v = field.eval(&x, 0.75).unwrap();
        let mut buffer = HistoryBuffer::new(2).unwrap();
        buffer
            .push(VelocityRecord::new(1.0, vec![1.0], vec![0.0]).unwrap())
            .unwrap();
        let (predicted, sc) = step_flow_predict(&x, 0.75, 0.5, &v, &buffer, 2).unwrap();
        assert_eq!(sc.points, 1);
        // exact endpoint: integral of t from 1 to 0.5 = -0.375
        assert_relative_eq!(predicted.as_slice()[0], -0.375, epsilon = 1e-14);
    }

    #[test]
    fn correct_constant_field_is_identity() {
        let x_pred = State::new(vec![0.4]).unwrap();
        let mut buffer = HistoryBuffer::new(2).unwrap();
        buffer
            .push(VelocityRecord::new(0.8, vec![2.0], vec![0.0]).unwrap())
            .unwrap();
        let corrected = step_flow_correct(&x_pred, &[2.0], 0.8, 0.6, &buffer).unwrap();
        assert_relative_eq!(corrected.as_slice()[0], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn correct_single_node_matches_heun_update() {
        // With only the previous evaluation cached, correcting an Euler
        // prediction reproduces the trapezoid update.
        let field = PolyTimeField::new(vec![0.0, 1.0], 1).unwrap();
        let x0 = zero_state(1);
        let (t0, t1) = (1.0, 0.6);
        let predicted = step_euler(&field, &x0, t0, t1).unwrap();
        let mut buffer = HistoryBuffer::new(1).unwrap();
        buffer
            .push(VelocityRecord::new(t0, vec![1.0], vec![0.0]).unwrap())
            .unwrap();
        let v_new = field.eval(&predicted, t1).unwrap();
        let corrected = step_flow_correct(&predicted, &v_new, t0, t1, &buffer).unwrap();
        let heun = step_heun(&field, &x0, t0, t1).unwrap();
        assert_relative_eq!(
            corrected.as_slice()[0],
            heun.as_slice()[0],
            epsilon = 1e-14
        );
    }

    #[test]
    fn correct_two_nodes_exact_on_quadratic_velocity() {
        // Order 2 with the endpoint node added integrates t^2 exactly over
        // the corrected interval, where the predictor alone does not.
        let field = PolyTimeField::new(vec![0.0, 0.0, 1.0], 1).unwrap();
        let exact = |a: f64, b: f64| (b.powi(3) - a.powi(3)) / 3.0;
        let (t_hist, t0, t1) = (1.0, 0.75, 0.5);
        let x0 = State::new(vec![exact(1.0, t0)]).unwrap();
        let v0 = field.eval(&x0, t0).unwrap();
        let mut buffer = HistoryBuffer::new(2).unwrap();
        buffer
            .push(VelocityRecord::new(t_hist, vec![1.0], vec![0.0]).unwrap())
            .unwrap();
        let (predicted, _) = step_flow_predict(&x0, t0, t1, &v0, &buffer, 2).unwrap();
        buffer
            .push(VelocityRecord::new(t0, v0, x0.as_slice().to_vec()).unwrap())
            .unwrap();
        let v_new = field.eval(&predicted, t1).unwrap();
        let corrected = step_flow_correct(&predicted, &v_new, t0, t1, &buffer).unwrap();
        let expect = exact(1.0, t0) + exact(t0, t1);
        assert!((predicted.as_slice()[0] - expect).abs() > 1e-6);
        assert_relative_eq!(corrected.as_slice()[0], expect, epsilon = 1e-13);
    }

    #[test]
    fn correct_requires_history() {
        let buffer = HistoryBuffer::new(2).unwrap();
        let x = zero_state(1);
        assert!(matches!(
            step_flow_correct(&x, &[1.0], 0.8, 0.6, &buffer),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn sample_order_one_is_euler_bitwise() {
        let field = PolyTimeField::new(vec![0.5, -2.0, 3.0, 0.25], 2).unwrap();
        let x0 = State::new(vec![0.3, -0.8]).unwrap();
        let schedule = make_uniform_schedule(7).unwrap();
        let euler = sample(
            &SolverConfig::new(Method::Euler, 1, false, schedule.clone()).unwrap(),
            &field,
            &x0,
        )
        .unwrap();
        let flow = sample(
            &SolverConfig::new(Method::Flow, 1, false, schedule).unwrap(),
            &field,
            &x0,
        )
        .unwrap();
        assert_eq!(euler.states.len(), flow.states.len());
        for (a, b) in euler.states.iter().zip(&flow.states) {
            for (ai, bi) in a.as_slice().iter().zip(b.as_slice()) {
                assert_eq!(ai.to_bits(), bi.to_bits());
            }
        }
    }

    #[test]
    fn sample_nfe_accounting() {
        let field = PolyTimeField::new(vec![0.0, 1.0], 1).unwrap();
        let x0 = zero_state(1);
        let schedule = make_uniform_schedule(10).unwrap();
        for (method, expect) in [
            (Method::Euler, 10),
            (Method::Heun, 20),
            (Method::Rk3, 30),
            (Method::Flow, 10),
        ] {
            let field = PolyTimeField::new(vec![0.0, 1.0], 1).unwrap();
            let traj = sample(
                &SolverConfig::new(method, 2, true, schedule.clone()).unwrap(),
                &field,
                &x0,
            )
            .unwrap();
            assert_eq!(traj.nfe, expect, "{}", method.name());
            assert_eq!(field.nfe_count(), expect, "{}", method.name());
        }
        let _ = field;
    }

    #[test]
    fn sample_is_deterministic() {
        let field = PolyTimeField::new(vec![0.1, -0.6, 0.9], 2).unwrap();
        let x0 = State::new(vec![0.7, -0.2]).unwrap();
        let cfg =
            SolverConfig::new(Method::Flow, 3, true, make_uniform_schedule(9).unwrap()).unwrap();
        let a = sample(&cfg, &field, &x0).unwrap();
        let b = sample(&cfg, &field, &x0).unwrap();
        for (sa, sb) in a.states.iter().zip(&b.states) {
            assert_eq!(sa, sb);
        }
    }

    #[test]
    fn sample_records_coefficients_for_flow_only() {
        let field = PolyTimeField::new(vec![1.0], 1).unwrap();
        let x0 = zero_state(1);
        let schedule = make_uniform_schedule(4).unwrap();
        let flow = sample(
            &SolverConfig::new(Method::Flow, 3, false, schedule.clone()).unwrap(),
            &field,
            &x0,
        )
        .unwrap();
        let log = flow.per_step_coeffs.unwrap();
        assert_eq!(log.len(), 4);
        assert_eq!(log[0].points, 0);
        assert_eq!(log[1].points, 1);
        assert_eq!(log[2].points, 2);
        assert_eq!(log[3].points, 2);
        let euler = sample(
            &SolverConfig::new(Method::Euler, 1, false, schedule).unwrap(),
            &field,
            &x0,
        )
        .unwrap();
        assert!(euler.per_step_coeffs.is_none());
    }

    #[test]
    fn sample_attaches_step_index_on_failure() {
        // Blows up past t = 0.5: 1 / (t - 0.5) is evaluated at t = 0.5
        // on step 3 of a 6-interval schedule... use a field with a pole.
        struct PoleField(crate::core::EvalCounter);
        impl VelocityField for PoleField {
            fn dim(&self) -> usize {
                1
            }
            fn eval(&self, _x: &State, t: f64) -> Result<Vec<f64>> {
                self.0.bump();
                Ok(vec![1.0 / (t - 0.5)])
            }
            fn nfe_count(&self) -> u64 {
                self.0.get()
            }
        }
        let field = PoleField(crate::core::EvalCounter::new());
        let x0 = zero_state(1);
        let cfg =
            SolverConfig::new(Method::Euler, 1, false, make_uniform_schedule(6).unwrap()).unwrap();
        let err = sample(&cfg, &field, &x0).unwrap_err();
        match err {
            Error::Step { index, .. } => assert_eq!(index, 4), // eval at t = 0.5
            other => panic!("expected step error, got {other}"),
        }
    }
}
