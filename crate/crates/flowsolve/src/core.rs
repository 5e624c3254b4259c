//! Domain types shared by all solvers: states, time schedules, the
//! velocity-field interface, and the cache of previous velocity evaluations.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::{Error, Result};

/// A sample point: a flat real vector with every entry finite.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    data: Vec<f64>,
}

impl State {
    /// Builds a state, rejecting empty vectors and non-finite entries.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("state dimension must be >= 1".into()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "state entry {i} is not finite: {}",
                data[i]
            )));
        }
        Ok(Self { data })
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

impl AsRef<[f64]> for State {
    fn as_ref(&self) -> &[f64] {
        &self.data
    }
}

/// Strictly decreasing sequence of timesteps, by convention from `t = 1`
/// (noise) down to `t = 0` (data).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSchedule {
    times: Vec<f64>,
}

impl TimeSchedule {
    /// Builds a schedule from explicit times. Endpoints are the caller's
    /// business (partial schedules are allowed); strict decrease and
    /// finiteness are not.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidArgument(
                "schedule needs at least two times".into(),
            ));
        }
        for (i, w) in times.windows(2).enumerate() {
            if !w[0].is_finite() || !w[1].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "schedule time {} or {} is not finite",
                    i,
                    i + 1
                )));
            }
            if w[1] >= w[0] {
                return Err(Error::InvalidArgument(format!(
                    "schedule times must be strictly decreasing, got {} -> {} at index {}",
                    w[0],
                    w[1],
                    i
                )));
            }
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of integration intervals (one fewer than the number of times).
    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }
}

/// `n_steps + 1` equally spaced times from 1.0 down to 0.0.
pub fn make_uniform_schedule(n_steps: usize) -> Result<TimeSchedule> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
    }
    let n = n_steps as f64;
    let times = (0..=n_steps).map(|k| (n_steps - k) as f64 / n).collect();
    TimeSchedule::from_times(times)
}

/// Warped schedule `t = shift * (1 - u) / (1 + (shift - 1) * (1 - u))` on the
/// uniform grid `u_k = k / n_steps`. `shift = 1` is the identity warp;
/// larger shifts crowd steps toward `t = 0`. Endpoints are pinned to exactly
/// 1.0 and 0.0.
pub fn make_shifted_schedule(n_steps: usize, shift: f64) -> Result<TimeSchedule> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
    }
    if shift <= 0.0 || !shift.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "shift must be a positive real, got {shift}"
        )));
    }
    let n = n_steps as f64;
    let times = (0..=n_steps)
        .map(|k| {
            if k == 0 {
                1.0
            } else if k == n_steps {
                0.0
            } else {
                let w = 1.0 - k as f64 / n;
                shift * w / (1.0 + (shift - 1.0) * w)
            }
        })
        .collect();
    TimeSchedule::from_times(times)
}

/// One cached velocity evaluation: the time, the velocity, and the state it
/// was evaluated at (the state is kept for diagnostics and trajectory dumps).
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityRecord {
    pub t: f64,
    pub velocity: Vec<f64>,
    pub state: Vec<f64>,
}

impl VelocityRecord {
    pub fn new(t: f64, velocity: Vec<f64>, state: Vec<f64>) -> Result<Self> {
        if velocity.len() != state.len() {
            return Err(Error::DimensionMismatch {
                expected: state.len(),
                got: velocity.len(),
            });
        }
        Ok(Self { t, velocity, state })
    }
}

/// Bounded FIFO cache of previous velocity evaluations, newest last.
///
/// Record times are strictly decreasing in insertion order (time runs
/// downward), so the newest record is always the one closest to the current
/// step. Pushing at capacity evicts the oldest record.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    records: VecDeque<VelocityRecord>,
    capacity: usize,
}

impl HistoryBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("capacity must be >= 1".into()));
        }
        Ok(Self {
            records: VecDeque::with_capacity(capacity),
            capacity,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Records, oldest first (newest last).
    pub fn records(
        &self,
    ) -> impl DoubleEndedIterator<Item = &VelocityRecord> + ExactSizeIterator {
        self.records.iter()
    }

    /// Newest record (smallest time), if any.
    pub fn newest(&self) -> Option<&VelocityRecord> {
        self.records.back()
    }

    /// Appends a record; the record's time must be strictly smaller than
    /// every stored time. Evicts the oldest record when at capacity.
    pub fn push(&mut self, record: VelocityRecord) -> Result<()> {
        if let Some(newest) = self.records.back() {
            if record.t >= newest.t {
                return Err(Error::InvalidArgument(format!(
                    "pushed record time {} must be strictly below the newest stored time {}",
                    record.t, newest.t
                )));
            }
        }
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
        Ok(())
    }

    /// Removes and returns the newest record; errors on an empty buffer.
    /// Together with [`push`](Self::push) this gives the corrector its
    /// push-then-pop view without disturbing older records.
    pub fn pop_newest(&mut self) -> Result<VelocityRecord> {
        self.records
            .pop_back()
            .ok_or_else(|| Error::InvalidState("pop on empty history buffer".into()))
    }
}

/// Monotone counter of velocity-field evaluations (the NFE cost metric).
///
/// Relaxed atomics: the count is a tally, not a synchronization point.
#[derive(Debug, Default)]
pub struct EvalCounter(AtomicU64);

impl EvalCounter {
    pub fn new() -> Self {
        Self(AtomicU64::new(0))
    }

    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// An evaluable velocity field `v(x, t)`.
///
/// Implementations must be deterministic (identical `(x, t)` gives identical
/// output) and must bump their evaluation counter exactly once per `eval`
/// call. Fields are immutable after construction; concurrent runs may share
/// one field, in which case `nfe_count` reports the total across runs.
pub trait VelocityField: Sync {
    /// State dimension the field expects.
    fn dim(&self) -> usize;

    /// Evaluates `v(x, t)` and counts the evaluation.
    fn eval(&self, x: &State, t: f64) -> Result<Vec<f64>>;

    /// Evaluations performed so far.
    fn nfe_count(&self) -> u64;
}
