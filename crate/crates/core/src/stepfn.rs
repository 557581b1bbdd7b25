//! Right-continuous step functions over time.
//!
//! Both the Breslow cumulative baseline hazard and the Kaplan–Meier
//! estimators are step functions; this is the shared representation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StepFnError {
    #[error("step times must be finite and strictly increasing (offender at index {0})")]
    BadTimes(usize),
    #[error("step values must be finite (offender at index {0})")]
    BadValues(usize),
}

/// A right-continuous step function `t -> f(t)`.
///
/// `f(t)` equals `initial` for `t` before the first jump time and
/// `values[k]` for `t` in `[times[k], times[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    initial: f64,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(initial: f64, points: Vec<(f64, f64)>) -> Result<Self, StepFnError> {
        if !initial.is_finite() {
            return Err(StepFnError::BadValues(0));
        }
        let mut times = Vec::with_capacity(points.len());
        let mut values = Vec::with_capacity(points.len());
        for (i, (t, v)) in points.into_iter().enumerate() {
            if !t.is_finite() || times.last().is_some_and(|&prev| t <= prev) {
                return Err(StepFnError::BadTimes(i));
            }
            if !v.is_finite() {
                return Err(StepFnError::BadValues(i));
            }
            times.push(t);
            values.push(v);
        }
        Ok(Self {
            initial,
            times,
            values,
        })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            initial: value,
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Value at `t` (right-continuous: jumps take effect at their own time).
    pub fn eval(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => self.initial,
            k => self.values[k - 1],
        }
    }

    /// Left limit at `t`: the value just before `t`.
    pub fn eval_left(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s < t) {
            0 => self.initial,
            k => self.values[k - 1],
        }
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    /// Jump points as `(time, value_from_that_time_on)` pairs.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }

    pub fn n_jumps(&self) -> usize {
        self.times.len()
    }

    pub fn is_non_decreasing(&self) -> bool {
        let mut prev = self.initial;
        self.values.iter().all(|&v| {
            let ok = v >= prev;
            prev = v;
            ok
        })
    }

    pub fn is_non_increasing(&self) -> bool {
        let mut prev = self.initial;
        self.values.iter().all(|&v| {
            let ok = v <= prev;
            prev = v;
            ok
        })
    }
}
