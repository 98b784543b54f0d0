use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position, velocity and acceleration along one axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisState {
    pub p: f64,
    pub v: f64,
    pub a: f64,
}

impl AxisState {
    pub fn new(p: f64, v: f64, a: f64) -> Self {
        Self { p, v, a }
    }
}

/// `p(t) = Σ c[k] t^k` on each axis for `t ∈ [0, horizon]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuinticCoeffs {
    pub x: [f64; 6],
    pub y: [f64; 6],
    pub horizon: f64,
}

/// Degree-5 polynomial meeting position, velocity and acceleration at both ends.
pub fn quintic_axis(start: AxisState, end: AxisState, t: f64) -> [f64; 6] {
    let (t2, t3) = (t * t, t * t * t);
    let (t4, t5) = (t3 * t, t3 * t2);
    let dp = end.p - start.p;
    [
        start.p,
        start.v,
        start.a / 2.0,
        (20.0 * dp - (8.0 * end.v + 12.0 * start.v) * t - (3.0 * start.a - end.a) * t2) / (2.0 * t3),
        (-30.0 * dp + (14.0 * end.v + 16.0 * start.v) * t + (3.0 * start.a - 2.0 * end.a) * t2) / (2.0 * t4),
        (12.0 * dp - 6.0 * (end.v + start.v) * t - (start.a - end.a) * t2) / (2.0 * t5),
    ]
}

pub fn quintic(start: [AxisState; 2], end: [AxisState; 2], horizon: f64) -> Result<QuinticCoeffs> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Input(format!("horizon must be positive, got {horizon}")));
    }
    Ok(QuinticCoeffs {
        x: quintic_axis(start[0], end[0], horizon),
        y: quintic_axis(start[1], end[1], horizon),
        horizon,
    })
}

/// Value, first and second derivative at `t`.
pub fn eval_axis(c: &[f64; 6], t: f64) -> AxisState {
    let p = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
    let v = c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])));
    let a = 2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5]));
    AxisState { p, v, a }
}

impl QuinticCoeffs {
    pub fn eval(&self, t: f64) -> [AxisState; 2] {
        [eval_axis(&self.x, t), eval_axis(&self.y, t)]
    }
}
