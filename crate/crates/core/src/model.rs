//! The 4-parameter warp model and the event warp itself.
//!
//! An event observed at normalized time `s = (t - t0) / dt` at image position `p` is
//! mapped back to its position at `t0` by
//!
//! ```text
//! p' = p - s * ( h + (1 + h_z) R(theta) (p - c) - (p - c) )
//! ```
//!
//! where `h = (h_x, h_y)` and `c` is the rotation/expansion center. The timestamp is
//! left untouched.

use std::fmt;

use crate::error::{Error, Result};
use crate::event::{Event, EventSlice};
use crate::scalar::Scalar;

/// Global or per-object motion over one slice.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotionModel<T> {
    /// Column shift across the slice, pixels.
    pub h_x: T,
    /// Row shift across the slice, pixels.
    pub h_y: T,
    /// Expansion rate across the slice (dimensionless).
    pub h_z: T,
    /// In-plane rotation across the slice, radians.
    pub theta: T,
}

impl<T: Scalar> MotionModel<T> {
    pub fn new(h_x: T, h_y: T, h_z: T, theta: T) -> Self {
        MotionModel { h_x, h_y, h_z, theta }
    }

    pub fn identity() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn translation(h_x: T, h_y: T) -> Self {
        Self::new(h_x, h_y, T::zero(), T::zero())
    }

    pub fn from_array(p: [T; 4]) -> Self {
        Self::new(p[0], p[1], p[2], p[3])
    }

    pub fn to_array(self) -> [T; 4] {
        [self.h_x, self.h_y, self.h_z, self.theta]
    }

    pub fn is_identity(&self) -> bool {
        self.to_array().iter().all(|v| *v == T::zero())
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// L2 norm over the raw parameter vector.
    pub fn norm(&self) -> T {
        self.to_array().iter().fold(T::zero(), |acc, v| acc + *v * *v).sqrt()
    }

    /// L2 distance between two models in raw parameter space.
    pub fn distance(&self, other: &Self) -> T {
        let a = self.to_array();
        let b = other.to_array();
        (0..4)
            .map(|k| (a[k] - b[k]) * (a[k] - b[k]))
            .fold(T::zero(), |acc, v| acc + v)
            .sqrt()
    }

    /// Model parameters with every component offset by `delta`.
    pub fn offset(&self, delta: [T; 4]) -> Self {
        let a = self.to_array();
        Self::from_array([a[0] + delta[0], a[1] + delta[1], a[2] + delta[2], a[3] + delta[3]])
    }

    pub fn cast<U: Scalar>(&self) -> MotionModel<U> {
        MotionModel::new(
            U::lit(self.h_x.as_f64()),
            U::lit(self.h_y.as_f64()),
            U::lit(self.h_z.as_f64()),
            U::lit(self.theta.as_f64()),
        )
    }
}

impl<T: Scalar> fmt::Display for MotionModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(h_x={}, h_y={}, h_z={}, theta={})",
            self.h_x, self.h_y, self.h_z, self.theta
        )
    }
}

/// A motion model bound to a warp center, with the rotation terms precomputed.
///
/// This is the per-event hot path of both optimizer stages.
#[derive(Debug, Clone, Copy)]
pub struct Warp<T> {
    model: MotionModel<T>,
    cx: T,
    cy: T,
    /// `(1 + h_z) cos(theta)`
    sc: T,
    /// `(1 + h_z) sin(theta)`
    ss: T,
}

impl<T: Scalar> Warp<T> {
    pub fn new(model: MotionModel<T>, center: (T, T)) -> Self {
        let scale = T::one() + model.h_z;
        let (sin, cos) = model.theta.sin_cos();
        Warp {
            model,
            cx: center.0,
            cy: center.1,
            sc: scale * cos,
            ss: scale * sin,
        }
    }

    pub fn model(&self) -> &MotionModel<T> {
        &self.model
    }

    /// Flow of a point at `(x, y)` across the full slice.
    #[inline(always)]
    pub fn flow(&self, x: T, y: T) -> (T, T) {
        let qx = x - self.cx;
        let qy = y - self.cy;
        (
            self.model.h_x + (self.sc * qx - self.ss * qy) - qx,
            self.model.h_y + (self.ss * qx + self.sc * qy) - qy,
        )
    }

    /// Maps a point observed at normalized time `s` back to `t0`.
    #[inline(always)]
    pub fn apply(&self, x: T, y: T, s: T) -> (T, T) {
        let (fx, fy) = self.flow(x, y);
        (x - s * fx, y - s * fy)
    }

    /// Exact inverse of [`Warp::apply`]: the position at normalized time `s` of a point
    /// that sits at `(x, y)` at `t0`.
    ///
    /// Returns `None` when the linear map is singular, which only happens for extreme
    /// expansion or rotation.
    pub fn invert(&self, x: T, y: T, s: T) -> Option<(T, T)> {
        // The displacement d solves (I - s (A - I)) d = s * flow(x, y), with the
        // matrix [[a, b], [-b, a]]. Zero flow gives exactly zero displacement.
        let a = T::one() - s * (self.sc - T::one());
        let b = s * self.ss;
        let det = a * a + b * b;
        if det <= T::epsilon() {
            return None;
        }
        let (fx, fy) = self.flow(x, y);
        let (rx, ry) = (s * fx, s * fy);
        Some((x + (a * rx - b * ry) / det, y + (b * rx + a * ry) / det))
    }
}

fn check_window<T: Scalar>(t0: T, dt: T) -> Result<()> {
    if !(dt > T::zero()) || !dt.is_finite() || !t0.is_finite() {
        return Err(Error::invalid(format!("invalid slice window t0={t0}, dt={dt}")));
    }
    Ok(())
}

/// Warps a single event back to `t0` under `model`, rotating and expanding about `center`.
pub fn warp_event<T: Scalar>(e: &Event<T>, model: &MotionModel<T>, t0: T, dt: T, center: (T, T)) -> Result<Event<T>> {
    check_window(t0, dt)?;
    if !model.is_finite() {
        return Err(Error::invalid(format!("non-finite model {model}")));
    }
    if !(center.0.is_finite() && center.1.is_finite()) {
        return Err(Error::invalid("non-finite warp center"));
    }
    e.validate()?;
    let warp = Warp::new(*model, center);
    let (x, y) = warp.apply(e.x, e.y, (e.t - t0) / dt);
    Ok(Event::new(e.t, x, y, e.polarity))
}

/// Warps every event of the slice. Length and order are preserved.
pub fn warp_event_cloud<T: Scalar>(
    slice: &EventSlice<T>,
    model: &MotionModel<T>,
    center: (T, T),
) -> Result<EventSlice<T>> {
    if !model.is_finite() {
        return Err(Error::invalid(format!("non-finite model {model}")));
    }
    if !(center.0.is_finite() && center.1.is_finite()) {
        return Err(Error::invalid("non-finite warp center"));
    }
    let warp = Warp::new(*model, center);
    let events = slice
        .events()
        .iter()
        .map(|e| {
            let (x, y) = warp.apply(e.x, e.y, slice.normalized_time(e.t));
            Event::new(e.t, x, y, e.polarity)
        })
        .collect();
    Ok(slice.with_events(events))
}
