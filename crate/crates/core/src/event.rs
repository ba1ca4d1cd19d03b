//! Raw sensor readings and bounded time windows of them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A single asynchronous sensor reading.
///
/// The polarity flag is carried through I/O but no computation looks at it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event<T> {
    /// Timestamp in seconds.
    pub t: T,
    /// Image-plane column, pixels.
    pub x: T,
    /// Image-plane row, pixels.
    pub y: T,
    pub polarity: bool,
}

impl<T: Scalar> Event<T> {
    pub fn new(t: T, x: T, y: T, polarity: bool) -> Self {
        Event { t, x, y, polarity }
    }

    /// Checks the value invariants: finite coordinates and a finite, non-negative timestamp.
    pub fn validate(&self) -> Result<()> {
        if !(self.t.is_finite() && self.x.is_finite() && self.y.is_finite()) {
            return Err(Error::invalid(format!("non-finite event {self:?}")));
        }
        if self.t < T::zero() {
            return Err(Error::invalid(format!("negative timestamp {}", self.t)));
        }
        Ok(())
    }
}

/// Events inside `[t0, t0 + dt]`, sorted by timestamp, together with the sensor size.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSlice<T> {
    events: Vec<Event<T>>,
    t0: T,
    dt: T,
    sensor_width: u32,
    sensor_height: u32,
}

impl<T: Scalar> EventSlice<T> {
    /// Builds a slice, checking every invariant.
    pub fn new(events: Vec<Event<T>>, t0: T, dt: T, sensor_width: u32, sensor_height: u32) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::invalid(format!("slice duration must be > 0, got {dt}")));
        }
        if !t0.is_finite() || t0 < T::zero() {
            return Err(Error::invalid(format!("invalid slice start {t0}")));
        }
        if sensor_width == 0 || sensor_height == 0 {
            return Err(Error::invalid("sensor dimensions must be positive"));
        }
        let t1 = t0 + dt;
        let mut prev = t0;
        for e in &events {
            e.validate()?;
            if e.t < t0 || e.t > t1 {
                return Err(Error::invalid(format!("event at t={} outside slice [{t0}, {t1}]", e.t)));
            }
            if e.t < prev {
                return Err(Error::invalid(format!("events not sorted: {} after {prev}", e.t)));
            }
            prev = e.t;
        }
        Ok(EventSlice {
            events,
            t0,
            dt,
            sensor_width,
            sensor_height,
        })
    }

    /// Replaces the events while keeping the window and sensor geometry.
    ///
    /// The caller guarantees the invariants still hold (same timestamps, possibly a subset).
    pub(crate) fn with_events(&self, events: Vec<Event<T>>) -> Self {
        EventSlice {
            events,
            t0: self.t0,
            dt: self.dt,
            sensor_width: self.sensor_width,
            sensor_height: self.sensor_height,
        }
    }

    /// Keeps the events whose index satisfies `keep`, preserving order.
    pub fn filter_indices(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let events = self
            .events
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, e)| *e)
            .collect();
        self.with_events(events)
    }

    pub fn events(&self) -> &[Event<T>] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event<T>> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn t_end(&self) -> T {
        self.t0 + self.dt
    }

    pub fn sensor_width(&self) -> u32 {
        self.sensor_width
    }

    pub fn sensor_height(&self) -> u32 {
        self.sensor_height
    }

    /// Image center `(w/2, h/2)` in pixels, the default warp center.
    pub fn center(&self) -> (T, T) {
        let two = T::lit(2.0);
        (
            T::from_count(self.sensor_width as usize) / two,
            T::from_count(self.sensor_height as usize) / two,
        )
    }

    /// Timestamp mapped to `[0, 1]` across the slice.
    #[inline]
    pub fn normalized_time(&self, t: T) -> T {
        (t - self.t0) / self.dt
    }

    /// Rounds coordinates to whole sensor pixels and timestamps to microseconds,
    /// which is the resolution the text event format stores. Coordinates past the
    /// last pixel are pulled back onto it.
    pub fn quantized(&self) -> Self {
        let us = T::lit(1e6);
        let t1 = self.t_end();
        let max_x = T::from_count(self.sensor_width as usize - 1);
        let max_y = T::from_count(self.sensor_height as usize - 1);
        let mut events: Vec<Event<T>> = self
            .events
            .iter()
            .map(|e| {
                let t = ((e.t * us).round() / us).max(self.t0).min(t1);
                Event::new(t, e.x.round().min(max_x), e.y.round().min(max_y), e.polarity)
            })
            .collect();
        // Rounding is monotone, so order is kept; the sort only guards equal keys.
        events.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap_or(std::cmp::Ordering::Equal));
        self.with_events(events)
    }

    /// Spreads each event uniformly over the pixel it was rounded to, undoing the
    /// lattice that whole-pixel coordinates impose on sub-pixel bins. Deterministic
    /// given `seed`.
    pub fn dithered(&self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = T::lit(0.5);
        let events = self
            .events
            .iter()
            .map(|e| {
                let dx = T::lit(rng.random::<f64>()) - half;
                let dy = T::lit(rng.random::<f64>()) - half;
                Event::new(e.t, e.x + dx, e.y + dy, e.polarity)
            })
            .collect();
        self.with_events(events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: f64, x: f64, y: f64) -> Event<f64> {
        Event::new(t, x, y, false)
    }

    #[test]
    fn rejects_unsorted_and_out_of_window() {
        let unsorted = vec![ev(0.2, 0.0, 0.0), ev(0.1, 0.0, 0.0)];
        assert!(EventSlice::new(unsorted, 0.0, 1.0, 10, 10).is_err());
        let outside = vec![ev(1.5, 0.0, 0.0)];
        assert!(EventSlice::new(outside, 0.0, 1.0, 10, 10).is_err());
        assert!(EventSlice::<f64>::new(vec![], 0.0, 0.0, 10, 10).is_err());
        let nan = vec![ev(0.5, f64::NAN, 0.0)];
        assert!(EventSlice::new(nan, 0.0, 1.0, 10, 10).is_err());
    }

    #[test]
    fn normalized_time_spans_unit_interval() {
        let s = EventSlice::new(vec![ev(2.0, 1.0, 1.0), ev(2.5, 1.0, 1.0)], 2.0, 0.5, 4, 4).unwrap();
        assert_eq!(s.normalized_time(2.0), 0.0);
        assert_eq!(s.normalized_time(2.5), 1.0);
        assert_eq!(s.center(), (2.0, 2.0));
    }

    #[test]
    fn quantize_rounds_to_pixels_and_microseconds() {
        let s = EventSlice::new(vec![ev(0.1000004, 1.4, 2.6)], 0.1, 0.01, 4, 4).unwrap();
        let q = s.quantized();
        assert_eq!(q.events()[0], ev(0.1, 1.0, 3.0));
    }
}
