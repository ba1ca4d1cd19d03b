//! Kalman tracking of detected objects.
//!
//! State `[x, y, h_x, h_y, h_z, theta, u, v]`: centroid in sensor pixels, the object's
//! own motion model, and centroid velocity in pixels per second. The centroid moves with
//! the velocity; the model parameters follow identity dynamics. Acceleration enters as
//! process noise on the velocity. The measurement is the first six components.

use nalgebra::{RealField, SMatrix, SVector, SymmetricEigen};
use num_traits::Float;

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::model::MotionModel;
use crate::scalar::Scalar;

pub type StateVector<T> = SVector<T, 8>;
pub type StateCovariance<T> = SMatrix<T, 8, 8>;
type Measurement<T> = SVector<T, 6>;
type Observation<T> = SMatrix<T, 6, 8>;

/// Trait bound for the tracker's scalar: a [`Scalar`] that nalgebra can decompose.
pub trait TrackScalar: Scalar + RealField + Copy {}
impl<T: Scalar + RealField + Copy> TrackScalar for T {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerParams<T> {
    /// Process noise on the centroid, pixels squared per frame.
    pub q_position: T,
    /// Process noise on each model parameter per frame.
    pub q_model: T,
    /// Process noise on the velocity, (pixels per frame) squared per frame.
    pub q_velocity: T,
    /// Measurement noise on the centroid, pixels squared.
    pub r_position: T,
    /// Measurement noise on each model parameter.
    pub r_model: T,
    /// Prior velocity variance of a new track, (pixels per frame) squared.
    pub initial_velocity_variance: T,
    /// Association gate on centroid distance, pixels (20 bins of the default 2 px
    /// detection grid).
    pub gate: T,
    /// A track is retired once it has gone unmatched for more than this many frames.
    pub max_missed: u32,
    /// Tolerance of the positive semi-definiteness check on the covariance.
    pub psd_tolerance: T,
}

impl<T: Scalar> Default for TrackerParams<T> {
    fn default() -> Self {
        TrackerParams {
            q_position: T::one(),
            q_model: T::lit(1e-2),
            q_velocity: T::lit(0.5),
            r_position: T::lit(2.0),
            r_model: T::lit(5e-2),
            initial_velocity_variance: T::lit(100.0),
            gate: T::lit(40.0),
            max_missed: 5,
            psd_tolerance: T::lit(1e-9),
        }
    }
}

impl<T: Scalar> TrackerParams<T> {
    pub fn validate(&self) -> Result<()> {
        let noises = [
            self.q_position,
            self.q_model,
            self.q_velocity,
            self.r_position,
            self.r_model,
            self.initial_velocity_variance,
        ];
        if noises.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::invalid("tracker noise parameters must be finite and >= 0"));
        }
        if !(self.gate > T::zero()) {
            return Err(Error::invalid(format!("gate must be > 0, got {}", self.gate)));
        }
        Ok(())
    }
}

/// One object observation in sensor coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectMeasurement<T> {
    pub centroid: (T, T),
    pub model: MotionModel<T>,
    /// Box of the object; only its size is carried by the track.
    pub bbox: BoundingBox<T>,
    /// Centroid velocity in pixels per second, if known. Seeds new tracks.
    pub velocity: Option<(T, T)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState<T: TrackScalar> {
    pub id: u64,
    pub state: StateVector<T>,
    pub covariance: StateCovariance<T>,
    /// Measurement updates survived.
    pub age: u32,
    /// Consecutive frames without a matched measurement.
    pub missed: u32,
    /// Width and height of the last matched box, pixels.
    pub size: (T, T),
}

impl<T: TrackScalar> TrackState<T> {
    pub fn centroid(&self) -> (T, T) {
        (self.state[0], self.state[1])
    }

    pub fn model(&self) -> MotionModel<T> {
        MotionModel::new(self.state[2], self.state[3], self.state[4], self.state[5])
    }

    pub fn velocity(&self) -> (T, T) {
        (self.state[6], self.state[7])
    }

    /// Box of the last matched size centred on the current centroid.
    pub fn bbox(&self) -> BoundingBox<T> {
        let half = <T as Scalar>::lit(0.5);
        BoundingBox::new(
            self.state[0] - half * self.size.0,
            self.state[1] - half * self.size.1,
            self.size.0,
            self.size.1,
        )
    }
}

/// What one [`Tracker::step`] did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    /// `(track id, measurement index)` pairs.
    pub matched: Vec<(u64, usize)>,
    pub spawned: Vec<u64>,
    /// Tracks retired for exceeding the missed-frame budget.
    pub retired: Vec<u64>,
    /// Tracks retired because their covariance lost positive semi-definiteness.
    pub failed: Vec<u64>,
}

/// Checks symmetry and that the smallest eigenvalue is at least `-tolerance`.
pub fn check_psd<T: TrackScalar>(p: &StateCovariance<T>, tolerance: T) -> Result<()> {
    let asym = (p - p.transpose()).abs().max();
    let scale = T::one() + p.abs().max();
    if asym > tolerance * scale {
        return Err(Error::NumericalFailure(format!("covariance asymmetric by {asym}")));
    }
    let min = SymmetricEigen::new(*p).eigenvalues.min();
    if !(min >= -tolerance) {
        return Err(Error::NumericalFailure(format!("covariance eigenvalue {min} < 0")));
    }
    Ok(())
}

/// Constant-velocity tracker with greedy nearest-centroid association.
#[derive(Debug, Clone)]
pub struct Tracker<T: TrackScalar> {
    params: TrackerParams<T>,
    tracks: Vec<TrackState<T>>,
    next_id: u64,
}

impl<T: TrackScalar> Tracker<T> {
    pub fn new(params: TrackerParams<T>) -> Result<Self> {
        params.validate()?;
        Ok(Tracker {
            params,
            tracks: Vec::new(),
            next_id: 0,
        })
    }

    pub fn params(&self) -> &TrackerParams<T> {
        &self.params
    }

    /// Live tracks, oldest id first.
    pub fn tracks(&self) -> &[TrackState<T>] {
        &self.tracks
    }

    /// Inserts a track directly, bypassing association. The id is assigned here.
    pub fn insert(&mut self, state: StateVector<T>, covariance: StateCovariance<T>, size: (T, T)) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.tracks.push(TrackState {
            id,
            state,
            covariance,
            age: 0,
            missed: 0,
            size,
        });
        id
    }

    fn transition(dt: T) -> StateCovariance<T> {
        let mut f = StateCovariance::identity();
        f[(0, 6)] = dt;
        f[(1, 7)] = dt;
        f
    }

    fn process_noise(&self, dt: T) -> StateCovariance<T> {
        let p = &self.params;
        let qv = p.q_velocity / (dt * dt);
        StateCovariance::from_diagonal(&StateVector::from_column_slice(&[
            p.q_position,
            p.q_position,
            p.q_model,
            p.q_model,
            p.q_model,
            p.q_model,
            qv,
            qv,
        ]))
    }

    fn measurement_noise(&self) -> SMatrix<T, 6, 6> {
        let p = &self.params;
        SMatrix::from_diagonal(&Measurement::from_column_slice(&[
            p.r_position,
            p.r_position,
            p.r_model,
            p.r_model,
            p.r_model,
            p.r_model,
        ]))
    }

    fn observation() -> Observation<T> {
        Observation::from_fn(|r, c| if r == c { T::one() } else { T::zero() })
    }

    fn measurement_vector(m: &ObjectMeasurement<T>) -> Measurement<T> {
        Measurement::from_column_slice(&[
            m.centroid.0,
            m.centroid.1,
            m.model.h_x,
            m.model.h_y,
            m.model.h_z,
            m.model.theta,
        ])
    }

    fn predict(&self, track: &mut TrackState<T>, dt: T) {
        let f = Self::transition(dt);
        track.state = f * track.state;
        track.covariance = f * track.covariance * f.transpose() + self.process_noise(dt);
        track.covariance = (track.covariance + track.covariance.transpose()) * <T as Scalar>::lit(0.5);
    }

    /// Joseph-form update. Falls back to the pseudo-inverse when the innovation
    /// covariance is singular, which happens with zero noise.
    fn update(&self, track: &mut TrackState<T>, m: &ObjectMeasurement<T>) -> Result<()> {
        let h = Self::observation();
        let r = self.measurement_noise();
        let s = h * track.covariance * h.transpose() + r;
        let s_inv = match s.try_inverse() {
            Some(inv) if inv.iter().all(|v| Float::is_finite(*v)) => inv,
            _ => s
                .pseudo_inverse(<T as Scalar>::lit(1e-12))
                .map_err(|e| Error::NumericalFailure(e.to_string()))?,
        };
        let k = track.covariance * h.transpose() * s_inv;
        let innovation = Self::measurement_vector(m) - h * track.state;
        track.state += k * innovation;
        let i_kh = StateCovariance::identity() - k * h;
        let p = i_kh * track.covariance * i_kh.transpose() + k * r * k.transpose();
        track.covariance = (p + p.transpose()) * <T as Scalar>::lit(0.5);
        track.size = (m.bbox.w, m.bbox.h);
        track.age += 1;
        track.missed = 0;
        check_psd(&track.covariance, self.params.psd_tolerance)
    }

    fn spawn(&mut self, m: &ObjectMeasurement<T>, dt: T) -> u64 {
        let p = &self.params;
        let (u, v) = m.velocity.unwrap_or((T::zero(), T::zero()));
        let z = Self::measurement_vector(m);
        let state = StateVector::from_column_slice(&[z[0], z[1], z[2], z[3], z[4], z[5], u, v]);
        let vv = p.initial_velocity_variance / (dt * dt);
        let cov = StateCovariance::from_diagonal(&StateVector::from_column_slice(&[
            p.r_position,
            p.r_position,
            p.r_model,
            p.r_model,
            p.r_model,
            p.r_model,
            vv,
            vv,
        ]));
        let size = (m.bbox.w, m.bbox.h);
        let id = self.insert(state, cov, size);
        if let Some(t) = self.tracks.last_mut() {
            t.age = 1;
        }
        id
    }

    /// Advances every track by `dt_frame` seconds and folds in this frame's measurements.
    pub fn step(&mut self, measurements: &[ObjectMeasurement<T>], dt_frame: T) -> Result<StepReport> {
        if !(dt_frame > T::zero()) || !Float::is_finite(dt_frame) {
            return Err(Error::invalid(format!("frame interval must be > 0, got {dt_frame}")));
        }
        let mut report = StepReport::default();
        let mut tracks = std::mem::take(&mut self.tracks);
        for t in &mut tracks {
            self.predict(t, dt_frame);
        }

        let mut pairs = Vec::new();
        for (ti, t) in tracks.iter().enumerate() {
            for (mi, m) in measurements.iter().enumerate() {
                let dx = m.centroid.0 - t.state[0];
                let dy = m.centroid.1 - t.state[1];
                let d = Float::sqrt(dx * dx + dy * dy);
                if d <= self.params.gate {
                    pairs.push((d, ti, mi));
                }
            }
        }
        pairs.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then((a.1, a.2).cmp(&(b.1, b.2)))
        });
        let mut track_used = vec![false; tracks.len()];
        let mut meas_used = vec![false; measurements.len()];
        let mut failed = vec![false; tracks.len()];
        for (_, ti, mi) in pairs {
            if track_used[ti] || meas_used[mi] {
                continue;
            }
            track_used[ti] = true;
            meas_used[mi] = true;
            report.matched.push((tracks[ti].id, mi));
            if let Err(e) = self.update(&mut tracks[ti], &measurements[mi]) {
                log::warn!("retiring track {}: {e}", tracks[ti].id);
                failed[ti] = true;
            }
        }

        for (ti, t) in tracks.into_iter().enumerate() {
            if failed[ti] {
                report.failed.push(t.id);
                continue;
            }
            let mut t = t;
            if !track_used[ti] {
                t.missed += 1;
            }
            if t.missed > self.params.max_missed {
                report.retired.push(t.id);
            } else {
                self.tracks.push(t);
            }
        }
        for (mi, m) in measurements.iter().enumerate() {
            if !meas_used[mi] {
                report.spawned.push(self.spawn(m, dt_frame));
            }
        }
        Ok(report)
    }
}
