//! Two-stage fit of the global motion model to one slice.
//!
//! The coarse stage follows the time-image gradient moments; it is robust far from the
//! optimum but its signal fades once events line up. The fine stage then climbs the
//! event density of the count image by coordinate-wise perturbation.

use crate::error::{Error, Result};
use crate::event::EventSlice;
use crate::model::MotionModel;
use crate::projection::{
    event_density, model_gradient_with, project_about, DensityProbe, EventCountImage, GradientOptions, TimeImage,
};
use crate::scalar::Scalar;

/// Orientation of each gradient moment relative to the parameter it drives.
///
/// The time image rises along the residual flow of misaligned events; moving a
/// parameter against `sign * moment` shrinks that residual. The cross-product moment is
/// `G x q`, which is opposite to the rotation direction of the warp.
pub const DESCENT_SIGNS: [f64; 4] = [-1.0, -1.0, -1.0, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig<T> {
    /// Initial coarse step for `h_x`, in bins.
    pub step_x: T,
    /// Initial coarse step for `h_y`, in bins.
    pub step_y: T,
    /// Initial coarse step for `h_z`; `None` derives it from `step_x` so that it moves
    /// the half-diagonal by the same number of bins.
    pub step_z: Option<T>,
    /// Initial coarse step for `theta`, radians; `None` derives it like `step_z`.
    pub step_theta: Option<T>,
    /// Step growth while a parameter's descent direction holds.
    pub step_growth: T,
    /// Step shrink factor when a parameter's descent direction flips.
    pub step_shrink: T,
    /// Coarse convergence bound on the L2 model change per iteration.
    pub tolerance: T,
    /// Coarse iteration cap.
    pub max_iterations: usize,
    /// Fine-stage stagnation bound on the density gain of one sweep.
    pub fine_tolerance: T,
    /// Initial fine perturbation, bins (pixel-equivalent for expansion and rotation).
    pub fine_step: T,
    pub fine_decay: T,
    /// Fine stage stops once the perturbation would drop below this, bins.
    pub fine_min_step: T,
    /// Fine sweep cap.
    pub max_sweeps: usize,
    /// Bin size `d` of the count image, pixels.
    pub bin_size: T,
    /// Bin size of the time image used by the coarse stage, pixels.
    pub coarse_bin_size: T,
    pub gradient: GradientOptions,
    /// Rotation and expansion center, pixels; `None` uses the image center.
    pub center: Option<(T, T)>,
}

impl<T: Scalar> Default for OptimizerConfig<T> {
    fn default() -> Self {
        OptimizerConfig {
            step_x: T::lit(2.0),
            step_y: T::lit(2.0),
            step_z: None,
            step_theta: None,
            step_growth: T::lit(1.2),
            step_shrink: T::lit(0.5),
            tolerance: T::lit(1e-3),
            max_iterations: 50,
            fine_tolerance: T::lit(1e-4),
            fine_step: T::lit(1.0),
            fine_decay: T::lit(0.5),
            fine_min_step: T::lit(0.05),
            max_sweeps: 200,
            bin_size: T::lit(0.3),
            coarse_bin_size: T::lit(1.0),
            gradient: GradientOptions::default(),
            center: None,
        }
    }
}

impl<T: Scalar> OptimizerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("step_x", self.step_x),
            ("step_y", self.step_y),
            ("tolerance", self.tolerance),
            ("fine_tolerance", self.fine_tolerance),
            ("fine_step", self.fine_step),
            ("fine_min_step", self.fine_min_step),
            ("bin_size", self.bin_size),
            ("coarse_bin_size", self.coarse_bin_size),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [("step_z", self.step_z), ("step_theta", self.step_theta)] {
            if let Some(v) = v {
                if !(v > T::zero()) || !v.is_finite() {
                    return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
                }
            }
        }
        for (name, v) in [("fine_decay", self.fine_decay), ("step_shrink", self.step_shrink)] {
            if !(v > T::zero() && v < T::one()) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !(self.step_growth >= T::one()) || !self.step_growth.is_finite() {
            return Err(Error::invalid(format!(
                "step_growth must be >= 1, got {}",
                self.step_growth
            )));
        }
        if self.max_iterations == 0 || self.max_sweeps == 0 {
            return Err(Error::invalid("iteration caps must be >= 1"));
        }
        Ok(())
    }

    /// Warp center for `slice`: the configured one or the image center.
    pub fn center_for(&self, slice: &EventSlice<T>) -> (T, T) {
        self.center.unwrap_or_else(|| slice.center())
    }

    /// Half-diagonal of the sensor, in bins of size `bin_size`.
    fn half_diagonal_bins(&self, slice: &EventSlice<T>) -> T {
        let w = T::from_count(slice.sensor_width() as usize);
        let h = T::from_count(slice.sensor_height() as usize);
        (w * w + h * h).sqrt() / T::lit(2.0) / self.bin_size
    }

    /// Initial coarse steps in model units.
    pub fn coarse_steps(&self, slice: &EventSlice<T>) -> [T; 4] {
        let r = self.half_diagonal_bins(slice);
        [
            self.step_x * self.bin_size,
            self.step_y * self.bin_size,
            self.step_z.unwrap_or(self.step_x / r),
            self.step_theta.unwrap_or(self.step_x / r),
        ]
    }

    /// Fine perturbation at `level` bins, in model units.
    pub fn fine_steps(&self, slice: &EventSlice<T>, level: T) -> [T; 4] {
        let r = self.half_diagonal_bins(slice);
        [level * self.bin_size, level * self.bin_size, level / r, level / r]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompensationResult<T> {
    pub model: MotionModel<T>,
    /// Count image at `model`, bin size `d`.
    pub count_image: EventCountImage<T>,
    /// Time image at `model`, bin size `d`.
    pub time_image: TimeImage<T>,
    pub iterations_coarse: usize,
    pub iterations_fine: usize,
    pub final_density: T,
    /// Whether the final stage met its stopping rule before its cap.
    pub converged: bool,
    /// Whether the coarse stage met its tolerance before its cap.
    pub coarse_converged: bool,
    /// Density at the fine stage's start followed by the density after each accepted
    /// perturbation. Empty when the fine stage did not run.
    pub density_trace: Vec<T>,
}

fn finish<T: Scalar>(
    slice: &EventSlice<T>,
    model: MotionModel<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<(EventCountImage<T>, TimeImage<T>, T)> {
    let p = project_about(slice, &model, cfg.bin_size, cfg.center_for(slice))?;
    let density = event_density(&p.count)?;
    Ok((p.count, p.time, density))
}

fn diverged<T: Scalar>(iterations: usize, last: &MotionModel<T>) -> Error {
    Error::OptimizerDiverged {
        iterations,
        last_model: last.to_string(),
    }
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Coarse stage: gradient descent on the time image.
///
/// Each parameter moves by its own step against the sign of its (oriented) gradient
/// moment. A step grows while the direction holds and shrinks when it flips. Stops once
/// the model changes by at most `tolerance` in one iteration.
pub fn coarse_minimize<T: Scalar>(
    slice: &EventSlice<T>,
    m0: &MotionModel<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<CompensationResult<T>> {
    cfg.validate()?;
    if slice.is_empty() {
        return Err(Error::EmptyInput("cannot compensate an empty slice"));
    }
    if !m0.is_finite() {
        return Err(Error::invalid(format!("non-finite initial model {m0}")));
    }
    let center = cfg.center_for(slice);
    let initial = cfg.coarse_steps(slice);
    let mut steps = initial;
    let cap: Vec<T> = initial.iter().map(|s| *s * T::lit(8.0)).collect();
    let mut last_dir = [T::zero(); 4];
    let mut model = *m0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let p = project_about(slice, &model, cfg.coarse_bin_size, center)?;
        let g = model_gradient_with(&p.time, center, &cfg.gradient).to_array();
        let mut params = model.to_array();
        for k in 0..4 {
            let dir = sign(T::lit(DESCENT_SIGNS[k]) * g[k]);
            if dir == T::zero() {
                continue;
            }
            if dir * last_dir[k] < T::zero() {
                steps[k] = steps[k] * cfg.step_shrink;
            } else if dir * last_dir[k] > T::zero() {
                steps[k] = (steps[k] * cfg.step_growth).min(cap[k]);
            }
            last_dir[k] = dir;
            params[k] = params[k] - steps[k] * dir;
        }
        let next = MotionModel::from_array(params);
        if !next.is_finite() {
            return Err(diverged(iterations, &model));
        }
        let change = next.distance(&model);
        model = next;
        if change <= cfg.tolerance {
            converged = true;
            break;
        }
    }

    let (count_image, time_image, final_density) = finish(slice, model, cfg)?;
    Ok(CompensationResult {
        model,
        count_image,
        time_image,
        iterations_coarse: iterations,
        iterations_fine: 0,
        final_density,
        converged,
        coarse_converged: converged,
        density_trace: Vec::new(),
    })
}

/// Fine stage: coordinate-wise density ascent on the count image.
///
/// Parameters are visited in the order `h_x, h_y, h_z, theta`; `+p` is tried before
/// `-p` and the first strict density gain is taken. A sweep without gain, or with a
/// gain of at most `fine_tolerance`, decays the perturbation; the stage ends when the
/// perturbation would fall below `fine_min_step`.
pub fn fine_refine<T: Scalar>(
    slice: &EventSlice<T>,
    m0: &MotionModel<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<CompensationResult<T>> {
    cfg.validate()?;
    if slice.is_empty() {
        return Err(Error::EmptyInput("cannot compensate an empty slice"));
    }
    if !m0.is_finite() {
        return Err(Error::invalid(format!("non-finite initial model {m0}")));
    }
    let center = cfg.center_for(slice);
    let mut probe = DensityProbe::new(slice, cfg.bin_size, center)?;
    let mut model = *m0;
    let mut density = probe
        .density(&model)
        .ok_or(Error::EmptyInput("every event falls outside the grid"))?;
    let mut trace = vec![density];
    let mut level = cfg.fine_step;
    let mut sweeps = 0;
    let mut converged = false;

    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let start = density;
        let p = cfg.fine_steps(slice, level);
        for (k, pk) in p.iter().enumerate() {
            for dir in [T::one(), -T::one()] {
                let mut delta = [T::zero(); 4];
                delta[k] = dir * *pk;
                let candidate = model.offset(delta);
                if !candidate.is_finite() {
                    return Err(diverged(sweeps, &model));
                }
                if let Some(d) = probe.density(&candidate) {
                    if d > density {
                        model = candidate;
                        density = d;
                        trace.push(d);
                        break;
                    }
                }
            }
        }
        if density - start <= cfg.fine_tolerance {
            let next = level * cfg.fine_decay;
            if next < cfg.fine_min_step {
                converged = true;
                break;
            }
            level = next;
        }
    }

    let (count_image, time_image, final_density) = finish(slice, model, cfg)?;
    Ok(CompensationResult {
        model,
        count_image,
        time_image,
        iterations_coarse: 0,
        iterations_fine: sweeps,
        final_density,
        converged,
        coarse_converged: false,
        density_trace: trace,
    })
}

/// Coarse stage followed by the fine stage.
///
/// The fine stage starts from whichever of `m0` and the coarse result has the higher
/// density, so a warm start is never discarded for a worse coarse estimate.
pub fn compensate<T: Scalar>(
    slice: &EventSlice<T>,
    m0: &MotionModel<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<CompensationResult<T>> {
    let coarse = coarse_minimize(slice, m0, cfg)?;
    let mut start = coarse.model;
    if !m0.is_identity() && *m0 != coarse.model {
        let mut probe = DensityProbe::new(slice, cfg.bin_size, cfg.center_for(slice))?;
        if let (Some(d0), Some(dc)) = (probe.density(m0), probe.density(&coarse.model)) {
            if d0 > dc {
                start = *m0;
            }
        }
    }
    let mut fine = fine_refine(slice, &start, cfg)?;
    fine.iterations_coarse = coarse.iterations_coarse;
    fine.coarse_converged = coarse.coarse_converged;
    Ok(fine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Event;

    fn line_slice() -> EventSlice<f64> {
        // A vertical bar of points, all events at their true location.
        let mut ev = Vec::new();
        for k in 0..200 {
            let t = k as f64 / 200.0;
            ev.push(Event::new(
                t,
                10.0 + (k % 5) as f64 * 0.05,
                5.0 + (k % 40) as f64 * 0.5,
                false,
            ));
        }
        EventSlice::new(ev, 0.0, 1.0, 40, 30).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut cfg = OptimizerConfig::<f64>::default();
        assert!(cfg.validate().is_ok());
        cfg.fine_decay = 1.0;
        assert!(cfg.validate().is_err());
        let cfg = OptimizerConfig::<f64> {
            max_iterations: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_slice_is_rejected() {
        let s = EventSlice::<f64>::new(vec![], 0.0, 1.0, 10, 10).unwrap();
        let cfg = OptimizerConfig::default();
        assert!(matches!(
            coarse_minimize(&s, &MotionModel::identity(), &cfg),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            fine_refine(&s, &MotionModel::identity(), &cfg),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            compensate(&s, &MotionModel::identity(), &cfg),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn fine_stage_never_lowers_density() {
        let s = line_slice();
        let cfg = OptimizerConfig::default();
        let m0 = MotionModel::new(0.4, -0.3, 0.0, 0.0);
        let start = DensityProbe::new(&s, cfg.bin_size, s.center())
            .unwrap()
            .density(&m0)
            .unwrap();
        let r = fine_refine(&s, &m0, &cfg).unwrap();
        assert!(r.final_density >= start);
        assert!(r.density_trace.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(r.final_density, event_density(&r.count_image).unwrap());
        assert!(r.converged);
    }

    #[test]
    fn default_steps_scale_with_half_diagonal() {
        let s = line_slice();
        let cfg = OptimizerConfig::<f64>::default();
        let st = cfg.coarse_steps(&s);
        // 40x30 sensor: half diagonal 25 px = 83.3 bins.
        assert!((st[0] - 0.6).abs() < 1e-12);
        assert!((st[2] - 2.0 / (25.0 / 0.3)).abs() < 1e-12);
        // Both induce the same displacement at the half diagonal.
        assert!((st[2] * 25.0 - st[0]).abs() < 1e-12);
    }
}
