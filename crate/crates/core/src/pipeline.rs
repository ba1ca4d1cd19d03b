//! Per-slice loop: compensate, detect, fit object models, refine the background, track.

use crate::bbox::BoundingBox;
use crate::compensation::{compensate, CompensationResult, OptimizerConfig};
use crate::detection::{detect_in_slice, fit_object_model, refine_background, DetectedObject, DetectionConfig};
use crate::error::{Error, Result};
use crate::event::EventSlice;
use crate::model::{MotionModel, Warp};
use crate::scalar::Scalar;
use crate::tracking::{ObjectMeasurement, StepReport, TrackScalar, TrackState, Tracker, TrackerParams};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig<T> {
    pub optimizer: OptimizerConfig<T>,
    pub detection: DetectionConfig<T>,
    pub tracker: TrackerParams<T>,
    /// Re-compensate the background without object events and detect again.
    pub refine_background: bool,
}

impl<T: Scalar> Default for PipelineConfig<T> {
    fn default() -> Self {
        PipelineConfig {
            optimizer: OptimizerConfig::default(),
            detection: DetectionConfig::default(),
            tracker: TrackerParams::default(),
            refine_background: true,
        }
    }
}

/// A detected object expressed in sensor coordinates at the end of its slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectReport<T> {
    pub bbox: BoundingBox<T>,
    pub centroid: (T, T),
    /// The object's own model; `None` when it had too few events to fit.
    pub model: Option<MotionModel<T>>,
    /// Area on the detection grid, bins.
    pub area: usize,
    pub events: usize,
}

#[derive(Debug, Clone)]
pub struct SliceAnalysis<T> {
    pub t_end: T,
    /// Background compensation (after refinement when enabled).
    pub background: CompensationResult<T>,
    pub detected: Vec<DetectedObject<T>>,
    pub objects: Vec<ObjectReport<T>>,
}

/// Maps a point of the background-compensated frame to where it is seen at slice end.
fn to_slice_end<T: Scalar>(warp: &Warp<T>, p: (T, T)) -> (T, T) {
    warp.invert(p.0, p.1, T::one()).unwrap_or(p)
}

fn report<T: Scalar>(
    slice: &EventSlice<T>,
    obj: &DetectedObject<T>,
    warp: &Warp<T>,
    bin_size: T,
    model: Option<MotionModel<T>>,
) -> Option<ObjectReport<T>> {
    let corners = obj.pixel_box(bin_size).corners().map(|c| to_slice_end(warp, c));
    let w = T::from_count(slice.sensor_width() as usize);
    let h = T::from_count(slice.sensor_height() as usize);
    let bbox = BoundingBox::hull(corners)?.clip(w, h)?;
    let centroid = to_slice_end(warp, (obj.centroid.0 * bin_size, obj.centroid.1 * bin_size));
    Some(ObjectReport {
        bbox,
        centroid,
        model,
        area: obj.area(),
        events: obj.events.len(),
    })
}

/// Runs the single-slice part of the loop, warm-started from `warm`.
pub fn analyze_slice<T: Scalar>(
    slice: &EventSlice<T>,
    warm: &MotionModel<T>,
    cfg: &PipelineConfig<T>,
) -> Result<SliceAnalysis<T>> {
    cfg.optimizer.validate()?;
    cfg.detection.validate()?;
    let center = cfg.optimizer.center_for(slice);
    let mut background = compensate(slice, warm, &cfg.optimizer)?;
    let (_, mut detected) = detect_in_slice(slice, &background.model, center, &cfg.detection)?;
    if cfg.refine_background && !detected.is_empty() {
        match refine_background(slice, &detected, &background.model, &cfg.optimizer) {
            Ok(refined) => {
                background = refined;
                detected = detect_in_slice(slice, &background.model, center, &cfg.detection)?.1;
            }
            Err(Error::EmptyInput(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let warp = Warp::new(background.model, center);
    let mut objects = Vec::with_capacity(detected.len());
    for obj in &mut detected {
        let model = match fit_object_model(
            slice,
            obj,
            &background.model,
            &cfg.optimizer,
            cfg.detection.min_object_events,
        ) {
            Ok(m) => Some(m),
            Err(Error::InsufficientEvents { .. }) => None,
            Err(e) => return Err(e),
        };
        if let Some(m) = model {
            obj.model = m;
        }
        if let Some(r) = report(slice, obj, &warp, cfg.detection.bin_size, model) {
            objects.push(r);
        }
    }
    Ok(SliceAnalysis {
        t_end: slice.t_end(),
        background,
        detected,
        objects,
    })
}

/// Output of one [`Pipeline::process`] call.
#[derive(Debug, Clone)]
pub struct SliceOutput<T: TrackScalar> {
    pub analysis: SliceAnalysis<T>,
    /// Live tracks after this slice.
    pub tracks: Vec<TrackState<T>>,
    pub step: StepReport,
}

/// The stateful loop over consecutive slices.
#[derive(Debug, Clone)]
pub struct Pipeline<T: TrackScalar> {
    cfg: PipelineConfig<T>,
    tracker: Tracker<T>,
    background: MotionModel<T>,
    last_t_end: Option<T>,
}

impl<T: TrackScalar> Pipeline<T> {
    pub fn new(cfg: PipelineConfig<T>) -> Result<Self> {
        cfg.optimizer.validate()?;
        cfg.detection.validate()?;
        let tracker = Tracker::new(cfg.tracker.clone())?;
        Ok(Pipeline {
            cfg,
            tracker,
            background: MotionModel::identity(),
            last_t_end: None,
        })
    }

    pub fn config(&self) -> &PipelineConfig<T> {
        &self.cfg
    }

    /// Background model of the last processed slice, used to warm-start the next one.
    pub fn background(&self) -> &MotionModel<T> {
        &self.background
    }

    pub fn process(&mut self, slice: &EventSlice<T>) -> Result<SliceOutput<T>> {
        let analysis = analyze_slice(slice, &self.background, &self.cfg)?;
        self.background = analysis.background.model;
        let dt_frame = match self.last_t_end {
            Some(prev) if slice.t_end() > prev => slice.t_end() - prev,
            _ => slice.dt(),
        };
        self.last_t_end = Some(slice.t_end());
        let center = self.cfg.optimizer.center_for(slice);
        let measurements: Vec<_> = analysis
            .objects
            .iter()
            .map(|o| {
                let model = o.model.unwrap_or(analysis.background.model);
                let (fx, fy) = Warp::new(model, center).flow(o.centroid.0, o.centroid.1);
                ObjectMeasurement {
                    centroid: o.centroid,
                    model,
                    bbox: o.bbox,
                    velocity: Some((fx / slice.dt(), fy / slice.dt())),
                }
            })
            .collect();
        let step = self.tracker.step(&measurements, dt_frame)?;
        Ok(SliceOutput {
            analysis,
            tracks: self.tracker.tracks().to_vec(),
            step,
        })
    }
}
