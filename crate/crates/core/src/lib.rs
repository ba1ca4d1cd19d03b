//! Motion compensation of event-camera slices with a 4-parameter global warp, and
//! detection and tracking of independently moving objects from what the warp leaves
//! misaligned.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root and the [`f64`] and [`f32`] modules pin the concrete instantiations.

// Range checks are written as negated comparisons so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bbox;
pub mod compensation;
pub mod config;
pub mod detection;
pub mod error;
pub mod eval;
pub mod event;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod projection;
pub mod render;
pub mod scalar;
pub mod synth;
pub mod tracking;

pub use bbox::BoundingBox;
pub use compensation::{coarse_minimize, compensate, fine_refine, CompensationResult, OptimizerConfig};
pub use config::RunConfig;
pub use detection::{
    detect, detect_in_slice, fit_object_model, refine_background, DetectedObject, DetectionConfig, MotionScoreField,
};
pub use error::{Error, Result};
pub use eval::{evaluate_success_rate, DetectionBox, EvalOptions, GroundTruthBox, OverlapMeasure};
pub use event::{Event, EventSlice};
pub use io::{read_events, slice_events, write_events, EventReader, SliceWindow, Slicer};
pub use model::{warp_event, warp_event_cloud, MotionModel, Warp};
pub use pipeline::{analyze_slice, ObjectReport, Pipeline, PipelineConfig, SliceAnalysis, SliceOutput};
pub use projection::{
    event_density, model_gradient, model_gradient_with, project, project_about, time_image_gradients, EventCountImage,
    GradientAssignment, GradientOptions, ModelGradient, Projection, StencilRule, TimeImage,
};
pub use scalar::Scalar;
pub use synth::{random_object_scene, synthesize, synthesize_sequence, ObjectSceneParams, SyntheticSceneSpec};
pub use tracking::{ObjectMeasurement, TrackScalar, TrackState, Tracker, TrackerParams};

/// Common `f64` instantiations.
pub mod f64 {
    pub type Event = crate::Event<f64>;
    pub type EventSlice = crate::EventSlice<f64>;
    pub type MotionModel = crate::MotionModel<f64>;
    pub type Warp = crate::Warp<f64>;
    pub type BoundingBox = crate::BoundingBox<f64>;
    pub type OptimizerConfig = crate::OptimizerConfig<f64>;
    pub type CompensationResult = crate::CompensationResult<f64>;
    pub type DetectionConfig = crate::DetectionConfig<f64>;
    pub type TrackerParams = crate::TrackerParams<f64>;
    pub type Tracker = crate::Tracker<f64>;
    pub type PipelineConfig = crate::PipelineConfig<f64>;
    pub type Pipeline = crate::Pipeline<f64>;
    pub type RunConfig = crate::RunConfig<f64>;
}

/// Common `f32` instantiations.
pub mod f32 {
    pub type Event = crate::Event<f32>;
    pub type EventSlice = crate::EventSlice<f32>;
    pub type MotionModel = crate::MotionModel<f32>;
    pub type Warp = crate::Warp<f32>;
    pub type BoundingBox = crate::BoundingBox<f32>;
    pub type OptimizerConfig = crate::OptimizerConfig<f32>;
    pub type CompensationResult = crate::CompensationResult<f32>;
    pub type DetectionConfig = crate::DetectionConfig<f32>;
    pub type TrackerParams = crate::TrackerParams<f32>;
    pub type Tracker = crate::Tracker<f32>;
    pub type PipelineConfig = crate::PipelineConfig<f32>;
    pub type Pipeline = crate::Pipeline<f32>;
    pub type RunConfig = crate::RunConfig<f32>;
}

pub type Event64 = Event<f64>;
pub type EventSlice64 = EventSlice<f64>;
pub type MotionModel64 = MotionModel<f64>;
pub type Pipeline64 = Pipeline<f64>;
