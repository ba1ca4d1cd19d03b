//! Overlap-based success rate of tracked boxes against labeled boxes.

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One labeled object box at one frame time, sensor pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthBox<T> {
    pub frame_time: T,
    pub object_id: u32,
    pub bbox: BoundingBox<T>,
}

/// A reported box at one frame time, sensor pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionBox<T> {
    pub frame_time: T,
    pub bbox: BoundingBox<T>,
}

/// How overlap between a detection and a labeled box is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverlapMeasure {
    /// Intersection over the labeled box area.
    #[default]
    Coverage,
    IntersectionOverUnion,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions<T> {
    pub measure: OverlapMeasure,
    /// Minimum overlap for a success, inclusive.
    pub threshold: T,
    /// A detection frame is paired with a labeled frame when their times differ by at
    /// most this many seconds; the nearest such frame is used.
    pub time_tolerance: T,
}

impl<T: Scalar> Default for EvalOptions<T> {
    fn default() -> Self {
        EvalOptions {
            measure: OverlapMeasure::Coverage,
            threshold: T::lit(0.5),
            time_tolerance: T::lit(1e-6),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameScore<T> {
    pub frame_time: T,
    pub objects: usize,
    pub successes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessReport<T> {
    /// Mean per-frame success rate, percent.
    pub rate_percent: T,
    pub frames: Vec<FrameScore<T>>,
}

fn overlap<T: Scalar>(gt: &BoundingBox<T>, det: &BoundingBox<T>, measure: OverlapMeasure) -> T {
    match measure {
        OverlapMeasure::Coverage => gt.coverage_by(det),
        OverlapMeasure::IntersectionOverUnion => gt.iou(det),
    }
}

/// Groups items by frame time. Times closer than `eps` share a group.
fn group_by_time<T: Scalar, I: Copy>(items: &[I], time: impl Fn(&I) -> T, eps: T) -> Vec<(T, Vec<I>)> {
    let mut sorted: Vec<I> = items.to_vec();
    sorted.sort_by(|a, b| time(a).partial_cmp(&time(b)).unwrap_or(std::cmp::Ordering::Equal));
    let mut groups: Vec<(T, Vec<I>)> = Vec::new();
    for it in sorted {
        let t = time(&it);
        match groups.last_mut() {
            Some((t0, g)) if (t - *t0).abs() <= eps => g.push(it),
            _ => groups.push((t, vec![it])),
        }
    }
    groups
}

/// Per labeled frame: the share of labeled objects overlapped by at least one detection
/// of the paired frame; the sequence score is the mean over frames, in percent.
pub fn evaluate_success_rate<T: Scalar>(
    detections: &[DetectionBox<T>],
    ground_truth: &[GroundTruthBox<T>],
    options: &EvalOptions<T>,
) -> Result<SuccessReport<T>> {
    if ground_truth.is_empty() {
        return Err(Error::EmptyInput("no ground-truth boxes"));
    }
    let eps = T::lit(1e-9);
    let gt_frames = group_by_time(ground_truth, |g| g.frame_time, eps);
    let det_frames = group_by_time(detections, |d| d.frame_time, eps);

    let mut frames = Vec::with_capacity(gt_frames.len());
    for (t, gts) in &gt_frames {
        let paired = det_frames
            .iter()
            .map(|(td, dets)| ((*td - *t).abs(), dets))
            .filter(|(dist, _)| *dist <= options.time_tolerance)
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(_, dets)| dets.as_slice())
            .unwrap_or(&[]);
        let successes = gts
            .iter()
            .filter(|g| {
                paired
                    .iter()
                    .any(|d| overlap(&g.bbox, &d.bbox, options.measure) >= options.threshold)
            })
            .count();
        frames.push(FrameScore {
            frame_time: *t,
            objects: gts.len(),
            successes,
        });
    }
    let total: T = frames
        .iter()
        .map(|f| T::from_count(f.successes) / T::from_count(f.objects))
        .sum();
    Ok(SuccessReport {
        rate_percent: T::lit(100.0) * total / T::from_count(frames.len()),
        frames,
    })
}
