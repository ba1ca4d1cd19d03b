//! Synthetic event clouds with known motion.
//!
//! Every scene point has a position at the start of a slice. Its events are placed on
//! the trajectory that the point's motion model undoes exactly: warping a generated
//! event by the generating model returns it to the point's start position. This makes
//! the generator an oracle for the warp, the projection and the optimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::eval::GroundTruthBox;
use crate::event::{Event, EventSlice};
use crate::model::{MotionModel, Warp};
use crate::scalar::Scalar;

/// Static background texture: random line segments plus scattered points.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundPattern<T> {
    pub segments: usize,
    /// Min and max segment length, pixels.
    pub segment_length: (T, T),
    /// Distance between edge points along a segment, pixels.
    pub point_spacing: T,
    /// Scattered edge points per square pixel.
    pub texture_density: T,
    /// The pattern covers the sensor grown by this many pixels on each side, so
    /// content can move into view.
    pub margin: T,
}

impl<T: Scalar> Default for BackgroundPattern<T> {
    fn default() -> Self {
        BackgroundPattern {
            segments: 40,
            segment_length: (T::lit(10.0), T::lit(40.0)),
            point_spacing: T::lit(1.0),
            texture_density: T::lit(0.02),
            margin: T::lit(20.0),
        }
    }
}

/// An independently moving textured rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticObject<T> {
    /// Region at the start of the first slice, pixels.
    pub region: BoundingBox<T>,
    /// The object's own motion in sensor coordinates (camera motion included).
    pub model: MotionModel<T>,
    /// Interior edge points per square pixel; the outline is always drawn.
    pub texture_density: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSceneSpec<T> {
    pub sensor_width: u32,
    pub sensor_height: u32,
    /// Start of the first slice, seconds.
    pub t0: T,
    /// Slice duration, seconds.
    pub dt: T,
    pub background: BackgroundPattern<T>,
    /// Ground-truth camera-induced motion M*.
    pub background_model: MotionModel<T>,
    pub objects: Vec<SyntheticObject<T>>,
    /// Uniform noise events per second.
    pub noise_rate: T,
    /// Events emitted by each edge point per slice.
    pub events_per_point: usize,
    /// Round output to whole pixels and microseconds, like a real sensor.
    pub quantize: bool,
}

impl<T: Scalar> Default for SyntheticSceneSpec<T> {
    fn default() -> Self {
        SyntheticSceneSpec {
            sensor_width: 240,
            sensor_height: 180,
            t0: T::zero(),
            dt: T::lit(0.025),
            background: BackgroundPattern::default(),
            background_model: MotionModel::identity(),
            objects: Vec::new(),
            noise_rate: T::zero(),
            events_per_point: 8,
            quantize: false,
        }
    }
}

impl<T: Scalar> SyntheticSceneSpec<T> {
    fn validate(&self) -> Result<()> {
        if self.sensor_width == 0 || self.sensor_height == 0 {
            return Err(Error::InvalidSpec("sensor dimensions must be positive".into()));
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() || !(self.t0 >= T::zero()) {
            return Err(Error::InvalidSpec(format!(
                "bad slice window t0={} dt={}",
                self.t0, self.dt
            )));
        }
        if !(self.noise_rate >= T::zero()) || !self.noise_rate.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "noise rate must be >= 0, got {}",
                self.noise_rate
            )));
        }
        if !self.background_model.is_finite() || self.objects.iter().any(|o| !o.model.is_finite()) {
            return Err(Error::InvalidSpec("motion models must be finite".into()));
        }
        let bg = &self.background;
        if !(bg.point_spacing > T::zero())
            || bg.segment_length.0 > bg.segment_length.1
            || bg.texture_density < T::zero()
        {
            return Err(Error::InvalidSpec("malformed background pattern".into()));
        }
        let w = T::from_count(self.sensor_width as usize);
        let h = T::from_count(self.sensor_height as usize);
        for o in &self.objects {
            let r = &o.region;
            if !(r.w > T::zero() && r.h > T::zero())
                || r.x < T::zero()
                || r.y < T::zero()
                || r.right() > w
                || r.bottom() > h
            {
                return Err(Error::InvalidSpec(format!("object region {r:?} outside sensor")));
            }
        }
        let has_background = bg.segments > 0 || bg.texture_density > T::zero();
        if !has_background && self.objects.is_empty() {
            return Err(Error::InvalidSpec("scene has no edge points".into()));
        }
        if self.events_per_point == 0 {
            return Err(Error::InvalidSpec("events_per_point must be positive".into()));
        }
        Ok(())
    }
}

/// Which scene element produced an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventSource {
    Background,
    /// Index into `SyntheticSceneSpec::objects`.
    Object(usize),
    Noise,
}

/// One generated slice.
#[derive(Debug, Clone)]
pub struct SyntheticScene<T> {
    pub slice: EventSlice<T>,
    /// Source of each event, aligned with `slice.events()`.
    pub sources: Vec<EventSource>,
    /// For background and object events, the index of the emitting edge point
    /// (unique within its source); `None` for noise.
    pub point_ids: Vec<Option<usize>>,
    /// Object boxes at the end of the slice.
    pub ground_truth: Vec<GroundTruthBox<T>>,
}

impl<T: Scalar> SyntheticScene<T> {
    /// Indices of events emitted by object `k`.
    pub fn object_event_indices(&self, k: usize) -> Vec<usize> {
        self.sources
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == EventSource::Object(k))
            .map(|(i, _)| i)
            .collect()
    }
}

/// A run of consecutive slices sharing one scene.
#[derive(Debug, Clone)]
pub struct SyntheticSequence<T> {
    pub slices: Vec<SyntheticScene<T>>,
}

impl<T: Scalar> SyntheticSequence<T> {
    pub fn ground_truth(&self) -> Vec<GroundTruthBox<T>> {
        self.slices
            .iter()
            .flat_map(|s| s.ground_truth.iter().copied())
            .collect()
    }

    /// All events of the sequence in time order.
    pub fn events(&self) -> Vec<Event<T>> {
        self.slices
            .iter()
            .flat_map(|s| s.slice.events().iter().copied())
            .collect()
    }
}

/// A point set moving under one model.
struct Layer<T> {
    source: EventSource,
    model: MotionModel<T>,
    points: Vec<(T, T)>,
    /// Object outline at the slice start, for ground-truth boxes.
    region: Option<BoundingBox<T>>,
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, lo: T, hi: T) -> T {
    let u: f64 = rng.random();
    lo + (hi - lo) * T::lit(u)
}

fn background_points<T: Scalar>(spec: &SyntheticSceneSpec<T>, rng: &mut ChaCha8Rng) -> Vec<(T, T)> {
    let bg = &spec.background;
    let lo_x = -bg.margin;
    let lo_y = -bg.margin;
    let hi_x = T::from_count(spec.sensor_width as usize) + bg.margin;
    let hi_y = T::from_count(spec.sensor_height as usize) + bg.margin;
    let mut pts = Vec::new();
    for _ in 0..bg.segments {
        let x = uniform(rng, lo_x, hi_x);
        let y = uniform(rng, lo_y, hi_y);
        let len = uniform(rng, bg.segment_length.0, bg.segment_length.1);
        let angle = uniform(rng, T::zero(), T::PI());
        let (s, c) = angle.sin_cos();
        let n = (len / bg.point_spacing).floor().to_usize().unwrap_or(0) + 1;
        for k in 0..n {
            let d = T::from_count(k) * bg.point_spacing;
            pts.push((x + c * d, y + s * d));
        }
    }
    let area = (hi_x - lo_x) * (hi_y - lo_y);
    let n_tex = (area * bg.texture_density).round().to_usize().unwrap_or(0);
    for _ in 0..n_tex {
        pts.push((uniform(rng, lo_x, hi_x), uniform(rng, lo_y, hi_y)));
    }
    pts
}

fn object_points<T: Scalar>(obj: &SyntheticObject<T>, spacing: T, rng: &mut ChaCha8Rng) -> Vec<(T, T)> {
    let r = &obj.region;
    let mut pts = Vec::new();
    let nx = (r.w / spacing).floor().to_usize().unwrap_or(0).max(1);
    let ny = (r.h / spacing).floor().to_usize().unwrap_or(0).max(1);
    for k in 0..=nx {
        let x = r.x + r.w * T::from_count(k) / T::from_count(nx);
        pts.push((x, r.y));
        pts.push((x, r.bottom()));
    }
    for k in 1..ny {
        let y = r.y + r.h * T::from_count(k) / T::from_count(ny);
        pts.push((r.x, y));
        pts.push((r.right(), y));
    }
    let n_tex = (r.area() * obj.texture_density).round().to_usize().unwrap_or(0);
    for _ in 0..n_tex {
        pts.push((uniform(rng, r.x, r.right()), uniform(rng, r.y, r.bottom())));
    }
    pts
}

fn build_layers<T: Scalar>(spec: &SyntheticSceneSpec<T>, rng: &mut ChaCha8Rng) -> Vec<Layer<T>> {
    let mut layers = vec![Layer {
        source: EventSource::Background,
        model: spec.background_model,
        points: background_points(spec, rng),
        region: None,
    }];
    for (k, obj) in spec.objects.iter().enumerate() {
        layers.push(Layer {
            source: EventSource::Object(k),
            model: obj.model,
            points: object_points(obj, spec.background.point_spacing, rng),
            region: Some(obj.region),
        });
    }
    layers
}

struct Emitted<T> {
    event: Event<T>,
    source: EventSource,
    point: Option<usize>,
}

fn emit_slice<T: Scalar>(
    spec: &SyntheticSceneSpec<T>,
    layers: &[Layer<T>],
    t0: T,
    rng: &mut ChaCha8Rng,
) -> Result<SyntheticScene<T>> {
    let w = T::from_count(spec.sensor_width as usize);
    let h = T::from_count(spec.sensor_height as usize);
    let center = (w / T::lit(2.0), h / T::lit(2.0));
    let inside = |x: T, y: T| x >= T::zero() && y >= T::zero() && x < w && y < h;
    let mut out: Vec<Emitted<T>> = Vec::new();
    let mut ground_truth = Vec::new();

    for layer in layers {
        let warp = Warp::new(layer.model, center);
        for (pid, &(px, py)) in layer.points.iter().enumerate() {
            for _ in 0..spec.events_per_point {
                let s = uniform(rng, T::zero(), T::one());
                let polarity = rng.random::<bool>();
                let Some((x, y)) = warp.invert(px, py, s) else { continue };
                if inside(x, y) {
                    out.push(Emitted {
                        event: Event::new(t0 + s * spec.dt, x, y, polarity),
                        source: layer.source,
                        point: Some(pid),
                    });
                }
            }
        }
        if let (EventSource::Object(k), Some(region)) = (layer.source, layer.region) {
            let corners = region
                .corners()
                .into_iter()
                .filter_map(|(x, y)| warp.invert(x, y, T::one()));
            if let Some(full) = BoundingBox::hull(corners) {
                if let Some(visible) = full.clip(w, h) {
                    if visible.area() >= T::lit(0.5) * full.area() {
                        ground_truth.push(GroundTruthBox {
                            frame_time: t0 + spec.dt,
                            object_id: k as u32,
                            bbox: visible,
                        });
                    }
                }
            }
        }
    }

    let expected_noise = (spec.noise_rate * spec.dt).as_f64();
    if expected_noise > 0.0 {
        let poisson = Poisson::new(expected_noise).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        let n = poisson.sample(rng) as usize;
        for _ in 0..n {
            let s = uniform(rng, T::zero(), T::one());
            let x = uniform(rng, T::zero(), w);
            let y = uniform(rng, T::zero(), h);
            let polarity = rng.random::<bool>();
            out.push(Emitted {
                event: Event::new(t0 + s * spec.dt, x, y, polarity),
                source: EventSource::Noise,
                point: None,
            });
        }
    }

    // Stable sort keeps generation order for equal timestamps, so output is seed-determined.
    out.sort_by(|a, b| a.event.t.partial_cmp(&b.event.t).unwrap_or(std::cmp::Ordering::Equal));
    let sources = out.iter().map(|e| e.source).collect();
    let point_ids = out.iter().map(|e| e.point).collect();
    let events = out.into_iter().map(|e| e.event).collect();
    let mut slice = EventSlice::new(events, t0, spec.dt, spec.sensor_width, spec.sensor_height)?;
    if spec.quantize {
        slice = slice.quantized();
    }
    Ok(SyntheticScene {
        slice,
        sources,
        point_ids,
        ground_truth,
    })
}

/// Generates one slice `[t0, t0 + dt]` of the scene. Deterministic given `seed`.
pub fn synthesize<T: Scalar>(spec: &SyntheticSceneSpec<T>, seed: u64) -> Result<SyntheticScene<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = build_layers(spec, &mut rng);
    if layers.iter().all(|l| l.points.is_empty()) {
        return Err(Error::InvalidSpec("scene has no edge points".into()));
    }
    emit_slice(spec, &layers, spec.t0, &mut rng)
}

/// Generates `n_slices` consecutive slices. Each scene point carries over from the end
/// of one slice to the start of the next, so motion is continuous across slices.
pub fn synthesize_sequence<T: Scalar>(
    spec: &SyntheticSceneSpec<T>,
    n_slices: usize,
    seed: u64,
) -> Result<SyntheticSequence<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = build_layers(spec, &mut rng);
    if layers.iter().all(|l| l.points.is_empty()) {
        return Err(Error::InvalidSpec("scene has no edge points".into()));
    }
    let w = T::from_count(spec.sensor_width as usize);
    let h = T::from_count(spec.sensor_height as usize);
    let center = (w / T::lit(2.0), h / T::lit(2.0));
    let mut slices = Vec::with_capacity(n_slices);
    for k in 0..n_slices {
        let t0 = spec.t0 + T::from_count(k) * spec.dt;
        slices.push(emit_slice(spec, &layers, t0, &mut rng)?);
        for layer in &mut layers {
            let warp = Warp::new(layer.model, center);
            for p in &mut layer.points {
                if let Some(q) = warp.invert(p.0, p.1, T::one()) {
                    *p = q;
                }
            }
            if let Some(region) = layer.region {
                let corners = region
                    .corners()
                    .into_iter()
                    .filter_map(|(x, y)| warp.invert(x, y, T::one()));
                layer.region = BoundingBox::hull(corners);
            }
        }
    }
    Ok(SyntheticSequence { slices })
}

/// Ranges for [`random_object_scene`].
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSceneParams {
    pub sensor_width: u32,
    pub sensor_height: u32,
    /// Objects are drawn uniformly from this inclusive range.
    pub objects: (usize, usize),
    /// Object side length range, pixels.
    pub size: (f64, f64),
    /// Object speed relative to the background, as a multiple of its larger side per slice.
    pub speed_factor: (f64, f64),
    pub texture_density: f64,
    /// Background `h_x`, `h_y` are drawn from `[-shift, shift]` pixels.
    pub background_shift: f64,
    /// Background `h_z`, `theta` are drawn from `[-zoom, zoom]`.
    pub background_zoom: f64,
}

impl Default for ObjectSceneParams {
    fn default() -> Self {
        ObjectSceneParams {
            sensor_width: 240,
            sensor_height: 180,
            objects: (1, 3),
            size: (12.0, 18.0),
            speed_factor: (1.5, 2.0),
            texture_density: 1.0,
            background_shift: 3.0,
            background_zoom: 0.02,
        }
    }
}

/// Random scene of textured objects translating relative to a moving background.
///
/// Objects share the background's expansion and rotation; only their translation differs.
///
/// Objects sit in separate vertical lanes so their boxes never overlap at the start.
pub fn random_object_scene<T: Scalar>(params: &ObjectSceneParams, seed: u64) -> Result<SyntheticSceneSpec<T>> {
    let p = params;
    let (w, h) = (p.sensor_width as f64, p.sensor_height as f64);
    if p.objects.0 > p.objects.1 || p.size.0 > p.size.1 || p.size.0 <= 0.0 || p.speed_factor.0 > p.speed_factor.1 {
        return Err(Error::InvalidSpec("malformed object scene ranges".into()));
    }
    let lane = (w - 30.0) / p.objects.1.max(1) as f64;
    let slack = lane - 20.0 - p.size.1;
    let y_hi = h - 50.0;
    if slack < 0.0 || y_hi < 30.0 + p.size.1 - 20.0 {
        return Err(Error::InvalidSpec(format!(
            "sensor {}x{} too small for {} objects",
            p.sensor_width, p.sensor_height, p.objects.1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |r: (f64, f64)| if r.0 < r.1 { rng.random_range(r.0..r.1) } else { r.0 };
    let (s, z) = (p.background_shift, p.background_zoom);
    let bg = [pick((-s, s)), pick((-s, s)), pick((-z, z)), pick((-z, z))];
    let background_model = MotionModel::new(T::lit(bg[0]), T::lit(bg[1]), T::lit(bg[2]), T::lit(bg[3]));
    let k = rng.random_range(p.objects.0..=p.objects.1);
    let mut objects = Vec::with_capacity(k);
    for i in 0..k {
        let mut pick = |r: (f64, f64)| if r.0 < r.1 { rng.random_range(r.0..r.1) } else { r.0 };
        let ow = pick(p.size);
        let oh = pick(p.size);
        let x = 20.0 + lane * i as f64 + pick((0.0, slack.min(lane * 3.0 / 7.0)));
        let y = pick((30.0, y_hi)).min(h - oh);
        let speed = ow.max(oh) * pick(p.speed_factor);
        let angle = pick((0.0, std::f64::consts::TAU));
        objects.push(SyntheticObject {
            region: BoundingBox::new(T::lit(x), T::lit(y), T::lit(ow), T::lit(oh)),
            model: MotionModel::new(
                T::lit(bg[0] + speed * angle.cos()),
                T::lit(bg[1] + speed * angle.sin()),
                T::lit(bg[2]),
                T::lit(bg[3]),
            ),
            texture_density: T::lit(p.texture_density),
        });
    }
    Ok(SyntheticSceneSpec {
        sensor_width: p.sensor_width,
        sensor_height: p.sensor_height,
        background_model,
        objects,
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::warp_event_cloud;
    use std::collections::HashMap;

    fn small_spec() -> SyntheticSceneSpec<f64> {
        SyntheticSceneSpec {
            sensor_width: 60,
            sensor_height: 40,
            background: BackgroundPattern {
                segments: 6,
                margin: 0.0,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn spread_per_point(scene: &SyntheticScene<f64>, slice: &EventSlice<f64>) -> f64 {
        let mut groups: HashMap<(EventSource, usize), Vec<(f64, f64)>> = HashMap::new();
        for ((e, src), pid) in slice.events().iter().zip(&scene.sources).zip(&scene.point_ids) {
            if let Some(p) = pid {
                groups.entry((*src, *p)).or_default().push((e.x, e.y));
            }
        }
        groups
            .values()
            .map(|pts| {
                let b = BoundingBox::hull(pts.iter().copied()).unwrap();
                b.w.max(b.h)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn identity_scene_points_do_not_move() {
        let scene = synthesize(&small_spec(), 1).unwrap();
        assert!(!scene.slice.is_empty());
        assert_eq!(spread_per_point(&scene, &scene.slice), 0.0);
    }

    #[test]
    fn warping_by_generator_collapses_points() {
        let mut spec = small_spec();
        spec.background_model = MotionModel::new(8.0 * 0.3, 0.0, 0.0, 0.0);
        let scene = synthesize(&spec, 2).unwrap();
        assert!(spread_per_point(&scene, &scene.slice) > 1.0);
        let warped = warp_event_cloud(&scene.slice, &spec.background_model, scene.slice.center()).unwrap();
        assert!(spread_per_point(&scene, &warped) < 0.3);
    }

    #[test]
    fn same_seed_same_output() {
        let mut spec = small_spec();
        spec.noise_rate = 2000.0;
        spec.background_model = MotionModel::new(1.0, 2.0, 0.05, -0.05);
        let a = synthesize(&spec, 9).unwrap();
        let b = synthesize(&spec, 9).unwrap();
        assert_eq!(a.slice, b.slice);
        let c = synthesize(&spec, 10).unwrap();
        assert_ne!(a.slice, c.slice);
    }

    #[test]
    fn object_ground_truth_box() {
        let mut spec = small_spec();
        spec.sensor_width = 100;
        spec.sensor_height = 100;
        spec.objects.push(SyntheticObject {
            region: BoundingBox::new(30.0, 30.0, 20.0, 20.0),
            model: MotionModel::translation(5.0, 0.0),
            texture_density: 0.1,
        });
        let scene = synthesize(&spec, 3).unwrap();
        assert_eq!(scene.ground_truth.len(), 1);
        let b = scene.ground_truth[0].bbox;
        assert!((b.w - 20.0).abs() < 1e-9 && (b.h - 20.0).abs() < 1e-9);
        assert!((b.x - 35.0).abs() < 1e-9);
        assert!(!scene.object_event_indices(0).is_empty());
    }

    #[test]
    fn empty_pattern_is_rejected() {
        let mut spec = small_spec();
        spec.background.segments = 0;
        spec.background.texture_density = 0.0;
        assert!(matches!(synthesize(&spec, 0), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn sequence_is_continuous() {
        let mut spec = small_spec();
        spec.background_model = MotionModel::translation(1.0, 0.0);
        let seq = synthesize_sequence(&spec, 3, 5).unwrap();
        assert_eq!(seq.slices.len(), 3);
        assert_eq!(seq.slices[1].slice.t0(), spec.dt);
        let ev = seq.events();
        assert!(ev.windows(2).all(|p| p[0].t <= p[1].t));
    }

    #[test]
    fn quantized_output_is_integral() {
        let mut spec = small_spec();
        spec.quantize = true;
        spec.background_model = MotionModel::translation(2.0, 1.0);
        let scene = synthesize(&spec, 4).unwrap();
        assert!(scene
            .slice
            .events()
            .iter()
            .all(|e| e.x.fract() == 0.0 && e.y.fract() == 0.0));
    }
}
