//! Independent motion detection from residual misalignment in the time image.
//!
//! After global compensation, background bins hold mean timestamps near the global
//! mean. Bins whose events arrived systematically later than that mean belong to
//! something the global model did not explain.

use std::collections::VecDeque;

use crate::bbox::BoundingBox;
use crate::compensation::{compensate, CompensationResult, OptimizerConfig};
use crate::error::{Error, Result};
use crate::event::EventSlice;
use crate::model::{MotionModel, Warp};
use crate::projection::{project_about, Grid, TimeImage};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionConfig<T> {
    /// Minimum score `lambda` for an object bin.
    pub threshold: T,
    /// Components smaller than this many bins are dropped.
    pub min_area: usize,
    /// Also mark bins with score below `-threshold`.
    pub negative_tail: bool,
    /// Bin size of the time image used for detection, pixels.
    pub bin_size: T,
    /// Per-object model fits need at least this many events.
    pub min_object_events: usize,
}

impl<T: Scalar> Default for DetectionConfig<T> {
    fn default() -> Self {
        DetectionConfig {
            threshold: T::lit(0.1),
            min_area: 10,
            negative_tail: false,
            bin_size: T::lit(2.0),
            min_object_events: 50,
        }
    }
}

impl<T: Scalar> DetectionConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > T::zero() && self.threshold < T::one()) {
            return Err(Error::invalid(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if !(self.bin_size > T::zero()) || !self.bin_size.is_finite() {
            return Err(Error::invalid(format!(
                "detection bin size must be > 0, got {}",
                self.bin_size
            )));
        }
        Ok(())
    }
}

/// Per-bin deviation of the mean timestamp from the global mean, in slice units.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionScoreField<T> {
    grid: Grid<T>,
    rho: Vec<T>,
    defined: Vec<bool>,
}

impl<T: Scalar> MotionScoreField<T> {
    /// Builds a field from explicit scores; `None` marks an unoccupied bin.
    pub fn from_scores(grid: Grid<T>, scores: &[Option<T>]) -> Result<Self> {
        if scores.len() != grid.len() {
            return Err(Error::invalid(format!(
                "expected {} bins, got {}",
                grid.len(),
                scores.len()
            )));
        }
        Ok(MotionScoreField {
            grid,
            rho: scores.iter().map(|s| s.unwrap_or(T::zero())).collect(),
            defined: scores.iter().map(Option::is_some).collect(),
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        let k = self.grid.index(i, j);
        self.defined[k].then(|| self.rho[k])
    }

    /// `(i, j, rho)` over defined bins.
    pub fn iter_defined(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        let w = self.grid.width();
        self.defined
            .iter()
            .enumerate()
            .filter(|(_, d)| **d)
            .map(move |(k, _)| (k % w, k / w, self.rho[k]))
    }
}

/// `rho = T(i, j) - mean(T)` over occupied bins. Timestamps are already normalized by
/// the slice length, so no further division is needed and `|rho| <= 1`.
pub fn score_field<T: Scalar>(image: &TimeImage<T>) -> Result<MotionScoreField<T>> {
    let n = image.occupied_bins();
    if n == 0 {
        return Err(Error::EmptyInput("time image has no occupied bins"));
    }
    let mean = image.iter_occupied().map(|(_, _, t)| t).sum::<T>() / T::from_count(n);
    let defined: Vec<bool> = image.counts().iter().map(|c| *c > 0).collect();
    let rho = image
        .means()
        .iter()
        .zip(&defined)
        .map(|(t, d)| if *d { *t - mean } else { T::zero() })
        .collect();
    Ok(MotionScoreField {
        grid: *image.grid(),
        rho,
        defined,
    })
}

/// Inclusive bin rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinRect {
    pub i0: usize,
    pub j0: usize,
    pub i1: usize,
    pub j1: usize,
}

impl BinRect {
    pub fn width(&self) -> usize {
        self.i1 - self.i0 + 1
    }

    pub fn height(&self) -> usize {
        self.j1 - self.j0 + 1
    }
}

/// One connected region of independently moving bins.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectedObject<T> {
    /// Bins of the region, row-major order.
    pub pixels: Vec<(usize, usize)>,
    pub bbox: BinRect,
    /// Mean bin position (bin centers), in bins.
    pub centroid: (T, T),
    /// Indices of the slice events that project into `pixels`.
    pub events: Vec<usize>,
    /// The object's own motion; identity until fitted.
    pub model: MotionModel<T>,
}

impl<T: Scalar> DetectedObject<T> {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    /// Region rectangle in pixels on a grid of `bin_size`.
    pub fn pixel_box(&self, bin_size: T) -> BoundingBox<T> {
        BoundingBox::new(
            T::from_count(self.bbox.i0) * bin_size,
            T::from_count(self.bbox.j0) * bin_size,
            T::from_count(self.bbox.width()) * bin_size,
            T::from_count(self.bbox.height()) * bin_size,
        )
    }
}

fn erode(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut out = vec![false; w * h];
    if w < 3 || h < 3 {
        return out;
    }
    for j in 1..h - 1 {
        for i in 1..w - 1 {
            out[j * w + i] = (j - 1..=j + 1).all(|jj| (i - 1..=i + 1).all(|ii| mask[jj * w + ii]));
        }
    }
    out
}

fn dilate(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut out = vec![false; w * h];
    for j in 0..h {
        for i in 0..w {
            if !mask[j * w + i] {
                continue;
            }
            for jj in j.saturating_sub(1)..=(j + 1).min(h - 1) {
                for ii in i.saturating_sub(1)..=(i + 1).min(w - 1) {
                    out[jj * w + ii] = true;
                }
            }
        }
    }
    out
}

/// 3x3 opening: erosion then dilation. Bins outside the grid count as unset.
pub fn open3x3(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    dilate(&erode(mask, w, h), w, h)
}

/// 8-connected components in row-major discovery order.
pub fn connected_components(mask: &[bool], w: usize, h: usize) -> Vec<Vec<(usize, usize)>> {
    let mut seen = vec![false; w * h];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Vec::new();
        while let Some(k) = queue.pop_front() {
            let (i, j) = (k % w, k / w);
            comp.push((i, j));
            for jj in j.saturating_sub(1)..=(j + 1).min(h - 1) {
                for ii in i.saturating_sub(1)..=(i + 1).min(w - 1) {
                    let kk = jj * w + ii;
                    if mask[kk] && !seen[kk] {
                        seen[kk] = true;
                        queue.push_back(kk);
                    }
                }
            }
        }
        comp.sort_by_key(|&(i, j)| (j, i));
        components.push(comp);
    }
    components
}

/// Thresholds the score field, opens the mask once and labels the surviving
/// components. Event subsets are left empty; see [`assign_events`].
pub fn detect<T: Scalar>(field: &MotionScoreField<T>, cfg: &DetectionConfig<T>) -> Result<Vec<DetectedObject<T>>> {
    cfg.validate()?;
    let (w, h) = (field.grid.width(), field.grid.height());
    let mask: Vec<bool> = field
        .rho
        .iter()
        .zip(&field.defined)
        .map(|(r, d)| *d && (*r > cfg.threshold || (cfg.negative_tail && *r < -cfg.threshold)))
        .collect();
    let opened = open3x3(&mask, w, h);
    let half = T::lit(0.5);
    let objects = connected_components(&opened, w, h)
        .into_iter()
        .filter(|c| c.len() >= cfg.min_area)
        .map(|pixels| {
            let i0 = pixels.iter().map(|p| p.0).min().unwrap_or(0);
            let i1 = pixels.iter().map(|p| p.0).max().unwrap_or(0);
            let j0 = pixels.iter().map(|p| p.1).min().unwrap_or(0);
            let j1 = pixels.iter().map(|p| p.1).max().unwrap_or(0);
            let n = T::from_count(pixels.len());
            let cx = pixels.iter().map(|p| T::from_count(p.0) + half).sum::<T>() / n;
            let cy = pixels.iter().map(|p| T::from_count(p.1) + half).sum::<T>() / n;
            DetectedObject {
                pixels,
                bbox: BinRect { i0, j0, i1, j1 },
                centroid: (cx, cy),
                events: Vec::new(),
                model: MotionModel::identity(),
            }
        })
        .collect();
    Ok(objects)
}

/// Fills each object's event subset: the events whose warp under `model` lands in one of
/// the object's bins on `grid`. An event belongs to at most one object.
pub fn assign_events<T: Scalar>(
    objects: &mut [DetectedObject<T>],
    slice: &EventSlice<T>,
    model: &MotionModel<T>,
    center: (T, T),
    grid: &Grid<T>,
) {
    let mut owner: Vec<Option<usize>> = vec![None; grid.len()];
    for (k, obj) in objects.iter_mut().enumerate() {
        obj.events.clear();
        for &(i, j) in &obj.pixels {
            owner[grid.index(i, j)] = Some(k);
        }
    }
    let warp = Warp::new(*model, center);
    for (idx, e) in slice.events().iter().enumerate() {
        let (x, y) = warp.apply(e.x, e.y, slice.normalized_time(e.t));
        if let Some(k) = grid.locate(x, y).and_then(|b| owner[b]) {
            objects[k].events.push(idx);
        }
    }
}

/// Projects the slice under the background model on the detection grid, scores it,
/// detects objects and assigns their events.
pub fn detect_in_slice<T: Scalar>(
    slice: &EventSlice<T>,
    background: &MotionModel<T>,
    center: (T, T),
    cfg: &DetectionConfig<T>,
) -> Result<(MotionScoreField<T>, Vec<DetectedObject<T>>)> {
    cfg.validate()?;
    let p = project_about(slice, background, cfg.bin_size, center)?;
    let field = score_field(&p.time)?;
    let mut objects = detect(&field, cfg)?;
    assign_events(&mut objects, slice, background, center, p.time.grid());
    Ok((field, objects))
}

/// Fits a motion model to the object's events alone, starting from `m0`.
pub fn fit_object_model<T: Scalar>(
    slice: &EventSlice<T>,
    object: &DetectedObject<T>,
    m0: &MotionModel<T>,
    optimizer: &OptimizerConfig<T>,
    min_events: usize,
) -> Result<MotionModel<T>> {
    if object.events.len() < min_events.max(1) {
        return Err(Error::InsufficientEvents {
            found: object.events.len(),
            required: min_events.max(1),
        });
    }
    Ok(compensate(&subset(slice, &object.events), m0, optimizer)?.model)
}

fn subset<T: Scalar>(slice: &EventSlice<T>, indices: &[usize]) -> EventSlice<T> {
    let mut keep = vec![false; slice.len()];
    for &i in indices {
        if i < keep.len() {
            keep[i] = true;
        }
    }
    slice.filter_indices(|i| keep[i])
}

/// Drops every object's events and re-compensates the remainder, warm-started from `model`.
pub fn refine_background<T: Scalar>(
    slice: &EventSlice<T>,
    objects: &[DetectedObject<T>],
    model: &MotionModel<T>,
    optimizer: &OptimizerConfig<T>,
) -> Result<CompensationResult<T>> {
    let mut drop = vec![false; slice.len()];
    for obj in objects {
        for &i in &obj.events {
            if i < drop.len() {
                drop[i] = true;
            }
        }
    }
    let rest = slice.filter_indices(|i| !drop[i]);
    if rest.is_empty() {
        return Err(Error::EmptyInput("no background events left after removing objects"));
    }
    compensate(&rest, model, optimizer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(w: u32, h: u32) -> Grid<f64> {
        Grid::for_sensor(w, h, 1.0).unwrap()
    }

    fn field_with_blocks(w: u32, h: u32, blocks: &[(usize, usize, usize, usize, f64)]) -> MotionScoreField<f64> {
        let g = grid(w, h);
        let mut scores = vec![Some(0.0); g.len()];
        for &(i0, j0, bw, bh, v) in blocks {
            for j in j0..j0 + bh {
                for i in i0..i0 + bw {
                    scores[g.index(i, j)] = Some(v);
                }
            }
        }
        MotionScoreField::from_scores(g, &scores).unwrap()
    }

    #[test]
    fn uniform_time_image_scores_zero() {
        let g = grid(6, 6);
        let t = TimeImage::from_means(g, &vec![Some(0.37); 36]).unwrap();
        let f = score_field(&t).unwrap();
        assert!(f.iter_defined().all(|(_, _, r)| r.abs() < 1e-15));
        let mut single = vec![None; 36];
        single[7] = Some(0.9);
        let f = score_field(&TimeImage::from_means(g, &single).unwrap()).unwrap();
        assert_eq!(f.get(1, 1), Some(0.0));
        assert_eq!(f.get(0, 0), None);
    }

    #[test]
    fn two_level_image() {
        // 90 background bins at 0.5, 10 object bins at 0.8: mean 0.53.
        let g = grid(10, 10);
        let means: Vec<_> = (0..100).map(|k| Some(if k < 10 { 0.8 } else { 0.5 })).collect();
        let f = score_field(&TimeImage::from_means(g, &means).unwrap()).unwrap();
        assert!((f.get(0, 0).unwrap() - 0.27).abs() < 1e-12);
        assert!((f.get(5, 5).unwrap() + 0.03).abs() < 1e-12);
        let sum: f64 = f.iter_defined().map(|(_, _, r)| r).sum();
        assert!(sum.abs() < 1e-9);
    }

    #[test]
    fn empty_time_image_is_error() {
        assert!(score_field(&TimeImage::<f64>::empty(grid(4, 4))).is_err());
    }

    #[test]
    fn all_zero_field_has_no_objects() {
        let f = field_with_blocks(20, 20, &[]);
        assert!(detect(&f, &DetectionConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn one_block_one_object() {
        let f = field_with_blocks(60, 40, &[(10, 10, 20, 10, 0.4)]);
        let cfg = DetectionConfig {
            threshold: 0.2,
            ..Default::default()
        };
        let objs = detect(&f, &cfg).unwrap();
        assert_eq!(objs.len(), 1);
        assert_eq!(objs[0].area(), 200);
        assert_eq!(
            objs[0].bbox,
            BinRect {
                i0: 10,
                j0: 10,
                i1: 29,
                j1: 19
            }
        );
        assert_eq!(objs[0].centroid, (20.0, 15.0));
    }

    #[test]
    fn separated_blocks_two_objects_and_specks_vanish() {
        let f = field_with_blocks(60, 40, &[(5, 5, 8, 8, 0.4), (40, 20, 10, 10, 0.3), (30, 5, 2, 2, 0.9)]);
        let objs = detect(&f, &DetectionConfig::default()).unwrap();
        assert_eq!(objs.len(), 2);
    }

    #[test]
    fn negative_tail_is_opt_in() {
        let f = field_with_blocks(30, 30, &[(5, 5, 8, 8, -0.4)]);
        assert!(detect(&f, &DetectionConfig::default()).unwrap().is_empty());
        let cfg = DetectionConfig {
            negative_tail: true,
            ..Default::default()
        };
        assert_eq!(detect(&f, &cfg).unwrap().len(), 1);
    }

    #[test]
    fn min_area_filters_components() {
        let f = field_with_blocks(30, 30, &[(5, 5, 3, 3, 0.5)]);
        assert!(detect(&f, &DetectionConfig::default()).unwrap().is_empty());
        let cfg = DetectionConfig {
            min_area: 9,
            ..Default::default()
        };
        assert_eq!(detect(&f, &cfg).unwrap().len(), 1);
    }

    #[test]
    fn opening_is_idempotent_on_output() {
        let f = field_with_blocks(40, 40, &[(3, 3, 7, 5, 0.5), (9, 7, 4, 9, 0.5), (25, 25, 3, 8, 0.5)]);
        let cfg = DetectionConfig::default();
        let first = detect(&f, &cfg).unwrap();
        let g = *f.grid();
        let mut scores = vec![Some(0.0); g.len()];
        for o in &first {
            for &(i, j) in &o.pixels {
                scores[g.index(i, j)] = Some(0.5);
            }
        }
        let again = detect(&MotionScoreField::from_scores(g, &scores).unwrap(), &cfg).unwrap();
        assert_eq!(first, again);
    }

    #[test]
    fn threshold_must_be_in_unit_interval() {
        let f = field_with_blocks(10, 10, &[]);
        let cfg = DetectionConfig {
            threshold: 1.5,
            ..Default::default()
        };
        assert!(detect(&f, &cfg).is_err());
    }

    #[test]
    fn small_subset_cannot_be_fitted() {
        let s = EventSlice::new(vec![crate::event::Event::new(0.5, 1.0, 1.0, false)], 0.0, 1.0, 4, 4).unwrap();
        let obj = DetectedObject {
            pixels: vec![(1, 1)],
            bbox: BinRect {
                i0: 1,
                j0: 1,
                i1: 1,
                j1: 1,
            },
            centroid: (1.5, 1.5),
            events: vec![0],
            model: MotionModel::identity(),
        };
        let r = fit_object_model(&s, &obj, &MotionModel::identity(), &OptimizerConfig::default(), 50);
        assert!(matches!(r, Err(Error::InsufficientEvents { found: 1, required: 50 })));
    }

    #[test]
    fn removing_everything_is_empty_input() {
        let s = EventSlice::new(vec![crate::event::Event::new(0.5, 1.0, 1.0, false)], 0.0, 1.0, 4, 4).unwrap();
        let obj = DetectedObject {
            pixels: vec![(1, 1)],
            bbox: BinRect {
                i0: 1,
                j0: 1,
                i1: 1,
                j1: 1,
            },
            centroid: (1.5, 1.5),
            events: vec![0],
            model: MotionModel::identity(),
        };
        let r = refine_background(&s, &[obj], &MotionModel::identity(), &OptimizerConfig::default());
        assert!(matches!(r, Err(Error::EmptyInput(_))));
    }
}
