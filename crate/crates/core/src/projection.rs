//! Projection of a warped slice onto a discretized image plane.
//!
//! Two images share one grid: the event-count image (events per bin) and the time
//! image (mean normalized timestamp per bin). The density of the count image and the
//! Sobel gradients of the time image are the two error signals the optimizer uses.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::event::EventSlice;
use crate::model::{MotionModel, Warp};
use crate::scalar::Scalar;

/// Discretization of the sensor plane into square bins of `bin_size` pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    bin_size: T,
}

impl<T: Scalar> Grid<T> {
    /// `ceil(w / d) x ceil(h / d)` bins covering the sensor.
    pub fn for_sensor(sensor_width: u32, sensor_height: u32, bin_size: T) -> Result<Self> {
        if !(bin_size > T::zero()) || !bin_size.is_finite() {
            return Err(Error::invalid(format!("bin size must be > 0, got {bin_size}")));
        }
        let w = (T::from_count(sensor_width as usize) / bin_size).ceil();
        let h = (T::from_count(sensor_height as usize) / bin_size).ceil();
        let width = w.to_usize().ok_or_else(|| Error::invalid("grid too large"))?;
        let height = h.to_usize().ok_or_else(|| Error::invalid("grid too large"))?;
        Ok(Grid {
            width,
            height,
            bin_size,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bin_size(&self) -> T {
        self.bin_size
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    /// Bin holding the point, or `None` when it falls off the grid.
    #[inline(always)]
    pub fn locate(&self, x: T, y: T) -> Option<usize> {
        let fi = (x / self.bin_size).floor();
        let fj = (y / self.bin_size).floor();
        // NaN fails both comparisons and is dropped with the out-of-range points.
        if fi >= T::zero() && fj >= T::zero() {
            let i = fi.to_usize()?;
            let j = fj.to_usize()?;
            if i < self.width && j < self.height {
                return Some(j * self.width + i);
            }
        }
        None
    }

    /// Center of bin `(i, j)` in pixels.
    pub fn bin_center(&self, i: usize, j: usize) -> (T, T) {
        let half = T::lit(0.5);
        (
            (T::from_count(i) + half) * self.bin_size,
            (T::from_count(j) + half) * self.bin_size,
        )
    }
}

/// Number of warped events per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct EventCountImage<T> {
    grid: Grid<T>,
    counts: Vec<u32>,
    occupied: usize,
}

impl<T: Scalar> EventCountImage<T> {
    pub fn empty(grid: Grid<T>) -> Self {
        EventCountImage {
            counts: vec![0; grid.len()],
            grid,
            occupied: 0,
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn count(&self, i: usize, j: usize) -> u32 {
        self.counts[self.grid.index(i, j)]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Sum of all bin counts.
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Number of bins holding at least one event.
    pub fn occupied_bins(&self) -> usize {
        self.occupied
    }

    pub fn max_count(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }
}

/// Mean normalized timestamp per bin; defined only on occupied bins.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeImage<T> {
    grid: Grid<T>,
    counts: Vec<u32>,
    mean_ts: Vec<T>,
    occupied: usize,
}

impl<T: Scalar> TimeImage<T> {
    pub fn empty(grid: Grid<T>) -> Self {
        TimeImage {
            counts: vec![0; grid.len()],
            mean_ts: vec![T::zero(); grid.len()],
            grid,
            occupied: 0,
        }
    }

    /// Builds a time image directly from per-bin means; `None` marks an empty bin.
    ///
    /// Occupied bins get a nominal count of one.
    pub fn from_means(grid: Grid<T>, means: &[Option<T>]) -> Result<Self> {
        if means.len() != grid.len() {
            return Err(Error::invalid(format!(
                "expected {} bins, got {}",
                grid.len(),
                means.len()
            )));
        }
        let mut img = Self::empty(grid);
        for (k, m) in means.iter().enumerate() {
            if let Some(v) = m {
                img.counts[k] = 1;
                img.mean_ts[k] = *v;
                img.occupied += 1;
            }
        }
        Ok(img)
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn count(&self, i: usize, j: usize) -> u32 {
        self.counts[self.grid.index(i, j)]
    }

    /// Mean timestamp of bin `(i, j)`, `None` when empty.
    pub fn mean(&self, i: usize, j: usize) -> Option<T> {
        let k = self.grid.index(i, j);
        (self.counts[k] > 0).then(|| self.mean_ts[k])
    }

    /// Raw means, zero on empty bins.
    pub fn means(&self) -> &[T] {
        &self.mean_ts
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn is_occupied_index(&self, k: usize) -> bool {
        self.counts[k] > 0
    }

    pub fn occupied_bins(&self) -> usize {
        self.occupied
    }

    /// `(i, j, mean)` for every occupied bin in row-major order.
    pub fn iter_occupied(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        let w = self.grid.width;
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(move |(k, _)| (k % w, k / w, self.mean_ts[k]))
    }
}

/// Both images of one warp-and-project pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T> {
    pub count: EventCountImage<T>,
    pub time: TimeImage<T>,
    /// Warped events that fell outside the grid.
    pub clipped: usize,
}

/// Per-bin event counts and timestamp sums. Partial accumulators merge by addition;
/// means are only formed by [`Accumulator::finish`].
#[derive(Debug, Clone)]
struct Accumulator<T> {
    counts: Vec<u32>,
    ts_sum: Vec<T>,
    clipped: usize,
}

impl<T: Scalar> Accumulator<T> {
    fn new(len: usize) -> Self {
        Accumulator {
            counts: vec![0; len],
            ts_sum: vec![T::zero(); len],
            clipped: 0,
        }
    }

    fn add_events(&mut self, slice: &EventSlice<T>, range: std::ops::Range<usize>, warp: &Warp<T>, grid: &Grid<T>) {
        for e in &slice.events()[range] {
            let s = slice.normalized_time(e.t);
            let (x, y) = warp.apply(e.x, e.y, s);
            match grid.locate(x, y) {
                Some(k) => {
                    self.counts[k] += 1;
                    self.ts_sum[k] = self.ts_sum[k] + s;
                }
                None => self.clipped += 1,
            }
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += *b;
        }
        for (a, b) in self.ts_sum.iter_mut().zip(&other.ts_sum) {
            *a = *a + *b;
        }
        self.clipped += other.clipped;
        self
    }

    fn finish(self, grid: Grid<T>) -> Projection<T> {
        let mut occupied = 0;
        let mut mean_ts = self.ts_sum;
        for (m, &c) in mean_ts.iter_mut().zip(&self.counts) {
            if c > 0 {
                occupied += 1;
                *m = *m / T::from_count(c as usize);
            }
        }
        Projection {
            count: EventCountImage {
                grid,
                counts: self.counts.clone(),
                occupied,
            },
            time: TimeImage {
                grid,
                counts: self.counts,
                mean_ts,
                occupied,
            },
            clipped: self.clipped,
        }
    }
}

/// Warps the slice by `model` about the image center and bins the result.
pub fn project<T: Scalar>(slice: &EventSlice<T>, model: &MotionModel<T>, bin_size: T) -> Result<Projection<T>> {
    project_about(slice, model, bin_size, slice.center())
}

/// As [`project`], with an explicit warp center.
pub fn project_about<T: Scalar>(
    slice: &EventSlice<T>,
    model: &MotionModel<T>,
    bin_size: T,
    center: (T, T),
) -> Result<Projection<T>> {
    if slice.is_empty() {
        return Err(Error::EmptyInput("cannot project an empty slice"));
    }
    let grid = Grid::for_sensor(slice.sensor_width(), slice.sensor_height(), bin_size)?;
    let warp = Warp::new(*model, center);
    let mut acc = Accumulator::new(grid.len());
    acc.add_events(slice, 0..slice.len(), &warp, &grid);
    Ok(acc.finish(grid))
}

/// Data-parallel projection: events are split into fixed-size chunks, each chunk is
/// accumulated independently and the partial histograms are merged in chunk order.
///
/// Counts are identical to [`project_about`]; means agree to rounding of the
/// timestamp sums. The result does not depend on the thread count.
pub fn project_partitioned<T: Scalar>(
    slice: &EventSlice<T>,
    model: &MotionModel<T>,
    bin_size: T,
    center: (T, T),
    chunk_len: usize,
) -> Result<Projection<T>> {
    if slice.is_empty() {
        return Err(Error::EmptyInput("cannot project an empty slice"));
    }
    if chunk_len == 0 {
        return Err(Error::invalid("chunk length must be positive"));
    }
    let grid = Grid::for_sensor(slice.sensor_width(), slice.sensor_height(), bin_size)?;
    let warp = Warp::new(*model, center);
    let n = slice.len();
    let ranges: Vec<_> = (0..n).step_by(chunk_len).map(|s| s..(s + chunk_len).min(n)).collect();
    let partials: Vec<Accumulator<T>> = ranges
        .into_par_iter()
        .map(|r| {
            let mut acc = Accumulator::new(grid.len());
            acc.add_events(slice, r, &warp, &grid);
            acc
        })
        .collect();
    let acc = partials
        .into_iter()
        .reduce(Accumulator::merge)
        .unwrap_or_else(|| Accumulator::new(grid.len()));
    Ok(acc.finish(grid))
}

/// Events per occupied bin, `sum(counts) / #occupied`.
pub fn event_density<T: Scalar>(image: &EventCountImage<T>) -> Result<T> {
    if image.occupied == 0 {
        return Err(Error::EmptyInput("event-count image has no occupied bins"));
    }
    Ok(T::from_count(image.total() as usize) / T::from_count(image.occupied))
}

/// Repeated density evaluation of one slice under different models.
///
/// Keeps a scratch histogram and the list of touched bins so each evaluation costs
/// O(events) instead of O(bins).
#[derive(Debug)]
pub struct DensityProbe<'a, T> {
    slice: &'a EventSlice<T>,
    times: Vec<T>,
    grid: Grid<T>,
    center: (T, T),
    scratch: Vec<u32>,
    touched: Vec<usize>,
    evaluations: usize,
}

impl<'a, T: Scalar> DensityProbe<'a, T> {
    pub fn new(slice: &'a EventSlice<T>, bin_size: T, center: (T, T)) -> Result<Self> {
        if slice.is_empty() {
            return Err(Error::EmptyInput("cannot evaluate density of an empty slice"));
        }
        let grid = Grid::for_sensor(slice.sensor_width(), slice.sensor_height(), bin_size)?;
        let times = slice.events().iter().map(|e| slice.normalized_time(e.t)).collect();
        Ok(DensityProbe {
            slice,
            times,
            scratch: vec![0; grid.len()],
            touched: Vec::with_capacity(slice.len()),
            grid,
            center,
            evaluations: 0,
        })
    }

    /// Density of the slice warped by `model`; `None` when every event leaves the grid.
    pub fn density(&mut self, model: &MotionModel<T>) -> Option<T> {
        self.evaluations += 1;
        let warp = Warp::new(*model, self.center);
        let mut inside = 0usize;
        for (e, &s) in self.slice.events().iter().zip(&self.times) {
            let (x, y) = warp.apply(e.x, e.y, s);
            if let Some(k) = self.grid.locate(x, y) {
                if self.scratch[k] == 0 {
                    self.touched.push(k);
                }
                self.scratch[k] += 1;
                inside += 1;
            }
        }
        let occupied = self.touched.len();
        for &k in &self.touched {
            self.scratch[k] = 0;
        }
        self.touched.clear();
        (occupied > 0).then(|| T::from_count(inside) / T::from_count(occupied))
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }
}

/// How the Sobel operator treats bins whose 3x3 neighbourhood is not fully occupied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StencilRule {
    /// Gradient is zero unless all nine bins of the stencil are occupied.
    #[default]
    Complete,
    /// Empty neighbours take the center bin's value, so they contribute no difference.
    /// The center bin itself must be occupied.
    HoldCenter,
}

/// Which moment of the gradient field drives which model parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientAssignment {
    /// Dot product (divergence) drives expansion, cross product (curl) drives rotation.
    #[default]
    Physical,
    /// Swapped: cross product to expansion, dot product to rotation.
    Literal,
}

/// Per-bin Sobel responses of a time image.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField<T> {
    width: usize,
    height: usize,
    gx: Vec<T>,
    gy: Vec<T>,
}

impl<T: Scalar> GradientField<T> {
    pub fn get(&self, i: usize, j: usize) -> (T, T) {
        let k = j * self.width + i;
        (self.gx[k], self.gy[k])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

/// 3x3 unnormalized Sobel over the mean timestamps.
pub fn time_image_gradients<T: Scalar>(image: &TimeImage<T>, rule: StencilRule) -> GradientField<T> {
    let w = image.width();
    let h = image.height();
    let mut gx = vec![T::zero(); w * h];
    let mut gy = vec![T::zero(); w * h];
    let two = T::lit(2.0);
    if w >= 3 && h >= 3 {
        for j in 1..h - 1 {
            for i in 1..w - 1 {
                let k = j * w + i;
                if image.counts[k] == 0 {
                    continue;
                }
                let center = image.mean_ts[k];
                let mut complete = true;
                // Differences against the center; Sobel weights sum to zero so this is
                // the plain Sobel response when the stencil is complete.
                let mut d = [[T::zero(); 3]; 3];
                for (dj, row) in d.iter_mut().enumerate() {
                    for (di, cell) in row.iter_mut().enumerate() {
                        let kk = (j + dj - 1) * w + (i + di - 1);
                        if image.counts[kk] > 0 {
                            *cell = image.mean_ts[kk] - center;
                        } else {
                            complete = false;
                        }
                    }
                }
                if !complete && rule == StencilRule::Complete {
                    continue;
                }
                gx[k] = (d[0][2] - d[0][0]) + two * (d[1][2] - d[1][0]) + (d[2][2] - d[2][0]);
                gy[k] = (d[2][0] - d[0][0]) + two * (d[2][1] - d[0][1]) + (d[2][2] - d[0][2]);
            }
        }
    }
    GradientField {
        width: w,
        height: h,
        gx,
        gy,
    }
}

/// Mean gradient moments of a time image, one per model parameter.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModelGradient<T> {
    pub d_x: T,
    pub d_y: T,
    pub d_z: T,
    pub d_theta: T,
}

impl<T: Scalar> ModelGradient<T> {
    pub fn to_array(self) -> [T; 4] {
        [self.d_x, self.d_y, self.d_z, self.d_theta]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Options for [`model_gradient_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GradientOptions {
    pub stencil: StencilRule,
    pub assignment: GradientAssignment,
}

/// Model gradient with default options.
pub fn model_gradient<T: Scalar>(image: &TimeImage<T>, center: (T, T)) -> ModelGradient<T> {
    model_gradient_with(image, center, &GradientOptions::default())
}

/// Sums of the time-image gradient and of its dot and cross products with the bin
/// position relative to `center` (pixels), each divided by the number of occupied bins.
///
/// Positions are measured in bins from the center. The cross product is
/// `G x q = G_x q_y - G_y q_x`.
pub fn model_gradient_with<T: Scalar>(
    image: &TimeImage<T>,
    center: (T, T),
    options: &GradientOptions,
) -> ModelGradient<T> {
    let field = time_image_gradients(image, options.stencil);
    let n = image.occupied_bins();
    if n == 0 {
        return ModelGradient::default();
    }
    let d = image.grid().bin_size();
    let half = T::lit(0.5);
    let (cx, cy) = (center.0 / d, center.1 / d);
    let (mut sx, mut sy, mut dot, mut cross) = (T::zero(), T::zero(), T::zero(), T::zero());
    for (i, j, _) in image.iter_occupied() {
        let (gx, gy) = field.get(i, j);
        if gx == T::zero() && gy == T::zero() {
            continue;
        }
        let qx = T::from_count(i) + half - cx;
        let qy = T::from_count(j) + half - cy;
        sx = sx + gx;
        sy = sy + gy;
        dot = dot + gx * qx + gy * qy;
        cross = cross + gx * qy - gy * qx;
    }
    let n = T::from_count(n);
    let (d_z, d_theta) = match options.assignment {
        GradientAssignment::Physical => (dot / n, cross / n),
        GradientAssignment::Literal => (cross / n, dot / n),
    };
    ModelGradient {
        d_x: sx / n,
        d_y: sy / n,
        d_z,
        d_theta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Event;

    fn slice(events: &[(f64, f64, f64)], w: u32, h: u32) -> EventSlice<f64> {
        let ev = events.iter().map(|&(t, x, y)| Event::new(t, x, y, false)).collect();
        EventSlice::new(ev, 0.0, 1.0, w, h).unwrap()
    }

    #[test]
    fn three_events_in_one_bin() {
        let s = slice(&[(0.1, 2.0, 2.0), (0.2, 2.0, 2.0), (0.3, 2.0, 2.0)], 5, 5);
        let p = project(&s, &MotionModel::identity(), 1.0).unwrap();
        assert_eq!(p.count.count(2, 2), 3);
        assert!((p.time.mean(2, 2).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(p.time.mean(1, 1), None);
        assert_eq!(event_density(&p.count).unwrap(), 3.0);
    }

    #[test]
    fn four_events_two_bins() {
        let s = slice(
            &[(0.1, 0.5, 0.5), (0.2, 0.5, 0.5), (0.3, 3.5, 1.5), (0.4, 3.5, 1.5)],
            5,
            5,
        );
        let p = project(&s, &MotionModel::identity(), 1.0).unwrap();
        assert_eq!(p.count.occupied_bins(), 2);
        assert_eq!(p.count.total(), 4);
        assert_eq!(event_density(&p.count).unwrap(), 2.0);
    }

    #[test]
    fn out_of_grid_events_are_clipped() {
        let s = slice(&[(0.1, -0.5, 1.0), (0.2, 1.0, 1.0), (0.3, 5.0, 1.0)], 5, 5);
        let p = project(&s, &MotionModel::identity(), 1.0).unwrap();
        assert_eq!(p.clipped, 2);
        assert_eq!(p.count.total(), 1);
    }

    #[test]
    fn grid_size_rounds_up() {
        let g = Grid::<f64>::for_sensor(240, 180, 0.3).unwrap();
        assert_eq!((g.width(), g.height()), (800, 600));
        let g = Grid::<f64>::for_sensor(10, 10, 3.0).unwrap();
        assert_eq!((g.width(), g.height()), (4, 4));
        assert!(Grid::<f64>::for_sensor(10, 10, 0.0).is_err());
    }

    #[test]
    fn empty_inputs_are_errors() {
        let s = slice(&[], 5, 5);
        assert!(matches!(
            project(&s, &MotionModel::identity(), 1.0),
            Err(Error::EmptyInput(_))
        ));
        let g = Grid::for_sensor(5, 5, 1.0).unwrap();
        assert!(event_density(&EventCountImage::<f64>::empty(g)).is_err());
    }

    #[test]
    fn probe_matches_full_projection() {
        let s = slice(
            &[
                (0.0, 1.0, 1.0),
                (0.25, 1.2, 1.1),
                (0.5, 3.3, 2.2),
                (0.75, 3.1, 2.9),
                (1.0, 4.9, 0.2),
            ],
            5,
            5,
        );
        let m = MotionModel::new(0.7, -0.2, 0.01, 0.05);
        let mut probe = DensityProbe::new(&s, 0.5, s.center()).unwrap();
        let p = project(&s, &m, 0.5).unwrap();
        assert_eq!(probe.density(&m).unwrap(), event_density(&p.count).unwrap());
        // Scratch state must not leak between evaluations.
        assert_eq!(probe.density(&m).unwrap(), event_density(&p.count).unwrap());
    }

    fn full_ramp(w: usize, h: usize, k: f64) -> TimeImage<f64> {
        let g = Grid::for_sensor(w as u32, h as u32, 1.0).unwrap();
        let means: Vec<_> = (0..w * h).map(|idx| Some((idx % w) as f64 * k)).collect();
        TimeImage::from_means(g, &means).unwrap()
    }

    #[test]
    fn sobel_on_ramp_is_eight_k() {
        let k = 0.01;
        let t = full_ramp(6, 5, k);
        let f = time_image_gradients(&t, StencilRule::Complete);
        for j in 1..4 {
            for i in 1..5 {
                let (gx, gy) = f.get(i, j);
                assert!((gx - 8.0 * k).abs() < 1e-12);
                assert!(gy.abs() < 1e-12);
            }
        }
        // Border bins have an incomplete stencil.
        assert_eq!(f.get(0, 2), (0.0, 0.0));
    }

    #[test]
    fn sobel_constant_and_isolated() {
        let g = Grid::for_sensor(5, 5, 1.0).unwrap();
        let t = TimeImage::from_means(g, &vec![Some(0.4); 25]).unwrap();
        let f = time_image_gradients(&t, StencilRule::Complete);
        assert!((0..5).all(|j| (0..5).all(|i| f.get(i, j) == (0.0, 0.0))));

        let mut means = vec![None; 25];
        means[12] = Some(0.9);
        let t = TimeImage::from_means(g, &means).unwrap();
        for rule in [StencilRule::Complete, StencilRule::HoldCenter] {
            assert_eq!(time_image_gradients(&t, rule).get(2, 2), (0.0, 0.0));
        }
    }

    #[test]
    fn hold_center_ignores_missing_neighbours() {
        let g = Grid::for_sensor(5, 5, 1.0).unwrap();
        let mut means = vec![None; 25];
        // A horizontal streak 0.2, 0.5, 0.8 along row 2.
        means[11] = Some(0.2);
        means[12] = Some(0.5);
        means[13] = Some(0.8);
        let t = TimeImage::from_means(g, &means).unwrap();
        assert_eq!(time_image_gradients(&t, StencilRule::Complete).get(2, 2), (0.0, 0.0));
        let (gx, gy): (f64, f64) = time_image_gradients(&t, StencilRule::HoldCenter).get(2, 2);
        assert!((gx - 2.0 * 0.6).abs() < 1e-12);
        assert_eq!(gy, 0.0);
    }

    #[test]
    fn constant_image_has_zero_model_gradient() {
        let g = Grid::for_sensor(7, 7, 1.0).unwrap();
        let t = TimeImage::from_means(g, &vec![Some(0.5); 49]).unwrap();
        assert_eq!(model_gradient(&t, (3.5, 3.5)), ModelGradient::default());
        assert_eq!(
            model_gradient(&TimeImage::empty(g), (3.5, 3.5)),
            ModelGradient::default()
        );
    }

    #[test]
    fn ramp_moments() {
        // Ramp along i on a 7x7 grid centered at (3.5, 3.5): interior bins 1..=5 each
        // carry G = (8k, 0). Interior q_x are -2..=2 (sum 0), q_y likewise.
        let k = 0.1;
        let t = full_ramp(7, 7, k);
        let mg = model_gradient(&t, (3.5, 3.5));
        assert!((mg.d_x - 25.0 * 8.0 * k / 49.0).abs() < 1e-12);
        assert!(mg.d_y.abs() < 1e-12);
        assert!(mg.d_z.abs() < 1e-12);
        assert!(mg.d_theta.abs() < 1e-12);
        let lit = model_gradient_with(
            &t,
            (3.5, 3.5),
            &GradientOptions {
                assignment: GradientAssignment::Literal,
                ..Default::default()
            },
        );
        assert_eq!(lit.d_x, mg.d_x);
    }

    #[test]
    fn radial_ramp_drives_expansion_only() {
        // T grows with x-distance from the center on the right half and falls on the
        // left half: divergence-like, no net translation or curl.
        let w = 9;
        let g = Grid::for_sensor(w as u32, w as u32, 1.0).unwrap();
        let means: Vec<_> = (0..w * w)
            .map(|idx| {
                let qx = (idx % w) as f64 + 0.5 - 4.5;
                let qy = (idx / w) as f64 + 0.5 - 4.5;
                Some(0.5 + 0.02 * (qx * qx + qy * qy))
            })
            .collect();
        let t = TimeImage::from_means(g, &means).unwrap();
        let mg = model_gradient(&t, (4.5, 4.5));
        assert!(mg.d_z > 0.0);
        assert!(mg.d_x.abs() < 1e-12 && mg.d_y.abs() < 1e-12 && mg.d_theta.abs() < 1e-12);
    }
}
