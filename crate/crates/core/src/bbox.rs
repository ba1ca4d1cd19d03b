use crate::scalar::Scalar;

/// Axis-aligned rectangle `(x, y, w, h)`; `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundingBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Self {
        BoundingBox { x, y, w, h }
    }

    /// Tight box around a set of points. `None` for an empty set.
    pub fn hull(points: impl IntoIterator<Item = (T, T)>) -> Option<Self> {
        let mut it = points.into_iter();
        let (x0, y0) = it.next()?;
        let (mut lx, mut ly, mut hx, mut hy) = (x0, y0, x0, y0);
        for (x, y) in it {
            lx = lx.min(x);
            ly = ly.min(y);
            hx = hx.max(x);
            hy = hy.max(y);
        }
        Some(BoundingBox::new(lx, ly, hx - lx, hy - ly))
    }

    pub fn right(&self) -> T {
        self.x + self.w
    }

    pub fn bottom(&self) -> T {
        self.y + self.h
    }

    pub fn area(&self) -> T {
        self.w.max(T::zero()) * self.h.max(T::zero())
    }

    pub fn center(&self) -> (T, T) {
        let half = T::lit(0.5);
        (self.x + half * self.w, self.y + half * self.h)
    }

    pub fn intersection(&self, other: &Self) -> Option<Self> {
        let x = self.x.max(other.x);
        let y = self.y.max(other.y);
        let r = self.right().min(other.right());
        let b = self.bottom().min(other.bottom());
        (r > x && b > y).then(|| BoundingBox::new(x, y, r - x, b - y))
    }

    pub fn intersection_area(&self, other: &Self) -> T {
        self.intersection(other).map_or(T::zero(), |b| b.area())
    }

    /// Fraction of `self` covered by `other`.
    pub fn coverage_by(&self, other: &Self) -> T {
        let a = self.area();
        if a <= T::zero() {
            return T::zero();
        }
        self.intersection_area(other) / a
    }

    pub fn iou(&self, other: &Self) -> T {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= T::zero() {
            T::zero()
        } else {
            inter / union
        }
    }

    /// Clips to `[0, width] x [0, height]`. `None` when nothing is left.
    pub fn clip(&self, width: T, height: T) -> Option<Self> {
        self.intersection(&BoundingBox::new(T::zero(), T::zero(), width, height))
    }

    pub fn translate(&self, dx: T, dy: T) -> Self {
        BoundingBox::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    pub fn scale(&self, s: T) -> Self {
        BoundingBox::new(self.x * s, self.y * s, self.w * s, self.h * s)
    }

    pub fn corners(&self) -> [(T, T); 4] {
        [
            (self.x, self.y),
            (self.right(), self.y),
            (self.x, self.bottom()),
            (self.right(), self.bottom()),
        ]
    }
}
