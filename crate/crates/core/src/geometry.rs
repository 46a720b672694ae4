//! Planar primitives: the minutiae ellipse, lattice disk counts and rotations.
//!
//! Coordinates follow image conventions (`a` grows to the right, `b` grows
//! downwards). Angles are in degrees and positive angles turn counterclockwise
//! as seen on screen, so rotating `(c + 10, c)` by 90 degrees about `(c, c)`
//! lands on `(c, c - 10)`.

use rand::Rng;

/// Integer pixel location.
pub type Pixel = (i32, i32);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_pixel((a, b): Pixel) -> Self {
        Self::new(a as f64, b as f64)
    }

    pub fn round(self) -> Pixel {
        (self.x.round() as i32, self.y.round() as i32)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

/// Euclidean distance between two pixel locations.
pub fn dist(p: Pixel, q: Pixel) -> f64 {
    let dx = (p.0 - q.0) as f64;
    let dy = (p.1 - q.1) as f64;
    dx.hypot(dy)
}

/// Squared distance, exact in integers.
pub fn dist2(p: Pixel, q: Pixel) -> i64 {
    let dx = (p.0 - q.0) as i64;
    let dy = (p.1 - q.1) as i64;
    dx * dx + dy * dy
}

/// Screen-space direction of the vector `(dx, dy)` in radians.
#[inline]
pub fn direction(dx: f64, dy: f64) -> f64 {
    (-dy).atan2(dx)
}

/// Rotate `p` about `center` by `radians` (counterclockwise on screen).
#[inline]
pub fn rotate_about(p: Point, center: Point, radians: f64) -> Point {
    let (s, c) = radians.sin_cos();
    let dx = p.x - center.x;
    let dy = p.y - center.y;
    Point::new(center.x + dx * c + dy * s, center.y - dx * s + dy * c)
}

/// Image frame the minutiae coordinates live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
}

impl Frame {
    pub fn center(&self) -> Point {
        Point::new(self.width as f64 / 2.0, self.height as f64 / 2.0)
    }
}

impl Default for Frame {
    /// 512 x 512 pixels at 500 DPI.
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
        }
    }
}

/// Axis-aligned ellipse restricting where minutiae and chaff may lie.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EllipseRegion {
    pub cx: i32,
    pub cy: i32,
    /// Horizontal semi-axis.
    pub semi_x: i32,
    /// Vertical semi-axis.
    pub semi_y: i32,
    area_px: u64,
}

impl EllipseRegion {
    pub fn new(cx: i32, cy: i32, semi_x: i32, semi_y: i32) -> Self {
        assert!(semi_x > 0 && semi_y > 0, "semi-axes must be positive");
        let mut e = Self {
            cx,
            cy,
            semi_x,
            semi_y,
            area_px: 0,
        };
        e.area_px = e.count_interior();
        e
    }

    /// Number of integer points inside (boundary included).
    pub fn area_px(&self) -> u64 {
        self.area_px
    }

    pub fn center(&self) -> Point {
        Point::new(self.cx as f64, self.cy as f64)
    }

    #[inline]
    pub fn contains(&self, (a, b): Pixel) -> bool {
        let dx = (a - self.cx) as i64;
        let dy = (b - self.cy) as i64;
        let ax = self.semi_x as i64;
        let by = self.semi_y as i64;
        dx * dx * by * by + dy * dy * ax * ax <= ax * ax * by * by
    }

    /// Uniform integer point inside the ellipse.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Pixel {
        loop {
            let a = rng.random_range(self.cx - self.semi_x..=self.cx + self.semi_x);
            let b = rng.random_range(self.cy - self.semi_y..=self.cy + self.semi_y);
            if self.contains((a, b)) {
                return (a, b);
            }
        }
    }

    fn count_interior(&self) -> u64 {
        let ax = self.semi_x as i64;
        let by = self.semi_y as i64;
        (-ax..=ax)
            .map(|dx| {
                // largest dy with dx^2 B^2 + dy^2 A^2 <= A^2 B^2
                let rhs = ax * ax * by * by - dx * dx * by * by;
                let mut dy = ((rhs as f64) / (ax * ax) as f64).sqrt() as i64;
                while dy * dy * ax * ax > rhs {
                    dy -= 1;
                }
                while (dy + 1) * (dy + 1) * ax * ax <= rhs {
                    dy += 1;
                }
                (2 * dy + 1) as u64
            })
            .sum()
    }
}

impl Default for EllipseRegion {
    /// Centered in the default frame with semi-axes 133 x 208 px, holding
    /// 86,855 integer points.
    fn default() -> Self {
        Self::new(256, 256, 133, 208)
    }
}

/// Closed form `1 + 4 * sum_{i=1}^{ceil(delta-1)} ceil(sqrt(delta^2 - i^2))`.
pub fn v_delta_formula(delta: f64) -> u64 {
    assert!(delta >= 1.0, "delta must be at least 1");
    let upper = (delta - 1.0).ceil() as i64;
    let sum: u64 = (1..=upper)
        .map(|i| (delta * delta - (i * i) as f64).sqrt().ceil() as u64)
        .sum();
    1 + 4 * sum
}

/// Exact count of integer points with `a^2 + b^2 < delta^2`.
pub fn v_delta_bruteforce(delta: f64) -> u64 {
    assert!(delta > 0.0, "delta must be positive");
    let n = delta.ceil() as i64;
    let d2 = delta * delta;
    let mut count = 0;
    for a in -n..=n {
        for b in -n..=n {
            if ((a * a + b * b) as f64) < d2 {
                count += 1;
            }
        }
    }
    count
}

/// The lattice count used everywhere downstream.
pub fn v_delta(delta: f64) -> u64 {
    v_delta_bruteforce(delta)
}
