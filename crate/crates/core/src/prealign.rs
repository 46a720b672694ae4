//! Image pre-alignment by quadrant pixel balance.
//!
//! The image is downscaled and thresholded into a foreground mask, shifted so
//! the foreground centroid sits at the image center, then rotated in 1 degree
//! steps: clockwise while the upper-left plus lower-right quadrants hold more
//! foreground than the other diagonal pair, counterclockwise otherwise. The
//! loop stops at the first change of direction (that step included) or at the
//! iteration cap. The wedge at the bottom exposed by the rotation is cropped
//! away before counting.

use std::io::{self, BufRead, Write};

use crate::geometry::{rotate_about, Pixel, Point};

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("no pixel is darker than the brightness threshold")]
    EmptyForeground,
    #[error("malformed PGM: {0}")]
    MalformedPgm(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Option<Self> {
        (pixels.len() == width * height).then_some(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Geometric center, on a pixel center for odd sizes.
    pub fn center(&self) -> Point {
        Point::new(
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
        )
    }

    /// Box-filter downscale by an integer factor.
    pub fn downscale(&self, factor: usize) -> GrayImage {
        let factor = factor.max(1);
        let w = (self.width / factor).max(1);
        let h = (self.height / factor).max(1);
        let mut out = GrayImage::new(w, h, 255);
        for y in 0..h {
            for x in 0..w {
                let mut sum = 0u32;
                let mut n = 0u32;
                for yy in y * factor..((y + 1) * factor).min(self.height) {
                    for xx in x * factor..((x + 1) * factor).min(self.width) {
                        sum += self.get(xx, yy) as u32;
                        n += 1;
                    }
                }
                out.set(x, y, (sum / n.max(1)) as u8);
            }
        }
        out
    }

    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.pixels)
    }

    pub fn read_pgm<R: BufRead>(mut r: R) -> Result<Self, ImageError> {
        let bad = |m: &str| ImageError::MalformedPgm(m.to_string());
        let mut fields = Vec::new();
        let mut token = Vec::new();
        let mut byte = [0u8; 1];
        // header: magic, width, height, maxval; comments start with '#'
        while fields.len() < 4 {
            if r.read(&mut byte)? == 0 {
                return Err(bad("truncated header"));
            }
            match byte[0] {
                b'#' if token.is_empty() => {
                    let mut skip = Vec::new();
                    r.read_until(b'\n', &mut skip)?;
                }
                c if c.is_ascii_whitespace() => {
                    if !token.is_empty() {
                        fields.push(String::from_utf8_lossy(&token).into_owned());
                        token.clear();
                    }
                }
                c => token.push(c),
            }
        }
        if fields[0] != "P5" {
            return Err(bad("expected P5 magic"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("non-numeric header"));
        let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval != 255 {
            return Err(bad("only 8-bit (maxval 255) images are supported"));
        }
        let mut pixels = vec![0u8; width * height];
        r.read_exact(&mut pixels)
            .map_err(|_| bad("truncated pixel data"))?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }
}

/// Rotate about the geometric center by `degrees` (counterclockwise on
/// screen), nearest-neighbour resampling, uncovered pixels white.
pub fn apply_rotation(img: &GrayImage, degrees: f64) -> GrayImage {
    if degrees == 0.0 {
        return img.clone();
    }
    let c = img.center();
    let inv = (-degrees).to_radians();
    let mut out = GrayImage::new(img.width, img.height, 255);
    for y in 0..img.height {
        for x in 0..img.width {
            let src = rotate_about(Point::new(x as f64, y as f64), c, inv);
            let (sx, sy) = (src.x.round(), src.y.round());
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < img.width && (sy as usize) < img.height {
                out.set(x, y, img.get(sx as usize, sy as usize));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrealignParams {
    pub brightness_threshold: u8,
    pub downscale: usize,
    /// Maximum number of 1 degree steps.
    pub max_steps: u32,
}

impl Default for PrealignParams {
    fn default() -> Self {
        Self {
            brightness_threshold: 128,
            downscale: 4,
            max_steps: 45,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignmentReport {
    /// Aggregate rotation in degrees to apply to the original image.
    pub total_rotation: i32,
    pub iterations: u32,
    /// Shift applied to center the foreground, in downscaled pixels.
    pub centroid_shift: (i32, i32),
}

struct Mask {
    w: usize,
    h: usize,
    bits: Vec<bool>,
}

pub fn prealign(img: &GrayImage, params: &PrealignParams) -> Result<AlignmentReport, ImageError> {
    let small = img.downscale(params.downscale);
    let (w, h) = (small.width, small.height);
    let fg: Vec<bool> = small
        .pixels
        .iter()
        .map(|&v| v < params.brightness_threshold)
        .collect();
    let n_fg = fg.iter().filter(|&&b| b).count();
    if n_fg == 0 {
        return Err(ImageError::EmptyForeground);
    }
    let (mut sx, mut sy) = (0f64, 0f64);
    for (i, _) in fg.iter().enumerate().filter(|(_, &b)| b) {
        sx += (i % w) as f64;
        sy += (i / w) as f64;
    }
    let c = small.center();
    let shift = (
        (c.x - sx / n_fg as f64).round() as i32,
        (c.y - sy / n_fg as f64).round() as i32,
    );
    let mut centered = Mask {
        w,
        h,
        bits: vec![false; w * h],
    };
    for y in 0..h as i32 {
        for x in 0..w as i32 {
            let (ox, oy) = (x - shift.0, y - shift.1);
            if ox >= 0 && oy >= 0 && (ox as usize) < w && (oy as usize) < h {
                centered.bits[y as usize * w + x as usize] = fg[oy as usize * w + ox as usize];
            }
        }
    }

    let mut angle = 0i32;
    let mut last = 0i32;
    let mut iterations = 0u32;
    while iterations < params.max_steps {
        let step = if diagonal_excess(&centered, angle) > 0 {
            -1
        } else {
            1
        };
        angle += step;
        iterations += 1;
        if last != 0 && step != last {
            break;
        }
        last = step;
    }
    Ok(AlignmentReport {
        total_rotation: angle,
        iterations,
        centroid_shift: shift,
    })
}

/// Foreground in (upper-left + lower-right) minus (lower-left + upper-right)
/// after rotating the mask by `angle` degrees and cropping the bottom wedge.
fn diagonal_excess(mask: &Mask, angle: i32) -> i64 {
    let (w, h) = (mask.w, mask.h);
    let c = Point::new((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let rad = (angle as f64).to_radians();
    let wedge = (w as f64 / 2.0 * rad.sin().abs() + h as f64 / 2.0 * (1.0 - rad.cos())).ceil();
    let rows = (h as f64 - wedge).max(0.0) as usize;
    let inv = -rad;
    let mut excess = 0i64;
    for y in 0..rows {
        for x in 0..w {
            let src = rotate_about(Point::new(x as f64, y as f64), c, inv);
            let (sx, sy) = (src.x.round(), src.y.round());
            if sx < 0.0 || sy < 0.0 || sx as usize >= w || sy as usize >= h {
                continue;
            }
            if !mask.bits[sy as usize * w + sx as usize] {
                continue;
            }
            let left = (x as f64) < c.x;
            let upper = (y as f64) < c.y;
            let right = (x as f64) > c.x;
            let lower = (y as f64) > c.y;
            if (left && upper) || (right && lower) {
                excess += 1;
            } else if (left && lower) || (right && upper) {
                excess -= 1;
            }
        }
    }
    excess
}

fn convex_hull(points: &[Pixel]) -> Vec<Pixel> {
    let mut pts: Vec<Pixel> = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Pixel, a: Pixel, b: Pixel| {
        (a.0 - o.0) as i64 * (b.1 - o.1) as i64 - (a.1 - o.1) as i64 * (b.0 - o.0) as i64
    };
    let mut hull: Vec<Pixel> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Pixel>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Black convex-hull silhouette of a point set on a white `width` x `height`
/// canvas; stands in for a fingerprint image when only minutiae exist.
pub fn render_hull_mask(points: &[Pixel], width: usize, height: usize) -> GrayImage {
    let mut img = GrayImage::new(width, height, 255);
    let hull = convex_hull(points);
    if hull.is_empty() {
        return img;
    }
    let y_min = hull.iter().map(|p| p.1).min().unwrap_or(0).max(0);
    let y_max = hull
        .iter()
        .map(|p| p.1)
        .max()
        .unwrap_or(0)
        .min(height as i32 - 1);
    for y in y_min..=y_max {
        let yf = y as f64;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..hull.len() {
            let a = hull[i];
            let b = hull[(i + 1) % hull.len()];
            let (ay, by) = (a.1 as f64, b.1 as f64);
            if (yf < ay.min(by)) || (yf > ay.max(by)) {
                continue;
            }
            if ay == by {
                lo = lo.min(a.0.min(b.0) as f64);
                hi = hi.max(a.0.max(b.0) as f64);
            } else {
                let x = a.0 as f64 + (yf - ay) * (b.0 - a.0) as f64 / (by - ay);
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        if hull.len() == 1 {
            lo = hull[0].0 as f64;
            hi = lo;
        }
        let x0 = lo.ceil().max(0.0) as usize;
        let x1 = hi.floor().min(width as f64 - 1.0);
        if x1 < 0.0 {
            continue;
        }
        for x in x0..=x1 as usize {
            img.set(x, y as usize, 0);
        }
    }
    img
}
