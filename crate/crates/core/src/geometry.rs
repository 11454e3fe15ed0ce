//! Axis-aligned boxes, binary masks, and the overlap measures built on them.
//!
//! Coordinates follow the image convention: `x` grows right, `y` grows down,
//! and boxes are stored as `(x, y, w, h)` like COCO annotations. Boxes may
//! have fractional coordinates. Whenever a mask takes part in a measurement,
//! the box is rasterized onto the mask grid by pixel-center sampling: pixel
//! `(px, py)` belongs to the box iff its center `(px + 0.5, py + 0.5)` lies in
//! `[x, x + w) × [y, y + h)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        BBox { x, y, w, h }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    /// Builds a box from its left/top/right/bottom edges.
    pub fn from_edges(left: f64, top: f64, right: f64, bottom: f64) -> Self {
        BBox::new(left, top, right - left, bottom - top)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Positive finite extent in both dimensions.
    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) && self.w > 0.0 && self.h > 0.0
    }

    /// Closed-interval point test.
    pub fn contains_point(&self, (px, py): (f64, f64)) -> bool {
        px >= self.x && px <= self.right() && py >= self.y && py <= self.bottom()
    }

    /// Signed overlap extents along x and y (negative when separated).
    fn overlap_extents(&self, other: &BBox) -> (f64, f64) {
        let ix = self.right().min(other.right()) - self.x.max(other.x);
        let iy = self.bottom().min(other.bottom()) - self.y.max(other.y);
        (ix, iy)
    }

    /// The intersection rectangle, if it has positive area.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let (ix, iy) = self.overlap_extents(other);
        (ix > 0.0 && iy > 0.0).then(|| BBox::new(self.x.max(other.x), self.y.max(other.y), ix, iy))
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        self.intersection(other).map_or(0.0, |b| b.area())
    }

    /// Clips to `[0, width] × [0, height]`; `None` when nothing remains.
    pub fn clip(&self, width: f64, height: f64) -> Option<BBox> {
        if self.x >= 0.0 && self.y >= 0.0 && self.right() <= width && self.bottom() <= height {
            return Some(*self);
        }
        let left = self.x.max(0.0);
        let top = self.y.max(0.0);
        let right = self.right().min(width);
        let bottom = self.bottom().min(height);
        if !(right > left && bottom > top) {
            return None;
        }
        // keep the exact extent along an axis that needs no clipping
        let (x, w) = if self.x >= 0.0 && self.right() <= width {
            (self.x, self.w)
        } else {
            (left, right - left)
        };
        let (y, h) = if self.y >= 0.0 && self.bottom() <= height {
            (self.y, self.h)
        } else {
            (top, bottom - top)
        };
        Some(BBox::new(x, y, w, h))
    }

    /// Scales width and height by `factor` about the box center.
    pub fn scaled_about_center(&self, factor: f64) -> BBox {
        let (cx, cy) = self.center();
        let w = self.w * factor;
        let h = self.h * factor;
        BBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    fn pixel_span(&self, width: usize, height: usize) -> PixelSpan {
        let clamp = |v: f64, hi: usize| -> usize {
            if v <= 0.0 {
                0
            } else {
                (v as usize).min(hi)
            }
        };
        PixelSpan {
            x0: clamp((self.x - 0.5).ceil(), width),
            x1: clamp((self.right() - 0.5).ceil(), width),
            y0: clamp((self.y - 0.5).ceil(), height),
            y1: clamp((self.bottom() - 0.5).ceil(), height),
        }
    }
}

/// Half-open pixel index ranges covered by a rasterized box.
#[derive(Debug, Clone, Copy)]
struct PixelSpan {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

impl PixelSpan {
    fn contains(&self, px: usize, py: usize) -> bool {
        px >= self.x0 && px < self.x1 && py >= self.y0 && py < self.y1
    }

    fn count(&self) -> usize {
        self.x1.saturating_sub(self.x0) * self.y1.saturating_sub(self.y0)
    }
}

/// Row-major binary raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Dimension(format!(
                "mask of {width}x{height} needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Mask { width, height, bits })
    }

    /// Mask with every pixel whose center lies inside `bbox` set.
    pub fn from_bbox(width: usize, height: usize, bbox: &BBox) -> Self {
        let mut mask = Mask::new(width, height);
        let span = bbox.pixel_span(width, height);
        for y in span.y0..span.y1 {
            for x in span.x0..span.x1 {
                mask.set(x, y, true);
            }
        }
        mask
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    /// Number of set pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    /// Mean of set pixel centers.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        centroid_of(self.pixels())
    }

    /// Tight bounding box of the set pixels.
    pub fn bounding_box(&self) -> Option<BBox> {
        let mut it = self.pixels();
        let (x, y) = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (x, y, x, y);
        for (x, y) in it {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        Some(BBox::from_edges(x0 as f64, y0 as f64, (x1 + 1) as f64, (y1 + 1) as f64))
    }
}

fn centroid_of(pixels: impl Iterator<Item = (usize, usize)>) -> Option<(f64, f64)> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (x, y) in pixels {
        sx += x as f64 + 0.5;
        sy += y as f64 + 0.5;
        n += 1;
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}

/// A participant in a spatial relation.
#[derive(Debug, Clone, Copy)]
pub enum Region<'a> {
    Box(BBox),
    Mask(&'a Mask),
}

impl From<BBox> for Region<'_> {
    fn from(b: BBox) -> Self {
        Region::Box(b)
    }
}

impl<'a> From<&'a Mask> for Region<'a> {
    fn from(m: &'a Mask) -> Self {
        Region::Mask(m)
    }
}

impl Region<'_> {
    pub fn area(&self) -> f64 {
        area(self)
    }

    pub fn centroid(&self) -> Option<(f64, f64)> {
        match self {
            Region::Box(b) => Some(b.center()),
            Region::Mask(m) => m.centroid(),
        }
    }

    pub fn bounding_box(&self) -> Option<BBox> {
        match self {
            Region::Box(b) => Some(*b),
            Region::Mask(m) => m.bounding_box(),
        }
    }
}

/// Pixel view of a region on a fixed grid.
enum Raster<'a> {
    Span(PixelSpan),
    Mask(&'a Mask),
}

impl Raster<'_> {
    fn contains(&self, x: usize, y: usize) -> bool {
        match self {
            Raster::Span(s) => s.contains(x, y),
            Raster::Mask(m) => m.get(x, y),
        }
    }

    fn count(&self) -> usize {
        match self {
            Raster::Span(s) => s.count(),
            Raster::Mask(m) => m.count(),
        }
    }

    fn pixels(&self) -> Box<dyn Iterator<Item = (usize, usize)> + '_> {
        match self {
            Raster::Span(s) => Box::new((s.y0..s.y1).flat_map(move |y| (s.x0..s.x1).map(move |x| (x, y)))),
            Raster::Mask(m) => Box::new(m.pixels()),
        }
    }
}

/// Rasterizes both regions onto a shared grid, or `None` for two boxes.
fn rasterize<'a>(a: &Region<'a>, b: &Region<'a>) -> Result<Option<(Raster<'a>, Raster<'a>)>> {
    let grid = match (a, b) {
        (Region::Box(_), Region::Box(_)) => return Ok(None),
        (Region::Mask(ma), Region::Mask(mb)) => {
            if (ma.width, ma.height) != (mb.width, mb.height) {
                return Err(Error::Dimension(format!(
                    "mask grids differ: {}x{} vs {}x{}",
                    ma.width, ma.height, mb.width, mb.height
                )));
            }
            (ma.width, ma.height)
        }
        (Region::Mask(m), _) | (_, Region::Mask(m)) => (m.width, m.height),
    };
    let to_raster = |r: &Region<'a>| match *r {
        Region::Box(bx) => Raster::Span(bx.pixel_span(grid.0, grid.1)),
        Region::Mask(m) => Raster::Mask(m),
    };
    Ok(Some((to_raster(a), to_raster(b))))
}

fn joint_pixels<'r>(a: &'r Raster<'_>, b: &'r Raster<'_>) -> impl Iterator<Item = (usize, usize)> + 'r {
    a.pixels().filter(move |&(x, y)| b.contains(x, y))
}

/// Consistently measured overlap of two regions: the intersection and both
/// areas come from the same arithmetic (analytic for two boxes, pixel counts
/// as soon as a mask is involved).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overlap {
    pub intersection: f64,
    pub area_a: f64,
    pub area_b: f64,
}

pub fn measure(a: &Region<'_>, b: &Region<'_>) -> Result<Overlap> {
    match rasterize(a, b)? {
        None => {
            let (Region::Box(ba), Region::Box(bb)) = (a, b) else {
                unreachable!()
            };
            Ok(Overlap {
                intersection: ba.intersection_area(bb),
                area_a: ba.area(),
                area_b: bb.area(),
            })
        }
        Some((ra, rb)) => Ok(Overlap {
            intersection: joint_pixels(&ra, &rb).count() as f64,
            area_a: ra.count() as f64,
            area_b: rb.count() as f64,
        }),
    }
}

/// `w·h` for boxes, set-pixel count for masks.
pub fn area(r: &Region<'_>) -> f64 {
    match r {
        Region::Box(b) => b.area(),
        Region::Mask(m) => m.count() as f64,
    }
}

pub fn intersection_area(a: &Region<'_>, b: &Region<'_>) -> Result<f64> {
    Ok(measure(a, b)?.intersection)
}

/// Intersection over subject: the share of the subject covered by the object.
pub fn ios(subject: &Region<'_>, object: &Region<'_>) -> Result<f64> {
    if !(area(subject) > 0.0) {
        return Err(Error::DegenerateRegion("subject has zero area".into()));
    }
    let m = measure(subject, object)?;
    if m.area_a == 0.0 {
        // sub-pixel subject that covers no pixel center of the mask grid
        return Ok(0.0);
    }
    Ok((m.intersection / m.area_a).clamp(0.0, 1.0))
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Centroid of `a ∩ b`, or `None` when the intersection is empty.
pub fn intersection_centroid(a: &Region<'_>, b: &Region<'_>) -> Result<Option<(f64, f64)>> {
    match rasterize(a, b)? {
        None => {
            let (Region::Box(ba), Region::Box(bb)) = (a, b) else {
                unreachable!()
            };
            Ok(ba.intersection(bb).map(|i| i.center()))
        }
        Some((ra, rb)) => Ok(centroid_of(joint_pixels(&ra, &rb))),
    }
}

/// Closed regions meet (share interior or boundary).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contact {
    /// No shared point, not even on the boundary.
    Apart,
    /// Boundary contact with zero interior overlap.
    Touching,
    /// Positive intersection area.
    Overlapping,
}

/// Classifies contact between two regions. For rasters, two pixel sets touch
/// when they share no pixel but some pair is 8-adjacent.
pub fn contact(a: &Region<'_>, b: &Region<'_>) -> Result<Contact> {
    match rasterize(a, b)? {
        None => {
            let (Region::Box(ba), Region::Box(bb)) = (a, b) else {
                unreachable!()
            };
            let (ix, iy) = ba.overlap_extents(bb);
            Ok(if ix > 0.0 && iy > 0.0 {
                Contact::Overlapping
            } else if ix >= 0.0 && iy >= 0.0 {
                Contact::Touching
            } else {
                Contact::Apart
            })
        }
        Some((ra, rb)) => {
            if joint_pixels(&ra, &rb).next().is_some() {
                return Ok(Contact::Overlapping);
            }
            let adjacent = ra.pixels().any(|(x, y)| {
                (-1i64..=1).any(|dy| {
                    (-1i64..=1).any(|dx| {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        nx >= 0 && ny >= 0 && rb.contains(nx as usize, ny as usize)
                    })
                })
            });
            Ok(if adjacent { Contact::Touching } else { Contact::Apart })
        }
    }
}
