//! Per-class BEV foreground masks for auxiliary segmentation targets.
//!
//! A pixel belongs to a class channel iff its center lies within
//! `line_half_width` of an open polyline of that class, or inside a closed
//! polygon of that class (even-odd rule) when `fill_polygons` is set. There
//! is no anti-aliasing: masks hold 0 or 255.
//!
//! Pixel `(0, 0)` is the top-left cell: its center is at
//! `(x_min + res/2, y_max - res/2)`, so rows grow toward -y and a rendered
//! mask reads "forward = up".

use serde::{Deserialize, Serialize};

use crate::geometry::{clip_to_range, ClassLabel, MapElement, PerceptionRange, Point2};
use crate::{par, Error, Result};

pub const FOREGROUND: u8 = 255;
pub const NUM_CLASSES: usize = ClassLabel::ALL.len();

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterSpec {
    pub resolution: f64,
    /// Dilation radius around open polylines, meters.
    pub line_half_width: f64,
    /// Fill polygons; when false their outline is dilated like a line.
    pub fill_polygons: bool,
}

impl Default for RasterSpec {
    fn default() -> Self {
        RasterSpec {
            resolution: 0.15,
            line_half_width: 0.5,
            fill_polygons: true,
        }
    }
}

impl RasterSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite())
            || !(self.line_half_width >= 0.0 && self.line_half_width.is_finite())
        {
            return Err(Error::InvalidParameter(format!("invalid raster spec {self:?}")));
        }
        Ok(())
    }
}

/// Class-major, row-major stack of binary masks.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub height: usize,
    pub width: usize,
    pub resolution: f64,
    pub range: PerceptionRange,
    pub data: Vec<u8>,
}

impl BevGrid {
    /// All-zero grid covering `range` at `resolution` meters per pixel.
    pub fn empty(range: PerceptionRange, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidParameter(format!("resolution {resolution}")));
        }
        let width = (range.width() / resolution).round() as usize;
        let height = (range.height() / resolution).round() as usize;
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "resolution {resolution} is coarser than the range"
            )));
        }
        Ok(BevGrid {
            height,
            width,
            resolution,
            range,
            data: vec![0; NUM_CLASSES * height * width],
        })
    }

    pub fn channel_len(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, class: ClassLabel) -> &[u8] {
        let n = self.channel_len();
        &self.data[class.index() * n..(class.index() + 1) * n]
    }

    pub fn get(&self, class: ClassLabel, row: usize, col: usize) -> bool {
        self.channel(class)[row * self.width + col] != 0
    }

    pub fn count(&self, class: ClassLabel) -> usize {
        self.channel(class).iter().filter(|&&v| v != 0).count()
    }

    /// Continuous `(row, col)` of a world point; not clamped to the grid.
    pub fn world_to_pixel(&self, p: Point2) -> (f64, f64) {
        (
            (self.range.y_max - p.y) / self.resolution - 0.5,
            (p.x - self.range.x_min) / self.resolution - 0.5,
        )
    }

    /// World coordinates of a continuous pixel position; integer inputs give
    /// pixel centers.
    pub fn pixel_to_world(&self, row: f64, col: f64) -> Point2 {
        Point2::new(
            self.range.x_min + (col + 0.5) * self.resolution,
            self.range.y_max - (row + 0.5) * self.resolution,
        )
    }
}

/// Whether `p` is within `sqrt(radius_sq)` of the segment `a -> b`.
#[inline]
fn near_segment(p: Point2, a: Point2, b: Point2, radius_sq: f64) -> bool {
    let d = b - a;
    let len_sq = d.dot(d);
    let t = if len_sq > 0.0 {
        ((p - a).dot(d) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let off = p - (a + d * t);
    off.dot(off) <= radius_sq
}

#[derive(Default)]
struct ChannelShapes {
    segments: Vec<(Point2, Point2)>,
    polygons: Vec<Vec<Point2>>,
}

fn collect_shapes(elements: &[MapElement], spec: &RasterSpec, range: &PerceptionRange) -> Vec<ChannelShapes> {
    let mut shapes: Vec<ChannelShapes> = (0..NUM_CLASSES).map(|_| ChannelShapes::default()).collect();
    for e in elements {
        for piece in clip_to_range(e, range) {
            let ch = &mut shapes[piece.class().index()];
            if piece.is_closed() && spec.fill_polygons {
                ch.polygons.push(piece.points().to_vec());
            } else {
                ch.segments.extend(piece.edges());
            }
        }
    }
    shapes
}

fn rasterize_row(row: usize, out: &mut [u8], grid: &BevGrid, shapes: &ChannelShapes, spec: &RasterSpec) {
    let res = grid.resolution;
    let width = grid.width;
    let y = grid.pixel_to_world(row as f64, 0.0).y;
    let hw = spec.line_half_width;
    let hw_sq = hw * hw;
    let margin = hw + res;

    for &(a, b) in &shapes.segments {
        if y < a.y.min(b.y) - margin || y > a.y.max(b.y) + margin {
            continue;
        }
        let lo = ((a.x.min(b.x) - hw - grid.range.x_min) / res - 0.5).floor() - 1.0;
        let hi = ((a.x.max(b.x) + hw - grid.range.x_min) / res - 0.5).ceil() + 1.0;
        let lo = lo.max(0.0) as usize;
        let hi = (hi.max(-1.0) + 1.0).min(width as f64) as usize;
        for (col, px) in out.iter_mut().enumerate().take(hi).skip(lo) {
            if *px == 0 {
                let p = grid.pixel_to_world(row as f64, col as f64);
                if near_segment(p, a, b, hw_sq) {
                    *px = FOREGROUND;
                }
            }
        }
    }

    let mut crossings = Vec::new();
    for poly in &shapes.polygons {
        crossings.clear();
        let n = poly.len();
        for i in 0..n {
            let pi = poly[i];
            let pj = poly[(i + n - 1) % n];
            if (pi.y > y) != (pj.y > y) {
                crossings.push((pj.x - pi.x) * (y - pi.y) / (pj.y - pi.y) + pi.x);
            }
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_by(f64::total_cmp);
        for (col, px) in out.iter_mut().enumerate() {
            if *px != 0 {
                continue;
            }
            let x = grid.pixel_to_world(row as f64, col as f64).x;
            let right_of_x = crossings.len() - crossings.partition_point(|&c| c <= x);
            if right_of_x % 2 == 1 {
                *px = FOREGROUND;
            }
        }
    }
}

/// Rasterizes elements into one mask per class over `range`.
///
/// Elements are clipped to the range first. Rows are processed in parallel;
/// the output does not depend on scheduling.
pub fn rasterize_elements(
    elements: &[MapElement],
    spec: &RasterSpec,
    range: &PerceptionRange,
) -> Result<BevGrid> {
    spec.validate()?;
    let mut grid = BevGrid::empty(*range, spec.resolution)?;
    let shapes = collect_shapes(elements, spec, range);
    let height = grid.height;
    let width = grid.width;
    let mut data = std::mem::take(&mut grid.data);
    {
        let grid = &grid;
        let shapes = &shapes;
        par::for_each_chunk_mut(&mut data, width, |chunk_index, out| {
            let class = chunk_index / height;
            let row = chunk_index % height;
            let ch = &shapes[class];
            if !ch.segments.is_empty() || !ch.polygons.is_empty() {
                rasterize_row(row, out, grid, ch, spec);
            }
        });
    }
    grid.data = data;
    Ok(grid)
}

/// Intersection over union of two binary masks; 1.0 when both are empty.
pub fn mask_iou(a: &[u8], b: &[u8]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "masks have {} and {} pixels",
            a.len(),
            b.len()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x != 0, y != 0);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}
