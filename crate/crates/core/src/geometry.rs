//! Map-element data model and the planar polyline geometry shared by every
//! other module.
//!
//! Conventions: the ego frame has +x to the right and +y forward, angles are
//! wrapped to `(-pi, pi]`, and closed elements store their vertex loop
//! without repeating the first vertex.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Minimum distance between consecutive vertices of a valid element.
pub const MIN_SEGMENT_LENGTH: f64 = 1e-9;

/// Clipped pieces shorter than this are discarded.
pub const MIN_PIECE_LENGTH: f64 = 1e-6;

/// Slack allowed when checking that points lie inside a range.
pub const RANGE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    PedCrossing,
    Divider,
    Boundary,
    Centerline,
}

impl ClassLabel {
    /// All classes in channel order.
    pub const ALL: [ClassLabel; 4] = [
        ClassLabel::PedCrossing,
        ClassLabel::Divider,
        ClassLabel::Boundary,
        ClassLabel::Centerline,
    ];

    /// Position in [`ClassLabel::ALL`]; also the raster channel and the
    /// binding class code.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Pedestrian crossings are polygons; everything else is a line.
    pub fn is_closed(self) -> bool {
        matches!(self, ClassLabel::PedCrossing)
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::PedCrossing => "ped_crossing",
            ClassLabel::Divider => "divider",
            ClassLabel::Boundary => "boundary",
            ClassLabel::Centerline => "centerline",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

/// A point in the ego BEV plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn l1_distance(self, other: Point2) -> f64 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    pub fn heading(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Rotates counter-clockwise about the origin.
    pub fn rotate(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn lerp(self, other: Point2, t: f64) -> Point2 {
        self + (other - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Point2 { x, y }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// One vectorized road element.
///
/// Invariants are checked on construction and on deserialization: at least
/// two finite points, no two consecutive points closer than
/// [`MIN_SEGMENT_LENGTH`] (for closed elements this includes the implicit
/// closing edge), and `closed` iff the class is a pedestrian crossing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawElement")]
pub struct MapElement {
    class: ClassLabel,
    points: Vec<Point2>,
    closed: bool,
}

#[derive(Deserialize)]
struct RawElement {
    class: ClassLabel,
    points: Vec<Point2>,
    closed: Option<bool>,
}

impl TryFrom<RawElement> for MapElement {
    type Error = Error;

    fn try_from(raw: RawElement) -> Result<Self> {
        let closed = raw.closed.unwrap_or(raw.class.is_closed());
        MapElement::from_parts(raw.class, raw.points, closed)
    }
}

impl MapElement {
    /// Builds an element whose closedness follows from its class.
    pub fn new(class: ClassLabel, points: Vec<Point2>) -> Result<Self> {
        Self::from_parts(class, points, class.is_closed())
    }

    pub fn from_parts(class: ClassLabel, points: Vec<Point2>, closed: bool) -> Result<Self> {
        if closed != class.is_closed() {
            return Err(Error::InvalidElement(format!(
                "class {class} must have closed = {}",
                class.is_closed()
            )));
        }
        if points.len() < 2 {
            return Err(Error::TooFewPoints {
                needed: 2,
                got: points.len(),
            });
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidElement(format!("point {i} is not finite")));
        }
        for (i, w) in points.windows(2).enumerate() {
            if w[0].distance(w[1]) <= MIN_SEGMENT_LENGTH {
                return Err(Error::InvalidElement(format!(
                    "points {i} and {} coincide",
                    i + 1
                )));
            }
        }
        if closed && points[0].distance(points[points.len() - 1]) <= MIN_SEGMENT_LENGTH {
            return Err(Error::InvalidElement(
                "closed element repeats its first vertex".into(),
            ));
        }
        Ok(MapElement {
            class,
            points,
            closed,
        })
    }

    /// Replaces the points of an element by the image of a transform that is
    /// known to keep the invariants (rigid motions, positive scalings, ...).
    pub(crate) fn with_points(&self, points: Vec<Point2>) -> MapElement {
        debug_assert_eq!(points.len(), self.points.len());
        MapElement {
            class: self.class,
            points,
            closed: self.closed,
        }
    }

    pub fn class(&self) -> ClassLabel {
        self.class
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point2> {
        self.points
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Edges in traversal order, including the closing edge of a polygon.
    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.points.len();
        let count = if self.closed { n } else { n - 1 };
        (0..count).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    /// Length of the polyline, or the perimeter for closed elements.
    pub fn length(&self) -> f64 {
        self.edges().map(|(a, b)| a.distance(b)).sum()
    }

    pub fn anchor(&self) -> Point2 {
        anchor_point(self)
    }

    pub fn resample(&self, n: usize) -> Result<Vec<Point2>> {
        resample_polyline(&self.points, n, self.closed)
    }
}

/// Ego-centric rectangle in which elements are predicted and evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerceptionRange {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl PerceptionRange {
    /// 30 m lateral by 60 m longitudinal.
    pub const BASE: PerceptionRange = PerceptionRange {
        x_min: -15.0,
        x_max: 15.0,
        y_min: -30.0,
        y_max: 30.0,
    };

    /// 60 m lateral by 90 m longitudinal.
    pub const LONG: PerceptionRange = PerceptionRange {
        x_min: -30.0,
        x_max: 30.0,
        y_min: -45.0,
        y_max: 45.0,
    };

    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let all_finite = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite());
        if !all_finite || x_min >= x_max || y_min >= y_max {
            return Err(Error::InvalidParameter(format!(
                "perception range [{x_min}, {x_max}] x [{y_min}, {y_max}] is empty"
            )));
        }
        Ok(PerceptionRange {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, p: Point2, tolerance: f64) -> bool {
        p.x >= self.x_min - tolerance
            && p.x <= self.x_max + tolerance
            && p.y >= self.y_min - tolerance
            && p.y <= self.y_max + tolerance
    }

    fn clamp(&self, p: Point2) -> Point2 {
        Point2::new(
            p.x.clamp(self.x_min, self.x_max),
            p.y.clamp(self.y_min, self.y_max),
        )
    }
}

impl Default for PerceptionRange {
    fn default() -> Self {
        Self::BASE
    }
}

/// SE(2) pose of the ego vehicle in a world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "RawPose")]
pub struct EgoPose {
    pub x: f64,
    pub y: f64,
    yaw: f64,
}

#[derive(Deserialize)]
struct RawPose {
    x: f64,
    y: f64,
    yaw: f64,
}

impl From<RawPose> for EgoPose {
    fn from(r: RawPose) -> Self {
        EgoPose::new(r.x, r.y, r.yaw)
    }
}

impl EgoPose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        EgoPose {
            x,
            y,
            yaw: wrap_angle(yaw),
        }
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    /// Ego-frame point to world frame.
    pub fn to_world(&self, p: Point2) -> Point2 {
        p.rotate(self.yaw) + Point2::new(self.x, self.y)
    }

    /// World-frame point to ego frame.
    pub fn from_world(&self, p: Point2) -> Point2 {
        (p - Point2::new(self.x, self.y)).rotate(-self.yaw)
    }
}

/// Arithmetic mean of the stored vertices.
pub fn anchor_point(e: &MapElement) -> Point2 {
    let n = e.points.len() as f64;
    let sum = e
        .points
        .iter()
        .fold(Point2::default(), |acc, &p| acc + p);
    Point2::new(sum.x / n, sum.y / n)
}

/// Resamples a polyline to `n` points spaced uniformly in arc length.
///
/// Open polylines keep both endpoints. Closed loops are traversed once from
/// vertex 0 and return `n` points at spacing `perimeter / n`, without
/// repeating the start point.
pub fn resample_polyline(points: &[Point2], n: usize, closed: bool) -> Result<Vec<Point2>> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "resample count must be at least 2, got {n}"
        )));
    }
    let mut verts = points.to_vec();
    if closed {
        verts.push(points[0]);
    }
    let mut cumulative = Vec::with_capacity(verts.len());
    cumulative.push(0.0);
    for w in verts.windows(2) {
        let last = cumulative[cumulative.len() - 1];
        cumulative.push(last + w[0].distance(w[1]));
    }
    let total = cumulative[cumulative.len() - 1];
    if !(total >= MIN_SEGMENT_LENGTH) {
        return Err(Error::DegeneratePolyline { length: total });
    }

    let step = if closed {
        total / n as f64
    } else {
        total / (n - 1) as f64
    };
    let last_seg = verts.len() - 2;
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        let s = k as f64 * step;
        while seg < last_seg && cumulative[seg + 1] < s {
            seg += 1;
        }
        let seg_len = cumulative[seg + 1] - cumulative[seg];
        let t = if seg_len > 0.0 {
            ((s - cumulative[seg]) / seg_len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(verts[seg].lerp(verts[seg + 1], t));
    }
    if !closed {
        out[n - 1] = points[points.len() - 1];
    }
    Ok(out)
}

/// Headings of each segment of an open polyline.
pub fn segment_headings(points: &[Point2]) -> Vec<f64> {
    points.windows(2).map(|w| (w[1] - w[0]).heading()).collect()
}

pub fn segment_lengths(points: &[Point2]) -> Vec<f64> {
    points.windows(2).map(|w| w[0].distance(w[1])).collect()
}

/// Discrete curvature at each interior vertex of an open polyline.
///
/// At vertex `i` the turn is the wrapped difference between the heading of
/// the outgoing segment `p[i+1] - p[i]` and the incoming one; the curvature
/// divides that turn by the outgoing segment length.
pub fn curvature_profile(points: &[Point2]) -> Result<Vec<f64>> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let lengths = segment_lengths(points);
    if let Some(&len) = lengths.iter().find(|&&l| l <= MIN_SEGMENT_LENGTH) {
        return Err(Error::DegeneratePolyline { length: len });
    }
    let headings = segment_headings(points);
    Ok((1..headings.len())
        .map(|i| wrap_angle(headings[i] - headings[i - 1]) / lengths[i])
        .collect())
}

/// Re-expresses an element observed at pose `from` in the frame of pose `to`.
pub fn transform_to_frame(e: &MapElement, from: &EgoPose, to: &EgoPose) -> MapElement {
    let points = e
        .points
        .iter()
        .map(|&p| to.from_world(from.to_world(p)))
        .collect();
    e.with_points(points)
}

/// Liang-Barsky parameter interval of the segment `a -> b` inside `r`.
fn clip_segment(a: Point2, b: Point2, r: &PerceptionRange) -> Option<(f64, f64)> {
    let d = b - a;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    let constraints = [
        (-d.x, a.x - r.x_min),
        (d.x, r.x_max - a.x),
        (-d.y, a.y - r.y_min),
        (d.y, r.y_max - a.y),
    ];
    for (p, q) in constraints {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                if t > t1 {
                    return None;
                }
                t0 = t0.max(t);
            } else {
                if t < t0 {
                    return None;
                }
                t1 = t1.min(t);
            }
        }
    }
    Some((t0, t1))
}

fn dedup_points(points: &mut Vec<Point2>, closed: bool) {
    points.dedup_by(|b, a| a.distance(*b) <= MIN_SEGMENT_LENGTH);
    if closed {
        while points.len() > 1 && points[0].distance(points[points.len() - 1]) <= MIN_SEGMENT_LENGTH
        {
            points.pop();
        }
    }
}

fn finish_piece(class: ClassLabel, mut points: Vec<Point2>, out: &mut Vec<MapElement>) {
    let closed = class.is_closed();
    dedup_points(&mut points, closed);
    if points.len() < 2 {
        return;
    }
    if let Ok(e) = MapElement::new(class, points) {
        if e.length() >= MIN_PIECE_LENGTH {
            out.push(e);
        }
    }
}

/// Clips an element to the perception range.
///
/// Open polylines split into maximal in-range pieces that end exactly on the
/// range boundary; polygons are clipped against the range rectangle. Pieces
/// with fewer than two points or shorter than [`MIN_PIECE_LENGTH`] vanish.
pub fn clip_to_range(e: &MapElement, r: &PerceptionRange) -> Vec<MapElement> {
    if e.points.iter().all(|&p| r.contains(p, 0.0)) {
        return vec![e.clone()];
    }
    let mut out = Vec::new();
    if e.closed {
        let clipped = clip_polygon(&e.points, r);
        finish_piece(e.class, clipped, &mut out);
        return out;
    }

    let mut current: Vec<Point2> = Vec::new();
    for w in e.points.windows(2) {
        let (a, b) = (w[0], w[1]);
        match clip_segment(a, b, r) {
            None => {
                if !current.is_empty() {
                    finish_piece(e.class, std::mem::take(&mut current), &mut out);
                }
            }
            Some((t0, t1)) => {
                let start = if t0 == 0.0 { a } else { r.clamp(a.lerp(b, t0)) };
                let end = if t1 == 1.0 { b } else { r.clamp(a.lerp(b, t1)) };
                if t0 > 0.0 || current.is_empty() {
                    if !current.is_empty() {
                        finish_piece(e.class, std::mem::take(&mut current), &mut out);
                    }
                    current.push(start);
                }
                current.push(end);
                if t1 < 1.0 {
                    finish_piece(e.class, std::mem::take(&mut current), &mut out);
                }
            }
        }
    }
    if !current.is_empty() {
        finish_piece(e.class, current, &mut out);
    }
    out
}

#[derive(Clone, Copy)]
enum Side {
    Left(f64),
    Right(f64),
    Bottom(f64),
    Top(f64),
}

impl Side {
    fn inside(self, p: Point2) -> bool {
        match self {
            Side::Left(v) => p.x >= v,
            Side::Right(v) => p.x <= v,
            Side::Bottom(v) => p.y >= v,
            Side::Top(v) => p.y <= v,
        }
    }

    fn intersect(self, a: Point2, b: Point2) -> Point2 {
        match self {
            Side::Left(v) | Side::Right(v) => {
                let t = (v - a.x) / (b.x - a.x);
                Point2::new(v, a.y + t * (b.y - a.y))
            }
            Side::Bottom(v) | Side::Top(v) => {
                let t = (v - a.y) / (b.y - a.y);
                Point2::new(a.x + t * (b.x - a.x), v)
            }
        }
    }
}

/// Sutherland-Hodgman clipping of a vertex loop against the range rectangle.
fn clip_polygon(points: &[Point2], r: &PerceptionRange) -> Vec<Point2> {
    let sides = [
        Side::Left(r.x_min),
        Side::Right(r.x_max),
        Side::Bottom(r.y_min),
        Side::Top(r.y_max),
    ];
    let mut poly = points.to_vec();
    for side in sides {
        if poly.is_empty() {
            break;
        }
        let input = std::mem::take(&mut poly);
        let mut prev = input[input.len() - 1];
        for &cur in &input {
            let cur_in = side.inside(cur);
            let prev_in = side.inside(prev);
            if cur_in {
                if !prev_in {
                    poly.push(side.intersect(prev, cur));
                }
                poly.push(cur);
            } else if prev_in {
                poly.push(side.intersect(prev, cur));
            }
            prev = cur;
        }
    }
    poly.into_iter().map(|p| r.clamp(p)).collect()
}

/// Maps points affinely from the range onto the unit square.
pub fn normalize_points(points: &[Point2], r: &PerceptionRange) -> Result<Vec<Point2>> {
    points
        .iter()
        .enumerate()
        .map(|(index, &p)| {
            if !r.contains(p, RANGE_TOLERANCE) {
                return Err(Error::OutOfRange {
                    index,
                    x: p.x,
                    y: p.y,
                });
            }
            Ok(Point2::new(
                (p.x - r.x_min) / r.width(),
                (p.y - r.y_min) / r.height(),
            ))
        })
        .collect()
}

/// Inverse of [`normalize_points`].
pub fn denormalize_points(points: &[Point2], r: &PerceptionRange) -> Vec<Point2> {
    points
        .iter()
        .map(|p| Point2::new(r.x_min + p.x * r.width(), r.y_min + p.y * r.height()))
        .collect()
}
