//! Physical-prior query denoising.
//!
//! Ground-truth elements are perturbed with four geometry-aware noise
//! families instead of independent per-point jitter: a rotation about the
//! element anchor, a shared translation, an anchor-centred anisotropic
//! scaling, and a rescaling of the polyline's discrete turning. Classes are
//! never perturbed.
//!
//! Each item of a denoise group draws its parameters from its own
//! [`CounterRng`] stream keyed by `(group_index, gt_index)` in the order
//! `theta, dx, dy, sx, sy, c`, then applies rotation, scale, curvature and
//! location in that order. The anchor is recomputed on the current element
//! before each step.

use serde::{Deserialize, Serialize};

use crate::geometry::{segment_headings, segment_lengths, wrap_angle, ClassLabel, MapElement, Point2};
use crate::rng::CounterRng;
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Rotation drawn from `[-rot_max, rot_max]` radians.
    pub rot_max: f64,
    /// Translation components drawn from `[-trans_max, trans_max]` meters.
    pub trans_max: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Multiplier applied to every turn angle.
    pub curv_min: f64,
    pub curv_max: f64,
    pub groups: usize,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            rot_max: 15f64.to_radians(),
            trans_max: 1.0,
            scale_min: 0.9,
            scale_max: 1.1,
            curv_min: 0.9,
            curv_max: 1.1,
            groups: 1,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    /// A spec whose samples leave every element unchanged.
    pub fn identity(groups: usize, seed: u64) -> Self {
        NoiseSpec {
            rot_max: 0.0,
            trans_max: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
            curv_min: 1.0,
            curv_max: 1.0,
            groups,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.rot_max,
            self.trans_max,
            self.scale_min,
            self.scale_max,
            self.curv_min,
            self.curv_max,
        ]
        .iter()
        .all(|v| v.is_finite());
        let ok = finite
            && self.rot_max >= 0.0
            && self.trans_max >= 0.0
            && 0.0 < self.scale_min
            && self.scale_min <= self.scale_max
            && 0.0 < self.curv_min
            && self.curv_min <= self.curv_max;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid noise spec {self:?}")))
        }
    }
}

/// Parameters sampled for one noised item.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppliedNoise {
    pub theta: f64,
    pub dx: f64,
    pub dy: f64,
    pub sx: f64,
    pub sy: f64,
    pub c: f64,
    /// False when the element is a polygon or has fewer than three points,
    /// in which case `c` was drawn but not used.
    pub curvature_applied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseItem {
    pub gt_index: usize,
    pub noised: MapElement,
    pub applied: AppliedNoise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseGroup {
    pub group_index: usize,
    pub items: Vec<DenoiseItem>,
}

/// Rotates every point by `theta` about the element anchor.
pub fn apply_rotation_noise(e: &MapElement, theta: f64) -> MapElement {
    let anchor = e.anchor();
    let points = e
        .points()
        .iter()
        .map(|&p| anchor + (p - anchor).rotate(theta))
        .collect();
    e.with_points(points)
}

pub fn apply_location_noise(e: &MapElement, dx: f64, dy: f64) -> MapElement {
    let shift = Point2::new(dx, dy);
    e.with_points(e.points().iter().map(|&p| p + shift).collect())
}

/// Scales anchor-relative coordinates by `sx` along x and `sy` along y.
pub fn apply_scale_noise(e: &MapElement, sx: f64, sy: f64) -> Result<MapElement> {
    if !(sx > 0.0 && sy > 0.0 && sx.is_finite() && sy.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "scale factors must be positive, got ({sx}, {sy})"
        )));
    }
    let anchor = e.anchor();
    let points = e
        .points()
        .iter()
        .map(|&p| Point2::new(anchor.x + (p.x - anchor.x) * sx, anchor.y + (p.y - anchor.y) * sy))
        .collect();
    Ok(e.with_points(points))
}

/// Whether curvature noise is defined for this element.
pub fn supports_curvature_noise(e: &MapElement) -> bool {
    !e.is_closed() && e.class() != ClassLabel::PedCrossing && e.len() >= 3
}

/// Multiplies every turn angle of an open polyline by `c` and rebuilds the
/// line by dead reckoning from the first point, keeping the first heading
/// and every segment length.
pub fn apply_curvature_noise(e: &MapElement, c: f64) -> Result<MapElement> {
    if e.is_closed() || e.class() == ClassLabel::PedCrossing {
        return Err(Error::NotALine(e.class().to_string()));
    }
    if e.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: e.len(),
        });
    }
    if !c.is_finite() {
        return Err(Error::InvalidParameter(format!("curvature factor {c}")));
    }
    let pts = e.points();
    let headings = segment_headings(pts);
    let lengths = segment_lengths(pts);

    let mut out = Vec::with_capacity(pts.len());
    out.push(pts[0]);
    let mut heading = headings[0];
    let mut cursor = pts[0];
    for i in 0..lengths.len() {
        if i > 0 {
            heading += c * wrap_angle(headings[i] - headings[i - 1]);
        }
        let (s, co) = heading.sin_cos();
        cursor = Point2::new(cursor.x + lengths[i] * co, cursor.y + lengths[i] * s);
        out.push(cursor);
    }
    Ok(e.with_points(out))
}

fn sample(rng: &mut CounterRng, spec: &NoiseSpec) -> AppliedNoise {
    AppliedNoise {
        theta: rng.uniform(-spec.rot_max, spec.rot_max),
        dx: rng.uniform(-spec.trans_max, spec.trans_max),
        dy: rng.uniform(-spec.trans_max, spec.trans_max),
        sx: rng.uniform(spec.scale_min, spec.scale_max),
        sy: rng.uniform(spec.scale_min, spec.scale_max),
        c: rng.uniform(spec.curv_min, spec.curv_max),
        curvature_applied: false,
    }
}

/// Noises one ground-truth element for the given group.
pub fn noise_element(
    gt: &MapElement,
    gt_index: usize,
    group_index: usize,
    spec: &NoiseSpec,
) -> Result<DenoiseItem> {
    let mut rng = CounterRng::stream(spec.seed, &[group_index as u64, gt_index as u64]);
    let mut applied = sample(&mut rng, spec);
    let mut e = apply_rotation_noise(gt, applied.theta);
    e = apply_scale_noise(&e, applied.sx, applied.sy)?;
    if supports_curvature_noise(&e) {
        e = apply_curvature_noise(&e, applied.c)?;
        applied.curvature_applied = true;
    }
    e = apply_location_noise(&e, applied.dx, applied.dy);
    Ok(DenoiseItem {
        gt_index,
        noised: e,
        applied,
    })
}

/// Builds `spec.groups` noised copies of the ground-truth set.
pub fn generate_denoise_groups(gts: &[MapElement], spec: &NoiseSpec) -> Result<Vec<DenoiseGroup>> {
    spec.validate()?;
    par::map_range(spec.groups, |group_index| {
        let items = gts
            .iter()
            .enumerate()
            .map(|(gt_index, gt)| noise_element(gt, gt_index, group_index, spec))
            .collect::<Result<Vec<_>>>()?;
        Ok(DenoiseGroup { group_index, items })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(v: &[(f64, f64)]) -> MapElement {
        MapElement::new(
            ClassLabel::Divider,
            v.iter().map(|&(x, y)| Point2::new(x, y)).collect(),
        )
        .unwrap()
    }

    fn close(a: &MapElement, b: &MapElement, tol: f64) -> bool {
        a.points()
            .iter()
            .zip(b.points())
            .all(|(p, q)| p.distance(*q) <= tol)
    }

    #[test]
    fn rotation_examples() {
        let e = line(&[(1.0, 0.0), (-1.0, 0.0)]);
        assert_eq!(apply_rotation_noise(&e, 0.0), e);
        let r = apply_rotation_noise(&e, PI / 2.0);
        assert!(close(&r, &line(&[(0.0, 1.0), (0.0, -1.0)]), 1e-15));
    }

    #[test]
    fn location_example() {
        let e = line(&[(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(apply_location_noise(&e, 0.0, 0.0), e);
        assert_eq!(
            apply_location_noise(&e, 2.0, -1.0),
            line(&[(2.0, -1.0), (3.0, 0.0)])
        );
    }

    #[test]
    fn scale_examples() {
        let e = line(&[(0.0, 0.0), (2.0, 0.0)]);
        assert_eq!(apply_scale_noise(&e, 1.0, 1.0).unwrap(), e);
        assert_eq!(
            apply_scale_noise(&e, 2.0, 1.0).unwrap(),
            line(&[(-1.0, 0.0), (3.0, 0.0)])
        );
        assert!(apply_scale_noise(&e, 0.0, 1.0).is_err());
        assert!(apply_scale_noise(&e, 1.0, -2.0).is_err());
    }

    #[test]
    fn curvature_identity_and_straight() {
        let e = line(&[(0.0, 0.0), (1.0, 0.5), (2.5, 0.2), (3.0, 2.0)]);
        assert!(close(&apply_curvature_noise(&e, 1.0).unwrap(), &e, 1e-9));
        let s = line(&[(0.0, 0.0), (1.0, 1.0), (3.0, 3.0)]);
        assert!(close(&apply_curvature_noise(&s, 0.3).unwrap(), &s, 1e-12));
    }

    #[test]
    fn curvature_errors() {
        let poly = MapElement::new(
            ClassLabel::PedCrossing,
            vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)],
        )
        .unwrap();
        assert!(matches!(apply_curvature_noise(&poly, 1.1), Err(Error::NotALine(_))));
        let short = line(&[(0.0, 0.0), (1.0, 0.0)]);
        assert!(matches!(
            apply_curvature_noise(&short, 1.1),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn group_counts() {
        let gts = vec![
            line(&[(0.0, 0.0), (1.0, 0.0), (2.0, 1.0)]),
            line(&[(5.0, 5.0), (6.0, 7.0)]),
        ];
        let none = generate_denoise_groups(&gts, &NoiseSpec { groups: 0, ..Default::default() });
        assert!(none.unwrap().is_empty());
        let spec = NoiseSpec {
            groups: 3,
            seed: 11,
            ..Default::default()
        };
        let groups = generate_denoise_groups(&gts, &spec).unwrap();
        assert_eq!(groups.len(), 3);
        for (g, group) in groups.iter().enumerate() {
            assert_eq!(group.group_index, g);
            let idx: Vec<_> = group.items.iter().map(|i| i.gt_index).collect();
            assert_eq!(idx, vec![0, 1]);
            assert!(group.items[0].applied.curvature_applied);
            assert!(!group.items[1].applied.curvature_applied);
        }
        assert_eq!(groups, generate_denoise_groups(&gts, &spec).unwrap());
        let other = generate_denoise_groups(&gts, &NoiseSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(groups[0].items[0].applied, other[0].items[0].applied);
    }

    #[test]
    fn identity_spec_is_identity() {
        let gts = vec![line(&[(0.0, 0.0), (1.0, 0.5), (2.0, 3.0)])];
        let groups = generate_denoise_groups(&gts, &NoiseSpec::identity(2, 5)).unwrap();
        for g in groups {
            assert!(close(&g.items[0].noised, &gts[0], 1e-9));
        }
    }

    #[test]
    fn rejects_bad_spec() {
        let bad = NoiseSpec {
            scale_min: 0.0,
            ..Default::default()
        };
        assert!(generate_denoise_groups(&[], &bad).is_err());
        let bad = NoiseSpec {
            curv_min: 1.2,
            curv_max: 1.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
