//! Random instance generators and brute-force oracles for mapforge tests.
//!
//! Oracles here deliberately avoid the library's fast paths: they loop over
//! every pixel, permutation or ranked prediction directly, so agreement with
//! the library is meaningful.

use mapforge::dfa::{CameraModel, FeatureGrid, FeatureLevel, FeaturePyramid, SamplePointSet};
use mapforge::eval::Prediction;
use mapforge::geometry::{clip_to_range, resample_polyline};
use mapforge::raster::RasterSpec;
use mapforge::{ClassLabel, MapElement, PerceptionRange, Point2};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn random_point(rng: &mut StdRng, r: &PerceptionRange) -> Point2 {
    Point2::new(
        rng.random_range(r.x_min..r.x_max),
        rng.random_range(r.y_min..r.y_max),
    )
}

/// Random-walk open polyline with `len` points starting at `start`.
pub fn random_line(rng: &mut StdRng, class: ClassLabel, start: Point2, len: usize, step: f64) -> MapElement {
    let mut pts = vec![start];
    let mut heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    for _ in 1..len {
        heading += rng.random_range(-0.7..0.7);
        let d = rng.random_range(0.3 * step..step);
        let last = pts[pts.len() - 1];
        pts.push(Point2::new(last.x + d * heading.cos(), last.y + d * heading.sin()));
    }
    MapElement::new(class, pts).expect("random walk produces a valid line")
}

/// Random star-shaped polygon around `center`.
pub fn random_polygon(rng: &mut StdRng, center: Point2, vertices: usize, radius: f64) -> MapElement {
    let mut angles: Vec<f64> = (0..vertices)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    angles.sort_by(f64::total_cmp);
    let pts = angles
        .iter()
        .map(|a| {
            let r = rng.random_range(0.3 * radius..radius);
            Point2::new(center.x + r * a.cos(), center.y + r * a.sin())
        })
        .collect();
    MapElement::new(ClassLabel::PedCrossing, pts).expect("random polygon is valid")
}

/// Random element of any class around a point of `range`; it may extend
/// past the range.
pub fn random_element(rng: &mut StdRng, range: &PerceptionRange) -> MapElement {
    let class = ClassLabel::ALL[rng.random_range(0..4)];
    let start = random_point(rng, range);
    let scale = range.width().min(range.height()) / 6.0;
    if class.is_closed() {
        let n = rng.random_range(3..9);
        random_polygon(rng, start, n, scale)
    } else {
        let n = rng.random_range(2..14);
        random_line(rng, class, start, n, scale / 2.0)
    }
}

pub fn random_line_element(rng: &mut StdRng, min_len: usize, max_len: usize) -> MapElement {
    let class = [ClassLabel::Divider, ClassLabel::Boundary, ClassLabel::Centerline][rng.random_range(0..3)];
    let start = random_point(rng, &PerceptionRange::BASE);
    let n = rng.random_range(min_len..=max_len);
    random_line(rng, class, start, n, 3.0)
}

/// Quarter circle of radius `radius` sampled at `n` points.
pub fn quarter_arc(radius: f64, n: usize) -> MapElement {
    let pts = (0..n)
        .map(|i| {
            let a = std::f64::consts::FRAC_PI_2 * i as f64 / (n - 1) as f64;
            Point2::new(radius * a.cos(), radius * a.sin())
        })
        .collect();
    MapElement::new(ClassLabel::Divider, pts).unwrap()
}

pub fn distance_to_segment(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len_sq = ab.x * ab.x + ab.y * ab.y;
    let t = if len_sq == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len_sq).clamp(0.0, 1.0)
    };
    let cx = a.x + ab.x * t;
    let cy = a.y + ab.y * t;
    ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt()
}

/// Distance from `p` to the element's polyline (or polygon outline).
pub fn distance_to_outline(p: Point2, e: &MapElement) -> f64 {
    e.edges()
        .map(|(a, b)| distance_to_segment(p, a, b))
        .fold(f64::INFINITY, f64::min)
}

/// Crossing-number point-in-polygon test (even-odd rule).
pub fn point_in_polygon(x: f64, y: f64, poly: &[Point2]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (poly[i].x, poly[i].y);
        let (xj, yj) = (poly[j].x, poly[j].y);
        if ((yi > y) != (yj > y)) && (x < (xj - xi) * (y - yi) / (yj - yi) + xi) {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Dense arc-length oracle: the point at arc length `s` along the polyline.
pub fn point_at_arclength(points: &[Point2], closed: bool, s: f64) -> Point2 {
    let mut verts = points.to_vec();
    if closed {
        verts.push(points[0]);
    }
    let mut walked = 0.0;
    for w in verts.windows(2) {
        let len = w[0].distance(w[1]);
        if walked + len >= s {
            let t = if len > 0.0 { (s - walked) / len } else { 0.0 };
            return Point2::new(w[0].x + (w[1].x - w[0].x) * t, w[0].y + (w[1].y - w[0].y) * t);
        }
        walked += len;
    }
    verts[verts.len() - 1]
}

/// Per-pixel mask oracle: every pixel center tested against every segment
/// and polygon of its class.
pub fn raster_oracle(elements: &[MapElement], spec: &RasterSpec, range: &PerceptionRange) -> (usize, usize, Vec<u8>) {
    let width = (range.width() / spec.resolution).round() as usize;
    let height = (range.height() / spec.resolution).round() as usize;
    let pieces: Vec<MapElement> = elements.iter().flat_map(|e| clip_to_range(e, range)).collect();
    let mut data = vec![0u8; 4 * width * height];
    let hw_sq = spec.line_half_width * spec.line_half_width;
    for (ci, class) in ClassLabel::ALL.into_iter().enumerate() {
        for row in 0..height {
            for col in 0..width {
                let x = range.x_min + (col as f64 + 0.5) * spec.resolution;
                let y = range.y_max - (row as f64 + 0.5) * spec.resolution;
                let p = Point2::new(x, y);
                let hit = pieces.iter().filter(|e| e.class() == class).any(|e| {
                    if e.is_closed() && spec.fill_polygons {
                        point_in_polygon(x, y, e.points())
                    } else {
                        e.edges().any(|(a, b)| {
                            let d = b - a;
                            let len_sq = d.dot(d);
                            let t = if len_sq > 0.0 {
                                ((p - a).dot(d) / len_sq).clamp(0.0, 1.0)
                            } else {
                                0.0
                            };
                            let off = p - (a + d * t);
                            off.dot(off) <= hw_sq
                        })
                    }
                });
                if hit {
                    data[(ci * height + row) * width + col] = 255;
                }
            }
        }
    }
    (height, width, data)
}

/// Exhaustive assignment: every injection of the smaller side, minimum
/// total (summed in row order), ties broken by the lexicographically
/// smallest row-sorted pair list.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> (f64, Vec<(usize, usize)>) {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return (0.0, vec![]);
    }
    let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
    let k = rows.min(cols);
    let mut consider = |pairs: Vec<(usize, usize)>| {
        let mut pairs = pairs;
        pairs.sort();
        let total: f64 = pairs.iter().map(|&(r, c)| cost[r][c]).sum();
        let better = match &best {
            None => true,
            Some((bt, bp)) => total < *bt || (total == *bt && pairs < *bp),
        };
        if better {
            best = Some((total, pairs));
        }
    };
    // choose for every element of the smaller side a distinct partner
    fn rec(
        i: usize,
        k: usize,
        other: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<usize>,
        out: &mut dyn FnMut(&[usize]),
    ) {
        if i == k {
            out(cur);
            return;
        }
        for j in 0..other {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                rec(i + 1, k, other, used, cur, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let other = rows.max(cols);
    let mut used = vec![false; other];
    let mut cur = Vec::new();
    rec(0, k, other, &mut used, &mut cur, &mut |sel: &[usize]| {
        let pairs = if rows <= cols {
            sel.iter().enumerate().map(|(r, &c)| (r, c)).collect()
        } else {
            sel.iter().enumerate().map(|(c, &r)| (r, c)).collect()
        };
        consider(pairs);
    });
    best.unwrap()
}

/// O(n^2) Chamfer distance with an explicit double loop.
pub fn chamfer_oracle(a: &[Point2], b: &[Point2]) -> f64 {
    let mut ab = 0.0;
    for p in a {
        let mut m = f64::INFINITY;
        for q in b {
            let d = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt();
            if d < m {
                m = d;
            }
        }
        ab += m;
    }
    let mut ba = 0.0;
    for q in b {
        let mut m = f64::INFINITY;
        for p in a {
            let d = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt();
            if d < m {
                m = d;
            }
        }
        ba += m;
    }
    0.5 * (ab / a.len() as f64 + ba / b.len() as f64)
}

fn sample_n(e: &MapElement, n: usize) -> Vec<Point2> {
    if e.len() == n {
        e.points().to_vec()
    } else {
        resample_polyline(e.points(), n, e.is_closed()).unwrap()
    }
}

/// Independent AP: builds the ranked list, walks it to produce explicit
/// (recall, precision) points, and integrates recall steps against the
/// maximum precision at any later rank.
pub fn brute_force_ap(
    preds: &[Vec<Prediction>],
    gts: &[Vec<MapElement>],
    class: ClassLabel,
    threshold: f64,
    n: usize,
) -> f64 {
    let mut ranked: Vec<(f64, usize, usize)> = Vec::new();
    for (s, scene) in preds.iter().enumerate() {
        for (i, p) in scene.iter().enumerate() {
            if p.class() == class {
                ranked.push((p.confidence(), s, i));
            }
        }
    }
    // insertion sort: descending confidence, ties keep (scene, index) order
    for i in 1..ranked.len() {
        let mut j = i;
        while j > 0 && ranked[j - 1].0 < ranked[j].0 {
            ranked.swap(j - 1, j);
            j -= 1;
        }
    }
    let total_gt: usize = gts
        .iter()
        .map(|s| s.iter().filter(|e| e.class() == class).count())
        .sum();
    if total_gt == 0 {
        return if ranked.is_empty() { 1.0 } else { 0.0 };
    }
    let mut used: Vec<Vec<bool>> = gts.iter().map(|s| vec![false; s.len()]).collect();
    let mut curve: Vec<(f64, f64)> = Vec::new();
    let mut tp = 0usize;
    for (k, &(_, s, i)) in ranked.iter().enumerate() {
        let pts = sample_n(&preds[s][i].element, n);
        let mut best: Option<(f64, usize)> = None;
        for (j, g) in gts[s].iter().enumerate() {
            if g.class() != class || used[s][j] {
                continue;
            }
            let d = chamfer_oracle(&pts, &sample_n(g, n));
            if d < threshold && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, j));
            }
        }
        if let Some((_, j)) = best {
            used[s][j] = true;
            tp += 1;
        }
        curve.push((tp as f64 / total_gt as f64, tp as f64 / (k + 1) as f64));
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..curve.len() {
        let (recall, _) = curve[k];
        if recall > prev_recall {
            let best_precision = curve[k..].iter().map(|c| c.1).fold(0.0, f64::max);
            ap += (recall - prev_recall) * best_precision;
            prev_recall = recall;
        }
    }
    ap
}

/// Hand-written four-term bilinear formula with zero padding.
pub fn bilinear_oracle(grid: &FeatureGrid, u: f64, v: f64) -> Vec<f64> {
    let gx = u * grid.width as f64 - 0.5;
    let gy = v * grid.height as f64 - 0.5;
    let x0 = gx.floor();
    let y0 = gy.floor();
    let ax = gx - x0;
    let ay = gy - y0;
    let at = |r: f64, c: f64, ch: usize| -> f64 {
        if r < 0.0 || c < 0.0 || r >= grid.height as f64 || c >= grid.width as f64 {
            0.0
        } else {
            grid.values[(r as usize * grid.width + c as usize) * grid.channels + ch]
        }
    };
    (0..grid.channels)
        .map(|ch| {
            at(y0, x0, ch) * (1.0 - ax) * (1.0 - ay)
                + at(y0, x0 + 1.0, ch) * ax * (1.0 - ay)
                + at(y0 + 1.0, x0, ch) * (1.0 - ax) * ay
                + at(y0 + 1.0, x0 + 1.0, ch) * ax * ay
        })
        .collect()
}

/// Triple loop over keypoints, views and levels.
pub fn aggregate_oracle(pyramids: &[FeaturePyramid], cams: &[CameraModel], sp: &SamplePointSet) -> Vec<f64> {
    let channels = pyramids[0].channels();
    let mut acc = vec![0.0; channels];
    let mut wsum = 0.0;
    for (k, kp) in sp.keypoints().iter().enumerate() {
        for v in 0..sp.views() {
            let proj = mapforge::dfa::project_point(*kp, &cams[v]);
            if !proj.valid {
                continue;
            }
            for l in 0..sp.levels() {
                let t = sp.index(k, v, l);
                let [du, dv] = sp.offsets()[t];
                let s = bilinear_oracle(&pyramids[v].levels()[l].grid, proj.u + du, proj.v + dv);
                let w = sp.weights()[t];
                for c in 0..channels {
                    acc[c] += w * s[c];
                }
                wsum += w;
            }
        }
    }
    if wsum > 0.0 {
        acc.iter().map(|a| a / wsum).collect()
    } else {
        vec![0.0; channels]
    }
}

pub fn random_grid(rng: &mut StdRng, h: usize, w: usize, channels: usize) -> FeatureGrid {
    let values = (0..h * w * channels).map(|_| rng.random_range(-1.0..1.0)).collect();
    FeatureGrid::new(h, w, channels, values).unwrap()
}

/// Synthetic surround rig: `views` cameras at the ego origin, evenly spread
/// in heading, each with a pyramid of `levels` random feature grids.
pub fn random_rig(
    rng: &mut StdRng,
    views: usize,
    levels: usize,
    channels: usize,
) -> (Vec<CameraModel>, Vec<FeaturePyramid>) {
    let cams = (0..views)
        .map(|v| {
            let heading = std::f64::consts::TAU * v as f64 / views as f64 + 0.3;
            CameraModel::looking_along(heading, [0.0, 0.0, 1.6], 260.0, 512.0, 256.0).unwrap()
        })
        .collect();
    let pyramids = (0..views)
        .map(|_| {
            let lv = (0..levels)
                .map(|l| {
                    let stride = 8.0 * (1 << l) as f64;
                    let h = (256.0 / stride) as usize;
                    let w = (512.0 / stride) as usize;
                    FeatureLevel {
                        grid: random_grid(rng, h, w, channels),
                        stride,
                    }
                })
                .collect();
            FeaturePyramid::new(lv).unwrap()
        })
        .collect();
    (cams, pyramids)
}

/// Random sample-point set with small offsets and random positive weights.
pub fn random_sample_set(rng: &mut StdRng, keypoints: usize, views: usize, levels: usize) -> SamplePointSet {
    let kps: Vec<[f64; 3]> = (0..keypoints)
        .map(|_| {
            let p = random_point(rng, &PerceptionRange::BASE);
            [p.x, p.y, rng.random_range(-0.5..0.5)]
        })
        .collect();
    let n = keypoints * views * levels;
    let offsets = (0..n)
        .map(|_| [rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)])
        .collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / sum).collect();
    SamplePointSet::new(kps, views, levels, offsets, weights).unwrap()
}

/// Relative agreement used by the gradient checks; magnitudes below
/// `1e-3` are compared absolutely against that floor.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Predictions built from ground truth: exact copies, jittered copies and
/// decoys, with random confidences.
pub fn random_eval_scene(
    rng: &mut StdRng,
    max_gt: usize,
    max_pred: usize,
    classes: &[ClassLabel],
) -> (Vec<MapElement>, Vec<Prediction>) {
    let range = PerceptionRange::BASE;
    let ngt = rng.random_range(0..=max_gt);
    let gts: Vec<MapElement> = (0..ngt)
        .map(|_| {
            let class = classes[rng.random_range(0..classes.len())];
            let c = random_point(rng, &range);
            if class.is_closed() {
                let k = rng.random_range(3..6);
                random_polygon(rng, c, k, 2.0)
            } else {
                let k = rng.random_range(2..6);
                random_line(rng, class, c, k, 2.0)
            }
        })
        .collect();
    let npred = rng.random_range(0..=max_pred);
    let preds = (0..npred)
        .map(|_| {
            let conf = (rng.random_range(0..20) as f64) / 20.0;
            let e = if !gts.is_empty() && rng.random_bool(0.7) {
                let g = &gts[rng.random_range(0..gts.len())];
                let j = rng.random_range(0.0..1.2);
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                mapforge::denoise::apply_location_noise(g, j * a.cos(), j * a.sin())
            } else {
                let class = classes[rng.random_range(0..classes.len())];
                let c = random_point(rng, &range);
                if class.is_closed() {
                    random_polygon(rng, c, 4, 2.0)
                } else {
                    random_line(rng, class, c, 3, 2.0)
                }
            };
            Prediction::new(e, conf).unwrap()
        })
        .collect();
    (gts, preds)
}

/// Smallest distance of any valid sample's continuous cell coordinate from
/// an integer, where the bilinear stencil changes cells.
pub fn min_cell_margin(pyramids: &[FeaturePyramid], cams: &[CameraModel], sp: &SamplePointSet) -> f64 {
    let mut margin = f64::INFINITY;
    for (k, kp) in sp.keypoints().iter().enumerate() {
        for v in 0..sp.views() {
            let proj = mapforge::dfa::project_point(*kp, &cams[v]);
            if !proj.valid {
                continue;
            }
            for l in 0..sp.levels() {
                let [du, dv] = sp.offsets()[sp.index(k, v, l)];
                let g = &pyramids[v].levels()[l].grid;
                for x in [(proj.u + du) * g.width as f64 - 0.5, (proj.v + dv) * g.height as f64 - 0.5] {
                    let f = x - x.floor();
                    margin = margin.min(f.min(1.0 - f));
                }
            }
        }
    }
    margin
}

/// Worst relative error of the analytic gradients against central
/// differences with step `h`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradCheck {
    pub offsets: f64,
    pub weights: f64,
    pub features: f64,
    pub probes: usize,
}

fn with_feature(pyramids: &[FeaturePyramid], view: usize, level: usize, slot: usize, delta: f64) -> Vec<FeaturePyramid> {
    let mut out = pyramids.to_vec();
    let mut levels = out[view].levels().to_vec();
    levels[level].grid.values[slot] += delta;
    out[view] = FeaturePyramid::new(levels).unwrap();
    out
}

/// Central-difference check of [`mapforge::dfa::aggregate_with_grad`] on
/// every offset and weight and on `feature_probes` random feature values.
#[allow(clippy::needless_range_loop)]
pub fn dfa_gradient_check(
    rng: &mut StdRng,
    pyramids: &[FeaturePyramid],
    cams: &[CameraModel],
    sp: &SamplePointSet,
    h: f64,
    feature_probes: usize,
) -> GradCheck {
    use mapforge::dfa::{aggregate, aggregate_with_grad};
    let grad = aggregate_with_grad(pyramids, cams, sp).unwrap();
    let channels = pyramids[0].channels();
    let mut check = GradCheck::default();
    let eval = |p: &[FeaturePyramid], s: &SamplePointSet| aggregate(p, cams, s).unwrap().values;
    let central = |plus: Vec<f64>, minus: Vec<f64>| -> Vec<f64> {
        plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    };

    for t in 0..sp.len() {
        for axis in 0..2 {
            let mut plus = sp.clone();
            plus.offsets_mut()[t][axis] += h;
            let mut minus = sp.clone();
            minus.offsets_mut()[t][axis] -= h;
            let fd = central(eval(pyramids, &plus), eval(pyramids, &minus));
            for c in 0..channels {
                let e = relative_error(grad.d_offsets[t][axis][c], fd[c]);
                check.offsets = check.offsets.max(e);
                check.probes += 1;
            }
        }
        let mut plus = sp.clone();
        plus.weights_mut()[t] += h;
        let mut minus = sp.clone();
        minus.weights_mut()[t] -= h;
        if minus.weights()[t] >= 0.0 {
            let fd = central(eval(pyramids, &plus), eval(pyramids, &minus));
            for c in 0..channels {
                check.weights = check.weights.max(relative_error(grad.d_weights[t][c], fd[c]));
                check.probes += 1;
            }
        }
    }

    for _ in 0..feature_probes {
        let view = rng.random_range(0..pyramids.len());
        let level = rng.random_range(0..sp.levels());
        let g = &pyramids[view].levels()[level].grid;
        // bias half the probes towards cells that actually receive gradient
        let cell = if rng.random_bool(0.5) {
            let touched: Vec<usize> = grad.d_features[view][level]
                .iter()
                .enumerate()
                .filter(|(_, d)| **d != 0.0)
                .map(|(i, _)| i)
                .collect();
            if touched.is_empty() {
                rng.random_range(0..g.height * g.width)
            } else {
                touched[rng.random_range(0..touched.len())]
            }
        } else {
            rng.random_range(0..g.height * g.width)
        };
        let ch = rng.random_range(0..channels);
        let slot = cell * channels + ch;
        let fd = central(
            eval(&with_feature(pyramids, view, level, slot, h), sp),
            eval(&with_feature(pyramids, view, level, slot, -h), sp),
        );
        for c in 0..channels {
            let analytic = if c == ch { grad.d_features[view][level][cell] } else { 0.0 };
            check.features = check.features.max(relative_error(analytic, fd[c]));
            check.probes += 1;
        }
    }
    check
}

/// A random rig and sample set with at least one valid projection and every
/// sample more than `margin` away from a cell boundary.
pub fn interior_dfa_instance(rng: &mut StdRng, margin: f64) -> (Vec<CameraModel>, Vec<FeaturePyramid>, SamplePointSet) {
    loop {
        let views = rng.random_range(1..=4);
        let levels = rng.random_range(1..=3);
        let (cams, pyramids) = random_rig(rng, views, levels, 3);
        let keypoints = rng.random_range(1..=6);
        let sp = random_sample_set(rng, keypoints, views, levels);
        let any_valid = mapforge::dfa::aggregate(&pyramids, &cams, &sp).unwrap().any_valid();
        if any_valid && min_cell_margin(&pyramids, &cams, &sp) > margin {
            return (cams, pyramids, sp);
        }
    }
}
