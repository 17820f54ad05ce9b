//! Reference kernel for decoupled deformable feature aggregation.
//!
//! Keypoints are projected into every camera, shifted by a learned offset
//! in normalized image coordinates, bilinearly sampled from every pyramid
//! level and combined with nonnegative weights. Weights are renormalized
//! over the (keypoint, view) pairs whose projection is valid. Classification
//! and regression use two independent sample-point sets over the same
//! features.
//!
//! Sampling follows the align-corners-false convention with zero padding:
//! normalized `(u, v)` maps to continuous cell coordinates
//! `(u * W - 0.5, v * H - 0.5)`, so a cell center sits at `(j + 0.5) / W`.

use crate::assign::fixed_length;
use crate::geometry::MapElement;
use crate::{par, Error, Result};

pub type Vec3 = [f64; 3];

/// Pinhole camera with a rigid world-to-camera transform.
///
/// The camera frame has +z along the optical axis, +x right and +y down.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    intrinsics: [[f64; 3]; 3],
    extrinsics: [[f64; 4]; 4],
    width: f64,
    height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    pub valid: bool,
}

impl CameraModel {
    pub fn new(
        intrinsics: [[f64; 3]; 3],
        extrinsics: [[f64; 4]; 4],
        width: f64,
        height: f64,
    ) -> Result<Self> {
        let k = intrinsics;
        if !(k[0][0] > 0.0 && k[1][1] > 0.0) || k[1][0] != 0.0 || k[2] != [0.0, 0.0, 1.0] {
            return Err(Error::InvalidParameter(format!("not a pinhole intrinsic matrix: {k:?}")));
        }
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::InvalidParameter(format!("image size {width}x{height}")));
        }
        if extrinsics[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidParameter("extrinsics bottom row must be 0 0 0 1".into()));
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|m| extrinsics[i][m] * extrinsics[j][m]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                if (dot - expected).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(
                        "extrinsic rotation is not orthonormal".into(),
                    ));
                }
            }
        }
        Ok(CameraModel {
            intrinsics,
            extrinsics,
            width,
            height,
        })
    }

    /// Camera at `position` (ego frame, z up) looking horizontally along the
    /// ego-plane direction `heading` (radians from +x, counter-clockwise).
    pub fn looking_along(
        heading: f64,
        position: Vec3,
        focal: f64,
        width: f64,
        height: f64,
    ) -> Result<Self> {
        let (s, c) = heading.sin_cos();
        let forward = [c, s, 0.0];
        let right = [s, -c, 0.0];
        let down = [0.0, 0.0, -1.0];
        let rows = [right, down, forward];
        let mut ext = [[0.0; 4]; 4];
        for (i, r) in rows.iter().enumerate() {
            ext[i][..3].copy_from_slice(r);
            ext[i][3] = -(r[0] * position[0] + r[1] * position[1] + r[2] * position[2]);
        }
        ext[3][3] = 1.0;
        let k = [
            [focal, 0.0, width / 2.0],
            [0.0, focal, height / 2.0],
            [0.0, 0.0, 1.0],
        ];
        Self::new(k, ext, width, height)
    }

    pub fn image_size(&self) -> (f64, f64) {
        (self.width, self.height)
    }

    pub fn intrinsics(&self) -> &[[f64; 3]; 3] {
        &self.intrinsics
    }

    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        let e = &self.extrinsics;
        let mut q = [0.0; 3];
        for (i, qi) in q.iter_mut().enumerate() {
            *qi = e[i][0] * p[0] + e[i][1] * p[1] + e[i][2] * p[2] + e[i][3];
        }
        q
    }

    /// World point seen at normalized `(u, v)` with camera depth `depth`.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let k = &self.intrinsics;
        let (px, py) = (u * self.width, v * self.height);
        let yn = (py - k[1][2]) / k[1][1];
        let xn = (px - k[0][2] - k[0][1] * yn) / k[0][0];
        let q = [xn * depth, yn * depth, depth];
        let e = &self.extrinsics;
        let d = [q[0] - e[0][3], q[1] - e[1][3], q[2] - e[2][3]];
        let mut p = [0.0; 3];
        for (j, pj) in p.iter_mut().enumerate() {
            *pj = e[0][j] * d[0] + e[1][j] * d[1] + e[2][j] * d[2];
        }
        p
    }
}

/// Projects a world point to normalized image coordinates.
///
/// Valid iff the point is in front of the camera (depth above 1e-6) and the
/// pixel lies inside the image.
pub fn project_point(p: Vec3, cam: &CameraModel) -> Projection {
    let q = cam.to_camera(p);
    let depth = q[2];
    if !(depth > 1e-6) {
        return Projection {
            u: 0.0,
            v: 0.0,
            depth,
            valid: false,
        };
    }
    let k = &cam.intrinsics;
    let (xn, yn) = (q[0] / depth, q[1] / depth);
    let px = k[0][0] * xn + k[0][1] * yn + k[0][2];
    let py = k[1][1] * yn + k[1][2];
    let valid = (0.0..=cam.width).contains(&px) && (0.0..=cam.height).contains(&py);
    Projection {
        u: px / cam.width,
        v: py / cam.height,
        depth,
        valid,
    }
}

/// Channel-last feature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width * channels || height == 0 || width == 0 || channels == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width}x{channels} grid given {} values",
                values.len()
            )));
        }
        Ok(FeatureGrid {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    values.push(f(r, c, ch));
                }
            }
        }
        FeatureGrid {
            height,
            width,
            channels,
            values,
        }
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.values[start..start + self.channels]
    }

    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLevel {
    pub grid: FeatureGrid,
    /// Image pixels per feature cell.
    pub stride: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    levels: Vec<FeatureLevel>,
}

impl FeaturePyramid {
    pub fn new(levels: Vec<FeatureLevel>) -> Result<Self> {
        let Some(first) = levels.first() else {
            return Err(Error::ShapeMismatch("pyramid without levels".into()));
        };
        let channels = first.grid.channels;
        if levels.iter().any(|l| l.grid.channels != channels) {
            return Err(Error::ShapeMismatch("pyramid levels differ in channels".into()));
        }
        if levels.windows(2).any(|w| w[0].stride >= w[1].stride) {
            return Err(Error::InvalidParameter("pyramid strides must increase".into()));
        }
        Ok(FeaturePyramid { levels })
    }

    pub fn levels(&self) -> &[FeatureLevel] {
        &self.levels
    }

    pub fn channels(&self) -> usize {
        self.levels[0].grid.channels
    }
}

/// One of the four bilinear neighbours of a sampling location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub row: isize,
    pub col: isize,
    pub weight: f64,
}

impl Tap {
    fn inside(&self, grid: &FeatureGrid) -> Option<usize> {
        (self.row >= 0
            && self.col >= 0
            && (self.row as usize) < grid.height
            && (self.col as usize) < grid.width)
            .then(|| grid.cell_index(self.row as usize, self.col as usize))
    }
}

struct Stencil {
    taps: [Tap; 4],
    fx: f64,
    fy: f64,
}

fn stencil(grid: &FeatureGrid, u: f64, v: f64) -> Stencil {
    let gx = u * grid.width as f64 - 0.5;
    let gy = v * grid.height as f64 - 0.5;
    let x0 = gx.floor();
    let y0 = gy.floor();
    let fx = gx - x0;
    let fy = gy - y0;
    let (c0, r0) = (x0 as isize, y0 as isize);
    Stencil {
        taps: [
            Tap { row: r0, col: c0, weight: (1.0 - fx) * (1.0 - fy) },
            Tap { row: r0, col: c0 + 1, weight: fx * (1.0 - fy) },
            Tap { row: r0 + 1, col: c0, weight: (1.0 - fx) * fy },
            Tap { row: r0 + 1, col: c0 + 1, weight: fx * fy },
        ],
        fx,
        fy,
    }
}

fn add_scaled(acc: &mut [f64], values: &[f64], scale: f64) {
    for (a, v) in acc.iter_mut().zip(values) {
        *a += scale * v;
    }
}

/// Bilinear sample with zero padding outside the grid.
pub fn bilinear_sample(grid: &FeatureGrid, u: f64, v: f64) -> Vec<f64> {
    let mut out = vec![0.0; grid.channels];
    for tap in stencil(grid, u, v).taps {
        if let Some(idx) = tap.inside(grid) {
            let start = idx * grid.channels;
            add_scaled(&mut out, &grid.values[start..start + grid.channels], tap.weight);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrad {
    pub value: Vec<f64>,
    pub d_du: Vec<f64>,
    pub d_dv: Vec<f64>,
    /// Derivative of every output channel with respect to the same channel of
    /// each neighbour cell; taps outside the grid carry no gradient.
    pub taps: [Tap; 4],
}

/// Analytic derivatives of [`bilinear_sample`].
///
/// Valid away from integer cell coordinates, where the bilinear stencil
/// switches cells and the derivative jumps.
pub fn bilinear_sample_grad(grid: &FeatureGrid, u: f64, v: f64) -> SampleGrad {
    let st = stencil(grid, u, v);
    let ch = grid.channels;
    let fetch = |tap: &Tap| -> Option<&[f64]> {
        tap.inside(grid)
            .map(|idx| &grid.values[idx * ch..(idx + 1) * ch])
    };
    let zeros = vec![0.0; ch];
    let [t00, t01, t10, t11] = &st.taps;
    let v00 = fetch(t00).unwrap_or(&zeros);
    let v01 = fetch(t01).unwrap_or(&zeros);
    let v10 = fetch(t10).unwrap_or(&zeros);
    let v11 = fetch(t11).unwrap_or(&zeros);
    let (w, h) = (grid.width as f64, grid.height as f64);
    let (fx, fy) = (st.fx, st.fy);
    let mut value = vec![0.0; ch];
    let mut d_du = vec![0.0; ch];
    let mut d_dv = vec![0.0; ch];
    for c in 0..ch {
        value[c] = t00.weight * v00[c] + t01.weight * v01[c] + t10.weight * v10[c] + t11.weight * v11[c];
        d_du[c] = w * ((1.0 - fy) * (v01[c] - v00[c]) + fy * (v11[c] - v10[c]));
        d_dv[c] = h * ((1.0 - fx) * (v10[c] - v00[c]) + fx * (v11[c] - v01[c]));
    }
    SampleGrad {
        value,
        d_du,
        d_dv,
        taps: st.taps,
    }
}

/// Keypoints, per-(keypoint, view, level) offsets and weights for one
/// aggregation branch. Flat index is `(k * views + view) * levels + level`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePointSet {
    keypoints: Vec<Vec3>,
    views: usize,
    levels: usize,
    offsets: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

impl SamplePointSet {
    /// Weights must be finite and nonnegative; they are renormalized at
    /// aggregation time, so they need not sum to one.
    pub fn new(
        keypoints: Vec<Vec3>,
        views: usize,
        levels: usize,
        offsets: Vec<[f64; 2]>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let n = keypoints.len() * views * levels;
        if offsets.len() != n || weights.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "expected {n} offsets and weights, got {} and {}",
                offsets.len(),
                weights.len()
            )));
        }
        if offsets.iter().flatten().any(|o| !o.is_finite()) {
            return Err(Error::InvalidParameter("offsets must be finite".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter("weights must be finite and nonnegative".into()));
        }
        if keypoints.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("keypoints must be finite".into()));
        }
        Ok(SamplePointSet {
            keypoints,
            views,
            levels,
            offsets,
            weights,
        })
    }

    /// Same geometry with uniform weights and zero offsets.
    pub fn uniform(keypoints: Vec<Vec3>, views: usize, levels: usize) -> Self {
        let n = keypoints.len() * views * levels;
        let w = if n > 0 { 1.0 / n as f64 } else { 0.0 };
        SamplePointSet {
            keypoints,
            views,
            levels,
            offsets: vec![[0.0; 2]; n],
            weights: vec![w; n],
        }
    }

    pub fn index(&self, keypoint: usize, view: usize, level: usize) -> usize {
        (keypoint * self.views + view) * self.levels + level
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn keypoints(&self) -> &[Vec3] {
        &self.keypoints
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn offsets(&self) -> &[[f64; 2]] {
        &self.offsets
    }

    pub fn offsets_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.offsets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn is_normalized(&self) -> bool {
        (self.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9
    }
}

/// Lifts an element's resampled points to 3D at constant height `z`.
pub fn keypoints_from_element(e: &MapElement, n: usize, z: f64) -> Result<Vec<Vec3>> {
    Ok(fixed_length(e.points(), e.is_closed(), n)?
        .into_iter()
        .map(|p| [p.x, p.y, z])
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedFeature {
    pub values: Vec<f64>,
    /// Projection validity per `(keypoint, view)`, index `k * views + view`.
    pub valid: Vec<bool>,
}

impl AggregatedFeature {
    pub fn any_valid(&self) -> bool {
        self.valid.iter().any(|&v| v)
    }
}

fn check_inputs(pyramids: &[FeaturePyramid], cams: &[CameraModel], sp: &SamplePointSet) -> Result<usize> {
    if pyramids.len() != cams.len() || pyramids.len() != sp.views {
        return Err(Error::ShapeMismatch(format!(
            "{} pyramids, {} cameras, {} sample views",
            pyramids.len(),
            cams.len(),
            sp.views
        )));
    }
    let channels = pyramids.first().map_or(0, FeaturePyramid::channels);
    for (i, p) in pyramids.iter().enumerate() {
        if p.channels() != channels {
            return Err(Error::ShapeMismatch(format!(
                "view {i} has {} channels, expected {channels}",
                p.channels()
            )));
        }
        if p.levels.len() != sp.levels {
            return Err(Error::ShapeMismatch(format!(
                "view {i} has {} levels, sample set expects {}",
                p.levels.len(),
                sp.levels
            )));
        }
    }
    Ok(channels)
}

/// Partial result for one keypoint.
struct KeypointSum {
    values: Vec<f64>,
    weight: f64,
    valid: Vec<bool>,
}

fn keypoint_sum(
    k: usize,
    pyramids: &[FeaturePyramid],
    cams: &[CameraModel],
    sp: &SamplePointSet,
    channels: usize,
) -> KeypointSum {
    let mut values = vec![0.0; channels];
    let mut weight = 0.0;
    let mut valid = Vec::with_capacity(sp.views);
    for (view, (pyr, cam)) in pyramids.iter().zip(cams).enumerate() {
        let proj = project_point(sp.keypoints[k], cam);
        valid.push(proj.valid);
        if !proj.valid {
            continue;
        }
        for (level, lvl) in pyr.levels.iter().enumerate() {
            let t = sp.index(k, view, level);
            let [du, dv] = sp.offsets[t];
            let w = sp.weights[t];
            let s = bilinear_sample(&lvl.grid, proj.u + du, proj.v + dv);
            add_scaled(&mut values, &s, w);
            weight += w;
        }
    }
    KeypointSum {
        values,
        weight,
        valid,
    }
}

/// Weighted aggregation of sampled features over all keypoints, views and
/// levels, with weights renormalized over valid projections.
pub fn aggregate(
    pyramids: &[FeaturePyramid],
    cams: &[CameraModel],
    sp: &SamplePointSet,
) -> Result<AggregatedFeature> {
    let channels = check_inputs(pyramids, cams, sp)?;
    let partial = par::map_range(sp.keypoints.len(), |k| keypoint_sum(k, pyramids, cams, sp, channels));
    let mut values = vec![0.0; channels];
    let mut weight = 0.0;
    let mut valid = Vec::with_capacity(sp.keypoints.len() * sp.views);
    for p in partial {
        add_scaled(&mut values, &p.values, 1.0);
        weight += p.weight;
        valid.extend(p.valid);
    }
    if weight > 0.0 {
        values.iter_mut().for_each(|v| *v /= weight);
    } else {
        values.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(AggregatedFeature { values, valid })
}

/// Independent aggregation for the classification and regression branches.
pub fn decoupled_aggregate(
    pyramids: &[FeaturePyramid],
    cams: &[CameraModel],
    cls: &SamplePointSet,
    reg: &SamplePointSet,
) -> Result<(AggregatedFeature, AggregatedFeature)> {
    Ok((aggregate(pyramids, cams, cls)?, aggregate(pyramids, cams, reg)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateGrad {
    pub output: AggregatedFeature,
    /// Per sample: derivative of every output channel w.r.t. `(du, dv)`.
    pub d_offsets: Vec<[Vec<f64>; 2]>,
    /// Per sample: derivative of every output channel w.r.t. its raw weight.
    pub d_weights: Vec<Vec<f64>>,
    /// Per view and level, one coefficient per cell: the derivative of
    /// output channel `c` w.r.t. channel `c` of that cell (cross-channel
    /// derivatives are zero).
    pub d_features: Vec<Vec<Vec<f64>>>,
}

/// [`aggregate`] together with its analytic gradients.
#[allow(clippy::needless_range_loop)]
pub fn aggregate_with_grad(
    pyramids: &[FeaturePyramid],
    cams: &[CameraModel],
    sp: &SamplePointSet,
) -> Result<AggregateGrad> {
    let channels = check_inputs(pyramids, cams, sp)?;
    let n = sp.len();
    let mut grads: Vec<Option<SampleGrad>> = vec![None; n];
    let mut valid = Vec::with_capacity(sp.keypoints.len() * sp.views);
    let mut total_weight = 0.0;
    for k in 0..sp.keypoints.len() {
        for (view, (pyr, cam)) in pyramids.iter().zip(cams).enumerate() {
            let proj = project_point(sp.keypoints[k], cam);
            valid.push(proj.valid);
            if !proj.valid {
                continue;
            }
            for (level, lvl) in pyr.levels.iter().enumerate() {
                let t = sp.index(k, view, level);
                let [du, dv] = sp.offsets[t];
                grads[t] = Some(bilinear_sample_grad(&lvl.grid, proj.u + du, proj.v + dv));
                total_weight += sp.weights[t];
            }
        }
    }

    let mut values = vec![0.0; channels];
    if total_weight > 0.0 {
        for (t, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                add_scaled(&mut values, &g.value, sp.weights[t] / total_weight);
            }
        }
    }

    let mut d_offsets = vec![[vec![0.0; channels], vec![0.0; channels]]; n];
    let mut d_weights = vec![vec![0.0; channels]; n];
    let mut d_features: Vec<Vec<Vec<f64>>> = pyramids
        .iter()
        .map(|p| {
            p.levels
                .iter()
                .map(|l| vec![0.0; l.grid.height * l.grid.width])
                .collect()
        })
        .collect();
    if total_weight > 0.0 {
        for k in 0..sp.keypoints.len() {
            for view in 0..sp.views {
                for level in 0..sp.levels {
                    let t = sp.index(k, view, level);
                    let Some(g) = &grads[t] else { continue };
                    let share = sp.weights[t] / total_weight;
                    for c in 0..channels {
                        d_offsets[t][0][c] = share * g.d_du[c];
                        d_offsets[t][1][c] = share * g.d_dv[c];
                        d_weights[t][c] = (g.value[c] - values[c]) / total_weight;
                    }
                    let grid = &pyramids[view].levels[level].grid;
                    for tap in &g.taps {
                        if let Some(idx) = tap.inside(grid) {
                            d_features[view][level][idx] += share * tap.weight;
                        }
                    }
                }
            }
        }
    }

    Ok(AggregateGrad {
        output: AggregatedFeature { values, valid },
        d_offsets,
        d_weights,
        d_features,
    })
}
