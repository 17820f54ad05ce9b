//! Self-measured throughput and the feature-aggregation demo.

use std::time::{Duration, Instant};

use anyhow::Result;
use mapforge::dfa::{
    aggregate_with_grad, decoupled_aggregate, keypoints_from_element, CameraModel, FeatureGrid, FeatureLevel,
    FeaturePyramid, SamplePointSet,
};
use mapforge::eval::{evaluate, EvalSpec, Prediction};
use mapforge::raster::{rasterize_elements, RasterSpec};
use mapforge::rng::CounterRng;
use mapforge::{ClassLabel, PerceptionRange};
use serde::Serialize;

use crate::records::{predictions_of, write_jsonl};
use crate::synth::scene_records;
use crate::{BenchArgs, PredMode, ProjectArgs, Suite};

const IMAGE_W: f64 = 704.0;
const IMAGE_H: f64 = 256.0;

/// Surround rig at the ego origin with deterministic random features.
pub fn synthetic_rig(seed: u64, views: usize, levels: usize, channels: usize) -> Result<(Vec<CameraModel>, Vec<FeaturePyramid>)> {
    let mut cams = Vec::with_capacity(views);
    let mut pyramids = Vec::with_capacity(views);
    for v in 0..views {
        let heading = std::f64::consts::FRAC_PI_2 + std::f64::consts::TAU * v as f64 / views as f64;
        cams.push(CameraModel::looking_along(heading, [0.0, 0.0, 1.6], 300.0, IMAGE_W, IMAGE_H)?);
        let mut lv = Vec::with_capacity(levels);
        for l in 0..levels {
            let stride = 8.0 * (1u32 << l) as f64;
            let (h, w) = ((IMAGE_H / stride) as usize, (IMAGE_W / stride) as usize);
            let rng = CounterRng::stream(seed, &[v as u64, l as u64]);
            let values = (0..h * w * channels)
                .map(|i| 2.0 * (rng.at(i as u64) >> 11) as f64 / (1u64 << 53) as f64 - 1.0)
                .collect();
            lv.push(FeatureLevel {
                grid: FeatureGrid::new(h, w, channels, values)?,
                stride,
            });
        }
        pyramids.push(FeaturePyramid::new(lv)?);
    }
    Ok((cams, pyramids))
}

/// Sample set over `keypoints` with small deterministic offsets.
fn jittered(keypoints: Vec<[f64; 3]>, views: usize, levels: usize, rng: &mut CounterRng) -> Result<SamplePointSet> {
    let n = keypoints.len() * views * levels;
    let offsets = (0..n).map(|_| [rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02)]).collect();
    let weights = (0..n).map(|_| rng.uniform(0.1, 1.0)).collect();
    Ok(SamplePointSet::new(keypoints, views, levels, offsets, weights)?)
}

fn machine_info() -> String {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    #[cfg(feature = "parallel")]
    let workers = rayon::current_num_threads();
    #[cfg(not(feature = "parallel"))]
    let workers = 1;
    format!(
        "{}-{}, {cores} cores, {workers} workers, mapforge {}",
        std::env::consts::OS,
        std::env::consts::ARCH,
        mapforge::VERSION
    )
}

/// Best wall time over `repeats` runs.
fn best_of(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<Duration> {
    let mut best = Duration::MAX;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        f()?;
        best = best.min(start.elapsed());
    }
    Ok(best)
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    println!("machine: {}", machine_info());
    match a.suite {
        Suite::Raster => {
            let frames = scene_records(a.size, 4, a.seed, PredMode::None)?;
            let spec = RasterSpec::default();
            let range = PerceptionRange::BASE;
            let elements: usize = frames.iter().map(|f| f.elements.len()).sum();
            let mut pixels = 0usize;
            let t = best_of(a.repeats, || {
                pixels = 0;
                for f in &frames {
                    pixels += rasterize_elements(&f.elements, &spec, &range)?.data.len();
                }
                Ok(())
            })?;
            let s = t.as_secs_f64();
            println!("suite: raster, frames: {}, elements: {elements}", frames.len());
            println!("time: {:.3} ms", s * 1e3);
            println!("throughput: {:.0} elements/s, {:.0} pixels/s", elements as f64 / s, pixels as f64 / s);
        }
        Suite::Eval => {
            let frames = scene_records(a.size, 4, a.seed, PredMode::Noisy)?;
            let gts: Vec<_> = frames.iter().map(|f| f.elements.clone()).collect();
            let preds: Vec<Vec<Prediction>> = frames
                .iter()
                .map(|f| predictions_of(f).iter().map(|p| p.to_prediction()).collect())
                .collect::<mapforge::Result<_>>()?;
            let elements: usize = preds.iter().map(Vec::len).sum();
            let spec = EvalSpec::default();
            let mut map = 0.0;
            let t = best_of(a.repeats, || {
                map = evaluate(&preds, &gts, &spec)?.map;
                Ok(())
            })?;
            let s = t.as_secs_f64();
            println!("suite: eval, frames: {}, elements: {elements}, mAP: {}", frames.len(), mapforge::eval::format_percent(map));
            println!("time: {:.3} ms", s * 1e3);
            println!("throughput: {:.0} elements/s", elements as f64 / s);
        }
        Suite::Dfa => {
            let (views, levels) = (6, 3);
            let (cams, pyramids) = synthetic_rig(a.seed, views, levels, 32)?;
            let mut rng = CounterRng::stream(a.seed, &[u64::MAX]);
            let keypoints = (0..a.size)
                .map(|_| [rng.uniform(-15.0, 15.0), rng.uniform(-30.0, 30.0), 0.0])
                .collect();
            let sp = jittered(keypoints, views, levels, &mut rng)?;
            let t = best_of(a.repeats, || {
                aggregate_with_grad(&pyramids, &cams, &sp)?;
                Ok(())
            })?;
            let s = t.as_secs_f64();
            println!("suite: dfa, keypoints: {}, samples: {}", a.size, sp.len());
            println!("time: {:.3} ms", s * 1e3);
            println!("throughput: {:.0} samples/s", sp.len() as f64 / s);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ProjectedElement {
    index: usize,
    class: ClassLabel,
    visible_views: usize,
    cls: Vec<f64>,
    reg: Vec<f64>,
}

pub fn project(a: &ProjectArgs) -> Result<()> {
    let frame = scene_records(1, 1, a.seed, PredMode::None)?.remove(0);
    let (cams, pyramids) = synthetic_rig(a.seed, a.views, a.levels, a.channels)?;
    let mut rng = CounterRng::stream(a.seed, &[u64::MAX - 1]);
    let mut rows = Vec::with_capacity(frame.elements.len());
    for (index, e) in frame.elements.iter().enumerate() {
        let kps = keypoints_from_element(e, a.points, a.z)?;
        let cls = SamplePointSet::uniform(kps.clone(), a.views, a.levels);
        let reg = jittered(kps, a.views, a.levels, &mut rng)?;
        let (c, r) = decoupled_aggregate(&pyramids, &cams, &cls, &reg)?;
        let visible_views = (0..a.views)
            .filter(|v| c.valid.iter().skip(*v).step_by(a.views).any(|&x| x))
            .count();
        rows.push(ProjectedElement {
            index,
            class: e.class(),
            visible_views,
            cls: c.values,
            reg: r.values,
        });
    }
    match &a.out {
        Some(path) => write_jsonl(path, &rows)?,
        None => {
            for row in &rows {
                println!("{}", serde_json::to_string(row)?);
            }
        }
    }
    Ok(())
}
