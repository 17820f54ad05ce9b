//! Synthetic scene files: a straight road with lane dividers, road
//! boundaries and crossings, observed from an ego vehicle driving along it.

use anyhow::Result;
use mapforge::geometry::{clip_to_range, transform_to_frame};
use mapforge::rng::CounterRng;
use mapforge::{ClassLabel, EgoPose, MapElement, PerceptionRange, Point2};

use crate::records::{write_jsonl, PredictionRecord, SceneRecord};
use crate::{PredMode, SynthArgs};

const FRAME_STEP: f64 = 4.0;

fn world_map(rng: &mut CounterRng, length: f64) -> Result<Vec<MapElement>> {
    let lanes = 2 + (rng.next_u64() % 3) as usize;
    let lane_width = rng.uniform(3.0, 3.8);
    let half = lanes as f64 * lane_width / 2.0;
    let phase = rng.uniform(0.0, std::f64::consts::TAU);
    let sway = rng.uniform(0.0, 0.6);
    let line = |x0: f64| -> Vec<Point2> {
        let mut y = -40.0;
        let mut pts = Vec::new();
        while y <= length + 40.0 {
            pts.push(Point2::new(x0 + sway * (y / 25.0 + phase).sin(), y));
            y += 5.0;
        }
        pts
    };
    let mut out = Vec::new();
    out.push(MapElement::new(ClassLabel::Boundary, line(-half - 0.5))?);
    out.push(MapElement::new(ClassLabel::Boundary, line(half + 0.5))?);
    for k in 1..lanes {
        out.push(MapElement::new(ClassLabel::Divider, line(-half + k as f64 * lane_width))?);
    }
    let mut y = rng.uniform(0.0, 30.0);
    while y < length {
        let (x0, x1) = (-half + sway * (y / 25.0 + phase).sin(), half + sway * (y / 25.0 + phase).sin());
        out.push(MapElement::new(
            ClassLabel::PedCrossing,
            vec![
                Point2::new(x0, y),
                Point2::new(x1, y),
                Point2::new(x1, y + 4.0),
                Point2::new(x0, y + 4.0),
            ],
        )?);
        y += rng.uniform(35.0, 70.0);
    }
    Ok(out)
}

fn predictions(rng: &mut CounterRng, gts: &[MapElement], mode: PredMode) -> Option<Vec<PredictionRecord>> {
    let record = |element: MapElement, confidence: f64| PredictionRecord {
        element,
        confidence,
        scores: None,
    };
    match mode {
        PredMode::None => None,
        PredMode::Copy => Some(gts.iter().map(|e| record(e.clone(), 1.0)).collect()),
        PredMode::Noisy => {
            let mut out: Vec<PredictionRecord> = gts
                .iter()
                .map(|e| {
                    let (dx, dy) = (rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8));
                    let moved = mapforge::denoise::apply_location_noise(e, dx, dy);
                    record(moved, rng.uniform(0.3, 1.0))
                })
                .collect();
            if let Some(e) = gts.first() {
                let decoy = mapforge::denoise::apply_location_noise(e, 6.0, 0.0);
                out.push(record(decoy, rng.uniform(0.0, 0.5)));
            }
            Some(out)
        }
    }
}

/// Scene records of `frames` frames spread over `scenes` scenes.
pub fn scene_records(frames: usize, scenes: usize, seed: u64, mode: PredMode) -> Result<Vec<SceneRecord>> {
    let scenes = scenes.max(1);
    let per_scene = frames.div_ceil(scenes);
    let mut out = Vec::with_capacity(frames);
    for s in 0..scenes {
        let in_scene = per_scene.min(frames - out.len());
        if in_scene == 0 {
            break;
        }
        let mut rng = CounterRng::stream(seed, &[s as u64]);
        let map = world_map(&mut rng, in_scene as f64 * FRAME_STEP)?;
        let origin = EgoPose::new(0.0, 0.0, 0.0);
        for f in 0..in_scene {
            let mut frng = CounterRng::stream(seed, &[s as u64, f as u64 + 1]);
            let pose = EgoPose::new(frng.uniform(-0.5, 0.5), f as f64 * FRAME_STEP, frng.uniform(-0.05, 0.05));
            let elements: Vec<MapElement> = map
                .iter()
                .flat_map(|e| clip_to_range(&transform_to_frame(e, &origin, &pose), &PerceptionRange::BASE))
                .collect();
            let predictions = predictions(&mut frng, &elements, mode);
            out.push(SceneRecord {
                scene_id: format!("scene-{s:03}"),
                frame_id: format!("{f:03}"),
                ego_pose: pose,
                elements,
                predictions,
            });
        }
    }
    Ok(out)
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let records = scene_records(a.frames, a.scenes, a.seed, a.predictions)?;
    write_jsonl(&a.output, &records)?;
    let elements: usize = records.iter().map(|r| r.elements.len()).sum();
    eprintln!("wrote {} frames, {elements} elements to {}", records.len(), a.output.display());
    Ok(())
}
