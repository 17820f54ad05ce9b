use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mapforge::assign::{match_predictions, Assignment, CostSpec};
use mapforge::denoise::{generate_denoise_groups, DenoiseGroup, NoiseSpec};
use mapforge::eval::{evaluate, EvalSpec, Prediction};
use mapforge::raster::{rasterize_elements, RasterSpec};
use mapforge::{par, ClassLabel, MapElement, PerceptionRange};
use serde::Serialize;

use crate::records::{pair_frames, predictions_of, read_scenes, write_json, write_jsonl};
use crate::{parse_classes, parse_list, EvalArgs, GenNoiseArgs, MatchArgs, RasterizeArgs};

#[derive(Serialize)]
struct NoiseFrame {
    scene_id: String,
    frame_id: String,
    groups: Vec<DenoiseGroup>,
}

pub fn gen_noise(a: &GenNoiseArgs) -> Result<()> {
    let spec = NoiseSpec {
        rot_max: a.rot_max_deg.to_radians(),
        trans_max: a.trans_max,
        scale_min: a.scale_min,
        scale_max: a.scale_max,
        curv_min: a.curv_min,
        curv_max: a.curv_max,
        groups: a.groups,
        seed: a.seed,
    };
    spec.validate()?;
    let scenes = read_scenes(&a.input)?;
    let rows = par::map(&scenes, |r| {
        generate_denoise_groups(&r.elements, &spec)
            .with_context(|| format!("frame {}/{}", r.scene_id, r.frame_id))
            .map(|groups| NoiseFrame {
                scene_id: r.scene_id.clone(),
                frame_id: r.frame_id.clone(),
                groups,
            })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    write_jsonl(&a.output, &rows)?;
    eprintln!("wrote {} frames x {} groups to {}", rows.len(), a.groups, a.output.display());
    Ok(())
}

pub fn parse_range(s: &str) -> Result<PerceptionRange> {
    let v = parse_list(s)?;
    if v.len() != 4 {
        bail!("range needs four values x_min,x_max,y_min,y_max, got {s:?}");
    }
    Ok(PerceptionRange::new(v[0], v[1], v[2], v[3])?)
}

#[derive(Serialize)]
struct MaskHeader {
    height: usize,
    width: usize,
    resolution: f64,
    range: [f64; 4],
    classes: Vec<ClassLabel>,
}

/// File-name-safe rendering of an id.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

pub fn rasterize(a: &RasterizeArgs) -> Result<()> {
    let range = parse_range(&a.range)?;
    let spec = RasterSpec {
        resolution: a.resolution,
        line_half_width: a.half_width,
        fill_polygons: !a.no_fill,
    };
    spec.validate()?;
    let scenes = read_scenes(&a.input)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let written = par::map(&scenes, |r| -> Result<()> {
        let grid = rasterize_elements(&r.elements, &spec, &range)?;
        let stem = format!("{}_{}", file_stem(&r.scene_id), file_stem(&r.frame_id));
        let header = MaskHeader {
            height: grid.height,
            width: grid.width,
            resolution: grid.resolution,
            range: [range.x_min, range.x_max, range.y_min, range.y_max],
            classes: ClassLabel::ALL.to_vec(),
        };
        write_json(&a.out_dir.join(format!("{stem}.json")), &header)?;
        let bin = a.out_dir.join(format!("{stem}.bin"));
        fs::write(&bin, &grid.data).with_context(|| format!("cannot write {}", bin.display()))?;
        Ok(())
    });
    written.into_iter().collect::<Result<Vec<_>>>()?;
    eprintln!("wrote {} masks to {}", scenes.len(), a.out_dir.display());
    Ok(())
}

/// Ground truth and predictions per frame, in ground-truth order.
type FramePairs = (Vec<Vec<MapElement>>, Vec<Vec<Prediction>>);

fn load_pairs(gt: &Path, pred: &Path) -> Result<FramePairs> {
    let gt = read_scenes(gt)?;
    let pred = read_scenes(pred)?;
    let mut gts = Vec::with_capacity(gt.len());
    let mut preds = Vec::with_capacity(gt.len());
    for (g, p) in pair_frames(&gt, &pred)? {
        gts.push(g.elements.clone());
        preds.push(
            predictions_of(p)
                .iter()
                .map(|r| r.to_prediction())
                .collect::<mapforge::Result<Vec<_>>>()?,
        );
    }
    Ok((gts, preds))
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let spec = EvalSpec {
        thresholds: parse_list(&a.thresholds)?,
        n_points: a.points,
        classes: parse_classes(&a.classes)?,
    };
    let (gts, preds) = load_pairs(&a.gt, &a.pred)?;
    let report = evaluate(&preds, &gts, &spec)?;
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    for (class, ap) in &report.classes {
        println!("{class}: {}", mapforge::eval::format_percent(ap.class_ap));
    }
    println!("mAP: {}", report.map_percent());
    Ok(())
}

#[derive(Serialize)]
struct MatchFrame {
    scene_id: String,
    frame_id: String,
    #[serde(flatten)]
    assignment: Assignment,
}

pub fn match_frames(a: &MatchArgs) -> Result<()> {
    let spec = CostSpec {
        w_cls: a.w_cls,
        w_pts: a.w_pts,
        n_points: a.points,
    };
    spec.validate()?;
    let gt = read_scenes(&a.gt)?;
    let pred = read_scenes(&a.pred)?;
    let pairs = pair_frames(&gt, &pred)?;
    let rows = par::map(&pairs, |(g, p)| {
        let scored: Vec<_> = predictions_of(p).iter().map(|r| r.to_scored()).collect();
        match_predictions(&scored, &g.elements, &spec)
            .with_context(|| format!("frame {}/{}", g.scene_id, g.frame_id))
            .map(|assignment| MatchFrame {
                scene_id: g.scene_id.clone(),
                frame_id: g.frame_id.clone(),
                assignment,
            })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    write_jsonl(&a.out, &rows)?;
    let matched: usize = rows.iter().map(|r| r.assignment.pairs.len()).sum();
    eprintln!("matched {matched} pairs over {} frames", rows.len());
    Ok(())
}
