//! Chamfer-distance average precision for vectorized map elements.
//!
//! Per class and threshold, predictions from all scenes are ranked by
//! confidence (stable on input order) and greedily matched to the closest
//! unmatched ground truth of the same scene whose Chamfer distance is below
//! the threshold. AP is the area under the precision envelope over every
//! recall step. Class AP averages thresholds and mAP averages classes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assign::fixed_length;
use crate::geometry::{ClassLabel, MapElement, Point2};
use crate::{par, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrediction")]
pub struct Prediction {
    pub element: MapElement,
    confidence: f64,
}

#[derive(Deserialize)]
struct RawPrediction {
    element: MapElement,
    confidence: f64,
}

impl TryFrom<RawPrediction> for Prediction {
    type Error = Error;
    fn try_from(raw: RawPrediction) -> Result<Self> {
        Prediction::new(raw.element, raw.confidence)
    }
}

impl Prediction {
    pub fn new(element: MapElement, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidParameter(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Prediction {
            element,
            confidence,
        })
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn class(&self) -> ClassLabel {
        self.element.class()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub thresholds: Vec<f64>,
    pub n_points: usize,
    pub classes: Vec<ClassLabel>,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec {
            thresholds: vec![0.5, 1.0, 1.5],
            n_points: 100,
            classes: vec![
                ClassLabel::PedCrossing,
                ClassLabel::Divider,
                ClassLabel::Boundary,
            ],
        }
    }
}

impl EvalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty()
            || self.thresholds.iter().any(|t| !(*t > 0.0 && t.is_finite()))
            || self.thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidParameter(format!(
                "thresholds must be positive and strictly increasing: {:?}",
                self.thresholds
            )));
        }
        if self.n_points < 2 {
            return Err(Error::InvalidParameter("n_points must be at least 2".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::InvalidParameter("no classes to evaluate".into()));
        }
        Ok(())
    }
}

/// Symmetric Chamfer distance between two equal-or-unequal point sets.
pub fn chamfer_points(a: &[Point2], b: &[Point2]) -> f64 {
    let directed = |from: &[Point2], to: &[Point2]| {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| p.distance(*q))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / from.len() as f64
    };
    0.5 * (directed(a, b) + directed(b, a))
}

/// Chamfer distance after bringing both elements to `n` points.
pub fn chamfer_distance(a: &MapElement, b: &MapElement, n: usize) -> Result<f64> {
    let pa = fixed_length(a.points(), a.is_closed(), n)?;
    let pb = fixed_length(b.points(), b.is_closed(), n)?;
    Ok(chamfer_points(&pa, &pb))
}

/// AP with the convention flag for classes with no ground truth and no
/// predictions, which score 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApOutcome {
    pub ap: f64,
    pub empty_convention: bool,
}

/// Area under the precision envelope for a ranked list of TP/FP flags.
pub fn envelope_ap(ranked_tp: &[bool], num_gt: usize) -> ApOutcome {
    if num_gt == 0 {
        return ApOutcome {
            ap: if ranked_tp.is_empty() { 1.0 } else { 0.0 },
            empty_convention: ranked_tp.is_empty(),
        };
    }
    let mut tp = 0usize;
    let precision: Vec<f64> = ranked_tp
        .iter()
        .enumerate()
        .map(|(k, &hit)| {
            tp += hit as usize;
            tp as f64 / (k + 1) as f64
        })
        .collect();
    let mut envelope = 0.0f64;
    let mut area = 0.0;
    for (k, &hit) in ranked_tp.iter().enumerate().rev() {
        envelope = envelope.max(precision[k]);
        if hit {
            area += envelope;
        }
    }
    ApOutcome {
        ap: area / num_gt as f64,
        empty_convention: false,
    }
}

/// Ranked predictions and Chamfer distances for one class, reusable across
/// thresholds.
struct ClassTable {
    /// `(scene, confidence, distances to that scene's class GTs)`, ranked.
    ranked: Vec<(usize, Vec<f64>)>,
    gts_per_scene: Vec<usize>,
    num_gt: usize,
}

impl ClassTable {
    fn build(
        preds: &[Vec<Prediction>],
        gts: &[Vec<MapElement>],
        class: ClassLabel,
        n: usize,
    ) -> Result<Self> {
        if preds.len() != gts.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} prediction scenes vs {} ground-truth scenes",
                preds.len(),
                gts.len()
            )));
        }
        let scenes: Vec<usize> = (0..gts.len()).collect();
        let per_scene = par::map(&scenes, |&s| -> Result<_> {
            let g: Vec<Vec<Point2>> = gts[s]
                .iter()
                .filter(|e| e.class() == class)
                .map(|e| fixed_length(e.points(), e.is_closed(), n))
                .collect::<Result<_>>()?;
            let rows = preds[s]
                .iter()
                .filter(|p| p.class() == class)
                .map(|p| {
                    let pts = fixed_length(p.element.points(), p.element.is_closed(), n)?;
                    let d = g.iter().map(|q| chamfer_points(&pts, q)).collect();
                    Ok((p.confidence, d))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((g.len(), rows))
        });

        let mut gts_per_scene = Vec::with_capacity(per_scene.len());
        let mut entries = Vec::new();
        for (s, item) in per_scene.into_iter().enumerate() {
            let (num, rows) = item?;
            gts_per_scene.push(num);
            entries.extend(rows.into_iter().map(|(conf, d)| (s, conf, d)));
        }
        entries.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(ClassTable {
            ranked: entries.into_iter().map(|(s, _, d)| (s, d)).collect(),
            num_gt: gts_per_scene.iter().sum(),
            gts_per_scene,
        })
    }

    fn ap(&self, threshold: f64) -> ApOutcome {
        let mut taken: Vec<Vec<bool>> = self.gts_per_scene.iter().map(|&n| vec![false; n]).collect();
        let flags: Vec<bool> = self
            .ranked
            .iter()
            .map(|(s, dists)| {
                let mut best: Option<usize> = None;
                for (j, &d) in dists.iter().enumerate() {
                    if taken[*s][j] || !(d < threshold) {
                        continue;
                    }
                    if best.is_none_or(|b| d < dists[b]) {
                        best = Some(j);
                    }
                }
                if let Some(j) = best {
                    taken[*s][j] = true;
                }
                best.is_some()
            })
            .collect();
        envelope_ap(&flags, self.num_gt)
    }
}

/// AP of one class at one Chamfer threshold; outer slices are scenes.
pub fn ap_at_threshold(
    preds: &[Vec<Prediction>],
    gts: &[Vec<MapElement>],
    class: ClassLabel,
    threshold: f64,
    n: usize,
) -> Result<ApOutcome> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter(format!("threshold {threshold}")));
    }
    Ok(ClassTable::build(preds, gts, class, n)?.ap(threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub thresholds: Vec<f64>,
    pub ap: Vec<f64>,
    pub class_ap: f64,
}

/// Evaluation settings and conventions recorded alongside the numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub thresholds: Vec<f64>,
    pub n_points: usize,
    pub classes: Vec<ClassLabel>,
    pub matching: String,
    pub ap_rule: String,
    /// Classes without ground truth or predictions, scored 1 by convention.
    pub empty_classes: Vec<ClassLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub classes: BTreeMap<ClassLabel, ClassAp>,
    pub map: f64,
    pub spec: ReportMeta,
}

impl ApReport {
    /// mAP as a percentage with one decimal, as printed in result tables.
    pub fn map_percent(&self) -> String {
        format_percent(self.map)
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Formats a ratio as a one-decimal percentage.
pub fn format_percent(ratio: f64) -> String {
    format!("{:.1}", ratio * 100.0)
}

/// Evaluates all classes in `spec` over a set of scenes.
pub fn evaluate(preds: &[Vec<Prediction>], gts: &[Vec<MapElement>], spec: &EvalSpec) -> Result<ApReport> {
    spec.validate()?;
    let listed = |c: ClassLabel| spec.classes.contains(&c);
    let stray = gts
        .iter()
        .flatten()
        .map(MapElement::class)
        .chain(preds.iter().flatten().map(Prediction::class))
        .find(|&c| !listed(c));
    if let Some(c) = stray {
        return Err(Error::UnknownClass(c.to_string()));
    }

    let mut classes = BTreeMap::new();
    let mut empty_classes = Vec::new();
    let mut class_aps = Vec::with_capacity(spec.classes.len());
    for &class in &spec.classes {
        let table = ClassTable::build(preds, gts, class, spec.n_points)?;
        let outcomes: Vec<ApOutcome> = spec.thresholds.iter().map(|&t| table.ap(t)).collect();
        if outcomes.iter().any(|o| o.empty_convention) {
            empty_classes.push(class);
        }
        let ap: Vec<f64> = outcomes.iter().map(|o| o.ap).collect();
        let class_ap = mean(&ap);
        class_aps.push(class_ap);
        classes.insert(
            class,
            ClassAp {
                thresholds: spec.thresholds.clone(),
                ap,
                class_ap,
            },
        );
    }
    Ok(ApReport {
        classes,
        map: mean(&class_aps),
        spec: ReportMeta {
            thresholds: spec.thresholds.clone(),
            n_points: spec.n_points,
            classes: spec.classes.clone(),
            matching: "greedy by confidence, lowest chamfer distance below threshold".into(),
            ap_rule: "all-point precision envelope".into(),
            empty_classes,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(class: ClassLabel, a: (f64, f64), b: (f64, f64)) -> MapElement {
        MapElement::new(class, vec![Point2::new(a.0, a.1), Point2::new(b.0, b.1)]).unwrap()
    }

    #[test]
    fn chamfer_examples() {
        let a = seg(ClassLabel::Divider, (0.0, 0.0), (1.0, 0.0));
        assert_eq!(chamfer_distance(&a, &a, 20).unwrap(), 0.0);
        let b = seg(ClassLabel::Divider, (0.0, 5.0), (1.0, 5.0));
        assert!((chamfer_distance(&a, &b, 20).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn envelope_hand_case() {
        assert_eq!(envelope_ap(&[false, true], 1).ap, 0.5);
        assert_eq!(envelope_ap(&[true, true], 2).ap, 1.0);
        assert_eq!(envelope_ap(&[], 3).ap, 0.0);
        let empty = envelope_ap(&[], 0);
        assert_eq!(empty.ap, 1.0);
        assert!(empty.empty_convention);
        assert_eq!(envelope_ap(&[false], 0).ap, 0.0);
        // precision 1, 1/2, 2/3 -> envelope 1, 2/3, 2/3
        assert!((envelope_ap(&[true, false, true], 2).ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn decoy_before_match() {
        let gt = seg(ClassLabel::Divider, (0.0, 0.0), (4.0, 0.0));
        let decoy = Prediction::new(seg(ClassLabel::Divider, (0.0, 20.0), (4.0, 20.0)), 0.95).unwrap();
        let hit = Prediction::new(gt.clone(), 0.90).unwrap();
        let ap = ap_at_threshold(&[vec![decoy, hit]], &[vec![gt]], ClassLabel::Divider, 0.5, 50).unwrap();
        assert_eq!(ap.ap, 0.5);
    }

    #[test]
    fn perfect_report() {
        let gts = vec![vec![
            seg(ClassLabel::Divider, (0.0, 0.0), (4.0, 0.0)),
            seg(ClassLabel::Divider, (0.0, 3.0), (4.0, 3.0)),
        ]];
        let preds = vec![gts[0]
            .iter()
            .map(|e| Prediction::new(e.clone(), 1.0).unwrap())
            .collect()];
        let spec = EvalSpec {
            thresholds: vec![1.0],
            n_points: 10,
            classes: vec![ClassLabel::Divider],
        };
        let r = evaluate(&preds, &gts, &spec).unwrap();
        assert_eq!(r.map, 1.0);
        assert_eq!(r.classes[&ClassLabel::Divider].ap, vec![1.0]);
        assert_eq!(r.map_percent(), "100.0");
    }

    #[test]
    fn table_averages() {
        assert_eq!(format_percent(mean(&[0.562, 0.598, 0.601])), "58.7");
        assert_eq!(format_percent(mean(&[0.626, 0.670, 0.661])), "65.2");
    }

    #[test]
    fn validation() {
        assert!(Prediction::new(seg(ClassLabel::Divider, (0.0, 0.0), (1.0, 0.0)), 1.5).is_err());
        let spec = EvalSpec {
            thresholds: vec![1.0, 0.5],
            ..Default::default()
        };
        assert!(spec.validate().is_err());
        let gts = vec![vec![seg(ClassLabel::Centerline, (0.0, 0.0), (1.0, 0.0))]];
        let err = evaluate(&[vec![]], &gts, &EvalSpec::default()).unwrap_err();
        assert!(matches!(err, Error::UnknownClass(_)));
        assert!(evaluate(&[], &gts, &EvalSpec {
            classes: ClassLabel::ALL.to_vec(),
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn report_json_fields() {
        let spec = EvalSpec {
            classes: vec![ClassLabel::Boundary],
            ..Default::default()
        };
        let r = evaluate(&[vec![]], &[vec![]], &spec).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["map"], 1.0);
        assert_eq!(v["classes"]["boundary"]["class_ap"], 1.0);
        assert_eq!(v["classes"]["boundary"]["thresholds"][2], 1.5);
        assert_eq!(v["spec"]["empty_classes"][0], "boundary");
    }
}
