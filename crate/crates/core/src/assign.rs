//! Permutation-equivalent point-set costs and one-to-one prediction to
//! ground-truth assignment.
//!
//! An open line is the same element whichever end it starts from; a polygon
//! is the same whichever vertex it starts from and whichever way it winds.
//! The point cost is the minimum over those equivalent orderings of the mean
//! point-wise L1 distance between fixed-length point sequences.

use serde::{Deserialize, Serialize};

use crate::geometry::{resample_polyline, ClassLabel, MapElement, Point2};
use crate::hungarian::{hungarian, CostMatrix};
use crate::{par, Error, Result};

/// Sequences that already have exactly `n` points are used as they are;
/// anything else is resampled uniformly to `n` points.
pub fn fixed_length(points: &[Point2], closed: bool, n: usize) -> Result<Vec<Point2>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "point count must be at least 2, got {n}"
        )));
    }
    if points.len() == n {
        Ok(points.to_vec())
    } else {
        resample_polyline(points, n, closed)
    }
}

/// One ordering of the ground-truth sequence: start offset and direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Variant {
    pub shift: usize,
    pub reversed: bool,
}

impl Variant {
    pub const FORWARD: Variant = Variant {
        shift: 0,
        reversed: false,
    };

    /// Index into the ground-truth sequence for output position `i`.
    pub fn source_index(self, i: usize, n: usize) -> usize {
        if self.reversed {
            (self.shift + n - i) % n
        } else {
            (i + self.shift) % n
        }
    }

    /// Every equivalent ordering: forward then reversed for open lines; all
    /// cyclic shifts forward, then all shifts reversed for polygons.
    pub fn all(n: usize, closed: bool) -> Vec<Variant> {
        if closed {
            let forward = (0..n).map(|shift| Variant {
                shift,
                reversed: false,
            });
            let backward = (0..n).map(|shift| Variant {
                shift,
                reversed: true,
            });
            forward.chain(backward).collect()
        } else {
            vec![
                Variant::FORWARD,
                Variant {
                    shift: n - 1,
                    reversed: true,
                },
            ]
        }
    }

    /// Applies this ordering to a sequence.
    pub fn apply<T: Copy>(self, seq: &[T]) -> Vec<T> {
        let n = seq.len();
        (0..n).map(|i| seq[self.source_index(i, n)]).collect()
    }
}

/// Minimum mean L1 distance over the equivalent orderings of `gt`, for two
/// sequences of equal length. Ties keep the earliest variant.
pub fn sequence_cost(pred: &[Point2], gt: &[Point2], gt_closed: bool) -> Result<(f64, Variant)> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "sequences of length {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    let n = gt.len();
    let mut best = (f64::INFINITY, Variant::FORWARD);
    for variant in Variant::all(n, gt_closed) {
        let sum: f64 = pred
            .iter()
            .enumerate()
            .map(|(i, p)| p.l1_distance(gt[variant.source_index(i, n)]))
            .sum();
        let cost = sum / n as f64;
        if cost < best.0 {
            best = (cost, variant);
        }
    }
    Ok(best)
}

/// Permutation-equivalent point cost between a prediction and a
/// ground-truth element, both brought to `n` points.
pub fn point_set_cost(pred: &MapElement, gt: &MapElement, n: usize) -> Result<(f64, Variant)> {
    let p = fixed_length(pred.points(), pred.is_closed(), n)?;
    let g = fixed_length(gt.points(), gt.is_closed(), n)?;
    sequence_cost(&p, &g, gt.is_closed())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub w_cls: f64,
    pub w_pts: f64,
    pub n_points: usize,
}

impl Default for CostSpec {
    fn default() -> Self {
        CostSpec {
            w_cls: 2.0,
            w_pts: 5.0,
            n_points: 20,
        }
    }
}

impl CostSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.w_cls >= 0.0
            && self.w_pts >= 0.0
            && self.w_cls.is_finite()
            && self.w_pts.is_finite()
            && self.n_points >= 2;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid cost spec {self:?}")))
        }
    }
}

/// A prediction with one score per class, in [`ClassLabel::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredElement {
    pub element: MapElement,
    pub scores: [f64; 4],
}

impl ScoredElement {
    /// Puts `confidence` on the element's own class and zero elsewhere.
    pub fn one_hot(element: MapElement, confidence: f64) -> Self {
        let mut scores = [0.0; 4];
        scores[element.class().index()] = confidence;
        ScoredElement { element, scores }
    }

    pub fn score(&self, class: ClassLabel) -> f64 {
        self.scores[class.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred_index: usize,
    pub gt_index: usize,
    /// Total matching cost of this pair.
    pub cost: f64,
    /// Mean L1 point cost of the best ordering.
    pub point_cost: f64,
    pub best_variant: Variant,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Assignment {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

struct PairCost {
    total: f64,
    point_cost: f64,
    variant: Variant,
}

/// Optimal one-to-one assignment of predictions to ground truth under
/// `w_cls * (-score[gt class]) + w_pts * point cost`.
pub fn match_predictions(
    preds: &[ScoredElement],
    gts: &[MapElement],
    spec: &CostSpec,
) -> Result<Assignment> {
    spec.validate()?;
    let n = spec.n_points;
    let gt_seqs = gts
        .iter()
        .map(|g| fixed_length(g.points(), g.is_closed(), n))
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<Result<Vec<PairCost>>> = par::map(preds, |pred| {
        let p = fixed_length(pred.element.points(), pred.element.is_closed(), n)?;
        gts.iter()
            .zip(&gt_seqs)
            .map(|(gt, g)| {
                let (point_cost, variant) = sequence_cost(&p, g, gt.is_closed())?;
                Ok(PairCost {
                    total: -spec.w_cls * pred.score(gt.class()) + spec.w_pts * point_cost,
                    point_cost,
                    variant,
                })
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let flat: Vec<f64> = rows.iter().flatten().map(|c| c.total).collect();
    let matrix = CostMatrix::new(preds.len(), gts.len(), flat)?;
    let solution = hungarian(&matrix);

    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let pairs = solution
        .pairs
        .iter()
        .map(|&(p, g)| {
            pred_used[p] = true;
            gt_used[g] = true;
            let c = &rows[p][g];
            MatchedPair {
                pred_index: p,
                gt_index: g,
                cost: c.total,
                point_cost: c.point_cost,
                best_variant: c.variant,
            }
        })
        .collect();
    let unused = |used: &[bool]| {
        used.iter()
            .enumerate()
            .filter(|(_, &u)| !u)
            .map(|(i, _)| i)
            .collect()
    };
    Ok(Assignment {
        pairs,
        unmatched_preds: unused(&pred_used),
        unmatched_gts: unused(&gt_used),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn element(class: ClassLabel, v: &[(f64, f64)]) -> MapElement {
        MapElement::new(class, v.iter().map(|&(x, y)| Point2::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn variant_indexing() {
        let seq = [0, 1, 2, 3];
        assert_eq!(Variant::FORWARD.apply(&seq), vec![0, 1, 2, 3]);
        let all_open = Variant::all(4, false);
        assert_eq!(all_open[1].apply(&seq), vec![3, 2, 1, 0]);
        let closed = Variant::all(4, true);
        assert_eq!(closed.len(), 8);
        assert_eq!(closed[1].apply(&seq), vec![1, 2, 3, 0]);
        assert_eq!(closed[4].apply(&seq), vec![0, 3, 2, 1]);
        assert_eq!(closed[6].apply(&seq), vec![2, 1, 0, 3]);
    }

    #[test]
    fn identical_and_reversed() {
        let gt = element(ClassLabel::Divider, &[(0.0, 0.0), (1.0, 2.0), (3.0, 2.5)]);
        let (c, v) = point_set_cost(&gt, &gt, 10).unwrap();
        assert_eq!(c, 0.0);
        assert_eq!(v, Variant::FORWARD);
        let rev = element(ClassLabel::Divider, &[(3.0, 2.5), (1.0, 2.0), (0.0, 0.0)]);
        let (c, v) = point_set_cost(&rev, &gt, 3).unwrap();
        assert_eq!(c, 0.0);
        assert!(v.reversed);
    }

    #[test]
    fn polygon_shift() {
        let gt = element(
            ClassLabel::PedCrossing,
            &[(0.0, 0.0), (4.0, 0.0), (4.0, 1.0), (3.0, 2.0), (0.0, 2.0)],
        );
        let shifted = element(
            ClassLabel::PedCrossing,
            &[(4.0, 1.0), (3.0, 2.0), (0.0, 2.0), (0.0, 0.0), (4.0, 0.0)],
        );
        let (c, v) = point_set_cost(&shifted, &gt, 5).unwrap();
        assert_eq!(c, 0.0);
        assert_eq!(v, Variant { shift: 2, reversed: false });
    }

    #[test]
    fn sequence_length_mismatch() {
        let a = [Point2::new(0.0, 0.0)];
        assert!(sequence_cost(&a, &[], false).is_err());
    }

    #[test]
    fn identity_matching() {
        let gts = vec![
            element(ClassLabel::Divider, &[(0.0, 0.0), (5.0, 0.0)]),
            element(ClassLabel::Boundary, &[(0.0, 3.0), (5.0, 4.0)]),
            element(ClassLabel::PedCrossing, &[(1.0, 1.0), (2.0, 1.0), (2.0, 2.0)]),
        ];
        let preds: Vec<_> = gts
            .iter()
            .cloned()
            .map(|e| ScoredElement::one_hot(e, 1.0))
            .collect();
        let a = match_predictions(&preds, &gts, &CostSpec::default()).unwrap();
        assert_eq!(a.pairs.len(), 3);
        for (i, p) in a.pairs.iter().enumerate() {
            assert_eq!((p.pred_index, p.gt_index), (i, i));
            assert_eq!(p.point_cost, 0.0);
        }
        assert!(a.unmatched_preds.is_empty() && a.unmatched_gts.is_empty());
    }

    #[test]
    fn no_predictions() {
        let gts = vec![element(ClassLabel::Divider, &[(0.0, 0.0), (5.0, 0.0)])];
        let a = match_predictions(&[], &gts, &CostSpec::default()).unwrap();
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_gts, vec![0]);
    }
}
