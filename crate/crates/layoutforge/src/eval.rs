//! Controllability and graphic-quality metrics: iRecall, Val, Ove, N-Ali,
//! Und_l, Und_s, Occ, the stylization gap, and Lab color error. All pure
//! functions of their inputs.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::core::{Layout, Rect};
use crate::qfeat::lab::LabColor;
use crate::relrules::{extract_triplets, RelationRuleSet, RelationTriplet};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("required triplet set is empty")]
    EmptyRequirement,
    #[error("need at least two elements")]
    TooFewElements,
    #[error("layout has no product region")]
    NoProductRegion,
    #[error("zero vector in a cosine similarity")]
    ZeroVector,
    #[error("paired lists differ in length: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
}

/// Fraction of the required (subject, relation, object) triplets present in
/// the layout under the rule engine. Category-level: any instance pair
/// satisfies a triplet.
pub fn irecall(
    layout: &Layout,
    required: &BTreeSet<RelationTriplet>,
    rules: &RelationRuleSet,
) -> Result<f64, EvalError> {
    if required.is_empty() {
        return Err(EvalError::EmptyRequirement);
    }
    let extracted = extract_triplets(layout, rules);
    let hit = required.iter().filter(|t| extracted.contains(t)).count();
    Ok(hit as f64 / required.len() as f64)
}

fn boxes(layout: &Layout) -> Vec<Rect> {
    layout.objects.iter().map(|o| o.footprint()).collect()
}

fn iou(a: &Rect, b: &Rect) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Mean pairwise IoU over unordered pairs of non-underlay elements; zero
/// with fewer than two such elements.
pub fn overlay(layout: &Layout, underlay_category: Option<usize>) -> f64 {
    let elems: Vec<Rect> = layout
        .objects
        .iter()
        .filter(|o| Some(o.category) != underlay_category)
        .map(|o| o.footprint())
        .collect();
    if elems.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..elems.len() {
        for j in (i + 1)..elems.len() {
            total += iou(&elems[i], &elems[j]);
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// Fraction of elements whose box lies inside the canvas (tolerance 1e-6)
/// with both extents at least 0.1% of the respective canvas side.
pub fn validity(layout: &Layout) -> f64 {
    if layout.objects.is_empty() {
        return 1.0;
    }
    let (w, h) = (layout.bounds.x, layout.bounds.y);
    let tol = 1e-6;
    let valid = boxes(layout)
        .iter()
        .filter(|b| {
            b.x >= -tol
                && b.y >= -tol
                && b.x + b.w <= w + tol
                && b.y + b.h <= h + tol
                && b.w >= 1e-3 * w
                && b.h >= 1e-3 * h
        })
        .count();
    valid as f64 / layout.objects.len() as f64
}

/// Mean over elements of the minimal alignment distance: for each element,
/// the min over its six alignment axes (left/center/right x, bottom/middle/
/// top y) of the distance to the nearest other element on the same axis,
/// normalized by the canvas side of that axis.
pub fn non_alignment(layout: &Layout) -> Result<f64, EvalError> {
    let bs = boxes(layout);
    if bs.len() < 2 {
        return Err(EvalError::TooFewElements);
    }
    let (w, h) = (layout.bounds.x, layout.bounds.y);
    let axes = |b: &Rect| {
        [
            b.x,
            b.x + b.w / 2.0,
            b.x + b.w,
            b.y,
            b.y + b.h / 2.0,
            b.y + b.h,
        ]
    };
    let mut total = 0.0;
    for (i, b) in bs.iter().enumerate() {
        let a = axes(b);
        let mut best = f64::INFINITY;
        for (j, other) in bs.iter().enumerate() {
            if i == j {
                continue;
            }
            let o = axes(other);
            for k in 0..6 {
                let side = if k < 3 { w } else { h };
                best = best.min((a[k] - o[k]).abs() / side);
            }
        }
        total += best;
    }
    Ok(total / bs.len() as f64)
}

/// (Und_l, Und_s): per underlay, the loose score is the best containment
/// ratio area(e intersect u)/area(e) over non-underlay elements; the strict
/// score counts underlays fully containing at least one element. `None`
/// when the layout has no underlays.
pub fn underlay_effectiveness(layout: &Layout, underlay_category: usize) -> Option<(f64, f64)> {
    let underlays: Vec<Rect> = layout
        .objects
        .iter()
        .filter(|o| o.category == underlay_category)
        .map(|o| o.footprint())
        .collect();
    if underlays.is_empty() {
        return None;
    }
    let elems: Vec<Rect> = layout
        .objects
        .iter()
        .filter(|o| o.category != underlay_category)
        .map(|o| o.footprint())
        .collect();
    let mut loose_total = 0.0;
    let mut strict_hits = 0usize;
    for u in &underlays {
        let mut loose = 0.0f64;
        let mut strict = false;
        for e in &elems {
            if e.area() > 0.0 {
                loose = loose.max(e.intersection_area(u) / e.area());
            }
            if u.contains_rect(e) {
                strict = true;
            }
        }
        loose_total += loose;
        if strict {
            strict_hits += 1;
        }
    }
    Some((loose_total / underlays.len() as f64, strict_hits as f64 / underlays.len() as f64))
}

/// Exact area of the union of rectangles via an x-sweep with y-interval
/// unions per strip.
pub fn union_area(rects: &[Rect]) -> f64 {
    let rects: Vec<&Rect> = rects.iter().filter(|r| r.w > 0.0 && r.h > 0.0).collect();
    if rects.is_empty() {
        return 0.0;
    }
    let mut xs: Vec<f64> = rects.iter().flat_map(|r| [r.x, r.x + r.w]).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    let mut area = 0.0;
    for win in xs.windows(2) {
        let (x0, x1) = (win[0], win[1]);
        if x1 <= x0 {
            continue;
        }
        let mid = (x0 + x1) / 2.0;
        let mut intervals: Vec<(f64, f64)> = rects
            .iter()
            .filter(|r| r.x <= mid && mid < r.x + r.w)
            .map(|r| (r.y, r.y + r.h))
            .collect();
        intervals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut covered = 0.0;
        let mut cur: Option<(f64, f64)> = None;
        for (lo, hi) in intervals {
            match cur {
                None => cur = Some((lo, hi)),
                Some((clo, chi)) => {
                    if lo <= chi {
                        cur = Some((clo, chi.max(hi)));
                    } else {
                        covered += chi - clo;
                        cur = Some((lo, hi));
                    }
                }
            }
        }
        if let Some((clo, chi)) = cur {
            covered += chi - clo;
        }
        area += (x1 - x0) * covered;
    }
    area
}

/// Fraction of the product region covered by the union of element boxes.
pub fn occlusion(layout: &Layout) -> Result<f64, EvalError> {
    let region = layout.product_region.as_ref().ok_or(EvalError::NoProductRegion)?;
    if region.area() <= 0.0 {
        return Ok(0.0);
    }
    let clipped: Vec<Rect> = boxes(layout)
        .iter()
        .filter_map(|b| {
            let x = b.x.max(region.x);
            let y = b.y.max(region.y);
            let x2 = (b.x + b.w).min(region.x + region.w);
            let y2 = (b.y + b.h).min(region.y + region.h);
            if x2 > x && y2 > y {
                Some(Rect { x, y, w: x2 - x, h: y2 - y })
            } else {
                None
            }
        })
        .collect();
    Ok(union_area(&clipped) / region.area())
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        return Err(EvalError::ZeroVector);
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

/// Mean over objects of CosSim(f_i, d_style_i) - CosSim(f_i, d_class_i).
pub fn stylization_delta(
    features: &[Vec<f64>],
    styled_refs: &[Vec<f64>],
    class_refs: &[Vec<f64>],
) -> Result<f64, EvalError> {
    if features.len() != styled_refs.len() || features.len() != class_refs.len() {
        return Err(EvalError::LengthMismatch { a: features.len(), b: styled_refs.len() });
    }
    if features.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..features.len() {
        total += cosine(&features[i], &styled_refs[i])? - cosine(&features[i], &class_refs[i])?;
    }
    Ok(total / features.len() as f64)
}

/// (MSE over the a/b channels, MAE over L).
pub fn color_error(pred: &[LabColor], reference: &[LabColor]) -> Result<(f64, f64), EvalError> {
    if pred.len() != reference.len() {
        return Err(EvalError::LengthMismatch { a: pred.len(), b: reference.len() });
    }
    if pred.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut mse_ab = 0.0;
    let mut mae_l = 0.0;
    for (p, r) in pred.iter().zip(reference) {
        let da = p.a - r.a;
        let db = p.b - r.b;
        mse_ab += (da * da + db * db) / 2.0;
        mae_l += (p.l - r.l).abs();
    }
    Ok((mse_ab / pred.len() as f64, mae_l / pred.len() as f64))
}

/// Aggregate for the JSON report: {metric: {mean, std, n}}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len();
    if n == 0 {
        return MetricSummary { mean: f64::NAN, std: f64::NAN, n: 0 };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    MetricSummary { mean, std: var.sqrt(), n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{Bounds, LayoutKind, ObjectRecord};

    fn obj(cat: usize, x: f64, y: f64, w: f64, h: f64) -> ObjectRecord {
        ObjectRecord {
            category: cat,
            features: vec![0, 0, 0],
            location: vec![x, y],
            size: vec![w, h],
            rotation: 0.0,
        }
    }

    fn canvas(objects: Vec<ObjectRecord>, region: Option<Rect>) -> Layout {
        Layout {
            kind: LayoutKind::TwoD,
            bounds: Bounds::canvas(512.0, 512.0),
            objects,
            product_region: region,
        }
    }

    #[test]
    fn irecall_counts_required_hits() {
        let rules = RelationRuleSet::defaults(LayoutKind::TwoD);
        let layout = canvas(vec![obj(1, 100.0, 100.0, 40.0, 40.0), obj(2, 250.0, 100.0, 40.0, 40.0)], None);
        let mut req = BTreeSet::new();
        req.insert(RelationTriplet { subject: 2, relation: 1, object: 1 }); // right of: satisfied
        assert_eq!(irecall(&layout, &req, &rules).unwrap(), 1.0);
        req.insert(RelationTriplet { subject: 1, relation: 2, object: 2 }); // above: not satisfied
        assert_eq!(irecall(&layout, &req, &rules).unwrap(), 0.5);
        assert_eq!(
            irecall(&layout, &BTreeSet::new(), &rules),
            Err(EvalError::EmptyRequirement)
        );
    }

    #[test]
    fn overlay_basics() {
        // identical boxes: IoU 1
        let l = canvas(vec![obj(1, 100.0, 100.0, 40.0, 40.0), obj(2, 100.0, 100.0, 40.0, 40.0)], None);
        assert!((overlay(&l, None) - 1.0).abs() < 1e-12);
        // disjoint: 0
        let l = canvas(vec![obj(1, 50.0, 50.0, 40.0, 40.0), obj(2, 400.0, 400.0, 40.0, 40.0)], None);
        assert_eq!(overlay(&l, None), 0.0);
        // three boxes equal the hand-computed mean of the three pair IoUs
        let a = obj(1, 100.0, 100.0, 40.0, 40.0);
        let b = obj(2, 120.0, 100.0, 40.0, 40.0);
        let c = obj(3, 400.0, 400.0, 40.0, 40.0);
        let l = canvas(vec![a, b, c], None);
        let iou_ab = (20.0 * 40.0) / (40.0 * 40.0 * 2.0 - 20.0 * 40.0);
        let expected = iou_ab / 3.0;
        assert!((overlay(&l, None) - expected).abs() < 1e-12);
        // underlays are excluded
        let u = obj(0, 110.0, 100.0, 200.0, 200.0);
        let l = canvas(
            vec![u, obj(1, 100.0, 100.0, 40.0, 40.0), obj(2, 400.0, 400.0, 40.0, 40.0)],
            None,
        );
        assert_eq!(overlay(&l, Some(0)), 0.0);
    }

    #[test]
    fn validity_boundaries() {
        let l = canvas(
            vec![obj(1, 100.0, 100.0, 40.0, 40.0), obj(2, 300.0, 300.0, 40.0, 40.0)],
            None,
        );
        assert_eq!(validity(&l), 1.0);
        // one of four sticks out of the canvas
        let l = canvas(
            vec![
                obj(1, 100.0, 100.0, 40.0, 40.0),
                obj(2, 300.0, 300.0, 40.0, 40.0),
                obj(3, 200.0, 200.0, 40.0, 40.0),
                obj(4, 510.0, 100.0, 40.0, 40.0),
            ],
            None,
        );
        assert_eq!(validity(&l), 0.75);
        // a sliver thinner than 0.1% of the side is invalid
        let l = canvas(vec![obj(1, 100.0, 100.0, 0.4, 40.0)], None);
        assert_eq!(validity(&l), 0.0);
    }

    #[test]
    fn non_alignment_cases() {
        // two left-aligned boxes: 0
        let l = canvas(vec![obj(1, 120.0, 100.0, 40.0, 40.0), obj(2, 120.0, 300.0, 40.0, 60.0)], None);
        assert_eq!(non_alignment(&l).unwrap(), 0.0);
        // offset by delta on every axis
        let d = 8.0;
        let l = canvas(
            vec![obj(1, 100.0, 100.0, 40.0, 40.0), obj(2, 100.0 + d, 300.0, 40.0, 40.0)],
            None,
        );
        assert!((non_alignment(&l).unwrap() - d / 512.0).abs() < 1e-12);
        let single = canvas(vec![obj(1, 100.0, 100.0, 40.0, 40.0)], None);
        assert_eq!(non_alignment(&single), Err(EvalError::TooFewElements));
    }

    #[test]
    fn underlay_scores() {
        // underlay exactly covering one text box: loose 1, strict hit
        let l = canvas(vec![obj(0, 200.0, 200.0, 100.0, 100.0), obj(2, 200.0, 200.0, 100.0, 100.0)], None);
        assert_eq!(underlay_effectiveness(&l, 0), Some((1.0, 1.0)));
        // underlay touching nothing
        let l = canvas(vec![obj(0, 100.0, 100.0, 80.0, 80.0), obj(2, 400.0, 400.0, 40.0, 40.0)], None);
        assert_eq!(underlay_effectiveness(&l, 0), Some((0.0, 0.0)));
        // half overlap: loose 0.5, strict miss
        let l = canvas(vec![obj(0, 100.0, 100.0, 80.0, 80.0), obj(2, 140.0, 100.0, 80.0, 80.0)], None);
        let (loose, strict) = underlay_effectiveness(&l, 0).unwrap();
        assert!((loose - 0.5).abs() < 1e-12);
        assert_eq!(strict, 0.0);
        // no underlays: not applicable
        let l = canvas(vec![obj(2, 140.0, 100.0, 80.0, 80.0)], None);
        assert_eq!(underlay_effectiveness(&l, 0), None);
    }

    #[test]
    fn occlusion_cases() {
        let region = Rect { x: 200.0, y: 200.0, w: 100.0, h: 100.0 };
        // element covering half the region
        let l = canvas(vec![obj(1, 225.0, 250.0, 50.0, 100.0)], Some(region));
        assert!((occlusion(&l).unwrap() - 0.5).abs() < 1e-12);
        // no overlap
        let l = canvas(vec![obj(1, 50.0, 50.0, 40.0, 40.0)], Some(region));
        assert_eq!(occlusion(&l).unwrap(), 0.0);
        // overlapping elements are not double counted
        let l = canvas(
            vec![obj(1, 225.0, 250.0, 50.0, 100.0), obj(2, 235.0, 250.0, 50.0, 100.0)],
            Some(region),
        );
        let got = occlusion(&l).unwrap();
        assert!((got - 0.6).abs() < 1e-12, "{got}");
        let no_region = canvas(vec![obj(1, 0.0, 0.0, 4.0, 4.0)], None);
        assert_eq!(occlusion(&no_region), Err(EvalError::NoProductRegion));
    }

    #[test]
    fn stylization_gap() {
        let style = vec![1.0, 0.0];
        let class = vec![0.0, 1.0];
        // features identical to the styled reference
        let delta =
            stylization_delta(&[style.clone()], &[style.clone()], &[class.clone()]).unwrap();
        assert!((delta - 1.0).abs() < 1e-12);
        // features identical to the class reference: non-positive
        let delta =
            stylization_delta(&[class.clone()], &[style.clone()], &[class.clone()]).unwrap();
        assert!(delta <= 0.0);
        assert_eq!(
            stylization_delta(&[vec![0.0, 0.0]], &[style.clone()], &[class]),
            Err(EvalError::ZeroVector)
        );
    }

    #[test]
    fn color_error_cases() {
        let a = LabColor { l: 50.0, a: 10.0, b: -10.0 };
        assert_eq!(color_error(&[a], &[a]).unwrap(), (0.0, 0.0));
        let b = LabColor { l: 55.0, a: 10.0, b: -10.0 };
        let (mse, mae) = color_error(&[b], &[a]).unwrap();
        assert_eq!(mse, 0.0);
        assert_eq!(mae, 5.0);
        assert!(color_error(&[a], &[]).is_err());
    }

    #[test]
    fn union_area_matches_inclusion_exclusion_on_two_rects() {
        let a = Rect { x: 0.0, y: 0.0, w: 10.0, h: 10.0 };
        let b = Rect { x: 5.0, y: 5.0, w: 10.0, h: 10.0 };
        let expected = 100.0 + 100.0 - 25.0;
        assert!((union_area(&[a, b]) - expected).abs() < 1e-12);
    }
}
