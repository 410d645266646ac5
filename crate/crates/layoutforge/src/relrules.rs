//! Deterministic geometric classification of pairwise spatial relations,
//! instruction templating, and triplet extraction.
//!
//! Eleven relation labels exist for each layout kind. Indices are aligned so
//! the inverse map is shared: (0,1), (2,3), (4,5), (6,7), (8,9) swap and 10
//! ("none") is self-inverse.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{Instruction, Layout, LayoutKind, ObjectRecord, Vocabularies};
use crate::util::Prng;
use rand::Rng;

pub const RELATION_COUNT: usize = 11;
pub const REL_NONE: usize = 10;

pub const RELATION_NAMES_3D: [&str; RELATION_COUNT] = [
    "left of",
    "right of",
    "in front of",
    "behind",
    "closely left of",
    "closely right of",
    "closely in front of",
    "closely behind",
    "above",
    "below",
    "none",
];

pub const RELATION_NAMES_2D: [&str; RELATION_COUNT] = [
    "left of",
    "right of",
    "above",
    "below",
    "closely left of",
    "closely right of",
    "closely above",
    "closely below",
    "enclosing",
    "enclosed with",
    "none",
];

pub fn relation_names(kind: LayoutKind) -> &'static [&'static str; RELATION_COUNT] {
    match kind {
        LayoutKind::TwoD => &RELATION_NAMES_2D,
        LayoutKind::ThreeD => &RELATION_NAMES_3D,
    }
}

/// Inverse label for the swapped argument order: consecutive labels
/// (2i, 2i+1) swap, a trailing unpaired label ("none" at index 10 in the
/// default tables) is self-inverse, and reserved states at or past `k_e`
/// (EMPTY, MASK) map to themselves. This makes triangular edge storage
/// lossless for padded graphs.
pub fn inverse_relation_index(idx: usize, k_e: usize) -> usize {
    if idx >= k_e || (idx == k_e - 1 && k_e % 2 == 1) {
        return idx;
    }
    if idx % 2 == 0 {
        idx + 1
    } else {
        idx - 1
    }
}

/// Thresholds of the rule tables. Angle bins are the four quadrant
/// intervals of width pi/2 centered on the axes and are not configurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationRuleSet {
    pub kind: LayoutKind,
    pub near_threshold: f64,
    pub far_threshold: f64,
}

impl RelationRuleSet {
    pub fn defaults(kind: LayoutKind) -> Self {
        match kind {
            LayoutKind::ThreeD => {
                RelationRuleSet { kind, near_threshold: 1.0, far_threshold: 3.0 }
            }
            LayoutKind::TwoD => {
                RelationRuleSet { kind, near_threshold: 80.0, far_threshold: 300.0 }
            }
        }
    }

    pub fn classify(&self, subject: &ObjectRecord, object: &ObjectRecord) -> usize {
        match self.kind {
            LayoutKind::ThreeD => classify_relation_3d(subject, object, self),
            LayoutKind::TwoD => classify_relation_2d(subject, object, self),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("coincident centers: relative orientation is degenerate")]
pub struct DegenerateAngle;

/// theta_so = atan2(Y_s - Y_o, X_s - X_o) in [-pi, pi); the upper boundary
/// wraps so that exactly-opposite points report -pi.
pub fn relative_orientation(
    s_center: (f64, f64),
    o_center: (f64, f64),
) -> Result<f64, DegenerateAngle> {
    let dx = s_center.0 - o_center.0;
    let dy = s_center.1 - o_center.1;
    if dx.abs() <= 1e-12 && dy.abs() <= 1e-12 {
        return Err(DegenerateAngle);
    }
    let theta = dy.atan2(dx);
    Ok(if theta >= std::f64::consts::PI { -std::f64::consts::PI } else { theta })
}

/// Quadrant of theta: 0 = right family, 1 = front/above family,
/// 2 = left family, 3 = behind/below family.
fn angle_quadrant(theta: f64) -> usize {
    use std::f64::consts::FRAC_PI_4;
    if (-FRAC_PI_4..FRAC_PI_4).contains(&theta) {
        0
    } else if (FRAC_PI_4..3.0 * FRAC_PI_4).contains(&theta) {
        1
    } else if theta >= 3.0 * FRAC_PI_4 || theta < -3.0 * FRAC_PI_4 {
        2
    } else {
        3
    }
}

/// Planar label index from quadrant and distance band. Quadrant order maps
/// to label order (left, right, front/above, behind/below).
fn band_label(quadrant: usize, close: bool) -> usize {
    let base = match quadrant {
        0 => 1, // right of
        1 => 2, // in front of / above
        2 => 0, // left of
        _ => 3, // behind / below
    };
    if close {
        base + 4
    } else {
        base
    }
}

fn ground_distance(s: &ObjectRecord, o: &ObjectRecord) -> f64 {
    let dx = s.location[0] - o.location[0];
    let dy = s.location[1] - o.location[1];
    (dx * dx + dy * dy).sqrt()
}

/// Whether `a`'s center lies inside `b`'s ground bounding box.
fn inside(a: &ObjectRecord, b: &ObjectRecord) -> bool {
    (a.location[0] - b.location[0]).abs() <= b.size[0] / 2.0
        && (a.location[1] - b.location[1]).abs() <= b.size[1] / 2.0
}

/// 3D rule table. Vertical stacking is checked before the planar bands;
/// conflicts (a pair satisfying both) resolve to above/below.
pub fn classify_relation_3d(
    subject: &ObjectRecord,
    object: &ObjectRecord,
    rules: &RelationRuleSet,
) -> usize {
    let half_heights = (subject.size[2] + object.size[2]) / 2.0;
    let dz = subject.location[2] - object.location[2];
    let footprint_contained = inside(subject, object) || inside(object, subject);
    if dz > half_heights && footprint_contained {
        return 8; // above
    }
    if -dz > half_heights && footprint_contained {
        return 9; // below
    }

    let d = ground_distance(subject, object);
    if d > rules.far_threshold {
        return REL_NONE;
    }
    match relative_orientation(
        (subject.location[0], subject.location[1]),
        (object.location[0], object.location[1]),
    ) {
        Err(DegenerateAngle) => REL_NONE,
        Ok(theta) => band_label(angle_quadrant(theta), d <= rules.near_threshold),
    }
}

/// 2D rule table. Containment is checked first; when both centers lie in
/// each other's boxes the larger box is the enclosing one, and equal areas
/// fall through to the distance bands.
pub fn classify_relation_2d(
    subject: &ObjectRecord,
    object: &ObjectRecord,
    rules: &RelationRuleSet,
) -> usize {
    let area_s = subject.size[0] * subject.size[1];
    let area_o = object.size[0] * object.size[1];
    let o_in_s = inside(object, subject);
    let s_in_o = inside(subject, object);
    if o_in_s && (!s_in_o || area_s > area_o) {
        return 8; // enclosing
    }
    if s_in_o && (!o_in_s || area_o > area_s) {
        return 9; // enclosed with
    }

    let d = ground_distance(subject, object);
    if d > rules.far_threshold {
        return REL_NONE;
    }
    match relative_orientation(
        (subject.location[0], subject.location[1]),
        (object.location[0], object.location[1]),
    ) {
        Err(DegenerateAngle) => REL_NONE,
        Ok(theta) => band_label(angle_quadrant(theta), d <= rules.near_threshold),
    }
}

/// Category-level relation triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationTriplet {
    pub subject: usize,
    pub relation: usize,
    pub object: usize,
}

/// Classify every ordered pair, drop "none", collapse to category level.
pub fn extract_triplets(layout: &Layout, rules: &RelationRuleSet) -> BTreeSet<RelationTriplet> {
    let mut out = BTreeSet::new();
    for (i, s) in layout.objects.iter().enumerate() {
        for (j, o) in layout.objects.iter().enumerate() {
            if i == j {
                continue;
            }
            let rel = rules.classify(s, o);
            if rel != REL_NONE {
                out.insert(RelationTriplet { subject: s.category, relation: rel, object: o.category });
            }
        }
    }
    out
}

/// The fixed template bank: four verb phrases by three conjunctions.
const VERBS: [&str; 4] = ["Place", "Put", "Keep", "Arrange"];
const CONJUNCTIONS: [&str; 3] = [", and ", ", then ", ", while also "];

/// Render 1-2 triplets (plus optional style tags) into an instruction
/// sentence. Same triplets and seed give identical text; the structured
/// triplets are preserved verbatim.
pub fn make_instruction(
    triplets: &[RelationTriplet],
    style_tags: &[(usize, usize)],
    vocab: &Vocabularies,
    rng: &mut Prng,
) -> Instruction {
    assert!(
        !triplets.is_empty() && triplets.len() <= 2,
        "instructions carry 1-2 triplets, got {}",
        triplets.len()
    );
    let names = relation_names(vocab.layout_kind);
    let mut clauses = Vec::with_capacity(triplets.len());
    for t in triplets {
        let verb = VERBS[rng.gen_range(0..VERBS.len())];
        clauses.push(format!(
            "{} the {} {} the {}",
            verb, vocab.category_names[t.subject], names[t.relation], vocab.category_names[t.object]
        ));
    }
    let mut text = if clauses.len() == 2 {
        let conj = CONJUNCTIONS[rng.gen_range(0..CONJUNCTIONS.len())];
        let mut second = clauses[1].clone();
        second[..1].make_ascii_lowercase();
        format!("{}{}{}", clauses[0], conj, second)
    } else {
        clauses[0].clone()
    };
    for &(cat, style) in style_tags {
        text.push_str(&format!(
            ", with the {} in a {} style",
            vocab.category_names[cat], vocab.style_names[style]
        ));
    }
    text.push('.');
    Instruction { triplets: triplets.to_vec(), style_tags: style_tags.to_vec(), text }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{Bounds, LayoutKind};
    use crate::util::rng_from_seed;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn obj3(x: f64, y: f64, z: f64, size: [f64; 3]) -> ObjectRecord {
        ObjectRecord {
            category: 0,
            features: vec![0],
            location: vec![x, y, z],
            size: size.to_vec(),
            rotation: 0.0,
        }
    }

    fn obj2(x: f64, y: f64, w: f64, h: f64) -> ObjectRecord {
        ObjectRecord {
            category: 0,
            features: vec![0],
            location: vec![x, y],
            size: vec![w, h],
            rotation: 0.0,
        }
    }

    fn rules3() -> RelationRuleSet {
        RelationRuleSet::defaults(LayoutKind::ThreeD)
    }
    fn rules2() -> RelationRuleSet {
        RelationRuleSet::defaults(LayoutKind::TwoD)
    }

    #[test]
    fn orientation_basics() {
        assert_eq!(relative_orientation((1.5, 0.0), (0.0, 0.0)).unwrap(), 0.0);
        assert!((relative_orientation((0.0, 0.5), (0.0, 0.0)).unwrap() - FRAC_PI_2).abs() < 1e-15);
        // exactly opposite wraps to the -pi boundary
        assert_eq!(relative_orientation((-1.0, 0.0), (0.0, 0.0)).unwrap(), -PI);
        assert_eq!(relative_orientation((0.0, 0.0), (0.0, 0.0)), Err(DegenerateAngle));
    }

    #[test]
    fn table_rows_3d() {
        let r = rules3();
        let o = obj3(0.0, 0.0, 0.5, [1.0, 1.0, 1.0]);
        // theta = 0, d = 1.5 in (1, 3]: right of
        let s = obj3(1.5, 0.0, 0.5, [1.0, 1.0, 1.0]);
        assert_eq!(classify_relation_3d(&s, &o, &r), 1);
        // d = 0.5 <= 1 with theta = pi/2: closely in front of
        let s = obj3(0.0, 0.5, 0.5, [1.0, 1.0, 1.0]);
        assert_eq!(classify_relation_3d(&s, &o, &r), 6);
        // stacked with footprint containment: above
        let s = obj3(0.1, 0.0, 1.6, [0.4, 0.4, 0.4]);
        assert_eq!(classify_relation_3d(&s, &o, &r), 8);
        assert_eq!(classify_relation_3d(&o, &s, &r), 9);
        // two objects 4 units apart: none
        let s = obj3(4.0, 0.0, 0.5, [1.0, 1.0, 1.0]);
        assert_eq!(classify_relation_3d(&s, &o, &r), REL_NONE);
    }

    #[test]
    fn threshold_boundaries_are_inclusive() {
        let r = rules3();
        let o = obj3(0.0, 0.0, 0.5, [0.1, 0.1, 1.0]);
        // d exactly at the near threshold is still "closely"
        let s = obj3(1.0, 0.0, 0.5, [0.1, 0.1, 1.0]);
        assert_eq!(classify_relation_3d(&s, &o, &r), 5);
        // d exactly at the far threshold is the non-close band
        let s = obj3(3.0, 0.0, 0.5, [0.1, 0.1, 1.0]);
        assert_eq!(classify_relation_3d(&s, &o, &r), 1);
        let s = obj3(3.0 + 1e-9, 0.0, 0.5, [0.1, 0.1, 1.0]);
        assert_eq!(classify_relation_3d(&s, &o, &r), REL_NONE);
    }

    #[test]
    fn table_rows_2d() {
        let r = rules2();
        let o = obj2(200.0, 200.0, 60.0, 60.0);
        // 100 px to the right
        let s = obj2(300.0, 200.0, 60.0, 60.0);
        assert_eq!(classify_relation_2d(&s, &o, &r), 1);
        // 400 px away: none
        let s = obj2(600.0, 200.0, 60.0, 60.0);
        assert_eq!(classify_relation_2d(&s, &o, &r), REL_NONE);
        // big box around a small one
        let s = obj2(210.0, 210.0, 300.0, 300.0);
        assert_eq!(classify_relation_2d(&s, &o, &r), 8);
        assert_eq!(classify_relation_2d(&o, &s, &r), 9);
    }

    #[test]
    fn mutual_containment_resolves_by_area() {
        let r = rules2();
        let a = obj2(200.0, 200.0, 120.0, 120.0);
        let b = obj2(210.0, 200.0, 80.0, 80.0);
        // both centers inside each other's box; larger encloses
        assert_eq!(classify_relation_2d(&a, &b, &r), 8);
        assert_eq!(classify_relation_2d(&b, &a, &r), 9);
        // equal areas fall through to a close band
        let c = obj2(210.0, 200.0, 120.0, 120.0);
        assert_eq!(classify_relation_2d(&a, &c, &r), 4);
        assert_eq!(classify_relation_2d(&c, &a, &r), 5);
    }

    #[test]
    fn coincident_centers_label_none() {
        let r = rules3();
        let a = obj3(1.0, 1.0, 0.5, [1.0, 1.0, 1.0]);
        let b = obj3(1.0, 1.0, 0.5, [2.0, 2.0, 1.0]);
        assert_eq!(classify_relation_3d(&a, &b, &r), REL_NONE);
        // but stacking still wins when the z gap is large enough
        let c = obj3(1.0, 1.0, 2.0, [0.5, 0.5, 0.5]);
        assert_eq!(classify_relation_3d(&c, &b, &r), 8);
    }

    #[test]
    fn extract_drops_none_and_collapses_categories() {
        let mut a = obj3(0.0, 0.0, 0.5, [1.0, 1.0, 1.0]);
        let mut b = obj3(2.0, 0.0, 0.5, [1.0, 1.0, 1.0]);
        a.category = 2;
        b.category = 5;
        let layout = Layout {
            kind: LayoutKind::ThreeD,
            bounds: Bounds::room(6.0, 6.0, 3.0),
            objects: vec![a, b],
            product_region: None,
        };
        let trips = extract_triplets(&layout, &rules3());
        assert_eq!(trips.len(), 2);
        assert!(trips.contains(&RelationTriplet { subject: 5, relation: 1, object: 2 }));
        assert!(trips.contains(&RelationTriplet { subject: 2, relation: 0, object: 5 }));

        let single = Layout {
            kind: LayoutKind::ThreeD,
            bounds: Bounds::room(6.0, 6.0, 3.0),
            objects: vec![obj3(1.0, 1.0, 0.5, [1.0, 1.0, 1.0])],
            product_region: None,
        };
        assert!(extract_triplets(&single, &rules3()).is_empty());
    }

    #[test]
    fn instruction_text_is_deterministic() {
        let vocab = Vocabularies {
            layout_kind: LayoutKind::ThreeD,
            k_c: 6,
            k_f: 8,
            k_e: RELATION_COUNT,
            n_f: 2,
            n_max: 8,
            category_names: ["bed", "nightstand", "wardrobe", "desk", "chair", "lamp"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            style_names: vec!["modern".into(), "vintage".into(), "minimal".into()],
            underlay_category: None,
        };
        let trips = [RelationTriplet { subject: 0, relation: 4, object: 1 }];
        let a = make_instruction(&trips, &[], &vocab, &mut rng_from_seed(9));
        let b = make_instruction(&trips, &[], &vocab, &mut rng_from_seed(9));
        assert_eq!(a, b);
        assert!(a.text.contains("bed"));
        assert!(a.text.contains("nightstand"));
        assert!(a.text.contains("closely left of"));
        assert!(!a.text.contains("style"));

        let styled = make_instruction(&trips, &[(0, 1)], &vocab, &mut rng_from_seed(9));
        assert!(styled.text.contains("vintage style"));
    }

    #[test]
    fn inverse_map_pairs() {
        for kind in [LayoutKind::TwoD, LayoutKind::ThreeD] {
            let names = relation_names(kind);
            for i in 0..RELATION_COUNT {
                let j = inverse_relation_index(i, RELATION_COUNT);
                assert_eq!(inverse_relation_index(j, RELATION_COUNT), i, "{}", names[i]);
            }
        }
        // reserved states map to themselves
        assert_eq!(inverse_relation_index(11, 11), 11);
        assert_eq!(inverse_relation_index(12, 11), 12);
    }
}
