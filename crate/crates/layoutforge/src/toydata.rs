//! Procedural layout-instruction corpora with known ground truth: a
//! cluster-based placement grammar on a 6x6 room (3D) or a 512x512 canvas
//! (2D), graphs computed by the rule engine, and instructions sampled from
//! each layout's true triplet set. Deterministic given the seed.

use thiserror::Error;

use crate::core::{Bounds, Instruction, Layout, LayoutKind, ObjectRecord, Rect, SemanticGraph, Vocabularies};
use crate::qfeat::lab::{srgb_to_lab, LabBinning};
use crate::relrules::{extract_triplets, make_instruction, RelationRuleSet};
use crate::util::Prng;
use rand::Rng;

#[derive(Debug, Error, PartialEq)]
pub enum ToyError {
    #[error("placement grammar failed after {attempts} attempts")]
    GrammarFailure { attempts: usize },
    #[error("split ratios must sum to 1, got {got}")]
    BadRatios { got: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySample {
    pub layout: Layout,
    pub graph: SemanticGraph,
    pub instruction: Instruction,
    pub styles: Vec<usize>,
    /// Synthetic per-object feature vectors (3D path); empty for 2D where
    /// features are Lab color bins assigned directly.
    pub feature_vectors: Vec<Vec<f64>>,
}

pub const ROOM_EXTENT: f64 = 6.0;
pub const ROOM_HEIGHT: f64 = 3.0;
pub const CANVAS_SIDE: f64 = 512.0;
pub const STYLE_COUNT: usize = 3;
pub const FEATURE_DIM: usize = 32;

pub fn toy_bounds(kind: LayoutKind) -> Bounds {
    match kind {
        LayoutKind::ThreeD => Bounds::room(ROOM_EXTENT, ROOM_EXTENT, ROOM_HEIGHT),
        LayoutKind::TwoD => Bounds::canvas(CANVAS_SIDE, CANVAS_SIDE),
    }
}

/// The toy vocabularies. 2D K_f is the number of in-gamut Lab bins, so
/// constructing the 2D vocabulary builds the shared binning once.
pub fn toy_vocab(kind: LayoutKind) -> Vocabularies {
    match kind {
        LayoutKind::ThreeD => Vocabularies {
            layout_kind: kind,
            k_c: 6,
            k_f: 64,
            k_e: crate::relrules::RELATION_COUNT,
            n_f: 4,
            n_max: 8,
            category_names: ["bed", "nightstand", "wardrobe", "desk", "chair", "lamp"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            style_names: ["modern", "vintage", "minimal"].iter().map(|s| s.to_string()).collect(),
            underlay_category: None,
        },
        LayoutKind::TwoD => Vocabularies {
            layout_kind: kind,
            k_c: 5,
            k_f: LabBinning::shared().bin_count(),
            k_e: crate::relrules::RELATION_COUNT,
            n_f: 3,
            n_max: 8,
            category_names: ["underlay", "logo", "title", "tagline", "button"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            style_names: ["modern", "vintage", "minimal"].iter().map(|s| s.to_string()).collect(),
            underlay_category: Some(0),
        },
    }
}

/// Base (w, depth, height) per 3D category, jittered by +-15%.
const SIZES_3D: [[f64; 3]; 6] = [
    [1.7, 2.0, 0.6],   // bed
    [0.5, 0.5, 0.55],  // nightstand
    [1.1, 0.6, 2.0],   // wardrobe
    [1.2, 0.6, 0.75],  // desk
    [0.5, 0.5, 0.9],   // chair
    [0.35, 0.35, 0.5], // lamp
];

/// Categories a lamp may be stacked on.
const STACKABLE: [usize; 3] = [1, 3, 2];

fn jitter(rng: &mut Prng, v: f64) -> f64 {
    v * rng.gen_range(0.85..1.15)
}

fn try_place_3d(n: usize, rng: &mut Prng) -> Option<Vec<ObjectRecord>> {
    let mut objects: Vec<ObjectRecord> = Vec::with_capacity(n);
    for k in 0..n {
        let category = if k == 0 { 0 } else { rng.gen_range(0..6) };
        let base = SIZES_3D[category];
        let size = vec![jitter(rng, base[0]), jitter(rng, base[1]), jitter(rng, base[2])];

        // lamps sometimes stack on a nightstand, desk or wardrobe
        if category == 5 && rng.gen::<f64>() < 0.5 {
            if let Some((_, anchor)) = objects
                .iter()
                .enumerate()
                .find(|(_, o)| STACKABLE.contains(&o.category))
            {
                let ax = anchor.location[0] + rng.gen_range(-0.1..0.1) * anchor.size[0];
                let ay = anchor.location[1] + rng.gen_range(-0.1..0.1) * anchor.size[1];
                let z = anchor.size[2] + size[2] / 2.0 + 0.05;
                if z + size[2] / 2.0 <= ROOM_HEIGHT {
                    objects.push(ObjectRecord {
                        category,
                        features: vec![],
                        location: vec![ax, ay, z],
                        size,
                        rotation: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                    });
                    continue;
                }
            }
        }

        let margin = size[0].max(size[1]) / 2.0 + 0.05;
        let location = if objects.is_empty() {
            let c = ROOM_EXTENT / 2.0;
            vec![
                c + rng.gen_range(-0.8..0.8),
                c + rng.gen_range(-0.8..0.8),
                size[2] / 2.0,
            ]
        } else {
            // anchor to an existing object within the relation bands
            let anchor = &objects[rng.gen_range(0..objects.len())];
            let d = if rng.gen::<f64>() < 0.5 {
                rng.gen_range(0.45..1.0)
            } else {
                rng.gen_range(1.05..2.6)
            };
            let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let x = (anchor.location[0] + d * theta.cos()).clamp(margin, ROOM_EXTENT - margin);
            let y = (anchor.location[1] + d * theta.sin()).clamp(margin, ROOM_EXTENT - margin);
            vec![x, y, size[2] / 2.0]
        };
        // keep centers apart so orientations stay well defined
        let too_close = objects.iter().any(|o| {
            let dx = o.location[0] - location[0];
            let dy = o.location[1] - location[1];
            (dx * dx + dy * dy).sqrt() < 0.3
        });
        if too_close {
            return None;
        }
        objects.push(ObjectRecord {
            category,
            features: vec![],
            location,
            size,
            rotation: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        });
    }
    Some(objects)
}

fn try_place_2d(n: usize, rng: &mut Prng) -> Option<Vec<ObjectRecord>> {
    let mut objects: Vec<ObjectRecord> = Vec::with_capacity(n);
    // one underlay panel with 1-2 elements inside it
    let uw = rng.gen_range(180.0..320.0);
    let uh = rng.gen_range(120.0..220.0);
    let ux = rng.gen_range(uw / 2.0..CANVAS_SIDE - uw / 2.0);
    let uy = rng.gen_range(uh / 2.0..CANVAS_SIDE - uh / 2.0);
    objects.push(ObjectRecord {
        category: 0,
        features: vec![],
        location: vec![ux, uy],
        size: vec![uw, uh],
        rotation: 0.0,
    });
    let inner = rng.gen_range(1..=2usize.min(n - 1));
    for _ in 0..inner {
        let w = rng.gen_range(uw * 0.3..uw * 0.8);
        let h = rng.gen_range(uh * 0.2..uh * 0.6);
        let x = ux + rng.gen_range(-0.5..0.5) * (uw - w).max(0.0) / 2.0;
        let y = uy + rng.gen_range(-0.5..0.5) * (uh - h).max(0.0) / 2.0;
        objects.push(ObjectRecord {
            category: rng.gen_range(2..4),
            features: vec![],
            location: vec![x, y],
            size: vec![w, h],
            rotation: 0.0,
        });
    }
    while objects.len() < n {
        let anchor_loc = {
            let a = &objects[rng.gen_range(0..objects.len())];
            (a.location[0], a.location[1])
        };
        let category = rng.gen_range(1..5);
        let w = rng.gen_range(30.0..140.0);
        let h = rng.gen_range(24.0..90.0);
        let d = if rng.gen::<f64>() < 0.5 {
            rng.gen_range(30.0..80.0)
        } else {
            rng.gen_range(85.0..290.0)
        };
        let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let x = (anchor_loc.0 + d * theta.cos()).clamp(w / 2.0, CANVAS_SIDE - w / 2.0);
        let y = (anchor_loc.1 + d * theta.sin()).clamp(h / 2.0, CANVAS_SIDE - h / 2.0);
        let too_close = objects.iter().any(|o| {
            let dx = o.location[0] - x;
            let dy = o.location[1] - y;
            (dx * dx + dy * dy).sqrt() < 8.0
        });
        if too_close {
            return None;
        }
        objects.push(ObjectRecord {
            category,
            features: vec![],
            location: vec![x, y],
            size: vec![w, h],
            rotation: 0.0,
        });
    }
    Some(objects)
}

/// Three fixed sRGB palettes, one per style; feature slots for 2D objects
/// are the Lab bins of colors drawn near the palette anchors.
const PALETTES: [[(u8, u8, u8); 3]; STYLE_COUNT] = [
    [(30, 60, 120), (240, 240, 235), (200, 60, 40)],  // modern
    [(120, 80, 40), (220, 200, 160), (90, 110, 70)],  // vintage
    [(245, 245, 245), (30, 30, 30), (120, 120, 120)], // minimal
];

fn color_features_2d(style: usize, n_f: usize, rng: &mut Prng) -> Vec<usize> {
    let bins = LabBinning::shared();
    (0..n_f)
        .map(|slot| {
            let (r, g, b) = PALETTES[style][slot % 3];
            let wiggle = |v: u8, rng: &mut Prng| -> u8 {
                (v as i32 + rng.gen_range(-12..=12)).clamp(0, 255) as u8
            };
            let lab = srgb_to_lab(wiggle(r, rng), wiggle(g, rng), wiggle(b, rng));
            bins.quantize(lab).expect("palette colors are in gamut")
        })
        .collect()
}

fn product_region_2d(rng: &mut Prng) -> Rect {
    let w = rng.gen_range(140.0..240.0);
    let h = rng.gen_range(140.0..240.0);
    let x = rng.gen_range(40.0..CANVAS_SIDE - w - 40.0);
    let y = rng.gen_range(40.0..CANVAS_SIDE - h - 40.0);
    Rect { x, y, w, h }
}

/// Generate one corpus sample. The grammar retries placement until the
/// layout has at least two non-"none" relations.
pub fn curate_one(
    kind: LayoutKind,
    vocab: &Vocabularies,
    rules: &RelationRuleSet,
    rng: &mut Prng,
) -> Result<ToySample, ToyError> {
    const MAX_ATTEMPTS: usize = 100;
    for _ in 0..MAX_ATTEMPTS {
        let n = rng.gen_range(3..=vocab.n_max);
        let objects = match kind {
            LayoutKind::ThreeD => try_place_3d(n, rng),
            LayoutKind::TwoD => try_place_2d(n, rng),
        };
        let Some(mut objects) = objects else { continue };

        // styles drive features: synthetic vectors for 3D, palette colors
        // for 2D
        let styles: Vec<usize> = (0..objects.len()).map(|_| rng.gen_range(0..STYLE_COUNT)).collect();
        let mut feature_vectors = Vec::new();
        for (i, obj) in objects.iter_mut().enumerate() {
            match kind {
                LayoutKind::ThreeD => {
                    obj.features = vec![0; vocab.n_f];
                    feature_vectors.push(crate::qfeat::synthetic_feature(
                        obj.category,
                        styles[i],
                        FEATURE_DIM,
                        rng,
                    ));
                }
                LayoutKind::TwoD => {
                    obj.features = color_features_2d(styles[i], vocab.n_f, rng);
                }
            }
        }
        let product_region = match kind {
            LayoutKind::TwoD => Some(product_region_2d(rng)),
            LayoutKind::ThreeD => None,
        };
        let layout = Layout { kind, bounds: toy_bounds(kind), objects, product_region };

        let triplets: Vec<_> = extract_triplets(&layout, rules).into_iter().collect();
        if triplets.len() < 2 {
            continue;
        }
        let graph = crate::core::graph_from_layout_with_rules(&layout, vocab, rules)
            .expect("generated layouts are valid");

        // instruction: 1-2 of the layout's true triplets, sometimes with a
        // style tag naming an object actually present
        let count = if rng.gen::<f64>() < 0.5 && triplets.len() >= 2 { 2 } else { 1 };
        let mut picked = Vec::with_capacity(count);
        let first = rng.gen_range(0..triplets.len());
        picked.push(triplets[first]);
        if count == 2 {
            let mut second = rng.gen_range(0..triplets.len() - 1);
            if second >= first {
                second += 1;
            }
            picked.push(triplets[second]);
        }
        let mut style_tags = Vec::new();
        if rng.gen::<f64>() < 0.5 {
            let i = rng.gen_range(0..layout.objects.len());
            style_tags.push((layout.objects[i].category, styles[i]));
        }
        let instruction = make_instruction(&picked, &style_tags, vocab, rng);

        return Ok(ToySample { layout, graph, instruction, styles, feature_vectors });
    }
    Err(ToyError::GrammarFailure { attempts: MAX_ATTEMPTS })
}

/// Generate a corpus of layout-graph-instruction samples.
pub fn curate(
    kind: LayoutKind,
    n_samples: usize,
    vocab: &Vocabularies,
    rules: &RelationRuleSet,
    rng: &mut Prng,
) -> Result<Vec<ToySample>, ToyError> {
    (0..n_samples).map(|_| curate_one(kind, vocab, rules, rng)).collect()
}

/// Disjoint, exhaustive, seed-deterministic split.
pub fn split<T>(
    mut corpus: Vec<T>,
    ratios: (f64, f64, f64),
    rng: &mut Prng,
) -> Result<(Vec<T>, Vec<T>, Vec<T>), ToyError> {
    let total = ratios.0 + ratios.1 + ratios.2;
    if (total - 1.0).abs() > 1e-9 || ratios.0 < 0.0 || ratios.1 < 0.0 || ratios.2 < 0.0 {
        return Err(ToyError::BadRatios { got: total });
    }
    let n = corpus.len();
    let mut order: Vec<usize> = (0..n).collect();
    crate::util::shuffle(rng, &mut order);
    let n_train = (ratios.0 * n as f64).round() as usize;
    let n_val = (ratios.1 * n as f64).round() as usize;
    let n_train = n_train.min(n);
    let n_val = n_val.min(n - n_train);

    let mut slots: Vec<Option<T>> = corpus.drain(..).map(Some).collect();
    let mut take = |idx: &[usize]| -> Vec<T> {
        idx.iter().map(|&i| slots[i].take().expect("disjoint split")).collect()
    };
    let train = take(&order[..n_train]);
    let val = take(&order[n_train..n_train + n_val]);
    let test = take(&order[n_train + n_val..]);
    Ok((train, val, test))
}
