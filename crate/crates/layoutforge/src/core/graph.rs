//! Layout <-> graph bookkeeping: rule-engine extraction into the padded
//! triangular form, one-hot encoding and argmax decoding.

use super::{
    tri_index, tri_pairs, CoreError, Layout, OneHotGraphState, SemanticGraph, Vocabularies,
};
use crate::mat::Mat;
use crate::relrules::RelationRuleSet;

/// Build the semantic graph of a layout with the default rule thresholds
/// for its kind.
pub fn graph_from_layout(layout: &Layout, vocab: &Vocabularies) -> Result<SemanticGraph, CoreError> {
    graph_from_layout_with_rules(layout, vocab, &RelationRuleSet::defaults(layout.kind))
}

pub fn graph_from_layout_with_rules(
    layout: &Layout,
    vocab: &Vocabularies,
    rules: &RelationRuleSet,
) -> Result<SemanticGraph, CoreError> {
    layout.validate(vocab)?;
    let n = layout.objects.len();
    if n > vocab.n_max {
        return Err(CoreError::TooManyObjects { got: n, n_max: vocab.n_max });
    }
    let mut g = SemanticGraph::empty(vocab);
    g.n = n;
    for (i, obj) in layout.objects.iter().enumerate() {
        g.categories[i] = obj.category;
        g.features[i] = obj.features.clone();
    }
    for (i, j) in tri_pairs(vocab.n_max) {
        if j < n {
            g.edges[tri_index(i, j, vocab.n_max)] =
                rules.classify(&layout.objects[i], &layout.objects[j]);
        }
    }
    Ok(g)
}

fn point_mass(width: usize, index: usize) -> Vec<f64> {
    let mut row = vec![0.0; width];
    row[index] = 1.0;
    row
}

/// One-hot encode a graph as point-mass rows at `t = 0`.
pub fn encode_one_hot(g: &SemanticGraph, vocab: &Vocabularies) -> Result<OneHotGraphState, CoreError> {
    let mut c_rows = Vec::with_capacity(vocab.n_max);
    for (i, &c) in g.categories.iter().enumerate() {
        if c >= vocab.onehot_c() {
            return Err(CoreError::IndexOutOfRange { what: format!("category slot {i}: {c}") });
        }
        c_rows.push(point_mass(vocab.onehot_c(), c));
    }
    let mut f_rows = Vec::with_capacity(vocab.n_max * vocab.n_f);
    for (i, feats) in g.features.iter().enumerate() {
        for (s, &f) in feats.iter().enumerate() {
            if f >= vocab.onehot_f() {
                return Err(CoreError::IndexOutOfRange {
                    what: format!("feature slot ({i},{s}): {f}"),
                });
            }
            f_rows.push(point_mass(vocab.onehot_f(), f));
        }
    }
    let mut e_rows = Vec::with_capacity(vocab.tri_count());
    for (idx, &e) in g.edges.iter().enumerate() {
        if e >= vocab.onehot_e() {
            return Err(CoreError::IndexOutOfRange { what: format!("edge slot {idx}: {e}") });
        }
        e_rows.push(point_mass(vocab.onehot_e(), e));
    }
    Ok(OneHotGraphState {
        t: 0,
        c_rows: Mat::from_rows(&c_rows),
        f_rows: Mat::from_rows(&f_rows),
        e_rows: Mat::from_rows(&e_rows),
    })
}

/// Argmax with the lowest index winning ties.
pub fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Decode a state by per-slot argmax, then stably compact non-EMPTY nodes
/// to the front so `n` is a prefix length again. Edges follow the node
/// permutation; edges touching dropped (EMPTY) nodes become EMPTY.
pub fn decode_argmax(
    state: &OneHotGraphState,
    vocab: &Vocabularies,
) -> Result<SemanticGraph, CoreError> {
    let n_max = vocab.n_max;

    let mut cats = Vec::with_capacity(n_max);
    for i in 0..n_max {
        let c = argmax_row(state.c_rows.row(i));
        if c == vocab.mask_c() {
            return Err(CoreError::MaskResidue { what: format!("category slot {i}") });
        }
        cats.push(c);
    }
    let mut feats = vec![vec![0usize; vocab.n_f]; n_max];
    for i in 0..n_max {
        for s in 0..vocab.n_f {
            let f = argmax_row(state.f_rows.row(i * vocab.n_f + s));
            if f == vocab.mask_f() {
                return Err(CoreError::MaskResidue { what: format!("feature slot ({i},{s})") });
            }
            feats[i][s] = f;
        }
    }
    let pairs = tri_pairs(n_max);
    let mut edges_raw = vec![0usize; pairs.len()];
    for (idx, _) in pairs.iter().enumerate() {
        let e = argmax_row(state.e_rows.row(idx));
        if e == vocab.mask_e() {
            return Err(CoreError::MaskResidue { what: format!("edge slot {idx}") });
        }
        edges_raw[idx] = e;
    }

    // Stable compaction: kept[k] is the original slot of compacted node k.
    let kept: Vec<usize> = (0..n_max).filter(|&i| cats[i] != vocab.empty_c()).collect();
    let n = kept.len();

    let mut g = SemanticGraph::empty(vocab);
    g.n = n;
    for (k, &orig) in kept.iter().enumerate() {
        g.categories[k] = cats[orig];
        g.features[k] = feats[orig].clone();
    }
    for a in 0..n {
        for b in (a + 1)..n {
            // kept[] is increasing, so pair order is preserved.
            let (i, j) = (kept[a], kept[b]);
            g.edges[tri_index(a, b, n_max)] = edges_raw[tri_index(i, j, n_max)];
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::LayoutKind;

    fn small_vocab() -> Vocabularies {
        Vocabularies {
            layout_kind: LayoutKind::ThreeD,
            k_c: 3,
            k_f: 4,
            k_e: 11,
            n_f: 2,
            n_max: 4,
            category_names: vec!["a".into(), "b".into(), "c".into()],
            style_names: vec!["plain".into()],
            underlay_category: None,
        }
    }

    #[test]
    fn graph_from_layout_edge_cases() {
        let vocab = Vocabularies {
            layout_kind: LayoutKind::ThreeD,
            k_c: 3,
            k_f: 4,
            k_e: 11,
            n_f: 2,
            n_max: 4,
            category_names: vec!["a".into(), "b".into(), "c".into()],
            style_names: vec![],
            underlay_category: None,
        };
        let obj = |cat: usize, x: f64| crate::core::ObjectRecord {
            category: cat,
            features: vec![0, 1],
            location: vec![x, 1.0, 0.5],
            size: vec![0.5, 0.5, 1.0],
            rotation: 0.0,
        };
        let bounds = crate::core::Bounds::room(6.0, 6.0, 3.0);
        // a single object produces no pairs: every edge slot stays EMPTY
        let layout = crate::core::Layout {
            kind: LayoutKind::ThreeD,
            bounds,
            objects: vec![obj(1, 1.0)],
            product_region: None,
        };
        let g = graph_from_layout(&layout, &vocab).unwrap();
        assert_eq!(g.n, 1);
        assert_eq!(g.categories[0], 1);
        assert!(g.edges.iter().all(|&e| e == vocab.empty_e()));

        // two objects 4 units apart sit beyond the far threshold: "none"
        let layout = crate::core::Layout {
            kind: LayoutKind::ThreeD,
            bounds,
            objects: vec![obj(1, 1.0), obj(2, 5.0)],
            product_region: None,
        };
        let g = graph_from_layout(&layout, &vocab).unwrap();
        assert_eq!(g.edges[tri_index(0, 1, 4)], crate::relrules::REL_NONE);

        // more objects than slots is an error
        let layout = crate::core::Layout {
            kind: LayoutKind::ThreeD,
            bounds,
            objects: (0..5).map(|i| obj(0, 1.0 + i as f64)).collect(),
            product_region: None,
        };
        assert!(matches!(
            graph_from_layout(&layout, &vocab),
            Err(CoreError::TooManyObjects { got: 5, n_max: 4 })
        ));
    }

    #[test]
    fn encode_point_mass_rows() {
        let vocab = small_vocab();
        let mut g = SemanticGraph::empty(&vocab);
        g.n = 1;
        g.categories[0] = 0;
        g.features[0] = vec![1, 2];
        let state = encode_one_hot(&g, &vocab).unwrap();
        // category 0 with K_c = 3: row (1,0,0,0,0)
        assert_eq!(state.c_rows.row(0), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        // EMPTY with K_c = 3 sits in the reserved slot: (0,0,0,1,0)
        assert_eq!(state.c_rows.row(1), &[0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(state.t, 0);
        assert!(state.rows_are_simplex(1e-9));
    }

    #[test]
    fn decode_is_inverse_of_encode() {
        let vocab = small_vocab();
        let mut g = SemanticGraph::empty(&vocab);
        g.n = 3;
        g.categories[0] = 2;
        g.categories[1] = 0;
        g.categories[2] = 1;
        g.features[0] = vec![3, 0];
        g.features[1] = vec![1, 1];
        g.features[2] = vec![0, 2];
        g.edges[tri_index(0, 1, 4)] = 4;
        g.edges[tri_index(0, 2, 4)] = 10;
        g.edges[tri_index(1, 2, 4)] = 7;
        let state = encode_one_hot(&g, &vocab).unwrap();
        assert_eq!(decode_argmax(&state, &vocab).unwrap(), g);
    }

    #[test]
    fn decode_ties_break_low_and_mask_errors() {
        let vocab = small_vocab();
        let g = SemanticGraph::empty(&vocab);
        let mut state = encode_one_hot(&g, &vocab).unwrap();
        // uniform over categories 0 and 1: lower index wins
        let w = vocab.onehot_c();
        state.c_rows.row_mut(0).copy_from_slice(&vec![0.0; w]);
        state.c_rows.set(0, 0, 0.5);
        state.c_rows.set(0, 1, 0.5);
        let decoded = decode_argmax(&state, &vocab).unwrap();
        assert_eq!(decoded.categories[0], 0);

        state.c_rows.row_mut(1).fill(0.0);
        state.c_rows.set(1, vocab.mask_c(), 1.0);
        assert!(matches!(
            decode_argmax(&state, &vocab),
            Err(CoreError::MaskResidue { .. })
        ));
    }

    #[test]
    fn decode_compacts_interior_empty_slots() {
        let vocab = small_vocab();
        let mut g = SemanticGraph::empty(&vocab);
        g.n = 3;
        g.categories = vec![1, 2, 0, vocab.empty_c()];
        g.features[0] = vec![1, 1];
        g.features[1] = vec![2, 2];
        g.features[2] = vec![3, 3];
        g.edges[tri_index(0, 1, 4)] = 5;
        g.edges[tri_index(0, 2, 4)] = 6;
        g.edges[tri_index(1, 2, 4)] = 7;
        let mut state = encode_one_hot(&g, &vocab).unwrap();
        // Knock out the middle node: slot 1 becomes EMPTY.
        state.c_rows.row_mut(1).fill(0.0);
        state.c_rows.set(1, vocab.empty_c(), 1.0);
        let decoded = decode_argmax(&state, &vocab).unwrap();
        assert_eq!(decoded.n, 2);
        assert_eq!(&decoded.categories[..2], &[1, 0]);
        assert_eq!(decoded.features[1], vec![3, 3]);
        // Edge (0, 2) of the original becomes (0, 1) after compaction.
        assert_eq!(decoded.edges[tri_index(0, 1, 4)], 6);
        assert_eq!(decoded.edges[tri_index(1, 2, 4)], vocab.empty_e());
    }
}
