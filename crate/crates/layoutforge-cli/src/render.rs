//! Deterministic SVG rendering: 2D canvases as labeled boxes, 3D rooms as
//! top-down footprints with a rotation tick. Floats are written with a
//! fixed precision so identical layouts give identical bytes.

use std::fmt::Write as _;

use layoutforge::core::{Layout, LayoutKind};

const COLORS: [&str; 8] =
    ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1", "#76b7b2", "#edc948", "#9c755f"];

fn f(v: f64) -> String {
    format!("{v:.3}")
}

pub fn render_svg(layout: &Layout, category_names: &[String]) -> Vec<u8> {
    let scale = match layout.kind {
        LayoutKind::TwoD => 1.0,
        LayoutKind::ThreeD => 512.0 / layout.bounds.x.max(layout.bounds.y),
    };
    let width = layout.bounds.x * scale;
    let height = layout.bounds.y * scale;
    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">",
        f(width),
        f(height),
        f(width),
        f(height)
    );
    svg.push_str("<defs><pattern id=\"hatch\" width=\"8\" height=\"8\" patternUnits=\"userSpaceOnUse\" patternTransform=\"rotate(45)\"><line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"8\" stroke=\"#999999\" stroke-width=\"2\"/></pattern></defs>");
    let _ = write!(
        svg,
        "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\" stroke=\"#333333\"/>",
        f(width),
        f(height)
    );

    // canvas/room coordinates are y-up; svg is y-down
    let sy = |y: f64| height - y * scale;

    if let Some(region) = &layout.product_region {
        let _ = write!(
            svg,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"url(#hatch)\" stroke=\"#999999\"/>",
            f(region.x * scale),
            f(sy(region.y + region.h)),
            f(region.w * scale),
            f(region.h * scale)
        );
    }

    for obj in &layout.objects {
        let color = COLORS[obj.category % COLORS.len()];
        let (cx, cy) = (obj.location[0] * scale, sy(obj.location[1]));
        let (w, h) = (obj.size[0] * scale, obj.size[1] * scale);
        let (x, y) = (cx - w / 2.0, cy - h / 2.0);
        let name = category_names.get(obj.category).map(|s| s.as_str()).unwrap_or("?");
        match layout.kind {
            LayoutKind::TwoD => {
                let _ = write!(
                    svg,
                    "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" fill-opacity=\"0.55\" stroke=\"{}\"/>",
                    f(x), f(y), f(w), f(h), color, color
                );
            }
            LayoutKind::ThreeD => {
                // rotation about the gravity axis shows up as an in-plane
                // rotation of the footprint (negated: y is flipped)
                let deg = -obj.rotation.to_degrees();
                let _ = write!(
                    svg,
                    "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" fill-opacity=\"0.55\" stroke=\"{}\" transform=\"rotate({} {} {})\"/>",
                    f(x), f(y), f(w), f(h), color, color, f(deg), f(cx), f(cy)
                );
                let tick = w.min(h) / 2.0;
                let tx = cx + tick * obj.rotation.cos();
                let ty = cy - tick * obj.rotation.sin();
                let _ = write!(
                    svg,
                    "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#222222\" stroke-width=\"1.5\"/>",
                    f(cx), f(cy), f(tx), f(ty)
                );
            }
        }
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" font-family=\"sans-serif\" fill=\"#222222\">{}</text>",
            f(cx),
            f(cy),
            name
        );
    }
    svg.push_str("</svg>");
    svg.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use layoutforge::core::{Bounds, ObjectRecord};

    #[test]
    fn empty_layout_renders_canvas_only() {
        let layout = Layout {
            kind: LayoutKind::TwoD,
            bounds: Bounds::canvas(512.0, 512.0),
            objects: vec![],
            product_region: None,
        };
        let bytes = render_svg(&layout, &[]);
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.matches("<rect").count(), 1); // background only
        assert!(text.starts_with("<svg"));
        assert!(text.ends_with("</svg>"));
    }

    #[test]
    fn one_rect_per_object_and_deterministic() {
        let layout = Layout {
            kind: LayoutKind::ThreeD,
            bounds: Bounds::room(6.0, 6.0, 3.0),
            objects: vec![
                ObjectRecord {
                    category: 0,
                    features: vec![0; 4],
                    location: vec![3.0, 3.0, 0.3],
                    size: vec![1.7, 2.0, 0.6],
                    rotation: 0.5,
                },
                ObjectRecord {
                    category: 1,
                    features: vec![0; 4],
                    location: vec![4.6, 3.1, 0.3],
                    size: vec![0.5, 0.5, 0.6],
                    rotation: 0.0,
                },
            ],
            product_region: None,
        };
        let names: Vec<String> = vec!["bed".into(), "nightstand".into()];
        let a = render_svg(&layout, &names);
        let b = render_svg(&layout, &names);
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.matches("<rect").count(), 1 + 2);
        assert!(text.contains("bed"));
    }
}
