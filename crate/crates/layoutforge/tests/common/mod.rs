//! Independent oracles for the acceptance suite. Everything here is
//! written directly from first principles (explicit matrix products, joint
//! enumeration, rasterization, brute-force recounts) and never calls the
//! code path it verifies.

#![allow(dead_code)]

use layoutforge::core::{Layout, LayoutKind, ObjectRecord, Rect};
use layoutforge::dcat::FamilySchedule;

/// Explicit (K'+1) x (K'+1) one-step transition matrix, column-stochastic:
/// entry [m][n] = P(x_t = m | x_{t-1} = n).
pub fn transition_matrix(fam: &FamilySchedule, t: usize) -> Vec<Vec<f64>> {
    let states = fam.k_prime + 1;
    let mask = fam.k_prime;
    let mut q = vec![vec![0.0; states]; states];
    for n in 0..states {
        if n == mask {
            q[mask][n] = 1.0;
            continue;
        }
        for m in 0..states {
            q[m][n] = if m == mask {
                fam.gamma[t]
            } else if m == n {
                fam.alpha[t]
            } else {
                fam.beta[t]
            };
        }
    }
    q
}

/// q(x_t | x_0) by multiplying the explicit per-step matrices onto a
/// one-hot vector.
pub fn marginal_by_matrix_product(fam: &FamilySchedule, x0: usize, t: usize) -> Vec<f64> {
    let states = fam.k_prime + 1;
    let mut dist = vec![0.0; states];
    dist[x0] = 1.0;
    for step in 1..=t {
        let q = transition_matrix(fam, step);
        let mut next = vec![0.0; states];
        for (m, row) in q.iter().enumerate() {
            for n in 0..states {
                next[m] += row[n] * dist[n];
            }
        }
        dist = next;
    }
    dist
}

/// q(x_{t-1} | x_t, x_0) by enumerating the joint over x_{t-1}.
pub fn posterior_by_enumeration(
    fam: &FamilySchedule,
    x_t: usize,
    x0: usize,
    t: usize,
) -> Option<Vec<f64>> {
    let states = fam.k_prime + 1;
    let prev = marginal_by_matrix_product(fam, x0, t - 1);
    let q = transition_matrix(fam, t);
    let mut joint: Vec<f64> = (0..states).map(|j| prev[j] * q[x_t][j]).collect();
    let z: f64 = joint.iter().sum();
    if z <= 0.0 {
        return None;
    }
    for v in &mut joint {
        *v /= z;
    }
    Some(joint)
}

/// Independent reimplementation of the relation tables, straight-line from
/// the rule rows, used for brute-force recounts.
pub fn classify_oracle(kind: LayoutKind, s: &ObjectRecord, o: &ObjectRecord) -> usize {
    let dx = s.location[0] - o.location[0];
    let dy = s.location[1] - o.location[1];
    let d = (dx * dx + dy * dy).sqrt();
    let (near, far) = match kind {
        LayoutKind::ThreeD => (1.0, 3.0),
        LayoutKind::TwoD => (80.0, 300.0),
    };
    let inside = |a: &ObjectRecord, b: &ObjectRecord| {
        (a.location[0] - b.location[0]).abs() <= b.size[0] / 2.0
            && (a.location[1] - b.location[1]).abs() <= b.size[1] / 2.0
    };

    if kind == LayoutKind::ThreeD {
        let hh = (s.size[2] + o.size[2]) / 2.0;
        let contained = inside(s, o) || inside(o, s);
        if s.location[2] - o.location[2] > hh && contained {
            return 8;
        }
        if o.location[2] - s.location[2] > hh && contained {
            return 9;
        }
    } else {
        let area_s = s.size[0] * s.size[1];
        let area_o = o.size[0] * o.size[1];
        let o_in_s = inside(o, s);
        let s_in_o = inside(s, o);
        if o_in_s && (!s_in_o || area_s > area_o) {
            return 8;
        }
        if s_in_o && (!o_in_s || area_o > area_s) {
            return 9;
        }
    }
    if d > far {
        return 10;
    }
    if dx.abs() <= 1e-12 && dy.abs() <= 1e-12 {
        return 10;
    }
    let mut theta = dy.atan2(dx);
    if theta >= std::f64::consts::PI {
        theta = -std::f64::consts::PI;
    }
    let close = d <= near;
    let q = std::f64::consts::FRAC_PI_4;
    if (-q..q).contains(&theta) {
        // right of
        if close {
            5
        } else {
            1
        }
    } else if (q..3.0 * q).contains(&theta) {
        // in front of (3D) / above (2D)
        if close {
            6
        } else {
            2
        }
    } else if theta >= 3.0 * q || theta < -3.0 * q {
        // left of
        if close {
            4
        } else {
            0
        }
    } else {
        // behind (3D) / below (2D)
        if close {
            7
        } else {
            3
        }
    }
}

/// Fraction of the region covered by boxes, by rasterizing on an
/// n x n grid of cell centers.
pub fn occlusion_raster_oracle(layout: &Layout, n: usize) -> f64 {
    let region = layout.product_region.as_ref().expect("region required");
    let mut covered = 0usize;
    let boxes: Vec<Rect> = layout.objects.iter().map(|o| o.footprint()).collect();
    for i in 0..n {
        for j in 0..n {
            let x = region.x + (i as f64 + 0.5) / n as f64 * region.w;
            let y = region.y + (j as f64 + 0.5) / n as f64 * region.h;
            if boxes
                .iter()
                .any(|b| x >= b.x && x <= b.x + b.w && y >= b.y && y <= b.y + b.h)
            {
                covered += 1;
            }
        }
    }
    covered as f64 / (n * n) as f64
}

pub fn cosine_oracle(a: &[f64], b: &[f64]) -> f64 {
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}
