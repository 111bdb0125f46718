//! Boundary tracing, simplification and triangulation of pixel regions.
//!
//! Polygons live in pixel-corner coordinates. Counter-clockwise means a
//! positive shoelace area in those coordinates, so roofs extruded along +z
//! face outward.

use crate::reconstruct::Component;

pub type Point = [f64; 2];

/// Twice the signed shoelace area; positive for counter-clockwise polygons.
pub fn signed_area2(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum()
}

pub fn is_counter_clockwise(poly: &[Point]) -> bool {
    signed_area2(poly) > 0.0
}

/// Follows the outer crack boundary of a 4-connected component with the
/// region on the right of the direction of travel and returns the corners
/// where the direction changes. The result is counter-clockwise. Holes are
/// not traced.
pub fn trace_outline(component: &Component) -> Vec<Point> {
    let (bx, by, bw, bh) = component.bbox();
    // padded occupancy mask over the bounding box
    let (mw, mh) = (bw + 2, bh + 2);
    let mut mask = vec![false; mw * mh];
    for &(x, y) in &component.pixels {
        mask[(y - by + 1) * mw + (x - bx + 1)] = true;
    }
    let inside = |px: isize, py: isize| -> bool {
        px >= 0
            && py >= 0
            && (px as usize) < mw
            && (py as usize) < mh
            && mask[py as usize * mw + px as usize]
    };
    // topmost, then leftmost pixel; pixels are stored in scan order
    let (sx, sy) = component.pixels[0];
    let start = ((sx - bx + 1) as isize, (sy - by + 1) as isize);
    let start_dir = (1isize, 0isize);

    let ahead = |c: (isize, isize), d: (isize, isize), side: (isize, isize)| {
        inside(
            c.0 + d.0.min(0) + side.0.min(0),
            c.1 + d.1.min(0) + side.1.min(0),
        )
    };
    let mut corners = vec![start];
    let (mut c, mut d) = (start, start_dir);
    loop {
        c = (c.0 + d.0, c.1 + d.1);
        let right = (-d.1, d.0);
        let left = (d.1, -d.0);
        let next = if !ahead(c, d, right) {
            right
        } else if ahead(c, d, left) {
            left
        } else {
            d
        };
        if c == start && next == start_dir {
            break;
        }
        if next != d {
            corners.push(c);
        }
        d = next;
    }
    corners
        .into_iter()
        .map(|(x, y)| [(x - 1) as f64 + bx as f64, (y - 1) as f64 + by as f64])
        .collect()
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - qx).powi(2) + (p[1] - qy).powi(2)).sqrt()
}

fn simplify_open(points: &[Point], epsilon: f64, keep: &mut [bool]) {
    let mut stack = vec![(0, points.len() - 1)];
    while let Some((first, last)) = stack.pop() {
        if last <= first + 1 {
            continue;
        }
        let (mut best, mut dmax) = (first, -1.0);
        for i in first + 1..last {
            let d = segment_distance(points[i], points[first], points[last]);
            if d > dmax {
                best = i;
                dmax = d;
            }
        }
        if dmax > epsilon {
            keep[best] = true;
            stack.push((first, best));
            stack.push((best, last));
        }
    }
}

/// Douglas-Peucker simplification of a closed polygon. The ring is split
/// at the first vertex and the vertex farthest from it. A tolerance of zero
/// returns the input.
pub fn simplify_closed(poly: &[Point], epsilon: f64) -> Vec<Point> {
    let n = poly.len();
    if epsilon <= 0.0 || n <= 3 {
        return poly.to_vec();
    }
    let dist = |a: Point, b: Point| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let far = (1..n)
        .max_by(|&i, &j| {
            dist(poly[0], poly[i])
                .total_cmp(&dist(poly[0], poly[j]))
                .then(j.cmp(&i))
        })
        .expect("ring has more than one vertex");
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[far] = true;
    let first: Vec<Point> = poly[..=far].to_vec();
    let mut second: Vec<Point> = poly[far..].to_vec();
    second.push(poly[0]);
    let mut k1 = vec![false; first.len()];
    simplify_open(&first, epsilon, &mut k1);
    let mut k2 = vec![false; second.len()];
    simplify_open(&second, epsilon, &mut k2);
    for (i, k) in k1.into_iter().enumerate() {
        keep[i] |= k;
    }
    for (i, k) in k2.into_iter().enumerate().take(second.len() - 1) {
        keep[far + i] |= k;
    }
    poly.iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(p, _)| *p)
        .collect()
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let on = |a: Point, b: Point, c: Point| {
        c[0] >= a[0].min(b[0])
            && c[0] <= a[0].max(b[0])
            && c[1] >= a[1].min(b[1])
            && c[1] <= a[1].max(b[1])
    };
    let (d1, d2) = (cross(q1, q2, p1), cross(q1, q2, p2));
    let (d3, d4) = (cross(p1, p2, q1), cross(p1, p2, q2));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on(q1, q2, p1))
        || (d2 == 0.0 && on(q1, q2, p2))
        || (d3 == 0.0 && on(p1, p2, q1))
        || (d4 == 0.0 && on(p1, p2, q2))
}

/// True if no two non-adjacent edges meet.
pub fn is_simple(poly: &[Point]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Largest distance from a vertex of `raw` to the ring `simplified`.
pub fn max_deviation(raw: &[Point], simplified: &[Point]) -> f64 {
    let m = simplified.len();
    raw.iter()
        .map(|&p| {
            (0..m)
                .map(|i| segment_distance(p, simplified[i], simplified[(i + 1) % m]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Ear-clipping triangulation of a simple counter-clockwise polygon.
/// Returns `n − 2` index triples, each counter-clockwise.
pub fn triangulate(poly: &[Point]) -> Vec<[usize; 3]> {
    let pts = poly;
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    let mut tris = Vec::with_capacity(pts.len().saturating_sub(2));
    let inside = |p: Point, a: Point, b: Point, c: Point| {
        cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0
    };
    while idx.len() > 3 {
        let m = idx.len();
        let mut ear = None;
        for k in 0..m {
            let (i0, i1, i2) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
            let (a, b, c) = (pts[i0], pts[i1], pts[i2]);
            if cross(a, b, c) <= 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&j| {
                j != i0
                    && j != i1
                    && j != i2
                    && pts[j] != a
                    && pts[j] != b
                    && pts[j] != c
                    && inside(pts[j], a, b, c)
            });
            if !blocked {
                ear = Some(k);
                break;
            }
        }
        // degenerate rings: clip the flattest corner to make progress
        let k = ear.unwrap_or_else(|| {
            (0..m)
                .min_by(|&p, &q| {
                    let f = |k: usize| {
                        cross(
                            pts[idx[(k + m - 1) % m]],
                            pts[idx[k]],
                            pts[idx[(k + 1) % m]],
                        )
                        .abs()
                    };
                    f(p).total_cmp(&f(q))
                })
                .expect("ring is non-empty")
        });
        tris.push([idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]]);
        idx.remove(k);
    }
    if idx.len() == 3 {
        tris.push([idx[0], idx[1], idx[2]]);
    }
    tris
}
