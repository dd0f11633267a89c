use std::cmp::Ordering;

use super::{orient2, GeometryError, Point2, Scalar};

fn lex<T: Scalar>(a: &Point2<T>, b: &Point2<T>) -> Ordering {
    a.x.partial_cmp(&b.x)
        .unwrap_or(Ordering::Equal)
        .then(a.y.partial_cmp(&b.y).unwrap_or(Ordering::Equal))
}

/// Counterclockwise convex hull (Andrew's monotone chain), starting from the
/// lexicographically smallest point, without collinear vertices.
pub fn convex_hull<T: Scalar>(points: &[Point2<T>]) -> Result<Vec<Point2<T>>, GeometryError> {
    let mut pts = points.to_vec();
    pts.sort_by(lex);
    pts.dedup();
    if pts.len() < 3 {
        return Err(GeometryError::Degenerate("fewer than three distinct points"));
    }
    let mut hull: Vec<Point2<T>> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && orient2(hull[hull.len() - 2], hull[hull.len() - 1], p) <= T::zero() {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && orient2(hull[hull.len() - 2], hull[hull.len() - 1], p) <= T::zero() {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() < 3 {
        return Err(GeometryError::Degenerate("all points collinear"));
    }
    Ok(hull)
}

/// Twice the signed area of a polygon (shoelace).
pub fn polygon_area2<T: Scalar>(poly: &[Point2<T>]) -> T {
    let mut acc = T::zero();
    for i in 0..poly.len() {
        let j = (i + 1) % poly.len();
        acc = acc + poly[i].cross(poly[j]);
    }
    acc
}

/// Indices (ascending, i.e. in hull order) of the four hull vertices enclosing the
/// largest area. Ties go to the lexicographically smallest index tuple.
///
/// Runs in O(h³): for every diagonal `(i, k)` the best apex on each side is chosen
/// independently, since the quadrilateral's area splits along that diagonal.
pub fn max_area_quadrilateral_indices<T: Scalar>(hull: &[Point2<T>]) -> Result<[usize; 4], GeometryError> {
    let h = hull.len();
    if h < 4 {
        return Err(GeometryError::TooFew { needed: 4, got: h });
    }
    let mut best: Option<(T, [usize; 4])> = None;
    for i in 0..h {
        for k in i + 2..h {
            if i == 0 && k == h - 1 {
                continue; // no vertex left on the far side
            }
            let mut near: Option<(T, usize)> = None;
            for j in i + 1..k {
                let a = orient2(hull[i], hull[j], hull[k]);
                if near.map_or(true, |(b, _)| a > b) {
                    near = Some((a, j));
                }
            }
            let mut far: Option<(T, usize)> = None;
            for l in (0..i).chain(k + 1..h) {
                let a = orient2(hull[k], hull[l], hull[i]);
                if far.map_or(true, |(b, _)| a > b) {
                    far = Some((a, l));
                }
            }
            let (Some((a1, j)), Some((a2, l))) = (near, far) else {
                continue;
            };
            let area = a1 + a2;
            let mut tuple = [i, j, k, l];
            tuple.sort_unstable();
            let better = match &best {
                None => true,
                Some((b, t)) => area > *b || (area == *b && tuple < *t),
            };
            if better {
                best = Some((area, tuple));
            }
        }
    }
    Ok(best.expect("h >= 4 yields a candidate").1)
}

/// The four hull vertices enclosing the maximum area, in hull order.
pub fn max_area_quadrilateral<T: Scalar>(hull: &[Point2<T>]) -> Result<[Point2<T>; 4], GeometryError> {
    let idx = max_area_quadrilateral_indices(hull)?;
    Ok(idx.map(|i| hull[i]))
}
