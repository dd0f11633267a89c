use serde::{Deserialize, Serialize};

use super::{orient2, solve_linear, GeometryError, Point2, Real};

/// 3x3 projective transform, kept normalized so that `m[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography<T> {
    m: [[T; 3]; 3],
}

impl<T: Real> Homography<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    pub fn translation(dx: T, dy: T) -> Self {
        let mut h = Self::identity();
        h.m[0][2] = dx;
        h.m[1][2] = dy;
        h
    }

    pub fn scaling(sx: T, sy: T) -> Self {
        let mut h = Self::identity();
        h.m[0][0] = sx;
        h.m[1][1] = sy;
        h
    }

    /// Rotation by `degrees` about `pivot`.
    pub fn rotation_about(pivot: Point2<T>, degrees: T) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        let z = T::zero();
        Self {
            m: [
                [c, -s, pivot.x - c * pivot.x + s * pivot.y],
                [s, c, pivot.y - s * pivot.x - c * pivot.y],
                [z, z, T::one()],
            ],
        }
    }

    /// Wraps a raw matrix, normalizing it so the bottom-right entry is one.
    pub fn from_matrix(m: [[T; 3]; 3]) -> Result<Self, GeometryError> {
        let h = Self { m };
        let scale = m.iter().flatten().fold(T::zero(), |a, v| a.max(v.abs()));
        if !(m[2][2].abs() > scale * T::lit(1e-12)) {
            return Err(GeometryError::Degenerate("m[2][2] vanishes"));
        }
        let h = h.normalized_unchecked();
        if !(h.det().abs() > T::lit(1e-9)) {
            return Err(GeometryError::Degenerate("singular matrix"));
        }
        Ok(h)
    }

    fn normalized_unchecked(mut self) -> Self {
        let k = self.m[2][2];
        for row in self.m.iter_mut() {
            for v in row.iter_mut() {
                *v = *v / k;
            }
        }
        self
    }

    pub fn matrix(&self) -> [[T; 3]; 3] {
        self.m
    }

    pub fn det(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Projective application `p -> (Hp).xy / (Hp).w`.
    pub fn apply(&self, p: Point2<T>) -> Result<Point2<T>, GeometryError> {
        let m = &self.m;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if !(w.abs() >= T::lit(1e-12)) {
            return Err(GeometryError::AtInfinity);
        }
        Ok(Point2::new(
            (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
        ))
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let m = &self.m;
        let det = self.det();
        if det.abs() < T::lit(1e-15) {
            return Err(GeometryError::Singular);
        }
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        Self::from_matrix(adj)
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn after(&self, first: &Self) -> Self {
        let (a, b) = (&self.m, &first.m);
        let mut m = [[T::zero(); 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        Self { m }.normalized_unchecked()
    }

    /// Exact fit through four correspondences `(source, destination)`.
    pub fn from_pairs(pairs: &[(Point2<T>, Point2<T>); 4]) -> Result<Self, GeometryError> {
        let src: Vec<_> = pairs.iter().map(|p| p.0).collect();
        let dst: Vec<_> = pairs.iter().map(|p| p.1).collect();
        if has_collinear_triple(&src) || has_collinear_triple(&dst) {
            return Err(GeometryError::Degenerate("three collinear points"));
        }
        Self::fit(pairs)
    }

    /// Least-squares fit (with `m[2][2] = 1`) over four or more correspondences.
    pub fn fit_least_squares(pairs: &[(Point2<T>, Point2<T>)]) -> Result<Self, GeometryError> {
        if pairs.len() < 4 {
            return Err(GeometryError::TooFew {
                needed: 4,
                got: pairs.len(),
            });
        }
        Self::fit(pairs)
    }

    fn fit(pairs: &[(Point2<T>, Point2<T>)]) -> Result<Self, GeometryError> {
        let src: Vec<_> = pairs.iter().map(|p| p.0).collect();
        let dst: Vec<_> = pairs.iter().map(|p| p.1).collect();
        let ts = conditioning(&src)?;
        let td = conditioning(&dst)?;
        let mut ata = vec![vec![T::zero(); 8]; 8];
        let mut atb = vec![T::zero(); 8];
        for (s, d) in src.iter().zip(&dst) {
            let s = ts.apply(*s)?;
            let d = td.apply(*d)?;
            let (z, o) = (T::zero(), T::one());
            let rows = [
                ([s.x, s.y, o, z, z, z, -d.x * s.x, -d.x * s.y], d.x),
                ([z, z, z, s.x, s.y, o, -d.y * s.x, -d.y * s.y], d.y),
            ];
            for (r, rhs) in rows {
                for i in 0..8 {
                    for j in 0..8 {
                        ata[i][j] = ata[i][j] + r[i] * r[j];
                    }
                    atb[i] = atb[i] + r[i] * rhs;
                }
            }
        }
        let h = solve_linear(ata, atb)?;
        let core = Self::from_matrix([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], T::one()]])?;
        Ok(td.inverse()?.after(&core).after(&ts))
    }

    /// Max over entries of the absolute elementwise difference (both normalized).
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .fold(T::zero(), |a, (x, y)| a.max((*x - *y).abs()))
    }
}

/// Similarity that centres the points and scales their mean distance to sqrt(2).
fn conditioning<T: Real>(pts: &[Point2<T>]) -> Result<Homography<T>, GeometryError> {
    let n = T::from_usize(pts.len()).unwrap();
    let cx = pts.iter().fold(T::zero(), |a, p| a + p.x) / n;
    let cy = pts.iter().fold(T::zero(), |a, p| a + p.y) / n;
    let mean = pts
        .iter()
        .fold(T::zero(), |a, p| a + (p.x - cx).hypot(p.y - cy))
        / n;
    if !(mean > T::zero()) {
        return Err(GeometryError::Degenerate("coincident points"));
    }
    let k = T::lit(std::f64::consts::SQRT_2) / mean;
    Ok(Homography::scaling(k, k).after(&Homography::translation(-cx, -cy)))
}

fn has_collinear_triple<T: Real>(pts: &[Point2<T>]) -> bool {
    let extent = pts
        .iter()
        .flat_map(|p| pts.iter().map(move |q| (p.x - q.x).abs().max((p.y - q.y).abs())))
        .fold(T::zero(), T::max);
    let tol = extent * extent * T::lit(1e-9);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            for k in j + 1..pts.len() {
                if orient2(pts[i], pts[j], pts[k]).abs() <= tol {
                    return true;
                }
            }
        }
    }
    false
}

/// Elementwise weighted mean of normalized homographies, renormalized.
///
/// Panics if `entries` is empty or a weight is not positive.
pub fn weighted_mean_homography<T: Real>(entries: &[(Homography<T>, T)]) -> Homography<T> {
    assert!(!entries.is_empty(), "weighted mean of no homographies");
    assert!(entries.iter().all(|(_, w)| *w > T::zero()), "weights must be positive");
    let total = entries.iter().fold(T::zero(), |a, (_, w)| a + *w);
    let mut m = [[T::zero(); 3]; 3];
    for (h, w) in entries {
        let k = *w / total;
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v + h.m[i][j] * k;
            }
        }
    }
    Homography { m }.normalized_unchecked()
}

#[cfg(test)]
mod tests {
    use super::*;

    type P = Point2<f64>;

    fn unit_square() -> [P; 4] {
        [P::new(0.0, 0.0), P::new(1.0, 0.0), P::new(1.0, 1.0), P::new(0.0, 1.0)]
    }

    #[test]
    fn unit_square_to_itself_is_identity() {
        let sq = unit_square();
        let pairs = [(sq[0], sq[0]), (sq[1], sq[1]), (sq[2], sq[2]), (sq[3], sq[3])];
        let h = Homography::from_pairs(&pairs).unwrap();
        assert!(h.max_abs_diff(&Homography::identity()) < 1e-12);
    }

    #[test]
    fn shifted_square_is_translation() {
        let sq = unit_square();
        let t = P::new(5.0, 7.0);
        let pairs = [
            (sq[0], sq[0].add(t)),
            (sq[1], sq[1].add(t)),
            (sq[2], sq[2].add(t)),
            (sq[3], sq[3].add(t)),
        ];
        let h = Homography::from_pairs(&pairs).unwrap();
        assert!(h.max_abs_diff(&Homography::translation(5.0, 7.0)) < 1e-12);
    }

    #[test]
    fn collinear_triple_is_degenerate() {
        let src = [P::new(0.0, 0.0), P::new(1.0, 1.0), P::new(2.0, 2.0), P::new(0.0, 3.0)];
        let dst = unit_square();
        let pairs = [(src[0], dst[0]), (src[1], dst[1]), (src[2], dst[2]), (src[3], dst[3])];
        assert!(matches!(Homography::from_pairs(&pairs), Err(GeometryError::Degenerate(_))));
    }

    #[test]
    fn back_projection_basics() {
        let p = P::new(3.5, -2.0);
        assert_eq!(Homography::identity().apply(p).unwrap(), p);
        assert_eq!(
            Homography::translation(5.0, 7.0).apply(P::new(0.0, 0.0)).unwrap(),
            P::new(5.0, 7.0)
        );
        let h = Homography::from_matrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]).unwrap();
        assert_eq!(h.apply(P::new(-1.0, 4.0)), Err(GeometryError::AtInfinity));
    }

    #[test]
    fn weighted_mean_of_translations() {
        let a = Homography::translation(10.0, 0.0);
        let b = Homography::translation(0.0, 10.0);
        let m = weighted_mean_homography(&[(a, 0.75), (b, 0.25)]);
        assert!(m.max_abs_diff(&Homography::translation(7.5, 2.5)) < 1e-12);
        assert_eq!(weighted_mean_homography(&[(a, 3.0)]), a);
        assert!(weighted_mean_homography(&[(b, 0.1), (b, 9.0)]).max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn inverse_round_trip() {
        let h = Homography::from_matrix([[1.2, 0.1, 30.0], [-0.05, 0.9, 12.0], [1e-4, 2e-4, 1.0]]).unwrap();
        let id = h.inverse().unwrap().after(&h);
        assert!(id.max_abs_diff(&Homography::identity()) < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let sq = unit_square().map(|p| Point2::new(p.x as f32 * 100.0, p.y as f32 * 100.0));
        let t = Point2::new(5.0f32, 7.0);
        let pairs = [
            (sq[0], sq[0].add(t)),
            (sq[1], sq[1].add(t)),
            (sq[2], sq[2].add(t)),
            (sq[3], sq[3].add(t)),
        ];
        let h = Homography::from_pairs(&pairs).unwrap();
        let q = h.apply(Point2::new(50.0, 50.0)).unwrap();
        assert!((q.x - 55.0).abs() < 1e-3 && (q.y - 57.0).abs() < 1e-3);
    }
}
