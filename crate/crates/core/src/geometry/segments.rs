use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{GeometryError, LatticePoint, Point2, Real};

/// Line in normal form: points satisfy `x cos(theta) + y sin(theta) = rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarLine<T> {
    pub rho: T,
    pub theta: T,
}

impl<T: Real> PolarLine<T> {
    pub fn new(rho: T, theta: T) -> Self {
        Self { rho, theta }.canonical()
    }

    /// Line through two distinct points.
    pub fn through(a: Point2<T>, b: Point2<T>) -> Self {
        let d = b.sub(a);
        let theta = d.y.atan2(d.x) + T::lit(std::f64::consts::FRAC_PI_2);
        let rho = a.x * theta.cos() + a.y * theta.sin();
        Self { rho, theta }.canonical()
    }

    /// Same line with `theta` folded into `[0, pi)`.
    pub fn canonical(self) -> Self {
        let pi = T::lit(std::f64::consts::PI);
        let mut theta = self.theta % (pi + pi);
        let mut rho = self.rho;
        if theta < T::zero() {
            theta = theta + pi + pi;
        }
        if theta >= pi {
            theta = theta - pi;
            rho = -rho;
        }
        Self { rho, theta }
    }

    pub fn signed_distance(&self, p: Point2<T>) -> T {
        p.x * self.theta.cos() + p.y * self.theta.sin() - self.rho
    }

    /// Position of the foot of `p` along the line direction `(-sin, cos)`.
    pub fn position_along(&self, p: Point2<T>) -> T {
        -p.x * self.theta.sin() + p.y * self.theta.cos()
    }

    /// Point of the line at `position_along == t`.
    pub fn point_at(&self, t: T) -> Point2<T> {
        let (s, c) = self.theta.sin_cos();
        Point2::new(self.rho * c - t * s, self.rho * s + t * c)
    }

    pub fn intersect(&self, other: &Self) -> Option<Point2<T>> {
        let (s1, c1) = self.theta.sin_cos();
        let (s2, c2) = other.theta.sin_cos();
        let det = c1 * s2 - s1 * c2;
        if det.abs() < T::lit(1e-9) {
            return None;
        }
        Some(Point2::new(
            (self.rho * s2 - other.rho * s1) / det,
            (c1 * other.rho - c2 * self.rho) / det,
        ))
    }

    /// `(angle between normals in radians, rho difference)` after aligning the two
    /// normals to the same half-plane.
    pub fn deviation(&self, other: &Self) -> (T, T) {
        let (s1, c1) = self.theta.sin_cos();
        let (s2, c2) = other.theta.sin_cos();
        let dot = c1 * c2 + s1 * s2;
        let cross = c1 * s2 - s1 * c2;
        let mut rho = other.rho;
        let mut angle = cross.atan2(dot);
        let half = T::lit(std::f64::consts::FRAC_PI_2);
        if angle.abs() > half {
            rho = -rho;
            angle = if angle > T::zero() {
                angle - T::lit(std::f64::consts::PI)
            } else {
                angle + T::lit(std::f64::consts::PI)
            };
        }
        (angle.abs(), (rho - self.rho).abs())
    }
}

/// Mean angular deviation, in degrees, of segments joining lattice-adjacent centres
/// from their ideal lattice direction (horizontal pairs against 0°, vertical pairs
/// against 90°), measured with `atan2(dy, dx)`.
///
/// A positive result means the centres are turned by that angle from x toward y;
/// rotating them by the negated value undoes it.
pub fn rotation_from_segments<T: Real>(centres: &[(Point2<T>, LatticePoint)]) -> Result<T, GeometryError> {
    let mut at: HashMap<LatticePoint, Point2<T>> = HashMap::with_capacity(centres.len());
    for (p, lp) in centres {
        at.entry(*lp).or_insert(*p);
    }
    let mut sum = T::zero();
    let mut count = 0usize;
    let mut keys: Vec<&LatticePoint> = at.keys().collect();
    keys.sort();
    for lp in keys {
        let p = at[lp];
        if let Some(q) = at.get(&LatticePoint::new(lp.col + 1, lp.row)) {
            let d = q.sub(p);
            sum = sum + d.y.atan2(d.x);
            count += 1;
        }
        if let Some(q) = at.get(&LatticePoint::new(lp.col, lp.row + 1)) {
            let d = q.sub(p);
            sum = sum + (-d.x).atan2(d.y);
            count += 1;
        }
    }
    if count == 0 {
        return Err(GeometryError::NoAdjacentPairs);
    }
    Ok((sum / T::from_usize(count).unwrap()).to_degrees())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitStatus {
    /// The fitted line passed the deviation guard and replaces the expected one.
    Refined,
    /// The fit strayed beyond the guard; the expected line is kept.
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit<T> {
    pub line: PolarLine<T>,
    pub status: FitStatus,
    pub used: usize,
}

const BAND_PX: f64 = 3.0;
const MIN_PIXELS: usize = 8;
const MAX_ANGLE_DEG: f64 = 2.0;
const MAX_RHO_PX: f64 = 4.0;

/// Orthogonal least-squares refit of an outer grid line from edge pixels.
///
/// Only pixels within ±3 px of `expected` whose position along the line falls in one of
/// `free_spans` (stretches next to intersections believed empty) take part. The fit
/// replaces `expected` only if it stays within 2° and 4 px of it.
pub fn outer_line_regression<T: Real>(
    edge_pixels: &[Point2<T>],
    expected: PolarLine<T>,
    free_spans: &[(T, T)],
) -> Result<LineFit<T>, GeometryError> {
    let band = T::lit(BAND_PX);
    let used: Vec<Point2<T>> = edge_pixels
        .iter()
        .copied()
        .filter(|p| expected.signed_distance(*p).abs() <= band)
        .filter(|p| {
            let t = expected.position_along(*p);
            free_spans.iter().any(|&(a, b)| t >= a.min(b) && t <= a.max(b))
        })
        .collect();
    if used.len() < MIN_PIXELS {
        return Err(GeometryError::InsufficientPixels(used.len()));
    }
    let n = T::from_usize(used.len()).unwrap();
    let cx = used.iter().fold(T::zero(), |a, p| a + p.x) / n;
    let cy = used.iter().fold(T::zero(), |a, p| a + p.y) / n;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for p in &used {
        let (dx, dy) = (p.x - cx, p.y - cy);
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    let direction = T::lit(0.5) * (sxy + sxy).atan2(sxx - syy);
    let theta = direction + T::lit(std::f64::consts::FRAC_PI_2);
    let fitted = PolarLine {
        rho: cx * theta.cos() + cy * theta.sin(),
        theta,
    }
    .canonical();
    let (dtheta, drho) = expected.deviation(&fitted);
    let status = if dtheta.to_degrees() < T::lit(MAX_ANGLE_DEG) && drho < T::lit(MAX_RHO_PX) {
        FitStatus::Refined
    } else {
        FitStatus::Rejected
    };
    Ok(LineFit {
        line: if status == FitStatus::Refined { fitted } else { expected },
        status,
        used: used.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type P = Point2<f64>;

    fn grid_centres(rot: f64, jitter: f64, seed: u64) -> Vec<(P, LatticePoint)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pivot = P::new(250.0, 250.0);
        let mut out = Vec::new();
        for r in 0..13 {
            for c in 0..13 {
                if rng.gen_bool(0.4) {
                    continue;
                }
                let p = P::new(36.0 + c as f64 * 35.7, 36.0 + r as f64 * 35.7).rotated_about(pivot, rot);
                let j = P::new(rng.gen_range(-jitter..=jitter), rng.gen_range(-jitter..=jitter));
                out.push((p.add(j), LatticePoint::new(c, r)));
            }
        }
        out
    }

    #[test]
    fn axis_aligned_centres_have_no_rotation() {
        let est = rotation_from_segments(&grid_centres(0.0, 0.0, 1)).unwrap();
        assert!(est.abs() < 1e-12);
    }

    #[test]
    fn recovers_small_rotation() {
        let est = rotation_from_segments(&grid_centres(0.4, 0.0, 2)).unwrap();
        assert!((est - 0.4).abs() < 1e-9, "{est}");
    }

    #[test]
    fn recovers_rotation_under_jitter() {
        for seed in 0..20 {
            let est = rotation_from_segments(&grid_centres(2.0, 0.2, seed)).unwrap();
            assert!((est - 2.0).abs() <= 0.1, "seed {seed}: {est}");
        }
    }

    #[test]
    fn estimator_is_odd_under_transposition() {
        for seed in 0..10 {
            let centres = grid_centres(1.3, 0.2, seed);
            let transposed: Vec<(P, LatticePoint)> = centres
                .iter()
                .map(|(p, l)| (P::new(p.y, p.x), LatticePoint::new(l.row, l.col)))
                .collect();
            let a = rotation_from_segments(&centres).unwrap();
            let b = rotation_from_segments(&transposed).unwrap();
            assert!((a + b).abs() <= 1e-9, "seed {seed}: {a} vs {b}");
        }
    }

    #[test]
    fn no_adjacent_pairs() {
        let centres = [
            (P::new(0.0, 0.0), LatticePoint::new(0, 0)),
            (P::new(70.0, 70.0), LatticePoint::new(2, 2)),
        ];
        assert_eq!(rotation_from_segments(&centres), Err(GeometryError::NoAdjacentPairs));
    }

    #[test]
    fn single_precision_rotation() {
        let centres: Vec<(Point2<f32>, LatticePoint)> = grid_centres(0.7, 0.0, 3)
            .into_iter()
            .map(|(p, l)| (Point2::new(p.x as f32, p.y as f32), l))
            .collect();
        let est = rotation_from_segments(&centres).unwrap();
        assert!((est - 0.7).abs() < 1e-3);
    }

    fn near_horizontal(y0: f64, slope: f64) -> PolarLine<f64> {
        PolarLine::through(P::new(0.0, y0), P::new(100.0, y0 + 100.0 * slope))
    }

    #[test]
    fn collinear_pixels_reproduce_the_line() {
        let line = near_horizontal(40.0, 0.0);
        let px: Vec<P> = (0..60).map(|x| P::new(x as f64 + 10.0, 40.0)).collect();
        let fit = outer_line_regression(&px, line, &[(-1e9, 1e9)]).unwrap();
        assert_eq!(fit.status, FitStatus::Refined);
        let (da, dr) = line.deviation(&fit.line);
        assert!(da < 1e-9 && dr < 1e-9);
    }

    #[test]
    fn noisy_pixels_match_closed_form_regression() {
        let truth = near_horizontal(52.0, 0.01);
        let mut px = Vec::new();
        for i in 0..120 {
            let x = 20.0 + i as f64 * 2.0;
            let y = 52.0 + 0.01 * x;
            px.push(P::new(x, y + 1.0));
            px.push(P::new(x, y - 1.0));
        }
        let fit = outer_line_regression(&px, near_horizontal(53.0, 0.0), &[(-1e9, 1e9)]).unwrap();
        assert_eq!(fit.status, FitStatus::Refined);
        // ordinary least squares of y on x as the oracle
        let n = px.len() as f64;
        let mx = px.iter().map(|p| p.x).sum::<f64>() / n;
        let my = px.iter().map(|p| p.y).sum::<f64>() / n;
        let sxy: f64 = px.iter().map(|p| (p.x - mx) * (p.y - my)).sum();
        let sxx: f64 = px.iter().map(|p| (p.x - mx).powi(2)).sum();
        let slope = sxy / sxx;
        let oracle = PolarLine::through(P::new(0.0, my - slope * mx), P::new(1.0, my - slope * (mx - 1.0)));
        let (da, dr) = oracle.deviation(&fit.line);
        assert!(da.to_degrees() < 0.01 && dr < 0.05);
        let (da, dr) = truth.deviation(&fit.line);
        assert!(da.to_degrees() < 0.2 && dr < 0.5);
    }

    #[test]
    fn occluder_is_rejected_by_guard() {
        let line = near_horizontal(100.0, 0.0);
        let mut px: Vec<P> = (60..68).map(|x| P::new(x as f64, 100.0)).collect();
        // an arm edge crossing the band at a steep angle dominates the fit
        for i in 0..80 {
            let t = i as f64 * 0.1;
            px.push(P::new(40.0 + t * 3.0, 97.0 + t * 0.75));
        }
        let fit = outer_line_regression(&px, line, &[(-1e9, 1e9)]).unwrap();
        assert_eq!(fit.status, FitStatus::Rejected);
        assert_eq!(fit.line, line);
    }

    #[test]
    fn too_few_pixels_in_free_spans() {
        let line = near_horizontal(10.0, 0.0);
        let px: Vec<P> = (0..50).map(|x| P::new(x as f64, 10.0)).collect();
        // position along a horizontal line runs along -x
        let err = outer_line_regression(&px, line, &[(-3.5, 0.5)]).unwrap_err();
        assert_eq!(err, GeometryError::InsufficientPixels(4));
    }

    #[test]
    fn intersections_and_canonical_form() {
        let a = PolarLine::new(-5.0, std::f64::consts::PI * 1.5);
        assert!(a.theta >= 0.0 && a.theta < std::f64::consts::PI);
        let v = PolarLine::new(10.0, 0.0);
        let h = PolarLine::new(20.0, std::f64::consts::FRAC_PI_2);
        let p = v.intersect(&h).unwrap();
        assert!((p.x - 10.0).abs() < 1e-12 && (p.y - 20.0).abs() < 1e-12);
    }
}
