//! Linear and circular Hough transforms over binary edge maps.

use serde::{Deserialize, Serialize};

use crate::frame::EdgeMap;
use crate::geometry::{solve_linear, Point2, PolarLine};

/// A detected line in normal form: `x cos(theta) + y sin(theta) = rho`, theta in `[0, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub rho: f64,
    pub theta: f64,
    pub score: u32,
}

impl Line {
    pub fn polar(&self) -> PolarLine<f64> {
        PolarLine {
            rho: self.rho,
            theta: self.theta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    pub score: u32,
}

impl Circle {
    pub fn center(&self) -> Point2<f64> {
        Point2::new(self.cx, self.cy)
    }
}

/// Line Hough transform. Returns accumulator cells that are local maxima over their
/// 3x3 neighbourhood (theta wraps around with rho mirrored) and carry at least
/// `min_votes`, strongest first.
pub fn linear_hough(e: &EdgeMap, theta_step: f64, rho_step: f64, min_votes: u32) -> Vec<Line> {
    assert!(theta_step > 0.0 && rho_step > 0.0, "hough steps must be positive");
    let n_theta = ((std::f64::consts::PI / theta_step).round() as usize).max(1);
    let diag = (e.width() as f64).hypot(e.height() as f64);
    let offset = (diag / rho_step).ceil() as usize + 1;
    let n_rho = 2 * offset + 1;
    let trig: Vec<(f64, f64)> = (0..n_theta)
        .map(|t| {
            let a = t as f64 * theta_step;
            (a.cos() / rho_step, a.sin() / rho_step)
        })
        .collect();

    let mut acc = vec![0u32; n_theta * n_rho];
    for (x, y) in e.points() {
        let (x, y) = (x as f64, y as f64);
        for (t, (c, s)) in trig.iter().enumerate() {
            let bin = (x * c + y * s).round() as isize + offset as isize;
            acc[t * n_rho + bin as usize] += 1;
        }
    }

    let min_votes = min_votes.max(1);
    let mut lines = Vec::new();
    for t in 0..n_theta {
        for b in 0..n_rho {
            let idx = t * n_rho + b;
            let v = acc[idx];
            if v < min_votes {
                continue;
            }
            let mut peak = true;
            'nb: for dt in [-1isize, 0, 1] {
                for db in [-1isize, 0, 1] {
                    if dt == 0 && db == 0 {
                        continue;
                    }
                    let mut tt = t as isize + dt;
                    let mut bb = b as isize + db;
                    if tt < 0 || tt >= n_theta as isize {
                        // wrap: theta + pi is the same line with rho negated
                        tt = tt.rem_euclid(n_theta as isize);
                        bb = 2 * offset as isize - bb;
                    }
                    if bb < 0 || bb >= n_rho as isize {
                        continue;
                    }
                    let nidx = tt as usize * n_rho + bb as usize;
                    let nv = acc[nidx];
                    if nv > v || (nv == v && nidx < idx) {
                        peak = false;
                        break 'nb;
                    }
                }
            }
            if peak {
                lines.push(Line {
                    rho: (b as f64 - offset as f64) * rho_step,
                    theta: t as f64 * theta_step,
                    score: v,
                });
            }
        }
    }
    lines.sort_by(|a, b| {
        b.score
            .cmp(&a.score)
            .then(a.theta.total_cmp(&b.theta))
            .then(a.rho.total_cmp(&b.rho))
    });
    lines
}

/// Radius planes searched at most; wider bands are strided evenly.
const MAX_RADII: u32 = 10;

fn radii(r_min: f64, r_max: f64) -> Vec<u32> {
    let lo = r_min.ceil().max(1.0) as u32;
    let hi = r_max.floor() as u32;
    if lo > hi {
        return vec![r_min.round().max(1.0) as u32];
    }
    let stride = (hi - lo + 1).div_ceil(MAX_RADII);
    (lo..=hi).step_by(stride as usize).collect()
}

/// Circle Hough transform over integer radii in `[r_min, r_max]` (at most ten of
/// them, strided when the band is wider).
///
/// When the edge map carries gradients each edge pixel votes only along its gradient
/// direction (both senses, so dark and bright disks both register); otherwise it votes
/// on the full ring. Scores are 3x3 box sums of the votes; survivors are suppressed
/// greedily within half a radius of a stronger circle. Centres are refined to the vote
/// centroid of the peak's neighbourhood.
pub fn circular_hough(e: &EdgeMap, r_min: f64, r_max: f64, min_votes: u32) -> Vec<Circle> {
    assert!(0.0 < r_min && r_min <= r_max, "circle search needs 0 < r_min <= r_max");
    let (w, h) = (e.width() as usize, e.height() as usize);
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let radii = radii(r_min, r_max);
    let plane = w * h;
    let mut acc = vec![0u16; plane * radii.len()];
    let (wf, hf) = (w as f64 - 0.5, h as f64 - 0.5);
    let vote = |acc: &mut [u16], k: usize, cx: f64, cy: f64| {
        if cx >= -0.5 && cy >= -0.5 && cx < wf && cy < hf {
            let i = k * plane + (cy + 0.5) as usize * w + (cx + 0.5) as usize;
            acc[i] = acc[i].saturating_add(1);
        }
    };

    if e.has_gradients() {
        let dirs: Vec<(f64, f64, f64, f64)> = e
            .points()
            .filter_map(|(x, y)| {
                let [gx, gy] = e.gradient(x, y).unwrap_or([0.0, 0.0]);
                let norm = gx.hypot(gy);
                (norm > 0.0).then(|| (x as f64, y as f64, (gx / norm) as f64, (gy / norm) as f64))
            })
            .collect();
        // one radius plane at a time keeps the scattered writes in cache
        for (k, &r) in radii.iter().enumerate() {
            let r = r as f64;
            for &(x, y, ux, uy) in &dirs {
                vote(&mut acc, k, x + ux * r, y + uy * r);
                vote(&mut acc, k, x - ux * r, y - uy * r);
            }
        }
    } else {
        for (k, &r) in radii.iter().enumerate() {
            let mut offsets: Vec<(i32, i32)> = (0..((std::f64::consts::TAU * r as f64 * 2.0).ceil() as usize))
                .map(|i| {
                    let a = i as f64 / (2.0 * r as f64);
                    ((r as f64 * a.cos()).round() as i32, (r as f64 * a.sin()).round() as i32)
                })
                .collect();
            offsets.sort_unstable();
            offsets.dedup();
            for (x, y) in e.points() {
                for &(dx, dy) in &offsets {
                    vote(&mut acc, k, x as f64 - dx as f64, y as f64 - dy as f64);
                }
            }
        }
    }

    // 3x3 box sums per radius plane
    let mut score = vec![0u32; acc.len()];
    let mut rows = vec![0u32; plane];
    for k in 0..radii.len() {
        let a = &acc[k * plane..(k + 1) * plane];
        for (ar, rr) in a.chunks_exact(w).zip(rows.chunks_exact_mut(w)) {
            if w == 1 {
                rr[0] = ar[0] as u32;
                continue;
            }
            rr[0] = ar[0] as u32 + ar[1] as u32;
            for x in 1..w - 1 {
                rr[x] = ar[x - 1] as u32 + ar[x] as u32 + ar[x + 1] as u32;
            }
            rr[w - 1] = ar[w - 2] as u32 + ar[w - 1] as u32;
        }
        let out = &mut score[k * plane..(k + 1) * plane];
        for y in 0..h {
            let o = &mut out[y * w..(y + 1) * w];
            o.copy_from_slice(&rows[y * w..(y + 1) * w]);
            for yy in [y.wrapping_sub(1), y + 1] {
                if yy < h {
                    for (v, r) in o.iter_mut().zip(&rows[yy * w..(yy + 1) * w]) {
                        *v += r;
                    }
                }
            }
        }
    }

    let min_votes = min_votes.max(1);
    let mut candidates: Vec<(u32, usize, usize, usize)> = Vec::new();
    for k in 0..radii.len() {
        for y in 0..h {
            for x in 0..w {
                let i = k * plane + y * w + x;
                let v = score[i];
                if v < min_votes {
                    continue;
                }
                let mut peak = true;
                'nb: for dk in -1isize..=1 {
                    let kk = k as isize + dk;
                    if kk < 0 || kk >= radii.len() as isize {
                        continue;
                    }
                    for dy in -1isize..=1 {
                        for dx in -1isize..=1 {
                            let (xx, yy) = (x as isize + dx, y as isize + dy);
                            if (dk, dx, dy) == (0, 0, 0) || xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
                                continue;
                            }
                            let j = kk as usize * plane + yy as usize * w + xx as usize;
                            if score[j] > v || (score[j] == v && j < i) {
                                peak = false;
                                break 'nb;
                            }
                        }
                    }
                }
                if peak {
                    candidates.push((v, k, x, y));
                }
            }
        }
    }
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then((a.1, a.3, a.2).cmp(&(b.1, b.3, b.2))));

    let mut circles: Vec<Circle> = Vec::new();
    for (v, k, x, y) in candidates {
        let r = radii[k] as f64;
        let suppressed = circles.iter().any(|c| {
            let d = (c.cx - x as f64).hypot(c.cy - y as f64);
            d <= 0.5 * c.r.max(r)
        });
        if suppressed {
            continue;
        }
        let a = &acc[k * plane..(k + 1) * plane];
        let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
        for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                let wv = a[yy * w + xx] as f64;
                sx += wv * xx as f64;
                sy += wv * yy as f64;
                sw += wv;
            }
        }
        let (cx, cy) = if sw > 0.0 { (sx / sw, sy / sw) } else { (x as f64, y as f64) };
        circles.push(Circle { cx, cy, r, score: v });
    }
    circles
}

/// Algebraic (Kåsa) circle fit to the edge pixels lying within `band` of `c`. When the
/// map carries gradients, only pixels whose gradient is roughly radial take part.
/// Returns `None` with fewer than 8 supporting pixels or a degenerate fit.
pub fn refine_circle(e: &EdgeMap, c: &Circle, band: f64) -> Option<Circle> {
    let reach = c.r + band + 1.0;
    let x0 = (c.cx - reach).floor().max(0.0) as u32;
    let y0 = (c.cy - reach).floor().max(0.0) as u32;
    let x1 = ((c.cx + reach).ceil() as u32).min(e.width().saturating_sub(1));
    let y1 = ((c.cy + reach).ceil() as u32).min(e.height().saturating_sub(1));
    let mut pts = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            if !e.get(x, y) {
                continue;
            }
            let (dx, dy) = (x as f64 - c.cx, y as f64 - c.cy);
            let d = dx.hypot(dy);
            if (d - c.r).abs() > band || d == 0.0 {
                continue;
            }
            if let Some([gx, gy]) = e.gradient(x, y) {
                let g = (gx as f64).hypot(gy as f64);
                if g == 0.0 || ((gx as f64 * dx + gy as f64 * dy) / (g * d)).abs() < 0.8 {
                    continue;
                }
            }
            pts.push((x as f64, y as f64));
        }
    }
    if pts.len() < 8 {
        return None;
    }
    // minimise sum (x² + y² + D x + E y + F)², coordinates centred for conditioning
    let (ox, oy) = (c.cx, c.cy);
    let mut ata = vec![vec![0.0; 3]; 3];
    let mut atb = vec![0.0; 3];
    for &(x, y) in &pts {
        let (x, y) = (x - ox, y - oy);
        let row = [x, y, 1.0];
        let rhs = -(x * x + y * y);
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * rhs;
        }
    }
    let sol = solve_linear(ata, atb).ok()?;
    let (cx, cy) = (-sol[0] / 2.0, -sol[1] / 2.0);
    let r2 = cx * cx + cy * cy - sol[2];
    if !(r2 > 0.0) {
        return None;
    }
    let refined = Circle {
        cx: cx + ox,
        cy: cy + oy,
        r: r2.sqrt(),
        score: c.score,
    };
    if refined.center().distance(c.center()) > band + 1.0 || (refined.r - c.r).abs() > band + 1.0 {
        return None;
    }
    Some(refined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ring(w: u32, h: u32, cx: f64, cy: f64, r: f64) -> Vec<(u32, u32)> {
        let mut pts = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let d = (x as f64 - cx).hypot(y as f64 - cy);
                if (d - r).abs() < 0.5 {
                    pts.push((x, y));
                }
            }
        }
        pts
    }

    /// Brute-force accumulator: count, for every (theta, rho) bin, the pixels whose
    /// distance to that exact line is at most half a bin.
    fn brute_force_peaks(pts: &[(u32, u32)], theta_step: f64, n_rho: isize, top: usize) -> Vec<(usize, isize, usize)> {
        let n_theta = (std::f64::consts::PI / theta_step).round() as usize;
        let mut cells = Vec::new();
        for t in 0..n_theta {
            let a = t as f64 * theta_step;
            for b in -n_rho..=n_rho {
                let votes = pts
                    .iter()
                    .filter(|&&(x, y)| {
                        let r = x as f64 * a.cos() + y as f64 * a.sin();
                        r.round() as isize == b
                    })
                    .count();
                cells.push((t, b, votes));
            }
        }
        cells.sort_by(|a, b| b.2.cmp(&a.2));
        cells.truncate(top);
        cells
    }

    #[test]
    fn horizontal_row_gives_one_line() {
        let e = EdgeMap::from_points(120, 60, (10..110).map(|x| (x, 23)));
        let lines = linear_hough(&e, 1f64.to_radians(), 1.0, 50);
        assert_eq!(lines.len(), 1, "{lines:?}");
        let l = lines[0];
        assert!((l.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        assert!((l.rho - 23.0).abs() < 1e-9);
        assert_eq!(l.score, 100);
    }

    #[test]
    fn empty_maps_detect_nothing() {
        let e = EdgeMap::new(50, 40);
        assert!(linear_hough(&e, 0.02, 1.0, 1).is_empty());
        assert!(circular_hough(&e, 5.0, 9.0, 1).is_empty());
    }

    #[test]
    fn perpendicular_segments_match_brute_force() {
        let mut pts: Vec<(u32, u32)> = (5..75).map(|x| (x, 30)).collect();
        pts.extend((3..70).map(|y| (40, y)));
        pts.sort_unstable();
        pts.dedup();
        let e = EdgeMap::from_points(80, 80, pts.clone());
        let step = 1f64.to_radians();
        let lines: Vec<Line> = linear_hough(&e, step, 1.0, 40);
        assert_eq!(lines.len(), 2, "{lines:?}");
        let truth = brute_force_peaks(&pts, step, 115, 2);
        for (t, b, votes) in truth {
            let hit = lines.iter().any(|l| {
                ((l.theta / step).round() as isize - t as isize).abs() <= 1
                    && (l.rho - b as f64).abs() <= 1.0
                    && l.score as usize == votes
            });
            assert!(hit, "missing peak at theta bin {t}, rho {b}");
        }
    }

    #[test]
    fn ring_without_gradients() {
        let e = EdgeMap::from_points(100, 100, ring(100, 100, 50.0, 50.0, 12.0));
        let circles = circular_hough(&e, 10.0, 14.0, 120);
        assert_eq!(circles.len(), 1, "{circles:?}");
        let c = circles[0];
        assert!((c.cx - 50.0).abs() <= 1.0 && (c.cy - 50.0).abs() <= 1.0);
        assert!((c.r - 12.0).abs() <= 1.0);
    }

    #[test]
    fn tangent_rings() {
        let mut pts = ring(120, 80, 35.0, 40.0, 12.0);
        pts.extend(ring(120, 80, 59.0, 40.0, 12.0));
        let e = EdgeMap::from_points(120, 80, pts);
        let circles = circular_hough(&e, 10.0, 14.0, 120);
        assert_eq!(circles.len(), 2, "{circles:?}");
        let d = circles[0].center().distance(circles[1].center());
        assert!((d - 24.0).abs() <= 1.5);
    }

    #[test]
    fn translation_equivariance() {
        let base = EdgeMap::from_points(140, 140, ring(140, 140, 40.0, 45.0, 11.0));
        let c0 = circular_hough(&base, 9.0, 13.0, 40);
        for (dx, dy) in [(7, 3), (30, 41), (-12, 22)] {
            let moved = base.translated(dx, dy);
            let c1 = circular_hough(&moved, 9.0, 13.0, 40);
            assert_eq!(c0.len(), c1.len());
            for (a, b) in c0.iter().zip(&c1) {
                assert!((b.cx - a.cx - dx as f64).abs() <= 1.0);
                assert!((b.cy - a.cy - dy as f64).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn scores_respect_threshold_and_no_spurious_peaks() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..5 {
            let (cx, cy) = (rng.gen_range(30.0..90.0), rng.gen_range(30.0..90.0));
            let e = EdgeMap::from_points(120, 120, ring(120, 120, cx, cy, 13.0));
            let circles = circular_hough(&e, 11.0, 15.0, 30);
            assert!(!circles.is_empty());
            assert!(circles.iter().all(|c| c.score >= 30));
            let top = circles[0].score as f64;
            assert!(circles[1..].iter().all(|c| (c.score as f64) < 0.8 * top));
            assert!(circles[0].center().distance(Point2::new(cx, cy)) <= 1.0);
        }
    }

    #[test]
    fn refine_recovers_subpixel_centre() {
        let e = EdgeMap::from_points(100, 100, ring(100, 100, 50.3, 49.6, 14.0));
        let coarse = circular_hough(&e, 12.0, 16.0, 40)[0];
        let fine = refine_circle(&e, &coarse, 2.0).unwrap();
        assert!(fine.center().distance(Point2::new(50.3, 49.6)) < 0.15, "{fine:?}");
        assert!((fine.r - 14.0).abs() < 0.3);
    }
}
