//! Locating the grid in a frame with no prior pose.
//!
//! Grid lines are thin dark ridges on lighter wood, so both passes work on a black
//! top-hat of the luma rather than on Canny edges: stone outlines and the board border
//! barely respond to it. The first Hough pass finds the two dominant line families and
//! a coarse quadrilateral; the second runs on the coarsely rectified board, where the
//! lines are nearly axis-aligned and evenly spaced, and picks the `n` consecutive lines
//! that form the grid. The result is then refined against the ridge pixels of every
//! grid line in the original frame.

use thiserror::Error;

use crate::frame::{to_grayscale, EdgeMap, Frame};
use crate::geometry::{warp, GridModel, Homography, LatticePoint, Point2, PolarLine, BOARD_SIZES};
use crate::hough::{linear_hough, Line};

type P = Point2<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InitError {
    #[error("grid not found: {0}")]
    NotFound(String),
    #[error("two candidate grids have comparable support")]
    Ambiguous,
    #[error("found {found} lines in a family, expected {wanted}")]
    CannotResolve { found: usize, wanted: usize },
}

const TOPHAT_RADIUS: usize = 2;
const FAMILY_WINDOW_DEG: f64 = 15.0;
const FAMILY_SEPARATION_DEG: f64 = 35.0;
const BORDER_TOLERANCE: f64 = 0.35;
const AMBIGUITY_RATIO: f64 = 0.85;
const COARSE_SPACING: f64 = 32.0;
const COARSE_MARGIN: f64 = 2.5;

fn filter_max(src: &[u8], w: usize, h: usize, r: usize, max: bool) -> Vec<u8> {
    let pick = |a: u8, b: u8| if max { a.max(b) } else { a.min(b) };
    let mut tmp = vec![0u8; src.len()];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut v = row[x];
            for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                v = pick(v, row[xx]);
            }
            tmp[y * w + x] = v;
        }
    }
    let mut out = vec![0u8; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut v = tmp[y * w + x];
            for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                v = pick(v, tmp[yy * w + x]);
            }
            out[y * w + x] = v;
        }
    }
    out
}

/// Morphological closing minus the image: thin dark structures light up.
pub(crate) fn black_tophat(gray: &Frame) -> Vec<u8> {
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let src = gray.pixels();
    let closed = filter_max(&filter_max(src, w, h, TOPHAT_RADIUS, true), w, h, TOPHAT_RADIUS, false);
    closed.iter().zip(src).map(|(c, s)| c.saturating_sub(*s)).collect()
}

/// Binary ridge map with an adaptive threshold; returns the map and the threshold.
pub(crate) fn ridge_map(tophat: &[u8], w: u32, h: u32) -> (EdgeMap, u8) {
    let mut hist = [0usize; 256];
    for &v in tophat {
        hist[v as usize] += 1;
    }
    let target = tophat.len() as f64 * 0.99;
    let mut acc = 0usize;
    let mut p99 = 255u8;
    for (v, &c) in hist.iter().enumerate() {
        acc += c;
        if acc as f64 >= target {
            p99 = v as u8;
            break;
        }
    }
    let thr = ((p99 as f64 * 0.35) as u8).max(16);
    let mut e = EdgeMap::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if tophat[(y * w + x) as usize] >= thr {
                e.set(x, y, true);
            }
        }
    }
    (e, thr)
}

fn angle_diff_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).to_degrees().rem_euclid(180.0);
    d.min(180.0 - d)
}

/// Candidate pairs of line-family directions, best first. Peaks of the vote-weighted
/// theta histogram (smoothed over ±3°) are paired when at least 35° apart; a pair is
/// as strong as its weaker family, scaled by the sine of the angle between them.
fn theta_mode_pairs(lines: &[Line]) -> Vec<(f64, f64)> {
    let mut hist = [0f64; 180];
    for l in lines {
        let b = (l.theta.to_degrees().round() as usize) % 180;
        hist[b] += l.score as f64;
    }
    let smooth: Vec<f64> = (0..180)
        .map(|i| (-3i32..=3).map(|d| hist[(i as i32 + d).rem_euclid(180) as usize]).sum())
        .collect();
    let at = |i: i32| smooth[i.rem_euclid(180) as usize];
    let peaks: Vec<usize> = (0..180)
        .filter(|&i| {
            let v = smooth[i];
            v > 0.0 && (1..=3).all(|d| v > at(i as i32 - d) && v >= at(i as i32 + d))
        })
        .collect();
    let mut pairs = Vec::new();
    for (k, &a) in peaks.iter().enumerate() {
        for &b in &peaks[k + 1..] {
            let (ta, tb) = ((a as f64).to_radians(), (b as f64).to_radians());
            if angle_diff_deg(ta, tb) >= FAMILY_SEPARATION_DEG {
                let sep = angle_diff_deg(ta, tb).to_radians().sin();
                pairs.push((smooth[a].min(smooth[b]) * sep, ta, tb));
            }
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    pairs.into_iter().map(|(_, a, b)| (a, b)).collect()
}

/// Drops lines that cross a stronger, nearly parallel line inside the image. Such
/// peaks sit on the flanks of a true line's peak in Hough space; neighbouring grid
/// lines only meet far outside the frame.
fn suppress_crossings(lines: Vec<Line>, w: u32, h: u32) -> Vec<Line> {
    let (wf, hf) = (w as f64, h as f64);
    let margin = 0.1 * wf.max(hf);
    let mut kept: Vec<Line> = Vec::with_capacity(lines.len());
    for l in lines {
        let pl = l.polar();
        let clash = kept.iter().any(|k| {
            if angle_diff_deg(k.theta, l.theta) > 6.0 {
                return false;
            }
            match k.polar().intersect(&pl) {
                Some(x) => x.x > -margin && x.x < wf + margin && x.y > -margin && x.y < hf + margin,
                None => (k.rho - l.rho).abs() < 3.0,
            }
        });
        if !clash {
            kept.push(l);
        }
    }
    kept
}

#[derive(Debug, Clone, Copy)]
struct Placed {
    line: PolarLine<f64>,
    pos: f64,
    score: u32,
}

/// Sorts a family along a transversal and merges near-duplicate detections.
fn place_family(lines: &[Line], transversal: &PolarLine<f64>, link: f64) -> Vec<Placed> {
    let mut placed: Vec<Placed> = lines
        .iter()
        .filter_map(|l| {
            let pl = l.polar();
            let x = pl.intersect(transversal)?;
            Some(Placed {
                line: pl,
                pos: transversal.position_along(x),
                score: l.score,
            })
        })
        .collect();
    placed.sort_by(|a, b| a.pos.total_cmp(&b.pos));
    merge_close(chain_merge(placed, link, |p| p.pos, |p| p.score), |p| p.pos, |p| p.score)
}

/// Collapses runs of positions whose consecutive gaps are below `link` into their
/// strongest member.
fn chain_merge<T: Copy>(items: Vec<T>, link: f64, pos: impl Fn(&T) -> f64, score: impl Fn(&T) -> u32) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(items.len());
    let mut prev: Option<f64> = None;
    for it in items {
        let p = pos(&it);
        match (prev, out.last_mut()) {
            (Some(q), Some(last)) if p - q < link => {
                if score(&it) > score(last) {
                    *last = it;
                }
            }
            _ => out.push(it),
        }
        prev = Some(p);
    }
    out
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Repeatedly merges neighbours closer than 40% of the median gap, keeping the
/// stronger one.
fn merge_close<T: Copy>(mut items: Vec<T>, pos: impl Fn(&T) -> f64, score: impl Fn(&T) -> u32) -> Vec<T> {
    loop {
        if items.len() < 3 {
            return items;
        }
        let mut gaps: Vec<f64> = items.windows(2).map(|w| pos(&w[1]) - pos(&w[0])).collect();
        let med = median(&mut gaps).unwrap();
        let Some(i) = (0..items.len() - 1).find(|&i| pos(&items[i + 1]) - pos(&items[i]) < 0.4 * med) else {
            return items;
        };
        if score(&items[i]) >= score(&items[i + 1]) {
            items.remove(i + 1);
        } else {
            items.remove(i);
        }
    }
}

/// Drops outermost positions whose gap to the rest deviates from `spacing` by more
/// than 35%; returns the kept index range.
fn trim_outer(pos: &[f64], spacing: f64) -> std::ops::Range<usize> {
    let (mut lo, mut hi) = (0, pos.len());
    let off = |g: f64| (g - spacing).abs() > BORDER_TOLERANCE * spacing;
    while hi - lo >= 2 && off(pos[lo + 1] - pos[lo]) {
        lo += 1;
    }
    while hi - lo >= 2 && off(pos[hi - 1] - pos[hi - 2]) {
        hi -= 1;
    }
    lo..hi
}

/// Removes border lines from a family of near-parallel lines sorted by rho: outermost
/// lines whose gap deviates from `spacing` by more than 35% are dropped. Fails unless
/// exactly `n` lines remain.
pub fn reject_border_lines(family: &[Line], spacing: f64, n: usize) -> Result<Vec<Line>, InitError> {
    let pos: Vec<f64> = family.iter().map(|l| l.rho).collect();
    let kept = trim_outer(&pos, spacing);
    if kept.len() != n {
        return Err(InitError::CannotResolve {
            found: kept.len(),
            wanted: n,
        });
    }
    Ok(family[kept].to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Window {
    origin: f64,
    spacing: f64,
    inside: usize,
    score: f64,
}

fn match_window(pos: &[f64], origin: f64, spacing: f64, n: usize) -> (Vec<(usize, f64)>, usize) {
    let tol = 0.2 * spacing;
    let mut inside = Vec::new();
    let mut flank = 0;
    for k in -1..=n as isize {
        let want = origin + k as f64 * spacing;
        let hit = pos
            .iter()
            .copied()
            .filter(|p| (p - want).abs() <= tol)
            .min_by(|a, b| (a - want).abs().total_cmp(&(b - want).abs()));
        if let Some(p) = hit {
            if k < 0 || k >= n as isize {
                flank += 1;
            } else {
                inside.push((k as usize, p));
            }
        }
    }
    (inside, flank)
}

/// Best placement of `n` evenly spaced lines on detected positions.
fn window_search(pos: &[f64], spacing0: f64, n: usize) -> Result<Window, InitError> {
    let mut candidates: Vec<Window> = Vec::new();
    for &anchor in pos {
        for k in 0..n {
            let mut origin = anchor - k as f64 * spacing0;
            let mut spacing = spacing0;
            let (mut inside, mut flank) = match_window(pos, origin, spacing, n);
            if inside.len() >= 2 {
                // least-squares refit of origin and spacing on the matched lines
                let m = inside.len() as f64;
                let sk: f64 = inside.iter().map(|(k, _)| *k as f64).sum();
                let sp: f64 = inside.iter().map(|(_, p)| *p).sum();
                let skk: f64 = inside.iter().map(|(k, _)| (*k as f64).powi(2)).sum();
                let skp: f64 = inside.iter().map(|(k, p)| *k as f64 * p).sum();
                let det = m * skk - sk * sk;
                if det.abs() > 1e-9 {
                    let b = (m * skp - sk * sp) / det;
                    if (b - spacing0).abs() < 0.2 * spacing0 {
                        spacing = b;
                        origin = (sp - b * sk) / m;
                        (inside, flank) = match_window(pos, origin, spacing, n);
                    }
                }
            }
            let score = inside.len() as f64 - 3.0 * flank as f64;
            if candidates.iter().any(|c| (c.origin - origin).abs() < 0.5 * spacing) {
                if let Some(c) = candidates
                    .iter_mut()
                    .find(|c| (c.origin - origin).abs() < 0.5 * spacing && score > c.score)
                {
                    *c = Window {
                        origin,
                        spacing,
                        inside: inside.len(),
                        score,
                    };
                }
                continue;
            }
            candidates.push(Window {
                origin,
                spacing,
                inside: inside.len(),
                score,
            });
        }
    }
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.origin.total_cmp(&b.origin)));
    let best = *candidates
        .first()
        .ok_or_else(|| InitError::NotFound("no line positions".into()))?;
    if 2 * best.inside < n {
        return Err(InitError::NotFound(format!("only {} of {n} grid lines", best.inside)));
    }
    if let Some(second) = candidates.iter().find(|c| (c.origin - best.origin).abs() >= 0.5 * best.spacing) {
        if second.score >= AMBIGUITY_RATIO * best.score {
            return Err(InitError::Ambiguous);
        }
    }
    Ok(best)
}

/// Runs the window search for every cluster of consecutive gaps and keeps the best
/// placement; ridges between touching stones add lines at half the spacing.
fn window_search_any(pos: &[f64], min_gap: f64, n: usize) -> Result<Window, InitError> {
    let mut gaps: Vec<f64> = pos.windows(2).map(|w| w[1] - w[0]).filter(|g| *g > min_gap).collect();
    gaps.sort_by(f64::total_cmp);
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    for g in gaps {
        match clusters.last_mut() {
            Some(c) if g <= 1.15 * c[0] => c.push(g),
            _ => clusters.push(vec![g]),
        }
    }
    let mut best: Option<Result<Window, InitError>> = None;
    for mut c in clusters {
        let spacing = median(&mut c).unwrap();
        let r = window_search(pos, spacing, n);
        best = match (best, r) {
            (None, r) => Some(r),
            (Some(Ok(a)), Ok(b)) => Some(Ok(if b.score > a.score { b } else { a })),
            (Some(Ok(a)), Err(_)) => Some(Ok(a)),
            (Some(Err(_)), Ok(b)) => Some(Ok(b)),
            (Some(Err(InitError::Ambiguous)), Err(_)) => Some(Err(InitError::Ambiguous)),
            (Some(Err(_)), Err(e)) => Some(Err(e)),
        };
    }
    best.unwrap_or_else(|| Err(InitError::NotFound("no line spacing".into())))
}

/// Orders four points TL, TR, BR, BL as seen in the image (y down).
fn order_corners(pts: [P; 4]) -> [P; 4] {
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / 4.0;
    let mut v = pts.to_vec();
    v.sort_by(|a, b| (a.y - cy).atan2(a.x - cx).total_cmp(&(b.y - cy).atan2(b.x - cx)));
    // angles now run from about -135° (TL) clockwise on screen
    let tl = (0..4)
        .min_by(|&i, &j| {
            let d = |p: &P| {
                let a = ((p.y - cy).atan2(p.x - cx).to_degrees() + 135.0).rem_euclid(360.0);
                a.min(360.0 - a)
            };
            d(&v[i]).total_cmp(&d(&v[j]))
        })
        .unwrap();
    [v[tl], v[(tl + 1) % 4], v[(tl + 2) % 4], v[(tl + 3) % 4]]
}

/// Weighted orthogonal line fit.
fn fit_line(pts: &[(f64, f64, f64)]) -> Option<PolarLine<f64>> {
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    if pts.len() < 10 || sw <= 0.0 {
        return None;
    }
    let cx = pts.iter().map(|p| p.0 * p.2).sum::<f64>() / sw;
    let cy = pts.iter().map(|p| p.1 * p.2).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y, w) in pts {
        sxx += w * (x - cx) * (x - cx);
        sxy += w * (x - cx) * (y - cy);
        syy += w * (y - cy) * (y - cy);
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy) + std::f64::consts::FRAC_PI_2;
    Some(PolarLine::new(cx * theta.cos() + cy * theta.sin(), theta))
}

/// Refits every grid line to the ridge pixels along it, skipping the neighbourhood of
/// intersections, and re-estimates the homography from all line crossings.
/// Returns the new grid and how many lines found support.
pub(crate) fn refine_against_ridges(g: &GridModel, tophat: &[u8], w: u32, h: u32, thr: u8) -> (GridModel, usize) {
    let n = g.size();
    let last = (n - 1) as f64;
    let min_w = (thr / 2).max(8);
    let mut fitted = 0;
    let mut lines: [Vec<PolarLine<f64>>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for axis in 0..2 {
        for k in 0..n {
            let at = |t: f64, off: f64| {
                if axis == 0 {
                    g.lattice_f(P::new(k as f64 + off, t))
                } else {
                    g.lattice_f(P::new(t, k as f64 + off))
                }
            };
            let predicted = PolarLine::through(at(0.0, 0.0), at(last, 0.0));
            let quad = [at(-0.1, -0.3), at(last + 0.1, -0.3), at(last + 0.1, 0.3), at(-0.1, 0.3)];
            let x0 = quad.iter().map(|p| p.x).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
            let x1 = quad.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max).ceil().min(w as f64 - 1.0) as u32;
            let y0 = quad.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
            let y1 = quad.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max).ceil().min(h as f64 - 1.0) as u32;
            let mut pts = Vec::new();
            if x0 <= x1 && y0 <= y1 && x1 < w && y1 < h {
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let v = tophat[(y * w + x) as usize];
                        if v < min_w {
                            continue;
                        }
                        let Ok(l) = g.frame_to_lattice(P::new(x as f64, y as f64)) else {
                            continue;
                        };
                        let (across, along) = if axis == 0 { (l.x, l.y) } else { (l.y, l.x) };
                        if (across - k as f64).abs() > 0.22 || along < -0.02 || along > last + 0.02 {
                            continue;
                        }
                        if (along - along.round()).abs() < 0.2 {
                            continue;
                        }
                        pts.push((x as f64, y as f64, v as f64));
                    }
                }
            }
            match fit_line(&pts) {
                Some(l) if predicted.deviation(&l).0.to_degrees() < 3.0 => {
                    fitted += 1;
                    lines[axis].push(l);
                }
                _ => lines[axis].push(predicted),
            }
        }
    }
    let mut pairs = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            if let Some(p) = lines[0][c].intersect(&lines[1][r]) {
                pairs.push((LatticePoint::new(c, r).as_point(), p));
            }
        }
    }
    let refined = Homography::fit_least_squares(&pairs)
        .ok()
        .and_then(|hm| GridModel::from_homography(n, &hm).ok());
    match refined {
        Some(r) if r.max_corner_distance(g) < 0.5 * g.median_spacing() => (r, fitted),
        _ => (g.clone(), fitted),
    }
}

/// Finds the `n`x`n` grid in a frame with no prior pose.
pub fn locate_grid(f: &Frame, n: usize) -> Result<GridModel, InitError> {
    if !BOARD_SIZES.contains(&n) {
        return Err(InitError::NotFound(format!("unsupported board size {n}")));
    }
    let gray = to_grayscale(f);
    let (w, h) = (gray.width(), gray.height());
    let tophat = black_tophat(&gray);
    let (ridge, thr) = ridge_map(&tophat, w, h);
    let min_votes = (0.12 * w.min(h) as f64) as u32;
    let mut lines = linear_hough(&ridge, 1f64.to_radians(), 1.0, min_votes.max(10));
    lines.truncate(600);
    let lines = suppress_crossings(lines, w, h);
    let pairs = theta_mode_pairs(&lines);
    if pairs.is_empty() {
        return Err(InitError::NotFound("no dominant line families".into()));
    }
    // a strong diagonal arrangement of stones can outvote one grid family; the next
    // pair gets a chance before giving up
    let mut first_err = None;
    for &(m1, m2) in pairs.iter().take(3) {
        let scene = Scene {
            gray: &gray,
            tophat: &tophat,
            thr,
            lines: &lines,
        };
        match locate_with_families(&scene, n, m1, m2) {
            Ok(g) => return Ok(g),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    Err(first_err.unwrap())
}

struct Scene<'a> {
    gray: &'a Frame,
    tophat: &'a [u8],
    thr: u8,
    lines: &'a [Line],
}

fn locate_with_families(sc: &Scene, n: usize, m1: f64, m2: f64) -> Result<GridModel, InitError> {
    let (w, h) = (sc.gray.width(), sc.gray.height());
    // the family whose normals are closer to the x axis holds the columns
    let (mv, mh) = if angle_diff_deg(m1, 0.0) <= angle_diff_deg(m2, 0.0) { (m1, m2) } else { (m2, m1) };
    let centre = P::new(0.5 * w as f64, 0.5 * h as f64);
    let family = |mode: f64| -> Vec<Line> {
        sc.lines
            .iter()
            .copied()
            .filter(|l| angle_diff_deg(l.theta, mode) <= FAMILY_WINDOW_DEG)
            .collect()
    };
    let through_centre = |theta: f64| PolarLine::new(centre.x * theta.cos() + centre.y * theta.sin(), theta);
    let cols = place_family(&family(mv), &through_centre(mh), 4.0);
    let rows = place_family(&family(mh), &through_centre(mv), 4.0);
    if cols.len() < 3 || rows.len() < 3 {
        return Err(InitError::NotFound("too few lines in a family".into()));
    }
    let trimmed = |fam: &[Placed]| -> Vec<Placed> {
        let pos: Vec<f64> = fam.iter().map(|p| p.pos).collect();
        let mut gaps: Vec<f64> = pos.windows(2).map(|w| w[1] - w[0]).collect();
        let spacing = median(&mut gaps).unwrap_or(1.0);
        fam[trim_outer(&pos, spacing)].to_vec()
    };
    let cols = trimmed(&cols);
    let rows = trimmed(&rows);
    if cols.len() < 3 || rows.len() < 3 {
        return Err(InitError::NotFound("line families collapse after border rejection".into()));
    }
    let (ka, kb) = (cols.len(), rows.len());
    let corner = |a: &Placed, b: &Placed| {
        a.line
            .intersect(&b.line)
            .ok_or_else(|| InitError::NotFound("parallel families".into()))
    };
    let quad = order_corners([
        corner(&cols[0], &rows[0])?,
        corner(&cols[ka - 1], &rows[0])?,
        corner(&cols[ka - 1], &rows[kb - 1])?,
        corner(&cols[0], &rows[kb - 1])?,
    ]);
    let (ua, ub) = ((ka - 1) as f64, (kb - 1) as f64);
    let coarse = Homography::from_pairs(&[
        (P::new(0.0, 0.0), quad[0]),
        (P::new(ua, 0.0), quad[1]),
        (P::new(ua, ub), quad[2]),
        (P::new(0.0, ub), quad[3]),
    ])
    .map_err(|e| InitError::NotFound(format!("coarse quadrilateral: {e}")))?;

    // pass 2: rectify coarsely and pick the n-line windows
    let sr = COARSE_SPACING.min(900.0 / (ua.max(ub) + 2.0 * COARSE_MARGIN));
    let rw = ((ua + 2.0 * COARSE_MARGIN) * sr).round() as u32;
    let rh = ((ub + 2.0 * COARSE_MARGIN) * sr).round() as u32;
    let rect_to_coarse =
        Homography::translation(-COARSE_MARGIN, -COARSE_MARGIN).after(&Homography::scaling(1.0 / sr, 1.0 / sr));
    let rect_to_frame = coarse.after(&rect_to_coarse);
    let rect = warp(sc.gray, &rect_to_frame, rw, rh);
    let rect_top = black_tophat(&rect);
    let (rect_ridge, _) = ridge_map(&rect_top, rw, rh);
    let extent = (ua.min(ub) * sr).max(1.0);
    let rect_lines = suppress_crossings(
        linear_hough(&rect_ridge, 0.5f64.to_radians(), 1.0, ((0.2 * extent) as u32).max(10)),
        rw,
        rh,
    );
    let (cx, cy) = (0.5 * rw as f64, 0.5 * rh as f64);
    let mut xs: Vec<(f64, u32)> = Vec::new();
    let mut ys: Vec<(f64, u32)> = Vec::new();
    for l in &rect_lines {
        let (s, c) = l.theta.sin_cos();
        if angle_diff_deg(l.theta, 0.0) <= 5.0 {
            xs.push(((l.rho - cy * s) / c, l.score));
        } else if angle_diff_deg(l.theta, std::f64::consts::FRAC_PI_2) <= 5.0 {
            ys.push(((l.rho - cx * c) / s, l.score));
        }
    }
    let settle = |mut v: Vec<(f64, u32)>| -> Vec<f64> {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        let v = chain_merge(v, 0.25 * sr, |p| p.0, |p| p.1);
        merge_close(v, |p| p.0, |p| p.1).into_iter().map(|p| p.0).collect()
    };
    let xs = settle(xs);
    let ys = settle(ys);
    let wx = window_search_any(&xs, 0.6 * sr, n)?;
    let wy = window_search_any(&ys, 0.6 * sr, n)?;
    let last = (n - 1) as f64;
    let rect_corner = |i: f64, j: f64| P::new(wx.origin + i * wx.spacing, wy.origin + j * wy.spacing);
    let to_frame = |p: P| {
        rect_to_frame
            .apply(p)
            .map_err(|e| InitError::NotFound(format!("back-projection: {e}")))
    };
    let corners = [
        to_frame(rect_corner(0.0, 0.0))?,
        to_frame(rect_corner(last, 0.0))?,
        to_frame(rect_corner(last, last))?,
        to_frame(rect_corner(0.0, last))?,
    ];
    let mut grid = GridModel::from_corners(n, corners).map_err(|e| InitError::NotFound(format!("grid: {e}")))?;

    // refinement against the ridges of every line
    let mut support = 0;
    for _ in 0..2 {
        let (g, s) = refine_against_ridges(&grid, sc.tophat, w, h, sc.thr);
        grid = g;
        support = s;
    }
    if support < n {
        return Err(InitError::NotFound(format!("only {support} of {} grid lines confirmed", 2 * n)));
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Colorspace;
    use crate::game::{Board, Color};
    use crate::synth::{default_pose, render_frame, SceneTruth};

    fn line(rho: f64) -> Line {
        Line { rho, theta: 0.0, score: 100 }
    }

    #[test]
    fn border_rejection() {
        let family: Vec<Line> = (0..9).map(|i| line(50.0 + 30.0 * i as f64)).collect();
        assert_eq!(reject_border_lines(&family, 30.0, 9).unwrap(), family);
        let mut extra = family.clone();
        extra.push(line(50.0 + 30.0 * 8.0 + 15.0));
        assert_eq!(reject_border_lines(&extra, 30.0, 9).unwrap(), family);
        assert_eq!(
            reject_border_lines(&family[1..], 30.0, 9),
            Err(InitError::CannotResolve { found: 8, wanted: 9 })
        );
    }

    #[test]
    fn window_prefers_the_unflanked_run() {
        let pos: Vec<f64> = (0..9).map(|i| 100.0 + 32.0 * i as f64).collect();
        let w = window_search(&pos, 32.0, 9).unwrap();
        assert!((w.origin - 100.0).abs() < 1e-6 && (w.spacing - 32.0).abs() < 1e-6);
        let mut missing = pos.clone();
        missing.remove(4);
        assert!((window_search(&missing, 32.0, 9).unwrap().origin - 100.0).abs() < 1e-6);
        // a run of 10 lines cannot tell which nine form the grid
        let ten: Vec<f64> = (0..10).map(|i| 100.0 + 32.0 * i as f64).collect();
        assert_eq!(window_search(&ten, 32.0, 9), Err(InitError::Ambiguous));
    }

    #[test]
    fn blank_frame_is_not_found() {
        let f = Frame::filled(320, 240, Colorspace::Rgb, 128);
        assert!(matches!(locate_grid(&f, 19), Err(InitError::NotFound(_))));
    }

    #[test]
    fn clean_empty_board() {
        let truth = default_pose(19, 1280, 720);
        let s = SceneTruth::new(truth.clone(), Board::new(19));
        let g = locate_grid(&render_frame(&s, 1280, 720), 19).unwrap();
        let err = g.max_corner_distance(&truth);
        assert!(err < 1.0, "corner error {err}");
    }

    #[test]
    fn half_covered_board() {
        let truth = default_pose(13, 640, 480);
        let mut board = Board::new(13);
        for p in Board::new(13).points() {
            if (p.col * 7 + p.row * 3) % 2 == 0 {
                board.set(p, Some(if p.col % 3 == 0 { Color::White } else { Color::Black }));
            }
        }
        let s = SceneTruth::new(truth.clone(), board);
        let g = locate_grid(&render_frame(&s, 640, 480), 13).unwrap();
        let err = g.max_corner_distance(&truth);
        assert!(err < 2.0, "corner error {err}");
    }
}
