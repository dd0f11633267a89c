//! Keeping the grid pose locked across frames.
//!
//! Three sources propose poses. The fast tracker follows small motions frame to frame
//! by template correlation around lattice points. The linear checker re-runs
//! [`locate_grid`](crate::grid_init::locate_grid) on snapshots while the grid lines are
//! still visible. The circular relocator takes over in the endgame: stones found by a
//! circle Hough transform on the rectified board are matched against the known
//! position and the pose is re-estimated from quadrilaterals of matched stones. Slow
//! proposals only replace the grid once they have been stable for a few frames.

use std::borrow::Cow;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{canny_edges, to_grayscale, Colorspace, Frame, CANNY_DEFAULT};
use crate::game::Board;
use crate::geometry::{
    convex_hull, max_area_quadrilateral_indices, orient2, polygon_area2, rotation_from_segments, warp,
    weighted_mean_homography, GridModel, Homography, LatticePoint, Point2, RectLayout,
};
use crate::hough::{circular_hough, refine_circle, Circle};

type P = Point2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TrackError {
    #[error("tracking lost: {weak} of {probes} probes below the correlation floor")]
    TrackingLost { weak: usize, probes: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("no lattice offset explains the stones")]
    NoMatch,
    #[error("two lattice offsets explain the stones equally well")]
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RelocateError {
    #[error("{stones} stones on the board, relocation needs {needed}")]
    InsufficientStones { stones: usize, needed: usize },
    #[error("no lattice offset explains the stones")]
    NoMatch,
    #[error("two lattice offsets explain the stones equally well")]
    Ambiguous,
    #[error("degenerate stone layout: {0}")]
    Degenerate(&'static str),
}

impl From<MatchError> for RelocateError {
    fn from(e: MatchError) -> Self {
        match e {
            MatchError::NoMatch => RelocateError::NoMatch,
            MatchError::Ambiguous => RelocateError::Ambiguous,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalSource {
    Fast,
    LinearAsync,
    CircularAsync,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridProposal {
    pub grid: GridModel,
    pub source: ProposalSource,
    /// Consecutive frames this pose has been reproduced within tolerance.
    pub streak: u32,
}

impl GridProposal {
    pub fn new(grid: GridModel, source: ProposalSource) -> Self {
        Self { grid, source, streak: 1 }
    }
}

// ---------------------------------------------------------------------------------
// fast tracking

/// Correlation below which a probe counts as lost.
pub const NCC_FLOOR: f64 = 0.5;
/// Motions smaller than this are treated as noise.
const DEADBAND_PX: f64 = 0.3;
/// Probe lattice points per side.
const PROBES_PER_SIDE: usize = 5;
/// Template half-size in lattice spacings, and the cap on sampled template pixels.
const TEMPLATE_HALF: f64 = 0.6;
const TEMPLATE_SAMPLES: i32 = 10;

fn gray(f: &Frame) -> Cow<'_, Frame> {
    if f.colorspace() == Colorspace::Grayscale {
        Cow::Borrowed(f)
    } else {
        Cow::Owned(to_grayscale(f))
    }
}

fn probe_points(n: usize) -> Vec<LatticePoint> {
    let k = PROBES_PER_SIDE.min(n);
    let idx: Vec<usize> = (0..k).map(|i| (i * (n - 1) + (k - 1) / 2) / (k - 1)).collect();
    let mut out = Vec::with_capacity(k * k);
    for &r in &idx {
        for &c in &idx {
            out.push(LatticePoint::new(c, r));
        }
    }
    out
}

/// Normalized cross-correlation search of the template around `(cx, cy)` in `prev`
/// over displacements up to `reach` in `cur`. Returns the sub-pixel displacement and
/// the peak score, or `None` when the template is flat or leaves the frame.
fn ncc_search(prev: &Frame, cur: &Frame, cx: i32, cy: i32, half: i32, reach: i32) -> Option<(f64, f64, f64)> {
    let (w, h) = (prev.width() as i32, prev.height() as i32);
    if cx - half - reach < 0 || cy - half - reach < 0 || cx + half + reach >= w || cy + half + reach >= h {
        return None;
    }
    let step = (half / TEMPLATE_SAMPLES).max(1);
    let offs: Vec<(i32, i32)> = (-half..=half)
        .step_by(step as usize)
        .flat_map(|dy| (-half..=half).step_by(step as usize).map(move |dx| (dx, dy)))
        .collect();
    let pp = prev.pixels();
    let cp = cur.pixels();
    let at = |buf: &[u8], x: i32, y: i32| buf[(y * w + x) as usize] as f64;
    let t: Vec<f64> = offs.iter().map(|&(dx, dy)| at(pp, cx + dx, cy + dy)).collect();
    let m = t.len() as f64;
    let tmean = t.iter().sum::<f64>() / m;
    let t: Vec<f64> = t.iter().map(|v| v - tmean).collect();
    let tnorm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
    if tnorm < 1e-6 * m || tnorm / m.sqrt() < 2.0 {
        return None;
    }
    let side = (2 * reach + 1) as usize;
    let mut score = vec![f64::NAN; side * side];
    let ncc = |buf: &[u8], sx: i32, sy: i32| -> f64 {
        let (mut s, mut ss, mut st) = (0.0, 0.0, 0.0);
        for (k, &(dx, dy)) in offs.iter().enumerate() {
            let v = at(buf, cx + sx + dx, cy + sy + dy);
            s += v;
            ss += v * v;
            st += v * t[k];
        }
        let var = ss - s * s / m;
        if var > 1e-9 {
            st / (tnorm * var.sqrt())
        } else {
            0.0
        }
    };
    let mut eval = |sx: i32, sy: i32| -> f64 {
        let i = (sy + reach) as usize * side + (sx + reach) as usize;
        if score[i].is_nan() {
            score[i] = ncc(cp, sx, sy);
        }
        score[i]
    };
    // coarse pass on even shifts, then every shift within two of the coarse peak
    let mut coarse = (0, 0, f64::NEG_INFINITY);
    for sy in (-reach..=reach).step_by(2) {
        for sx in (-reach..=reach).step_by(2) {
            let v = eval(sx, sy);
            if v > coarse.2 {
                coarse = (sx, sy, v);
            }
        }
    }
    let mut best = coarse;
    for sy in (coarse.1 - 2).max(-reach)..=(coarse.1 + 2).min(reach) {
        for sx in (coarse.0 - 2).max(-reach)..=(coarse.0 + 2).min(reach) {
            let v = eval(sx, sy);
            if v > best.2 {
                best = (sx, sy, v);
            }
        }
    }
    let (bx, by, peak) = best;
    let nx = (bx > -reach && bx < reach).then(|| (eval(bx - 1, by), eval(bx + 1, by)));
    let ny = (by > -reach && by < reach).then(|| (eval(bx, by - 1), eval(bx, by + 1)));
    let sub = |a: f64, c: f64, b: f64| {
        let d = a - 2.0 * c + b;
        if d < -1e-12 {
            (0.5 * (a - b) / d).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    };
    // the interpolation's answer for the template against itself, i.e. for no motion
    let bias_x = sub(ncc(pp, -1, 0), 1.0, ncc(pp, 1, 0));
    let bias_y = sub(ncc(pp, 0, -1), 1.0, ncc(pp, 0, 1));
    let fx = nx.map_or(0.0, |(l, r)| sub(l, peak, r) - bias_x);
    let fy = ny.map_or(0.0, |(u, d)| sub(u, peak, d) - bias_y);
    Some((bx as f64 + fx, by as f64 + fy, peak))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Displacement of the board between `prev` and `cur`, measured by correlating
/// templates around probe lattice points of `g` within one stone radius.
pub fn track_displacement(g: &GridModel, prev: &Frame, cur: &Frame, floor: f64) -> Result<(f64, f64), TrackError> {
    let (prev, cur) = (gray(prev), gray(cur));
    let s = g.median_spacing();
    let half = (TEMPLATE_HALF * s).round().max(3.0) as i32;
    let reach = (0.5 * s).round().max(2.0) as i32;
    let probes = probe_points(g.size());
    let mut dxs = Vec::new();
    let mut dys = Vec::new();
    let mut weak = 0;
    let mut tried = 0;
    for lp in &probes {
        let c = g.lattice(lp.col, lp.row);
        if !c.is_finite() {
            continue;
        }
        let Some((dx, dy, score)) = ncc_search(&prev, &cur, c.x.round() as i32, c.y.round() as i32, half, reach)
        else {
            continue;
        };
        tried += 1;
        if score < floor {
            weak += 1;
        } else {
            dxs.push(dx);
            dys.push(dy);
        }
    }
    if tried == 0 || 2 * weak > tried {
        return Err(TrackError::TrackingLost { weak, probes: tried });
    }
    Ok((median(&mut dxs), median(&mut dys)))
}

/// One step of the fast tracker: `g` moved by the median probe displacement from
/// `prev` to `cur`. On loss the caller keeps `g`.
pub fn fast_track(g: &GridModel, prev: &Frame, cur: &Frame) -> Result<GridModel, TrackError> {
    let (dx, dy) = track_displacement(g, prev, cur, NCC_FLOOR)?;
    if dx.hypot(dy) < DEADBAND_PX {
        return Ok(g.clone());
    }
    Ok(g.translated(dx, dy).unwrap_or_else(|_| g.clone()))
}

/// Fast tracker with a reference frame. The reference is only replaced when the grid
/// moves or after a few quiet frames, so slow drifts still add up to a detectable
/// displacement; during a loss it is kept so tracking resumes once the view clears.
#[derive(Debug, Clone, Default)]
pub struct FastTracker {
    reference: Option<(Frame, GridModel)>,
    age: u32,
}

const REFERENCE_REFRESH: u32 = 8;

impl FastTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Forgets the reference, e.g. after a grid was replaced from elsewhere.
    pub fn reset(&mut self) {
        self.reference = None;
        self.age = 0;
    }

    pub fn track(&mut self, g: &GridModel, cur: &Frame) -> Result<GridModel, TrackError> {
        let cur = gray(cur).into_owned();
        let Some((reference, rg)) = &self.reference else {
            self.reference = Some((cur, g.clone()));
            self.age = 0;
            return Ok(g.clone());
        };
        if rg != g {
            self.reference = Some((cur, g.clone()));
            self.age = 0;
            return Ok(g.clone());
        }
        let (dx, dy) = track_displacement(g, reference, &cur, NCC_FLOOR)?;
        self.age += 1;
        if dx.hypot(dy) >= DEADBAND_PX {
            let moved = g.translated(dx, dy).unwrap_or_else(|_| g.clone());
            self.reference = Some((cur, moved.clone()));
            self.age = 0;
            return Ok(moved);
        }
        if self.age >= REFERENCE_REFRESH {
            self.reference = Some((cur, g.clone()));
            self.age = 0;
        }
        Ok(g.clone())
    }
}

// ---------------------------------------------------------------------------------
// circle confirmation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateCircle {
    /// Centre in rectified pixels.
    pub center: P,
    pub radius: f64,
    pub first_seen: u64,
    pub streak: u32,
    pub confirmed: bool,
}

impl CandidateCircle {
    pub fn fresh(c: &Circle, frame: u64) -> Self {
        Self {
            center: c.center(),
            radius: c.r,
            first_seen: frame,
            streak: 1,
            confirmed: false,
        }
    }
}

/// Carries candidates from the previous frame forward. A fresh circle within a
/// candidate's radius of it extends that candidate (closest pairs first, one to one);
/// unmatched candidates are dropped and unmatched circles start new ones.
pub fn confirm_circles(prev: &[CandidateCircle], fresh: &[Circle], frame: u64) -> Vec<CandidateCircle> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, c) in prev.iter().enumerate() {
        for (j, f) in fresh.iter().enumerate() {
            let d = c.center.distance(f.center());
            if d <= c.radius {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut prev_used = vec![false; prev.len()];
    let mut link: Vec<Option<usize>> = vec![None; fresh.len()];
    for (_, i, j) in pairs {
        if !prev_used[i] && link[j].is_none() {
            prev_used[i] = true;
            link[j] = Some(i);
        }
    }
    fresh
        .iter()
        .zip(link)
        .map(|(f, l)| match l {
            Some(i) => {
                let streak = prev[i].streak + 1;
                CandidateCircle {
                    center: f.center(),
                    radius: f.r,
                    first_seen: prev[i].first_seen,
                    streak,
                    confirmed: streak >= 2,
                }
            }
            None => CandidateCircle::fresh(f, frame),
        })
        .collect()
}

// ---------------------------------------------------------------------------------
// lattice matching

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeMatch {
    /// Shift of the stones in lattice units: a stone at `p` now sits at `p + offset`
    /// of the previous lattice.
    pub offset: (i32, i32),
    /// Centre index paired with the known stone it shows.
    pub pairs: Vec<(usize, LatticePoint)>,
    pub matched: usize,
}

/// Sub-lattice phase of a set of lattice-coordinate positions, per axis, as the
/// circular mean of the fractional parts.
fn lattice_phase(pts: &[P]) -> (f64, f64) {
    let phase = |vals: &mut dyn Iterator<Item = f64>| {
        let (mut s, mut c) = (0.0, 0.0);
        for v in vals {
            let a = std::f64::consts::TAU * v;
            s += a.sin();
            c += a.cos();
        }
        s.atan2(c) / std::f64::consts::TAU
    };
    (phase(&mut pts.iter().map(|p| p.x)), phase(&mut pts.iter().map(|p| p.y)))
}

fn snap(pts: &[P]) -> Vec<(i32, i32)> {
    let (fx, fy) = lattice_phase(pts);
    pts.iter()
        .map(|p| ((p.x - fx).round() as i32, (p.y - fy).round() as i32))
        .collect()
}

/// Minimum shared board area, as a fraction of the board, for an offset to count.
pub const MIN_OVERLAP: f64 = 4.0 / 9.0;

/// Finds the integer lattice offset that best explains stone centres, given in
/// lattice coordinates of the previous grid and already corrected for rotation.
///
/// Every offset with `|dx|, |dy| <= ceil(n/3)` is scored by how many centres land on
/// a known stone. An offset qualifies when the shared board area is at least 4/9 and
/// at least half the known stones inside it were matched.
pub fn match_centres_to_lattice(centres: &[P], board: &Board) -> Result<LatticeMatch, MatchError> {
    let n = board.size() as i32;
    let stones: Vec<LatticePoint> = board.points().filter(|p| board.get(*p).is_some()).collect();
    if centres.len() < 4 || stones.len() < 4 {
        return Err(MatchError::NoMatch);
    }
    let q = snap(centres);
    let reach = (n + 2) / 3;
    let mut scored: Vec<((i32, i32), usize)> = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let overlap = ((n - dx.abs()) * (n - dy.abs())) as f64 / (n * n) as f64;
            if overlap < MIN_OVERLAP - 1e-12 {
                continue;
            }
            let inside = stones
                .iter()
                .filter(|s| {
                    let (c, r) = (s.col as i32 + dx, s.row as i32 + dy);
                    (0..n).contains(&c) && (0..n).contains(&r)
                })
                .count();
            let matched = matched_stones(&q, board, (dx, dy)).len();
            if inside > 0 && 2 * matched >= inside {
                scored.push(((dx, dy), matched));
            }
        }
    }
    scored.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let Some(&(offset, matched)) = scored.first() else {
        return Err(MatchError::NoMatch);
    };
    if matched == 0 {
        return Err(MatchError::NoMatch);
    }
    if scored.get(1).is_some_and(|s| s.1 + 1 >= matched) {
        return Err(MatchError::Ambiguous);
    }
    Ok(LatticeMatch {
        offset,
        pairs: matched_stones(&q, board, offset),
        matched,
    })
}

/// Centres that land on a distinct known stone under `offset`.
fn matched_stones(q: &[(i32, i32)], board: &Board, offset: (i32, i32)) -> Vec<(usize, LatticePoint)> {
    let n = board.size() as i32;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (i, &(c, r)) in q.iter().enumerate() {
        let (sc, sr) = (c - offset.0, r - offset.1);
        if !(0..n).contains(&sc) || !(0..n).contains(&sr) {
            continue;
        }
        let s = LatticePoint::new(sc as usize, sr as usize);
        if board.get(s).is_some() && seen.insert(s) {
            out.push((i, s));
        }
    }
    out
}

// ---------------------------------------------------------------------------------
// endgame relocation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelocateParams {
    /// Side of the square rectified image, in pixels.
    pub rect_size: u32,
    /// Stones needed on the board before relocation is attempted.
    pub min_stones: usize,
    /// Seed for the random hull quadrilaterals.
    pub seed: u64,
    pub canny_low: f32,
    pub canny_high: f32,
}

impl Default for RelocateParams {
    fn default() -> Self {
        Self {
            rect_size: 500,
            min_stones: 20,
            seed: 0,
            canny_low: CANNY_DEFAULT.0,
            canny_high: CANNY_DEFAULT.1,
        }
    }
}

/// Circle radius band in lattice spacings.
pub const RADIUS_BAND: (f64, f64) = (0.35, 0.65);
const EXTRA_QUADS: usize = 7;
const QUAD_ATTEMPTS: usize = 50;
const MIN_QUAD_AREA: f64 = 0.2;

fn rect_layout(n: usize, size: u32) -> RectLayout {
    RectLayout::new(n, size)
}

/// Circles found on the rectification of `f` through `g`, in rectified pixels.
pub fn rect_circles(f: &Frame, g: &GridModel, params: &RelocateParams) -> Vec<Circle> {
    let layout = rect_layout(g.size(), params.rect_size);
    let rect = warp(&gray(f), &layout.rect_to_frame(g), layout.size, layout.size);
    let edges = canny_edges(&rect, params.canny_low, params.canny_high);
    let s = layout.spacing();
    let (r_min, r_max) = (RADIUS_BAND.0 * s, RADIUS_BAND.1 * s);
    let r_mid = 0.5 * (r_min + r_max);
    let min_votes = (0.5 * std::f64::consts::TAU * r_mid) as u32;
    circular_hough(&edges, r_min, r_max, min_votes.max(8))
        .into_iter()
        .map(|c| refine_circle(&edges, &c, 1.5).unwrap_or(c))
        .collect()
}

/// Stateful endgame relocator: keeps circle candidates between calls, expressed in
/// the rectification of the grid they were found with.
#[derive(Debug, Clone)]
pub struct Relocator {
    pub params: RelocateParams,
    candidates: Vec<CandidateCircle>,
    basis: Option<GridModel>,
}

impl Relocator {
    pub fn new(params: RelocateParams) -> Self {
        Self {
            params,
            candidates: Vec::new(),
            basis: None,
        }
    }

    pub fn candidates(&self) -> &[CandidateCircle] {
        &self.candidates
    }

    /// Feeds one frame; returns a proposal once enough confirmed stones match.
    pub fn observe(&mut self, f: &Frame, g: &GridModel, board: &Board, frame: u64) -> Result<GridProposal, RelocateError> {
        let stones = board.stones();
        if stones < self.params.min_stones {
            self.candidates.clear();
            self.basis = None;
            return Err(RelocateError::InsufficientStones {
                stones,
                needed: self.params.min_stones,
            });
        }
        let layout = rect_layout(g.size(), self.params.rect_size);
        if let Some(old) = &self.basis {
            if old != g {
                // re-express the candidates in the new rectification
                let old_map = rect_layout(old.size(), self.params.rect_size).rect_to_frame(old);
                let new_inv = layout.rect_to_frame(g).inverse().ok();
                self.candidates.retain_mut(|c| {
                    match (old_map.apply(c.center), &new_inv) {
                        (Ok(p), Some(inv)) => match inv.apply(p) {
                            Ok(q) => {
                                c.center = q;
                                true
                            }
                            Err(_) => false,
                        },
                        _ => false,
                    }
                });
            }
        }
        let fresh = rect_circles(f, g, &self.params);
        self.candidates = confirm_circles(&self.candidates, &fresh, frame);
        self.basis = Some(g.clone());
        let confirmed: Vec<P> = self.candidates.iter().filter(|c| c.confirmed).map(|c| c.center).collect();
        relocate_from_centres(&confirmed, g, board, &self.params)
    }
}

/// The whole relocation pipeline on two consecutive frames.
pub fn yose_relocate(
    f_prev: &Frame,
    f_cur: &Frame,
    g: &GridModel,
    board: &Board,
    params: &RelocateParams,
) -> Result<GridProposal, RelocateError> {
    let mut r = Relocator::new(*params);
    if let Err(e @ RelocateError::InsufficientStones { .. }) = r.observe(f_prev, g, board, 0) {
        return Err(e);
    }
    r.observe(f_cur, g, board, 1)
}

/// Rotation of the centres, in degrees, estimated from adjacent confirmed pairs.
pub fn centre_rotation(lattice_centres: &[P]) -> Option<f64> {
    let q = snap(lattice_centres);
    let pairs: Vec<(P, LatticePoint)> = lattice_centres
        .iter()
        .zip(&q)
        .filter(|(_, &(c, r))| c >= -64 && r >= -64)
        .map(|(p, &(c, r))| (*p, LatticePoint::new((c + 64) as usize, (r + 64) as usize)))
        .collect();
    rotation_from_segments(&pairs).ok()
}

/// Rotation of the board in `f` relative to the pose `g`, in degrees, with the sign of
/// [`Homography::rotation_about`]. Each pair of lattice-adjacent stone centres gives the
/// angle between its segment in the frame and the same segment under `g`.
pub fn board_rotation(f: &Frame, g: &GridModel, params: &RelocateParams) -> Option<f64> {
    let layout = rect_layout(g.size(), params.rect_size);
    let to_frame = layout.rect_to_frame(g);
    let circles = rect_circles(f, g, params);
    let lattice: Vec<P> = circles.iter().map(|c| layout.rect_to_lattice(c.center())).collect();
    let frame: Vec<P> = circles.iter().filter_map(|c| to_frame.apply(c.center()).ok()).collect();
    if frame.len() != circles.len() {
        return None;
    }
    let q = snap(&lattice);
    let mut diffs = Vec::new();
    for i in 0..q.len() {
        for j in 0..q.len() {
            let (dc, dr) = (q[j].0 - q[i].0, q[j].1 - q[i].1);
            if !((dc == 1 && dr == 0) || (dc == 0 && dr == 1)) {
                continue;
            }
            let (li, lj) = (
                P::new(q[i].0 as f64, q[i].1 as f64),
                P::new(q[j].0 as f64, q[j].1 as f64),
            );
            let (Ok(ei), Ok(ej)) = (g.homography().apply(li), g.homography().apply(lj)) else {
                continue;
            };
            let obs = frame[j].sub(frame[i]);
            let exp = ej.sub(ei);
            let mut d = (obs.y.atan2(obs.x) - exp.y.atan2(exp.x)).to_degrees();
            if d > 180.0 {
                d -= 360.0;
            } else if d <= -180.0 {
                d += 360.0;
            }
            diffs.push(d);
        }
    }
    if diffs.is_empty() {
        return None;
    }
    let mid = median(&mut diffs.clone());
    let kept: Vec<f64> = diffs.into_iter().filter(|d| (d - mid).abs() <= 3.0).collect();
    Some(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Pose from confirmed centres in rectified pixels of `g`.
pub fn relocate_from_centres(
    confirmed: &[P],
    g: &GridModel,
    board: &Board,
    params: &RelocateParams,
) -> Result<GridProposal, RelocateError> {
    let n = g.size();
    let layout = rect_layout(n, params.rect_size);
    if confirmed.len() < 4 {
        return Err(RelocateError::NoMatch);
    }
    let lattice: Vec<P> = confirmed.iter().map(|c| layout.rect_to_lattice(*c)).collect();
    // undo incidental rotation about the board centre before snapping to the lattice
    let mid = 0.5 * (n - 1) as f64;
    let pivot = P::new(mid, mid);
    let mut upright = lattice.clone();
    for _ in 0..2 {
        if let Some(a) = centre_rotation(&upright) {
            upright = upright.iter().map(|p| p.rotated_about(pivot, -a)).collect();
        }
    }
    let m = match_centres_to_lattice(&upright, board)?;

    let pts: Vec<P> = m.pairs.iter().map(|(i, _)| confirmed[*i]).collect();
    let hull = convex_hull(&pts).map_err(|_| RelocateError::Degenerate("hull"))?;
    if hull.len() < 4 {
        return Err(RelocateError::Degenerate("fewer than four hull vertices"));
    }
    let stone_at = |p: P| {
        m.pairs
            .iter()
            .find(|(i, _)| confirmed[*i] == p)
            .map(|(_, s)| s.as_point())
            .expect("hull vertex is a matched centre")
    };
    let quad_h = |idx: [usize; 4]| -> Option<(Homography<f64>, f64)> {
        let q = idx.map(|i| hull[i]);
        let area = 0.5 * polygon_area2(&q).abs();
        let h = Homography::from_pairs(&q.map(|p| (stone_at(p), p))).ok()?;
        Some((h, area))
    };
    let best = max_area_quadrilateral_indices(&hull).map_err(|_| RelocateError::Degenerate("quadrilateral"))?;
    let (h0, max_area) = quad_h(best).ok_or(RelocateError::Degenerate("maximum-area quadrilateral"))?;
    let mut entries = vec![(h0, max_area)];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut attempts = 0;
    while entries.len() < 1 + EXTRA_QUADS && attempts < QUAD_ATTEMPTS {
        attempts += 1;
        let pick = sample(&mut rng, hull.len(), 4);
        let idx = [pick.index(0), pick.index(1), pick.index(2), pick.index(3)];
        let q = idx.map(|i| hull[i]);
        if self_intersecting(&q) {
            continue;
        }
        match quad_h(idx) {
            Some((h, area)) if area >= MIN_QUAD_AREA * max_area => entries.push((h, area)),
            _ => {}
        }
    }
    let total: f64 = entries.iter().map(|e| e.1).sum();
    let weighted: Vec<(Homography<f64>, f64)> = entries.into_iter().map(|(h, a)| (h, a / total)).collect();
    let lattice_to_rect = weighted_mean_homography(&weighted);
    let to_frame = layout.rect_to_frame(g).after(&lattice_to_rect);
    let grid = GridModel::from_homography(n, &to_frame).map_err(|_| RelocateError::Degenerate("back-projection"))?;
    Ok(GridProposal::new(grid, ProposalSource::CircularAsync))
}

fn self_intersecting(q: &[P; 4]) -> bool {
    let cross = |a: P, b: P, c: P, d: P| {
        let o1 = orient2(a, b, c);
        let o2 = orient2(a, b, d);
        let o3 = orient2(c, d, a);
        let o4 = orient2(c, d, b);
        o1 * o2 < 0.0 && o3 * o4 < 0.0
    };
    cross(q[0], q[1], q[2], q[3]) || cross(q[1], q[2], q[3], q[0])
}

// ---------------------------------------------------------------------------------
// acceptance

/// Frames of agreement needed before a slow proposal replaces the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gates {
    pub low_occupancy: u32,
    pub high_occupancy: u32,
}

impl Default for Gates {
    fn default() -> Self {
        Self {
            low_occupancy: 2,
            high_occupancy: 3,
        }
    }
}

impl Gates {
    pub fn for_occupancy(&self, occupancy: f64) -> u32 {
        if occupancy < 0.5 {
            self.low_occupancy
        } else {
            self.high_occupancy
        }
    }
}

/// Corner-wise agreement, in frame pixels, for two proposals to count as the same pose.
pub const STABLE_PX: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Accept,
    Hold,
}

/// Accepts the newest proposal once its streak reaches the occupancy gate. A single
/// frame never suffices, whatever the gates say.
pub fn accept_grid(history: &[GridProposal], occupancy: f64, gates: &Gates) -> Decision {
    match history.last() {
        Some(p) if p.streak >= gates.for_occupancy(occupancy).max(2) => Decision::Accept,
        _ => Decision::Hold,
    }
}

/// Recent proposals of one source, with streaks maintained on push.
#[derive(Debug, Clone, Default)]
pub struct ProposalHistory {
    items: Vec<GridProposal>,
}

const HISTORY_LEN: usize = 8;

impl ProposalHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn proposals(&self) -> &[GridProposal] {
        &self.items
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    /// Records a pose; its streak extends the previous one when both share a source
    /// and agree within [`STABLE_PX`].
    pub fn push(&mut self, grid: GridModel, source: ProposalSource) -> &GridProposal {
        let streak = match self.items.last() {
            Some(p) if p.source == source && p.grid.max_corner_distance(&grid) <= STABLE_PX => p.streak + 1,
            _ => 1,
        };
        if self.items.last().is_some_and(|p| p.source != source) {
            self.items.clear();
        }
        self.items.push(GridProposal { grid, source, streak });
        if self.items.len() > HISTORY_LEN {
            self.items.remove(0);
        }
        self.items.last().unwrap()
    }

    /// Breaks the streak, e.g. when a supervisor run produced nothing.
    pub fn miss(&mut self) {
        self.items.clear();
    }
}

// ---------------------------------------------------------------------------------
// supervisor handoff

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Checker {
    Linear,
    Circular,
}

/// Which slow checker runs. The linear checker holds the slot until the board has
/// enough stones; the circular relocator is then tried in its place and takes over
/// for good after two consecutive successes. A failed trial hands the next run back
/// to the linear checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Handoff {
    pub min_stones: usize,
    active: Checker,
    successes: u32,
    trial_failed: bool,
}

impl Handoff {
    pub fn new(min_stones: usize) -> Self {
        Self {
            min_stones,
            active: Checker::Linear,
            successes: 0,
            trial_failed: false,
        }
    }

    pub fn active(&self) -> Checker {
        self.active
    }

    /// Checker for the next supervisor run.
    pub fn next(&mut self, stones: usize) -> Checker {
        if self.active == Checker::Circular {
            return Checker::Circular;
        }
        if stones >= self.min_stones && !std::mem::take(&mut self.trial_failed) {
            Checker::Circular
        } else {
            Checker::Linear
        }
    }

    pub fn record(&mut self, checker: Checker, ok: bool) {
        if checker != Checker::Circular || self.active == Checker::Circular {
            return;
        }
        if ok {
            self.successes += 1;
            if self.successes >= 2 {
                self.active = Checker::Circular;
            }
        } else {
            self.successes = 0;
            self.trial_failed = true;
        }
    }
}
