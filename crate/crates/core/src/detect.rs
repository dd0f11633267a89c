//! Stone detection: per-point features from the rectified board, a nearest-mean
//! classifier against running class statistics, the three-frame main detector and the
//! five-frame asynchronous scanner.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::frame::{canny_edges, to_grayscale, to_ycbcr, EdgeMap, Frame, CANNY_DEFAULT};
use crate::game::{Board, Color};
use crate::geometry::{rectify_with, GridModel, LatticePoint, RectLayout};
use crate::hough::circular_hough;
use crate::synth::STONE_RADIUS;

/// Rectified pixels per lattice spacing used for detection.
pub const DETECT_SPACING: f64 = 24.0;
/// Patch disk radius as a fraction of the half-spacing.
pub const PATCH_FRACTION: f64 = 0.8;
/// Edge-density ring, in spacings, straddling a stone's outline.
pub const RING: (f64, f64) = (0.40, 0.58);

/// Features of one lattice point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionFeatures {
    pub luma_mean: f64,
    /// Mean (Cb, Cr).
    pub chroma_mean: (f64, f64),
    pub luma_var: f64,
    /// Fraction of edge pixels on the ring around the patch.
    pub edge_density: f64,
}

impl DetectionFeatures {
    /// The vector the classifier measures: luma, Cb, Cr, luma standard deviation, edge
    /// density.
    fn vector(&self) -> [f64; DIMS] {
        [
            self.luma_mean,
            self.chroma_mean.0,
            self.chroma_mean.1,
            self.luma_var.max(0.0).sqrt(),
            self.edge_density,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.vector().iter().all(|v| v.is_finite())
    }
}

/// The board warped to an axis-aligned square in YCbCr, with its Canny edges.
#[derive(Debug, Clone)]
pub struct RectView {
    pub layout: RectLayout,
    pub ycc: Frame,
    pub edges: EdgeMap,
}

impl RectView {
    pub fn new(frame: &Frame, g: &GridModel) -> Self {
        Self::with_canny(frame, g, CANNY_DEFAULT)
    }

    pub fn with_canny(frame: &Frame, g: &GridModel, canny: (f32, f32)) -> Self {
        let n = g.size();
        let size = (DETECT_SPACING * (n + 1) as f64).round() as u32;
        let layout = RectLayout::new(n, size);
        Self::from_rect(&rectify_with(frame, g, &layout), layout, canny)
    }

    /// Wraps an already rectified frame laid out as `layout`.
    pub fn from_rect(rect: &Frame, layout: RectLayout, canny: (f32, f32)) -> Self {
        let ycc = to_ycbcr(rect);
        let edges = canny_edges(&to_grayscale(&ycc), canny.0, canny.1);
        Self { layout, ycc, edges }
    }

    pub fn size(&self) -> usize {
        self.layout.n
    }

    pub fn features(&self, p: LatticePoint) -> DetectionFeatures {
        extract_features(&self.ycc, &self.edges, &self.layout, p)
    }

    /// Features of every point, row-major.
    pub fn all_features(&self) -> Vec<DetectionFeatures> {
        let n = self.size();
        (0..n * n)
            .map(|i| self.features(LatticePoint::new(i % n, i / n)))
            .collect()
    }

    /// Whether the circular Hough transform finds a stone-sized circle centred within a
    /// quarter spacing of `p`.
    pub fn circle_at(&self, p: LatticePoint) -> bool {
        let s = self.layout.spacing();
        let c = self.layout.point(p);
        let half = (0.9 * s).ceil() as i64;
        let (x0, y0) = (c.x.round() as i64 - half, c.y.round() as i64 - half);
        let side = (2 * half + 1) as u32;
        let crop = self.edges.crop(x0, y0, side, side);
        let r = STONE_RADIUS * s;
        let min_votes = (0.35 * std::f64::consts::TAU * r) as u32;
        circular_hough(&crop, 0.8 * r, 1.15 * r, min_votes)
            .iter()
            .any(|k| (k.cx - (c.x - x0 as f64)).hypot(k.cy - (c.y - y0 as f64)) < 0.25 * s)
    }
}

/// Mean luma, chroma and luma variance over the point's disk patch, and the edge
/// fraction on the surrounding ring. `ycc` is a YCbCr rectification laid out as `layout`
/// and `edges` its edge map.
pub fn extract_features(ycc: &Frame, edges: &EdgeMap, layout: &RectLayout, p: LatticePoint) -> DetectionFeatures {
    let s = layout.spacing();
    let c = layout.point(p);
    let r_patch = PATCH_FRACTION * 0.5 * s;
    let (r_in, r_out) = (RING.0 * s, RING.1 * s);
    let (w, h) = (ycc.width() as i64, ycc.height() as i64);
    let reach = r_out.ceil() as i64 + 1;
    let (cx, cy) = (c.x.round() as i64, c.y.round() as i64);
    let (mut n, mut sy, mut syy, mut scb, mut scr) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut ring, mut ring_on) = (0.0, 0.0);
    for y in (cy - reach).max(0)..(cy + reach + 1).min(h) {
        for x in (cx - reach).max(0)..(cx + reach + 1).min(w) {
            let d = (x as f64 - c.x).hypot(y as f64 - c.y);
            if d <= r_patch {
                let px = ycc.pixel(x as u32, y as u32);
                let l = px[0] as f64;
                n += 1.0;
                sy += l;
                syy += l * l;
                scb += px[1] as f64;
                scr += px[2] as f64;
            } else if d >= r_in && d <= r_out {
                ring += 1.0;
                if edges.get(x as u32, y as u32) {
                    ring_on += 1.0;
                }
            }
        }
    }
    if n == 0.0 {
        return DetectionFeatures {
            luma_mean: 0.0,
            chroma_mean: (128.0, 128.0),
            luma_var: 0.0,
            edge_density: 0.0,
        };
    }
    let mean = sy / n;
    DetectionFeatures {
        luma_mean: mean,
        chroma_mean: (scb / n, scr / n),
        luma_var: (syy / n - mean * mean).max(0.0),
        edge_density: if ring > 0.0 { ring_on / ring } else { 0.0 },
    }
}

const DIMS: usize = 5;
/// Variance floors per dimension, so a tight class cannot dominate the distance.
const VAR_FLOOR: [f64; DIMS] = [36.0, 4.0, 4.0, 9.0, 0.0025];

/// Classifier outcome for one point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointClass {
    Empty,
    Black,
    White,
    Uncertain,
}

impl PointClass {
    pub fn stone(self) -> Option<Color> {
        match self {
            PointClass::Black => Some(Color::Black),
            PointClass::White => Some(Color::White),
            _ => None,
        }
    }

    pub fn of(c: Option<Color>) -> Self {
        match c {
            None => PointClass::Empty,
            Some(Color::Black) => PointClass::Black,
            Some(Color::White) => PointClass::White,
        }
    }
}

/// Exponentially weighted mean and variance of the feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub mean: [f64; DIMS],
    pub var: [f64; DIMS],
    pub count: u64,
}

impl Default for ClassStats {
    fn default() -> Self {
        Self {
            mean: [0.0; DIMS],
            var: [0.0; DIMS],
            count: 0,
        }
    }
}

impl ClassStats {
    fn push(&mut self, x: [f64; DIMS], alpha: f64) {
        if self.count == 0 {
            self.mean = x;
            self.var = [0.0; DIMS];
        } else {
            // early samples weigh like a plain running mean
            let a = alpha.max(1.0 / (self.count + 1) as f64);
            for k in 0..DIMS {
                let d = x[k] - self.mean[k];
                self.mean[k] += a * d;
                self.var[k] = (1.0 - a) * (self.var[k] + a * d * d);
            }
        }
        self.count += 1;
    }

    fn floored_var(&self, k: usize) -> f64 {
        self.var[k].max(VAR_FLOOR[k])
    }

    /// Variance-normalized squared distance with per-dimension weights.
    fn distance2(&self, x: &[f64; DIMS], weights: &[f64; DIMS]) -> f64 {
        (0..DIMS)
            .map(|k| weights[k] * (x[k] - self.mean[k]).powi(2) / self.floored_var(k))
            .sum()
    }

    /// Chroma distance to `other` in units of the pooled chroma standard deviation.
    fn chroma_separation(&self, other: &ClassStats) -> f64 {
        let d = (self.mean[1] - other.mean[1]).hypot(self.mean[2] - other.mean[2]);
        let pooled = 0.25 * (self.floored_var(1) + self.floored_var(2) + other.floored_var(1) + other.floored_var(2));
        d / pooled.sqrt()
    }
}

/// Running statistics of the Black, White and Empty classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStats {
    pub black: ClassStats,
    pub white: ClassStats,
    pub empty: ClassStats,
    pub halflife: f64,
}

impl ReferenceStats {
    pub fn new(halflife: f64) -> Self {
        assert!(halflife > 0.0, "half-life must be positive");
        Self {
            black: ClassStats::default(),
            white: ClassStats::default(),
            empty: ClassStats::default(),
            halflife,
        }
    }

    /// Seeds the Empty class from an empty board.
    pub fn seeded(halflife: f64, empty_points: impl IntoIterator<Item = DetectionFeatures>) -> Self {
        let mut r = Self::new(halflife);
        for x in empty_points {
            r.update(PointClass::Empty, &x);
        }
        r
    }

    fn alpha(&self) -> f64 {
        1.0 - 0.5f64.powf(1.0 / self.halflife)
    }

    pub fn class(&self, c: PointClass) -> Option<&ClassStats> {
        match c {
            PointClass::Empty => Some(&self.empty),
            PointClass::Black => Some(&self.black),
            PointClass::White => Some(&self.white),
            PointClass::Uncertain => None,
        }
    }

    /// Adds a confirmed example; `Uncertain` is ignored.
    pub fn update(&mut self, c: PointClass, x: &DetectionFeatures) {
        let alpha = self.alpha();
        let v = x.vector();
        match c {
            PointClass::Empty => self.empty.push(v, alpha),
            PointClass::Black => self.black.push(v, alpha),
            PointClass::White => self.white.push(v, alpha),
            PointClass::Uncertain => {}
        }
    }

    /// Updates every point whose board state the classifier agrees with.
    pub fn learn(&mut self, board: &Board, features: &[DetectionFeatures], classes: &[PointClass]) {
        let n = board.size();
        for (i, (x, &c)) in features.iter().zip(classes).enumerate() {
            if c != PointClass::Uncertain && c == PointClass::of(board.get(LatticePoint::new(i % n, i / n))) {
                self.update(c, x);
            }
        }
    }

    /// Weight of the chroma terms: zero once the empty class's chroma lies within one
    /// pooled standard deviation of a stone class, one beyond three.
    pub fn chroma_weight(&self) -> f64 {
        let stones: Vec<&ClassStats> = [&self.black, &self.white].into_iter().filter(|c| c.count > 0).collect();
        if self.empty.count == 0 || stones.is_empty() {
            // with no stone examples the board hue alone says nothing about stones
            return 0.0;
        }
        let sep = stones
            .iter()
            .map(|c| self.empty.chroma_separation(c))
            .fold(f64::INFINITY, f64::min);
        ((sep - 1.0) / 2.0).clamp(0.0, 1.0)
    }

    /// A stand-in for a class with no samples yet: the Empty statistics with the luma
    /// pushed towards black or white and a wide luma variance.
    fn prototype(&self, c: Color) -> ClassStats {
        let mut p = self.empty.clone();
        let l = self.empty.mean[0];
        p.mean[0] = match c {
            Color::Black => 0.3 * l,
            Color::White => l + 0.6 * (255.0 - l).max(20.0),
        };
        p.var[0] = p.var[0].max((0.25 * (p.mean[0] - l)).powi(2));
        p.count = 0;
        p
    }
}

/// Margin of the nearest-class rule: the winner must be closer than this fraction of the
/// runner-up's distance.
pub const DEFAULT_MARGIN: f64 = 0.6;

/// Nearest class mean under the variance-normalized distance, or `Uncertain` when the
/// runner-up is not clearly farther. Classes without samples fall back to luma prototypes
/// derived from the Empty class, and then only luma is compared.
pub fn classify_point(x: &DetectionFeatures, refs: &ReferenceStats, margin: f64) -> PointClass {
    let v = x.vector();
    let cw = refs.chroma_weight();
    // until both stone classes have examples only luminance polarity is meaningful
    let weights = if refs.black.count > 0 && refs.white.count > 0 {
        [1.0, cw, cw, 1.0, 1.0]
    } else {
        [1.0, 0.0, 0.0, 0.0, 0.0]
    };
    let black_proto;
    let white_proto;
    let black = if refs.black.count > 0 {
        &refs.black
    } else {
        black_proto = refs.prototype(Color::Black);
        &black_proto
    };
    let white = if refs.white.count > 0 {
        &refs.white
    } else {
        white_proto = refs.prototype(Color::White);
        &white_proto
    };
    let mut d = [
        (refs.empty.distance2(&v, &weights).sqrt(), PointClass::Empty),
        (black.distance2(&v, &weights).sqrt(), PointClass::Black),
        (white.distance2(&v, &weights).sqrt(), PointClass::White),
    ];
    d.sort_by(|a, b| a.0.total_cmp(&b.0));
    if d[0].0 < margin * d[1].0 {
        d[0].1
    } else {
        PointClass::Uncertain
    }
}

/// Detector settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectParams {
    pub margin: f64,
    pub gate_main: u32,
    pub gate_async: u32,
    pub halflife: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            gate_main: 3,
            gate_async: 5,
            halflife: 50.0,
        }
    }
}

/// A stone the main detector has seen for `gate` consecutive frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub point: LatticePoint,
    pub color: Color,
    pub streak: u32,
}

/// Consecutive-frame evidence of the main detector, one hypothesis per point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MainEvidence {
    streaks: BTreeMap<LatticePoint, (Color, u32)>,
}

impl MainEvidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.streaks.clear();
    }

    pub fn streak(&self, p: LatticePoint) -> Option<(Color, u32)> {
        self.streaks.get(&p).copied()
    }

    /// Feeds one frame's class for a believed-empty point; returns a detection when the
    /// streak reaches `gate`. Any other class, or a colour flip, restarts the count.
    pub fn observe(&mut self, p: LatticePoint, class: PointClass, gate: u32) -> Option<Detection> {
        let Some(color) = class.stone() else {
            self.streaks.remove(&p);
            return None;
        };
        let e = self.streaks.entry(p).or_insert((color, 0));
        if e.0 != color {
            *e = (color, 0);
        }
        e.1 += 1;
        (e.1 == gate).then_some(Detection {
            point: p,
            color,
            streak: e.1,
        })
    }

    /// Re-arms a detection the game refused for now, so it is emitted again next frame if
    /// the stone is still there.
    pub fn defer(&mut self, p: LatticePoint) {
        if let Some(e) = self.streaks.get_mut(&p) {
            e.1 = e.1.saturating_sub(1);
        }
    }

    /// Drops evidence for points the board now holds.
    pub fn retain_empty(&mut self, board: &Board) {
        self.streaks.retain(|p, _| board.get(*p).is_none());
    }
}

/// Output of one main-detector frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MainReport {
    pub detections: Vec<Detection>,
    /// Class of every point, row-major.
    pub classes: Vec<PointClass>,
    /// Believed-occupied points currently classified Empty.
    pub vanished: Vec<LatticePoint>,
    /// Why the frame produced no detections, if it was skipped. The evidence was reset.
    pub suspended: Option<Suspension>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suspension {
    /// Too many believed stones disagree with the image: the grid or the view is off.
    Contradicted,
    /// Too many stones appeared at once for the main detector; they are left to the
    /// scanner.
    ManyNewStones,
}

/// Believed stones that may disagree with the image before a frame is distrusted.
fn contradiction_limit(stones: usize) -> usize {
    4.max(stones / 5)
}

/// Newly seen stones in one frame beyond which the frame is distrusted.
const MAX_NEW_STONES: usize = 4;

/// One frame of the main detector over pre-computed features.
///
/// Believed-empty points classified Black or White extend their evidence; every point
/// reaching the main gate is reported. If the image contradicts the board at many points
/// at once (a hand over the stones, a grid that slipped), the frame is skipped.
pub fn main_step(
    features: &[DetectionFeatures],
    board: &Board,
    refs: &ReferenceStats,
    evidence: &mut MainEvidence,
    params: &DetectParams,
) -> MainReport {
    let n = board.size();
    let classes: Vec<PointClass> = features.iter().map(|x| classify_point(x, refs, params.margin)).collect();
    let mut contradictions = 0;
    let mut fresh = 0;
    let mut vanished = Vec::new();
    for (i, &c) in classes.iter().enumerate() {
        let p = LatticePoint::new(i % n, i / n);
        match board.get(p) {
            Some(color) => {
                if c != PointClass::of(Some(color)) {
                    contradictions += 1;
                }
                if c == PointClass::Empty {
                    vanished.push(p);
                }
            }
            None => {
                if c.stone().is_some() {
                    fresh += 1;
                }
            }
        }
    }
    let suspended = if contradictions > contradiction_limit(board.stones()) {
        Some(Suspension::Contradicted)
    } else if fresh > MAX_NEW_STONES {
        Some(Suspension::ManyNewStones)
    } else {
        None
    };
    if suspended.is_some() {
        evidence.clear();
        return MainReport {
            detections: Vec::new(),
            classes,
            vanished,
            suspended,
        };
    }
    evidence.retain_empty(board);
    let mut detections = Vec::new();
    for (i, &c) in classes.iter().enumerate() {
        let p = LatticePoint::new(i % n, i / n);
        if board.get(p).is_none() {
            if let Some(d) = evidence.observe(p, c, params.gate_main) {
                detections.push(d);
            }
        }
    }
    MainReport {
        detections,
        classes,
        vanished,
        suspended: None,
    }
}

/// A stone the scanner found that the board does not hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LateDetection {
    pub point: LatticePoint,
    pub color: Color,
    pub streak: u32,
}

/// A believed stone the scanner keeps seeing as empty. Carries no authority; the game
/// state decides what to do with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FalsePositiveReport {
    pub point: LatticePoint,
    pub streak: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScanReport {
    LateDetection(LateDetection),
    FalsePositive(FalsePositiveReport),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Promise {
    streak: u32,
    black: u32,
    white: u32,
}

/// Snapshot-to-snapshot evidence of the asynchronous scanner.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AsyncEvidence {
    promising: BTreeMap<LatticePoint, Promise>,
    emptied: BTreeMap<LatticePoint, u32>,
}

impl AsyncEvidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.promising.clear();
        self.emptied.clear();
    }

    pub fn promising_streak(&self, p: LatticePoint) -> u32 {
        self.promising.get(&p).map_or(0, |e| e.streak)
    }

    pub fn empty_streak(&self, p: LatticePoint) -> u32 {
        self.emptied.get(&p).copied().unwrap_or(0)
    }

    /// Feeds one snapshot's class for `p` given what the board believes is there.
    /// `circle` is asked only once a promising point has reached the gate, and `polarity`
    /// picks a colour when the streak was all `Uncertain`.
    pub fn observe(
        &mut self,
        p: LatticePoint,
        believed: Option<Color>,
        class: PointClass,
        gate: u32,
        circle: impl FnOnce() -> bool,
        polarity: impl FnOnce() -> Color,
    ) -> Option<ScanReport> {
        match believed {
            None => {
                self.emptied.remove(&p);
                if class == PointClass::Empty {
                    self.promising.remove(&p);
                    return None;
                }
                let e = self.promising.entry(p).or_default();
                e.streak += 1;
                match class {
                    PointClass::Black => e.black += 1,
                    PointClass::White => e.white += 1,
                    _ => {}
                }
                if e.streak < gate || !circle() {
                    return None;
                }
                let e = self.promising.remove(&p).unwrap_or_default();
                let color = match e.black.cmp(&e.white) {
                    std::cmp::Ordering::Greater => Color::Black,
                    std::cmp::Ordering::Less => Color::White,
                    std::cmp::Ordering::Equal => polarity(),
                };
                Some(ScanReport::LateDetection(LateDetection {
                    point: p,
                    color,
                    streak: e.streak,
                }))
            }
            Some(_) => {
                self.promising.remove(&p);
                if class != PointClass::Empty {
                    self.emptied.remove(&p);
                    return None;
                }
                let s = self.emptied.entry(p).or_insert(0);
                *s += 1;
                if *s < gate {
                    return None;
                }
                let streak = *s;
                self.emptied.remove(&p);
                Some(ScanReport::FalsePositive(FalsePositiveReport { point: p, streak }))
            }
        }
    }
}

/// One snapshot of the asynchronous scanner. Looks at every point, including those the
/// main detector rejected, and reports late stones (gate plus a Hough circle) and
/// believed stones that stay empty. Never touches the board.
pub fn async_scan_step(
    view: &RectView,
    features: &[DetectionFeatures],
    board: &Board,
    refs: &ReferenceStats,
    evidence: &mut AsyncEvidence,
    params: &DetectParams,
) -> Vec<ScanReport> {
    let n = board.size();
    let empty_luma = refs.empty.mean[0];
    let mut out = Vec::new();
    for (i, x) in features.iter().enumerate() {
        let p = LatticePoint::new(i % n, i / n);
        let class = classify_point(x, refs, params.margin);
        let report = evidence.observe(
            p,
            board.get(p),
            class,
            params.gate_async,
            || view.circle_at(p),
            || {
                if x.luma_mean < empty_luma {
                    Color::Black
                } else {
                    Color::White
                }
            },
        );
        out.extend(report);
    }
    out
}
