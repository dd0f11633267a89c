use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::frame::{Colorspace, Frame};
use crate::game::{Board, Color};
use crate::geometry::{GridModel, LatticePoint, Point2};

type P = Point2<f64>;

/// Stone radius in lattice units.
pub const STONE_RADIUS: f64 = 0.48;
const LINE_WIDTH: f64 = 0.05;
const STAR_RADIUS: f64 = 0.09;
const BOARD_MARGIN: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lighting {
    #[default]
    Warm,
    PaleGrey,
}

/// A hand or arm: a filled polygon in frame pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub polygon: Vec<P>,
}

impl Occluder {
    fn contains(&self, p: P) -> bool {
        let poly = &self.polygon;
        let mut inside = false;
        let mut j = poly.len().wrapping_sub(1);
        for i in 0..poly.len() {
            let (a, b) = (poly[i], poly[j]);
            if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    /// Rough hand reaching `target` from below the frame, `width` pixels wide.
    pub fn arm_to(target: P, width: f64, frame_height: f64) -> Self {
        let w = 0.5 * width;
        Occluder {
            polygon: vec![
                P::new(target.x - w, target.y - 0.6 * w),
                P::new(target.x + w, target.y - 0.6 * w),
                P::new(target.x + 0.8 * w, frame_height + 10.0),
                P::new(target.x - 0.8 * w - 0.3 * width, frame_height + 10.0),
            ],
        }
    }
}

/// Everything needed to draw one frame.
#[derive(Debug, Clone)]
pub struct SceneTruth {
    pub grid: GridModel,
    /// Stones physically on the board, including prisoners not yet taken off.
    pub board: Board,
    pub lighting: Lighting,
    pub noise_sigma: f64,
    pub occluders: Vec<Occluder>,
    pub shadows: bool,
    /// Seeds the wood texture; fixed for a whole session.
    pub texture_seed: u64,
    /// Seeds the sensor noise together with `frame`.
    pub noise_seed: u64,
    pub frame: u64,
}

impl SceneTruth {
    pub fn new(grid: GridModel, board: Board) -> Self {
        Self {
            grid,
            board,
            lighting: Lighting::Warm,
            noise_sigma: 2.0,
            occluders: Vec::new(),
            shadows: true,
            texture_seed: 7,
            noise_seed: 0,
            frame: 0,
        }
    }
}

fn star_points(n: usize) -> Vec<(f64, f64)> {
    let (lo, hi, mid) = match n {
        9 => (2.0, 6.0, 4.0),
        13 => (3.0, 9.0, 6.0),
        _ => (3.0, (n - 4) as f64, ((n - 1) / 2) as f64),
    };
    let mut pts = vec![(lo, lo), (hi, lo), (lo, hi), (hi, hi), (mid, mid)];
    if n >= 19 {
        pts.extend([(mid, lo), (lo, mid), (hi, mid), (mid, hi)]);
    }
    pts
}

#[inline]
fn coverage(inside: f64, px: f64) -> f64 {
    (inside / px + 0.5).clamp(0.0, 1.0)
}

#[inline]
fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

struct Palette {
    table: [f64; 3],
    wood: [f64; 3],
    grain: f64,
    line: [f64; 3],
    desaturate: f64,
}

fn palette(l: Lighting) -> Palette {
    match l {
        Lighting::Warm => Palette {
            table: [58.0, 64.0, 56.0],
            wood: [206.0, 166.0, 104.0],
            grain: 16.0,
            line: [38.0, 30.0, 22.0],
            desaturate: 0.0,
        },
        Lighting::PaleGrey => Palette {
            table: [96.0, 96.0, 98.0],
            wood: [176.0, 172.0, 166.0],
            grain: 9.0,
            line: [44.0, 44.0, 46.0],
            desaturate: 0.85,
        },
    }
}

fn stone_shade(color: Color, dx: f64, dy: f64) -> [f64; 3] {
    let rn2 = (dx * dx + dy * dy) / (STONE_RADIUS * STONE_RADIUS);
    match color {
        Color::Black => {
            let h = (-((dx + 0.17).powi(2) + (dy + 0.17).powi(2)) / (2.0 * 0.09 * 0.09)).exp();
            let v = 28.0 + 50.0 * h + 10.0 * (1.0 - rn2);
            [v, v, v + 3.0]
        }
        Color::White => {
            let h = (-((dx + 0.15).powi(2) + (dy + 0.15).powi(2)) / (2.0 * 0.12 * 0.12)).exp();
            let v = 226.0 - 32.0 * rn2 * rn2 + 18.0 * h;
            [v, v, v - 6.0]
        }
    }
}

/// Draws `truth` into a `width`x`height` RGB frame.
///
/// Every pixel is mapped back onto the board plane and shaded there, so stones are
/// disks on the board and come out as perspective ellipses; edges are anti-aliased
/// using the local pixel footprint on the board.
pub fn render_frame(truth: &SceneTruth, width: u32, height: u32) -> Frame {
    let n = truth.board.size();
    assert_eq!(n, truth.grid.size(), "board and grid sizes differ");
    let pal = palette(truth.lighting);
    let m = truth.grid.inverse_homography().matrix();
    let last = (n - 1) as f64;
    let stars = star_points(n);

    let mut tex = ChaCha8Rng::seed_from_u64(truth.texture_seed);
    let phase: [f64; 4] = [
        tex.gen_range(0.0..6.3),
        tex.gen_range(0.0..6.3),
        tex.gen_range(1.5..3.0),
        tex.gen_range(0.3..0.9),
    ];

    let noise = Normal::new(0.0, truth.noise_sigma.max(1e-9)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(
        truth
            .noise_seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(truth.frame),
    );

    let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (x as f64, y as f64);
            let w = m[2][0] * fx + m[2][1] * fy + m[2][2];
            let mut color = pal.table;
            if w.abs() > 1e-12 {
                let u = (m[0][0] * fx + m[0][1] * fy + m[0][2]) / w;
                let v = (m[1][0] * fx + m[1][1] * fy + m[1][2]) / w;
                let dudx = (m[0][0] - u * m[2][0]) / w;
                let dvdx = (m[1][0] - v * m[2][0]) / w;
                let dudy = (m[0][1] - u * m[2][1]) / w;
                let dvdy = (m[1][1] - v * m[2][1]) / w;
                let px = dudx.hypot(dvdx).max(dudy.hypot(dvdy)).max(1e-6);
                color = shade_board(truth, &pal, &stars, phase, n, last, u, v, px, color);
            }
            let p = P::new(fx, fy);
            if truth.occluders.iter().any(|o| o.contains(p)) {
                let s = 0.85 + 0.15 * ((fx * 0.05).sin() * (fy * 0.04).cos());
                color = [196.0 * s, 146.0 * s, 118.0 * s];
            }
            if pal.desaturate > 0.0 {
                let l = 0.299 * color[0] + 0.587 * color[1] + 0.114 * color[2];
                color = mix(color, [l, l, l], pal.desaturate);
            }
            for c in color {
                let v = if truth.noise_sigma > 0.0 { c + noise.sample(&mut rng) } else { c };
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Frame::new(width, height, Colorspace::Rgb, pixels)
        .expect("rendered buffer")
        .with_position(truth.frame, 0)
}

#[allow(clippy::too_many_arguments)]
fn shade_board(
    truth: &SceneTruth,
    pal: &Palette,
    stars: &[(f64, f64)],
    phase: [f64; 4],
    n: usize,
    last: f64,
    u: f64,
    v: f64,
    px: f64,
    mut color: [f64; 3],
) -> [f64; 3] {
    let edge = (u + BOARD_MARGIN)
        .min(last + BOARD_MARGIN - u)
        .min(v + BOARD_MARGIN)
        .min(last + BOARD_MARGIN - v);
    let board_cov = coverage(edge, px);
    if board_cov <= 0.0 {
        return color;
    }
    let grain = (v * phase[2] * 3.1 + phase[0] + 1.7 * (u * phase[3] + phase[1]).sin()).sin()
        * 0.6
        + (v * 11.0 + 2.0 * (u * 0.37).sin()).sin() * 0.4;
    let wood = [
        pal.wood[0] + pal.grain * grain,
        pal.wood[1] + 0.8 * pal.grain * grain,
        pal.wood[2] + 0.5 * pal.grain * grain,
    ];
    let mut surface = wood;

    // grid lines
    let hw = 0.5 * LINE_WIDTH;
    let cx = u.round().clamp(0.0, last);
    let cy = v.round().clamp(0.0, last);
    let along_v = (v + hw).min(last + hw - v);
    let along_h = (u + hw).min(last + hw - u);
    let vert = coverage(hw - (u - cx).abs(), px) * coverage(along_v, px);
    let horiz = coverage(hw - (v - cy).abs(), px) * coverage(along_h, px);
    let mut ink = vert.max(horiz);
    for &(sx, sy) in stars {
        let d = (u - sx).hypot(v - sy);
        ink = ink.max(coverage(STAR_RADIUS - d, px));
    }
    surface = mix(surface, pal.line, ink);

    // nearby stones: the nearest lattice point and its 8 neighbours
    let (ic, ir) = (u.round() as isize, v.round() as isize);
    let mut shadow = 0.0f64;
    let mut stone: Option<([f64; 3], f64)> = None;
    for dr in -1..=1 {
        for dc in -1..=1 {
            let (c, r) = (ic + dc, ir + dr);
            if c < 0 || r < 0 || c >= n as isize || r >= n as isize {
                continue;
            }
            let lp = LatticePoint::new(c as usize, r as usize);
            let Some(sc) = truth.board.get(lp) else {
                continue;
            };
            let (dx, dy) = (u - c as f64, v - r as f64);
            if truth.shadows {
                let ds = (dx - 0.07).hypot(dy - 0.07);
                shadow = shadow.max(coverage(STONE_RADIUS - ds, px.max(0.06)));
            }
            let cov = coverage(STONE_RADIUS - dx.hypot(dy), px);
            if cov > 0.0 && stone.map_or(true, |(_, c0)| cov > c0) {
                stone = Some((stone_shade(sc, dx, dy), cov));
            }
        }
    }
    if shadow > 0.0 {
        surface = surface.map(|c| c * (1.0 - 0.35 * shadow));
    }
    if let Some((s, cov)) = stone {
        surface = mix(surface, s, cov);
    }
    color = mix(color, surface, board_cov);
    color
}

/// Outer-line corners of a mildly tilted board filling most of a `width`x`height` frame.
pub fn default_pose(n: usize, width: u32, height: u32) -> GridModel {
    let (w, h) = (width as f64, height as f64);
    let side = 0.78 * h.min(w) * (n - 1) as f64 / (n as f64 + 0.5);
    let (cx, cy) = (0.5 * w, 0.52 * h);
    let top = 0.93 * side;
    let corners = [
        P::new(cx - 0.5 * top, cy - 0.47 * side),
        P::new(cx + 0.5 * top, cy - 0.47 * side),
        P::new(cx + 0.5 * side, cy + 0.5 * side),
        P::new(cx - 0.5 * side, cy + 0.5 * side),
    ];
    GridModel::from_corners(n, corners).expect("default pose is convex")
}

/// Random camera pose: scale, position, in-plane rotation up to 8° and keystone tilt.
pub fn random_pose(n: usize, width: u32, height: u32, rng: &mut impl Rng) -> GridModel {
    let (w, h) = (width as f64, height as f64);
    loop {
        let side = rng.gen_range(0.55..0.78) * h.min(w) * (n - 1) as f64 / (n as f64 + 0.5);
        let tilt = rng.gen_range(0.86..1.0);
        let skew = rng.gen_range(-0.04..0.04) * side;
        let rot = rng.gen_range(-8.0..8.0);
        let base = [
            P::new(-0.5 * tilt * side + skew, -0.5 * side),
            P::new(0.5 * tilt * side + skew, -0.5 * side),
            P::new(0.5 * side, 0.5 * side),
            P::new(-0.5 * side, 0.5 * side),
        ];
        let reach = 0.5 * side * std::f64::consts::SQRT_2 * (n as f64 + 0.5) / (n - 1) as f64;
        if 2.0 * reach >= w.min(h) {
            continue;
        }
        let cx = rng.gen_range(reach..w - reach);
        let cy = rng.gen_range(reach..h - reach);
        let corners = base.map(|p| p.rotated_about(P::new(0.0, 0.0), rot).add(P::new(cx, cy)));
        if let Ok(g) = GridModel::from_corners(n, corners) {
            return g;
        }
    }
}
