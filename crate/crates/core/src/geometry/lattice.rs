use serde::{Deserialize, Serialize};

use super::{orient2, GeometryError, Homography, Point2};
use crate::frame::Frame;

type P = Point2<f64>;

/// A board intersection, 0-based, column first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    pub col: usize,
    pub row: usize,
}

impl LatticePoint {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }

    pub fn in_range(self, n: usize) -> bool {
        self.col < n && self.row < n
    }

    /// The 4-neighbours that exist on an `n`x`n` board.
    pub fn neighbours(self, n: usize) -> impl Iterator<Item = LatticePoint> {
        let (c, r) = (self.col as isize, self.row as isize);
        [(c - 1, r), (c + 1, r), (c, r - 1), (c, r + 1)]
            .into_iter()
            .filter(move |&(c, r)| c >= 0 && r >= 0 && (c as usize) < n && (r as usize) < n)
            .map(|(c, r)| LatticePoint::new(c as usize, r as usize))
    }

    pub fn as_point(self) -> P {
        P::new(self.col as f64, self.row as f64)
    }
}

/// The board's pose in a frame: corners of the outer grid lines and the projective map
/// from lattice coordinates `(col, row)` to frame pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridModel {
    n: usize,
    corners: [P; 4],
    to_frame: Homography<f64>,
    to_lattice: Homography<f64>,
}

pub const BOARD_SIZES: [usize; 3] = [9, 13, 19];

impl GridModel {
    /// Corners ordered top-left, top-right, bottom-right, bottom-left as seen on the
    /// rectified board.
    pub fn from_corners(n: usize, corners: [P; 4]) -> Result<Self, GeometryError> {
        if !BOARD_SIZES.contains(&n) {
            return Err(GeometryError::Degenerate("board size must be 9, 13 or 19"));
        }
        if corners.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::Degenerate("non-finite corner"));
        }
        let signs: Vec<f64> = (0..4)
            .map(|i| orient2(corners[i], corners[(i + 1) % 4], corners[(i + 2) % 4]))
            .collect();
        let all_pos = signs.iter().all(|&s| s > 1e-9);
        let all_neg = signs.iter().all(|&s| s < -1e-9);
        if !(all_pos || all_neg) {
            return Err(GeometryError::Degenerate("corners are not a strictly convex quadrilateral"));
        }
        let m = (n - 1) as f64;
        let lattice = [P::new(0.0, 0.0), P::new(m, 0.0), P::new(m, m), P::new(0.0, m)];
        let to_frame = Homography::from_pairs(&[
            (lattice[0], corners[0]),
            (lattice[1], corners[1]),
            (lattice[2], corners[2]),
            (lattice[3], corners[3]),
        ])?;
        let to_lattice = to_frame.inverse()?;
        Ok(Self {
            n,
            corners,
            to_frame,
            to_lattice,
        })
    }

    /// Grid whose lattice-to-frame map is `h`.
    pub fn from_homography(n: usize, h: &Homography<f64>) -> Result<Self, GeometryError> {
        let m = (n - 1) as f64;
        let corners = [
            h.apply(P::new(0.0, 0.0))?,
            h.apply(P::new(m, 0.0))?,
            h.apply(P::new(m, m))?,
            h.apply(P::new(0.0, m))?,
        ];
        Self::from_corners(n, corners)
    }

    /// Axis-aligned grid with its top-left line crossing at `origin` and `spacing`
    /// pixels between lines.
    pub fn axis_aligned(n: usize, origin: P, spacing: f64) -> Result<Self, GeometryError> {
        let s = spacing * (n - 1) as f64;
        Self::from_corners(
            n,
            [
                origin,
                P::new(origin.x + s, origin.y),
                P::new(origin.x + s, origin.y + s),
                P::new(origin.x, origin.y + s),
            ],
        )
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn corners(&self) -> [P; 4] {
        self.corners
    }

    pub fn homography(&self) -> &Homography<f64> {
        &self.to_frame
    }

    pub fn inverse_homography(&self) -> &Homography<f64> {
        &self.to_lattice
    }

    /// Frame coordinates of intersection `(col, row)`.
    pub fn lattice(&self, col: usize, row: usize) -> P {
        self.lattice_f(P::new(col as f64, row as f64))
    }

    /// Frame coordinates of a fractional lattice position.
    pub fn lattice_f(&self, p: P) -> P {
        self.to_frame
            .apply(p)
            .unwrap_or(P::new(f64::NAN, f64::NAN))
    }

    pub fn frame_to_lattice(&self, p: P) -> Result<P, GeometryError> {
        self.to_lattice.apply(p)
    }

    /// Median of the four per-side lattice spacings, in frame pixels.
    pub fn median_spacing(&self) -> f64 {
        let m = (self.n - 1) as f64;
        let mut sides: Vec<f64> = (0..4)
            .map(|i| self.corners[i].distance(self.corners[(i + 1) % 4]) / m)
            .collect();
        sides.sort_by(f64::total_cmp);
        0.5 * (sides[1] + sides[2])
    }

    /// Largest corner-to-corner distance between two grids.
    pub fn max_corner_distance(&self, other: &GridModel) -> f64 {
        self.corners
            .iter()
            .zip(other.corners.iter())
            .map(|(a, b)| a.distance(*b))
            .fold(0.0, f64::max)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Result<Self, GeometryError> {
        Self::from_corners(self.n, self.corners.map(|c| P::new(c.x + dx, c.y + dy)))
    }

    /// Grid composed with a frame-space transform (`frame_map` after this grid).
    pub fn transformed(&self, frame_map: &Homography<f64>) -> Result<Self, GeometryError> {
        Self::from_homography(self.n, &frame_map.after(&self.to_frame))
    }
}

/// Placement of the lattice inside a square rectified image: `margin` lattice
/// spacings of border around the outer lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectLayout {
    pub n: usize,
    pub size: u32,
    pub margin: f64,
}

impl RectLayout {
    pub fn new(n: usize, size: u32) -> Self {
        Self { n, size, margin: 1.0 }
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    /// Rectified pixels per lattice spacing.
    pub fn spacing(&self) -> f64 {
        self.size as f64 / ((self.n - 1) as f64 + 2.0 * self.margin)
    }

    pub fn lattice_to_rect(&self, p: P) -> P {
        let s = self.spacing();
        P::new((p.x + self.margin) * s, (p.y + self.margin) * s)
    }

    pub fn rect_to_lattice(&self, p: P) -> P {
        let s = self.spacing();
        P::new(p.x / s - self.margin, p.y / s - self.margin)
    }

    pub fn point(&self, lp: LatticePoint) -> P {
        self.lattice_to_rect(lp.as_point())
    }

    /// Map from rectified pixels to lattice coordinates.
    pub fn rect_to_lattice_homography(&self) -> Homography<f64> {
        let s = self.spacing();
        Homography::translation(-self.margin, -self.margin).after(&Homography::scaling(1.0 / s, 1.0 / s))
    }

    /// Map from rectified pixels to frame pixels through `g`.
    pub fn rect_to_frame(&self, g: &GridModel) -> Homography<f64> {
        g.homography().after(&self.rect_to_lattice_homography())
    }
}

/// Rectifies the board region with the default one-spacing margin.
pub fn rectify(f: &Frame, g: &GridModel, size: u32) -> Frame {
    rectify_with(f, g, &RectLayout::new(g.size(), size))
}

/// Samples `f` through the grid homography into a `size`x`size` image with bilinear
/// interpolation; samples falling outside the frame are black.
pub fn rectify_with(f: &Frame, g: &GridModel, layout: &RectLayout) -> Frame {
    warp(f, &layout.rect_to_frame(g), layout.size, layout.size)
}

/// Resamples `f` into a `width`x`height` image whose pixel `(u, v)` comes from
/// `out_to_frame(u, v)`.
pub fn warp(f: &Frame, out_to_frame: &Homography<f64>, width: u32, height: u32) -> Frame {
    let h = out_to_frame.matrix();
    let c = f.channels();
    let mut pixels = vec![0u8; width as usize * height as usize * c];
    let (fw, fh) = (f.width() as usize, f.height() as usize);
    let src = f.pixels();
    for v in 0..height {
        for u in 0..width {
            let (x, y) = (u as f64, v as f64);
            let w = h[2][0] * x + h[2][1] * y + h[2][2];
            if w.abs() < 1e-12 {
                continue;
            }
            let fx = (h[0][0] * x + h[0][1] * y + h[0][2]) / w;
            let fy = (h[1][0] * x + h[1][1] * y + h[1][2]) / w;
            if c == 1 {
                if fx >= 0.0 && fy >= 0.0 && fx <= (fw - 1) as f64 && fy <= (fh - 1) as f64 {
                    let (x0, y0) = (fx as usize, fy as usize);
                    let (x1, y1) = ((x0 + 1).min(fw - 1), (y0 + 1).min(fh - 1));
                    let (ax, ay) = ((fx - x0 as f64) as f32, (fy - y0 as f64) as f32);
                    let p = |xx: usize, yy: usize| src[yy * fw + xx] as f32;
                    let top = p(x0, y0) + (p(x1, y0) - p(x0, y0)) * ax;
                    let bottom = p(x0, y1) + (p(x1, y1) - p(x0, y1)) * ax;
                    pixels[v as usize * width as usize + u as usize] = (top + (bottom - top) * ay + 0.5) as u8;
                }
                continue;
            }
            if let Some(s) = f.sample_bilinear(fx, fy) {
                let o = (v as usize * width as usize + u as usize) * c;
                for k in 0..c {
                    pixels[o + k] = (s[k] + 0.5).clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
    Frame::new(width, height, f.colorspace(), pixels)
        .expect("warped buffer")
        .with_position(f.index(), f.timestamp_ms())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Colorspace;

    fn skewed() -> GridModel {
        GridModel::from_corners(
            19,
            [
                P::new(210.0, 95.0),
                P::new(1010.0, 120.0),
                P::new(1100.0, 690.0),
                P::new(140.0, 650.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn lattice_corners_match_model_corners() {
        let g = skewed();
        let [a, b, c, d] = g.corners();
        for (got, want) in [g.lattice(0, 0), g.lattice(18, 0), g.lattice(18, 18), g.lattice(0, 18)]
            .iter()
            .zip([a, b, c, d])
        {
            assert!(got.distance(want) < 1e-6);
        }
    }

    #[test]
    fn non_convex_corners_rejected() {
        let bowtie = [
            P::new(0.0, 0.0),
            P::new(10.0, 10.0),
            P::new(10.0, 0.0),
            P::new(0.0, 10.0),
        ];
        assert!(GridModel::from_corners(9, bowtie).is_err());
        assert!(GridModel::from_corners(7, [P::new(0.0, 0.0), P::new(1.0, 0.0), P::new(1.0, 1.0), P::new(0.0, 1.0)]).is_err());
    }

    #[test]
    fn rectify_axis_aligned_region_is_a_resample() {
        let mut px = Vec::new();
        for y in 0..80u32 {
            for x in 0..80u32 {
                px.push(((x * 3 + y * 2) % 256) as u8);
            }
        }
        let f = Frame::new(80, 80, Colorspace::Grayscale, px).unwrap();
        // 9x9 lattice, spacing 6 px, origin (10, 12): one-spacing margin starts at (4, 6).
        let g = GridModel::axis_aligned(9, P::new(10.0, 12.0), 6.0).unwrap();
        let layout = RectLayout::new(9, 60);
        let out = rectify_with(&f, &g, &layout);
        let scale = 6.0 / layout.spacing();
        for v in 0..60u32 {
            for u in 0..60u32 {
                let (fx, fy) = (4.0 + u as f64 * scale, 6.0 + v as f64 * scale);
                let want = f.sample_bilinear(fx, fy).unwrap()[0];
                let got = out.pixel(u, v)[0] as f32;
                assert!((got - want).abs() <= 1.0, "({u},{v}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn outside_samples_are_black() {
        let f = Frame::filled(50, 50, Colorspace::Rgb, 200);
        let g = GridModel::axis_aligned(9, P::new(-100.0, -100.0), 5.0).unwrap();
        let out = rectify(&f, &g, 40);
        assert_eq!(out.pixel(0, 0), &[0, 0, 0]);
    }
}
