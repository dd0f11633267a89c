//! Raster frames and the per-frame filters: grayscale, unsharp mask and Canny edges.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("pixel buffer holds {actual} bytes, expected {expected} for {width}x{height} {colorspace:?}")]
    BufferSize {
        width: u32,
        height: u32,
        colorspace: Colorspace,
        expected: usize,
        actual: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Colorspace {
    Rgb,
    Grayscale,
    YCbCr,
}

impl Colorspace {
    pub fn channels(self) -> usize {
        match self {
            Colorspace::Grayscale => 1,
            Colorspace::Rgb | Colorspace::YCbCr => 3,
        }
    }
}

/// An immutable 8-bit raster with its position in the source stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    colorspace: Colorspace,
    pixels: Vec<u8>,
    index: u64,
    timestamp_ms: u64,
}

impl Frame {
    pub fn new(
        width: u32,
        height: u32,
        colorspace: Colorspace,
        pixels: Vec<u8>,
    ) -> Result<Self, FrameError> {
        let expected = width as usize * height as usize * colorspace.channels();
        if pixels.len() != expected {
            return Err(FrameError::BufferSize {
                width,
                height,
                colorspace,
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            colorspace,
            pixels,
            index: 0,
            timestamp_ms: 0,
        })
    }

    /// A frame with every channel of every pixel set to `value`.
    pub fn filled(width: u32, height: u32, colorspace: Colorspace, value: u8) -> Self {
        let len = width as usize * height as usize * colorspace.channels();
        Self {
            width,
            height,
            colorspace,
            pixels: vec![value; len],
            index: 0,
            timestamp_ms: 0,
        }
    }

    pub fn with_position(mut self, index: u64, timestamp_ms: u64) -> Self {
        self.index = index;
        self.timestamp_ms = timestamp_ms;
        self
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn colorspace(&self) -> Colorspace {
        self.colorspace
    }

    pub fn channels(&self) -> usize {
        self.colorspace.channels()
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn timestamp_ms(&self) -> u64 {
        self.timestamp_ms
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels();
        let start = (y as usize * self.width as usize + x as usize) * c;
        &self.pixels[start..start + c]
    }

    /// Luma of a pixel regardless of colorspace.
    #[inline]
    pub fn luma_at(&self, x: u32, y: u32) -> u8 {
        let p = self.pixel(x, y);
        match self.colorspace {
            Colorspace::Grayscale | Colorspace::YCbCr => p[0],
            Colorspace::Rgb => luma(p[0], p[1], p[2]),
        }
    }

    /// Bilinear sample of all channels at a sub-pixel position, pixel centers at integer
    /// coordinates. Returns `None` outside the frame.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<[f32; 3]> {
        let w = self.width as f64;
        let h = self.height as f64;
        if !(x >= 0.0 && y >= 0.0 && x <= w - 1.0 && y <= h - 1.0) {
            return None;
        }
        let x0 = x.floor() as u32;
        let y0 = y.floor() as u32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        let c = self.channels();
        let mut out = [0.0f32; 3];
        let (a, b, cc, d) = (
            self.pixel(x0, y0),
            self.pixel(x1, y0),
            self.pixel(x0, y1),
            self.pixel(x1, y1),
        );
        for k in 0..c {
            let top = a[k] as f32 * (1.0 - fx) + b[k] as f32 * fx;
            let bottom = cc[k] as f32 * (1.0 - fx) + d[k] as f32 * fx;
            out[k] = top * (1.0 - fy) + bottom * fy;
        }
        if c == 1 {
            out[1] = out[0];
            out[2] = out[0];
        }
        Some(out)
    }
}

/// Rec. 601 luma, rounded to nearest.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f32 + 0.587 * g as f32 + 0.114 * b as f32 + 0.5).min(255.0) as u8
}

/// Full-range (JPEG) Rec. 601 RGB to YCbCr, unrounded.
#[inline]
pub fn rgb_to_ycbcr(r: f32, g: f32, b: f32) -> [f32; 3] {
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b,
        128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b,
    ]
}

pub fn to_grayscale(f: &Frame) -> Frame {
    let pixels = match f.colorspace {
        Colorspace::Grayscale => return f.clone(),
        Colorspace::Rgb => f
            .pixels
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect(),
        Colorspace::YCbCr => f.pixels.chunks_exact(3).map(|p| p[0]).collect(),
    };
    Frame {
        width: f.width,
        height: f.height,
        colorspace: Colorspace::Grayscale,
        pixels,
        index: f.index,
        timestamp_ms: f.timestamp_ms,
    }
}

pub fn to_ycbcr(f: &Frame) -> Frame {
    let pixels = match f.colorspace {
        Colorspace::YCbCr => return f.clone(),
        Colorspace::Grayscale => f.pixels.iter().flat_map(|&y| [y, 128, 128]).collect(),
        Colorspace::Rgb => f
            .pixels
            .chunks_exact(3)
            .flat_map(|p| {
                rgb_to_ycbcr(p[0] as f32, p[1] as f32, p[2] as f32)
                    .map(|v| (v + 0.5).clamp(0.0, 255.0) as u8)
            })
            .collect(),
    };
    Frame {
        width: f.width,
        height: f.height,
        colorspace: Colorspace::YCbCr,
        pixels,
        index: f.index,
        timestamp_ms: f.timestamp_ms,
    }
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i32;
    let mut k: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur of a single plane, replicating borders.
pub(crate) fn blur_plane(plane: &[f32], width: usize, height: usize, sigma: f32) -> Vec<f32> {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0f32; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let xx = (x as isize + k as isize - radius).clamp(0, width as isize - 1) as usize;
                acc += w * row[xx];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0f32; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let yy = (y as isize + k as isize - radius).clamp(0, height as isize - 1) as usize;
                acc += w * tmp[yy * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// `f + amount * (f - blur(f, sigma))`, per channel, clamped to 0..=255.
pub fn unsharp_mask(f: &Frame, sigma: f32, amount: f32) -> Frame {
    assert!(sigma > 0.0 && amount >= 0.0, "unsharp_mask needs sigma > 0, amount >= 0");
    if amount == 0.0 {
        return f.clone();
    }
    let (w, h, c) = (f.width as usize, f.height as usize, f.channels());
    let mut pixels = vec![0u8; f.pixels.len()];
    for ch in 0..c {
        let plane: Vec<f32> = f.pixels.iter().skip(ch).step_by(c).map(|&v| v as f32).collect();
        let blurred = blur_plane(&plane, w, h, sigma);
        for (i, (&orig, &soft)) in plane.iter().zip(&blurred).enumerate() {
            let v = orig + amount * (orig - soft);
            pixels[i * c + ch] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    Frame { pixels, ..f.clone() }
}

/// Binary edge raster. Edge pixels carry the gradient that produced them when the map
/// came out of [`canny_edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    width: u32,
    height: u32,
    bits: Vec<bool>,
    gradients: Option<Vec<[f32; 2]>>,
}

impl EdgeMap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
            gradients: None,
        }
    }

    pub fn from_points(width: u32, height: u32, points: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut e = Self::new(width, height);
        for (x, y) in points {
            if x < width && y < height {
                e.set(x, y, true);
            }
        }
        e
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Edge pixels in row-major order.
    pub fn points(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }

    /// Sobel gradient `(gx, gy)` at an edge pixel, when known.
    pub fn gradient(&self, x: u32, y: u32) -> Option<[f32; 2]> {
        self.gradients
            .as_ref()
            .map(|g| g[y as usize * self.width as usize + x as usize])
    }

    pub fn has_gradients(&self) -> bool {
        self.gradients.is_some()
    }

    /// The `width`x`height` window whose top-left corner is `(x0, y0)`, keeping
    /// gradients; parts outside the map are empty.
    pub fn crop(&self, x0: i64, y0: i64, width: u32, height: u32) -> Self {
        let mut out = Self::new(width, height);
        if self.gradients.is_some() {
            out.gradients = Some(vec![[0.0; 2]; width as usize * height as usize]);
        }
        for v in 0..height as i64 {
            let y = y0 + v;
            if y < 0 || y >= self.height as i64 {
                continue;
            }
            for u in 0..width as i64 {
                let x = x0 + u;
                if x < 0 || x >= self.width as i64 || !self.get(x as u32, y as u32) {
                    continue;
                }
                let o = v as usize * width as usize + u as usize;
                out.bits[o] = true;
                if let (Some(src), Some(dst)) = (&self.gradients, out.gradients.as_mut()) {
                    dst[o] = src[y as usize * self.width as usize + x as usize];
                }
            }
        }
        out
    }

    /// Translated copy; pixels pushed outside are dropped.
    pub fn translated(&self, dx: i32, dy: i32) -> Self {
        let mut out = Self::new(self.width, self.height);
        if let Some(g) = &self.gradients {
            out.gradients = Some(vec![[0.0; 2]; g.len()]);
        }
        for (x, y) in self.points() {
            let (nx, ny) = (x as i64 + dx as i64, y as i64 + dy as i64);
            if nx >= 0 && ny >= 0 && nx < self.width as i64 && ny < self.height as i64 {
                out.set(nx as u32, ny as u32, true);
                if let (Some(src), Some(dst)) = (&self.gradients, out.gradients.as_mut()) {
                    dst[ny as usize * self.width as usize + nx as usize] =
                        src[y as usize * self.width as usize + x as usize];
                }
            }
        }
        out
    }
}

/// Sobel derivatives of the luma plane with replicated borders: `(gx, gy)` per pixel.
pub fn sobel_gradients(f: &Frame) -> Vec<[f32; 2]> {
    let (w, h) = (f.width as usize, f.height as usize);
    let gray: Vec<f32> = if f.colorspace == Colorspace::Grayscale {
        f.pixels.iter().map(|&v| v as f32).collect()
    } else {
        to_grayscale(f).pixels.iter().map(|&v| v as f32).collect()
    };
    let at = |x: isize, y: isize| -> f32 {
        let xx = x.clamp(0, w as isize - 1) as usize;
        let yy = y.clamp(0, h as isize - 1) as usize;
        gray[yy * w + xx]
    };
    let mut out = vec![[0.0f32; 2]; w * h];
    let border = |out: &mut [[f32; 2]], x: isize, y: isize| {
        let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
        let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        out[y as usize * w + x as usize] = [gx, gy];
    };
    for y in 0..h {
        if y == 0 || y + 1 >= h || w < 3 {
            for x in 0..w {
                border(&mut out, x as isize, y as isize);
            }
            continue;
        }
        border(&mut out, 0, y as isize);
        border(&mut out, w as isize - 1, y as isize);
        let (up, mid, down) = (&gray[(y - 1) * w..y * w], &gray[y * w..(y + 1) * w], &gray[(y + 1) * w..(y + 2) * w]);
        for x in 1..w - 1 {
            let gx = (up[x + 1] + 2.0 * mid[x + 1] + down[x + 1]) - (up[x - 1] + 2.0 * mid[x - 1] + down[x - 1]);
            let gy = (down[x - 1] + 2.0 * down[x] + down[x + 1]) - (up[x - 1] + 2.0 * up[x] + up[x + 1]);
            out[y * w + x] = [gx, gy];
        }
    }
    out
}

/// Canny edge detector: Sobel gradients, non-maximum suppression along the quantized
/// gradient direction, then double-threshold hysteresis with 8-connectivity.
/// Default Canny hysteresis thresholds on 8-bit Sobel magnitudes.
pub const CANNY_DEFAULT: (f32, f32) = (50.0, 150.0);

pub fn canny_edges(f: &Frame, low: f32, high: f32) -> EdgeMap {
    assert!(0.0 <= low && low <= high, "canny thresholds must satisfy 0 <= low <= high");
    let (w, h) = (f.width as usize, f.height as usize);
    let grads = sobel_gradients(f);
    let mag: Vec<f32> = grads.iter().map(|g| (g[0] * g[0] + g[1] * g[1]).sqrt()).collect();

    // 0 = none, 1 = weak, 2 = strong
    let mut class = vec![0u8; w * h];
    let tan22 = 0.414_213_56f32;
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let i = y * w + x;
            let m = mag[i];
            if m < low || m == 0.0 {
                continue;
            }
            let [gx, gy] = grads[i];
            let (ax, ay) = (gx.abs(), gy.abs());
            // Neighbors along the gradient; ties keep the first pixel of a plateau.
            let (before, after) = if ay <= ax * tan22 {
                (mag[i - 1], mag[i + 1])
            } else if ax <= ay * tan22 {
                (mag[i - w], mag[i + w])
            } else if (gx > 0.0) == (gy > 0.0) {
                (mag[i - w - 1], mag[i + w + 1])
            } else {
                (mag[i - w + 1], mag[i + w - 1])
            };
            if m > before && m >= after {
                class[i] = if m >= high { 2 } else { 1 };
            }
        }
    }

    let mut bits = vec![false; w * h];
    let mut queue: VecDeque<usize> = class
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 2)
        .map(|(i, _)| i)
        .collect();
    for &i in &queue {
        bits[i] = true;
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !bits[j] && class[j] == 1 {
                    bits[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }

    let gradients = grads
        .iter()
        .zip(&bits)
        .map(|(g, &b)| if b { *g } else { [0.0, 0.0] })
        .collect();
    EdgeMap {
        width: f.width,
        height: f.height,
        bits,
        gradients: Some(gradients),
    }
}
