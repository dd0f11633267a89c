//! Frame sources: numbered image sequences on disk, and raw video behind a decoder trait.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{Colorspace, Frame};

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("source not found: {0}")]
    NotFound(PathBuf),
    #[error("cannot decode {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("invalid source spec: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    ImageSequence,
    RawVideo,
}

impl std::str::FromStr for SourceKind {
    type Err = SourceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "image-sequence" => Ok(SourceKind::ImageSequence),
            "raw-video" => Ok(SourceKind::RawVideo),
            other => Err(SourceError::Invalid(format!("unknown source kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub path: PathBuf,
    pub kind: SourceKind,
    /// Process every k-th frame.
    pub stride: u32,
    /// Nominal spacing between consecutive source frames, used for timestamps.
    #[serde(default = "default_interval")]
    pub frame_interval_ms: u64,
}

fn default_interval() -> u64 {
    40
}

impl SourceSpec {
    pub fn image_sequence(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            kind: SourceKind::ImageSequence,
            stride: 1,
            frame_interval_ms: default_interval(),
        }
    }

    pub fn with_stride(mut self, stride: u32) -> Self {
        self.stride = stride;
        self
    }
}

/// Yields raw frames in stream order. Implement this to plug in a real video decoder.
pub trait VideoDecoder: Send {
    fn next_frame(&mut self) -> Result<Option<Frame>, SourceError>;

    /// Skips one frame without fully decoding it where the format allows.
    fn skip_frame(&mut self) -> Result<bool, SourceError> {
        Ok(self.next_frame()?.is_some())
    }
}

/// Decoder for a directory of numbered PNG/PPM/PGM files in lexicographic order.
pub struct ImageSequenceDecoder {
    files: Vec<PathBuf>,
    next: usize,
}

impl ImageSequenceDecoder {
    pub fn open(dir: &Path) -> Result<Self, SourceError> {
        if !dir.is_dir() {
            return Err(SourceError::NotFound(dir.to_path_buf()));
        }
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|_| SourceError::NotFound(dir.to_path_buf()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm" | "pgm" | "pnm"))
                    .unwrap_or(false)
            })
            .collect();
        files.sort();
        Ok(Self { files, next: 0 })
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

pub(crate) fn decode_image_file(path: &Path) -> Result<Frame, SourceError> {
    let img = image::open(path).map_err(|e| SourceError::Unreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(frame_from_dynamic(img))
}

fn frame_from_dynamic(img: image::DynamicImage) -> Frame {
    match img {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            Frame::new(w, h, Colorspace::Grayscale, g.into_raw()).expect("luma buffer")
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = rgb.dimensions();
            Frame::new(w, h, Colorspace::Rgb, rgb.into_raw()).expect("rgb buffer")
        }
    }
}

impl VideoDecoder for ImageSequenceDecoder {
    fn next_frame(&mut self) -> Result<Option<Frame>, SourceError> {
        let Some(path) = self.files.get(self.next) else {
            return Ok(None);
        };
        self.next += 1;
        decode_image_file(path).map(Some)
    }

    fn skip_frame(&mut self) -> Result<bool, SourceError> {
        if self.next < self.files.len() {
            self.next += 1;
            Ok(true)
        } else {
            Ok(false)
        }
    }
}

/// Raw video as a byte stream of concatenated binary PNM frames (P5/P6), the format
/// `ffmpeg -f image2pipe -c:v ppm` emits.
pub struct PnmStreamDecoder<R> {
    reader: R,
    path: PathBuf,
}

impl PnmStreamDecoder<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, SourceError> {
        let file = File::open(path).map_err(|_| SourceError::NotFound(path.to_path_buf()))?;
        Ok(Self {
            reader: BufReader::new(file),
            path: path.to_path_buf(),
        })
    }
}

impl<R: BufRead> PnmStreamDecoder<R> {
    pub fn from_reader(reader: R) -> Self {
        Self {
            reader,
            path: PathBuf::from("<stream>"),
        }
    }

    fn bad(&self, reason: impl Into<String>) -> SourceError {
        SourceError::Unreadable {
            path: self.path.clone(),
            reason: reason.into(),
        }
    }

    fn header_token(&mut self) -> Result<Option<String>, SourceError> {
        let mut tok = Vec::new();
        loop {
            let mut byte = [0u8; 1];
            let n = self
                .reader
                .read(&mut byte)
                .map_err(|e| self.bad(e.to_string()))?;
            if n == 0 {
                return if tok.is_empty() {
                    Ok(None)
                } else {
                    Err(self.bad("truncated header"))
                };
            }
            match byte[0] {
                b'#' if tok.is_empty() => {
                    let mut skip = String::new();
                    self.reader
                        .read_line(&mut skip)
                        .map_err(|e| self.bad(e.to_string()))?;
                }
                b' ' | b'\t' | b'\n' | b'\r' => {
                    if !tok.is_empty() {
                        return Ok(Some(String::from_utf8_lossy(&tok).into_owned()));
                    }
                }
                b => tok.push(b),
            }
        }
    }
}

impl<R: BufRead + Send> VideoDecoder for PnmStreamDecoder<R> {
    fn next_frame(&mut self) -> Result<Option<Frame>, SourceError> {
        let Some(magic) = self.header_token()? else {
            return Ok(None);
        };
        let colorspace = match magic.as_str() {
            "P5" => Colorspace::Grayscale,
            "P6" => Colorspace::Rgb,
            other => return Err(self.bad(format!("unsupported PNM magic {other:?}"))),
        };
        let mut nums = [0usize; 3];
        for n in nums.iter_mut() {
            let tok = self.header_token()?.ok_or_else(|| self.bad("truncated header"))?;
            *n = tok.parse().map_err(|_| self.bad(format!("bad header field {tok:?}")))?;
        }
        let [w, h, maxval] = nums;
        if maxval != 255 {
            return Err(self.bad("only 8-bit PNM frames are supported"));
        }
        let mut buf = vec![0u8; w * h * colorspace.channels()];
        self.reader
            .read_exact(&mut buf)
            .map_err(|_| self.bad("truncated frame data"))?;
        Frame::new(w as u32, h as u32, colorspace, buf)
            .map(Some)
            .map_err(|e| self.bad(e.to_string()))
    }
}

/// Strided, single-consumer frame iterator.
pub struct FrameSource {
    decoder: Box<dyn VideoDecoder>,
    stride: u32,
    interval_ms: u64,
    ordinal: u64,
    pending: Option<Frame>,
    done: bool,
}

impl std::fmt::Debug for FrameSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrameSource")
            .field("stride", &self.stride)
            .field("interval_ms", &self.interval_ms)
            .field("ordinal", &self.ordinal)
            .finish_non_exhaustive()
    }
}

impl FrameSource {
    pub fn from_decoder(
        decoder: Box<dyn VideoDecoder>,
        stride: u32,
        interval_ms: u64,
    ) -> Result<Self, SourceError> {
        if stride == 0 {
            return Err(SourceError::Invalid("stride must be >= 1".into()));
        }
        Ok(Self {
            decoder,
            stride,
            interval_ms,
            ordinal: 0,
            pending: None,
            done: false,
        })
    }

    /// Builds a source over frames already in memory.
    pub fn from_frames(frames: Vec<Frame>, stride: u32) -> Result<Self, SourceError> {
        struct InMemory(std::vec::IntoIter<Frame>);
        impl VideoDecoder for InMemory {
            fn next_frame(&mut self) -> Result<Option<Frame>, SourceError> {
                Ok(self.0.next())
            }
        }
        Self::from_decoder(Box::new(InMemory(frames.into_iter())), stride, default_interval())
    }
}

impl Iterator for FrameSource {
    type Item = Result<Frame, SourceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let frame = match self.pending.take() {
            Some(f) => f,
            None => match self.decoder.next_frame() {
                Ok(Some(f)) => f,
                Ok(None) => {
                    self.done = true;
                    return None;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            },
        };
        let index = self.ordinal;
        let out = frame.with_position(index, index * self.interval_ms);
        for _ in 1..self.stride {
            match self.decoder.skip_frame() {
                Ok(true) => {}
                Ok(false) => {
                    self.done = true;
                    break;
                }
                Err(e) => {
                    log::warn!("skipping undecodable frame: {e}");
                }
            }
        }
        self.ordinal += self.stride as u64;
        Some(Ok(out))
    }
}

/// Opens a source and decodes its first frame eagerly so bad inputs fail here.
pub fn open_source(spec: &SourceSpec) -> Result<FrameSource, SourceError> {
    if spec.stride == 0 {
        return Err(SourceError::Invalid("stride must be >= 1".into()));
    }
    if !spec.path.exists() {
        return Err(SourceError::NotFound(spec.path.clone()));
    }
    let mut decoder: Box<dyn VideoDecoder> = match spec.kind {
        SourceKind::ImageSequence => Box::new(ImageSequenceDecoder::open(&spec.path)?),
        SourceKind::RawVideo => {
            if spec.path.is_dir() {
                return Err(SourceError::Unreadable {
                    path: spec.path.clone(),
                    reason: "raw-video source must be a file".into(),
                });
            }
            Box::new(PnmStreamDecoder::open(&spec.path)?)
        }
    };
    let first = decoder.next_frame()?;
    let mut source = FrameSource::from_decoder(decoder, spec.stride, spec.frame_interval_ms)?;
    match first {
        Some(f) => source.pending = Some(f),
        None => source.done = true,
    }
    Ok(source)
}

/// Writes a frame as PNG (RGB or grayscale).
pub fn save_png(frame: &Frame, path: &Path) -> Result<(), SourceError> {
    let err = |e: image::ImageError| SourceError::Unreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    match frame.colorspace() {
        Colorspace::Grayscale => image::GrayImage::from_raw(frame.width(), frame.height(), frame.pixels().to_vec())
            .expect("gray buffer")
            .save(path)
            .map_err(err),
        Colorspace::Rgb => image::RgbImage::from_raw(frame.width(), frame.height(), frame.pixels().to_vec())
            .expect("rgb buffer")
            .save(path)
            .map_err(err),
        Colorspace::YCbCr => Err(SourceError::Invalid("cannot save YCbCr frames".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn write_sequence(dir: &Path, n: usize) {
        for i in 0..n {
            let f = Frame::filled(6, 4, Colorspace::Rgb, (i * 20) as u8);
            save_png(&f, &dir.join(format!("frame_{i:04}.png"))).unwrap();
        }
    }

    #[test]
    fn sequence_stride_one_and_four() {
        let dir = tempfile::tempdir().unwrap();
        write_sequence(dir.path(), 10);
        let all: Vec<Frame> = open_source(&SourceSpec::image_sequence(dir.path()))
            .unwrap()
            .map(Result::unwrap)
            .collect();
        assert_eq!(all.len(), 10);
        assert!(all.windows(2).all(|w| w[0].index() < w[1].index()));

        let strided: Vec<u64> = open_source(&SourceSpec::image_sequence(dir.path()).with_stride(4))
            .unwrap()
            .map(|f| f.unwrap().index())
            .collect();
        assert_eq!(strided, vec![0, 4, 8]);
    }

    #[test]
    fn stride_count_is_ceiling() {
        for n in 0..12usize {
            for k in 1..5u32 {
                let frames = (0..n).map(|_| Frame::filled(2, 2, Colorspace::Grayscale, 0)).collect();
                let got = FrameSource::from_frames(frames, k).unwrap().count();
                assert_eq!(got, n.div_ceil(k as usize), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn missing_path_is_not_found() {
        let err = open_source(&SourceSpec::image_sequence("/definitely/not/here")).unwrap_err();
        assert!(matches!(err, SourceError::NotFound(_)));
    }

    #[test]
    fn corrupt_first_frame_is_unreadable() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.png"), b"not a png").unwrap();
        let err = open_source(&SourceSpec::image_sequence(dir.path())).unwrap_err();
        assert!(matches!(err, SourceError::Unreadable { .. }));
    }

    #[test]
    fn pnm_stream_decodes_concatenated_frames() {
        let mut bytes = Vec::new();
        for v in [10u8, 20, 30] {
            bytes.extend_from_slice(b"P6\n# comment\n3 2\n255\n");
            bytes.extend(std::iter::repeat(v).take(18));
        }
        bytes.extend_from_slice(b"P5 2 2 255\n");
        bytes.extend_from_slice(&[1, 2, 3, 4]);
        let mut dec = PnmStreamDecoder::from_reader(Cursor::new(bytes));
        let mut seen = Vec::new();
        while let Some(f) = dec.next_frame().unwrap() {
            seen.push((f.colorspace(), f.pixels()[0]));
        }
        assert_eq!(
            seen,
            vec![
                (Colorspace::Rgb, 10),
                (Colorspace::Rgb, 20),
                (Colorspace::Rgb, 30),
                (Colorspace::Grayscale, 1)
            ]
        );
    }

    #[test]
    fn raw_video_file_source() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.ppm");
        let mut bytes = Vec::new();
        for v in 0..5u8 {
            bytes.extend_from_slice(b"P5 4 4 255\n");
            bytes.extend(std::iter::repeat(v).take(16));
        }
        std::fs::write(&path, bytes).unwrap();
        let spec = SourceSpec {
            path,
            kind: SourceKind::RawVideo,
            stride: 2,
            frame_interval_ms: 40,
        };
        let got: Vec<(u64, u8)> = open_source(&spec)
            .unwrap()
            .map(|f| {
                let f = f.unwrap();
                (f.index(), f.pixels()[0])
            })
            .collect();
        assert_eq!(got, vec![(0, 0), (2, 2), (4, 4)]);
    }
}
