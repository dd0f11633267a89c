use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::detect::DetectParams;
use crate::frame::CANNY_DEFAULT;
use crate::game::GameMeta;
use crate::geometry::BOARD_SIZES;
use crate::grid_track::{Gates, RelocateParams};
use crate::source::{SourceKind, SourceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UsmConfig {
    pub sigma: f32,
    pub amount: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CannyConfig {
    pub low: f32,
    pub high: f32,
}

impl Default for CannyConfig {
    fn default() -> Self {
        Self {
            low: CANNY_DEFAULT.0,
            high: CANNY_DEFAULT.1,
        }
    }
}

/// Per-frame filtering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub usm: Option<UsmConfig>,
    pub canny: CannyConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelocationConfig {
    pub min_stones: usize,
    pub rect_size: u32,
}

impl Default for RelocationConfig {
    fn default() -> Self {
        let r = RelocateParams::default();
        Self {
            min_stones: r.min_stones,
            rect_size: r.rect_size,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomConfig {
    pub seed: u64,
}

/// Grid tracking and the slow checkers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackConfig {
    pub gate: Gates,
    pub relocation: RelocationConfig,
    pub random: RandomConfig,
    /// The grid checker looks at every k-th snapshot while tracking is healthy, and at
    /// every snapshot otherwise.
    pub check_every: u32,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            gate: Gates::default(),
            relocation: RelocationConfig::default(),
            random: RandomConfig::default(),
            check_every: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectGates {
    pub main: u32,
    #[serde(rename = "async")]
    pub scan: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefsConfig {
    pub halflife: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    pub margin: f64,
    pub gate: DetectGates,
    pub refs: RefsConfig,
}

impl Default for DetectConfig {
    fn default() -> Self {
        let d = DetectParams::default();
        Self {
            margin: d.margin,
            gate: DetectGates {
                main: d.gate_main,
                scan: d.gate_async,
            },
            refs: RefsConfig { halflife: d.halflife },
        }
    }
}

impl DetectConfig {
    pub fn params(&self) -> DetectParams {
        DetectParams {
            margin: self.margin,
            gate_main: self.gate.main,
            gate_async: self.gate.scan,
            halflife: self.refs.halflife,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerMode {
    /// Supervisors run on the main thread a fixed number of snapshots behind; runs are
    /// reproducible.
    #[default]
    FixedLag,
    /// Supervisors run on worker threads and skip to the newest snapshot when behind.
    Threaded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub mode: SchedulerMode,
    /// Snapshots the supervisors trail the main loop by in fixed-lag mode.
    pub lag: u32,
    /// Frames allowed for the initial grid location.
    pub init_frames: u32,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            mode: SchedulerMode::FixedLag,
            lag: 1,
            init_frames: 100,
        }
    }
}

/// Output files; unset paths are not written.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub sgf: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl OutputConfig {
    /// `GAME.sgf` plus `GAME.log` and `GAME.report.json` beside it.
    pub fn beside(sgf: &Path) -> Self {
        Self {
            sgf: Some(sgf.to_path_buf()),
            log: Some(sgf.with_extension("log")),
            report: Some(sgf.with_extension("report.json")),
        }
    }
}

/// Everything a session needs. Loads from TOML; every table is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub size: usize,
    pub source: SourceSpec,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub track: TrackConfig,
    #[serde(default)]
    pub detect: DetectConfig,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub meta: GameMeta,
    /// `host:port` of the operator endpoint.
    #[serde(default)]
    pub serve: Option<String>,
}

impl SessionConfig {
    pub fn new(size: usize, source: SourceSpec) -> Self {
        Self {
            size,
            source,
            filter: FilterConfig::default(),
            track: TrackConfig::default(),
            detect: DetectConfig::default(),
            engine: EngineConfig::default(),
            output: OutputConfig::default(),
            meta: GameMeta::new(size),
            serve: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, EngineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| EngineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path).map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn relocate_params(&self) -> RelocateParams {
        RelocateParams {
            rect_size: self.track.relocation.rect_size,
            min_stones: self.track.relocation.min_stones,
            seed: self.track.random.seed,
            canny_low: self.filter.canny.low,
            canny_high: self.filter.canny.high,
        }
    }

    pub fn canny(&self) -> (f32, f32) {
        (self.filter.canny.low, self.filter.canny.high)
    }

    /// Checks every threshold against its documented range.
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Config(m));
        if !BOARD_SIZES.contains(&self.size) {
            return bad(format!("board size {} is not one of {BOARD_SIZES:?}", self.size));
        }
        if self.meta.size != self.size {
            return bad(format!("meta.size {} differs from size {}", self.meta.size, self.size));
        }
        if self.source.stride == 0 {
            return bad("source.stride must be >= 1".into());
        }
        if let Some(u) = self.filter.usm {
            if !(u.sigma > 0.0 && u.sigma <= 20.0 && (0.0..=5.0).contains(&u.amount)) {
                return bad("filter.usm needs 0 < sigma <= 20 and 0 <= amount <= 5".into());
            }
        }
        let c = self.filter.canny;
        if !(0.0 <= c.low && c.low <= c.high) {
            return bad("filter.canny needs 0 <= low <= high".into());
        }
        let g = self.track.gate;
        if !(1..=10).contains(&g.low_occupancy) || !(1..=10).contains(&g.high_occupancy) {
            return bad("track.gate values must lie in 1..=10".into());
        }
        if self.track.relocation.min_stones < 4 {
            return bad("track.relocation.min_stones must be >= 4".into());
        }
        if !(100..=2000).contains(&self.track.relocation.rect_size) {
            return bad("track.relocation.rect_size must lie in 100..=2000".into());
        }
        if self.track.check_every == 0 {
            return bad("track.check_every must be >= 1".into());
        }
        let d = &self.detect;
        if !(d.margin > 0.0 && d.margin < 1.0) {
            return bad("detect.margin must lie in (0, 1)".into());
        }
        if !(1..=30).contains(&d.gate.main) || !(1..=30).contains(&d.gate.scan) {
            return bad("detect.gate values must lie in 1..=30".into());
        }
        if !(d.refs.halflife >= 1.0) {
            return bad("detect.refs.halflife must be >= 1".into());
        }
        if self.engine.init_frames == 0 {
            return bad("engine.init_frames must be >= 1".into());
        }
        if self.engine.lag > 100 {
            return bad("engine.lag must be <= 100".into());
        }
        Ok(())
    }
}

impl std::str::FromStr for UsmConfig {
    type Err = String;

    /// `SIGMA,AMOUNT`
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(',').ok_or("expected SIGMA,AMOUNT")?;
        let sigma = a.trim().parse::<f32>().map_err(|e| e.to_string())?;
        let amount = b.trim().parse::<f32>().map_err(|e| e.to_string())?;
        Ok(Self { sigma, amount })
    }
}

/// Source kinds as written on the command line and in config files.
pub fn parse_kind(s: &str) -> Result<SourceKind, EngineError> {
    s.parse().map_err(|e: crate::source::SourceError| EngineError::Config(e.to_string()))
}
