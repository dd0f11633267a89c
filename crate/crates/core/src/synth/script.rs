use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::render::{default_pose, render_frame, Lighting, Occluder, SceneTruth};
use crate::frame::Frame;
use crate::game::{Board, Color, GameState, SgfGame};
use crate::geometry::{GridModel, Homography, LatticePoint, Point2};
use crate::source::{SourceError, VideoDecoder};

type P = Point2<f64>;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("illegal script: {0}")]
    IllegalScript(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScriptEvent {
    /// Translate the board by `(dx, dy)` frame pixels from `frame` on.
    Shift { frame: u64, dx: f64, dy: f64 },
    /// Rotate the board about its centre by `degrees` from `frame` on.
    Rotate { frame: u64, degrees: f64 },
    /// Cover a polygon for frames `frame..until`.
    Occlude { frame: u64, until: u64, polygon: Vec<P> },
    Lighting { frame: u64, lighting: Lighting },
    /// Leave the prisoners of move `mv` (1-based) on the board for `frames` extra
    /// frames; `points` restricts the delay to some of them.
    DelayRemoval {
        #[serde(rename = "move")]
        mv: usize,
        frames: u64,
        #[serde(default)]
        points: Vec<LatticePoint>,
    },
}

impl ScriptEvent {
    fn frame(&self) -> Option<u64> {
        match self {
            ScriptEvent::Shift { frame, .. }
            | ScriptEvent::Rotate { frame, .. }
            | ScriptEvent::Occlude { frame, .. }
            | ScriptEvent::Lighting { frame, .. } => Some(*frame),
            ScriptEvent::DelayRemoval { .. } => None,
        }
    }
}

fn default_dwell() -> u64 {
    4
}

fn default_lead() -> u64 {
    6
}

fn default_noise() -> f64 {
    2.0
}

fn default_true() -> bool {
    true
}

/// Camera, pacing and disturbances for a scripted game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraScript {
    pub width: u32,
    pub height: u32,
    /// Outer-line corners TL, TR, BR, BL; a default pose is used when absent.
    #[serde(default)]
    pub corners: Option<[P; 4]>,
    /// Frames each move stays the newest one.
    #[serde(default = "default_dwell")]
    pub dwell: u64,
    /// Empty-board frames before the first move.
    #[serde(default = "default_lead")]
    pub lead_in: u64,
    /// Frames after the last move.
    #[serde(default = "default_lead")]
    pub tail: u64,
    /// Per-move dwell overrides, keyed by move number.
    #[serde(default)]
    pub pace: BTreeMap<usize, u64>,
    #[serde(default)]
    pub lighting: Lighting,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    #[serde(default = "default_true")]
    pub shadows: bool,
    #[serde(default)]
    pub events: Vec<ScriptEvent>,
}

impl CameraScript {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            corners: None,
            dwell: default_dwell(),
            lead_in: default_lead(),
            tail: default_lead(),
            pace: BTreeMap::new(),
            lighting: Lighting::Warm,
            noise_sigma: default_noise(),
            shadows: true,
            events: Vec::new(),
        }
    }
}

/// Ground truth for one emitted frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub frame: u64,
    pub corners: [P; 4],
    /// Moves of the game record visible so far.
    pub moves_played: usize,
    /// Physical board, rows of `.`/`B`/`W`.
    pub board: Vec<String>,
    /// Prisoners still lying on the board.
    pub phantoms: Vec<LatticePoint>,
    pub occluded: bool,
    pub lighting: Lighting,
}

/// A rendered-on-demand frame stream with its truth log.
pub struct ScriptedSession {
    scenes: Vec<SceneTruth>,
    truth: Vec<FrameTruth>,
    width: u32,
    height: u32,
    next: usize,
}

impl ScriptedSession {
    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    pub fn truth(&self) -> &[FrameTruth] {
        &self.truth
    }

    pub fn scene(&self, i: usize) -> &SceneTruth {
        &self.scenes[i]
    }

    pub fn render(&self, i: usize) -> Frame {
        render_frame(&self.scenes[i], self.width, self.height)
    }

    pub fn frames(&self) -> impl Iterator<Item = Frame> + '_ {
        (0..self.len()).map(|i| self.render(i))
    }
}

impl VideoDecoder for ScriptedSession {
    fn next_frame(&mut self) -> Result<Option<Frame>, SourceError> {
        if self.next >= self.scenes.len() {
            return Ok(None);
        }
        self.next += 1;
        Ok(Some(self.render(self.next - 1)))
    }

    fn skip_frame(&mut self) -> Result<bool, SourceError> {
        if self.next >= self.scenes.len() {
            return Ok(false);
        }
        self.next += 1;
        Ok(true)
    }
}

/// Expands a game record and a camera script into a frame stream.
///
/// Move `k` appears on frame `lead_in + sum of earlier dwells`; its prisoners vanish on
/// the same frame unless a `delay-removal` event keeps them.
pub fn script_session(game: &SgfGame, script: &CameraScript, seed: u64) -> Result<ScriptedSession, SynthError> {
    let n = game.meta.size;
    let bad = |m: String| SynthError::IllegalScript(m);
    let mut last_frame = 0;
    for e in &script.events {
        if let Some(f) = e.frame() {
            if f < last_frame {
                return Err(bad("events are not sorted by frame".into()));
            }
            last_frame = f;
        }
    }
    let base = match script.corners {
        Some(c) => GridModel::from_corners(n, c).map_err(|e| bad(format!("bad corners: {e}")))?,
        None => default_pose(n, script.width, script.height),
    };

    // replay the record to get the logical board after each move and the captures
    let mut state = GameState::new(n);
    for (color, p) in &game.setup {
        if state.to_move() != *color {
            return Err(bad("setup stones are not supported beyond alternating play".into()));
        }
        state
            .on_detection(*p, *color, 0)
            .map_err(|e| bad(format!("setup stone: {e}")))?;
    }
    let offset = game.setup.len();
    let mut boards = vec![state.board().clone()];
    let mut starts = Vec::new();
    let mut t = script.lead_in;
    for (i, mv) in game.moves.iter().enumerate() {
        let Some(p) = mv.point else {
            return Err(bad(format!("move {} is a pass", i + 1)));
        };
        state
            .on_detection(p, mv.color, t)
            .map_err(|e| bad(format!("move {}: {e}", i + 1)))?;
        boards.push(state.board().clone());
        starts.push(t);
        t += script.pace.get(&(i + 1)).copied().unwrap_or(script.dwell);
    }
    let total = t + script.tail;
    let records = state.moves().to_vec();

    // prisoners kept visible past their capture: (from, until, point, colour)
    let mut delayed: Vec<(u64, u64, LatticePoint, Color)> = Vec::new();
    for e in &script.events {
        if let ScriptEvent::DelayRemoval { mv, frames, points } = e {
            let rec = records
                .get(offset + mv.wrapping_sub(1))
                .ok_or_else(|| bad(format!("delay-removal names missing move {mv}")))?;
            for q in &rec.captured {
                if points.is_empty() || points.contains(q) {
                    delayed.push((starts[mv - 1], starts[mv - 1] + frames, *q, rec.color.opposite()));
                }
            }
        }
    }

    let mut scenes = Vec::with_capacity(total as usize);
    let mut truth = Vec::with_capacity(total as usize);
    let mut grid = base;
    let mut lighting = script.lighting;
    for f in 0..total {
        for e in &script.events {
            match e {
                ScriptEvent::Shift { frame, dx, dy } if *frame == f => {
                    grid = grid.translated(*dx, *dy).map_err(|e| bad(e.to_string()))?;
                }
                ScriptEvent::Rotate { frame, degrees } if *frame == f => {
                    let c = grid.lattice_f(P::new(0.5 * (n - 1) as f64, 0.5 * (n - 1) as f64));
                    grid = grid
                        .transformed(&Homography::rotation_about(c, *degrees))
                        .map_err(|e| bad(e.to_string()))?;
                }
                ScriptEvent::Lighting { frame, lighting: l } if *frame == f => lighting = *l,
                _ => {}
            }
        }
        let played = starts.iter().take_while(|&&s| s <= f).count();
        let mut board: Board = boards[played].clone();
        let mut phantoms = Vec::new();
        for &(from, until, q, c) in &delayed {
            if from <= f && f < until && board.get(q).is_none() {
                // the point may have been played on again since
                let replayed = starts
                    .iter()
                    .enumerate()
                    .any(|(k, &s)| s <= f && s > from && records[offset + k].point == q);
                if !replayed {
                    board.set(q, Some(c));
                    phantoms.push(q);
                }
            }
        }
        let occluders: Vec<Occluder> = script
            .events
            .iter()
            .filter_map(|e| match e {
                ScriptEvent::Occlude { frame, until, polygon } if *frame <= f && f < *until => Some(Occluder {
                    polygon: polygon.clone(),
                }),
                _ => None,
            })
            .collect();
        truth.push(FrameTruth {
            frame: f,
            corners: grid.corners(),
            moves_played: played,
            board: board.rows(),
            phantoms,
            occluded: !occluders.is_empty(),
            lighting,
        });
        scenes.push(SceneTruth {
            grid: grid.clone(),
            board,
            lighting,
            noise_sigma: script.noise_sigma,
            occluders,
            shadows: script.shadows,
            texture_seed: seed ^ 0x5eed,
            noise_seed: seed,
            frame: f,
        });
    }
    Ok(ScriptedSession {
        scenes,
        truth,
        width: script.width,
        height: script.height,
        next: 0,
    })
}

/// A random legal game of `moves` moves, never filling a single-point eye of the mover.
pub fn random_game(n: usize, moves: usize, seed: u64) -> Vec<(Color, LatticePoint)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = GameState::new(n);
    let mut out = Vec::with_capacity(moves);
    let mut points: Vec<LatticePoint> = state.board().points().collect();
    while out.len() < moves {
        let color = state.to_move();
        points.shuffle(&mut rng);
        let pick = points.iter().copied().find(|&p| {
            let own_eye = p
                .neighbours(n)
                .all(|q| state.board().get(q) == Some(color));
            !own_eye && state.check(p, color).is_ok()
        });
        let Some(p) = pick else { break };
        state.on_detection(p, color, 0).expect("checked move");
        out.push((color, p));
        let _ = rng.gen::<u8>();
    }
    out
}

/// Wraps a move list as a game record.
pub fn game_record(n: usize, moves: &[(Color, LatticePoint)]) -> SgfGame {
    SgfGame {
        meta: crate::game::GameMeta::new(n),
        moves: moves
            .iter()
            .map(|&(color, p)| crate::game::SgfMove {
                color,
                point: Some(p),
                comment: None,
            })
            .collect(),
        setup: Vec::new(),
    }
}
