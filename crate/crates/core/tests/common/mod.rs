//! Scripted sessions shared by the integration and acceptance tests.
#![allow(dead_code)]

use kifu_core::engine::{run_session_on, SessionConfig, SessionControl, SessionOutcome};
use kifu_core::game::{Color, SgfGame};
use kifu_core::geometry::LatticePoint;
use kifu_core::source::{FrameSource, SourceSpec};
use kifu_core::synth::{game_record, script_session, CameraScript};

pub fn config(n: usize) -> SessionConfig {
    SessionConfig::new(n, SourceSpec::image_sequence("unused"))
}

pub fn source(game: &SgfGame, script: &CameraScript, seed: u64) -> FrameSource {
    let s = script_session(game, script, seed).expect("legal script");
    FrameSource::from_decoder(Box::new(s), 1, 40).expect("source")
}

pub fn run(game: &SgfGame, script: &CameraScript, seed: u64) -> SessionOutcome {
    run_with(config(game.meta.size), game, script, seed, |_| {})
}

pub fn run_with(
    cfg: SessionConfig,
    game: &SgfGame,
    script: &CameraScript,
    seed: u64,
    on_start: impl FnOnce(SessionControl),
) -> SessionOutcome {
    run_session_on(cfg, source(game, script, seed), on_start).expect("session runs")
}

fn pt(c: usize, r: usize) -> LatticePoint {
    LatticePoint::new(c, r)
}

/// Move number of White's capture of three stones in [`capture_game`].
pub const KILL: usize = 10;
/// The black stone whose removal is delayed after the capture.
pub const LATE_STONE: (usize, usize) = (2, 0);

/// White captures three black stones on the top edge of a 9×9 board with move
/// [`KILL`]. With `snap_back`, Black's reply retakes at once on a just-emptied point,
/// capturing the single white stone; otherwise Black plays elsewhere.
pub fn capture_game(snap_back: bool) -> SgfGame {
    use Color::{Black as B, White as W};
    let mut moves = vec![
        (B, pt(0, 0)),
        (W, pt(0, 1)),
        (B, pt(1, 0)),
        (W, pt(1, 1)),
        (B, pt(2, 0)),
        (W, pt(2, 1)),
        (B, pt(4, 0)),
        (W, pt(6, 6)),
        (B, pt(3, 1)),
        (W, pt(3, 0)),
    ];
    if snap_back {
        moves.push((B, pt(LATE_STONE.0, LATE_STONE.1)));
    } else {
        moves.push((B, pt(4, 4)));
    }
    moves.extend([(W, pt(6, 2)), (B, pt(2, 6)), (W, pt(5, 5))]);
    game_record(9, &moves)
}
