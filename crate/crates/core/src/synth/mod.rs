//! Synthetic goban renderer and scripted sessions used as ground truth.

mod render;
mod script;

pub use render::{default_pose, random_pose, render_frame, Lighting, Occluder, SceneTruth, STONE_RADIUS};
pub use script::{game_record, random_game, script_session, CameraScript, FrameTruth, ScriptEvent, ScriptedSession, SynthError};
