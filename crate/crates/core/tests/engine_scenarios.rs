mod common;

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

use common::{capture_game, config, run, run_with, KILL, LATE_STONE};
use kifu_core::engine::{run_session_on, EngineError, ServerEvent};
use kifu_core::frame::{Colorspace, Frame};
use kifu_core::game::parse_sgf;
use kifu_core::geometry::LatticePoint;
use kifu_core::source::FrameSource;
use kifu_core::synth::{game_record, random_game, CameraScript, ScriptEvent};

#[test]
fn short_game_is_transcribed_exactly_and_reproducibly() {
    let game = game_record(9, &random_game(9, 24, 21));
    let script = CameraScript::new(640, 480);
    let a = run(&game, &script, 3);
    let b = run(&game, &script, 3);
    assert_eq!(parse_sgf(&a.sgf).unwrap().moves, game.moves);
    assert!(a.report.warnings.is_empty(), "{:?}", a.report.warnings);
    assert_eq!(a.report.detections, 24);
    assert_eq!(a.sgf, b.sgf);
    assert_eq!(a.log, b.log);
}

#[test]
fn blank_video_fails_initialisation() {
    let frames: Vec<Frame> = (0..30).map(|_| Frame::filled(320, 240, Colorspace::Rgb, 120)).collect();
    let mut cfg = config(9);
    cfg.engine.init_frames = 20;
    let source = FrameSource::from_frames(frames, 1).unwrap();
    match run_session_on(cfg, source, |_| {}) {
        Err(EngineError::InitFailed { frames }) => assert_eq!(frames, 20),
        other => panic!("expected InitFailed, got {:?}", other.map(|o| o.report)),
    }
}

#[test]
fn shifted_board_is_relocated_once() {
    let n = 9;
    let game = game_record(n, &random_game(n, 44, 8));
    let mut script = CameraScript::new(640, 480);
    let at = script.lead_in + 40 * script.dwell + 1;
    let g = kifu_core::synth::default_pose(n, 640, 480);
    let dx = g.lattice(n - 1, n - 1).x - g.lattice(0, n - 1).x;
    script.events.push(ScriptEvent::Shift {
        frame: at,
        dx: dx / 3.0,
        dy: 0.0,
    });
    let out = run(&game, &script, 4);
    assert_eq!(parse_sgf(&out.sgf).unwrap().moves, game.moves, "{}", out.log);
    assert_eq!(out.report.grid_corrections.len(), 1, "{:?}", out.report.grid_corrections);
    let c = &out.report.grid_corrections[0];
    assert!(c.frame <= at + 6, "corrected on frame {} after a shift on {at}", c.frame);
}

#[test]
fn hand_over_the_board_adds_no_moves() {
    let n = 9;
    let game = game_record(n, &random_game(n, 12, 30));
    let mut script = CameraScript::new(640, 480);
    let g = kifu_core::synth::default_pose(n, 640, 480);
    let target = g.lattice(4, 4);
    let arm = kifu_core::synth::Occluder::arm_to(target, 60.0, 480.0);
    let from = script.lead_in + 6 * script.dwell + 1;
    script.events.push(ScriptEvent::Occlude {
        frame: from,
        until: from + 2,
        polygon: arm.polygon,
    });
    let out = run(&game, &script, 5);
    assert_eq!(parse_sgf(&out.sgf).unwrap().moves, game.moves, "{}", out.log);
}

#[test]
fn session_started_mid_game_inserts_the_missing_stones() {
    let n = 9;
    let game = game_record(n, &random_game(n, 20, 12));
    let mut script = CameraScript::new(640, 480);
    script.pace.insert(12, 20);
    // join two frames after move 12 went down
    let skip = (script.lead_in + 11 * script.dwell + 2) as usize;
    let frames: Vec<Frame> = kifu_core::synth::script_session(&game, &script, 6)
        .unwrap()
        .frames()
        .skip(skip)
        .collect();
    let out = run_session_on(config(n), FrameSource::from_frames(frames, 1).unwrap(), |_| {}).unwrap();
    assert_eq!(out.report.late_insertions, 12, "{}", out.log);
    let played: Vec<_> = parse_sgf(&out.sgf).unwrap().moves;
    assert_eq!(played.len(), 20);
    assert_eq!(played[12..], game.moves[12..]);
    let mut early: Vec<_> = played[..12].iter().map(|m| (m.point, m.color)).collect();
    let mut truth: Vec<_> = game.moves[..12].iter().map(|m| (m.point, m.color)).collect();
    early.sort();
    truth.sort();
    assert_eq!(early, truth);
}

#[test]
fn snap_back_stays_in_the_move_list() {
    let game = capture_game(true);
    let mut script = CameraScript::new(640, 480);
    script.events.push(ScriptEvent::DelayRemoval {
        mv: KILL,
        frames: 8,
        points: vec![LatticePoint::new(LATE_STONE.0, LATE_STONE.1)],
    });
    let out = run(&game, &script, 7);
    assert_eq!(parse_sgf(&out.sgf).unwrap().moves, game.moves, "{}", out.log);
    assert_eq!(out.report.false_positive_deletions, 0);
}

#[test]
fn unremoved_prisoner_is_deleted_as_the_last_move() {
    let game = capture_game(false);
    let mut script = CameraScript::new(640, 480);
    script.pace.insert(KILL, 16);
    script.events.push(ScriptEvent::DelayRemoval {
        mv: KILL,
        frames: 6,
        points: vec![LatticePoint::new(LATE_STONE.0, LATE_STONE.1)],
    });
    let out = run(&game, &script, 7);
    assert_eq!(parse_sgf(&out.sgf).unwrap().moves, game.moves, "{}", out.log);
    assert_eq!(out.report.false_positive_deletions, 1, "{}", out.log);
}

fn read_event(r: &mut impl BufRead) -> ServerEvent {
    let mut line = String::new();
    r.read_line(&mut line).unwrap();
    serde_json::from_str(line.trim()).unwrap_or_else(|e| panic!("{e}: {line:?}"))
}

#[test]
fn operator_endpoint_round_trip() {
    let n = 9;
    let game = game_record(n, &random_game(n, 16, 40));
    let script = CameraScript::new(640, 480);
    let mut cfg = config(n);
    cfg.serve = Some("127.0.0.1:0".into());
    let (tx, rx) = std::sync::mpsc::channel();
    let out = run_with(cfg, &game, &script, 8, |control| {
        let addr = control.operator.expect("endpoint started");
        std::thread::spawn(move || {
            let stream = TcpStream::connect(addr).unwrap();
            stream.set_read_timeout(Some(Duration::from_secs(60))).unwrap();
            let mut w = stream.try_clone().unwrap();
            let mut r = BufReader::new(stream);
            let mut seen = Vec::new();
            let first = read_event(&mut r);
            assert!(matches!(first, ServerEvent::Snapshot { .. }), "{first:?}");
            seen.push(first);
            loop {
                let e = read_event(&mut r);
                let appended = matches!(&e, ServerEvent::Move { .. });
                seen.push(e);
                if appended {
                    break;
                }
            }
            w.write_all(b"{\"type\":\"command\",\"kind\":\"delete-last-move\",\"id\":7}\n").unwrap();
            w.write_all(b"this is not json\n").unwrap();
            let mut acked = false;
            let mut errored = false;
            while !(acked && errored) {
                let e = read_event(&mut r);
                match &e {
                    ServerEvent::Ack { id, kind, .. } => {
                        assert_eq!((*id, kind.as_str()), (Some(7), "delete-last-move"));
                        acked = true;
                    }
                    ServerEvent::Error { id, .. } => {
                        assert_eq!(*id, None);
                        errored = true;
                    }
                    _ => {}
                }
                seen.push(e);
            }
            tx.send(seen).unwrap();
        });
    });
    let seen = rx.recv_timeout(Duration::from_secs(5)).expect("client finished");
    let deleted = seen.iter().any(|e| {
        matches!(
            e,
            ServerEvent::Move {
                change: kifu_core::engine::MoveChange::Delete { .. },
                ..
            }
        )
    });
    assert!(deleted, "{seen:?}");
    assert!(out.report.operator_commands >= 1);
}

