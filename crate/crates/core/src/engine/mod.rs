//! The transcription session: the per-frame main loop (filter, fast tracking, main
//! detection, game state), the supervisors that check the grid and scan for missed or
//! phantom stones, message application at frame boundaries, outputs and the operator
//! endpoint.

mod config;
pub mod operator;
mod supervisor;

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    parse_kind, CannyConfig, DetectConfig, DetectGates, EngineConfig, FilterConfig, OutputConfig, RandomConfig, RefsConfig,
    RelocationConfig, SchedulerMode, SessionConfig, TrackConfig, UsmConfig,
};
pub use operator::{GridStatus, MoveChange, OperatorCommand, OperatorServer, QueuedCommand, ServerEvent};
pub use supervisor::{GridChecker, MessagePayload, Scanner, Scheduler, Snapshot, Supervisor, SupervisorMessage};

use crate::detect::{
    classify_point, main_step, DetectParams, DetectionFeatures, LateDetection, MainEvidence, PointClass, RectView,
    ReferenceStats, Suspension,
};
use crate::frame::{unsharp_mask, Frame};
use crate::game::{Color, GameError, GameState, Transition};
use crate::geometry::{GridModel, LatticePoint};
use crate::grid_init::locate_grid;
use crate::grid_track::{accept_grid, Decision, FastTracker, GridProposal, ProposalSource, STABLE_PX};
use crate::source::{open_source, FrameSource, SourceError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("no grid found in the first {frames} frames")]
    InitFailed { frames: u64 },
    #[error("session aborted by the operator")]
    Aborted,
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("writing {path}: {reason}")]
    Output { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCorrection {
    pub frame: u64,
    pub origin: u64,
    pub source: ProposalSource,
    /// Largest corner displacement of the correction, in frame pixels.
    pub shift_px: f64,
}

/// Summary written at the end of a session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub frames_processed: u64,
    /// Frame on which the grid was first located.
    pub init_frame: Option<u64>,
    pub moves: usize,
    /// Moves appended by the main detector.
    pub detections: u64,
    pub late_insertions: u64,
    pub replacements: u64,
    pub false_positive_deletions: u64,
    /// Operator-facing warnings, in order.
    pub warnings: Vec<String>,
    pub grid_corrections: Vec<GridCorrection>,
    pub tracking_losses: u64,
    /// Frames on which the detector distrusted the image.
    pub suspended_frames: u64,
    /// Supervisor messages dropped as invalid or stale.
    pub dropped_messages: u64,
    pub operator_commands: u64,
}

/// Everything a finished session produced.
#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub report: SessionReport,
    pub sgf: String,
    pub log: String,
    pub game: GameState,
    pub grid: Option<GridModel>,
}

/// Handles for steering a running session from other threads.
#[derive(Debug, Clone)]
pub struct SessionControl {
    pub commands: Sender<QueuedCommand>,
    pub abort: Arc<AtomicBool>,
    /// Where the operator endpoint listens, when one was started.
    pub operator: Option<std::net::SocketAddr>,
}

/// Points that look like bare board on the first located frame: the Empty class seed.
/// Anything far darker or brighter than the median, or with a stone-like outline, is
/// left out, so a session may start on a game in progress.
fn empty_seed(features: &[DetectionFeatures]) -> Vec<DetectionFeatures> {
    let mut lumas: Vec<f64> = features.iter().map(|x| x.luma_mean).collect();
    lumas.sort_by(f64::total_cmp);
    let med = lumas[lumas.len() / 2];
    let (lo, hi) = (0.6 * med, med + 0.4 * (255.0 - med));
    let mut edges: Vec<f64> = features.iter().map(|x| x.edge_density).collect();
    edges.sort_by(f64::total_cmp);
    let edge_cap = 2.0 * edges[edges.len() / 2] + 0.05;
    features
        .iter()
        .copied()
        .filter(|x| (lo..=hi).contains(&x.luma_mean) && x.edge_density <= edge_cap)
        .collect()
}

/// The main loop's state. Feed frames with [`Session::process`] and collect the results
/// with [`Session::finish`]; [`run_session`] does both for a configured source.
pub struct Session {
    cfg: SessionConfig,
    params: DetectParams,
    game: GameState,
    grid: Option<GridModel>,
    /// Set until the first grid is found; re-initialisation never fails the session.
    initial: bool,
    searching_since: u64,
    tracker: FastTracker,
    refs: Option<ReferenceStats>,
    evidence: MainEvidence,
    scheduler: Scheduler,
    commands: Receiver<QueuedCommand>,
    control: SessionControl,
    hub: Option<Arc<operator::Hub>>,
    paused: bool,
    status: GridStatus,
    frame_index: u64,
    last_frame: Option<Arc<Frame>>,
    report: SessionReport,
}

impl Session {
    pub fn new(cfg: SessionConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        let params = cfg.detect.params();
        let supervisors: Vec<Box<dyn Supervisor>> = vec![
            Box::new(GridChecker::new(cfg.size, cfg.track.check_every, cfg.relocate_params())),
            Box::new(Scanner::new(params)),
        ];
        let scheduler = match cfg.engine.mode {
            SchedulerMode::FixedLag => Scheduler::fixed_lag(cfg.engine.lag as usize, supervisors),
            SchedulerMode::Threaded => Scheduler::threaded(supervisors),
        };
        let (tx, rx) = channel();
        Ok(Self {
            params,
            game: GameState::new(cfg.size),
            grid: None,
            initial: true,
            searching_since: 0,
            tracker: FastTracker::new(),
            refs: None,
            evidence: MainEvidence::new(),
            scheduler,
            commands: rx,
            control: SessionControl {
                commands: tx,
                abort: Arc::new(AtomicBool::new(false)),
                operator: None,
            },
            hub: None,
            paused: false,
            status: GridStatus::Searching,
            frame_index: 0,
            last_frame: None,
            report: SessionReport::default(),
            cfg,
        })
    }

    pub fn control(&self) -> SessionControl {
        self.control.clone()
    }

    /// Mirrors state and events to an operator hub.
    pub fn attach_hub(&mut self, hub: Arc<operator::Hub>) {
        self.hub = Some(hub);
        self.publish(None);
    }

    pub fn game(&self) -> &GameState {
        &self.game
    }

    pub fn grid(&self) -> Option<&GridModel> {
        self.grid.as_ref()
    }

    pub fn report(&self) -> &SessionReport {
        &self.report
    }

    pub fn status(&self) -> GridStatus {
        self.status
    }

    pub fn snapshot_event(&self) -> ServerEvent {
        ServerEvent::Snapshot {
            frame: self.frame_index,
            size: self.cfg.size,
            board: self.game.board().rows(),
            to_move: self.game.to_move(),
            moves: self.game.moves().to_vec(),
            grid: self.grid.as_ref().map(|g| g.corners()),
            status: self.status,
            paused: self.paused,
        }
    }

    fn publish(&self, event: Option<ServerEvent>) {
        if let Some(h) = &self.hub {
            h.publish(self.snapshot_event(), event);
        }
    }

    fn warn(&mut self, message: String) {
        log::warn!("frame {}: {message}", self.frame_index);
        self.report.warnings.push(message.clone());
        self.publish(Some(ServerEvent::Warning {
            frame: self.frame_index,
            message,
        }));
    }

    fn set_status(&mut self, status: GridStatus) {
        if status != self.status {
            self.status = status;
            self.publish(Some(ServerEvent::Grid {
                frame: self.frame_index,
                corners: self.grid.as_ref().map(|g| g.corners()),
                status,
            }));
        }
    }

    fn move_event(&self, change: MoveChange) {
        self.publish(Some(ServerEvent::Move {
            frame: self.frame_index,
            change,
            board: self.game.board().rows(),
            to_move: self.game.to_move(),
        }));
    }

    /// Publishes the move-list change a transition made.
    fn announce(&self, t: &Transition) {
        let moves = self.game.moves();
        let record = |n: usize| moves[n - 1].clone();
        let change = match t {
            Transition::Appended { number } => MoveChange::Append { record: record(*number) },
            Transition::Replaced { number, .. } | Transition::Confirmed { number } => MoveChange::Update {
                records: vec![record(*number)],
            },
            Transition::Swapped { a, b } => MoveChange::Update {
                records: vec![record(*a), record(*b)],
            },
            Transition::Deleted { number, .. } => MoveChange::Delete { number: *number },
            Transition::Warning { .. } => return,
        };
        self.move_event(change);
    }

    /// Handles one frame: the boundary (queued messages and commands), then filtering,
    /// tracking, detection, and a snapshot for the supervisors.
    pub fn process(&mut self, frame: Frame) -> Result<(), EngineError> {
        if self.control.abort.load(Ordering::SeqCst) {
            return Err(EngineError::Aborted);
        }
        self.frame_index = frame.index();
        let messages = self.scheduler.drain();
        self.apply_messages(messages);
        self.apply_commands();
        self.report.frames_processed += 1;
        if self.paused {
            return Ok(());
        }
        let frame = Arc::new(match self.cfg.filter.usm {
            Some(u) if u.amount > 0.0 => unsharp_mask(&frame, u.sigma, u.amount),
            _ => frame,
        });
        self.last_frame = Some(frame.clone());

        let Some(grid) = self.grid.clone() else {
            return self.initialise(&frame);
        };
        let grid = match self.tracker.track(&grid, &frame) {
            Ok(g) => g,
            Err(e) => {
                if self.status != GridStatus::Lost {
                    self.report.tracking_losses += 1;
                    log::info!("frame {}: {e}", self.frame_index);
                }
                self.set_status(GridStatus::Lost);
                self.evidence.clear();
                self.scheduler.publish(self.snapshot(&frame, &grid, None));
                return Ok(());
            }
        };
        self.grid = Some(grid.clone());

        let refs = self.refs.as_ref().expect("references exist once a grid does");
        let view = RectView::with_canny(&frame, &grid, self.cfg.canny());
        let features = view.all_features();
        let board = self.game.board().clone();
        let rep = main_step(&features, &board, refs, &mut self.evidence, &self.params);
        match rep.suspended {
            Some(Suspension::Contradicted) => {
                self.report.suspended_frames += 1;
                self.set_status(GridStatus::Lost);
                self.scheduler.publish(self.snapshot(&frame, &grid, None));
                return Ok(());
            }
            Some(Suspension::ManyNewStones) => {
                // the grid agrees with the board; the scanner sorts out the newcomers
                self.report.suspended_frames += 1;
                self.set_status(GridStatus::Locked);
                let snap = self.snapshot(&frame, &grid, Some(Arc::new((view, features))));
                self.scheduler.publish(snap);
                return Ok(());
            }
            None => {}
        }
        self.set_status(GridStatus::Locked);
        self.refs
            .as_mut()
            .expect("references")
            .learn(&board, &features, &rep.classes);
        self.apply_detections(rep.detections, &rep.vanished);
        let snap = self.snapshot(&frame, &grid, Some(Arc::new((view, features))));
        self.scheduler.publish(snap);
        Ok(())
    }

    fn snapshot(&self, frame: &Arc<Frame>, grid: &GridModel, view: Option<Arc<(RectView, Vec<DetectionFeatures>)>>) -> Snapshot {
        Snapshot {
            frame_index: self.frame_index,
            frame: frame.clone(),
            grid: grid.clone(),
            board: self.game.board().clone(),
            refs: self.refs.clone().expect("references"),
            view,
        }
    }

    fn initialise(&mut self, frame: &Frame) -> Result<(), EngineError> {
        match locate_grid(frame, self.cfg.size) {
            Ok(g) => {
                log::info!("frame {}: grid located", self.frame_index);
                if self.refs.is_none() {
                    let view = RectView::with_canny(frame, &g, self.cfg.canny());
                    let seed = empty_seed(&view.all_features());
                    self.refs = Some(ReferenceStats::seeded(self.params.halflife, seed));
                }
                if self.report.init_frame.is_none() {
                    self.report.init_frame = Some(self.frame_index);
                }
                self.grid = Some(g);
                self.initial = false;
                self.tracker.reset();
                self.evidence.clear();
                self.set_status(GridStatus::Locked);
                Ok(())
            }
            Err(e) => {
                self.searching_since += 1;
                log::debug!("frame {}: no grid yet: {e}", self.frame_index);
                if self.initial && self.searching_since >= self.cfg.engine.init_frames as u64 {
                    return Err(EngineError::InitFailed {
                        frames: self.searching_since,
                    });
                }
                Ok(())
            }
        }
    }

    /// Applies main-detector detections: the expected colour is appended; a stone of
    /// the last mover's colour replaces a last move whose stone has vanished; anything
    /// else waits for a later frame or for the scanner.
    fn apply_detections(&mut self, detections: Vec<crate::detect::Detection>, vanished: &[LatticePoint]) {
        let mut pending = detections;
        loop {
            let mut progressed = false;
            let mut rest = Vec::new();
            for d in pending {
                let last = self.game.last_move().map(|m| (m.point, m.color));
                let result = if d.color == self.game.to_move() {
                    Some(self.game.on_detection(d.point, d.color, self.frame_index))
                } else if matches!(last, Some((p, c)) if c == d.color && vanished.contains(&p)) {
                    Some(self.game.replace_last_if_vanished(d.point, d.color, self.frame_index))
                } else {
                    None
                };
                match result {
                    Some(Ok(t)) => {
                        match t {
                            Transition::Appended { .. } => self.report.detections += 1,
                            Transition::Replaced { .. } => self.report.replacements += 1,
                            _ => {}
                        }
                        log::debug!("frame {}: {t:?}", self.frame_index);
                        self.announce(&t);
                        progressed = true;
                    }
                    Some(Err(e)) => {
                        log::info!("frame {}: detection {:?} {:?} rejected: {e}", self.frame_index, d.color, d.point);
                    }
                    None => rest.push(d),
                }
            }
            pending = rest;
            if !progressed || pending.is_empty() {
                break;
            }
        }
        for d in pending {
            log::debug!("frame {}: deferring {:?} at {:?}", self.frame_index, d.color, d.point);
            self.evidence.defer(d.point);
        }
        self.evidence.retain_empty(self.game.board());
    }

    /// Points where the image under `g` disagrees with the board, on the last frame.
    fn disagreement(&self, g: &GridModel) -> usize {
        let (Some(frame), Some(refs)) = (&self.last_frame, &self.refs) else {
            return 0;
        };
        let view = RectView::with_canny(frame, g, self.cfg.canny());
        let board = self.game.board();
        board
            .points()
            .filter(|&p| {
                let c = classify_point(&view.features(p), refs, self.params.margin);
                c != PointClass::of(board.get(p))
            })
            .count()
    }

    fn apply_grid(&mut self, p: GridProposal, origin: u64) {
        let Some(current) = self.grid.clone() else {
            self.report.dropped_messages += 1;
            return;
        };
        let n = self.cfg.size;
        let occupancy = self.game.board().stones() as f64 / (n * n) as f64;
        if accept_grid(std::slice::from_ref(&p), occupancy, &self.cfg.track.gate) == Decision::Hold {
            return;
        }
        let shift = p.grid.max_corner_distance(&current);
        if shift <= STABLE_PX {
            return;
        }
        let (now, proposed) = (self.disagreement(&current), self.disagreement(&p.grid));
        if proposed > now {
            log::info!(
                "frame {}: {:?} proposal from frame {origin} disagrees with the board at {proposed} points (current {now}); dropped",
                self.frame_index,
                p.source
            );
            self.report.dropped_messages += 1;
            return;
        }
        log::info!("frame {}: grid corrected by {:?} ({shift:.1} px)", self.frame_index, p.source);
        self.report.grid_corrections.push(GridCorrection {
            frame: self.frame_index,
            origin,
            source: p.source,
            shift_px: shift,
        });
        self.grid = Some(p.grid);
        self.tracker.reset();
        self.evidence.clear();
        self.status = GridStatus::Locked;
        self.publish(Some(ServerEvent::Grid {
            frame: self.frame_index,
            corners: self.grid.as_ref().map(|g| g.corners()),
            status: GridStatus::Locked,
        }));
    }

    /// Applies supervisor messages in arrival order, late detections last as one batch;
    /// invalid ones are dropped.
    pub fn apply_messages(&mut self, messages: Vec<SupervisorMessage>) {
        let mut late = Vec::new();
        for m in messages {
            match m.payload {
                MessagePayload::GridProposal(p) => self.apply_grid(p, m.origin),
                MessagePayload::LateDetection(d) => late.push(d),
                MessagePayload::FalsePositive(r) => match self.game.on_false_positive(r.point, self.frame_index) {
                    Ok(t @ Transition::Deleted { .. }) => {
                        self.report.false_positive_deletions += 1;
                        self.announce(&t);
                    }
                    Ok(Transition::Warning { message }) => self.warn(message),
                    Ok(_) => {}
                    Err(e) => {
                        log::debug!("frame {}: false positive at {:?} ignored: {e}", self.frame_index, r.point);
                        self.report.dropped_messages += 1;
                    }
                },
                MessagePayload::TrackingWarning { message } => self.warn(message),
            }
        }
        self.insert_late_batch(late);
    }

    /// Inserts late stones with colours alternating from the side to move where the
    /// batch allows it, so a session started mid-game keeps the right player to move.
    fn insert_late_batch(&mut self, batch: Vec<LateDetection>) {
        let (mut black, mut white): (VecDeque<_>, VecDeque<_>) = batch.into_iter().partition(|d| d.color == Color::Black);
        loop {
            let first = if self.game.to_move() == Color::Black { &mut black } else { &mut white };
            let d = match first.pop_front() {
                Some(d) => d,
                None => match black.pop_front().or_else(|| white.pop_front()) {
                    Some(d) => d,
                    None => break,
                },
            };
            if self.game.board().get(d.point).is_some() {
                log::warn!("frame {}: late detection at occupied {:?} dropped", self.frame_index, d.point);
                self.report.dropped_messages += 1;
                continue;
            }
            match self.game.insert_late(d.point, d.color, self.frame_index) {
                Ok(t) => {
                    self.report.late_insertions += 1;
                    self.announce(&t);
                    let number = self.game.moves().len();
                    self.warn(format!(
                        "move {number} ({:?} at {}) inserted late; check the order",
                        d.color,
                        crate::game::sgf::point_to_sgf(d.point)
                    ));
                }
                Err(e) => {
                    log::warn!("frame {}: late detection {:?} dropped: {e}", self.frame_index, d.point);
                    self.report.dropped_messages += 1;
                }
            }
        }
        self.evidence.retain_empty(self.game.board());
    }

    fn apply_commands(&mut self) {
        while let Ok(q) = self.commands.try_recv() {
            self.report.operator_commands += 1;
            let frame = self.frame_index;
            let result: Result<Option<Transition>, GameError> = match q.command {
                OperatorCommand::DeleteLastMove => self.game.delete_last(frame).map(|r| {
                    Some(Transition::Deleted {
                        number: r.number,
                        point: r.point,
                    })
                }),
                OperatorCommand::SwapMoves { a, b } => self.game.swap_moves(a, b, frame).map(Some),
                OperatorCommand::ConfirmLate { number } => self.game.confirm_late(number, frame).map(Some),
                OperatorCommand::ForceReinit => {
                    self.grid = None;
                    self.searching_since = 0;
                    self.tracker.reset();
                    self.evidence.clear();
                    self.set_status(GridStatus::Searching);
                    Ok(None)
                }
                OperatorCommand::Pause => {
                    self.paused = true;
                    Ok(None)
                }
                OperatorCommand::Resume => {
                    self.paused = false;
                    Ok(None)
                }
            };
            match result {
                Ok(t) => {
                    if let Some(t) = &t {
                        self.announce(t);
                        self.evidence.retain_empty(self.game.board());
                    }
                    self.publish(Some(ServerEvent::Ack {
                        id: q.id,
                        kind: q.command.kind().to_string(),
                        frame,
                    }));
                }
                Err(e) => {
                    if let Some(h) = &self.hub {
                        h.broadcast(&ServerEvent::Error {
                            id: q.id,
                            message: format!("{}: {e}", q.command.kind()),
                        });
                    }
                }
            }
        }
    }

    /// Ends the session: applies what is still queued and renders the outputs.
    pub fn finish(mut self) -> SessionOutcome {
        let messages = self.scheduler.drain();
        self.apply_messages(messages);
        self.scheduler.shutdown();
        self.report.moves = self.game.moves().len();
        SessionOutcome {
            sgf: self.game.export_sgf(&self.cfg.meta),
            log: self.game.log_text(),
            report: self.report.clone(),
            grid: self.grid.clone(),
            game: self.game.clone(),
        }
    }

    /// Whether the session never located a grid.
    pub fn never_located(&self) -> bool {
        self.initial
    }

    pub fn frames_searched(&self) -> u64 {
        self.searching_since
    }
}

fn write_output(path: &std::path::Path, text: &str) -> Result<(), EngineError> {
    std::fs::write(path, text).map_err(|e| EngineError::Output {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

impl SessionOutcome {
    /// Writes the SGF, move log and report to the configured paths.
    pub fn write(&self, out: &OutputConfig) -> Result<(), EngineError> {
        if let Some(p) = &out.sgf {
            write_output(p, &self.sgf)?;
        }
        if let Some(p) = &out.log {
            write_output(p, &self.log)?;
        }
        if let Some(p) = &out.report {
            let json = serde_json::to_string_pretty(&self.report).expect("report serializes");
            write_output(p, &json)?;
        }
        Ok(())
    }
}

/// Runs a session over `source` until it ends. An optional control handle receives
/// the session's command queue and abort flag before the first frame.
pub fn run_session_on(
    cfg: SessionConfig,
    source: FrameSource,
    on_start: impl FnOnce(SessionControl),
) -> Result<SessionOutcome, EngineError> {
    let serve = cfg.serve.clone();
    let output = cfg.output.clone();
    let mut session = Session::new(cfg)?;
    let mut server = match &serve {
        Some(addr) => {
            // the operator endpoint is optional; a failure leaves the session unattended
            match OperatorServer::start(addr, session.control().commands) {
                Ok(s) => {
                    session.attach_hub(s.hub.clone());
                    Some(s)
                }
                Err(e) => {
                    log::warn!("operator endpoint {addr} unavailable: {e}");
                    None
                }
            }
        }
        None => None,
    };
    let mut control = session.control();
    control.operator = server.as_ref().map(|s| s.local_addr());
    on_start(control);
    for frame in source {
        match frame {
            Ok(f) => session.process(f)?,
            Err(e) => log::warn!("frame skipped: {e}"),
        }
    }
    if session.never_located() {
        return Err(EngineError::InitFailed {
            frames: session.frames_searched(),
        });
    }
    let outcome = session.finish();
    if let Some(s) = server.as_mut() {
        s.stop();
    }
    outcome.write(&output)?;
    Ok(outcome)
}

/// Opens the configured source, runs the session and writes the outputs.
pub fn run_session(cfg: SessionConfig) -> Result<SessionReport, EngineError> {
    let source = open_source(&cfg.source)?;
    run_session_on(cfg, source, |_| {}).map(|o| o.report)
}
