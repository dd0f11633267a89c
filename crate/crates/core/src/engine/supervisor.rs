use std::collections::{BTreeSet, VecDeque};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use crate::detect::{async_scan_step, AsyncEvidence, DetectParams, DetectionFeatures, FalsePositiveReport, LateDetection, RectView, ReferenceStats, ScanReport};
use crate::frame::Frame;
use crate::game::Board;
use crate::geometry::GridModel;
use crate::grid_init::locate_grid;
use crate::grid_track::{Checker, GridProposal, Handoff, ProposalHistory, ProposalSource, RelocateParams, Relocator, STABLE_PX};

/// What the main loop hands to the supervisors after each frame. Immutable.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub frame_index: u64,
    /// The filtered frame.
    pub frame: Arc<Frame>,
    pub grid: GridModel,
    pub board: Board,
    pub refs: ReferenceStats,
    /// Detection view and features, present when the frame was trusted.
    pub view: Option<Arc<(RectView, Vec<DetectionFeatures>)>>,
}

impl Snapshot {
    /// Tracking held and the detector believed the image.
    pub fn trusted(&self) -> bool {
        self.view.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MessagePayload {
    GridProposal(GridProposal),
    LateDetection(LateDetection),
    FalsePositive(FalsePositiveReport),
    TrackingWarning { message: String },
}

/// A supervisor's finding about the snapshot of frame `origin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisorMessage {
    pub origin: u64,
    #[serde(flatten)]
    pub payload: MessagePayload,
}

pub trait Supervisor: Send {
    fn name(&self) -> &'static str;
    fn process(&mut self, s: &Snapshot) -> Vec<SupervisorMessage>;
}

/// Untrusted snapshots in a row after which the checker warns the operator.
const LOST_WARNING_AFTER: u32 = 25;

/// The slow grid checker: locate_grid from scratch until the board fills up, then the
/// endgame relocator, under the handoff rule. Runs on every `every`-th snapshot while
/// the main loop is happy and on every snapshot while it is not.
pub struct GridChecker {
    n: usize,
    every: u32,
    seen: u64,
    handoff: Handoff,
    relocator: Relocator,
    history: ProposalHistory,
    untrusted: u32,
}

impl GridChecker {
    pub fn new(n: usize, every: u32, params: RelocateParams) -> Self {
        Self {
            n,
            every: every.max(1),
            seen: 0,
            handoff: Handoff::new(params.min_stones),
            relocator: Relocator::new(params),
            history: ProposalHistory::new(),
            untrusted: 0,
        }
    }

    pub fn active(&self) -> Checker {
        self.handoff.active()
    }
}

impl Supervisor for GridChecker {
    fn name(&self) -> &'static str {
        "grid-checker"
    }

    fn process(&mut self, s: &Snapshot) -> Vec<SupervisorMessage> {
        let mut out = Vec::new();
        self.seen += 1;
        if s.trusted() {
            self.untrusted = 0;
        } else {
            self.untrusted += 1;
            if self.untrusted == LOST_WARNING_AFTER {
                out.push(SupervisorMessage {
                    origin: s.frame_index,
                    payload: MessagePayload::TrackingWarning {
                        message: format!("grid unconfirmed for {LOST_WARNING_AFTER} frames"),
                    },
                });
            }
        }
        if s.trusted() && self.seen % self.every as u64 != 0 {
            return out;
        }
        let checker = self.handoff.next(s.board.stones());
        let found = match checker {
            Checker::Linear => locate_grid(&s.frame, self.n)
                .map(|g| GridProposal::new(g, ProposalSource::LinearAsync))
                .map_err(|e| e.to_string()),
            Checker::Circular => self
                .relocator
                .observe(&s.frame, &s.grid, &s.board, s.frame_index)
                .map_err(|e| e.to_string()),
        };
        self.handoff.record(checker, found.is_ok());
        match found {
            Ok(p) if p.grid.max_corner_distance(&s.grid) <= STABLE_PX => self.history.miss(),
            Ok(p) => {
                let p = self.history.push(p.grid, p.source).clone();
                log::debug!("frame {}: {:?} proposal, streak {}", s.frame_index, p.source, p.streak);
                out.push(SupervisorMessage {
                    origin: s.frame_index,
                    payload: MessagePayload::GridProposal(p),
                });
            }
            Err(e) => {
                log::trace!("frame {}: {checker:?} checker: {e}", s.frame_index);
                self.history.miss();
            }
        }
        out
    }
}

/// The asynchronous stone scanner. Evidence restarts whenever the grid changes or a
/// snapshot is untrusted; a false positive that produced only a warning is not
/// reported again while the stone stays on the board.
pub struct Scanner {
    params: DetectParams,
    evidence: AsyncEvidence,
    basis: Option<GridModel>,
    reported: BTreeSet<crate::geometry::LatticePoint>,
}

impl Scanner {
    pub fn new(params: DetectParams) -> Self {
        Self {
            params,
            evidence: AsyncEvidence::new(),
            basis: None,
            reported: BTreeSet::new(),
        }
    }
}

impl Supervisor for Scanner {
    fn name(&self) -> &'static str {
        "scanner"
    }

    fn process(&mut self, s: &Snapshot) -> Vec<SupervisorMessage> {
        let Some(view) = &s.view else {
            self.evidence.clear();
            return Vec::new();
        };
        if self.basis.as_ref() != Some(&s.grid) {
            self.evidence.clear();
            self.basis = Some(s.grid.clone());
        }
        self.reported.retain(|p| s.board.get(*p).is_some());
        let (rect, features) = &**view;
        async_scan_step(rect, features, &s.board, &s.refs, &mut self.evidence, &self.params)
            .into_iter()
            .filter_map(|r| {
                let payload = match r {
                    ScanReport::LateDetection(d) => MessagePayload::LateDetection(d),
                    ScanReport::FalsePositive(f) => {
                        if !self.reported.insert(f.point) {
                            return None;
                        }
                        MessagePayload::FalsePositive(f)
                    }
                };
                Some(SupervisorMessage {
                    origin: s.frame_index,
                    payload,
                })
            })
            .collect()
    }
}

struct Mailbox {
    slot: Mutex<(Option<Arc<Snapshot>>, bool)>,
    ready: Condvar,
}

pub struct Worker {
    mailbox: Arc<Mailbox>,
    handle: Option<JoinHandle<()>>,
}

/// Runs the supervisors and collects their messages for the next frame boundary.
pub enum Scheduler {
    /// On the calling thread, `lag` snapshots behind; reproducible.
    FixedLag {
        lag: usize,
        backlog: VecDeque<Arc<Snapshot>>,
        supervisors: Vec<Box<dyn Supervisor>>,
        out: Vec<SupervisorMessage>,
    },
    /// One thread per supervisor; each keeps only the newest snapshot.
    Threaded {
        workers: Vec<Worker>,
        rx: Receiver<SupervisorMessage>,
    },
}

impl Scheduler {
    pub fn fixed_lag(lag: usize, supervisors: Vec<Box<dyn Supervisor>>) -> Self {
        Scheduler::FixedLag {
            lag,
            backlog: VecDeque::new(),
            supervisors,
            out: Vec::new(),
        }
    }

    pub fn threaded(supervisors: Vec<Box<dyn Supervisor>>) -> Self {
        let (tx, rx) = channel();
        let workers = supervisors.into_iter().map(|s| spawn_worker(s, tx.clone())).collect();
        Scheduler::Threaded { workers, rx }
    }

    pub fn publish(&mut self, s: Snapshot) {
        let s = Arc::new(s);
        match self {
            Scheduler::FixedLag {
                lag,
                backlog,
                supervisors,
                out,
            } => {
                backlog.push_back(s);
                while backlog.len() > *lag {
                    let snap = backlog.pop_front().expect("non-empty backlog");
                    for sup in supervisors.iter_mut() {
                        out.extend(sup.process(&snap));
                    }
                }
            }
            Scheduler::Threaded { workers, .. } => {
                for w in workers.iter() {
                    let mut slot = w.mailbox.slot.lock().expect("mailbox lock");
                    slot.0 = Some(s.clone());
                    w.mailbox.ready.notify_one();
                }
            }
        }
    }

    /// Messages that arrived since the last call, in arrival order.
    pub fn drain(&mut self) -> Vec<SupervisorMessage> {
        match self {
            Scheduler::FixedLag { out, .. } => std::mem::take(out),
            Scheduler::Threaded { rx, .. } => rx.try_iter().collect(),
        }
    }

    /// Stops the workers; snapshots still waiting are dropped.
    pub fn shutdown(&mut self) {
        if let Scheduler::Threaded { workers, .. } = self {
            for w in workers.iter() {
                w.mailbox.slot.lock().expect("mailbox lock").1 = true;
                w.mailbox.ready.notify_one();
            }
            for w in workers.iter_mut() {
                if let Some(h) = w.handle.take() {
                    let _ = h.join();
                }
            }
        }
    }
}

impl Drop for Scheduler {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn spawn_worker(mut sup: Box<dyn Supervisor>, tx: Sender<SupervisorMessage>) -> Worker {
    let mailbox = Arc::new(Mailbox {
        slot: Mutex::new((None, false)),
        ready: Condvar::new(),
    });
    let mb = mailbox.clone();
    let handle = std::thread::Builder::new()
        .name(sup.name().to_string())
        .spawn(move || loop {
            let snap = {
                let mut slot = mb.slot.lock().expect("mailbox lock");
                loop {
                    if slot.1 {
                        return;
                    }
                    if let Some(s) = slot.0.take() {
                        break s;
                    }
                    slot = mb.ready.wait(slot).expect("mailbox lock");
                }
            };
            for m in sup.process(&snap) {
                if tx.send(m).is_err() {
                    return;
                }
            }
        })
        .expect("spawn supervisor thread");
    Worker {
        mailbox,
        handle: Some(handle),
    }
}
