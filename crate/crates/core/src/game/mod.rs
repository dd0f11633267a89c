//! Board, move list and the capture-handling state machine.
//!
//! A capturing move removes its prisoners from the internal board immediately. If the
//! player is slow to take them off the real board, one of them may be detected as the
//! next move; that move is marked provisional. When the stone is finally removed the
//! scanner reports a false positive on the last move, which is deleted. If a different
//! move arrives first, the vanished last move is replaced by it. A prisoner that is
//! played again for real is simply never reported and stands.

mod board;
pub mod sgf;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use board::{Board, Color};
pub use sgf::{export_sgf, parse_sgf, GameMeta, SgfGame, SgfMove};

use crate::geometry::LatticePoint;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("point {0:?} is occupied")]
    Occupied(LatticePoint),
    #[error("point {0:?} is off the board")]
    OutOfRange(LatticePoint),
    #[error("move at {0:?} would be suicide")]
    Suicide(LatticePoint),
    #[error("move at {0:?} retakes a ko")]
    Ko(LatticePoint),
    #[error("point {0:?} is already empty")]
    StalePoint(LatticePoint),
    #[error("no moves have been played")]
    NoMoves,
    #[error("no move numbered {0}")]
    NoSuchMove(usize),
    #[error("malformed game record: {0}")]
    Malformed(String),
}

impl GameError {
    /// Suicide and ko violations, which upstream treats as detection errors.
    pub fn is_illegal_move(&self) -> bool {
        matches!(self, GameError::Suicide(_) | GameError::Ko(_))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveFlags {
    pub late_inserted: bool,
    pub order_warning: bool,
    pub replaced: bool,
    /// Re-detection of a just-captured point; may still be deleted as a false positive.
    pub provisional: bool,
}

impl MoveFlags {
    fn describe(&self) -> String {
        let mut parts = Vec::new();
        if self.late_inserted {
            parts.push("late");
        }
        if self.order_warning {
            parts.push("order-warning");
        }
        if self.replaced {
            parts.push("replaced");
        }
        if self.provisional {
            parts.push("provisional");
        }
        if parts.is_empty() {
            "-".to_string()
        } else {
            parts.join(",")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub number: usize,
    pub color: Color,
    pub point: LatticePoint,
    pub frame: u64,
    pub flags: MoveFlags,
    /// Stones removed by this move.
    pub captured: Vec<LatticePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Transition {
    Appended { number: usize },
    Replaced { number: usize, from: LatticePoint },
    Deleted { number: usize, point: LatticePoint },
    Swapped { a: usize, b: usize },
    Confirmed { number: usize },
    Warning { message: String },
}

/// One line of the plain-text move log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub frame: u64,
    pub action: String,
    pub point: Option<LatticePoint>,
    pub flags: String,
}

impl LogEntry {
    pub fn line(&self) -> String {
        let point = self.point.map_or_else(|| "--".to_string(), sgf::point_to_sgf);
        format!("{:>6} {:<10} {} {}", self.frame, self.action, point, self.flags)
    }
}

/// Replays `moves` from an empty board, recomputing every move's captures, and checks
/// suicide and simple ko along the way.
pub fn replay(n: usize, moves: &mut [MoveRecord]) -> Result<Board, GameError> {
    let mut board = Board::new(n);
    let mut before_last: Option<Board> = None;
    for m in moves.iter_mut() {
        let prev = board.clone();
        m.captured = board.play(m.point, m.color)?;
        if before_last.as_ref() == Some(&board) {
            return Err(GameError::Ko(m.point));
        }
        before_last = Some(prev);
    }
    Ok(board)
}

#[derive(Debug, Clone)]
pub struct GameState {
    board: Board,
    to_move: Color,
    moves: Vec<MoveRecord>,
    before_last: Option<Board>,
    log: Vec<LogEntry>,
}

impl GameState {
    pub fn new(n: usize) -> Self {
        Self {
            board: Board::new(n),
            to_move: Color::Black,
            moves: Vec::new(),
            before_last: None,
            log: Vec::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.board.size()
    }

    pub fn board(&self) -> &Board {
        &self.board
    }

    pub fn to_move(&self) -> Color {
        self.to_move
    }

    pub fn moves(&self) -> &[MoveRecord] {
        &self.moves
    }

    pub fn last_move(&self) -> Option<&MoveRecord> {
        self.moves.last()
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn log_text(&self) -> String {
        let mut s = String::new();
        for e in &self.log {
            let _ = writeln!(s, "{}", e.line());
        }
        s
    }

    pub fn export_sgf(&self, meta: &GameMeta) -> String {
        export_sgf(&self.moves, meta)
    }

    fn record(&mut self, frame: u64, action: &str, point: Option<LatticePoint>, flags: String) {
        self.log.push(LogEntry {
            frame,
            action: action.to_string(),
            point,
            flags,
        });
    }

    /// Checks legality of `color` at `p` without changing anything; returns the captures.
    pub fn check(&self, p: LatticePoint, color: Color) -> Result<Vec<LatticePoint>, GameError> {
        let mut b = self.board.clone();
        let captured = b.play(p, color)?;
        if self.before_last.as_ref() == Some(&b) {
            return Err(GameError::Ko(p));
        }
        Ok(captured)
    }

    fn push(&mut self, p: LatticePoint, color: Color, frame: u64, mut flags: MoveFlags) -> Result<usize, GameError> {
        let captured = self.check(p, color)?;
        if let Some(last) = self.moves.last() {
            if last.captured.contains(&p) && color == self.to_move {
                flags.provisional = true;
            }
        }
        self.before_last = Some(self.board.clone());
        for &q in &captured {
            self.board.set(q, None);
        }
        self.board.set(p, Some(color));
        let number = self.moves.len() + 1;
        self.moves.push(MoveRecord {
            number,
            color,
            point: p,
            frame,
            flags,
            captured,
        });
        self.to_move = color.opposite();
        Ok(number)
    }

    /// Rebuilds the board from the move list after an edit that is not a plain append.
    fn rebuild(&mut self) -> Result<(), GameError> {
        let n = self.size();
        let mut moves = self.moves.clone();
        let board = replay(n, &mut moves)?;
        let before_last = if moves.is_empty() {
            None
        } else {
            let mut head = moves[..moves.len() - 1].to_vec();
            Some(replay(n, &mut head)?)
        };
        for (i, m) in moves.iter_mut().enumerate() {
            m.number = i + 1;
        }
        self.to_move = moves.last().map_or(Color::Black, |m| m.color.opposite());
        self.moves = moves;
        self.board = board;
        self.before_last = before_last;
        Ok(())
    }

    /// A stone confirmed by the main detector.
    pub fn on_detection(&mut self, p: LatticePoint, color: Color, frame: u64) -> Result<Transition, GameError> {
        let number = self.push(p, color, frame, MoveFlags::default())?;
        let flags = self.moves[number - 1].flags;
        self.record(frame, "play", Some(p), flags.describe());
        Ok(Transition::Appended { number })
    }

    /// A point believed occupied that the scanner keeps seeing empty. Only the last
    /// move can be deleted this way; anything else yields a warning.
    pub fn on_false_positive(&mut self, p: LatticePoint, frame: u64) -> Result<Transition, GameError> {
        if !p.in_range(self.size()) {
            return Err(GameError::OutOfRange(p));
        }
        if self.board.get(p).is_none() {
            return Err(GameError::StalePoint(p));
        }
        match self.moves.last() {
            Some(last) if last.point == p => {
                let number = last.number;
                self.delete_last(frame)?;
                Ok(Transition::Deleted { number, point: p })
            }
            _ => {
                self.record(frame, "warn-empty", Some(p), "-".into());
                Ok(Transition::Warning {
                    message: format!("stone at {} looks empty but is not the last move", sgf::point_to_sgf(p)),
                })
            }
        }
    }

    /// Removes the last move and restores whatever it captured.
    pub fn delete_last(&mut self, frame: u64) -> Result<MoveRecord, GameError> {
        let last = self.moves.pop().ok_or(GameError::NoMoves)?;
        self.rebuild()?;
        self.record(frame, "delete", Some(last.point), last.flags.describe());
        Ok(last)
    }

    /// Re-points the last move (same colour and number) at `p`, for when the stone last
    /// played has vanished and a real move of that colour shows up.
    pub fn replace_last_if_vanished(&mut self, p: LatticePoint, color: Color, frame: u64) -> Result<Transition, GameError> {
        let last = self.moves.last().cloned().ok_or(GameError::NoMoves)?;
        if last.color != color {
            return Err(GameError::Malformed("replacement colour differs from the last move".into()));
        }
        let saved = self.moves.clone();
        let m = self.moves.last_mut().unwrap();
        m.point = p;
        m.frame = frame;
        m.flags.replaced = true;
        m.flags.provisional = false;
        if let Err(e) = self.rebuild() {
            self.moves = saved;
            self.rebuild()?;
            return Err(e);
        }
        let flags = self.moves.last().unwrap().flags;
        self.record(frame, "replace", Some(p), format!("{} from={}", flags.describe(), sgf::point_to_sgf(last.point)));
        Ok(Transition::Replaced {
            number: last.number,
            from: last.point,
        })
    }

    /// A stone found late by the scanner, appended with an order warning.
    pub fn insert_late(&mut self, p: LatticePoint, color: Color, frame: u64) -> Result<Transition, GameError> {
        let flags = MoveFlags {
            late_inserted: true,
            order_warning: true,
            ..MoveFlags::default()
        };
        let number = self.push(p, color, frame, flags)?;
        let flags = self.moves[number - 1].flags;
        self.record(frame, "late", Some(p), flags.describe());
        Ok(Transition::Appended { number })
    }

    /// Exchanges two moves in the list (1-based) and clears their order warnings.
    pub fn swap_moves(&mut self, a: usize, b: usize, frame: u64) -> Result<Transition, GameError> {
        let len = self.moves.len();
        for k in [a, b] {
            if k == 0 || k > len {
                return Err(GameError::NoSuchMove(k));
            }
        }
        let saved = self.moves.clone();
        self.moves.swap(a - 1, b - 1);
        for k in [a, b] {
            self.moves[k - 1].flags.order_warning = false;
        }
        if let Err(e) = self.rebuild() {
            self.moves = saved;
            self.rebuild()?;
            return Err(e);
        }
        self.record(frame, "swap", None, format!("{a}<->{b}"));
        Ok(Transition::Swapped { a, b })
    }

    /// Operator acknowledgement of a late insertion.
    pub fn confirm_late(&mut self, number: usize, frame: u64) -> Result<Transition, GameError> {
        let m = self
            .moves
            .get_mut(number.wrapping_sub(1))
            .ok_or(GameError::NoSuchMove(number))?;
        m.flags.order_warning = false;
        let p = m.point;
        self.record(frame, "confirm", Some(p), format!("#{number}"));
        Ok(Transition::Confirmed { number })
    }

    /// Board and move list agree with a fresh replay and no group is dead.
    pub fn is_consistent(&self) -> bool {
        let mut moves = self.moves.clone();
        match replay(self.size(), &mut moves) {
            Ok(b) => b == self.board && moves == self.moves && !self.board.has_dead_group(),
            Err(_) => false,
        }
    }
}
