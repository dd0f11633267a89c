//! SGF FF[4] reading and writing for the main line of a game.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Color, GameError, MoveRecord};
use crate::geometry::LatticePoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameMeta {
    pub size: usize,
    pub black: String,
    pub white: String,
    pub black_rank: String,
    pub white_rank: String,
    pub event: String,
    pub rules: String,
    pub komi: Option<f64>,
    pub date: String,
}

impl Default for GameMeta {
    fn default() -> Self {
        Self::new(19)
    }
}

impl GameMeta {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            black: String::new(),
            white: String::new(),
            black_rank: String::new(),
            white_rank: String::new(),
            event: String::new(),
            rules: String::new(),
            komi: None,
            date: String::new(),
        }
    }
}

pub fn point_to_sgf(p: LatticePoint) -> String {
    let c = (b'a' + p.col as u8) as char;
    let r = (b'a' + p.row as u8) as char;
    format!("{c}{r}")
}

pub fn sgf_to_point(s: &str, n: usize) -> Result<Option<LatticePoint>, GameError> {
    let b = s.as_bytes();
    if b.is_empty() || (s == "tt" && n <= 19) {
        return Ok(None);
    }
    if b.len() != 2 || !b.iter().all(u8::is_ascii_lowercase) {
        return Err(GameError::Malformed(format!("bad point {s:?}")));
    }
    let p = LatticePoint::new((b[0] - b'a') as usize, (b[1] - b'a') as usize);
    if !p.in_range(n) {
        return Err(GameError::OutOfRange(p));
    }
    Ok(Some(p))
}

fn escape(text: &str) -> String {
    text.replace('\\', "\\\\").replace(']', "\\]")
}

fn flag_comment(m: &MoveRecord) -> Option<String> {
    let mut notes = Vec::new();
    if m.flags.late_inserted {
        notes.push("inserted late");
    }
    if m.flags.order_warning {
        notes.push("check move order");
    }
    if m.flags.replaced {
        notes.push("replaced a vanished stone");
    }
    if notes.is_empty() {
        None
    } else {
        Some(notes.join("; "))
    }
}

/// Serializes the move list; warning flags become node comments.
pub fn export_sgf(moves: &[MoveRecord], meta: &GameMeta) -> String {
    let mut out = format!("(;FF[4]GM[1]SZ[{}]", meta.size);
    let mut prop = |id: &str, v: &str| {
        if !v.is_empty() {
            let _ = write!(out, "{id}[{}]", escape(v));
        }
    };
    prop("PB", &meta.black);
    prop("BR", &meta.black_rank);
    prop("PW", &meta.white);
    prop("WR", &meta.white_rank);
    prop("EV", &meta.event);
    prop("RU", &meta.rules);
    prop("DT", &meta.date);
    if let Some(k) = meta.komi {
        let _ = write!(out, "KM[{k}]");
    }
    for m in moves {
        out.push('\n');
        let _ = write!(out, ";{}[{}]", m.color.letter(), point_to_sgf(m.point));
        if let Some(c) = flag_comment(m) {
            let _ = write!(out, "C[{}]", escape(&c));
        }
    }
    out.push_str(")\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgfMove {
    pub color: Color,
    /// `None` for a pass.
    pub point: Option<LatticePoint>,
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgfGame {
    pub meta: GameMeta,
    pub moves: Vec<SgfMove>,
    /// Setup stones from `AB`/`AW` in the root node.
    pub setup: Vec<(Color, LatticePoint)>,
}

struct Parser<'a> {
    s: &'a [u8],
    i: usize,
}

type Node = Vec<(String, Vec<String>)>;

impl Parser<'_> {
    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.i).copied()
    }

    fn err(&self, what: &str) -> GameError {
        GameError::Malformed(format!("{what} at byte {}", self.i))
    }

    fn value(&mut self) -> Result<String, GameError> {
        self.i += 1; // '['
        let mut v = Vec::new();
        loop {
            match self.s.get(self.i) {
                None => return Err(self.err("unterminated value")),
                Some(b']') => {
                    self.i += 1;
                    break;
                }
                Some(b'\\') => {
                    if let Some(&c) = self.s.get(self.i + 1) {
                        v.push(c);
                    }
                    self.i += 2;
                }
                Some(&c) => {
                    v.push(c);
                    self.i += 1;
                }
            }
        }
        String::from_utf8(v).map_err(|_| self.err("value is not UTF-8"))
    }

    fn node(&mut self) -> Result<Node, GameError> {
        self.i += 1; // ';'
        let mut props = Vec::new();
        while let Some(c) = self.peek() {
            if !c.is_ascii_uppercase() {
                break;
            }
            let start = self.i;
            while self.i < self.s.len() && self.s[self.i].is_ascii_alphabetic() {
                self.i += 1;
            }
            let id: String = self.s[start..self.i]
                .iter()
                .filter(|b| b.is_ascii_uppercase())
                .map(|&b| b as char)
                .collect();
            let mut values = Vec::new();
            while self.peek() == Some(b'[') {
                values.push(self.value()?);
            }
            if values.is_empty() {
                return Err(self.err("property without value"));
            }
            props.push((id, values));
        }
        Ok(props)
    }

    /// Main line of a game tree: its own nodes, then the first variation recursively.
    fn tree(&mut self, nodes: &mut Vec<Node>) -> Result<(), GameError> {
        if self.peek() != Some(b'(') {
            return Err(self.err("expected '('"));
        }
        self.i += 1;
        while self.peek() == Some(b';') {
            nodes.push(self.node()?);
        }
        let mut first = true;
        while self.peek() == Some(b'(') {
            if first {
                self.tree(nodes)?;
                first = false;
            } else {
                self.tree(&mut Vec::new())?;
            }
        }
        if self.peek() != Some(b')') {
            return Err(self.err("expected ')'"));
        }
        self.i += 1;
        Ok(())
    }
}

/// Parses the first game in `text`, following the main line.
pub fn parse_sgf(text: &str) -> Result<SgfGame, GameError> {
    let mut p = Parser { s: text.as_bytes(), i: 0 };
    let mut nodes = Vec::new();
    p.tree(&mut nodes)?;
    let root = nodes.first().ok_or_else(|| GameError::Malformed("no nodes".into()))?;
    let mut meta = GameMeta::new(19);
    for (id, vals) in root {
        let v = vals[0].clone();
        match id.as_str() {
            "SZ" => {
                meta.size = v
                    .split(':')
                    .next()
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| GameError::Malformed(format!("bad SZ {v:?}")))?
            }
            "PB" => meta.black = v,
            "PW" => meta.white = v,
            "BR" => meta.black_rank = v,
            "WR" => meta.white_rank = v,
            "EV" => meta.event = v,
            "RU" => meta.rules = v,
            "DT" => meta.date = v,
            "KM" => meta.komi = v.trim().parse().ok(),
            _ => {}
        }
    }
    let n = meta.size;
    let mut setup = Vec::new();
    for (id, vals) in root {
        let color = match id.as_str() {
            "AB" => Color::Black,
            "AW" => Color::White,
            _ => continue,
        };
        for v in vals {
            if let Some(pt) = sgf_to_point(v, n)? {
                setup.push((color, pt));
            }
        }
    }
    let mut moves = Vec::new();
    for node in &nodes {
        let mut mv = None;
        let mut comment = None;
        for (id, vals) in node {
            match id.as_str() {
                "B" => mv = Some((Color::Black, sgf_to_point(&vals[0], n)?)),
                "W" => mv = Some((Color::White, sgf_to_point(&vals[0], n)?)),
                "C" => comment = Some(vals[0].clone()),
                _ => {}
            }
        }
        if let Some((color, point)) = mv {
            moves.push(SgfMove { color, point, comment });
        }
    }
    Ok(SgfGame { meta, moves, setup })
}
