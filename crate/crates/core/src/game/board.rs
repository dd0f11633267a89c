use serde::{Deserialize, Serialize};

use super::GameError;
use crate::geometry::LatticePoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Black,
    White,
}

impl Color {
    pub fn opposite(self) -> Color {
        match self {
            Color::Black => Color::White,
            Color::White => Color::Black,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Color::Black => 'B',
            Color::White => 'W',
        }
    }
}

/// Stones on an `n`x`n` board, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Board {
    n: usize,
    cells: Vec<Option<Color>>,
}

impl Board {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            cells: vec![None; n * n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, p: LatticePoint) -> Option<Color> {
        self.cells[p.row * self.n + p.col]
    }

    pub fn set(&mut self, p: LatticePoint, c: Option<Color>) {
        self.cells[p.row * self.n + p.col] = c;
    }

    pub fn points(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        (0..self.n).flat_map(move |r| (0..self.n).map(move |c| LatticePoint::new(c, r)))
    }

    pub fn stones(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// One string per row, `.` empty, `B` black, `W` white.
    pub fn rows(&self) -> Vec<String> {
        self.cells
            .chunks(self.n)
            .map(|row| {
                row.iter()
                    .map(|c| match c {
                        None => '.',
                        Some(c) => c.letter(),
                    })
                    .collect()
            })
            .collect()
    }

    pub fn from_rows(rows: &[&str]) -> Result<Self, GameError> {
        let n = rows.len();
        let mut b = Board::new(n);
        for (r, line) in rows.iter().enumerate() {
            if line.chars().count() != n {
                return Err(GameError::Malformed(format!("row {r} has the wrong length")));
            }
            for (c, ch) in line.chars().enumerate() {
                let v = match ch {
                    '.' => None,
                    'B' => Some(Color::Black),
                    'W' => Some(Color::White),
                    other => return Err(GameError::Malformed(format!("unexpected cell {other:?}"))),
                };
                b.set(LatticePoint::new(c, r), v);
            }
        }
        Ok(b)
    }

    /// The connected group containing `p` (empty if `p` is empty) and its liberty count.
    pub fn group(&self, p: LatticePoint) -> (Vec<LatticePoint>, usize) {
        let Some(color) = self.get(p) else {
            return (Vec::new(), 0);
        };
        let mut seen = vec![false; self.n * self.n];
        let mut libs = vec![false; self.n * self.n];
        let mut stack = vec![p];
        let mut group = Vec::new();
        seen[p.row * self.n + p.col] = true;
        while let Some(q) = stack.pop() {
            group.push(q);
            for nb in q.neighbours(self.n) {
                let i = nb.row * self.n + nb.col;
                match self.cells[i] {
                    None => libs[i] = true,
                    Some(c) if c == color && !seen[i] => {
                        seen[i] = true;
                        stack.push(nb);
                    }
                    _ => {}
                }
            }
        }
        group.sort();
        (group, libs.iter().filter(|&&l| l).count())
    }

    /// Opponent groups that would be left without liberties by `color` playing at `p`.
    pub fn captured_groups(&self, p: LatticePoint, color: Color) -> Result<Vec<Vec<LatticePoint>>, GameError> {
        if !p.in_range(self.n) {
            return Err(GameError::OutOfRange(p));
        }
        if self.get(p).is_some() {
            return Err(GameError::Occupied(p));
        }
        let mut after = self.clone();
        after.set(p, Some(color));
        let mut groups: Vec<Vec<LatticePoint>> = Vec::new();
        for nb in p.neighbours(self.n) {
            if after.get(nb) != Some(color.opposite()) || groups.iter().any(|g| g.contains(&nb)) {
                continue;
            }
            let (g, libs) = after.group(nb);
            if libs == 0 {
                groups.push(g);
            }
        }
        groups.sort();
        Ok(groups)
    }

    /// Places a stone and removes captures. Suicide is rejected with the board unchanged.
    /// Returns the captured points, sorted.
    pub fn play(&mut self, p: LatticePoint, color: Color) -> Result<Vec<LatticePoint>, GameError> {
        let groups = self.captured_groups(p, color)?;
        self.set(p, Some(color));
        let mut captured: Vec<LatticePoint> = groups.into_iter().flatten().collect();
        for &q in &captured {
            self.set(q, None);
        }
        if captured.is_empty() && self.group(p).1 == 0 {
            self.set(p, None);
            return Err(GameError::Suicide(p));
        }
        captured.sort();
        Ok(captured)
    }

    /// True when some group on the board has no liberties.
    pub fn has_dead_group(&self) -> bool {
        self.points().any(|p| self.get(p).is_some() && self.group(p).1 == 0)
    }
}
