//! ASCII grid maps.
//!
//! ```text
//! 3 9
//! ...#..#S.
//! L..D.G##.
//! ...#A....
//! ```
//!
//! The first line is `rows cols`, then exactly `rows` lines of `cols` glyphs:
//! `#` blocked, `.` free, `L`/`A` leader and altruist spawns, `D` door,
//! `S` switch, `G` apple. Every special glyph marks a free cell.

use std::fmt;

use thiserror::Error;

/// Zero-based grid coordinate. Reports and CSV files use one-based values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    /// From one-based (row, col).
    pub const fn one_based(row: usize, col: usize) -> Self {
        Cell {
            row: row - 1,
            col: col - 1,
        }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }

    pub fn is_adjacent(self, other: Cell) -> bool {
        self.manhattan(other) == 1
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row + 1, self.col + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("map line {line}, column {column}: {message}")]
pub struct MapError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

fn map_err(line: usize, column: usize, message: impl Into<String>) -> MapError {
    MapError {
        line,
        column,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    rows: usize,
    cols: usize,
    blocked: Vec<bool>,
    pub door: Option<Cell>,
    pub switch: Option<Cell>,
    pub apple: Option<Cell>,
    pub leader_spawn: Cell,
    pub altruist_spawn: Option<Cell>,
}

impl GridMap {
    pub fn parse(text: &str) -> Result<GridMap, MapError> {
        let mut lines = text.split('\n');
        let header = lines.next().unwrap_or("");
        let (rows, cols) = parse_header(header)?;

        let mut blocked = vec![false; rows * cols];
        let mut door = None;
        let mut switch = None;
        let mut apple = None;
        let mut leader = None;
        let mut altruist = None;

        for r in 0..rows {
            let line_no = r + 2;
            let line = lines
                .next()
                .ok_or_else(|| map_err(line_no, 1, format!("expected {rows} grid rows")))?;
            let glyphs: Vec<char> = line.chars().collect();
            if glyphs.len() != cols {
                return Err(map_err(
                    line_no,
                    glyphs.len().min(cols) + 1,
                    format!("expected {cols} glyphs, found {}", glyphs.len()),
                ));
            }
            for (c, &g) in glyphs.iter().enumerate() {
                let cell = Cell::new(r, c);
                let slot = match g {
                    '#' => {
                        blocked[r * cols + c] = true;
                        None
                    }
                    '.' => None,
                    'L' => Some((&mut leader, "leader spawn")),
                    'A' => Some((&mut altruist, "altruist spawn")),
                    'D' => Some((&mut door, "door")),
                    'S' => Some((&mut switch, "switch")),
                    'G' => Some((&mut apple, "apple")),
                    other => {
                        return Err(map_err(line_no, c + 1, format!("unknown glyph {other:?}")))
                    }
                };
                if let Some((slot, what)) = slot {
                    if slot.is_some() {
                        return Err(map_err(line_no, c + 1, format!("second {what}")));
                    }
                    *slot = Some(cell);
                }
            }
        }
        // a single trailing newline is allowed, nothing else
        let trailing_line = rows + 2;
        match (lines.next(), lines.next()) {
            (None, _) | (Some(""), None) => {}
            _ => return Err(map_err(trailing_line, 1, "unexpected content after grid")),
        }

        let leader_spawn = leader.ok_or_else(|| map_err(1, 1, "map has no leader spawn 'L'"))?;
        if door.is_some() != switch.is_some() {
            let at = door.or(switch).unwrap();
            return Err(map_err(
                at.row + 2,
                at.col + 1,
                "door and switch must both be present or both absent",
            ));
        }
        if altruist.is_none() && switch.is_some() {
            return Err(map_err(1, 1, "a switch requires an altruist spawn 'A'"));
        }
        Ok(GridMap {
            rows,
            cols,
            blocked,
            door,
            switch,
            apple,
            leader_spawn,
            altruist_spawn: altruist,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn in_bounds(&self, row: isize, col: isize) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.rows && (col as usize) < self.cols
    }

    pub fn is_blocked(&self, cell: Cell) -> bool {
        self.blocked[cell.row * self.cols + cell.col]
    }

    /// Non-blocked cells in row-major order (the door cell included).
    pub fn free_cells(&self) -> Vec<Cell> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| Cell::new(r, c)))
            .filter(|c| !self.is_blocked(*c))
            .collect()
    }

    /// Neighbour in direction `(dr, dc)` if it is inside the grid and free.
    pub fn neighbour(&self, cell: Cell, dr: isize, dc: isize) -> Option<Cell> {
        let r = cell.row as isize + dr;
        let c = cell.col as isize + dc;
        if !self.in_bounds(r, c) {
            return None;
        }
        let n = Cell::new(r as usize, c as usize);
        (!self.is_blocked(n)).then_some(n)
    }

    /// Serialises back to the file format.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let cell = Cell::new(r, c);
                let g = if self.is_blocked(cell) {
                    '#'
                } else if Some(cell) == self.door {
                    'D'
                } else if Some(cell) == self.switch {
                    'S'
                } else if Some(cell) == self.apple {
                    'G'
                } else if cell == self.leader_spawn {
                    'L'
                } else if Some(cell) == self.altruist_spawn {
                    'A'
                } else {
                    '.'
                };
                out.push(g);
            }
            out.push('\n');
        }
        out
    }
}

fn parse_header(line: &str) -> Result<(usize, usize), MapError> {
    let parts: Vec<&str> = line.split(' ').collect();
    if parts.len() != 2 {
        return Err(map_err(1, 1, "header must be \"rows cols\""));
    }
    let mut dims = [0usize; 2];
    let mut column = 1;
    for (slot, part) in dims.iter_mut().zip(&parts) {
        if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(map_err(
                1,
                column,
                format!("expected a positive integer, found {part:?}"),
            ));
        }
        *slot = part
            .parse()
            .map_err(|_| map_err(1, column, format!("integer {part:?} out of range")))?;
        if *slot == 0 {
            return Err(map_err(1, column, "dimensions must be positive"));
        }
        column += part.len() + 1;
    }
    Ok((dims[0], dims[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOOR: &str = "3 9\n...#..#S.\nL..D.G##.\n...#A....\n";

    #[test]
    fn parses_special_cells() {
        let m = GridMap::parse(DOOR).unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 9));
        assert_eq!(m.door, Some(Cell::one_based(2, 4)));
        assert_eq!(m.switch, Some(Cell::one_based(1, 8)));
        assert_eq!(m.apple, Some(Cell::one_based(2, 6)));
        assert_eq!(m.leader_spawn, Cell::one_based(2, 1));
        assert_eq!(m.altruist_spawn, Some(Cell::one_based(3, 5)));
        assert!(m.is_blocked(Cell::one_based(1, 4)));
        assert_eq!(m.to_text(), DOOR);
    }

    #[test]
    fn trailing_newline_optional() {
        assert!(GridMap::parse(DOOR.trim_end()).is_ok());
        let err = GridMap::parse(&format!("{DOOR}\n")).unwrap_err();
        assert_eq!(err.line, 5);
    }

    #[test]
    fn diagnostics_carry_position() {
        let err = GridMap::parse("2 3\n.L.\n.x.\n").unwrap_err();
        assert_eq!((err.line, err.column), (3, 2));
        let err = GridMap::parse("2 3\n.L.\n..\n").unwrap_err();
        assert_eq!(err.line, 3);
        let err = GridMap::parse("2 3\n.L.\n").unwrap_err();
        assert_eq!(err.line, 3);
        let err = GridMap::parse("2  3\n.L.\n...\n").unwrap_err();
        assert_eq!(err.line, 1);
        let err = GridMap::parse("2 x\n.L.\n...\n").unwrap_err();
        assert_eq!((err.line, err.column), (1, 3));
        let err = GridMap::parse("1 3\n.LL\n").unwrap_err();
        assert_eq!((err.line, err.column), (2, 3));
        let err = GridMap::parse("1 3\n...\n").unwrap_err();
        assert!(err.message.contains("leader"));
    }

    #[test]
    fn door_requires_switch() {
        let err = GridMap::parse("1 3\nLDA\n").unwrap_err();
        assert_eq!((err.line, err.column), (2, 2));
    }

    #[test]
    fn carriage_returns_are_rejected() {
        assert!(GridMap::parse("1 2\r\nL.\r\n").is_err());
    }
}
