//! Turning notebook code cells into plain Python text.
//!
//! IPython line magics (`%`), shell escapes (`!`) and help requests (`?`)
//! are replaced by blank lines so line numbers survive. A cell whose first
//! line is a cell magic is dropped entirely, except for magics that run
//! the rest of the cell as Python.

use crate::inventory::{CellKind, CellRecord};

const PYTHON_CELL_MAGICS: &[&str] = &["time", "timeit", "capture", "prun"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MagicLine {
    /// 1-based line within the cell.
    pub line: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellView {
    pub cell_index: usize,
    pub code: String,
    pub magics: Vec<MagicLine>,
    /// True when the whole cell is handed to a non-Python cell magic.
    pub skipped: bool,
}

fn cell_magic_is_python(first: &str) -> bool {
    let name = first.trim_start().trim_start_matches("%%");
    let name = name.split_whitespace().next().unwrap_or("");
    PYTHON_CELL_MAGICS.contains(&name)
}

#[derive(Default)]
struct Scan {
    triple: Option<&'static str>,
    depth: i32,
    backslash: bool,
}

impl Scan {
    fn at_statement_start(&self) -> bool {
        self.triple.is_none() && self.depth <= 0 && !self.backslash
    }

    fn feed(&mut self, line: &str) {
        let b = line.as_bytes();
        let mut i = 0;
        self.backslash = false;
        while i < b.len() {
            if let Some(q) = self.triple {
                if b[i] == b'\\' {
                    i += 2;
                    continue;
                }
                if b[i..].starts_with(q.as_bytes()) {
                    self.triple = None;
                    i += 3;
                    continue;
                }
                i += 1;
                continue;
            }
            match b[i] {
                b'#' => break,
                b'(' | b'[' | b'{' => self.depth += 1,
                b')' | b']' | b'}' => self.depth -= 1,
                b'\\' if line[i + 1..].trim_end_matches(['\r', '\n']).is_empty() => {
                    self.backslash = true;
                }
                q @ (b'\'' | b'"') => {
                    if b[i..].starts_with(b"'''") {
                        self.triple = Some("'''");
                        i += 3;
                        continue;
                    }
                    if b[i..].starts_with(b"\"\"\"") {
                        self.triple = Some("\"\"\"");
                        i += 3;
                        continue;
                    }
                    i += 1;
                    while i < b.len() && b[i] != q && b[i] != b'\n' {
                        if b[i] == b'\\' {
                            i += 1;
                        }
                        i += 1;
                    }
                }
                _ => {}
            }
            i += 1;
        }
    }
}

fn is_magic_line(trimmed: &str) -> bool {
    trimmed.starts_with('%') || trimmed.starts_with('!') || (trimmed.ends_with('?') && !trimmed.starts_with('#'))
}

/// Python view of one cell's source.
pub fn python_view(cell_index: usize, source: &str) -> CellView {
    let first = source.lines().next().unwrap_or("");
    if first.trim_start().starts_with("%%") && !cell_magic_is_python(first) {
        return CellView {
            cell_index,
            code: String::new(),
            magics: vec![MagicLine {
                line: 1,
                text: first.trim().to_string(),
            }],
            skipped: true,
        };
    }
    let mut code = String::with_capacity(source.len());
    let mut magics = Vec::new();
    let mut scan = Scan::default();
    for (n, line) in source.split_inclusive('\n').enumerate() {
        let trimmed = line.trim();
        if scan.at_statement_start() && is_magic_line(trimmed) {
            magics.push(MagicLine {
                line: n + 1,
                text: trimmed.to_string(),
            });
            if line.ends_with('\n') {
                code.push('\n');
            }
            continue;
        }
        scan.feed(line);
        code.push_str(line);
    }
    CellView {
        cell_index,
        code,
        magics,
        skipped: false,
    }
}

/// All code cells of a notebook as Python views.
pub fn code_views(cells: &[CellRecord]) -> Vec<CellView> {
    cells
        .iter()
        .filter(|c| c.kind == CellKind::Code)
        .map(|c| python_view(c.index, &c.source))
        .collect()
}

/// Code cells concatenated into one module, each cell starting on a fresh line.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub text: String,
    /// `(cell_index, first row of the cell in text, number of rows)`.
    pub segments: Vec<(usize, usize, usize)>,
}

impl Assembled {
    pub fn new(views: &[CellView]) -> Self {
        let mut text = String::new();
        let mut segments = Vec::new();
        let mut row = 1;
        for v in views.iter().filter(|v| !v.skipped) {
            let mut code = v.code.clone();
            if !code.is_empty() && !code.ends_with('\n') {
                code.push('\n');
            }
            let rows = code.matches('\n').count();
            segments.push((v.cell_index, row, rows));
            row += rows;
            text.push_str(&code);
        }
        Self { text, segments }
    }

    /// Maps a row of the assembled text to `(cell_index, 1-based row in cell)`.
    pub fn locate(&self, row: usize) -> Option<(usize, usize)> {
        self.segments
            .iter()
            .find(|(_, first, n)| row >= *first && row < first + n)
            .map(|(cell, first, _)| (*cell, row - first + 1))
    }
}
