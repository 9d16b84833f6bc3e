use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cells::{code_views, Assembled, CellView};
use super::tokenize::{split_lines_keepends, tokenize, Pos, TokKind, Token};
use crate::inventory::CellRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportForm {
    PlainImport,
    FromImport,
    LoadExt,
}

impl ImportForm {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PlainImport => "plain_import",
            Self::FromImport => "from_import",
            Self::LoadExt => "load_ext",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "plain_import" => Self::PlainImport,
            "from_import" => Self::FromImport,
            "load_ext" => Self::LoadExt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Locality {
    Local,
    External,
    Unresolved,
}

impl Locality {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Local => "local",
            Self::External => "external",
            Self::Unresolved => "unresolved",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "local" => Self::Local,
            "external" => Self::External,
            "unresolved" => Self::Unresolved,
            _ => return None,
        })
    }
}

/// How the source that produced a record was read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    /// All code cells tokenized as one module.
    Joint,
    /// The joint module failed to tokenize; this cell tokenized on its own.
    PerCell,
    /// The cell failed to tokenize; recovered by the line scanner.
    Fallback,
}

impl ParseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Joint => "joint",
            Self::PerCell => "per_cell",
            Self::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportRecord {
    pub notebook_id: i64,
    pub cell_index: usize,
    pub line: usize,
    pub module: String,
    pub top_level: String,
    pub form: ImportForm,
    pub locality: Locality,
    pub parse_mode: ParseMode,
}

impl ImportRecord {
    fn new(cell_index: usize, line: usize, module: &str, form: ImportForm, parse_mode: ParseMode) -> Self {
        Self {
            notebook_id: 0,
            cell_index,
            line,
            module: module.to_string(),
            top_level: module.split('.').next().unwrap_or(module).to_string(),
            form,
            locality: Locality::Unresolved,
            parse_mode,
        }
    }
}

/// One `import` or `from ... import` statement found in a token stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportStmt {
    pub start: Pos,
    /// Token index range `[first, end)` covered by the statement.
    pub tokens: (usize, usize),
    pub from: bool,
    /// Leading dots of a relative `from` import.
    pub level: usize,
    /// The `from` module, or empty for plain imports and `from . import x`.
    pub module: String,
    /// `(dotted name, alias)`; for plain imports the dotted name is the module.
    pub names: Vec<(String, Option<String>)>,
    pub star: bool,
}

impl ImportStmt {
    /// Names bound by the statement; empty for star imports.
    pub fn bindings(&self) -> Vec<String> {
        if self.star {
            return Vec::new();
        }
        self.names
            .iter()
            .map(|(name, alias)| match alias {
                Some(a) => a.clone(),
                None if self.from => name.clone(),
                None => name.split('.').next().unwrap_or(name).to_string(),
            })
            .collect()
    }

    /// Absolute module names this statement imports.
    pub fn modules(&self) -> Vec<String> {
        if self.level > 0 {
            return Vec::new();
        }
        if self.from {
            if self.module.is_empty() {
                Vec::new()
            } else {
                vec![self.module.clone()]
            }
        } else {
            self.names.iter().map(|(n, _)| n.clone()).collect()
        }
    }
}

fn significant(kind: TokKind) -> bool {
    !matches!(kind, TokKind::Comment | TokKind::Nl)
}

/// Finds import statements in a token stream. Statements inside strings or
/// comments never appear because those are single tokens.
pub fn parse_import_statements(tokens: &[Token]) -> Vec<ImportStmt> {
    let mut out = Vec::new();
    let mut prev: Option<&Token> = None;
    let mut depth = 0i32;
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        let at_start = depth == 0
            && match prev {
                None => true,
                Some(p) => {
                    matches!(p.kind, TokKind::Newline | TokKind::Indent | TokKind::Dedent)
                        || (p.kind == TokKind::Op && (p.text == ";" || p.text == ":"))
                }
            };
        if t.kind == TokKind::Name && (t.text == "import" || t.text == "from") && at_start {
            if let Some(stmt) = parse_one(tokens, i) {
                i = stmt.tokens.1;
                prev = tokens.get(i.saturating_sub(1));
                out.push(stmt);
                continue;
            }
        }
        if t.kind == TokKind::Op {
            match t.text.as_str() {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                _ => {}
            }
        }
        if significant(t.kind) {
            prev = Some(t);
        }
        i += 1;
    }
    out
}

struct Cursor<'a> {
    tokens: &'a [Token],
    i: usize,
    depth: i32,
}

impl<'a> Cursor<'a> {
    fn skip_trivia(&mut self) {
        while let Some(t) = self.tokens.get(self.i) {
            if t.kind == TokKind::Comment || (t.kind == TokKind::Nl && self.depth > 0) {
                self.i += 1;
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<&'a Token> {
        self.skip_trivia();
        self.tokens.get(self.i)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.peek().is_some_and(|t| t.kind == TokKind::Op && t.text == op) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn eat_name(&mut self, name: &str) -> bool {
        if self.peek().is_some_and(|t| t.kind == TokKind::Name && t.text == name) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn name(&mut self) -> Option<String> {
        let t = self.peek()?;
        if t.kind == TokKind::Name && !super::python::is_keyword(&t.text) {
            self.i += 1;
            Some(t.text.clone())
        } else {
            None
        }
    }

    fn dotted(&mut self) -> Option<String> {
        let mut s = self.name()?;
        while self.eat_op(".") {
            s.push('.');
            s.push_str(&self.name()?);
        }
        Some(s)
    }

    fn at_end(&mut self) -> bool {
        match self.peek() {
            None => true,
            Some(t) => {
                matches!(t.kind, TokKind::Newline | TokKind::EndMarker) || (t.kind == TokKind::Op && t.text == ";")
            }
        }
    }
}

fn parse_one(tokens: &[Token], first: usize) -> Option<ImportStmt> {
    let mut c = Cursor {
        tokens,
        i: first + 1,
        depth: 0,
    };
    let start = tokens[first].start;
    let from = tokens[first].text == "from";
    let mut level = 0;
    let mut module = String::new();
    let mut names = Vec::new();
    let mut star = false;
    if from {
        loop {
            if c.eat_op(".") {
                level += 1;
            } else if c.eat_op("...") {
                level += 3;
            } else {
                break;
            }
        }
        if !c.eat_name("import") {
            module = c.dotted()?;
            if !c.eat_name("import") {
                return None;
            }
        } else if level == 0 {
            return None;
        }
        if c.eat_op("*") {
            star = true;
        } else {
            let paren = c.eat_op("(");
            if paren {
                c.depth = 1;
            }
            loop {
                let n = c.name()?;
                let alias = if c.eat_name("as") { Some(c.name()?) } else { None };
                names.push((n, alias));
                if !c.eat_op(",") {
                    break;
                }
                if paren && c.peek().is_some_and(|t| t.text == ")") {
                    break;
                }
            }
            if paren {
                c.depth = 0;
                if !c.eat_op(")") {
                    return None;
                }
            }
        }
    } else {
        loop {
            let n = c.dotted()?;
            let alias = if c.eat_name("as") { Some(c.name()?) } else { None };
            names.push((n, alias));
            if !c.eat_op(",") {
                break;
            }
        }
    }
    if !c.at_end() {
        return None;
    }
    Some(ImportStmt {
        start,
        tokens: (first, c.i),
        from,
        level,
        module,
        names,
        star,
    })
}

fn load_ext_records(view: &CellView, mode: ParseMode) -> Vec<ImportRecord> {
    let mut out = Vec::new();
    for m in &view.magics {
        let mut parts = m.text.split_whitespace();
        if parts.next() == Some("%load_ext") {
            for name in parts {
                out.push(ImportRecord::new(
                    view.cell_index,
                    m.line,
                    name,
                    ImportForm::LoadExt,
                    mode,
                ));
            }
        }
    }
    out
}

fn records_from_tokens(
    tokens: &[Token],
    mode: ParseMode,
    locate: impl Fn(usize) -> Option<(usize, usize)>,
) -> Vec<ImportRecord> {
    let mut out = Vec::new();
    for stmt in parse_import_statements(tokens) {
        let Some((cell, line)) = locate(stmt.start.0) else {
            continue;
        };
        let form = if stmt.from {
            ImportForm::FromImport
        } else {
            ImportForm::PlainImport
        };
        for m in stmt.modules() {
            out.push(ImportRecord::new(cell, line, &m, form, mode));
        }
    }
    out
}

/// Line-level recovery for cells that do not tokenize: matches statements
/// that start a physical line.
pub fn scan_import_lines(cell_index: usize, code: &str) -> Vec<ImportRecord> {
    use std::sync::OnceLock;
    static PLAIN: OnceLock<regex::Regex> = OnceLock::new();
    static FROM: OnceLock<regex::Regex> = OnceLock::new();
    let plain = PLAIN.get_or_init(|| {
        regex::Regex::new(r"^\s*import\s+([\w.]+(?:\s+as\s+\w+)?(?:\s*,\s*[\w.]+(?:\s+as\s+\w+)?)*)").unwrap()
    });
    let from = FROM.get_or_init(|| regex::Regex::new(r"^\s*from\s+([\w][\w.]*)\s+import\b").unwrap());
    let mut out = Vec::new();
    for (n, line) in code.lines().enumerate() {
        if let Some(c) = plain.captures(line) {
            for part in c[1].split(',') {
                let module = part.split_whitespace().next().unwrap_or("");
                if !module.is_empty() {
                    out.push(ImportRecord::new(
                        cell_index,
                        n + 1,
                        module,
                        ImportForm::PlainImport,
                        ParseMode::Fallback,
                    ));
                }
            }
        } else if let Some(c) = from.captures(line) {
            out.push(ImportRecord::new(
                cell_index,
                n + 1,
                &c[1],
                ImportForm::FromImport,
                ParseMode::Fallback,
            ));
        }
    }
    out
}

/// Imports of one cell read on its own.
pub fn extract_cell_imports(view: &CellView) -> Vec<ImportRecord> {
    if view.skipped {
        return load_ext_records(view, ParseMode::PerCell);
    }
    let ts = tokenize(&view.code);
    let mut out = if ts.error.is_none() {
        let mut r = records_from_tokens(&ts.tokens, ParseMode::PerCell, |row| Some((view.cell_index, row)));
        r.extend(load_ext_records(view, ParseMode::PerCell));
        r
    } else {
        let mut r = scan_import_lines(view.cell_index, &view.code);
        r.extend(load_ext_records(view, ParseMode::Fallback));
        r
    };
    out.sort_by_key(|r| r.line);
    out
}

/// Imports of a notebook's code cells, in cell and line order. Locality is
/// left `Unresolved`; see [`classify_import_locality`].
pub fn extract_imports(notebook_id: i64, cells: &[CellRecord]) -> Vec<ImportRecord> {
    extract_imports_from_views(notebook_id, &code_views(cells))
}

pub fn extract_imports_from_views(notebook_id: i64, views: &[CellView]) -> Vec<ImportRecord> {
    let assembled = Assembled::new(views);
    let ts = tokenize(&assembled.text);
    let mut out = if ts.error.is_none() {
        let mut r = records_from_tokens(&ts.tokens, ParseMode::Joint, |row| assembled.locate(row));
        for v in views {
            r.extend(load_ext_records(v, ParseMode::Joint));
        }
        r
    } else {
        views.iter().flat_map(extract_cell_imports).collect()
    };
    out.sort_by_key(|r| (r.cell_index, r.line));
    for r in &mut out {
        r.notebook_id = notebook_id;
    }
    out
}

/// `local` when `<top_level>.py` or `<top_level>/__init__.py` exists in the
/// notebook's directory or any ancestor up to the repository root.
pub fn classify_import_locality(record: &ImportRecord, repo_root: Option<&Path>, notebook_path: &str) -> Locality {
    let Some(root) = repo_root.filter(|r| r.is_dir()) else {
        return Locality::Unresolved;
    };
    let top = &record.top_level;
    let mut dir = Path::new(notebook_path)
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    loop {
        let base = root.join(&dir);
        if base.join(format!("{top}.py")).is_file() || base.join(top).join("__init__.py").is_file() {
            return Locality::Local;
        }
        if !dir.pop() {
            return Locality::External;
        }
    }
}

/// Shorthand for the tokenized view of a text plus its physical lines.
pub fn tokens_and_lines(text: &str) -> (Vec<Token>, Vec<&str>, bool) {
    let ts = tokenize(text);
    (ts.tokens, split_lines_keepends(text), ts.error.is_none())
}
