//! Style checking restricted to a fixed code subset, reproducing the
//! positions reported by pycodestyle/pyflakes as run through flake8 over
//! the concatenated code cells of a notebook.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::cells::{code_views, Assembled, CellView};
use super::imports::parse_import_statements;
use super::logical::{logical_lines, LogicalLine};
use super::python::{is_builtin, is_keyword, SOFT_KEYWORDS};
use super::tokenize::{split_lines_keepends, tokenize, Pos, TokKind, Token};
use crate::inventory::CellRecord;

pub const STYLE_CODES: &[(&str, &str)] = &[
    ("E225", "missing whitespace around operator"),
    ("E231", "missing whitespace after commas, semicolons or colons"),
    ("E262", "inline comment should start with '#'"),
    ("E265", "block comment should start with '#'"),
    ("E401", "multiple imports on one line"),
    ("E402", "module level import not at top of file"),
    ("E701", "multiple statements on one line"),
    ("E703", "statement ends with a semicolon"),
    ("E741", "do not use variables named 'l', 'O', or 'I'"),
    ("F401", "module imported but unused"),
    ("F403", "'from module import *' used; unable to detect undefined names"),
];

pub fn description(code: &str) -> Option<&'static str> {
    STYLE_CODES.iter().find(|(c, _)| *c == code).map(|(_, d)| *d)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StyleFinding {
    pub notebook_id: i64,
    pub cell_index: usize,
    /// 1-based line within the cell.
    pub line: usize,
    /// 1-based column.
    pub column: usize,
    pub code: String,
    pub description: String,
}

/// A finding against a plain module: 1-based row and column.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RawFinding {
    pub row: usize,
    pub column: usize,
    pub code: &'static str,
}

enum At {
    Offset(usize),
    Pos(Pos),
}

const WHITESPACE: [char; 3] = [' ', '\t', '\u{a0}'];

// `a in 'xyz'` for Python strings
fn py_in(needle: &str, hay: &str) -> bool {
    hay.contains(needle)
}

fn is_skip_comment(kind: TokKind) -> bool {
    matches!(
        kind,
        TokKind::Nl | TokKind::Newline | TokKind::Indent | TokKind::Dedent | TokKind::Comment | TokKind::ErrorToken
    )
}

const WS_NEEDED: &[&str] = &[
    "**=", "*=", "/=", "//=", "+=", "-=", "!=", "<", ">", "%=", "^=", "&=", "|=", "==", "<=", ">=", "<<=", ">>=", "=",
    "and", "in", "is", "or", "->", ":=",
];
const UNARY: &[&str] = &[">>", "**", "*", "+", "-"];
const WS_OPTIONAL: &[&str] = &["**", "*", "/", "//", "+", "-", "@", "^", "&", "|", "<<", ">>", "%"];

fn is_pycodestyle_keyword(s: &str) -> bool {
    (is_keyword(s) || s == "print") && !matches!(s, "False" | "None" | "True")
}

fn char_at(s: &str, i: usize) -> Option<char> {
    s.chars().nth(i)
}

#[derive(Clone, Copy, PartialEq)]
enum NeedSpace {
    No,
    Yes,
    Optional(Pos, bool),
}

fn missing_whitespace(tokens: &[Token], out: &mut Vec<(At, &'static str)>) {
    let mut need_space = NeedSpace::No;
    let mut prev_type = TokKind::Op;
    let mut prev_text = String::new();
    let mut prev_end: Option<Pos> = None;
    let mut brace_stack: Vec<char> = Vec::new();
    for t in tokens {
        let text = t.text.as_str();
        if t.kind == TokKind::Op && matches!(text, "[" | "(" | "{") {
            brace_stack.push(text.chars().next().unwrap());
        } else if t.kind == TokKind::Name && text == "lambda" {
            brace_stack.push('l');
        } else if !brace_stack.is_empty() {
            let closes = t.kind == TokKind::Op && matches!(text, "]" | ")" | "}");
            let ends_lambda = brace_stack.last() == Some(&'l') && t.kind == TokKind::Op && text == ":";
            if closes || ends_lambda {
                brace_stack.pop();
            }
        }

        if is_skip_comment(t.kind) {
            continue;
        }

        if t.kind == TokKind::Op && matches!(text, "," | ";" | ":") {
            if let Some(next) = char_at(&t.line, t.end.1) {
                if !WHITESPACE.contains(&next) && next != '\r' && next != '\n' {
                    let slice = text == ":" && brace_stack.last() == Some(&'[');
                    let tuple = text == "," && (next == ')' || next == ']');
                    if !slice && !tuple {
                        out.push((At::Pos(t.start), "E231"));
                    }
                }
            }
        }

        if need_space != NeedSpace::No {
            if Some(t.start) != prev_end {
                if let NeedSpace::Optional(p, false) = need_space {
                    out.push((At::Pos(p), "E225"));
                }
                need_space = NeedSpace::No;
            } else if (prev_text == "/" && matches!(text, "," | ")" | ":")) || (prev_text == ")" && text == ":") {
            } else {
                if matches!(need_space, NeedSpace::Yes | NeedSpace::Optional(_, true)) {
                    out.push((At::Pos(prev_end.unwrap()), "E225"));
                }
                need_space = NeedSpace::No;
            }
        } else if matches!(t.kind, TokKind::Op | TokKind::Name) && prev_end.is_some() {
            let mut optional = false;
            if text == "=" && matches!(brace_stack.last(), Some('l') | Some('(')) {
            } else if WS_NEEDED.contains(&text) {
                need_space = NeedSpace::Yes;
            } else if UNARY.contains(&text) {
                if (prev_type == TokKind::Op && py_in(&prev_text, "}])"))
                    || (prev_type != TokKind::Op
                        && !is_pycodestyle_keyword(&prev_text)
                        && !SOFT_KEYWORDS.contains(&prev_text.as_str()))
                {
                    optional = true;
                }
            } else if WS_OPTIONAL.contains(&text) {
                optional = true;
            }
            if optional {
                let pe = prev_end.unwrap();
                need_space = NeedSpace::Optional(pe, t.start != pe);
            } else if need_space == NeedSpace::Yes && Some(t.start) == prev_end {
                out.push((At::Pos(prev_end.unwrap()), "E225"));
                need_space = NeedSpace::No;
            }
        }
        prev_type = t.kind;
        prev_text = text.to_string();
        prev_end = Some(t.end);
    }
}

fn whitespace_before_comment(tokens: &[Token], out: &mut Vec<(At, &'static str)>) {
    for t in tokens {
        if t.kind != TokKind::Comment {
            continue;
        }
        let before: String = t.line.chars().take(t.start.1).collect();
        let inline = !before.trim().is_empty();
        let (symbol, comment) = match t.text.split_once(' ') {
            Some((s, c)) => (s, c),
            None => (t.text.as_str(), ""),
        };
        let bad_prefix: Option<char> = if py_in(symbol, "#:") {
            None
        } else {
            Some(symbol.trim_start_matches('#').chars().next().unwrap_or('#'))
        };
        if inline {
            if bad_prefix.is_some() || comment.chars().next().is_some_and(|c| WHITESPACE.contains(&c)) {
                out.push((At::Pos(t.start), "E262"));
            }
        } else if let Some(bp) = bad_prefix {
            if (bp != '!' || t.start.0 > 1) && bp != '#' {
                out.push((At::Pos(t.start), "E265"));
            }
        }
    }
}

fn imports_on_separate_lines(text: &[char], line: &str, out: &mut Vec<(At, &'static str)>) {
    if line.starts_with("import ") {
        if let Some(found) = text.iter().position(|&c| c == ',') {
            if !text[..found].contains(&';') {
                out.push((At::Offset(found), "E401"));
            }
        }
    }
}

#[derive(Default)]
struct TopOfFile {
    seen_non_imports: bool,
    seen_docstring: bool,
}

fn dunder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"^__([^\s]+)__(?::\s*[a-zA-Z.0-9_\[\]"]+)? = "#).unwrap())
}

fn is_string_literal(line: &[char]) -> bool {
    let Some(&first) = line.first() else {
        return false;
    };
    let first = if "uUbBrR".contains(first) {
        line.get(1).copied().unwrap_or(' ')
    } else {
        first
    };
    first == '"' || first == '\''
}

fn module_imports_on_top(state: &mut TopOfFile, l: &LogicalLine, text: &[char], out: &mut Vec<(At, &'static str)>) {
    let line = l.text.as_str();
    if l.indent_level > 0 || line.is_empty() {
        return;
    }
    if ["import ", "from ", "lazy import ", "lazy from "]
        .iter()
        .any(|p| line.starts_with(p))
    {
        if state.seen_non_imports {
            out.push((At::Offset(0), "E402"));
        }
    } else if !state.seen_non_imports {
        if dunder_regex().is_match(line) {
            return;
        }
        if ["try", "except", "else", "finally", "with", "if", "elif"]
            .iter()
            .any(|p| line.starts_with(p))
        {
            return;
        }
        if is_string_literal(text) {
            if state.seen_docstring {
                state.seen_non_imports = true;
            } else {
                state.seen_docstring = true;
            }
        } else {
            state.seen_non_imports = true;
        }
    }
}

fn compound_regexes() -> &'static (Regex, Regex, Regex) {
    static RE: OnceLock<(Regex, Regex, Regex)> = OnceLock::new();
    RE.get_or_init(|| {
        let stmts = [
            "def",
            "async def",
            "for",
            "async for",
            "if",
            "elif",
            "else",
            "try",
            "except",
            "finally",
            "with",
            "async with",
            "class",
            "while",
        ]
        .iter()
        .map(|s| s.replace(' ', r"\s+"))
        .collect::<Vec<_>>()
        .join("|");
        (
            Regex::new(r"\blambda\b").unwrap(),
            Regex::new(r"^(async\s+def|def)\b").unwrap(),
            Regex::new(&format!(r"^\s*({stmts})\b")).unwrap(),
        )
    })
}

fn compound_statements(text: &[char], line: &str, out: &mut Vec<(At, &'static str)>) {
    let (lambda, starts_def, starts_indent) = compound_regexes();
    let n = text.len();
    if n == 0 {
        return;
    }
    let last_char = n - 1;
    let find = |c: char, from: usize| text.iter().skip(from).position(|&x| x == c).map(|p| p + from);
    let mut found = find(':', 0);
    let mut prev_found = 0;
    let mut counts: HashMap<char, i64> = "{}[]()".chars().map(|c| (c, 0)).collect();
    while let Some(f) = found.filter(|&f| f < last_char) {
        for c in &text[prev_found..f] {
            if let Some(v) = counts.get_mut(c) {
                *v += 1;
            }
        }
        if counts[&'{'] <= counts[&'}']
            && counts[&'['] <= counts[&']']
            && counts[&'('] <= counts[&')']
            && text[f + 1] != '='
        {
            let head: String = text[..f].iter().collect();
            if lambda.is_match(&head) {
                break;
            }
            if starts_def.is_match(line) {
            } else if starts_indent.is_match(line) {
                out.push((At::Offset(f), "E701"));
            }
        }
        prev_found = f;
        found = find(':', f + 1);
    }
    let mut found = find(';', 0);
    while let Some(f) = found {
        if f >= last_char {
            out.push((At::Offset(f), "E703"));
        }
        found = find(';', f + 1);
    }
}

fn ambiguous_identifier(tokens: &[Token], out: &mut Vec<(At, &'static str)>) {
    const AVOID: [&str; 3] = ["l", "O", "I"];
    let mut func_depth: Option<i64> = None;
    let mut seen_colon = false;
    let mut brace_depth = 0i64;
    let mut prev_text = tokens[0].text.as_str();
    let mut prev_start = tokens[0].start;
    for index in 1..tokens.len() {
        let t = &tokens[index];
        let text = t.text.as_str();
        let mut ident: Option<Pos> = None;
        if prev_text == "def" || prev_text == "lambda" {
            func_depth = Some(brace_depth);
            seen_colon = false;
        } else if func_depth.is_some() && text == ":" && Some(brace_depth) == func_depth {
            seen_colon = true;
        }
        if py_in(text, "([{") {
            brace_depth += 1;
        } else if py_in(text, ")]}") {
            brace_depth -= 1;
        }
        if (text == ":=" || (text == "=" && brace_depth == 0)) && AVOID.contains(&prev_text) {
            ident = Some(prev_start);
        }
        if matches!(prev_text, "as" | "for" | "global" | "nonlocal") && AVOID.contains(&text) {
            ident = Some(t.start);
        }
        if func_depth.is_some()
            && !seen_colon
            && index < tokens.len() - 1
            && py_in(&tokens[index + 1].text, ":,=)")
            && matches!(prev_text, "lambda" | "," | "*" | "**" | "(")
            && AVOID.contains(&text)
        {
            ident = Some(t.start);
        }
        if let Some(p) = ident {
            out.push((At::Pos(p), "E741"));
        }
        prev_text = text;
        prev_start = t.start;
    }
}

fn noqa_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)#\s*noqa(?::[\s]?(?P<codes>[A-Z][0-9]+(?:[,\s]+)?)+)?").unwrap())
}

fn file_noqa_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)#\s*flake8[:=]\s*noqa\s*$").unwrap())
}

fn suppressed(line: &str, code: &str) -> bool {
    let Some(c) = noqa_regex().captures(line) else {
        return false;
    };
    match c.name("codes") {
        None => true,
        Some(_) => {
            let whole = c.get(0).unwrap().as_str();
            let codes = whole.split_once(':').map(|(_, r)| r).unwrap_or("");
            codes
                .split(|ch: char| ch == ',' || ch.is_whitespace())
                .filter(|s| !s.is_empty())
                .any(|s| code.starts_with(&s.to_ascii_uppercase()))
        }
    }
}

/// Names bound anywhere in the module, used to decide whether a name could
/// only come from a star import.
fn bound_names(tokens: &[Token], in_import: &[bool]) -> HashSet<String> {
    let mut bound = HashSet::new();
    let sig: Vec<usize> = (0..tokens.len())
        .filter(|&i| !in_import[i] && !matches!(tokens[i].kind, TokKind::Comment | TokKind::Nl))
        .collect();
    let text = |k: usize| sig.get(k).map(|&i| tokens[i].text.as_str()).unwrap_or("");
    let is_name = |k: usize| {
        sig.get(k)
            .is_some_and(|&i| tokens[i].kind == TokKind::Name && !is_keyword(&tokens[i].text))
    };
    let mut stmt_start = 0;
    for k in 0..sig.len() {
        let kind = tokens[sig[k]].kind;
        if matches!(kind, TokKind::Newline | TokKind::Indent | TokKind::Dedent) || text(k) == ";" {
            stmt_start = k + 1;
            continue;
        }
        if !is_name(k) {
            continue;
        }
        let name = text(k).to_string();
        let prev = if k > 0 { text(k - 1) } else { "" };
        let next = text(k + 1);
        let binds = matches!(prev, "def" | "class" | "as" | "global" | "nonlocal")
            || next == ":="
            || matches!(
                next,
                "=" | "+=" | "-=" | "*=" | "/=" | "//=" | "%=" | "**=" | "|=" | "&=" | "^=" | ">>=" | "<<=" | "@="
            ) && depth_between(&sig, tokens, stmt_start, k) == 0
            || (next == ":" && k == stmt_start)
            || in_target_list(&sig, tokens, stmt_start, k)
            || in_params(&sig, tokens, k);
        if binds {
            bound.insert(name);
        }
    }
    bound
}

fn depth_between(sig: &[usize], tokens: &[Token], from: usize, to: usize) -> i32 {
    let mut d = 0;
    for &i in &sig[from..to] {
        match tokens[i].text.as_str() {
            "(" | "[" | "{" if tokens[i].kind == TokKind::Op => d += 1,
            ")" | "]" | "}" if tokens[i].kind == TokKind::Op => d -= 1,
            _ => {}
        }
    }
    d
}

// `a, b = ...` and `for a, b in ...` targets
fn in_target_list(sig: &[usize], tokens: &[Token], stmt_start: usize, k: usize) -> bool {
    let t = |j: usize| tokens[sig[j]].text.as_str();
    let mut j = k;
    while j > stmt_start {
        match t(j - 1) {
            "," | "(" | "[" | "*" => j -= 1,
            "for" => return true,
            _ => {
                if tokens[sig[j - 1]].kind == TokKind::Name && !is_keyword(t(j - 1)) {
                    j -= 1;
                } else {
                    break;
                }
            }
        }
    }
    let mut depth = 0;
    for j in k + 1..sig.len() {
        let tok = &tokens[sig[j]];
        if matches!(tok.kind, TokKind::Newline) {
            return false;
        }
        match tok.text.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => depth -= 1,
            "=" if depth <= 0 => return j > k + 1,
            "in" if depth <= 0 => return false,
            ";" => return false,
            "," | "*" => {}
            _ if tok.kind == TokKind::Name => {}
            _ => return false,
        }
    }
    false
}

// parameters of `def` and `lambda`
fn in_params(sig: &[usize], tokens: &[Token], k: usize) -> bool {
    let t = |j: usize| tokens[sig[j]].text.as_str();
    let prev = if k > 0 { t(k - 1) } else { "" };
    if !matches!(prev, "(" | "," | "*" | "**" | "lambda") {
        return false;
    }
    let mut depth = 0i32;
    let mut j = k;
    while j > 0 {
        j -= 1;
        match t(j) {
            ")" | "]" | "}" => depth += 1,
            "(" | "[" | "{" => {
                if depth == 0 {
                    return j >= 2 && t(j - 2) == "def";
                }
                depth -= 1;
            }
            "lambda" if depth == 0 => return true,
            ":" | "=" if depth == 0 => return false,
            _ => {}
        }
        if matches!(tokens[sig[j]].kind, TokKind::Newline) {
            return false;
        }
    }
    false
}

fn is_fstring(text: &str) -> bool {
    let prefix: String = text.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    prefix.contains(['f', 'F'])
}

fn names_in_expression(expr: &str) -> Vec<String> {
    tokenize(expr)
        .tokens
        .into_iter()
        .filter(|t| t.kind == TokKind::Name)
        .map(|t| t.text)
        .collect()
}

// identifiers inside the replacement fields of an f-string
fn fstring_names(text: &str) -> Vec<String> {
    let body: Vec<char> = text.chars().skip_while(|c| c.is_ascii_alphabetic()).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < body.len() {
        if body[i] == '{' {
            if body.get(i + 1) == Some(&'{') {
                i += 2;
                continue;
            }
            let mut depth = 1;
            let mut j = i + 1;
            while j < body.len() && depth > 0 {
                match body[j] {
                    '{' => depth += 1,
                    '}' => depth -= 1,
                    _ => {}
                }
                j += 1;
            }
            let expr: String = body[i + 1..j.saturating_sub(1).max(i + 1)].iter().collect();
            let expr = expr.split(['!', ':']).next().unwrap_or("").trim_end_matches('=');
            out.extend(names_in_expression(expr));
            i = j;
        } else {
            i += 1;
        }
    }
    out
}

// identifiers of a string annotation such as `'np.ndarray'`
fn string_names(text: &str) -> Vec<String> {
    let body = text
        .trim_start_matches(|c: char| c.is_ascii_alphabetic())
        .trim_matches(|c| c == '\'' || c == '"');
    if body.chars().all(|c| c.is_alphanumeric() || "_.[], ".contains(c)) {
        names_in_expression(body)
    } else {
        Vec::new()
    }
}

fn unused_imports(tokens: &[Token]) -> Vec<RawFinding> {
    let stmts = parse_import_statements(tokens);
    let mut in_import = vec![false; tokens.len()];
    for s in &stmts {
        for flag in &mut in_import[s.tokens.0..s.tokens.1] {
            *flag = true;
        }
    }
    let mut used: HashSet<String> = HashSet::new();
    let mut exported: Vec<String> = Vec::new();
    let mut in_all = false;
    let mut prev: Option<&Token> = None;
    for (i, t) in tokens.iter().enumerate() {
        if !in_import[i] && t.kind == TokKind::Name {
            used.insert(t.text.clone());
        }
        if t.kind == TokKind::String {
            let after_annotation_op = prev.is_some_and(|p| p.kind == TokKind::Op && (p.text == "->" || p.text == ":"));
            if is_fstring(&t.text) {
                used.extend(fstring_names(&t.text));
            } else if after_annotation_op {
                used.extend(string_names(&t.text));
            }
        }
        // names exported through `__all__` count as used
        if t.kind == TokKind::Name
            && t.text == "__all__"
            && t.start.1 == 0
            && !prev.is_some_and(|p| p.kind == TokKind::Op)
        {
            in_all = true;
        } else if t.kind == TokKind::Newline {
            in_all = false;
        } else if in_all && t.kind == TokKind::String {
            let body = t.text.trim_matches(|c| c == '\'' || c == '"').to_string();
            used.insert(body.clone());
            exported.push(body);
        }
        if !matches!(t.kind, TokKind::Nl | TokKind::Comment) {
            prev = Some(t);
        }
    }
    let mut out = Vec::new();
    let mut last: HashMap<String, Pos> = HashMap::new();
    for s in &stmts {
        if s.from && s.module == "__future__" && s.level == 0 {
            continue;
        }
        for b in s.bindings() {
            last.insert(b, s.start);
        }
    }
    for (name, pos) in &last {
        if !used.contains(name) {
            out.push(RawFinding {
                row: pos.0,
                column: pos.1 + 1,
                code: "F401",
            });
        }
    }

    let stars: Vec<&super::imports::ImportStmt> = stmts.iter().filter(|s| s.star).collect();
    if !stars.is_empty() {
        let bound = bound_names(tokens, &in_import);
        let bound_by_import: HashSet<String> = stmts.iter().flat_map(|s| s.bindings()).collect();
        let mut brace: Vec<&str> = Vec::new();
        let mut free_positions: Vec<Pos> = Vec::new();
        for (i, t) in tokens.iter().enumerate() {
            if t.kind == TokKind::Op {
                match t.text.as_str() {
                    "(" | "[" | "{" => brace.push(if t.text == "(" { "(" } else { "[" }),
                    ")" | "]" | "}" => {
                        brace.pop();
                    }
                    _ => {}
                }
            }
            if in_import[i] || t.kind != TokKind::Name {
                continue;
            }
            let name = t.text.as_str();
            if is_keyword(name) || is_builtin(name) || bound.contains(name) || bound_by_import.contains(name) {
                continue;
            }
            let prev = tokens[..i]
                .iter()
                .rev()
                .find(|p| !matches!(p.kind, TokKind::Nl | TokKind::Comment));
            if prev.is_some_and(|p| p.kind == TokKind::Op && p.text == ".") {
                continue;
            }
            let next = tokens[i + 1..]
                .iter()
                .find(|p| !matches!(p.kind, TokKind::Nl | TokKind::Comment));
            if brace.last() == Some(&"(") && next.is_some_and(|p| p.kind == TokKind::Op && p.text == "=") {
                continue;
            }
            free_positions.push(t.start);
        }
        // an exported name nothing defines must come from a star import
        let export_from_star = exported
            .iter()
            .any(|n| !bound.contains(n) && !bound_by_import.contains(n) && !is_builtin(n));
        for s in stars {
            out.push(RawFinding {
                row: s.start.0,
                column: s.start.1 + 1,
                code: "F403",
            });
            if s.level == 0 && s.module == "__future__" {
                continue;
            }
            if !export_from_star && !free_positions.iter().any(|p| *p > s.start) {
                out.push(RawFinding {
                    row: s.start.0,
                    column: s.start.1 + 1,
                    code: "F401",
                });
            }
        }
    }
    out
}

/// Checks a Python module. Returns nothing when the text does not tokenize,
/// since the reference linter then reports only a syntax error.
pub fn check_module(text: &str) -> Vec<RawFinding> {
    let ts = tokenize(text);
    if ts.error.is_some() {
        return Vec::new();
    }
    let lines = split_lines_keepends(text);
    if lines.iter().any(|l| file_noqa_regex().is_match(l)) {
        return Vec::new();
    }
    let mut raw: Vec<(Pos, &'static str)> = Vec::new();
    let mut state = TopOfFile::default();
    for l in logical_lines(&ts.tokens, &lines) {
        let chars: Vec<char> = l.text.chars().collect();
        let mut found: Vec<(At, &'static str)> = Vec::new();
        ambiguous_identifier(&l.tokens, &mut found);
        compound_statements(&chars, &l.text, &mut found);
        imports_on_separate_lines(&chars, &l.text, &mut found);
        missing_whitespace(&l.tokens, &mut found);
        module_imports_on_top(&mut state, &l, &chars, &mut found);
        whitespace_before_comment(&l.tokens, &mut found);
        for (at, code) in found {
            let pos = match at {
                At::Pos(p) => p,
                At::Offset(o) => l.position(o),
            };
            raw.push((pos, code));
        }
    }
    let mut out: Vec<RawFinding> = raw
        .into_iter()
        .map(|((row, col), code)| RawFinding {
            row,
            column: col + 1,
            code,
        })
        .collect();
    out.extend(unused_imports(&ts.tokens));
    out.retain(|f| {
        !lines
            .get(f.row.wrapping_sub(1))
            .is_some_and(|line| suppressed(line, f.code))
    });
    out.sort();
    out
}

/// Style findings for the code cells of a notebook, ordered by cell, line
/// and column.
pub fn style_check(notebook_id: i64, cells: &[CellRecord]) -> Vec<StyleFinding> {
    style_check_views(notebook_id, &code_views(cells))
}

pub fn style_check_views(notebook_id: i64, views: &[CellView]) -> Vec<StyleFinding> {
    let assembled = Assembled::new(views);
    let mut out: Vec<StyleFinding> = check_module(&assembled.text)
        .into_iter()
        .filter_map(|f| {
            let (cell_index, line) = assembled.locate(f.row)?;
            Some(StyleFinding {
                notebook_id,
                cell_index,
                line,
                column: f.column,
                code: f.code.to_string(),
                description: description(f.code)?.to_string(),
            })
        })
        .collect();
    out.sort_by(|a, b| (a.cell_index, a.line, a.column, &a.code).cmp(&(b.cell_index, b.line, b.column, &b.code)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codes(src: &str) -> Vec<(usize, usize, &'static str)> {
        check_module(src)
            .into_iter()
            .map(|f| (f.row, f.column, f.code))
            .collect()
    }

    #[test]
    fn operator_and_comma_whitespace() {
        assert_eq!(codes("x=1\n"), vec![(1, 2, "E225")]);
        assert_eq!(codes("f(a,b)\n"), vec![(1, 4, "E231")]);
        assert!(codes("f(a, b=1)\nx = y[1:2]\nt = (1,)\n").is_empty());
        assert!(codes("y = -1\nz = x**-y\nw = a if b else-1\n").is_empty());
        assert_eq!(codes("a = b==c\n"), vec![(1, 6, "E225")]);
    }

    #[test]
    fn comments() {
        assert_eq!(codes("#bad\n"), vec![(1, 1, "E265")]);
        assert_eq!(codes("y = 2 #bad\n"), vec![(1, 7, "E262")]);
        assert_eq!(codes("y = 2  #  spaced\n"), vec![(1, 8, "E262")]);
        assert!(codes("#!shebang\n# fine\n#: fine\ny = 2  # fine\n").is_empty());
    }

    #[test]
    fn imports() {
        let c = codes("import os, sys\n");
        assert!(c.contains(&(1, 10, "E401")));
        assert_eq!(c.iter().filter(|f| f.2 == "F401").count(), 2);
        assert_eq!(codes("x = 1\nimport os\nos.getcwd()\n"), vec![(2, 1, "E402")]);
        assert!(codes(
            "\"\"\"doc\"\"\"\n__all__ = []\ntry:\n    import a\nexcept ImportError:\n    a = None\nimport b\nb, a\n"
        )
        .is_empty());
    }

    #[test]
    fn unused_import_reported_at_last_binding() {
        assert_eq!(codes("import os\nimport os\n"), vec![(2, 1, "F401")]);
        assert!(codes("import numpy as np\nnp.zeros(1)\n").is_empty());
        assert_eq!(codes("from a import b as c\nb\n"), vec![(1, 1, "F401")]);
        assert!(codes("from __future__ import annotations\n").is_empty());
    }

    #[test]
    fn star_imports() {
        assert_eq!(codes("from math import *\nx = sqrt(2)\n"), vec![(1, 1, "F403")]);
        assert_eq!(
            codes("from math import *\nx = 2\nprint(x)\n"),
            vec![(1, 1, "F401"), (1, 1, "F403")]
        );
        assert_eq!(
            codes("from math import *\nfor i in range(3):\n    print(i)\ndef f(a, b=1):\n    return a + b\n"),
            vec![(1, 1, "F401"), (1, 1, "F403")]
        );
    }

    #[test]
    fn compound_statements() {
        assert_eq!(codes("if x: y = 3\n"), vec![(1, 5, "E701")]);
        assert_eq!(codes("z = 4;\n"), vec![(1, 6, "E703")]);
        assert!(codes("d = {'a': 1}\nf = lambda x: x\nz = 1; w = 2\n").is_empty());
    }

    #[test]
    fn ambiguous_identifiers() {
        assert_eq!(codes("l = 1\n"), vec![(1, 1, "E741")]);
        assert_eq!(codes("for I in x:\n    pass\n"), vec![(1, 5, "E741")]);
        assert_eq!(codes("def f(l):\n    return l\n"), vec![(1, 7, "E741")]);
        // two dedents before the assignment hide it from the check
        assert_eq!(
            codes("def f():\n    if x:\n        pass\nl = 1\nI = 2\n"),
            vec![(5, 1, "E741")]
        );
    }

    #[test]
    fn noqa_suppresses() {
        assert!(codes("x=1  # noqa\n").is_empty());
        assert!(codes("x=1  # noqa: E225\n").is_empty());
        assert_eq!(codes("x=1  # noqa: E231\n"), vec![(1, 2, "E225")]);
    }

    #[test]
    fn notebook_positions_are_cell_relative() {
        use super::super::cells::python_view;
        let views = vec![
            python_view(0, "x = 1\n"),
            python_view(1, "%matplotlib inline\nimport os\nos.sep\n"),
        ];
        let f = style_check_views(7, &views);
        assert_eq!(f.len(), 1);
        assert_eq!(
            (f[0].cell_index, f[0].line, f[0].column, f[0].code.as_str()),
            (1, 2, 1, "E402")
        );
        assert_eq!(f[0].description, "module level import not at top of file");
    }

    #[test]
    fn broken_source_yields_nothing() {
        assert!(codes("x=(\n").is_empty());
    }
}
