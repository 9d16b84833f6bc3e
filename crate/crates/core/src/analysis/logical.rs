//! Grouping of tokens into logical lines, following the conventions of the
//! `flake8` processor: a logical line ends at NEWLINE, or at NL outside
//! brackets when it is not the only token collected so far.

use super::tokenize::{TokKind, Token};

#[derive(Debug, Clone)]
pub struct LogicalLine {
    /// All tokens of the line, including comments, NL, INDENT and DEDENT.
    pub tokens: Vec<Token>,
    /// Code text with strings muted and comments removed.
    pub text: String,
    /// `(offset after token, end position)`; the first entry is `(0, start)`.
    pub mapping: Vec<(usize, (usize, usize))>,
    pub indent_level: usize,
}

impl LogicalLine {
    /// Physical position (row, 0-based column) of a character offset.
    pub fn position(&self, offset: usize) -> (usize, usize) {
        for &(token_offset, pos) in &self.mapping {
            if offset <= token_offset {
                return (pos.0, (pos.1 + offset).saturating_sub(token_offset));
            }
        }
        (0, 0)
    }
}

fn is_skip(kind: TokKind) -> bool {
    matches!(kind, TokKind::Nl | TokKind::Newline | TokKind::Indent | TokKind::Dedent)
}

pub fn expand_indent(line: &str) -> usize {
    let line = line.trim_end_matches(['\n', '\r']);
    if !line.contains('\t') {
        return line.chars().count() - line.trim_start().chars().count();
    }
    let mut result = 0;
    for c in line.chars() {
        match c {
            '\t' => result = result / 8 * 8 + 8,
            ' ' => result += 1,
            _ => break,
        }
    }
    result
}

pub fn mute_string(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let Some(&last) = chars.last() else {
        return String::new();
    };
    let mut start = chars.iter().position(|&c| c == last).unwrap() + 1;
    let mut end = chars.len() - 1;
    let tail: String = chars[chars.len().saturating_sub(3)..].iter().collect();
    if tail == "\"\"\"" || tail == "'''" {
        start += 2;
        end -= 2;
    }
    if end <= start {
        return text.to_string();
    }
    let mut out: String = chars[..start].iter().collect();
    out.extend(std::iter::repeat_n('x', end - start));
    out.extend(chars[end..].iter());
    out
}

fn char_at(lines: &[Vec<char>], row: usize, col: usize) -> Option<char> {
    lines.get(row.checked_sub(1)?)?.get(col.checked_sub(1)?).copied()
}

fn slice_chars(s: &str, from: usize, to: usize) -> String {
    s.chars().skip(from).take(to.saturating_sub(from)).collect()
}

fn build(tokens: Vec<Token>, lines: &[Vec<char>]) -> Option<LogicalLine> {
    let mut text = String::new();
    let mut length = 0usize;
    let mut mapping: Vec<(usize, (usize, usize))> = Vec::new();
    let mut prev: Option<(usize, usize)> = None;
    for tok in &tokens {
        if is_skip(tok.kind) {
            continue;
        }
        if mapping.is_empty() {
            mapping.push((0, tok.start));
        }
        if tok.kind == TokKind::Comment {
            continue;
        }
        let mut piece = if tok.kind == TokKind::String {
            mute_string(&tok.text)
        } else {
            tok.text.clone()
        };
        if let Some((prow, pcol)) = prev {
            let (srow, scol) = tok.start;
            if prow != srow {
                let ptext = char_at(lines, prow, pcol).map(String::from).unwrap_or_default();
                if ptext == "," || (!"{[(".contains(ptext.as_str()) && !"}])".contains(piece.as_str())) {
                    piece.insert(0, ' ');
                }
            } else if pcol != scol {
                piece = slice_chars(&tok.line, pcol, scol) + &piece;
            }
        }
        length += piece.chars().count();
        text.push_str(&piece);
        mapping.push((length, tok.end));
        prev = Some(tok.end);
    }
    if mapping.is_empty() {
        return None;
    }
    let (row, col) = mapping[0].1;
    let start_line: String = lines
        .get(row.wrapping_sub(1))
        .map(|l| l[..col.min(l.len())].iter().collect())
        .unwrap_or_default();
    Some(LogicalLine {
        tokens,
        text,
        mapping,
        indent_level: expand_indent(&start_line),
    })
}

/// Splits a token stream into logical lines. `source_lines` are the
/// physical lines of the tokenized text.
pub fn logical_lines(tokens: &[Token], source_lines: &[&str]) -> Vec<LogicalLine> {
    let lines: Vec<Vec<char>> = source_lines.iter().map(|l| l.chars().collect()).collect();
    let total = lines.len();
    let mut out = Vec::new();
    let mut current: Vec<Token> = Vec::new();
    let mut parens: i64 = 0;
    for tok in tokens {
        if tok.start.0 > total {
            break;
        }
        current.push(tok.clone());
        if tok.kind == TokKind::Op {
            if "([{".contains(tok.text.as_str()) {
                parens += 1;
            } else if "}])".contains(tok.text.as_str()) {
                parens -= 1;
            }
        } else if parens == 0 {
            match tok.kind {
                TokKind::Newline => {
                    out.extend(build(std::mem::take(&mut current), &lines));
                }
                TokKind::Nl if current.len() == 1 => current.clear(),
                TokKind::Nl => out.extend(build(std::mem::take(&mut current), &lines)),
                _ => {}
            }
        }
    }
    if !current.is_empty() {
        out.extend(build(current, &lines));
    }
    out
}
