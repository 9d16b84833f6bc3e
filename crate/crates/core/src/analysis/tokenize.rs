//! A tokenizer for Python source producing the same token stream as the
//! pure-Python `tokenize` module of CPython 3.10 (rows 1-based, columns as
//! 0-based character offsets).

use std::sync::OnceLock;

use regex::Regex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokKind {
    Name,
    Number,
    String,
    Op,
    Comment,
    Nl,
    Newline,
    Indent,
    Dedent,
    EndMarker,
    ErrorToken,
}

pub type Pos = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokKind,
    pub text: String,
    pub start: Pos,
    pub end: Pos,
    /// Physical line(s) the token was read from.
    pub line: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizeError {
    pub message: String,
    pub pos: Pos,
}

/// Tokens produced before any error, plus the error if tokenizing stopped early.
#[derive(Debug, Clone, Default)]
pub struct TokenStream {
    pub tokens: Vec<Token>,
    pub error: Option<TokenizeError>,
}

const TABSIZE: usize = 8;

// Exact operator tokens, longest first within shared prefixes.
const OPERATORS: &[&str] = &[
    "**=", "...", "//=", "<<=", ">>=", "!=", "%=", "&=", "**", "*=", "+=", "-=", "->", "//", "/=", ":=", "<<", "<=",
    "==", ">=", ">>", "@=", "^=", "|=", "%", "&", "(", ")", "*", "+", ",", "-", ".", "/", ":", ";", "<", "=", ">", "@",
    "[", "]", "^", "{", "|", "}", "~",
];

const PREFIX: &str = r"(?:[bB][rR]?|[rR][bBfF]?|[uU]|[fF][rR]?)?";

fn pseudo_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let digitpart = r"[0-9](?:_?[0-9])*";
        let exponent = format!(r"[eE][-+]?{digitpart}");
        let pointfloat = format!(r"(?:{digitpart}\.(?:{digitpart})?|\.{digitpart})(?:{exponent})?");
        let expfloat = format!(r"{digitpart}{exponent}");
        let floatnumber = format!(r"(?:{pointfloat}|{expfloat})");
        let imag = format!(r"(?:{digitpart}[jJ]|{floatnumber}[jJ])");
        let int = r"(?:0[xX](?:_?[0-9a-fA-F])+|0[bB](?:_?[01])+|0[oO](?:_?[0-7])+|(?:0(?:_?0)*|[1-9](?:_?[0-9])*))";
        let number = format!(r"(?:{imag}|{floatnumber}|{int})");
        let ops: Vec<String> = OPERATORS.iter().map(|o| regex::escape(o)).collect();
        let funny = format!(r"(?:\r?\n|{})", ops.join("|"));
        let triple = format!(r#"(?:{PREFIX}'''|{PREFIX}""")"#);
        let extras = format!(r"(?:\\\r?\n|\z|#[^\r\n]*|{triple})");
        let contstr = format!(
            r#"(?:{PREFIX}'[^\n'\\]*(?:\\.[^\n'\\]*)*(?:'|\\\r?\n)|{PREFIX}"[^\n"\\]*(?:\\.[^\n"\\]*)*(?:"|\\\r?\n))"#
        );
        let pattern = format!(r"\A[ \f\t]*({extras}|{number}|{funny}|{contstr}|\w+)");
        Regex::new(&pattern).expect("pseudo-token regex")
    })
}

/// Scans for the closing `quote` of a string body starting at `from`;
/// returns the byte offset just past the closing quote. Mirrors the
/// `endpats` regexes: a backslash escapes the next character, but not a
/// line break.
fn find_string_end(line: &str, from: usize, quote: &str) -> Option<usize> {
    let bytes = line.as_bytes();
    let q = quote.as_bytes();
    let mut i = from;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => {
                let next = *bytes.get(i + 1)?;
                if next == b'\n' || next == b'\r' {
                    return None;
                }
                i += 1 + utf8_len(next);
            }
            b if b == q[0] && bytes[i..].starts_with(q) => return Some(i + q.len()),
            b => i += utf8_len(b),
        }
    }
    None
}

fn utf8_len(first: u8) -> usize {
    match first {
        0x00..=0x7f => 1,
        0xc0..=0xdf => 2,
        0xe0..=0xef => 3,
        0xf0..=0xff => 4,
        _ => 1,
    }
}

fn col(line: &str, byte: usize) -> usize {
    line[..byte].chars().count()
}

fn is_identifier_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

/// Splits text into lines that keep their terminators.
pub fn split_lines_keepends(src: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\n' {
            out.push(&src[start..=i]);
            start = i + 1;
        } else if bytes[i] == b'\r' {
            let end = if bytes.get(i + 1) == Some(&b'\n') { i + 1 } else { i };
            out.push(&src[start..=end]);
            start = end + 1;
            i = end;
        }
        i += 1;
    }
    if start < src.len() {
        out.push(&src[start..]);
    }
    out
}

struct ContStr {
    text: String,
    line: String,
    start: Pos,
    quote: &'static str,
    needcont: bool,
}

pub fn tokenize(src: &str) -> TokenStream {
    let lines = split_lines_keepends(src);
    let mut tokens = Vec::new();
    let mut error = None;
    let mut lnum = 0usize;
    let mut parenlev = 0i64;
    let mut continued = false;
    let mut indents = vec![0usize];
    let mut cont: Option<ContStr> = None;
    let mut last_line;
    let mut line = "";
    let mut next_line = 0;

    let push = |tokens: &mut Vec<Token>, kind, text: &str, start, end, line: &str| {
        tokens.push(Token {
            kind,
            text: text.to_string(),
            start,
            end,
            line: line.to_string(),
        })
    };

    'lines: loop {
        last_line = line;
        line = lines.get(next_line).copied().unwrap_or("");
        next_line += 1;
        lnum += 1;
        let mut pos = 0usize;
        let max = line.len();

        if let Some(c) = cont.as_mut() {
            if line.is_empty() {
                error = Some(TokenizeError {
                    message: "EOF in multi-line string".into(),
                    pos: c.start,
                });
                break 'lines;
            }
            if let Some(end) = find_string_end(line, 0, c.quote) {
                pos = end;
                let text = format!("{}{}", c.text, &line[..end]);
                let full = format!("{}{}", c.line, line);
                push(
                    &mut tokens,
                    TokKind::String,
                    &text,
                    c.start,
                    (lnum, col(line, end)),
                    &full,
                );
                cont = None;
            } else if c.needcont && !line.ends_with("\\\n") && !line.ends_with("\\\r\n") {
                let text = format!("{}{}", c.text, line);
                let l = c.line.clone();
                push(
                    &mut tokens,
                    TokKind::ErrorToken,
                    &text,
                    c.start,
                    (lnum, col(line, max)),
                    &l,
                );
                cont = None;
                continue;
            } else {
                c.text.push_str(line);
                c.line.push_str(line);
                continue;
            }
        } else if parenlev == 0 && !continued {
            if line.is_empty() {
                break;
            }
            let mut column = 0;
            let bytes = line.as_bytes();
            while pos < max {
                match bytes[pos] {
                    b' ' => column += 1,
                    b'\t' => column = (column / TABSIZE + 1) * TABSIZE,
                    b'\x0c' => column = 0,
                    _ => break,
                }
                pos += 1;
            }
            if pos == max {
                break;
            }
            let c = bytes[pos];
            if c == b'#' || c == b'\r' || c == b'\n' {
                if c == b'#' {
                    let comment = line[pos..].trim_end_matches(['\r', '\n']);
                    let end = pos + comment.len();
                    push(
                        &mut tokens,
                        TokKind::Comment,
                        comment,
                        (lnum, col(line, pos)),
                        (lnum, col(line, end)),
                        line,
                    );
                    pos = end;
                }
                push(
                    &mut tokens,
                    TokKind::Nl,
                    &line[pos..],
                    (lnum, col(line, pos)),
                    (lnum, col(line, max)),
                    line,
                );
                continue;
            }
            if column > *indents.last().unwrap() {
                indents.push(column);
                push(
                    &mut tokens,
                    TokKind::Indent,
                    &line[..pos],
                    (lnum, 0),
                    (lnum, col(line, pos)),
                    line,
                );
            }
            while column < *indents.last().unwrap() {
                if !indents.contains(&column) {
                    error = Some(TokenizeError {
                        message: "unindent does not match any outer indentation level".into(),
                        pos: (lnum, col(line, pos)),
                    });
                    break 'lines;
                }
                indents.pop();
                let p = (lnum, col(line, pos));
                push(&mut tokens, TokKind::Dedent, "", p, p, line);
            }
        } else {
            if line.is_empty() {
                error = Some(TokenizeError {
                    message: "EOF in multi-line statement".into(),
                    pos: (lnum, 0),
                });
                break 'lines;
            }
            continued = false;
        }

        while pos < max {
            let Some(caps) = pseudo_regex().captures(&line[pos..]) else {
                let ch = line[pos..].chars().next().unwrap();
                let c0 = col(line, pos);
                push(
                    &mut tokens,
                    TokKind::ErrorToken,
                    &ch.to_string(),
                    (lnum, c0),
                    (lnum, c0 + 1),
                    line,
                );
                pos += ch.len_utf8();
                continue;
            };
            let m = caps.get(1).unwrap();
            let start = pos + m.start();
            let end = pos + m.end();
            pos = end;
            if start == end {
                continue;
            }
            let token = &line[start..end];
            let initial = token.chars().next().unwrap();
            let spos = (lnum, col(line, start));
            let epos = (lnum, col(line, end));

            if initial.is_ascii_digit() || (initial == '.' && token != "." && token != "...") {
                push(&mut tokens, TokKind::Number, token, spos, epos, line);
            } else if initial == '\r' || initial == '\n' {
                let kind = if parenlev > 0 { TokKind::Nl } else { TokKind::Newline };
                push(&mut tokens, kind, token, spos, epos, line);
            } else if initial == '#' {
                push(&mut tokens, TokKind::Comment, token, spos, epos, line);
            } else if is_triple_start(token) {
                let quote: &'static str = if token.ends_with("'''") { "'''" } else { "\"\"\"" };
                if let Some(close) = find_string_end(line, pos, quote) {
                    pos = close;
                    push(
                        &mut tokens,
                        TokKind::String,
                        &line[start..close],
                        spos,
                        (lnum, col(line, close)),
                        line,
                    );
                } else {
                    cont = Some(ContStr {
                        text: line[start..].to_string(),
                        line: line.to_string(),
                        start: spos,
                        quote,
                        needcont: false,
                    });
                    break;
                }
            } else if is_single_quoted_start(token) {
                if token.ends_with('\n') {
                    let quote: &'static str = if token
                        .trim_start_matches(|c: char| c.is_ascii_alphabetic())
                        .starts_with('\'')
                    {
                        "'"
                    } else {
                        "\""
                    };
                    cont = Some(ContStr {
                        text: line[start..].to_string(),
                        line: line.to_string(),
                        start: spos,
                        quote,
                        needcont: true,
                    });
                    break;
                }
                push(&mut tokens, TokKind::String, token, spos, epos, line);
            } else if is_identifier_start(initial) {
                push(&mut tokens, TokKind::Name, token, spos, epos, line);
            } else if initial == '\\' {
                continued = true;
            } else {
                if "([{".contains(initial) {
                    parenlev += 1;
                } else if ")]}".contains(initial) {
                    parenlev -= 1;
                }
                push(&mut tokens, TokKind::Op, token, spos, epos, line);
            }
        }
    }

    if error.is_none() {
        if !last_line.is_empty() && !last_line.ends_with(['\r', '\n']) && !last_line.trim().starts_with('#') {
            let n = last_line.chars().count();
            push(&mut tokens, TokKind::Newline, "", (lnum - 1, n), (lnum - 1, n + 1), "");
        }
        for _ in indents.iter().skip(1) {
            push(&mut tokens, TokKind::Dedent, "", (lnum, 0), (lnum, 0), "");
        }
        push(&mut tokens, TokKind::EndMarker, "", (lnum, 0), (lnum, 0), "");
    }
    TokenStream { tokens, error }
}

fn is_triple_start(token: &str) -> bool {
    let body = token.trim_start_matches(|c: char| c.is_ascii_alphabetic());
    body == "'''" || body == "\"\"\""
}

fn is_single_quoted_start(token: &str) -> bool {
    let body = token.trim_start_matches(|c: char| c.is_ascii_alphabetic());
    token.len() - body.len() <= 2 && (body.starts_with('\'') || body.starts_with('"'))
}
