use crate::diag::Diagnostic;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Colon,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Eq,
    Comma,
    Newline,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(v) => format!("`{v}`"),
            Tok::Colon => "`:`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
    /// First token on its physical line.
    pub line_start: bool,
}

/// Splits flow source into tokens. `%` starts a comment running to the end
/// of the line.
pub fn lex(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut out = Vec::new();
    for (lineno, raw) in src.lines().enumerate() {
        let line = lineno + 1;
        let text = match raw.find('%') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut i = 0;
        let mut first = true;
        while i < chars.len() {
            let (_, c) = chars[i];
            let col = i + 1;
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            let tok = if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().map(|(_, c)| *c).collect();
                Tok::Ident(s)
            } else if c.is_ascii_digit() {
                let start = i;
                while i < chars.len() && chars[i].1.is_ascii_digit() {
                    i += 1;
                }
                let s: String = chars[start..i].iter().map(|(_, c)| *c).collect();
                let v = s
                    .parse::<i64>()
                    .map_err(|_| Diagnostic::error(line, col, format!("integer `{s}` out of range")))?;
                Tok::Int(v)
            } else {
                i += 1;
                match c {
                    ':' => Tok::Colon,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '=' => Tok::Eq,
                    ',' => Tok::Comma,
                    other => return Err(Diagnostic::error(line, col, format!("unexpected character `{other}`"))),
                }
            };
            out.push(Token {
                tok,
                line,
                col,
                line_start: first,
            });
            first = false;
        }
        if !first {
            out.push(Token {
                tok: Tok::Newline,
                line,
                col: chars.len() + 1,
                line_start: false,
            });
        }
    }
    let last_line = src.lines().count().max(1);
    out.push(Token {
        tok: Tok::Eof,
        line: last_line,
        col: 1,
        line_start: true,
    });
    Ok(out)
}
