use crate::dsl::ParseDiagnostic;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    Real(f64),
    LBrace,
    RBrace,
    Colon,
    Eq,
    Dot,
    Comma,
    Arrow,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Str(_) => "string literal".into(),
            Tok::Int(_) | Tok::Real(_) => "number".into(),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::Colon => "':'".into(),
            Tok::Eq => "'='".into(),
            Tok::Dot => "'.'".into(),
            Tok::Comma => "','".into(),
            Tok::Arrow => "'->'".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn err(&self, message: impl Into<String>) -> ParseDiagnostic {
        ParseDiagnostic::new(self.line, self.column, message)
    }
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, ParseDiagnostic> {
    let mut cur = Cursor { chars: src.chars().peekable(), line: 1, column: 1 };
    let mut out = Vec::new();
    loop {
        while let Some(c) = cur.peek() {
            if c.is_whitespace() {
                cur.bump();
            } else if c == '#' {
                while cur.peek().is_some_and(|c| c != '\n') {
                    cur.bump();
                }
            } else {
                break;
            }
        }
        let (line, column) = (cur.line, cur.column);
        let Some(c) = cur.peek() else {
            out.push(Token { tok: Tok::Eof, line, column });
            return Ok(out);
        };
        let tok = match c {
            '{' | '}' | ':' | '=' | '.' | ',' => {
                cur.bump();
                match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    ':' => Tok::Colon,
                    '=' => Tok::Eq,
                    '.' => Tok::Dot,
                    _ => Tok::Comma,
                }
            }
            '-' => {
                cur.bump();
                match cur.peek() {
                    Some('>') => {
                        cur.bump();
                        Tok::Arrow
                    }
                    Some(d) if d.is_ascii_digit() => number(&mut cur, true, line, column)?,
                    _ => return Err(ParseDiagnostic::new(line, column, "expected '->' or a number after '-'")),
                }
            }
            '"' => {
                cur.bump();
                Tok::Str(string(&mut cur, line, column)?)
            }
            c if c.is_ascii_digit() => number(&mut cur, false, line, column)?,
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(c) = cur.peek().filter(|c| c.is_ascii_alphanumeric() || *c == '_') {
                    s.push(c);
                    cur.bump();
                }
                Tok::Ident(s)
            }
            other => return Err(cur.err(format!("unexpected character '{}'", other.escape_debug()))),
        };
        out.push(Token { tok, line, column });
    }
}

fn string(cur: &mut Cursor<'_>, line: usize, column: usize) -> Result<String, ParseDiagnostic> {
    let mut s = String::new();
    loop {
        let Some(c) = cur.bump() else {
            return Err(ParseDiagnostic::new(line, column, "unterminated string literal"));
        };
        match c {
            '"' => return Ok(s),
            '\\' => {
                let esc = cur.bump().ok_or_else(|| ParseDiagnostic::new(line, column, "unterminated string literal"))?;
                match esc {
                    '"' => s.push('"'),
                    '\\' => s.push('\\'),
                    'n' => s.push('\n'),
                    'r' => s.push('\r'),
                    't' => s.push('\t'),
                    'u' => {
                        if cur.bump() != Some('{') {
                            return Err(cur.err("expected '{' after \\u"));
                        }
                        let mut hex = String::new();
                        while let Some(h) = cur.bump() {
                            if h == '}' {
                                break;
                            }
                            hex.push(h);
                        }
                        let ch = u32::from_str_radix(&hex, 16)
                            .ok()
                            .and_then(char::from_u32)
                            .ok_or_else(|| cur.err(format!("invalid unicode escape '\\u{{{hex}}}'")))?;
                        s.push(ch);
                    }
                    other => return Err(cur.err(format!("unknown escape '\\{}'", other.escape_debug()))),
                }
            }
            c => s.push(c),
        }
    }
}

fn number(cur: &mut Cursor<'_>, negative: bool, line: usize, column: usize) -> Result<Tok, ParseDiagnostic> {
    let mut text = String::from(if negative { "-" } else { "" });
    let mut real = false;
    let digits = |cur: &mut Cursor<'_>, text: &mut String| {
        while let Some(d) = cur.peek().filter(char::is_ascii_digit) {
            text.push(d);
            cur.bump();
        }
    };
    digits(cur, &mut text);
    // A '.' is part of the number only when a digit follows; `a.b` style
    // endpoints never start with a digit, so this is unambiguous.
    if cur.peek() == Some('.') {
        let mut ahead = cur.chars.clone();
        ahead.next();
        if ahead.peek().is_some_and(char::is_ascii_digit) {
            real = true;
            text.push('.');
            cur.bump();
            digits(cur, &mut text);
        }
    }
    if matches!(cur.peek(), Some('e' | 'E')) {
        real = true;
        text.push('e');
        cur.bump();
        if let Some(sign) = cur.peek().filter(|c| *c == '+' || *c == '-') {
            text.push(sign);
            cur.bump();
        }
        let before = text.len();
        digits(cur, &mut text);
        if text.len() == before {
            return Err(cur.err("expected exponent digits"));
        }
    }
    if cur.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(cur.err("unexpected character after number"));
    }
    let bad = || ParseDiagnostic::new(line, column, format!("invalid number '{text}'"));
    if real {
        let v: f64 = text.parse().map_err(|_| bad())?;
        if !v.is_finite() {
            return Err(bad());
        }
        Ok(Tok::Real(v))
    } else {
        text.parse().map(Tok::Int).map_err(|_| bad())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn punctuation_and_numbers() {
        assert_eq!(
            toks("a.B -> -3 1.5 2e3 -0.25"),
            vec![
                Tok::Ident("a".into()),
                Tok::Dot,
                Tok::Ident("B".into()),
                Tok::Arrow,
                Tok::Int(-3),
                Tok::Real(1.5),
                Tok::Real(2000.0),
                Tok::Real(-0.25),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn strings_and_comments() {
        assert_eq!(
            toks("\"a\\n\\\"b\\u{e9}\" # trailing\nx"),
            vec![Tok::Str("a\n\"bé".into()), Tok::Ident("x".into()), Tok::Eof]
        );
    }

    #[test]
    fn positions() {
        let t = tokenize("flow\n  \"x\"").unwrap();
        assert_eq!((t[1].line, t[1].column), (2, 3));
        let e = tokenize("\n  @").unwrap_err();
        assert_eq!((e.line, e.column), (2, 3));
        assert!(tokenize("\"open").is_err());
        assert!(tokenize("99999999999999999999").is_err());
    }
}
