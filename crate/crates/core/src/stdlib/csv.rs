//! RFC 4180 table bridge.
//!
//! Quoting carries type information: quoted fields are always text, while
//! unquoted fields are null (empty), booleans, numbers, or text otherwise.
//! The writer quotes every text cell, so tables round-trip exactly.

use std::sync::OnceLock;

use regex::Regex;

use crate::model::{format_real, Cell, Table};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CsvError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },

    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged { line: usize, expected: usize, found: usize },

    #[error("{0}")]
    Table(String),
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn write_cell(cell: &Cell) -> String {
    match cell {
        Cell::Null => String::new(),
        Cell::Bool(b) => b.to_string(),
        Cell::Number(n) => format_real(*n),
        Cell::Text(s) => quote(s),
    }
}

/// Serializes with a header row and CRLF line endings. A table without
/// columns serializes to the empty string.
pub fn write_csv(table: &Table) -> String {
    if table.columns().is_empty() {
        return String::new();
    }
    let mut out = String::new();
    let header: Vec<String> = table.columns().iter().map(|c| quote(c)).collect();
    out.push_str(&header.join(","));
    out.push_str("\r\n");
    for row in table.rows() {
        let cells: Vec<String> = row.iter().map(write_cell).collect();
        out.push_str(&cells.join(","));
        out.push_str("\r\n");
    }
    out
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$").unwrap())
}

fn infer(field: &str) -> Cell {
    if field.is_empty() {
        Cell::Null
    } else if field.eq_ignore_ascii_case("true") {
        Cell::Bool(true)
    } else if field.eq_ignore_ascii_case("false") {
        Cell::Bool(false)
    } else if number_re().is_match(field) {
        match field.parse::<f64>() {
            Ok(n) if n.is_finite() => Cell::Number(n),
            _ => Cell::Text(field.to_string()),
        }
    } else {
        Cell::Text(field.to_string())
    }
}

struct Field {
    text: String,
    quoted: bool,
}

/// Splits CSV text into records. Accepts LF or CRLF; a final line break
/// does not start a new record.
fn records(text: &str) -> Result<Vec<(usize, Vec<Field>)>, CsvError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = 1;
    if text.is_empty() {
        return Ok(out);
    }
    loop {
        let record_line = line;
        let mut fields = Vec::new();
        loop {
            let mut field = Field { text: String::new(), quoted: false };
            if chars.peek() == Some(&'"') {
                chars.next();
                field.quoted = true;
                loop {
                    match chars.next() {
                        None => return Err(CsvError::Syntax { line: record_line, reason: "unterminated quoted field".into() }),
                        Some('"') if chars.peek() == Some(&'"') => {
                            chars.next();
                            field.text.push('"');
                        }
                        Some('"') => break,
                        Some(c) => {
                            if c == '\n' {
                                line += 1;
                            }
                            field.text.push(c);
                        }
                    }
                }
                if !matches!(chars.peek(), None | Some(',' | '\r' | '\n')) {
                    return Err(CsvError::Syntax { line, reason: "unexpected character after closing quote".into() });
                }
            } else {
                while let Some(&c) = chars.peek() {
                    match c {
                        ',' | '\n' | '\r' => break,
                        '"' => return Err(CsvError::Syntax { line, reason: "quote inside unquoted field".into() }),
                        c => {
                            field.text.push(c);
                            chars.next();
                        }
                    }
                }
            }
            fields.push(field);
            match chars.next() {
                Some(',') => continue,
                Some('\r') => {
                    if chars.next() != Some('\n') {
                        return Err(CsvError::Syntax { line, reason: "bare carriage return".into() });
                    }
                    line += 1;
                    break;
                }
                Some('\n') => {
                    line += 1;
                    break;
                }
                None => break,
                Some(_) => unreachable!(),
            }
        }
        out.push((record_line, fields));
        if chars.peek().is_none() {
            return Ok(out);
        }
    }
}

/// Parses CSV with a header row into a [`Table`].
pub fn parse_csv(text: &str) -> Result<Table, CsvError> {
    let mut recs = records(text)?.into_iter();
    let Some((_, header)) = recs.next() else {
        return Table::new(Vec::new(), Vec::new()).map_err(|e| CsvError::Table(e.to_string()));
    };
    let columns: Vec<String> = header.into_iter().map(|f| f.text).collect();
    let mut rows = Vec::new();
    for (line, fields) in recs {
        if fields.len() != columns.len() {
            return Err(CsvError::Ragged { line, expected: columns.len(), found: fields.len() });
        }
        rows.push(
            fields
                .into_iter()
                .map(|f| if f.quoted { Cell::Text(f.text) } else { infer(&f.text) })
                .collect(),
        );
    }
    Table::new(columns, rows).map_err(|e| CsvError::Table(e.to_string()))
}
