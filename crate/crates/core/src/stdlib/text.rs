//! Pure text helpers: `${VAR}` expansion, the String Formatter template
//! language, JSONPath queries and regex replacement.

use std::collections::BTreeMap;

/// Expands `${NAME}` and `${NAME:-fallback}` from `vars`. Unknown names
/// expand to the fallback (or nothing); an unterminated `${` is kept as is.
pub fn expand_vars(text: &str, vars: &BTreeMap<String, String>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(at) = rest.find("${") {
        out.push_str(&rest[..at]);
        let after = &rest[at + 2..];
        match after.find('}') {
            Some(end) => {
                out.push_str(&lookup_var(&after[..end], vars));
                rest = &after[end + 1..];
            }
            None => {
                out.push_str(&rest[at..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn lookup_var(reference: &str, vars: &BTreeMap<String, String>) -> String {
    match reference.split_once(":-") {
        Some((name, fallback)) => vars.get(name).filter(|v| !v.is_empty()).cloned().unwrap_or_else(|| fallback.to_string()),
        None => vars.get(reference).cloned().unwrap_or_default(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EscapeMode {
    None,
    Json,
}

impl std::str::FromStr for EscapeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(EscapeMode::None),
            "json" => Ok(EscapeMode::Json),
            other => Err(format!("unknown escape mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("placeholder {{{index}}} has no argument (only {available} given)")]
    UnknownPlaceholder { index: usize, available: usize },

    #[error("malformed template at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Arg(usize),
    Var(String),
}

fn parse_template(template: &str) -> Result<Vec<Segment>, FormatError> {
    let mut segs = Vec::new();
    let mut lit = String::new();
    let bytes = template.as_bytes();
    let mut i = 0;
    let malformed = |offset: usize, reason: &str| FormatError::Malformed { offset, reason: reason.into() };
    while i < bytes.len() {
        let rest = &template[i..];
        if rest.starts_with("{{") {
            lit.push('{');
            i += 2;
        } else if rest.starts_with("}}") {
            lit.push('}');
            i += 2;
        } else if rest.starts_with("${") {
            let end = rest.find('}').ok_or_else(|| malformed(i, "unterminated ${"))?;
            segs.push(Segment::Literal(std::mem::take(&mut lit)));
            segs.push(Segment::Var(rest[2..end].to_string()));
            i += end + 1;
        } else if rest.starts_with('{') {
            let end = rest.find('}').ok_or_else(|| malformed(i, "unterminated placeholder"))?;
            let index = rest[1..end]
                .parse::<usize>()
                .map_err(|_| malformed(i, "placeholders must be {n}; write {{ for a literal brace"))?;
            segs.push(Segment::Literal(std::mem::take(&mut lit)));
            segs.push(Segment::Arg(index));
            i += end + 1;
        } else if rest.starts_with('}') {
            return Err(malformed(i, "unmatched '}'; write }} for a literal brace"));
        } else {
            let c = rest.chars().next().unwrap();
            lit.push(c);
            i += c.len_utf8();
        }
    }
    segs.push(Segment::Literal(lit));
    Ok(segs)
}

/// Checks a template against an argument count without formatting.
pub fn check_template(template: &str, arg_count: usize) -> Result<(), FormatError> {
    for seg in parse_template(template)? {
        if let Segment::Arg(index) = seg {
            if index >= arg_count {
                return Err(FormatError::UnknownPlaceholder { index, available: arg_count });
            }
        }
    }
    Ok(())
}

/// JSON string escaping without the surrounding quotes.
pub fn json_escape(s: &str) -> String {
    let quoted = serde_json::to_string(s).expect("strings serialize");
    quoted[1..quoted.len() - 1].to_string()
}

/// Substitutes `{n}` with `args[n]`; `{{` and `}}` are literal braces.
/// `${VAR}` references are expanded from `vars` when given and kept
/// verbatim otherwise. Arguments are never expanded.
pub fn format_template(
    template: &str,
    args: &[String],
    mode: EscapeMode,
    vars: Option<&BTreeMap<String, String>>,
) -> Result<String, FormatError> {
    let mut out = String::new();
    for seg in parse_template(template)? {
        match seg {
            Segment::Literal(s) => out.push_str(&s),
            Segment::Arg(index) => {
                let arg = args.get(index).ok_or(FormatError::UnknownPlaceholder { index, available: args.len() })?;
                match mode {
                    EscapeMode::None => out.push_str(arg),
                    EscapeMode::Json => out.push_str(&json_escape(arg)),
                }
            }
            Segment::Var(reference) => match vars {
                Some(vars) => out.push_str(&lookup_var(&reference, vars)),
                None => {
                    out.push_str("${");
                    out.push_str(&reference);
                    out.push('}');
                }
            },
        }
    }
    Ok(out)
}

pub fn format_string(template: &str, args: &[String], mode: EscapeMode) -> Result<String, FormatError> {
    format_template(template, args, mode, None)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JsonPathError {
    #[error("invalid JSONPath '{path}': {reason}")]
    Syntax { path: String, reason: String },

    #[error("document is not JSON: {0}")]
    Parse(String),

    #[error("path '{0}' not found in document")]
    NotFound(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Step {
    Field(String),
    Index(usize),
}

fn parse_path(path: &str) -> Result<Vec<Step>, JsonPathError> {
    let syntax = |reason: &str| JsonPathError::Syntax { path: path.into(), reason: reason.into() };
    let rest = path.strip_prefix('$').ok_or_else(|| syntax("must start with '$'"))?;
    let mut steps = Vec::new();
    let mut chars = rest.char_indices().peekable();
    while let Some((_, c)) = chars.next() {
        match c {
            '.' => {
                let mut name = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c == '.' || c == '[' {
                        break;
                    }
                    name.push(c);
                    chars.next();
                }
                if name.is_empty() {
                    return Err(syntax("empty field name after '.'"));
                }
                steps.push(Step::Field(name));
            }
            '[' => {
                let mut inner = String::new();
                let mut closed = false;
                let mut quote: Option<char> = None;
                for (_, c) in chars.by_ref() {
                    match (quote, c) {
                        (None, ']') => {
                            closed = true;
                            break;
                        }
                        (None, '\'' | '"') if inner.is_empty() => quote = Some(c),
                        (Some(q), c) if c == q => quote = None,
                        _ => {}
                    }
                    inner.push(c);
                }
                if !closed {
                    return Err(syntax("unterminated '['"));
                }
                let inner = inner.trim();
                let quoted = inner.len() >= 2
                    && ((inner.starts_with('\'') && inner.ends_with('\'')) || (inner.starts_with('"') && inner.ends_with('"')));
                if quoted {
                    steps.push(Step::Field(inner[1..inner.len() - 1].to_string()));
                } else {
                    let n = inner.parse::<usize>().map_err(|_| syntax("index must be a non-negative integer or a quoted name"))?;
                    steps.push(Step::Index(n));
                }
            }
            _ => return Err(syntax("expected '.' or '['")),
        }
    }
    Ok(steps)
}

pub fn check_jsonpath(path: &str) -> Result<(), JsonPathError> {
    parse_path(path).map(|_| ())
}

/// Evaluates the supported JSONPath subset (`$`, `.field`, `[n]`, `['name']`).
pub fn query_json<'a>(doc: &'a serde_json::Value, path: &str) -> Result<&'a serde_json::Value, JsonPathError> {
    let mut cur = doc;
    for step in parse_path(path)? {
        let next = match (&step, cur) {
            (Step::Field(name), serde_json::Value::Object(map)) => map.get(name),
            (Step::Index(i), serde_json::Value::Array(items)) => items.get(*i),
            _ => None,
        };
        cur = next.ok_or_else(|| JsonPathError::NotFound(path.to_string()))?;
    }
    Ok(cur)
}

/// Text-in, text-out query: strings come back unquoted, everything else as
/// compact JSON.
pub fn query_jsonpath(document: &str, path: &str) -> Result<String, JsonPathError> {
    let doc: serde_json::Value = serde_json::from_str(document).map_err(|e| JsonPathError::Parse(e.to_string()))?;
    Ok(match query_json(&doc, path)? {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    })
}

/// Replaces every match of `pattern` with `replacement` (`$1` group refs).
pub fn replace_regex(input: &str, pattern: &str, replacement: &str) -> Result<String, regex::Error> {
    let re = regex::Regex::new(pattern)?;
    Ok(re.replace_all(input, replacement).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars() -> BTreeMap<String, String> {
        BTreeMap::from([("KEY".to_string(), "sk-test".to_string()), ("EMPTY".to_string(), String::new())])
    }

    #[test]
    fn var_expansion() {
        let v = vars();
        assert_eq!(expand_vars("Bearer ${KEY}", &v), "Bearer sk-test");
        assert_eq!(expand_vars("${MISSING}|${MISSING:-d}|${EMPTY:-e}|${KEY:-x}", &v), "|d|e|sk-test");
        assert_eq!(expand_vars("cost $5 ${open", &v), "cost $5 ${open");
    }

    #[test]
    fn formatter_examples() {
        assert_eq!(format_string("{0} world", &["hello".into()], EscapeMode::None).unwrap(), "hello world");
        assert_eq!(
            format_string(r#"{{"content":"{0}"}}"#, &[r#"say "hi""#.into()], EscapeMode::Json).unwrap(),
            r#"{"content":"say \"hi\""}"#
        );
        assert_eq!(
            format_string("{1}", &["a".into()], EscapeMode::None),
            Err(FormatError::UnknownPlaceholder { index: 1, available: 1 })
        );
        assert!(matches!(format_string("{x}", &[], EscapeMode::None), Err(FormatError::Malformed { .. })));
        assert!(matches!(format_string("a } b", &[], EscapeMode::None), Err(FormatError::Malformed { .. })));
    }

    #[test]
    fn formatter_vars_are_not_applied_to_args() {
        let out = format_template("${KEY}:{0}", &["${KEY}".into()], EscapeMode::None, Some(&vars())).unwrap();
        assert_eq!(out, "sk-test:${KEY}");
        assert_eq!(format_string("${KEY}", &[], EscapeMode::None).unwrap(), "${KEY}");
        assert!(check_template("{0}{2}", 2).is_err());
        assert!(check_template("{{{0}}}", 1).is_ok());
    }

    #[test]
    fn jsonpath_examples() {
        let doc = r#"{"choices":[{"message":{"content":"hi"}}],"a":1,"o":{"k":[1,2]},"odd key":true}"#;
        assert_eq!(query_jsonpath(doc, "$.choices[0].message.content").unwrap(), "hi");
        assert_eq!(query_jsonpath(doc, "$.a").unwrap(), "1");
        assert_eq!(query_jsonpath(doc, "$.o").unwrap(), r#"{"k":[1,2]}"#);
        assert_eq!(query_jsonpath(doc, "$['odd key']").unwrap(), "true");
        assert_eq!(query_jsonpath(doc, "$.b"), Err(JsonPathError::NotFound("$.b".into())));
        assert!(matches!(query_jsonpath(doc, "$.choices[5]"), Err(JsonPathError::NotFound(_))));
        assert!(matches!(query_jsonpath("nope", "$"), Err(JsonPathError::Parse(_))));
        for bad in ["a", "$.", "$[x]", "$[0", "$x"] {
            assert!(check_jsonpath(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn regex_replace() {
        let fence = r"(?s)^.*?```[^\n]*\n(.*?)```.*$";
        assert_eq!(replace_regex("```python\nx=1\n```", fence, "$1").unwrap(), "x=1\n");
        assert_eq!(replace_regex("x=1", fence, "$1").unwrap(), "x=1");
        assert!(replace_regex("x", "(", "").is_err());
        assert_eq!(replace_regex("a-b-c", "-", "+").unwrap(), "a+b+c");
    }
}
