//! Port types and the runtime values that travel along connections.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ValueError;

/// Maximum number of `List` layers in a port type.
pub const MAX_LIST_DEPTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PortType {
    Int,
    Real,
    Bool,
    Text,
    Json,
    Table,
    KeyValue,
    List(Box<PortType>),
}

impl PortType {
    pub const SCALARS: [PortType; 7] = [
        PortType::Int,
        PortType::Real,
        PortType::Bool,
        PortType::Text,
        PortType::Json,
        PortType::Table,
        PortType::KeyValue,
    ];

    pub fn list(element: PortType) -> Result<PortType, ValueError> {
        let ty = PortType::List(Box::new(element));
        if ty.list_depth() > MAX_LIST_DEPTH {
            return Err(ValueError::TooDeep(ty.to_string()));
        }
        Ok(ty)
    }

    pub fn list_depth(&self) -> usize {
        match self {
            PortType::List(inner) => 1 + inner.list_depth(),
            _ => 0,
        }
    }

    pub fn element(&self) -> Option<&PortType> {
        match self {
            PortType::List(inner) => Some(inner),
            _ => None,
        }
    }
}

impl fmt::Display for PortType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortType::Int => f.write_str("Int"),
            PortType::Real => f.write_str("Real"),
            PortType::Bool => f.write_str("Bool"),
            PortType::Text => f.write_str("Text"),
            PortType::Json => f.write_str("Json"),
            PortType::Table => f.write_str("Table"),
            PortType::KeyValue => f.write_str("KeyValue"),
            PortType::List(inner) => write!(f, "List<{inner}>"),
        }
    }
}

impl FromStr for PortType {
    type Err = ValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("List<").and_then(|r| r.strip_suffix('>')) {
            return PortType::list(inner.parse()?);
        }
        match s {
            "Int" => Ok(PortType::Int),
            "Real" => Ok(PortType::Real),
            "Bool" => Ok(PortType::Bool),
            "Text" => Ok(PortType::Text),
            "Json" => Ok(PortType::Json),
            "Table" => Ok(PortType::Table),
            "KeyValue" => Ok(PortType::KeyValue),
            other => Err(ValueError::UnknownType(other.to_string())),
        }
    }
}

impl Serialize for PortType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PortType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Whether a value of type `src` may flow into a port of type `dst`.
///
/// Identity, `Int → Real` widening, scalar stringification into `Text`, and
/// covariant lifting of those through `List`. Nothing else.
pub fn assignable(src: &PortType, dst: &PortType) -> bool {
    match (src, dst) {
        (a, b) if a == b => true,
        (PortType::Int, PortType::Real) => true,
        (PortType::Int | PortType::Real | PortType::Bool, PortType::Text) => true,
        (PortType::List(a), PortType::List(b)) => assignable(a, b),
        _ => false,
    }
}

/// Shortest text that parses back to the same `f64`. Integral values print
/// without a decimal point.
pub fn format_real(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// One table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    Bool(bool),
    Number(f64),
    Text(String),
}

impl Cell {
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Cell::Null => serde_json::Value::Null,
            Cell::Bool(b) => (*b).into(),
            Cell::Number(n) => number_json(*n),
            Cell::Text(t) => t.clone().into(),
        }
    }

    fn from_json(v: &serde_json::Value) -> Result<Cell, ValueError> {
        Ok(match v {
            serde_json::Value::Null => Cell::Null,
            serde_json::Value::Bool(b) => Cell::Bool(*b),
            serde_json::Value::Number(n) => Cell::Number(n.as_f64().unwrap_or(f64::NAN)),
            serde_json::Value::String(s) => Cell::Text(s.clone()),
            other => return Err(ValueError::Shape(format!("table cell cannot hold {other}"))),
        })
    }
}

fn number_json(n: f64) -> serde_json::Value {
    if n.fract() == 0.0 && n.abs() < 9.0e15 {
        (n as i64).into()
    } else {
        serde_json::Number::from_f64(n).map(Into::into).unwrap_or(serde_json::Value::Null)
    }
}

/// Rectangular table with unique, non-empty column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable")]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

#[derive(Deserialize)]
struct RawTable {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl TryFrom<RawTable> for Table {
    type Error = ValueError;

    fn try_from(raw: RawTable) -> Result<Self, Self::Error> {
        Table::new(raw.columns, raw.rows)
    }
}

impl Table {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<Cell>>) -> Result<Self, ValueError> {
        for (i, c) in columns.iter().enumerate() {
            if c.is_empty() {
                return Err(ValueError::Table(format!("column {i} has an empty name")));
            }
            if columns[..i].contains(c) {
                return Err(ValueError::Table(format!("duplicate column name '{c}'")));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(ValueError::Table(format!(
                    "row {i} has {} cells, expected {}",
                    row.len(),
                    columns.len()
                )));
            }
            if row.iter().any(|c| matches!(c, Cell::Number(n) if !n.is_finite())) {
                return Err(ValueError::Table(format!("row {i} holds a non-finite number")));
            }
        }
        Ok(Self { columns, rows })
    }

    pub fn empty(columns: Vec<String>) -> Result<Self, ValueError> {
        Self::new(columns, Vec::new())
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "columns": self.columns,
            "rows": self.rows.iter().map(|r| r.iter().map(Cell::to_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, ValueError> {
        let columns = v
            .get("columns")
            .and_then(|c| c.as_array())
            .ok_or_else(|| ValueError::Shape("table needs a columns array".into()))?
            .iter()
            .map(|c| c.as_str().map(str::to_string).ok_or_else(|| ValueError::Shape("column names must be strings".into())))
            .collect::<Result<Vec<_>, _>>()?;
        let rows = v
            .get("rows")
            .and_then(|r| r.as_array())
            .ok_or_else(|| ValueError::Shape("table needs a rows array".into()))?
            .iter()
            .map(|row| {
                row.as_array()
                    .ok_or_else(|| ValueError::Shape("each row must be an array".into()))?
                    .iter()
                    .map(Cell::from_json)
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Table::new(columns, rows)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawKeyValue")]
pub struct KeyValue {
    key: String,
    value: String,
}

#[derive(Deserialize)]
struct RawKeyValue {
    key: String,
    value: String,
}

impl TryFrom<RawKeyValue> for KeyValue {
    type Error = ValueError;

    fn try_from(raw: RawKeyValue) -> Result<Self, Self::Error> {
        KeyValue::new(raw.key, raw.value)
    }
}

impl KeyValue {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Result<Self, ValueError> {
        let key = key.into();
        if key.is_empty() {
            return Err(ValueError::EmptyKey);
        }
        Ok(Self { key, value: value.into() })
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn value(&self) -> &str {
        &self.value
    }
}

/// A datum on a port. The variant determines its [`PortType`]; lists also
/// carry their element type so empty lists stay typed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value")]
pub enum Value {
    Int(i64),
    Real(f64),
    Bool(bool),
    Text(String),
    Json(serde_json::Value),
    Table(Table),
    KeyValue(KeyValue),
    List { element: PortType, items: Vec<Value> },
}

impl Value {
    pub fn text(s: impl Into<String>) -> Value {
        Value::Text(s.into())
    }

    pub fn list(element: PortType, items: Vec<Value>) -> Result<Value, ValueError> {
        PortType::list(element.clone())?;
        if let Some(bad) = items.iter().find(|v| v.port_type() != element) {
            return Err(ValueError::Shape(format!(
                "list of {element} cannot hold a {}",
                bad.port_type()
            )));
        }
        Ok(Value::List { element, items })
    }

    pub fn port_type(&self) -> PortType {
        match self {
            Value::Int(_) => PortType::Int,
            Value::Real(_) => PortType::Real,
            Value::Bool(_) => PortType::Bool,
            Value::Text(_) => PortType::Text,
            Value::Json(_) => PortType::Json,
            Value::Table(_) => PortType::Table,
            Value::KeyValue(_) => PortType::KeyValue,
            Value::List { element, .. } => PortType::List(Box::new(element.clone())),
        }
    }

    /// Converts this value for a port of type `target`, applying the
    /// coercions allowed by [`assignable`]. `None` when not assignable.
    pub fn coerce_to(&self, target: &PortType) -> Option<Value> {
        if &self.port_type() == target {
            return Some(self.clone());
        }
        match (self, target) {
            (Value::Int(i), PortType::Real) => Some(Value::Real(*i as f64)),
            (Value::Int(i), PortType::Text) => Some(Value::Text(i.to_string())),
            (Value::Real(r), PortType::Text) => Some(Value::Text(format_real(*r))),
            (Value::Bool(b), PortType::Text) => Some(Value::Text(b.to_string())),
            (Value::List { element, items }, PortType::List(dst)) if assignable(element, dst) => {
                let items = items.iter().map(|v| v.coerce_to(dst)).collect::<Option<Vec<_>>>()?;
                Some(Value::List { element: (**dst).clone(), items })
            }
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    /// Plain JSON rendering used on the wire and in CLI output: scalars as
    /// JSON scalars, tables as `{"columns","rows"}`, pairs as `{"key","value"}`.
    pub fn to_plain_json(&self) -> serde_json::Value {
        match self {
            Value::Int(i) => (*i).into(),
            Value::Real(r) => serde_json::Number::from_f64(*r)
                .map(Into::into)
                .unwrap_or(serde_json::Value::Null),
            Value::Bool(b) => (*b).into(),
            Value::Text(t) => t.clone().into(),
            Value::Json(j) => j.clone(),
            Value::Table(t) => t.to_json(),
            Value::KeyValue(kv) => serde_json::json!({ "key": kv.key, "value": kv.value }),
            Value::List { items, .. } => items.iter().map(Value::to_plain_json).collect::<Vec<_>>().into(),
        }
    }

    /// Interprets plain JSON as a value of type `ty`, with the same coercions
    /// a connection would apply.
    pub fn from_plain_json(v: &serde_json::Value, ty: &PortType) -> Result<Value, ValueError> {
        use serde_json::Value as J;
        let mismatch = || ValueError::Mismatch { expected: ty.clone(), found: json_kind(v).to_string() };
        Ok(match (ty, v) {
            (PortType::Int, J::Number(n)) => Value::Int(n.as_i64().ok_or_else(mismatch)?),
            (PortType::Real, J::Number(n)) => Value::Real(n.as_f64().ok_or_else(mismatch)?),
            (PortType::Bool, J::Bool(b)) => Value::Bool(*b),
            (PortType::Text, J::String(s)) => Value::Text(s.clone()),
            (PortType::Text, J::Number(n)) => match n.as_i64() {
                Some(i) => Value::Text(i.to_string()),
                None => Value::Text(format_real(n.as_f64().ok_or_else(mismatch)?)),
            },
            (PortType::Text, J::Bool(b)) => Value::Text(b.to_string()),
            (PortType::Json, any) => Value::Json(any.clone()),
            (PortType::Table, J::Object(_)) => Value::Table(Table::from_json(v)?),
            (PortType::KeyValue, J::Object(o)) => {
                let field = |k: &str| o.get(k).and_then(|x| x.as_str()).ok_or_else(mismatch);
                Value::KeyValue(KeyValue::new(field("key")?, field("value")?)?)
            }
            (PortType::List(el), J::Array(items)) => Value::List {
                element: (**el).clone(),
                items: items.iter().map(|x| Value::from_plain_json(x, el)).collect::<Result<_, _>>()?,
            },
            _ => return Err(mismatch()),
        })
    }
}

fn json_kind(v: &serde_json::Value) -> &'static str {
    match v {
        serde_json::Value::Null => "null",
        serde_json::Value::Bool(_) => "boolean",
        serde_json::Value::Number(n) if n.is_i64() || n.is_u64() => "integer",
        serde_json::Value::Number(_) => "number",
        serde_json::Value::String(_) => "string",
        serde_json::Value::Array(_) => "array",
        serde_json::Value::Object(_) => "object",
    }
}
