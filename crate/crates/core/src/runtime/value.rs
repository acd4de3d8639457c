use std::fmt;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

/// Axis-aligned box `[x, y, w, h]` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl From<[u32; 4]> for BBox {
    fn from([x, y, w, h]: [u32; 4]) -> Self {
        BBox { x, y, w, h }
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        BBox { x, y, w, h }
    }

    pub fn right(&self) -> u64 {
        u64::from(self.x) + u64::from(self.w)
    }

    pub fn bottom(&self) -> u64 {
        u64::from(self.y) + u64::from(self.h)
    }

    /// True when `other` lies fully inside `self` (edges may touch).
    pub fn contains(&self, other: &BBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x, self.y, self.w, self.h)
    }
}

/// A region of the scene together with the objects it was derived from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Patch {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub object_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Runtime value. Serialized as `{"t": tag, "v": payload}`; numbers travel as
/// decimal strings so they survive round trips exactly.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "t", content = "v", rename_all = "lowercase")]
pub enum Value {
    Patch(Patch),
    Text(String),
    #[serde(rename = "num")]
    Number(Decimal),
    Bool(bool),
    List(Vec<Value>),
    Null,
}

/// Abstract value types shared by the interpreter and the static checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ty {
    Patch,
    Text,
    Number,
    Bool,
    List,
    Null,
    Unknown,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Ty::Patch => "Patch",
            Ty::Text => "Text",
            Ty::Number => "Number",
            Ty::Bool => "Bool",
            Ty::List => "List",
            Ty::Null => "Null",
            Ty::Unknown => "Unknown",
        };
        f.write_str(s)
    }
}

impl Value {
    pub fn ty(&self) -> Ty {
        match self {
            Value::Patch(_) => Ty::Patch,
            Value::Text(_) => Ty::Text,
            Value::Number(_) => Ty::Number,
            Value::Bool(_) => Ty::Bool,
            Value::List(_) => Ty::List,
            Value::Null => Ty::Null,
        }
    }

    pub fn number(n: Decimal) -> Value {
        Value::Number(n.normalize())
    }

    pub fn as_patch(&self) -> Option<&Patch> {
        match self {
            Value::Patch(p) => Some(p),
            _ => None,
        }
    }

    /// Every patch in this value, descending into lists.
    pub fn patches(&self) -> Vec<&Patch> {
        match self {
            Value::Patch(p) => vec![p],
            Value::List(items) => items.iter().flat_map(Value::patches).collect(),
            _ => Vec::new(),
        }
    }

    /// Answer string used for scoring: booleans become yes/no, patches
    /// their box, lists a comma-separated join.
    pub fn to_answer(&self) -> String {
        match self {
            Value::Patch(p) => p.bbox.to_string(),
            Value::Text(s) => s.clone(),
            Value::Number(n) => n.normalize().to_string(),
            Value::Bool(true) => "yes".into(),
            Value::Bool(false) => "no".into(),
            Value::List(items) => items
                .iter()
                .map(Value::to_answer)
                .collect::<Vec<_>>()
                .join(", "),
            Value::Null => String::new(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Patch(p) => match &p.label {
                Some(l) => write!(f, "Patch({l} {})", p.bbox),
                None => write!(f, "Patch({})", p.bbox),
            },
            Value::Text(s) => write!(f, "{s:?}"),
            Value::Number(n) => write!(f, "{}", n.normalize()),
            Value::Bool(b) => write!(f, "{}", if *b { "True" } else { "False" }),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            Value::Null => f.write_str("Null"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn tagged_serialization() {
        let v = Value::List(vec![
            Value::number(Decimal::new(30, 1)),
            Value::Text("red".into()),
            Value::Bool(true),
            Value::Null,
        ]);
        let j = serde_json::to_value(&v).unwrap();
        assert_eq!(
            j,
            json!({"t": "list", "v": [
                {"t": "num", "v": "3"},
                {"t": "text", "v": "red"},
                {"t": "bool", "v": true},
                {"t": "null"}
            ]})
        );
        let back: Value = serde_json::from_value(j).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn patch_serializes_box_as_array() {
        let p = Value::Patch(Patch {
            bbox: BBox::new(1, 2, 3, 4),
            object_ids: vec!["o1".into()],
            label: Some("cup".into()),
        });
        let j = serde_json::to_value(&p).unwrap();
        assert_eq!(
            j,
            json!({"t": "patch", "v": {"box": [1, 2, 3, 4], "object_ids": ["o1"], "label": "cup"}})
        );
    }

    #[test]
    fn containment_is_inclusive() {
        let outer = BBox::new(0, 0, 10, 10);
        assert!(outer.contains(&BBox::new(0, 0, 10, 10)));
        assert!(outer.contains(&BBox::new(2, 2, 3, 3)));
        assert!(!outer.contains(&BBox::new(8, 8, 3, 1)));
    }

    #[test]
    fn answers() {
        assert_eq!(Value::Bool(false).to_answer(), "no");
        assert_eq!(Value::number(Decimal::new(250, 2)).to_answer(), "2.5");
    }
}
