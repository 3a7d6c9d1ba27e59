//! Tolerant extraction of JSON payloads from model output.
//!
//! Models wrap JSON in code fences or precede it with prose. Every function
//! here scans for the first `{` that starts a complete JSON object and works
//! from that object. All inputs produce either a value or a [`ParseError`].

use std::collections::BTreeMap;

use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no JSON object found in model output")]
    NoJsonObject,
    #[error("missing key '{0}'")]
    MissingKey(String),
    #[error("key '{key}' should be {expected}")]
    WrongType { key: String, expected: &'static str },
    #[error("choice '{0}' is not an integer")]
    NonIntegerChoice(String),
}

/// Returns the first JSON object embedded in `text`.
pub fn extract_first_object(text: &str) -> Option<Map<String, Value>> {
    text.match_indices('{').find_map(|(start, _)| {
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => Some(map),
            _ => None,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Choice {
    pub thought: String,
    pub choice: i64,
}

/// Parses `{"thought": X, "choice": Y}` where Y must be integer-coercible.
pub fn parse_choice(text: &str) -> Result<Choice, ParseError> {
    let map = extract_first_object(text).ok_or(ParseError::NoJsonObject)?;
    let thought = match map.get("thought") {
        Some(v) => {
            scalar_text(v).ok_or_else(|| ParseError::WrongType { key: "thought".into(), expected: "a string" })?
        }
        None => return Err(ParseError::MissingKey("thought".into())),
    };
    let raw = map.get("choice").ok_or_else(|| ParseError::MissingKey("choice".into()))?;
    let choice = coerce_integer(raw).ok_or_else(|| ParseError::NonIntegerChoice(raw.to_string()))?;
    Ok(Choice { thought, choice })
}

fn coerce_integer(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n
            .as_i64()
            .or_else(|| n.as_f64().filter(|f| f.is_finite() && f.fract() == 0.0 && f.abs() < 9.0e15).map(|f| f as i64)),
        Value::String(s) => s.trim().parse::<i64>().ok(),
        _ => None,
    }
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Text,
    TextList,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PayloadValue {
    Text(String),
    List(Vec<String>),
}

impl PayloadValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            PayloadValue::Text(s) => Some(s),
            PayloadValue::List(_) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[String]> {
        match self {
            PayloadValue::List(v) => Some(v),
            PayloadValue::Text(_) => None,
        }
    }
}

/// Extracts the declared keys from the first JSON object in `text`.
pub fn parse_json_payload(
    text: &str,
    required: &[(&str, FieldKind)],
) -> Result<BTreeMap<String, PayloadValue>, ParseError> {
    let map = extract_first_object(text).ok_or(ParseError::NoJsonObject)?;
    let mut out = BTreeMap::new();
    for &(key, kind) in required {
        let v = map.get(key).ok_or_else(|| ParseError::MissingKey(key.to_string()))?;
        let value = match kind {
            FieldKind::Text => PayloadValue::Text(
                scalar_text(v).ok_or(ParseError::WrongType { key: key.to_string(), expected: "a string" })?,
            ),
            FieldKind::TextList => {
                let items = v
                    .as_array()
                    .ok_or(ParseError::WrongType { key: key.to_string(), expected: "a list of strings" })?;
                PayloadValue::List(
                    items
                        .iter()
                        .map(scalar_text)
                        .collect::<Option<Vec<_>>>()
                        .ok_or(ParseError::WrongType { key: key.to_string(), expected: "a list of strings" })?,
                )
            }
        };
        out.insert(key.to_string(), value);
    }
    Ok(out)
}

/// Parses a numbered phase summary `{"0": "...", "1": "...", ...}` into its
/// entries, ordered by numeric key (non-numeric keys sort after, by name).
pub fn parse_summary(text: &str) -> Result<Vec<String>, ParseError> {
    let map = extract_first_object(text).ok_or(ParseError::NoJsonObject)?;
    let mut entries = Vec::with_capacity(map.len());
    for (key, v) in &map {
        let value = scalar_text(v).ok_or_else(|| ParseError::WrongType { key: key.clone(), expected: "a string" })?;
        entries.push((key.trim().parse::<u64>().ok(), key.clone(), value));
    }
    entries.sort_by(|a, b| match (a.0, b.0) {
        (Some(x), Some(y)) => x.cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.1.cmp(&b.1),
    });
    Ok(entries.into_iter().map(|(_, _, v)| v).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plain_choice() {
        let c = parse_choice(r#"{"thought": "go to door", "choice": 2}"#).unwrap();
        assert_eq!(c, Choice { thought: "go to door".into(), choice: 2 });
    }

    #[test]
    fn fenced_choice_with_prose() {
        let text = "Sure! Here is my answer:\n```json\n{\"thought\": \"go to door\", \"choice\": 2}\n```\n";
        assert_eq!(parse_choice(text).unwrap().choice, 2);
    }

    #[test]
    fn choice_coercion() {
        assert_eq!(parse_choice(r#"{"thought": "", "choice": "4"}"#).unwrap().choice, 4);
        assert_eq!(parse_choice(r#"{"thought": "", "choice": 3.0}"#).unwrap().choice, 3);
        assert!(matches!(parse_choice(r#"{"thought": "t", "choice": "two"}"#), Err(ParseError::NonIntegerChoice(_))));
        assert!(matches!(parse_choice(r#"{"choice": "two"}"#), Err(ParseError::MissingKey(_))));
        assert!(matches!(parse_choice(r#"{"thought": "t", "choice": 2.5}"#), Err(ParseError::NonIntegerChoice(_))));
        assert_eq!(parse_choice(r#"{"thought": "t"}"#), Err(ParseError::MissingKey("choice".into())));
        assert_eq!(parse_choice("no json here"), Err(ParseError::NoJsonObject));
    }

    #[test]
    fn skips_broken_braces_before_the_object() {
        let text = r#"I think {maybe} the answer is {"thought": "x", "choice": 1}"#;
        assert_eq!(parse_choice(text).unwrap().choice, 1);
    }

    #[test]
    fn awm_failure_payload() {
        let text = "{\n  \"goal\": \"Pick up grey key.\",\n  \"workflow\": \"\"\n}";
        let map = parse_json_payload(text, &[("goal", FieldKind::Text), ("workflow", FieldKind::Text)]).unwrap();
        assert_eq!(map["goal"], PayloadValue::Text("Pick up grey key.".into()));
        assert_eq!(map["workflow"], PayloadValue::Text(String::new()));
    }

    #[test]
    fn echo_goal_list() {
        let map = parse_json_payload(
            r#"{"possible_goals": ["Pick up the grey star"]}"#,
            &[("possible_goals", FieldKind::TextList)],
        )
        .unwrap();
        assert_eq!(map["possible_goals"].as_list().unwrap(), ["Pick up the grey star".to_string()]);
    }

    #[test]
    fn payload_errors() {
        assert_eq!(parse_json_payload("nothing", &[("goal", FieldKind::Text)]), Err(ParseError::NoJsonObject));
        assert_eq!(
            parse_json_payload(r#"{"goal": "x"}"#, &[("goal", FieldKind::Text), ("workflow", FieldKind::Text)]),
            Err(ParseError::MissingKey("workflow".into()))
        );
        assert!(matches!(
            parse_json_payload(r#"{"possible_goals": "x"}"#, &[("possible_goals", FieldKind::TextList)]),
            Err(ParseError::WrongType { .. })
        ));
    }

    #[test]
    fn summary_orders_numerically() {
        let text = r#"{"10": "c", "2": "b", "0": "a", "note": "z"}"#;
        assert_eq!(parse_summary(text).unwrap(), vec!["a", "b", "c", "z"]);
    }

    proptest! {
        #[test]
        fn parsers_never_panic(text in "\\PC{0,200}") {
            let _ = parse_choice(&text);
            let _ = parse_summary(&text);
            let _ = parse_json_payload(&text, &[("goal", FieldKind::Text), ("possible_goals", FieldKind::TextList)]);
        }

        #[test]
        fn embedded_choice_is_found(prefix in "[a-z \\n`]{0,30}", thought in "[a-zA-Z ]{0,20}", choice in 0i64..6) {
            let text = format!("{prefix}{{\"thought\": \"{thought}\", \"choice\": {choice}}}");
            let parsed = parse_choice(&text).unwrap();
            prop_assert_eq!(parsed.choice, choice);
            prop_assert_eq!(parsed.thought, thought);
        }
    }
}
