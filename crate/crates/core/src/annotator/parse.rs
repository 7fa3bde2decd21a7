//! Strict parsing of the annotator's JSON reply.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::FacetLabel;
use crate::facet::Facet;

/// Why a reply was rejected. Every category is retryable; the category is
/// kept so audits can tell formatting drift from rubric violations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseCategory {
    NotJson,
    ExtraContent,
    NotAnObject,
    MissingField,
    WrongType,
    OutOfRange,
    EmptyReason,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{category:?}: {detail}")]
pub struct ParseError {
    pub category: ParseCategory,
    pub detail: String,
}

impl ParseError {
    fn new(category: ParseCategory, detail: impl Into<String>) -> Self {
        Self {
            category,
            detail: detail.into(),
        }
    }
}

/// Removes one enclosing markdown code fence (with optional language tag).
fn strip_fence(text: &str) -> String {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t.to_string();
    };
    // Drop the info string on the opening line, e.g. ```json
    let body = match rest.find('\n') {
        Some(nl) if rest[..nl].trim().chars().all(|c| c.is_ascii_alphanumeric()) => &rest[nl + 1..],
        _ => rest,
    };
    match body.rfind("```") {
        Some(end) => format!("{}{}", &body[..end], &body[end + 3..]),
        None => t.to_string(),
    }
}

/// Parses `{"background": {"score", "reason"}, "method": {"score", "reason"}}`.
///
/// Whitespace and a single enclosing code fence are tolerated; any other
/// surrounding text is rejected.
pub fn parse_annotation(raw: &str) -> Result<(FacetLabel, FacetLabel), ParseError> {
    let text = strip_fence(raw);
    let text = text.as_str();
    let mut stream = serde_json::Deserializer::from_str(text).into_iter::<Value>();
    let value = match stream.next() {
        Some(Ok(v)) => v,
        Some(Err(e)) => return Err(ParseError::new(ParseCategory::NotJson, e.to_string())),
        None => return Err(ParseError::new(ParseCategory::NotJson, "empty response")),
    };
    let consumed = stream.byte_offset();
    if !text[consumed..].trim().is_empty() {
        return Err(ParseError::new(
            ParseCategory::ExtraContent,
            format!("trailing text after JSON at byte {consumed}"),
        ));
    }
    let Value::Object(obj) = value else {
        return Err(ParseError::new(ParseCategory::NotAnObject, "top-level value is not an object"));
    };
    Ok((
        facet_label(&obj, Facet::Background)?,
        facet_label(&obj, Facet::Method)?,
    ))
}

fn facet_label(obj: &Map<String, Value>, facet: Facet) -> Result<FacetLabel, ParseError> {
    let key = facet.as_str();
    let entry = obj
        .get(key)
        .ok_or_else(|| ParseError::new(ParseCategory::MissingField, format!("missing `{key}`")))?
        .as_object()
        .ok_or_else(|| ParseError::new(ParseCategory::WrongType, format!("`{key}` is not an object")))?;
    let score = entry
        .get("score")
        .ok_or_else(|| ParseError::new(ParseCategory::MissingField, format!("missing `{key}.score`")))?;
    let score = match score {
        Value::Number(n) => n.as_i64().ok_or_else(|| {
            ParseError::new(ParseCategory::WrongType, format!("`{key}.score` is not an integer"))
        })?,
        _ => {
            return Err(ParseError::new(
                ParseCategory::WrongType,
                format!("`{key}.score` is not a number"),
            ))
        }
    };
    if !(0..=3).contains(&score) {
        return Err(ParseError::new(
            ParseCategory::OutOfRange,
            format!("`{key}.score` = {score} outside 0-3"),
        ));
    }
    let reason = match entry.get("reason") {
        None => {
            return Err(ParseError::new(
                ParseCategory::MissingField,
                format!("missing `{key}.reason`"),
            ))
        }
        Some(Value::String(s)) => s.trim().to_string(),
        Some(_) => {
            return Err(ParseError::new(
                ParseCategory::WrongType,
                format!("`{key}.reason` is not a string"),
            ))
        }
    };
    if reason.is_empty() {
        return Err(ParseError::new(ParseCategory::EmptyReason, format!("empty `{key}.reason`")));
    }
    Ok(FacetLabel {
        facet,
        score: score as u8,
        reason,
    })
}

/// Canonical reply text for a pair of labels; inverse of [`parse_annotation`].
pub fn render_annotation(background: &FacetLabel, method: &FacetLabel) -> String {
    #[derive(Serialize)]
    struct Field<'a> {
        score: u8,
        reason: &'a str,
    }
    #[derive(Serialize)]
    struct Reply<'a> {
        background: Field<'a>,
        method: Field<'a>,
    }
    let reply = Reply {
        background: Field { score: background.score, reason: &background.reason },
        method: Field { score: method.score, reason: &method.reason },
    };
    serde_json::to_string(&reply).expect("plain struct serializes")
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    const EXAMPLE: &str =
        r#"{"background":{"score":3,"reason":"same task"},"method":{"score":0,"reason":"BERT vs CRF"}}"#;

    #[test]
    fn parses_same_task_no_shared_method() {
        let (bg, mt) = parse_annotation(EXAMPLE).unwrap();
        assert_eq!((bg.score, mt.score), (3, 0));
        assert_eq!(bg.facet, Facet::Background);
        assert_eq!(mt.reason, "BERT vs CRF");
    }

    #[test]
    fn out_of_range_score() {
        let raw = r#"{"background":{"score":5,"reason":"x"},"method":{"score":0,"reason":"y"}}"#;
        assert_eq!(parse_annotation(raw).unwrap_err().category, ParseCategory::OutOfRange);
    }

    /// Mutations of a valid reply and whether each must still parse.
    fn mutated_fixture() -> Vec<(String, Option<ParseCategory>)> {
        use ParseCategory::*;
        let e = EXAMPLE;
        vec![
            (e.to_string(), None),
            (format!("  \n{e}\n\t"), None),
            (format!("```json\n{e}\n```"), None),
            (format!("```\n{e}\n```"), None),
            (format!("```JSON\n{e}\n```  "), None),
            (format!("\n```json\n{e}\n```\n"), None),
            (serde_json::to_string_pretty(&serde_json::from_str::<Value>(e).unwrap()).unwrap(), None),
            (format!("Here is the result:\n{e}"), Some(NotJson)),
            (format!("{e}\nHope this helps!"), Some(ExtraContent)),
            (format!("```json\n{e}\n```\nDone."), Some(ExtraContent)),
            (format!("Sure! ```json\n{e}\n```"), Some(NotJson)),
            (format!("{e}{e}"), Some(ExtraContent)),
            (e.replace("\"score\":3", "\"score\":\"3\""), Some(WrongType)),
            (e.replace("\"score\":3", "\"score\":2.5"), Some(WrongType)),
            (e.replace("\"score\":0", "\"score\":-1"), Some(OutOfRange)),
            (e.replace("\"reason\":\"same task\"", "\"reason\":\"  \""), Some(EmptyReason)),
            (e.replace(",\"reason\":\"BERT vs CRF\"", ""), Some(MissingField)),
            (e.replace("\"method\"", "\"approach\""), Some(MissingField)),
            (format!("[{e}]"), Some(NotAnObject)),
            (e[..e.len() - 1].to_string(), Some(NotJson)),
        ]
    }

    #[test]
    fn mutated_reply_fixture() {
        let fixture = mutated_fixture();
        assert_eq!(fixture.len(), 20);
        for (raw, expected) in fixture {
            let got = parse_annotation(&raw);
            match expected {
                None => {
                    let (bg, mt) = got.unwrap_or_else(|e| panic!("{raw:?} should parse: {e}"));
                    assert_eq!(render_annotation(&bg, &mt), EXAMPLE);
                }
                Some(cat) => assert_eq!(got.unwrap_err().category, cat, "for {raw:?}"),
            }
        }
    }

    proptest! {
        #[test]
        fn render_then_parse_round_trips(
            bg in 0u8..=3, mt in 0u8..=3,
            bg_reason in "[A-Za-z0-9 ,.\"'{}\\\\-]{0,40}[A-Za-z]",
            mt_reason in "[A-Za-z][A-Za-z0-9 ,.:()\\n-]{0,40}",
        ) {
            let b = FacetLabel { facet: Facet::Background, score: bg, reason: bg_reason.trim().to_string() };
            let m = FacetLabel { facet: Facet::Method, score: mt, reason: mt_reason.trim().to_string() };
            let (pb, pm) = parse_annotation(&render_annotation(&b, &m)).unwrap();
            prop_assert_eq!(pb, b);
            prop_assert_eq!(pm, m);
        }
    }
}
