//! Extraction of segment ids from chat-model responses.

use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no bracketed list of quoted ids found")]
    NoIdList,
    #[error("no JSON object with \"explanation\" and \"answer\" found")]
    NoJsonObject,
    #[error("JSON object has no \"answer\" key")]
    MissingAnswer,
    #[error("\"answer\" is not a list of strings")]
    AnswerNotStringList,
    #[error("\"explanation\" is not a string")]
    ExplanationNotString,
    #[error("JSON object has no \"explanation\" key")]
    MissingExplanation,
}

/// Parse `[ 'id', "id", ... ]` starting at byte `start` (which must hold
/// `[`). Returns the ids, or `None` if the list is not well formed.
fn parse_list_at(text: &str, start: usize) -> Option<Vec<String>> {
    let bytes = text.as_bytes();
    debug_assert_eq!(bytes[start], b'[');
    let mut i = start + 1;
    let skip_ws = |i: &mut usize| {
        while *i < bytes.len() && bytes[*i].is_ascii_whitespace() {
            *i += 1;
        }
    };
    let mut ids = Vec::new();
    skip_ws(&mut i);
    if bytes.get(i) == Some(&b']') {
        return Some(ids);
    }
    loop {
        skip_ws(&mut i);
        let quote = *bytes.get(i)?;
        if quote != b'\'' && quote != b'"' {
            return None;
        }
        let body_start = i + 1;
        let len = text[body_start..].find(quote as char)?;
        let id = &text[body_start..body_start + len];
        if id.contains('\n') {
            return None;
        }
        ids.push(id.to_owned());
        i = body_start + len + 1;
        skip_ws(&mut i);
        match bytes.get(i)? {
            b',' => i += 1,
            b']' => return Some(ids),
            _ => return None,
        }
    }
}

/// Ids from the first well-formed bracketed list of quoted strings,
/// e.g. `['1129', '1139','1159']`. Surrounding prose is ignored.
pub fn parse_closed_response(text: &str) -> Result<Vec<String>, ParseError> {
    text.match_indices('[')
        .find_map(|(at, _)| parse_list_at(text, at))
        .ok_or(ParseError::NoIdList)
}

/// Rewrite single-quoted strings as JSON strings, leaving double-quoted
/// strings untouched. Lets Python-literal style answers through.
fn requote(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        match c {
            '"' => {
                out.push('"');
                let mut escaped = false;
                for c in chars.by_ref() {
                    out.push(c);
                    if escaped {
                        escaped = false;
                    } else if c == '\\' {
                        escaped = true;
                    } else if c == '"' {
                        break;
                    }
                }
            }
            '\'' => {
                out.push('"');
                for c in chars.by_ref() {
                    match c {
                        '\'' => break,
                        '"' => out.push_str("\\\""),
                        c => out.push(c),
                    }
                }
                out.push('"');
            }
            c => out.push(c),
        }
    }
    out
}

fn find_answer_object(text: &str) -> Result<(String, Vec<String>), ParseError> {
    let mut best_err = ParseError::NoJsonObject;
    for (at, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[at..]).into_iter::<Value>();
        let Some(Ok(Value::Object(obj))) = stream.next() else {
            continue;
        };
        let explanation = obj.get("explanation");
        let answer = obj.get("answer");
        let err = match (explanation, answer) {
            (Some(Value::String(e)), Some(Value::Array(items))) => {
                let ids: Option<Vec<String>> = items.iter().map(|v| v.as_str().map(str::to_owned)).collect();
                match ids {
                    Some(ids) => return Ok((e.clone(), ids)),
                    None => ParseError::AnswerNotStringList,
                }
            }
            (Some(Value::String(_)), Some(_)) => ParseError::AnswerNotStringList,
            (Some(Value::String(_)), None) => ParseError::MissingAnswer,
            (Some(_), _) => ParseError::ExplanationNotString,
            (None, Some(_)) => ParseError::MissingExplanation,
            (None, None) => continue,
        };
        if best_err == ParseError::NoJsonObject {
            best_err = err;
        }
    }
    Err(best_err)
}

/// Explanation and ids from the first JSON object carrying both an
/// `"explanation"` string and an `"answer"` list of strings.
pub fn parse_open_response(text: &str) -> Result<(String, Vec<String>), ParseError> {
    match find_answer_object(text) {
        Ok(found) => Ok(found),
        Err(strict) => {
            if !text.contains('\'') {
                return Err(strict);
            }
            find_answer_object(&requote(text)).map_err(|relaxed| {
                if relaxed == ParseError::NoJsonObject {
                    strict
                } else {
                    relaxed
                }
            })
        }
    }
}
