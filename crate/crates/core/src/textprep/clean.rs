//! Rule-based cleaning of scraped event text.
//!
//! Rules, applied in order:
//! 1. decode `\uXXXX` escape sequences (surrogate pairs are joined)
//! 2. replace `<...>` spans with a space, then decode `&amp; &lt; &gt; &quot; &nbsp; &#NN; &#xHH;`
//! 3. remove e-mail addresses
//! 4. remove URLs (`http://`, `https://`, `www.`)
//! 5. map punctuation to a space, keeping `. , -` and word-internal apostrophes
//! 6. canonical decomposition, drop combining marks, drop remaining non-ASCII
//! 7. collapse whitespace and trim
//!
//! Dropping characters in step 6 can glue fragments back into something the
//! earlier rules would have removed (`ww\u{300}w.example.org`), so the rule
//! list is re-applied until the output is stable.
//!
//! A payload that is itself a JSON object (after escape decoding) is replaced
//! by its `title` and `description` fields before the rules run.

use std::sync::OnceLock;

use regex::Regex;
use unicode_normalization::char::{decompose_canonical, is_combining_mark};

const MAX_PASSES: usize = 4;

pub fn clean_text(raw: &str) -> String {
    let source = match embedded_json_text(raw) {
        Some(extracted) => extracted,
        None => raw.to_string(),
    };
    let mut current = apply_rules(&source);
    for _ in 1..MAX_PASSES {
        let next = apply_rules(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn apply_rules(input: &str) -> String {
    let s = decode_unicode_escapes(input);
    let s = strip_tags(&s);
    let s = decode_entities(&s);
    let s = email_re().replace_all(&s, " ");
    let s = url_re().replace_all(&s, " ");
    let s = map_punctuation(&s);
    let s = fold_to_ascii(&s);
    collapse_whitespace(&s)
}

fn email_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(?:\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,}").expect("valid email regex")
    })
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").expect("valid url regex"))
}

fn entity_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"&(?:amp|lt|gt|quot|nbsp|#[0-9]{1,7}|#[xX][0-9a-fA-F]{1,6});").expect("valid entity regex")
    })
}

/// Decodes `\uXXXX` sequences. Unpaired surrogates are dropped.
pub(crate) fn decode_unicode_escapes(input: &str) -> String {
    if !input.contains("\\u") {
        return input.to_string();
    }
    let bytes = input.as_bytes();
    let mut out = String::with_capacity(input.len());
    let mut i = 0;
    let mut pending_high: Option<u16> = None;
    while i < input.len() {
        if let Some(unit) = escape_at(bytes, i) {
            i += 6;
            match unit {
                0xD800..=0xDBFF => {
                    pending_high = Some(unit);
                }
                0xDC00..=0xDFFF => {
                    if let Some(high) = pending_high.take() {
                        let cp = 0x10000 + ((u32::from(high) - 0xD800) << 10) + (u32::from(unit) - 0xDC00);
                        if let Some(c) = char::from_u32(cp) {
                            out.push(c);
                        }
                    }
                }
                _ => {
                    pending_high = None;
                    if let Some(c) = char::from_u32(u32::from(unit)) {
                        out.push(c);
                    }
                }
            }
            continue;
        }
        pending_high = None;
        let ch = input[i..].chars().next().expect("index on char boundary");
        out.push(ch);
        i += ch.len_utf8();
    }
    out
}

fn escape_at(bytes: &[u8], i: usize) -> Option<u16> {
    if bytes.len() < i + 6 || bytes[i] != b'\\' || bytes[i + 1] != b'u' {
        return None;
    }
    let hex = std::str::from_utf8(&bytes[i + 2..i + 6]).ok()?;
    if !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    u16::from_str_radix(hex, 16).ok()
}

/// Replaces every `<` ... next `>` span with a single space. An unmatched `<` is kept.
fn strip_tags(input: &str) -> String {
    let mut out = String::with_capacity(input.len());
    let mut rest = input;
    while let Some(open) = rest.find('<') {
        out.push_str(&rest[..open]);
        match rest[open..].find('>') {
            Some(close_rel) => {
                out.push(' ');
                rest = &rest[open + close_rel + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn decode_entities(input: &str) -> String {
    entity_re()
        .replace_all(input, |caps: &regex::Captures<'_>| {
            let entity = &caps[0];
            let body = &entity[1..entity.len() - 1];
            let decoded = match body {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "nbsp" => Some('\u{a0}'),
                _ => {
                    let num = &body[1..];
                    let code = if let Some(hex) = num.strip_prefix(['x', 'X']) {
                        u32::from_str_radix(hex, 16).ok()
                    } else {
                        num.parse::<u32>().ok()
                    };
                    code.and_then(char::from_u32)
                }
            };
            decoded.map(String::from).unwrap_or_else(|| " ".to_string())
        })
        .into_owned()
}

fn base_is_ascii_alnum(c: char) -> bool {
    let mut first = None;
    decompose_canonical(c, |d| {
        if first.is_none() {
            first = Some(d);
        }
    });
    first.is_some_and(|d| d.is_ascii_alphanumeric())
}

fn map_punctuation(input: &str) -> String {
    let chars: Vec<char> = input.chars().map(|c| if c == '\u{2019}' { '\'' } else { c }).collect();
    let neighbour = |mut idx: isize, step: isize| -> Option<char> {
        loop {
            idx += step;
            if idx < 0 || idx as usize >= chars.len() {
                return None;
            }
            let c = chars[idx as usize];
            if !is_combining_mark(c) {
                return Some(c);
            }
        }
    };
    let mut out = String::with_capacity(input.len());
    for (i, &c) in chars.iter().enumerate() {
        let keep = c.is_alphanumeric()
            || c.is_whitespace()
            || is_combining_mark(c)
            || matches!(c, '.' | ',' | '-')
            || (c == '\''
                && neighbour(i as isize, -1).is_some_and(base_is_ascii_alnum)
                && neighbour(i as isize, 1).is_some_and(base_is_ascii_alnum));
        out.push(if keep { c } else { ' ' });
    }
    out
}

fn fold_to_ascii(input: &str) -> String {
    let mut out = String::with_capacity(input.len());
    for c in input.chars() {
        if c.is_whitespace() {
            out.push(' ');
            continue;
        }
        decompose_canonical(c, |d| {
            if d.is_ascii() && !is_combining_mark(d) {
                out.push(d);
            }
        });
    }
    out
}

fn collapse_whitespace(input: &str) -> String {
    input.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// If the escape-decoded payload is a JSON object, returns its `title` and
/// `description` joined by a space (searched depth-first).
fn embedded_json_text(raw: &str) -> Option<String> {
    let decoded = decode_unicode_escapes(raw);
    let trimmed = decoded.trim();
    if !trimmed.starts_with('{') {
        return None;
    }
    let value: serde_json::Value = serde_json::from_str(trimmed).ok()?;
    if !value.is_object() {
        return None;
    }
    let title = find_string_field(&value, "title");
    let description = find_string_field(&value, "description");
    if title.is_none() && description.is_none() {
        return None;
    }
    let parts: Vec<&str> =
        [title.as_deref(), description.as_deref()].into_iter().flatten().filter(|s| !s.trim().is_empty()).collect();
    Some(parts.join(" "))
}

fn find_string_field(value: &serde_json::Value, key: &str) -> Option<String> {
    match value {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                if k.eq_ignore_ascii_case(key) {
                    if let Some(s) = v.as_str() {
                        return Some(s.to_string());
                    }
                }
            }
            map.values().find_map(|v| find_string_field(v, key))
        }
        serde_json::Value::Array(items) => items.iter().find_map(|v| find_string_field(v, key)),
        _ => None,
    }
}
