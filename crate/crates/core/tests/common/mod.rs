//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use eventcat::classifier::{Method, Prediction};
use eventcat::taxonomy::CategoryId;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn prediction(index: usize, actual: Option<u32>, pred: u32) -> Prediction {
    Prediction {
        index,
        source_id: "test".into(),
        external_id: None,
        classes: Vec::new(),
        scores: Vec::new(),
        probabilities: Vec::new(),
        pred: CategoryId(pred),
        actual: actual.map(CategoryId),
        method: Method::Model,
        text: String::new(),
    }
}

/// Published per-class rows: name, precision, recall, f1, support.
pub const TABLE2: [(&str, f64, f64, f64, u64); 7] = [
    ("music", 0.87, 0.92, 0.90, 43839),
    ("performing arts", 0.88, 0.84, 0.86, 38372),
    ("art and culture", 0.88, 0.87, 0.88, 30088),
    ("sports", 0.97, 0.97, 0.97, 20546),
    ("other events", 0.81, 0.80, 0.80, 20337),
    ("trade fairs and conferences", 0.84, 0.85, 0.84, 11567),
    ("kids and family", 0.76, 0.78, 0.77, 8426),
];

// ---------------------------------------------------------------------------
// Classifier objective over dense nested vectors.

/// Weighted mean cross-entropy plus `(l2/2)·Σ B[c][j]²` over non-intercept
/// columns. `b[c]` has the intercept last.
pub fn dense_loss(b: &[Vec<f64>], xs: &[Vec<f64>], ys: &[usize], w: &[f64], l2: f64) -> f64 {
    let d = xs[0].len();
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z: Vec<f64> = b.iter().map(|row| row[d] + (0..d).map(|j| row[j] * x[j]).sum::<f64>()).collect();
        let m = z.iter().cloned().fold(f64::MIN, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        num += w[y] * (lse - z[y]);
        den += w[y];
    }
    let penalty: f64 = b.iter().map(|row| row[..d].iter().map(|v| v * v).sum::<f64>()).sum();
    num / den + 0.5 * l2 * penalty
}

// ---------------------------------------------------------------------------
// Metrics by scanning (actual, predicted) pairs once per class.

pub struct OracleMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

pub fn oracle_metrics(pairs: &[(u32, u32)], class: u32) -> OracleMetrics {
    let tp = pairs.iter().filter(|(a, p)| *a == class && *p == class).count() as f64;
    let predicted = pairs.iter().filter(|(_, p)| *p == class).count() as f64;
    let actual = pairs.iter().filter(|(a, _)| *a == class).count();
    let precision = if predicted == 0.0 { 0.0 } else { tp / predicted };
    let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    OracleMetrics { precision, recall, f1, support: actual as u64 }
}

// ---------------------------------------------------------------------------
// Text cleaning, one rule at a time, written with character scanners.

fn rule_unicode_escapes(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut units: Vec<Option<u16>> = Vec::new();
    let mut plain: Vec<Option<char>> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let is_escape = chars[i] == '\\'
            && chars.get(i + 1) == Some(&'u')
            && i + 6 <= chars.len()
            && chars[i + 2..i + 6].iter().all(|c| c.is_ascii_hexdigit());
        if is_escape {
            let hex: String = chars[i + 2..i + 6].iter().collect();
            units.push(Some(u16::from_str_radix(&hex, 16).unwrap()));
            plain.push(None);
            i += 6;
        } else {
            units.push(None);
            plain.push(Some(chars[i]));
            i += 1;
        }
    }
    let mut out = String::new();
    let mut k = 0;
    while k < units.len() {
        match units[k] {
            None => out.push(plain[k].unwrap()),
            Some(u) if (0xD800..0xDC00).contains(&u) => {
                if let Some(Some(low)) = units.get(k + 1) {
                    if (0xDC00..0xE000).contains(low) {
                        out.extend(char::decode_utf16([u, *low]).flatten());
                        k += 1;
                    }
                }
            }
            Some(u) if (0xDC00..0xE000).contains(&u) => {}
            Some(u) => out.push(char::from_u32(u as u32).unwrap()),
        }
        k += 1;
    }
    out
}

fn rule_tags(s: &str) -> String {
    let mut out = String::new();
    let mut buffer = String::new();
    let mut inside = false;
    for c in s.chars() {
        if inside {
            buffer.push(c);
            if c == '>' {
                out.push(' ');
                buffer.clear();
                inside = false;
            }
        } else if c == '<' {
            inside = true;
            buffer.push(c);
        } else {
            out.push(c);
        }
    }
    out + &buffer
}

fn rule_entities(s: &str) -> String {
    let mut out = String::new();
    let mut rest = s;
    'scan: while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp..];
        for (name, ch) in [("&amp;", '&'), ("&lt;", '<'), ("&gt;", '>'), ("&quot;", '"'), ("&nbsp;", '\u{a0}')] {
            if let Some(after) = tail.strip_prefix(name) {
                out.push(ch);
                rest = after;
                continue 'scan;
            }
        }
        if let Some(body) = tail.strip_prefix("&#") {
            let (radix, digits_start, max) = match body.chars().next() {
                Some('x') | Some('X') => (16, 1, 6),
                _ => (10, 0, 7),
            };
            let digits: String = body[digits_start..].chars().take_while(|c| c.is_digit(radix)).collect();
            let end = 2 + digits_start + digits.len();
            if !digits.is_empty() && digits.len() <= max && tail[end..].starts_with(';') {
                match u32::from_str_radix(&digits, radix).ok().and_then(char::from_u32) {
                    Some(c) => out.push(c),
                    None => out.push(' '),
                }
                rest = &tail[end + 1..];
                continue;
            }
        }
        out.push('&');
        rest = &tail[1..];
    }
    out + rest
}

fn local_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || "._%+-".contains(c)
}

fn domain_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '-' || c == '.'
}

/// Longest valid domain prefix: labels separated by dots, last label two or
/// more ASCII letters.
fn domain_len(chars: &[char]) -> Option<usize> {
    let run = chars.iter().take_while(|c| domain_char(**c)).count();
    (1..=run).rev().find(|&n| {
        let text: String = chars[..n].iter().collect();
        let labels: Vec<&str> = text.split('.').collect();
        labels.len() >= 2
            && labels.iter().all(|l| !l.is_empty())
            && labels.last().unwrap().len() >= 2
            && labels.last().unwrap().chars().all(|c| c.is_ascii_alphabetic())
    })
}

fn rule_emails(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut drop = vec![false; chars.len()];
    let mut i = 0;
    while i < chars.len() {
        if local_char(chars[i]) && (i == 0 || !drop[i - 1]) {
            let local_end = i + chars[i..].iter().take_while(|c| local_char(**c)).count();
            if chars.get(local_end) == Some(&'@') {
                if let Some(n) = domain_len(&chars[local_end + 1..]) {
                    (i..local_end + 1 + n).for_each(|k| drop[k] = true);
                    i = local_end + 1 + n;
                    continue;
                }
            }
            i = local_end.max(i + 1);
            continue;
        }
        i += 1;
    }
    let mut out = String::new();
    let mut k = 0;
    while k < chars.len() {
        if drop[k] {
            out.push(' ');
            while k < chars.len() && drop[k] {
                k += 1;
            }
        } else {
            out.push(chars[k]);
            k += 1;
        }
    }
    out
}

fn rule_urls(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let lower: Vec<char> = chars.iter().map(|c| c.to_ascii_lowercase()).collect();
    let starts_with = |i: usize, p: &str| p.chars().enumerate().all(|(k, c)| lower.get(i + k) == Some(&c));
    let word = |c: char| c.is_alphanumeric() || c == '_';
    let mut out = String::new();
    let mut i = 0;
    while i < chars.len() {
        let boundary = word(chars[i]) && (i == 0 || !word(chars[i - 1]));
        let prefix = ["https://", "http://", "www."].iter().find(|p| starts_with(i, p));
        if let (true, Some(p)) = (boundary, prefix) {
            let start = i + p.len();
            let end = start + chars[start..].iter().take_while(|c| !c.is_whitespace()).count();
            if end > start {
                out.push(' ');
                i = end;
                continue;
            }
        }
        out.push(chars[i]);
        i += 1;
    }
    out
}

fn rule_punctuation_and_ascii(s: &str) -> String {
    let decomposed: Vec<char> = s.chars().map(|c| if c == '\u{2019}' { '\'' } else { c }).nfd().collect();
    let bases: Vec<(usize, char)> =
        decomposed.iter().copied().enumerate().filter(|(_, c)| !is_combining_mark(*c)).collect();
    let mut out = String::new();
    for (pos, &(_, c)) in bases.iter().enumerate() {
        let apostrophe_ok = c == '\''
            && pos > 0
            && pos + 1 < bases.len()
            && bases[pos - 1].1.is_ascii_alphanumeric()
            && bases[pos + 1].1.is_ascii_alphanumeric();
        let kept = c.is_alphanumeric() || c.is_whitespace() || ".,-".contains(c) || apostrophe_ok;
        if !kept || c.is_whitespace() {
            out.push(' ');
        } else if c.is_ascii() {
            out.push(c);
        }
    }
    out
}

fn rules(s: &str) -> String {
    let s = rule_unicode_escapes(s);
    let s = rule_tags(&s);
    let s = rule_entities(&s);
    let s = rule_emails(&s);
    let s = rule_urls(&s);
    let s = rule_punctuation_and_ascii(&s);
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn json_field(v: &serde_json::Value, key: &str) -> Option<String> {
    match v {
        serde_json::Value::Object(map) => {
            if let Some(serde_json::Value::String(s)) = map.get(key) {
                return Some(s.clone());
            }
            map.values().find_map(|child| json_field(child, key))
        }
        serde_json::Value::Array(items) => items.iter().find_map(|child| json_field(child, key)),
        _ => None,
    }
}

pub fn reference_clean(raw: &str) -> String {
    let decoded = rule_unicode_escapes(raw);
    let mut text = raw.to_string();
    if let Ok(v @ serde_json::Value::Object(_)) = serde_json::from_str::<serde_json::Value>(decoded.trim()) {
        let fields: Vec<String> = ["title", "description"].iter().filter_map(|k| json_field(&v, k)).collect();
        if !fields.is_empty() {
            text = fields.into_iter().filter(|f| !f.trim().is_empty()).collect::<Vec<_>>().join(" ");
        }
    }
    let mut current = rules(&text);
    loop {
        let next = rules(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}
