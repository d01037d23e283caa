//! BIO tag encoding, strict decoding and repair.

use super::SlotSpan;
use crate::error::{Error, Result};

pub const OUTSIDE: &str = "O";

/// A parsed BIO tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bio<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

impl<'a> Bio<'a> {
    pub fn parse(tag: &'a str) -> Result<Self> {
        if tag == OUTSIDE {
            return Ok(Bio::Outside);
        }
        match tag.split_once('-') {
            Some(("B", name)) if !name.is_empty() => Ok(Bio::Begin(name)),
            Some(("I", name)) if !name.is_empty() => Ok(Bio::Inside(name)),
            _ => Err(Error::invalid(format!("malformed BIO tag {tag:?}"))),
        }
    }
}

/// Renders spans as a tag sequence of `length` positions.
pub fn encode_bio(spans: &[SlotSpan], length: usize) -> Result<Vec<String>> {
    let mut tags = vec![OUTSIDE.to_string(); length];
    let mut taken = vec![false; length];
    for span in spans {
        if span.start >= span.end || span.end > length {
            return Err(Error::invalid(format!(
                "span {}[{}, {}) outside 0..{length}",
                span.name, span.start, span.end
            )));
        }
        if span.name.is_empty() {
            return Err(Error::invalid("span with empty slot name"));
        }
        for i in span.start..span.end {
            if taken[i] {
                return Err(Error::invalid(format!(
                    "span {}[{}, {}) overlaps another span at position {i}",
                    span.name, span.start, span.end
                )));
            }
            taken[i] = true;
            let prefix = if i == span.start { "B" } else { "I" };
            tags[i] = format!("{prefix}-{}", span.name);
        }
    }
    Ok(tags)
}

/// Strict decoding: an `I-x` that does not continue a `B-x`/`I-x` run is an error.
pub fn decode_bio<S: AsRef<str>>(tags: &[S]) -> Result<Vec<SlotSpan>> {
    let mut spans = Vec::new();
    let mut open: Option<SlotSpan> = None;
    for (i, tag) in tags.iter().enumerate() {
        match Bio::parse(tag.as_ref())? {
            Bio::Outside => spans.extend(open.take()),
            Bio::Begin(name) => {
                spans.extend(open.take());
                open = Some(SlotSpan::new(name, i, i + 1));
            }
            Bio::Inside(name) => match &mut open {
                Some(span) if span.name == name => span.end = i + 1,
                _ => return Err(Error::invalid(format!("orphan {} at position {i}", tag.as_ref()))),
            },
        }
    }
    spans.extend(open);
    Ok(spans)
}

/// Rewrites every orphan `I-x` to `B-x` so the sequence decodes strictly.
pub fn repair_bio<S: AsRef<str>>(tags: &[S]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(tags.len());
    let mut prev: Option<String> = None;
    for tag in tags {
        let tag = tag.as_ref();
        let fixed = match Bio::parse(tag) {
            Ok(Bio::Inside(name)) if prev.as_deref() != Some(name) => format!("B-{name}"),
            Ok(_) => tag.to_string(),
            Err(_) => OUTSIDE.to_string(),
        };
        prev = match Bio::parse(&fixed) {
            Ok(Bio::Begin(n)) | Ok(Bio::Inside(n)) => Some(n.to_string()),
            _ => None,
        };
        out.push(fixed);
    }
    out
}

/// True when every `I-x` continues a run of the same slot.
pub fn is_valid_bio<S: AsRef<str>>(tags: &[S]) -> bool {
    decode_bio(tags).is_ok()
}
