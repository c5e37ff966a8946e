//! ASCII results-file codec.
//!
//! A results file is a sequence of logical records laid out back to back and
//! wrapped into physical lines of 80 characters. Every record starts with `*`
//! followed by its item count `L`, its record key and `L - 2` attribute items.
//! Items come in three encodings:
//!
//! * `I` + two-character width `w` + `w` characters of integer,
//! * `D` + 22-character scientific real (`E` or `D` exponent marker),
//! * `A` + 8 characters of text, blank padded.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

/// Physical line width of the ASCII results file.
pub const LINE_WIDTH: usize = 80;
/// Characters following the `D` marker of a real item.
pub const FLOAT_FIELD_WIDTH: usize = 22;
/// Characters following the `A` marker of a text item.
pub const STR8_WIDTH: usize = 8;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("results file not found: {0}")]
    FileNotFound(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("unknown item marker {found:?} at offset {offset}")]
    UnknownItemMarker { offset: usize, found: char },
    #[error("malformed integer width field {field:?} at offset {offset}")]
    MalformedWidth { offset: usize, field: String },
    #[error("malformed integer {field:?} at offset {offset}")]
    MalformedInt { offset: usize, field: String },
    #[error("malformed real {field:?} at offset {offset}")]
    MalformedFloat { offset: usize, field: String },
    #[error("item truncated at offset {offset}: need {needed} characters, {available} left")]
    TruncatedItem {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("expected '*' at offset {offset}, found {found:?}")]
    ExpectedRecordStart { offset: usize, found: char },
    #[error("bad record header at offset {offset}: {reason}")]
    BadRecordHeader { offset: usize, reason: String },
    #[error(
        "record at offset {offset} declares {expected} attributes but the stream ends after {read}"
    )]
    AttributeUnderrun {
        offset: usize,
        expected: usize,
        read: usize,
    },
    #[error("record invariant violated: {0}")]
    InvariantViolation(String),
    #[error("text item {0:?} is not 8 ASCII characters or fewer")]
    BadText(String),
}

impl CodecError {
    /// Stream offset the error refers to, when it has one.
    pub fn offset(&self) -> Option<usize> {
        match self {
            CodecError::UnknownItemMarker { offset, .. }
            | CodecError::MalformedWidth { offset, .. }
            | CodecError::MalformedInt { offset, .. }
            | CodecError::MalformedFloat { offset, .. }
            | CodecError::TruncatedItem { offset, .. }
            | CodecError::ExpectedRecordStart { offset, .. }
            | CodecError::BadRecordHeader { offset, .. }
            | CodecError::AttributeUnderrun { offset, .. } => Some(*offset),
            _ => None,
        }
    }
}

/// One encoded value inside a record.
#[derive(Clone, Debug, PartialEq)]
pub enum DataItem {
    Int(i64),
    Float(f64),
    /// Always exactly 8 ASCII characters.
    Str8(String),
}

impl DataItem {
    /// Builds a text item, padding with trailing blanks to 8 characters.
    pub fn str8(text: &str) -> Result<DataItem, CodecError> {
        if !text.is_ascii() || text.len() > STR8_WIDTH || text.contains(['\n', '\r']) {
            return Err(CodecError::BadText(text.to_string()));
        }
        Ok(DataItem::Str8(format!("{text:<8}")))
    }

    /// Splits text longer than 8 characters into consecutive text items.
    pub fn split_text(text: &str) -> Result<Vec<DataItem>, CodecError> {
        if !text.is_ascii() {
            return Err(CodecError::BadText(text.to_string()));
        }
        if text.is_empty() {
            return Ok(vec![DataItem::str8("")?]);
        }
        text.as_bytes()
            .chunks(STR8_WIDTH)
            .map(|c| DataItem::str8(std::str::from_utf8(c).expect("ascii")))
            .collect()
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            DataItem::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            DataItem::Float(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            DataItem::Str8(s) => Some(s),
            _ => None,
        }
    }

    /// Appends the encoded form of this item to `out`.
    pub fn encode_into(&self, out: &mut String) {
        match self {
            DataItem::Int(v) => {
                let digits = v.to_string();
                out.push('I');
                out.push_str(&format!("{:>2}", digits.len()));
                out.push_str(&digits);
            }
            DataItem::Float(v) => {
                out.push('D');
                out.push_str(&format_e22_15(*v));
            }
            DataItem::Str8(s) => {
                out.push('A');
                out.push_str(&format!("{s:<8.8}"));
            }
        }
    }

    pub fn encode(&self) -> String {
        let mut s = String::new();
        self.encode_into(&mut s);
        s
    }
}

impl fmt::Display for DataItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataItem::Int(v) => write!(f, "I {v}"),
            DataItem::Float(v) => write!(f, "D {}", crate::format::sig6(*v)),
            DataItem::Str8(s) => write!(f, "A {s:?}"),
        }
    }
}

/// Fortran `E22.15`-style rendering with one digit before the point.
///
/// Three-digit exponents drop the `E`, as Fortran does, so that negative
/// values keep all 15 fractional digits inside the 22-character field.
pub fn format_e22_15(value: f64) -> String {
    if !value.is_finite() {
        let text = if value.is_nan() {
            "NaN"
        } else if value > 0.0 {
            "Infinity"
        } else {
            "-Infinity"
        };
        return format!("{text:>22}");
    }
    let raw = format!("{value:.15E}");
    let (mantissa, exp) = raw.split_once('E').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    let body = if exp.abs() < 100 {
        format!("{mantissa}E{sign}{:02}", exp.abs())
    } else {
        format!("{mantissa}{sign}{:03}", exp.abs())
    };
    format!("{body:>22}")
}

fn parse_real_field(field: &str) -> Option<f64> {
    let trimmed = field.trim();
    if trimmed.is_empty() {
        return None;
    }
    let mut text: String = trimmed
        .chars()
        .map(|c| if c == 'D' || c == 'd' { 'E' } else { c })
        .collect();
    if !text.contains(['E', 'e']) {
        // Fortran form without exponent letter: "1.5-300"
        if let Some(pos) = text[1..].rfind(['+', '-']) {
            text.insert(pos + 1, 'E');
        }
    }
    text.parse().ok()
}

fn take(stream: &[u8], pos: usize, len: usize) -> Result<&str, CodecError> {
    if pos + len > stream.len() {
        return Err(CodecError::TruncatedItem {
            offset: pos,
            needed: len,
            available: stream.len().saturating_sub(pos),
        });
    }
    std::str::from_utf8(&stream[pos..pos + len]).map_err(|_| CodecError::MalformedInt {
        offset: pos,
        field: String::from_utf8_lossy(&stream[pos..pos + len]).into_owned(),
    })
}

/// Decodes one data item starting at byte `pos`; returns the item and the
/// position just past it.
pub fn decode_item(stream: &str, pos: usize) -> Result<(DataItem, usize), CodecError> {
    let bytes = stream.as_bytes();
    let marker = *bytes.get(pos).ok_or(CodecError::TruncatedItem {
        offset: pos,
        needed: 1,
        available: 0,
    })?;
    match marker {
        b'I' => {
            let field = take(bytes, pos + 1, 2)?;
            let width = field
                .trim_start_matches(' ')
                .parse::<usize>()
                .ok()
                .filter(|w| (1..=99).contains(w) && !field.ends_with(' '))
                .ok_or_else(|| CodecError::MalformedWidth {
                    offset: pos + 1,
                    field: field.to_string(),
                })?;
            let digits = take(bytes, pos + 3, width)?;
            let valid = digits
                .strip_prefix('-')
                .unwrap_or(digits)
                .bytes()
                .all(|b| b.is_ascii_digit())
                && digits != "-";
            let value = if valid {
                digits.parse::<i64>().ok()
            } else {
                None
            };
            let value = value.ok_or_else(|| CodecError::MalformedInt {
                offset: pos + 3,
                field: digits.to_string(),
            })?;
            Ok((DataItem::Int(value), pos + 3 + width))
        }
        b'D' => {
            let field = take(bytes, pos + 1, FLOAT_FIELD_WIDTH)?;
            let value = parse_real_field(field).ok_or_else(|| CodecError::MalformedFloat {
                offset: pos + 1,
                field: field.to_string(),
            })?;
            Ok((DataItem::Float(value), pos + 1 + FLOAT_FIELD_WIDTH))
        }
        b'A' => {
            let text = take(bytes, pos + 1, STR8_WIDTH)?;
            Ok((DataItem::Str8(text.to_string()), pos + 1 + STR8_WIDTH))
        }
        other => Err(CodecError::UnknownItemMarker {
            offset: pos,
            found: decode_char(bytes, pos).unwrap_or(other as char),
        }),
    }
}

fn decode_char(bytes: &[u8], pos: usize) -> Option<char> {
    let tail = &bytes[pos..];
    let end = tail.len().min(4);
    (1..=end).find_map(|n| {
        std::str::from_utf8(&tail[..n])
            .ok()
            .and_then(|s| s.chars().next())
    })
}

/// One logical record: key plus attributes. The item count `L` is derived.
#[derive(Clone, Debug, PartialEq)]
pub struct LogicalRecord {
    key: i64,
    attributes: Vec<DataItem>,
}

impl LogicalRecord {
    pub fn new(key: i64, attributes: Vec<DataItem>) -> Result<Self, CodecError> {
        if key < 0 {
            return Err(CodecError::InvariantViolation(format!(
                "record key {key} is negative"
            )));
        }
        Ok(LogicalRecord { key, attributes })
    }

    /// Builds a record from an explicit item count, checking `L = 2 + attrs`.
    pub fn from_parts(
        length: usize,
        key: i64,
        attributes: Vec<DataItem>,
    ) -> Result<Self, CodecError> {
        if length != attributes.len() + 2 {
            return Err(CodecError::InvariantViolation(format!(
                "declared length {length} but {} attributes (expected {})",
                attributes.len(),
                length.saturating_sub(2)
            )));
        }
        LogicalRecord::new(key, attributes)
    }

    pub fn key(&self) -> i64 {
        self.key
    }

    /// Item count `L`, including the length and key items.
    pub fn length(&self) -> usize {
        self.attributes.len() + 2
    }

    pub fn attributes(&self) -> &[DataItem] {
        &self.attributes
    }

    pub fn into_attributes(self) -> Vec<DataItem> {
        self.attributes
    }
}

/// Ordered sequence of decoded records.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilStream {
    pub records: Vec<LogicalRecord>,
}

impl FilStream {
    pub fn new(records: Vec<LogicalRecord>) -> Self {
        FilStream { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn with_key(&self, key: i64) -> impl Iterator<Item = &LogicalRecord> + '_ {
        self.records.iter().filter(move |r| r.key == key)
    }
}

/// Reads a results file and joins its physical lines, dropping every `\r`
/// and `\n` and nothing else.
pub fn fil_to_string(path: impl AsRef<Path>) -> Result<String, CodecError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => CodecError::FileNotFound(path.display().to_string()),
        _ => CodecError::Io(e),
    })?;
    Ok(strip_line_breaks(&text))
}

pub fn strip_line_breaks(text: &str) -> String {
    text.chars().filter(|c| *c != '\n' && *c != '\r').collect()
}

fn decode_record_at(
    flat: &str,
    content_end: usize,
    start: usize,
) -> Result<(LogicalRecord, usize), CodecError> {
    let header_err = |offset: usize, reason: String| CodecError::BadRecordHeader { offset, reason };
    let (len_item, pos) = decode_item(flat, start + 1)
        .map_err(|e| header_err(start, format!("record length item: {e}")))?;
    let length = match len_item {
        DataItem::Int(l) if l >= 2 => l as usize,
        DataItem::Int(l) => return Err(header_err(start, format!("record length {l} < 2"))),
        other => {
            return Err(header_err(
                start,
                format!("record length is not an integer: {other}"),
            ))
        }
    };
    let (key_item, mut pos) =
        decode_item(flat, pos).map_err(|e| header_err(start, format!("record key item: {e}")))?;
    let key = match key_item {
        DataItem::Int(k) if k >= 0 => k,
        DataItem::Int(k) => return Err(header_err(start, format!("negative record key {k}"))),
        other => {
            return Err(header_err(
                start,
                format!("record key is not an integer: {other}"),
            ))
        }
    };
    let expected = length - 2;
    let mut attributes = Vec::with_capacity(expected);
    for read in 0..expected {
        if pos >= content_end {
            return Err(CodecError::AttributeUnderrun {
                offset: start,
                expected,
                read,
            });
        }
        let (item, next) = decode_item(flat, pos)?;
        attributes.push(item);
        pos = next;
    }
    Ok((LogicalRecord { key, attributes }, pos))
}

fn skip_blanks(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() && bytes[pos] == b' ' {
        pos += 1;
    }
    pos
}

/// Decodes a flattened (line-break free) stream. Any error aborts with the
/// offending offset.
pub fn decode_stream(flat: &str) -> Result<FilStream, CodecError> {
    let bytes = flat.as_bytes();
    let content_end = flat.trim_end_matches(' ').len();
    let mut records = Vec::new();
    let mut pos = skip_blanks(bytes, 0);
    while pos < bytes.len() {
        if bytes[pos] != b'*' {
            return Err(CodecError::ExpectedRecordStart {
                offset: pos,
                found: decode_char(bytes, pos).unwrap_or('?'),
            });
        }
        let (record, next) = decode_record_at(flat, content_end, pos)?;
        records.push(record);
        pos = skip_blanks(bytes, next);
    }
    Ok(FilStream { records })
}

/// Salvage decode: on any error, records the error and resumes at the next
/// `*` after the failure point.
pub fn decode_stream_lenient(flat: &str) -> (FilStream, Vec<CodecError>) {
    let bytes = flat.as_bytes();
    let content_end = flat.trim_end_matches(' ').len();
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut pos = skip_blanks(bytes, 0);
    while pos < bytes.len() {
        if bytes[pos] != b'*' {
            errors.push(CodecError::ExpectedRecordStart {
                offset: pos,
                found: decode_char(bytes, pos).unwrap_or('?'),
            });
            pos = next_star(bytes, pos);
            continue;
        }
        match decode_record_at(flat, content_end, pos) {
            Ok((record, next)) => {
                records.push(record);
                pos = skip_blanks(bytes, next);
            }
            Err(e) => {
                errors.push(e);
                pos = next_star(bytes, pos + 1);
            }
        }
    }
    (FilStream { records }, errors)
}

fn next_star(bytes: &[u8], from: usize) -> usize {
    bytes[from.min(bytes.len())..]
        .iter()
        .position(|&b| b == b'*')
        .map_or(bytes.len(), |p| from + p)
}

/// Encodes one record as a single unwrapped string.
pub fn encode_record(record: &LogicalRecord) -> String {
    let mut out = String::with_capacity(16 + 23 * record.attributes.len());
    out.push('*');
    DataItem::Int(record.length() as i64).encode_into(&mut out);
    DataItem::Int(record.key).encode_into(&mut out);
    for item in &record.attributes {
        item.encode_into(&mut out);
    }
    out
}

/// Concatenates all records without line wrapping.
pub fn encode_flat(stream: &FilStream) -> String {
    stream.records.iter().map(encode_record).collect()
}

/// Encodes the stream as 80-character lines, each terminated by `\n`. Items
/// are split wherever the line boundary falls; the final line is blank padded.
pub fn encode_stream(stream: &FilStream) -> String {
    wrap_lines(&encode_flat(stream))
}

/// Wraps ASCII text into 80-character newline-terminated lines.
pub fn wrap_lines(flat: &str) -> String {
    let mut out = String::with_capacity(flat.len() + flat.len() / LINE_WIDTH + LINE_WIDTH);
    for chunk in flat.as_bytes().chunks(LINE_WIDTH) {
        let line = std::str::from_utf8(chunk).expect("encoded records are ASCII");
        out.push_str(&format!("{line:<80}"));
        out.push('\n');
    }
    out
}

/// Writes the wrapped encoding of `stream` to `path`.
pub fn write_fil(path: impl AsRef<Path>, stream: &FilStream) -> Result<(), CodecError> {
    fs::write(path, encode_stream(stream))?;
    Ok(())
}

/// Reads and decodes a results file.
pub fn read_fil(path: impl AsRef<Path>) -> Result<FilStream, CodecError> {
    decode_stream(&fil_to_string(path)?)
}
