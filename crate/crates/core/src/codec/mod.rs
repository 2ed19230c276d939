//! Plain-text grammars for trajectories, 3D boxes, and roadgraphs.
//!
//! Numbers are always written with two decimals, rounded half away from zero
//! on their shortest decimal representation. Parsing is lenient about the
//! number of decimals so that hand- or model-written text is accepted.
//! The token-level grammar is documented in `docs/grammar.md`.

mod boxes;
mod intent;
mod roadgraph;
mod trajectory;

pub use boxes::{decode_boxes, encode_box, encode_boxes, sort_by_depth, Box3D, BoxClass};
pub use intent::IntentCommand;
pub use roadgraph::{
    decode_roadgraph, dynamic_sample_polyline, encode_roadgraph, order_and_shuffle_polylines,
    prepare_roadgraph, render_roadgraph, RoadGraph, RoadgraphCodecConfig, FIXED_POINT_COUNT,
    INVALID_TOKEN, VALID_TOKEN,
};
pub use trajectory::{
    decode_trajectory, encode_trajectory, encode_waypoint, parse_waypoint, parse_waypoints,
};

use crate::error::{Error, Result};

/// Renders `v` with exactly two decimals, rounding half away from zero.
///
/// Rounding is applied to the shortest decimal string that round-trips to
/// `v`, so `9.005` becomes `9.01` even though its binary value is slightly
/// below the tie. Values that round to zero never carry a minus sign.
pub fn format_fixed2(v: f64) -> Result<String> {
    if !v.is_finite() {
        return Err(Error::Encode(format!("non-finite value {v}")));
    }
    // Display for f64 never switches to exponent notation.
    let repr = format!("{}", v.abs());
    let (int_part, frac_part) = repr.split_once('.').unwrap_or((repr.as_str(), ""));
    let frac = frac_part.as_bytes();
    let mut digits: Vec<u8> = int_part.bytes().map(|b| b - b'0').collect();
    digits.push(frac.first().map_or(0, |b| b - b'0'));
    digits.push(frac.get(1).map_or(0, |b| b - b'0'));
    if frac.get(2).is_some_and(|&b| b >= b'5') {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let negative = v < 0.0 && digits.iter().any(|&d| d != 0);
    let split = digits.len() - 2;
    let mut out = String::with_capacity(digits.len() + 2);
    if negative {
        out.push('-');
    }
    out.extend(digits[..split].iter().map(|d| char::from(b'0' + d)));
    out.push('.');
    out.extend(digits[split..].iter().map(|d| char::from(b'0' + d)));
    Ok(out)
}

/// Parses one number token; any decimal count is accepted, non-finite values are not.
pub(crate) fn parse_number(tok: &str) -> Option<f64> {
    let tok = tok.trim();
    if tok.is_empty()
        || !tok
            .bytes()
            .all(|b| b.is_ascii_digit() || matches!(b, b'-' | b'+' | b'.' | b'e' | b'E'))
    {
        return None;
    }
    tok.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Byte cursor used by the hand-written parsers.
pub(crate) struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    pub(crate) fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    /// Skips whitespace and returns how many bytes were skipped.
    pub(crate) fn skip_ws(&mut self) -> usize {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        self.pos - start
    }

    pub(crate) fn expect(&mut self, c: u8) -> Result<()> {
        match self.peek() {
            Some(b) if b == c => {
                self.pos += 1;
                Ok(())
            }
            Some(b) => Err(Error::parse(
                self.pos,
                format!("expected `{}`, found `{}`", c as char, b as char),
            )),
            None => Err(Error::parse(
                self.pos,
                format!("expected `{}`, found end of input", c as char),
            )),
        }
    }

    /// Consumes bytes until one of `stops` (or the end) and returns them with their offset.
    pub(crate) fn take_until(&mut self, stops: &[u8]) -> (usize, &'a str) {
        let start = self.pos;
        while self.peek().is_some_and(|b| !stops.contains(&b)) {
            self.pos += 1;
        }
        (start, &self.src[start..self.pos])
    }
}
