//! candump log files: `(<seconds>.<micros>) <channel> <ID>#<DATA>`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::frame::CanFrame;
use crate::recon::{ReconError, Trace, TraceRecord};
use crate::units::Micros;

pub const CHANNEL: &str = "vcan0";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceFileError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error(transparent)]
    Order(#[from] ReconError),
}

pub fn render(trace: &Trace) -> String {
    let mut s = String::with_capacity(trace.len() * 40);
    for r in trace.records() {
        let data: String = r.frame.data().iter().map(|b| format!("{b:02X}")).collect();
        let _ = writeln!(s, "({}) {CHANNEL} {:03X}#{data}", r.time, r.frame.id());
    }
    s
}

pub fn parse(text: &str) -> Result<Trace, TraceFileError> {
    let mut records = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: &str| TraceFileError::Syntax {
            line: n + 1,
            reason: reason.to_string(),
        };
        let mut parts = line.split_whitespace();
        let (Some(ts), Some(_channel), Some(body), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(err("expected `(<time>) <channel> <id>#<data>`"));
        };
        let time = ts
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .ok_or_else(|| err("timestamp must be parenthesized"))
            .and_then(|t| parse_time(t).ok_or_else(|| err("bad timestamp")))?;
        let (id_hex, data_hex) = body.split_once('#').ok_or_else(|| err("missing `#`"))?;
        if id_hex.len() != 3 {
            return Err(err("only 3-digit standard identifiers are supported"));
        }
        let id = u16::from_str_radix(id_hex, 16).map_err(|_| err("bad identifier"))?;
        if data_hex.starts_with('R') || data_hex.starts_with('#') {
            return Err(err("remote and CAN FD frames are not supported"));
        }
        if data_hex.len() % 2 != 0 || data_hex.len() > 16 {
            return Err(err("data must be 0 to 8 hex byte pairs"));
        }
        let data = (0..data_hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&data_hex[i..i + 2], 16))
            .collect::<Result<Vec<u8>, _>>()
            .map_err(|_| err("bad data byte"))?;
        let frame = CanFrame::new(id, &data).map_err(|e| err(&e.to_string()))?;
        records.push(TraceRecord { time, frame });
    }
    Ok(Trace::new(records)?)
}

fn parse_time(t: &str) -> Option<Micros> {
    let (secs, frac) = t.split_once('.').unwrap_or((t, ""));
    if secs.is_empty() || frac.len() > 6 || !secs.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let secs: u64 = secs.parse().ok()?;
    let micros: u64 = if frac.is_empty() { 0 } else { format!("{frac:0<6}").parse().ok()? };
    secs.checked_mul(1_000_000)?.checked_add(micros).map(Micros)
}
