//! Headset serial stream codec.
//!
//! Wire format (bit-exact):
//!
//! ```text
//! 0xAA 0xAA  LEN  PAYLOAD[LEN]  CHECKSUM
//! ```
//!
//! `LEN` is 1..=169. `CHECKSUM` is the one's complement of the low byte of the
//! payload byte sum. The payload is a sequence of rows:
//!
//! | code   | layout                          | row                 |
//! |--------|---------------------------------|---------------------|
//! | `0x02` | 1 value byte                    | `PoorSignal(0..=200)` |
//! | `0x04` | 1 value byte                    | `Attention(0..=100)`  |
//! | `0x80` | length byte `0x02`, 2 bytes BE  | `RawWave(i16)`        |
//!
//! Unknown codes below `0x80` carry one value byte and codes at or above
//! `0x80` carry an explicit length byte; both are skipped.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub const SYNC: u8 = 0xAA;
pub const MAX_PAYLOAD_LEN: usize = 169;
pub const SAMPLE_RATE_HZ: u32 = 512;

const CODE_POOR_SIGNAL: u8 = 0x02;
const CODE_ATTENTION: u8 = 0x04;
const CODE_RAW_WAVE: u8 = 0x80;
const EXTENDED_CODE_START: u8 = 0x80;

pub const MAX_ATTENTION: u8 = 100;
pub const MAX_POOR_SIGNAL: u8 = 200;

/// One decoded payload row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataRow {
    /// Raw ADC count.
    RawWave(i16),
    /// Attention level, 0..=100.
    Attention(u8),
    /// Contact quality, 0..=200 with 0 the best contact.
    PoorSignal(u8),
}

impl DataRow {
    fn validate(&self) -> Result<()> {
        match *self {
            DataRow::Attention(level) if level > MAX_ATTENTION => Err(Error::Range(format!(
                "attention level {level} exceeds {MAX_ATTENTION}"
            ))),
            DataRow::PoorSignal(q) if q > MAX_POOR_SIGNAL => Err(Error::Range(format!(
                "poor signal {q} exceeds {MAX_POOR_SIGNAL}"
            ))),
            _ => Ok(()),
        }
    }

    fn encoded_len(&self) -> usize {
        match self {
            DataRow::RawWave(_) => 4,
            DataRow::Attention(_) | DataRow::PoorSignal(_) => 2,
        }
    }

    fn write_to(&self, out: &mut Vec<u8>) {
        match *self {
            DataRow::RawWave(v) => {
                out.extend_from_slice(&[CODE_RAW_WAVE, 0x02]);
                out.extend_from_slice(&v.to_be_bytes());
            }
            DataRow::Attention(level) => out.extend_from_slice(&[CODE_ATTENTION, level]),
            DataRow::PoorSignal(q) => out.extend_from_slice(&[CODE_POOR_SIGNAL, q]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Packet {
    pub rows: Vec<DataRow>,
}

/// One's complement of the low byte of the payload sum.
pub fn checksum(payload: &[u8]) -> Result<u8> {
    check_payload_len(payload.len())?;
    Ok(!checksum_unchecked(payload))
}

fn checksum_unchecked(payload: &[u8]) -> u8 {
    payload.iter().fold(0u8, |acc, b| acc.wrapping_add(*b))
}

fn check_payload_len(len: usize) -> Result<()> {
    if len == 0 || len > MAX_PAYLOAD_LEN {
        return Err(Error::Length(format!(
            "payload length {len} outside 1..={MAX_PAYLOAD_LEN}"
        )));
    }
    Ok(())
}

/// Decodes the rows of a checksum-verified payload.
pub fn parse_payload(payload: &[u8]) -> Result<Vec<DataRow>> {
    let mut rows = Vec::new();
    let mut pos = 0;
    let truncated = |offset: usize, what: &str| Error::Payload {
        offset,
        reason: format!("truncated {what}"),
    };
    while pos < payload.len() {
        let code = payload[pos];
        if code < EXTENDED_CODE_START {
            let value = *payload
                .get(pos + 1)
                .ok_or_else(|| truncated(pos, "single-byte row"))?;
            let row = match code {
                CODE_POOR_SIGNAL => Some(DataRow::PoorSignal(value)),
                CODE_ATTENTION => Some(DataRow::Attention(value)),
                _ => None,
            };
            if let Some(row) = row {
                row.validate().map_err(|e| Error::Payload {
                    offset: pos,
                    reason: e.to_string(),
                })?;
                rows.push(row);
            }
            pos += 2;
        } else {
            let len = *payload
                .get(pos + 1)
                .ok_or_else(|| truncated(pos, "extended row length"))? as usize;
            let body = payload
                .get(pos + 2..pos + 2 + len)
                .ok_or_else(|| truncated(pos, "extended row body"))?;
            if code == CODE_RAW_WAVE {
                if len != 2 {
                    return Err(Error::Payload {
                        offset: pos,
                        reason: format!("raw wave row declares {len} bytes, expected 2"),
                    });
                }
                rows.push(DataRow::RawWave(i16::from_be_bytes([body[0], body[1]])));
            }
            pos += 2 + len;
        }
    }
    Ok(rows)
}

/// Serializes rows into a payload without framing.
pub fn encode_payload(rows: &[DataRow]) -> Result<Vec<u8>> {
    let len: usize = rows.iter().map(DataRow::encoded_len).sum();
    check_payload_len(len)?;
    let mut out = Vec::with_capacity(len);
    for row in rows {
        row.validate()?;
        row.write_to(&mut out);
    }
    Ok(out)
}

/// Emits a complete frame: sync, length, payload, checksum.
pub fn encode_packet(rows: &[DataRow]) -> Result<Vec<u8>> {
    let payload = encode_payload(rows)?;
    let mut frame = Vec::with_capacity(payload.len() + 4);
    frame.extend_from_slice(&[SYNC, SYNC, payload.len() as u8]);
    frame.extend_from_slice(&payload);
    frame.push(!checksum_unchecked(&payload));
    Ok(frame)
}

/// Bytes carried between [`frame_stream`] calls.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FramerState {
    pending: Vec<u8>,
}

impl FramerState {
    pub fn pending(&self) -> &[u8] {
        &self.pending
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FrameStats {
    pub packets_ok: u64,
    /// Frames that were delimited but rejected (checksum or payload).
    pub packets_dropped: u64,
    pub checksum_failures: u64,
    pub payload_errors: u64,
    /// Bytes that were not part of an accepted frame.
    pub bytes_skipped: u64,
}

impl FrameStats {
    pub fn merge(&mut self, other: &FrameStats) {
        self.packets_ok += other.packets_ok;
        self.packets_dropped += other.packets_dropped;
        self.checksum_failures += other.checksum_failures;
        self.payload_errors += other.payload_errors;
        self.bytes_skipped += other.bytes_skipped;
    }
}

/// Extracts every valid frame from `bytes`, resynchronizing on garbage.
///
/// A rejected frame restarts the scan one byte after its first sync byte, so
/// a genuine frame hidden behind a spurious header is still found. Incomplete
/// trailing bytes are returned in the new state.
pub fn frame_stream(bytes: &[u8], state: FramerState) -> (Vec<Packet>, FramerState, FrameStats) {
    let mut buf = state.pending;
    buf.extend_from_slice(bytes);
    let mut stats = FrameStats::default();
    let mut packets = Vec::new();
    let mut pos = 0;
    let len = buf.len();

    while pos < len {
        if buf[pos] != SYNC {
            stats.bytes_skipped += 1;
            pos += 1;
            continue;
        }
        if pos + 2 >= len {
            break;
        }
        // a third sync byte means the real header starts one byte later
        if buf[pos + 1] != SYNC || buf[pos + 2] == SYNC {
            stats.bytes_skipped += 1;
            pos += 1;
            continue;
        }
        let payload_len = buf[pos + 2] as usize;
        if payload_len == 0 || payload_len > MAX_PAYLOAD_LEN {
            stats.bytes_skipped += 1;
            pos += 1;
            continue;
        }
        let end = pos + 3 + payload_len;
        if end >= len {
            break;
        }
        let payload = &buf[pos + 3..end];
        if !checksum_unchecked(payload) != buf[end] {
            stats.checksum_failures += 1;
            stats.packets_dropped += 1;
            stats.bytes_skipped += 1;
            pos += 1;
            continue;
        }
        match parse_payload(payload) {
            Ok(rows) => {
                packets.push(Packet { rows });
                stats.packets_ok += 1;
                pos = end + 1;
            }
            Err(_) => {
                stats.payload_errors += 1;
                stats.packets_dropped += 1;
                stats.bytes_skipped += 1;
                pos += 1;
            }
        }
    }

    buf.drain(..pos);
    (packets, FramerState { pending: buf }, stats)
}

/// Stateful convenience wrapper over [`frame_stream`] that accumulates stats.
#[derive(Debug, Clone, Default)]
pub struct Framer {
    state: FramerState,
    stats: FrameStats,
}

impl Framer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) -> Vec<Packet> {
        let state = std::mem::take(&mut self.state);
        let (packets, state, stats) = frame_stream(bytes, state);
        self.state = state;
        self.stats.merge(&stats);
        packets
    }

    pub fn stats(&self) -> FrameStats {
        self.stats
    }

    pub fn pending_len(&self) -> usize {
        self.state.pending.len()
    }
}

/// Companion `.meta` file describing a replay capture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayMeta {
    pub sample_rate_hz: u32,
    pub device_notes: String,
}

impl Default for ReplayMeta {
    fn default() -> Self {
        Self {
            sample_rate_hz: SAMPLE_RATE_HZ,
            device_notes: String::new(),
        }
    }
}

impl ReplayMeta {
    /// Path of the companion file: the replay path with `.meta` appended.
    pub fn path_for(replay: &Path) -> std::path::PathBuf {
        let mut os = replay.as_os_str().to_owned();
        os.push(".meta");
        os.into()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut meta = ReplayMeta::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Record {
                index: n,
                line: n + 1,
                reason: "expected key = value".into(),
            })?;
            match key.trim() {
                "sample_rate_hz" => {
                    meta.sample_rate_hz = value.trim().parse().map_err(|_| Error::Record {
                        index: n,
                        line: n + 1,
                        reason: format!("bad sample rate {:?}", value.trim()),
                    })?
                }
                "device" => meta.device_notes = value.trim().to_string(),
                _ => {}
            }
        }
        Ok(meta)
    }
}

impl fmt::Display for ReplayMeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sample_rate_hz = {}", self.sample_rate_hz)?;
        writeln!(f, "device = {}", self.device_notes)
    }
}
