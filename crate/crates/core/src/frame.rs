//! Standard (11-bit identifier) CAN data frames and their bit-level encoding.
//!
//! The serializer emits the full frame from start-of-frame to the last
//! end-of-frame bit, with standard bit stuffing over SOF..CRC. The dominant
//! runs of that stream drive the transceiver wake-up filter in
//! [`crate::wakeup`].

use std::fmt;

use thiserror::Error;

/// Largest standard identifier.
pub const MAX_STANDARD_ID: u16 = 0x7FF;

const CRC15_POLY: u16 = 0x4599;
const STUFF_RUN: usize = 5;
const EOF_BITS: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("identifier {0:#x} does not fit in 11 bits")]
    IdOutOfRange(u32),
    #[error("dlc {0} exceeds 8")]
    DlcOutOfRange(u8),
    #[error("dlc {dlc} does not match {len} data bytes")]
    DlcMismatch { dlc: u8, len: usize },
    #[error("bit rate must be positive")]
    InvalidBitrate,
    #[error("stuffing violation at bit {0}")]
    StuffingViolation(usize),
    #[error("stream ended after {0} bits")]
    Truncated(usize),
    #[error("malformed {field} at bit {at}")]
    Malformed { field: &'static str, at: usize },
    #[error("extended (29-bit) frames are not supported")]
    ExtendedFormat,
    #[error("remote frames are not supported")]
    RemoteFrame,
    #[error("crc mismatch: frame carries {carried:#06x}, computed {computed:#06x}")]
    Crc { carried: u16, computed: u16 },
}

/// A CAN 2.0A data frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CanFrame {
    id: u16,
    dlc: u8,
    data: [u8; 8],
}

impl CanFrame {
    pub fn new(id: u16, data: &[u8]) -> Result<Self, FrameError> {
        if data.len() > 8 {
            return Err(FrameError::DlcOutOfRange(data.len().min(255) as u8));
        }
        Self::from_parts(id, data.len() as u8, data)
    }

    /// Builds a frame from an explicit DLC, rejecting a DLC that disagrees
    /// with the payload length.
    pub fn from_parts(id: u16, dlc: u8, data: &[u8]) -> Result<Self, FrameError> {
        if id > MAX_STANDARD_ID {
            return Err(FrameError::IdOutOfRange(id as u32));
        }
        if dlc > 8 {
            return Err(FrameError::DlcOutOfRange(dlc));
        }
        if data.len() != dlc as usize {
            return Err(FrameError::DlcMismatch { dlc, len: data.len() });
        }
        let mut buf = [0u8; 8];
        buf[..data.len()].copy_from_slice(data);
        Ok(CanFrame { id, dlc, data: buf })
    }

    /// Identifier, DLC and payload all recessive: the lowest-priority frame
    /// that can exist, still a valid wake-up signal.
    pub fn all_recessive() -> Self {
        CanFrame {
            id: MAX_STANDARD_ID,
            dlc: 8,
            data: [0xFF; 8],
        }
    }

    pub fn id(&self) -> u16 {
        self.id
    }

    pub fn dlc(&self) -> u8 {
        self.dlc
    }

    pub fn data(&self) -> &[u8] {
        &self.data[..self.dlc as usize]
    }
}

impl fmt::Display for CanFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:03X}#", self.id)?;
        for b in self.data() {
            write!(f, "{b:02X}")?;
        }
        Ok(())
    }
}

/// Bus level of one bit time. Dominant is logical 0 and wins on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Dominant,
    Recessive,
}

impl Level {
    fn from_bit(bit: bool) -> Level {
        if bit {
            Level::Recessive
        } else {
            Level::Dominant
        }
    }

    fn complement(self) -> Level {
        match self {
            Level::Dominant => Level::Recessive,
            Level::Recessive => Level::Dominant,
        }
    }

    fn as_bit(self) -> u16 {
        match self {
            Level::Dominant => 0,
            Level::Recessive => 1,
        }
    }
}

/// A timed sequence of bus levels.
#[derive(Debug, Clone, PartialEq)]
pub struct BitStream {
    bits: Vec<Level>,
    bit_width_us: f64,
}

impl BitStream {
    pub fn new(bits: Vec<Level>, bit_width_us: f64) -> Self {
        assert!(bit_width_us > 0.0, "bit width must be positive");
        BitStream { bits, bit_width_us }
    }

    /// Bit width for a bus running at `bitrate` bits per second.
    pub fn width_for(bitrate: u32) -> Result<f64, FrameError> {
        if bitrate == 0 {
            return Err(FrameError::InvalidBitrate);
        }
        Ok(1e6 / bitrate as f64)
    }

    pub fn bits(&self) -> &[Level] {
        &self.bits
    }

    pub fn bit_width_us(&self) -> f64 {
        self.bit_width_us
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn duration_us(&self) -> f64 {
        self.bits.len() as f64 * self.bit_width_us
    }

    pub fn push(&mut self, level: Level) {
        self.bits.push(level);
    }
}

/// What the transmitter sees in the ACK slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AckSlot {
    /// Some receiver acknowledged.
    #[default]
    Dominant,
    /// Nobody acknowledged (single node on the bus).
    Recessive,
}

/// 15-bit CAN CRC over the given bit sequence.
pub fn crc15(bits: impl IntoIterator<Item = Level>) -> u16 {
    let mut crc: u16 = 0;
    for level in bits {
        let feedback = level.as_bit() ^ ((crc >> 14) & 1);
        crc = (crc << 1) & 0x7FFF;
        if feedback == 1 {
            crc ^= CRC15_POLY;
        }
    }
    crc
}

fn push_field(out: &mut Vec<Level>, value: u32, width: u32) {
    for i in (0..width).rev() {
        out.push(Level::from_bit((value >> i) & 1 == 1));
    }
}

/// Applies standard stuffing: a complement bit after every run of five
/// identical bits. Stuff bits count toward the following run.
fn stuff(raw: &[Level]) -> Vec<Level> {
    let mut out = Vec::with_capacity(raw.len() + raw.len() / 4);
    let mut last = None;
    let mut run = 0;
    for &level in raw {
        if Some(level) == last {
            run += 1;
        } else {
            last = Some(level);
            run = 1;
        }
        out.push(level);
        if run == STUFF_RUN {
            let stuff_bit = level.complement();
            out.push(stuff_bit);
            last = Some(stuff_bit);
            run = 1;
        }
    }
    out
}

/// Serializes a frame at `bitrate` with a dominant ACK slot.
pub fn serialize_frame(frame: &CanFrame, bitrate: u32) -> Result<BitStream, FrameError> {
    serialize_frame_with(frame, bitrate, AckSlot::Dominant)
}

pub fn serialize_frame_with(frame: &CanFrame, bitrate: u32, ack: AckSlot) -> Result<BitStream, FrameError> {
    let width = BitStream::width_for(bitrate)?;
    let mut raw = Vec::with_capacity(19 + 64 + 15);
    raw.push(Level::Dominant); // SOF
    push_field(&mut raw, frame.id as u32, 11);
    raw.extend([Level::Dominant; 3]); // RTR, IDE, r0
    push_field(&mut raw, frame.dlc as u32, 4);
    for &b in frame.data() {
        push_field(&mut raw, b as u32, 8);
    }
    let crc = crc15(raw.iter().copied());
    push_field(&mut raw, crc as u32, 15);

    let mut bits = stuff(&raw);
    bits.push(Level::Recessive); // CRC delimiter
    bits.push(match ack {
        AckSlot::Dominant => Level::Dominant,
        AckSlot::Recessive => Level::Recessive,
    });
    bits.push(Level::Recessive); // ACK delimiter
    bits.extend([Level::Recessive; EOF_BITS]);
    Ok(BitStream::new(bits, width))
}

/// Reads the stuffed region, removing stuff bits and checking the rule.
struct Destuffer<'a> {
    bits: &'a [Level],
    pos: usize,
    last: Option<Level>,
    run: usize,
}

impl<'a> Destuffer<'a> {
    fn new(bits: &'a [Level]) -> Self {
        Destuffer {
            bits,
            pos: 0,
            last: None,
            run: 0,
        }
    }

    fn raw_next(&mut self) -> Result<Level, FrameError> {
        let level = *self.bits.get(self.pos).ok_or(FrameError::Truncated(self.pos))?;
        self.pos += 1;
        Ok(level)
    }

    /// Consumes a pending stuff bit, if the previous five bits require one.
    fn skip_stuff(&mut self) -> Result<(), FrameError> {
        if self.run == STUFF_RUN {
            let at = self.pos;
            let level = self.raw_next()?;
            if Some(level) == self.last {
                return Err(FrameError::StuffingViolation(at));
            }
            self.last = Some(level);
            self.run = 1;
        }
        Ok(())
    }

    fn next(&mut self) -> Result<Level, FrameError> {
        self.skip_stuff()?;
        let level = self.raw_next()?;
        if Some(level) == self.last {
            self.run += 1;
        } else {
            self.last = Some(level);
            self.run = 1;
        }
        Ok(level)
    }

    fn field(&mut self, width: u32, sink: &mut Vec<Level>) -> Result<u32, FrameError> {
        let mut value = 0u32;
        for _ in 0..width {
            let level = self.next()?;
            sink.push(level);
            value = (value << 1) | level.as_bit() as u32;
        }
        Ok(value)
    }
}

/// Recovers a frame from a stream produced by [`serialize_frame`].
pub fn deserialize_frame(stream: &BitStream) -> Result<CanFrame, FrameError> {
    let mut rd = Destuffer::new(&stream.bits);
    let mut raw = Vec::with_capacity(128);

    if rd.field(1, &mut raw)? != 0 {
        return Err(FrameError::Malformed { field: "SOF", at: 0 });
    }
    let id = rd.field(11, &mut raw)? as u16;
    let rtr = rd.field(1, &mut raw)?;
    let ide = rd.field(1, &mut raw)?;
    if ide != 0 {
        return Err(FrameError::ExtendedFormat);
    }
    if rtr != 0 {
        return Err(FrameError::RemoteFrame);
    }
    let r0_at = rd.pos;
    if rd.field(1, &mut raw)? != 0 {
        return Err(FrameError::Malformed { field: "r0", at: r0_at });
    }
    let dlc_at = rd.pos;
    let dlc = rd.field(4, &mut raw)? as u8;
    if dlc > 8 {
        return Err(FrameError::Malformed { field: "DLC", at: dlc_at });
    }
    let mut data = [0u8; 8];
    for byte in data.iter_mut().take(dlc as usize) {
        *byte = rd.field(8, &mut raw)? as u8;
    }
    let computed = crc15(raw.iter().copied());
    let mut crc_bits = Vec::with_capacity(15);
    let carried = rd.field(15, &mut crc_bits)? as u16;
    // a stuff bit may follow the last CRC bit
    rd.skip_stuff()?;

    let expect_recessive = |field: &'static str, rd: &mut Destuffer| -> Result<(), FrameError> {
        let at = rd.pos;
        match rd.raw_next()? {
            Level::Recessive => Ok(()),
            Level::Dominant => Err(FrameError::Malformed { field, at }),
        }
    };
    expect_recessive("CRC delimiter", &mut rd)?;
    rd.raw_next()?; // ACK slot, either level
    expect_recessive("ACK delimiter", &mut rd)?;
    for _ in 0..EOF_BITS {
        expect_recessive("EOF", &mut rd)?;
    }
    if carried != computed {
        return Err(FrameError::Crc { carried, computed });
    }
    Ok(CanFrame { id, dlc, data })
}

/// A maximal run of consecutive dominant bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominantRun {
    pub start_us: f64,
    pub duration_us: f64,
    pub bits: usize,
}

/// Every maximal dominant run in the stream, in order.
pub fn dominant_runs(stream: &BitStream) -> Vec<DominantRun> {
    let width = stream.bit_width_us;
    let mut runs = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &level) in stream.bits.iter().enumerate() {
        match (level, start) {
            (Level::Dominant, None) => start = Some(i),
            (Level::Recessive, Some(s)) => {
                runs.push(run_at(s, i - s, width));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push(run_at(s, stream.bits.len() - s, width));
    }
    runs
}

fn run_at(start: usize, len: usize, width: f64) -> DominantRun {
    DominantRun {
        start_us: start as f64 * width,
        duration_us: len as f64 * width,
        bits: len,
    }
}
