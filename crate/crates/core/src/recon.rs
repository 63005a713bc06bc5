//! Driver-context reverse-engineering of logged CAN traffic.
//!
//! A session log starts with the vehicle awake but the ignition off, and
//! ends some time after the ignition is switched on. The ignition shows up
//! as a jump in the number of distinct identifiers on the bus. Bits that
//! keep changing while parked are counters or checksums; any other bit
//! that moves shortly before the ignition is a candidate control signal
//! set by the driver (unlock, power mode, trunk).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::bus::{BusTrace, EventKind, Source};
use crate::frame::CanFrame;
use crate::units::Micros;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReconError {
    #[error("trace records out of order at index {0}")]
    Unordered(usize),
    #[error("trace is empty")]
    Empty,
    #[error("analysis window must be positive")]
    ZeroWindow,
    #[error("jump factor must exceed 1, got {0}")]
    JumpFactor(f64),
    #[error("change fraction must lie in (0, 1], got {0}")]
    ChangeFraction(f64),
    #[error("no identifiers observed with the ignition on")]
    NoOnRegime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: Micros,
    pub frame: CanFrame,
}

/// Time-ordered frame log.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(records: Vec<TraceRecord>) -> Result<Self, ReconError> {
        if let Some(i) = records.windows(2).position(|w| w[1].time < w[0].time) {
            return Err(ReconError::Unordered(i + 1));
        }
        Ok(Trace { records })
    }

    /// Frames seen on the wire during a simulated run. With
    /// `include_attacker` false, only ECU transmissions are kept.
    pub fn from_bus(trace: &BusTrace, include_attacker: bool) -> Self {
        let records = trace
            .events
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::FrameTx { source, frame } if include_attacker || *source != Source::Attacker => Some(TraceRecord {
                    time: e.time,
                    frame: *frame,
                }),
                _ => None,
            })
            .collect();
        Trace { records }
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> BTreeSet<u16> {
        self.records.iter().map(|r| r.frame.id()).collect()
    }

    /// Same records, every timestamp moved by `offset`.
    pub fn shifted(&self, offset: Micros) -> Self {
        Trace {
            records: self
                .records
                .iter()
                .map(|r| TraceRecord {
                    time: r.time + offset,
                    frame: r.frame,
                })
                .collect(),
        }
    }

    fn without(&self, ignore: &BTreeSet<u16>) -> Self {
        Trace {
            records: self.records.iter().filter(|r| !ignore.contains(&r.frame.id())).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconParams {
    pub window: Micros,
    /// Distinct-ID growth over the parked count that marks the ignition.
    pub jump_factor: f64,
    /// Share of consecutive record pairs in which a bit must flip to count
    /// as free-running.
    pub change_fraction: f64,
    /// How far before the ignition driver actions are searched for.
    pub event_window: Micros,
    /// How far into the ignition-on regime a change may persist.
    pub persist_window: Micros,
}

impl Default for ReconParams {
    fn default() -> Self {
        ReconParams {
            window: Micros::from_secs(1),
            jump_factor: 1.05,
            change_fraction: 0.5,
            event_window: Micros::from_secs(10),
            persist_window: Micros::from_secs(5),
        }
    }
}

impl ReconParams {
    pub fn validate(&self) -> Result<(), ReconError> {
        if self.window == Micros::ZERO {
            return Err(ReconError::ZeroWindow);
        }
        if !(self.jump_factor > 1.0 && self.jump_factor.is_finite()) {
            return Err(ReconError::JumpFactor(self.jump_factor));
        }
        if !(self.change_fraction > 0.0 && self.change_fraction <= 1.0) {
            return Err(ReconError::ChangeFraction(self.change_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IgnitionSplit {
    Found {
        boundary: Micros,
        off: Trace,
        on: Trace,
    },
    /// No jump in distinct identifiers: the whole log is one regime.
    SingleRegime,
}

/// Splits `trace` at the ignition. Windows of length `window` are aligned
/// to the first record; the first window whose distinct-ID count reaches
/// `jump_factor` times the largest count seen so far marks the jump, and
/// the boundary is the first record in that window or the one before it
/// carrying an identifier never seen earlier.
pub fn split_ignition(trace: &Trace, window: Micros, jump_factor: f64) -> Result<IgnitionSplit, ReconError> {
    if window == Micros::ZERO {
        return Err(ReconError::ZeroWindow);
    }
    if !(jump_factor > 1.0 && jump_factor.is_finite()) {
        return Err(ReconError::JumpFactor(jump_factor));
    }
    let recs = trace.records();
    let Some(first) = recs.first() else {
        return Err(ReconError::Empty);
    };
    let t0 = first.time;
    let slot = |t: Micros| ((t - t0).0 / window.0) as usize;
    let n_slots = slot(recs.last().expect("nonempty").time) + 1;
    let mut per_slot: Vec<BTreeSet<u16>> = vec![BTreeSet::new(); n_slots];
    for r in recs {
        per_slot[slot(r.time)].insert(r.frame.id());
    }

    let mut running = 0usize;
    let mut jump = None;
    for (j, ids) in per_slot.iter().enumerate() {
        let n = ids.len();
        if j > 0 && running > 0 && n as f64 >= jump_factor * running as f64 {
            jump = Some(j);
            break;
        }
        running = running.max(n);
    }
    let Some(j) = jump else {
        return Ok(IgnitionSplit::SingleRegime);
    };

    // new identifiers may already start near the end of the window before
    // the jump; with no earlier history the jump window itself is searched
    let k = if j >= 2 { j - 1 } else { j };
    let known: BTreeSet<u16> = per_slot[..k].iter().flatten().copied().collect();
    let lo = t0 + Micros(window.0 * k as u64);
    let boundary = recs
        .iter()
        .find(|r| r.time >= lo && !known.contains(&r.frame.id()))
        .map(|r| r.time)
        .expect("jump window holds a new identifier");
    let cut = recs.partition_point(|r| r.time < boundary);
    Ok(IgnitionSplit::Found {
        boundary,
        off: Trace {
            records: recs[..cut].to_vec(),
        },
        on: Trace {
            records: recs[cut..].to_vec(),
        },
    })
}

/// Free-running bit positions per identifier, as 8-byte masks.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct DeltaOff {
    pub masks: BTreeMap<u16, [u8; 8]>,
    /// Identifiers with fewer than two records.
    pub skipped: Vec<u16>,
}

impl DeltaOff {
    pub fn mask(&self, id: u16) -> [u8; 8] {
        self.masks.get(&id).copied().unwrap_or([0; 8])
    }

    pub fn positions(&self, id: u16) -> Vec<(usize, u8)> {
        mask_positions(&self.mask(id))
    }
}

/// (byte, bit) pairs set in `mask`; bytes count from 0, bit 7 is the MSB.
pub fn mask_positions(mask: &[u8; 8]) -> Vec<(usize, u8)> {
    let mut out = Vec::new();
    for (byte, m) in mask.iter().enumerate() {
        for bit in (0..8).rev() {
            if m & (1 << bit) != 0 {
                out.push((byte, bit));
            }
        }
    }
    out
}

fn padded(frame: &CanFrame) -> [u8; 8] {
    let mut out = [0u8; 8];
    out[..frame.data().len()].copy_from_slice(frame.data());
    out
}

/// Marks every bit that flips in at least `change_fraction` of consecutive
/// record pairs of its identifier.
pub fn compute_delta_off(off: &Trace, change_fraction: f64) -> Result<DeltaOff, ReconError> {
    if !(change_fraction > 0.0 && change_fraction <= 1.0) {
        return Err(ReconError::ChangeFraction(change_fraction));
    }
    let mut by_id: BTreeMap<u16, Vec<[u8; 8]>> = BTreeMap::new();
    for r in off.records() {
        by_id.entry(r.frame.id()).or_default().push(padded(&r.frame));
    }
    let mut out = DeltaOff::default();
    for (id, payloads) in by_id {
        if payloads.len() < 2 {
            out.skipped.push(id);
            continue;
        }
        let mut flips = [[0u32; 8]; 8];
        for w in payloads.windows(2) {
            for byte in 0..8 {
                let x = w[0][byte] ^ w[1][byte];
                for (bit, count) in flips[byte].iter_mut().enumerate() {
                    *count += u32::from(x >> bit & 1);
                }
            }
        }
        let pairs = (payloads.len() - 1) as f64;
        let mut mask = [0u8; 8];
        for (m, counts) in mask.iter_mut().zip(&flips) {
            for (bit, &n) in counts.iter().enumerate() {
                if n as f64 >= change_fraction * pairs {
                    *m |= 1 << bit;
                }
            }
        }
        out.masks.insert(id, mask);
    }
    Ok(out)
}

/// Pools several parked sessions: a bit stays free-running only if it was
/// free-running in every session that carried its identifier.
pub fn intersect(sessions: &[DeltaOff]) -> DeltaOff {
    let mut masks: BTreeMap<u16, [u8; 8]> = BTreeMap::new();
    for s in sessions {
        for (&id, m) in &s.masks {
            let e = masks.entry(id).or_insert([0xFF; 8]);
            for (a, b) in e.iter_mut().zip(m) {
                *a &= b;
            }
        }
    }
    let skipped = sessions
        .iter()
        .flat_map(|s| s.skipped.iter().copied())
        .filter(|id| !masks.contains_key(id))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    DeltaOff { masks, skipped }
}

/// A byte whose non-free-running bits left their parked value shortly
/// before the ignition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Candidate {
    pub id: u16,
    /// Byte index from 0.
    pub byte: usize,
    /// Bits that changed.
    pub mask: u8,
    pub baseline: u8,
    /// Byte value at the first deviating record.
    pub event: u8,
    pub first_seen: Micros,
    pub last_seen: Micros,
    /// Still deviating in the last record inspected.
    pub persists: bool,
}

impl Candidate {
    pub fn changed_bits(&self) -> u32 {
        self.mask.count_ones()
    }
}

/// Compares each byte of each parked identifier against its value before
/// the event window, skipping free-running bits. Records from
/// `boundary - event_window` up to `boundary + persist_window` are searched;
/// `on` supplies the part after the boundary.
pub fn find_control_candidates(
    off: &Trace,
    on: &Trace,
    delta_off: &DeltaOff,
    boundary: Micros,
    params: &ReconParams,
) -> Vec<Candidate> {
    let window_start = boundary.saturating_sub(params.event_window);
    let window_end = boundary + params.persist_window;
    let s_off = off.ids();

    let mut before: BTreeMap<u16, Vec<[u8; 8]>> = BTreeMap::new();
    let mut during: BTreeMap<u16, Vec<(Micros, [u8; 8])>> = BTreeMap::new();
    for r in off.records().iter().chain(on.records()) {
        let id = r.frame.id();
        if !s_off.contains(&id) || r.time >= window_end {
            continue;
        }
        if r.time < window_start {
            before.entry(id).or_default().push(padded(&r.frame));
        } else {
            during.entry(id).or_default().push((r.time, padded(&r.frame)));
        }
    }

    let mut out = Vec::new();
    for (id, recs) in &during {
        let Some(base_recs) = before.get(id) else {
            continue;
        };
        let free = delta_off.mask(*id);
        for byte in 0..8 {
            let keep = !free[byte];
            if keep == 0 {
                continue;
            }
            let baseline = majority_byte(base_recs.iter().map(|p| p[byte]));
            let mut cand: Option<Candidate> = None;
            for (t, p) in recs {
                let dev = (p[byte] ^ baseline) & keep;
                if dev == 0 {
                    continue;
                }
                let c = cand.get_or_insert(Candidate {
                    id: *id,
                    byte,
                    mask: 0,
                    baseline,
                    event: p[byte],
                    first_seen: *t,
                    last_seen: *t,
                    persists: false,
                });
                c.mask |= dev;
                c.last_seen = *t;
            }
            if let Some(mut c) = cand {
                let last = recs.last().expect("nonempty");
                c.persists = (last.1[byte] ^ baseline) & keep != 0;
                out.push(c);
            }
        }
    }
    rank(&mut out, boundary);
    out
}

/// Nearest to the ignition first, then fewest changed bits.
fn rank(candidates: &mut [Candidate], boundary: Micros) {
    candidates.sort_by_key(|c| {
        let distance = if c.persists || c.last_seen >= boundary {
            Micros::ZERO
        } else {
            boundary - c.last_seen
        };
        (distance, c.changed_bits(), c.id, c.byte)
    });
}

/// Per-bit majority; ties go to 0.
fn majority_byte(values: impl Iterator<Item = u8>) -> u8 {
    let mut ones = [0usize; 8];
    let mut n = 0;
    for v in values {
        n += 1;
        for (bit, c) in ones.iter_mut().enumerate() {
            *c += usize::from(v >> bit & 1);
        }
    }
    (0..8).filter(|&bit| 2 * ones[bit] > n).fold(0u8, |acc, bit| acc | 1 << bit)
}

/// Share of ignition-on identifiers also sent while parked, in percent.
pub fn awakened_ratio(s_off: &BTreeSet<u16>, s_on: &BTreeSet<u16>) -> Result<f64, ReconError> {
    if s_on.is_empty() {
        return Err(ReconError::NoOnRegime);
    }
    Ok(100.0 * s_off.len() as f64 / s_on.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconReport {
    pub s_off: BTreeSet<u16>,
    pub s_on: BTreeSet<u16>,
    pub delta_off: DeltaOff,
    pub ignition_boundary: Micros,
    pub candidates: Vec<Candidate>,
    pub awakened_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReconOutcome {
    Report(ReconReport),
    SingleRegime { ids: BTreeSet<u16> },
}

/// Full pipeline over one session log. `extra_off` adds further parked
/// sessions whose free-running bits are intersected with this one's.
pub fn analyze(trace: &Trace, params: &ReconParams, ignore: &BTreeSet<u16>, extra_off: &[Trace]) -> Result<ReconOutcome, ReconError> {
    params.validate()?;
    let trace = trace.without(ignore);
    let (boundary, off, on) = match split_ignition(&trace, params.window, params.jump_factor)? {
        IgnitionSplit::Found { boundary, off, on } => (boundary, off, on),
        IgnitionSplit::SingleRegime => return Ok(ReconOutcome::SingleRegime { ids: trace.ids() }),
    };
    let mut delta = compute_delta_off(&off, params.change_fraction)?;
    if !extra_off.is_empty() {
        let mut all = vec![delta];
        for t in extra_off {
            all.push(compute_delta_off(&t.without(ignore), params.change_fraction)?);
        }
        delta = intersect(&all);
    }
    let candidates = find_control_candidates(&off, &on, &delta, boundary, params);
    let s_off = off.ids();
    let s_on = on.ids();
    let awakened_ratio = awakened_ratio(&s_off, &s_on)?;
    Ok(ReconOutcome::Report(ReconReport {
        s_off,
        s_on,
        delta_off: delta,
        ignition_boundary: boundary,
        candidates,
        awakened_ratio,
    }))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02X}")).collect::<Vec<_>>().join(" ")
}

fn id_list(ids: &BTreeSet<u16>) -> String {
    ids.iter().map(|i| format!("{i:03X}")).collect::<Vec<_>>().join(" ")
}

impl ReconReport {
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ignition boundary: {} s", self.ignition_boundary);
        let _ = writeln!(s, "ids while parked:  {} [{}]", self.s_off.len(), id_list(&self.s_off));
        let _ = writeln!(s, "ids with ignition: {} [{}]", self.s_on.len(), id_list(&self.s_on));
        let _ = writeln!(s, "awakened ratio:    {:.2}%", self.awakened_ratio);
        let _ = writeln!(s, "free-running bits:");
        for (id, m) in &self.delta_off.masks {
            if m.iter().any(|&b| b != 0) {
                let _ = writeln!(s, "  {id:03X}  {}", hex(m));
            }
        }
        if !self.delta_off.skipped.is_empty() {
            let skipped: BTreeSet<u16> = self.delta_off.skipped.iter().copied().collect();
            let _ = writeln!(s, "  too few records: {}", id_list(&skipped));
        }
        let _ = writeln!(s, "control candidates:");
        if self.candidates.is_empty() {
            let _ = writeln!(s, "  none");
        }
        for (rank, c) in self.candidates.iter().enumerate() {
            let _ = writeln!(
                s,
                "  {:>2}. {:03X} byte {} mask {:02X}: {:02X} -> {:02X}  seen {} .. {} s{}",
                rank + 1,
                c.id,
                c.byte + 1,
                c.mask,
                c.baseline,
                c.event,
                c.first_seen,
                c.last_seen,
                if c.persists { "  (persists)" } else { "" }
            );
        }
        s
    }

    /// One row per candidate.
    pub fn render_csv(&self) -> String {
        let mut s = String::from("rank,id,byte,mask,baseline,event,first_seen_s,last_seen_s,persists\n");
        for (rank, c) in self.candidates.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},0x{:03X},{},0x{:02X},0x{:02X},0x{:02X},{},{},{}",
                rank + 1,
                c.id,
                c.byte + 1,
                c.mask,
                c.baseline,
                c.event,
                c.first_seen,
                c.last_seen,
                c.persists
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(ms: u64, id: u16, data: &[u8]) -> TraceRecord {
        TraceRecord {
            time: Micros::from_millis(ms),
            frame: CanFrame::new(id, data).unwrap(),
        }
    }

    /// `n_off` IDs every 100 ms until `ign_ms`, then `n_on` IDs.
    fn regime_trace(n_off: u16, n_on: u16, ign_ms: u64, end_ms: u64) -> Trace {
        let mut v = Vec::new();
        let mut t = 0;
        while t < end_ms {
            let n = if t < ign_ms { n_off } else { n_on };
            for id in 1..=n {
                v.push(rec(t, id, &[0]));
            }
            t += 100;
        }
        Trace::new(v).unwrap()
    }

    #[test]
    fn boundary_found_near_ignition() {
        let tr = regime_trace(20, 60, 7_300, 15_000);
        let IgnitionSplit::Found { boundary, off, on } = split_ignition(&tr, Micros::from_secs(1), 1.5).unwrap() else {
            panic!("no split");
        };
        assert_eq!(boundary, Micros::from_millis(7_300));
        assert_eq!(off.ids().len(), 20);
        assert_eq!(on.ids().len(), 60);
    }

    #[test]
    fn single_regime_when_no_jump() {
        let tr = regime_trace(20, 20, 0, 10_000);
        assert_eq!(split_ignition(&tr, Micros::from_secs(1), 1.05).unwrap(), IgnitionSplit::SingleRegime);
    }

    #[test]
    fn unordered_trace_rejected() {
        assert_eq!(Trace::new(vec![rec(5, 1, &[]), rec(4, 1, &[])]), Err(ReconError::Unordered(1)));
    }

    #[test]
    fn free_running_last_two_bytes() {
        let recs = (0..20)
            .map(|i| {
                let tail: [u8; 2] = if i % 2 == 0 { [0xAB, 0xCD] } else { [0x54, 0x32] };
                rec(i * 10, 0x001, &[0x00, 0x10, 0, 0, 0xFF, 0, tail[0], tail[1]])
            })
            .collect();
        let d = compute_delta_off(&Trace::new(recs).unwrap(), 0.5).unwrap();
        assert_eq!(d.mask(0x001), [0, 0, 0, 0, 0, 0, 0xFF, 0xFF]);
        assert_eq!(d.positions(0x001).len(), 16);
    }

    #[test]
    fn constant_payload_has_no_free_bits_and_singletons_are_skipped() {
        let mut recs: Vec<_> = (0..10).map(|i| rec(i * 10, 0x100, &[1, 2, 3])).collect();
        recs.push(rec(200, 0x200, &[9]));
        let d = compute_delta_off(&Trace::new(recs).unwrap(), 0.5).unwrap();
        assert_eq!(d.mask(0x100), [0; 8]);
        assert_eq!(d.skipped, vec![0x200]);
    }

    #[test]
    fn counter_byte_flags_exactly_eight_bits() {
        // a checksum byte that changes every bit on every frame
        let recs = (0..50u64).map(|i| rec(i, 0x10, &[0x55, if i % 2 == 0 { 0x00 } else { 0xFF }])).collect();
        let d = compute_delta_off(&Trace::new(recs).unwrap(), 0.5).unwrap();
        assert_eq!(d.positions(0x10).len(), 8);
    }

    #[test]
    fn intersection_keeps_common_bits() {
        let a = DeltaOff {
            masks: [(1, [0xFF, 0, 0, 0, 0, 0, 0, 0x0F])].into(),
            skipped: vec![],
        };
        let b = DeltaOff {
            masks: [(1, [0x0F, 0, 0, 0, 0, 0, 0, 0xFF])].into(),
            skipped: vec![2],
        };
        let i = intersect(&[a, b]);
        assert_eq!(i.mask(1), [0x0F, 0, 0, 0, 0, 0, 0, 0x0F]);
        assert_eq!(i.skipped, vec![2]);
    }

    #[test]
    fn unlock_event_found_and_disjoint_from_free_bits() {
        let mut v = Vec::new();
        for i in 0..400u64 {
            let t = i * 100;
            let byte2 = if (33_000..35_000).contains(&t) { 0x30 } else { 0x10 };
            let tail: [u8; 2] = if i % 2 == 0 { [0xAB, 0xCD] } else { [0x54, 0x32] };
            v.push(rec(t, 0x001, &[0x00, byte2, 0, 0, 0xFF, 0, tail[0], tail[1]]));
            if t >= 38_000 {
                v.push(rec(t, 0x300, &[0]));
                v.push(rec(t, 0x301, &[0]));
            }
        }
        let tr = Trace::new(v).unwrap();
        let ReconOutcome::Report(r) = analyze(&tr, &ReconParams::default(), &BTreeSet::new(), &[]).unwrap() else {
            panic!("single regime");
        };
        assert_eq!(r.ignition_boundary, Micros::from_secs(38));
        assert_eq!(r.candidates.len(), 1);
        let c = &r.candidates[0];
        assert_eq!((c.id, c.byte, c.baseline, c.event, c.mask), (0x001, 1, 0x10, 0x30, 0x20));
        assert!(!c.persists);
        let free = r.delta_off.mask(c.id);
        assert_eq!(free[c.byte] & c.mask, 0);
        assert!((r.awakened_ratio - 100.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn no_driver_action_no_candidates() {
        let tr = regime_trace(5, 10, 20_000, 30_000);
        let ReconOutcome::Report(r) = analyze(&tr, &ReconParams::default(), &BTreeSet::new(), &[]).unwrap() else {
            panic!()
        };
        assert!(r.candidates.is_empty());
    }

    #[test]
    fn ratio_edges() {
        let on: BTreeSet<u16> = (1..=10).collect();
        assert_eq!(awakened_ratio(&BTreeSet::new(), &on).unwrap(), 0.0);
        assert_eq!(awakened_ratio(&on, &on).unwrap(), 100.0);
        assert_eq!(awakened_ratio(&on, &BTreeSet::new()), Err(ReconError::NoOnRegime));
    }

    #[test]
    fn majority_ties_to_zero() {
        assert_eq!(majority_byte([0x10, 0x10, 0x30].into_iter()), 0x10);
        assert_eq!(majority_byte([0x01, 0x00].into_iter()), 0x00);
    }
}
