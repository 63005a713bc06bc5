//! Deterministic discrete-event model of one CAN bus.
//!
//! Time advances from event to event: attacker actions, internal timers and
//! ECU schedule slots. Transmissions take no bus time. Only the wake-up
//! filter looks at bit timing, through the serialized frame. Frames due at
//! the same instant go out in arbitration order (identifier, then node
//! index). At a shared timestamp, external actions run before ECU timers,
//! so a wake-up signal arriving exactly on a node's deadline keeps it awake.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use thiserror::Error;

use crate::ecu::{EcuConfig, EcuConfigError, EcuState, Function, PayloadOverride, PowerMode, RecoveryTrigger, TxResult};
use crate::frame::{serialize_frame, BitStream, CanFrame, FrameError};
use crate::units::Micros;
use crate::wakeup::detect_wakeup;

/// Error flag, delimiter and intermission following a failed frame.
const ERROR_FRAME_BITS: usize = 6 + 8 + 3;
/// Bus-off recovery waits for 128 occurrences of 11 recessive bits.
const BUS_OFF_RECOVERY_BITS: u64 = 128 * 11;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BusError {
    #[error("bus bit rate must be positive")]
    ZeroBitrate,
    #[error("bus has no nodes")]
    NoNodes,
    #[error(transparent)]
    Ecu(#[from] EcuConfigError),
    #[error("injection at {at} lies beyond the run duration {duration}")]
    InjectionBeyondDuration { at: Micros, duration: Micros },
    #[error("injections are not time-sorted at index {0}")]
    UnsortedInjections(usize),
    #[error("action refers to node {0}, bus has fewer nodes")]
    UnknownNode(usize),
    #[error("initial state count {got} differs from node count {expected}")]
    StateCount { got: usize, expected: usize },
    #[error("run duration must be positive")]
    ZeroDuration,
    #[error(transparent)]
    Frame(#[from] FrameError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusConfig {
    pub bitrate: u32,
    pub nodes: Vec<EcuConfig>,
    /// Rate the attacker's controller runs at while a mismatch is active.
    pub attacker_bitrate: u32,
}

impl BusConfig {
    pub fn new(bitrate: u32, nodes: Vec<EcuConfig>) -> Result<Self, BusError> {
        let cfg = BusConfig {
            bitrate,
            nodes,
            attacker_bitrate: bitrate,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BusError> {
        if self.bitrate == 0 || self.attacker_bitrate == 0 {
            return Err(BusError::ZeroBitrate);
        }
        if self.nodes.is_empty() {
            return Err(BusError::NoNodes);
        }
        for n in &self.nodes {
            n.validate()?;
        }
        Ok(())
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Attacker,
    Node(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    FrameTx { source: Source, frame: CanFrame },
    TxError { source: Source, id: u16 },
    RxError { node: usize },
    WakeupDetected { node: usize },
    Sleep { node: usize },
    BusOff { node: usize },
    Recovery { node: usize, to: PowerMode },
    /// Terminal-15 supply switched on by the ignition.
    PoweredUp { node: usize },
    PoweredDown { node: usize },
    /// Battery reconnect put the node back into `to`.
    Reset { node: usize, to: PowerMode },
    Ignition { on: bool },
    ControlActivated { node: usize, function: Function, id: u16 },
    Mismatch { active: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusEvent {
    pub time: Micros,
    pub kind: EventKind,
}

/// When an active bit-rate mismatch stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MismatchEnd {
    At(Micros),
    /// As soon as no transmitting node remains in normal mode.
    AllBusOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MismatchDirective {
    pub end: MismatchEnd,
    /// Recovery sweep issued once the mismatch is over.
    pub recovery: Option<RecoveryTrigger>,
}

/// Something that happens to the bus from outside the ECU schedules.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Attacker transmits a frame.
    Frame(CanFrame),
    /// Attacker switches bit rate: every transmission by a normal node fails.
    Mismatch(MismatchDirective),
    Ignition(bool),
    /// A driver operates a control at `node` (e.g. a key fob button): the
    /// node is woken locally and its outgoing payloads carry `ov` for `hold`.
    DriverAction {
        node: usize,
        ov: PayloadOverride,
        hold: Micros,
    },
    /// Bus-off recovery request to every node.
    Recovery(RecoveryTrigger),
    BatteryReset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub time: Micros,
    pub action: Action,
}

impl Injection {
    pub fn frame(time: Micros, frame: CanFrame) -> Self {
        Injection {
            time,
            action: Action::Frame(frame),
        }
    }
}

/// Overlays bit-rate mismatch windows on an injection list. Windows are
/// `[start, end)`; the result stays time-sorted.
pub fn apply_bitrate_mismatch(injections: &[Injection], windows: &[Range<Micros>]) -> Vec<Injection> {
    let mut out = injections.to_vec();
    for w in windows.iter().filter(|w| w.start < w.end) {
        out.push(Injection {
            time: w.start,
            action: Action::Mismatch(MismatchDirective {
                end: MismatchEnd::At(w.end),
                recovery: None,
            }),
        });
    }
    // stable: equal times keep their original relative order
    out.sort_by_key(|i| i.time);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Frame transmissions after this time are simulated but not recorded.
    pub record_frames_until: Option<Micros>,
}

/// Result of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct BusTrace {
    pub duration: Micros,
    pub initial_modes: Vec<PowerMode>,
    pub events: Vec<BusEvent>,
    pub final_states: Vec<EcuState>,
}

impl BusTrace {
    /// Frames transmitted in `window`, with their source.
    pub fn frames(&self, window: Range<Micros>) -> impl Iterator<Item = (Micros, Source, &CanFrame)> {
        self.events.iter().filter_map(move |e| match &e.kind {
            EventKind::FrameTx { source, frame } if window.contains(&e.time) => Some((e.time, *source, frame)),
            _ => None,
        })
    }

    pub fn count(&self, pred: impl Fn(&EventKind) -> bool) -> usize {
        self.events.iter().filter(|e| pred(&e.kind)).count()
    }

    /// Nodes in bus-off at the end of the run.
    pub fn bus_off_nodes(&self) -> Vec<usize> {
        self.final_states
            .iter()
            .enumerate()
            .filter(|(_, s)| s.mode == PowerMode::BusOff)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Distinct identifiers among frames transmitted in `window`.
pub fn distinct_id_count(trace: &BusTrace, window: Range<Micros>) -> usize {
    trace.frames(window).map(|(_, _, f)| f.id()).collect::<BTreeSet<_>>().len()
}

/// Like [`distinct_id_count`], counting ECU transmissions only.
pub fn distinct_ecu_id_count(trace: &BusTrace, window: Range<Micros>) -> usize {
    trace
        .frames(window)
        .filter(|(_, s, _)| matches!(s, Source::Node(_)))
        .map(|(_, _, f)| f.id())
        .collect::<BTreeSet<_>>()
        .len()
}

#[derive(Debug, Clone, PartialEq)]
enum Internal {
    EndOverride { node: usize, ov: PayloadOverride },
    EndMismatch,
    RecoverySweep(RecoveryTrigger),
}

struct Sim<'a> {
    cfg: &'a BusConfig,
    states: Vec<EcuState>,
    events: Vec<BusEvent>,
    internal: BTreeMap<(Micros, u64), Internal>,
    seq: u64,
    mismatch: Option<MismatchDirective>,
    ignition: bool,
    opts: RunOptions,
}

/// Runs the bus from the configured idle state.
pub fn run(config: &BusConfig, injections: &[Injection], duration: Micros) -> Result<BusTrace, BusError> {
    run_with(config, None, injections, duration, RunOptions::default())
}

/// Runs the bus from explicit ECU states (e.g. the end of a previous run).
pub fn run_with(
    config: &BusConfig,
    initial: Option<Vec<EcuState>>,
    injections: &[Injection],
    duration: Micros,
    opts: RunOptions,
) -> Result<BusTrace, BusError> {
    config.validate()?;
    if duration == Micros::ZERO {
        return Err(BusError::ZeroDuration);
    }
    for (i, w) in injections.windows(2).enumerate() {
        if w[1].time < w[0].time {
            return Err(BusError::UnsortedInjections(i + 1));
        }
    }
    for inj in injections {
        if inj.time >= duration {
            return Err(BusError::InjectionBeyondDuration { at: inj.time, duration });
        }
        if let Action::DriverAction { node, .. } = inj.action {
            if node >= config.nodes.len() {
                return Err(BusError::UnknownNode(node));
            }
        }
    }
    let states = match initial {
        Some(s) if s.len() != config.nodes.len() => {
            return Err(BusError::StateCount {
                got: s.len(),
                expected: config.nodes.len(),
            })
        }
        Some(s) => s,
        None => config.nodes.iter().map(EcuState::initial).collect(),
    };
    let ignition = states.iter().any(|s| s.ignition_hold);
    let initial_modes = states.iter().map(|s| s.mode).collect();
    let mut sim = Sim {
        cfg: config,
        states,
        events: Vec::new(),
        internal: BTreeMap::new(),
        seq: 0,
        mismatch: None,
        ignition,
        opts,
    };
    sim.run(injections, duration)?;
    Ok(BusTrace {
        duration,
        initial_modes,
        events: sim.events,
        final_states: sim.states,
    })
}

impl Sim<'_> {
    fn emit(&mut self, time: Micros, kind: EventKind) {
        self.events.push(BusEvent { time, kind });
    }

    fn schedule(&mut self, at: Micros, what: Internal) {
        self.seq += 1;
        self.internal.insert((at, self.seq), what);
    }

    fn run(&mut self, injections: &[Injection], duration: Micros) -> Result<(), BusError> {
        let mut next_inj = 0;
        loop {
            let t_inj = injections.get(next_inj).map(|i| i.time);
            let t_int = self.internal.keys().next().map(|k| k.0);
            let t_node = self.states.iter().filter_map(EcuState::next_due).min();
            let Some(now) = [t_inj, t_int, t_node].into_iter().flatten().min() else {
                break;
            };
            if now >= duration {
                break;
            }
            if t_inj == Some(now) {
                let action = injections[next_inj].action.clone();
                next_inj += 1;
                self.apply(now, action)?;
            } else if t_int == Some(now) {
                let (_, what) = self.internal.pop_first().expect("peeked");
                self.apply_internal(now, what);
            } else {
                self.step_nodes(now)?;
            }
        }
        Ok(())
    }

    fn step_nodes(&mut self, now: Micros) -> Result<(), BusError> {
        let mut due = Vec::new();
        for i in 0..self.states.len() {
            if self.states[i].next_due().is_some_and(|d| d <= now) {
                let out = self.states[i].tick(&self.cfg.nodes[i], now);
                if out.slept {
                    self.emit(now, EventKind::Sleep { node: i });
                }
                due.extend(out.frames.into_iter().map(|f| (f.frame.id(), i, f.frame)));
            }
        }
        due.sort_by_key(|&(id, node, _)| (id, node));
        for (_, node, frame) in due {
            // an earlier frame in this slot may have sent the node bus-off
            if self.states[node].mode == PowerMode::Normal {
                self.transmit(now, Source::Node(node), frame)?;
            }
        }
        Ok(())
    }

    fn apply(&mut self, now: Micros, action: Action) -> Result<(), BusError> {
        match action {
            Action::Frame(frame) => self.transmit(now, Source::Attacker, frame)?,
            Action::Mismatch(directive) => {
                if let MismatchEnd::At(end) = directive.end {
                    self.schedule(end, Internal::EndMismatch);
                }
                self.mismatch = Some(directive);
                self.emit(now, EventKind::Mismatch { active: true });
                self.check_mismatch_done(now);
            }
            Action::Ignition(on) => {
                self.ignition = on;
                self.emit(now, EventKind::Ignition { on });
                for i in 0..self.states.len() {
                    self.apply_ignition(now, i);
                }
            }
            Action::DriverAction { node, ov, hold } => {
                let cfg = &self.cfg.nodes[node];
                if self.states[node].on_wakeup_signal(cfg, now) {
                    self.emit(now, EventKind::WakeupDetected { node });
                }
                if self.states[node].mode == PowerMode::Normal {
                    self.states[node].overrides.push(ov);
                    self.schedule(now + hold, Internal::EndOverride { node, ov });
                }
            }
            Action::Recovery(trigger) => self.recovery_sweep(now, trigger),
            Action::BatteryReset => {
                self.mismatch = None;
                for i in 0..self.states.len() {
                    self.states[i].battery_reset(&self.cfg.nodes[i]);
                    let to = self.states[i].mode;
                    self.emit(now, EventKind::Reset { node: i, to });
                    self.apply_ignition(now, i);
                }
            }
        }
        Ok(())
    }

    fn apply_ignition(&mut self, now: Micros, node: usize) {
        let on = self.ignition;
        if !on && !self.states[node].ignition_hold {
            return;
        }
        if let Some(before) = self.states[node].on_ignition(&self.cfg.nodes[node], now, on) {
            let kind = match (before, self.states[node].mode) {
                (PowerMode::Off, _) => EventKind::PoweredUp { node },
                (_, PowerMode::Off) => EventKind::PoweredDown { node },
                _ => EventKind::WakeupDetected { node },
            };
            self.emit(now, kind);
        }
    }

    fn apply_internal(&mut self, now: Micros, what: Internal) {
        match what {
            Internal::EndOverride { node, ov } => {
                let overrides = &mut self.states[node].overrides;
                if let Some(pos) = overrides.iter().position(|o| *o == ov) {
                    overrides.remove(pos);
                }
            }
            Internal::EndMismatch => self.end_mismatch(now),
            Internal::RecoverySweep(trigger) => self.recovery_sweep(now, trigger),
        }
    }

    fn end_mismatch(&mut self, now: Micros) {
        if let Some(directive) = self.mismatch.take() {
            self.emit(now, EventKind::Mismatch { active: false });
            if let Some(trigger) = directive.recovery {
                let wait = Micros((BUS_OFF_RECOVERY_BITS * 1_000_000).div_ceil(self.cfg.bitrate as u64));
                self.schedule(now + wait, Internal::RecoverySweep(trigger));
            }
        }
    }

    fn check_mismatch_done(&mut self, now: Micros) {
        if !matches!(self.mismatch, Some(MismatchDirective { end: MismatchEnd::AllBusOff, .. })) {
            return;
        }
        let transmitters_left = self
            .states
            .iter()
            .zip(&self.cfg.nodes)
            .any(|(s, c)| s.mode == PowerMode::Normal && (!c.schedule.is_empty() || s.pending.is_some()));
        if !transmitters_left {
            self.end_mismatch(now);
        }
    }

    fn recovery_sweep(&mut self, now: Micros, trigger: RecoveryTrigger) {
        for i in 0..self.states.len() {
            if self.states[i].attempt_recovery(&self.cfg.nodes[i], trigger) {
                let to = self.states[i].mode;
                self.emit(now, EventKind::Recovery { node: i, to });
                self.apply_ignition(now, i);
            }
        }
    }

    fn transmit(&mut self, now: Micros, source: Source, frame: CanFrame) -> Result<(), BusError> {
        let bitrate = match (source, self.mismatch) {
            (Source::Attacker, Some(_)) => self.cfg.attacker_bitrate,
            _ => self.cfg.bitrate,
        };
        let source_node = match source {
            Source::Node(i) => Some(i),
            Source::Attacker => None,
        };
        let others = |i: usize| Some(i) != source_node;

        // sleeping transceivers react to dominant levels whether or not the
        // frame decodes
        let has_sleepers = (0..self.states.len()).any(|i| others(i) && self.states[i].mode == PowerMode::Sleep);
        let stream = if has_sleepers || self.mismatch.is_some() {
            Some(serialize_frame(&frame, bitrate)?)
        } else {
            None
        };
        if let Some(stream) = &stream {
            for i in (0..self.states.len()).filter(|&i| others(i)) {
                if self.states[i].mode == PowerMode::Sleep && detect_wakeup(stream, &self.cfg.nodes[i].wakeup) {
                    self.states[i].on_wakeup_signal(&self.cfg.nodes[i], now);
                    self.emit(now, EventKind::WakeupDetected { node: i });
                }
            }
        }

        if self.mismatch.is_some() {
            self.emit(now, EventKind::TxError { source, id: frame.id() });
            for i in (0..self.states.len()).filter(|&i| others(i)) {
                if self.states[i].mode == PowerMode::Normal {
                    self.states[i].on_rx_result(TxResult::Error);
                    self.emit(now, EventKind::RxError { node: i });
                }
            }
            if let Some(i) = source_node {
                if self.states[i].on_tx_result(TxResult::Error) {
                    self.emit(now, EventKind::BusOff { node: i });
                    self.check_mismatch_done(now);
                } else {
                    let bits = stream.as_ref().map_or(0, BitStream::len) + ERROR_FRAME_BITS;
                    let gap = Micros(((bits as u64) * 1_000_000).div_ceil(bitrate as u64).max(1));
                    self.states[i].schedule_retry(frame, now + gap);
                }
            }
            return Ok(());
        }

        if self.opts.record_frames_until.is_none_or(|until| now < until) {
            self.emit(now, EventKind::FrameTx { source, frame });
        }
        for i in (0..self.states.len()).filter(|&i| others(i)) {
            if self.states[i].mode != PowerMode::Normal {
                continue;
            }
            let cfg = &self.cfg.nodes[i];
            self.states[i].on_rx_result(TxResult::Success);
            // only external wake-up messages refresh the timer; the vehicle's
            // own periodic traffic does not keep it awake
            if source == Source::Attacker {
                self.states[i].on_wakeup_signal(cfg, now);
            }
            for binding in cfg.controls.iter().filter(|b| b.matches(&frame)) {
                self.events.push(BusEvent {
                    time: now,
                    kind: EventKind::ControlActivated {
                        node: i,
                        function: binding.function,
                        id: frame.id(),
                    },
                });
            }
        }
        if let Some(i) = source_node {
            self.states[i].on_tx_result(TxResult::Success);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecu::{MessageSchedule, Terminal};

    fn node(name: &str, terminal: Terminal, id: u16) -> EcuConfig {
        let mut cfg = EcuConfig::new(name, terminal);
        cfg.schedule.push(MessageSchedule {
            id,
            period: Micros::from_millis(100),
            offset: Micros::ZERO,
            baseline: vec![0; 4],
            free_running: vec![0; 4],
        });
        cfg
    }

    fn bus(n: usize) -> BusConfig {
        let nodes = (0..n).map(|i| node(&format!("N{i}"), Terminal::T30, 0x100 + i as u16)).collect();
        BusConfig::new(500_000, nodes).unwrap()
    }

    #[test]
    fn single_injection_wakes_every_sleeping_node() {
        let cfg = bus(10);
        let trace = run(&cfg, &[Injection::frame(Micros::ZERO, CanFrame::all_recessive())], Micros::from_secs(1)).unwrap();
        assert_eq!(trace.count(|k| matches!(k, EventKind::WakeupDetected { .. })), 10);
        let sources: BTreeSet<_> = trace.frames(Micros::ZERO..Micros::MAX).map(|(_, s, _)| s).collect();
        assert_eq!(sources.len(), 11); // ten ECUs plus the attacker
    }

    #[test]
    fn quiet_bus_stays_quiet() {
        let trace = run(&bus(4), &[], Micros::from_secs(10)).unwrap();
        assert!(trace.events.is_empty());
    }

    #[test]
    fn terminal_15_nodes_never_transmit() {
        let mut cfg = bus(4);
        cfg.nodes.push(node("T15a", Terminal::T15, 0x200));
        cfg.nodes.push(node("T15b", Terminal::T15, 0x201));
        let trace = run(&cfg, &[Injection::frame(Micros::ZERO, CanFrame::all_recessive())], Micros::from_secs(5)).unwrap();
        let sources: BTreeSet<_> = trace.frames(Micros::ZERO..Micros::MAX).map(|(_, s, _)| s).collect();
        assert!(!sources.contains(&Source::Node(4)));
        assert!(!sources.contains(&Source::Node(5)));
        assert!(sources.contains(&Source::Node(0)));
    }

    #[test]
    fn rejects_bad_injection_lists() {
        let cfg = bus(1);
        let late = [Injection::frame(Micros::from_secs(2), CanFrame::all_recessive())];
        assert!(matches!(run(&cfg, &late, Micros::from_secs(1)), Err(BusError::InjectionBeyondDuration { .. })));
        let unsorted = [
            Injection::frame(Micros::from_secs(2), CanFrame::all_recessive()),
            Injection::frame(Micros::from_secs(1), CanFrame::all_recessive()),
        ];
        assert!(matches!(run(&cfg, &unsorted, Micros::from_secs(5)), Err(BusError::UnsortedInjections(1))));
        assert!(matches!(BusConfig::new(500_000, vec![]), Err(BusError::NoNodes)));
    }

    #[test]
    fn mismatch_drives_single_transmitter_bus_off_after_32_errors() {
        let cfg = bus(1);
        let inj = apply_bitrate_mismatch(
            &[Injection::frame(Micros::ZERO, CanFrame::all_recessive())],
            &[Micros::from_millis(50)..Micros::from_secs(2)],
        );
        let trace = run(&cfg, &inj, Micros::from_secs(2)).unwrap();
        let tx_errors = trace.count(|k| matches!(k, EventKind::TxError { source: Source::Node(0), .. }));
        assert_eq!(tx_errors, 32);
        assert_eq!(trace.count(|k| matches!(k, EventKind::BusOff { node: 0 })), 1);
        assert_eq!(trace.final_states[0].mode, PowerMode::BusOff);
    }

    #[test]
    fn inactive_mismatch_window_changes_nothing() {
        let cfg = bus(3);
        let inj = [Injection::frame(Micros::ZERO, CanFrame::all_recessive())];
        let plain = run(&cfg, &inj, Micros::from_secs(3)).unwrap();
        let with_empty = run(&cfg, &apply_bitrate_mismatch(&inj, &[]), Micros::from_secs(3)).unwrap();
        assert_eq!(plain, with_empty);
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = bus(5);
        let inj = [
            Injection::frame(Micros::ZERO, CanFrame::all_recessive()),
            Injection::frame(Micros::from_millis(1500), CanFrame::all_recessive()),
        ];
        assert_eq!(run(&cfg, &inj, Micros::from_secs(6)).unwrap(), run(&cfg, &inj, Micros::from_secs(6)).unwrap());
    }

    #[test]
    fn distinct_ids_in_window() {
        let cfg = bus(3);
        let trace = run(&cfg, &[Injection::frame(Micros::ZERO, CanFrame::all_recessive())], Micros::from_secs(1)).unwrap();
        assert_eq!(distinct_id_count(&trace, Micros::ZERO..Micros::from_secs(1)), 4);
        assert_eq!(distinct_ecu_id_count(&trace, Micros::ZERO..Micros::from_secs(1)), 3);
        assert_eq!(distinct_id_count(&trace, Micros::from_secs(5)..Micros::from_secs(6)), 0);
    }
}
