//! Per-ECU power state machine, message schedule and error confinement.
//!
//! Modes follow the terminal the ECU hangs off: terminal-15 units are
//! unpowered while the ignition is off, terminal-30 units sleep with their
//! transceiver listening for a wake-up signal. An awake ECU stays in normal
//! mode for `t_wakeup` after the last wake-up signal, then sleeps again.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::CanFrame;
use crate::units::Micros;
use crate::wakeup::WakeupFilterParams;

/// TEC above this value forces bus-off.
pub const TEC_BUS_OFF_THRESHOLD: u32 = 255;
pub const TEC_ERROR_INCREMENT: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Terminal {
    /// Switched by the ignition.
    T15,
    /// Permanently powered.
    T30,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RecoveryPolicy {
    AutoRecover,
    NeverRecover,
    ManualResetOnly,
}

/// Vehicle functions an ECU can host while the ignition is off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Function {
    Pkes,
    Rke,
    PowerMode,
    DoorControl,
    TrunkControl,
}

impl Function {
    pub const ALL: [Function; 5] = [
        Function::Pkes,
        Function::Rke,
        Function::PowerMode,
        Function::DoorControl,
        Function::TrunkControl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Function::Pkes => "pkes",
            Function::Rke => "rke",
            Function::PowerMode => "power_mode",
            Function::DoorControl => "door_control",
            Function::TrunkControl => "trunk_control",
        }
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Function {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Function::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown function `{s}`"))
    }
}

/// One periodically transmitted message.
///
/// Bits set in `free_running` flip on every transmission (rolling counters,
/// checksums); every other bit holds its `baseline` value unless a payload
/// override is active.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageSchedule {
    pub id: u16,
    pub period: Micros,
    /// Delay of the first transmission after power-up.
    pub offset: Micros,
    pub baseline: Vec<u8>,
    pub free_running: Vec<u8>,
}

impl MessageSchedule {
    /// Payload of the `emission`-th transmission since the ECU was configured.
    pub fn frame_for(&self, emission: u64, overrides: &[PayloadOverride]) -> CanFrame {
        let mut data = self.baseline.clone();
        if emission % 2 == 1 {
            for (b, m) in data.iter_mut().zip(&self.free_running) {
                *b ^= m;
            }
        }
        for ov in overrides.iter().filter(|o| o.id == self.id) {
            if let Some(b) = data.get_mut(ov.byte as usize) {
                *b = (*b & !ov.mask) | (ov.value & ov.mask);
            }
        }
        CanFrame::new(self.id, &data).expect("schedule validated at load")
    }
}

/// A function-state override applied to an outgoing message: the bits in
/// `mask` of byte `byte` take the bits of `value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadOverride {
    pub id: u16,
    pub byte: u8,
    pub mask: u8,
    pub value: u8,
}

/// A received (id, payload) pattern that triggers a vehicle function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlBinding {
    pub function: Function,
    pub id: u16,
    pub byte: u8,
    pub mask: u8,
    /// Accepted values of the masked bits; a door binding carries unlock
    /// and lock.
    pub values: Vec<u8>,
}

impl ControlBinding {
    pub fn matches(&self, frame: &CanFrame) -> bool {
        frame.id() == self.id
            && frame
                .data()
                .get(self.byte as usize)
                .is_some_and(|b| self.values.iter().any(|v| b & self.mask == v & self.mask))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EcuConfigError {
    #[error("{ecu}: sleep current {sleep} A must be below normal current {normal} A")]
    SleepAboveNormal { ecu: String, sleep: f64, normal: f64 },
    #[error("{ecu}: currents must be finite and non-negative")]
    NegativeCurrent { ecu: String },
    #[error("{ecu}: t_wakeup must be positive")]
    ZeroWakeup { ecu: String },
    #[error("{ecu}: message {id:#05x} has a zero period")]
    ZeroPeriod { ecu: String, id: u16 },
    #[error("{ecu}: message {id:#05x}: {reason}")]
    BadMessage { ecu: String, id: u16, reason: String },
    #[error("{ecu}: control {function}: {reason}")]
    BadControl { ecu: String, function: Function, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcuConfig {
    pub name: String,
    pub terminal: Terminal,
    pub t_wakeup: Micros,
    pub sleep_current: f64,
    pub normal_current: f64,
    pub schedule: Vec<MessageSchedule>,
    pub recovery: RecoveryPolicy,
    pub standby_functions: BTreeSet<Function>,
    pub controls: Vec<ControlBinding>,
    pub wakeup: WakeupFilterParams,
}

impl EcuConfig {
    /// Default re-sleep delay when a config does not set one.
    pub const DEFAULT_T_WAKEUP: Micros = Micros::from_secs(2);

    pub fn new(name: impl Into<String>, terminal: Terminal) -> Self {
        EcuConfig {
            name: name.into(),
            terminal,
            t_wakeup: Self::DEFAULT_T_WAKEUP,
            sleep_current: 80e-6,
            normal_current: 3e-3,
            schedule: Vec::new(),
            recovery: RecoveryPolicy::AutoRecover,
            standby_functions: BTreeSet::new(),
            controls: Vec::new(),
            wakeup: WakeupFilterParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), EcuConfigError> {
        let ecu = || self.name.clone();
        if !(self.sleep_current.is_finite() && self.normal_current.is_finite())
            || self.sleep_current < 0.0
            || self.normal_current < 0.0
        {
            return Err(EcuConfigError::NegativeCurrent { ecu: ecu() });
        }
        if self.sleep_current >= self.normal_current {
            return Err(EcuConfigError::SleepAboveNormal {
                ecu: ecu(),
                sleep: self.sleep_current,
                normal: self.normal_current,
            });
        }
        if self.t_wakeup == Micros::ZERO {
            return Err(EcuConfigError::ZeroWakeup { ecu: ecu() });
        }
        for m in &self.schedule {
            if m.period == Micros::ZERO {
                return Err(EcuConfigError::ZeroPeriod { ecu: ecu(), id: m.id });
            }
            let bad = |reason: &str| EcuConfigError::BadMessage {
                ecu: ecu(),
                id: m.id,
                reason: reason.into(),
            };
            if m.id > crate::frame::MAX_STANDARD_ID {
                return Err(bad("identifier exceeds 11 bits"));
            }
            if m.baseline.len() > 8 {
                return Err(bad("payload longer than 8 bytes"));
            }
            if m.free_running.len() != m.baseline.len() {
                return Err(bad("free-running mask length differs from payload length"));
            }
        }
        for c in &self.controls {
            let bad = |reason: &str| EcuConfigError::BadControl {
                ecu: ecu(),
                function: c.function,
                reason: reason.into(),
            };
            if c.byte >= 8 {
                return Err(bad("byte index beyond 8-byte payload"));
            }
            if c.mask == 0 {
                return Err(bad("empty mask"));
            }
            if c.values.is_empty() {
                return Err(bad("no accepted values"));
            }
        }
        Ok(())
    }

    /// Mode an ECU rests in while the ignition is off and nothing happens.
    pub fn idle_mode(&self) -> PowerMode {
        match self.terminal {
            Terminal::T15 => PowerMode::Off,
            Terminal::T30 => PowerMode::Sleep,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PowerMode {
    Off,
    Sleep,
    Normal,
    BusOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxResult {
    Success,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecoveryTrigger {
    /// The ECU's own software requests recovery after bus-off.
    Automatic,
    /// Explicit recovery request from the user or a service tool.
    UserRequest,
}

/// Frame awaiting retransmission after an error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingTx {
    pub frame: CanFrame,
    pub retry_at: Micros,
}

/// A frame released by [`EcuState::tick`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DueFrame {
    pub frame: CanFrame,
    pub retry: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickOutput {
    pub slept: bool,
    pub frames: Vec<DueFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcuState {
    pub mode: PowerMode,
    pub tec: u32,
    pub rec: u32,
    pub wake_deadline: Option<Micros>,
    /// Kept awake by the ignition regardless of the wake-up timer.
    pub ignition_hold: bool,
    pub next_tx: Vec<Micros>,
    pub emitted: Vec<u64>,
    #[serde(skip)]
    pub pending: Option<PendingTx>,
    #[serde(default)]
    pub overrides: Vec<PayloadOverride>,
}

impl EcuState {
    pub fn initial(config: &EcuConfig) -> Self {
        EcuState {
            mode: config.idle_mode(),
            tec: 0,
            rec: 0,
            wake_deadline: None,
            ignition_hold: false,
            next_tx: vec![Micros::MAX; config.schedule.len()],
            emitted: vec![0; config.schedule.len()],
            pending: None,
            overrides: Vec::new(),
        }
    }

    fn start_schedule(&mut self, config: &EcuConfig, now: Micros) {
        self.next_tx = config.schedule.iter().map(|m| now + m.offset).collect();
        self.emitted.resize(config.schedule.len(), 0);
    }

    fn halt_schedule(&mut self) {
        self.next_tx.iter_mut().for_each(|t| *t = Micros::MAX);
        self.pending = None;
        self.wake_deadline = None;
    }

    /// Handles a detected wake-up signal. Returns true on a Sleep → Normal
    /// transition.
    pub fn on_wakeup_signal(&mut self, config: &EcuConfig, now: Micros) -> bool {
        match self.mode {
            PowerMode::Sleep => {
                self.mode = PowerMode::Normal;
                self.wake_deadline = Some(now + config.t_wakeup);
                self.start_schedule(config, now);
                true
            }
            PowerMode::Normal => {
                if !self.ignition_hold {
                    self.wake_deadline = Some(now + config.t_wakeup);
                }
                false
            }
            PowerMode::Off | PowerMode::BusOff => false,
        }
    }

    /// Ignition switched on or off. Returns the mode before the change when
    /// the mode changed.
    pub fn on_ignition(&mut self, config: &EcuConfig, now: Micros, on: bool) -> Option<PowerMode> {
        let before = self.mode;
        self.ignition_hold = on;
        match (on, self.mode) {
            (_, PowerMode::BusOff) => return None,
            (true, PowerMode::Off | PowerMode::Sleep) => {
                self.mode = PowerMode::Normal;
                self.wake_deadline = None;
                self.start_schedule(config, now);
            }
            (true, PowerMode::Normal) => self.wake_deadline = None,
            (false, PowerMode::Normal) => match config.terminal {
                Terminal::T15 => {
                    self.mode = PowerMode::Off;
                    self.halt_schedule();
                }
                Terminal::T30 => self.wake_deadline = Some(now + config.t_wakeup),
            },
            (false, _) => {}
        }
        (self.mode != before).then_some(before)
    }

    /// Earliest time at which [`EcuState::tick`] has work to do.
    pub fn next_due(&self) -> Option<Micros> {
        if self.mode != PowerMode::Normal {
            return None;
        }
        let mut due = self.next_tx.iter().copied().min().unwrap_or(Micros::MAX);
        if let Some(d) = self.wake_deadline.filter(|_| !self.ignition_hold) {
            due = due.min(d);
        }
        match &self.pending {
            Some(p) => Some(due.min(p.retry_at)),
            None => (due != Micros::MAX).then_some(due),
        }
    }

    /// Advances the ECU to `now`: re-sleeps on timer expiry, otherwise
    /// releases every frame due. While a retransmission is pending the
    /// transmit buffer is busy and newly due schedule slots are skipped.
    pub fn tick(&mut self, config: &EcuConfig, now: Micros) -> TickOutput {
        let mut out = TickOutput::default();
        if self.mode != PowerMode::Normal {
            return out;
        }
        if !self.ignition_hold && self.wake_deadline.is_some_and(|d| now >= d) {
            self.mode = PowerMode::Sleep;
            self.halt_schedule();
            out.slept = true;
            return out;
        }
        let busy = match self.pending {
            Some(p) if p.retry_at <= now => {
                self.pending = None;
                out.frames.push(DueFrame { frame: p.frame, retry: true });
                true
            }
            Some(_) => true,
            None => false,
        };
        for (i, msg) in config.schedule.iter().enumerate() {
            if self.next_tx[i] > now {
                continue;
            }
            if !busy {
                let frame = msg.frame_for(self.emitted[i], &self.overrides);
                self.emitted[i] += 1;
                out.frames.push(DueFrame { frame, retry: false });
            }
            while self.next_tx[i] <= now {
                self.next_tx[i] += msg.period;
            }
        }
        out
    }

    /// Queues a failed frame for retransmission.
    pub fn schedule_retry(&mut self, frame: CanFrame, retry_at: Micros) {
        if self.mode == PowerMode::Normal {
            self.pending = Some(PendingTx { frame, retry_at });
        }
    }

    /// Applies a transmit outcome. Returns true when this error pushed the
    /// ECU into bus-off.
    pub fn on_tx_result(&mut self, result: TxResult) -> bool {
        if self.mode != PowerMode::Normal {
            return false;
        }
        match result {
            TxResult::Success => {
                self.tec = self.tec.saturating_sub(1);
                false
            }
            TxResult::Error => {
                self.tec += TEC_ERROR_INCREMENT;
                if self.tec > TEC_BUS_OFF_THRESHOLD {
                    self.mode = PowerMode::BusOff;
                    self.halt_schedule();
                    true
                } else {
                    false
                }
            }
        }
    }

    /// Receive errors only count; bus-off is driven by TEC alone.
    pub fn on_rx_result(&mut self, result: TxResult) {
        if self.mode != PowerMode::Normal {
            return;
        }
        match result {
            TxResult::Success => self.rec = self.rec.saturating_sub(1),
            TxResult::Error => self.rec += 1,
        }
    }

    /// Leaves bus-off when the ECU's policy admits `trigger`. Returns true on
    /// recovery; the ECU comes back in its idle mode with cleared counters.
    pub fn attempt_recovery(&mut self, config: &EcuConfig, trigger: RecoveryTrigger) -> bool {
        if self.mode != PowerMode::BusOff {
            return false;
        }
        let allowed = match (config.recovery, trigger) {
            (RecoveryPolicy::AutoRecover, _) => true,
            (RecoveryPolicy::ManualResetOnly, RecoveryTrigger::UserRequest) => true,
            (RecoveryPolicy::ManualResetOnly, RecoveryTrigger::Automatic) => false,
            (RecoveryPolicy::NeverRecover, _) => false,
        };
        if allowed {
            self.mode = config.idle_mode();
            self.tec = 0;
            self.rec = 0;
            self.halt_schedule();
        }
        allowed
    }

    /// Battery disconnect and reconnect: back to the configured idle mode.
    pub fn battery_reset(&mut self, config: &EcuConfig) {
        let emitted = std::mem::take(&mut self.emitted);
        *self = EcuState::initial(config);
        self.emitted = emitted;
        self.emitted.resize(config.schedule.len(), 0);
    }

    /// Supply current in amperes.
    pub fn current_draw(&self, config: &EcuConfig, active_function_loads: f64) -> f64 {
        mode_current(self.mode, config, active_function_loads)
    }
}

/// Current of an ECU in `mode`. Bus-off keeps the transceiver powered, so
/// it draws the sleep current.
pub fn mode_current(mode: PowerMode, config: &EcuConfig, active_function_loads: f64) -> f64 {
    match mode {
        PowerMode::Off => 0.0,
        PowerMode::Sleep | PowerMode::BusOff => config.sleep_current,
        PowerMode::Normal => config.normal_current + active_function_loads,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ecu(terminal: Terminal) -> EcuConfig {
        let mut cfg = EcuConfig::new("BCM", terminal);
        cfg.schedule.push(MessageSchedule {
            id: 0x101,
            period: Micros::from_millis(100),
            offset: Micros::ZERO,
            baseline: vec![0x00, 0x10, 0xAB, 0xCD],
            free_running: vec![0x00, 0x00, 0xFF, 0xFF],
        });
        cfg
    }

    fn normal_state(cfg: &EcuConfig) -> EcuState {
        let mut st = EcuState::initial(cfg);
        st.on_wakeup_signal(cfg, Micros::ZERO);
        st
    }

    #[test]
    fn sleep_ecu_wakes_with_deadline() {
        let cfg = ecu(Terminal::T30);
        let mut st = EcuState::initial(&cfg);
        assert_eq!(st.mode, PowerMode::Sleep);
        assert!(st.on_wakeup_signal(&cfg, Micros::from_secs(10)));
        assert_eq!(st.mode, PowerMode::Normal);
        assert_eq!(st.wake_deadline, Some(Micros::from_secs(12)));
    }

    #[test]
    fn terminal_15_ecu_stays_off() {
        let cfg = ecu(Terminal::T15);
        let mut st = EcuState::initial(&cfg);
        assert!(!st.on_wakeup_signal(&cfg, Micros::from_secs(1)));
        assert_eq!(st.mode, PowerMode::Off);
        assert_eq!(st.next_due(), None);
        assert_eq!(st.current_draw(&cfg, 0.0), 0.0);
    }

    #[test]
    fn resignal_extends_deadline() {
        let cfg = ecu(Terminal::T30);
        let mut st = normal_state(&cfg);
        assert!(!st.on_wakeup_signal(&cfg, Micros::from_millis(1500)));
        assert_eq!(st.wake_deadline, Some(Micros::from_millis(3500)));
    }

    #[test]
    fn ten_frames_per_second_at_100ms() {
        let cfg = ecu(Terminal::T30);
        let mut st = EcuState::initial(&cfg);
        st.on_wakeup_signal(&cfg, Micros::ZERO);
        st.wake_deadline = Some(Micros::from_secs(100));
        let mut frames = 0;
        let mut now = Micros::ZERO;
        while let Some(due) = st.next_due() {
            if due >= Micros::from_secs(1) {
                break;
            }
            now = due;
            frames += st.tick(&cfg, now).frames.len();
        }
        assert_eq!(frames, 10);
        assert_eq!(now, Micros::from_millis(900));
    }

    #[test]
    fn sleeping_ecu_emits_nothing() {
        let cfg = ecu(Terminal::T30);
        let mut st = EcuState::initial(&cfg);
        assert!(st.tick(&cfg, Micros::from_secs(5)).frames.is_empty());
    }

    #[test]
    fn free_running_bytes_flip_every_emission() {
        let cfg = ecu(Terminal::T30);
        let m = &cfg.schedule[0];
        assert_eq!(m.frame_for(0, &[]).data(), &[0x00, 0x10, 0xAB, 0xCD]);
        assert_eq!(m.frame_for(1, &[]).data(), &[0x00, 0x10, 0x54, 0x32]);
        let ov = PayloadOverride {
            id: 0x101,
            byte: 1,
            mask: 0x20,
            value: 0x20,
        };
        assert_eq!(m.frame_for(2, &[ov]).data(), &[0x00, 0x30, 0xAB, 0xCD]);
    }

    #[test]
    fn thirty_two_errors_reach_bus_off() {
        let cfg = ecu(Terminal::T30);
        let mut st = normal_state(&cfg);
        for i in 1..=31 {
            assert!(!st.on_tx_result(TxResult::Error), "bus-off at {i}");
        }
        assert_eq!(st.tec, 248);
        assert!(st.on_tx_result(TxResult::Error));
        assert_eq!(st.tec, 256);
        assert_eq!(st.mode, PowerMode::BusOff);
        assert_eq!(st.next_due(), None);
    }

    #[test]
    fn success_decrements_tec() {
        let cfg = ecu(Terminal::T30);
        let mut st = normal_state(&cfg);
        st.tec = 8;
        st.on_tx_result(TxResult::Success);
        assert_eq!(st.tec, 7);
        st.tec = 0;
        st.on_tx_result(TxResult::Success);
        assert_eq!(st.tec, 0);
    }

    #[test]
    fn rec_never_causes_bus_off() {
        let cfg = ecu(Terminal::T30);
        let mut st = normal_state(&cfg);
        st.on_rx_result(TxResult::Error);
        assert_eq!(st.rec, 1);
        st.on_rx_result(TxResult::Success);
        assert_eq!(st.rec, 0);
        for _ in 0..300 {
            st.on_rx_result(TxResult::Error);
        }
        assert_eq!(st.rec, 300);
        assert_eq!(st.mode, PowerMode::Normal);
    }

    fn bus_off(cfg: &EcuConfig) -> EcuState {
        let mut st = normal_state(cfg);
        st.tec = 248;
        st.on_tx_result(TxResult::Error);
        assert_eq!(st.mode, PowerMode::BusOff);
        st
    }

    #[test]
    fn recovery_policies() {
        let mut never = ecu(Terminal::T30);
        never.recovery = RecoveryPolicy::NeverRecover;
        let mut st = bus_off(&never);
        assert!(!st.attempt_recovery(&never, RecoveryTrigger::Automatic));
        assert!(!st.attempt_recovery(&never, RecoveryTrigger::UserRequest));
        assert_eq!(st.mode, PowerMode::BusOff);
        st.battery_reset(&never);
        assert_eq!(st.mode, PowerMode::Sleep);
        assert_eq!(st.tec, 0);

        let auto = ecu(Terminal::T30);
        let mut st = bus_off(&auto);
        assert!(st.attempt_recovery(&auto, RecoveryTrigger::Automatic));
        assert_eq!((st.mode, st.tec, st.rec), (PowerMode::Sleep, 0, 0));
        assert!(st.on_wakeup_signal(&auto, Micros::from_secs(1)));

        let mut manual = ecu(Terminal::T30);
        manual.recovery = RecoveryPolicy::ManualResetOnly;
        let mut st = bus_off(&manual);
        assert!(!st.attempt_recovery(&manual, RecoveryTrigger::Automatic));
        assert!(st.attempt_recovery(&manual, RecoveryTrigger::UserRequest));
    }

    #[test]
    fn recovery_on_healthy_ecu_is_noop() {
        let cfg = ecu(Terminal::T30);
        let mut st = normal_state(&cfg);
        let before = st.clone();
        assert!(!st.attempt_recovery(&cfg, RecoveryTrigger::UserRequest));
        assert_eq!(st, before);
    }

    #[test]
    fn current_per_mode() {
        let mut cfg = ecu(Terminal::T30);
        cfg.sleep_current = 80e-6;
        cfg.normal_current = 3e-3;
        let mut st = EcuState::initial(&cfg);
        assert_eq!(st.current_draw(&cfg, 0.0), 80e-6);
        st.on_wakeup_signal(&cfg, Micros::ZERO);
        // welcome-light delta: 101.1 mA - 74.5 mA
        let welcome = 0.1011 - 0.0745;
        assert!((st.current_draw(&cfg, welcome) - 0.0296).abs() < 1e-12);
        st.mode = PowerMode::BusOff;
        assert_eq!(st.current_draw(&cfg, 1.0), 80e-6);
    }

    #[test]
    fn validation() {
        let mut cfg = ecu(Terminal::T30);
        assert!(cfg.validate().is_ok());
        cfg.sleep_current = 0.01;
        assert!(matches!(cfg.validate(), Err(EcuConfigError::SleepAboveNormal { .. })));
        let mut cfg = ecu(Terminal::T30);
        cfg.schedule[0].period = Micros::ZERO;
        assert!(matches!(cfg.validate(), Err(EcuConfigError::ZeroPeriod { .. })));
        let mut cfg = ecu(Terminal::T30);
        cfg.t_wakeup = Micros::ZERO;
        assert!(matches!(cfg.validate(), Err(EcuConfigError::ZeroWakeup { .. })));
    }

    #[test]
    fn ignition_cycle() {
        let cfg = ecu(Terminal::T15);
        let mut st = EcuState::initial(&cfg);
        assert_eq!(st.on_ignition(&cfg, Micros::ZERO, true), Some(PowerMode::Off));
        assert_eq!(st.mode, PowerMode::Normal);
        // held awake without a deadline
        assert!(!st.tick(&cfg, Micros::from_secs(60)).slept);
        assert_eq!(st.on_ignition(&cfg, Micros::from_secs(61), false), Some(PowerMode::Normal));
        assert_eq!(st.mode, PowerMode::Off);

        let cfg = ecu(Terminal::T30);
        let mut st = EcuState::initial(&cfg);
        st.on_ignition(&cfg, Micros::ZERO, true);
        st.on_ignition(&cfg, Micros::from_secs(10), false);
        assert_eq!(st.wake_deadline, Some(Micros::from_secs(12)));
    }

    #[test]
    fn control_binding_matching() {
        let door = ControlBinding {
            function: Function::DoorControl,
            id: 0x001,
            byte: 1,
            mask: 0x60,
            values: vec![0x20, 0x40],
        };
        let frame = |b1: u8| CanFrame::new(0x001, &[0x00, b1, 0, 0]).unwrap();
        assert!(door.matches(&frame(0x30)));
        assert!(door.matches(&frame(0x50)));
        assert!(!door.matches(&frame(0x10)));
        assert!(!door.matches(&frame(0x70)));
        assert!(!door.matches(&CanFrame::new(0x002, &[0x00, 0x30]).unwrap()));
        assert!(!door.matches(&CanFrame::new(0x001, &[0x00]).unwrap()));
    }
}
