//! Attack plans against a parked vehicle and their execution.
//!
//! Battery drain keeps ECUs awake with wake-up frames and switches on
//! light-heavy functions through injected control messages. Denial of body
//! control wakes the bus, then switches the attacker's bit rate so every
//! transmission fails until all awake ECUs are bus-off; ECUs that do not
//! recover on their own stay down.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::bus::{self, Action, BusError, BusTrace, EventKind, Injection, MismatchDirective, MismatchEnd, RunOptions};
use crate::ecu::{EcuState, Function, PowerMode, RecoveryTrigger};
use crate::frame::{CanFrame, FrameError};
use crate::harness::vehicle::VehicleConfig;
use crate::power::{self, CurrentProfile, DrainOptions, DrainReport, LoadInterval, PowerError};
use crate::units::Micros;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("{0} plan needs a control id and payload")]
    MissingControl(&'static str),
    #[error("{0} plan needs a positive injection period")]
    MissingPeriod(&'static str),
    #[error("vehicle has no ECU bound to {0}")]
    NoBinding(Function),
    #[error("vehicle has no wakeable ECU")]
    NothingToWake,
    #[error("unknown plan `{0}`")]
    UnknownPlan(String),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Power(#[from] PowerError),
}

/// How long a function's load stays on once triggered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Activation {
    /// On for `hold` after each accepted control frame; a plan's injection
    /// period replaces `hold` for frames it injected.
    WhileRepeated { hold: Micros },
    /// On until closed, or until `auto_off` elapses.
    Latched { auto_off: Option<Micros> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FunctionLoad {
    pub current_a: f64,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Lighting {
    Day,
    /// Headlights join the welcome lights; door loads scale by `multiplier`.
    Night { multiplier: f64 },
}

/// Extra supply current drawn while a vehicle function is active.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionLoadTable {
    pub loads: BTreeMap<Function, FunctionLoad>,
    pub lighting: Lighting,
}

impl Default for FunctionLoadTable {
    fn default() -> Self {
        FunctionLoadTable {
            loads: BTreeMap::new(),
            lighting: Lighting::Day,
        }
    }
}

impl FunctionLoadTable {
    pub fn validate(&self) -> Result<(), String> {
        for (f, l) in &self.loads {
            if !(l.current_a >= 0.0 && l.current_a.is_finite()) {
                return Err(format!("{f}: load must be non-negative"));
            }
        }
        if let Lighting::Night { multiplier } = self.lighting {
            if !(multiplier >= 0.0 && multiplier.is_finite()) {
                return Err("night multiplier must be non-negative".into());
            }
        }
        Ok(())
    }

    /// Load current of `function`, after the day/night adjustment.
    pub fn current(&self, function: Function) -> f64 {
        let base = self.loads.get(&function).map_or(0.0, |l| l.current_a);
        match (function, self.lighting) {
            (Function::DoorControl, Lighting::Night { multiplier }) => base * multiplier,
            _ => base,
        }
    }
}

/// Smallest wake-up rate that keeps every awakened ECU in normal mode,
/// expressed as the longest admissible period.
pub fn required_injection_period(t_wakeup: Micros) -> Micros {
    t_wakeup
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackKind {
    WakeupFlood,
    PowerModeControl,
    DoorCycle,
    TrunkOpen,
    /// Wake the bus, wait `settle`, then force bus-off by bit-rate mismatch.
    DoB { settle: Micros },
    Composite(Vec<AttackPlan>),
}

impl AttackKind {
    fn name(&self) -> &'static str {
        match self {
            AttackKind::WakeupFlood => "wake-up flood",
            AttackKind::PowerModeControl => "power mode",
            AttackKind::DoorCycle => "door cycle",
            AttackKind::TrunkOpen => "trunk",
            AttackKind::DoB { .. } => "DoB",
            AttackKind::Composite(_) => "composite",
        }
    }

    /// Function a control plan drives.
    pub fn function(&self) -> Option<Function> {
        match self {
            AttackKind::PowerModeControl => Some(Function::PowerMode),
            AttackKind::DoorCycle => Some(Function::DoorControl),
            AttackKind::TrunkOpen => Some(Function::TrunkControl),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackPlan {
    pub label: String,
    pub kind: AttackKind,
    pub control_id: Option<u16>,
    /// Payloads injected in rotation (unlock, lock, unlock, ...).
    pub control_payloads: Vec<Vec<u8>>,
    pub injection_period: Option<Micros>,
    pub start: Micros,
    pub stop: Option<Micros>,
}

impl AttackPlan {
    fn bare(label: &str, kind: AttackKind) -> Self {
        AttackPlan {
            label: label.into(),
            kind,
            control_id: None,
            control_payloads: Vec::new(),
            injection_period: None,
            start: Micros::ZERO,
            stop: None,
        }
    }

    pub fn wakeup_flood(period: Micros) -> Self {
        AttackPlan {
            injection_period: Some(period),
            ..Self::bare("Wake-up", AttackKind::WakeupFlood)
        }
    }

    pub fn dob(settle: Micros) -> Self {
        Self::bare("DoB", AttackKind::DoB { settle })
    }

    pub fn composite(label: &str, parts: Vec<AttackPlan>) -> Self {
        Self::bare(label, AttackKind::Composite(parts))
    }

    /// A control plan aimed at `vehicle`, using its control binding for the
    /// function and the transmitting ECU's baseline payload.
    pub fn control(kind: AttackKind, vehicle: &VehicleConfig, period: Option<Micros>) -> Result<Self, AttackError> {
        let function = kind.function().ok_or(AttackError::MissingControl(kind.name()))?;
        let binding = vehicle
            .ecus
            .iter()
            .flat_map(|e| &e.controls)
            .find(|b| b.function == function)
            .ok_or(AttackError::NoBinding(function))?;
        let mut baseline = vehicle
            .message(binding.id)
            .map(|(_, m)| m.baseline.clone())
            .unwrap_or_else(|| vec![0; 8]);
        if baseline.len() <= binding.byte as usize {
            baseline.resize(binding.byte as usize + 1, 0);
        }
        let payloads = binding
            .values
            .iter()
            .map(|v| {
                let mut p = baseline.clone();
                let b = &mut p[binding.byte as usize];
                *b = (*b & !binding.mask) | (v & binding.mask);
                p
            })
            .collect();
        let label = match kind {
            AttackKind::PowerModeControl => "Change Power Mode",
            AttackKind::DoorCycle => "Lock & Unlock Door",
            _ => "Open Trunk",
        };
        let period = match (&kind, period) {
            (AttackKind::TrunkOpen, None) => match vehicle.loads.loads.get(&function).map(|l| l.activation) {
                Some(Activation::Latched { auto_off: Some(t) }) => Some(t),
                _ => None,
            },
            (_, p) => p,
        };
        Ok(AttackPlan {
            label: label.into(),
            kind,
            control_id: Some(binding.id),
            control_payloads: payloads,
            injection_period: period,
            start: Micros::ZERO,
            stop: None,
        })
    }

    /// Builds one of the named plans: `none`, `wakeup`, `power-mode`,
    /// `door-cycle`, `trunk`, `full-drain` (the cumulative drain ladder) or
    /// `dob`.
    pub fn named(name: &str, vehicle: &VehicleConfig) -> Result<Self, AttackError> {
        let flood_period = vehicle
            .wakeable()
            .iter()
            .map(|&i| vehicle.ecus[i].t_wakeup)
            .min()
            .map(required_injection_period)
            .ok_or(AttackError::NothingToWake);
        let plan = match name {
            "none" => Self::composite("None", vec![]),
            "wakeup" => Self::wakeup_flood(flood_period?),
            "power-mode" => Self::control(AttackKind::PowerModeControl, vehicle, Some(Micros::from_secs(1)))?,
            "door-cycle" => Self::control(AttackKind::DoorCycle, vehicle, Some(Micros::from_secs(5)))?,
            "trunk" => Self::control(AttackKind::TrunkOpen, vehicle, None)?,
            "full-drain" => Self::composite(
                "Full drain",
                vec![
                    Self::wakeup_flood(flood_period?),
                    Self::control(AttackKind::PowerModeControl, vehicle, Some(Micros::from_secs(1)))?,
                    Self::control(AttackKind::DoorCycle, vehicle, Some(Micros::from_secs(5)))?,
                    Self::control(AttackKind::TrunkOpen, vehicle, None)?,
                ],
            ),
            "dob" => Self::dob(Micros::from_secs(1)),
            other => return Err(AttackError::UnknownPlan(other.to_string())),
        };
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        let name = self.kind.name();
        match &self.kind {
            AttackKind::WakeupFlood => {
                if self.injection_period.is_none_or(|p| p == Micros::ZERO) {
                    return Err(AttackError::MissingPeriod(name));
                }
            }
            AttackKind::PowerModeControl | AttackKind::DoorCycle | AttackKind::TrunkOpen => {
                if self.control_id.is_none() || self.control_payloads.is_empty() {
                    return Err(AttackError::MissingControl(name));
                }
                let needs_period = !matches!(self.kind, AttackKind::TrunkOpen);
                if self.injection_period == Some(Micros::ZERO) || (needs_period && self.injection_period.is_none()) {
                    return Err(AttackError::MissingPeriod(name));
                }
            }
            AttackKind::DoB { .. } => {}
            AttackKind::Composite(parts) => parts.iter().try_for_each(AttackPlan::validate)?,
        }
        Ok(())
    }

    /// Leaf plans in order.
    pub fn leaves(&self) -> Vec<&AttackPlan> {
        match &self.kind {
            AttackKind::Composite(parts) => parts.iter().flat_map(|p| p.leaves()).collect(),
            _ => vec![self],
        }
    }

    fn control_frame(&self, n: usize) -> Result<CanFrame, FrameError> {
        let id = self.control_id.expect("validated");
        CanFrame::new(id, &self.control_payloads[n % self.control_payloads.len()])
    }
}

/// Time-sorted injection schedule for `plan` over `[0, duration)`.
pub fn build_injections(plan: &AttackPlan, duration: Micros) -> Result<Vec<Injection>, AttackError> {
    plan.validate()?;
    let stop = plan.stop.map_or(duration, |s| s.min(duration));
    let periodic = |period: Micros| {
        let mut times = Vec::new();
        let mut t = plan.start;
        while t < stop {
            times.push(t);
            t += period;
        }
        times
    };
    let out = match &plan.kind {
        AttackKind::WakeupFlood => periodic(plan.injection_period.expect("validated"))
            .into_iter()
            .map(|t| Injection::frame(t, CanFrame::all_recessive()))
            .collect(),
        AttackKind::PowerModeControl | AttackKind::DoorCycle | AttackKind::TrunkOpen => {
            let times = match plan.injection_period {
                Some(p) => periodic(p),
                None => vec![plan.start].into_iter().filter(|&t| t < stop).collect(),
            };
            times
                .into_iter()
                .enumerate()
                .map(|(n, t)| Ok(Injection::frame(t, plan.control_frame(n)?)))
                .collect::<Result<_, FrameError>>()?
        }
        AttackKind::DoB { settle } => {
            let mut v = Vec::new();
            if plan.start < stop {
                v.push(Injection::frame(plan.start, CanFrame::all_recessive()));
            }
            if plan.start + *settle < stop {
                v.push(Injection {
                    time: plan.start + *settle,
                    action: Action::Mismatch(MismatchDirective {
                        end: MismatchEnd::AllBusOff,
                        recovery: Some(RecoveryTrigger::Automatic),
                    }),
                });
            }
            v
        }
        AttackKind::Composite(parts) => {
            let mut all = Vec::new();
            for p in parts {
                all.extend(build_injections(p, duration)?);
            }
            all.sort_by_key(|i| i.time);
            all
        }
    };
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FunctionStatus {
    pub function: Function,
    pub available: bool,
    pub hosts: Vec<String>,
}

/// Which standby functions still work at the end of a run. A function is
/// lost when every ECU hosting it is stuck in bus-off.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FunctionAvailability {
    pub functions: Vec<FunctionStatus>,
}

impl FunctionAvailability {
    pub fn from_states(vehicle: &VehicleConfig, states: &[EcuState]) -> Self {
        let mut hosts: BTreeMap<Function, Vec<usize>> = BTreeMap::new();
        for (i, e) in vehicle.ecus.iter().enumerate() {
            for &f in &e.standby_functions {
                hosts.entry(f).or_default().push(i);
            }
        }
        let functions = hosts
            .into_iter()
            .map(|(function, idx)| FunctionStatus {
                function,
                available: idx.iter().any(|&i| states[i].mode != PowerMode::BusOff),
                hosts: idx.iter().map(|&i| vehicle.ecus[i].name.clone()).collect(),
            })
            .collect();
        FunctionAvailability { functions }
    }

    pub fn is_available(&self, f: Function) -> Option<bool> {
        self.functions.iter().find(|s| s.function == f).map(|s| s.available)
    }
}

/// Function-load intervals implied by the control activations in `trace`.
/// Overlapping activations of one function at one host merge.
pub fn load_intervals(trace: &BusTrace, vehicle: &VehicleConfig, plan: &AttackPlan) -> Vec<LoadInterval> {
    let plan_holds: BTreeMap<Function, Micros> = plan
        .leaves()
        .into_iter()
        .filter_map(|p| Some((p.kind.function()?, p.injection_period?)))
        .collect();
    let span = trace.duration;
    let mut raw: BTreeMap<(usize, Function), Vec<(Micros, Micros)>> = BTreeMap::new();
    for e in &trace.events {
        let EventKind::ControlActivated { node, function, .. } = e.kind else {
            continue;
        };
        let Some(load) = vehicle.loads.loads.get(&function) else {
            continue;
        };
        let end = match load.activation {
            Activation::WhileRepeated { hold } => e.time + plan_holds.get(&function).copied().unwrap_or(hold),
            Activation::Latched { auto_off: Some(t) } => e.time + t,
            Activation::Latched { auto_off: None } => span,
        };
        raw.entry((node, function)).or_default().push((e.time, end.min(span)));
    }
    let mut out = Vec::new();
    for ((host, function), mut spans) in raw {
        spans.sort();
        let current = vehicle.loads.current(function);
        let mut merged: Vec<(Micros, Micros)> = Vec::new();
        for (s, e) in spans {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        out.extend(merged.into_iter().map(|(start, end)| LoadInterval {
            host,
            function,
            start,
            end,
            current,
        }));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExecuteOptions {
    pub drain: DrainOptions,
    pub record_frames_until: Option<Micros>,
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub report: DrainReport,
    pub trace: BusTrace,
    pub availability: FunctionAvailability,
}

fn attack_bus(vehicle: &VehicleConfig, plan: &AttackPlan) -> Result<bus::BusConfig, AttackError> {
    let mut cfg = vehicle.bus_config()?;
    let has_dob = plan.leaves().iter().any(|p| matches!(p.kind, AttackKind::DoB { .. }));
    if has_dob && cfg.attacker_bitrate == cfg.bitrate {
        cfg.attacker_bitrate = cfg.bitrate / 2;
    }
    Ok(cfg)
}

/// Mean supply current of the parked vehicle with nobody touching it.
pub fn baseline_current(vehicle: &VehicleConfig) -> f64 {
    vehicle.idle_current()
}

/// Runs `plan` against `vehicle` for `duration` and reports the drain.
pub fn execute(plan: &AttackPlan, vehicle: &VehicleConfig, duration: Micros, opts: &ExecuteOptions) -> Result<AttackOutcome, AttackError> {
    let injections = build_injections(plan, duration)?;
    let cfg = attack_bus(vehicle, plan)?;
    let trace = bus::run_with(
        &cfg,
        None,
        &injections,
        duration,
        RunOptions {
            record_frames_until: opts.record_frames_until,
        },
    )?;
    let loads = load_intervals(&trace, vehicle, plan);
    let profile = CurrentProfile::from_trace(&trace, &vehicle.ecus, vehicle.quiescent_current, &loads);
    let report = power::integrate_drain(&plan.label, &profile, baseline_current(vehicle), &vehicle.battery, &opts.drain)?;
    let availability = FunctionAvailability::from_states(vehicle, &trace.final_states);
    Ok(AttackOutcome {
        report,
        trace,
        availability,
    })
}

/// Executes the cumulative prefixes of a composite plan (no attack, first
/// part, first two parts, ...), one report per row.
pub fn execute_ladder(plan: &AttackPlan, vehicle: &VehicleConfig, duration: Micros, opts: &ExecuteOptions) -> Result<Vec<AttackOutcome>, AttackError> {
    let parts: Vec<AttackPlan> = match &plan.kind {
        AttackKind::Composite(parts) => parts.clone(),
        _ => vec![plan.clone()],
    };
    let mut rows = Vec::with_capacity(parts.len() + 1);
    for n in 0..=parts.len() {
        let label = match n {
            0 => "None".to_string(),
            _ => format!("+ {}", parts[n - 1].label),
        };
        let prefix = AttackPlan::composite(&label, parts[..n].to_vec());
        rows.push(execute(&prefix, vehicle, duration, opts)?);
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct DobOutcome {
    pub trace: BusTrace,
    /// Names of ECUs still in bus-off after the automatic recovery sweep.
    pub permanently_off: Vec<String>,
    pub availability: FunctionAvailability,
    pub first_injection: Micros,
    pub last_bus_off: Option<Micros>,
    /// Distinct ECU identifiers before the attack and after a later re-wake.
    pub ids_before: usize,
    pub ids_after: usize,
}

impl DobOutcome {
    pub fn attack_duration(&self) -> Option<Micros> {
        self.last_bus_off.map(|t| t - self.first_injection)
    }
}

/// Default observation window either side of the attack.
pub const DOB_SETTLE: Micros = Micros::from_secs(1);
const DOB_REWAKE_AFTER: Micros = Micros::from_secs(4);

/// Mounts the DoB attack on a parked vehicle, then wakes the bus once more
/// to see which ECUs came back.
pub fn dob_attack(vehicle: &VehicleConfig, duration: Micros) -> Result<DobOutcome, AttackError> {
    dob_attack_from(vehicle, None, duration)
}

/// As [`dob_attack`], starting from explicit ECU states.
pub fn dob_attack_from(vehicle: &VehicleConfig, initial: Option<Vec<EcuState>>, duration: Micros) -> Result<DobOutcome, AttackError> {
    if vehicle.wakeable().is_empty() {
        return Err(AttackError::NothingToWake);
    }
    let plan = AttackPlan::dob(DOB_SETTLE);
    let rewake = DOB_SETTLE + DOB_REWAKE_AFTER;
    let duration = duration.max(rewake + DOB_SETTLE + Micros(1));
    let mut injections = build_injections(&plan, duration)?;
    injections.push(Injection::frame(rewake, CanFrame::all_recessive()));
    let cfg = attack_bus(vehicle, &plan)?;
    let trace = bus::run_with(&cfg, initial, &injections, duration, RunOptions::default())?;

    let last_bus_off = trace
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::BusOff { .. }))
        .map(|e| e.time)
        .max();
    let permanently_off = trace.bus_off_nodes().into_iter().map(|i| vehicle.ecus[i].name.clone()).collect();
    let availability = FunctionAvailability::from_states(vehicle, &trace.final_states);
    let ids_before = bus::distinct_ecu_id_count(&trace, Micros::ZERO..DOB_SETTLE);
    let ids_after = bus::distinct_ecu_id_count(&trace, rewake..rewake + DOB_SETTLE);
    Ok(DobOutcome {
        permanently_off,
        availability,
        first_injection: Micros::ZERO,
        last_bus_off,
        ids_before,
        ids_after,
        trace,
    })
}

/// Distinct identifiers per ECU, for mapping missing IDs back to senders.
pub fn ids_by_sender(vehicle: &VehicleConfig) -> BTreeMap<String, BTreeSet<u16>> {
    vehicle
        .ecus
        .iter()
        .map(|e| (e.name.clone(), e.schedule.iter().map(|m| m.id).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flood(period_ms: u64) -> AttackPlan {
        AttackPlan::wakeup_flood(Micros::from_millis(period_ms))
    }

    fn door() -> AttackPlan {
        AttackPlan {
            label: "door".into(),
            kind: AttackKind::DoorCycle,
            control_id: Some(0x001),
            control_payloads: vec![vec![0x00, 0x30], vec![0x00, 0x50]],
            injection_period: Some(Micros::from_secs(5)),
            start: Micros::ZERO,
            stop: None,
        }
    }

    #[test]
    fn injection_period_equals_t_wakeup() {
        assert_eq!(required_injection_period(Micros::from_secs(2)), Micros::from_secs(2));
        assert_eq!(required_injection_period(Micros::MAX), Micros::MAX);
    }

    #[test]
    fn door_cycle_alternates_payloads() {
        let inj = build_injections(&door(), Micros::from_secs(60)).unwrap();
        assert_eq!(inj.len(), 12);
        for (n, i) in inj.iter().enumerate() {
            let Action::Frame(f) = &i.action else { panic!() };
            assert_eq!(f.data()[1], if n % 2 == 0 { 0x30 } else { 0x50 });
            assert_eq!(i.time, Micros::from_secs(5 * n as u64));
        }
    }

    #[test]
    fn latched_trunk_is_a_single_frame() {
        let trunk = AttackPlan {
            kind: AttackKind::TrunkOpen,
            injection_period: None,
            control_payloads: vec![vec![0, 0, 0, 1]],
            ..door()
        };
        assert_eq!(build_injections(&trunk, Micros::from_secs(3600)).unwrap().len(), 1);
    }

    #[test]
    fn composite_is_time_merged() {
        let power = AttackPlan {
            kind: AttackKind::PowerModeControl,
            injection_period: Some(Micros::from_millis(700)),
            ..door()
        };
        let plan = AttackPlan::composite("c", vec![flood(2000), power.clone()]);
        let merged = build_injections(&plan, Micros::from_secs(20)).unwrap();
        let mut oracle = build_injections(&flood(2000), Micros::from_secs(20)).unwrap();
        oracle.extend(build_injections(&power, Micros::from_secs(20)).unwrap());
        oracle.sort_by_key(|i| i.time);
        assert_eq!(merged, oracle);
        assert!(merged.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn control_plan_without_id_rejected() {
        let mut p = door();
        p.control_id = None;
        assert!(matches!(build_injections(&p, Micros::from_secs(1)), Err(AttackError::MissingControl(_))));
        let mut p = flood(0);
        p.injection_period = Some(Micros::ZERO);
        assert!(matches!(p.validate(), Err(AttackError::MissingPeriod(_))));
    }

    #[test]
    fn dob_plan_is_wake_then_mismatch() {
        let inj = build_injections(&AttackPlan::dob(Micros::from_secs(1)), Micros::from_secs(10)).unwrap();
        assert_eq!(inj.len(), 2);
        assert!(matches!(inj[0].action, Action::Frame(_)));
        assert!(matches!(inj[1].action, Action::Mismatch(_)));
        assert_eq!(inj[1].time, Micros::from_secs(1));
    }

    #[test]
    fn night_lighting_scales_door_load() {
        let mut table = FunctionLoadTable::default();
        table.loads.insert(
            Function::DoorControl,
            FunctionLoad {
                current_a: 0.0266,
                activation: Activation::WhileRepeated { hold: Micros::from_secs(5) },
            },
        );
        assert_eq!(table.current(Function::DoorControl), 0.0266);
        table.lighting = Lighting::Night { multiplier: 2.0 };
        assert_eq!(table.current(Function::DoorControl), 0.0532);
        assert_eq!(table.current(Function::TrunkControl), 0.0);
    }
}
