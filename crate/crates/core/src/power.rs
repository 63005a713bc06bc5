//! Battery drain: ideal and Peukert operation times, and integration of a
//! simulated current profile down to the cold-start state of charge.

// Negated comparisons below also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{BusTrace, EventKind};
use crate::ecu::{mode_current, EcuConfig, Function, PowerMode};
use crate::units::Micros;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerError {
    #[error("current must be positive, got {0} A")]
    NonPositiveCurrent(f64),
    #[error("baseline current must be positive, got {0} A")]
    NonPositiveBaseline(f64),
    #[error("battery config: {0}")]
    InvalidBattery(&'static str),
    #[error("integration step must be positive")]
    ZeroStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryConfig {
    pub capacity_ah: f64,
    pub soc_start: f64,
    /// Lowest state of charge that still cold-starts the engine.
    pub soc_min_start: f64,
    pub parasitic_threshold_a: f64,
    pub peukert_exponent: f64,
    pub rated_discharge_hours: f64,
    /// Capacity multiplier for cold or aged batteries (1.0 = nominal).
    pub derating: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            capacity_ah: 45.0,
            soc_start: 0.70,
            soc_min_start: 0.50,
            parasitic_threshold_a: 0.030,
            peukert_exponent: 1.0,
            rated_discharge_hours: 20.0,
            derating: 1.0,
        }
    }
}

impl BatteryConfig {
    pub fn validate(&self) -> Result<(), PowerError> {
        if !(self.capacity_ah > 0.0 && self.capacity_ah.is_finite()) {
            return Err(PowerError::InvalidBattery("capacity must be positive"));
        }
        if !(0.0 <= self.soc_min_start && self.soc_min_start < self.soc_start && self.soc_start <= 1.0) {
            return Err(PowerError::InvalidBattery("need 0 <= soc_min_start < soc_start <= 1"));
        }
        if !(self.peukert_exponent >= 1.0 && self.peukert_exponent.is_finite()) {
            return Err(PowerError::InvalidBattery("peukert exponent must be >= 1"));
        }
        if !(self.rated_discharge_hours > 0.0) {
            return Err(PowerError::InvalidBattery("rated discharge hours must be positive"));
        }
        if !(self.derating > 0.0 && self.derating <= 1.0) {
            return Err(PowerError::InvalidBattery("derating must lie in (0, 1]"));
        }
        if !(self.parasitic_threshold_a >= 0.0) {
            return Err(PowerError::InvalidBattery("parasitic threshold must be non-negative"));
        }
        Ok(())
    }

    pub fn effective_capacity_ah(&self) -> f64 {
        self.capacity_ah * self.derating
    }

    /// Charge available before the cold-start limit, in Ah.
    pub fn usable_capacity_ah(&self) -> f64 {
        self.effective_capacity_ah() * (self.soc_start - self.soc_min_start)
    }
}

/// Hours until the cold-start limit at a constant `current` (A).
pub fn operation_time_ideal(cfg: &BatteryConfig, current: f64) -> Result<f64, PowerError> {
    if !(current > 0.0) {
        return Err(PowerError::NonPositiveCurrent(current));
    }
    Ok(cfg.usable_capacity_ah() / current)
}

pub fn amplification(current: f64, baseline: f64) -> Result<f64, PowerError> {
    if !(baseline > 0.0) {
        return Err(PowerError::NonPositiveBaseline(baseline));
    }
    Ok(current / baseline)
}

/// Peukert-adjusted hours: `H * (C / (I * H))^k` with `H` the rated
/// discharge time and `C` the usable capacity. Below the rated current
/// (`C / H`) this exceeds the ideal time; above it, it falls short.
pub fn operation_time_peukert(cfg: &BatteryConfig, current: f64) -> Result<f64, PowerError> {
    if !(current > 0.0) {
        return Err(PowerError::NonPositiveCurrent(current));
    }
    let h = cfg.rated_discharge_hours;
    Ok(h * (cfg.usable_capacity_ah() / (current * h)).powf(cfg.peukert_exponent))
}

/// A function load switched on at `host` for `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadInterval {
    pub host: usize,
    pub function: Function,
    pub start: Micros,
    pub end: Micros,
    pub current: f64,
}

/// Piecewise-constant supply current over `[0, span)`, repeated
/// periodically beyond `span`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentProfile {
    span: Micros,
    /// `(start, amperes)`, first entry at zero, strictly increasing starts.
    steps: Vec<(Micros, f64)>,
    /// Ampere-seconds drawn before each step start.
    charge_before: Vec<f64>,
}

impl CurrentProfile {
    pub fn constant(current: f64, span: Micros) -> Self {
        Self::from_steps(vec![(Micros::ZERO, current)], span)
    }

    fn from_steps(steps: Vec<(Micros, f64)>, span: Micros) -> Self {
        assert!(span > Micros::ZERO, "profile span must be positive");
        let mut charge_before = Vec::with_capacity(steps.len());
        let mut acc = 0.0;
        for (i, &(start, amps)) in steps.iter().enumerate() {
            charge_before.push(acc);
            let end = steps.get(i + 1).map_or(span, |s| s.0);
            acc += amps * (end - start).as_secs_f64();
        }
        CurrentProfile {
            span,
            steps,
            charge_before,
        }
    }

    /// Total supply current of a simulated vehicle: a constant quiescent
    /// draw, each node's mode current, and function loads counted while
    /// their host is in normal mode.
    pub fn from_trace(trace: &BusTrace, roster: &[EcuConfig], quiescent: f64, loads: &[LoadInterval]) -> Self {
        enum Change {
            Mode(usize, PowerMode),
            Load(usize, f64),
        }
        let span = trace.duration;
        let mut changes: Vec<(Micros, Change)> = Vec::new();
        for e in &trace.events {
            let change = match e.kind {
                EventKind::WakeupDetected { node } | EventKind::PoweredUp { node } => (node, PowerMode::Normal),
                EventKind::Sleep { node } => (node, PowerMode::Sleep),
                EventKind::PoweredDown { node } => (node, PowerMode::Off),
                EventKind::BusOff { node } => (node, PowerMode::BusOff),
                EventKind::Recovery { node, to } | EventKind::Reset { node, to } => (node, to),
                _ => continue,
            };
            changes.push((e.time, Change::Mode(change.0, change.1)));
        }
        for l in loads.iter().filter(|l| l.start < span && l.start < l.end) {
            changes.push((l.start, Change::Load(l.host, l.current)));
            if l.end < span {
                changes.push((l.end, Change::Load(l.host, -l.current)));
            }
        }
        // stable sort keeps causal order among simultaneous events
        changes.sort_by_key(|c| c.0);

        let mut modes = trace.initial_modes.clone();
        let mut host_loads = vec![0.0f64; roster.len()];
        let total = |modes: &[PowerMode], host_loads: &[f64]| -> f64 {
            quiescent
                + roster
                    .iter()
                    .zip(modes)
                    .zip(host_loads)
                    .map(|((cfg, &mode), &load)| mode_current(mode, cfg, load.max(0.0)))
                    .sum::<f64>()
        };
        let mut steps = vec![(Micros::ZERO, 0.0)];
        let mut i = 0;
        while i < changes.len() {
            let t = changes[i].0;
            if t > Micros::ZERO {
                let current = total(&modes, &host_loads);
                steps.last_mut().expect("non-empty").1 = current;
                steps.push((t, 0.0));
            }
            while i < changes.len() && changes[i].0 == t {
                match changes[i].1 {
                    Change::Mode(node, mode) => modes[node] = mode,
                    Change::Load(host, delta) => host_loads[host] += delta,
                }
                i += 1;
            }
        }
        steps.last_mut().expect("non-empty").1 = total(&modes, &host_loads);
        steps.dedup_by(|b, a| a.1 == b.1);
        Self::from_steps(steps, span)
    }

    pub fn span(&self) -> Micros {
        self.span
    }

    pub fn steps(&self) -> &[(Micros, f64)] {
        &self.steps
    }

    /// Charge in ampere-seconds drawn over `[0, t)`.
    pub fn charge_until(&self, t: Micros) -> f64 {
        let periods = t.0 / self.span.0;
        let rem = Micros(t.0 % self.span.0);
        let per_span = self.charge_before.last().copied().unwrap_or(0.0) + self.tail_charge(self.steps.len() - 1, self.span);
        let idx = self.steps.partition_point(|s| s.0 <= rem) - 1;
        periods as f64 * per_span + self.charge_before[idx] + self.tail_charge(idx, rem)
    }

    fn tail_charge(&self, idx: usize, until: Micros) -> f64 {
        let (start, amps) = self.steps[idx];
        amps * (until - start).as_secs_f64()
    }

    pub fn mean_current(&self) -> f64 {
        self.charge_until(self.span) / self.span.as_secs_f64()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrainOptions {
    pub dt: Micros,
    /// Integration stops here if the battery has not reached the limit.
    pub horizon: Micros,
    pub sample_every: Micros,
}

impl Default for DrainOptions {
    fn default() -> Self {
        DrainOptions {
            dt: Micros::from_secs(1),
            horizon: Micros::from_secs(60 * 86_400),
            sample_every: Micros::from_secs(3_600),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrainReport {
    pub label: String,
    pub battery: BatteryConfig,
    pub mean_current_a: f64,
    pub baseline_current_a: f64,
    pub amplification: f64,
    pub operation_time_ideal_h: f64,
    pub operation_time_peukert_h: f64,
    pub parasitic_exceeded: bool,
    /// `(hours, state of charge)` samples.
    pub soc_timeline: Vec<(f64, f64)>,
    /// Hours until the state of charge fell to the cold-start limit.
    pub immobilized_at_h: Option<f64>,
}

/// Steps the state of charge through `profile` at `opts.dt`.
pub fn integrate_drain(
    label: &str,
    profile: &CurrentProfile,
    baseline_current: f64,
    cfg: &BatteryConfig,
    opts: &DrainOptions,
) -> Result<DrainReport, PowerError> {
    cfg.validate()?;
    if opts.dt == Micros::ZERO {
        return Err(PowerError::ZeroStep);
    }
    let mean = profile.mean_current();
    let capacity_as = cfg.effective_capacity_ah() * 3600.0;
    let sample_every = opts.sample_every.max(opts.dt);

    let mut timeline = vec![(0.0, cfg.soc_start)];
    let mut immobilized = None;
    let mut next_sample = sample_every;
    let mut t = Micros::ZERO;
    if mean > 0.0 {
        while t < opts.horizon {
            t += opts.dt;
            let soc = cfg.soc_start - profile.charge_until(t) / capacity_as;
            if t >= next_sample {
                timeline.push((t.as_hours_f64(), soc));
                next_sample += sample_every;
            }
            if soc <= cfg.soc_min_start {
                immobilized = Some(t.as_hours_f64());
                if timeline.last().is_none_or(|s| s.0 != t.as_hours_f64()) {
                    timeline.push((t.as_hours_f64(), soc));
                }
                break;
            }
        }
    } else {
        timeline.push((opts.horizon.as_hours_f64(), cfg.soc_start));
    }

    let (ideal, peukert) = if mean > 0.0 {
        (operation_time_ideal(cfg, mean)?, operation_time_peukert(cfg, mean)?)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok(DrainReport {
        label: label.to_string(),
        battery: *cfg,
        mean_current_a: mean,
        baseline_current_a: baseline_current,
        amplification: amplification(mean, baseline_current)?,
        operation_time_ideal_h: ideal,
        operation_time_peukert_h: peukert,
        parasitic_exceeded: mean > cfg.parasitic_threshold_a,
        soc_timeline: timeline,
        immobilized_at_h: immobilized,
    })
}

/// Convenience wrapper: profile a bus trace and integrate it.
pub fn integrate_trace(
    trace: &BusTrace,
    roster: &[EcuConfig],
    quiescent: f64,
    loads: &[LoadInterval],
    baseline_current: f64,
    cfg: &BatteryConfig,
    opts: &DrainOptions,
) -> Result<DrainReport, PowerError> {
    let profile = CurrentProfile::from_trace(trace, roster, quiescent, loads);
    integrate_drain("", &profile, baseline_current, cfg, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MA: f64 = 1e-3;

    #[test]
    fn ideal_time_matches_parked_vehicle_arithmetic() {
        let cfg = BatteryConfig::default();
        let h = operation_time_ideal(&cfg, 12.2 * MA).unwrap();
        assert!((h - 737.7).abs() < 0.1, "{h}");
        assert!((h / 24.0 - 30.7).abs() < 0.05);
        let trunk = operation_time_ideal(&cfg, 153.3 * MA).unwrap() / 24.0;
        assert!((trunk - 2.44).abs() / 2.44 < 0.005, "{trunk}");
        assert!((operation_time_ideal(&cfg, 9.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_currents_rejected() {
        let cfg = BatteryConfig::default();
        assert_eq!(operation_time_ideal(&cfg, 0.0), Err(PowerError::NonPositiveCurrent(0.0)));
        assert!(operation_time_peukert(&cfg, -1.0).is_err());
        assert!(amplification(1.0, 0.0).is_err());
    }

    #[test]
    fn amplification_factors() {
        assert!((amplification(42.0, 12.2).unwrap() - 3.44).abs() < 0.01);
        assert!((amplification(153.3, 12.2).unwrap() - 12.57).abs() < 0.01);
        assert_eq!(amplification(7.5, 7.5).unwrap(), 1.0);
    }

    #[test]
    fn peukert_degenerates_to_ideal_at_k1() {
        let cfg = BatteryConfig::default();
        let ideal = operation_time_ideal(&cfg, 12.2 * MA).unwrap();
        let p = operation_time_peukert(&cfg, 12.2 * MA).unwrap();
        assert!((p - ideal).abs() < 1e-9);
    }

    #[test]
    fn peukert_regression_constants() {
        // 40-digit evaluations of H * (C / (I * H))^k
        let cfg = BatteryConfig {
            peukert_exponent: 1.2,
            ..Default::default()
        };
        let p = operation_time_peukert(&cfg, 12.2 * MA).unwrap();
        assert!((p - 1_517.935_141_539_435_8).abs() < 1e-6, "{p}");
        let p = operation_time_peukert(&cfg, 153.3 * MA).unwrap();
        assert!((p - 72.817_275_641_445_98).abs() < 1e-9, "{p}");
        // a C100-rated battery: 153.3 mA exceeds its rated current
        let c100 = BatteryConfig {
            rated_discharge_hours: 100.0,
            ..cfg
        };
        let p = operation_time_peukert(&c100, 153.3 * MA).unwrap();
        assert!((p - 52.776_480_549_333_27).abs() < 1e-9, "{p}");
        assert!(p < 2.44 * 24.0);
    }

    #[test]
    fn battery_validation() {
        let ok = BatteryConfig::default();
        assert!(ok.validate().is_ok());
        assert!(BatteryConfig { soc_min_start: 0.8, ..ok }.validate().is_err());
        assert!(BatteryConfig { capacity_ah: 0.0, ..ok }.validate().is_err());
        assert!(BatteryConfig { peukert_exponent: 0.9, ..ok }.validate().is_err());
    }

    #[test]
    fn constant_profile_immobilizes_within_one_step() {
        let cfg = BatteryConfig::default();
        let profile = CurrentProfile::constant(12.2 * MA, Micros::from_secs(600));
        let report = integrate_drain("none", &profile, 12.2 * MA, &cfg, &DrainOptions::default()).unwrap();
        let ideal = operation_time_ideal(&cfg, 12.2 * MA).unwrap();
        let at = report.immobilized_at_h.unwrap();
        assert!(at >= ideal && at - ideal <= 1.0 / 3600.0 + 1e-9, "{at} vs {ideal}");
        assert!(!report.parasitic_exceeded);
        assert!(report.soc_timeline.windows(2).all(|w| w[1].1 <= w[0].1));
    }

    #[test]
    fn zero_drain_never_immobilizes() {
        let cfg = BatteryConfig::default();
        let profile = CurrentProfile::constant(0.0, Micros::from_secs(10));
        let report = integrate_drain("off", &profile, 12.2 * MA, &cfg, &DrainOptions::default()).unwrap();
        assert_eq!(report.immobilized_at_h, None);
        assert!(report.soc_timeline.iter().all(|s| s.1 == cfg.soc_start));
    }

    #[test]
    fn periodic_charge_accumulates() {
        let profile = CurrentProfile::from_steps(vec![(Micros::ZERO, 1.0), (Micros::from_secs(1), 0.0)], Micros::from_secs(4));
        assert_eq!(profile.charge_until(Micros::from_secs(4)), 1.0);
        assert_eq!(profile.charge_until(Micros::from_millis(4500)), 1.5);
        assert_eq!(profile.charge_until(Micros::from_secs(9)), 3.0);
        assert_eq!(profile.mean_current(), 0.25);
    }
}
