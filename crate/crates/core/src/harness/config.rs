//! Vehicle config files.
//!
//! TOML with unit-suffixed strings for every physical quantity:
//!
//! ```toml
//! name = "demo"
//! bitrate = "500 kbit/s"
//! quiescent_current = "11.88 mA"
//!
//! [[ecu]]
//! name = "BCM"
//! terminal = "30"
//! sleep_current = "80 uA"
//! normal_current = "11.08 mA"
//!
//! [[ecu.message]]
//! id = 0x0A0
//! period = "100 ms"
//! data = "00 10 00 00"
//! ```
//!
//! Control bytes are numbered from 1, as in reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use crate::attack::{Activation, FunctionLoad, FunctionLoadTable, Lighting};
use crate::ecu::{ControlBinding, EcuConfig, EcuConfigError, Function, MessageSchedule, RecoveryPolicy, Terminal};
use crate::harness::vehicle::{VehicleConfig, VehicleError};
use crate::power::BatteryConfig;
use crate::units::{format_duration, parse_bitrate, parse_charge, parse_current, parse_duration, parse_fine_duration_us, Micros};
use crate::wakeup::WakeupFilterParams;

/// File name of the bundled reference vehicle.
pub const REFERENCE_NAME: &str = "reference_2017.cfg";
pub const REFERENCE_CFG: &str = include_str!("../../vehicles/reference_2017.cfg");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("line {line}: {message}")]
    At { line: usize, message: String },
}

impl ConfigError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::At { line, .. } => Some(*line),
            ConfigError::Io { .. } => None,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVehicle {
    name: String,
    bitrate: Spanned<String>,
    quiescent_current: Option<Spanned<String>>,
    battery: Option<Spanned<RawBattery>>,
    wakeup: Option<Spanned<RawWakeup>>,
    lighting: Option<Spanned<RawLighting>>,
    #[serde(default)]
    loads: BTreeMap<String, Spanned<RawLoad>>,
    #[serde(default)]
    ecu: Vec<Spanned<RawEcu>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBattery {
    capacity: Spanned<String>,
    soc_start: Option<f64>,
    soc_min_start: Option<f64>,
    parasitic_threshold: Option<Spanned<String>>,
    peukert_exponent: Option<f64>,
    rated_discharge: Option<Spanned<String>>,
    derating: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWakeup {
    t_filter_min: Spanned<String>,
    t_filter_max: Spanned<String>,
    gray_zone_threshold: Option<Spanned<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLighting {
    mode: String,
    door_multiplier: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    current: Spanned<String>,
    activation: String,
    hold: Option<Spanned<String>>,
    auto_off: Option<Spanned<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEcu {
    name: String,
    terminal: Spanned<String>,
    t_wakeup: Option<Spanned<String>>,
    sleep_current: Spanned<String>,
    normal_current: Spanned<String>,
    recovery: Option<Spanned<String>>,
    #[serde(default)]
    standby: Vec<Spanned<String>>,
    wakeup: Option<Spanned<RawWakeup>>,
    #[serde(default)]
    message: Vec<Spanned<RawMessage>>,
    #[serde(default)]
    control: Vec<Spanned<RawControl>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMessage {
    id: u16,
    period: Spanned<String>,
    offset: Option<Spanned<String>>,
    data: Spanned<String>,
    free_running: Option<Spanned<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControl {
    function: Spanned<String>,
    id: u16,
    byte: Spanned<u8>,
    mask: u8,
    values: Vec<u8>,
}

struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn of(&self, offset: usize) -> usize {
        self.0.as_bytes()[..offset.min(self.0.len())].iter().filter(|&&b| b == b'\n').count() + 1
    }

    fn err<T>(&self, s: &Spanned<T>, message: impl Into<String>) -> ConfigError {
        ConfigError::At {
            line: self.of(s.span().start),
            message: message.into(),
        }
    }

    fn unit<T>(&self, s: &Spanned<String>, f: impl Fn(&str) -> Result<T, crate::units::UnitError>) -> Result<T, ConfigError> {
        f(s.get_ref()).map_err(|e| self.err(s, e.to_string()))
    }
}

fn parse_hex_bytes(s: &str) -> Option<Vec<u8>> {
    s.split_whitespace().map(|b| if b.len() == 2 { u8::from_str_radix(b, 16).ok() } else { None }).collect()
}

fn parse_wakeup(l: &Lines, raw: &Spanned<RawWakeup>) -> Result<WakeupFilterParams, ConfigError> {
    let w = raw.get_ref();
    let min = l.unit(&w.t_filter_min, parse_fine_duration_us)?;
    let max = l.unit(&w.t_filter_max, parse_fine_duration_us)?;
    let thr = match &w.gray_zone_threshold {
        Some(t) => l.unit(t, parse_fine_duration_us)?,
        None => max,
    };
    WakeupFilterParams::new(min, max, thr).map_err(|e| l.err(raw, e.to_string()))
}

/// Parses and validates a vehicle config.
pub fn parse_vehicle(text: &str) -> Result<VehicleConfig, ConfigError> {
    let l = Lines(text);
    let raw: RawVehicle = toml::from_str(text).map_err(|e| ConfigError::At {
        line: e.span().map_or(1, |s| l.of(s.start)),
        message: e.message().trim().to_string(),
    })?;

    let bitrate = l.unit(&raw.bitrate, parse_bitrate)?;
    let quiescent_current = match &raw.quiescent_current {
        Some(q) => l.unit(q, parse_current)?,
        None => 0.0,
    };
    let wakeup = match &raw.wakeup {
        Some(w) => parse_wakeup(&l, w)?,
        None => WakeupFilterParams::default(),
    };

    let mut battery = BatteryConfig::default();
    if let Some(b) = &raw.battery {
        let r = b.get_ref();
        battery.capacity_ah = l.unit(&r.capacity, parse_charge)?;
        battery.soc_start = r.soc_start.unwrap_or(battery.soc_start);
        battery.soc_min_start = r.soc_min_start.unwrap_or(battery.soc_min_start);
        if let Some(p) = &r.parasitic_threshold {
            battery.parasitic_threshold_a = l.unit(p, parse_current)?;
        }
        battery.peukert_exponent = r.peukert_exponent.unwrap_or(battery.peukert_exponent);
        if let Some(h) = &r.rated_discharge {
            battery.rated_discharge_hours = l.unit(h, parse_duration)?.as_hours_f64();
        }
        battery.derating = r.derating.unwrap_or(battery.derating);
    }

    let mut loads = FunctionLoadTable::default();
    for (name, raw_load) in &raw.loads {
        let function: Function = name.parse().map_err(|e: String| l.err(raw_load, e))?;
        let r = raw_load.get_ref();
        let current_a = l.unit(&r.current, parse_current)?;
        let activation = match r.activation.as_str() {
            "while-repeated" => Activation::WhileRepeated {
                hold: match &r.hold {
                    Some(h) => l.unit(h, parse_duration)?,
                    None => return Err(l.err(raw_load, "while-repeated load needs `hold`")),
                },
            },
            "latched" => Activation::Latched {
                auto_off: r.auto_off.as_ref().map(|a| l.unit(a, parse_duration)).transpose()?,
            },
            other => return Err(l.err(raw_load, format!("activation `{other}`; expected while-repeated or latched"))),
        };
        loads.loads.insert(function, FunctionLoad { current_a, activation });
    }
    if let Some(lt) = &raw.lighting {
        let r = lt.get_ref();
        loads.lighting = match (r.mode.as_str(), r.door_multiplier) {
            ("day", None) => Lighting::Day,
            ("night", Some(multiplier)) => Lighting::Night { multiplier },
            ("night", None) => return Err(l.err(lt, "night lighting needs `door_multiplier`")),
            _ => return Err(l.err(lt, "lighting mode must be day or night (multiplier only at night)")),
        };
    }

    let mut ecus = Vec::with_capacity(raw.ecu.len());
    for raw_ecu in &raw.ecu {
        let r = raw_ecu.get_ref();
        let terminal = match r.terminal.get_ref().as_str() {
            "15" => Terminal::T15,
            "30" => Terminal::T30,
            _ => return Err(l.err(&r.terminal, "terminal must be \"15\" or \"30\"")),
        };
        let mut ecu = EcuConfig::new(r.name.clone(), terminal);
        if let Some(t) = &r.t_wakeup {
            ecu.t_wakeup = l.unit(t, parse_duration)?;
        }
        ecu.sleep_current = l.unit(&r.sleep_current, parse_current)?;
        ecu.normal_current = l.unit(&r.normal_current, parse_current)?;
        if let Some(rec) = &r.recovery {
            ecu.recovery = match rec.get_ref().as_str() {
                "auto" => RecoveryPolicy::AutoRecover,
                "never" => RecoveryPolicy::NeverRecover,
                "manual" => RecoveryPolicy::ManualResetOnly,
                _ => return Err(l.err(rec, "recovery must be auto, never or manual")),
            };
        }
        for f in &r.standby {
            ecu.standby_functions.insert(f.get_ref().parse().map_err(|e: String| l.err(f, e))?);
        }
        ecu.wakeup = match &r.wakeup {
            Some(w) => parse_wakeup(&l, w)?,
            None => wakeup,
        };
        for m in &r.message {
            let rm = m.get_ref();
            let baseline = parse_hex_bytes(rm.data.get_ref()).ok_or_else(|| l.err(&rm.data, "data must be space-separated hex bytes"))?;
            let free_running = match &rm.free_running {
                Some(f) => parse_hex_bytes(f.get_ref()).ok_or_else(|| l.err(f, "free_running must be space-separated hex bytes"))?,
                None => vec![0; baseline.len()],
            };
            ecu.schedule.push(MessageSchedule {
                id: rm.id,
                period: l.unit(&rm.period, parse_duration)?,
                offset: rm.offset.as_ref().map(|o| l.unit(o, parse_duration)).transpose()?.unwrap_or(Micros::ZERO),
                baseline,
                free_running,
            });
        }
        for c in &r.control {
            let rc = c.get_ref();
            let byte = *rc.byte.get_ref();
            if byte == 0 {
                return Err(l.err(&rc.byte, "control bytes are numbered from 1"));
            }
            ecu.controls.push(ControlBinding {
                function: rc.function.get_ref().parse().map_err(|e: String| l.err(&rc.function, e))?,
                id: rc.id,
                byte: byte - 1,
                mask: rc.mask,
                values: rc.values.clone(),
            });
        }
        ecus.push(ecu);
    }

    let vehicle = VehicleConfig {
        name: raw.name.clone(),
        bitrate,
        quiescent_current,
        ecus,
        loads,
        wakeup,
        battery,
    };
    vehicle.validate().map_err(|e| locate(&l, &raw, e))?;
    Ok(vehicle)
}

/// Attaches a line number to a semantic validation failure.
fn locate(l: &Lines, raw: &RawVehicle, e: VehicleError) -> ConfigError {
    let ecu_named = |name: &str| raw.ecu.iter().rev().find(|r| r.get_ref().name == name);
    let message = e.to_string();
    let line = match &e {
        VehicleError::DuplicateEcu(name) => ecu_named(name).map(|s| s.span().start),
        VehicleError::DuplicateId { id, second, .. } => ecu_named(second)
            .and_then(|s| s.get_ref().message.iter().find(|m| m.get_ref().id == *id))
            .map(|m| m.span().start),
        VehicleError::Ecu(inner) => {
            let name = match inner {
                EcuConfigError::SleepAboveNormal { ecu, .. }
                | EcuConfigError::NegativeCurrent { ecu }
                | EcuConfigError::ZeroWakeup { ecu }
                | EcuConfigError::ZeroPeriod { ecu, .. }
                | EcuConfigError::BadMessage { ecu, .. }
                | EcuConfigError::BadControl { ecu, .. } => ecu,
            };
            let ecu = ecu_named(name);
            let msg_id = match inner {
                EcuConfigError::ZeroPeriod { id, .. } | EcuConfigError::BadMessage { id, .. } => Some(*id),
                _ => None,
            };
            match (ecu, msg_id) {
                (Some(s), Some(id)) => s
                    .get_ref()
                    .message
                    .iter()
                    .find(|m| m.get_ref().id == id)
                    .map_or(Some(s.span().start), |m| Some(m.span().start)),
                (Some(s), None) => Some(s.span().start),
                _ => None,
            }
        }
        VehicleError::ZeroBitrate => Some(raw.bitrate.span().start),
        VehicleError::NegativeQuiescent => raw.quiescent_current.as_ref().map(|q| q.span().start),
        VehicleError::Battery(_) => raw.battery.as_ref().map(|b| b.span().start),
        VehicleError::Loads(_) => raw.loads.values().next().map(|v| v.span().start),
        VehicleError::EmptyRoster => None,
    };
    ConfigError::At {
        line: line.map_or(1, |o| l.of(o)),
        message,
    }
}

/// Loads a vehicle config. The bundled reference vehicle is found by name
/// when no such file exists on disk.
pub fn load_vehicle(path: &Path) -> Result<VehicleConfig, ConfigError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(_) if !path.exists() && path.file_name().is_some_and(|n| n == REFERENCE_NAME) => REFERENCE_CFG.to_string(),
        Err(e) => {
            return Err(ConfigError::Io {
                path: path.display().to_string(),
                reason: e.to_string(),
            })
        }
    };
    parse_vehicle(&text).map_err(|e| match e {
        ConfigError::At { line, message } => ConfigError::At {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn reference_vehicle() -> VehicleConfig {
    parse_vehicle(REFERENCE_CFG).expect("bundled reference config is valid")
}

fn hex_bytes(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02X}")).collect::<Vec<_>>().join(" ")
}

fn amps(a: f64) -> String {
    format!("{a} A")
}

fn us(v: f64) -> String {
    format!("{v} us")
}

fn quote(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

/// Renders `v` in the config format; `parse_vehicle` reads it back to an
/// equal value.
pub fn render_vehicle(v: &VehicleConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "name = {}", quote(&v.name));
    let _ = writeln!(s, "bitrate = \"{} bit/s\"", v.bitrate);
    let _ = writeln!(s, "quiescent_current = \"{}\"", amps(v.quiescent_current));
    let b = &v.battery;
    let _ = writeln!(s, "\n[battery]");
    let _ = writeln!(s, "capacity = \"{} Ah\"", b.capacity_ah);
    let _ = writeln!(s, "soc_start = {:?}", b.soc_start);
    let _ = writeln!(s, "soc_min_start = {:?}", b.soc_min_start);
    let _ = writeln!(s, "parasitic_threshold = \"{}\"", amps(b.parasitic_threshold_a));
    let _ = writeln!(s, "peukert_exponent = {:?}", b.peukert_exponent);
    let _ = writeln!(s, "rated_discharge = \"{} h\"", b.rated_discharge_hours);
    let _ = writeln!(s, "derating = {:?}", b.derating);
    let w = &v.wakeup;
    let _ = writeln!(s, "\n[wakeup]");
    let _ = writeln!(s, "t_filter_min = \"{}\"", us(w.t_filter_min_us()));
    let _ = writeln!(s, "t_filter_max = \"{}\"", us(w.t_filter_max_us()));
    let _ = writeln!(s, "gray_zone_threshold = \"{}\"", us(w.gray_zone_threshold_us()));
    let _ = writeln!(s, "\n[lighting]");
    match v.loads.lighting {
        Lighting::Day => {
            let _ = writeln!(s, "mode = \"day\"");
        }
        Lighting::Night { multiplier } => {
            let _ = writeln!(s, "mode = \"night\"\ndoor_multiplier = {multiplier:?}");
        }
    }
    for (f, load) in &v.loads.loads {
        let _ = writeln!(s, "\n[loads.{f}]");
        let _ = writeln!(s, "current = \"{}\"", amps(load.current_a));
        match load.activation {
            Activation::WhileRepeated { hold } => {
                let _ = writeln!(s, "activation = \"while-repeated\"\nhold = \"{}\"", format_duration(hold));
            }
            Activation::Latched { auto_off } => {
                let _ = writeln!(s, "activation = \"latched\"");
                if let Some(t) = auto_off {
                    let _ = writeln!(s, "auto_off = \"{}\"", format_duration(t));
                }
            }
        }
    }
    for e in &v.ecus {
        let _ = writeln!(s, "\n[[ecu]]");
        let _ = writeln!(s, "name = {}", quote(&e.name));
        let term = match e.terminal {
            Terminal::T15 => "15",
            Terminal::T30 => "30",
        };
        let _ = writeln!(s, "terminal = \"{term}\"");
        let _ = writeln!(s, "t_wakeup = \"{}\"", format_duration(e.t_wakeup));
        let _ = writeln!(s, "sleep_current = \"{}\"", amps(e.sleep_current));
        let _ = writeln!(s, "normal_current = \"{}\"", amps(e.normal_current));
        let rec = match e.recovery {
            RecoveryPolicy::AutoRecover => "auto",
            RecoveryPolicy::NeverRecover => "never",
            RecoveryPolicy::ManualResetOnly => "manual",
        };
        let _ = writeln!(s, "recovery = \"{rec}\"");
        let standby: Vec<String> = e.standby_functions.iter().map(|f| format!("\"{f}\"")).collect();
        let _ = writeln!(s, "standby = [{}]", standby.join(", "));
        if e.wakeup != v.wakeup {
            let _ = writeln!(s, "\n[ecu.wakeup]");
            let _ = writeln!(s, "t_filter_min = \"{}\"", us(e.wakeup.t_filter_min_us()));
            let _ = writeln!(s, "t_filter_max = \"{}\"", us(e.wakeup.t_filter_max_us()));
            let _ = writeln!(s, "gray_zone_threshold = \"{}\"", us(e.wakeup.gray_zone_threshold_us()));
        }
        for m in &e.schedule {
            let _ = writeln!(s, "\n[[ecu.message]]");
            let _ = writeln!(s, "id = 0x{:03X}", m.id);
            let _ = writeln!(s, "period = \"{}\"", format_duration(m.period));
            let _ = writeln!(s, "offset = \"{}\"", format_duration(m.offset));
            let _ = writeln!(s, "data = \"{}\"", hex_bytes(&m.baseline));
            let _ = writeln!(s, "free_running = \"{}\"", hex_bytes(&m.free_running));
        }
        for c in &e.controls {
            let _ = writeln!(s, "\n[[ecu.control]]");
            let _ = writeln!(s, "function = \"{}\"", c.function);
            let _ = writeln!(s, "id = 0x{:03X}", c.id);
            let _ = writeln!(s, "byte = {}", c.byte + 1);
            let _ = writeln!(s, "mask = 0x{:02X}", c.mask);
            let values: Vec<String> = c.values.iter().map(|v| format!("0x{v:02X}")).collect();
            let _ = writeln!(s, "values = [{}]", values.join(", "));
        }
    }
    s
}

/// Functions hosted by at least one ECU of `v`.
pub fn hosted_functions(v: &VehicleConfig) -> BTreeSet<Function> {
    v.ecus.iter().flat_map(|e| e.standby_functions.iter().copied()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_loads_and_round_trips() {
        let v = reference_vehicle();
        assert_eq!(v.ecus.len(), 13);
        assert_eq!(v.wakeable().len(), 4);
        let again = parse_vehicle(&render_vehicle(&v)).unwrap();
        assert_eq!(again, v);
    }

    #[test]
    fn reference_baseline_is_twelve_point_two_milliamps() {
        assert!((reference_vehicle().idle_current() - 0.0122).abs() < 1e-12);
    }

    #[test]
    fn empty_roster_rejected() {
        let e = parse_vehicle("name = \"x\"\nbitrate = \"500 kbit/s\"\n").unwrap_err();
        assert!(e.to_string().contains("no ECUs"), "{e}");
    }

    const ONE_ECU: &str = r#"name = "x"
bitrate = "500 kbit/s"

[[ecu]]
name = "A"
terminal = "30"
sleep_current = "SLEEP"
normal_current = "3 mA"

[[ecu.message]]
id = 0x100
period = "100 ms"
data = "00 11"
"#;

    #[test]
    fn sleep_above_normal_points_at_the_ecu() {
        let e = parse_vehicle(&ONE_ECU.replace("SLEEP", "5 mA")).unwrap_err();
        assert_eq!(e.line(), Some(4), "{e}");
        assert!(e.to_string().contains("below normal"));
    }

    #[test]
    fn unit_errors_are_line_precise() {
        let e = parse_vehicle(&ONE_ECU.replace("SLEEP", "80")).unwrap_err();
        assert_eq!(e.line(), Some(7), "{e}");
        let e = parse_vehicle(&ONE_ECU.replace("SLEEP", "-80 uA")).unwrap_err();
        assert_eq!(e.line(), Some(7), "{e}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = format!(
            "{}\n[[ecu]]\nname = \"B\"\nterminal = \"15\"\nsleep_current = \"0 A\"\nnormal_current = \"1 mA\"\n\n[[ecu.message]]\nid = 0x100\nperiod = \"1 s\"\ndata = \"\"\n",
            ONE_ECU.replace("SLEEP", "80 uA")
        );
        let e = parse_vehicle(&text).unwrap_err();
        assert!(e.to_string().contains("0x100"), "{e}");
        assert_eq!(e.line(), Some(21), "{e}");
    }

    #[test]
    fn malformed_schedule_rejected() {
        let e = parse_vehicle(&ONE_ECU.replace("SLEEP", "80 uA").replace("00 11", "0 11")).unwrap_err();
        assert_eq!(e.line(), Some(13), "{e}");
        let e = parse_vehicle(&ONE_ECU.replace("SLEEP", "80 uA").replace("100 ms", "0 ms")).unwrap_err();
        assert!(e.to_string().contains("zero period"), "{e}");
        let e = parse_vehicle(&ONE_ECU.replace("SLEEP", "80 uA").replace("period", "perod")).unwrap_err();
        assert!(e.line().is_some(), "{e}");
    }
}
