//! Seeded synthetic vehicles and driver sessions with known ground truth.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::attack::FunctionLoadTable;
use crate::bus::{self, Action, BusError, EventKind, Injection, RunOptions};
use crate::ecu::{EcuConfig, Function, MessageSchedule, PayloadOverride, Terminal};
use crate::frame::CanFrame;
use crate::harness::config::reference_vehicle;
use crate::harness::vehicle::VehicleConfig;
use crate::power::BatteryConfig;
use crate::recon::{awakened_ratio, Trace};
use crate::units::Micros;
use crate::wakeup::WakeupFilterParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Era {
    /// Few or no standby functions: at most one ECU listens for wake-ups.
    Old,
    Modern,
}

impl std::str::FromStr for Era {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "old" => Ok(Era::Old),
            "modern" => Ok(Era::Modern),
            _ => Err(format!("unknown era `{s}`; expected old or modern")),
        }
    }
}

/// Share of a modern vehicle's identifiers sent by wakeable ECUs is drawn
/// from this range, then rounded to whole identifiers.
pub const MODERN_RATIO_RANGE: (f64, f64) = (0.55, 0.92);

const T30_PERIODS_MS: [u64; 5] = [50, 100, 200, 500, 1000];
const T15_PERIODS_MS: [u64; 7] = [10, 20, 50, 100, 200, 500, 1000];

fn message(rng: &mut ChaCha8Rng, id: u16, periods: &[u64]) -> MessageSchedule {
    let period = Micros::from_millis(*periods.choose(rng).expect("nonempty"));
    let offset = Micros::from_millis(rng.gen_range(0..period.0.min(50_000) / 1000));
    let dlc = rng.gen_range(1..=8usize);
    let baseline: Vec<u8> = (0..dlc).map(|_| rng.gen()).collect();
    let mut free_running = vec![0u8; dlc];
    match rng.gen_range(0..10) {
        0..=2 => free_running[dlc - 1] = 0xFF,
        3..=4 => free_running[dlc - 1] = 0x0F,
        5 if dlc >= 2 => {
            free_running[dlc - 2] = 0xFF;
            free_running[dlc - 1] = 0xFF;
        }
        _ => {}
    }
    MessageSchedule {
        id,
        period,
        offset,
        baseline,
        free_running,
    }
}

/// Splits `ids` over `n` ECUs, each getting at least one.
fn deal(rng: &mut ChaCha8Rng, ids: &[u16], n: usize) -> Vec<Vec<u16>> {
    let mut out: Vec<Vec<u16>> = ids[..n].iter().map(|&id| vec![id]).collect();
    for &id in &ids[n..] {
        out[rng.gen_range(0..n)].push(id);
    }
    out
}

fn ecu(rng: &mut ChaCha8Rng, name: String, terminal: Terminal, ids: &[u16]) -> EcuConfig {
    let mut e = EcuConfig::new(name, terminal);
    let periods: &[u64] = match terminal {
        Terminal::T30 => &T30_PERIODS_MS,
        Terminal::T15 => &T15_PERIODS_MS,
    };
    e.sleep_current = match terminal {
        Terminal::T30 => rng.gen_range(50..=120) as f64 * 1e-6,
        Terminal::T15 => 0.0,
    };
    e.normal_current = rng.gen_range(3..=40) as f64 * 1e-3;
    e.schedule = ids.iter().map(|&id| message(rng, id, periods)).collect();
    e
}

fn vehicle(seed: u64, index: usize, era: Era) -> VehicleConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let n_on: usize = rng.gen_range(20..=60);
    let (n_t30, n_off) = match era {
        Era::Modern => {
            let r = rng.gen_range(MODERN_RATIO_RANGE.0..=MODERN_RATIO_RANGE.1);
            let n_off = ((r * n_on as f64).round() as usize).clamp(2, n_on - 1);
            (rng.gen_range(2..=5usize).min(n_off), n_off)
        }
        Era::Old => match rng.gen_range(0..2) {
            0 => (0, 0),
            _ => (1, rng.gen_range(1..=3)),
        },
    };
    let n_t15 = rng.gen_range(3..=10usize).min(n_on - n_off);

    let mut pool: Vec<u16> = (0x010..0x7F0).collect();
    pool.shuffle(&mut rng);
    let mut ids: Vec<u16> = pool[..n_on].to_vec();
    let (off_ids, on_ids) = ids.split_at_mut(n_off);
    off_ids.sort_unstable();
    on_ids.sort_unstable();

    let mut ecus = Vec::new();
    if n_t30 > 0 {
        for (i, group) in deal(&mut rng, off_ids, n_t30).iter().enumerate() {
            ecus.push(ecu(&mut rng, format!("W{:02}", i + 1), Terminal::T30, group));
        }
        ecus[0].standby_functions = [Function::Pkes, Function::Rke].into();
    }
    for (i, group) in deal(&mut rng, on_ids, n_t15).iter().enumerate() {
        ecus.push(ecu(&mut rng, format!("S{:02}", i + 1), Terminal::T15, group));
    }
    let era_name = match era {
        Era::Old => "old",
        Era::Modern => "modern",
    };
    VehicleConfig {
        name: format!("{era_name}-{seed}-{index:03}"),
        bitrate: 500_000,
        quiescent_current: rng.gen_range(5..=15) as f64 * 1e-3,
        ecus,
        loads: FunctionLoadTable::default(),
        wakeup: WakeupFilterParams::default(),
        battery: BatteryConfig::default(),
    }
}

/// `count` vehicles, identical for identical `(seed, count, era)`.
pub fn generate_fleet(seed: u64, count: usize, era: Era) -> Vec<VehicleConfig> {
    (0..count).map(|i| vehicle(seed, i, era)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AwakenedMeasurement {
    /// ECUs that woke from the single injected wake-up frame.
    pub awakened_ecus: usize,
    pub s_off: BTreeSet<u16>,
    pub s_on: BTreeSet<u16>,
    pub ratio_percent: f64,
}

/// Wakes the parked vehicle with one frame, records which identifiers
/// appear, then switches the ignition on and records again.
pub fn measure_awakened(v: &VehicleConfig) -> Result<AwakenedMeasurement, BusError> {
    let ignition = Micros::from_secs(3);
    let window = Micros::from_secs(1);
    let cfg = v.bus_config()?;
    let injections = [
        Injection::frame(Micros::ZERO, CanFrame::all_recessive()),
        Injection {
            time: ignition,
            action: Action::Ignition(true),
        },
    ];
    let trace = bus::run_with(&cfg, None, &injections, ignition + window + Micros(window.0 / 2), RunOptions::default())?;
    let awakened_ecus = trace
        .events
        .iter()
        .filter(|e| e.time < ignition)
        .filter_map(|e| match e.kind {
            EventKind::WakeupDetected { node } => Some(node),
            _ => None,
        })
        .collect::<BTreeSet<_>>()
        .len();
    let ecu_ids = |r: std::ops::Range<Micros>| -> BTreeSet<u16> {
        trace
            .frames(r)
            .filter(|(_, s, _)| *s != bus::Source::Attacker)
            .map(|(_, _, f)| f.id())
            .collect()
    };
    let s_off = ecu_ids(Micros::ZERO..window);
    let s_on = ecu_ids(ignition..ignition + window);
    let ratio_percent = awakened_ratio(&s_off, &s_on).unwrap_or(0.0);
    Ok(AwakenedMeasurement {
        awakened_ecus,
        s_off,
        s_on,
        ratio_percent,
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("vehicle has no wakeable ECU to log while parked")]
    NothingAwake,
    #[error("vehicle has too few constant payload bytes to plant {0} events")]
    TooFewSlots(usize),
    #[error(transparent)]
    Bus(#[from] BusError),
}

/// A driver action planted in a synthetic session: bits `mask` of byte
/// `byte` (from 0) of `id` flip from `baseline` to `value` at `start` for
/// `hold`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PlantedEvent {
    pub function: Function,
    pub node: usize,
    pub id: u16,
    pub byte: usize,
    pub mask: u8,
    pub baseline: u8,
    pub value: u8,
    pub start: Micros,
    pub hold: Micros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSession {
    pub vehicle: String,
    pub ignition: Micros,
    pub end: Micros,
    pub events: Vec<PlantedEvent>,
    pub trace: Trace,
}

impl SynthSession {
    pub fn render_ground_truth(&self) -> String {
        let mut s = format!("# vehicle {}\n# ignition {}\nfunction,id,byte,mask,baseline,value,start_s,hold_s\n", self.vehicle, self.ignition);
        for e in &self.events {
            let _ = writeln!(
                s,
                "{},0x{:03X},{},0x{:02X},0x{:02X},0x{:02X},{},{}",
                e.function,
                e.id,
                e.byte + 1,
                e.mask,
                e.baseline,
                e.value,
                e.start,
                e.hold
            );
        }
        s
    }
}

/// Simulates a parked vehicle kept awake by a driver approaching it, with
/// `events` planted before the ignition comes on at `ignition`. The log
/// holds ECU traffic only.
pub fn run_session(v: &VehicleConfig, ignition: Micros, end: Micros, events: &[PlantedEvent]) -> Result<SynthSession, SynthError> {
    let keep_alive = v
        .wakeable()
        .iter()
        .map(|&i| v.ecus[i].t_wakeup)
        .min()
        .ok_or(SynthError::NothingAwake)?;
    let mut injections = Vec::new();
    let mut t = Micros::ZERO;
    while t < ignition {
        injections.push(Injection::frame(t, CanFrame::all_recessive()));
        t += keep_alive;
    }
    injections.push(Injection {
        time: ignition,
        action: Action::Ignition(true),
    });
    for e in events {
        injections.push(Injection {
            time: e.start,
            action: Action::DriverAction {
                node: e.node,
                ov: PayloadOverride {
                    id: e.id,
                    byte: e.byte as u8,
                    mask: e.mask,
                    value: e.value,
                },
                hold: e.hold,
            },
        });
    }
    injections.sort_by_key(|i| i.time);
    let trace = bus::run_with(&v.bus_config()?, None, &injections, end, RunOptions::default())?;
    Ok(SynthSession {
        vehicle: v.name.clone(),
        ignition,
        end,
        events: events.to_vec(),
        trace: Trace::from_bus(&trace, false),
    })
}

/// A session with three planted events: an unlock and a trunk opening that
/// revert, and a power-mode change that persists into the ignition.
pub fn random_session(v: &VehicleConfig, seed: u64) -> Result<SynthSession, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slots: Vec<(usize, u16, usize, u8)> = Vec::new();
    for i in v.wakeable() {
        for m in &v.ecus[i].schedule {
            for (byte, (&base, &free)) in m.baseline.iter().zip(&m.free_running).enumerate() {
                if free == 0 {
                    slots.push((i, m.id, byte, base));
                }
            }
        }
    }
    if slots.len() < 3 {
        return Err(SynthError::TooFewSlots(3));
    }
    slots.shuffle(&mut rng);
    let ignition = Micros::from_millis(rng.gen_range(30_000..40_000));
    let end = ignition + Micros::from_secs(10);
    let ms = |rng: &mut ChaCha8Rng, lo: u64, hi: u64| Micros::from_millis(rng.gen_range(lo..hi));
    let plan = [
        (Function::DoorControl, ms(&mut rng, 7_000, 9_000), Some(ms(&mut rng, 1_500, 2_500))),
        (Function::TrunkControl, ms(&mut rng, 4_000, 6_000), Some(ms(&mut rng, 1_500, 2_500))),
        (Function::PowerMode, ms(&mut rng, 1_000, 2_500), None),
    ];
    let mut events = Vec::new();
    for ((function, before, hold), &(node, id, byte, baseline)) in plan.into_iter().zip(&slots) {
        let mut mask = 0u8;
        while mask == 0 {
            for _ in 0..rng.gen_range(1..=3) {
                mask |= 1 << rng.gen_range(0..8);
            }
        }
        let start = ignition - before;
        events.push(PlantedEvent {
            function,
            node,
            id,
            byte,
            mask,
            baseline,
            value: baseline ^ mask,
            start,
            hold: hold.unwrap_or(end - start),
        });
    }
    run_session(v, ignition, end, &events)
}

/// The bundled reference vehicle with the driver unlocking the doors a few
/// seconds before starting the engine.
pub fn reference_unlock_session() -> SynthSession {
    let v = reference_vehicle();
    let rcm = v.ecu_index("RCM").expect("reference vehicle has an RCM");
    let ignition = Micros::from_secs(30);
    let unlock = PlantedEvent {
        function: Function::DoorControl,
        node: rcm,
        id: 0x001,
        byte: 1,
        mask: 0x20,
        baseline: 0x10,
        value: 0x30,
        start: Micros::from_secs(25),
        hold: Micros::from_secs(2),
    };
    run_session(&v, ignition, ignition + Micros::from_secs(10), &[unlock]).expect("reference session runs")
}
