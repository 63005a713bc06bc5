//! Command-line entry points.
//!
//! Exit status: 0 on success, 1 on a usage error, 2 when an input cannot be
//! read or fails validation.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::attack::{self, AttackKind, AttackPlan, ExecuteOptions, FunctionAvailability, Lighting};
use crate::bus::{self, Action, Injection, RunOptions};
use crate::ecu::EcuState;
use crate::frame::CanFrame;
use crate::harness::config::{load_vehicle, render_vehicle};
use crate::harness::fleet::{self, Era};
use crate::harness::report::{recompute, render_csv, render_table};
use crate::harness::tracefile;
use crate::harness::vehicle::VehicleConfig;
use crate::power::{DrainOptions, DrainReport};
use crate::recon::{self, ReconOutcome, ReconParams, Trace};
use crate::units::{parse_duration, Micros};

#[derive(Parser, Debug)]
#[command(name = "canwake", version, about = "Parked-vehicle CAN simulator: wake-up, battery-drain and bus-off attacks, trace reverse-engineering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn duration_arg(s: &str) -> Result<Micros, String> {
    parse_duration(s).map_err(|e| e.to_string())
}

fn id_arg(s: &str) -> Result<u16, String> {
    let h = s.trim_start_matches("0x").trim_start_matches("0X");
    match u16::from_str_radix(h, 16) {
        Ok(id) if id <= 0x7FF => Ok(id),
        _ => Err(format!("`{s}` is not an 11-bit hex identifier")),
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a vehicle on its own and write the bus traffic as a candump log.
    Simulate {
        #[arg(long)]
        vehicle: PathBuf,
        #[arg(long, value_parser = duration_arg)]
        duration: Micros,
        /// Send a wake-up frame this often (none by default).
        #[arg(long, value_parser = duration_arg)]
        wake_period: Option<Micros>,
        #[arg(long, value_parser = duration_arg)]
        ignition_at: Option<Micros>,
        /// Log file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an attack plan and report battery drain and lost functions.
    Attack {
        #[arg(long)]
        vehicle: PathBuf,
        /// none, wakeup, power-mode, door-cycle, trunk, full-drain or dob.
        #[arg(long)]
        plan: String,
        /// Attack length; also the drain integration horizon.
        #[arg(long, value_parser = duration_arg)]
        duration: Micros,
        /// Length of bus simulation; the current profile repeats beyond it.
        #[arg(long, value_parser = duration_arg, default_value = "10min")]
        sim_span: Micros,
        #[arg(long, value_parser = duration_arg, default_value = "1s")]
        dt: Micros,
        /// Scale door loads for headlights at night.
        #[arg(long)]
        night_multiplier: Option<f64>,
        /// candump log of the last scenario, first `trace_span` only.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, value_parser = duration_arg, default_value = "60s")]
        trace_span: Micros,
        /// Drain reports as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// ECU states after the attack, for `reset`.
        #[arg(long)]
        state_out: Option<PathBuf>,
    },
    /// Reverse-engineer a session log: ignition boundary, free-running bits,
    /// control-message candidates.
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_parser = duration_arg, default_value = "1s")]
        window: Micros,
        #[arg(long, default_value_t = 1.05)]
        jump_factor: f64,
        #[arg(long, default_value_t = 0.5)]
        change_fraction: f64,
        #[arg(long, value_parser = duration_arg, default_value = "10s")]
        event_window: Micros,
        #[arg(long, value_parser = duration_arg, default_value = "5s")]
        persist_window: Micros,
        /// Identifiers to drop before analysis (hex, comma separated).
        #[arg(long, value_delimiter = ',', value_parser = id_arg)]
        ignore: Vec<u16>,
        /// Further parked-only logs; free-running bits are intersected.
        #[arg(long)]
        extra_off: Vec<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Render saved drain reports as a table.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Disconnect and reconnect the battery of a saved vehicle state.
    Reset {
        #[arg(long)]
        vehicle: PathBuf,
        #[arg(long)]
        state: PathBuf,
        /// Where to write the new state; in place when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate seeded synthetic vehicles and driver sessions.
    Synth {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value = "modern")]
        era: Era,
        #[arg(long)]
        out_dir: PathBuf,
        /// Write the reference vehicle's door-unlock session instead.
        #[arg(long)]
        reference_unlock: bool,
    },
    /// Measure how many identifiers a wake-up frame brings onto the bus.
    Survey {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value = "modern")]
        era: Era,
        /// Survey one config file instead of a generated fleet.
        #[arg(long)]
        vehicle: Option<PathBuf>,
    },
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Res = Result<(), Failure>;

/// Runs the CLI with `argv` (including the program name).
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(Failure(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Res {
    match cmd {
        Command::Simulate {
            vehicle,
            duration,
            wake_period,
            ignition_at,
            out: path,
        } => simulate(&vehicle, duration, wake_period, ignition_at, path.as_deref(), out),
        Command::Attack {
            vehicle,
            plan,
            duration,
            sim_span,
            dt,
            night_multiplier,
            trace,
            trace_span,
            report,
            csv,
            state_out,
        } => {
            let mut v = load_vehicle(&vehicle)?;
            if let Some(m) = night_multiplier {
                v.loads.lighting = Lighting::Night { multiplier: m };
                v.validate()?;
            }
            let plan = AttackPlan::named(&plan, &v)?;
            let files = AttackFiles {
                trace,
                trace_span,
                report,
                csv,
                state_out,
            };
            if plan.leaves().iter().any(|p| matches!(p.kind, AttackKind::DoB { .. })) {
                dob(&v, duration, &files, out)
            } else {
                drain(&v, &plan, duration, sim_span, dt, &files, out)
            }
        }
        Command::Analyze {
            trace,
            window,
            jump_factor,
            change_fraction,
            event_window,
            persist_window,
            ignore,
            extra_off,
            csv,
        } => {
            let params = ReconParams {
                window,
                jump_factor,
                change_fraction,
                event_window,
                persist_window,
            };
            analyze(&trace, &params, &ignore.into_iter().collect(), &extra_off, csv.as_deref(), out)
        }
        Command::Report { reports, csv } => report(&reports, csv.as_deref(), out),
        Command::Reset { vehicle, state, out: path } => reset(&vehicle, &state, path.as_deref(), out),
        Command::Synth {
            seed,
            count,
            era,
            out_dir,
            reference_unlock,
        } => synth(seed, count, era, &out_dir, reference_unlock, out),
        Command::Survey { seed, count, era, vehicle } => survey(seed, count, era, vehicle.as_deref(), out),
    }
}

fn write_file(path: &Path, text: &str) -> Res {
    std::fs::write(path, text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn simulate(vehicle: &Path, duration: Micros, wake_period: Option<Micros>, ignition_at: Option<Micros>, path: Option<&Path>, out: &mut dyn Write) -> Res {
    let v = load_vehicle(vehicle)?;
    let mut injections = Vec::new();
    if let Some(p) = wake_period {
        if p == Micros::ZERO {
            return Err(Failure("wake period must be positive".into()));
        }
        let mut t = Micros::ZERO;
        while t < duration {
            injections.push(Injection::frame(t, CanFrame::all_recessive()));
            t += p;
        }
    }
    if let Some(t) = ignition_at {
        injections.push(Injection {
            time: t,
            action: Action::Ignition(true),
        });
    }
    injections.sort_by_key(|i| i.time);
    let trace = bus::run_with(&v.bus_config()?, None, &injections, duration, RunOptions::default())?;
    let text = tracefile::render(&Trace::from_bus(&trace, true));
    match path {
        Some(p) => write_file(p, &text),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

struct AttackFiles {
    trace: Option<PathBuf>,
    trace_span: Micros,
    report: Option<PathBuf>,
    csv: Option<PathBuf>,
    state_out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct SavedState {
    vehicle: String,
    states: Vec<EcuState>,
}

fn availability_text(a: &FunctionAvailability) -> String {
    let mut s = String::from("Standby functions:\n");
    for f in &a.functions {
        let _ = writeln!(
            s,
            "  {:<14} {:<11} ({})",
            f.function.name(),
            if f.available { "available" } else { "UNAVAILABLE" },
            f.hosts.join(", ")
        );
    }
    s
}

fn save_state(path: &Path, v: &VehicleConfig, states: &[EcuState]) -> Res {
    let saved = SavedState {
        vehicle: v.name.clone(),
        states: states.to_vec(),
    };
    write_file(path, &(serde_json::to_string_pretty(&saved)? + "\n"))
}

fn drain(v: &VehicleConfig, plan: &AttackPlan, duration: Micros, sim_span: Micros, dt: Micros, files: &AttackFiles, out: &mut dyn Write) -> Res {
    let opts = ExecuteOptions {
        drain: DrainOptions {
            dt,
            horizon: duration,
            ..DrainOptions::default()
        },
        record_frames_until: Some(files.trace_span),
    };
    let rows = attack::execute_ladder(plan, v, sim_span.min(duration), &opts)?;
    let reports: Vec<DrainReport> = rows.iter().map(|r| r.report.clone()).collect();
    let last = rows.last().expect("ladder has a baseline row");
    let mut text = format!("Vehicle {}: {} over {}\n\n", v.name, plan.label, crate::units::format_duration(duration));
    text += &render_table(&reports);
    text += "\n";
    text += &availability_text(&last.availability);
    out.write_all(text.as_bytes())?;
    if let Some(p) = &files.trace {
        write_file(p, &tracefile::render(&Trace::from_bus(&last.trace, true)))?;
    }
    if let Some(p) = &files.report {
        write_file(p, &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    }
    if let Some(p) = &files.csv {
        write_file(p, &render_csv(&reports))?;
    }
    if let Some(p) = &files.state_out {
        save_state(p, v, &last.trace.final_states)?;
    }
    Ok(())
}

fn dob(v: &VehicleConfig, duration: Micros, files: &AttackFiles, out: &mut dyn Write) -> Res {
    let o = attack::dob_attack(v, duration)?;
    let mut s = format!("Vehicle {}: DoB attack\n\n", v.name);
    let off = if o.permanently_off.is_empty() {
        "none".to_string()
    } else {
        o.permanently_off.join(", ")
    };
    let _ = writeln!(s, "ECUs left in bus-off:   {off}");
    match o.attack_duration() {
        Some(d) => {
            let _ = writeln!(s, "attack duration:        {d} s (first injection to last bus-off)");
        }
        None => {
            let _ = writeln!(s, "attack duration:        no ECU reached bus-off");
        }
    }
    let _ = writeln!(s, "distinct ECU ids before: {}", o.ids_before);
    let _ = writeln!(s, "distinct ECU ids after:  {}", o.ids_after);
    s += "\n";
    s += &availability_text(&o.availability);
    out.write_all(s.as_bytes())?;
    if let Some(p) = &files.trace {
        let mut t = o.trace.clone();
        t.events.retain(|e| e.time < files.trace_span);
        write_file(p, &tracefile::render(&Trace::from_bus(&t, true)))?;
    }
    if let Some(p) = &files.state_out {
        save_state(p, v, &o.trace.final_states)?;
    }
    Ok(())
}

fn analyze(path: &Path, params: &ReconParams, ignore: &BTreeSet<u16>, extra: &[PathBuf], csv: Option<&Path>, out: &mut dyn Write) -> Res {
    let trace = tracefile::parse(&read_file(path)?).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let extra_off = extra
        .iter()
        .map(|p| tracefile::parse(&read_file(p)?).map_err(|e| Failure(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    match recon::analyze(&trace, params, ignore, &extra_off)? {
        ReconOutcome::Report(r) => {
            out.write_all(r.render_text().as_bytes())?;
            if let Some(p) = csv {
                write_file(p, &r.render_csv())?;
            }
        }
        ReconOutcome::SingleRegime { ids } => {
            writeln!(out, "single-regime trace: no ignition jump among {} identifiers", ids.len())?;
            if let Some(p) = csv {
                write_file(p, "rank,id,byte,mask,baseline,event,first_seen_s,last_seen_s,persists\n")?;
            }
        }
    }
    Ok(())
}

fn report(paths: &[PathBuf], csv: Option<&Path>, out: &mut dyn Write) -> Res {
    let mut rows = Vec::new();
    for p in paths {
        let text = read_file(p)?;
        let parsed: Vec<DrainReport> = match serde_json::from_str::<Vec<DrainReport>>(&text) {
            Ok(v) => v,
            Err(_) => vec![serde_json::from_str::<DrainReport>(&text).map_err(|e| Failure(format!("{}: {e}", p.display())))?],
        };
        for r in parsed {
            rows.push(recompute(&r)?);
        }
    }
    out.write_all(render_table(&rows).as_bytes())?;
    if let Some(p) = csv {
        write_file(p, &render_csv(&rows))?;
    }
    Ok(())
}

fn reset(vehicle: &Path, state: &Path, path: Option<&Path>, out: &mut dyn Write) -> Res {
    let v = load_vehicle(vehicle)?;
    let mut saved: SavedState = serde_json::from_str(&read_file(state)?).map_err(|e| Failure(format!("{}: {e}", state.display())))?;
    if saved.vehicle != v.name || saved.states.len() != v.ecus.len() {
        return Err(Failure(format!(
            "state was saved for `{}` with {} ECUs; vehicle `{}` has {}",
            saved.vehicle,
            saved.states.len(),
            v.name,
            v.ecus.len()
        )));
    }
    let mut s = String::new();
    for (st, cfg) in saved.states.iter_mut().zip(&v.ecus) {
        let before = st.mode;
        st.battery_reset(cfg);
        let _ = writeln!(s, "{:<6} {:?} -> {:?}", cfg.name, before, st.mode);
    }
    s += "\n";
    s += &availability_text(&FunctionAvailability::from_states(&v, &saved.states));
    out.write_all(s.as_bytes())?;
    save_state(path.unwrap_or(state), &v, &saved.states)
}

fn synth(seed: u64, count: usize, era: Era, dir: &Path, reference_unlock: bool, out: &mut dyn Write) -> Res {
    std::fs::create_dir_all(dir).map_err(|e| Failure(format!("{}: {e}", dir.display())))?;
    if reference_unlock {
        let s = fleet::reference_unlock_session();
        write_file(&dir.join("door_unlock.log"), &tracefile::render(&s.trace))?;
        write_file(&dir.join("door_unlock.truth.csv"), &s.render_ground_truth())?;
        writeln!(out, "wrote {}", dir.join("door_unlock.log").display())?;
        return Ok(());
    }
    if count == 0 {
        return Err(Failure("count must be positive".into()));
    }
    for v in fleet::generate_fleet(seed, count, era) {
        let base = dir.join(&v.name);
        write_file(&base.with_extension("cfg"), &render_vehicle(&v))?;
        match fleet::random_session(&v, seed) {
            Ok(s) => {
                write_file(&base.with_extension("log"), &tracefile::render(&s.trace))?;
                write_file(&base.with_extension("truth.csv"), &s.render_ground_truth())?;
                writeln!(out, "{}: config, session log, ground truth", v.name)?;
            }
            Err(e) => writeln!(out, "{}: config only ({e})", v.name)?,
        }
    }
    Ok(())
}

fn survey(seed: u64, count: usize, era: Era, vehicle: Option<&Path>, out: &mut dyn Write) -> Res {
    let vehicles = match vehicle {
        Some(p) => vec![load_vehicle(p)?],
        None => fleet::generate_fleet(seed, count, era),
    };
    let mut s = format!("{:<20} {:>8} {:>6} {:>6} {:>8}\n", "vehicle", "awakened", "S_off", "S_on", "ratio");
    let mut ratios = Vec::new();
    for v in &vehicles {
        let m = fleet::measure_awakened(v)?;
        ratios.push(m.ratio_percent);
        let _ = writeln!(
            s,
            "{:<20} {:>8} {:>6} {:>6} {:>7.2}%",
            v.name,
            m.awakened_ecus,
            m.s_off.len(),
            m.s_on.len(),
            m.ratio_percent
        );
    }
    if !ratios.is_empty() {
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(s, "\nratio min {min:.2}%  mean {mean:.2}%  max {max:.2}%");
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}
