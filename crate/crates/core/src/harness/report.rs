//! Drain tables: attack rows with current, amplification and operation time.

use std::fmt::Write as _;

use crate::power::{amplification, operation_time_ideal, operation_time_peukert, DrainReport, PowerError};

/// Re-derives amplification and operation times from the report's currents
/// and battery, so a table built from saved reports cannot drift from the
/// battery model.
pub fn recompute(r: &DrainReport) -> Result<DrainReport, PowerError> {
    let mut out = r.clone();
    out.amplification = amplification(r.mean_current_a, r.baseline_current_a)?;
    out.operation_time_ideal_h = operation_time_ideal(&r.battery, r.mean_current_a)?;
    out.operation_time_peukert_h = operation_time_peukert(&r.battery, r.mean_current_a)?;
    out.parasitic_exceeded = r.mean_current_a > r.battery.parasitic_threshold_a;
    Ok(out)
}

fn immobilized(r: &DrainReport) -> String {
    r.immobilized_at_h.map_or_else(|| "-".to_string(), |h| format!("{h:.1} h"))
}

/// Aligned text table, one row per report.
pub fn render_table(rows: &[DrainReport]) -> String {
    let header = ["Attack", "Current", "Amplification", "Operation time", "Peukert", "Below cold-start"];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.label.clone(),
                format!("{:.1} mA", r.mean_current_a * 1e3),
                format!("{:.2}x", r.amplification),
                format!("{:.2} days", r.operation_time_ideal_h / 24.0),
                format!("{:.2} days", r.operation_time_peukert_h / 24.0),
                immobilized(r),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut s = String::new();
    let line = |s: &mut String, row: &[String]| {
        let mut l = String::new();
        for (i, (c, w)) in row.iter().zip(width).enumerate() {
            if i == 0 {
                let _ = write!(l, "{c:<w$}");
            } else {
                let _ = write!(l, "  {c:>w$}");
            }
        }
        let _ = writeln!(s, "{}", l.trim_end());
    };
    line(&mut s, &header.map(String::from));
    let rule: Vec<String> = width.iter().map(|&w| "-".repeat(w)).collect();
    line(&mut s, &rule);
    for row in &cells {
        line(&mut s, row);
    }
    s
}

pub fn render_csv(rows: &[DrainReport]) -> String {
    let mut s = String::from("attack,current_ma,amplification,operation_time_h,operation_time_days,peukert_h,parasitic_exceeded,immobilized_h\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.4},{:.4},{:.4},{:.4},{:.4},{},{}",
            csv_field(&r.label),
            r.mean_current_a * 1e3,
            r.amplification,
            r.operation_time_ideal_h,
            r.operation_time_ideal_h / 24.0,
            r.operation_time_peukert_h,
            r.parasitic_exceeded,
            r.immobilized_at_h.map_or(String::new(), |h| format!("{h:.4}"))
        );
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power::BatteryConfig;

    fn row(label: &str, ma: f64) -> DrainReport {
        recompute(&DrainReport {
            label: label.into(),
            battery: BatteryConfig::default(),
            mean_current_a: ma * 1e-3,
            baseline_current_a: 12.2e-3,
            amplification: 0.0,
            operation_time_ideal_h: 0.0,
            operation_time_peukert_h: 0.0,
            parasitic_exceeded: false,
            soc_timeline: vec![],
            immobilized_at_h: None,
        })
        .unwrap()
    }

    #[test]
    fn table_rows_are_aligned() {
        let t = render_table(&[row("None", 12.2), row("+ Open Trunk", 153.3)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[3].contains("153.3 mA") && lines[3].contains("12.57x") && lines[3].contains("2.45 days"), "{t}");
        assert!(lines[2].contains("30.74 days"), "{t}");
    }

    #[test]
    fn recompute_matches_power_model() {
        let r = row("x", 42.0);
        assert!((r.amplification - 42.0 / 12.2).abs() < 1e-12);
        assert_eq!(r.operation_time_ideal_h, operation_time_ideal(&BatteryConfig::default(), 42.0e-3).unwrap());
        assert!(r.parasitic_exceeded);
    }

    #[test]
    fn csv_quotes_commas() {
        let c = render_csv(&[row("a,b", 12.2)]);
        assert!(c.lines().nth(1).unwrap().starts_with("\"a,b\",12.2000,1.0000,"));
    }
}
