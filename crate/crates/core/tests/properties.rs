use std::collections::BTreeSet;

use canwake::frame::{deserialize_frame, dominant_runs, serialize_frame, CanFrame, Level};
use canwake::harness::fleet::{self, Era};
use canwake::harness::tracefile;
use canwake::power::{amplification, operation_time_ideal, operation_time_peukert, BatteryConfig};
use canwake::recon::{self, ReconOutcome, ReconParams, Trace, TraceRecord};
use canwake::units::Micros;
use proptest::prelude::*;

/// CRC delimiter, ACK slot, ACK delimiter, end of frame.
const TAIL_BITS: usize = 10;

fn frame() -> impl Strategy<Value = CanFrame> {
    (0u16..=0x7FF, prop::collection::vec(any::<u8>(), 0..=8)).prop_map(|(id, d)| CanFrame::new(id, &d).unwrap())
}

fn bitrate() -> impl Strategy<Value = u32> {
    prop::sample::select(vec![33_333u32, 125_000, 250_000, 500_000, 1_000_000])
}

proptest! {
    #[test]
    fn serialization_round_trips(f in frame(), rate in bitrate()) {
        let s = serialize_frame(&f, rate).unwrap();
        prop_assert_eq!(deserialize_frame(&s).unwrap(), f);
    }

    #[test]
    fn stuffed_region_has_no_run_of_six(f in frame()) {
        let s = serialize_frame(&f, 500_000).unwrap();
        let bits = s.bits();
        let stuffed = &bits[..bits.len() - TAIL_BITS];
        let mut run = 1;
        for w in stuffed.windows(2) {
            run = if w[0] == w[1] { run + 1 } else { 1 };
            prop_assert!(run <= 5);
        }
        prop_assert!(dominant_runs(&s).iter().all(|r| r.bits <= 5));
        prop_assert_eq!(bits[0], Level::Dominant);
    }

    #[test]
    fn every_frame_has_a_three_bit_dominant_run(f in frame()) {
        let s = serialize_frame(&f, 500_000).unwrap();
        prop_assert!(dominant_runs(&s).iter().any(|r| r.bits >= 3 && r.duration_us >= 6.0 - 1e-9));
    }

    #[test]
    fn more_current_never_lasts_longer(a in 1e-4f64..1.0, b in 1e-4f64..1.0, k in 1.0f64..1.5) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let cfg = BatteryConfig { peukert_exponent: k, ..BatteryConfig::default() };
        prop_assert!(operation_time_ideal(&cfg, hi).unwrap() <= operation_time_ideal(&cfg, lo).unwrap());
        prop_assert!(operation_time_peukert(&cfg, hi).unwrap() <= operation_time_peukert(&cfg, lo).unwrap());
        prop_assert!(amplification(hi, 0.0122).unwrap() >= amplification(lo, 0.0122).unwrap());
    }

    #[test]
    fn trace_files_round_trip(mut recs in prop::collection::vec((0u64..10_000_000_000, frame()), 0..50)) {
        recs.sort_by_key(|r| r.0);
        let trace = Trace::new(recs.into_iter().map(|(t, frame)| TraceRecord { time: Micros(t), frame }).collect()).unwrap();
        prop_assert_eq!(tracefile::parse(&tracefile::render(&trace)).unwrap(), trace);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn recon_ignores_time_shift_and_avoids_free_bits(seed in 0u64..1000, shift in 0u64..1_000_000_000_000) {
        let v = &fleet::generate_fleet(seed, 1, Era::Modern)[0];
        let s = fleet::random_session(v, seed).unwrap();
        let params = ReconParams::default();
        let none = BTreeSet::new();
        let ReconOutcome::Report(a) = recon::analyze(&s.trace, &params, &none, &[]).unwrap() else { panic!() };
        let ReconOutcome::Report(b) = recon::analyze(&s.trace.shifted(Micros(shift)), &params, &none, &[]).unwrap() else { panic!() };
        prop_assert_eq!(b.ignition_boundary, a.ignition_boundary + Micros(shift));
        prop_assert_eq!(&a.delta_off, &b.delta_off);
        prop_assert_eq!(a.candidates.len(), b.candidates.len());
        for (ca, cb) in a.candidates.iter().zip(&b.candidates) {
            prop_assert_eq!((ca.id, ca.byte, ca.mask, ca.baseline, ca.event), (cb.id, cb.byte, cb.mask, cb.baseline, cb.event));
            prop_assert_eq!(cb.first_seen, ca.first_seen + Micros(shift));
        }
        for c in &a.candidates {
            prop_assert_eq!(a.delta_off.mask(c.id)[c.byte] & c.mask, 0);
        }
        prop_assert!(a.s_off.is_subset(&a.s_on));
    }
}
