//! Transceiver wake-up filter for sleeping CAN nodes.
//!
//! A sleeping transceiver powers its ECU up when it sees a dominant bus
//! level lasting at least `t_Filter`. The standard only bounds `t_Filter` to
//! a window; pulses shorter than the lower bound never wake, pulses longer
//! than the upper bound always do, and the gray zone between is decided here
//! by a single deterministic threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{dominant_runs, serialize_frame, BitStream, CanFrame, FrameError};

/// Slack for comparing run durations built from `bits * width`.
const DURATION_EPS_US: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("wake-up filter requires 0 < t_filter_min <= gray_zone_threshold <= t_filter_max (got {min}, {threshold}, {max} us)")]
pub struct FilterParamsError {
    pub min: f64,
    pub threshold: f64,
    pub max: f64,
}

/// Wake-up filter window, all values in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WakeupFilterParams {
    t_filter_min_us: f64,
    t_filter_max_us: f64,
    gray_zone_threshold_us: f64,
}

impl Default for WakeupFilterParams {
    /// `[0.5µs, 5µs]`, gray zone resolved at the upper bound.
    fn default() -> Self {
        WakeupFilterParams {
            t_filter_min_us: 0.5,
            t_filter_max_us: 5.0,
            gray_zone_threshold_us: 5.0,
        }
    }
}

impl WakeupFilterParams {
    pub fn new(t_filter_min_us: f64, t_filter_max_us: f64, gray_zone_threshold_us: f64) -> Result<Self, FilterParamsError> {
        let ok = t_filter_min_us > 0.0
            && t_filter_min_us <= gray_zone_threshold_us
            && gray_zone_threshold_us <= t_filter_max_us
            && t_filter_max_us.is_finite();
        if !ok {
            return Err(FilterParamsError {
                min: t_filter_min_us,
                threshold: gray_zone_threshold_us,
                max: t_filter_max_us,
            });
        }
        Ok(WakeupFilterParams {
            t_filter_min_us,
            t_filter_max_us,
            gray_zone_threshold_us,
        })
    }

    pub fn t_filter_min_us(&self) -> f64 {
        self.t_filter_min_us
    }

    pub fn t_filter_max_us(&self) -> f64 {
        self.t_filter_max_us
    }

    pub fn gray_zone_threshold_us(&self) -> f64 {
        self.gray_zone_threshold_us
    }
}

/// Whether `stream` wakes a sleeping transceiver.
///
/// Runs are taken independently: sub-threshold pulses do not accumulate.
pub fn detect_wakeup(stream: &BitStream, params: &WakeupFilterParams) -> bool {
    dominant_runs(stream).iter().any(|run| {
        run.duration_us + DURATION_EPS_US >= params.t_filter_min_us
            && run.duration_us + DURATION_EPS_US >= params.gray_zone_threshold_us
    })
}

pub fn frame_wakes_bus(frame: &CanFrame, bitrate: u32, params: &WakeupFilterParams) -> Result<bool, FrameError> {
    Ok(detect_wakeup(&serialize_frame(frame, bitrate)?, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Level;

    #[test]
    fn params_validated() {
        assert!(WakeupFilterParams::new(0.5, 5.0, 5.0).is_ok());
        assert!(WakeupFilterParams::new(0.5, 5.0, 2.0).is_ok());
        assert!(WakeupFilterParams::new(0.0, 5.0, 5.0).is_err());
        assert!(WakeupFilterParams::new(0.5, 5.0, 6.0).is_err());
        assert!(WakeupFilterParams::new(0.5, 5.0, 0.4).is_err());
    }

    #[test]
    fn data_frame_at_500k_wakes_with_defaults() {
        let frame = CanFrame::new(0x3B, &[1, 2, 3]).unwrap();
        assert!(frame_wakes_bus(&frame, 500_000, &WakeupFilterParams::default()).unwrap());
    }

    #[test]
    fn quarter_microsecond_pulse_is_ignored() {
        let stream = BitStream::new(vec![Level::Recessive, Level::Dominant, Level::Recessive], BitStream::width_for(4_000_000).unwrap());
        assert!(!detect_wakeup(&stream, &WakeupFilterParams::default()));
    }

    #[test]
    fn all_recessive_stream_never_wakes() {
        let stream = BitStream::new(vec![Level::Recessive; 200], 2.0);
        assert!(!detect_wakeup(&stream, &WakeupFilterParams::default()));
    }

    #[test]
    fn all_ones_frame_wakes_at_500k() {
        assert!(frame_wakes_bus(&CanFrame::all_recessive(), 500_000, &WakeupFilterParams::default()).unwrap());
    }

    #[test]
    fn any_frame_wakes_at_125k() {
        for id in [0u16, 0x7FF, 0x555, 0x2AA] {
            let frame = CanFrame::new(id, &[0xFF; 8]).unwrap();
            assert!(frame_wakes_bus(&frame, 125_000, &WakeupFilterParams::default()).unwrap());
        }
    }

    #[test]
    fn gray_zone_threshold_decides_between_bounds() {
        // a 2-bit dominant run at 1 Mbit/s lasts 2µs: inside the gray zone
        let stream = BitStream::new(vec![Level::Recessive, Level::Dominant, Level::Dominant, Level::Recessive], 1.0);
        assert!(!detect_wakeup(&stream, &WakeupFilterParams::default()));
        let eager = WakeupFilterParams::new(0.5, 5.0, 1.5).unwrap();
        assert!(detect_wakeup(&stream, &eager));
    }
}
