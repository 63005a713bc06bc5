//! Simulation of a parked vehicle's CAN network under wake-up, battery-drain
//! and bus-off attacks, plus tools to reverse-engineer logged traffic.

pub mod attack;
pub mod bus;
pub mod ecu;
pub mod frame;
pub mod harness;
pub mod power;
pub mod recon;
pub mod units;
pub mod wakeup;
