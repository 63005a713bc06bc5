use std::collections::BTreeSet;

use thiserror::Error;

use crate::attack::FunctionLoadTable;
use crate::bus::{BusConfig, BusError};
use crate::ecu::{EcuConfig, EcuConfigError, MessageSchedule, Terminal};
use crate::power::{BatteryConfig, PowerError};
use crate::wakeup::WakeupFilterParams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VehicleError {
    #[error("vehicle has no ECUs")]
    EmptyRoster,
    #[error("duplicate ECU name `{0}`")]
    DuplicateEcu(String),
    #[error("message id {id:#05x} scheduled by both `{first}` and `{second}`")]
    DuplicateId { id: u16, first: String, second: String },
    #[error("bus bit rate must be positive")]
    ZeroBitrate,
    #[error("quiescent current must be finite and non-negative")]
    NegativeQuiescent,
    #[error(transparent)]
    Ecu(#[from] EcuConfigError),
    #[error(transparent)]
    Battery(#[from] PowerError),
    #[error("load table: {0}")]
    Loads(String),
}

/// One bus of a vehicle with everything needed to simulate it parked.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleConfig {
    pub name: String,
    pub bitrate: u32,
    /// Supply current of everything not modeled as a bus node.
    pub quiescent_current: f64,
    pub ecus: Vec<EcuConfig>,
    pub loads: FunctionLoadTable,
    pub wakeup: WakeupFilterParams,
    pub battery: BatteryConfig,
}

impl VehicleConfig {
    pub fn validate(&self) -> Result<(), VehicleError> {
        if self.ecus.is_empty() {
            return Err(VehicleError::EmptyRoster);
        }
        if self.bitrate == 0 {
            return Err(VehicleError::ZeroBitrate);
        }
        if !(self.quiescent_current >= 0.0 && self.quiescent_current.is_finite()) {
            return Err(VehicleError::NegativeQuiescent);
        }
        let mut names = BTreeSet::new();
        for ecu in &self.ecus {
            if !names.insert(ecu.name.as_str()) {
                return Err(VehicleError::DuplicateEcu(ecu.name.clone()));
            }
            ecu.validate()?;
        }
        let mut owners: Vec<(u16, &str)> = Vec::new();
        for ecu in &self.ecus {
            for m in &ecu.schedule {
                if let Some((_, first)) = owners.iter().find(|(id, _)| *id == m.id) {
                    return Err(VehicleError::DuplicateId {
                        id: m.id,
                        first: first.to_string(),
                        second: ecu.name.clone(),
                    });
                }
                owners.push((m.id, &ecu.name));
            }
        }
        self.battery.validate()?;
        self.loads.validate().map_err(VehicleError::Loads)?;
        Ok(())
    }

    pub fn bus_config(&self) -> Result<BusConfig, BusError> {
        BusConfig::new(self.bitrate, self.ecus.clone())
    }

    /// Indices of ECUs a bus wake-up can reach.
    pub fn wakeable(&self) -> Vec<usize> {
        self.ecus
            .iter()
            .enumerate()
            .filter(|(_, e)| e.terminal == Terminal::T30)
            .map(|(i, _)| i)
            .collect()
    }

    /// The scheduled message with identifier `id` and the index of its sender.
    pub fn message(&self, id: u16) -> Option<(usize, &MessageSchedule)> {
        self.ecus
            .iter()
            .enumerate()
            .find_map(|(i, e)| e.schedule.iter().find(|m| m.id == id).map(|m| (i, m)))
    }

    pub fn ecu_index(&self, name: &str) -> Option<usize> {
        self.ecus.iter().position(|e| e.name == name)
    }

    /// Supply current with every ECU in its idle mode.
    pub fn idle_current(&self) -> f64 {
        self.quiescent_current
            + self
                .ecus
                .iter()
                .map(|e| match e.terminal {
                    Terminal::T15 => 0.0,
                    Terminal::T30 => e.sleep_current,
                })
                .sum::<f64>()
    }
}
