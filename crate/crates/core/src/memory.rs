//! Bandwidth/latency cycle accounting and linear energy accounting.
//!
//! Compute and memory transfer are assumed to overlap fully within a round:
//! a round costs whichever is longer, plus a fixed pipeline-fill latency. Bank
//! and row-buffer effects are not modeled. The engine clock is 1 GHz, so
//! GB/s and bytes/cycle coincide.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemSpec {
    pub bytes_per_cycle: f64,
    pub fixed_latency_cycles: u64,
    pub access_granularity_bytes: u64,
}

impl MemSpec {
    pub fn ddr4_2666() -> Self {
        MemSpec {
            bytes_per_cycle: 21.3,
            fixed_latency_cycles: 100,
            access_granularity_bytes: 64,
        }
    }

    pub fn hbm2() -> Self {
        MemSpec {
            bytes_per_cycle: 256.0,
            fixed_latency_cycles: 100,
            access_granularity_bytes: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bytes_per_cycle > 0.0) || !self.bytes_per_cycle.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be positive, got {}",
                self.bytes_per_cycle
            )));
        }
        if self.access_granularity_bytes == 0 {
            return Err(Error::InvalidParameter("access granularity must be positive".into()));
        }
        Ok(())
    }

    /// Cycles to move `bytes` at peak bandwidth.
    pub fn transfer_cycles(&self, bytes: u64) -> u64 {
        (bytes as f64 / self.bytes_per_cycle).ceil() as u64
    }

    /// Rounds a byte count up to whole memory transactions.
    pub fn round_to_granularity(&self, bytes: u64) -> u64 {
        bytes.div_ceil(self.access_granularity_bytes) * self.access_granularity_bytes
    }
}

pub fn round_cycles(compute_cycles: u64, dram_bytes: u64, spec: &MemSpec) -> u64 {
    compute_cycles.max(spec.transfer_cycles(dram_bytes)) + spec.fixed_latency_cycles
}

/// Energy coefficients in picojoules; these are inputs, never derived.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyModel {
    pub pj_per_mac: f64,
    pub pj_per_cache_access: f64,
    pub pj_per_dram_byte: f64,
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        let all = [self.pj_per_mac, self.pj_per_cache_access, self.pj_per_dram_byte];
        if all.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParameter("energy coefficients must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyCounters {
    pub macs: u64,
    pub cache_accesses: u64,
    pub dram_bytes: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub compute_pj: f64,
    pub cache_pj: f64,
    pub dram_pj: f64,
    pub total_pj: f64,
}

pub fn energy_report(counters: &EnergyCounters, model: &EnergyModel) -> EnergyReport {
    let compute_pj = counters.macs as f64 * model.pj_per_mac;
    let cache_pj = counters.cache_accesses as f64 * model.pj_per_cache_access;
    let dram_pj = counters.dram_bytes as f64 * model.pj_per_dram_byte;
    EnergyReport {
        compute_pj,
        cache_pj,
        dram_pj,
        total_pj: compute_pj + cache_pj + dram_pj,
    }
}
