//! Energy and carbon estimate for a batch run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// kg CO2e absorbed by one mature tree in a year.
pub const TREE_KG_PER_YEAR: f64 = 11.0;
/// Grid intensity used when none is configured, kg CO2e per kWh.
pub const DEFAULT_INTENSITY: f64 = 0.3386;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootprintParams {
    pub cores: f64,
    pub core_power_w: f64,
    pub usage: f64,
    pub mem_gb: f64,
    pub mem_power_w_per_gb: f64,
    pub pue: f64,
    pub carbon_intensity_kg_per_kwh: f64,
}

impl Default for FootprintParams {
    fn default() -> Self {
        Self {
            cores: 36.0,
            core_power_w: 10.0,
            usage: 1.0,
            mem_gb: 192.0,
            mem_power_w_per_gb: 0.3725,
            pue: 1.67,
            carbon_intensity_kg_per_kwh: DEFAULT_INTENSITY,
        }
    }
}

impl FootprintParams {
    fn validate(&self) -> Result<()> {
        let fields = [
            ("cores", self.cores),
            ("core_power_w", self.core_power_w),
            ("usage", self.usage),
            ("mem_gb", self.mem_gb),
            ("mem_power_w_per_gb", self.mem_power_w_per_gb),
            ("pue", self.pue),
            ("carbon_intensity_kg_per_kwh", self.carbon_intensity_kg_per_kwh),
        ];
        for (name, v) in fields {
            // Memory may legitimately be left out of the estimate.
            let ok = if name.starts_with("mem") { v >= 0.0 } else { v > 0.0 };
            if !ok || !v.is_finite() {
                return Err(Error::Usage(format!(
                    "footprint parameter {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Draw in watts.
    pub fn power_w(&self) -> f64 {
        self.cores * self.core_power_w * self.usage + self.mem_gb * self.mem_power_w_per_gb
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootprintEstimate {
    pub runtime_h: Option<f64>,
    pub energy_kwh: f64,
    pub carbon_kgco2e: f64,
    pub tree_months: f64,
    pub params: FootprintParams,
}

impl FootprintEstimate {
    /// Carbon and tree equivalents for an energy figure measured elsewhere.
    pub fn from_energy(energy_kwh: f64, params: FootprintParams) -> Result<Self> {
        params.validate()?;
        if !(energy_kwh >= 0.0 && energy_kwh.is_finite()) {
            return Err(Error::Usage(format!("energy must be nonnegative, got {energy_kwh}")));
        }
        let carbon = energy_kwh * params.carbon_intensity_kg_per_kwh;
        Ok(Self {
            runtime_h: None,
            energy_kwh,
            carbon_kgco2e: carbon,
            tree_months: carbon / (TREE_KG_PER_YEAR / 12.0),
            params,
        })
    }

    pub fn tree_years(&self) -> f64 {
        self.tree_months / 12.0
    }
}

pub fn estimate_footprint(runtime_h: f64, params: FootprintParams) -> Result<FootprintEstimate> {
    if !(runtime_h > 0.0 && runtime_h.is_finite()) {
        return Err(Error::Usage(format!("runtime must be positive, got {runtime_h} h")));
    }
    params.validate()?;
    let energy = runtime_h * params.power_w() * params.pue / 1000.0;
    let mut est = FootprintEstimate::from_energy(energy, params)?;
    est.runtime_h = Some(runtime_h);
    Ok(est)
}
