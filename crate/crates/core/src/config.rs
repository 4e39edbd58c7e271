//! Experiment configuration shared by every front-end.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::array::{ArrayGeometry, SenseConfig};
use crate::attack::{
    AttackScenario, AttackVariant, CredentialPolicy, Guess, DEFAULT_CREDENTIAL_WIDTH,
};
use crate::cost::{CostTable, OpClass};
use crate::device::{CurrentLevelModel, FailureTargets, DEFAULT_COLLAPSE_A, DEFAULT_COLLAPSE_B};
use crate::error::{Error, Result};
use crate::mitigation::ShiftEstimate;
use crate::sca::ObservationNoise;

/// Physical MTJ parameters of the reference device. Descriptive only; the
/// behavioral model does not use them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceParameters {
    pub surface_length_nm: f64,
    pub surface_width_nm: f64,
    pub spin_hall_angle: f64,
    pub resistance_area_ohm_m2: f64,
    pub oxide_thickness_nm: f64,
    pub tmr: f64,
    pub saturation_field_a_per_m: f64,
    pub gilbert_damping: f64,
    pub perpendicular_anisotropy_a_per_m: f64,
    pub temperature_k: f64,
}

impl Default for DeviceParameters {
    fn default() -> Self {
        DeviceParameters {
            surface_length_nm: 40.0,
            surface_width_nm: 40.0,
            spin_hall_angle: 0.3,
            resistance_area_ohm_m2: 1e-12,
            oxide_thickness_nm: 0.82,
            tmr: 1.0,
            saturation_field_a_per_m: 1e6,
            gilbert_damping: 0.03,
            perpendicular_anisotropy_a_per_m: 4.5e5,
            temperature_k: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceConfig {
    pub levels: CurrentLevelModel,
    pub collapse_a: f64,
    pub collapse_b: f64,
    pub parameters: DeviceParameters,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            levels: CurrentLevelModel::default(),
            collapse_a: DEFAULT_COLLAPSE_A,
            collapse_b: DEFAULT_COLLAPSE_B,
            parameters: DeviceParameters::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayConfig {
    pub geometry: ArrayGeometry,
    /// Midpoint references when absent.
    pub sense: Option<SenseConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    /// Zone temperatures of the failure-rate table, °C.
    pub temperatures: Vec<f64>,
    pub variant: AttackVariant,
    pub zone_temp: f64,
    pub forced_flip: bool,
    pub credential_width: usize,
    pub policy: CredentialPolicy,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            temperatures: vec![20.0, 50.0, 100.0],
            variant: AttackVariant::XnorLevel,
            zone_temp: 100.0,
            forced_flip: false,
            credential_width: DEFAULT_CREDENTIAL_WIDTH,
            policy: CredentialPolicy {
                username: Guess::Correct,
                password: Guess::Hamming(1),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaConfig {
    /// Training and test samples per class.
    pub per_class: usize,
    pub sigma_delay_ns: f64,
    /// Energy noise levels of the accuracy sweep, fJ.
    pub energy_noise_fj: Vec<f64>,
    pub obscuring_op: OpClass,
    pub obscuring_noise: Vec<ObservationNoise>,
    pub hamming_width: usize,
    pub hamming_noise_fj: Vec<f64>,
}

impl Default for ScaConfig {
    fn default() -> Self {
        ScaConfig {
            per_class: 10_000,
            sigma_delay_ns: 0.05,
            energy_noise_fj: vec![0.0, 0.5, 1.0, 2.0, 5.0],
            obscuring_op: OpClass::CimAdd,
            obscuring_noise: vec![
                ObservationNoise::new(0.0, 0.0),
                ObservationNoise::new(0.1, 2.0),
                ObservationNoise::new(0.5, 10.0),
                ObservationNoise::new(1.0, 20.0),
            ],
            hamming_width: 16,
            hamming_noise_fj: vec![0.0, 5.0, 10.0, 20.0, 40.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MitigationConfig {
    /// True shift of the mean-shift scenario; the estimate equals it.
    pub mean_shift: ShiftEstimate,
    /// Estimate used against the collapse disturbance.
    pub collapse_estimate: ShiftEstimate,
    pub zone_temp: f64,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        MitigationConfig {
            mean_shift: ShiftEstimate {
                alpha: 0.6,
                beta: 1.2,
                gamma: 1.25,
            },
            collapse_estimate: ShiftEstimate {
                alpha: 0.2,
                beta: 0.4,
                gamma: 0.6,
            },
            zone_temp: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub targets: FailureTargets,
    /// Largest accepted RMS residual of the fit (absolute rate).
    pub max_residual: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            targets: FailureTargets::default(),
            max_residual: 1.5e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Monte Carlo trials per estimate.
    pub trials: u64,
    pub out_dir: PathBuf,
    pub device: DeviceConfig,
    pub array: ArrayConfig,
    pub cost: CostTable,
    pub attack: AttackConfig,
    pub sca: ScaConfig,
    pub mitigation: MitigationConfig,
    pub calibration: CalibrationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 2021,
            trials: 10_000,
            out_dir: PathBuf::from("out"),
            device: DeviceConfig::default(),
            array: ArrayConfig::default(),
            cost: CostTable::default(),
            attack: AttackConfig::default(),
            sca: ScaConfig::default(),
            mitigation: MitigationConfig::default(),
            calibration: CalibrationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn levels(&self) -> CurrentLevelModel {
        self.device.levels
    }

    pub fn sense(&self) -> SenseConfig {
        self.array
            .sense
            .unwrap_or_else(|| SenseConfig::midpoints(&self.device.levels))
    }

    pub fn attack_scenario(&self) -> AttackScenario {
        AttackScenario {
            variant: self.attack.variant,
            zone_temp: self.attack.zone_temp,
            forced_flip: self.attack.forced_flip,
            collapse_a: self.device.collapse_a,
            collapse_b: self.device.collapse_b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.device.levels.validate().map_err(wrap)?;
        self.array.geometry.validate().map_err(wrap)?;
        self.sense().validate(&self.device.levels).map_err(wrap)?;
        self.cost.validate().map_err(wrap)?;
        self.mitigation.mean_shift.validate().map_err(wrap)?;
        self.mitigation.collapse_estimate.validate().map_err(wrap)?;
        if !(self.device.collapse_a.is_finite() && self.device.collapse_b.is_finite()) {
            return Err(Error::Config("collapse parameters must be finite".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(1..=64).contains(&self.attack.credential_width) {
            return Err(Error::Config("credential width must be in 1..=64".into()));
        }
        if !(1..=64).contains(&self.sca.hamming_width) {
            return Err(Error::Config("hamming width must be in 1..=64".into()));
        }
        if self.sca.per_class == 0 {
            return Err(Error::Config("sca.per_class must be at least 1".into()));
        }
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !finite_nonneg(self.sca.sigma_delay_ns)
            || !self.sca.energy_noise_fj.iter().all(|&x| finite_nonneg(x))
            || !self.sca.hamming_noise_fj.iter().all(|&x| finite_nonneg(x))
            || !self
                .sca
                .obscuring_noise
                .iter()
                .all(|n| finite_nonneg(n.sigma_delay_ns) && finite_nonneg(n.sigma_energy_fj))
        {
            return Err(Error::Config(
                "noise levels must be finite and non-negative".into(),
            ));
        }
        if self.attack.zone_temp < self.device.levels.ambient_temp
            || self
                .attack
                .temperatures
                .iter()
                .any(|&t| t < self.device.levels.ambient_temp)
        {
            return Err(Error::Config(
                "attack temperatures must be at or above ambient".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded. The output
    /// directory does not take part.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
