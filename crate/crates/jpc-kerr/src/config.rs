//! JSON run configuration: schema, validation, and the only place where
//! config units (GHz/MHz, dBm, Φ₀, μA, nH, fF) are converted to the
//! internal SI/angular conventions.
//!
//! Every numeric key carries an explicit unit suffix; unknown keys are
//! rejected so a missing suffix reads as a schema error with a hint.

use crate::circuit::{CircuitSpec, CircuitError};
use crate::kerr::ContinuationPolicy;
use crate::units;
use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("config key `{key}` lacks a unit suffix; expected `{expected}`")]
    Unit { key: String, expected: String },
    #[error("config device block is not physical: {0}")]
    Device(#[from] CircuitError),
}

/// Device block: circuit values in bench units.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    /// Outer-junction critical current (μA); exclusive with `e_j_j`.
    #[serde(default)]
    pub i_c_ua: Option<f64>,
    /// Outer-junction Josephson energy (J); exclusive with `i_c_ua`.
    #[serde(default)]
    pub e_j_j: Option<f64>,
    pub l_a_nh: f64,
    pub l_b_nh: f64,
    pub l_c_nh: f64,
    pub c_a_ff: f64,
    pub c_b_ff: f64,
    pub c_c_ff: f64,
    /// External flux through the full ring, in units of Φ₀.
    pub flux_phi0: f64,
    pub kappa_a_mhz: f64,
    pub kappa_b_mhz: f64,
}

/// Bias block: gain target plus the pump-detuning and signal-power grids.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasConfig {
    #[serde(default = "default_gain_db")]
    pub gain_db: f64,
    #[serde(default = "default_eps_min")]
    pub epsilon_min_mhz: f64,
    #[serde(default = "default_eps_max")]
    pub epsilon_max_mhz: f64,
    #[serde(default = "default_eps_step")]
    pub epsilon_step_mhz: f64,
    #[serde(default = "default_sig_min")]
    pub signal_min_dbm: f64,
    #[serde(default = "default_sig_max")]
    pub signal_max_dbm: f64,
    #[serde(default = "default_sig_per_decade")]
    pub signal_points_per_decade: u32,
    /// Input power treated as the small-signal reference (dBm).
    #[serde(default = "default_sig_min")]
    pub n_a_ref_dbm: f64,
}

fn default_gain_db() -> f64 {
    20.0
}
fn default_eps_min() -> f64 {
    -10.0
}
fn default_eps_max() -> f64 {
    10.0
}
fn default_eps_step() -> f64 {
    0.25
}
fn default_sig_min() -> f64 {
    -140.0
}
fn default_sig_max() -> f64 {
    -90.0
}
fn default_sig_per_decade() -> u32 {
    61
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig {
            gain_db: default_gain_db(),
            epsilon_min_mhz: default_eps_min(),
            epsilon_max_mhz: default_eps_max(),
            epsilon_step_mhz: default_eps_step(),
            signal_min_dbm: default_sig_min(),
            signal_max_dbm: default_sig_max(),
            signal_points_per_decade: default_sig_per_decade(),
            n_a_ref_dbm: default_sig_min(),
        }
    }
}

/// Solver block mirroring [`ContinuationPolicy`].
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u32,
    #[serde(default = "default_damping_floor")]
    pub damping_floor: f64,
    #[serde(default = "default_step_growth")]
    pub step_growth: f64,
    #[serde(default = "default_grow_after")]
    pub grow_after: u32,
    #[serde(default = "default_min_step_fraction")]
    pub min_step_fraction: f64,
}

fn default_tolerance() -> f64 {
    1e-12
}
fn default_max_iterations() -> u32 {
    200
}
fn default_damping_floor() -> f64 {
    1.0 / 64.0
}
fn default_step_growth() -> f64 {
    1.5
}
fn default_grow_after() -> u32 {
    3
}
fn default_min_step_fraction() -> f64 {
    1e-6
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            damping_floor: default_damping_floor(),
            step_growth: default_step_growth(),
            grow_after: default_grow_after(),
            min_step_fraction: default_min_step_fraction(),
        }
    }
}

/// Output block: destination directory and CSV float precision.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: String,
    /// Significant decimal digits of value columns.
    #[serde(default = "default_precision")]
    pub precision: usize,
}

fn default_directory() -> String {
    "out".to_string()
}
fn default_precision() -> usize {
    9
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: default_directory(),
            precision: default_precision(),
        }
    }
}

/// Parsed and validated run configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub device: DeviceConfig,
    #[serde(default)]
    pub bias: BiasConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Known unsuffixed spellings of device keys, used to upgrade the serde
/// "unknown field" message into a unit hint.
const SUFFIX_HINTS: &[(&str, &str)] = &[
    ("i_c", "i_c_ua"),
    ("e_j", "e_j_j"),
    ("l_a", "l_a_nh"),
    ("l_b", "l_b_nh"),
    ("l_c", "l_c_nh"),
    ("c_a", "c_a_ff"),
    ("c_b", "c_b_ff"),
    ("c_c", "c_c_ff"),
    ("flux", "flux_phi0"),
    ("kappa_a", "kappa_a_mhz"),
    ("kappa_b", "kappa_b_mhz"),
    ("epsilon_min", "epsilon_min_mhz"),
    ("epsilon_max", "epsilon_max_mhz"),
    ("epsilon_step", "epsilon_step_mhz"),
    ("signal_min", "signal_min_dbm"),
    ("signal_max", "signal_max_dbm"),
    ("n_a_ref", "n_a_ref_dbm"),
];

/// Reads, parses, and validates a JSON run configuration.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let config: RunConfig = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => {
            let message = e.to_string();
            if let Some(field) = unknown_field_name(&message) {
                for (bare, suffixed) in SUFFIX_HINTS {
                    if field == *bare {
                        return Err(ConfigError::Unit {
                            key: field,
                            expected: (*suffixed).to_string(),
                        });
                    }
                }
            }
            return Err(ConfigError::Schema {
                path: path.display().to_string(),
                message,
            });
        }
    };
    config.validate()?;
    Ok(config)
}

/// Extracts the offending key from serde's "unknown field `x`" message.
fn unknown_field_name(message: &str) -> Option<String> {
    let start = message.find("unknown field `")? + "unknown field `".len();
    let rest = &message[start..];
    let end = rest.find('`')?;
    Some(rest[..end].to_string())
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let schema = |key: &str, message: String| ConfigError::Schema {
            path: key.to_string(),
            message,
        };
        let d = &self.device;
        match (d.i_c_ua, d.e_j_j) {
            (None, None) => {
                return Err(schema(
                    "device",
                    "one of `i_c_ua` or `e_j_j` is required".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(schema(
                    "device",
                    "`i_c_ua` and `e_j_j` are mutually exclusive".into(),
                ))
            }
            _ => {}
        }
        for (key, v) in [
            ("device.l_a_nh", d.l_a_nh),
            ("device.l_b_nh", d.l_b_nh),
            ("device.l_c_nh", d.l_c_nh),
            ("device.c_a_ff", d.c_a_ff),
            ("device.c_b_ff", d.c_b_ff),
            ("device.c_c_ff", d.c_c_ff),
            ("device.kappa_a_mhz", d.kappa_a_mhz),
            ("device.kappa_b_mhz", d.kappa_b_mhz),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(schema(key, format!("must be strictly positive, got {v}")));
            }
        }
        if let Some(i_c) = d.i_c_ua {
            if !(i_c > 0.0) {
                return Err(schema("device.i_c_ua", format!("must be positive, got {i_c}")));
            }
        }
        if let Some(e_j) = d.e_j_j {
            if !(e_j > 0.0) {
                return Err(schema("device.e_j_j", format!("must be positive, got {e_j}")));
            }
        }
        let b = &self.bias;
        if !(b.gain_db >= 0.0) {
            return Err(schema("bias.gain_db", format!("must be >= 0, got {}", b.gain_db)));
        }
        if !(b.epsilon_step_mhz > 0.0) {
            return Err(schema(
                "bias.epsilon_step_mhz",
                format!("must be positive, got {}", b.epsilon_step_mhz),
            ));
        }
        if b.epsilon_max_mhz < b.epsilon_min_mhz {
            return Err(schema(
                "bias.epsilon_max_mhz",
                "epsilon grid must have max >= min".into(),
            ));
        }
        if b.signal_max_dbm <= b.signal_min_dbm {
            return Err(schema(
                "bias.signal_max_dbm",
                "signal grid must have max > min".into(),
            ));
        }
        if b.signal_points_per_decade == 0 {
            return Err(schema(
                "bias.signal_points_per_decade",
                "must be at least 1".into(),
            ));
        }
        let s = &self.solver;
        if !(s.tolerance > 0.0 && s.tolerance < 1e-3) {
            return Err(schema(
                "solver.tolerance",
                format!("must be in (0, 1e-3), got {}", s.tolerance),
            ));
        }
        if s.max_iterations == 0 {
            return Err(schema("solver.max_iterations", "must be at least 1".into()));
        }
        if !(s.damping_floor > 0.0 && s.damping_floor <= 1.0) {
            return Err(schema(
                "solver.damping_floor",
                format!("must be in (0, 1], got {}", s.damping_floor),
            ));
        }
        if !(s.step_growth >= 1.0) {
            return Err(schema(
                "solver.step_growth",
                format!("must be >= 1, got {}", s.step_growth),
            ));
        }
        if !(s.min_step_fraction > 0.0 && s.min_step_fraction < 1.0) {
            return Err(schema(
                "solver.min_step_fraction",
                format!("must be in (0, 1), got {}", s.min_step_fraction),
            ));
        }
        if self.output.precision == 0 || self.output.precision > 17 {
            return Err(schema(
                "output.precision",
                format!("must be in 1..=17, got {}", self.output.precision),
            ));
        }
        self.circuit_spec().validate()?;
        Ok(())
    }

    /// Device block in SI units.
    pub fn circuit_spec(&self) -> CircuitSpec {
        let d = &self.device;
        let e_j = match (d.i_c_ua, d.e_j_j) {
            (Some(i_c), _) => CircuitSpec::josephson_energy(i_c * 1e-6),
            (_, Some(e_j)) => e_j,
            _ => unreachable!("validated"),
        };
        CircuitSpec {
            e_j,
            l_a: d.l_a_nh * 1e-9,
            l_b: d.l_b_nh * 1e-9,
            l_c: d.l_c_nh * 1e-9,
            c_a: d.c_a_ff * 1e-15,
            c_b: d.c_b_ff * 1e-15,
            c_c: d.c_c_ff * 1e-15,
            phi_ext: units::flux_quanta_to_weber(d.flux_phi0),
            kappa_a: units::hz_to_angular(d.kappa_a_mhz * 1e6),
            kappa_b: units::hz_to_angular(d.kappa_b_mhz * 1e6),
        }
    }

    /// Continuation policy from the solver block.
    pub fn policy(&self) -> ContinuationPolicy {
        let s = &self.solver;
        ContinuationPolicy {
            tolerance: s.tolerance,
            max_iterations: s.max_iterations,
            damping_floor: s.damping_floor,
            step_growth: s.step_growth,
            grow_after: s.grow_after,
            min_step_fraction: s.min_step_fraction,
        }
    }

    /// Pump-detuning grid (rad/s), ascending.
    pub fn epsilon_grid(&self) -> Vec<f64> {
        let b = &self.bias;
        let n = ((b.epsilon_max_mhz - b.epsilon_min_mhz) / b.epsilon_step_mhz).round() as usize;
        (0..=n)
            .map(|i| units::hz_to_angular((b.epsilon_min_mhz + i as f64 * b.epsilon_step_mhz) * 1e6))
            .collect()
    }

    /// Power-gain target.
    pub fn gain_target(&self) -> f64 {
        units::db_to_gain(self.bias.gain_db)
    }
}
