//! Physical constants and the unit conversions applied at the config
//! boundary. Everything past this module works in SI with angular
//! frequencies (rad/s).

use std::f64::consts::PI;

/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Reduced flux quantum φ₀ = ħ/2e (Wb).
pub const PHI0_REDUCED: f64 = HBAR / (2.0 * ELEMENTARY_CHARGE);

/// Magnetic flux quantum Φ₀ = h/2e = 2π·φ₀ (Wb).
pub const PHI0: f64 = 2.0 * PI * PHI0_REDUCED;

/// Cycles (Hz) to angular frequency (rad/s).
pub fn hz_to_angular(f: f64) -> f64 {
    2.0 * PI * f
}

/// Angular frequency (rad/s) to cycles (Hz).
pub fn angular_to_hz(w: f64) -> f64 {
    w / (2.0 * PI)
}

/// External flux in units of Φ₀ to flux in weber.
///
/// The flux is the total applied to the four-loop ring, so the potential's
/// per-junction argument Φ_ext/4φ₀ advances by 2π every 4Φ₀.
pub fn flux_quanta_to_weber(f: f64) -> f64 {
    f * PHI0
}

/// Power in dBm to watts.
pub fn dbm_to_watts(p: f64) -> f64 {
    1e-3 * 10f64.powf(p / 10.0)
}

/// Power in watts to dBm.
pub fn watts_to_dbm(p: f64) -> f64 {
    10.0 * (p / 1e-3).log10()
}

/// Power gain to decibels.
pub fn gain_to_db(g: f64) -> f64 {
    10.0 * g.log10()
}

/// Decibels to power gain.
pub fn db_to_gain(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Input photon number for a signal power (W) on a mode with angular
/// frequency `omega` and linewidth `kappa`, via P = n·ħω·κ.
pub fn photon_number_from_power(p: f64, omega: f64, kappa: f64) -> f64 {
    p / (HBAR * omega * kappa)
}

/// Signal power (W) for an input photon number, via P = n·ħω·κ.
pub fn power_from_photon_number(n: f64, omega: f64, kappa: f64) -> f64 {
    n * HBAR * omega * kappa
}
