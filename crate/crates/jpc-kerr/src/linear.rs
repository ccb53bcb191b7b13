//! Closed-form third-order amplifier response under the stiff-pump
//! approximation, with the pump phase fixed to zero so g⟨c⟩ = g·√n_p.
//!
//! With A = κ_a/2 - iΔ and B = κ_b/2 - i(ε-Δ), the frequency-domain
//! Langevin pair for reflection α = a_out/a_in and transmission
//! β = b_out†/a_in (no drive on the idler port) solves to
//!
//! ```text
//! α = (A*B* + g²n_p) / (AB* - g²n_p)
//! β = i·g√n_p·√(κ_a κ_b) / (AB* - g²n_p)
//! ```
//!
//! which reproduces the familiar reflected power gain, the resonant law
//! G = ((1+r)/(1-r))² with r = 4g²n_p/(κ_a κ_b), and phase-preserving
//! photon conservation |α|² - |β|² = 1.

use crate::circuit::ModeParams;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    /// The response denominator vanished: the bias sits on the critical
    /// manifold where small-signal gain diverges.
    #[error("critical point: response denominator below {0:.1e} of the numerator scale")]
    CriticalPoint(f64),
    /// No interior maximum found when scanning for the peak-gain detuning.
    #[error("bracket failure: no interior gain maximum in a bracket of width {width:.3e} rad/s")]
    BracketFailure { width: f64 },
    /// The nonlinear solver ran out of iterations.
    #[error("not converged after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: u32, residual: f64 },
    /// A precondition on the inputs failed.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Least-squares fit residual exceeded the configured threshold.
    #[error("fit diverged: relative residual {residual:.3e} exceeds {limit:.3e}")]
    FitDiverged { residual: f64, limit: f64 },
}

/// Relative denominator magnitude below which the response is treated as
/// sitting on the critical manifold.
const CRITICAL_DENOMINATOR: f64 = 1e-12;

/// Pump bias: detuning ε = ω_p - ω_a - ω_b and stiff-pump photon number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpBias {
    /// Pump detuning (rad/s).
    pub epsilon: f64,
    /// Pump photon number ⟨c†c⟩ (dimensionless, ≥ 0).
    pub n_p: f64,
}

impl PumpBias {
    pub fn new(epsilon: f64, n_p: f64) -> Result<Self, SolverError> {
        if !(n_p >= 0.0) || !n_p.is_finite() || !epsilon.is_finite() {
            return Err(SolverError::InvalidInput(format!(
                "pump bias requires finite epsilon and n_p >= 0, got ({epsilon:e}, {n_p:e})"
            )));
        }
        Ok(PumpBias { epsilon, n_p })
    }

    /// `true` while n_p stays below the third-order critical photon number
    /// at this detuning.
    pub fn is_subcritical(&self, params: &ModeParams) -> bool {
        self.n_p < critical_pump_photons_3(self.epsilon, params)
    }
}

/// Signal drive point: detuning Δ = ω₁ - ω_a and input photon number n_a,
/// related to signal power by P_sig = n_a·ħω_a·κ_a.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalPoint {
    /// Signal detuning (rad/s).
    pub delta: f64,
    /// Input photon number |a_in|² (dimensionless, ≥ 0).
    pub n_a: f64,
}

impl SignalPoint {
    /// Signal power in watts on the given mode-a parameters.
    pub fn power(&self, params: &ModeParams) -> f64 {
        crate::units::power_from_photon_number(self.n_a, params.omega_a, params.kappa_a)
    }
}

/// Critical pump photon number at detuning ε:
/// n_crit = (κ_a κ_b / 4g²)·(1 + (2ε/(κ_a+κ_b))²).
///
/// Gain diverges when the denominator AB* - g²n_p reaches zero, which
/// requires both its real and imaginary parts to vanish; eliminating Δ
/// gives the detuning-dependent factor.
pub fn critical_pump_photons_3(epsilon: f64, params: &ModeParams) -> f64 {
    let (ka, kb) = (params.kappa_a, params.kappa_b);
    let base = ka * kb / (4.0 * params.g * params.g);
    let t = 2.0 * epsilon / (ka + kb);
    base * (1.0 + t * t)
}

/// Complex reflection and transmission amplitudes (α, β) at signal
/// detuning `delta`.
pub fn reflection_3(
    delta: f64,
    bias: &PumpBias,
    params: &ModeParams,
) -> Result<(Complex64, Complex64), SolverError> {
    let a = Complex64::new(params.kappa_a / 2.0, -delta);
    let b = Complex64::new(params.kappa_b / 2.0, -(bias.epsilon - delta));
    let q = params.g * params.g * bias.n_p;
    scattering_pair(a, b, q, bias.n_p, params)
}

/// Shared closed-form solve for the (α, β) pair given the two mode factors
/// and the pump term q = g²n_p. The fourth-order small-signal response uses
/// the same structure with Stark/Kerr-shifted detunings.
pub(crate) fn scattering_pair(
    a: Complex64,
    b: Complex64,
    q: f64,
    n_p: f64,
    params: &ModeParams,
) -> Result<(Complex64, Complex64), SolverError> {
    let num = a.conj() * b.conj() + q;
    let den = a * b.conj() - q;
    if den.norm() < CRITICAL_DENOMINATOR * num.norm().max(q.abs()) {
        return Err(SolverError::CriticalPoint(CRITICAL_DENOMINATOR));
    }
    let alpha = num / den;
    let beta = Complex64::new(0.0, 1.0)
        * params.g.abs()
        * n_p.sqrt()
        * (params.kappa_a * params.kappa_b).sqrt()
        / den;
    Ok((alpha, beta))
}

/// Reflected power gain |α|² of the third-order response.
pub fn reflection_gain_3(
    delta: f64,
    bias: &PumpBias,
    params: &ModeParams,
) -> Result<f64, SolverError> {
    reflection_3(delta, bias, params).map(|(alpha, _)| alpha.norm_sqr())
}

/// Result of a peak-gain-detuning query: the numerically maximized value
/// (consumed downstream) next to the first-order analytic formula kept as a
/// cross-check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakGainDetuning {
    /// Maximizer of the gain profile over Δ (rad/s).
    pub numeric: f64,
    /// First-order-in-ε analytic value (rad/s).
    pub analytic: f64,
    /// Gain at the numeric maximizer.
    pub gain: f64,
}

/// Signal detuning of peak gain for the third-order response.
///
/// The analytic branch is first order in ε and exact in Δκ:
/// Δ_maxG = (1/2 - κ(Δκ/2)/(4g²n_p + κ² + (Δκ/2)²))·ε with
/// κ_{a,b} = κ ∓ Δκ/2. The numeric branch maximizes |α|² by a grid scan
/// plus golden-section refinement on a bracket of width 4κ.
pub fn peak_gain_detuning_3(
    bias: &PumpBias,
    params: &ModeParams,
) -> Result<PeakGainDetuning, SolverError> {
    let kbar = 0.5 * (params.kappa_a + params.kappa_b);
    let half_dk = 0.5 * (params.kappa_b - params.kappa_a);
    let q4 = 4.0 * params.g * params.g * bias.n_p;
    let analytic =
        (0.5 - kbar * half_dk / (q4 + kbar * kbar + half_dk * half_dk)) * bias.epsilon;
    let gain = |d: f64| reflection_gain_3(d, bias, params).unwrap_or(f64::NEG_INFINITY);
    let (numeric, peak) = maximize(gain, analytic, 4.0 * kbar)?;
    Ok(PeakGainDetuning {
        numeric,
        analytic,
        gain: peak,
    })
}

/// Deterministic 1-D maximizer: uniform scan over the bracket, then
/// golden-section refinement between the neighbors of the best sample.
pub(crate) fn maximize<F: Fn(f64) -> f64>(
    f: F,
    center: f64,
    width: f64,
) -> Result<(f64, f64), SolverError> {
    maximize_coarse(f, center, width, 257, 90)
}

/// [`maximize`] with caller-chosen scan resolution and refinement depth,
/// for objectives that are expensive to evaluate.
pub(crate) fn maximize_coarse<F: Fn(f64) -> f64>(
    f: F,
    center: f64,
    width: f64,
    scan: usize,
    golden_iters: usize,
) -> Result<(f64, f64), SolverError> {
    let lo = center - width / 2.0;
    let step = width / (scan - 1) as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 0..scan {
        let v = f(lo + step * i as f64);
        if v > best.1 {
            best = (i, v);
        }
    }
    if best.0 == 0 || best.0 == scan - 1 || !best.1.is_finite() {
        return Err(SolverError::BracketFailure { width });
    }
    let (mut a, mut b) = (lo + step * (best.0 - 1) as f64, lo + step * (best.0 + 1) as f64);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..golden_iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)))
}

/// Resonant gain-vs-pump-power law G = ((1 + r)/(1 - r))² for the pump
/// ratio r = P_p/P_c.
pub fn gain_power_law(ratio: f64) -> Result<f64, SolverError> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(SolverError::InvalidInput(format!(
            "pump ratio must lie in [0, 1), got {ratio}"
        )));
    }
    let v = (1.0 + ratio) / (1.0 - ratio);
    Ok(v * v)
}

/// Sub-critical pump ratio reaching a power-gain target:
/// r = (√G - 1)/(√G + 1).
pub fn pump_ratio_for_gain(gain: f64) -> Result<f64, SolverError> {
    if !(gain >= 1.0) {
        return Err(SolverError::InvalidInput(format!(
            "gain target must be >= 1, got {gain}"
        )));
    }
    let s = gain.sqrt();
    Ok((s - 1.0) / (s + 1.0))
}

/// Least-squares critical power from (P_p, G) samples against the
/// gain-vs-pump-power law.
///
/// Requires at least three samples with strictly increasing pump power and
/// gains above unity. `max_rel_residual` bounds the accepted RMS residual
/// relative to the mean sample gain.
pub fn fit_critical_power(
    samples: &[(f64, f64)],
    max_rel_residual: f64,
) -> Result<f64, SolverError> {
    if samples.len() < 3 {
        return Err(SolverError::InvalidInput(format!(
            "need at least 3 samples, got {}",
            samples.len()
        )));
    }
    let mut max_p = 0.0f64;
    for w in samples.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(SolverError::InvalidInput(
                "pump powers must be strictly increasing".into(),
            ));
        }
    }
    for &(p, g) in samples {
        if !(p > 0.0) || !(g > 1.0) {
            return Err(SolverError::InvalidInput(format!(
                "samples need P > 0 and G > 1, got ({p:e}, {g:e})"
            )));
        }
        max_p = max_p.max(p);
    }
    // Per-sample inversion of the law seeds the bracket for a golden search
    // on the sum of squared gain residuals.
    let (p_top, g_top) = *samples.last().unwrap();
    let s = g_top.sqrt();
    let seed = p_top * (s + 1.0) / (s - 1.0);
    let sse = |pc: f64| -> f64 {
        samples
            .iter()
            .map(|&(p, g)| {
                let r = p / pc;
                let model = ((1.0 + r) / (1.0 - r)).powi(2);
                (model - g) * (model - g)
            })
            .sum()
    };
    let (pc, _) = maximize(|x| -sse(x), seed.max(max_p * 1.000001), seed * 2.0)
        .map_err(|_| SolverError::InvalidInput("critical-power bracket failed".into()))?;
    let mean_g = samples.iter().map(|s| s.1).sum::<f64>() / samples.len() as f64;
    let rms = (sse(pc) / samples.len() as f64).sqrt();
    if rms > max_rel_residual * mean_g {
        return Err(SolverError::FitDiverged {
            residual: rms / mean_g,
            limit: max_rel_residual,
        });
    }
    Ok(pc)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::circuit::KerrMatrix;
    use crate::units::hz_to_angular;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// Bare-bones synthetic operating point; only the fields the linear
    /// solver reads are meaningful.
    pub(crate) fn synthetic_params(kappa_a_mhz: f64, kappa_b_mhz: f64, g_mhz: f64) -> ModeParams {
        let omega_a = hz_to_angular(5.0847e9);
        let omega_b = hz_to_angular(7.4471e9);
        let omega_c = hz_to_angular(9.0e9);
        ModeParams {
            omega_a,
            omega_b,
            omega_c,
            omega_a_dressed: omega_a,
            omega_b_dressed: omega_b,
            omega_c_dressed: omega_c,
            kappa_a: hz_to_angular(kappa_a_mhz * 1e6),
            kappa_b: hz_to_angular(kappa_b_mhz * 1e6),
            g: hz_to_angular(g_mhz * 1e6),
            kerr: KerrMatrix::ZERO,
            p_a: 0.02,
            p_b: 0.03,
            p_c: 0.04,
            l_j: 6e-10,
        }
    }

    fn bias_for_ratio(ratio: f64, epsilon: f64, params: &ModeParams) -> PumpBias {
        let n_p = ratio * params.kappa_a * params.kappa_b / (4.0 * params.g * params.g);
        PumpBias { epsilon, n_p }
    }

    #[test]
    fn zero_pump_gives_unit_gain_everywhere() {
        let params = synthetic_params(20.27, 62.17, 5.0);
        for delta_mhz in [-30.0, -3.0, 0.0, 1.7, 25.0] {
            for eps_mhz in [-8.0, 0.0, 5.0] {
                let bias = PumpBias {
                    epsilon: hz_to_angular(eps_mhz * 1e6),
                    n_p: 0.0,
                };
                let g = reflection_gain_3(hz_to_angular(delta_mhz * 1e6), &bias, &params).unwrap();
                assert_relative_eq!(g, 1.0, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn resonant_gain_at_one_third_ratio_is_four() {
        // Equal linewidths, 4g²n_p = κ²/3: G = ((4/3)/(2/3))² = 4.
        let params = synthetic_params(30.0, 30.0, 4.0);
        let bias = bias_for_ratio(1.0 / 3.0, 0.0, &params);
        let g = reflection_gain_3(0.0, &bias, &params).unwrap();
        assert_relative_eq!(g, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn super_critical_bias_is_flagged_and_sub_critical_ratio_inverts() {
        let params = synthetic_params(20.27, 62.17, 5.0);
        let over = bias_for_ratio(11.0 / 9.0, 0.0, &params);
        assert!(!over.is_subcritical(&params));
        // The sub-critical solution of G = 100 at resonance.
        let r = pump_ratio_for_gain(100.0).unwrap();
        assert_relative_eq!(r, 9.0 / 11.0, max_relative = 1e-14);
        let under = bias_for_ratio(r, 0.0, &params);
        assert!(under.is_subcritical(&params));
        let g = reflection_gain_3(0.0, &under, &params).unwrap();
        assert_relative_eq!(g, 100.0, max_relative = 1e-10);
    }

    #[test]
    fn critical_point_reported_at_divergence() {
        let params = synthetic_params(25.0, 25.0, 5.0);
        let bias = bias_for_ratio(1.0, 0.0, &params);
        assert!(matches!(
            reflection_gain_3(0.0, &bias, &params),
            Err(SolverError::CriticalPoint(_))
        ));
    }

    #[test]
    fn solution_back_substitutes_into_langevin_pair() {
        let params = synthetic_params(20.27, 62.17, 5.0);
        let bias = PumpBias {
            epsilon: hz_to_angular(2.0e6),
            n_p: 11.3,
        };
        let delta = hz_to_angular(-1.3e6);
        let (alpha, beta) = reflection_3(delta, &bias, &params).unwrap();
        let (ka, kb) = (params.kappa_a, params.kappa_b);
        let gc = params.g.abs() * bias.n_p.sqrt();
        let a = Complex64::new(ka / 2.0, -delta);
        let b = Complex64::new(kb / 2.0, -(bias.epsilon - delta));
        let r1 = a * (1.0 + alpha) / ka.sqrt() + Complex64::new(0.0, gc / kb.sqrt()) * beta
            - ka.sqrt();
        let r2 = b * beta.conj() / kb.sqrt()
            + Complex64::new(0.0, gc / ka.sqrt()) * (1.0 + alpha.conj());
        assert!(r1.norm() / ka.sqrt() < 1e-12, "residual {r1}");
        assert!(r2.norm() / ka.sqrt() < 1e-12, "residual {r2}");
    }

    #[test]
    fn photon_number_conservation() {
        let params = synthetic_params(20.27, 62.17, 5.0);
        for (dm, em, np) in [(0.0, 0.0, 3.0), (-2.5, 4.0, 10.0), (7.0, -6.0, 0.4)] {
            let bias = PumpBias {
                epsilon: hz_to_angular(em * 1e6),
                n_p: np,
            };
            let (alpha, beta) =
                reflection_3(hz_to_angular(dm * 1e6), &bias, &params).unwrap();
            assert_relative_eq!(
                alpha.norm_sqr() - beta.norm_sqr(),
                1.0,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn gain_symmetric_under_detuning_exchange() {
        // Δ → ε - Δ with κ_a ↔ κ_b leaves |α|² unchanged.
        let p1 = synthetic_params(20.27, 62.17, 5.0);
        let p2 = synthetic_params(62.17, 20.27, 5.0);
        let eps = hz_to_angular(3.0e6);
        let bias = PumpBias { epsilon: eps, n_p: 7.0 };
        for dm in [-4.0, -0.5, 1.0, 2.2, 9.0] {
            let d = hz_to_angular(dm * 1e6);
            let g1 = reflection_gain_3(d, &bias, &p1).unwrap();
            let g2 = reflection_gain_3(eps - d, &bias, &p2).unwrap();
            assert_relative_eq!(g1, g2, max_relative = 1e-12);
        }
    }

    #[test]
    fn gain_monotone_in_pump_on_subcritical_branch() {
        let params = synthetic_params(20.27, 62.17, 5.0);
        let mut last = 0.0;
        for i in 1..40 {
            let bias = bias_for_ratio(i as f64 / 41.0, 0.0, &params);
            let g = reflection_gain_3(0.0, &bias, &params).unwrap();
            assert!(g > last);
            last = g;
        }
    }

    #[test]
    fn peak_detuning_equal_linewidths_is_half_epsilon() {
        let params = synthetic_params(25.0, 25.0, 5.0);
        let bias = bias_for_ratio(0.5, hz_to_angular(2.0e6), &params);
        let pk = peak_gain_detuning_3(&bias, &params).unwrap();
        assert_relative_eq!(pk.analytic, bias.epsilon / 2.0, max_relative = 1e-12);
        assert_abs_diff_eq!(pk.numeric, bias.epsilon / 2.0, epsilon = params.kappa_a * 1e-6);
    }

    #[test]
    fn peak_detuning_zero_at_zero_pump_detuning() {
        let params = synthetic_params(20.27, 62.17, 5.0);
        let bias = bias_for_ratio(0.7, 0.0, &params);
        let pk = peak_gain_detuning_3(&bias, &params).unwrap();
        assert_eq!(pk.analytic, 0.0);
        assert_abs_diff_eq!(pk.numeric, 0.0, epsilon = params.kappa_a * 1e-6);
    }

    #[test]
    fn numeric_peak_matches_first_order_formula_to_higher_order() {
        // Published linewidths, 20 dB bias: the numeric maximizer deviates
        // from the first-order formula only at O(ε³), so halving ε shrinks
        // the residual by far more than the first-order factor of two.
        let params = synthetic_params(20.27, 62.17, 5.0);
        let r = pump_ratio_for_gain(100.0).unwrap();
        let res = |eps_mhz: f64| {
            let bias = bias_for_ratio(r, hz_to_angular(eps_mhz * 1e6), &params);
            let pk = peak_gain_detuning_3(&bias, &params).unwrap();
            (pk.numeric - pk.analytic).abs()
        };
        let (r2, r1) = (res(2.0), res(1.0));
        assert!(r2 > 0.0 && r1 > 0.0);
        assert!(r2 / r1 > 3.5, "residual ratio {}", r2 / r1);
    }

    #[test]
    fn resonant_peak_gain_equals_power_law() {
        let params = synthetic_params(20.27, 62.17, 5.0);
        for ratio in [0.1, 0.5, 9.0 / 11.0] {
            let bias = bias_for_ratio(ratio, 0.0, &params);
            let pk = peak_gain_detuning_3(&bias, &params).unwrap();
            assert_relative_eq!(pk.gain, gain_power_law(ratio).unwrap(), max_relative = 1e-10);
        }
    }

    #[test]
    fn power_law_endpoints() {
        assert_relative_eq!(gain_power_law(0.0).unwrap(), 1.0);
        assert_relative_eq!(
            gain_power_law(9.0 / 11.0).unwrap(),
            100.0,
            max_relative = 1e-12
        );
        assert!(gain_power_law(1.0).is_err());
        assert!(gain_power_law(-0.1).is_err());
    }

    #[test]
    fn critical_power_fit_round_trip() {
        // Samples generated from the law at P_c = 1.0 with a deterministic
        // ±1% multiplicative perturbation.
        let pc = 1.0;
        let wiggle = [1.01, 0.99, 1.008, 0.992, 1.005, 0.995, 1.01];
        let samples: Vec<(f64, f64)> = (0..7)
            .map(|i| {
                let p = 0.3 + 0.08 * i as f64;
                let g = gain_power_law(p / pc).unwrap() * wiggle[i];
                (p, g)
            })
            .collect();
        let fitted = fit_critical_power(&samples, 0.05).unwrap();
        assert_relative_eq!(fitted, pc, max_relative = 0.02);
    }

    #[test]
    fn critical_power_fit_rejects_garbage() {
        let samples = vec![(0.1, 5.0), (0.2, 2.0), (0.3, 80.0)];
        assert!(matches!(
            fit_critical_power(&samples, 1e-3),
            Err(SolverError::FitDiverged { .. })
        ));
        assert!(fit_critical_power(&samples[..2], 0.1).is_err());
    }
}
