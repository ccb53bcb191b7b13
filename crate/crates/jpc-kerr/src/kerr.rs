//! Fourth-order self-consistent amplifier response.
//!
//! The stiff-pump cross-Kerr terms are constant Stark shifts
//! σ_a = 8K_ac·n_p, σ_b = 8K_bc·n_p folded into the effective detunings.
//! The signal-dependent terms make the Langevin pair nonlinear: with
//!
//! ```text
//! t_a = K_aa·|1+α|²·n_a + 2K_ab·(κ_a/κ_b)·|β|²·n_a
//! t_b = K_bb·(κ_a/κ_b)·|β|²·n_a + 2K_ab·|1+α|²·n_a
//! ```
//!
//! the equations are linear in (α, β) once (t_a, t_b) is fixed, so the
//! solver is a damped 2-D Newton iteration on the real shift pair, seeded
//! by continuation from the n_a = 0 closed form. Signal powers map to
//! photon numbers through P_sig = n_a·ħω_a·κ_a, which is what normalizes
//! the |a_in|² factors above by κ_a.
//!
//! Sweeps of n_a track the branch continuously connected to the
//! small-signal solution; when a fold eats that branch, the continuation
//! step collapses, the fold is reported, and the sweep relaxes onto the
//! surviving attractor of the damped fixed-point map. A brute-force grid
//! scan of the fixed-point residual ([`scan_fixed_point_map`]) provides an
//! independent route to every coexisting root for verification.

use crate::circuit::ModeParams;
use crate::linear::{self, PeakGainDetuning, PumpBias, SolverError};
use num_complex::Complex64;

/// Stark shifts (σ_a, σ_b) of the two effective detunings.
fn stark_shifts(bias: &PumpBias, params: &ModeParams) -> (f64, f64) {
    (
        8.0 * params.kerr.ac * bias.n_p,
        8.0 * params.kerr.bc * bias.n_p,
    )
}

/// (α, β) for a fixed signal-Kerr shift pair.
fn response_at_shifts(
    delta: f64,
    bias: &PumpBias,
    params: &ModeParams,
    t_a: f64,
    t_b: f64,
) -> Result<(Complex64, Complex64), SolverError> {
    let (sig_a, sig_b) = stark_shifts(bias, params);
    let a = Complex64::new(params.kappa_a / 2.0, -(delta + sig_a + t_a));
    let b = Complex64::new(
        params.kappa_b / 2.0,
        -(-delta + bias.epsilon + sig_b + t_b),
    );
    let q = params.g * params.g * bias.n_p;
    linear::scattering_pair(a, b, q, bias.n_p, params)
}

/// The fixed-point map F(t): shift pair regenerated from the response the
/// trial shifts produce.
fn shift_map(
    delta: f64,
    bias: &PumpBias,
    n_a: f64,
    params: &ModeParams,
    t_a: f64,
    t_b: f64,
) -> Result<(f64, f64), SolverError> {
    let (alpha, beta) = response_at_shifts(delta, bias, params, t_a, t_b)?;
    let m = (1.0 + alpha).norm_sqr();
    let b2 = beta.norm_sqr();
    let ratio = params.kappa_a / params.kappa_b;
    let k = &params.kerr;
    Ok((
        k.aa * m * n_a + 2.0 * k.ab * ratio * b2 * n_a,
        k.bb * ratio * b2 * n_a + 2.0 * k.ab * m * n_a,
    ))
}

/// Back-substitution residual of the solved pair in the full Langevin
/// equations, relative to the drive term √κ_a. Evaluated with the shifts
/// regenerated from (α, β), not the trial values, so an unconverged shift
/// pair shows up here.
fn back_substitution_residual(
    delta: f64,
    bias: &PumpBias,
    n_a: f64,
    params: &ModeParams,
    alpha: Complex64,
    beta: Complex64,
) -> f64 {
    let (sig_a, sig_b) = stark_shifts(bias, params);
    let m = (1.0 + alpha).norm_sqr();
    let b2 = beta.norm_sqr();
    let ratio = params.kappa_a / params.kappa_b;
    let k = &params.kerr;
    let t_a = k.aa * m * n_a + 2.0 * k.ab * ratio * b2 * n_a;
    let t_b = k.bb * ratio * b2 * n_a + 2.0 * k.ab * m * n_a;
    let (ka, kb) = (params.kappa_a, params.kappa_b);
    let gc = params.g.abs() * bias.n_p.sqrt();
    let a = Complex64::new(ka / 2.0, -(delta + sig_a + t_a));
    let b = Complex64::new(kb / 2.0, -(-delta + bias.epsilon + sig_b + t_b));
    let r1 = a * (1.0 + alpha) / ka.sqrt() + Complex64::new(0.0, gc / kb.sqrt()) * beta
        - ka.sqrt();
    let r2 =
        b * beta.conj() / kb.sqrt() + Complex64::new(0.0, gc / ka.sqrt()) * (1.0 + alpha.conj());
    (r1.norm().max(r2.norm())) / ka.sqrt()
}

/// Small-signal (n_a = 0) fourth-order response: the third-order closed
/// form evaluated at Stark-shifted detunings Δ_m = Δ + 8K_ac·n_p and
/// Δ_n = -Δ + ε + 8K_bc·n_p.
pub fn small_signal_4(
    delta: f64,
    bias: &PumpBias,
    params: &ModeParams,
) -> Result<(Complex64, Complex64), SolverError> {
    response_at_shifts(delta, bias, params, 0.0, 0.0)
}

/// Small-signal reflected power gain of the fourth-order response.
pub fn small_signal_gain_4(
    delta: f64,
    bias: &PumpBias,
    params: &ModeParams,
) -> Result<f64, SolverError> {
    small_signal_4(delta, bias, params).map(|(alpha, _)| alpha.norm_sqr())
}

/// Critical pump photon number including the pump-induced Stark shifts,
/// solving n = (κ_aκ_b/4g²)·(1 + (2(ε + 8(K_ac+K_bc)n)/(κ_a+κ_b))²)
/// self-consistently; the smallest positive solution is the physical one.
pub fn critical_pump_photons_4(epsilon: f64, params: &ModeParams) -> f64 {
    let base = params.kappa_a * params.kappa_b / (4.0 * params.g * params.g);
    if !base.is_finite() {
        return f64::INFINITY;
    }
    let ks = params.kappa_a + params.kappa_b;
    let kc = 8.0 * (params.kerr.ac + params.kerr.bc);
    let f = |n: f64| {
        let e = epsilon + kc * n;
        let t = 2.0 * e / ks;
        n - base * (1.0 + t * t)
    };
    // f(0) < 0; march outward for the first sign change, then bisect.
    let mut hi = base;
    let mut lo = 0.0;
    for _ in 0..200 {
        if f(hi) > 0.0 {
            break;
        }
        lo = hi;
        hi *= 1.25;
    }
    if f(hi) <= 0.0 {
        return f64::INFINITY;
    }
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Signal detuning of peak small-signal gain for the fourth-order
/// response: numeric maximizer (consumed downstream) plus the first-order
/// analytic expansion.
///
/// Writing σ = σ_a + σ_b for the summed Stark shifts, κ_{a,b} = κ ∓ Δκ/2,
/// and d = Δ_m - Δ_n, the stationarity condition of the gain denominator
/// is exactly
///
/// ```text
/// d·(4g²n_p + κ² + (Δκ/2)² - S² + d²) + S·κ·Δκ = 0,   S = σ + ε.
/// ```
///
/// The analytic branch solves this cubic for d at ε = 0 and attaches the
/// implicit first-order slope in ε, giving
/// Δ_maxG = (σ_b - σ_a)/2 + d₀/2 + (1 + d₁)·ε/2 with
/// d₁ = (2σd₀ - κΔκ)/(4g²n_p + κ² + (Δκ/2)² - σ² + 3d₀²). For Δκ = 0 and
/// K_ac = K_bc this collapses to ε/2 with no pump dependence; for Δκ = 0
/// alone the intercept is 4(K_bc - K_ac)·n_p.
pub fn peak_gain_detuning_4(
    bias: &PumpBias,
    params: &ModeParams,
) -> Result<PeakGainDetuning, SolverError> {
    let (sig_a, sig_b) = stark_shifts(bias, params);
    let kbar = 0.5 * (params.kappa_a + params.kappa_b);
    let dk = params.kappa_b - params.kappa_a;
    let s0 = sig_a + sig_b;
    let q = 4.0 * params.g * params.g * bias.n_p + kbar * kbar + 0.25 * dk * dk;
    let x = q - s0 * s0;
    // Monotone cubic in d (x > 0 on the sub-critical branch): Newton from 0.
    let mut d0 = 0.0;
    for _ in 0..80 {
        let f = d0 * (x + d0 * d0) + s0 * kbar * dk;
        let fp = x + 3.0 * d0 * d0;
        let next = d0 - f / fp;
        if (next - d0).abs() <= 1e-14 * d0.abs().max(1.0) {
            d0 = next;
            break;
        }
        d0 = next;
    }
    let d1 = (2.0 * s0 * d0 - kbar * dk) / (x + 3.0 * d0 * d0);
    let analytic = 0.5 * (sig_b - sig_a) + 0.5 * d0 + 0.5 * (1.0 + d1) * bias.epsilon;

    let gain = |d: f64| small_signal_gain_4(d, bias, params).unwrap_or(f64::NEG_INFINITY);
    let (numeric, peak) = linear::maximize(gain, analytic, 4.0 * kbar)?;
    Ok(PeakGainDetuning {
        numeric,
        analytic,
        gain: peak,
    })
}

/// Adaptive continuation settings for the nonlinear solve and the signal
/// sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationPolicy {
    /// Convergence target for the back-substitution residual (relative to
    /// the drive term).
    pub tolerance: f64,
    /// Newton iteration cap per solve.
    pub max_iterations: u32,
    /// Smallest admissible Newton damping factor.
    pub damping_floor: f64,
    /// Step growth applied after `grow_after` consecutive successes.
    pub step_growth: f64,
    pub grow_after: u32,
    /// Fraction of the continuation span below which a collapsing step is
    /// reported as a fold.
    pub min_step_fraction: f64,
}

impl Default for ContinuationPolicy {
    fn default() -> Self {
        ContinuationPolicy {
            tolerance: 1e-12,
            max_iterations: 200,
            damping_floor: 1.0 / 64.0,
            step_growth: 1.5,
            grow_after: 3,
            min_step_fraction: 1e-6,
        }
    }
}

/// Solution branch of a converged response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Continuously connected to the n_a = 0 solution in the sweep
    /// direction.
    Lower,
    /// Reached after a fold consumed the connected branch.
    Upper,
    /// Solver did not converge; amplitudes are the last iterate.
    NotConverged,
}

impl Branch {
    /// Stable lower-case label used in CSV output.
    pub fn label(&self) -> &'static str {
        match self {
            Branch::Lower => "lower",
            Branch::Upper => "upper",
            Branch::NotConverged => "not-converged",
        }
    }
}

/// Converged drive response at one (Δ, n_a) point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveResponse {
    /// Reflection amplitude a_out/a_in.
    pub alpha: Complex64,
    /// Transmission amplitude b_out†/a_in.
    pub beta: Complex64,
    /// Converged total Kerr shift of the mode-a effective detuning,
    /// Stark plus signal terms (rad/s).
    pub delta_a: f64,
    /// Same for the mode-b equation (rad/s).
    pub delta_b: f64,
    pub branch: Branch,
    /// Newton iterations spent across the continuation.
    pub iterations: u32,
    /// Final back-substitution residual relative to √κ_a.
    pub residual: f64,
}

impl DriveResponse {
    /// Reflected power gain |α|².
    pub fn gain(&self) -> f64 {
        self.alpha.norm_sqr()
    }
}

/// Outcome of one damped-Newton solve at fixed n_a.
struct NewtonOutcome {
    t_a: f64,
    t_b: f64,
    iterations: u32,
    converged: bool,
}

/// Damped 2-D Newton on R(t) = t - F(t) with a finite-difference Jacobian.
/// The damping factor halves whenever a step fails to reduce the residual
/// and recovers on success, with the floor from the policy.
fn newton_solve(
    delta: f64,
    bias: &PumpBias,
    n_a: f64,
    params: &ModeParams,
    seed: (f64, f64),
    policy: &ContinuationPolicy,
) -> Result<NewtonOutcome, SolverError> {
    let kbar = 0.5 * (params.kappa_a + params.kappa_b);
    let mut t = [seed.0, seed.1];
    let map = |t: &[f64; 2]| -> Result<[f64; 2], SolverError> {
        let (fa, fb) = shift_map(delta, bias, n_a, params, t[0], t[1])?;
        Ok([t[0] - fa, t[1] - fb])
    };
    let residual_ok = |t: &[f64; 2]| -> Result<f64, SolverError> {
        let (alpha, beta) = response_at_shifts(delta, bias, params, t[0], t[1])?;
        Ok(back_substitution_residual(
            delta, bias, n_a, params, alpha, beta,
        ))
    };
    let mut r = map(&t)?;
    let mut damping = 1.0f64;
    for iter in 0..policy.max_iterations {
        let back = residual_ok(&t)?;
        if back < policy.tolerance {
            return Ok(NewtonOutcome {
                t_a: t[0],
                t_b: t[1],
                iterations: iter,
                converged: true,
            });
        }
        // Finite-difference Jacobian of R, column by column.
        let mut jac = [[0.0f64; 2]; 2];
        for col in 0..2 {
            let h = 1e-7 * kbar.max(t[col].abs());
            let mut tp = t;
            tp[col] += h;
            let rp = map(&tp)?;
            jac[0][col] = (rp[0] - r[0]) / h;
            jac[1][col] = (rp[1] - r[1]) / h;
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let step = [
            (r[0] * jac[1][1] - r[1] * jac[0][1]) / det,
            (r[1] * jac[0][0] - r[0] * jac[1][0]) / det,
        ];
        let norm = |v: &[f64; 2]| v[0].hypot(v[1]);
        let r_norm = norm(&r);
        loop {
            let candidate = [t[0] - damping * step[0], t[1] - damping * step[1]];
            match map(&candidate) {
                Ok(rc) if norm(&rc) <= r_norm || damping <= policy.damping_floor => {
                    t = candidate;
                    r = rc;
                    break;
                }
                _ => {
                    if damping <= policy.damping_floor {
                        t = candidate;
                        r = map(&candidate)?;
                        break;
                    }
                    damping *= 0.5;
                }
            }
        }
        damping = (damping * 2.0).min(1.0);
    }
    let back = residual_ok(&t).unwrap_or(f64::INFINITY);
    Ok(NewtonOutcome {
        t_a: t[0],
        t_b: t[1],
        iterations: policy.max_iterations,
        converged: back < policy.tolerance,
    })
}

/// [`picard_relax`] from a deterministic seed ladder, for fold landings
/// where the relaxation basin from the dead branch alone is too narrow.
fn picard_multistart(
    delta: f64,
    bias: &PumpBias,
    n_a: f64,
    params: &ModeParams,
    t0: (f64, f64),
    policy: &ContinuationPolicy,
) -> Option<(f64, f64)> {
    let kbar = 0.5 * (params.kappa_a + params.kappa_b);
    let seeds = [
        t0,
        (0.0, 0.0),
        (2.0 * t0.0, 2.0 * t0.1),
        (t0.0 + kbar, t0.1 + kbar),
        (kbar, kbar),
    ];
    for seed in seeds {
        if let Some(t) = picard_relax(delta, bias, n_a, params, seed, policy) {
            return Some(t);
        }
    }
    None
}

/// Damped fixed-point relaxation t ← t + λ(F(t) - t). Only attracting
/// roots of the map survive this iteration, which is what makes it the
/// branch selector after a fold: started near the vanished branch it
/// relaxes onto the remaining attractor.
fn picard_relax(
    delta: f64,
    bias: &PumpBias,
    n_a: f64,
    params: &ModeParams,
    seed: (f64, f64),
    policy: &ContinuationPolicy,
) -> Option<(f64, f64)> {
    let kbar = 0.5 * (params.kappa_a + params.kappa_b);
    let mut t = [seed.0, seed.1];
    let mut lambda = 0.5f64;
    let mut last = f64::INFINITY;
    for _ in 0..4000 {
        let (fa, fb) = shift_map(delta, bias, n_a, params, t[0], t[1]).ok()?;
        let r = (fa - t[0]).hypot(fb - t[1]);
        if r < 1e-9 * kbar {
            // Close enough for Newton to finish the job.
            let out = newton_solve(delta, bias, n_a, params, (t[0], t[1]), policy).ok()?;
            if out.converged {
                return Some((out.t_a, out.t_b));
            }
            return None;
        }
        if r > last {
            lambda = (lambda * 0.7).max(1.0 / 256.0);
        }
        last = r;
        t = [t[0] + lambda * (fa - t[0]), t[1] + lambda * (fb - t[1])];
    }
    None
}

/// Internal continuation in n_a from a known solution toward a target,
/// with adaptive steps, fold detection on step collapse, and attractor
/// relaxation across detected folds.
struct Continuation<'p> {
    delta: f64,
    bias: PumpBias,
    params: &'p ModeParams,
    policy: ContinuationPolicy,
    /// Span used to define the minimum admissible step.
    span: f64,
    t: (f64, f64),
    n_a: f64,
    /// Shift change per unit n_a over the last accepted step; scales the
    /// branch-jump guard so steep but smooth sections keep tracking.
    rate: f64,
    pub iterations: u32,
    pub folds: Vec<f64>,
    pub on_upper_branch: bool,
}

impl<'p> Continuation<'p> {
    fn new(
        delta: f64,
        bias: PumpBias,
        params: &'p ModeParams,
        policy: ContinuationPolicy,
        span: f64,
    ) -> Self {
        Continuation {
            delta,
            bias,
            params,
            policy,
            span,
            t: (0.0, 0.0),
            n_a: 0.0,
            rate: 0.0,
            iterations: 0,
            folds: Vec::new(),
            on_upper_branch: false,
        }
    }

    /// Largest shift jump accepted as ordinary branch tracking for a step
    /// of the given size; beyond it a converged solve is treated as having
    /// skipped to another branch. A true fold keeps a finite jump as the
    /// step shrinks, which is what eventually collapses the step.
    fn trust_radius(&self, step: f64) -> f64 {
        let kbar = 0.5 * (self.params.kappa_a + self.params.kappa_b);
        (12.0 * self.rate * step).max(0.02 * kbar)
    }

    /// Advances to `target` n_a. Returns false if the solver failed even
    /// after fold handling.
    fn advance_to(&mut self, target: f64) -> Result<bool, SolverError> {
        let policy = self.policy;
        let mut step = (target - self.n_a).abs().max(self.span * 1e-12);
        let direction = if target >= self.n_a { 1.0 } else { -1.0 };
        let min_step = self.span * policy.min_step_fraction;
        let mut successes = 0u32;
        while (target - self.n_a).abs() > 0.0 {
            let next = if (target - self.n_a).abs() <= step {
                target
            } else {
                self.n_a + direction * step
            };
            let out = newton_solve(self.delta, &self.bias, next, self.params, self.t, &policy)?;
            self.iterations += out.iterations;
            let change = (out.t_a - self.t.0).hypot(out.t_b - self.t.1);
            let taken = (next - self.n_a).abs().max(self.span * 1e-15);
            if out.converged && change <= self.trust_radius(taken) {
                self.t = (out.t_a, out.t_b);
                self.n_a = next;
                self.rate = change / taken;
                successes += 1;
                if successes >= policy.grow_after {
                    step *= policy.step_growth;
                    successes = 0;
                }
                continue;
            }
            successes = 0;
            if step > min_step {
                step *= 0.5;
                continue;
            }
            // Step collapsed: the tracked branch ends here. Report the
            // fold and relax onto the surviving attractor at this n_a.
            // Walking up this lands on the shifted (upper) branch; walking
            // down it rejoins the branch connected to n_a = 0.
            self.folds.push(next);
            self.on_upper_branch = direction > 0.0;
            match picard_multistart(self.delta, &self.bias, next, self.params, self.t, &policy) {
                Some(t) => {
                    // The landing branch has an unknown slope; let the next
                    // accepted step re-estimate it.
                    self.rate = (t.0 - self.t.0).hypot(t.1 - self.t.1) / min_step;
                    self.t = t;
                    self.n_a = next;
                    step = (target - self.n_a).abs().max(min_step);
                }
                None => return Ok(false),
            }
        }
        Ok(true)
    }

    fn response(&self) -> Result<DriveResponse, SolverError> {
        let (alpha, beta) =
            response_at_shifts(self.delta, &self.bias, self.params, self.t.0, self.t.1)?;
        let residual =
            back_substitution_residual(self.delta, &self.bias, self.n_a, self.params, alpha, beta);
        let (sig_a, sig_b) = stark_shifts(&self.bias, self.params);
        Ok(DriveResponse {
            alpha,
            beta,
            delta_a: sig_a + self.t.0,
            delta_b: sig_b + self.t.1,
            branch: if self.on_upper_branch {
                Branch::Upper
            } else {
                Branch::Lower
            },
            iterations: self.iterations,
            residual,
        })
    }
}

/// Solves the fourth-order response at signal detuning `delta` and input
/// photon number `n_a`, by continuation from the small-signal solution.
///
/// The returned branch is `Lower` when the solution is continuously
/// connected to n_a = 0 and `Upper` when a fold was crossed on the way up.
pub fn solve_kerr_response(
    delta: f64,
    bias: &PumpBias,
    n_a: f64,
    params: &ModeParams,
    policy: &ContinuationPolicy,
) -> Result<DriveResponse, SolverError> {
    if !(n_a >= 0.0) || !n_a.is_finite() {
        return Err(SolverError::InvalidInput(format!(
            "n_a must be finite and >= 0, got {n_a:e}"
        )));
    }
    let mut cont = Continuation::new(delta, *bias, params, *policy, n_a.max(1e-300));
    if !cont.advance_to(n_a)? {
        return Err(SolverError::NotConverged {
            iterations: cont.iterations,
            residual: f64::INFINITY,
        });
    }
    let response = cont.response()?;
    if response.residual >= policy.tolerance.max(1e-10) {
        return Err(SolverError::NotConverged {
            iterations: response.iterations,
            residual: response.residual,
        });
    }
    Ok(response)
}

/// Sweep direction for [`sweep_signal_power`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDirection {
    Up,
    Down,
}

/// One point of a signal-power sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub n_a: f64,
    pub response: DriveResponse,
}

/// A directed signal-power sweep at fixed signal detuning.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSweep {
    pub direction: SweepDirection,
    pub points: Vec<SweepPoint>,
    /// n_a values at which the tracked branch folded.
    pub folds: Vec<f64>,
}

/// Continuation sweep over a strictly monotone n_a grid at fixed signal
/// detuning, reusing the previous shift pair as the seed for each point.
///
/// Up sweeps start from the small-signal solution; down sweeps first ride
/// the continuation to the top of the grid (landing on whatever branch
/// survives up there, exactly as an upward power ramp would) and then walk
/// back down. Fold locations are recorded; points past a fold carry the
/// `Upper` branch label.
pub fn sweep_signal_power(
    delta: f64,
    bias: &PumpBias,
    grid: &[f64],
    direction: SweepDirection,
    params: &ModeParams,
    policy: &ContinuationPolicy,
) -> Result<SignalSweep, SolverError> {
    if grid.len() < 2 {
        return Err(SolverError::InvalidInput(
            "signal sweep needs at least two grid points".into(),
        ));
    }
    for w in grid.windows(2) {
        if w[1] <= w[0] {
            return Err(SolverError::InvalidInput(
                "signal grid must be strictly increasing".into(),
            ));
        }
    }
    if grid[0] < 0.0 {
        return Err(SolverError::InvalidInput(
            "signal grid must be non-negative".into(),
        ));
    }
    let span = grid[grid.len() - 1] - grid[0];
    let mut cont = Continuation::new(delta, *bias, params, *policy, span);
    let mut points = Vec::with_capacity(grid.len());

    let order: Vec<f64> = match direction {
        SweepDirection::Up => grid.to_vec(),
        SweepDirection::Down => {
            // Ride up through the grid first, exactly like an upward power
            // ramp; the down sweep then starts on the branch the system
            // actually occupies at high power. Folds seen on the way up
            // belong to the ramp, not the reported sweep, but the branch
            // flag they set does.
            for &n_a in grid {
                cont.advance_to(n_a)?;
            }
            cont.folds.clear();
            grid.iter().rev().copied().collect()
        }
    };
    for &n_a in &order {
        let ok = cont.advance_to(n_a)?;
        let mut response = cont.response()?;
        if !ok || response.residual >= policy.tolerance.max(1e-10) {
            response.branch = Branch::NotConverged;
        }
        points.push(SweepPoint { n_a, response });
    }
    if direction == SweepDirection::Down {
        points.reverse();
    }
    Ok(SignalSweep {
        direction,
        points,
        folds: cont.folds,
    })
}

/// A root of the fixed-point map located by the brute-force grid scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRoot {
    pub t_a: f64,
    pub t_b: f64,
    /// Fixed-point residual ‖t - F(t)‖ at the refined location (rad/s).
    pub residual: f64,
    /// Reflected power gain of the response at this root.
    pub gain: f64,
}

/// Brute-force scan of the 2-D fixed-point residual over a bounded shift
/// grid, with recursive grid-zoom refinement of every local minimum.
///
/// This route is independent of the Newton solver: candidate cells are
/// local minima of ‖t - F(t)‖ on an `n`×`n` grid over
/// `[0, bound_a]×[0, bound_b]`, and refinement only ever re-grids a
/// shrinking box around each minimum. Minima that fail to refine below
/// `accept` (as a fraction of the mean linewidth) are discarded. Returned
/// roots are deduplicated and sorted by `t_a`.
pub fn scan_fixed_point_map(
    delta: f64,
    bias: &PumpBias,
    n_a: f64,
    params: &ModeParams,
    bound_a: f64,
    bound_b: f64,
    n: usize,
    accept: f64,
) -> Vec<ScanRoot> {
    let kbar = 0.5 * (params.kappa_a + params.kappa_b);
    let residual = |t_a: f64, t_b: f64| -> f64 {
        match shift_map(delta, bias, n_a, params, t_a, t_b) {
            Ok((fa, fb)) => (fa - t_a).hypot(fb - t_b),
            Err(_) => f64::INFINITY,
        }
    };
    let mut grid = vec![0.0f64; n * n];
    let (ha, hb) = (bound_a / (n - 1) as f64, bound_b / (n - 1) as f64);
    for i in 0..n {
        for j in 0..n {
            grid[i * n + j] = residual(ha * i as f64, hb * j as f64);
        }
    }
    let mut roots: Vec<ScanRoot> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v = grid[i * n + j];
            if !v.is_finite() {
                continue;
            }
            let mut is_min = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if ii < 0 || jj < 0 || ii >= n as i64 || jj >= n as i64 {
                        continue;
                    }
                    if grid[ii as usize * n + jj as usize] < v {
                        is_min = false;
                    }
                }
            }
            if !is_min {
                continue;
            }
            // Zoom refinement: re-grid an 11x11 box shrinking around the
            // minimum until the cell is far below the target resolution.
            let (mut ca, mut cb) = (ha * i as f64, hb * j as f64);
            let (mut wa, mut wb) = (2.0 * ha, 2.0 * hb);
            let mut best = v;
            for _ in 0..24 {
                let m = 11usize;
                let (sa, sb) = (wa / (m - 1) as f64, wb / (m - 1) as f64);
                let (mut bi, mut bj) = (0usize, 0usize);
                best = f64::INFINITY;
                for ii in 0..m {
                    for jj in 0..m {
                        let ta = ca - wa / 2.0 + sa * ii as f64;
                        let tb = cb - wb / 2.0 + sb * jj as f64;
                        let r = residual(ta, tb);
                        if r < best {
                            best = r;
                            bi = ii;
                            bj = jj;
                        }
                    }
                }
                ca += -wa / 2.0 + sa * bi as f64;
                cb += -wb / 2.0 + sb * bj as f64;
                wa *= 0.4;
                wb *= 0.4;
                if wa < 1e-12 * kbar && wb < 1e-12 * kbar {
                    break;
                }
            }
            if best > accept * kbar {
                continue;
            }
            if roots
                .iter()
                .any(|r| (r.t_a - ca).abs() < 1e-3 * kbar && (r.t_b - cb).abs() < 1e-3 * kbar)
            {
                continue;
            }
            let gain = response_at_shifts(delta, bias, params, ca, cb)
                .map(|(alpha, _)| alpha.norm_sqr())
                .unwrap_or(f64::NAN);
            roots.push(ScanRoot {
                t_a: ca,
                t_b: cb,
                residual: best,
                gain,
            });
        }
    }
    roots.sort_by(|x, y| x.t_a.total_cmp(&y.t_a));
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::KerrMatrix;
    use crate::linear::{reflection_3, reflection_gain_3};
    use crate::units::hz_to_angular;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn params_with_kerr(kerr: KerrMatrix) -> ModeParams {
        let mut p = crate::linear::tests::synthetic_params(5.0, 15.0, 1.3844);
        p.kerr = kerr;
        p
    }

    fn demo_kerr() -> KerrMatrix {
        // Kerr rates close to the bundled demo device.
        let hz = |v: f64| hz_to_angular(v);
        KerrMatrix {
            aa: hz(116.2),
            bb: hz(534.5),
            cc: hz(4713.9),
            ab: hz(249.2),
            ac: hz(740.0),
            bc: hz(1587.3),
        }
    }

    #[test]
    fn zero_signal_reduces_to_small_signal_form() {
        let params = params_with_kerr(demo_kerr());
        let bias = PumpBias {
            epsilon: hz_to_angular(-2.0e6),
            n_p: 8.0,
        };
        let delta = hz_to_angular(-0.7e6);
        let r = solve_kerr_response(delta, &bias, 0.0, &params, &ContinuationPolicy::default())
            .unwrap();
        let g = small_signal_gain_4(delta, &bias, &params).unwrap();
        assert_relative_eq!(r.gain(), g, max_relative = 1e-12);
        assert_eq!(r.branch, Branch::Lower);
    }

    #[test]
    fn no_kerr_means_no_saturation() {
        let params = params_with_kerr(KerrMatrix::ZERO);
        let bias = PumpBias {
            epsilon: hz_to_angular(1.0e6),
            n_p: 6.0,
        };
        let delta = hz_to_angular(0.4e6);
        let reference = reflection_gain_3(delta, &bias, &params).unwrap();
        for n_a in [0.0, 1e-3, 1.0, 1e3] {
            let r =
                solve_kerr_response(delta, &bias, n_a, &params, &ContinuationPolicy::default())
                    .unwrap();
            assert_relative_eq!(r.gain(), reference, max_relative = 1e-12);
        }
    }

    #[test]
    fn stark_free_small_signal_matches_third_order() {
        let mut kerr = demo_kerr();
        kerr.ac = 0.0;
        kerr.bc = 0.0;
        let params = params_with_kerr(kerr);
        let bias = PumpBias {
            epsilon: hz_to_angular(3.0e6),
            n_p: 5.0,
        };
        for dm in [-3.0, 0.0, 1.5] {
            let d = hz_to_angular(dm * 1e6);
            let (a4, b4) = small_signal_4(d, &bias, &params).unwrap();
            let (a3, b3) = reflection_3(d, &bias, &params).unwrap();
            assert_relative_eq!(a4.re, a3.re, max_relative = 1e-14);
            assert_relative_eq!(a4.im, a3.im, max_relative = 1e-14);
            assert_relative_eq!(b4.norm(), b3.norm(), max_relative = 1e-14);
        }
    }

    #[test]
    fn equal_cross_kerr_is_a_pure_detuning_substitution() {
        // With K_ac = K_bc = K the small-signal map is the third-order map
        // at Δ → Δ + 8K·n_p, ε → ε + 16K·n_p.
        let k = hz_to_angular(900.0);
        let kerr = KerrMatrix {
            ac: k,
            bc: k,
            ..KerrMatrix::ZERO
        };
        let params = params_with_kerr(kerr);
        let n_p = 7.3;
        for (dm, em) in [(0.0, 0.0), (-1.2, 2.0), (0.8, -3.0)] {
            let delta = hz_to_angular(dm * 1e6);
            let eps = hz_to_angular(em * 1e6);
            let g4 = small_signal_gain_4(delta, &PumpBias { epsilon: eps, n_p }, &params).unwrap();
            let g3 = reflection_gain_3(
                delta + 8.0 * k * n_p,
                &PumpBias {
                    epsilon: eps + 16.0 * k * n_p,
                    n_p,
                },
                &params,
            )
            .unwrap();
            assert_relative_eq!(g4, g3, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_pump_unit_gain() {
        let params = params_with_kerr(demo_kerr());
        let bias = PumpBias {
            epsilon: hz_to_angular(-4.0e6),
            n_p: 0.0,
        };
        let g = small_signal_gain_4(hz_to_angular(1.0e6), &bias, &params).unwrap();
        assert_relative_eq!(g, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn peak_detuning_equal_cross_kerr_equal_linewidths() {
        // K_ac = K_bc and Δκ = 0: Δ_maxG = ε/2 exactly, independent of n_p.
        let k = hz_to_angular(700.0);
        let kerr = KerrMatrix {
            ac: k,
            bc: k,
            aa: hz_to_angular(100.0),
            bb: hz_to_angular(100.0),
            ab: hz_to_angular(100.0),
            cc: hz_to_angular(1000.0),
        };
        let mut params = crate::linear::tests::synthetic_params(10.0, 10.0, 1.3844);
        params.kerr = kerr;
        let eps = hz_to_angular(1.5e6);
        let mut values = Vec::new();
        for n_p in [1.0, 4.0, 9.0] {
            let pk = peak_gain_detuning_4(&PumpBias { epsilon: eps, n_p }, &params).unwrap();
            assert_relative_eq!(pk.analytic, eps / 2.0, max_relative = 1e-9);
            values.push(pk.analytic);
        }
        assert_relative_eq!(values[0], values[2], max_relative = 1e-9);
    }

    #[test]
    fn peak_detuning_intercept_tracks_cross_kerr_difference() {
        // Δκ = 0, ε = 0: both branches sit at the stationary point of the
        // Stark-shifted profile, 4(K_bc - K_ac)·n_p from the bare origin.
        let kerr = KerrMatrix {
            ac: hz_to_angular(500.0),
            bc: hz_to_angular(2000.0),
            ..KerrMatrix::ZERO
        };
        let mut params = crate::linear::tests::synthetic_params(10.0, 10.0, 1.3844);
        params.kerr = kerr;
        let n_p = 6.0;
        let bias = PumpBias { epsilon: 0.0, n_p };
        let pk = peak_gain_detuning_4(&bias, &params).unwrap();
        let expected = 4.0 * (kerr.bc - kerr.ac) * n_p;
        assert_relative_eq!(pk.analytic, expected, max_relative = 1e-9);
        assert_abs_diff_eq!(pk.numeric, expected, epsilon = params.kappa_a * 1e-5);
    }

    #[test]
    fn peak_detuning_numeric_and_analytic_agree_to_first_order() {
        let params = params_with_kerr(demo_kerr());
        let n_p = 8.0;
        let res = |eps_mhz: f64| {
            let bias = PumpBias {
                epsilon: hz_to_angular(eps_mhz * 1e6),
                n_p,
            };
            let pk = peak_gain_detuning_4(&bias, &params).unwrap();
            (pk.numeric - pk.analytic).abs()
        };
        let (r2, r1) = (res(1.0), res(0.5));
        assert!(
            r2 / r1 > 3.0,
            "expected at least quadratic shrinkage, got {r2:.3e}/{r1:.3e}"
        );
    }

    #[test]
    fn converged_responses_back_substitute() {
        let params = params_with_kerr(demo_kerr());
        let bias = PumpBias {
            epsilon: hz_to_angular(-2.0e6),
            n_p: 8.3,
        };
        for (dm, n_a) in [(-0.5, 0.02), (-0.5, 5.0), (0.3, 40.0), (-1.0, 300.0)] {
            let r = solve_kerr_response(
                hz_to_angular(dm * 1e6),
                &bias,
                n_a,
                &params,
                &ContinuationPolicy::default(),
            )
            .unwrap();
            assert!(r.residual < 1e-10, "residual {:.3e}", r.residual);
        }
    }

    #[test]
    fn sweep_flat_without_kerr() {
        let params = params_with_kerr(KerrMatrix::ZERO);
        let bias = PumpBias {
            epsilon: 0.0,
            n_p: 6.0,
        };
        let grid: Vec<f64> = (0..40).map(|i| 1e-2 * 1.3f64.powi(i)).collect();
        let sweep = sweep_signal_power(
            0.0,
            &bias,
            &grid,
            SweepDirection::Up,
            &params,
            &ContinuationPolicy::default(),
        )
        .unwrap();
        let g0 = sweep.points[0].response.gain();
        for p in &sweep.points {
            assert_relative_eq!(p.response.gain(), g0, max_relative = 1e-12);
        }
        assert!(sweep.folds.is_empty());
    }

    #[test]
    fn up_and_down_sweeps_agree_without_folds() {
        let params = params_with_kerr(demo_kerr());
        let bias = PumpBias {
            epsilon: hz_to_angular(1.0e6),
            n_p: 7.0,
        };
        let grid: Vec<f64> = (0..60).map(|i| 1e-2 * 1.25f64.powi(i)).collect();
        let delta = hz_to_angular(0.3e6);
        let policy = ContinuationPolicy::default();
        let up = sweep_signal_power(delta, &bias, &grid, SweepDirection::Up, &params, &policy)
            .unwrap();
        let down =
            sweep_signal_power(delta, &bias, &grid, SweepDirection::Down, &params, &policy)
                .unwrap();
        assert!(up.folds.is_empty() && down.folds.is_empty());
        for (u, d) in up.points.iter().zip(down.points.iter()) {
            assert_relative_eq!(u.response.gain(), d.response.gain(), max_relative = 1e-9);
        }
    }

    #[test]
    fn scan_oracle_finds_the_solver_root() {
        let params = params_with_kerr(demo_kerr());
        let bias = PumpBias {
            epsilon: hz_to_angular(-2.0e6),
            n_p: 8.3,
        };
        let delta = hz_to_angular(-0.6e6);
        let kbar = 0.5 * (params.kappa_a + params.kappa_b);
        for n_a in [3.0, 60.0] {
            let solved =
                solve_kerr_response(delta, &bias, n_a, &params, &ContinuationPolicy::default())
                    .unwrap();
            let (sig_a, sig_b) = stark_shifts(&bias, &params);
            let roots = scan_fixed_point_map(
                delta,
                &bias,
                n_a,
                &params,
                2.0 * kbar,
                2.0 * kbar,
                160,
                1e-4,
            );
            assert!(!roots.is_empty());
            let target = (solved.delta_a - sig_a, solved.delta_b - sig_b);
            let hit = roots.iter().any(|r| {
                (r.t_a - target.0).abs() < kbar / 1e4 && (r.t_b - target.1).abs() < kbar / 1e4
            });
            assert!(hit, "no scan root within resolution of the solver root");
        }
    }
}
