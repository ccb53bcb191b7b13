//! Subcommand front end: parses the run configuration, dispatches to the
//! analysis layer, and writes plot-ready CSV files.
//!
//! Determinism contract: identical configs and flags produce byte-identical
//! CSVs regardless of `--threads`; all rows are emitted in grid order and
//! floats are formatted at the configured precision.

use crate::analysis::{
    self, bias_contour, find_bias_for_gain, find_optimal_biases, kerr_scaling_study,
    saturation_map, signal_grid, transmission_map, SaturationCurve,
};
use crate::circuit::{derive_mode_params, ModeParams};
use crate::config::{parse_config, ConfigError, RunConfig};
use crate::kerr::{sweep_signal_power, SweepDirection};
use crate::linear::PumpBias;
use crate::units::{
    angular_to_hz, dbm_to_watts, gain_to_db, photon_number_from_power, power_from_photon_number,
    watts_to_dbm,
};
use clap::{Parser, Subcommand, ValueEnum};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Exit code for configuration problems.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code when solver failures affect more than 10% of grid points.
pub const EXIT_SOLVER: i32 = 3;
/// Failure fraction beyond which a run is reported as a solver failure.
const FAILURE_BUDGET: f64 = 0.10;

#[derive(Debug, Parser)]
#[command(
    name = "jpc-kerr",
    about = "Gain and saturation modeling for Kerr-limited Josephson parametric converters",
    version
)]
pub struct Cli {
    /// Path to the JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config output block).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Pump detunings in MHz, replacing the configured grid.
    #[arg(long = "epsilon-mhz", global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub epsilon_mhz: Vec<f64>,
    /// Signal powers in dBm, replacing the configured signal list where a
    /// command takes discrete powers.
    #[arg(long = "signal-dbm", global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub signal_dbm: Vec<f64>,
    /// Sweep direction for saturation runs.
    #[arg(long = "sweep-direction", global = true, value_enum, default_value_t = Direction::Up)]
    pub sweep_direction: Direction,
    /// Worker threads for per-detuning fan-out (0 = one per core).
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    Up,
    Down,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the derived operating-point parameters.
    DeriveParams,
    /// Small-signal max gain over a (pump detuning, pump photon) grid.
    GainMap,
    /// Iso-gain pump contours for a list of signal powers.
    BiasContour,
    /// Gain vs signal power at the gain-target bias for every detuning.
    Saturate,
    /// Identify the monotone and gain-rise optimum bias points.
    Optimize,
    /// Saturation-power shift under global Kerr scaling.
    KerrScaling,
    /// Transmission amplitude and relative phase vs signal power.
    PhaseMap,
}

/// Runs the CLI and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let Some(config_path) = cli.config.as_deref() else {
        eprintln!("error: --config PATH is required");
        return EXIT_CONFIG;
    };
    let config = match parse_config(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let params = match derive_mode_params(&config.circuit_spec()) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if cli.threads != 1 {
        // Build the global pool once; later calls with a different count
        // would be ignored anyway, so surface that as a warning only.
        let mut builder = rayon::ThreadPoolBuilder::new();
        if cli.threads > 0 {
            builder = builder.num_threads(cli.threads);
        }
        if builder.build_global().is_err() {
            log::warn!("thread pool already initialized; --threads ignored");
        }
    }
    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.output.directory));
    match dispatch(&cli, &config, &params, &out_dir) {
        Ok(failure_fraction) => {
            if failure_fraction > FAILURE_BUDGET {
                eprintln!(
                    "error: solver failures on {:.1}% of grid points",
                    failure_fraction * 100.0
                );
                EXIT_SOLVER
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_SOLVER
        }
    }
}

/// Shared command context, mostly unit-conversion helpers bound to the
/// parsed config.
struct Ctx<'a> {
    config: &'a RunConfig,
    params: &'a ModeParams,
    out_dir: &'a Path,
    precision: usize,
}

impl Ctx<'_> {
    fn eps_grid(&self, overrides: &[f64]) -> Vec<f64> {
        if overrides.is_empty() {
            self.config.epsilon_grid()
        } else {
            let mut grid: Vec<f64> = overrides
                .iter()
                .map(|m| crate::units::hz_to_angular(m * 1e6))
                .collect();
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            grid
        }
    }

    fn n_a_ref(&self) -> f64 {
        photon_number_from_power(
            dbm_to_watts(self.config.bias.n_a_ref_dbm),
            self.params.omega_a,
            self.params.kappa_a,
        )
    }

    fn signal_sweep_grid(&self) -> Vec<f64> {
        signal_grid(
            self.config.bias.signal_min_dbm,
            self.config.bias.signal_max_dbm,
            self.config.bias.signal_points_per_decade,
            self.params,
        )
    }

    fn n_a_of_dbm(&self, dbm: f64) -> f64 {
        photon_number_from_power(dbm_to_watts(dbm), self.params.omega_a, self.params.kappa_a)
    }

    fn dbm_of_n_a(&self, n_a: f64) -> f64 {
        watts_to_dbm(power_from_photon_number(
            n_a,
            self.params.omega_a,
            self.params.kappa_a,
        ))
    }

    fn write(&self, name: &str, table: &Table) -> Result<(), CliError> {
        std::fs::create_dir_all(self.out_dir).map_err(|e| CliError::Io(name.into(), e))?;
        let path = self.out_dir.join(name);
        std::fs::write(&path, table.render()).map_err(|e| CliError::Io(name.into(), e))?;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("analysis failed: {0}")]
    Analysis(#[from] analysis::AnalysisError),
    #[error("solver failed: {0}")]
    Solver(#[from] crate::linear::SolverError),
    #[error("cannot write {0}: {1}")]
    Io(String, std::io::Error),
    #[error("{0}")]
    Config(#[from] ConfigError),
}

/// An in-memory CSV table with RFC-4180 quoting and fixed float formats,
/// rendered in one pass for byte-stable output.
struct Table {
    precision: usize,
    out: String,
}

impl Table {
    fn new(precision: usize, header: &[&str]) -> Table {
        let mut t = Table {
            precision,
            out: String::new(),
        };
        t.raw_row(header);
        t
    }

    fn raw_row(&mut self, cells: &[&str]) {
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.out.push(',');
            }
            if c.contains(',') || c.contains('"') || c.contains('\n') {
                self.out.push('"');
                self.out.push_str(&c.replace('"', "\"\""));
                self.out.push('"');
            } else {
                self.out.push_str(c);
            }
        }
        self.out.push('\n');
    }

    fn row(&mut self, cells: &[Cell]) {
        let rendered: Vec<String> = cells
            .iter()
            .map(|c| match c {
                Cell::Axis(v) => format!("{v:.4}"),
                Cell::Value(v) => format!("{:.*e}", self.precision, v),
                Cell::OptValue(Some(v)) => format!("{:.*e}", self.precision, v),
                Cell::OptValue(None) => String::new(),
                Cell::Count(n) => n.to_string(),
                Cell::Text(s) => s.clone(),
            })
            .collect();
        let refs: Vec<&str> = rendered.iter().map(String::as_str).collect();
        self.raw_row(&refs);
    }

    fn render(&self) -> &str {
        &self.out
    }
}

enum Cell {
    /// Grid-axis value, fixed four decimals.
    Axis(f64),
    /// Measured value at the configured precision.
    Value(f64),
    OptValue(Option<f64>),
    Count(u64),
    Text(String),
}

fn mhz(omega: f64) -> f64 {
    angular_to_hz(omega) / 1e6
}

fn dispatch(
    cli: &Cli,
    config: &RunConfig,
    params: &ModeParams,
    out_dir: &Path,
) -> Result<f64, CliError> {
    let ctx = Ctx {
        config,
        params,
        out_dir,
        precision: config.output.precision,
    };
    match cli.command {
        Command::DeriveParams => derive_params_cmd(&ctx),
        Command::GainMap => gain_map_cmd(&ctx, &cli.epsilon_mhz),
        Command::BiasContour => bias_contour_cmd(&ctx, &cli.epsilon_mhz, &cli.signal_dbm),
        Command::Saturate => saturate_cmd(&ctx, &cli.epsilon_mhz, cli.sweep_direction),
        Command::Optimize => optimize_cmd(&ctx, &cli.epsilon_mhz),
        Command::KerrScaling => kerr_scaling_cmd(&ctx, &cli.epsilon_mhz),
        Command::PhaseMap => phase_map_cmd(&ctx, &cli.epsilon_mhz, &cli.signal_dbm),
    }
}

fn derive_params_cmd(ctx: &Ctx) -> Result<f64, CliError> {
    let p = ctx.params;
    let mut s = String::new();
    let khz = |v: f64| angular_to_hz(v) / 1e3;
    let _ = writeln!(s, "mode frequencies (GHz):");
    let _ = writeln!(
        s,
        "  f_a = {:.6}  f_b = {:.6}  f_c = {:.6}",
        mhz(p.omega_a) / 1e3,
        mhz(p.omega_b) / 1e3,
        mhz(p.omega_c) / 1e3
    );
    let _ = writeln!(
        s,
        "  dressed: f_a' = {:.6}  f_b' = {:.6}  f_c' = {:.6}",
        mhz(p.omega_a_dressed) / 1e3,
        mhz(p.omega_b_dressed) / 1e3,
        mhz(p.omega_c_dressed) / 1e3
    );
    let _ = writeln!(s, "linewidths (MHz): kappa_a = {:.4}  kappa_b = {:.4}", mhz(p.kappa_a), mhz(p.kappa_b));
    let _ = writeln!(s, "three-wave coupling g/2pi (MHz): {:.6}", mhz(p.g));
    let _ = writeln!(s, "participation ratios: p_a = {:.6}  p_b = {:.6}  p_c = {:.6}", p.p_a, p.p_b, p.p_c);
    let _ = writeln!(s, "junction inductance L_J (nH): {:.6}", p.l_j * 1e9);
    let _ = writeln!(s, "Kerr matrix /2pi (kHz):");
    let _ = writeln!(s, "  K_aa = {:.6}  K_bb = {:.6}  K_cc = {:.6}", khz(p.kerr.aa), khz(p.kerr.bb), khz(p.kerr.cc));
    let _ = writeln!(s, "  K_ab = {:.6}  K_ac = {:.6}  K_bc = {:.6}", khz(p.kerr.ab), khz(p.kerr.ac), khz(p.kerr.bc));
    print!("{s}");

    let mut t = Table::new(ctx.precision, &["quantity", "unit", "value"]);
    let rows: Vec<(&str, &str, f64)> = vec![
        ("f_a", "ghz", mhz(p.omega_a) / 1e3),
        ("f_b", "ghz", mhz(p.omega_b) / 1e3),
        ("f_c", "ghz", mhz(p.omega_c) / 1e3),
        ("f_a_dressed", "ghz", mhz(p.omega_a_dressed) / 1e3),
        ("f_b_dressed", "ghz", mhz(p.omega_b_dressed) / 1e3),
        ("f_c_dressed", "ghz", mhz(p.omega_c_dressed) / 1e3),
        ("kappa_a", "mhz", mhz(p.kappa_a)),
        ("kappa_b", "mhz", mhz(p.kappa_b)),
        ("g", "mhz", mhz(p.g)),
        ("k_aa", "khz", khz(p.kerr.aa)),
        ("k_bb", "khz", khz(p.kerr.bb)),
        ("k_cc", "khz", khz(p.kerr.cc)),
        ("k_ab", "khz", khz(p.kerr.ab)),
        ("k_ac", "khz", khz(p.kerr.ac)),
        ("k_bc", "khz", khz(p.kerr.bc)),
        ("p_a", "ratio", p.p_a),
        ("p_b", "ratio", p.p_b),
        ("p_c", "ratio", p.p_c),
        ("l_j", "nh", p.l_j * 1e9),
    ];
    for (name, unit, v) in rows {
        t.row(&[Cell::Text(name.into()), Cell::Text(unit.into()), Cell::Value(v)]);
    }
    ctx.write("derived_params.csv", &t)?;
    Ok(0.0)
}

/// Small-signal max-over-Δ gain on a (ε, n_p) grid bracketing the
/// gain-target contour, plus the contour itself.
fn gain_map_cmd(ctx: &Ctx, eps_override: &[f64]) -> Result<f64, CliError> {
    let eps_grid = ctx.eps_grid(eps_override);
    let target = ctx.config.gain_target();
    let nref = ctx.n_a_ref();
    let mut contour = Vec::new();
    let mut failures = 0usize;
    for &eps in &eps_grid {
        match find_bias_for_gain(eps, target, nref, ctx.params, &ctx.config.policy()) {
            Ok(b) => contour.push((eps, Some(b))),
            Err(_) => {
                failures += 1;
                contour.push((eps, None));
            }
        }
    }
    let np_top = contour
        .iter()
        .filter_map(|(_, b)| b.as_ref().map(|b| b.n_p))
        .fold(0.0f64, f64::max);
    if np_top == 0.0 {
        return Err(CliError::Analysis(analysis::AnalysisError::NoSolution {
            epsilon_rad: eps_grid[0],
        }));
    }
    let np_axis: Vec<f64> = (0..=60)
        .map(|i| np_top * 0.5 + np_top * 0.55 * i as f64 / 60.0)
        .collect();
    let mut t = Table::new(ctx.precision, &["eps_mhz", "np", "gain_db", "delta_maxg_mhz"]);
    for &eps in &eps_grid {
        for &n_p in &np_axis {
            let bias = PumpBias { epsilon: eps, n_p };
            match crate::kerr::peak_gain_detuning_4(&bias, ctx.params) {
                Ok(pk) => t.row(&[
                    Cell::Axis(mhz(eps)),
                    Cell::Value(n_p),
                    Cell::Value(gain_to_db(pk.gain)),
                    Cell::Value(mhz(pk.numeric)),
                ]),
                Err(_) => t.row(&[
                    Cell::Axis(mhz(eps)),
                    Cell::Value(n_p),
                    Cell::Text(String::new()),
                    Cell::Text(String::new()),
                ]),
            }
        }
    }
    ctx.write("gainmap.csv", &t)?;

    let mut c = Table::new(
        ctx.precision,
        &["eps_mhz", "np", "gain_db", "delta_maxg_mhz"],
    );
    for (eps, b) in &contour {
        match b {
            Some(b) => c.row(&[
                Cell::Axis(mhz(*eps)),
                Cell::Value(b.n_p),
                Cell::Value(gain_to_db(b.gain_small)),
                Cell::Value(mhz(b.delta_max_gain)),
            ]),
            None => c.row(&[
                Cell::Axis(mhz(*eps)),
                Cell::Text(String::new()),
                Cell::Text(String::new()),
                Cell::Text(String::new()),
            ]),
        }
    }
    ctx.write("gainmap_contour.csv", &c)?;
    Ok(failures as f64 / eps_grid.len() as f64)
}

fn bias_contour_cmd(
    ctx: &Ctx,
    eps_override: &[f64],
    signal_dbm: &[f64],
) -> Result<f64, CliError> {
    let eps_grid = ctx.eps_grid(eps_override);
    let powers: Vec<f64> = if signal_dbm.is_empty() {
        vec![-140.0, -120.0, -110.0]
    } else {
        signal_dbm.to_vec()
    };
    let n_a_list: Vec<f64> = powers.iter().map(|&d| ctx.n_a_of_dbm(d)).collect();
    let contours = bias_contour(
        &eps_grid,
        ctx.config.gain_target(),
        &n_a_list,
        ctx.n_a_ref(),
        ctx.params,
        &ctx.config.policy(),
    );
    let mut t = Table::new(
        ctx.precision,
        &["psig_dbm", "eps_mhz", "np", "delta_maxg_mhz"],
    );
    let mut failures = 0usize;
    let mut total = 0usize;
    for (contour, &dbm) in contours.iter().zip(powers.iter()) {
        for (eps, point) in &contour.points {
            total += 1;
            match point {
                Some(p) => t.row(&[
                    Cell::Axis(dbm),
                    Cell::Axis(mhz(*eps)),
                    Cell::Value(p.n_p),
                    Cell::Value(mhz(p.delta_max_gain)),
                ]),
                None => {
                    failures += 1;
                    t.row(&[
                        Cell::Axis(dbm),
                        Cell::Axis(mhz(*eps)),
                        Cell::Text(String::new()),
                        Cell::Text(String::new()),
                    ]);
                }
            }
        }
    }
    ctx.write("contour.csv", &t)?;
    Ok(failures as f64 / total.max(1) as f64)
}

fn saturate_cmd(ctx: &Ctx, eps_override: &[f64], direction: Direction) -> Result<f64, CliError> {
    let eps_grid = ctx.eps_grid(eps_override);
    let grid = ctx.signal_sweep_grid();
    let target = ctx.config.gain_target();
    let nref = ctx.n_a_ref();
    let policy = ctx.config.policy();

    let directions: &[(SweepDirection, &str)] = match direction {
        Direction::Up => &[(SweepDirection::Up, "saturation.csv")],
        Direction::Down => &[(SweepDirection::Down, "saturation.csv")],
        Direction::Both => &[
            (SweepDirection::Up, "saturation.csv"),
            (SweepDirection::Down, "saturation_down.csv"),
        ],
    };
    let mut failures = 0usize;
    let mut total = 0usize;
    let mut summary = Table::new(
        ctx.precision,
        &[
            "eps_mhz",
            "np",
            "gain_small_db",
            "delta_maxg_mhz",
            "p_minus_1db_dbm",
            "p_plus_1db_dbm",
            "limiting_side",
            "max_rise_db",
            "fold_count",
        ],
    );
    for (dir, file) in directions {
        let mut t = Table::new(ctx.precision, &["eps_mhz", "psig_dbm", "gain_db", "branch"]);
        for &eps in &eps_grid {
            total += 1;
            let bias = match find_bias_for_gain(eps, target, nref, ctx.params, &policy) {
                Ok(b) => b,
                Err(_) => {
                    failures += 1;
                    continue;
                }
            };
            let sweep = match sweep_signal_power(
                bias.delta_max_gain,
                &bias.pump(),
                &grid,
                *dir,
                ctx.params,
                &policy,
            ) {
                Ok(s) => s,
                Err(_) => {
                    failures += 1;
                    continue;
                }
            };
            for p in &sweep.points {
                t.row(&[
                    Cell::Axis(mhz(eps)),
                    Cell::Axis(ctx.dbm_of_n_a(p.n_a)),
                    Cell::Value(gain_to_db(p.response.gain())),
                    Cell::Text(p.response.branch.label().into()),
                ]);
            }
            if *dir == SweepDirection::Up {
                let points: Vec<analysis::SaturationPoint> = sweep
                    .points
                    .iter()
                    .map(|p| analysis::SaturationPoint {
                        n_a: p.n_a,
                        p_sig_dbm: ctx.dbm_of_n_a(p.n_a),
                        gain_db: gain_to_db(p.response.gain()),
                        branch: p.response.branch,
                    })
                    .collect();
                if let Ok((m, pl, side)) =
                    analysis::extract_p_pm1db(&points, gain_to_db(bias.gain_small))
                {
                    let rise = points
                        .iter()
                        .map(|p| p.gain_db - gain_to_db(bias.gain_small))
                        .fold(f64::NEG_INFINITY, f64::max);
                    summary.row(&[
                        Cell::Axis(mhz(eps)),
                        Cell::Value(bias.n_p),
                        Cell::Value(gain_to_db(bias.gain_small)),
                        Cell::Value(mhz(bias.delta_max_gain)),
                        Cell::OptValue(m),
                        Cell::OptValue(pl),
                        Cell::Text(side.label().into()),
                        Cell::Value(rise),
                        Cell::Count(sweep.folds.len() as u64),
                    ]);
                }
            }
        }
        ctx.write(file, &t)?;
    }
    ctx.write("saturation_summary.csv", &summary)?;
    Ok(failures as f64 / total.max(1) as f64)
}

fn optimize_cmd(ctx: &Ctx, eps_override: &[f64]) -> Result<f64, CliError> {
    let eps_grid = ctx.eps_grid(eps_override);
    let grid = ctx.signal_sweep_grid();
    let results = saturation_map(
        &eps_grid,
        ctx.config.gain_target(),
        ctx.n_a_ref(),
        &grid,
        ctx.params,
        &ctx.config.policy(),
    );
    let failures = results.iter().filter(|(_, r)| r.is_err()).count();
    let curves: Vec<SaturationCurve> = results.into_iter().filter_map(|(_, r)| r.ok()).collect();
    let optima = find_optimal_biases(&curves)?;
    let np_values: Vec<f64> = curves.iter().map(|c| c.bias.n_p).collect();
    let quartile = lowest_quartile(&np_values);
    let mut t = Table::new(
        ctx.precision,
        &[
            "kind",
            "eps_mhz",
            "np",
            "delta_maxg_mhz",
            "gain_small_db",
            "p_minus_1db_dbm",
            "p_plus_1db_dbm",
            "p_1db_first_dbm",
            "limiting_side",
            "max_rise_db",
            "near_minimum_np",
        ],
    );
    for (kind, c) in [("monotone", &optima.monotone), ("gain_rise", &optima.gain_rise)] {
        t.row(&[
            Cell::Text(kind.into()),
            Cell::Axis(mhz(c.bias.epsilon)),
            Cell::Value(c.bias.n_p),
            Cell::Value(mhz(c.bias.delta_max_gain)),
            Cell::Value(gain_to_db(c.bias.gain_small)),
            Cell::OptValue(c.p_minus_1db),
            Cell::OptValue(c.p_plus_1db),
            Cell::OptValue(c.p_1db_first()),
            Cell::Text(c.limiting_side.label().into()),
            Cell::Value(c.max_rise_db()),
            Cell::Text(if c.bias.n_p <= quartile { "yes" } else { "no" }.into()),
        ]);
    }
    ctx.write("optima.csv", &t)?;
    Ok(failures as f64 / eps_grid.len().max(1) as f64)
}

/// 25th percentile of the values (lowest-quartile threshold).
fn lowest_quartile(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    v[(v.len() - 1) / 4]
}

fn kerr_scaling_cmd(ctx: &Ctx, eps_override: &[f64]) -> Result<f64, CliError> {
    let eps_grid = ctx.eps_grid(eps_override);
    let grid = ctx.signal_sweep_grid();
    let scales = [1.0, 0.5, 0.1, 0.0];
    let rows = kerr_scaling_study(
        &scales,
        &eps_grid,
        ctx.config.gain_target(),
        ctx.n_a_ref(),
        &grid,
        ctx.params,
        &ctx.config.policy(),
    );
    let mut t = Table::new(
        ctx.precision,
        &[
            "kerr_scale",
            "monotone_eps_mhz",
            "monotone_p_minus_1db_dbm",
            "gain_rise_eps_mhz",
            "gain_rise_p_1db_dbm",
        ],
    );
    for r in &rows {
        t.row(&[
            Cell::Axis(r.scale),
            Cell::OptValue(r.monotone.map(|(e, _)| mhz(e))),
            Cell::OptValue(r.monotone.map(|(_, p)| p)),
            Cell::OptValue(r.gain_rise.map(|(e, _)| mhz(e))),
            Cell::OptValue(r.gain_rise.map(|(_, p)| p)),
        ]);
    }
    ctx.write("kerr_scaling.csv", &t)?;
    Ok(0.0)
}

fn phase_map_cmd(ctx: &Ctx, eps_override: &[f64], signal_dbm: &[f64]) -> Result<f64, CliError> {
    let eps_grid = ctx.eps_grid(eps_override);
    let n_a_grid: Vec<f64> = if signal_dbm.is_empty() {
        ctx.signal_sweep_grid()
    } else {
        let mut v: Vec<f64> = signal_dbm.iter().map(|&d| ctx.n_a_of_dbm(d)).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let map = transmission_map(
        &eps_grid,
        &n_a_grid,
        ctx.config.gain_target(),
        ctx.n_a_ref(),
        ctx.params,
        &ctx.config.policy(),
    )?;
    let mut t = Table::new(
        ctx.precision,
        &["eps_mhz", "psig_dbm", "beta_db", "phase_deg", "branch"],
    );
    for row in &map.rows {
        t.row(&[
            Cell::Axis(mhz(row.epsilon)),
            Cell::Axis(row.p_sig_dbm),
            Cell::Value(row.beta_db),
            Cell::Value(row.phase_deg),
            Cell::Text(row.branch.label().into()),
        ]);
    }
    ctx.write("phasemap.csv", &t)?;
    Ok(0.0)
}
