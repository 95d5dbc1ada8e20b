//! `pps`: batch driver for relaxation, dark-time runs, spectroscopy sweeps,
//! thermal fits, convergence checks and unit conversions.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use pps_core::ci::{convergence_deviation, CiConfig, CiSystem};
use pps_core::coupled::PulseSpec;
use pps_core::dimred::{
    rubidium_example, si_units, temperature_unit, validate_1d_regime, Condition, Thresholds, TrapGeometry, ATOMIC_MASS,
};
use pps_core::eth::{effective_hamiltonian, fit_temperature, occupations, temperature_from_energy, OccupationModel, Truncation};
use pps_core::io::{
    grid_from_axis, parse_config, read_array, read_spectrum_csv, write_array, write_manifest, write_spectrum_csv,
    write_table_csv, ArrayFile, Axis, RunConfig, Table,
};
use pps_core::meanfield::{relax_ground_state_report, ThomasFermi};
use pps_core::observables::{coherence_function, structure_factor, OneBodyDensityMatrix, Species, SUPPORT_THRESHOLD};
use pps_core::relaxation::{run_dark_ci, run_dark_coupled, tail_slope, thermal_analysis, DarkRun};
use pps_core::spectroscopy::{
    classify_peaks, default_probe_detunings, default_pump_detunings, fit_lineshape, sweep_probe, sweep_pump, MeanFieldGrids,
    PreparedSolver, ResonanceFit, SolverKind, Spectrum,
};
use pps_core::{Error, Grid, Result, C64};

/// Like `println!`, but a closed stdout (e.g. piping into `head`) is not an error.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "pps", version, about = "Pump-probe spectroscopy of impurities in a trapped 1D Bose gas")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Verb {
    /// Ground state of the bath (and impurities for the few-body solver).
    Relax(Common),
    /// Dark-time evolution after flipping the impurities, with a thermal analysis.
    Evolve(Common),
    /// Spin-up fraction after the pump against detuning, with a lineshape fit.
    SweepPump(Common),
    /// Spin-down fraction after pump, blast, dark time and probe.
    SweepProbe {
        #[command(flatten)]
        common: Common,
        /// Dark times; overrides `sweep.t_dark`.
        #[arg(long, value_delimiter = ',')]
        t_dark: Option<Vec<f64>>,
    },
    /// Ramsey contrast |S(t)|.
    Ramsey(Common),
    /// Effective temperature of an averaged impurity density matrix.
    EthFit {
        #[command(flatten)]
        common: Common,
        /// Averaged spin-up density matrix; defaults to `<out>/rho_bar_up.ppsa`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Averaged bath density on the same grid; defaults to `<out>/rho_bar_b.ppsa`.
        #[arg(long)]
        bath: Option<PathBuf>,
        /// Averaged impurity energy, for the energy-matched temperature.
        #[arg(long)]
        energy: Option<f64>,
    },
    /// Harmonic units and quasi-1D validity conditions.
    Units(UnitsArgs),
    /// Labels the maxima of a spectrum CSV.
    Classify {
        #[arg(long)]
        input: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Fits the rectangular-pulse lineshape to a spectrum CSV.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Pulse length; read from the spectrum metadata when absent.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Few-body coherence deviation between two orbital truncations.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Bath orbitals of the comparison run (default: one more).
        #[arg(long)]
        d_b2: Option<usize>,
        /// Impurity orbitals of the comparison run (default: two more).
        #[arg(long)]
        d_i2: Option<usize>,
        /// Dark time over which the runs are compared.
        #[arg(long, default_value_t = 5.0)]
        t: f64,
    },
}

#[derive(Args, serde::Serialize)]
struct UnitsArgs {
    /// Print the validity report as well as the unit table.
    #[arg(long)]
    check: bool,
    /// Dimensionless bath coupling.
    #[arg(long, default_value_t = 0.5)]
    g_bb: f64,
    #[arg(long, default_value_t = 100)]
    n_b: usize,
    #[arg(long, default_value_t = 1)]
    n_i: usize,
    /// Atomic mass in u; Rb-87 when absent.
    #[arg(long)]
    mass_amu: Option<f64>,
    /// Axial trap frequency in Hz.
    #[arg(long)]
    omega_hz: Option<f64>,
    /// Transverse trap frequency in Hz.
    #[arg(long)]
    omega_perp_hz: Option<f64>,
    /// Temperature in K.
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value_t = 0.1)]
    small: f64,
    #[arg(long, default_value_t = 0.3)]
    warning_edge: f64,
    #[arg(short, long, help = "Output directory [default: pps-out]")]
    #[serde(skip)]
    out: Option<PathBuf>,
}

struct Run {
    cfg: RunConfig,
    dir: PathBuf,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn open(common: &Common) -> Result<Self> {
        let cfg = parse_config(&common.config)?;
        let dir = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
        std::fs::create_dir_all(&dir)?;
        Ok(Self { cfg, dir, outputs: vec![] })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.outputs.push(p.clone());
        p
    }

    fn finish(self, verb: &str, summary: Value) -> Result<()> {
        let m = write_manifest(&self.dir, verb, &self.cfg, &self.outputs, summary.clone())?;
        say!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
        eprintln!("wrote {} files and {}", self.outputs.len(), m.display());
        Ok(())
    }

    fn solver(&self) -> Result<PreparedSolver> {
        PreparedSolver::prepare(&self.cfg.params, &self.cfg.solver)
    }

    fn ci_config(&self) -> CiConfig {
        self.cfg.solver.ci.clone().unwrap_or_else(|| CiConfig::for_params(&self.cfg.params))
    }
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf> {
    let d = out.clone().unwrap_or_else(|| PathBuf::from("pps-out"));
    std::fs::create_dir_all(&d)?;
    Ok(d)
}

fn axis(name: &str, grid: &Grid) -> Axis {
    Axis { name: name.into(), unit: "harmonic length".into(), values: grid.points().to_vec() }
}

fn relax(common: &Common) -> Result<()> {
    let mut run = Run::open(common)?;
    let p = run.cfg.params.clone();
    let summary = match run.cfg.solver.kind {
        SolverKind::Coupled => {
            let grids = run.cfg.solver.grids.clone().unwrap_or_else(|| MeanFieldGrids::for_params(&p));
            let (bg, _) = grids.build()?;
            let (bath, mu, report) = relax_ground_state_report(&p, bg.clone(), None, 1e-10)?;
            let tf = ThomasFermi::new(&p).ok();
            let rho = bath.density();
            let rho_tf: Vec<f64> = bg.points().iter().map(|&x| tf.as_ref().map_or(f64::NAN, |t| t.density(x))).collect();
            let table = Table::new(&["x", "rho_b", "rho_tf"], vec![bg.points().to_vec(), rho, rho_tf])?
                .with_comment("units: x in harmonic lengths, densities per harmonic length");
            write_table_csv(&run.path("bath_density.csv"), &table)?;
            let psi = ArrayFile::complex(vec![bg.len()], vec![axis("x", &bg)], "sqrt(1/harmonic length)", bath.psi.clone())?;
            write_array(&run.path("bath_psi.ppsa"), &psi)?;
            json!({
                "mu": mu,
                "mu_thomas_fermi": tf.as_ref().map(|t| t.mu),
                "central_density": bath.central_density(),
                "residual": report.residual,
                "imaginary_steps": report.imaginary_steps,
                "newton_steps": report.newton_steps,
                "units": "hbar omega, harmonic lengths",
            })
        }
        SolverKind::Ci => {
            let sys = CiSystem::new(&p, &run.ci_config())?;
            let (e, st) = sys.ground_state(0)?;
            let x = sys.grid.points().to_vec();
            let table = Table::new(
                &["x", "rho_b", "rho_down"],
                vec![x, sys.density(&st, Species::Bath), sys.density(&st, Species::Down)],
            )?
            .with_comment("units: x in harmonic lengths, densities per harmonic length");
            write_table_csv(&run.path("densities.csv"), &table)?;
            json!({ "ground_energy": e, "dimension": sys.dim(), "units": "hbar omega" })
        }
    };
    run.finish("relax", summary)
}

fn dark_run(run: &Run) -> Result<DarkRun> {
    let p = &run.cfg.params;
    match run.solver()? {
        PreparedSolver::Coupled { initial, opts, .. } => run_dark_coupled(&initial, p, &opts, &run.cfg.dark),
        PreparedSolver::Ci { system, .. } => run_dark_ci(&system, run.cfg.solver.ci_dt.unwrap_or(0.05), &run.cfg.dark),
    }
}

/// Populations `<phi_k| rho |phi_k>` of the given real orbitals.
fn level_populations(rho: &DMatrix<C64>, states: &[Vec<f64>], dx: f64) -> Vec<f64> {
    states
        .iter()
        .map(|phi| {
            let n = phi.len();
            let mut acc = 0.0;
            for i in 0..n {
                let row: f64 = (0..n).map(|j| rho[(i, j)].re * phi[j]).sum();
                acc += phi[i] * row;
            }
            acc * dx * dx
        })
        .collect()
}

fn evolve(common: &Common) -> Result<()> {
    let mut run = Run::open(common)?;
    let dark = dark_run(&run)?;
    let energies = Table::new(
        &["t", "h_bi_per_impurity", "impurity_energy", "total_energy"],
        vec![dark.times.clone(), dark.interspecies.clone(), dark.impurity_energy.clone(), dark.total_energy.clone()],
    )?
    .with_comment("units: t in 1/omega, energies in hbar omega");
    write_table_csv(&run.path("energies.csv"), &energies)?;
    let cv = &dark.coherence_variance;
    if !cv.is_empty() {
        let t = Table::new(&["t", "delta_g1"], vec![cv.iter().map(|v| v.0).collect(), cv.iter().map(|v| v.1).collect()])?
            .with_comment("units: t in 1/omega; delta_g1 dimensionless");
        write_table_csv(&run.path("coherence_variance.csv"), &t)?;
    }
    let g = dark.grid.clone();
    let m = g.len();
    // row-major copy of the averaged matrix
    let rho: Vec<C64> = (0..m * m).map(|k| dark.rho_bar_up.matrix[(k / m, k % m)]).collect();
    let meta = json!({ "window": dark.window, "e_bar_up": dark.e_bar_up });
    write_array(
        &run.path("rho_bar_up.ppsa"),
        &ArrayFile::complex(vec![m, m], vec![axis("x", &g), axis("x'", &g)], "1/harmonic length", rho)?.with_meta(meta),
    )?;
    write_array(
        &run.path("rho_bar_b.ppsa"),
        &ArrayFile::real(vec![m], vec![axis("x", &g)], "1/harmonic length", dark.rho_bar_b.clone())?,
    )?;
    let rep = thermal_analysis(&dark, &Truncation::default())?;
    let h = &rep.hamiltonian;
    let n_fit = occupations(rep.model, &h.energies, rep.fit.temperature)?.occupations;
    let n_e = if rep.energy_temperature > 0.0 {
        occupations(rep.model, &h.energies, rep.energy_temperature)?.occupations
    } else {
        let mut v = vec![0.0; h.energies.len()];
        v.iter_mut().take(rep.model.particles()).for_each(|x| *x = 1.0);
        v
    };
    let pops = level_populations(&dark.rho_bar_up.matrix, &h.states, g.dx());
    let levels: Vec<f64> = (0..h.energies.len()).map(|k| k as f64).collect();
    let thermal = Table::new(
        &["level", "energy", "population", "n_fit", "n_energy"],
        vec![levels, h.energies.clone(), pops, n_fit, n_e],
    )?
    .with_comment("units: energy in hbar omega; populations per level");
    write_table_csv(&run.path("thermal.csv"), &thermal)?;
    let summary = json!({
        "energy_drift": dark.energy_drift(),
        "h_bi_initial": dark.interspecies.first(),
        "h_bi_window_mean": dark.interspecies_mean(dark.window.0, dark.window.1)?,
        "t_fit": rep.fit.temperature,
        "fit_residual": rep.fit.residual,
        "fit_bracketed": rep.fit.bracketed,
        "t_energy": rep.energy_temperature,
        "e_bar_up": rep.e_bar_up,
        "ground_energy": rep.ground_energy,
        "tail_weight": rep.tail_weight,
        "delta_g1_final": cv.last().map(|v| v.1),
        "delta_g1_slope_late": tail_slope(cv, 0.5 * run.cfg.dark.t_end).ok(),
        "units": "hbar omega, 1/omega, temperatures in hbar omega / k_B",
    });
    run.finish("evolve", summary)
}

/// Rough resonance position from the initial bath density at the trap centre.
fn pump_center(solver: &PreparedSolver) -> f64 {
    let g = solver.params().g_bi;
    match solver {
        PreparedSolver::Coupled { initial, .. } => g * initial.bath.central_density(),
        PreparedSolver::Ci { system, initial, .. } => {
            let rho = system.density(initial, Species::Bath);
            g * rho[rho.len() / 2]
        }
    }
}

fn pump_sweep(run: &Run, solver: &PreparedSolver) -> Result<(Spectrum, Result<ResonanceFit>)> {
    let dets = match &run.cfg.sweep.pump_detunings {
        Some(d) => d.values()?,
        None => default_pump_detunings(pump_center(solver)),
    };
    let t_e = run.cfg.pulses.pump_duration();
    let spec = sweep_pump(solver, &dets, run.cfg.pulses.pump_omega, t_e)?;
    let fit = fit_lineshape(&spec, t_e);
    Ok((spec, fit))
}

fn sweep_pump_verb(common: &Common) -> Result<()> {
    let mut run = Run::open(common)?;
    let solver = run.solver()?;
    let (spec, fit) = pump_sweep(&run, &solver)?;
    write_spectrum_csv(&run.path("pump_spectrum.csv"), &spec)?;
    let fit = fit.map_err(|e| eprintln!("warning: lineshape fit failed: {e}")).ok();
    let summary = json!({ "fit": fit, "argmax": spec.argmax(), "units": "detunings in omega" });
    run.finish("sweep-pump", summary)
}

fn tag(t: f64) -> String {
    format!("{t}").replace('.', "p")
}

fn sweep_probe_verb(common: &Common, t_dark: &Option<Vec<f64>>) -> Result<()> {
    let mut run = Run::open(common)?;
    let solver = run.solver()?;
    let pulses = run.cfg.pulses.clone();
    let pump_detuning = match pulses.pump_detuning {
        Some(d) => d,
        None => {
            let (spec, fit) = pump_sweep(&run, &solver)?;
            write_spectrum_csv(&run.path("pump_spectrum.csv"), &spec)?;
            fit?.delta_plus
        }
    };
    let pump = PulseSpec::pump(pulses.pump_omega, pump_detuning, pulses.pump_duration());
    let dets = match &run.cfg.sweep.probe_detunings {
        Some(d) => d.values()?,
        None => default_probe_detunings(Some(pump_detuning)),
    };
    let times = t_dark.clone().unwrap_or_else(|| run.cfg.sweep.t_dark.clone());
    if times.is_empty() || times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidParameter("dark times must be non-negative".into()));
    }
    let mut results = Vec::new();
    for &t in &times {
        let spec = sweep_probe(&solver, &pump, &pulses.blast, t, &dets, pulses.probe_omega, pulses.probe_duration())?;
        write_spectrum_csv(&run.path(&format!("probe_spectrum_td{}.csv", tag(t))), &spec)?;
        results.push(json!({ "t_dark": t, "peaks": classify_peaks(&spec)? }));
    }
    let summary = json!({ "pump_detuning": pump_detuning, "spectra": results, "units": "detunings in omega, times in 1/omega" });
    run.finish("sweep-probe", summary)
}

fn ramsey(common: &Common) -> Result<()> {
    let mut run = Run::open(common)?;
    let t_max = run.cfg.sweep.ramsey_t_max;
    let s = match run.solver()? {
        PreparedSolver::Coupled { initial, opts, params } => structure_factor(&initial, &params, t_max, &opts)?,
        PreparedSolver::Ci { system, initial, .. } => {
            system.structure_factor(&initial, t_max, run.cfg.solver.ci_dt.unwrap_or(0.05), 0.1)?
        }
    };
    let t = Table::new(&["t", "abs_s"], vec![s.iter().map(|v| v.0).collect(), s.iter().map(|v| v.1).collect()])?
        .with_comment("units: t in 1/omega; |S| dimensionless");
    write_table_csv(&run.path("ramsey.csv"), &t)?;
    let summary = json!({
        "s0": s.first().map(|v| v.1),
        "min": s.iter().map(|v| v.1).fold(f64::INFINITY, f64::min),
        "max": s.iter().map(|v| v.1).fold(0.0, f64::max),
    });
    run.finish("ramsey", summary)
}

fn eth_fit(common: &Common, input: &Option<PathBuf>, bath: &Option<PathBuf>, energy: Option<f64>) -> Result<()> {
    let mut run = Run::open(common)?;
    let input = input.clone().unwrap_or_else(|| run.dir.join("rho_bar_up.ppsa"));
    let bath = bath.clone().unwrap_or_else(|| run.dir.join("rho_bar_b.ppsa"));
    let rho_file = read_array(&input)?;
    let bath_file = read_array(&bath)?;
    let m = match rho_file.header.shape.as_slice() {
        [a, b] if a == b => *a,
        s => return Err(Error::ShapeMismatch(format!("density matrix must be square, got {s:?}"))),
    };
    let grid: Arc<Grid> = grid_from_axis(
        rho_file.header.axes.first().ok_or_else(|| Error::Format("density matrix has no x axis".into()))?,
    )?;
    let values = rho_file.to_complex();
    let matrix = DMatrix::from_fn(m, m, |i, j| values[i * m + j]);
    let rho = OneBodyDensityMatrix { species: Species::Up, grid: grid.clone(), matrix, time: f64::NAN };
    let rho_b = bath_file.as_real()?;
    let p = &run.cfg.params;
    let h = effective_hamiltonian(grid.clone(), rho_b, p, &Truncation::default())?;
    let model = OccupationModel::for_params(p);
    let fit = fit_temperature(&rho, &h, model)?;
    let t_energy = energy.map(|e| temperature_from_energy(e, &h, model)).transpose()?;
    let n_fit = occupations(model, &h.energies, fit.temperature)?.occupations;
    let pops = level_populations(&rho.matrix, &h.states, grid.dx());
    let levels: Vec<f64> = (0..h.energies.len()).map(|k| k as f64).collect();
    let t = Table::new(&["level", "energy", "population", "n_fit"], vec![levels, h.energies.clone(), pops, n_fit])?
        .with_comment(format!("t_eff: {:?}", fit.temperature))
        .with_comment(format!("residual: {:?}", fit.residual))
        .with_comment("units: energy in hbar omega, temperature in hbar omega / k_B");
    write_table_csv(&run.path("eth_fit.csv"), &t)?;
    let summary = json!({ "fit": fit, "t_energy": t_energy, "model": model, "input": input, "bath": bath });
    run.finish("eth-fit", summary)
}

fn regime(c: &Condition) -> String {
    format!("{:?}", c.regime).to_lowercase()
}

fn units(a: &UnitsArgs) -> Result<()> {
    let (rb_units, rb_geo) = rubidium_example();
    let mass = a.mass_amu.map_or(rb_units.mass_ref, |u| u * ATOMIC_MASS);
    let two_pi = 2.0 * std::f64::consts::PI;
    let geo = TrapGeometry::new(
        a.omega_hz.map_or(rb_geo.omega, |f| two_pi * f),
        a.omega_perp_hz.map_or(rb_geo.omega_perp, |f| two_pi * f),
    )?;
    let u = si_units(mass, geo.omega)?;
    let dir = out_dir(&a.out)?;
    let mut names = vec!["length", "energy", "time", "temperature", "coupling"];
    let mut values = vec![u.length(), u.energy(), u.time(), temperature_unit(&u), u.coupling()];
    let mut unit_strs = vec!["m", "J", "s", "K", "J m"];
    let mut regimes = vec![String::new(); 5];
    say!("{:<34} {:>14}  unit", "harmonic unit", "value");
    for k in 0..names.len() {
        say!("{:<34} {:>14.6e}  {}", names[k], values[k], unit_strs[k]);
    }
    if a.check {
        let th = Thresholds { small: a.small, warning_edge: a.warning_edge };
        let r = validate_1d_regime(a.g_bb, a.n_b, a.n_i, mass, &geo, a.temperature, &th)?;
        let rows = [
            ("a_bb", r.a_bb, "m", String::new()),
            ("n_b a_bb alpha_perp / alpha^2", r.density.ratio, "1", regime(&r.density)),
            ("thermal bound", r.thermal_bound, "hbar omega", String::new()),
            ("thermal bound", r.thermal_bound_kelvin, "K", String::new()),
            ("k_B T / thermal bound", r.thermal.ratio, "1", regime(&r.thermal)),
            ("n_i omega / omega_perp", r.impurity.ratio, "1", regime(&r.impurity)),
        ];
        say!();
        say!("{:<34} {:>14}  {:<11} regime", "quasi-1D condition", "value", "unit");
        for (n, v, un, rg) in rows {
            say!("{n:<34} {v:>14.6e}  {un:<11} {rg}");
            names.push(n);
            values.push(v);
            unit_strs.push(un);
            regimes.push(rg);
        }
    }
    let path = dir.join("units.csv");
    let mut csv = String::from("quantity,value,unit,regime\n");
    for k in 0..names.len() {
        csv.push_str(&format!("{},{:?},{},{}\n", names[k], values[k], unit_strs[k], regimes[k]));
    }
    std::fs::write(&path, csv)?;
    write_manifest(&dir, "units", a, &[path], json!({}))?;
    Ok(())
}

fn classify(input: &Path, out: &Option<PathBuf>) -> Result<()> {
    let spec = read_spectrum_csv(input)?;
    let peaks = classify_peaks(&spec)?;
    say!("{:>6} {:>12} {:>10}  {:<8} {:>6} {:>11} {:>9}", "index", "delta", "height", "label", "parent", "significant", "ambiguous");
    for p in &peaks {
        let parent = p.parent.map_or("-".to_string(), |i| i.to_string());
        let label = format!("{:?}", p.label).to_lowercase();
        say!("{:>6} {:>12.4} {:>10.5}  {label:<8} {parent:>6} {:>11} {:>9}", p.index, p.delta, p.height, p.significant, p.ambiguous);
    }
    let dir = out_dir(out)?;
    let path = dir.join("peaks.json");
    std::fs::write(&path, serde_json::to_string_pretty(&peaks).map_err(|e| Error::Format(e.to_string()))?)?;
    write_manifest(&dir, "classify", &json!({ "input": input }), &[path], json!({ "peaks": peaks.len() }))?;
    Ok(())
}

fn fit(input: &Path, duration: Option<f64>, out: &Option<PathBuf>) -> Result<()> {
    let spec = read_spectrum_csv(input)?;
    let t_e = duration
        .or(spec.meta.duration)
        .ok_or_else(|| Error::InvalidParameter("pulse length unknown: pass --duration".into()))?;
    let f = fit_lineshape(&spec, t_e)?;
    say!("omega_plus  {:.6}\ndelta_plus  {:.6}\nresidual    {:.3e}", f.omega_plus, f.delta_plus, f.residual);
    let dir = out_dir(out)?;
    let path = dir.join("fit.csv");
    let t = Table::new(&["omega_plus", "delta_plus", "residual", "duration"], vec![
        vec![f.omega_plus],
        vec![f.delta_plus],
        vec![f.residual],
        vec![t_e],
    ])?
    .with_comment("units: omega_plus and delta_plus in omega, duration in 1/omega");
    write_table_csv(&path, &t)?;
    write_manifest(&dir, "fit", &json!({ "input": input, "duration": t_e }), &[path], json!(f))?;
    Ok(())
}

fn convergence(common: &Common, d_b2: Option<usize>, d_i2: Option<usize>, t: f64) -> Result<()> {
    let mut run = Run::open(common)?;
    if run.cfg.solver.kind != SolverKind::Ci {
        return Err(Error::Unsupported("convergence compares few-body truncations; set solver.kind = \"ci\"".into()));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("comparison time must be positive, got {t}")));
    }
    let p = run.cfg.params.clone();
    let a = run.ci_config();
    let b = CiConfig { d_b: d_b2.unwrap_or(a.d_b + 1), d_i: d_i2.unwrap_or(a.d_i + 2), ..a.clone() };
    let dt = run.cfg.solver.ci_dt.unwrap_or(0.05);
    let stride = 0.5;
    let trace = |cfg: &CiConfig| -> Result<(f64, Vec<(f64, DMatrix<f64>)>)> {
        let sys = CiSystem::new(&p, cfg)?;
        let (e, st) = sys.ground_state(0)?;
        let start = sys.flip_down_to_up(&st)?;
        let mut out = Vec::new();
        sys.evolve(&start, &PulseSpec::dark(t), dt, stride, |s| {
            out.push((s.time, coherence_function(&sys.one_body_density_matrix(s, Species::Up), SUPPORT_THRESHOLD).values));
            Ok(())
        })?;
        Ok((e, out))
    };
    let (ea, ga) = trace(&a)?;
    let (eb, gb) = trace(&b)?;
    let times: Vec<f64> = ga.iter().map(|v| v.0).collect();
    let dev = ga.iter().zip(&gb).map(|(x, y)| convergence_deviation(&y.1, &x.1)).collect::<Result<Vec<f64>>>()?;
    let table = Table::new(&["t", "delta_g"], vec![times, dev.clone()])?
        .with_comment(format!("runs: (d_b, d_i) = ({}, {}) vs ({}, {})", a.d_b, a.d_i, b.d_b, b.d_i))
        .with_comment("units: t in 1/omega; delta_g dimensionless");
    write_table_csv(&run.path("convergence.csv"), &table)?;
    let summary = json!({
        "ground_energy": [ea, eb],
        "truncations": [[a.d_b, a.d_i], [b.d_b, b.d_i]],
        "max_delta_g": dev.iter().copied().fold(0.0, f64::max),
    });
    run.finish("convergence", summary)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("PPS_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| Error::InvalidParameter(format!("PPS_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(Error::InvalidParameter("PPS_THREADS must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    configure_threads()?;
    match &cli.verb {
        Verb::Relax(c) => relax(c),
        Verb::Evolve(c) => evolve(c),
        Verb::SweepPump(c) => sweep_pump_verb(c),
        Verb::SweepProbe { common, t_dark } => sweep_probe_verb(common, t_dark),
        Verb::Ramsey(c) => ramsey(c),
        Verb::EthFit { common, input, bath, energy } => eth_fit(common, input, bath, *energy),
        Verb::Units(a) => units(a),
        Verb::Classify { input, out } => classify(input, out),
        Verb::Fit { input, duration, out } => fit(input, *duration, out),
        Verb::Convergence { common, d_b2, d_i2, t } => convergence(common, *d_b2, *d_i2, *t),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
