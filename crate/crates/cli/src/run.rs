//! Experiment execution and CSV output.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::{Path, PathBuf};

use nvgatesim::circuits::{characterize_hyperfine, measure_nucleus_z, run_circuit, CircuitOptions};
use nvgatesim::dynamics::QuantumState;
use nvgatesim::gates::{
    electron_rotation_time, nuclear_rotation_time, simulate_cz, simulate_electron_rotation, simulate_nuclear_rotation,
    simulate_nuclear_rotation_rwa, GateOptions, GateSeries,
};
use nvgatesim::hamiltonian::{
    basis_index, basis_state, exchange_resonance, strain_resonance, ElectronLevel, NuclearLevel, SystemParams,
};
use nvgatesim::{CMatrix, StateVector, C64};
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig, Model, NucleusSpec, Spacing};

/// Failure of a run, classified for the exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum RunError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl RunError {
    /// 2 for configuration errors, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "configuration error: {m}"),
            RunError::Numerical(m) => write!(f, "numerical failure: {m}"),
            RunError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<nvgatesim::Error> for RunError {
    fn from(e: nvgatesim::Error) -> Self {
        use nvgatesim::Error::*;
        match e {
            InvalidParameter(_) | Resonance(_) | MalformedCircuit(_) => RunError::Config(e.to_string()),
            _ => RunError::Numerical(e.to_string()),
        }
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Io(format!("{}: {e}", path.display()))
}

/// Column names of the data file of `experiment`.
pub fn header(experiment: Experiment) -> &'static [&'static str] {
    match experiment {
        Experiment::Cz => &["time_ns", "error_probability", "leakage"],
        Experiment::ElectronRotation | Experiment::NuclearRotation => {
            &["time_ns", "error_probability", "rotation_angle_rad", "leakage"]
        }
        Experiment::Resonances => &["name", "center_mT", "fwhm_mT"],
        Experiment::CharacterizeHyperfine | Experiment::MeasureNucleus | Experiment::CustomCircuit => {
            &["sweep_value", "p_electron_zero"]
        }
    }
}

/// Per-value summary columns of a sweep. Rotation crossings use the gate
/// angle α of exp(iασ), i.e. half the Bloch angle.
pub fn summary_header(experiment: Experiment) -> &'static [&'static str] {
    match experiment {
        Experiment::Cz => &["t_cz_ns", "error_at_t_cz", "max_leakage"],
        Experiment::ElectronRotation | Experiment::NuclearRotation => {
            &["pi4_time_ns", "pi4_error", "pi2_time_ns", "pi2_error"]
        }
        _ => &[],
    }
}

/// Column names of the sweep index file.
pub fn sweep_header(experiment: Experiment) -> Vec<&'static str> {
    let mut h = vec!["index", "parameter", "value", "unit", "file"];
    h.extend_from_slice(summary_header(experiment));
    h
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> Result<Vec<u8>, RunError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| RunError::Io(e.to_string());
        w.write_record(&self.header).map_err(fail)?;
        for r in &self.rows {
            w.write_record(r).map_err(fail)?;
        }
        w.into_inner().map_err(|e| RunError::Io(e.to_string()))
    }
}

/// Data of one run and its sweep summary values.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub table: Table,
    pub summary: Vec<String>,
}

fn ns(t: f64) -> String {
    format!("{}", t * 1e9)
}

fn prob(x: f64) -> String {
    format!("{x:e}")
}

fn auto_t_final(cfg: &ExperimentConfig, p: &SystemParams) -> Result<f64, RunError> {
    if let Some(t) = cfg.grid.t_final {
        return Ok(t);
    }
    Ok(match cfg.experiment {
        Experiment::Cz => 200e-9,
        Experiment::ElectronRotation => {
            let d = cfg.drive.electron_drive(p);
            electron_rotation_time(&d, PI).max(10e-9)
        }
        Experiment::NuclearRotation => {
            let d = cfg.drive.nuclear_drive(p)?;
            nuclear_rotation_time(p, &d, cfg.drive.electron, PI)?
        }
        Experiment::CharacterizeHyperfine => 4.0 * p.cz_time(),
        _ => p.cz_time(),
    })
}

fn gate_options(cfg: &ExperimentConfig, t_final: f64) -> GateOptions {
    let mut o = GateOptions { seed: cfg.seed, ..GateOptions::default() };
    match cfg.grid.spacing {
        Spacing::Linear => o.points = cfg.grid.points.max(2),
        Spacing::Log => {
            o.points = 2;
            o.extra_times = cfg.grid.times(t_final);
        }
    }
    o
}

fn crossing(s: &GateSeries, theta: f64) -> [String; 2] {
    match s.first_crossing(theta) {
        Some(r) => [ns(r.duration), prob(r.error_probability)],
        None => [String::new(), String::new()],
    }
}

fn rotation_outcome(s: &GateSeries, experiment: Experiment) -> Outcome {
    let rows = s
        .points
        .iter()
        .map(|r| vec![ns(r.duration), prob(r.error_probability), format!("{}", r.rotation_angle.unwrap_or(0.0)), prob(r.leakage)])
        .collect();
    // gate π/4 is Bloch π/2
    let mut summary = crossing(s, FRAC_PI_2).to_vec();
    summary.extend(crossing(s, PI));
    Outcome { table: Table { header: header(experiment).to_vec(), rows }, summary }
}

fn plus_plus() -> StateVector {
    let mut amps = [0.0; 6];
    for e in [ElectronLevel::Plus, ElectronLevel::Zero] {
        for n in [NuclearLevel::Up, NuclearLevel::Down] {
            amps[basis_index(e, n)] = 0.5;
        }
    }
    StateVector::from_real(&amps)
}

fn initial_state(cfg: &ExperimentConfig) -> QuantumState {
    let e = cfg.circuit.electron;
    match cfg.circuit.nucleus {
        NucleusSpec::Up => QuantumState::Pure(basis_state(e, NuclearLevel::Up)),
        NucleusSpec::Down => QuantumState::Pure(basis_state(e, NuclearLevel::Down)),
        NucleusSpec::Mixed => {
            let rho: CMatrix = &basis_state(e, NuclearLevel::Up).density() + &basis_state(e, NuclearLevel::Down).density();
            QuantumState::Mixed(rho.scale(C64::new(0.5, 0.0)))
        }
    }
}

fn circuit_rows(points: Vec<(f64, f64)>, label: impl Fn(f64) -> String) -> Vec<Vec<String>> {
    points.into_iter().map(|(x, p0)| vec![label(x), prob(p0)]).collect()
}

/// Resonance table: exchange and strain anti-crossings.
pub fn resonance_table(p: &SystemParams) -> Result<Table, RunError> {
    let ex = exchange_resonance(p)?;
    let st = strain_resonance(p)?;
    let mt = |x: f64| format!("{}", x * 1e3);
    let rows = [
        ("exchange_lower", ex.lower),
        ("exchange_upper", ex.upper),
        ("strain_up", st.up),
        ("strain_down", st.down),
    ]
    .into_iter()
    .map(|(name, r)| vec![name.to_string(), mt(r.center), mt(r.fwhm)])
    .collect();
    Ok(Table { header: header(Experiment::Resonances).to_vec(), rows })
}

/// Runs one configuration (ignoring its sweep) in memory.
pub fn compute(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let p = cfg.system.params();
    p.validate()?;
    let noise = cfg.noise.params();
    let experiment = cfg.experiment;
    if experiment == Experiment::Resonances {
        return Ok(Outcome { table: resonance_table(&p)?, summary: Vec::new() });
    }
    let t_final = auto_t_final(cfg, &p)?;
    let circuit_opts = CircuitOptions {
        initial_state: initial_state(cfg),
        readout_error: cfg.circuit.readout_error,
        seed: cfg.seed,
        ..CircuitOptions::default()
    };
    match experiment {
        Experiment::Cz => {
            let s = simulate_cz(&p, &noise, &plus_plus(), t_final, &gate_options(cfg, t_final))?;
            let rows = s.points.iter().map(|r| vec![ns(r.duration), prob(r.error_probability), prob(r.leakage)]).collect();
            let t_cz = p.cz_time();
            let summary = match s.at(t_cz) {
                Some(r) if t_cz <= t_final => vec![ns(r.duration), prob(r.error_probability), prob(s.max_leakage(t_cz))],
                _ => vec![String::new(), String::new(), prob(s.max_leakage(t_final))],
            };
            Ok(Outcome { table: Table { header: header(experiment).to_vec(), rows }, summary })
        }
        Experiment::ElectronRotation => {
            let d = cfg.drive.electron_drive(&p);
            let s = simulate_electron_rotation(&p, &noise, &d, cfg.drive.axis, t_final, &gate_options(cfg, t_final))?;
            Ok(rotation_outcome(&s, experiment))
        }
        Experiment::NuclearRotation => {
            let d = cfg.drive.nuclear_drive(&p)?;
            let o = gate_options(cfg, t_final);
            let s = match cfg.model {
                Model::Full => simulate_nuclear_rotation(&p, &noise, &d, cfg.drive.electron, cfg.drive.axis, t_final, &o)?,
                Model::Rwa => simulate_nuclear_rotation_rwa(&p, &d, cfg.drive.electron, cfg.drive.axis, t_final, &o)?,
            };
            Ok(rotation_outcome(&s, experiment))
        }
        Experiment::CharacterizeHyperfine => {
            let drives = cfg.drive.circuit_drives(&p)?;
            let nucleus = match cfg.circuit.nucleus {
                NucleusSpec::Up => NuclearLevel::Up,
                NucleusSpec::Down => NuclearLevel::Down,
                NucleusSpec::Mixed => {
                    return Err(RunError::Config("characterize_hyperfine needs circuit.nucleus = up or down".into()))
                }
            };
            let waits = cfg.grid.times(t_final);
            let pts = characterize_hyperfine(&p, &noise, nucleus, &waits, &drives, &circuit_opts)?;
            Ok(Outcome { table: Table { header: header(experiment).to_vec(), rows: circuit_rows(pts, ns) }, summary: Vec::new() })
        }
        Experiment::MeasureNucleus => {
            let drives = cfg.drive.circuit_drives(&p)?;
            let nuc_amp = 2.0 * PI * cfg.drive.nuclear_amplitude;
            let rotation = cfg.circuit.basis_rotation.as_ref().map(|s| s.to_pulse(&p, &drives, nuc_amp, 0.0)).transpose()?;
            let pts = cfg
                .grid
                .times(t_final)
                .into_par_iter()
                .map(|w| {
                    measure_nucleus_z(&p, &noise, rotation.clone(), &drives, Some(w), &circuit_opts).map(|r| (w, r.p_electron_zero))
                })
                .collect::<nvgatesim::Result<Vec<_>>>()?;
            Ok(Outcome { table: Table { header: header(experiment).to_vec(), rows: circuit_rows(pts, ns) }, summary: Vec::new() })
        }
        Experiment::CustomCircuit => {
            let drives = cfg.drive.circuit_drives(&p)?;
            let nuc_amp = 2.0 * PI * cfg.drive.nuclear_amplitude;
            let gridded = cfg.circuit.steps.iter().any(|s| s.uses_grid());
            let waits = if gridded { cfg.grid.times(t_final) } else { vec![0.0] };
            let pts = waits
                .into_par_iter()
                .map(|w| {
                    let steps = cfg
                        .circuit
                        .steps
                        .iter()
                        .map(|s| s.to_pulse(&p, &drives, nuc_amp, w))
                        .collect::<nvgatesim::Result<Vec<_>>>()?;
                    run_circuit(&steps, &p, &noise, &circuit_opts).map(|r| (w, r.p_electron_zero))
                })
                .collect::<nvgatesim::Result<Vec<_>>>()?;
            let label = |w: f64| if gridded { ns(w) } else { "0".to_string() };
            Ok(Outcome { table: Table { header: header(experiment).to_vec(), rows: circuit_rows(pts, label) }, summary: Vec::new() })
        }
        Experiment::Resonances => unreachable!("handled above"),
    }
}

/// Sweep results in sweep order, computed on up to `workers` threads.
pub fn compute_sweep(cfg: &ExperimentConfig) -> Result<Vec<(f64, Outcome)>, RunError> {
    let Some(sweep) = &cfg.sweep else {
        return Ok(vec![(f64::NAN, compute(cfg)?)]);
    };
    sweep
        .values
        .par_iter()
        .map(|&v| {
            let mut c = cfg.with_parameter(sweep.parameter, v);
            c.sweep = None;
            compute(&c).map(|o| (v, o))
        })
        .collect()
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| io(path, e))
}

fn stem(output: &str) -> &str {
    output.strip_suffix(".csv").unwrap_or(output)
}

/// Metadata sidecar: the effective configuration, which re-runs as is,
/// preceded by the library version.
pub fn metadata(cfg: &ExperimentConfig, files: &[PathBuf]) -> String {
    let names: Vec<String> = files.iter().filter_map(|f| f.file_name()).map(|f| f.to_string_lossy().into_owned()).collect();
    format!(
        "# nvgatesim {}\n# seed {}\n# files {}\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.seed,
        names.join(", "),
        cfg.to_toml()
    )
}

/// Runs `cfg` and writes its files under `out_dir`; returns their paths,
/// metadata last. With `workers == 0` every core is used.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| RunError::Io(format!("thread pool: {e}")))?;
    let results = pool.install(|| compute_sweep(cfg))?;

    let base = out_dir.join(stem(&cfg.output));
    let with_ext = |suffix: &str| {
        let mut s = base.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    };
    let mut files = Vec::new();
    match &cfg.sweep {
        None => {
            let path = with_ext(".csv");
            write(&path, &results[0].1.table.to_csv()?)?;
            files.push(path);
        }
        Some(sweep) => {
            let width = (results.len().saturating_sub(1)).to_string().len();
            let (unit, factor) = sweep.parameter.display_unit();
            let mut index = Table { header: sweep_header(cfg.experiment), rows: Vec::new() };
            for (k, (v, outcome)) in results.iter().enumerate() {
                let path = with_ext(&format!(".{k:0width$}.csv"));
                write(&path, &outcome.table.to_csv()?)?;
                let name = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
                let mut row = vec![k.to_string(), sweep.parameter.path().to_string(), format!("{}", v * factor), unit.to_string(), name];
                row.extend(outcome.summary.iter().cloned());
                index.rows.push(row);
                files.push(path);
            }
            let path = with_ext(".sweep.csv");
            write(&path, &index.to_csv()?)?;
            files.push(path);
        }
    }
    let meta = with_ext(".meta.toml");
    write(&meta, metadata(cfg, &files).as_bytes())?;
    files.push(meta);
    Ok(files)
}
