use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use nvgatesim_cli::config::SystemConfig;
use nvgatesim_cli::run::resonance_table;
use nvgatesim_cli::{parse_config, run, RunError};

const QUIET: &str = "[noise]\nT1e = \"inf s\"\nT1n = \"inf s\"\nT2n = \"inf s\"\nquasistatic = false\n";

fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    fs::read_to_string(path).unwrap().trim_end().to_string()
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

fn run_text(text: &str, dir: &Path) -> Vec<PathBuf> {
    let cfg = parse_config(text).unwrap_or_else(|e| panic!("{e}\n{text}"));
    run(&cfg, dir).unwrap()
}

#[test]
fn data_headers_match_golden_files() {
    let cases = [
        ("cz", "experiment = \"cz\"\n[grid]\nt_final = \"10 ns\"\npoints = 3\n"),
        ("electron_rotation", "experiment = \"electron_rotation\"\n[grid]\nt_final = \"2 ns\"\npoints = 3\n"),
        ("nuclear_rotation", "experiment = \"nuclear_rotation\"\n[grid]\nt_final = \"20 ns\"\npoints = 2\n"),
        ("characterize_hyperfine", "experiment = \"characterize_hyperfine\"\n[grid]\nt_final = \"20 ns\"\npoints = 2\n"),
        ("measure_nucleus", "experiment = \"measure_nucleus\"\n"),
        ("custom_circuit", "experiment = \"custom_circuit\"\n[circuit]\nsteps = [\"electron x 90 deg\", \"wait grid\", \"measure\"]\n[grid]\nt_final = \"5 ns\"\npoints = 2\n"),
        ("resonances", "experiment = \"resonances\"\n"),
    ];
    for (name, body) in cases {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("{body}{}", QUIET.replace("[noise]\n", "[noise]\nensemble = 1\n"));
        let files = run_text(&text, dir.path());
        assert_eq!(files.len(), 2, "{name}: {files:?}");
        assert_eq!(first_line(&files[0]), golden(&format!("{name}.csv")), "{name}");
        let rows = fs::read_to_string(&files[0]).unwrap().lines().count();
        assert!(rows >= 2, "{name}: no data rows");
    }
}

#[test]
fn sweep_index_headers_match_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "experiment = \"cz\"\n[grid]\npoints = 3\nt_final = \"10 ns\"\n[sweep]\nparameter = \"noise.nbar_e\"\nvalues = [0.0, 0.5]\n{QUIET}"
    );
    let files = run_text(&text, dir.path());
    let names: Vec<String> = files.iter().map(|f| f.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["cz.0.csv", "cz.1.csv", "cz.sweep.csv", "cz.meta.toml"]);
    assert_eq!(first_line(&files[2]), golden("cz.sweep.csv"));

    let text = "experiment = \"electron_rotation\"\n[grid]\nt_final = \"2 ns\"\npoints = 3\n[sweep]\nparameter = \"drive.amplitude\"\nvalues = [\"125 MHz\"]\n";
    let files = run_text(&format!("{text}{QUIET}"), dir.path());
    assert_eq!(first_line(&files[1]), golden("electron_rotation.sweep.csv"));
    let index = fs::read_to_string(&files[1]).unwrap();
    assert!(index.lines().nth(1).unwrap().starts_with("0,drive.amplitude,125,MHz,electron_rotation.0.csv,"), "{index}");
}

#[test]
fn metadata_reruns_to_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let text = "experiment = \"cz\"\nseed = 11\n[grid]\nt_final = \"10 ns\"\npoints = 3\n[noise]\nensemble = 3\n";
    let files = run_text(text, dir.path());
    let meta = fs::read_to_string(&files[1]).unwrap();
    assert!(meta.starts_with(&format!("# nvgatesim {}\n# seed 11\n", env!("CARGO_PKG_VERSION"))), "{meta}");
    let again = tempfile::tempdir().unwrap();
    let files2 = run_text(&meta, again.path());
    assert_eq!(fs::read(&files[0]).unwrap(), fs::read(&files2[0]).unwrap());
    assert_eq!(meta, fs::read_to_string(&files2[1]).unwrap());
}

#[test]
fn fixed_seed_is_byte_identical() {
    let text = "experiment = \"cz\"\nseed = 5\n[grid]\nt_final = \"20 ns\"\npoints = 4\n[noise]\nensemble = 4\n[sweep]\nparameter = \"noise.T2star\"\nvalues = [\"5 us\", \"20 us\"]\n";
    let read_all = |files: &[PathBuf]| files.iter().map(|f| fs::read(f).unwrap()).collect::<Vec<_>>();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = read_all(&run_text(text, a.path()));
    assert_eq!(first, read_all(&run_text(text, b.path())));

    let c = tempfile::tempdir().unwrap();
    let other = read_all(&run_text(&text.replace("seed = 5", "seed = 6"), c.path()));
    assert_ne!(first[0], other[0], "seed had no effect");
}

#[test]
fn worker_count_does_not_change_output() {
    let base = "experiment = \"electron_rotation\"\nseed = 3\n[grid]\nt_final = \"3 ns\"\npoints = 4\n[noise]\nensemble = 2\n[sweep]\nparameter = \"drive.amplitude\"\nfrom = \"100 MHz\"\nto = \"300 MHz\"\npoints = 5\n";
    let mut outputs = Vec::new();
    for workers in [1, 4] {
        let dir = tempfile::tempdir().unwrap();
        let files = run_text(&format!("workers = {workers}\n{base}"), dir.path());
        let data: Vec<Vec<u8>> = files[..files.len() - 1].iter().map(|f| fs::read(f).unwrap()).collect();
        outputs.push(data);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn sweep_of_one_value_matches_single_run() {
    let single = "experiment = \"cz\"\n[system]\nB = \"60 mT\"\n[grid]\nt_final = \"10 ns\"\npoints = 3\n[noise]\nensemble = 2\n";
    let swept = "experiment = \"cz\"\n[grid]\nt_final = \"10 ns\"\npoints = 3\n[noise]\nensemble = 2\n[sweep]\nparameter = \"system.B\"\nvalues = [\"60 mT\"]\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let one = run_text(single, a.path());
    let many = run_text(swept, b.path());
    assert_eq!(fs::read(&one[0]).unwrap(), fs::read(&many[0]).unwrap());
}

#[test]
fn resonances_are_ordered_and_positive_width() {
    let table = resonance_table(&SystemConfig::default().params()).unwrap();
    let names: Vec<&str> = table.rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["exchange_lower", "exchange_upper", "strain_up", "strain_down"]);
    for row in &table.rows {
        let fwhm: f64 = row[2].parse().unwrap();
        assert!(fwhm > 0.0 && fwhm < 1.0, "{row:?}");
    }
}

/// Sweeping the field across the upper exchange resonance with noise off,
/// the largest CZ error sits within one linewidth of the predicted centre.
#[test]
fn field_sweep_finds_exchange_resonance() {
    let table = resonance_table(&SystemConfig::default().params()).unwrap();
    let row = &table.rows[1];
    let center: f64 = row[1].parse().unwrap();
    let fwhm: f64 = row[2].parse().unwrap();

    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "experiment = \"cz\"\n[grid]\npoints = 2\n[sweep]\nparameter = \"system.B\"\nfrom = \"101.5 mT\"\nto = \"103.5 mT\"\npoints = 21\n{QUIET}"
    );
    let files = run_text(&text, dir.path());
    let index = fs::read_to_string(files.iter().find(|f| f.to_string_lossy().ends_with(".sweep.csv")).unwrap()).unwrap();
    let mut rdr = csv::Reader::from_reader(index.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "error_at_t_cz").unwrap();
    let points: Vec<(f64, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[2].parse().unwrap(), r[col].parse().unwrap())
        })
        .collect();
    let (b_peak, e_peak) = points.iter().cloned().fold((0.0, f64::MIN), |m, p| if p.1 > m.1 { p } else { m });
    let e_far = points[0].1.max(points[points.len() - 1].1);
    assert!((b_peak - center).abs() <= fwhm, "peak {b_peak} mT, centre {center} mT, fwhm {fwhm} mT");
    assert!(e_peak > 10.0 * e_far, "no spike: {points:?}");
}

#[test]
fn library_errors_map_to_exit_codes() {
    use nvgatesim::Error;
    let config: RunError = Error::InvalidParameter("x".into()).into();
    assert_eq!(config.exit_code(), 2);
    let config: RunError = Error::Resonance("x".into()).into();
    assert_eq!(config.exit_code(), 2);
    let numerical: RunError = Error::StepSizeUnderflow { t: 1e-9, h: 1e-30 }.into();
    assert_eq!(numerical.exit_code(), 3);
    let numerical: RunError = Error::TooManySteps { t: 1e-9, max_steps: 10 }.into();
    assert_eq!(numerical.exit_code(), 3);
    assert_eq!(RunError::Io("disk".into()).exit_code(), 1);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nvgatesim"))
}

#[test]
fn binary_validate_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, "system.B = \"102.5 mT\"\n").unwrap();
    let out = bin().arg("validate").arg(&good).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let printed = String::from_utf8(out.stdout).unwrap();
    assert_eq!(parse_config(&printed).unwrap().system.b, 0.1025);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "system.B = \"50\"\n").unwrap();
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("system.B") && err.contains("line 1"), "{err}");

    let out = bin().arg("run").arg(dir.path().join("missing.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // output directory blocked by a regular file
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    fs::write(&good, "experiment = \"resonances\"\n").unwrap();
    let out = bin().arg("run").arg(&good).arg("--output").arg(blocker.join("sub")).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn binary_run_and_resonances() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("r.toml");
    fs::write(&cfg, "experiment = \"resonances\"\noutput = \"res/out.csv\"\n").unwrap();
    let out = bin().arg("run").arg(&cfg).arg("--output").arg(dir.path()).arg("--seed").arg("9").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let listed = String::from_utf8(out.stdout).unwrap();
    assert_eq!(listed.lines().count(), 2);
    let meta = fs::read_to_string(dir.path().join("res/out.meta.toml")).unwrap();
    assert!(meta.contains("# seed 9"));

    let out = bin().args(["resonances", "--b-field", "102.5 mT"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("name,center_mT,fwhm_mT,offset_fwhm\n"), "{text}");
    let out = bin().args(["resonances", "--b-field", "102.5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
