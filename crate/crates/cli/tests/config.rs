use nvgatesim::gates::Axis;
use nvgatesim::hamiltonian::{ElectronLevel, Polarization, SystemParams};
use nvgatesim_cli::config::{Experiment, Model, NucleusSpec, Spacing, SweepConfig, SweepParameter};
use nvgatesim_cli::steps::{StepSpec, WaitSpec};
use nvgatesim_cli::units::{format_quantity, parse_quantity, Dimension};
use nvgatesim_cli::{parse_config, ExperimentConfig};
use proptest::prelude::*;

#[test]
fn empty_file_gives_defaults() {
    let c = parse_config("").unwrap();
    assert_eq!(c, ExperimentConfig::default());
    assert_eq!(c.experiment, Experiment::Cz);
    assert_eq!(c.system.b, 0.05);
    let p = c.system.params();
    let d = SystemParams::defaults();
    for (a, b) in [(p.d, d.d), (p.e, d.e), (p.a_par, d.a_par), (p.a_perp, d.a_perp), (p.gamma_e, d.gamma_e), (p.b, d.b)] {
        assert!((a / b - 1.0).abs() < 1e-15);
    }
    assert!((p.gamma_n / d.gamma_n - 1.0).abs() < 1e-15);
    assert_eq!(c.noise.params(), nvgatesim::dynamics::NoiseParams::defaults());
}

#[test]
fn field_with_unit_is_converted() {
    let c = parse_config("system.B = \"102.5 mT\"").unwrap();
    assert_eq!(c.system.b, 0.1025);
    let c = parse_config("[system]\nB = \"-0.9477 T\"\n").unwrap();
    assert_eq!(c.system.b, -0.9477);
}

#[test]
fn missing_unit_names_the_key() {
    let e = parse_config("system.B = \"50\"").unwrap_err();
    assert!(e.message.contains("system.B"), "{e}");
    assert!(e.message.contains("unit"), "{e}");
    assert_eq!((e.line, e.column), (Some(1), Some(12)));
}

#[test]
fn wrong_dimension_is_rejected() {
    let e = parse_config("[drive]\namplitude = \"5 mT\"\n").unwrap_err();
    assert!(e.message.contains("drive.amplitude") && e.message.contains("frequency"), "{e}");
    assert_eq!(e.line, Some(2));
}

#[test]
fn unknown_keys_are_rejected() {
    for (text, line) in [("colour = 3", 1), ("[system]\nB = \"1 T\"\nBz = \"1 T\"\n", 3), ("[nosuch]\nx = 1\n", 1)] {
        let e = parse_config(text).unwrap_err();
        assert!(e.message.contains("unknown"), "{e}");
        assert_eq!(e.line, Some(line), "{text}: {e}");
    }
}

#[test]
fn type_mismatches_are_rejected() {
    let cases = [
        "seed = \"seven\"",
        "[grid]\npoints = \"many\"",
        "[noise]\nquasistatic = 1",
        "[drive]\npolarization = \"linear\"",
        "experiment = \"teleport\"",
        "[grid]\npoints = 0",
        "[noise]\nensemble = -3",
    ];
    for text in cases {
        let e = parse_config(text).unwrap_err();
        assert!(e.line.is_some() && e.column.is_some(), "{text}: {e}");
    }
}

#[test]
fn semantic_errors_are_reported() {
    assert!(parse_config("[noise]\nT1e = \"0 s\"").is_err());
    assert!(parse_config("[circuit]\nreadout_error = 1.5").is_err());
    assert!(parse_config("experiment = \"custom_circuit\"").is_err());
    assert!(parse_config("[circuit]\nbasis_rotation = \"wait 1 ns\"").is_err());
    let e = parse_config("[circuit]\nsteps = [\"wait 1 ns\", \"jump\"]").unwrap_err();
    assert_eq!(e.line, Some(2));
    let e = parse_config("[sweep]\nparameter = \"system.Q\"\nvalues = [\"1 T\"]").unwrap_err();
    assert!(e.message.contains("sweep.parameter"), "{e}");
    assert!(parse_config("[sweep]\nparameter = \"system.B\"\nvalues = [1.0]").is_err());
    assert!(parse_config("[sweep]\nparameter = \"noise.nbar_e\"\nvalues = [\"1 T\"]").is_err());
    // a sweep value the library rejects
    assert!(parse_config("[sweep]\nparameter = \"noise.nbar_e\"\nvalues = [0.1, -1.0]").is_err());
}

#[test]
fn unit_conversions() {
    let cases = [
        ("3.03 MHz", Dimension::Frequency, 3.03e6),
        ("2.87GHz", Dimension::Frequency, 2.87e9),
        ("7e3 kHz", Dimension::Frequency, 7e6),
        ("-4.318 kHz/mT", Dimension::GyromagneticRatio, -4.318e6),
        ("28 GHz/T", Dimension::GyromagneticRatio, 28e9),
        ("90 us", Dimension::Time, 90e-6),
        ("165 ns", Dimension::Time, 165e-9),
        ("1.5 µs", Dimension::Time, 1.5e-6),
        ("54 uT", Dimension::Field, 54e-6),
    ];
    for (text, dim, want) in cases {
        assert_eq!(parse_quantity(text, dim).unwrap(), want, "{text}");
    }
    assert_eq!(parse_quantity("inf s", Dimension::Time).unwrap(), f64::INFINITY);
    assert!((parse_quantity("90 deg", Dimension::Angle).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    assert!((parse_quantity("0.25 pi", Dimension::Angle).unwrap() - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    for bad in ["", "mT", "1 2 mT", "1 mT mT", "nan T", "1e mT"] {
        assert!(parse_quantity(bad, Dimension::Field).is_err(), "{bad:?}");
    }
}

#[test]
fn circuit_steps_parse() {
    let s = StepSpec::parse("if 0: nuclear x 180 deg for 7 us; wait 10 ns").unwrap();
    let StepSpec::If { on_zero: true, steps } = &s else { panic!("{s:?}") };
    assert_eq!(steps.len(), 2);
    assert!(matches!(steps[0], StepSpec::Nuclear { axis: Axis::X, electron: ElectronLevel::Plus, duration: Some(_), .. }));
    assert_eq!(steps[1], StepSpec::Wait(WaitSpec::Time(10e-9)));
    assert_eq!(StepSpec::parse("measure keep").unwrap(), StepSpec::Measure { project: false });
    assert!(matches!(StepSpec::parse("nuclear y 1.5 rad on 0").unwrap(), StepSpec::Nuclear { electron: ElectronLevel::Zero, .. }));
    for bad in ["if 0: measure", "if 0: if 1: wait 1 ns", "electron z 1 rad", "wait", "wait 1", "prepare nucleus sideways"] {
        assert!(StepSpec::parse(bad).is_err(), "{bad}");
    }
}

fn rich() -> ExperimentConfig {
    let mut c = ExperimentConfig::defaults(Experiment::CustomCircuit);
    c.seed = 17;
    c.workers = 3;
    c.output = "runs/custom \"quoted\".csv".into();
    c.model = Model::Rwa;
    c.drive.frequency = Some(2.87e9 + 1400e6 / 1.1);
    c.drive.axis = Axis::Y;
    c.drive.polarization = Polarization::Unpolarized;
    c.drive.electron = ElectronLevel::Zero;
    c.noise.t1e = f64::INFINITY;
    c.noise.quasistatic = false;
    c.noise.nbar_n = 0.125;
    c.grid.t_final = Some(1.0 / 3.0 * 1e-6);
    c.grid.t_min = Some(1e-9);
    c.grid.spacing = Spacing::Log;
    c.sweep = Some(SweepConfig { parameter: SweepParameter::ReadoutError, values: vec![0.0, 0.1, 1.0 / 3.0] });
    c.circuit.nucleus = NucleusSpec::Mixed;
    c.circuit.steps = ["measure", "prepare electron +1", "if 0: nuclear x 0.5 pi for 7 us", "wait grid", "measure keep"]
        .iter()
        .map(|s| StepSpec::parse(s).unwrap())
        .collect();
    c.circuit.basis_rotation = Some(StepSpec::parse("nuclear y 90 deg").unwrap());
    c
}

#[test]
fn effective_config_round_trips() {
    let experiments = [
        Experiment::Cz,
        Experiment::ElectronRotation,
        Experiment::NuclearRotation,
        Experiment::CharacterizeHyperfine,
        Experiment::MeasureNucleus,
        Experiment::Resonances,
    ];
    for e in experiments {
        let c = ExperimentConfig::defaults(e);
        assert_eq!(parse_config(&c.to_toml()).unwrap(), c, "{e:?}");
    }
    let c = rich();
    let text = c.to_toml();
    assert_eq!(parse_config(&text).unwrap(), c, "{text}");
    // user-written input, normalized once, is a fixed point
    let user = "experiment = \"nuclear_rotation\"\n[drive]\namplitude = \"189 MHz\"\n[system]\nB = \"102.5 mT\"\n";
    let once = parse_config(user).unwrap();
    assert_eq!(parse_config(&once.to_toml()).unwrap(), once);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn quantities_round_trip(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        for dim in [Dimension::Field, Dimension::Frequency, Dimension::Time, Dimension::Angle, Dimension::GyromagneticRatio] {
            prop_assert_eq!(parse_quantity(&format_quantity(x, dim), dim).unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn random_configs_round_trip(
        b in -2.0..2.0f64,
        amp in 1e3..1e9f64,
        t2 in 1e-7..1e-2f64,
        seed in 0..=i64::MAX as u64,
        points in 1usize..1000,
        values in prop::collection::vec(1e-9..1e-3f64, 1..6),
        angle in -6.0..6.0f64,
    ) {
        let mut c = ExperimentConfig::defaults(Experiment::CustomCircuit);
        c.system.b = b;
        c.drive.amplitude = amp;
        c.noise.t2_star = t2;
        c.seed = seed;
        c.grid.points = points;
        c.sweep = Some(SweepConfig { parameter: SweepParameter::T2Star, values });
        c.circuit.steps = vec![
            StepSpec::Electron { axis: Axis::X, angle, duration: None },
            StepSpec::Wait(WaitSpec::Time(t2)),
        ];
        let back = parse_config(&c.to_toml());
        prop_assert!(back.is_ok(), "{:?}", back);
        prop_assert_eq!(back.unwrap(), c);
    }
}
