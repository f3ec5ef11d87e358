use std::fs;
use std::path::Path;

use proptest::prelude::*;

use dirac_core::cli::{run_command, self_checks, EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK};
use dirac_core::config::*;

const PENDULUM: &str = r#"
[system]
kind = "pendulum"
initial_angle = 0.5

[integrator]
scheme = "dirac2"
h = 0.005
steps = 400
"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> i32 {
    run_command(std::iter::once("dirac").chain(args.iter().copied()))
}

#[test]
fn simulate_writes_csv_and_svgs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.toml", PENDULUM);
    let out = dir.path().join("traj.csv");
    let svg = dir.path().join("swept.svg");
    let code = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--svg", svg.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("step,t,q_0,q_1,p_0,p_1,lambda_0,phi_0,energy\n"));
    assert_eq!(csv.lines().count(), 402);
    let cloud = fs::read_to_string(&svg).unwrap();
    assert_eq!(cloud.matches("<circle").count(), 401);
    assert!(fs::read_to_string(dir.path().join("swept-angle.svg")).unwrap().contains("<polyline"));
}

#[test]
fn bench_writes_one_row_per_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.toml", PENDULUM);
    let out = dir.path().join("bench.csv");
    let code = run(&[
        "bench",
        "--config",
        &cfg,
        "--schemes",
        "dirac1,dirac2,euler,trapezium,ab3,rk4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "scheme,constraint_error,energy_drift,periods,wall_time_s");
    assert_eq!(lines.len(), 7);
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["dirac1", "dirac2", "euler", "trapezium", "ab3", "rk4"]);
}

#[test]
fn bench_with_target_periods() {
    let dir = tempfile::tempdir().unwrap();
    let text = PENDULUM.replace("steps = 400", "target_periods = 3");
    let cfg = write(dir.path(), "p.toml", &text);
    let out = dir.path().join("bench.csv");
    assert_eq!(run(&["bench", "--config", &cfg, "--schemes", "rk4", "--out", out.to_str().unwrap()]), EXIT_OK);
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("rk4,"));
    assert_eq!(csv.lines().nth(1).unwrap().split(',').nth(3), Some("3"));
}

#[test]
fn check_passes() {
    assert_eq!(run(&["check"]), EXIT_OK);
    assert!(self_checks(1).iter().all(|c| c.passed));
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", &PENDULUM.replace("dirac2", "verlet"));
    let good = write(dir.path(), "good.toml", PENDULUM);
    assert_eq!(run(&["simulate", "--config", &bad]), EXIT_INVALID);
    assert_eq!(run(&["simulate", "--config", "/nonexistent/p.toml"]), EXIT_INVALID);
    assert_eq!(run(&["bench", "--config", &good, "--schemes", "dirac1,leapfrog"]), EXIT_INVALID);
    assert_eq!(run(&["frobnicate"]), EXIT_INVALID);
    assert_eq!(run(&[]), EXIT_INVALID);
    assert_eq!(run(&["simulate"]), EXIT_INVALID);
    let unwritable = dir.path().join("no").join("such").join("t.csv");
    assert_eq!(run(&["simulate", "--config", &good, "--out", unwritable.to_str().unwrap()]), EXIT_INVALID);
    let garbage = write(dir.path(), "garbage.toml", "[system\nkind = ");
    assert_eq!(run(&["bench", "--config", &garbage]), EXIT_INVALID);
}

#[test]
fn numerical_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // a huge step drives explicit Euler to overflow
    let text = PENDULUM.replace("dirac2", "euler").replace("h = 0.005", "h = 1e3").replace("400", "2000");
    let cfg = write(dir.path(), "p.toml", &text);
    let out = dir.path().join("t.csv");
    assert_eq!(run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]), EXIT_NUMERICAL);
    // the partial trajectory is still written
    assert!(fs::read_to_string(&out).unwrap().lines().count() > 2);
}

#[test]
fn help_exits_zero() {
    assert_eq!(run(&["--help"]), EXIT_OK);
    assert_eq!(run(&["--version"]), EXIT_OK);
}

fn finite(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    lo..hi
}

fn system_config() -> impl Strategy<Value = SystemConfig> {
    let pendulum = (finite(0.1, 10.0), finite(0.1, 20.0), finite(0.1, 5.0), finite(-3.0, 3.0), finite(-2.0, 2.0))
        .prop_map(|(mass, gravity, length, initial_angle, initial_rate)| {
            SystemConfig::Pendulum(PendulumConfig { mass, gravity, length, initial_angle, initial_rate })
        });
    let ziegler = (1usize..4)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0.1..3.0f64, n),
                prop::collection::vec(0.1..3.0f64, n),
                finite(0.0, 50.0),
                finite(-10.0, 10.0),
                prop::collection::vec(-1.0..1.0f64, n),
                prop::option::of(prop::collection::vec(-1.0..1.0f64, n)),
            )
        })
        .prop_map(|(lengths, masses, stiffness, load, initial_angles, initial_rates)| {
            SystemConfig::Ziegler(ZieglerConfig { lengths, masses, stiffness, load, initial_angles, initial_rates })
        });
    prop_oneof![pendulum, ziegler]
}

fn run_config() -> impl Strategy<Value = RunConfig> {
    let names = prop::sample::select(vec!["dirac1", "dirac2", "euler", "trapezium", "ab3", "rk4"]);
    let duration = prop_oneof![(1usize..100_000).prop_map(|s| (Some(s), None)), (1usize..500).prop_map(|p| (None, Some(p)))];
    let path = prop::option::of("[a-z]{1,8}\\.(csv|svg)");
    (system_config(), names, finite(1e-6, 0.1), duration, path.clone(), path.clone(), path).prop_map(
        |(system, scheme, h, (steps, target_periods), trajectory, bench, svg)| RunConfig {
            system,
            integrator: IntegratorConfig { scheme: scheme.to_string(), h, steps, target_periods },
            output: OutputConfig {
                trajectory: trajectory.map(Into::into),
                bench: bench.map(Into::into),
                svg: svg.map(Into::into),
            },
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn parse_inverts_serialize(config in run_config()) {
        let text = config.to_toml();
        prop_assert_eq!(parse_config(&text).unwrap(), config);
    }

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
        let _ = parse_config(&text);
    }
}
