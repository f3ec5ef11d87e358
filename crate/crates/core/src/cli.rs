//! Command-line front end: `simulate`, `bench` and `check`.
//!
//! Exit codes: 0 on success, 1 for invalid input (arguments, configuration,
//! unwritable outputs), 2 for numerical failure or a failing self-check.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_config, Duration, RunConfig};
use crate::geometry::{
    basis_rank, canonical_two_forms, dirac_fiber_basis, gamma, kappa, kappa_inv, omega_flat,
    omega_flat_inv, pair_isotropy, CotangentOfTangentCovector, ConstraintFiber, DoubleTangentVector,
};
use crate::harness::{
    angle_series, benchmark_steps, benchmark_table, simulate, steps_for_periods, swept_region,
    write_bench_csv, write_trajectory_csv, HarnessError,
};
use crate::integrators::SchemeId;
use crate::models::{chain_configuration, pendulum_system, validate_derivatives, ziegler_system};
use crate::svg::{emit_svg, PlotData};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dirac", version, about = "Dirac integrators for constrained mechanical systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scheme and write the trajectory CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Trajectory CSV path (overrides the config; stdout if neither is set).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Swept-region SVG path; the angle series goes next to it.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Run several schemes over the same duration and tabulate drift.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated scheme names (default: all six).
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<String>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the geometry and derivative self-checks.
    Check,
}

/// Failure carrying its exit code.
struct Failure {
    code: i32,
    message: String,
}

fn invalid(message: impl ToString) -> Failure {
    Failure { code: EXIT_INVALID, message: message.to_string() }
}

fn numerical(message: impl ToString) -> Failure {
    Failure { code: EXIT_NUMERICAL, message: message.to_string() }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Step { .. } | HarnessError::NoOscillation => numerical(e),
            _ => invalid(e),
        }
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Simulate { config, out, svg } => run_simulate(&config, out, svg),
        Command::Bench { config, schemes, out } => run_bench(&config, schemes, out),
        Command::Check => run_check(),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<fs::File, Failure> {
    fs::File::create(path).map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))
}

fn run_simulate(config: &Path, out: Option<PathBuf>, svg: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load(config)?;
    let (system, initial) = cfg.build().map_err(invalid)?;
    let h = cfg.integrator.h;
    let steps = match cfg.duration() {
        Duration::Steps(s) => s,
        Duration::Periods(p) => steps_for_periods(&system, &initial, 0, h, p)?,
    };
    let traj = simulate(&system, cfg.scheme(), &initial, h, steps)?;

    match out.or_else(|| cfg.output.trajectory.clone()) {
        Some(path) => write_trajectory_csv(&traj, &system, create(&path)?)?,
        None => write_trajectory_csv(&traj, &system, std::io::stdout().lock())?,
    }

    if let Some(path) = svg.or_else(|| cfg.output.svg.clone()) {
        let joint = system.num_constraints().saturating_sub(1);
        let region = swept_region(&traj, joint);
        let title = format!("{}: joint {} positions, h = {h}", traj.scheme, joint + 1);
        emit_svg(PlotData::Points(&region.points), &title, &path).map_err(invalid)?;

        let series: Vec<(f64, f64)> = traj
            .states
            .iter()
            .zip(angle_series(&traj, &system, 0))
            .map(|(s, a)| (s.t, a))
            .collect();
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let angle_path = path.with_file_name(format!("{stem}-angle.svg"));
        let title = format!("{}: first joint angle", traj.scheme);
        emit_svg(PlotData::Series(&series), &title, &angle_path).map_err(invalid)?;
    }

    match traj.failure {
        Some((k, e)) => Err(numerical(format!("{} failed at step {k}: {e}", traj.scheme))),
        None => Ok(()),
    }
}

fn run_bench(config: &Path, schemes: Option<Vec<String>>, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load(config)?;
    let schemes: Vec<SchemeId> = match schemes {
        Some(names) => names
            .iter()
            .map(|n| SchemeId::from_str(n.trim()).map_err(invalid))
            .collect::<Result<_, _>>()?,
        None => SchemeId::ALL.to_vec(),
    };
    if schemes.is_empty() {
        return Err(invalid("no schemes given"));
    }
    let (system, initial) = cfg.build().map_err(invalid)?;
    let h = cfg.integrator.h;
    let report = match cfg.duration() {
        Duration::Steps(s) => benchmark_steps(&system, &schemes, &initial, s, h)?,
        Duration::Periods(p) => benchmark_table(&system, &schemes, &initial, p, h)?,
    };

    let mut text = Vec::new();
    write_bench_csv(&report, &mut text)?;
    std::io::stdout().write_all(&text).map_err(invalid)?;
    if let Some(path) = out.or_else(|| cfg.output.bench.clone()) {
        fs::write(&path, &text).map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))?;
    }

    let failed: Vec<String> = report
        .rows
        .iter()
        .filter_map(|r| r.failure.as_ref().map(|f| format!("{}: {f}", r.scheme)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(numerical(failed.join("; ")))
    }
}

/// One named self-check and its worst observed value against a bound.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

fn outcome(name: &'static str, value: f64, bound: f64) -> CheckOutcome {
    CheckOutcome { name, value, bound, passed: value <= bound }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// The self-check suite behind `dirac check`, seeded for reproducibility.
pub fn self_checks(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::new();

    let mut worst_iso = 0.0_f64;
    let mut rank_misses = 0usize;
    for _ in 0..1000 {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(0..n);
        let g = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let (q, p) = (random_vec(&mut rng, n), random_vec(&mut rng, n));
        let basis = ConstraintFiber::from_gradients(g).and_then(|f| dirac_fiber_basis(&f, &q, &p));
        match basis {
            Ok(b) => {
                worst_iso = worst_iso.max(pair_isotropy(&b).unwrap_or(f64::INFINITY));
                rank_misses += usize::from(basis_rank(&b) != 2 * n);
            }
            Err(_) => rank_misses += 1,
        }
    }
    results.push(outcome("isotropy on 1000 random fibers", worst_iso, 1e-12));
    results.push(outcome("fiber basis rank 2n", rank_misses as f64, 0.0));

    let mut forms = 0.0_f64;
    for n in 1..=6 {
        forms = match canonical_two_forms(n) {
            Ok((w1, w2)) => forms.max((w1 + w2).amax()),
            Err(_) => f64::INFINITY,
        };
    }
    results.push(outcome("two-forms sum to zero", forms, 0.0));

    let mut round_trip = 0.0_f64;
    let mut composition = 0.0_f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=6);
        let w = DoubleTangentVector {
            q: random_vec(&mut rng, n),
            p: random_vec(&mut rng, n),
            vq: random_vec(&mut rng, n),
            vp: random_vec(&mut rng, n),
        };
        let diff = |a: &DoubleTangentVector| (a.to_coords() - w.to_coords()).amax();
        round_trip = round_trip.max(diff(&omega_flat_inv(&omega_flat(&w)))).max(diff(&kappa_inv(&kappa(&w))));
        let c = CotangentOfTangentCovector {
            q: random_vec(&mut rng, n),
            v: random_vec(&mut rng, n),
            xi: random_vec(&mut rng, n),
            psi: random_vec(&mut rng, n),
        };
        let direct = gamma(&c).to_coords();
        let composed = omega_flat(&kappa_inv(&c)).to_coords();
        composition = composition.max((direct - composed).amax());
    }
    results.push(outcome("map round trips", round_trip, 0.0));
    results.push(outcome("gamma matches composition", composition, 1e-12));

    let mut deriv = f64::INFINITY;
    if let (Ok(pendulum), Ok(ziegler)) =
        (pendulum_system(1.0, 9.81, 1.0), ziegler_system(&[1.0, 0.7], &[1.0, 2.0], 3.0, 0.8))
    {
        let pend_samples: Vec<_> = (0..100)
            .map(|_| {
                let a: f64 = rng.random_range(-3.0..3.0);
                let r = 1.0 + rng.random_range(-1e-3..1e-3);
                DVector::from_vec(vec![r * a.sin(), -r * a.cos()])
            })
            .collect();
        let chain_samples: Vec<_> = (0..100)
            .map(|_| {
                let angles = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
                chain_configuration(&angles, &[1.0, 0.7]) + random_vec(&mut rng, 4) * 1e-3
            })
            .collect();
        deriv = [(pendulum, pend_samples), (ziegler, chain_samples)]
            .iter()
            .map(|(s, q)| validate_derivatives(s, q, 1e-6).map_or(f64::INFINITY, |r| r.max_error()))
            .fold(0.0, f64::max);
    }
    results.push(outcome("derivative validation", deriv, 1e-6));
    results
}

fn run_check() -> Result<(), Failure> {
    let results = self_checks(0x5eed);
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status} {} (worst {:.3e}, bound {:.1e})", r.name, r.value, r.bound);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(numerical(format!("{failed} self-check(s) failed")))
    }
}
