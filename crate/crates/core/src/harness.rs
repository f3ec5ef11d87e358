//! Trajectory simulation, drift diagnostics and the scheme benchmark.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

use crate::integrators::{
    classical_step, constrained_accel, dirac1_step, dirac2_step, SchemeId, StepError, StepResiduals,
};
use crate::models::{
    chain_configuration, constraint_residuals, energy, joint_angles, pendulum_system,
    project_momentum, ziegler_system, MechanicalSystem, ModelError, State, SystemKind,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("at least one step is required")]
    ZeroSteps,
    #[error("timestep must be positive and finite, got {0}")]
    InvalidTimestep(f64),
    #[error("target period count must be at least 1")]
    ZeroPeriods,
    #[error("initial state has dimension {found}, system has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("reference run found no oscillation to measure a period from")]
    NoOscillation,
    #[error("step {index} failed: {source}")]
    Step {
        index: usize,
        #[source]
        source: StepError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A uniformly sampled run of one scheme.
///
/// `lambdas[k]` is the multiplier attached to `states[k]`: for Dirac schemes
/// the one solved in the step that produced it (zero for the initial state),
/// for classical schemes the continuous multiplier at that state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub scheme: SchemeId,
    pub h: f64,
    pub states: Vec<State>,
    pub lambdas: Vec<DVector<f64>>,
    pub phi: Vec<DVector<f64>>,
    pub energy: Vec<f64>,
    /// Discrete-system residuals of each Dirac step (empty for classical).
    pub residuals: Vec<StepResiduals>,
    /// Step index and error if the run stopped early.
    pub failure: Option<(usize, StepError)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.max()))
    }

    pub fn into_result(self) -> Result<Self, HarnessError> {
        match self.failure {
            Some((index, source)) => Err(HarnessError::Step { index, source }),
            None => Ok(self),
        }
    }

    fn record(&mut self, system: &MechanicalSystem, state: State, lambda: DVector<f64>) {
        self.phi.push(constraint_residuals(system, &state.q));
        self.energy.push(energy(system, &state));
        self.lambdas.push(lambda);
        self.states.push(state);
    }
}

fn classical_lambda(system: &MechanicalSystem, s: &State) -> Result<DVector<f64>, StepError> {
    let v = system.mass_inv() * &s.p;
    constrained_accel(system, &s.q, &v).map(|(_, l)| l)
}

/// Advances `initial` by `steps` steps of `scheme`. Stepper failures stop
/// the run and are reported in [`Trajectory::failure`]; the states computed
/// so far are kept.
///
/// Dirac-2 takes its first step with Dirac-1; AB3 takes its first two with
/// RK4.
pub fn simulate(
    system: &MechanicalSystem,
    scheme: SchemeId,
    initial: &State,
    h: f64,
    steps: usize,
) -> Result<Trajectory, HarnessError> {
    if steps == 0 {
        return Err(HarnessError::ZeroSteps);
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(HarnessError::InvalidTimestep(h));
    }
    for v in [&initial.q, &initial.p] {
        if v.len() != system.dim() {
            return Err(HarnessError::DimensionMismatch { expected: system.dim(), found: v.len() });
        }
    }
    let m = system.num_constraints();
    let mut traj = Trajectory {
        scheme,
        h,
        states: Vec::with_capacity(steps + 1),
        lambdas: Vec::with_capacity(steps + 1),
        phi: Vec::with_capacity(steps + 1),
        energy: Vec::with_capacity(steps + 1),
        residuals: Vec::new(),
        failure: None,
    };
    let first_lambda = if scheme.is_dirac() {
        Ok(DVector::zeros(m))
    } else {
        classical_lambda(system, initial)
    };
    match first_lambda {
        Ok(l) => traj.record(system, initial.clone(), l),
        Err(e) => {
            traj.record(system, initial.clone(), DVector::zeros(m));
            traj.failure = Some((0, e));
            return Ok(traj);
        }
    }
    let t0 = initial.t;

    for k in 0..steps {
        let t_next = t0 + (k + 1) as f64 * h;
        let outcome: Result<(State, DVector<f64>, Option<StepResiduals>), StepError> = match scheme {
            SchemeId::Dirac1 => dirac1_step(system, &traj.states[k], h)
                .map(|r| (r.state, r.lambda, Some(r.residuals))),
            SchemeId::Dirac2 if k == 0 => dirac1_step(system, &traj.states[0], h)
                .map(|r| (r.state, r.lambda, Some(r.residuals))),
            SchemeId::Dirac2 => dirac2_step(system, &traj.states[k - 1], &traj.states[k], h)
                .map(|r| (r.state, r.lambda, Some(r.residuals))),
            SchemeId::AB3 if k < 2 => classical_step(SchemeId::RK4, system, &traj.states[k..=k], h)
                .and_then(|s| Ok((classical_lambda(system, &s)?, s)))
                .map(|(l, s)| (s, l, None)),
            classical => {
                let start = (k + 1).saturating_sub(classical.history_len());
                classical_step(classical, system, &traj.states[start..=k], h)
                    .and_then(|s| Ok((classical_lambda(system, &s)?, s)))
                    .map(|(l, s)| (s, l, None))
            }
        };
        match outcome {
            Ok((mut state, lambda, res)) => {
                // keep the grid exactly uniform
                state.t = t_next;
                if let Some(r) = res {
                    traj.residuals.push(r);
                }
                traj.record(system, state, lambda);
            }
            Err(e) => {
                traj.failure = Some((k + 1, e));
                break;
            }
        }
    }
    Ok(traj)
}

/// Largest relative rod-length error `| |segment| − l | / l` over all
/// recorded states and constraints. Constraints without a rod length
/// contribute `|φ|`.
pub fn constraint_error(trajectory: &Trajectory, system: &MechanicalSystem) -> f64 {
    let mut worst = 0.0_f64;
    for s in &trajectory.states {
        worst = worst.max(state_constraint_error(system, &s.q));
    }
    worst
}

pub fn state_constraint_error(system: &MechanicalSystem, q: &DVector<f64>) -> f64 {
    system.constraints().iter().fold(0.0_f64, |m, c| {
        let e = match (c.rod_length(), c.current_length(q)) {
            (Some(l), Some(len)) => (len - l).abs() / l,
            _ => c.value(q).abs(),
        };
        m.max(e)
    })
}

/// `max_k |E_k − E_0| / (|E_0| + 1)`.
pub fn energy_drift(trajectory: &Trajectory) -> f64 {
    let Some(&e0) = trajectory.energy.first() else {
        return 0.0;
    };
    trajectory.energy.iter().fold(0.0_f64, |m, e| m.max((e - e0).abs())) / (e0.abs() + 1.0)
}

/// Scalar angle used for period counting and angle plots: the pendulum
/// angle from the downward vertical, `atan2(x, −y)`, or for chains the
/// joint angle `θ_joint` measured from the upward vertical.
pub fn observed_angle(system: &MechanicalSystem, q: &DVector<f64>, joint: usize) -> f64 {
    match system.kind() {
        SystemKind::Pendulum => q[0].atan2(-q[1]),
        _ => joint_angles(system, q)
            .ok()
            .and_then(|a| a.get(joint).copied())
            .unwrap_or(f64::NAN),
    }
}

pub fn angle_series(trajectory: &Trajectory, system: &MechanicalSystem, joint: usize) -> Vec<f64> {
    trajectory.states.iter().map(|s| observed_angle(system, &s.q, joint)).collect()
}

/// Removes `2π` jumps so that a rotating angle accumulates.
pub fn unwrap_angles(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &a in angles {
        if let Some(p) = prev {
            let d = a - p;
            if d > PI {
                offset -= 2.0 * PI;
            } else if d < -PI {
                offset += 2.0 * PI;
            }
        }
        prev = Some(a);
        out.push(a + offset);
    }
    out
}

/// Indices `k` at which `signal − mean` changes sign between `k` and `k+1`.
fn crossings(signal: &[f64]) -> Vec<usize> {
    if signal.is_empty() {
        return Vec::new();
    }
    let mean = signal.iter().sum::<f64>() / signal.len() as f64;
    let mut out = Vec::new();
    let mut prev_neg = signal[0] < mean;
    for (k, &x) in signal.iter().enumerate().skip(1) {
        let neg = x < mean;
        if neg != prev_neg {
            out.push(k - 1);
        }
        prev_neg = neg;
    }
    out
}

/// Completed oscillation periods: sign changes of the deviation from the
/// time mean, counted in pairs.
pub fn count_periods_in(signal: &[f64]) -> usize {
    let c = crossings(signal).len();
    if c < 2 {
        0
    } else {
        c / 2
    }
}

pub fn count_periods(trajectory: &Trajectory, system: &MechanicalSystem, joint: usize) -> usize {
    count_periods_in(&angle_series(trajectory, system, joint))
}

/// Oscillation period of `signal` sampled at step `h`, from linearly
/// interpolated crossing times. `None` if fewer than three crossings.
pub fn measured_period(signal: &[f64], h: f64) -> Option<f64> {
    let mean = signal.iter().sum::<f64>() / signal.len() as f64;
    let times: Vec<f64> = crossings(signal)
        .into_iter()
        .map(|k| {
            let (a, b) = (signal[k] - mean, signal[k + 1] - mean);
            (k as f64 + a / (a - b)) * h
        })
        .collect();
    if times.len() < 3 {
        return None;
    }
    let half_periods = (times.len() - 1) as f64;
    Some(2.0 * (times[times.len() - 1] - times[0]) / half_periods)
}

/// Period of the observed angle along a fine RK4 reference run with step
/// `h / 4`, measured over at least four periods.
pub fn reference_period(
    system: &MechanicalSystem,
    initial: &State,
    joint: usize,
    h: f64,
) -> Result<f64, HarnessError> {
    let h_ref = h / 4.0;
    let mut steps = 4096usize;
    while steps <= 1 << 24 {
        let traj = simulate(system, SchemeId::RK4, initial, h_ref, steps)?.into_result()?;
        let signal = angle_series(&traj, system, joint);
        if crossings(&signal).len() >= 9 {
            return measured_period(&signal, h_ref).ok_or(HarnessError::NoOscillation);
        }
        steps *= 2;
    }
    Err(HarnessError::NoOscillation)
}

/// Number of steps of size `h` covering `periods` reference periods.
pub fn steps_for_periods(
    system: &MechanicalSystem,
    initial: &State,
    joint: usize,
    h: f64,
    periods: usize,
) -> Result<usize, HarnessError> {
    if periods == 0 {
        return Err(HarnessError::ZeroPeriods);
    }
    let t_ref = reference_period(system, initial, joint, h)?;
    Ok((periods as f64 * t_ref / h).round().max(1.0) as usize)
}

/// Mean of the last `fraction` of a series.
pub fn tail_mean(series: &[f64], fraction: f64) -> f64 {
    let start = ((1.0 - fraction) * series.len() as f64).floor() as usize;
    let tail = &series[start.min(series.len().saturating_sub(1))..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweptRegion {
    pub points: Vec<(f64, f64)>,
    pub min_radius: f64,
    pub max_radius: f64,
}

impl SweptRegion {
    pub fn annulus_width(&self) -> f64 {
        self.max_radius - self.min_radius
    }
}

/// Positions of joint `joint` (zero-based) over the run, with the range of
/// its distance from the previous joint (the pivot for the first one).
pub fn swept_region(trajectory: &Trajectory, joint: usize) -> SweptRegion {
    let mut points = Vec::with_capacity(trajectory.len());
    let mut min_radius = f64::INFINITY;
    let mut max_radius = f64::NEG_INFINITY;
    for s in &trajectory.states {
        let (x, y) = (s.q[2 * joint], s.q[2 * joint + 1]);
        let (px, py) = if joint == 0 { (0.0, 0.0) } else { (s.q[2 * joint - 2], s.q[2 * joint - 1]) };
        let r = (x - px).hypot(y - py);
        min_radius = min_radius.min(r);
        max_radius = max_radius.max(r);
        points.push((x, y));
    }
    SweptRegion { points, min_radius, max_radius }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub scheme: SchemeId,
    pub constraint_error: f64,
    pub energy_drift: f64,
    pub periods: usize,
    pub steps: usize,
    pub wall_time_s: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub h: f64,
    pub target_periods: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, scheme: SchemeId) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.scheme == scheme)
    }
}

/// Runs every requested scheme over the same physical duration,
/// `target_periods` periods of a fine RK4 reference run, in parallel.
/// A failing scheme yields a row with `failure` set.
pub fn benchmark_table(
    system: &MechanicalSystem,
    schemes: &[SchemeId],
    initial: &State,
    target_periods: usize,
    h: f64,
) -> Result<BenchReport, HarnessError> {
    let steps = steps_for_periods(system, initial, 0, h, target_periods)?;
    benchmark_steps(system, schemes, initial, steps, h).map(|mut r| {
        r.target_periods = target_periods;
        r
    })
}

/// Same as [`benchmark_table`] with an explicit step count.
pub fn benchmark_steps(
    system: &MechanicalSystem,
    schemes: &[SchemeId],
    initial: &State,
    steps: usize,
    h: f64,
) -> Result<BenchReport, HarnessError> {
    if steps == 0 {
        return Err(HarnessError::ZeroSteps);
    }
    let rows = schemes
        .par_iter()
        .map(|&scheme| {
            let start = Instant::now();
            let traj = simulate(system, scheme, initial, h, steps)?;
            let wall = start.elapsed().as_secs_f64();
            Ok(BenchRow {
                scheme,
                constraint_error: constraint_error(&traj, system),
                energy_drift: energy_drift(&traj),
                periods: count_periods(&traj, system, 0),
                steps: traj.len() - 1,
                wall_time_s: wall,
                failure: traj.failure.map(|(k, e)| format!("step {k}: {e}")),
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(BenchReport { h, target_periods: 0, rows })
}

/// Trajectory CSV: `step, t, q_*, p_*, lambda_*, phi_*, energy`.
pub fn write_trajectory_csv<W: Write>(
    trajectory: &Trajectory,
    system: &MechanicalSystem,
    out: W,
) -> Result<(), HarnessError> {
    let n = system.dim();
    let m = system.num_constraints();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string(), "t".to_string()];
    header.extend((0..n).map(|i| format!("q_{i}")));
    header.extend((0..n).map(|i| format!("p_{i}")));
    header.extend((0..m).map(|i| format!("lambda_{i}")));
    header.extend((0..m).map(|i| format!("phi_{i}")));
    header.push("energy".into());
    w.write_record(&header)?;
    for (k, s) in trajectory.states.iter().enumerate() {
        let mut rec = vec![k.to_string(), s.t.to_string()];
        rec.extend(s.q.iter().map(f64::to_string));
        rec.extend(s.p.iter().map(f64::to_string));
        rec.extend(trajectory.lambdas[k].iter().map(f64::to_string));
        rec.extend(trajectory.phi[k].iter().map(f64::to_string));
        rec.push(trajectory.energy[k].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Bench CSV: `scheme, constraint_error, energy_drift, periods, wall_time_s`.
pub fn write_bench_csv<W: Write>(report: &BenchReport, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", "constraint_error", "energy_drift", "periods", "wall_time_s"])?;
    for r in &report.rows {
        let (ce, ed) = match r.failure {
            Some(_) => ("failed".to_string(), "failed".to_string()),
            None => (r.constraint_error.to_string(), r.energy_drift.to_string()),
        };
        w.write_record([
            r.scheme.name().to_string(),
            ce,
            ed,
            r.periods.to_string(),
            format!("{:.6}", r.wall_time_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Default pendulum benchmark: `m = 1`, `g = 9.81`, `l = 1`, released from
/// rest at `π/4` from the downward vertical, `h = 2·10⁻³`.
#[derive(Debug, Clone, PartialEq)]
pub struct PendulumScenario {
    pub mass: f64,
    pub gravity: f64,
    pub length: f64,
    /// Release angle from the downward vertical.
    pub initial_angle: f64,
    /// Initial angular rate.
    pub initial_rate: f64,
    pub h: f64,
}

impl Default for PendulumScenario {
    fn default() -> Self {
        Self { mass: 1.0, gravity: 9.81, length: 1.0, initial_angle: PI / 4.0, initial_rate: 0.0, h: 2e-3 }
    }
}

impl PendulumScenario {
    pub fn system(&self) -> Result<MechanicalSystem, ModelError> {
        pendulum_system(self.mass, self.gravity, self.length)
    }

    pub fn initial_state(&self) -> Result<State, ModelError> {
        let system = self.system()?;
        let (s, c) = self.initial_angle.sin_cos();
        let q = DVector::from_vec(vec![self.length * s, -self.length * c]);
        let v = DVector::from_vec(vec![c, s]) * (self.length * self.initial_rate);
        let p = project_momentum(&system, &q, &(system.mass() * v));
        Ok(State::new(q, p, 0.0))
    }
}

/// Planar chain released with given joint angles (from the upward vertical)
/// and angular rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ZieglerScenario {
    pub lengths: Vec<f64>,
    pub masses: Vec<f64>,
    pub stiffness: f64,
    pub load: f64,
    pub initial_angles: Vec<f64>,
    pub initial_rates: Vec<f64>,
    pub h: f64,
}

impl ZieglerScenario {
    pub fn system(&self) -> Result<MechanicalSystem, ModelError> {
        ziegler_system(&self.lengths, &self.masses, self.stiffness, self.load)
    }

    pub fn initial_state(&self) -> Result<State, ModelError> {
        let system = self.system()?;
        let links = self.lengths.len();
        for v in [&self.initial_angles, &self.initial_rates] {
            if v.len() != links {
                return Err(ModelError::DimensionMismatch { expected: links, found: v.len() });
            }
        }
        let q = chain_configuration(&self.initial_angles, &self.lengths);
        let mut v = DVector::zeros(2 * links);
        let (mut vx, mut vy) = (0.0, 0.0);
        for i in 0..links {
            let (s, c) = self.initial_angles[i].sin_cos();
            vx += self.lengths[i] * c * self.initial_rates[i];
            vy -= self.lengths[i] * s * self.initial_rates[i];
            v[2 * i] = vx;
            v[2 * i + 1] = vy;
        }
        let p = project_momentum(&system, &q, &(system.mass() * v));
        Ok(State::new(q, p, 0.0))
    }
}
