//! Euler–Maruyama integration of `dX = -κ v'(X) dt + dB` for independent particles,
//! the box process `⌈X⌉`, Weyl-chamber exits and the metastability experiments.
//!
//! Hitting and crossing times are located on the piecewise-linear interpolant of the
//! grid path. No Brownian-bridge correction is applied, so hitting times carry an
//! `O(√dt)` bias.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{fit_log_rate, LogRateFit};
use crate::potential::PotentialSpec;
use crate::{stream, Error, Result};

/// Exit horizon used when none is given, in SDE time units.
pub const DEFAULT_MAX_EXIT_TIME: f64 = 1e5;

/// Minimum number of exits per κ for [`estimate_lambda`].
pub const MIN_LAMBDA_TRIALS: usize = 200;

/// An `N`-particle path sampled on the uniform grid `start_time + k dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryGrid {
    dt: f64,
    start_time: f64,
    n_particles: usize,
    positions: Vec<f64>,
    rng_seed: u64,
}

impl TrajectoryGrid {
    /// `positions` is row-major: row `k` holds the `N` particle positions at grid index `k`.
    pub fn new(
        dt: f64,
        start_time: f64,
        n_particles: usize,
        positions: Vec<f64>,
        rng_seed: u64,
    ) -> Result<Self> {
        if n_particles == 0 {
            return Err(Error::InvalidParameter("a trajectory needs at least one particle".into()));
        }
        if positions.len() < n_particles || !positions.len().is_multiple_of(n_particles) {
            return Err(Error::DimensionMismatch {
                expected: n_particles,
                found: positions.len(),
            });
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt = {dt}")));
        }
        Ok(Self {
            dt,
            start_time,
            n_particles,
            positions,
            rng_seed,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.positions.len() / self.n_particles
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start_time + k as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.positions[k * self.n_particles..(k + 1) * self.n_particles]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn particle(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.positions.iter().skip(i).step_by(self.n_particles).copied()
    }

    /// Index of the first grid point at which the configuration is not strictly
    /// increasing.
    pub fn first_ordering_violation(&self) -> Option<usize> {
        (0..self.len()).find(|&k| !strictly_increasing(self.row(k)))
    }
}

pub(crate) fn strictly_increasing<T: PartialOrd>(x: &[T]) -> bool {
    x.windows(2).all(|w| w[0] < w[1])
}

/// Number of grid steps needed to cover `horizon`.
pub(crate) fn steps_for(horizon: f64, dt: f64) -> usize {
    ((horizon / dt) - 1e-9).ceil().max(0.0) as usize
}

/// One Euler–Maruyama step of `N` independent particles; the noise for particle `i` is
/// the `i`-th standard normal drawn in the step.
#[derive(Clone, Copy, Debug)]
pub struct EulerMaruyama<'a> {
    spec: &'a PotentialSpec,
    dt: f64,
    noise_sd: f64,
}

impl<'a> EulerMaruyama<'a> {
    pub fn new(spec: &'a PotentialSpec, dt: f64) -> Result<Self> {
        spec.check_dt(dt)?;
        Ok(Self {
            spec,
            dt,
            noise_sd: dt.sqrt(),
        })
    }

    /// The deterministic limit `ẋ = -κ v'(x)` advanced by the same scheme.
    pub fn noiseless(spec: &'a PotentialSpec, dt: f64) -> Result<Self> {
        spec.check_dt(dt)?;
        Ok(Self {
            spec,
            dt,
            noise_sd: 0.0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, x: &mut [f64], rng: &mut R) {
        if self.noise_sd == 0.0 {
            for xi in x.iter_mut() {
                *xi += self.spec.force(*xi) * self.dt;
            }
            return;
        }
        for xi in x.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *xi += self.spec.force(*xi) * self.dt + self.noise_sd * z;
        }
    }

    /// Integrates `steps` steps from `x0`, storing every grid point.
    pub fn run<R: Rng + ?Sized>(&self, x0: &[f64], steps: usize, rng: &mut R) -> Vec<f64> {
        let n = x0.len();
        let mut out = Vec::with_capacity((steps + 1) * n);
        out.extend_from_slice(x0);
        let mut x = x0.to_vec();
        for _ in 0..steps {
            self.step(&mut x, rng);
            out.extend_from_slice(&x);
        }
        out
    }
}

fn check_start(x0: &[f64]) -> Result<()> {
    if x0.is_empty() {
        return Err(Error::InvalidParameter("no particles".into()));
    }
    if x0.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite start {x0:?}")));
    }
    Ok(())
}

/// Integrates `N = x0.len()` independent copies of the SDE on `[0, horizon]`.
pub fn integrate(
    spec: &PotentialSpec,
    x0: &[f64],
    dt: f64,
    horizon: f64,
    seed: u64,
) -> Result<TrajectoryGrid> {
    check_start(x0)?;
    let em = EulerMaruyama::new(spec, dt)?;
    let mut rng = stream::rng(seed, "diffusion/integrate");
    let positions = em.run(x0, steps_for(horizon, dt), &mut rng);
    TrajectoryGrid::new(dt, 0.0, x0.len(), positions, seed)
}

/// As [`integrate`] with the diffusion coefficient forced to zero.
pub fn integrate_noiseless(
    spec: &PotentialSpec,
    x0: &[f64],
    dt: f64,
    horizon: f64,
) -> Result<TrajectoryGrid> {
    check_start(x0)?;
    let em = EulerMaruyama::noiseless(spec, dt)?;
    let mut rng = stream::rng(0, "diffusion/noiseless");
    let positions = em.run(x0, steps_for(horizon, dt), &mut rng);
    TrajectoryGrid::new(dt, 0.0, x0.len(), positions, 0)
}

/// The box of a starting point: `⌊x + 1/2⌋`.
pub fn initial_box(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoxEvent {
    pub time: f64,
    pub particle: usize,
    pub value: i64,
}

/// The integer-valued box process: the last integer each particle touched.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoxPath {
    pub initial: Vec<i64>,
    /// Sorted by time, ties by particle.
    pub events: Vec<BoxEvent>,
    pub start_time: f64,
    pub end_time: f64,
}

impl BoxPath {
    pub fn n_particles(&self) -> usize {
        self.initial.len()
    }

    pub fn state_at(&self, t: f64) -> Vec<i64> {
        let mut s = self.initial.clone();
        for e in self.events.iter().take_while(|e| e.time <= t) {
            s[e.particle] = e.value;
        }
        s
    }

    pub fn first_event_time(&self) -> Option<f64> {
        self.events.first().map(|e| e.time)
    }

    /// Events per particle with time `<= t`.
    pub fn event_counts(&self, t: f64) -> Vec<usize> {
        let mut c = vec![0; self.n_particles()];
        for e in self.events.iter().take_while(|e| e.time <= t) {
            c[e.particle] += 1;
        }
        c
    }

    /// First time the box configuration is not strictly increasing; the start time if
    /// it already is not.
    pub fn first_ordering_violation(&self) -> Option<f64> {
        let mut s = self.initial.clone();
        if !strictly_increasing(&s) {
            return Some(self.start_time);
        }
        for e in &self.events {
            s[e.particle] = e.value;
            if !strictly_increasing(&s) {
                return Some(e.time);
            }
        }
        None
    }

    /// Times rescaled by `1/scale` (start time mapped to 0).
    pub fn rescaled(&self, scale: f64) -> BoxPath {
        BoxPath {
            initial: self.initial.clone(),
            events: self
                .events
                .iter()
                .map(|e| BoxEvent {
                    time: (e.time - self.start_time) / scale,
                    ..*e
                })
                .collect(),
            start_time: 0.0,
            end_time: (self.end_time - self.start_time) / scale,
        }
    }
}

/// Incremental box tracking along piecewise-linear segments.
#[derive(Clone, Debug)]
pub(crate) struct BoxTracker {
    pub boxes: Vec<i64>,
}

impl BoxTracker {
    pub fn new(x0: &[f64]) -> Self {
        Self {
            boxes: x0.iter().map(|&x| initial_box(x)).collect(),
        }
    }

    /// Integer levels met by the segment `a -> b` on `(t0, t0 + dt]`, in crossing order.
    pub fn advance(
        &mut self,
        particle: usize,
        t0: f64,
        dt: f64,
        a: f64,
        b: f64,
        out: &mut Vec<BoxEvent>,
    ) {
        let current = &mut self.boxes[particle];
        let mut visit = |m: i64, current: &mut i64| {
            if m != *current {
                let time = t0 + dt * (m as f64 - a) / (b - a);
                out.push(BoxEvent {
                    time,
                    particle,
                    value: m,
                });
                *current = m;
            }
        };
        if b > a {
            for m in (a.ceil() as i64)..=(b.floor() as i64) {
                visit(m, current);
            }
        } else if b < a {
            for m in ((b.ceil() as i64)..=(a.floor() as i64)).rev() {
                visit(m, current);
            }
        }
    }
}

fn sort_events(events: &mut [BoxEvent]) {
    events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.particle.cmp(&b.particle)));
}

/// Box process of every particle of `traj`.
pub fn box_process(traj: &TrajectoryGrid) -> BoxPath {
    let mut tracker = BoxTracker::new(traj.row(0));
    let mut events = Vec::new();
    let n = traj.n_particles();
    for k in 0..traj.len() - 1 {
        let (a, b) = (traj.row(k), traj.row(k + 1));
        for i in 0..n {
            tracker.advance(i, traj.time(k), traj.dt(), a[i], b[i], &mut events);
        }
    }
    sort_events(&mut events);
    BoxPath {
        initial: traj.row(0).iter().map(|&x| initial_box(x)).collect(),
        events,
        start_time: traj.start_time(),
        end_time: traj.end_time(),
    }
}

/// First exit times from the Weyl chamber of the continuous path (first grid time
/// with an ordering violation) and of its box process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeylExit {
    pub tau_cont: Option<f64>,
    pub tau_box: Option<f64>,
}

fn check_weyl_start(x0: &[f64]) -> Result<()> {
    if x0.len() < 2 {
        return Err(Error::InvalidParameter("Weyl exits need N >= 2".into()));
    }
    if !strictly_increasing(x0) {
        return Err(Error::NotInChamber(x0.to_vec()));
    }
    Ok(())
}

pub fn first_exit_weyl(traj: &TrajectoryGrid) -> Result<WeylExit> {
    check_weyl_start(traj.row(0))?;
    Ok(WeylExit {
        tau_cont: traj.first_ordering_violation().map(|k| traj.time(k)),
        tau_box: box_process(traj).first_ordering_violation(),
    })
}

/// Streams the SDE from `x0` until both Weyl exits of [`first_exit_weyl`] are known or
/// `horizon` is reached, without storing the path.
pub fn weyl_exit_race(
    spec: &PotentialSpec,
    x0: &[f64],
    dt: f64,
    horizon: f64,
    seed: u64,
) -> Result<WeylExit> {
    check_weyl_start(x0)?;
    let em = EulerMaruyama::new(spec, dt)?;
    let mut rng = stream::rng(seed, "diffusion/integrate");
    let mut tracker = BoxTracker::new(x0);
    let mut exit = WeylExit {
        tau_cont: None,
        tau_box: if strictly_increasing(&tracker.boxes) {
            None
        } else {
            Some(0.0)
        },
    };
    let mut x = x0.to_vec();
    let mut prev = x.clone();
    let mut events = Vec::new();
    for k in 0..steps_for(horizon, dt) {
        if exit.tau_cont.is_some() && exit.tau_box.is_some() {
            break;
        }
        prev.copy_from_slice(&x);
        em.step(&mut x, &mut rng);
        let t0 = k as f64 * dt;
        if exit.tau_box.is_none() {
            let before = tracker.boxes.clone();
            events.clear();
            for i in 0..x.len() {
                tracker.advance(i, t0, dt, prev[i], x[i], &mut events);
            }
            sort_events(&mut events);
            let mut s = before;
            for e in &events {
                s[e.particle] = e.value;
                if !strictly_increasing(&s) {
                    exit.tau_box = Some(e.time);
                    break;
                }
            }
        }
        if exit.tau_cont.is_none() && !strictly_increasing(&x) {
            exit.tau_cont = Some((k + 1) as f64 * dt);
        }
    }
    Ok(exit)
}

/// Time of the first box event of a single particle started at `x0`, streaming the
/// path until it happens or `max_time` is reached.
pub fn first_box_event(
    spec: &PotentialSpec,
    x0: f64,
    dt: f64,
    max_time: f64,
    seed: u64,
) -> Result<Option<BoxEvent>> {
    check_start(&[x0])?;
    let em = EulerMaruyama::new(spec, dt)?;
    let mut rng = stream::rng(seed, "diffusion/integrate");
    let mut tracker = BoxTracker::new(&[x0]);
    let mut x = [x0];
    let mut events = Vec::new();
    for k in 0..steps_for(max_time, dt) {
        let a = x[0];
        em.step(&mut x, &mut rng);
        tracker.advance(0, k as f64 * dt, dt, a, x[0], &mut events);
        if let Some(e) = events.first() {
            return Ok(Some(*e));
        }
    }
    Ok(None)
}

/// One metastable exit from the well at 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExitRecord {
    pub tau: f64,
    /// Hit `q = 1` (as opposed to the left level `v = g_hat`).
    pub exited_right: bool,
    pub kappa: f64,
}

#[derive(Clone, Debug)]
pub struct ExitOptions {
    /// Defaults to [`PotentialSpec::default_dt`].
    pub dt: Option<f64>,
    /// Left stopping level; defaults to `v(-1/2) = 1 + b`.
    pub g_hat: Option<f64>,
    pub max_time: f64,
}

impl Default for ExitOptions {
    fn default() -> Self {
        Self {
            dt: None,
            g_hat: None,
            max_time: DEFAULT_MAX_EXIT_TIME,
        }
    }
}

impl ExitOptions {
    pub fn resolve_dt(&self, spec: &PotentialSpec) -> f64 {
        self.dt.unwrap_or_else(|| spec.default_dt())
    }

    pub fn resolve_g_hat(&self, spec: &PotentialSpec) -> f64 {
        self.g_hat.unwrap_or_else(|| spec.value(-0.5))
    }
}

fn run_exit(
    spec: &PotentialSpec,
    seed: u64,
    opts: &ExitOptions,
    mut record: Option<&mut Vec<f64>>,
) -> Result<ExitRecord> {
    let dt = opts.resolve_dt(spec);
    let g_hat = opts.resolve_g_hat(spec);
    if !(g_hat > spec.value(0.5)) {
        return Err(Error::InvalidParameter(format!(
            "g_hat = {g_hat} must exceed v(1/2) = {}",
            spec.value(0.5)
        )));
    }
    let left = spec.left_level_point(g_hat)?;
    let em = EulerMaruyama::new(spec, dt)?;
    let mut rng = stream::rng(seed, "diffusion/metastability");
    let mut x = [0.0_f64];
    if let Some(r) = record.as_deref_mut() {
        r.push(0.0);
    }
    for k in 0..steps_for(opts.max_time, dt) {
        let a = x[0];
        em.step(&mut x, &mut rng);
        let b = x[0];
        if let Some(r) = record.as_deref_mut() {
            r.push(b);
        }
        let t0 = k as f64 * dt;
        if b >= 1.0 {
            return Ok(ExitRecord {
                tau: t0 + dt * (1.0 - a) / (b - a),
                exited_right: true,
                kappa: spec.kappa(),
            });
        }
        if b <= left {
            return Ok(ExitRecord {
                tau: t0 + dt * (a - left) / (a - b),
                exited_right: false,
                kappa: spec.kappa(),
            });
        }
    }
    Err(Error::HorizonCap { cap: opts.max_time })
}

/// Runs a single particle from 0 until it hits `q = 1` or the left level where
/// `v = g_hat`.
pub fn metastability_trial(spec: &PotentialSpec, seed: u64, opts: &ExitOptions) -> Result<ExitRecord> {
    run_exit(spec, seed, opts, None)
}

/// [`metastability_trial`] that also returns the path up to and including the exit step.
pub fn metastability_path(
    spec: &PotentialSpec,
    seed: u64,
    opts: &ExitOptions,
) -> Result<(ExitRecord, TrajectoryGrid)> {
    let mut path = Vec::new();
    let rec = run_exit(spec, seed, opts, Some(&mut path))?;
    let traj = TrajectoryGrid::new(opts.resolve_dt(spec), 0.0, 1, path, seed)?;
    Ok((rec, traj))
}

/// `trials` independent exits; trial `i` uses the child seed labelled
/// `metastability/trial/{i}`.
pub fn exit_sample(
    spec: &PotentialSpec,
    trials: usize,
    seed: u64,
    opts: &ExitOptions,
) -> Result<Vec<ExitRecord>> {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let s = stream::child_seed(seed, &format!("metastability/trial/{i:06}"));
            metastability_trial(spec, s, opts)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaPoint {
    pub kappa: f64,
    /// Empirical mean exit time (the headline estimate).
    pub lambda_mean: f64,
    /// Empirical `λ` with `P(τ > λ) = e^{-1}`.
    pub lambda_quantile: f64,
    pub trials: usize,
    pub right_fraction: Option<f64>,
}

impl LambdaPoint {
    pub fn from_exit_times(kappa: f64, taus: &[f64]) -> Result<Self> {
        if taus.is_empty() {
            return Err(Error::Undersized { needed: 1, got: 0 });
        }
        let mut sorted = taus.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = 1.0 - (-1.0_f64).exp();
        let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
        Ok(Self {
            kappa,
            lambda_mean: taus.iter().sum::<f64>() / taus.len() as f64,
            lambda_quantile: sorted[idx],
            trials: taus.len(),
            right_fraction: None,
        })
    }

    pub fn from_records(kappa: f64, records: &[ExitRecord]) -> Result<Self> {
        let taus: Vec<f64> = records.iter().map(|r| r.tau).collect();
        let mut p = Self::from_exit_times(kappa, &taus)?;
        p.right_fraction =
            Some(records.iter().filter(|r| r.exited_right).count() as f64 / records.len() as f64);
        Ok(p)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaEstimate {
    pub points: Vec<LambdaPoint>,
    /// Least squares of `log λ̂` (mean) against κ.
    pub fit: LogRateFit,
}

fn check_kappas(kappas: &[f64]) -> Result<()> {
    let mut sorted = kappas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < 3 || sorted.len() != kappas.len() {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 distinct kappa values, got {kappas:?}"
        )));
    }
    Ok(())
}

/// λ̂ per κ and the log-rate slope from given exit-time samples.
pub fn lambda_from_exit_times(kappas: &[f64], taus: &[Vec<f64>]) -> Result<LambdaEstimate> {
    check_kappas(kappas)?;
    if taus.len() != kappas.len() {
        return Err(Error::DimensionMismatch {
            expected: kappas.len(),
            found: taus.len(),
        });
    }
    let points = kappas
        .iter()
        .zip(taus)
        .map(|(&k, t)| {
            if t.len() < MIN_LAMBDA_TRIALS {
                return Err(Error::Undersized {
                    needed: MIN_LAMBDA_TRIALS,
                    got: t.len(),
                });
            }
            LambdaPoint::from_exit_times(k, t)
        })
        .collect::<Result<Vec<_>>>()?;
    finish_estimate(points)
}

fn finish_estimate(points: Vec<LambdaPoint>) -> Result<LambdaEstimate> {
    let ks: Vec<f64> = points.iter().map(|p| p.kappa).collect();
    let ls: Vec<f64> = points.iter().map(|p| p.lambda_mean).collect();
    let fit = fit_log_rate(&ks, &ls)?;
    Ok(LambdaEstimate { points, fit })
}

/// Runs `trials` exits at each κ (shape of `spec`, κ replaced) and fits `log λ̂` against
/// κ. The κ with index `j` uses the child seed labelled `metastability/kappa/{j}`.
pub fn estimate_lambda(
    spec: &PotentialSpec,
    kappas: &[f64],
    trials: usize,
    seed: u64,
    opts: &ExitOptions,
) -> Result<(LambdaEstimate, Vec<Vec<ExitRecord>>)> {
    check_kappas(kappas)?;
    if trials < MIN_LAMBDA_TRIALS {
        return Err(Error::Undersized {
            needed: MIN_LAMBDA_TRIALS,
            got: trials,
        });
    }
    let mut points = Vec::with_capacity(kappas.len());
    let mut all = Vec::with_capacity(kappas.len());
    for (j, &k) in kappas.iter().enumerate() {
        let s = spec.with_kappa(k)?;
        let records = exit_sample(&s, trials, stream::child_seed(seed, &format!("metastability/kappa/{j}")), opts)?;
        points.push(LambdaPoint::from_records(k, &records)?);
        all.push(records);
    }
    Ok((finish_estimate(points)?, all))
}

/// Fraction of grid points outside `[center - radius, center + radius]` in consecutive
/// windows of length `window` (incomplete trailing window dropped).
pub fn occupation_outside_ball(
    traj: &TrajectoryGrid,
    particle: usize,
    center: f64,
    radius: f64,
    window: f64,
) -> Result<Vec<f64>> {
    if particle >= traj.n_particles() {
        return Err(Error::DimensionMismatch {
            expected: traj.n_particles(),
            found: particle + 1,
        });
    }
    let span = traj.end_time() - traj.start_time();
    if !(window > 0.0) || window > span + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "window {window} must lie in (0, {span}]"
        )));
    }
    let w = ((window / traj.dt()).round() as usize).max(1);
    let xs: Vec<f64> = traj.particle(particle).collect();
    Ok(xs
        .chunks_exact(w)
        .map(|c| c.iter().filter(|&&x| (x - center).abs() > radius).count() as f64 / w as f64)
        .collect())
}

/// Two scalar diffusions driven by independent noise until their interpolants meet,
/// after which the lagged one copies the leader.
#[derive(Clone, Debug)]
pub struct CoupledPair {
    /// Starts at time 0.
    pub leader: TrajectoryGrid,
    /// Starts at the (grid-rounded) offset.
    pub lagged: TrajectoryGrid,
    pub meet_time: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn coupled_pair(
    spec: &PotentialSpec,
    x0: f64,
    xbar0: f64,
    offset: f64,
    dt: f64,
    horizon: f64,
    seed: u64,
) -> Result<CoupledPair> {
    if !(offset >= 0.0) || offset > horizon {
        return Err(Error::InvalidParameter(format!("offset {offset} outside [0, {horizon}]")));
    }
    let em = EulerMaruyama::new(spec, dt)?;
    let steps = steps_for(horizon, dt);
    let lag = ((offset / dt).round() as usize).min(steps);
    let mut rng = stream::rng(seed, "diffusion/coupled/leader");
    let lead = em.run(&[x0], steps, &mut rng);

    let mut rng = stream::rng(seed, "diffusion/coupled/lagged");
    let mut lagged = Vec::with_capacity(steps + 1 - lag);
    let mut meet_time = None;
    let mut x = [xbar0];
    lagged.push(xbar0);
    if xbar0 == lead[lag] {
        meet_time = Some(lag as f64 * dt);
    }
    for k in lag..steps {
        if meet_time.is_some() {
            lagged.push(lead[k + 1]);
            continue;
        }
        em.step(&mut x, &mut rng);
        let d0 = lagged[k - lag] - lead[k];
        let d1 = x[0] - lead[k + 1];
        if d1 == 0.0 || d0 * d1 < 0.0 {
            meet_time = Some(k as f64 * dt + dt * d0 / (d0 - d1));
            lagged.push(lead[k + 1]);
        } else {
            lagged.push(x[0]);
        }
    }
    Ok(CoupledPair {
        leader: TrajectoryGrid::new(dt, 0.0, 1, lead, seed)?,
        lagged: TrajectoryGrid::new(dt, lag as f64 * dt, 1, lagged, seed)?,
        meet_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(dt: f64, rows: &[&[f64]]) -> TrajectoryGrid {
        let n = rows[0].len();
        TrajectoryGrid::new(dt, 0.0, n, rows.concat(), 0).unwrap()
    }

    fn spec(kappa: f64) -> PotentialSpec {
        PotentialSpec::default_trig(0.5, kappa).unwrap()
    }

    #[test]
    fn trajectory_grid_is_uniform() {
        let t = integrate(&spec(1.0), &[0.0, 1.0], 0.01, 1.0, 3).unwrap();
        assert_eq!(t.len(), 101);
        assert_eq!(t.n_particles(), 2);
        assert_abs_diff_eq!(t.time(37), 0.37, epsilon = 1e-12);
        assert_abs_diff_eq!(t.end_time(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn integrate_is_deterministic() {
        let s = spec(3.0);
        let a = integrate(&s, &[0.1, 0.9], 1e-3, 2.0, 99).unwrap();
        let b = integrate(&s, &[0.1, 0.9], 1e-3, 2.0, 99).unwrap();
        let c = integrate(&s, &[0.1, 0.9], 1e-3, 2.0, 100).unwrap();
        assert_eq!(a.positions(), b.positions());
        assert_ne!(a.positions(), c.positions());
    }

    #[test]
    fn integrate_rejects_unstable_dt() {
        let s = spec(8.0);
        assert!(matches!(
            integrate(&s, &[0.0], 0.05, 1.0, 0),
            Err(Error::StabilityGuard { .. })
        ));
    }

    #[test]
    fn noiseless_path_relaxes_monotonically() {
        let s = spec(8.0);
        let t = integrate_noiseless(&s, &[0.3], 1e-3, 2.0).unwrap();
        let xs: Vec<f64> = t.particle(0).collect();
        assert!(xs.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
        assert!(xs.last().unwrap().abs() < 1e-6);
    }

    #[test]
    fn box_of_constant_path() {
        let bp = box_process(&grid(0.1, &[&[0.3], &[0.3], &[0.3]]));
        assert_eq!(bp.initial, vec![0]);
        assert!(bp.events.is_empty());
    }

    #[test]
    fn box_starting_nearest_integer() {
        // ⌊0.6 + 1/2⌋ = 1 already, so crossing level 1 is not a change of box.
        let bp = box_process(&grid(1.0, &[&[0.6], &[1.4]]));
        assert_eq!(bp.initial, vec![1]);
        assert!(bp.events.is_empty());
    }

    #[test]
    fn box_single_crossing() {
        let bp = box_process(&grid(1.0, &[&[0.4], &[1.4]]));
        assert_eq!(bp.initial, vec![0]);
        assert_eq!(bp.events.len(), 1);
        assert_eq!(bp.events[0].value, 1);
        assert_abs_diff_eq!(bp.events[0].time, 0.6, epsilon = 1e-12);
    }

    /// Dense refinement of the interpolant: step at dt/100 and record a level whenever
    /// a sub-step endpoint lies on the other side of (or on) an integer different from
    /// the current box.
    fn dense_box_oracle(path: &[f64], dt: f64) -> Vec<(f64, i64)> {
        let sub = 100;
        let h = dt / sub as f64;
        let mut boxv = initial_box(path[0]);
        let mut out = Vec::new();
        let mut prev = path[0];
        for k in 0..path.len() - 1 {
            for j in 1..=sub {
                let x = path[k] + (path[k + 1] - path[k]) * j as f64 / sub as f64;
                let t = k as f64 * dt + j as f64 * h;
                let (lo, hi) = if prev < x { (prev, x) } else { (x, prev) };
                let mut levels: Vec<i64> = ((lo.ceil() as i64)..=(hi.floor() as i64)).collect();
                if x < prev {
                    levels.reverse();
                }
                for m in levels {
                    if m != boxv {
                        out.push((t, m));
                        boxv = m;
                    }
                }
                prev = x;
            }
        }
        out
    }

    #[test]
    fn box_oscillation_matches_dense_oracle() {
        let path = [0.2, 1.2, 0.2, -0.3, 0.4];
        let dt = 0.5;
        let rows: Vec<&[f64]> = path.iter().map(std::slice::from_ref).collect();
        let bp = box_process(&grid(dt, &rows));
        let oracle = dense_box_oracle(&path, dt);
        let values: Vec<i64> = bp.events.iter().map(|e| e.value).collect();
        assert_eq!(values, vec![1, 0]);
        assert_eq!(oracle.len(), 2);
        for (e, (t, m)) in bp.events.iter().zip(&oracle) {
            assert_eq!(e.value, *m);
            assert!(e.time <= *t && *t - e.time <= dt / 100.0 + 1e-12);
        }
    }

    #[test]
    fn box_events_step_by_one_on_random_paths() {
        let t = integrate(&spec(0.5), &[0.0, 3.0], 1e-2, 40.0, 5).unwrap();
        let bp = box_process(&t);
        for i in 0..2 {
            let mut last = bp.initial[i];
            let mut last_t = f64::NEG_INFINITY;
            for e in bp.events.iter().filter(|e| e.particle == i) {
                assert_eq!((e.value - last).abs(), 1);
                assert!(e.time > last_t);
                last = e.value;
                last_t = e.time;
            }
        }
        assert!(!bp.events.is_empty());
    }

    #[test]
    fn weyl_exit_of_separated_constants() {
        let t = grid(0.1, &[&[0.1, 2.3], &[0.1, 2.3], &[0.1, 2.3]]);
        assert_eq!(
            first_exit_weyl(&t).unwrap(),
            WeylExit {
                tau_cont: None,
                tau_box: None
            }
        );
    }

    #[test]
    fn weyl_exit_of_linear_crossing() {
        // x1: 0 -> 1, x2: 1 -> 0 on [0,1]; they cross at 0.5... shift so they cross at 0.7.
        let dt = 0.1;
        let rows: Vec<Vec<f64>> = (0..=10)
            .map(|k| {
                let t = k as f64 * dt;
                vec![0.1 + (t - 0.7), 0.1 - (t - 0.7)]
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let e = first_exit_weyl(&grid(dt, &refs)).unwrap();
        // at t = 0.7 the two coincide (violation, not strict)
        assert_abs_diff_eq!(e.tau_cont.unwrap(), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn weyl_exit_rejects_bad_input() {
        let t = grid(0.1, &[&[0.5, 0.2], &[0.5, 0.2]]);
        assert!(matches!(first_exit_weyl(&t), Err(Error::NotInChamber(_))));
        let t = grid(0.1, &[&[0.5], &[0.5]]);
        assert!(first_exit_weyl(&t).is_err());
    }

    #[test]
    fn weyl_box_exit_defined_with_continuous_exit() {
        let s = spec(1.0);
        for seed in 0..20 {
            let t = integrate(&s, &[0.0, 1.0], 1e-3, 20.0, seed).unwrap();
            let e = first_exit_weyl(&t).unwrap();
            if let Some(tc) = e.tau_cont {
                // to meet, particle paths pass through a common integer-free interval;
                // the box path must have left strict order by then or shortly after
                assert!(
                    e.tau_box.is_some() || t.end_time() - tc < 1.0,
                    "seed {seed}: {e:?}"
                );
            }
            let streamed = weyl_exit_race(&s, &[0.0, 1.0], 1e-3, 20.0, seed).unwrap();
            assert_eq!(streamed, e, "seed {seed}");
        }
    }

    #[test]
    fn metastability_trial_is_deterministic() {
        let s = spec(2.0);
        let o = ExitOptions::default();
        let a = metastability_trial(&s, 11, &o).unwrap();
        let b = metastability_trial(&s, 11, &o).unwrap();
        assert_eq!(a, b);
        let (c, path) = metastability_path(&s, 11, &o).unwrap();
        assert_eq!(a, c);
        assert!(path.end_time() >= a.tau && path.end_time() - a.tau <= path.dt());
        assert!(a.tau > 0.0);
    }

    #[test]
    fn metastability_rejects_low_threshold_and_reports_cap() {
        let s = spec(3.0);
        let o = ExitOptions {
            g_hat: Some(0.9),
            ..Default::default()
        };
        assert!(metastability_trial(&s, 1, &o).is_err());
        let o = ExitOptions {
            max_time: 0.01,
            ..Default::default()
        };
        assert!(matches!(
            metastability_trial(&s, 1, &o),
            Err(Error::HorizonCap { .. })
        ));
    }

    #[test]
    fn lambda_needs_three_kappas() {
        let taus = vec![vec![1.0; 300]];
        assert!(lambda_from_exit_times(&[3.0], &taus).is_err());
        let taus = vec![vec![1.0; 300]; 3];
        assert!(lambda_from_exit_times(&[2.0, 2.0, 3.0], &taus).is_err());
        let taus = vec![vec![1.0; 100]; 3];
        assert!(matches!(
            lambda_from_exit_times(&[2.0, 3.0, 4.0], &taus),
            Err(Error::Undersized { .. })
        ));
    }

    #[test]
    fn lambda_quantile_definition() {
        let taus: Vec<f64> = (1..=1000).map(|k| k as f64).collect();
        let p = LambdaPoint::from_exit_times(1.0, &taus).unwrap();
        assert_abs_diff_eq!(p.lambda_mean, 500.5, epsilon = 1e-9);
        // 63.2% of the sample lies at or below the quantile
        assert_eq!(p.lambda_quantile, 633.0);
    }

    #[test]
    fn occupation_extremes() {
        let t = grid(0.1, &vec![&[0.0][..]; 41]);
        assert!(occupation_outside_ball(&t, 0, 0.0, 0.1, 1.0)
            .unwrap()
            .iter()
            .all(|&f| f == 0.0));
        let t = grid(0.1, &vec![&[0.9][..]; 41]);
        let f = occupation_outside_ball(&t, 0, 0.0, 0.1, 1.0).unwrap();
        assert_eq!(f.len(), 4);
        assert!(f.iter().all(|&f| f == 1.0));
        assert!(occupation_outside_ball(&t, 0, 0.0, 0.1, 10.0).is_err());
    }

    #[test]
    fn coupled_pair_identical_start() {
        let s = spec(3.0);
        let c = coupled_pair(&s, 0.1, 0.1, 0.0, 1e-3, 1.0, 4).unwrap();
        assert_eq!(c.meet_time, Some(0.0));
        assert_eq!(c.leader.positions(), c.lagged.positions());
    }

    #[test]
    fn coupled_pair_copies_after_meeting() {
        let s = spec(3.0);
        for seed in 0..10 {
            let c = coupled_pair(&s, 0.05, -0.05, 0.5, 1e-3, 5.0, seed).unwrap();
            let m = c.meet_time.expect("pairs in the same well meet quickly");
            assert!(m >= 0.5);
            let lag = (c.lagged.start_time() / 1e-3).round() as usize;
            for k in 0..c.lagged.len() {
                if c.lagged.time(k) > m {
                    assert_eq!(c.lagged.row(k), c.leader.row(k + lag));
                }
            }
        }
    }
}
