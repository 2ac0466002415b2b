//! Myopic non-intersecting dynamics built by acceptance–rejection.
//!
//! Each segment samples independent particles from the current configuration until a
//! sample survives the foresight window, keeps the prefix that ends one foresight
//! before the sample's first collision, and restarts from there. Walks
//! ([`algorithm_a`]) use exact event times; diffusions ([`algorithm_b`],
//! [`algorithm_c`]) work in grid-step indices so that segment boundaries are exact.
//!
//! Attempt `j` of segment `n` draws from the stream labelled `segment/{n}/attempt/{j}`,
//! so runs with the same seed but different glueing steps share their noise.

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{ecdf_distance, exp1_cdf, skorohod_j1, CadlagPair, CadlagPath, EcdfSample};
use crate::diffusion::{
    box_process, exit_sample, steps_for, strictly_increasing, EulerMaruyama, ExitOptions,
    TrajectoryGrid,
};
use crate::potential::PotentialSpec;
use crate::stream::{self, StreamRng};
use crate::walks::{free_walk, JumpEvent, JumpPath, WalkConfig};
use crate::{Error, Result};

pub const DEFAULT_MAX_REJECTS: u64 = 1_000_000;

const PROGRESS_EVERY: u64 = 100_000;

/// Grid bookkeeping of a diffusion run; all boundaries are step indices.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridIndices {
    pub dt: f64,
    pub foresight_steps: u64,
    pub eps_steps: Option<u64>,
    pub segment_steps: Vec<u64>,
    /// First violation index of each accepted sample, relative to its segment start.
    pub collision_steps: Vec<Option<u64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MyopicRunRecord<P> {
    pub foresight: f64,
    /// `t_0 = 0 < t_1 < ...`; the last entry may lie past the horizon.
    pub segment_times: Vec<f64>,
    /// First collision time of each accepted sample, measured from its segment start;
    /// `None` if it did not collide before the horizon was covered.
    pub collision_times: Vec<Option<f64>>,
    /// Rejected samples before each accepted one.
    pub reject_counts: Vec<u64>,
    pub grid: Option<GridIndices>,
    pub path: P,
}

impl<P> MyopicRunRecord<P> {
    /// JSON summary pointing at a separately stored path.
    pub fn summary(&self, path_ref: &str) -> serde_json::Value {
        serde_json::json!({
            "foresight": self.foresight,
            "segment_times": self.segment_times,
            "collision_times": self.collision_times,
            "reject_counts": self.reject_counts,
            "grid": self.grid,
            "path_ref": path_ref,
        })
    }
}

/// An accepted conditioned sample and the number of rejections before it.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditioned<P> {
    pub path: P,
    pub rejects: u64,
}

fn check_walk_start(cfg: &WalkConfig, y0: &[i64]) -> Result<()> {
    if y0.len() != cfg.n_particles() {
        return Err(Error::DimensionMismatch {
            expected: cfg.n_particles(),
            found: y0.len(),
        });
    }
    if !strictly_increasing(y0) {
        return Err(Error::NotInChamber(y0.iter().map(|&v| v as f64).collect()));
    }
    Ok(())
}

fn log_progress(what: &str, attempts: u64) {
    if attempts.is_multiple_of(PROGRESS_EVERY) && attempts > 0 {
        log::info!("{what}: {attempts} rejected samples so far");
    }
}

/// Free walks from `y0` on `[0, horizon]`, resampled until the first `l` time units
/// contain no collision.
pub fn sample_conditioned_walk(
    cfg: &WalkConfig,
    l: f64,
    y0: &[i64],
    horizon: f64,
    seed: u64,
    max_rejects: u64,
) -> Result<Conditioned<JumpPath>> {
    check_walk_start(cfg, y0)?;
    if horizon < l {
        return Err(Error::InvalidParameter(format!("horizon {horizon} < L = {l}")));
    }
    for j in 0..max_rejects {
        let mut rng = stream::rng(seed, &format!("conditioned_walk/attempt/{j}"));
        let (events, tau) = free_walk(cfg, y0, horizon, false, &mut rng);
        if tau.is_none_or(|t| t > l) {
            return Ok(Conditioned {
                path: JumpPath::new(y0.to_vec(), events, horizon)?,
                rejects: j,
            });
        }
        log_progress("conditioned walk", j + 1);
    }
    Err(Error::MaxRejects {
        attempts: max_rejects,
    })
}

/// Myopic random walks with foresight `l` on `[0, horizon]`.
pub fn algorithm_a(
    cfg: &WalkConfig,
    l: f64,
    y0: &[i64],
    horizon: f64,
    seed: u64,
    max_rejects: u64,
) -> Result<MyopicRunRecord<JumpPath>> {
    check_walk_start(cfg, y0)?;
    if !(l >= 0.0) {
        return Err(Error::InvalidParameter(format!("L = {l}")));
    }
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut events = Vec::new();
    let mut record = MyopicRunRecord {
        foresight: l,
        segment_times: vec![0.0],
        collision_times: Vec::new(),
        reject_counts: Vec::new(),
        grid: None,
        path: (),
    };
    let mut n = 0_u64;
    while t < horizon {
        let limit = horizon - t + l;
        let mut accepted = None;
        for j in 0..max_rejects {
            let mut rng = stream::rng(seed, &format!("segment/{n}/attempt/{j}"));
            let (evs, tau) = free_walk(cfg, &y, limit, true, &mut rng);
            if tau.is_none_or(|s| s > l) {
                accepted = Some((evs, tau, j));
                break;
            }
            log_progress("algorithm A segment", j + 1);
        }
        let (evs, tau, rejects) = accepted.ok_or(Error::MaxRejects {
            attempts: max_rejects,
        })?;
        let keep = tau.map_or(horizon - t, |s| s - l);
        for e in evs
            .iter()
            .take_while(|e| e.time <= keep && tau.is_none_or(|s| e.time < s) && t + e.time <= horizon)
        {
            y[e.particle] += i64::from(e.delta);
            events.push(JumpEvent {
                time: t + e.time,
                ..*e
            });
        }
        record.collision_times.push(tau);
        record.reject_counts.push(rejects);
        match tau {
            Some(s) => {
                t += s - l;
                record.segment_times.push(t);
            }
            None => break,
        }
        n += 1;
    }
    let path = JumpPath::new(y0.to_vec(), events, horizon)?;
    Ok(MyopicRunRecord {
        foresight: record.foresight,
        segment_times: record.segment_times,
        collision_times: record.collision_times,
        reject_counts: record.reject_counts,
        grid: None,
        path,
    })
}

/// Replays `t_{n+1} = t_n + τ_{n+1} - L` from the stored collision times.
pub fn replay_segment_times(foresight: f64, collision_times: &[Option<f64>]) -> Vec<f64> {
    let mut t = 0.0;
    let mut out = vec![0.0];
    for tau in collision_times.iter().map_while(|c| *c) {
        t += tau - foresight;
        out.push(t);
    }
    out
}

fn check_diffusion_start(x0: &[f64]) -> Result<()> {
    if x0.is_empty() {
        return Err(Error::InvalidParameter("no particles".into()));
    }
    if !strictly_increasing(x0) {
        return Err(Error::NotInChamber(x0.to_vec()));
    }
    if let Some(x) = x0.iter().find(|&&x| ((x + 0.5) - (x + 0.5).round()).abs() < 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "start {x} is a half-integer; the box process is undefined there"
        )));
    }
    Ok(())
}

/// Runs one sample from `x` for at most `limit` steps, appending rows 1.. to `buf`.
/// Stops at and returns the first step with an ordering violation, or aborts early
/// (returning it as well) if that step is at most `abort_before`.
fn diffusion_attempt(
    em: &EulerMaruyama,
    x: &[f64],
    limit: usize,
    abort_before: usize,
    stop_at_collision: bool,
    rng: &mut StreamRng,
    buf: &mut Vec<f64>,
) -> Option<usize> {
    buf.clear();
    let mut cur = x.to_vec();
    let mut first = None;
    for k in 1..=limit {
        em.step(&mut cur, rng);
        buf.extend_from_slice(&cur);
        if first.is_none() && !strictly_increasing(&cur) {
            first = Some(k);
            if stop_at_collision || k <= abort_before {
                break;
            }
        }
    }
    first
}

/// Independent diffusions from `x0` on `[0, horizon]`, resampled until no ordering
/// violation occurs at the grid points of `[0, T]`.
#[allow(clippy::too_many_arguments)]
pub fn sample_conditioned_diffusion(
    spec: &PotentialSpec,
    t_foresight: f64,
    x0: &[f64],
    dt: f64,
    horizon: f64,
    seed: u64,
    max_rejects: u64,
) -> Result<Conditioned<TrajectoryGrid>> {
    check_diffusion_start(x0)?;
    if horizon < t_foresight {
        return Err(Error::InvalidParameter(format!("horizon {horizon} < T = {t_foresight}")));
    }
    let em = EulerMaruyama::new(spec, dt)?;
    let k_t = steps_for(t_foresight, dt);
    let total = steps_for(horizon, dt);
    let mut buf = Vec::new();
    for j in 0..max_rejects {
        let mut rng = stream::rng(seed, &format!("conditioned_diffusion/attempt/{j}"));
        let k = diffusion_attempt(&em, x0, total, k_t, false, &mut rng, &mut buf);
        if k.is_none_or(|k| k > k_t) {
            let mut positions = x0.to_vec();
            positions.extend_from_slice(&buf);
            return Ok(Conditioned {
                path: TrajectoryGrid::new(dt, 0.0, x0.len(), positions, seed)?,
                rejects: j,
            });
        }
        log_progress("conditioned diffusion", j + 1);
    }
    Err(Error::MaxRejects {
        attempts: max_rejects,
    })
}

#[allow(clippy::too_many_arguments)]
fn glue_diffusion(
    spec: &PotentialSpec,
    t_foresight: f64,
    x0: &[f64],
    dt: f64,
    horizon: f64,
    seed: u64,
    max_rejects: u64,
    eps_steps: Option<usize>,
) -> Result<MyopicRunRecord<TrajectoryGrid>> {
    check_diffusion_start(x0)?;
    let em = EulerMaruyama::new(spec, dt)?;
    let n = x0.len();
    let k_t = steps_for(t_foresight, dt);
    let total = steps_for(horizon, dt);
    let mut positions = Vec::with_capacity((total + 1) * n);
    positions.extend_from_slice(x0);
    let mut state = x0.to_vec();
    let mut idx = 0_usize;
    let mut grid = GridIndices {
        dt,
        foresight_steps: k_t as u64,
        eps_steps: eps_steps.map(|e| e as u64),
        segment_steps: vec![0],
        collision_steps: Vec::new(),
    };
    let mut reject_counts = Vec::new();
    let mut buf = Vec::new();
    let mut segment = 0_u64;
    while idx < total {
        let limit = total - idx + k_t;
        let mut accepted = None;
        for j in 0..max_rejects {
            let mut rng = stream::rng(seed, &format!("segment/{segment}/attempt/{j}"));
            let k = diffusion_attempt(&em, &state, limit, k_t, true, &mut rng, &mut buf);
            if k.is_none_or(|k| k > k_t) {
                accepted = Some((k, j));
                break;
            }
            log_progress("diffusion segment", j + 1);
        }
        let (k, rejects) = accepted.ok_or(Error::MaxRejects {
            attempts: max_rejects,
        })?;
        let keep = match (k, eps_steps) {
            (Some(k), None) => k - k_t,
            (Some(k), Some(e)) => e * (k - k_t).div_ceil(e),
            (None, _) => total - idx,
        };
        let kept = keep.min(total - idx);
        positions.extend_from_slice(&buf[..kept * n]);
        state.copy_from_slice(&buf[(kept - 1) * n..kept * n]);
        grid.collision_steps.push(k.map(|k| k as u64));
        reject_counts.push(rejects);
        idx += kept;
        if k.is_none() {
            break;
        }
        grid.segment_steps.push(grid.segment_steps.last().unwrap() + keep as u64);
        segment += 1;
    }
    let path = TrajectoryGrid::new(dt, 0.0, n, positions, seed)?;
    Ok(MyopicRunRecord {
        foresight: t_foresight,
        segment_times: grid.segment_steps.iter().map(|&s| s as f64 * dt).collect(),
        collision_times: grid
            .collision_steps
            .iter()
            .map(|c| c.map(|c| c as f64 * dt))
            .collect(),
        reject_counts,
        grid: Some(grid),
        path,
    })
}

/// Myopic non-intersecting diffusions with foresight `T` on `[0, horizon]`.
pub fn algorithm_b(
    spec: &PotentialSpec,
    t_foresight: f64,
    x0: &[f64],
    dt: f64,
    horizon: f64,
    seed: u64,
    max_rejects: u64,
) -> Result<MyopicRunRecord<TrajectoryGrid>> {
    glue_diffusion(spec, t_foresight, x0, dt, horizon, seed, max_rejects, None)
}

/// [`algorithm_b`] with segment boundaries rounded up to multiples of `eps`, which
/// must be a multiple of `dt` and at most `T`.
#[allow(clippy::too_many_arguments)]
pub fn algorithm_c(
    spec: &PotentialSpec,
    t_foresight: f64,
    x0: &[f64],
    dt: f64,
    horizon: f64,
    seed: u64,
    eps: f64,
    max_rejects: u64,
) -> Result<MyopicRunRecord<TrajectoryGrid>> {
    let ratio = eps / dt;
    let eps_steps = ratio.round();
    if !(eps > 0.0) || (ratio - eps_steps).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps} is not a positive multiple of dt = {dt}")));
    }
    let eps_steps = eps_steps as usize;
    if eps_steps > steps_for(t_foresight, dt) {
        return Err(Error::InvalidParameter(format!(
            "eps = {eps} exceeds the foresight T = {t_foresight}; kept segments could reach the collision"
        )));
    }
    glue_diffusion(spec, t_foresight, x0, dt, horizon, seed, max_rejects, Some(eps_steps))
}

#[derive(Clone, Debug)]
pub struct TheoremMainOptions {
    /// Defaults to the mean of `lambda_trials` exits on the same potential.
    pub lambda_hat: Option<f64>,
    pub lambda_trials: usize,
    pub dt: Option<f64>,
    pub max_rejects: u64,
}

impl Default for TheoremMainOptions {
    fn default() -> Self {
        Self {
            lambda_hat: None,
            lambda_trials: 500,
            dt: None,
            max_rejects: DEFAULT_MAX_REJECTS,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TheoremMainReport {
    pub n_particles: usize,
    pub kappa: f64,
    pub foresight_l: f64,
    pub lambda_hat: f64,
    /// `T = L λ̂`.
    pub foresight_t: f64,
    pub dt: f64,
    pub trials: usize,
    /// Kolmogorov distance between first-event times of the rescaled boxed mBM and
    /// the mRW, both observed on `[0, 2L]` (later events count as `+∞`).
    pub first_event_distance: f64,
    /// `N = 1` only: distance of the rescaled first-jump times to Exp(1) on `[0, 2L)`.
    pub first_event_exp1_distance: Option<f64>,
    pub censored_mbm: usize,
    pub censored_mrw: usize,
    /// `[particle][count]`: frequency of event counts by rescaled time 1.
    pub count_histogram_mbm: Vec<Vec<usize>>,
    pub count_histogram_mrw: Vec<Vec<usize>>,
    pub median_j1: f64,
    pub j1_exact_fraction: f64,
    pub ordering_violations: usize,
}

struct TrialOutcome {
    first_mbm: f64,
    first_mrw: f64,
    counts_mbm: Vec<usize>,
    counts_mrw: Vec<usize>,
    j1: f64,
    j1_exact: bool,
    violations: usize,
}

fn histogram(rows: impl Iterator<Item = Vec<usize>>, n: usize) -> Vec<Vec<usize>> {
    let mut h = vec![Vec::new(); n];
    for row in rows {
        for (i, c) in row.into_iter().enumerate() {
            if h[i].len() <= c {
                h[i].resize(c + 1, 0);
            }
            h[i][c] += 1;
        }
    }
    h
}

/// Boxed mBM with foresight `L λ̂`, time rescaled by `λ̂`, against mRW with foresight
/// `L`, both on `[0, 2L]`. Starting points must lie within 1/4 of an integer.
pub fn theorem_main_experiment(
    spec: &PotentialSpec,
    l: f64,
    x0: &[f64],
    trials: usize,
    seed: u64,
    opts: &TheoremMainOptions,
) -> Result<TheoremMainReport> {
    if let Some(x) = x0.iter().find(|&&x| (x - x.round()).abs() >= 0.25) {
        return Err(Error::InvalidParameter(format!(
            "start {x} is not within 1/4 of an integer"
        )));
    }
    check_diffusion_start(x0)?;
    if !(l > 0.0) {
        return Err(Error::InvalidParameter(format!("L = {l}")));
    }
    let n = x0.len();
    let dt = opts.dt.unwrap_or_else(|| spec.default_dt());
    let lambda_hat = match opts.lambda_hat {
        Some(v) => v,
        None => {
            let exits = exit_sample(
                spec,
                opts.lambda_trials,
                stream::child_seed(seed, "theorem_main/lambda"),
                &ExitOptions {
                    dt: Some(dt),
                    ..Default::default()
                },
            )?;
            exits.iter().map(|e| e.tau).sum::<f64>() / exits.len() as f64
        }
    };
    let t_foresight = l * lambda_hat;
    let m = 2.0 * l;
    let cfg = WalkConfig::tasep(n)?;
    let y0: Vec<i64> = x0.iter().map(|x| x.round() as i64).collect();

    let outcomes = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<TrialOutcome> {
            let sb = stream::child_seed(seed, &format!("theorem_main/trial/{i:04}/mbm"));
            let sa = stream::child_seed(seed, &format!("theorem_main/trial/{i:04}/mrw"));
            let mbm = algorithm_b(spec, t_foresight, x0, dt, m * lambda_hat, sb, opts.max_rejects)?;
            let boxes = box_process(&mbm.path);
            let mrw = algorithm_a(&cfg, l, &y0, m, sa, opts.max_rejects)?;
            let violations = usize::from(mbm.path.first_ordering_violation().is_some())
                + usize::from(mrw.path.first_ordering_violation().is_some());
            let boxed = CadlagPath::from_box_path(&boxes, lambda_hat)?;
            let walk = CadlagPath::from_jump_path(&mrw.path, 1.0)?;
            let horizon = m.min(boxed.horizon());
            let j1 = skorohod_j1(&CadlagPair::new(&boxed, &walk, horizon)?);
            let first = |t: Option<f64>| t.filter(|&t| t <= m).unwrap_or(f64::INFINITY);
            Ok(TrialOutcome {
                first_mbm: first(boxes.first_event_time().map(|t| t / lambda_hat)),
                first_mrw: first(mrw.path.first_event_time()),
                counts_mbm: boxes.event_counts(lambda_hat),
                counts_mrw: mrw.path.event_counts(1.0),
                j1: j1.distance,
                j1_exact: j1.exact,
                violations,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mbm_first = EcdfSample::new(outcomes.iter().map(|o| o.first_mbm).collect())?;
    let mrw_first = EcdfSample::new(outcomes.iter().map(|o| o.first_mrw).collect())?;
    let mut j1s: Vec<f64> = outcomes.iter().map(|o| o.j1).collect();
    j1s.sort_by(f64::total_cmp);
    let median_j1 = if j1s.len() % 2 == 1 {
        j1s[j1s.len() / 2]
    } else {
        0.5 * (j1s[j1s.len() / 2 - 1] + j1s[j1s.len() / 2])
    };
    Ok(TheoremMainReport {
        n_particles: n,
        kappa: spec.kappa(),
        foresight_l: l,
        lambda_hat,
        foresight_t: t_foresight,
        dt,
        trials,
        first_event_distance: ecdf_distance(&mbm_first, &mrw_first),
        first_event_exp1_distance: (n == 1).then(|| mbm_first.distance_to_cdf(exp1_cdf, m)),
        censored_mbm: outcomes.iter().filter(|o| o.first_mbm.is_infinite()).count(),
        censored_mrw: outcomes.iter().filter(|o| o.first_mrw.is_infinite()).count(),
        count_histogram_mbm: histogram(outcomes.iter().map(|o| o.counts_mbm.clone()), n),
        count_histogram_mrw: histogram(outcomes.iter().map(|o| o.counts_mrw.clone()), n),
        median_j1,
        j1_exact_fraction: outcomes.iter().filter(|o| o.j1_exact).count() as f64 / trials as f64,
        ordering_violations: outcomes.iter().map(|o| o.violations).sum(),
    })
}
