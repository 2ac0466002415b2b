//! Continuous-time nearest-neighbour lattice walks: single-walk transition
//! probabilities, Karlin–McGregor determinants, the survival probability `h_L`, the
//! myopic random-walk generator, Vandermonde rates, and exclusion / non-intersecting
//! simulators.
//!
//! Each particle jumps at total rate 1: right with probability `p`, left with `1 - p`.
//! The `p < 1` paths of the exact oracles are implemented but only the totally
//! asymmetric case `p = 1` is exercised by the limit experiments.

use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::diffusion::strictly_increasing;
use crate::{stream, Error, Result};

static NEGATIVE_DETERMINANTS: AtomicU64 = AtomicU64::new(0);

/// Number of Karlin–McGregor determinants clamped from a negative value to 0.
pub fn negative_determinant_count() -> u64 {
    NEGATIVE_DETERMINANTS.load(Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WalkConfig {
    n_particles: usize,
    p_right: f64,
}

impl WalkConfig {
    pub fn new(n_particles: usize, p_right: f64) -> Result<Self> {
        if n_particles == 0 {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&p_right) {
            return Err(Error::InvalidParameter(format!("p = {p_right} outside [0, 1]")));
        }
        Ok(Self {
            n_particles,
            p_right,
        })
    }

    /// Totally asymmetric walks.
    pub fn tasep(n_particles: usize) -> Result<Self> {
        Self::new(n_particles, 1.0)
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn p_right(&self) -> f64 {
        self.p_right
    }

    fn check_len(&self, y: &[i64]) -> Result<()> {
        if y.len() != self.n_particles {
            return Err(Error::DimensionMismatch {
                expected: self.n_particles,
                found: y.len(),
            });
        }
        Ok(())
    }
}

/// A strictly increasing configuration; `WeylPoint<i64>` lives on the lattice,
/// `WeylPoint<f64>` in the continuum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeylPoint<T> {
    coords: Vec<T>,
}

/// Coordinate type of a [`WeylPoint`].
pub trait Coordinate: Copy + PartialOrd {
    fn as_f64(self) -> f64;
}

impl Coordinate for i64 {
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Coordinate for f64 {
    fn as_f64(self) -> f64 {
        self
    }
}

impl<T: Coordinate> WeylPoint<T> {
    pub fn new(coords: Vec<T>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidParameter("empty configuration".into()));
        }
        if !strictly_increasing(&coords) {
            return Err(Error::NotInChamber(coords.iter().map(|&c| c.as_f64()).collect()));
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    /// Smallest gap between neighbours; `+∞` for a single particle.
    pub fn min_gap(&self) -> f64 {
        self.coords
            .windows(2)
            .map(|w| w[1].as_f64() - w[0].as_f64())
            .fold(f64::INFINITY, f64::min)
    }

    /// Membership in the chamber with all gaps greater than `gamma`.
    pub fn in_gamma_chamber(&self, gamma: f64) -> bool {
        self.min_gap() > gamma
    }
}

fn chamber_error(y: &[i64]) -> Error {
    Error::NotInChamber(y.iter().map(|&v| v as f64).collect())
}

fn ln_factorial(k: i64) -> f64 {
    libm::lgamma(k as f64 + 1.0)
}

/// `P(X(t) - X(0) = dx)` for one walk.
pub fn transition_pmf(cfg: &WalkConfig, t: f64, dx: i64) -> f64 {
    let p = cfg.p_right;
    if t <= 0.0 {
        return if dx == 0 { 1.0 } else { 0.0 };
    }
    let poisson = |k: i64| {
        if k < 0 {
            0.0
        } else {
            (k as f64 * t.ln() - t - ln_factorial(k)).exp()
        }
    };
    if p == 1.0 {
        return poisson(dx);
    }
    if p == 0.0 {
        return poisson(-dx);
    }
    // Σ_k e^{-t} (pt)^{k+dx} ((1-p)t)^k / ((k+dx)! k!), summed in log space with a
    // running maximum.
    let (lr, ll) = ((p * t).ln(), ((1.0 - p) * t).ln());
    let mut k = (-dx).max(0);
    let mut log_max = f64::NEG_INFINITY;
    let mut scaled = 0.0;
    loop {
        let j = k + dx;
        let l = -t + j as f64 * lr + k as f64 * ll - ln_factorial(j) - ln_factorial(k);
        if l > log_max {
            scaled = scaled * (log_max - l).exp() + 1.0;
            log_max = l;
        } else {
            scaled += (l - log_max).exp();
        }
        let ratio = p * (1.0 - p) * t * t / ((j + 1) as f64 * (k + 1) as f64);
        if ratio < 1.0 && l - log_max < (1e-16 * scaled).ln() {
            break;
        }
        k += 1;
    }
    log_max.exp() * scaled
}

/// Determinant by LU with partial pivoting; `a` is row-major `n × n` and is destroyed.
fn lu_determinant(a: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for c in 0..n {
        let pivot = (c..n)
            .max_by(|&r, &s| a[r * n + c].abs().total_cmp(&a[s * n + c].abs()))
            .unwrap();
        if a[pivot * n + c] == 0.0 {
            return 0.0;
        }
        if pivot != c {
            for k in 0..n {
                a.swap(c * n + k, pivot * n + k);
            }
            det = -det;
        }
        let d = a[c * n + c];
        det *= d;
        for r in c + 1..n {
            let f = a[r * n + c] / d;
            if f != 0.0 {
                for k in c + 1..n {
                    a[r * n + k] -= f * a[c * n + k];
                }
            }
        }
    }
    det
}

fn clamp_determinant(det: f64) -> f64 {
    if det < 0.0 {
        NEGATIVE_DETERMINANTS.fetch_add(1, Ordering::Relaxed);
        if det < -1e-14 {
            log::warn!("Karlin-McGregor determinant {det:e} clamped to 0");
        }
        0.0
    } else {
        det
    }
}

/// `det[p_t(y_j - x_i)]`: the probability of moving from `x` to `y` in time `t`
/// without any two walks meeting.
pub fn km_determinant(cfg: &WalkConfig, t: f64, x: &[i64], y: &[i64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let n = x.len();
    let repeated = |v: &[i64]| (1..n).any(|j| v[..j].contains(&v[j]));
    if repeated(x) || repeated(y) {
        // identical rows or columns
        return Ok(0.0);
    }
    let mut m: Vec<f64> = x
        .iter()
        .flat_map(|&xi| y.iter().map(move |&yj| (xi, yj)))
        .map(|(xi, yj)| transition_pmf(cfg, t, yj - xi))
        .collect();
    Ok(clamp_determinant(lu_determinant(&mut m, n)))
}

/// Smallest truncation window accepted by [`survival_h`].
pub fn required_window(l: f64) -> i64 {
    (l + 10.0 * l.sqrt()).ceil() as i64
}

pub fn default_window(l: f64) -> i64 {
    (l + 10.0 * l.sqrt() + 10.0).ceil() as i64
}

/// `h_L(y) = P_y(no two walks meet on [0, L])`, summing Karlin–McGregor determinants
/// over terminal configurations within `window` of each starting coordinate.
pub fn survival_h(cfg: &WalkConfig, l: f64, y: &[i64], window: i64) -> Result<f64> {
    cfg.check_len(y)?;
    if !(l >= 0.0) {
        return Err(Error::InvalidParameter(format!("L = {l}")));
    }
    let required = required_window(l);
    if window < required {
        return Err(Error::WindowTooSmall { window, required });
    }
    if !strictly_increasing(y) {
        return Ok(0.0);
    }
    let n = y.len();
    if n == 1 {
        return Ok(1.0);
    }
    let back = if cfg.p_right < 1.0 { window } else { 0 };
    let fwd = if cfg.p_right > 0.0 { window } else { 0 };
    let lo: Vec<i64> = y.iter().map(|&v| v - back).collect();
    let hi: Vec<i64> = y.iter().map(|&v| v + fwd).collect();

    let dmin = lo[0] - y[n - 1];
    let dmax = hi[n - 1] - y[0];
    let table: Vec<f64> = (dmin..=dmax).map(|d| transition_pmf(cfg, l, d)).collect();
    let pmf = |d: i64| table[(d - dmin) as usize];

    // columns of the matrix depend only on z_j, so enumerate z recursively and reuse
    // the column for each coordinate
    let mut z = vec![0_i64; n];
    let mut total = 0.0;
    let mut scratch = vec![0.0; n * n];
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        level: usize,
        lower: i64,
        lo: &[i64],
        hi: &[i64],
        y: &[i64],
        z: &mut [i64],
        scratch: &mut [f64],
        pmf: &dyn Fn(i64) -> f64,
        total: &mut f64,
    ) {
        let n = y.len();
        let start = lo[level].max(lower);
        for v in start..=hi[level] {
            z[level] = v;
            if level + 1 == n {
                for i in 0..n {
                    for j in 0..n {
                        scratch[i * n + j] = pmf(z[j] - y[i]);
                    }
                }
                *total += clamp_determinant(lu_determinant(scratch, n));
            } else {
                recurse(level + 1, v + 1, lo, hi, y, z, scratch, pmf, total);
            }
        }
    }
    recurse(0, i64::MIN, &lo, &hi, y, &mut z, &mut scratch, &pmf, &mut total);
    Ok(total.min(1.0))
}

/// Simulates `N` independent walks from `y0` on `[0, limit]`. Stops at the first event
/// whose configuration is not strictly increasing when `stop_at_collision` is set.
/// Returns the events and that collision time.
pub(crate) fn free_walk<R: Rng + ?Sized>(
    cfg: &WalkConfig,
    y0: &[i64],
    limit: f64,
    stop_at_collision: bool,
    rng: &mut R,
) -> (Vec<JumpEvent>, Option<f64>) {
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut events = Vec::new();
    let mut collision = None;
    let mut t = 0.0;
    loop {
        let e: f64 = Exp1.sample(rng);
        t += e / n as f64;
        if t > limit {
            break;
        }
        let i = rng.random_range(0..n);
        let delta: i8 = if rng.random::<f64>() < cfg.p_right { 1 } else { -1 };
        y[i] += i64::from(delta);
        events.push(JumpEvent {
            time: t,
            particle: i,
            delta,
        });
        if collision.is_none() && collides(&y, i) {
            collision = Some(t);
            if stop_at_collision {
                break;
            }
        }
    }
    (events, collision)
}

/// Whether particle `i` now shares a site with or has passed a neighbour.
fn collides(y: &[i64], i: usize) -> bool {
    (i > 0 && y[i] <= y[i - 1]) || (i + 1 < y.len() && y[i] >= y[i + 1])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub accepted: u64,
    pub attempts: u64,
}

impl McEstimate {
    pub fn from_counts(accepted: u64, attempts: u64) -> Self {
        let p = accepted as f64 / attempts as f64;
        Self {
            estimate: p,
            std_error: (p * (1.0 - p) / attempts as f64).sqrt(),
            accepted,
            attempts,
        }
    }

    /// `|estimate - x|` in standard errors.
    pub fn z_score(&self, x: f64) -> f64 {
        let d = (self.estimate - x).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

const MC_BLOCK: u64 = 10_000;

/// Rejection-sampling estimate of `h_L(y)`: the fraction of unconstrained walk
/// samples with no collision on `[0, L]`. Block `b` of 10⁴ attempts uses the stream
/// labelled `survival/block/{b}`.
pub fn survival_h_mc(cfg: &WalkConfig, l: f64, y: &[i64], attempts: u64, seed: u64) -> Result<McEstimate> {
    cfg.check_len(y)?;
    if attempts == 0 {
        return Err(Error::Undersized { needed: 1, got: 0 });
    }
    let blocks = attempts.div_ceil(MC_BLOCK);
    let accepted: u64 = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream::rng(seed, &format!("survival/block/{b}"));
            let size = MC_BLOCK.min(attempts - b * MC_BLOCK);
            (0..size)
                .filter(|_| {
                    strictly_increasing(y) && free_walk(cfg, y, l, true, &mut rng).1.is_none()
                })
                .count() as u64
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(McEstimate::from_counts(accepted, attempts))
}

/// Per-particle jump rates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rates {
    pub right: Vec<f64>,
    pub left: Vec<f64>,
}

impl Rates {
    pub fn total(&self) -> f64 {
        self.right.iter().chain(&self.left).sum()
    }
}

/// Generator of the myopic random walk with foresight `L`:
/// right rate `p h_L(y+e_i)/h_L(y)`, left rate `(1-p) h_L(y-e_i)/h_L(y)`.
pub fn mrw_rates(cfg: &WalkConfig, l: f64, y: &[i64], window: i64) -> Result<Rates> {
    cfg.check_len(y)?;
    if !strictly_increasing(y) {
        return Err(chamber_error(y));
    }
    let h = survival_h(cfg, l, y, window)?;
    if !(h >= f64::MIN_POSITIVE) {
        return Err(Error::Underflow(y.to_vec()));
    }
    let n = y.len();
    let mut rates = Rates {
        right: vec![0.0; n],
        left: vec![0.0; n],
    };
    let mut target = y.to_vec();
    for i in 0..n {
        for (delta, weight, out) in [
            (1, cfg.p_right, &mut rates.right[i]),
            (-1, 1.0 - cfg.p_right, &mut rates.left[i]),
        ] {
            if weight == 0.0 {
                continue;
            }
            target[i] = y[i] + delta;
            if strictly_increasing(&target) {
                *out = weight * survival_h(cfg, l, &target, window)? / h;
            }
            target[i] = y[i];
        }
    }
    Ok(rates)
}

/// `Δ(y) = Π_{i<j} (y_j - y_i)` exactly.
pub fn vandermonde(y: &[i64]) -> BigInt {
    let mut d = BigInt::from(1);
    for j in 0..y.len() {
        for i in 0..j {
            d *= y[j] - y[i];
        }
    }
    d
}

/// `Δ(y + e_i)` for every `i`, and `Δ(y)`, exactly.
pub fn vandermonde_numerators(y: &[i64]) -> (Vec<BigInt>, BigInt) {
    let mut shifted = y.to_vec();
    let num = (0..y.len())
        .map(|i| {
            shifted[i] += 1;
            let d = vandermonde(&shifted);
            shifted[i] -= 1;
            d
        })
        .collect();
    (num, vandermonde(y))
}

/// Right-jump rates `Δ(y+e_i)/Δ(y)` of walks conditioned never to meet (`p = 1`).
pub fn vandermonde_rates(y: &[i64]) -> Result<Vec<f64>> {
    if !strictly_increasing(y) {
        return Err(chamber_error(y));
    }
    let exact = y.len() <= 12 && y.iter().all(|v| v.abs() <= 1000);
    if exact {
        let (num, den) = vandermonde_numerators(y);
        let den = den.to_f64().expect("Vandermonde fits in f64 on this range");
        return Ok(num
            .iter()
            .map(|d| {
                if d.is_zero() {
                    0.0
                } else {
                    d.to_f64().expect("Vandermonde fits in f64 on this range") / den
                }
            })
            .collect());
    }
    Ok(gap_ratio_rates(y))
}

/// `Π_{j≠i} (y_i + 1 - y_j)/(y_i - y_j)` without forming `Δ`.
pub(crate) fn gap_ratio_rates(y: &[i64]) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            y.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &yj)| (y[i] + 1 - yj) as f64 / (y[i] - yj) as f64)
                .product()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    pub particle: usize,
    /// `+1` or `-1`.
    pub delta: i8,
}

/// A lattice trajectory on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpPath {
    pub initial: Vec<i64>,
    /// Sorted by time.
    pub events: Vec<JumpEvent>,
    pub horizon: f64,
}

impl JumpPath {
    pub fn new(initial: Vec<i64>, events: Vec<JumpEvent>, horizon: f64) -> Result<Self> {
        let n = initial.len();
        let mut last = 0.0;
        for e in &events {
            if e.particle >= n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: e.particle + 1,
                });
            }
            if e.delta.abs() != 1 {
                return Err(Error::InvalidParameter(format!("jump size {}", e.delta)));
            }
            if !(e.time >= last) || e.time > horizon {
                return Err(Error::InvalidParameter(format!(
                    "event time {} out of order or past the horizon {horizon}",
                    e.time
                )));
            }
            last = e.time;
        }
        Ok(Self {
            initial,
            events,
            horizon,
        })
    }

    pub fn n_particles(&self) -> usize {
        self.initial.len()
    }

    pub fn state_at(&self, t: f64) -> Vec<i64> {
        let mut s = self.initial.clone();
        for e in self.events.iter().take_while(|e| e.time <= t) {
            s[e.particle] += i64::from(e.delta);
        }
        s
    }

    pub fn final_state(&self) -> Vec<i64> {
        self.state_at(f64::INFINITY)
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

    /// Time of the first configuration (initial one included, at time 0) that is not
    /// strictly increasing.
    pub fn first_ordering_violation(&self) -> Option<f64> {
        let mut s = self.initial.clone();
        if !strictly_increasing(&s) {
            return Some(0.0);
        }
        for e in &self.events {
            s[e.particle] += i64::from(e.delta);
            if collides(&s, e.particle) {
                return Some(e.time);
            }
        }
        None
    }
}

fn check_chamber(y0: &[i64]) -> Result<()> {
    if y0.is_empty() {
        return Err(Error::InvalidParameter("no particles".into()));
    }
    if !strictly_increasing(y0) {
        return Err(chamber_error(y0));
    }
    Ok(())
}

/// Exclusion process: each particle rings at rate 1 and attempts a jump right with
/// probability `p`; jumps onto occupied sites are suppressed.
pub fn simulate_asep(cfg: &WalkConfig, y0: &[i64], horizon: f64, seed: u64) -> Result<JumpPath> {
    cfg.check_len(y0)?;
    check_chamber(y0)?;
    let mut rng = stream::rng(seed, "walks/asep");
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        let e: f64 = Exp1.sample(&mut rng);
        t += e / n as f64;
        if t > horizon {
            break;
        }
        let i = rng.random_range(0..n);
        let delta: i8 = if rng.random::<f64>() < cfg.p_right { 1 } else { -1 };
        y[i] += i64::from(delta);
        if collides(&y, i) {
            y[i] -= i64::from(delta);
            continue;
        }
        events.push(JumpEvent {
            time: t,
            particle: i,
            delta,
        });
    }
    JumpPath::new(y0.to_vec(), events, horizon)
}

/// Totally asymmetric walks conditioned never to meet: particle `i` jumps right at
/// rate `Δ(y+e_i)/Δ(y)`. The total rate is `N` in every state.
pub fn simulate_ni_walks(y0: &[i64], horizon: f64, seed: u64) -> Result<JumpPath> {
    check_chamber(y0)?;
    let mut rng = stream::rng(seed, "walks/ni");
    let n = y0.len();
    let nf = n as f64;
    let mut y = y0.to_vec();
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        let e: f64 = Exp1.sample(&mut rng);
        t += e / nf;
        if t > horizon {
            break;
        }
        let rates = gap_ratio_rates(&y);
        let mut u = rng.random::<f64>() * rates.iter().sum::<f64>();
        let mut i = n - 1;
        for (k, r) in rates.iter().enumerate() {
            if u < *r {
                i = k;
                break;
            }
            u -= r;
        }
        // floating round-off can only land on a zero-rate particle through the
        // fallback above
        if rates[i] == 0.0 {
            i = rates.iter().rposition(|&r| r > 0.0).expect("some rate is positive");
        }
        y[i] += 1;
        events.push(JumpEvent {
            time: t,
            particle: i,
            delta: 1,
        });
    }
    JumpPath::new(y0.to_vec(), events, horizon)
}

/// `L^{N(N-1)/4} h_L(y)` for each `L` (`p = 1`, default window), which tends to a
/// constant multiple of `Δ(y)`.
pub fn scaling_check(cfg: &WalkConfig, y: &[i64], ls: &[f64]) -> Result<Vec<f64>> {
    if cfg.p_right != 1.0 {
        return Err(Error::InvalidParameter("scaling check needs p = 1".into()));
    }
    let n = cfg.n_particles as f64;
    ls.iter()
        .map(|&l| Ok(l.powf(n * (n - 1.0) / 4.0) * survival_h(cfg, l, y, default_window(l))?))
        .collect()
}
