//! Statistics used by the experiments: Skorohod J1 distance between step paths,
//! Kolmogorov–Smirnov against Exp(1), two-sample ECDF distance, event-rate estimates
//! and the log-rate regression.

use serde::Serialize;

use crate::diffusion::BoxPath;
use crate::walks::JumpPath;
use crate::{Error, Result};

/// Paths with more jumps than this are compared by the sup-norm bound instead of the
/// exact alignment.
pub const EXACT_J1_MAX_JUMPS: usize = 64;

pub const MIN_KS_SAMPLES: usize = 20;

pub const MIN_RATE_RUNS: usize = 100;

/// A sorted, non-empty sample. `+∞` is allowed and stands for a censored value.
#[derive(Clone, Debug, PartialEq)]
pub struct EcdfSample {
    values: Vec<f64>,
}

impl EcdfSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Undersized { needed: 1, got: 0 });
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("NaN in sample".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.values.partition_point(|&v| v <= x) as f64 / self.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Every value divided by `scale`.
    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v / scale).collect(),
        }
    }

    /// `sup_{x < cap} |F_n(x) - F(x)|` for a continuous CDF `F`.
    pub fn distance_to_cdf(&self, cdf: impl Fn(f64) -> f64, cap: f64) -> f64 {
        let n = self.len() as f64;
        let mut d: f64 = 0.0;
        let mut below = 0.0;
        for (i, &x) in self.values.iter().enumerate() {
            if x >= cap {
                // the left limit at the cap is still attained
                if cap.is_finite() {
                    d = d.max((cdf(cap) - below).abs());
                }
                return d;
            }
            let f = cdf(x);
            d = d.max(f - below).max((i + 1) as f64 / n - f);
            below = (i + 1) as f64 / n;
        }
        if cap.is_finite() {
            d.max((cdf(cap) - below).abs())
        } else {
            d.max(1.0 - below)
        }
    }
}

pub fn exp1_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-x).exp_m1()
    }
}

/// Two-sample Kolmogorov distance `sup |F_a - F_b|`.
pub fn ecdf_distance(a: &EcdfSample, b: &EcdfSample) -> f64 {
    let (xa, xb) = (a.values(), b.values());
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let v = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= v {
            i += 1;
        }
        while j < xb.len() && xb[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    // past the end of one sample the other's remaining mass shows up at the next point
    if i < xa.len() || j < xb.len() {
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic Kolmogorov tail `P(K > λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov–Smirnov test against Exp(1); samples are expected to be
/// normalised by the caller.
pub fn ks_exponential(sample: &EcdfSample) -> Result<KsResult> {
    if sample.len() < MIN_KS_SAMPLES {
        return Err(Error::Undersized {
            needed: MIN_KS_SAMPLES,
            got: sample.len(),
        });
    }
    let statistic = sample.distance_to_cdf(exp1_cdf, f64::INFINITY);
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_q((sample.len() as f64).sqrt() * statistic),
        n: sample.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateEstimate {
    pub rate: f64,
    /// 95% normal-approximation interval, clipped at 0. For all-zero counts the upper
    /// end is the rule-of-three bound `3 / (runs h)`.
    pub ci_low: f64,
    pub ci_high: f64,
    pub std_error: f64,
    pub runs: usize,
}

impl RateEstimate {
    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }

    /// `|rate - x|` in standard errors (0 when both vanish).
    pub fn z_score(&self, x: f64) -> f64 {
        let d = (self.rate - x).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// Event rate from counts observed in windows of length `h`.
pub fn rate_estimate(counts: &[u64], h: f64) -> Result<RateEstimate> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("window h = {h}")));
    }
    let n = counts.len();
    if n < MIN_RATE_RUNS {
        return Err(Error::Undersized {
            needed: MIN_RATE_RUNS,
            got: n,
        });
    }
    let nf = n as f64;
    let mean = counts.iter().sum::<u64>() as f64 / nf;
    if mean == 0.0 {
        return Ok(RateEstimate {
            rate: 0.0,
            ci_low: 0.0,
            ci_high: 3.0 / (nf * h),
            std_error: 0.0,
            runs: n,
        });
    }
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let se = (var / nf).sqrt() / h;
    let rate = mean / h;
    Ok(RateEstimate {
        rate,
        ci_low: (rate - 1.96 * se).max(0.0),
        ci_high: rate + 1.96 * se,
        std_error: se,
        runs: n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRateFit {
    pub slope: f64,
    pub intercept: f64,
    /// `log λ_i - (intercept + slope κ_i)`.
    pub residuals: Vec<f64>,
}

/// Least squares of `log λ` on `κ`.
pub fn fit_log_rate(kappas: &[f64], lambdas: &[f64]) -> Result<LogRateFit> {
    if kappas.len() != lambdas.len() {
        return Err(Error::DimensionMismatch {
            expected: kappas.len(),
            found: lambdas.len(),
        });
    }
    if kappas.len() < 3 {
        return Err(Error::Undersized {
            needed: 3,
            got: kappas.len(),
        });
    }
    let mut sorted = kappas.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter(format!("repeated kappa in {kappas:?}")));
    }
    if lambdas.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-positive rate in {lambdas:?}")));
    }
    let n = kappas.len() as f64;
    let ys: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let mx = kappas.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = kappas.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = kappas.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = kappas
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - (intercept + slope * x))
        .collect();
    Ok(LogRateFit {
        slope,
        intercept,
        residuals,
    })
}

/// A vector-valued step path on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CadlagPath {
    /// Jump times, strictly increasing in `(0, horizon]`.
    times: Vec<f64>,
    /// `states[0]` is the initial value, `states[k]` the value after jump `k`.
    states: Vec<Vec<f64>>,
    horizon: f64,
}

impl CadlagPath {
    /// Simultaneous events are merged into one jump.
    pub fn new(initial: Vec<f64>, jumps: Vec<(f64, Vec<f64>)>, horizon: f64) -> Result<Self> {
        let mut times = Vec::with_capacity(jumps.len());
        let mut states = vec![initial];
        let mut last = 0.0;
        for (t, s) in jumps {
            if s.len() != states[0].len() {
                return Err(Error::DimensionMismatch {
                    expected: states[0].len(),
                    found: s.len(),
                });
            }
            if !(t >= last) {
                return Err(Error::InvalidParameter(format!("jump times not sorted at {t}")));
            }
            if t > horizon {
                return Err(Error::HorizonMismatch {
                    available: horizon,
                    requested: t,
                });
            }
            if t == last && !times.is_empty() {
                *states.last_mut().unwrap() = s;
            } else if t == 0.0 {
                states[0] = s;
            } else {
                times.push(t);
                states.push(s);
            }
            last = t;
        }
        Ok(Self {
            times,
            states,
            horizon,
        })
    }

    /// Jump path with times divided by `time_scale`.
    pub fn from_jump_path(path: &JumpPath, time_scale: f64) -> Result<Self> {
        let mut s: Vec<f64> = path.initial.iter().map(|&y| y as f64).collect();
        let jumps = path
            .events
            .iter()
            .map(|e| {
                s[e.particle] += f64::from(e.delta);
                (e.time / time_scale, s.clone())
            })
            .collect();
        let initial = path.initial.iter().map(|&y| y as f64).collect();
        Self::new(initial, jumps, path.horizon / time_scale)
    }

    /// Box path with times measured from its start and divided by `time_scale`.
    pub fn from_box_path(path: &BoxPath, time_scale: f64) -> Result<Self> {
        let mut s: Vec<f64> = path.initial.iter().map(|&y| y as f64).collect();
        let jumps = path
            .events
            .iter()
            .map(|e| {
                s[e.particle] = e.value as f64;
                ((e.time - path.start_time) / time_scale, s.clone())
            })
            .collect();
        let initial = path.initial.iter().map(|&y| y as f64).collect();
        Self::new(initial, jumps, (path.end_time - path.start_time) / time_scale)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn jump_count(&self) -> usize {
        self.times.len()
    }

    pub fn value_at(&self, t: f64) -> &[f64] {
        &self.states[self.times.partition_point(|&s| s <= t)]
    }

    /// The path on `[0, m]`.
    pub fn restricted(&self, m: f64) -> Result<Self> {
        if m > self.horizon + 1e-12 {
            return Err(Error::HorizonMismatch {
                available: self.horizon,
                requested: m,
            });
        }
        let k = self.times.partition_point(|&s| s <= m);
        Ok(Self {
            times: self.times[..k].to_vec(),
            states: self.states[..=k].to_vec(),
            horizon: m,
        })
    }
}

fn value_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Two step paths on a common `[0, M]`.
#[derive(Clone, Debug)]
pub struct CadlagPair {
    pub a: CadlagPath,
    pub b: CadlagPath,
}

impl CadlagPair {
    /// Restricts both paths to `[0, m]`; fails if either is defined on less.
    pub fn new(a: &CadlagPath, b: &CadlagPath, m: f64) -> Result<Self> {
        if a.states[0].len() != b.states[0].len() {
            return Err(Error::DimensionMismatch {
                expected: a.states[0].len(),
                found: b.states[0].len(),
            });
        }
        Ok(Self {
            a: a.restricted(m)?,
            b: b.restricted(m)?,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.a.horizon
    }

    /// `sup_t |a(t) - b(t)|` (max over coordinates).
    pub fn sup_distance(&self) -> f64 {
        let mut d = value_gap(&self.a.states[0], &self.b.states[0]);
        let (mut i, mut j) = (0, 0);
        let (ta, tb) = (&self.a.times, &self.b.times);
        while i < ta.len() || j < tb.len() {
            let t = match (ta.get(i), tb.get(j)) {
                (Some(&x), Some(&y)) => x.min(y),
                (Some(&x), None) => x,
                (None, Some(&y)) => y,
                (None, None) => unreachable!(),
            };
            while i < ta.len() && ta[i] <= t {
                i += 1;
            }
            while j < tb.len() && tb[j] <= t {
                j += 1;
            }
            d = d.max(value_gap(&self.a.states[i], &self.b.states[j]));
        }
        d
    }

    /// Whether a time change `λ` with `|λ - id| <= eps` and `|a - b∘λ| <= eps` exists.
    ///
    /// DP over (jumps of `a` passed, jumps of `b` passed) storing the earliest `a`-clock
    /// time at which the state can be reached.
    fn feasible(&self, eps: f64) -> bool {
        let (s, u) = (&self.a.times, &self.b.times);
        let (na, nb) = (s.len(), u.len());
        let ok = |i: usize, j: usize| value_gap(&self.a.states[i], &self.b.states[j]) <= eps;
        if !ok(0, 0) {
            return false;
        }
        let mut lb = vec![f64::INFINITY; (na + 1) * (nb + 1)];
        let idx = |i: usize, j: usize| i * (nb + 1) + j;
        lb[0] = 0.0;
        for i in 0..=na {
            for j in 0..=nb {
                let t = lb[idx(i, j)];
                if !t.is_finite() {
                    continue;
                }
                let next_a = s.get(i).copied().unwrap_or(f64::INFINITY);
                if i < na && next_a >= t && ok(i + 1, j) {
                    let k = idx(i + 1, j);
                    lb[k] = lb[k].min(next_a);
                }
                if j < nb && ok(i, j + 1) {
                    let tj = t.max(u[j] - eps);
                    if tj <= u[j] + eps && tj <= next_a && tj <= self.a.horizon {
                        let k = idx(i, j + 1);
                        lb[k] = lb[k].min(tj);
                    }
                }
                if i < na && j < nb && next_a >= t && (next_a - u[j]).abs() <= eps && ok(i + 1, j + 1)
                {
                    let k = idx(i + 1, j + 1);
                    lb[k] = lb[k].min(next_a);
                }
            }
        }
        lb[idx(na, nb)].is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct J1Distance {
    pub distance: f64,
    /// False when the sup-norm upper bound was returned instead.
    pub exact: bool,
}

/// Skorohod J1 distance on the pair's common horizon.
pub fn skorohod_j1(pair: &CadlagPair) -> J1Distance {
    let sup = pair.sup_distance();
    if pair.a.jump_count() > EXACT_J1_MAX_JUMPS || pair.b.jump_count() > EXACT_J1_MAX_JUMPS {
        return J1Distance {
            distance: sup,
            exact: false,
        };
    }
    let mut cands = vec![0.0, sup];
    for &x in &pair.a.times {
        for &y in &pair.b.times {
            cands.push((x - y).abs());
        }
    }
    for sa in &pair.a.states {
        for sb in &pair.b.states {
            cands.push(value_gap(sa, sb));
        }
    }
    cands.retain(|&c| c <= sup);
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    // smallest feasible candidate; `sup` (identity time change) is always feasible
    let (mut lo, mut hi) = (0, cands.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pair.feasible(cands[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    J1Distance {
        distance: cands[lo],
        exact: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, Exp};

    use crate::stream;

    fn step(initial: f64, jumps: &[(f64, f64)], m: f64) -> CadlagPath {
        CadlagPath::new(
            vec![initial],
            jumps.iter().map(|&(t, v)| (t, vec![v])).collect(),
            m,
        )
        .unwrap()
    }

    fn j1(a: &CadlagPath, b: &CadlagPath) -> f64 {
        skorohod_j1(&CadlagPair::new(a, b, a.horizon()).unwrap()).distance
    }

    /// Brute force over piecewise-linear time changes with one knot at `a`'s single
    /// jump, the knot image on a grid of 1000 points; value cost on a fine grid.
    fn brute_single_jump(a: &CadlagPath, b: &CadlagPath) -> f64 {
        let m = a.horizon();
        let s = a.times[0];
        let mut best = f64::INFINITY;
        for k in 1..1000 {
            let ls = m * k as f64 / 1000.0;
            let lam = |t: f64| {
                if t <= s {
                    t * ls / s
                } else {
                    ls + (t - s) * (m - ls) / (m - s)
                }
            };
            let mut cost = (ls - s).abs();
            for q in 0..=4000 {
                let t = m * q as f64 / 4000.0;
                cost = cost.max(value_gap(a.value_at(t), b.value_at(lam(t))));
            }
            best = best.min(cost);
        }
        best
    }

    #[test]
    fn j1_identical_paths() {
        let a = step(0.0, &[(0.3, 1.0), (0.8, 2.0)], 2.0);
        assert_eq!(j1(&a, &a), 0.0);
    }

    #[test]
    fn j1_shifted_jump() {
        let a = step(0.0, &[(0.5, 1.0)], 2.0);
        let b = step(0.0, &[(0.58, 1.0)], 2.0);
        let d = j1(&a, &b);
        assert!(d <= 0.08 + 1e-12);
        assert_abs_diff_eq!(d, 0.08, epsilon = 1e-12);
    }

    #[test]
    fn j1_value_gap_matches_brute_force() {
        let a = step(0.0, &[(0.5, 1.0)], 2.0);
        let b = step(0.0, &[(0.5, 1.3)], 2.0);
        let d = j1(&a, &b);
        assert_abs_diff_eq!(d, 0.3, epsilon = 1e-12);
        assert!((brute_single_jump(&a, &b) - d).abs() < 5e-3);

        let a = step(0.0, &[(0.5, 1.0)], 2.0);
        let b = step(0.2, &[(0.9, 1.0)], 2.0);
        let d = j1(&a, &b);
        assert!((brute_single_jump(&a, &b) - d).abs() < 5e-3, "{d}");
    }

    #[test]
    fn j1_unmatched_jump_costs_its_size() {
        let a = step(0.0, &[(0.5, 1.0)], 2.0);
        let b = step(0.0, &[], 2.0);
        assert_abs_diff_eq!(j1(&a, &b), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn j1_horizon_mismatch() {
        let a = step(0.0, &[], 1.0);
        let b = step(0.0, &[], 2.0);
        assert!(matches!(
            CadlagPair::new(&a, &b, 2.0),
            Err(Error::HorizonMismatch { .. })
        ));
        assert!(CadlagPair::new(&a, &b, 1.0).is_ok());
    }

    #[test]
    fn j1_falls_back_for_many_jumps() {
        let jumps: Vec<(f64, f64)> = (1..=70).map(|k| (k as f64 * 0.01, k as f64)).collect();
        let a = step(0.0, &jumps, 1.0);
        let r = skorohod_j1(&CadlagPair::new(&a, &a, 1.0).unwrap());
        assert!(!r.exact);
        assert_eq!(r.distance, 0.0);
    }

    #[test]
    fn ks_rejects_constants() {
        let s = EcdfSample::new(vec![1.0; 200]).unwrap();
        let r = ks_exponential(&s).unwrap();
        assert!(r.statistic >= 1.0 - (-1.0_f64).exp() - 1e-12);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn ks_needs_twenty_samples() {
        let s = EcdfSample::new(vec![1.0; 19]).unwrap();
        assert!(matches!(ks_exponential(&s), Err(Error::Undersized { .. })));
    }

    #[test]
    fn ks_accepts_self_normalised_exp5() {
        let mut rng = stream::rng(3, "test/ks/exp5");
        let xs: Vec<f64> = Exp::new(5.0).unwrap().sample_iter(&mut rng).take(2000).collect();
        let s = EcdfSample::new(xs).unwrap();
        let n = s.scaled(s.mean());
        assert!(ks_exponential(&n).unwrap().p_value > 0.01);
        // normalising twice changes nothing
        let nn = n.scaled(n.mean());
        assert_abs_diff_eq!(
            ks_exponential(&nn).unwrap().statistic,
            ks_exponential(&n).unwrap().statistic,
            epsilon = 1e-12
        );
    }

    #[test]
    fn kolmogorov_q_reference_values() {
        // standard table: P(K > 1.36) ≈ 0.049, P(K > 1.63) ≈ 0.0098
        assert_abs_diff_eq!(kolmogorov_q(1.36), 0.0494, epsilon = 5e-4);
        assert_abs_diff_eq!(kolmogorov_q(1.63), 0.0098, epsilon = 5e-4);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn ecdf_distance_basic() {
        let a = EcdfSample::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(ecdf_distance(&a, &a), 0.0);
        let b = EcdfSample::new(vec![10.0, 11.0]).unwrap();
        assert_eq!(ecdf_distance(&a, &b), 1.0);
        let c = EcdfSample::new(vec![2.5]).unwrap();
        assert_abs_diff_eq!(ecdf_distance(&a, &c), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn ecdf_distance_censored_values() {
        let a = EcdfSample::new(vec![1.0, f64::INFINITY]).unwrap();
        let b = EcdfSample::new(vec![1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(ecdf_distance(&a, &b), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn ecdf_split_exp_stream() {
        let mut rng = stream::rng(8, "test/ecdf/split");
        let xs: Vec<f64> = Exp::new(1.0).unwrap().sample_iter(&mut rng).take(20_000).collect();
        let a = EcdfSample::new(xs[..10_000].to_vec()).unwrap();
        let b = EcdfSample::new(xs[10_000..].to_vec()).unwrap();
        assert!(ecdf_distance(&a, &b) <= 0.04);
    }

    #[test]
    fn rate_from_poisson_counts() {
        let h = 0.02;
        let mut rng = stream::rng(1, "test/rate/poisson");
        let pois = rand_distr::Poisson::new(2.0 * h).unwrap();
        let counts: Vec<u64> = (0..100_000).map(|_| pois.sample(&mut rng) as u64).collect();
        let r = rate_estimate(&counts, h).unwrap();
        assert!((1.96..=2.04).contains(&r.rate), "{r:?}");
        assert!(r.contains(2.0));
    }

    #[test]
    fn rate_all_zero_and_too_few() {
        let r = rate_estimate(&[0; 500], 0.1).unwrap();
        assert_eq!(r.rate, 0.0);
        assert_eq!(r.ci_low, 0.0);
        assert_abs_diff_eq!(r.ci_high, 3.0 / 50.0, epsilon = 1e-15);
        assert!(rate_estimate(&[1; 99], 0.1).is_err());
    }

    #[test]
    fn log_rate_exact_exponential() {
        let ks = [2.0_f64, 2.5, 3.0, 3.5];
        let ls: Vec<f64> = ks.iter().map(|k| (2.0 * k).exp()).collect();
        let f = fit_log_rate(&ks, &ls).unwrap();
        assert_abs_diff_eq!(f.slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.intercept, 0.0, epsilon = 1e-12);
        assert!(fit_log_rate(&ks[..2], &ls[..2]).is_err());
        assert!(fit_log_rate(&[2.0, 2.0, 3.0], &ls[..3]).is_err());
    }

    #[test]
    fn log_rate_lognormal_noise() {
        let ks = [2.0_f64, 2.5, 3.0, 3.5];
        let mut rng = stream::rng(4, "test/fit/lognormal");
        let noise = rand_distr::LogNormal::new(0.0, 0.2).unwrap();
        let good = (0..1000)
            .filter(|_| {
                let ls: Vec<f64> = ks.iter().map(|k| (2.0 * k).exp() * noise.sample(&mut rng)).collect();
                let s = fit_log_rate(&ks, &ls).unwrap().slope;
                (1.5..=2.5).contains(&s)
            })
            .count();
        assert!(good >= 950, "{good}");
    }
}
