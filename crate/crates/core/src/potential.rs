//! The tilted periodic potential `v(x) = u(x) - b x`.
//!
//! `u` has period one. The default form is the trigonometric potential
//!
//! ```text
//! v(x) = (2 + b)/2 · sin²(πx) + b/(4π) · sin(4πx) − b x
//! ```
//!
//! whose critical points sit exactly at the integers (minima) and half-integers
//! (maxima) for small tilts, with `v(0) = 0` and `v(1/2) = 1`. A user-supplied table of
//! `u` on one period is interpolated by a periodic cubic spline.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use crate::{stream, Error, Result};

/// Tolerance for the exact identities `v(0) = 0`, `v(1/2) = 1`, `v(x+1) - v(x) = -b`.
pub const IDENTITY_TOL: f64 = 1e-10;

/// Grid used when scanning one period for critical points and for `sup |v''|`.
pub const SCAN_POINTS: usize = 10_000;

/// Largest tilt accepted for the trigonometric default.
pub const MAX_TRIG_TILT: f64 = 1.0;

#[derive(Clone, Debug)]
pub enum Form {
    DefaultTrig,
    UserTable(PeriodicSpline),
}

#[derive(Clone, Debug)]
pub struct PotentialSpec {
    tilt_b: f64,
    kappa: f64,
    form: Form,
    sup_curvature: f64,
}

impl PotentialSpec {
    /// The trigonometric default with tilt `b` and barrier scale `kappa`.
    ///
    /// Construction only rejects non-finite or negative parameters; the modelling
    /// assumptions are checked by [`validate_spec`].
    pub fn default_trig(tilt_b: f64, kappa: f64) -> Result<Self> {
        Self::build(tilt_b, kappa, Form::DefaultTrig)
    }

    /// A potential whose periodic part is read from samples of `u` on
    /// `x_k = -1/2 + k/M`, `k = 0..=M` (both endpoints included).
    pub fn from_table(tilt_b: f64, kappa: f64, samples: &[f64], degree: u32) -> Result<Self> {
        if degree != 3 {
            return Err(Error::InvalidParameter(format!(
                "only cubic (degree 3) periodic splines are supported, got degree {degree}"
            )));
        }
        let spline = PeriodicSpline::new(samples)?;
        Self::build(tilt_b, kappa, Form::UserTable(spline))
    }

    fn build(tilt_b: f64, kappa: f64, form: Form) -> Result<Self> {
        if !tilt_b.is_finite() || tilt_b < 0.0 {
            return Err(Error::InvalidParameter(format!("tilt b = {tilt_b}")));
        }
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(Error::InvalidParameter(format!("kappa = {kappa}")));
        }
        let mut spec = Self {
            tilt_b,
            kappa,
            form,
            sup_curvature: 0.0,
        };
        spec.sup_curvature = (0..SCAN_POINTS)
            .map(|k| spec.curvature(-0.5 + k as f64 / SCAN_POINTS as f64).abs())
            .fold(0.0, f64::max);
        Ok(spec)
    }

    /// Same potential shape with a different barrier scale.
    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(Error::InvalidParameter(format!("kappa = {kappa}")));
        }
        Ok(Self {
            kappa,
            ..self.clone()
        })
    }

    pub fn tilt_b(&self) -> f64 {
        self.tilt_b
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn form(&self) -> &Form {
        &self.form
    }

    /// `sup |v''|` over one period (grid scan).
    pub fn sup_curvature(&self) -> f64 {
        self.sup_curvature
    }

    /// `v(x)`.
    pub fn value(&self, x: f64) -> f64 {
        let b = self.tilt_b;
        match &self.form {
            Form::DefaultTrig => {
                let s = (PI * x).sin();
                0.5 * (2.0 + b) * s * s + b / (4.0 * PI) * (4.0 * PI * x).sin() - b * x
            }
            Form::UserTable(sp) => sp.value(x) - b * x,
        }
    }

    /// `v'(x)`.
    pub fn slope(&self, x: f64) -> f64 {
        let b = self.tilt_b;
        match &self.form {
            Form::DefaultTrig => {
                // cos(4πx) = 1 - 2 sin²(2πx), so v' = s (A - 2 b s) with s = sin(2πx).
                let s = (2.0 * PI * x).sin();
                s * (0.5 * (2.0 + b) * PI - 2.0 * b * s)
            }
            Form::UserTable(sp) => sp.derivative(x) - b,
        }
    }

    /// `v''(x)`.
    pub fn curvature(&self, x: f64) -> f64 {
        let b = self.tilt_b;
        match &self.form {
            Form::DefaultTrig => {
                let (s, c) = (2.0 * PI * x).sin_cos();
                2.0 * PI * c * (0.5 * (2.0 + b) * PI - 4.0 * b * s)
            }
            Form::UserTable(sp) => sp.second_derivative(x),
        }
    }

    /// Deterministic drift `-κ v'(x)` of the SDE.
    #[inline]
    pub fn force(&self, x: f64) -> f64 {
        -self.kappa * self.slope(x)
    }

    /// The default time step `min(1e-3, 0.1 / (κ sup|v''|))`.
    pub fn default_dt(&self) -> f64 {
        let stiffness = self.kappa * self.sup_curvature;
        if stiffness > 0.0 {
            (0.1 / stiffness).min(1e-3)
        } else {
            1e-3
        }
    }

    /// Checks `dt κ sup|v''| < 0.5`.
    pub fn check_dt(&self, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step dt = {dt}")));
        }
        let product = dt * self.kappa * self.sup_curvature;
        if product >= 0.5 {
            return Err(Error::StabilityGuard { dt, product });
        }
        Ok(())
    }

    /// Left end of the well around 0 at energy `g_hat`, i.e. the point
    /// `a ∈ [-1/2, 0]` with `v(a) = g_hat`. Requires `v(0) < g_hat <= v(-1/2)`.
    pub fn left_level_point(&self, g_hat: f64) -> Result<f64> {
        let top = self.value(-0.5);
        if !(g_hat > self.value(0.0) && g_hat <= top + IDENTITY_TOL) {
            return Err(Error::InvalidParameter(format!(
                "g_hat = {g_hat} must lie in (v(0), v(-1/2)] = ({}, {top}]",
                self.value(0.0)
            )));
        }
        if g_hat >= top {
            return Ok(-0.5);
        }
        // v is decreasing on [-1/2, 0] under the validated critical-point structure.
        let (mut lo, mut hi) = (-0.5, 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.value(mid) > g_hat {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// `v(x)`.
pub fn eval_potential(spec: &PotentialSpec, x: f64) -> f64 {
    spec.value(x)
}

/// `v'(x)`; the SDE integrator applies the `-κ` factor.
pub fn eval_drift(spec: &PotentialSpec, x: f64) -> f64 {
    spec.slope(x)
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(Check {
            name,
            passed,
            detail,
        });
    }
}

/// Sign changes of `v'` over one period, scanned on a cell-centred grid.
#[derive(Clone, Debug)]
pub struct CriticalScan {
    /// Grid location (left cell centre) of each `-` to `+` change of `v'` (local minima).
    pub minima: Vec<f64>,
    /// Grid location of each `+` to `-` change (local maxima).
    pub maxima: Vec<f64>,
}

pub fn scan_critical_points(spec: &PotentialSpec, points: usize) -> CriticalScan {
    let h = 1.0 / points as f64;
    let xs: Vec<f64> = (0..points).map(|k| -0.5 + (k as f64 + 0.5) * h).collect();
    let d: Vec<f64> = xs.iter().map(|&x| spec.slope(x)).collect();
    let mut scan = CriticalScan {
        minima: Vec::new(),
        maxima: Vec::new(),
    };
    for k in 0..points {
        let (a, b) = (d[k], d[(k + 1) % points]);
        if a < 0.0 && b >= 0.0 {
            scan.minima.push(xs[k] + 0.5 * h);
        } else if a > 0.0 && b <= 0.0 {
            scan.maxima.push(xs[k] + 0.5 * h);
        }
    }
    scan
}

/// Distance from `x` to `target + Z`.
fn periodic_distance(x: f64, target: f64) -> f64 {
    let r = (x - target).rem_euclid(1.0);
    r.min(1.0 - r)
}

/// Checks every modelling assumption on the potential and reports each one.
/// A violated assumption yields a failed report, never an error.
pub fn validate_spec(spec: &PotentialSpec) -> ValidationReport {
    let mut report = ValidationReport { checks: Vec::new() };
    let b = spec.tilt_b();

    report.push("tilt_positive", b > 0.0, format!("b = {b}"));
    report.push("kappa_positive", spec.kappa() > 0.0, format!("kappa = {}", spec.kappa()));
    match spec.form() {
        Form::DefaultTrig => report.push(
            "tilt_range",
            b <= MAX_TRIG_TILT,
            format!("default_trig requires b <= {MAX_TRIG_TILT}, b = {b}"),
        ),
        Form::UserTable(sp) => {
            let gap = sp.endpoint_gap();
            report.push(
                "table_periodic",
                gap <= IDENTITY_TOL,
                format!("|u(1/2) - u(-1/2)| = {gap:.3e}"),
            );
        }
    }

    let v0 = spec.value(0.0);
    report.push("value_at_zero", v0.abs() <= IDENTITY_TOL, format!("v(0) = {v0:.3e}"));
    let vh = spec.value(0.5);
    report.push(
        "value_at_half",
        (vh - 1.0).abs() <= IDENTITY_TOL,
        format!("v(1/2) = {vh:.12}"),
    );

    let mut rng = stream::rng(0, "potential/validate/tilt_identity");
    let worst = (0..1000)
        .map(|_| {
            let x: f64 = rng.random_range(-3.0..3.0);
            (spec.value(x + 1.0) - spec.value(x) + b).abs()
        })
        .fold(0.0, f64::max);
    report.push(
        "tilt_identity",
        worst <= IDENTITY_TOL,
        format!("max |v(x+1) - v(x) + b| over 1000 points = {worst:.3e}"),
    );

    let scan = scan_critical_points(spec, SCAN_POINTS);
    let tol = 1.0 / SCAN_POINTS as f64;
    let ok = scan.minima.len() == 1
        && scan.maxima.len() == 1
        && scan.minima[0].abs() <= tol
        && periodic_distance(scan.maxima[0], 0.5) <= tol;
    report.push(
        "critical_points",
        ok,
        format!(
            "{} sign changes of v' per period (minima at {:?}, maxima at {:?})",
            scan.minima.len() + scan.maxima.len(),
            scan.minima,
            scan.maxima
        ),
    );
    report
}

/// C² periodic cubic spline through equally spaced samples on `[-1/2, 1/2)`.
#[derive(Clone, Debug)]
pub struct PeriodicSpline {
    values: Vec<f64>,
    moments: Vec<f64>,
    endpoint_gap: f64,
}

impl PeriodicSpline {
    /// `samples[k] = u(-1/2 + k/M)` for `k = 0..=M`; the last sample closes the period
    /// and is only used for the periodicity check.
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.len() < 4 {
            return Err(Error::Undersized {
                needed: 4,
                got: samples.len(),
            });
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite table sample".into()));
        }
        let m = samples.len() - 1;
        let values = samples[..m].to_vec();
        let h = 1.0 / m as f64;
        let rhs: Vec<f64> = (0..m)
            .map(|k| {
                let prev = values[(k + m - 1) % m];
                let next = values[(k + 1) % m];
                6.0 * (next - 2.0 * values[k] + prev) / (h * h)
            })
            .collect();
        let moments = solve_cyclic_tridiagonal(1.0, 4.0, 1.0, &rhs);
        Ok(Self {
            values,
            moments,
            endpoint_gap: (samples[m] - samples[0]).abs(),
        })
    }

    pub fn endpoint_gap(&self) -> f64 {
        self.endpoint_gap
    }

    fn locate(&self, x: f64) -> (usize, f64, f64) {
        let m = self.values.len();
        let y = (x + 0.5).rem_euclid(1.0) * m as f64;
        let k = (y.floor() as usize).min(m - 1);
        let frac = y - k as f64;
        (k, frac, 1.0 / m as f64)
    }

    pub fn value(&self, x: f64) -> f64 {
        let (k, t, h) = self.locate(x);
        let k1 = (k + 1) % self.values.len();
        let (m0, m1) = (self.moments[k], self.moments[k1]);
        let a = 1.0 - t;
        m0 * a * a * a * h * h / 6.0
            + m1 * t * t * t * h * h / 6.0
            + (self.values[k] - m0 * h * h / 6.0) * a
            + (self.values[k1] - m1 * h * h / 6.0) * t
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (k, t, h) = self.locate(x);
        let k1 = (k + 1) % self.values.len();
        let (m0, m1) = (self.moments[k], self.moments[k1]);
        let a = 1.0 - t;
        -m0 * a * a * h / 2.0 + m1 * t * t * h / 2.0 + (self.values[k1] - self.values[k]) / h
            - (m1 - m0) * h / 6.0
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let (k, t, _) = self.locate(x);
        let k1 = (k + 1) % self.values.len();
        self.moments[k] * (1.0 - t) + self.moments[k1] * t
    }
}

/// Solves the circulant tridiagonal system with constant `sub`, `diag`, `sup` bands
/// (corners wrap) by Sherman–Morrison on top of the Thomas algorithm.
fn solve_cyclic_tridiagonal(sub: f64, diag: f64, sup: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let gamma = -diag;
    let mut d = vec![diag; n];
    d[0] = diag - gamma;
    d[n - 1] = diag - sub * sup / gamma;
    let thomas = |r: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        c[0] = sup / d[0];
        x[0] = r[0] / d[0];
        for i in 1..n {
            let den = d[i] - sub * c[i - 1];
            c[i] = sup / den;
            x[i] = (r[i] - sub * x[i - 1]) / den;
        }
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        x
    };
    let y = thomas(rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = sub;
    let z = thomas(&u);
    let fact = (y[0] + sup * y[n - 1] / gamma) / (1.0 + z[0] + sup * z[n - 1] / gamma);
    y.iter().zip(&z).map(|(yi, zi)| yi - fact * zi).collect()
}

/// Reads a table of `u` samples: one value per line, or `x,u` pairs (the last column
/// is used). Blank lines and lines starting with `#` are skipped.
pub fn read_table(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or(line).trim();
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            // a header row such as "x,u"
            Err(_) if out.is_empty() && lineno == 0 => continue,
            Err(_) => {
                return Err(Error::InvalidParameter(format!(
                    "{}:{}: cannot parse {field:?}",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    Ok(out)
}
