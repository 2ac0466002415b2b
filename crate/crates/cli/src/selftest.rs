//! Fast sanity suite: exact identities and small Monte Carlo checks with known answers.

use std::f64::consts::PI;

use myosim::analysis::{
    ecdf_distance, fit_log_rate, ks_exponential, rate_estimate, skorohod_j1, CadlagPair, CadlagPath,
    EcdfSample,
};
use myosim::diffusion::{
    box_process, coupled_pair, first_exit_weyl, integrate, lambda_from_exit_times, metastability_trial,
    occupation_outside_ball, ExitOptions, TrajectoryGrid,
};
use myosim::myopic::{algorithm_a, algorithm_c, sample_conditioned_walk, DEFAULT_MAX_REJECTS};
use myosim::potential::{validate_spec, PotentialSpec};
use myosim::report::Report;
use myosim::stream::child_seed;
use myosim::walks::{
    km_determinant, mrw_rates, scaling_check, simulate_asep, simulate_ni_walks, survival_h,
    transition_pmf, vandermonde_rates, WalkConfig,
};

pub const SELFTEST_SEED: u64 = 20_240_601;

type Outcome = myosim::Result<(bool, String)>;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn trig(kappa: f64) -> myosim::Result<PotentialSpec> {
    PotentialSpec::default_trig(0.5, kappa)
}

fn grid(dt: f64, n: usize, rows: Vec<f64>) -> myosim::Result<TrajectoryGrid> {
    TrajectoryGrid::new(dt, 0.0, n, rows, 0)
}

/// Mean of `samples` lies within 3 standard errors of `mean` (Poisson: variance = mean).
fn poisson_mean_ok(samples: &[f64], mean: f64) -> (bool, String) {
    let m = samples.iter().sum::<f64>() / samples.len() as f64;
    let se = (mean / samples.len() as f64).sqrt();
    ((m - mean).abs() < 3.0 * se, format!("mean {m:.4} vs {mean} (se {se:.4})"))
}

fn periodicity(_: u64) -> Outcome {
    let s = trig(1.0)?;
    Ok((close(s.value(1.0), -0.5, 1e-10), format!("v(1) = {}", s.value(1.0))))
}

fn critical_points(_: u64) -> Outcome {
    let s = trig(1.0)?;
    let (a, b) = (s.slope(0.0), s.slope(0.5));
    Ok((close(a, 0.0, 1e-10) && close(b, 0.0, 1e-10), format!("v'(0) = {a:.2e}, v'(1/2) = {b:.2e}")))
}

fn non_periodic_table(_: u64) -> Outcome {
    let s = trig(1.0)?;
    let mut table: Vec<f64> = (0..=200)
        .map(|k| {
            let x = -0.5 + k as f64 / 200.0;
            s.value(x) + 0.5 * x
        })
        .collect();
    *table.last_mut().expect("non-empty") += 0.01;
    let t = PotentialSpec::from_table(0.5, 1.0, &table, 3)?;
    let passed = validate_spec(&t).check("table_periodic").is_some_and(|c| !c.passed);
    Ok((passed, "periodicity check fails on a perturbed table".into()))
}

fn free_variance(seed: u64) -> Outcome {
    let s = trig(0.0)?;
    let runs = 10_000;
    let xs: Vec<f64> = (0..runs)
        .map(|i| {
            let t = integrate(&s, &[0.0], 0.01, 1.0, child_seed(seed, &format!("selftest/bm/{i}")))?;
            Ok(t.row(t.len() - 1)[0])
        })
        .collect::<myosim::Result<_>>()?;
    let mean = xs.iter().sum::<f64>() / runs as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
    Ok(((0.94..=1.06).contains(&var), format!("Var X(1) = {var:.4}")))
}

fn determinism(seed: u64) -> Outcome {
    let s = trig(3.0)?;
    let a = integrate(&s, &[0.1, 1.2], 1e-3, 1.0, seed)?;
    let b = integrate(&s, &[0.1, 1.2], 1e-3, 1.0, seed)?;
    Ok((a.positions() == b.positions(), "two runs with one seed".into()))
}

fn box_examples(_: u64) -> Outcome {
    let still = box_process(&grid(0.1, 1, vec![0.3; 11])?);
    let line = box_process(&grid(0.1, 1, (0..=10).map(|k| 0.4 + 0.1 * k as f64).collect())?);
    let first = line.first_event_time().unwrap_or(f64::NAN);
    let passed = still.initial == vec![0]
        && still.events.is_empty()
        && line.events.len() == 1
        && line.events[0].value == 1
        && close(first, 0.6, 1e-12);
    Ok((passed, format!("constant: {} events; 0.4 to 1.4: event at {first}", still.events.len())))
}

fn weyl_constant(_: u64) -> Outcome {
    let e = first_exit_weyl(&grid(0.1, 2, [0.1, 2.3].repeat(11))?)?;
    Ok((e.tau_cont.is_none() && e.tau_box.is_none(), format!("{e:?}")))
}

fn exit_determinism(seed: u64) -> Outcome {
    let s = trig(2.0)?;
    let a = metastability_trial(&s, seed, &ExitOptions::default())?;
    let b = metastability_trial(&s, seed, &ExitOptions::default())?;
    Ok((a == b, format!("tau = {}", a.tau)))
}

fn single_kappa(_: u64) -> Outcome {
    let r = lambda_from_exit_times(&[3.0], &[vec![1.0; 300]]);
    Ok((r.is_err(), "one kappa value rejected".into()))
}

fn occupation(_: u64) -> Outcome {
    let zero = occupation_outside_ball(&grid(0.1, 1, vec![0.0; 41])?, 0, 0.0, 0.1, 1.0)?;
    let far = occupation_outside_ball(&grid(0.1, 1, vec![0.9; 41])?, 0, 0.0, 0.1, 1.0)?;
    let passed = zero.iter().all(|&f| f == 0.0) && far.iter().all(|&f| f == 1.0);
    Ok((passed, format!("{zero:?} / {far:?}")))
}

fn coupled_identical(seed: u64) -> Outcome {
    let c = coupled_pair(&trig(3.0)?, 0.1, 0.1, 0.0, 1e-3, 1.0, seed)?;
    let passed = c.meet_time == Some(0.0) && c.leader.positions() == c.lagged.positions();
    Ok((passed, format!("meet_time {:?}", c.meet_time)))
}

fn pmf_values(_: u64) -> Outcome {
    let tasep = WalkConfig::tasep(1)?;
    let sym = WalkConfig::new(1, 0.5)?;
    let p0 = transition_pmf(&tasep, 1.0, 0);
    let back = transition_pmf(&tasep, 2.7, -1);
    let (r, l) = (transition_pmf(&sym, 1.0, 1), transition_pmf(&sym, 1.0, -1));
    let passed = close(p0, (-1.0_f64).exp(), 1e-15) && back == 0.0 && close(r, l, 1e-15);
    Ok((passed, format!("pmf(0) = {p0}, pmf(-1) = {back}, symmetric {r} / {l}")))
}

fn km_values(_: u64) -> Outcome {
    let one = WalkConfig::tasep(1)?;
    let two = WalkConfig::tasep(2)?;
    let single = km_determinant(&one, 1.3, &[0], &[2])?;
    let repeated = km_determinant(&two, 1.0, &[0, 1], &[2, 2])?;
    let passed = close(single, transition_pmf(&one, 1.3, 2), 1e-15) && repeated == 0.0;
    Ok((passed, format!("N=1 {single}, repeated {repeated}")))
}

fn survival_values(_: u64) -> Outcome {
    let one = survival_h(&WalkConfig::tasep(1)?, 7.0, &[3], 40)?;
    let tied = survival_h(&WalkConfig::tasep(2)?, 1.0, &[0, 0], 20)?;
    Ok((one == 1.0 && tied == 0.0, format!("N=1 {one}, tied {tied}")))
}

fn blocked_rate(_: u64) -> Outcome {
    let r = mrw_rates(&WalkConfig::tasep(2)?, 1.0, &[0, 1], 20)?;
    Ok((r.right[0] == 0.0, format!("right rates {:?}", r.right)))
}

fn vandermonde_values(_: u64) -> Outcome {
    let a = vandermonde_rates(&[0, 1])?;
    let b = vandermonde_rates(&[0, 2])?;
    let c = vandermonde_rates(&[-3, 0, 4, 5])?;
    let passed = a == vec![0.0, 2.0] && b == vec![0.5, 1.5] && close(c.iter().sum(), 4.0, 1e-12);
    Ok((passed, format!("{a:?}, {b:?}, sum {}", c.iter().sum::<f64>())))
}

fn asep_single(seed: u64) -> Outcome {
    let cfg = WalkConfig::tasep(1)?;
    let counts = (0..10_000)
        .map(|i| {
            let p = simulate_asep(&cfg, &[0], 5.0, child_seed(seed, &format!("selftest/asep/{i}")))?;
            Ok(p.events.len() as f64)
        })
        .collect::<myosim::Result<Vec<_>>>()?;
    Ok(poisson_mean_ok(&counts, 5.0))
}

fn asep_exclusion(seed: u64) -> Outcome {
    let cfg = WalkConfig::tasep(2)?;
    let mut ok = true;
    for i in 0..1000 {
        let p = simulate_asep(&cfg, &[0, 1], 3.0, child_seed(seed, &format!("selftest/excl/{i}")))?;
        ok &= p.events.first().is_none_or(|e| e.particle == 1);
        ok &= p.first_ordering_violation().is_none();
    }
    Ok((ok, "1000 paths from (0, 1)".into()))
}

fn ni_walks(seed: u64) -> Outcome {
    let mut violations = 0;
    let counts = (0..10_000)
        .map(|i| {
            let p = simulate_ni_walks(&[0, 1, 3], 1.0, child_seed(seed, &format!("selftest/ni/{i}")))?;
            violations += usize::from(p.first_ordering_violation().is_some());
            Ok(p.events.len() as f64)
        })
        .collect::<myosim::Result<Vec<_>>>()?;
    let (ok, detail) = poisson_mean_ok(&counts, 3.0);
    Ok((ok && violations == 0, format!("{detail}, {violations} violations")))
}

fn scaling_single(_: u64) -> Outcome {
    let s = scaling_check(&WalkConfig::tasep(1)?, &[0], &[1.0, 10.0, 100.0])?;
    Ok((s.iter().all(|&v| v == 1.0), format!("{s:?}")))
}

fn conditioned_single(seed: u64) -> Outcome {
    let c = sample_conditioned_walk(&WalkConfig::tasep(1)?, 2.0, &[0], 2.0, seed, DEFAULT_MAX_REJECTS)?;
    Ok((c.rejects == 0, format!("{} rejections", c.rejects)))
}

fn myopic_walk_ordering(seed: u64) -> Outcome {
    let cfg = WalkConfig::tasep(3)?;
    let mut ok = true;
    for i in 0..200 {
        let r = algorithm_a(&cfg, 0.5, &[0, 1, 2], 5.0, child_seed(seed, &format!("selftest/mrw/{i}")), DEFAULT_MAX_REJECTS)?;
        ok &= r.path.first_ordering_violation().is_none();
    }
    Ok((ok, "200 myopic walks from (0, 1, 2)".into()))
}

fn eps_multiples(seed: u64) -> Outcome {
    let r = algorithm_c(&trig(3.0)?, 0.5, &[0.1, 1.1], 1e-3, 3.0, seed, 0.1, DEFAULT_MAX_REJECTS)?;
    let grid = r.grid.as_ref().expect("diffusion runs carry grid indices");
    let e = grid.eps_steps.unwrap_or(0);
    let ok = e == 100 && grid.segment_steps.iter().all(|s| s % e == 0) && r.path.first_ordering_violation().is_none();
    Ok((ok, format!("segment steps {:?}", grid.segment_steps)))
}

fn j1_examples(_: u64) -> Outcome {
    let jump = |t: f64| CadlagPath::new(vec![0.0], vec![(t, vec![1.0])], 2.0);
    let a = jump(0.5)?;
    let same = skorohod_j1(&CadlagPair::new(&a, &a, 2.0)?).distance;
    let shifted = skorohod_j1(&CadlagPair::new(&a, &jump(0.6)?, 2.0)?).distance;
    Ok((same == 0.0 && shifted <= 0.1 + 1e-12, format!("identical {same}, shifted {shifted}")))
}

fn ks_constant(_: u64) -> Outcome {
    let r = ks_exponential(&EcdfSample::new(vec![1.0; 50])?)?;
    let ok = r.statistic >= 1.0 - (-1.0_f64).exp() - 1e-12 && r.p_value < 1e-6;
    Ok((ok, format!("D = {:.4}, p = {:.2e}", r.statistic, r.p_value)))
}

fn ecdf_examples(_: u64) -> Outcome {
    let a = EcdfSample::new(vec![0.1, 0.4, 0.9])?;
    let b = EcdfSample::new(vec![2.0, 3.0])?;
    let (same, apart) = (ecdf_distance(&a, &a), ecdf_distance(&a, &b));
    Ok((same == 0.0 && apart == 1.0, format!("{same} / {apart}")))
}

fn rate_examples(_: u64) -> Outcome {
    let zero = rate_estimate(&[0; 100], 0.1)?;
    let small = rate_estimate(&[0; 99], 0.1);
    let ok = zero.rate == 0.0 && zero.ci_low == 0.0 && zero.ci_high > 0.0 && small.is_err();
    Ok((ok, format!("zero counts CI [{}, {}]", zero.ci_low, zero.ci_high)))
}

fn slope_examples(_: u64) -> Outcome {
    let ks = [1.0_f64, 1.5, 2.0, 2.5];
    let ls: Vec<f64> = ks.iter().map(|k| (2.0 * k).exp()).collect();
    let fit = fit_log_rate(&ks, &ls)?;
    let two = fit_log_rate(&ks[..2], &ls[..2]);
    Ok((close(fit.slope, 2.0, 1e-12) && two.is_err(), format!("slope {}", fit.slope)))
}

fn pi_identity(_: u64) -> Outcome {
    let s = trig(1.0)?;
    let expected = (2.5 * PI / 2.0) * (2.0 * PI * 0.1).sin() + 0.5 * (4.0 * PI * 0.1).cos() - 0.5;
    Ok((close(s.slope(0.1), expected, 1e-12), format!("v'(0.1) = {}", s.slope(0.1))))
}

type Check = fn(u64) -> Outcome;

const CHECKS: &[(&str, Check)] = &[
    ("potential_periodicity", periodicity),
    ("potential_critical_points", critical_points),
    ("potential_drift_formula", pi_identity),
    ("potential_table_periodicity", non_periodic_table),
    ("diffusion_free_variance", free_variance),
    ("diffusion_determinism", determinism),
    ("diffusion_box_examples", box_examples),
    ("diffusion_weyl_constant", weyl_constant),
    ("diffusion_exit_determinism", exit_determinism),
    ("diffusion_single_kappa", single_kappa),
    ("diffusion_occupation", occupation),
    ("diffusion_coupled_identical", coupled_identical),
    ("walks_pmf", pmf_values),
    ("walks_km", km_values),
    ("walks_survival", survival_values),
    ("walks_blocked_rate", blocked_rate),
    ("walks_vandermonde", vandermonde_values),
    ("walks_asep_single", asep_single),
    ("walks_asep_exclusion", asep_exclusion),
    ("walks_ni", ni_walks),
    ("walks_scaling_single", scaling_single),
    ("myopic_conditioned_single", conditioned_single),
    ("myopic_walk_ordering", myopic_walk_ordering),
    ("myopic_eps_multiples", eps_multiples),
    ("analysis_j1", j1_examples),
    ("analysis_ks_constant", ks_constant),
    ("analysis_ecdf", ecdf_examples),
    ("analysis_rate", rate_examples),
    ("analysis_slope", slope_examples),
];

/// Runs every check; a check that errors counts as failed.
pub fn run(report: &mut Report, seed: u64) {
    for (name, check) in CHECKS {
        let (passed, detail) = match check(child_seed(seed, &format!("selftest/{name}"))) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        report.criterion(name, passed, detail);
    }
}
