//! Monte Carlo examples checked against independent oracles.

use rand::Rng;
use rand_distr::{Distribution, Exp, Exp1};
use rayon::prelude::*;

use myosim::analysis::{ecdf_distance, exp1_cdf, EcdfSample};
use myosim::diffusion::{
    coupled_pair, exit_sample, integrate, lambda_from_exit_times, metastability_path,
    occupation_outside_ball, weyl_exit_race, ExitOptions,
};
use myosim::myopic::{
    algorithm_a, algorithm_b, algorithm_c, sample_conditioned_diffusion, theorem_main_experiment,
    TheoremMainOptions, DEFAULT_MAX_REJECTS,
};
use myosim::potential::PotentialSpec;
use myosim::stream::{child_seed, rng};
use myosim::walks::{km_determinant, scaling_check, simulate_asep, transition_pmf, WalkConfig};

const SEED: u64 = 7_100_413;

/// Exact mean exit time at κ = 3, b = 1/2 for the default stopping levels, from the
/// scale-function quadrature.
const EXACT_MEAN_EXIT_KAPPA3: f64 = 34.459;

fn trig(kappa: f64) -> PotentialSpec {
    PotentialSpec::default_trig(0.5, kappa).unwrap()
}

fn seed(label: &str, i: usize) -> u64 {
    child_seed(SEED, &format!("{label}/{i}"))
}

fn ecdf(v: Vec<f64>) -> EcdfSample {
    EcdfSample::new(v).unwrap()
}

fn quantile(mut v: Vec<f64>, q: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    v[((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1]
}

#[test]
fn free_brownian_motion_has_unit_variance() {
    let s = trig(0.0);
    let xs: Vec<f64> = (0..10_000)
        .into_par_iter()
        .map(|i| {
            let t = integrate(&s, &[0.0], 1e-3, 1.0, seed("bm", i)).unwrap();
            t.row(t.len() - 1)[0]
        })
        .collect();
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    assert!((0.94..=1.06).contains(&var), "variance {var}");
}

#[test]
fn box_and_continuous_weyl_exits_are_close() {
    let s = trig(3.0);
    let dt = s.default_dt();
    let threshold = (0.5 * 3.0_f64).exp();
    let far = (0..500)
        .into_par_iter()
        .filter(|&i| {
            let e = weyl_exit_race(&s, &[0.0, 1.0], dt, 50.0 * EXACT_MEAN_EXIT_KAPPA3, seed("weyl", i)).unwrap();
            match (e.tau_box, e.tau_cont) {
                (Some(a), Some(b)) => (a - b).abs() > threshold,
                _ => true,
            }
        })
        .count();
    assert!(far as f64 / 500.0 <= 0.1, "{far} of 500 exits differ by more than {threshold}");
}

#[test]
fn exits_go_right_and_look_exponential() {
    let s = trig(3.0);
    let recs = exit_sample(&s, 2000, SEED, &ExitOptions::default()).unwrap();
    let right = recs.iter().filter(|r| r.exited_right).count() as f64 / 2000.0;
    assert!(right >= 0.9, "right fraction {right}");

    let taus: Vec<f64> = recs[..500].iter().map(|r| r.tau).collect();
    let mean = taus.iter().sum::<f64>() / 500.0;
    let ks = myosim::analysis::ks_exponential(&ecdf(taus).scaled(mean)).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn synthetic_exponential_exits_give_slope_two() {
    let kappas = [2.0, 3.0, 4.0];
    let mut r = rng(SEED, "examples/synthetic");
    let taus: Vec<Vec<f64>> = kappas
        .iter()
        .map(|k: &f64| {
            let scale = (2.0 * k).exp();
            (0..1000).map(|_| scale * -(1.0 - r.random::<f64>()).ln()).collect()
        })
        .collect();
    let est = lambda_from_exit_times(&kappas, &taus).unwrap();
    assert!((1.9..=2.1).contains(&est.fit.slope), "slope {}", est.fit.slope);
}

#[test]
fn path_stays_in_the_well_before_exit() {
    let s = trig(3.0);
    let window = (0.5 * 3.0_f64).exp();
    let fractions: Vec<f64> = (0..200)
        .into_par_iter()
        .flat_map_iter(|i| {
            let (_, path) = metastability_path(&s, seed("occupation", i), &ExitOptions::default()).unwrap();
            occupation_outside_ball(&path, 0, 0.0, 0.2, window).unwrap_or_default()
        })
        .collect();
    assert!(fractions.len() > 1000);
    let q95 = quantile(fractions, 0.95);
    assert!(q95 <= 0.2, "95th percentile {q95}");
}

#[test]
fn nearby_starts_couple_quickly() {
    let s = trig(3.0);
    let horizon = (0.5 * 3.0_f64).exp();
    let met = (0..500)
        .into_par_iter()
        .filter(|&i| {
            let c = coupled_pair(&s, 0.05, -0.05, 0.0, 1e-3, horizon, seed("coupling", i)).unwrap();
            c.meet_time.is_some_and(|t| t <= horizon)
        })
        .count();
    assert!(met as f64 / 500.0 >= 0.9, "{met} of 500 met");
}

#[test]
fn symmetric_pmf_matches_simulation() {
    let cfg = WalkConfig::new(1, 0.5).unwrap();
    let runs = 1_000_000;
    let mut r = rng(SEED, "examples/pmf");
    let mut plus = 0_u64;
    let mut minus = 0_u64;
    for _ in 0..runs {
        let mut t: f64 = Exp1.sample(&mut r);
        let mut x = 0_i64;
        while t <= 1.0 {
            x += if r.random::<bool>() { 1 } else { -1 };
            t += Distribution::<f64>::sample(&Exp1, &mut r);
        }
        plus += u64::from(x == 1);
        minus += u64::from(x == -1);
    }
    for (count, dx) in [(plus, 1), (minus, -1)] {
        let mc = count as f64 / runs as f64;
        let exact = transition_pmf(&cfg, 1.0, dx);
        assert!((mc - exact).abs() < 1e-3, "dx={dx}: {mc} vs {exact}");
    }
}

#[test]
fn km_determinant_matches_pair_walk_simulation() {
    let cfg = WalkConfig::tasep(2).unwrap();
    let exact = km_determinant(&cfg, 1.0, &[0, 2], &[1, 3]).unwrap();
    let chunks = 100_usize;
    let per = 100_000_usize;
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng(SEED, &format!("examples/km/{c}"));
            let total_rate = Exp::new(2.0).unwrap();
            let mut hits = 0;
            for _ in 0..per {
                let mut x = [0_i64, 2];
                let mut t = total_rate.sample(&mut r);
                let mut collided = false;
                while t <= 1.0 {
                    x[usize::from(r.random::<bool>())] += 1;
                    if x[0] >= x[1] {
                        collided = true;
                        break;
                    }
                    t += total_rate.sample(&mut r);
                }
                hits += u64::from(!collided && x == [1, 3]);
            }
            hits
        })
        .sum();
    let n = (chunks * per) as f64;
    let p = hits as f64 / n;
    let se = (p * (1.0 - p) / n).sqrt();
    assert!((p - exact).abs() < 3.0 * se, "{p} vs {exact} (se {se})");
}

#[test]
fn survival_scales_like_vandermonde() {
    let cfg = WalkConfig::tasep(2).unwrap();
    let ls = [10.0, 20.0, 40.0, 80.0];
    let limit = 1.0 / std::f64::consts::PI.sqrt();
    for (y, delta) in [([0_i64, 1], 1.0), ([0, 3], 3.0)] {
        let s = scaling_check(&cfg, &y, &ls).unwrap();
        let target = delta * limit;
        let (first, last) = ((s[0] - target).abs(), (s[3] - target).abs());
        assert!(last < first, "{y:?}: {s:?}");
        assert!(last <= 0.25 * target, "{y:?}: {s:?} vs {target}");
    }
}

fn first_jump_and_count(path: &myosim::walks::JumpPath, horizon: f64) -> (f64, f64) {
    (
        path.first_event_time().unwrap_or(f64::INFINITY),
        path.events.iter().filter(|e| e.time <= horizon).count() as f64,
    )
}

#[test]
fn short_foresight_walks_look_like_tasep() {
    let cfg = WalkConfig::tasep(2).unwrap();
    let runs = 5000;
    let mrw: Vec<(f64, f64)> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let r = algorithm_a(&cfg, 0.01, &[0, 2], 5.0, seed("mrw-small", i), DEFAULT_MAX_REJECTS).unwrap();
            first_jump_and_count(&r.path, 5.0)
        })
        .collect();
    let tasep: Vec<(f64, f64)> = (0..runs)
        .into_par_iter()
        .map(|i| first_jump_and_count(&simulate_asep(&cfg, &[0, 2], 5.0, seed("tasep", i)).unwrap(), 5.0))
        .collect();
    let split = |v: &[(f64, f64)]| -> (Vec<f64>, Vec<f64>) { v.iter().copied().unzip() };
    let ((a1, a2), (b1, b2)) = (split(&mrw), split(&tasep));
    let d_first = ecdf_distance(&ecdf(a1), &ecdf(b1));
    let d_count = ecdf_distance(&ecdf(a2), &ecdf(b2));
    assert!(d_first <= 0.05 && d_count <= 0.05, "first jump {d_first}, counts {d_count}");
}

#[test]
fn conditioned_diffusions_separate() {
    let s = trig(2.0);
    for gap in [0.05, 0.2, 1.0] {
        let x0 = [0.1, 0.1 + gap];
        let wide = (0..300)
            .into_par_iter()
            .filter(|&i| {
                let c = sample_conditioned_diffusion(&s, 1.0, &x0, 1e-3, 1.0, seed(&format!("sep/{gap}"), i), DEFAULT_MAX_REJECTS)
                    .unwrap();
                let end = c.path.row(c.path.len() - 1);
                end[1] - end[0] > 0.05
            })
            .count();
        assert!(wide as f64 / 300.0 >= 0.7, "gap {gap}: {wide} of 300 separated");
    }
}

#[test]
fn myopic_diffusion_is_time_homogeneous() {
    let s = trig(2.0);
    let dt: f64 = 1e-3;
    let x0 = [0.1, 1.1];
    let lag = (2.0 / dt).round() as usize;
    let span = (0.5 / dt).round() as usize;
    let pairs: Vec<(f64, f64)> = (0..2000)
        .into_par_iter()
        .map(|i| {
            let long = algorithm_b(&s, 1.0, &x0, dt, 2.5, seed("markov/long", i), DEFAULT_MAX_REJECTS).unwrap();
            let mid = long.path.row(lag).to_vec();
            let later = long.path.row(lag + span)[0] - mid[0];
            let fresh = algorithm_b(&s, 1.0, &mid, dt, 0.5, seed("markov/fresh", i), DEFAULT_MAX_REJECTS).unwrap();
            let restarted = fresh.path.row(span)[0] - mid[0];
            (later, restarted)
        })
        .collect();
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let d = ecdf_distance(&ecdf(a), &ecdf(b));
    assert!(d <= 0.1, "Kolmogorov distance {d}");
}

fn sup_distance(a: &myosim::diffusion::TrajectoryGrid, b: &myosim::diffusion::TrajectoryGrid) -> f64 {
    a.positions().iter().zip(b.positions()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn eps_glued_paths_converge_as_eps_halves() {
    let s = trig(1.0);
    let (dt, t, horizon) = (1e-3, 0.2, 3.0);
    let x0 = [0.1, 0.4];
    // Rounded glue times coincide for about half the pairs, which pins the median at 0.
    let mean_gap = |eps: f64| {
        let d: Vec<f64> = (0..200)
            .into_par_iter()
            .map(|i| {
                let sd = seed("eps-pair", i);
                let a = algorithm_c(&s, t, &x0, dt, horizon, sd, eps, DEFAULT_MAX_REJECTS).unwrap();
                let b = algorithm_c(&s, t, &x0, dt, horizon, sd, eps / 2.0, DEFAULT_MAX_REJECTS).unwrap();
                sup_distance(&a.path, &b.path)
            })
            .collect();
        d.iter().sum::<f64>() / d.len() as f64
    };
    let gaps: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|&e| mean_gap(e)).collect();
    assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
}

#[test]
fn single_particle_first_jump_is_exponential() {
    let s = trig(3.0);
    let r = theorem_main_experiment(&s, 1.0, &[0.1], 500, SEED, &TheoremMainOptions::default()).unwrap();
    let d = r.first_event_exp1_distance.expect("reported for one particle");
    assert!(d <= 0.15, "distance to Exp(1) {d}");
    assert!(exp1_cdf(1.0) > 0.63);
}

#[test]
fn blocked_particle_never_jumps_while_adjacent() {
    let cfg = WalkConfig::tasep(2).unwrap();
    let bad: usize = (0..100_000)
        .into_par_iter()
        .map(|i| {
            let r = algorithm_a(&cfg, 1.0, &[0, 1], 2.0, seed("adjacent", i), DEFAULT_MAX_REJECTS).unwrap();
            let mut y = r.path.initial.clone();
            let mut bad = 0;
            for e in &r.path.events {
                if e.particle == 0 && y[0] + 1 == y[1] {
                    bad += 1;
                }
                y[e.particle] += i64::from(e.delta);
            }
            bad
        })
        .sum();
    assert_eq!(bad, 0);
}
