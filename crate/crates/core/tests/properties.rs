use num_bigint::BigInt;
use proptest::prelude::*;

use myosim::analysis::{ecdf_distance, ks_exponential, skorohod_j1, CadlagPair, CadlagPath, EcdfSample};
use myosim::diffusion::{box_process, first_exit_weyl, integrate, TrajectoryGrid};
use myosim::myopic::{algorithm_a, algorithm_b, algorithm_c, replay_segment_times, DEFAULT_MAX_REJECTS};
use myosim::potential::PotentialSpec;
use myosim::walks::{
    default_window, km_determinant, mrw_rates, simulate_asep, simulate_ni_walks, survival_h, transition_pmf,
    vandermonde_numerators, vandermonde_rates, WalkConfig,
};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

/// Strictly increasing integer configuration with `n` particles.
fn chamber(n: usize) -> impl Strategy<Value = Vec<i64>> {
    (-5_i64..5, prop::collection::vec(1_i64..4, n - 1)).prop_map(|(start, gaps)| {
        let mut y = vec![start];
        for g in gaps {
            y.push(y.last().unwrap() + g);
        }
        y
    })
}

fn jump_path(max_jumps: usize) -> impl Strategy<Value = CadlagPath> {
    (-2_i32..3, prop::collection::vec((0.01_f64..1.99, -2_i32..3), 0..=max_jumps)).prop_map(|(init, mut jumps)| {
        jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let jumps = jumps.into_iter().map(|(t, v)| (t, vec![f64::from(v)])).collect();
        CadlagPath::new(vec![f64::from(init)], jumps, 2.0).unwrap()
    })
}

fn j1(a: &CadlagPath, b: &CadlagPath) -> (f64, bool) {
    let r = skorohod_j1(&CadlagPair::new(a, b, 2.0).unwrap());
    (r.distance, r.exact)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn potential_tilt_identity(x in -3.0_f64..3.0, b in 0.01_f64..1.0, kappa in 0.1_f64..8.0) {
        let s = PotentialSpec::default_trig(b, kappa).unwrap();
        prop_assert!((s.value(x + 1.0) - s.value(x) + b).abs() < 1e-10);
        prop_assert!((s.value(-0.5) - 1.0 - b).abs() < 1e-10);
    }

    #[test]
    fn potential_drift_is_symbolic_derivative(x in -3.0_f64..3.0, b in 0.01_f64..1.0) {
        use std::f64::consts::PI;
        let s = PotentialSpec::default_trig(b, 1.0).unwrap();
        let d = ((2.0 + b) * PI / 2.0) * (2.0 * PI * x).sin() + b * (4.0 * PI * x).cos() - b;
        prop_assert!((s.slope(x) - d).abs() < 1e-12);
    }

    #[test]
    fn integration_is_deterministic(seed in any::<u64>(), x in -0.4_f64..0.4) {
        let s = PotentialSpec::default_trig(0.5, 3.0).unwrap();
        let a = integrate(&s, &[x, x + 1.0], 1e-3, 0.2, seed).unwrap();
        let b = integrate(&s, &[x, x + 1.0], 1e-3, 0.2, seed).unwrap();
        prop_assert_eq!(a.positions(), b.positions());
    }

    #[test]
    fn box_events_move_one_step(steps in prop::collection::vec(-0.3_f64..0.3, 1..200), x0 in -0.45_f64..0.45) {
        let mut rows = vec![x0];
        for d in steps {
            rows.push(rows.last().unwrap() + d);
        }
        let traj = TrajectoryGrid::new(0.01, 0.0, 1, rows, 0).unwrap();
        let boxes = box_process(&traj);
        let mut cur = boxes.initial[0];
        for e in &boxes.events {
            prop_assert_eq!((e.value - cur).abs(), 1);
            cur = e.value;
        }
    }

    #[test]
    fn weyl_exits_agree_with_their_definitions(
        a in prop::collection::vec(-0.2_f64..0.2, 1..100),
        b in prop::collection::vec(-0.2_f64..0.2, 1..100),
    ) {
        let len = a.len().min(b.len());
        let (mut x, mut y) = (0.1, 1.2);
        let mut rows = vec![x, y];
        for k in 0..len {
            x += a[k];
            y += b[k];
            rows.extend([x, y]);
        }
        let traj = TrajectoryGrid::new(0.01, 0.0, 2, rows, 0).unwrap();
        let e = first_exit_weyl(&traj).unwrap();
        prop_assert_eq!(e.tau_box, box_process(&traj).first_ordering_violation());
        prop_assert_eq!(e.tau_cont, traj.first_ordering_violation().map(|k| traj.time(k)));
        if let Some(t) = e.tau_cont {
            let k = (t / 0.01).round() as usize;
            let r = traj.row(k);
            prop_assert!(r[0] >= r[1]);
        }
    }

    #[test]
    fn pmf_sums_to_one(t in 0.0_f64..10.0, p in 0.0_f64..=1.0) {
        let cfg = WalkConfig::new(1, p).unwrap();
        let w = default_window(t);
        let total: f64 = (-w..=w).map(|d| transition_pmf(&cfg, t, d)).sum();
        prop_assert!((total - 1.0).abs() < 1e-10, "sum {}", total);
    }

    #[test]
    fn km_determinant_bounds(x in chamber(3), shifts in prop::collection::vec(0_i64..4, 3), t in 0.05_f64..3.0, p in 0.0_f64..=1.0) {
        let cfg = WalkConfig::new(3, p).unwrap();
        let y: Vec<i64> = x.iter().zip(&shifts).map(|(a, s)| a + s).collect();
        let det = km_determinant(&cfg, t, &x, &y).unwrap();
        let bound: f64 = x
            .iter()
            .map(|&xi| y.iter().map(|&yj| transition_pmf(&cfg, t, yj - xi)).fold(0.0, f64::max))
            .product();
        prop_assert!(det >= 0.0);
        prop_assert!(det <= bound + 1e-15, "{} > {}", det, bound);
        let near_one = km_determinant(&cfg, 1e-9, &x, &x).unwrap();
        prop_assert!((near_one - 1.0).abs() < 1e-6);
    }

    #[test]
    fn survival_monotone_in_horizon_and_gap(gap in 1_i64..5, l in 0.05_f64..4.0, dl in 0.01_f64..2.0, p in 0.5_f64..=1.0) {
        let cfg = WalkConfig::new(2, p).unwrap();
        let h = |l: f64, y: &[i64]| survival_h(&cfg, l, y, default_window(l)).unwrap();
        let base = h(l, &[0, gap]);
        prop_assert!(h(l + dl, &[0, gap]) <= base + 1e-12);
        prop_assert!(h(l, &[0, gap + 1]) > base);
    }

    #[test]
    fn mrw_rates_respect_exclusion(y in chamber(3), l in 0.05_f64..3.0, p in 0.0_f64..=1.0) {
        let cfg = WalkConfig::new(3, p).unwrap();
        let r = mrw_rates(&cfg, l, &y, default_window(l)).unwrap();
        for i in 0..3 {
            if i + 1 < 3 && y[i] + 1 == y[i + 1] {
                prop_assert_eq!(r.right[i], 0.0);
            }
            if i > 0 && y[i] - 1 == y[i - 1] {
                prop_assert_eq!(r.left[i], 0.0);
            }
        }
    }

    #[test]
    fn mrw_rates_between_envelopes(l in 0.01_f64..30.0) {
        let cfg = WalkConfig::tasep(2).unwrap();
        let r = mrw_rates(&cfg, l, &[0, 2], default_window(l)).unwrap();
        prop_assert!((0.5..=1.0).contains(&r.right[0]), "{:?}", r);
        prop_assert!((1.0 - 1e-3..=1.5).contains(&r.right[1]), "{:?}", r);
    }

    #[test]
    fn vandermonde_rates_sum_to_n(n in 1_usize..7, start in -50_i64..50, gaps in prop::collection::vec(1_i64..9, 6)) {
        let mut y = vec![start];
        for g in &gaps[..n - 1] {
            y.push(y.last().unwrap() + g);
        }
        let (num, den) = vandermonde_numerators(&y);
        prop_assert_eq!(num.iter().sum::<BigInt>(), BigInt::from(n) * den);
        let sum: f64 = vandermonde_rates(&y).unwrap().iter().sum();
        prop_assert!((sum - n as f64).abs() < 1e-9);
    }

    #[test]
    fn walk_samplers_stay_ordered(y in chamber(4), p in 0.0_f64..=1.0, seed in any::<u64>()) {
        let cfg = WalkConfig::new(4, p).unwrap();
        prop_assert!(simulate_asep(&cfg, &y, 5.0, seed).unwrap().first_ordering_violation().is_none());
        prop_assert!(simulate_ni_walks(&y, 5.0, seed).unwrap().first_ordering_violation().is_none());
    }

    #[test]
    fn myopic_walks_stay_ordered_and_replay(y in chamber(3), l in 0.05_f64..2.0, seed in any::<u64>()) {
        let cfg = WalkConfig::tasep(3).unwrap();
        let rec = algorithm_a(&cfg, l, &y, 5.0, seed, DEFAULT_MAX_REJECTS).unwrap();
        prop_assert!(rec.path.first_ordering_violation().is_none());
        prop_assert_eq!(replay_segment_times(rec.foresight, &rec.collision_times), rec.segment_times);
    }

    #[test]
    fn myopic_diffusions_stay_ordered(seed in any::<u64>(), gap in 0.1_f64..1.2, eps_steps in 1_u32..5) {
        let s = PotentialSpec::default_trig(0.5, 1.0).unwrap();
        let x0 = [0.1, 0.1 + gap];
        let b = algorithm_b(&s, 0.2, &x0, 1e-3, 1.0, seed, DEFAULT_MAX_REJECTS).unwrap();
        prop_assert!(b.path.first_ordering_violation().is_none());
        let eps = 0.05 * f64::from(eps_steps);
        let c = algorithm_c(&s, 0.2, &x0, 1e-3, 1.0, seed, eps, DEFAULT_MAX_REJECTS).unwrap();
        prop_assert!(c.path.first_ordering_violation().is_none());
        prop_assert!(c.segment_times.windows(2).all(|w| w[1] - w[0] >= eps - 1e-9));
    }

    #[test]
    fn j1_is_a_metric_below_sup_norm(a in jump_path(4), b in jump_path(4), c in jump_path(4)) {
        let (ab, exact_ab) = j1(&a, &b);
        let (ba, _) = j1(&b, &a);
        let (ac, exact_ac) = j1(&a, &c);
        let (bc, exact_bc) = j1(&b, &c);
        prop_assert!(exact_ab && exact_ac && exact_bc);
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(ac <= ab + bc + 1e-9, "{} > {} + {}", ac, ab, bc);
        prop_assert!(ab <= CadlagPair::new(&a, &b, 2.0).unwrap().sup_distance() + 1e-12);
        prop_assert_eq!(j1(&a, &a).0, 0.0);
    }

    #[test]
    fn ecdf_distance_is_transform_invariant(
        a in prop::collection::vec(-5.0_f64..5.0, 1..60),
        b in prop::collection::vec(-5.0_f64..5.0, 1..60),
    ) {
        let f = |v: &[f64]| EcdfSample::new(v.iter().map(|x| x * x * x + 2.0 * x).collect()).unwrap();
        let d = ecdf_distance(&EcdfSample::new(a.clone()).unwrap(), &EcdfSample::new(b.clone()).unwrap());
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((d - ecdf_distance(&f(&a), &f(&b))).abs() < 1e-12);
    }

    #[test]
    fn ks_normalisation_is_idempotent(v in prop::collection::vec(0.01_f64..50.0, 20..200)) {
        let s = EcdfSample::new(v).unwrap();
        let once = s.scaled(s.mean());
        let twice = once.scaled(once.mean());
        let (k1, k2) = (ks_exponential(&once).unwrap(), ks_exponential(&twice).unwrap());
        prop_assert!((k1.statistic - k2.statistic).abs() < 1e-12);
    }
}
