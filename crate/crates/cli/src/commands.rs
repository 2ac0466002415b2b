//! One function per subcommand. Each returns the report whose criteria decide the
//! exit status.

use std::path::Path;

use serde_json::json;

use myosim::analysis::{ks_exponential, EcdfSample};
use myosim::diffusion::{
    box_process, estimate_lambda, first_exit_weyl, integrate, ExitOptions, TrajectoryGrid,
    DEFAULT_MAX_EXIT_TIME,
};
use myosim::io::{write_box_path, write_jump_path, write_rate_table, write_trajectory};
use myosim::myopic::{
    algorithm_a, algorithm_b, algorithm_c, replay_segment_times, theorem_main_experiment,
    MyopicRunRecord, TheoremMainOptions, DEFAULT_MAX_REJECTS,
};
use myosim::potential::{scan_critical_points, validate_spec, PotentialSpec, SCAN_POINTS};
use myosim::report::Report;
use myosim::walks::{default_window, mrw_rates, required_window, survival_h, vandermonde_rates, Rates};

use crate::config::{missing, positive, ExperimentConfig};
use crate::output::Artifacts;
use crate::{CliError, Format};

pub const METASTABILITY_SLOPE_BAND: (f64, f64) = (1.5, 2.5);
pub const KS_LEVEL: f64 = 0.01;
pub const KS_MIN_KAPPA: f64 = 3.0;
pub const THEOREM_MAIN_TOLERANCE: f64 = 0.15;

/// Refuses potentials that break a modelling assumption.
fn validated(spec: PotentialSpec) -> Result<PotentialSpec, CliError> {
    let v = validate_spec(&spec);
    if !v.passed() {
        let failed: Vec<String> = v
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} ({})", c.name, c.detail))
            .collect();
        return Err(CliError::Config(format!(
            "potential fails validation: {}",
            failed.join("; ")
        )));
    }
    Ok(spec)
}

fn reject_half_integers(x0: &[f64]) -> Result<(), CliError> {
    if let Some(x) = x0.iter().find(|&&x| (x - 0.5).fract() == 0.0) {
        return Err(CliError::Config(format!(
            "numerics.x0 contains the half-integer {x}; box labels are undefined there"
        )));
    }
    Ok(())
}

fn resolve_dt(cfg: &ExperimentConfig, spec: &PotentialSpec) -> Result<f64, CliError> {
    let dt = match cfg.numerics.dt {
        Some(dt) => positive("numerics.dt", dt)?,
        None => spec.default_dt(),
    };
    spec.check_dt(dt).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(dt)
}

fn max_rejects(cfg: &ExperimentConfig) -> u64 {
    cfg.numerics.max_rejects.unwrap_or(DEFAULT_MAX_REJECTS)
}

fn write_traj(art: &mut Artifacts, stem: &str, traj: &TrajectoryGrid) -> Result<(), CliError> {
    let path = art.data_path(stem);
    match art.format() {
        Format::Csv => {
            write_trajectory(&path, traj, Some(art.provenance()))?;
            art.note_written(&path);
        }
        Format::Json => {
            let rows: Vec<&[f64]> = (0..traj.len()).map(|k| traj.row(k)).collect();
            art.write_json(
                &path,
                json!({
                    "dt": traj.dt(),
                    "start_time": traj.start_time(),
                    "n_particles": traj.n_particles(),
                    "positions": rows,
                }),
            )?;
        }
    }
    Ok(())
}

fn write_boxes(art: &mut Artifacts, stem: &str, traj: &TrajectoryGrid) -> Result<(), CliError> {
    let boxes = box_process(traj);
    let path = art.data_path(stem);
    match art.format() {
        Format::Csv => {
            write_box_path(&path, &boxes, Some(art.provenance()))?;
            art.note_written(&path);
        }
        Format::Json => art.write_json(&path, &boxes)?,
    }
    Ok(())
}

fn write_rates(art: &mut Artifacts, stem: &str, rows: &[(String, Rates)]) -> Result<(), CliError> {
    let path = art.data_path(stem);
    match art.format() {
        Format::Csv => {
            write_rate_table(&path, rows, Some(art.provenance()))?;
            art.note_written(&path);
        }
        Format::Json => {
            let doc: Vec<_> = rows.iter().map(|(label, r)| json!({"config": label, "rates": r})).collect();
            art.write_json(&path, doc)?;
        }
    }
    Ok(())
}

pub fn validate_potential(cfg: &ExperimentConfig, base: &Path, art: &mut Artifacts) -> Result<Report, CliError> {
    let spec = cfg.spec(base)?;
    let v = validate_spec(&spec);
    let scan = scan_critical_points(&spec, SCAN_POINTS);
    let mut report = art.new_report("validate-potential");
    report.metric("b", spec.tilt_b())?;
    report.metric("kappa", spec.kappa())?;
    report.metric("sup_curvature", spec.sup_curvature())?;
    report.metric("v_left_barrier", spec.value(-0.5))?;
    report.metric("v_right_barrier", spec.value(0.5))?;
    report.metric("local_minima", &scan.minima)?;
    report.metric("local_maxima", &scan.maxima)?;
    if spec.kappa() > 0.0 {
        report.metric("default_dt", spec.default_dt())?;
    }
    for c in &v.checks {
        report.criterion(c.name, c.passed, c.detail.clone());
    }
    art.write_report(&report, "validation.json")?;
    Ok(report)
}

/// Runs on any constructible potential; the validation outcome is recorded, not enforced.
pub fn simulate_diffusion(cfg: &ExperimentConfig, base: &Path, art: &mut Artifacts) -> Result<Report, CliError> {
    let spec = cfg.spec(base)?;
    let x0 = cfg.x0()?;
    reject_half_integers(&x0)?;
    let horizon = cfg.horizon()?;
    let dt = match cfg.numerics.dt {
        Some(dt) => positive("numerics.dt", dt)?,
        None if spec.kappa() > 0.0 => spec.default_dt(),
        None => return Err(missing("numerics.dt (kappa = 0 has no default step)")),
    };
    spec.check_dt(dt).map_err(|e| CliError::Config(e.to_string()))?;

    art.log(&format!("simulate-diffusion: N={} dt={dt} horizon={horizon}", x0.len()));
    let traj = integrate(&spec, &x0, dt, horizon, art.seed())?;
    write_traj(art, "trajectory", &traj)?;
    write_boxes(art, "boxes", &traj)?;

    let boxes = box_process(&traj);
    let mut report = art.new_report("simulate-diffusion");
    report.metric("potential_validated", validate_spec(&spec).passed())?;
    report.metric("dt", dt)?;
    report.metric("grid_points", traj.len())?;
    report.metric("final_positions", traj.row(traj.len() - 1))?;
    report.metric("box_events", boxes.events.len())?;
    report.metric("first_box_event", boxes.first_event_time())?;
    if x0.len() >= 2 && x0.windows(2).all(|w| w[0] < w[1]) {
        report.metric("weyl_exit", first_exit_weyl(&traj)?)?;
    }
    art.write_report(&report, "report.json")?;
    Ok(report)
}

fn segment_criteria<P>(report: &mut Report, rec: &MyopicRunRecord<P>) {
    let positive_steps = rec.segment_times.windows(2).all(|w| w[1] > w[0]);
    report.criterion(
        "segments_increasing",
        positive_steps,
        format!("{} segment boundaries", rec.segment_times.len()),
    );
}

pub fn simulate_mrw(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Report, CliError> {
    let (walk, y0) = cfg.walk_config()?;
    let l = positive("myopic.L", cfg.foresight_l()?)?;
    let horizon = cfg.horizon()?;
    if !y0.windows(2).all(|w| w[0] < w[1]) {
        return Err(CliError::Config(format!("walk.y0 = {y0:?} is not strictly increasing")));
    }
    art.log(&format!("simulate-mrw: N={} p={} L={l} horizon={horizon}", y0.len(), walk.p_right()));
    let rec = algorithm_a(&walk, l, &y0, horizon, art.seed(), max_rejects(cfg))?;

    let path = art.data_path("mrw_path");
    match art.format() {
        Format::Csv => {
            write_jump_path(&path, &rec.path, Some(art.provenance()))?;
            art.note_written(&path);
        }
        Format::Json => art.write_json(&path, &rec.path)?,
    }

    let mut report = art.new_report("simulate-mrw");
    let file_name = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    report.metric("record", rec.summary(&file_name))?;
    report.metric("jumps", rec.path.events.len())?;
    report.metric("final_state", rec.path.final_state())?;
    let violation = rec.path.first_ordering_violation();
    report.criterion("no_ordering_violation", violation.is_none(), format!("first violation {violation:?}"));
    let replay = replay_segment_times(rec.foresight, &rec.collision_times);
    report.criterion(
        "segment_replay",
        replay == rec.segment_times,
        "segment times recomputed from recorded collision times",
    );
    let conditioned = rec.collision_times.iter().all(|c| c.is_none_or(|t| t > l));
    report.criterion("conditioning_respected", conditioned, format!("all collisions after L = {l}"));
    segment_criteria(&mut report, &rec);
    art.write_report(&report, "report.json")?;
    Ok(report)
}

pub fn simulate_mbm(
    cfg: &ExperimentConfig,
    base: &Path,
    eps_flag: Option<f64>,
    art: &mut Artifacts,
) -> Result<Report, CliError> {
    let spec = validated(cfg.spec(base)?)?;
    let x0 = cfg.x0()?;
    reject_half_integers(&x0)?;
    let t = positive("myopic.T", cfg.myopic()?.t.ok_or_else(|| missing("myopic.T"))?)?;
    let horizon = cfg.horizon()?;
    let dt = resolve_dt(cfg, &spec)?;
    let eps = eps_flag.or(cfg.myopic()?.eps);
    let rec = match eps {
        None => {
            art.log(&format!("simulate-mbm (algorithm B): T={t} dt={dt} horizon={horizon}"));
            algorithm_b(&spec, t, &x0, dt, horizon, art.seed(), max_rejects(cfg))?
        }
        Some(eps) => {
            let eps = positive("eps", eps)?;
            art.log(&format!("simulate-mbm (algorithm C): T={t} eps={eps} dt={dt} horizon={horizon}"));
            algorithm_c(&spec, t, &x0, dt, horizon, art.seed(), eps, max_rejects(cfg))
                .map_err(|e| match e {
                    myosim::Error::InvalidParameter(m) => CliError::Config(m),
                    other => other.into(),
                })?
        }
    };
    write_traj(art, "mbm_trajectory", &rec.path)?;
    write_boxes(art, "mbm_boxes", &rec.path)?;

    let mut report = art.new_report("simulate-mbm");
    let traj_name = art
        .data_path("mbm_trajectory")
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    report.metric("record", rec.summary(&traj_name))?;
    report.metric("eps", eps)?;
    let violation = rec.path.first_ordering_violation();
    report.criterion(
        "no_ordering_violation",
        violation.is_none(),
        format!("first violating grid index {violation:?}"),
    );
    if let Some(grid) = &rec.grid {
        if let Some(e) = grid.eps_steps {
            let ok = grid.segment_steps.iter().all(|s| s % e == 0);
            report.criterion("eps_multiples", ok, format!("segment boundaries in steps of {e}"));
        }
    }
    segment_criteria(&mut report, &rec);
    art.write_report(&report, "report.json")?;
    Ok(report)
}

pub fn metastability(cfg: &ExperimentConfig, base: &Path, art: &mut Artifacts) -> Result<Report, CliError> {
    let pot = cfg.potential()?;
    let kappas = pot.kappas.clone().ok_or_else(|| missing("potential.kappas"))?;
    let first = *kappas.first().ok_or_else(|| missing("potential.kappas"))?;
    let spec = validated(cfg.spec_at(base, first)?)?;
    let mut worst_dt = f64::INFINITY;
    for &k in &kappas {
        let s = validated(cfg.spec_at(base, k)?)?;
        worst_dt = worst_dt.min(s.default_dt());
        if let Some(dt) = cfg.numerics.dt {
            s.check_dt(dt).map_err(|e| CliError::Config(format!("kappa = {k}: {e}")))?;
        }
    }
    let trials = cfg.trials()?;
    let opts = ExitOptions {
        dt: cfg.numerics.dt,
        g_hat: pot.g_hat,
        max_time: cfg.numerics.max_time.unwrap_or(DEFAULT_MAX_EXIT_TIME),
    };
    art.log(&format!("metastability: kappas={kappas:?} trials={trials}"));
    let (est, records) = estimate_lambda(&spec, &kappas, trials, art.seed(), &opts).map_err(|e| match e {
        myosim::Error::InvalidParameter(m) => CliError::Config(m),
        myosim::Error::Undersized { needed, got } => {
            CliError::Config(format!("numerics.trials = {got}, at least {needed} required"))
        }
        other => other.into(),
    })?;

    let exits = art.data_path("exits");
    match art.format() {
        Format::Csv => {
            let mut text = format!(
                "# config_hash={} seed={}\nkappa,tau,exited_right\n",
                art.provenance().config_hash,
                art.seed()
            );
            for r in records.iter().flatten() {
                text.push_str(&format!("{},{},{}\n", r.kappa, r.tau, u8::from(r.exited_right)));
            }
            std::fs::write(&exits, text).map_err(myosim::Error::from)?;
            art.note_written(&exits);
        }
        Format::Json => art.write_json(&exits, &records)?,
    }

    let mut report = art.new_report("metastability");
    report.metric("estimate", &est)?;
    report.metric("dt", opts.dt.unwrap_or(worst_dt))?;
    let (lo, hi) = METASTABILITY_SLOPE_BAND;
    let slope = est.fit.slope;
    report.criterion(
        "slope_band",
        (lo..=hi).contains(&slope),
        format!("log-rate slope {slope:.4} in [{lo}, {hi}]"),
    );
    let mut ks_all = Vec::new();
    for (p, recs) in est.points.iter().zip(&records) {
        let sample = EcdfSample::new(recs.iter().map(|r| r.tau / p.lambda_mean).collect())?;
        let ks = ks_exponential(&sample)?;
        if p.kappa >= KS_MIN_KAPPA {
            report.criterion(
                &format!("ks_exp1_kappa_{}", p.kappa),
                ks.p_value > KS_LEVEL,
                format!("D = {:.4}, p = {:.4} (level {KS_LEVEL})", ks.statistic, ks.p_value),
            );
        }
        ks_all.push(json!({"kappa": p.kappa, "ks": ks}));
    }
    report.metric("ks", ks_all)?;
    let fractions: Vec<(f64, f64)> = est
        .points
        .iter()
        .filter_map(|p| p.right_fraction.map(|f| (p.kappa, f)))
        .collect();
    let lowest = fractions.iter().min_by(|a, b| a.0.total_cmp(&b.0));
    let highest = fractions.iter().max_by(|a, b| a.0.total_cmp(&b.0));
    if let (Some(lo), Some(hi)) = (lowest, highest) {
        report.criterion(
            "right_exit_grows",
            hi.1 >= lo.1,
            format!("right fraction {:.3} at kappa {} vs {:.3} at kappa {}", hi.1, hi.0, lo.1, lo.0),
        );
    }
    art.write_report(&report, "metastability.json")?;
    Ok(report)
}

fn asep_limit(y: &[i64]) -> Rates {
    let n = y.len();
    let right = (0..n)
        .map(|i| if i + 1 < n && y[i] + 1 == y[i + 1] { 0.0 } else { 1.0 })
        .collect();
    Rates {
        right,
        left: vec![0.0; n],
    }
}

fn window_for(cfg: &ExperimentConfig, l: f64) -> Result<i64, CliError> {
    match cfg.numerics.window {
        None => Ok(default_window(l)),
        Some(w) if w >= required_window(l) => Ok(w),
        Some(w) => Err(CliError::Config(format!(
            "numerics.window = {w} is below {} required at L = {l}",
            required_window(l)
        ))),
    }
}

fn foresight_list(cfg: &ExperimentConfig) -> Result<Vec<f64>, CliError> {
    let m = cfg.myopic()?;
    let mut ls = match (&m.l_list, m.l) {
        (Some(list), _) => list.clone(),
        (None, Some(l)) => vec![l],
        (None, None) => return Err(missing("myopic.L_list or myopic.L")),
    };
    for &l in &ls {
        positive("myopic.L", l)?;
    }
    ls.sort_by(f64::total_cmp);
    Ok(ls)
}

fn monotone(xs: &[f64]) -> bool {
    const SLACK: f64 = 1e-12;
    xs.windows(2).all(|w| w[1] >= w[0] - SLACK) || xs.windows(2).all(|w| w[1] <= w[0] + SLACK)
}

/// Exact rates at each `L`, bracketed by the TASEP (`L → 0`) and Vandermonde (`L → ∞`) limits.
pub fn interpolate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Report, CliError> {
    let (walk, y0) = cfg.walk_config()?;
    if walk.p_right() != 1.0 {
        return Err(CliError::Config(
            "interpolate compares against the totally asymmetric limits; walk.p must be 1".into(),
        ));
    }
    if !y0.windows(2).all(|w| w[0] < w[1]) {
        return Err(CliError::Config(format!("walk.y0 = {y0:?} is not strictly increasing")));
    }
    let ls = foresight_list(cfg)?;
    art.log(&format!("interpolate: y0={y0:?} L={ls:?}"));
    let mut rows = vec![("asep".to_string(), asep_limit(&y0))];
    for &l in &ls {
        rows.push((format!("L={l}"), mrw_rates(&walk, l, &y0, window_for(cfg, l)?)?));
    }
    let n = y0.len();
    rows.push((
        "vandermonde".to_string(),
        Rates {
            right: vandermonde_rates(&y0)?,
            left: vec![0.0; n],
        },
    ));
    write_rates(art, "rate_table", &rows)?;

    let mut report = art.new_report("interpolate");
    report.metric("y0", &y0)?;
    report.metric("L", &ls)?;
    report.metric(
        "rows",
        rows.iter().map(|(label, r)| json!({"config": label, "right": r.right})).collect::<Vec<_>>(),
    )?;
    for i in 0..n {
        let series: Vec<f64> = rows.iter().map(|(_, r)| r.right[i]).collect();
        report.criterion(
            &format!("monotone_passage_particle_{}", i + 1),
            monotone(&series),
            format!("right rates {series:?}"),
        );
    }
    art.write_report(&report, "interpolate.json")?;
    Ok(report)
}

pub fn theorem_main(cfg: &ExperimentConfig, base: &Path, art: &mut Artifacts) -> Result<Report, CliError> {
    let spec = validated(cfg.spec(base)?)?;
    let x0 = cfg.x0()?;
    reject_half_integers(&x0)?;
    let l = positive("myopic.L", cfg.foresight_l()?)?;
    let trials = cfg.trials()?;
    let dt = resolve_dt(cfg, &spec)?;
    let tol = cfg.numerics.tolerance.unwrap_or(THEOREM_MAIN_TOLERANCE);
    let opts = TheoremMainOptions {
        lambda_hat: None,
        lambda_trials: cfg.numerics.lambda_trials.unwrap_or(TheoremMainOptions::default().lambda_trials),
        dt: Some(dt),
        max_rejects: max_rejects(cfg),
    };
    art.log(&format!("theorem-main: x0={x0:?} L={l} kappa={} trials={trials}", spec.kappa()));
    let res = theorem_main_experiment(&spec, l, &x0, trials, art.seed(), &opts).map_err(|e| match e {
        myosim::Error::InvalidParameter(m) => CliError::Config(m),
        other => other.into(),
    })?;

    let mut report = art.new_report("theorem-main");
    report.metric("result", &res)?;
    report.criterion(
        "first_event_distance",
        res.first_event_distance <= tol,
        format!("Kolmogorov distance {:.4} (tol {tol})", res.first_event_distance),
    );
    if let Some(d) = res.first_event_exp1_distance {
        report.criterion("first_event_exp1", d <= tol, format!("distance to Exp(1) {d:.4} (tol {tol})"));
    }
    report.criterion(
        "no_ordering_violation",
        res.ordering_violations == 0,
        format!("{} violating paths", res.ordering_violations),
    );
    art.write_report(&report, "theorem_main.json")?;
    Ok(report)
}

/// Exact survival probabilities and generator rates at `walk.y0`.
pub fn rates(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Report, CliError> {
    let (walk, y0) = cfg.walk_config()?;
    if !y0.windows(2).all(|w| w[0] < w[1]) {
        return Err(CliError::Config(format!("walk.y0 = {y0:?} is not strictly increasing")));
    }
    let ls = foresight_list(cfg)?;
    art.log(&format!("rates: y0={y0:?} L={ls:?}"));
    let mut rows = Vec::new();
    let mut survival = Vec::new();
    for &l in &ls {
        let w = window_for(cfg, l)?;
        survival.push(json!({"L": l, "window": w, "h": survival_h(&walk, l, &y0, w)?}));
        rows.push((format!("L={l}"), mrw_rates(&walk, l, &y0, w)?));
    }
    write_rates(art, "rates", &rows)?;

    let mut report = art.new_report("rates");
    report.metric("y0", &y0)?;
    report.metric("p", walk.p_right())?;
    report.metric("survival", survival)?;
    report.metric("rates", rows.iter().map(|(l, r)| json!({"config": l, "rates": r})).collect::<Vec<_>>())?;
    if walk.p_right() == 1.0 {
        report.metric("vandermonde_rates", vandermonde_rates(&y0)?)?;
    }
    art.write_report(&report, "rates.json")?;
    Ok(report)
}
