use std::path::Path;

use clap::ValueEnum;
use mfgc::contraction::{
    contraction_report, limit_consistency_scan, log_grid, minimize_v, perron_ratio_diagnostic, r_interval, rho_b,
    variational_v, Variant,
};
use mfgc::model::{estimate_lipschitz, validate_model, LipschitzEstimate};
use mfgc::rates::{horizon_decay_experiment, lyapunov_weights, stable_rate, stationary_gap_experiment};
use mfgc::slowfast::{equivalence_campaign, mfg_slowfast_check, SlowFastMode};
use mfgc::solvers::{solve_finite_horizon, solve_stationary, SolveOptions};
use mfgc::{MfgError, MfgModel};
use serde_json::json;

use crate::config::{pick, Overrides, GRID_POINTS, MAX_ITER, SEED, TOL};
use crate::output::{f, Sink, Status};
use crate::{Command, Experiment, Mode, VariantArg};

type Outcome = Result<(Status, Option<String>), (Status, String)>;

fn mfg(e: MfgError) -> (Status, String) {
    (Status::of_error(&e), e.to_string())
}

fn err(s: String) -> (Status, String) {
    (Status::Error, s)
}

fn load_model(path: &Path) -> Result<MfgModel, (Status, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
    let model = MfgModel::from_json(&text).map_err(mfg)?;
    let v = validate_model(&model);
    if !v.is_valid() {
        let msgs: Vec<String> = v.issues.iter().map(|i| format!("{}: {}", i.kind, i.message)).collect();
        return Err(err(format!("invalid model: {}", msgs.join("; "))));
    }
    Ok(model)
}

fn profile_of(model: &MfgModel, sink: &mut Sink) -> Result<LipschitzEstimate, (Status, String)> {
    let est = estimate_lipschitz(model).map_err(mfg)?;
    sink.put("profile", &est.profile);
    if !est.empirical.is_empty() {
        sink.put("empirical_bounds", &est.empirical);
    }
    Ok(est)
}

fn variant_from(cli: Option<VariantArg>, file: &Option<String>) -> Result<VariantArg, (Status, String)> {
    if let Some(v) = cli {
        return Ok(v);
    }
    match file {
        Some(s) => VariantArg::from_str(s, true).map_err(|_| err(format!("config: unknown variant \"{s}\""))),
        None => Ok(VariantArg::A),
    }
}

fn single(v: VariantArg) -> Variant {
    match v {
        VariantArg::B => Variant::B,
        _ => Variant::A,
    }
}

pub fn run(cmd: Command) -> i32 {
    let common = match &cmd {
        Command::Certify { common, .. }
        | Command::Solve { common, .. }
        | Command::Scan { common, .. }
        | Command::Slowfast { common, .. }
        | Command::Rates { common, .. } => common.clone(),
    };
    let name = match &cmd {
        Command::Certify { .. } => "certify",
        Command::Solve { .. } => "solve",
        Command::Scan { .. } => "scan",
        Command::Slowfast { .. } => "slowfast",
        Command::Rates { .. } => "rates",
    };
    let ov = match Overrides::load(common.config.as_deref()) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let mut sink = match Sink::new(&common.out, name, json!({})) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let outcome = match cmd {
        Command::Certify { model, mode, variant, horizons, .. } => certify(&mut sink, &ov, &model, mode, variant, horizons),
        Command::Solve { model, horizon, tol, max_iter, .. } => solve(&mut sink, &ov, &model, horizon, tol, max_iter),
        Command::Scan { model, horizons, variant, grid_points, ratio_horizon, .. } => {
            scan(&mut sink, &ov, &model, horizons, variant, grid_points, ratio_horizon)
        }
        Command::Slowfast { model, split, mode, horizon, campaign, seed, .. } => {
            slowfast(&mut sink, &ov, model.as_deref(), split, mode, horizon, campaign, seed)
        }
        Command::Rates { model, experiment, t_star, horizon, horizons, t_ref, t_probe, k_list, t_big, tol, max_iter, .. } => {
            let args = RatesArgs { experiment, t_star, horizon, horizons, t_ref, t_probe, k_list, t_big, tol, max_iter };
            rates(&mut sink, &ov, &model, args)
        }
    };
    match outcome {
        Ok((status, msg)) => sink.finish(status, msg),
        Err((status, msg)) => sink.finish(status, Some(msg)),
    }
}

fn certify(
    sink: &mut Sink,
    ov: &Overrides,
    path: &Path,
    mode: Mode,
    variant: Option<VariantArg>,
    horizons: Option<Vec<usize>>,
) -> Outcome {
    let variant = variant_from(variant, &ov.variant)?;
    let horizons = pick(horizons, ov.horizons.clone(), vec![10, 50, 200]);
    sink.config = json!({ "model": path, "mode": format!("{mode:?}").to_lowercase(), "variant": format!("{variant:?}").to_lowercase(), "horizons": horizons });
    let model = load_model(path)?;
    let p = profile_of(&model, sink)?.profile;
    let report = contraction_report(&p, &horizons).map_err(mfg)?;
    let fin = &report.finite_horizon;
    let certified = match (mode, variant) {
        (Mode::Stationary, _) => report.stationary.certified,
        (Mode::Finite, VariantArg::A) => fin.variant_a.certified,
        (Mode::Finite, VariantArg::B) => fin.variant_b.certified,
        (Mode::Finite, VariantArg::Both) => fin.variant_a.certified && fin.variant_b.certified,
    };
    println!("stationary: sum = {} certified = {}", report.stationary.closed_form_sum, report.stationary.certified);
    for v in [&fin.variant_a, &fin.variant_b] {
        println!(
            "finite {:?}: r* = {:?} V(r*) = {:?} regime = {:?} certified = {}",
            v.variant, v.r_star, v.v_star, v.regime, v.certified
        );
    }
    sink.put("certified", certified);
    sink.put("contraction", &report);
    if certified {
        Ok((Status::Ok, None))
    } else {
        Ok((Status::NotCertified, Some(format!("{mode:?} certificate does not hold").to_lowercase())))
    }
}

fn solve(
    sink: &mut Sink,
    ov: &Overrides,
    path: &Path,
    horizon: Option<usize>,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> Outcome {
    let opts = SolveOptions { tol: pick(tol, ov.tol, TOL), max_iter: pick(max_iter, ov.max_iter, MAX_ITER) };
    let horizon = horizon.or(ov.horizon);
    sink.config = json!({ "model": path, "horizon": horizon, "tol": opts.tol, "max_iter": opts.max_iter });
    let model = load_model(path)?;
    let tau0 = model.initial_measure();
    let (trace, label) = match horizon {
        Some(t) => {
            let sol = solve_finite_horizon(&model, &tau0, t, &opts).map_err(mfg)?;
            let mut rows = vec![];
            for (s, slice) in sol.flow.data.iter().enumerate() {
                for (i, m) in slice.iter().enumerate() {
                    rows.extend(m.iter().enumerate().map(|(x, v)| vec![s.to_string(), i.to_string(), x.to_string(), f(*v)]));
                }
            }
            sink.csv("flow.csv", &["t", "population", "state", "mass"], rows).map_err(err)?;
            write_policy(sink, &sol.policy.pi)?;
            (sol.trace, format!("finite horizon T = {t}"))
        }
        None => {
            let sol = solve_stationary(&model, &tau0, &opts).map_err(mfg)?;
            let rows = sol.measure.iter().enumerate().flat_map(|(i, m)| {
                m.iter().enumerate().map(move |(x, v)| vec![i.to_string(), x.to_string(), f(*v)]).collect::<Vec<_>>()
            });
            sink.csv("measure.csv", &["population", "state", "mass"], rows).map_err(err)?;
            write_policy(sink, &sol.policy.pi)?;
            (sol.trace, "stationary".to_string())
        }
    };
    let rows = trace.residuals.iter().enumerate().map(|(k, r)| vec![(k + 1).to_string(), f(*r)]);
    sink.csv("trace.csv", &["iteration", "residual"], rows).map_err(err)?;
    let last = trace.residuals.last().copied();
    println!("{label}: {} iterations, residual {:?}, converged {}", trace.iterations, last, trace.converged);
    sink.put("iterations", trace.iterations);
    sink.put("residual", last);
    sink.put("converged", trace.converged);
    sink.put("tail_rate", trace.rate);
    if trace.converged {
        Ok((Status::Ok, None))
    } else {
        Err((Status::IterationLimit, format!("no convergence in {} iterations; best iterate written", trace.iterations)))
    }
}

fn write_policy(sink: &mut Sink, pi: &[Vec<Vec<Vec<f64>>>]) -> Result<(), (Status, String)> {
    let mut rows = vec![];
    for (t, slice) in pi.iter().enumerate() {
        for (i, pop) in slice.iter().enumerate() {
            for (x, row) in pop.iter().enumerate() {
                for (a, v) in row.iter().enumerate() {
                    rows.push(vec![t.to_string(), i.to_string(), x.to_string(), a.to_string(), f(*v)]);
                }
            }
        }
    }
    sink.csv("policy.csv", &["t", "population", "state", "action", "prob"], rows).map_err(err)
}

fn scan(
    sink: &mut Sink,
    ov: &Overrides,
    path: &Path,
    horizons: Option<Vec<usize>>,
    variant: Option<VariantArg>,
    grid_points: Option<usize>,
    ratio_horizon: Option<usize>,
) -> Outcome {
    let variant = single(variant_from(variant, &ov.variant)?);
    let horizons = pick(horizons, ov.horizons.clone(), vec![3, 5, 10, 20, 50, 100, 200]);
    let points = pick(grid_points, ov.grid_points, GRID_POINTS).max(2);
    sink.config = json!({ "model": path, "horizons": horizons, "variant": variant, "grid_points": points, "ratio_horizon": ratio_horizon });
    let model = load_model(path)?;
    let p = profile_of(&model, sink)?.profile;
    let Some((lo, hi)) = r_interval(&p) else {
        return Err((
            Status::NotCertified,
            format!("empty r-interval: max(Kbar - K) = {} >= 1/beta_max = {}", p.kbar_inf, 1.0 / p.beta_max),
        ));
    };
    let sc = limit_consistency_scan(&p, &horizons, variant).map_err(mfg)?;
    let rows = sc.rows.iter().map(|r| vec![r.horizon.to_string(), f(r.rho_st), f(r.cw_upper), f(r.gap)]);
    sink.csv("rho_st.csv", &["horizon", "rho_st", "cw_upper", "gap"], rows).map_err(err)?;
    let grid = log_grid(lo, hi, points);
    let mut rows = vec![];
    for &r in &grid {
        let va = variational_v(&p, r, Variant::A).map_err(mfg)?;
        let vb = variational_v(&p, r, Variant::B).map_err(mfg)?;
        rows.push(vec![f(r), f(va), f(vb), f(rho_b(&p, r, Variant::A)), f(rho_b(&p, r, Variant::B))]);
    }
    sink.csv("v_grid.csv", &["r", "v_a", "v_b", "rho_b_a", "rho_b_b"], rows).map_err(err)?;
    println!("inf rho(B) = {} at r = {}; monotone {}, majorized {}", sc.inf_rho_b, sc.r_star, sc.monotone, sc.majorized);
    for r in &sc.rows {
        println!("  T = {:>5}  rho(S_T) = {}  gap = {:e}", r.horizon, r.rho_st, r.gap);
    }
    sink.put("limit_scan", &sc);
    sink.put("v_minimum_a", minimize_v(&p, Variant::A));
    sink.put("v_minimum_b", minimize_v(&p, Variant::B));
    if let Some(t) = ratio_horizon {
        let d = perron_ratio_diagnostic(&p, t, variant).map_err(mfg)?;
        let mut rows = vec![];
        for (i, r) in d.ratios.iter().enumerate() {
            rows.extend(r.iter().enumerate().map(|(k, v)| vec![i.to_string(), k.to_string(), f(*v)]));
        }
        sink.csv("ratios.csv", &["population", "k", "ratio"], rows).map_err(err)?;
        println!("ratio tail {} vs 1/z0 {:?}", d.tail_estimate, d.predicted_ratio);
        sink.put("ratio_diagnostic", &d);
    }
    Ok((Status::Ok, None))
}

#[allow(clippy::too_many_arguments)]
fn slowfast(
    sink: &mut Sink,
    ov: &Overrides,
    path: Option<&Path>,
    split: Option<usize>,
    mode: Mode,
    horizon: Option<usize>,
    campaign: Option<usize>,
    seed: Option<u64>,
) -> Outcome {
    if let Some(count) = campaign {
        let seed = pick(seed, ov.seed, SEED);
        sink.config = json!({ "campaign": count, "seed": seed });
        let res = equivalence_campaign(count, seed).map_err(mfg)?;
        println!("{} matrices, {} marginal skipped, {} disagreements", res.count, res.skipped_marginal, res.disagreements);
        sink.put("campaign", &res);
        return if res.disagreements == 0 {
            Ok((Status::Ok, None))
        } else {
            Ok((Status::NotCertified, Some(format!("{} disagreements", res.disagreements))))
        };
    }
    let path = path.ok_or_else(|| err("a model file is required unless --campaign is given".into()))?;
    let split = split.ok_or_else(|| err("--split is required".into()))?;
    let horizon = pick(horizon, ov.horizon, 20);
    let m = match mode {
        Mode::Stationary => SlowFastMode::Stationary,
        Mode::Finite => SlowFastMode::Finite(horizon),
    };
    sink.config = json!({ "model": path, "split": split, "mode": m });
    let model = load_model(path)?;
    let p = profile_of(&model, sink)?.profile;
    let rep = mfg_slowfast_check(&p, split, m).map_err(mfg)?;
    println!(
        "split {split}: certified {} (reference {}: {}), rho per step {:?}, final {:?}",
        rep.certified, rep.reference, rep.reference_certified, rep.rho_b, rep.rho_last
    );
    sink.put("slowfast", &rep);
    if rep.certified {
        Ok((Status::Ok, None))
    } else {
        Ok((Status::NotCertified, Some("slow-fast certificate does not hold".into())))
    }
}

pub struct RatesArgs {
    experiment: Experiment,
    t_star: Option<f64>,
    horizon: Option<usize>,
    horizons: Option<Vec<usize>>,
    t_ref: usize,
    t_probe: usize,
    k_list: Vec<usize>,
    t_big: usize,
    tol: Option<f64>,
    max_iter: Option<usize>,
}

fn rates(sink: &mut Sink, ov: &Overrides, path: &Path, a: RatesArgs) -> Outcome {
    let opts = SolveOptions { tol: pick(a.tol, ov.tol, 1e-12), max_iter: pick(a.max_iter, ov.max_iter, MAX_ITER) };
    let horizon = pick(a.horizon, ov.horizon, 40);
    let horizons = pick(a.horizons, ov.horizons.clone(), vec![10, 14, 18, 22, 26]);
    let want = |e: Experiment| a.experiment == Experiment::All || a.experiment == e;
    sink.config = json!({
        "model": path, "experiment": format!("{:?}", a.experiment).to_lowercase(), "t_star": a.t_star,
        "horizon": horizon, "horizons": horizons, "t_ref": a.t_ref, "t_probe": a.t_probe,
        "k_list": a.k_list, "t_big": a.t_big, "tol": opts.tol, "max_iter": opts.max_iter,
    });
    let model = load_model(path)?;
    let p = profile_of(&model, sink)?.profile;
    let t_o = stable_rate(&p).map_err(mfg)?;
    sink.put("t_o", t_o);
    println!("largest certified rate t_o = {t_o}");
    if want(Experiment::Weights) {
        let t_star = match a.t_star {
            Some(t) => t,
            None => minimize_v(&p, Variant::A).r_star.ok_or_else(|| err("V_A has no minimizer".into()))?,
        };
        let w = lyapunov_weights(&p, horizon, t_star).map_err(mfg)?;
        let n = horizon - 1;
        let rows = w.weights.iter().enumerate().map(|(j, v)| vec![(j / n).to_string(), (j % n).to_string(), f(*v)]);
        sink.csv("weights.csv", &["population", "m", "weight"], rows).map_err(err)?;
        println!("weights at t* = {t_star}: rho(B) = {}, max excess {:e}", w.rho_b, w.max_excess);
        sink.put("weights", &w);
    }
    let tau0 = model.initial_measure();
    if want(Experiment::Decay) {
        let fit = horizon_decay_experiment(&model, &tau0, a.t_probe, &horizons, a.t_ref, &opts).map_err(mfg)?;
        let rows = fit.horizons.iter().zip(&fit.errors).map(|(t, e)| vec![t.to_string(), f(*e)]);
        sink.csv("decay.csv", &["horizon", "error"], rows).map_err(err)?;
        println!("decay slope {:?} vs predicted {}", fit.slope, fit.predicted_slope);
        sink.put("decay", &fit);
    }
    if want(Experiment::Gap) {
        let g = stationary_gap_experiment(&model, &tau0, &a.k_list, a.t_big, &opts).map_err(mfg)?;
        let rows = g.k.iter().zip(&g.g).map(|(k, v)| vec![k.to_string(), f(*v)]);
        sink.csv("gap.csv", &["k", "g"], rows).map_err(err)?;
        println!("stationary gap: {:?}", g.g);
        sink.put("gap", &g);
    }
    Ok((Status::Ok, None))
}
