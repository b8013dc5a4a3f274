//! Command implementations shared by the binary and the test suite.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;

use resetsim_core::analysis::{
    backward_reach_polytopes, continuous_dependence_probe, discretization_bound, hausdorff,
    noise_sensitivity_experiment, polytopes_exclude_after_reset_set, tangential_set, PointCloud,
    Polytope,
};
use resetsim_core::model::CompensatorClass;
use resetsim_core::simulate::{simulate, SimOptions};
use resetsim_core::wellposed::{
    cancellation_analysis, check_structural, check_well_posed, Verdict, WellPosednessReport,
};
use resetsim_core::{Error, Result};

use crate::config::{rank_tol, Loaded, SystemConfig};
use crate::corpus;
use crate::report::{
    fmt_f64, terminal_line, write_csv, write_instants_csv, write_json, write_trajectory_csv,
    RunReport,
};

fn finish(mut rep: RunReport, started: Instant) -> RunReport {
    rep.duration_ms = started.elapsed().as_millis();
    rep
}

fn fmt_vec(v: &DVector<f64>) -> String {
    let coords: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", coords.join(", "))
}

fn require_x0(loaded: &Loaded, over: Option<&[f64]>) -> Result<DVector<f64>> {
    match over {
        Some(v) => {
            if v.len() != loaded.system.dim() {
                return Err(Error::Precondition(format!(
                    "initial state has length {}, state dimension is {}",
                    v.len(),
                    loaded.system.dim()
                )));
            }
            Ok(DVector::from_column_slice(v))
        }
        None => loaded.initial_state.clone().ok_or_else(|| {
            Error::Precondition("no initial state in config; pass --x0".into())
        }),
    }
}

fn describe_verdict(rep: &mut RunReport, wp: &WellPosednessReport) {
    let verdict = match wp.verdict {
        Verdict::WellPosed => "well-posed",
        Verdict::IllPosed => "ill-posed",
    };
    rep.line(format!("verdict: {verdict} (method: {})", wp.method));
    if let Some(w) = &wp.witness {
        rep.line(format!("invariance witness direction: {}", fmt_vec(w)));
    }
    if let Some(table) = &wp.cancellation_table {
        for row in table {
            let l = row.lambda;
            rep.line(format!(
                "mode {:+.6}{:+.6}i: q = {}, r = {}, m = {}, d = {}",
                l.re, l.im, row.q, row.r, row.m, row.d
            ));
        }
    }
    if let Some(s) = wp.s {
        rep.line(format!("cancellation count s = {s}, resetting states n_rho = {}", wp.n_rho));
    }
}

/// Decides well-posedness: structural shortcut when available, otherwise the
/// cancellation count for left series compensators, otherwise the invariance
/// test on the jump-fixed unobservable subspace.
pub fn decide(loaded: &Loaded) -> (WellPosednessReport, Vec<String>) {
    let mut notes = Vec::new();
    let invariance = check_well_posed(&loaded.system);
    if let Some(cl) = &loaded.closed_loop {
        notes.push(format!("compensator class: {}", cl.compensator_class));
        if let Some(structural) = check_structural(cl) {
            return (structural, notes);
        }
        if cl.compensator_class == CompensatorClass::Left && cl.compensator.series.is_some() {
            match cancellation_analysis(cl) {
                Ok(ca) => return (ca, notes),
                Err(e) => notes.push(format!("cancellation analysis unavailable: {e}")),
            }
        }
    }
    (invariance, notes)
}

pub fn cmd_check(cfg: &SystemConfig) -> Result<RunReport> {
    let started = Instant::now();
    let loaded = cfg.load(rank_tol())?;
    let mut rep = RunReport::new("check", loaded.hash);
    rep.line(format!("system: {} (n = {}, n_r = {})", loaded.name, loaded.system.dim(), loaded.system.n_r));

    let (decision, notes) = decide(&loaded);
    for n in notes {
        rep.line(n);
    }
    describe_verdict(&mut rep, &decision);

    // always report the invariance certificate alongside the decision
    let invariance = check_well_posed(&loaded.system);
    rep.line(format!(
        "jump-fixed unobservable subspace dimension: {}",
        invariance.f_ru.dim()
    ));
    if decision.method != invariance.method {
        let v = match invariance.verdict {
            Verdict::WellPosed => "invariant",
            Verdict::IllPosed => "not invariant",
        };
        rep.line(format!("invariance certificate: subspace is {v}"));
    }

    rep.exit_code = match decision.verdict {
        Verdict::WellPosed => 0,
        Verdict::IllPosed => 2,
    };
    Ok(finish(rep, started))
}

pub fn cmd_simulate(
    cfg: &SystemConfig,
    t_max: Option<f64>,
    x0: Option<&[f64]>,
    out: &Path,
) -> Result<RunReport> {
    let started = Instant::now();
    let loaded = cfg.load(rank_tol())?;
    let mut rep = RunReport::new("simulate", loaded.hash);
    let x0 = require_x0(&loaded, x0)?;
    let mut opts = loaded.options.clone();
    if let Some(t) = t_max {
        opts.t_max = t;
    }

    let traj = simulate(&loaded.system, &x0, &opts)?;

    let traj_path = out.join("trajectory.csv");
    write_trajectory_csv(&traj_path, &traj, loaded.system.dim())?;
    let inst_path = out.join("instants.csv");
    write_instants_csv(&inst_path, &traj, opts.time_tol)?;
    rep.outputs.push(traj_path);
    rep.outputs.push(inst_path);

    let shown: Vec<String> = traj
        .reset_instants
        .iter()
        .take(10)
        .map(|t| format!("{t:.6}"))
        .collect();
    let ellipsis = if traj.reset_instants.len() > 10 { ", ..." } else { "" };
    rep.line(format!(
        "reset instants ({} total): [{}{}]",
        traj.reset_instants.len(),
        shown.join(", "),
        ellipsis
    ));
    rep.line(terminal_line(&traj.terminal));
    rep.exit_code = if traj.terminal.is_deadlock() { 3 } else { 0 };
    Ok(finish(rep, started))
}

pub fn cmd_hausdorff(
    cfg: &SystemConfig,
    x0: Option<&[f64]>,
    x0_star: &[f64],
    t_horizon: f64,
    out: &Path,
) -> Result<RunReport> {
    let started = Instant::now();
    let loaded = cfg.load(rank_tol())?;
    let mut rep = RunReport::new("hausdorff", loaded.hash);
    let x0 = require_x0(&loaded, x0)?;
    let xs = require_x0(&loaded, Some(x0_star))?;
    let opts = SimOptions {
        t_max: t_horizon,
        ..loaded.options.clone()
    };

    let a = PointCloud::from_trajectory(&simulate(&loaded.system, &x0, &opts)?, x0.clone());
    let b = PointCloud::from_trajectory(&simulate(&loaded.system, &xs, &opts)?, xs.clone());
    let dh = hausdorff(&a, &b)?;
    let bound = discretization_bound(&loaded.system, &a, opts.output_sample_dt)
        .max(discretization_bound(&loaded.system, &b, opts.output_sample_dt));

    let path = out.join("hausdorff.csv");
    write_csv(
        &path,
        &["t_horizon", "d_h", "discretization_bound"],
        &[vec![fmt_f64(t_horizon), fmt_f64(dh), fmt_f64(bound)]],
    )?;
    rep.outputs.push(path);
    rep.line(format!("d_h = {dh:.9} over [0, {t_horizon}] (sampling bound {bound:.3e})"));
    Ok(finish(rep, started))
}

pub fn cmd_probe(
    cfg: &SystemConfig,
    x0: Option<&[f64]>,
    deltas: &[f64],
    n_dirs: usize,
    t_horizon: f64,
    out: &Path,
) -> Result<RunReport> {
    let started = Instant::now();
    let loaded = cfg.load(rank_tol())?;
    let mut rep = RunReport::new("probe", loaded.hash);
    let x0 = require_x0(&loaded, x0)?;

    let rows = continuous_dependence_probe(
        &loaded.system,
        &x0,
        t_horizon,
        deltas,
        n_dirs,
        &loaded.options,
    )?;

    let mut header: Vec<String> = vec![
        "delta".into(),
        "worst_dh".into(),
        "discretization_bound".into(),
    ];
    for i in 1..=loaded.system.dim() {
        header.push(format!("dir_{i}"));
    }
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![
                fmt_f64(r.delta),
                fmt_f64(r.worst_dh),
                fmt_f64(r.discretization_bound),
            ];
            for v in r.argmax_direction.iter() {
                row.push(fmt_f64(*v));
            }
            row
        })
        .collect();
    let path = out.join("probe.csv");
    write_csv(&path, &header_refs, &csv_rows)?;
    rep.outputs.push(path);

    for r in &rows {
        rep.line(format!(
            "delta = {:.3e}: worst d_h = {:.6e} along {}",
            r.delta,
            r.worst_dh,
            fmt_vec(&r.argmax_direction)
        ));
    }
    if rows.iter().all(|r| r.worst_dh > 1.0) {
        rep.line(
            "continuous dependence failure flagged: worst d_h stays above 1 at every radius",
        );
    }
    Ok(finish(rep, started))
}

pub fn cmd_reach(
    cfg: &SystemConfig,
    n_normals: usize,
    t_horizon: f64,
    out: &Path,
) -> Result<RunReport> {
    let started = Instant::now();
    let loaded = cfg.load(rank_tol())?;
    let mut rep = RunReport::new("reach", loaded.hash);

    let (p, p_hat) = backward_reach_polytopes(&loaded.system, n_normals, t_horizon)?;
    let disjoint = polytopes_exclude_after_reset_set(&loaded.system, &p, &p_hat, 100);

    #[derive(serde::Serialize)]
    struct HalfspaceDoc {
        normal: Vec<f64>,
        offset: f64,
    }
    #[derive(serde::Serialize)]
    struct ReachDoc {
        n_normals: usize,
        t_horizon: f64,
        p: Vec<HalfspaceDoc>,
        p_hat: Vec<HalfspaceDoc>,
        after_reset_set_disjoint: bool,
    }
    let dump = |poly: &Polytope| -> Vec<HalfspaceDoc> {
        poly.halfspaces
            .iter()
            .map(|h| HalfspaceDoc {
                normal: h.normal.iter().copied().collect(),
                offset: h.offset,
            })
            .collect()
    };
    let doc = ReachDoc {
        n_normals,
        t_horizon,
        p: dump(&p),
        p_hat: dump(&p_hat),
        after_reset_set_disjoint: disjoint,
    };
    let path = out.join("reach.json");
    write_json(&path, &doc)?;
    rep.outputs.push(path);

    rep.line(format!(
        "backward-reach enclosure: {} halfspaces total across the two cones",
        p.halfspaces.len() + p_hat.halfspaces.len()
    ));
    rep.line(format!("after-reset set disjoint from enclosure: {disjoint}"));
    Ok(finish(rep, started))
}

pub fn cmd_noise(
    cfg: &SystemConfig,
    magnitudes: &[f64],
    t_horizon: f64,
    out: &Path,
) -> Result<RunReport> {
    let started = Instant::now();
    let loaded = cfg.load(rank_tol())?;
    let mut rep = RunReport::new("noise", loaded.hash);
    let cl = loaded.closed_loop.as_ref().ok_or_else(|| {
        Error::Precondition("noise command needs a structured (closed loop) config".into())
    })?;
    let noise = loaded.noise.as_ref().ok_or_else(|| {
        Error::Precondition("config has no noise exosystem".into())
    })?;
    let x0 = require_x0(&loaded, None)?;
    let opts = SimOptions {
        t_max: t_horizon,
        ..loaded.options.clone()
    };

    // when tangential crossings are possible the safe-set check needs the
    // backward-reach enclosure; build it on demand for third-order loops
    let tset = tangential_set(&cl.system);
    let reach = if tset.is_empty || cl.system.dim() != 3 {
        None
    } else {
        Some(backward_reach_polytopes(&cl.system, 64, 10.0)?)
    };
    let reach_ref = reach.as_ref().map(|(p, q)| (p, q));

    let exp = noise_sensitivity_experiment(cl, noise, &x0, magnitudes, &opts, reach_ref)?;

    let rows: Vec<Vec<String>> = exp
        .magnitudes
        .iter()
        .zip(exp.distances.iter())
        .zip(exp.first_resets.iter())
        .map(|((m, d), fr)| {
            vec![
                fmt_f64(*m),
                fmt_f64(*d),
                fr.map(fmt_f64).unwrap_or_default(),
            ]
        })
        .collect();
    let path = out.join("noise.csv");
    write_csv(&path, &["magnitude", "d_h", "first_reset"], &rows)?;
    rep.outputs.push(path);

    for ((m, d), fr) in exp
        .magnitudes
        .iter()
        .zip(exp.distances.iter())
        .zip(exp.first_resets.iter())
    {
        let fr_text = fr.map(|t| format!("{t:.6}")).unwrap_or_else(|| "none".into());
        rep.line(format!(
            "magnitude {m:.4}: d_h = {d:.6e}, first reset = {fr_text}"
        ));
    }
    let decreasing = exp.distances.windows(2).all(|w| w[1] < w[0]);
    rep.line(format!("d_h strictly decreasing with magnitude: {decreasing}"));
    Ok(finish(rep, started))
}

pub fn cmd_examples_list() -> Result<RunReport> {
    let started = Instant::now();
    let mut rep = RunReport::new("examples list", 0);
    for (name, text) in corpus::FIXTURES {
        let cfg = SystemConfig::from_json(text)?;
        let kind = if cfg.raw.is_some() { "raw" } else { "structured" };
        let desc = cfg.description.unwrap_or_default();
        rep.line(format!("{name} [{kind}]: {desc}"));
    }
    rep.line(format!("{} bundled configs", corpus::FIXTURES.len()));
    Ok(finish(rep, started))
}

pub fn cmd_examples_export(name: &str, out: &Path) -> Result<RunReport> {
    let started = Instant::now();
    let text = corpus::get(name)
        .ok_or_else(|| Error::Precondition(format!("unknown bundled config \"{name}\"")))?;
    let cfg = SystemConfig::from_json(text)?;
    let mut rep = RunReport::new("examples export", cfg.hash());
    std::fs::create_dir_all(out)
        .map_err(|e| Error::Precondition(format!("cannot create {}: {e}", out.display())))?;
    let path: PathBuf = out.join(format!("{name}.json"));
    std::fs::write(&path, text)
        .map_err(|e| Error::Precondition(format!("cannot write {}: {e}", path.display())))?;
    rep.line(format!("wrote {}", path.display()));
    rep.outputs.push(path);
    Ok(finish(rep, started))
}
