use std::fs;
use std::path::{Path, PathBuf};

use pwavg::averaging::{analyze, check_initial_section, sample_f1, write_samples_csv, Analysis, AveragedSamples};
use pwavg::flow::{integrate, write_events_csv, write_trajectory_csv};
use pwavg::model::{builtin_proposition1, builtin_proposition1_polar, PiecewiseModel, Prop1Coeffs};
use pwavg::shooting::{epsilon_sweep, write_convergence_csv};
use serde::Serialize;
use serde_json::json;

use crate::args::{BuiltinName, RunConfig};
use crate::output::{
    ensure_dir, load_model, warn, write_csv, write_json, Failure, LoadedModel, EXIT_RUNTIME, EXIT_VALIDATION,
};

/// Fields shared by every JSON report.
#[derive(Serialize)]
struct ReportHeader<'a> {
    command: &'a str,
    model: &'a Path,
    model_sha256: &'a str,
    config: &'a RunConfig,
}

fn header<'a>(command: &'a str, m: &'a LoadedModel, cfg: &'a RunConfig) -> ReportHeader<'a> {
    ReportHeader {
        command,
        model: &m.path,
        model_sha256: &m.sha256,
        config: cfg,
    }
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

pub fn validate(path: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let m = load_model(path)?;
    let model = &m.model;
    let coverage = model
        .probe_coverage(cfg.probes, 10.0, cfg.seed)
        .map_err(|e| Failure::new(EXIT_VALIDATION, "expr.domain", e.to_string()))?;
    if coverage.uncovered > 0 {
        return Err(Failure::new(
            EXIT_VALIDATION,
            "zone.uncovered",
            format!("{} of {} random probes lie in no zone", coverage.uncovered, cfg.probes),
        ));
    }
    if let Some(z) = coverage.hits.iter().position(|&h| h == 0) {
        warn("zone.unvisited", &format!("no random probe landed in zone {z}"));
    }
    if model.manifold.is_some() {
        let section = check_initial_section(model, 11, &cfg.averaging)?;
        if !section.pass {
            warn("manifold.initial_section", section.detail.as_deref().unwrap_or("initial section check failed"));
        }
    }
    println!(
        "{}: valid (dimension {}, {} zones, {} surfaces, period {}{})",
        path.display(),
        model.dimension,
        model.zones.len(),
        model.surfaces.len(),
        model.period,
        model.manifold.as_ref().map(|mf| format!(", manifold k = {}", mf.k)).unwrap_or_default()
    );
    println!("sha256 {}", m.sha256);
    Ok(())
}

pub fn integrate_cmd(path: &Path, z: &[f64], eps: f64, t0: f64, tf: Option<f64>, cfg: &RunConfig) -> Result<(), Failure> {
    let m = load_model(path)?;
    let tf = tf.unwrap_or(t0 + m.model.period);
    let traj = integrate(&m.model, z, eps, (t0, tf), &cfg.integrator)?;
    ensure_dir(&cfg.out_dir)?;
    if cfg.format.csv() {
        write_csv(&out_path(cfg, "trajectory.csv"), |f| write_trajectory_csv(&traj, f).map_err(|e| e.to_string()))?;
        write_csv(&out_path(cfg, "events.csv"), |f| write_events_csv(&traj, f).map_err(|e| e.to_string()))?;
    }
    if cfg.format.json() {
        let report = json!({
            "header": header("integrate", &m, cfg),
            "z": z,
            "eps": eps,
            "t_span": [t0, tf],
            "final_state": traj.final_base(),
            "segments": traj.segment_count(),
            "events": traj.events,
        });
        write_json(&out_path(cfg, "integrate.json"), &report)?;
    }
    println!("integrated {} from t = {t0} to t = {tf} at eps = {eps}", path.display());
    println!("final state {:?}", traj.final_base());
    println!("{} events", traj.events.len());
    for e in &traj.events {
        println!(
            "  t = {:<22} surface {} zone {} -> {} ({})",
            e.t,
            e.surface,
            e.from_zone,
            e.to_zone,
            e.kind.as_str()
        );
    }
    Ok(())
}

fn require_manifold(m: &LoadedModel) -> Result<(), Failure> {
    if m.model.manifold.is_none() {
        return Err(Failure::new(EXIT_VALIDATION, "averaging.no_manifold", "model declares no manifold"));
    }
    Ok(())
}

#[derive(Serialize)]
struct HypothesisSummary {
    pass: bool,
    failures: usize,
}

fn summarize(samples: &AveragedSamples, which: fn(&pwavg::averaging::HypothesisReport) -> bool) -> HypothesisSummary {
    let failures = samples.reports.iter().filter(|r| !which(r)).count();
    HypothesisSummary {
        pass: failures == 0,
        failures,
    }
}

pub fn avgfn(path: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let m = load_model(path)?;
    require_manifold(&m)?;
    let grid = cfg.grid.unwrap_or(50);
    let samples = sample_f1(&m.model, grid, &cfg.averaging)?;
    let section = check_initial_section(&m.model, grid, &cfg.averaging)?;
    if samples.reports.iter().all(|r| r.f1.is_some()) && samples.max_abs() <= cfg.averaging.zero_tol {
        warn("averaging.zero_f1", "f1 vanishes at every grid point");
    }
    if let Some((r, which)) = samples.first_failure() {
        warn(
            "averaging.hypothesis",
            &format!("{which} fails at alpha = {:?}; f1 sampled regardless", r.alpha),
        );
    }
    if !section.pass {
        warn("manifold.initial_section", section.detail.as_deref().unwrap_or("initial section check failed"));
    }
    ensure_dir(&cfg.out_dir)?;
    if cfg.format.csv() {
        write_csv(&out_path(cfg, "f1.csv"), |f| write_samples_csv(&samples, f).map_err(|e| e.to_string()))?;
    }
    let h = summarize(&samples, |r| r.h.pass);
    let h2 = summarize(&samples, |r| r.h2.as_ref().is_some_and(|c| c.pass));
    let h3 = summarize(&samples, |r| r.h3.as_ref().is_some_and(|c| c.pass));
    println!("sampled f1 at {} points of {}", samples.alphas.len(), path.display());
    println!("max |f1| = {:e}", samples.max_abs());
    println!(
        "H {} ({} failures), H2 {} ({}), H3 {} ({}), initial section {}",
        verdict(h.pass),
        h.failures,
        verdict(h2.pass),
        h2.failures,
        verdict(h3.pass),
        h3.failures,
        verdict(section.pass)
    );
    if cfg.format.json() {
        let report = json!({
            "header": header("avgfn", &m, cfg),
            "grid": grid,
            "k": samples.k,
            "all_pass": samples.all_pass() && section.pass,
            "h": h,
            "h2": h2,
            "h3": h3,
            "initial_section": section,
            "reports": samples.reports,
        });
        write_json(&out_path(cfg, "hypotheses.json"), &report)?;
    }
    Ok(())
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

fn print_analysis(a: &Analysis) {
    println!("{} candidate zero(s)", a.zeros.candidates.len());
    for c in &a.zeros.candidates {
        println!(
            "  a = {:?}  det f1' = {:.6}  residual {:.1e}{}",
            c.a,
            c.det,
            c.residual,
            if c.inside { "" } else { "  (outside V)" }
        );
    }
    match (&a.degree, &a.degree_error) {
        (Some(d), _) => println!("Brouwer degree {:+} ({:?})", d.degree, d.method),
        (None, Some(e)) => println!("Brouwer degree unavailable: {e}"),
        _ => {}
    }
    println!("certificate: {}", a.certificate);
}

fn analysis_report<'a>(m: &'a LoadedModel, cfg: &'a RunConfig, a: &'a Analysis) -> serde_json::Value {
    json!({
        "header": header("find", m, cfg),
        "grid": a.samples.resolution,
        "zeros": a.zeros.candidates,
        "degenerate": a.zeros.degenerate,
        "warnings": a.zeros.warnings,
        "degree": a.degree,
        "degree_error": a.degree_error,
        "initial_section": a.initial_section,
        "hypotheses_pass": a.samples.all_pass(),
        "certificate": a.certificate,
    })
}

pub fn find(path: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let m = load_model(path)?;
    require_manifold(&m)?;
    let a = analyze(&m.model, cfg.grid.unwrap_or(40), &cfg.averaging)?;
    for w in &a.zeros.warnings {
        warn("averaging.zeros", w);
    }
    ensure_dir(&cfg.out_dir)?;
    if cfg.format.json() {
        write_json(&out_path(cfg, "candidates.json"), &analysis_report(&m, cfg, &a))?;
    }
    print_analysis(&a);
    Ok(())
}

pub fn verify(path: &Path, z_a: Option<&[f64]>, cfg: &RunConfig) -> Result<(), Failure> {
    let eps_list = cfg.eps_list.clone().unwrap_or_default();
    if eps_list.is_empty() || eps_list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Failure::usage("--eps-list entries must be positive and finite"));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Failure::usage("--eps-list must be strictly decreasing"));
    }
    let m = load_model(path)?;
    let (start, source) = match z_a {
        Some(z) => {
            if z.len() != m.model.dimension {
                return Err(Failure::usage(format!("--z-a needs {} components", m.model.dimension)));
            }
            (z.to_vec(), "given")
        }
        None => {
            require_manifold(&m)?;
            let a = analyze(&m.model, cfg.grid.unwrap_or(40), &cfg.averaging)?;
            let best = a
                .zeros
                .candidates
                .iter()
                .filter(|c| c.inside && c.det.abs() > cfg.averaging.det_tol && c.residual <= cfg.averaging.zero_tol)
                .min_by(|x, y| x.residual.total_cmp(&y.residual));
            match best {
                Some(c) => (c.z_a.clone(), "zero"),
                None => {
                    let man = m.model.manifold.as_ref().unwrap();
                    warn(
                        "verify.no_zero",
                        "no nondegenerate zero of f1 in V; starting from the manifold center",
                    );
                    let z = man
                        .point(&man.center())
                        .map_err(|e| Failure::new(EXIT_VALIDATION, "expr.domain", e.to_string()))?;
                    (z, "center")
                }
            }
        }
    };
    let table = epsilon_sweep(&m.model, &start, &eps_list, &cfg.shooting)?;
    let successes = table.successes().count();
    if successes == 0 {
        let row = &table.rows[0];
        let f = Failure::new(
            EXIT_RUNTIME,
            row.error_code.as_deref().unwrap_or("shooting.newton_failure"),
            format!("no periodic orbit found for any eps: {}", row.error.as_deref().unwrap_or("")),
        );
        return Err(f.with("rows", &table.rows));
    }
    for w in &table.warnings {
        warn("verify.sweep", w);
    }
    if successes < table.rows.len() {
        warn(
            "verify.partial",
            &format!("{} of {} sweep values failed", table.rows.len() - successes, table.rows.len()),
        );
    }
    ensure_dir(&cfg.out_dir)?;
    if cfg.format.csv() {
        write_csv(&out_path(cfg, "convergence.csv"), |f| write_convergence_csv(&table, f).map_err(|e| e.to_string()))?;
    }
    if cfg.format.json() {
        let report = json!({
            "header": header("verify", &m, cfg),
            "z_a": start,
            "z_a_source": source,
            "table": table,
        });
        write_json(&out_path(cfg, "convergence.json"), &report)?;
    }
    println!("continuation from z_a = {start:?} ({source})");
    println!("{:>10}  {:>12}  {:>10}  {:>10}  state", "eps", "|z - z_a|", "residual", "verified");
    for r in &table.rows {
        match &r.orbit {
            Some(o) => println!(
                "{:>10.1e}  {:>12.4e}  {:>10.1e}  {:>10.1e}  {:?}",
                r.eps,
                o.distance_to_za.unwrap_or(f64::NAN),
                o.residual,
                o.verified_residual,
                o.z_eps
            ),
            None => println!("{:>10.1e}  failed: {}", r.eps, r.error.as_deref().unwrap_or("")),
        }
    }
    match (table.fitted_order, table.fitted_constant) {
        (Some(p), Some(c)) => println!("fitted |z_eps - z_a| ~ {c:.4} eps^{p:.4}"),
        _ => println!("fitted order unavailable"),
    }
    Ok(())
}

pub fn parse_coeffs(entries: &[String]) -> Result<Prop1Coeffs, Failure> {
    let numbers: Option<Vec<f64>> = entries.iter().map(|s| s.trim().parse::<f64>().ok()).collect();
    if let Some(values) = numbers {
        return Prop1Coeffs::from_slice(&values)
            .ok_or_else(|| Failure::usage(format!("--coeffs needs 24 numbers, got {}", values.len())));
    }
    let mut coeffs = Prop1Coeffs::pinned();
    for entry in entries {
        let (name, value) = entry
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("--coeffs entry '{entry}' is not name=value")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Failure::usage(format!("--coeffs entry '{entry}' has no numeric value")))?;
        if !coeffs.set(name.trim(), value) {
            return Err(Failure::usage(format!(
                "unknown coefficient '{}'; expected one of {}",
                name.trim(),
                Prop1Coeffs::names().join(", ")
            )));
        }
    }
    Ok(coeffs)
}

pub fn builtin(name: BuiltinName, coeffs: Option<&[String]>, r_range: &[f64], out: Option<&Path>) -> Result<(), Failure> {
    let coeffs = match coeffs {
        Some(c) => parse_coeffs(c)?,
        None => Prop1Coeffs::pinned(),
    };
    let model: PiecewiseModel = match name {
        BuiltinName::Prop1 => builtin_proposition1(&coeffs),
        BuiltinName::Prop1Polar => {
            let (lo, hi) = (r_range[0], r_range[1]);
            if !(lo > 0.0 && hi > lo) {
                return Err(Failure::usage("--r-range needs 0 < lo < hi"));
            }
            builtin_proposition1_polar(&coeffs, (lo, hi))
        }
    };
    let mut text = model.to_json_pretty();
    text.push('\n');
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                ensure_dir(dir)?;
            }
            fs::write(p, text).map_err(|e| Failure::io(p, e))?;
            println!("wrote {}", p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}
