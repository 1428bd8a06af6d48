//! `onephase`: configuration-driven runner for the one-phase free boundary
//! toolkit.
//!
//! Subcommands: `solve` (minimize + audits), `pipeline` (solve -> weiss ->
//! strata -> packing cover -> refinement -> consolidated report), `beta`
//! (beta number of a measure CSV), `reifenberg` (packing check of a ball
//! family CSV).
//!
//! Exit codes: 0 pass, 1 verification failure, 2 input error, 3 IO error,
//! 4 config invariant violation.

mod config;

use clap::{Parser, Subcommand};
use config::{CoronaConfig, RunConfig};
use onephase::corona::{
    self, key_packing_cover, refine_cover, Cover, CoverReport, GridOracle, ProbeCache,
    RefineReport,
};
use onephase::field::{free_boundary_points, QField, ScalarField};
use onephase::jones;
use onephase::solver::{self, minimize, SolveReport};
use onephase::strata::{self, StratumRow};
use onephase::weiss::{self, Label};
use onephase::{geom, io as ioy};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "onephase", version, about = "One-phase free boundary toolkit")]
struct Cli {
    /// Worker threads (default: ONEPHASE_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the configured problem; write the field and a solve report.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline with a consolidated verification report.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Re-verify a previously written pipeline output instead of rerunning.
        #[arg(long)]
        verify_only: bool,
    },
    /// Beta number of a measure CSV; prints JSON to stdout.
    Beta {
        #[arg(long)]
        measure: PathBuf,
        /// Ball center as comma-separated coordinates, e.g. "1.0,0.333".
        #[arg(long)]
        center: String,
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        k: usize,
    },
    /// Discrete Reifenberg packing check of a balls CSV; prints JSON.
    Reifenberg {
        #[arg(long)]
        balls: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn input(msg: impl Into<String>) -> Self {
        CliError { code: 2, message: msg.into() }
    }
    fn io(msg: impl Into<String>) -> Self {
        CliError { code: 3, message: msg.into() }
    }
    fn verification(msg: impl Into<String>) -> Self {
        CliError { code: 1, message: msg.into() }
    }
}

impl From<onephase::Error> for CliError {
    fn from(e: onephase::Error) -> Self {
        use onephase::Error as E;
        let code = match &e {
            E::Io(_) => 3,
            E::Parse(_) | E::OverlappingBalls { .. } | E::EmptyInput { .. } | E::NoMass { .. } => 2,
            E::Divergence { .. }
            | E::AlternationStalled { .. }
            | E::DropAccountingViolated { .. }
            | E::PackingCondition { .. } => 1,
            _ => 4,
        };
        CliError { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("ONEPHASE_THREADS").ok().and_then(|s| s.parse().ok())
    });
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Solve { config, out } => cmd_solve(&config, &out),
        Command::Pipeline { config, out, verify_only } => {
            if verify_only {
                cmd_verify(&config, &out)
            } else {
                cmd_pipeline(&config, &out)
            }
        }
        Command::Beta { measure, center, radius, k } => cmd_beta(&measure, &center, radius, k),
        Command::Reifenberg { balls, k, delta, levels } => {
            cmd_reifenberg(&balls, k, delta, levels)
        }
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::input(format!("{}: not found", path.display()))
        } else {
            CliError::io(format!("{}: {e}", path.display()))
        }
    })
}

fn load_config(path: &Path) -> Result<(RunConfig, String), CliError> {
    let text = read_input(path)?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let hash = format!("{:x}", Sha256::digest(text.as_bytes()));
    Ok((cfg, hash))
}

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", out.display())))?;
    // probe writability up front so failures map to the IO exit code
    let probe = out.join(".write_probe");
    std::fs::write(&probe, b"ok")
        .map_err(|e| CliError::io(format!("cannot write to {}: {e}", out.display())))?;
    let _ = std::fs::remove_file(&probe);
    Ok(())
}

#[derive(Serialize)]
struct SolveSummary {
    config_hash: String,
    final_energy: f64,
    sweeps_used: usize,
    energy_monotone: bool,
    harmonic_residual: f64,
    residual_tol: Option<f64>,
    residual_ok: bool,
    nondegeneracy: Option<(f64, f64)>,
    max_gradient: f64,
    lambda_bound: f64,
    free_boundary_points: usize,
}

fn energy_monotone(report: &SolveReport) -> bool {
    report
        .energy_history
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-12)
}

fn solve_from_config(
    cfg: &RunConfig,
) -> Result<(ScalarField, QField, SolveReport), CliError> {
    let spec = cfg.grid.build()?;
    let q = cfg.q.build(&spec)?;
    let (problem, seed) = cfg.problem.build(&spec, &q);
    let (u, report) = minimize(&problem, seed)?;
    Ok((u, q, report))
}

fn cmd_solve(config_path: &Path, out: &Path) -> Result<(), CliError> {
    let (cfg, hash) = load_config(config_path)?;
    ensure_out_dir(out)?;
    let (u, _q, report) = solve_from_config(&cfg)?;
    let monotone = energy_monotone(&report);
    let residual_tol = cfg.problem.audit_residual_tol;
    let residual_ok = residual_tol.map(|t| report.harmonic_residual <= t).unwrap_or(true);
    let summary = SolveSummary {
        config_hash: hash,
        final_energy: report.final_energy,
        sweeps_used: report.sweeps_used,
        energy_monotone: monotone,
        harmonic_residual: report.harmonic_residual,
        residual_tol,
        residual_ok,
        nondegeneracy: report.nondegeneracy,
        max_gradient: solver::max_gradient(&u),
        lambda_bound: cfg.q.build(&u.spec)?.lambda_bound,
        free_boundary_points: free_boundary_points(&u).len(),
    };
    ioy::write_field(&out.join("field"), &u)?;
    ioy::write_json(&out.join("solve_report.json"), &summary)?;
    ioy::write_energy_history(&out.join("energy_history.csv"), &report.energy_history)?;
    if !monotone {
        return Err(CliError::verification("energy history is not monotone"));
    }
    if !residual_ok {
        return Err(CliError::verification(format!(
            "harmonic residual {} exceeds tolerance {}",
            report.harmonic_residual,
            residual_tol.unwrap()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct WeissSummary {
    points_profiled: usize,
    defect_violations: usize,
    regular: usize,
    singular: usize,
    unresolved: usize,
    eps0: f64,
    c0: f64,
    margin_coeff: f64,
}

#[derive(Serialize)]
struct StrataSummary {
    scanned: usize,
    members: usize,
    k: usize,
    eps: f64,
    r_requested: f64,
    r_effective: f64,
    scale_factor: f64,
    plane_samples: usize,
}

#[derive(Serialize)]
struct RefineSummary {
    generations: usize,
    generation_bound: usize,
    final_count: usize,
    stop_scale: f64,
    packing_r_k: f64,
    covering_ok: bool,
    budgets_ok: bool,
    radius_control_ok: bool,
}

#[derive(Serialize)]
struct PipelineReport {
    config_hash: String,
    solve: SolveSummary,
    weiss: WeissSummary,
    strata: StrataSummary,
    cover_balls: usize,
    cover: CoverReport,
    refine: RefineSummary,
    verified: bool,
}

/// Free boundary samples sorted by distance to `center` (lexicographic
/// tie-break), thinned to at most `max_points` by striding.
fn select_points(fb: &[Vec<f64>], center: &[f64], max_points: usize) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = fb.to_vec();
    pts.sort_by(|a, b| {
        let da = geom::dist_sq(a, center);
        let db = geom::dist_sq(b, center);
        da.partial_cmp(&db).unwrap().then_with(|| geom::lex_cmp(a, b))
    });
    if pts.len() <= max_points {
        return pts;
    }
    let stride = pts.len() as f64 / max_points as f64;
    (0..max_points)
        .map(|i| pts[(i as f64 * stride) as usize].clone())
        .collect()
}

fn cmd_pipeline(config_path: &Path, out: &Path) -> Result<(), CliError> {
    let (cfg, hash) = load_config(config_path)?;
    let weiss_cfg = cfg
        .weiss
        .clone()
        .ok_or_else(|| CliError { code: 4, message: "pipeline needs a weiss section".into() })?;
    let strata_cfg = cfg
        .strata
        .clone()
        .ok_or_else(|| CliError { code: 4, message: "pipeline needs a strata section".into() })?;
    let corona_cfg: CoronaConfig = cfg
        .tree
        .clone()
        .ok_or_else(|| CliError { code: 4, message: "pipeline needs a tree section".into() })?;
    corona_cfg.tree.validate()?;
    ensure_out_dir(out)?;

    // solve
    let (u, q, report) = solve_from_config(&cfg)?;
    let monotone = energy_monotone(&report);
    let residual_tol = cfg.problem.audit_residual_tol;
    let residual_ok = residual_tol.map(|t| report.harmonic_residual <= t).unwrap_or(true);
    let solve_summary = SolveSummary {
        config_hash: hash.clone(),
        final_energy: report.final_energy,
        sweeps_used: report.sweeps_used,
        energy_monotone: monotone,
        harmonic_residual: report.harmonic_residual,
        residual_tol,
        residual_ok,
        nondegeneracy: report.nondegeneracy,
        max_gradient: solver::max_gradient(&u),
        lambda_bound: q.lambda_bound,
        free_boundary_points: 0, // filled below
    };
    ioy::write_field(&out.join("field"), &u)?;
    ioy::write_energy_history(&out.join("energy_history.csv"), &report.energy_history)?;

    let fb = free_boundary_points(&u);
    let mut solve_summary = solve_summary;
    solve_summary.free_boundary_points = fb.len();
    if fb.is_empty() {
        return Err(CliError::verification(
            "pipeline needs a nonempty free boundary (check the boundary data)",
        ));
    }
    let h = u.spec.h;
    let domain_center = corona_cfg.domain_center.clone();

    // weiss profiles + classification at centers nearest the domain center
    let r_max = *weiss_cfg.radii.last().unwrap_or(&0.0);
    let weiss_centers: Vec<Vec<f64>> = select_points(&fb, &domain_center, weiss_cfg.max_points)
        .into_iter()
        .filter(|y| u.spec.contains_ball_inset(y, r_max + h, h))
        .collect();
    let mut classifications = Vec::new();
    let mut defect_violations = 0usize;
    let (mut n_reg, mut n_sing, mut n_unres) = (0usize, 0usize, 0usize);
    for (i, y) in weiss_centers.iter().enumerate() {
        let profile = weiss::weiss_profile(
            &u,
            &q,
            y,
            &weiss_cfg.radii,
            weiss_cfg.c0,
            weiss_cfg.tol_mono_coeff,
        )?;
        defect_violations += profile.violations.len();
        ioy::write_weiss_profile(&out.join(format!("weiss_profile_{i:03}.csv")), &profile)?;
        let class = weiss::classify_point(
            &u,
            &q,
            y,
            &weiss_cfg.radii,
            weiss_cfg.eps0,
            weiss_cfg.c0,
            weiss_cfg.margin_coeff,
        )?;
        match class.label {
            Label::Regular => n_reg += 1,
            Label::Singular => n_sing += 1,
            Label::Unresolved => n_unres += 1,
        }
        classifications.push(serde_json::json!({
            "point": y,
            "label": format!("{:?}", class.label),
            "w0_estimate": class.w0_estimate,
            "threshold": class.threshold,
            "margin": class.margin,
        }));
    }
    ioy::write_json(&out.join("classifications.json"), &classifications)?;
    let weiss_summary = WeissSummary {
        points_profiled: weiss_centers.len(),
        defect_violations,
        regular: n_reg,
        singular: n_sing,
        unresolved: n_unres,
        eps0: weiss_cfg.eps0,
        c0: weiss_cfg.c0,
        margin_coeff: weiss_cfg.margin_coeff,
    };

    // stratum scan over free boundary samples in the corona domain
    let in_domain: Vec<Vec<f64>> = fb
        .iter()
        .filter(|p| geom::dist(p, &domain_center) < corona_cfg.domain_radius)
        .cloned()
        .collect();
    let scan_points = select_points(&in_domain, &domain_center, strata_cfg.max_points);
    let r_eff = strata_cfg
        .r
        .max(strata::MIN_RADIUS_SPACINGS * h)
        .max(corona_cfg.tree.eta * corona_cfg.tree.stop_scale);
    let rows: Vec<StratumRow> = strata::stratum_scan(
        &u,
        &scan_points,
        strata_cfg.k,
        strata_cfg.eps,
        r_eff,
        strata_cfg.scale_factor,
        strata_cfg.plane_samples,
    )
    .into_iter()
    .collect::<onephase::Result<_>>()?;
    write_stratum_csv(&out.join("stratum_scan.csv"), &rows)?;
    let members: Vec<Vec<f64>> = rows
        .iter()
        .filter(|r| r.member)
        .map(|r| r.point.clone())
        .collect();
    let strata_summary = StrataSummary {
        scanned: rows.len(),
        members: members.len(),
        k: strata_cfg.k,
        eps: strata_cfg.eps,
        r_requested: strata_cfg.r,
        r_effective: r_eff,
        scale_factor: strata_cfg.scale_factor,
        plane_samples: strata_cfg.plane_samples,
    };
    let member_measure = jones::DiscreteMeasure::counting(members.clone());
    if let Ok(mu) = &member_measure {
        ioy::write_measure(&out.join("stratum_members.csv"), mu)?;
    }

    // packing cover + refinement over the stratum members
    let oracle = GridOracle { u: &u, q: &q };
    let cache = ProbeCache::new(&oracle, &members);
    let all_idx: Vec<usize> = (0..members.len()).collect();
    let (cover, cover_report) = key_packing_cover(
        &cache,
        &all_idx,
        &domain_center,
        corona_cfg.domain_radius,
        &corona_cfg.tree,
    )?;
    ioy::write_json(&out.join("cover.json"), &cover)?;
    ioy::write_json(&out.join("cover_report.json"), &cover_report)?;

    let refine_scale = corona_cfg.refine_stop_scale.unwrap_or(corona_cfg.tree.stop_scale);
    let refine: RefineReport = refine_cover(
        &cache,
        &all_idx,
        &domain_center,
        corona_cfg.domain_radius,
        &corona_cfg.tree,
        refine_scale,
        u.spec.dim(),
    )?;
    ioy::write_json(&out.join("refine_report.json"), &refine)?;
    let refine_summary = RefineSummary {
        generations: refine.generations.len(),
        generation_bound: refine.generation_bound,
        final_count: refine.final_count,
        stop_scale: refine.stop_scale,
        packing_r_k: refine.packing_r_k,
        covering_ok: refine.covering_ok,
        budgets_ok: refine.generations.iter().all(|g| g.budget_ok),
        radius_control_ok: refine.generations.iter().all(|g| g.radius_control_ok),
    };

    let verified = monotone
        && residual_ok
        && defect_violations == 0
        && cover_report.all_ok()
        && refine_summary.covering_ok
        && refine_summary.budgets_ok
        && refine_summary.radius_control_ok;
    let pipeline = PipelineReport {
        config_hash: hash,
        solve: solve_summary,
        weiss: weiss_summary,
        strata: strata_summary,
        cover_balls: cover.balls.len(),
        cover: cover_report,
        refine: refine_summary,
        verified,
    };
    ioy::write_json(&out.join("pipeline_report.json"), &pipeline)?;
    if !verified {
        return Err(CliError::verification(
            "pipeline verification failed (see pipeline_report.json)",
        ));
    }
    Ok(())
}

fn write_stratum_csv(path: &Path, rows: &[StratumRow]) -> Result<(), CliError> {
    let mut out = String::new();
    let dim = rows.first().map(|r| r.point.len()).unwrap_or(0);
    for d in 0..dim {
        out.push_str(&format!("x{d},"));
    }
    out.push_str("k,eps,r,member,best_scale,distance\n");
    for r in rows {
        for c in &r.point {
            out.push_str(&format!("{c:?},"));
        }
        out.push_str(&format!(
            "{},{:?},{:?},{},{:?},{:?}\n",
            r.k, r.eps, r.r, r.member, r.best_scale, r.distance
        ));
    }
    std::fs::write(path, out).map_err(|e| CliError::io(e.to_string()))
}

/// Re-verify a previously written pipeline output: reload the field, the
/// stratum members, and the cover, then recheck covering/packing/drop.
fn cmd_verify(config_path: &Path, out: &Path) -> Result<(), CliError> {
    let (cfg, _hash) = load_config(config_path)?;
    let u = ioy::read_field(&out.join("field"))?;
    let q = cfg.q.build(&u.spec)?;
    let members = ioy::read_measure(&out.join("stratum_members.csv"))?.points;
    let cover_text = read_input(&out.join("cover.json"))?;
    let cover: Cover = serde_json::from_str(&cover_text)
        .map_err(|e| CliError::input(format!("cover.json: {e}")))?;

    let oracle = GridOracle { u: &u, q: &q };
    let cache = ProbeCache::new(&oracle, &members);
    let all_idx: Vec<usize> = (0..members.len()).collect();
    let (covering_ok, uncovered) = corona::verify_covering(&members, &all_idx, &cover.balls);
    let (packing_sum, packing_ok) =
        corona::verify_packing(&cover.balls, cover.config.k, cover.config.c_packing_budget);
    let (drop_ok, certs) =
        corona::verify_drops(&cache, &all_idx, &cover.balls, &cover.config, cover.e_density)?;
    let report = serde_json::json!({
        "covering_ok": covering_ok,
        "uncovered_count": uncovered,
        "packing_sum": packing_sum,
        "packing_ok": packing_ok,
        "drop_ok": drop_ok,
        "drop_certificates": certs,
    });
    ioy::write_json(&out.join("verify_report.json"), &report)?;
    if !(covering_ok && packing_ok && drop_ok) {
        return Err(CliError::verification("cover re-verification failed"));
    }
    Ok(())
}

fn parse_center(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|c| c.trim().parse::<f64>())
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| CliError::input(format!("bad center '{s}': {e}")))
}

fn cmd_beta(measure: &Path, center: &str, radius: f64, k: usize) -> Result<(), CliError> {
    // surface missing-file as an input error before parsing
    let _ = read_input(measure)?;
    let mu = ioy::read_measure(measure)?;
    let x = parse_center(center)?;
    if x.len() != mu.dim() && mu.dim() > 0 {
        return Err(CliError::input(format!(
            "center has dimension {}, measure has {}",
            x.len(),
            mu.dim()
        )));
    }
    let result = jones::beta_number(&mu, &x, radius, k)?;
    let text = serde_json::to_string_pretty(&result)
        .map_err(|e| CliError::io(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn cmd_reifenberg(balls: &Path, k: usize, delta: f64, levels: usize) -> Result<(), CliError> {
    let _ = read_input(balls)?;
    let family = ioy::read_balls(balls)?;
    let report = jones::discrete_reifenberg_check(&family, k, delta, levels)?;
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::io(e.to_string()))?;
    println!("{text}");
    if !report.satisfied {
        return Err(CliError::verification(format!(
            "dini condition failed: max {} > delta {delta}",
            report.max_normalized_dini
        )));
    }
    Ok(())
}
