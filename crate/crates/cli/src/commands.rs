use std::io::Write;

use cs_lab_core::analysis::{
    balancing, balancing_scan, gripl_bruteforce, local_coherence, t_levels, SupportFamily,
};
use cs_lab_core::reconstruct::{reconstruct, Mode, ReconstructionSetup};
use cs_lab_core::sampling::{
    allocate_samples, draw_pattern, general_allocate, AllocationParams, MeasurementOperator,
};
use cs_lab_core::solver::SolveStatus;
use cs_lab_core::{assemble_section, CsError, WaveletSystem};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::output::{svg_plot, OutDir};
use crate::CliError;

struct Run {
    details: Value,
    warnings: Vec<String>,
    /// Set when outputs were written but the run did not succeed.
    failure: Option<CliError>,
}

impl Run {
    fn ok(details: Value) -> Self {
        Self {
            details,
            warnings: Vec::new(),
            failure: None,
        }
    }
}

pub fn run(command: &str, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let sys = cfg.system()?;
    let mut out = OutDir::create(&cfg.out)?;
    let mut result = match command {
        "coherence" => coherence(cfg, &sys, &mut out)?,
        "balancing" => theta_scan(cfg, &sys, &mut out)?,
        "ripl" => ripl(cfg, &sys, &mut out)?,
        "allocate" => allocate(cfg, &sys, &mut out)?,
        "reconstruct" => reconstruction(cfg, &sys, &mut out)?,
        other => return Err(CliError::Validation(format!("unknown command {other}"))),
    };
    if matches!(command, "ripl" | "allocate") {
        if let Some(w) = cfg.guarantee_check(&sys)? {
            result.warnings.push(w);
        }
    }
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let status = match &result.failure {
        None => "ok".to_string(),
        Some(e) => e.to_string(),
    };
    let mut files = out.files().to_vec();
    files.push("manifest.json".into());
    let manifest = json!({
        "tool": "cs-lab",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": cfg.seed,
        "quality": cfg.quality,
        "max_mem_mb": std::env::var(cs_lab_core::limits::MAX_MEM_ENV).ok(),
        "tolerances": {
            "tol_feas": cfg.solver.tol_feas,
            "tol_gap": cfg.solver.tol_gap,
            "max_iters": cfg.solver.max_iters,
        },
        "config": cfg,
        "outputs": files,
        "details": result.details,
        "warnings": result.warnings,
        "status": status,
    });
    out.write("manifest.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        writeln!(w)
    })?;
    match result.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn coherence(
    cfg: &ExperimentConfig,
    sys: &WaveletSystem,
    out: &mut OutDir,
) -> Result<Run, CliError> {
    let scheme = cfg.level_scheme()?;
    let sec = assemble_section(
        sys,
        scheme.bandwidth(),
        scheme.sparsity_bandwidth(),
        cfg.quality,
    )?;
    let mu = local_coherence(&sec, &scheme)?;
    out.write("coherence.csv", |w| mu.write_csv(w))?;
    out.write("ratios.csv", |w| mu.write_ratio_csv(w, scheme.r()))?;
    Ok(Run::ok(json!({
        "system": sys.label(),
        "n": scheme.sampling_bounds(),
        "m_levels": scheme.sparsity_bounds(),
        "entry_err": sec.entry_err(),
        "decay_spread": mu.decay_spread(sys.j0()),
    })))
}

fn theta_scan(
    cfg: &ExperimentConfig,
    sys: &WaveletSystem,
    out: &mut OutDir,
) -> Result<Run, CliError> {
    let k = match cfg.balancing.k {
        Some(k) => k,
        None => {
            let m = *cfg.levels().last().unwrap_or(&1);
            if !m.is_power_of_two() {
                return Err(CsError::NotPowerOfTwo(m).into());
            }
            m.trailing_zeros()
        }
    };
    let scan = balancing_scan(
        sys,
        k,
        cfg.balancing.theta_target,
        cfg.quality,
        cfg.balancing.max_q,
    )?;
    out.write("theta_scan.csv", |w| scan.write_csv(w))?;
    Ok(Run::ok(json!({
        "system": sys.label(),
        "m": 1u64 << k,
        "theta_target": scan.target,
        "q": scan.q,
    })))
}

fn ripl(cfg: &ExperimentConfig, sys: &WaveletSystem, out: &mut OutDir) -> Result<Run, CliError> {
    let scheme = cfg.level_scheme()?;
    let (n, m) = (scheme.bandwidth(), scheme.sparsity_bandwidth());
    let sec = assemble_section(sys, n, m, cfg.quality)?;
    let g = balancing(&sec, n, m)?;
    let g2 = g.g_squared();
    let identity = (g.g() - DMatrix::identity(m, m)).amax() <= 1e-12;
    let bounds = scheme.sparsity_bounds().to_vec();
    let s = scheme.sparsities().to_vec();
    let w = cfg.weights(&s)?;
    let t = t_levels(&bounds, &s, &w, &g)?;
    let s_family = SupportFamily::new(bounds.clone(), s)?;
    let t_family = SupportFamily::new(bounds, t.clone())?;
    let cap = cfg.ripl.cap as u128;

    let mut rows = Vec::new();
    for p in 0..cfg.ripl.patterns {
        let seed = cfg.seed.wrapping_add(p);
        let pattern = draw_pattern(&scheme, seed);
        let a = MeasurementOperator::new(&sec, &pattern, m)?.matrix();
        let delta_s = gripl_bruteforce(&a, &g2, &s_family, cap)?;
        let delta_t = gripl_bruteforce(&a, &g2, &t_family, cap)?;
        rows.push((seed, pattern, delta_s, delta_t));
    }
    let t_text: Vec<String> = t.iter().map(usize::to_string).collect();
    out.write("ripl_report.csv", |w| {
        writeln!(w, "seed,samples,delta_s,delta_t,t_levels,gram_is_identity")?;
        for (seed, pattern, ds, dt) in &rows {
            writeln!(
                w,
                "{seed},{},{ds:e},{dt:e},{},{identity}",
                pattern.len(),
                t_text.join(";")
            )?;
        }
        Ok(())
    })?;
    let patterns: Vec<Value> = rows
        .iter()
        .map(|(seed, p, _, _)| json!({ "seed": seed, "levels": p.levels() }))
        .collect();
    Ok(Run::ok(json!({
        "system": sys.label(),
        "theta": g.theta(),
        "g_inv_norm": g.g_inv_norm(),
        "gram_is_identity": identity,
        "t_levels": t,
        "weights": w.values(),
        "patterns": patterns,
    })))
}

fn allocate(
    cfg: &ExperimentConfig,
    sys: &WaveletSystem,
    out: &mut OutDir,
) -> Result<Run, CliError> {
    let scheme = cfg.level_scheme()?;
    let params = AllocationParams {
        delta: cfg.allocation.delta,
        eps: cfg.allocation.eps,
        c_univ: cfg.allocation.c_univ,
    };
    let n_bounds = scheme.sampling_bounds().to_vec();
    let s = scheme.sparsities().to_vec();
    let r0 = scheme.r0();
    let q = cfg.scheme.q.unwrap_or(1);
    let needs_section = cfg.allocation.theta.is_none() || cfg.allocation.rule == "coherence";
    let sec = if needs_section {
        Some(assemble_section(
            sys,
            scheme.bandwidth(),
            scheme.sparsity_bandwidth(),
            cfg.quality,
        )?)
    } else {
        None
    };
    let gram = match &sec {
        Some(sec) => Some(balancing(
            sec,
            scheme.bandwidth(),
            scheme.sparsity_bandwidth(),
        )?),
        None => None,
    };
    let theta = cfg
        .allocation
        .theta
        .or_else(|| gram.as_ref().map(|g| g.theta()))
        .unwrap_or(1.0);
    let alloc = match cfg.allocation.rule.as_str() {
        "wavelet" => allocate_samples(&n_bounds, &s, r0, theta, q, &params)?,
        "coherence" => {
            let sec = sec.as_ref().expect("section assembled");
            let mu = local_coherence(sec, &scheme)?;
            let g_inv = gram.as_ref().expect("gram computed").g_inv_norm();
            general_allocate(&n_bounds, &s, r0, mu.matrix(), g_inv, &params)?
        }
        other => {
            return Err(CliError::Validation(format!(
                "unknown allocation rule {other:?}"
            )))
        }
    };
    let widths = scheme.sampling_widths();
    out.write("allocation.csv", |w| {
        writeln!(
            w,
            "level,n_lower,n_upper,s,bracket,log_term,demand,m,saturated"
        )?;
        let mut lo = 0;
        for k in 0..n_bounds.len() {
            let hi = n_bounds[k];
            writeln!(
                w,
                "{},{lo},{hi},{},{:e},{:e},{:e},{},{}",
                k + 1,
                s[k],
                alloc.bracket[k],
                alloc.log_term,
                alloc.demand[k],
                alloc.m[k],
                alloc.m[k] == widths[k]
            )?;
            lo = hi;
        }
        Ok(())
    })?;
    let mut run = Run::ok(json!({
        "system": sys.label(),
        "rule": cfg.allocation.rule,
        "theta": theta,
        "q": q,
        "m": alloc.m,
        "m_total": alloc.m.iter().sum::<usize>(),
        "m_tilde": alloc.m_tilde,
        "iterations": alloc.iterations,
        "converged": alloc.converged,
    }));
    if !alloc.converged {
        run.warnings
            .push("allocation fixed point did not settle; every level saturated".into());
    }
    Ok(run)
}

fn reconstruction(
    cfg: &ExperimentConfig,
    sys: &WaveletSystem,
    out: &mut OutDir,
) -> Result<Run, CliError> {
    let mode = cfg.mode()?;
    let signal = cfg.signal()?;
    let rc = &cfg.reconstruct;
    let (samples, pattern) = match rc.pattern.as_str() {
        "first" => ((0..rc.samples).collect::<Vec<_>>(), None),
        "multilevel" => {
            let scheme = cfg.level_scheme()?;
            let pattern = draw_pattern(&scheme, cfg.seed);
            let mut rows: Vec<usize> = pattern.rows().collect();
            rows.sort_unstable();
            rows.dedup();
            (rows, Some(pattern))
        }
        other => return Err(CliError::Validation(format!("unknown pattern {other:?}"))),
    };
    let mut setup = ReconstructionSetup::new(mode, samples.clone(), rc.bandwidth);
    setup.finite_scale = rc.finite_scale;
    setup.grid_depth = rc.grid_depth;
    setup.quality = cfg.quality;
    setup.eta = cfg.solver.eta;
    setup.tol_feas = cfg.solver.tol_feas;
    setup.tol_gap = cfg.solver.tol_gap;
    setup.max_iters = cfg.solver.max_iters;
    if mode == Mode::Infinite && cfg.weights.mode != "unweighted" {
        let scheme = cfg.level_scheme()?;
        setup.weights = Some(cfg.weights(scheme.sparsities())?);
        setup.weight_bounds = scheme.sparsity_bounds().to_vec();
    }
    let rec = reconstruct(sys, &signal, &setup)?;
    let depth = rec.reference.depth().max(rec.grid.depth());
    let reference = rec.reference.refine_to(depth);
    let grid = rec.grid.refine_to(depth);
    let xs: Vec<f64> = reference.midpoints().collect();
    out.write("reconstruction.csv", |w| {
        writeln!(w, "t,reference,reconstruction")?;
        for ((x, r), g) in xs.iter().zip(reference.values()).zip(grid.values()) {
            writeln!(w, "{x:e},{r:e},{g:e}")?;
        }
        Ok(())
    })?;
    let title = format!(
        "{} reconstruction, {} samples, {}",
        mode,
        samples.len(),
        sys.label()
    );
    let svg = svg_plot(
        &title,
        &xs,
        &[
            ("reference", "#444444", reference.values()),
            ("reconstruction", "#c0392b", grid.values()),
        ],
    );
    out.write("reconstruction.svg", |w| w.write_all(svg.as_bytes()))?;

    let solver = rec.report.as_ref().map(|r| {
        json!({
            "status": r.status.as_str(),
            "iterations": r.iterations,
            "objective": r.objective,
            "residual_norm": r.residual_norm,
            "gap_estimate": finite_or_null(r.gap_estimate),
            "polished": r.polished,
            "op_norm": r.op_norm,
        })
    });
    let mut run = Run::ok(json!({
        "system": sys.label(),
        "mode": mode.to_string(),
        "samples": samples,
        "pattern": pattern.as_ref().map(|p| json!({ "seed": p.seed(), "levels": p.levels() })),
        "grid_error": rec.grid_error,
        "coefficient_error": rec.coefficient_error,
        "solver": solver,
    }));
    if let Some(r) = &rec.report {
        if r.status != SolveStatus::Converged {
            run.failure = Some(CliError::NotConverged(format!(
                "solver stopped with status {} after {} iterations",
                r.status.as_str(),
                r.iterations
            )));
        }
    }
    Ok(run)
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}
