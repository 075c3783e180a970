//! Command-line front end: every subcommand reads one RunConfig, writes a
//! bundle directory and encodes its verdict in the exit code
//! (0 pass, 2 verdict mismatch, 1 error with `failure.json`).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use slowinst::config::RunConfig;
use slowinst::grid::Grid1D;
use slowinst::harness::{control_experiment, epsilon_sweep, instability_experiment, series_csv};
use slowinst::interaction::{dt_g_at_zero, dt_g_at_zero_complete};
use slowinst::report::{resonance_audit, Bundle, ResonanceAudit};
use slowinst::solver::{Solver, SolverConfig};
use slowinst::symflow::{closed_form_checks, two_way_envelope_audit, FlowContext, Regime};
use slowinst::wkb::WkbSolution;
use slowinst::{Error, Result};

#[derive(Parser)]
#[command(
    name = "slowinst",
    version,
    about = "Resonance audit, WKB, symbolic flow and instability experiments"
)]
struct Cli {
    /// JSON RunConfig; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output bundle directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Dotted-path override, e.g. model.epsilon=0.001 (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Resonance window radius h (same as symflow.window_h).
    #[arg(long, global = true)]
    window_h: Option<f64>,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Phase, resonance points, transparency table, γ₁, Γ and Γ₁.
    Analyze,
    /// WKB amplitudes on [0, wkb.horizon]: snapshots, norms and ∂ₜg(0,·).
    Wkb,
    /// Closed-form check and growth-envelope audit of the symbolic flow.
    Symflow,
    /// Direct run from WKB data; a conservation report when nonlinear=false.
    Simulate,
    /// Resonant instability run plus the configured controls.
    Experiment,
    /// The experiment over harness.sweep_epsilons.
    Sweep,
}

struct Ctx {
    cfg: RunConfig,
    bundle: Bundle,
    quiet: bool,
    log: Vec<String>,
}

impl Ctx {
    fn note(&mut self, line: String) {
        if !self.quiet {
            eprintln!("{line}");
        }
        self.log.push(line);
    }
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_json(&std::fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(h) = cli.window_h {
        cfg.symflow.window_h = Some(h);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn amplitude_grid(cfg: &RunConfig, epsilon: f64) -> Result<Grid1D> {
    let model = cfg.model.build_at(epsilon)?;
    let snapped = Grid1D::for_carrier(cfg.wkb.length, cfg.solver.n_points, model.k(), epsilon)?;
    Grid1D::new(snapped.length, cfg.wkb.n_amplitude)
}

fn audit(cfg: &RunConfig) -> Result<ResonanceAudit> {
    let model = cfg.model.build()?;
    resonance_audit(
        &model,
        &cfg.interaction.tolerances(),
        cfg.interaction.pmax,
        cfg.symflow.window_h,
        &cfg.wkb.v0,
        &amplitude_grid(cfg, cfg.model.epsilon)?,
    )
}

fn cmd_analyze(cx: &mut Ctx) -> Result<bool> {
    let a = audit(&cx.cfg)?;
    cx.bundle.write_json("audit.json", &a)?;
    cx.note(format!(
        "k={:.12} omega={:.12} xi0={:.10} gamma1(xi0)={:.10} Gamma1={:.10} Gamma={} non-transparent={}",
        a.phase.k,
        a.phase.omega,
        a.xi0,
        a.gamma1_at_xi0,
        a.gamma1_index,
        a.big_gamma,
        a.non_transparent.len()
    ));
    for m in &a.mismatches {
        cx.note(format!("mismatch: {m}"));
    }
    Ok(a.matches_closed_form)
}

fn cmd_wkb(cx: &mut Ctx) -> Result<bool> {
    let cfg = cx.cfg.clone();
    let model = cfg.model.build()?;
    let grid = amplitude_grid(&cfg, cfg.model.epsilon)?;
    let v0 = cfg.wkb.v0.sample(&model, &grid);
    let complete = dt_g_at_zero_complete(&model, &v0)?;
    let literal = dt_g_at_zero(&model, &v0)?;
    let mut csv = String::from("x,re_dtg,im_dtg,re_dtg_literal,im_dtg_literal\n");
    for j in 0..grid.n {
        csv.push_str(&format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            grid.x(j),
            complete[j].re,
            complete[j].im,
            literal[j].re,
            literal[j].im
        ));
    }
    cx.bundle.write_csv("dtg0.csv", "dtg0/1", &csv)?;
    let mut wkb = WkbSolution::cascade_init(&model, grid, &v0, cfg.wkb.horizon)?;
    let dt = 0.25 * grid.dx();
    let mut times = cfg.wkb.snapshot_times.clone();
    times.sort_by(f64::total_cmp);
    let nt = 50;
    let mut marks: Vec<(f64, Option<usize>)> = (0..=nt)
        .map(|i| (cfg.wkb.horizon * i as f64 / nt as f64, None))
        .collect();
    marks.extend(times.iter().enumerate().map(|(i, t)| (*t, Some(i))));
    marks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut norms = String::from("t,amplitude_l2,max_abs_g,max_abs_f\n");
    for (t, snap) in marks {
        wkb.advance_to(t, dt)?;
        match snap {
            Some(i) => wkb.write_snapshot(
                &cx.bundle.dir,
                &format!("wkb_snapshot_{i}"),
                &cx.bundle.hash,
            )?,
            None => norms.push_str(&format!(
                "{:.10e},{:.12e},{:.12e},{:.12e}\n",
                t,
                wkb.amplitude_norm(),
                wkb.g.iter().map(|z| z.norm()).fold(0.0, f64::max),
                wkb.f.iter().map(|z| z.norm()).fold(0.0, f64::max)
            )),
        }
    }
    cx.bundle
        .write_csv("wkb_norms.csv", "wkb-norms/1", &norms)?;
    cx.note(format!(
        "wkb advanced to t={} ({} snapshots)",
        wkb.t,
        times.len()
    ));
    Ok(true)
}

#[derive(Serialize)]
struct SymflowMember {
    epsilon: f64,
    horizon: f64,
    h: f64,
    closed_form_max_rel: f64,
    closed_form: Vec<slowinst::symflow::ClosedFormCheck>,
    envelope_passed: bool,
    envelope_max_ratio: f64,
    regime_counts: Vec<(String, usize)>,
}

fn cmd_symflow(cx: &mut Ctx) -> Result<bool> {
    let cfg = cx.cfg.clone();
    let sf = &cfg.symflow;
    let mut members = Vec::new();
    let mut ok = true;
    for &eps in &sf.epsilons {
        let model = cfg.model.build_at(eps)?;
        let grid = amplitude_grid(&cfg, eps)?;
        let v0 = cfg.wkb.v0.sample(&model, &grid);
        let dtg0 = dt_g_at_zero_complete(&model, &v0)?;
        let ctx = FlowContext::new(&model, grid, dtg0, sf.phi_radius, sf.window_h, sf.t1)?;
        let checks = closed_form_checks(&ctx, 3.0, &sf.options)?;
        let cf_max = checks.iter().map(|c| c.rel_error).fold(0.0, f64::max);
        let env = two_way_envelope_audit(&ctx, sf.samples, sf.c0, &sf.options)?;
        cx.bundle.write_csv(
            &format!("envelope_eps{eps:e}.csv"),
            "envelope/1",
            &env.to_csv(),
        )?;
        let counts = [Regime::SmallTrace, Regime::G1, Regime::G2, Regime::G3]
            .iter()
            .map(|r| (r.name().to_string(), env.count(*r)))
            .collect();
        cx.note(format!(
            "eps={eps:e}: closed-form max rel {cf_max:.2e}, envelope {} (max a/γ⁺ {:.6})",
            if env.passed { "pass" } else { "FAIL" },
            env.max_ratio()
        ));
        ok &= cf_max < 1e-6 && env.passed;
        members.push(SymflowMember {
            epsilon: eps,
            horizon: ctx.horizon,
            h: ctx.h,
            closed_form_max_rel: cf_max,
            closed_form: checks,
            envelope_passed: env.passed,
            envelope_max_ratio: env.max_ratio(),
            regime_counts: counts,
        });
    }
    cx.bundle.write_json(
        "symflow.json",
        &serde_json::json!({ "members": members, "passed": ok }),
    )?;
    Ok(ok)
}

#[derive(Serialize)]
struct SimulateReport {
    epsilon: f64,
    n_points: usize,
    dt: f64,
    t_end: f64,
    nonlinear: bool,
    l2_initial: f64,
    l2_final: f64,
    max_relative_l2_drift: f64,
    conserved: Option<bool>,
}

fn cmd_simulate(cx: &mut Ctx) -> Result<bool> {
    let cfg = cx.cfg.clone();
    let model = cfg.model.build()?;
    let eps = cfg.model.epsilon;
    let fine = Grid1D::for_carrier(cfg.wkb.length, cfg.solver.n_points, model.k(), eps)?;
    let coarse = Grid1D::new(fine.length, cfg.wkb.n_amplitude)?;
    let v0 = cfg.wkb.v0.sample(&model, &coarse);
    let wkb = WkbSolution::cascade_init(&model, coarse, &v0, cfg.wkb.horizon)?;
    let initial = wkb.evaluate(&fine, cfg.wkb.level)?;
    let steps = (cfg.solver.t_end / (cfg.solver.c_dt * eps)).ceil().max(1.0);
    let dt = cfg.solver.t_end / steps;
    let mut solver = Solver::new(
        &model,
        SolverConfig {
            grid: fine,
            dt,
            t_end: cfg.solver.t_end,
            dealias: cfg.solver.dealias,
            nonlinear: cfg.solver.nonlinear,
        },
    )?;
    let rows = solver.run_norms(&initial, cfg.solver.stride)?;
    let mut csv = String::from("t,l2,linf\n");
    for (t, l2, li) in &rows {
        csv.push_str(&format!("{t:.10e},{l2:.15e},{li:.15e}\n"));
    }
    cx.bundle.write_csv("timeseries.csv", "simulate/1", &csv)?;
    let l0 = rows[0].1;
    let drift = rows
        .iter()
        .map(|r| (r.1 - l0).abs() / l0.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let conserved = (!cfg.solver.nonlinear).then_some(drift < 1e-10);
    let rep = SimulateReport {
        epsilon: eps,
        n_points: fine.n,
        dt,
        t_end: cfg.solver.t_end,
        nonlinear: cfg.solver.nonlinear,
        l2_initial: l0,
        l2_final: rows.last().map(|r| r.1).unwrap_or(l0),
        max_relative_l2_drift: drift,
        conserved,
    };
    cx.bundle.write_json("simulate.json", &rep)?;
    cx.note(format!(
        "simulated {} steps, max relative L² drift {drift:.3e}",
        steps as usize
    ));
    Ok(conserved.unwrap_or(true))
}

fn cmd_experiment(cx: &mut Ctx) -> Result<bool> {
    let cfg = cx.cfg.clone();
    let a = audit(&cfg)?;
    cx.bundle.write_json("audit.json", &a)?;
    let ex = cfg.experiment();
    cx.note(format!(
        "experiment eps={:e}, n={}, deviation {:?}",
        ex.params.epsilon, ex.n_points, ex.deviation
    ));
    let out = instability_experiment(&ex)?;
    cx.bundle
        .write_csv("timeseries.csv", "timeseries/1", &series_csv(&out.series))?;
    cx.bundle.write_json("prediction.json", &out.prediction)?;
    cx.bundle.write_json("ratefit.json", &out.report)?;
    let r = &out.report;
    cx.note(format!(
        "slope {:.6} vs Gamma1 {:.6} (ratio {:.4}), amplification {:.2}, verdict {}",
        r.slope_fitted,
        r.gamma1_predicted,
        r.ratio(),
        r.amplification_factor,
        r.verdict
    ));
    let mut ok = r.verdict && a.matches_closed_form;
    let mut controls = Vec::new();
    for &kind in &cfg.harness.controls {
        let (rep, o) = control_experiment(&ex, kind, cfg.harness.off_shift_h, Some(r))?;
        let name = serde_json::to_value(kind)?
            .as_str()
            .unwrap_or("control")
            .to_string();
        cx.bundle.write_csv(
            &format!("timeseries_{name}.csv"),
            "timeseries/1",
            &series_csv(&o.series),
        )?;
        cx.note(format!(
            "control {name}: amplification {:.3}, slope {:.3e}, {}",
            rep.amplification_factor,
            rep.slope_fitted,
            if rep.passed { "pass" } else { "FAIL" }
        ));
        ok &= rep.passed;
        controls.push(rep);
    }
    cx.bundle.write_json(
        "controls.json",
        &serde_json::json!({ "controls": controls }),
    )?;
    Ok(ok)
}

fn cmd_sweep(cx: &mut Ctx) -> Result<bool> {
    let cfg = cx.cfg.clone();
    let ex = cfg.experiment();
    let bundle = &cx.bundle;
    let mut lines = Vec::new();
    let mut err = None;
    let rep = epsilon_sweep(&ex, &cfg.harness.sweep_epsilons, |o| {
        let e = o.prediction.epsilon;
        if let Err(x) = bundle.write_csv(
            &format!("timeseries_eps{e:e}.csv"),
            "timeseries/1",
            &series_csv(&o.series),
        ) {
            err.get_or_insert(x);
        }
        lines.push(format!(
            "eps={e:e}: slope {:.6} ratio {:.4} amplification {:.2}",
            o.report.slope_fitted,
            o.report.ratio(),
            o.report.amplification_factor
        ));
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    for l in lines {
        cx.note(l);
    }
    cx.bundle.write_csv("sweep.csv", "sweep/1", &rep.to_csv())?;
    cx.bundle.write_json("sweep.json", &rep)?;
    cx.note(format!(
        "trend {:?}, all members pass {}",
        rep.trend_ok, rep.all_pass
    ));
    Ok(rep.all_pass && rep.trend_ok != Some(false))
}

fn write_failure(dir: &Path, e: &Error) {
    let _ = std::fs::create_dir_all(dir);
    let doc = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    let _ = std::fs::write(
        dir.join("failure.json"),
        serde_json::to_string_pretty(&doc).unwrap_or_default(),
    );
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = load(cli)?;
    let bundle = Bundle::create(&cli.out, &cfg.hash())?;
    bundle.write_json("config.json", &cfg)?;
    let mut cx = Ctx {
        cfg,
        bundle,
        quiet: cli.quiet,
        log: Vec::new(),
    };
    let ok = match cli.command {
        Command::Analyze => cmd_analyze(&mut cx)?,
        Command::Wkb => cmd_wkb(&mut cx)?,
        Command::Symflow => cmd_symflow(&mut cx)?,
        Command::Simulate => cmd_simulate(&mut cx)?,
        Command::Experiment => cmd_experiment(&mut cx)?,
        Command::Sweep => cmd_sweep(&mut cx)?,
    };
    cx.note(format!("verdict {}", if ok { "pass" } else { "mismatch" }));
    let log = cx.log.join("\n") + "\n";
    cx.bundle.write_text("log.txt", &log)?;
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            if !cli.quiet {
                eprintln!("error [{}]: {e}", e.kind());
            }
            write_failure(&cli.out, &e);
            ExitCode::from(1)
        }
    }
}
