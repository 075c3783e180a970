//! Instability experiments: prepared WKB data plus a resonant perturbation,
//! advanced by the direct solver, with the deviation's growth fitted against
//! the predicted index Γ₁.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid1D, Spectral};
use crate::interaction::{
    big_gamma1, dt_g_at_zero, dt_g_at_zero_complete, select_xi0, ResonancePoints,
};
use crate::linalg::{Vec3, C64};
use crate::model::{Branch, Family, ModeSpec, Model, ModelParams};
use crate::solver::{toy_cauchy_riemann, FieldState, Solver, SolverConfig, SpectralState};
use crate::symflow::bump;
use crate::wkb::{polarized_data, Level, WkbSolution};

/// Gaussian leading amplitude `height·exp(−((x−center)/width)²)` along e₁.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct V0Spec {
    pub center: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for V0Spec {
    fn default() -> Self {
        V0Spec {
            center: 0.0,
            width: 1.0,
            height: 1.0,
        }
    }
}

impl V0Spec {
    pub fn amplitude(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.width;
        self.height * (-z * z).exp()
    }

    pub fn sample(&self, model: &Model, grid: &Grid1D) -> Vec<Vec3> {
        polarized_data(model, grid, |x| C64::new(self.amplitude(x), 0.0))
    }
}

/// Direction of the perturbation's u-vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarization {
    /// e₀ spanning Image P₊(ξ₀+3k).
    Resonant,
    /// e₀ in ker P₊(ξ₀+3k) (the − branch direction).
    KernelOrthogonal,
}

/// The bump Ψ and the carrier of the perturbation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsiSpec {
    /// Center; `None` uses x₀ = argmax|∂ₜg(0,·)|.
    pub center: Option<f64>,
    /// Ψ ≡ 1 within radius/2, 0 beyond radius.
    pub radius: f64,
    /// Carrier offset from ξ₀ in units of the window radius h.
    pub carrier_shift_h: f64,
    pub polarization: Polarization,
}

impl Default for PsiSpec {
    fn default() -> Self {
        PsiSpec {
            center: None,
            radius: 0.5,
            carrier_shift_h: 0.0,
            polarization: Polarization::Resonant,
        }
    }
}

/// What the deviation is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationMode {
    /// The assembled WKB field (u^a, v^a).
    Wkb,
    /// An unperturbed direct run from the same WKB data.
    Twin,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub params: ModelParams,
    pub v0: V0Spec,
    /// Perturbation amplitude exponent: data perturbed by ε^K.
    pub k_exp: f64,
    /// WKB precision tag (reported only).
    pub k_a: f64,
    /// Horizon as a fraction of T₀*.
    pub t0_factor: f64,
    pub psi: PsiSpec,
    /// Target domain length (snapped to a whole number of carrier periods).
    pub length: f64,
    pub n_points: usize,
    /// Amplitude (transport) grid size.
    pub n_amplitude: usize,
    /// dt = c_dt·ε.
    pub c_dt: f64,
    /// Observation stride in steps.
    pub stride: usize,
    pub fit_window: [f64; 2],
    pub deviation: DeviationMode,
    pub wkb_level: Level,
    /// Resonance window radius; `None` is 0.1·(min separation of R).
    pub window_h: Option<f64>,
    pub dealias: bool,
    /// Explicit horizon; required when Γ₁ vanishes.
    pub t_end: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            params: ModelParams::default(),
            v0: V0Spec::default(),
            k_exp: 2.0,
            k_a: 2.0,
            t0_factor: 0.9,
            psi: PsiSpec::default(),
            length: 8.0,
            n_points: 1 << 14,
            n_amplitude: 256,
            c_dt: 0.1,
            stride: 20,
            fit_window: [0.3, 0.9],
            deviation: DeviationMode::Twin,
            wkb_level: Level::Second,
            window_h: None,
            dealias: true,
            t_end: None,
        }
    }
}

/// Quantities fixed by the data and the equations before any run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub epsilon: f64,
    pub xi0: f64,
    pub xi0_r: f64,
    pub x0: f64,
    /// Γ₁ from the full transport source.
    pub gamma1_index: f64,
    /// Γ₁ from the closed third-harmonic expression alone.
    pub gamma1_index_literal: f64,
    pub t0_star: f64,
    /// T₀·ε^{1/4}|ln ε|^{1/2}.
    pub horizon: f64,
    /// Predicted ln-amplification Γ₁t²/(2√ε) at the horizon.
    pub ln_amplification: f64,
    pub h: f64,
}

pub fn predict(cfg: &ExperimentConfig) -> Result<Prediction> {
    let model = Model::new(cfg.params)?;
    let eps = cfg.params.epsilon;
    let coarse = Grid1D::new(cfg.length, cfg.n_amplitude)?;
    let v0 = cfg.v0.sample(&model, &coarse);
    let complete = dt_g_at_zero_complete(&model, &v0)?;
    let literal = dt_g_at_zero(&model, &v0)?;
    let pts = ResonancePoints::compute(&model)?;
    let (xi0, xi0_r) = select_xi0(&model, (pts.xi2, pts.xi3))?;
    let g1 = big_gamma1(&model, &complete, xi0);
    let g1l = big_gamma1(&model, &literal, xi0);
    let (j0, _) = complete
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .ok_or_else(|| Error::Config("empty amplitude grid".into()))?;
    if !(g1 > 0.0) && cfg.t_end.is_none() {
        return Err(Error::Support(
            "Γ₁ vanishes for these data; set t_end".into(),
        ));
    }
    if !(cfg.k_exp > 0.75) {
        return Err(Error::InvalidParameter {
            name: "k_exp",
            value: cfg.k_exp,
            reason: "must exceed d/2 + 1/4 = 0.75".into(),
        });
    }
    let t0_star = (2.0 * (cfg.k_exp - 0.75) / g1).sqrt();
    let scale = eps.powf(0.25) * eps.ln().abs().sqrt();
    let horizon = cfg.t_end.unwrap_or(cfg.t0_factor * t0_star * scale);
    let h = match cfg.window_h {
        Some(h) => h,
        None => 0.1 * pts.min_separation()?,
    };
    Ok(Prediction {
        epsilon: eps,
        xi0,
        xi0_r,
        x0: coarse.x(j0),
        gamma1_index: g1,
        gamma1_index_literal: g1l,
        t0_star,
        horizon,
        ln_amplification: g1 * horizon * horizon / (2.0 * eps.sqrt()),
        h,
    })
}

/// Exact grid phase e^{i m·2π x_j / X} for integer mode m.
fn grid_phase(grid: &Grid1D, m: i64, j: usize) -> C64 {
    let n = grid.n as i64;
    let mj = (m.rem_euclid(n) as i128 * j as i128).rem_euclid(n as i128) as f64;
    let th = 2.0 * PI * mj / grid.n as f64 - PI * m.rem_euclid(2) as f64;
    C64::from_polar(1.0, th)
}

/// The perturbation φ₁ + c.c. with φ₁ = e^{ixκ}Ψ(x)(e₀, 0, 0), as a real
/// field (no ε^K factor), together with e₀ and the snapped carrier κ.
#[derive(Clone, Debug)]
pub struct Perturbation {
    pub field: FieldState,
    pub e0: Vec3,
    pub carrier: f64,
    pub center: f64,
}

pub fn build_perturbation(
    model: &Model,
    grid: &Grid1D,
    pred: &Prediction,
    psi: &PsiSpec,
) -> Result<Perturbation> {
    let eps = model.params.epsilon;
    let k = model.k();
    let xi_c = pred.xi0 + psi.carrier_shift_h * pred.h;
    let freq = xi_c + 3.0 * k;
    let e0 = match psi.polarization {
        Polarization::Resonant => model
            .params
            .kernel_vector(ModeSpec::new(Family::L, Branch::Plus), freq),
        Polarization::KernelOrthogonal => model
            .params
            .kernel_vector(ModeSpec::new(Family::L, Branch::Minus), freq),
    };
    let e0 = e0 / C64::new(e0.norm(), 0.0);
    let m = grid.nearest_mode(freq / eps);
    let carrier = grid.check_snapped(m as f64 * grid.dk())? as f64 * grid.dk();
    let center = psi.center.unwrap_or(pred.x0);
    if !(psi.radius > 0.0) || psi.radius > 0.25 * grid.length {
        return Err(Error::InvalidParameter {
            name: "psi.radius",
            value: psi.radius,
            reason: "must be positive and well inside the domain".into(),
        });
    }
    let mut field = FieldState::zeros(grid.n, 0.0);
    for j in 0..grid.n {
        let x = grid.x(j);
        let w = bump(center, psi.radius, x);
        if w == 0.0 {
            continue;
        }
        let z = grid_phase(grid, m, j) * w;
        for c in 0..3 {
            field.u[c][j] = 2.0 * (z * e0[c]).re;
        }
    }
    Ok(Perturbation {
        field,
        e0,
        carrier,
        center,
    })
}

/// One observation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    /// t²/(2√ε).
    pub s: f64,
    pub deviation: f64,
    pub l2: f64,
    pub linf: f64,
    /// Fraction of the deviation's energy within h/ε of the perturbation
    /// carrier κ or of its coupled partner κ − 3k/ε.
    pub resonant_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFitReport {
    pub epsilon: f64,
    pub gamma1_predicted: f64,
    pub gamma1_literal: f64,
    pub slope_fitted: f64,
    pub fit_window: [f64; 2],
    pub fit_points: usize,
    pub r_squared: f64,
    pub amplification_factor: f64,
    pub horizon: f64,
    pub saturated_at: Option<f64>,
    pub deviation_mode: DeviationMode,
    pub verdict: bool,
}

impl RateFitReport {
    pub fn ratio(&self) -> f64 {
        self.slope_fitted / self.gamma1_predicted
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub prediction: Prediction,
    pub report: RateFitReport,
    pub series: Vec<SeriesRow>,
    pub carrier: f64,
    pub e0: Vec3,
}

pub fn series_csv(rows: &[SeriesRow]) -> String {
    let mut s = String::from("t,s,deviation,l2,linf,resonant_fraction\n");
    for r in rows {
        s.push_str(&format!(
            "{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.6e}\n",
            r.t, r.s, r.deviation, r.l2, r.linf, r.resonant_fraction
        ));
    }
    s
}

/// Least squares of ln d against t²/(2√ε) for t in `window`; returns
/// (slope, intercept, r², points).
pub fn fit_rate(
    ts: &[f64],
    ds: &[f64],
    epsilon: f64,
    window: [f64; 2],
) -> Result<(f64, f64, f64, usize)> {
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(ds)
        .filter(|(t, d)| **t >= window[0] && **t <= window[1] && **d > 0.0)
        .map(|(t, d)| (t * t / (2.0 * epsilon.sqrt()), d.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Fit(format!(
            "only {} points in the fit window",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Fit("degenerate fit window".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    Ok((slope, my - slope * mx, r2, pts.len()))
}

fn field_norm(grid: &Grid1D, a: &FieldState, b: &FieldState) -> f64 {
    a.minus(b).l2_norm(grid)
}

/// Energy fraction of `dev` within `half_width` of ±`carriers`.
fn band_fraction(
    grid: &Grid1D,
    sp: &Spectral,
    dev: &FieldState,
    carriers: [f64; 2],
    half_width: f64,
) -> f64 {
    let mut near = 0.0;
    let mut total = 0.0;
    let ks = grid.wavenumbers();
    for comp in dev.components() {
        let mut buf: Vec<C64> = comp.iter().map(|x| C64::new(*x, 0.0)).collect();
        sp.forward(&mut buf);
        for (z, k) in buf.iter().zip(&ks) {
            let e = z.norm_sqr();
            total += e;
            if carriers
                .iter()
                .any(|c| (k.abs() - c.abs()).abs() <= half_width)
            {
                near += e;
            }
        }
    }
    if total > 0.0 {
        near / total
    } else {
        0.0
    }
}

/// The full run: WKB data, perturbation at ε^K, solver to the horizon,
/// deviation series and rate fit.
pub fn instability_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    run_experiment(cfg, false)
}

fn run_experiment(cfg: &ExperimentConfig, zero_perturbation: bool) -> Result<ExperimentOutcome> {
    let model = Model::new(cfg.params)?;
    let eps = cfg.params.epsilon;
    let pred = predict(cfg)?;
    let fine = Grid1D::for_carrier(cfg.length, cfg.n_points, model.k(), eps)?;
    let coarse = Grid1D::new(fine.length, cfg.n_amplitude)?;
    let v0 = cfg.v0.sample(&model, &coarse);
    let mut wkb = WkbSolution::cascade_init(&model, coarse, &v0, pred.horizon * 1.01)?;
    let base = wkb.evaluate(&fine, cfg.wkb_level)?;
    let pert = build_perturbation(&model, &fine, &pred, &cfg.psi)?;
    let amp = if zero_perturbation {
        0.0
    } else {
        eps.powf(cfg.k_exp)
    };
    let mut init = base.clone();
    init.add_scaled(&pert.field, amp);

    let steps = (pred.horizon / (cfg.c_dt * eps)).ceil().max(1.0) as usize;
    let dt = pred.horizon / steps as f64;
    let scfg = SolverConfig {
        grid: fine,
        dt,
        t_end: pred.horizon,
        dealias: cfg.dealias,
        nonlinear: true,
    };
    let mut solver = Solver::new(&model, scfg)?;
    let mut twin = match cfg.deviation {
        DeviationMode::Twin => Some((
            Solver::new(&model, scfg)?,
            Solver::new(&model, scfg)?.to_spectral(&base),
        )),
        DeviationMode::Wkb => None,
    };
    let sp = Spectral::new(fine.n);
    let half_width = pred.h / eps;
    let bands = [pert.carrier, pert.carrier - 3.0 * model.k() / eps];
    let sat = eps.powf(0.25);
    let mut series = Vec::new();
    let mut s: SpectralState = solver.to_spectral(&init);
    let mut t = 0.0;
    let mut saturated_at = None;
    let wkb_dt = 0.25 * coarse.dx();
    for n in 0..=steps {
        if n > 0 {
            s = solver.step(&s, t)?;
            if let Some((tw, ts)) = twin.as_mut() {
                *ts = tw.step(ts, t)?;
            }
            t = n as f64 * dt;
        }
        if n % cfg.stride.max(1) == 0 || n == steps {
            let u = solver.to_physical(&s, t);
            let reference = match twin.as_ref() {
                Some((tw, ts)) => tw.to_physical(ts, t),
                None => {
                    wkb.advance_to(t, wkb_dt)?;
                    wkb.evaluate(&fine, cfg.wkb_level)?
                }
            };
            let d = field_norm(&fine, &u, &reference);
            if saturated_at.is_none() && d > sat {
                saturated_at = Some(t);
            }
            let dev = u.minus(&reference);
            series.push(SeriesRow {
                t,
                s: t * t / (2.0 * eps.sqrt()),
                deviation: d,
                l2: u.l2_norm(&fine),
                linf: u.linf_norm(),
                resonant_fraction: band_fraction(&fine, &sp, &dev, bands, half_width),
            });
        }
    }
    let report = rate_report(cfg, &pred, &series, saturated_at)?;
    Ok(ExperimentOutcome {
        prediction: pred,
        report,
        series,
        carrier: pert.carrier,
        e0: pert.e0,
    })
}

fn rate_report(
    cfg: &ExperimentConfig,
    pred: &Prediction,
    series: &[SeriesRow],
    saturated_at: Option<f64>,
) -> Result<RateFitReport> {
    let eps = pred.epsilon;
    let mut window = [
        cfg.fit_window[0] * pred.horizon,
        cfg.fit_window[1] * pred.horizon,
    ];
    if let Some(ts) = saturated_at {
        window[1] = window[1].min(ts);
    }
    let ts: Vec<f64> = series.iter().map(|r| r.t).collect();
    let ds: Vec<f64> = series.iter().map(|r| r.deviation).collect();
    let d0 = ds.first().copied().unwrap_or(0.0);
    let dmax = ds.iter().copied().fold(0.0, f64::max);
    // identical twins: nothing to fit, nothing grew
    let (slope, r2, npts) = if dmax == 0.0 {
        (0.0, 0.0, 0)
    } else {
        let (s, _, r2, n) = fit_rate(&ts, &ds, eps, window)?;
        (s, r2, n)
    };
    let amplification = match (d0 > 0.0, dmax > 0.0) {
        (true, _) => dmax / d0,
        (false, true) => f64::INFINITY,
        (false, false) => 1.0,
    };
    let g = pred.gamma1_index;
    let verdict = slope >= 0.6 * g && slope <= 1.4 * g && amplification >= 10.0;
    Ok(RateFitReport {
        epsilon: eps,
        gamma1_predicted: g,
        gamma1_literal: pred.gamma1_index_literal,
        slope_fitted: slope,
        fit_window: window,
        fit_points: npts,
        r_squared: r2,
        amplification_factor: amplification,
        horizon: pred.horizon,
        saturated_at,
        deviation_mode: cfg.deviation,
        verdict,
    })
}

/// Control variants on the same horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    /// Carrier moved to ξ₀ + shift·h, outside every resonance window.
    OffResonance,
    /// e₀ replaced by a vector of ker P₊(ξ₀+3k).
    KernelOrthogonal,
    /// No perturbation at all.
    ZeroPerturbation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlReport {
    pub kind: ControlKind,
    pub amplification_factor: f64,
    pub slope_fitted: f64,
    pub reference_slope: Option<f64>,
    pub min_distance_to_r: f64,
    pub passed: bool,
}

/// Distance of the carrier's input frequency from the resonance set R.
fn distance_to_r(model: &Model, xi: f64) -> Result<f64> {
    let pts = ResonancePoints::compute(model)?;
    Ok(pts
        .set_r()
        .iter()
        .map(|r| (r - xi).abs())
        .fold(f64::INFINITY, f64::min))
}

pub fn control_experiment(
    cfg: &ExperimentConfig,
    kind: ControlKind,
    off_shift_h: f64,
    reference: Option<&RateFitReport>,
) -> Result<(ControlReport, ExperimentOutcome)> {
    let mut c = *cfg;
    match kind {
        ControlKind::OffResonance => c.psi.carrier_shift_h = off_shift_h,
        ControlKind::KernelOrthogonal => c.psi.polarization = Polarization::KernelOrthogonal,
        ControlKind::ZeroPerturbation => {}
    }
    let model = Model::new(c.params)?;
    let out = run_experiment(&c, kind == ControlKind::ZeroPerturbation)?;
    let xi_c = out.prediction.xi0 + c.psi.carrier_shift_h * out.prediction.h;
    let dist = distance_to_r(&model, xi_c)?;
    let amp = out.report.amplification_factor;
    let passed = match kind {
        ControlKind::OffResonance => amp < 2.0,
        ControlKind::KernelOrthogonal => match reference {
            Some(r) => out.report.slope_fitted < r.slope_fitted,
            None => amp < 2.0,
        },
        ControlKind::ZeroPerturbation => out.series.iter().all(|r| r.deviation < 1e-10),
    };
    Ok((
        ControlReport {
            kind,
            amplification_factor: amp,
            slope_fitted: out.report.slope_fitted,
            reference_slope: reference.map(|r| r.slope_fitted),
            min_distance_to_r: dist,
            passed,
        },
        out,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<RateFitReport>,
    /// `None` for a single member.
    pub trend_ok: Option<bool>,
    pub all_pass: bool,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "epsilon,gamma1_predicted,gamma1_literal,slope_fitted,ratio,fit_t0,fit_t1,r_squared,amplification,horizon,verdict\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:.6e},{:.10e},{:.10e},{:.10e},{:.6},{:.6e},{:.6e},{:.6},{:.6e},{:.6e},{}\n",
                r.epsilon,
                r.gamma1_predicted,
                r.gamma1_literal,
                r.slope_fitted,
                r.ratio(),
                r.fit_window[0],
                r.fit_window[1],
                r.r_squared,
                r.amplification_factor,
                r.horizon,
                r.verdict
            ));
        }
        s
    }
}

/// Sequence of fitted slopes: as ε decreases, |slope − Γ₁| may not grow by
/// more than 0.1·Γ₁ from one member to the next.
pub fn trend_ok(rows: &[RateFitReport]) -> Option<bool> {
    if rows.len() < 2 {
        return None;
    }
    Some(rows.windows(2).all(|w| {
        let d0 = (w[0].slope_fitted - w[0].gamma1_predicted).abs();
        let d1 = (w[1].slope_fitted - w[1].gamma1_predicted).abs();
        d1 <= d0 + 0.1 * w[1].gamma1_predicted
    }))
}

/// Sorts ε decreasing and runs one experiment per member.
pub fn epsilon_sweep(
    cfg: &ExperimentConfig,
    epsilons: &[f64],
    mut on_member: impl FnMut(&ExperimentOutcome),
) -> Result<SweepReport> {
    let mut eps: Vec<f64> = epsilons.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    eps.dedup();
    let mut rows = Vec::with_capacity(eps.len());
    for e in eps {
        let mut c = *cfg;
        c.params.epsilon = e;
        let out = instability_experiment(&c)?;
        on_member(&out);
        rows.push(out.report);
    }
    let all_pass = rows.iter().all(|r| r.verdict);
    Ok(SweepReport {
        trend_ok: trend_ok(&rows),
        all_pass,
        rows,
    })
}

/// Rate fit applied to the toy degenerate Cauchy–Riemann mode: the slope of
/// ln|ŵ| against t²/(2√ε) must equal ξ.
pub fn toy_rate_fit(xi: f64, epsilon: f64, t_end: f64, dt: f64) -> Result<f64> {
    let traj = toy_cauchy_riemann(C64::new(1.0, 0.0), xi, epsilon, t_end, dt);
    let ts: Vec<f64> = traj.iter().map(|p| p.0).collect();
    let ds: Vec<f64> = traj.iter().map(|p| p.1.norm()).collect();
    Ok(fit_rate(&ts, &ds, epsilon, [0.0, t_end])?.0)
}

/// Residual-order measurement for the WKB field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualOrder {
    pub epsilons: Vec<f64>,
    pub residuals: Vec<f64>,
    pub slope: f64,
    pub level: Level,
    pub t_eval: f64,
}

/// Grid size resolving harmonics up to `pmax`·k/ε with a 1.5 margin.
pub fn resolving_points(model: &Model, length: f64, pmax: f64) -> usize {
    let kmax = 1.5 * pmax * model.k() / model.params.epsilon;
    let need = (kmax * length / PI).ceil() as usize;
    need.next_power_of_two().max(64)
}

/// L² residual of the WKB field (through `level`) substituted into the
/// system at time `t_eval`, for each ε; slope of ln residual vs ln ε.
pub fn residual_order(
    base: &ModelParams,
    v0: &V0Spec,
    epsilons: &[f64],
    level: Level,
    t_eval: f64,
    length: f64,
) -> Result<ResidualOrder> {
    if epsilons.len() < 3 {
        return Err(Error::Fit(
            "residual order needs at least three epsilons".into(),
        ));
    }
    let (lo, hi) = epsilons
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    if hi / lo < 10.0 - 1e-9 {
        return Err(Error::Fit("epsilons must span a decade".into()));
    }
    let mut residuals = Vec::with_capacity(epsilons.len());
    for &e in epsilons {
        residuals.push(wkb_residual(base, v0, e, level, t_eval, length)?);
    }
    let xs: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = residuals.iter().map(|r| r.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(ResidualOrder {
        epsilons: epsilons.to_vec(),
        residuals,
        slope: sxy / sxx,
        level,
        t_eval,
    })
}

/// ‖∂ₜU^a + A∂ₓU^a + A₀U^a/ε − ε^{-1/2}B(U^a)‖_{L²} at `t_eval`.
pub fn wkb_residual(
    base: &ModelParams,
    v0: &V0Spec,
    epsilon: f64,
    level: Level,
    t_eval: f64,
    length: f64,
) -> Result<f64> {
    let params = ModelParams { epsilon, ..*base };
    let model = Model::new(params)?;
    let n = resolving_points(&model, length, 10.0);
    let fine = Grid1D::for_carrier(length, n, model.k(), epsilon)?;
    let coarse = Grid1D::new(fine.length, 256)?;
    let data = v0.sample(&model, &coarse);
    let mut wkb = WkbSolution::cascade_init(&model, coarse, &data, t_eval.max(1e-3) * 1.01)?;
    wkb.advance_to(t_eval, 0.25 * coarse.dx())?;
    let (field, dfield) = wkb.evaluate_with_derivative(&fine, level, true)?;
    let dfield = dfield.ok_or_else(|| Error::Support("missing time derivative".into()))?;
    let solver = Solver::new(
        &model,
        SolverConfig {
            grid: fine,
            dt: epsilon,
            t_end: 0.0,
            dealias: false,
            nonlinear: true,
        },
    )?;
    Ok(solver.residual(&field, &dfield).l2_norm(&fine))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_rate_fit_is_exact() {
        let eps: f64 = 1e-2;
        let ts: Vec<f64> = (0..200).map(|i| i as f64 * 0.01).collect();
        let ds: Vec<f64> = ts
            .iter()
            .map(|t| (0.42 * t * t / (2.0 * eps.sqrt()) - 3.0).exp())
            .collect();
        let (a, b, r2, _) = fit_rate(&ts, &ds, eps, [0.3, 1.8]).unwrap();
        assert!((a - 0.42).abs() < 1e-10);
        assert!((b + 3.0).abs() < 1e-9);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn toy_pipeline_recovers_carrier() {
        let s = toy_rate_fit(0.7, 1e-2, 1.0, 1e-3).unwrap();
        assert!((s - 0.7).abs() < 1e-6, "{s}");
    }

    #[test]
    fn perturbation_is_polarized_and_centered() {
        let cfg = ExperimentConfig {
            n_points: 1 << 12,
            ..Default::default()
        };
        let model = Model::new(cfg.params).unwrap();
        let pred = predict(&cfg).unwrap();
        let grid =
            Grid1D::for_carrier(cfg.length, cfg.n_points, model.k(), cfg.params.epsilon).unwrap();
        let p = build_perturbation(&model, &grid, &pred, &cfg.psi).unwrap();
        let pp = model.params.projector(
            ModeSpec::new(Family::L, Branch::Plus),
            pred.xi0 + 3.0 * model.k(),
        );
        assert!((pp.apply(&p.e0) - p.e0).norm() < 1e-12);
        assert!((bump(p.center, cfg.psi.radius, pred.x0) - 1.0).abs() < 1e-15);
        assert!(pred.x0.abs() < grid.length / 256.0 + 1e-12);
        // carrier snapped within half a grid frequency
        assert!(
            (p.carrier - (pred.xi0 + 3.0 * model.k()) / cfg.params.epsilon).abs()
                <= 0.5 * grid.dk() + 1e-9
        );
    }

    #[test]
    fn prediction_matches_formulae() {
        let cfg = ExperimentConfig::default();
        let p = predict(&cfg).unwrap();
        let expect = p.gamma1_index * p.horizon * p.horizon / (2.0 * 0.1);
        assert!((p.ln_amplification - expect).abs() < 1e-12);
        let target = cfg.t0_factor.powi(2) * (cfg.k_exp - 0.75) * 1e-2f64.ln().abs();
        assert!((p.ln_amplification - target).abs() < 1e-10);
        assert!(p.gamma1_index > p.gamma1_index_literal);
    }

    #[test]
    fn trend_rule() {
        let mk = |s: f64| RateFitReport {
            epsilon: 0.0,
            gamma1_predicted: 1.0,
            gamma1_literal: 0.5,
            slope_fitted: s,
            fit_window: [0.0, 1.0],
            fit_points: 3,
            r_squared: 1.0,
            amplification_factor: 20.0,
            horizon: 1.0,
            saturated_at: None,
            deviation_mode: DeviationMode::Twin,
            verdict: true,
        };
        assert_eq!(trend_ok(&[mk(0.7)]), None);
        assert_eq!(trend_ok(&[mk(0.7), mk(0.8), mk(0.95)]), Some(true));
        assert_eq!(trend_ok(&[mk(0.9), mk(0.75)]), Some(false));
    }

    #[test]
    fn zero_data_has_zero_residual() {
        let v0 = V0Spec {
            height: 0.0,
            ..Default::default()
        };
        let r = wkb_residual(&ModelParams::default(), &v0, 1e-2, Level::Second, 0.1, 8.0).unwrap();
        assert_eq!(r, 0.0);
    }
}
