//! The localized symbolic flow S̃₀ near the non-transparent resonances and the
//! audit of its Gaussian-in-time growth envelope.
//!
//! Time here is the slow variable of the flow: original time equals
//! ε^{1/4}·t. The flow solves ∂ₜS + ε^{−3/4}M₀(t)S = 0 with
//! M₀ = [[iλ₁, −ε^{3/4}t·b̃₁₂], [−ε^{3/4}t·b̃₂₁, iμ]].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::interaction::{
    bilinear_matrix, gamma1, gamma2, polarization, BilinearId, ResonancePoints,
};
use crate::linalg::{blocks, op_norm3, op_norm6, r, Mat3, Mat6, C64, I};
use crate::model::{Branch, Family, ModeSpec, Model};

/// Quintic smoothstep 6u⁵ − 15u⁴ + 10u³ clamped to [0, 1].
pub fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
}

/// Bump equal to 1 within `radius/2` of `center` and 0 beyond `radius`.
pub fn bump(center: f64, radius: f64, x: f64) -> f64 {
    let d = (x - center).abs();
    1.0 - smoothstep((d - 0.5 * radius) / (0.5 * radius))
}

/// Union of disjoint bumps of common radius h.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffWindow {
    pub centers: Vec<f64>,
    pub h: f64,
}

impl CutoffWindow {
    pub fn new(centers: Vec<f64>, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidParameter {
                name: "window_h",
                value: h,
                reason: "must be positive".into(),
            });
        }
        for (i, a) in centers.iter().enumerate() {
            for b in &centers[i + 1..] {
                if (a - b).abs() < 2.0 * h {
                    return Err(Error::Collision {
                        a: *a,
                        b: *b,
                        tol: 2.0 * h,
                    });
                }
            }
        }
        Ok(CutoffWindow { centers, h })
    }

    pub fn value(&self, xi: f64) -> f64 {
        self.centers
            .iter()
            .map(|&c| bump(c, self.h, xi))
            .fold(0.0, f64::max)
    }

    /// Nearest center to `xi`.
    pub fn nearest(&self, xi: f64) -> f64 {
        *self
            .centers
            .iter()
            .min_by(|a, b| (*a - xi).abs().total_cmp(&(*b - xi).abs()))
            .expect("window without centers")
    }
}

/// Which localized block of the flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowKind {
    /// (+,+): u₊ at ξ+3k against v₊ at ξ.
    Pp,
    /// (−,−): the mirror at −ξ.
    Mm,
    /// (+,0): u₊ at ξ+3k against v₀, one-way coupling.
    P0,
    /// (−,0).
    M0,
}

impl FlowKind {
    pub const ALL: [FlowKind; 4] = [FlowKind::Pp, FlowKind::Mm, FlowKind::P0, FlowKind::M0];

    pub fn name(self) -> &'static str {
        match self {
            FlowKind::Pp => "pp",
            FlowKind::Mm => "mm",
            FlowKind::P0 => "p0",
            FlowKind::M0 => "m0",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pp" => Ok(FlowKind::Pp),
            "mm" => Ok(FlowKind::Mm),
            "p0" => Ok(FlowKind::P0),
            "m0" => Ok(FlowKind::M0),
            _ => Err(Error::Config(format!("unknown flow kind {s:?}"))),
        }
    }

    /// Resonance centers of the kind's frequency window.
    pub fn centers(self, pts: &ResonancePoints) -> Vec<f64> {
        let k = pts.k;
        match self {
            FlowKind::Pp => vec![pts.xi2, pts.xi3],
            FlowKind::Mm => vec![-pts.xi2, -pts.xi3],
            FlowKind::P0 => vec![-6.0 * k],
            FlowKind::M0 => vec![6.0 * k],
        }
    }

    pub fn is_one_way(self) -> bool {
        matches!(self, FlowKind::P0 | FlowKind::M0)
    }
}

/// M₀ at one (x, ξ, t). `lambda1` and `mu` are the frequencies of the upper
/// and lower diagonal blocks (for the mirror and one-way kinds these are
/// −λ(ξ−3k)+3ω, −μ(ξ) or 0 accordingly).
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMatrix {
    pub kind: FlowKind,
    pub lambda1: f64,
    pub mu: f64,
    pub b12: Mat3,
    pub b21: Mat3,
    pub epsilon: f64,
    pub t: f64,
}

impl FlowMatrix {
    /// Raw assembly from the localization weight s = χ(ξ)φ₁(x) and ∂ₜg(0,x).
    pub fn assemble(model: &Model, kind: FlowKind, weight: f64, dtg: C64, xi: f64, t: f64) -> Self {
        let pr = &model.params;
        let k = model.k();
        let om = model.omega();
        let lp = |b, x| pr.projector(ModeSpec::new(Family::L, b), x).0;
        let mp = |b, x| pr.projector(ModeSpec::new(Family::M, b), x).0;
        let fe3 = bilinear_matrix(BilinearId::F, &polarization(model, 3));
        let fem3 = bilinear_matrix(BilinearId::F, &polarization(model, -3));
        let ge3 = bilinear_matrix(BilinearId::G, &polarization(model, 3));
        let gem3 = bilinear_matrix(BilinearId::G, &polarization(model, -3));
        let s = r(weight);
        let lam1 = pr.dispersion(Family::L, xi + 3.0 * k) - 3.0 * om;
        let lam2 = -pr.dispersion(Family::L, xi - 3.0 * k) + 3.0 * om;
        let mu = pr.dispersion(Family::M, xi);
        let (top, bottom, b12, b21) = match kind {
            FlowKind::Pp => {
                let p = lp(Branch::Plus, xi + 3.0 * k);
                let q = mp(Branch::Plus, xi);
                (
                    lam1,
                    mu,
                    p * fe3 * q * s * dtg,
                    q * gem3 * p * s * dtg.conj() * r(2.0),
                )
            }
            FlowKind::Mm => {
                let p = lp(Branch::Minus, xi - 3.0 * k);
                let q = mp(Branch::Minus, xi);
                (
                    lam2,
                    -mu,
                    p * fem3 * q * s * dtg.conj(),
                    q * ge3 * p * s * dtg * r(2.0),
                )
            }
            FlowKind::P0 => {
                let p = lp(Branch::Plus, xi + 3.0 * k);
                let q = mp(Branch::Zero, xi);
                (lam1, 0.0, p * fe3 * q * s * dtg, Mat3::zeros())
            }
            FlowKind::M0 => {
                let p = lp(Branch::Minus, xi - 3.0 * k);
                let q = mp(Branch::Zero, xi);
                (lam2, 0.0, p * fem3 * q * s * dtg.conj(), Mat3::zeros())
            }
        };
        FlowMatrix {
            kind,
            lambda1: top,
            mu: bottom,
            b12,
            b21,
            epsilon: pr.epsilon,
            t,
        }
    }

    pub fn at(&self, t: f64) -> Self {
        FlowMatrix { t, ..self.clone() }
    }

    pub fn matrix(&self) -> Mat6 {
        let c = -self.epsilon.powf(0.75) * self.t;
        blocks(
            &(Mat3::identity() * (I * self.lambda1)),
            &(self.b12 * r(c)),
            &(self.b21 * r(c)),
            &(Mat3::identity() * (I * self.mu)),
        )
    }

    /// tr(b̃₁₂b̃₂₁), real and nonnegative for the resonant kinds.
    pub fn trace(&self) -> C64 {
        (self.b12 * self.b21).trace()
    }

    /// iλ₁, iμ, ν₊, ν₋ with ν± = i(λ₁+μ)/2 ± ½(4ε^{3/2}t²tr − (λ₁−μ)²)^{1/2}.
    pub fn eigvals(&self) -> [C64; 4] {
        let d = self.lambda1 - self.mu;
        let disc = self.trace() * (4.0 * self.epsilon.powf(1.5) * self.t * self.t) - r(d * d);
        let root = disc.sqrt();
        let mid = I * (0.5 * (self.lambda1 + self.mu));
        [
            I * self.lambda1,
            I * self.mu,
            mid + root * 0.5,
            mid - root * 0.5,
        ]
    }

    /// Eigenvalues from a dense complex Schur decomposition.
    pub fn dense_eigvals(&self) -> Vec<C64> {
        self.matrix()
            .schur()
            .eigenvalues()
            .map(|v| v.iter().copied().collect())
            .unwrap_or_default()
    }

    /// b⁺ contribution (|b̃₁₂| + |b̃₂₁|)/2 at this point.
    pub fn rough_rate(&self) -> f64 {
        0.5 * (op_norm3(&self.b12) + op_norm3(&self.b21))
    }
}

/// det[[A,B],[C,D]] via det(AD − CB); valid when A is invertible and AC = CA.
pub fn block_determinant(a: &Mat3, b: &Mat3, cc: &Mat3, d: &Mat3) -> C64 {
    (a * d - cc * b).determinant()
}

/// Integrator controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    pub dt_max: f64,
    /// Steps per oscillation period ε^{3/4}/|λ₁−μ| (as a fraction).
    pub c_osc: f64,
    /// Step-halving relative tolerance.
    pub rtol: f64,
    pub max_halvings: u32,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            dt_max: 1e-2,
            c_osc: 0.05,
            rtol: 1e-8,
            max_halvings: 8,
        }
    }
}

/// S̃₀(τ; t) with the step actually used.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub s: Mat6,
    pub tau: f64,
    pub t: f64,
    pub dt: f64,
}

/// Flow problem at fixed (x, ξ): the b-blocks do not depend on t.
#[derive(Clone, Debug)]
pub struct FlowProblem {
    pub fm: FlowMatrix,
    pub horizon: f64,
}

impl FlowProblem {
    fn delta_rate(&self) -> f64 {
        (self.fm.lambda1 - self.fm.mu) / self.fm.epsilon.powf(0.75)
    }

    /// Interaction-picture generator at absolute time `s`, phase origin `tau`.
    fn generator(&self, s: f64, tau: f64) -> Mat6 {
        let ph = C64::from_polar(1.0, self.delta_rate() * (s - tau));
        let z = Mat3::zeros();
        blocks(
            &z,
            &(self.fm.b12 * (ph * s)),
            &(self.fm.b21 * (ph.conj() * s)),
            &z,
        )
    }

    fn rk4(&self, w: &Mat6, s: f64, h: f64, tau: f64) -> Mat6 {
        let k1 = self.generator(s, tau) * w;
        let k2 = self.generator(s + 0.5 * h, tau) * (w + k1 * r(0.5 * h));
        let k3 = self.generator(s + 0.5 * h, tau) * (w + k2 * r(0.5 * h));
        let k4 = self.generator(s + h, tau) * (w + k3 * r(h));
        w + (k1 + k2 * r(2.0) + k3 * r(2.0) + k4) * r(h / 6.0)
    }

    /// Diagonal phase factor D(t − τ).
    fn phase(&self, elapsed: f64) -> Mat6 {
        let e = self.fm.epsilon.powf(-0.75);
        let a = C64::from_polar(1.0, -e * self.fm.lambda1 * elapsed);
        let b = C64::from_polar(1.0, -e * self.fm.mu * elapsed);
        let mut m = Mat6::zeros();
        for i in 0..3 {
            m[(i, i)] = a;
            m[(i + 3, i + 3)] = b;
        }
        m
    }

    fn base_dt(&self, opts: &FlowOptions) -> f64 {
        let e34 = self.fm.epsilon.powf(0.75);
        let d = (self.fm.lambda1 - self.fm.mu).abs();
        opts.dt_max.min(opts.c_osc * e34 / d.max(e34))
    }

    /// Interaction-picture solution sampled at `times` (sorted, ≥ τ) with a
    /// fixed step no larger than `dt`.
    fn sweep(&self, tau: f64, times: &[f64], dt: f64) -> Vec<Mat6> {
        let mut out = Vec::with_capacity(times.len());
        let mut w = Mat6::identity();
        let mut s = tau;
        for &target in times {
            let span = target - s;
            if span > 0.0 {
                let n = (span / dt).ceil().max(1.0) as usize;
                let h = span / n as f64;
                for _ in 0..n {
                    w = self.rk4(&w, s, h, tau);
                    s += h;
                }
                s = target;
            }
            out.push(w);
        }
        out
    }

    /// S̃₀(τ; t) at each of `times`, refined by step halving until the final
    /// sample changes by less than `rtol` relative.
    pub fn solve_at(&self, tau: f64, times: &[f64], opts: &FlowOptions) -> Result<Vec<FlowState>> {
        if let Some(&last) = times.last() {
            if last > self.horizon * (1.0 + 1e-12) {
                return Err(Error::HorizonExceeded {
                    t: last,
                    limit: self.horizon,
                });
            }
        }
        if times.iter().any(|&t| t < tau) || times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter {
                name: "times",
                value: tau,
                reason: "must be sorted and not before tau".into(),
            });
        }
        let mut dt = self.base_dt(opts);
        let mut coarse = self.sweep(tau, times, dt);
        for _ in 0..opts.max_halvings {
            let fine = self.sweep(tau, times, 0.5 * dt);
            let (a, b) = (coarse.last(), fine.last());
            let converged = match (a, b) {
                (Some(a), Some(b)) => (a - b).norm() <= opts.rtol * b.norm(),
                _ => true,
            };
            dt *= 0.5;
            coarse = fine;
            if converged {
                return Ok(times
                    .iter()
                    .zip(coarse)
                    .map(|(&t, w)| FlowState {
                        s: self.phase(t - tau) * w,
                        tau,
                        t,
                        dt,
                    })
                    .collect());
            }
            if dt < 1e-12 * self.horizon.max(1.0) {
                break;
            }
        }
        Err(Error::StepUnderflow {
            t: times.last().copied().unwrap_or(tau),
            dt,
        })
    }

    pub fn solve(&self, tau: f64, t: f64, opts: &FlowOptions) -> Result<FlowState> {
        Ok(self.solve_at(tau, &[t], opts)?.remove(0))
    }

    /// Closed form e^{−iε^{−3/4}λ₁(t−τ)}·exp((t²−τ²)B/2), B = [[0,b̃₁₂],[b̃₂₁,0]],
    /// valid when λ₁ = μ. Uses rank-one structure: B² = diag(b̃₁₂b̃₂₁, b̃₂₁b̃₁₂)
    /// with each block squaring to tr·block.
    pub fn closed_form(&self, tau: f64, t: f64) -> Mat6 {
        let sft = 0.5 * (t * t - tau * tau);
        let z = Mat3::zeros();
        let b = blocks(&z, &self.fm.b12, &self.fm.b21, &z);
        let b2 = b * b;
        let g = self.fm.trace();
        let id = Mat6::identity();
        let w = if g.norm() < 1e-300 {
            id + b * r(sft) + b2 * r(0.5 * sft * sft)
        } else {
            let q = g.sqrt();
            let ch = (q * sft).cosh();
            let sh = (q * sft).sinh();
            id + b2 * ((ch - 1.0) / g) + b * (sh / q)
        };
        let e = self.fm.epsilon.powf(-0.75);
        w * C64::from_polar(1.0, -e * self.fm.lambda1 * (t - tau))
    }

    /// Same closed form through a general matrix exponential.
    pub fn closed_form_dense(&self, tau: f64, t: f64) -> Mat6 {
        let sft = 0.5 * (t * t - tau * tau);
        let z = Mat3::zeros();
        let b = blocks(&z, &self.fm.b12, &self.fm.b21, &z) * r(sft);
        let e = self.fm.epsilon.powf(-0.75);
        b.exp() * C64::from_polar(1.0, -e * self.fm.lambda1 * (t - tau))
    }
}

/// Everything needed to localize the flow: ∂ₜg(0,·), the spatial cutoff φ₁
/// around x₀ and one frequency window per kind.
#[derive(Clone, Debug)]
pub struct FlowContext {
    pub model: Model,
    pub grid: Grid1D,
    pub dtg0: Vec<C64>,
    pub x0: f64,
    pub phi_radius: f64,
    pub points: ResonancePoints,
    pub h: f64,
    /// Horizon T₁|ln ε|^{1/2}.
    pub horizon: f64,
}

impl FlowContext {
    /// `h = None` selects 0.1·(minimum separation of the resonance set).
    pub fn new(
        model: &Model,
        grid: Grid1D,
        dtg0: Vec<C64>,
        phi_radius: f64,
        h: Option<f64>,
        t1: f64,
    ) -> Result<Self> {
        if dtg0.len() != grid.n {
            return Err(Error::InvalidParameter {
                name: "dtg0",
                value: dtg0.len() as f64,
                reason: "length differs from grid".into(),
            });
        }
        let points = ResonancePoints::compute(model)?;
        let h = match h {
            Some(h) => h,
            None => 0.1 * points.min_separation()?,
        };
        let (j0, _) = dtg0
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .ok_or_else(|| Error::Config("empty grid".into()))?;
        let eps = model.params.epsilon;
        Ok(FlowContext {
            model: *model,
            grid,
            dtg0,
            x0: grid.x(j0),
            phi_radius,
            points,
            h,
            horizon: t1 * eps.ln().abs().sqrt(),
        })
    }

    pub fn window(&self, kind: FlowKind) -> Result<CutoffWindow> {
        CutoffWindow::new(kind.centers(&self.points), self.h)
    }

    pub fn phi1(&self, x: f64) -> f64 {
        bump(self.x0, self.phi_radius, x)
    }

    /// ∂ₜg(0,x) by linear interpolation on the periodic grid.
    pub fn dtg(&self, x: f64) -> C64 {
        let g = &self.grid;
        let u = (x + 0.5 * g.length) / g.dx();
        let j = u.floor();
        let a = u - j;
        let n = g.n as i64;
        let j0 = (j as i64).rem_euclid(n) as usize;
        let j1 = (j as i64 + 1).rem_euclid(n) as usize;
        self.dtg0[j0] * (1.0 - a) + self.dtg0[j1] * a
    }

    pub fn dtg_max(&self) -> f64 {
        self.dtg0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn build_m0(&self, kind: FlowKind, x: f64, xi: f64, t: f64) -> Result<FlowMatrix> {
        let w = self.window(kind)?.value(xi) * self.phi1(x);
        Ok(FlowMatrix::assemble(
            &self.model,
            kind,
            w,
            self.dtg(x),
            xi,
            t,
        ))
    }

    pub fn problem(&self, kind: FlowKind, x: f64, xi: f64) -> Result<FlowProblem> {
        Ok(FlowProblem {
            fm: self.build_m0(kind, x, xi, 0.0)?,
            horizon: self.horizon,
        })
    }

    pub fn integrate_flow(
        &self,
        kind: FlowKind,
        x: f64,
        xi: f64,
        tau: f64,
        t: f64,
        opts: &FlowOptions,
    ) -> Result<FlowState> {
        self.problem(kind, x, xi)?.solve(tau, t, opts)
    }

    /// γ⁺ = |∂ₜg(0,x₀)|·sup over the window of γ₁^{1/2} (γ₂ for the mirror).
    pub fn gamma_plus(&self, kind: FlowKind) -> Result<f64> {
        let win = self.window(kind)?;
        let mut best: f64 = 0.0;
        for &c in &win.centers {
            for i in 0..=400 {
                let xi = c - self.h + 2.0 * self.h * i as f64 / 400.0;
                let g = match kind {
                    FlowKind::Mm => gamma2(&self.model, xi),
                    _ => gamma1(&self.model, xi),
                };
                best = best.max(g);
            }
        }
        Ok(self.dtg(self.x0).norm() * best.sqrt())
    }

    /// b⁺ = sup (|b̃₁₂| + |b̃₂₁|)/2 over supp φ₁ × window, sampled.
    pub fn b_plus(&self, kind: FlowKind) -> Result<f64> {
        let win = self.window(kind)?;
        let mut best: f64 = 0.0;
        for j in 0..=100 {
            let x = self.x0 - self.phi_radius + 2.0 * self.phi_radius * j as f64 / 100.0;
            for &c in &win.centers {
                for i in 0..=100 {
                    let xi = c - self.h + 2.0 * self.h * i as f64 / 100.0;
                    best = best.max(self.build_m0(kind, x, xi, 0.0)?.rough_rate());
                }
            }
        }
        Ok(best)
    }
}

/// Test-stratification regimes for the envelope audit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// tr(b̃₁₂b̃₂₁) below c₀.
    SmallTrace,
    /// The coalescence locus |λ₁−μ| = 2ε^{3/4}t√tr is crossed on the horizon.
    G1,
    /// At the resonance: |λ₁−μ| ≤ c₀ε^{3/4}.
    G2,
    /// Neither.
    G3,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::SmallTrace => "small_trace",
            Regime::G1 => "G1",
            Regime::G2 => "G2",
            Regime::G3 => "G3",
        }
    }
}

pub fn classify_regime(fm: &FlowMatrix, horizon: f64, c0: f64) -> Regime {
    let tr = fm.trace().re;
    let d = (fm.lambda1 - fm.mu).abs();
    let e34 = fm.epsilon.powf(0.75);
    if tr < c0 {
        Regime::SmallTrace
    } else if d <= c0 * e34 {
        Regime::G2
    } else if d <= 2.0 * e34 * horizon * tr.sqrt() {
        Regime::G1
    } else {
        Regime::G3
    }
}

/// Least-squares fit of y ≈ a·t²/2 + b·t + c.
pub fn fit_envelope(ts: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if ts.len() < 4 {
        return Err(Error::Fit("fit window too short".into()));
    }
    let n = ts.len();
    let a = nalgebra::DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 0.5 * ts[i] * ts[i],
        1 => ts[i],
        _ => 1.0,
    });
    let y = nalgebra::DVector::from_column_slice(ys);
    let sol = a
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::Fit(e.to_string()))?;
    Ok((sol[0], sol[1], sol[2]))
}

/// One audited (x, ξ) sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub kind: FlowKind,
    pub x: f64,
    pub xi: f64,
    pub regime: Regime,
    pub a: f64,
    pub b: f64,
    pub gamma_plus: f64,
    pub b_plus: f64,
    /// max over t of ln|S̃₀(0;t)| − t²b⁺/2 (the rough bound needs ≤ 0).
    pub rough_excess: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub epsilon: f64,
    pub horizon: f64,
    pub rows: Vec<EnvelopeRow>,
    pub passed: bool,
}

impl EnvelopeReport {
    pub fn count(&self, regime: Regime) -> usize {
        self.rows.iter().filter(|r| r.regime == regime).count()
    }

    pub fn max_ratio(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.a / r.gamma_plus)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,x,xi,regime,a,b,gamma_plus,b_plus,rough_excess,pass\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.12e},{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.6e},{}\n",
                r.kind.name(),
                r.x,
                r.xi,
                r.regime.name(),
                r.a,
                r.b,
                r.gamma_plus,
                r.b_plus,
                r.rough_excess,
                r.pass
            ));
        }
        s
    }
}

/// A sample point for the audit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub kind: FlowKind,
    pub x: f64,
    pub xi: f64,
}

/// Deterministic sample set for a resonant kind: a tensor grid over
/// supp φ₁ × window plus targeted points on the coalescence locus and at the
/// resonances, so every regime is represented. Points past the coalescence
/// locus are kept only where the plateau reaches that far, which depends on ε.
pub fn stratified_samples(
    ctx: &FlowContext,
    kind: FlowKind,
    n: usize,
    c0: f64,
) -> Result<Vec<Sample>> {
    let win = ctx.window(kind)?;
    let mut out = Vec::with_capacity(n);
    let per = (n / 5).max(1);
    // resonances
    for i in 0..per {
        let c = win.centers[i % win.centers.len()];
        let x = ctx.x0 + 0.2 * ctx.phi_radius * ((i / win.centers.len()) as f64 / per as f64);
        out.push(Sample { kind, x, xi: c });
    }
    // coalescence locus at fractions of the horizon
    for i in 0..per {
        let c = win.centers[i % win.centers.len()];
        let x = ctx.x0 + 0.3 * ctx.phi_radius * ((i / win.centers.len()) as f64 / per as f64);
        let frac = 0.15 + 0.7 * ((i * 7) % per) as f64 / per as f64;
        if let Some(xi) = coalescence_point(ctx, kind, x, c, frac * ctx.horizon)? {
            out.push(Sample { kind, x, xi });
        }
    }
    // small trace: edge of the spatial cutoff and of the frequency window
    for i in 0..per {
        let c = win.centers[i % win.centers.len()];
        let u = (i / win.centers.len()) as f64 / per as f64;
        let (x, xi) = if i % 2 == 0 {
            (
                ctx.x0 + ctx.phi_radius * (0.95 + 0.05 * u),
                c + 0.5 * ctx.h * u,
            )
        } else {
            (ctx.x0 + 0.1 * u, c + ctx.h * (0.97 + 0.03 * u))
        };
        out.push(Sample { kind, x, xi });
    }
    // beyond the coalescence locus of the full horizon, still inside the plateau
    for i in 0..per {
        let c = win.centers[i % win.centers.len()];
        let u = (i / win.centers.len()) as f64 / per as f64;
        let x = ctx.x0 + 0.1 * ctx.phi_radius * u;
        let tc = ctx.horizon * (1.05 + 0.15 * ((i * 3) % per) as f64 / per as f64);
        if let Some(xi) = coalescence_point(ctx, kind, x, c, tc)? {
            let fm = ctx.build_m0(kind, x, xi, 0.0)?;
            if classify_regime(&fm, ctx.horizon, c0) == Regime::G3 {
                out.push(Sample { kind, x, xi });
            }
        }
    }
    // tensor grid for the rest
    let rest = n.saturating_sub(out.len());
    let side = (rest as f64 / win.centers.len() as f64)
        .sqrt()
        .ceil()
        .max(1.0) as usize;
    'grid: for &c in &win.centers {
        for a in 0..side {
            for b in 0..side {
                if out.len() >= n {
                    break 'grid;
                }
                let x =
                    ctx.x0 - ctx.phi_radius + 2.0 * ctx.phi_radius * (a as f64 + 0.5) / side as f64;
                let xi = c - ctx.h + 2.0 * ctx.h * (b as f64 + 0.5) / side as f64;
                out.push(Sample { kind, x, xi });
            }
        }
    }
    Ok(out)
}

/// ξ on the side ξ > center with |λ₁−μ| = 2ε^{3/4}t_c√tr, if inside the plateau.
fn coalescence_point(
    ctx: &FlowContext,
    kind: FlowKind,
    x: f64,
    center: f64,
    tc: f64,
) -> Result<Option<f64>> {
    let f = |xi: f64| -> Result<f64> {
        let fm = ctx.build_m0(kind, x, xi, 0.0)?;
        let e34 = fm.epsilon.powf(0.75);
        Ok((fm.lambda1 - fm.mu).abs() - 2.0 * e34 * tc * fm.trace().re.max(0.0).sqrt())
    };
    let (mut lo, mut hi) = (center, center + 0.5 * ctx.h);
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if flo > 0.0 || fhi < 0.0 {
        return Ok(None);
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Integrate every sample on [0, T], fit the envelope and check the fitted
/// quadratic coefficient against γ⁺ and the rough bound against b⁺.
pub fn growth_envelope_audit(
    ctx: &FlowContext,
    samples: &[Sample],
    gamma_plus: f64,
    b_plus: f64,
    c0: f64,
    opts: &FlowOptions,
) -> Result<EnvelopeReport> {
    let nt = 160;
    let ts: Vec<f64> = (0..=nt)
        .map(|i| ctx.horizon * i as f64 / nt as f64)
        .collect();
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let prob = ctx.problem(s.kind, s.x, s.xi)?;
        let regime = classify_regime(&prob.fm, ctx.horizon, c0);
        let states = prob.solve_at(0.0, &ts, opts)?;
        let ys: Vec<f64> = states.iter().map(|st| op_norm6(&st.s).ln()).collect();
        let (a, b, _) = fit_envelope(&ts, &ys)?;
        let rough_excess = ts
            .iter()
            .zip(&ys)
            .map(|(t, y)| y - 0.5 * t * t * b_plus)
            .fold(f64::NEG_INFINITY, f64::max);
        let pass = a <= gamma_plus * (1.0 + 1e-3) && a <= b_plus && rough_excess <= 1e-9;
        rows.push(EnvelopeRow {
            kind: s.kind,
            x: s.x,
            xi: s.xi,
            regime,
            a,
            b,
            gamma_plus,
            b_plus,
            rough_excess,
            pass,
        });
    }
    let passed = rows.iter().all(|r| r.pass);
    Ok(EnvelopeReport {
        epsilon: ctx.model.params.epsilon,
        horizon: ctx.horizon,
        rows,
        passed,
    })
}

/// Integrator against the closed-form resonant flow at one resonance point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormCheck {
    pub kind: FlowKind,
    pub xi: f64,
    pub t: f64,
    pub rel_error: f64,
    /// Closed form against a general matrix exponential.
    pub dense_rel_error: f64,
}

/// Every resonance point of every kind, at x₀, integrated from 0 to `t`.
pub fn closed_form_checks(
    ctx: &FlowContext,
    t: f64,
    opts: &FlowOptions,
) -> Result<Vec<ClosedFormCheck>> {
    let mut out = Vec::new();
    for kind in FlowKind::ALL {
        for xi in kind.centers(&ctx.points) {
            let p = ctx.problem(kind, ctx.x0, xi)?;
            let st = p.solve(0.0, t, opts)?;
            let cf = p.closed_form(0.0, t);
            let dense = p.closed_form_dense(0.0, t);
            out.push(ClosedFormCheck {
                kind,
                xi,
                t,
                rel_error: (st.s - cf).norm() / cf.norm(),
                dense_rel_error: (dense - cf).norm() / cf.norm(),
            });
        }
    }
    Ok(out)
}

/// Envelope audit over the two-way kinds, `n` samples split between them.
pub fn two_way_envelope_audit(
    ctx: &FlowContext,
    n: usize,
    c0: f64,
    opts: &FlowOptions,
) -> Result<EnvelopeReport> {
    let mut rows = Vec::with_capacity(n);
    for kind in [FlowKind::Pp, FlowKind::Mm] {
        let samples = stratified_samples(ctx, kind, n / 2, c0)?;
        let rep = growth_envelope_audit(
            ctx,
            &samples,
            ctx.gamma_plus(kind)?,
            ctx.b_plus(kind)?,
            c0,
            opts,
        )?;
        rows.extend(rep.rows);
    }
    Ok(EnvelopeReport {
        epsilon: ctx.model.params.epsilon,
        horizon: ctx.horizon,
        passed: rows.iter().all(|r| r.pass),
        rows,
    })
}

/// Audit of a one-way kind under the diagonal rescaling P = diag(c̃₀, 1):
/// the bound |S̃₁(0;t)| ≤ (1/c̃₀)exp(b̃⁺c̃₀t²/2) and the fitted quadratic
/// coefficient of ln|P S̃₁(0;t)|.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneWayAudit {
    pub kind: FlowKind,
    pub x: f64,
    pub xi: f64,
    pub b_tilde_plus: f64,
    pub c0: Vec<f64>,
    /// max over t of ln|S̃₁| − ln(1/c̃₀) − b̃⁺c̃₀t²/2, per c̃₀.
    pub bound_excess: Vec<f64>,
    /// fitted quadratic coefficient of ln|P_{c̃₀}S̃₁|, per c̃₀.
    pub fitted_a: Vec<f64>,
}

pub fn flow_variants(
    ctx: &FlowContext,
    kind: FlowKind,
    x: f64,
    xi: f64,
    c0_sweep: &[f64],
    opts: &FlowOptions,
) -> Result<OneWayAudit> {
    let win = ctx.window(kind)?;
    let mut bt: f64 = 0.0;
    for j in 0..=100 {
        let xx = ctx.x0 - ctx.phi_radius + 2.0 * ctx.phi_radius * j as f64 / 100.0;
        for &c in &win.centers {
            for i in 0..=100 {
                let q = c - ctx.h + 2.0 * ctx.h * i as f64 / 100.0;
                bt = bt.max(op_norm3(&ctx.build_m0(kind, xx, q, 0.0)?.b12));
            }
        }
    }
    let nt = 160;
    let ts: Vec<f64> = (0..=nt)
        .map(|i| ctx.horizon * i as f64 / nt as f64)
        .collect();
    let states = ctx.problem(kind, x, xi)?.solve_at(0.0, &ts, opts)?;
    let mut bound_excess = Vec::new();
    let mut fitted_a = Vec::new();
    for &c in c0_sweep {
        let mut p = Mat6::identity();
        for i in 0..3 {
            p[(i, i)] = r(c);
        }
        let mut worst = f64::NEG_INFINITY;
        let mut ys = Vec::with_capacity(ts.len());
        for (t, st) in ts.iter().zip(&states) {
            let n1 = op_norm6(&st.s).ln();
            worst = worst.max(n1 - (1.0 / c).ln() - 0.5 * bt * c * t * t);
            ys.push(op_norm6(&(p * st.s)).ln());
        }
        bound_excess.push(worst);
        fitted_a.push(fit_envelope(&ts, &ys)?.0);
    }
    Ok(OneWayAudit {
        kind,
        x,
        xi,
        b_tilde_plus: bt,
        c0: c0_sweep.to_vec(),
        bound_excess,
        fitted_a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interaction::{dt_g_at_zero_complete, select_xi0};
    use crate::model::ModelParams;
    use crate::wkb::polarized_data;

    fn ctx(eps: f64) -> FlowContext {
        let m = Model::new(ModelParams {
            epsilon: eps,
            ..Default::default()
        })
        .unwrap();
        let g = Grid1D::new(8.0, 256).unwrap();
        let v0 = polarized_data(&m, &g, |x| C64::new((-x * x).exp(), 0.0));
        let d = dt_g_at_zero_complete(&m, &v0).unwrap();
        FlowContext::new(&m, g, d, 1.0, None, 1.5).unwrap()
    }

    #[test]
    fn smoothstep_window_shape() {
        assert_eq!(bump(0.0, 1.0, 0.0), 1.0);
        assert_eq!(bump(0.0, 1.0, 0.5), 1.0);
        assert_eq!(bump(0.0, 1.0, 1.0), 0.0);
        assert_eq!(bump(0.0, 1.0, 2.0), 0.0);
        let mid = bump(0.0, 1.0, 0.75);
        assert!((mid - 0.5).abs() < 1e-15);
        assert!(CutoffWindow::new(vec![0.0, 0.1], 0.1).is_err());
    }

    #[test]
    fn outside_window_is_block_diagonal() {
        let c = ctx(1e-2);
        let fm = c.build_m0(FlowKind::Pp, c.x0, 0.0, 1.0).unwrap();
        assert_eq!(fm.b12, Mat3::zeros());
        assert_eq!(fm.b21, Mat3::zeros());
    }

    #[test]
    fn trace_equals_gamma1_times_weight() {
        let c = ctx(1e-2);
        for &(x, dxi) in &[(0.0, 0.0), (0.3, 0.01), (-0.45, -0.03)] {
            let xi = c.points.xi2 + dxi;
            let fm = c.build_m0(FlowKind::Pp, x, xi, 1.0).unwrap();
            let w = c.window(FlowKind::Pp).unwrap().value(xi) * c.phi1(x);
            let expect = (w * c.dtg(x).norm()).powi(2) * gamma1(&c.model, xi);
            assert!(
                (fm.trace().re - expect).abs() < 1e-12,
                "{} {}",
                fm.trace(),
                expect
            );
            assert!(fm.trace().im.abs() < 1e-12);
            let fm = c.build_m0(FlowKind::Mm, x, -xi, 1.0).unwrap();
            assert!((fm.trace().re - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenvalue_formula_matches_dense() {
        let c = ctx(1e-2);
        for &(x, dxi, t) in &[(0.0, 0.0, 1.0), (0.2, 0.02, 2.5), (0.1, -0.05, 0.3)] {
            let fm = c.build_m0(FlowKind::Pp, x, c.points.xi2 + dxi, t).unwrap();
            let ev = fm.eigvals();
            let dense = fm.dense_eigvals();
            let mut expect = vec![ev[0], ev[0], ev[1], ev[1], ev[2], ev[3]];
            for d in dense {
                let (i, dist) = expect
                    .iter()
                    .enumerate()
                    .map(|(i, e)| (i, (e - d).norm()))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                assert!(dist < 1e-10, "{d} unmatched, {dist}");
                expect.remove(i);
            }
            assert!((ev[2] + ev[3] - I * (fm.lambda1 + fm.mu)).norm() < 1e-14);
        }
    }

    #[test]
    fn block_determinant_identity() {
        let a = Mat3::new(
            r(2.0),
            C64::new(0.5, 1.0),
            r(0.0),
            r(0.1),
            r(3.0),
            C64::new(0.0, -1.0),
            r(0.0),
            r(0.2),
            r(1.5),
        );
        let cc = a * a * r(0.3) + a * C64::new(0.0, 1.0) + Mat3::identity() * r(2.0);
        let b =
            Mat3::from_fn(|i, j| C64::new((i * 3 + j) as f64 * 0.1, (i as f64 - j as f64) * 0.2));
        let d = Mat3::from_fn(|i, j| C64::new(((i + 2 * j) % 5) as f64, 0.3 * i as f64));
        let full = blocks(&a, &b, &cc, &d).determinant();
        assert!((full - block_determinant(&a, &b, &cc, &d)).norm() < 1e-10 * full.norm().max(1.0));
    }

    #[test]
    fn decoupled_flow_is_pure_phase() {
        let c = ctx(1e-2);
        let st = c
            .integrate_flow(FlowKind::Pp, c.x0, 0.0, 0.0, 2.0, &FlowOptions::default())
            .unwrap();
        assert!((st.s.norm() - 6f64.sqrt()).abs() < 1e-12);
        assert!((op_norm6(&st.s) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_at_resonances() {
        for eps in [1e-2, 1e-3] {
            let c = ctx(eps);
            let opts = FlowOptions::default();
            let cases = [
                (FlowKind::Pp, c.points.xi2),
                (FlowKind::Pp, c.points.xi3),
                (FlowKind::Mm, -c.points.xi2),
                (FlowKind::Mm, -c.points.xi3),
                (FlowKind::P0, -6.0 * c.points.k),
                (FlowKind::M0, 6.0 * c.points.k),
            ];
            for (kind, xi) in cases {
                let p = c.problem(kind, c.x0, xi).unwrap();
                let st = p.solve(0.0, 3.0, &opts).unwrap();
                let cf = p.closed_form(0.0, 3.0);
                let rel = (st.s - cf).norm() / cf.norm();
                assert!(rel < 1e-6, "{kind:?} eps {eps}: {rel}");
                let dense = p.closed_form_dense(0.0, 3.0);
                assert!((dense - cf).norm() / cf.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn resonant_growth_rate_is_gamma1() {
        let c = ctx(1e-2);
        let (xi0, _) = select_xi0(&c.model, (c.points.xi2, c.points.xi3)).unwrap();
        let p = c.problem(FlowKind::Pp, c.x0, xi0).unwrap();
        let ts: Vec<f64> = (0..=100).map(|i| 6.0 + 3.0 * i as f64 / 100.0).collect();
        let ys: Vec<f64> = ts
            .iter()
            .map(|&t| op_norm6(&p.closed_form(0.0, t)).ln())
            .collect();
        let (a, _, _) = fit_envelope(&ts, &ys).unwrap();
        let expect = c.dtg(c.x0).norm() * gamma1(&c.model, xi0).sqrt();
        assert!((a / expect - 1.0).abs() < 1e-2, "{a} vs {expect}");
    }

    #[test]
    fn unitary_conjugation_preserves_norm() {
        let c = ctx(1e-2);
        let mut p = c.problem(FlowKind::Pp, 0.1, c.points.xi2 + 0.01).unwrap();
        let opts = FlowOptions::default();
        let n0 = op_norm6(&p.solve(0.0, 2.0, &opts).unwrap().s);
        let u = C64::from_polar(1.0, 0.7);
        p.fm.b12 *= u;
        p.fm.b21 *= u.conj();
        let n1 = op_norm6(&p.solve(0.0, 2.0, &opts).unwrap().s);
        assert!((n0 - n1).abs() < 1e-8 * n0);
    }

    #[test]
    fn fit_recovers_synthetic_envelope() {
        let ts: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = ts
            .iter()
            .map(|t| 0.37 * t * t / 2.0 - 0.2 * t + 1.5)
            .collect();
        let (a, b, cc) = fit_envelope(&ts, &ys).unwrap();
        assert!((a - 0.37).abs() < 1e-10 && (b + 0.2).abs() < 1e-10 && (cc - 1.5).abs() < 1e-10);
    }

    #[test]
    fn horizon_is_enforced() {
        let c = ctx(1e-2);
        let r = c.integrate_flow(
            FlowKind::Pp,
            0.0,
            c.points.xi2,
            0.0,
            100.0,
            &FlowOptions::default(),
        );
        assert!(matches!(r, Err(Error::HorizonExceeded { .. })));
    }
}
