//! Profiles (trigonometric polynomials in the fast phase with grid-valued
//! amplitudes), the WKB cascade and the transport of the leading amplitudes.
//!
//! Amplitudes follow the harmonic-sum convention: a profile stands for the
//! real field Σ_p a_p(x) e^{ipθ}, θ = (kx − ωt)/ε, with a_{−p} = conj(a_p).
//! The leading terms are u₀,±₃ = g e±₃ and v₀,±₁ = f e±₁.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{upsample, Grid1D, Spectral};
use crate::interaction::{bilinear, check_polarization, polarization, BilinearId};
use crate::linalg::{inner, r, Mat3, Vec3, C64};
use crate::model::{Family, Model};
use crate::solver::FieldState;

/// Largest stored harmonic |p|.
pub const PMAX: i32 = 12;
const SLOTS: usize = (2 * PMAX + 1) as usize;

/// Harmonic coefficients at a single point, p ∈ [−PMAX, PMAX].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Harmonics {
    c: [Vec3; SLOTS],
    /// All coefficients with |p| > span vanish.
    span: i32,
}

impl Default for Harmonics {
    fn default() -> Self {
        Harmonics {
            c: [Vec3::zeros(); SLOTS],
            span: 0,
        }
    }
}

impl Harmonics {
    pub fn get(&self, p: i32) -> Vec3 {
        if p.abs() > PMAX {
            Vec3::zeros()
        } else {
            self.c[(p + PMAX) as usize]
        }
    }

    pub fn set(&mut self, p: i32, v: Vec3) {
        assert!(p.abs() <= PMAX, "harmonic {p} beyond storage");
        self.c[(p + PMAX) as usize] = v;
        if v != Vec3::zeros() {
            self.span = self.span.max(p.abs());
        }
    }

    /// Sets p and −p consistently with reality.
    pub fn set_real(&mut self, p: i32, v: Vec3) {
        self.set(p, v);
        if p != 0 {
            self.set(-p, v.map(|z| z.conj()));
        }
    }

    pub fn span(&self) -> i32 {
        self.span
    }

    pub fn add(&self, o: &Harmonics) -> Harmonics {
        let mut out = *self;
        for s in 0..SLOTS {
            out.c[s] += o.c[s];
        }
        out.span = self.span.max(o.span);
        out
    }

    pub fn scale(&self, a: f64) -> Harmonics {
        let mut out = *self;
        for z in out.c.iter_mut() {
            *z *= r(a);
        }
        out
    }

    /// (out)_p = Σ_{p₁+p₂=p} B(a_{p₁}, b_{p₂}).
    pub fn product(
        b: impl Fn(&Vec3, &Vec3) -> Vec3,
        x: &Harmonics,
        y: &Harmonics,
    ) -> Result<Harmonics> {
        let need = x.span + y.span;
        if need > PMAX {
            return Err(Error::CutoffOverflow {
                needed: need as usize,
                available: PMAX as usize,
            });
        }
        let mut out = Harmonics::default();
        for p1 in -x.span..=x.span {
            let a = x.get(p1);
            if a == Vec3::zeros() {
                continue;
            }
            for p2 in -y.span..=y.span {
                let bb = y.get(p2);
                if bb == Vec3::zeros() {
                    continue;
                }
                let s = (p1 + p2 + PMAX) as usize;
                out.c[s] += b(&a, &bb);
            }
        }
        out.span = need;
        Ok(out)
    }

    /// Max over p of |a_{−p} − conj(a_p)|.
    pub fn reality_defect(&self) -> f64 {
        (0..=PMAX)
            .map(|p| (self.get(-p) - self.get(p).map(|z| z.conj())).norm())
            .fold(0.0, f64::max)
    }
}

/// Grid-valued profile: harmonics at every point of an amplitude grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub points: Vec<Harmonics>,
}

impl Profile {
    pub fn zeros(n: usize) -> Self {
        Profile {
            points: vec![Harmonics::default(); n],
        }
    }

    pub fn harmonic(&self, p: i32) -> Vec<Vec3> {
        self.points.iter().map(|h| h.get(p)).collect()
    }

    pub fn support(&self) -> Vec<i32> {
        (-PMAX..=PMAX)
            .filter(|&p| self.points.iter().any(|h| h.get(p) != Vec3::zeros()))
            .collect()
    }

    pub fn reality_defect(&self) -> f64 {
        self.points
            .iter()
            .map(|h| h.reality_defect())
            .fold(0.0, f64::max)
    }
}

/// Pointwise harmonic product B(a, b) of two profiles.
pub fn profile_bilinear(id: BilinearId, a: &Profile, b: &Profile) -> Result<Profile> {
    let points = a
        .points
        .iter()
        .zip(&b.points)
        .map(|(x, y)| Harmonics::product(|u, v| bilinear(id, u, v), x, y))
        .collect::<Result<Vec<_>>>()?;
    Ok(Profile { points })
}

/// How far the cascade is carried.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    /// u₀, v₀ only.
    Leading,
    /// plus the non-polarized first correctors.
    First,
    /// plus the non-polarized second correctors (needed for an O(√ε) residual).
    Second,
}

/// Everything the cascade produces at one point.
#[derive(Clone, Copy, Debug)]
pub struct PointCascade {
    pub u0: Harmonics,
    pub v0: Harmonics,
    pub u1: Harmonics,
    pub v1: Harmonics,
    pub u2: Harmonics,
    pub v2: Harmonics,
    pub s_g: C64,
    pub s_f: C64,
}

/// Constant matrices used by the cascade, precomputed from the model.
#[derive(Clone, Debug)]
pub struct CascadeOps {
    pub model: Model,
    pub e1: Vec3,
    pub e3: Vec3,
    pub c_g: f64,
    pub c_f: f64,
    l_pinv: Vec<Mat3>,
    m_pinv: Vec<Mat3>,
    a_l: Mat3,
    a_m: Mat3,
}

impl CascadeOps {
    pub fn new(model: &Model) -> Self {
        let l_pinv = (0..=PMAX)
            .map(|p| model.partial_inverse(Family::L, p))
            .collect();
        let m_pinv = (0..=PMAX)
            .map(|p| model.partial_inverse(Family::M, p))
            .collect();
        let e1 = polarization(model, 1);
        let e3 = polarization(model, 3);
        let a_l = model.params.flux(Family::L);
        let a_m = model.params.flux(Family::M);
        let c_g = (e3.adjoint() * a_l * e3)[(0, 0)].re / e3.norm_squared();
        let c_f = (e1.adjoint() * a_m * e1)[(0, 0)].re / e1.norm_squared();
        CascadeOps {
            model: *model,
            e1,
            e3,
            c_g,
            c_f,
            l_pinv,
            m_pinv,
            a_l,
            a_m,
        }
    }

    fn solve(&self, family: Family, rhs: &Harmonics) -> Harmonics {
        let table = match family {
            Family::L => &self.l_pinv,
            Family::M => &self.m_pinv,
        };
        let mut out = Harmonics::default();
        for p in 0..=rhs.span() {
            let v = table[p as usize] * rhs.get(p);
            if p == 0 {
                // the p = 0 partial inverse maps real-structured data to real data
                out.set(0, v);
            } else {
                out.set_real(p, v);
            }
        }
        out
    }

    fn leading(&self, g: C64, f: C64) -> (Harmonics, Harmonics) {
        let mut u0 = Harmonics::default();
        let mut v0 = Harmonics::default();
        u0.set_real(3, self.e3 * g);
        v0.set_real(1, self.e1 * f);
        (u0, v0)
    }

    /// Cascade at one point from (g, f) and their x-derivatives.
    pub fn point(&self, g: C64, f: C64, gx: C64, fx: C64, level: Level) -> PointCascade {
        let bf = |u: &Vec3, v: &Vec3| bilinear(BilinearId::F, u, v);
        let bg = |u: &Vec3, v: &Vec3| bilinear(BilinearId::G, u, v);
        let bh = |u: &Vec3, v: &Vec3| bilinear(BilinearId::H, u, v);
        let prod = |b: &dyn Fn(&Vec3, &Vec3) -> Vec3, x: &Harmonics, y: &Harmonics| {
            Harmonics::product(b, x, y).expect("leading-order products fit the cutoff")
        };
        let (u0, v0) = self.leading(g, f);
        let uv0 = u0.add(&v0);
        let f0 = prod(&bf, &uv0, &v0);
        let gh0 = prod(&bg, &u0, &u0).add(&prod(&bh, &v0, &v0));
        let u1 = self.solve(Family::L, &f0);
        let v1 = self.solve(Family::M, &gh0);
        let f1 = prod(&bf, &u1.add(&v1), &v0).add(&prod(&bf, &uv0, &v1));
        let gh1 = prod(&bg, &u0, &u1).add(&prod(&bh, &v0, &v1)).scale(2.0);
        let s_g = inner(&f1.get(3), &self.e3) / self.e3.norm_squared();
        let s_f = inner(&gh1.get(1), &self.e1) / self.e1.norm_squared();
        let (mut u2, mut v2) = (Harmonics::default(), Harmonics::default());
        if level == Level::Second {
            let (u0x, v0x) = self.leading(gx, fx);
            let mut ru = f1;
            let mut rv = gh1;
            for p in [-3, 3] {
                ru.set(p, ru.get(p) - self.a_l * u0x.get(p));
            }
            for p in [-1, 1] {
                rv.set(p, rv.get(p) - self.a_m * v0x.get(p));
            }
            u2 = self.solve(Family::L, &ru);
            v2 = self.solve(Family::M, &rv);
        }
        if level == Level::Leading {
            return PointCascade {
                u0,
                v0,
                u1: Harmonics::default(),
                v1: Harmonics::default(),
                u2,
                v2,
                s_g,
                s_f,
            };
        }
        PointCascade {
            u0,
            v0,
            u1,
            v1,
            u2,
            v2,
            s_g,
            s_f,
        }
    }

    /// Transport sources (S_g, S_f) at one point.
    pub fn sources(&self, g: C64, f: C64) -> (C64, C64) {
        let z = C64::new(0.0, 0.0);
        let pc = self.point(g, f, z, z, Level::First);
        (pc.s_g, pc.s_f)
    }
}

/// Transport state of the leading amplitudes on a periodic amplitude grid.
#[derive(Clone, Debug)]
pub struct WkbSolution {
    pub ops: CascadeOps,
    pub grid: Grid1D,
    pub g: Vec<C64>,
    pub f: Vec<C64>,
    pub t: f64,
    /// Validity horizon in time.
    pub horizon: f64,
    /// Disables the transport sources (pure advection).
    pub advection_only: bool,
    sp: Spectral,
}

/// Blow-up guard on the amplitudes.
const AMPLITUDE_GUARD: f64 = 1e6;

impl WkbSolution {
    /// Leading-order data at t = 0: v₀,₁ = v⁰, u₀,₃ = 0, zero mean modes.
    pub fn cascade_init(model: &Model, grid: Grid1D, v0: &[Vec3], horizon: f64) -> Result<Self> {
        if v0.len() != grid.n {
            return Err(Error::Support(format!(
                "v0 has {} samples, grid has {}",
                v0.len(),
                grid.n
            )));
        }
        check_polarization(model, v0)?;
        let ops = CascadeOps::new(model);
        let n1 = ops.e1.norm_squared();
        let f = v0.iter().map(|v| inner(v, &ops.e1) / n1).collect();
        Ok(WkbSolution {
            ops,
            grid,
            g: vec![C64::new(0.0, 0.0); grid.n],
            f,
            t: 0.0,
            horizon,
            advection_only: false,
            sp: Spectral::new(grid.n),
        })
    }

    pub fn model(&self) -> &Model {
        &self.ops.model
    }

    fn sources(&self, g: &[C64], f: &[C64]) -> (Vec<C64>, Vec<C64>) {
        if self.advection_only {
            let z = vec![C64::new(0.0, 0.0); g.len()];
            return (z.clone(), z);
        }
        g.iter()
            .zip(f)
            .map(|(&a, &b)| self.ops.sources(a, b))
            .unzip()
    }

    /// ∂ₜg and ∂ₜf from the transport equations at the current state.
    pub fn time_derivatives(&self) -> (Vec<C64>, Vec<C64>) {
        let (sg, sf) = self.sources(&self.g, &self.f);
        let gx = self.sp.derivative(&self.grid, &self.g);
        let fx = self.sp.derivative(&self.grid, &self.f);
        let dg = sg
            .iter()
            .zip(&gx)
            .map(|(s, d)| s - d * self.ops.c_g)
            .collect();
        let df = sf
            .iter()
            .zip(&fx)
            .map(|(s, d)| s - d * self.ops.c_f)
            .collect();
        (dg, df)
    }

    /// Integrating-factor RK4: advection exact in Fourier, sources explicit.
    pub fn transport_advance(&mut self, dt: f64, n_steps: usize) -> Result<()> {
        let limit = self.grid.dx() / self.ops.c_g.abs().max(self.ops.c_f.abs()).max(1e-300);
        if !(dt < limit) {
            return Err(Error::Cfl { dt, limit });
        }
        if self.t + dt * n_steps as f64 > self.horizon * (1.0 + 1e-12) {
            return Err(Error::HorizonExceeded {
                t: self.t + dt * n_steps as f64,
                limit: self.horizon,
            });
        }
        for _ in 0..n_steps {
            self.rk4_step(dt);
            self.t += dt;
            let m = self
                .g
                .iter()
                .chain(&self.f)
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            if !m.is_finite() {
                return Err(Error::NonFinite { t: self.t });
            }
            if m > AMPLITUDE_GUARD {
                return Err(Error::BlowUp {
                    t: self.t,
                    amplitude: m,
                });
            }
        }
        Ok(())
    }

    /// Advances to `t_target` in equal steps no longer than `dt_max`.
    pub fn advance_to(&mut self, t_target: f64, dt_max: f64) -> Result<()> {
        let span = t_target - self.t;
        if span <= 0.0 {
            return Ok(());
        }
        let n = (span / dt_max).ceil().max(1.0) as usize;
        self.transport_advance(span / n as f64, n)
    }

    fn rk4_step(&mut self, h: f64) {
        let n = self.grid.n;
        let kappa = self.grid.wavenumbers();
        let fwd = |v: &[C64]| {
            let mut b = v.to_vec();
            self.sp.forward(&mut b);
            b
        };
        let inv = |v: &[C64]| {
            let mut b = v.to_vec();
            self.sp.inverse(&mut b);
            b
        };
        let (cg, cf) = (self.ops.c_g, self.ops.c_f);
        // E(s) = exp(−i c κ s)
        let shift = |hat: &[C64], c: f64, s: f64| -> Vec<C64> {
            hat.iter()
                .zip(&kappa)
                .map(|(z, k)| z * C64::from_polar(1.0, -c * k * s))
                .collect()
        };
        let rhs = |g: &[C64], f: &[C64]| -> (Vec<C64>, Vec<C64>) {
            let (sg, sf) = self.sources(g, f);
            (fwd(&sg), fwd(&sf))
        };
        let g0 = fwd(&self.g);
        let f0 = fwd(&self.f);
        let axpy = |base: &[C64], k: &[C64], a: f64| -> Vec<C64> {
            base.iter()
                .zip(k)
                .map(|(b, x)| b + x * a)
                .collect::<Vec<_>>()
        };
        let (k1g, k1f) = rhs(&self.g, &self.f);
        // stage values live in the frame shifted by h/2
        let g_half = shift(&g0, cg, 0.5 * h);
        let f_half = shift(&f0, cf, 0.5 * h);
        let k1g_h = shift(&k1g, cg, 0.5 * h);
        let k1f_h = shift(&k1f, cf, 0.5 * h);
        let a_g = axpy(&g_half, &k1g_h, 0.5 * h);
        let a_f = axpy(&f_half, &k1f_h, 0.5 * h);
        let (k2g, k2f) = rhs(&inv(&a_g), &inv(&a_f));
        let b_g = axpy(&g_half, &k2g, 0.5 * h);
        let b_f = axpy(&f_half, &k2f, 0.5 * h);
        let (k3g, k3f) = rhs(&inv(&b_g), &inv(&b_f));
        let c_g = axpy(&shift(&g_half, cg, 0.5 * h), &shift(&k3g, cg, 0.5 * h), h);
        let c_f = axpy(&shift(&f_half, cf, 0.5 * h), &shift(&k3f, cf, 0.5 * h), h);
        let (k4g, k4f) = rhs(&inv(&c_g), &inv(&c_f));
        let combine = |y0: &[C64], k1: &[C64], k2: &[C64], k3: &[C64], k4: &[C64], c: f64| {
            let full = shift(y0, c, h);
            let e1 = shift(k1, c, h);
            let e2 = shift(k2, c, 0.5 * h);
            let e3 = shift(k3, c, 0.5 * h);
            (0..n)
                .map(|s| full[s] + (e1[s] + (e2[s] + e3[s]) * 2.0 + k4[s]) * (h / 6.0))
                .collect::<Vec<_>>()
        };
        let gn = combine(&g0, &k1g, &k2g, &k3g, &k4g, cg);
        let fnew = combine(&f0, &k1f, &k2f, &k3f, &k4f, cf);
        self.g = inv(&gn);
        self.f = inv(&fnew);
    }

    /// Profiles (u, v) summed through `level` with the √ε weights, on the
    /// amplitude grid.
    pub fn profiles(&self, level: Level) -> (Profile, Profile) {
        let eps = self.model().params.epsilon;
        let gx = self.sp.derivative(&self.grid, &self.g);
        let fx = self.sp.derivative(&self.grid, &self.f);
        let mut u = Profile::zeros(self.grid.n);
        let mut v = Profile::zeros(self.grid.n);
        for j in 0..self.grid.n {
            let pc = self.ops.point(self.g[j], self.f[j], gx[j], fx[j], level);
            let (a, b) = combine_levels(&pc, eps);
            u.points[j] = a;
            v.points[j] = b;
        }
        (u, v)
    }

    /// Real fields (u^a, v^a) on `fine` at the current time.
    pub fn evaluate(&self, fine: &Grid1D, level: Level) -> Result<FieldState> {
        Ok(self.evaluate_with_derivative(fine, level, false)?.0)
    }

    /// Fields and (optionally) their time derivatives. The carrier derivative
    /// is analytic; the slow amplitudes are differentiated by a central
    /// difference along the transport flow.
    pub fn evaluate_with_derivative(
        &self,
        fine: &Grid1D,
        level: Level,
        with_dt: bool,
    ) -> Result<(FieldState, Option<FieldState>)> {
        let model = self.model();
        let eps = model.params.epsilon;
        if (fine.length - self.grid.length).abs() > 1e-12 * fine.length {
            return Err(Error::Support(format!(
                "evaluation grid length {} differs from amplitude grid length {}",
                fine.length, self.grid.length
            )));
        }
        let m = fine.check_snapped(model.k() / eps)?;
        let fine_sp = Spectral::new(fine.n);
        let up = |v: &[C64]| upsample(v, fine.n);
        let g = up(&self.g);
        let f = up(&self.f);
        let gx = fine_sp.derivative(fine, &g);
        let fx = fine_sp.derivative(fine, &f);
        let (dg, df, dgx, dfx) = if with_dt {
            let (dg, df) = self.time_derivatives();
            let dg = up(&dg);
            let df = up(&df);
            let dgx = fine_sp.derivative(fine, &dg);
            let dfx = fine_sp.derivative(fine, &df);
            (dg, df, dgx, dfx)
        } else {
            (vec![], vec![], vec![], vec![])
        };
        let n = fine.n;
        let wt = model.omega() * self.t / eps;
        let mut out = FieldState::zeros(n, self.t);
        let mut dout = FieldState::zeros(n, self.t);
        let mut max_imag: f64 = 0.0;
        let delta = 1e-4;
        let w_eps = model.omega() / eps;
        for j in 0..n {
            // kx_j/ε = 2π m j/n − π m exactly
            let mj = ((m.rem_euclid(fine.n as i64) as u128 * j as u128) % n as u128) as f64;
            let theta = 2.0 * std::f64::consts::PI * mj / n as f64
                - std::f64::consts::PI * (m.rem_euclid(2) as f64)
                - wt;
            let carrier = C64::from_polar(1.0, theta);
            let pc = self.ops.point(g[j], f[j], gx[j], fx[j], level);
            let (hu, hv) = combine_levels(&pc, eps);
            let (fu, iu) = synthesize(&hu, carrier);
            let (fv, iv) = synthesize(&hv, carrier);
            max_imag = max_imag.max(iu).max(iv);
            for c in 0..3 {
                out.u[c][j] = fu[c];
                out.v[c][j] = fv[c];
            }
            if with_dt {
                let plus = self.ops.point(
                    g[j] + dg[j] * delta,
                    f[j] + df[j] * delta,
                    gx[j] + dgx[j] * delta,
                    fx[j] + dfx[j] * delta,
                    level,
                );
                let minus = self.ops.point(
                    g[j] - dg[j] * delta,
                    f[j] - df[j] * delta,
                    gx[j] - dgx[j] * delta,
                    fx[j] - dfx[j] * delta,
                    level,
                );
                let (pu, pv) = combine_levels(&plus, eps);
                let (mu_, mv) = combine_levels(&minus, eps);
                let du = pu.add(&mu_.scale(-1.0)).scale(0.5 / delta);
                let dv = pv.add(&mv.scale(-1.0)).scale(0.5 / delta);
                let (su, _) = synthesize_dt(&hu, &du, carrier, w_eps);
                let (sv, _) = synthesize_dt(&hv, &dv, carrier, w_eps);
                for c in 0..3 {
                    dout.u[c][j] = su[c];
                    dout.v[c][j] = sv[c];
                }
            }
        }
        if max_imag > 1e-12 {
            return Err(Error::Support(format!(
                "assembled WKB field is not real (imaginary part {max_imag:e})"
            )));
        }
        Ok((out, with_dt.then_some(dout)))
    }

    /// ‖(g, f)‖_{L²}.
    pub fn amplitude_norm(&self) -> f64 {
        let s: f64 = self.g.iter().chain(&self.f).map(|z| z.norm_sqr()).sum();
        (s * self.grid.dx()).sqrt()
    }

    /// Writes `<stem>.json` (header) and `<stem>.tsv` (x, Re/Im of g and f).
    pub fn write_snapshot(&self, dir: &Path, stem: &str, config_hash: &str) -> Result<()> {
        let header = serde_json::json!({
            "format": "slowinst-wkb-snapshot",
            "version": 1,
            "phase": self.model().phase,
            "epsilon": self.model().params.epsilon,
            "t": self.t,
            "order": 0,
            "grid": self.grid,
            "config_hash": config_hash,
            "columns": ["x", "re_g", "im_g", "re_f", "im_f"],
        });
        std::fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&header)?,
        )?;
        let mut w =
            std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.tsv")))?);
        writeln!(w, "# config_hash {config_hash}")?;
        writeln!(w, "x\tre_g\tim_g\tre_f\tim_f")?;
        for j in 0..self.grid.n {
            writeln!(
                w,
                "{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}",
                self.grid.x(j),
                self.g[j].re,
                self.g[j].im,
                self.f[j].re,
                self.f[j].im
            )?;
        }
        Ok(())
    }
}

fn combine_levels(pc: &PointCascade, eps: f64) -> (Harmonics, Harmonics) {
    let s = eps.sqrt();
    let u = pc.u0.add(&pc.u1.scale(s)).add(&pc.u2.scale(eps));
    let v = pc.v0.add(&pc.v1.scale(s)).add(&pc.v2.scale(eps));
    (u, v)
}

/// Σ_p a_p e^{ipθ}; returns the real part and the size of the imaginary part.
fn synthesize(h: &Harmonics, carrier: C64) -> ([f64; 3], f64) {
    let mut acc = Vec3::zeros();
    let span = h.span();
    let mut pw = C64::new(1.0, 0.0);
    let cinv = carrier.conj();
    let mut pw_neg = C64::new(1.0, 0.0);
    acc += h.get(0);
    for p in 1..=span {
        pw *= carrier;
        pw_neg *= cinv;
        acc += h.get(p) * pw + h.get(-p) * pw_neg;
    }
    let scale = 1.0 + acc.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    let imag = acc.iter().map(|z| z.im.abs()).fold(0.0, f64::max) / scale;
    ([acc[0].re, acc[1].re, acc[2].re], imag)
}

/// ∂ₜ Σ_p a_p e^{ipθ} = Σ_p (∂ₜa_p − ipω/ε a_p) e^{ipθ}.
fn synthesize_dt(h: &Harmonics, dh: &Harmonics, carrier: C64, w_eps: f64) -> ([f64; 3], f64) {
    let mut mixed = Harmonics::default();
    let span = h.span().max(dh.span());
    for p in -span..=span {
        let v = dh.get(p) - h.get(p) * C64::new(0.0, p as f64 * w_eps);
        if v != Vec3::zeros() {
            mixed.set(p, v);
        }
    }
    synthesize(&mixed, carrier)
}

/// Leading-order data v⁰ = a(x) e₁ sampled on `grid`.
pub fn polarized_data(model: &Model, grid: &Grid1D, profile: impl Fn(f64) -> C64) -> Vec<Vec3> {
    let e1 = polarization(model, 1);
    grid.xs().iter().map(|&x| e1 * profile(x)).collect()
}
