//! Pseudospectral Lawson–RK4 integrator for the full system
//!
//! ```text
//! ∂ₜu + A_L ∂ₓu + A₀ᴸ u/ε = ε^{-1/2} (0, (u₃+v₃)v₃, 0)
//! ∂ₜv + A_M ∂ₓv + A₀ᴹ v/ε = ε^{-1/2} (0, v₂² − u₂², 0)
//! ```
//!
//! on a periodic grid. Each Fourier mode is rotated exactly by its 3×3 block
//! propagator; the nonlinearity is evaluated pointwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid1D, Spectral};
use crate::linalg::{Mat3, Vec3, C64};
use crate::model::{Family, ModeSpec, Model, ModelParams};

/// Real 6-component grid field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub u: [Vec<f64>; 3],
    pub v: [Vec<f64>; 3],
    pub t: f64,
}

impl FieldState {
    pub fn zeros(n: usize, t: f64) -> Self {
        let z = vec![0.0; n];
        FieldState {
            u: [z.clone(), z.clone(), z.clone()],
            v: [z.clone(), z.clone(), z],
            t,
        }
    }

    pub fn len(&self) -> usize {
        self.u[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn components(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.u.iter().chain(self.v.iter())
    }

    pub fn l2_norm(&self, grid: &Grid1D) -> f64 {
        grid.l2_norm(self.components().flatten().copied())
    }

    pub fn linf_norm(&self) -> f64 {
        self.components()
            .flatten()
            .fold(0.0, |m: f64, x| m.max(x.abs()))
    }

    /// self − other, componentwise.
    pub fn minus(&self, other: &FieldState) -> FieldState {
        let mut out = self.clone();
        for (a, b) in out
            .u
            .iter_mut()
            .zip(&other.u)
            .chain(out.v.iter_mut().zip(&other.v))
        {
            for (x, y) in a.iter_mut().zip(b) {
                *x -= y;
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &FieldState, a: f64) {
        for (x, y) in self
            .u
            .iter_mut()
            .zip(&other.u)
            .chain(self.v.iter_mut().zip(&other.v))
        {
            for (p, q) in x.iter_mut().zip(y) {
                *p += a * q;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub grid: Grid1D,
    pub dt: f64,
    pub t_end: f64,
    pub dealias: bool,
    /// Switch for the nonlinear source (off gives the linear flow).
    pub nonlinear: bool,
}

/// Spectral state: six complex Fourier coefficients per mode.
pub type SpectralState = Vec<[C64; 6]>;

const BLOWUP: f64 = 1e8;

/// exp(−dt·N(εξ)/ε) for one block, from the spectral decomposition at η = εξ.
pub fn linear_propagator(params: &ModelParams, family: Family, xi_phys: f64, dt: f64) -> Mat3 {
    let eps = params.epsilon;
    let eta = eps * xi_phys;
    let mut out = Mat3::zeros();
    for mode in ModeSpec::all().iter().filter(|m| m.family == family) {
        let l = params.branch_dispersion(*mode, eta);
        let ph = C64::from_polar(1.0, -dt * l / eps);
        out += params.projector(*mode, eta).0 * ph;
    }
    out
}

pub struct Solver {
    pub model: Model,
    pub cfg: SolverConfig,
    sp: Spectral,
    full: Vec<[Mat3; 2]>,
    half: Vec<[Mat3; 2]>,
    keep: Vec<bool>,
    scratch_a: Vec<C64>,
    scratch_b: Vec<C64>,
}

impl Solver {
    pub fn new(model: &Model, cfg: SolverConfig) -> Result<Self> {
        if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                value: cfg.dt,
                reason: "must be positive".into(),
            });
        }
        let grid = cfg.grid;
        let n = grid.n;
        let ks = grid.wavenumbers();
        let p = &model.params;
        let prop = |h: f64| -> Vec<[Mat3; 2]> {
            ks.iter()
                .map(|&k| {
                    [
                        linear_propagator(p, Family::L, k, h),
                        linear_propagator(p, Family::M, k, h),
                    ]
                })
                .collect()
        };
        let keep = (0..n)
            .map(|s| !cfg.dealias || 3 * grid.mode_index(s).unsigned_abs() as usize <= n)
            .collect();
        Ok(Solver {
            model: *model,
            cfg,
            sp: Spectral::new(n),
            full: prop(cfg.dt),
            half: prop(0.5 * cfg.dt),
            keep,
            scratch_a: vec![C64::new(0.0, 0.0); n],
            scratch_b: vec![C64::new(0.0, 0.0); n],
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.cfg.grid
    }

    pub fn to_spectral(&self, f: &FieldState) -> SpectralState {
        let n = self.cfg.grid.n;
        let mut out = vec![[C64::new(0.0, 0.0); 6]; n];
        let comps: Vec<&Vec<f64>> = f.components().collect();
        for pair in 0..3 {
            let (a, b) = (comps[2 * pair], comps[2 * pair + 1]);
            let mut buf: Vec<C64> = a.iter().zip(b).map(|(x, y)| C64::new(*x, *y)).collect();
            self.sp.forward(&mut buf);
            for s in 0..n {
                let z = buf[s];
                let zc = buf[(n - s) % n].conj();
                out[s][2 * pair] = (z + zc) * 0.5;
                out[s][2 * pair + 1] = (z - zc) * C64::new(0.0, -0.5);
            }
        }
        if self.cfg.dealias {
            for (s, row) in out.iter_mut().enumerate() {
                if !self.keep[s] {
                    *row = [C64::new(0.0, 0.0); 6];
                }
            }
        }
        out
    }

    pub fn to_physical(&self, s: &SpectralState, t: f64) -> FieldState {
        let n = self.cfg.grid.n;
        let mut out = FieldState::zeros(n, t);
        for pair in 0..3 {
            let mut buf: Vec<C64> = s
                .iter()
                .map(|row| row[2 * pair] + row[2 * pair + 1] * C64::new(0.0, 1.0))
                .collect();
            self.sp.inverse(&mut buf);
            let (ca, cb) = (2 * pair, 2 * pair + 1);
            for (j, z) in buf.iter().enumerate() {
                set_comp(&mut out, ca, j, z.re);
                set_comp(&mut out, cb, j, z.im);
            }
        }
        out
    }

    /// Pseudospectral nonlinearity; returns max |field| seen for the guards.
    fn nonlinearity(&mut self, s: &SpectralState, out: &mut SpectralState) -> f64 {
        let n = self.cfg.grid.n;
        if !self.cfg.nonlinear {
            for row in out.iter_mut() {
                *row = [C64::new(0.0, 0.0); 6];
            }
            return 0.0;
        }
        let i = C64::new(0.0, 1.0);
        // (u₂, u₃) and (v₂, v₃) packed into one complex transform each
        for (slot, row) in s.iter().enumerate() {
            self.scratch_a[slot] = row[1] + i * row[2];
            self.scratch_b[slot] = row[4] + i * row[5];
        }
        self.sp.inverse(&mut self.scratch_a);
        self.sp.inverse(&mut self.scratch_b);
        let c = 1.0 / self.model.params.epsilon.sqrt();
        let mut peak: f64 = 0.0;
        for j in 0..n {
            let (u2, u3) = (self.scratch_a[j].re, self.scratch_a[j].im);
            let (v2, v3) = (self.scratch_b[j].re, self.scratch_b[j].im);
            peak = peak.max(u2.abs()).max(u3.abs()).max(v2.abs()).max(v3.abs());
            let nu = c * (u3 + v3) * v3;
            let nv = c * (v2 * v2 - u2 * u2);
            self.scratch_a[j] = C64::new(nu, nv);
        }
        if !peak.is_finite() {
            peak = f64::NAN;
        }
        self.sp.forward(&mut self.scratch_a);
        let z0 = C64::new(0.0, 0.0);
        for sl in 0..n {
            let row = &mut out[sl];
            *row = [z0; 6];
            if !self.keep[sl] {
                continue;
            }
            let z = self.scratch_a[sl];
            let zc = self.scratch_a[(n - sl) % n].conj();
            row[1] = (z + zc) * 0.5;
            row[4] = (z - zc) * C64::new(0.0, -0.5);
        }
        peak
    }

    fn rotate(table: &[[Mat3; 2]], s: &SpectralState) -> SpectralState {
        s.iter()
            .zip(table)
            .map(|(row, m)| {
                let a = m[0] * Vec3::new(row[0], row[1], row[2]);
                let b = m[1] * Vec3::new(row[3], row[4], row[5]);
                [a[0], a[1], a[2], b[0], b[1], b[2]]
            })
            .collect()
    }

    /// One Lawson–RK4 step of size cfg.dt.
    pub fn step(&mut self, s: &SpectralState, t: f64) -> Result<SpectralState> {
        let h = self.cfg.dt;
        let n = s.len();
        let z0 = [C64::new(0.0, 0.0); 6];
        let mut k1 = vec![z0; n];
        let peak = self.nonlinearity(s, &mut k1);
        guard(peak, t)?;
        let eh_s = Self::rotate(&self.half, s);
        let a: SpectralState = Self::rotate(&self.half, &axpy(s, &k1, 0.5 * h));
        let mut k2 = vec![z0; n];
        guard(self.nonlinearity(&a, &mut k2), t)?;
        let b = axpy(&eh_s, &k2, 0.5 * h);
        let mut k3 = vec![z0; n];
        guard(self.nonlinearity(&b, &mut k3), t)?;
        let c = axpy(
            &Self::rotate(&self.half, &eh_s),
            &Self::rotate(&self.half, &k3),
            h,
        );
        let mut k4 = vec![z0; n];
        guard(self.nonlinearity(&c, &mut k4), t)?;
        let full_s = Self::rotate(&self.full, s);
        let e_k1 = Self::rotate(&self.full, &k1);
        let e_k23 = Self::rotate(&self.half, &axpy(&k2, &k3, 1.0));
        let mut out = full_s;
        for sl in 0..n {
            for q in 0..6 {
                out[sl][q] += (e_k1[sl][q] + e_k23[sl][q] * 2.0 + k4[sl][q]) * (h / 6.0);
            }
        }
        if out
            .iter()
            .any(|row| row.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()))
        {
            return Err(Error::NonFinite { t: t + h });
        }
        Ok(out)
    }

    /// Advances to cfg.t_end, calling `observe` at t = 0 and every `stride`
    /// steps (and at the final step). The observer may abort by returning an error.
    pub fn run(
        &mut self,
        initial: &FieldState,
        stride: usize,
        mut observe: impl FnMut(&Solver, &SpectralState, f64) -> Result<()>,
    ) -> Result<(SpectralState, f64)> {
        let steps = (self.cfg.t_end / self.cfg.dt).round() as usize;
        let mut s = self.to_spectral(initial);
        let mut t = initial.t;
        observe(self, &s, t)?;
        for n in 1..=steps {
            s = self.step(&s, t)?;
            t = initial.t + n as f64 * self.cfg.dt;
            if n % stride.max(1) == 0 || n == steps {
                observe(self, &s, t)?;
            }
        }
        Ok((s, t))
    }

    /// Runs and records (t, L², L∞) at the stride.
    pub fn run_norms(
        &mut self,
        initial: &FieldState,
        stride: usize,
    ) -> Result<Vec<(f64, f64, f64)>> {
        let mut rows = Vec::new();
        self.run(initial, stride, |sv, s, t| {
            let f = sv.to_physical(s, t);
            rows.push((t, f.l2_norm(sv.grid()), f.linf_norm()));
            Ok(())
        })?;
        Ok(rows)
    }

    /// Discrete residual of the system for a field and its time derivative:
    /// ∂ₜU + A∂ₓU + A₀U/ε − N(U), evaluated with the solver's operators
    /// (no dealiasing, so products are exact on the grid).
    pub fn residual(&self, field: &FieldState, dt_field: &FieldState) -> FieldState {
        let grid = self.cfg.grid;
        let eps = self.model.params.epsilon;
        let p = &self.model.params;
        let n = grid.n;
        let dx = |f: &Vec<f64>| -> Vec<f64> {
            let c: Vec<C64> = f.iter().map(|x| C64::new(*x, 0.0)).collect();
            self.sp.derivative(&grid, &c).iter().map(|z| z.re).collect()
        };
        let mut out = dt_field.clone();
        let (al, am) = (p.mass(Family::L), p.mass(Family::M));
        let th = p.theta0;
        let u1x = dx(&field.u[0]);
        let u2x = dx(&field.u[1]);
        let v1x = dx(&field.v[0]);
        let v2x = dx(&field.v[1]);
        let c = 1.0 / eps.sqrt();
        for j in 0..n {
            let (u1, u2, u3) = (field.u[0][j], field.u[1][j], field.u[2][j]);
            let (v1, v2, v3) = (field.v[0][j], field.v[1][j], field.v[2][j]);
            let _ = (u1, v1);
            out.u[0][j] += u2x[j];
            out.u[1][j] += u1x[j] + al * u3 / eps - c * (u3 + v3) * v3;
            out.u[2][j] += -al * u2 / eps;
            out.v[0][j] += th * v2x[j];
            out.v[1][j] += th * v1x[j] + am * v3 / eps - c * (v2 * v2 - u2 * u2);
            out.v[2][j] += -am * v2 / eps;
        }
        out
    }
}

fn set_comp(f: &mut FieldState, c: usize, j: usize, x: f64) {
    if c < 3 {
        f.u[c][j] = x;
    } else {
        f.v[c - 3][j] = x;
    }
}

fn axpy(a: &SpectralState, b: &SpectralState, h: f64) -> SpectralState {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let mut r = *x;
            for q in 0..6 {
                r[q] += y[q] * h;
            }
            r
        })
        .collect()
}

fn guard(peak: f64, t: f64) -> Result<()> {
    if peak.is_nan() {
        return Err(Error::NonFinite { t });
    }
    if peak > BLOWUP {
        return Err(Error::BlowUp { t, amplitude: peak });
    }
    Ok(())
}

/// Degenerate Cauchy–Riemann toy problem ∂ₜw + i t ε^{-1/2} ∂ₓw = 0, solved
/// per Fourier mode by classical RK4: ŵ' = t ξ ε^{-1/2} ŵ.
pub fn toy_cauchy_riemann(w0: C64, xi: f64, epsilon: f64, t_end: f64, dt: f64) -> Vec<(f64, C64)> {
    let c = xi / epsilon.sqrt();
    let f = |t: f64, w: C64| w * (t * c);
    let steps = (t_end / dt).round() as usize;
    let mut w = w0;
    let mut out = Vec::with_capacity(steps + 1);
    out.push((0.0, w));
    for n in 0..steps {
        let t = n as f64 * dt;
        let k1 = f(t, w);
        let k2 = f(t + 0.5 * dt, w + k1 * (0.5 * dt));
        let k3 = f(t + 0.5 * dt, w + k2 * (0.5 * dt));
        let k4 = f(t + dt, w + k3 * dt);
        w += (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
        out.push(((n + 1) as f64 * dt, w));
    }
    out
}

/// exp(t²ξ/(2√ε)) w₀.
pub fn toy_exact(w0: C64, xi: f64, epsilon: f64, t: f64) -> C64 {
    w0 * (t * t * xi / (2.0 * epsilon.sqrt())).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::op_norm3;

    fn model(eps: f64) -> Model {
        Model::new(ModelParams {
            epsilon: eps,
            ..ModelParams::default()
        })
        .unwrap()
    }

    fn smooth_data(grid: &Grid1D, amp: f64) -> FieldState {
        let mut f = FieldState::zeros(grid.n, 0.0);
        for (j, x) in grid.xs().iter().enumerate() {
            let b = amp * (-x * x).exp();
            f.u[0][j] = b * (2.0 * x).cos();
            f.u[1][j] = 0.5 * b;
            f.u[2][j] = b * x;
            f.v[0][j] = -0.3 * b;
            f.v[1][j] = b * (x).sin();
            f.v[2][j] = 0.7 * b;
        }
        f
    }

    #[test]
    fn propagator_identity_unitary_composition() {
        let p = ModelParams::default();
        for fam in Family::ALL {
            for xi in [-300.0, -1.0, 0.0, 2.5, 77.0] {
                let id = linear_propagator(&p, fam, xi, 0.0);
                assert!(op_norm3(&(id - Mat3::identity())) < 1e-12);
                let e = linear_propagator(&p, fam, xi, 0.013);
                assert!(op_norm3(&(e * e.adjoint() - Mat3::identity())) < 1e-12);
                let e2 = linear_propagator(&p, fam, xi, 0.026);
                assert!(op_norm3(&(e * e - e2)) < 1e-12);
            }
        }
    }

    #[test]
    fn propagator_matches_dense_exponential() {
        let p = ModelParams::default();
        let xi = 31.0;
        let dt = 0.004;
        for fam in Family::ALL {
            let gen = p.char_matrix(fam, 0.0, p.epsilon * xi) * C64::new(-dt / p.epsilon, 0.0);
            let dense = gen.exp();
            let e = linear_propagator(&p, fam, xi, dt);
            assert!(op_norm3(&(dense - e)) < 1e-12);
        }
    }

    #[test]
    fn spectral_round_trip() {
        let m = model(0.1);
        let grid = Grid1D::new(8.0, 64).unwrap();
        let cfg = SolverConfig {
            grid,
            dt: 0.01,
            t_end: 0.1,
            dealias: false,
            nonlinear: true,
        };
        let s = Solver::new(&m, cfg).unwrap();
        let f = smooth_data(&grid, 1.0);
        let back = s.to_physical(&s.to_spectral(&f), 0.0);
        let d = f.minus(&back);
        assert!(d.linf_norm() < 1e-13);
    }

    #[test]
    fn linear_flow_conserves_l2() {
        let m = model(0.05);
        let grid = Grid1D::new(8.0, 128).unwrap();
        let cfg = SolverConfig {
            grid,
            dt: 0.005,
            t_end: 5.0,
            dealias: true,
            nonlinear: false,
        };
        let mut s = Solver::new(&m, cfg).unwrap();
        let f = smooth_data(&grid, 1.0);
        let rows = s.run_norms(&f, 100).unwrap();
        let n0 = rows[0].1;
        for r in &rows {
            assert!((r.1 - n0).abs() < 1e-10 * n0);
        }
    }

    #[test]
    fn single_mode_rotation() {
        let m = model(0.1);
        let grid = Grid1D::new(2.0 * std::f64::consts::PI, 32).unwrap();
        let cfg = SolverConfig {
            grid,
            dt: 0.01,
            t_end: 0.5,
            dealias: false,
            nonlinear: false,
        };
        let mut s = Solver::new(&m, cfg).unwrap();
        let mut f = FieldState::zeros(grid.n, 0.0);
        for (j, x) in grid.xs().iter().enumerate() {
            f.u[1][j] = (3.0 * x).cos();
            f.v[2][j] = (3.0 * x).sin();
        }
        let (end, t) = s.run(&f, 1000, |_, _, _| Ok(())).unwrap();
        let init = s.to_spectral(&f);
        let el = linear_propagator(&m.params, Family::L, 3.0, t);
        let em = linear_propagator(&m.params, Family::M, 3.0, t);
        let row = init[3];
        let a = el * Vec3::new(row[0], row[1], row[2]);
        let b = em * Vec3::new(row[3], row[4], row[5]);
        for q in 0..3 {
            assert!((end[3][q] - a[q]).norm() < 1e-10);
            assert!((end[3][q + 3] - b[q]).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let m = model(0.01);
        let grid = Grid1D::new(8.0, 64).unwrap();
        let cfg = SolverConfig {
            grid,
            dt: 0.001,
            t_end: 0.05,
            dealias: true,
            nonlinear: true,
        };
        let mut s = Solver::new(&m, cfg).unwrap();
        let rows = s.run_norms(&FieldState::zeros(64, 0.0), 10).unwrap();
        assert!(rows.iter().all(|r| r.1 == 0.0));
    }

    #[test]
    fn blow_up_guard_trips() {
        let m = model(0.01);
        let grid = Grid1D::new(8.0, 64).unwrap();
        let cfg = SolverConfig {
            grid,
            dt: 0.001,
            t_end: 0.05,
            dealias: true,
            nonlinear: true,
        };
        let mut s = Solver::new(&m, cfg).unwrap();
        let f = smooth_data(&grid, 1e9);
        assert!(matches!(s.run_norms(&f, 10), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn toy_model_matches_exact() {
        let (eps, xi) = (1e-2, 0.3);
        let w0 = C64::new(0.5, -0.25);
        let path = toy_cauchy_riemann(w0, xi, eps, 2.0, 1e-3);
        for (t, w) in path.iter().step_by(100) {
            let e = toy_exact(w0, xi, eps, *t);
            assert!((w - e).norm() < 1e-8 * e.norm());
        }
    }
}
