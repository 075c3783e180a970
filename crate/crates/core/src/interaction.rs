//! Bilinear couplings, polarization vectors, resonance sets, interaction
//! coefficients and the growth indices built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, inner, op_norm3, r, Mat3, Vec3, C64};
use crate::model::{Branch, Family, ModeSpec, Model};

/// The three symmetric bilinear forms of the system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BilinearId {
    F,
    G,
    H,
}

/// F(u,v) = (0, u₃v₃, 0), G(u,v) = (0, −u₂v₂, 0), H(u,v) = (0, u₂v₂, 0).
pub fn bilinear(id: BilinearId, u: &Vec3, v: &Vec3) -> Vec3 {
    let z = r(0.0);
    match id {
        BilinearId::F => Vec3::new(z, u[2] * v[2], z),
        BilinearId::G => Vec3::new(z, -u[1] * v[1], z),
        BilinearId::H => Vec3::new(z, u[1] * v[1], z),
    }
}

/// The linear map v ↦ B(a, v).
pub fn bilinear_matrix(id: BilinearId, a: &Vec3) -> Mat3 {
    let mut m = Mat3::zeros();
    match id {
        BilinearId::F => m[(1, 2)] = a[2],
        BilinearId::G => m[(1, 1)] = -a[1],
        BilinearId::H => m[(1, 1)] = a[1],
    }
    m
}

/// A triple of bilinear maps (F, G, H); swappable so the transparency audit
/// can be exercised against mutated couplings.
#[derive(Clone, Copy)]
pub struct Couplings {
    pub f: fn(&Vec3, &Vec3) -> Vec3,
    pub g: fn(&Vec3, &Vec3) -> Vec3,
    pub h: fn(&Vec3, &Vec3) -> Vec3,
}

impl Default for Couplings {
    fn default() -> Self {
        Couplings {
            f: |u, v| bilinear(BilinearId::F, u, v),
            g: |u, v| bilinear(BilinearId::G, u, v),
            h: |u, v| bilinear(BilinearId::H, u, v),
        }
    }
}

/// Polarization vector e_p spanning ker M(iβ̃) (p = ±1) or ker L(3iβ̃) (p = ±3).
pub fn polarization(model: &Model, p: i32) -> Vec3 {
    let pr = &model.params;
    let (k, w) = (model.k(), model.omega());
    let e = match p.abs() {
        1 => Vec3::new(r(pr.theta0 * k / w), r(1.0), c(0.0, pr.omega0 / w)),
        3 => Vec3::new(r(k / w), r(1.0), c(0.0, pr.alpha0 * pr.omega0 / (3.0 * w))),
        _ => panic!("polarization vectors exist only for p in {{-3, -1, 1, 3}}, got {p}"),
    };
    if p > 0 {
        e
    } else {
        e.map(|z| z.conj())
    }
}

/// Index tuple (i, j, p, δ, σ) of a resonance set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResonanceSpec {
    pub i: Branch,
    pub j: Branch,
    pub p: i32,
    pub delta: Family,
    pub sigma: Family,
}

impl ResonanceSpec {
    pub const fn new(i: Branch, j: Branch, p: i32, delta: Family, sigma: Family) -> Self {
        ResonanceSpec {
            i,
            j,
            p,
            delta,
            sigma,
        }
    }

    /// (j, i, −p, σ, δ): shares the resonant phase up to a shift by pk.
    pub fn mirror(&self) -> Self {
        ResonanceSpec::new(self.j, self.i, -self.p, self.sigma, self.delta)
    }

    pub fn label(&self) -> String {
        format!(
            "({},{},{},{:?},{:?})",
            self.i.symbol(),
            self.j.symbol(),
            self.p,
            self.delta,
            self.sigma
        )
    }

    /// Bilinear form through which mode σ at ξ feeds mode δ at ξ+pk in the
    /// system linearized around the leading WKB terms.
    pub fn coupling(&self) -> Option<BilinearId> {
        use Family::*;
        match (self.delta, self.sigma, self.p.abs()) {
            (L, M, 3) | (L, L, 1) | (L, M, 1) => Some(BilinearId::F),
            (M, L, 3) => Some(BilinearId::G),
            (M, M, 1) => Some(BilinearId::H),
            _ => None,
        }
    }

    /// Every index tuple with p ∈ {−3, −1, 1, 3}.
    pub fn all() -> Vec<ResonanceSpec> {
        let mut out = Vec::with_capacity(144);
        for p in [-3, -1, 1, 3] {
            for delta in Family::ALL {
                for sigma in Family::ALL {
                    for i in Branch::ALL {
                        for j in Branch::ALL {
                            out.push(ResonanceSpec::new(i, j, p, delta, sigma));
                        }
                    }
                }
            }
        }
        out
    }
}

/// λ^δ_i(ξ+pk) − pω − λ^σ_j(ξ).
pub fn resonant_phase(model: &Model, spec: &ResonanceSpec, xi: f64) -> f64 {
    let pr = &model.params;
    let p = spec.p as f64;
    pr.branch_dispersion(ModeSpec::new(spec.delta, spec.i), xi + p * model.k())
        - p * model.omega()
        - pr.branch_dispersion(ModeSpec::new(spec.sigma, spec.j), xi)
}

/// Default root-search half-width: 20·max(k, ξ₁).
pub fn default_window(model: &Model) -> (f64, f64) {
    let w = 20.0 * model.k().max(model.xi1());
    (-w, w)
}

const ROOT_TOL: f64 = 1e-12;
const COLLISION_TOL: f64 = 1e-8;
const SCAN_POINTS: usize = 8000;

fn bisect(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= ROOT_TOL {
            return m;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..120 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Roots of the resonant phase inside `window`, sorted ascending.
pub fn find_resonances(
    model: &Model,
    spec: &ResonanceSpec,
    window: (f64, f64),
) -> Result<Vec<f64>> {
    let f = |x: f64| resonant_phase(model, spec, x);
    let (lo, hi) = window;
    let h = (hi - lo) / SCAN_POINTS as f64;
    let xs: Vec<f64> = (0..=SCAN_POINTS).map(|n| lo + n as f64 * h).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let scale = model.omega().max(1.0);
    if fs.iter().all(|v| v.abs() < 1e-14 * scale) {
        return Err(Error::DegeneratePhase);
    }
    let mut roots = Vec::new();
    for n in 0..SCAN_POINTS {
        let (a, b) = (fs[n], fs[n + 1]);
        if a == 0.0 {
            roots.push(xs[n]);
        } else if b != 0.0 && (a < 0.0) != (b < 0.0) {
            roots.push(bisect(&f, xs[n], xs[n + 1]));
        }
    }
    if fs[SCAN_POINTS] == 0.0 {
        roots.push(xs[SCAN_POINTS]);
    }
    // tangential zeros: local minima of |phase| without a sign change
    for n in 1..SCAN_POINTS {
        let (a, b, d) = (fs[n - 1], fs[n], fs[n + 1]);
        let same_sign = (a < 0.0) == (b < 0.0) && (b < 0.0) == (d < 0.0) && b != 0.0;
        if same_sign && b.abs() <= a.abs() && b.abs() <= d.abs() && b.abs() < 1e-3 * scale {
            let (xm, fm) = golden_min(&|x| f(x).abs(), xs[n - 1], xs[n + 1]);
            if fm < 1e-10 * scale {
                return Err(Error::BracketFailure { xi: xm });
            }
        }
    }
    for w in roots.windows(2) {
        if (w[1] - w[0]).abs() < COLLISION_TOL {
            return Err(Error::Collision {
                a: w[0],
                b: w[1],
                tol: COLLISION_TOL,
            });
        }
    }
    Ok(roots)
}

/// Π^δ_i(ξ+pk) B(e_p) Π^σ_j(ξ).
pub fn interaction_coefficient(
    model: &Model,
    spec: &ResonanceSpec,
    b: BilinearId,
    xi: f64,
) -> Mat3 {
    let pr = &model.params;
    let out = pr.projector(
        ModeSpec::new(spec.delta, spec.i),
        xi + spec.p as f64 * model.k(),
    );
    let inp = pr.projector(ModeSpec::new(spec.sigma, spec.j), xi);
    out.0 * bilinear_matrix(b, &polarization(model, spec.p)) * inp.0
}

/// Norms of the six products that govern the fundamental harmonics v±1:
/// P₀(ξ)F(e₋₁)Q₊(ξ+k), Q₀(ξ)H(e₋₁)Q₊(ξ+k), Q₊(ξ+k)H(e₁)Q₀(ξ) and their
/// (e₁, Q₋(ξ−k)) counterparts. All vanish identically for this system.
pub fn fundamental_zero_set(model: &Model, xi: f64) -> [f64; 6] {
    use Branch::{Minus, Plus, Zero};
    let pr = &model.params;
    let k = model.k();
    let pj = |f: Family, b: Branch, x: f64| pr.projector(ModeSpec::new(f, b), x).0;
    let (em, ep) = (polarization(model, -1), polarization(model, 1));
    let fm = bilinear_matrix(BilinearId::F, &em);
    let fp = bilinear_matrix(BilinearId::F, &ep);
    let hm = bilinear_matrix(BilinearId::H, &em);
    let hp = bilinear_matrix(BilinearId::H, &ep);
    let (p0, q0) = (pj(Family::L, Zero, xi), pj(Family::M, Zero, xi));
    let qp = pj(Family::M, Plus, xi + k);
    let qm = pj(Family::M, Minus, xi - k);
    [
        op_norm3(&(p0 * fm * qp)),
        op_norm3(&(q0 * hm * qp)),
        op_norm3(&(qp * hp * q0)),
        op_norm3(&(p0 * fp * qm)),
        op_norm3(&(q0 * hp * qm)),
        op_norm3(&(qm * hm * q0)),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Transparent,
    NonTransparent,
    EmptySet,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransparencyReport {
    pub spec: ResonanceSpec,
    pub label: String,
    pub bilinear: BilinearId,
    pub points: Vec<f64>,
    pub coefficient_norms_at_points: Vec<f64>,
    pub verdict: Verdict,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Tolerances {
    pub tol_zero: f64,
    pub nonzero: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_zero: 1e-12,
            nonzero: 1e-3,
        }
    }
}

pub fn classify_transparency(
    model: &Model,
    spec: &ResonanceSpec,
    b: BilinearId,
    tol: &Tolerances,
) -> Result<TransparencyReport> {
    let points = find_resonances(model, spec, default_window(model))?;
    let norms: Vec<f64> = points
        .iter()
        .map(|&x| op_norm3(&interaction_coefficient(model, spec, b, x)))
        .collect();
    let verdict = if points.is_empty() {
        Verdict::EmptySet
    } else if norms.iter().all(|&n| n < tol.tol_zero) {
        Verdict::Transparent
    } else {
        Verdict::NonTransparent
    };
    Ok(TransparencyReport {
        spec: *spec,
        label: spec.label(),
        bilinear: b,
        points,
        coefficient_norms_at_points: norms,
        verdict,
    })
}

/// Classification of every coupled index tuple (those with a bilinear coupling).
pub fn classify_all(model: &Model, tol: &Tolerances) -> Result<Vec<TransparencyReport>> {
    ResonanceSpec::all()
        .iter()
        .filter_map(|s| s.coupling().map(|b| (s, b)))
        .map(|(s, b)| classify_transparency(model, s, b, tol))
        .collect()
}

/// Resonance points and expected non-transparent coefficients derived from
/// the closed forms (±6k, ξ₂, ξ₃ and their shifts).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResonancePoints {
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
    pub k: f64,
}

impl ResonancePoints {
    pub fn compute(model: &Model) -> Result<Self> {
        let spec = ResonanceSpec::new(Branch::Plus, Branch::Plus, 3, Family::L, Family::M);
        let roots = find_resonances(model, &spec, default_window(model))?;
        if roots.len() != 2 {
            return Err(Error::Support(format!(
                "expected two (+,+,3,L,M) resonances, found {}",
                roots.len()
            )));
        }
        Ok(ResonancePoints {
            xi1: model.xi1(),
            xi2: roots[1],
            xi3: roots[0],
            k: model.k(),
        })
    }

    /// The set R = {−6k, 6k, ξ₂, ξ₃, −ξ₂, −ξ₃}.
    pub fn set_r(&self) -> [f64; 6] {
        let k = self.k;
        [-6.0 * k, 6.0 * k, self.xi2, self.xi3, -self.xi2, -self.xi3]
    }

    /// Minimum pairwise distance inside R; errors if two points collide.
    pub fn min_separation(&self) -> Result<f64> {
        let s = self.set_r();
        let mut d = f64::INFINITY;
        for a in 0..s.len() {
            for b in a + 1..s.len() {
                d = d.min((s[a] - s[b]).abs());
            }
        }
        if d < COLLISION_TOL {
            return Err(Error::Collision {
                a: d,
                b: 0.0,
                tol: COLLISION_TOL,
            });
        }
        Ok(d)
    }

    /// Non-transparent (spec, bilinear, points) expected from the closed forms.
    pub fn expected_non_transparent(&self) -> Vec<(ResonanceSpec, BilinearId, Vec<f64>)> {
        use Branch::*;
        use Family::*;
        let k = self.k;
        let (x2, x3) = (self.xi2, self.xi3);
        let mut v = vec![
            (
                ResonanceSpec::new(Plus, Zero, 3, L, M),
                BilinearId::F,
                vec![-6.0 * k],
            ),
            (
                ResonanceSpec::new(Minus, Zero, -3, L, M),
                BilinearId::F,
                vec![6.0 * k],
            ),
            (
                ResonanceSpec::new(Plus, Plus, 3, L, M),
                BilinearId::F,
                vec![x3, x2],
            ),
            (
                ResonanceSpec::new(Plus, Plus, -3, M, L),
                BilinearId::G,
                vec![x3 + 3.0 * k, x2 + 3.0 * k],
            ),
            (
                ResonanceSpec::new(Minus, Minus, -3, L, M),
                BilinearId::F,
                vec![-x2, -x3],
            ),
            (
                ResonanceSpec::new(Minus, Minus, 3, M, L),
                BilinearId::G,
                vec![-x2 - 3.0 * k, -x3 - 3.0 * k],
            ),
        ];
        for e in v.iter_mut() {
            e.2.sort_by(f64::total_cmp);
        }
        v
    }
}

/// Outcome of the (wt1) compatibility audit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditResult {
    pub passed: bool,
    pub max_residual: f64,
    /// (p, a, b, residual) for the worst offending entry, if any.
    pub worst: Option<(i32, usize, usize, f64)>,
}

/// Checks P(pβ̃)ΣF((P+Q)(p₁β̃)·, Q(p₂β̃)·) = 0 and
/// Q(pβ̃)Σ(G(P·,P·) + H(Q·,Q·)) = 0 on canonical basis pairs for |p| ≤ pmax.
pub fn weak_transparency_audit(model: &Model, pmax: i32, couplings: &Couplings) -> AuditResult {
    let tol = 1e-12;
    let proj = |fam: Family, q: i32| model.kernel_projector(fam, q);
    let range: Vec<i32> = (-pmax..=pmax).collect();
    let pl: Vec<Mat3> = range.iter().map(|&q| proj(Family::L, q)).collect();
    let qm: Vec<Mat3> = range.iter().map(|&q| proj(Family::M, q)).collect();
    let idx = |q: i32| (q + pmax) as usize;
    let basis: Vec<Vec3> = (0..3)
        .map(|n| {
            let mut e = Vec3::zeros();
            e[n] = r(1.0);
            e
        })
        .collect();
    let mut max_res: f64 = 0.0;
    let mut worst = None;
    for &p in &range {
        for a in 0..3 {
            for b in 0..3 {
                let mut s1 = Vec3::zeros();
                let mut s2 = Vec3::zeros();
                for &p1 in &range {
                    let p2 = p - p1;
                    if p2.abs() > pmax {
                        continue;
                    }
                    let (i1, i2) = (idx(p1), idx(p2));
                    let pa = pl[i1] * basis[a];
                    let qa = qm[i1] * basis[a];
                    let pb = pl[i2] * basis[b];
                    let qb = qm[i2] * basis[b];
                    s1 += (couplings.f)(&(pa + qa), &qb);
                    s2 += (couplings.g)(&pa, &pb) + (couplings.h)(&qa, &qb);
                }
                let res = (pl[idx(p)] * s1).norm().max((qm[idx(p)] * s2).norm());
                if res > max_res {
                    max_res = res;
                    if res > tol {
                        worst = Some((p, a, b, res));
                    }
                }
            }
        }
    }
    AuditResult {
        passed: max_res < tol,
        max_residual: max_res,
        worst,
    }
}

/// 2·tr(P₊(ξ+3k)F(e₃)Q₊(ξ)G(e₋₃)P₊(ξ+3k)).
pub fn gamma1(model: &Model, xi: f64) -> f64 {
    let pr = &model.params;
    let k = model.k();
    let p = pr
        .projector(ModeSpec::new(Family::L, Branch::Plus), xi + 3.0 * k)
        .0;
    let q = pr.projector(ModeSpec::new(Family::M, Branch::Plus), xi).0;
    let fe = bilinear_matrix(BilinearId::F, &polarization(model, 3));
    let ge = bilinear_matrix(BilinearId::G, &polarization(model, -3));
    (p * fe * q * ge * p).trace().re * 2.0
}

/// 2·tr(P₋(ξ−3k)F(e₋₃)Q₋(ξ)G(e₃)P₋(ξ−3k)).
pub fn gamma2(model: &Model, xi: f64) -> f64 {
    let pr = &model.params;
    let k = model.k();
    let p = pr
        .projector(ModeSpec::new(Family::L, Branch::Minus), xi - 3.0 * k)
        .0;
    let q = pr.projector(ModeSpec::new(Family::M, Branch::Minus), xi).0;
    let fe = bilinear_matrix(BilinearId::F, &polarization(model, -3));
    let ge = bilinear_matrix(BilinearId::G, &polarization(model, 3));
    (p * fe * q * ge * p).trace().re * 2.0
}

/// α₀ω₀²/(6ωμ(ξ)).
pub fn gamma1_closed_form(model: &Model, xi: f64) -> f64 {
    let pr = &model.params;
    pr.alpha0 * pr.omega0 * pr.omega0 / (6.0 * model.omega() * pr.dispersion(Family::M, xi))
}

/// ξ₀ = argmin μ over {ξ₂, ξ₃} and the remaining point ξ₀ʳ.
pub fn select_xi0(model: &Model, candidates: (f64, f64)) -> Result<(f64, f64)> {
    let pr = &model.params;
    let (a, b) = candidates;
    let (ma, mb) = (pr.dispersion(Family::M, a), pr.dispersion(Family::M, b));
    if (ma - mb).abs() <= 1e-10 * ma.max(mb) {
        return Err(Error::Collision { a, b, tol: 1e-10 });
    }
    Ok(if ma < mb { (a, b) } else { (b, a) })
}

/// Harmonic-2 first correctors at t = 0 for unit leading amplitude data.
fn second_harmonic_correctors(model: &Model, v: &Vec3) -> (Vec3, Vec3) {
    let u12 = model.partial_inverse(Family::L, 2) * bilinear(BilinearId::F, v, v);
    let v12 = model.partial_inverse(Family::M, 2) * bilinear(BilinearId::H, v, v);
    (u12, v12)
}

/// Check Q(β̃)v = v pointwise.
pub fn check_polarization(model: &Model, v0: &[Vec3]) -> Result<()> {
    let q = model.kernel_projector(Family::M, 1);
    for (n, v) in v0.iter().enumerate() {
        let res = (q * v - v).norm();
        if res > 1e-10 * v.norm().max(1.0) {
            return Err(Error::Polarization {
                index: n,
                residual: res,
            });
        }
    }
    Ok(())
}

/// The two channels feeding ∂ₜu₀,₃ at t = 0.
#[derive(Clone, Debug)]
pub struct ThirdHarmonicOnset {
    /// 2P(3β̃)F(M(2iβ̃)⁻¹H(v⁰,v⁰), v⁰): through the v-corrector.
    pub via_v_corrector: Vec<Vec3>,
    /// P(3β̃)F(L(2iβ̃)⁻¹F(v⁰,v⁰), v⁰): through the u-corrector.
    pub via_u_corrector: Vec<Vec3>,
}

impl ThirdHarmonicOnset {
    pub fn total(&self) -> Vec<Vec3> {
        self.via_v_corrector
            .iter()
            .zip(&self.via_u_corrector)
            .map(|(a, b)| a + b)
            .collect()
    }
}

pub fn third_harmonic_onset(model: &Model, v0: &[Vec3]) -> Result<ThirdHarmonicOnset> {
    check_polarization(model, v0)?;
    let p3 = model.kernel_projector(Family::L, 3);
    let mut via_v = Vec::with_capacity(v0.len());
    let mut via_u = Vec::with_capacity(v0.len());
    for v in v0 {
        let (u12, v12) = second_harmonic_correctors(model, v);
        via_v.push(p3 * bilinear(BilinearId::F, &v12, v) * r(2.0));
        via_u.push(p3 * bilinear(BilinearId::F, &u12, v));
    }
    Ok(ThirdHarmonicOnset {
        via_v_corrector: via_v,
        via_u_corrector: via_u,
    })
}

/// 2P(3β̃)F(M(2iβ̃)⁻¹H(v⁰,v⁰), v⁰), the closed expression for ∂ₜu₀,₃(0).
pub fn dt_u03_at_zero(model: &Model, v0: &[Vec3]) -> Result<Vec<Vec3>> {
    Ok(third_harmonic_onset(model, v0)?.via_v_corrector)
}

fn e3_coordinate(model: &Model, w: &[Vec3]) -> Vec<C64> {
    let e3 = polarization(model, 3);
    let n2 = e3.norm_squared();
    w.iter().map(|x| inner(x, &e3) / n2).collect()
}

/// e₃-coordinate of [`dt_u03_at_zero`].
pub fn dt_g_at_zero(model: &Model, v0: &[Vec3]) -> Result<Vec<C64>> {
    Ok(e3_coordinate(model, &dt_u03_at_zero(model, v0)?))
}

/// e₃-coordinate of the full level-one source P(3β̃)(F₁)₃ at t = 0, i.e. the
/// value the transport equation actually produces (both corrector channels).
pub fn dt_g_at_zero_complete(model: &Model, v0: &[Vec3]) -> Result<Vec<C64>> {
    Ok(e3_coordinate(
        model,
        &third_harmonic_onset(model, v0)?.total(),
    ))
}

/// Γ₁ = max|∂ₜg(0,·)|·γ₁(ξ₀)^{1/2}.
pub fn big_gamma1(model: &Model, dtg0: &[C64], xi0: f64) -> f64 {
    let m = dtg0.iter().map(|z| z.norm()).fold(0.0, f64::max);
    m * gamma1(model, xi0).max(0.0).sqrt()
}

/// Γ: sup over non-transparent tuples of |g_p(0, x_p)|² times the sup of the
/// resonant trace. Every non-transparent tuple here is carried by the third
/// harmonic, so the relevant amplitude is g(0,·).
pub fn big_gamma(model: &Model, g0: &[C64], reports: &[TransparencyReport]) -> f64 {
    let gmax = g0.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut best: f64 = 0.0;
    for rep in reports
        .iter()
        .filter(|r| r.verdict == Verdict::NonTransparent)
    {
        let back = rep.spec.mirror();
        let Some(bb) = back.coupling() else { continue };
        for &x in &rep.points {
            let fwd = interaction_coefficient(model, &rep.spec, rep.bilinear, x);
            let bwd = interaction_coefficient(model, &back, bb, x + rep.spec.p as f64 * model.k());
            let out = model
                .params
                .projector(
                    ModeSpec::new(rep.spec.delta, rep.spec.i),
                    x + rep.spec.p as f64 * model.k(),
                )
                .0;
            let tr = (fwd * bwd * out).trace().re;
            best = best.max(gmax * gmax * tr);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn running() -> Model {
        Model::new(ModelParams::default()).unwrap()
    }

    #[test]
    fn bilinear_definitions() {
        let a = c(1.5, -0.5);
        let b = c(0.25, 2.0);
        let z = r(0.0);
        let u = Vec3::new(z, z, a);
        let v = Vec3::new(z, z, b);
        assert_eq!(bilinear(BilinearId::F, &u, &v), Vec3::new(z, a * b, z));
        let w = Vec3::new(c(1.0, 2.0), z, c(3.0, 1.0));
        let s = bilinear(BilinearId::G, &w, &w) + bilinear(BilinearId::H, &w, &w);
        assert_eq!(s, Vec3::zeros());
    }

    #[test]
    fn f_of_e3_e1() {
        let m = running();
        let got = bilinear(BilinearId::F, &polarization(&m, 3), &polarization(&m, 1))[1];
        let pr = m.params;
        let w = m.omega();
        let want = c(0.0, pr.alpha0 * pr.omega0 / (3.0 * w)) * c(0.0, pr.omega0 / w);
        assert!((got - want).norm() < 1e-15);
    }

    #[test]
    fn bilinear_matrix_matches_bilinear() {
        let m = running();
        let a = polarization(&m, 3);
        let v = polarization(&m, -1);
        for id in [BilinearId::F, BilinearId::G, BilinearId::H] {
            let d = bilinear_matrix(id, &a) * v - bilinear(id, &a, &v);
            assert!(d.norm() < 1e-15);
        }
    }

    #[test]
    fn polarization_in_kernels() {
        let m = running();
        let a1 = m.harmonic_matrix(Family::M, 1);
        let a3 = m.harmonic_matrix(Family::L, 3);
        assert!((a1 * polarization(&m, 1)).norm() < 1e-12);
        assert!((a3 * polarization(&m, 3)).norm() < 1e-12);
        assert!((m.harmonic_matrix(Family::M, -1) * polarization(&m, -1)).norm() < 1e-12);
        assert!((m.harmonic_matrix(Family::L, -3) * polarization(&m, -3)).norm() < 1e-12);
    }

    #[test]
    fn resonant_phase_examples() {
        use Branch::*;
        let m = running();
        let s = ResonanceSpec::new(Plus, Zero, 1, Family::M, Family::M);
        assert!(resonant_phase(&m, &s, 0.0).abs() < 1e-14);
        let s = ResonanceSpec::new(Plus, Zero, 3, Family::L, Family::L);
        assert!(resonant_phase(&m, &s, -6.0 * m.k()).abs() < 1e-14);
    }

    #[test]
    fn mirror_shares_phase() {
        let m = running();
        for s in ResonanceSpec::all() {
            let mm = s.mirror();
            for n in 0..20 {
                let x = -5.0 + 0.5 * n as f64;
                let a = resonant_phase(&m, &s, x);
                let b = resonant_phase(&m, &mm, x + s.p as f64 * m.k());
                assert!((a + b).abs() < 1e-12, "{} at {x}", s.label());
            }
        }
    }

    #[test]
    fn closed_form_roots() {
        use Branch::*;
        let m = running();
        let k = m.k();
        let w = default_window(&m);
        let s = ResonanceSpec::new(Plus, Zero, 3, Family::L, Family::L);
        let got = find_resonances(&m, &s, w).unwrap();
        assert_eq!(got.len(), 2);
        assert!((got[0] + 6.0 * k).abs() < 1e-10 && got[1].abs() < 1e-10);
        let s = ResonanceSpec::new(Plus, Zero, 1, Family::M, Family::M);
        let got = find_resonances(&m, &s, w).unwrap();
        assert!((got[0] + 2.0 * k).abs() < 1e-10 && got[1].abs() < 1e-10);
        // μ(ξ+3k)... (0,+,-3,L,M): 0 + 3ω − μ(ξ) = 0 at ±ξ₁
        let s = ResonanceSpec::new(Zero, Plus, -3, Family::L, Family::M);
        let got = find_resonances(&m, &s, w).unwrap();
        let x1 = m.xi1();
        assert!((got[0] + x1).abs() < 1e-10 && (got[1] - x1).abs() < 1e-10);
    }

    #[test]
    fn plus_plus_roots() {
        let m = running();
        let rp = ResonancePoints::compute(&m).unwrap();
        // brentq on λ(ξ+3k) − μ(ξ) − 3ω
        assert!((rp.xi2 - 2.1810767790926526).abs() < 1e-10, "{}", rp.xi2);
        assert!((rp.xi3 + 8.424223446589746).abs() < 1e-10, "{}", rp.xi3);
        let s = ResonanceSpec::new(Branch::Minus, Branch::Minus, -3, Family::L, Family::M);
        let got = find_resonances(&m, &s, default_window(&m)).unwrap();
        assert!((got[0] + rp.xi2).abs() < 1e-10 && (got[1] + rp.xi3).abs() < 1e-10);
    }

    #[test]
    fn constant_phase_has_no_roots() {
        let m = running();
        let s = ResonanceSpec::new(Branch::Zero, Branch::Zero, 3, Family::L, Family::M);
        assert!(find_resonances(&m, &s, default_window(&m))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn tangential_zero_is_reported() {
        // (+,+,0,M,M) has μ(ξ)−μ(ξ) ≡ 0; p = 0 degenerates entirely
        let m = running();
        let s = ResonanceSpec::new(Branch::Plus, Branch::Plus, 0, Family::M, Family::M);
        assert!(matches!(
            find_resonances(&m, &s, (-1.0, 1.0)),
            Err(Error::DegeneratePhase)
        ));
    }

    #[test]
    fn zero_coefficients() {
        let m = running();
        let s = ResonanceSpec::new(Branch::Zero, Branch::Plus, -1, Family::L, Family::M);
        for n in 0..40 {
            let x = -6.0 + 0.3 * n as f64;
            let cf = interaction_coefficient(&m, &s, BilinearId::F, x + m.k());
            assert!(op_norm3(&cf) < 1e-14);
        }
    }

    #[test]
    fn classification_matches_expected() {
        let m = running();
        let reps = classify_all(&m, &Tolerances::default()).unwrap();
        let rp = ResonancePoints::compute(&m).unwrap();
        let expected = rp.expected_non_transparent();
        let non: Vec<_> = reps
            .iter()
            .filter(|r| r.verdict == Verdict::NonTransparent)
            .collect();
        assert_eq!(non.len(), expected.len(), "{:#?}", non);
        for (spec, b, pts) in &expected {
            let r = non.iter().find(|r| r.spec == *spec).expect("missing");
            assert_eq!(r.bilinear, *b);
            let hot: Vec<(f64, f64)> = r
                .points
                .iter()
                .zip(&r.coefficient_norms_at_points)
                .filter(|(_, n)| **n >= 1e-12)
                .map(|(x, n)| (*x, *n))
                .collect();
            assert_eq!(hot.len(), pts.len(), "{}", r.label);
            for ((x, nrm), y) in hot.iter().zip(pts) {
                assert!((x - y).abs() < 1e-10);
                assert!(*nrm > 1e-3);
            }
        }
        for r in reps.iter().filter(|r| r.spec.p.abs() == 1) {
            assert_ne!(r.verdict, Verdict::NonTransparent, "{}", r.label);
        }
    }

    #[test]
    fn audit_passes_and_detects_mutation() {
        let m = running();
        let a = weak_transparency_audit(&m, 6, &Couplings::default());
        assert!(a.passed, "{a:?}");
        let mutated = Couplings {
            f: |u, v| Vec3::new(u[2] * v[2], u[2] * v[2], r(0.0)),
            ..Couplings::default()
        };
        let a = weak_transparency_audit(&m, 6, &mutated);
        assert!(!a.passed);
        assert!(a.worst.is_some());
    }

    #[test]
    fn gamma_trace_matches_closed_form() {
        let m = running();
        for n in 0..200 {
            let x = -12.0 + 0.12 * n as f64;
            let g = gamma1(&m, x);
            assert!((g - gamma1_closed_form(&m, x)).abs() < 1e-10);
            assert!((g - gamma2(&m, -x)).abs() < 1e-10);
            assert!(g > 0.0);
        }
    }

    #[test]
    fn xi0_selection() {
        let m = running();
        let rp = ResonancePoints::compute(&m).unwrap();
        let (x0, xr) = select_xi0(&m, (rp.xi2, rp.xi3)).unwrap();
        assert_eq!(x0, rp.xi2);
        assert!(gamma1(&m, x0) >= gamma1(&m, xr));
        assert!((gamma1(&m, x0) - 0.29493597015823086).abs() < 1e-10);
        assert!(select_xi0(&m, (1.3, -1.3)).is_err());
    }

    fn gaussian(m: &Model, n: usize) -> Vec<Vec3> {
        let e1 = polarization(m, 1);
        (0..n)
            .map(|j| {
                let x = -4.0 + 8.0 * j as f64 / n as f64;
                e1 * r((-x * x).exp())
            })
            .collect()
    }

    #[test]
    fn onset_is_cubic() {
        let m = running();
        let v = gaussian(&m, 64);
        let v2: Vec<Vec3> = v.iter().map(|x| x * r(2.0)).collect();
        let a = dt_g_at_zero(&m, &v).unwrap();
        let b = dt_g_at_zero(&m, &v2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((y - x * 8.0).norm() <= 1e-12 * y.norm().max(1e-300));
        }
        let zero = vec![Vec3::zeros(); 8];
        assert!(dt_g_at_zero(&m, &zero)
            .unwrap()
            .iter()
            .all(|z| z.norm() == 0.0));
        let a = big_gamma1(&m, &dt_g_at_zero_complete(&m, &v).unwrap(), 2.19);
        let b = big_gamma1(&m, &dt_g_at_zero_complete(&m, &v2).unwrap(), 2.19);
        assert!((b - 8.0 * a).abs() < 1e-12 * b);
    }

    #[test]
    fn onset_rejects_unpolarized() {
        let m = running();
        let bad = vec![Vec3::new(r(1.0), r(0.0), r(0.0))];
        assert!(matches!(
            dt_u03_at_zero(&m, &bad),
            Err(Error::Polarization { .. })
        ));
    }

    #[test]
    fn gamma_vanishes_for_running_data() {
        let m = running();
        let reps = classify_all(&m, &Tolerances::default()).unwrap();
        let g0 = vec![C64::new(0.0, 0.0); 16];
        assert_eq!(big_gamma(&m, &g0, &reps), 0.0);
        let g1 = vec![C64::new(1.0, 0.0); 16];
        assert!(big_gamma(&m, &g1, &reps) > 0.0);
    }
}
