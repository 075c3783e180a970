//! Physical parameters, dispersion relations, the characteristic phase and the
//! spectral decomposition of the two 3×3 Klein–Gordon symbols.
//!
//! The two constant-coefficient operators are
//!
//! ```text
//! L(ω₀, ∂) = ∂t + [[0, ∂x, 0], [∂x, 0, α₀ω₀], [0, −α₀ω₀, 0]]
//! M(ω₀, ∂) = ∂t + [[0, θ₀∂x, 0], [θ₀∂x, 0, ω₀], [0, −ω₀, 0]]
//! ```
//!
//! and their symbols at (−iτ, iξ) are normal matrices with eigenvalues
//! i(λ_j(ξ) − τ), λ_j ∈ {λ, −λ, 0} (resp. {μ, −μ, 0}).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, r, Mat3, Vec3, C64, I};

/// Which of the two Klein–Gordon blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    L,
    M,
}

/// Dispersion branch: +dispersion, −dispersion or the zero mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
    #[serde(rename = "0")]
    Zero,
}

impl Branch {
    pub const ALL: [Branch; 3] = [Branch::Plus, Branch::Minus, Branch::Zero];

    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
            Branch::Zero => 0.0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Branch::Plus => "+",
            Branch::Minus => "-",
            Branch::Zero => "0",
        }
    }
}

impl Family {
    pub const ALL: [Family; 2] = [Family::L, Family::M];
}

/// One of the six eigenmodes (family, branch).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeSpec {
    pub family: Family,
    pub branch: Branch,
}

impl ModeSpec {
    pub const fn new(family: Family, branch: Branch) -> Self {
        ModeSpec { family, branch }
    }

    pub fn all() -> [ModeSpec; 6] {
        let mut out = [ModeSpec::new(Family::L, Branch::Plus); 6];
        let mut n = 0;
        for f in Family::ALL {
            for b in Branch::ALL {
                out[n] = ModeSpec::new(f, b);
                n += 1;
            }
        }
        out
    }
}

/// Physical constants of the coupled system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub theta0: f64,
    pub alpha0: f64,
    pub omega0: f64,
    pub epsilon: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            theta0: 0.5,
            alpha0: 2.7,
            omega0: 1.0,
            epsilon: 1e-2,
        }
    }
}

fn invalid(name: &'static str, value: f64, reason: &str) -> Error {
    Error::InvalidParameter {
        name,
        value,
        reason: reason.to_string(),
    }
}

impl ModelParams {
    /// Validated constructor (strict open intervals).
    pub fn new(theta0: f64, alpha0: f64, omega0: f64, epsilon: f64) -> Result<Self> {
        let p = ModelParams {
            theta0,
            alpha0,
            omega0,
            epsilon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(false)
    }

    /// With `allow_outside_regime`, only the constraints needed for the phase
    /// to exist are enforced (α₀ may leave (2.5, 3) from below).
    pub fn validate_with(&self, allow_outside_regime: bool) -> Result<()> {
        let finite = [self.theta0, self.alpha0, self.omega0, self.epsilon]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("params", f64::NAN, "non-finite value"));
        }
        if !(self.theta0 > 0.0 && self.theta0 < 1.0) {
            return Err(invalid("theta0", self.theta0, "must lie in (0, 1)"));
        }
        if !(self.omega0 > 0.0) {
            return Err(invalid("omega0", self.omega0, "must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid("epsilon", self.epsilon, "must lie in (0, 1)"));
        }
        if self.alpha0 >= 3.0 {
            return Err(invalid(
                "alpha0",
                self.alpha0,
                "must be below 3 for the characteristic phase to exist",
            ));
        }
        if allow_outside_regime {
            if !(self.alpha0 > 0.0) || self.alpha0 == 1.0 {
                return Err(invalid("alpha0", self.alpha0, "must be positive and != 1"));
            }
        } else if !(self.alpha0 > 2.5) {
            return Err(invalid("alpha0", self.alpha0, "must lie in (2.5, 3)"));
        }
        Ok(())
    }

    /// Propagation speed of the block (1 for L, θ₀ for M).
    pub fn speed(&self, family: Family) -> f64 {
        match family {
            Family::L => 1.0,
            Family::M => self.theta0,
        }
    }

    /// Mass coupling of the block (α₀ω₀ for L, ω₀ for M).
    pub fn mass(&self, family: Family) -> f64 {
        match family {
            Family::L => self.alpha0 * self.omega0,
            Family::M => self.omega0,
        }
    }

    /// λ(ξ) = √(α₀²ω₀² + ξ²) for L, μ(ξ) = √(ω₀² + θ₀²ξ²) for M.
    pub fn dispersion(&self, family: Family, xi: f64) -> f64 {
        let m = self.mass(family);
        let cxi = self.speed(family) * xi;
        m.hypot(cxi)
    }

    pub fn group_velocity(&self, family: Family, xi: f64) -> f64 {
        let s = self.speed(family);
        s * s * xi / self.dispersion(family, xi)
    }

    /// Signed branch eigenvalue λ_j(ξ) ∈ {λ, −λ, 0}.
    pub fn branch_dispersion(&self, mode: ModeSpec, xi: f64) -> f64 {
        mode.branch.sign() * self.dispersion(mode.family, xi)
    }

    /// The flux matrix A (coefficient of ∂x).
    pub fn flux(&self, family: Family) -> Mat3 {
        let s = r(self.speed(family));
        let z = r(0.0);
        Mat3::new(z, s, z, s, z, z, z, z, z)
    }

    /// The zeroth-order skew block A₀.
    pub fn mass_matrix(&self, family: Family) -> Mat3 {
        let m = r(self.mass(family));
        let z = r(0.0);
        Mat3::new(z, z, z, z, z, m, z, -m, z)
    }

    /// Symbol of the operator at (∂t, ∂x) = (−iτ, iξ).
    pub fn char_matrix(&self, family: Family, tau: f64, xi: f64) -> Mat3 {
        let s = c(0.0, self.speed(family) * xi);
        let m = r(self.mass(family));
        let z = r(0.0);
        let d = c(0.0, -tau);
        Mat3::new(d, s, z, s, d, m, z, -m, d)
    }

    /// Explicit kernel vector Ω of `char_matrix(family, λ_j(ξ), ξ)`.
    pub fn kernel_vector(&self, mode: ModeSpec, xi: f64) -> Vec3 {
        let s = self.speed(mode.family);
        let m = self.mass(mode.family);
        match mode.branch {
            Branch::Zero => Vec3::new(r(1.0), r(0.0), c(0.0, -s * xi / m)),
            _ => {
                let l = self.branch_dispersion(mode, xi);
                Vec3::new(r(s * xi / l), r(1.0), c(0.0, m / l))
            }
        }
    }

    pub fn projector(&self, mode: ModeSpec, xi: f64) -> Projector {
        Projector::onto(&self.kernel_vector(mode, xi))
    }
}

/// Orthogonal rank-one eigenprojector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projector(pub Mat3);

impl Projector {
    pub fn onto(v: &Vec3) -> Self {
        let n2 = v.norm_squared();
        Projector(v * v.adjoint() / r(n2))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn hermitian_defect(&self) -> f64 {
        (self.0 - self.0.adjoint()).norm()
    }

    pub fn idempotent_defect(&self) -> f64 {
        (self.0 * self.0 - self.0).norm()
    }

    /// Singular values in decreasing order.
    pub fn singular_values(&self) -> [f64; 3] {
        let mut s: Vec<f64> = self.0.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        [s[0], s[1], s[2]]
    }
}

/// The selected characteristic pair β̃ = (ω, k).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub omega: f64,
    pub k: f64,
}

impl Phase {
    /// Positive root of μ(k) = ω, λ(3k) = 3ω.
    pub fn solve(params: &ModelParams) -> Result<Phase> {
        let a2 = params.alpha0 * params.alpha0 / 9.0;
        let t2 = params.theta0 * params.theta0;
        if !(a2 < 1.0) {
            return Err(invalid(
                "alpha0",
                params.alpha0,
                "no characteristic phase for alpha0 >= 3",
            ));
        }
        if !(t2 < 1.0) || !(params.omega0 > 0.0) {
            return Err(invalid("theta0", params.theta0, "no characteristic phase"));
        }
        let w0 = params.omega0;
        let k = ((1.0 - a2) / (1.0 - t2)).sqrt() * w0;
        let omega = (k * k + a2 * w0 * w0).sqrt();
        Ok(Phase { omega, k })
    }
}

/// Parameters together with their solved phase; the context most operations need.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub params: ModelParams,
    pub phase: Phase,
}

/// Relative tolerance deciding whether a harmonic lies on a dispersion branch.
const ON_BRANCH_TOL: f64 = 1e-9;

impl Model {
    pub fn new(params: ModelParams) -> Result<Model> {
        params.validate()?;
        Ok(Model {
            params,
            phase: Phase::solve(&params)?,
        })
    }

    /// Skips regime validation (exploratory runs outside the supported parameter box).
    pub fn new_unchecked_regime(params: ModelParams) -> Result<Model> {
        params.validate_with(true)?;
        Ok(Model {
            params,
            phase: Phase::solve(&params)?,
        })
    }

    pub fn omega(&self) -> f64 {
        self.phase.omega
    }

    pub fn k(&self) -> f64 {
        self.phase.k
    }

    /// char_matrix at the p-th harmonic of the phase: L(ipβ̃) or M(ipβ̃).
    pub fn harmonic_matrix(&self, family: Family, p: i32) -> Mat3 {
        let p = p as f64;
        self.params
            .char_matrix(family, p * self.phase.omega, p * self.phase.k)
    }

    fn harmonic_split(&self, family: Family, p: i32) -> [(ModeSpec, f64, bool); 3] {
        let tau = p as f64 * self.phase.omega;
        let xi = p as f64 * self.phase.k;
        let scale = 1.0f64.max(tau.abs());
        let mut out = [(ModeSpec::new(family, Branch::Plus), 0.0, false); 3];
        for (slot, b) in out.iter_mut().zip(Branch::ALL) {
            let mode = ModeSpec::new(family, b);
            let gap = self.params.branch_dispersion(mode, xi) - tau;
            *slot = (mode, gap, gap.abs() <= ON_BRANCH_TOL * scale);
        }
        out
    }

    /// Orthogonal projector onto ker L(ipβ̃) (resp. M); zero when pβ̃ is not characteristic.
    pub fn kernel_projector(&self, family: Family, p: i32) -> Mat3 {
        let xi = p as f64 * self.phase.k;
        self.harmonic_split(family, p)
            .iter()
            .filter(|(_, _, on)| *on)
            .map(|(mode, _, _)| self.params.projector(*mode, xi).0)
            .fold(Mat3::zeros(), |acc, m| acc + m)
    }

    /// Pseudoinverse of L(ipβ̃) (resp. M): zero on the kernel, inverse on its complement.
    pub fn partial_inverse(&self, family: Family, p: i32) -> Mat3 {
        let xi = p as f64 * self.phase.k;
        self.harmonic_split(family, p)
            .iter()
            .filter(|(_, _, on)| !*on)
            .map(|(mode, gap, _)| self.params.projector(*mode, xi).0 / (I * *gap))
            .fold(Mat3::zeros(), |acc, m| acc + m)
    }

    /// Branches ξ₁ with μ(ξ₁) = 3ω (positive root).
    pub fn xi1(&self) -> f64 {
        let p = &self.params;
        let w = self.phase.omega;
        (9.0 * w * w - p.omega0 * p.omega0).sqrt() / p.theta0
    }
}

#[allow(dead_code)]
pub(crate) fn zero3() -> Mat3 {
    Mat3::from_element(C64::new(0.0, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::op_norm3;

    fn running() -> Model {
        Model::new(ModelParams::default()).unwrap()
    }

    #[test]
    fn dispersion_at_zero() {
        let p = ModelParams::default();
        assert_eq!(p.dispersion(Family::L, 0.0), 2.7);
        assert_eq!(p.dispersion(Family::M, 0.0), 1.0);
        assert_eq!(p.group_velocity(Family::L, 0.0), 0.0);
    }

    #[test]
    fn group_velocity_limits() {
        let p = ModelParams::default();
        assert!((p.group_velocity(Family::M, 1e6) - p.theta0).abs() < 1e-6);
        // centered finite difference at 3k
        let m = running();
        let x = 3.0 * m.k();
        let h = 1e-6;
        let fd = (p.dispersion(Family::L, x + h) - p.dispersion(Family::L, x - h)) / (2.0 * h);
        let gv = p.group_velocity(Family::L, x);
        assert!(((fd - gv) / gv).abs() < 1e-6);
    }

    #[test]
    fn running_phase_values() {
        let m = running();
        assert!((m.k() - 0.5033222956847165).abs() < 1e-15);
        assert!((m.omega() - 1.0311805532172014).abs() < 1e-15);
        let p = m.params;
        assert!((p.dispersion(Family::M, m.k()) / m.omega() - 1.0).abs() < 1e-14);
        assert!((p.dispersion(Family::L, 3.0 * m.k()) / (3.0 * m.omega()) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn phase_is_homogeneous_in_omega0() {
        let base = Phase::solve(&ModelParams::default()).unwrap();
        let scaled = Phase::solve(&ModelParams {
            omega0: 3.5,
            ..ModelParams::default()
        })
        .unwrap();
        assert!((scaled.k - 3.5 * base.k).abs() < 1e-12);
        assert!((scaled.omega - 3.5 * base.omega).abs() < 1e-12);
    }

    #[test]
    fn phase_shrinks_toward_alpha_three() {
        let near = Phase::solve(&ModelParams {
            alpha0: 2.999,
            ..ModelParams::default()
        })
        .unwrap();
        let mid = Phase::solve(&ModelParams {
            alpha0: 2.9,
            ..ModelParams::default()
        })
        .unwrap();
        assert!(near.k > 0.0 && near.k < mid.k);
        assert!(near.k < 0.06);
    }

    #[test]
    fn rejects_out_of_box() {
        assert!(ModelParams::new(0.5, 2.0, 1.0, 0.01).is_err());
        assert!(ModelParams::new(0.5, 3.0, 1.0, 0.01).is_err());
        assert!(ModelParams::new(1.2, 2.7, 1.0, 0.01).is_err());
        assert!(ModelParams::new(0.5, 2.7, 1.0, 1.5).is_err());
        let p = ModelParams {
            alpha0: 2.0,
            ..ModelParams::default()
        };
        assert!(Model::new(p).is_err());
        assert!(Model::new_unchecked_regime(p).is_ok());
    }

    #[test]
    fn char_matrix_kernel_at_origin() {
        let p = ModelParams::default();
        let a = p.char_matrix(Family::L, 0.0, 0.0);
        let v = Vec3::new(r(1.0), r(0.0), r(0.0));
        assert!((a * v).norm() == 0.0);
        let pr = p.projector(ModeSpec::new(Family::L, Branch::Zero), 0.0);
        let mut d = Mat3::zeros();
        d[(0, 0)] = r(1.0);
        assert!((pr.0 - d).norm() < 1e-15);
    }

    #[test]
    fn partial_inverse_properties() {
        let m = running();
        // p = 2 for M: invertible
        let a = m.harmonic_matrix(Family::M, 2);
        assert!(m.kernel_projector(Family::M, 2).norm() == 0.0);
        let inv = m.partial_inverse(Family::M, 2);
        assert!(op_norm3(&(a * inv - Mat3::identity())) < 1e-12);
        // p = 1 for M: kernel is Q(β̃)
        for (fam, p) in [
            (Family::M, 1),
            (Family::L, 3),
            (Family::L, -3),
            (Family::M, -1),
            (Family::L, 0),
        ] {
            let a = m.harmonic_matrix(fam, p);
            let k = m.kernel_projector(fam, p);
            assert!(op_norm3(&k) > 0.5, "{fam:?} {p}");
            let pinv = m.partial_inverse(fam, p);
            let lhs = pinv * a;
            assert!(
                op_norm3(&(lhs - (Mat3::identity() - k))) < 1e-12,
                "{fam:?} {p}"
            );
            assert!(op_norm3(&(a * k)) < 1e-12);
        }
    }

    #[test]
    fn partial_inverse_matches_dense_inverse_when_regular() {
        let m = running();
        for p in [2, 4, -2, 5] {
            for fam in Family::ALL {
                if m.kernel_projector(fam, p).norm() > 0.0 {
                    continue;
                }
                let dense = m.harmonic_matrix(fam, p).try_inverse().unwrap();
                assert!(op_norm3(&(dense - m.partial_inverse(fam, p))) < 1e-12);
            }
        }
    }
}
