//! Run configuration: one schema-versioned JSON document with a section per
//! module, dotted-path overrides and a content hash stamped on every output.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::{ControlKind, DeviationMode, ExperimentConfig, PsiSpec, V0Spec};
use crate::interaction::Tolerances;
use crate::model::{Model, ModelParams};
use crate::symflow::FlowOptions;
use crate::wkb::Level;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub theta0: f64,
    pub alpha0: f64,
    pub omega0: f64,
    pub epsilon: f64,
    /// Relaxes α₀ ∈ (2.5, 3) for exploratory runs.
    pub allow_outside_regime: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let p = ModelParams::default();
        ModelSection {
            theta0: p.theta0,
            alpha0: p.alpha0,
            omega0: p.omega0,
            epsilon: p.epsilon,
            allow_outside_regime: false,
        }
    }
}

impl ModelSection {
    pub fn params(&self) -> ModelParams {
        ModelParams {
            theta0: self.theta0,
            alpha0: self.alpha0,
            omega0: self.omega0,
            epsilon: self.epsilon,
        }
    }

    pub fn build(&self) -> Result<Model> {
        self.build_at(self.epsilon)
    }

    pub fn build_at(&self, epsilon: f64) -> Result<Model> {
        let p = ModelParams {
            epsilon,
            ..self.params()
        };
        if self.allow_outside_regime {
            Model::new_unchecked_regime(p)
        } else {
            Model::new(p)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InteractionSection {
    pub tol_zero: f64,
    pub nonzero: f64,
    /// Harmonic range of the weak transparency audit.
    pub pmax: i32,
}

impl Default for InteractionSection {
    fn default() -> Self {
        let t = Tolerances::default();
        InteractionSection {
            tol_zero: t.tol_zero,
            nonzero: t.nonzero,
            pmax: 6,
        }
    }
}

impl InteractionSection {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            tol_zero: self.tol_zero,
            nonzero: self.nonzero,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WkbSection {
    pub v0: V0Spec,
    /// Target domain length; snapped to whole carrier periods.
    pub length: f64,
    pub n_amplitude: usize,
    pub horizon: f64,
    pub level: Level,
    pub snapshot_times: Vec<f64>,
}

impl Default for WkbSection {
    fn default() -> Self {
        WkbSection {
            v0: V0Spec::default(),
            length: 8.0,
            n_amplitude: 256,
            horizon: 1.0,
            level: Level::Second,
            snapshot_times: vec![0.0, 0.5, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SymflowSection {
    /// Resonance window radius; `None` is 0.1·(min separation of R).
    pub window_h: Option<f64>,
    pub phi_radius: f64,
    /// Horizon T₁|ln ε|^{1/2}.
    pub t1: f64,
    /// Small-trace threshold c₀.
    pub c0: f64,
    pub samples: usize,
    pub epsilons: Vec<f64>,
    pub options: FlowOptions,
}

impl Default for SymflowSection {
    fn default() -> Self {
        SymflowSection {
            window_h: None,
            phi_radius: 1.0,
            t1: 1.5,
            c0: 0.05,
            samples: 200,
            epsilons: vec![1e-2, 1e-3],
            options: FlowOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub n_points: usize,
    /// dt = c_dt·ε.
    pub c_dt: f64,
    pub dealias: bool,
    pub nonlinear: bool,
    /// Horizon of `simulate`.
    pub t_end: f64,
    pub stride: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            n_points: 1 << 14,
            c_dt: 0.1,
            dealias: true,
            nonlinear: true,
            t_end: 0.5,
            stride: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessSection {
    pub k_exp: f64,
    pub k_a: f64,
    pub t0_factor: f64,
    pub psi: PsiSpec,
    pub fit_window: [f64; 2],
    pub deviation: DeviationMode,
    pub t_end: Option<f64>,
    pub controls: Vec<ControlKind>,
    /// Carrier shift of the off-resonance control, in units of h.
    pub off_shift_h: f64,
    pub sweep_epsilons: Vec<f64>,
}

impl Default for HarnessSection {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        HarnessSection {
            k_exp: e.k_exp,
            k_a: e.k_a,
            t0_factor: e.t0_factor,
            psi: e.psi,
            fit_window: e.fit_window,
            deviation: e.deviation,
            t_end: None,
            controls: vec![ControlKind::OffResonance, ControlKind::KernelOrthogonal],
            off_shift_h: 10.0,
            sweep_epsilons: vec![1e-2, 3e-3, 1e-3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub interaction: InteractionSection,
    #[serde(default)]
    pub wkb: WkbSection,
    #[serde(default)]
    pub symflow: SymflowSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub harness: HarnessSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            model: ModelSection::default(),
            interaction: InteractionSection::default(),
            wkb: WkbSection::default(),
            symflow: SymflowSection::default(),
            solver: SolverSection::default(),
            harness: HarnessSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check_version()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn check_version(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        Ok(())
    }

    /// Applies `key.path=value`; the value is parsed as JSON, falling back
    /// to a bare string. The path must name an existing field.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (path, raw) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {spec:?} is not KEY=VALUE")))?;
        let value: Value =
            serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut doc = serde_json::to_value(&*self)?;
        let mut node = &mut doc;
        for key in path.split('.') {
            node = match node {
                Value::Object(map) => map
                    .get_mut(key)
                    .ok_or_else(|| Error::Config(format!("unknown config key {path:?}")))?,
                Value::Array(items) => {
                    let i: usize = key
                        .parse()
                        .map_err(|_| Error::Config(format!("bad index {key:?} in {path:?}")))?;
                    items.get_mut(i).ok_or_else(|| {
                        Error::Config(format!("index {i} out of range in {path:?}"))
                    })?
                }
                _ => return Err(Error::Config(format!("{path:?} descends into a scalar"))),
            };
        }
        *node = value;
        let next: RunConfig = serde_json::from_value(doc)
            .map_err(|e| Error::Config(format!("override {path:?}: {e}")))?;
        next.check_version()?;
        *self = next;
        Ok(())
    }

    /// Validates every section against its module's preconditions.
    pub fn validate(&self) -> Result<()> {
        self.check_version()?;
        self.model.build()?;
        let bad = |name: &'static str, value: f64, reason: &str| Error::InvalidParameter {
            name,
            value,
            reason: reason.to_string(),
        };
        if !(self.wkb.length > 0.0) {
            return Err(bad("wkb.length", self.wkb.length, "must be positive"));
        }
        if !self.wkb.n_amplitude.is_power_of_two() {
            return Err(bad(
                "wkb.n_amplitude",
                self.wkb.n_amplitude as f64,
                "must be a power of two",
            ));
        }
        if !self.solver.n_points.is_power_of_two() {
            return Err(bad(
                "solver.n_points",
                self.solver.n_points as f64,
                "must be a power of two",
            ));
        }
        if !(self.solver.c_dt > 0.0) {
            return Err(bad("solver.c_dt", self.solver.c_dt, "must be positive"));
        }
        if let Some(h) = self.symflow.window_h {
            if !(h > 0.0) {
                return Err(bad("symflow.window_h", h, "must be positive"));
            }
        }
        let [a, b] = self.harness.fit_window;
        if !(0.0 <= a && a < b && b <= 1.0) {
            return Err(bad("harness.fit_window", a, "needs 0 ≤ start < end ≤ 1"));
        }
        for &e in self
            .symflow
            .epsilons
            .iter()
            .chain(&self.harness.sweep_epsilons)
        {
            self.model.build_at(e)?;
        }
        Ok(())
    }

    /// sha256 of the compact serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            params: self.model.params(),
            v0: self.wkb.v0,
            k_exp: self.harness.k_exp,
            k_a: self.harness.k_a,
            t0_factor: self.harness.t0_factor,
            psi: self.harness.psi,
            length: self.wkb.length,
            n_points: self.solver.n_points,
            n_amplitude: self.wkb.n_amplitude,
            c_dt: self.solver.c_dt,
            stride: self.solver.stride,
            fit_window: self.harness.fit_window,
            deviation: self.harness.deviation,
            wkb_level: self.wkb.level,
            window_h: self.symflow.window_h,
            dealias: self.solver.dealias,
            t_end: self.harness.t_end,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"schema_version":1,"modle":{}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"schema_version":1,"model":{"eps":0.1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"schema_version":2}"#).is_err());
        let minimal = RunConfig::from_json(r#"{"schema_version":1}"#).unwrap();
        assert_eq!(minimal, RunConfig::default());
    }

    #[test]
    fn overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_override("model.epsilon=0.001").unwrap();
        assert_eq!(cfg.model.epsilon, 1e-3);
        cfg.apply_override("symflow.window_h=0.05").unwrap();
        assert_eq!(cfg.experiment().window_h, Some(0.05));
        cfg.apply_override("harness.deviation=wkb").unwrap();
        assert_eq!(cfg.harness.deviation, DeviationMode::Wkb);
        cfg.apply_override("harness.sweep_epsilons.1=0.005")
            .unwrap();
        assert_eq!(cfg.harness.sweep_epsilons[1], 5e-3);
        assert!(cfg.apply_override("model.nope=1").is_err());
        assert!(cfg.apply_override("model.epsilon").is_err());
        assert!(cfg.apply_override("model.epsilon=\"x\"").is_err());
        let h = cfg.hash();
        cfg.apply_override("solver.stride=21").unwrap();
        assert_ne!(h, cfg.hash());
    }

    #[test]
    fn validation_rejects_out_of_regime() {
        let mut cfg = RunConfig::default();
        cfg.model.alpha0 = 2.0;
        assert!(cfg.validate().is_err());
        cfg.model.allow_outside_regime = true;
        assert!(cfg.validate().is_ok());
        assert!(RunConfig::default().validate().is_ok());
    }
}
