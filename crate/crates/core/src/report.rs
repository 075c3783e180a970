//! Serialized outputs: the resonance audit document and bundle directories
//! whose every file carries the config hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::grid::Grid1D;
use crate::harness::V0Spec;
use crate::interaction::{
    big_gamma, big_gamma1, classify_all, dt_g_at_zero, dt_g_at_zero_complete, fundamental_zero_set,
    gamma1, select_xi0, weak_transparency_audit, AuditResult, Couplings, ResonancePoints,
    Tolerances, TransparencyReport, Verdict,
};
use crate::linalg::C64;
use crate::model::{Model, ModelParams, Phase};

pub const AUDIT_FORMAT: &str = "slowinst-audit";
pub const AUDIT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResonanceAudit {
    pub format: String,
    pub version: u32,
    pub params: ModelParams,
    pub phase: Phase,
    pub points: ResonancePoints,
    pub resonance_set: [f64; 6],
    pub window_h: f64,
    pub weak_transparency: AuditResult,
    /// Largest norm over the fundamental-harmonic zero set on a ξ grid.
    pub fundamental_zero_set_max: f64,
    pub transparency: Vec<TransparencyReport>,
    pub non_transparent: Vec<String>,
    pub xi0: f64,
    pub xi0_r: f64,
    pub gamma1_at_xi0: f64,
    pub big_gamma: f64,
    pub gamma1_index: f64,
    pub gamma1_index_literal: f64,
    pub max_dtg0: f64,
    pub max_dtg0_literal: f64,
    pub matches_closed_form: bool,
    pub mismatches: Vec<String>,
}

/// Compares the non-transparent reports against the closed-form list:
/// same tuples, same bilinear form, hot points at the closed-form
/// frequencies with norms above `tol.nonzero`, and nothing hot at p = ±1.
pub fn classification_mismatches(
    reports: &[TransparencyReport],
    pts: &ResonancePoints,
    tol: &Tolerances,
) -> Vec<String> {
    let mut out = Vec::new();
    let expected = pts.expected_non_transparent();
    let non: Vec<&TransparencyReport> = reports
        .iter()
        .filter(|r| r.verdict == Verdict::NonTransparent)
        .collect();
    for r in &non {
        if !expected.iter().any(|(s, _, _)| *s == r.spec) {
            out.push(format!("unexpected non-transparent {}", r.label));
        }
    }
    for (spec, b, want) in &expected {
        let Some(r) = non.iter().find(|r| r.spec == *spec) else {
            out.push(format!("missing non-transparent {}", spec.label()));
            continue;
        };
        if r.bilinear != *b {
            out.push(format!("{}: coupling {:?} != {:?}", r.label, r.bilinear, b));
        }
        let hot: Vec<(f64, f64)> = r
            .points
            .iter()
            .zip(&r.coefficient_norms_at_points)
            .filter(|(_, n)| **n >= tol.tol_zero)
            .map(|(x, n)| (*x, *n))
            .collect();
        if hot.len() != want.len() {
            out.push(format!(
                "{}: {} hot points, expected {}",
                r.label,
                hot.len(),
                want.len()
            ));
            continue;
        }
        for ((x, n), y) in hot.iter().zip(want) {
            if (x - y).abs() > 1e-8 {
                out.push(format!("{}: point {x} != {y}", r.label));
            }
            if *n <= tol.nonzero {
                out.push(format!("{}: norm {n:.3e} below {}", r.label, tol.nonzero));
            }
        }
    }
    for r in reports.iter().filter(|r| r.spec.p.abs() == 1) {
        if r.verdict == Verdict::NonTransparent {
            out.push(format!("fundamental tuple {} non-transparent", r.label));
        }
    }
    out
}

pub fn resonance_audit(
    model: &Model,
    tol: &Tolerances,
    pmax: i32,
    window_h: Option<f64>,
    v0: &V0Spec,
    grid: &Grid1D,
) -> Result<ResonanceAudit> {
    let pts = ResonancePoints::compute(model)?;
    let h = window_h.unwrap_or(0.1 * pts.min_separation()?);
    let weak = weak_transparency_audit(model, pmax, &Couplings::default());
    let reports = classify_all(model, tol)?;
    let zero_max = (0..=200)
        .map(|i| -10.0 + 20.0 * i as f64 / 200.0)
        .flat_map(|x| fundamental_zero_set(model, x))
        .fold(0.0, f64::max);
    let mut mismatches = classification_mismatches(&reports, &pts, tol);
    if !weak.passed {
        mismatches.push(format!(
            "weak transparency residual {:.3e}",
            weak.max_residual
        ));
    }
    if zero_max >= 1e-14 {
        mismatches.push(format!("fundamental zero set reaches {zero_max:.3e}"));
    }
    let data = v0.sample(model, grid);
    let complete = dt_g_at_zero_complete(model, &data)?;
    let literal = dt_g_at_zero(model, &data)?;
    let (xi0, xi0_r) = select_xi0(model, (pts.xi2, pts.xi3))?;
    let g0 = vec![C64::new(0.0, 0.0); grid.n];
    let maxabs = |v: &[C64]| v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(ResonanceAudit {
        format: AUDIT_FORMAT.into(),
        version: AUDIT_VERSION,
        params: model.params,
        phase: model.phase,
        resonance_set: pts.set_r(),
        points: pts,
        window_h: h,
        weak_transparency: weak,
        fundamental_zero_set_max: zero_max,
        non_transparent: reports
            .iter()
            .filter(|r| r.verdict == Verdict::NonTransparent)
            .map(|r| r.label.clone())
            .collect(),
        big_gamma: big_gamma(model, &g0, &reports),
        transparency: reports,
        xi0,
        xi0_r,
        gamma1_at_xi0: gamma1(model, xi0),
        gamma1_index: big_gamma1(model, &complete, xi0),
        gamma1_index_literal: big_gamma1(model, &literal, xi0),
        max_dtg0: maxabs(&complete),
        max_dtg0_literal: maxabs(&literal),
        matches_closed_form: mismatches.is_empty(),
        mismatches,
    })
}

/// Convenience used by the C ABI: defaults for everything but the model.
pub fn default_audit(model: &Model) -> Result<ResonanceAudit> {
    let grid = Grid1D::new(8.0, 256)?;
    resonance_audit(
        model,
        &Tolerances::default(),
        6,
        None,
        &V0Spec::default(),
        &grid,
    )
}

/// An output directory; JSON files get a `config_hash` field and CSV files
/// a `# config_hash` plus `# format` header.
pub struct Bundle {
    pub dir: PathBuf,
    pub hash: String,
}

impl Bundle {
    pub fn create(dir: &Path, hash: &str) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Bundle {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_value(value)?;
        match &mut v {
            Value::Object(map) => {
                map.insert("config_hash".into(), Value::String(self.hash.clone()));
            }
            other => {
                let inner = std::mem::take(other);
                *other = serde_json::json!({ "config_hash": self.hash, "data": inner });
            }
        }
        let mut text = serde_json::to_string_pretty(&v)?;
        text.push('\n');
        std::fs::write(self.path(name), text)?;
        Ok(())
    }

    /// `format` names the fixed column layout, e.g. `timeseries/1`.
    pub fn write_csv(&self, name: &str, format: &str, body: &str) -> Result<()> {
        let text = format!("# config_hash {}\n# format {format}\n{body}", self.hash);
        std::fs::write(self.path(name), text)?;
        Ok(())
    }

    pub fn write_text(&self, name: &str, body: &str) -> Result<()> {
        std::fs::write(
            self.path(name),
            format!("config_hash {}\n{body}", self.hash),
        )?;
        Ok(())
    }
}
