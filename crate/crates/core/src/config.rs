//! Simulation configuration: a TOML file with every energy in units of χN.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::angular::HalfInt;
use crate::dynamics::analysis::ThresholdRule;
use crate::dynamics::sweep::SweepSettings;
use crate::dynamics::{tau_grid, AverageOptions, EvolveMethod, EvolveOptions, InitialStateSpec, KrylovOptions};
use crate::error::{Error, Result};
use crate::fock::{C64, DEFAULT_BASIS_CAP};
use crate::fullmodel::{IntegratorOptions, ZeemanParams};
use crate::heff::{shift_suppression_diagnostic, DriveParams, HeffMode, HeffOptions};
use crate::ladder::{build_ladder_operators, LevelScheme};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveConfig {
    pub omega_a: f64,
    pub omega_b: f64,
    pub delta_a: f64,
    pub delta_b: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        DriveConfig { omega_a: 0.05, omega_b: 0.05, delta_a: -3.0, delta_b: 4.1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub tau_max: f64,
    pub samples: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { tau_max: 50.0, samples: 500 }
    }
}

/// A sweep axis: explicit values or `count` evenly spaced points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Axis::Values(ref v) => v.clone(),
            Axis::Range { start, count: 1, .. } => vec![start],
            Axis::Range { start, stop, count } => {
                (0..count).map(|k| start + (stop - start) * k as f64 / (count - 1) as f64).collect()
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub delta_a: Option<Axis>,
    pub delta_b: Option<Axis>,
    /// Upper-leg weight p_{−3/2} of the chiral initial state.
    pub weight: Option<Axis>,
    /// System sizes for finite-size scaling.
    pub atoms: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZeemanConfig {
    /// Magnetic fields in gauss.
    pub fields: Vec<f64>,
    /// χN in MHz, which sets the conversion of fields to units of χN.
    pub chi_n_mhz: f64,
}

impl Default for ZeemanConfig {
    fn default() -> Self {
        ZeemanConfig { fields: vec![0.0, 0.12, 1.77], chi_n_mhz: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    pub heff_mode: HeffMode,
    pub dense_cap: usize,
    pub basis_cap: usize,
    pub eps_res: f64,
    pub cond_max: f64,
    pub eps_deg: f64,
    pub krylov_dim: usize,
    pub krylov_tol: f64,
    pub integrator_order: usize,
    pub integrator_tol: f64,
    /// 0 uses the available parallelism.
    pub workers: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        let heff = HeffOptions::default();
        let kry = KrylovOptions::default();
        let int = IntegratorOptions::default();
        NumericsConfig {
            heff_mode: HeffMode::Exact,
            dense_cap: heff.dense_cap,
            basis_cap: DEFAULT_BASIS_CAP,
            eps_res: heff.eps_res,
            cond_max: heff.cond_max,
            eps_deg: AverageOptions::default().eps_deg,
            krylov_dim: kry.dim,
            krylov_tol: kry.tol,
            integrator_order: int.order,
            integrator_tol: int.tol,
            workers: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Exponents {
    pub beta1: f64,
    pub beta2: f64,
    pub nu: f64,
}

impl Default for Exponents {
    fn default() -> Self {
        Exponents { beta1: 1.15, beta2: 1.04, nu: 2.38 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// n(1/2)/N level defining the delay time.
    pub delay_level: f64,
    /// Light-cone threshold; by default fixed from the atom number.
    pub threshold: Option<ThresholdRule>,
    /// Half width (in χN) of the collapse window around each critical point.
    pub collapse_window: f64,
    pub exponents: Exponents,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { delay_level: 0.05, threshold: None, collapse_window: 0.3, exponents: Exponents::default() }
    }
}

/// Required ratios for the approximation-validity rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Margins {
    /// min(|Δ_ν|, |χN|) / max |Ω_ν|.
    pub adiabatic: f64,
    /// |χN| / (δ_e F_e).
    pub weak_field: f64,
    /// Largest shift gap / hopping strength at which hopping counts as resonant.
    pub shift_suppression: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Margins { adiabatic: 10.0, weak_field: 5.0, shift_suppression: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub spin: HalfInt,
    pub atoms: usize,
    pub chi_n: f64,
    pub drives: DriveConfig,
    /// Defaults to the ladder edges: upper leg in g_F, lower leg in g_{−F}.
    pub initial: Option<InitialStateSpec>,
    pub time: TimeConfig,
    pub sweep: SweepConfig,
    pub zeeman: Option<ZeemanConfig>,
    pub numerics: NumericsConfig,
    pub analysis: AnalysisConfig,
    pub margins: Margins,
    pub output: PathBuf,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            spin: HalfInt::from_twice(3),
            atoms: 10,
            chi_n: 1.0,
            drives: DriveConfig::default(),
            initial: None,
            time: TimeConfig::default(),
            sweep: SweepConfig::default(),
            zeeman: None,
            numerics: NumericsConfig::default(),
            analysis: AnalysisConfig::default(),
            margins: Margins::default(),
            output: PathBuf::from("out"),
        }
    }
}

fn positive(issues: &mut Vec<String>, path: &str, x: f64) {
    if !(x > 0.0 && x.is_finite()) {
        issues.push(format!("{path}: must be positive and finite, got {x}"));
    }
}

fn finite(issues: &mut Vec<String>, path: &str, x: f64) {
    if !x.is_finite() {
        issues.push(format!("{path}: must be finite, got {x}"));
    }
}

fn check_axis(issues: &mut Vec<String>, path: &str, axis: &Option<Axis>) {
    match axis {
        None => {}
        Some(Axis::Values(v)) => {
            if v.is_empty() {
                issues.push(format!("{path}: empty value list"));
            }
            for (i, x) in v.iter().enumerate() {
                finite(issues, &format!("{path}[{i}]"), *x);
            }
        }
        Some(Axis::Range { start, stop, count }) => {
            finite(issues, &format!("{path}.start"), *start);
            finite(issues, &format!("{path}.stop"), *stop);
            if *count == 0 {
                issues.push(format!("{path}.count: must be at least 1"));
            }
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Checks every field; errors name the offending paths. Returns
    /// warnings for admissible but unusual settings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut issues = Vec::new();
        let mut warnings = Vec::new();
        if LevelScheme::new(self.spin).is_err() {
            issues.push(format!("spin: F = {} must be a positive half-odd integer", self.spin));
        }
        if self.atoms == 0 {
            issues.push("atoms: must be positive".into());
        }
        let splits = self.initial.is_none() || self.sweep.weight.is_some();
        if splits && !self.atoms.is_multiple_of(2) {
            issues.push(format!("atoms: the initial state splits the atoms into halves, so N must be even (got {})", self.atoms));
        }
        positive(&mut issues, "chi_n", self.chi_n);
        let d = &self.drives;
        for (name, x) in [("omega_a", d.omega_a), ("omega_b", d.omega_b)] {
            if !(x >= 0.0 && x.is_finite()) {
                issues.push(format!("drives.{name}: must be nonnegative and finite, got {x}"));
            }
        }
        finite(&mut issues, "drives.delta_a", d.delta_a);
        finite(&mut issues, "drives.delta_b", d.delta_b);
        if d.omega_a > 0.0 && d.omega_b > 0.0 && d.delta_a * d.delta_b >= 0.0 {
            warnings.push(format!(
                "drives: Δ_A Δ_B = {} is not negative; the drives are assumed to sit on opposite sides of resonance",
                d.delta_a * d.delta_b
            ));
        }
        if d.omega_a != d.omega_b && (self.sweep.delta_a.is_some() || self.sweep.delta_b.is_some()) {
            warnings.push("drives: sweeps use Ω_A = Ω_B = drives.omega_a".into());
        }
        if let Some(InitialStateSpec { upper, lower }) = &self.initial {
            for (path, s) in [("initial.upper", upper), ("initial.lower", lower)] {
                if let crate::dynamics::SectorState::Superposition { p, .. } = s {
                    if !(0.0..=1.0).contains(p) {
                        issues.push(format!("{path}.p: weight must lie in [0, 1], got {p}"));
                    }
                }
            }
        }
        positive(&mut issues, "time.tau_max", self.time.tau_max);
        if self.time.samples < 2 {
            issues.push(format!("time.samples: need at least 2, got {}", self.time.samples));
        }
        check_axis(&mut issues, "sweep.delta_a", &self.sweep.delta_a);
        check_axis(&mut issues, "sweep.delta_b", &self.sweep.delta_b);
        check_axis(&mut issues, "sweep.weight", &self.sweep.weight);
        if let Some(Axis::Values(v)) = &self.sweep.weight {
            for (i, p) in v.iter().enumerate() {
                if !(0.0..=1.0).contains(p) {
                    issues.push(format!("sweep.weight[{i}]: must lie in [0, 1], got {p}"));
                }
            }
        }
        for (i, n) in self.sweep.atoms.iter().enumerate() {
            if *n == 0 || !n.is_multiple_of(2) {
                issues.push(format!("sweep.atoms[{i}]: must be positive and even, got {n}"));
            }
        }
        if let Some(z) = &self.zeeman {
            positive(&mut issues, "zeeman.chi_n_mhz", z.chi_n_mhz);
            for (i, b) in z.fields.iter().enumerate() {
                finite(&mut issues, &format!("zeeman.fields[{i}]"), *b);
            }
        }
        let n = &self.numerics;
        for (path, x) in [
            ("numerics.eps_res", n.eps_res),
            ("numerics.cond_max", n.cond_max),
            ("numerics.eps_deg", n.eps_deg),
            ("numerics.krylov_tol", n.krylov_tol),
            ("numerics.integrator_tol", n.integrator_tol),
        ] {
            positive(&mut issues, path, x);
        }
        for (path, x) in [
            ("numerics.dense_cap", n.dense_cap),
            ("numerics.basis_cap", n.basis_cap),
            ("numerics.krylov_dim", n.krylov_dim),
        ] {
            if x == 0 {
                issues.push(format!("{path}: must be positive"));
            }
        }
        if ![2, 4, 6].contains(&n.integrator_order) {
            issues.push(format!("numerics.integrator_order: must be 2, 4 or 6, got {}", n.integrator_order));
        }
        let a = &self.analysis;
        positive(&mut issues, "analysis.delay_level", a.delay_level);
        positive(&mut issues, "analysis.collapse_window", a.collapse_window);
        positive(&mut issues, "analysis.exponents.nu", a.exponents.nu);
        finite(&mut issues, "analysis.exponents.beta1", a.exponents.beta1);
        finite(&mut issues, "analysis.exponents.beta2", a.exponents.beta2);
        if let Some(ThresholdRule::FractionOfExtreme(f)) = a.threshold {
            if !(f > 0.0 && f <= 1.0) {
                issues.push(format!("analysis.threshold.fraction_of_extreme: must lie in (0, 1], got {f}"));
            }
        }
        positive(&mut issues, "margins.adiabatic", self.margins.adiabatic);
        positive(&mut issues, "margins.weak_field", self.margins.weak_field);
        positive(&mut issues, "margins.shift_suppression", self.margins.shift_suppression);
        if issues.is_empty() {
            Ok(warnings)
        } else {
            Err(Error::Config(issues.join("; ")))
        }
    }

    pub fn scheme(&self) -> Result<LevelScheme> {
        LevelScheme::new(self.spin)
    }

    pub fn drive_params(&self) -> DriveParams {
        let d = self.drives;
        DriveParams::new(d.omega_a, d.delta_a, d.omega_b, d.delta_b)
    }

    pub fn initial_state(&self) -> Result<InitialStateSpec> {
        match &self.initial {
            Some(s) => Ok(s.clone()),
            None => Ok(InitialStateSpec::ladder_edges(&self.scheme()?)),
        }
    }

    pub fn tau(&self) -> Vec<f64> {
        tau_grid(self.time.tau_max, self.time.samples)
    }

    pub fn heff_options(&self) -> HeffOptions {
        let n = &self.numerics;
        HeffOptions { dense_cap: n.dense_cap, eps_res: n.eps_res, cond_max: n.cond_max }
    }

    pub fn settings(&self) -> SweepSettings {
        let n = &self.numerics;
        SweepSettings {
            atoms: self.atoms,
            chi_n: self.chi_n,
            omega: self.drives.omega_a,
            heff_mode: n.heff_mode,
            heff: self.heff_options(),
            average: AverageOptions { eps_deg: n.eps_deg, dense_cap: n.dense_cap },
            workers: n.workers,
            basis_cap: n.basis_cap,
        }
    }

    pub fn evolve_options(&self) -> EvolveOptions {
        let n = &self.numerics;
        EvolveOptions {
            method: EvolveMethod::Auto,
            dense_cap: n.dense_cap,
            krylov: KrylovOptions { dim: n.krylov_dim, tol: n.krylov_tol, ..KrylovOptions::default() },
        }
    }

    pub fn integrator_options(&self) -> IntegratorOptions {
        let n = &self.numerics;
        IntegratorOptions {
            order: n.integrator_order,
            tol: n.integrator_tol,
            dense_cap: n.dense_cap,
            ..IntegratorOptions::default()
        }
    }

    pub fn threshold(&self) -> ThresholdRule {
        self.analysis.threshold.unwrap_or_else(|| ThresholdRule::for_atoms(self.atoms))
    }

    pub fn delta_a_axis(&self) -> Vec<f64> {
        self.sweep.delta_a.as_ref().map(Axis::values).unwrap_or_else(|| vec![self.drives.delta_a])
    }

    pub fn delta_b_axis(&self) -> Vec<f64> {
        self.sweep.delta_b.as_ref().map(Axis::values).unwrap_or_else(|| vec![self.drives.delta_b])
    }

    pub fn weight_axis(&self) -> Vec<f64> {
        self.sweep.weight.as_ref().map(Axis::values).unwrap_or_else(|| vec![0.5])
    }

    pub fn atoms_axis(&self) -> Vec<usize> {
        if self.sweep.atoms.is_empty() {
            vec![self.atoms]
        } else {
            self.sweep.atoms.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Pass,
    Warn,
    Skip,
}

/// One approximation-validity check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub approximation: String,
    pub requirement: String,
    /// The ratio that has to be large (or small, for the shift row).
    pub ratio: Option<f64>,
    pub margin: f64,
    pub status: RowStatus,
    pub detail: String,
}

/// Evaluates the parameter-regime inequalities of the model for a config.
pub fn regime_report(cfg: &SimConfig) -> Result<Vec<RegimeRow>> {
    cfg.validate()?;
    let drives = cfg.drive_params();
    let mut rows = Vec::new();

    let omega_max = drives.active().map(|d| d.omega.abs()).fold(0.0f64, f64::max);
    let scale = drives.active().map(|d| d.delta.abs()).fold(cfg.chi_n.abs(), f64::min);
    let (ratio, status, detail) = if omega_max == 0.0 {
        (None, RowStatus::Skip, "no active drive".to_string())
    } else {
        let r = scale / omega_max;
        let s = if r >= cfg.margins.adiabatic { RowStatus::Pass } else { RowStatus::Warn };
        (Some(r), s, format!("min(|Δ|, |χN|) = {scale:.4}, max |Ω| = {omega_max:.4}"))
    };
    rows.push(RegimeRow {
        approximation: "adiabatic elimination of atomic excited states".into(),
        requirement: "|Δ_A|, |Δ_B|, |χN| ≫ |Ω_A|, |Ω_B|".into(),
        ratio,
        margin: cfg.margins.adiabatic,
        status,
        detail,
    });

    let f_e = cfg.spin.value();
    match &cfg.zeeman {
        None => rows.push(RegimeRow {
            approximation: "weak magnetic field".into(),
            requirement: "|χN| ≫ δ_e F_e".into(),
            ratio: None,
            margin: cfg.margins.weak_field,
            status: RowStatus::Skip,
            detail: "no magnetic field configured".into(),
        }),
        Some(z) => {
            for &b in &z.fields {
                let zp = ZeemanParams::from_field(b, z.chi_n_mhz)?;
                let shift = (zp.delta_e * f_e).abs();
                let ratio = if shift == 0.0 { f64::INFINITY } else { cfg.chi_n.abs() / shift };
                rows.push(RegimeRow {
                    approximation: format!("weak magnetic field (B = {b} G)"),
                    requirement: "|χN| ≫ δ_e F_e".into(),
                    ratio: Some(ratio),
                    margin: cfg.margins.weak_field,
                    status: if ratio >= cfg.margins.weak_field { RowStatus::Pass } else { RowStatus::Warn },
                    detail: format!("δ_e = {:.4} χN, F_e = {}", zp.delta_e, cfg.spin),
                });
            }
        }
    }

    rows.push(shift_row(cfg, &drives));
    Ok(rows)
}

/// Compares the H_eff energy gap between the initial state and its image
/// under one correlated hop with the hopping strength.
fn shift_row(cfg: &SimConfig, drives: &DriveParams) -> RegimeRow {
    let mut row = RegimeRow {
        approximation: "correlated hopping not suppressed by shifts".into(),
        requirement: "shift gap ≲ hopping strength".into(),
        ratio: None,
        margin: cfg.margins.shift_suppression,
        status: RowStatus::Skip,
        detail: String::new(),
    };
    let run = || -> Result<f64> {
        let scheme = cfg.scheme()?;
        if !cfg.atoms.is_multiple_of(2) {
            return Err(Error::domain("odd atom number"));
        }
        let basis = scheme.leg_basis(cfg.atoms / 2, cfg.atoms / 2, cfg.numerics.basis_cap)?;
        let psi = cfg.initial_state()?.build(&basis)?;
        let ops = build_ladder_operators(&scheme, &basis)?;
        let hopped: DVector<C64> = ops.t_plus.mul_vec(&ops.t_minus.mul_vec(&psi));
        let norm = hopped.norm();
        if norm < 1e-12 {
            return Err(Error::Diagnostic("the initial state admits no correlated hop".into()));
        }
        let target = hopped / C64::new(norm, 0.0);
        let diag = shift_suppression_diagnostic(
            cfg.numerics.heff_mode,
            &scheme,
            &basis,
            drives,
            cfg.chi_n,
            &psi,
            &target,
        )?;
        Ok(diag.ratio)
    };
    match run() {
        Ok(r) => {
            row.ratio = Some(r);
            row.status = if r <= cfg.margins.shift_suppression { RowStatus::Pass } else { RowStatus::Warn };
            row.detail = format!("shift gap / hopping strength = {r:.4}");
        }
        Err(e) => row.detail = format!("not evaluated: {e}"),
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = SimConfig::default();
        assert!(cfg.validate().unwrap().is_empty());
        let back = SimConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(cfg, back);
        let back = SimConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn field_paths_in_errors() {
        let cfg = SimConfig::from_toml_str("atoms = 7\n[drives]\nomega_a = -1.0\n[numerics]\nkrylov_tol = 0.0\n").unwrap();
        let msg = cfg.validate().unwrap_err().to_string();
        for path in ["atoms", "drives.omega_a", "numerics.krylov_tol"] {
            assert!(msg.contains(path), "{msg}");
        }
        let err = SimConfig::from_toml_str("[drives]\nomega_c = 1.0\n").unwrap_err().to_string();
        assert!(err.contains("omega_c"), "{err}");
    }

    #[test]
    fn same_sign_detunings_warn() {
        let cfg = SimConfig { drives: DriveConfig { delta_b: -4.0, ..Default::default() }, ..Default::default() };
        assert_eq!(cfg.validate().unwrap().len(), 1);
    }

    #[test]
    fn axes() {
        let cfg = SimConfig::from_toml_str(
            "[sweep]\ndelta_a = [-4.0]\ndelta_b = { start = 4.0, stop = 7.0, count = 4 }\n",
        )
        .unwrap();
        assert_eq!(cfg.delta_a_axis(), vec![-4.0]);
        assert_eq!(cfg.delta_b_axis(), vec![4.0, 5.0, 6.0, 7.0]);
        assert_eq!(SimConfig::default().delta_b_axis(), vec![4.1]);
    }

    #[test]
    fn regime_rows() {
        let base = SimConfig::default();
        let rows = regime_report(&base).unwrap();
        assert_eq!(rows[0].status, RowStatus::Pass);
        assert_eq!(rows[1].status, RowStatus::Skip);

        let strong = SimConfig { drives: DriveConfig { omega_a: 0.5, omega_b: 0.5, ..Default::default() }, ..base.clone() };
        assert_eq!(regime_report(&strong).unwrap()[0].status, RowStatus::Warn);

        let field = SimConfig { zeeman: Some(ZeemanConfig { fields: vec![0.12, 1.77], chi_n_mhz: 1.0 }), ..base };
        let rows = regime_report(&field).unwrap();
        assert_eq!(rows[1].status, RowStatus::Pass);
        assert_eq!(rows[2].status, RowStatus::Warn);
    }
}
