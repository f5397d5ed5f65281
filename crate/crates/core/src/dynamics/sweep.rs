//! Parameter sweeps over detunings and initial-state weights. Cells are
//! independent and run on a rayon pool; results are merged by grid index.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analysis::{light_cone_front, LightCone, ScalingCurve, ThresholdRule};
use super::{
    correlator_series, evolve, leg_observables, long_time_average, population_observables, AverageOptions, CellValue, DiagObservable,
    EvolveOptions, InitialStateSpec, SectorState, SweepResult, TimeSeries,
};
use crate::angular::HalfInt;
use crate::error::{Error, Result};
use crate::fock::{ModeLabel, ModeSpace, ProductBasis, DEFAULT_BASIS_CAP};
use crate::heff::{build_heff, DriveParams, HeffMode, HeffOptions};
use crate::ladder::LevelScheme;
use crate::upa::{
    bdg_propagate_vacuum, four_level_k, four_level_phase_boundary, four_level_population, six_level_ndiff, six_level_quadratic, PhaseBoundary,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepSettings {
    /// Total atom number, split evenly between the legs.
    pub atoms: usize,
    pub chi_n: f64,
    /// Ω_A = Ω_B.
    pub omega: f64,
    pub heff_mode: HeffMode,
    pub heff: HeffOptions,
    pub average: AverageOptions,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
    pub basis_cap: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            atoms: 10,
            chi_n: 1.0,
            omega: 0.05,
            heff_mode: HeffMode::Exact,
            heff: HeffOptions::default(),
            average: AverageOptions::default(),
            workers: 0,
            basis_cap: DEFAULT_BASIS_CAP,
        }
    }
}

impl SweepSettings {
    fn halves(&self) -> Result<usize> {
        if self.atoms == 0 || !self.atoms.is_multiple_of(2) {
            return Err(Error::domain(format!("atom number {} must be positive and even", self.atoms)));
        }
        Ok(self.atoms / 2)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))
    }
}

fn h(twice: i32) -> HalfInt {
    HalfInt::from_twice(twice)
}

fn observable(space: &ProductBasis, m: HalfInt, name: &str) -> Result<DiagObservable> {
    Ok(DiagObservable::new(name, space.occupation_diag(ModeLabel::ground(m))?))
}

/// Runs `f` on every (i, j) cell; resonance errors mask the cell, anything
/// else aborts the sweep.
fn run_grid<F>(settings: &SweepSettings, nx: usize, ny: usize, f: F) -> Result<Vec<CellValue>>
where
    F: Fn(usize, usize) -> Result<CellValue> + Sync,
{
    let pool = settings.pool()?;
    let cells: Vec<Result<CellValue>> = pool.install(|| {
        (0..nx * ny)
            .into_par_iter()
            .map(|k| match f(k / ny, k % ny) {
                Err(Error::Resonance(msg)) => Ok(CellValue::Masked(format!("resonance: {msg}"))),
                other => other,
            })
            .collect()
    });
    cells.into_iter().collect()
}

/// Long-time average N̄_{±1/2}/N of the four-level quench from
/// |g_{−3/2}⟩^{⊗N/2}|g_{3/2}⟩^{⊗N/2} on a (Δ_A, Δ_B) grid. The UPA phase
/// boundary for each Δ_A goes into the metadata.
pub fn pair_production_sweep(settings: &SweepSettings, delta_a: &[f64], delta_b: &[f64]) -> Result<SweepResult> {
    let half = settings.halves()?;
    let scheme = LevelScheme::new(h(3))?;
    let basis = scheme.leg_basis(half, half, settings.basis_cap)?;
    let psi = InitialStateSpec::ladder_edges(&scheme).build(&basis)?;
    let obs = vec![observable(&basis, h(1), "n(1/2)/N")?, observable(&basis, h(-1), "n(-1/2)/N")?];
    let n = settings.atoms as f64;
    let cells = run_grid(settings, delta_a.len(), delta_b.len(), |i, j| {
        let drives = DriveParams::symmetric(settings.omega, delta_a[i], delta_b[j]);
        let heff = build_heff(settings.heff_mode, &scheme, &basis, &drives, settings.chi_n, &settings.heff, Some(&psi))?;
        let avg = long_time_average(&heff, &psi, &obs, &settings.average)?;
        Ok(CellValue::Ok(avg.into_iter().map(|v| v / n).collect()))
    })?;
    let mut boundaries = Vec::with_capacity(delta_a.len());
    for &da in delta_a {
        let b = four_level_phase_boundary(da, settings.chi_n, settings.omega, None).unwrap_or_default();
        boundaries.push(serde_json::json!({ "delta_a": da, "first": b.first, "second": b.second }));
    }
    Ok(SweepResult {
        x_name: "delta_a".into(),
        x: delta_a.to_vec(),
        y_name: "delta_b".into(),
        y: delta_b.to_vec(),
        channels: obs.iter().map(|o| o.name.clone()).collect(),
        cells,
        meta: serde_json::json!({
            "atoms": settings.atoms,
            "chi_n": settings.chi_n,
            "omega": settings.omega,
            "heff_mode": format!("{:?}", settings.heff_mode),
            "upa_boundary": boundaries,
        }),
    })
}

/// UPA boundary roots along Δ_B at fixed Δ_A.
pub fn upa_boundary(settings: &SweepSettings, delta_a: f64) -> Result<PhaseBoundary> {
    four_level_phase_boundary(delta_a, settings.chi_n, settings.omega, None)
}

/// The six-level chiral quench: upper leg in (√p|g_{−3/2}⟩ + √(1−p)|g_{5/2}⟩)^{⊗N/2},
/// lower leg in |g_{−1/2}⟩^{⊗N/2}.
pub struct ChiralSetup {
    pub scheme: LevelScheme,
    pub basis: ProductBasis,
    pub observables: Vec<DiagObservable>,
}

pub const N_DIFF: &str = "N_diff";
pub const N_SUM: &str = "N_sum";

impl ChiralSetup {
    pub fn new(settings: &SweepSettings) -> Result<Self> {
        let half = settings.halves()?;
        let scheme = LevelScheme::new(h(5))?;
        let basis = scheme.leg_basis(half, half, settings.basis_cap)?;
        let up = basis.occupation_diag(ModeLabel::ground(h(3)))?;
        let down = basis.occupation_diag(ModeLabel::ground(h(-5)))?;
        let diff = up.iter().zip(&down).map(|(a, b)| a - b).collect();
        let sum = up.iter().zip(&down).map(|(a, b)| a + b).collect();
        let observables = vec![DiagObservable::new(N_DIFF, diff), DiagObservable::new(N_SUM, sum)];
        Ok(ChiralSetup { scheme, basis, observables })
    }

    pub fn initial_state(&self, p: f64) -> InitialStateSpec {
        InitialStateSpec {
            upper: SectorState::Superposition { modes: [h(-3), h(5)], p },
            lower: SectorState::single(h(-1)),
        }
    }
}

/// N̄_diff, N̄_sum and the balance N̄_diff/N̄_sum on a (p_{−3/2}, Δ_B) grid.
pub fn chiral_transport(settings: &SweepSettings, delta_a: f64, p: &[f64], delta_b: &[f64]) -> Result<SweepResult> {
    let setup = ChiralSetup::new(settings)?;
    let cells = run_grid(settings, p.len(), delta_b.len(), |i, j| {
        let psi = setup.initial_state(p[i]).build(&setup.basis)?;
        let drives = DriveParams::symmetric(settings.omega, delta_a, delta_b[j]);
        let heff = build_heff(
            settings.heff_mode,
            &setup.scheme,
            &setup.basis,
            &drives,
            settings.chi_n,
            &settings.heff,
            Some(&psi),
        )?;
        let avg = long_time_average(&heff, &psi, &setup.observables, &settings.average)?;
        let (diff, sum) = (avg[0], avg[1]);
        if sum < 1e-6 {
            return Ok(CellValue::Masked(format!("undefined balance: N_sum = {sum:.3e}")));
        }
        Ok(CellValue::Ok(vec![diff, sum, diff / sum]))
    })?;
    Ok(SweepResult {
        x_name: "p".into(),
        x: p.to_vec(),
        y_name: "delta_b".into(),
        y: delta_b.to_vec(),
        channels: vec![N_DIFF.into(), N_SUM.into(), "balance".into()],
        cells,
        meta: serde_json::json!({
            "atoms": settings.atoms,
            "chi_n": settings.chi_n,
            "omega": settings.omega,
            "delta_a": delta_a,
        }),
    })
}

/// Short-time N_diff, N_sum, leg numbers and populations of one chiral cell,
/// with the UPA prediction as channel `N_diff (UPA)`.
pub fn chiral_series(
    settings: &SweepSettings,
    delta_a: f64,
    p: f64,
    delta_b: f64,
    tau: &[f64],
    evolve_opts: &EvolveOptions,
) -> Result<TimeSeries> {
    let setup = ChiralSetup::new(settings)?;
    let psi = setup.initial_state(p).build(&setup.basis)?;
    let drives = DriveParams::symmetric(settings.omega, delta_a, delta_b);
    let heff = build_heff(
        settings.heff_mode,
        &setup.scheme,
        &setup.basis,
        &drives,
        settings.chi_n,
        &settings.heff,
        Some(&psi),
    )?;
    let mut obs = setup.observables.clone();
    obs.extend(leg_observables(&setup.scheme, &setup.basis)?);
    obs.extend(population_observables(&setup.basis)?);
    let (mut ts, report) = evolve(&heff, &psi, tau, &obs, evolve_opts)?;
    let times: Vec<f64> =
        tau.iter().map(|&x| super::tau_to_time(x, drives.omega_ref(), settings.chi_n)).collect();
    let upa = six_level_quadratic(&drives, settings.chi_n, p).and_then(|q| bdg_propagate_vacuum(&q, &times));
    let upa_error = match upa {
        Ok(v) => {
            ts.push_channel("N_diff (UPA)", six_level_ndiff(&v))?;
            None
        }
        Err(e) => {
            ts.push_channel("N_diff (UPA)", vec![f64::NAN; tau.len()])?;
            Some(e.to_string())
        }
    };
    ts.meta = serde_json::json!({
        "atoms": settings.atoms,
        "delta_a": delta_a,
        "delta_b": delta_b,
        "p": p,
        "omega": settings.omega,
        "chi_n": settings.chi_n,
        "propagation": report,
        "upa_error": upa_error,
    });
    Ok(ts)
}

/// Long-time N̄_{±1/2}/N along Δ_B for one system size, as used by the
/// finite-size analysis.
pub fn order_parameter_curve(settings: &SweepSettings, delta_a: f64, delta_b: &[f64]) -> Result<Vec<Option<f64>>> {
    let sweep = pair_production_sweep(settings, &[delta_a], delta_b)?;
    Ok((0..delta_b.len()).map(|j| sweep.value(0, j, "n(1/2)/N")).collect())
}

/// Four-level pair-production trajectory n(±1/2)/N from the ladder edges,
/// with the UPA vacuum population per mode as `n(1/2)/N (UPA)`.
pub fn pair_series(
    settings: &SweepSettings,
    delta_a: f64,
    delta_b: f64,
    tau: &[f64],
    evolve_opts: &EvolveOptions,
) -> Result<TimeSeries> {
    let half = settings.halves()?;
    let scheme = LevelScheme::new(h(3))?;
    let basis = scheme.leg_basis(half, half, settings.basis_cap)?;
    let psi = InitialStateSpec::ladder_edges(&scheme).build(&basis)?;
    let n = settings.atoms as f64;
    let scaled = |m: i32, name: &str| -> Result<DiagObservable> {
        let o = observable(&basis, h(m), name)?;
        Ok(DiagObservable::new(name, o.diag.iter().map(|x| x / n).collect()))
    };
    let mut obs = vec![scaled(1, "n(1/2)/N")?, scaled(-1, "n(-1/2)/N")?];
    obs.extend(leg_observables(&scheme, &basis)?);
    let drives = DriveParams::symmetric(settings.omega, delta_a, delta_b);
    let heff = build_heff(settings.heff_mode, &scheme, &basis, &drives, settings.chi_n, &settings.heff, Some(&psi))?;
    let (mut ts, report) = evolve(&heff, &psi, tau, &obs, evolve_opts)?;
    let upa = four_level_k(&drives, settings.chi_n).map(|k| {
        tau.iter()
            .map(|&x| four_level_population(&k, super::tau_to_time(x, drives.omega_ref(), settings.chi_n)) / n)
            .collect::<Vec<f64>>()
    });
    let upa_error = match upa {
        Ok(v) => {
            ts.push_channel("n(1/2)/N (UPA)", v)?;
            None
        }
        Err(e) => {
            ts.push_channel("n(1/2)/N (UPA)", vec![f64::NAN; tau.len()])?;
            Some(e.to_string())
        }
    };
    ts.meta = serde_json::json!({
        "atoms": settings.atoms,
        "delta_a": delta_a,
        "delta_b": delta_b,
        "omega": settings.omega,
        "chi_n": settings.chi_n,
        "propagation": report,
        "upa_error": upa_error,
    });
    Ok(ts)
}

/// Delay time t* (first τ with n(1/2)/N ≥ `level`) for each atom number.
pub fn delay_times(
    settings: &SweepSettings,
    atoms: &[usize],
    delta_a: f64,
    delta_b: f64,
    tau: &[f64],
    level: f64,
    evolve_opts: &EvolveOptions,
) -> Result<Vec<Option<f64>>> {
    let pool = settings.pool()?;
    let runs: Vec<Result<Option<f64>>> = pool.install(|| {
        atoms
            .par_iter()
            .map(|&n| {
                let s = SweepSettings { atoms: n, ..*settings };
                let ts = pair_series(&s, delta_a, delta_b, tau, evolve_opts)?;
                Ok(super::analysis::delay_time(&ts.tau, ts.channel("n(1/2)/N")?, level))
            })
            .collect()
    });
    runs.into_iter().collect()
}

/// Long-time order parameter against Δ_B for each atom number; masked
/// cells are dropped from the curve.
pub fn scaling_curves(
    settings: &SweepSettings,
    atoms: &[usize],
    delta_a: f64,
    delta_b: &[f64],
) -> Result<Vec<ScalingCurve>> {
    let mut out = Vec::with_capacity(atoms.len());
    for &n in atoms {
        let s = SweepSettings { atoms: n, ..*settings };
        let values = order_parameter_curve(&s, delta_a, delta_b)?;
        let (control, value): (Vec<f64>, Vec<f64>) =
            delta_b.iter().zip(values).filter_map(|(x, v)| v.map(|v| (*x, v))).unzip();
        out.push(ScalingCurve { n: n as f64, control, value });
    }
    Ok(out)
}

/// Connected correlators C(0, r) of the quench from the ladder edges of a
/// spin-F scheme, and the light-cone front they define.
#[allow(clippy::too_many_arguments)]
pub fn light_cone(
    settings: &SweepSettings,
    spin: HalfInt,
    delta_a: f64,
    delta_b: f64,
    tau: &[f64],
    rule: ThresholdRule,
    evolve_opts: &EvolveOptions,
) -> Result<(TimeSeries, LightCone)> {
    let half = settings.halves()?;
    let scheme = LevelScheme::new(spin)?;
    let basis = scheme.leg_basis(half, half, settings.basis_cap)?;
    let psi = InitialStateSpec::ladder_edges(&scheme).build(&basis)?;
    let drives = DriveParams::symmetric(settings.omega, delta_a, delta_b);
    let heff = build_heff(settings.heff_mode, &scheme, &basis, &drives, settings.chi_n, &settings.heff, Some(&psi))?;
    let (mut ts, report) = correlator_series(&heff, &psi, tau, &scheme, &basis, evolve_opts)?;
    let front = light_cone_front(&ts, rule)?;
    ts.meta = serde_json::json!({
        "atoms": settings.atoms,
        "spin": spin,
        "delta_a": delta_a,
        "delta_b": delta_b,
        "omega": settings.omega,
        "chi_n": settings.chi_n,
        "propagation": report,
        "front": front,
    });
    Ok((ts, front))
}

/// Settings snapshot for metadata and file-name hashing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSnapshot {
    pub atoms: usize,
    pub chi_n: f64,
    pub omega: f64,
}

impl From<&SweepSettings> for SweepSnapshot {
    fn from(s: &SweepSettings) -> Self {
        SweepSnapshot { atoms: s.atoms, chi_n: s.chi_n, omega: s.omega }
    }
}
