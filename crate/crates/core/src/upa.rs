//! Undepleted-pump approximation: closed forms for the four-level ladder and
//! quadratic boson Hamiltonians solved through the Bogoliubov-de Gennes
//! problem.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::C64;
use crate::heff::DriveParams;

/// Ĥ = Σ_ij [L_ij a†_i a_j + ½ M_ij a†_i a†_j + ½ M*_ij a_i a_j].
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm {
    pub l: DMatrix<C64>,
    pub m: DMatrix<C64>,
    pub modes: Vec<String>,
}

impl QuadraticForm {
    pub fn new(l: DMatrix<C64>, m: DMatrix<C64>, modes: Vec<String>) -> Result<Self> {
        let n = l.nrows();
        if l.ncols() != n || m.shape() != (n, n) || modes.len() != n {
            return Err(Error::domain("L, M and mode labels must share one dimension"));
        }
        let scale = l.camax().max(m.camax()).max(1e-300);
        if (&l - l.adjoint()).camax() > 1e-12 * scale {
            return Err(Error::domain("L is not Hermitian"));
        }
        if (&m - m.transpose()).camax() > 1e-12 * scale {
            return Err(Error::domain("M is not symmetric"));
        }
        Ok(QuadraticForm { l, m, modes })
    }

    pub fn from_real(l: DMatrix<f64>, m: DMatrix<f64>, modes: Vec<String>) -> Result<Self> {
        Self::new(l.map(|x| C64::new(x, 0.0)), m.map(|x| C64::new(x, 0.0)), modes)
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// G = [[L, M], [−M*, −L*]], the generator of (A, A†).
    pub fn bdg_matrix(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut g = DMatrix::zeros(2 * n, 2 * n);
        g.view_mut((0, 0), (n, n)).copy_from(&self.l);
        g.view_mut((0, n), (n, n)).copy_from(&self.m);
        g.view_mut((n, 0), (n, n)).copy_from(&(-self.m.conjugate()));
        g.view_mut((n, n), (n, n)).copy_from(&(-self.l.conjugate()));
        g
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    /// All BdG eigenvalues real: bounded oscillations (phase II).
    Stable,
    /// Some eigenvalue complex: exponential pair production (phase I).
    Unstable,
}

#[derive(Clone, Debug)]
pub struct BdGResult {
    pub eigenvalues: Vec<C64>,
    /// Columns are the eigenvectors (u_p, v_p).
    pub vectors: DMatrix<C64>,
    /// Index pairs (p, q) with ε_q ≈ −ε_p.
    pub pairs: Vec<(usize, usize)>,
    pub stability: Stability,
}

/// |Im ε| above this marks an eigenvalue as complex.
pub const COMPLEX_THRESHOLD: f64 = 1e-9;
/// Tolerance of the ε ↔ −ε pairing.
pub const PAIRING_TOLERANCE: f64 = 1e-7;

impl BdGResult {
    /// Largest distance from ε ↦ −ε, ε*, −ε* images to the nearest
    /// eigenvalue. Zero for exact quartets.
    pub fn quartet_defect(&self) -> f64 {
        let ev = &self.eigenvalues;
        let nearest = |z: C64| ev.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
        ev.iter()
            .map(|&e| nearest(-e).max(nearest(e.conj())).max(nearest(-e.conj())))
            .fold(0.0, f64::max)
    }

    /// exp(−iGt) = T e^{−iεt} T⁻¹.
    pub fn propagator(&self, t: f64) -> Result<DMatrix<C64>> {
        let n = self.vectors.nrows();
        let inv = self
            .vectors
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Degeneracy("eigenvector matrix is singular".into()))?;
        let mut scaled = self.vectors.clone();
        for (p, e) in self.eigenvalues.iter().enumerate() {
            let f = (C64::new(0.0, -1.0) * e * t).exp();
            for i in 0..n {
                scaled[(i, p)] *= f;
            }
        }
        Ok(scaled * inv)
    }
}

fn greedy_pairs(ev: &[C64], tol: f64) -> Result<Vec<(usize, usize)>> {
    let mut used = vec![false; ev.len()];
    let mut pairs = Vec::new();
    for p in 0..ev.len() {
        if used[p] {
            continue;
        }
        used[p] = true;
        let target = -ev[p];
        let best = (0..ev.len())
            .filter(|&q| !used[q])
            .min_by(|&a, &b| (ev[a] - target).norm().total_cmp(&(ev[b] - target).norm()));
        match best {
            Some(q) if (ev[q] - target).norm() <= tol => {
                used[q] = true;
                pairs.push((p, q));
            }
            _ => {
                return Err(Error::Degeneracy(format!(
                    "eigenvalue {} has no −ε partner within {tol:e}",
                    ev[p]
                )))
            }
        }
    }
    Ok(pairs)
}

/// Eigenvalues by complex Schur; eigenvectors from the null space of
/// G − ε for each cluster of numerically equal eigenvalues.
pub fn bdg_solve(q: &QuadraticForm) -> Result<BdGResult> {
    let g = q.bdg_matrix();
    let size = g.nrows();
    let scale = g.camax();
    let raw: Vec<C64> = g
        .clone()
        .schur()
        .eigenvalues()
        .ok_or_else(|| Error::Numerical("Schur form did not yield eigenvalues".into()))?
        .iter()
        .copied()
        .collect();
    let cluster_tol = 1e-7 * scale.max(1e-300);
    let mut clusters: Vec<(C64, usize)> = Vec::new();
    for e in &raw {
        match clusters.iter_mut().find(|(c, _)| (c - e).norm() <= cluster_tol) {
            Some(c) => {
                let k = c.1 as f64;
                c.0 = (c.0 * k + e) / (k + 1.0);
                c.1 += 1;
            }
            None => clusters.push((*e, 1)),
        }
    }
    let mut eigenvalues = Vec::with_capacity(size);
    let mut vectors = DMatrix::zeros(size, size);
    let mut col = 0;
    for (e, mult) in clusters {
        let shifted = &g - DMatrix::from_diagonal_element(size, size, e);
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.expect("requested right singular vectors");
        let null_tol = 1e-8 * scale.max(1e-300);
        let null: Vec<usize> = (0..size).filter(|&i| svd.singular_values[i] <= null_tol).collect();
        if null.len() < mult {
            return Err(Error::Degeneracy(format!(
                "eigenvalue {e} has multiplicity {mult} but only {} eigenvectors; the BdG matrix is defective",
                null.len()
            )));
        }
        // Keep the `mult` smallest singular directions.
        let mut order = null.clone();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        for &i in order.iter().take(mult) {
            let v: DVector<C64> = vt.row(i).adjoint().into_owned();
            vectors.set_column(col, &v);
            eigenvalues.push(e);
            col += 1;
        }
    }
    let sv = vectors.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-10 * smax) {
        return Err(Error::Degeneracy(format!(
            "eigenvector matrix is ill-conditioned (σ_min/σ_max = {:.3e})",
            smin / smax
        )));
    }
    let pairs = greedy_pairs(&eigenvalues, PAIRING_TOLERANCE.max(1e-7 * scale))?;
    let stability = if eigenvalues.iter().any(|e| e.im.abs() > COMPLEX_THRESHOLD) {
        Stability::Unstable
    } else {
        Stability::Stable
    };
    Ok(BdGResult { eigenvalues, vectors, pairs, stability })
}

/// Mode populations and anomalous correlators of the vacuum evolved under a
/// quadratic Hamiltonian.
#[derive(Clone, Debug)]
pub struct VacuumDynamics {
    pub times: Vec<f64>,
    /// populations[k][i] = ⟨a†_i a_i⟩ at times[k]
    pub populations: Vec<Vec<f64>>,
    /// anomalous[k] = ⟨a_i a_j⟩ at times[k]
    pub anomalous: Vec<DMatrix<C64>>,
    /// max ‖U η U† − η‖ over the grid
    pub symplectic_drift: f64,
    /// max |Im ⟨a†_i a_i⟩| over the grid (should be roundoff)
    pub max_imag_population: f64,
}

/// Covariance U [[0, I], [0, 0]] Uᵀ of (A, A†) for U = exp(−iGt).
pub fn bdg_propagate_vacuum(q: &QuadraticForm, times: &[f64]) -> Result<VacuumDynamics> {
    let n = q.dim();
    let bdg = bdg_solve(q)?;
    let mut eta = DMatrix::<C64>::identity(2 * n, 2 * n);
    for i in n..2 * n {
        eta[(i, i)] = C64::new(-1.0, 0.0);
    }
    let mut init = DMatrix::<C64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        init[(i, n + i)] = C64::new(1.0, 0.0);
    }
    let mut out = VacuumDynamics {
        times: times.to_vec(),
        populations: Vec::with_capacity(times.len()),
        anomalous: Vec::with_capacity(times.len()),
        symplectic_drift: 0.0,
        max_imag_population: 0.0,
    };
    for &t in times {
        let u = bdg.propagator(t)?;
        let drift = (&u * &eta * u.adjoint() - &eta).camax();
        out.symplectic_drift = out.symplectic_drift.max(drift);
        let cov = &u * &init * u.transpose();
        let pops: Vec<f64> = (0..n).map(|i| cov[(n + i, i)].re).collect();
        for i in 0..n {
            out.max_imag_population = out.max_imag_population.max(cov[(n + i, i)].im.abs());
        }
        out.populations.push(pops);
        out.anomalous.push(cov.view((0, 0), (n, n)).into_owned());
    }
    Ok(out)
}

/// The three UPA couplings of the four-level ladder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourLevelK {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl FourLevelK {
    /// (K1 + K2)² − 4K3²; negative in the pair-producing phase.
    pub fn discriminant(&self) -> f64 {
        (self.k1 + self.k2).powi(2) - 4.0 * self.k3 * self.k3
    }

    pub fn stability(&self) -> Stability {
        if self.discriminant() < 0.0 {
            Stability::Unstable
        } else {
            Stability::Stable
        }
    }

    /// K1 a†_{−1/2}a_{−1/2} + K2 a†_{1/2}a_{1/2} + K3(a†a† + aa).
    pub fn quadratic_form(&self) -> QuadraticForm {
        let l = DMatrix::from_row_slice(2, 2, &[self.k1, 0.0, 0.0, self.k2]);
        let m = DMatrix::from_row_slice(2, 2, &[0.0, self.k3, self.k3, 0.0]);
        QuadraticForm::from_real(l, m, vec!["-1/2".into(), "1/2".into()]).expect("valid by construction")
    }
}

fn check_pole(delta: f64, pole: f64, what: &str) -> Result<()> {
    if (delta - pole).abs() < 1e-12 * pole.abs().max(1.0) {
        return Err(Error::Resonance(format!("Δ = {delta} sits on the pump-shifted pole {what} = {pole}")));
    }
    Ok(())
}

pub fn four_level_k(drives: &DriveParams, chi_n: f64) -> Result<FourLevelK> {
    let pole = chi_n / 5.0;
    let (mut k1, mut k2) = (0.0, 0.0);
    for d in drives.active() {
        check_pole(d.delta, pole, "χN/5")?;
        let w = d.omega * d.omega;
        let x = d.delta - pole;
        let cubic = 8.0 / 75.0 * w * d.delta * chi_n / x.powi(3);
        k1 += cubic;
        k2 += 8.0 / 15.0 * w * d.delta / (x * x) + cubic;
    }
    Ok(FourLevelK { k1, k2, k3: k1 })
}

/// N_{±1/2}(t) from the vacuum of the two empty modes.
pub fn four_level_population(k: &FourLevelK, t: f64) -> f64 {
    let d = k.discriminant();
    let k3s = k.k3 * k.k3;
    if d > 0.0 {
        let w = d.sqrt();
        4.0 * k3s / d * (w * t / 2.0).sin().powi(2)
    } else if d < 0.0 {
        let w = (-d).sqrt();
        4.0 * k3s / -d * (w * t / 2.0).sinh().powi(2)
    } else {
        k3s * t * t
    }
}

/// Critical detunings Δ_B of both boundary equations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseBoundary {
    /// Σ_ν |Ω_ν|²Δ_ν/(Δ_ν − χN/5)² = 0
    pub first: Vec<f64>,
    /// Σ_ν [|Ω_ν|²Δ_ν/(Δ_ν − χN/5)² + (4/5)|Ω_ν|²Δ_νχN/(Δ_ν − χN/5)³] = 0
    pub second: Vec<f64>,
}

impl PhaseBoundary {
    pub fn all(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.first.iter().chain(&self.second).copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Roots by a scan at `step` and bisection to `tol`, skipping any scan cell
/// that contains one of the `poles`.
pub fn scan_roots<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, step: f64, tol: f64, poles: &[f64]) -> Vec<f64> {
    let mut roots = Vec::new();
    let cells = ((hi - lo) / step).ceil().max(1.0) as usize;
    let mut a = lo;
    let mut fa = f(a);
    for k in 1..=cells {
        let b = (lo + step * k as f64).min(hi);
        let fb = f(b);
        let straddles_pole = poles.iter().any(|p| *p >= a && *p <= b);
        if !straddles_pole && fa.is_finite() && fb.is_finite() {
            if fa == 0.0 {
                roots.push(a);
            } else if fa * fb < 0.0 {
                let (mut x0, mut x1, mut f0) = (a, b, fa);
                while x1 - x0 > tol {
                    let mid = 0.5 * (x0 + x1);
                    let fm = f(mid);
                    if fm == 0.0 {
                        x0 = mid;
                        x1 = mid;
                        break;
                    }
                    if f0 * fm < 0.0 {
                        x1 = mid;
                    } else {
                        x0 = mid;
                        f0 = fm;
                    }
                }
                roots.push(0.5 * (x0 + x1));
            }
        }
        a = b;
        fa = fb;
    }
    roots
}

/// Phase boundaries along Δ_B for fixed Δ_A and Ω_A = Ω_B = Ω. The default
/// interval is above the pump-shifted pole, (χN/5, 20χN].
pub fn four_level_phase_boundary(
    delta_a: f64,
    chi_n: f64,
    omega: f64,
    interval: Option<(f64, f64)>,
) -> Result<PhaseBoundary> {
    let pole = chi_n / 5.0;
    check_pole(delta_a, pole, "χN/5")?;
    let (lo, hi) = interval.unwrap_or((pole + 1e-3 * chi_n, 20.0 * chi_n));
    if !(hi > lo) {
        return Err(Error::domain("empty search interval"));
    }
    let w = omega * omega;
    let s2 = move |d: f64| w * d / (d - pole).powi(2);
    let s3 = move |d: f64| w * d * chi_n / (d - pole).powi(3);
    let first = |db: f64| s2(delta_a) + s2(db);
    let second = |db: f64| s2(delta_a) + s2(db) + 0.8 * (s3(delta_a) + s3(db));
    let step = 0.01 * chi_n;
    let tol = 1e-6 * chi_n;
    Ok(PhaseBoundary {
        first: scan_roots(first, lo, hi, step, tol, &[pole]),
        second: scan_roots(second, lo, hi, step, tol, &[pole]),
    })
}

/// L and M of the six-level ladder over the empty modes (−5/2, 1/2, 3/2).
pub fn six_level_quadratic(drives: &DriveParams, chi_n: f64, p: f64) -> Result<QuadraticForm> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("p = {p} outside [0, 1]")));
    }
    let q = 1.0 - p;
    let pole1 = 13.0 * chi_n / 35.0;
    let pole2 = (9.0 + 8.0 * p) * chi_n / 35.0;
    let (mut c1, mut c2) = (0.0, 0.0);
    for d in drives.active() {
        check_pole(d.delta, pole1, "13χN/35")?;
        check_pole(d.delta, pole2, "(9+8p)χN/35")?;
        let w = d.omega * d.omega;
        let x = d.delta - pole1;
        c1 += w * d.delta / (x * x);
        c2 += w * d.delta * chi_n / (x * x * (d.delta - pole2));
    }
    let k1 = -16.0 / 35.0 * c1 + 16.0 / 245.0 * c2;
    let k2 = 8.0 / 35.0 * c1 + (144.0 / 1225.0 * p + 16.0 / 245.0 * q) * c2;
    let k3 = 144.0 / 1225.0 * c2;
    let k4 = 16.0 / 245.0 * c2;
    let k5 = k3;
    let k6 = 48.0 * 5f64.sqrt() / 1225.0 * c2;
    let (sp, sq) = (p.sqrt(), q.sqrt());
    #[rustfmt::skip]
    let l = DMatrix::from_row_slice(3, 3, &[
        k1, k4 * sq, 0.0,
        k4 * sq, k2, k5 * sp,
        0.0, k5 * sp, k3,
    ]);
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(3, 3, &[
        0.0, k6 * sp, k6,
        k6 * sp, 2.0 * k6 * sp * sq, k6 * sq,
        k6, k6 * sq, 0.0,
    ]);
    QuadraticForm::from_real(l, m, vec!["-5/2".into(), "1/2".into(), "3/2".into()])
}

/// N_diff = N_{3/2} − N_{−5/2} along the UPA vacuum evolution.
pub fn six_level_ndiff(dynamics: &VacuumDynamics) -> Vec<f64> {
    dynamics.populations.iter().map(|p| p[2] - p[0]).collect()
}
