//! Time evolution under H_eff, observables, long-time averages and the
//! analyses built on them.

pub mod analysis;
pub mod krylov;
pub mod series;
pub mod sweep;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::angular::HalfInt;
use crate::error::{Error, Result};
use crate::fock::{FockBasis, ModeLabel, ModeSpace, ProductBasis, C64};
use crate::heff::{BlockRealization, EffectiveHamiltonian, HeffBlock};
use crate::ladder::{Leg, LevelScheme};

pub use krylov::{KrylovOptions, KrylovStats};
pub use series::{CellValue, SweepResult, TimeSeries};

/// Physical time t (ħ = 1) for dimensionless τ = Ω²t/(2π χN). With no
/// drive the axis falls back to Ω = 1.
pub fn tau_to_time(tau: f64, omega_ref: f64, chi_n: f64) -> f64 {
    let w2 = if omega_ref == 0.0 { 1.0 } else { omega_ref * omega_ref };
    2.0 * PI * chi_n * tau / w2
}

pub fn time_to_tau(t: f64, omega_ref: f64, chi_n: f64) -> f64 {
    let w2 = if omega_ref == 0.0 { 1.0 } else { omega_ref * omega_ref };
    t * w2 / (2.0 * PI * chi_n)
}

/// `count` evenly spaced points on [0, tau_max].
pub fn tau_grid(tau_max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|k| tau_max * k as f64 / (count - 1) as f64).collect(),
    }
}

/// Preparation of one sector: every atom in one mode, or the product state
/// (√p |m1⟩ + √(1−p) |m2⟩)^{⊗n}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectorState {
    Single { mode: HalfInt },
    Superposition { modes: [HalfInt; 2], p: f64 },
}

impl SectorState {
    pub fn single(m: HalfInt) -> Self {
        SectorState::Single { mode: m }
    }

    /// Normalized amplitudes on the given sector basis.
    pub fn amplitudes(&self, basis: &FockBasis) -> Result<DVector<C64>> {
        let mut v = DVector::zeros(basis.dim());
        match *self {
            SectorState::Single { mode } => {
                v[basis.fully_occupied(ModeLabel::ground(mode))?] = C64::new(1.0, 0.0);
            }
            SectorState::Superposition { modes: [m1, m2], p } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::domain(format!("superposition weight p = {p} outside [0, 1]")));
                }
                if m1 == m2 {
                    return Err(Error::domain("superposition needs two distinct modes"));
                }
                let pos = |m: HalfInt| {
                    basis
                        .modes()
                        .position(ModeLabel::ground(m))
                        .ok_or_else(|| Error::domain(format!("mode g({m}) is not part of the sector basis")))
                };
                let (i1, i2) = (pos(m1)?, pos(m2)?);
                let n = basis.particles();
                let q = 1.0 - p;
                let mut occ = vec![0u16; basis.modes().len()];
                let mut ln_binom = 0.0f64;
                for k in 0..=n {
                    if k > 0 {
                        ln_binom += ((n - k + 1) as f64).ln() - (k as f64).ln();
                    }
                    let amp = if (p == 0.0 && k > 0) || (q == 0.0 && k < n) {
                        0.0
                    } else {
                        let lp = if k == 0 { 0.0 } else { k as f64 * p.ln() };
                        let lq = if k == n { 0.0 } else { (n - k) as f64 * q.ln() };
                        (0.5 * (ln_binom + lp + lq)).exp()
                    };
                    occ[i1] = k as u16;
                    occ[i2] = (n - k) as u16;
                    let idx = basis.index_of(&occ).expect("occupation within the basis");
                    v[idx] = C64::new(amp, 0.0);
                }
            }
        }
        Ok(v)
    }
}

/// Product initial state over the two sectors of a [`ProductBasis`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialStateSpec {
    pub upper: SectorState,
    pub lower: SectorState,
}

impl InitialStateSpec {
    /// All upper-sector atoms in `m_upper`, all lower-sector atoms in `m_lower`.
    pub fn pair(m_upper: HalfInt, m_lower: HalfInt) -> Self {
        InitialStateSpec { upper: SectorState::single(m_upper), lower: SectorState::single(m_lower) }
    }

    /// The ladder quench state: lower leg at r = 0 (m = −F), upper leg at
    /// r = 0* (m = F).
    pub fn ladder_edges(scheme: &LevelScheme) -> Self {
        Self::pair(scheme.spin(), -scheme.spin())
    }

    pub fn build(&self, basis: &ProductBasis) -> Result<DVector<C64>> {
        let u = self.upper.amplitudes(basis.upper())?;
        let l = self.lower.amplitudes(basis.lower())?;
        let mut v = DVector::zeros(basis.dim());
        for (i, a) in u.iter().enumerate() {
            if *a == C64::new(0.0, 0.0) {
                continue;
            }
            for (j, b) in l.iter().enumerate() {
                v[basis.compose_index(i, j)] = a * b;
            }
        }
        let norm = v.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Numerical(format!("initial state norm {norm} deviates from 1")));
        }
        Ok(v)
    }
}

/// An observable diagonal in the Fock basis, given by its diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagObservable {
    pub name: String,
    pub diag: Vec<f64>,
}

impl DiagObservable {
    pub fn new(name: impl Into<String>, diag: Vec<f64>) -> Self {
        DiagObservable { name: name.into(), diag }
    }

    pub fn expectation(&self, weights: &[f64]) -> f64 {
        self.diag.iter().zip(weights).map(|(o, w)| o * w).sum()
    }
}

/// Channel name of a mode population.
pub fn population_name(label: ModeLabel) -> String {
    if label.is_excited() {
        format!("ne({})", label.m)
    } else {
        format!("n({})", label.m)
    }
}

/// ⟨n̂⟩ for every mode of the space, in label order.
pub fn population_observables<S: ModeSpace + ?Sized>(space: &S) -> Result<Vec<DiagObservable>> {
    space
        .mode_labels()
        .into_iter()
        .map(|l| Ok(DiagObservable::new(population_name(l), space.occupation_diag(l)?)))
        .collect()
}

/// Leg-number observables `N_upper`, `N_lower`.
pub fn leg_observables<S: ModeSpace + ?Sized>(scheme: &LevelScheme, space: &S) -> Result<Vec<DiagObservable>> {
    Ok(vec![
        DiagObservable::new("N_upper", scheme.leg_number_diag(space, Leg::Upper)?),
        DiagObservable::new("N_lower", scheme.leg_number_diag(space, Leg::Lower)?),
    ])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvolveMethod {
    /// Spectral on blocks within the dense cap, Krylov above.
    Auto,
    Spectral,
    Krylov,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolveOptions {
    pub method: EvolveMethod,
    pub dense_cap: usize,
    pub krylov: KrylovOptions,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { method: EvolveMethod::Auto, dense_cap: 4000, krylov: KrylovOptions::default() }
    }
}

/// What a propagation actually did.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PropagationReport {
    pub spectral_blocks: usize,
    pub krylov_blocks: usize,
    pub krylov_steps: usize,
    pub krylov_rejected: usize,
    pub max_local_error: f64,
    pub max_norm_drift: f64,
}

fn dense_block(block: &HeffBlock) -> DMatrix<f64> {
    match &block.realization {
        BlockRealization::Explicit(m) => m.clone(),
        _ => block.to_dense(),
    }
}

/// Eigendecomposition of one block of H_eff.
pub fn diagonalize_block(block: &HeffBlock) -> SymmetricEigen<f64, nalgebra::Dyn> {
    dense_block(block).symmetric_eigen()
}

enum Part<'a> {
    Spectral { indices: &'a [usize], vals: DVector<f64>, vecs: DMatrix<f64>, coef: DVector<C64> },
    Krylov { block: &'a HeffBlock, state: DVector<C64>, t: f64, h: f64 },
}

fn check_state(h: &EffectiveHamiltonian, psi0: &DVector<C64>) -> Result<Vec<usize>> {
    if psi0.len() != h.dim() {
        return Err(Error::domain("initial state does not match the Hamiltonian dimension"));
    }
    let norm = psi0.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::domain(format!("initial state is not normalized (norm {norm})")));
    }
    let mut blocks = Vec::new();
    for (k, z) in psi0.iter().enumerate() {
        if *z == C64::new(0.0, 0.0) {
            continue;
        }
        let (b, _) = h
            .locate(k)
            .ok_or_else(|| Error::Capability(format!("initial state has weight on state {k} outside the built blocks")))?;
        if !blocks.contains(&b) {
            blocks.push(b);
        }
    }
    blocks.sort_unstable();
    Ok(blocks)
}

fn gather(indices: &[usize], psi: &DVector<C64>) -> DVector<C64> {
    DVector::from_iterator(indices.len(), indices.iter().map(|&k| psi[k]))
}

/// Samples exp(−iHt)ψ0 at the (nondecreasing, nonnegative) physical times
/// and hands each state to `visit`.
pub fn propagate<F>(
    h: &EffectiveHamiltonian,
    psi0: &DVector<C64>,
    times: &[f64],
    opts: &EvolveOptions,
    mut visit: F,
) -> Result<PropagationReport>
where
    F: FnMut(usize, &DVector<C64>) -> Result<()>,
{
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("time grid must be finite, nonnegative and nondecreasing"));
    }
    let blocks = check_state(h, psi0)?;
    let mut report = PropagationReport::default();
    let mut parts = Vec::with_capacity(blocks.len());
    for b in blocks {
        let block = &h.blocks()[b];
        let spectral = match opts.method {
            EvolveMethod::Spectral => true,
            EvolveMethod::Krylov => false,
            EvolveMethod::Auto => {
                block.dim() <= opts.dense_cap && !matches!(block.realization, BlockRealization::Solve(_))
            }
        };
        let local = gather(&block.indices, psi0);
        if spectral {
            let eig = diagonalize_block(block);
            let vecs = eig.eigenvectors.map(|x| C64::new(x, 0.0));
            let coef = vecs.ad_mul(&local);
            report.spectral_blocks += 1;
            parts.push(Part::Spectral {
                indices: &block.indices,
                vals: eig.eigenvalues,
                vecs: eig.eigenvectors,
                coef,
            });
        } else {
            report.krylov_blocks += 1;
            parts.push(Part::Krylov { block, state: local, t: 0.0, h: 0.0 });
        }
    }
    let mut stats = KrylovStats::default();
    let mut psi = DVector::zeros(h.dim());
    for (i, &t) in times.iter().enumerate() {
        psi.fill(C64::new(0.0, 0.0));
        for part in parts.iter_mut() {
            match part {
                Part::Spectral { indices, vals, vecs, coef } => {
                    let rotated = DVector::from_iterator(
                        coef.len(),
                        coef.iter().zip(vals.iter()).map(|(c, l)| c * C64::from_polar(1.0, -l * t)),
                    );
                    for (r, &k) in indices.iter().enumerate() {
                        let mut acc = C64::new(0.0, 0.0);
                        for (p, z) in rotated.iter().enumerate() {
                            acc += z * vecs[(r, p)];
                        }
                        psi[k] = acc;
                    }
                }
                Part::Krylov { block, state, t: tb, h: hguess } => {
                    if t > *tb {
                        let apply = |x: &DVector<C64>| block.apply(x);
                        *state = krylov::krylov_advance(&apply, state, t - *tb, hguess, &opts.krylov, &mut stats)?;
                        *tb = t;
                    }
                    for (r, &k) in block.indices.iter().enumerate() {
                        psi[k] = state[r];
                    }
                }
            }
        }
        report.max_norm_drift = report.max_norm_drift.max((psi.norm() - 1.0).abs());
        visit(i, &psi)?;
    }
    report.krylov_steps = stats.steps;
    report.krylov_rejected = stats.rejected;
    report.max_local_error = stats.max_error;
    Ok(report)
}

/// Expectation values of diagonal observables along exp(−iHt)ψ0, sampled
/// on the τ grid.
pub fn evolve(
    h: &EffectiveHamiltonian,
    psi0: &DVector<C64>,
    tau: &[f64],
    observables: &[DiagObservable],
    opts: &EvolveOptions,
) -> Result<(TimeSeries, PropagationReport)> {
    for o in observables {
        if o.diag.len() != h.dim() {
            return Err(Error::domain(format!("observable {} does not match the basis", o.name)));
        }
    }
    let omega = h.drives().omega_ref();
    let times: Vec<f64> = tau.iter().map(|&x| tau_to_time(x, omega, h.chi_n())).collect();
    let mut values = vec![vec![0.0; tau.len()]; observables.len()];
    let report = propagate(h, psi0, &times, opts, |i, psi| {
        let w: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
        for (o, out) in observables.iter().zip(values.iter_mut()) {
            out[i] = o.expectation(&w);
        }
        Ok(())
    })?;
    let mut ts = TimeSeries::new(tau.to_vec());
    for (o, v) in observables.iter().zip(values) {
        ts.push_channel(o.name.clone(), v)?;
    }
    ts.meta = serde_json::json!({ "propagation": report });
    Ok((ts, report))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AverageOptions {
    /// Eigenvalues closer than this belong to one degenerate cluster.
    pub eps_deg: f64,
    pub dense_cap: usize,
}

impl Default for AverageOptions {
    fn default() -> Self {
        AverageOptions { eps_deg: 1e-10, dense_cap: 4000 }
    }
}

/// Infinite-time averages by the diagonal ensemble, Ō = Σ_E ⟨ψ|P_E O P_E|ψ⟩.
///
/// Observables diagonal in the Fock basis are block diagonal, so projectors
/// of different blocks never interfere and clustering is done per block.
pub fn long_time_average(
    h: &EffectiveHamiltonian,
    psi0: &DVector<C64>,
    observables: &[DiagObservable],
    opts: &AverageOptions,
) -> Result<Vec<f64>> {
    let blocks = check_state(h, psi0)?;
    let mut out = vec![0.0; observables.len()];
    for b in blocks {
        let block = &h.blocks()[b];
        if block.dim() > opts.dense_cap || matches!(block.realization, BlockRealization::Solve(_)) {
            return Err(Error::Capability(format!(
                "diagonal ensemble needs a full diagonalization; block of dimension {} exceeds the dense cap {}",
                block.dim(),
                opts.dense_cap
            )));
        }
        let eig = diagonalize_block(block);
        let mut order: Vec<usize> = (0..block.dim()).collect();
        order.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]));
        let local = gather(&block.indices, psi0);
        let vecs = eig.eigenvectors.map(|x| C64::new(x, 0.0));
        let coef = vecs.ad_mul(&local);
        let mut start = 0;
        while start < order.len() {
            let mut end = start + 1;
            while end < order.len()
                && eig.eigenvalues[order[end]] - eig.eigenvalues[order[end - 1]] < opts.eps_deg
            {
                end += 1;
            }
            let mut proj = DVector::<C64>::zeros(block.dim());
            for &p in &order[start..end] {
                proj.axpy(coef[p], &vecs.column(p), C64::new(1.0, 0.0));
            }
            let w: Vec<f64> = proj.iter().map(|z| z.norm_sqr()).collect();
            for (o, acc) in observables.iter().zip(out.iter_mut()) {
                *acc += block.indices.iter().zip(&w).map(|(&k, wk)| o.diag[k] * wk).sum::<f64>();
            }
            start = end;
        }
    }
    Ok(out)
}

/// Trapezoidal average of a sampled channel over its full τ range.
pub fn time_average(tau: &[f64], values: &[f64]) -> Result<f64> {
    if tau.len() != values.len() || tau.len() < 2 {
        return Err(Error::domain("time average needs at least two matching samples"));
    }
    let span = tau[tau.len() - 1] - tau[0];
    if span <= 0.0 {
        return Err(Error::domain("time average over an empty interval"));
    }
    let area: f64 = tau
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum();
    Ok(area / span)
}

/// A synthetic lattice site: one ground mode with its leg and coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Site {
    pub m: HalfInt,
    pub leg: Leg,
    pub r: i32,
}

impl Site {
    /// "3", "-2", or "0*" for the upper-leg origin.
    pub fn label(&self) -> String {
        if self.leg == Leg::Upper && self.r == 0 {
            "0*".into()
        } else {
            self.r.to_string()
        }
    }
}

/// C(i, j) = ⟨n̂_i n̂_j⟩ − ⟨n̂_i⟩⟨n̂_j⟩ over the ground modes present in the
/// space, sites ordered by m.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    pub sites: Vec<Site>,
    pub c: DMatrix<f64>,
}

impl CorrelationMatrix {
    pub fn site_index(&self, leg: Leg, r: i32) -> Option<usize> {
        self.sites.iter().position(|s| s.leg == leg && s.r == r)
    }

    /// C(0, r) relative to the lower-leg origin: r > 0 on the lower leg,
    /// r < 0 on the upper leg, r = 0 the origin itself.
    pub fn from_origin(&self, r: i32) -> Option<f64> {
        let o = self.site_index(Leg::Lower, 0)?;
        let leg = if r >= 0 { Leg::Lower } else { Leg::Upper };
        self.site_index(leg, r).map(|j| self.c[(o, j)])
    }
}

/// Occupation diagonals of the ground modes of a space, with site data.
pub fn site_occupations<S: ModeSpace + ?Sized>(
    scheme: &LevelScheme,
    space: &S,
) -> Result<(Vec<Site>, Vec<Vec<f64>>)> {
    let mut sites = Vec::new();
    let mut occ = Vec::new();
    for l in space.mode_labels() {
        if l.is_excited() {
            continue;
        }
        sites.push(Site { m: l.m, leg: scheme.leg_of(l.m)?, r: scheme.site_coordinate(l.m)? });
        occ.push(space.occupation_diag(l)?);
    }
    Ok((sites, occ))
}

fn correlation_from_weights(occ: &[Vec<f64>], w: &[f64]) -> DMatrix<f64> {
    let n = occ.len();
    let mean: Vec<f64> = occ.iter().map(|o| o.iter().zip(w).map(|(a, b)| a * b).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let second: f64 = occ[i].iter().zip(&occ[j]).zip(w).map(|((a, b), p)| a * b * p).sum();
        second - mean[i] * mean[j]
    })
}

pub fn correlation_matrix<S: ModeSpace + ?Sized>(
    state: &DVector<C64>,
    scheme: &LevelScheme,
    space: &S,
) -> Result<CorrelationMatrix> {
    let norm = state.norm();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::domain(format!("state is not normalized (norm {norm})")));
    }
    if state.len() != space.dim() {
        return Err(Error::domain("state dimension does not match the basis"));
    }
    let (sites, occ) = site_occupations(scheme, space)?;
    let w: Vec<f64> = state.iter().map(|z| z.norm_sqr()).collect();
    Ok(CorrelationMatrix { sites, c: correlation_from_weights(&occ, &w) })
}

/// Channel name of C(0, r).
pub fn correlator_name(r: i32) -> String {
    format!("C(0,{r})")
}

/// C(0, r) along a trajectory for every r available on both legs
/// (r = 0 is the on-site variance of the origin, r = 0* is reported as
/// channel "C(0,0*)").
pub fn correlator_series<S: ModeSpace + ?Sized>(
    h: &EffectiveHamiltonian,
    psi0: &DVector<C64>,
    tau: &[f64],
    scheme: &LevelScheme,
    space: &S,
    opts: &EvolveOptions,
) -> Result<(TimeSeries, PropagationReport)> {
    let (sites, occ) = site_occupations(scheme, space)?;
    let origin = sites
        .iter()
        .position(|s| s.leg == Leg::Lower && s.r == 0)
        .ok_or_else(|| Error::domain("space has no lower-leg origin site"))?;
    let mut targets: Vec<(String, usize, i32)> = Vec::new();
    for (j, s) in sites.iter().enumerate() {
        let name = if s.leg == Leg::Upper && s.r == 0 { "C(0,0*)".to_string() } else { correlator_name(s.r) };
        let key = if s.leg == Leg::Upper && s.r == 0 { i32::MIN } else { s.r };
        if s.leg == Leg::Lower && s.r >= 0 || s.leg == Leg::Upper && s.r <= 0 {
            targets.push((name, j, key));
        }
    }
    targets.sort_by_key(|t| t.2);
    let omega = h.drives().omega_ref();
    let times: Vec<f64> = tau.iter().map(|&x| tau_to_time(x, omega, h.chi_n())).collect();
    let mut values = vec![vec![0.0; tau.len()]; targets.len()];
    let o = &occ[origin];
    let report = propagate(h, psi0, &times, opts, |i, psi| {
        let w: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
        let mean0: f64 = o.iter().zip(&w).map(|(a, b)| a * b).sum();
        for ((_, j, _), out) in targets.iter().zip(values.iter_mut()) {
            let oj = &occ[*j];
            let meanj: f64 = oj.iter().zip(&w).map(|(a, b)| a * b).sum();
            let second: f64 = o.iter().zip(oj).zip(&w).map(|((a, b), p)| a * b * p).sum();
            out[i] = second - mean0 * meanj;
        }
        Ok(())
    })?;
    let mut ts = TimeSeries::new(tau.to_vec());
    for ((name, _, _), v) in targets.into_iter().zip(values) {
        ts.push_channel(name, v)?;
    }
    ts.meta = serde_json::json!({ "propagation": report });
    Ok((ts, report))
}
