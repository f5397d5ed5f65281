//! The driven atom-only Hamiltonian on ground + excited manifolds, its time
//! integration, and the checks that tie it to the effective ground-state
//! description.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::angular::HalfInt;
use crate::dynamics::{
    evolve, population_observables, time_to_tau, tau_to_time, DiagObservable, EvolveOptions, InitialStateSpec,
    TimeSeries,
};
use crate::error::{Error, Result};
use crate::fock::{components, FockBasis, ModeLabel, ModeSet, ModeSpace, ProductBasis, SparseOperator, C64};
use crate::heff::{build_heff_exact_with, DriveParams, HeffOptions};
use crate::ladder::{build_ladder_operators, LevelScheme};

/// μ_B in MHz per gauss.
pub const BOHR_MAGNETON_MHZ_PER_GAUSS: f64 = 1.399_624_493;
/// Landé factor of the F = 9/2 excited manifold of ⁸⁷Sr (³P₁).
pub const LANDE_EXCITED_SR87: f64 = 2.0 / 33.0;
/// Landé factor of the F = 9/2 ground manifold of ⁸⁷Sr (¹S₀).
pub const LANDE_GROUND_SR87: f64 = -1.3e-4;

/// Linear Zeeman shifts δ_e F_e^z + δ_g F_g^z, in units of χN.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ZeemanParams {
    pub delta_e: f64,
    pub delta_g: f64,
}

impl ZeemanParams {
    /// Shifts of ⁸⁷Sr in a field of `b_gauss`, with χN given in MHz
    /// (δ = G μ_B B / χN, the 2π of angular units cancels).
    pub fn from_field(b_gauss: f64, chi_n_mhz: f64) -> Result<Self> {
        if !b_gauss.is_finite() || !(chi_n_mhz > 0.0) {
            return Err(Error::domain(format!("invalid Zeeman input B = {b_gauss} G, χN = {chi_n_mhz} MHz")));
        }
        let scale = BOHR_MAGNETON_MHZ_PER_GAUSS * b_gauss / chi_n_mhz;
        Ok(ZeemanParams { delta_e: LANDE_EXCITED_SR87 * scale, delta_g: LANDE_GROUND_SR87 * scale })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta_e.is_finite() || !self.delta_g.is_finite() {
            return Err(Error::domain("Zeeman shifts must be finite"));
        }
        Ok(())
    }
}

/// Two permutation-symmetric atom groups, each over every g_m and e_m.
#[derive(Clone, Debug)]
pub struct FullBasis {
    product: ProductBasis,
    ground: ProductBasis,
    ground_map: Vec<usize>,
}

fn full_modes(scheme: &LevelScheme) -> Result<ModeSet> {
    let mut labels: Vec<ModeLabel> = scheme.ground_modes().into_iter().map(ModeLabel::ground).collect();
    labels.extend(scheme.ground_modes().into_iter().map(ModeLabel::excited));
    labels.sort();
    ModeSet::new(labels)
}

fn ground_positions(full: &FockBasis, ground: &FockBasis) -> Result<Vec<usize>> {
    let pos: Vec<usize> = ground
        .modes()
        .labels()
        .iter()
        .map(|l| full.modes().position(*l).ok_or_else(|| Error::domain(format!("mode {l} missing"))))
        .collect::<Result<_>>()?;
    let mut occ = vec![0u16; full.modes().len()];
    let mut map = Vec::with_capacity(ground.dim());
    for k in 0..ground.dim() {
        occ.fill(0);
        for (p, n) in pos.iter().zip(ground.state(k)) {
            occ[*p] = *n;
        }
        map.push(full.index_of(&occ).expect("ground state lies in the full basis"));
    }
    Ok(map)
}

impl FullBasis {
    pub fn new(scheme: &LevelScheme, n_a: usize, n_b: usize, cap: usize) -> Result<Self> {
        let modes = full_modes(scheme)?;
        let a = FockBasis::with_cap(modes.clone(), n_a, cap)?;
        let b = FockBasis::with_cap(modes, n_b, cap)?;
        let product = ProductBasis::with_cap(a, b, cap)?;
        let ground = scheme.group_basis(n_a, n_b, cap)?;
        let map_a = ground_positions(product.upper(), ground.upper())?;
        let map_b = ground_positions(product.lower(), ground.lower())?;
        let mut ground_map = Vec::with_capacity(ground.dim());
        for k in 0..ground.dim() {
            let (u, l) = ground.split_index(k);
            ground_map.push(product.compose_index(map_a[u], map_b[l]));
        }
        Ok(FullBasis { product, ground, ground_map })
    }

    pub fn product(&self) -> &ProductBasis {
        &self.product
    }

    /// The zero-excitation subspace as its own basis.
    pub fn ground_basis(&self) -> &ProductBasis {
        &self.ground
    }

    /// Full-basis index of each ground-basis state.
    pub fn ground_indices(&self) -> &[usize] {
        &self.ground_map
    }

    pub fn embed_ground(&self, psi: &DVector<C64>) -> Result<DVector<C64>> {
        if psi.len() != self.ground.dim() {
            return Err(Error::domain("state does not match the ground basis"));
        }
        let mut out = DVector::zeros(self.product.dim());
        for (k, z) in psi.iter().enumerate() {
            out[self.ground_map[k]] = *z;
        }
        Ok(out)
    }

    /// Group a in |g_{m_a}⟩, group b in |g_{m_b}⟩.
    pub fn product_state(&self, m_a: HalfInt, m_b: HalfInt) -> Result<DVector<C64>> {
        let g = InitialStateSpec::pair(m_a, m_b).build(&self.ground)?;
        self.embed_ground(&g)
    }
}

/// Collective dipole operators L⁺ = Σ C_m^{-1} e†_{m−1} g_m and
/// R⁺ = Σ C_m^{+1} e†_{m+1} g_m on any space holding both manifolds.
pub fn dipole_operators<S: ModeSpace + ?Sized>(scheme: &LevelScheme, space: &S) -> Result<(SparseOperator, SparseOperator)> {
    let one = HalfInt::from_twice(2);
    let mut l = SparseOperator::zeros(space.dim(), space.id());
    let mut r = SparseOperator::zeros(space.dim(), space.id());
    for m in scheme.ground_modes() {
        let cl = scheme.cg().get(m, -1);
        if cl != 0.0 {
            l = l.add(&space.bilinear(ModeLabel::excited(m - one), ModeLabel::ground(m), C64::new(cl, 0.0))?)?;
        }
        let cr = scheme.cg().get(m, 1);
        if cr != 0.0 {
            r = r.add(&space.bilinear(ModeLabel::excited(m + one), ModeLabel::ground(m), C64::new(cr, 0.0))?)?;
        }
    }
    Ok((l, r))
}

fn excitation_diag<S: ModeSpace + ?Sized>(scheme: &LevelScheme, space: &S) -> Result<Vec<f64>> {
    let mut ne = vec![0.0; space.dim()];
    for m in scheme.ground_modes() {
        for (a, n) in ne.iter_mut().zip(space.occupation_diag(ModeLabel::excited(m))?) {
            *a += n;
        }
    }
    Ok(ne)
}

fn jz_diag<S: ModeSpace + ?Sized>(scheme: &LevelScheme, space: &S, w_g: f64, w_e: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; space.dim()];
    for m in scheme.ground_modes() {
        let g = space.occupation_diag(ModeLabel::ground(m))?;
        let e = space.occupation_diag(ModeLabel::excited(m))?;
        for k in 0..out.len() {
            out[k] += m.value() * (w_g * g[k] + w_e * e[k]);
        }
    }
    Ok(out)
}

/// χ(L⁺L⁻ + R⁺R⁻) − Δ N̂_e.
fn static_part(l: &SparseOperator, r: &SparseOperator, ne: &[f64], chi: f64, delta: f64) -> Result<SparseOperator> {
    let ll = l.compose(&l.adjoint())?;
    let rr = r.compose(&r.adjoint())?;
    let detuning = SparseOperator::diagonal(l.basis(), &ne.iter().map(|n| -delta * n).collect::<Vec<_>>());
    Ok(ll.add(&rr)?.scale_real(chi).add(&detuning)?.mark_hermitian(1e-12))
}

/// H(t) = H_s + f(t) L⁺ + f*(t) L⁻ in the frame rotating with drive A:
/// H_s = −Δ_A N̂_e + χ(L⁺L⁻ + R⁺R⁻) + δ_e F_e^z + δ_g F_g^z and
/// f(t) = Ω_A + Ω_B e^{−i(Δ_B − Δ_A)t}. With a single active drive the frame
/// follows that drive and H is static.
#[derive(Clone, Debug)]
pub struct FullHamiltonian {
    basis: FullBasis,
    drives: DriveParams,
    chi_n: f64,
    chi: f64,
    zeeman: Option<ZeemanParams>,
    frame_delta: f64,
    static_part: SparseOperator,
    l_plus: SparseOperator,
    excitations: Vec<f64>,
    conserved: Vec<f64>,
}

pub fn build_full(
    scheme: &LevelScheme,
    n_a: usize,
    n_b: usize,
    drives: &DriveParams,
    chi_n: f64,
    zeeman: Option<ZeemanParams>,
    cap: usize,
) -> Result<FullHamiltonian> {
    drives.validate()?;
    if !(chi_n > 0.0) {
        return Err(Error::domain(format!("χN must be positive, got {chi_n}")));
    }
    if let Some(z) = &zeeman {
        z.validate()?;
    }
    let basis = FullBasis::new(scheme, n_a, n_b, cap)?;
    let n = n_a + n_b;
    if n == 0 {
        return Err(Error::domain("no atoms"));
    }
    let space = basis.product();
    let chi = chi_n / n as f64;
    let (l_plus, r_plus) = dipole_operators(scheme, space)?;
    let excitations = excitation_diag(scheme, space)?;
    let frame_delta = if drives.a.is_active() || !drives.b.is_active() { drives.a.delta } else { drives.b.delta };
    let mut hs = static_part(&l_plus, &r_plus, &excitations, chi, frame_delta)?;
    if let Some(z) = zeeman {
        let diag = jz_diag(scheme, space, z.delta_g, z.delta_e)?;
        hs = hs.add(&space.diagonal(&diag))?.mark_hermitian(1e-12);
    }
    let jz = jz_diag(scheme, space, 1.0, 1.0)?;
    let conserved = excitations.iter().zip(&jz).map(|(a, b)| a + b).collect();
    Ok(FullHamiltonian {
        basis,
        drives: *drives,
        chi_n,
        chi,
        zeeman,
        frame_delta,
        static_part: hs,
        l_plus,
        excitations,
        conserved,
    })
}

impl FullHamiltonian {
    pub fn basis(&self) -> &FullBasis {
        &self.basis
    }

    pub fn drives(&self) -> DriveParams {
        self.drives
    }

    pub fn chi_n(&self) -> f64 {
        self.chi_n
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }

    pub fn zeeman(&self) -> Option<ZeemanParams> {
        self.zeeman
    }

    pub fn static_part(&self) -> &SparseOperator {
        &self.static_part
    }

    pub fn l_plus(&self) -> &SparseOperator {
        &self.l_plus
    }

    /// Diagonal of N̂_e + Ĵ_z.
    pub fn conserved_diag(&self) -> &[f64] {
        &self.conserved
    }

    pub fn excitation_diag(&self) -> &[f64] {
        &self.excitations
    }

    /// Angular frequency of the residual drive modulation; zero when H is
    /// static in the chosen frame.
    pub fn modulation(&self) -> f64 {
        if self.drives.a.is_active() && self.drives.b.is_active() {
            self.drives.b.delta - self.drives.a.delta
        } else {
            0.0
        }
    }

    /// f(t), the coefficient of L⁺.
    pub fn drive_amplitude(&self, t: f64) -> C64 {
        let (a, b) = (self.drives.a, self.drives.b);
        if a.is_active() && b.is_active() {
            C64::new(a.omega, 0.0) + C64::from_polar(b.omega, -(b.delta - a.delta) * t)
        } else if a.is_active() {
            C64::new(a.omega, 0.0)
        } else {
            C64::new(b.omega, 0.0)
        }
    }

    /// H(t) as a sparse operator.
    pub fn at(&self, t: f64) -> Result<SparseOperator> {
        let f = self.drive_amplitude(t);
        let drive = self.l_plus.scale(f).add(&self.l_plus.adjoint().scale(f.conj()))?;
        Ok(self.static_part.add(&drive)?.mark_hermitian(1e-10))
    }

    /// Detuning of the drive whose frame H is written in.
    pub fn frame_detuning(&self) -> f64 {
        self.frame_delta
    }
}

/// Integrator controls for the driven model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    /// Order of the symmetric composition of Strang steps (2, 4 or 6).
    pub order: usize,
    /// Smallest number of steps per drive period.
    pub min_steps: usize,
    /// Largest number of steps per drive period before giving up.
    pub max_steps: usize,
    /// Bound on the change of every observable under step halving.
    pub tol: f64,
    /// Largest dense block.
    pub dense_cap: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions { order: 4, min_steps: 40, max_steps: 1 << 13, tol: 1e-6, dense_cap: 3000 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationReport {
    pub block_dim: usize,
    /// Steps per period of the accepted propagator (0 for a static H).
    pub steps_per_period: usize,
    pub periods: usize,
    /// Largest observable change between the accepted step and twice it.
    pub richardson_error: f64,
    pub max_norm_drift: f64,
    pub max_conserved_drift: f64,
    pub max_excited_fraction: f64,
    pub warnings: Vec<String>,
}

/// Weights of the symmetric triple-jump composition of the given order.
pub fn composition_weights(order: usize) -> Result<Vec<f64>> {
    if order < 2 || !order.is_multiple_of(2) || order > 8 {
        return Err(Error::domain(format!("composition order {order} must be 2, 4, 6 or 8")));
    }
    let mut w = vec![1.0];
    let mut k = 2;
    while k < order {
        let p = 1.0 / (k as f64 + 1.0);
        let z1 = 1.0 / (2.0 - 2f64.powf(p));
        let z0 = 1.0 - 2.0 * z1;
        let mut next = Vec::with_capacity(3 * w.len());
        for z in [z1, z0, z1] {
            next.extend(w.iter().map(|x| x * z));
        }
        w = next;
        k += 2;
    }
    Ok(w)
}

/// Dense real-imaginary pair, so real orthogonal factors cost real products.
#[derive(Clone)]
struct Split {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl Split {
    fn identity(n: usize) -> Self {
        Split { re: DMatrix::identity(n, n), im: DMatrix::zeros(n, n) }
    }

    /// diag(c) · self
    fn scale_rows(&mut self, c: &[C64]) {
        for (i, z) in c.iter().enumerate() {
            for j in 0..self.re.ncols() {
                let (a, b) = (self.re[(i, j)], self.im[(i, j)]);
                self.re[(i, j)] = z.re * a - z.im * b;
                self.im[(i, j)] = z.re * b + z.im * a;
            }
        }
    }

    /// m · self for real m
    fn left_real(&mut self, m: &DMatrix<f64>) {
        self.re = m * &self.re;
        self.im = m * &self.im;
    }

    fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        let re = v.map(|z| z.re);
        let im = v.map(|z| z.im);
        let (a, b) = (&self.re * &re - &self.im * &im, &self.re * &im + &self.im * &re);
        DVector::from_iterator(v.len(), a.iter().zip(b.iter()).map(|(x, y)| C64::new(*x, *y)))
    }
}

/// The reachable block in the eigenbasis of H_s (which commutes with N̂_e):
/// H_s = diag(e), L⁺ + L⁻ = W diag(λ) Wᵀ.
struct DriveFrame {
    indices: Vec<usize>,
    vs: DMatrix<f64>,
    energies: Vec<f64>,
    excitations: Vec<f64>,
    w: DMatrix<f64>,
    wt: DMatrix<f64>,
    lambda: Vec<f64>,
}

impl DriveFrame {
    fn new(h: &FullHamiltonian, psi0: &DVector<C64>, cap: usize) -> Result<Self> {
        let decomp = components(&[&h.static_part, &h.l_plus])?;
        let mut indices: Vec<usize> =
            decomp.support(psi0, 0.0).into_iter().flat_map(|b| decomp.blocks[b].clone()).collect();
        indices.sort_unstable();
        let n = indices.len();
        if n > cap {
            return Err(Error::Resource { what: "full-model dense block".into(), dim: n, cap });
        }
        let hs = h.static_part.restrict_real(&indices);
        let ne: Vec<f64> = indices.iter().map(|&k| h.excitations[k]).collect();
        // Diagonalize H_s inside each excitation sector so N̂_e stays diagonal.
        let mut sectors: Vec<(i64, Vec<usize>)> = Vec::new();
        for (i, x) in ne.iter().enumerate() {
            let key = x.round() as i64;
            match sectors.iter_mut().find(|s| s.0 == key) {
                Some(s) => s.1.push(i),
                None => sectors.push((key, vec![i])),
            }
        }
        let mut vs = DMatrix::zeros(n, n);
        let mut energies = vec![0.0; n];
        let mut excitations = vec![0.0; n];
        let mut col = 0;
        for (key, idx) in &sectors {
            let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| hs[(idx[a], idx[b])]);
            let eig = sub.symmetric_eigen();
            for p in 0..idx.len() {
                for (a, &i) in idx.iter().enumerate() {
                    vs[(i, col)] = eig.eigenvectors[(a, p)];
                }
                energies[col] = eig.eigenvalues[p];
                excitations[col] = *key as f64;
                col += 1;
            }
        }
        let lp = h.l_plus.restrict_real(&indices);
        let x = vs.transpose() * (&lp + lp.transpose()) * &vs;
        let eig = x.symmetric_eigen();
        let w = eig.eigenvectors;
        let wt = w.transpose();
        Ok(DriveFrame { indices, vs, energies, excitations, w, wt, lambda: eig.eigenvalues.iter().copied().collect() })
    }

    fn dim(&self) -> usize {
        self.indices.len()
    }

    fn to_frame(&self, psi: &DVector<C64>) -> DVector<C64> {
        let local = DVector::from_iterator(self.dim(), self.indices.iter().map(|&k| psi[k]));
        let re = self.vs.tr_mul(&local.map(|z| z.re));
        let im = self.vs.tr_mul(&local.map(|z| z.im));
        DVector::from_iterator(self.dim(), re.iter().zip(im.iter()).map(|(a, b)| C64::new(*a, *b)))
    }

    /// Weights |ψ_k|² on the full basis from frame coordinates.
    fn weights(&self, v: &DVector<C64>, full_dim: usize) -> Vec<f64> {
        let re = &self.vs * v.map(|z| z.re);
        let im = &self.vs * v.map(|z| z.im);
        let mut w = vec![0.0; full_dim];
        for (i, &k) in self.indices.iter().enumerate() {
            w[k] = re[i] * re[i] + im[i] * im[i];
        }
        w
    }

    fn phases(&self, f: impl Fn(usize) -> C64) -> Vec<C64> {
        (0..self.dim()).map(f).collect()
    }

    /// One Strang step of length h whose drive is evaluated at `t_mid`.
    fn strang(&self, u: &mut Split, h: &FullHamiltonian, t_mid: f64, step: f64) {
        let half = self.phases(|i| C64::from_polar(1.0, -self.energies[i] * step / 2.0));
        let f = h.drive_amplitude(t_mid);
        let (amp, phi) = (f.norm(), -f.arg());
        // V = |f| D X D*, D = diag(e^{−iφ n_e})
        let d_conj = self.phases(|i| C64::from_polar(1.0, phi * self.excitations[i]));
        let d = self.phases(|i| C64::from_polar(1.0, -phi * self.excitations[i]));
        let kick = self.phases(|i| C64::from_polar(1.0, -amp * step * self.lambda[i]));
        u.scale_rows(&half);
        u.scale_rows(&d_conj);
        u.left_real(&self.wt);
        u.scale_rows(&kick);
        u.left_real(&self.w);
        u.scale_rows(&d);
        u.scale_rows(&half);
    }

    fn period(&self, h: &FullHamiltonian, period: f64, steps: usize, weights: &[f64]) -> Split {
        let mut u = Split::identity(self.dim());
        let dt = period / steps as f64;
        for s in 0..steps {
            let mut t = s as f64 * dt;
            for w in weights {
                let sub = w * dt;
                self.strang(&mut u, h, t + sub / 2.0, sub);
                t += sub;
            }
        }
        u
    }

    /// exp(−iHt) for a static drive.
    fn static_eigen(&self, h: &FullHamiltonian) -> (Vec<f64>, DMatrix<C64>) {
        let f = h.drive_amplitude(0.0);
        let (amp, phi) = (f.norm(), -f.arg());
        let n = self.dim();
        let x = &self.w * DMatrix::from_diagonal(&DVector::from_vec(self.lambda.clone())) * &self.wt;
        let hm = DMatrix::from_fn(n, n, |i, j| {
            let phase = C64::from_polar(1.0, -phi * (self.excitations[i] - self.excitations[j]));
            let diag = if i == j { self.energies[i] } else { 0.0 };
            C64::new(diag, 0.0) + phase * amp * x[(i, j)]
        });
        let hm = (&hm + hm.adjoint()) * C64::new(0.5, 0.0);
        let eig = hm.symmetric_eigen();
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    }
}

struct Sampler<'a> {
    frame: &'a DriveFrame,
    observables: &'a [DiagObservable],
    conserved: &'a [f64],
    excitations: &'a [f64],
    atoms: f64,
    full_dim: usize,
}

impl Sampler<'_> {
    fn record(&self, v: &DVector<C64>, values: &mut [Vec<f64>], k: usize, report: &mut IntegrationReport, c0: f64) {
        let w = self.frame.weights(v, self.full_dim);
        let norm: f64 = w.iter().sum();
        report.max_norm_drift = report.max_norm_drift.max((norm.sqrt() - 1.0).abs());
        let c: f64 = w.iter().zip(self.conserved).map(|(a, b)| a * b).sum();
        report.max_conserved_drift = report.max_conserved_drift.max((c - c0).abs());
        let ne: f64 = w.iter().zip(self.excitations).map(|(a, b)| a * b).sum();
        report.max_excited_fraction = report.max_excited_fraction.max(ne / self.atoms);
        for (o, out) in self.observables.iter().zip(values.iter_mut()) {
            out[k] = o.expectation(&w);
        }
    }
}

/// Time evolution of the driven model on the τ grid.
///
/// For two active drives H(t) is periodic with T = 2π/|Δ_B − Δ_A|; the
/// one-period propagator is built from a symmetric composition of Strang
/// steps (exact H_s half steps around an exact drive kick) and samples are
/// taken at the stroboscopic times nT closest to the requested τ, which are
/// the τ values reported. The step count per period doubles until halving
/// the step changes every observable by less than `tol`.
pub fn integrate(
    h: &FullHamiltonian,
    psi0: &DVector<C64>,
    tau: &[f64],
    observables: &[DiagObservable],
    opts: &IntegratorOptions,
) -> Result<(TimeSeries, IntegrationReport)> {
    let full_dim = h.basis.product().dim();
    if psi0.len() != full_dim {
        return Err(Error::domain("initial state does not match the full basis"));
    }
    if ((psi0.norm() - 1.0).abs()) > 1e-10 {
        return Err(Error::domain("initial state is not normalized"));
    }
    if tau.iter().any(|t| !t.is_finite() || *t < 0.0) || tau.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("τ grid must be finite, nonnegative and nondecreasing"));
    }
    for o in observables {
        if o.diag.len() != full_dim {
            return Err(Error::domain(format!("observable {} does not match the full basis", o.name)));
        }
    }
    let frame = DriveFrame::new(h, psi0, opts.dense_cap)?;
    let omega = h.drives.omega_ref();
    let times: Vec<f64> = tau.iter().map(|&x| tau_to_time(x, omega, h.chi_n)).collect();
    let v0 = frame.to_frame(psi0);
    let atoms = (h.basis.product().particles()) as f64;
    let sampler = Sampler {
        frame: &frame,
        observables,
        conserved: &h.conserved,
        excitations: &h.excitations,
        atoms,
        full_dim,
    };
    let c0: f64 = psi0.iter().zip(&h.conserved).map(|(z, c)| z.norm_sqr() * c).sum();
    let mut report = IntegrationReport { block_dim: frame.dim(), ..Default::default() };
    let mut values = vec![vec![0.0; tau.len()]; observables.len()];
    let delta = h.modulation();
    let sample_tau: Vec<f64>;
    if delta == 0.0 {
        let (vals, vecs) = frame.static_eigen(h);
        let coef = vecs.ad_mul(&v0);
        for (k, &t) in times.iter().enumerate() {
            let rotated = DVector::from_iterator(
                coef.len(),
                coef.iter().zip(&vals).map(|(c, l)| c * C64::from_polar(1.0, -l * t)),
            );
            let v = &vecs * rotated;
            sampler.record(&v, &mut values, k, &mut report, c0);
        }
        sample_tau = tau.to_vec();
    } else {
        let period = 2.0 * PI / delta.abs();
        let counts: Vec<usize> = times.iter().map(|t| (t / period).round() as usize).collect();
        report.periods = counts.last().copied().unwrap_or(0);
        sample_tau = counts.iter().map(|&n| time_to_tau(n as f64 * period, omega, h.chi_n)).collect();
        let weights = composition_weights(opts.order)?;
        let bound = frame.energies.iter().fold(0.0f64, |a, e| a.max(e.abs()))
            + (h.drives.a.omega.abs() + h.drives.b.omega.abs()) * frame.lambda.iter().fold(0.0f64, |a, l| a.max(l.abs()));
        let mut steps = opts.min_steps.max((period * bound / 0.5).ceil() as usize).max(1);
        let run = |u: &Split, out: &mut Vec<Vec<f64>>, rep: &mut IntegrationReport| {
            let mut v = v0.clone();
            let mut at = 0usize;
            for (k, &n) in counts.iter().enumerate() {
                while at < n {
                    v = u.apply(&v);
                    at += 1;
                }
                sampler.record(&v, out, k, rep, c0);
            }
        };
        let mut coarse_u = frame.period(h, period, steps, &weights);
        let mut coarse = vec![vec![0.0; tau.len()]; observables.len()];
        let mut scratch = IntegrationReport::default();
        run(&coarse_u, &mut coarse, &mut scratch);
        loop {
            if 2 * steps > opts.max_steps {
                return Err(Error::Numerical(format!(
                    "step halving did not reach tolerance {:.1e} within {} steps per period (last change {:.3e})",
                    opts.tol, opts.max_steps, report.richardson_error
                )));
            }
            let fine_u = frame.period(h, period, 2 * steps, &weights);
            let mut fine = vec![vec![0.0; tau.len()]; observables.len()];
            let mut rep = IntegrationReport { block_dim: frame.dim(), periods: report.periods, ..Default::default() };
            run(&fine_u, &mut fine, &mut rep);
            let change = coarse
                .iter()
                .flatten()
                .zip(fine.iter().flatten())
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            report = IntegrationReport { richardson_error: change, steps_per_period: 2 * steps, ..rep };
            steps *= 2;
            if change <= opts.tol {
                values = fine;
                break;
            }
            coarse_u = fine_u;
            coarse = fine;
        }
        drop(coarse_u);
    }
    if report.max_excited_fraction > 0.05 {
        report.warnings.push(format!(
            "excited fraction reached {:.3}; adiabatic elimination is not justified here",
            report.max_excited_fraction
        ));
    }
    let mut ts = TimeSeries::new(sample_tau);
    for (o, v) in observables.iter().zip(values) {
        ts.push_channel(o.name.clone(), v)?;
    }
    ts.meta = serde_json::json!({ "integration": report });
    Ok((ts, report))
}

/// Largest entrywise residuals of the two closure identities
/// H_0 L⁺P_g = (L⁺P_g)(−Δ + χD_L) + (R⁺P_g)(χT⁻) and
/// H_0 R⁺P_g = (R⁺P_g)(−Δ + χD_R) + (L⁺P_g)(χT⁺),
/// plus the same left identity with the ground factors moved to the left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityResiduals {
    pub left: f64,
    pub right: f64,
    pub swapped: f64,
}

pub fn verify_operator_identities(scheme: &LevelScheme, atoms: usize, delta: f64, chi_n: f64) -> Result<IdentityResiduals> {
    if atoms == 0 {
        return Err(Error::domain("need at least one atom"));
    }
    let space = FockBasis::new(full_modes(scheme)?, atoms)?;
    let chi = chi_n / atoms as f64;
    let (l, r) = dipole_operators(scheme, &space)?;
    let ne = excitation_diag(scheme, &space)?;
    let h0 = static_part(&l, &r, &ne, chi, delta)?;
    let pg = space.diagonal(&ne.iter().map(|&n| if n == 0.0 { 1.0 } else { 0.0 }).collect::<Vec<_>>());
    let lad = build_ladder_operators(scheme, &space)?;
    let lp = l.compose(&pg)?;
    let rp = r.compose(&pg)?;
    let left_lhs = h0.compose(&lp)?;
    let left_rhs = lp.compose(&lad.d_l.scale_real(chi).shift(-delta))?.add(&rp.compose(&lad.t_minus.scale_real(chi))?)?;
    let right_lhs = h0.compose(&rp)?;
    let right_rhs = rp.compose(&lad.d_r.scale_real(chi).shift(-delta))?.add(&lp.compose(&lad.t_plus.scale_real(chi))?)?;
    let swapped_rhs = lad.d_l.scale_real(chi).shift(-delta).compose(&lp)?.add(&lad.t_minus.scale_real(chi).compose(&rp)?)?;
    Ok(IdentityResiduals {
        left: left_lhs.sub(&left_rhs)?.max_abs(),
        right: right_lhs.sub(&right_rhs)?.max_abs(),
        swapped: left_lhs.sub(&swapped_rhs)?.max_abs(),
    })
}

/// −Σ_ν |Ω_ν|² P_g L⁻ (H_0^ν)⁺ L⁺ P_g on the zero-excitation states, with
/// H_0^ν = −Δ_ν N̂_e + χ(L⁺L⁻ + R⁺R⁻) pseudo-inverted on the
/// single-excitation sector. Rows and columns follow `basis.ground_basis()`.
pub fn second_order_reference(
    scheme: &LevelScheme,
    basis: &FullBasis,
    drives: &DriveParams,
    chi_n: f64,
) -> Result<DMatrix<f64>> {
    let space = basis.product();
    let chi = chi_n / space.particles() as f64;
    let (l, r) = dipole_operators(scheme, space)?;
    let ne = excitation_diag(scheme, space)?;
    let single: Vec<usize> = (0..space.dim()).filter(|&k| ne[k] == 1.0).collect();
    let ground = basis.ground_indices();
    let mut pos = vec![usize::MAX; space.dim()];
    for (i, &k) in single.iter().enumerate() {
        pos[k] = i;
    }
    let mut lg = DMatrix::<f64>::zeros(single.len(), ground.len());
    for (j, &g) in ground.iter().enumerate() {
        for (row, v) in l.triplets().filter(|t| t.1 == g).map(|t| (t.0, t.2)) {
            lg[(pos[row], j)] = v.re;
        }
    }
    let mut out = DMatrix::zeros(ground.len(), ground.len());
    for d in drives.active() {
        let h0 = static_part(&l, &r, &ne, chi, d.delta)?.restrict_real(&single);
        let inv = h0
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Numerical(format!("pseudo-inverse failed: {e}")))?;
        out -= (lg.transpose() * inv * &lg) * (d.omega * d.omega);
    }
    Ok(out)
}

/// Per-channel deviation between the two models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelDeviation {
    pub channel: String,
    pub max: f64,
    pub rms: f64,
}

#[derive(Clone, Debug)]
pub struct Benchmark {
    pub full: TimeSeries,
    pub effective: TimeSeries,
    pub deviations: Vec<ChannelDeviation>,
    pub max_deviation: f64,
    pub report: IntegrationReport,
}

/// Fractional ground populations n(m)/N of the quench from
/// |g_{−F}⟩^{⊗N/2}|g_{F}⟩^{⊗N/2} under the full model and under H_eff.
#[allow(clippy::too_many_arguments)]
pub fn benchmark_heff(
    scheme: &LevelScheme,
    atoms: usize,
    drives: &DriveParams,
    chi_n: f64,
    zeeman: Option<ZeemanParams>,
    tau: &[f64],
    opts: &IntegratorOptions,
    cap: usize,
) -> Result<Benchmark> {
    if atoms == 0 || !atoms.is_multiple_of(2) {
        return Err(Error::domain(format!("atom number {atoms} must be positive and even")));
    }
    let half = atoms / 2;
    let f = scheme.spin();
    let full = build_full(scheme, half, half, drives, chi_n, zeeman, cap)?;
    let psi_full = full.basis().product_state(-f, f)?;
    let n = atoms as f64;
    let fraction = |obs: Vec<DiagObservable>| -> Vec<DiagObservable> {
        obs.into_iter()
            .filter(|o| o.name.starts_with("n("))
            .map(|o| DiagObservable::new(format!("{}/N", o.name), o.diag.iter().map(|x| x / n).collect()))
            .collect()
    };
    let mut full_obs = fraction(population_observables(full.basis().product())?);
    full_obs.push(DiagObservable::new("N_e+J_z", full.conserved_diag().to_vec()));
    full_obs.push(DiagObservable::new("N_e/N", full.excitation_diag().iter().map(|x| x / n).collect()));
    full_obs.push(DiagObservable::new("norm", vec![1.0; full.basis().product().dim()]));
    let (full_ts, report) = integrate(&full, &psi_full, tau, &full_obs, opts)?;

    let legs = scheme.leg_basis(half, half, cap)?;
    let psi = InitialStateSpec::ladder_edges(scheme).build(&legs)?;
    let heff = build_heff_exact_with(scheme, &legs, drives, chi_n, &HeffOptions::default(), Some(&psi))?;
    let heff_obs = fraction(population_observables(&legs)?);
    let (eff_ts, _) = evolve(&heff, &psi, &full_ts.tau, &heff_obs, &EvolveOptions::default())?;

    let mut deviations = Vec::new();
    for (name, a) in &eff_ts.channels {
        let b = full_ts.channel(name)?;
        let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
        let max = diffs.iter().fold(0.0f64, |m, d| m.max(*d));
        let rms = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len().max(1) as f64).sqrt();
        deviations.push(ChannelDeviation { channel: name.clone(), max, rms });
    }
    let max_deviation = deviations.iter().fold(0.0f64, |m, d| m.max(d.max));
    Ok(Benchmark { full: full_ts, effective: eff_ts, deviations, max_deviation, report })
}

/// Largest fraction of atoms moved out of the two initial levels ±F.
pub fn peak_transfer(ts: &TimeSeries, scheme: &LevelScheme) -> Result<f64> {
    let f = scheme.spin();
    let a = ts.channel(&format!("n({})/N", -f))?;
    let b = ts.channel(&format!("n({})/N", f))?;
    Ok(a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max(1.0 - x - y)))
}

/// One magnetic-field run of the driven model.
#[derive(Clone, Debug)]
pub struct ZeemanRun {
    pub field_gauss: f64,
    pub zeeman: ZeemanParams,
    pub series: TimeSeries,
    pub peak_transfer: f64,
    pub report: IntegrationReport,
}

/// Name of the channel holding Σ_{m ≠ ±F} n(m)/N.
pub const TRANSFERRED: &str = "transferred";

/// Quench from |g_{−F}⟩^{⊗N/2}|g_{F}⟩^{⊗N/2} under the full model for each
/// field value (χN given in MHz). Fields run in parallel.
#[allow(clippy::too_many_arguments)]
pub fn zeeman_scan(
    scheme: &LevelScheme,
    atoms: usize,
    drives: &DriveParams,
    chi_n_mhz: f64,
    fields: &[f64],
    tau: &[f64],
    opts: &IntegratorOptions,
    cap: usize,
) -> Result<Vec<ZeemanRun>> {
    use rayon::prelude::*;
    if atoms == 0 || !atoms.is_multiple_of(2) {
        return Err(Error::domain(format!("atom number {atoms} must be positive and even")));
    }
    let f = scheme.spin();
    fields
        .par_iter()
        .map(|&b| {
            let zeeman = ZeemanParams::from_field(b, chi_n_mhz)?;
            let full = build_full(scheme, atoms / 2, atoms / 2, drives, 1.0, Some(zeeman), cap)?;
            let space = full.basis().product();
            let psi = full.basis().product_state(-f, f)?;
            let n = atoms as f64;
            let mut obs: Vec<DiagObservable> = population_observables(space)?
                .into_iter()
                .filter(|o| o.name.starts_with("n("))
                .map(|o| DiagObservable::new(format!("{}/N", o.name), o.diag.iter().map(|x| x / n).collect()))
                .collect();
            let edge_a = space.occupation_diag(ModeLabel::ground(-f))?;
            let edge_b = space.occupation_diag(ModeLabel::ground(f))?;
            let ne = full.excitation_diag();
            let moved = (0..space.dim()).map(|k| (n - ne[k] - edge_a[k] - edge_b[k]) / n).collect();
            obs.push(DiagObservable::new(TRANSFERRED, moved));
            let (series, report) = integrate(&full, &psi, tau, &obs, opts)?;
            let peak_transfer = series.channel(TRANSFERRED)?.iter().fold(0.0f64, |m, x| m.max(*x));
            Ok(ZeemanRun { field_gauss: b, zeeman, series, peak_transfer, report })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::tau_grid;

    fn h(s: &str) -> HalfInt {
        s.parse().unwrap()
    }

    #[test]
    fn zeeman_from_field() {
        let z = ZeemanParams::from_field(0.12, 1.0).unwrap();
        assert!((z.delta_e - 0.0102).abs() < 1e-4);
        let z = ZeemanParams::from_field(1.77, 1.0).unwrap();
        assert!((z.delta_e - 0.150).abs() < 1e-3);
        assert!(z.delta_g < 0.0 && z.delta_g.abs() < 1e-3 * z.delta_e.abs() * 10.0);
        assert!(ZeemanParams::from_field(1.0, 0.0).is_err());
    }

    #[test]
    fn composition_orders() {
        for order in [2, 4, 6] {
            let w = composition_weights(order).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
        assert!(composition_weights(3).is_err());
    }

    #[test]
    fn identities_hold() {
        for spin in ["1/2", "3/2"] {
            let s = LevelScheme::new(h(spin)).unwrap();
            for atoms in [1, 2] {
                let r = verify_operator_identities(&s, atoms, -3.0, 1.0).unwrap();
                assert!(r.left < 1e-12 && r.right < 1e-12, "{spin} {atoms} {r:?}");
            }
        }
        let s = LevelScheme::new(h("3/2")).unwrap();
        let r = verify_operator_identities(&s, 2, -3.0, 1.0).unwrap();
        assert!(r.swapped > 1e-3, "{r:?}");
    }

    #[test]
    fn ground_embedding() {
        let s = LevelScheme::new(h("3/2")).unwrap();
        let b = FullBasis::new(&s, 1, 2, 1 << 20).unwrap();
        assert_eq!(b.ground_basis().dim(), 4 * 10);
        assert_eq!(b.product().dim(), 8 * 36);
        let mut seen = b.ground_indices().to_vec();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 40);
    }

    #[test]
    fn undriven_is_static() {
        let s = LevelScheme::new(h("3/2")).unwrap();
        let full = build_full(&s, 1, 1, &DriveParams::new(0.0, -3.0, 0.0, 4.1), 1.0, None, 1 << 20).unwrap();
        let psi = full.basis().product_state(h("-3/2"), h("3/2")).unwrap();
        let obs = population_observables(full.basis().product()).unwrap();
        let (ts, rep) = integrate(&full, &psi, &tau_grid(3.0, 4), &obs, &IntegratorOptions::default()).unwrap();
        for (_, v) in &ts.channels {
            assert!(v.iter().all(|x| (x - v[0]).abs() < 1e-12));
        }
        assert!(rep.max_norm_drift < 1e-12);
    }

    #[test]
    fn hermitian_and_conserving() {
        let s = LevelScheme::new(h("3/2")).unwrap();
        let z = ZeemanParams { delta_e: 0.05, delta_g: 0.001 };
        let full = build_full(&s, 1, 1, &DriveParams::symmetric(0.05, -3.0, 4.1), 1.0, Some(z), 1 << 20).unwrap();
        for t in [0.0, 0.3, 1.7] {
            let ht = full.at(t).unwrap();
            assert!(ht.hermiticity_defect() < 1e-14);
            let c = full.basis().product().diagonal(full.conserved_diag());
            assert!(ht.commutator(&c).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn perturbative_reference_matches_heff() {
        let s = LevelScheme::new(h("3/2")).unwrap();
        let b = FullBasis::new(&s, 1, 1, 1 << 20).unwrap();
        let drives = DriveParams::symmetric(0.05, -3.0, 4.1);
        let reference = second_order_reference(&s, &b, &drives, 1.0).unwrap();
        let heff = crate::heff::build_heff_exact(&s, b.ground_basis(), &drives, 1.0).unwrap();
        let dense = heff.to_sparse().to_dense();
        let diff = DMatrix::from_fn(dense.nrows(), dense.ncols(), |i, j| (dense[(i, j)].re - reference[(i, j)]).abs());
        assert!(diff.max() < 1e-9, "{}", diff.max());
    }

    #[test]
    fn driven_two_atoms_track_heff() {
        let s = LevelScheme::new(h("3/2")).unwrap();
        let drives = DriveParams::symmetric(0.05, -3.0, 4.1);
        let b = benchmark_heff(&s, 2, &drives, 1.0, None, &tau_grid(1.0, 3), &IntegratorOptions::default(), 1 << 20)
            .unwrap();
        assert!(b.max_deviation < 0.02, "{b:?}", b = b.deviations);
        assert!(b.report.max_norm_drift < 1e-10);
        assert!(b.report.max_conserved_drift < 1e-9);
    }
}
