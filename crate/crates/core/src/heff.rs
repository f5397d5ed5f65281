//! Effective ground-manifold Hamiltonian after adiabatic elimination of the
//! excited states: the exact resolvent form and its second-order expansion.
//!
//! Every operator involved conserves J_z and the two leg populations, so the
//! Hamiltonian is assembled block by block over the connected components of
//! its sparsity graph. Blocks up to `dense_cap` are stored as explicit dense
//! matrices; larger ones keep an LU factorization per drive and are applied
//! by solves.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{components, BasisId, BlockDecomposition, ModeSpace, SparseOperator, C64};
use crate::ladder::{build_ladder_operators, LadderOperators, LevelScheme};

/// One classical drive: Rabi frequency Ω and detuning Δ, in units of χN.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drive {
    pub omega: f64,
    pub delta: f64,
}

impl Drive {
    pub fn is_active(&self) -> bool {
        self.omega != 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub a: Drive,
    pub b: Drive,
}

impl DriveParams {
    pub fn new(omega_a: f64, delta_a: f64, omega_b: f64, delta_b: f64) -> Self {
        DriveParams {
            a: Drive { omega: omega_a, delta: delta_a },
            b: Drive { omega: omega_b, delta: delta_b },
        }
    }

    /// Equal Rabi frequencies on both drives.
    pub fn symmetric(omega: f64, delta_a: f64, delta_b: f64) -> Self {
        Self::new(omega, delta_a, omega, delta_b)
    }

    pub fn drives(&self) -> [Drive; 2] {
        [self.a, self.b]
    }

    pub fn active(&self) -> impl Iterator<Item = Drive> {
        self.drives().into_iter().filter(Drive::is_active)
    }

    /// Largest |Ω|; the reference frequency of the dimensionless time axis.
    pub fn omega_ref(&self) -> f64 {
        self.a.omega.abs().max(self.b.omega.abs())
    }

    /// Finite parameters and Δ ≠ 0 on every active drive. Switched-off
    /// drives are allowed and contribute nothing.
    pub fn validate(&self) -> Result<()> {
        for (name, d) in [("A", self.a), ("B", self.b)] {
            if !d.omega.is_finite() || !d.delta.is_finite() {
                return Err(Error::domain(format!("drive {name} has non-finite parameters")));
            }
            if d.is_active() && d.delta == 0.0 {
                return Err(Error::domain(format!("drive {name} is active with zero detuning")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeffMode {
    Exact,
    Perturbative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeffOptions {
    /// Largest block stored as an explicit dense matrix.
    pub dense_cap: usize,
    /// Smallest admissible |Δ − χ d_R| and |eigenvalue of M|.
    pub eps_res: f64,
    /// Largest admissible condition number of M.
    pub cond_max: f64,
}

impl Default for HeffOptions {
    fn default() -> Self {
        HeffOptions { dense_cap: 4000, eps_res: 1e-8, cond_max: 1e12 }
    }
}

#[derive(Clone, Debug)]
pub enum BlockRealization {
    Explicit(DMatrix<f64>),
    /// Σ_ν c_ν M_ν⁻¹ K_ν applied through one LU factorization per drive.
    Solve(Vec<SolvePart>),
    /// Local (row, col, value) triplets.
    Sparse(Vec<(usize, usize, f64)>),
}

/// One drive's contribution c · M⁻¹ K on a block too large for a dense
/// inverse, with K = Δ − M kept in local sparse form.
#[derive(Clone, Debug)]
pub struct SolvePart {
    pub coef: f64,
    pub lu: LU<f64, Dyn, Dyn>,
    pub kernel: Vec<(usize, usize, f64)>,
}

fn local_apply(t: &[(usize, usize, f64)], x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(x.len());
    for &(r, c, v) in t {
        y[r] += v * x[c];
    }
    y
}

#[derive(Clone, Debug)]
pub struct HeffBlock {
    /// Global basis indices, increasing.
    pub indices: Vec<usize>,
    pub realization: BlockRealization,
}

impl HeffBlock {
    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn dense(&self) -> Option<&DMatrix<f64>> {
        match &self.realization {
            BlockRealization::Explicit(m) => Some(m),
            _ => None,
        }
    }

    pub fn apply_real(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.realization {
            BlockRealization::Explicit(m) => m * x,
            BlockRealization::Solve(parts) => {
                let mut y = DVector::zeros(x.len());
                for p in parts {
                    let s = p.lu.solve(&local_apply(&p.kernel, x)).expect("factorization checked at construction");
                    y.axpy(p.coef, &s, 1.0);
                }
                y
            }
            BlockRealization::Sparse(t) => local_apply(t, x),
        }
    }

    pub fn apply(&self, x: &DVector<C64>) -> DVector<C64> {
        let re = self.apply_real(&x.map(|z| z.re));
        let im = self.apply_real(&x.map(|z| z.im));
        re.zip_map(&im, C64::new)
    }

    /// Dense copy of the block, whatever its realization (solves column by
    /// column for the LU form).
    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.realization {
            BlockRealization::Explicit(m) => m.clone(),
            _ => {
                let n = self.dim();
                let mut out = DMatrix::zeros(n, n);
                for j in 0..n {
                    let mut e = DVector::zeros(n);
                    e[j] = 1.0;
                    out.set_column(j, &self.apply_real(&e));
                }
                out
            }
        }
    }
}

/// H_eff on (a subset of the blocks of) a ground-manifold basis.
#[derive(Clone, Debug)]
pub struct EffectiveHamiltonian {
    mode: HeffMode,
    drives: DriveParams,
    chi_n: f64,
    particles: usize,
    basis: BasisId,
    blocks: Vec<HeffBlock>,
    location: Vec<Option<(usize, usize)>>,
}

impl EffectiveHamiltonian {
    pub fn mode(&self) -> HeffMode {
        self.mode
    }

    pub fn drives(&self) -> DriveParams {
        self.drives
    }

    pub fn chi_n(&self) -> f64 {
        self.chi_n
    }

    pub fn chi(&self) -> f64 {
        self.chi_n / self.particles as f64
    }

    pub fn dim(&self) -> usize {
        self.location.len()
    }

    pub fn basis(&self) -> BasisId {
        self.basis
    }

    pub fn blocks(&self) -> &[HeffBlock] {
        &self.blocks
    }

    /// (block, position) of a basis index, if its block was built.
    pub fn locate(&self, k: usize) -> Option<(usize, usize)> {
        self.location[k]
    }

    /// The multiple of the identity that the literal resolvent form
    /// Σ_ν (|Ω_ν|²Δ_ν/χ) M_ν⁻¹ carries on top of the stored operator,
    /// Σ_ν |Ω_ν|²/χ. It is a pure global phase and is never stored, because
    /// subtracting it after inversion would cancel most significant digits.
    pub fn identity_offset(&self) -> f64 {
        match self.mode {
            HeffMode::Exact => self.drives.active().map(|d| d.omega * d.omega).sum::<f64>() / self.chi(),
            HeffMode::Perturbative => 0.0,
        }
    }

    fn check_vector(&self, psi: &DVector<C64>) -> Result<()> {
        if psi.len() != self.dim() {
            return Err(Error::domain(format!(
                "vector of length {} applied to H_eff of dimension {}",
                psi.len(),
                self.dim()
            )));
        }
        if let Some(k) = (0..psi.len()).find(|&k| self.location[k].is_none() && psi[k] != C64::new(0.0, 0.0)) {
            return Err(Error::Capability(format!(
                "vector has weight on basis state {k}, whose block was not built"
            )));
        }
        Ok(())
    }

    pub fn apply(&self, psi: &DVector<C64>) -> Result<DVector<C64>> {
        self.check_vector(psi)?;
        let mut out = DVector::zeros(self.dim());
        for b in &self.blocks {
            let local = DVector::from_iterator(b.dim(), b.indices.iter().map(|&k| psi[k]));
            if local.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                continue;
            }
            let y = b.apply(&local);
            for (i, &k) in b.indices.iter().enumerate() {
                out[k] = y[i];
            }
        }
        Ok(out)
    }

    pub fn expectation(&self, psi: &DVector<C64>) -> Result<f64> {
        Ok(psi.dotc(&self.apply(psi)?).re)
    }

    /// Sparse copy of all built blocks (LU blocks are densified).
    pub fn to_sparse(&self) -> SparseOperator {
        let mut t = Vec::new();
        for b in &self.blocks {
            match &b.realization {
                BlockRealization::Sparse(local) => {
                    for &(r, c, v) in local {
                        t.push((b.indices[r], b.indices[c], C64::new(v, 0.0)));
                    }
                }
                _ => {
                    let m = b.to_dense();
                    for (i, &r) in b.indices.iter().enumerate() {
                        for (j, &c) in b.indices.iter().enumerate() {
                            t.push((r, c, C64::new(m[(i, j)], 0.0)));
                        }
                    }
                }
            }
        }
        SparseOperator::from_triplets(self.dim(), self.basis, t, true)
    }

    /// max |H − Hᵀ| over all built blocks.
    pub fn hermiticity_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let m = b.to_dense();
                (&m - m.transpose()).amax()
            })
            .fold(0.0, f64::max)
    }
}

fn chi_of<S: ModeSpace + ?Sized>(space: &S, chi_n: f64) -> Result<f64> {
    if space.particles() == 0 {
        return Err(Error::domain("basis has no atoms"));
    }
    if !(chi_n.is_finite() && chi_n > 0.0) {
        return Err(Error::domain(format!("chiN = {chi_n} must be positive")));
    }
    Ok(chi_n / space.particles() as f64)
}

/// (M_ν, K_ν) with K_ν = χD_L + χ² T⁺ (Δ_ν − χD_R)⁻¹ T⁻ and M_ν = Δ_ν − K_ν.
fn resolvent_argument<S: ModeSpace + ?Sized>(
    space: &S,
    ops: &LadderOperators,
    delta: f64,
    chi: f64,
    eps_res: f64,
) -> Result<(SparseOperator, SparseOperator)> {
    let d_r = ops.d_r.diagonal_entries();
    let mut g = Vec::with_capacity(d_r.len());
    for (k, d) in d_r.iter().enumerate() {
        let den = delta - chi * d.re;
        if den.abs() < eps_res {
            return Err(Error::Resonance(format!(
                "Δ − χD_R = {den:.3e} on {} (Δ = {delta})",
                space.describe_state(k)
            )));
        }
        g.push(1.0 / den);
    }
    let dressed = ops.t_plus.compose(&space.diagonal(&g))?.compose(&ops.t_minus)?;
    let k = ops.d_l.scale_real(chi).add(&dressed.scale_real(chi * chi))?.mark_hermitian(1e-12);
    let m = k.scale_real(-1.0).shift(delta).mark_hermitian(1e-12);
    Ok((m, k))
}

/// Estimate of ‖A⁻¹‖₁ for symmetric A from its LU factors.
fn inverse_norm1_estimate(lu: &LU<f64, Dyn, Dyn>, n: usize) -> f64 {
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..5 {
        let Some(y) = lu.solve(&x) else { return f64::INFINITY };
        est = y.lp_norm(1);
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let Some(z) = lu.solve(&xi) else { return f64::INFINITY };
        let j = z.iamax();
        let zmax = z[j].abs();
        if zmax <= z.dot(&x) {
            break;
        }
        x = DVector::zeros(n);
        x[j] = 1.0;
    }
    est
}

/// Real entries of `op` inside block `b`, in block-local coordinates.
fn local_triplets(op: &SparseOperator, decomp: &BlockDecomposition, b: usize) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::new();
    for (i, &g) in decomp.blocks[b].iter().enumerate() {
        for (c, v) in op.row(g) {
            let (bc, j) = decomp.location[c];
            debug_assert_eq!(bc, b);
            t.push((i, j, v.re));
        }
    }
    t
}

fn select_blocks(decomp: &BlockDecomposition, support: Option<&DVector<C64>>) -> Result<Vec<usize>> {
    match support {
        None => Ok((0..decomp.blocks.len()).collect()),
        Some(psi) => {
            if psi.len() != decomp.dim() {
                return Err(Error::domain("support vector does not match the basis dimension"));
            }
            Ok(decomp.support(psi, 0.0))
        }
    }
}

fn assemble(
    mode: HeffMode,
    drives: DriveParams,
    chi_n: f64,
    particles: usize,
    basis: BasisId,
    dim: usize,
    blocks: Vec<HeffBlock>,
) -> EffectiveHamiltonian {
    let mut location = vec![None; dim];
    for (b, blk) in blocks.iter().enumerate() {
        for (i, &k) in blk.indices.iter().enumerate() {
            location[k] = Some((b, i));
        }
    }
    EffectiveHamiltonian { mode, drives, chi_n, particles, basis, blocks, location }
}

pub fn build_heff_exact<S: ModeSpace + ?Sized>(
    scheme: &LevelScheme,
    space: &S,
    drives: &DriveParams,
    chi_n: f64,
) -> Result<EffectiveHamiltonian> {
    build_heff_exact_with(scheme, space, drives, chi_n, &HeffOptions::default(), None)
}

/// Resolvent-form H_eff = Σ_ν (|Ω_ν|²Δ_ν/χ) M_ν⁻¹. With `support`, only the
/// blocks on which that vector has weight are built.
pub fn build_heff_exact_with<S: ModeSpace + ?Sized>(
    scheme: &LevelScheme,
    space: &S,
    drives: &DriveParams,
    chi_n: f64,
    opts: &HeffOptions,
    support: Option<&DVector<C64>>,
) -> Result<EffectiveHamiltonian> {
    drives.validate()?;
    let chi = chi_of(space, chi_n)?;
    let ops = build_ladder_operators(scheme, space)?;
    let active: Vec<Drive> = drives.active().collect();
    let mut ms = Vec::with_capacity(active.len());
    for d in &active {
        ms.push(resolvent_argument(space, &ops, d.delta, chi, opts.eps_res)?);
    }
    let mut pattern: Vec<&SparseOperator> = ms.iter().map(|(m, _)| m).collect();
    pattern.push(&ops.d_l);
    let decomp = components(&pattern)?;

    let mut blocks = Vec::new();
    for b in select_blocks(&decomp, support)? {
        let idx = decomp.blocks[b].clone();
        let n = idx.len();
        let realization = if n <= opts.dense_cap {
            let mut h = DMatrix::zeros(n, n);
            for (d, (m, k)) in active.iter().zip(&ms) {
                // (|Ω|²Δ/χ) M⁻¹ − |Ω|²/χ = (|Ω|²/χ) M⁻¹ K
                let coef = d.omega * d.omega / chi;
                let eig = m.restrict_real(&idx).symmetric_eigen();
                let lam_min = eig.eigenvalues.amin();
                let lam_max = eig.eigenvalues.amax();
                if lam_min < opts.eps_res || lam_max / lam_min > opts.cond_max {
                    return Err(Error::Resonance(format!(
                        "Δ − χD_L − χ²T⁺G_RT⁻ is singular or ill-conditioned (|λ| in [{lam_min:.3e}, {lam_max:.3e}]) \
                         on the block containing {} (Δ = {})",
                        space.describe_state(idx[0]),
                        d.delta
                    )));
                }
                let v = &eig.eigenvectors;
                let scaled = DMatrix::from_fn(n, n, |i, j| v[(i, j)] * coef / eig.eigenvalues[j]);
                h += scaled * (v.transpose() * k.restrict_real(&idx));
            }
            let sym = (&h + h.transpose()) * 0.5;
            BlockRealization::Explicit(sym)
        } else {
            let mut parts = Vec::new();
            for (d, (m, k)) in active.iter().zip(&ms) {
                let coef = d.omega * d.omega / chi;
                let dense = m.restrict_real(&idx);
                let norm1 = dense.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
                let lu = dense.lu();
                let cond = norm1 * inverse_norm1_estimate(&lu, n);
                if !lu.is_invertible() || !(cond <= opts.cond_max) {
                    return Err(Error::Resonance(format!(
                        "Δ − χD_L − χ²T⁺G_RT⁻ has estimated condition {cond:.3e} on the block containing {} \
                         (Δ = {})",
                        space.describe_state(idx[0]),
                        d.delta
                    )));
                }
                let kernel = local_triplets(k, &decomp, b);
                parts.push(SolvePart { coef, lu, kernel });
            }
            BlockRealization::Solve(parts)
        };
        blocks.push(HeffBlock { indices: idx, realization });
    }
    Ok(assemble(HeffMode::Exact, *drives, chi_n, space.particles(), space.id(), space.dim(), blocks))
}

/// Sparse second-order form Σ_ν [|Ω_ν|²/Δ_ν D_L + |Ω_ν|²χ/Δ_ν² (D_L D_L + T⁺T⁻)].
pub fn perturbative_operator<S: ModeSpace + ?Sized>(
    scheme: &LevelScheme,
    space: &S,
    drives: &DriveParams,
    chi_n: f64,
) -> Result<SparseOperator> {
    drives.validate()?;
    let chi = chi_of(space, chi_n)?;
    let ops = build_ladder_operators(scheme, space)?;
    let quad = ops.d_l.compose(&ops.d_l)?.add(&ops.t_plus.compose(&ops.t_minus)?)?;
    let mut h = SparseOperator::zeros(space.dim(), space.id());
    for d in drives.active() {
        let w = d.omega * d.omega;
        h = h
            .add(&ops.d_l.scale_real(w / d.delta))?
            .add(&quad.scale_real(w * chi / (d.delta * d.delta)))?;
    }
    Ok(h.mark_hermitian(1e-12))
}

pub fn build_heff_perturbative<S: ModeSpace + ?Sized>(
    scheme: &LevelScheme,
    space: &S,
    drives: &DriveParams,
    chi_n: f64,
) -> Result<EffectiveHamiltonian> {
    build_heff_perturbative_with(scheme, space, drives, chi_n, &HeffOptions::default(), None)
}

pub fn build_heff_perturbative_with<S: ModeSpace + ?Sized>(
    scheme: &LevelScheme,
    space: &S,
    drives: &DriveParams,
    chi_n: f64,
    opts: &HeffOptions,
    support: Option<&DVector<C64>>,
) -> Result<EffectiveHamiltonian> {
    let h = perturbative_operator(scheme, space, drives, chi_n)?;
    let ops = build_ladder_operators(scheme, space)?;
    let quad = ops.t_plus.compose(&ops.t_minus)?;
    let decomp = components(&[&h, &quad, &ops.d_l])?;
    let mut blocks = Vec::new();
    for b in select_blocks(&decomp, support)? {
        let idx = decomp.blocks[b].clone();
        let realization = if idx.len() <= opts.dense_cap {
            BlockRealization::Explicit(h.restrict_real(&idx))
        } else {
            BlockRealization::Sparse(local_triplets(&h, &decomp, b))
        };
        blocks.push(HeffBlock { indices: idx, realization });
    }
    Ok(assemble(HeffMode::Perturbative, *drives, chi_n, space.particles(), space.id(), space.dim(), blocks))
}

/// Builds H_eff in the requested form.
pub fn build_heff<S: ModeSpace + ?Sized>(
    mode: HeffMode,
    scheme: &LevelScheme,
    space: &S,
    drives: &DriveParams,
    chi_n: f64,
    opts: &HeffOptions,
    support: Option<&DVector<C64>>,
) -> Result<EffectiveHamiltonian> {
    match mode {
        HeffMode::Exact => build_heff_exact_with(scheme, space, drives, chi_n, opts, support),
        HeffMode::Perturbative => build_heff_perturbative_with(scheme, space, drives, chi_n, opts, support),
    }
}

/// Both sides of the shift-suppression condition for a pair of states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftDiagnostic {
    /// |⟨i|H|i⟩ − ⟨f|H|f⟩|
    pub shift_gap: f64,
    /// |Σ_ν |Ω_ν|²χ/Δ_ν² ⟨f|T⁺T⁻|i⟩|
    pub hop_strength: f64,
    pub ratio: f64,
}

pub fn shift_suppression_diagnostic<S: ModeSpace + ?Sized>(
    mode: HeffMode,
    scheme: &LevelScheme,
    space: &S,
    drives: &DriveParams,
    chi_n: f64,
    initial: &DVector<C64>,
    final_state: &DVector<C64>,
) -> Result<ShiftDiagnostic> {
    let chi = chi_of(space, chi_n)?;
    let ops = build_ladder_operators(scheme, space)?;
    let element = final_state.dotc(&ops.t_plus.mul_vec(&ops.t_minus.mul_vec(initial)));
    if element.norm() < 1e-14 {
        return Err(Error::Diagnostic(
            "⟨f|T⁺T⁻|i⟩ vanishes; the suppression ratio is undefined".into(),
        ));
    }
    let weight: f64 = drives.active().map(|d| d.omega * d.omega * chi / (d.delta * d.delta)).sum();
    let hop_strength = (element * weight).norm();
    let both = initial + final_state;
    let h = build_heff(mode, scheme, space, drives, chi_n, &HeffOptions::default(), Some(&both))?;
    let shift_gap = (h.expectation(initial)? - h.expectation(final_state)?).abs();
    Ok(ShiftDiagnostic { shift_gap, hop_strength, ratio: shift_gap / hop_strength })
}
