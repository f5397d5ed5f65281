use std::collections::HashMap;

use super::{fnv1a, BasisId, ModeLabel, ModeSet, SparseOperator, C64};
use crate::error::{Error, Result};

/// Default upper bound on the dimension of any enumerated basis.
pub const DEFAULT_BASIS_CAP: usize = 200_000;

/// All occupation vectors of `particles` bosons over `modes`, in
/// lexicographically descending order (the first state puts every particle in
/// the first mode).
#[derive(Clone, Debug)]
pub struct FockBasis {
    modes: ModeSet,
    particles: usize,
    occ: Vec<u16>,
    index: HashMap<Box<[u16]>, usize>,
    id: BasisId,
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of occupation vectors of `particles` bosons in `modes` modes.
pub fn fock_dimension(modes: usize, particles: usize) -> u128 {
    binomial((particles + modes - 1) as u64, (modes - 1) as u64)
}

pub fn enumerate_basis(modes: ModeSet, particles: usize) -> Result<FockBasis> {
    FockBasis::with_cap(modes, particles, DEFAULT_BASIS_CAP)
}

impl FockBasis {
    pub fn new(modes: ModeSet, particles: usize) -> Result<Self> {
        Self::with_cap(modes, particles, DEFAULT_BASIS_CAP)
    }

    pub fn with_cap(modes: ModeSet, particles: usize, cap: usize) -> Result<Self> {
        let k = modes.len();
        let expected = fock_dimension(k, particles);
        if expected > cap as u128 {
            return Err(Error::Resource {
                what: format!("Fock basis of {particles} particles in {k} modes"),
                dim: usize::try_from(expected).unwrap_or(usize::MAX),
                cap,
            });
        }
        if particles > u16::MAX as usize {
            return Err(Error::domain("particle number exceeds 65535"));
        }
        let dim = expected as usize;
        let mut occ = Vec::with_capacity(dim * k);
        let mut current = vec![0u16; k];
        fill(&mut current, 0, particles, &mut occ);
        debug_assert_eq!(occ.len(), dim * k);

        let index = occ
            .chunks_exact(k)
            .enumerate()
            .map(|(i, s)| (s.to_vec().into_boxed_slice(), i))
            .collect();

        let mut bytes = Vec::new();
        for l in modes.labels() {
            bytes.push(l.manifold as u8);
            bytes.extend_from_slice(&l.m.twice().to_le_bytes());
        }
        bytes.extend_from_slice(&(particles as u64).to_le_bytes());
        let id = BasisId(fnv1a(bytes));

        Ok(FockBasis { modes, particles, occ, index, id })
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn dim(&self) -> usize {
        self.occ.len() / self.modes.len()
    }

    pub fn id(&self) -> BasisId {
        self.id
    }

    pub fn state(&self, k: usize) -> &[u16] {
        let n = self.modes.len();
        &self.occ[k * n..(k + 1) * n]
    }

    pub fn states(&self) -> impl Iterator<Item = &[u16]> {
        self.occ.chunks_exact(self.modes.len())
    }

    pub fn index_of(&self, occupation: &[u16]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    /// Basis index of the state with every particle in `mode`.
    pub fn fully_occupied(&self, mode: ModeLabel) -> Result<usize> {
        let pos = self.require(mode)?;
        let mut occ = vec![0u16; self.modes.len()];
        occ[pos] = self.particles as u16;
        Ok(self.index[occ.as_slice()])
    }

    fn require(&self, mode: ModeLabel) -> Result<usize> {
        self.modes
            .position(mode)
            .ok_or_else(|| Error::domain(format!("mode {mode} is not part of this basis")))
    }

    /// weight · a†_dst a_src with the usual √n_src √(n_dst + 1) elements.
    pub fn build_bilinear(
        &self,
        dst: ModeLabel,
        src: ModeLabel,
        weight: C64,
    ) -> Result<SparseOperator> {
        let d = self.require(dst)?;
        let s = self.require(src)?;
        let mut triplets = Vec::with_capacity(self.dim());
        let mut scratch = vec![0u16; self.modes.len()];
        for (col, occ) in self.states().enumerate() {
            let ns = occ[s];
            if ns == 0 {
                continue;
            }
            if d == s {
                triplets.push((col, col, weight * ns as f64));
                continue;
            }
            scratch.copy_from_slice(occ);
            let nd = scratch[d];
            scratch[s] -= 1;
            scratch[d] += 1;
            let row = self.index[scratch.as_slice()];
            let amp = ((ns as f64) * (nd as f64 + 1.0)).sqrt();
            triplets.push((row, col, weight * amp));
        }
        let hermitian = d == s && weight.im == 0.0;
        Ok(SparseOperator::from_triplets(self.dim(), self.id, triplets, hermitian))
    }

    pub fn occupation_diag(&self, mode: ModeLabel) -> Result<Vec<f64>> {
        let p = self.require(mode)?;
        Ok(self.states().map(|s| s[p] as f64).collect())
    }
}

fn fill(current: &mut [u16], pos: usize, remaining: usize, out: &mut Vec<u16>) {
    if pos == current.len() - 1 {
        current[pos] = remaining as u16;
        out.extend_from_slice(current);
        return;
    }
    for n in (0..=remaining).rev() {
        current[pos] = n as u16;
        fill(current, pos + 1, remaining - n, out);
    }
    current[pos] = 0;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sector {
    Upper,
    Lower,
}

/// Tensor product of two Fock bases; composite index is
/// `i_upper * lower.dim() + i_lower`.
#[derive(Clone, Debug)]
pub struct ProductBasis {
    upper: FockBasis,
    lower: FockBasis,
    id: BasisId,
}

impl ProductBasis {
    pub fn new(upper: FockBasis, lower: FockBasis) -> Result<Self> {
        Self::with_cap(upper, lower, DEFAULT_BASIS_CAP)
    }

    pub fn with_cap(upper: FockBasis, lower: FockBasis, cap: usize) -> Result<Self> {
        let dim = upper.dim() * lower.dim();
        if dim > cap {
            return Err(Error::Resource { what: "product basis".into(), dim, cap });
        }
        let mut bytes = b"product".to_vec();
        bytes.extend_from_slice(&upper.id().0.to_le_bytes());
        bytes.extend_from_slice(&lower.id().0.to_le_bytes());
        let id = BasisId(fnv1a(bytes));
        Ok(ProductBasis { upper, lower, id })
    }

    pub fn upper(&self) -> &FockBasis {
        &self.upper
    }

    pub fn lower(&self) -> &FockBasis {
        &self.lower
    }

    pub fn sector(&self, s: Sector) -> &FockBasis {
        match s {
            Sector::Upper => &self.upper,
            Sector::Lower => &self.lower,
        }
    }

    pub fn dim(&self) -> usize {
        self.upper.dim() * self.lower.dim()
    }

    pub fn id(&self) -> BasisId {
        self.id
    }

    pub fn compose_index(&self, i_upper: usize, i_lower: usize) -> usize {
        i_upper * self.lower.dim() + i_lower
    }

    pub fn split_index(&self, k: usize) -> (usize, usize) {
        (k / self.lower.dim(), k % self.lower.dim())
    }
}

/// op ⊗ 1 (upper) or 1 ⊗ op (lower) on the product space.
pub fn embed(op: &SparseOperator, product: &ProductBasis, sector: Sector) -> Result<SparseOperator> {
    let target = product.sector(sector);
    if op.basis() != target.id() || op.dim() != target.dim() {
        return Err(Error::domain(format!(
            "operator basis {} does not match the {sector:?} sector basis {}",
            op.basis(),
            target.id()
        )));
    }
    let du = product.upper.dim();
    let dl = product.lower.dim();
    let mut triplets = Vec::with_capacity(op.nnz() * product.sector(other(sector)).dim());
    match sector {
        Sector::Upper => {
            for (r, c, v) in op.triplets() {
                for l in 0..dl {
                    triplets.push((r * dl + l, c * dl + l, v));
                }
            }
        }
        Sector::Lower => {
            for u in 0..du {
                for (r, c, v) in op.triplets() {
                    triplets.push((u * dl + r, u * dl + c, v));
                }
            }
        }
    }
    Ok(SparseOperator::from_triplets(product.dim(), product.id, triplets, op.is_hermitian()))
}

fn other(s: Sector) -> Sector {
    match s {
        Sector::Upper => Sector::Lower,
        Sector::Lower => Sector::Upper,
    }
}

/// A space on which mode bilinears can be assembled: a single Fock basis or a
/// two-sector product. On a product, a bilinear is summed over every sector
/// that contains both modes.
pub trait ModeSpace: Sync {
    fn dim(&self) -> usize;
    fn id(&self) -> BasisId;
    fn particles(&self) -> usize;
    /// Sorted union of all mode labels.
    fn mode_labels(&self) -> Vec<ModeLabel>;
    fn has_mode(&self, mode: ModeLabel) -> bool;
    fn bilinear(&self, dst: ModeLabel, src: ModeLabel, weight: C64) -> Result<SparseOperator>;
    /// ⟨k| n̂_mode |k⟩ for every basis state k (summed over sectors).
    fn occupation_diag(&self, mode: ModeLabel) -> Result<Vec<f64>>;
    /// Human-readable occupation list of basis state k, for error messages.
    fn describe_state(&self, k: usize) -> String;

    fn number(&self, mode: ModeLabel) -> Result<SparseOperator> {
        self.bilinear(mode, mode, C64::new(1.0, 0.0))
    }

    fn identity(&self) -> SparseOperator {
        SparseOperator::identity(self.dim(), self.id())
    }

    /// Diagonal operator with the given real entries.
    fn diagonal(&self, entries: &[f64]) -> SparseOperator {
        SparseOperator::diagonal(self.id(), entries)
    }
}

impl ModeSpace for FockBasis {
    fn dim(&self) -> usize {
        FockBasis::dim(self)
    }

    fn id(&self) -> BasisId {
        self.id
    }

    fn particles(&self) -> usize {
        self.particles
    }

    fn mode_labels(&self) -> Vec<ModeLabel> {
        self.modes.labels().to_vec()
    }

    fn has_mode(&self, mode: ModeLabel) -> bool {
        self.modes.contains(mode)
    }

    fn bilinear(&self, dst: ModeLabel, src: ModeLabel, weight: C64) -> Result<SparseOperator> {
        self.build_bilinear(dst, src, weight)
    }

    fn occupation_diag(&self, mode: ModeLabel) -> Result<Vec<f64>> {
        FockBasis::occupation_diag(self, mode)
    }

    fn describe_state(&self, k: usize) -> String {
        let parts: Vec<String> = self
            .modes
            .labels()
            .iter()
            .zip(self.state(k))
            .filter(|(_, &n)| n > 0)
            .map(|(l, n)| format!("{l}^{n}"))
            .collect();
        format!("|{}>", parts.join(" "))
    }
}

impl ModeSpace for ProductBasis {
    fn dim(&self) -> usize {
        ProductBasis::dim(self)
    }

    fn id(&self) -> BasisId {
        self.id
    }

    fn particles(&self) -> usize {
        self.upper.particles() + self.lower.particles()
    }

    fn mode_labels(&self) -> Vec<ModeLabel> {
        let mut all: Vec<_> = self
            .upper
            .modes()
            .labels()
            .iter()
            .chain(self.lower.modes().labels())
            .copied()
            .collect();
        all.sort();
        all.dedup();
        all
    }

    fn has_mode(&self, mode: ModeLabel) -> bool {
        self.upper.modes().contains(mode) || self.lower.modes().contains(mode)
    }

    fn bilinear(&self, dst: ModeLabel, src: ModeLabel, weight: C64) -> Result<SparseOperator> {
        let mut acc: Option<SparseOperator> = None;
        for s in [Sector::Upper, Sector::Lower] {
            let b = self.sector(s);
            if b.modes().contains(dst) && b.modes().contains(src) {
                let part = embed(&b.build_bilinear(dst, src, weight)?, self, s)?;
                acc = Some(match acc {
                    None => part,
                    Some(a) => a.add(&part)?,
                });
            }
        }
        acc.ok_or_else(|| {
            Error::domain(format!("no sector of the product basis contains both {dst} and {src}"))
        })
    }

    fn occupation_diag(&self, mode: ModeLabel) -> Result<Vec<f64>> {
        if !self.has_mode(mode) {
            return Err(Error::domain(format!("mode {mode} is not part of this basis")));
        }
        let up = self.upper.modes().position(mode);
        let lo = self.lower.modes().position(mode);
        let dl = self.lower.dim();
        let mut out = Vec::with_capacity(self.dim());
        for u in 0..self.upper.dim() {
            let nu = up.map_or(0.0, |p| self.upper.state(u)[p] as f64);
            for l in 0..dl {
                let nl = lo.map_or(0.0, |p| self.lower.state(l)[p] as f64);
                out.push(nu + nl);
            }
        }
        Ok(out)
    }

    fn describe_state(&self, k: usize) -> String {
        let (u, l) = self.split_index(k);
        format!("{} x {}", self.upper.describe_state(u), self.lower.describe_state(l))
    }
}
