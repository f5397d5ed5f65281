use std::io::Write;

use nalgebra::{DMatrix, DVector};

use super::{BasisId, C64};
use crate::error::{Error, Result};

/// Complex sparse matrix in compressed-row form, tied to the basis it was
/// assembled on.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    dim: usize,
    basis: BasisId,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
    hermitian: bool,
}

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

impl SparseOperator {
    /// Sums duplicate entries and drops exact zeros. `hermitian` is trusted
    /// as given; use [`SparseOperator::mark_hermitian`] to verify it.
    pub fn from_triplets(
        dim: usize,
        basis: BasisId,
        mut triplets: Vec<(usize, usize, C64)>,
        hermitian: bool,
    ) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; dim + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "entry ({r}, {c}) outside dimension {dim}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            indptr[r + 1] += indptr[r];
        }
        let mut op = SparseOperator { dim, basis, indptr, indices, values, hermitian };
        op.prune(0.0);
        op
    }

    pub fn zeros(dim: usize, basis: BasisId) -> Self {
        SparseOperator {
            dim,
            basis,
            indptr: vec![0; dim + 1],
            indices: Vec::new(),
            values: Vec::new(),
            hermitian: true,
        }
    }

    pub fn identity(dim: usize, basis: BasisId) -> Self {
        SparseOperator {
            dim,
            basis,
            indptr: (0..=dim).collect(),
            indices: (0..dim).collect(),
            values: vec![ONE; dim],
            hermitian: true,
        }
    }

    pub fn diagonal(basis: BasisId, entries: &[f64]) -> Self {
        let triplets =
            entries.iter().enumerate().map(|(i, &v)| (i, i, C64::new(v, 0.0))).collect();
        Self::from_triplets(entries.len(), basis, triplets, true)
    }

    /// Drops entries with modulus ≤ `tol`.
    fn prune(&mut self, tol: f64) {
        let mut indptr = vec![0usize; self.dim + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.dim {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k].norm() > tol {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> BasisId {
        self.basis
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Sets the Hermitian flag iff ‖A − A†‖_max < `tol`.
    pub fn mark_hermitian(mut self, tol: f64) -> Self {
        self.hermitian = self.hermiticity_defect() < tol;
        self
    }

    /// ‖A − A†‖_max.
    pub fn hermiticity_defect(&self) -> f64 {
        let adj = self.adjoint();
        self.sub(&adj).map(|d| d.max_abs()).unwrap_or(f64::INFINITY)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.values[k]))
        })
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.values[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let cols = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        match cols.binary_search(&c) {
            Ok(k) => self.values[self.indptr[r] + k],
            Err(_) => ZERO,
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn diagonal_entries(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest imaginary part in modulus; zero for real operators.
    pub fn max_imag(&self) -> f64 {
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    fn check_same(&self, other: &SparseOperator) -> Result<()> {
        if self.basis != other.basis || self.dim != other.dim {
            return Err(Error::domain(format!(
                "basis mismatch: {} (dim {}) vs {} (dim {})",
                self.basis, self.dim, other.basis, other.dim
            )));
        }
        Ok(())
    }

    pub fn adjoint(&self) -> SparseOperator {
        let triplets = self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect();
        Self::from_triplets(self.dim, self.basis, triplets, self.hermitian)
    }

    pub fn scale(&self, factor: C64) -> SparseOperator {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out.hermitian = self.hermitian && factor.im == 0.0;
        if factor == ZERO {
            out.prune(0.0);
        }
        out
    }

    pub fn scale_real(&self, factor: f64) -> SparseOperator {
        self.scale(C64::new(factor, 0.0))
    }

    pub fn add(&self, other: &SparseOperator) -> Result<SparseOperator> {
        self.check_same(other)?;
        let triplets = self.triplets().chain(other.triplets()).collect();
        Ok(Self::from_triplets(self.dim, self.basis, triplets, self.hermitian && other.hermitian))
    }

    pub fn sub(&self, other: &SparseOperator) -> Result<SparseOperator> {
        self.add(&other.scale_real(-1.0))
    }

    /// Adds `shift` times the identity.
    pub fn shift(&self, shift: f64) -> SparseOperator {
        let id = SparseOperator::identity(self.dim, self.basis).scale_real(shift);
        self.add(&id).expect("same basis")
    }

    /// Matrix product `self · other`. The Hermitian flag is cleared.
    pub fn compose(&self, other: &SparseOperator) -> Result<SparseOperator> {
        self.check_same(other)?;
        let n = self.dim;
        let mut acc = vec![ZERO; n];
        let mut mark = vec![usize::MAX; n];
        let mut touched = Vec::new();
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..n {
            touched.clear();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = ZERO;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                if acc[c] != ZERO {
                    indices.push(c);
                    values.push(acc[c]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        Ok(SparseOperator { dim: n, basis: self.basis, indptr, indices, values, hermitian: false })
    }

    /// [A, B] = AB − BA.
    pub fn commutator(&self, other: &SparseOperator) -> Result<SparseOperator> {
        self.compose(other)?.sub(&other.compose(self)?)
    }

    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for r in 0..self.dim {
            let mut s = ZERO;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            y[r] = s;
        }
    }

    pub fn mul_vec(&self, x: &DVector<C64>) -> DVector<C64> {
        let mut y = DVector::zeros(self.dim);
        self.apply(x.as_slice(), y.as_mut_slice());
        y
    }

    /// ⟨ψ|A|ψ⟩.
    pub fn expectation(&self, psi: &DVector<C64>) -> C64 {
        psi.dotc(&self.mul_vec(psi))
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    /// Real part of the principal submatrix on `indices`.
    pub fn restrict_real(&self, indices: &[usize]) -> DMatrix<f64> {
        let mut local = vec![usize::MAX; self.dim];
        for (i, &g) in indices.iter().enumerate() {
            local[g] = i;
        }
        let n = indices.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &g) in indices.iter().enumerate() {
            for (c, v) in self.row(g) {
                let j = local[c];
                if j != usize::MAX {
                    m[(i, j)] = v.re;
                }
            }
        }
        m
    }

    /// Complex principal submatrix on `indices`.
    pub fn restrict(&self, indices: &[usize]) -> DMatrix<C64> {
        let mut local = vec![usize::MAX; self.dim];
        for (i, &g) in indices.iter().enumerate() {
            local[g] = i;
        }
        let n = indices.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &g) in indices.iter().enumerate() {
            for (c, v) in self.row(g) {
                let j = local[c];
                if j != usize::MAX {
                    m[(i, j)] = v;
                }
            }
        }
        m
    }

    /// Writes one `row col re im` line per nonzero after a header naming the
    /// basis fingerprint and dimension.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# basis {} dim {} nnz {}", self.basis, self.dim, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(w, "{r} {c} {:.17e} {:.17e}", v.re, v.im)?;
        }
        Ok(())
    }
}

/// Partition of basis indices into the connected components of a sparsity
/// graph. Any operator whose pattern is contained in the graph is block
/// diagonal over the components, and so are its inverse and its functions.
#[derive(Clone, Debug)]
pub struct BlockDecomposition {
    pub blocks: Vec<Vec<usize>>,
    /// For each basis index: (block number, position inside the block).
    pub location: Vec<(usize, usize)>,
}

impl BlockDecomposition {
    pub fn dim(&self) -> usize {
        self.location.len()
    }

    pub fn largest(&self) -> usize {
        self.blocks.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Blocks on which `psi` has weight above `tol`.
    pub fn support(&self, psi: &DVector<C64>, tol: f64) -> Vec<usize> {
        let mut on = vec![false; self.blocks.len()];
        for (k, z) in psi.iter().enumerate() {
            if z.norm_sqr() > tol {
                on[self.location[k].0] = true;
            }
        }
        (0..self.blocks.len()).filter(|&b| on[b]).collect()
    }
}

/// Connected components of the union of the sparsity patterns, ordered by
/// smallest member index.
pub fn components(ops: &[&SparseOperator]) -> Result<BlockDecomposition> {
    let first = ops.first().ok_or_else(|| Error::domain("no operators given"))?;
    for op in ops {
        first.check_same(op)?;
    }
    let n = first.dim;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for op in ops {
        for (r, c, _) in op.triplets() {
            let (a, b) = (find(&mut parent, r), find(&mut parent, c));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut block_of_root = vec![usize::MAX; n];
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut location = vec![(0, 0); n];
    for i in 0..n {
        let root = find(&mut parent, i);
        if block_of_root[root] == usize::MAX {
            block_of_root[root] = blocks.len();
            blocks.push(Vec::new());
        }
        let b = block_of_root[root];
        location[i] = (b, blocks[b].len());
        blocks[b].push(i);
    }
    Ok(BlockDecomposition { blocks, location })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id() -> BasisId {
        BasisId(7)
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn triplets_sum_and_prune() {
        let op = SparseOperator::from_triplets(
            3,
            id(),
            vec![(0, 1, c(1.0, 0.0)), (0, 1, c(-1.0, 0.0)), (2, 2, c(2.0, 0.0)), (2, 2, c(1.0, 0.0))],
            false,
        );
        assert_eq!(op.nnz(), 1);
        assert_eq!(op.get(2, 2), c(3.0, 0.0));
    }

    #[test]
    fn diagonal_inverse_composes_to_identity() {
        let d = SparseOperator::diagonal(id(), &[2.0, -4.0, 0.5]);
        let dinv = SparseOperator::diagonal(id(), &[0.5, -0.25, 2.0]);
        let p = d.compose(&dinv).unwrap();
        let i = SparseOperator::identity(3, id());
        assert_eq!(p.sub(&i).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn adjoint_of_product() {
        let a = SparseOperator::from_triplets(
            3,
            id(),
            vec![(0, 1, c(1.0, 2.0)), (1, 2, c(0.5, -1.0)), (2, 0, c(3.0, 0.0)), (1, 1, c(0.0, 1.0))],
            false,
        );
        let b = SparseOperator::from_triplets(
            3,
            id(),
            vec![(1, 0, c(2.0, 0.0)), (2, 1, c(0.0, -1.5)), (0, 2, c(1.0, 1.0))],
            false,
        );
        let lhs = a.compose(&b).unwrap().adjoint();
        let rhs = b.adjoint().compose(&a.adjoint()).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-15);
        let dense = a.to_dense() * b.to_dense();
        let sparse = a.compose(&b).unwrap().to_dense();
        assert!((dense - sparse).norm() < 1e-14);
    }

    #[test]
    fn mismatched_bases_are_rejected() {
        let a = SparseOperator::identity(2, BasisId(1));
        let b = SparseOperator::identity(2, BasisId(2));
        assert!(a.add(&b).is_err());
        assert!(a.compose(&b).is_err());
    }

    #[test]
    fn hermitian_flag() {
        let a = SparseOperator::from_triplets(
            2,
            id(),
            vec![(0, 1, c(1.0, 1.0)), (1, 0, c(1.0, -1.0))],
            false,
        )
        .mark_hermitian(1e-12);
        assert!(a.is_hermitian());
        assert!(!a.scale(c(0.0, 1.0)).is_hermitian());
        assert!(!a.compose(&a).unwrap().is_hermitian());
    }

    #[test]
    fn components_split_disconnected_pieces() {
        let a = SparseOperator::from_triplets(
            5,
            id(),
            vec![(0, 3, c(1.0, 0.0)), (3, 0, c(1.0, 0.0)), (1, 1, c(1.0, 0.0)), (2, 4, c(1.0, 0.0))],
            false,
        );
        let d = components(&[&a]).unwrap();
        assert_eq!(d.blocks, vec![vec![0, 3], vec![1], vec![2, 4]]);
        assert_eq!(d.location[4], (2, 1));
    }

    #[test]
    fn dump_format() {
        let a = SparseOperator::from_triplets(2, id(), vec![(1, 0, c(0.5, -0.25))], false);
        let mut buf = Vec::new();
        a.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# basis 0000000000000007 dim 2 nnz 1");
        let fields: Vec<f64> =
            lines.next().unwrap().split_whitespace().map(|x| x.parse().unwrap()).collect();
        assert_eq!(fields, vec![1.0, 0.0, 0.5, -0.25]);
    }
}
