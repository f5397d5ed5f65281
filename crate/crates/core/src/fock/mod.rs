//! Fixed-particle-number bosonic Fock spaces, two-sector product spaces, and
//! sparse operators built from normal-ordered boson bilinears.

mod basis;
mod operator;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::angular::HalfInt;
use crate::error::{Error, Result};

pub use basis::{
    embed, enumerate_basis, fock_dimension, FockBasis, ModeSpace, ProductBasis, Sector, DEFAULT_BASIS_CAP,
};
pub use operator::{components, BlockDecomposition, SparseOperator};

pub type C64 = num_complex::Complex64;

/// Which atomic manifold a boson mode belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Manifold {
    Ground,
    Excited,
}

/// A single-atom level |g_m⟩ or |e_m⟩, i.e. one Schwinger-boson mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModeLabel {
    pub manifold: Manifold,
    pub m: HalfInt,
}

impl ModeLabel {
    pub const fn ground(m: HalfInt) -> Self {
        ModeLabel { manifold: Manifold::Ground, m }
    }

    pub const fn excited(m: HalfInt) -> Self {
        ModeLabel { manifold: Manifold::Excited, m }
    }

    pub fn is_excited(&self) -> bool {
        self.manifold == Manifold::Excited
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.manifold {
            Manifold::Ground => write!(f, "g({})", self.m),
            Manifold::Excited => write!(f, "e({})", self.m),
        }
    }
}

/// Ordered set of modes. Labels are strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeSet {
    labels: Vec<ModeLabel>,
}

impl ModeSet {
    pub fn new(labels: Vec<ModeLabel>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::domain("mode set is empty"));
        }
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("mode labels must be strictly increasing"));
        }
        Ok(ModeSet { labels })
    }

    /// Ground-manifold modes with the given magnetic quantum numbers (sorted
    /// on construction).
    pub fn ground(ms: impl IntoIterator<Item = HalfInt>) -> Result<Self> {
        let mut labels: Vec<_> = ms.into_iter().map(ModeLabel::ground).collect();
        labels.sort();
        ModeSet::new(labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[ModeLabel] {
        &self.labels
    }

    pub fn position(&self, label: ModeLabel) -> Option<usize> {
        self.labels.binary_search(&label).ok()
    }

    pub fn contains(&self, label: ModeLabel) -> bool {
        self.position(label).is_some()
    }
}

/// Stable fingerprint of a basis, used to reject operators applied to the
/// wrong space and written into operator dumps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisId(pub u64);

impl fmt::Display for BasisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

pub(crate) fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
