//! Synthetic-ladder geometry of the ground manifold and the collective
//! operators D_L, D_R, T⁺, T⁻ in Schwinger-boson form.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::angular::{CgTable, HalfInt};
use crate::error::{Error, Result};
use crate::fock::{FockBasis, ModeLabel, ModeSet, ModeSpace, ProductBasis, SparseOperator, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Leg {
    Upper,
    Lower,
}

/// Ground manifold of spin F (F_g = F_e = F) viewed as a two-leg ladder.
#[derive(Clone, Debug)]
pub struct LevelScheme {
    spin: HalfInt,
    cg: CgTable,
}

impl LevelScheme {
    pub fn new(spin: HalfInt) -> Result<Self> {
        if spin.twice() <= 0 {
            return Err(Error::domain(format!("spin F = {spin} must be positive")));
        }
        if !spin.is_half_odd() {
            return Err(Error::domain(format!(
                "spin F = {spin} is an integer; the two-leg ladder needs a half-integer F"
            )));
        }
        let cg = CgTable::build(spin, spin)?;
        Ok(LevelScheme { spin, cg })
    }

    pub fn spin(&self) -> HalfInt {
        self.spin
    }

    /// N_F = 2F(F+1).
    pub fn normalization(&self) -> f64 {
        let f = self.spin.value();
        2.0 * f * (f + 1.0)
    }

    pub fn cg(&self) -> &CgTable {
        &self.cg
    }

    pub fn num_levels(&self) -> usize {
        self.spin.twice() as usize + 1
    }

    /// −F, −F+1, …, F.
    pub fn ground_modes(&self) -> Vec<HalfInt> {
        let tf = self.spin.twice();
        (0..=tf).map(|k| HalfInt::from_twice(-tf + 2 * k)).collect()
    }

    pub fn is_level(&self, m: HalfInt) -> bool {
        let tf = self.spin.twice();
        m.twice().abs() <= tf && (tf - m.twice()) % 2 == 0
    }

    /// Upper leg: −F+1, −F+3, …, F. Lower leg: −F, −F+2, …, F−1.
    pub fn leg_modes(&self, leg: Leg) -> Vec<HalfInt> {
        let tf = self.spin.twice();
        let start = match leg {
            Leg::Upper => -tf + 2,
            Leg::Lower => -tf,
        };
        (start..=tf).step_by(4).map(HalfInt::from_twice).collect()
    }

    pub fn leg_of(&self, m: HalfInt) -> Result<Leg> {
        if !self.is_level(m) {
            return Err(Error::domain(format!("m = {m} is not a level of F = {}", self.spin)));
        }
        Ok(if (m.twice() + self.spin.twice()) % 4 == 0 { Leg::Lower } else { Leg::Upper })
    }

    pub fn leg_mode_set(&self, leg: Leg) -> ModeSet {
        ModeSet::ground(self.leg_modes(leg)).expect("legs are nonempty and sorted")
    }

    /// Synthetic site index r: lower-leg modes map to (m + F)/2 and upper-leg
    /// modes to (m − F)/2, so |g_{−F}⟩ sits at r = 0 and |g_F⟩ at r = 0*.
    pub fn site_coordinate(&self, m: HalfInt) -> Result<i32> {
        Ok(match self.leg_of(m)? {
            Leg::Lower => (m.twice() + self.spin.twice()) / 4,
            Leg::Upper => (m.twice() - self.spin.twice()) / 4,
        })
    }

    /// Inverse of [`LevelScheme::site_coordinate`] for the given leg.
    pub fn mode_at_site(&self, leg: Leg, r: i32) -> Option<HalfInt> {
        let m = match leg {
            Leg::Lower => HalfInt::from_twice(4 * r - self.spin.twice()),
            Leg::Upper => HalfInt::from_twice(4 * r + self.spin.twice()),
        };
        (self.is_level(m) && self.leg_of(m).ok() == Some(leg)).then_some(m)
    }

    /// Product basis with `n_upper` atoms on the upper leg and `n_lower` on
    /// the lower leg.
    pub fn leg_basis(&self, n_upper: usize, n_lower: usize, cap: usize) -> Result<ProductBasis> {
        let up = FockBasis::with_cap(self.leg_mode_set(Leg::Upper), n_upper, cap)?;
        let lo = FockBasis::with_cap(self.leg_mode_set(Leg::Lower), n_lower, cap)?;
        ProductBasis::with_cap(up, lo, cap)
    }

    /// Product of two permutation-symmetric atom groups, each free to occupy
    /// every ground level.
    pub fn group_basis(&self, n_a: usize, n_b: usize, cap: usize) -> Result<ProductBasis> {
        let modes = ModeSet::ground(self.ground_modes())?;
        let a = FockBasis::with_cap(modes.clone(), n_a, cap)?;
        let b = FockBasis::with_cap(modes, n_b, cap)?;
        ProductBasis::with_cap(a, b, cap)
    }

    /// (C_m^{-1})².
    pub fn d_l_coefficient(&self, m: HalfInt) -> f64 {
        self.cg.get(m, -1).powi(2)
    }

    /// (C_m^{+1})².
    pub fn d_r_coefficient(&self, m: HalfInt) -> f64 {
        self.cg.get(m, 1).powi(2)
    }

    /// C_m^{+1} C_{m+2}^{-1}, the amplitude of a†_{m+2} a_m in T⁺.
    pub fn hop_coefficient(&self, m: HalfInt) -> f64 {
        self.cg.get(m, 1) * self.cg.get(m + HalfInt::from_twice(4), -1)
    }

    fn check_space<S: ModeSpace + ?Sized>(&self, space: &S) -> Result<Vec<HalfInt>> {
        let mut ground = Vec::new();
        for label in space.mode_labels() {
            if label.is_excited() {
                continue;
            }
            if !self.is_level(label.m) {
                return Err(Error::domain(format!(
                    "basis mode {label} is not a level of F = {}",
                    self.spin
                )));
            }
            ground.push(label.m);
        }
        Ok(ground)
    }

    /// Σ over the given leg of ⟨k|n̂_m|k⟩.
    pub fn leg_number_diag<S: ModeSpace + ?Sized>(&self, space: &S, leg: Leg) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; space.dim()];
        for m in self.leg_modes(leg) {
            let label = ModeLabel::ground(m);
            if space.has_mode(label) {
                for (a, n) in acc.iter_mut().zip(space.occupation_diag(label)?) {
                    *a += n;
                }
            }
        }
        Ok(acc)
    }
}

/// The collective ground-manifold operators on one basis.
#[derive(Clone, Debug)]
pub struct LadderOperators {
    pub d_l: SparseOperator,
    pub d_r: SparseOperator,
    pub t_plus: SparseOperator,
    pub t_minus: SparseOperator,
}

pub fn build_ladder_operators<S: ModeSpace + ?Sized>(
    scheme: &LevelScheme,
    space: &S,
) -> Result<LadderOperators> {
    let ground = scheme.check_space(space)?;
    let mut d_l = vec![0.0; space.dim()];
    let mut d_r = vec![0.0; space.dim()];
    for &m in &ground {
        let occ = space.occupation_diag(ModeLabel::ground(m))?;
        let (cl, cr) = (scheme.d_l_coefficient(m), scheme.d_r_coefficient(m));
        for k in 0..occ.len() {
            d_l[k] += cl * occ[k];
            d_r[k] += cr * occ[k];
        }
    }
    let mut t_plus = SparseOperator::zeros(space.dim(), space.id());
    for &m in &ground {
        let coef = scheme.hop_coefficient(m);
        if coef == 0.0 {
            continue;
        }
        let target = m + HalfInt::from_twice(4);
        if !ground.contains(&target) {
            return Err(Error::domain(format!(
                "basis contains g({m}) but not g({target}); T+ would leave the space"
            )));
        }
        let hop = space.bilinear(
            ModeLabel::ground(target),
            ModeLabel::ground(m),
            C64::new(coef, 0.0),
        )?;
        t_plus = t_plus.add(&hop)?;
    }
    let t_minus = t_plus.adjoint();
    Ok(LadderOperators {
        d_l: space.diagonal(&d_l),
        d_r: space.diagonal(&d_r),
        t_plus,
        t_minus,
    })
}

/// (N_upper, N_lower) for a normalized state.
pub fn leg_populations<S: ModeSpace + ?Sized>(
    state: &DVector<C64>,
    scheme: &LevelScheme,
    space: &S,
) -> Result<(f64, f64)> {
    let norm = state.norm();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::domain(format!("state is not normalized (norm {norm})")));
    }
    if state.len() != space.dim() {
        return Err(Error::domain("state dimension does not match the basis"));
    }
    let weights: Vec<f64> = state.iter().map(|z| z.norm_sqr()).collect();
    let mut out = [0.0; 2];
    for (slot, leg) in [Leg::Upper, Leg::Lower].into_iter().enumerate() {
        let diag = scheme.leg_number_diag(space, leg)?;
        out[slot] = weights.iter().zip(&diag).map(|(w, n)| w * n).sum();
    }
    Ok((out[0], out[1]))
}

pub fn site_coordinate(scheme: &LevelScheme, m: HalfInt) -> Result<i32> {
    scheme.site_coordinate(m)
}
