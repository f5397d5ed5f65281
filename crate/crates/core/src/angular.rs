//! Clebsch-Gordan coefficients for dipole (rank-1) couplings between hyperfine
//! manifolds, evaluated with the Racah closed-form sum under the
//! Condon-Shortley phase convention.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A half-integer quantity (spin or magnetic quantum number), stored as twice
/// its value so that arithmetic stays exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);

    pub const fn from_twice(twice: i32) -> Self {
        HalfInt(twice)
    }

    /// `HalfInt::new(3, 2)` is 3/2; the denominator must be 1 or 2.
    pub fn new(num: i32, den: i32) -> Result<Self> {
        match den {
            1 => Ok(HalfInt(2 * num)),
            2 => Ok(HalfInt(num)),
            -1 => Ok(HalfInt(-2 * num)),
            -2 => Ok(HalfInt(-num)),
            _ => Err(Error::domain(format!("{num}/{den} is not a half-integer"))),
        }
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub const fn is_half_odd(self) -> bool {
        self.0.rem_euclid(2) == 1
    }

    pub const fn abs(self) -> Self {
        HalfInt(self.0.abs())
    }
}

impl std::ops::Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 + rhs.0)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 - rhs.0)
    }
}

impl std::ops::Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl FromStr for HalfInt {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::domain(format!("cannot parse '{s}' as a half-integer"));
        match s.split_once('/') {
            Some((num, den)) => {
                let num: i32 = num.trim().parse().map_err(|_| bad())?;
                let den: i32 = den.trim().parse().map_err(|_| bad())?;
                HalfInt::new(num, den)
            }
            None => {
                if let Ok(n) = s.parse::<i32>() {
                    return Ok(HalfInt(2 * n));
                }
                // Accept decimal spellings like "1.5" or "-0.5".
                let x: f64 = s.parse().map_err(|_| bad())?;
                let twice = 2.0 * x;
                if (twice - twice.round()).abs() > 1e-12 {
                    return Err(bad());
                }
                Ok(HalfInt(twice.round() as i32))
            }
        }
    }
}

impl Serialize for HalfInt {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HalfInt {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Int(i64),
            Float(f64),
        }
        let parsed = match Repr::deserialize(d)? {
            Repr::Text(s) => s.parse(),
            Repr::Int(n) => Ok(HalfInt(2 * n as i32)),
            Repr::Float(x) => x.to_string().parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

const FACTORIAL_TABLE_LEN: usize = 171;

fn factorial(n: i32) -> f64 {
    use std::sync::OnceLock;
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = vec![1.0; FACTORIAL_TABLE_LEN];
        for k in 1..FACTORIAL_TABLE_LEN {
            t[k] = t[k - 1] * k as f64;
        }
        t
    });
    debug_assert!(n >= 0);
    table[n as usize]
}

fn check_spin(name: &str, spin: HalfInt) -> Result<()> {
    if spin.twice() < 0 {
        return Err(Error::domain(format!("{name} = {spin} is negative")));
    }
    Ok(())
}

/// General Clebsch-Gordan coefficient ⟨j1 m1; j2 m2 | J M⟩ by the Racah sum.
///
/// Returns exactly 0 for any selection-rule violation.
pub fn clebsch_gordan(
    j1: HalfInt,
    m1: HalfInt,
    j2: HalfInt,
    m2: HalfInt,
    j: HalfInt,
    m: HalfInt,
) -> Result<f64> {
    check_spin("j1", j1)?;
    check_spin("j2", j2)?;
    check_spin("J", j)?;
    for (name, jj, mm) in [("m1", j1, m1), ("m2", j2, m2), ("M", j, m)] {
        if (jj.twice() - mm.twice()).rem_euclid(2) != 0 {
            return Err(Error::domain(format!(
                "{name} = {mm} is not a magnetic sublevel of spin {jj}"
            )));
        }
    }
    let (tj1, tj2, tj) = (j1.twice(), j2.twice(), j.twice());
    let (tm1, tm2, tm) = (m1.twice(), m2.twice(), m.twice());
    if tm1 + tm2 != tm
        || tm1.abs() > tj1
        || tm2.abs() > tj2
        || tm.abs() > tj
        || tj > tj1 + tj2
        || tj < (tj1 - tj2).abs()
        || (tj1 + tj2 + tj) % 2 != 0
    {
        return Ok(0.0);
    }
    // All of these are integers once the selection rules hold.
    let a = (tj + tj1 - tj2) / 2;
    let b = (tj - tj1 + tj2) / 2;
    let c = (tj1 + tj2 - tj) / 2;
    let d = (tj1 + tj2 + tj) / 2 + 1;
    let prefactor = ((tj + 1) as f64 * factorial(a) * factorial(b) * factorial(c) / factorial(d))
        .sqrt()
        * (factorial((tj + tm) / 2)
            * factorial((tj - tm) / 2)
            * factorial((tj1 - tm1) / 2)
            * factorial((tj1 + tm1) / 2)
            * factorial((tj2 - tm2) / 2)
            * factorial((tj2 + tm2) / 2))
            .sqrt();

    let e1 = c;
    let e2 = (tj1 - tm1) / 2;
    let e3 = (tj2 + tm2) / 2;
    let e4 = (tj - tj2 + tm1) / 2;
    let e5 = (tj - tj1 - tm2) / 2;
    let kmin = 0.max(-e4).max(-e5);
    let kmax = e1.min(e2).min(e3);
    let mut sum = 0.0;
    for k in kmin..=kmax {
        let denom = factorial(k)
            * factorial(e1 - k)
            * factorial(e2 - k)
            * factorial(e3 - k)
            * factorial(e4 + k)
            * factorial(e5 + k);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / denom;
    }
    Ok(prefactor * sum)
}

/// Dipole coupling coefficient C^p_m = ⟨F_g, m; 1, p | F_e, m+p⟩.
pub fn compute_cg(f_g: HalfInt, m: HalfInt, p: i32, f_e: HalfInt) -> Result<f64> {
    if !(-1..=1).contains(&p) {
        return Err(Error::domain(format!("polarization {p} is not in {{-1, 0, 1}}")));
    }
    let p = HalfInt::from_twice(2 * p);
    clebsch_gordan(f_g, m, HalfInt::from_twice(2), p, f_e, m + p)
}

/// All dipole coefficients between a ground manifold of spin `f_g` and an
/// excited manifold of spin `f_e`. Lookups outside the selection rules give 0.
#[derive(Clone, Debug)]
pub struct CgTable {
    f_g: HalfInt,
    f_e: HalfInt,
    entries: BTreeMap<(HalfInt, i32), f64>,
}

impl CgTable {
    pub fn build(f_g: HalfInt, f_e: HalfInt) -> Result<Self> {
        check_spin("F_g", f_g)?;
        check_spin("F_e", f_e)?;
        let mut entries = BTreeMap::new();
        let mut tm = -f_g.twice();
        while tm <= f_g.twice() {
            let m = HalfInt::from_twice(tm);
            for p in -1..=1 {
                let c = compute_cg(f_g, m, p, f_e)?;
                if c != 0.0 {
                    entries.insert((m, p), c);
                }
            }
            tm += 2;
        }
        Ok(CgTable { f_g, f_e, entries })
    }

    pub fn f_g(&self) -> HalfInt {
        self.f_g
    }

    pub fn f_e(&self) -> HalfInt {
        self.f_e
    }

    pub fn get(&self, m: HalfInt, p: i32) -> f64 {
        self.entries.get(&(m, p)).copied().unwrap_or(0.0)
    }

    /// Number of stored (nonzero) coefficients.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((HalfInt, i32), f64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(s: &str) -> HalfInt {
        s.parse().unwrap()
    }

    /// Builds coupled states |J M⟩ in the |j1 m1⟩|j2 m2⟩ product basis by
    /// repeated lowering and Gram-Schmidt, fixing the phase of each top state
    /// by ⟨j1 j1; j2 (J - j1) | J J⟩ > 0. Independent of the Racah sum.
    fn cg_by_lowering(j1: HalfInt, j2: HalfInt) -> BTreeMap<(i32, i32, i32, i32), f64> {
        let (tj1, tj2) = (j1.twice(), j2.twice());
        let states: Vec<(i32, i32)> = (0..=tj1)
            .flat_map(|a| (0..=tj2).map(move |b| (-tj1 + 2 * a, -tj2 + 2 * b)))
            .collect();
        let idx = |m1: i32, m2: i32| states.iter().position(|&s| s == (m1, m2)).unwrap();
        let lower = |v: &Vec<f64>| {
            let mut out = vec![0.0; states.len()];
            for (k, &(m1, m2)) in states.iter().enumerate() {
                if v[k] == 0.0 {
                    continue;
                }
                let (a, b) = (tj1 as f64 / 2.0, m1 as f64 / 2.0);
                if m1 > -tj1 {
                    out[idx(m1 - 2, m2)] += v[k] * ((a + b) * (a - b + 1.0)).sqrt();
                }
                let (a, b) = (tj2 as f64 / 2.0, m2 as f64 / 2.0);
                if m2 > -tj2 {
                    out[idx(m1, m2 - 2)] += v[k] * ((a + b) * (a - b + 1.0)).sqrt();
                }
            }
            let n = out.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                out.iter_mut().for_each(|x| *x /= n);
            }
            out
        };
        let mut coupled: BTreeMap<(i32, i32), Vec<f64>> = BTreeMap::new();
        let mut tj = tj1 + tj2;
        while tj >= (tj1 - tj2).abs() {
            // Top state: a generic vector in the M = J subspace, made
            // orthogonal to all higher-J states with the same M.
            let mut v: Vec<f64> = states
                .iter()
                .enumerate()
                .map(|(k, &(m1, m2))| if m1 + m2 == tj { 1.0 + 0.1 * k as f64 } else { 0.0 })
                .collect();
            for (_, w) in coupled.iter().filter(|((_, tm), _)| *tm == tj) {
                let dot: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(w).for_each(|(a, b)| *a -= dot * b);
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            let top = idx(tj1, tj - tj1);
            if v[top] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            let mut tm = tj;
            coupled.insert((tj, tm), v.clone());
            while tm > -tj {
                v = lower(&v);
                tm -= 2;
                coupled.insert((tj, tm), v.clone());
            }
            tj -= 2;
        }
        let mut out = BTreeMap::new();
        for ((tj, tm), v) in coupled {
            for (k, &(m1, m2)) in states.iter().enumerate() {
                if m1 + m2 == tm {
                    out.insert((m1, m2, tj, tm), v[k]);
                }
            }
        }
        out
    }

    #[test]
    fn racah_matches_lowering_construction() {
        for tf in 1..=9 {
            let f = HalfInt::from_twice(tf);
            let table = cg_by_lowering(f, HalfInt::from_twice(2));
            for (&(m1, m2, tj, tm), &expected) in &table {
                let got = clebsch_gordan(
                    f,
                    HalfInt::from_twice(m1),
                    HalfInt::from_twice(2),
                    HalfInt::from_twice(m2),
                    HalfInt::from_twice(tj),
                    HalfInt::from_twice(tm),
                )
                .unwrap();
                assert!(
                    (got - expected).abs() < 1e-12,
                    "F={f} m1={m1} m2={m2} J={tj} M={tm}: {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn lowering_coefficient_identity() {
        for tf in [1, 3, 5, 7, 9] {
            let f = HalfInt::from_twice(tf);
            let nf = 2.0 * f.value() * (f.value() + 1.0);
            let mut tm = -tf;
            while tm <= tf {
                let m = HalfInt::from_twice(tm);
                let c = compute_cg(f, m, -1, f).unwrap();
                let (fv, mv) = (f.value(), m.value());
                let expected = (fv + mv) * (fv - mv + 1.0) / nf;
                assert!((c * c - expected).abs() < 1e-12);
                tm += 2;
            }
        }
    }

    #[test]
    fn raising_lowering_products_are_negative() {
        for tf in [1, 3, 5, 7, 9] {
            let f = HalfInt::from_twice(tf);
            let nf = 2.0 * f.value() * (f.value() + 1.0);
            let mut tm = -tf;
            while tm + 4 <= tf {
                let m = HalfInt::from_twice(tm);
                let up = compute_cg(f, m, 1, f).unwrap();
                let down = compute_cg(f, m + HalfInt::from_twice(4), -1, f).unwrap();
                let (fv, mv) = (f.value(), m.value());
                let expected = -((fv - mv) * (fv + mv + 1.0) * (fv - mv - 1.0) * (fv + mv + 2.0))
                    .sqrt()
                    / nf;
                assert!(up * down < 0.0);
                assert!((up * down - expected).abs() < 1e-12);
                tm += 2;
            }
        }
    }

    #[test]
    fn documented_values() {
        assert!(compute_cg(h("3/2"), h("3/2"), -1, h("5/2")).unwrap().abs() > 0.0);
        assert_eq!(compute_cg(h("3/2"), h("3/2"), 1, h("3/2")).unwrap(), 0.0);
        let c = compute_cg(h("3/2"), h("3/2"), -1, h("3/2")).unwrap();
        assert!((c * c - 0.4).abs() < 1e-14);
        assert_eq!(compute_cg(h("9/2"), h("-9/2"), -1, h("9/2")).unwrap(), 0.0);
    }

    #[test]
    fn invalid_inputs_are_domain_errors() {
        assert!(matches!(
            compute_cg(HalfInt::from_twice(-1), h("1/2"), 0, h("1/2")),
            Err(Error::Domain(_))
        ));
        assert!(matches!(compute_cg(h("3/2"), h("1"), 0, h("3/2")), Err(Error::Domain(_))));
        assert!(matches!(compute_cg(h("3/2"), h("1/2"), 2, h("3/2")), Err(Error::Domain(_))));
        assert!("1/3".parse::<HalfInt>().is_err());
    }

    #[test]
    fn table_lookups() {
        let t = CgTable::build(h("3/2"), h("3/2")).unwrap();
        let nonzero_lowering: Vec<_> = t.iter().filter(|((_, p), _)| *p == -1).collect();
        assert_eq!(nonzero_lowering.len(), 3);
        assert_eq!(t.get(h("-3/2"), -1), 0.0);
        assert_eq!(t.get(h("7/2"), 0), 0.0);

        let t = CgTable::build(h("1/2"), h("1/2")).unwrap();
        let c = t.get(h("1/2"), -1);
        assert!((c * c - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn half_int_parsing() {
        assert_eq!(h("3/2").twice(), 3);
        assert_eq!(h("-5/2").twice(), -5);
        assert_eq!(h("2").twice(), 4);
        assert_eq!(h("1.5").twice(), 3);
        assert_eq!(h("-3/2").to_string(), "-3/2");
        assert_eq!(h("4/2").to_string(), "2");
    }
}
