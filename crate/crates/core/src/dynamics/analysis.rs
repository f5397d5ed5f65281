//! Post-processing of trajectories and sweeps: light-cone fronts, delay
//! times, straight-line fits and finite-size data collapse.

use serde::{Deserialize, Serialize};

use super::series::TimeSeries;
use crate::error::{Error, Result};

/// How the light-cone threshold on C(0, r) is fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// A fixed (negative) level.
    Absolute(f64),
    /// This fraction of the most negative correlator value in the data.
    FractionOfExtreme(f64),
}

impl ThresholdRule {
    /// −0.15 for ten atoms, 10 % of the extreme value otherwise.
    pub fn for_atoms(n: usize) -> Self {
        if n == 10 {
            ThresholdRule::Absolute(-0.15)
        } else {
            ThresholdRule::FractionOfExtreme(0.1)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub channel: String,
    pub r: i32,
    /// None if the threshold is never reached.
    pub tau: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightCone {
    pub threshold: f64,
    pub arrivals: Vec<Arrival>,
}

impl LightCone {
    pub fn arrival(&self, r: i32) -> Option<f64> {
        self.arrivals.iter().find(|a| a.r == r).and_then(|a| a.tau)
    }
}

/// First τ at which `values` reaches `level` from above (falling) or below
/// (rising), linearly interpolated. A series starting past the level
/// crosses at its first sample.
pub fn first_crossing(tau: &[f64], values: &[f64], level: f64, rising: bool) -> Option<f64> {
    let past = |v: f64| if rising { v >= level } else { v <= level };
    let first = values.iter().position(|&v| past(v))?;
    if first == 0 {
        return Some(tau[0]);
    }
    let (t0, t1) = (tau[first - 1], tau[first]);
    let (v0, v1) = (values[first - 1], values[first]);
    Some(t0 + (level - v0) / (v1 - v0) * (t1 - t0))
}

/// Parses "C(0,r)" channel names; the on-site r = 0 and the upper-leg
/// origin "0*" are skipped.
fn correlator_channels(ts: &TimeSeries) -> Vec<(String, i32)> {
    let mut out: Vec<(String, i32)> = ts
        .names()
        .filter_map(|n| {
            let inner = n.strip_prefix("C(0,")?.strip_suffix(')')?;
            let r: i32 = inner.parse().ok()?;
            (r != 0).then(|| (n.to_string(), r))
        })
        .collect();
    out.sort_by_key(|c| c.1);
    out
}

pub fn light_cone_front(ts: &TimeSeries, rule: ThresholdRule) -> Result<LightCone> {
    let chans = correlator_channels(ts);
    if chans.is_empty() {
        return Err(Error::domain("series has no C(0,r) channels with r != 0"));
    }
    let threshold = match rule {
        ThresholdRule::Absolute(t) => t,
        ThresholdRule::FractionOfExtreme(f) => {
            let min = chans
                .iter()
                .flat_map(|(n, _)| ts.get(n).unwrap().iter().copied())
                .fold(f64::INFINITY, f64::min);
            f * min.min(0.0)
        }
    };
    let arrivals = chans
        .into_iter()
        .map(|(channel, r)| {
            let v = ts.get(&channel).unwrap();
            let tau = if threshold < 0.0 { first_crossing(&ts.tau, v, threshold, false) } else { None };
            Arrival { channel, r, tau }
        })
        .collect();
    Ok(LightCone { threshold, arrivals })
}

/// First τ at which a population fraction reaches `level`.
pub fn delay_time(tau: &[f64], n: &[f64], level: f64) -> Option<f64> {
    first_crossing(tau, n, level, true)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::domain("linear fit needs at least two matching points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("linear fit with all abscissae equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(LinearFit { slope, intercept, r_squared })
}

/// Order parameter of one system size against the control parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingCurve {
    pub n: f64,
    pub control: Vec<f64>,
    pub value: Vec<f64>,
}

const COLLAPSE_POINTS: usize = 64;

fn interpolate(x: &[f64], y: &[f64], at: f64) -> f64 {
    let i = x.partition_point(|&v| v < at).clamp(1, x.len() - 1);
    let (x0, x1) = (x[i - 1], x[i]);
    y[i - 1] + (y[i] - y[i - 1]) * (at - x0) / (x1 - x0)
}

/// Normalized spread of the rescaled curves X = ε N^{1/ν}, Y = y N^{β/ν}
/// with ε = (control − c)/c, sampled on the common X range:
/// Σ (Y − Ȳ)² / Σ Y².
pub fn collapse_residual(curves: &[ScalingCurve], beta: f64, nu: f64, critical: f64) -> Result<f64> {
    if curves.len() < 3 {
        return Err(Error::Collapse(format!("need at least 3 system sizes, got {}", curves.len())));
    }
    if !(nu > 0.0) || critical == 0.0 {
        return Err(Error::Collapse("ν must be positive and the critical point nonzero".into()));
    }
    let mut scaled = Vec::with_capacity(curves.len());
    for c in curves {
        if c.control.len() != c.value.len() || c.control.len() < 2 {
            return Err(Error::Collapse(format!("curve for N = {} is malformed", c.n)));
        }
        let sx = c.n.powf(1.0 / nu);
        let sy = c.n.powf(beta / nu);
        let mut pts: Vec<(f64, f64)> = c
            .control
            .iter()
            .zip(&c.value)
            .map(|(x, y)| ((x - critical) / critical * sx, y * sy))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        scaled.push((x, y));
    }
    let lo = scaled.iter().map(|(x, _)| x[0]).fold(f64::NEG_INFINITY, f64::max);
    let hi = scaled.iter().map(|(x, _)| x[x.len() - 1]).fold(f64::INFINITY, f64::min);
    if !(hi > lo) {
        return Err(Error::Collapse(format!("rescaled ranges do not overlap (β = {beta}, ν = {nu})")));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..COLLAPSE_POINTS {
        let at = lo + (hi - lo) * k as f64 / (COLLAPSE_POINTS - 1) as f64;
        let ys: Vec<f64> = scaled.iter().map(|(x, y)| interpolate(x, y, at)).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        num += ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>();
        den += ys.iter().map(|y| y * y).sum::<f64>();
    }
    Ok(if den == 0.0 { 0.0 } else { num / den })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseFit {
    pub beta: f64,
    pub nu: f64,
    pub residual: f64,
}

/// Coordinate descent on (β, ν) from a starting guess, halving the step
/// whenever no move improves the residual.
pub fn optimize_collapse(curves: &[ScalingCurve], beta0: f64, nu0: f64, critical: f64) -> Result<CollapseFit> {
    let eval = |b: f64, n: f64| collapse_residual(curves, b, n, critical).unwrap_or(f64::INFINITY);
    let (mut beta, mut nu) = (beta0, nu0);
    let mut best = collapse_residual(curves, beta, nu, critical)?;
    let mut step = 0.25;
    while step > 1e-5 {
        let mut moved = false;
        for (db, dn) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let (b, n) = (beta + db, nu + dn);
            if n <= 0.05 {
                continue;
            }
            let r = eval(b, n);
            if r < best {
                best = r;
                beta = b;
                nu = n;
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    Ok(CollapseFit { beta, nu, residual: best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossings() {
        let tau = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(delay_time(&tau, &[0.0, 0.02, 0.08, 0.1], 0.05), Some(1.5));
        assert_eq!(delay_time(&tau, &[0.06, 0.0, 0.0, 0.0], 0.05), Some(0.0));
        assert_eq!(delay_time(&tau, &[0.0, 0.01, 0.02, 0.03], 0.05), None);
        assert_eq!(first_crossing(&tau, &[0.0, -0.1, -0.2, -0.3], -0.15, false), Some(1.5));
    }

    #[test]
    fn front_rules() {
        let mut ts = TimeSeries::new(vec![0.0, 1.0, 2.0]);
        ts.push_channel("C(0,0)", vec![0.0, 1.0, 2.0]).unwrap();
        ts.push_channel("C(0,-1)", vec![0.0, -0.3, -1.0]).unwrap();
        ts.push_channel("C(0,1)", vec![0.0, -0.1, -0.2]).unwrap();
        ts.push_channel("C(0,2)", vec![0.0, 0.0, -0.05]).unwrap();
        let abs = light_cone_front(&ts, ThresholdRule::Absolute(-0.15)).unwrap();
        assert_eq!(abs.arrivals.iter().map(|a| a.r).collect::<Vec<_>>(), vec![-1, 1, 2]);
        assert!((abs.arrival(-1).unwrap() - 0.5).abs() < 1e-12);
        assert!((abs.arrival(1).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(abs.arrival(2), None);
        let rel = light_cone_front(&ts, ThresholdRule::FractionOfExtreme(0.1)).unwrap();
        assert!((rel.threshold + 0.1).abs() < 1e-15);
        assert!((rel.arrival(1).unwrap() - 1.0).abs() < 1e-12);

        let mut flat = TimeSeries::new(vec![0.0, 1.0]);
        flat.push_channel("C(0,1)", vec![0.3, 0.3]).unwrap();
        let none = light_cone_front(&flat, ThresholdRule::FractionOfExtreme(0.1)).unwrap();
        assert_eq!(none.arrival(1), None);
        assert_eq!(light_cone_front(&flat, ThresholdRule::Absolute(-0.15)).unwrap().arrival(1), None);
    }

    #[test]
    fn line_fit() {
        let x = [1.0, 2.0, 3.0];
        let f = linear_fit(&x, &[3.0, 5.0, 7.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
    }

    fn planted(beta: f64, nu: f64) -> Vec<ScalingCurve> {
        let f = |x: f64| 1.0 / (1.0 + (-2.0 * x).exp()) + 0.05 * x * x;
        [20.0, 40.0, 60.0, 80.0, 100.0]
            .iter()
            .map(|&n: &f64| {
                let control: Vec<f64> = (0..81).map(|k| 4.0 + 1.6 * k as f64 / 80.0).collect();
                let value = control
                    .iter()
                    .map(|c| n.powf(-beta / nu) * f((c - 4.8) / 4.8 * n.powf(1.0 / nu)))
                    .collect();
                ScalingCurve { n, control, value }
            })
            .collect()
    }

    #[test]
    fn identical_curves_collapse_trivially() {
        let curves: Vec<ScalingCurve> = [10.0, 20.0, 30.0]
            .iter()
            .map(|&n| ScalingCurve { n, control: vec![1.0, 2.0, 3.0], value: vec![0.1, 0.4, 0.2] })
            .collect();
        assert!(collapse_residual(&curves, 0.0, 1e12, 2.0).unwrap() < 1e-20);
        assert!(collapse_residual(&curves[..2], 0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn planted_exponents_recovered() {
        let curves = planted(1.1, 2.4);
        let r = collapse_residual(&curves, 1.1, 2.4, 4.8).unwrap();
        assert!(r < 1e-4, "{r}");
        let fit = optimize_collapse(&curves, 0.7, 1.8, 4.8).unwrap();
        assert!((fit.beta - 1.1).abs() < 0.05 && (fit.nu - 2.4).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn non_overlapping_ranges() {
        let curves: Vec<ScalingCurve> = [10.0, 20.0, 30.0]
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let x0 = 1.0 + 10.0 * i as f64;
                ScalingCurve { n, control: vec![x0, x0 + 1.0], value: vec![0.0, 1.0] }
            })
            .collect();
        assert!(matches!(collapse_residual(&curves, 0.0, 1e9, 1.0), Err(Error::Collapse(_))));
    }
}
