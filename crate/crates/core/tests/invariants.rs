use ladderqed::angular::{clebsch_gordan, HalfInt};
use ladderqed::config::SimConfig;
use ladderqed::dynamics::analysis::{collapse_residual, ScalingCurve};
use ladderqed::dynamics::{
    evolve, leg_observables, population_observables, tau_grid, tau_to_time, EvolveMethod, EvolveOptions,
    InitialStateSpec,
};
use ladderqed::fock::{fock_dimension, FockBasis, ModeLabel, ModeSet, ModeSpace, C64};
use ladderqed::fullmodel::{second_order_reference, FullBasis};
use ladderqed::heff::{build_heff_exact, DriveParams};
use ladderqed::ladder::{Leg, LevelScheme};
use ladderqed::upa::{bdg_propagate_vacuum, four_level_k, four_level_population};
use proptest::prelude::*;

fn h(twice: i32) -> HalfInt {
    HalfInt::from_twice(twice)
}

/// Δ_A < 0 < Δ_B away from the pump-shifted poles.
fn drives() -> impl Strategy<Value = DriveParams> {
    (0.01..0.1f64, 0.01..0.1f64, -7.0..-1.5f64, 1.5..8.0f64)
        .prop_map(|(oa, ob, da, db)| DriveParams::new(oa, da, ob, db))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cg_columns_are_orthonormal(tj1 in 1..10i32, tj2 in 1..3i32, pick in 0..100usize) {
        let (j1, j2) = (h(tj1), h(tj2));
        let js: Vec<i32> = ((tj1 - tj2).abs()..=tj1 + tj2).step_by(2).collect();
        let tm = {
            let tj = *js.last().unwrap();
            let ms: Vec<i32> = (-tj..=tj).step_by(2).collect();
            ms[pick % ms.len()]
        };
        for &a in &js {
            for &b in &js {
                let mut dot = 0.0;
                for tm1 in (-tj1..=tj1).step_by(2) {
                    let tm2 = tm - tm1;
                    if tm2.abs() > tj2 {
                        continue;
                    }
                    let ca = clebsch_gordan(j1, h(tm1), j2, h(tm2), h(a), h(tm)).unwrap();
                    let cb = clebsch_gordan(j1, h(tm1), j2, h(tm2), h(b), h(tm)).unwrap();
                    dot += ca * cb;
                }
                let expect = if a == b && tm.abs() <= a { 1.0 } else { 0.0 };
                prop_assert!((dot - expect).abs() < 1e-12, "J={a}/2 J'={b}/2 M={tm}/2: {dot}");
            }
        }
    }

    #[test]
    fn fock_dimension_is_stars_and_bars(modes in 1..6usize, particles in 0..7usize) {
        let labels: Vec<ModeLabel> = (0..modes).map(|k| ModeLabel::ground(h(2 * k as i32 - 5))).collect();
        let basis = FockBasis::new(ModeSet::new(labels).unwrap(), particles).unwrap();
        let mut binom: u128 = 1;
        for k in 0..(modes as u128 - 1) {
            binom = binom * (particles as u128 + k + 1) / (k + 1);
        }
        prop_assert_eq!(fock_dimension(modes, particles), binom);
        prop_assert_eq!(basis.dim() as u128, binom);
        for k in 0..basis.dim() {
            prop_assert_eq!(basis.index_of(basis.state(k)), Some(k));
        }
    }

    #[test]
    fn heff_is_hermitian_and_conserves_legs(d in drives(), twice in prop::sample::select(vec![3, 5]), half in 1..3usize) {
        let scheme = LevelScheme::new(h(twice)).unwrap();
        let basis = scheme.leg_basis(half, half, 1 << 20).unwrap();
        let heff = build_heff_exact(&scheme, &basis, &d, 1.0).unwrap().to_sparse();
        prop_assert!(heff.hermiticity_defect() < 1e-12 * heff.max_abs().max(1.0));
        let scale = heff.max_abs().max(1e-300);
        for leg in [Leg::Upper, Leg::Lower] {
            let n = ladderqed::fock::SparseOperator::diagonal(basis.id(), &scheme.leg_number_diag(&basis, leg).unwrap());
            prop_assert!(heff.commutator(&n).unwrap().max_abs() < 1e-12 * scale);
        }
        let jz: Vec<f64> = (0..basis.dim())
            .map(|k| scheme.ground_modes().iter().map(|&m| m.value() * basis.occupation_diag(ModeLabel::ground(m)).unwrap()[k]).sum())
            .collect();
        let jz = ladderqed::fock::SparseOperator::diagonal(basis.id(), &jz);
        prop_assert!(heff.commutator(&jz).unwrap().max_abs() < 1e-12 * scale);
    }

    /// Second-order perturbation theory on the full space is an independent
    /// route to the same operator. Detunings stay clear of the
    /// single-excitation poles, where both sides lose digits.
    #[test]
    fn heff_matches_perturbation_theory(
        oa in 0.01..0.1f64, ob in 0.01..0.1f64, da in -8.0..-2.0f64, db in 2.0..8.0f64, twice in prop::sample::select(vec![3, 5]),
    ) {
        let d = DriveParams::new(oa, da, ob, db);
        let scheme = LevelScheme::new(h(twice)).unwrap();
        let basis = FullBasis::new(&scheme, 1, 1, 1 << 20).unwrap();
        let reference = second_order_reference(&scheme, &basis, &d, 1.0).unwrap();
        let heff = build_heff_exact(&scheme, basis.ground_basis(), &d, 1.0).unwrap().to_sparse().to_dense();
        let scale = reference.abs().max();
        for i in 0..reference.nrows() {
            for j in 0..reference.ncols() {
                prop_assert!((heff[(i, j)] - C64::new(reference[(i, j)], 0.0)).norm() < 1e-8 * scale);
            }
        }
    }

    #[test]
    fn spectral_and_krylov_agree(d in drives(), half in 2..4usize) {
        let scheme = LevelScheme::new(h(3)).unwrap();
        let basis = scheme.leg_basis(half, half, 1 << 20).unwrap();
        let psi = InitialStateSpec::ladder_edges(&scheme).build(&basis).unwrap();
        let heff = build_heff_exact(&scheme, &basis, &d, 1.0).unwrap();
        let mut obs = population_observables(&basis).unwrap();
        obs.extend(leg_observables(&scheme, &basis).unwrap());
        let tau = tau_grid(20.0, 11);
        let spectral = EvolveOptions { method: EvolveMethod::Spectral, ..EvolveOptions::default() };
        let krylov = EvolveOptions { method: EvolveMethod::Krylov, ..EvolveOptions::default() };
        let (a, ra) = evolve(&heff, &psi, &tau, &obs, &spectral).unwrap();
        let (b, rb) = evolve(&heff, &psi, &tau, &obs, &krylov).unwrap();
        prop_assert!(ra.max_norm_drift < 1e-10 && rb.max_norm_drift < 1e-8);
        for ((name, x), (_, y)) in a.channels.iter().zip(&b.channels) {
            for (p, q) in x.iter().zip(y) {
                prop_assert!((p - q).abs() < 1e-7, "{name}: {p} vs {q}");
            }
        }
        let total = half as f64;
        for v in a.channel("N_upper").unwrap().iter().chain(a.channel("N_lower").unwrap()) {
            prop_assert!((v - total).abs() < 1e-10);
        }
    }

    #[test]
    fn closed_form_pair_production_matches_bdg(d in drives()) {
        let k = four_level_k(&d, 1.0).unwrap();
        let times: Vec<f64> = tau_grid(5.0, 6).iter().map(|&x| tau_to_time(x, d.omega_ref(), 1.0)).collect();
        let v = bdg_propagate_vacuum(&k.quadratic_form(), &times).unwrap();
        for (pops, &t) in v.populations.iter().zip(&times) {
            let closed = four_level_population(&k, t);
            prop_assert!((pops[0] - pops[1]).abs() < 1e-9 * (1.0 + closed));
            prop_assert!((pops[1] - closed).abs() < 1e-8 * (1.0 + closed), "{} vs {closed}", pops[1]);
        }
    }

    #[test]
    fn exact_scaling_data_collapses(beta in 0.5..2.0f64, nu in 1.0..3.0f64) {
        let crit = 5.0;
        let curves: Vec<ScalingCurve> = [20.0, 50.0, 100.0f64]
            .iter()
            .map(|&n| {
                let control: Vec<f64> = (0..81).map(|k| 4.0 + k as f64 * 0.025).collect();
                let value = control
                    .iter()
                    .map(|c| n.powf(-beta / nu) * (1.0 + ((c - crit) / crit * n.powf(1.0 / nu)).tanh()))
                    .collect();
                ScalingCurve { n, control, value }
            })
            .collect();
        let exact = collapse_residual(&curves, beta, nu, crit).unwrap();
        let off = collapse_residual(&curves, beta + 0.3, nu, crit).unwrap();
        prop_assert!(exact < 1e-4 && exact < off);
    }

    #[test]
    fn config_round_trips(atoms in 1..50usize, omega in 0.001..0.2f64, db in 1.0..9.0f64, tau_max in 1.0..100.0f64) {
        let mut cfg = SimConfig { atoms: 2 * atoms, ..SimConfig::default() };
        cfg.drives.omega_a = omega;
        cfg.drives.delta_b = db;
        cfg.time.tau_max = tau_max;
        let toml = cfg.to_toml().unwrap();
        prop_assert_eq!(SimConfig::from_toml_str(&toml).unwrap(), cfg.clone());
        prop_assert_eq!(SimConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
    }
}
