use proptest::prelude::*;

use spinflux::analysis::fit_power_law;
use spinflux::couplings::{Coupling, Relaxation, SystemMatrices};
use spinflux::fluxnoise::{flux_noise, log_grid, FluxVector, ModeWeights};
use spinflux::homogeneous::{b_alpha, b_alpha_limit};
use spinflux::lattice::{occupied_count, Boundary, VirtualLattice};
use spinflux::spectral::{diagonalize, SolverPath};
use spinflux::Exec;

fn boundary(periodic: bool) -> Boundary {
    if periodic {
        Boundary::Periodic
    } else {
        Boundary::Open
    }
}

prop_compose! {
    fn instance()(
        nx in 3usize..9,
        ny in 3usize..9,
        px in any::<bool>(),
        py in any::<bool>(),
        sigma in 0.3f64..=1.0,
        seed in any::<u64>(),
        fm in any::<bool>(),
        t in 1.5f64..12.0,
        kind in 0u8..3,
    ) -> (VirtualLattice, SystemMatrices) {
        let l = VirtualLattice::new(nx, ny, boundary(px), boundary(py))
            .unwrap()
            .sample_vacancies(sigma, seed);
        let relax = match kind {
            0 => Relaxation::Zero,
            1 => Relaxation::Uniform { gamma: 0.7 },
            _ => Relaxation::Spin1f { gamma_max: 50.0, lambda_max: 10.0 },
        };
        let j = if fm { 1.0 } else { -1.0 };
        let m = SystemMatrices::assemble(&l, &Coupling::nearest(j), relax.rates(&l, seed), t)
            .unwrap();
        (l, m)
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn vacancy_count_is_exact(nx in 3usize..30, ny in 3usize..30, sigma in 0.0f64..=1.0, seed in any::<u64>()) {
        let l = VirtualLattice::new(nx, ny, Boundary::Open, Boundary::Periodic).unwrap();
        let s = l.sample_vacancies(sigma, seed);
        prop_assert_eq!(s.n_occupied(), occupied_count(sigma, nx * ny));
        prop_assert_eq!(s, l.sample_vacancies(sigma, seed));
    }

    #[test]
    fn dissipation_is_symmetric_and_conserving((_l, m) in instance()) {
        let n = m.n();
        for r in 0..n {
            let mut row = 0.0;
            for c in 0..n {
                prop_assert_eq!(m.d[(r, c)], m.d[(c, r)]);
                row += m.d[(r, c)];
            }
            prop_assert!(row.abs() < 1e-12);
        }
    }

    #[test]
    fn generator_maps_chi0_to_w((_l, m) in instance()) {
        let n = m.n();
        for r in 0..n {
            for c in 0..n {
                let ac: f64 = (0..n).map(|k| m.a[(r, k)] * m.chi0[(k, c)]).sum();
                prop_assert!((ac - m.w[(r, c)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn total_spin_is_a_left_null_vector_without_relaxation(
        nx in 3usize..9, ny in 3usize..9, sigma in 0.3f64..=1.0, seed in any::<u64>(), t in 1.5f64..12.0,
    ) {
        let l = VirtualLattice::new(nx, ny, Boundary::Open, Boundary::Periodic)
            .unwrap()
            .sample_vacancies(sigma, seed);
        let m = SystemMatrices::assemble(&l, &Coupling::nearest(-1.0), vec![0.0; l.n_occupied()], t)
            .unwrap();
        for members in &m.partition.members {
            for c in 0..m.n() {
                let col: f64 = members.iter().map(|&r| m.a[(r, c)]).sum();
                prop_assert!(col.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn entropy_production_is_nonpositive(
        (_l, m) in instance(),
        ds in prop::collection::vec(-1.0f64..1.0, 64),
    ) {
        let n = m.n();
        let v: Vec<f64> = (0..n).map(|k| ds[k % ds.len()]).collect();
        let mul = |a: &faer::Mat<f64>, x: &[f64]| -> Vec<f64> {
            (0..n).map(|r| (0..n).map(|c| a[(r, c)] * x[c]).sum()).collect()
        };
        let u = mul(&m.s2, &v);
        let du = mul(&m.d, &u);
        let q: f64 = u.iter().zip(&du).map(|(a, b)| a * b).sum();
        let scale: f64 = u.iter().map(|x| x * x).sum();
        prop_assert!(q <= 1e-12 * scale);
    }

    #[test]
    fn sum_rule_and_positive_noise((l, m) in instance()) {
        let s = diagonalize(&m, SolverPath::Auto).unwrap();
        let w = ModeWeights::compute(&s, &m, &FluxVector::edge(&l, 1.0));
        let tol = 1e-9 * w.static_total.abs().max(1e-300);
        prop_assert!((w.weight_sum() - w.static_total).abs() <= tol);
        let omega = log_grid(1e-3, 1e3, 25);
        let n = flux_noise(&w, m.temperature, &omega, Exec::Sequential);
        for k in 0..omega.len() {
            prop_assert!(n.s_phi[k] >= 0.0);
            prop_assert!(n.s_phi_minus[k] >= 0.0);
            prop_assert!(n.s_phi_minus[k] <= n.s_phi[k]);
        }
    }

    #[test]
    fn fit_recovers_power_law(alpha in 0.05f64..2.0, c in 1e-3f64..1e3, decades in 1.0f64..6.0) {
        let x = log_grid(1.0, 10f64.powf(decades), 40);
        let y: Vec<f64> = x.iter().map(|v| c * v.powf(-alpha)).collect();
        let f = fit_power_law(&x, &y, (x[0], x[39])).unwrap();
        prop_assert!((f.alpha - alpha).abs() < 1e-9);
        prop_assert!((f.amplitude / c - 1.0).abs() < 1e-9);
    }

    #[test]
    fn b_alpha_grows_with_band_below_its_limit(alpha in 0.1f64..1.9, lo in 1e-6f64..1.0, span in 1.0f64..1e6) {
        let narrow = b_alpha(alpha, lo, lo * (1.0 + span)).unwrap();
        let wide = b_alpha(alpha, lo * 0.5, lo * (1.0 + 2.0 * span)).unwrap();
        prop_assert!(narrow > 0.0);
        prop_assert!(wide >= narrow);
        prop_assert!(wide <= b_alpha_limit(alpha) * (1.0 + 1e-9));
    }

    #[test]
    fn exec_map_keeps_order(n in 0usize..500) {
        let par = Exec::Parallel.map(n, |k| k * k);
        let seq = Exec::Sequential.map(n, |k| k * k);
        prop_assert_eq!(par, seq);
    }
}
