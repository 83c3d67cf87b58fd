//! Independent oracles against the engine: closed forms, a hand-written
//! complex solver, and limits of the homogeneous model.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinflux::analysis::fit_power_law;
use spinflux::couplings::{Coupling, Relaxation, SystemMatrices};
use spinflux::fluxnoise::{bose_prefactor, log_grid};
use spinflux::homogeneous::{HaParameters, InfinitePlane};
use spinflux::lattice::{Boundary::*, VirtualLattice};
use spinflux::spectral::{diagonalize, susceptibility_resolvent, SolverPath};

/// Dense complex Gauss-Jordan with partial pivoting, solving M X = B.
fn solve(mut m: Vec<Vec<Complex64>>, mut b: Vec<Vec<Complex64>>) -> Vec<Vec<Complex64>> {
    let n = m.len();
    for col in 0..n {
        let p = (col..n)
            .max_by(|&x, &y| m[x][col].norm().total_cmp(&m[y][col].norm()))
            .unwrap();
        m.swap(col, p);
        b.swap(col, p);
        let inv = m[col][col].inv();
        for k in 0..n {
            m[col][k] *= inv;
            b[col][k] *= inv;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != Complex64::new(0.0, 0.0) {
                    for k in 0..n {
                        let (mc, bc) = (m[col][k], b[col][k]);
                        m[r][k] -= f * mc;
                        b[r][k] -= f * bc;
                    }
                }
            }
        }
    }
    b
}

#[test]
fn ten_site_susceptibility_against_gauss_jordan() {
    let l = VirtualLattice::new(5, 2, Open, Open).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rates: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..1.5)).collect();
    let m = SystemMatrices::assemble(&l, &Coupling::nearest(-1.0), rates, 2.5).unwrap();
    let s = diagonalize(&m, SolverPath::Auto).unwrap();
    let omega = 1.0;
    let i = Complex64::i();
    // (ωI + iA)χ = iW
    let lhs: Vec<Vec<Complex64>> = (0..10)
        .map(|r| {
            (0..10)
                .map(|c| i * m.a[(r, c)] + if r == c { omega } else { 0.0 })
                .collect()
        })
        .collect();
    let rhs: Vec<Vec<Complex64>> = (0..10)
        .map(|r| (0..10).map(|c| i * m.w[(r, c)]).collect())
        .collect();
    let want = solve(lhs, rhs);
    let got = s.susceptibility(&m, omega);
    let res = susceptibility_resolvent(&m, omega).unwrap();
    for r in 0..10 {
        for c in 0..10 {
            assert!((got[(r, c)] - want[r][c]).norm() < 1e-9);
            assert!((res[(r, c)] - want[r][c]).norm() < 1e-9);
        }
    }
}

#[test]
fn static_resolvent_is_chi0_with_relaxation() {
    let l = VirtualLattice::new(6, 6, Open, Periodic).unwrap().sample_vacancies(0.7, 2);
    let r = Relaxation::Uniform { gamma: 0.4 };
    let m = SystemMatrices::assemble(&l, &Coupling::nearest(1.0), r.rates(&l, 0), 3.0).unwrap();
    let chi = susceptibility_resolvent(&m, 0.0).unwrap();
    let scale = (0..m.n()).map(|k| m.chi0[(k, k)]).fold(0.0, f64::max);
    for a in 0..m.n() {
        for b in 0..m.n() {
            assert!((chi[(a, b)].re - m.chi0[(a, b)]).abs() < 1e-10 * scale);
            assert!(chi[(a, b)].im.abs() < 1e-10 * scale);
        }
    }
}

/// 4 sin²(q/2)[(T − σJ) + σJ sin²(q/2)]/q², the plane-wave rate over q² on
/// a full torus, from the lattice Fourier transform by hand.
fn torus_rate_over_q2(t: f64, j: f64, q: f64) -> f64 {
    let s2 = (0.5 * q).sin().powi(2);
    4.0 * s2 * ((t - j) + j * s2) / (q * q)
}

#[test]
fn continuum_diffusion_at_high_temperature() {
    let l = VirtualLattice::new(100, 3, Periodic, Periodic).unwrap();
    let q = 2.0 * std::f64::consts::PI / 100.0;
    let t = 100.0;
    let fm = SystemMatrices::assemble(&l, &Coupling::nearest(1.0), vec![0.0; 300], t).unwrap();
    let afm = SystemMatrices::assemble(&l, &Coupling::nearest(-1.0), vec![0.0; 300], t).unwrap();
    let d_fm = fm.plane_wave_diffusion(&l, q);
    let d_afm = afm.plane_wave_diffusion(&l, q);
    assert!((d_fm / torus_rate_over_q2(t, 1.0, q) - 1.0).abs() < 1e-10);
    assert!((d_afm / torus_rate_over_q2(t, -1.0, q) - 1.0).abs() < 1e-10);
    let quoted = t - (1.0 - q * q / 4.0);
    assert!((d_fm / quoted - 1.0).abs() < 0.01);
    // FM diffuses slower by 2σJ
    assert!(((d_afm - d_fm) / 2.0 - 1.0).abs() < 0.01);
}

#[test]
fn diluted_exchange_average_matches_pair_occupancy() {
    // E[x_i x_j] = N_s(N_s − 1)/(N(N − 1)) for exact-count sampling
    let l = VirtualLattice::new(20, 20, Open, Periodic).unwrap();
    let (n, ns) = (400.0, 200.0);
    let pair = ns * (ns - 1.0) / (n * (n - 1.0));
    let want_x = 380.0 * pair / (n * 0.25);
    let want_y = 400.0 * pair / (n * 0.25);
    let samples: Vec<(f64, f64)> = (0..400)
        .map(|seed| {
            let s = l.sample_vacancies(0.5, seed);
            let p = HaParameters::from_instance(&s, &Coupling::nearest(1.0), &[]).unwrap();
            (p.jbar_x, p.jbar_y)
        })
        .collect();
    for (k, want) in [(0, want_x), (1, want_y)] {
        let v: Vec<f64> = samples.iter().map(|s| if k == 0 { s.0 } else { s.1 }).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        let se = (var / v.len() as f64).sqrt();
        assert!((mean - want).abs() < 4.0 * se, "{mean} vs {want} +- {se}");
    }
}

#[test]
fn edge_model_approaches_plane_as_lattice_grows() {
    let (t, j, g, w) = (10.0, 1.0, 0.05, 20.0);
    let plane = InfinitePlane {
        diffusion: t - j,
        gamma_bar: g,
        width: w,
        a0: 1.0,
        f0: 1.0,
        n_sy: 20.0,
        temperature: t,
        j,
    };
    let ha = |nsx: usize| HaParameters {
        sigma: 1.0,
        jbar_x: j,
        jbar_y: j,
        gamma_bar: g,
        nsx,
        nsy: 20,
        a0: 1.0,
        width: w,
        f0: 1.0,
    };
    let omega = 2e-3;
    let want = plane.noise_exact(omega).unwrap();
    let s: Vec<f64> = [1000, 4000, 16000]
        .iter()
        .map(|&n| ha(n).flux_noise(omega, t).unwrap())
        .collect();
    // the zone sum settles; what is left is lattice versus quadratic dispersion
    assert!((s[2] / s[1] - 1.0).abs() < 1e-6, "{s:?}");
    assert!((s[1] / s[0] - 1.0).abs() < 1e-4, "{s:?}");
    assert!((s[2] / want - 1.0).abs() < 0.02, "{s:?} vs {want}");
}

#[test]
fn plane_density_and_noise_exponents_agree() {
    let p = InfinitePlane {
        diffusion: 1e6,
        gamma_bar: 1e-6,
        width: 20.0,
        a0: 1.0,
        f0: 1.0,
        n_sy: 20.0,
        temperature: 1e9,
        j: 0.0,
    };
    let centre = (p.gamma_min() * p.gamma_max()).sqrt();
    let x = log_grid(centre * 1e-3, centre * 1e3, 120);
    let rho: Vec<f64> = x.iter().map(|&g| p.rho(g, true).unwrap()).collect();
    let l: Vec<f64> = x
        .iter()
        .map(|&w| p.noise(w).unwrap() / bose_prefactor(w, p.temperature))
        .collect();
    let win = (x[0], x[x.len() - 1]);
    let a_rho = fit_power_law(&x, &rho, win).unwrap().alpha;
    let a_s = fit_power_law(&x, &l, win).unwrap().alpha;
    assert!((a_rho - a_s).abs() < 0.02, "{a_rho} vs {a_s}");
}

#[test]
fn plane_amplitude_matches_density_fit() {
    let p = InfinitePlane {
        diffusion: 9.0,
        gamma_bar: 1e-9,
        width: 20.0,
        a0: 1.0,
        f0: 1.0,
        n_sy: 20.0,
        temperature: 10.0,
        j: 1.0,
    };
    let x = log_grid(1e-6, 1e-3, 50);
    let rho: Vec<f64> = x.iter().map(|&g| p.rho(g, true).unwrap()).collect();
    let f = fit_power_law(&x, &rho, (1e-6, 1e-3)).unwrap();
    assert!((f.amplitude / p.amplitude().unwrap() - 1.0).abs() < 1e-3);
    // the pair example: F0²·N_sy/(4π(T − J)√D)
    let want = 20.0 / (4.0 * std::f64::consts::PI * 9.0 * 3.0);
    assert!((p.amplitude().unwrap() - want).abs() < 1e-15);
}

#[test]
fn exact_interference_oscillates_around_half() {
    let p = InfinitePlane {
        diffusion: 4.0,
        gamma_bar: 0.0,
        width: 10.0,
        a0: 1.0,
        f0: 1.0,
        n_sy: 1.0,
        temperature: 5.0,
        j: 0.0,
    };
    // sin² vanishes where (γ W²/(4D))^{1/2} = kπ
    let g = (std::f64::consts::PI).powi(2) * 4.0 * 4.0 / 100.0;
    assert!(p.rho(g, false).unwrap().abs() < 1e-12 * p.rho(g, true).unwrap());
    assert_eq!(p.rho(0.0, true).unwrap(), 0.0);
    assert_eq!(p.rho(p.gamma_max() * 1.01, true).unwrap(), 0.0);
}
