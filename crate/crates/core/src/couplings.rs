//! Exchange, dissipation and relaxation matrices for one disorder instance.
//!
//! Every matrix is indexed by compressed (occupied-site) index. All of them
//! are block diagonal over exchange clusters, which later stages exploit.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lattice::{find_clusters, Bond, ClusterPartition, VirtualLattice};
use crate::{Error, Result};

pub(crate) const RELAXATION_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Coupling {
    /// Uniform nearest-neighbour exchange; J > 0 ferromagnetic.
    NearestNeighbour { j: f64 },
    /// Arbitrary symmetric exchange on lattice bonds (virtual indices).
    Custom(Vec<Bond>),
}

impl Coupling {
    pub fn nearest(j: f64) -> Self {
        Coupling::NearestNeighbour { j }
    }

    /// Bonds between occupied sites carrying their exchange.
    pub fn bonds(&self, lattice: &VirtualLattice) -> Result<Vec<Bond>> {
        match self {
            Coupling::NearestNeighbour { j } => Ok(lattice.occupied_bonds(*j)),
            Coupling::Custom(list) => {
                let mut out = Vec::with_capacity(list.len());
                for b in list {
                    let on_lattice = lattice
                        .bonds()
                        .iter()
                        .any(|&(p, q)| (p, q) == (b.i, b.j) || (q, p) == (b.i, b.j));
                    if !on_lattice {
                        return Err(Error::Input(format!(
                            "custom bond ({}, {}) is not a lattice bond",
                            b.i, b.j
                        )));
                    }
                    if lattice.is_occupied(b.i) && lattice.is_occupied(b.j) {
                        out.push(*b);
                    }
                }
                Ok(out)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Relaxation {
    Zero,
    Uniform { gamma: f64 },
    /// Γ_i = Γ'_max·exp(−λ_max r_i) with r_i uniform on [0, 1].
    Spin1f { gamma_max: f64, lambda_max: f64 },
}

impl Relaxation {
    /// Per-site rates in compressed order. Spin-1/f draws one value per
    /// virtual site and keeps the occupied ones, so a site's rate does not
    /// depend on which other sites are vacant.
    pub fn rates(&self, lattice: &VirtualLattice, seed: u64) -> Vec<f64> {
        let sites = lattice.occupied_sites();
        match *self {
            Relaxation::Zero => vec![0.0; sites.len()],
            Relaxation::Uniform { gamma } => vec![gamma; sites.len()],
            Relaxation::Spin1f {
                gamma_max,
                lambda_max,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(RELAXATION_STREAM);
                let all: Vec<f64> = (0..lattice.n_sites())
                    .map(|_| gamma_max * (-lambda_max * rng.random::<f64>()).exp())
                    .collect();
                sites.iter().map(|&s| all[s]).collect()
            }
        }
    }

    pub fn is_uniform(&self) -> bool {
        !matches!(self, Relaxation::Spin1f { .. })
    }
}

/// Square-root factors of S² = 4T − J restricted to one cluster.
#[derive(Clone, Debug)]
pub struct Block {
    /// Compressed indices of the cluster, ascending.
    pub members: Vec<usize>,
    pub s_half: Mat<f64>,
    pub s_half_inv: Mat<f64>,
    /// Smallest eigenvalue of the block of S².
    pub s2_min: f64,
}

#[derive(Clone, Debug)]
pub struct SystemMatrices {
    pub temperature: f64,
    pub partition: ClusterPartition,
    pub j: Mat<f64>,
    pub d: Mat<f64>,
    pub gamma: Vec<f64>,
    /// S² = 4T·I − J.
    pub s2: Mat<f64>,
    pub chi0: Mat<f64>,
    /// Real generator A = iP = diag(Γ) − D·S².
    pub a: Mat<f64>,
    /// W = diag(Γ)·χ₀ − D, so that A·χ₀ = W.
    pub w: Mat<f64>,
    pub blocks: Vec<Block>,
}

impl SystemMatrices {
    pub fn assemble(
        lattice: &VirtualLattice,
        coupling: &Coupling,
        gamma: Vec<f64>,
        temperature: f64,
    ) -> Result<Self> {
        let bonds = coupling.bonds(lattice)?;
        let partition = find_clusters(lattice, &bonds)?;
        let n = partition.sites.len();
        if gamma.len() != n {
            return Err(Error::Input(format!(
                "{} relaxation rates for {n} occupied sites",
                gamma.len()
            )));
        }
        if let Some(g) = gamma.iter().find(|g| !(**g >= 0.0)) {
            return Err(Error::Input(format!("relaxation rate {g} is negative")));
        }

        let j = exchange_matrix(lattice, &partition, &bonds);
        let d = assemble_d(&partition, &j);
        let s2 = Mat::from_fn(n, n, |r, c| {
            let diag = if r == c { 4.0 * temperature } else { 0.0 };
            diag - j[(r, c)]
        });

        let mut chi0 = Mat::<f64>::zeros(n, n);
        let mut blocks = Vec::with_capacity(partition.n_clusters());
        for members in &partition.members {
            let sub = submatrix(&s2, members);
            let (s_half, s_half_inv, inv, s2_min) = spd_factors(&sub, temperature)?;
            scatter(&mut chi0, members, &inv);
            blocks.push(Block {
                members: members.clone(),
                s_half,
                s_half_inv,
                s2_min,
            });
        }

        let mut a = Mat::<f64>::zeros(n, n);
        let mut w = Mat::<f64>::zeros(n, n);
        for members in &partition.members {
            let db = submatrix(&d, members);
            let sb = submatrix(&s2, members);
            let cb = submatrix(&chi0, members);
            let ds = &db * &sb;
            let m = members.len();
            let ab = Mat::from_fn(m, m, |r, c| {
                let g = if r == c { gamma[members[r]] } else { 0.0 };
                g - ds[(r, c)]
            });
            let wb = Mat::from_fn(m, m, |r, c| gamma[members[r]] * cb[(r, c)] - db[(r, c)]);
            scatter(&mut a, members, &ab);
            scatter(&mut w, members, &wb);
        }

        Ok(Self {
            temperature,
            partition,
            j,
            d,
            gamma,
            s2,
            chi0,
            a,
            w,
            blocks,
        })
    }

    pub fn n(&self) -> usize {
        self.gamma.len()
    }

    /// Largest Curie-Weiss temperature over clusters, λ_max(J)/4.
    pub fn t_cw(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| (4.0 * self.temperature - b.s2_min) / 4.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// True when Γ is constant on every cluster.
    pub fn uniform_per_cluster(&self) -> bool {
        self.partition
            .members
            .iter()
            .all(|m| m.iter().all(|&k| self.gamma[k] == self.gamma[m[0]]))
    }

    /// Rayleigh quotient of A on the plane wave cos(q·x), divided by q².
    /// Exact diffusion coefficient on a fully occupied torus with Γ = 0.
    pub fn plane_wave_diffusion(&self, lattice: &VirtualLattice, q: f64) -> f64 {
        let n = self.n();
        let v: Vec<f64> = self
            .partition
            .sites
            .iter()
            .map(|&s| (q * lattice.position(s).0).cos())
            .collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for r in 0..n {
            let mut av = 0.0;
            for c in 0..n {
                av += self.a[(r, c)] * v[c];
            }
            num += v[r] * av;
            den += v[r] * v[r];
        }
        num / den / (q * q)
    }
}

fn exchange_matrix(
    lattice: &VirtualLattice,
    partition: &ClusterPartition,
    bonds: &[Bond],
) -> Mat<f64> {
    let mut compressed = vec![usize::MAX; lattice.n_sites()];
    for (k, &s) in partition.sites.iter().enumerate() {
        compressed[s] = k;
    }
    let n = partition.sites.len();
    let mut j = Mat::<f64>::zeros(n, n);
    for b in bonds {
        let (r, c) = (compressed[b.i], compressed[b.j]);
        j[(r, c)] += b.exchange;
        j[(c, r)] += b.exchange;
    }
    j
}

/// D_ij = (|J_ij| − δ_ij Σ_k |J_ik|)/J̄_c; single-spin clusters give zero rows.
pub fn assemble_d(partition: &ClusterPartition, j: &Mat<f64>) -> Mat<f64> {
    let n = partition.sites.len();
    let mut d = Mat::<f64>::zeros(n, n);
    for (c, members) in partition.members.iter().enumerate() {
        let jbar = partition.jbar[c];
        if jbar == 0.0 {
            continue;
        }
        for &r in members {
            let mut row = 0.0;
            for &k in members {
                if k != r {
                    let v = j[(r, k)].abs() / jbar;
                    d[(r, k)] = v;
                    row += j[(r, k)].abs();
                }
            }
            d[(r, r)] = -row / jbar;
        }
    }
    d
}

/// χ₀ = (4T·I − J)⁻¹, failing below the critical temperature.
pub fn compute_chi0(j: &Mat<f64>, temperature: f64) -> Result<Mat<f64>> {
    let n = j.nrows();
    let s2 = Mat::from_fn(n, n, |r, c| {
        (if r == c { 4.0 * temperature } else { 0.0 }) - j[(r, c)]
    });
    Ok(spd_factors(&s2, temperature)?.2)
}

/// (S, S⁻¹, S⁻², λ_min) for an SPD matrix S².
fn spd_factors(s2: &Mat<f64>, temperature: f64) -> Result<(Mat<f64>, Mat<f64>, Mat<f64>, f64)> {
    let m = s2.nrows();
    let evd = s2
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let lam: Vec<f64> = (0..m).map(|k| evd.S().column_vector()[k]).collect();
    let lam_min = lam.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lam_min > 0.0) {
        return Err(Error::BelowCritical {
            temperature,
            eigenvalue: lam_min,
        });
    }
    let u = evd.U();
    let scaled = |f: &dyn Fn(f64) -> f64| {
        let us = Mat::from_fn(m, m, |r, c| u[(r, c)] * f(lam[c]));
        &us * u.transpose()
    };
    let s = symmetrize(scaled(&|l| l.sqrt()));
    let s_inv = symmetrize(scaled(&|l| 1.0 / l.sqrt()));
    let inv = symmetrize(scaled(&|l| 1.0 / l));
    Ok((s, s_inv, inv, lam_min))
}

pub(crate) fn symmetrize(m: Mat<f64>) -> Mat<f64> {
    let n = m.nrows();
    Mat::from_fn(n, n, |r, c| 0.5 * (m[(r, c)] + m[(c, r)]))
}

pub(crate) fn submatrix(m: &Mat<f64>, idx: &[usize]) -> Mat<f64> {
    Mat::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

fn scatter(dst: &mut Mat<f64>, idx: &[usize], src: &Mat<f64>) {
    for (r, &gr) in idx.iter().enumerate() {
        for (c, &gc) in idx.iter().enumerate() {
            dst[(gr, gc)] = src[(r, c)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary::*;

    fn pair(j: f64, t: f64, gamma: f64) -> SystemMatrices {
        let l = VirtualLattice::new(2, 1, Open, Open).unwrap();
        SystemMatrices::assemble(&l, &Coupling::nearest(j), vec![gamma; 2], t).unwrap()
    }

    #[test]
    fn pair_dissipation() {
        let m = pair(1.0, 1.0, 0.0);
        assert_eq!(m.d[(0, 0)], -1.0);
        assert_eq!(m.d[(0, 1)], 1.0);
        assert_eq!(m.d[(1, 0)], 1.0);
        assert_eq!(m.d[(1, 1)], -1.0);
    }

    #[test]
    fn pair_chi0() {
        let m = pair(1.0, 1.0, 0.0);
        for (r, c, v) in [(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 4.0)] {
            assert!((m.chi0[(r, c)] - v / 15.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pair_generator() {
        let m = pair(1.0, 12.0, 0.0);
        assert!((m.a[(0, 0)] - 49.0).abs() < 1e-12);
        assert!((m.a[(0, 1)] + 49.0).abs() < 1e-12);
    }

    #[test]
    fn single_spin() {
        let l = VirtualLattice::new(1, 1, Open, Open).unwrap();
        let m = SystemMatrices::assemble(&l, &Coupling::nearest(1.0), vec![0.3], 2.0).unwrap();
        assert_eq!(m.d[(0, 0)], 0.0);
        assert_eq!(m.chi0[(0, 0)], 1.0 / 8.0);
        assert_eq!(m.a[(0, 0)], 0.3);
    }

    #[test]
    fn torus_dissipation_values() {
        let l = VirtualLattice::new(4, 5, Periodic, Periodic).unwrap();
        let m = SystemMatrices::assemble(&l, &Coupling::nearest(-1.0), vec![0.0; 20], 3.0).unwrap();
        for r in 0..20 {
            assert!((m.d[(r, r)] + 1.0).abs() < 1e-15);
            for nb in l.neighbours(r) {
                assert!((m.d[(r, nb)] - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn no_coupling_gives_diagonal_generator() {
        let l = VirtualLattice::new(3, 3, Open, Open).unwrap();
        let g: Vec<f64> = (0..9).map(|k| 0.1 * k as f64).collect();
        let m = SystemMatrices::assemble(&l, &Coupling::nearest(0.0), g.clone(), 1.0).unwrap();
        for r in 0..9 {
            for c in 0..9 {
                let want = if r == c { g[r] } else { 0.0 };
                assert_eq!(m.a[(r, c)], want);
            }
        }
    }

    #[test]
    fn critical_temperature_on_torus() {
        let l = VirtualLattice::new(6, 6, Periodic, Periodic).unwrap();
        let c = Coupling::nearest(1.0);
        assert!(SystemMatrices::assemble(&l, &c, vec![0.0; 36], 1.001).is_ok());
        let err = SystemMatrices::assemble(&l, &c, vec![0.0; 36], 0.999).unwrap_err();
        assert!(matches!(err, Error::BelowCritical { .. }));
        let m = SystemMatrices::assemble(&l, &c, vec![0.0; 36], 2.0).unwrap();
        assert!((m.t_cw() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spin1f_rates_in_range_and_deterministic() {
        let l = VirtualLattice::new(10, 10, Open, Open).unwrap();
        let r = Relaxation::Spin1f {
            gamma_max: 100.0,
            lambda_max: 20.0,
        };
        let a = r.rates(&l, 5);
        assert_eq!(a, r.rates(&l, 5));
        let lo = 100.0 * (-20.0f64).exp();
        assert!(a.iter().all(|&g| g <= 100.0 && g >= lo));
    }

    #[test]
    fn custom_bond_off_lattice_rejected() {
        let l = VirtualLattice::new(3, 3, Open, Open).unwrap();
        let c = Coupling::Custom(vec![Bond {
            i: 0,
            j: 4,
            exchange: 1.0,
        }]);
        assert!(c.bonds(&l).is_err());
    }

    #[test]
    fn custom_bonds_match_nearest() {
        let l = VirtualLattice::new(4, 3, Open, Periodic).unwrap();
        let bonds = l.occupied_bonds(0.7);
        let a = SystemMatrices::assemble(&l, &Coupling::Custom(bonds), vec![0.2; 12], 3.0).unwrap();
        let b = SystemMatrices::assemble(&l, &Coupling::nearest(0.7), vec![0.2; 12], 3.0).unwrap();
        assert_eq!(a.a, b.a);
    }
}
