//! Virtual square lattice, vacancy disorder and exchange clusters.

use petgraph::unionfind::UnionFind;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// RNG stream used for vacancy draws. Relaxation rates use a different one,
/// so the two kinds of disorder are independent for a given seed.
pub(crate) const VACANCY_STREAM: u64 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    Open,
    Periodic,
}

/// A nearest-neighbour bond between two virtual sites, `i < j` not implied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    /// Signed exchange, J > 0 ferromagnetic.
    pub exchange: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VirtualLattice {
    nx: usize,
    ny: usize,
    a0: f64,
    bc_x: Boundary,
    bc_y: Boundary,
    occupied: Vec<bool>,
    bonds: Vec<(usize, usize)>,
}

impl VirtualLattice {
    /// Fully occupied lattice. Periodic axes need at least three sites,
    /// otherwise the wrap-around bond would duplicate an existing one.
    pub fn new(nx: usize, ny: usize, bc_x: Boundary, bc_y: Boundary) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Lattice(format!("empty lattice {nx}x{ny}")));
        }
        for (axis, len, bc) in [("x", nx, bc_x), ("y", ny, bc_y)] {
            if bc == Boundary::Periodic && len < 3 {
                return Err(Error::Lattice(format!(
                    "periodic axis {axis} has length {len}, need at least 3"
                )));
            }
        }
        let mut bonds = Vec::with_capacity(2 * nx * ny);
        for y in 0..ny {
            for x in 0..nx {
                let i = y * nx + x;
                if x + 1 < nx {
                    bonds.push((i, i + 1));
                } else if bc_x == Boundary::Periodic {
                    bonds.push((i, y * nx));
                }
                if y + 1 < ny {
                    bonds.push((i, i + nx));
                } else if bc_y == Boundary::Periodic {
                    bonds.push((i, x));
                }
            }
        }
        Ok(Self {
            nx,
            ny,
            a0: 1.0,
            bc_x,
            bc_y,
            occupied: vec![true; nx * ny],
            bonds,
        })
    }

    pub fn with_spacing(mut self, a0: f64) -> Self {
        self.a0 = a0;
        self
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn a0(&self) -> f64 {
        self.a0
    }
    pub fn bc_x(&self) -> Boundary {
        self.bc_x
    }
    pub fn bc_y(&self) -> Boundary {
        self.bc_y
    }
    pub fn n_sites(&self) -> usize {
        self.nx * self.ny
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.nx + x
    }

    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i % self.nx, i / self.nx)
    }

    pub fn position(&self, i: usize) -> (f64, f64) {
        let (x, y) = self.coords(i);
        (x as f64 * self.a0, y as f64 * self.a0)
    }

    /// All bonds of the virtual lattice, regardless of occupancy.
    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }

    pub fn neighbours(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .bonds
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn is_occupied(&self, i: usize) -> bool {
        self.occupied[i]
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupied
    }

    /// Occupied virtual-site indices in ascending order. Position in this
    /// list is the compressed index used by all matrices.
    pub fn occupied_sites(&self) -> Vec<usize> {
        (0..self.n_sites()).filter(|&i| self.occupied[i]).collect()
    }

    pub fn n_occupied(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn sigma(&self) -> f64 {
        self.n_occupied() as f64 / self.n_sites() as f64
    }

    pub fn with_occupancy(mut self, occupied: Vec<bool>) -> Result<Self> {
        if occupied.len() != self.n_sites() {
            return Err(Error::Lattice(format!(
                "occupancy has {} entries, lattice has {} sites",
                occupied.len(),
                self.n_sites()
            )));
        }
        self.occupied = occupied;
        Ok(self)
    }

    /// Keep exactly round(σN) sites, drawn uniformly without replacement.
    pub fn sample_vacancies(&self, sigma: f64, seed: u64) -> Self {
        let n = self.n_sites();
        let n_s = occupied_count(sigma, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(VACANCY_STREAM);
        let mut occupied = vec![false; n];
        for i in rand::seq::index::sample(&mut rng, n, n_s) {
            occupied[i] = true;
        }
        Self {
            occupied,
            ..self.clone()
        }
    }

    /// Bonds whose two ends are occupied, carrying the uniform exchange `j`.
    pub fn occupied_bonds(&self, j: f64) -> Vec<Bond> {
        self.bonds
            .iter()
            .filter(|&&(a, b)| self.occupied[a] && self.occupied[b])
            .map(|&(i, j_site)| Bond {
                i,
                j: j_site,
                exchange: j,
            })
            .collect()
    }

    /// Row-major `0`/`1` mask, one text line per lattice row.
    pub fn mask_text(&self) -> String {
        let mut s = String::with_capacity(self.n_sites() + self.ny);
        for y in 0..self.ny {
            for x in 0..self.nx {
                s.push(if self.occupied[self.index(x, y)] { '1' } else { '0' });
            }
            s.push('\n');
        }
        s
    }

    /// Parse a mask written by [`mask_text`](Self::mask_text). Whitespace
    /// inside a row is ignored.
    pub fn parse_mask(&self, text: &str) -> Result<Vec<bool>> {
        let rows: Vec<Vec<bool>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.chars()
                    .filter(|c| !c.is_whitespace())
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        other => Err(Error::Input(format!("bad mask character {other:?}"))),
                    })
                    .collect::<Result<Vec<bool>>>()
            })
            .collect::<Result<_>>()?;
        if rows.len() != self.ny || rows.iter().any(|r| r.len() != self.nx) {
            return Err(Error::Input(format!(
                "mask shape does not match {}x{} lattice",
                self.nx, self.ny
            )));
        }
        Ok(rows.concat())
    }
}

/// round(σN) with σ clamped to [0, 1].
pub fn occupied_count(sigma: f64, n: usize) -> usize {
    (sigma.clamp(0.0, 1.0) * n as f64).round() as usize
}

/// Exchange-connected clusters over the occupied sites.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterPartition {
    /// Virtual index of each compressed site.
    pub sites: Vec<usize>,
    /// Cluster label per compressed site. Labels are ordered by the smallest
    /// member, so the labelling does not depend on bond order.
    pub cluster_of: Vec<usize>,
    /// Compressed members of each cluster, ascending.
    pub members: Vec<Vec<usize>>,
    /// J̄_c = (1/N_c) Σ over ordered pairs of |J_jk|.
    pub jbar: Vec<f64>,
}

impl ClusterPartition {
    pub fn n_clusters(&self) -> usize {
        self.members.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }
}

/// Union-find over bonds with nonzero exchange. `bonds` use virtual indices
/// and must join occupied sites.
pub fn find_clusters(lattice: &VirtualLattice, bonds: &[Bond]) -> Result<ClusterPartition> {
    let sites = lattice.occupied_sites();
    let mut compressed = vec![usize::MAX; lattice.n_sites()];
    for (k, &s) in sites.iter().enumerate() {
        compressed[s] = k;
    }
    let n = sites.len();
    let mut uf = UnionFind::<usize>::new(n);
    let mut weight = vec![0.0; n];
    for b in bonds {
        let (ci, cj) = (compressed[b.i], compressed[b.j]);
        if ci == usize::MAX || cj == usize::MAX {
            return Err(Error::Lattice(format!(
                "bond ({}, {}) touches a vacancy",
                b.i, b.j
            )));
        }
        if b.exchange != 0.0 {
            uf.union(ci, cj);
            weight[ci] += b.exchange.abs();
        }
    }

    let mut label = vec![usize::MAX; n];
    let mut cluster_of = vec![0; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for k in 0..n {
        let root = uf.find_mut(k);
        if label[root] == usize::MAX {
            label[root] = members.len();
            members.push(Vec::new());
        }
        cluster_of[k] = label[root];
        members[label[root]].push(k);
    }
    let mut bond_sum = vec![0.0; members.len()];
    for k in 0..n {
        bond_sum[cluster_of[k]] += weight[k];
    }
    // each bond appears twice in the ordered-pair sum
    let jbar = bond_sum
        .iter()
        .zip(&members)
        .map(|(s, m)| 2.0 * s / m.len() as f64)
        .collect();
    Ok(ClusterPartition {
        sites,
        cluster_of,
        members,
        jbar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Boundary::*;

    #[test]
    fn smallest_chain() {
        let l = VirtualLattice::new(2, 1, Open, Open).unwrap();
        assert_eq!(l.n_sites(), 2);
        assert_eq!(l.bonds().len(), 1);
    }

    #[test]
    fn mixed_boundaries_neighbour_counts() {
        let l = VirtualLattice::new(20, 20, Open, Periodic).unwrap();
        assert_eq!(l.n_sites(), 400);
        assert_eq!(l.neighbours(l.index(5, 7)).len(), 4);
        assert_eq!(l.neighbours(l.index(0, 7)).len(), 3);
        assert_eq!(l.neighbours(l.index(19, 0)).len(), 3);
        assert_eq!(l.neighbours(l.index(3, 0)).len(), 4);
    }

    #[test]
    fn torus_3x3() {
        let l = VirtualLattice::new(3, 3, Periodic, Periodic).unwrap();
        assert_eq!(l.bonds().len(), 18);
        for i in 0..9 {
            assert_eq!(l.neighbours(i).len(), 4);
        }
    }

    #[test]
    fn short_periodic_axis_rejected() {
        assert!(VirtualLattice::new(2, 5, Periodic, Open).is_err());
        assert!(VirtualLattice::new(5, 1, Open, Periodic).is_err());
        assert!(VirtualLattice::new(0, 5, Open, Open).is_err());
    }

    #[test]
    fn vacancy_counts() {
        let l = VirtualLattice::new(20, 20, Open, Periodic).unwrap();
        assert_eq!(l.sample_vacancies(1.0, 9).n_occupied(), 400);
        assert_eq!(l.sample_vacancies(0.5, 9).n_occupied(), 200);
        assert_eq!(l.sample_vacancies(0.75, 9).n_occupied(), 300);
        assert_eq!(
            l.sample_vacancies(0.5, 3).mask_text(),
            l.sample_vacancies(0.5, 3).mask_text()
        );
        assert_ne!(
            l.sample_vacancies(0.5, 3).mask_text(),
            l.sample_vacancies(0.5, 4).mask_text()
        );
    }

    #[test]
    fn mask_round_trip() {
        let l = VirtualLattice::new(5, 4, Open, Open)
            .unwrap()
            .sample_vacancies(0.6, 1);
        let text = l.mask_text();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(l.parse_mask(&text).unwrap(), l.occupancy());
        assert!(l.parse_mask("0101\n").is_err());
    }

    #[test]
    fn full_torus_is_one_cluster() {
        let l = VirtualLattice::new(6, 5, Periodic, Periodic).unwrap();
        let p = find_clusters(&l, &l.occupied_bonds(-1.0)).unwrap();
        assert_eq!(p.n_clusters(), 1);
        assert_eq!(p.jbar[0], 4.0);
    }

    #[test]
    fn open_x_periodic_y_average() {
        let l = VirtualLattice::new(20, 20, Open, Periodic).unwrap();
        let p = find_clusters(&l, &l.occupied_bonds(1.0)).unwrap();
        // 780 bonds, 1560 ordered pairs over 400 sites
        assert!((p.jbar[0] - 3.9).abs() < 1e-14);
    }

    #[test]
    fn isolated_and_paired_spins() {
        let l = VirtualLattice::new(5, 1, Open, Open)
            .unwrap()
            .with_occupancy(vec![true, false, true, true, false])
            .unwrap();
        let p = find_clusters(&l, &l.occupied_bonds(1.0)).unwrap();
        assert_eq!(p.members, vec![vec![0], vec![1, 2]]);
        assert_eq!(p.jbar, vec![0.0, 1.0]);

        let l = VirtualLattice::new(3, 1, Open, Open)
            .unwrap()
            .with_occupancy(vec![true, false, true])
            .unwrap();
        let p = find_clusters(&l, &l.occupied_bonds(1.0)).unwrap();
        assert_eq!(p.n_clusters(), 2);
        assert_eq!(p.jbar, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_exchange_does_not_connect() {
        let l = VirtualLattice::new(4, 1, Open, Open).unwrap();
        let p = find_clusters(&l, &l.occupied_bonds(0.0)).unwrap();
        assert_eq!(p.n_clusters(), 4);
    }
}
