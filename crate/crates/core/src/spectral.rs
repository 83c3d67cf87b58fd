//! Paramagnon spectrum and the dynamical susceptibility.
//!
//! Each cluster block is diagonalised on its own. Clusters with a single
//! relaxation rate go through the symmetrised path: with S = (4T − J)^{1/2},
//! S·A·S⁻¹ = Γ̄ − S·D·S is symmetric. Other clusters use a general real
//! eigendecomposition with left vectors from inverting the right ones.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};
use num_complex::Complex64;

use crate::couplings::{submatrix, symmetrize, SystemMatrices};
use crate::{Error, Result};

/// Relative size below which a rate counts as zero.
pub const GOLDSTONE_RATE_TOL: f64 = 1e-10;
/// Absolute bound on |v⁻¹·W| for a Goldstone mode.
pub const GOLDSTONE_WEIGHT_TOL: f64 = 1e-12;
/// Largest acceptable |U⁻¹U − I|.
pub const BIORTHOGONALITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SolverPath {
    /// Symmetrised where Γ is constant on the cluster, general elsewhere.
    #[default]
    Auto,
    Symmetric,
    General,
}

#[derive(Clone, Debug)]
pub struct ParamagnonSpectrum {
    /// Eigenvalues γ_m of A. Real in exact arithmetic for every case tested;
    /// see [`max_imag_rel`](Self::max_imag_rel).
    pub gamma: Vec<Complex64>,
    /// Right eigenvectors as columns.
    pub right: Mat<Complex64>,
    /// Left eigenvectors as rows, normalised so that left·right = I.
    pub left: Mat<Complex64>,
    /// Cluster of each mode.
    pub cluster: Vec<usize>,
    /// max_j |(v_m⁻¹·W)_j| per mode.
    pub weight_norm: Vec<f64>,
    pub goldstone: Vec<bool>,
    /// max |left·right − I|.
    pub residual: f64,
    /// Whether each cluster went through the symmetrised path.
    pub symmetric: Vec<bool>,
}

impl ParamagnonSpectrum {
    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.gamma.iter().map(|g| g.re).collect()
    }

    pub fn gamma_max(&self) -> f64 {
        self.gamma.iter().map(|g| g.norm()).fold(0.0, f64::max)
    }

    /// max |Im γ_m| / max |γ_m|.
    pub fn max_imag_rel(&self) -> f64 {
        let gmax = self.gamma_max();
        if gmax == 0.0 {
            return 0.0;
        }
        self.gamma.iter().map(|g| g.im.abs()).fold(0.0, f64::max) / gmax
    }

    /// Most negative rate if it falls below −1e−10·γ_max.
    pub fn stability_violation(&self) -> Option<f64> {
        let eps = GOLDSTONE_RATE_TOL * self.gamma_max();
        let min = self.gamma.iter().map(|g| g.re).fold(f64::INFINITY, f64::min);
        (min < -eps).then_some(min)
    }

    pub fn goldstone_per_cluster(&self, n_clusters: usize) -> Vec<usize> {
        let mut count = vec![0; n_clusters];
        for (m, &g) in self.goldstone.iter().enumerate() {
            if g {
                count[self.cluster[m]] += 1;
            }
        }
        count
    }

    /// χ(ω) = i Σ_m v_m (v_m⁻¹·W)/(ω + iγ_m).
    ///
    /// At ω = 0 a Goldstone term is 0/0. It is replaced by its Γ → 0⁺ limit
    /// v_m (v_m⁻¹·χ₀), which makes χ(0) = χ₀ on every instance. For ω ≠ 0
    /// those modes carry v_m⁻¹·W = 0 and drop out on their own.
    pub fn susceptibility(&self, m: &SystemMatrices, omega: f64) -> Mat<Complex64> {
        let n = self.len();
        let lw = &self.left * to_complex(&m.w);
        let lc = if omega == 0.0 && self.goldstone.iter().any(|&g| g) {
            Some(&self.left * to_complex(&m.chi0))
        } else {
            None
        };
        let i = Complex64::i();
        let rows = Mat::from_fn(n, n, |k, c| {
            if self.goldstone[k] {
                if let Some(lc) = &lc {
                    return lc[(k, c)];
                }
            }
            lw[(k, c)] * i / (omega + i * self.gamma[k])
        });
        &self.right * rows
    }
}

pub fn diagonalize(m: &SystemMatrices, path: SolverPath) -> Result<ParamagnonSpectrum> {
    let n = m.n();
    let mut gamma = Vec::with_capacity(n);
    let mut cluster = Vec::with_capacity(n);
    let mut symmetric = Vec::with_capacity(m.blocks.len());
    let mut right = Mat::<Complex64>::zeros(n, n);
    let mut left = Mat::<Complex64>::zeros(n, n);
    let mut weight_norm = Vec::with_capacity(n);

    for (c, block) in m.blocks.iter().enumerate() {
        let idx = &block.members;
        let uniform = idx.iter().all(|&k| m.gamma[k] == m.gamma[idx[0]]);
        let use_sym = match path {
            SolverPath::Auto => uniform,
            SolverPath::Symmetric => {
                if !uniform {
                    return Err(Error::Input(format!(
                        "cluster {c} has non-uniform relaxation; symmetric path not applicable"
                    )));
                }
                true
            }
            SolverPath::General => false,
        };
        let (g, u, ui) = if use_sym {
            symmetric_block(m, block)?
        } else {
            general_block(&submatrix(&m.a, idx))?
        };
        let lw = &ui * to_complex(&submatrix(&m.w, idx));
        weight_norm.extend((0..idx.len()).map(|k| {
            (0..idx.len()).map(|c| lw[(k, c)].norm()).fold(0.0, f64::max)
        }));
        let offset = gamma.len();
        for (r, &gr) in idx.iter().enumerate() {
            for k in 0..idx.len() {
                right[(gr, offset + k)] = u[(r, k)];
                left[(offset + k, gr)] = ui[(k, r)];
            }
        }
        gamma.extend(g);
        cluster.extend(std::iter::repeat_n(c, idx.len()));
        symmetric.push(use_sym);
    }

    let residual = biorthogonality_residual(m, &right, &left, &cluster);
    if !(residual <= BIORTHOGONALITY_TOL) {
        return Err(Error::Conditioning { residual });
    }

    let gmax = gamma.iter().map(|g| g.norm()).fold(0.0, f64::max);
    let goldstone = gamma
        .iter()
        .zip(&weight_norm)
        .map(|(g, &wn)| g.norm() <= GOLDSTONE_RATE_TOL * gmax && wn < GOLDSTONE_WEIGHT_TOL)
        .collect();

    Ok(ParamagnonSpectrum {
        gamma,
        right,
        left,
        cluster,
        weight_norm,
        goldstone,
        residual,
        symmetric,
    })
}

type BlockModes = (Vec<Complex64>, Mat<Complex64>, Mat<Complex64>);

fn symmetric_block(m: &SystemMatrices, block: &crate::couplings::Block) -> Result<BlockModes> {
    let idx = &block.members;
    let k = idx.len();
    let g0 = m.gamma[idx[0]];
    let db = submatrix(&m.d, idx);
    let sds = &block.s_half * &db * &block.s_half;
    let b = symmetrize(Mat::from_fn(k, k, |r, c| {
        (if r == c { g0 } else { 0.0 }) - sds[(r, c)]
    }));
    let evd = b
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let w = evd.U();
    let lam: Vec<Complex64> = (0..k)
        .map(|i| Complex64::new(evd.S().column_vector()[i], 0.0))
        .collect();
    let u = &block.s_half_inv * w;
    let ui = w.transpose() * &block.s_half;
    Ok((lam, to_complex(&u), to_complex(&ui)))
}

fn general_block(a: &Mat<f64>) -> Result<BlockModes> {
    let k = a.nrows();
    let evd = a.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&p, &q| s[p].re.total_cmp(&s[q].re).then(s[p].im.total_cmp(&s[q].im)));
    let lam: Vec<Complex64> = order.iter().map(|&p| s[p]).collect();
    let u = Mat::from_fn(k, k, |r, c| evd.U()[(r, order[c])]);
    let ui = u.partial_piv_lu().inverse();
    Ok((lam, u, ui))
}

fn biorthogonality_residual(
    m: &SystemMatrices,
    right: &Mat<Complex64>,
    left: &Mat<Complex64>,
    cluster: &[usize],
) -> f64 {
    let mut res: f64 = 0.0;
    let mut offset = 0;
    for (c, block) in m.blocks.iter().enumerate() {
        let idx = &block.members;
        let k = idx.len();
        debug_assert!(cluster[offset..offset + k].iter().all(|&x| x == c));
        let lb = Mat::from_fn(k, k, |r, s| left[(offset + r, idx[s])]);
        let rb = Mat::from_fn(k, k, |r, s| right[(idx[r], offset + s)]);
        let p = &lb * &rb;
        for r in 0..k {
            for s in 0..k {
                let want = if r == s { 1.0 } else { 0.0 };
                res = res.max((p[(r, s)] - want).norm());
            }
        }
        offset += k;
    }
    res
}

/// χ(ω) = i(ω·I + i·A)⁻¹·W by a direct LU solve.
pub fn susceptibility_resolvent(m: &SystemMatrices, omega: f64) -> Result<Mat<Complex64>> {
    if omega == 0.0 {
        let conserved = m
            .partition
            .members
            .iter()
            .any(|idx| idx.iter().all(|&k| m.gamma[k] == 0.0));
        if conserved {
            return Err(Error::GoldstoneSingularity);
        }
    }
    let n = m.n();
    let i = Complex64::i();
    let lhs = Mat::from_fn(n, n, |r, c| {
        let d = if r == c { omega } else { 0.0 };
        Complex64::new(d, 0.0) + i * m.a[(r, c)]
    });
    let rhs = Mat::from_fn(n, n, |r, c| i * m.w[(r, c)]);
    Ok(lhs.partial_piv_lu().solve(&rhs))
}

pub fn to_complex(a: &Mat<f64>) -> Mat<Complex64> {
    Mat::from_fn(a.nrows(), a.ncols(), |r, c| Complex64::new(a[(r, c)], 0.0))
}

pub fn max_abs_diff(a: &Mat<Complex64>, b: &Mat<Complex64>) -> f64 {
    let mut d: f64 = 0.0;
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            d = d.max((a[(r, c)] - b[(r, c)]).norm());
        }
    }
    d
}
