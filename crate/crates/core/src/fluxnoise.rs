//! Flux vectors, paramagnon flux density and flux-noise spectra.

use num_complex::Complex64;

use crate::couplings::SystemMatrices;
use crate::lattice::VirtualLattice;
use crate::spectral::ParamagnonSpectrum;
use crate::{Error, Exec, Result};

/// Relative cut below which mode weights are treated as numerical dust.
pub const WEIGHT_DUST: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct FluxVector {
    /// F_i^a per virtual site, a = x, y, z.
    pub f: Vec<[f64; 3]>,
    /// Edge separation W for the edge model.
    pub width: Option<f64>,
}

impl FluxVector {
    /// +F0 ẑ on column 0, −F0 ẑ on column nx − 1, W = (nx − 1)a0.
    pub fn edge(lattice: &VirtualLattice, f0: f64) -> Self {
        let mut f = vec![[0.0; 3]; lattice.n_sites()];
        let nx = lattice.nx();
        for y in 0..lattice.ny() {
            f[lattice.index(0, y)][2] += f0;
            f[lattice.index(nx - 1, y)][2] -= f0;
        }
        Self {
            f,
            width: Some((nx - 1) as f64 * lattice.a0()),
        }
    }

    pub fn custom(f: Vec<[f64; 3]>) -> Self {
        Self { f, width: None }
    }

    /// Components on the occupied sites, one vector per axis.
    pub fn restrict(&self, sites: &[usize]) -> [Vec<f64>; 3] {
        std::array::from_fn(|a| sites.iter().map(|&s| self.f[s][a]).collect())
    }

    /// Σ_a F^{aT}·M·F^a over occupied sites.
    pub fn quadratic(&self, sites: &[usize], m: &faer::Mat<f64>) -> f64 {
        let comps = self.restrict(sites);
        let n = sites.len();
        let mut total = 0.0;
        for f in comps.iter().filter(|f| f.iter().any(|&x| x != 0.0)) {
            for r in 0..n {
                if f[r] == 0.0 {
                    continue;
                }
                let mut row = 0.0;
                for c in 0..n {
                    row += m[(r, c)] * f[c];
                }
                total += f[r] * row;
            }
        }
        total
    }
}

/// Per-mode flux weights c_m = Σ_a (F^{aT}·v_m)(v_m⁻¹·W·F^a) of one instance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModeWeights {
    pub gamma: Vec<Complex64>,
    pub c: Vec<Complex64>,
    pub goldstone: Vec<bool>,
    /// Σ over Goldstone modes of (F·v_0)(v_0⁻¹·χ₀·F), their Γ → 0⁺ static
    /// weight sitting at γ = 0.
    pub goldstone_static: f64,
    /// Σ_a F^{aT}·χ₀·F^a.
    pub static_total: f64,
    /// Σ_a F^{aT}·W·F^a.
    pub high_freq_total: f64,
    pub gamma_max: f64,
}

impl ModeWeights {
    pub fn compute(spec: &ParamagnonSpectrum, m: &SystemMatrices, flux: &FluxVector) -> Self {
        let sites = &m.partition.sites;
        let n = sites.len();
        let comps = flux.restrict(sites);
        let mut c = vec![Complex64::new(0.0, 0.0); n];
        let mut goldstone_static = 0.0;
        for f in comps.iter().filter(|f| f.iter().any(|&x| x != 0.0)) {
            let wf = matvec(&m.w, f);
            let cf = matvec(&m.chi0, f);
            for k in 0..n {
                let fv: Complex64 = (0..n)
                    .filter(|&r| f[r] != 0.0)
                    .map(|r| spec.right[(r, k)] * f[r])
                    .sum();
                if fv == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let lw: Complex64 = (0..n).map(|r| spec.left[(k, r)] * wf[r]).sum();
                c[k] += fv * lw;
                if spec.goldstone[k] {
                    let lc: Complex64 = (0..n).map(|r| spec.left[(k, r)] * cf[r]).sum();
                    goldstone_static += (fv * lc).re;
                }
            }
        }
        Self {
            gamma: spec.gamma.clone(),
            c,
            goldstone: spec.goldstone.clone(),
            goldstone_static,
            static_total: flux.quadratic(sites, &m.chi0),
            high_freq_total: flux.quadratic(sites, &m.w),
            gamma_max: spec.gamma_max(),
        }
    }

    /// Non-Goldstone modes whose |c_m| exceeds the dust cut, as (γ_m, c_m).
    pub fn contributing(&self) -> Vec<(Complex64, Complex64)> {
        let cmax = self
            .c
            .iter()
            .zip(&self.goldstone)
            .filter(|(_, &g)| !g)
            .map(|(c, _)| c.norm())
            .fold(0.0, f64::max);
        self.gamma
            .iter()
            .zip(&self.c)
            .zip(&self.goldstone)
            .filter(|((_, c), &g)| !g && c.norm() > WEIGHT_DUST * cmax)
            .map(|((g, c), _)| (*g, *c))
            .collect()
    }

    /// Σ_m w_m with w_m = c_m/γ_m over dissipative modes, plus the Goldstone
    /// static weight. Equals F·χ₀·F exactly.
    pub fn weight_sum(&self) -> f64 {
        let dissipative: f64 = self
            .gamma
            .iter()
            .zip(&self.c)
            .zip(&self.goldstone)
            .filter(|(_, &g)| !g)
            .map(|((g, c), _)| (c / g).re)
            .sum();
        dissipative + self.goldstone_static
    }

    /// Smallest real rate among contributing modes.
    pub fn gamma_min_contributing(&self) -> Option<f64> {
        self.contributing()
            .iter()
            .map(|(g, _)| g.re)
            .reduce(f64::min)
    }

    /// Classical-normalised mode sum L(ω) = Im χ_FF(ω)/ω, even in ω.
    /// Reduces to Σ_m c_m/(ω² + γ_m²) for a real spectrum.
    pub fn lorentz_sum(&self, omega: f64) -> f64 {
        self.contributing()
            .iter()
            .map(|&(g, c)| lorentz(g, c, omega))
            .sum()
    }
}

fn lorentz(g: Complex64, c: Complex64, omega: f64) -> f64 {
    if g.im == 0.0 && c.im == 0.0 {
        c.re / (omega * omega + g.re * g.re)
    } else if omega == 0.0 {
        (c / (g * g)).re
    } else {
        (c / (omega + Complex64::i() * g)).re / omega
    }
}

fn matvec(m: &faer::Mat<f64>, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|r| (0..n).filter(|&c| v[c] != 0.0).map(|c| m[(r, c)] * v[c]).sum())
        .collect()
}

/// 2ω/(1 − e^{−ω/T}), continuous through ω = 0 where it equals 2T.
pub fn bose_prefactor(omega: f64, temperature: f64) -> f64 {
    if omega == 0.0 {
        2.0 * temperature
    } else {
        2.0 * omega / -(-omega / temperature).exp_m1()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DensityForm {
    /// ρ(γ) = (1/γ) Σ_m c_m N(γ; γ_m, σ_γ).
    #[default]
    Literal,
    /// ρ(γ) = Σ_m (c_m/γ_m) N(γ; γ_m, σ_γ); integrates to Σ_m w_m.
    PerMode,
}

/// Uniform grid γ_k = kΔ, k = 1..=points, Δ = span·γ_ref/points. γ = 0 is
/// left out because the literal density has a 1/γ factor.
pub fn density_grid(gamma_ref: f64, points: usize, span: f64) -> Vec<f64> {
    let step = span * gamma_ref / points as f64;
    (1..=points).map(|k| k as f64 * step).collect()
}

/// Gaussian-broadened flux density with width `sigma_g`.
pub fn flux_density(
    weights: &ModeWeights,
    grid: &[f64],
    sigma_g: f64,
    form: DensityForm,
) -> Result<Vec<f64>> {
    let modes: Vec<(f64, f64)> = weights
        .contributing()
        .iter()
        .map(|(g, c)| match form {
            DensityForm::Literal => (g.re, c.re),
            DensityForm::PerMode => (g.re, (c / g).re),
        })
        .collect();
    let total: f64 = modes.iter().map(|m| m.1).sum();
    let scale: f64 = modes.iter().map(|m| m.1.abs()).sum();
    if total < -1e-12 * scale {
        return Err(Error::Instability { total });
    }
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma_g);
    Ok(grid
        .iter()
        .map(|&x| {
            let s: f64 = modes
                .iter()
                .map(|&(g, w)| {
                    let z = (x - g) / sigma_g;
                    w * norm * (-0.5 * z * z).exp()
                })
                .sum();
            match form {
                DensityForm::Literal => s / x,
                DensityForm::PerMode => s,
            }
        })
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NoiseSpectrum {
    pub temperature: f64,
    pub omega: Vec<f64>,
    pub s_phi: Vec<f64>,
    /// S(ω) − S(−ω).
    pub s_phi_minus: Vec<f64>,
}

/// S_Φ(ω) = [2ω/(1 − e^{−ω/T})]·L(ω) from the exact mode sum.
pub fn flux_noise(weights: &ModeWeights, temperature: f64, omega: &[f64], exec: Exec) -> NoiseSpectrum {
    let modes = weights.contributing();
    let values = exec.map(omega.len(), |k| {
        let w = omega[k];
        let l: f64 = modes.iter().map(|&(g, c)| lorentz(g, c, w)).sum();
        // the two Bose factors differ by exactly 2ω
        (bose_prefactor(w, temperature) * l, 2.0 * w * l)
    });
    NoiseSpectrum {
        temperature,
        omega: omega.to_vec(),
        s_phi: values.iter().map(|v| v.0).collect(),
        s_phi_minus: values.iter().map(|v| v.1).collect(),
    }
}

/// [2/(1 − e^{−ω/T})]·(1/ω)·Σ_a F^{aT}(Γχ₀ − D)F^a.
pub fn high_freq_bound(m: &SystemMatrices, flux: &FluxVector, temperature: f64, omega: f64) -> f64 {
    let fwf = flux.quadratic(&m.partition.sites, &m.w);
    bose_prefactor(omega, temperature) / (omega * omega) * fwf
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut out: Vec<f64> = (0..points)
        .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
        .collect();
    // exact endpoints, so inclusive windows built from them hold every point
    out[0] = lo;
    out[points - 1] = hi;
    out
}
