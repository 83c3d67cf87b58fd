//! Translation-invariant (homogeneous approximation) engine and the
//! infinite-plane diffusion limit.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::couplings::Coupling;
use crate::fluxnoise::{bose_prefactor, ModeWeights};
use crate::lattice::VirtualLattice;
use crate::{Error, Result};

/// Spatial averages entering the homogeneous approximation.
#[derive(Clone, Debug, PartialEq)]
pub struct HaParameters {
    pub sigma: f64,
    /// Average exchange along x and y, (1/Nσ²) Σ_i x_i x_{i+v} J_{i,i+v}.
    pub jbar_x: f64,
    pub jbar_y: f64,
    pub gamma_bar: f64,
    pub nsx: usize,
    pub nsy: usize,
    pub a0: f64,
    pub width: f64,
    pub f0: f64,
}

impl HaParameters {
    /// Fully occupied torus-like parameters with uniform exchange `j`.
    pub fn uniform(nsx: usize, nsy: usize, j: f64, gamma_bar: f64) -> Self {
        Self {
            sigma: 1.0,
            jbar_x: j,
            jbar_y: j,
            gamma_bar,
            nsx,
            nsy,
            a0: 1.0,
            width: (nsx - 1) as f64,
            f0: 1.0,
        }
    }

    /// Averages over one instance. `rates` are per occupied site.
    pub fn from_instance(
        lattice: &VirtualLattice,
        coupling: &Coupling,
        rates: &[f64],
    ) -> Result<Self> {
        let n = lattice.n_sites() as f64;
        let sigma = lattice.sigma();
        let norm = n * sigma * sigma;
        let (mut sx, mut sy) = (0.0, 0.0);
        for b in coupling.bonds(lattice)? {
            let (xi, yi) = lattice.coords(b.i);
            let (xj, _) = lattice.coords(b.j);
            let _ = yi;
            if xi != xj {
                sx += b.exchange;
            } else {
                sy += b.exchange;
            }
        }
        let gamma_bar = if rates.is_empty() {
            0.0
        } else {
            rates.iter().sum::<f64>() / rates.len() as f64
        };
        let safe = |s: f64| if norm > 0.0 { s / norm } else { 0.0 };
        Ok(Self {
            sigma,
            jbar_x: safe(sx),
            jbar_y: safe(sy),
            gamma_bar,
            nsx: lattice.nx(),
            nsy: lattice.ny(),
            a0: lattice.a0(),
            width: (lattice.nx() - 1) as f64 * lattice.a0(),
            f0: 1.0,
        })
    }

    pub fn jbar(&self) -> f64 {
        0.5 * (self.jbar_x + self.jbar_y)
    }

    /// D̃(q) = −[sin²(q_x a0/2) + sin²(q_y a0/2)].
    pub fn d_tilde(&self, qx: f64, qy: f64) -> f64 {
        let (sx, sy) = ((0.5 * qx * self.a0).sin(), (0.5 * qy * self.a0).sin());
        -(sx * sx + sy * sy)
    }

    /// J̃(q) = 2σ[J̄_x cos(q_x a0) + J̄_y cos(q_y a0)].
    pub fn j_tilde(&self, qx: f64, qy: f64) -> f64 {
        2.0 * self.sigma
            * (self.jbar_x * (qx * self.a0).cos() + self.jbar_y * (qy * self.a0).cos())
    }

    fn stiffness(&self, qx: f64, qy: f64, t: f64) -> Result<f64> {
        let v = 4.0 * t - self.j_tilde(qx, qy);
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::PhaseAtQ { qx, qy, value: v })
        }
    }

    /// γ_q = −D̃(q)[4T − J̃(q)] + Γ̄.
    pub fn gamma_q(&self, qx: f64, qy: f64, t: f64) -> Result<f64> {
        Ok(-self.d_tilde(qx, qy) * self.stiffness(qx, qy, t)? + self.gamma_bar)
    }

    /// χ(q, 0) = 1/(4T − J̃(q)).
    pub fn chi_static(&self, qx: f64, qy: f64, t: f64) -> Result<f64> {
        Ok(1.0 / self.stiffness(qx, qy, t)?)
    }

    /// Numerator Γ̄χ(q, 0) − D̃(q) shared by χ(q, ω) and S(q, ω).
    fn numerator(&self, qx: f64, qy: f64, t: f64) -> Result<f64> {
        Ok(self.gamma_bar * self.chi_static(qx, qy, t)? - self.d_tilde(qx, qy))
    }

    /// χ(q, ω) = [Γ̄χ(q,0) − D̃]/(−iω + γ_q).
    pub fn chi_q(&self, qx: f64, qy: f64, omega: f64, t: f64) -> Result<Complex64> {
        let g = self.gamma_q(qx, qy, t)?;
        Ok(self.numerator(qx, qy, t)? / Complex64::new(g, -omega))
    }

    /// S^{zz}(q, ω) = [2ω/(1 − e^{−ω/T})]·[Γ̄χ(q,0) − D̃]/(ω² + γ_q²).
    pub fn spin_noise(&self, qx: f64, qy: f64, omega: f64, t: f64) -> Result<f64> {
        let g = self.gamma_q(qx, qy, t)?;
        Ok(bose_prefactor(omega, t) * self.numerator(qx, qy, t)? / (omega * omega + g * g))
    }

    /// Rates over the full nsx × nsy Brillouin-zone grid.
    pub fn all_rates(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.nsx * self.nsy);
        for n in 0..self.nsx {
            for m in 0..self.nsy {
                let qx = 2.0 * PI * n as f64 / (self.nsx as f64 * self.a0);
                let qy = 2.0 * PI * m as f64 / (self.nsy as f64 * self.a0);
                out.push(self.gamma_q(qx, qy, t)?);
            }
        }
        Ok(out)
    }

    /// Positivity of 4T − J̃(q) on the sampled zone.
    pub fn check_phase(&self, t: f64) -> Result<()> {
        self.all_rates(t).map(|_| ())
    }

    /// Wavevectors along x̂ used by the edge model.
    pub fn edge_wavevectors(&self) -> Vec<f64> {
        let n = self.nsx as f64;
        (0..self.nsx)
            .map(|k| 2.0 * PI / (n * self.a0) * (k as f64 - n / 2.0))
            .collect()
    }

    /// Edge-model modes as flux weights:
    /// c_q = 4F0²(N_sy/N_sx) sin²(qW/2)[Γ̄χ(q,0) − D̃(q)] at rate γ_q.
    pub fn edge_modes(&self, t: f64) -> Result<ModeWeights> {
        let pre = 4.0 * self.f0 * self.f0 * self.nsy as f64 / self.nsx as f64;
        let mut w = ModeWeights::default();
        for q in self.edge_wavevectors() {
            let s = (0.5 * q * self.width).sin();
            let c = pre * s * s * self.numerator(q, 0.0, t)?;
            let g = self.gamma_q(q, 0.0, t)?;
            w.gamma.push(Complex64::new(g, 0.0));
            w.c.push(Complex64::new(c, 0.0));
            w.goldstone.push(g == 0.0);
            w.static_total += pre * s * s * self.chi_static(q, 0.0, t)?;
            w.high_freq_total += c;
            w.gamma_max = w.gamma_max.max(g);
        }
        Ok(w)
    }

    /// S_Φ(ω) = 4F0²(N_sy/N_sx) Σ_q sin²(qW/2) S^{zz}(q x̂, ω).
    pub fn flux_noise(&self, omega: f64, t: f64) -> Result<f64> {
        let pre = 4.0 * self.f0 * self.f0 * self.nsy as f64 / self.nsx as f64;
        let mut total = 0.0;
        for q in self.edge_wavevectors() {
            let s = (0.5 * q * self.width).sin();
            total += s * s * self.spin_noise(q, 0.0, omega, t)?;
        }
        Ok(pre * total)
    }

    /// −D̃(q)[4T − J̃(q)]/q² along x̂.
    pub fn diffusion_hom(&self, q: f64, t: f64) -> Result<f64> {
        Ok(-self.d_tilde(q, 0.0) * self.stiffness(q, 0.0, t)? / (q * q))
    }

    /// Leading terms a0²[T − σJ̄(1 − q²a0²/4)] of [`diffusion_hom`](Self::diffusion_hom).
    pub fn diffusion_hom_expansion(&self, q: f64, t: f64) -> f64 {
        let a2 = self.a0 * self.a0;
        a2 * (t - self.sigma * self.jbar() * (1.0 - q * q * a2 / 4.0))
    }

    /// 4T·χ(0, 0), the static amplitude ratio of the homogeneous engine.
    pub fn static_ratio(&self, t: f64) -> Result<f64> {
        Ok(4.0 * t * self.chi_static(0.0, 0.0, t)?)
    }
}

/// k_BT/(k_BT − σJ̄). Pole at T = σJ̄.
pub fn amplitude_ratio(sigma_jbar: f64, t: f64) -> Result<f64> {
    if t <= sigma_jbar {
        return Err(Error::Domain(format!(
            "T = {t} is at or below sigma*Jbar = {sigma_jbar}: magnetised clusters form"
        )));
    }
    Ok(t / (t - sigma_jbar))
}

/// b_α = ∫ x^{1−α}/(1 + x²) dx over [lo, hi], 0 ≤ lo < hi ≤ ∞.
/// Integrated in u = ln x to absolute accuracy near 1e−13.
pub fn b_alpha(alpha: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Domain(format!("alpha = {alpha} outside (0, 2)")));
    }
    if !(lo >= 0.0 && hi > lo) {
        return Err(Error::Domain(format!("bad interval [{lo}, {hi}]")));
    }
    // beyond these the integrand is below 1e−18 of its peak
    let cut = 18.0 * std::f64::consts::LN_10;
    let u_lo = if lo > 0.0 { lo.ln() } else { -cut / (2.0 - alpha) };
    let u_hi = if hi.is_finite() { hi.ln() } else { cut / alpha };
    let u_lo = u_lo.max(-cut / (2.0 - alpha));
    let u_hi = u_hi.min(cut / alpha);
    if u_hi <= u_lo {
        return Ok(0.0);
    }
    let f = |u: f64| {
        if u > 0.0 {
            (-alpha * u).exp() / (1.0 + (-2.0 * u).exp())
        } else {
            ((2.0 - alpha) * u).exp() / (1.0 + (2.0 * u).exp())
        }
    };
    // unit pieces in u keep the double-exponential rule within its level cap
    let n = ((u_hi - u_lo).ceil() as usize).max(1);
    let h = (u_hi - u_lo) / n as f64;
    let mut total = 0.0;
    for k in 0..n {
        let a = u_lo + k as f64 * h;
        let b = if k + 1 == n { u_hi } else { a + h };
        total += quadrature::integrate(f, a, b, 1e-15).integral;
    }
    Ok(total)
}

/// π/(2 sin(πα/2)), the limit of b_α over (0, ∞).
pub fn b_alpha_limit(alpha: f64) -> f64 {
    PI / (2.0 * (PI * alpha / 2.0).sin())
}

/// S_Φ(ω) = [2ω/(1 − e^{−ω/T})]·C·b_α/|ω|^α for a power-law density on
/// [γ_min, γ_max].
pub fn sphi_closed_form(
    c: f64,
    alpha: f64,
    t: f64,
    omega: f64,
    gamma_min: f64,
    gamma_max: f64,
) -> Result<f64> {
    let w = omega.abs();
    let b = b_alpha(alpha, gamma_min / w, gamma_max / w)?;
    Ok(bose_prefactor(omega, t) * c * b / w.powf(alpha))
}

/// S_Φ⁻(ω) = 2C·b_α·|ω|^{1−α} (sign of ω).
pub fn antisymmetric_noise(
    c: f64,
    alpha: f64,
    omega: f64,
    gamma_min: f64,
    gamma_max: f64,
) -> Result<f64> {
    let w = omega.abs();
    let b = b_alpha(alpha, gamma_min / w, gamma_max / w)?;
    Ok(omega.signum() * 2.0 * c * b * w.powf(1.0 - alpha))
}

/// Diffusion on an infinite homogeneous plane, γ_q = Dq² + Γ̄.
#[derive(Clone, Debug, PartialEq)]
pub struct InfinitePlane {
    pub diffusion: f64,
    pub gamma_bar: f64,
    pub width: f64,
    pub a0: f64,
    pub f0: f64,
    pub n_sy: f64,
    pub temperature: f64,
    /// Exchange entering χ(q→0) ≈ 1/[4(T − J)].
    pub j: f64,
}

impl InfinitePlane {
    pub fn gamma_min(&self) -> f64 {
        self.gamma_bar
    }

    pub fn gamma_max(&self) -> f64 {
        self.diffusion * (PI / self.a0).powi(2) + self.gamma_bar
    }

    fn prefactor(&self) -> Result<f64> {
        let dt = self.temperature - self.j;
        if dt <= 0.0 {
            return Err(Error::Domain(format!(
                "T = {} not above J = {}",
                self.temperature, self.j
            )));
        }
        Ok(self.f0 * self.f0 * self.a0 * self.n_sy / (2.0 * PI * dt * self.diffusion.sqrt()))
    }

    /// ρ_Φ(γ) with the exact edge interference, or with sin² → 1/2.
    pub fn rho(&self, gamma: f64, half_sin2: bool) -> Result<f64> {
        let (lo, hi) = (self.gamma_min(), self.gamma_max());
        if gamma <= lo || gamma > hi {
            return Ok(0.0);
        }
        let dg = gamma - lo;
        let s2 = if half_sin2 {
            0.5
        } else {
            (dg * self.width * self.width / (4.0 * self.diffusion)).sqrt().sin().powi(2)
        };
        Ok(self.prefactor()? * s2 / dg.sqrt())
    }

    /// Amplitude C of ρ ≈ C/γ^{1/2} with sin² → 1/2, valid for γ ≫ γ_min.
    pub fn amplitude(&self) -> Result<f64> {
        Ok(0.5 * self.prefactor()?)
    }

    /// S_Φ(ω) from the closed form with α = 1/2.
    pub fn noise(&self, omega: f64) -> Result<f64> {
        sphi_closed_form(
            self.amplitude()?,
            0.5,
            self.temperature,
            omega,
            self.gamma_min(),
            self.gamma_max(),
        )
    }

    /// S_Φ(ω) as the q-integral with exact sin²(qW/2), the N_sx → ∞ limit
    /// of the edge-model lattice sum.
    pub fn noise_exact(&self, omega: f64) -> Result<f64> {
        let dt = self.temperature - self.j;
        if dt <= 0.0 {
            return Err(Error::Domain(format!(
                "T = {} not above J = {}",
                self.temperature, self.j
            )));
        }
        let (d, g0, w) = (self.diffusion, self.gamma_bar, self.width);
        let f = |q: f64| {
            let s = (0.5 * q * w).sin();
            let g = d * q * q + g0;
            s * s * g / (omega * omega + g * g)
        };
        // split at the sin² zeros so each piece is smooth
        let qmax = PI / self.a0;
        let step = 2.0 * PI / w;
        let mut integral = 0.0;
        let mut a = 0.0;
        while a < qmax {
            let b = (a + step).min(qmax);
            integral += quadrature::integrate(f, a, b, 1e-14).integral;
            a = b;
        }
        let pre = self.f0 * self.f0 * self.n_sy * self.a0 / (PI * dt);
        Ok(bose_prefactor(omega, self.temperature) * pre * integral)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary::*;

    #[test]
    fn zone_centre_and_corner() {
        let p = HaParameters::uniform(20, 20, 1.0, 0.3);
        assert_eq!(p.gamma_q(0.0, 0.0, 5.0).unwrap(), 0.3);
        assert!((p.d_tilde(PI, PI) + 2.0).abs() < 1e-15);
        assert_eq!(p.j_tilde(0.0, 0.0), 4.0);
        assert_eq!(p.j_tilde(0.0, 0.0) / 4.0, 1.0);
    }

    #[test]
    fn phase_violation_names_q() {
        let p = HaParameters::uniform(8, 8, 1.0, 0.0);
        assert!(p.check_phase(1.01).is_ok());
        match p.check_phase(0.99) {
            Err(Error::PhaseAtQ { qx, qy, .. }) => assert_eq!((qx, qy), (0.0, 0.0)),
            other => panic!("{other:?}"),
        }
        let afm = HaParameters::uniform(8, 8, -1.0, 0.0);
        assert!(matches!(afm.check_phase(0.99), Err(Error::PhaseAtQ { .. })));
    }

    #[test]
    fn curie_weiss_pole_independent_of_relaxation() {
        for g in [0.0, 0.1, 7.0] {
            let p = HaParameters::uniform(10, 10, 1.0, g);
            assert_eq!(p.chi_static(0.0, 0.0, 2.0).unwrap(), 1.0 / 4.0);
        }
    }

    #[test]
    fn spin_noise_detailed_balance() {
        let p = HaParameters::uniform(10, 10, -1.0, 0.2);
        let (w, t) = (0.8, 0.5);
        let r = p.spin_noise(0.3, 0.1, -w, t).unwrap() / p.spin_noise(0.3, 0.1, w, t).unwrap();
        assert!((r / (-w / t).exp() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn ratio_values() {
        assert_eq!(amplitude_ratio(1.0, 2.0).unwrap(), 2.0);
        assert!((amplitude_ratio(1.0, 1e9).unwrap() - 1.0).abs() < 1e-8);
        assert!(amplitude_ratio(-1.0, 3.0).unwrap() < 1.0);
        assert!(amplitude_ratio(-1.0, 3.0).unwrap() < amplitude_ratio(-1.0, 6.0).unwrap());
        assert!(amplitude_ratio(1.0, 1.0).is_err());
        for t in [1.5, 2.0, 10.0] {
            let p = HaParameters::uniform(20, 20, 1.0, 0.0);
            assert_eq!(p.static_ratio(t).unwrap(), amplitude_ratio(1.0, t).unwrap());
        }
    }

    #[test]
    fn b_alpha_limits() {
        assert!((b_alpha(1.0, 0.0, f64::INFINITY).unwrap() - PI / 2.0).abs() < 1e-10);
        let b = b_alpha(0.5, 0.0, f64::INFINITY).unwrap();
        assert!((b - PI / 2f64.sqrt()).abs() < 1e-9);
        // ∫_0^1 x^{0.5}/(1+x²) checked against a fine midpoint sum
        let n = 2_000_000;
        let mid: f64 = (0..n)
            .map(|k| {
                let x = (k as f64 + 0.5) / n as f64;
                x.sqrt() / (1.0 + x * x)
            })
            .sum::<f64>()
            / n as f64;
        assert!((b_alpha(0.5, 0.0, 1.0).unwrap() - mid).abs() < 1e-8);
        assert!(b_alpha(2.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn closed_form_asymmetry() {
        let (c, a, t, lo, hi) = (0.7, 0.6, 0.3, 1e-6, 1e4);
        for w in [0.01, 0.5, 3.0] {
            let sp = sphi_closed_form(c, a, t, w, lo, hi).unwrap();
            let sm = sphi_closed_form(c, a, t, -w, lo, hi).unwrap();
            let anti = antisymmetric_noise(c, a, w, lo, hi).unwrap();
            assert!(((sp - sm) / anti - 1.0).abs() < 1e-12);
            assert!((sm / sp / (-w / t).exp() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn instance_averages_full_lattice() {
        let l = VirtualLattice::new(20, 20, Periodic, Periodic).unwrap();
        let p = HaParameters::from_instance(&l, &Coupling::nearest(1.0), &[0.25; 400]).unwrap();
        assert_eq!(p.sigma, 1.0);
        assert!((p.jbar_x - 1.0).abs() < 1e-15 && (p.jbar_y - 1.0).abs() < 1e-15);
        assert_eq!(p.gamma_bar, 0.25);
        assert_eq!(p.j_tilde(0.0, 0.0), 4.0);
    }

    #[test]
    fn diffusion_expansion_leading_terms() {
        // the residual is −(T − σJ̄)q²/12 to leading order
        let p = HaParameters::uniform(20, 20, 1.0, 0.0);
        let t = 3.0;
        for q in [0.02, 0.01] {
            let r = (p.diffusion_hom(q, t).unwrap() - p.diffusion_hom_expansion(q, t)) / (q * q);
            assert!((r + (t - 1.0) / 12.0).abs() < 1e-3, "{r}");
        }
        assert!((p.diffusion_hom(1e-4, t).unwrap() - (t - 1.0)).abs() < 1e-7);
    }
}
