//! Power-law fits, disorder ensembles and temperature sweeps.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::couplings::{Coupling, Relaxation, SystemMatrices};
use crate::fluxnoise::{
    density_grid, flux_density, flux_noise, log_grid, DensityForm, FluxVector, ModeWeights,
    NoiseSpectrum,
};
use crate::lattice::VirtualLattice;
use crate::spectral::{diagonalize, SolverPath};
use crate::{Error, Exec, Result};

/// Fewest points accepted by [`fit_power_law`].
pub const MIN_FIT_POINTS: usize = 10;

/// y ≈ C·x^{−α} on a window.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub amplitude: f64,
    pub r2: f64,
    pub n_points: usize,
    pub window: (f64, f64),
}

/// Least squares of log10 y on log10 x over the points with x in `window`
/// (inclusive). α = −slope, C = 10^intercept.
pub fn fit_power_law(x: &[f64], y: &[f64], window: (f64, f64)) -> Result<PowerLawFit> {
    if x.len() != y.len() {
        return Err(Error::Fit(format!("length mismatch {} vs {}", x.len(), y.len())));
    }
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Fit(format!("bad window [{lo}, {hi}]")));
    }
    let mut pts = Vec::new();
    for (&xi, &yi) in x.iter().zip(y) {
        if xi < lo || xi > hi {
            continue;
        }
        if !(yi > 0.0) || !yi.is_finite() {
            return Err(Error::Fit(format!("nonpositive value {yi:e} at x = {xi:e}")));
        }
        pts.push((xi.log10(), yi.log10()));
    }
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "{} points in window [{lo:e}, {hi:e}], need {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(PowerLawFit {
        alpha: -slope,
        amplitude: 10f64.powf(intercept),
        r2,
        n_points: pts.len(),
        window,
    })
}

/// Seed of instance `k`: first word of ChaCha8 stream `k` keyed by the
/// master seed. Depends on nothing but (master, k).
pub fn instance_seed(master: u64, k: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(k);
    rng.next_u64()
}

/// Everything that defines one disorder instance except its seed.
#[derive(Clone, Debug)]
pub struct InstanceConfig {
    /// Fully occupied template; vacancies are sampled from it.
    pub lattice: VirtualLattice,
    pub sigma: f64,
    pub coupling: Coupling,
    pub relaxation: Relaxation,
    pub temperature: f64,
    pub f0: f64,
    pub solver: SolverPath,
}

impl InstanceConfig {
    /// Nearest-neighbour exchange `j`, zero relaxation, edge flux F0 = 1.
    pub fn new(lattice: VirtualLattice, sigma: f64, j: f64, temperature: f64) -> Self {
        Self {
            lattice,
            sigma,
            coupling: Coupling::nearest(j),
            relaxation: Relaxation::Zero,
            temperature,
            f0: 1.0,
            solver: SolverPath::Auto,
        }
    }

    pub fn with_relaxation(mut self, relaxation: Relaxation) -> Self {
        self.relaxation = relaxation;
        self
    }

    pub fn at_temperature(&self, temperature: f64) -> Self {
        Self {
            temperature,
            ..self.clone()
        }
    }

    /// The sampled lattice and assembled matrices of instance `seed`.
    pub fn build(&self, seed: u64) -> Result<(VirtualLattice, SystemMatrices)> {
        let lattice = if self.sigma >= 1.0 {
            self.lattice.clone()
        } else {
            self.lattice.sample_vacancies(self.sigma, seed)
        };
        let rates = self.relaxation.rates(&lattice, seed);
        let m = SystemMatrices::assemble(&lattice, &self.coupling, rates, self.temperature)?;
        Ok((lattice, m))
    }

    /// No vacancies and no random rates: every seed gives the same instance.
    pub fn is_seed_independent(&self) -> bool {
        self.sigma >= 1.0 && self.relaxation.is_uniform()
    }

    /// Lattice → matrices → spectrum → flux weights for one seed.
    pub fn run(&self, seed: u64) -> Result<InstanceOutput> {
        let (lattice, m) = self.build(seed)?;
        let spec = diagonalize(&m, self.solver)?;
        let flux = FluxVector::edge(&lattice, self.f0);
        let weights = ModeWeights::compute(&spec, &m, &flux);
        Ok(InstanceOutput {
            seed,
            n_occupied: lattice.n_occupied(),
            n_clusters: m.partition.n_clusters(),
            t_cw: m.t_cw(),
            weights,
        })
    }
}

#[derive(Clone, Debug)]
pub struct InstanceOutput {
    pub seed: u64,
    pub n_occupied: usize,
    pub n_clusters: usize,
    pub t_cw: f64,
    pub weights: ModeWeights,
}

/// Density grid and broadening.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityOptions {
    pub points: usize,
    /// Grid upper end as a multiple of γ_ref.
    pub span: f64,
    /// σ_γ as a fraction of each instance's γ_max.
    pub broadening_frac: f64,
    pub form: DensityForm,
}

impl Default for DensityOptions {
    fn default() -> Self {
        Self {
            points: 400,
            span: 1.2,
            broadening_frac: 0.1,
            form: DensityForm::Literal,
        }
    }
}

/// Density fit window [lo_frac, hi_frac]·γ_ref.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitWindow {
    pub lo_frac: f64,
    pub hi_frac: f64,
}

impl Default for FitWindow {
    fn default() -> Self {
        Self {
            lo_frac: 0.01,
            hi_frac: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleConfig {
    pub instance: InstanceConfig,
    pub m: usize,
    pub master_seed: u64,
    pub density: DensityOptions,
    pub window: FitWindow,
    /// Points of the ω grid used for α_S.
    pub noise_points: usize,
    pub exec: Exec,
}

impl EnsembleConfig {
    pub fn new(instance: InstanceConfig, m: usize, master_seed: u64) -> Self {
        Self {
            instance,
            m,
            master_seed,
            density: DensityOptions::default(),
            window: FitWindow::default(),
            noise_points: 120,
            exec: Exec::default(),
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.m as u64)
            .map(|k| instance_seed(self.master_seed, k))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub m: usize,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub temperature: f64,
    /// Ensemble-mean largest rate; sets the density grid.
    pub gamma_ref: f64,
    pub grid: Vec<f64>,
    pub rho_mean: Vec<f64>,
    /// Standard error of the mean, NaN for M = 1.
    pub rho_stderr: Vec<f64>,
    pub alpha_rho: PowerLawFit,
    /// Delete-one jackknife error of α_ρ, NaN for M = 1.
    pub alpha_rho_stderr: f64,
    /// Delete-one estimates of α_ρ behind the jackknife error.
    pub alpha_rho_replicates: Vec<f64>,
    /// Standard deviation of per-instance α_ρ over the instances whose own
    /// fit succeeded.
    pub alpha_rho_spread: f64,
    pub omega: Vec<f64>,
    /// Ensemble mean of L(ω) = Σ_m c_m/(ω² + γ_m²) on `omega`.
    pub lorentz_mean: Vec<f64>,
    pub alpha_s: Option<PowerLawFit>,
    pub alpha_s_stderr: f64,
    pub instances: Vec<InstanceOutput>,
}

impl EnsembleResult {
    /// Ensemble-mean S_Φ and S_Φ⁻, summed in instance order.
    pub fn noise(&self, omega: &[f64], exec: Exec) -> NoiseSpectrum {
        let mut out = NoiseSpectrum {
            temperature: self.temperature,
            omega: omega.to_vec(),
            s_phi: vec![0.0; omega.len()],
            s_phi_minus: vec![0.0; omega.len()],
        };
        let per = exec.map(self.instances.len(), |k| {
            flux_noise(&self.instances[k].weights, self.temperature, omega, Exec::Sequential)
        });
        for s in &per {
            for i in 0..omega.len() {
                out.s_phi[i] += s.s_phi[i];
                out.s_phi_minus[i] += s.s_phi_minus[i];
            }
        }
        let inv = 1.0 / self.instances.len() as f64;
        out.s_phi.iter_mut().for_each(|v| *v *= inv);
        out.s_phi_minus.iter_mut().for_each(|v| *v *= inv);
        out
    }

    pub fn gamma_max_mean(&self) -> f64 {
        self.gamma_ref
    }

    pub fn t_cw_mean(&self) -> f64 {
        mean(&self.instances.iter().map(|i| i.t_cw).collect::<Vec<_>>())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Column means of `rows`, summed in row order.
fn column_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; rows[0].len()];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    let inv = 1.0 / rows.len() as f64;
    acc.iter().map(|a| a * inv).collect()
}

fn column_stderr(rows: &[Vec<f64>], mean: &[f64]) -> Vec<f64> {
    let m = rows.len();
    if m < 2 {
        return vec![f64::NAN; mean.len()];
    }
    let mut acc = vec![0.0; mean.len()];
    for r in rows {
        for ((a, v), mu) in acc.iter_mut().zip(r).zip(mean) {
            *a += (v - mu).powi(2);
        }
    }
    acc.iter()
        .map(|a| (a / (m - 1) as f64 / m as f64).sqrt())
        .collect()
}

/// Delete-one replicates `fit(mean of rows without row k)`, NaN where the
/// fit fails. Empty for M < 2.
fn loo_estimates<F>(rows: &[Vec<f64>], exec: Exec, fit: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> Option<f64> + Sync + Send,
{
    let m = rows.len();
    if m < 2 {
        return Vec::new();
    }
    let mut total = vec![0.0; rows[0].len()];
    for r in rows {
        for (a, v) in total.iter_mut().zip(r) {
            *a += v;
        }
    }
    let inv = 1.0 / (m - 1) as f64;
    exec.map(m, |k| {
        let loo: Vec<f64> = total
            .iter()
            .zip(&rows[k])
            .map(|(t, v)| (t - v) * inv)
            .collect();
        fit(&loo).unwrap_or(f64::NAN)
    })
}

/// √[(n−1)/n Σ(θ_k − θ̄)²] over the finite replicates.
fn jackknife_error(replicates: &[f64]) -> f64 {
    let est: Vec<f64> = replicates.iter().copied().filter(|v| v.is_finite()).collect();
    if est.len() < 2 {
        return f64::NAN;
    }
    let mu = mean(&est);
    let n = est.len() as f64;
    ((n - 1.0) / n * est.iter().map(|a| (a - mu).powi(2)).sum::<f64>()).sqrt()
}

/// Jackknife error of α_ρ(b) − α_ρ(a) for two ensembles over the same
/// instance seeds, such as two temperatures of a sweep. Pairing removes the
/// disorder noise the two ensembles share.
pub fn paired_alpha_stderr(a: &EnsembleResult, b: &EnsembleResult) -> Result<f64> {
    if a.seeds != b.seeds {
        return Err(Error::Input("paired ensembles must share instance seeds".into()));
    }
    let d: Vec<f64> = a
        .alpha_rho_replicates
        .iter()
        .zip(&b.alpha_rho_replicates)
        .map(|(x, y)| y - x)
        .collect();
    Ok(jackknife_error(&d))
}

fn spread(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let mu = mean(v);
    (v.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Runs M instances, averages ρ_Φ and L(ω) in instance order and fits both.
pub fn ensemble_run(cfg: &EnsembleConfig) -> Result<EnsembleResult> {
    if cfg.m == 0 {
        return Err(Error::Input("ensemble size M must be at least 1".into()));
    }
    let seeds = cfg.seeds();
    let seed_of = &seeds;
    let wrap = |k: usize| {
        move |e| Error::Instance {
            index: k,
            seed: seed_of[k],
            source: Box::new(e),
        }
    };
    let instances = if cfg.instance.is_seed_independent() {
        let first = cfg.instance.run(seeds[0]).map_err(wrap(0))?;
        seeds
            .iter()
            .map(|&seed| InstanceOutput {
                seed,
                ..first.clone()
            })
            .collect()
    } else {
        cfg.exec
            .try_map(cfg.m, |k| cfg.instance.run(seeds[k]).map_err(wrap(k)))?
    };
    summarise(cfg, seeds.clone(), instances)
}

/// Averages and fits for instances that have already been run.
pub fn summarise(
    cfg: &EnsembleConfig,
    seeds: Vec<u64>,
    instances: Vec<InstanceOutput>,
) -> Result<EnsembleResult> {
    let opts = cfg.density;
    let gamma_ref = mean(
        &instances
            .iter()
            .map(|i| i.weights.gamma_max)
            .collect::<Vec<_>>(),
    );
    if !(gamma_ref > 0.0) {
        return Err(Error::Fit(format!(
            "largest rate {gamma_ref:e} leaves no density support"
        )));
    }
    let grid = density_grid(gamma_ref, opts.points, opts.span);
    let rows = cfg.exec.try_map(instances.len(), |k| {
        let w = &instances[k].weights;
        flux_density(w, &grid, opts.broadening_frac * w.gamma_max, opts.form).map_err(|e| {
            Error::Instance {
                index: k,
                seed: instances[k].seed,
                source: Box::new(e),
            }
        })
    })?;
    let rho_mean = column_mean(&rows);
    let rho_stderr = column_stderr(&rows, &rho_mean);
    let window = (cfg.window.lo_frac * gamma_ref, cfg.window.hi_frac * gamma_ref);
    let alpha_rho = fit_power_law(&grid, &rho_mean, window)?;
    let alpha_rho_replicates = loo_estimates(&rows, cfg.exec, |r| {
        fit_power_law(&grid, r, window).ok().map(|f| f.alpha)
    });
    let alpha_rho_stderr = jackknife_error(&alpha_rho_replicates);
    let per: Vec<f64> = rows
        .iter()
        .filter_map(|r| fit_power_law(&grid, r, window).ok().map(|f| f.alpha))
        .collect();
    let alpha_rho_spread = spread(&per);

    let (omega, lorentz_rows) = noise_rows(cfg, &instances);
    let (lorentz_mean, alpha_s, alpha_s_stderr) = if omega.is_empty() {
        (Vec::new(), None, f64::NAN)
    } else {
        let lm = column_mean(&lorentz_rows);
        let win = (omega[0], omega[omega.len() - 1]);
        let fit = fit_power_law(&omega, &lm, win).ok();
        let se = jackknife_error(&loo_estimates(&lorentz_rows, cfg.exec, |r| {
            fit_power_law(&omega, r, win).ok().map(|f| f.alpha)
        }));
        (lm, fit, se)
    };

    Ok(EnsembleResult {
        m: instances.len(),
        master_seed: cfg.master_seed,
        seeds,
        temperature: cfg.instance.temperature,
        gamma_ref,
        grid,
        rho_mean,
        rho_stderr,
        alpha_rho,
        alpha_rho_stderr,
        alpha_rho_replicates,
        alpha_rho_spread,
        omega,
        lorentz_mean,
        alpha_s,
        alpha_s_stderr,
        instances,
    })
}

/// ω grid over the central half (in log) of [mean smallest contributing γ,
/// mean γ_max] and the per-instance L(ω) on it.
fn noise_rows(cfg: &EnsembleConfig, instances: &[InstanceOutput]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mins: Option<Vec<f64>> = instances
        .iter()
        .map(|i| i.weights.gamma_min_contributing())
        .collect();
    let Some(mins) = mins else {
        return (Vec::new(), Vec::new());
    };
    let lo = mean(&mins);
    let hi = mean(
        &instances
            .iter()
            .map(|i| i.weights.gamma_max)
            .collect::<Vec<_>>(),
    );
    if !(lo > 0.0 && hi > lo) || cfg.noise_points < 2 {
        return (Vec::new(), Vec::new());
    }
    let (a, b) = (lo.ln(), hi.ln());
    let omega = log_grid(
        (a + 0.25 * (b - a)).exp(),
        (a + 0.75 * (b - a)).exp(),
        cfg.noise_points,
    );
    let rows = cfg.exec.map(instances.len(), |k| {
        omega
            .iter()
            .map(|&w| instances[k].weights.lorentz_sum(w))
            .collect()
    });
    (omega, rows)
}

/// Reference point (T_ref, ω_ref) for amplitude normalisation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmplitudeReference {
    pub t_ref: f64,
    pub omega_ref: f64,
}

impl Default for AmplitudeReference {
    fn default() -> Self {
        Self {
            t_ref: 10.0,
            omega_ref: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub temperature: f64,
    pub alpha: f64,
    pub alpha_stderr: f64,
    /// S_Φ(ω_ref, T)/S_Φ(ω_ref, T_ref).
    pub amplitude: f64,
    pub r2: f64,
    pub alpha_s: Option<f64>,
    pub alpha_s_stderr: f64,
    pub s_phi_ref: f64,
}

/// Ensemble-mean S_Φ(ω) at one temperature without density or fits.
pub fn mean_noise_at(cfg: &EnsembleConfig, temperature: f64, omega: f64) -> Result<f64> {
    let inst = cfg.instance.at_temperature(temperature);
    let seeds = cfg.seeds();
    let vals = cfg.exec.try_map(cfg.m, |k| {
        inst.run(seeds[k])
            .map(|o| flux_noise(&o.weights, temperature, &[omega], Exec::Sequential).s_phi[0])
            .map_err(|e| Error::Instance {
                index: k,
                seed: seeds[k],
                source: Box::new(e),
            })
    })?;
    Ok(mean(&vals))
}

/// One ensemble per temperature with the same instance seeds, so the
/// vacancy and Γ draws are shared across the sweep.
pub fn temperature_sweep(
    cfg: &EnsembleConfig,
    temperatures: &[f64],
    reference: AmplitudeReference,
) -> Result<(Vec<SweepRow>, Vec<EnsembleResult>)> {
    let s_ref = mean_noise_at(cfg, reference.t_ref, reference.omega_ref)?;
    let mut rows = Vec::with_capacity(temperatures.len());
    let mut results = Vec::with_capacity(temperatures.len());
    for &t in temperatures {
        let c = EnsembleConfig {
            instance: cfg.instance.at_temperature(t),
            ..cfg.clone()
        };
        let r = ensemble_run(&c)?;
        let s = r.noise(&[reference.omega_ref], cfg.exec).s_phi[0];
        rows.push(SweepRow {
            temperature: t,
            alpha: r.alpha_rho.alpha,
            alpha_stderr: r.alpha_rho_stderr,
            amplitude: s / s_ref,
            r2: r.alpha_rho.r2,
            alpha_s: r.alpha_s.as_ref().map(|f| f.alpha),
            alpha_s_stderr: r.alpha_s_stderr,
            s_phi_ref: s,
        });
        results.push(r);
    }
    Ok((rows, results))
}
