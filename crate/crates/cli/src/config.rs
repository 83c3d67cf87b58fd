//! Strict TOML run configuration. Every section is optional and falls back
//! to the 20×20 open-x/periodic-y setup; unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use spinflux::analysis::{DensityOptions, EnsembleConfig, FitWindow, InstanceConfig};
use spinflux::couplings::Relaxation;
use spinflux::fluxnoise::{log_grid, DensityForm};
use spinflux::lattice::{Boundary, VirtualLattice};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Exact,
    Ha,
    Plane,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bc {
    Open,
    Periodic,
}

impl From<Bc> for Boundary {
    fn from(b: Bc) -> Self {
        match b {
            Bc::Open => Boundary::Open,
            Bc::Periodic => Boundary::Periodic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelaxKind {
    Zero,
    Uniform,
    Spin1f,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    Literal,
    PerMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub engine: Engine,
    pub temperature: f64,
    /// Temperatures of `sweep`.
    pub temperatures: Vec<f64>,
    pub sigma: f64,
    pub lattice: LatticeConfig,
    pub coupling: CouplingConfig,
    pub relaxation: RelaxationConfig,
    pub flux: FluxConfig,
    pub grid: GridConfig,
    pub ensemble: EnsembleSection,
    pub fit: FitConfig,
    pub reference: ReferenceConfig,
    pub ha: HaConfig,
    pub plane: PlaneConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub nx: usize,
    pub ny: usize,
    pub bc_x: Bc,
    pub bc_y: Bc,
    pub a0: f64,
    /// Occupancy file ('1'/'0' or '#'/'.' rows); replaces random vacancies.
    pub mask: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingConfig {
    /// Nearest-neighbour exchange in |J| units, positive for FM.
    pub j: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaxationConfig {
    pub kind: RelaxKind,
    /// Uniform Γ.
    pub gamma: f64,
    /// Spin-1/f Γ'_max.
    pub gamma_max: f64,
    pub lambda_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluxConfig {
    pub f0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_points: usize,
    pub density_points: usize,
    /// Density grid end as a multiple of the mean γ_max.
    pub density_span: f64,
    pub broadening_frac: f64,
    pub density_form: Form,
    /// Log points used for the α_S fit.
    pub noise_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub m: usize,
    pub master_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub lo_frac: f64,
    pub hi_frac: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    pub t_ref: f64,
    pub omega_ref: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HaConfig {
    /// Edge separation W; (nx − 1)·a0 when absent.
    pub width: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlaneConfig {
    /// D; T − σJ when absent.
    pub diffusion: Option<f64>,
    pub gamma_bar: f64,
    pub width: f64,
    /// N_sy; lattice.ny when absent.
    pub n_sy: Option<f64>,
    pub gamma_points: usize,
    /// Replace sin²(qW/2) by 1/2.
    pub half_sin2: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            engine: Engine::Exact,
            temperature: 4.0,
            temperatures: vec![1.5, 2.0, 3.0, 4.0, 6.0, 8.0],
            sigma: 1.0,
            lattice: LatticeConfig::default(),
            coupling: CouplingConfig::default(),
            relaxation: RelaxationConfig::default(),
            flux: FluxConfig::default(),
            grid: GridConfig::default(),
            ensemble: EnsembleSection::default(),
            fit: FitConfig::default(),
            reference: ReferenceConfig::default(),
            ha: HaConfig::default(),
            plane: PlaneConfig::default(),
        }
    }
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            nx: 20,
            ny: 20,
            bc_x: Bc::Open,
            bc_y: Bc::Periodic,
            a0: 1.0,
            mask: None,
        }
    }
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self { j: 1.0 }
    }
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        Self {
            kind: RelaxKind::Zero,
            gamma: 0.0,
            gamma_max: 100.0,
            lambda_max: 20.0,
        }
    }
}

impl Default for FluxConfig {
    fn default() -> Self {
        Self { f0: 1.0 }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        let d = DensityOptions::default();
        Self {
            omega_min: 1e-3,
            omega_max: 1e3,
            omega_points: 200,
            density_points: d.points,
            density_span: d.span,
            broadening_frac: d.broadening_frac,
            density_form: Form::Literal,
            noise_points: 120,
        }
    }
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            m: 512,
            master_seed: 1,
        }
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        let w = FitWindow::default();
        Self {
            lo_frac: w.lo_frac,
            hi_frac: w.hi_frac,
        }
    }
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            t_ref: 10.0,
            omega_ref: 0.1,
        }
    }
}

impl Default for PlaneConfig {
    fn default() -> Self {
        Self {
            diffusion: None,
            gamma_bar: 1e-6,
            width: 20.0,
            n_sy: None,
            gamma_points: 400,
            half_sin2: false,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be non-negative and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                Self::parse(&text).map_err(|e| match e {
                    CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                    e => e,
                })
            }
        }
    }

    /// Range checks on every field, run before any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        let l = &self.lattice;
        if l.nx < 2 || l.ny < 2 {
            return Err(CliError::Config(format!(
                "lattice must be at least 2x2, got {}x{}",
                l.nx, l.ny
            )));
        }
        positive("lattice.a0", l.a0)?;
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(CliError::Config(format!("sigma must lie in (0, 1], got {}", self.sigma)));
        }
        if !self.coupling.j.is_finite() {
            return Err(CliError::Config("coupling.j must be finite".into()));
        }
        positive("temperature", self.temperature)?;
        for &t in &self.temperatures {
            positive("temperatures[]", t)?;
        }
        let r = &self.relaxation;
        nonnegative("relaxation.gamma", r.gamma)?;
        positive("relaxation.gamma_max", r.gamma_max)?;
        nonnegative("relaxation.lambda_max", r.lambda_max)?;
        positive("flux.f0", self.flux.f0)?;
        let g = &self.grid;
        positive("grid.omega_min", g.omega_min)?;
        positive("grid.omega_max", g.omega_max)?;
        if g.omega_min >= g.omega_max {
            return Err(CliError::Config("grid.omega_min must be below grid.omega_max".into()));
        }
        if g.omega_points < 2 || g.density_points < 2 || g.noise_points < 2 {
            return Err(CliError::Config("grid point counts must be at least 2".into()));
        }
        positive("grid.density_span", g.density_span)?;
        positive("grid.broadening_frac", g.broadening_frac)?;
        if self.ensemble.m == 0 {
            return Err(CliError::Config("ensemble.m must be at least 1".into()));
        }
        positive("fit.lo_frac", self.fit.lo_frac)?;
        positive("fit.hi_frac", self.fit.hi_frac)?;
        if self.fit.lo_frac >= self.fit.hi_frac {
            return Err(CliError::Config("fit.lo_frac must be below fit.hi_frac".into()));
        }
        positive("reference.t_ref", self.reference.t_ref)?;
        positive("reference.omega_ref", self.reference.omega_ref)?;
        if let Some(w) = self.ha.width {
            positive("ha.width", w)?;
        }
        let p = &self.plane;
        if let Some(d) = p.diffusion {
            positive("plane.diffusion", d)?;
        }
        nonnegative("plane.gamma_bar", p.gamma_bar)?;
        positive("plane.width", p.width)?;
        if let Some(n) = p.n_sy {
            positive("plane.n_sy", n)?;
        }
        if p.gamma_points < 2 {
            return Err(CliError::Config("plane.gamma_points must be at least 2".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON echo. Output paths and thread counts
    /// are not part of the config, so they never change it.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex(&Sha256::digest(json))
    }

    pub fn relaxation(&self) -> Relaxation {
        let r = &self.relaxation;
        match r.kind {
            RelaxKind::Zero => Relaxation::Zero,
            RelaxKind::Uniform => Relaxation::Uniform { gamma: r.gamma },
            RelaxKind::Spin1f => Relaxation::Spin1f {
                gamma_max: r.gamma_max,
                lambda_max: r.lambda_max,
            },
        }
    }

    pub fn template(&self) -> Result<VirtualLattice, CliError> {
        let l = &self.lattice;
        Ok(
            VirtualLattice::new(l.nx, l.ny, l.bc_x.into(), l.bc_y.into())?
                .with_spacing(l.a0),
        )
    }

    /// The instance description; a mask file fixes the occupancy for every
    /// seed.
    pub fn instance(&self) -> Result<InstanceConfig, CliError> {
        let template = self.template()?;
        let (lattice, sigma) = match &self.lattice.mask {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                let occ = template.parse_mask(&text)?;
                (template.with_occupancy(occ)?, 1.0)
            }
            None => (template, self.sigma),
        };
        let mut inst = InstanceConfig::new(lattice, sigma, self.coupling.j, self.temperature)
            .with_relaxation(self.relaxation());
        inst.f0 = self.flux.f0;
        Ok(inst)
    }

    pub fn ensemble(&self, m: usize) -> Result<EnsembleConfig, CliError> {
        let mut cfg = EnsembleConfig::new(self.instance()?, m, self.ensemble.master_seed);
        cfg.density = DensityOptions {
            points: self.grid.density_points,
            span: self.grid.density_span,
            broadening_frac: self.grid.broadening_frac,
            form: self.density_form(),
        };
        cfg.window = FitWindow {
            lo_frac: self.fit.lo_frac,
            hi_frac: self.fit.hi_frac,
        };
        cfg.noise_points = self.grid.noise_points;
        Ok(cfg)
    }

    pub fn density_form(&self) -> DensityForm {
        match self.grid.density_form {
            Form::Literal => DensityForm::Literal,
            Form::PerMode => DensityForm::PerMode,
        }
    }

    pub fn omega(&self) -> Vec<f64> {
        log_grid(self.grid.omega_min, self.grid.omega_max, self.grid.omega_points)
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!((c.lattice.nx, c.lattice.ny), (20, 20));
        assert_eq!(c.ensemble.m, 512);
        assert_eq!(c.relaxation.lambda_max, 20.0);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = RunConfig::parse("[relaxation]\ngama = 0.1\n").unwrap_err();
        assert!(e.to_string().contains("gama"), "{e}");
        let e = RunConfig::parse("temprature = 3.0\n").unwrap_err();
        assert!(e.to_string().contains("temprature"), "{e}");
    }

    #[test]
    fn hash_tracks_semantic_fields_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.grid.broadening_frac = 0.2;
        assert_ne!(a.hash(), b.hash());
        let c = RunConfig::parse("sigma = 1.0\n[lattice]\nnx = 20\n").unwrap();
        assert_eq!(a.hash(), c.hash());
    }

    #[test]
    fn range_checks() {
        let bad = [
            "sigma = 0.0",
            "sigma = 1.5",
            "temperature = -1.0",
            "[grid]\nomega_min = 10.0\nomega_max = 1.0",
            "[ensemble]\nm = 0",
            "[fit]\nlo_frac = 0.2",
            "[lattice]\nnx = 1",
        ];
        for text in bad {
            let c = RunConfig::parse(text).unwrap();
            assert!(c.validate().is_err(), "{text}");
        }
    }
}
