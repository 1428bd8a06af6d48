//! JSON run configuration.
//!
//! `solve` needs `grid`, `q`, and `problem`; `pipeline` additionally needs
//! `weiss`, `strata`, and `tree`. All formats are documented in
//! `docs/formats.md`.

use onephase::corona::TreeConfig;
use onephase::error::{Error, Result};
use onephase::field::{GridSpec, QField};
use onephase::solver::generators::BoundaryKind;
use onephase::solver::{Problem, Seed};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub q: QConfig,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub weiss: Option<WeissConfig>,
    #[serde(default)]
    pub strata: Option<StrataConfig>,
    #[serde(default)]
    pub tree: Option<CoronaConfig>,
    /// Seed for synthetic data generators only; all algorithms are
    /// deterministic.
    #[serde(default)]
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub origin: Vec<f64>,
    pub extent: Vec<f64>,
    pub cells_per_axis: Vec<usize>,
}

impl GridConfig {
    pub fn build(&self) -> Result<GridSpec> {
        GridSpec::new(self.origin.clone(), self.extent.clone(), self.cells_per_axis.clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QConfig {
    Constant { value: f64 },
    /// `base + amplitude * sin(2 pi x_0 / wavelength) * cos(2 pi x_1 / wavelength)`,
    /// positive as long as amplitude < base.
    Sinusoidal { base: f64, amplitude: f64, wavelength: f64, alpha: f64 },
}

impl QConfig {
    pub fn build(&self, spec: &GridSpec) -> Result<QField> {
        match self {
            QConfig::Constant { value } => QField::constant(spec.clone(), *value),
            QConfig::Sinusoidal { base, amplitude, wavelength, alpha } => {
                if !(*amplitude >= 0.0 && amplitude < base) {
                    return Err(Error::ConfigInvariant(
                        "sinusoidal Q needs 0 <= amplitude < base".into(),
                    ));
                }
                let (b, a, w) = (*base, *amplitude, *wavelength);
                let tau = 2.0 * std::f64::consts::PI / w;
                QField::from_fn(spec.clone(), *alpha, move |x| {
                    let second = if x.len() > 1 { (tau * x[1]).cos() } else { 1.0 };
                    b + a * (tau * x[0]).sin() * second
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedConfig {
    HarmonicExtension,
    Zero,
    /// Use the sampled boundary generator field itself as the initial state.
    GeneratorField,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig::HarmonicExtension
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub boundary: BoundaryKind,
    #[serde(default)]
    pub seed: SeedConfig,
    pub max_sweeps: usize,
    pub energy_tol: f64,
    /// When set, `solve` fails (exit 1) if the harmonic residual of the
    /// converged field exceeds this bound.
    #[serde(default)]
    pub audit_residual_tol: Option<f64>,
}

impl ProblemConfig {
    pub fn build(&self, spec: &GridSpec, q: &QField) -> (Problem, Seed) {
        let data = onephase::solver::generators::sample(spec, &self.boundary);
        let seed = match self.seed {
            SeedConfig::HarmonicExtension => Seed::HarmonicExtension,
            SeedConfig::Zero => Seed::Zero,
            SeedConfig::GeneratorField => Seed::Field(data.clone()),
        };
        (
            Problem {
                spec: spec.clone(),
                q: q.clone(),
                boundary_data: data,
                max_sweeps: self.max_sweeps,
                energy_tol: self.energy_tol,
            },
            seed,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeissConfig {
    /// Ascending profile radii, also used for classification.
    pub radii: Vec<f64>,
    #[serde(default = "default_c0")]
    pub c0: f64,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    #[serde(default = "default_tol_mono")]
    pub tol_mono_coeff: f64,
    #[serde(default = "default_margin")]
    pub margin_coeff: f64,
    /// How many free boundary points to profile (nearest the domain center).
    #[serde(default = "default_weiss_points")]
    pub max_points: usize,
}

fn default_c0() -> f64 {
    1.0
}
fn default_eps0() -> f64 {
    onephase::weiss::DEFAULT_EPS0
}
fn default_tol_mono() -> f64 {
    8.0
}
fn default_margin() -> f64 {
    0.25
}
fn default_weiss_points() -> usize {
    16
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrataConfig {
    pub k: usize,
    pub eps: f64,
    /// Bottom scale of the symmetry ladder (clamped to 8h and eta*R at run
    /// time; the effective value is recorded in the report).
    pub r: f64,
    #[serde(default = "default_scale_factor")]
    pub scale_factor: f64,
    #[serde(default = "default_plane_samples")]
    pub plane_samples: usize,
    /// How many free boundary samples to scan.
    #[serde(default = "default_strata_points")]
    pub max_points: usize,
}

fn default_scale_factor() -> f64 {
    0.5
}
fn default_plane_samples() -> usize {
    onephase::strata::DEFAULT_PLANE_SAMPLES
}
fn default_strata_points() -> usize {
    48
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoronaConfig {
    #[serde(flatten)]
    pub tree: TreeConfig,
    pub domain_center: Vec<f64>,
    pub domain_radius: f64,
    /// Stop scale for the refinement pass (defaults to tree.stop_scale).
    #[serde(default)]
    pub refine_stop_scale: Option<f64>,
}
