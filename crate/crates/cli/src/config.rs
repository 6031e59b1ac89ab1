//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use hjlab_core::estimates::{BernsteinCase, DecayModel, DEFAULT_TOLERANCE};
use hjlab_core::solver::SolverConfig;
use hjlab_core::{Domain, HamiltonianSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    /// Side lengths; one entry per dimension.
    pub lengths: Vec<f64>,
    /// Number of cells per axis; the grid has `cells + 1` nodes per axis.
    pub cells: Vec<usize>,
}

impl DomainSpec {
    pub fn interval(length: f64, cells: usize) -> Self {
        Self {
            lengths: vec![length],
            cells: vec![cells],
        }
    }

    pub fn rectangle(lengths: [f64; 2], cells: [usize; 2]) -> Self {
        Self {
            lengths: lengths.to_vec(),
            cells: cells.to_vec(),
        }
    }

    pub fn build(&self) -> hjlab_core::Result<Domain> {
        let nodes: Vec<usize> = self.cells.iter().map(|c| c + 1).collect();
        Domain::new(&self.lengths, &nodes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianParams {
    pub a: f64,
    pub p: f64,
}

impl HamiltonianParams {
    pub fn spec(&self) -> hjlab_core::Result<HamiltonianSpec> {
        HamiltonianSpec::new(self.a, self.p, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum InitialSpec {
    /// Random combination of Neumann cosine modes up to `modes` per axis.
    CosinePoly {
        modes: usize,
        seed: u64,
        osc: f64,
    },
    /// Continuous interpolant of random values on `knots` equal cells per
    /// axis; not Neumann-compatible.
    PiecewiseLinear {
        knots: usize,
        seed: u64,
        osc: f64,
    },
    Constant {
        value: f64,
    },
    /// `amplitude * prod_i cos(k_i π x_i / L_i)`
    CosineMode {
        wavenumbers: Vec<u32>,
        amplitude: f64,
    },
    /// JSON array of nodal values in row-major order.
    File {
        path: PathBuf,
    },
}

impl InitialSpec {
    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::CosinePoly { seed, .. } | Self::PiecewiseLinear { seed, .. } => Some(*seed),
            _ => None,
        }
    }

    pub fn set_seed(&mut self, new: u64) {
        if let Self::CosinePoly { seed, .. } | Self::PiecewiseLinear { seed, .. } = self {
            *seed = new;
        }
    }

    /// Whether the generated data already satisfy the discrete Neumann
    /// condition.
    pub fn neumann_compatible(&self) -> bool {
        matches!(
            self,
            Self::CosinePoly { .. } | Self::Constant { .. } | Self::CosineMode { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothingSpec {
    /// Index of the smoothing sequence applied to incompatible data.
    pub n: u32,
    /// Skip the smoothing and solve from the raw data.
    pub raw: bool,
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        Self { n: 6, raw: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckSpec {
    pub gradient_bounds: bool,
    pub poincare: bool,
    pub bernstein: bool,
    pub y_functional: bool,
    pub window_decay: bool,
    pub envelope: bool,
    pub fit: Option<DecayModel>,
    pub tolerance: f64,
    /// Relative tolerance of the `y` shape test, which only absorbs
    /// quadrature rounding.
    pub y_tolerance: f64,
    /// Bernstein margin as a fraction of the initial oscillation.
    pub bernstein_delta: f64,
    /// `None` picks `sqrt` for `p <= 1` and `power` otherwise.
    pub bernstein_case: Option<BernsteinCase>,
    /// Trailing fraction of the samples used by the rate fit.
    pub fit_window: f64,
    /// Minimum coefficient of determination of a passing fit.
    pub fit_r_squared: f64,
    /// `None` uses `N + 1`.
    pub poincare_q: Option<f64>,
    /// Evaluate trajectory checks only on samples up to the detected
    /// extinction time; later samples carry grid-scale residue only.
    pub until_extinction: bool,
}

impl Default for CheckSpec {
    fn default() -> Self {
        Self {
            gradient_bounds: true,
            poincare: true,
            bernstein: false,
            y_functional: true,
            window_decay: true,
            envelope: true,
            fit: None,
            tolerance: DEFAULT_TOLERANCE,
            y_tolerance: 1e-8,
            bernstein_delta: 0.01,
            bernstein_case: None,
            fit_window: 0.5,
            fit_r_squared: 0.99,
            poincare_q: None,
            until_extinction: true,
        }
    }
}

impl CheckSpec {
    pub fn none() -> Self {
        Self {
            gradient_bounds: false,
            poincare: false,
            bernstein: false,
            y_functional: false,
            window_decay: false,
            envelope: false,
            fit: None,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSearch {
    pub candidates: Vec<f64>,
    /// Time at which the implied oscillation bounds are compared; half the
    /// last checked sample time when unset.
    #[serde(default)]
    pub t_ref: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: String,
    pub domain: DomainSpec,
    pub hamiltonian: HamiltonianParams,
    #[serde(default)]
    pub solver: SolverConfig,
    pub initial: InitialSpec,
    #[serde(default)]
    pub smoothing: SmoothingSpec,
    #[serde(default)]
    pub checks: CheckSpec,
    /// Override of the free exponent of the decay machinery.
    #[serde(default)]
    pub beta: Option<f64>,
    /// Candidate exponents searched when `beta` is unset.
    #[serde(default)]
    pub beta_search: Option<BetaSearch>,
    /// Output root; overridden by the command line and the environment.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(
        id: impl Into<String>,
        domain: DomainSpec,
        a: f64,
        p: f64,
        initial: InitialSpec,
    ) -> Self {
        Self {
            id: id.into(),
            domain,
            hamiltonian: HamiltonianParams { a, p },
            solver: SolverConfig::default(),
            initial,
            smoothing: SmoothingSpec::default(),
            checks: CheckSpec::default(),
            beta: None,
            beta_search: None,
            out: None,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.id.is_empty() || self.id.contains(['/', '\\']) || self.id == "." || self.id == ".."
        {
            bail!("experiment id {:?} is not a valid directory name", self.id);
        }
        let d = self.domain.build().context("invalid domain")?;
        self.hamiltonian.spec().context("invalid hamiltonian")?;
        self.solver.validate().context("invalid solver config")?;
        if let InitialSpec::CosineMode { wavenumbers, .. } = &self.initial {
            if wavenumbers.len() != d.dim() {
                bail!(
                    "cosine_mode needs {} wavenumbers, got {}",
                    d.dim(),
                    wavenumbers.len()
                );
            }
        }
        let c = &self.checks;
        if !(c.tolerance >= 0.0 && c.y_tolerance >= 0.0) {
            bail!("tolerances must be non-negative");
        }
        if !(c.bernstein_delta > 0.0) {
            bail!("bernstein_delta {} must be positive", c.bernstein_delta);
        }
        if !(c.fit_window > 0.0 && c.fit_window <= 1.0) {
            bail!("fit_window {} must lie in (0, 1]", c.fit_window);
        }
        if self.smoothing.n == 0 {
            bail!("smoothing index must be at least 1");
        }
        if let Some(search) = &self.beta_search {
            if search.candidates.is_empty() {
                bail!("beta_search needs at least one candidate");
            }
            if search.t_ref.is_some_and(|t| !(t > 0.0)) {
                bail!("beta_search t_ref must be positive");
            }
        }
        Ok(())
    }
}

/// Contents of a batch file: either a bare list of experiments or an object
/// with a parallelism hint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchFile {
    List(Vec<ExperimentConfig>),
    WithOptions {
        #[serde(default)]
        parallelism: Option<usize>,
        experiments: Vec<ExperimentConfig>,
    },
}

impl BatchFile {
    pub fn into_parts(self) -> (Vec<ExperimentConfig>, Option<usize>) {
        match self {
            Self::List(v) => (v, None),
            Self::WithOptions {
                parallelism,
                experiments,
            } => (experiments, parallelism),
        }
    }
}

pub fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_batch(path: &Path) -> anyhow::Result<BatchFile> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
