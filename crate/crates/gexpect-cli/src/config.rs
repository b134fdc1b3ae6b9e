//! Run configuration: a single JSON document describing the model band, the
//! volatility grid, and the two engines. Every field has a default, so an
//! empty document `{}` is a complete configuration.

use std::path::Path;

use gexpect::pde::Grid1D;
use gexpect::tree::StateSpace;
use gexpect::{Error, GCoefficients, Result, ScenarioTree, VolatilityGrid, DEFAULT_NODE_CAP};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub coef: CoefConfig,
    pub grid: GridSpec,
    pub tree: TreeConfig,
    pub pde: PdeConfig,
    pub extension: ExtensionConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            coef: CoefConfig::default(),
            grid: GridSpec::default(),
            tree: TreeConfig::default(),
            pde: PdeConfig::default(),
            extension: ExtensionConfig::default(),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefConfig {
    pub sigma_low_sq: f64,
    pub sigma_high_sq: f64,
}

impl Default for CoefConfig {
    fn default() -> Self {
        Self {
            sigma_low_sq: 0.25,
            sigma_high_sq: 1.0,
        }
    }
}

/// Either explicit volatility values or a uniform count across the band.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Sigmas(Vec<f64>),
    Uniform { count: usize },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Uniform { count: 2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    pub n_steps: usize,
    pub horizon: f64,
    pub node_cap: usize,
    pub state_space: SpaceSpec,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            n_steps: 64,
            horizon: 1.0,
            node_cap: DEFAULT_NODE_CAP,
            state_space: SpaceSpec::Auto,
        }
    }
}

/// State space selection; `auto` picks the cheapest space the payoff allows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceSpec {
    Auto,
    Paths,
    Position,
    PositionQv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    /// Time step; `null` picks the largest monotone step.
    pub dt: Option<f64>,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self {
            x_min: -8.0,
            x_max: 8.0,
            dx: 0.02,
            dt: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtensionConfig {
    pub tolerance: f64,
    pub max_k: u64,
}

impl Default for ExtensionConfig {
    fn default() -> Self {
        Self {
            tolerance: gexpect::extension::DEFAULT_TREE_TOL,
            max_k: gexpect::extension::DEFAULT_MAX_K,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidParameter(format!("bad config {}: {e}", path.display())))
    }

    pub fn coefficients(&self) -> Result<GCoefficients> {
        GCoefficients::new(self.coef.sigma_low_sq, self.coef.sigma_high_sq)
    }

    pub fn volatility_grid(&self) -> Result<VolatilityGrid> {
        let coef = self.coefficients()?;
        match &self.grid {
            GridSpec::Sigmas(sigmas) => VolatilityGrid::new(coef, sigmas.clone()),
            GridSpec::Uniform { count } => VolatilityGrid::uniform(coef, *count),
        }
    }

    /// Builds the scenario tree, honoring an `--n` override and resolving
    /// `auto` to the cheapest state space `payoff_space` allows.
    pub fn build_tree(&self, n_override: Option<usize>, space: StateSpace) -> Result<ScenarioTree> {
        let n = n_override.unwrap_or(self.tree.n_steps);
        ScenarioTree::build_with(
            self.coefficients()?,
            self.volatility_grid()?,
            n,
            self.tree.horizon,
            space,
            self.tree.node_cap,
        )
    }

    pub fn resolve_space(&self, needed: StateSpace) -> StateSpace {
        match self.tree.state_space {
            SpaceSpec::Auto => needed,
            SpaceSpec::Paths => StateSpace::Paths,
            SpaceSpec::Position => StateSpace::Position,
            SpaceSpec::PositionQv => StateSpace::PositionQv,
        }
    }

    pub fn grid1d(&self) -> Result<Grid1D> {
        let coef = self.coefficients()?;
        match self.pde.dt {
            Some(dt) => Grid1D::new(self.pde.x_min, self.pde.x_max, self.pde.dx, dt),
            None => Grid1D::cfl_tight(coef, self.pde.x_min, self.pde.x_max, self.pde.dx),
        }
    }
}
