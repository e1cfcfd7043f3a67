//! Run configuration: a single JSON document, validated before any dispatch.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cost::{CostModel, TwistWindow};
use crate::density::{DensityPair, DensitySpec};
use crate::error::{Error, Result};
use crate::grid::PeriodicGrid;
use crate::moduli::ContinuationSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub max_disp: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CostSpec {
    Quadratic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<WindowSpec>,
    },
    PerturbedQuadratic {
        epsilon: f64,
        freq: Vec<i32>,
        #[serde(default)]
        separable: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<WindowSpec>,
    },
}

impl Default for CostSpec {
    fn default() -> Self {
        CostSpec::Quadratic { window: None }
    }
}

impl CostSpec {
    pub fn build(&self, n: usize) -> Result<CostModel<f64>> {
        let (model, window) = match self {
            CostSpec::Quadratic { window } => (CostModel::quadratic(), window),
            CostSpec::PerturbedQuadratic { epsilon, freq, separable, window } => {
                (CostModel::perturbed(*epsilon, freq.clone(), *separable)?, window)
            }
        };
        let model = match window {
            Some(w) => model.with_window(TwistWindow::new(w.max_disp, w.margin)?),
            None => model,
        };
        model.validate_for_dim(n)?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    #[serde(default)]
    pub cost: CostSpec,
    #[serde(default)]
    pub rho: DensitySpec,
    #[serde(default)]
    pub rhobar: DensitySpec,
    #[serde(default)]
    pub solver: ContinuationSettings,
    /// Cohomology coordinates of the base chart (zeros when absent).
    #[serde(default)]
    pub tau: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec { dim: 2, sizes: vec![32, 32] },
            cost: CostSpec::default(),
            rho: DensitySpec::uniform(),
            rhobar: DensitySpec::uniform(),
            solver: ContinuationSettings::default(),
            tau: Vec::new(),
            seed: 0,
            out: default_out(),
        }
    }
}

/// Validated objects ready for dispatch.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub grid: PeriodicGrid,
    pub cost: CostModel<f64>,
    pub dens: DensityPair<f64>,
    pub tau: Vec<f64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// SHA-256 of the canonical serialization, so formatting does not matter.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical))
    }

    pub fn resolve(&self) -> Result<Resolved> {
        if self.grid.sizes.len() != self.grid.dim {
            return Err(Error::Config(format!(
                "grid.sizes has {} entries for dim {}",
                self.grid.sizes.len(),
                self.grid.dim
            )));
        }
        let grid = PeriodicGrid::new(&self.grid.sizes)?;
        let n = grid.dim();
        let cost = self.cost.build(n)?;
        let dens = DensityPair::from_specs(&grid, &self.rho, &self.rhobar)?;
        self.solver.validate()?;
        let tau = if self.tau.is_empty() { vec![0.0; n] } else { self.tau.clone() };
        if tau.len() != n {
            return Err(Error::Config(format!("tau has {} entries for dim {n}", tau.len())));
        }
        Ok(Resolved { grid, cost, dens, tau })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_resolves() {
        let cfg = RunConfig::from_json(r#"{"grid":{"dim":2,"sizes":[16,16]}}"#).unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.tau, vec![0.0, 0.0]);
        assert!(r.cost.is_quadratic());
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"{
            "grid": {"dim": 3, "sizes": [16, 16, 16]},
            "cost": {"kind": "perturbed-quadratic", "epsilon": 0.01, "freq": [1, 1, 0]},
            "rho": {"fourier": [{"k": [1, 0, 0], "cos": 0.2}], "base": 1.0},
            "solver": {"step": 0.01, "max_steps": 3},
            "tau": [0.1, 0.0, 0.0],
            "seed": 4,
            "out": "runs/a"
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        cfg.resolve().unwrap();
        let again = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.solver.newton_tol, ContinuationSettings::default().newton_tol);
    }

    #[test]
    fn rejects_bad_inputs() {
        let odd = RunConfig::from_json(r#"{"grid":{"dim":2,"sizes":[15,16]}}"#).unwrap();
        assert!(matches!(odd.resolve(), Err(Error::InvalidGrid(_))));
        let neg = RunConfig::from_json(r#"{"grid":{"dim":2,"sizes":[16,16]},"rho":{"base":-1.0}}"#).unwrap();
        assert!(matches!(neg.resolve(), Err(Error::InvalidDensity(_))));
        assert!(RunConfig::from_json(r#"{"grid":{"dim":2,"sizes":[16,16]},"colour":1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"grid":{"dim":2,"sizes":[16,16]},"cost":{"kind":"quadratic","eps":1}}"#).is_err());
        let tau = RunConfig::from_json(r#"{"grid":{"dim":2,"sizes":[16,16]},"tau":[0.1]}"#).unwrap();
        assert!(matches!(tau.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_ignores_formatting() {
        let a = RunConfig::from_json(r#"{"grid":{"dim":2,"sizes":[16,16]}}"#).unwrap();
        let b = RunConfig::from_json("{\n  \"grid\": { \"sizes\": [16, 16], \"dim\": 2 }\n}").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::from_json(r#"{"grid":{"dim":2,"sizes":[16,16]},"seed":1}"#).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
