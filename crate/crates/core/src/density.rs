//! Strictly positive unit-mass densities built from truncated Fourier series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{total, PeriodicGrid, ScalarField};
use crate::real::{lit, to_f64, Real};

pub const DENSITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierTerm {
    pub k: Vec<i32>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// `base + Σ (cos·cos 2πk·x + sin·sin 2πk·x)`, normalized to unit mass on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    #[serde(default)]
    pub fourier: Vec<FourierTerm>,
    #[serde(default = "one")]
    pub base: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for DensitySpec {
    fn default() -> Self {
        Self::uniform()
    }
}

impl DensitySpec {
    pub fn uniform() -> Self {
        Self { fourier: Vec::new(), base: 1.0 }
    }

    /// `base + amp·cos(2π k·x)`
    pub fn cosine(k: Vec<i32>, amp: f64) -> Self {
        Self { fourier: vec![FourierTerm { k, cos: amp, sin: 0.0 }], base: 1.0 }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.base > 0.0) || !self.base.is_finite() {
            return Err(Error::InvalidDensity(format!("base must be positive, got {}", self.base)));
        }
        for t in &self.fourier {
            if t.k.len() != n {
                return Err(Error::InvalidDensity(format!("wave vector {:?} does not match dimension {n}", t.k)));
            }
            if !t.cos.is_finite() || !t.sin.is_finite() {
                return Err(Error::InvalidDensity("non-finite Fourier coefficient".into()));
            }
        }
        Ok(())
    }

    /// Unnormalized value at a point.
    pub fn eval<R: Real>(&self, p: &[R]) -> R {
        let mut v = lit::<R>(self.base);
        for t in &self.fourier {
            let phase = t.k.iter().zip(p).fold(R::zero(), |s, (&k, &x)| s + lit::<R>(k as f64) * x) * R::TAU();
            v = v + lit::<R>(t.cos) * phase.cos() + lit::<R>(t.sin) * phase.sin();
        }
        v
    }

    pub fn sample<R: Real>(&self, grid: &PeriodicGrid) -> Result<ScalarField<R>> {
        self.validate(grid.dim())?;
        let n = grid.dim();
        let raw = ScalarField::from_fn(grid, |p| self.eval(&p[..n]))?;
        normalize(raw)
    }
}

/// Divides by the discrete total mass after checking positivity.
pub fn normalize<R: Real>(f: ScalarField<R>) -> Result<ScalarField<R>> {
    let mass = total(&f);
    if !(mass > R::zero()) {
        return Err(Error::InvalidDensity("total mass is not positive".into()));
    }
    let out = f.map(|v| v / mass);
    if !(to_f64(out.min()) >= DENSITY_FLOOR) {
        return Err(Error::InvalidDensity(format!("density minimum {:e} below {DENSITY_FLOOR:e}", to_f64(out.min()))));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityPair<R> {
    pub rho: ScalarField<R>,
    pub rhobar: ScalarField<R>,
}

impl<R: Real> DensityPair<R> {
    pub fn new(rho: ScalarField<R>, rhobar: ScalarField<R>) -> Result<Self> {
        if rho.grid() != rhobar.grid() {
            return Err(Error::InvalidDensity("ρ and ρ̄ live on different grids".into()));
        }
        for (name, f) in [("rho", &rho), ("rhobar", &rhobar)] {
            if !(to_f64(f.min()) >= DENSITY_FLOOR) {
                return Err(Error::InvalidDensity(format!("{name} minimum below {DENSITY_FLOOR:e}")));
            }
            let mass = to_f64(total(f));
            if (mass - 1.0).abs() > 1e-12_f64.max(1e3 * to_f64(R::epsilon())) {
                return Err(Error::InvalidDensity(format!("{name} has mass {mass}, expected 1")));
            }
        }
        Ok(Self { rho, rhobar })
    }

    pub fn uniform(grid: &PeriodicGrid) -> Self {
        Self { rho: ScalarField::constant(grid, R::one()), rhobar: ScalarField::constant(grid, R::one()) }
    }

    pub fn from_specs(grid: &PeriodicGrid, rho: &DensitySpec, rhobar: &DensitySpec) -> Result<Self> {
        Self::new(rho.sample(grid)?, rhobar.sample(grid)?)
    }
}
