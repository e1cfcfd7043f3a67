//! Cost functions on Tⁿ × Tⁿ with analytic jets through third order, the cost
//! exponential, and twist/cut-locus guards.
//!
//! Sign conventions come from the contact equation `η_i + c_i(x, T) = 0`:
//! `c_i` is the x-gradient and `b = −∂²c/∂x∂x̄`.

use crate::error::{Error, Result};
use crate::grid::{torus_displacement, wrap_coordinate};
use crate::real::{lit, to_f64, Real};
use crate::small::{det, inverse, mat_vec, sym_eigenvalues, zero_mat, zero_vec, Mat3, Vec3};

/// Admissible displacement window, kept away from the half-period cut locus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwistWindow<R> {
    pub max_disp: R,
    pub margin: R,
}

impl<R: Real> TwistWindow<R> {
    pub fn new(max_disp: R, margin: R) -> Result<Self> {
        let half = lit::<R>(0.5);
        if !(max_disp > R::zero() && max_disp < half && margin > R::zero() && max_disp + margin <= half) {
            return Err(Error::InvalidCost(format!(
                "twist window needs 0 < max_disp < 1/2, margin > 0, max_disp + margin <= 1/2 (got {max_disp}, {margin})"
            )));
        }
        Ok(Self { max_disp, margin })
    }

    /// Largest admissible per-axis displacement magnitude before the cut-locus guard fires.
    pub fn cut_bound(&self) -> R {
        lit::<R>(0.5) - self.margin
    }
}

impl<R: Real> Default for TwistWindow<R> {
    fn default() -> Self {
        Self { max_disp: lit(0.4), margin: lit(0.05) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostKind<R> {
    /// `½ |torus_displacement(x, x̄)|²`
    QuadraticPeriodic,
    /// Quadratic plus `ε ∏_a cos(2π k_a (x_a − x̄_a)) + ε_s cos(2π k·x) cos(2π k·x̄)`.
    PerturbedQuadratic { epsilon: R, freq: Vec<i32>, separable: R },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostModel<R> {
    pub kind: CostKind<R>,
    pub window: TwistWindow<R>,
}

/// All cost derivatives at a point pair.
///
/// Third-order entries: `b_x[i][s][j] = ∂_{x_j} b_{is}`,
/// `b_xbar[i][s][p] = ∂_{x̄_p} b_{is}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostJet<R> {
    pub c: R,
    pub c_x: Vec3<R>,
    pub c_xbar: Vec3<R>,
    pub c_xx: Mat3<R>,
    pub b: Mat3<R>,
    pub b_inv: Mat3<R>,
    pub b_x: [Mat3<R>; 3],
    pub b_xbar: [Mat3<R>; 3],
    pub det_b: R,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TwistReport {
    pub samples: usize,
    pub min_det_b: f64,
    pub min_eigenvalue: f64,
    pub pass: bool,
}

/// Derivative of `cos(q t)` of order `m`.
fn cos_derivative<R: Real>(q: R, t: R, m: usize) -> R {
    let (s, c) = (q * t).sin_cos();
    match m {
        0 => c,
        1 => -q * s,
        2 => -q * q * c,
        3 => q * q * q * s,
        _ => unreachable!(),
    }
}

impl<R: Real> CostModel<R> {
    pub fn quadratic() -> Self {
        Self { kind: CostKind::QuadraticPeriodic, window: TwistWindow::default() }
    }

    pub fn perturbed(epsilon: R, freq: Vec<i32>, separable: R) -> Result<Self> {
        if !(epsilon >= R::zero()) || !(separable >= R::zero()) {
            return Err(Error::InvalidCost("perturbation amplitudes must be non-negative".into()));
        }
        Ok(Self { kind: CostKind::PerturbedQuadratic { epsilon, freq, separable }, window: TwistWindow::default() })
    }

    pub fn with_window(mut self, window: TwistWindow<R>) -> Self {
        self.window = window;
        self
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, CostKind::QuadraticPeriodic)
    }

    /// Checks that the model is usable on an `n`-dimensional torus.
    pub fn validate_for_dim(&self, n: usize) -> Result<()> {
        if let CostKind::PerturbedQuadratic { freq, .. } = &self.kind {
            if freq.len() != n {
                return Err(Error::InvalidCost(format!("frequency vector has {} entries, grid dim is {n}", freq.len())));
            }
        }
        Ok(())
    }

    fn check_window(&self, d: &Vec3<R>, n: usize) -> Result<()> {
        let bound = self.window.cut_bound();
        for &da in d.iter().take(n) {
            if !(da.abs() < bound) {
                return Err(Error::CutLocus { displacement: to_f64(da), margin: to_f64(self.window.margin) });
            }
        }
        Ok(())
    }

    /// Cost value at `(x, x + d)` with `d` already the minimal displacement.
    pub fn value_at_displacement(&self, n: usize, x: &Vec3<R>, d: &Vec3<R>) -> R {
        let half = lit::<R>(0.5);
        let mut c = half * (0..n).map(|a| d[a] * d[a]).fold(R::zero(), |s, v| s + v);
        if let CostKind::PerturbedQuadratic { epsilon, freq, separable } = &self.kind {
            let two_pi = R::TAU();
            let mut prod = R::one();
            let (mut alpha, mut beta) = (R::zero(), R::zero());
            for a in 0..n {
                let q = two_pi * lit(freq[a] as f64);
                prod = prod * (q * d[a]).cos();
                alpha = alpha + q * x[a];
                beta = beta + q * (x[a] + d[a]);
            }
            c = c + *epsilon * prod + *separable * alpha.cos() * beta.cos();
        }
        c
    }

    /// Jet at `(x, x + d)` without window or singularity guards.
    pub fn raw_jet(&self, n: usize, x: &Vec3<R>, d: &Vec3<R>) -> CostJet<R> {
        let mut jet = CostJet {
            c: self.value_at_displacement(n, x, d),
            c_x: zero_vec(),
            c_xbar: zero_vec(),
            c_xx: zero_mat(),
            b: zero_mat(),
            b_inv: zero_mat(),
            b_x: [zero_mat(); 3],
            b_xbar: [zero_mat(); 3],
            det_b: R::zero(),
        };
        for a in 0..n {
            jet.c_x[a] = -d[a];
            jet.c_xbar[a] = d[a];
            jet.c_xx[a][a] = R::one();
            jet.b[a][a] = R::one();
        }
        if let CostKind::PerturbedQuadratic { epsilon, freq, separable } = &self.kind {
            let eps = *epsilon;
            let two_pi = R::TAU();
            let q: Vec<R> = freq.iter().map(|&k| two_pi * lit(k as f64)).collect();
            // product term, a function of δ = x − x̄ = −d
            let delta: Vec<R> = (0..n).map(|a| -d[a]).collect();
            let partial = |idx: &[usize]| -> R {
                let mut counts = [0usize; 3];
                for &i in idx {
                    counts[i] += 1;
                }
                (0..n).fold(R::one(), |p, a| p * cos_derivative(q[a], delta[a], counts[a]))
            };
            for i in 0..n {
                jet.c_x[i] = jet.c_x[i] + eps * partial(&[i]);
                jet.c_xbar[i] = jet.c_xbar[i] - eps * partial(&[i]);
                for j in 0..n {
                    jet.c_xx[i][j] = jet.c_xx[i][j] + eps * partial(&[i, j]);
                    jet.b[i][j] = jet.b[i][j] + eps * partial(&[i, j]);
                    for k in 0..n {
                        jet.b_x[i][j][k] = jet.b_x[i][j][k] + eps * partial(&[i, j, k]);
                        jet.b_xbar[i][j][k] = jet.b_xbar[i][j][k] - eps * partial(&[i, j, k]);
                    }
                }
            }
            let es = *separable;
            if es != R::zero() {
                let (mut alpha, mut beta) = (R::zero(), R::zero());
                for a in 0..n {
                    alpha = alpha + q[a] * x[a];
                    beta = beta + q[a] * (x[a] + d[a]);
                }
                let (sa, ca) = alpha.sin_cos();
                let (sb, cb) = beta.sin_cos();
                for i in 0..n {
                    jet.c_x[i] = jet.c_x[i] - es * q[i] * sa * cb;
                    jet.c_xbar[i] = jet.c_xbar[i] - es * q[i] * ca * sb;
                    for j in 0..n {
                        jet.c_xx[i][j] = jet.c_xx[i][j] - es * q[i] * q[j] * ca * cb;
                        jet.b[i][j] = jet.b[i][j] - es * q[i] * q[j] * sa * sb;
                        for k in 0..n {
                            jet.b_x[i][j][k] = jet.b_x[i][j][k] - es * q[i] * q[j] * q[k] * ca * sb;
                            jet.b_xbar[i][j][k] = jet.b_xbar[i][j][k] - es * q[i] * q[j] * q[k] * sa * cb;
                        }
                    }
                }
            }
        }
        jet.det_b = det(&jet.b, n);
        if let Some(inv) = inverse(&jet.b, n) {
            jet.b_inv = inv;
        }
        jet
    }

    /// Guarded jet at `(x, x + d)`.
    pub fn jet_at_displacement(&self, n: usize, x: &Vec3<R>, d: &Vec3<R>) -> Result<CostJet<R>> {
        self.check_window(d, n)?;
        let jet = self.raw_jet(n, x, d);
        if !(jet.det_b > lit(1e-10)) {
            return Err(Error::SingularJet { det: to_f64(jet.det_b) });
        }
        Ok(jet)
    }

    /// Jet at an arbitrary point pair, using the minimal periodic displacement.
    pub fn cost_jet(&self, x: &[R], xbar: &[R]) -> Result<CostJet<R>> {
        let n = x.len();
        let disp = torus_displacement(x, xbar);
        let mut xv = zero_vec();
        let mut dv = zero_vec();
        xv[..n].copy_from_slice(&x[..n]);
        dv[..n].copy_from_slice(&disp[..n]);
        self.jet_at_displacement(n, &xv, &dv)
    }

    /// Cost exponential: the displacement `d` with `η + c_x(x, x + d) = 0`.
    ///
    /// Returns `(x̄ wrapped to [0,1)^n, d)`.
    pub fn cexp(&self, n: usize, x: &Vec3<R>, eta: &Vec3<R>) -> Result<(Vec3<R>, Vec3<R>)> {
        let mut d = *eta;
        for a in n..3 {
            d[a] = R::zero();
        }
        self.check_window(&d, n)?;
        if !self.is_quadratic() {
            let tol = lit::<R>(1e-13);
            let mut converged = false;
            let mut resid = R::infinity();
            for _ in 0..50 {
                let jet = self.jet_at_displacement(n, x, &d)?;
                let mut f = zero_vec();
                for i in 0..n {
                    f[i] = eta[i] + jet.c_x[i];
                }
                resid = (0..n).fold(R::zero(), |m, i| m.max(f[i].abs()));
                if resid <= tol {
                    converged = true;
                    break;
                }
                let step = mat_vec(&jet.b_inv, &f, n);
                for a in 0..n {
                    d[a] = d[a] + step[a];
                }
                self.check_window(&d, n)?;
            }
            if !converged {
                return Err(Error::NoConvergence { what: "cost exponential", iterations: 50, residual: to_f64(resid) });
            }
        }
        let mut xbar = zero_vec();
        for a in 0..n {
            xbar[a] = wrap_coordinate(x[a] + d[a]);
        }
        Ok((xbar, d))
    }

    /// Samples `(x, x̄)` pairs inside the window on a Halton sequence and
    /// reports the smallest `det b` and smallest eigenvalue of `b`.
    pub fn check_twist_window(&self, n: usize, window: &TwistWindow<R>, samples: usize) -> TwistReport {
        const PRIMES: [u64; 6] = [2, 3, 5, 7, 11, 13];
        let mut min_det = f64::INFINITY;
        let mut min_eig = f64::INFINITY;
        for s in 1..=samples.max(1) {
            let mut x = zero_vec();
            let mut d = zero_vec();
            for a in 0..n {
                x[a] = lit(halton(s as u64, PRIMES[a]));
                let u = lit::<R>(halton(s as u64, PRIMES[n + a]));
                d[a] = (lit::<R>(2.0) * u - R::one()) * window.max_disp;
            }
            let jet = self.raw_jet(n, &x, &d);
            min_det = min_det.min(to_f64(jet.det_b));
            min_eig = min_eig.min(to_f64(sym_eigenvalues(&jet.b, n)[0]));
        }
        TwistReport { samples: samples.max(1), min_det_b: min_det, min_eigenvalue: min_eig, pass: min_eig >= 1e-8 }
    }
}

/// Radical inverse of `index` in base `base`.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(a: &[f64]) -> Vec3<f64> {
        let mut out = [0.0; 3];
        out[..a.len()].copy_from_slice(a);
        out
    }

    #[test]
    fn quadratic_jet_example() {
        let m = CostModel::<f64>::quadratic();
        let jet = m.cost_jet(&[0.2, 0.2], &[0.3, 0.2]).unwrap();
        assert!((jet.c - 0.005).abs() < 1e-15);
        assert_eq!(jet.b, crate::small::identity::<f64>(2));
        assert!((jet.c_x[0] + 0.1).abs() < 1e-15);
        let same = m.cost_jet(&[0.7, 0.1], &[0.7, 0.1]).unwrap();
        assert_eq!(same.c, 0.0);
        assert_eq!(same.c_x, [0.0; 3]);
    }

    #[test]
    fn cut_locus_guard() {
        let m = CostModel::<f64>::quadratic();
        assert!(matches!(m.cost_jet(&[0.0, 0.0], &[0.47, 0.0]), Err(Error::CutLocus { .. })));
        assert!(matches!(m.cexp(2, &v(&[0.1, 0.1]), &v(&[0.46, 0.0])), Err(Error::CutLocus { .. })));
    }

    #[test]
    fn quadratic_cexp_is_translation() {
        let m = CostModel::<f64>::quadratic();
        let (xbar, d) = m.cexp(2, &v(&[0.5, 0.5]), &v(&[0.1, 0.0])).unwrap();
        assert!((xbar[0] - 0.6).abs() < 1e-15 && xbar[1] == 0.5);
        assert_eq!(d, v(&[0.1, 0.0]));
        let (xbar, _) = m.cexp(2, &v(&[0.95, 0.5]), &v(&[0.1, 0.0])).unwrap();
        assert!((xbar[0] - 0.05).abs() < 1e-14);
    }

    #[test]
    fn cexp_of_zero_is_identity_without_separable_term() {
        let p = CostModel::perturbed(0.01, vec![1, 1], 0.0).unwrap();
        let x = v(&[0.3, 0.8]);
        let (xbar, d) = p.cexp(2, &x, &[0.0; 3]).unwrap();
        assert_eq!(d, [0.0; 3]);
        assert_eq!(xbar, x);
    }

    #[test]
    fn perturbed_cexp_solves_contact_equation() {
        let p = CostModel::perturbed(0.01, vec![1, 1, 1], 0.004).unwrap();
        let x = v(&[0.3, 0.8, 0.55]);
        let eta = v(&[0.07, -0.12, 0.2]);
        let (_, d) = p.cexp(3, &x, &eta).unwrap();
        let jet = p.jet_at_displacement(3, &x, &d).unwrap();
        for i in 0..3 {
            assert!((eta[i] + jet.c_x[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn twist_window_reports() {
        let w = TwistWindow::default();
        let q = CostModel::<f64>::quadratic().check_twist_window(2, &w, 64);
        assert_eq!(q.min_eigenvalue, 1.0);
        assert!(q.pass);
        let z = CostModel::perturbed(0.0, vec![1, 1], 0.0).unwrap().check_twist_window(2, &w, 64);
        assert_eq!(z.min_eigenvalue, 1.0);
        let huge = CostModel::perturbed(10.0, vec![1, 1], 0.0).unwrap().check_twist_window(2, &w, 64);
        assert!(!huge.pass);
    }

    #[test]
    fn window_validation() {
        assert!(TwistWindow::new(0.4, 0.05).is_ok());
        assert!(TwistWindow::new(0.48, 0.05).is_err());
        assert!(TwistWindow::new(0.0, 0.05).is_err());
    }

    fn pair_jet(m: &CostModel<f64>, x: Vec3<f64>, xb: Vec3<f64>) -> CostJet<f64> {
        let d = [xb[0] - x[0], xb[1] - x[1], xb[2] - x[2]];
        m.raw_jet(3, &x, &d)
    }

    #[test]
    fn jets_match_finite_differences() {
        let m = CostModel::perturbed(0.01, vec![1, 2, 1], 0.003).unwrap();
        let x = [0.31, 0.62, 0.17];
        let xb = [0.38, 0.55, 0.29];
        let j0 = pair_jet(&m, x, xb);
        let h = 1e-5;
        for k in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let (jp, jm) = (pair_jet(&m, xp, xb), pair_jet(&m, xm, xb));
            assert!(((jp.c - jm.c) / (2.0 * h) - j0.c_x[k]).abs() < 1e-8);
            let mut bp = xb;
            let mut bm = xb;
            bp[k] += h;
            bm[k] -= h;
            let (kp, km) = (pair_jet(&m, x, bp), pair_jet(&m, x, bm));
            assert!(((kp.c - km.c) / (2.0 * h) - j0.c_xbar[k]).abs() < 1e-8);
            for i in 0..3 {
                assert!(((jp.c_x[i] - jm.c_x[i]) / (2.0 * h) - j0.c_xx[i][k]).abs() < 1e-7);
                // b_is = -∂_{x̄_s} c_i
                assert!((-(kp.c_x[i] - km.c_x[i]) / (2.0 * h) - j0.b[i][k]).abs() < 1e-7);
                for s in 0..3 {
                    assert!(((jp.b[i][s] - jm.b[i][s]) / (2.0 * h) - j0.b_x[i][s][k]).abs() < 1e-5);
                    assert!(((kp.b[i][s] - km.b[i][s]) / (2.0 * h) - j0.b_xbar[i][s][k]).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn twist_threshold_bisection() {
        // product term with k = (1,1): b = I + ε Hess, smallest Hessian eigenvalue −(2π)²
        let w = TwistWindow::default();
        let pass = |eps: f64| CostModel::perturbed(eps, vec![1, 1], 0.0).unwrap().check_twist_window(2, &w, 4000).pass;
        let (mut lo, mut hi) = (0.0, 0.1);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if pass(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let exact = 1.0 / (4.0 * std::f64::consts::PI * std::f64::consts::PI);
        assert!(lo >= exact * 0.999 && lo <= exact * 1.01, "{lo} vs {exact}");
    }
}
