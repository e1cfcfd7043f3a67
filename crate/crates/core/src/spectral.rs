//! FFT inverse of the flat compact Laplacian on a periodic grid, used as a
//! preconditioner for the Newton systems.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::grid::PeriodicGrid;
use crate::real::{lit, to_f64, Real};

pub struct PoissonPreconditioner {
    grid: PeriodicGrid,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    /// reciprocal symbol per mode; the zero mode maps to itself
    inv_symbol: Vec<f64>,
}

impl std::fmt::Debug for PoissonPreconditioner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoissonPreconditioner").field("grid", &self.grid).finish()
    }
}

impl PoissonPreconditioner {
    /// `scale[a]` multiplies the second difference along axis `a`.
    pub fn new(grid: &PeriodicGrid, scale: &[f64]) -> Self {
        Self::shifted(grid, scale, 0.0)
    }

    /// Inverse of `Δ − shift` for `shift > 0`; with `shift = 0` the zero mode passes through.
    pub fn shifted(grid: &PeriodicGrid, scale: &[f64], shift: f64) -> Self {
        let n = grid.dim();
        let mut planner = FftPlanner::new();
        let forward = grid.sizes().iter().map(|&s| planner.plan_fft_forward(s)).collect();
        let inverse = grid.sizes().iter().map(|&s| planner.plan_fft_inverse(s)).collect();
        let inv_symbol = (0..grid.len())
            .map(|i| {
                let c = grid.coords(i);
                let mut s = 0.0;
                for a in 0..n {
                    let h: f64 = grid.spacing(a);
                    let t = (std::f64::consts::PI * c[a] as f64 / grid.sizes()[a] as f64).sin();
                    s -= scale[a] * 4.0 * t * t / (h * h);
                }
                if shift == 0.0 {
                    if i == 0 { 1.0 } else { 1.0 / s }
                } else {
                    1.0 / (s - shift)
                }
            })
            .collect();
        Self { grid: grid.clone(), forward, inverse, inv_symbol }
    }

    fn transform(&self, buf: &mut [Complex<f64>], plans: &[Arc<dyn Fft<f64>>]) {
        let g = &self.grid;
        for (a, plan) in plans.iter().enumerate() {
            let size = g.sizes()[a];
            let mut line = vec![Complex::new(0.0, 0.0); size];
            for start in 0..g.len() {
                if g.coords(start)[a] != 0 {
                    continue;
                }
                let mut idx = start;
                for v in line.iter_mut() {
                    *v = buf[idx];
                    idx = g.shift(idx, a, 1);
                }
                plan.process(&mut line);
                let mut idx = start;
                for v in &line {
                    buf[idx] = *v;
                    idx = g.shift(idx, a, 1);
                }
            }
        }
    }

    pub fn apply<R: Real>(&self, x: &[R], y: &mut [R]) {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(to_f64(v), 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        for (b, &s) in buf.iter_mut().zip(&self.inv_symbol) {
            *b *= s;
        }
        self.transform(&mut buf, &self.inverse);
        let norm = 1.0 / self.grid.len() as f64;
        for (o, b) in y.iter_mut().zip(&buf) {
            *o = lit(b.re * norm);
        }
    }
}
