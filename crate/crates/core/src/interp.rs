//! Periodic tensor-product cubic convolution (Keys, a = −1/2) with an analytic gradient.

use crate::grid::ScalarField;
use crate::real::{from_usize, lit, Real};
use crate::small::{zero_vec, Vec3};

fn keys_weight<R: Real>(t: R) -> (R, R) {
    let a = lit::<R>(-0.5);
    let s = t.abs();
    let sign = if t < R::zero() { -R::one() } else { R::one() };
    let (two, three, four, five, eight) = (lit::<R>(2.0), lit::<R>(3.0), lit::<R>(4.0), lit::<R>(5.0), lit::<R>(8.0));
    if s <= R::one() {
        let w = (a + two) * s * s * s - (a + three) * s * s + R::one();
        let dw = three * (a + two) * s * s - two * (a + three) * s;
        (w, sign * dw)
    } else if s < two {
        let w = a * s * s * s - five * a * s * s + eight * a * s - four * a;
        let dw = three * a * s * s - lit::<R>(10.0) * a * s + eight * a;
        (w, sign * dw)
    } else {
        (R::zero(), R::zero())
    }
}

/// Value and gradient of the periodic cubic interpolant of `f` at `p`.
pub fn interpolate<R: Real>(f: &ScalarField<R>, p: &Vec3<R>) -> (R, Vec3<R>) {
    let grid = f.grid();
    let n = grid.dim();
    let mut base = [0isize; 3];
    let mut w = [[R::zero(); 4]; 3];
    let mut dw = [[R::zero(); 4]; 3];
    for a in 0..n {
        let size = grid.sizes()[a];
        let nn = from_usize::<R>(size);
        let u = p[a] * nn;
        let fl = u.floor();
        let frac = u - fl;
        base[a] = fl.to_i64().unwrap_or(0) as isize;
        for m in 0..4 {
            let (wv, dv) = keys_weight(frac - from_usize::<R>(m) + R::one());
            w[a][m] = wv;
            dw[a][m] = dv * nn;
        }
    }
    let vals = f.values();
    let mut value = R::zero();
    let mut grad = zero_vec();
    let count = 4usize.pow(n as u32);
    for flat in 0..count {
        let mut m = [0usize; 3];
        let mut rest = flat;
        let mut coords = [0usize; 3];
        for a in 0..n {
            m[a] = rest % 4;
            rest /= 4;
            let size = grid.sizes()[a] as isize;
            coords[a] = (base[a] + m[a] as isize - 1).rem_euclid(size) as usize;
        }
        let v = vals[grid.index(&coords[..n])];
        let mut prod = R::one();
        for a in 0..n {
            prod = prod * w[a][m[a]];
        }
        value = value + prod * v;
        for g in 0..n {
            let mut pg = R::one();
            for a in 0..n {
                pg = pg * if a == g { dw[a][m[a]] } else { w[a][m[a]] };
            }
            grad[g] = grad[g] + pg * v;
        }
    }
    (value, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use std::f64::consts::TAU;

    #[test]
    fn reproduces_nodes() {
        let g = PeriodicGrid::new(&[8, 10]).unwrap();
        let f = ScalarField::from_fn(&g, |p: &Vec3<f64>| (TAU * p[0]).sin() + 0.3 * (TAU * p[1]).cos() ).unwrap();
        for i in 0..g.len() {
            let p = g.point::<f64>(i);
            assert!((interpolate(&f, &p).0 - f.values()[i]).abs() < 1e-14);
        }
        let shifted = [1.0 + g.point::<f64>(3)[0], g.point::<f64>(3)[1] - 1.0, 0.0];
        assert!((interpolate(&f, &shifted).0 - f.values()[3]).abs() < 1e-13);
    }

    #[test]
    fn converges_with_gradient() {
        let mut errs = Vec::new();
        for &n in &[32usize, 64] {
            let g = PeriodicGrid::new(&[n, n, 8]).unwrap();
            let f = ScalarField::from_fn(&g, |p: &Vec3<f64>| (TAU * p[0]).sin() * (TAU * p[1]).cos()).unwrap();
            let (mut ev_max, mut eg_max) = (0.0f64, 0.0f64);
            for s in 0..200 {
                let p = [crate::cost::halton(s + 1, 2), crate::cost::halton(s + 1, 3), 0.0];
                let (v, gr) = interpolate(&f, &p);
                let ev = (TAU * p[0]).sin() * (TAU * p[1]).cos();
                let eg = TAU * (TAU * p[0]).cos() * (TAU * p[1]).cos();
                ev_max = ev_max.max((v - ev).abs());
                eg_max = eg_max.max((gr[0] - eg).abs());
            }
            errs.push((ev_max, eg_max));
        }
        assert!(errs[1].0 < 2e-4 && errs[1].1 < 2e-2);
        assert!(errs[0].0 / errs[1].0 > 6.0);
        assert!(errs[0].1 / errs[1].1 > 3.0);
    }

    #[test]
    fn gradient_matches_finite_difference_of_interpolant() {
        let g = PeriodicGrid::new(&[16, 12]).unwrap();
        let f = ScalarField::from_fn(&g, |p: &Vec3<f64>| (TAU * (p[0] + 2.0 * p[1])).cos()).unwrap();
        let p = [0.41, 0.23, 0.0];
        let (_, gr) = interpolate(&f, &p);
        let h = 1e-6;
        for a in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[a] += h;
            pm[a] -= h;
            let fd = (interpolate(&f, &pp).0 - interpolate(&f, &pm).0) / (2.0 * h);
            assert!((fd - gr[a]).abs() < 1e-6);
        }
    }
}
