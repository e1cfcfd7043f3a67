//! Transport cost and searches for violations of c-cyclical monotonicity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::grid::{integrate, torus_displacement, wrap_coordinate, ScalarField};
use crate::interp::interpolate;
use crate::real::{lit, to_f64, Real};
use crate::small::{zero_vec, Vec3};
use crate::state::TransportState;

/// Gains at or below this are treated as ties.
pub const GAIN_TOL: f64 = 1e-12;
/// Largest cycle for which every permutation is searched.
pub const EXACT_ASSIGNMENT_MAX: usize = 16;
const MAX_ORBIT_HOPS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleViolation {
    pub points: Vec<Vec<f64>>,
    pub images: Vec<Vec<f64>>,
    pub plan_cost: f64,
    pub best_reassignment_cost: f64,
    pub gain: f64,
    /// `permutation[i]` is the image index reassigned to point `i`.
    pub permutation: Vec<usize>,
    /// Pairs `(x_i, y_j)` left out because they reach the cut locus.
    pub skipped_pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Orbit,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub total_cost: f64,
    pub violations_found: usize,
    pub best: Option<CycleViolation>,
    pub samples_checked: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub k_max: usize,
    pub skipped_pairs: usize,
}

/// `∫ c(x, T(x)) ρ(x) dx` by the node rule.
pub fn transport_cost<R: Real>(state: &TransportState<R>) -> Result<R> {
    let grid = &state.grid;
    let n = grid.dim();
    let bound = state.cost.window.cut_bound();
    let mut vals = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let d = &state.disp[i];
        for s in 0..n {
            if d[s].abs() >= bound {
                return Err(Error::CutLocus {
                    displacement: to_f64(d[s]),
                    margin: to_f64(state.cost.window.margin),
                });
            }
        }
        vals.push(state.cost.value_at_displacement(n, &grid.point(i), d));
    }
    Ok(integrate(&ScalarField::from_raw(grid, vals), &state.dens.rho))
}

/// Cost of the identity-relative plan, valid only when `ρ = ρ̄`.
pub fn optimality_gap<R: Real>(state: &TransportState<R>) -> Result<R> {
    let max_diff = state
        .dens
        .rho
        .values()
        .iter()
        .zip(state.dens.rhobar.values())
        .map(|(&a, &b)| to_f64((a - b).abs()))
        .fold(0.0, f64::max);
    if max_diff > 1e-12 {
        return Err(Error::DensityMismatch { max_diff });
    }
    transport_cost(state)
}

fn pair_cost<R: Real>(cost: &CostModel<R>, n: usize, x: &[R], y: &[R]) -> Option<R> {
    let d = torus_displacement(&x[..n], &y[..n]);
    let bound = cost.window.cut_bound();
    if d.iter().any(|v| v.abs() >= bound) {
        return None;
    }
    let mut xv = zero_vec();
    let mut dv = zero_vec();
    xv[..n].copy_from_slice(&x[..n]);
    dv[..n].copy_from_slice(&d[..n]);
    Some(cost.value_at_displacement(n, &xv, &dv))
}

// minimum-cost perfect matching by subset DP; `None` entries are forbidden
fn min_assignment(c: &[Vec<Option<f64>>]) -> Option<(f64, Vec<usize>)> {
    let k = c.len();
    let full = 1usize << k;
    let mut best = vec![f64::INFINITY; full];
    let mut choice = vec![usize::MAX; full];
    best[0] = 0.0;
    for mask in 0..full {
        if !best[mask].is_finite() {
            continue;
        }
        let row = mask.count_ones() as usize;
        if row == k {
            continue;
        }
        for (j, entry) in c[row].iter().enumerate() {
            if mask & (1 << j) != 0 {
                continue;
            }
            if let Some(v) = entry {
                let next = mask | (1 << j);
                let cand = best[mask] + v;
                if cand < best[next] {
                    best[next] = cand;
                    choice[next] = j;
                }
            }
        }
    }
    if !best[full - 1].is_finite() {
        return None;
    }
    let mut perm = vec![0; k];
    let mut mask = full - 1;
    for row in (0..k).rev() {
        let j = choice[mask];
        perm[row] = j;
        mask &= !(1 << j);
    }
    Some((best[full - 1], perm))
}

/// Plan cost against the cheapest admissible reassignment of the images.
///
/// Up to [`EXACT_ASSIGNMENT_MAX`] points every permutation is considered; longer
/// inputs use the cyclic shifts only. When the plan itself is the optimum, the
/// cheapest non-identity cyclic shift is reported (gain ≤ 0).
pub fn cycle_gain<R: Real>(cost: &CostModel<R>, points: &[Vec<R>], images: &[Vec<R>]) -> Result<CycleViolation> {
    let k = points.len();
    if k < 2 || images.len() != k {
        return Err(Error::Config(format!("cycle needs k >= 2 matched points, got {k} and {}", images.len())));
    }
    let n = points[0].len();
    let mut plan = 0.0;
    for i in 0..k {
        match pair_cost(cost, n, &points[i], &images[i]) {
            Some(v) => plan += to_f64(v),
            None => {
                let d = torus_displacement(&points[i], &images[i]);
                let worst = d.iter().map(|v| to_f64(v.abs())).fold(0.0, f64::max);
                return Err(Error::CutLocus { displacement: worst, margin: to_f64(cost.window.margin) });
            }
        }
    }
    let matrix: Vec<Vec<Option<f64>>> = (0..k)
        .map(|i| (0..k).map(|j| pair_cost(cost, n, &points[i], &images[j]).map(to_f64)).collect())
        .collect();
    let skipped = matrix.iter().flatten().filter(|e| e.is_none()).count();

    let best_shift = (1..k)
        .filter_map(|s| {
            let perm: Vec<usize> = (0..k).map(|i| (i + s) % k).collect();
            let total: Option<f64> = perm.iter().enumerate().map(|(i, &j)| matrix[i][j]).sum();
            total.map(|t| (t, perm))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0));

    let exact = if k <= EXACT_ASSIGNMENT_MAX { min_assignment(&matrix) } else { None };
    let identity_like = |p: &[usize]| p.iter().enumerate().all(|(i, &j)| i == j);
    let chosen = match exact {
        Some((v, p)) if !identity_like(&p) && v < plan => Some((v, p)),
        _ => best_shift,
    };
    let (reassign, permutation) = chosen.unwrap_or((f64::INFINITY, (0..k).collect()));
    Ok(CycleViolation {
        points: points.iter().map(|p| p.iter().map(|&v| to_f64(v)).collect()).collect(),
        images: images.iter().map(|p| p.iter().map(|&v| to_f64(v)).collect()).collect(),
        plan_cost: plan,
        best_reassignment_cost: reassign,
        gain: plan - reassign,
        permutation,
        skipped_pairs: skipped,
    })
}

struct MapSampler<'a, R: Real> {
    n: usize,
    disp: Vec<ScalarField<R>>,
    grid: &'a crate::grid::PeriodicGrid,
}

impl<'a, R: Real> MapSampler<'a, R> {
    fn new(state: &'a TransportState<R>) -> Self {
        let grid = &state.grid;
        let n = grid.dim();
        let disp = (0..n)
            .map(|a| ScalarField::from_raw(grid, state.disp.iter().map(|d| d[a]).collect()))
            .collect();
        Self { n, disp, grid }
    }

    fn image(&self, x: &[R]) -> Vec<R> {
        let mut p: Vec3<R> = zero_vec();
        p[..self.n].copy_from_slice(&x[..self.n]);
        (0..self.n)
            .map(|a| wrap_coordinate(x[a] + interpolate(&self.disp[a], &p).0))
            .collect()
    }
}

fn better(a: &CycleViolation, b: &CycleViolation) -> bool {
    match a.gain.total_cmp(&b.gain) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => {
            let key = |v: &CycleViolation| v.points.concat();
            key(a).iter().zip(key(b)).map(|(x, y)| x.total_cmp(&y)).find(|o| o.is_ne()) == Some(std::cmp::Ordering::Less)
        }
    }
}

fn random_point<R: Real>(rng: &mut ChaCha8Rng, n: usize) -> Vec<R> {
    (0..n).map(|_| lit(rng.gen::<f64>())).collect()
}

/// Points and their images along one closed orbit.
type Orbit<R> = (Vec<Vec<R>>, Vec<Vec<R>>);

// closes the forward orbit of `start` once it returns near the start
fn trace_orbit<R: Real>(sampler: &MapSampler<'_, R>, start: Vec<R>, radius: R) -> Option<Orbit<R>> {
    let first = sampler.image(&start);
    let step = torus_displacement(&start, &first).iter().fold(R::zero(), |m, v| m.max(v.abs()));
    let hops = if step > R::zero() {
        (to_f64(R::one() / step).ceil() as usize + 1).clamp(2, MAX_ORBIT_HOPS)
    } else {
        2
    };
    let mut points = vec![start.clone()];
    let mut images = vec![first.clone()];
    let mut cur = first;
    for m in 1..hops {
        let close = torus_displacement(&start, &cur).iter().all(|v| v.abs() <= radius);
        if m >= 2 && close {
            return Some((points, images));
        }
        let next = sampler.image(&cur);
        points.push(cur);
        images.push(next.clone());
        cur = next;
    }
    let close = torus_displacement(&start, &cur).iter().all(|v| v.abs() <= radius);
    (points.len() >= 2 && close).then_some((points, images))
}

/// Random `k`-tuples (`k = 2..=k_max`) and traced orbits, `samples` of each
/// selected strategy, all drawn from one seeded stream.
pub fn cyclical_monotonicity_audit<R: Real>(
    state: &TransportState<R>,
    k_max: usize,
    samples: usize,
    seed: u64,
    strategy: Strategy,
) -> Result<AuditReport> {
    if k_max < 2 {
        return Err(Error::Config(format!("k_max must be at least 2, got {k_max}")));
    }
    let n = state.dim();
    let sampler = MapSampler::new(state);
    let radius: R = lit::<R>(2.0) * sampler.grid.max_spacing::<R>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut tuples: Vec<Vec<Vec<R>>> = Vec::new();
    if matches!(strategy, Strategy::Random | Strategy::Both) {
        for s in 0..samples {
            let k = 2 + s % (k_max - 1);
            tuples.push((0..k).map(|_| random_point(&mut rng, n)).collect());
        }
    }
    let mut starts: Vec<Vec<R>> = Vec::new();
    if matches!(strategy, Strategy::Orbit | Strategy::Both) {
        starts = (0..samples).map(|_| random_point(&mut rng, n)).collect();
    }

    let random_results: Vec<Option<CycleViolation>> = tuples
        .par_iter()
        .map(|pts| {
            let imgs: Vec<Vec<R>> = pts.iter().map(|p| sampler.image(p)).collect();
            cycle_gain(&state.cost, pts, &imgs).ok()
        })
        .collect();
    let orbit_results: Vec<Option<CycleViolation>> = starts
        .par_iter()
        .map(|s| {
            trace_orbit(&sampler, s.clone(), radius).and_then(|(pts, imgs)| cycle_gain(&state.cost, &pts, &imgs).ok())
        })
        .collect();

    let mut violations = 0;
    let mut skipped = 0;
    let mut best: Option<CycleViolation> = None;
    for r in random_results.into_iter().chain(orbit_results).flatten() {
        skipped += r.skipped_pairs;
        if r.gain > GAIN_TOL {
            violations += 1;
            if best.as_ref().is_none_or(|b| better(&r, b)) {
                best = Some(r);
            }
        }
    }
    Ok(AuditReport {
        total_cost: to_f64(transport_cost(state)?),
        violations_found: violations,
        best,
        samples_checked: tuples.len() + starts.len(),
        seed,
        strategy,
        k_max,
        skipped_pairs: skipped,
    })
}
