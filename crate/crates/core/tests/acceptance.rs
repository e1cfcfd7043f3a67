//! Acceptance criteria A1–A9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. `ACCEPTANCE_ONLY=A4,A6` restricts the run.

use std::f64::consts::TAU;
use std::time::Instant;

use lie_transport::audit::{cyclical_monotonicity_audit, transport_cost, Strategy};
use lie_transport::commands::{lb_refinement, smooth_one_form, LbOptions};
use lie_transport::config::{CostSpec, GridSpec, RunConfig};
use lie_transport::cost::CostModel;
use lie_transport::density::{DensityPair, DensitySpec};
use lie_transport::grid::{d0, d1, OneFormField, PeriodicGrid, ScalarField};
use lie_transport::hodge::{codiff_1, codiff_2, harmonic_basis, inner_product_0, inner_product_1, inner_product_2, MetricField};
use lie_transport::moduli::{closed_form, continue_family, n2_kernel_dim, solve_lie, verify_dphi, ContinuationSettings, ModuliChart};
use lie_transport::small::Vec3;
use lie_transport::state::{assemble_state, linearized_l, pushforward_residual, TransportState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// A1
const COMPLEX_TOL: f64 = 1e-13;
const ADJOINT_TOL: f64 = 1e-12;
// A2, A4: nominal refinement factor 4
const ID1_RATIO: (f64, f64) = (3.2, 4.8);
const LB_RATIO: (f64, f64) = (3.0, 5.0);
const LB_ABS_32: f64 = 1e-3;
// A3
const L_FD_TOL: f64 = 1e-6;
// A5
const A5_RESIDUAL: f64 = 1e-10;
const A5_COST: f64 = 1e-8;
const A5_PUSH: f64 = 1e-10;
// A6
const DPHI_PLATEAU: f64 = 1e-5;
const DPHI_MIN_ORDER_RATIO: f64 = 50.0;
const DPHI_HARMONIC: f64 = 1e-4;
// A7
const BASIS_GAP: f64 = 1e3;
const KERNEL_GAP: f64 = 100.0;
// A8
const A8_GAIN: f64 = 0.12;
// A9
const CDF_TOL: f64 = 1e-4;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn cosine_density(n: usize, axis: usize, amp: f64) -> DensitySpec {
    let mut k = vec![0; n];
    k[axis] = 1;
    DensitySpec::cosine(k, amp)
}

const EPS: f64 = 0.01;

fn perturbed(n: usize, eps: f64) -> CostModel<f64> {
    let mut freq = vec![0; n];
    freq[0] = 1;
    freq[1] = 1;
    CostModel::perturbed(eps, freq, 0.0).unwrap()
}

fn bump(g: &PeriodicGrid, amp: f64) -> ScalarField<f64> {
    ScalarField::from_fn(g, |p: &Vec3<f64>| amp * (TAU * p[0]).sin() * (TAU * p[1]).sin()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    a / b.max(f64::MIN_POSITIVE)
}

fn a1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grids = [vec![32, 32], vec![64, 64], vec![16, 16, 16], vec![24, 24, 24]];
    let (mut dd, mut adj1, mut adj2) = (0.0f64, 0.0f64, 0.0f64);
    let mut count = 0;
    for sizes in &grids {
        let g = PeriodicGrid::new(sizes).map_err(fail)?;
        let n = g.dim();
        let dens = DensityPair::from_specs(&g, &cosine_density(n, 0, 0.2), &DensitySpec::uniform()).map_err(fail)?;
        let eta = closed_form(&vec![0.05; n], &bump(&g, 0.01));
        let st = assemble_state(&g, &perturbed(n, EPS), &dens, &eta).map_err(fail)?;
        let metrics = [MetricField::flat(&g), MetricField::from_state(&st).map_err(fail)?];
        for k in 0..25 {
            let m = &metrics[k % 2];
            let f = ScalarField::new(&g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).map_err(fail)?;
            let rand_form = |rng: &mut ChaCha8Rng| {
                OneFormField::from_flat(&g, &(0..n * g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>())
            };
            let eta = rand_form(&mut rng);
            let df = d0(&f);
            dd = dd.max(rel(d1(&df).max_abs(), df.max_abs()));
            let (l, r) = (inner_product_1(m, &df, &eta), inner_product_0(m, &f, &codiff_1(m, &eta)));
            adj1 = adj1.max(rel((l - r).abs(), l.abs().max(r.abs())));
            let omega = d1(&rand_form(&mut rng));
            let (l, r) = (inner_product_2(m, &d1(&eta), &omega), inner_product_1(m, &eta, &codiff_2(m, &omega).map_err(fail)?));
            adj2 = adj2.max(rel((l - r).abs(), l.abs().max(r.abs())));
            count += 1;
        }
    }
    check(
        dd <= COMPLEX_TOL && adj1 <= ADJOINT_TOL && adj2 <= ADJOINT_TOL,
        format!("{count} fields: |d1 d0| {dd:.1e}, codiff_1 adjoint {adj1:.1e}, codiff_2 adjoint {adj2:.1e}"),
    )
}

fn id1_at(sizes: &[usize]) -> Result<f64, String> {
    let g = PeriodicGrid::new(sizes).map_err(fail)?;
    let n = g.dim();
    let dens = DensityPair::from_specs(&g, &cosine_density(n, 0, 0.2), &cosine_density(n, 1, 0.1)).map_err(fail)?;
    let eta = closed_form(&vec![0.05; n], &bump(&g, 0.01));
    Ok(assemble_state(&g, &perturbed(n, EPS), &dens, &eta).map_err(fail)?.id1_defect())
}

fn a2() -> Outcome {
    let r2 = id1_at(&[32, 32])? / id1_at(&[64, 64])?;
    let r3 = id1_at(&[16, 16, 16])? / id1_at(&[32, 32, 32])?;
    let ok = |r: f64| r >= ID1_RATIO.0 && r <= ID1_RATIO.1;
    check(ok(r2) && ok(r3), format!("refinement ratios 2D {r2:.3}, 3D {r3:.3}"))
}

fn a3() -> Outcome {
    let g = PeriodicGrid::cubic(2, 64).map_err(fail)?;
    let dens = DensityPair::from_specs(&g, &cosine_density(2, 0, 0.2), &cosine_density(2, 1, 0.15)).map_err(fail)?;
    let cost = perturbed(2, EPS);
    let eta = closed_form(&[0.05, -0.03], &bump(&g, 0.01));
    let st = assemble_state(&g, &cost, &dens, &eta).map_err(fail)?;
    if !st.convex {
        return Err("base state is not convex".into());
    }
    let v = ScalarField::from_fn(&g, |p: &Vec3<f64>| (TAU * p[0]).cos() + 0.5 * (TAU * (p[0] + 2.0 * p[1])).sin()).unwrap();
    let lv = linearized_l(&st, &v);
    let dv = d0(&v);
    let theta_at = |s: f64| assemble_state(&g, &cost, &dens, &eta.lincomb(1.0, &dv, s)).map(|t| t.theta);
    let mut errs = Vec::new();
    for s in [1e-4, 1e-5, 1e-6] {
        let (p, m) = (theta_at(s).map_err(fail)?, theta_at(-s).map_err(fail)?);
        let fd = p.zip_map(&m, |a, b| (a - b) / (2.0 * s));
        errs.push(rel(fd.zip_map(&lv, |a, b| a - b).max_abs(), lv.max_abs()));
    }
    let best = errs.iter().copied().fold(f64::INFINITY, f64::min);
    check(best <= L_FD_TOL, format!("relative FD error at s = 1e-4, 1e-5, 1e-6: {:.1e} {:.1e} {:.1e}", errs[0], errs[1], errs[2]))
}

// The gated state is driven off-solution by the potential bump alone: its residual is
// h²-dominated and proportional to the bump. Cost and density variation add a part that
// converges faster than h², so the mixed state is reported but not gated.
fn a4() -> Outcome {
    let gated = RunConfig {
        grid: GridSpec { dim: 3, sizes: vec![16, 16, 16] },
        tau: vec![0.05, 0.0, -0.03],
        ..RunConfig::default()
    };
    let rows = lb_refinement(&gated, &LbOptions { sizes: vec![16, 32], amplitude: 5e-5, modes: 4, max_wavenumber: 1 })
        .map_err(fail)?;
    let mixed = RunConfig {
        cost: CostSpec::PerturbedQuadratic { epsilon: 0.003, freq: vec![1, 1, 0], separable: 0.0, window: None },
        rho: cosine_density(3, 0, 0.2),
        rhobar: cosine_density(3, 2, 0.1),
        ..gated.clone()
    };
    let info = lb_refinement(&mixed, &LbOptions { sizes: vec![16, 32], amplitude: 0.005, modes: 4, max_wavenumber: 1 })
        .map_err(fail)?;
    let ratio = rows[1].ratio.unwrap_or(0.0);
    check(
        ratio >= LB_RATIO.0 && ratio <= LB_RATIO.1 && rows[1].l2 <= LB_ABS_32 && rows[1].theta_max > 0.0,
        format!(
            "L2 residual {:.3e} -> {:.3e} (ratio {ratio:.3}), |theta|max {:.2e}; perturbed/nonuniform: {:.3e} -> {:.3e} (ratio {:.3}, not gated)",
            rows[0].l2,
            rows[1].l2,
            rows[1].theta_max,
            info[0].l2,
            info[1].l2,
            info[1].ratio.unwrap_or(0.0)
        ),
    )
}

fn a5() -> Outcome {
    let g = PeriodicGrid::cubic(2, 64).map_err(fail)?;
    let dens = DensityPair::uniform(&g);
    let settings = ContinuationSettings { step: 0.02, max_steps: 10, ..Default::default() };
    let base = solve_lie(&g, &CostModel::quadratic(), &dens, &[0.0, 0.0], &ScalarField::zeros(&g), &settings).map_err(fail)?;
    let fam = continue_family(base, 0, &settings);
    if let Some(e) = &fam.failure {
        return Err(format!("continuation stopped: {e}"));
    }
    let (mut res, mut cost_err, mut push) = (0.0f64, 0.0f64, 0.0f64);
    let mut all_converged = fam.charts.len() == 11;
    for c in &fam.charts {
        all_converged &= c.converged;
        res = res.max(c.residual_norm);
        let t = c.tau[0];
        cost_err = cost_err.max((transport_cost(&c.state).map_err(fail)? - 0.5 * t * t).abs());
        push = push.max(pushforward_residual(&c.state).max_abs());
    }
    check(
        all_converged && res <= A5_RESIDUAL && cost_err <= A5_COST && push <= A5_PUSH,
        format!("{} charts, residual {res:.1e}, cost error {cost_err:.1e}, pushforward {push:.1e}", fam.charts.len()),
    )
}

fn solved(sizes: &[usize], tau: &[f64], cost: &CostModel<f64>, rho: &DensitySpec, rhobar: &DensitySpec) -> Result<ModuliChart<f64>, String> {
    let g = PeriodicGrid::new(sizes).map_err(fail)?;
    let dens = DensityPair::from_specs(&g, rho, rhobar).map_err(fail)?;
    let chart = solve_lie(&g, cost, &dens, tau, &ScalarField::zeros(&g), &ContinuationSettings::default()).map_err(fail)?;
    if !chart.converged {
        return Err(format!("solve did not converge (residual {:.1e})", chart.residual_norm));
    }
    Ok(chart)
}

fn a6() -> Outcome {
    let chart = solved(&[64, 64], &[0.0, 0.0], &CostModel::quadratic(), &cosine_density(2, 0, 0.2), &DensitySpec::uniform())?;
    let zeta = smooth_one_form(&chart.state.grid, 5).map_err(fail)?;
    let rep = verify_dphi(&chart.state, &zeta, &[1e-2, 1e-3, 1e-4]).map_err(fail)?;
    let r = &rep.rows;
    // second order: a decade in ε buys two decades in error until the plateau
    let order_ok = |e0: f64, e1: f64| e1 <= 1e-10 || e0 / e1 >= DPHI_MIN_ORDER_RATIO;
    let two_d = order_ok(r[0].kahler_error, r[1].kahler_error)
        && order_ok(r[0].mass_error, r[1].mass_error)
        && r[2].kahler_error <= DPHI_PLATEAU
        && r[2].mass_error <= DPHI_PLATEAU;

    let chart3 = solved(&[16, 16, 16], &[0.0; 3], &CostModel::quadratic(), &cosine_density(3, 0, 0.2), &DensitySpec::uniform())?;
    let metric = MetricField::from_state(&chart3.state).map_err(fail)?;
    let basis = harmonic_basis(&metric, 3).map_err(fail)?;
    let rep3 = verify_dphi(&chart3.state, &basis.forms[0], &[1e-3]).map_err(fail)?;
    let h = rep3.rows[0];
    let three_d = h.kahler_slope_norm <= DPHI_HARMONIC && h.mass_slope_norm <= DPHI_HARMONIC;
    check(
        two_d && three_d,
        format!(
            "2D kahler err {:.1e}/{:.1e}/{:.1e}, mass err {:.1e}/{:.1e}/{:.1e}; 3D harmonic slopes {:.1e}, {:.1e}",
            r[0].kahler_error, r[1].kahler_error, r[2].kahler_error, r[0].mass_error, r[1].mass_error, r[2].mass_error,
            h.kahler_slope_norm, h.mass_slope_norm
        ),
    )
}

fn a7() -> Outcome {
    let g = PeriodicGrid::cubic(3, 16).map_err(fail)?;
    let flat = harmonic_basis(&MetricField::<f64>::flat(&g), 3).map_err(fail)?;
    let chart3 = solved(&[16, 16, 16], &[0.05, 0.0, -0.03], &perturbed(3, EPS), &cosine_density(3, 0, 0.2), &cosine_density(3, 1, 0.1))?;
    let state_basis = harmonic_basis(&MetricField::from_state(&chart3.state).map_err(fail)?, 3).map_err(fail)?;
    let mut kernel = Vec::new();
    for (tau, rho) in [([0.0, 0.0], 0.0), ([0.1, -0.05], 0.2)] {
        let c = solved(&[48, 48], &tau, &perturbed(2, EPS), &cosine_density(2, 0, rho), &DensitySpec::uniform())?;
        kernel.push(n2_kernel_dim(&c.state).map_err(fail)?);
    }
    let ok = flat.forms.len() == 3
        && flat.gap_ratio >= BASIS_GAP
        && state_basis.forms.len() == 3
        && state_basis.gap_ratio >= BASIS_GAP
        && kernel.iter().all(|k| k.dim == 2 && k.gap_ratio >= KERNEL_GAP);
    check(
        ok,
        format!(
            "T3 gaps flat {:.1e}, state {:.1e}; T2 kernels {:?} with gaps {:.1e}, {:.1e}",
            flat.gap_ratio,
            state_basis.gap_ratio,
            kernel.iter().map(|k| k.dim).collect::<Vec<_>>(),
            kernel[0].gap_ratio,
            kernel[1].gap_ratio
        ),
    )
}

fn translation_chart(tau: f64) -> Result<TransportState<f64>, String> {
    Ok(solved(&[64, 64], &[tau, 0.0], &CostModel::quadratic(), &DensitySpec::uniform(), &DensitySpec::uniform())?.state)
}

fn a8() -> Outcome {
    let quarter = cyclical_monotonicity_audit(&translation_chart(0.25)?, 8, 1000, 0, Strategy::Orbit).map_err(fail)?;
    let best = quarter.best.as_ref().ok_or("no violation found at tau = 0.25")?;
    let ident = cyclical_monotonicity_audit(&translation_chart(0.0)?, 8, 1000, 0, Strategy::Orbit).map_err(fail)?;
    check(
        best.points.len() == 4 && best.gain >= A8_GAIN && ident.violations_found == 0,
        format!(
            "tau 0.25: {}-cycle, gain {:.6}; identity: {} violations",
            best.points.len(),
            best.gain,
            ident.violations_found
        ),
    )
}

// monotone rearrangement onto the uniform law: T¹ = F(x¹) + c with F the CDF of ρ
fn cdf_oracle(x: f64, amp: f64) -> f64 {
    let fine = 20_000;
    let h = x / fine as f64;
    let density = |t: f64| 1.0 + amp * (TAU * t).cos();
    let mut s = density(0.0) + density(x);
    for i in 1..fine {
        s += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn a9() -> Outcome {
    let amp = 0.2;
    let chart = solved(&[64, 64], &[0.0, 0.0], &CostModel::quadratic(), &cosine_density(2, 0, amp), &DensitySpec::uniform())?;
    let g = &chart.state.grid;
    let nx = g.sizes()[0];
    let oracle: Vec<f64> = (0..nx).map(|i| {
        let x = i as f64 / nx as f64;
        cdf_oracle(x, amp) - x
    }).collect();
    // fix c by the zero mean of the displacement (τ = 0)
    let c = -oracle.iter().sum::<f64>() / nx as f64;
    let mut err = 0.0f64;
    for i in 0..g.len() {
        let ix = i % nx;
        err = err.max((chart.state.disp[i][0] - (oracle[ix] + c)).abs());
        err = err.max(chart.state.disp[i][1].abs());
    }
    check(err <= CDF_TOL, format!("sup |T - oracle| = {err:.2e}"))
}

fn main() {
    let only: Option<Vec<String>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').map(|t| t.trim().to_string()).collect());
    let criteria: [Criterion; 9] =
        [("A1", a1), ("A2", a2), ("A3", a3), ("A4", a4), ("A5", a5), ("A6", a6), ("A7", a7), ("A8", a8), ("A9", a9)];
    let mut failed = 0;
    for (name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.iter().any(|x| x == name)) {
            continue;
        }
        let t = Instant::now();
        let out = f();
        let secs = t.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("{name} PASS  {d}  [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("{name} FAIL  {d}  [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
