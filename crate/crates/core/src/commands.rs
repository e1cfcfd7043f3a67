//! Subcommand bodies behind the `lie-transport` binary. Each writes its
//! artifacts under the output directory and returns the run summary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::audit::{cyclical_monotonicity_audit, optimality_gap, transport_cost, Strategy};
use crate::config::{Resolved, RunConfig};
use crate::error::{Error, Result};
use crate::grid::{d0, d1, OneFormField, PeriodicGrid, ScalarField};
use crate::hodge::{codiff_1, codiff_2, harmonic_basis, inner_product_0, inner_product_1, inner_product_2, MetricField};
use crate::io::FieldDump;
use crate::moduli::{closed_form, continue_family, n2_kernel_dim, solve_lie, verify_dphi, ModuliChart};
use crate::state::{assemble_state, lb_check, pushforward_residual, TransportState};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, pass: value <= threshold }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, pass: value >= threshold }
    }
}

/// Deterministic part of a run; wall-clock timings go to `timings.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub metrics: Value,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub artifacts: Vec<String>,
}

struct Run {
    command: &'static str,
    out: PathBuf,
    artifacts: Vec<String>,
    timings: BTreeMap<String, f64>,
    clock: Instant,
}

impl Run {
    fn start(command: &'static str, out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out)?;
        Ok(Self { command, out: out.to_path_buf(), artifacts: Vec::new(), timings: BTreeMap::new(), clock: Instant::now() })
    }

    fn lap(&mut self, stage: &str) {
        let t = self.clock.elapsed().as_secs_f64();
        let before: f64 = self.timings.values().sum();
        self.timings.insert(stage.into(), t - before);
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(self.out.join(name), text + "\n")?;
        self.artifacts.push(name.into());
        Ok(())
    }

    fn dump(&mut self, stem: &str, field: &FieldDump) -> Result<()> {
        field.write_csv(self.out.join(format!("{stem}.csv")))?;
        field.write_binary(self.out.join(format!("{stem}.bin")))?;
        self.artifacts.push(format!("{stem}.csv"));
        self.artifacts.push(format!("{stem}.bin"));
        Ok(())
    }

    fn finish(mut self, cfg: &RunConfig, metrics: Value, checks: Vec<Check>) -> Result<RunSummary> {
        self.lap("finish");
        let total = self.clock.elapsed().as_secs_f64();
        let mut timings = json!(self.timings);
        timings["total"] = json!(total);
        self.write_json("timings.json", &timings)?;
        self.artifacts.push("summary.json".into());
        let summary = RunSummary {
            tool_version: VERSION.into(),
            command: self.command.into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            metrics,
            passed: checks.iter().all(|c| c.pass),
            checks,
            artifacts: self.artifacts.clone(),
        };
        let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(self.out.join("summary.json"), text + "\n")?;
        Ok(summary)
    }
}

fn random_field(grid: &PeriodicGrid, rng: &mut ChaCha8Rng) -> ScalarField<f64> {
    ScalarField::from_raw(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn random_one_form(grid: &PeriodicGrid, rng: &mut ChaCha8Rng) -> OneFormField<f64> {
    let n = grid.dim();
    OneFormField::from_flat(grid, &(0..n * grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>())
}

/// Sum of seeded trigonometric modes with unit L² norm on the continuum torus,
/// so the same function can be sampled on several grids.
#[derive(Debug, Clone)]
pub struct TrigField {
    modes: Vec<(Vec<f64>, f64, f64)>,
}

impl TrigField {
    pub fn seeded(n: usize, count: usize, max_k: i32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut modes: Vec<(Vec<f64>, f64, f64)> = Vec::new();
        while modes.len() < count {
            let k: Vec<f64> = (0..n).map(|_| rng.gen_range(-max_k..=max_k) as f64).collect();
            let c = rng.gen_range(0.5..1.0);
            let ph = rng.gen_range(0.0..std::f64::consts::TAU);
            // distinct non-zero wave vectors up to sign keep the modes orthogonal
            let neg: Vec<f64> = k.iter().map(|v| -v).collect();
            if k.iter().all(|&v| v == 0.0) || modes.iter().any(|(q, _, _)| *q == k || *q == neg) {
                continue;
            }
            modes.push((k, c, ph));
        }
        let norm = (modes.iter().map(|m| m.1 * m.1).sum::<f64>() / 2.0).sqrt();
        modes.iter_mut().for_each(|m| m.1 /= norm);
        Self { modes }
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        self.modes.iter().fold(0.0, |s, (k, c, ph)| {
            let t = k.iter().enumerate().fold(*ph, |t, (a, ka)| t + std::f64::consts::TAU * ka * p[a]);
            s + c * t.sin()
        })
    }

    pub fn sample(&self, grid: &PeriodicGrid) -> Result<ScalarField<f64>> {
        ScalarField::from_fn(grid, |p| self.eval(p))
    }
}

fn solve_base(r: &Resolved, cfg: &RunConfig, tau: &[f64]) -> Result<ModuliChart<f64>> {
    let chart = solve_lie(&r.grid, &r.cost, &r.dens, tau, &ScalarField::zeros(&r.grid), &cfg.solver)?;
    if !chart.converged {
        return Err(Error::NoConvergence {
            what: "Lie corrector",
            iterations: chart.newton_iterations,
            residual: chart.residual_norm,
        });
    }
    Ok(chart)
}

fn chart_metrics(chart: &ModuliChart<f64>) -> Result<Value> {
    let st = &chart.state;
    let gap = optimality_gap(st).ok();
    Ok(json!({
        "tau": chart.tau,
        "converged": chart.converged,
        "residual_norm": chart.residual_norm,
        "kappa": chart.kappa,
        "newton_iterations": chart.newton_iterations,
        "linear_iterations": chart.linear_iterations,
        "residual_history": chart.residual_history,
        "transport_cost": transport_cost(st)?,
        "optimality_gap": gap,
        "pushforward_residual": pushforward_residual(st).max_abs(),
        "id1_defect": st.id1_defect(),
        "min_w_eigenvalue": st.min_w_eigenvalue,
    }))
}

fn dump_state(run: &mut Run, st: &TransportState<f64>, prefix: &str) -> Result<()> {
    let n = st.dim();
    run.dump(&format!("{prefix}T"), &FieldDump::from_node_arrays(&st.grid, &st.t_map, n))?;
    let w: Vec<Vec<f64>> = (0..n * n).map(|c| st.w.iter().map(|m| m[c / n][c % n]).collect()).collect();
    run.dump(&format!("{prefix}w"), &FieldDump::new(&st.grid, w)?)?;
    run.dump(&format!("{prefix}theta"), &FieldDump::from_scalar(&st.theta))
}

fn rel(a: f64, b: f64) -> f64 {
    a / b.max(f64::MIN_POSITIVE)
}

/// Discrete complex, codifferential adjointness, twist window and the
/// `w = b·DT` identity under refinement.
pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let r = cfg.resolve()?;
    let mut run = Run::start("verify", out)?;
    let g = &r.grid;
    let n = g.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checks = Vec::new();

    let mut dd = 0.0f64;
    for _ in 0..10 {
        let u = random_field(g, &mut rng);
        let du = d0(&u);
        dd = dd.max(rel(d1(&du).max_abs(), du.max_abs()));
    }
    checks.push(Check::at_most("d1_d0_relative", dd, 1e-13));
    run.lap("complex");

    let probe = assemble_state(g, &r.cost, &r.dens, &closed_form(&r.tau, &smooth_potential(g, 0.01)?))?;
    let metrics = [("flat", MetricField::flat(g)), ("state", MetricField::from_state(&probe)?)];
    for (label, m) in &metrics {
        let mut e1 = 0.0f64;
        let mut e2 = 0.0f64;
        for _ in 0..5 {
            let f = random_field(g, &mut rng);
            let eta = random_one_form(g, &mut rng);
            let lhs = inner_product_1(m, &d0(&f), &eta);
            let rhs = inner_product_0(m, &f, &codiff_1(m, &eta));
            e1 = e1.max(rel((lhs - rhs).abs(), lhs.abs().max(rhs.abs())));
            let omega = d1(&random_one_form(g, &mut rng));
            let lhs = inner_product_2(m, &d1(&eta), &omega);
            let rhs = inner_product_1(m, &eta, &codiff_2(m, &omega)?);
            e2 = e2.max(rel((lhs - rhs).abs(), lhs.abs().max(rhs.abs())));
        }
        checks.push(Check::at_most(&format!("codiff_1_adjoint_{label}"), e1, 1e-12));
        checks.push(Check::at_most(&format!("codiff_2_adjoint_{label}"), e2, 1e-9));
    }
    run.lap("hodge");

    let twist = r.cost.check_twist_window(n, &r.cost.window, 2000);
    checks.push(Check::at_least("twist_min_eigenvalue", twist.min_eigenvalue, 1e-8));
    run.lap("cost");

    let fine = PeriodicGrid::new(&g.sizes().iter().map(|s| 2 * s).collect::<Vec<_>>())?;
    let coarse_def = probe.id1_defect();
    let fine_state = assemble_state(&fine, &r.cost, &crate::density::DensityPair::from_specs(&fine, &cfg.rho, &cfg.rhobar)?, &closed_form(&r.tau, &smooth_potential(&fine, 0.01)?))?;
    let fine_def = fine_state.id1_defect();
    if coarse_def < 1e-12 {
        checks.push(Check::at_most("id1_defect_exact", fine_def, 1e-12));
    } else {
        let ratio = coarse_def / fine_def;
        checks.push(Check::at_least("id1_refinement_ratio_low", ratio, 3.2));
        checks.push(Check::at_most("id1_refinement_ratio_high", ratio, 4.8));
    }
    run.lap("id1");
    let metrics = json!({ "twist": twist, "id1_defect": [coarse_def, fine_def] });
    run.finish(cfg, metrics, checks)
}

fn smooth_potential(g: &PeriodicGrid, amp: f64) -> Result<ScalarField<f64>> {
    let tau = std::f64::consts::TAU;
    ScalarField::from_fn(g, |p: &crate::small::Vec3<f64>| amp * (tau * p[0]).sin() * (tau * p[1]).sin())
}

pub fn cmd_solve(cfg: &RunConfig, out: &Path, tau: Option<Vec<f64>>, dump: bool) -> Result<RunSummary> {
    let r = cfg.resolve()?;
    let tau = tau.unwrap_or_else(|| r.tau.clone());
    let mut run = Run::start("solve", out)?;
    let chart = solve_lie(&r.grid, &r.cost, &r.dens, &tau, &ScalarField::zeros(&r.grid), &cfg.solver)?;
    run.lap("solve");
    if dump {
        dump_state(&mut run, &chart.state, "")?;
        run.lap("dump");
    }
    let metrics = chart_metrics(&chart)?;
    let checks = vec![Check::at_most("residual_norm", chart.residual_norm, cfg.solver.newton_tol)];
    let summary = run.finish(cfg, metrics, checks)?;
    if !chart.converged {
        return Err(Error::NoConvergence {
            what: "Lie corrector",
            iterations: chart.newton_iterations,
            residual: chart.residual_norm,
        });
    }
    Ok(summary)
}

#[derive(Debug, Clone, Default)]
pub struct DeformOptions {
    /// 1-based cohomology direction.
    pub direction: usize,
    pub steps: Option<usize>,
    pub step_size: Option<f64>,
    pub dump: bool,
}

pub fn cmd_deform(cfg: &RunConfig, out: &Path, opts: &DeformOptions) -> Result<RunSummary> {
    let r = cfg.resolve()?;
    let n = r.grid.dim();
    if opts.direction == 0 || opts.direction > n {
        return Err(Error::Config(format!("direction must be in 1..={n}, got {}", opts.direction)));
    }
    let mut settings = cfg.solver;
    if let Some(s) = opts.steps {
        settings.max_steps = s;
    }
    if let Some(h) = opts.step_size {
        settings.step = h;
    }
    let mut run = Run::start("deform", out)?;
    let base = solve_base(&r, cfg, &r.tau)?;
    let family = continue_family(base, opts.direction - 1, &settings);
    run.lap("continuation");
    let mut steps = Vec::with_capacity(family.charts.len());
    for (i, chart) in family.charts.iter().enumerate() {
        let mut m = chart_metrics(chart)?;
        m["step"] = json!(i);
        m.as_object_mut().expect("object").remove("residual_history");
        steps.push(m);
        if opts.dump {
            dump_state(&mut run, &chart.state, &format!("step{i:03}_"))?;
        }
    }
    let failure = family.failure.as_ref().map(|e| e.to_string());
    run.write_json(
        "family.json",
        &json!({ "direction": opts.direction, "step": settings.step, "requested_steps": settings.max_steps, "charts": steps, "failure": failure }),
    )?;
    let worst = family.charts.iter().map(|c| c.residual_norm).fold(0.0, f64::max);
    let checks = vec![
        Check::at_least("charts_completed", family.charts.len() as f64, (settings.max_steps + 1) as f64),
        Check::at_most("worst_residual_norm", worst, settings.newton_tol),
    ];
    let metrics = json!({ "charts": family.charts.len(), "failure": failure });
    let summary = run.finish(cfg, metrics, checks)?;
    match family.failure {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

#[derive(Debug, Clone)]
pub struct AuditOptions {
    pub k_max: usize,
    pub samples: usize,
    pub seed: Option<u64>,
    pub strategy: Strategy,
    pub tau: Option<Vec<f64>>,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self { k_max: 8, samples: 1000, seed: None, strategy: Strategy::Both, tau: None }
    }
}

pub fn cmd_audit(cfg: &RunConfig, out: &Path, opts: &AuditOptions) -> Result<RunSummary> {
    let r = cfg.resolve()?;
    let tau = opts.tau.clone().unwrap_or_else(|| r.tau.clone());
    let mut run = Run::start("audit", out)?;
    let chart = solve_base(&r, cfg, &tau)?;
    run.lap("solve");
    let seed = opts.seed.unwrap_or(cfg.seed);
    let report = cyclical_monotonicity_audit(&chart.state, opts.k_max, opts.samples, seed, opts.strategy)?;
    run.lap("audit");
    run.write_json("audit.json", &report)?;
    let metrics = json!({
        "tau": tau,
        "total_cost": report.total_cost,
        "violations_found": report.violations_found,
        "best_gain": report.best.as_ref().map(|b| b.gain),
        "best_cycle_length": report.best.as_ref().map(|b| b.points.len()),
        "skipped_pairs": report.skipped_pairs,
    });
    run.finish(cfg, metrics, Vec::new())
}

#[derive(Debug, Clone)]
pub struct LbOptions {
    /// Nodes per axis, one entry per refinement level.
    pub sizes: Vec<usize>,
    pub amplitude: f64,
    pub modes: usize,
    /// Largest |k_a| among the modes of z.
    pub max_wavenumber: i32,
}

impl Default for LbOptions {
    fn default() -> Self {
        Self { sizes: vec![16, 32], amplitude: 0.005, modes: 4, max_wavenumber: 1 }
    }
}

/// One refinement level of the Laplace–Beltrami comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LbRow {
    pub size: usize,
    pub linf: f64,
    pub l2: f64,
    pub lhs_l2: f64,
    pub rhs_l2: f64,
    pub theta_max: f64,
    /// `l2` of the previous row over this one.
    pub ratio: Option<f64>,
}

/// Refinement study on the non-solution state `η = τ + d(a sin 2πx¹ sin 2πx²)`.
pub fn lb_refinement(cfg: &RunConfig, opts: &LbOptions) -> Result<Vec<LbRow>> {
    let r = cfg.resolve()?;
    let n = r.grid.dim();
    if n < 3 {
        return Err(Error::Dimension { required: "n >= 3", actual: n });
    }
    let z = TrigField::seeded(n, opts.modes, opts.max_wavenumber, cfg.seed);
    let mut rows: Vec<LbRow> = Vec::new();
    for &size in &opts.sizes {
        let g = PeriodicGrid::cubic(n, size)?;
        let dens = crate::density::DensityPair::from_specs(&g, &cfg.rho, &cfg.rhobar)?;
        let st = assemble_state(&g, &r.cost, &dens, &closed_form(&r.tau, &smooth_potential(&g, opts.amplitude)?))?;
        let rep = lb_check(&st, &z.sample(&g)?)?;
        let ratio = rows.last().map(|p| p.l2 / rep.l2);
        rows.push(LbRow {
            size,
            linf: rep.linf,
            l2: rep.l2,
            lhs_l2: rep.lhs_l2,
            rhs_l2: rep.rhs_l2,
            theta_max: st.theta.max_abs(),
            ratio,
        });
    }
    Ok(rows)
}

pub fn cmd_lb_check(cfg: &RunConfig, out: &Path, opts: &LbOptions) -> Result<RunSummary> {
    let mut run = Run::start("lb-check", out)?;
    let rows = lb_refinement(cfg, opts)?;
    run.lap("refinement");
    run.write_json("lb_check.json", &rows)?;
    let mut checks = Vec::new();
    if let Some(ratio) = rows.last().and_then(|r| r.ratio) {
        checks.push(Check::at_least("l2_ratio_low", ratio, 3.0));
        checks.push(Check::at_most("l2_ratio_high", ratio, 5.0));
    }
    run.finish(cfg, json!({ "rows": rows, "amplitude": opts.amplitude }), checks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZetaKind {
    /// Seeded smooth 1-form, not closed.
    Random,
    /// First g-harmonic form of the solved state.
    Harmonic,
}

#[derive(Debug, Clone)]
pub struct DphiOptions {
    pub eps: Vec<f64>,
    pub zeta: ZetaKind,
}

impl Default for DphiOptions {
    fn default() -> Self {
        Self { eps: vec![1e-2, 3e-3, 1e-3, 3e-4, 1e-4], zeta: ZetaKind::Random }
    }
}

/// Seeded smooth 1-form sampled at edge midpoints; generically not closed.
pub fn smooth_one_form(grid: &PeriodicGrid, seed: u64) -> Result<OneFormField<f64>> {
    let n = grid.dim();
    let comps: Vec<TrigField> = (0..n).map(|a| TrigField::seeded(n, 3, 2, seed.wrapping_add(a as u64 + 1))).collect();
    OneFormField::from_fn(grid, |p, a| comps[a].eval(p))
}

pub fn cmd_dphi_check(cfg: &RunConfig, out: &Path, opts: &DphiOptions) -> Result<RunSummary> {
    let r = cfg.resolve()?;
    let mut run = Run::start("dphi-check", out)?;
    let chart = solve_base(&r, cfg, &r.tau)?;
    run.lap("solve");
    let zeta = match opts.zeta {
        ZetaKind::Random => smooth_one_form(&r.grid, cfg.seed)?,
        ZetaKind::Harmonic => {
            let metric = MetricField::from_state(&chart.state)?;
            harmonic_basis(&metric, r.grid.dim())?.forms.remove(0)
        }
    };
    let report = verify_dphi(&chart.state, &zeta, &opts.eps)?;
    run.lap("sweep");
    run.write_json("dphi.json", &report)?;
    let last = report.rows.last().copied();
    let mut checks = Vec::new();
    if let Some(row) = last {
        match opts.zeta {
            ZetaKind::Random => {
                checks.push(Check::at_most("kahler_error_plateau", row.kahler_error, 1e-5));
                checks.push(Check::at_most("mass_error_plateau", row.mass_error, 1e-5));
            }
            ZetaKind::Harmonic => {
                checks.push(Check::at_most("kahler_slope_norm", row.kahler_slope_norm, 1e-4));
                checks.push(Check::at_most("mass_slope_norm", row.mass_slope_norm, 1e-4));
            }
        }
    }
    run.finish(cfg, serde_json::to_value(&report).map_err(|e| Error::Format(e.to_string()))?, checks)
}

pub fn cmd_hodge_info(cfg: &RunConfig, out: &Path, flat: bool) -> Result<RunSummary> {
    let r = cfg.resolve()?;
    let n = r.grid.dim();
    let mut run = Run::start("hodge-info", out)?;
    let chart = if flat { None } else { Some(solve_base(&r, cfg, &r.tau)?) };
    run.lap("solve");
    let metric = match &chart {
        Some(c) => MetricField::from_state(&c.state)?,
        None => MetricField::flat(&r.grid),
    };
    let basis = harmonic_basis(&metric, n)?;
    run.lap("basis");
    let gram: Vec<Vec<f64>> = basis
        .forms
        .iter()
        .map(|a| basis.forms.iter().map(|b| inner_product_1(&metric, a, b)).collect())
        .collect();
    let means: Vec<Vec<f64>> = basis.forms.iter().map(|f| f.component_means()).collect();
    let mut metrics = json!({
        "metric": if flat { "flat" } else { "state" },
        "eigenvalues": basis.eigenvalues,
        "gap_ratio": basis.gap_ratio,
        "outer_iterations": basis.outer_iterations,
        "gram": gram,
        "component_means": means,
    });
    let mut checks = vec![Check::at_least("gap_ratio", basis.gap_ratio, crate::hodge::GAP_THRESHOLD)];
    if n == 2 {
        if let Some(c) = &chart {
            let k = n2_kernel_dim(&c.state)?;
            checks.push(Check::at_most("kernel_dim_minus_b1", (k.dim as f64 - 2.0).abs(), 0.0));
            metrics["kernel"] = serde_json::to_value(&k).map_err(|e| Error::Format(e.to_string()))?;
        }
    }
    run.lap("kernel");
    run.finish(cfg, metrics, checks)
}
