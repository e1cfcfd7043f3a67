use lie_transport::audit::{cycle_gain, transport_cost};
use lie_transport::config::RunConfig;
use lie_transport::cost::CostModel;
use lie_transport::density::{DensityPair, DensitySpec, FourierTerm};
use lie_transport::grid::{d0, d1, torus_displacement, wrap_coordinate, OneFormField, PeriodicGrid, ScalarField};
use lie_transport::hodge::{codiff_1, inner_product_0, inner_product_1, MetricField};
use lie_transport::small::Vec3;
use lie_transport::state::assemble_state;
use proptest::prelude::*;

fn grid_sizes() -> impl Strategy<Value = Vec<usize>> {
    prop_oneof![
        (4usize..10, 4usize..10).prop_map(|(a, b)| vec![2 * a, 2 * b]),
        (4usize..6, 4usize..6, 4usize..6).prop_map(|(a, b, c)| vec![2 * a, 2 * b, 2 * c]),
    ]
}

fn values(len: usize, seed: u64) -> Vec<f64> {
    // cheap deterministic filler; proptest drives the seed
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..len)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exterior_derivative_squares_to_zero(sizes in grid_sizes(), seed in any::<u64>()) {
        let g = PeriodicGrid::new(&sizes).unwrap();
        let u = ScalarField::new(&g, values(g.len(), seed)).unwrap();
        let du = d0(&u);
        prop_assert!(d1(&du).max_abs() <= 1e-13 * du.max_abs().max(1.0));
    }

    #[test]
    fn codiff_is_adjoint_for_conformal_metrics(sizes in grid_sizes(), seed in any::<u64>()) {
        let g = PeriodicGrid::new(&sizes).unwrap();
        let n = g.dim();
        let lam = ScalarField::new(&g, values(g.len(), seed).iter().map(|v| 1.5 + v).collect()).unwrap();
        let m = MetricField::conformal(&lam).unwrap();
        let f = ScalarField::new(&g, values(g.len(), seed ^ 1)).unwrap();
        let eta = OneFormField::from_flat(&g, &values(n * g.len(), seed ^ 2));
        let lhs = inner_product_1(&m, &d0(&f), &eta);
        let rhs = inner_product_0(&m, &f, &codiff_1(&m, &eta));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn displacement_is_minimal_and_consistent(x in 0.0..1.0f64, y in 0.0..1.0f64) {
        let d = torus_displacement(&[x], &[y])[0];
        prop_assert!(d > -0.5 && d <= 0.5);
        let back = wrap_coordinate(x + d);
        prop_assert!((back - y).abs() < 1e-12 || (back - y).abs() > 1.0 - 1e-12);
    }

    #[test]
    fn densities_have_unit_mass(c in -0.4..0.4f64, s in -0.4..0.4f64, k0 in -2i32..=2, k1 in -2i32..=2) {
        let g = PeriodicGrid::cubic(2, 16).unwrap();
        let spec = DensitySpec { fourier: vec![FourierTerm { k: vec![k0, k1], cos: c, sin: s }], base: 1.0 };
        let pair = DensityPair::from_specs(&g, &spec, &DensitySpec::uniform()).unwrap();
        let mass: f64 = pair.rho.values().iter().sum::<f64>() / g.len() as f64;
        prop_assert!((mass - 1.0).abs() < 1e-12);
        prop_assert!(pair.rho.values().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn cexp_inverts_the_contact_equation(
        x0 in 0.0..1.0f64, x1 in 0.0..1.0f64, e0 in -0.2..0.2f64, e1 in -0.2..0.2f64,
    ) {
        let cost = CostModel::perturbed(0.01, vec![1, 1], 0.0).unwrap();
        let x: Vec3<f64> = [x0, x1, 0.0];
        let eta: Vec3<f64> = [e0, e1, 0.0];
        let (xbar, _) = cost.cexp(2, &x, &eta).unwrap();
        let jet = cost.cost_jet(&x[..2], &xbar[..2]).unwrap();
        prop_assert!((jet.c_x[0] + e0).abs() < 1e-11 && (jet.c_x[1] + e1).abs() < 1e-11);
    }

    #[test]
    fn translations_cost_half_square(t0 in -0.3..0.3f64, t1 in -0.3..0.3f64) {
        let g = PeriodicGrid::cubic(2, 8).unwrap();
        let st = assemble_state(&g, &CostModel::quadratic(), &DensityPair::uniform(&g), &OneFormField::constant(&g, &[t0, t1])).unwrap();
        let c = transport_cost(&st).unwrap();
        prop_assert!((c - 0.5 * (t0 * t0 + t1 * t1)).abs() < 1e-12);
    }

    #[test]
    fn gain_is_rotation_invariant(seed in any::<u64>(), k in 2usize..7, shift in 0usize..7, t in -0.3..0.3f64) {
        let v = values(2 * k, seed);
        let pts: Vec<Vec<f64>> = (0..k).map(|i| vec![0.5 + 0.5 * v[2 * i], 0.5 + 0.5 * v[2 * i + 1]]).collect();
        let imgs: Vec<Vec<f64>> = pts.iter().map(|p| vec![wrap_coordinate(p[0] + t), p[1]]).collect();
        let cost = CostModel::quadratic();
        let a = cycle_gain(&cost, &pts, &imgs).unwrap();
        let (mut rp, mut ri) = (pts.clone(), imgs.clone());
        rp.rotate_left(shift % k);
        ri.rotate_left(shift % k);
        let b = cycle_gain(&cost, &rp, &ri).unwrap();
        prop_assert!((a.gain - b.gain).abs() < 1e-12 || (a.gain.is_infinite() && b.gain.is_infinite()));
    }

    #[test]
    fn identity_plans_never_violate(seed in any::<u64>(), k in 2usize..9) {
        let v = values(2 * k, seed);
        let pts: Vec<Vec<f64>> = (0..k).map(|i| vec![0.5 + 0.5 * v[2 * i], 0.5 + 0.5 * v[2 * i + 1]]).collect();
        let g = cycle_gain(&CostModel::quadratic(), &pts, &pts).unwrap();
        prop_assert!(g.gain <= 1e-12);
    }

    #[test]
    fn config_hash_survives_round_trip(seed in any::<u64>(), n in 4usize..20) {
        let cfg = RunConfig::from_json(&format!(r#"{{"grid":{{"dim":2,"sizes":[{0},{0}]}},"seed":{seed}}}"#, 2 * n)).unwrap();
        let again = RunConfig::from_json(&serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        prop_assert_eq!(cfg.hash(), again.hash());
    }
}
