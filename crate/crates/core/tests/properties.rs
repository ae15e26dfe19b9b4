use proptest::prelude::*;
use rosenblatt_spde::heat_kernel::{g, semigroup_product, Viscosity};
use rosenblatt_spde::numerics::{compensated_sum, loglog_fit, GridSpec};
use rosenblatt_spde::regularity::temporal_structure_function;
use rosenblatt_spde::rkhs::{inner_product, TimeFunction};
use rosenblatt_spde::rosenblatt::{read_cache, write_cache, Method, PathEnsemble};
use rosenblatt_spde::solver::{gronwall_bound, gronwall_iterates, Field};
use rosenblatt_spde::special::{gamma_fn, mittag_leffler};
use rosenblatt_spde::HurstParameter;

fn steps(grid: GridSpec, levels: &[f64]) -> TimeFunction {
    let n = levels.len();
    let breaks = (0..=n).map(|i| grid.t_max * i as f64 / n as f64).collect();
    TimeFunction::piecewise_constant(grid, breaks, levels.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gamma_recursion(x in 0.05f64..20.0) {
        let lhs = gamma_fn(x + 1.0).unwrap();
        let rhs = x * gamma_fn(x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
    }

    #[test]
    fn mittag_leffler_one_is_exp(z in -5.0f64..10.0) {
        let e = mittag_leffler(1.0, z).unwrap();
        prop_assert!((e - z.exp()).abs() <= 1e-10 * z.exp());
    }

    #[test]
    fn mittag_leffler_increasing(beta in 0.4f64..1.5, z in 0.0f64..3.0, dz in 0.01f64..1.0) {
        prop_assert!(mittag_leffler(beta, z + dz).unwrap() > mittag_leffler(beta, z).unwrap());
    }

    #[test]
    fn gronwall_iterates_stay_below_bound(a in 0.1f64..2.0, b in 0.1f64..2.0, beta in 0.4f64..1.0) {
        let grid = GridSpec::uniform(1.0, 17).unwrap();
        let iters = gronwall_iterates(a, b, beta, &grid, 12).unwrap();
        for (k, t) in grid.nodes().into_iter().enumerate() {
            let bound = gronwall_bound(a, b, beta, t).unwrap();
            for it in &iters {
                prop_assert!(it[k] <= bound * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn compensated_sum_is_order_independent(mut v in prop::collection::vec(-1e6f64..1e6, 1..200)) {
        let a = compensated_sum(v.iter().copied());
        v.reverse();
        let b = compensated_sum(v.iter().copied());
        let scale: f64 = v.iter().map(|x| x.abs()).sum();
        prop_assert!((a - b).abs() <= 1e-14 * scale.max(1.0));
    }

    #[test]
    fn loglog_fit_recovers_power(c in 0.1f64..10.0, e in -2.0f64..3.0) {
        let x: Vec<f64> = (0..8).map(|k| 2f64.powi(-k)).collect();
        let y: Vec<f64> = x.iter().map(|x| c * x.powf(e)).collect();
        let fit = loglog_fit(&x, &y).unwrap();
        prop_assert!((fit.slope - e).abs() < 1e-10);
    }

    #[test]
    fn heat_semigroup(a in 0.01f64..2.0, b in 0.01f64..2.0, x in -3.0f64..3.0) {
        let nu = Viscosity::new(0.7).unwrap();
        let direct = g(a + b, x, nu).unwrap();
        prop_assert!((semigroup_product(a, b, x, 0.7) - direct).abs() <= 1e-14 * direct.max(1e-300));
    }

    #[test]
    fn inner_product_bilinear_and_cauchy_schwarz(
        hv in 0.55f64..0.95,
        f in prop::collection::vec(-2.0f64..2.0, 4),
        gl in prop::collection::vec(-2.0f64..2.0, 4),
        c in -3.0f64..3.0,
    ) {
        let h = HurstParameter::new(hv).unwrap();
        let grid = GridSpec::uniform(1.0, 9).unwrap();
        let (ff, gg) = (steps(grid, &f), steps(grid, &gl));
        let sum: Vec<f64> = f.iter().zip(&gl).map(|(a, b)| a + c * b).collect();
        let fg = inner_product(&ff, &gg, h).unwrap();
        let gf = inner_product(&gg, &ff, h).unwrap();
        let nf = inner_product(&ff, &ff, h).unwrap();
        let ng = inner_product(&gg, &gg, h).unwrap();
        let lin = inner_product(&steps(grid, &sum), &ff, h).unwrap();
        let scale = nf.max(ng).max(1e-12);
        prop_assert!((fg - gf).abs() <= 1e-12 * scale);
        prop_assert!((lin - (nf + c * gf)).abs() <= 1e-10 * scale * (1.0 + c.abs()));
        prop_assert!(nf >= 0.0 && ng >= 0.0);
        prop_assert!(fg * fg <= nf * ng * (1.0 + 1e-10) + 1e-20);
    }

    #[test]
    fn structure_exponent_invariant_under_scaling(scale in 0.01f64..100.0, e in 0.2f64..1.5) {
        // u(t, x) = t^e on a uniform grid; the moment ratio is independent of scale
        let times: Vec<f64> = (0..65).map(|i| i as f64 / 64.0).collect();
        let xs = vec![-1.0, 0.0, 1.0];
        let base: Vec<f64> = times.iter().flat_map(|t| [t.powf(e); 3]).collect();
        let a = Field::new(times.clone(), xs.clone(), base.clone()).unwrap();
        let b = a.scaled(scale);
        let lags: Vec<f64> = (0..5).map(|k| 2f64.powi(k) / 64.0).collect();
        let ra = temporal_structure_function(&a, 0.0, 2.0, &lags).unwrap();
        let rb = temporal_structure_function(&b, 0.0, 2.0, &lags).unwrap();
        prop_assert!((ra.fitted_exponent - rb.fitted_exponent).abs() < 1e-9);
    }

    #[test]
    fn cache_round_trip(
        seed in any::<u64>(),
        vals in prop::collection::vec(-10.0f64..10.0, 3 * 9),
        norm in 0.1f64..10.0,
    ) {
        let grid = GridSpec::uniform(2.0, 9).unwrap();
        let h = HurstParameter::new(0.75).unwrap();
        let ens = PathEnsemble::from_rows(grid, h, Method::HermiteRank2, seed, norm, vals).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("paths.bin");
        write_cache(&ens, &path).unwrap();
        prop_assert_eq!(read_cache(&path).unwrap(), ens);
    }

    #[test]
    fn field_csv_round_trip(vals in prop::collection::vec(-1e3f64..1e3, 2 * 3 * 4)) {
        let times = vec![0.0, 0.5, 1.0];
        let xs = vec![-1.0, 0.0, 1.0, 2.0];
        let f = Field::new(times, xs, vals).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf, 1, 1).unwrap();
        let back = Field::read_csv(&buf[..]).unwrap();
        prop_assert_eq!(back.values(), f.values());
    }
}
