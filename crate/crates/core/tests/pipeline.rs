use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use pullback::cli::catalog::{catalog, lookup, Expectation};
use pullback::grid::{Field, FieldKind, Grid};
use pullback::jetcalc::{
    coefficient_matrix, eval_jet2, eval_jets, pair_index, pairs, parse_map_spec, pullback_metric,
    MapSpec,
};
use pullback::kernelfield::{admissibility, kernel_field, kernel_field_from_jets, DEFAULT_ADM_TOL};
use pullback::linsolve::{
    solve_auto, solve_linearized, solve_with_field, symtensor_from_fn, SolverOptions,
};
use pullback::verify::{linearized_pullback, verify_solution};

fn planar_entries() -> Vec<(String, MapSpec)> {
    catalog()
        .into_iter()
        .filter(|e| {
            e.spec().m() == 2
                && e.expect
                    != Expectation::Critical {
                        verdict: false,
                        alpha0: None,
                    }
        })
        .map(|e| (e.name.clone(), e.spec()))
        .collect()
}

fn smooth_dg(grid: &Grid, k: f64) -> Field {
    symtensor_from_fn(grid, |x| {
        Ok(vec![
            (k * x[0] + x[1]).sin(),
            0.3 * (x[0] * x[1]).sin() - k * x[0].exp(),
            (0.5 * x[0]).cos() + k * x[1] * x[1],
        ])
    })
    .unwrap()
}

fn rel_diff(a: &Field, b: &Field) -> f64 {
    let scale = a.max_abs().max(b.max_abs()).max(f64::MIN_POSITIVE);
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}

#[test]
fn zero_perturbation_gives_zero_solution() {
    let g = Grid::uniform(2, -1.0, 1.0, 33).unwrap();
    for (name, spec) in planar_entries() {
        let dg = Field::zeros(FieldKind::Symtensor, &g, 3);
        let sol = solve_auto(&spec, &dg, &g, &SolverOptions::default()).unwrap();
        assert!(sol.df.field.data().iter().all(|&v| v == 0.0), "{name}");
    }
}

#[test]
fn solutions_are_linear_in_the_perturbation() {
    let g = Grid::uniform(2, -1.0, 1.0, 33).unwrap();
    let (d1, d2, c) = (smooth_dg(&g, 0.7), smooth_dg(&g, -1.3), -2.7);
    let combo = d1.axpy(c, &d2).unwrap();
    let opts = SolverOptions::default();
    for (name, spec) in planar_entries() {
        let s1 = solve_auto(&spec, &d1, &g, &opts).unwrap().df.field;
        let s2 = solve_auto(&spec, &d2, &g, &opts).unwrap().df.field;
        let s = solve_auto(&spec, &combo, &g, &opts).unwrap().df.field;
        let r = rel_diff(&s, &s1.axpy(c, &s2).unwrap());
        assert!(r <= 1e-9, "{name}: {r:e}");
    }
}

#[test]
fn constant_rescaling_of_the_kernel_leaves_df_unchanged() {
    let g = Grid::uniform(2, -1.0, 1.0, 33).unwrap();
    let dg = smooth_dg(&g, 0.4);
    let opts = SolverOptions::default();
    for (name, spec) in planar_entries()
        .into_iter()
        .filter(|(_, s)| s.is_critical())
    {
        let jets = eval_jets(&spec, &g).unwrap();
        let field = kernel_field_from_jets(&jets, &g, opts.rank_tol).unwrap();
        let a0 = admissibility(&spec, &g, opts.rank_tol, opts.adm_tol)
            .unwrap()
            .alpha0
            .unwrap();
        let base = solve_with_field(&jets, &g, &field, a0, &dg, &opts)
            .unwrap()
            .df
            .field;
        for c in [-1.0, 3.5, -0.25] {
            let other = solve_with_field(&jets, &g, &field.scaled(c), a0, &dg, &opts)
                .unwrap()
                .df
                .field;
            let r = rel_diff(&base, &other);
            assert!(r <= 1e-10, "{name} c={c}: {r:e}");
        }
    }
}

#[test]
fn pointwise_rescaling_only_changes_df_at_discretization_order() {
    // kappa -> phi kappa leaves the continuous problem invariant; the grid
    // derivative of phi introduces an O(h^2) change.
    let spec = lookup("example1", None).unwrap().spec();
    let phi = |x: &[f64]| 1.5 + 0.5 * (x[0] - 0.3 * x[1]).sin();
    let diffs: Vec<f64> = [17, 33, 65]
        .iter()
        .map(|&n| {
            let g = Grid::uniform(2, -1.0, 1.0, n).unwrap();
            let dg = smooth_dg(&g, 0.4);
            let opts = SolverOptions::default();
            let jets = eval_jets(&spec, &g).unwrap();
            let field = kernel_field_from_jets(&jets, &g, opts.rank_tol).unwrap();
            let a = solve_with_field(&jets, &g, &field, 0, &dg, &opts)
                .unwrap()
                .df
                .field;
            let b = solve_with_field(&jets, &g, &field.rescaled_by(phi), 0, &dg, &opts)
                .unwrap()
                .df
                .field;
            rel_diff(&a, &b)
        })
        .collect();
    for w in diffs.windows(2) {
        assert!((w[0] / w[1]).log2() >= 1.5, "{diffs:?}");
    }
}

#[test]
fn kernel_residual_is_at_rounding_level() {
    for e in catalog() {
        let Expectation::Critical { verdict: true, .. } = e.expect else {
            continue;
        };
        let spec = e.spec();
        let n = if spec.m() == 2 { 33 } else { 9 };
        let g = Grid::uniform(spec.m(), -1.0, 1.0, n).unwrap();
        let jets = eval_jets(&spec, &g).unwrap();
        let field = kernel_field_from_jets(&jets, &g, 1e-8).unwrap();
        let r = field.max_relative_residual(&jets);
        assert!(r <= 1e-10, "{}: {r:e}", e.name);
    }
}

#[test]
fn split_view_rebuilds_the_dependency_relation() {
    // sum_a lambda^a d_a f + sum_{a<=b} (2 - delta_ab) lambda^{ab} d_ab f = 0
    let spec = parse_map_spec("m=2,q=4; x1 + 0.2*x2^2; x2; exp(x1); sin(x1 + x2)").unwrap();
    let g = Grid::uniform(2, -0.5, 0.5, 9).unwrap();
    let jets = eval_jets(&spec, &g).unwrap();
    let field = kernel_field_from_jets(&jets, &g, 1e-8).unwrap();
    for (p, jet) in jets.iter().enumerate() {
        for i in 0..4 {
            let mut s = 0.0;
            for a in 0..2 {
                s += field.lambda1(p, a) * jet.d1(a)[i];
            }
            for (a, b) in pairs(2) {
                let w = if a == b { 1.0 } else { 2.0 };
                s += w * field.lambda2(p, a, b) * jet.d2(a, b)[i];
            }
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-12);
        }
        assert_eq!(field.lambda2(p, 0, 1), field.lambda2(p, 1, 0));
    }
}

#[test]
fn closed_forms_of_the_catalog() {
    for e in catalog() {
        let Some(df) = &e.closed_form_df else {
            continue;
        };
        let spec = e.spec();
        let n = if spec.m() == 2 { 33 } else { 9 };
        let g = Grid::uniform(spec.m(), -1.0, 1.0, n).unwrap();
        let dgx = pullback::jetcalc::parse_expr_list(&e.dg, spec.m()).unwrap();
        let dg = symtensor_from_fn(&g, |x| dgx.iter().map(|d| d.eval(x)).collect()).unwrap();
        let sol = solve_auto(&spec, &dg, &g, &SolverOptions::default()).unwrap();
        let err = pullback::cli::closed_form_error(&sol.df.field, df).unwrap();
        assert!(err <= 1e-10, "{}: {err:e}", e.name);
    }
}

#[test]
fn projected_free_maps_for_other_dimensions() {
    for (name, drop) in [
        ("fpi-m1", None),
        ("fpi-m2", Some((0, 0))),
        ("fpi-m3", Some((1, 2))),
        ("fpi-m3", Some((2, 2))),
    ] {
        let e = lookup(name, drop).unwrap();
        let spec = e.spec();
        let g = Grid::uniform(spec.m(), -1.0, 1.0, 9).unwrap();
        let rep = admissibility(&spec, &g, 1e-8, DEFAULT_ADM_TOL).unwrap();
        let Expectation::Critical { alpha0, .. } = e.expect else {
            unreachable!()
        };
        assert!(rep.verdict, "{name} {drop:?}: {}", rep.summary());
        assert_eq!(rep.alpha0, alpha0, "{name} {drop:?}");
        let dgx = pullback::jetcalc::parse_expr_list(&e.dg, spec.m()).unwrap();
        let dg = symtensor_from_fn(&g, |x| dgx.iter().map(|d| d.eval(x)).collect()).unwrap();
        let sol = solve_linearized(&spec, &dg, &g, &SolverOptions::default()).unwrap();
        let err =
            pullback::cli::closed_form_error(&sol.df.field, e.closed_form_df.as_ref().unwrap())
                .unwrap();
        assert!(err <= 1e-10, "{name} {drop:?}: {err:e}");
    }
}

#[test]
fn smooth_perturbations_converge_and_verify() {
    for name in ["example1", "f3"] {
        let spec = lookup(name, None).unwrap().spec();
        let res: Vec<f64> = [17, 33, 65]
            .iter()
            .map(|&n| {
                let g = Grid::uniform(2, -1.0, 1.0, n).unwrap();
                let dg = smooth_dg(&g, 0.9);
                let opts = SolverOptions::default();
                let sol = solve_linearized(&spec, &dg, &g, &opts).unwrap();
                assert!(sol.df.consistent, "{name} n={n}");
                let h = g.max_spacing();
                let v = verify_solution(&spec, &sol.df.field, &dg, &g, 50.0 * h * h).unwrap();
                assert!(v.pass, "{name} n={n}: {:e}", v.lin_residual_inf);
                sol.df.max_residual
            })
            .collect();
        for w in res.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.5, "{name}: {res:?}");
        }
    }
}

#[test]
fn linearized_operator_matches_the_analytic_derivative() {
    // D(f + t df) - D(f) = t (df_a . d_b f + d_a f . df_b) + O(t^2), with
    // df_a known in closed form here.
    let spec = lookup("example1", None).unwrap().spec();
    let dfx = |x: &[f64]| {
        vec![
            x[1].sin(),
            x[0] * x[1],
            (x[0] - x[1]).cos(),
            0.5 * x[0] * x[0],
        ]
    };
    let ddf = |x: &[f64]| {
        [
            [0.0, x[1], -(x[0] - x[1]).sin(), x[0]],
            [x[1].cos(), x[0], (x[0] - x[1]).sin(), 0.0],
        ]
    };
    let errs: Vec<f64> = [17, 33, 65]
        .iter()
        .map(|&n| {
            let g = Grid::uniform(2, -1.0, 1.0, n).unwrap();
            let df = Field::from_fn(FieldKind::Vector, &g, 4, |x| Ok(dfx(x))).unwrap();
            let l = linearized_pullback(&spec, &df, &g).unwrap();
            let mut err: f64 = 0.0;
            for p in g.interior_nodes() {
                let x = g.point(p);
                let jet = eval_jet2(&spec, &x).unwrap();
                let d = ddf(&x);
                for (a, b) in pairs(2) {
                    let exact: f64 = (0..4)
                        .map(|i| d[a][i] * jet.d1(b)[i] + jet.d1(a)[i] * d[b][i])
                        .sum();
                    err = err.max((l.at(p)[pair_index(2, a, b)] - exact).abs());
                }
            }
            err
        })
        .collect();
    for w in errs.windows(2) {
        assert!((w[0] / w[1]).log2() >= 1.8, "{errs:?}");
    }
}

#[test]
fn q_below_critical_is_rejected() {
    let spec = parse_map_spec("m=2,q=3; x1; x2; x1*x2").unwrap();
    let g = Grid::uniform(2, -1.0, 1.0, 5).unwrap();
    let dg = Field::zeros(FieldKind::Symtensor, &g, 3);
    assert!(solve_auto(&spec, &dg, &g, &SolverOptions::default()).is_err());
    let rep = admissibility(&spec, &g, 1e-8, 1e-6).unwrap();
    assert!(!rep.verdict && rep.reason.is_some());
}

#[test]
fn forced_alpha0_on_example1() {
    // both coordinates are transversal for (x, e^x, y, e^y)
    let spec = lookup("example1", None).unwrap().spec();
    let g = Grid::uniform(2, -1.0, 1.0, 33).unwrap();
    let dg = smooth_dg(&g, 0.2);
    let auto = solve_linearized(&spec, &dg, &g, &SolverOptions::default()).unwrap();
    let forced = solve_linearized(
        &spec,
        &dg,
        &g,
        &SolverOptions {
            alpha0_override: Some(1),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(auto.report.alpha0, Some(0));
    assert_eq!(forced.report.alpha0, Some(1));
    let h = g.max_spacing();
    for sol in [&auto, &forced] {
        let v = verify_solution(&spec, &sol.df.field, &dg, &g, 50.0 * h * h).unwrap();
        assert!(v.pass);
    }
}

#[test]
fn kernel_of_example1_everywhere() {
    let spec = lookup("example1", None).unwrap().spec();
    let g = Grid::uniform(2, -1.0, 1.0, 17).unwrap();
    let f = kernel_field(&spec, &g, 1e-8).unwrap();
    for p in 0..g.len() {
        assert_abs_diff_eq!(f.kappa(p)[3], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.lambda2(p, 0, 1), 0.5, epsilon = 1e-12);
    }
}

fn jet_fd_check(spec: &MapSpec, x: &[f64]) -> f64 {
    let m = spec.m();
    let jet = eval_jet2(spec, x).unwrap();
    let h = 1e-4;
    let eval = |dx: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(a, d) in dx {
            y[a] += d;
        }
        spec.eval(&y).unwrap()
    };
    let mut worst: f64 = 0.0;
    for a in 0..m {
        let (p, q) = (eval(&[(a, h)]), eval(&[(a, -h)]));
        for i in 0..spec.q() {
            worst = worst.max(((p[i] - q[i]) / (2.0 * h) - jet.d1(a)[i]).abs());
        }
        for b in a..m {
            let (pp, pm, mp, mm) = (
                eval(&[(a, h), (b, h)]),
                eval(&[(a, h), (b, -h)]),
                eval(&[(a, -h), (b, h)]),
                eval(&[(a, -h), (b, -h)]),
            );
            for i in 0..spec.q() {
                let fd = (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * h * h);
                worst = worst.max((fd - jet.d2(a, b)[i]).abs());
            }
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jets_agree_with_finite_differences(x in -0.9f64..0.9, y in -0.9f64..0.9, c in -2.0f64..2.0) {
        let spec = parse_map_spec(&format!(
            "m=2,q=4; x1*exp({c}*x2); sin(x1*x2) + x1^3; log(2 + x1^2) / (1 + x2^2); cos({c}*x1 - x2)^2"
        )).unwrap();
        prop_assert!(jet_fd_check(&spec, &[x, y]) < 1e-5);
    }

    #[test]
    fn pullback_metric_is_symmetric_gram(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let spec = parse_map_spec("m=2,q=4; x1; exp(x1)*x2; x2^2; sin(x1 + x2)").unwrap();
        let g = pullback_metric(&spec, &[x, y]).unwrap();
        let jet = eval_jet2(&spec, &[x, y]).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                prop_assert_eq!(g.get(a, b), g.get(b, a));
                let gram: f64 = jet.d1(a).iter().zip(jet.d1(b)).map(|(u, v)| u * v).sum();
                prop_assert!((g.get(a, b) - gram).abs() <= 1e-14 * (1.0 + gram.abs()));
            }
        }
        prop_assert!(g.get(0, 0) * g.get(1, 1) - g.get(0, 1).powi(2) > 0.0);
    }

    #[test]
    fn coefficient_matrix_rows_are_jet_columns(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let spec = parse_map_spec("m=2,q=4; x1; exp(x1); x2; exp(x2)").unwrap();
        let jet = eval_jet2(&spec, &[x, y]).unwrap();
        let a = coefficient_matrix(&jet);
        prop_assert_eq!((a.rows(), a.cols()), (5, 4));
        for i in 0..4 {
            prop_assert_eq!(a.as_matrix()[(0, i)], jet.d1(0)[i]);
            prop_assert_eq!(a.as_matrix()[(3, i)], jet.d2(0, 1)[i]);
            prop_assert_eq!(a.as_matrix()[(4, i)], jet.d2(1, 1)[i]);
        }
    }

    #[test]
    fn linearized_pullback_is_symmetric_and_linear(c in -3.0f64..3.0, k in -2.0f64..2.0) {
        let spec = parse_map_spec("m=2,q=4; x1; x2; x1^2; x1*x2").unwrap();
        let g = Grid::uniform(2, -1.0, 1.0, 7).unwrap();
        let u = Field::from_fn(FieldKind::Vector, &g, 4, |x| Ok(vec![(k * x[0]).sin(), x[1], x[0] * x[1], 1.0])).unwrap();
        let v = Field::from_fn(FieldKind::Vector, &g, 4, |x| Ok(vec![x[1] * x[1], k, (x[0] - x[1]).cos(), x[0]])).unwrap();
        let lu = linearized_pullback(&spec, &u, &g).unwrap();
        let lv = linearized_pullback(&spec, &v, &g).unwrap();
        let l = linearized_pullback(&spec, &u.axpy(c, &v).unwrap(), &g).unwrap();
        let expect = lu.axpy(c, &lv).unwrap();
        for (x, y) in l.data().iter().zip(expect.data()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}
