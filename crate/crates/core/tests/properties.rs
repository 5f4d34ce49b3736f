use dirac_gauge::clifford::{gammas_from_tetrad, lift_residual, spin_lift, FlatGammaSet};
use dirac_gauge::dirac::{
    assemble_hamiltonian, spectral_distance, spectrum, FieldOnGrid, Grid, Scheme, Steps, Variant, DEFAULT_DIMENSION_CAP,
};
use dirac_gauge::exprlang::{BinOp, Func};
use dirac_gauge::linalg::{eta, max_abs4, CMat4, C64};
use dirac_gauge::lorentz::{eta_cholesky, is_lorentz, lorentz_exp, lorentz_log, so13_generator, square_root_coset};
use dirac_gauge::metric::{admissibility, catalog_metric, CatalogArgs};
use dirac_gauge::tetrad::{cholesky_tetrad, orthonormality_residual, tetrad_for, Prescription, TetradField};
use dirac_gauge::{Expr, Params};
use nalgebra::Matrix4;
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0.0f64..1e3).prop_map(Expr::Num),
        (0usize..4).prop_map(Expr::Coord),
        "[a-w][a-z_]{0,3}"
            .prop_filter("function names are reserved", |s| {
                !["sin", "cos", "exp", "log", "sqrt", "tanh"].contains(&s.as_str())
            })
            .prop_map(Expr::Param),
    ]
}

fn tree() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 40, 3, |inner| {
        let op = prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div)];
        let func = prop_oneof![
            Just(Func::Sin),
            Just(Func::Cos),
            Just(Func::Exp),
            Just(Func::Log),
            Just(Func::Sqrt),
            Just(Func::Tanh)
        ];
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (op, inner.clone(), inner.clone()).prop_map(|(o, l, r)| Expr::Bin(o, Box::new(l), Box::new(r))),
            (inner.clone(), -4.0f64..4.0).prop_map(|(b, p)| Expr::Pow(Box::new(b), p)),
            (func, inner).prop_map(|(f, a)| Expr::Call(f, Box::new(a))),
        ]
    })
}

fn admissible_metric() -> impl Strategy<Value = Matrix4<f64>> {
    prop::array::uniform10(-0.3f64..0.3)
        .prop_map(|d| {
            let mut g = eta();
            let mut k = 0;
            for i in 0..4 {
                for j in i..4 {
                    g[(i, j)] += d[k];
                    g[(j, i)] = g[(i, j)];
                    k += 1;
                }
            }
            g
        })
        .prop_filter("admissible", |g| admissibility(g).ok)
}

fn lorentz() -> impl Strategy<Value = Matrix4<f64>> {
    (prop::array::uniform3(-1.0f64..1.0), prop::array::uniform3(-0.8f64..0.8))
        .prop_filter("rotation angle below π", |(r, _)| (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt() < 3.0)
        .prop_map(|(r, b)| lorentz_exp(&so13_generator(r, b)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn expr_print_parse_round_trip(t in tree()) {
        let printed = t.to_string();
        let back = Expr::parse(&printed).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn cubic_gradient(c in prop::array::uniform4(-2.0f64..2.0), x in prop::array::uniform4(-1.5f64..1.5)) {
        let src = format!(
            "{:?}*x0^3 + {:?}*x1^2*x2 + {:?}*x2*x3 + {:?}*x3^3 - x0*x1",
            c[0], c[1], c[2], c[3]
        );
        let e = Expr::parse(&src).unwrap();
        let g = e.eval_grad(&x, &Params::new(), 1e-5).unwrap();
        let want = [
            3.0 * c[0] * x[0] * x[0] - x[1],
            2.0 * c[1] * x[1] * x[2] - x[0],
            c[1] * x[1] * x[1] + c[2] * x[3],
            c[2] * x[2] + 3.0 * c[3] * x[3] * x[3],
        ];
        for mu in 0..4 {
            prop_assert!((g[mu] - want[mu]).abs() < 1e-8, "{} vs {}", g[mu], want[mu]);
        }
    }

    #[test]
    fn cholesky_is_unique_and_refactorizes(g in admissible_metric()) {
        let ch = eta_cholesky(&g).unwrap();
        prop_assert!(ch.residual() < 1e-11 * max_abs4(&g));
        let again = eta_cholesky(&(ch.c.transpose() * eta() * ch.c)).unwrap();
        prop_assert!(max_abs4(&(again.c - ch.c)) < 1e-12);
        let coset = square_root_coset(&ch.c, &g).unwrap();
        prop_assert!(max_abs4(&(coset.l - Matrix4::identity())) < 1e-12);
    }

    #[test]
    fn square_roots_differ_by_lorentz(g in admissible_metric(), l in lorentz()) {
        let c = cholesky_tetrad(&g).unwrap().try_inverse().unwrap();
        let b2 = l * c;
        let coset = square_root_coset(&b2, &g).unwrap();
        prop_assert!(is_lorentz(&coset.l, 1e-10).ok);
    }

    #[test]
    fn prescriptions_are_orthonormal(g in admissible_metric()) {
        for p in [Prescription::Cholesky, Prescription::TimeGauge] {
            let a = tetrad_for(p, &g).unwrap();
            prop_assert!(orthonormality_residual(&a, &g) < 1e-11);
        }
        let a = cholesky_tetrad(&g).unwrap();
        let c = a.try_inverse().unwrap();
        for i in 0..4 {
            prop_assert!(c[(i, i)] > 0.0);
            for j in i + 1..4 {
                prop_assert!(c[(i, j)].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exp_of_log_is_identity(l in lorentz()) {
        let w = lorentz_log(&l).unwrap();
        prop_assert!(max_abs4(&(lorentz_exp(&w) - l)) < 1e-9);
    }

    #[test]
    fn lift_is_a_homomorphism_up_to_sign(l1 in lorentz(), l2 in lorentz()) {
        let flat = FlatGammaSet::dirac();
        let l12 = l1 * l2;
        prop_assume!(lorentz_log(&l12).is_ok());
        let s12 = spin_lift(&l12, &flat).unwrap().s;
        let prod = spin_lift(&l1, &flat).unwrap().s * spin_lift(&l2, &flat).unwrap().s;
        let plus = (s12 - prod).iter().fold(0.0f64, |a, v| a.max(v.norm()));
        let minus = (s12 + prod).iter().fold(0.0f64, |a, v| a.max(v.norm()));
        prop_assert!(plus.min(minus) < 1e-9);
        prop_assert!(lift_residual(&s12, &l12, &flat).unwrap() < 1e-9);
    }

    #[test]
    fn representation_change_is_the_same_similarity(
        g in admissible_metric(),
        entries in prop::array::uniform32(-0.3f64..0.3),
    ) {
        let d = FlatGammaSet::dirac();
        let t = CMat4::identity() + CMat4::from_fn(|i, j| C64::new(entries[4 * i + j], entries[16 + 4 * i + j]));
        let tinv = t.try_inverse().unwrap();
        let other = FlatGammaSet::custom([0, 1, 2, 3].map(|a| tinv * d.gamma[a] * t)).unwrap();
        let a = cholesky_tetrad(&g).unwrap();
        let gd = gammas_from_tetrad(&a, &d);
        let go = gammas_from_tetrad(&a, &other);
        for mu in 0..4 {
            let r: CMat4 = tinv * gd[mu] * t - go[mu];
            prop_assert!(r.iter().all(|v| v.norm() < 1e-11));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn constant_similarity_keeps_the_spectrum(r in prop::array::uniform3(-1.0f64..1.0), b in prop::array::uniform3(-0.5f64..0.5)) {
        let flat = FlatGammaSet::dirac();
        let args = CatalogArgs {
            exprs: [("a".to_string(), "1 + 0.1*x0".to_string())].into_iter().collect(),
            ..Default::default()
        };
        let field = TetradField::new(catalog_metric("flrw_flat", &args).unwrap(), Prescription::Diagonal);
        let grid = Grid::new(1, 6, 3.0).unwrap().with_x0(1.0);
        let f = FieldOnGrid::build(&field, &flat, &grid, Variant::Dfw, &Steps::default()).unwrap();
        let h = assemble_hamiltonian(&f, 1.0, Scheme::Central).unwrap();
        let s = spin_lift(&lorentz_exp(&so13_generator(r, b)), &flat).unwrap().s;
        let hs = h.conjugate(&s).unwrap();
        let a = spectrum(&h, DEFAULT_DIMENSION_CAP).unwrap();
        let z = spectrum(&hs, DEFAULT_DIMENSION_CAP).unwrap();
        prop_assert!(spectral_distance(&a.values, &z.values).unwrap() < 1e-10);
    }
}
