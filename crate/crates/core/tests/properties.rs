use std::collections::BTreeMap;
use std::path::PathBuf;

use proptest::prelude::*;

use bpop_core::model::{active_set, eliminate_lower_equalities, parse_problem, print_problem, problem_stats, BilevelProblem, RowKind};
use bpop_core::plme::build_plme;
use bpop_core::poly::{Monomial, PolyMatrix, Polynomial, VarSpace};
use bpop_core::pop::{solve_pop, solve_relaxation, PopConfig, PopInstance, PopStatus};
use bpop_conic::DenseIpm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus(name: &str) -> BilevelProblem {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(format!("{name}.bpop"));
    parse_problem(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const CORE: [&str; 17] = [
    "ex22", "ex34_locmin", "ex61", "ex62", "ex63", "ex64", "ex65", "ex66", "ex67", "ex68", "bf2", "cw", "fe", "mq2", "smd3", "wwl", "bipa4",
];

fn poly_strategy(nvars: usize, max_exp: u16, terms: usize) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((prop::collection::vec(0..=max_exp, nvars), -3i32..=3), 1..=terms).prop_map(move |ts| {
        let sp = VarSpace::flat(nvars);
        Polynomial::from_terms(sp, ts.into_iter().map(|(e, c)| (Monomial::from_exponents(e), c as f64)))
    })
}

fn close(a: &Polynomial, b: &Polynomial, tol: f64) -> bool {
    (a - b).max_abs_coeff() <= tol * (1.0 + a.max_abs_coeff().max(b.max_abs_coeff()))
}

fn point_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn product_rule(f in poly_strategy(3, 3, 5), g in poly_strategy(3, 3, 5), v in 0usize..3) {
        let lhs = (&f * &g).differentiate(v).unwrap();
        let rhs = &(&f.differentiate(v).unwrap() * &g) + &(&f * &g.differentiate(v).unwrap());
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn evaluation_is_a_ring_homomorphism(f in poly_strategy(3, 3, 5), g in poly_strategy(3, 3, 5), w in point_strategy(3)) {
        let (fv, gv) = (f.eval(&w), g.eval(&w));
        let scale = 1.0 + fv.abs().max(gv.abs()).powi(2);
        prop_assert!(((&f * &g).eval(&w) - fv * gv).abs() <= 1e-10 * scale);
        prop_assert!(((&f + &g).eval(&w) - (fv + gv)).abs() <= 1e-10 * scale);
        prop_assert!(((&f - &g).eval(&w) - (fv - gv)).abs() <= 1e-10 * scale);
    }

    #[test]
    fn substitution_commutes_with_products(
        f in poly_strategy(3, 2, 4),
        g in poly_strategy(3, 2, 4),
        s0 in poly_strategy(3, 1, 3),
        s2 in poly_strategy(3, 1, 3),
        w in point_strategy(3),
    ) {
        let assign: BTreeMap<usize, Polynomial> = [(0, s0.clone()), (2, s2.clone())].into_iter().collect();
        let fg = (&f * &g).substitute_poly(&assign).unwrap();
        let prod = &f.substitute_poly(&assign).unwrap() * &g.substitute_poly(&assign).unwrap();
        prop_assert!(close(&fg, &prod, 1e-10));
        // evaluating after substitution equals evaluating at the mapped point
        let mapped = [s0.eval(&w), w[1], s2.eval(&w)];
        let lhs = f.substitute_poly(&assign).unwrap().eval(&w);
        prop_assert!((lhs - f.eval(&mapped)).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn adjugate_identity(entries in prop::collection::vec(poly_strategy(2, 2, 3), 9)) {
        let sp = VarSpace::flat(2);
        let rows: Vec<Vec<Polynomial>> = entries.chunks(3).map(<[Polynomial]>::to_vec).collect();
        let m = PolyMatrix::from_rows(sp, rows).unwrap();
        let (adj, det) = m.adjugate_det().unwrap();
        for prod in [m.mul(&adj).unwrap(), adj.mul(&m).unwrap()] {
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { det.clone() } else { Polynomial::zero(sp) };
                    prop_assert!(close(prod.get(i, j), &want, 1e-12), "entry ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn active_set_grows_with_tolerance(w in point_strategy(3), t1 in 0.0f64..1.0, dt in 0.0f64..1.0) {
        let p = corpus("ex22");
        let small = active_set(&p, &w, t1);
        let large = active_set(&p, &w, t1 + dt);
        prop_assert!(small.iter().all(|j| large.contains(j)));
    }

    #[test]
    fn eliminated_equalities_hold_after_lifting(w in point_strategy(5)) {
        for name in ["bipa4", "bipa5"] {
            let p = corpus(name);
            let (red, back) = eliminate_lower_equalities(&p).unwrap();
            let r = &w[..red.space.total()];
            let full = back.lift(r);
            prop_assert_eq!(back.restrict(&full), r.to_vec());
            for row in p.lower_rows.iter().filter(|r| r.kind == RowKind::Eq) {
                let v = p.g(row).eval(&full);
                prop_assert!(v.abs() <= 1e-10, "{name} row {}: {v}", row.label);
            }
            // the reduced objective agrees with the original one on lifted points
            let fo = p.upper_obj.eval(&full);
            let fr = red.upper_obj.eval(r);
            prop_assert!((fo - fr).abs() <= 1e-9 * (1.0 + fo.abs()));
        }
    }
}

#[test]
fn printed_problems_parse_back_to_the_same_functions() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for name in CORE.iter().chain(&["bipa5", "bard2", "cvc", "nwyz55", "nwyz56", "bipa1"]) {
        let p = corpus(name);
        let q = parse_problem(&print_problem(&p)).unwrap();
        assert_eq!(p.space, q.space, "{name}");
        assert_eq!(p.lower_rows.len(), q.lower_rows.len(), "{name}");
        for _ in 0..20 {
            let w: Vec<f64> = (0..p.space.total()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let pairs = [(p.upper_obj.eval(&w), q.upper_obj.eval(&w))]
                .into_iter()
                .chain(p.upper_ineq.iter().zip(&q.upper_ineq).map(|(a, b)| (a.eval(&w), b.eval(&w))))
                .chain(p.lower_rows.iter().zip(&q.lower_rows).map(|(a, b)| (p.g(a).eval(&w), q.g(b).eval(&w))));
            for (a, b) in pairs {
                assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{name}: {a} vs {b}");
            }
            if let (Ok(a), Ok(b)) = (p.lower_obj.evaluate(&w), q.lower_obj.evaluate(&w)) {
                assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{name}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn generic_rank_and_supports_do_not_depend_on_the_seed() {
    for name in CORE {
        let p = corpus(name);
        let (red, _) = eliminate_lower_equalities(&p).unwrap();
        let base = problem_stats(&red, None, 42, 2000).unwrap();
        for seed in [1, 2, 3, 1234] {
            let s = problem_stats(&red, None, seed, 2000).unwrap();
            assert_eq!(s.t, base.t, "{name} seed {seed}");
            assert_eq!(s.supports, base.supports, "{name} seed {seed}");
        }
    }
}

#[test]
fn gram_determinants_are_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for name in CORE {
        let p = corpus(name);
        let (red, _) = eliminate_lower_equalities(&p).unwrap();
        let stats = problem_stats(&red, None, 42, 2000).unwrap();
        for j in &stats.supports {
            let pl = build_plme(&red, j).unwrap();
            let scale = pl.d.max_abs_coeff().max(1.0);
            for _ in 0..1000 {
                let w: Vec<f64> = (0..red.space.total()).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let v = pl.d.eval(&w);
                assert!(v >= -1e-9 * scale, "{name} J={j:?}: d = {v}");
            }
        }
    }
}

/// Points of the lower KKT set of the one-dimensional example: the path
/// through (1/6, -1/2), (1/2, 1/2), (1, 1), (3/2, 1) and (9/4, -1/2).
fn kkt_path(s: f64) -> [f64; 2] {
    let knots = [[1.0 / 6.0, -0.5], [0.5, 0.5], [1.0, 1.0], [1.5, 1.0], [2.25, -0.5]];
    let u = s.clamp(0.0, 1.0) * 4.0;
    let k = (u.floor() as usize).min(3);
    let t = u - k as f64;
    [knots[k][0] + t * (knots[k + 1][0] - knots[k][0]), knots[k][1] + t * (knots[k + 1][1] - knots[k][1])]
}

/// Whether `w` satisfies the branch conditions of support `j`: primal
/// feasibility, sign, complementarity and stationarity.
fn in_branch(p: &BilevelProblem, j: &[usize], w: &[f64]) -> bool {
    let tol = 1e-7;
    let pl = build_plme(p, j).unwrap();
    let Some(lam) = pl.lambda_at(w) else { return false };
    let feasible = p.lower_rows.iter().all(|r| p.g(r).eval(w) >= -tol);
    let signs = lam.iter().all(|&l| l >= -tol);
    let comp = j.iter().zip(&lam).all(|(&r, &l)| (l * p.g_index(r).eval(w)).abs() <= tol);
    let stat = pl.stationarity(p).iter().all(|s| s.eval(w).abs() <= tol);
    feasible && signs && comp && stat
}

#[test]
fn kkt_points_decompose_into_branches() {
    let p = corpus("ex34_locmin");
    let stats = problem_stats(&p, None, 42, 2000).unwrap();
    assert_eq!(stats.t, 1);
    for i in 0..=400 {
        let w = kkt_path(i as f64 / 400.0);
        assert!(stats.supports.iter().any(|j| in_branch(&p, j, &w)), "KKT point {w:?} is in no branch");
    }
    // lower feasible points off the path belong to no branch
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    while checked < 400 {
        let w = [rng.gen_range(0.0..2.5), rng.gen_range(-1.0..1.0)];
        let on_path = (0..=4000).any(|i| {
            let q = kkt_path(i as f64 / 4000.0);
            (q[0] - w[0]).abs() + (q[1] - w[1]).abs() < 1e-2
        });
        if on_path || p.lower_rows.iter().any(|r| p.g(r).eval(&w) < 0.0) {
            continue;
        }
        checked += 1;
        assert!(!stats.supports.iter().any(|j| in_branch(&p, j, &w)), "{w:?} is not a KKT point");
    }
}

/// Random polynomial of degree at most four on the box `[-1, 1]^n`.
fn random_box_pop(rng: &mut ChaCha8Rng, n: usize) -> PopInstance {
    let sp = VarSpace::flat(n);
    let mut f = Polynomial::zero(sp);
    let exps: Vec<Vec<u16>> = if n == 1 {
        (0..=4).map(|a| vec![a]).collect()
    } else {
        (0..=4u16).flat_map(|a| (0..=4 - a).map(move |b| vec![a, b])).collect()
    };
    for e in exps {
        if rng.gen_bool(0.6) {
            f.add_term(Monomial::from_exponents(e), rng.gen_range(-2.0..2.0));
        }
    }
    let mut pop = PopInstance::new(f);
    for i in 0..n {
        pop.ineqs.push(&Polynomial::constant(sp, 1.0) - &(&Polynomial::var(sp, i) * &Polynomial::var(sp, i)));
    }
    pop
}

/// Grid minimum on the box refined by repeated zooming around the best
/// grid point.
fn grid_oracle(f: &Polynomial, n: usize) -> f64 {
    let steps = if n == 1 { 20_000 } else { 200 };
    let mut center = vec![0.0; n];
    let mut half = 1.0;
    let mut best = f64::INFINITY;
    for _ in 0..6 {
        let axis: Vec<f64> = (0..=steps).map(|i| -half + 2.0 * half * i as f64 / steps as f64).collect();
        let mut arg = center.clone();
        let mut visit = |w: Vec<f64>| {
            if w.iter().all(|v| v.abs() <= 1.0) {
                let v = f.eval(&w);
                if v < best {
                    best = v;
                    arg = w;
                }
            }
        };
        if n == 1 {
            for a in &axis {
                visit(vec![center[0] + a]);
            }
        } else {
            for a in &axis {
                for b in &axis {
                    visit(vec![center[0] + a, center[1] + b]);
                }
            }
        }
        center = arg;
        half *= 4.0 / steps as f64;
    }
    best
}

#[test]
fn moment_bounds_are_monotone_and_sandwich_the_grid_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = PopConfig::default();
    let mut certified = 0;
    for case in 0..50 {
        let n = 1 + case % 2;
        let pop = random_box_pop(&mut rng, n);
        let oracle = grid_oracle(&pop.objective, n);
        let k0 = pop.min_order();
        let mut last = f64::NEG_INFINITY;
        for k in k0..k0 + 3 {
            let sol = solve_relaxation(&pop, k, &cfg, &DenseIpm::default()).unwrap();
            assert_eq!(sol.status, PopStatus::Optimal, "case {case} order {k}");
            assert!(sol.bound >= last - 1e-7, "case {case}: bound dropped from {last} to {} at order {k}", sol.bound);
            assert!(sol.bound <= oracle + 1e-4, "case {case}: bound {} above grid minimum {oracle}", sol.bound);
            last = sol.bound;
        }
        let r = solve_pop(&pop, &cfg).unwrap();
        if r.status == PopStatus::Optimal {
            certified += 1;
            let w = r.best_point().unwrap();
            let v = pop.objective.eval(w);
            assert!(pop.violation(w) <= 1e-5, "case {case}");
            assert!(r.bound <= oracle + 1e-4 && oracle <= v + 1e-4, "case {case}: {} <= {oracle} <= {v}", r.bound);
            assert!((v - oracle).abs() <= 1e-4, "case {case}: value {v} vs grid {oracle}");
        }
    }
    assert!(certified >= 45, "only {certified} of 50 random programs certified");
}
