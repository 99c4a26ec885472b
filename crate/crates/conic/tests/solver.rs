use bpop_conic::{solve, ConicProgram, PsdBlock, Status};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sym(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0) * scale);
    (&a + a.transpose()) * 0.5
}

fn block_from(f0: &DMatrix<f64>, fs: &[DMatrix<f64>]) -> PsdBlock {
    let n = f0.nrows();
    let mut b = PsdBlock::new(n);
    for i in 0..n {
        for j in i..n {
            b.add_constant(i, j, f0[(i, j)]);
            for (k, f) in fs.iter().enumerate() {
                b.add_coef(k, i, j, f[(i, j)]);
            }
        }
    }
    b
}

struct Instance {
    cp: ConicProgram,
    c: DVector<f64>,
    blocks: Vec<(DMatrix<f64>, Vec<DMatrix<f64>>)>,
}

/// Three PSD blocks over four variables: two random LMIs that hold at the
/// origin plus the unit ball `[[1, u^T], [u, I]]`.
fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nv = 4;
    let mut blocks = Vec::new();
    for dim in [3usize, 4] {
        let f0 = DMatrix::identity(dim, dim);
        let fs: Vec<_> = (0..nv).map(|_| random_sym(&mut rng, dim, 1.0)).collect();
        blocks.push((f0, fs));
    }
    let mut f0 = DMatrix::identity(nv + 1, nv + 1);
    f0[(0, 0)] = 1.0;
    let fs: Vec<_> = (0..nv)
        .map(|k| {
            let mut m = DMatrix::zeros(nv + 1, nv + 1);
            m[(0, k + 1)] = 1.0;
            m[(k + 1, 0)] = 1.0;
            m
        })
        .collect();
    blocks.push((f0, fs));
    let c = DVector::from_fn(nv, |_, _| rng.gen_range(-1.0..1.0));
    let mut cp = ConicProgram::new(nv);
    cp.set_objective(c.iter().copied().collect());
    for (f0, fs) in &blocks {
        cp.add_psd_block(block_from(f0, fs));
    }
    Instance { cp, c, blocks }
}

fn affine(f0: &DMatrix<f64>, fs: &[DMatrix<f64>], u: &DVector<f64>) -> DMatrix<f64> {
    let mut m = f0.clone();
    for (k, f) in fs.iter().enumerate() {
        m += f * u[k];
    }
    m
}

/// Primal log-barrier path following with damped Newton steps, written
/// independently of the solver under test.
fn barrier_oracle(inst: &Instance) -> (f64, DVector<f64>) {
    let nv = inst.c.len();
    let mut u = DVector::zeros(nv);
    let barrier = |u: &DVector<f64>, t: f64| -> Option<f64> {
        let mut v = t * inst.c.dot(u);
        for (f0, fs) in &inst.blocks {
            let m = affine(f0, fs, u);
            let ch = m.cholesky()?;
            v -= 2.0 * ch.l().diagonal().map(|x| x.ln()).sum();
        }
        Some(v)
    };
    let mut t = 1.0;
    while t < 1e11 {
        for _ in 0..100 {
            let mut g = &inst.c * t;
            let mut h = DMatrix::zeros(nv, nv);
            for (f0, fs) in &inst.blocks {
                let minv = affine(f0, fs, &u).try_inverse().unwrap();
                let prods: Vec<_> = fs.iter().map(|f| &minv * f).collect();
                for i in 0..nv {
                    g[i] -= prods[i].trace();
                    for j in 0..nv {
                        h[(i, j)] += (&prods[i] * &prods[j]).trace();
                    }
                }
            }
            let dx = -h.clone().cholesky().unwrap().solve(&g);
            let dec = (-g.dot(&dx)).sqrt();
            if dec < 1e-10 {
                break;
            }
            let f_cur = barrier(&u, t).unwrap();
            let mut a = 1.0;
            loop {
                let cand = &u + &dx * a;
                if let Some(fv) = barrier(&cand, t) {
                    if fv <= f_cur + 0.25 * a * g.dot(&dx) {
                        u = cand;
                        break;
                    }
                }
                a *= 0.5;
                if a < 1e-14 {
                    break;
                }
            }
        }
        t *= 4.0;
    }
    (inst.c.dot(&u), u)
}

#[test]
fn random_three_block_sdps_match_barrier_oracle() {
    for seed in 0..10 {
        let inst = random_instance(seed);
        let r = solve(&inst.cp);
        assert_eq!(r.status, Status::Optimal, "seed {seed}");
        let (oval, _) = barrier_oracle(&inst);
        assert!((r.objective - oval).abs() <= 1e-5, "seed {seed}: {} vs {}", r.objective, oval);
        // dual certificate: A^*(Z) = c and the gap closes
        let mut atz = DVector::zeros(4);
        let mut f0z = 0.0;
        for ((f0, fs), z) in inst.blocks.iter().zip(&r.psd_duals) {
            for (k, f) in fs.iter().enumerate() {
                atz[k] += f.dot(z);
            }
            f0z += f0.dot(z);
            assert!(z.clone().symmetric_eigenvalues().min() >= -1e-7);
        }
        assert!((&atz - &inst.c).amax() <= 1e-6, "seed {seed}");
        assert!((r.objective + f0z).abs() <= 1e-6, "seed {seed}");
    }
}

#[test]
fn optimal_solves_meet_residual_bounds() {
    for seed in 20..30 {
        let inst = random_instance(seed);
        let r = solve(&inst.cp);
        assert_eq!(r.status, Status::Optimal);
        assert!(r.primal_residual <= 1e-7 && r.dual_residual <= 1e-7 && r.rel_gap <= 1e-7);
        assert!(inst.cp.max_violation(r.u.as_slice()) <= 1e-7);
    }
}

#[test]
fn equality_constrained_program_is_feasible_in_original_space() {
    let mut inst = random_instance(7);
    inst.cp.add_equality(vec![(0, 1.0), (1, 2.0)], 0.1);
    inst.cp.add_equality(vec![(2, 1.0), (3, -1.0)], 0.0);
    inst.cp.add_equality(vec![(0, 2.0), (1, 4.0)], 0.2);
    let r = solve(&inst.cp);
    assert_eq!(r.status, Status::Optimal);
    assert!((r.u[0] + 2.0 * r.u[1] - 0.1).abs() <= 1e-7);
    assert!((r.u[2] - r.u[3]).abs() <= 1e-7);
    assert!(inst.cp.max_violation(r.u.as_slice()) <= 1e-7);
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let inst = random_instance(3);
    let a = solve(&inst.cp);
    let b = solve(&inst.cp);
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.u.as_slice(), b.u.as_slice());
}

#[test]
fn scaling_the_objective_keeps_the_argmin() {
    for seed in 40..45 {
        let inst = random_instance(seed);
        let base = solve(&inst.cp);
        for alpha in [0.01, 7.0, 300.0] {
            let mut cp = inst.cp.clone();
            cp.objective.iter_mut().for_each(|c| *c *= alpha);
            let r = solve(&cp);
            assert_eq!(r.status, Status::Optimal);
            assert!((&r.u - &base.u).amax() <= 1e-6, "seed {seed} alpha {alpha} diff {} it {} {} res {} {} {}", (&r.u - &base.u).amax(), r.iterations, base.iterations, r.primal_residual, r.dual_residual, r.rel_gap);
        }
    }
}

#[test]
fn infeasible_lmi_is_detected() {
    // u >= 1 and [[-u, 0], [0, 1]] PSD
    let mut cp = ConicProgram::new(1);
    cp.set_objective(vec![1.0]);
    cp.add_nonneg(-1.0, vec![(0, 1.0)]);
    let mut b = PsdBlock::new(2);
    b.add_coef(0, 0, 0, -1.0);
    b.add_constant(1, 1, 1.0);
    cp.add_psd_block(b);
    assert_eq!(solve(&cp).status, Status::Infeasible);
}

#[test]
fn fully_determined_program_is_checked_directly() {
    let mut cp = ConicProgram::new(1);
    cp.set_objective(vec![2.0]);
    cp.add_equality(vec![(0, 1.0)], 1.0);
    cp.add_nonneg(0.0, vec![(0, 1.0)]);
    let r = solve(&cp);
    assert_eq!(r.status, Status::Optimal);
    assert!((r.objective - 2.0).abs() < 1e-12);
    cp.add_nonneg(-3.0, vec![(0, 1.0)]);
    assert_eq!(solve(&cp).status, Status::Infeasible);
}


