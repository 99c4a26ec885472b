//! Homogeneous self-dual interior-point method with Nesterov-Todd scaling.
//!
//! After presolve the problem is `min c^T x  s.t.  G x + s = h, s in K` with
//! `G = -A` (the linear part of the affine cone map) and `h` its constant
//! part. The embedding
//!
//! ```text
//!   G^T z + c tau = 0,   G x + s - h tau = 0,   c^T x + h^T z + kappa = 0
//! ```
//!
//! is followed from the identity start. A limit with `tau > 0` yields an
//! optimal pair; `kappa > 0` yields an infeasibility or unboundedness ray.

use nalgebra::{DMatrix, DVector};

use crate::presolve::{presolve, Presolved};
use crate::program::ConicProgram;
use crate::{ConicResult, ConicSolver, Status};

/// Tunables of [`DenseIpm`].
#[derive(Debug, Clone)]
pub struct IpmSettings {
    pub max_iter: usize,
    /// Target for the relative primal and dual residuals.
    pub feas_tol: f64,
    /// Target for the relative duality gap.
    pub gap_tol: f64,
    /// Largest residual still labelled optimal when progress stops early.
    pub accept_tol: f64,
    /// Threshold on the infeasibility certificates.
    pub infeas_tol: f64,
    pub step_fraction: f64,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self {
            max_iter: 200,
            feas_tol: 1e-10,
            gap_tol: 1e-10,
            accept_tol: 1e-7,
            infeas_tol: 1e-8,
            step_fraction: 0.99,
        }
    }
}

/// Reference solver: dense Schur complement, Cholesky factorizations.
#[derive(Debug, Clone, Default)]
pub struct DenseIpm {
    pub settings: IpmSettings,
}

impl DenseIpm {
    pub fn new(settings: IpmSettings) -> Self {
        Self { settings }
    }
}

impl ConicSolver for DenseIpm {
    fn solve(&self, cp: &ConicProgram) -> ConicResult {
        match presolve(cp) {
            Err(_) => infeasible_result(cp),
            Ok(pre) => Ipm::new(cp, pre, &self.settings).run(),
        }
    }
}

fn infeasible_result(cp: &ConicProgram) -> ConicResult {
    ConicResult {
        status: Status::Infeasible,
        u: DVector::zeros(cp.nvars),
        psd_duals: cp.psd.iter().map(|b| DMatrix::zeros(b.dim, b.dim)).collect(),
        lin_duals: DVector::zeros(cp.lin.len()),
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        rel_gap: f64::INFINITY,
        objective: f64::NAN,
        iterations: 0,
    }
}

/// Element of the product cone: one symmetric matrix per PSD block followed
/// by the nonnegative orthant.
#[derive(Debug, Clone)]
struct Cone {
    psd: Vec<DMatrix<f64>>,
    lin: DVector<f64>,
}

impl Cone {
    fn zeros(dims: &[usize], nlin: usize) -> Self {
        Self { psd: dims.iter().map(|&d| DMatrix::zeros(d, d)).collect(), lin: DVector::zeros(nlin) }
    }

    fn identity(dims: &[usize], nlin: usize) -> Self {
        Self {
            psd: dims.iter().map(|&d| DMatrix::identity(d, d)).collect(),
            lin: DVector::from_element(nlin, 1.0),
        }
    }

    fn dot(&self, o: &Cone) -> f64 {
        let mut s = self.lin.dot(&o.lin);
        for (a, b) in self.psd.iter().zip(&o.psd) {
            s += a.dot(b);
        }
        s
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn axpy(&mut self, a: f64, x: &Cone) {
        self.lin.axpy(a, &x.lin, 1.0);
        for (m, xm) in self.psd.iter_mut().zip(&x.psd) {
            m.zip_apply(xm, |v, w| *v += a * w);
        }
    }

    fn scaled(&self, a: f64) -> Cone {
        Cone { psd: self.psd.iter().map(|m| m * a).collect(), lin: &self.lin * a }
    }
}

/// Symmetric block data with both triangles expanded and grouped by variable.
struct BlockData {
    /// `(var, entries)` with entries `(row, col, value)`.
    groups: Vec<(usize, Vec<(usize, usize, f64)>)>,
}

/// NT scaling of the current iterate.
struct Scaling {
    r: Vec<DMatrix<f64>>,
    rinv: Vec<DMatrix<f64>>,
    p: Vec<DMatrix<f64>>,
    lam_psd: Vec<DVector<f64>>,
    w_lin: DVector<f64>,
    lam_lin: DVector<f64>,
}

impl Scaling {
    fn compute(s: &Cone, z: &Cone) -> Option<Scaling> {
        let mut r = Vec::new();
        let mut p = Vec::new();
        let mut rinv = Vec::new();
        let mut lam_psd = Vec::new();
        for (sm, zm) in s.psd.iter().zip(&z.psd) {
            let n = sm.nrows();
            if n == 0 {
                r.push(DMatrix::zeros(0, 0));
                rinv.push(DMatrix::zeros(0, 0));
                p.push(DMatrix::zeros(0, 0));
                lam_psd.push(DVector::zeros(0));
                continue;
            }
            let ls = sm.clone().cholesky()?.unpack();
            let lz = zm.clone().cholesky()?.unpack();
            let m = lz.tr_mul(&ls);
            let svd = m.svd(true, true);
            let u = svd.u?;
            let vt = svd.v_t?;
            let sig = svd.singular_values;
            if sig.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return None;
            }
            let isq = sig.map(|x| 1.0 / x.sqrt());
            // R = L_s V diag(sig)^{-1/2}
            let mut rm = ls * vt.transpose();
            for j in 0..n {
                rm.column_mut(j).scale_mut(isq[j]);
            }
            // R^{-1} = diag(sig)^{-1/2} U^T L_z^T
            let mut ri = u.transpose() * lz.transpose();
            for i in 0..n {
                ri.row_mut(i).scale_mut(isq[i]);
            }
            p.push(ri.tr_mul(&ri));
            r.push(rm);
            rinv.push(ri);
            lam_psd.push(sig);
        }
        if s.lin.iter().chain(z.lin.iter()).any(|&v| !(v > 0.0)) {
            return None;
        }
        let w_lin = s.lin.zip_map(&z.lin, |a, b| (a / b).sqrt());
        let lam_lin = s.lin.zip_map(&z.lin, |a, b| (a * b).sqrt());
        Some(Scaling { r, rinv, p, lam_psd, w_lin, lam_lin })
    }

    /// `W v`
    fn w(&self, v: &Cone) -> Cone {
        Cone {
            psd: v.psd.iter().zip(&self.r).map(|(m, r)| r.tr_mul(m) * r).collect(),
            lin: v.lin.component_mul(&self.w_lin),
        }
    }

    /// `W^T v`
    fn wt(&self, v: &Cone) -> Cone {
        Cone {
            psd: v.psd.iter().zip(&self.r).map(|(m, r)| r * m * r.transpose()).collect(),
            lin: v.lin.component_mul(&self.w_lin),
        }
    }

    /// `W^{-T} v`
    fn winvt(&self, v: &Cone) -> Cone {
        Cone {
            psd: v.psd.iter().zip(&self.rinv).map(|(m, ri)| ri * m * ri.transpose()).collect(),
            lin: v.lin.component_div(&self.w_lin),
        }
    }

    /// `W^{-1} v`
    fn winv(&self, v: &Cone) -> Cone {
        Cone {
            psd: v.psd.iter().zip(&self.rinv).map(|(m, ri)| ri.tr_mul(m) * ri).collect(),
            lin: v.lin.component_div(&self.w_lin),
        }
    }

    /// Solve `lambda o X = c` for `X`.
    fn lambda_div(&self, c: &Cone) -> Cone {
        Cone {
            psd: c
                .psd
                .iter()
                .zip(&self.lam_psd)
                .map(|(m, l)| DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| 2.0 * m[(i, j)] / (l[i] + l[j])))
                .collect(),
            lin: c.lin.component_div(&self.lam_lin),
        }
    }

    /// `lambda o lambda`
    fn lambda_sq(&self) -> Cone {
        Cone {
            psd: self.lam_psd.iter().map(|l| DMatrix::from_diagonal(&l.map(|x| x * x))).collect(),
            lin: self.lam_lin.map(|x| x * x),
        }
    }

    /// Largest step keeping `lambda + alpha d` in the cone.
    fn max_step(&self, d: &Cone) -> f64 {
        let mut alpha = f64::INFINITY;
        for (m, l) in d.psd.iter().zip(&self.lam_psd) {
            let n = m.nrows();
            if n == 0 {
                continue;
            }
            let isq = l.map(|x| 1.0 / x.sqrt());
            let sc = DMatrix::from_fn(n, n, |i, j| m[(i, j)] * isq[i] * isq[j]);
            let sym = (&sc + sc.transpose()) * 0.5;
            let emin = sym.symmetric_eigenvalues().min();
            if emin < 0.0 {
                alpha = alpha.min(-1.0 / emin);
            }
        }
        for (dv, l) in d.lin.iter().zip(self.lam_lin.iter()) {
            if *dv < 0.0 {
                alpha = alpha.min(-l / dv);
            }
        }
        alpha
    }
}

/// Symmetric product `(a b + b a) / 2`.
fn circ(a: &Cone, b: &Cone) -> Cone {
    Cone {
        psd: a
            .psd
            .iter()
            .zip(&b.psd)
            .map(|(x, y)| {
                let p = x * y;
                (&p + p.transpose()) * 0.5
            })
            .collect(),
        lin: a.lin.component_mul(&b.lin),
    }
}

struct Ipm<'a> {
    cp: &'a ConicProgram,
    pre: Presolved,
    settings: &'a IpmSettings,
    blocks: Vec<BlockData>,
    dims: Vec<usize>,
    nlin: usize,
    /// Reduced objective `N^T c`, divided by `cscale`.
    c: DVector<f64>,
    cscale: f64,
    /// Constant cone term `F0 + A(u0)`.
    h: Cone,
    nfree: usize,
}

struct Iterate {
    x: DVector<f64>,
    s: Cone,
    z: Cone,
    tau: f64,
    kappa: f64,
}

struct Metrics {
    pres: f64,
    dres: f64,
    relgap: f64,
    pinfres: Option<f64>,
    dinfres: Option<f64>,
}

impl<'a> Ipm<'a> {
    fn new(cp: &'a ConicProgram, pre: Presolved, settings: &'a IpmSettings) -> Self {
        let mut blocks = Vec::new();
        for blk in &cp.psd {
            let mut by_var: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> = Default::default();
            for &(k, r, c, v) in &blk.coefs {
                let e = by_var.entry(k).or_default();
                e.push((r, c, v));
                if r != c {
                    e.push((c, r, v));
                }
            }
            blocks.push(BlockData { groups: by_var.into_iter().collect() });
        }
        let dims: Vec<usize> = cp.psd.iter().map(|b| b.dim).collect();
        let nlin = cp.lin.len();
        let u0 = pre.u0.as_slice().to_vec();
        let h = Cone {
            psd: cp.psd.iter().map(|b| b.evaluate(&u0)).collect(),
            lin: DVector::from_iterator(nlin, cp.lin.iter().map(|r| r.evaluate(&u0))),
        };
        let c = pre.restrict(&DVector::from_column_slice(&cp.objective));
        // Work with a unit objective; the argmin does not depend on its scale.
        let cscale = if c.amax() > 0.0 { c.amax() } else { 1.0 };
        let c = c / cscale;
        let nfree = pre.nfree;
        Self { cp, pre, settings, blocks, dims, nlin, c, cscale, h, nfree }
    }

    /// `A(u)` for `u` over the original variables.
    fn a_op(&self, u: &DVector<f64>) -> Cone {
        let mut out = Cone::zeros(&self.dims, self.nlin);
        for (b, blk) in self.blocks.iter().enumerate() {
            let m = &mut out.psd[b];
            for (k, ents) in &blk.groups {
                let uk = u[*k];
                if uk == 0.0 {
                    continue;
                }
                for &(r, c, v) in ents {
                    m[(r, c)] += v * uk;
                }
            }
        }
        for (i, row) in self.cp.lin.iter().enumerate() {
            out.lin[i] = row.coefs.iter().map(|&(k, a)| a * u[k]).sum();
        }
        out
    }

    /// `A^*(Z)` over the original variables.
    fn a_adj(&self, z: &Cone) -> DVector<f64> {
        let mut out = DVector::zeros(self.cp.nvars);
        for (b, blk) in self.blocks.iter().enumerate() {
            let m = &z.psd[b];
            for (k, ents) in &blk.groups {
                out[*k] += ents.iter().map(|&(r, c, v)| v * m[(r, c)]).sum::<f64>();
            }
        }
        for (i, row) in self.cp.lin.iter().enumerate() {
            for &(k, a) in &row.coefs {
                out[k] += a * z.lin[i];
            }
        }
        out
    }

    /// `G x` in reduced coordinates.
    fn g_op(&self, x: &DVector<f64>) -> Cone {
        self.a_op(&self.pre.expand(x)).scaled(-1.0)
    }

    /// `G^T z` in reduced coordinates.
    fn gt_op(&self, z: &Cone) -> DVector<f64> {
        -self.pre.restrict(&self.a_adj(z))
    }

    /// Schur complement `G^T (W^T W)^{-1} G`.
    fn schur(&self, sc: &Scaling) -> DMatrix<f64> {
        let n = self.cp.nvars;
        let mut hf = DMatrix::<f64>::zeros(n, n);
        for (b, blk) in self.blocks.iter().enumerate() {
            let p = &sc.p[b];
            let g = &blk.groups;
            for i in 0..g.len() {
                let (vi, ei) = (&g[i].0, &g[i].1);
                for j in i..g.len() {
                    let (vj, ej) = (&g[j].0, &g[j].1);
                    let mut acc = 0.0;
                    for &(re, ce, ve) in ei {
                        let mut inner = 0.0;
                        for &(rf, cf, vf) in ej {
                            inner += vf * p[(re, rf)] * p[(cf, ce)];
                        }
                        acc += ve * inner;
                    }
                    hf[(*vi, *vj)] += acc;
                    if vi != vj {
                        hf[(*vj, *vi)] += acc;
                    }
                }
            }
        }
        for (r, row) in self.cp.lin.iter().enumerate() {
            let d = 1.0 / (sc.w_lin[r] * sc.w_lin[r]);
            for &(k, a) in &row.coefs {
                for &(l, bcoef) in &row.coefs {
                    hf[(k, l)] += d * a * bcoef;
                }
            }
        }
        self.pre.project(hf)
    }

    fn metrics(&self, it: &Iterate) -> Metrics {
        let resx0 = self.c.norm().max(1.0);
        let resz0 = self.h.norm().max(1.0);
        let gx = self.g_op(&it.x);
        let gtz = self.gt_op(&it.z);
        let mut rz = gx.clone();
        rz.axpy(1.0, &it.s);
        rz.axpy(-it.tau, &self.h);
        let rx = &gtz + &self.c * it.tau;
        let cx = self.c.dot(&it.x);
        let hz = self.h.dot(&it.z);
        let pres = rz.norm() / it.tau / resz0;
        let dres = rx.norm() / it.tau / resx0;
        let pcost = cx / it.tau;
        let dcost = -hz / it.tau;
        let gap = it.s.dot(&it.z) / (it.tau * it.tau);
        let relgap = gap.max((pcost - dcost).abs()) / (1.0 + pcost.abs());
        let pinfres = if hz < 0.0 { Some(gtz.norm() / resx0 / (-hz)) } else { None };
        let dinfres = if cx < 0.0 {
            let mut r = gx;
            r.axpy(1.0, &it.s);
            Some(r.norm() / resz0 / (-cx))
        } else {
            None
        };
        Metrics { pres, dres, relgap, pinfres, dinfres }
    }

    fn run(self) -> ConicResult {
        if self.nfree == 0 {
            return self.finish_trivial();
        }
        let st = self.settings;
        let nu = self.dims.iter().sum::<usize>() + self.nlin;
        let mut it = Iterate {
            x: DVector::zeros(self.nfree),
            s: Cone::identity(&self.dims, self.nlin),
            z: Cone::identity(&self.dims, self.nlin),
            tau: 1.0,
            kappa: 1.0,
        };
        let mut best: Option<(f64, DVector<f64>, Cone, f64)> = None;
        let mut status = Status::Stalled;
        let mut iters = 0;
        let mut best_k = 0;
        for k in 0..=st.max_iter {
            iters = k;
            let m = self.metrics(&it);
            let score = m.pres.max(m.dres).max(m.relgap);
            if score.is_finite() && best.as_ref().is_none_or(|b| score < b.0) {
                best = Some((score, it.x.clone() / it.tau, it.z.scaled(1.0 / it.tau), it.tau));
                best_k = k;
            }
            // no improvement for a while once the iterate is already good
            if k >= best_k + 5 && best.as_ref().is_some_and(|b| b.0 <= st.accept_tol) {
                break;
            }
            if m.pres <= st.feas_tol && m.dres <= st.feas_tol && m.relgap <= st.gap_tol {
                status = Status::Optimal;
                break;
            }
            if m.pinfres.is_some_and(|r| r <= st.infeas_tol) {
                status = Status::Infeasible;
                break;
            }
            if m.dinfres.is_some_and(|r| r <= st.infeas_tol) {
                status = Status::Unbounded;
                break;
            }
            if k == st.max_iter {
                break;
            }
            match self.step(&mut it, nu) {
                Some(alpha) if alpha > 1e-12 => {}
                _ => break,
            }
        }
        match status {
            Status::Infeasible | Status::Unbounded => {
                let scale = match status {
                    Status::Infeasible => -self.h.dot(&it.z),
                    _ => -self.c.dot(&it.x),
                };
                let u = self.pre.lift(&(&it.x / scale.max(f64::MIN_POSITIVE)));
                ConicResult {
                    status,
                    objective: self.cp.objective_value(u.as_slice()),
                    u,
                    psd_duals: it.z.psd.iter().map(|m| m * (self.cscale / scale)).collect(),
                    lin_duals: &it.z.lin * (self.cscale / scale),
                    primal_residual: f64::NAN,
                    dual_residual: f64::NAN,
                    rel_gap: f64::NAN,
                    iterations: iters,
                }
            }
            _ => {
                let (x, z) = if status == Status::Optimal {
                    (it.x.clone() / it.tau, it.z.scaled(1.0 / it.tau))
                } else if let Some((_, bx, bz, _)) = best.clone() {
                    (bx, bz)
                } else {
                    (it.x.clone() / it.tau, it.z.scaled(1.0 / it.tau))
                };
                let fin = Iterate { x: x.clone(), s: self.slack_of(&x), z: z.clone(), tau: 1.0, kappa: 0.0 };
                let mut m = self.metrics(&fin);
                // slack recomputed from x, so the primal residual is exact
                m.pres = self.true_primal_violation(&x);
                let score = m.pres.max(m.dres).max(m.relgap);
                let status = if status == Status::Optimal || score <= st.accept_tol {
                    Status::Optimal
                } else {
                    Status::Stalled
                };
                let u = self.pre.lift(&x);
                ConicResult {
                    status,
                    objective: self.cp.objective_value(u.as_slice()),
                    u,
                    psd_duals: z.psd.iter().map(|m| m * self.cscale).collect(),
                    lin_duals: z.lin * self.cscale,
                    primal_residual: m.pres,
                    dual_residual: m.dres,
                    rel_gap: m.relgap,
                    iterations: iters,
                }
            }
        }
    }

    /// Cone slack `h - G x` at a reduced point.
    fn slack_of(&self, x: &DVector<f64>) -> Cone {
        let mut s = self.h.clone();
        s.axpy(-1.0, &self.g_op(x));
        s
    }

    /// Negative part of the smallest cone eigenvalue of the slack, relative
    /// to the data scale.
    fn true_primal_violation(&self, x: &DVector<f64>) -> f64 {
        let s = self.slack_of(x);
        let resz0 = self.h.norm().max(1.0);
        let mut worst = 0.0_f64;
        for m in &s.psd {
            if m.nrows() > 0 {
                worst = worst.max(-m.clone().symmetric_eigenvalues().min());
            }
        }
        for v in s.lin.iter() {
            worst = worst.max(-v);
        }
        worst / resz0
    }

    fn finish_trivial(self) -> ConicResult {
        let viol = self.true_primal_violation(&DVector::zeros(0));
        let u = self.pre.u0.clone();
        let ok = viol <= self.settings.accept_tol;
        ConicResult {
            status: if ok { Status::Optimal } else { Status::Infeasible },
            objective: self.cp.objective_value(u.as_slice()),
            u,
            psd_duals: self.dims.iter().map(|&d| DMatrix::zeros(d, d)).collect(),
            lin_duals: DVector::zeros(self.nlin),
            primal_residual: viol,
            dual_residual: 0.0,
            rel_gap: 0.0,
            iterations: 0,
        }
    }

    /// One predictor-corrector step; returns the step length taken.
    fn step(&self, it: &mut Iterate, nu: usize) -> Option<f64> {
        let st = self.settings;
        let sc = Scaling::compute(&it.s, &it.z)?;
        let h = self.schur(&sc);
        let chol = factor(h.clone())?;
        let solve_h = |rhs: &DVector<f64>| -> DVector<f64> {
            let mut x = chol.solve(rhs);
            let r = rhs - &h * &x;
            x += chol.solve(&r);
            x
        };
        // K [dx; dz] = [bx; bz]
        // K [dx; dz] = [bx; bz] is solved in scaled form
        //   [0, Gt^T; Gt, -I] [dx; W dz] = [bx; W^{-T} bz],  Gt = W^{-T} G,
        // with one round of iterative refinement.
        let gt_fwd = |x: &DVector<f64>| sc.winvt(&self.g_op(x));
        let gt_adj = |v: &Cone| self.gt_op(&sc.winv(v));
        let reduced = |bx: &DVector<f64>, bzt: &Cone| {
            let dx = solve_h(&(bx + gt_adj(bzt)));
            let mut dzt = gt_fwd(&dx);
            dzt.axpy(-1.0, bzt);
            (dx, dzt)
        };
        let ksolve = |bx: &DVector<f64>, bz: &Cone| -> (DVector<f64>, Cone) {
            let bzt = sc.winvt(bz);
            let (mut dx, mut dzt) = reduced(bx, &bzt);
            let rx = bx - gt_adj(&dzt);
            let mut rz = bzt.clone();
            rz.axpy(-1.0, &gt_fwd(&dx));
            rz.axpy(1.0, &dzt);
            let (ex, ez) = reduced(&rx, &rz);
            dx += ex;
            dzt.axpy(1.0, &ez);
            (dx, sc.winv(&dzt))
        };

        let gx = self.g_op(&it.x);
        let mut rz = gx;
        rz.axpy(1.0, &it.s);
        rz.axpy(-it.tau, &self.h);
        let rx = self.gt_op(&it.z) + &self.c * it.tau;
        let rtau = it.kappa + self.c.dot(&it.x) + self.h.dot(&it.z);
        let mu = (it.s.dot(&it.z) + it.tau * it.kappa) / (nu as f64 + 1.0);

        let (dx1, dz1) = ksolve(&(-&self.c), &self.h);
        let denom_base = self.c.dot(&dx1) + self.h.dot(&dz1) - it.kappa / it.tau;

        let lam_sq = sc.lambda_sq();
        let direction = |eta: f64, rc: &Cone, rkappa: f64| {
            let bx = &rx * (-eta);
            let lrc = sc.lambda_div(rc);
            let mut bz = rz.scaled(-eta);
            bz.axpy(-1.0, &sc.wt(&lrc));
            let (dx0, dz0) = ksolve(&bx, &bz);
            let dtau = (-eta * rtau - rkappa / it.tau - self.c.dot(&dx0) - self.h.dot(&dz0)) / denom_base;
            let dx = &dx0 + &dx1 * dtau;
            let mut dz = dz0;
            dz.axpy(dtau, &dz1);
            let wdz = sc.w(&dz);
            // The slack direction is taken from the linearized primal
            // equation so that the primal residual contracts exactly.
            let mut ds = rz.scaled(-eta);
            ds.axpy(dtau, &self.h);
            ds.axpy(-1.0, &self.g_op(&dx));
            let ds_scaled = sc.winvt(&ds);
            let dkappa = (rkappa - it.kappa * dtau) / it.tau;
            (dx, dz, ds, ds_scaled, wdz, dtau, dkappa)
        };
        let step_len = |ds_scaled: &Cone, wdz: &Cone, dtau: f64, dkappa: f64| {
            let mut a = sc.max_step(ds_scaled).min(sc.max_step(wdz));
            if dtau < 0.0 {
                a = a.min(-it.tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-it.kappa / dkappa);
            }
            a
        };

        // predictor
        let rc_aff = lam_sq.scaled(-1.0);
        let (_, _, _, dsa, dza, dtaua, dkappaa) = direction(1.0, &rc_aff, -it.tau * it.kappa);
        let alpha_a = step_len(&dsa, &dza, dtaua, dkappaa).min(1.0);
        let sigma = (1.0 - alpha_a).powi(3);

        // corrector
        let mut rc = lam_sq.scaled(-1.0);
        rc.axpy(-1.0, &circ(&dsa, &dza));
        let ident = Cone::identity(&self.dims, self.nlin);
        rc.axpy(sigma * mu, &ident);
        let rkappa = -it.tau * it.kappa - dtaua * dkappaa + sigma * mu;
        let (dx, dz, ds, ds_scaled, wdz, dtau, dkappa) = direction(1.0 - sigma, &rc, rkappa);
        let amax = step_len(&ds_scaled, &wdz, dtau, dkappa);
        let alpha = (st.step_fraction * amax).min(1.0);
        if !alpha.is_finite() {
            return None;
        }
        it.x += &dx * alpha;
        it.s.axpy(alpha, &ds);
        it.z.axpy(alpha, &dz);
        symmetrize(&mut it.s);
        symmetrize(&mut it.z);
        it.tau += alpha * dtau;
        it.kappa += alpha * dkappa;
        if !(it.tau > 0.0 && it.kappa > 0.0) {
            return None;
        }
        // rescale the embedding to keep tau + kappa near one
        let scale = it.tau.max(it.kappa);
        if !(1e-6..=1e6).contains(&scale) {
            let f = 1.0 / scale;
            it.x *= f;
            it.s = it.s.scaled(f);
            it.z = it.z.scaled(f);
            it.tau *= f;
            it.kappa *= f;
        }
        Some(alpha)
    }
}

fn symmetrize(c: &mut Cone) {
    for m in &mut c.psd {
        let t = m.transpose();
        *m += t;
        *m *= 0.5;
    }
}

/// Cholesky with escalating diagonal regularization.
fn factor(h: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = h.clone().cholesky() {
        return Some(c);
    }
    let dmax = h.diagonal().amax().max(1e-300);
    let mut reg = 1e-14 * dmax;
    for _ in 0..8 {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += reg;
        }
        if let Some(c) = hr.cholesky() {
            return Some(c);
        }
        reg *= 100.0;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::PsdBlock;
    use crate::solve;

    #[test]
    fn scalar_lower_bound() {
        let mut cp = ConicProgram::new(1);
        cp.set_objective(vec![1.0]);
        cp.add_nonneg(-1.0, vec![(0, 1.0)]);
        let r = solve(&cp);
        assert_eq!(r.status, Status::Optimal);
        assert!((r.u[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn two_by_two_lmi() {
        let mut cp = ConicProgram::new(1);
        cp.set_objective(vec![1.0]);
        let mut b = PsdBlock::new(2);
        b.add_coef(0, 0, 0, 1.0);
        b.add_coef(0, 1, 1, 1.0);
        b.add_constant(0, 1, 1.0);
        cp.add_psd_block(b);
        let r = solve(&cp);
        assert_eq!(r.status, Status::Optimal);
        assert!((r.u[0] - 1.0).abs() < 1e-6, "{}", r.u[0]);
    }

    #[test]
    fn infeasible_rows() {
        let mut cp = ConicProgram::new(1);
        cp.set_objective(vec![0.0]);
        cp.add_nonneg(-1.0, vec![(0, 1.0)]);
        cp.add_nonneg(0.0, vec![(0, -1.0)]);
        assert_eq!(solve(&cp).status, Status::Infeasible);
    }

    #[test]
    fn unbounded_objective() {
        let mut cp = ConicProgram::new(2);
        cp.set_objective(vec![-1.0, 0.0]);
        cp.add_nonneg(0.0, vec![(0, 1.0)]);
        cp.add_nonneg(1.0, vec![(1, 1.0)]);
        cp.add_nonneg(1.0, vec![(1, -1.0)]);
        assert_eq!(solve(&cp).status, Status::Unbounded);
    }
}
