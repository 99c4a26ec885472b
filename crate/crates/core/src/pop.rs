//! Polynomial optimization by moment relaxations: relaxation assembly,
//! the hierarchy loop with flat truncation, minimizer extraction and
//! fractional objectives.

use std::collections::{BTreeMap, HashMap};

use bpop_conic::{ConicProgram, ConicResult, ConicSolver, DenseIpm, PsdBlock, Status};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::poly::{Polynomial, VarSpace};

/// `min objective s.t. eqs = 0, ineqs >= 0`.
#[derive(Debug, Clone)]
pub struct PopInstance {
    pub space: VarSpace,
    pub objective: Polynomial,
    pub eqs: Vec<Polynomial>,
    pub ineqs: Vec<Polynomial>,
}

impl PopInstance {
    pub fn new(objective: Polynomial) -> Self {
        Self { space: objective.space(), objective, eqs: Vec::new(), ineqs: Vec::new() }
    }

    pub fn nvars(&self) -> usize {
        self.space.total()
    }

    fn all_constraints(&self) -> impl Iterator<Item = &Polynomial> {
        self.eqs.iter().chain(&self.ineqs)
    }

    /// Smallest admissible relaxation order.
    pub fn min_order(&self) -> u32 {
        let d = self.all_constraints().map(Polynomial::degree).max().unwrap_or(0).max(self.objective.degree());
        d.div_ceil(2).max(1)
    }

    /// Largest constraint half-degree, at least one.
    fn constraint_half_degree(&self) -> u32 {
        self.all_constraints().map(|g| g.degree().div_ceil(2)).max().unwrap_or(1).max(1)
    }

    /// Largest violation with each constraint scaled to unit largest
    /// coefficient.
    pub fn violation(&self, w: &[f64]) -> f64 {
        let scale = |g: &Polynomial| g.max_abs_coeff().max(1e-300);
        let e = self.eqs.iter().map(|h| h.eval(w).abs() / scale(h));
        let i = self.ineqs.iter().map(|g| (-g.eval(w)).max(0.0) / scale(g));
        e.chain(i).fold(0.0, f64::max)
    }

    /// Solve the affine equalities for pivot variables and substitute them
    /// everywhere. Returns the reduced instance (same variable space, the
    /// pivots no longer appear) and the pivot expressions, or `None` when
    /// the affine equalities are inconsistent.
    fn eliminate_linear(&self) -> Option<(PopInstance, BTreeMap<usize, Polynomial>)> {
        let n = self.nvars();
        let (lin, rest): (Vec<&Polynomial>, Vec<&Polynomial>) = self.eqs.iter().partition(|h| h.degree() <= 1);
        let mut assign = BTreeMap::new();
        if lin.is_empty() {
            return Some((self.clone(), assign));
        }
        // rows [a | b] for a^T w + b = 0, each scaled to unit largest entry
        let mut rows: Vec<Vec<f64>> = lin
            .iter()
            .map(|h| {
                let mut r = vec![0.0; n + 1];
                for (m, c) in h.terms() {
                    match m.exponents().iter().position(|&e| e > 0) {
                        Some(v) => r[v] = c,
                        None => r[n] = c,
                    }
                }
                let s = h.max_abs_coeff().max(1e-300);
                r.iter_mut().for_each(|v| *v /= s);
                r
            })
            .collect();
        let mut pivots = Vec::new();
        let mut r0 = 0;
        for col in 0..n {
            let Some(best) = (r0..rows.len()).max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs())) else {
                break;
            };
            if rows[best][col].abs() <= 1e-9 {
                continue;
            }
            rows.swap(r0, best);
            let pv = rows[r0][col];
            rows[r0].iter_mut().for_each(|v| *v /= pv);
            for i in 0..rows.len() {
                if i != r0 && rows[i][col] != 0.0 {
                    let f = rows[i][col];
                    for j in 0..=n {
                        rows[i][j] -= f * rows[r0][j];
                    }
                }
            }
            pivots.push(col);
            r0 += 1;
        }
        if rows[r0..].iter().any(|r| r[n].abs() > 1e-9) {
            return None;
        }
        for (i, &v) in pivots.iter().enumerate() {
            let mut e = Polynomial::constant(self.space, -rows[i][n]);
            for (j, &a) in rows[i][..n].iter().enumerate() {
                if j != v && a.abs() > 1e-13 {
                    e = &e - &Polynomial::var(self.space, j).scale(a);
                }
            }
            assign.insert(v, e);
        }
        let sub = |p: &Polynomial| p.substitute_poly(&assign).expect("same space").chop(1e-13);
        let out = PopInstance {
            space: self.space,
            objective: sub(&self.objective),
            eqs: rest.into_iter().map(sub).filter(|p| !p.is_zero()).collect(),
            ineqs: self.ineqs.iter().map(sub).collect(),
        };
        Some((out, assign))
    }

    /// Drop variables that appear nowhere; returns the compressed instance
    /// and the kept original indices.
    fn compress(&self) -> (PopInstance, Vec<usize>) {
        let n = self.nvars();
        let used: Vec<usize> = (0..n)
            .filter(|&v| self.objective.uses_var(v) || self.all_constraints().any(|g| g.uses_var(v)))
            .collect();
        if used.len() == n {
            return (self.clone(), used);
        }
        let target = VarSpace::flat(used.len());
        let mut map = vec![None; n];
        for (k, &v) in used.iter().enumerate() {
            map[v] = Some(k);
        }
        let rm = |p: &Polynomial| p.remap(target, &map);
        let out = PopInstance {
            space: target,
            objective: rm(&self.objective),
            eqs: self.eqs.iter().map(rm).filter(|p| !p.is_zero()).collect(),
            ineqs: self.ineqs.iter().map(rm).collect(),
        };
        (out, used)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PopError {
    #[error("relaxation order {order} is below the required {required}")]
    OrderTooSmall { order: u32, required: u32 },
    #[error("denominator positivity could not be verified (lower bound {0:.3e})")]
    DenominatorSign(f64),
    #[error("could not bracket the optimal ratio")]
    Bracket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PopStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Stalled,
}

#[derive(Debug, Clone)]
pub struct PopConfig {
    /// Orders tried are `k0 ..= k0 + kmax_extra`.
    pub kmax_extra: u32,
    pub rank_tol: f64,
    pub dedup_tol: f64,
    pub feas_tol: f64,
    /// Accepted gap between an extracted point's value and the bound,
    /// relative to `1 + |bound|`.
    pub value_tol: f64,
    pub seed: u64,
    /// Optional `R^2 - |w|^2 >= 0`.
    pub ball: Option<f64>,
    /// Orders with more moments than this are not attempted.
    pub max_moments: Option<usize>,
}

impl Default for PopConfig {
    fn default() -> Self {
        Self { kmax_extra: 3, rank_tol: 1e-6, dedup_tol: 1e-6, feas_tol: 1e-5, value_tol: 1e-5, seed: 42, ball: None, max_moments: None }
    }
}

/// All monomials of degree at most `max_deg`, graded.
#[derive(Debug, Clone)]
pub struct MomentBasis {
    pub nvars: usize,
    pub monos: Vec<Vec<u16>>,
    index: HashMap<Vec<u16>, usize>,
    /// `upto[d]` = number of monomials of degree `<= d`.
    upto: Vec<usize>,
}

impl MomentBasis {
    pub fn new(nvars: usize, max_deg: u32) -> Self {
        let mut monos = vec![vec![0u16; nvars]];
        let mut upto = vec![1];
        let mut last: Vec<Vec<u16>> = vec![vec![0u16; nvars]];
        for _ in 1..=max_deg {
            let mut next = Vec::new();
            // extend each monomial of the previous degree by a variable at or
            // after its last nonzero position, so every monomial appears once
            for m in &last {
                let start = m.iter().rposition(|&e| e > 0).unwrap_or(0);
                for v in start..nvars {
                    let mut e = m.clone();
                    e[v] += 1;
                    next.push(e);
                }
            }
            monos.extend(next.iter().cloned());
            upto.push(monos.len());
            last = next;
        }
        let index = monos.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        Self { nvars, monos, index, upto }
    }

    pub fn len(&self) -> usize {
        self.monos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monos.is_empty()
    }

    pub fn count_upto(&self, d: u32) -> usize {
        self.upto[d as usize]
    }

    pub fn index_of(&self, e: &[u16]) -> Option<usize> {
        self.index.get(e).copied()
    }

    fn sum_index(&self, a: usize, b: usize) -> usize {
        let e: Vec<u16> = self.monos[a].iter().zip(&self.monos[b]).map(|(x, y)| x + y).collect();
        self.index[&e]
    }

    fn shifted(&self, a: &[u16], g: &[u16]) -> usize {
        let e: Vec<u16> = a.iter().zip(g).map(|(x, y)| x + y).collect();
        self.index[&e]
    }

    pub fn degree(&self, i: usize) -> u32 {
        self.monos[i].iter().map(|&e| e as u32).sum()
    }
}

/// Relaxation of order `k` with its moment indexing. Conic variable `i` is
/// the moment of basis monomial `i + 1`; the moment of `1` is fixed to one.
#[derive(Debug, Clone)]
pub struct Relaxation {
    pub order: u32,
    pub basis: MomentBasis,
    pub program: ConicProgram,
    /// Constant part of the objective.
    pub offset: f64,
}

/// Linear form `sum_gamma g_gamma y_{shift + gamma}` split into constant
/// and variable parts.
fn shifted_form(basis: &MomentBasis, g: &Polynomial, shift: &[u16]) -> (f64, BTreeMap<usize, f64>) {
    let mut cst = 0.0;
    let mut coefs = BTreeMap::new();
    for (m, c) in g.terms() {
        let idx = basis.shifted(shift, m.exponents());
        if idx == 0 {
            cst += c;
        } else {
            *coefs.entry(idx - 1).or_insert(0.0) += c;
        }
    }
    (cst, coefs)
}

fn localizing_block(basis: &MomentBasis, g: &Polynomial, order: u32) -> PsdBlock {
    let dim = basis.count_upto(order);
    let mut blk = PsdBlock::new(dim);
    for a in 0..dim {
        for b in a..dim {
            let shift: Vec<u16> = basis.monos[a].iter().zip(&basis.monos[b]).map(|(x, y)| x + y).collect();
            let (cst, coefs) = shifted_form(basis, g, &shift);
            blk.add_constant(a, b, cst);
            for (v, c) in coefs {
                blk.add_coef(v, a, b, c);
            }
        }
    }
    blk
}

pub fn relax(pop: &PopInstance, k: u32) -> Result<Relaxation, PopError> {
    let required = pop.min_order();
    if k < required {
        return Err(PopError::OrderTooSmall { order: k, required });
    }
    let n = pop.nvars();
    let basis = MomentBasis::new(n, 2 * k);
    let nv = basis.len() - 1;
    let mut cp = ConicProgram::new(nv);
    let zero = vec![0u16; n];
    let (offset, obj) = shifted_form(&basis, &pop.objective, &zero);
    let mut c = vec![0.0; nv];
    for (v, a) in obj {
        c[v] = a;
    }
    cp.set_objective(c);
    // moment matrix
    let dim = basis.count_upto(k);
    let mut mm = PsdBlock::new(dim);
    for a in 0..dim {
        for b in a..dim {
            let idx = basis.sum_index(a, b);
            if idx == 0 {
                mm.add_constant(a, b, 1.0);
            } else {
                mm.add_coef(idx - 1, a, b, 1.0);
            }
        }
    }
    cp.add_psd_block(mm);
    for g in &pop.ineqs {
        let dg = g.degree().div_ceil(2);
        let ord = k - dg;
        if basis.count_upto(ord) == 1 {
            let (cst, coefs) = shifted_form(&basis, g, &zero);
            cp.add_nonneg(cst, coefs.into_iter().collect());
        } else {
            cp.add_psd_block(localizing_block(&basis, g, ord));
        }
    }
    for h in &pop.eqs {
        let room = 2 * k - h.degree();
        for a in 0..basis.count_upto(room) {
            let (cst, coefs) = shifted_form(&basis, h, &basis.monos[a].clone());
            if coefs.is_empty() {
                if cst.abs() > 0.0 {
                    // constant nonzero equality: infeasible; encode as 0 = cst
                    cp.add_equality(vec![(0, 0.0)], -cst);
                }
                continue;
            }
            cp.add_equality(coefs.into_iter().collect(), -cst);
        }
    }
    Ok(Relaxation { order: k, basis, program: cp, offset })
}

/// Moments from a relaxation solve.
#[derive(Debug, Clone)]
pub struct MomentSolution {
    pub order: u32,
    pub basis: MomentBasis,
    /// Moment values indexed like `basis`, with `y[0] = 1`.
    pub y: Vec<f64>,
    pub bound: f64,
    pub status: PopStatus,
    /// `ranks[s]` = numerical rank of `M_s(y)` for `s = 0..=order`.
    pub ranks: Vec<usize>,
    pub conic: ConicResult,
}

impl MomentSolution {
    pub fn moment_matrix(&self, s: u32) -> DMatrix<f64> {
        let dim = self.basis.count_upto(s);
        DMatrix::from_fn(dim, dim, |a, b| self.y[self.basis.sum_index(a, b)])
    }

    /// First-order moments, the mean of the representing measure.
    pub fn mean(&self) -> Vec<f64> {
        (0..self.basis.nvars).map(|i| self.y[1 + i]).collect()
    }
}

fn numerical_rank(m: &DMatrix<f64>, rel: f64) -> usize {
    let ev = m.clone().symmetric_eigenvalues();
    let top = ev.iter().fold(0.0_f64, |a, &v| a.max(v));
    if top <= 0.0 {
        return 0;
    }
    ev.iter().filter(|&&v| v > rel * top).count()
}

fn usable(r: &ConicResult) -> bool {
    r.status == Status::Optimal || (r.status == Status::Stalled && r.max_residual() <= 1e-6)
}

pub fn solve_relaxation(pop: &PopInstance, k: u32, cfg: &PopConfig, solver: &dyn ConicSolver) -> Result<MomentSolution, PopError> {
    let rel = relax(pop, k)?;
    let res = solver.solve(&rel.program);
    let status = match res.status {
        Status::Infeasible => PopStatus::Infeasible,
        Status::Unbounded => PopStatus::Unbounded,
        _ if usable(&res) => PopStatus::Optimal,
        _ => PopStatus::Stalled,
    };
    let mut y = Vec::with_capacity(rel.basis.len());
    y.push(1.0);
    y.extend(res.u.iter().copied());
    let bound = match status {
        PopStatus::Infeasible => f64::INFINITY,
        PopStatus::Unbounded => f64::NEG_INFINITY,
        _ => res.objective + rel.offset,
    };
    let mut sol = MomentSolution { order: k, basis: rel.basis, y, bound, status, ranks: Vec::new(), conic: res };
    if matches!(status, PopStatus::Optimal | PopStatus::Stalled) {
        sol.ranks = (0..=k).map(|s| numerical_rank(&sol.moment_matrix(s), cfg.rank_tol)).collect();
        let big = sol.y.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if big > 1e6 {
            log::warn!("moment values reach {big:.3e}; consider a ball constraint");
        }
    }
    Ok(sol)
}

/// Points read off a flat moment matrix, with their residuals and values.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ExtractedPoints {
    pub points: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub values: Vec<f64>,
}

impl ExtractedPoints {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn push(&mut self, pop: &PopInstance, w: Vec<f64>) {
        self.residuals.push(pop.violation(&w));
        self.values.push(pop.objective.eval(&w));
        self.points.push(w);
    }
}

/// Smallest `s` in `[lo, k]` with `rank M_{s-d} = rank M_s`.
pub fn flat_order(sol: &MomentSolution, d: u32, lo: u32) -> Option<u32> {
    (lo.max(d)..=sol.order).find(|&s| sol.ranks[(s - d) as usize] == sol.ranks[s as usize] && sol.ranks[s as usize] > 0)
}

/// Henrion-Lasserre extraction from `M_s` of rank `r`.
pub fn extract_minimizers(sol: &MomentSolution, s: u32, seed: u64) -> Option<Vec<Vec<f64>>> {
    let r = sol.ranks[s as usize];
    let n = sol.basis.nvars;
    if r == 0 {
        return None;
    }
    let m = sol.moment_matrix(s);
    let dim = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let v = DMatrix::from_fn(dim, r, |i, j| {
        let k = order[j];
        eig.eigenvectors[(i, k)] * eig.eigenvalues[k].max(0.0).sqrt()
    });
    // pivot rows among monomials of degree < s by greedy orthogonalization
    let candidates: Vec<usize> = (0..sol.basis.count_upto(s - 1)).collect();
    let mut resid: Vec<DVector<f64>> = candidates.iter().map(|&i| v.row(i).transpose()).collect();
    let top = resid.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let mut pivots = Vec::with_capacity(r);
    for _ in 0..r {
        let (best, nrm) = resid
            .iter()
            .enumerate()
            .filter(|(i, _)| !pivots.contains(&candidates[*i]))
            .map(|(i, x)| (i, x.norm()))
            .fold((usize::MAX, -1.0), |acc, (i, x)| if x > acc.1 { (i, x) } else { acc });
        if best == usize::MAX || nrm <= 1e-8 * top {
            return None;
        }
        let q = resid[best].clone() / nrm;
        for x in resid.iter_mut() {
            let c = q.dot(x);
            x.axpy(-c, &q, 1.0);
        }
        pivots.push(candidates[best]);
    }
    let vb = DMatrix::from_fn(r, r, |i, j| v[(pivots[i], j)]);
    let vb_inv = vb.try_inverse()?;
    let u = &v * vb_inv;
    let mut mults = Vec::with_capacity(n);
    for var in 0..n {
        let mut nm = DMatrix::zeros(r, r);
        for (i, &b) in pivots.iter().enumerate() {
            let mut e = sol.basis.monos[b].clone();
            e[var] += 1;
            let row = sol.basis.index_of(&e)?;
            if row >= dim {
                return None;
            }
            for j in 0..r {
                nm[(i, j)] = u[(row, j)];
            }
        }
        mults.push(nm);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wts: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let tot: f64 = wts.iter().sum();
    wts.iter_mut().for_each(|w| *w /= tot);
    let mut comb = DMatrix::zeros(r, r);
    for (w, nm) in wts.iter().zip(&mults) {
        comb += nm * *w;
    }
    let schur = nalgebra::linalg::Schur::try_new(comb, 1e-14, 10_000)?;
    let (q, _) = schur.unpack();
    let mut pts = Vec::with_capacity(r);
    for j in 0..r {
        let qj = q.column(j);
        pts.push(mults.iter().map(|nm| qj.dot(&(nm * qj))).collect());
    }
    Some(pts)
}

/// How a reported bound was certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Certificate {
    /// Flat truncation at the given order with the given rank.
    Flat { order: u32, rank: usize },
    /// The mean of the moment vector is feasible and attains the bound.
    Sandwich,
    None,
}

#[derive(Debug, Clone, Serialize)]
pub struct HierarchyStep {
    pub order: u32,
    pub status: PopStatus,
    pub bound: f64,
    pub ranks: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PopResult {
    pub status: PopStatus,
    pub bound: f64,
    pub order: u32,
    pub points: ExtractedPoints,
    pub certificate: Certificate,
    pub history: Vec<HierarchyStep>,
    /// Higher orders were skipped because of `max_moments`.
    pub truncated: bool,
}

impl PopResult {
    /// Accepted point with the smallest objective value.
    pub fn best_point(&self) -> Option<&[f64]> {
        let i = (0..self.points.len()).min_by(|&a, &b| self.points.values[a].total_cmp(&self.points.values[b]))?;
        Some(&self.points.points[i])
    }
}

fn dedup(points: Vec<Vec<f64>>, tol: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in points {
        let dup = out.iter().any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= tol * (1.0 + a.abs())));
        if !dup {
            out.push(p);
        }
    }
    out
}

/// Try flat truncation plus extraction, then the mean as a sandwich witness.
fn certify(pop: &PopInstance, sol: &MomentSolution, cfg: &PopConfig) -> Option<(ExtractedPoints, Certificate)> {
    let d = pop.constraint_half_degree();
    let df = pop.objective.degree().div_ceil(2);
    let tol = cfg.value_tol * (1.0 + sol.bound.abs());
    if let Some(s) = flat_order(sol, d, df) {
        let mut acc = ExtractedPoints::default();
        if let Some(pts) = extract_minimizers(sol, s, cfg.seed) {
            for w in dedup(pts, cfg.dedup_tol) {
                let (res, val) = (pop.violation(&w), pop.objective.eval(&w));
                if res <= cfg.feas_tol && val <= sol.bound + tol {
                    acc.push(pop, w);
                }
            }
        }
        if !acc.is_empty() {
            return Some((acc, Certificate::Flat { order: s, rank: sol.ranks[s as usize] }));
        }
    }
    let mean = sol.mean();
    if pop.violation(&mean) <= cfg.feas_tol && pop.objective.eval(&mean) <= sol.bound + tol {
        let mut acc = ExtractedPoints::default();
        acc.push(pop, mean);
        return Some((acc, Certificate::Sandwich));
    }
    None
}

/// Run orders `k0..=kmax` until a certified minimizer appears.
pub fn solve_hierarchy_with(
    pop: &PopInstance,
    k0: u32,
    kmax: u32,
    cfg: &PopConfig,
    solver: &dyn ConicSolver,
) -> Result<PopResult, PopError> {
    let mut full = pop.clone();
    if let Some(r) = cfg.ball {
        let mut b = Polynomial::constant(pop.space, r * r);
        for i in 0..pop.nvars() {
            let v = Polynomial::var(pop.space, i);
            b = &b - &(&v * &v);
        }
        full.ineqs.push(b);
    }
    let Some((full, pinned)) = full.eliminate_linear() else {
        return Ok(PopResult {
            status: PopStatus::Infeasible,
            bound: f64::INFINITY,
            order: k0,
            points: ExtractedPoints::default(),
            certificate: Certificate::None,
            history: Vec::new(),
            truncated: false,
        });
    };
    let (small, kept) = full.compress();
    let lift = |w: &[f64]| {
        let mut out = vec![0.0; pop.nvars()];
        for (k, &v) in kept.iter().enumerate() {
            out[v] = w[k];
        }
        for (&v, e) in &pinned {
            out[v] = e.eval(&out);
        }
        out
    };
    let k0 = k0.max(small.min_order());
    let kmax = kmax.max(k0);
    let mut history = Vec::new();
    let mut best_bound = f64::NEG_INFINITY;
    let mut last_status = PopStatus::Stalled;
    if small.nvars() == 0 {
        // constant problem: check constraints directly
        let c = small.objective.constant_term();
        let feasible = small.violation(&[]) <= cfg.feas_tol;
        let status = if feasible { PopStatus::Optimal } else { PopStatus::Infeasible };
        let mut pts = ExtractedPoints::default();
        if feasible {
            pts.push(pop, lift(&[]));
        }
        let bound = if feasible { c } else { f64::INFINITY };
        return Ok(PopResult { status, bound, order: 0, points: pts, certificate: Certificate::Sandwich, history, truncated: false });
    }
    let mut truncated = false;
    for k in k0..=kmax {
        if cfg.max_moments.is_some_and(|cap| moment_count(small.nvars(), 2 * k) > cap) {
            truncated = true;
            break;
        }
        let started = std::time::Instant::now();
        let sol = solve_relaxation(&small, k, cfg, solver)?;
        log::debug!(
            "order {k}: {:?} bound {:.6e} ranks {:?}, {} moments, {} iterations, residual {:.1e}, {:.2?}",
            sol.status,
            sol.bound,
            sol.ranks,
            sol.y.len(),
            sol.conic.iterations,
            sol.conic.max_residual(),
            started.elapsed()
        );
        history.push(HierarchyStep { order: k, status: sol.status, bound: sol.bound, ranks: sol.ranks.clone() });
        last_status = sol.status;
        match sol.status {
            PopStatus::Infeasible => {
                return Ok(PopResult {
                    status: PopStatus::Infeasible,
                    bound: f64::INFINITY,
                    order: k,
                    points: ExtractedPoints::default(),
                    certificate: Certificate::None,
                    history,
                    truncated: false,
                });
            }
            PopStatus::Unbounded | PopStatus::Stalled => continue,
            PopStatus::Optimal => {
                best_bound = best_bound.max(sol.bound);
                if let Some((pts, cert)) = certify(&small, &sol, cfg) {
                    let mut lifted = ExtractedPoints::default();
                    for w in &pts.points {
                        lifted.push(pop, lift(w));
                    }
                    return Ok(PopResult { status: PopStatus::Optimal, bound: sol.bound, order: k, points: lifted, certificate: cert, history, truncated: false });
                }
            }
        }
    }
    let status = if last_status == PopStatus::Unbounded && best_bound == f64::NEG_INFINITY {
        PopStatus::Unbounded
    } else {
        PopStatus::Stalled
    };
    Ok(PopResult {
        status,
        bound: best_bound,
        order: kmax,
        points: ExtractedPoints::default(),
        certificate: Certificate::None,
        history,
        truncated,
    })
}

/// Number of monomials of degree at most `d` in `n` variables.
fn moment_count(n: usize, d: u32) -> usize {
    let d = d as usize;
    (1..=d).fold(1usize, |acc, i| acc.saturating_mul(n + i) / i)
}

pub fn solve_hierarchy(pop: &PopInstance, k0: u32, kmax: u32, cfg: &PopConfig) -> Result<PopResult, PopError> {
    solve_hierarchy_with(pop, k0, kmax, cfg, &DenseIpm::default())
}

/// Hierarchy from the minimal order with the configured budget.
pub fn solve_pop(pop: &PopInstance, cfg: &PopConfig) -> Result<PopResult, PopError> {
    let k0 = pop.min_order();
    solve_hierarchy(pop, k0, k0 + cfg.kmax_extra, cfg)
}

#[derive(Debug, Clone)]
pub struct RationalResult {
    pub status: PopStatus,
    pub value: f64,
    /// Certified lower end of the final bracket.
    pub lower: f64,
    pub point: Option<Vec<f64>>,
    pub tests: usize,
}

/// `min num/den` over `{eqs = 0, ineqs >= 0}` by bracketing the optimal
/// ratio `gamma` with tests `min num - gamma * den`. Every test tightens
/// the lower end by `gamma + min(0, bound) / den_lb`; extracted points
/// tighten the upper end.
pub fn minimize_rational(
    num: &Polynomial,
    den: &Polynomial,
    eqs: &[Polynomial],
    ineqs: &[Polynomial],
    cfg: &PopConfig,
) -> Result<RationalResult, PopError> {
    let base = |obj: Polynomial| PopInstance { space: obj.space(), objective: obj, eqs: eqs.to_vec(), ineqs: ineqs.to_vec() };
    let dres = solve_pop(&base(den.clone()), cfg)?;
    match dres.status {
        PopStatus::Infeasible => {
            return Ok(RationalResult { status: PopStatus::Infeasible, value: f64::INFINITY, lower: f64::INFINITY, point: None, tests: 0 })
        }
        PopStatus::Optimal | PopStatus::Stalled if dres.bound > 0.0 => {}
        _ => return Err(PopError::DenominatorSign(dres.bound)),
    }
    let den_lb = dres.bound;
    let ratio = |w: &[f64]| num.eval(w) / den.eval(w);
    let Some(p0) = dres.best_point().map(|w| w.to_vec()) else {
        return Err(PopError::Bracket);
    };
    let mut hi = ratio(&p0);
    let mut best = p0;
    let mut lo = f64::NEG_INFINITY;
    let mut tests = 0;
    let mut gamma = hi;
    let mut step = 1.0 + hi.abs();
    while tests < 100 && hi - lo > 1e-7 * (1.0 + hi.abs()).min(10.0) {
        let obj = num - &den.scale(gamma);
        let r = solve_pop(&base(obj), cfg)?;
        tests += 1;
        match r.status {
            PopStatus::Infeasible => {
                return Ok(RationalResult { status: PopStatus::Infeasible, value: f64::INFINITY, lower: f64::INFINITY, point: None, tests })
            }
            PopStatus::Unbounded => break,
            PopStatus::Optimal | PopStatus::Stalled => {
                let lo_before = lo;
                if r.bound.is_finite() {
                    lo = lo.max(gamma + r.bound.min(0.0) / den_lb);
                }
                let mut improved = false;
                for w in &r.points.points {
                    let v = ratio(w);
                    if v < hi - 1e-12 * (1.0 + hi.abs()) {
                        hi = v;
                        best = w.clone();
                        improved = true;
                    }
                }
                if r.status == PopStatus::Stalled && !improved && lo <= lo_before {
                    break;
                }
                gamma = if improved {
                    hi
                } else if lo.is_finite() {
                    0.5 * (lo + hi)
                } else {
                    step *= 2.0;
                    hi - step
                };
            }
        }
    }
    let converged = hi - lo <= 1e-6 * (1.0 + hi.abs());
    let status = if converged { PopStatus::Optimal } else { PopStatus::Stalled };
    Ok(RationalResult { status, value: hi, lower: lo, point: Some(best), tests })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(n: usize, i: usize) -> Polynomial {
        Polynomial::var(VarSpace::flat(n), i)
    }

    fn c(n: usize, v: f64) -> Polynomial {
        Polynomial::constant(VarSpace::flat(n), v)
    }

    #[test]
    fn basis_counts() {
        let b = MomentBasis::new(3, 4);
        assert_eq!(b.len(), 35);
        assert_eq!(b.count_upto(1), 4);
        assert_eq!(b.count_upto(2), 10);
        assert_eq!(b.degree(0), 0);
        assert!((0..b.len() - 1).all(|i| b.degree(i) <= b.degree(i + 1)));
    }

    #[test]
    fn unconstrained_square() {
        let p = PopInstance::new(&w(1, 0) * &w(1, 0));
        let r = solve_pop(&p, &PopConfig::default()).unwrap();
        assert_eq!(r.status, PopStatus::Optimal);
        assert!(r.bound.abs() < 1e-7);
        assert!(r.points.points[0][0].abs() < 1e-4);
    }

    #[test]
    fn interval_maximum() {
        let mut p = PopInstance::new(-w(1, 0));
        p.ineqs.push(&c(1, 1.0) - &(&w(1, 0) * &w(1, 0)));
        let r = solve_pop(&p, &PopConfig::default()).unwrap();
        assert_eq!(r.status, PopStatus::Optimal);
        assert!((r.bound + 1.0).abs() < 1e-6);
        assert!((r.points.points[0][0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn two_symmetric_minimizers() {
        let q = &(&w(1, 0) * &w(1, 0)) - &c(1, 1.0);
        let p = PopInstance::new(&q * &q);
        let r = solve_pop(&p, &PopConfig::default()).unwrap();
        assert_eq!(r.status, PopStatus::Optimal);
        let mut xs: Vec<f64> = r.points.points.iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs.len(), 2, "{xs:?}");
        assert!((xs[0] + 1.0).abs() < 1e-4 && (xs[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn infeasible_interval() {
        let mut p = PopInstance::new(w(1, 0));
        p.ineqs.push(&w(1, 0) - &c(1, 1.0));
        p.ineqs.push(-w(1, 0));
        let r = solve_pop(&p, &PopConfig::default()).unwrap();
        assert_eq!(r.status, PopStatus::Infeasible);
    }

    #[test]
    fn affine_equalities_are_substituted() {
        // min x^2 + y^2 + z^2 on x + y = 1, y - z = 0
        let sq = |i| &w(3, i) * &w(3, i);
        let mut p = PopInstance::new(&(&sq(0) + &sq(1)) + &sq(2));
        p.eqs.push(&(&w(3, 0) + &w(3, 1)) - &c(3, 1.0));
        p.eqs.push(&w(3, 1) - &w(3, 2));
        let (red, pinned) = p.eliminate_linear().unwrap();
        assert_eq!(pinned.len(), 2);
        assert!(red.eqs.is_empty());
        let r = solve_pop(&p, &PopConfig::default()).unwrap();
        assert_eq!(r.status, PopStatus::Optimal);
        assert!((r.bound - 2.0 / 3.0).abs() < 1e-6);
        let pt = &r.points.points[0];
        assert!((pt[0] - 2.0 / 3.0).abs() < 1e-4 && (pt[1] - 1.0 / 3.0).abs() < 1e-4 && (pt[2] - pt[1]).abs() < 1e-9);
    }

    #[test]
    fn inconsistent_affine_equalities() {
        let mut p = PopInstance::new(w(2, 0));
        p.eqs.push(&w(2, 0) + &w(2, 1));
        p.eqs.push(&(&w(2, 0) + &w(2, 1)) - &c(2, 1.0));
        assert_eq!(solve_pop(&p, &PopConfig::default()).unwrap().status, PopStatus::Infeasible);
    }

    #[test]
    fn order_must_cover_degrees() {
        let p = PopInstance::new(w(1, 0).pow(4));
        assert_eq!(relax(&p, 1).unwrap_err(), PopError::OrderTooSmall { order: 1, required: 2 });
    }

    #[test]
    fn monotone_ratio_on_interval() {
        let x = w(1, 0);
        let num = &c(1, 1.0) + &x;
        let den = &c(1, 2.0) + &x;
        let ineqs = vec![x.clone(), &c(1, 1.0) - &x];
        let r = minimize_rational(&num, &den, &[], &ineqs, &PopConfig::default()).unwrap();
        assert_eq!(r.status, PopStatus::Optimal);
        assert!((r.value - 0.5).abs() < 1e-6);
        assert!(r.point.unwrap()[0].abs() < 1e-4);
    }

    #[test]
    fn reciprocal_of_the_maximum() {
        let x = w(1, 0);
        // q = 1 + x(2 - x) on [0, 2], max 2 at x = 1
        let q = &c(1, 1.0) + &(&x * &(&c(1, 2.0) - &x));
        let ineqs = vec![x.clone(), &c(1, 2.0) - &x];
        let r = minimize_rational(&c(1, 1.0), &q, &[], &ineqs, &PopConfig::default()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-6, "{}", r.value);
    }

    #[test]
    fn nonpositive_denominator_is_refused() {
        let x = w(1, 0);
        let ineqs = vec![&x + &c(1, 1.0), &c(1, 1.0) - &x];
        assert!(matches!(minimize_rational(&c(1, 1.0), &x, &[], &ineqs, &PopConfig::default()), Err(PopError::DenominatorSign(_))));
    }
}
