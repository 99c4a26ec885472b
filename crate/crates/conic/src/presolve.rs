//! Equality elimination by a nullspace parametrization.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::program::{ConicProgram, LinRow, PsdBlock};

/// Relative tolerance on the pivots of the rank-revealing factorization.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PresolveError {
    #[error("equality constraints are inconsistent (residual {0:.3e})")]
    Inconsistent(f64),
}

/// Nullspace basis `N` of the equality rows.
#[derive(Debug, Clone)]
pub enum Basis {
    /// No equalities: `N = I`.
    Identity,
    /// Orthonormal columns from a rank-revealing QR.
    Orthonormal(DMatrix<f64>),
    /// `N = [I; R]` up to a permutation, from sparse Gauss-Jordan
    /// elimination. Cheap to apply when the equalities are sparse.
    Pivoted(PivotBasis),
}

#[derive(Debug, Clone)]
pub struct PivotBasis {
    /// Original index of each reduced variable.
    pub free: Vec<usize>,
    /// `(original index, [(reduced index, coefficient)])` of each
    /// eliminated variable: `u_d = u0_d + sum c v_k`.
    pub dep: Vec<(usize, Vec<(usize, f64)>)>,
}

/// The affine parametrization `u = u0 + N v` of the equality-feasible set.
#[derive(Debug, Clone)]
pub struct Presolved {
    pub u0: DVector<f64>,
    pub basis: Basis,
    /// Number of reduced variables `v`.
    pub nfree: usize,
}

impl Presolved {
    pub fn lift(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.u0 + self.expand(v)
    }

    /// `N^T w` for a vector over the original variables.
    pub fn restrict(&self, w: &DVector<f64>) -> DVector<f64> {
        match &self.basis {
            Basis::Identity => w.clone(),
            Basis::Orthonormal(n) => n.tr_mul(w),
            Basis::Pivoted(pb) => {
                let mut out = DVector::from_iterator(pb.free.len(), pb.free.iter().map(|&i| w[i]));
                for (d, row) in &pb.dep {
                    for &(k, c) in row {
                        out[k] += c * w[*d];
                    }
                }
                out
            }
        }
    }

    /// `N v` (without the offset).
    pub fn expand(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.basis {
            Basis::Identity => v.clone(),
            Basis::Orthonormal(n) => n * v,
            Basis::Pivoted(pb) => {
                let mut out = DVector::zeros(self.u0.len());
                for (k, &i) in pb.free.iter().enumerate() {
                    out[i] = v[k];
                }
                for (d, row) in &pb.dep {
                    out[*d] = row.iter().map(|&(k, c)| c * v[k]).sum();
                }
                out
            }
        }
    }

    /// `N^T H N` for a symmetric `H` over the original variables.
    pub fn project(&self, h: DMatrix<f64>) -> DMatrix<f64> {
        match &self.basis {
            Basis::Identity => h,
            Basis::Orthonormal(n) => {
                let t = &h * n;
                n.tr_mul(&t)
            }
            Basis::Pivoted(pb) => {
                let f = pb.free.len();
                let mut hn = DMatrix::from_fn(h.nrows(), f, |r, k| h[(r, pb.free[k])]);
                for (d, row) in &pb.dep {
                    for &(k, c) in row {
                        hn.column_mut(k).axpy(c, &h.column(*d), 1.0);
                    }
                }
                let mut out = DMatrix::from_fn(f, f, |k, l| hn[(pb.free[k], l)]);
                for (d, row) in &pb.dep {
                    for &(k, c) in row {
                        for l in 0..f {
                            out[(k, l)] += c * hn[(*d, l)];
                        }
                    }
                }
                out
            }
        }
    }

    /// Dense `N`.
    pub fn dense_basis(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.u0.len(), self.nfree);
        for k in 0..self.nfree {
            let mut e = DVector::zeros(self.nfree);
            e[k] = 1.0;
            b.set_column(k, &self.expand(&e));
        }
        b
    }

    /// Materialize the reduced program over `v` without equalities. The
    /// objective loses the constant `c^T u0`.
    pub fn reduced_program(&self, cp: &ConicProgram) -> ConicProgram {
        let m = self.nfree;
        let basis = self.dense_basis();
        let mut out = ConicProgram::new(m);
        let c = DVector::from_column_slice(&cp.objective);
        out.set_objective(self.restrict(&c).iter().copied().collect());
        for blk in &cp.psd {
            let mut nb = PsdBlock::new(blk.dim);
            let f0 = blk.evaluate(self.u0.as_slice());
            for i in 0..blk.dim {
                for j in i..blk.dim {
                    nb.add_constant(i, j, f0[(i, j)]);
                }
            }
            for j in 0..m {
                let mut acc = DMatrix::<f64>::zeros(blk.dim, blk.dim);
                for &(k, r, cc, v) in &blk.coefs {
                    acc[(r, cc)] += v * basis[(k, j)];
                }
                for r in 0..blk.dim {
                    for cc in r..blk.dim {
                        if acc[(r, cc)].abs() > 1e-15 {
                            nb.add_coef(j, r, cc, acc[(r, cc)]);
                        }
                    }
                }
            }
            out.add_psd_block(nb);
        }
        for row in &cp.lin {
            let constant = row.evaluate(self.u0.as_slice());
            let mut coefs = Vec::new();
            for j in 0..m {
                let a: f64 = row.coefs.iter().map(|&(k, a)| a * basis[(k, j)]).sum();
                if a.abs() > 1e-15 {
                    coefs.push((j, a));
                }
            }
            out.lin.push(LinRow { constant, coefs });
        }
        out
    }
}

/// Problems with at least this many variables use the sparse pivoted basis.
pub const PIVOT_MIN_VARS: usize = 1500;

/// Eliminate the equality rows of `cp`.
pub fn presolve(cp: &ConicProgram) -> Result<Presolved, PresolveError> {
    let n = cp.nvars;
    if cp.eqs.is_empty() {
        return Ok(Presolved { u0: DVector::zeros(n), basis: Basis::Identity, nfree: n });
    }
    if n >= PIVOT_MIN_VARS {
        return presolve_pivoted(cp);
    }
    let (mut g, mut rhs) = cp.equality_system();
    for r in 0..g.nrows() {
        let s = g.row(r).amax();
        if s > 0.0 {
            g.row_mut(r).scale_mut(1.0 / s);
            rhs[r] /= s;
        }
    }
    let gt = g.transpose();
    let qr = gt.clone().col_piv_qr();
    let rmat = qr.r();
    let kmax = rmat.nrows().min(rmat.ncols());
    let r00 = if kmax > 0 { rmat[(0, 0)].abs() } else { 0.0 };
    let mut rank = 0;
    while rank < kmax && rmat[(rank, rank)].abs() > RANK_TOL * r00.max(f64::MIN_POSITIVE) {
        rank += 1;
    }
    let mut qt = DMatrix::<f64>::identity(n, n);
    qr.q_tr_mul(&mut qt);
    let q = qt.transpose();
    let range = q.columns(0, rank).into_owned();
    let null = q.columns(rank, n - rank).into_owned();

    let u0 = if rank == 0 {
        DVector::zeros(n)
    } else {
        let gq = &g * &range;
        let svd = gq.svd(true, true);
        let w = svd.solve(&rhs, 0.0).unwrap_or_else(|_| DVector::zeros(rank));
        &range * w
    };
    let resid = (&g * &u0 - &rhs).amax();
    let scale = rhs.amax().max(1.0) * u0.amax().max(1.0);
    if resid > 1e-9 * scale {
        return Err(PresolveError::Inconsistent(resid));
    }
    Ok(Presolved { u0, basis: Basis::Orthonormal(null), nfree: n - rank })
}

/// Sparse Gauss-Jordan elimination. Rows are taken in order, reduced by
/// the pivots found so far and pivoted on their largest entry.
fn presolve_pivoted(cp: &ConicProgram) -> Result<Presolved, PresolveError> {
    type Row = BTreeMap<usize, f64>;
    let n = cp.nvars;
    let mut pivot_of: HashMap<usize, usize> = HashMap::new();
    let mut rows: Vec<(usize, Row, f64)> = Vec::new();
    for (coefs, b) in &cp.eqs {
        let mut row = Row::new();
        for &(k, a) in coefs {
            *row.entry(k).or_default() += a;
        }
        let s = row.values().fold(0.0_f64, |m, v| m.max(v.abs()));
        if s == 0.0 {
            if b.abs() > 1e-9 {
                return Err(PresolveError::Inconsistent(b.abs()));
            }
            continue;
        }
        let mut rhs = b / s;
        row.values_mut().for_each(|v| *v /= s);
        // substitute earlier pivots, oldest first, so each substitution
        // only brings in younger ones
        loop {
            let next = row.keys().filter_map(|c| pivot_of.get(c).map(|&i| (i, *c))).min();
            let Some((i, col)) = next else { break };
            let f = row.remove(&col).unwrap_or(0.0);
            let (_, prow, prhs) = &rows[i];
            for (&c, &v) in prow {
                if c != col {
                    *row.entry(c).or_default() -= f * v;
                }
            }
            rhs -= f * prhs;
            row.retain(|_, v| v.abs() > 1e-14);
        }
        let Some((&col, &pv)) = row.iter().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(a.0.cmp(b.0))) else {
            if rhs.abs() > 1e-9 {
                return Err(PresolveError::Inconsistent(rhs.abs()));
            }
            continue;
        };
        if pv.abs() <= RANK_TOL * 10.0 {
            if rhs.abs() > 1e-9 {
                return Err(PresolveError::Inconsistent(rhs.abs()));
            }
            continue;
        }
        row.values_mut().for_each(|v| *v /= pv);
        pivot_of.insert(col, rows.len());
        rows.push((col, row, rhs / pv));
    }
    // back substitution, youngest first
    for i in (0..rows.len()).rev() {
        let (col, mut row, mut rhs) = rows[i].clone();
        loop {
            let next = row.keys().filter(|&&c| c != col).find_map(|c| pivot_of.get(c).map(|&j| (j, *c)));
            let Some((j, c)) = next else { break };
            let f = row.remove(&c).unwrap_or(0.0);
            let (_, prow, prhs) = &rows[j];
            for (&cc, &v) in prow {
                if cc != c {
                    *row.entry(cc).or_default() -= f * v;
                }
            }
            rhs -= f * prhs;
            row.retain(|_, v| v.abs() > 1e-14);
        }
        rows[i] = (col, row, rhs);
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivot_of.contains_key(c)).collect();
    let mut reduced = vec![usize::MAX; n];
    for (k, &c) in free.iter().enumerate() {
        reduced[c] = k;
    }
    let mut u0 = DVector::zeros(n);
    let mut dep = Vec::with_capacity(rows.len());
    for (col, row, rhs) in rows {
        u0[col] = rhs;
        let entries = row.iter().filter(|(&c, _)| c != col).map(|(&c, &v)| (reduced[c], -v)).collect();
        dep.push((col, entries));
    }
    let nfree = free.len();
    Ok(Presolved { u0, basis: Basis::Pivoted(PivotBasis { free, dep }), nfree })
}
