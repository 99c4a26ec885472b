//! Bilevel problem data, lower-level linear structure, equality
//! elimination, generic rank and support enumeration.

mod parse;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use parse::{parse_expr, parse_problem, print_problem, ParseError};

use crate::poly::{Monomial, PolyMatrix, Polynomial, RationalFn, VarSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Eq,
    Ineq,
}

/// Lower-level constraint `a(x)^T z - b(x)` (`= 0` or `>= 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct LowerRow {
    /// Coefficients of `z1..zp`, polynomials in `x` only.
    pub a: Vec<Polynomial>,
    /// Right-hand side, a polynomial in `x` only.
    pub b: Polynomial,
    pub kind: RowKind,
    /// 1-based position of the row in the original problem text.
    pub label: usize,
}

impl LowerRow {
    /// Split `g = a(x)^T z - b(x)`; `None` when `g` is not affine in `z`.
    pub fn from_affine(g: &Polynomial, kind: RowKind, label: usize) -> Option<Self> {
        let sp = g.space();
        let n = sp.n_upper;
        let mut a = vec![Polynomial::zero(sp); sp.n_lower];
        let mut b = Polynomial::zero(sp);
        for (m, c) in g.terms() {
            let e = m.exponents();
            let zdeg: u32 = e[n..].iter().map(|&v| v as u32).sum();
            match zdeg {
                0 => b.add_term(m.clone(), -c),
                1 => {
                    let j = e[n..].iter().position(|&v| v == 1).unwrap();
                    let mut ex = e.to_vec();
                    ex[n + j] = 0;
                    a[j].add_term(Monomial::from_exponents(ex), c);
                }
                _ => return None,
            }
        }
        Some(Self { a, b, kind, label })
    }

    pub fn is_constant(&self) -> bool {
        self.a.iter().all(Polynomial::is_constant)
    }
}

/// Bilevel polynomial optimization problem with lower constraints affine in
/// the lower variables.
#[derive(Debug, Clone, PartialEq)]
pub struct BilevelProblem {
    pub space: VarSpace,
    pub upper_obj: Polynomial,
    pub upper_eq: Vec<Polynomial>,
    pub upper_ineq: Vec<Polynomial>,
    pub lower_obj: RationalFn,
    pub lower_rows: Vec<LowerRow>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("lower equality row {0} depends on x; elimination is unsupported")]
    UnsupportedElimination(usize),
    #[error("lower equality constraints are inconsistent")]
    InconsistentEqualities,
    #[error("{count} supports exceed the enumeration budget of {cap}")]
    TooManySupports { count: u128, cap: usize },
    #[error("generic rank is zero; the lower constraints carry no multiplier structure")]
    Degenerate,
}

impl BilevelProblem {
    pub fn n(&self) -> usize {
        self.space.n_upper
    }

    pub fn p(&self) -> usize {
        self.space.n_lower
    }

    pub fn m(&self) -> usize {
        self.lower_rows.len()
    }

    /// `g_j(x, y) = a_j(x)^T y - b_j(x)`.
    pub fn g(&self, row: &LowerRow) -> Polynomial {
        let mut acc = -&row.b;
        for (j, aj) in row.a.iter().enumerate() {
            if !aj.is_zero() {
                acc = &acc + &(aj * &Polynomial::y(self.space, j));
            }
        }
        acc
    }

    pub fn g_index(&self, j: usize) -> Polynomial {
        self.g(&self.lower_rows[j])
    }

    /// `A(x)` with rows `a_j(x)^T`.
    pub fn a_matrix(&self) -> PolyMatrix {
        let rows = self.lower_rows.iter().map(|r| r.a.clone()).collect();
        PolyMatrix::from_rows(self.space, rows).expect("rows have length p")
    }

    /// Rows of `A` selected by `j` (0-based).
    pub fn a_sub(&self, rows: &[usize]) -> PolyMatrix {
        let sel = rows.iter().map(|&j| self.lower_rows[j].a.clone()).collect();
        PolyMatrix::from_rows(self.space, sel).expect("rows have length p")
    }

    pub fn a_is_constant(&self) -> bool {
        self.lower_rows.iter().all(LowerRow::is_constant)
    }

    pub fn has_lower_equalities(&self) -> bool {
        self.lower_rows.iter().any(|r| r.kind == RowKind::Eq)
    }

    /// Evaluate `A(x)` at a full point (only the `x` part matters).
    pub fn a_at(&self, point: &[f64]) -> DMatrix<f64> {
        let m = self.m();
        DMatrix::from_fn(m, self.p(), |i, j| self.lower_rows[i].a[j].eval(point))
    }

    /// Pad an `x`-vector with zeros to a full point.
    pub fn x_point(&self, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        v.resize(self.space.total(), 0.0);
        v
    }

    /// Largest violation of the lower constraints at `(x, z)`.
    pub fn lower_violation(&self, point: &[f64]) -> f64 {
        self.lower_rows
            .iter()
            .map(|r| {
                let g = self.g(r).eval(point);
                match r.kind {
                    RowKind::Eq => g.abs(),
                    RowKind::Ineq => (-g).max(0.0),
                }
            })
            .fold(0.0, f64::max)
    }

    /// Largest violation of the upper constraints at `(x, y)`.
    pub fn upper_violation(&self, point: &[f64]) -> f64 {
        let e = self.upper_eq.iter().map(|h| h.eval(point).abs());
        let i = self.upper_ineq.iter().map(|h| (-h.eval(point)).max(0.0));
        e.chain(i).fold(0.0, f64::max)
    }

    /// Violation of the joint feasible set `U`.
    pub fn violation(&self, point: &[f64]) -> f64 {
        self.lower_violation(point).max(self.upper_violation(point))
    }

    /// Largest total degree among all problem data.
    pub fn max_degree(&self) -> u32 {
        let mut d = self.upper_obj.degree().max(self.lower_obj.num().degree()).max(self.lower_obj.den().degree());
        for h in self.upper_eq.iter().chain(&self.upper_ineq) {
            d = d.max(h.degree());
        }
        for r in &self.lower_rows {
            d = d.max(self.g(r).degree());
        }
        d
    }

    /// 1-based labels of the rows indexed by `rows`.
    pub fn labels(&self, rows: &[usize]) -> Vec<usize> {
        rows.iter().map(|&j| self.lower_rows[j].label).collect()
    }

    /// Map 1-based labels back to row positions.
    pub fn rows_from_labels(&self, labels: &[usize]) -> Option<Vec<usize>> {
        labels.iter().map(|&l| self.lower_rows.iter().position(|r| r.label == l)).collect()
    }
}

/// Reconstruction of the original lower variables from the reduced ones:
/// `z_full = T z_red + t0(x)`.
#[derive(Debug, Clone)]
pub struct BackMap {
    pub full: VarSpace,
    pub reduced: VarSpace,
    /// Original lower index of each reduced variable.
    pub free: Vec<usize>,
    /// `(pivot lower index, expression in the reduced space)`.
    pub pivots: Vec<(usize, Polynomial)>,
}

impl BackMap {
    pub fn identity(space: VarSpace) -> Self {
        Self { full: space, reduced: space, free: (0..space.n_lower).collect(), pivots: Vec::new() }
    }

    pub fn is_identity(&self) -> bool {
        self.pivots.is_empty()
    }

    /// Full point from a reduced point `(x, z_red)`.
    pub fn lift(&self, reduced_point: &[f64]) -> Vec<f64> {
        let n = self.full.n_upper;
        let mut out = vec![0.0; self.full.total()];
        out[..n].copy_from_slice(&reduced_point[..n]);
        for (k, &j) in self.free.iter().enumerate() {
            out[n + j] = reduced_point[n + k];
        }
        for (j, e) in &self.pivots {
            out[n + j] = e.eval(reduced_point);
        }
        out
    }

    /// Reduced point from a full point (drops pivot coordinates).
    pub fn restrict(&self, full_point: &[f64]) -> Vec<f64> {
        let n = self.full.n_upper;
        let mut out = full_point[..n].to_vec();
        for &j in &self.free {
            out.push(full_point[n + j]);
        }
        out
    }

    /// Express a full-space polynomial in the reduced space.
    pub fn reduce_poly(&self, p: &Polynomial) -> Polynomial {
        let n = self.full.n_upper;
        let mut assign = BTreeMap::new();
        for (j, e) in &self.pivots {
            assign.insert(n + j, e.remap(self.full, &self.embed_map()));
        }
        let sub = p.substitute_poly(&assign).expect("same space");
        let mut map = vec![None; self.full.total()];
        for (i, slot) in map.iter_mut().enumerate().take(n) {
            *slot = Some(i);
        }
        for (k, &j) in self.free.iter().enumerate() {
            map[n + j] = Some(n + k);
        }
        sub.remap(self.reduced, &map)
    }

    /// Index map embedding the reduced space into the full one.
    fn embed_map(&self) -> Vec<Option<usize>> {
        let n = self.full.n_upper;
        let mut map: Vec<Option<usize>> = (0..n).map(Some).collect();
        for &j in &self.free {
            map.push(Some(n + j));
        }
        map
    }

    /// Embed a reduced polynomial into the full space (free variables keep
    /// their original indices).
    pub fn embed_poly(&self, p: &Polynomial) -> Polynomial {
        p.remap(self.full, &self.embed_map())
    }
}

/// Remove constant-coefficient lower equalities by Gaussian elimination.
/// Pivots take the largest coefficient of each row, ties going to the
/// highest variable index.
pub fn eliminate_lower_equalities(p: &BilevelProblem) -> Result<(BilevelProblem, BackMap), ModelError> {
    let eq_rows: Vec<usize> = (0..p.m()).filter(|&j| p.lower_rows[j].kind == RowKind::Eq).collect();
    if eq_rows.is_empty() {
        return Ok((p.clone(), BackMap::identity(p.space)));
    }
    for &j in &eq_rows {
        if !p.lower_rows[j].is_constant() {
            return Err(ModelError::UnsupportedElimination(p.lower_rows[j].label));
        }
    }
    let sp = p.space;
    let pn = p.p();
    // augmented rows: coefficients (numbers) and right-hand sides (polys in x)
    let mut coef: Vec<Vec<f64>> = eq_rows
        .iter()
        .map(|&j| p.lower_rows[j].a.iter().map(|a| a.constant_term()).collect())
        .collect();
    let mut rhs: Vec<Polynomial> = eq_rows.iter().map(|&j| p.lower_rows[j].b.clone()).collect();
    let scale = coef.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    let tol = 1e-12 * scale;
    let mut pivots: Vec<(usize, usize)> = Vec::new(); // (row, column)
    for r in 0..coef.len() {
        let mut best: Option<usize> = None;
        for c in 0..pn {
            let v = coef[r][c].abs();
            if v > tol && best.is_none_or(|b| v >= coef[r][b].abs() - 1e-15 * scale) {
                best = Some(c);
            }
        }
        let Some(c) = best else {
            if rhs[r].max_abs_coeff() > 1e-9 * rhs[r].max_abs_coeff().max(1.0) && !rhs[r].is_zero() {
                return Err(ModelError::InconsistentEqualities);
            }
            continue;
        };
        let pv = coef[r][c];
        for v in coef[r].iter_mut() {
            *v /= pv;
        }
        rhs[r] = rhs[r].scale(1.0 / pv);
        for o in 0..coef.len() {
            if o != r && coef[o][c].abs() > 0.0 {
                let f = coef[o][c];
                for k in 0..pn {
                    coef[o][k] -= f * coef[r][k];
                }
                coef[o][c] = 0.0;
                rhs[o] = (&rhs[o] - &rhs[r].scale(f)).chop(1e-14);
            }
        }
        pivots.push((r, c));
    }
    let pivot_cols: Vec<usize> = pivots.iter().map(|&(_, c)| c).collect();
    let free: Vec<usize> = (0..pn).filter(|c| !pivot_cols.contains(c)).collect();
    let reduced = VarSpace::new(sp.n_upper, free.len());
    if free.is_empty() {
        return Err(ModelError::Degenerate);
    }
    let n = sp.n_upper;
    let mut xmap: Vec<Option<usize>> = (0..n).map(Some).collect();
    xmap.resize(sp.total(), None);
    let mut piv_exprs = Vec::new();
    for &(r, c) in &pivots {
        // z_c = rhs_r - sum_{free k} coef[r][k] z_k
        let mut e = rhs[r].remap(reduced, &xmap);
        for (k, &fk) in free.iter().enumerate() {
            let a = coef[r][fk];
            if a.abs() > tol {
                e = &e - &Polynomial::y(reduced, k).scale(a);
            }
        }
        piv_exprs.push((c, e));
    }
    piv_exprs.sort_by_key(|(c, _)| *c);
    let bm = BackMap { full: sp, reduced, free, pivots: piv_exprs };
    let red = |q: &Polynomial| bm.reduce_poly(q).chop(1e-14);
    let lower_obj = RationalFn::new(red(p.lower_obj.num()), red(p.lower_obj.den()))
        .expect("denominator stays nonzero");
    let mut rows = Vec::new();
    for r in &p.lower_rows {
        if r.kind == RowKind::Eq {
            continue;
        }
        let g = red(&p.g(r));
        rows.push(LowerRow::from_affine(&g, r.kind, r.label).expect("substitution keeps affinity"));
    }
    let out = BilevelProblem {
        space: reduced,
        upper_obj: red(&p.upper_obj),
        upper_eq: p.upper_eq.iter().map(red).collect(),
        upper_ineq: p.upper_ineq.iter().map(red).collect(),
        lower_obj,
        lower_rows: rows,
    };
    Ok((out, bm))
}

/// Numerical rank with singular-value cutoff `rel * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel * smax).count()
}

/// Generic rank `t` and the points used to estimate it.
#[derive(Debug, Clone)]
pub struct ProblemStats {
    pub t: usize,
    pub supports: Vec<Vec<usize>>,
    pub sample_points: Vec<Vec<f64>>,
}

pub const RANK_CUTOFF: f64 = 1e-8;

/// Sample points in `[-radius, radius]^n` (padded with zero lower part).
pub fn rank_samples(p: &BilevelProblem, seed: u64, samples: usize, radius: f64) -> Vec<Vec<f64>> {
    if p.a_is_constant() {
        return vec![vec![0.0; p.space.total()]];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let x: Vec<f64> = (0..p.n()).map(|_| rng.gen_range(-radius..=radius)).collect();
            p.x_point(&x)
        })
        .collect()
}

/// Largest numerical rank of `A(x)` over the sample points.
pub fn generic_rank_t(p: &BilevelProblem, points: &[Vec<f64>]) -> usize {
    points.iter().map(|w| numerical_rank(&p.a_at(w), RANK_CUTOFF)).max().unwrap_or(0)
}

fn binomial(m: usize, t: usize) -> u128 {
    let mut r: u128 = 1;
    for i in 0..t as u128 {
        r = r * (m as u128 - i) / (i + 1);
    }
    r
}

/// All `t`-subsets of `0..m` in lexicographic order.
pub fn combinations(m: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if t > m {
        return out;
    }
    let mut idx: Vec<usize> = (0..t).collect();
    loop {
        out.push(idx.clone());
        let mut i = t;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + m - t {
                break;
            }
            if i == 0 && idx[0] == m - t {
                return out;
            }
        }
        idx[i] += 1;
        for k in i + 1..t {
            idx[k] = idx[k - 1] + 1;
        }
    }
}

/// Supports `J` of size `t` whose rows have rank `t` at some sample point.
pub fn enumerate_supports(
    p: &BilevelProblem,
    t: usize,
    points: &[Vec<f64>],
    cap: usize,
) -> Result<Vec<Vec<usize>>, ModelError> {
    if t == 0 {
        return Err(ModelError::Degenerate);
    }
    let count = binomial(p.m(), t);
    if count > cap as u128 {
        return Err(ModelError::TooManySupports { count, cap });
    }
    let mats: Vec<DMatrix<f64>> = points.iter().map(|w| p.a_at(w)).collect();
    Ok(combinations(p.m(), t)
        .into_iter()
        .filter(|j| {
            mats.iter().any(|a| {
                let sub = DMatrix::from_fn(t, p.p(), |r, c| a[(j[r], c)]);
                numerical_rank(&sub, RANK_CUTOFF) == t
            })
        })
        .collect())
}

/// Generic rank plus retained supports.
pub fn problem_stats(
    p: &BilevelProblem,
    rank_override: Option<usize>,
    seed: u64,
    cap: usize,
) -> Result<ProblemStats, ModelError> {
    let pts = rank_samples(p, seed, 12, 2.0);
    let t = rank_override.unwrap_or_else(|| generic_rank_t(p, &pts));
    let supports = enumerate_supports(p, t, &pts, cap)?;
    Ok(ProblemStats { t, supports, sample_points: pts })
}

/// Active lower constraints at `point`: all equalities plus inequalities
/// with value at most `tol`. Returns row positions.
pub fn active_set(p: &BilevelProblem, point: &[f64], tol: f64) -> Vec<usize> {
    (0..p.m())
        .filter(|&j| {
            let r = &p.lower_rows[j];
            r.kind == RowKind::Eq || p.g(r).eval(point) <= tol
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX22: &str = "vars x 1 y 2\nupper.obj x1\nlower.obj x1*(z1+z2)\nlower.ineq -5*z1 - 4*z2 + 1\nlower.ineq 5*z1 - 4*z2 + 1\nlower.ineq z2\nlower.ineq -z1 + 2\n";

    #[test]
    fn parse_and_split_rows() {
        let p = parse_problem(EX22).unwrap();
        assert_eq!((p.n(), p.p(), p.m()), (1, 2, 4));
        let a = p.a_at(&[0.0, 0.0, 0.0]);
        assert_eq!(a[(0, 0)], -5.0);
        assert_eq!(a[(1, 1)], -4.0);
        assert_eq!(p.lower_rows[0].b.constant_term(), -1.0);
    }

    #[test]
    fn empty_upper_sections_are_fine() {
        let p = parse_problem("vars x 1 y 1\nupper.obj x1\nlower.obj z1\nlower.ineq z1\n").unwrap();
        assert!(p.upper_eq.is_empty() && p.upper_ineq.is_empty());
    }

    #[test]
    fn nonlinear_lower_row_is_rejected() {
        let e = parse_problem("vars x 1 y 2\nupper.obj x1\nlower.obj z1\nlower.ineq z1*z2\n").unwrap_err();
        assert_eq!(e, ParseError::NonlinearInLower { index: 1, line: 4 });
    }

    #[test]
    fn syntax_errors_carry_position() {
        let e = parse_problem("vars x 1 y 1\nupper.obj x1 + * 2\nlower.obj z1\nlower.ineq z1\n").unwrap_err();
        match e {
            ParseError::Syntax { line, col, .. } => {
                assert_eq!(line, 2);
                assert_eq!(col, 16);
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_problem("vars x 1 y 1\nupper.obj x3\nlower.obj z1\nlower.ineq z1\n").is_err());
    }

    #[test]
    fn round_trip() {
        let src = "vars x 2 y 2\nupper.obj 0.5*(y1-3)^2 + x1*x2 - 1/3\nupper.ineq 1 - x1^2\nupper.eq x2 - 0.1\nlower.obj (1 + 2*z1)/(6 + z1 + x1)\nlower.ineq x1*z1 + z2 - 2*x2\nlower.eq z1 + z2 - 1\n";
        let p = parse_problem(src).unwrap();
        let q = parse_problem(&print_problem(&p)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn bipa4_style_elimination() {
        let src = "vars x 2 y 4\nupper.obj x1 + z2\nlower.obj z1 + 6*z4\nlower.eq z1 + z2 - 1\nlower.eq z3 + z4 - 1\nlower.ineq z1\nlower.ineq z2\nlower.ineq z3\nlower.ineq z4\n";
        let p = parse_problem(src).unwrap();
        let (r, bm) = eliminate_lower_equalities(&p).unwrap();
        assert_eq!(r.p(), 2);
        assert_eq!(bm.free, vec![0, 2]);
        assert_eq!(bm.pivots.len(), 2);
        let full = bm.lift(&[0.0, 0.0, 0.3, 0.8]);
        assert!((full[3] - 0.7).abs() < 1e-15 && (full[5] - 0.2).abs() < 1e-15);
        // back-substituted equalities vanish identically
        for row in p.lower_rows.iter().filter(|r| r.kind == RowKind::Eq) {
            let g = bm.reduce_poly(&p.g(row));
            assert!(g.max_abs_coeff() <= 1e-9);
        }
        assert_eq!(r.m(), 4);
        assert_eq!(r.lower_rows[0].label, 3);
    }

    #[test]
    fn elimination_without_equalities_is_identity() {
        let p = parse_problem(EX22).unwrap();
        let (r, bm) = eliminate_lower_equalities(&p).unwrap();
        assert_eq!(r, p);
        assert!(bm.is_identity());
    }

    #[test]
    fn contradictory_equalities() {
        let p = parse_problem("vars x 1 y 2\nupper.obj x1\nlower.obj z2\nlower.eq z1\nlower.eq z1 - 1\n").unwrap();
        assert_eq!(eliminate_lower_equalities(&p).unwrap_err(), ModelError::InconsistentEqualities);
    }

    #[test]
    fn rank_and_supports() {
        let p = parse_problem(EX22).unwrap();
        let st = problem_stats(&p, None, 42, 2000).unwrap();
        assert_eq!(st.t, 2);
        assert_eq!(st.supports.len(), 6);

        let z = parse_problem("vars x 1 y 1\nupper.obj x1\nlower.obj z1\nlower.ineq 0*z1 + x1\n").unwrap();
        let pts = rank_samples(&z, 1, 12, 2.0);
        assert_eq!(generic_rank_t(&z, &pts), 0);

        let e24 = parse_problem("vars x 1 y 2\nupper.obj x1\nlower.obj z1\nlower.ineq x1*z1 - z2\nlower.ineq z2\nlower.ineq z1 + z2\n").unwrap();
        let pts = rank_samples(&e24, 3, 12, 2.0);
        assert_eq!(generic_rank_t(&e24, &pts), 2);
    }

    #[test]
    fn parallel_rows_are_filtered() {
        let p = parse_problem("vars x 1 y 2\nupper.obj x1\nlower.obj z1\nlower.ineq z1\nlower.ineq 2*z1 - 1\nlower.ineq z2\n").unwrap();
        let st = problem_stats(&p, None, 0, 2000).unwrap();
        assert_eq!(st.supports, vec![vec![0, 2], vec![1, 2]]);
    }

    #[test]
    fn active_sets() {
        let p = parse_problem("vars x 1 y 1\nupper.obj x1\nlower.obj (z1-x1)^2\nlower.ineq z1 - 0.5\nlower.ineq 1 - z1\n").unwrap();
        assert_eq!(active_set(&p, &[0.0, 0.5], 1e-4), vec![0]);
        assert_eq!(active_set(&p, &[0.0, 0.75], 1e-4), Vec::<usize>::new());
        let small = active_set(&p, &[0.0, 0.50005], 1e-6);
        let large = active_set(&p, &[0.0, 0.50005], 1e-4);
        assert!(small.iter().all(|j| large.contains(j)));
    }

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(4, 2)[0], vec![0, 1]);
        assert_eq!(combinations(4, 2)[5], vec![2, 3]);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(combinations(5, 3).len(), 10);
    }
}
