//! Feasible extensions: maps `q(x, y)` with `q(xh, yh) = zh` and
//! `A(x) q(x, y) >= b(x)` on the joint feasible set, used to cut off
//! points whose lower part is not optimal.

use std::collections::BTreeMap;

use bpop_conic::{ConicProgram, DenseIpm, ConicSolver, PsdBlock, Status};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::BilevelProblem;
use crate::poly::{Monomial, PolyMatrix, Polynomial, RationalFn, VarSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FeKind {
    Pattern,
    Linear,
    Quadratic,
    Coordinate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    SingleBound,
    Box,
    Simplex,
}

/// Multipliers proving `A q(x, y) - b(x) = xi + Y1 h(x, y) + Y2 (A y - b(x))`.
#[derive(Debug, Clone)]
pub struct LinearCertificate {
    pub w0: DVector<f64>,
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub xi: DVector<f64>,
    /// Columns follow upper equalities then upper inequalities of the
    /// affine upper constraints used.
    pub y1: DMatrix<f64>,
    pub y2: DMatrix<f64>,
    /// Upper constraints used, with `true` for equalities.
    pub h: Vec<(Polynomial, bool)>,
}

/// Per row `j`: `a_j^T q - b_j = v^T Y_j v + nu_j^T h + theta_j^T (A y - b)`
/// with `v = (1, x, y)`.
#[derive(Debug, Clone)]
pub struct QuadraticCertificate {
    pub w: Vec<DMatrix<f64>>,
    pub y: Vec<DMatrix<f64>>,
    pub nu: Vec<DVector<f64>>,
    pub theta: Vec<DVector<f64>>,
    pub h: Vec<(Polynomial, bool)>,
}

#[derive(Debug, Clone)]
pub enum FeCertificate {
    Pattern(PatternKind),
    Linear(LinearCertificate),
    Quadratic(QuadraticCertificate),
    Coordinate(PolyMatrix),
}

#[derive(Debug, Clone)]
pub struct FeasibleExtension {
    pub q: Vec<Polynomial>,
    pub kind: FeKind,
    pub certificate: FeCertificate,
}

impl FeasibleExtension {
    pub fn eval(&self, point: &[f64]) -> Vec<f64> {
        self.q.iter().map(|q| q.eval(point)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeError {
    #[error("lower equality constraints must be eliminated first")]
    HasEqualities,
    #[error("lower constraint matrix depends on x")]
    NonconstantMatrix,
    #[error("right-hand side degree {0} is too high for this construction")]
    DegreeTooHigh(u32),
    #[error("coordinate change has nonconstant determinant")]
    NonconstantDeterminant,
    #[error("coordinate change does not match the constraint rows")]
    CoordinateMismatch,
}

/// Constant lower matrix `A` and right-hand sides, when every row is an
/// inequality with x-free coefficients.
fn constant_rows(p: &BilevelProblem) -> Result<(DMatrix<f64>, Vec<Polynomial>), FeError> {
    if p.has_lower_equalities() {
        return Err(FeError::HasEqualities);
    }
    if !p.a_is_constant() {
        return Err(FeError::NonconstantMatrix);
    }
    let a = p.a_at(&vec![0.0; p.space.total()]);
    let b = p.lower_rows.iter().map(|r| r.b.clone()).collect();
    Ok((a, b))
}

fn full_point(p: &BilevelProblem, x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut w = x.to_vec();
    w.extend_from_slice(y);
    debug_assert_eq!(w.len(), p.space.total());
    w
}

/// Closed forms for single bounds, separable boxes and simplices.
pub fn fe_pattern(p: &BilevelProblem, xh: &[f64], _yh: &[f64], zh: &[f64]) -> Option<FeasibleExtension> {
    let (a, b) = constant_rows(p).ok()?;
    let sp = p.space;
    let np = p.p();
    let w = p.x_point(xh);
    let tol = 1e-9;
    // separable rows: exactly one nonzero coefficient
    let single: Vec<Option<(usize, f64)>> = (0..p.m())
        .map(|j| {
            let nz: Vec<usize> = (0..np).filter(|&i| a[(j, i)] != 0.0).collect();
            (nz.len() == 1).then(|| (nz[0], a[(j, nz[0])]))
        })
        .collect();
    if single.iter().all(Option::is_some) {
        let mut lower: Vec<Vec<Polynomial>> = vec![Vec::new(); np];
        let mut upper: Vec<Vec<Polynomial>> = vec![Vec::new(); np];
        for (j, s) in single.iter().enumerate() {
            let (i, c) = s.unwrap();
            let bound = b[j].scale(1.0 / c);
            if c > 0.0 {
                lower[i].push(bound);
            } else {
                upper[i].push(bound);
            }
        }
        if lower.iter().chain(&upper).all(|v| v.len() <= 1) {
            let mut q = Vec::with_capacity(np);
            for i in 0..np {
                let qi = match (lower[i].first(), upper[i].first()) {
                    (Some(lo), Some(hi)) => {
                        let (bl, bh) = (lo.eval(&w), hi.eval(&w));
                        if (bh - bl).abs() <= tol * (1.0 + bl.abs()) {
                            lo.clone()
                        } else {
                            (&lo.scale(bh - zh[i]) + &hi.scale(zh[i] - bl)).scale(1.0 / (bh - bl))
                        }
                    }
                    (Some(g), None) | (None, Some(g)) => g + &Polynomial::constant(sp, zh[i] - g.eval(&w)),
                    (None, None) => Polynomial::constant(sp, zh[i]),
                };
                q.push(qi.chop(1e-14));
            }
            let kind = if np == 1 && p.m() == 1 { PatternKind::SingleBound } else { PatternKind::Box };
            return Some(FeasibleExtension { q, kind: FeKind::Pattern, certificate: FeCertificate::Pattern(kind) });
        }
        return None;
    }
    // simplex: z_i >= b_i(x) for every i, plus one row -c e^T z + b0(x) >= 0
    let dense: Vec<usize> = (0..p.m()).filter(|&j| single[j].is_none()).collect();
    if dense.len() != 1 || p.m() != np + 1 {
        return None;
    }
    let jd = dense[0];
    let c = -a[(jd, 0)];
    if c <= 0.0 || (0..np).any(|i| (a[(jd, i)] + c).abs() > 1e-12 * c) {
        return None;
    }
    let mut lower: Vec<Option<Polynomial>> = vec![None; np];
    for j in (0..p.m()).filter(|&j| j != jd) {
        let (i, s) = single[j].unwrap();
        if s <= 0.0 || lower[i].is_some() {
            return None;
        }
        lower[i] = Some(b[j].scale(1.0 / s));
    }
    let bl: Vec<Polynomial> = lower.into_iter().collect::<Option<Vec<_>>>()?;
    let b0 = b[jd].scale(-1.0 / c);
    let slack = bl.iter().fold(b0.clone(), |acc, g| &acc - g);
    let sh = slack.eval(&w);
    let q = if sh.abs() <= tol * (1.0 + b0.eval(&w).abs()) {
        bl
    } else {
        bl.iter()
            .enumerate()
            .map(|(i, g)| (g + &slack.scale((zh[i] - g.eval(&w)) / sh)).chop(1e-14))
            .collect()
    };
    Some(FeasibleExtension { q, kind: FeKind::Pattern, certificate: FeCertificate::Pattern(PatternKind::Simplex) })
}

/// Coefficient vector over `v = (1, w)` of an affine polynomial.
fn affine_coeffs(g: &Polynomial) -> Option<Vec<f64>> {
    if g.degree() > 1 {
        return None;
    }
    let n = g.nvars();
    let mut v = vec![0.0; n + 1];
    for (m, c) in g.terms() {
        match m.exponents().iter().position(|&e| e > 0) {
            None => v[0] += c,
            Some(i) => v[i + 1] += c,
        }
    }
    Some(v)
}

/// Symmetric `M` with `g = v^T M v`, `v = (1, w)`.
fn quad_matrix(g: &Polynomial) -> Option<DMatrix<f64>> {
    if g.degree() > 2 {
        return None;
    }
    let n = g.nvars();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    for (mono, c) in g.terms() {
        let mut idx: Vec<usize> = Vec::new();
        for (i, &e) in mono.exponents().iter().enumerate() {
            for _ in 0..e {
                idx.push(i + 1);
            }
        }
        match idx.as_slice() {
            [] => m[(0, 0)] += c,
            [i] => {
                m[(0, *i)] += c / 2.0;
                m[(*i, 0)] += c / 2.0;
            }
            [i, j] if i == j => m[(*i, *i)] += c,
            [i, j] => {
                m[(*i, *j)] += c / 2.0;
                m[(*j, *i)] += c / 2.0;
            }
            _ => unreachable!(),
        }
    }
    Some(m)
}

fn poly_from_quad(space: VarSpace, m: &DMatrix<f64>) -> Polynomial {
    let n = space.total();
    let mut terms = Vec::new();
    for r in 0..=n {
        for c in r..=n {
            let coef = if r == c { m[(r, c)] } else { m[(r, c)] + m[(c, r)] };
            let mut e = vec![0u16; n];
            if r > 0 {
                e[r - 1] += 1;
            }
            if c > 0 {
                e[c - 1] += 1;
            }
            terms.push((Monomial::from_exponents(e), coef));
        }
    }
    Polynomial::from_terms(space, terms)
}

fn poly_from_affine(space: VarSpace, v: &[f64]) -> Polynomial {
    let n = space.total();
    let mut acc = Polynomial::constant(space, v[0]);
    for i in 0..n {
        if v[i + 1] != 0.0 {
            acc.add_term(Monomial::var(n, i), v[i + 1]);
        }
    }
    acc
}

/// Upper constraints usable by a construction of the given degree; others
/// are dropped, which only enlarges the set on which `q` must be feasible.
fn usable_upper(p: &BilevelProblem, max_deg: u32) -> Vec<(Polynomial, bool)> {
    let e = p.upper_eq.iter().filter(|h| h.degree() <= max_deg).map(|h| (h.clone(), true));
    let i = p.upper_ineq.iter().filter(|h| h.degree() <= max_deg).map(|h| (h.clone(), false));
    e.chain(i).collect()
}

/// Drop solver noise: zero tiny values and snap to nine decimals when that
/// moves the value by less than `1e-10`.
fn clean(v: f64) -> f64 {
    if v.abs() < 1e-10 {
        return 0.0;
    }
    let r = (v * 1e9).round() / 1e9;
    if (r - v).abs() < 1e-10 {
        r
    } else {
        v
    }
}

fn solve_certificate_program(cp: &ConicProgram) -> Option<DVector<f64>> {
    let r = DenseIpm::default().solve(cp);
    let ok = r.status == Status::Optimal || (r.status == Status::Stalled && r.max_residual() <= 1e-7);
    if !ok {
        return None;
    }
    Some(r.u.map(clean))
}

/// Linear extension `q = w0 + W1 x + W2 y` from the linear program over
/// coefficient identities. The separable form `q_i = a_i y_i + c_i` closest
/// to the identity is tried first; otherwise the coefficients of least l1
/// norm are chosen.
pub fn fe_linear(p: &BilevelProblem, xh: &[f64], yh: &[f64], zh: &[f64]) -> Result<Option<FeasibleExtension>, FeError> {
    let (a, b) = constant_rows(p)?;
    let deg = b.iter().map(Polynomial::degree).max().unwrap_or(0);
    if deg > 1 {
        return Err(FeError::DegreeTooHigh(deg));
    }
    if let Some(fe) = linear_program(p, &a, &b, xh, yh, zh, true) {
        return Ok(Some(fe));
    }
    Ok(linear_program(p, &a, &b, xh, yh, zh, false))
}

fn linear_program(p: &BilevelProblem, a: &DMatrix<f64>, b: &[Polynomial], xh: &[f64], yh: &[f64], zh: &[f64], separable: bool) -> Option<FeasibleExtension> {
    let sp = p.space;
    let (n, np, m) = (p.n(), p.p(), p.m());
    let l = 1 + n + np;
    let h = usable_upper(p, 1);
    let nh = h.len();
    let hc: Vec<Vec<f64>> = h.iter().map(|(g, _)| affine_coeffs(g).unwrap()).collect();
    let gc: Vec<Vec<f64>> = p.lower_rows.iter().map(|r| affine_coeffs(&p.g(r)).unwrap()).collect();
    let bc: Vec<Vec<f64>> = b.iter().map(|g| affine_coeffs(g).unwrap()).collect();
    // coefficient allowed in the chosen form, and the value the l1 term
    // measures distance from
    let free = |i: usize, r: usize| !separable || r == 0 || r == 1 + n + i;
    let target = |i: usize, r: usize| if separable && r == 1 + n + i { 1.0 } else { 0.0 };
    // variable layout
    let iw = |i: usize, r: usize| i * l + r;
    let ixi = np * l;
    let iy1 = ixi + m;
    let iy2 = iy1 + m * nh;
    let it = iy2 + m * m;
    let nv = it + np * l;
    let mut cp = ConicProgram::new(nv);
    let mut c = vec![0.0; nv];
    for k in it..nv {
        c[k] = 1.0;
    }
    cp.set_objective(c);
    for j in 0..m {
        for r in 0..l {
            let mut row = Vec::new();
            for i in 0..np {
                if a[(j, i)] != 0.0 && free(i, r) {
                    row.push((iw(i, r), a[(j, i)]));
                }
            }
            if r == 0 {
                row.push((ixi + j, -1.0));
            }
            for k in 0..nh {
                if hc[k][r] != 0.0 {
                    row.push((iy1 + j * nh + k, -hc[k][r]));
                }
            }
            for k in 0..m {
                if gc[k][r] != 0.0 {
                    row.push((iy2 + j * m + k, -gc[k][r]));
                }
            }
            if !row.is_empty() || bc[j][r] != 0.0 {
                cp.add_equality(row, bc[j][r]);
            }
        }
    }
    let v: Vec<f64> = std::iter::once(1.0).chain(xh.iter().copied()).chain(yh.iter().copied()).collect();
    for i in 0..np {
        cp.add_equality((0..l).filter(|&r| free(i, r)).map(|r| (iw(i, r), v[r])).collect(), zh[i]);
    }
    for j in 0..m {
        cp.add_nonneg(0.0, vec![(ixi + j, 1.0)]);
        for k in 0..nh {
            if !h[k].1 {
                cp.add_nonneg(0.0, vec![(iy1 + j * nh + k, 1.0)]);
            }
        }
        for k in 0..m {
            cp.add_nonneg(0.0, vec![(iy2 + j * m + k, 1.0)]);
        }
    }
    for i in 0..np {
        for r in 0..l {
            if free(i, r) {
                let t0 = target(i, r);
                cp.add_nonneg(t0, vec![(it + i * l + r, 1.0), (iw(i, r), -1.0)]);
                cp.add_nonneg(-t0, vec![(it + i * l + r, 1.0), (iw(i, r), 1.0)]);
            } else {
                cp.add_equality(vec![(iw(i, r), 1.0)], 0.0);
                cp.add_equality(vec![(it + i * l + r, 1.0)], 0.0);
            }
        }
    }
    let u = solve_certificate_program(&cp)?;
    let cert = LinearCertificate {
        w0: DVector::from_fn(np, |i, _| u[iw(i, 0)]),
        w1: DMatrix::from_fn(np, n, |i, k| u[iw(i, 1 + k)]),
        w2: DMatrix::from_fn(np, np, |i, k| u[iw(i, 1 + n + k)]),
        xi: DVector::from_fn(m, |j, _| u[ixi + j].max(0.0)),
        y1: DMatrix::from_fn(m, nh, |j, k| if h[k].1 { u[iy1 + j * nh + k] } else { u[iy1 + j * nh + k].max(0.0) }),
        y2: DMatrix::from_fn(m, m, |j, k| u[iy2 + j * m + k].max(0.0)),
        h,
    };
    let q = (0..np)
        .map(|i| poly_from_affine(sp, &(0..l).map(|r| u[iw(i, r)]).collect::<Vec<_>>()))
        .collect();
    Some(FeasibleExtension { q, kind: FeKind::Linear, certificate: FeCertificate::Linear(cert) })
}

/// Quadratic extension `q_i = v^T W_i v` from the semidefinite program over
/// coefficient identities, choosing coefficients of least l1 norm.
pub fn fe_quadratic(p: &BilevelProblem, xh: &[f64], yh: &[f64], zh: &[f64]) -> Result<Option<FeasibleExtension>, FeError> {
    let (a, b) = constant_rows(p)?;
    let deg = b.iter().map(Polynomial::degree).max().unwrap_or(0);
    if deg > 2 {
        return Err(FeError::DegreeTooHigh(deg));
    }
    let sp = p.space;
    let (n, np, m) = (p.n(), p.p(), p.m());
    let l = 1 + n + np;
    let ntri = l * (l + 1) / 2;
    let tri: Vec<(usize, usize)> = (0..l).flat_map(|r| (r..l).map(move |c| (r, c))).collect();
    let h = usable_upper(p, 2);
    let nh = h.len();
    let hm: Vec<DMatrix<f64>> = h.iter().map(|(g, _)| quad_matrix(g).unwrap()).collect();
    let gm: Vec<DMatrix<f64>> = p.lower_rows.iter().map(|r| quad_matrix(&p.g(r)).unwrap()).collect();
    let bm: Vec<DMatrix<f64>> = b.iter().map(|g| quad_matrix(g).unwrap()).collect();
    let iw = |i: usize, t: usize| i * ntri + t;
    let iy = np * ntri;
    let inu = iy + m * ntri;
    let ith = inu + m * nh;
    let it = ith + m * m;
    let nv = it + np * ntri;
    let mut cp = ConicProgram::new(nv);
    let mut c = vec![0.0; nv];
    for k in it..nv {
        c[k] = 1.0;
    }
    cp.set_objective(c);
    for j in 0..m {
        for (t, &(r, cc)) in tri.iter().enumerate() {
            let mut row = Vec::new();
            for i in 0..np {
                if a[(j, i)] != 0.0 {
                    row.push((iw(i, t), a[(j, i)]));
                }
            }
            row.push((iy + j * ntri + t, -1.0));
            for k in 0..nh {
                if hm[k][(r, cc)] != 0.0 {
                    row.push((inu + j * nh + k, -hm[k][(r, cc)]));
                }
            }
            for k in 0..m {
                if gm[k][(r, cc)] != 0.0 {
                    row.push((ith + j * m + k, -gm[k][(r, cc)]));
                }
            }
            cp.add_equality(row, bm[j][(r, cc)]);
        }
    }
    let v: Vec<f64> = std::iter::once(1.0).chain(xh.iter().copied()).chain(yh.iter().copied()).collect();
    for i in 0..np {
        let row = tri
            .iter()
            .enumerate()
            .map(|(t, &(r, cc))| (iw(i, t), if r == cc { v[r] * v[r] } else { 2.0 * v[r] * v[cc] }))
            .collect();
        cp.add_equality(row, zh[i]);
    }
    for j in 0..m {
        let mut blk = PsdBlock::new(l);
        for (t, &(r, cc)) in tri.iter().enumerate() {
            blk.add_coef(iy + j * ntri + t, r, cc, 1.0);
        }
        cp.add_psd_block(blk);
        for k in 0..nh {
            if !h[k].1 {
                cp.add_nonneg(0.0, vec![(inu + j * nh + k, 1.0)]);
            }
        }
        for k in 0..m {
            cp.add_nonneg(0.0, vec![(ith + j * m + k, 1.0)]);
        }
    }
    for i in 0..np {
        for t in 0..ntri {
            cp.add_nonneg(0.0, vec![(it + i * ntri + t, 1.0), (iw(i, t), -1.0)]);
            cp.add_nonneg(0.0, vec![(it + i * ntri + t, 1.0), (iw(i, t), 1.0)]);
        }
    }
    let Some(u) = solve_certificate_program(&cp) else {
        return Ok(None);
    };
    let sym = |base: usize| {
        let mut mm = DMatrix::zeros(l, l);
        for (t, &(r, cc)) in tri.iter().enumerate() {
            mm[(r, cc)] = u[base + t];
            mm[(cc, r)] = u[base + t];
        }
        mm
    };
    let w: Vec<DMatrix<f64>> = (0..np).map(|i| sym(iw(i, 0))).collect();
    let cert = QuadraticCertificate {
        y: (0..m).map(|j| sym(iy + j * ntri)).collect(),
        nu: (0..m)
            .map(|j| DVector::from_fn(nh, |k, _| if h[k].1 { u[inu + j * nh + k] } else { u[inu + j * nh + k].max(0.0) }))
            .collect(),
        theta: (0..m).map(|j| DVector::from_fn(m, |k, _| u[ith + j * m + k].max(0.0))).collect(),
        w: w.clone(),
        h,
    };
    let q = w.iter().map(|wi| poly_from_quad(sp, wi).chop(1e-12)).collect();
    Ok(Some(FeasibleExtension { q, kind: FeKind::Quadratic, certificate: FeCertificate::Quadratic(cert) }))
}

/// Box formula in the coordinates `B(x) z`, mapped back through
/// `B(x)^{-1}`; requires `det B` constant so the result stays polynomial.
pub fn fe_coordinate(p: &BilevelProblem, bmat: &PolyMatrix, xh: &[f64], yh: &[f64], zh: &[f64]) -> Result<FeasibleExtension, FeError> {
    let np = p.p();
    if p.has_lower_equalities() {
        return Err(FeError::HasEqualities);
    }
    if bmat.rows() != np || bmat.cols() != np {
        return Err(FeError::CoordinateMismatch);
    }
    let (adj, det) = bmat.adjugate_det().map_err(|_| FeError::CoordinateMismatch)?;
    let Some(dc) = det.constant_value().filter(|d| d.abs() > 1e-12) else {
        return Err(FeError::NonconstantDeterminant);
    };
    let sp = p.space;
    let w = p.x_point(xh);
    // match every row to +-B_i
    let mut lower: Vec<Option<Polynomial>> = vec![None; np];
    let mut upper: Vec<Option<Polynomial>> = vec![None; np];
    for r in &p.lower_rows {
        let mut hit = false;
        for i in 0..np {
            for sign in [1.0, -1.0] {
                let same = (0..np).all(|k| (&r.a[k] - &bmat.get(i, k).scale(sign)).max_abs_coeff() <= 1e-12);
                if same && !hit {
                    hit = true;
                    let slot = if sign > 0.0 { &mut lower[i] } else { &mut upper[i] };
                    if slot.is_some() {
                        return Err(FeError::CoordinateMismatch);
                    }
                    *slot = Some(r.b.scale(sign));
                }
            }
        }
        if !hit {
            return Err(FeError::CoordinateMismatch);
        }
    }
    let bz: Vec<f64> = (0..np).map(|i| (0..np).map(|k| bmat.get(i, k).eval(&w) * zh[k]).sum()).collect();
    let _ = yh;
    let mut qt = Vec::with_capacity(np);
    for i in 0..np {
        let qi = match (&lower[i], &upper[i]) {
            (Some(lo), Some(hi)) => {
                let (bl, bh) = (lo.eval(&w), hi.eval(&w));
                if (bh - bl).abs() <= 1e-9 * (1.0 + bl.abs()) {
                    lo.clone()
                } else {
                    (&lo.scale(bh - bz[i]) + &hi.scale(bz[i] - bl)).scale(1.0 / (bh - bl))
                }
            }
            (Some(g), None) | (None, Some(g)) => g + &Polynomial::constant(sp, bz[i] - g.eval(&w)),
            (None, None) => Polynomial::constant(sp, bz[i]),
        };
        qt.push(qi);
    }
    let q = adj.mul_vec(&qt).into_iter().map(|g| g.scale(1.0 / dc).chop(1e-14)).collect();
    Ok(FeasibleExtension { q, kind: FeKind::Coordinate, certificate: FeCertificate::Coordinate(bmat.clone()) })
}

/// Outcome of checking an extension.
#[derive(Debug, Clone, Serialize)]
pub struct FeCheck {
    pub pass: bool,
    pub interpolation: f64,
    /// Largest coefficient of the certificate identity residuals (zero for
    /// kinds without a certificate).
    pub identity: f64,
    /// Largest negative multiplier or PSD eigenvalue.
    pub sign: f64,
    /// Largest `b_j(x) - a_j^T q(x, y)` over sampled points of the joint set.
    pub sampled: f64,
    pub samples: usize,
}

pub const FE_TOL: f64 = 1e-7;

/// Rejection samples of the joint feasible set inside a box around `center`.
pub fn sample_joint_set(p: &BilevelProblem, center: &[f64], radius: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let tries = count * 200;
    for _ in 0..tries {
        if out.len() >= count {
            break;
        }
        let w: Vec<f64> = center.iter().map(|c| c + rng.gen_range(-radius..=radius)).collect();
        if p.violation(&w) <= 0.0 {
            out.push(w);
        }
    }
    out
}

fn identity_residual_linear(p: &BilevelProblem, q: &[Polynomial], c: &LinearCertificate) -> f64 {
    let mut worst = 0.0_f64;
    for (j, r) in p.lower_rows.iter().enumerate() {
        let mut lhs = -&r.b;
        for (i, qi) in q.iter().enumerate() {
            lhs = &lhs + &(&r.a[i] * qi);
        }
        let mut rhs = Polynomial::constant(p.space, c.xi[j]);
        for (k, (h, _)) in c.h.iter().enumerate() {
            rhs = &rhs + &h.scale(c.y1[(j, k)]);
        }
        for (k, rk) in p.lower_rows.iter().enumerate() {
            rhs = &rhs + &p.g(rk).scale(c.y2[(j, k)]);
        }
        worst = worst.max((&lhs - &rhs).max_abs_coeff());
    }
    worst
}

fn identity_residual_quadratic(p: &BilevelProblem, q: &[Polynomial], c: &QuadraticCertificate) -> f64 {
    let mut worst = 0.0_f64;
    for (j, r) in p.lower_rows.iter().enumerate() {
        let mut lhs = -&r.b;
        for (i, qi) in q.iter().enumerate() {
            lhs = &lhs + &(&r.a[i] * qi);
        }
        let mut rhs = poly_from_quad(p.space, &c.y[j]);
        for (k, (h, _)) in c.h.iter().enumerate() {
            rhs = &rhs + &h.scale(c.nu[j][k]);
        }
        for (k, rk) in p.lower_rows.iter().enumerate() {
            rhs = &rhs + &p.g(rk).scale(c.theta[j][k]);
        }
        worst = worst.max((&lhs - &rhs).max_abs_coeff());
    }
    worst
}

/// Check interpolation, certificate identities and signs, and for closed
/// forms the sampled feasibility of `q` over the joint set.
pub fn fe_verify(p: &BilevelProblem, fe: &FeasibleExtension, xh: &[f64], yh: &[f64], zh: &[f64], seed: u64) -> FeCheck {
    let w = full_point(p, xh, yh);
    let interpolation = fe.eval(&w).iter().zip(zh).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (identity, sign) = match &fe.certificate {
        FeCertificate::Linear(c) => {
            let neg = c.xi.iter().chain(c.y2.iter()).fold(0.0_f64, |a, &v| a.max(-v));
            let neg1 = (0..c.y1.ncols())
                .filter(|&k| !c.h[k].1)
                .flat_map(|k| c.y1.column(k).iter().copied().collect::<Vec<_>>())
                .fold(0.0_f64, |a, v| a.max(-v));
            (identity_residual_linear(p, &fe.q, c), neg.max(neg1))
        }
        FeCertificate::Quadratic(c) => {
            let mut neg = 0.0_f64;
            for y in &c.y {
                neg = neg.max(-y.clone().symmetric_eigenvalues().min());
            }
            for t in &c.theta {
                neg = neg.max(-t.min());
            }
            for nu in &c.nu {
                for (k, v) in nu.iter().enumerate() {
                    if !c.h[k].1 {
                        neg = neg.max(-v);
                    }
                }
            }
            (identity_residual_quadratic(p, &fe.q, c), neg)
        }
        _ => (0.0, 0.0),
    };
    let (sampled, samples) = match fe.kind {
        FeKind::Pattern | FeKind::Coordinate => {
            let pts = sample_joint_set(p, &w, 2.0, 1000, seed);
            let mut worst = 0.0_f64;
            for pt in &pts {
                let qv = fe.eval(pt);
                for r in &p.lower_rows {
                    let ax: f64 = r.a.iter().zip(&qv).map(|(a, v)| a.eval(pt) * v).sum();
                    worst = worst.max(r.b.eval(pt) - ax);
                }
            }
            (worst, pts.len())
        }
        _ => (0.0, 0),
    };
    let pass = interpolation <= FE_TOL && identity <= FE_TOL && sign <= 1e-9 && sampled <= 1e-6;
    FeCheck { pass, interpolation, identity, sign, sampled, samples }
}

/// Try closed forms, then the linear program, then the semidefinite
/// program; return the first extension that passes verification.
pub fn synthesize(p: &BilevelProblem, xh: &[f64], yh: &[f64], zh: &[f64], seed: u64) -> Option<FeasibleExtension> {
    if let Some(fe) = fe_pattern(p, xh, yh, zh) {
        if fe_verify(p, &fe, xh, yh, zh, seed).pass {
            return Some(fe);
        }
    }
    if let Ok(Some(fe)) = fe_linear(p, xh, yh, zh) {
        if fe_verify(p, &fe, xh, yh, zh, seed).pass {
            return Some(fe);
        }
    }
    if let Ok(Some(fe)) = fe_quadratic(p, xh, yh, zh) {
        if fe_verify(p, &fe, xh, yh, zh, seed).pass {
            return Some(fe);
        }
    }
    None
}

/// `f(x, q(x, y)) - f(x, y) >= 0` with denominators cleared; for
/// `f = N / Q` this is `N(x, q) Q(x, y) - N(x, y) Q(x, q)`, valid when `Q`
/// is positive on the joint set.
pub fn cut_polynomial(p: &BilevelProblem, q: &[Polynomial]) -> Polynomial {
    let assign: BTreeMap<usize, Polynomial> = q.iter().enumerate().map(|(i, qi)| (p.space.lower_index(i), qi.clone())).collect();
    let f: &RationalFn = &p.lower_obj;
    let nq = f.num().substitute_poly(&assign).expect("same space");
    if f.is_polynomial() {
        let num = f.as_polynomial().unwrap();
        return (&nq - &num).pruned(1e-14);
    }
    let dq = f.den().substitute_poly(&assign).expect("same space");
    (&(&nq * f.den()) - &(f.num() * &dq)).pruned(1e-14)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_problem;

    const BF2: &str = "vars x 2 y 2\nupper.obj -2*x1 + x2 + 0.5*y1\nupper.ineq 2 - x1 - x2\nupper.ineq x1\nupper.ineq x2\n\
        lower.obj x1 + x2 - 4*z1 + z2\nlower.ineq 2*x1 - z1 + z2 - 2.5\nlower.ineq 2 - x1 + 3*x2 - z2\nlower.ineq z1\nlower.ineq z2\n";

    fn show(q: &[Polynomial]) -> Vec<String> {
        q.iter().map(|g| g.to_string()).collect()
    }

    #[test]
    fn box_with_degenerate_coordinate() {
        let p = parse_problem("vars x 1 y 2\nupper.obj x1\nlower.obj z1 + z2\nlower.ineq z1 - x1\nlower.ineq x1 - z1\nlower.ineq z2\nlower.ineq 2 - z2\n").unwrap();
        let fe = fe_pattern(&p, &[0.5], &[0.5, 1.0], &[0.5, 0.5]).unwrap();
        assert_eq!(fe.kind, FeKind::Pattern);
        assert_eq!(show(&fe.q), vec!["x1".to_string(), "0.5".to_string()]);
        assert!(fe_verify(&p, &fe, &[0.5], &[0.5, 1.0], &[0.5, 0.5], 1).pass);
    }

    #[test]
    fn single_bound_has_zero_offset_at_the_bound() {
        let p = parse_problem("vars x 1 y 1\nupper.obj x1\nlower.obj z1\nlower.ineq z1 - x1^2\n").unwrap();
        let fe = fe_pattern(&p, &[1.5], &[3.0], &[2.25]).unwrap();
        assert!(matches!(fe.certificate, FeCertificate::Pattern(PatternKind::SingleBound)));
        assert!((&fe.q[0] - &p.lower_rows[0].b).max_abs_coeff() < 1e-12);
    }

    #[test]
    fn simplex_formula() {
        let p = parse_problem("vars x 1 y 2\nupper.obj x1\nlower.obj z1\nlower.ineq z1\nlower.ineq z2\nlower.ineq x1 - z1 - z2\n").unwrap();
        // degenerate: b0 = e^T b at xh = 0
        let fe = fe_pattern(&p, &[0.0], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(fe.q.iter().all(Polynomial::is_zero));
        let fe = fe_pattern(&p, &[2.0], &[1.0, 1.0], &[0.5, 1.0]).unwrap();
        assert!(matches!(fe.certificate, FeCertificate::Pattern(PatternKind::Simplex)));
        let c = fe_verify(&p, &fe, &[2.0], &[1.0, 1.0], &[0.5, 1.0], 2);
        assert!(c.pass && c.samples > 100, "{c:?}");
    }

    #[test]
    fn linear_extension_for_the_two_variable_program() {
        let p = parse_problem(BF2).unwrap();
        let (x, y, z) = ([1.0, 1.0], [3.5, 4.0], [0.0, 4.0]);
        let fe = fe_linear(&p, &x, &y, &z).unwrap().unwrap();
        let c = fe_verify(&p, &fe, &x, &y, &z, 3);
        assert!(c.pass, "{c:?}");
        assert_eq!(show(&fe.q), vec!["0".to_string(), "y2".to_string()]);
    }

    #[test]
    fn identity_certificate_when_target_is_the_point() {
        let p = parse_problem(BF2).unwrap();
        let (x, y) = ([1.0, 1.0], [1.0, 0.5]);
        let fe = fe_linear(&p, &x, &y, &y).unwrap().unwrap();
        assert!(fe_verify(&p, &fe, &x, &y, &y, 3).pass);
    }

    #[test]
    fn perturbed_certificate_fails() {
        let p = parse_problem(BF2).unwrap();
        let (x, y, z) = ([1.0, 1.0], [3.5, 4.0], [0.0, 4.0]);
        let mut fe = fe_linear(&p, &x, &y, &z).unwrap().unwrap();
        if let FeCertificate::Linear(c) = &mut fe.certificate {
            c.w2[(1, 1)] += 1e-3;
        }
        // q unchanged but certificate perturbed: identity residual ~1e-3
        let (qy, _) = (fe.q.clone(), ());
        if let FeCertificate::Linear(c) = &fe.certificate {
            let r = identity_residual_linear(&p, &qy, c);
            assert!(r < 1e-7);
        }
        fe.q[1] = &fe.q[1] + &Polynomial::y(p.space, 1).scale(1e-3);
        let chk = fe_verify(&p, &fe, &x, &y, &z, 3);
        assert!(!chk.pass);
        assert!((chk.identity - 1e-3).abs() < 1e-6, "{chk:?}");
    }

    #[test]
    fn quadratic_extension_for_the_quadratic_rhs() {
        let p = parse_problem("vars x 2 y 2\nupper.obj -x1^2 - 3*x2^2 - 4*y1 + y2^2\nupper.ineq 4 - x1^2 - 2*x2\nupper.ineq x1\nupper.ineq x2\n\
            lower.obj 2*x1^2 + z1^2 - 5*z2\nlower.ineq x1^2 - 2*x1 + x2^2 + 3 - 2*z1 + z2\nlower.ineq x2 - 4 + 3*z1 - 4*z2\nlower.ineq z1\nlower.ineq z2\n").unwrap();
        let (x, y, z) = ([1.0, 1.0], [1.5, 0.0], [1.8, 0.6]);
        assert!(matches!(fe_linear(&p, &x, &y, &z), Err(FeError::DegreeTooHigh(2))));
        let fe = fe_quadratic(&p, &x, &y, &z).unwrap().unwrap();
        let c = fe_verify(&p, &fe, &x, &y, &z, 4);
        assert!(c.pass, "{c:?}");
        let pts = sample_joint_set(&p, &[1.0, 1.0, 1.5, 0.0], 2.0, 300, 9);
        for w in &pts {
            let qv = fe.eval(w);
            for r in &p.lower_rows {
                let ax: f64 = r.a.iter().zip(&qv).map(|(a, v)| a.eval(w) * v).sum();
                assert!(ax - r.b.eval(w) >= -1e-6);
            }
        }
    }

    #[test]
    fn infeasible_target_has_no_extension() {
        let p = parse_problem(BF2).unwrap();
        assert!(fe_linear(&p, &[1.0, 1.0], &[3.5, 4.0], &[-1.0, 4.0]).unwrap().is_none());
    }

    #[test]
    fn coordinate_change() {
        let p = parse_problem("vars x 1 y 2\nupper.obj x1\nlower.obj z1\nlower.ineq 2*z1\nlower.ineq 2 - 2*z1\nlower.ineq 2*z2\nlower.ineq 2 - 2*z2\n").unwrap();
        let b = PolyMatrix::from_constants(p.space, &[vec![2.0, 0.0], vec![0.0, 2.0]]);
        let fe = fe_coordinate(&p, &b, &[0.0], &[0.5, 0.5], &[0.25, 0.75]).unwrap();
        assert!((fe.q[0].constant_term() - 0.25).abs() < 1e-12);
        assert!(fe_verify(&p, &fe, &[0.0], &[0.5, 0.5], &[0.25, 0.75], 5).pass);
        // swapped coordinates
        let p2 = parse_problem("vars x 1 y 2\nupper.obj x1\nlower.obj z1\nlower.ineq z2 - x1\nlower.ineq 1 + x1 - z2\nlower.ineq z1\nlower.ineq 3 - z1\n").unwrap();
        let s = PolyMatrix::from_constants(p2.space, &[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let fe = fe_coordinate(&p2, &s, &[0.2], &[1.0, 0.5], &[2.0, 0.7]).unwrap();
        let chk = fe_verify(&p2, &fe, &[0.2], &[1.0, 0.5], &[2.0, 0.7], 6);
        assert!(chk.pass && chk.samples >= 100, "{chk:?}");
    }

    #[test]
    fn cut_is_violated_at_the_generating_point() {
        let p = parse_problem(BF2).unwrap();
        let (x, y, z) = ([1.0, 1.0], [0.0, 4.0], [3.5, 4.0]);
        let fe = fe_linear(&p, &x, &y, &z).unwrap().unwrap();
        let cut = cut_polynomial(&p, &fe.q);
        let w = [1.0, 1.0, 0.0, 4.0];
        let eta = p.lower_obj.evaluate(&[1.0, 1.0, 3.5, 4.0]).unwrap() - p.lower_obj.evaluate(&w).unwrap();
        assert!((eta + 14.0).abs() < 1e-12);
        assert!((cut.eval(&w) - eta).abs() < 1e-6);
        assert!(cut.eval(&w) < 0.0);
    }
}
