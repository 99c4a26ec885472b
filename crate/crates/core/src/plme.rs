//! Partial multiplier expressions in Gram form and the branch systems built
//! from them.

use std::fmt;

use serde::Serialize;

use crate::model::{BilevelProblem, RowKind};
use crate::poly::{PolyError, PolyMatrix, Polynomial, VarSpace};

/// Denominator-cleared multiplier expression for one support `J`:
/// `lambda_J = phi / d` with `d = det(A_J A_J^T) * Q^2` (`Q` the lower
/// objective denominator, 1 for polynomial objectives).
#[derive(Debug, Clone)]
pub struct Plme {
    /// Row positions (0-based), sorted.
    pub support: Vec<usize>,
    pub phi: Vec<Polynomial>,
    pub d: Polynomial,
    /// `det(A_J A_J^T)`.
    pub gram_det: Polynomial,
    /// Gradient of the lower objective with the denominator cleared:
    /// `Q grad N - N grad Q`, or `grad f` for polynomial objectives.
    pub cleared_grad: Vec<Polynomial>,
}

pub fn build_plme(p: &BilevelProblem, support: &[usize]) -> Result<Plme, PolyError> {
    let aj = p.a_sub(support);
    let gram = aj.mul(&aj.transpose())?;
    let (adj, gram_det) = gram.adjugate_det()?;
    let f = &p.lower_obj;
    let lower: Vec<usize> = (0..p.p()).map(|j| p.space.lower_index(j)).collect();
    let (cleared_grad, den_sq) = if f.is_polynomial() {
        let num = f.as_polynomial().expect("polynomial objective");
        let g = lower.iter().map(|&v| num.differentiate(v)).collect::<Result<Vec<_>, _>>()?;
        (g, Polynomial::constant(p.space, 1.0))
    } else {
        let (n, q) = (f.num(), f.den());
        let mut g = Vec::with_capacity(lower.len());
        for &v in &lower {
            let dn = n.differentiate(v)?;
            let dq = q.differentiate(v)?;
            g.push(&(q * &dn) - &(n * &dq));
        }
        (g, q * q)
    };
    let ajg = aj.mul_vec(&cleared_grad);
    let phi = adj.mul_vec(&ajg);
    let d = &gram_det * &den_sq;
    Ok(Plme { support: support.to_vec(), phi, d, gram_det, cleared_grad })
}

impl Plme {
    /// `det(G) * cleared_grad - A_J^T phi`, which equals `d * grad f - A_J^T phi`.
    pub fn stationarity(&self, p: &BilevelProblem) -> Vec<Polynomial> {
        let aj = p.a_sub(&self.support);
        let at = aj.transpose();
        let atphi = at.mul_vec(&self.phi);
        self.cleared_grad
            .iter()
            .zip(&atphi)
            .map(|(g, a)| {
                let dg = &self.gram_det * g;
                let scale = dg.max_abs_coeff().max(a.max_abs_coeff());
                (&dg - a).chop(1e-12 * scale)
            })
            .collect()
    }

    /// Multiplier values `phi / d` at a point (`None` where `d` vanishes).
    pub fn lambda_at(&self, point: &[f64]) -> Option<Vec<f64>> {
        let d = self.d.eval(point);
        if d.abs() < 1e-14 {
            return None;
        }
        Some(self.phi.iter().map(|f| f.eval(point) / d).collect())
    }
}

/// Origin of a constraint in a branch system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Upper,
    Lower,
    Stationarity,
    Complementarity,
    Sign,
    Cut,
    Ball,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tag::Upper => "upper",
            Tag::Lower => "lower",
            Tag::Stationarity => "stationarity",
            Tag::Complementarity => "complementarity",
            Tag::Sign => "sign",
            Tag::Cut => "cut",
            Tag::Ball => "ball",
        };
        f.write_str(s)
    }
}

/// `radius^2 - |w - center|^2 >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn origin(dim: usize, radius: f64) -> Self {
        Self { center: vec![0.0; dim], radius }
    }

    pub fn polynomial(&self, space: VarSpace) -> Polynomial {
        let mut acc = Polynomial::constant(space, self.radius * self.radius);
        for (i, &c) in self.center.iter().enumerate() {
            let d = &Polynomial::var(space, i) - &Polynomial::constant(space, c);
            acc = &acc - &(&d * &d);
        }
        acc
    }
}

/// Polynomial system `eqs = 0`, `ineqs >= 0` describing a branch piece
/// intersected with the joint feasible set.
#[derive(Debug, Clone)]
pub struct BranchSystem {
    pub space: VarSpace,
    pub eqs: Vec<(Polynomial, Tag)>,
    pub ineqs: Vec<(Polynomial, Tag)>,
}

impl BranchSystem {
    pub fn max_violation(&self, point: &[f64]) -> f64 {
        let e = self.eqs.iter().map(|(h, _)| h.eval(point).abs());
        let i = self.ineqs.iter().map(|(g, _)| (-g.eval(point)).max(0.0));
        e.chain(i).fold(0.0, f64::max)
    }

    /// Violation with every constraint scaled to unit largest coefficient.
    pub fn scaled_violation(&self, point: &[f64]) -> f64 {
        let e = self.eqs.iter().map(|(h, _)| h.eval(point).abs() / h.max_abs_coeff().max(1e-300));
        let i = self.ineqs.iter().map(|(g, _)| (-g.eval(point)).max(0.0) / g.max_abs_coeff().max(1e-300));
        e.chain(i).fold(0.0, f64::max)
    }

    pub fn count(&self, tag: Tag) -> usize {
        self.eqs.iter().chain(&self.ineqs).filter(|(_, t)| *t == tag).count()
    }

    pub fn max_degree(&self) -> u32 {
        self.eqs.iter().chain(&self.ineqs).map(|(g, _)| g.degree()).max().unwrap_or(0)
    }
}

/// Assemble the branch system for `plme` plus cut polynomials (already
/// denominator-cleared, meaning `>= 0`) and an optional ball.
pub fn build_branch_system(p: &BilevelProblem, plme: &Plme, cuts: &[Polynomial], ball: Option<&Ball>) -> BranchSystem {
    let mut eqs = Vec::new();
    let mut ineqs = Vec::new();
    let keep = |q: Polynomial| !q.is_zero();
    for h in &p.upper_eq {
        eqs.push((h.clone(), Tag::Upper));
    }
    for h in &p.upper_ineq {
        ineqs.push((h.clone(), Tag::Upper));
    }
    for r in &p.lower_rows {
        let g = p.g(r);
        match r.kind {
            RowKind::Eq => eqs.push((g, Tag::Lower)),
            RowKind::Ineq => ineqs.push((g, Tag::Lower)),
        }
    }
    for s in plme.stationarity(p) {
        if keep(s.clone()) {
            eqs.push((s, Tag::Stationarity));
        }
    }
    for (i, &j) in plme.support.iter().enumerate() {
        let row = &p.lower_rows[j];
        if row.kind != RowKind::Ineq {
            continue;
        }
        let phi = &plme.phi[i];
        let prod = (&p.g(row) * phi).pruned(1e-14);
        if keep(prod.clone()) {
            eqs.push((prod, Tag::Complementarity));
        }
        if !phi.is_zero() && phi.constant_value().is_none_or(|c| c < 0.0) {
            ineqs.push((phi.clone(), Tag::Sign));
        }
    }
    for c in cuts {
        ineqs.push((c.clone(), Tag::Cut));
    }
    if let Some(b) = ball {
        ineqs.push((b.polynomial(p.space), Tag::Ball));
    }
    BranchSystem { space: p.space, eqs, ineqs }
}

/// Matrix `A_J(x)` for display purposes.
pub fn support_matrix(p: &BilevelProblem, support: &[usize]) -> PolyMatrix {
    p.a_sub(support)
}
